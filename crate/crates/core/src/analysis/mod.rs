//! Cost accounting and attention-map export.

mod attnmap;
mod cost;

pub use attnmap::{attention_maps, normalize_min_max, write_attention_maps, AttentionMap};
pub use cost::{count_macs, count_params, relative_deviation, CostReport, CostRow, ModuleKind, ReferenceTotals};
