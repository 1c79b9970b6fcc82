//! Parameter and multiply-accumulate accounting.
//!
//! One MAC is reported as one FLOP. Layer MACs follow closed forms:
//! convolutions `O·C·k²·Ho·Wo` (no `C` factor for depth-wise), linear layers
//! `tokens·Din·Dout`, and each attention call `2·heads·Nq·Nk·head_dim` for
//! the score and value products. Normalization, softmax, activations, and
//! pooling are not counted.

use std::fmt::{self, Write as _};

use crate::attention::FoveaAttention;
use crate::backbone::{Evit, VariantName};
use crate::nn::{Conv, LayerNorm, Linear, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModuleKind {
    Stem,
    PatchEmbed,
    Cpe,
    Norm,
    Sfa,
    Dfa,
    FfnLinear,
    FfnConv,
    Head,
}

impl ModuleKind {
    pub const ALL: [ModuleKind; 9] = [
        Self::Stem,
        Self::PatchEmbed,
        Self::Cpe,
        Self::Norm,
        Self::Sfa,
        Self::Dfa,
        Self::FfnLinear,
        Self::FfnConv,
        Self::Head,
    ];
}

impl ModuleKind {
    /// Classifies a parameter by its dotted name.
    pub fn of_param(name: &str) -> Option<Self> {
        let has = |part: &str| name.split('.').any(|p| p == part);
        let kind = if name.starts_with("stem.") {
            Self::Stem
        } else if name.starts_with("head.") {
            Self::Head
        } else if has("embed") {
            Self::PatchEmbed
        } else if has("cpe") {
            Self::Cpe
        } else if has("norm1") || has("norm2") {
            Self::Norm
        } else if has("sfa") {
            Self::Sfa
        } else if has("dfa") {
            Self::Dfa
        } else if has("fc1") || has("fc2") {
            Self::FfnLinear
        } else if has("ffn") {
            Self::FfnConv
        } else {
            return None;
        };
        Some(kind)
    }
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stem => "stem",
            Self::PatchEmbed => "patch_embed",
            Self::Cpe => "cpe",
            Self::Norm => "norm",
            Self::Sfa => "sfa",
            Self::Dfa => "dfa",
            Self::FfnLinear => "ffn_linear",
            Self::FfnConv => "ffn_dwconv",
            Self::Head => "head",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub name: String,
    pub module: ModuleKind,
    pub params: usize,
    pub macs: u64,
    /// Parameter-free products (attention scores and value aggregation).
    pub is_matmul: bool,
}

/// Published totals for one reference variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceTotals {
    pub params: f64,
    pub flops: f64,
}

impl ReferenceTotals {
    pub fn for_variant(v: VariantName) -> Self {
        let (params, flops) = match v {
            VariantName::Tiny => (12.13e6, 1.91e9),
            VariantName::Small => (23.7e6, 3.39e9),
            VariantName::Base => (42.55e6, 6.35e9),
            VariantName::Large => (60.07e6, 9.44e9),
        };
        Self { params, flops }
    }
}

/// Relative deviation `|ours − reference| / reference`.
pub fn relative_deviation(ours: f64, reference: f64) -> f64 {
    (ours - reference).abs() / reference
}

#[derive(Debug, Clone)]
pub struct CostReport {
    pub model: String,
    /// MACs are only meaningful when an input size was given.
    pub input: Option<(usize, usize)>,
    pub rows: Vec<CostRow>,
    pub reference: Option<ReferenceTotals>,
}

struct Walker<'a> {
    store: &'a ParamStore,
    rows: Vec<CostRow>,
    with_macs: bool,
}

impl Walker<'_> {
    fn numel(&self, ids: &[ParamId]) -> usize {
        ids.iter().map(|&id| self.store.get(id).numel()).sum()
    }

    fn layer_name(&self, id: ParamId) -> String {
        let full = self.store.name(id);
        full.rsplit_once('.').map_or(full, |(prefix, _)| prefix).to_string()
    }

    fn push(&mut self, name: String, module: ModuleKind, params: usize, macs: u64, is_matmul: bool) {
        let macs = if self.with_macs { macs } else { 0 };
        self.rows.push(CostRow {
            name,
            module,
            params,
            macs,
            is_matmul,
        });
    }

    fn conv(&mut self, conv: &Conv, module: ModuleKind, out: (usize, usize)) {
        let params = self.numel(&[conv.weight, conv.bias]);
        self.push(self.layer_name(conv.weight), module, params, conv.macs(out.0, out.1), false);
    }

    fn linear(&mut self, lin: &Linear, module: ModuleKind, tokens: usize) {
        let params = self.numel(&[lin.weight, lin.bias]);
        self.push(self.layer_name(lin.weight), module, params, lin.macs(tokens), false);
    }

    fn norm(&mut self, norm: &LayerNorm) {
        let params = self.numel(&[norm.gamma, norm.beta]);
        self.push(self.layer_name(norm.gamma), ModuleKind::Norm, params, 0, false);
    }

    fn attention(&mut self, attn: &FoveaAttention, module: ModuleKind, grid: (usize, usize)) {
        let n = grid.0 * grid.1;
        let key_grid = attn.key_grid(grid);
        let nk = key_grid.0 * key_grid.1;
        self.linear(&attn.q, module, n);
        if let Some(reduce) = &attn.reduce {
            self.conv(reduce, module, key_grid);
        }
        self.linear(&attn.k, module, nk);
        self.linear(&attn.v, module, nk);
        let prefix = self.layer_name(attn.q.weight);
        let prefix = prefix.rsplit_once('.').map_or(prefix.as_str(), |(p, _)| p).to_string();
        let products = 2 * attn.heads * n * nk * attn.head_dim();
        self.push(format!("{prefix}.products"), module, 0, products as u64, true);
        self.linear(&attn.out, module, n);
    }
}

fn walk(model: &Evit, input: Option<(usize, usize)>) -> Vec<CostRow> {
    let (h, w) = input.unwrap_or((224, 224));
    let mut wk = Walker {
        store: model.params(),
        rows: Vec::new(),
        with_macs: input.is_some(),
    };
    let mut grid = (h / 2, w / 2);
    for conv in &model.stem.convs {
        wk.conv(conv, ModuleKind::Stem, grid);
    }
    for stage in &model.stages {
        grid = (grid.0 / 2, grid.1 / 2);
        wk.conv(&stage.embed, ModuleKind::PatchEmbed, grid);
        let tokens = grid.0 * grid.1;
        for block in &stage.blocks {
            wk.conv(&block.cpe, ModuleKind::Cpe, grid);
            wk.norm(&block.norm1);
            wk.attention(&block.attn.sfa, ModuleKind::Sfa, grid);
            wk.attention(&block.attn.dfa, ModuleKind::Dfa, grid);
            wk.norm(&block.norm2);
            wk.linear(&block.ffn.fc1, ModuleKind::FfnLinear, tokens);
            for conv in block.ffn.hidden_convs() {
                wk.conv(conv, ModuleKind::FfnConv, grid);
            }
            wk.linear(&block.ffn.fc2, ModuleKind::FfnLinear, tokens);
        }
    }
    wk.conv(&model.head.proj, ModuleKind::Head, grid);
    wk.linear(&model.head.fc, ModuleKind::Head, 1);
    wk.rows
}

/// Exact parameter counts per layer; MAC columns are zero.
pub fn count_params(model: &Evit) -> CostReport {
    CostReport {
        model: model.spec.name.clone(),
        input: None,
        rows: walk(model, None),
        reference: model.spec.variant().map(ReferenceTotals::for_variant),
    }
}

/// Parameter counts plus analytic MACs for one `h×w` image.
pub fn count_macs(model: &Evit, input: (usize, usize)) -> crate::Result<CostReport> {
    model.spec.validate_input(input)?;
    Ok(CostReport {
        model: model.spec.name.clone(),
        input: Some(input),
        rows: walk(model, Some(input)),
        reference: model.spec.variant().map(ReferenceTotals::for_variant),
    })
}

fn millions(n: f64) -> String {
    format!("{:.2}M", n / 1e6)
}

fn giga(n: f64) -> String {
    format!("{:.3}G", n / 1e9)
}

impl CostReport {
    pub fn total_params(&self) -> usize {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }

    pub fn macs_without_head(&self) -> u64 {
        self.rows.iter().filter(|r| r.module != ModuleKind::Head).map(|r| r.macs).sum()
    }

    /// MACs of layers that own weights, i.e. without the attention products.
    pub fn weight_layer_macs(&self) -> u64 {
        self.rows.iter().filter(|r| !r.is_matmul).map(|r| r.macs).sum()
    }

    /// `(module, params, macs)` for every module kind, in a fixed order.
    pub fn by_module(&self) -> Vec<(ModuleKind, usize, u64)> {
        ModuleKind::ALL
            .iter()
            .map(|&m| {
                let rows = self.rows.iter().filter(|r| r.module == m);
                let (p, f) = rows.fold((0, 0), |(p, f), r| (p + r.params, f + r.macs));
                (m, p, f)
            })
            .collect()
    }

    pub fn param_deviation(&self) -> Option<f64> {
        self.reference.map(|r| relative_deviation(self.total_params() as f64, r.params))
    }

    pub fn mac_deviation(&self) -> Option<f64> {
        match (self.reference, self.input) {
            (Some(r), Some(_)) => Some(relative_deviation(self.total_macs() as f64, r.flops)),
            _ => None,
        }
    }

    fn header(&self) -> String {
        let input = self.input.map_or("n/a".to_string(), |(h, w)| format!("{h}x{w}"));
        format!("# model {} | input {input} | convention: 1 MAC reported as 1 FLOP\n", self.model)
    }

    /// Totals, reference columns, per-module contributions, and notes.
    pub fn render_summary(&self) -> String {
        let mut s = self.header();
        let p = self.total_params() as f64;
        let _ = writeln!(s, "{:<28} {:>14} {:>14} {:>10}", "quantity", "ours", "reference", "deviation");
        let (rp, rdev) = match (self.reference, self.param_deviation()) {
            (Some(r), Some(d)) => (millions(r.params), format!("{:.2}%", 100.0 * d)),
            _ => ("-".into(), "-".into()),
        };
        let _ = writeln!(s, "{:<28} {:>14} {:>14} {:>10}", "params", millions(p), rp, rdev);
        if self.input.is_some() {
            let (rf, fdev) = match (self.reference, self.mac_deviation()) {
                (Some(r), Some(d)) => (giga(r.flops), format!("{:.2}%", 100.0 * d)),
                _ => ("-".into(), "-".into()),
            };
            let _ = writeln!(s, "{:<28} {:>14} {:>14} {:>10}", "flops (all MACs)", giga(self.total_macs() as f64), rf, fdev);
            let alt = |v: u64| match self.reference {
                Some(r) => format!("{:.2}%", 100.0 * relative_deviation(v as f64, r.flops)),
                None => "-".into(),
            };
            let nh = self.macs_without_head();
            let _ = writeln!(s, "{:<28} {:>14} {:>14} {:>10}", "flops without head", giga(nh as f64), "", alt(nh));
            let wl = self.weight_layer_macs();
            let _ = writeln!(s, "{:<28} {:>14} {:>14} {:>10}", "flops of weight layers only", giga(wl as f64), "", alt(wl));
        }
        let with_macs = self.input.is_some();
        let _ = write!(s, "\n{:<14} {:>12} {:>8}", "module", "params", "share");
        if with_macs {
            let _ = write!(s, " {:>14} {:>8}", "macs", "share");
        }
        s.push('\n');
        let (tp, tm) = (self.total_params().max(1) as f64, self.total_macs().max(1) as f64);
        for (m, params, macs) in self.by_module() {
            let _ = write!(s, "{:<14} {:>12} {:>7.2}%", m.to_string(), params, 100.0 * params as f64 / tp);
            if with_macs {
                let _ = write!(s, " {:>14} {:>7.2}%", macs, 100.0 * macs as f64 / tm);
            }
            s.push('\n');
        }
        let gaps: Vec<_> = self.by_module().into_iter().filter(|(m, ..)| matches!(m, ModuleKind::Cpe | ModuleKind::FfnConv)).collect();
        s.push_str("\nnotes:\n");
        for (m, params, macs) in gaps {
            let what = match m {
                ModuleKind::Cpe => "cpe kernel size is an interpretation (3x3 depth-wise)",
                _ => "feedforward hidden-stage topology is an interpretation",
            };
            if with_macs {
                let _ = writeln!(s, "  * {what}: {params} params, {macs} MACs");
            } else {
                let _ = writeln!(s, "  * {what}: {params} params");
            }
        }
        s.push_str("  * attention K/V reduction is a depth-wise conv with kernel = stride = reduction\n");
        s
    }

    /// Column-aligned per-layer table followed by the summary.
    pub fn render_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$} {:<12} {:>12} {:>14}", "layer", "module", "params", "macs");
        for r in &self.rows {
            let _ = writeln!(s, "{:<width$} {:<12} {:>12} {:>14}", r.name, r.module.to_string(), r.params, r.macs);
        }
        let _ = writeln!(s, "{:<width$} {:<12} {:>12} {:>14}\n", "total", "", self.total_params(), self.total_macs());
        s.push_str(&self.render_summary());
        s
    }

    /// `layer,module,params,macs` with one row per layer and a final total.
    pub fn render_csv(&self) -> String {
        let mut s = String::from("layer,module,params,macs\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.name, r.module, r.params, r.macs);
        }
        let _ = writeln!(s, "total,,{},{}", self.total_params(), self.total_macs());
        s
    }
}
