//! Named parameters, initialization, and the primitive layers the blocks
//! are assembled from.

mod init;
mod layers;
mod store;

pub use init::Initializer;
pub use layers::{map_to_tokens, tokens_to_map, Conv, ConvKind, ForwardCtx, LayerNorm, Linear};
pub use store::{ParamId, ParamStore};
