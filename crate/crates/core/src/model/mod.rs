//! Fused summarization model: configuration, parameters, input assembly,
//! attention with relation masks, and the encoder-decoder network.

pub mod attention;
pub mod config;
pub mod input;
pub mod network;
pub mod params;

pub use attention::{attention_core, fuse_mask, fused_attention, multi_head, BLOCK};
pub use config::{MaskSource, ModelConfig};
pub use input::{build_encoder_input, EncoderInput};
pub use network::{
    build_encoder_mask, decoder_forward, encoder_forward, forward_loss, forward_reference_plain,
    generate, DropoutCtx, LN_EPS,
};
pub use params::{BoundParams, ModelParams};
