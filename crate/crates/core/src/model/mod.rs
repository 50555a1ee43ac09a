//! The segmentation network: a five-stage encoder–decoder whose stages carry
//! channel supervision units, topped by a detection branch and a
//! location-attention branch.

mod config;
mod init;
mod network;

pub use config::{ModelConfig, SeasonalSetting};
pub use init::{init_parameters, parameter_shapes};
pub use network::{
    argmax_channels, csu_forward, decoder_forward, encoder_forward, head_forward, model_forward, ModelOutput,
};

#[cfg(test)]
mod tests;
