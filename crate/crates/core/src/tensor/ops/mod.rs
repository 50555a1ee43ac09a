//! Layer vocabulary of the network. Each function validates shapes, computes
//! the forward value and, when an input requires a gradient, records its
//! backward rule.

mod activation;
mod combine;
mod conv;
mod linear;
mod pool;
mod upsample;

pub use activation::{activation, log1p, relu, sigmoid, softmax_channels, Activation};
pub use combine::{
    add, broadcast_add_channels, concat_channels, elementwise, mul, normalize_channels, sum,
    Elementwise,
};
pub use conv::{conv2d, Padding};
pub use linear::fully_connected;
pub use pool::{global_avg_pool, pool2d, PoolKind};
pub use upsample::{upsample, Interpolation};
