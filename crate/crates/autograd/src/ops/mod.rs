//! Differentiable operations, implemented as methods on [`crate::Graph`].

pub mod attention;
pub mod conv;
pub mod elementwise;
pub mod linalg;
pub mod norm;
pub mod pool;
pub mod shape;

pub use attention::attention_forward;
pub use conv::{conv3d_backward, conv3d_forward, conv_out_len, ConvSpec};
pub use elementwise::{gelu, gelu_grad};
pub use linalg::bmm_forward;
pub use norm::{softmax_last, BatchNormRefs};
pub use pool::{avg_pool2d_forward, max_pool2d_forward};
