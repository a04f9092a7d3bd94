//! A compact reverse-mode automatic differentiation engine over dense
//! double-precision tensors.
//!
//! The op set is exactly what the gait pipeline needs: grouped 3-D
//! convolution, pooling, batched matmul, softmax, batch normalization and
//! a handful of elementwise maps. Model code builds a [`Graph`] per forward
//! pass, reading parameters from a [`ParamStore`].

pub mod gemm;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod params;
pub mod tensor;

pub use graph::{BackwardCtx, BackwardFn, Gradients, Graph, Mode, Var};
pub use ops::{BatchNormRefs, ConvSpec};
pub use params::{ArchiveError, ParamEntry, ParamId, ParamKind, ParamStore};
pub use tensor::Tensor;
