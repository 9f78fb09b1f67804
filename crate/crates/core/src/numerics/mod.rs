//! Dense tensors, reverse-mode differentiation and the linear-algebra kernels used
//! by the objectives and the dissimilarity measures.

pub mod gradcheck;
pub mod graph;
pub(crate) mod kernels;
pub mod linalg;
pub mod mlp;
pub mod params;
pub mod tensor;

pub use graph::{ConvGeometry, Gradients, Graph, ParamId, Var};
pub use linalg::{center_and_normalize, compress_rows, singular_values, svd_nuclear_norm};
pub use mlp::{forward_mlp, forward_mlp_graph, Activation, BoundLayer, DenseLayer};
pub use params::{write_atomic, ParamStore};
pub use tensor::Tensor;
