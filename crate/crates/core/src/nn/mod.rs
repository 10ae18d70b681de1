//! Tensors, a reverse-mode tape, the network stacks and their tooling.

mod gradcheck;
mod kernels;
mod net;
mod optim;
pub mod rf;
mod spec;
mod tape;
mod tensor;
mod weights;

pub use gradcheck::{grad_check, sample_coords, GradCheckReport, REL_FLOOR};
pub use kernels::{conv_out_len, conv_t_out_len};
pub use net::{
    discriminator_forward, dna_encode, generator_forward, path_forward, residual_block,
    stack_forward, Bound,
};
pub use optim::RmsProp;
pub use spec::{LayerKind, LayerSpec, NetworkSpec, StackSpec};
pub use tape::{Gradients, Graph, Resample, Var};
pub use tensor::Tensor;
pub use weights::{Params, Weights};
