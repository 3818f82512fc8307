//! Dense tensors, a reverse-mode tape, AdamW, the learning-rate schedule and
//! the checkpoint container.

mod checkpoint;
mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, Dtype, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{finite_difference_check, grad_check, GradCheck, GradCheckReport};
pub use graph::{Gradients, Graph, Precision, Var};
pub use optim::{adamw_step, lr_schedule, AdamW, OptimizerState};
pub use params::{ParamStore, Session};
pub use tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;
