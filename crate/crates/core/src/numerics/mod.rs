//! Dense arrays, reverse-mode differentiation, and the Adam optimizer.

mod adam;
mod array;
mod gradcheck;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use array::Array;
pub use gradcheck::{all_coords, grad_check, sample_coords, GradCheckReport, RELATIVE_FLOOR};
pub use params::{init_normal, init_uniform, Gradients, ParamId, ParamSet};
pub use tape::{log_softmax_in_place, sigmoid, softmax_in_place, NodeId, Tape};
