//! Numerical plumbing shared by the attention block, the model and the tests.

mod adam;
pub mod checkpoint;
mod gradcheck;
pub mod linalg;
mod params;
mod reduce;
mod rng;
mod softmax;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use gradcheck::{finite_diff_check, relative_error, GradcheckReport, SliceError};
pub use params::{Init, ParamSlice, ParamStore, ParamStoreBuilder, Slot};
pub use reduce::{tree_sum, tree_sum_scalars};
pub use rng::{derive_seed, rng_for};
pub use softmax::{entropy, normalized_entropy, softmax, softmax_backward, softmax_in_place};
