//! Dense `f64` numerics: matrices, kernels, reverse-mode tape, Adam.

mod gradcheck;
mod matrix;
mod ops;
mod optim;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use matrix::{dot, Matrix};
pub use ops::{
    cross_entropy, derive_seed, rrelu, seeded_rng, sigmoid, softmax_rows, xavier_init,
    xavier_init_from, RreluMode, SeededRng, PROB_FLOOR, RRELU_LOWER, RRELU_UPPER,
};
pub use optim::{adam_step, AdamConfig, Param, ParamId, ParamStore};
pub use tape::{Gradients, LinearMap, Tape, Var};

pub(crate) use ops::check_rrelu_bounds;
