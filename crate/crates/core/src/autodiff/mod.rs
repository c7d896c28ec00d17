//! Minimal reverse-mode tensor engine: the layers and optimizer needed by the
//! split networks, generic over `f32` (training) and `f64` (verification).

pub mod conv;
pub mod gradcheck;
pub mod norm;
pub mod optim;
pub mod params;
pub mod real;
pub mod tape;
pub mod tensor;

pub use gradcheck::{GradCheck, GradCheckReport};
pub use norm::BatchNormConfig;
pub use optim::SgdState;
pub use params::{Initializer, ParamId, ParamStore, Parameter, RunningStats, StatsId};
pub use real::Real;
pub use tape::{Gradients, Mode, Tape, Var};
pub use tensor::Tensor;
