//! Simulation and stability analysis for nonlinear self-exciting point processes.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod coupling;
pub mod error;
pub mod experiment;
pub mod intensity;
pub mod kernels;
pub mod multitype;
pub mod noise;
pub mod output;
pub mod quad;
pub mod samplers;
pub mod state;
pub mod stats;
pub mod strict;

pub use error::{HawkesError, Result};
pub use intensity::{Envelope, IntensityFn, Modulator, Modulators, Modulus, RateFamily, RateMap};
pub use kernels::{Kernel, KernelFamily, Verdict};
pub use quad::Integral;
pub use state::{EventMark, EventStream, ImpulseState, InitialCondition, Parent};
