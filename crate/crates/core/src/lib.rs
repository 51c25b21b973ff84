//! Implicit-explicit timestepping for `u' + A u + B(u) u - C u = f(t)` with
//! `A = A^T > 0`, `B(u)` skew-symmetric, `C = C^T >= 0` and `A - C >= 0`.
//!
//! Each step solves `(I + kA + kB(u_n)) u_{n+1} = (I + kC) u_n + k f_{n+1}`,
//! which does not increase the energy norm `sqrt(u^T u + k u^T C u)` for any
//! timestep when `f = 0`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod operator;
pub mod system;
pub mod energy;
pub mod linsolve;
pub mod stepper;
pub mod discretize;
pub mod csv;
pub mod random;
pub mod textio;
pub mod analysis;

pub use error::{Error, Result};
pub use operator::Operator;
pub use system::{OdeSystem, SkewField, Forcing, StructureReport, validate_structure, rhs_eval};
pub use energy::{EnergyMetric, energy_norm, energy_inner, norm_equivalence_bounds};
