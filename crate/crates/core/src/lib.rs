#![cfg_attr(not(feature = "std"), no_std)]
// Guards written as `!(x > 0.0)` are deliberate: unlike `x <= 0.0`, they
// also reject NaN, which must never pass a domain check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Numerical laboratory for a two-compartment stem cell maturation model
//! with a threshold-defined, state-dependent delay.
//!
//! The model tracks a stem cell load `w(t)` and a mature cell concentration
//! `v(t)`:
//!
//! ```text
//! w'(t) = q(v(t)) w(t)
//! v'(t) = j(w_t, v_t) - mu v(t)
//! ```
//!
//! where the recruitment functional `j` releases stem cells that entered
//! maturation one delay `tau` ago, with the delay defined implicitly by a
//! maturity threshold: a cell matures from level `x2` down to `x1` at speed
//! `g` regulated by the mature concentration it sees along the way. As a
//! consequence `tau = tau(v_t)` depends on the recent solution history.
//!
//! Modules, bottom up:
//!
//! * [`segments`]: dense C1 histories on `[-h, 0]` (cubic Hermite knots).
//! * [`ingredients`]: model rate functions, derived geometry, and sampled
//!   hypothesis checks.
//! * [`delay_kernel`]: the threshold crossing solver that turns a history
//!   into a delay and a survival exponent, plus the recruitment functional.
//! * [`integrator`]: method-of-steps RK4 with two-pass correction, dense
//!   output, admissible initial data, and closed-form verifiers.
//! * [`analysis`]: equilibria, regime classification, decay/persistence/
//!   boundedness estimates, and the vanishing-delay comparison.

extern crate alloc;

mod math;

pub mod analysis;
pub mod delay_kernel;
pub mod ingredients;
pub mod integrator;
pub mod segments;
