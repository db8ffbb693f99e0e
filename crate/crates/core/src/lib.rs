//! Profile-likelihood K-step maximum likelihood estimation for semiparametric
//! models.
//!
//! The estimator iterates
//!
//! ```text
//! θ⁽ᵏ⁾ = θ⁽ᵏ⁻¹⁾ + Π_n(θ⁽ᵏ⁻¹⁾, t_n)⁻¹ Γ_n(θ⁽ᵏ⁻¹⁾, s_n)
//! ```
//!
//! where `Γ_n` and `Π_n` are forward-difference approximations of the profile
//! score and observed profile information built from nothing but evaluations
//! of `log pl_n(θ)`. Any model exposing its log profile likelihood through
//! [`ProfileEvaluator`] can be plugged in. Two engines are built in:
//!
//! * [`cox::RightCensoredProfile`]: Cox regression with right-censored data,
//!   where the profile likelihood is the partial likelihood in closed form.
//! * [`icm::CurrentStatusProfile`]: Cox regression with current-status data,
//!   where the cumulative hazard is profiled out numerically by the iterative
//!   convex minorant algorithm.
//!
//! Starting points come from [`init`] (lattice search, random search or the
//! profile sampler), step sizes and iteration counts from [`numdiff`] and
//! [`kstep`].
//!
//! The crate is `no_std` and needs only `alloc`. Float math goes through
//! `num_traits::Float` (backed by `libm`); when `std` is linked into the
//! build its inherent methods take precedence, which is why those imports
//! carry `allow(unused_imports)`.

#![no_std]
// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cox;
pub mod data;
mod error;
pub mod icm;
pub mod init;
pub mod kstep;
pub mod normal;
pub mod numdiff;
pub mod optimize;
pub mod profile;

pub use error::{Error, Result};
pub use profile::{ParamBox, ProfileEvaluator};
