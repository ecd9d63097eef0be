// Indexed loops over dense kernels and NaN-rejecting comparisons like
// `!(x > 0.0)` are intentional throughout the numeric code.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Reduced-gradient methods for composite variational inequalities and
//! composite minimization.
//!
//! The library implements a family of extragradient-style schemes built on
//! two sequences: prox centers `v_t` whose distance to the solution set is
//! provably controlled, and step points `x_t` produced by *essential steps*
//! whose reduced gradients cut the center away from the solution set. One
//! universal stepsize
//!
//! ```text
//! a(v, T) = <V_psi(T), v - T> / ||V_psi(T)||_*^2
//! ```
//!
//! drives every outer scheme regardless of the problem class; problem
//! structure enters only through the essential step (projection-type steps
//! of order 0, Newton-type tensor steps of orders 1 and 2).
//!
//! Modules:
//! - [`metric`]: norms, the metric operator `B`, Bregman machinery, power
//!   prox functions, and the proximal gradient operator;
//! - [`sets`]: simple feasible sets with exact projections and support
//!   functions;
//! - [`problems`]: operator and composite-term abstractions plus the
//!   deterministic instance zoo with planted or LP-certified solutions;
//! - [`steps`]: essential-step engines and their step-quality constants;
//! - [`methods`]: primal / dual / projecting outer schemes, the uniformly
//!   monotone linear-rate variant, a switching scheme for gradient norms,
//!   and classical baselines;
//! - [`certify`]: merit functions and computable accuracy certificates;
//! - [`harness`]: reproducible experiment configs, CSV traces, log-log rate
//!   fitting, and the acceptance suite.

pub mod certify;
pub mod harness;
pub mod linalg;
pub mod methods;
pub mod metric;
pub mod problems;
pub mod rng;
pub mod sets;
pub mod steps;
