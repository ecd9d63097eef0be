//! Merit functions and computable accuracy certificates.
//!
//! The merit of a candidate `xbar` is
//! `mu_psi(xbar) = psi(xbar) + max_x { <V(x), xbar - x> - psi(x) }` over the
//! domain; it is nonnegative and vanishes exactly at weak solutions. For
//! affine operators the inner maximization is a concave problem: exact via
//! support functions when the symmetric part vanishes (bilinear games reduce
//! to best responses), and a linearly convergent projected ascent when the
//! symmetric part is positive definite. Anything else gets a sampled lower
//! bound, flagged as inexact.
//!
//! Certificates are weighted-max quantities accumulated along a run:
//!
//! ```text
//! Delta_t = (1/A_t) max_x sum_i a_i [ <g_i, x_i - x> (+ psi(x_i) - psi(x)) ]
//! ```
//!
//! with `g_i` the reduced gradients (minimization, primal), the operator
//! values (dual minimization certificate), or the operator values with the
//! composite correction (VI certificate). Each upper-bounds the corresponding
//! gap of the weighted-average point, which is what makes verified stopping
//! possible.

use thiserror::Error;

use crate::linalg::{dot, norm2, sub};
use crate::metric::{Metric, MetricError};
use crate::problems::{CompositeTerm, ProblemInstance};
use crate::rng::SplitMix64;
use crate::sets::SimpleSet;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("merit is not computable: unbounded domain without a potential")]
    UnsupportedMode,
    #[error("certificate requires a radius bound R0")]
    MissingRadius,
    #[error("certificate requires at least one accumulated step")]
    EmptyAccumulator,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// How to evaluate the merit maximization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeritMode {
    /// Exact value (skew affine operators over simple sets: best responses).
    ClosedForm,
    /// Inner concave maximization (affine operators with PSD symmetric part).
    InnerSolve,
    /// Sampled lower bound, flagged inexact.
    SampleLowerBound,
    /// Strongest available of the above.
    Auto,
}

/// A merit value together with its provenance.
#[derive(Debug, Clone, Copy)]
pub struct MeritValue {
    pub value: f64,
    /// True when the maximization was solved to tolerance; false for
    /// sampled lower bounds.
    pub exact: bool,
}

/// Composite merit `mu_psi(xbar)`.
pub fn merit(
    xbar: &[f64],
    instance: &ProblemInstance,
    mode: MeritMode,
) -> Result<MeritValue, CertifyError> {
    let psi_bar = instance.psi.eval(xbar);
    if !psi_bar.is_finite() {
        return Err(CertifyError::UnsupportedMode);
    }
    let domain = instance.psi.domain();
    let affine = affine_parts(instance, xbar);
    let chosen = match mode {
        MeritMode::Auto => match &affine {
            Some(parts) if parts.sym_norm == 0.0 => MeritMode::ClosedForm,
            Some(_) => MeritMode::InnerSolve,
            None => MeritMode::SampleLowerBound,
        },
        m => m,
    };
    match chosen {
        MeritMode::ClosedForm => {
            let parts = affine.ok_or(CertifyError::UnsupportedMode)?;
            if parts.sym_norm != 0.0 || !matches!(instance.psi, CompositeTerm::Indicator(_)) {
                return Err(CertifyError::UnsupportedMode);
            }
            // phi(x) = const + <lin, x> is linear: support function of Q.
            let sup = domain.support(&parts.lin).ok_or(CertifyError::UnsupportedMode)?;
            Ok(MeritValue { value: (psi_bar + parts.constant + sup).max(0.0), exact: true })
        }
        MeritMode::InnerSolve => {
            let parts = affine.ok_or(CertifyError::UnsupportedMode)?;
            match &instance.psi {
                CompositeTerm::Indicator(_) => {
                    let (value, exact) = maximize_concave_quadratic(&parts, &domain, instance);
                    Ok(MeritValue { value: (psi_bar + value).max(0.0), exact })
                }
                CompositeTerm::Zero { .. } => {
                    // Potential case on the whole space: the concave
                    // maximization is unconstrained, finite only when the
                    // symmetric part is positive definite.
                    let chol = crate::linalg::Cholesky::new(&parts.sym)
                        .ok_or(CertifyError::UnsupportedMode)?;
                    let half = chol.solve(&parts.lin);
                    let value = parts.constant + 0.25 * dot(&parts.lin, &half);
                    Ok(MeritValue { value: value.max(0.0), exact: true })
                }
                CompositeTerm::General { .. } => Err(CertifyError::UnsupportedMode),
            }
        }
        MeritMode::SampleLowerBound => {
            Ok(MeritValue { value: sampled_merit_lower_bound(xbar, instance), exact: false })
        }
        MeritMode::Auto => unreachable!(),
    }
}

struct AffineMeritParts {
    /// Constant term `<q, xbar>`.
    constant: f64,
    /// Linear coefficient `M' xbar - q`.
    lin: Vec<f64>,
    /// Symmetric part of `M` (the quadratic term is `-x' M_sym x`).
    sym: crate::linalg::DenseMatrix,
    sym_norm: f64,
}

/// Decomposes `phi(x) = <V(x), xbar - x>` for affine `V(x) = Mx + q` into
/// `<q, xbar> + <M' xbar - q, x> - x' M_sym x`; concave whenever `V` is
/// monotone.
fn affine_parts(instance: &ProblemInstance, xbar: &[f64]) -> Option<AffineMeritParts> {
    let dim = instance.dim();
    let probe_zero = instance.operator.eval(&vec![0.0; dim]);
    let jac = instance.operator.jacobian(&vec![0.0; dim]);
    // Affine means the second derivative vanishes identically; trust the
    // operator's exact zero for that, probing at two base points.
    let mut rng = SplitMix64::new(0xaff1);
    for base in [vec![0.5; dim], instance.default_start.clone()] {
        let h1 = rng.gaussian_vec(dim);
        let h2 = rng.gaussian_vec(dim);
        let d2 = instance.operator.second_directional(&base, &h1, &h2);
        if d2.iter().any(|v| *v != 0.0) {
            return None;
        }
    }
    let q = probe_zero;
    let mut lin = jac.matvec_t(xbar);
    for i in 0..dim {
        lin[i] -= q[i];
    }
    let mut sym = crate::linalg::DenseMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            sym.set(i, j, 0.5 * (jac.get(i, j) + jac.get(j, i)));
        }
    }
    // Clean exact-zero symmetric parts (skew operators).
    let sym_norm = if sym.data.iter().all(|v| v.abs() < 1e-14) {
        0.0
    } else {
        sym.spectral_norm()
    };
    Some(AffineMeritParts { constant: dot(&q, xbar), lin, sym, sym_norm })
}

/// Projected gradient ascent for `max_x <lin, x> - x' S x` over a simple set;
/// linear rate when `S` is positive definite.
fn maximize_concave_quadratic(
    parts: &AffineMeritParts,
    domain: &SimpleSet,
    instance: &ProblemInstance,
) -> (f64, bool) {
    let lips = (2.0 * parts.sym_norm).max(1e-12);
    let value = |x: &[f64]| -> f64 {
        parts.constant + dot(&parts.lin, x) - dot(&parts.sym.matvec(x), x)
    };
    let mut x = domain.project(&instance.default_start);
    let mut converged = false;
    for _ in 0..200_000 {
        let mut g = parts.sym.matvec(&x);
        for i in 0..g.len() {
            g[i] = parts.lin[i] - 2.0 * g[i];
        }
        let mut y = x.clone();
        for i in 0..y.len() {
            y[i] += g[i] / lips;
        }
        let next = domain.project(&y);
        let moved = norm2(&sub(&next, &x));
        x = next;
        if moved <= 1e-14 * (1.0 + norm2(&x)) {
            converged = true;
            break;
        }
    }
    (value(&x), converged)
}

/// Deterministic sampled lower bound on the merit; includes the best-response
/// vertex of the linearization and random feasible points.
fn sampled_merit_lower_bound(xbar: &[f64], instance: &ProblemInstance) -> f64 {
    let domain = instance.psi.domain();
    let psi_bar = instance.psi.eval(xbar);
    let mut rng = SplitMix64::new(0x300d);
    let eval_at = |x: &[f64]| -> f64 {
        dot(&instance.operator.eval(x), &sub(xbar, x)) - instance.psi.eval(x)
    };
    let mut best = eval_at(xbar);
    if let Some(sol) = &instance.known_solution {
        best = best.max(eval_at(sol));
    }
    // Linearization vertex when the domain is bounded.
    if !matches!(domain, SimpleSet::WholeSpace { .. }) {
        let v_bar = instance.operator.eval(xbar);
        let vertex = domain.argmax_linear(&scale_neg(&v_bar));
        best = best.max(eval_at(&vertex));
        for _ in 0..500 {
            let x = domain.sample(&mut rng);
            best = best.max(eval_at(&x));
        }
    }
    (psi_bar + best).max(0.0)
}

fn scale_neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

/// Which weighted-max certificate is being accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateVariant {
    /// Minimization, reduced gradients: bounds `F_tilde_t - F*` within the
    /// ball `||x - x0|| <= R0`.
    MinimizationPrimal,
    /// Minimization, raw gradients plus composite corrections (the dual
    /// scheme's certificate); same ball.
    MinimizationDual,
    /// Composite VI certificate over the (bounded) domain; bounds the merit
    /// of the weighted average.
    Vi,
}

/// Running sums defining a certificate along a trace.
#[derive(Debug, Clone)]
pub struct CertificateAccumulator {
    pub variant: CertificateVariant,
    x0: Vec<f64>,
    r0: Option<f64>,
    sum_ag: Vec<f64>,
    sum_agx: f64,
    sum_apsi: f64,
    a_total: f64,
}

impl CertificateAccumulator {
    pub fn new(variant: CertificateVariant, x0: Vec<f64>, r0: Option<f64>) -> Self {
        let dim = x0.len();
        Self {
            variant,
            x0,
            r0,
            sum_ag: vec![0.0; dim],
            sum_agx: 0.0,
            sum_apsi: 0.0,
            a_total: 0.0,
        }
    }

    /// Accumulates one step with weight `a`, certificate gradient `g`
    /// (reduced or raw per variant), point `x`, and `psi(x)`.
    pub fn push(&mut self, a: f64, g: &[f64], x: &[f64], psi_x: f64) {
        for i in 0..self.sum_ag.len() {
            self.sum_ag[i] += a * g[i];
        }
        self.sum_agx += a * dot(g, x);
        self.sum_apsi += a * psi_x;
        self.a_total += a;
    }

    pub fn total_weight(&self) -> f64 {
        self.a_total
    }

    /// The certificate value `Delta_t`.
    pub fn value(&self, instance: &ProblemInstance) -> Result<f64, CertifyError> {
        if self.a_total <= 0.0 {
            return Err(CertifyError::EmptyAccumulator);
        }
        let s = scale_neg(&self.sum_ag);
        let (max_term, psi_terms) = match self.variant {
            CertificateVariant::MinimizationPrimal => {
                let r0 = self.r0.ok_or(CertifyError::MissingRadius)?;
                let m = support_over_ball_intersection(
                    &instance.psi.domain(),
                    &s,
                    &self.x0,
                    r0,
                    &instance.metric,
                )?;
                (m, 0.0)
            }
            CertificateVariant::MinimizationDual => {
                let r0 = self.r0.ok_or(CertifyError::MissingRadius)?;
                // max { <s, x> - A_t psi(x) } over the ball intersection;
                // exact for indicators (psi = 0 on the domain).
                match &instance.psi {
                    CompositeTerm::Zero { .. } | CompositeTerm::Indicator(_) => {
                        let m = support_over_ball_intersection(
                            &instance.psi.domain(),
                            &s,
                            &self.x0,
                            r0,
                            &instance.metric,
                        )?;
                        (m, self.sum_apsi)
                    }
                    CompositeTerm::General { .. } => {
                        // A_t max { <s/A_t, x> - psi(x) } ignoring the ball;
                        // valid as an upper bound only if the conjugate is
                        // finite, otherwise unsupported.
                        let scaled: Vec<f64> = s.iter().map(|v| v / self.a_total).collect();
                        let c = instance
                            .psi
                            .support_query(&scaled)
                            .ok_or(CertifyError::UnsupportedMode)?;
                        (self.a_total * c, self.sum_apsi)
                    }
                }
            }
            CertificateVariant::Vi => {
                let dom = instance.psi.domain();
                match &instance.psi {
                    CompositeTerm::Zero { .. } | CompositeTerm::Indicator(_) => {
                        let m = dom.support(&s).ok_or(CertifyError::UnsupportedMode)?;
                        (m, self.sum_apsi)
                    }
                    CompositeTerm::General { .. } => {
                        let scaled: Vec<f64> = s.iter().map(|v| v / self.a_total).collect();
                        let c = instance
                            .psi
                            .support_query(&scaled)
                            .ok_or(CertifyError::UnsupportedMode)?;
                        (self.a_total * c, self.sum_apsi)
                    }
                }
            }
        };
        Ok((self.sum_agx + psi_terms + max_term) / self.a_total)
    }
}

/// `max { <s, x> : x in S, ||x - x0||_B <= r0 }` via a one-dimensional
/// multiplier search wrapped around the simple-set projection.
pub fn support_over_ball_intersection(
    set: &SimpleSet,
    s: &[f64],
    x0: &[f64],
    r0: f64,
    metric: &Metric,
) -> Result<f64, CertifyError> {
    // Ball-only case has a closed form.
    if matches!(set, SimpleSet::WholeSpace { .. }) {
        let dn = metric.dual_norm(s)?;
        return Ok(dot(s, x0) + r0 * dn);
    }
    // If the set fits inside the ball the constraint is inactive.
    if let Some(sup) = set.sup_distance_from(x0) {
        // sup distance is Euclidean; scale conservatively by the metric.
        let lmax = metric.largest_eigenvalue().sqrt();
        if sup * lmax <= r0 {
            return set.support(s).ok_or(CertifyError::UnsupportedMode);
        }
    }
    // Lagrangian: x(lam) = argmax <s, x> - lam/2 ||x - x0||_B^2 over S,
    // i.e. the metric projection of x0 + B^-1 s / lam onto S. The feasible
    // radius ||x(lam) - x0||_B decreases in lam; bisect to the boundary.
    let project_at = |lam: f64| -> Vec<f64> {
        let bs = metric.solve(s);
        let mut z = x0.to_vec();
        for i in 0..z.len() {
            z[i] += bs[i] / lam;
        }
        set.project_metric(&z, metric)
    };
    let radius_at = |x: &Vec<f64>| metric.norm(&sub(x, x0));
    let mut lo = 1e-12;
    let x_lo = project_at(lo);
    if radius_at(&x_lo) <= r0 {
        return Ok(dot(s, &x_lo));
    }
    let mut hi = 1.0;
    while radius_at(&project_at(hi)) > r0 {
        hi *= 2.0;
        if hi > 1e18 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if radius_at(&project_at(mid)) > r0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Evaluate at the boundary multiplier; the max over the intersection is
    // the Lagrangian value there (strong duality for this convex program).
    let x = project_at(hi);
    Ok(dot(s, &x))
}
