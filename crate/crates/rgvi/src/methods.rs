//! The outer schemes: primal, dual, and projecting reduced-gradient methods,
//! the uniformly monotone linear-rate variant, the switching scheme for
//! gradient norms, and two classical baselines (projected gradient and
//! extragradient).
//!
//! Every scheme produces a `RunTrace` and checks its own convergence
//! inequality online, against the known solution when one is recorded and
//! against the starting point otherwise:
//!
//! - primal:     `sum_i a_i <V_psi(x_i), x_i - x> + B_t + beta(v_t, x) <= beta(x0, x)`
//! - dual:       `sum_i a_i psi(x_i) + B_t <= Psi*_t`
//! - projecting: `beta(v_t, x*) + B_t <= beta(x0, x*)`
//! - uniform:    `||v_t - x*|| <= (1 + alpha_p)^(-t/2) ||x0 - x*||`
//!
//! Inexact inner solves perturb the exact-arithmetic statements, so each
//! trace carries an accumulated slack budget: the per-step violation bound
//! times the relevant distance, plus 1e-10 per iteration.

use std::time::Instant;

use thiserror::Error;

use crate::certify::{merit, CertificateAccumulator, CertificateVariant, CertifyError, MeritMode};
use crate::linalg::{dot, sub};
use crate::metric::{prox_step, ProxError, PsiMode};
use crate::problems::{CompositeTerm, ProblemInstance};
use crate::sets::SimpleSet;
use crate::steps::{
    default_vi_m, gamma_vi, min_tensor_step, universal_stepsize, vi_step_order0, vi_step_order1,
    StepConfig, StepError, StepRecord,
};

#[derive(Debug, Error)]
pub enum MethodError {
    #[error("method configuration error: {0}")]
    Config(String),
    #[error("essential step failed at iteration {iteration}: {source}")]
    Step {
        iteration: usize,
        source: StepError,
        /// Everything computed before the failure.
        partial: Box<RunTrace>,
    },
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

/// Outer scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Primal,
    Dual,
    Projecting,
    UniformMonotone,
    Switching,
    BaselineGradient,
    BaselineExtragradient,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Primal => "primal",
            Scheme::Dual => "dual",
            Scheme::Projecting => "projecting",
            Scheme::UniformMonotone => "uniform_monotone",
            Scheme::Switching => "switching",
            Scheme::BaselineGradient => "baseline_gradient",
            Scheme::BaselineExtragradient => "baseline_extragradient",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "primal" => Scheme::Primal,
            "dual" => Scheme::Dual,
            "projecting" => Scheme::Projecting,
            "uniform_monotone" => Scheme::UniformMonotone,
            "switching" => Scheme::Switching,
            "baseline_gradient" => Scheme::BaselineGradient,
            "baseline_extragradient" => Scheme::BaselineExtragradient,
            _ => return None,
        })
    }
}

/// Which essential step the outer scheme calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Basic tensor step for minimization (orders 1 and 2).
    MinTensor,
    /// VI tensor step (orders 0 and 1).
    ViTensor,
}

impl StepRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepRule::MinTensor => "min",
            StepRule::ViTensor => "vi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "min" => Some(StepRule::MinTensor),
            "vi" => Some(StepRule::ViTensor),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub scheme: Scheme,
    pub step_rule: StepRule,
    pub step: StepConfig,
    pub budget: usize,
    /// Merit/certificate cadence (in iterations); 1 evaluates everywhere.
    pub cert_every: usize,
    /// Early stop on `||V_psi(x_t)||_*`.
    pub grad_stop: Option<f64>,
    /// Early stop on the certificate value.
    pub cert_stop: Option<f64>,
    /// Starting point override.
    pub x0: Option<Vec<f64>>,
    /// Certificate radius override.
    pub r0: Option<f64>,
    /// Stage length for the switching scheme (`N = 2t`).
    pub stage_length: Option<usize>,
    /// Stepsize override for the extragradient baseline.
    pub baseline_h: Option<f64>,
}

impl MethodConfig {
    pub fn new(scheme: Scheme, step_rule: StepRule, order: usize, budget: usize) -> Self {
        Self {
            scheme,
            step_rule,
            step: StepConfig::order(order),
            budget,
            cert_every: 1,
            grad_stop: None,
            cert_stop: None,
            x0: None,
            r0: None,
            stage_length: None,
            baseline_h: None,
        }
    }

    fn validate(&self) -> Result<(), MethodError> {
        if self.budget < 1 {
            return Err(MethodError::Config("budget must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    Stationary,
    GradThreshold,
    CertificateThreshold,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Budget => "budget",
            StopReason::Stationary => "stationary",
            StopReason::GradThreshold => "grad_threshold",
            StopReason::CertificateThreshold => "certificate_threshold",
        }
    }
}

/// Per-iteration log entry (`t` is 1-based).
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub t: usize,
    pub a: f64,
    pub b: f64,
    pub a_sum: f64,
    pub b_sum: f64,
    /// `||V_psi(x_t)||_*`.
    pub grad_norm: f64,
    /// `||v_t - x*||_B` when the solution is known.
    pub dist_to_solution: Option<f64>,
    pub merit: Option<f64>,
    pub merit_exact: bool,
    pub certificate: Option<f64>,
    /// Online theorem inequality slack (should stay below the accumulated
    /// tolerance budget).
    pub theorem_slack: f64,
    pub inner_residual: f64,
    /// Weighted average objective `F_tilde_t` for minimization runs.
    pub objective_avg: Option<f64>,
    pub wall: f64,
}

/// Full output of a run: per-iteration records plus the raw sequences needed
/// to recompute averages and certificates offline.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub scheme: Scheme,
    pub records: Vec<IterationRecord>,
    /// Step points `x_1, ..., x_T`.
    pub points: Vec<Vec<f64>>,
    /// Prox centers `v_0 = x0, v_1, ..., v_T`.
    pub centers: Vec<Vec<f64>>,
    /// Stepsizes `a_1, ..., a_T`.
    pub weights: Vec<f64>,
    pub x0: Vec<f64>,
    /// Weighted average of the step points (equals `x0` before any step).
    pub xbar: Vec<f64>,
    pub stop: StopReason,
    /// Final accumulated tolerance budget for theorem checks.
    pub tol_accum: f64,
}

impl RunTrace {
    fn new(scheme: Scheme, x0: Vec<f64>) -> Self {
        Self {
            scheme,
            records: Vec::new(),
            points: Vec::new(),
            centers: vec![x0.clone()],
            weights: Vec::new(),
            x0: x0.clone(),
            xbar: x0,
            stop: StopReason::Budget,
            tol_accum: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Running minimum of the reduced-gradient norms.
    pub fn grad_star(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.min(r.grad_norm);
                best
            })
            .collect()
    }
}

/// Shared bookkeeping for the prox-center schemes.
struct RunState<'a> {
    instance: &'a ProblemInstance,
    config: &'a MethodConfig,
    trace: RunTrace,
    /// Reference point for the online inequality: `x*` when known, else `x0`.
    target: Vec<f64>,
    target_is_solution: bool,
    beta0: f64,
    sum_a_v_target: f64,
    sum_af: f64,
    sum_ax: Vec<f64>,
    a_total: f64,
    b_total: f64,
    grad_min: f64,
    cert: Option<CertificateAccumulator>,
    started: Instant,
}

impl<'a> RunState<'a> {
    fn new(
        instance: &'a ProblemInstance,
        config: &'a MethodConfig,
        scheme: Scheme,
    ) -> Result<Self, MethodError> {
        config.validate()?;
        let x0 = config.x0.clone().unwrap_or_else(|| instance.default_start.clone());
        if !instance.psi.contains(&x0, 1e-8) {
            return Err(MethodError::Config("starting point infeasible".into()));
        }
        let target = instance.known_solution.clone().unwrap_or_else(|| x0.clone());
        let target_is_solution = instance.known_solution.is_some();
        let beta0 = instance.metric.bregman(&x0, &target);
        let variant = match (config.step_rule, config.scheme) {
            (StepRule::MinTensor, Scheme::Dual) => CertificateVariant::MinimizationDual,
            (StepRule::MinTensor, _) => CertificateVariant::MinimizationPrimal,
            (StepRule::ViTensor, _) => CertificateVariant::Vi,
        };
        let r0 = config.r0.or(instance.r0);
        let cert = match variant {
            CertificateVariant::Vi => {
                // Needs a bounded domain.
                instance
                    .psi
                    .domain()
                    .diameter()
                    .map(|_| CertificateAccumulator::new(variant, x0.clone(), r0))
            }
            _ => r0.map(|r| CertificateAccumulator::new(variant, x0.clone(), Some(r))),
        };
        let dim = x0.len();
        Ok(Self {
            instance,
            config,
            trace: RunTrace::new(scheme, x0),
            target,
            target_is_solution,
            beta0,
            sum_a_v_target: 0.0,
            sum_af: 0.0,
            sum_ax: vec![0.0; dim],
            a_total: 0.0,
            b_total: 0.0,
            grad_min: f64::INFINITY,
            cert: None,
            started: Instant::now(),
        }
        .with_cert(cert))
    }

    fn with_cert(mut self, cert: Option<CertificateAccumulator>) -> Self {
        self.cert = cert;
        self
    }

    fn essential_step(&mut self, v: &[f64], iteration: usize) -> Result<StepRecord, MethodError> {
        let res = match self.config.step_rule {
            StepRule::MinTensor => min_tensor_step(v, self.instance, &self.config.step),
            StepRule::ViTensor => match self.config.step.order {
                0 => {
                    let m = match self.config.step.regularization {
                        Some(m) => m,
                        None => {
                            let m_hat = self
                                .instance
                                .constants
                                .m_hat1
                                .map(|e| e.value)
                                .ok_or_else(|| {
                                    MethodError::Config(
                                        "no Lipschitz bound recorded for the order-0 VI step".into(),
                                    )
                                })?;
                            default_vi_m(0, m_hat)
                        }
                    };
                    vi_step_order0(v, self.instance, m)
                }
                1 => vi_step_order1(v, self.instance, &self.config.step),
                p => Err(StepError::Config(format!("VI steps support orders 0 and 1, got {p}"))),
            },
        };
        res.map_err(|source| MethodError::Step {
            iteration,
            source,
            partial: Box::new(self.trace.clone()),
        })
    }

    /// Accepts a step: updates sums, the running average, and the
    /// accumulated tolerance budget. Returns the certificate gradient used.
    fn accept(&mut self, rec: &StepRecord) {
        self.a_total += rec.a;
        self.b_total += rec.b;
        self.grad_min = self.grad_min.min(rec.grad_dual_norm);
        for i in 0..self.sum_ax.len() {
            self.sum_ax[i] += rec.a * rec.point[i];
        }
        if self.a_total > 0.0 {
            self.trace.xbar = self.sum_ax.iter().map(|s| s / self.a_total).collect();
        } else {
            self.trace.xbar = rec.point.clone();
        }
        self.sum_a_v_target +=
            rec.a * dot(&rec.reduced_gradient, &sub(&rec.point, &self.target));
        if let Some(f) = &self.instance.objective {
            self.sum_af += rec.a * (f(&rec.point) + self.instance.psi.eval(&rec.point));
        }
        // Violation of the exact-arithmetic statements from the inexact
        // inner solve, measured at the monitor target.
        let dist = self.instance.metric.norm(&sub(&self.target, &rec.point));
        self.trace.tol_accum += (1.0 + rec.a) * rec.inner_residual * (1.0 + dist) + 1e-10;
        self.trace.points.push(rec.point.clone());
        self.trace.weights.push(rec.a);
    }

    fn push_record(
        &mut self,
        t: usize,
        rec: &StepRecord,
        center: &[f64],
        theorem_slack: f64,
        force_log: bool,
    ) -> (Option<f64>, Option<f64>) {
        let logged = force_log
            || t.is_multiple_of(self.config.cert_every.max(1))
            || t == self.config.budget;
        let (mut merit_val, mut merit_exact, mut cert_val) = (None, false, None);
        if logged {
            if let Ok(m) = merit(&self.trace.xbar, self.instance, MeritMode::Auto) {
                merit_val = Some(m.value);
                merit_exact = m.exact;
            }
            if let Some(acc) = &self.cert {
                if acc.total_weight() > 0.0 {
                    if let Ok(v) = acc.value(self.instance) {
                        cert_val = Some(v);
                    }
                }
            }
        }
        let dist = self
            .target_is_solution
            .then(|| self.instance.metric.norm(&sub(center, &self.target)));
        let objective_avg = if self.instance.objective.is_some() && self.a_total > 0.0 {
            Some(self.sum_af / self.a_total)
        } else {
            None
        };
        self.trace.records.push(IterationRecord {
            t,
            a: rec.a,
            b: rec.b,
            a_sum: self.a_total,
            b_sum: self.b_total,
            grad_norm: rec.grad_dual_norm,
            dist_to_solution: dist,
            merit: merit_val,
            merit_exact,
            certificate: cert_val,
            theorem_slack,
            inner_residual: rec.inner_residual,
            objective_avg,
            wall: self.started.elapsed().as_secs_f64(),
        });
        (merit_val, cert_val)
    }

    fn should_stop(&self, rec: &StepRecord, cert: Option<f64>) -> Option<StopReason> {
        if rec.stationary {
            return Some(StopReason::Stationary);
        }
        if let Some(thr) = self.config.grad_stop {
            if rec.grad_dual_norm <= thr {
                return Some(StopReason::GradThreshold);
            }
        }
        if let (Some(thr), Some(c)) = (self.config.cert_stop, cert) {
            if c <= thr {
                return Some(StopReason::CertificateThreshold);
            }
        }
        None
    }
}

/// Primal reduced-gradient method: essential step at the prox center, then a
/// prox update of the center with the universal stepsize.
pub fn run_primal(instance: &ProblemInstance, config: &MethodConfig) -> Result<RunTrace, MethodError> {
    let mut state = RunState::new(instance, config, Scheme::Primal)?;
    let mut v = state.trace.x0.clone();
    for t in 1..=config.budget {
        let rec = state.essential_step(&v, t)?;
        if rec.stationary {
            state.trace.tol_accum += 1e-10;
            if state.trace.points.is_empty() {
                state.trace.xbar = rec.point.clone();
            }
            state.push_record(t, &rec, &v, 0.0, true);
            state.trace.stop = StopReason::Stationary;
            return Ok(state.trace);
        }
        state.accept(&rec);
        if let Some(acc) = state.cert.as_mut() {
            let g = match acc.variant {
                CertificateVariant::MinimizationPrimal => rec.reduced_gradient.clone(),
                _ => instance.operator.eval(&rec.point),
            };
            acc.push(rec.a, &g, &rec.point, instance.psi.eval(&rec.point));
        }
        let v_next = prox_step(
            &v,
            rec.a,
            &rec.reduced_gradient,
            &instance.psi,
            &instance.metric,
            PsiMode::DomainOnly,
        )?;
        state.trace.centers.push(v_next.clone());
        // Theorem slack at the monitor target after this iteration.
        let slack = state.sum_a_v_target + state.b_total
            + instance.metric.bregman(&v_next, &state.target)
            - state.beta0;
        let (_, cert_val) = state.push_record(t, &rec, &v_next, slack, false);
        v = v_next;
        if let Some(reason) = state.should_stop(&rec, cert_val) {
            state.trace.stop = reason;
            break;
        }
    }
    Ok(state.trace)
}

/// Dual reduced-gradient method: the prox center minimizes the accumulated
/// estimating function `beta(x0, .) + <s_t, .> + A_t psi`, where `s_t`
/// aggregates the raw operator values (not the reduced gradients).
pub fn run_dual(instance: &ProblemInstance, config: &MethodConfig) -> Result<RunTrace, MethodError> {
    let mut state = RunState::new(instance, config, Scheme::Dual)?;
    let x0 = state.trace.x0.clone();
    let mut v = x0.clone();
    let dim = x0.len();
    let mut s = vec![0.0; dim];
    let mut sum_apsi = 0.0;
    let mut sum_avx = 0.0;
    for t in 1..=config.budget {
        let rec = state.essential_step(&v, t)?;
        if rec.stationary {
            state.trace.tol_accum += 1e-10;
            if state.trace.points.is_empty() {
                state.trace.xbar = rec.point.clone();
            }
            state.push_record(t, &rec, &v, 0.0, true);
            state.trace.stop = StopReason::Stationary;
            return Ok(state.trace);
        }
        state.accept(&rec);
        let vx = instance.operator.eval(&rec.point);
        for i in 0..dim {
            s[i] += rec.a * vx[i];
        }
        let psi_x = instance.psi.eval(&rec.point);
        sum_apsi += rec.a * psi_x;
        sum_avx += rec.a * dot(&vx, &rec.point);
        if let Some(acc) = state.cert.as_mut() {
            acc.push(rec.a, &vx, &rec.point, psi_x);
        }
        let v_next = prox_step(
            &x0,
            1.0,
            &s,
            &instance.psi,
            &instance.metric,
            PsiMode::Weighted(state.a_total),
        )?;
        state.trace.centers.push(v_next.clone());
        // Psi*_t evaluated at the fresh minimizer.
        let psi_star = instance.metric.bregman(&x0, &v_next) + dot(&s, &v_next) - sum_avx
            + state.a_total * instance.psi.eval(&v_next);
        let slack = sum_apsi + state.b_total - psi_star;
        let (_, cert_val) = state.push_record(t, &rec, &v_next, slack, false);
        v = v_next;
        if let Some(reason) = state.should_stop(&rec, cert_val) {
            state.trace.stop = reason;
            break;
        }
    }
    Ok(state.trace)
}

/// Projecting reduced-gradient method: the center moves to the Bregman
/// projection onto the localization halfspace cut out by the fresh reduced
/// gradient, intersected with the domain.
pub fn run_projecting(
    instance: &ProblemInstance,
    config: &MethodConfig,
) -> Result<RunTrace, MethodError> {
    if matches!(instance.psi, CompositeTerm::General { .. }) {
        return Err(MethodError::Config(
            "projecting scheme requires an indicator (or zero) composite term".into(),
        ));
    }
    let mut state = RunState::new(instance, config, Scheme::Projecting)?;
    let mut v = state.trace.x0.clone();
    for t in 1..=config.budget {
        let rec = state.essential_step(&v, t)?;
        if rec.stationary {
            state.trace.tol_accum += 1e-10;
            if state.trace.points.is_empty() {
                state.trace.xbar = rec.point.clone();
            }
            state.push_record(t, &rec, &v, 0.0, true);
            state.trace.stop = StopReason::Stationary;
            return Ok(state.trace);
        }
        state.accept(&rec);
        if let Some(acc) = state.cert.as_mut() {
            let g = match acc.variant {
                CertificateVariant::MinimizationPrimal => rec.reduced_gradient.clone(),
                _ => instance.operator.eval(&rec.point),
            };
            acc.push(rec.a, &g, &rec.point, instance.psi.eval(&rec.point));
        }
        let v_next = project_onto_localization(&v, &rec, instance)?;
        state.trace.centers.push(v_next.clone());
        let slack = if state.target_is_solution {
            instance.metric.bregman(&v_next, &state.target) + state.b_total - state.beta0
        } else {
            0.0
        };
        let (_, cert_val) = state.push_record(t, &rec, &v_next, slack, false);
        v = v_next;
        if let Some(reason) = state.should_stop(&rec, cert_val) {
            state.trace.stop = reason;
            break;
        }
    }
    Ok(state.trace)
}

/// Bregman projection of `v` onto `{ x in dom psi : <g, x_step - x> >= 0 }`
/// via a one-dimensional search on the halfspace multiplier wrapped around
/// the simple-set projection. Exact (closed form) over the whole space.
fn project_onto_localization(
    v: &[f64],
    rec: &StepRecord,
    instance: &ProblemInstance,
) -> Result<Vec<f64>, MethodError> {
    let metric = &instance.metric;
    let g = &rec.reduced_gradient;
    let cut_level = dot(g, &rec.point);
    // Already inside the halfspace?
    if dot(g, v) <= cut_level + 1e-15 * (1.0 + cut_level.abs()) {
        return Ok(v.to_vec());
    }
    let domain = instance.psi.domain();
    if matches!(domain, SimpleSet::WholeSpace { .. }) {
        // Closed form: v - lambda B^-1 g with lambda = <g, v - x_step>/||g||*^2.
        let gn = metric.dual_norm(g).map_err(|e| MethodError::Prox(ProxError::Invalid(e)))?;
        let lambda = dot(g, &sub(v, &rec.point)) / (gn * gn);
        let bg = metric.solve(g);
        let mut out = v.to_vec();
        for i in 0..out.len() {
            out[i] -= lambda * bg[i];
        }
        return Ok(out);
    }
    let project_at = |lam: f64| -> Vec<f64> {
        let bg = metric.solve(g);
        let mut z = v.to_vec();
        for i in 0..z.len() {
            z[i] -= lam * bg[i];
        }
        domain.project_metric(&z, metric)
    };
    let violation = |x: &Vec<f64>| dot(g, x) - cut_level;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let scale = 1.0 + cut_level.abs() + dot(g, v).abs();
    for _ in 0..200 {
        if violation(&project_at(hi)) <= 0.0 {
            break;
        }
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if violation(&project_at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi) {
            break;
        }
    }
    let out = project_at(hi);
    debug_assert!(
        violation(&out).abs() <= 1e-9 * scale,
        "active-halfspace identity violated: {}",
        violation(&out)
    );
    Ok(out)
}

/// The uniformly monotone variant: after the primal prox update, the center
/// is pulled toward the fresh step point with weight `alpha_p`, yielding a
/// linear rate without restarts.
pub fn run_uniform_monotone(
    instance: &ProblemInstance,
    config: &MethodConfig,
) -> Result<RunTrace, MethodError> {
    if config.step_rule != StepRule::ViTensor {
        return Err(MethodError::Config("uniform monotone scheme uses VI steps".into()));
    }
    let p = config.step.order;
    let sigma = match p {
        0 => instance.constants.sigma2,
        _ => None,
    }
    .ok_or_else(|| {
        MethodError::Config(format!(
            "no uniform monotonicity modulus of degree {} recorded",
            p + 2
        ))
    })?;
    let m_hat = match p {
        0 => instance.constants.m_hat1.map(|e| e.value),
        _ => instance.constants.m_hat2.map(|e| e.value),
    }
    .ok_or_else(|| MethodError::Config("no derivative bound recorded".into()))?;
    let m = config.step.regularization.unwrap_or_else(|| default_vi_m(p, m_hat));
    let alpha = alpha_coefficient(p, gamma_vi(p, m, m_hat), sigma);
    let mut config = config.clone();
    config.step.regularization = Some(m);

    let mut state = RunState::new(instance, &config, Scheme::UniformMonotone)?;
    let mut v = state.trace.x0.clone();
    let dist0 = instance.metric.norm(&sub(&state.trace.x0, &state.target));
    for t in 1..=config.budget {
        let rec = state.essential_step(&v, t)?;
        if rec.stationary {
            state.trace.tol_accum += 1e-10;
            if state.trace.points.is_empty() {
                state.trace.xbar = rec.point.clone();
            }
            state.push_record(t, &rec, &v, 0.0, true);
            state.trace.stop = StopReason::Stationary;
            return Ok(state.trace);
        }
        state.accept(&rec);
        if let Some(acc) = state.cert.as_mut() {
            let g = instance.operator.eval(&rec.point);
            acc.push(rec.a, &g, &rec.point, instance.psi.eval(&rec.point));
        }
        let v_hat = prox_step(
            &v,
            rec.a,
            &rec.reduced_gradient,
            &instance.psi,
            &instance.metric,
            PsiMode::DomainOnly,
        )?;
        let v_next: Vec<f64> = (0..v.len())
            .map(|i| (v_hat[i] + alpha * rec.point[i]) / (1.0 + alpha))
            .collect();
        state.trace.centers.push(v_next.clone());
        // Linear-rate monitor.
        let slack = if state.target_is_solution {
            let dist = instance.metric.norm(&sub(&v_next, &state.target));
            dist - (1.0 + alpha).powf(-(t as f64) / 2.0) * dist0
        } else {
            0.0
        };
        let (_, cert_val) = state.push_record(t, &rec, &v_next, slack, false);
        v = v_next;
        if let Some(reason) = state.should_stop(&rec, cert_val) {
            state.trace.stop = reason;
            break;
        }
    }
    Ok(state.trace)
}

/// Averaging coefficient of the uniformly monotone scheme. The general
/// formula `(p+2) g ((1/p) g)^(p/(p+2)) sigma^(2/(p+2))` is indeterminate at
/// `p = 0`, where the scalar infimum degenerates and yields `2 g sigma`.
pub fn alpha_coefficient(p: usize, gamma_hat: f64, sigma: f64) -> f64 {
    if p == 0 {
        return 2.0 * gamma_hat * sigma;
    }
    let pf = p as f64;
    (pf + 2.0) * gamma_hat * (gamma_hat / pf).powf(pf / (pf + 2.0)) * sigma.powf(2.0 / (pf + 2.0))
}

/// Output of the switching scheme: a primal stage to shrink the objective
/// gap, then repeated tensor steps from the averaged point to drive the
/// reduced-gradient norm down at the faster rate.
#[derive(Debug, Clone)]
pub struct SwitchingTrace {
    pub stage_a: RunTrace,
    /// `y_0, ..., y_t` of stage b.
    pub stage_points: Vec<Vec<f64>>,
    /// `||F'(y_i)||_*` for `i = 1..t` (reduced gradients of stage b).
    pub stage_grad_norms: Vec<f64>,
    /// Composite values `F(y_i)` for `i = 0..t`.
    pub stage_values: Vec<f64>,
    /// `min_i ||F'(y_i)||_*`.
    pub g_star: f64,
    /// Worst violation of the per-step descent inequality in stage b.
    pub descent_slack: f64,
}

/// Switching scheme: `N = 2t` total steps, `t` primal iterations then `t`
/// pure tensor steps from the weighted average.
pub fn run_switching(
    instance: &ProblemInstance,
    config: &MethodConfig,
    stage_length: usize,
) -> Result<SwitchingTrace, MethodError> {
    if stage_length < 1 {
        return Err(MethodError::Config("stage length must be >= 1".into()));
    }
    if config.step_rule != StepRule::MinTensor {
        return Err(MethodError::Config("switching scheme uses minimization steps".into()));
    }
    let f = instance
        .objective
        .clone()
        .ok_or_else(|| MethodError::Config("switching scheme needs an objective".into()))?;
    let mut stage_cfg = config.clone();
    stage_cfg.budget = stage_length;
    let stage_a = run_primal(instance, &stage_cfg)?;
    let y0 = if stage_a.weights.is_empty() { stage_a.x0.clone() } else { stage_a.xbar.clone() };

    let p = config.step.order as f64;
    let gamma_star = crate::steps::gamma_min(
        config.step.order,
        config.step.regularization.unwrap_or_else(|| {
            let l = match config.step.order {
                1 => instance.constants.l1.map(|e| e.value).unwrap_or(1.0),
                _ => instance.constants.l2.map(|e| e.value).unwrap_or(1.0),
            };
            crate::steps::default_min_m(config.step.order, l)
        }),
        match config.step.order {
            1 => instance.constants.l1.map(|e| e.value).unwrap_or(0.0),
            _ => instance.constants.l2.map(|e| e.value).unwrap_or(0.0),
        },
    );

    let mut ys = vec![y0.clone()];
    let mut grads = Vec::new();
    let mut values = vec![f(&y0) + instance.psi.eval(&y0)];
    let mut g_star = f64::INFINITY;
    let mut descent_slack: f64 = 0.0;
    let mut y = y0;
    for i in 0..stage_length {
        let rec = min_tensor_step(&y, instance, &config.step).map_err(|source| MethodError::Step {
            iteration: stage_length + i + 1,
            source,
            partial: Box::new(stage_a.clone()),
        })?;
        let next = rec.point.clone();
        let f_next = f(&next) + instance.psi.eval(&next);
        values.push(f_next);
        grads.push(rec.grad_dual_norm);
        g_star = g_star.min(rec.grad_dual_norm);
        // Descent inequality F(y_i) - F(y_{i+1}) >= gamma* G_{i+1}^((p+1)/p).
        let lhs = values[values.len() - 2] - f_next;
        let rhs = gamma_star * rec.grad_dual_norm.powf((p + 1.0) / p);
        descent_slack = descent_slack.max(rhs - lhs);
        ys.push(next.clone());
        y = next;
        if rec.stationary {
            break;
        }
    }
    Ok(SwitchingTrace {
        stage_a,
        stage_points: ys,
        stage_grad_norms: grads,
        stage_values: values,
        g_star,
        descent_slack,
    })
}

/// Output of the classical projected-gradient baseline: iterates, steps, and
/// sliding-window averages with their merit bound.
#[derive(Debug, Clone)]
pub struct GradientBaselineTrace {
    /// `x_0, ..., x_N`.
    pub points: Vec<Vec<f64>>,
    /// `h_0, ..., h_{N-1}`.
    pub steps: Vec<f64>,
    /// `||x_k - x*||_B` when the solution is known.
    pub distances: Vec<f64>,
}

impl GradientBaselineTrace {
    /// Weighted window average `x_{p,m} = (1/S1) sum_{i=p}^m h_i x_{i+1}`.
    pub fn window_average(&self, p: usize, m: usize) -> (Vec<f64>, f64, f64) {
        let dim = self.points[0].len();
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut avg = vec![0.0; dim];
        for i in p..=m {
            let h = self.steps[i];
            s1 += h;
            s2 += h * h;
            for (aj, pj) in avg.iter_mut().zip(&self.points[i + 1]) {
                *aj += h * pj;
            }
        }
        for v in avg.iter_mut() {
            *v /= s1;
        }
        (avg, s1, s2)
    }

    /// The segment-lemma merit bound `(1 + L^2 S2) / (2 S1) D^2`.
    pub fn window_bound(&self, p: usize, m: usize, lips: f64, diameter: f64) -> f64 {
        let (_, s1, s2) = self.window_average(p, m);
        (1.0 + lips * lips * s2) / (2.0 * s1) * diameter * diameter
    }
}

/// Projected gradient iterations `x_{k+1} = pi_Q(x_k - h_k B^-1 V(x_k))`
/// with `h_k = 1 / (L sqrt(k+1))`; converges only through its averaged
/// points on general monotone problems.
pub fn run_baseline_gradient(
    instance: &ProblemInstance,
    config: &MethodConfig,
) -> Result<GradientBaselineTrace, MethodError> {
    config.validate()?;
    if instance.diameter.is_none() {
        return Err(MethodError::Config("baseline gradient needs a bounded domain".into()));
    }
    let lips = instance
        .constants
        .m_hat1
        .map(|e| e.value)
        .ok_or_else(|| MethodError::Config("baseline gradient needs the Lipschitz constant".into()))?;
    let x0 = config.x0.clone().unwrap_or_else(|| instance.default_start.clone());
    if !instance.psi.contains(&x0, 1e-8) {
        return Err(MethodError::Config("starting point infeasible".into()));
    }
    let domain = instance.psi.domain();
    let metric = &instance.metric;
    let mut points = vec![x0.clone()];
    let mut steps = Vec::new();
    let mut distances = Vec::new();
    if let Some(xs) = &instance.known_solution {
        distances.push(metric.norm(&sub(&x0, xs)));
    }
    let mut x = x0;
    for k in 0..config.budget {
        let h = 1.0 / (lips * ((k + 1) as f64).sqrt());
        let g = instance.operator.eval(&x);
        let bg = metric.solve(&g);
        let mut z = x.clone();
        for i in 0..z.len() {
            z[i] -= h * bg[i];
        }
        x = domain.project_metric(&z, metric);
        points.push(x.clone());
        steps.push(h);
        if let Some(xs) = &instance.known_solution {
            distances.push(metric.norm(&sub(&x, xs)));
        }
    }
    Ok(GradientBaselineTrace { points, steps, distances })
}

/// Output of the extragradient baseline.
#[derive(Debug, Clone)]
pub struct ExtragradientTrace {
    /// Leading points `y_k` (the averaged sequence is built from these).
    pub mid_points: Vec<Vec<f64>>,
    /// `||x_k - x*||_B` when the solution is known.
    pub distances: Vec<f64>,
    pub stepsize: f64,
}

impl ExtragradientTrace {
    /// Uniform average of the first `k` mid points.
    pub fn average(&self, k: usize) -> Vec<f64> {
        let dim = self.mid_points[0].len();
        let mut avg = vec![0.0; dim];
        for y in self.mid_points.iter().take(k) {
            for j in 0..dim {
                avg[j] += y[j];
            }
        }
        for v in avg.iter_mut() {
            *v /= k as f64;
        }
        avg
    }
}

/// Classical extragradient with a fixed stepsize (default `1/(sqrt(2) L)`).
pub fn run_baseline_extragradient(
    instance: &ProblemInstance,
    config: &MethodConfig,
    h: Option<f64>,
) -> Result<ExtragradientTrace, MethodError> {
    config.validate()?;
    let lips = instance
        .constants
        .m_hat1
        .map(|e| e.value)
        .ok_or_else(|| MethodError::Config("extragradient needs the Lipschitz constant".into()))?;
    let h = h
        .or(config.baseline_h)
        .unwrap_or(1.0 / (std::f64::consts::SQRT_2 * lips));
    let x0 = config.x0.clone().unwrap_or_else(|| instance.default_start.clone());
    if !instance.psi.contains(&x0, 1e-8) {
        return Err(MethodError::Config("starting point infeasible".into()));
    }
    let domain = instance.psi.domain();
    let metric = &instance.metric;
    let mut x = x0;
    let mut mids = Vec::with_capacity(config.budget);
    let mut distances = Vec::new();
    if let Some(xs) = &instance.known_solution {
        distances.push(metric.norm(&sub(&x, xs)));
    }
    for _ in 0..config.budget {
        let gx = instance.operator.eval(&x);
        let bgx = metric.solve(&gx);
        let mut zy = x.clone();
        for i in 0..zy.len() {
            zy[i] -= h * bgx[i];
        }
        let y = domain.project_metric(&zy, metric);
        let gy = instance.operator.eval(&y);
        let bgy = metric.solve(&gy);
        let mut zx = x.clone();
        for i in 0..zx.len() {
            zx[i] -= h * bgy[i];
        }
        x = domain.project_metric(&zx, metric);
        mids.push(y);
        if let Some(xs) = &instance.known_solution {
            distances.push(metric.norm(&sub(&x, xs)));
        }
    }
    Ok(ExtragradientTrace { mid_points: mids, distances, stepsize: h })
}

/// Checks that a fresh step record still satisfies the universal-stepsize
/// definition; used by tests and the acceptance driver.
pub fn stepsize_consistent(rec: &StepRecord, v: &[f64], instance: &ProblemInstance) -> bool {
    if rec.stationary {
        return true;
    }
    match universal_stepsize(v, &rec.point, &rec.reduced_gradient, &instance.metric) {
        Ok((a, b)) => {
            (a - rec.a).abs() <= 1e-12 * (1.0 + a.abs())
                && (b - rec.b).abs() <= 1e-12 * (1.0 + b.abs())
        }
        Err(_) => false,
    }
}
