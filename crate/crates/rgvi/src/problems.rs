//! Operator and composite-term abstractions plus the instance zoo.
//!
//! Every shipped instance is a deterministic function of its parameters and
//! seed, carries analytic smoothness constants where available, and is
//! validated at construction: sampled monotonicity, finite-difference checks
//! of the first directional derivative, and the variational characterization
//! of the recorded solution.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{all_finite, dot, norm2, sub, Cholesky, DenseMatrix};
use crate::metric::Metric;
use crate::rng::SplitMix64;
use crate::sets::SimpleSet;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("matrix must be non-empty")]
    EmptyMatrix,
    #[error("input contains non-finite entries")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instance validation failed: {0}")]
    Validation(String),
    #[error("matrix-game oracle failed: {0}")]
    GameOracle(String),
}

/// A monotone map `V` with directional derivatives up to `order_cap`.
pub trait Operator: Send + Sync {
    fn dim(&self) -> usize;

    /// Highest available derivative order of `V`.
    fn order_cap(&self) -> usize {
        2
    }

    /// `V(x)`.
    fn eval(&self, x: &[f64]) -> Vec<f64>;

    /// The Jacobian `DV(x)` as a dense matrix.
    fn jacobian(&self, x: &[f64]) -> DenseMatrix;

    /// `D^2 V(x)[h1, h2]`. Affine operators return zero exactly.
    fn second_directional(&self, x: &[f64], h1: &[f64], h2: &[f64]) -> Vec<f64>;
}

/// `V(x) = M x + q`.
pub struct AffineOperator {
    pub matrix: DenseMatrix,
    pub offset: Vec<f64>,
}

impl Operator for AffineOperator {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut v = self.matrix.matvec(x);
        for i in 0..v.len() {
            v[i] += self.offset[i];
        }
        v
    }

    fn jacobian(&self, _x: &[f64]) -> DenseMatrix {
        self.matrix.clone()
    }

    fn second_directional(&self, _x: &[f64], _h1: &[f64], _h2: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

/// Gradient field of `f(x) = |x_1|^3 + sum_i |x_{i+1} - 2 x_i|^3`.
///
/// With the linear map `u = J x` stacking the terms, `f = sum |u_j|^3`,
/// `grad f = J^T (3 u |u|)`, `hess f = J^T diag(6 |u|) J`.
pub struct ChainedCubicGradient {
    n: usize,
}

impl ChainedCubicGradient {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    fn terms(&self, x: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.n);
        u.push(x[0]);
        for i in 1..self.n {
            u.push(x[i] - 2.0 * x[i - 1]);
        }
        u
    }

    /// `J^T w` for the stacking map.
    fn apply_jt(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        out[0] += w[0];
        for i in 1..self.n {
            out[i] += w[i];
            out[i - 1] -= 2.0 * w[i];
        }
        out
    }

    fn apply_j(&self, h: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        out.push(h[0]);
        for i in 1..self.n {
            out.push(h[i] - 2.0 * h[i - 1]);
        }
        out
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.terms(x).iter().map(|u| u.abs().powi(3)).sum()
    }

    /// Spectral norm of the stacking map `J`.
    pub fn stack_norm(&self) -> f64 {
        let mut j = DenseMatrix::zeros(self.n, self.n);
        j.set(0, 0, 1.0);
        for i in 1..self.n {
            j.set(i, i, 1.0);
            j.set(i, i - 1, -2.0);
        }
        j.spectral_norm()
    }
}

impl Operator for ChainedCubicGradient {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let u = self.terms(x);
        let g: Vec<f64> = u.iter().map(|ui| 3.0 * ui * ui.abs()).collect();
        self.apply_jt(&g)
    }

    fn jacobian(&self, x: &[f64]) -> DenseMatrix {
        let u = self.terms(x);
        let d: Vec<f64> = u.iter().map(|ui| 6.0 * ui.abs()).collect();
        // J^T diag(d) J assembled densely; n is small.
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for row in 0..self.n {
            // Row `row` of J has entry 1 at col row and -2 at col row-1.
            let cols: &[(usize, f64)] = if row == 0 {
                &[(0usize, 1.0)]
            } else {
                // (row, 1.0), (row-1, -2.0)
                &[]
            };
            let _ = cols;
            let entries: Vec<(usize, f64)> = if row == 0 {
                vec![(0, 1.0)]
            } else {
                vec![(row, 1.0), (row - 1, -2.0)]
            };
            for &(ci, vi) in &entries {
                for &(cj, vj) in &entries {
                    let cur = m.get(ci, cj);
                    m.set(ci, cj, cur + d[row] * vi * vj);
                }
            }
        }
        m
    }

    fn second_directional(&self, x: &[f64], h1: &[f64], h2: &[f64]) -> Vec<f64> {
        let u = self.terms(x);
        let jh1 = self.apply_j(h1);
        let jh2 = self.apply_j(h2);
        let w: Vec<f64> = (0..self.n)
            .map(|j| 6.0 * u[j].signum() * jh1[j] * jh2[j])
            .collect();
        self.apply_jt(&w)
    }
}

/// Affine skew part plus a separable cubic monotone perturbation anchored at
/// a point `z_bar`:
/// `V(z) = C z + (eps/3) (z - z_bar)^3 + offset` (componentwise cube).
/// The perturbation Jacobian `diag(eps (z_i - z_bar_i)^2)` is positive
/// semidefinite everywhere and vanishes at the anchor, so the operator stays
/// merely monotone there while carrying the exact second-derivative bound
/// `||D^2 V|| <= 2 eps` on `[0, 1]^d` domains.
pub struct CurvedOperator {
    pub skew: DenseMatrix,
    pub epsilon: f64,
    pub anchor: Vec<f64>,
    pub offset: Vec<f64>,
}

impl Operator for CurvedOperator {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut v = self.skew.matvec(x);
        for i in 0..v.len() {
            let d = x[i] - self.anchor[i];
            v[i] += self.epsilon / 3.0 * d * d * d + self.offset[i];
        }
        v
    }

    fn jacobian(&self, x: &[f64]) -> DenseMatrix {
        let mut j = self.skew.clone();
        for i in 0..x.len() {
            let d = x[i] - self.anchor[i];
            let cur = j.get(i, i);
            j.set(i, i, cur + self.epsilon * d * d);
        }
        j
    }

    fn second_directional(&self, x: &[f64], h1: &[f64], h2: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| 2.0 * self.epsilon * (x[i] - self.anchor[i]) * h1[i] * h2[i])
            .collect()
    }
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type ProxFn = Arc<dyn Fn(&[f64], f64, &Metric) -> Vec<f64> + Send + Sync>;

/// The convex term `psi` of a composite problem.
pub enum CompositeTerm {
    /// `psi == 0` on all of `R^dim`.
    Zero { dim: usize },
    /// Indicator of a simple set.
    Indicator(SimpleSet),
    /// General proper closed convex function given by closures: value,
    /// weighted prox `argmin_w { w psi(x) + 1/2 ||x - z||_B^2 }`, and an
    /// optional conjugate `s -> max { <s, x> - psi(x) }` for certificates.
    General {
        value: ScalarFn,
        prox: ProxFn,
        conjugate: Option<ScalarFn>,
        domain: SimpleSet,
    },
}

impl fmt::Debug for CompositeTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompositeTerm::Zero { dim } => write!(f, "Zero({dim})"),
            CompositeTerm::Indicator(s) => write!(f, "Indicator({s:?})"),
            CompositeTerm::General { domain, .. } => write!(f, "General(dom={domain:?})"),
        }
    }
}

impl Clone for CompositeTerm {
    fn clone(&self) -> Self {
        match self {
            CompositeTerm::Zero { dim } => CompositeTerm::Zero { dim: *dim },
            CompositeTerm::Indicator(s) => CompositeTerm::Indicator(s.clone()),
            CompositeTerm::General { value, prox, conjugate, domain } => CompositeTerm::General {
                value: value.clone(),
                prox: prox.clone(),
                conjugate: conjugate.clone(),
                domain: domain.clone(),
            },
        }
    }
}

impl CompositeTerm {
    pub fn dim(&self) -> usize {
        match self {
            CompositeTerm::Zero { dim } => *dim,
            CompositeTerm::Indicator(s) => s.dim(),
            CompositeTerm::General { domain, .. } => domain.dim(),
        }
    }

    /// `psi(x)`, `+inf` outside the domain.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            CompositeTerm::Zero { .. } => 0.0,
            CompositeTerm::Indicator(s) => {
                if s.contains(x, 1e-9) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            CompositeTerm::General { value, domain, .. } => {
                if domain.contains(x, 1e-9) {
                    value(x)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            CompositeTerm::Zero { .. } => true,
            CompositeTerm::Indicator(s) => s.contains(x, tol),
            CompositeTerm::General { domain, .. } => domain.contains(x, tol),
        }
    }

    /// The domain as a simple set (whole space for the zero term).
    pub fn domain(&self) -> SimpleSet {
        match self {
            CompositeTerm::Zero { dim } => SimpleSet::WholeSpace { dim: *dim },
            CompositeTerm::Indicator(s) => s.clone(),
            CompositeTerm::General { domain, .. } => domain.clone(),
        }
    }

    /// Support-style query `max { <s, x> - psi(x) : x in dom psi }`.
    /// `None` when the value is `+inf` or no closed form is available.
    pub fn support_query(&self, s: &[f64]) -> Option<f64> {
        match self {
            CompositeTerm::Zero { dim } => {
                SimpleSet::WholeSpace { dim: *dim }.support(s)
            }
            CompositeTerm::Indicator(set) => set.support(s),
            CompositeTerm::General { conjugate, .. } => conjugate.as_ref().map(|c| c(s)),
        }
    }
}

/// A constant with provenance: analytic (possibly an analytic upper bound)
/// or estimated by sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub estimated: bool,
}

impl Estimate {
    pub fn analytic(value: f64) -> Self {
        Self { value, estimated: false }
    }

    pub fn sampled(value: f64) -> Self {
        Self { value, estimated: true }
    }
}

/// Smoothness and monotonicity constants attached to an instance.
#[derive(Debug, Clone, Copy, Default)]
pub struct SmoothnessConstants {
    /// Lipschitz constant of the gradient (minimization, order 1).
    pub l1: Option<Estimate>,
    /// Lipschitz constant of the Hessian (minimization, order 2).
    pub l2: Option<Estimate>,
    /// Lipschitz constant of `V` (bound on `||DV||`).
    pub m_hat1: Option<Estimate>,
    /// Lipschitz constant of `DV` (bound on `||D^2 V||`).
    pub m_hat2: Option<Estimate>,
    /// Strong monotonicity modulus (degree-2 uniform monotonicity).
    pub sigma2: Option<f64>,
}

/// Which simple set backs the composite term of a quadratic instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiKind {
    Zero,
    Box,
    Ball,
    Simplex,
}

impl PsiKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PsiKind::Zero => "zero",
            PsiKind::Box => "box",
            PsiKind::Ball => "ball",
            PsiKind::Simplex => "simplex",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero" => Some(PsiKind::Zero),
            "box" => Some(PsiKind::Box),
            "ball" => Some(PsiKind::Ball),
            "simplex" => Some(PsiKind::Simplex),
            _ => None,
        }
    }
}

/// Canonical description of a zoo instance (serialized by the harness).
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSpec {
    MatchingPennies,
    BilinearGame { m: usize, n: usize, seed: u64 },
    CurvedGame { m: usize, n: usize, seed: u64, epsilon: f64 },
    ChainedCubic { n: usize },
    StronglyMonotoneAffine { n: usize, mu: f64, lips: f64, seed: u64 },
    CompositeQuadratic { n: usize, psi_kind: PsiKind, seed: u64 },
    SkewRotation { half_width: f64 },
}

impl InstanceSpec {
    pub fn zoo_name(&self) -> &'static str {
        match self {
            InstanceSpec::MatchingPennies => "matching_pennies",
            InstanceSpec::BilinearGame { .. } => "bilinear_game",
            InstanceSpec::CurvedGame { .. } => "curved_game",
            InstanceSpec::ChainedCubic { .. } => "chained_cubic",
            InstanceSpec::StronglyMonotoneAffine { .. } => "strongly_monotone_affine",
            InstanceSpec::CompositeQuadratic { .. } => "composite_quadratic",
            InstanceSpec::SkewRotation { .. } => "skew_rotation",
        }
    }

    pub fn build(&self) -> Result<ProblemInstance, ProblemError> {
        match self {
            InstanceSpec::MatchingPennies => make_matching_pennies(),
            InstanceSpec::BilinearGame { m, n, seed } => {
                let a = random_matrix(*m, *n, *seed);
                make_bilinear_game(&a, self.clone())
            }
            InstanceSpec::CurvedGame { m, n, seed, epsilon } => {
                make_curved_game(*m, *n, *seed, *epsilon)
            }
            InstanceSpec::ChainedCubic { n } => make_chained_cubic(*n),
            InstanceSpec::StronglyMonotoneAffine { n, mu, lips, seed } => {
                make_strongly_monotone_affine(*n, *mu, *lips, *seed)
            }
            InstanceSpec::CompositeQuadratic { n, psi_kind, seed } => {
                make_composite_quadratic(*n, *psi_kind, *seed)
            }
            InstanceSpec::SkewRotation { half_width } => make_skew_rotation(*half_width),
        }
    }
}

/// A fully specified problem: operator, composite term, metric, and metadata.
pub struct ProblemInstance {
    pub spec: InstanceSpec,
    pub operator: Arc<dyn Operator>,
    /// `f(x)` when `V = grad f` (minimization instances).
    pub objective: Option<ScalarFn>,
    pub psi: CompositeTerm,
    pub metric: Metric,
    pub known_solution: Option<Vec<f64>>,
    pub default_start: Vec<f64>,
    pub constants: SmoothnessConstants,
    /// Upper bound on `||x - default_start||` over `dom psi` (or, for
    /// unbounded domains with a known solution, a valid certificate radius).
    pub r0: Option<f64>,
    /// Diameter of `dom psi` (the `D` of bounded-domain analyses).
    pub diameter: Option<f64>,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("spec", &self.spec)
            .field("dim", &self.operator.dim())
            .field("psi", &self.psi)
            .finish()
    }
}

impl ProblemInstance {
    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn name(&self) -> &'static str {
        self.spec.zoo_name()
    }

    /// `F(x) = f(x) + psi(x)` for minimization instances.
    pub fn composite_value(&self, x: &[f64]) -> Option<f64> {
        self.objective.as_ref().map(|f| f(x) + self.psi.eval(x))
    }

    /// `F* = F(x*)` when both the objective and the solution are known.
    pub fn optimal_value(&self) -> Option<f64> {
        match (&self.objective, &self.known_solution) {
            (Some(f), Some(xs)) => Some(f(xs) + self.psi.eval(xs)),
            _ => None,
        }
    }

    /// Sampled validation of monotonicity, derivatives, and the recorded
    /// solution. Zoo constructors call this; failures are construction errors.
    pub fn validate(&self) -> Result<(), ProblemError> {
        let dim = self.dim();
        let mut rng = SplitMix64::new(0x5eed_c0de);
        let domain = self.psi.domain();
        let sample = |rng: &mut SplitMix64| -> Vec<f64> {
            match domain {
                SimpleSet::WholeSpace { .. } => {
                    let g = rng.gaussian_vec(dim);
                    g.iter().zip(&self.default_start).map(|(gi, s)| s + gi).collect()
                }
                _ => domain.sample(rng),
            }
        };
        // Monotonicity on sampled pairs.
        for _ in 0..200 {
            let x = sample(&mut rng);
            let y = sample(&mut rng);
            let dv = sub(&self.operator.eval(&x), &self.operator.eval(&y));
            let dx = sub(&x, &y);
            let m = dot(&dv, &dx);
            if m < -1e-10 * (1.0 + norm2(&dv) * norm2(&dx)) {
                return Err(ProblemError::Validation(format!(
                    "monotonicity violated: <V(x)-V(y), x-y> = {m:.3e}"
                )));
            }
        }
        // First directional derivative vs central finite differences.
        for _ in 0..20 {
            let x = sample(&mut rng);
            let h = rng.gaussian_vec(dim);
            let t = 1e-6 * (1.0 + norm2(&x)) / (1.0 + norm2(&h));
            let mut xp = x.clone();
            let mut xm = x.clone();
            for i in 0..dim {
                xp[i] += t * h[i];
                xm[i] -= t * h[i];
            }
            let fd = scale_vec(&sub(&self.operator.eval(&xp), &self.operator.eval(&xm)), 0.5 / t);
            let jh = self.operator.jacobian(&x).matvec(&h);
            let err = norm2(&sub(&fd, &jh));
            if err > 1e-5 * (1.0 + norm2(&jh)) {
                return Err(ProblemError::Validation(format!(
                    "Jacobian finite-difference mismatch: {err:.3e}"
                )));
            }
        }
        // Strong CVI characterization of the recorded solution.
        if let Some(xs) = &self.known_solution {
            if !self.psi.contains(xs, 1e-8) {
                return Err(ProblemError::Validation("solution infeasible".into()));
            }
            let vxs = self.operator.eval(xs);
            let psi_xs = self.psi.eval(xs);
            let scale = 1.0 + norm2(&vxs);
            for _ in 0..200 {
                let x = sample(&mut rng);
                let lhs = dot(&vxs, &sub(&x, xs)) + self.psi.eval(&x) - psi_xs;
                if lhs < -1e-8 * scale {
                    return Err(ProblemError::Validation(format!(
                        "solution residual {lhs:.3e} at a sampled point"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn scale_vec(v: &[f64], c: f64) -> Vec<f64> {
    v.iter().map(|x| c * x).collect()
}

fn random_matrix(m: usize, n: usize, seed: u64) -> DenseMatrix {
    let mut rng = SplitMix64::new(seed);
    DenseMatrix { rows: m, cols: n, data: rng.uniform_vec(m * n, -1.0, 1.0) }
}

/// Assembles the skew block operator of the game `min_x max_y <A x, y>`
/// on `Delta_n x Delta_m`: `V(x, y) = (A^T y, -A x) = C z`.
fn game_operator_matrix(a: &DenseMatrix) -> DenseMatrix {
    let (m, n) = (a.rows, a.cols);
    let d = n + m;
    let mut c = DenseMatrix::zeros(d, d);
    for i in 0..m {
        for j in 0..n {
            // Block (x-part, y-columns): A^T.
            c.set(j, n + i, a.get(i, j));
            // Block (y-part, x-columns): -A.
            c.set(n + i, j, -a.get(i, j));
        }
    }
    c
}

/// Deterministic blockwise interior start, distinct from block centers.
fn ramp_start(blocks: &[usize]) -> Vec<f64> {
    let mut out = Vec::new();
    for &k in blocks {
        let total: f64 = (1..=k).map(|i| i as f64).sum();
        out.extend((1..=k).map(|i| i as f64 / total));
    }
    out
}

/// Bilinear matrix game as a composite VI on a product of simplices.
///
/// The operator matrix is skew-symmetric, so `<C z, z> = 0`; the Lipschitz
/// constant is `||C|| = sigma_max(A)` and all higher derivative bounds vanish.
/// For dimensions up to 20 per side the equilibrium is computed by the
/// built-in LP oracle and recorded as the reference solution.
pub fn make_bilinear_game(a: &DenseMatrix, spec: InstanceSpec) -> Result<ProblemInstance, ProblemError> {
    if a.rows == 0 || a.cols == 0 {
        return Err(ProblemError::EmptyMatrix);
    }
    if !all_finite(&a.data) {
        return Err(ProblemError::NonFinite);
    }
    let (m, n) = (a.rows, a.cols);
    let c = game_operator_matrix(a);
    let set = SimpleSet::SimplexProduct { blocks: vec![n, m] };
    let known_solution = if m.max(n) <= 20 {
        let (x, y, _value) = solve_matrix_game(a)?;
        let mut z = x;
        z.extend(y);
        Some(z)
    } else {
        None
    };
    let default_start = ramp_start(&[n, m]);
    let r0 = set.sup_distance_from(&default_start);
    let diameter = set.diameter();
    let inst = ProblemInstance {
        spec,
        operator: Arc::new(AffineOperator { matrix: c.clone(), offset: vec![0.0; n + m] }),
        objective: None,
        psi: CompositeTerm::Indicator(set),
        metric: Metric::identity(n + m),
        known_solution,
        default_start,
        constants: SmoothnessConstants {
            m_hat1: Some(Estimate::analytic(a.spectral_norm())),
            m_hat2: Some(Estimate::analytic(0.0)),
            ..Default::default()
        },
        r0,
        diameter,
    };
    inst.validate()?;
    Ok(inst)
}

/// The 2x2 matching-pennies game; equilibrium at the simplex centers.
pub fn make_matching_pennies() -> Result<ProblemInstance, ProblemError> {
    let a = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
    make_bilinear_game(&a, InstanceSpec::MatchingPennies)
}

/// A bilinear game perturbed by a separable cubic monotone term, shifted so
/// that a chosen interior point is an exact solution. The perturbation gives
/// the operator an exact second-derivative bound `M_hat_2 = 2 epsilon` while
/// keeping monotonicity.
pub fn make_curved_game(
    m: usize,
    n: usize,
    seed: u64,
    epsilon: f64,
) -> Result<ProblemInstance, ProblemError> {
    if m == 0 || n == 0 {
        return Err(ProblemError::EmptyMatrix);
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(ProblemError::InvalidParameter("epsilon must be positive".into()));
    }
    let a = random_matrix(m, n, seed);
    let c = game_operator_matrix(&a);
    let d = n + m;
    // Interior anchor solving the perturbed VI exactly.
    let mut rng = SplitMix64::new(seed ^ 0xa5a5_a5a5_a5a5_a5a5);
    let mut anchor = Vec::with_capacity(d);
    for &k in &[n, m] {
        let g = rng.uniform_vec(k, 0.5, 1.5);
        let s: f64 = g.iter().sum();
        anchor.extend(g.into_iter().map(|v| v / s));
    }
    let mut offset = c.matvec(&anchor);
    for i in 0..d {
        offset[i] = -offset[i];
    }
    let set = SimpleSet::SimplexProduct { blocks: vec![n, m] };
    let default_start = ramp_start(&[n, m]);
    let r0 = set.sup_distance_from(&default_start);
    let diameter = set.diameter();
    let inst = ProblemInstance {
        spec: InstanceSpec::CurvedGame { m, n, seed, epsilon },
        operator: Arc::new(CurvedOperator {
            skew: c.clone(),
            epsilon,
            anchor: anchor.clone(),
            offset,
        }),
        objective: None,
        psi: CompositeTerm::Indicator(set),
        metric: Metric::identity(d),
        known_solution: Some(anchor),
        default_start,
        constants: SmoothnessConstants {
            // ||DV|| <= ||C|| + eps max (z_i - anchor_i)^2 on [0, 1]^d.
            m_hat1: Some(Estimate::analytic(a.spectral_norm() + epsilon)),
            // ||D^2 V(z)[h1, h2]|| <= 2 eps max|z_i - anchor_i| <= 2 eps.
            m_hat2: Some(Estimate::analytic(2.0 * epsilon)),
            ..Default::default()
        },
        r0,
        diameter,
    };
    inst.validate()?;
    Ok(inst)
}

/// Unconstrained composite minimization of the chained cubic
/// `f(x) = |x_1|^3 + sum |x_{i+1} - 2 x_i|^3` with minimizer zero. The level
/// set through `x0 = (1, ..., 1)` contains points exponentially far away,
/// which is what makes distance control worth measuring here.
pub fn make_chained_cubic(n: usize) -> Result<ProblemInstance, ProblemError> {
    if n == 0 {
        return Err(ProblemError::InvalidParameter("n must be >= 1".into()));
    }
    let op = Arc::new(ChainedCubicGradient::new(n));
    let stack_norm = op.stack_norm();
    let objective_op = op.clone();
    let default_start = vec![1.0; n];
    let known_solution = vec![0.0; n];
    let r0 = 2.0 * norm2(&sub(&default_start, &known_solution));
    let inst = ProblemInstance {
        spec: InstanceSpec::ChainedCubic { n },
        operator: op,
        objective: Some(Arc::new(move |x: &[f64]| objective_op.objective(x))),
        psi: CompositeTerm::Zero { dim: n },
        metric: Metric::identity(n),
        known_solution: Some(known_solution),
        default_start,
        constants: SmoothnessConstants {
            // ||hess f(x) - hess f(y)|| <= 6 ||J||^3 ||x - y||.
            l2: Some(Estimate::analytic(6.0 * stack_norm.powi(3))),
            ..Default::default()
        },
        r0: Some(r0),
        diameter: None,
    };
    inst.validate()?;
    Ok(inst)
}

/// `V(x) = (S + mu I)(x - x*)` with random skew `S` scaled so the operator's
/// Lipschitz constant is exactly `lips`; the solution is planted inside the
/// feasible ball, so rate checks have an exact reference.
pub fn make_strongly_monotone_affine(
    n: usize,
    mu: f64,
    lips: f64,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    if n == 0 {
        return Err(ProblemError::InvalidParameter("n must be >= 1".into()));
    }
    if !(0.0..=lips).contains(&mu) || !(lips > 0.0) {
        return Err(ProblemError::InvalidParameter(format!(
            "require 0 <= mu <= lips, lips > 0 (got mu={mu}, lips={lips})"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut s = DenseMatrix::zeros(n, n);
    if n > 1 {
        let g = DenseMatrix { rows: n, cols: n, data: rng.gaussian_vec(n * n) };
        for i in 0..n {
            for j in 0..n {
                s.set(i, j, 0.5 * (g.get(i, j) - g.get(j, i)));
            }
        }
        // For skew S: ||S + mu I||^2 = mu^2 + ||S||^2; scale to hit lips.
        let target = (lips * lips - mu * mu).sqrt();
        let cur = s.spectral_norm();
        if cur > 0.0 && target > 0.0 {
            let c = target / cur;
            for v in s.data.iter_mut() {
                *v *= c;
            }
        } else {
            s = DenseMatrix::zeros(n, n);
        }
    }
    let mut mat = s;
    mat.add_scaled_identity(mu);
    let radius = 2.0;
    let ball = SimpleSet::Ball { center: vec![0.0; n], radius };
    let inner = SimpleSet::Ball { center: vec![0.0; n], radius: 1.0 };
    let x_star = inner.sample(&mut rng);
    let offset = scale_vec(&mat.matvec(&x_star), -1.0);
    let mut start = ball.sample(&mut rng);
    if norm2(&sub(&start, &x_star)) < 0.5 {
        for v in start.iter_mut() {
            *v = -*v;
        }
        start = ball.project(&start);
    }
    let r0 = ball.sup_distance_from(&start);
    let inst = ProblemInstance {
        spec: InstanceSpec::StronglyMonotoneAffine { n, mu, lips, seed },
        operator: Arc::new(AffineOperator { matrix: mat, offset }),
        objective: None,
        psi: CompositeTerm::Indicator(ball.clone()),
        metric: Metric::identity(n),
        known_solution: Some(x_star),
        default_start: start,
        constants: SmoothnessConstants {
            m_hat1: Some(Estimate::analytic(lips)),
            m_hat2: Some(Estimate::analytic(0.0)),
            sigma2: if mu > 0.0 { Some(mu) } else { None },
            ..Default::default()
        },
        r0,
        diameter: ball.diameter(),
    };
    inst.validate()?;
    Ok(inst)
}

/// Strongly convex quadratic `f(x) = 1/2 <Q x, x> - <c, x>` over a simple
/// set, with the constrained minimizer computed by the module's own KKT
/// solve at construction.
pub fn make_composite_quadratic(
    n: usize,
    psi_kind: PsiKind,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    if n == 0 {
        return Err(ProblemError::InvalidParameter("n must be >= 1".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let g = DenseMatrix { rows: n, cols: n, data: rng.gaussian_vec(n * n) };
    let mut q = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += g.get(k, i) * g.get(k, j);
            }
            q.set(i, j, s / n as f64 + if i == j { 1.0 } else { 0.0 });
        }
    }
    let c = rng.gaussian_vec(n);
    let lmax = q.spectral_norm();
    // lambda_min via the shifted complement.
    let mut shifted = q.clone();
    for i in 0..n {
        for j in 0..n {
            shifted.set(i, j, -shifted.get(i, j));
        }
    }
    shifted.add_scaled_identity(lmax);
    let lmin = (lmax - shifted.spectral_norm()).max(0.0);

    let set = match psi_kind {
        PsiKind::Zero => SimpleSet::WholeSpace { dim: n },
        PsiKind::Box => SimpleSet::unit_box(n),
        PsiKind::Ball => SimpleSet::Ball { center: vec![0.0; n], radius: 1.0 },
        PsiKind::Simplex => SimpleSet::simplex(n),
    };
    let x_star = quadratic_kkt_solve(&q, &c, &set)?;
    let psi = match psi_kind {
        PsiKind::Zero => CompositeTerm::Zero { dim: n },
        _ => CompositeTerm::Indicator(set.clone()),
    };
    let default_start = set.center_point();
    let r0 = match set.sup_distance_from(&default_start) {
        Some(r) => Some(r),
        None => Some(2.0 * norm2(&sub(&default_start, &x_star)).max(1e-6)),
    };
    let q_obj = q.clone();
    let c_obj = c.clone();
    let inst = ProblemInstance {
        spec: InstanceSpec::CompositeQuadratic { n, psi_kind, seed },
        operator: Arc::new(AffineOperator { matrix: q, offset: scale_vec(&c, -1.0) }),
        objective: Some(Arc::new(move |x: &[f64]| {
            0.5 * dot(&q_obj.matvec(x), x) - dot(&c_obj, x)
        })),
        psi,
        metric: Metric::identity(n),
        known_solution: Some(x_star),
        default_start,
        constants: SmoothnessConstants {
            l1: Some(Estimate::analytic(lmax)),
            l2: Some(Estimate::analytic(0.0)),
            m_hat1: Some(Estimate::analytic(lmax)),
            m_hat2: Some(Estimate::analytic(0.0)),
            sigma2: if lmin > 0.0 { Some(lmin) } else { None },
        },
        r0,
        diameter: set.diameter(),
    };
    inst.validate()?;
    Ok(inst)
}

/// KKT solve of `min 1/2 <Qx, x> - <c, x>` over a simple set: closed form
/// for the whole space, a trust-region-style multiplier search for the ball,
/// and projected gradient to stagnation for polyhedral sets.
fn quadratic_kkt_solve(
    q: &DenseMatrix,
    c: &[f64],
    set: &SimpleSet,
) -> Result<Vec<f64>, ProblemError> {
    let n = c.len();
    match set {
        SimpleSet::WholeSpace { .. } => {
            let chol = Cholesky::new(q)
                .ok_or_else(|| ProblemError::Validation("Q not positive definite".into()))?;
            Ok(chol.solve(c))
        }
        SimpleSet::Ball { center, radius } => {
            debug_assert!(center.iter().all(|v| *v == 0.0));
            let chol = Cholesky::new(q)
                .ok_or_else(|| ProblemError::Validation("Q not positive definite".into()))?;
            let unconstrained = chol.solve(c);
            if norm2(&unconstrained) <= *radius {
                return Ok(unconstrained);
            }
            // ||x(lam)|| with x(lam) = (Q + lam I)^-1 c decreases in lam.
            let solve_at = |lam: f64| -> Vec<f64> {
                let mut qs = q.clone();
                qs.add_scaled_identity(lam);
                Cholesky::new(&qs).expect("shifted SPD").solve(c)
            };
            let mut lo = 0.0;
            let mut hi = 1.0;
            while norm2(&solve_at(hi)) > *radius {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if norm2(&solve_at(mid)) > *radius {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(solve_at(0.5 * (lo + hi)))
        }
        _ => {
            // Projected gradient on a strongly convex objective: linear rate.
            let l = q.spectral_norm().max(1e-12);
            let mut x = set.center_point();
            for _ in 0..2_000_000 {
                let mut grad = q.matvec(&x);
                for i in 0..n {
                    grad[i] -= c[i];
                }
                let mut y = x.clone();
                for i in 0..n {
                    y[i] -= grad[i] / l;
                }
                let next = set.project(&y);
                let moved = norm2(&sub(&next, &x));
                x = next;
                if moved <= 1e-15 * (1.0 + norm2(&x)) {
                    break;
                }
            }
            Ok(x)
        }
    }
}

/// The 2-D rotation field `V(z) = (z_2, -z_1)` on a centered box: the classic
/// example where plain gradient iterations spiral away from the solution at
/// the origin while averaged points still converge.
pub fn make_skew_rotation(half_width: f64) -> Result<ProblemInstance, ProblemError> {
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(ProblemError::InvalidParameter("half_width must be positive".into()));
    }
    let c = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
    let set = SimpleSet::Box { lower: vec![-half_width; 2], upper: vec![half_width; 2] };
    let default_start = vec![0.1, 0.0];
    let r0 = set.sup_distance_from(&default_start);
    let inst = ProblemInstance {
        spec: InstanceSpec::SkewRotation { half_width },
        operator: Arc::new(AffineOperator { matrix: c, offset: vec![0.0; 2] }),
        objective: None,
        psi: CompositeTerm::Indicator(set.clone()),
        metric: Metric::identity(2),
        known_solution: Some(vec![0.0, 0.0]),
        default_start,
        constants: SmoothnessConstants {
            m_hat1: Some(Estimate::analytic(1.0)),
            m_hat2: Some(Estimate::analytic(0.0)),
            ..Default::default()
        },
        r0,
        diameter: set.diameter(),
    };
    inst.validate()?;
    Ok(inst)
}

/// Equilibrium of the matrix game `min_{x in Delta_n} max_{y in Delta_m}
/// <A x, y>` by a dense simplex LP (Bland's rule, slack basis start).
///
/// Returns `(x, y, value)`. Intended for desk-scale payoff matrices.
pub fn solve_matrix_game(a: &DenseMatrix) -> Result<(Vec<f64>, Vec<f64>, f64), ProblemError> {
    let (m, n) = (a.rows, a.cols);
    if m == 0 || n == 0 {
        return Err(ProblemError::EmptyMatrix);
    }
    // Shift payoffs positive so the game value is positive.
    let min_entry = a.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min_entry;
    // LP: max 1'p  s.t.  (A + shift) p <= 1, p >= 0.
    // Then x = p / (1'p), value = 1 / (1'p) - shift, and the duals at the
    // slack columns give q with y = q / (1'q).
    let cols = n + m;
    let mut tab = vec![vec![0.0f64; cols + 1]; m];
    for i in 0..m {
        for j in 0..n {
            tab[i][j] = a.get(i, j) + shift;
        }
        tab[i][n + i] = 1.0;
        tab[i][cols] = 1.0;
    }
    let mut obj = vec![0.0f64; cols + 1];
    for j in 0..n {
        obj[j] = -1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    for _round in 0..100_000 {
        // Bland: first column with a negative reduced cost.
        let Some(enter) = (0..cols).find(|&j| obj[j] < -1e-11) else {
            break;
        };
        // Ratio test, ties by smallest basis index.
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for (i, row) in tab.iter().enumerate() {
            if row[enter] > 1e-11 {
                let ratio = row[cols] / row[enter];
                let better = ratio < best - 1e-13
                    || ((ratio - best).abs() <= 1e-13
                        && leave.map(|l| basis[i] < basis[l]).unwrap_or(false));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return Err(ProblemError::GameOracle("unbounded LP".into()));
        };
        // Pivot.
        let piv = tab[leave][enter];
        for v in tab[leave].iter_mut() {
            *v /= piv;
        }
        for i in 0..m {
            if i != leave {
                let f = tab[i][enter];
                if f != 0.0 {
                    for j in 0..=cols {
                        tab[i][j] -= f * tab[leave][j];
                    }
                }
            }
        }
        let f = obj[enter];
        if f != 0.0 {
            for j in 0..=cols {
                obj[j] -= f * tab[leave][j];
            }
        }
        basis[leave] = enter;
    }
    let mut p = vec![0.0f64; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            p[b] = tab[i][cols];
        }
    }
    let sum_p: f64 = p.iter().sum();
    if sum_p <= 0.0 {
        return Err(ProblemError::GameOracle("degenerate primal solution".into()));
    }
    let value = 1.0 / sum_p - shift;
    let x: Vec<f64> = p.iter().map(|v| v / sum_p).collect();
    // Duals live in the slack reduced costs.
    let mut qdual = vec![0.0f64; m];
    for i in 0..m {
        qdual[i] = obj[n + i].max(0.0);
    }
    let sum_q: f64 = qdual.iter().sum();
    if sum_q <= 0.0 {
        return Err(ProblemError::GameOracle("degenerate dual solution".into()));
    }
    let y: Vec<f64> = qdual.iter().map(|v| v / sum_q).collect();
    Ok((x, y, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Slow independent oracle: fictitious play for zero-sum games.
    fn fictitious_play(a: &DenseMatrix, rounds: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let (m, n) = (a.rows, a.cols);
        let mut x_count = vec![0.0f64; n];
        let mut y_count = vec![0.0f64; m];
        let mut x_payoff = vec![0.0f64; n]; // cumulative <A e_j, y-history>
        let mut y_payoff = vec![0.0f64; m];
        x_count[0] = 1.0;
        y_count[0] = 1.0;
        for j in 0..n {
            x_payoff[j] += a.get(0, j);
        }
        for i in 0..m {
            y_payoff[i] += a.get(i, 0);
        }
        for _ in 0..rounds {
            // x minimizes, y maximizes.
            let bx = (0..n)
                .min_by(|&i, &j| x_payoff[i].partial_cmp(&x_payoff[j]).unwrap())
                .unwrap();
            let by = (0..m)
                .max_by(|&i, &j| y_payoff[i].partial_cmp(&y_payoff[j]).unwrap())
                .unwrap();
            x_count[bx] += 1.0;
            y_count[by] += 1.0;
            for j in 0..n {
                x_payoff[j] += a.get(by, j);
            }
            for i in 0..m {
                y_payoff[i] += a.get(i, bx);
            }
        }
        let tx: f64 = x_count.iter().sum();
        let ty: f64 = y_count.iter().sum();
        let x: Vec<f64> = x_count.iter().map(|v| v / tx).collect();
        let y: Vec<f64> = y_count.iter().map(|v| v / ty).collect();
        // Value estimate from best responses.
        let ax = a.matvec(&x);
        let upper = ax.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let aty = a.matvec_t(&y);
        let lower = aty.iter().cloned().fold(f64::INFINITY, f64::min);
        (x, y, 0.5 * (upper + lower))
    }

    #[test]
    fn matching_pennies_equilibrium() {
        let inst = make_matching_pennies().unwrap();
        let z = inst.known_solution.as_ref().unwrap();
        for v in z {
            assert!((v - 0.5).abs() < 1e-10, "z = {z:?}");
        }
        // Game value zero by symmetry.
        let a = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let (_, _, value) = solve_matrix_game(&a).unwrap();
        assert!(value.abs() < 1e-12);
    }

    #[test]
    fn game_operator_is_skew() {
        let inst = InstanceSpec::BilinearGame { m: 4, n: 3, seed: 9 }.build().unwrap();
        let mut rng = SplitMix64::new(2);
        let d = inst.dim();
        for _ in 0..100 {
            let z = rng.gaussian_vec(d);
            let w = rng.gaussian_vec(d);
            let vz = inst.operator.eval(&z);
            let vw = inst.operator.eval(&w);
            // Skew symmetry: <V(z) - V(w), z - w> = 0.
            assert!(dot(&sub(&vz, &vw), &sub(&z, &w)).abs() < 1e-10);
            // And <C z, z> = 0 exactly for the offsets-free operator.
            assert!(dot(&vz, &z).abs() < 1e-10);
        }
    }

    #[test]
    fn lp_oracle_agrees_with_fictitious_play() {
        let a = random_matrix(6, 5, 123);
        let (x, y, value) = solve_matrix_game(&a).unwrap();
        let (_fx, _fy, fvalue) = fictitious_play(&a, 200_000);
        assert!((value - fvalue).abs() < 5e-3, "lp={value} fp={fvalue}");
        // Equilibrium residual: best responses bracket the value tightly.
        let ax = a.matvec(&x);
        let upper = ax.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let aty = a.matvec_t(&y);
        let lower = aty.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(upper - value <= 1e-10);
        assert!(value - lower <= 1e-10);
    }

    #[test]
    fn random_game_solution_satisfies_cvi() {
        let inst = InstanceSpec::BilinearGame { m: 10, n: 10, seed: 1 }.build().unwrap();
        assert!(inst.known_solution.is_some());
        // validate() runs at construction; re-run to be explicit.
        inst.validate().unwrap();
    }

    #[test]
    fn chained_cubic_paper_values() {
        for n in 2..=10 {
            let inst = make_chained_cubic(n).unwrap();
            let f = inst.objective.as_ref().unwrap();
            let ones = vec![1.0; n];
            assert!((f(&ones) - n as f64).abs() < 1e-12);
            let xbar: Vec<f64> = (1..=n).map(|i| (1u64 << i) as f64 - 1.0).collect();
            assert!((f(&xbar) - n as f64).abs() < 1e-9);
            let norm_sq = norm2(&xbar).powi(2);
            let p2n = (1u64 << n) as f64;
            let closed = 8.0 / 3.0 * (p2n - 1.0) * (p2n / 2.0 - 1.0) + n as f64;
            assert!((norm_sq - closed).abs() < 1e-6 * closed.max(1.0));
            // Minimizer.
            let zero = vec![0.0; n];
            assert_eq!(f(&zero), 0.0);
            assert!(norm2(&inst.operator.eval(&zero)) == 0.0);
        }
    }

    #[test]
    fn strongly_monotone_constants() {
        let inst = InstanceSpec::StronglyMonotoneAffine { n: 12, mu: 0.3, lips: 2.0, seed: 4 }
            .build()
            .unwrap();
        let mut rng = SplitMix64::new(8);
        let mut min_ratio = f64::INFINITY;
        let mut max_ratio: f64 = 0.0;
        for _ in 0..500 {
            let x = rng.gaussian_vec(12);
            let y = rng.gaussian_vec(12);
            let dv = sub(&inst.operator.eval(&x), &inst.operator.eval(&y));
            let dx = sub(&x, &y);
            let nn = dot(&dx, &dx);
            min_ratio = min_ratio.min(dot(&dv, &dx) / nn);
            max_ratio = max_ratio.max(norm2(&dv) / nn.sqrt());
        }
        assert!(min_ratio >= 0.3 - 1e-8, "sampled modulus {min_ratio}");
        assert!(max_ratio <= 2.0 + 1e-8, "sampled Lipschitz {max_ratio}");
        assert_eq!(inst.constants.sigma2, Some(0.3));
    }

    #[test]
    fn skew_only_instance_not_uniformly_monotone() {
        let inst = InstanceSpec::StronglyMonotoneAffine { n: 6, mu: 0.0, lips: 1.0, seed: 2 }
            .build()
            .unwrap();
        assert!(inst.constants.sigma2.is_none());
    }

    #[test]
    fn mu_above_lips_rejected() {
        assert!(make_strongly_monotone_affine(4, 2.0, 1.0, 0).is_err());
    }

    #[test]
    fn quadratic_kkt_ball_case() {
        // Q = I, c = (2, 0), psi = Ind(unit ball): x* = (1, 0).
        let q = DenseMatrix::identity(2);
        let set = SimpleSet::Ball { center: vec![0.0, 0.0], radius: 1.0 };
        let x = quadratic_kkt_solve(&q, &[2.0, 0.0], &set).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-10 && x[1].abs() < 1e-10);
        // Centered case: c = 0 -> x* = 0.
        let x = quadratic_kkt_solve(&q, &[0.0, 0.0], &set).unwrap();
        assert!(norm2(&x) < 1e-12);
    }

    #[test]
    fn quadratic_unconstrained_solution() {
        let inst = InstanceSpec::CompositeQuadratic { n: 8, psi_kind: PsiKind::Zero, seed: 5 }
            .build()
            .unwrap();
        let xs = inst.known_solution.as_ref().unwrap();
        let grad = inst.operator.eval(xs);
        assert!(norm2(&grad) < 1e-10 * (1.0 + norm2(xs)));
    }

    #[test]
    fn quadratic_simplex_and_box_kkt() {
        for kind in [PsiKind::Box, PsiKind::Simplex] {
            let inst = InstanceSpec::CompositeQuadratic { n: 6, psi_kind: kind, seed: 7 }
                .build()
                .unwrap();
            let xs = inst.known_solution.as_ref().unwrap();
            let f = inst.objective.as_ref().unwrap();
            let set = inst.psi.domain();
            let mut rng = SplitMix64::new(99);
            for _ in 0..300 {
                let p = set.sample(&mut rng);
                assert!(f(&p) >= f(xs) - 1e-9);
            }
        }
    }

    #[test]
    fn instances_deterministic_in_seed() {
        let a = InstanceSpec::BilinearGame { m: 5, n: 7, seed: 42 }.build().unwrap();
        let b = InstanceSpec::BilinearGame { m: 5, n: 7, seed: 42 }.build().unwrap();
        let mut rng = SplitMix64::new(0);
        let z = rng.gaussian_vec(12);
        assert_eq!(a.operator.eval(&z), b.operator.eval(&z));
        assert_eq!(a.known_solution, b.known_solution);
        assert_eq!(a.default_start, b.default_start);
    }

    #[test]
    fn affine_second_derivative_identically_zero() {
        let inst = InstanceSpec::BilinearGame { m: 3, n: 3, seed: 0 }.build().unwrap();
        let mut rng = SplitMix64::new(1);
        let z = rng.gaussian_vec(6);
        let h1 = rng.gaussian_vec(6);
        let h2 = rng.gaussian_vec(6);
        let d2 = inst.operator.second_directional(&z, &h1, &h2);
        assert!(d2.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn curved_game_exact_solution_and_monotone() {
        let inst = InstanceSpec::CurvedGame { m: 10, n: 10, seed: 3, epsilon: 0.5 }
            .build()
            .unwrap();
        let z = inst.known_solution.as_ref().unwrap();
        assert!(norm2(&inst.operator.eval(z)) < 1e-12);
        assert!((inst.constants.m_hat2.unwrap().value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_game_rejected() {
        let a = DenseMatrix::zeros(0, 3);
        assert!(make_bilinear_game(&a, InstanceSpec::BilinearGame { m: 0, n: 3, seed: 0 }).is_err());
    }

    #[test]
    fn degenerate_games_build() {
        // All-zero payoffs: every profile is an equilibrium; the oracle must
        // still return a valid one.
        let a = DenseMatrix::zeros(3, 4);
        let inst =
            make_bilinear_game(&a, InstanceSpec::BilinearGame { m: 3, n: 4, seed: 0 }).unwrap();
        assert!(inst.known_solution.is_some());
        // One-by-one game: both simplices are single points.
        let a = DenseMatrix::from_rows(&[vec![0.7]]);
        let inst =
            make_bilinear_game(&a, InstanceSpec::BilinearGame { m: 1, n: 1, seed: 0 }).unwrap();
        let z = inst.known_solution.as_ref().unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12 && (z[1] - 1.0).abs() < 1e-12);
        let (_, _, value) = solve_matrix_game(&a).unwrap();
        assert!((value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn non_finite_game_rejected() {
        let mut a = DenseMatrix::zeros(2, 2);
        a.set(0, 1, f64::NAN);
        assert!(matches!(
            make_bilinear_game(&a, InstanceSpec::BilinearGame { m: 2, n: 2, seed: 0 }),
            Err(ProblemError::NonFinite)
        ));
    }

    #[test]
    fn composite_term_general_l1_prox() {
        // psi(x) = ||x||_1 with soft-threshold prox under diagonal metrics.
        let value: ScalarFn = Arc::new(|x: &[f64]| x.iter().map(|v| v.abs()).sum());
        let prox: ProxFn = Arc::new(|z: &[f64], w: f64, metric: &Metric| {
            let weights: Vec<f64> = match metric.diagonal_weights() {
                Some(d) => d.to_vec(),
                None => vec![1.0; z.len()],
            };
            z.iter()
                .zip(&weights)
                .map(|(zi, bi)| {
                    let thr = w / bi;
                    if *zi > thr {
                        zi - thr
                    } else if *zi < -thr {
                        zi + thr
                    } else {
                        0.0
                    }
                })
                .collect()
        });
        let psi = CompositeTerm::General {
            value,
            prox,
            conjugate: None,
            domain: SimpleSet::WholeSpace { dim: 3 },
        };
        assert_eq!(psi.eval(&[1.0, -2.0, 0.5]), 3.5);
        // Indicator kind: zero on the set, +inf off it.
        let ind = CompositeTerm::Indicator(SimpleSet::simplex(2));
        assert_eq!(ind.eval(&[0.25, 0.75]), 0.0);
        assert_eq!(ind.eval(&[0.9, 0.9]), f64::INFINITY);
        // Convexity on sampled segments.
        let mut rng = SplitMix64::new(6);
        for _ in 0..200 {
            let x = rng.gaussian_vec(3);
            let y = rng.gaussian_vec(3);
            let lam = rng.next_f64();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
            assert!(psi.eval(&mix) <= lam * psi.eval(&x) + (1.0 - lam) * psi.eval(&y) + 1e-10);
        }
    }
}
