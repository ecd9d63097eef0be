//! Simple feasible sets with closed-form projections and support functions.
//!
//! The supported sets are the whole space, boxes, Euclidean balls, and the
//! standard simplex (and products of simplices for saddle-point problems).
//! Projections are exact: coordinate clamping for boxes, radial scaling for
//! balls, sort-and-threshold for the simplex. Under a diagonal metric the
//! weighted variants are solved by exact breakpoint scans or safeguarded
//! scalar root finding on the multiplier.

use crate::linalg::{dot, norm2, sub};
use crate::metric::Metric;
use crate::rng::SplitMix64;

/// A closed convex set with cheap projection and linear maximization.
#[derive(Debug, Clone, PartialEq)]
pub enum SimpleSet {
    /// All of `R^dim`.
    WholeSpace { dim: usize },
    /// `{ x : lower <= x <= upper }` coordinate-wise.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{ x : ||x - center||_2 <= radius }`.
    Ball { center: Vec<f64>, radius: f64 },
    /// Product of standard simplices with the given block sizes.
    /// A single block of size `n` is the standard simplex in `R^n`.
    SimplexProduct { blocks: Vec<usize> },
}

impl SimpleSet {
    pub fn simplex(dim: usize) -> Self {
        SimpleSet::SimplexProduct { blocks: vec![dim] }
    }

    pub fn unit_box(dim: usize) -> Self {
        SimpleSet::Box { lower: vec![-1.0; dim], upper: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        match self {
            SimpleSet::WholeSpace { dim } => *dim,
            SimpleSet::Box { lower, .. } => lower.len(),
            SimpleSet::Ball { center, .. } => center.len(),
            SimpleSet::SimplexProduct { blocks } => blocks.iter().sum(),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            SimpleSet::WholeSpace { .. } => true,
            SimpleSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(xi, (l, u))| *xi >= l - tol && *xi <= u + tol),
            SimpleSet::Ball { center, radius } => norm2(&sub(x, center)) <= radius + tol,
            SimpleSet::SimplexProduct { blocks } => {
                let mut off = 0;
                for &k in blocks {
                    let block = &x[off..off + k];
                    if block.iter().any(|v| *v < -tol) {
                        return false;
                    }
                    let s: f64 = block.iter().sum();
                    if (s - 1.0).abs() > tol * (k as f64) {
                        return false;
                    }
                    off += k;
                }
                true
            }
        }
    }

    /// Standard Euclidean projection (`B = I`).
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        match self {
            SimpleSet::WholeSpace { .. } => z.to_vec(),
            SimpleSet::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(zi, (l, u))| zi.max(*l).min(*u))
                .collect(),
            SimpleSet::Ball { center, radius } => {
                let d = sub(z, center);
                let n = norm2(&d);
                if n <= *radius {
                    z.to_vec()
                } else {
                    let c = radius / n;
                    center.iter().zip(&d).map(|(ci, di)| ci + c * di).collect()
                }
            }
            SimpleSet::SimplexProduct { blocks } => {
                let mut out = Vec::with_capacity(z.len());
                let mut off = 0;
                for &k in blocks {
                    out.extend(project_simplex(&z[off..off + k]));
                    off += k;
                }
                out
            }
        }
    }

    /// Projection in the metric `||.||_B`, i.e. `argmin_{x in S} ||x - z||_B`.
    ///
    /// Exact for the identity metric, for diagonal metrics (breakpoint scan /
    /// scalar multiplier search), and for the whole space. A dense metric with
    /// a constrained set falls back to a linearly convergent projected descent
    /// on the strongly convex objective.
    pub fn project_metric(&self, z: &[f64], metric: &Metric) -> Vec<f64> {
        if metric.is_identity() || matches!(self, SimpleSet::WholeSpace { .. }) {
            return self.project(z);
        }
        match (self, metric.diagonal_weights()) {
            // Weighted objective separates over coordinates.
            (SimpleSet::Box { .. }, Some(_)) => self.project(z),
            (SimpleSet::SimplexProduct { blocks }, Some(w)) => {
                let mut out = Vec::with_capacity(z.len());
                let mut off = 0;
                for &k in blocks {
                    out.extend(project_simplex_weighted(&z[off..off + k], &w[off..off + k]));
                    off += k;
                }
                out
            }
            (SimpleSet::Ball { center, radius }, Some(w)) => {
                project_ball_weighted(z, center, *radius, w)
            }
            _ => project_dense_metric(self, z, metric),
        }
    }

    /// `max { <s, x> : x in S }`; `None` when unbounded above.
    pub fn support(&self, s: &[f64]) -> Option<f64> {
        match self {
            SimpleSet::WholeSpace { .. } => {
                if s.iter().all(|v| *v == 0.0) {
                    Some(0.0)
                } else {
                    None
                }
            }
            _ => Some(dot(s, &self.argmax_linear(s))),
        }
    }

    /// A maximizer of `<s, x>` over the set (the set must be bounded).
    pub fn argmax_linear(&self, s: &[f64]) -> Vec<f64> {
        match self {
            SimpleSet::WholeSpace { .. } => {
                panic!("argmax_linear on an unbounded set")
            }
            SimpleSet::Box { lower, upper } => s
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(si, (l, u))| if *si >= 0.0 { *u } else { *l })
                .collect(),
            SimpleSet::Ball { center, radius } => {
                let n = norm2(s);
                if n == 0.0 {
                    center.clone()
                } else {
                    center.iter().zip(s).map(|(ci, si)| ci + radius * si / n).collect()
                }
            }
            SimpleSet::SimplexProduct { blocks } => {
                let mut out = vec![0.0; s.len()];
                let mut off = 0;
                for &k in blocks {
                    let mut best = off;
                    for j in off..off + k {
                        if s[j] > s[best] {
                            best = j;
                        }
                    }
                    out[best] = 1.0;
                    off += k;
                }
                out
            }
        }
    }

    /// Diameter `sup { ||x - y||_2 : x, y in S }`; `None` when unbounded.
    pub fn diameter(&self) -> Option<f64> {
        match self {
            SimpleSet::WholeSpace { .. } => None,
            SimpleSet::Box { lower, upper } => Some(norm2(&sub(upper, lower))),
            SimpleSet::Ball { radius, .. } => Some(2.0 * radius),
            SimpleSet::SimplexProduct { blocks } => {
                // Per block the farthest pair is two vertices, distance sqrt(2).
                let k = blocks.iter().filter(|b| **b > 1).count();
                Some((2.0 * k as f64).sqrt())
            }
        }
    }

    /// `sup { ||x - c||_2 : x in S }`; `None` when unbounded.
    pub fn sup_distance_from(&self, c: &[f64]) -> Option<f64> {
        match self {
            SimpleSet::WholeSpace { .. } => None,
            SimpleSet::Box { lower, upper } => {
                let mut s = 0.0;
                for i in 0..c.len() {
                    let d = (c[i] - lower[i]).abs().max((upper[i] - c[i]).abs());
                    s += d * d;
                }
                Some(s.sqrt())
            }
            SimpleSet::Ball { center, radius } => Some(norm2(&sub(c, center)) + radius),
            SimpleSet::SimplexProduct { blocks } => {
                // The farthest point of a polytope from c is a vertex; blocks
                // are independent so maximize per block.
                let mut s = 0.0;
                let mut off = 0;
                for &k in blocks {
                    let mut best: f64 = 0.0;
                    for v in 0..k {
                        let mut d = 0.0;
                        for j in 0..k {
                            let xj = if j == v { 1.0 } else { 0.0 };
                            d += (xj - c[off + j]) * (xj - c[off + j]);
                        }
                        best = best.max(d);
                    }
                    s += best;
                    off += k;
                }
                Some(s.sqrt())
            }
        }
    }

    /// The natural centroid-ish interior point used as a default start.
    pub fn center_point(&self) -> Vec<f64> {
        match self {
            SimpleSet::WholeSpace { dim } => vec![0.0; *dim],
            SimpleSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
            SimpleSet::Ball { center, .. } => center.clone(),
            SimpleSet::SimplexProduct { blocks } => {
                let mut out = Vec::new();
                for &k in blocks {
                    out.extend(std::iter::repeat_n(1.0 / k as f64, k));
                }
                out
            }
        }
    }

    /// A deterministic random feasible point.
    pub fn sample(&self, rng: &mut SplitMix64) -> Vec<f64> {
        match self {
            SimpleSet::WholeSpace { dim } => rng.gaussian_vec(*dim),
            SimpleSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| rng.uniform(*l, *u))
                .collect(),
            SimpleSet::Ball { center, radius } => {
                let d = center.len();
                let g = rng.gaussian_vec(d);
                let n = norm2(&g).max(f64::MIN_POSITIVE);
                let r = radius * rng.next_f64().powf(1.0 / d as f64);
                center.iter().zip(&g).map(|(c, gi)| c + r * gi / n).collect()
            }
            SimpleSet::SimplexProduct { blocks } => {
                let mut out = Vec::new();
                for &k in blocks {
                    // Exponential spacings give the uniform simplex measure.
                    let e: Vec<f64> = (0..k)
                        .map(|_| -rng.next_f64().max(f64::MIN_POSITIVE).ln())
                        .collect();
                    let s: f64 = e.iter().sum();
                    out.extend(e.into_iter().map(|v| v / s));
                }
                out
            }
        }
    }
}

/// Euclidean projection onto the standard simplex by sort-and-threshold.
pub fn project_simplex(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut u = z.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut theta = 0.0;
    let mut k = 0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if *ui - t > 0.0 {
            theta = t;
            k = i + 1;
        }
    }
    debug_assert!(k > 0 || n == 0);
    z.iter().map(|zi| (zi - theta).max(0.0)).collect()
}

/// Projection onto the simplex in the weighted norm `sum w_i (x_i - z_i)^2`.
///
/// KKT gives `x_i = max(0, z_i - lambda / w_i)`; the breakpoints for lambda
/// are `z_i w_i`, scanned in decreasing order.
fn project_simplex_weighted(z: &[f64], w: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut bp: Vec<usize> = (0..n).collect();
    bp.sort_by(|&i, &j| (z[j] * w[j]).partial_cmp(&(z[i] * w[i])).unwrap());
    // With the active set S: sum_{i in S} (z_i - lambda / w_i) = 1.
    let mut sum_z = 0.0;
    let mut sum_inv_w = 0.0;
    let mut lambda = 0.0;
    for (count, &i) in bp.iter().enumerate() {
        sum_z += z[i];
        sum_inv_w += 1.0 / w[i];
        let cand = (sum_z - 1.0) / sum_inv_w;
        // Valid while every member of the active set stays positive, i.e.
        // cand < z_j w_j for all j in S; the tightest is the last added.
        let next_bp = if count + 1 < n {
            z[bp[count + 1]] * w[bp[count + 1]]
        } else {
            f64::NEG_INFINITY
        };
        if cand >= next_bp {
            lambda = cand;
            break;
        }
        lambda = cand;
    }
    z.iter()
        .zip(w)
        .map(|(zi, wi)| (zi - lambda / wi).max(0.0))
        .collect()
}

/// Projection onto a Euclidean ball in a weighted norm, via the multiplier
/// equation `x_i = (w_i z_i + lam c_i) / (w_i + lam)`, `||x - c|| = r`.
fn project_ball_weighted(z: &[f64], c: &[f64], r: f64, w: &[f64]) -> Vec<f64> {
    let d = sub(z, c);
    if norm2(&d) <= r {
        return z.to_vec();
    }
    // x - c = w_i d_i / (w_i + lam); phi(lam) = ||x - c||^2 - r^2 decreasing.
    let phi = |lam: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..z.len() {
            let t = w[i] * d[i] / (w[i] + lam);
            s += t * t;
        }
        s - r * r
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while phi(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e18 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lam = 0.5 * (lo + hi);
    (0..z.len())
        .map(|i| c[i] + w[i] * d[i] / (w[i] + lam))
        .collect()
}

/// Projected descent for `min_{x in S} 1/2 ||x - z||_B^2` with dense `B`.
fn project_dense_metric(set: &SimpleSet, z: &[f64], metric: &Metric) -> Vec<f64> {
    let l = metric.largest_eigenvalue();
    let mut x = set.project(z);
    let step = 1.0 / l;
    for _ in 0..200_000 {
        let grad = metric.apply(&sub(&x, z));
        let mut y = x.clone();
        for i in 0..y.len() {
            y[i] -= step * grad[i];
        }
        let next = set.project(&y);
        let moved = norm2(&sub(&next, &x));
        x = next;
        if moved <= 1e-14 * (1.0 + norm2(&x)) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Metric;

    fn check_projection_optimality(set: &SimpleSet, z: &[f64], p: &[f64], rng: &mut SplitMix64) {
        assert!(set.contains(p, 1e-9));
        let dz = norm2(&sub(p, z));
        for _ in 0..50 {
            let q = set.sample(rng);
            assert!(norm2(&sub(&q, z)) >= dz - 1e-9);
        }
    }

    #[test]
    fn simplex_projection_matches_known_cases() {
        // Interior point stays put.
        let p = project_simplex(&[0.25, 0.75]);
        assert!((p[0] - 0.25).abs() < 1e-14 && (p[1] - 0.75).abs() < 1e-14);
        // Projection of (-1/2, 1/2) onto the 2-simplex is (0, 1).
        let p = project_simplex(&[-0.5, 0.5]);
        assert!(p[0].abs() < 1e-14 && (p[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn projections_are_optimal_on_random_points() {
        let mut rng = SplitMix64::new(17);
        let sets = [
            SimpleSet::unit_box(4),
            SimpleSet::Ball { center: vec![0.5, -0.5, 0.0], radius: 1.3 },
            SimpleSet::simplex(5),
            SimpleSet::SimplexProduct { blocks: vec![2, 3] },
        ];
        for set in &sets {
            for _ in 0..40 {
                let z = rng.gaussian_vec(set.dim());
                let p = set.project(&z);
                check_projection_optimality(set, &z, &p, &mut rng);
            }
        }
    }

    #[test]
    fn weighted_simplex_projection_satisfies_kkt() {
        let mut rng = SplitMix64::new(5);
        let w = vec![4.0, 1.0, 2.5, 0.7];
        let metric = Metric::diagonal(w.clone()).unwrap();
        let set = SimpleSet::simplex(4);
        for _ in 0..100 {
            let z = rng.gaussian_vec(4);
            let x = set.project_metric(&z, &metric);
            assert!(set.contains(&x, 1e-10));
            // Weighted objective must beat any sampled feasible point.
            let obj = |y: &[f64]| -> f64 {
                y.iter()
                    .zip(&z)
                    .zip(&w)
                    .map(|((yi, zi), wi)| wi * (yi - zi) * (yi - zi))
                    .sum()
            };
            let fx = obj(&x);
            for _ in 0..50 {
                let q = set.sample(&mut rng);
                assert!(obj(&q) >= fx - 1e-9);
            }
        }
    }

    #[test]
    fn weighted_ball_projection_hits_radius() {
        let w = vec![3.0, 0.5];
        let metric = Metric::diagonal(w.clone()).unwrap();
        let set = SimpleSet::Ball { center: vec![0.0, 0.0], radius: 1.0 };
        let z = vec![2.0, 2.0];
        let x = set.project_metric(&z, &metric);
        assert!((norm2(&x) - 1.0).abs() < 1e-9);
        // Optimality against samples.
        let mut rng = SplitMix64::new(1);
        let obj = |y: &[f64]| w[0] * (y[0] - 2.0).powi(2) + w[1] * (y[1] - 2.0).powi(2);
        for _ in 0..200 {
            let q = set.sample(&mut rng);
            assert!(obj(&q) >= obj(&x) - 1e-9);
        }
    }

    #[test]
    fn dense_metric_projection_is_optimal() {
        // Dense SPD metric with a ball: the iterative fallback must match
        // the metric-weighted optimality condition on samples.
        let mut rng = SplitMix64::new(29);
        let n = 4;
        let g = crate::linalg::DenseMatrix { rows: n, cols: n, data: rng.gaussian_vec(n * n) };
        let mut b = crate::linalg::DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += g.get(k, i) * g.get(k, j);
                }
                b.set(i, j, s + if i == j { 0.5 } else { 0.0 });
            }
        }
        let metric = Metric::dense(b).unwrap();
        let set = SimpleSet::Ball { center: vec![0.0; n], radius: 1.0 };
        for _ in 0..20 {
            let z = rng.gaussian_vec(n);
            let p = set.project_metric(&z, &metric);
            assert!(set.contains(&p, 1e-9));
            let dp = metric.norm(&sub(&p, &z));
            for _ in 0..50 {
                let q = set.sample(&mut rng);
                assert!(metric.norm(&sub(&q, &z)) >= dp - 1e-7);
            }
        }
    }

    #[test]
    fn support_function_values() {
        let set = SimpleSet::simplex(3);
        assert!((set.support(&[1.0, 5.0, -2.0]).unwrap() - 5.0).abs() < 1e-14);
        let b = SimpleSet::unit_box(2);
        assert!((b.support(&[2.0, -3.0]).unwrap() - 5.0).abs() < 1e-14);
        let ball = SimpleSet::Ball { center: vec![1.0, 0.0], radius: 2.0 };
        assert!((ball.support(&[0.0, 1.0]).unwrap() - 2.0).abs() < 1e-14);
        let w = SimpleSet::WholeSpace { dim: 2 };
        assert_eq!(w.support(&[0.0, 1.0]), None);
        assert_eq!(w.support(&[0.0, 0.0]), Some(0.0));
    }

    #[test]
    fn diameters_and_sup_distances() {
        let s = SimpleSet::simplex(2);
        assert!((s.diameter().unwrap() - 2.0f64.sqrt()).abs() < 1e-14);
        let p = SimpleSet::SimplexProduct { blocks: vec![2, 2] };
        assert!((p.diameter().unwrap() - 2.0).abs() < 1e-14);
        let c = p.center_point();
        assert!((p.sup_distance_from(&c).unwrap() - 1.0).abs() < 1e-14);
    }
}
