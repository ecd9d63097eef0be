//! Property tests for the geometric primitives and step algebra.

use proptest::prelude::*;

use rgvi::linalg::{dot, norm2, sub};
use rgvi::metric::{prox_step, Metric, PsiMode};
use rgvi::problems::CompositeTerm;
use rgvi::rng::SplitMix64;
use rgvi::sets::{project_simplex, SimpleSet};
use rgvi::steps::{tech_lemma_value, universal_stepsize};

fn vec_strategy(n: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, n)
}

proptest! {
    /// The simplex projection is feasible and beats every sampled feasible
    /// point in Euclidean distance.
    #[test]
    fn simplex_projection_is_optimal(z in vec_strategy(6, 5.0), seed in 0u64..1000) {
        let p = project_simplex(&z);
        let set = SimpleSet::simplex(6);
        prop_assert!(set.contains(&p, 1e-9));
        let dz = norm2(&sub(&p, &z));
        let mut rng = SplitMix64::new(seed);
        for _ in 0..30 {
            let q = set.sample(&mut rng);
            prop_assert!(norm2(&sub(&q, &z)) >= dz - 1e-9);
        }
    }

    /// Prox output satisfies the first-order optimality condition against
    /// sampled feasible points, for random diagonal metrics.
    #[test]
    fn prox_first_order_condition(
        center_raw in vec_strategy(4, 2.0),
        g in vec_strategy(4, 3.0),
        weights in prop::collection::vec(0.2f64..4.0, 4),
        h in 0.0f64..2.0,
        seed in 0u64..1000,
    ) {
        let metric = Metric::diagonal(weights).unwrap();
        let set = SimpleSet::Ball { center: vec![0.0; 4], radius: 1.5 };
        let center = set.project(&center_raw);
        let psi = CompositeTerm::Indicator(set.clone());
        let t = prox_step(&center, h, &g, &psi, &metric, PsiMode::DomainOnly).unwrap();
        let mut kappa = metric.apply(&sub(&t, &center));
        for i in 0..4 {
            kappa[i] += h * g[i];
        }
        let mut rng = SplitMix64::new(seed);
        for _ in 0..30 {
            let x = set.sample(&mut rng);
            prop_assert!(dot(&kappa, &sub(&x, &t)) >= -1e-8);
        }
    }

    /// The universal stepsize identities: `a ||g||*^2 = <g, v - T>` and
    /// `b = 1/2 a^2 ||g||*^2`, under random diagonal metrics.
    #[test]
    fn universal_stepsize_identities(
        v in vec_strategy(5, 3.0),
        t in vec_strategy(5, 3.0),
        g in vec_strategy(5, 3.0),
        weights in prop::collection::vec(0.2f64..4.0, 5),
    ) {
        let metric = Metric::diagonal(weights).unwrap();
        let inner = dot(&g, &sub(&v, &t));
        prop_assume!(inner > 1e-9);
        let gnorm = metric.dual_norm(&g).unwrap();
        prop_assume!(gnorm > 1e-9);
        let (a, b) = universal_stepsize(&v, &t, &g, &metric).unwrap();
        prop_assert!((a * gnorm * gnorm - inner).abs() <= 1e-10 * (1.0 + inner.abs()));
        prop_assert!((b - 0.5 * a * a * gnorm * gnorm).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    /// The technical-lemma value never exceeds its objective at any g > 0.
    #[test]
    fn tech_lemma_is_lower_bound(
        sigma in 1.0f64..5.0,
        gamma in 0.01f64..10.0,
        delta in 0.0f64..10.0,
        g in 1e-3f64..1e3,
    ) {
        let inf = tech_lemma_value(sigma, gamma, delta).unwrap();
        let obj = 0.5 * gamma * g.powf(2.0 / sigma) + g.powf((1.0 - sigma) / sigma) * delta;
        prop_assert!(inf <= obj + 1e-9 * (1.0 + obj.abs()));
    }

    /// Support functions dominate the pairing with any sampled member.
    #[test]
    fn support_dominates_members(s in vec_strategy(5, 4.0), seed in 0u64..1000) {
        let sets = [
            SimpleSet::unit_box(5),
            SimpleSet::Ball { center: vec![0.1; 5], radius: 2.0 },
            SimpleSet::simplex(5),
        ];
        let mut rng = SplitMix64::new(seed);
        for set in &sets {
            let sup = set.support(&s).unwrap();
            for _ in 0..20 {
                let x = set.sample(&mut rng);
                prop_assert!(dot(&s, &x) <= sup + 1e-9);
            }
            // And the reported maximizer attains it.
            let arg = set.argmax_linear(&s);
            prop_assert!(set.contains(&arg, 1e-9));
            prop_assert!((dot(&s, &arg) - sup).abs() <= 1e-9);
        }
    }
}
