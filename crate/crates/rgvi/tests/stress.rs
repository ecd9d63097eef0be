//! Slow stress sweeps, excluded from the default run:
//! `cargo test --test stress -- --ignored`.

use rgvi::linalg::{dot, sub};
use rgvi::problems::InstanceSpec;
use rgvi::rng::SplitMix64;
use rgvi::steps::{
    default_vi_m, gamma_vi, vi_step_order0, vi_step_order1, StepConfig,
};

/// Order-1 VI steps across curvature scales, dimensions, and seeds: every
/// step must solve its model to tolerance and satisfy the quality bound.
#[test]
#[ignore]
fn vi_order1_step_sweep() {
    let mut rng = SplitMix64::new(0xbeef);
    let mut checked = 0usize;
    let mut worst_res: f64 = 0.0;
    for &eps in &[0.1, 0.5, 2.0, 8.0, 32.0] {
        for &(m, n) in &[(2usize, 3usize), (5, 5), (10, 8)] {
            for seed in 0..4u64 {
                let inst = InstanceSpec::CurvedGame { m, n, seed, epsilon: eps }
                    .build()
                    .expect("curved game builds");
                let m_hat = inst.constants.m_hat2.unwrap().value;
                let gamma = gamma_vi(1, default_vi_m(1, m_hat), m_hat);
                let set = inst.psi.domain();
                for _ in 0..25 {
                    let v = set.sample(&mut rng);
                    let rec = vi_step_order1(&v, &inst, &StepConfig::order(1))
                        .unwrap_or_else(|e| panic!("step failed (eps={eps}, {m}x{n}, seed {seed}): {e}"));
                    worst_res = worst_res.max(rec.inner_residual);
                    if rec.stationary {
                        continue;
                    }
                    let lhs = dot(&rec.reduced_gradient, &sub(&v, &rec.point));
                    let rhs = gamma * rec.grad_dual_norm.powf(1.5);
                    assert!(
                        lhs >= rhs - (rec.inner_residual + 1e-6) * (1.0 + rhs),
                        "quality violated (eps={eps}, {m}x{n}): {lhs} < {rhs}"
                    );
                    checked += 1;
                }
            }
        }
    }
    // Ball-constrained affine operators with explicit regularizations.
    for &mu in &[0.05, 0.3, 0.9] {
        for seed in 0..4u64 {
            let inst =
                InstanceSpec::StronglyMonotoneAffine { n: 12, mu, lips: 1.0, seed }.build().unwrap();
            let set = inst.psi.domain();
            for &m_reg in &[0.5, 1.0, 4.0] {
                for _ in 0..20 {
                    let v = set.sample(&mut rng);
                    let rec = vi_step_order1(&v, &inst, &StepConfig::with_m(1, m_reg)).unwrap();
                    worst_res = worst_res.max(rec.inner_residual);
                    if rec.stationary {
                        continue;
                    }
                    let lhs = dot(&rec.reduced_gradient, &sub(&v, &rec.point));
                    let rhs = gamma_vi(1, m_reg, 0.0) * rec.grad_dual_norm.powf(1.5);
                    assert!(lhs >= rhs - (rec.inner_residual + 1e-6) * (1.0 + rhs));
                    checked += 1;
                }
            }
        }
    }
    println!("checked {checked} order-1 steps, worst residual {worst_res:.3e}");
    assert!(checked > 2_000);
}

/// Long primal runs across schemes and curvatures must keep their theorem
/// slacks within the accumulated tolerance at every iteration.
#[test]
#[ignore]
fn long_run_slack_sweep() {
    use rgvi::methods::{run_dual, run_primal, run_projecting, MethodConfig, Scheme, StepRule};
    for &eps in &[0.5, 8.0] {
        let inst = InstanceSpec::CurvedGame { m: 8, n: 8, seed: 4, epsilon: eps }.build().unwrap();
        for scheme in [Scheme::Primal, Scheme::Dual, Scheme::Projecting] {
            let mut cfg = MethodConfig::new(scheme, StepRule::ViTensor, 1, 1000);
            cfg.cert_every = 1000;
            let trace = match scheme {
                Scheme::Primal => run_primal(&inst, &cfg),
                Scheme::Dual => run_dual(&inst, &cfg),
                _ => run_projecting(&inst, &cfg),
            }
            .unwrap();
            for r in &trace.records {
                assert!(
                    r.theorem_slack <= trace.tol_accum + 1e-9,
                    "{} eps={eps} t={}: slack {:.3e} budget {:.3e}",
                    scheme.as_str(),
                    r.t,
                    r.theorem_slack,
                    trace.tol_accum
                );
            }
        }
    }
}
