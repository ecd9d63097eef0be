//! Experiment harness: reproducible configs, trace CSV emission, log-log
//! rate fitting, and the acceptance-suite driver.
//!
//! Config format is line-oriented `key=value` under `[instance]`, `[method]`,
//! and `[output]` sections; floats are serialized with 17 significant digits
//! so a parsed config reproduces its run bit-for-bit. Traces are CSV with the
//! fixed column set
//!
//! ```text
//! t,a,b,A,B,grad_norm,dist_to_xstar,merit,certificate,theorem_slack,wall_time
//! ```
//!
//! where every value is finite; `wall_time` is the only column excluded from
//! reproducibility comparisons. A gnuplot script is emitted next to each
//! trace for quick log-log inspection.

pub mod accept;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::certify::{merit, CertificateAccumulator, CertificateVariant, MeritMode};
use crate::methods::{
    run_baseline_extragradient, run_baseline_gradient, run_dual, run_primal, run_projecting,
    run_switching, run_uniform_monotone, MethodConfig, MethodError, RunTrace, Scheme, StepRule,
};
use crate::problems::{InstanceSpec, ProblemError, ProblemInstance, PsiKind};
use crate::steps::StepConfig;

pub use accept::{run_acceptance, AcceptanceReport, CriterionResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("config error: {0}")]
    ConfigGeneral(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Method(#[from] MethodError),
    #[error("rate fit error: {0}")]
    Fit(String),
}

/// A fully described experiment: instance, method, and output plumbing.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub scheme: Scheme,
    pub step_rule: StepRule,
    pub order: usize,
    pub budget: usize,
    pub log_every: usize,
    pub m_reg: Option<f64>,
    pub inner_tol: f64,
    pub inner_cap: usize,
    pub grad_stop: Option<f64>,
    pub cert_stop: Option<f64>,
    pub r0: Option<f64>,
    pub stage_length: Option<usize>,
    pub baseline_h: Option<f64>,
    pub output: PathBuf,
    pub repetitions: usize,
}

impl ExperimentConfig {
    pub fn new(instance: InstanceSpec, scheme: Scheme, step_rule: StepRule, order: usize) -> Self {
        Self {
            instance,
            scheme,
            step_rule,
            order,
            budget: 500,
            log_every: 1,
            m_reg: None,
            inner_tol: 1e-11,
            inner_cap: 10_000,
            grad_stop: None,
            cert_stop: None,
            r0: None,
            stage_length: None,
            baseline_h: None,
            output: PathBuf::from("trace.csv"),
            repetitions: 1,
        }
    }

    pub fn method_config(&self) -> MethodConfig {
        let mut step = StepConfig::order(self.order);
        step.regularization = self.m_reg;
        step.inner_tol = self.inner_tol;
        step.inner_cap = self.inner_cap;
        MethodConfig {
            scheme: self.scheme,
            step_rule: self.step_rule,
            step,
            budget: self.budget,
            cert_every: self.log_every.max(1),
            grad_stop: self.grad_stop,
            cert_stop: self.cert_stop,
            x0: None,
            r0: self.r0,
            stage_length: self.stage_length,
            baseline_h: self.baseline_h,
        }
    }

    /// Canonical text form; `parse` of this string reproduces the config.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        s.push_str("[instance]\n");
        let _ = writeln!(s, "name={}", self.instance.zoo_name());
        match &self.instance {
            InstanceSpec::MatchingPennies => {}
            InstanceSpec::BilinearGame { m, n, seed } => {
                let _ = writeln!(s, "m={m}\nn={n}\nseed={seed}");
            }
            InstanceSpec::CurvedGame { m, n, seed, epsilon } => {
                let _ = writeln!(s, "m={m}\nn={n}\nseed={seed}\nepsilon={}", fmt_f64(*epsilon));
            }
            InstanceSpec::ChainedCubic { n } => {
                let _ = writeln!(s, "n={n}");
            }
            InstanceSpec::StronglyMonotoneAffine { n, mu, lips, seed } => {
                let _ = writeln!(
                    s,
                    "n={n}\nmu={}\nlips={}\nseed={seed}",
                    fmt_f64(*mu),
                    fmt_f64(*lips)
                );
            }
            InstanceSpec::CompositeQuadratic { n, psi_kind, seed } => {
                let _ = writeln!(s, "n={n}\npsi={}\nseed={seed}", psi_kind.as_str());
            }
            InstanceSpec::SkewRotation { half_width } => {
                let _ = writeln!(s, "half_width={}", fmt_f64(*half_width));
            }
        }
        s.push_str("[method]\n");
        let _ = writeln!(s, "scheme={}", self.scheme.as_str());
        let _ = writeln!(s, "step={}", self.step_rule.as_str());
        let _ = writeln!(s, "order={}", self.order);
        let _ = writeln!(s, "budget={}", self.budget);
        let _ = writeln!(s, "log_every={}", self.log_every);
        if let Some(m) = self.m_reg {
            let _ = writeln!(s, "m_reg={}", fmt_f64(m));
        }
        let _ = writeln!(s, "inner_tol={}", fmt_f64(self.inner_tol));
        let _ = writeln!(s, "inner_cap={}", self.inner_cap);
        if let Some(v) = self.grad_stop {
            let _ = writeln!(s, "grad_stop={}", fmt_f64(v));
        }
        if let Some(v) = self.cert_stop {
            let _ = writeln!(s, "cert_stop={}", fmt_f64(v));
        }
        if let Some(v) = self.r0 {
            let _ = writeln!(s, "r0={}", fmt_f64(v));
        }
        if let Some(v) = self.stage_length {
            let _ = writeln!(s, "stage_length={v}");
        }
        if let Some(v) = self.baseline_h {
            let _ = writeln!(s, "h={}", fmt_f64(v));
        }
        s.push_str("[output]\n");
        let _ = writeln!(s, "path={}", self.output.display());
        let _ = writeln!(s, "repetitions={}", self.repetitions);
        s
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        #[derive(Default)]
        struct Raw {
            map: std::collections::BTreeMap<(String, String), (usize, String)>,
        }
        let mut raw = Raw::default();
        let mut section = String::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.to_string();
                if !matches!(name, "instance" | "method" | "output") {
                    return Err(HarnessError::Config {
                        line: lineno,
                        message: format!("unknown section [{name}]"),
                    });
                }
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(HarnessError::Config {
                    line: lineno,
                    message: "expected key=value".into(),
                });
            };
            if section.is_empty() {
                return Err(HarnessError::Config {
                    line: lineno,
                    message: "key outside of any section".into(),
                });
            }
            raw.map.insert(
                (section.clone(), k.trim().to_string()),
                (lineno, v.trim().to_string()),
            );
        }
        let mut used: std::collections::BTreeSet<(String, String)> = Default::default();
        let mut get = |sec: &str, key: &str| -> Option<(usize, String)> {
            used.insert((sec.to_string(), key.to_string()));
            raw.map.get(&(sec.to_string(), key.to_string())).cloned()
        };
        let req = |v: Option<(usize, String)>, sec: &str, key: &str| -> Result<(usize, String), HarnessError> {
            v.ok_or_else(|| HarnessError::ConfigGeneral(format!("missing {sec}.{key}")))
        };
        fn parse_num<T: std::str::FromStr>(
            (line, v): (usize, String),
            field: &str,
        ) -> Result<T, HarnessError> {
            v.parse::<T>().map_err(|_| HarnessError::Config {
                line,
                message: format!("invalid value for {field}: {v}"),
            })
        }

        let (name_line, name) = req(get("instance", "name"), "instance", "name")?;
        let instance = match name.as_str() {
            "matching_pennies" => InstanceSpec::MatchingPennies,
            "bilinear_game" => InstanceSpec::BilinearGame {
                m: parse_num(req(get("instance", "m"), "instance", "m")?, "instance.m")?,
                n: parse_num(req(get("instance", "n"), "instance", "n")?, "instance.n")?,
                seed: parse_num(req(get("instance", "seed"), "instance", "seed")?, "instance.seed")?,
            },
            "curved_game" => InstanceSpec::CurvedGame {
                m: parse_num(req(get("instance", "m"), "instance", "m")?, "instance.m")?,
                n: parse_num(req(get("instance", "n"), "instance", "n")?, "instance.n")?,
                seed: parse_num(req(get("instance", "seed"), "instance", "seed")?, "instance.seed")?,
                epsilon: parse_num(
                    req(get("instance", "epsilon"), "instance", "epsilon")?,
                    "instance.epsilon",
                )?,
            },
            "chained_cubic" => InstanceSpec::ChainedCubic {
                n: parse_num(req(get("instance", "n"), "instance", "n")?, "instance.n")?,
            },
            "strongly_monotone_affine" => InstanceSpec::StronglyMonotoneAffine {
                n: parse_num(req(get("instance", "n"), "instance", "n")?, "instance.n")?,
                mu: parse_num(req(get("instance", "mu"), "instance", "mu")?, "instance.mu")?,
                lips: parse_num(req(get("instance", "lips"), "instance", "lips")?, "instance.lips")?,
                seed: parse_num(req(get("instance", "seed"), "instance", "seed")?, "instance.seed")?,
            },
            "composite_quadratic" => {
                let (pl, pv) = req(get("instance", "psi"), "instance", "psi")?;
                let psi_kind = PsiKind::parse(&pv).ok_or(HarnessError::Config {
                    line: pl,
                    message: format!("unknown psi kind: {pv}"),
                })?;
                InstanceSpec::CompositeQuadratic {
                    n: parse_num(req(get("instance", "n"), "instance", "n")?, "instance.n")?,
                    psi_kind,
                    seed: parse_num(req(get("instance", "seed"), "instance", "seed")?, "instance.seed")?,
                }
            }
            "skew_rotation" => InstanceSpec::SkewRotation {
                half_width: parse_num(
                    req(get("instance", "half_width"), "instance", "half_width")?,
                    "instance.half_width",
                )?,
            },
            other => {
                return Err(HarnessError::Config {
                    line: name_line,
                    message: format!("unknown zoo instance in instance.name: {other}"),
                })
            }
        };

        let (sl, sv) = req(get("method", "scheme"), "method", "scheme")?;
        let scheme = Scheme::parse(&sv).ok_or(HarnessError::Config {
            line: sl,
            message: format!("unknown scheme: {sv}"),
        })?;
        let (stl, stv) = req(get("method", "step"), "method", "step")?;
        let step_rule = StepRule::parse(&stv).ok_or(HarnessError::Config {
            line: stl,
            message: format!("unknown step rule: {stv}"),
        })?;
        let mut cfg = ExperimentConfig::new(instance, scheme, step_rule, 0);
        cfg.order = parse_num(req(get("method", "order"), "method", "order")?, "method.order")?;
        cfg.budget = parse_num(req(get("method", "budget"), "method", "budget")?, "method.budget")?;
        if let Some(v) = get("method", "log_every") {
            cfg.log_every = parse_num(v, "method.log_every")?;
        }
        if let Some(v) = get("method", "m_reg") {
            cfg.m_reg = Some(parse_num(v, "method.m_reg")?);
        }
        if let Some(v) = get("method", "inner_tol") {
            cfg.inner_tol = parse_num(v, "method.inner_tol")?;
        }
        if let Some(v) = get("method", "inner_cap") {
            cfg.inner_cap = parse_num(v, "method.inner_cap")?;
        }
        if let Some(v) = get("method", "grad_stop") {
            cfg.grad_stop = Some(parse_num(v, "method.grad_stop")?);
        }
        if let Some(v) = get("method", "cert_stop") {
            cfg.cert_stop = Some(parse_num(v, "method.cert_stop")?);
        }
        if let Some(v) = get("method", "r0") {
            cfg.r0 = Some(parse_num(v, "method.r0")?);
        }
        if let Some(v) = get("method", "stage_length") {
            cfg.stage_length = Some(parse_num(v, "method.stage_length")?);
        }
        if let Some(v) = get("method", "h") {
            cfg.baseline_h = Some(parse_num(v, "method.h")?);
        }
        if let Some((_, v)) = get("output", "path") {
            cfg.output = PathBuf::from(v);
        }
        if let Some(v) = get("output", "repetitions") {
            cfg.repetitions = parse_num(v, "output.repetitions")?;
        }
        // Reject unknown keys with their line numbers.
        for ((sec, key), (line, _)) in raw.map.iter() {
            if !used.contains(&(sec.clone(), key.clone())) {
                return Err(HarnessError::Config {
                    line: *line,
                    message: format!("unknown key {sec}.{key}"),
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.budget < 1 {
            return Err(HarnessError::ConfigGeneral("method.budget must be >= 1".into()));
        }
        if self.repetitions < 1 {
            return Err(HarnessError::ConfigGeneral("output.repetitions must be >= 1".into()));
        }
        match &self.instance {
            InstanceSpec::BilinearGame { m, n, .. } if *m > 20 || *n > 20 => {
                return Err(HarnessError::ConfigGeneral(
                    "instance.m/instance.n above 20: no reference solution available".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// 17 significant digits: round-trips every f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV row of a trace file.
#[derive(Debug, Clone, Copy)]
pub struct CsvRow {
    pub t: usize,
    pub a: f64,
    pub b: f64,
    pub a_sum: f64,
    pub b_sum: f64,
    pub grad_norm: f64,
    pub dist_to_xstar: f64,
    pub merit: f64,
    pub certificate: f64,
    pub theorem_slack: f64,
    /// 1.0 when the merit maximization was solved to tolerance, 0.0 for a
    /// sampled or capped lower bound.
    pub merit_exact: f64,
    pub wall_time: f64,
}

pub const CSV_HEADER: &str =
    "t,a,b,A,B,grad_norm,dist_to_xstar,merit,certificate,theorem_slack,merit_exact,wall_time";

fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<(), HarnessError> {
    let mut out = String::with_capacity(rows.len() * 128);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            fmt_f64(r.a),
            fmt_f64(r.b),
            fmt_f64(r.a_sum),
            fmt_f64(r.b_sum),
            fmt_f64(r.grad_norm),
            fmt_f64(r.dist_to_xstar),
            fmt_f64(r.merit),
            fmt_f64(r.certificate),
            fmt_f64(r.theorem_slack),
            fmt_f64(r.merit_exact),
            fmt_f64(r.wall_time),
        );
    }
    for r in rows {
        let finite = [
            r.a,
            r.b,
            r.a_sum,
            r.b_sum,
            r.grad_norm,
            r.dist_to_xstar,
            r.merit,
            r.certificate,
            r.theorem_slack,
            r.merit_exact,
            r.wall_time,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(HarnessError::ConfigGeneral(format!(
                "non-finite value in trace row t={}",
                r.t
            )));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn gnuplot_script(csv: &Path) -> String {
    let name = csv.display();
    format!(
        "set logscale xy\n\
         set xlabel 't'\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         plot '{name}' using 1:9 with lines title 'certificate', \\\n\
              '{name}' using 1:8 with lines title 'merit', \\\n\
              '{name}' using 1:6 with lines title 'grad norm'\n"
    )
}

fn trace_rows(trace: &RunTrace, instance: &ProblemInstance) -> Result<Vec<CsvRow>, HarnessError> {
    let mut rows = Vec::new();
    for r in &trace.records {
        let (Some(merit_v), Some(cert_v)) = (r.merit, r.certificate) else {
            continue;
        };
        let dist = r.dist_to_solution.ok_or_else(|| {
            HarnessError::ConfigGeneral(
                "instance has no reference solution; trace output needs one".into(),
            )
        })?;
        rows.push(CsvRow {
            t: r.t,
            a: r.a,
            b: r.b,
            a_sum: r.a_sum,
            b_sum: r.b_sum,
            grad_norm: r.grad_norm,
            dist_to_xstar: dist,
            merit: merit_v,
            certificate: cert_v,
            theorem_slack: r.theorem_slack,
            merit_exact: if r.merit_exact { 1.0 } else { 0.0 },
            wall_time: r.wall,
        });
    }
    if rows.is_empty() {
        // Stationary-on-arrival runs still produce one row; with no accepted
        // step there is no accumulated certificate, so the exact merit of the
        // returned point stands in for it.
        if let Some(r) = trace.records.first() {
            let dist = r.dist_to_solution.unwrap_or(0.0);
            let merit_v = r.merit.ok_or_else(|| {
                HarnessError::ConfigGeneral("stationary record lacks a merit value".into())
            })?;
            rows.push(CsvRow {
                t: r.t,
                a: r.a,
                b: r.b,
                a_sum: r.a_sum,
                b_sum: r.b_sum,
                grad_norm: r.grad_norm,
                dist_to_xstar: dist,
                merit: merit_v,
                certificate: r.certificate.unwrap_or(merit_v),
                theorem_slack: r.theorem_slack,
                merit_exact: if r.merit_exact { 1.0 } else { 0.0 },
                wall_time: r.wall,
            });
        }
    }
    let _ = instance;
    Ok(rows)
}

fn baseline_gradient_rows(
    cfg: &ExperimentConfig,
    instance: &ProblemInstance,
) -> Result<Vec<CsvRow>, HarnessError> {
    let trace = run_baseline_gradient(instance, &cfg.method_config())?;
    let started = std::time::Instant::now();
    let mut acc = CertificateAccumulator::new(
        CertificateVariant::Vi,
        trace.points[0].clone(),
        cfg.r0.or(instance.r0),
    );
    let metric = &instance.metric;
    let mut rows = Vec::new();
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for k in 0..trace.steps.len() {
        let h = trace.steps[k];
        s1 += h;
        s2 += h * h;
        let x_next = &trace.points[k + 1];
        let g = instance.operator.eval(x_next);
        acc.push(h, &g, x_next, instance.psi.eval(x_next));
        let t = k + 1;
        if t % cfg.log_every.max(1) != 0 && t != trace.steps.len() {
            continue;
        }
        let (avg, _, _) = trace.window_average(0, k);
        let (merit_v, merit_exact) = merit(&avg, instance, MeritMode::Auto)
            .map(|m| (m.value, m.exact))
            .unwrap_or((0.0, false));
        let cert_v = acc.value(instance).unwrap_or(merit_v);
        let dist = trace.distances.get(k + 1).copied().ok_or_else(|| {
            HarnessError::ConfigGeneral("baseline trace needs a reference solution".into())
        })?;
        let gnorm = metric
            .dual_norm(&instance.operator.eval(&trace.points[k + 1]))
            .unwrap_or(f64::NAN);
        rows.push(CsvRow {
            t,
            a: h,
            b: 0.0,
            a_sum: s1,
            b_sum: s2,
            grad_norm: gnorm,
            dist_to_xstar: dist,
            merit: merit_v,
            certificate: cert_v,
            theorem_slack: merit_v - cert_v,
            merit_exact: if merit_exact { 1.0 } else { 0.0 },
            wall_time: started.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

fn baseline_extragradient_rows(
    cfg: &ExperimentConfig,
    instance: &ProblemInstance,
) -> Result<Vec<CsvRow>, HarnessError> {
    let trace = run_baseline_extragradient(instance, &cfg.method_config(), cfg.baseline_h)?;
    let started = std::time::Instant::now();
    let mut acc = CertificateAccumulator::new(
        CertificateVariant::Vi,
        cfg.method_config()
            .x0
            .unwrap_or_else(|| instance.default_start.clone()),
        cfg.r0.or(instance.r0),
    );
    let metric = &instance.metric;
    let h = trace.stepsize;
    let mut rows = Vec::new();
    let mut avg = vec![0.0; instance.dim()];
    for (k, y) in trace.mid_points.iter().enumerate() {
        let g = instance.operator.eval(y);
        acc.push(h, &g, y, instance.psi.eval(y));
        for i in 0..avg.len() {
            avg[i] += y[i];
        }
        let t = k + 1;
        if t % cfg.log_every.max(1) != 0 && t != trace.mid_points.len() {
            continue;
        }
        let mean: Vec<f64> = avg.iter().map(|v| v / t as f64).collect();
        let (merit_v, merit_exact) = merit(&mean, instance, MeritMode::Auto)
            .map(|m| (m.value, m.exact))
            .unwrap_or((0.0, false));
        let cert_v = acc.value(instance).unwrap_or(merit_v);
        let dist = trace.distances.get(k + 1).copied().ok_or_else(|| {
            HarnessError::ConfigGeneral("baseline trace needs a reference solution".into())
        })?;
        rows.push(CsvRow {
            t,
            a: h,
            b: 0.0,
            a_sum: h * t as f64,
            b_sum: h * h * t as f64,
            grad_norm: metric.dual_norm(&g).unwrap_or(f64::NAN),
            dist_to_xstar: dist,
            merit: merit_v,
            certificate: cert_v,
            theorem_slack: merit_v - cert_v,
            merit_exact: if merit_exact { 1.0 } else { 0.0 },
            wall_time: started.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

/// Runs the configured experiment, writing `<path>` (CSV trace), `<path>.gp`
/// (plot script), and `<path>.config` (resolved config echo). Repetitions
/// beyond the first write `<stem>.repK.csv` and may execute in parallel
/// (thread count from `RGVI_THREADS`).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, HarnessError> {
    cfg.validate()?;
    let instance = cfg.instance.build()?;
    let run_once = |path: &Path| -> Result<(), HarnessError> {
        let rows = match cfg.scheme {
            Scheme::Primal => trace_rows(&run_primal(&instance, &cfg.method_config())?, &instance)?,
            Scheme::Dual => trace_rows(&run_dual(&instance, &cfg.method_config())?, &instance)?,
            Scheme::Projecting => {
                trace_rows(&run_projecting(&instance, &cfg.method_config())?, &instance)?
            }
            Scheme::UniformMonotone => {
                trace_rows(&run_uniform_monotone(&instance, &cfg.method_config())?, &instance)?
            }
            Scheme::Switching => {
                let t = cfg.stage_length.unwrap_or(cfg.budget / 2).max(1);
                let sw = run_switching(&instance, &cfg.method_config(), t)?;
                let mut rows = trace_rows(&sw.stage_a, &instance)?;
                let base_t = sw.stage_a.records.last().map(|r| r.t).unwrap_or(0);
                let started = std::time::Instant::now();
                let mut g_run = f64::INFINITY;
                for (i, g) in sw.stage_grad_norms.iter().enumerate() {
                    let y = &sw.stage_points[i + 1];
                    g_run = g_run.min(*g);
                    let dist = instance
                        .known_solution
                        .as_ref()
                        .map(|xs| instance.metric.norm(&crate::linalg::sub(y, xs)))
                        .unwrap_or(0.0);
                    let (merit_v, merit_exact) = merit(y, &instance, MeritMode::Auto)
                        .map(|m| (m.value, m.exact))
                        .unwrap_or((0.0, false));
                    rows.push(CsvRow {
                        t: base_t + i + 1,
                        a: 0.0,
                        b: 0.0,
                        a_sum: 0.0,
                        b_sum: 0.0,
                        grad_norm: *g,
                        dist_to_xstar: dist,
                        merit: merit_v,
                        // Stage b certifies the running gradient-norm minimum.
                        certificate: g_run,
                        theorem_slack: sw.descent_slack,
                        merit_exact: if merit_exact { 1.0 } else { 0.0 },
                        wall_time: started.elapsed().as_secs_f64(),
                    });
                }
                rows
            }
            Scheme::BaselineGradient => baseline_gradient_rows(cfg, &instance)?,
            Scheme::BaselineExtragradient => baseline_extragradient_rows(cfg, &instance)?,
        };
        write_csv(path, &rows)?;
        std::fs::write(path.with_extension("csv.gp"), gnuplot_script(path))?;
        std::fs::write(path.with_extension("csv.config"), cfg.serialize())?;
        Ok(())
    };

    let mut paths = vec![cfg.output.clone()];
    for k in 2..=cfg.repetitions {
        let stem = cfg.output.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
        paths.push(cfg.output.with_file_name(format!("{stem}.rep{k}.csv")));
    }
    let threads = thread_count().min(paths.len().max(1));
    if threads <= 1 || paths.len() == 1 {
        for p in &paths {
            run_once(p)?;
        }
    } else {
        let errors: Vec<HarnessError> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for chunk in paths.chunks(paths.len().div_ceil(threads)) {
                handles.push(scope.spawn(move || {
                    let mut errs = Vec::new();
                    for p in chunk {
                        if let Err(e) = run_once(p) {
                            errs.push(e);
                        }
                    }
                    errs
                }));
            }
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
        });
        if let Some(e) = errors.into_iter().next() {
            return Err(e);
        }
    }
    Ok(paths)
}

/// Worker count for parallel experiment execution (`RGVI_THREADS`, default:
/// available parallelism).
pub fn thread_count() -> usize {
    std::env::var("RGVI_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// A fitted power law `y ~ exp(intercept) * t^slope` over a t-window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub t_min: usize,
    pub t_max: usize,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub points: usize,
}

/// Least-squares fit of `log y` against `log t` over `t in [t_min, t_max]`.
/// Errors identify the first non-positive sample in the window.
pub fn fit_loglog(ts: &[usize], ys: &[f64], t_min: usize, t_max: usize) -> Result<RateFit, HarnessError> {
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    for (&t, &y) in ts.iter().zip(ys) {
        if t < t_min || t > t_max {
            continue;
        }
        if !(y > 0.0) {
            return Err(HarnessError::Fit(format!(
                "non-positive value {y} at t={t}; log-log fit undefined"
            )));
        }
        xs.push((t as f64).ln());
        zs.push(y.ln());
    }
    let n = xs.len();
    if n < 2 {
        return Err(HarnessError::Fit(format!(
            "need at least 2 samples in [{t_min}, {t_max}], found {n}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let mz = zs.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxz = 0.0;
    for i in 0..n {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxz += (xs[i] - mx) * (zs[i] - mz);
    }
    if sxx == 0.0 {
        return Err(HarnessError::Fit("degenerate window: single t value".into()));
    }
    let slope = sxz / sxx;
    let intercept = mz - slope * mx;
    let mut ss = 0.0;
    for i in 0..n {
        let e = zs[i] - (intercept + slope * xs[i]);
        ss += e * e;
    }
    Ok(RateFit {
        t_min,
        t_max,
        slope,
        intercept,
        residual: (ss / nf).sqrt(),
        points: n,
    })
}

/// Reads a trace CSV and fits the named column over the window.
pub fn fit_rate(path: &Path, column: &str, t_min: usize, t_max: usize) -> Result<RateFit, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Fit("empty trace file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let idx = cols
        .iter()
        .position(|c| *c == column)
        .ok_or_else(|| HarnessError::Fit(format!("no column named {column} (have: {header})")))?;
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(HarnessError::Fit(format!("malformed row {} in {}", i + 2, path.display())));
        }
        let t: usize = fields[0]
            .parse()
            .map_err(|_| HarnessError::Fit(format!("bad t in row {}", i + 2)))?;
        let y: f64 = fields[idx]
            .parse()
            .map_err(|_| HarnessError::Fit(format!("bad value in row {}", i + 2)))?;
        ts.push(t);
        ys.push(y);
    }
    fit_loglog(&ts, &ys, t_min, t_max)
}

/// One line per zoo instance with its parameters.
pub fn list_problems() -> String {
    let rows = [
        ("matching_pennies", "", "2x2 bilinear game on simplex product; equilibrium at the centers"),
        ("bilinear_game", "m, n, seed", "random bilinear matrix game on Delta_n x Delta_m (m, n <= 20)"),
        ("curved_game", "m, n, seed, epsilon", "bilinear game plus separable cubic monotone term; exact interior solution"),
        ("chained_cubic", "n", "unconstrained chained-cubic minimization; minimizer at zero"),
        ("strongly_monotone_affine", "n, mu, lips, seed", "planted-solution affine VI on a ball; strong monotonicity mu"),
        ("composite_quadratic", "n, psi, seed", "strongly convex quadratic over zero|box|ball|simplex"),
        ("skew_rotation", "half_width", "2-D rotation field on a centered box; divergence demo for plain gradient steps"),
    ];
    let mut out = String::new();
    for (name, params, desc) in rows {
        let _ = writeln!(out, "{name:<26} {params:<22} {desc}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn config_round_trip_is_lossless() {
        let mut cfg = ExperimentConfig::new(
            InstanceSpec::CurvedGame { m: 7, n: 5, seed: 99, epsilon: 0.123_456_789_012_345_67 },
            Scheme::Dual,
            StepRule::ViTensor,
            1,
        );
        cfg.budget = 1234;
        cfg.log_every = 7;
        cfg.m_reg = Some(2.5000000000001e-3);
        cfg.grad_stop = Some(1e-9);
        cfg.r0 = Some(3.3333333333333333);
        cfg.output = PathBuf::from("out/curved.csv");
        cfg.repetitions = 3;
        let text = cfg.serialize();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        // And serialization is a fixed point.
        assert_eq!(text, back.serialize());
    }

    #[test]
    fn config_rejects_unknown_name_and_keys() {
        let bad = "[instance]\nname=mystery\n[method]\nscheme=primal\nstep=vi\norder=0\nbudget=10\n";
        match ExperimentConfig::parse(bad) {
            Err(HarnessError::Config { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("instance.name"), "{message}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
        let unknown_key =
            "[instance]\nname=matching_pennies\nbogus=1\n[method]\nscheme=primal\nstep=vi\norder=0\nbudget=10\n";
        match ExperimentConfig::parse(unknown_key) {
            Err(HarnessError::Config { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn fmt_f64_round_trips_exactly() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..1000 {
            let x = rng.gaussian() * 10f64.powf(rng.uniform(-12.0, 12.0));
            let s = fmt_f64(x);
            let y: f64 = s.parse().unwrap();
            assert_eq!(x.to_bits(), y.to_bits(), "{x} -> {s} -> {y}");
        }
    }

    #[test]
    fn fit_recovers_exact_power_laws() {
        let ts: Vec<usize> = (1..=1000).collect();
        for &(c, alpha) in &[(3.0, -1.0), (0.5, -1.5), (2.0, 0.75)] {
            let ys: Vec<f64> = ts.iter().map(|&t| c * (t as f64).powf(alpha)).collect();
            let fit = fit_loglog(&ts, &ys, 1, 1000).unwrap();
            assert!((fit.slope - alpha).abs() <= 1e-6, "slope {} vs {alpha}", fit.slope);
            assert!((fit.intercept - c.ln()).abs() <= 1e-6);
            assert!(fit.residual <= 1e-10);
        }
    }

    #[test]
    fn fit_rejects_nonpositive_with_location() {
        let ts: Vec<usize> = (1..=10).collect();
        let mut ys: Vec<f64> = ts.iter().map(|&t| 1.0 / t as f64).collect();
        ys[4] = 0.0;
        match fit_loglog(&ts, &ys, 1, 10) {
            Err(HarnessError::Fit(msg)) => assert!(msg.contains("t=5"), "{msg}"),
            other => panic!("expected fit error, got {other:?}"),
        }
    }

    #[test]
    fn experiment_writes_deterministic_csv() {
        let dir = std::env::temp_dir().join(format!("rgvi_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut cfg = ExperimentConfig::new(
            InstanceSpec::MatchingPennies,
            Scheme::Primal,
            StepRule::ViTensor,
            0,
        );
        cfg.budget = 40;
        cfg.log_every = 10;
        cfg.repetitions = 3;
        cfg.output = dir.join("pennies.csv");
        let paths = run_experiment(&cfg).unwrap();
        assert_eq!(paths.len(), 3);
        // Byte-identical numeric columns across repetitions.
        let strip_wall = |text: &str| -> String {
            text.lines()
                .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
                .collect::<Vec<_>>()
                .join("\n")
        };
        let first = strip_wall(&std::fs::read_to_string(&paths[0]).unwrap());
        for p in &paths[1..] {
            let other = strip_wall(&std::fs::read_to_string(p).unwrap());
            assert_eq!(first, other);
        }
        // Config echo reproduces the config.
        let echo = std::fs::read_to_string(paths[0].with_extension("csv.config")).unwrap();
        assert_eq!(ExperimentConfig::parse(&echo).unwrap(), cfg);
        // Monotone nonincreasing running-min gradient column.
        let text = std::fs::read_to_string(&paths[0]).unwrap();
        let mut best = f64::INFINITY;
        for line in text.lines().skip(1) {
            let g: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
            assert!(g.is_finite());
            best = best.min(g);
        }
        assert!(best < 1.0);
        std::fs::remove_dir_all(&dir).ok();
    }
}
