//! One function per experiment, each returning CSV rows and a JSON summary.

use serde_json::{json, Value};

use intermittency::experiments::{
    annealed_mc_variance, annealed_variance, centering_diagnostic, clt_test, deviation_curve,
    moderate_deviation_curve, moment_curve, omega_seed, product_system_test, quenched_ld_exponent,
    quenched_sums, quenched_variance, tail_slope, CltMode, Engine, Normalization,
};
use intermittency::grid::DensityGrid;
use intermittency::record::ExperimentRecord;
use intermittency::schedule::Schedule;
use intermittency::stats::{ks_critical_95, log_log_slope, mean_stderr, Z_95};
use intermittency::transfer::decay_curve_with;

use crate::config::{Config, Experiment, ModeSpec, NormalizationSpec};
use crate::error::CliError;

pub struct Output {
    pub rows: Vec<ExperimentRecord>,
    pub summary: Value,
}

type Res = Result<Output, CliError>;

struct Ctx<'a> {
    cfg: &'a Config,
    engine: Engine,
    alphas: Vec<f64>,
}

impl Ctx<'_> {
    fn row(&self, name: &str, n: usize, estimate: f64, samples: usize) -> ExperimentRecord {
        ExperimentRecord::new(name, &self.alphas, n, estimate, samples, self.cfg.seed)
    }
}

pub fn run(cfg: &Config) -> Res {
    let ctx = Ctx {
        cfg,
        engine: cfg.engine()?,
        alphas: cfg.schedule.alphas.clone(),
    };
    match cfg.experiment.expect("resolved") {
        Experiment::Simulate => simulate(&ctx),
        Experiment::Decay => decay(&ctx),
        Experiment::Ld => ld(&ctx),
        Experiment::Md => md(&ctx),
        Experiment::Clt => clt(&ctx),
        Experiment::Variance => variance(&ctx),
        Experiment::QuenchedVariance => quenched(&ctx),
        Experiment::Centering => centering(&ctx),
        Experiment::Product => product(&ctx),
        Experiment::Selftest => unreachable!("selftest has its own entry point"),
    }
}

fn slope_of(ns: &[usize], ys: &[f64]) -> Value {
    if ns.len() < 2 {
        return Value::Null;
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    log_log_slope(&xs, ys).map(Value::from).unwrap_or(Value::Null)
}

/// Mean of `S_n / n` with a normal-approximation interval.
fn simulate(c: &Ctx) -> Res {
    let cfg = c.cfg;
    let s = cfg.schedule()?;
    let phi = cfg.observable(&c.engine)?;
    let mu = cfg.measure(&c.engine)?;
    let sums = quenched_sums(&c.engine, &s, &phi, &cfg.n, cfg.samples, &mu, cfg.centered, cfg.seed)?;
    let mut rows = Vec::new();
    let mut var = Vec::new();
    for (&n, xs) in cfg.n.iter().zip(&sums) {
        let avg: Vec<f64> = xs.iter().map(|x| x / n as f64).collect();
        let (m, se) = mean_stderr(&avg);
        rows.push(c.row("simulate", n, m, cfg.samples).with_ci(m - Z_95 * se, m + Z_95 * se));
        let scaled: Vec<f64> = xs.iter().map(|x| x / (n as f64).sqrt()).collect();
        var.push(intermittency::stats::variance(&scaled));
    }
    Ok(Output {
        rows,
        summary: json!({ "observable": phi.name(), "var_sn_over_sqrt_n": var }),
    })
}

fn decay(c: &Ctx) -> Res {
    let cfg = c.cfg;
    let s = cfg.schedule()?;
    let n_max = *cfg.n.iter().max().expect("validated");
    let gamma = cfg.gamma;
    let f = DensityGrid::from_fn(c.engine.mesh(), |x| x.powf(-gamma), -gamma);
    let curve = decay_curve_with(c.engine.cache(), &s, &f, n_max)?;
    let rows = curve
        .iter()
        .enumerate()
        .map(|(k, &v)| c.row("decay", k + 1, v, 0))
        .collect();
    let [lo, hi] = cfg.fit_range;
    let hi = hi.min(n_max);
    let slope = if lo < hi {
        let ns: Vec<usize> = (lo..=hi).collect();
        slope_of(&ns, &curve[lo - 1..hi])
    } else {
        Value::Null
    };
    Ok(Output {
        rows,
        summary: json!({ "fit_range": [lo, hi], "log_log_slope": slope }),
    })
}

fn ld(c: &Ctx) -> Res {
    let cfg = c.cfg;
    let s = cfg.schedule()?;
    let phi = cfg.observable(&c.engine)?;
    let mu = cfg.measure(&c.engine)?;
    let eps = cfg.eps.expect("validated");
    let est = deviation_curve(&c.engine, &s, &phi, &cfg.n, eps, cfg.samples, &mu, cfg.centered, cfg.seed)?;
    let mut rows: Vec<ExperimentRecord> = est
        .iter()
        .map(|e| {
            c.row("ld", e.n, e.p_hat, e.samples)
                .with_eps(eps)
                .with_ci(e.ci_low, e.ci_high)
        })
        .collect();
    let slope = if est.len() >= 2 {
        tail_slope(&est).map(Value::from).unwrap_or(Value::Null)
    } else {
        Value::Null
    };
    let mut summary = json!({
        "measure": mu.label(),
        "tail_slope": slope,
        "successes": est.iter().map(|e| e.successes).collect::<Vec<_>>(),
    });
    if let Some(p) = cfg.p {
        let moments = moment_curve(&c.engine, &s, &phi, &cfg.n, p, cfg.samples, &mu, cfg.seed)?;
        let ns: Vec<usize> = moments.iter().map(|m| m.n).collect();
        let ys: Vec<f64> = moments.iter().map(|m| m.estimate).collect();
        for m in &moments {
            rows.push(
                c.row("ld_moment", m.n, m.estimate, m.samples)
                    .with_p(p)
                    .with_ci(m.estimate - Z_95 * m.stderr, m.estimate + Z_95 * m.stderr),
            );
        }
        summary["moment_slope"] = slope_of(&ns, &ys);
        summary["quenched_kappa"] = quenched_ld_exponent(p, cfg.alpha_max())
            .map(Value::from)
            .unwrap_or(Value::Null);
    }
    Ok(Output { rows, summary })
}

fn md(c: &Ctx) -> Res {
    let cfg = c.cfg;
    let s = cfg.schedule()?;
    let phi = cfg.observable(&c.engine)?;
    let mu = cfg.measure(&c.engine)?;
    let (tau, t) = (cfg.tau.expect("validated"), cfg.t.expect("validated"));
    let est = moderate_deviation_curve(&c.engine, &s, &phi, &cfg.n, tau, t, cfg.samples, &mu, cfg.seed)?;
    let rows = est
        .iter()
        .map(|e| {
            c.row("md", e.n, e.p_hat, e.samples)
                .with_eps(t)
                .with_tau(tau)
                .with_ci(e.ci_low, e.ci_high)
        })
        .collect();
    let slope = if est.len() >= 2 {
        tail_slope(&est).map(Value::from).unwrap_or(Value::Null)
    } else {
        Value::Null
    };
    let beta = 1.0 / cfg.alpha_max() - 1.0;
    Ok(Output {
        rows,
        summary: json!({
            "measure": mu.label(),
            "tail_slope": slope,
            "beta": beta,
            "successes": est.iter().map(|e| e.successes).collect::<Vec<_>>(),
        }),
    })
}

fn formula_sigma2(c: &Ctx) -> Result<f64, CliError> {
    if let Some(s2) = c.cfg.sigma2 {
        return Ok(s2);
    }
    let space = c.cfg.space()?.ok_or_else(|| CliError::Validation {
        field: "sigma2".into(),
        reason: "required for a fixed-list schedule".into(),
    })?;
    let phi = c.cfg.observable(&c.engine)?;
    Ok(annealed_variance(&c.engine, &space, &phi, c.cfg.k_max)?.sigma2)
}

fn clt(c: &Ctx) -> Res {
    let cfg = c.cfg;
    let s = cfg.schedule()?;
    let phi = cfg.observable(&c.engine)?;
    let normalization = match cfg.normalization {
        NormalizationSpec::Fixed => Normalization::FixedSigma(formula_sigma2(c)?),
        NormalizationSpec::SelfNormed => Normalization::SelfNormed,
    };
    let mode = match cfg.mode {
        ModeSpec::Quenched => CltMode::Quenched,
        ModeSpec::Annealed => CltMode::Annealed,
    };
    let mut rows = Vec::new();
    let mut details = Vec::new();
    for &n in &cfg.n {
        let r = clt_test(&c.engine, &s, &phi, n, cfg.samples, normalization, mode, cfg.seed)?;
        rows.push(c.row("clt", n, r.ks_distance, r.sample_size));
        details.push(json!({
            "n": n,
            "sigma2_used": r.sigma2_used,
            "empirical_sigma2": r.empirical_sigma2,
            "normalization": r.normalization,
        }));
    }
    Ok(Output {
        rows,
        summary: json!({
            "mode": format!("{mode:?}").to_lowercase(),
            "ks_critical_95": ks_critical_95(cfg.samples),
            "runs": details,
        }),
    })
}

fn variance(c: &Ctx) -> Res {
    let cfg = c.cfg;
    let space = cfg.space()?.ok_or_else(|| CliError::Validation {
        field: "schedule.kind".into(),
        reason: "variance needs a constant or bernoulli schedule".into(),
    })?;
    let phi = cfg.observable(&c.engine)?;
    let r = annealed_variance(&c.engine, &space, &phi, cfg.k_max)?;
    let mut rows = vec![c
        .row("variance", r.truncation, r.sigma2, 0)
        .with_ci(r.sigma2 - Z_95 * r.stderr, r.sigma2 + Z_95 * r.stderr)];
    let mut summary = json!({
        "sigma2": r.sigma2,
        "truncation": r.truncation,
        "converging": r.converging,
        "mu_mean": r.mu_mean,
        "stationary_residual": r.stationary_residual,
        "partial_sums": r.partial_sums,
    });
    if cfg.mc_check {
        let n = cfg.n[0];
        let (v, se) = annealed_mc_variance(&c.engine, &space, &phi, n, cfg.samples, cfg.seed)?;
        rows.push(
            c.row("variance_mc", n, v, cfg.samples)
                .with_ci(v - Z_95 * se, v + Z_95 * se),
        );
        summary["mc_relative_gap"] = json!((v - r.sigma2).abs() / r.sigma2.abs().max(f64::MIN_POSITIVE));
    }
    Ok(Output { rows, summary })
}

fn quenched(c: &Ctx) -> Res {
    let cfg = c.cfg;
    let phi = cfg.observable(&c.engine)?;
    let n = cfg.n[0];
    let base = cfg.schedule()?;
    let draws: Vec<Schedule<f64>> = match &base {
        Schedule::Bernoulli { space, .. } => (0..cfg.draws)
            .map(|d| Schedule::Bernoulli {
                space: space.clone(),
                seed: omega_seed(cfg.seed, d),
                offset: 0,
            })
            .collect(),
        other => vec![other.clone()],
    };
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for s in &draws {
        let q = quenched_variance(&c.engine, s, &phi, n, cfg.samples, cfg.seed)?;
        rows.push(
            c.row("quenched-variance", n, q.sigma2, q.samples)
                .with_ci(q.sigma2 - Z_95 * q.stderr, q.sigma2 + Z_95 * q.stderr),
        );
        values.push(q.sigma2);
    }
    let hi = values.iter().copied().fold(f64::MIN, f64::max);
    let lo = values.iter().copied().fold(f64::MAX, f64::min);
    let avg = values.iter().sum::<f64>() / values.len() as f64;
    let mut summary = json!({ "relative_spread": (hi - lo) / avg, "mean": avg });
    if let Some(space) = cfg.space()? {
        let s2 = annealed_variance(&c.engine, &space, &phi, cfg.k_max)?.sigma2;
        let worst = values.iter().map(|v| (v - s2).abs() / s2).fold(0.0, f64::max);
        summary["annealed_sigma2"] = json!(s2);
        summary["max_relative_gap_to_annealed"] = json!(worst);
    }
    Ok(Output { rows, summary })
}

fn centering(c: &Ctx) -> Res {
    let cfg = c.cfg;
    let space = cfg.space()?.expect("validated bernoulli");
    let phi = cfg.observable(&c.engine)?;
    let r = centering_diagnostic(&c.engine, &space, &phi, &cfg.n, cfg.draws, cfg.seed)?;
    let mut rows = Vec::new();
    for &(beta, m) in &r.single_map_means {
        rows.push(ExperimentRecord::new("centering_mean", &[beta], 0, m, 0, cfg.seed));
    }
    rows.push(c.row("centering_gap", 0, r.max_mean_gap, 0));
    for d in &r.drift {
        rows.push(c.row("centering_drift", d.n, d.variance, r.draws));
    }
    let first = r.drift.first().map(|d| d.variance).unwrap_or(f64::NAN);
    let last = r.drift.last().map(|d| d.variance).unwrap_or(f64::NAN);
    Ok(Output {
        rows,
        summary: json!({
            "max_mean_gap": r.max_mean_gap,
            "drift_means": r.drift.iter().map(|d| d.mean).collect::<Vec<_>>(),
            "drift_variance_ratio_last_to_first": last / first,
        }),
    })
}

fn product(c: &Ctx) -> Res {
    let cfg = c.cfg;
    let space = cfg.space()?.expect("validated bernoulli");
    let phi = cfg.observable(&c.engine)?;
    let n = cfg.n[0];
    let r = product_system_test(&c.engine, &space, &phi, n, cfg.samples, cfg.k_max, cfg.seed)?;
    let se = r.sigma_tilde2_stderr;
    let mut rows = vec![
        c.row("product_sigma_tilde2", n, r.sigma_tilde2, r.samples)
            .with_ci(r.sigma_tilde2 - Z_95 * se, r.sigma_tilde2 + Z_95 * se),
        c.row("product_ratio", n, r.ratio, r.samples),
    ];
    if let Some(ks) = r.ks_distance {
        rows.push(c.row("product_ks", n, ks, r.samples));
    }
    Ok(Output {
        rows,
        summary: json!({ "sigma2": r.sigma2, "ratio": r.ratio, "ks_distance": r.ks_distance }),
    })
}
