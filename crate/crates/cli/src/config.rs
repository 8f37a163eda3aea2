//! Experiment config files and their resolution into library values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use intermittency::experiments::Engine;
use intermittency::grid::MeasureKind;
use intermittency::maps::MapParam;
use intermittency::observable::Observable;
use intermittency::schedule::{ParameterSpace, Schedule};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Decay,
    Ld,
    Md,
    Clt,
    Variance,
    QuenchedVariance,
    Centering,
    Product,
    Selftest,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Decay => "decay",
            Experiment::Ld => "ld",
            Experiment::Md => "md",
            Experiment::Clt => "clt",
            Experiment::Variance => "variance",
            Experiment::QuenchedVariance => "quenched-variance",
            Experiment::Centering => "centering",
            Experiment::Product => "product",
            Experiment::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    Fixed,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub alphas: Vec<f64>,
    /// Bernoulli only; empty means uniform.
    pub probs: Vec<f64>,
    /// Bernoulli only; defaults to the master seed.
    pub seed: Option<u64>,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Constant,
            alphas: vec![0.5],
            probs: Vec::new(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservableKind {
    Identity,
    Constant,
    Cosine,
    IndicatorSmoothed,
    Polynomial,
    Coboundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservableSpec {
    pub kind: ObservableKind,
    /// constant value, or cosine amplitude
    pub value: f64,
    /// cosine frequency
    pub k: f64,
    pub a: f64,
    pub b: f64,
    pub width: f64,
    pub coeffs: Vec<f64>,
    /// coboundary map exponent
    pub beta: f64,
    /// subtract the mean under the schedule's stationary (or invariant) measure
    pub recenter: bool,
}

impl Default for ObservableSpec {
    fn default() -> Self {
        Self {
            kind: ObservableKind::Identity,
            value: 1.0,
            k: 1.0,
            a: 0.25,
            b: 0.75,
            width: 0.1,
            coeffs: vec![0.0, 1.0],
            beta: 0.2,
            recenter: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureSpec {
    Lebesgue,
    /// `x^(-alpha_max) dx`
    Tilde,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationSpec {
    Fixed,
    SelfNormed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSpec {
    Quenched,
    Annealed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub samples: usize,
    pub grid_n: usize,
    pub cone_a: f64,
    pub stationary_tol: f64,
    /// 0 means one worker per core.
    pub threads: usize,
    pub out: Option<PathBuf>,
    /// Write measured wall time into the CSV instead of 0.
    pub wall_ms: bool,
    pub schedule: ScheduleSpec,
    pub observable: ObservableSpec,
    pub measure: MeasureSpec,
    pub n: Vec<usize>,
    pub eps: Option<f64>,
    pub t: Option<f64>,
    pub tau: Option<f64>,
    pub p: Option<f64>,
    pub centered: bool,
    pub k_max: usize,
    pub draws: usize,
    pub normalization: NormalizationSpec,
    /// Fixed-normalisation variance; computed from the correlation sum when absent.
    pub sigma2: Option<f64>,
    pub mode: ModeSpec,
    /// decay: initial density `x^(-gamma)`
    pub gamma: f64,
    /// decay: window of the log-log fit
    pub fit_range: [usize; 2],
    /// variance: also run the Monte Carlo cross-check at `n[0]`
    pub mc_check: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 1,
            samples: 10_000,
            grid_n: intermittency::experiments::DEFAULT_GRID_N,
            cone_a: 20.0,
            stationary_tol: 1e-8,
            threads: 0,
            out: None,
            wall_ms: false,
            schedule: ScheduleSpec::default(),
            observable: ObservableSpec::default(),
            measure: MeasureSpec::Lebesgue,
            n: vec![1000],
            eps: None,
            t: None,
            tau: None,
            p: None,
            centered: true,
            k_max: 200,
            draws: 20,
            normalization: NormalizationSpec::Fixed,
            sigma2: None,
            mode: ModeSpec::Quenched,
            gamma: 0.25,
            fit_range: [50, 500],
            mc_check: false,
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub grid_n: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub wall_ms: bool,
}

fn bad(field: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad("config", e.message().to_string()))
    }

    /// Applies flags, fills the output path and checks every field the
    /// chosen experiment reads.
    pub fn resolve(mut self, experiment: Experiment, o: &Overrides) -> Result<Self, CliError> {
        if let Some(e) = self.experiment {
            if e != experiment {
                return Err(bad(
                    "experiment",
                    format!("config is for `{}`, not `{}`", e.name(), experiment.name()),
                ));
            }
        }
        self.experiment = Some(experiment);
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.samples {
            self.samples = v;
        }
        if let Some(v) = o.grid_n {
            self.grid_n = v;
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = o.threads {
            self.threads = v;
        }
        self.wall_ms |= o.wall_ms;
        if self.out.is_none() {
            self.out = Some(PathBuf::from(format!("out/{}.csv", experiment.name())));
        }
        if self.schedule.seed.is_none() {
            self.schedule.seed = Some(self.seed);
        }
        self.validate(experiment)?;
        Ok(self)
    }

    fn validate(&self, e: Experiment) -> Result<(), CliError> {
        if self.grid_n < 64 {
            return Err(bad("grid_n", "need at least 64 nodes"));
        }
        if e == Experiment::Selftest {
            return Ok(());
        }
        if !(self.cone_a > 1.0) {
            return Err(bad("cone_a", "must exceed 1"));
        }
        if !(self.stationary_tol > 0.0) {
            return Err(bad("stationary_tol", "must be positive"));
        }
        let sc = &self.schedule;
        if sc.alphas.is_empty() {
            return Err(bad("schedule.alphas", "at least one exponent is needed"));
        }
        for (i, &a) in sc.alphas.iter().enumerate() {
            if !(a > 0.0 && a < 1.0) {
                return Err(bad(format!("schedule.alphas[{i}]"), format!("{a} is outside (0, 1)")));
            }
        }
        match sc.kind {
            ScheduleKind::Constant if sc.alphas.len() != 1 => {
                return Err(bad("schedule.alphas", "a constant schedule takes exactly one exponent"));
            }
            ScheduleKind::Bernoulli if !sc.probs.is_empty() && sc.probs.len() != sc.alphas.len() => {
                return Err(bad("schedule.probs", "one probability per exponent"));
            }
            _ => {}
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(bad("n", "need a non-empty list of positive lengths"));
        }
        let ob = &self.observable;
        match ob.kind {
            ObservableKind::IndicatorSmoothed if !(ob.width > 0.0 && ob.a <= ob.b) => {
                return Err(bad("observable", "indicator needs a <= b and width > 0"));
            }
            ObservableKind::Coboundary if !(ob.beta > 0.0 && ob.beta < 1.0) => {
                return Err(bad("observable.beta", format!("{} is outside (0, 1)", ob.beta)));
            }
            ObservableKind::Polynomial if ob.coeffs.is_empty() => {
                return Err(bad("observable.coeffs", "empty coefficient list"));
            }
            _ => {}
        }
        let need_space = matches!(e, Experiment::Centering | Experiment::Product)
            || (e == Experiment::Clt && self.mode == ModeSpec::Annealed);
        if need_space && sc.kind != ScheduleKind::Bernoulli {
            return Err(bad("schedule.kind", format!("`{}` needs a bernoulli schedule", e.name())));
        }
        if e == Experiment::Centering && sc.alphas.len() < 2 {
            return Err(bad("schedule.alphas", "centering needs at least two maps"));
        }
        let positive = |v: Option<f64>, field: &str| match v {
            Some(x) if x > 0.0 => Ok(x),
            Some(x) => Err(bad(field, format!("must be positive, got {x}"))),
            None => Err(bad(field, format!("required by `{}`", e.name()))),
        };
        let mc = matches!(
            e,
            Experiment::Simulate
                | Experiment::Ld
                | Experiment::Md
                | Experiment::Clt
                | Experiment::QuenchedVariance
                | Experiment::Product
        );
        if mc && self.samples < 2 {
            return Err(bad("samples", "need at least 2 samples"));
        }
        match e {
            Experiment::Ld => {
                positive(self.eps, "eps")?;
                if self.samples < 1000 {
                    return Err(bad("samples", "deviation estimates need at least 1000 samples"));
                }
                if let Some(p) = self.p {
                    if !(p >= 1.0) {
                        return Err(bad("p", format!("moment order must be at least 1, got {p}")));
                    }
                }
            }
            Experiment::Md => {
                positive(self.t, "t")?;
                let tau = positive(self.tau, "tau")?;
                if !(tau > 0.5 && tau <= 1.0) {
                    return Err(bad("tau", format!("must lie in (1/2, 1], got {tau}")));
                }
                if self.samples < 1000 {
                    return Err(bad("samples", "deviation estimates need at least 1000 samples"));
                }
            }
            Experiment::Decay => {
                if !(self.gamma > 0.0 && self.gamma < 1.0) {
                    return Err(bad("gamma", "must lie in (0, 1)"));
                }
                if self.fit_range[0] == 0 || self.fit_range[0] >= self.fit_range[1] {
                    return Err(bad("fit_range", "need 1 <= start < end"));
                }
            }
            Experiment::Variance | Experiment::Product | Experiment::Clt => {
                if self.k_max == 0 {
                    return Err(bad("k_max", "must be at least 1"));
                }
                if let Some(s2) = self.sigma2 {
                    if !(s2 > 0.0) {
                        return Err(bad("sigma2", "must be positive"));
                    }
                }
            }
            Experiment::Centering | Experiment::QuenchedVariance => {
                if self.draws < 2 && sc.kind == ScheduleKind::Bernoulli {
                    return Err(bad("draws", "need at least 2 realisations"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn out_path(&self) -> &Path {
        self.out.as_deref().expect("resolved config has an output path")
    }

    pub fn sidecar_path(&self) -> PathBuf {
        self.out_path().with_extension("json")
    }

    pub fn alpha_max(&self) -> f64 {
        self.schedule.alphas.iter().copied().fold(0.0, f64::max)
    }

    pub fn engine(&self) -> intermittency::Result<Engine> {
        Engine::new(self.grid_n)?
            .with_cone_a(self.cone_a)?
            .with_stationary_tol(self.stationary_tol)
    }

    fn maps(&self) -> intermittency::Result<Vec<MapParam<f64>>> {
        self.schedule.alphas.iter().map(|&a| MapParam::new(a)).collect()
    }

    /// The parameter set of a Bernoulli schedule, or the one-map set of a
    /// constant schedule.
    pub fn space(&self) -> intermittency::Result<Option<ParameterSpace<f64>>> {
        let maps = self.maps()?;
        let k = maps.len();
        match self.schedule.kind {
            ScheduleKind::Fixed => Ok(None),
            ScheduleKind::Constant => ParameterSpace::new(maps, vec![1.0], self.alpha_max()).map(Some),
            ScheduleKind::Bernoulli => {
                let probs = if self.schedule.probs.is_empty() {
                    vec![1.0 / k as f64; k]
                } else {
                    self.schedule.probs.clone()
                };
                ParameterSpace::with_repeats(maps, probs, self.alpha_max()).map(Some)
            }
        }
    }

    pub fn schedule(&self) -> intermittency::Result<Schedule<f64>> {
        let maps = self.maps()?;
        Ok(match self.schedule.kind {
            ScheduleKind::Constant => Schedule::constant(maps[0]),
            ScheduleKind::Fixed => Schedule::fixed(maps),
            ScheduleKind::Bernoulli => Schedule::bernoulli(
                self.space()?.expect("bernoulli schedules have a space"),
                self.schedule.seed.unwrap_or(self.seed),
            ),
        })
    }

    pub fn observable(&self, engine: &Engine) -> intermittency::Result<Observable<f64>> {
        let o = &self.observable;
        let phi = match o.kind {
            ObservableKind::Identity => Observable::identity(),
            ObservableKind::Constant => Observable::constant(o.value),
            ObservableKind::Cosine => Observable::cosine(o.value, o.k),
            ObservableKind::IndicatorSmoothed => Observable::indicator_smoothed(o.a, o.b, o.width)?,
            ObservableKind::Polynomial => Observable::polynomial(o.coeffs.clone()),
            ObservableKind::Coboundary => Observable::coboundary(MapParam::new(o.beta)?),
        };
        if !o.recenter {
            return Ok(phi);
        }
        let space = self.space()?.ok_or_else(|| intermittency::Error::InvalidParameter {
            field: "observable.recenter",
            reason: "a fixed-list schedule has no stationary measure".into(),
        })?;
        let mu = engine.stationary_measure(&space)?;
        Ok(phi.shifted(engine.mean(&phi, &mu)))
    }

    pub fn measure(&self, engine: &Engine) -> intermittency::Result<MeasureKind<f64>> {
        match self.measure {
            MeasureSpec::Lebesgue => Ok(MeasureKind::Lebesgue),
            MeasureSpec::Tilde => MeasureKind::tilde(self.alpha_max()),
            MeasureSpec::Stationary => {
                let space = self.space()?.ok_or_else(|| intermittency::Error::InvalidParameter {
                    field: "measure",
                    reason: "a fixed-list schedule has no stationary measure".into(),
                })?;
                engine.stationary_measure(&space)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = Config::default().resolve(Experiment::Simulate, &Overrides::default()).unwrap();
        assert_eq!(c.out_path(), Path::new("out/simulate.csv"));
        assert_eq!(c.sidecar_path(), PathBuf::from("out/simulate.json"));
    }

    #[test]
    fn flags_override_file() {
        let c = Config::parse("seed = 3\nsamples = 2000\n").unwrap();
        let o = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        let c = c.resolve(Experiment::Simulate, &o).unwrap();
        assert_eq!((c.seed, c.samples), (9, 2000));
    }

    #[test]
    fn bad_alpha_names_the_field() {
        let c = Config::parse("[schedule]\nkind = \"constant\"\nalphas = [1.0]\n").unwrap();
        match c.resolve(Experiment::Simulate, &Overrides::default()) {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "schedule.alphas[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::parse("sedd = 3\n").is_err());
    }

    #[test]
    fn experiment_mismatch() {
        let c = Config::parse("experiment = \"ld\"\n").unwrap();
        assert!(c.resolve(Experiment::Md, &Overrides::default()).is_err());
    }
}
