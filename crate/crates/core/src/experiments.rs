//! Monte Carlo and operator-based estimators: deviation probabilities,
//! moments, variances, CLT checks, the centering diagnostic and the
//! product system.
//!
//! Every sample `i` draws its randomness from counter-addressed streams
//! keyed by `(seed, i)`, results are collected in index order, and sums use
//! fixed-order pairwise reduction, so outputs do not depend on the number of
//! worker threads.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cone::ConeParams;
use crate::error::{invalid, Error, Result};
use crate::grid::{DensityGrid, Functional, MeasureKind, Mesh};
use crate::maps::MapParam;
use crate::martingale::{birkhoff_sum_maps, centering_table_with, MeanFunctional};
use crate::num::pairwise_sum;
use crate::observable::Observable;
use crate::rng::{child_seed, purpose, stream_id, unit_at};
use crate::schedule::{ParameterSpace, Schedule};
use crate::stats::{ks_normal, mean, variance, wilson_interval};
use crate::transfer::{stationary_density_with, OperatorCache, StationaryDensity, StationaryOptions};

/// Default node count for experiments.
pub const DEFAULT_GRID_N: usize = 4096;

/// Shared numerical context: one mesh, its operator cache, the cone constant.
#[derive(Debug)]
pub struct Engine {
    cache: OperatorCache<f64>,
    cone_a: f64,
    stationary_tol: f64,
}

impl Engine {
    pub fn new(grid_n: usize) -> Result<Self> {
        Ok(Self::with_mesh(&Mesh::new(grid_n, Mesh::<f64>::default_alpha())?))
    }

    pub fn with_mesh(mesh: &Arc<Mesh<f64>>) -> Self {
        Self {
            cache: OperatorCache::new(mesh),
            cone_a: ConeParams::<f64>::default_a(),
            stationary_tol: 1e-8,
        }
    }

    pub fn with_cone_a(mut self, a: f64) -> Result<Self> {
        ConeParams::new(a, 0.5)?;
        self.cone_a = a;
        Ok(self)
    }

    pub fn with_stationary_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(invalid("tol", "tolerance must be positive"));
        }
        self.stationary_tol = tol;
        Ok(self)
    }

    pub fn mesh(&self) -> &Arc<Mesh<f64>> {
        self.cache.mesh()
    }

    pub fn cache(&self) -> &OperatorCache<f64> {
        &self.cache
    }

    pub fn cone_a(&self) -> f64 {
        self.cone_a
    }

    pub fn stationary(&self, space: &ParameterSpace<f64>) -> Result<StationaryDensity<f64>> {
        let opts = StationaryOptions {
            tol: self.stationary_tol,
            ..StationaryOptions::default()
        };
        stationary_density_with(&self.cache, space, opts)
    }

    /// `mu = h dm` for the annealed system on `space`.
    pub fn stationary_measure(&self, space: &ParameterSpace<f64>) -> Result<MeasureKind<f64>> {
        Ok(MeasureKind::Stationary(Arc::new(self.stationary(space)?.density)))
    }

    /// The absolutely continuous invariant measure of `T_beta`.
    pub fn invariant_measure(&self, beta: MapParam<f64>) -> Result<MeasureKind<f64>> {
        let single = ParameterSpace::new(vec![beta], vec![1.0], beta.alpha())?;
        Ok(MeasureKind::SingleMapInvariant {
            beta,
            density: Arc::new(self.stationary(&single)?.density),
        })
    }

    /// `mu(phi) / mu(X)`.
    pub fn mean(&self, phi: &Observable<f64>, mu: &MeasureKind<f64>) -> f64 {
        MeanFunctional::new(self.mesh(), phi).mean(&mu.weight_grid(self.mesh()))
    }
}

/// Inverse-CDF sampling from a [`MeasureKind`], normalised to a probability.
#[derive(Debug, Clone)]
pub enum Sampler {
    Uniform,
    /// Density `(1 - alpha) x^(-alpha)`: `x = u^(1/(1-alpha))`.
    Power { inv_exponent: f64 },
    /// Piecewise-linear CDF through the nodal masses of a density grid.
    Table {
        nodes: Vec<f64>,
        cdf: Vec<f64>,
        tail: f64,
    },
}

impl Sampler {
    pub fn new(mu: &MeasureKind<f64>) -> Result<Self> {
        Ok(match mu {
            MeasureKind::Lebesgue => Sampler::Uniform,
            MeasureKind::Tilde { alpha } => Sampler::Power {
                inv_exponent: 1.0 / (1.0 - alpha),
            },
            MeasureKind::Stationary(h) | MeasureKind::SingleMapInvariant { density: h, .. } => {
                Self::from_density(h)?
            }
        })
    }

    fn from_density(h: &DensityGrid<f64>) -> Result<Self> {
        if h.values().iter().any(|&v| v < 0.0) || !(h.tail_exponent() > -1.0) {
            return Err(invalid("measure", "sampling needs a nonnegative integrable density"));
        }
        let mut cdf = h.cumulative_mass();
        let total = *cdf.last().expect("non-empty mesh");
        if !(total > 0.0) {
            return Err(invalid("measure", "density has no mass"));
        }
        for c in &mut cdf {
            *c /= total;
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("measure", "interpolated density is negative somewhere"));
        }
        Ok(Sampler::Table {
            nodes: h.nodes().to_vec(),
            cdf,
            tail: h.tail_exponent(),
        })
    }

    /// Maps a uniform draw in (0, 1) to a point of [0, 1].
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            Sampler::Uniform => u,
            Sampler::Power { inv_exponent } => u.powf(*inv_exponent),
            Sampler::Table { nodes, cdf, tail } => {
                if u <= cdf[0] {
                    return nodes[0] * (u / cdf[0]).powf(1.0 / (1.0 + tail));
                }
                let i = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1);
                let (c0, c1) = (cdf[i - 1], cdf[i]);
                let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
                nodes[i - 1] + t * (nodes[i] - nodes[i - 1])
            }
        }
    }
}

/// Uniform draw feeding the `i`-th initial point.
pub fn initial_uniform(seed: u64, i: usize) -> f64 {
    unit_at(seed, stream_id(purpose::INITIAL_POINTS, 0), i as u64)
}

/// Uniform draw feeding the `i`-th second coordinate of the product system.
pub fn second_uniform(seed: u64, i: usize) -> f64 {
    unit_at(seed, stream_id(purpose::SECOND_POINTS, 0), i as u64)
}

/// Seed of the `i`-th independent realisation of a random schedule.
pub fn omega_seed(seed: u64, i: usize) -> u64 {
    child_seed(seed, stream_id(purpose::OMEGA_SEEDS, i as u64))
}

fn check_samples(samples: usize, min: usize) -> Result<()> {
    if samples < min {
        return Err(invalid("samples", format!("need at least {min}, got {samples}")));
    }
    Ok(())
}

fn check_ns(ns: &[usize]) -> Result<usize> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(invalid("n", "need a non-empty list of positive n"));
    }
    Ok(*ns.iter().max().expect("non-empty"))
}

/// Birkhoff sums at every checkpoint in `ns` along one orbit.
fn sums_at(
    maps: &[MapParam<f64>],
    phi: &Observable<f64>,
    x0: f64,
    centers: Option<&[f64]>,
    ns: &[usize],
) -> Vec<f64> {
    let mut out = vec![0.0; ns.len()];
    let mut x = x0;
    let mut sum = 0.0;
    for (k, map) in maps.iter().enumerate() {
        x = map.apply_unchecked(x);
        sum += phi.eval(x) - centers.map_or(0.0, |c| c[k + 1]);
        for (slot, &n) in out.iter_mut().zip(ns) {
            if n == k + 1 {
                *slot = sum;
            }
        }
    }
    out
}

/// For each `n` in `ns`, the `samples` values of the (optionally centred)
/// sum along the fixed schedule `s`, with `x0 ~ mu`.
pub fn quenched_sums(
    engine: &Engine,
    s: &Schedule<f64>,
    phi: &Observable<f64>,
    ns: &[usize],
    samples: usize,
    mu: &MeasureKind<f64>,
    centered: bool,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let n_max = check_ns(ns)?;
    let maps = s.symbols(n_max)?;
    let table = if centered {
        Some(centering_table_with(engine.cache(), s, phi, mu, n_max)?.means)
    } else {
        None
    };
    let sampler = Sampler::new(mu)?;
    let per_sample: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let x0 = sampler.sample(initial_uniform(seed, i));
            sums_at(&maps, phi, x0, table.as_deref(), ns)
        })
        .collect();
    Ok((0..ns.len())
        .map(|j| per_sample.iter().map(|v| v[j]).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationEstimate {
    pub n: usize,
    /// `eps` for large deviations, `t` for moderate ones.
    pub epsilon: f64,
    /// `Some(tau)` for moderate deviations.
    pub tau: Option<f64>,
    pub threshold: f64,
    pub successes: u64,
    pub samples: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub measure: String,
    pub centered: bool,
}

impl DeviationEstimate {
    fn new(
        n: usize,
        epsilon: f64,
        tau: Option<f64>,
        threshold: f64,
        sums: &[f64],
        mu: &MeasureKind<f64>,
        centered: bool,
    ) -> Self {
        let successes = sums.iter().filter(|s| s.abs() > threshold).count() as u64;
        let samples = sums.len();
        let (ci_low, ci_high) = wilson_interval(successes, samples as u64);
        Self {
            n,
            epsilon,
            tau,
            threshold,
            successes,
            samples,
            p_hat: successes as f64 / samples as f64,
            ci_low,
            ci_high,
            measure: mu.label(),
            centered,
        }
    }

    /// `p_hat`, or the upper Wilson bound when nothing was observed, so that
    /// log-log regressions stay defined and err towards a shallower slope.
    pub fn rate_value(&self) -> f64 {
        if self.successes == 0 {
            self.ci_high
        } else {
            self.p_hat
        }
    }
}

/// `m{ |S_n - sum c_k| > n eps }` for every `n` in `ns`, sharing orbits.
#[allow(clippy::too_many_arguments)]
pub fn deviation_curve(
    engine: &Engine,
    s: &Schedule<f64>,
    phi: &Observable<f64>,
    ns: &[usize],
    eps: f64,
    samples: usize,
    mu: &MeasureKind<f64>,
    centered: bool,
    seed: u64,
) -> Result<Vec<DeviationEstimate>> {
    if !(eps > 0.0) {
        return Err(invalid("eps", "must be positive"));
    }
    check_samples(samples, 1000)?;
    let sums = quenched_sums(engine, s, phi, ns, samples, mu, centered, seed)?;
    Ok(ns
        .iter()
        .zip(&sums)
        .map(|(&n, v)| DeviationEstimate::new(n, eps, None, n as f64 * eps, v, mu, centered))
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn deviation_probability(
    engine: &Engine,
    s: &Schedule<f64>,
    phi: &Observable<f64>,
    n: usize,
    eps: f64,
    samples: usize,
    mu: &MeasureKind<f64>,
    centered: bool,
    seed: u64,
) -> Result<DeviationEstimate> {
    Ok(deviation_curve(engine, s, phi, &[n], eps, samples, mu, centered, seed)?.remove(0))
}

/// `m{ |S^_n| > n^tau t }` for every `n` in `ns`; always centred.
#[allow(clippy::too_many_arguments)]
pub fn moderate_deviation_curve(
    engine: &Engine,
    s: &Schedule<f64>,
    phi: &Observable<f64>,
    ns: &[usize],
    tau: f64,
    t: f64,
    samples: usize,
    mu: &MeasureKind<f64>,
    seed: u64,
) -> Result<Vec<DeviationEstimate>> {
    if !(tau > 0.5 && tau <= 1.0) {
        return Err(invalid("tau", format!("must lie in (1/2, 1], got {tau}")));
    }
    if !(t > 0.0) {
        return Err(invalid("t", "must be positive"));
    }
    check_samples(samples, 1000)?;
    let sums = quenched_sums(engine, s, phi, ns, samples, mu, true, seed)?;
    Ok(ns
        .iter()
        .zip(&sums)
        .map(|(&n, v)| {
            DeviationEstimate::new(n, t, Some(tau), (n as f64).powf(tau) * t, v, mu, true)
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn moderate_deviation(
    engine: &Engine,
    s: &Schedule<f64>,
    phi: &Observable<f64>,
    n: usize,
    tau: f64,
    t: f64,
    samples: usize,
    mu: &MeasureKind<f64>,
    seed: u64,
) -> Result<DeviationEstimate> {
    Ok(moderate_deviation_curve(engine, s, phi, &[n], tau, t, samples, mu, seed)?.remove(0))
}

/// Log-log slope of tail probabilities against `n`.
pub fn tail_slope(estimates: &[DeviationEstimate]) -> Result<f64> {
    let x: Vec<f64> = estimates.iter().map(|e| e.n as f64).collect();
    let y: Vec<f64> = estimates.iter().map(DeviationEstimate::rate_value).collect();
    crate::stats::log_log_slope(&x, &y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub n: usize,
    pub p: f64,
    /// Monte Carlo mean of `|S^_n|^(2p)`.
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn moment_curve(
    engine: &Engine,
    s: &Schedule<f64>,
    phi: &Observable<f64>,
    ns: &[usize],
    p: f64,
    samples: usize,
    mu: &MeasureKind<f64>,
    seed: u64,
) -> Result<Vec<MomentEstimate>> {
    if !(p >= 1.0) {
        return Err(invalid("p", format!("moment order must be >= 1, got {p}")));
    }
    check_samples(samples, 2)?;
    let sums = quenched_sums(engine, s, phi, ns, samples, mu, true, seed)?;
    Ok(ns
        .iter()
        .zip(&sums)
        .map(|(&n, v)| {
            let powers: Vec<f64> = v.iter().map(|x| x.abs().powf(2.0 * p)).collect();
            MomentEstimate {
                n,
                p,
                estimate: mean(&powers),
                stderr: (variance(&powers) / samples as f64).sqrt(),
                samples,
            }
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn moment_estimate(
    engine: &Engine,
    s: &Schedule<f64>,
    phi: &Observable<f64>,
    n: usize,
    p: f64,
    samples: usize,
    mu: &MeasureKind<f64>,
    seed: u64,
) -> Result<MomentEstimate> {
    Ok(moment_curve(engine, s, phi, &[n], p, samples, mu, seed)?.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub sigma2: f64,
    pub truncation: usize,
    /// `sum_{j=0}^k mu(phi U^j phi)` for `k = 0..=K`.
    pub partial_sums: Vec<f64>,
    /// Twice the change of the partial sums over the last ten terms.
    pub stderr: f64,
    /// False when the last ten increments did not shrink in magnitude.
    pub converging: bool,
    /// `mu(phi)` removed before the computation.
    pub mu_mean: f64,
    pub stationary_residual: f64,
}

/// `sigma^2 = -mu(phi^2) + 2 sum_{k=0}^K int phi P^k(phi h) dm` for `phi`
/// re-centred to `mu(phi) = 0`, with `P` the annealed operator.
pub fn annealed_variance(
    engine: &Engine,
    space: &ParameterSpace<f64>,
    phi: &Observable<f64>,
    k_max: usize,
) -> Result<VarianceReport> {
    if k_max == 0 {
        return Err(invalid("K", "truncation must be >= 1"));
    }
    let st = engine.stationary(space)?;
    let h = &st.density;
    let mesh = engine.mesh();
    let mu_mean = MeanFunctional::new(mesh, phi).mean(h);
    let centred = phi.shifted(mu_mean);
    let against = Functional::new(mesh, |x| centred.eval(x), centred.breakpoints());
    let square = Functional::new(mesh, |x| centred.eval(x).powi(2), centred.breakpoints());
    let mass = h.integrate(&MeasureKind::Lebesgue);
    let phi_sq = square.apply(h) / mass;

    let op = engine.cache().annealed(space);
    let mut partial_sums = Vec::with_capacity(k_max + 1);
    let mut increments = Vec::with_capacity(k_max + 1);
    increments.push(phi_sq);
    partial_sums.push(phi_sq);
    let mut g = op.apply_weighted(h, &|x| centred.eval(x));
    for _ in 1..=k_max {
        let c = against.apply(&g) / mass;
        increments.push(c);
        partial_sums.push(partial_sums.last().expect("non-empty") + c);
        g = op.apply(&g);
    }
    let last = *partial_sums.last().expect("non-empty");
    let back = k_max.saturating_sub(10);
    let stderr = 2.0 * (last - partial_sums[back]).abs();
    let converging = k_max < 10 || increments[k_max].abs() < increments[k_max - 9].abs();
    Ok(VarianceReport {
        sigma2: -phi_sq + 2.0 * last,
        truncation: k_max,
        partial_sums,
        stderr,
        converging,
        mu_mean,
        stationary_residual: st.residual,
    })
}

/// Sums `S_n` of `phi` (already `mu`-centred by the caller) under the annealed
/// law: sample `i` draws its own schedule and `x0 ~ mu`.
pub fn annealed_sums(
    space: &ParameterSpace<f64>,
    phi: &Observable<f64>,
    n: usize,
    samples: usize,
    mu: &MeasureKind<f64>,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let sampler = Sampler::new(mu)?;
    let space = Arc::new(space.clone());
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let omega = Schedule::Bernoulli {
                space: Arc::clone(&space),
                seed: omega_seed(seed, i),
                offset: 0,
            };
            let maps = omega.symbols(n)?;
            let x0 = sampler.sample(initial_uniform(seed, i));
            Ok(birkhoff_sum_maps(&maps, phi, x0, None))
        })
        .collect()
}

/// `Var(S_n / sqrt n)` under the annealed law with `phi` re-centred to
/// `mu(phi) = 0`; returns the estimate and its standard error.
pub fn annealed_mc_variance(
    engine: &Engine,
    space: &ParameterSpace<f64>,
    phi: &Observable<f64>,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_samples(samples, 2)?;
    let mu = engine.stationary_measure(space)?;
    let centred = phi.shifted(engine.mean(phi, &mu));
    let sums = annealed_sums(space, &centred, n, samples, &mu, seed)?;
    let scaled: Vec<f64> = sums.iter().map(|s| s / (n as f64).sqrt()).collect();
    Ok(second_moment_with_stderr(&scaled))
}

fn second_moment_with_stderr(xs: &[f64]) -> (f64, f64) {
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let m = variance(xs);
    (m, (variance(&sq) / xs.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuenchedVariance {
    pub n: usize,
    /// `sigma_n^2(omega) / n`.
    pub sigma2: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// `sigma_n^2(omega) / n = m(S^_n^2) / n` along a fixed schedule, `x ~ m`.
pub fn quenched_variance(
    engine: &Engine,
    s: &Schedule<f64>,
    phi: &Observable<f64>,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<QuenchedVariance> {
    check_samples(samples, 2)?;
    let sums = quenched_sums(engine, s, phi, &[n], samples, &MeasureKind::Lebesgue, true, seed)?;
    let sq: Vec<f64> = sums[0].iter().map(|x| x * x / n as f64).collect();
    Ok(QuenchedVariance {
        n,
        sigma2: mean(&sq),
        stderr: (variance(&sq) / samples as f64).sqrt(),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// `S_n / (sigma sqrt n)` with the given `sigma^2`.
    FixedSigma(f64),
    /// `S_n / sigma_n(omega)` with `sigma_n^2` estimated from the same sample.
    SelfNormed,
}

impl Normalization {
    pub fn label(&self) -> &'static str {
        match self {
            Normalization::FixedSigma(_) => "sqrt_n_fixed_sigma",
            Normalization::SelfNormed => "self_normed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CltMode {
    /// Fixed schedule, `x ~ m`, self-centred sums.
    Quenched,
    /// A fresh schedule per sample, `x ~ mu`, `phi` centred by `mu(phi)`.
    Annealed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CltReport {
    pub ks_distance: f64,
    pub sample_size: usize,
    pub sigma2_used: f64,
    pub normalization: &'static str,
    pub mode: CltMode,
    pub n: usize,
    /// Sample variance of `S_n / sqrt n`.
    pub empirical_sigma2: f64,
}

/// Kolmogorov-Smirnov distance between the normalised sums and `N(0, 1)`.
#[allow(clippy::too_many_arguments)]
pub fn clt_test(
    engine: &Engine,
    s: &Schedule<f64>,
    phi: &Observable<f64>,
    n: usize,
    samples: usize,
    normalization: Normalization,
    mode: CltMode,
    seed: u64,
) -> Result<CltReport> {
    check_samples(samples, 2)?;
    let sums = match mode {
        CltMode::Quenched => {
            quenched_sums(engine, s, phi, &[n], samples, &MeasureKind::Lebesgue, true, seed)?.remove(0)
        }
        CltMode::Annealed => {
            let space = s
                .space()
                .ok_or_else(|| invalid("schedule", "annealed mode needs a Bernoulli schedule"))?;
            let mu = engine.stationary_measure(space)?;
            let centred = phi.shifted(engine.mean(phi, &mu));
            annealed_sums(space, &centred, n, samples, &mu, seed)?
        }
    };
    let scaled: Vec<f64> = sums.iter().map(|x| x / (n as f64).sqrt()).collect();
    let empirical = {
        let sq: Vec<f64> = scaled.iter().map(|x| x * x).collect();
        mean(&sq)
    };
    let sigma2 = match normalization {
        Normalization::FixedSigma(s2) => s2,
        Normalization::SelfNormed => empirical,
    };
    if !(sigma2 >= 1e-10) {
        return Err(Error::Degenerate(format!("sigma^2 = {sigma2:e} is below 1e-10")));
    }
    Ok(CltReport {
        ks_distance: ks_normal(&scaled, sigma2)?,
        sample_size: samples,
        sigma2_used: sigma2,
        normalization: normalization.label(),
        mode,
        n,
        empirical_sigma2: variance(&scaled),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenteringReport {
    /// `(beta, mu_beta(phi))` for every map of the parameter set.
    pub single_map_means: Vec<(f64, f64)>,
    pub max_mean_gap: f64,
    /// Across-realisation statistics of `D_n = n^{-1/2} sum_{j<=n} m(phi o T^j)`.
    pub drift: Vec<DriftRow>,
    pub draws: usize,
}

pub fn centering_diagnostic(
    engine: &Engine,
    space: &ParameterSpace<f64>,
    phi: &Observable<f64>,
    n_list: &[usize],
    draws: usize,
    seed: u64,
) -> Result<CenteringReport> {
    if space.len() < 2 {
        return Err(invalid("omega", "the centering diagnostic needs at least two maps"));
    }
    check_samples(draws, 2)?;
    let n_max = check_ns(n_list)?;
    let mut single_map_means = Vec::with_capacity(space.len());
    for &beta in space.omegas() {
        let mu = engine.invariant_measure(beta)?;
        single_map_means.push((beta.alpha(), engine.mean(phi, &mu)));
    }
    let max_mean_gap = single_map_means
        .iter()
        .flat_map(|a| single_map_means.iter().map(move |b| (a.1 - b.1).abs()))
        .fold(0.0, f64::max);

    let space_arc = Arc::new(space.clone());
    let tables: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let omega = Schedule::Bernoulli {
                space: Arc::clone(&space_arc),
                seed: omega_seed(seed, d),
                offset: 0,
            };
            centering_table_with(engine.cache(), &omega, phi, &MeasureKind::Lebesgue, n_max)
                .map(|t| t.means)
        })
        .collect::<Result<_>>()?;
    let drift = n_list
        .iter()
        .map(|&n| {
            let values: Vec<f64> = tables
                .iter()
                .map(|c| pairwise_sum(&c[1..=n]) / (n as f64).sqrt())
                .collect();
            DriftRow {
                n,
                mean: mean(&values),
                variance: variance(&values),
            }
        })
        .collect();
    Ok(CenteringReport {
        single_map_means,
        max_mean_gap,
        drift,
        draws,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductReport {
    pub sigma_tilde2: f64,
    pub sigma_tilde2_stderr: f64,
    /// Annealed `sigma^2` of `phi` from the correlation formula.
    pub sigma2: f64,
    /// `sigma_tilde^2 / (2 sigma^2)`.
    pub ratio: f64,
    /// KS distance of `S_n(phi~) / sqrt(n sigma_tilde^2)` to `N(0, 1)`;
    /// `None` when `sigma_tilde^2` is degenerate.
    pub ks_distance: Option<f64>,
    pub n: usize,
    pub samples: usize,
}

/// Pairs `(x, y)` drawn independently from `mu`, driven by one shared random
/// schedule per sample, observed through `phi(x) - phi(y)`.
pub fn product_system_test(
    engine: &Engine,
    space: &ParameterSpace<f64>,
    phi: &Observable<f64>,
    n: usize,
    samples: usize,
    k_max: usize,
    seed: u64,
) -> Result<ProductReport> {
    check_samples(samples, 2)?;
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let variance_report = annealed_variance(engine, space, phi, k_max)?;
    let mu = engine.stationary_measure(space)?;
    let sampler = Sampler::new(&mu)?;
    let space_arc = Arc::new(space.clone());
    let sums: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let omega = Schedule::Bernoulli {
                space: Arc::clone(&space_arc),
                seed: omega_seed(seed, i),
                offset: 0,
            };
            let maps = omega.symbols(n)?;
            let x0 = sampler.sample(initial_uniform(seed, i));
            let y0 = sampler.sample(second_uniform(seed, i));
            let (mut x, mut y, mut sum) = (x0, y0, 0.0);
            for map in &maps {
                x = map.apply_unchecked(x);
                y = map.apply_unchecked(y);
                sum += phi.eval(x) - phi.eval(y);
            }
            Ok(sum / (n as f64).sqrt())
        })
        .collect::<Result<_>>()?;
    let (sigma_tilde2, stderr) = second_moment_with_stderr(&sums);
    let ks_distance = if sigma_tilde2 >= 1e-10 {
        Some(ks_normal(&sums, sigma_tilde2)?)
    } else {
        None
    };
    let sigma2 = variance_report.sigma2;
    Ok(ProductReport {
        sigma_tilde2,
        sigma_tilde2_stderr: stderr,
        sigma2,
        ratio: sigma_tilde2 / (2.0 * sigma2),
        ks_distance,
        n,
        samples,
    })
}

/// `kappa = ceil(4p / (1 - alpha))`, defined for `p > max{1, 1/alpha - 1}`.
pub fn quenched_ld_exponent(p: f64, alpha: f64) -> Result<u32> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let floor = 1.0f64.max(1.0 / alpha - 1.0);
    if !(p > floor) {
        return Err(invalid("p", format!("need p > {floor}, got {p}")));
    }
    let kappa = 4.0 * p / (1.0 - alpha);
    // absorb rounding in values such as 4 * 1.25 / (1 - 0.6)
    Ok((kappa - 1e-9).ceil() as u32)
}
