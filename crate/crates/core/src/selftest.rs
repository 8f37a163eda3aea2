//! Quick invariant suites for every module, run by `intermittency selftest`.

use std::sync::Arc;

use crate::cone::{cone_check, cone_lower_bound, cone_split, ConeParams};
use crate::error::Result;
use crate::experiments::{deviation_probability, Engine};
use crate::grid::{DensityGrid, MeasureKind, Mesh};
use crate::maps::MapParam;
use crate::martingale::Decomposition;
use crate::observable::Observable;
use crate::rng::{purpose, stream_id, unit_at, Stream};
use crate::schedule::{ParameterSpace, Schedule};
use crate::stats::{ks_critical_95, ks_normal, wilson_interval};
use crate::transfer::OperatorCache;

/// `c0 + c1 x^(-gamma) + c2 exp(-k x)` with nonnegative coefficients,
/// `gamma <= alpha` and `k <= 1 + alpha`: each term is non-increasing with
/// `x^(1+alpha) f` non-decreasing, so the sum lies in the cone for `a`
/// large enough.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeSample {
    pub c0: f64,
    pub c1: f64,
    pub gamma: f64,
    pub c2: f64,
    pub k: f64,
}

impl ConeSample {
    /// The `index`-th member of a reproducible random family.
    pub fn random(alpha: f64, seed: u64, index: u64) -> Self {
        let mut s = Stream::new(seed, stream_id(purpose::CALIBRATION, index));
        Self {
            c0: 0.1 + 0.9 * s.next_unit(),
            c1: s.next_unit(),
            gamma: alpha * (0.1 + 0.9 * s.next_unit()),
            c2: s.next_unit(),
            k: (1.0 + alpha) * s.next_unit(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.c0 + self.c1 * x.powf(-self.gamma) + self.c2 * (-self.k * x).exp()
    }

    pub fn grid(&self, mesh: &Arc<Mesh<f64>>) -> DensityGrid<f64> {
        let tail = if self.c1 > 0.0 { -self.gamma } else { 0.0 };
        DensityGrid::from_fn(mesh, |x| self.eval(x), tail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: crate::error::Error) -> String {
    e.to_string()
}

fn maps_suite() -> Check {
    let mut worst: f64 = 0.0;
    for alpha in [0.1, 0.5, 0.9] {
        let t = MapParam::new(alpha).map_err(err)?;
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let pre = t.inverse_branches(x).map_err(err)?;
            worst = worst.max((t.apply(pre.left).map_err(err)? - x).abs());
            if x > 0.0 {
                worst = worst.max((t.apply(pre.right).map_err(err)? - x).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("round trip error {worst:e}"))?;
    ensure(MapParam::new(1.0).is_err(), || "alpha = 1 accepted".into())?;
    Ok(format!("inverse round trip {worst:.1e}"))
}

fn rng_suite() -> Check {
    let mut s = Stream::new(5, stream_id(purpose::SYMBOLS, 3));
    for k in 0..256 {
        let u = s.next_unit();
        ensure(u == unit_at(5, stream_id(purpose::SYMBOLS, 3), k), || {
            format!("random access differs at {k}")
        })?;
    }
    let space = ParameterSpace::from_alphas(&[0.2, 0.4], &[0.3, 0.7]).map_err(err)?;
    let sched = Schedule::bernoulli(space, 1);
    let n = 100_000;
    let hits = sched
        .symbols(n)
        .map_err(err)?
        .iter()
        .filter(|m| m.alpha() == 0.2)
        .count() as f64;
    let sd = (n as f64 * 0.3 * 0.7).sqrt();
    ensure((hits - 0.3 * n as f64).abs() <= 4.0 * sd, || format!("frequency {hits}"))?;
    Ok("streams consistent, symbol frequency within 4 sd".into())
}

fn grid_suite(mesh: &Arc<Mesh<f64>>) -> Check {
    let one = DensityGrid::constant(mesh, 1.0);
    let m = one.integrate(&MeasureKind::Lebesgue);
    ensure((m - 1.0).abs() <= 1e-10, || format!("m(1) = {m}"))?;
    let t = one.integrate(&MeasureKind::tilde(0.5).map_err(err)?);
    ensure((t - 2.0).abs() <= 1e-10, || format!("m~(1) = {t}"))?;
    let id = DensityGrid::from_fn(mesh, |x| x, 1.0).integrate(&MeasureKind::Lebesgue);
    ensure((id - 0.5).abs() <= 1e-8, || format!("m(x) = {id}"))?;
    Ok("quadrature closed forms".into())
}

fn transfer_suite(mesh: &Arc<Mesh<f64>>) -> Check {
    let cache = OperatorCache::new(mesh);
    let one = DensityGrid::constant(mesh, 1.0);
    for alpha in [0.2, 0.5, 0.8] {
        let p = cache.get(MapParam::new(alpha).map_err(err)?);
        let v = *p.apply(&one).values().last().expect("non-empty");
        let exact = 0.5 + 1.0 / (2.0 + alpha);
        ensure((v - exact).abs() <= 1e-8, || format!("(P1)(1) = {v}, expected {exact}"))?;
    }

    let refined = Mesh::new(2 * mesh.len(), mesh.alpha_mesh()).map_err(err)?;
    let tests: Vec<Observable<f64>> = vec![
        Observable::constant(1.0),
        Observable::identity(),
        Observable::polynomial(vec![0.0, 0.0, 1.0]),
        Observable::cosine(1.0, 1.0),
    ];
    let alphas = [0.2, 0.35, 0.5];
    let mut worst_duality: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    for i in 0..20u64 {
        let alpha = alphas[i as usize % 3];
        let map = MapParam::new(alpha).map_err(err)?;
        let f = ConeSample::random(alpha, 77, i);
        let fg = f.grid(mesh);
        let g = &tests[i as usize % tests.len()];
        let pf = cache.get(map).apply(&fg);
        let lhs = pf.integrate_with(&MeasureKind::Lebesgue, |x| g.eval(x), g.breakpoints());
        let fine = f.grid(&refined);
        let rhs = fine.integrate_with(&MeasureKind::Lebesgue, |x| g.eval(map.apply_unchecked(x)), &[0.5]);
        let scale = g.sup_norm().max(1e-300) * fine.l1_norm();
        worst_duality = worst_duality.max((lhs - rhs).abs() / scale);
        let drift = (pf.integrate(&MeasureKind::Lebesgue) - fg.integrate(&MeasureKind::Lebesgue)).abs();
        worst_mass = worst_mass.max(drift);
        ensure(pf.values().iter().all(|&v| v >= 0.0), || "negative transfer output".into())?;
        let cone = ConeParams::new(20.0, alpha).map_err(err)?;
        let report = cone_check(&pf, &cone);
        ensure(report.ok, || format!("cone violated: {:?}", report.violations.first()))?;
    }
    ensure(worst_duality <= 1e-6, || format!("duality residual {worst_duality:e}"))?;
    ensure(worst_mass <= 1e-8, || format!("mass drift {worst_mass:e}"))?;
    Ok(format!("duality {worst_duality:.1e}, mass drift {worst_mass:.1e}"))
}

fn stationary_suite(engine: &Engine) -> Check {
    let space = ParameterSpace::from_alphas(&[0.2, 0.35], &[0.5, 0.5]).map_err(err)?;
    let st = engine.stationary(&space).map_err(err)?;
    let cone = ConeParams::new(engine.cone_a(), 0.35).map_err(err)?;
    let h = &st.density;
    ensure(cone_check(h, &cone).ok, || "stationary density left the cone".into())?;
    let mass = h.integrate(&MeasureKind::Lebesgue);
    let h1 = *h.values().last().expect("non-empty");
    ensure(h1 >= cone_lower_bound(&cone) * mass, || format!("h(1) = {h1}"))?;
    let phi = Observable::identity();
    let split = cone_split(&phi, h, &cone).map_err(err)?;
    ensure(cone_check(&split.psi1, &cone).ok && cone_check(&split.psi2, &cone).ok, || {
        "split parts left the cone".into()
    })?;
    Ok(format!("residual {:.1e} after {} steps", st.residual, st.iterations))
}

fn martingale_suite(mesh: &Arc<Mesh<f64>>) -> Check {
    let cache = OperatorCache::new(mesh);
    let space = ParameterSpace::from_alphas(&[0.2, 0.4], &[0.5, 0.5]).map_err(err)?;
    let s = Schedule::bernoulli(space, 2);
    let phi = Observable::cosine(0.5, 1.0);
    let d = Decomposition::new(&cache, &s, &phi, &MeasureKind::Lebesgue, 20, 20.0).map_err(err)?;
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let (lhs, rhs) = d.telescope((i as f64 + 0.5) / 50.0);
        worst = worst.max((lhs - rhs).abs());
    }
    ensure(worst <= 1e-6, || format!("telescoping error {worst:e}"))?;
    let mut residual: f64 = 0.0;
    for g in [Observable::constant(1.0), Observable::identity()] {
        residual = residual.max(d.reverse_residual(&cache, 20, &g).abs());
    }
    ensure(residual <= 1e-5, || format!("reverse martingale residual {residual:e}"))?;
    Ok(format!("telescoping {worst:.1e}, residual {residual:.1e}"))
}

fn stats_suite() -> Check {
    let mut s = Stream::new(4, 0);
    let mut covered = 0;
    for _ in 0..400 {
        let hits = (0..500).filter(|_| s.next_unit() < 0.2).count() as u64;
        let (lo, hi) = wilson_interval(hits, 500);
        if lo <= 0.2 && 0.2 <= hi {
            covered += 1;
        }
    }
    ensure((360..=392).contains(&covered), || format!("coverage {covered}/400"))?;
    let normal = statrs::distribution::Normal::standard();
    let xs: Vec<f64> = (0..4000)
        .map(|_| statrs::distribution::ContinuousCDF::inverse_cdf(&normal, s.next_unit()))
        .collect();
    let d = ks_normal(&xs, 1.0).map_err(err)?;
    ensure(d <= ks_critical_95(xs.len()), || format!("KS calibration {d}"))?;
    Ok(format!("coverage {covered}/400, KS {d:.3}"))
}

fn determinism_suite(engine: &Engine) -> Check {
    let s = Schedule::constant(MapParam::new(0.5).map_err(err)?);
    let phi = Observable::identity();
    let run = |threads: usize| -> Result<f64> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| {
            deviation_probability(engine, &s, &phi, 200, 0.05, 2000, &MeasureKind::Lebesgue, true, 3)
                .map(|e| e.p_hat)
        })
    };
    let a = run(1).map_err(err)?;
    let b = run(3).map_err(err)?;
    ensure(a.to_bits() == b.to_bits(), || format!("{a} vs {b}"))?;
    Ok("identical across worker counts".into())
}

/// Runs every suite on an `n`-node mesh.
pub fn run_selftest(grid_n: usize) -> Result<Vec<SuiteResult>> {
    let engine = Engine::new(grid_n)?;
    let mesh = Arc::clone(engine.mesh());
    let suites: Vec<(&'static str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("maps", Box::new(maps_suite)),
        ("rng", Box::new(rng_suite)),
        ("grid", Box::new(|| grid_suite(&mesh))),
        ("transfer", Box::new(|| transfer_suite(&mesh))),
        ("stationary+cone", Box::new(|| stationary_suite(&engine))),
        ("martingale", Box::new(|| martingale_suite(&mesh))),
        ("stats", Box::new(stats_suite)),
        ("determinism", Box::new(|| determinism_suite(&engine))),
    ];
    Ok(suites
        .into_iter()
        .map(|(name, f)| {
            let (passed, detail) = match f() {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            SuiteResult { name, passed, detail }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_samples_are_in_the_cone() {
        let mesh = Mesh::new(512, 0.8).unwrap();
        for i in 0..10 {
            let f = ConeSample::random(0.5, 1, i).grid(&mesh);
            let r = cone_check(&f, &ConeParams::new(20.0, 0.5).unwrap());
            assert!(r.ok, "{i}: {:?}", r.violations.first());
        }
    }

    #[test]
    fn selftest_passes_on_small_mesh() {
        for r in run_selftest(crate::experiments::DEFAULT_GRID_N).unwrap() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
