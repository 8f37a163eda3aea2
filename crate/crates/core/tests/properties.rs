//! Cross-module properties checked against independent oracles.

use intermittency::experiments::{
    annealed_mc_variance, annealed_variance, centering_diagnostic, moment_curve, quenched_sums,
    quenched_variance, Engine,
};
use intermittency::grid::{DensityGrid, MeasureKind, Mesh};
use intermittency::maps::MapParam;
use intermittency::martingale::{h_norm_curve, Decomposition};
use intermittency::observable::Observable;
use intermittency::rng::Stream;
use intermittency::schedule::{ParameterSpace, Schedule};
use intermittency::stats::{log_log_slope, mean_stderr};
use intermittency::transfer::{conditional_expectation, OperatorCache, TransferOperator};

fn map(a: f64) -> MapParam<f64> {
    MapParam::new(a).unwrap()
}

fn halves(alphas: &[f64]) -> ParameterSpace<f64> {
    let k = alphas.len();
    ParameterSpace::from_alphas(alphas, &vec![1.0 / k as f64; k]).unwrap()
}

#[test]
fn h_norm_grows_no_faster_than_the_bound() {
    let alpha = 0.6;
    let p = 2.0;
    let mesh = Mesh::new(4096, 0.8).unwrap();
    let cache = OperatorCache::new(&mesh);
    let s = Schedule::constant(map(alpha));
    let curve = h_norm_curve(&cache, &s, &Observable::identity(), &MeasureKind::Lebesgue, 200, p).unwrap();
    let ns: Vec<f64> = (20..=200).map(|n| n as f64).collect();
    let slope = log_log_slope(&ns, &curve[19..200]).unwrap();
    let bound = 1.0 + (1.0 - 1.0 / alpha) / p + 0.15;
    assert!(slope <= bound, "slope {slope} > {bound}");
}

#[test]
fn centred_sums_have_zero_mean() {
    let engine = Engine::new(1024).unwrap();
    let s = Schedule::bernoulli(halves(&[0.2, 0.5]), 8);
    let n = 200;
    let sums = quenched_sums(
        &engine,
        &s,
        &Observable::identity(),
        &[n],
        100_000,
        &MeasureKind::Lebesgue,
        true,
        4,
    )
    .unwrap();
    let (m, se) = mean_stderr(&sums[0]);
    assert!(m.abs() <= 4.0 * se + n as f64 * 1e-8, "mean {m}, stderr {se}");
}

#[test]
fn one_step_quenched_variance_matches_quadrature() {
    let engine = Engine::new(2048).unwrap();
    let t = map(0.4);
    let s = Schedule::constant(t);
    let phi = Observable::cosine(1.0, 1.0);
    let q = quenched_variance(&engine, &s, &phi, 1, 100_000, 3).unwrap();
    // Var_m(phi o T) = int phi^2 P1 dm - (int phi P1 dm)^2
    let p1 = TransferOperator::new(t, engine.mesh()).apply(&DensityGrid::constant(engine.mesh(), 1.0));
    let second = p1.integrate_with(&MeasureKind::Lebesgue, |x| phi.eval(x).powi(2), &[]);
    let first = p1.integrate_with(&MeasureKind::Lebesgue, |x| phi.eval(x), &[]);
    let exact = second - first * first;
    assert!((q.sigma2 - exact).abs() <= 3.0 * q.stderr, "{} vs {exact} (se {})", q.sigma2, q.stderr);
}

#[test]
fn correlation_variance_matches_monte_carlo() {
    let engine = Engine::new(4096).unwrap();
    let fixtures: [(&[f64], Observable<f64>); 2] = [
        (&[0.1, 0.3], Observable::cosine(1.0, 1.0)),
        (&[0.25], Observable::polynomial(vec![0.0, 0.0, 1.0])),
    ];
    for (alphas, phi) in fixtures {
        let space = halves(alphas);
        let v = annealed_variance(&engine, &space, &phi, 200).unwrap();
        let (mc, se) = annealed_mc_variance(&engine, &space, &phi, 4000, 10_000, 21).unwrap();
        let rel = (mc - v.sigma2).abs() / v.sigma2;
        assert!(rel <= 0.10, "{alphas:?}: formula {} vs MC {mc} +- {se}", v.sigma2);
    }
}

#[test]
fn centering_conclusion_is_scale_invariant() {
    let engine = Engine::new(1024).unwrap();
    let space = halves(&[0.15, 0.35]);
    let phi = Observable::identity();
    let a = centering_diagnostic(&engine, &space, &phi, &[200, 800], 10, 5).unwrap();
    let b = centering_diagnostic(&engine, &space, &phi.scaled(3.0), &[200, 800], 10, 5).unwrap();
    let ratio = |r: &intermittency::experiments::CenteringReport| r.drift[1].variance / r.drift[0].variance;
    assert!((ratio(&a) - ratio(&b)).abs() <= 1e-9 * ratio(&a));
    assert!((b.max_mean_gap - 3.0 * a.max_mean_gap).abs() <= 1e-9);
}

#[test]
fn moment_growth_is_within_the_bound() {
    let engine = Engine::new(2048).unwrap();
    let s = Schedule::constant(map(0.5));
    let ns = [128, 256, 512, 1024, 2048];
    let m = moment_curve(&engine, &s, &Observable::identity(), &ns, 2.0, 10_000, &MeasureKind::Lebesgue, 2).unwrap();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = m.iter().map(|e| e.estimate).collect();
    let slope = log_log_slope(&xs, &ys).unwrap();
    assert!(slope <= 2.0 * 2.0 + (1.0 - 1.0 / 0.5) + 0.3, "slope {slope}");
}

#[test]
fn conditional_mean_matches_monte_carlo_bins() {
    let mesh = Mesh::new(2048, 0.8).unwrap();
    let t = map(0.5);
    let s = Schedule::constant(t);
    let phi = Observable::identity();
    let ratio = conditional_expectation(&s, &phi, 0, 1, &mesh).unwrap();
    let p1 = TransferOperator::new(t, &mesh).apply(&DensityGrid::constant(&mesh, 1.0));
    let bins = 10;
    let mut hits: Vec<Vec<f64>> = vec![Vec::new(); bins];
    let mut rng = Stream::new(99, 0);
    for _ in 0..100_000 {
        let x = rng.next_unit();
        let y = t.apply_unchecked(x);
        hits[((y * bins as f64) as usize).min(bins - 1)].push(phi.eval(x));
    }
    let weighted = ratio.mul(&p1);
    for (b, xs) in hits.iter().enumerate() {
        let (lo, hi) = (b as f64 / bins as f64, (b + 1) as f64 / bins as f64);
        let ind = |x: f64| if x >= lo && x < hi { 1.0 } else { 0.0 };
        let num = weighted.integrate_with(&MeasureKind::Lebesgue, ind, &[lo, hi]);
        let den = p1.integrate_with(&MeasureKind::Lebesgue, ind, &[lo, hi]);
        let (m, se) = mean_stderr(xs);
        assert!((m - num / den).abs() <= 3.0 * se, "bin {b}: {m} vs {} (se {se})", num / den);
    }
}

#[test]
fn transfer_of_one_self_converges() {
    let t = map(0.5);
    let p1 = |n: usize| {
        let mesh = Mesh::new(n, 0.8).unwrap();
        TransferOperator::new(t, &mesh).apply(&DensityGrid::constant(&mesh, 1.0))
    };
    let (a, b, c) = (p1(512), p1(1024), p1(2048));
    let shared = |coarse: &DensityGrid<f64>, fine: &DensityGrid<f64>| {
        coarse
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - fine.values()[2 * i + 1]).abs())
            .fold(0.0f64, f64::max)
    };
    let d1 = shared(&a, &b);
    let d2 = shared(&b, &c);
    assert!(d2 <= 4.0 * d1 && d2 <= d1, "{d1:e} then {d2:e}");
}

#[test]
fn decomposition_under_the_singular_reference_measure() {
    let mesh = Mesh::new(2048, 0.8).unwrap();
    let cache = OperatorCache::new(&mesh);
    let s = Schedule::bernoulli(halves(&[0.3, 0.5]), 5);
    let phi = Observable::cosine(0.5, 2.0);
    let mu = MeasureKind::tilde(0.5).unwrap();
    let d = Decomposition::new(&cache, &s, &phi, &mu, 15, 20.0).unwrap();
    let mut rng = Stream::new(1, 0);
    for _ in 0..50 {
        let (lhs, rhs) = d.telescope(rng.next_unit());
        assert!((lhs - rhs).abs() <= 1e-6);
    }
    // rho_k is the push-forward of the weight x^(-1/2)
    let w = mu.weight_grid(&mesh);
    let maps = d.maps();
    let rho2 = cache.get(maps[1]).apply(&cache.get(maps[0]).apply(&w));
    assert!(d.rho(2).max_abs_diff(&rho2) <= 1e-12 * rho2.values()[0]);
    for k in 1..=15 {
        let r = d.reverse_residual(&cache, k, &Observable::identity());
        assert!(r.abs() <= 1e-5, "k {k}: {r:e}");
    }
}

#[test]
fn change_of_measure_for_a_power_weight() {
    // P_{g m}(phi) = g^{-1} P_m(g phi) with g(x) = x^(-alpha), checked
    // against the preimage sum at every 97th node
    let mesh = Mesh::new(2048, 0.8).unwrap();
    let t = map(0.4);
    let op = TransferOperator::new(t, &mesh);
    let g = |x: f64| x.powf(-0.4);
    let g_grid = DensityGrid::from_fn(&mesh, g, -0.4);
    let phi = |x: f64| (3.0 * x).sin();
    let lhs = op.apply_weighted(&g_grid, &phi).div(&op.apply(&g_grid));
    for (&x, &v) in mesh.nodes().iter().zip(lhs.values()).step_by(97) {
        let pre = t.inverse_branches(x).unwrap();
        let wl = g(pre.left) / t.derivative(pre.left).unwrap();
        let wr = g(pre.right) / 2.0;
        let exact = (phi(pre.left) * wl + phi(pre.right) * wr) / (wl + wr);
        assert!((v - exact).abs() <= 1e-6, "x {x}: {v} vs {exact}");
    }
}
