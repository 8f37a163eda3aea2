//! Transfer operators acting on [`DensityGrid`]s by pointwise collocation
//!
//! ```text
//! (P f)(x) = f(y_l) / T'(y_l) + f(y_r) / 2,    {y_l, y_r} = T^{-1}(x)
//! ```
//!
//! with `f` evaluated off the nodes through its interpolant. Preimages and
//! interpolation stencils depend only on the map and the mesh, so a
//! [`TransferOperator`] computes them once and every application afterwards
//! is a linear O(N) sweep.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::cone::{cone_lower_bound, ConeParams};
use crate::error::{invalid, Error, Result};
use crate::grid::{hermite_basis, DensityGrid, Location, MeasureKind, Mesh};
use crate::maps::MapParam;
use crate::num::Real;
use crate::observable::Observable;
use crate::schedule::{ParameterSpace, Schedule};

const PAR_MIN_LEN: usize = 512;

#[derive(Debug, Clone, Copy)]
struct Stencil<T> {
    /// Preimage.
    y: T,
    /// `1 / T'(y)`.
    jac: T,
    /// Cell index, or `usize::MAX` for a preimage below the first node.
    cell: usize,
    /// Hermite weights with the cell width folded into the slope terms.
    w: [T; 4],
}

impl<T: Real> Stencil<T> {
    fn new(mesh: &Mesh<T>, y: T, jac: T) -> Self {
        match mesh.locate(y) {
            Location::Head => Self {
                y,
                jac,
                cell: usize::MAX,
                w: [T::zero(); 4],
            },
            Location::Cell(i, t) => {
                let h = mesh.nodes()[i + 1] - mesh.nodes()[i];
                let b = hermite_basis(t);
                Self {
                    y,
                    jac,
                    cell: i,
                    w: [b[0], b[1] * h, b[2], b[3] * h],
                }
            }
        }
    }

    #[inline]
    fn interpolate(&self, f: &DensityGrid<T>) -> T {
        if self.cell == usize::MAX {
            return f.eval_head(self.y);
        }
        let (v, d) = (f.values(), f.slopes());
        let i = self.cell;
        self.w[0] * v[i] + self.w[1] * d[i] + self.w[2] * v[i + 1] + self.w[3] * d[i + 1]
    }
}

/// The transfer operator of one map on one mesh.
#[derive(Debug)]
pub struct TransferOperator<T: Real> {
    map: MapParam<T>,
    mesh: Arc<Mesh<T>>,
    left: Vec<Stencil<T>>,
    right: Vec<Stencil<T>>,
}

impl<T: Real> TransferOperator<T> {
    pub fn new(map: MapParam<T>, mesh: &Arc<Mesh<T>>) -> Self {
        let half = T::lit(0.5);
        let (left, right): (Vec<_>, Vec<_>) = mesh
            .nodes()
            .par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map(|&x| {
                let yl = map.left_inverse(x);
                let yr = (x + T::one()) * half;
                (
                    Stencil::new(mesh, yl, T::one() / map.derivative_unchecked(yl)),
                    Stencil::new(mesh, yr, half),
                )
            })
            .unzip();
        Self {
            map,
            mesh: Arc::clone(mesh),
            left,
            right,
        }
    }

    pub fn map(&self) -> MapParam<T> {
        self.map
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    fn check_mesh(&self, f: &DensityGrid<T>) {
        assert!(
            self.mesh.same_as(f.mesh()),
            "grid and operator live on different meshes"
        );
    }

    pub fn apply(&self, f: &DensityGrid<T>) -> DensityGrid<T> {
        self.check_mesh(f);
        let values: Vec<T> = self
            .left
            .par_iter()
            .zip(self.right.par_iter())
            .with_min_len(PAR_MIN_LEN)
            .map(|(l, r)| l.interpolate(f) * l.jac + r.interpolate(f) * r.jac)
            .collect();
        DensityGrid::from_parts(&self.mesh, values, f.tail_exponent())
    }

    /// `P(g f)` with `g` evaluated exactly at the preimages, so jumps of `g`
    /// are never smeared by interpolation.
    pub fn apply_weighted(&self, f: &DensityGrid<T>, g: &(impl Fn(T) -> T + Sync)) -> DensityGrid<T> {
        self.check_mesh(f);
        let values: Vec<T> = self
            .left
            .par_iter()
            .zip(self.right.par_iter())
            .with_min_len(PAR_MIN_LEN)
            .map(|(l, r)| {
                l.interpolate(f) * g(l.y) * l.jac + r.interpolate(f) * g(r.y) * r.jac
            })
            .collect();
        DensityGrid::from_parts(&self.mesh, values, f.tail_exponent())
    }
}

/// Lazily built operators for every map met on one mesh.
#[derive(Debug)]
pub struct OperatorCache<T: Real> {
    mesh: Arc<Mesh<T>>,
    ops: Mutex<HashMap<u64, Arc<TransferOperator<T>>>>,
}

impl<T: Real> OperatorCache<T> {
    pub fn new(mesh: &Arc<Mesh<T>>) -> Self {
        Self {
            mesh: Arc::clone(mesh),
            ops: Mutex::new(HashMap::new()),
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn get(&self, map: MapParam<T>) -> Arc<TransferOperator<T>> {
        let key = map.alpha().as_f64().to_bits();
        if let Some(op) = self.ops.lock().expect("operator cache poisoned").get(&key) {
            return Arc::clone(op);
        }
        let op = Arc::new(TransferOperator::new(map, &self.mesh));
        self.ops
            .lock()
            .expect("operator cache poisoned")
            .entry(key)
            .or_insert(op)
            .clone()
    }

    /// Operators for the first `n` symbols of a schedule.
    pub fn along(&self, s: &Schedule<T>, n: usize) -> Result<Vec<Arc<TransferOperator<T>>>> {
        Ok(s.symbols(n)?.into_iter().map(|m| self.get(m)).collect())
    }

    /// `P_n ... P_1 f`.
    pub fn compose(&self, s: &Schedule<T>, f: &DensityGrid<T>, n: usize) -> Result<DensityGrid<T>> {
        let mut g = f.clone();
        for op in self.along(s, n)? {
            g = op.apply(&g);
        }
        Ok(g)
    }

    pub fn annealed(&self, space: &ParameterSpace<T>) -> AnnealedOperator<T> {
        AnnealedOperator {
            ops: space.omegas().iter().map(|&m| self.get(m)).collect(),
            probs: space.probs().to_vec(),
        }
    }
}

/// `P = sum_beta p_beta P_beta`.
#[derive(Debug, Clone)]
pub struct AnnealedOperator<T: Real> {
    ops: Vec<Arc<TransferOperator<T>>>,
    probs: Vec<T>,
}

impl<T: Real> AnnealedOperator<T> {
    pub fn apply(&self, f: &DensityGrid<T>) -> DensityGrid<T> {
        self.combine(|op| op.apply(f))
    }

    pub fn apply_weighted(&self, f: &DensityGrid<T>, g: &(impl Fn(T) -> T + Sync)) -> DensityGrid<T> {
        self.combine(|op| op.apply_weighted(f, g))
    }

    fn combine(&self, each: impl Fn(&TransferOperator<T>) -> DensityGrid<T>) -> DensityGrid<T> {
        let parts: Vec<DensityGrid<T>> = self.ops.iter().map(|op| each(op)).collect();
        let n = parts[0].values().len();
        let values = (0..n)
            .map(|j| {
                parts
                    .iter()
                    .zip(&self.probs)
                    .fold(T::zero(), |acc, (g, &p)| acc + p * g.values()[j])
            })
            .collect();
        DensityGrid::from_parts(parts[0].mesh(), values, parts[0].tail_exponent())
    }
}

pub fn transfer_apply<T: Real>(p: MapParam<T>, f: &DensityGrid<T>) -> DensityGrid<T> {
    TransferOperator::new(p, f.mesh()).apply(f)
}

/// `P_n ... P_1 f`, symbol 1 applied first; `n = 0` is the identity.
pub fn compose_transfer<T: Real>(s: &Schedule<T>, f: &DensityGrid<T>, n: usize) -> Result<DensityGrid<T>> {
    OperatorCache::new(f.mesh()).compose(s, f, n)
}

pub fn annealed_apply<T: Real>(space: &ParameterSpace<T>, f: &DensityGrid<T>) -> DensityGrid<T> {
    OperatorCache::new(f.mesh()).annealed(space).apply(f)
}

/// Settings for [`stationary_density_with`].
#[derive(Debug, Clone, Copy)]
pub struct StationaryOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub check_every: usize,
    /// Give up early once the best residual has not improved by 1% for
    /// this many steps.
    pub stall_limit: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            check_every: 8,
            stall_limit: 5_000,
        }
    }
}

/// How the returned fixed point was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationaryMethod {
    /// The iterate `P^k 1` itself met the tolerance.
    PowerIterate,
    /// The Cesàro mean `(1/k) sum_{j<k} P^j 1` met the tolerance.
    CesaroMean,
}

#[derive(Debug, Clone)]
pub struct StationaryDensity<T: Real> {
    pub density: DensityGrid<T>,
    pub residual: T,
    pub iterations: usize,
    pub method: StationaryMethod,
}

/// Stationary density of the annealed operator, normalised to `m(h) = 1`.
pub fn stationary_density<T: Real>(
    space: &ParameterSpace<T>,
    mesh: &Arc<Mesh<T>>,
    tol: T,
) -> Result<DensityGrid<T>> {
    let opts = StationaryOptions {
        tol: tol.as_f64(),
        ..StationaryOptions::default()
    };
    stationary_density_with(&OperatorCache::new(mesh), space, opts).map(|s| s.density)
}

/// Power iteration from `1` with a running Cesàro mean. Since
/// `P C_k - C_k = (P^k 1 - 1) / k`, both candidates' residuals come for free
/// from consecutive iterates; whichever meets `tol` first is returned.
pub fn stationary_density_with<T: Real>(
    cache: &OperatorCache<T>,
    space: &ParameterSpace<T>,
    opts: StationaryOptions,
) -> Result<StationaryDensity<T>> {
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", "tolerance must be positive"));
    }
    let tol = T::lit(opts.tol);
    let op = cache.annealed(space);
    let mesh = cache.mesh();
    let one = DensityGrid::constant(mesh, T::one());
    let mut current = one.clone();
    let mut sum = one.clone();
    let mut best = T::infinity();
    let mut best_at = 0;
    for k in 1..=opts.max_iter {
        let next = op.apply(&current);
        let check = k % opts.check_every.max(1) == 0 || k == opts.max_iter;
        if check {
            let power_residual = next.sub(&current).l1_norm();
            let cesaro_residual = next.sub(&one).l1_norm() / T::from_usize_lossy(k);
            let candidate = power_residual.min(cesaro_residual);
            if candidate < best * T::lit(0.99) {
                best_at = k;
            }
            best = best.min(candidate);
            let found = if power_residual <= tol {
                Some((current.clone(), StationaryMethod::PowerIterate))
            } else if cesaro_residual <= tol {
                Some((sum.scale(T::one() / T::from_usize_lossy(k)), StationaryMethod::CesaroMean))
            } else {
                None
            };
            if let Some((h, method)) = found {
                let mass = h.integrate(&MeasureKind::Lebesgue);
                let h = h.scale(T::one() / mass);
                let residual = op.apply(&h).sub(&h).l1_norm();
                return Ok(StationaryDensity {
                    density: h,
                    residual,
                    iterations: k,
                    method,
                });
            }
        }
        sum = sum.add(&next);
        current = next;
        if k - best_at >= opts.stall_limit {
            return Err(Error::NonConvergence {
                iterations: k,
                residual: best.as_f64(),
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: best.as_f64(),
    })
}

/// `d_n = || P_n ... P_1 (f - m(f)) ||_{L^1(m)}` for `n = 1..=n_max`.
pub fn decay_curve<T: Real>(s: &Schedule<T>, f: &DensityGrid<T>, n_max: usize) -> Result<Vec<T>> {
    decay_curve_with(&OperatorCache::new(f.mesh()), s, f, n_max)
}

pub fn decay_curve_with<T: Real>(
    cache: &OperatorCache<T>,
    s: &Schedule<T>,
    f: &DensityGrid<T>,
    n_max: usize,
) -> Result<Vec<T>> {
    let mean = f.integrate(&MeasureKind::Lebesgue);
    let mut g = f.offset(-mean);
    let mut out = Vec::with_capacity(n_max);
    for op in cache.along(s, n_max)? {
        g = op.apply(&g);
        out.push(g.l1_norm());
    }
    Ok(out)
}

/// Largest exponent among the first `n` symbols.
pub(crate) fn max_alpha<T: Real>(s: &Schedule<T>, n: usize) -> Result<T> {
    Ok(match s {
        Schedule::Bernoulli { space, .. } => space.alpha_max(),
        _ => s
            .symbols(n.max(1).min(s.len().unwrap_or(usize::MAX)))?
            .iter()
            .fold(T::zero(), |a, m| a.max(m.alpha())),
    })
}

/// Checks `rho >= floor` at every node.
pub(crate) fn check_floor<T: Real>(rho: &DensityGrid<T>, floor: T) -> Result<()> {
    for (x, v) in rho.nodes().iter().zip(rho.values()) {
        if *v < floor {
            return Err(Error::GridBreakdown {
                x: x.as_f64(),
                value: v.as_f64(),
                floor: floor.as_f64(),
            });
        }
    }
    Ok(())
}

/// The function `P_k ... P_{l+1}(phi P^l 1) / P^k 1` whose composition with
/// `T_k ... T_1` is `E_m[phi o T^l | T^{-k} B]`.
pub fn conditional_expectation<T: Real>(
    s: &Schedule<T>,
    phi: &Observable<T>,
    l: usize,
    k: usize,
    mesh: &Arc<Mesh<T>>,
) -> Result<DensityGrid<T>> {
    conditional_expectation_with(&OperatorCache::new(mesh), s, phi, l, k, ConeParams::default_a())
}

pub fn conditional_expectation_with<T: Real>(
    cache: &OperatorCache<T>,
    s: &Schedule<T>,
    phi: &Observable<T>,
    l: usize,
    k: usize,
    cone_a: T,
) -> Result<DensityGrid<T>> {
    if l > k {
        return Err(invalid("l", format!("need l <= k, got l = {l}, k = {k}")));
    }
    let mesh = cache.mesh();
    if l == k {
        return Ok(DensityGrid::from_fn(mesh, |x| phi.eval(x), T::zero()));
    }
    let ops = cache.along(s, k)?;
    let mut rho = DensityGrid::constant(mesh, T::one());
    for op in &ops[..l] {
        rho = op.apply(&rho);
    }
    let eval = |x: T| phi.eval(x);
    let mut numerator = ops[l].apply_weighted(&rho, &eval);
    let mut denominator = ops[l].apply(&rho);
    for op in &ops[l + 1..] {
        numerator = op.apply(&numerator);
        denominator = op.apply(&denominator);
    }
    let cone = ConeParams::new(cone_a, max_alpha(s, k)?)?;
    check_floor(&denominator, cone_lower_bound(&cone) * T::lit(0.5))?;
    Ok(numerator.div(&denominator))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::cone_check;
    use approx::assert_relative_eq;

    fn mesh(n: usize) -> Arc<Mesh<f64>> {
        Mesh::new(n, 0.8).unwrap()
    }

    fn p(a: f64) -> MapParam<f64> {
        MapParam::new(a).unwrap()
    }

    #[test]
    fn transfer_of_one_at_the_right_endpoint() {
        let m = mesh(512);
        for a in [0.2, 0.5, 0.8] {
            let g = transfer_apply(p(a), &DensityGrid::constant(&m, 1.0));
            let last = *g.values().last().unwrap();
            assert!((last - (0.5 + 1.0 / (2.0 + a))).abs() < 1e-12, "alpha {a}: {last}");
        }
        let g = transfer_apply(p(0.5), &DensityGrid::constant(&m, 1.0));
        assert!((g.values().last().unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_maps_to_zero_and_mass_is_kept() {
        let m = mesh(512);
        let z = transfer_apply(p(0.4), &DensityGrid::zeros(&m));
        assert!(z.values().iter().all(|&v| v == 0.0));
        let f = DensityGrid::from_fn(&m, |x: f64| 2.0 - x + 0.3 * (7.0 * x).sin(), 0.0);
        let before = f.integrate(&MeasureKind::Lebesgue);
        for a in [0.2, 0.5, 0.8] {
            let after = transfer_apply(p(a), &f).integrate(&MeasureKind::Lebesgue);
            assert!((after - before).abs() < 1e-8, "alpha {a}: drift {}", after - before);
        }
    }

    #[test]
    fn composition_follows_schedule_order() {
        let m = mesh(256);
        let f = DensityGrid::constant(&m, 1.0);
        let s = Schedule::fixed(vec![p(0.3), p(0.7)]);
        assert_eq!(compose_transfer(&s, &f, 0).unwrap(), f);
        let two = compose_transfer(&s, &f, 2).unwrap();
        let by_hand = transfer_apply(p(0.7), &transfer_apply(p(0.3), &f));
        assert_eq!(two, by_hand);
        let reversed = transfer_apply(p(0.3), &transfer_apply(p(0.7), &f));
        assert!(two.max_abs_diff(&reversed) > 1e-6);
        let c = Schedule::constant(p(0.5));
        let twice = transfer_apply(p(0.5), &transfer_apply(p(0.5), &f));
        assert_eq!(compose_transfer(&c, &f, 2).unwrap(), twice);
    }

    #[test]
    fn composed_mass_drift_is_small() {
        let m = mesh(512);
        let space = ParameterSpace::from_alphas(&[0.2, 0.5, 0.8], &[0.3, 0.3, 0.4]).unwrap();
        let s = Schedule::bernoulli(space, 5);
        let cache = OperatorCache::new(&m);
        let mut g = DensityGrid::constant(&m, 1.0);
        let mut mass = 1.0;
        for op in cache.along(&s, 100).unwrap() {
            g = op.apply(&g);
            let next = g.integrate(&MeasureKind::Lebesgue);
            assert!((next - mass).abs() < 1e-8);
            mass = next;
        }
    }

    #[test]
    fn annealed_examples() {
        let m = mesh(256);
        let f = DensityGrid::from_fn(&m, |x: f64| 1.5 - x, 0.0);
        let single = ParameterSpace::from_alphas(&[0.4], &[1.0]).unwrap();
        assert_eq!(annealed_apply(&single, &f), transfer_apply(p(0.4), &f));
        let space = ParameterSpace::from_alphas(&[0.2, 0.6], &[0.25, 0.75]).unwrap();
        assert!(annealed_apply(&space, &DensityGrid::zeros(&m))
            .values()
            .iter()
            .all(|&v| v == 0.0));
        let g = annealed_apply(&space, &f);
        let expected = transfer_apply(p(0.2), &f)
            .scale(0.25)
            .add(&transfer_apply(p(0.6), &f).scale(0.75));
        assert!(g.max_abs_diff(&expected) < 1e-14);
        assert!(
            (g.integrate(&MeasureKind::Lebesgue) - f.integrate(&MeasureKind::Lebesgue)).abs() < 1e-8
        );
    }

    #[test]
    fn stationary_density_of_a_single_map() {
        let m = mesh(512);
        let space = ParameterSpace::from_alphas(&[0.3], &[1.0]).unwrap();
        let cache = OperatorCache::new(&m);
        let st = stationary_density_with(
            &cache,
            &space,
            StationaryOptions {
                tol: 1e-8,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(st.residual <= 1e-8);
        assert_relative_eq!(st.density.integrate(&MeasureKind::Lebesgue), 1.0, epsilon = 1e-10);
        let cone = ConeParams::new(20.0, 0.3).unwrap();
        assert!(cone_check(&st.density, &cone).ok);
        let h1 = *st.density.values().last().unwrap();
        assert!(h1 >= cone_lower_bound(&cone));
    }

    #[test]
    fn stationary_reports_non_convergence() {
        let m = mesh(128);
        let space = ParameterSpace::from_alphas(&[0.5], &[1.0]).unwrap();
        let err = stationary_density_with(
            &OperatorCache::new(&m),
            &space,
            StationaryOptions {
                tol: 1e-14,
                max_iter: 20,
                check_every: 4,
                stall_limit: 1000,
            },
        )
        .unwrap_err();
        match err {
            Error::NonConvergence { iterations, residual } => {
                assert_eq!(iterations, 20);
                assert!(residual > 1e-14);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn decay_of_constants_vanishes() {
        let m = mesh(256);
        let s = Schedule::constant(p(0.5));
        let d = decay_curve(&s, &DensityGrid::constant(&m, 3.0), 20).unwrap();
        assert!(d.iter().all(|&v| v.abs() < 1e-12));
        let f = DensityGrid::from_fn(&m, |x: f64| 2.0 - x, 0.0);
        let d = decay_curve(&s, &f, 50).unwrap();
        assert!(d.iter().all(|&v| v >= 0.0));
        assert!(d[49] < d[0]);
    }

    #[test]
    fn conditional_expectation_identities() {
        let m = mesh(256);
        let s = Schedule::fixed(vec![p(0.3), p(0.6), p(0.4)]);
        let phi = Observable::cosine(0.5, 1.0);
        let same = conditional_expectation(&s, &phi, 2, 2, &m).unwrap();
        for (x, v) in same.nodes().iter().zip(same.values()) {
            assert_eq!(*v, phi.eval(*x));
        }
        let one = Observable::constant(1.0);
        for l in 0..=3 {
            let e = conditional_expectation(&s, &one, l, 3, &m).unwrap();
            assert!(e.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
        assert!(conditional_expectation(&s, &phi, 3, 2, &m).is_err());
    }
}
