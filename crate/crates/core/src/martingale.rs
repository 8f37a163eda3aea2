//! Self-centred Birkhoff sums and the reverse-martingale decomposition
//!
//! ```text
//! S^_n = sum_{k=1}^n phi^_k o T^k = M_n + H_{n+1} o T^{n+1}
//! ```
//!
//! where `phi^_k = phi - c_k` and `c_k` is the `mu`-mean of `phi o T^k`.
//!
//! With `rho_k = P_k ... P_1 w` (`w` the weight of `mu`) and
//! `G_n = H_n rho_n`, the conditional expectation defining `H_n` obeys
//!
//! ```text
//! G_1 = 0,    G_{n+1} = P_{n+1}(phi^_n rho_n + G_n)
//! ```
//!
//! so `H_1, ..., H_n` cost one pass of `2n` operator applications.

use std::sync::Arc;

use crate::cone::{cone_lower_bound, ConeParams};
use crate::error::{invalid, Result};
use crate::grid::{DensityGrid, Functional, MeasureKind, Mesh};
use crate::maps::MapParam;
use crate::num::Real;
use crate::observable::Observable;
use crate::schedule::Schedule;
use crate::transfer::{check_floor, max_alpha, OperatorCache, TransferOperator};

/// `c_k = mu(phi o T^k) / mu(X)` for `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct CenteringTable<T: Real> {
    pub schedule: Schedule<T>,
    pub measure: MeasureKind<T>,
    pub means: Vec<T>,
}

impl<T: Real> CenteringTable<T> {
    pub fn mean(&self, k: usize) -> T {
        self.means[k]
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// `sum_{k=1}^n c_k`.
    pub fn centering_sum(&self, n: usize) -> T {
        self.means[1..=n].iter().fold(T::zero(), |a, &c| a + c)
    }
}

/// `rho -> int phi rho dm / int rho dm`. Dividing by the discrete mass of
/// `rho` rather than `mu(X)` keeps constants exactly centred despite
/// quadrature drift.
#[derive(Debug, Clone)]
pub struct MeanFunctional<T: Real>(Functional<T>);

impl<T: Real> MeanFunctional<T> {
    pub fn new(mesh: &Arc<Mesh<T>>, phi: &Observable<T>) -> Self {
        Self(Functional::new(mesh, |x| phi.eval(x), phi.breakpoints()))
    }

    pub fn mean(&self, rho: &DensityGrid<T>) -> T {
        self.0.apply(rho) / rho.integrate(&MeasureKind::Lebesgue)
    }
}

pub fn centering_table<T: Real>(
    s: &Schedule<T>,
    phi: &Observable<T>,
    mu: &MeasureKind<T>,
    n: usize,
    mesh: &Arc<Mesh<T>>,
) -> Result<CenteringTable<T>> {
    centering_table_with(&OperatorCache::new(mesh), s, phi, mu, n)
}

pub fn centering_table_with<T: Real>(
    cache: &OperatorCache<T>,
    s: &Schedule<T>,
    phi: &Observable<T>,
    mu: &MeasureKind<T>,
    n: usize,
) -> Result<CenteringTable<T>> {
    if n == 0 {
        return Err(invalid("n", "centering table needs n >= 1"));
    }
    let mean = MeanFunctional::new(cache.mesh(), phi);
    let mut rho = mu.weight_grid(cache.mesh());
    let mut means = Vec::with_capacity(n + 1);
    means.push(mean.mean(&rho));
    for op in cache.along(s, n)? {
        rho = op.apply(&rho);
        means.push(mean.mean(&rho));
    }
    Ok(CenteringTable {
        schedule: s.clone(),
        measure: mu.clone(),
        means,
    })
}

/// `sum_{k=1}^n phi(T_k ... T_1 x0)` along an explicit list of maps, minus
/// `sum_{k=1}^n centers[k]` when centres are given (indexed from 0).
pub fn birkhoff_sum_maps<T: Real>(
    maps: &[MapParam<T>],
    phi: &Observable<T>,
    x0: T,
    centers: Option<&[T]>,
) -> T {
    let mut x = x0;
    let mut sum = T::zero();
    for (k, map) in maps.iter().enumerate() {
        x = map.apply_unchecked(x);
        let c = centers.map_or(T::zero(), |c| c[k + 1]);
        sum += phi.eval(x) - c;
    }
    sum
}

pub fn birkhoff_sum<T: Real>(
    s: &Schedule<T>,
    phi: &Observable<T>,
    x0: T,
    n: usize,
    table: Option<&CenteringTable<T>>,
) -> Result<T> {
    if !(x0 >= T::zero() && x0 <= T::one()) {
        return Err(crate::error::Error::Domain(x0.as_f64()));
    }
    if let Some(t) = table {
        if t.means.len() <= n {
            return Err(invalid(
                "table",
                format!("centering table covers {} steps, need {n}", t.means.len() - 1),
            ));
        }
    }
    let maps = s.symbols(n)?;
    Ok(birkhoff_sum_maps(&maps, phi, x0, table.map(|t| t.means.as_slice())))
}

/// One step of the `H` recursion.
#[derive(Debug, Clone)]
pub struct MartingaleStep<T: Real> {
    /// Time index `k`.
    pub k: usize,
    /// `rho_k`.
    pub rho: DensityGrid<T>,
    /// `H_k`.
    pub h: DensityGrid<T>,
    /// `c_k`.
    pub center: T,
}

/// Streams `(rho_k, H_k, c_k)` for `k = 1, 2, ...` without storing history.
pub struct HRecursion<'a, T: Real> {
    phi: &'a Observable<T>,
    mean: MeanFunctional<T>,
    ops: Vec<Arc<TransferOperator<T>>>,
    floor: T,
    k: usize,
    rho: DensityGrid<T>,
    g: DensityGrid<T>,
}

impl<'a, T: Real> HRecursion<'a, T> {
    /// Prepares the recursion for `n` steps; `cone_a` sets the breakdown floor
    /// `D m(w) / 2`.
    pub fn new(
        cache: &OperatorCache<T>,
        s: &Schedule<T>,
        phi: &'a Observable<T>,
        mu: &MeasureKind<T>,
        n: usize,
        cone_a: T,
    ) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "H_n is defined for n >= 1"));
        }
        let ops = cache.along(s, n)?;
        let w = mu.weight_grid(cache.mesh());
        let cone = ConeParams::new(cone_a, max_alpha(s, n)?)?;
        let floor = cone_lower_bound(&cone) * w.integrate(&MeasureKind::Lebesgue) * T::lit(0.5);
        let rho = ops[0].apply(&w);
        check_floor(&rho, floor)?;
        let g = DensityGrid::zeros(cache.mesh());
        Ok(Self {
            phi,
            mean: MeanFunctional::new(cache.mesh(), phi),
            ops,
            floor,
            k: 1,
            rho,
            g,
        })
    }

    pub fn current(&self) -> MartingaleStep<T> {
        MartingaleStep {
            k: self.k,
            rho: self.rho.clone(),
            h: self.g.div(&self.rho),
            center: self.mean.mean(&self.rho),
        }
    }

    /// Time index of the current state.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Advances `k -> k + 1`; fails once the prepared horizon is reached.
    pub fn advance(&mut self) -> Result<()> {
        if self.k >= self.ops.len() {
            return Err(invalid("n", "recursion horizon exhausted"));
        }
        let op = &self.ops[self.k];
        let c = self.mean.mean(&self.rho);
        let phi = self.phi;
        let centred = |x: T| phi.eval(x) - c;
        self.g = op.apply_weighted(&self.rho, &centred).add(&op.apply(&self.g));
        self.rho = op.apply(&self.rho);
        check_floor(&self.rho, self.floor)?;
        self.k += 1;
        Ok(())
    }
}

/// `H_n` on the mesh, via the recursion.
pub fn martingale_h<T: Real>(
    s: &Schedule<T>,
    phi: &Observable<T>,
    n: usize,
    mesh: &Arc<Mesh<T>>,
) -> Result<DensityGrid<T>> {
    let cache = OperatorCache::new(mesh);
    let mut rec = HRecursion::new(&cache, s, phi, &MeasureKind::Lebesgue, n, ConeParams::default_a())?;
    while rec.k() < n {
        rec.advance()?;
    }
    Ok(rec.current().h)
}

/// Everything needed to evaluate `psi_1, ..., psi_n` and `H_1, ..., H_{n+1}`.
#[derive(Debug, Clone)]
pub struct Decomposition<T: Real> {
    phi: Observable<T>,
    maps: Vec<MapParam<T>>,
    /// `c_0, ..., c_{n+1}`.
    centers: Vec<T>,
    /// `rho_0, ..., rho_{n+1}`.
    rho: Vec<DensityGrid<T>>,
    /// `H_1, ..., H_{n+1}` at index `k - 1`.
    h: Vec<DensityGrid<T>>,
}

impl<T: Real> Decomposition<T> {
    pub fn new(
        cache: &OperatorCache<T>,
        s: &Schedule<T>,
        phi: &Observable<T>,
        mu: &MeasureKind<T>,
        n: usize,
        cone_a: T,
    ) -> Result<Self> {
        let maps = s.symbols(n + 1)?;
        let mut rec = HRecursion::new(cache, s, phi, mu, n + 1, cone_a)?;
        let w = mu.weight_grid(cache.mesh());
        let mut centers = vec![MeanFunctional::new(cache.mesh(), phi).mean(&w)];
        let mut rho = vec![w];
        let mut h = Vec::with_capacity(n + 1);
        loop {
            let step = rec.current();
            centers.push(step.center);
            rho.push(step.rho);
            h.push(step.h);
            if rec.k() == n + 1 {
                break;
            }
            rec.advance()?;
        }
        Ok(Self {
            phi: phi.clone(),
            maps,
            centers,
            rho,
            h,
        })
    }

    /// Horizon `n`: `psi_1..psi_n` are available.
    pub fn horizon(&self) -> usize {
        self.h.len() - 1
    }

    pub fn maps(&self) -> &[MapParam<T>] {
        &self.maps
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn rho(&self, k: usize) -> &DensityGrid<T> {
        &self.rho[k]
    }

    /// `H_k` for `1 <= k <= n + 1`.
    pub fn h(&self, k: usize) -> &DensityGrid<T> {
        &self.h[k - 1]
    }

    /// `psi_k` for `1 <= k <= n`.
    pub fn psi(&self, k: usize) -> Psi<'_, T> {
        assert!(k >= 1 && k <= self.horizon(), "psi index {k} out of range");
        Psi {
            phi: &self.phi,
            center: self.centers[k],
            h: &self.h[k - 1],
            h_next: &self.h[k],
            next_map: self.maps[k],
        }
    }

    /// `(S^_n(x0), sum_{k=1}^n psi_k(T^k x0) + H_{n+1}(T^{n+1} x0))`.
    pub fn telescope(&self, x0: T) -> (T, T) {
        let n = self.horizon();
        let mut x = x0;
        let mut s_hat = T::zero();
        let mut martingale = T::zero();
        for k in 1..=n {
            x = self.maps[k - 1].apply_unchecked(x);
            s_hat += self.phi.eval(x) - self.centers[k];
            martingale += self.psi(k).eval(x);
        }
        let last = self.maps[n].apply_unchecked(x);
        (s_hat, martingale + self.h[n].eval(last))
    }

    /// `int psi_n o T^n * g o T^{n+1} dm`, evaluated as
    /// `int P_{n+1}(psi_n rho_n) g dm`.
    pub fn reverse_residual(&self, cache: &OperatorCache<T>, k: usize, g: &Observable<T>) -> T {
        let psi = self.psi(k);
        let op = cache.get(self.maps[k]);
        let transported = op.apply_weighted(&self.rho[k], &|y| psi.eval(y));
        transported.integrate_with(&MeasureKind::Lebesgue, |x| g.eval(x), g.breakpoints())
    }
}

/// `psi_n = phi - c_n + H_n - H_{n+1} o T_{n+1}`, evaluated pointwise so the
/// jump of `T_{n+1}` at 1/2 is kept exact.
#[derive(Debug, Clone, Copy)]
pub struct Psi<'a, T: Real> {
    phi: &'a Observable<T>,
    center: T,
    h: &'a DensityGrid<T>,
    h_next: &'a DensityGrid<T>,
    next_map: MapParam<T>,
}

impl<T: Real> Psi<'_, T> {
    pub fn eval(&self, x: T) -> T {
        self.phi.eval(x) - self.center + self.h.eval(x)
            - self.h_next.eval(self.next_map.apply_unchecked(x))
    }

    pub fn to_grid(&self) -> DensityGrid<T> {
        DensityGrid::from_fn(self.h.mesh(), |x| self.eval(x), T::zero())
    }
}

/// `psi_n` sampled on the mesh.
pub fn psi_n<T: Real>(
    s: &Schedule<T>,
    phi: &Observable<T>,
    n: usize,
    mesh: &Arc<Mesh<T>>,
) -> Result<DensityGrid<T>> {
    if n == 0 {
        return Err(invalid("n", "psi_n is defined for n >= 1"));
    }
    let cache = OperatorCache::new(mesh);
    let d = Decomposition::new(&cache, s, phi, &MeasureKind::Lebesgue, n, ConeParams::default_a())?;
    Ok(d.psi(n).to_grid())
}

/// `||H_k o T^k||_{L^p(mu)} = (int |H_k|^p rho_k dm)^{1/p}` for `k = 1..=n`.
pub fn h_norm_curve<T: Real>(
    cache: &OperatorCache<T>,
    s: &Schedule<T>,
    phi: &Observable<T>,
    mu: &MeasureKind<T>,
    n: usize,
    p: T,
) -> Result<Vec<T>> {
    let mut rec = HRecursion::new(cache, s, phi, mu, n, ConeParams::default_a())?;
    let mut out = Vec::with_capacity(n);
    loop {
        let step = rec.current();
        let integrand = step.h.map_values(|_, v| v.abs().powf(p)).mul(&step.rho);
        out.push(integrand.integrate(&MeasureKind::Lebesgue).powf(T::one() / p));
        if rec.k() == n {
            return Ok(out);
        }
        rec.advance()?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ParameterSpace;

    fn p(a: f64) -> MapParam<f64> {
        MapParam::new(a).unwrap()
    }

    fn mesh() -> Arc<Mesh<f64>> {
        Mesh::new(256, 0.8).unwrap()
    }

    #[test]
    fn table_of_constants_is_constant() {
        let m = mesh();
        let s = Schedule::fixed(vec![p(0.2), p(0.7), p(0.4)]);
        let t = centering_table(&s, &Observable::constant(1.0), &MeasureKind::Lebesgue, 3, &m).unwrap();
        assert!(t.means.iter().all(|c| (c - 1.0).abs() < 1e-12));
        let centred = Observable::identity().shifted(0.5);
        let t = centering_table(&s, &centred, &MeasureKind::Lebesgue, 3, &m).unwrap();
        assert!(t.mean(0).abs() < 1e-12);
    }

    #[test]
    fn birkhoff_examples() {
        let s = Schedule::constant(p(0.5));
        let id = Observable::identity();
        assert_eq!(birkhoff_sum(&s, &id, 0.75, 2, None).unwrap(), 1.5);
        assert_eq!(birkhoff_sum(&s, &id, 0.0, 50, None).unwrap(), 0.0);
        let c = Observable::constant(0.3);
        let m = mesh();
        let t = centering_table(&s, &c, &MeasureKind::Lebesgue, 10, &m).unwrap();
        for n in 1..=10 {
            assert!(birkhoff_sum(&s, &c, 0.37, n, Some(&t)).unwrap().abs() < 1e-12);
        }
        assert!(birkhoff_sum(&s, &id, 1.5, 2, None).is_err());
        assert!(birkhoff_sum(&s, &id, 0.5, 11, Some(&t)).is_err());
    }

    #[test]
    fn h_vanishes_for_constants_and_at_one() {
        let m = mesh();
        let s = Schedule::fixed(vec![p(0.2), p(0.7), p(0.4), p(0.3), p(0.5)]);
        let h1 = martingale_h(&s, &Observable::cosine(1.0, 1.0), 1, &m).unwrap();
        assert!(h1.values().iter().all(|&v| v == 0.0));
        for n in 1..=4 {
            let h = martingale_h(&s, &Observable::constant(2.0), n, &m).unwrap();
            assert!(h.values().iter().all(|v| v.abs() < 1e-12));
        }
        let psi = psi_n(&s, &Observable::constant(2.0), 3, &m).unwrap();
        assert!(psi.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn telescoping_holds_on_random_schedule() {
        let m = mesh();
        let space = ParameterSpace::from_alphas(&[0.3, 0.6], &[0.5, 0.5]).unwrap();
        let s = Schedule::bernoulli(space, 8);
        let cache = OperatorCache::new(&m);
        let phi = Observable::cosine(0.5, 1.0);
        let d = Decomposition::new(&cache, &s, &phi, &MeasureKind::Lebesgue, 12, 20.0).unwrap();
        for i in 0..25 {
            let x0 = (i as f64 + 0.5) / 25.0;
            let (lhs, rhs) = d.telescope(x0);
            assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
        }
        for k in [1, 6, 12] {
            let r = d.reverse_residual(&cache, k, &Observable::constant(1.0));
            assert!(r.abs() < 1e-6, "k {k}: {r}");
        }
    }
}
