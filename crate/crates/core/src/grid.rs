//! Functions on `(0, 1]` sampled on a mesh graded towards the neutral fixed
//! point, with quadrature against the measures used throughout the crate.
//!
//! A [`DensityGrid`] stores nodal values on `x_i = (i/N)^(1/(1-a_mesh))`,
//! `i = 1..=N`. Between nodes it is the cubic Hermite interpolant with
//! three-point (Bessel) slopes, which is linear in the nodal values. Below
//! the first node it extends as `f(x_1) (x/x_1)^tail_exponent`.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::maps::MapParam;
use crate::num::{pairwise_sum, Real};

/// Gauss–Legendre rule on [-1, 1]: (abscissa, weight) for the positive half.
const GL4: [(f64, f64); 2] = [
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];
const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Applies a symmetric Gauss–Legendre rule to `g` on `[a, b]`.
fn gauss<T: Real>(rule: &[(f64, f64)], a: T, b: T, mut g: impl FnMut(T) -> T) -> T {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let mut acc = T::zero();
    for &(x, w) in rule {
        let dx = half * T::lit(x);
        acc += T::lit(w) * (g(mid - dx) + g(mid + dx));
    }
    acc * half
}

/// Cubic Hermite basis on `t` in [0, 1]: weights of `(f0, h d0, f1, h d1)`.
#[inline]
pub(crate) fn hermite_basis<T: Real>(t: T) -> [T; 4] {
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let t2 = t * t;
    let t3 = t2 * t;
    [
        two * t3 - three * t2 + T::one(),
        t3 - two * t2 + t,
        three * t2 - two * t3,
        t3 - t2,
    ]
}

/// Where a point falls relative to the mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location<T> {
    /// Below the first node.
    Head,
    /// Inside cell `[x_i, x_{i+1}]` at relative position `t`.
    Cell(usize, T),
}

/// The node set `x_i = (i/N)^(1/(1-a_mesh))`, `i = 1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T: Real> {
    nodes: Vec<T>,
    alpha_mesh: T,
}

impl<T: Real> Mesh<T> {
    pub const MIN_NODES: usize = 64;

    /// Grading exponent used when none is requested explicitly.
    pub fn default_alpha() -> T {
        T::lit(0.8)
    }

    pub fn new(n: usize, alpha_mesh: T) -> Result<Arc<Self>> {
        if n < Self::MIN_NODES {
            return Err(invalid("grid_n", format!("{n} nodes, need at least {}", Self::MIN_NODES)));
        }
        if !(alpha_mesh >= T::zero() && alpha_mesh < T::one()) {
            return Err(invalid("alpha_mesh", format!("{alpha_mesh} outside [0, 1)")));
        }
        let power = T::one() / (T::one() - alpha_mesh);
        let nf = T::from_usize_lossy(n);
        let mut nodes: Vec<T> = (1..=n)
            .map(|i| (T::from_usize_lossy(i) / nf).powf(power))
            .collect();
        nodes[n - 1] = T::one();
        Ok(Arc::new(Self { nodes, alpha_mesh }))
    }

    /// Rebuilds a mesh from stored nodes, checking them against the mesh law.
    pub fn from_nodes(nodes: Vec<T>, alpha_mesh: T) -> Result<Arc<Self>> {
        let reference = Self::new(nodes.len(), alpha_mesh)?;
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
        for (a, b) in nodes.iter().zip(&reference.nodes) {
            if (*a - *b).abs() > tol * b.abs() {
                return Err(invalid("nodes", format!("node {a} does not follow the mesh law")));
            }
        }
        Ok(reference)
    }

    #[inline]
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn first(&self) -> T {
        self.nodes[0]
    }

    pub fn alpha_mesh(&self) -> T {
        self.alpha_mesh
    }

    pub fn locate(&self, y: T) -> Location<T> {
        let x = &self.nodes;
        if y < x[0] {
            return Location::Head;
        }
        let n = x.len();
        // first index with x[j] > y, clamped so that the cell index is valid
        let j = x.partition_point(|&v| v <= y).clamp(1, n - 1);
        let i = j - 1;
        let t = ((y - x[i]) / (x[j] - x[i])).max(T::zero()).min(T::one());
        Location::Cell(i, t)
    }

    /// Three-point slopes of the interpolant through `values`.
    pub(crate) fn slopes(&self, values: &[T]) -> Vec<T> {
        let x = &self.nodes;
        let n = x.len();
        let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<T> = (0..n - 1).map(|i| (values[i + 1] - values[i]) / h[i]).collect();
        let mut d = vec![T::zero(); n];
        for i in 1..n - 1 {
            d[i] = (h[i] * delta[i - 1] + h[i - 1] * delta[i]) / (h[i - 1] + h[i]);
        }
        d[0] = delta[0] - h[0] * (delta[1] - delta[0]) / (h[0] + h[1]);
        d[n - 1] = delta[n - 2] + h[n - 2] * (delta[n - 2] - delta[n - 3]) / (h[n - 3] + h[n - 2]);
        d
    }

    pub fn same_as(&self, other: &Mesh<T>) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}

/// Measures on `[0, 1]` used for integration, centering and sampling.
#[derive(Debug, Clone)]
pub enum MeasureKind<T: Real> {
    /// Lebesgue measure `m`.
    Lebesgue,
    /// `x^(-alpha) dm`.
    Tilde { alpha: T },
    /// A stationary measure `h dm` of a random system.
    Stationary(Arc<DensityGrid<T>>),
    /// The invariant measure `h_beta dm` of a single map.
    SingleMapInvariant {
        beta: MapParam<T>,
        density: Arc<DensityGrid<T>>,
    },
}

impl<T: Real> MeasureKind<T> {
    pub fn tilde(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(invalid("alpha", format!("tilde weight exponent {alpha} outside (0, 1)")));
        }
        Ok(MeasureKind::Tilde { alpha })
    }

    pub fn density(&self) -> Option<&DensityGrid<T>> {
        match self {
            MeasureKind::Stationary(h) => Some(h),
            MeasureKind::SingleMapInvariant { density, .. } => Some(density),
            _ => None,
        }
    }

    /// Total mass `mu([0, 1])`.
    pub fn total_mass(&self) -> T {
        match self {
            MeasureKind::Lebesgue => T::one(),
            MeasureKind::Tilde { alpha } => T::one() / (T::one() - *alpha),
            MeasureKind::Stationary(h) | MeasureKind::SingleMapInvariant { density: h, .. } => {
                h.integrate(&MeasureKind::Lebesgue)
            }
        }
    }

    /// Density of the measure with respect to `m`.
    pub fn weight_at(&self, x: T) -> T {
        match self {
            MeasureKind::Lebesgue => T::one(),
            MeasureKind::Tilde { alpha } => x.powf(-*alpha),
            MeasureKind::Stationary(h) | MeasureKind::SingleMapInvariant { density: h, .. } => {
                h.eval(x)
            }
        }
    }

    /// The density of the measure sampled on `mesh`.
    pub fn weight_grid(&self, mesh: &Arc<Mesh<T>>) -> DensityGrid<T> {
        match self {
            MeasureKind::Lebesgue => DensityGrid::constant(mesh, T::one()),
            MeasureKind::Tilde { alpha } => {
                DensityGrid::from_fn(mesh, |x| x.powf(-*alpha), -*alpha)
            }
            MeasureKind::Stationary(h) | MeasureKind::SingleMapInvariant { density: h, .. } => {
                if h.mesh().same_as(mesh) {
                    (**h).clone()
                } else {
                    DensityGrid::from_fn(mesh, |x| h.eval(x), h.tail_exponent())
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            MeasureKind::Lebesgue => "m".into(),
            MeasureKind::Tilde { alpha } => format!("m_tilde({alpha})"),
            MeasureKind::Stationary(_) => "mu".into(),
            MeasureKind::SingleMapInvariant { beta, .. } => format!("mu_beta({})", beta.alpha()),
        }
    }
}

/// Nodal values of a function on a [`Mesh`], plus its interpolant.
#[derive(Debug, Clone)]
pub struct DensityGrid<T: Real> {
    mesh: Arc<Mesh<T>>,
    values: Vec<T>,
    slopes: Vec<T>,
    tail_exponent: T,
}

impl<T: Real> PartialEq for DensityGrid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.mesh.same_as(&other.mesh)
            && self.values == other.values
            && self.tail_exponent == other.tail_exponent
    }
}

impl<T: Real> DensityGrid<T> {
    pub fn new(mesh: &Arc<Mesh<T>>, values: Vec<T>, tail_exponent: T) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(invalid(
                "values",
                format!("{} values for {} nodes", values.len(), mesh.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "grid values must be finite"));
        }
        Ok(Self::from_parts(mesh, values, tail_exponent))
    }

    pub(crate) fn from_parts(mesh: &Arc<Mesh<T>>, values: Vec<T>, tail_exponent: T) -> Self {
        let slopes = mesh.slopes(&values);
        Self {
            mesh: Arc::clone(mesh),
            values,
            slopes,
            tail_exponent,
        }
    }

    pub fn from_fn(mesh: &Arc<Mesh<T>>, f: impl Fn(T) -> T, tail_exponent: T) -> Self {
        let values = mesh.nodes().iter().map(|&x| f(x)).collect();
        Self::from_parts(mesh, values, tail_exponent)
    }

    pub fn constant(mesh: &Arc<Mesh<T>>, c: T) -> Self {
        Self::from_parts(mesh, vec![c; mesh.len()], T::zero())
    }

    pub fn zeros(mesh: &Arc<Mesh<T>>) -> Self {
        Self::constant(mesh, T::zero())
    }

    #[inline]
    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    #[inline]
    pub fn nodes(&self) -> &[T] {
        self.mesh.nodes()
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn slopes(&self) -> &[T] {
        &self.slopes
    }

    #[inline]
    pub fn tail_exponent(&self) -> T {
        self.tail_exponent
    }

    pub fn alpha_mesh(&self) -> T {
        self.mesh.alpha_mesh()
    }

    /// Value of the interpolant at `t` inside cell `i`.
    #[inline]
    pub fn eval_in_cell(&self, i: usize, t: T) -> T {
        let x = self.mesh.nodes();
        let h = x[i + 1] - x[i];
        let b = hermite_basis(t);
        b[0] * self.values[i]
            + b[1] * h * self.slopes[i]
            + b[2] * self.values[i + 1]
            + b[3] * h * self.slopes[i + 1]
    }

    #[inline]
    pub fn eval_head(&self, y: T) -> T {
        let x1 = self.mesh.first();
        if self.tail_exponent == T::zero() {
            self.values[0]
        } else {
            self.values[0] * (y / x1).powf(self.tail_exponent)
        }
    }

    pub fn eval(&self, y: T) -> T {
        match self.mesh.locate(y) {
            Location::Head => self.eval_head(y),
            Location::Cell(i, t) => self.eval_in_cell(i, t),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert!(self.mesh.same_as(&other.mesh), "grids live on different meshes");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let tail = if self.tail_exponent == other.tail_exponent {
            self.tail_exponent
        } else {
            self.tail_exponent.min(other.tail_exponent)
        };
        Self::from_parts(&self.mesh, values, tail)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// Nodal product.
    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    /// Nodal quotient.
    pub fn div(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a / b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map_values(|_, v| v * c)
    }

    pub fn offset(&self, c: T) -> Self {
        self.map_values(|_, v| v + c)
    }

    /// Applies `f(node, value)` at every node.
    pub fn map_values(&self, f: impl Fn(T, T) -> T) -> Self {
        let values = self
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| f(x, v))
            .collect();
        Self::from_parts(&self.mesh, values, self.tail_exponent)
    }

    /// Multiplies by a function evaluated at the nodes.
    pub fn mul_fn(&self, g: impl Fn(T) -> T) -> Self {
        self.map_values(|x, v| v * g(x))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }

    fn head_integral(&self, weight_exponent: T, weight_value_at_x1: T) -> T {
        // int_0^{x1} f1 (x/x1)^t c (x/x1)^(-w) dx
        let x1 = self.mesh.first();
        let power = T::one() + self.tail_exponent - weight_exponent;
        if power <= T::zero() {
            return if self.values[0] == T::zero() {
                T::zero()
            } else {
                T::infinity() * self.values[0].signum()
            };
        }
        self.values[0] * weight_value_at_x1 * x1 / power
    }

    fn integrate_lebesgue(&self) -> T {
        let x = self.nodes();
        let f = &self.values;
        let d = &self.slopes;
        let mut cells = Vec::with_capacity(x.len());
        cells.push(self.head_integral(T::zero(), T::one()));
        let half = T::lit(0.5);
        let twelfth = T::one() / T::lit(12.0);
        for i in 0..x.len() - 1 {
            let h = x[i + 1] - x[i];
            cells.push(h * (f[i] + f[i + 1]) * half + h * h * (d[i] - d[i + 1]) * twelfth);
        }
        pairwise_sum(&cells)
    }

    fn integrate_tilde(&self, alpha: T) -> T {
        // substitute u = x^(1 - alpha), so x^(-alpha) dx = du / (1 - alpha)
        let x = self.nodes();
        let one_minus = T::one() - alpha;
        let inv = T::one() / one_minus;
        let mut cells = Vec::with_capacity(x.len());
        let x1 = x[0];
        cells.push(self.head_integral(alpha, x1.powf(-alpha)));
        for i in 0..x.len() - 1 {
            let (a, b) = (x[i], x[i + 1]);
            let h = b - a;
            let integral = gauss(&GL8, a.powf(one_minus), b.powf(one_minus), |u| {
                let y = u.powf(inv);
                let t = ((y - a) / h).max(T::zero()).min(T::one());
                self.eval_in_cell(i, t)
            });
            cells.push(integral * inv);
        }
        pairwise_sum(&cells)
    }

    fn integrate_against_grid(&self, w: &DensityGrid<T>) -> T {
        if !w.mesh.same_as(&self.mesh) {
            let g = DensityGrid::from_fn(&self.mesh, |x| w.eval(x), w.tail_exponent);
            return self.integrate_against_grid(&g);
        }
        let x = self.nodes();
        let x1 = x[0];
        let mut cells = Vec::with_capacity(x.len());
        let power = T::one() + self.tail_exponent + w.tail_exponent;
        cells.push(if power > T::zero() {
            self.values[0] * w.values[0] * x1 / power
        } else {
            T::infinity()
        });
        for i in 0..x.len() - 1 {
            let h = x[i + 1] - x[i];
            // the product of two cubics is exact under the 4-point rule
            let integral = gauss(&GL4, T::zero(), T::one(), |t| {
                self.eval_in_cell(i, t) * w.eval_in_cell(i, t)
            });
            cells.push(integral * h);
        }
        pairwise_sum(&cells)
    }

    /// `int f dmu`.
    pub fn integrate(&self, mu: &MeasureKind<T>) -> T {
        match mu {
            MeasureKind::Lebesgue => self.integrate_lebesgue(),
            MeasureKind::Tilde { alpha } => self.integrate_tilde(*alpha),
            MeasureKind::Stationary(h) | MeasureKind::SingleMapInvariant { density: h, .. } => {
                self.integrate_against_grid(h)
            }
        }
    }

    /// `int f g dmu` for a pointwise-evaluable `g` that may jump at the given
    /// breakpoints; cells containing a breakpoint are split there.
    pub fn integrate_with(&self, mu: &MeasureKind<T>, g: impl Fn(T) -> T, breaks: &[T]) -> T {
        let x = self.nodes();
        let x1 = x[0];
        let mut cells = Vec::with_capacity(x.len() + breaks.len());
        let g_head = g(x1 * T::lit(0.5));
        cells.push(match mu {
            MeasureKind::Lebesgue => self.head_integral(T::zero(), T::one()) * g_head,
            MeasureKind::Tilde { alpha } => self.head_integral(*alpha, x1.powf(-*alpha)) * g_head,
            MeasureKind::Stationary(h) | MeasureKind::SingleMapInvariant { density: h, .. } => {
                self.head_integral(-h.tail_exponent, h.eval(x1)) * g_head
            }
        });
        for i in 0..x.len() - 1 {
            let (a, b) = (x[i], x[i + 1]);
            let h = b - a;
            let mut cuts: Vec<T> = breaks.iter().copied().filter(|&c| c > a && c < b).collect();
            cuts.sort_by(|p, q| p.partial_cmp(q).expect("finite breakpoints"));
            let mut lo = a;
            let mut acc = T::zero();
            for hi in cuts.into_iter().chain(std::iter::once(b)) {
                acc += self.piece(mu, i, a, h, lo, hi, &g);
                lo = hi;
            }
            cells.push(acc);
        }
        pairwise_sum(&cells)
    }

    #[allow(clippy::too_many_arguments)]
    fn piece(&self, mu: &MeasureKind<T>, i: usize, a: T, h: T, lo: T, hi: T, g: &impl Fn(T) -> T) -> T {
        let local = |y: T| self.eval_in_cell(i, ((y - a) / h).max(T::zero()).min(T::one()));
        match mu {
            MeasureKind::Lebesgue => gauss(&GL8, lo, hi, |y| local(y) * g(y)),
            MeasureKind::Tilde { alpha } => {
                let one_minus = T::one() - *alpha;
                let inv = T::one() / one_minus;
                gauss(&GL8, lo.powf(one_minus), hi.powf(one_minus), |u| {
                    let y = u.powf(inv);
                    local(y) * g(y)
                }) * inv
            }
            MeasureKind::Stationary(w) | MeasureKind::SingleMapInvariant { density: w, .. } => {
                gauss(&GL8, lo, hi, |y| local(y) * g(y) * w.eval(y))
            }
        }
    }

    /// `int |f| dm`, by 8-point Gauss rules on every cell.
    pub fn l1_norm(&self) -> T {
        let x = self.nodes();
        let mut cells = Vec::with_capacity(x.len());
        cells.push(self.head_integral(T::zero(), T::one()).abs());
        for i in 0..x.len() - 1 {
            let h = x[i + 1] - x[i];
            cells.push(gauss(&GL8, T::zero(), T::one(), |t| self.eval_in_cell(i, t).abs()) * h);
        }
        pairwise_sum(&cells)
    }

    /// Lebesgue mass of `[0, x_i]` at every node, for a nonnegative grid.
    pub fn cumulative_mass(&self) -> Vec<T> {
        let x = self.nodes();
        let f = &self.values;
        let d = &self.slopes;
        let half = T::lit(0.5);
        let twelfth = T::one() / T::lit(12.0);
        let mut acc = self.head_integral(T::zero(), T::one());
        let mut out = Vec::with_capacity(x.len());
        out.push(acc);
        for i in 0..x.len() - 1 {
            let h = x[i + 1] - x[i];
            acc += h * (f[i] + f[i + 1]) * half + h * h * (d[i] - d[i + 1]) * twelfth;
            out.push(acc);
        }
        out
    }

    /// Writes `node,value` rows with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["node", "value"])?;
        for (x, v) in self.nodes().iter().zip(&self.values) {
            w.write_record([x.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a grid written by [`DensityGrid::write_csv`]; the nodes must
    /// follow the mesh law for `alpha_mesh`.
    pub fn read_csv<R: Read>(reader: R, alpha_mesh: T, tail_exponent: T) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for row in r.records() {
            let row = row?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| invalid("csv", format!("{s:?}: {e}")))
            };
            nodes.push(parse(&row[0])?);
            values.push(parse(&row[1])?);
        }
        let mesh = Mesh::from_nodes(nodes, alpha_mesh)?;
        Self::new(&mesh, values, tail_exponent)
    }
}

/// The linear functional `f -> int f g dm` for a fixed `g`, with the
/// quadrature of [`DensityGrid::integrate_with`] folded into per-cell
/// coefficients so that each evaluation is a single O(N) pass.
#[derive(Debug, Clone)]
pub struct Functional<T: Real> {
    mesh: Arc<Mesh<T>>,
    g_head: T,
    /// Coefficients of `(f_i, d_i, f_{i+1}, d_{i+1})` per cell.
    coeffs: Vec<[T; 4]>,
}

impl<T: Real> Functional<T> {
    pub fn new(mesh: &Arc<Mesh<T>>, g: impl Fn(T) -> T, breaks: &[T]) -> Self {
        let x = mesh.nodes();
        let mut coeffs = Vec::with_capacity(x.len() - 1);
        for i in 0..x.len() - 1 {
            let (a, b) = (x[i], x[i + 1]);
            let h = b - a;
            let mut cuts: Vec<T> = breaks.iter().copied().filter(|&c| c > a && c < b).collect();
            cuts.sort_by(|p, q| p.partial_cmp(q).expect("finite breakpoints"));
            let mut c = [T::zero(); 4];
            let mut lo = a;
            for hi in cuts.into_iter().chain(std::iter::once(b)) {
                let half = (hi - lo) * T::lit(0.5);
                let mid = (lo + hi) * T::lit(0.5);
                for &(node, w) in GL8.iter() {
                    for y in [mid - half * T::lit(node), mid + half * T::lit(node)] {
                        let t = ((y - a) / h).max(T::zero()).min(T::one());
                        let basis = hermite_basis(t);
                        let weight = T::lit(w) * half * g(y);
                        c[0] += weight * basis[0];
                        c[1] += weight * basis[1] * h;
                        c[2] += weight * basis[2];
                        c[3] += weight * basis[3] * h;
                    }
                }
                lo = hi;
            }
            coeffs.push(c);
        }
        Self {
            mesh: Arc::clone(mesh),
            g_head: g(x[0] * T::lit(0.5)),
            coeffs,
        }
    }

    pub fn apply(&self, f: &DensityGrid<T>) -> T {
        assert!(self.mesh.same_as(f.mesh()), "functional and grid live on different meshes");
        let v = f.values();
        let d = f.slopes();
        let mut cells = Vec::with_capacity(v.len());
        cells.push(f.head_integral(T::zero(), T::one()) * self.g_head);
        for (i, c) in self.coeffs.iter().enumerate() {
            cells.push(c[0] * v[i] + c[1] * d[i] + c[2] * v[i + 1] + c[3] * d[i + 1]);
        }
        pairwise_sum(&cells)
    }
}
