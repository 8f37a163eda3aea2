//! Regular observables `phi: [0, 1] -> R` with declared bounds on `|phi|`
//! and `|phi'|`.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::maps::MapParam;
use crate::num::Real;

type EvalFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone)]
pub struct Observable<T: Real> {
    name: String,
    eval: EvalFn<T>,
    sup_norm: T,
    lip_norm: T,
    breakpoints: Vec<T>,
}

impl<T: Real> fmt::Debug for Observable<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("sup_norm", &self.sup_norm)
            .field("lip_norm", &self.lip_norm)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl<T: Real> Observable<T> {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(T) -> T + Send + Sync + 'static,
        sup_norm: T,
        lip_norm: T,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            sup_norm,
            lip_norm,
            breakpoints: Vec::new(),
        }
    }

    /// Points where the observable may jump; quadrature splits cells there.
    pub fn with_breakpoints(mut self, breakpoints: Vec<T>) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    pub fn identity() -> Self {
        Self::new("identity", |x| x, T::one(), T::one())
    }

    pub fn constant(c: T) -> Self {
        Self::new(format!("constant({c})"), move |_| c, c.abs(), T::zero())
    }

    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    /// `amplitude * cos(2 pi k x)`.
    pub fn cosine(amplitude: T, k: T) -> Self {
        let w = T::TAU() * k;
        Self::new(
            format!("cosine({amplitude},{k})"),
            move |x| amplitude * (w * x).cos(),
            amplitude.abs(),
            amplitude.abs() * w.abs(),
        )
    }

    /// `sum_i coeffs[i] x^i`.
    pub fn polynomial(coeffs: Vec<T>) -> Self {
        let sup = coeffs.iter().fold(T::zero(), |acc, c| acc + c.abs());
        let lip = coeffs
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, c)| acc + T::from_usize_lossy(i) * c.abs());
        let name = format!("polynomial({coeffs:?})");
        Self::new(
            name,
            move |x| coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c),
            sup,
            lip,
        )
    }

    /// A C^1 bump equal to 1 on `[a, b]`, 0 outside `[a - w, b + w]`, with
    /// cubic smoothstep flanks of width `w`.
    pub fn indicator_smoothed(a: T, b: T, width: T) -> Result<Self> {
        if !(width > T::zero() && a <= b) {
            return Err(invalid("indicator", "need a <= b and a positive width"));
        }
        let step = move |s: T| {
            let s = s.max(T::zero()).min(T::one());
            s * s * (T::lit(3.0) - T::lit(2.0) * s)
        };
        Ok(Self::new(
            format!("indicator_smoothed({a},{b},{width})"),
            move |x| step((x - a + width) / width) * step((b + width - x) / width),
            T::one(),
            T::lit(1.5) / width,
        ))
    }

    /// `g - g o T_beta` with `g(x) = x`; jumps at `x = 1/2`.
    pub fn coboundary(beta: MapParam<T>) -> Self {
        Self::new(
            format!("coboundary({})", beta.alpha()),
            move |x| x - beta.apply_unchecked(x),
            T::one(),
            T::one() + beta.alpha(),
        )
        .with_breakpoints(vec![T::lit(0.5)])
    }

    /// `phi - c`.
    pub fn shifted(&self, c: T) -> Self {
        let inner = Arc::clone(&self.eval);
        Self {
            name: format!("{}-({c})", self.name),
            eval: Arc::new(move |x| inner(x) - c),
            sup_norm: self.sup_norm + c.abs(),
            lip_norm: self.lip_norm,
            breakpoints: self.breakpoints.clone(),
        }
    }

    /// `s * phi`.
    pub fn scaled(&self, s: T) -> Self {
        let inner = Arc::clone(&self.eval);
        Self {
            name: format!("{s}*{}", self.name),
            eval: Arc::new(move |x| s * inner(x)),
            sup_norm: self.sup_norm * s.abs(),
            lip_norm: self.lip_norm * s.abs(),
            breakpoints: self.breakpoints.clone(),
        }
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        (self.eval)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sup_norm(&self) -> T {
        self.sup_norm
    }

    pub fn lip_norm(&self) -> T {
        self.lip_norm
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    /// `sup |phi| + sup |phi'|`.
    pub fn c1_norm(&self) -> T {
        self.sup_norm + self.lip_norm
    }

    /// True when the observable is identically zero on a sample grid.
    pub fn is_zero(&self) -> bool {
        (0..=256).all(|i| self.eval(T::from_usize_lossy(i) / T::lit(256.0)) == T::zero())
    }

    /// Checks the declared bounds on a 10^4-point sample: `|phi| <= sup_norm`
    /// and finite-difference slopes `<= lip_norm (1 + 1e-6)`, skipping pairs
    /// that straddle a breakpoint.
    pub fn validate(&self) -> Result<()> {
        let n = 10_000;
        let xs: Vec<T> = (0..=n)
            .map(|i| T::from_usize_lossy(i) / T::from_usize_lossy(n))
            .collect();
        let vs: Vec<T> = xs.iter().map(|&x| self.eval(x)).collect();
        let slack = T::one() + T::lit(1e-6);
        let sup_tol = self.sup_norm * slack + T::epsilon();
        if let Some((x, v)) = xs.iter().zip(&vs).find(|(_, v)| v.abs() > sup_tol) {
            return Err(invalid(
                "observable",
                format!("{}: |phi({x})| = {} exceeds sup_norm {}", self.name, v.abs(), self.sup_norm),
            ));
        }
        for i in 0..n {
            let (a, b) = (xs[i], xs[i + 1]);
            if self.breakpoints.iter().any(|&c| c >= a && c < b) {
                continue;
            }
            let slope = ((vs[i + 1] - vs[i]) / (b - a)).abs();
            if slope > self.lip_norm * slack + T::lit(1e-9) {
                return Err(invalid(
                    "observable",
                    format!("{}: slope {slope} near {a} exceeds lip_norm {}", self.name, self.lip_norm),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_honour_their_bounds() {
        let beta = MapParam::new(0.3).unwrap();
        let all: Vec<Observable<f64>> = vec![
            Observable::identity(),
            Observable::constant(-2.5),
            Observable::cosine(0.25, 1.0),
            Observable::polynomial(vec![1.0, -3.0, 2.0]),
            Observable::indicator_smoothed(0.2, 0.4, 0.05).unwrap(),
            Observable::coboundary(beta),
            Observable::identity().shifted(0.4).scaled(-3.0),
        ];
        for phi in &all {
            phi.validate().unwrap_or_else(|e| panic!("{e}"));
        }
    }

    #[test]
    fn validation_catches_understated_bounds() {
        let bad = Observable::new("steep", |x: f64| 5.0 * x, 5.0, 1.0);
        assert!(bad.validate().is_err());
        let big = Observable::new("big", |x: f64| 5.0 * x, 1.0, 5.0);
        assert!(big.validate().is_err());
    }

    #[test]
    fn polynomial_horner() {
        let p = Observable::polynomial(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.eval(2.0), 1.0 + 4.0 + 12.0);
    }

    #[test]
    fn coboundary_values() {
        let beta = MapParam::new(0.5).unwrap();
        let phi: Observable<f64> = Observable::coboundary(beta);
        assert_eq!(phi.eval(0.75), 0.25);
        assert!((phi.eval(0.5) - (-0.5)).abs() < 1e-15);
        assert_eq!(phi.breakpoints(), &[0.5]);
    }

    #[test]
    fn zero_detection() {
        assert!(Observable::<f64>::zero().is_zero());
        assert!(!Observable::<f64>::identity().is_zero());
    }
}
