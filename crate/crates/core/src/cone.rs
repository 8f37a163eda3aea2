//! The cone of densities
//!
//! ```text
//! C = { f in C^0((0,1]) : f >= 0, f non-increasing, x^{alpha+1} f non-decreasing,
//!       f(x) <= a x^{-alpha} m(f) }
//! ```
//!
//! checked at grid resolution, plus the split of `phi h` into a difference of
//! two cone functions.

use std::fmt;

use crate::error::{invalid, Result};
use crate::grid::{DensityGrid, MeasureKind};
use crate::num::Real;
use crate::observable::Observable;

const SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeParams<T> {
    pub a: T,
    pub alpha: T,
}

impl<T: Real> ConeParams<T> {
    pub fn new(a: T, alpha: T) -> Result<Self> {
        if !(a > T::one()) || !a.is_finite() {
            return Err(invalid("a", format!("cone constant must exceed 1, got {a}")));
        }
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(invalid("alpha", format!("cone exponent must lie in (0, 1), got {alpha}")));
        }
        Ok(Self { a, alpha })
    }

    pub fn default_a() -> T {
        T::lit(20.0)
    }

    /// The default constant `a = 20` with exponent `alpha`.
    pub fn with_alpha(alpha: T) -> Result<Self> {
        Self::new(Self::default_a(), alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeCondition {
    Nonnegative,
    NonIncreasing,
    WeightedNonDecreasing,
    UpperBound,
}

impl fmt::Display for ConeCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nonnegative => "nonnegative",
            Self::NonIncreasing => "non-increasing",
            Self::WeightedNonDecreasing => "x^(alpha+1) f non-decreasing",
            Self::UpperBound => "f <= a x^-alpha m(f)",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeViolation {
    pub condition: ConeCondition,
    pub node: usize,
    pub x: f64,
    /// How far past the (slackened) limit the value is.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeReport {
    pub ok: bool,
    pub violations: Vec<ConeViolation>,
}

impl ConeReport {
    pub fn violated(&self, c: ConeCondition) -> bool {
        self.violations.iter().any(|v| v.condition == c)
    }
}

pub fn cone_check<T: Real>(f: &DensityGrid<T>, c: &ConeParams<T>) -> ConeReport {
    let xs = f.nodes();
    let vs = f.values();
    let slack = T::lit(SLACK);
    let mut violations = Vec::new();
    let mut push = |condition, node: usize, excess: T| {
        violations.push(ConeViolation {
            condition,
            node,
            x: xs[node].as_f64(),
            excess: excess.as_f64(),
        })
    };

    for (i, &v) in vs.iter().enumerate() {
        if v < T::zero() {
            push(ConeCondition::Nonnegative, i, -v);
        }
    }

    let scale = vs.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    for i in 1..vs.len() {
        let excess = vs[i] - vs[i - 1] - slack * scale;
        if excess > T::zero() {
            push(ConeCondition::NonIncreasing, i, excess);
        }
    }

    let weighted: Vec<T> = xs
        .iter()
        .zip(vs)
        .map(|(&x, &v)| x.powf(c.alpha + T::one()) * v)
        .collect();
    let wscale = weighted.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    for i in 1..weighted.len() {
        let excess = weighted[i - 1] - weighted[i] - slack * wscale;
        if excess > T::zero() {
            push(ConeCondition::WeightedNonDecreasing, i, excess);
        }
    }

    let mass = f.integrate(&MeasureKind::Lebesgue);
    for (i, (&x, &v)) in xs.iter().zip(vs).enumerate() {
        let bound = c.a * x.powf(-c.alpha) * mass * (T::one() + slack);
        if v > bound || !bound.is_finite() {
            push(ConeCondition::UpperBound, i, v - bound);
        }
    }

    ConeReport {
        ok: violations.is_empty(),
        violations,
    }
}

/// `D = min{a, [alpha (1+alpha) / a^alpha]^{1/(1-alpha)}}`, so that
/// `inf f = f(1) >= D m(f)` on the cone.
pub fn cone_lower_bound<T: Real>(c: &ConeParams<T>) -> T {
    let inner = c.alpha * (T::one() + c.alpha) / c.a.powf(c.alpha);
    c.a.min(inner.powf(T::one() / (T::one() - c.alpha)))
}

/// `phi h = psi1 - psi2` with both parts in the cone.
#[derive(Debug, Clone)]
pub struct ConeSplit<T: Real> {
    pub psi1: DensityGrid<T>,
    pub psi2: DensityGrid<T>,
    pub lambda: T,
    pub a_shift: T,
    pub b_shift: T,
}

/// Splits `phi h` as `((phi + lambda x + A) h + B) - ((A + lambda x) h + B)`
/// with `lambda = -(|phi'| + 1)`, `A = |phi| + |lambda| + 1`, and `B` the
/// larger of the two constants that make both parts satisfy the weighted
/// monotonicity and the upper bound.
pub fn cone_split<T: Real>(
    phi: &Observable<T>,
    h: &DensityGrid<T>,
    c: &ConeParams<T>,
) -> Result<ConeSplit<T>> {
    if !(c.a > T::one()) {
        return Err(invalid("a", "cone constant must exceed 1"));
    }
    let lip = phi.lip_norm();
    let lambda = -(lip + T::one());
    let a_shift = phi.sup_norm() + lambda.abs() + T::one();
    let one = T::one();
    let alpha = c.alpha;

    let u = |x: T| phi.eval(x) + lambda * x + a_shift;
    let b_weighted = h
        .nodes()
        .iter()
        .zip(h.values())
        .map(|(&x, &v)| {
            let w = x.powf(alpha + one) * v;
            ((alpha + T::lit(2.0)) * lambda.abs() * w + w * lip) / ((alpha + one) * x.powf(alpha))
        })
        .fold(T::zero(), T::max);
    let (mut hi, mut lo) = (u(T::zero()), u(T::zero()));
    for &x in h.nodes() {
        hi = hi.max(u(x));
        lo = lo.min(u(x));
    }
    let b_bound = c.a / (c.a - one) * (hi - lo) * h.integrate(&MeasureKind::Lebesgue);
    let b_shift = b_weighted.max(b_bound);

    let psi1 = h.map_values(|x, v| u(x) * v + b_shift);
    let psi2 = h.map_values(|x, v| (a_shift + lambda * x) * v + b_shift);
    Ok(ConeSplit {
        psi1,
        psi2,
        lambda,
        a_shift,
        b_shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mesh;

    #[test]
    fn lower_bound_values() {
        let c = ConeParams::new(20.0, 0.5).unwrap();
        let expected = (0.75 / 20f64.sqrt()).powi(2);
        assert!((cone_lower_bound(&c) - expected).abs() < 1e-15);
        assert!((cone_lower_bound(&c) - 0.028125).abs() < 1e-12);

        let c = ConeParams::new(1.01, 0.9).unwrap();
        let inner = (0.9 * 1.9 / 1.01f64.powf(0.9)).powf(10.0);
        assert!(inner > 1.01);
        assert_eq!(cone_lower_bound(&c), 1.01);
        assert!(1.0 >= cone_lower_bound(&ConeParams::new(20.0, 0.3).unwrap()));
    }

    #[test]
    fn params_validate() {
        assert!(ConeParams::new(1.0, 0.5).is_err());
        assert!(ConeParams::new(2.0, 1.0).is_err());
        assert!(ConeParams::new(2.0, 0.5).is_ok());
    }

    #[test]
    fn constants_pass_and_increasing_fails() {
        let m = Mesh::new(256, 0.8).unwrap();
        for alpha in [0.1, 0.5, 0.9] {
            let c = ConeParams::new(2.0, alpha).unwrap();
            assert!(cone_check(&DensityGrid::constant(&m, 1.0), &c).ok);
        }
        let c = ConeParams::new(20.0, 0.5).unwrap();
        let r = cone_check(&DensityGrid::from_fn(&m, |x| x, 1.0), &c);
        assert!(!r.ok);
        assert!(r.violated(ConeCondition::NonIncreasing));
        let neg = cone_check(&DensityGrid::constant(&m, -1.0), &c);
        assert!(neg.violated(ConeCondition::Nonnegative));
    }

    #[test]
    fn steep_functions_break_the_upper_bound() {
        let m = Mesh::new(256, 0.8).unwrap();
        let c = ConeParams::new(2.0, 0.5).unwrap();
        let f = DensityGrid::from_fn(&m, |x: f64| x.powf(-0.5), -0.5);
        assert!(cone_check(&f, &c).ok);
        let g = DensityGrid::from_fn(&m, |x: f64| x.powf(-0.9), -0.9);
        let r = cone_check(&g, &c);
        assert!(r.violated(ConeCondition::UpperBound));
        assert!(!r.violated(ConeCondition::WeightedNonDecreasing));
    }

    #[test]
    fn split_examples() {
        let m = Mesh::new(512, 0.8).unwrap();
        let c = ConeParams::new(20.0, 0.5).unwrap();
        let h: DensityGrid<f64> = DensityGrid::constant(&m, 1.0);

        let zero = cone_split(&Observable::zero(), &h, &c).unwrap();
        assert_eq!(zero.psi1, zero.psi2);
        assert!(cone_check(&zero.psi1, &c).ok);

        for phi in [
            Observable::identity(),
            Observable::cosine(1.0, 2.0),
            Observable::polynomial(vec![0.3, -1.0, 4.0]),
        ] {
            let s = cone_split(&phi, &h, &c).unwrap();
            assert!(cone_check(&s.psi1, &c).ok, "{}", phi.name());
            assert!(cone_check(&s.psi2, &c).ok, "{}", phi.name());
            let diff = s.psi1.sub(&s.psi2);
            for (x, d) in diff.nodes().iter().zip(diff.values()) {
                assert!((d - phi.eval(*x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn split_with_singular_density() {
        let m = Mesh::new(512, 0.8).unwrap();
        let c = ConeParams::new(20.0, 0.5).unwrap();
        let h = DensityGrid::from_fn(&m, |x: f64| 0.5 * x.powf(-0.5) + 0.2, -0.5);
        assert!(cone_check(&h, &c).ok);
        let s = cone_split(&Observable::cosine(1.0, 1.0), &h, &c).unwrap();
        assert!(cone_check(&s.psi1, &c).ok);
        assert!(cone_check(&s.psi2, &c).ok);
    }
}
