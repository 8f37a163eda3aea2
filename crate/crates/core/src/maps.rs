//! The Liverani–Saussol–Vaienti family of intermittent maps
//!
//! ```text
//! T_a(x) = x + 2^a x^(1+a)   for 0 <= x <= 1/2
//!        = 2x - 1            for 1/2 < x <= 1
//! ```
//!
//! The point `x = 1/2` belongs to the left branch everywhere in this crate
//! (`T_a(1/2) = 1`), so `apply`, `derivative` and orbit simulation agree.

use crate::error::{invalid, Error, Result};
use crate::num::Real;

/// An intermittency exponent `0 < alpha < 1` selecting one map of the family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapParam<T: Real> {
    alpha: T,
    two_pow_alpha: T,
}

/// Preimages of a point under the two monotone branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preimages<T> {
    pub left: T,
    pub right: T,
}

impl<T: Real> MapParam<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(invalid(
                "alpha",
                format!("{alpha} must lie strictly inside (0, 1)"),
            ));
        }
        Ok(Self {
            alpha,
            two_pow_alpha: T::lit(2.0).powf(alpha),
        })
    }

    #[inline]
    pub fn alpha(&self) -> T {
        self.alpha
    }

    #[inline]
    fn check(x: T) -> Result<()> {
        if x >= T::zero() && x <= T::one() {
            Ok(())
        } else {
            Err(Error::Domain(x.as_f64()))
        }
    }

    pub fn apply(&self, x: T) -> Result<T> {
        Self::check(x)?;
        Ok(self.apply_unchecked(x))
    }

    /// Forward map without the domain check, for hot orbit loops whose
    /// iterates are already known to lie in `[0, 1]`.
    #[inline]
    pub fn apply_unchecked(&self, x: T) -> T {
        let half = T::lit(0.5);
        let y = if x <= half {
            x + self.two_pow_alpha * x.powf(T::one() + self.alpha)
        } else {
            x + x - T::one()
        };
        y.max(T::zero()).min(T::one())
    }

    pub fn derivative(&self, x: T) -> Result<T> {
        Self::check(x)?;
        Ok(self.derivative_unchecked(x))
    }

    #[inline]
    pub fn derivative_unchecked(&self, x: T) -> T {
        if x <= T::lit(0.5) {
            T::one() + self.two_pow_alpha * (T::one() + self.alpha) * x.powf(self.alpha)
        } else {
            T::lit(2.0)
        }
    }

    /// Both preimages of `x`. The left one solves `y + 2^a y^(1+a) = x` by
    /// bisection on the bracket `[x / (1 + 2^a x^a), min(x, 1/2)]`, which is
    /// narrow near the neutral fixed point, so the root is resolved to full
    /// relative precision even for tiny `x`.
    pub fn inverse_branches(&self, x: T) -> Result<Preimages<T>> {
        Self::check(x)?;
        Ok(Preimages {
            left: self.left_inverse(x),
            right: (x + T::one()) * T::lit(0.5),
        })
    }

    pub(crate) fn left_inverse(&self, x: T) -> T {
        let half = T::lit(0.5);
        if x <= T::zero() {
            return T::zero();
        }
        if x >= T::one() {
            return half;
        }
        let mut lo = x / (T::one() + self.two_pow_alpha * x.powf(self.alpha));
        let mut hi = x.min(half);
        let eps2 = T::epsilon() + T::epsilon();
        for _ in 0..200 {
            if hi - lo <= T::BISECTION_TOL.min(eps2 * hi) {
                break;
            }
            let mid = (lo + hi) * half;
            if mid <= lo || mid >= hi {
                break;
            }
            let value = mid + self.two_pow_alpha * mid.powf(T::one() + self.alpha);
            if value < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) * half
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn map(a: f64) -> MapParam<f64> {
        MapParam::new(a).unwrap()
    }

    #[test]
    fn rejects_boundary_exponents() {
        assert!(MapParam::new(0.0_f64).is_err());
        assert!(MapParam::new(1.0_f64).is_err());
        assert!(MapParam::new(f64::NAN).is_err());
        assert!(MapParam::new(0.999_f64).is_ok());
    }

    #[test]
    fn apply_examples() {
        assert_eq!(map(0.5).apply(0.0).unwrap(), 0.0);
        for a in [0.1, 0.5, 0.9] {
            assert_relative_eq!(map(a).apply(0.5).unwrap(), 1.0, epsilon = 4.0 * f64::EPSILON);
            assert_eq!(map(a).apply(0.75).unwrap(), 0.5);
        }
        assert!(matches!(map(0.5).apply(1.5), Err(Error::Domain(_))));
        assert!(map(0.5).apply(-1e-300).is_err());
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(map(0.5).derivative(0.0).unwrap(), 1.0);
        assert_eq!(map(0.3).derivative(0.9).unwrap(), 2.0);
        // 1 + sqrt(2) * 1.5 * sqrt(1/2)
        assert_relative_eq!(map(0.5).derivative(0.5).unwrap(), 2.5, epsilon = 1e-14);
        assert!(map(0.5).derivative(2.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        let p = map(0.5);
        let one = p.inverse_branches(1.0).unwrap();
        assert_eq!(one.left, 0.5);
        assert_eq!(one.right, 1.0);
        let zero = p.inverse_branches(0.0).unwrap();
        assert_eq!(zero.left, 0.0);
        assert_eq!(zero.right, 0.5);

        let y = p.inverse_branches(0.3).unwrap().left;
        // independent check of the defining equation y + sqrt(2) y^{3/2} = 0.3
        assert!((y + 2f64.sqrt() * y.powf(1.5) - 0.3).abs() < 1e-13);
        assert!((0.0..=0.5).contains(&y));
    }

    #[test]
    fn left_inverse_keeps_relative_precision_near_zero() {
        let p = map(0.8);
        for x in [1e-30, 1e-18, 1e-9] {
            let y = p.left_inverse(x);
            let back = y + 2f64.powf(0.8) * y.powf(1.8);
            assert_relative_eq!(back, x, max_relative = 1e-14);
        }
    }

    #[test]
    fn branch_point_belongs_to_left_branch() {
        let p = map(0.4);
        assert!(p.derivative(0.5).unwrap() > 2.0);
        assert_eq!(p.apply(0.5).unwrap(), 1.0);
        assert!(p.apply(0.5 + 1e-12).unwrap() < 1e-11);
    }

    #[test]
    fn derivative_is_one_only_at_the_neutral_point() {
        let p = map(0.6);
        for i in 1..=1000 {
            let x = i as f64 / 1000.0;
            assert!(p.derivative(x).unwrap() > 1.0);
        }
    }

    #[test]
    fn monotone_on_each_branch() {
        let p = map(0.7);
        let left: Vec<f64> = (0..=500).map(|i| p.apply(i as f64 / 1000.0).unwrap()).collect();
        assert!(left.windows(2).all(|w| w[1] > w[0]));
        let right: Vec<f64> = (501..=1000).map(|i| p.apply(i as f64 / 1000.0).unwrap()).collect();
        assert!(right.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn single_precision_round_trip() {
        let p = MapParam::new(0.5_f32).unwrap();
        let pre = p.inverse_branches(0.3).unwrap();
        assert!((p.apply(pre.left).unwrap() - 0.3).abs() < 1e-6);
        assert!((p.apply(pre.right).unwrap() - 0.3).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn inverse_round_trip(a in 0.01f64..0.99, x in 0.0f64..=1.0) {
            let p = map(a);
            let pre = p.inverse_branches(x).unwrap();
            prop_assert!((p.apply(pre.left).unwrap() - x).abs() <= 1e-12);
            // the right preimage of 0 is 1/2, which the left branch owns
            if x > 0.0 {
                prop_assert!((p.apply(pre.right).unwrap() - x).abs() <= 1e-12);
            }
            prop_assert!(pre.left <= 0.5 && pre.right >= 0.5);
        }
    }
}
