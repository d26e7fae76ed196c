//! Ordinary least squares for a single regressor.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Slope/intercept pair of a fitted line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line<T> {
    pub slope: T,
    pub intercept: T,
}

impl<T: Scalar> Line<T> {
    pub fn eval(&self, x: T) -> T {
        self.slope * x + self.intercept
    }
}

/// Fits `y ≈ slope * x + intercept` by least squares.
///
/// Sums are centred before forming the normal equations, which keeps the fit
/// exact for noise-free data far from the origin.
pub fn ols<T: Scalar>(xs: &[T], ys: &[T]) -> Result<Line<T>> {
    ols_iter(xs.iter().copied().zip(ys.iter().copied()), xs.len(), ys.len())
}

pub(crate) fn ols_iter<T: Scalar>(
    pairs: impl Iterator<Item = (T, T)> + Clone,
    nx: usize,
    ny: usize,
) -> Result<Line<T>> {
    if nx != ny {
        return Err(Error::Shape(format!("ols: {nx} x values vs {ny} y values")));
    }
    if nx < 2 {
        return Err(Error::SingularFit(format!("ols needs at least 2 points, got {nx}")));
    }
    let n = T::from_usize_lossy(nx);
    let (sx, sy) = pairs.clone().fold((T::zero(), T::zero()), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = pairs.fold((T::zero(), T::zero()), |(a, b), (x, y)| {
        let dx = x - mx;
        (a + dx * dx, b + dx * (y - my))
    });
    let scale = mx.abs().max(T::one());
    if !(sxx > T::epsilon() * T::epsilon() * scale * scale * n) {
        return Err(Error::SingularFit("regressor is constant".into()));
    }
    let slope = sxy / sxx;
    Ok(Line { slope, intercept: my - slope * mx })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flat_series_has_zero_slope() {
        let l = ols(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(l.slope, 0.0);
        assert_eq!(l.intercept, 1.0);
    }

    #[test]
    fn constant_regressor_is_singular() {
        assert!(matches!(ols(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), Err(Error::SingularFit(_))));
        assert!(matches!(ols(&[1.0], &[1.0]), Err(Error::SingularFit(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let l = ols(&[0.0f32, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((l.slope - 2.0).abs() < 1e-6);
        assert!((l.intercept - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn recovers_exact_lines(a in -50.0f64..50.0, b in -50.0f64..50.0, x0 in -100.0f64..100.0) {
            let xs: Vec<f64> = (0..17).map(|i| x0 + 0.7 * i as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let l = ols(&xs, &ys).unwrap();
            prop_assert!((l.slope - a).abs() < 1e-9 * (1.0 + a.abs()));
            prop_assert!((l.intercept - b).abs() < 1e-8 * (1.0 + b.abs() + a.abs() * x0.abs()));
        }
    }
}
