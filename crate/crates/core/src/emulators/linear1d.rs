use crate::error::Result;
use crate::scalar::Scalar;
use crate::stats::{ols, Line};

/// Closed-form least-squares line from scalar inputs to scalar targets.
pub fn linear1d_fit<T: Scalar>(xs: &[T], ys: &[T]) -> Result<Line<T>> {
    ols(xs, ys)
}

pub fn linear1d_predict<T: Scalar>(fit: &Line<T>, xs: &[T]) -> Vec<T> {
    xs.iter().map(|&x| fit.eval(x)).collect()
}
