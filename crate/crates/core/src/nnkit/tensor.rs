use crate::error::{shape, Result};
use crate::scalar::Scalar;

/// Dense row-major n-d array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return shape_err(&shape, data.len());
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![T::zero(); n] }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self { shape, data: (0..n).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the leading (batch) axis.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return shape_err(&shape, self.data.len());
        }
        self.shape = shape;
        Ok(self)
    }

    /// Rows `idx` of the leading axis.
    pub fn gather(&self, idx: &[usize]) -> Self {
        let row = self.data.len() / self.batch().max(1);
        let mut data = Vec::with_capacity(idx.len() * row);
        for &i in idx {
            data.extend_from_slice(&self.data[i * row..(i + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Self { shape, data }
    }

    /// Concatenates along the leading axis.
    pub fn stack_rows(parts: &[Tensor<T>]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return shape("cannot stack zero tensors");
        };
        let tail = &first.shape[1..];
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            if &p.shape[1..] != tail {
                return shape(format!("cannot stack {:?} with {:?}", p.shape, first.shape));
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut s = first.shape.clone();
        s[0] = n;
        Ok(Self { shape: s, data })
    }
}

fn shape_err<X>(shape: &[usize], len: usize) -> Result<X> {
    self::shape(format!("shape {shape:?} does not hold {len} elements"))
}

/// Per-element mean squared error and its gradient with respect to `pred`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return shape(format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()));
    }
    let n = T::from_usize_lossy(pred.len().max(1));
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let grad: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            loss += d * d;
            two * d / n
        })
        .collect();
    Ok((loss / n, Tensor { shape: pred.shape.clone(), data: grad }))
}

/// Mean squared error without a gradient.
pub fn mse<T: Scalar>(pred: &[T], target: &[T]) -> T {
    let n = T::from_usize_lossy(pred.len().max(1));
    pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum::<T>() / n
}
