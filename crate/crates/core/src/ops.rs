//! Small dense-matrix helpers shared by the forward and backward passes.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn init_uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
}

/// Sum that does not depend on the order of the values: they are added in
/// ascending order.
pub fn sum_sorted<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().copied().collect();
    v.sort_unstable_by(f64::total_cmp);
    v.iter().sum()
}

/// Order-independent mean along `axis`; the axis must be non-empty.
pub fn mean_axis_sorted(x: &Array2<f64>, axis: Axis) -> Array1<f64> {
    let n = x.len_of(axis) as f64;
    x.lanes(axis).into_iter().map(|l| sum_sorted(l.iter()) / n).collect()
}

/// Softmax of each row. Invariant to the order of the entries within a row.
pub fn softmax_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = sum_sorted(row.iter());
        row /= sum;
    }
    out
}

/// Softmax of each column.
pub fn softmax_cols(x: ArrayView2<f64>) -> Array2<f64> {
    softmax_rows(x.t()).reversed_axes()
}

/// Backward of [`softmax_rows`]: `dS = A * (dA - rowsum(dA * A))`.
pub fn softmax_rows_backward(a: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let dot = (da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
    a * &(da - &dot)
}

pub fn softmax_cols_backward(a: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let dot = (da * a).sum_axis(Axis(0)).insert_axis(Axis(0));
    a * &(da - &dot)
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = logits.mapv(|v| (v - max).exp());
    let sum = e.sum();
    e / sum
}

pub fn ensure_finite(what: &str, x: &Array2<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_owned()))
    }
}

pub fn ensure_shape(what: &str, x: &Array2<f64>, rows: usize, cols: usize) -> Result<()> {
    if x.dim() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{what}: expected {rows}x{cols}, got {}x{}",
            x.nrows(),
            x.ncols()
        )))
    }
}
