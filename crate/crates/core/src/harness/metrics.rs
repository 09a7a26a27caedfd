//! NMSE and per-sample spherical normalization.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{shape_err, Error, Result};
use crate::numerics::ComplexMatrix;

/// Reported for an exact reconstruction instead of minus infinity.
pub const EXACT_MATCH_DB: f64 = -300.0;

fn to_db(mean: f64) -> f64 {
    if mean == 0.0 {
        EXACT_MATCH_DB
    } else {
        10.0 * mean.log10()
    }
}

/// `10 log10(mean_i ||H_i - est_i||^2 / ||H_i||^2)`.
pub fn nmse_db(truth: &[ComplexMatrix], est: &[ComplexMatrix]) -> Result<f64> {
    if truth.len() != est.len() {
        return shape_err(format!("{} truth samples but {} estimates", truth.len(), est.len()));
    }
    if truth.is_empty() {
        return Err(Error::Degenerate("no samples to score".into()));
    }
    let mut sum = 0.0;
    for (i, (h, e)) in truth.iter().zip(est).enumerate() {
        if h.shape() != e.shape() {
            return shape_err(format!(
                "sample {i}: truth is {:?}, estimate is {:?}",
                h.shape(),
                e.shape()
            ));
        }
        let p = h.norm_sqr();
        if p == 0.0 {
            return Err(Error::Degenerate(format!("sample {i} has zero energy")));
        }
        sum += h.sub(e)?.norm_sqr() / p;
    }
    Ok(to_db(sum / truth.len() as f64))
}

/// Row-wise form of [`nmse_db`] for real vectors.
pub fn nmse_db_rows(truth: ArrayView2<f64>, est: ArrayView2<f64>) -> Result<f64> {
    if truth.dim() != est.dim() {
        return shape_err(format!("truth is {:?}, estimate is {:?}", truth.dim(), est.dim()));
    }
    if truth.nrows() == 0 {
        return Err(Error::Degenerate("no samples to score".into()));
    }
    let mut sum = 0.0;
    for (i, (h, e)) in truth.outer_iter().zip(est.outer_iter()).enumerate() {
        let p = h.dot(&h);
        if p == 0.0 {
            return Err(Error::Degenerate(format!("sample {i} has zero energy")));
        }
        let d = &h - &e;
        sum += d.dot(&d) / p;
    }
    Ok(to_db(sum / truth.nrows() as f64))
}

/// `(x / ||x||, ||x||)`.
pub fn spherical_normalize(x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate(format!("cannot normalize a vector of norm {norm}")));
    }
    Ok((x.iter().map(|v| v / norm).collect(), norm))
}

pub fn spherical_denormalize(x: &[f64], norm: f64) -> Vec<f64> {
    x.iter().map(|v| v * norm).collect()
}

/// Normalizes every row; all-zero rows are left as they are with norm 1.
pub fn normalize_rows(a: ArrayView2<f64>) -> (Array2<f64>, Vec<f64>) {
    let norms: Vec<f64> = a
        .outer_iter()
        .map(|r| {
            let n = r.dot(&r).sqrt();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut out = a.to_owned();
    for (mut row, &n) in out.axis_iter_mut(Axis(0)).zip(&norms) {
        row /= n;
    }
    (out, norms)
}

/// Scales each row by its stored norm.
pub fn scale_rows(a: &mut Array2<f64>, norms: &[f64]) {
    for (mut row, &n) in a.axis_iter_mut(Axis(0)).zip(norms) {
        row *= n;
    }
}
