//! Pilots-to-delay (P2D) estimation.
//!
//! For sub-pattern `j`, the observed pilots satisfy `h_f = Q_j h_d` with
//! `Q_j = P_j F`. Keeping the first `n_t` delay taps gives a small linear
//! system whose (ODIR-regularized) pseudoinverse maps pilots straight to the
//! truncated delay response. The operators depend only on the pattern and
//! the DFT, so they are built once.

use log::warn;
use num_complex::Complex64;

use crate::error::{shape_err, Error, Result};
use crate::numerics::{fft_cols, min_norm_pinv, regularized_pinv, ComplexMatrix};
use crate::pilots::{antenna_pattern_index, sample_pilots, PilotPattern};

pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct P2dEstimator {
    n_t: usize,
    delta: f64,
    pattern: PilotPattern,
    operators: Vec<ComplexMatrix>,
    underdetermined: bool,
}

/// `Q_{j,N_t}`: rows of the unitary DFT at the comb subcarriers, first `n_t`
/// columns only. Equal to `(P_j F)[:, :n_t]` without forming `F`.
pub fn truncated_pilot_dft(pattern: &PilotPattern, j: usize, n_t: usize) -> Result<ComplexMatrix> {
    let n_f = pattern.n_f();
    if n_t > n_f {
        return shape_err(format!("n_t = {n_t} exceeds n_f = {n_f}"));
    }
    let cols = pattern.columns(j)?;
    let norm = 1.0 / (n_f as f64).sqrt();
    Ok(ComplexMatrix::from_fn(cols.len(), n_t, |r, k| {
        let phase = -2.0 * std::f64::consts::PI * ((cols[r] * k) % n_f) as f64 / n_f as f64;
        Complex64::from_polar(norm, phase)
    }))
}

/// Precomputes one operator per diagonal sub-pattern.
///
/// With fewer pilots than kept taps (`m_f < n_t`) the system is
/// underdetermined: a warning is logged and, for `delta = 0`, the
/// minimum-norm pseudoinverse is used since the normal equations are
/// singular.
pub fn build_estimator(pattern: &PilotPattern, n_t: usize, delta: f64) -> Result<P2dEstimator> {
    if n_t == 0 {
        return Err(Error::Config("n_t must be positive".into()));
    }
    if n_t > pattern.n_f() {
        return Err(Error::Config(format!(
            "n_t = {n_t} exceeds n_f = {}",
            pattern.n_f()
        )));
    }
    let underdetermined = pattern.m_f() < n_t;
    if underdetermined {
        warn!(
            "P2D system is underdetermined: m_f = {} pilots for n_t = {n_t} taps",
            pattern.m_f()
        );
    }
    let operators = (1..=pattern.d())
        .map(|j| {
            let q = truncated_pilot_dft(pattern, j, n_t)?;
            if underdetermined && delta == 0.0 {
                min_norm_pinv(&q)
            } else {
                regularized_pinv(&q, delta)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(P2dEstimator {
        n_t,
        delta,
        pattern: pattern.clone(),
        operators,
        underdetermined,
    })
}

impl P2dEstimator {
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn pattern(&self) -> &PilotPattern {
        &self.pattern
    }

    /// `Q†_{j,N_t}` for 1-based `j`.
    pub fn operator(&self, j: usize) -> &ComplexMatrix {
        &self.operators[j - 1]
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn is_underdetermined(&self) -> bool {
        self.underdetermined
    }

    /// Angular-delay estimate (`N_b x n_t`) from pilot observations
    /// (`N_b x M_f`).
    pub fn estimate(&self, pilots: &ComplexMatrix) -> Result<ComplexMatrix> {
        if pilots.cols() != self.pattern.m_f() {
            return shape_err(format!(
                "pilot matrix has {} columns, pattern has m_f = {}",
                pilots.cols(),
                self.pattern.m_f()
            ));
        }
        let d = self.pattern.d();
        let mut out = ComplexMatrix::zeros(pilots.rows(), self.n_t);
        for i in 0..pilots.rows() {
            let op = &self.operators[antenna_pattern_index(i + 1, d) - 1];
            let row = op.apply(pilots.row(i))?;
            out.row_mut(i).copy_from_slice(&row);
        }
        fft_cols(&mut out, false);
        Ok(out)
    }

    /// Samples pilots from full CSI, then estimates.
    pub fn estimate_from_csi(&self, h: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.estimate(&sample_pilots(h, &self.pattern)?)
    }
}
