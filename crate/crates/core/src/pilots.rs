//! Frequency-domain pilot selection.
//!
//! Every antenna observes a uniform comb of `m_f` subcarriers with stride
//! `n_f / m_f`. A diagonal pattern of size `d` staggers the comb offset across
//! consecutive antennas so that `d` antennas share one subframe's pilot
//! resources.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numerics::ComplexMatrix;

/// CSI-RS ports that fit in one subframe by default.
pub const DEFAULT_PORTS_PER_SUBFRAME: usize = 2;

#[derive(Serialize, Deserialize)]
struct PatternSpec {
    n_f: usize,
    m_f: usize,
    d: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PatternSpec", into = "PatternSpec")]
pub struct PilotPattern {
    n_f: usize,
    m_f: usize,
    d: usize,
    stride: usize,
    offsets: Vec<usize>,
}

impl TryFrom<PatternSpec> for PilotPattern {
    type Error = Error;

    fn try_from(s: PatternSpec) -> Result<Self> {
        build_pattern(s.n_f, s.m_f, s.d)
    }
}

impl From<PilotPattern> for PatternSpec {
    fn from(p: PilotPattern) -> Self {
        Self {
            n_f: p.n_f,
            m_f: p.m_f,
            d: p.d,
        }
    }
}

/// Builds the diagonal comb pattern; offsets are `j * floor(stride / d)`.
pub fn build_pattern(n_f: usize, m_f: usize, d: usize) -> Result<PilotPattern> {
    if n_f == 0 || m_f == 0 || d == 0 {
        return Err(Error::Config("n_f, m_f and d must be positive".into()));
    }
    if n_f % m_f != 0 {
        return Err(Error::Config(format!("m_f = {m_f} does not divide n_f = {n_f}")));
    }
    let stride = n_f / m_f;
    if d > stride {
        return Err(Error::Config(format!(
            "diagonal size {d} exceeds the comb stride {stride}"
        )));
    }
    let step = stride / d;
    Ok(PilotPattern {
        n_f,
        m_f,
        d,
        stride,
        offsets: (0..d).map(|j| j * step).collect(),
    })
}

impl PilotPattern {
    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn m_f(&self) -> usize {
        self.m_f
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Frequency downsampling ratio `m_f / n_f`.
    pub fn dr_f(&self) -> f64 {
        self.m_f as f64 / self.n_f as f64
    }

    fn check_j(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.d {
            return Err(Error::Index {
                index: j,
                min: 1,
                max: self.d,
            });
        }
        Ok(())
    }

    /// Subcarrier indices observed by sub-pattern `j` (1-based).
    pub fn columns(&self, j: usize) -> Result<Vec<usize>> {
        self.check_j(j)?;
        let off = self.offsets[j - 1];
        Ok((0..self.m_f).map(|r| off + r * self.stride).collect())
    }
}

/// Selection matrix `P_j` (`m_f x n_f`, one-hot rows).
pub fn pilot_matrix(p: &PilotPattern, j: usize) -> Result<ComplexMatrix> {
    let cols = p.columns(j)?;
    let mut m = ComplexMatrix::zeros(p.m_f, p.n_f);
    for (r, c) in cols.into_iter().enumerate() {
        m[(r, c)] = Complex64::new(1.0, 0.0);
    }
    Ok(m)
}

/// Sub-pattern used by antenna `i` (both 1-based): `((i - 1) mod d) + 1`.
pub fn antenna_pattern_index(i: usize, d: usize) -> usize {
    debug_assert!(i >= 1 && d >= 1);
    (i - 1) % d + 1
}

/// Picks each antenna's pilot subcarriers out of `h` (`N_b x N_f`),
/// giving `N_b x M_f`.
pub fn sample_pilots(h: &ComplexMatrix, p: &PilotPattern) -> Result<ComplexMatrix> {
    if h.cols() != p.n_f {
        return shape_err(format!(
            "CSI has {} subcarriers, pattern expects {}",
            h.cols(),
            p.n_f
        ));
    }
    let combs: Vec<Vec<usize>> = (1..=p.d).map(|j| p.columns(j).unwrap()).collect();
    let mut out = ComplexMatrix::zeros(h.rows(), p.m_f);
    for i in 0..h.rows() {
        let cols = &combs[antenna_pattern_index(i + 1, p.d) - 1];
        let src = h.row(i);
        for (dst, &c) in out.row_mut(i).iter_mut().zip(cols) {
            *dst = src[c];
        }
    }
    Ok(out)
}

/// Subframes needed to sound `n_b` antennas with diagonal size `d`.
pub fn subframes_required(n_b: usize, d: usize, ports_per_subframe: usize) -> Result<usize> {
    let per = d
        .checked_mul(ports_per_subframe)
        .filter(|&v| v > 0)
        .ok_or_else(|| Error::Config("d and ports_per_subframe must be positive".into()))?;
    if n_b % per != 0 {
        return Err(Error::Config(format!(
            "{n_b} antennas cannot be split into groups of d * ports = {per}"
        )));
    }
    Ok(n_b / per)
}
