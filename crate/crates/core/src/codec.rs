//! Feedback codecs acting on vectorized angular-delay CSI.
//!
//! A complex `N_b x N_t` matrix becomes one real row of length
//! `2 N_b N_t`: the real plane followed by the imaginary plane, each
//! row-major. Every vector is scaled to unit norm before encoding; the norm
//! travels as uncompressed side information and rescales the output.

use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cs::{IstaConfig, IstaModel};
use crate::error::{shape_err, Error, Result};
use crate::harness::metrics::{normalize_rows, scale_rows};
use crate::numerics::ComplexMatrix;
use crate::training::{train, DenseAutoencoder, History, TrainConfig, Trainable};

/// Stacks real and imaginary planes into one row.
pub fn vectorize(h: &ComplexMatrix) -> Vec<f64> {
    let n = h.as_slice().len();
    let mut v = Vec::with_capacity(2 * n);
    v.extend(h.as_slice().iter().map(|z| z.re));
    v.extend(h.as_slice().iter().map(|z| z.im));
    v
}

pub fn devectorize(v: &[f64], rows: usize, cols: usize) -> Result<ComplexMatrix> {
    let n = rows * cols;
    if v.len() != 2 * n {
        return shape_err(format!("vector of length {} cannot hold {rows} x {cols} complex entries", v.len()));
    }
    ComplexMatrix::from_vec(rows, cols, (0..n).map(|i| Complex64::new(v[i], v[n + i])).collect())
}

/// Rows of vectorized matrices.
pub fn vectorize_all(hs: &[ComplexMatrix]) -> Result<Array2<f64>> {
    let Some(first) = hs.first() else {
        return Err(Error::Degenerate("no matrices to vectorize".into()));
    };
    let width = 2 * first.as_slice().len();
    let mut out = Array2::zeros((hs.len(), width));
    for (i, h) in hs.iter().enumerate() {
        if h.shape() != first.shape() {
            return shape_err(format!("matrix {i} is {:?}, expected {:?}", h.shape(), first.shape()));
        }
        out.row_mut(i).assign(&ndarray::Array1::from(vectorize(h)));
    }
    Ok(out)
}

pub fn devectorize_all(a: &Array2<f64>, rows: usize, cols: usize) -> Result<Vec<ComplexMatrix>> {
    a.outer_iter()
        .map(|r| devectorize(r.as_slice().expect("rows of a standard array are contiguous"), rows, cols))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecKind {
    Ista,
    Ae,
}

impl CodecKind {
    pub fn name(self) -> &'static str {
        match self {
            CodecKind::Ista => "ista",
            CodecKind::Ae => "ae",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecSpec {
    pub kind: CodecKind,
    pub cr: f64,
    /// Autoencoder only: train on the real plane and apply the same network
    /// to both planes.
    #[serde(default)]
    pub shared_planes: bool,
}

impl CodecSpec {
    pub fn ista(cr: f64) -> Self {
        Self { kind: CodecKind::Ista, cr, shared_planes: false }
    }

    pub fn ae(cr: f64) -> Self {
        Self { kind: CodecKind::Ae, cr, shared_planes: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Codec {
    Ista(IstaModel),
    Ae { model: DenseAutoencoder, shared_planes: bool },
}

/// `(B, 2n)` stacked planes to `(2B, n)` single planes.
fn split_planes(a: &Array2<f64>) -> Array2<f64> {
    let (b, w) = a.dim();
    a.as_standard_layout().into_owned().into_shape_with_order((2 * b, w / 2)).unwrap()
}

fn join_planes(a: Array2<f64>) -> Array2<f64> {
    let (b2, h) = a.dim();
    a.into_shape_with_order((b2 / 2, 2 * h)).unwrap()
}

impl Codec {
    /// Untrained codec for vectors of length `n_total`.
    pub fn new(spec: &CodecSpec, n_total: usize, ista: &IstaConfig, seed: u64) -> Result<Self> {
        match spec.kind {
            CodecKind::Ista => {
                let cfg = IstaConfig { seed, ..ista.clone() };
                Ok(Codec::Ista(IstaModel::new(n_total, spec.cr, &cfg)?))
            }
            CodecKind::Ae => {
                let n = if spec.shared_planes {
                    if n_total % 2 != 0 {
                        return Err(Error::Config("shared planes need an even vector length".into()));
                    }
                    n_total / 2
                } else {
                    n_total
                };
                Ok(Codec::Ae {
                    model: DenseAutoencoder::new(n, spec.cr, seed)?,
                    shared_planes: spec.shared_planes,
                })
            }
        }
    }

    pub fn kind(&self) -> CodecKind {
        match self {
            Codec::Ista(_) => CodecKind::Ista,
            Codec::Ae { .. } => CodecKind::Ae,
        }
    }

    pub fn cr(&self) -> f64 {
        match self {
            Codec::Ista(m) => m.cr(),
            Codec::Ae { model, .. } => model.cr(),
        }
    }

    pub fn spec(&self) -> CodecSpec {
        CodecSpec {
            kind: self.kind(),
            cr: self.cr(),
            shared_planes: matches!(self, Codec::Ae { shared_planes: true, .. }),
        }
    }

    /// Length of the vectors the codec accepts.
    pub fn n_total(&self) -> usize {
        match self {
            Codec::Ista(m) => m.n_total(),
            Codec::Ae { model, shared_planes: true } => 2 * model.n_total(),
            Codec::Ae { model, .. } => model.n_total(),
        }
    }

    /// Trains on raw (unnormalized) input/target rows. Each pair is scaled
    /// by the input's norm. The ISTA initializer is refit by least squares
    /// first.
    pub fn fit(
        &mut self,
        train_in: ArrayView2<f64>,
        train_tgt: ArrayView2<f64>,
        val_in: ArrayView2<f64>,
        val_tgt: ArrayView2<f64>,
        cfg: &TrainConfig,
    ) -> Result<History> {
        let n = self.n_total();
        for a in [&train_in, &train_tgt, &val_in, &val_tgt] {
            if a.ncols() != n {
                return shape_err(format!("codec expects vectors of length {n}, got {}", a.ncols()));
            }
        }
        let (tin, tn) = normalize_rows(train_in);
        let (vin, vn) = normalize_rows(val_in);
        let mut ttg = train_tgt.to_owned();
        let mut vtg = val_tgt.to_owned();
        let inv = |v: &[f64]| v.iter().map(|x| 1.0 / x).collect::<Vec<_>>();
        scale_rows(&mut ttg, &inv(&tn));
        scale_rows(&mut vtg, &inv(&vn));
        match self {
            Codec::Ista(m) => {
                let y = m.encode(tin.view())?;
                m.set_q_init(crate::cs::fit_qinit(ttg.t(), y.t())?)?;
                train(m, tin.view(), &ttg, vin.view(), &vtg, cfg)
            }
            Codec::Ae { model, shared_planes } => {
                if *shared_planes {
                    let h = n / 2;
                    let real = |a: &Array2<f64>| a.slice(s![.., ..h]).to_owned();
                    let (ti, tt, vi, vt) = (real(&tin), real(&ttg), real(&vin), real(&vtg));
                    train(model, ti.view(), &tt, vi.view(), &vt, cfg)
                } else {
                    train(model, tin.view(), &ttg, vin.view(), &vtg, cfg)
                }
            }
        }
    }

    /// Normalize, encode, decode, rescale.
    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_total() {
            return shape_err(format!(
                "codec expects vectors of length {}, got {}",
                self.n_total(),
                x.ncols()
            ));
        }
        let (u, norms) = normalize_rows(x);
        let mut out = match self {
            Codec::Ista(m) => m.reconstruct(u.view())?,
            Codec::Ae { model, shared_planes: true } => {
                join_planes(model.reconstruct(split_planes(&u).view())?)
            }
            Codec::Ae { model, .. } => model.reconstruct(u.view())?,
        };
        scale_rows(&mut out, &norms);
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            Codec::Ista(m) => m.save(path),
            Codec::Ae { model, .. } => model.save(path),
        }
    }

    pub fn load(spec: &CodecSpec, path: impl AsRef<Path>) -> Result<Self> {
        let codec = match spec.kind {
            CodecKind::Ista => Codec::Ista(IstaModel::load(path)?),
            CodecKind::Ae => Codec::Ae {
                model: DenseAutoencoder::load(path)?,
                shared_planes: spec.shared_planes,
            },
        };
        if (codec.cr() - spec.cr).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "checkpoint has cr = {}, manifest says {}",
                codec.cr(),
                spec.cr
            )));
        }
        Ok(codec)
    }
}
