//! Compressive feedback codec: a fixed Gaussian measurement matrix with
//! orthonormal rows, a least-squares initializer and the unrolled ISTA
//! decoder.
//!
//! Vectors travel as rows: a batch of `B` signals is a `B x n_total` array
//! and its measurements are `B x m`.
//!
//! Each block runs a gradient step followed by a thresholded residual
//! branch. The branch acts on patches of `patch_len` consecutive entries:
//! every patch is lifted to `channels` features, transformed, soft
//! thresholded, mapped back through the inverse transform and projected
//! onto the patch again.

use std::path::Path;

use log::warn;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{shape_err, Error, Result};
use crate::numerics::{
    cholesky_real, lower_triangular_inverse, norm_one_real, spd_inverse, SINGULAR_CONDITION,
};

pub const DEFAULT_BLOCKS: usize = 9;
pub const DEFAULT_RHO: f64 = 0.5;
pub const DEFAULT_THETA: f64 = 0.01;

/// Stored threshold pre-image that maps to exactly zero.
pub const ZERO_THETA_RAW: f64 = -1000.0;

/// `sign(v) * max(|v| - theta, 0)` for a single value.
#[inline]
pub fn soft(v: f64, theta: f64) -> f64 {
    if v > theta {
        v - theta
    } else if v < -theta {
        v + theta
    } else {
        0.0
    }
}

pub fn soft_threshold(x: &[f64], theta: f64) -> Result<Vec<f64>> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be non-negative, got {theta}"
        )));
    }
    Ok(x.iter().map(|&v| soft(v, theta)).collect())
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Pre-image of `softplus`; zero maps to [`ZERO_THETA_RAW`].
pub fn softplus_inv(y: f64) -> f64 {
    if y <= 0.0 {
        ZERO_THETA_RAW
    } else if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

/// Codeword length `round(n_total * cr)`.
pub fn measurement_rows(n_total: usize, cr: f64) -> Result<usize> {
    if !(cr > 0.0 && cr <= 1.0) {
        return Err(Error::Config(format!("compression ratio {cr} is outside (0, 1]")));
    }
    let m = (n_total as f64 * cr).round() as usize;
    if m < 1 {
        return Err(Error::Config(format!(
            "n_total = {n_total} at cr = {cr} leaves no measurements"
        )));
    }
    Ok(m)
}

/// Gaussian `m x n_total` matrix with orthonormalized rows.
pub fn init_measurement(n_total: usize, cr: f64, seed: u64) -> Result<Array2<f64>> {
    let m = measurement_rows(n_total, cr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_fn((m, n_total), |_| rng.sample::<f64, _>(StandardNormal));
    orthonormalize_rows(a)
}

/// Two rounds of Cholesky QR on the rows.
fn orthonormalize_rows(mut a: Array2<f64>) -> Result<Array2<f64>> {
    for _ in 0..2 {
        let g = a.dot(&a.t());
        let l = cholesky_real(&g).ok_or_else(|| {
            Error::Degenerate("measurement rows are linearly dependent".into())
        })?;
        a = lower_triangular_inverse(&l).dot(&a);
    }
    Ok(a)
}

/// Least-squares initializer `X Y^T (Y Y^T)^-1`, with signals and their
/// measurements as columns (`x`: `n x N`, `y`: `m x N`).
///
/// A rank-deficient `Y Y^T` gets a ridge of `1e-10 * trace / m` and a
/// warning; if even that fails a singularity error is returned.
pub fn fit_qinit(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != y.ncols() {
        return shape_err(format!(
            "{} signals but {} measurement vectors",
            x.ncols(),
            y.ncols()
        ));
    }
    let m = y.nrows();
    if m == 0 || x.ncols() == 0 {
        return Err(Error::Degenerate("empty training data for Q_init".into()));
    }
    let g = y.dot(&y.t());
    let xy = x.dot(&y.t());
    let gi = match invert_checked(&g) {
        Ok(gi) => gi,
        Err(cond) => {
            let ridge = 1e-10 * g.diag().sum() / m as f64;
            warn!(
                "Y Y^T is singular (condition estimate {cond:.3e}); adding ridge {ridge:.3e}"
            );
            let mut gr = g.clone();
            gr.diag_mut().mapv_inplace(|v| v + ridge);
            invert_checked(&gr).map_err(|cond| Error::Singular { cond, delta: ridge })?
        }
    };
    Ok(xy.dot(&gi))
}

fn invert_checked(g: &Array2<f64>) -> std::result::Result<Array2<f64>, f64> {
    match spd_inverse(g) {
        Some(gi) => {
            let cond = norm_one_real(g) * norm_one_real(&gi);
            if cond.is_finite() && cond <= SINGULAR_CONDITION {
                Ok(gi)
            } else {
                Err(cond)
            }
        }
        None => Err(f64::INFINITY),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IstaConfig {
    pub n_blocks: usize,
    /// Consecutive entries sharing one lift.
    pub patch_len: usize,
    /// Features per patch after the lift.
    pub channels: usize,
    pub rho_init: f64,
    pub theta_init: f64,
    pub seed: u64,
}

impl Default for IstaConfig {
    fn default() -> Self {
        Self {
            n_blocks: DEFAULT_BLOCKS,
            patch_len: 1,
            channels: 8,
            rho_init: DEFAULT_RHO,
            theta_init: DEFAULT_THETA,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IstaBlock {
    /// Gradient step size, `1 x 1`.
    pub rho: Array2<f64>,
    /// Softplus pre-image of the threshold, `1 x 1`.
    pub theta_raw: Array2<f64>,
    /// `patch_len x channels`
    pub lift: Array2<f64>,
    /// `channels x channels`
    pub transform: Array2<f64>,
    /// `channels x channels`
    pub inverse: Array2<f64>,
    /// `channels x patch_len`
    pub project: Array2<f64>,
}

impl IstaBlock {
    /// A block whose residual branch is identically zero.
    pub fn zero(patch_len: usize, channels: usize, rho: f64) -> Self {
        Self {
            rho: Array2::from_elem((1, 1), rho),
            theta_raw: Array2::from_elem((1, 1), ZERO_THETA_RAW),
            lift: Array2::zeros((patch_len, channels)),
            transform: Array2::zeros((channels, channels)),
            inverse: Array2::zeros((channels, channels)),
            project: Array2::zeros((channels, patch_len)),
        }
    }

    pub fn rho_value(&self) -> f64 {
        self.rho[(0, 0)]
    }

    pub fn theta(&self) -> f64 {
        softplus(self.theta_raw[(0, 0)])
    }

    pub fn params(&self) -> [&Array2<f64>; 6] {
        [
            &self.rho,
            &self.theta_raw,
            &self.lift,
            &self.transform,
            &self.inverse,
            &self.project,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Array2<f64>; 6] {
        [
            &mut self.rho,
            &mut self.theta_raw,
            &mut self.lift,
            &mut self.transform,
            &mut self.inverse,
            &mut self.project,
        ]
    }
}

/// Random orthogonal matrix from QR of a Gaussian one.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = Array2::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
    orthonormalize_rows(a).expect("gaussian matrix has full rank")
}

/// Gain of the second feature in each entry's channel pair.
const PAIR_GAIN: f64 = 10.0;
const INIT_NOISE: f64 = 0.01;

/// Initial block: every entry of a patch owns two features, `v` and
/// `PAIR_GAIN * v`, whose thresholded difference approximates soft
/// thresholding of the entry, so an untrained block behaves like a plain
/// ISTA step. Remaining features start small and random. The transform is
/// a random orthogonal matrix with its transpose as inverse.
fn init_block(cfg: &IstaConfig, rng: &mut ChaCha8Rng) -> IstaBlock {
    let (p, c) = (cfg.patch_len, cfg.channels);
    let mut h = Array2::from_shape_fn((p, c), |_| INIT_NOISE * rng.sample::<f64, _>(StandardNormal));
    let mut g = Array2::from_shape_fn((c, p), |_| INIT_NOISE * rng.sample::<f64, _>(StandardNormal));
    for i in 0..p {
        h[(i, 2 * i)] = 1.0;
        h[(i, 2 * i + 1)] = PAIR_GAIN;
        g[(2 * i, i)] = 1.0;
        g[(2 * i + 1, i)] = -1.0 / PAIR_GAIN;
        for j in 0..2 * p {
            if j / 2 != i {
                h[(i, j)] = 0.0;
                g[(j, i)] = 0.0;
            }
        }
    }
    let t = random_orthogonal(c, rng);
    IstaBlock {
        rho: Array2::from_elem((1, 1), cfg.rho_init),
        theta_raw: Array2::from_elem((1, 1), softplus_inv(cfg.theta_init)),
        lift: h.dot(&t.t()),
        transform: t.clone(),
        inverse: t.t().as_standard_layout().into_owned(),
        project: t.dot(&g),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IstaModel {
    n_total: usize,
    cr: f64,
    cfg: IstaConfig,
    phi: Array2<f64>,
    q_init: Array2<f64>,
    blocks: Vec<IstaBlock>,
}

/// Intermediates of one block.
#[derive(Clone, Debug)]
pub struct BlockTrace {
    /// After the gradient step.
    pub r: Array2<f64>,
    /// After the residual branch.
    pub x: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct IstaTrace {
    pub x0: Array2<f64>,
    pub blocks: Vec<BlockTrace>,
}

impl IstaTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.blocks.last().map_or(&self.x0, |b| &b.x)
    }
}

#[derive(Serialize, Deserialize)]
struct IstaHeader {
    kind: String,
    n_total: usize,
    m: usize,
    cr: f64,
    config: IstaConfig,
}

impl IstaModel {
    /// Fresh model; `q_init` starts as `phi^T` until [`IstaModel::fit_qinit`]
    /// is called.
    pub fn new(n_total: usize, cr: f64, cfg: &IstaConfig) -> Result<Self> {
        if cfg.n_blocks == 0 {
            return Err(Error::Config("ISTA needs at least one block".into()));
        }
        if cfg.patch_len == 0 || n_total % cfg.patch_len != 0 {
            return Err(Error::Config(format!(
                "patch length {} does not divide n_total = {n_total}",
                cfg.patch_len
            )));
        }
        if cfg.channels < 2 * cfg.patch_len {
            return Err(Error::Config(format!(
                "need at least {} channels for patch length {}",
                2 * cfg.patch_len,
                cfg.patch_len
            )));
        }
        if !(cfg.rho_init.is_finite() && cfg.theta_init >= 0.0 && cfg.theta_init.is_finite()) {
            return Err(Error::Config("rho_init must be finite and theta_init >= 0".into()));
        }
        let phi = init_measurement(n_total, cr, cfg.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let blocks = (0..cfg.n_blocks).map(|_| init_block(cfg, &mut rng)).collect();
        Ok(Self {
            n_total,
            cr,
            cfg: cfg.clone(),
            q_init: phi.t().as_standard_layout().into_owned(),
            phi,
            blocks,
        })
    }

    /// Replaces the blocks; all must match the model's patch geometry.
    pub fn with_blocks(mut self, blocks: Vec<IstaBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Config("ISTA needs at least one block".into()));
        }
        let (p, c) = (self.cfg.patch_len, self.cfg.channels);
        for (k, b) in blocks.iter().enumerate() {
            let ok = b.rho.dim() == (1, 1)
                && b.theta_raw.dim() == (1, 1)
                && b.lift.dim() == (p, c)
                && b.transform.dim() == (c, c)
                && b.inverse.dim() == (c, c)
                && b.project.dim() == (c, p);
            if !ok {
                return shape_err(format!("block {k} does not match patch {p} x channels {c}"));
            }
        }
        self.cfg.n_blocks = blocks.len();
        self.blocks = blocks;
        Ok(self)
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn m(&self) -> usize {
        self.phi.nrows()
    }

    pub fn cr(&self) -> f64 {
        self.cr
    }

    pub fn config(&self) -> &IstaConfig {
        &self.cfg
    }

    pub fn phi(&self) -> &Array2<f64> {
        &self.phi
    }

    pub fn q_init(&self) -> &Array2<f64> {
        &self.q_init
    }

    pub fn set_q_init(&mut self, q: Array2<f64>) -> Result<()> {
        if q.dim() != (self.n_total, self.m()) {
            return shape_err(format!(
                "Q_init must be {} x {}, got {:?}",
                self.n_total,
                self.m(),
                q.dim()
            ));
        }
        self.q_init = q;
        Ok(())
    }

    /// Fits `q_init` on signals given as rows (`N x n_total`).
    pub fn fit_qinit(&mut self, signals: ArrayView2<f64>) -> Result<()> {
        let y = self.encode(signals)?;
        self.q_init = fit_qinit(signals.t(), y.t())?;
        Ok(())
    }

    pub fn blocks(&self) -> &[IstaBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [IstaBlock] {
        &mut self.blocks
    }

    /// Number of trainable scalars.
    pub fn n_params(&self) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| b.params())
            .map(|a| a.len())
            .sum()
    }

    /// Measurements `X Phi^T` for signals as rows.
    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_total {
            return shape_err(format!(
                "signal length {} does not match n_total = {}",
                x.ncols(),
                self.n_total
            ));
        }
        Ok(x.dot(&self.phi.t()))
    }

    fn check_measurements(&self, y: &ArrayView2<f64>) -> Result<()> {
        if y.ncols() != self.m() {
            return shape_err(format!(
                "measurement length {} does not match m = {}",
                y.ncols(),
                self.m()
            ));
        }
        Ok(())
    }

    fn step(&self, k: usize, x: &Array2<f64>, y: &ArrayView2<f64>) -> Result<BlockTrace> {
        let b = &self.blocks[k];
        let resid = x.dot(&self.phi.t()) - y;
        let r = x - &(resid.dot(&self.phi) * b.rho_value());
        let (rows, p) = (r.nrows() * self.n_total / self.cfg.patch_len, self.cfg.patch_len);
        let patches = r.to_shape((rows, p)).unwrap();
        let theta = b.theta();
        let hidden = patches.dot(&b.lift).dot(&b.transform).mapv(|v| soft(v, theta));
        let back = hidden.dot(&b.inverse).dot(&b.project);
        let x = &r + &back.to_shape(r.dim()).unwrap();
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite values in ISTA block {}", k + 1)));
        }
        Ok(BlockTrace { r, x })
    }

    /// Runs every block and keeps all intermediates.
    pub fn trace(&self, y: ArrayView2<f64>) -> Result<IstaTrace> {
        self.check_measurements(&y)?;
        let x0 = y.dot(&self.q_init.t());
        let mut blocks: Vec<BlockTrace> = Vec::with_capacity(self.blocks.len());
        for k in 0..self.blocks.len() {
            let prev = blocks.last().map_or(&x0, |b| &b.x);
            let t = self.step(k, prev, &y)?;
            blocks.push(t);
        }
        Ok(IstaTrace { x0, blocks })
    }

    /// Reconstruction from measurements (rows).
    pub fn decode(&self, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_measurements(&y)?;
        let mut x = y.dot(&self.q_init.t());
        for k in 0..self.blocks.len() {
            x = self.step(k, &x, &y)?.x;
        }
        Ok(x)
    }

    /// `decode(encode(x))`.
    pub fn reconstruct(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let y = self.encode(x)?;
        self.decode(y.view())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = IstaHeader {
            kind: "ista".into(),
            n_total: self.n_total,
            m: self.m(),
            cr: self.cr,
            config: self.cfg.clone(),
        };
        let mut arrays = vec![&self.phi, &self.q_init];
        arrays.extend(self.blocks.iter().flat_map(|b| b.params()));
        checkpoint::write(path, &header, &arrays)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (h, arrays) = checkpoint::read(path, |h: &IstaHeader| {
            if h.kind != "ista" {
                return Err(Error::Format {
                    offset: 4,
                    msg: format!("expected an ista checkpoint, found {:?}", h.kind),
                });
            }
            let (n, m, p, c) = (h.n_total, h.m, h.config.patch_len, h.config.channels);
            let mut shapes = vec![(m, n), (n, m)];
            for _ in 0..h.config.n_blocks {
                shapes.extend([(1, 1), (1, 1), (p, c), (c, c), (c, c), (c, p)]);
            }
            Ok(shapes)
        })?;
        let mut it = arrays.into_iter();
        let phi = it.next().unwrap();
        let q_init = it.next().unwrap();
        let mut blocks = Vec::with_capacity(h.config.n_blocks);
        for _ in 0..h.config.n_blocks {
            let mut next = || it.next().unwrap();
            blocks.push(IstaBlock {
                rho: next(),
                theta_raw: next(),
                lift: next(),
                transform: next(),
                inverse: next(),
                project: next(),
            });
        }
        let model = Self {
            n_total: h.n_total,
            cr: h.cr,
            cfg: h.config,
            phi,
            q_init,
            blocks,
        };
        let finite = model.phi.iter().chain(model.q_init.iter()).all(|v| v.is_finite())
            && model.blocks.iter().flat_map(|b| b.params()).all(|a| a.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Format {
                offset: 0,
                msg: "checkpoint holds non-finite parameters".into(),
            });
        }
        Ok(model)
    }
}

/// Single-vector form of [`IstaModel::trace`].
pub fn ista_forward(model: &IstaModel, y: &[f64]) -> Result<IstaTrace> {
    let y = ArrayView2::from_shape((1, y.len()), y).unwrap();
    model.trace(y)
}
