//! Reverse-mode training of the codecs: losses, ADAM and gradient checks.

pub mod adam;
pub mod autoencoder;
mod ista;
pub mod tape;

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use autoencoder::{ae_forward, DenseAutoencoder};
use tape::{Tape, Var};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the transform round-trip loss.
    pub sym_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            sym_weight: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.sym_weight >= 0.0 && self.sym_weight.is_finite()) {
            return Err(Error::Config(format!(
                "sym_weight must be finite and non-negative, got {}",
                self.sym_weight
            )));
        }
        Ok(())
    }
}

/// Output nodes of a recorded loss.
pub struct LossNodes {
    pub total: Var,
    pub mse: Var,
    pub sym: Var,
    /// One leaf per parameter, in `Trainable::params` order.
    pub params: Vec<Var>,
}

/// A codec that can be trained on (input, target) rows.
pub trait Trainable {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn params(&self) -> Vec<&Array2<f64>>;
    fn params_mut(&mut self) -> Vec<&mut Array2<f64>>;
    /// Records `mse + sym_weight * sym` for a batch.
    fn build_loss<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        inputs: ArrayView2<f64>,
        targets: &'a Array2<f64>,
        sym_weight: f64,
    ) -> Result<LossNodes>;
    fn reconstruct(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub mse: f64,
    pub sym: f64,
}

fn check_batch(inputs: &ArrayView2<f64>) -> Result<()> {
    if inputs.nrows() == 0 {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    Ok(())
}

pub fn loss_value<M: Trainable>(
    model: &M,
    inputs: ArrayView2<f64>,
    targets: &Array2<f64>,
    sym_weight: f64,
) -> Result<LossValue> {
    check_batch(&inputs)?;
    let mut tape = Tape::new();
    let n = model.build_loss(&mut tape, inputs, targets, sym_weight)?;
    Ok(LossValue {
        total: tape.scalar_value(n.total),
        mse: tape.scalar_value(n.mse),
        sym: tape.scalar_value(n.sym),
    })
}

/// Loss and its gradient with respect to every parameter.
pub fn loss_and_grad<M: Trainable>(
    model: &M,
    inputs: ArrayView2<f64>,
    targets: &Array2<f64>,
    sym_weight: f64,
) -> Result<(LossValue, Vec<Array2<f64>>)> {
    check_batch(&inputs)?;
    let mut tape = Tape::new();
    let n = model.build_loss(&mut tape, inputs, targets, sym_weight)?;
    let value = LossValue {
        total: tape.scalar_value(n.total),
        mse: tape.scalar_value(n.mse),
        sym: tape.scalar_value(n.sym),
    };
    let mut g = tape.backward(n.total);
    let grads = n
        .params
        .iter()
        .zip(model.params())
        .map(|(&v, p)| g.take_or_zeros(v, p.dim()))
        .collect();
    Ok((value, grads))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub l_sym: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,val_mse,l_sym\n");
        for r in &self.records {
            writeln!(s, "{},{:.6e},{:.6e},{:.6e}", r.epoch, r.train_mse, r.val_mse, r.l_sym).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Mean squared error per entry of the reconstruction of `inputs`.
pub fn eval_mse<M: Trainable>(model: &M, inputs: ArrayView2<f64>, targets: &Array2<f64>) -> Result<f64> {
    if inputs.nrows() == 0 {
        return Ok(f64::NAN);
    }
    let out = model.reconstruct(inputs)?;
    Ok((&out - targets).iter().map(|v| v * v).sum::<f64>() / targets.len() as f64)
}

/// ADAM over shuffled mini-batches. Validation rows may be empty, in which
/// case `val_mse` is NaN.
pub fn train<M: Trainable>(
    model: &mut M,
    train_in: ArrayView2<f64>,
    train_tgt: &Array2<f64>,
    val_in: ArrayView2<f64>,
    val_tgt: &Array2<f64>,
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    let n = train_in.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    if train_in.ncols() != model.input_len() || val_in.ncols() != model.input_len() {
        return Err(Error::Shape(format!(
            "training vectors have length {}, model expects {}",
            train_in.ncols(),
            model.input_len()
        )));
    }
    if train_tgt.dim() != (n, model.output_len()) || val_tgt.dim() != (val_in.nrows(), model.output_len()) {
        return Err(Error::Shape("targets do not match inputs".into()));
    }
    let mut opt = Adam::new(cfg.learning_rate, model.params().iter().map(|p| p.dim()));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = History::default();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut mse_sum, mut sym_sum) = (0.0, 0.0);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xin = train_in.select(Axis(0), idx);
            let tgt = train_tgt.select(Axis(0), idx);
            let (loss, grads) = loss_and_grad(model, xin.view(), &tgt, cfg.sym_weight)?;
            if !loss.total.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Divergence(format!(
                    "non-finite loss at epoch {epoch}, batch {}",
                    b + 1
                )));
            }
            mse_sum += loss.mse * idx.len() as f64;
            sym_sum += loss.sym * idx.len() as f64;
            opt.step(model.params_mut(), &grads);
        }
        let val_mse = eval_mse(model, val_in, val_tgt)?;
        let rec = EpochRecord {
            epoch,
            train_mse: mse_sum / n as f64,
            val_mse,
            l_sym: sym_sum / n as f64,
        };
        log::debug!(
            "epoch {epoch}: train {:.4e} val {:.4e} sym {:.4e}",
            rec.train_mse,
            rec.val_mse,
            rec.l_sym
        );
        history.records.push(rec);
    }
    Ok(history)
}

/// Finite-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-6;

/// Largest relative error between analytic gradients and central finite
/// differences at `n_probes` randomly drawn parameter entries.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check<M: Trainable + Clone>(
    model: &M,
    inputs: ArrayView2<f64>,
    targets: &Array2<f64>,
    sym_weight: f64,
    n_probes: usize,
    seed: u64,
) -> Result<f64> {
    if n_probes == 0 {
        return Err(Error::InvalidParameter("n_probes must be at least 1".into()));
    }
    let (_, grads) = loss_and_grad(model, inputs, targets, sym_weight)?;
    let sizes: Vec<usize> = grads.iter().map(|g| g.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for _ in 0..n_probes {
        let mut flat = rng.random_range(0..total);
        let mut which = 0;
        while flat >= sizes[which] {
            flat -= sizes[which];
            which += 1;
        }
        let analytic = *grads[which].iter().nth(flat).unwrap();
        let orig = *model.params()[which].iter().nth(flat).unwrap();
        let mut eval = |v: f64| -> Result<f64> {
            *probe.params_mut()[which].iter_mut().nth(flat).unwrap() = v;
            Ok(loss_value(&probe, inputs, targets, sym_weight)?.total)
        };
        let numeric = (eval(orig + FD_STEP)? - eval(orig - FD_STEP)?) / (2.0 * FD_STEP);
        eval(orig)?;
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
