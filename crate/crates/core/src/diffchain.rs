//! Differential encoding over `T` timeslots.
//!
//! Slot 1 compresses the P2D estimate itself. Every later slot compresses
//! the error against the scaled previous reconstruction,
//! `E_t = H_t - gamma_t Hhat_{t-1}`, and the receiver adds
//! `gamma_t Hhat_{t-1}` back. `gamma_t` is the scalar least-squares fit of
//! the true slot on the previous reconstruction over the training set.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::codec::{devectorize_all, vectorize_all, Codec, CodecKind, CodecSpec};
use crate::cs::IstaConfig;
use crate::error::{shape_err, Error, Result};
use crate::numerics::ComplexMatrix;
use crate::training::{History, TrainConfig};

/// `sum Re<H_t, Hhat_{t-1}> / sum ||Hhat_{t-1}||^2`.
pub fn fit_gamma(prev_estimates: &[ComplexMatrix], current_truth: &[ComplexMatrix]) -> Result<f64> {
    if prev_estimates.len() != current_truth.len() || prev_estimates.is_empty() {
        return shape_err(format!(
            "need equal non-empty lists, got {} and {}",
            prev_estimates.len(),
            current_truth.len()
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, h) in prev_estimates.iter().zip(current_truth) {
        num += h.inner_re(p)?;
        den += p.norm_sqr();
    }
    if den == 0.0 {
        return Err(Error::Degenerate("previous estimates have zero energy".into()));
    }
    Ok(num / den)
}

/// Slot-major data: `slots[t][i]` is sample `i` at timeslot `t + 1`.
#[derive(Clone, Debug, Default)]
pub struct SlotData {
    pub slots: Vec<Vec<ComplexMatrix>>,
}

impl SlotData {
    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn n_samples(&self) -> usize {
        self.slots.first().map_or(0, |s| s.len())
    }

    fn check(&self, what: &str) -> Result<(usize, usize)> {
        let n = self.n_samples();
        if n == 0 {
            return Err(Error::Degenerate(format!("{what} has no samples")));
        }
        let shape = self.slots[0][0].shape();
        for (t, s) in self.slots.iter().enumerate() {
            if s.len() != n {
                return shape_err(format!("{what}: slot {} has {} samples, expected {n}", t + 1, s.len()));
            }
            if s.iter().any(|m| m.shape() != shape) {
                return shape_err(format!("{what}: mixed matrix shapes in slot {}", t + 1));
            }
        }
        Ok(shape)
    }
}

/// P2D estimates (codec inputs) and true truncated CSI (targets).
#[derive(Clone, Debug, Default)]
pub struct ChainData {
    pub p2d: SlotData,
    pub truth: SlotData,
}

impl ChainData {
    fn check(&self, what: &str) -> Result<(usize, usize)> {
        let shape = self.p2d.check(what)?;
        if self.truth.check(what)? != shape
            || self.truth.n_slots() != self.p2d.n_slots()
            || self.truth.n_samples() != self.p2d.n_samples()
        {
            return shape_err(format!("{what}: estimates and truth disagree in size"));
        }
        Ok(shape)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// One codec per timeslot.
    pub plan: Vec<CodecSpec>,
    pub ista: IstaConfig,
    pub train: TrainConfig,
}

/// `[first @ cr_t1, rest @ cr_rest, ...]` with `t` slots in total.
pub fn plan(first: CodecKind, rest: CodecKind, cr_t1: f64, cr_rest: f64, t: usize) -> Vec<CodecSpec> {
    let mk = |kind, cr| CodecSpec { kind, cr, shared_planes: false };
    let mut p = vec![mk(first, cr_t1)];
    p.extend((1..t).map(|_| mk(rest, cr_rest)));
    p
}

fn validate_plan(plan: &[CodecSpec]) -> Result<()> {
    if plan.len() < 2 {
        return Err(Error::Config(format!(
            "a differential chain needs T >= 2 timeslots, got {}; use a single codec instead",
            plan.len()
        )));
    }
    let cr_t1 = plan[0].cr;
    if let Some((t, c)) = plan.iter().enumerate().skip(1).find(|(_, c)| c.cr > cr_t1) {
        return Err(Error::Config(format!(
            "slot {} has cr = {} above the first slot's {cr_t1}",
            t + 1,
            c.cr
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DifferentialChain {
    codecs: Vec<Codec>,
    gamma_ls: Vec<f64>,
    n_b: usize,
    n_t: usize,
}

/// What training produced besides the chain itself.
#[derive(Clone, Debug, Default)]
pub struct ChainReport {
    pub histories: Vec<History>,
    /// `E||E_t||^2 / E||H_t||^2` on the training set for `t >= 2`.
    pub residual_ratio: Vec<f64>,
}

fn add_scaled(a: &[ComplexMatrix], b: &[ComplexMatrix], k: f64) -> Result<Vec<ComplexMatrix>> {
    let k = num_complex::Complex64::new(k, 0.0);
    a.iter().zip(b).map(|(x, y)| x.add(&y.scale(k))).collect()
}

fn run_codec(codec: &Codec, x: &[ComplexMatrix], n_b: usize, n_t: usize) -> Result<Vec<ComplexMatrix>> {
    let v = vectorize_all(x)?;
    devectorize_all(&codec.apply(v.view())?, n_b, n_t)
}

impl DifferentialChain {
    pub fn timeslots(&self) -> usize {
        self.codecs.len()
    }

    pub fn codecs(&self) -> &[Codec] {
        &self.codecs
    }

    pub fn gamma_ls(&self) -> &[f64] {
        &self.gamma_ls
    }

    pub fn cr_t1(&self) -> f64 {
        self.codecs[0].cr()
    }

    pub fn cr_rest(&self) -> f64 {
        self.codecs[1].cr()
    }

    pub fn matrix_shape(&self) -> (usize, usize) {
        (self.n_b, self.n_t)
    }

    /// Assembles a chain from trained parts.
    pub fn from_parts(codecs: Vec<Codec>, gamma_ls: Vec<f64>, n_b: usize, n_t: usize) -> Result<Self> {
        validate_plan(&codecs.iter().map(Codec::spec).collect::<Vec<_>>())?;
        if gamma_ls.len() + 1 != codecs.len() {
            return Err(Error::Config(format!(
                "{} codecs need {} gamma values, got {}",
                codecs.len(),
                codecs.len() - 1,
                gamma_ls.len()
            )));
        }
        if codecs.iter().any(|c| c.n_total() != 2 * n_b * n_t) {
            return Err(Error::Config(format!("codecs do not match {n_b} x {n_t} matrices")));
        }
        Ok(Self { codecs, gamma_ls, n_b, n_t })
    }

    /// Reconstructions for a batch of sequences (slot-major P2D estimates,
    /// at most `T` slots).
    pub fn infer(&self, p2d: &SlotData) -> Result<Vec<Vec<ComplexMatrix>>> {
        if p2d.n_slots() > self.codecs.len() {
            return Err(Error::Config(format!(
                "sequence has {} slots but the chain was trained for {}",
                p2d.n_slots(),
                self.codecs.len()
            )));
        }
        if p2d.n_slots() == 0 {
            return Ok(Vec::new());
        }
        if p2d.check("P2D input")? != (self.n_b, self.n_t) {
            return shape_err(format!("chain expects {} x {} matrices", self.n_b, self.n_t));
        }
        let mut out: Vec<Vec<ComplexMatrix>> = Vec::with_capacity(p2d.n_slots());
        for (t, est) in p2d.slots.iter().enumerate() {
            let h = if t == 0 {
                run_codec(&self.codecs[0], est, self.n_b, self.n_t)?
            } else {
                let g = self.gamma_ls[t - 1];
                let prev = &out[t - 1];
                let e_bar = add_scaled(est, prev, -g)?;
                let e_hat = run_codec(&self.codecs[t], &e_bar, self.n_b, self.n_t)?;
                add_scaled(&e_hat, prev, g)?
            };
            out.push(h);
        }
        Ok(out)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut codecs = Vec::new();
        for (t, c) in self.codecs.iter().enumerate() {
            let file = format!("codec_{}.ckpt", t + 1);
            c.save(dir.join(&file))?;
            codecs.push(ManifestCodec { spec: c.spec(), file });
        }
        let m = Manifest {
            timeslots: self.codecs.len(),
            n_b: self.n_b,
            n_t: self.n_t,
            cr_t1: self.cr_t1(),
            cr_rest: self.cr_rest(),
            gamma_ls: self.gamma_ls.clone(),
            codecs,
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
        if m.codecs.len() != m.timeslots {
            return Err(Error::Config(format!(
                "manifest lists {} codecs for {} timeslots",
                m.codecs.len(),
                m.timeslots
            )));
        }
        let codecs = m
            .codecs
            .iter()
            .map(|c| Codec::load(&c.spec, dir.join(&c.file)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(codecs, m.gamma_ls, m.n_b, m.n_t)
    }
}

pub const MANIFEST: &str = "chain.json";

#[derive(Serialize, Deserialize)]
struct ManifestCodec {
    #[serde(flatten)]
    spec: CodecSpec,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    timeslots: usize,
    n_b: usize,
    n_t: usize,
    cr_t1: f64,
    cr_rest: f64,
    gamma_ls: Vec<f64>,
    codecs: Vec<ManifestCodec>,
}

/// Error rows `x - g * prev` as vectors.
fn residual_rows(x: &[ComplexMatrix], prev: &[ComplexMatrix], g: f64) -> Result<Array2<f64>> {
    vectorize_all(&add_scaled(x, prev, -g)?)
}

/// Trains the codecs slot by slot. The previous reconstruction feeding each
/// slot comes from running the already-trained prefix, never from the
/// ground truth. Codec `t` is seeded with `seed + t - 1`, so chains sharing
/// a prefix plan and seed share their early codecs.
pub fn chain_train(
    train: &ChainData,
    val: &ChainData,
    cfg: &ChainConfig,
    seed: u64,
) -> Result<(DifferentialChain, ChainReport)> {
    validate_plan(&cfg.plan)?;
    let t_max = cfg.plan.len();
    let (n_b, n_t) = train.check("training data")?;
    val.check("validation data")?;
    if train.p2d.n_slots() < t_max || val.p2d.n_slots() < t_max {
        return Err(Error::Config(format!(
            "chain of {t_max} slots needs sequences at least that long"
        )));
    }
    let n_total = 2 * n_b * n_t;
    let mut report = ChainReport::default();
    let mut codecs = Vec::with_capacity(t_max);
    let mut gammas = Vec::with_capacity(t_max - 1);
    let (mut prev_tr, mut prev_va): (Vec<ComplexMatrix>, Vec<ComplexMatrix>) = (Vec::new(), Vec::new());
    for t in 0..t_max {
        let mut codec = Codec::new(&cfg.plan[t], n_total, &cfg.ista, seed + t as u64)?;
        let (est_tr, tru_tr) = (&train.p2d.slots[t], &train.truth.slots[t]);
        let (est_va, tru_va) = (&val.p2d.slots[t], &val.truth.slots[t]);
        let g = if t == 0 {
            0.0
        } else {
            let g = fit_gamma(&prev_tr, tru_tr)?;
            let err: f64 = add_scaled(tru_tr, &prev_tr, -g)?.iter().map(|m| m.norm_sqr()).sum();
            let pow: f64 = tru_tr.iter().map(|m| m.norm_sqr()).sum();
            report.residual_ratio.push(err / pow);
            gammas.push(g);
            g
        };
        log::info!("training slot {} ({:?}, cr {}), gamma {g:.4}", t + 1, cfg.plan[t].kind, cfg.plan[t].cr);
        let (xin, xtg, vin, vtg) = if t == 0 {
            (vectorize_all(est_tr)?, vectorize_all(tru_tr)?, vectorize_all(est_va)?, vectorize_all(tru_va)?)
        } else {
            (
                residual_rows(est_tr, &prev_tr, g)?,
                residual_rows(tru_tr, &prev_tr, g)?,
                residual_rows(est_va, &prev_va, g)?,
                residual_rows(tru_va, &prev_va, g)?,
            )
        };
        let hist = codec.fit(xin.view(), xtg.view(), vin.view(), vtg.view(), &cfg.train)?;
        report.histories.push(hist);
        let out_tr = devectorize_all(&codec.apply(xin.view())?, n_b, n_t)?;
        let out_va = devectorize_all(&codec.apply(vin.view())?, n_b, n_t)?;
        if t == 0 {
            prev_tr = out_tr;
            prev_va = out_va;
        } else {
            prev_tr = add_scaled(&out_tr, &prev_tr, g)?;
            prev_va = add_scaled(&out_va, &prev_va, g)?;
        }
        codecs.push(codec);
    }
    Ok((DifferentialChain::from_parts(codecs, gammas, n_b, n_t)?, report))
}

/// Single-sequence form of [`DifferentialChain::infer`].
pub fn chain_infer(chain: &DifferentialChain, sequence: &[ComplexMatrix]) -> Result<Vec<ComplexMatrix>> {
    let data = SlotData {
        slots: sequence.iter().map(|m| vec![m.clone()]).collect(),
    };
    Ok(chain.infer(&data)?.into_iter().map(|mut s| s.remove(0)).collect())
}
