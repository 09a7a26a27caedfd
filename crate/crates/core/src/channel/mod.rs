//! Synthetic multipath MIMO-OFDM channels.
//!
//! A sample is a time series of spatial-frequency CSI matrices
//! `H_t` (antennas x subcarriers). The first slot is a sparse ray model:
//! each path contributes a complex gain times a half-wavelength ULA steering
//! vector at one integer delay tap below `max_delay_tap`. An optional
//! `leakage` fraction of the energy sits on taps at or beyond the truncation
//! length `n_t`. Later slots follow a support-preserving AR(1) recursion.

mod dataset;

pub use dataset::{load, save, ChannelSequence, Dataset};

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numerics::{fft_cols, fft_rows, ComplexMatrix};

fn default_train_fraction() -> f64 {
    0.75
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub n_b: usize,
    pub n_f: usize,
    pub n_t: usize,
    pub n_paths: usize,
    pub max_delay_tap: usize,
    pub ar_coefficient: f64,
    pub leakage: f64,
    pub noise_std: f64,
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

impl ChannelConfig {
    /// Laptop-sized default: 32 antennas, 256 subcarriers, 32 taps kept.
    pub fn desk() -> Self {
        Self {
            n_b: 32,
            n_f: 256,
            n_t: 32,
            n_paths: 6,
            max_delay_tap: 24,
            ar_coefficient: 0.9,
            leakage: 0.0,
            noise_std: 0.0,
            seed: 1,
            train_fraction: 0.75,
        }
    }

    /// Full-scale geometry: 32 antennas, 1024 subcarriers, 32 taps kept.
    pub fn paper() -> Self {
        Self {
            n_f: 1024,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_b == 0 || self.n_f == 0 || self.n_t == 0 || self.n_paths == 0 {
            return bad("n_b, n_f, n_t and n_paths must all be positive".into());
        }
        if self.n_t > self.n_f {
            return bad(format!("n_t = {} exceeds n_f = {}", self.n_t, self.n_f));
        }
        if self.max_delay_tap >= self.n_t {
            return bad(format!(
                "max_delay_tap = {} must be below n_t = {}",
                self.max_delay_tap, self.n_t
            ));
        }
        if !(0.0..=1.0).contains(&self.ar_coefficient) {
            return bad(format!("AR coefficient {} outside [0, 1]", self.ar_coefficient));
        }
        if !(0.0..1.0).contains(&self.leakage) {
            return bad(format!("leakage {} outside [0, 1)", self.leakage));
        }
        if self.leakage > 0.0 && self.n_t == self.n_f {
            return bad("leakage needs taps beyond n_t, but n_t = n_f".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad(format!("noise_std {} is negative", self.noise_std));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train fraction {} outside (0, 1]", self.train_fraction));
        }
        Ok(())
    }
}

fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn add_paths(
    hd: &mut ComplexMatrix,
    rng: &mut ChaCha8Rng,
    n_paths: usize,
    taps: std::ops::Range<usize>,
) {
    let n_b = hd.rows();
    for _ in 0..n_paths {
        let gain = complex_normal(rng);
        let angle: f64 = rng.random_range(-PI / 2.0..PI / 2.0);
        let tap = rng.random_range(taps.clone());
        let spatial_freq = PI * angle.sin();
        for i in 0..n_b {
            hd[(i, tap)] += gain * Complex64::from_polar(1.0, -spatial_freq * i as f64);
        }
    }
}

/// First-slot spatial-delay matrix (antennas x all `n_f` taps), normalized so
/// the mean per-entry power is one.
fn first_slot_delay(cfg: &ChannelConfig, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let mut main = ComplexMatrix::zeros(cfg.n_b, cfg.n_f);
    add_paths(&mut main, rng, cfg.n_paths, 0..cfg.max_delay_tap + 1);
    let mut main_energy = main.norm_sqr();
    while main_energy == 0.0 {
        add_paths(&mut main, rng, 1, 0..cfg.max_delay_tap + 1);
        main_energy = main.norm_sqr();
    }
    let mut hd = main;
    if cfg.leakage > 0.0 {
        let mut tail = ComplexMatrix::zeros(cfg.n_b, cfg.n_f);
        let mut tail_energy = 0.0;
        while tail_energy == 0.0 {
            add_paths(&mut tail, rng, cfg.n_paths, cfg.n_t..cfg.n_f);
            tail_energy = tail.norm_sqr();
        }
        let s = (cfg.leakage / (1.0 - cfg.leakage) * main_energy / tail_energy).sqrt();
        hd = hd.add(&tail.scale(Complex64::new(s, 0.0))).expect("same shape");
    }
    let target = (cfg.n_b * cfg.n_f) as f64;
    let norm = (target / hd.norm_sqr()).sqrt();
    hd.scale(Complex64::new(norm, 0.0))
}

/// Generates sample `index` of the dataset described by `cfg`. Each sample
/// has its own RNG stream, so samples can be produced independently.
pub fn generate_sample(
    cfg: &ChannelConfig,
    index: usize,
    n_timeslots: usize,
) -> Result<ChannelSequence> {
    cfg.validate()?;
    if n_timeslots == 0 {
        return Err(Error::Config("n_timeslots must be at least 1".into()));
    }
    let mut rng = sample_rng(cfg.seed, index as u64);
    let mut h = first_slot_delay(cfg, &mut rng);
    fft_rows(&mut h, false);
    let mut slots = Vec::with_capacity(n_timeslots);
    slots.push(h);
    for _ in 1..n_timeslots {
        let seed: u64 = rng.random();
        let next = evolve(slots.last().unwrap(), cfg.ar_coefficient, seed)?;
        slots.push(next);
    }
    ChannelSequence::new(slots)
}

/// Generates `n_samples` sequences of `n_timeslots` slots with a
/// train/validation split at `cfg.train_fraction`.
pub fn generate(cfg: &ChannelConfig, n_samples: usize, n_timeslots: usize) -> Result<Dataset> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let samples = (0..n_samples)
        .into_par_iter()
        .map(|i| generate_sample(cfg, i, n_timeslots))
        .collect::<Result<Vec<_>>>()?;
    let n_train = split_point(n_samples, cfg.train_fraction);
    Dataset::new(samples, (0..n_train).collect())
}

/// Number of training samples for a split fraction.
pub fn split_point(n_samples: usize, train_fraction: f64) -> usize {
    ((n_samples as f64 * train_fraction).round() as usize).min(n_samples)
}

/// AR(1) step `a H + sqrt(1 - a^2) W`. The innovation `W` is drawn in the
/// delay domain with each entry's variance equal to that entry's current
/// power, so the delay support of `H` is preserved and the expected energy
/// is unchanged.
pub fn evolve(h: &ComplexMatrix, a: f64, seed: u64) -> Result<ComplexMatrix> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidParameter(format!(
            "AR coefficient {a} outside [0, 1]"
        )));
    }
    if a == 1.0 {
        return Ok(h.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innov = (1.0 - a * a).sqrt();
    let mut hd = h.clone();
    fft_rows(&mut hd, true);
    for z in hd.as_mut_slice() {
        let w = complex_normal(&mut rng) * z.norm();
        *z = *z * a + w * innov;
    }
    fft_rows(&mut hd, false);
    Ok(hd)
}

/// Adds i.i.d. complex Gaussian measurement noise of standard deviation
/// `noise_std` per entry.
pub fn add_noise(h: &ComplexMatrix, noise_std: f64, seed: u64) -> ComplexMatrix {
    if noise_std == 0.0 {
        return h.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = h.clone();
    for z in out.as_mut_slice() {
        *z += complex_normal(&mut rng) * noise_std;
    }
    out
}

/// Spatial-frequency CSI to truncated angular-delay CSI (`N_b x n_t`).
pub fn to_angular_delay(h: &ComplexMatrix, n_t: usize) -> Result<ComplexMatrix> {
    if n_t > h.cols() {
        return shape_err(format!(
            "truncation length {n_t} exceeds {} subcarriers",
            h.cols()
        ));
    }
    let mut hd = h.clone();
    fft_rows(&mut hd, true);
    let mut out = hd.first_cols(n_t)?;
    fft_cols(&mut out, false);
    Ok(out)
}

/// Inverse of [`to_angular_delay`] for channels supported on the first
/// `n_t` taps: zero-pads the delay axis to `n_f`.
pub fn from_angular_delay(ht: &ComplexMatrix, n_f: usize) -> Result<ComplexMatrix> {
    if ht.cols() > n_f {
        return shape_err(format!("{} taps do not fit in {n_f} subcarriers", ht.cols()));
    }
    let mut sd = ht.clone();
    fft_cols(&mut sd, true);
    let mut full = ComplexMatrix::zeros(ht.rows(), n_f);
    for i in 0..ht.rows() {
        full.row_mut(i)[..ht.cols()].copy_from_slice(sd.row(i));
    }
    fft_rows(&mut full, false);
    Ok(full)
}

/// Random phase augmentation. Each training sample gains `n_phase - 1`
/// copies, each rotated by one `exp(-i theta)`, `theta ~ U(-pi, pi)`, applied
/// to every slot. Validation samples are left alone.
pub fn phase_augment(d: &Dataset, n_phase: usize, seed: u64) -> Result<Dataset> {
    if n_phase == 0 {
        return Err(Error::InvalidParameter("n_phase must be at least 1".into()));
    }
    if n_phase == 1 {
        return Ok(d.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = d.samples().to_vec();
    let mut train = d.train().to_vec();
    for &idx in d.train() {
        for _ in 1..n_phase {
            let theta: f64 = rng.random_range(-PI..PI);
            let rot = Complex64::from_polar(1.0, -theta);
            train.push(samples.len());
            samples.push(d.samples()[idx].rotated(rot));
        }
    }
    Dataset::new(samples, train)
}
