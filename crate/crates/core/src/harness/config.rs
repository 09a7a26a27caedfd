//! Experiment configuration, profiles and validation.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::ChannelConfig;
use crate::codec::CodecKind;
use crate::cs::IstaConfig;
use crate::error::{Error, Result};
use crate::p2d::DEFAULT_DELTA;
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile {other:?}, expected desk or paper"))),
        }
    }
}

/// What a sweep measures at each pattern grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// P2D estimate against the truncated truth.
    P2d,
    /// One trained codec per (cr, codec kind).
    Codec,
    /// Differential chains over `timeslots` slots.
    Chain,
    /// Codec trained on phase-augmented sets of growing size.
    Phase,
}

/// A named differential chain: `first` at `cr_t1`, `rest` at each grid cr.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainPlan {
    pub name: String,
    pub first: CodecKind,
    pub rest: CodecKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; copied into the channel, codec and training seeds.
    pub seed: u64,
    pub channel: ChannelConfig,
    pub n_samples: usize,
    /// DCST file to use instead of generating; must match `channel`.
    pub dataset: Option<PathBuf>,
    pub mode: Mode,
    pub dr_f: Vec<f64>,
    pub d: Vec<usize>,
    pub cr: Vec<f64>,
    pub codecs: Vec<CodecKind>,
    pub chains: Vec<ChainPlan>,
    pub cr_t1: f64,
    pub timeslots: usize,
    pub n_phase: Vec<usize>,
    /// ODIR parameter of every P2D estimator.
    pub delta: f64,
    pub train: TrainConfig,
    pub ista: IstaConfig,
    /// Worker threads for grid points; 0 lets rayon decide.
    pub workers: usize,
    /// Write measured seconds instead of zeros into the results CSV.
    pub record_timing: bool,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn profile(p: Profile) -> Self {
        let (channel, n_samples) = match p {
            Profile::Desk => (ChannelConfig::desk(), 2000),
            Profile::Paper => (ChannelConfig::paper(), 10_000),
        };
        Self {
            seed: channel.seed,
            channel,
            n_samples,
            dataset: None,
            mode: Mode::P2d,
            dr_f: vec![1.0 / 2.0, 1.0 / 4.0, 1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
            d: vec![1, 4],
            cr: vec![1.0 / 4.0],
            codecs: vec![CodecKind::Ista],
            chains: vec![
                ChainPlan { name: "MN-I".into(), first: CodecKind::Ista, rest: CodecKind::Ista },
                ChainPlan { name: "MN-IE".into(), first: CodecKind::Ista, rest: CodecKind::Ae },
            ],
            cr_t1: 1.0 / 4.0,
            timeslots: 5,
            n_phase: vec![1],
            delta: DEFAULT_DELTA,
            train: TrainConfig::default(),
            ista: IstaConfig::default(),
            workers: 0,
            record_timing: false,
            output_dir: PathBuf::from("out"),
        }
    }

    /// Profile defaults overlaid with a partial JSON document. Nested
    /// objects merge key by key.
    pub fn from_json(profile: Profile, overlay: &str) -> Result<Self> {
        let mut base = serde_json::to_value(Self::profile(profile))?;
        let over: Value = serde_json::from_str(overlay)?;
        if !over.is_object() {
            return Err(Error::Config("config file must hold a JSON object".into()));
        }
        merge(&mut base, over);
        Ok(serde_json::from_value(base)?)
    }

    pub fn load(profile: Profile, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(profile, &std::fs::read_to_string(path)?)
    }

    /// Pushes the master seed into every component.
    pub fn resolve_seeds(&mut self) {
        self.channel.seed = self.seed;
        self.train.seed = self.seed;
        self.ista.seed = self.seed;
    }

    /// Number of timeslots each generated sequence needs.
    pub fn sequence_len(&self) -> usize {
        if self.mode == Mode::Chain {
            self.timeslots
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.channel.validate()?;
        self.train.validate()?;
        if self.n_samples < 2 {
            return bad(format!("need at least 2 samples, got {}", self.n_samples));
        }
        if self.dr_f.is_empty() || self.d.is_empty() {
            return bad("dr_f and d grids must be non-empty".into());
        }
        for &r in &self.dr_f {
            if !(r > 0.0 && r <= 1.0) {
                return bad(format!("dr_f = {r} outside (0, 1]"));
            }
            self.m_f(r)?;
        }
        if self.d.contains(&0) {
            return bad("d values must be positive".into());
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad(format!("delta = {} must be finite and non-negative", self.delta));
        }
        if self.mode != Mode::P2d {
            if self.cr.is_empty() {
                return bad("cr grid must be non-empty".into());
            }
            if let Some(c) = self.cr.iter().find(|&&c| !(c > 0.0 && c <= 1.0)) {
                return bad(format!("cr = {c} outside (0, 1]"));
            }
        }
        match self.mode {
            Mode::Codec | Mode::Phase if self.codecs.is_empty() => {
                return bad("codec list must be non-empty".into());
            }
            Mode::Phase if self.n_phase.is_empty() || self.n_phase.contains(&0) => {
                return bad("n_phase grid must be non-empty and positive".into());
            }
            Mode::Chain => {
                if self.chains.is_empty() {
                    return bad("chain list must be non-empty".into());
                }
                if self.timeslots < 2 {
                    return bad(format!("chains need timeslots >= 2, got {}", self.timeslots));
                }
                if !(self.cr_t1 > 0.0 && self.cr_t1 <= 1.0) {
                    return bad(format!("cr_t1 = {} outside (0, 1]", self.cr_t1));
                }
                if let Some(c) = self.cr.iter().find(|&&c| c > self.cr_t1) {
                    return bad(format!("cr = {c} exceeds cr_t1 = {}", self.cr_t1));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `(dr_f, D)` points in grid order. Pairs whose D exceeds the comb
    /// stride are skipped with a warning; an empty result is an error.
    pub fn grid(&self) -> Result<Vec<(f64, usize)>> {
        let mut out = Vec::new();
        for &r in &self.dr_f {
            let stride = self.channel.n_f / self.m_f(r)?;
            for &d in &self.d {
                if d > stride {
                    log::warn!("skipping dr_f = {r}, D = {d}: D exceeds the comb stride {stride}");
                } else {
                    out.push((r, d));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no (dr_f, D) pair in the grid has D within the comb stride".into()));
        }
        Ok(out)
    }

    /// Pilot count for a downsampling ratio; must be a whole number.
    pub fn m_f(&self, dr_f: f64) -> Result<usize> {
        let m = dr_f * self.channel.n_f as f64;
        let r = m.round();
        if (m - r).abs() > 1e-9 || r < 1.0 {
            return Err(Error::Config(format!(
                "dr_f = {dr_f} gives a non-integer pilot count {m} for n_f = {}",
                self.channel.n_f
            )));
        }
        Ok(r as usize)
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
