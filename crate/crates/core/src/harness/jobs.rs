//! Single runs behind the CLI: dataset generation, one codec, one chain.
//! Each writes its artifacts plus a manifest into `cfg.output_dir`.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;

use crate::channel::{self, generate};
use crate::codec::{Codec, CodecSpec};
use crate::diffchain::{self, ChainConfig, ChainData, DifferentialChain};
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::nmse_db;
use crate::harness::sweep::{
    ensure_writable, estimates_of, kind_spec, load_or_generate, slots, truth_of, Split,
    MANIFEST_JSON,
};
use crate::p2d::build_estimator;
use crate::pilots::{build_pattern, PilotPattern};
use crate::training::History;

pub const DATASET_FILE: &str = "dataset.dcst";
pub const PATTERN_JSON: &str = "pattern.json";
pub const CODEC_FILE: &str = "codec.ckpt";
pub const HISTORY_CSV: &str = "history.csv";
pub const CHAIN_DIR: &str = "chain";

#[derive(Serialize)]
struct RunManifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a ExperimentConfig,
    result: T,
}

fn write_manifest<T: Serialize>(cfg: &ExperimentConfig, command: &'static str, result: T) -> Result<()> {
    let m = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config: cfg,
        result,
    };
    fs::write(cfg.output_dir.join(MANIFEST_JSON), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

/// Generates `cfg.n_samples` sequences and stores them as a DCST file.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    ensure_writable(&cfg.output_dir)?;
    let d = generate(&cfg.channel, cfg.n_samples, cfg.sequence_len())?;
    let path = cfg.output_dir.join(DATASET_FILE);
    channel::save(&d, &path)?;
    #[derive(Serialize)]
    struct Out {
        file: &'static str,
        samples: usize,
        timeslots: usize,
        train: usize,
        val: usize,
    }
    let out = Out {
        file: DATASET_FILE,
        samples: d.len(),
        timeslots: d.n_timeslots(),
        train: d.train().len(),
        val: d.val().len(),
    };
    write_manifest(cfg, "generate", out)?;
    Ok(path)
}

fn first_pattern(cfg: &ExperimentConfig) -> Result<PilotPattern> {
    build_pattern(cfg.channel.n_f, cfg.m_f(cfg.dr_f[0])?, cfg.d[0])
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub codec: Codec,
    pub history: History,
    pub val_nmse_db: f64,
}

/// Trains the first codec kind at the first CR on the first pattern.
pub fn train_codec(cfg: &ExperimentConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    ensure_writable(&cfg.output_dir)?;
    let data = load_or_generate(cfg)?;
    let pattern = first_pattern(cfg)?;
    let est = estimates_of(&data, &build_estimator(&pattern, cfg.channel.n_t, cfg.delta)?, cfg.channel.noise_std, cfg.channel.seed)?;
    let truth = truth_of(&data, cfg.channel.n_t)?;
    let split = Split::new(&data, &est, &truth, 0)?;
    let spec = kind_spec(cfg.codecs[0], cfg.cr[0]);
    let mut codec = Codec::new(&spec, split.tr_in.ncols(), &cfg.ista, cfg.seed)?;
    let history = codec.fit(split.tr_in.view(), split.tr_tg.view(), split.va_in.view(), split.va_tg.view(), &cfg.train)?;
    let out = codec.apply(split.va_in.view())?;
    let val_nmse_db = crate::harness::metrics::nmse_db_rows(split.va_tg.view(), out.view())?;

    let dir = &cfg.output_dir;
    codec.save(dir.join(CODEC_FILE))?;
    history.write_csv(dir.join(HISTORY_CSV))?;
    fs::write(dir.join(PATTERN_JSON), serde_json::to_string_pretty(&pattern)?)?;
    #[derive(Serialize)]
    struct Out {
        codec: CodecSpec,
        checkpoint: &'static str,
        history: &'static str,
        pattern: &'static str,
        val_nmse_db: f64,
    }
    let o = Out {
        codec: spec,
        checkpoint: CODEC_FILE,
        history: HISTORY_CSV,
        pattern: PATTERN_JSON,
        val_nmse_db,
    };
    write_manifest(cfg, "train", o)?;
    Ok(TrainOutput { codec, history, val_nmse_db })
}

#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub chain: DifferentialChain,
    pub histories: Vec<History>,
    pub residual_ratio: Vec<f64>,
    /// Validation NMSE per timeslot.
    pub val_nmse_db: Vec<f64>,
}

/// Trains the first chain plan with `cr_t1` and the first grid CR.
pub fn train_chain(cfg: &ExperimentConfig) -> Result<ChainOutput> {
    let mut cfg = cfg.clone();
    cfg.mode = crate::harness::config::Mode::Chain;
    cfg.validate()?;
    ensure_writable(&cfg.output_dir)?;
    let data = load_or_generate(&cfg)?;
    let pattern = first_pattern(&cfg)?;
    let ch = &cfg.channel;
    let est = estimates_of(&data, &build_estimator(&pattern, ch.n_t, cfg.delta)?, ch.noise_std, ch.seed)?;
    let truth = truth_of(&data, ch.n_t)?;
    let n = cfg.timeslots;
    let train = ChainData { p2d: slots(&est, data.train(), n), truth: slots(&truth, data.train(), n) };
    let val = ChainData { p2d: slots(&est, data.val(), n), truth: slots(&truth, data.val(), n) };
    let plan = &cfg.chains[0];
    let ccfg = ChainConfig {
        plan: diffchain::plan(plan.first, plan.rest, cfg.cr_t1, cfg.cr[0], n),
        ista: cfg.ista.clone(),
        train: cfg.train.clone(),
    };
    let (chain, report) = diffchain::chain_train(&train, &val, &ccfg, cfg.seed)?;
    let out = chain.infer(&val.p2d)?;
    let val_nmse_db = out
        .iter()
        .zip(&val.truth.slots)
        .map(|(o, t)| nmse_db(t, o))
        .collect::<Result<Vec<_>>>()?;

    let dir = &cfg.output_dir;
    chain.save(dir.join(CHAIN_DIR))?;
    for (t, h) in report.histories.iter().enumerate() {
        h.write_csv(dir.join(format!("history_t{}.csv", t + 1)))?;
    }
    fs::write(dir.join(PATTERN_JSON), serde_json::to_string_pretty(&pattern)?)?;
    #[derive(Serialize)]
    struct Out<'a> {
        plan: &'a str,
        chain_dir: &'static str,
        pattern: &'static str,
        gamma_ls: &'a [f64],
        residual_ratio: &'a [f64],
        val_nmse_db: &'a [f64],
    }
    let o = Out {
        plan: &plan.name,
        chain_dir: CHAIN_DIR,
        pattern: PATTERN_JSON,
        gamma_ls: chain.gamma_ls(),
        residual_ratio: &report.residual_ratio,
        val_nmse_db: &val_nmse_db,
    };
    write_manifest(&cfg, "chain-train", o)?;
    Ok(ChainOutput { chain, histories: report.histories, residual_ratio: report.residual_ratio, val_nmse_db })
}
