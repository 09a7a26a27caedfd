//! Grid sweeps: data generation, P2D estimation, codec training, scoring.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{add_noise, generate, phase_augment, to_angular_delay, Dataset};
use crate::codec::{devectorize_all, vectorize_all, Codec, CodecKind, CodecSpec};
use crate::diffchain::{self, ChainConfig, ChainData, SlotData};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Mode};
use crate::harness::metrics::{nmse_db, nmse_db_rows};
use crate::harness::plot::write_charts;
use crate::harness::results::{write_csv, MetricRow};
use crate::numerics::ComplexMatrix;
use crate::p2d::{build_estimator, P2dEstimator};
use crate::pilots::{build_pattern, sample_pilots};

pub const RESULTS_CSV: &str = "results.csv";
pub const TIMINGS_CSV: &str = "timings.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

/// Seed of the pilot noise on slot `t` of sample `i`.
pub fn noise_seed(seed: u64, i: usize, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((i as u64) << 16) ^ t as u64
}

/// `[sample][slot]` truncated angular-delay truth.
pub fn truth_of(d: &Dataset, n_t: usize) -> Result<Vec<Vec<ComplexMatrix>>> {
    d.samples()
        .par_iter()
        .map(|s| s.timeslots().iter().map(|h| to_angular_delay(h, n_t)).collect())
        .collect()
}

/// `[sample][slot]` P2D estimates from noisy pilots.
pub fn estimates_of(
    d: &Dataset,
    est: &P2dEstimator,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<Vec<ComplexMatrix>>> {
    d.samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            s.timeslots()
                .iter()
                .enumerate()
                .map(|(t, h)| {
                    let p = sample_pilots(h, est.pattern())?;
                    est.estimate(&add_noise(&p, noise_std, noise_seed(seed, i, t)))
                })
                .collect()
        })
        .collect()
}

pub(crate) fn pick(all: &[Vec<ComplexMatrix>], idx: &[usize], t: usize) -> Vec<ComplexMatrix> {
    idx.iter().map(|&i| all[i][t].clone()).collect()
}

pub(crate) fn slots(all: &[Vec<ComplexMatrix>], idx: &[usize], n: usize) -> SlotData {
    SlotData { slots: (0..n).map(|t| pick(all, idx, t)).collect() }
}

/// Train/validation matrices for one slot.
pub(crate) struct Split {
    pub tr_in: Array2<f64>,
    pub tr_tg: Array2<f64>,
    pub va_in: Array2<f64>,
    pub va_tg: Array2<f64>,
}

impl Split {
    pub(crate) fn new(d: &Dataset, est: &[Vec<ComplexMatrix>], truth: &[Vec<ComplexMatrix>], t: usize) -> Result<Self> {
        Ok(Self {
            tr_in: vectorize_all(&pick(est, d.train(), t))?,
            tr_tg: vectorize_all(&pick(truth, d.train(), t))?,
            va_in: vectorize_all(&pick(est, d.val(), t))?,
            va_tg: vectorize_all(&pick(truth, d.val(), t))?,
        })
    }
}

/// Trains one codec on `split` and returns its validation NMSE.
pub(crate) fn codec_nmse(cfg: &ExperimentConfig, spec: &CodecSpec, split: &Split) -> Result<(Codec, f64)> {
    let mut codec = Codec::new(spec, split.tr_in.ncols(), &cfg.ista, cfg.seed)?;
    codec.fit(split.tr_in.view(), split.tr_tg.view(), split.va_in.view(), split.va_tg.view(), &cfg.train)?;
    let out = codec.apply(split.va_in.view())?;
    let nmse = nmse_db_rows(split.va_tg.view(), out.view())?;
    Ok((codec, nmse))
}

pub(crate) fn kind_spec(kind: CodecKind, cr: f64) -> CodecSpec {
    CodecSpec { kind, cr, shared_planes: false }
}

/// Validation NMSE of a codec applied slot by slot without differencing.
pub fn single_shot_nmse(codec: &Codec, val: &ChainData) -> Result<Vec<f64>> {
    let (n_b, n_t) = val.truth.slots[0][0].shape();
    val.p2d
        .slots
        .iter()
        .zip(&val.truth.slots)
        .map(|(x, t)| {
            let v = vectorize_all(x)?;
            nmse_db(t, &devectorize_all(&codec.apply(v.view())?, n_b, n_t)?)
        })
        .collect()
}

/// Rows for one `(dr_f, D)` grid point, in grid order.
fn run_point(
    cfg: &ExperimentConfig,
    data: &Dataset,
    truth: &[Vec<ComplexMatrix>],
    dr_f: f64,
    d: usize,
) -> Result<Vec<MetricRow>> {
    let ch = &cfg.channel;
    let pattern = build_pattern(ch.n_f, cfg.m_f(dr_f)?, d)?;
    let estimator = build_estimator(&pattern, ch.n_t, cfg.delta)?;
    let row = |cr: f64, timeslot: usize, codec: String, nmse_db: f64, started: Instant| MetricRow {
        dr_f,
        d,
        cr,
        timeslot,
        codec,
        nmse_db,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let mut rows = Vec::new();
    let started = Instant::now();
    let est = estimates_of(data, &estimator, ch.noise_std, ch.seed)?;
    match cfg.mode {
        Mode::P2d => {
            let nmse = nmse_db(&pick(truth, data.val(), 0), &pick(&est, data.val(), 0))?;
            rows.push(row(1.0, 1, "p2d".into(), nmse, started));
        }
        Mode::Codec => {
            let split = Split::new(data, &est, truth, 0)?;
            for &cr in &cfg.cr {
                for &kind in &cfg.codecs {
                    let started = Instant::now();
                    let (_, nmse) = codec_nmse(cfg, &kind_spec(kind, cr), &split)?;
                    rows.push(row(cr, 1, kind.name().into(), nmse, started));
                }
            }
        }
        Mode::Phase => {
            for &n_phase in &cfg.n_phase {
                let aug = phase_augment(data, n_phase, cfg.seed)?;
                let aug_truth = truth_of(&aug, ch.n_t)?;
                let aug_est = estimates_of(&aug, &estimator, ch.noise_std, ch.seed)?;
                let split = Split::new(&aug, &aug_est, &aug_truth, 0)?;
                for &cr in &cfg.cr {
                    for &kind in &cfg.codecs {
                        let started = Instant::now();
                        let (_, nmse) = codec_nmse(cfg, &kind_spec(kind, cr), &split)?;
                        rows.push(row(cr, 1, format!("{}/n_phase={n_phase}", kind.name()), nmse, started));
                    }
                }
            }
        }
        Mode::Chain => {
            let n = cfg.timeslots;
            let train = ChainData { p2d: slots(&est, data.train(), n), truth: slots(truth, data.train(), n) };
            let val = ChainData { p2d: slots(&est, data.val(), n), truth: slots(truth, data.val(), n) };
            for &cr in &cfg.cr {
                for plan in &cfg.chains {
                    let started = Instant::now();
                    let ccfg = ChainConfig {
                        plan: diffchain::plan(plan.first, plan.rest, cfg.cr_t1, cr, n),
                        ista: cfg.ista.clone(),
                        train: cfg.train.clone(),
                    };
                    let (chain, _) = diffchain::chain_train(&train, &val, &ccfg, cfg.seed)?;
                    let out = chain.infer(&val.p2d)?;
                    for (t, slot) in out.iter().enumerate() {
                        let nmse = nmse_db(&val.truth.slots[t], slot)?;
                        rows.push(row(cr, t + 1, plan.name.clone(), nmse, started));
                    }
                }
                // non-differential reference: one codec per distinct rest kind
                let mut kinds: Vec<CodecKind> = Vec::new();
                for p in &cfg.chains {
                    if !kinds.contains(&p.rest) {
                        kinds.push(p.rest);
                    }
                }
                let split = Split::new(data, &est, truth, 0)?;
                for kind in kinds {
                    let started = Instant::now();
                    let (codec, _) = codec_nmse(cfg, &kind_spec(kind, cr), &split)?;
                    for (t, nmse) in single_shot_nmse(&codec, &val)?.into_iter().enumerate() {
                        rows.push(row(cr, t + 1, format!("{}-single", kind.name()), nmse, started));
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// The configured dataset file, or a freshly generated set.
pub fn load_or_generate(cfg: &ExperimentConfig) -> Result<Dataset> {
    let ch = &cfg.channel;
    let data = match &cfg.dataset {
        Some(p) => {
            let d = crate::channel::load(p)?;
            if d.matrix_shape() != (ch.n_b, ch.n_f) || d.n_timeslots() < cfg.sequence_len() {
                return Err(Error::Config(format!(
                    "{} holds {:?} matrices over {} slots; config needs {}x{} over {}",
                    p.display(),
                    d.matrix_shape(),
                    d.n_timeslots(),
                    ch.n_b,
                    ch.n_f,
                    cfg.sequence_len()
                )));
            }
            d
        }
        None => generate(ch, cfg.n_samples, cfg.sequence_len())?,
    };
    if data.val().is_empty() || data.train().is_empty() {
        return Err(Error::Config(format!(
            "the train/validation split of {} samples leaves one side empty",
            data.len()
        )));
    }
    Ok(data)
}

/// Rows for every grid point, merged in grid order.
pub fn sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    let data = load_or_generate(cfg)?;
    let truth = truth_of(&data, cfg.channel.n_t)?;
    let grid = cfg.grid()?;
    let job = || -> Result<Vec<Vec<MetricRow>>> {
        grid.par_iter()
            .map(|&(r, d)| {
                let rows = run_point(cfg, &data, &truth, r, d)?;
                log::info!("done dr_f={r} d={d} ({} rows)", rows.len());
                Ok(rows)
            })
            .collect()
    };
    let per_point = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(job)?
    } else {
        job()?
    };
    Ok(per_point.into_iter().flatten().collect())
}

/// Fails with an I/O error when `dir` cannot hold output files.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"")?;
    fs::remove_file(&probe)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    seeds: Seeds,
    rows: usize,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Seeds {
    master: u64,
    channel: u64,
    train: u64,
    ista: u64,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub rows: Vec<MetricRow>,
    pub csv: PathBuf,
    pub charts: Vec<PathBuf>,
}

/// Runs the sweep and writes the results CSV, one SVG per chart, a timings
/// CSV and a manifest into `cfg.output_dir`. Seeds must already be
/// resolved. The results CSV holds zero timings unless
/// `cfg.record_timing`, so identical configs give identical files.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    ensure_writable(&dir)?;
    let timed = sweep_rows(cfg)?;
    let rows: Vec<MetricRow> = if cfg.record_timing {
        timed.clone()
    } else {
        timed.iter().cloned().map(|r| MetricRow { wall_seconds: 0.0, ..r }).collect()
    };
    let csv = dir.join(RESULTS_CSV);
    write_csv(&rows, &csv)?;
    write_csv(&timed, dir.join(TIMINGS_CSV))?;
    let charts = write_charts(&rows, &dir)?;
    let mut files = vec![RESULTS_CSV.to_string(), TIMINGS_CSV.to_string()];
    files.extend(charts.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()));
    let manifest = SweepManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seeds: Seeds {
            master: cfg.seed,
            channel: cfg.channel.seed,
            train: cfg.train.seed,
            ista: cfg.ista.seed,
        },
        rows: rows.len(),
        files,
    };
    fs::write(dir.join(MANIFEST_JSON), serde_json::to_string_pretty(&manifest)?)?;
    Ok(SweepOutput { rows, csv, charts })
}
