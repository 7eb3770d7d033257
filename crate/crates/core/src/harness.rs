//! Monte-Carlo experiment driver: metrics, per-trial seeding, a worker
//! pool, CSV output and aggregation.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::channel::{add_awgn, apply_channel, generate_channel, ChannelVector, DelayProfile};
use crate::ep::{ep_bits_len, ep_build_frame, ep_receive, EpConfig};
use crate::error::{invalid_arg, Error, Result};
use crate::grid::{dzt, idzt, GridParams};
use crate::mrc::DetectorConfig;
use crate::omp::OmpConfig;
use crate::twostep::{run_known_csi, run_receiver, ReceiverConfig};
use crate::tx::{assemble_frame, extract_data_symbols, qam4_demod, DataBits, PilotConfig};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "ZPOTFS_WORKERS";

/// Fixed CSV header.
pub const CSV_HEADER: &str = "seed,scheme,M,N,snr_db,nmse1,nmse2,ber1,ber2,papr_db,support1,support2";

/// `||h_hat - h||^2 / ||h||^2`.
pub fn nmse(h_hat: &ChannelVector, h: &ChannelVector) -> Result<f64> {
    if h_hat.len() != h.len() {
        return Err(invalid_arg("channel vectors differ in length"));
    }
    let e = h.norm_sqr();
    if e == 0.0 {
        return Err(invalid_arg("true channel is zero"));
    }
    Ok(h_hat.sub(h).norm_sqr() / e)
}

/// Peak-to-average power ratio in dB.
pub fn papr(s: &[Complex64]) -> Result<f64> {
    let powers = s.iter().map(|v| v.norm_sqr());
    let (peak, total) = powers.fold((0.0f64, 0.0), |(p, t), v| (p.max(v), t + v));
    if total == 0.0 {
        return Err(invalid_arg("signal is zero"));
    }
    Ok(10.0 * (peak * s.len() as f64 / total).log10())
}

/// `P(value > t)` for each threshold.
pub fn ccdf(values: &[f64], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(invalid_arg("no values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let at_or_below = sorted.partition_point(|&v| v <= t);
            (t, (sorted.len() - at_or_below) as f64 / n)
        })
        .collect())
}

/// Smallest observed value `v` with `P(value > v) <= prob`.
pub fn ccdf_level(values: &[f64], prob: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid_arg("no values"));
    }
    if !(0.0..1.0).contains(&prob) {
        return Err(invalid_arg(format!("probability {prob} outside [0, 1)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let above = (prob * sorted.len() as f64).floor() as usize;
    Ok(sorted[sorted.len() - 1 - above.min(sorted.len() - 1)])
}

pub fn bit_errors(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len())
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE5_E9B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(base ^ splitmix64((snr_index << 32) | frame_index))`.
pub fn trial_seed(base: u64, snr_index: usize, frame_index: usize) -> u64 {
    splitmix64(base ^ splitmix64(((snr_index as u64) << 32) | frame_index as u64))
}

/// Independent RNG streams of one trial.
fn trial_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_CHANNEL: u64 = 0;
const STREAM_BITS: u64 = 1;
const STREAM_NOISE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Proposed,
    Ep,
    KnownCsi,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Proposed => "proposed",
            Scheme::Ep => "ep",
            Scheme::KnownCsi => "known-csi",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Scheme::Proposed),
            "ep" => Ok(Scheme::Ep),
            "known-csi" => Ok(Scheme::KnownCsi),
            _ => Err(Error::InvalidConfiguration(format!(
                "scheme: expected proposed, ep or known-csi, got {s:?}"
            ))),
        }
    }
}

/// What each trial measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Channel, noise and receiver.
    Link,
    /// Transmit PAPR only.
    Papr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridParams,
    pub speed_kmh: f64,
    pub profile: DelayProfile,
    pub snr_db: Vec<f64>,
    pub frames: usize,
    pub base_seed: u64,
    pub scheme: Scheme,
    pub pilot: PilotConfig,
    pub omp_max_taps: usize,
    pub omp_delta: f64,
    pub detector: DetectorConfig,
    pub warm_start: bool,
    pub ep: EpConfig,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.frames == 0 {
            return Err(Error::InvalidConfiguration("frames: must be at least 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::InvalidConfiguration("snr-db: list is empty".into()));
        }
        if let Some(bad) = self.snr_db.iter().find(|v| v.is_nan() || **v == f64::NEG_INFINITY) {
            return Err(Error::InvalidConfiguration(format!("snr-db: invalid value {bad}")));
        }
        Ok(())
    }

    fn receiver(&self, noise_variance: f64) -> ReceiverConfig {
        let omp = OmpConfig {
            max_taps: self.omp_max_taps,
            residual_tol_factor: self.omp_delta,
            noise_variance,
        };
        ReceiverConfig {
            step1: omp.clone(),
            step2: omp,
            detector: self.detector.clone(),
            warm_start: self.warm_start,
        }
    }
}

/// One CSV row. Metrics absent for a mode are `None` and written blank.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub scheme: Scheme,
    pub m: usize,
    pub n: usize,
    pub snr_db: Option<f64>,
    pub nmse1: Option<f64>,
    pub nmse2: Option<f64>,
    pub ber1: Option<f64>,
    pub ber2: Option<f64>,
    pub papr_db: f64,
    pub support1: Option<usize>,
    pub support2: Option<usize>,
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

impl TrialRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.scheme,
            self.m,
            self.n,
            opt(&self.snr_db),
            opt(&self.nmse1),
            opt(&self.nmse2),
            opt(&self.ber1),
            opt(&self.ber2),
            self.papr_db,
            opt(&self.support1),
            opt(&self.support2)
        )
    }
}

/// A trial that errored.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub seed: u64,
    pub snr_db: Option<f64>,
    pub message: String,
}

pub type TrialOutcome = std::result::Result<TrialRecord, TrialFailure>;

fn ber(detected: &[u8], sent: &DataBits) -> f64 {
    bit_errors(detected, sent.as_slice()) as f64 / sent.len() as f64
}

/// Runs one trial.
pub fn run_trial(cfg: &ExperimentConfig, mode: Mode, snr_db: f64, seed: u64) -> Result<TrialRecord> {
    let p = &cfg.grid;
    let mut bits_rng = trial_rng(seed, STREAM_BITS);
    let mut rec = TrialRecord {
        seed,
        scheme: cfg.scheme,
        m: p.m(),
        n: p.n(),
        snr_db: None,
        nmse1: None,
        nmse2: None,
        ber1: None,
        ber2: None,
        papr_db: 0.0,
        support1: None,
        support2: None,
    };

    if cfg.scheme == Scheme::Ep {
        let bits = DataBits::random(ep_bits_len(p, &cfg.ep)?, &mut bits_rng);
        let frame = ep_build_frame(&bits, p, &cfg.ep)?;
        let s = idzt(&frame.x, p)?;
        rec.papr_db = papr(&s)?;
        if mode == Mode::Papr {
            return Ok(rec);
        }
        let h = generate_channel(p, &cfg.profile, cfg.speed_kmh, &mut trial_rng(seed, STREAM_CHANNEL))?;
        let (r, var) = add_awgn(&apply_channel(&s, &h, p)?, snr_db, &mut trial_rng(seed, STREAM_NOISE));
        let out = ep_receive(&dzt(&r, p)?, &frame, p, &cfg.ep, var, &cfg.detector)?;
        let e = nmse(&out.h_hat, &h)?;
        let b = ber(&qam4_demod(&out.symbols), &bits);
        let support = out.h_hat.nonzeros();
        rec.snr_db = Some(snr_db);
        (rec.nmse1, rec.nmse2, rec.ber1, rec.ber2) = (Some(e), Some(e), Some(b), Some(b));
        (rec.support1, rec.support2) = (Some(support), Some(support));
        return Ok(rec);
    }

    let bits = DataBits::random(DataBits::frame_len(p), &mut bits_rng);
    let frame = assemble_frame(&bits, p, &cfg.pilot)?;
    let (s, _, s_p) = frame.time_signals(p)?;
    rec.papr_db = papr(&s)?;
    if mode == Mode::Papr {
        return Ok(rec);
    }
    let h = generate_channel(p, &cfg.profile, cfg.speed_kmh, &mut trial_rng(seed, STREAM_CHANNEL))?;
    let (r, var) = add_awgn(&apply_channel(&s, &h, p)?, snr_db, &mut trial_rng(seed, STREAM_NOISE));
    rec.snr_db = Some(snr_db);
    let demod = |x| qam4_demod(&extract_data_symbols(x, p));
    match cfg.scheme {
        Scheme::KnownCsi => {
            let x = run_known_csi(&r, &s_p, &h, p, &cfg.detector)?;
            let b = ber(&demod(&x), &bits);
            (rec.nmse1, rec.nmse2, rec.ber1, rec.ber2) = (Some(0.0), Some(0.0), Some(b), Some(b));
            (rec.support1, rec.support2) = (Some(h.nonzeros()), Some(h.nonzeros()));
        }
        _ => {
            let out = run_receiver(&r, &s_p, p, &cfg.receiver(var))?;
            rec.nmse1 = Some(nmse(&out.h_hat_step1, &h)?);
            rec.nmse2 = Some(nmse(&out.h_hat_step2, &h)?);
            rec.ber1 = Some(ber(&demod(&out.x_dd_step1), &bits));
            rec.ber2 = Some(ber(&demod(&out.x_dd_final), &bits));
            rec.support1 = Some(out.step1.support_size);
            rec.support2 = Some(out.step2.support_size);
        }
    }
    Ok(rec)
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::InvalidConfiguration(format!(
                "{WORKERS_ENV}: expected a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs every (SNR, frame) trial on `workers` threads. Outcomes come back
/// in SNR-major, frame-minor order whatever the worker count. PAPR mode
/// runs one pass of `frames` trials and ignores the SNR list.
pub fn run_experiment(cfg: &ExperimentConfig, mode: Mode, workers: usize) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    if workers == 0 {
        return Err(invalid_arg("worker count must be at least 1"));
    }
    let snrs: Vec<f64> = match mode {
        Mode::Link => cfg.snr_db.clone(),
        Mode::Papr => vec![f64::INFINITY],
    };
    let jobs: Vec<(usize, usize)> = (0..snrs.len())
        .flat_map(|s| (0..cfg.frames).map(move |f| (s, f)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::ResourceLimit(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(si, fi)| {
                let seed = trial_seed(cfg.base_seed, si, fi);
                run_trial(cfg, mode, snrs[si], seed).map_err(|e| TrialFailure {
                    seed,
                    snr_db: (mode == Mode::Link).then_some(snrs[si]),
                    message: e.to_string(),
                })
            })
            .collect()
    }))
}

/// Writes manifest comments, the header, one row per trial and a comment
/// per failed trial.
pub fn write_csv<W: Write>(mut w: W, manifest_lines: &[String], outcomes: &[TrialOutcome]) -> std::io::Result<()> {
    for line in manifest_lines {
        writeln!(w, "{line}")?;
    }
    writeln!(w, "{CSV_HEADER}")?;
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok(r) => writeln!(w, "{}", r.csv_row())?,
            Err(f) => {
                failed += 1;
                writeln!(
                    w,
                    "# trial-error seed={} snr_db={} error={}",
                    f.seed,
                    opt(&f.snr_db),
                    f.message
                )?;
            }
        }
    }
    writeln!(w, "# failed-trials={failed}")?;
    Ok(())
}

/// Welford running mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMean {
    count: u64,
    mean: f64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.mean += (x - self.mean) / self.count as f64;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then_some(self.mean)
    }
}

/// Means at one SNR point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnrSummary {
    pub snr_db: Option<f64>,
    pub nmse1: RunningMean,
    pub nmse2: RunningMean,
    pub ber1: RunningMean,
    pub ber2: RunningMean,
    pub papr_db: RunningMean,
    pub failures: usize,
}

/// Per-SNR means over successful trials, in first-seen SNR order. Failed
/// trials are counted and excluded.
pub fn summarize(outcomes: &[TrialOutcome]) -> Vec<SnrSummary> {
    let mut out: Vec<SnrSummary> = Vec::new();
    for o in outcomes {
        let snr = match o {
            Ok(r) => r.snr_db,
            Err(f) => f.snr_db,
        };
        let idx = match out
            .iter()
            .position(|s| s.snr_db.map(f64::to_bits) == snr.map(f64::to_bits))
        {
            Some(i) => i,
            None => {
                out.push(SnrSummary {
                    snr_db: snr,
                    ..Default::default()
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        match o {
            Err(_) => s.failures += 1,
            Ok(r) => {
                for (acc, v) in [
                    (&mut s.nmse1, r.nmse1),
                    (&mut s.nmse2, r.nmse2),
                    (&mut s.ber1, r.ber1),
                    (&mut s.ber2, r.ber2),
                    (&mut s.papr_db, Some(r.papr_db)),
                ] {
                    if let Some(v) = v {
                        acc.push(v);
                    }
                }
            }
        }
    }
    out
}
