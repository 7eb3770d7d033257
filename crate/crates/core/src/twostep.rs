//! Two-step receiver: pilot-only OMP, pilot cancellation and MRC detection,
//! then a second OMP over all samples with the detected data as joint pilot.

use num_complex::Complex64;

use crate::channel::{apply_channel, ChannelVector};
use crate::dictionary::{build_dictionary, pilot_rows, restrict, RowSelection};
use crate::error::{invalid_arg, Result};
use crate::grid::{check_len, DdFrame, DtFrame, GridParams, TimeVector};
use crate::mrc::{mrc_detect, DetectorConfig, MrcOutput};
use crate::omp::{omp, omp_with_initial_support, OmpConfig, OmpResult};

/// A channel estimate with the OMP run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub h_hat: ChannelVector,
    pub omp: OmpResult,
}

impl Estimate {
    fn from_omp(res: OmpResult, p: &GridParams) -> Result<Self> {
        Ok(Estimate {
            h_hat: ChannelVector::from_vec(res.coefficients.clone(), p)?,
            omp: res,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverConfig {
    pub step1: OmpConfig,
    pub step2: OmpConfig,
    pub detector: DetectorConfig,
    /// Seed step 2 with the step-1 support.
    pub warm_start: bool,
}

impl ReceiverConfig {
    pub fn new(noise_variance: f64) -> Self {
        ReceiverConfig {
            step1: OmpConfig::new(noise_variance),
            step2: OmpConfig::new(noise_variance),
            detector: DetectorConfig::default(),
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub residual_norm: f64,
    pub support_size: usize,
}

impl From<&OmpResult> for StepDiagnostics {
    fn from(r: &OmpResult) -> Self {
        StepDiagnostics {
            residual_norm: r.residual_norm,
            support_size: r.support.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverOutput {
    pub h_hat_step1: ChannelVector,
    pub h_hat_step2: ChannelVector,
    /// Hard step-1 detection in delay-time.
    pub x_dt_step1: DtFrame,
    /// Hard step-1 detection in delay-Doppler.
    pub x_dd_step1: DdFrame,
    /// Final detection, pilot rows zero.
    pub x_dd_final: DdFrame,
    pub step1: StepDiagnostics,
    pub step2: StepDiagnostics,
}

/// First-step estimate from the pilot-only rows.
pub fn step1_estimate(r: &[Complex64], s_p: &[Complex64], p: &GridParams, cfg: &OmpConfig) -> Result<Estimate> {
    check_len(r, p)?;
    let rows = pilot_rows(p);
    let psi = build_dictionary(s_p, &RowSelection::Rows(rows.clone()), p)?;
    Estimate::from_omp(omp(&psi, &restrict(r, &rows), cfg)?, p)
}

/// `r - H(h_hat) s_p`.
pub fn cancel_pilot(r: &[Complex64], h_hat: &ChannelVector, s_p: &[Complex64], p: &GridParams) -> Result<TimeVector> {
    check_len(r, p)?;
    let echo = apply_channel(s_p, h_hat, p)?;
    Ok(r.iter().zip(echo.iter()).map(|(a, b)| a - b).collect::<Vec<_>>().into())
}

/// Second-step estimate over all rows with `s_p + s_d_hat` as generating
/// signal, optionally seeded with `initial` (0-based columns).
pub fn step2_estimate(
    r: &[Complex64],
    s_p: &[Complex64],
    s_d_hat: &[Complex64],
    p: &GridParams,
    cfg: &OmpConfig,
    initial: &[usize],
) -> Result<Estimate> {
    check_len(r, p)?;
    check_len(s_d_hat, p)?;
    check_len(s_p, p)?;
    let joint: Vec<Complex64> = s_p.iter().zip(s_d_hat).map(|(a, b)| a + b).collect();
    let psi = build_dictionary(&joint, &RowSelection::All, p)?;
    Estimate::from_omp(omp_with_initial_support(&psi, r, cfg, initial)?, p)
}

fn detect(
    r: &[Complex64],
    h: &ChannelVector,
    s_p: &[Complex64],
    p: &GridParams,
    cfg: &DetectorConfig,
) -> Result<MrcOutput> {
    let r_d = cancel_pilot(r, h, s_p, p).map_err(|e| e.at_stage("pilot cancellation"))?;
    mrc_detect(&r_d, h, p, cfg).map_err(|e| e.at_stage("detection"))
}

/// Runs both estimation steps and both detections.
pub fn run_receiver(
    r: &[Complex64],
    s_p: &[Complex64],
    p: &GridParams,
    cfg: &ReceiverConfig,
) -> Result<ReceiverOutput> {
    let est1 = step1_estimate(r, s_p, p, &cfg.step1).map_err(|e| e.at_stage("step-1 estimate"))?;
    let det1 = detect(r, &est1.h_hat, s_p, p, &cfg.detector).map_err(|e| e.at_stage("step 1"))?;
    let s_d_hat = det1.hard_dt.vectorize();
    let initial: &[usize] = if cfg.warm_start { &est1.omp.support } else { &[] };
    let est2 = step2_estimate(r, s_p, &s_d_hat, p, &cfg.step2, initial).map_err(|e| e.at_stage("step-2 estimate"))?;
    let det2 = detect(r, &est2.h_hat, s_p, p, &cfg.detector).map_err(|e| e.at_stage("step 2"))?;
    Ok(ReceiverOutput {
        step1: (&est1.omp).into(),
        step2: (&est2.omp).into(),
        h_hat_step1: est1.h_hat,
        h_hat_step2: est2.h_hat,
        x_dt_step1: det1.hard_dt,
        x_dd_step1: det1.hard_dd,
        x_dd_final: det2.hard_dd,
    })
}

/// Detection with the true channel in place of both estimates.
pub fn run_known_csi(
    r: &[Complex64],
    s_p: &[Complex64],
    h: &ChannelVector,
    p: &GridParams,
    cfg: &DetectorConfig,
) -> Result<DdFrame> {
    if h.len() != p.q() {
        return Err(invalid_arg(format!(
            "channel has {} taps, grid needs {}",
            h.len(),
            p.q()
        )));
    }
    Ok(detect(r, h, s_p, p, cfg)?.hard_dd)
}
