//! Delay-time maximal-ratio-combining detector for zero-padded frames.
//!
//! With `l_zp = l_max + 1`, sub-symbol `n` of the pilot-cancelled signal
//! depends only on that sub-symbol's data, so each block of `M` samples is
//! an independent banded system `y = G d + noise` with
//! `G[m, m - l] = g[m, l]`. The detector sweeps the unknowns in ascending
//! order, each time combining the `l_max + 1` delay branches that observe
//! `d[m]` after cancelling every other branch's contribution. The sweeps are
//! coordinate descent on `||y - G d||^2`, so the block residual never
//! increases.
//!
//! Soft delay-time estimates are taken to the delay-Doppler domain, sliced
//! to 4-QAM, and mapped back to delay-time for reuse as joint pilot.

use num_complex::Complex64;

use crate::channel::{twiddles, ChannelVector};
use crate::error::{invalid_arg, Error, Result};
use crate::grid::{check_len, dd_to_dt, dt_to_dd, DdFrame, DtFrame, GridParams};
use crate::tx::qam4_slice;

/// Per-block branch gains `g[m, l] = sum_{i: l_i = l} h_i z^{k_i (nM + m - l)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGains {
    m: usize,
    width: usize,
    g: Vec<Complex64>,
}

impl BlockGains {
    pub fn get(&self, m: usize, l: usize) -> Complex64 {
        self.g[m * self.width + l]
    }

    /// Number of delay branches, `l_max + 1`.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.m
    }
}

/// Branch gains of sub-symbol `n` under channel `h_hat`.
pub fn block_gains(h_hat: &ChannelVector, n: usize, p: &GridParams) -> Result<BlockGains> {
    if n >= p.n() {
        return Err(invalid_arg(format!("block {n} outside 0..{}", p.n())));
    }
    Ok(gains_with(h_hat, n, p, &twiddles(p.frame_len())))
}

fn gains_with(h_hat: &ChannelVector, n: usize, p: &GridParams, tw: &[Complex64]) -> BlockGains {
    let (m, width, mn) = (p.m(), p.l_max() + 1, p.frame_len());
    let mut g = vec![Complex64::new(0.0, 0.0); m * width];
    for t in h_hat.taps(p) {
        let kk = t.k.rem_euclid(mn as i64) as usize;
        for row in 0..m {
            let src = (n * m + row + mn - t.l) % mn;
            g[row * width + t.l] += t.gain * tw[(kk * src) % mn];
        }
    }
    BlockGains { m, width, g }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub max_iterations: usize,
    /// Stop once `||d_new - d_old|| <= tol * ||d_new||`.
    pub convergence_tol: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            max_iterations: 15,
            convergence_tol: 1e-6,
        }
    }
}

/// Detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct MrcOutput {
    /// Soft delay-time estimate of the data (pilot rows zero).
    pub soft_dt: DtFrame,
    /// Hard 4-QAM decisions in the delay-Doppler domain (pilot rows zero).
    pub hard_dd: DdFrame,
    /// `hard_dd` mapped to delay-time: the detected data as transmitted.
    pub hard_dt: DtFrame,
    /// Sweeps run in each block.
    pub iterations: Vec<usize>,
    /// Per block, `||y - G d||` before the first sweep and after each one.
    pub residuals: Vec<Vec<f64>>,
}

/// Soft sweeps for one block; returns `(d, sweeps, residual history)`.
fn detect_block(
    y: &[Complex64],
    gains: &BlockGains,
    data_len: usize,
    cfg: &DetectorConfig,
    block: usize,
) -> Result<(Vec<Complex64>, usize, Vec<f64>)> {
    let (m, width) = (gains.rows(), gains.width());
    let energy: Vec<f64> = (0..data_len)
        .map(|j| {
            (0..width)
                .filter(|l| j + l < m)
                .map(|l| gains.get(j + l, l).norm_sqr())
                .sum()
        })
        .collect();
    if let Some(position) = energy.iter().position(|&e| e == 0.0) {
        return Err(Error::DetectorDegenerate { block, position });
    }
    let mut d = vec![Complex64::new(0.0, 0.0); data_len];
    let mut e = y.to_vec();
    let norm = |v: &[Complex64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let mut history = vec![norm(&e)];
    let mut sweeps = 0;
    while sweeps < cfg.max_iterations {
        sweeps += 1;
        let mut change = 0.0;
        for j in 0..data_len {
            let mut corr = Complex64::new(0.0, 0.0);
            for l in (0..width).filter(|l| j + l < m) {
                corr += gains.get(j + l, l).conj() * e[j + l];
            }
            let delta = corr / energy[j];
            d[j] += delta;
            for l in (0..width).filter(|l| j + l < m) {
                e[j + l] -= gains.get(j + l, l) * delta;
            }
            change += delta.norm_sqr();
        }
        history.push(norm(&e));
        if change.sqrt() <= cfg.convergence_tol * norm(&d) {
            break;
        }
    }
    Ok((d, sweeps, history))
}

/// Detects the data of a pilot-cancelled frame under channel `h_hat`.
pub fn mrc_detect(r_d: &[Complex64], h_hat: &ChannelVector, p: &GridParams, cfg: &DetectorConfig) -> Result<MrcOutput> {
    check_len(r_d, p)?;
    if cfg.max_iterations == 0 {
        return Err(invalid_arg("detector needs at least one iteration"));
    }
    let (m, data_rows) = (p.m(), p.data_rows());
    let tw = twiddles(p.frame_len());
    let mut soft_dt = DtFrame::for_grid(p);
    let mut iterations = Vec::with_capacity(p.n());
    let mut residuals = Vec::with_capacity(p.n());
    for n in 0..p.n() {
        let gains = gains_with(h_hat, n, p, &tw);
        let y = &r_d[n * m..(n + 1) * m];
        let (d, sweeps, hist) = detect_block(y, &gains, data_rows, cfg, n)?;
        for (row, v) in d.into_iter().enumerate() {
            soft_dt.set(row, n, v);
        }
        iterations.push(sweeps);
        residuals.push(hist);
    }
    let mut hard_dd = dt_to_dd(&soft_dt);
    for k in 0..p.n() {
        for l in 0..m {
            let v = if l < data_rows {
                qam4_slice(hard_dd.get(l, k))
            } else {
                Complex64::new(0.0, 0.0)
            };
            hard_dd.set(l, k, v);
        }
    }
    let hard_dt = dd_to_dt(&hard_dd);
    Ok(MrcOutput {
        soft_dt,
        hard_dd,
        hard_dt,
        iterations,
        residuals,
    })
}
