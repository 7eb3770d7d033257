//! Embedded-pilot baseline: one delay-Doppler impulse pilot surrounded by
//! zero guard bins, threshold channel estimation in the delay-Doppler
//! domain, and a delay-Doppler Gauss-Seidel detector.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::channel::{ChannelTap, ChannelVector};
use crate::error::{invalid_arg, Error, Result};
use crate::grid::{DdFrame, GridParams};
use crate::mrc::DetectorConfig;
use crate::tx::{qam4_mod, qam4_slice, DataBits};

/// Extent of the guard along the Doppler axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardShape {
    /// Guard rows span every Doppler bin: `(2 l_max + 1) N` bins.
    FullDoppler,
    /// `(2 l_max + 1) x (4 k_max + 1)` rectangle around the pilot.
    Compact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpConfig {
    /// `(l_p, k_p)`.
    pub pilot_position: (usize, usize),
    /// Detection threshold in noise standard deviations.
    pub threshold_factor: f64,
    pub guard: GuardShape,
}

impl EpConfig {
    /// Pilot at `(0, N / 2)`, threshold `3 sigma`, full-Doppler guard.
    pub fn for_grid(p: &GridParams) -> Self {
        EpConfig {
            pilot_position: (0, p.n() / 2),
            threshold_factor: 3.0,
            guard: GuardShape::FullDoppler,
        }
    }

    fn validate(&self, p: &GridParams) -> Result<()> {
        let (lp, kp) = self.pilot_position;
        if lp >= p.m() || kp >= p.n() {
            return Err(Error::InvalidConfiguration(format!(
                "pilot position ({lp}, {kp}) outside the {}x{} grid",
                p.m(),
                p.n()
            )));
        }
        if 2 * p.l_max() + 1 >= p.m() {
            return Err(Error::InvalidConfiguration(format!(
                "guard needs {} delay rows but M = {}",
                2 * p.l_max() + 1,
                p.m()
            )));
        }
        if self.guard == GuardShape::Compact && 4 * p.k_max() + 1 > p.n() {
            return Err(Error::InvalidConfiguration(format!(
                "guard needs {} Doppler bins but N = {}",
                4 * p.k_max() + 1,
                p.n()
            )));
        }
        if !(self.threshold_factor >= 0.0) {
            return Err(Error::InvalidConfiguration(
                "threshold_factor must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn is_guard(&self, l: usize, k: usize, p: &GridParams) -> bool {
        let (lp, kp) = self.pilot_position;
        let dl = circ_dist(l, lp, p.m());
        let dk = circ_dist(k, kp, p.n());
        dl <= p.l_max() && (self.guard == GuardShape::FullDoppler || dk <= 2 * p.k_max())
    }
}

fn circ_dist(a: usize, b: usize, n: usize) -> usize {
    let d = (a + n - b) % n;
    d.min(n - d)
}

/// Nominal pilot amplitude `sqrt((4 k_max + 1)(2 l_max + 1))`.
pub fn ep_pilot_amplitude(p: &GridParams) -> f64 {
    (((4 * p.k_max() + 1) * (2 * p.l_max() + 1)) as f64).sqrt()
}

/// Pilot plus guard bins.
pub fn overhead_ep(p: &GridParams, guard: GuardShape) -> usize {
    match guard {
        GuardShape::FullDoppler => (2 * p.l_max() + 1) * p.n(),
        GuardShape::Compact => (2 * p.l_max() + 1) * (4 * p.k_max() + 1),
    }
}

/// Data bins in column-major order.
pub fn ep_data_positions(p: &GridParams, cfg: &EpConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate(p)?;
    Ok((0..p.n())
        .flat_map(|k| (0..p.m()).map(move |l| (l, k)))
        .filter(|&(l, k)| !cfg.is_guard(l, k, p))
        .collect())
}

/// Bits carried by one frame.
pub fn ep_bits_len(p: &GridParams, cfg: &EpConfig) -> Result<usize> {
    Ok(2 * ep_data_positions(p, cfg)?.len())
}

/// Frame scale that brings the average bin power to one.
fn frame_scale(p: &GridParams, data_bins: usize) -> f64 {
    let a = ep_pilot_amplitude(p);
    ((p.frame_len() as f64) / (a * a + data_bins as f64)).sqrt()
}

/// Pilot amplitude after power normalization.
pub fn ep_effective_pilot_amplitude(p: &GridParams, cfg: &EpConfig) -> Result<f64> {
    let data = ep_data_positions(p, cfg)?.len();
    Ok(ep_pilot_amplitude(p) * frame_scale(p, data))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpFrame {
    pub x: DdFrame,
    /// Pilot-only part of `x`.
    pub x_p: DdFrame,
    pub data_positions: Vec<(usize, usize)>,
    /// Common scale applied to pilot and data.
    pub scale: f64,
}

pub fn ep_build_frame(bits: &DataBits, p: &GridParams, cfg: &EpConfig) -> Result<EpFrame> {
    let data_positions = ep_data_positions(p, cfg)?;
    if bits.len() != 2 * data_positions.len() {
        return Err(invalid_arg(format!(
            "frame carries {} bits, got {}",
            2 * data_positions.len(),
            bits.len()
        )));
    }
    let scale = frame_scale(p, data_positions.len());
    let mut x_p = DdFrame::for_grid(p);
    let (lp, kp) = cfg.pilot_position;
    x_p.set(lp, kp, Complex64::new(ep_pilot_amplitude(p) * scale, 0.0));
    let mut x = x_p.clone();
    for (&(l, k), s) in data_positions.iter().zip(qam4_mod(bits.as_slice())?) {
        x.set(l, k, s * scale);
    }
    Ok(EpFrame {
        x,
        x_p,
        data_positions,
        scale,
    })
}

/// Phase of tap `(l, k)` carrying input bin `(m_in, c_in)` to its output bin.
fn dd_phase(l: usize, k: i64, m_in: usize, c_out: usize, p: &GridParams) -> Complex64 {
    let (m, n) = (p.m() as f64, p.n() as f64);
    let mut theta = 2.0 * PI * (k as f64) * (m_in as f64) / (m * n);
    if m_in + l >= p.m() {
        theta -= 2.0 * PI * (c_out as f64) / n;
    }
    Complex64::from_polar(1.0, theta)
}

/// Output bin and coefficient of every tap for input bin `(m_in, c_in)`.
fn bin_response(taps: &[ChannelTap], m_in: usize, c_in: usize, p: &GridParams) -> Vec<(usize, Complex64)> {
    taps.iter()
        .map(|t| {
            let m_out = (m_in + t.l) % p.m();
            let c_out = (c_in as i64 + t.k).rem_euclid(p.n() as i64) as usize;
            (c_out * p.m() + m_out, t.gain * dd_phase(t.l, t.k, m_in, c_out, p))
        })
        .collect()
}

/// Delay-Doppler input-output relation, equal to `dzt(H idzt(x))`.
pub fn dd_channel(x: &DdFrame, h: &ChannelVector, p: &GridParams) -> Result<DdFrame> {
    x.check_shape(p)?;
    let taps = h.taps(p);
    let mut y = DdFrame::for_grid(p);
    let out = y.as_mut_slice();
    for c in 0..p.n() {
        for m in 0..p.m() {
            let v = x.get(m, c);
            if v.norm_sqr() == 0.0 {
                continue;
            }
            for (o, g) in bin_response(&taps, m, c, p) {
                out[o] += g * v;
            }
        }
    }
    Ok(y)
}

/// Threshold estimate from the `(l_max + 1) x (2 k_max + 1)` window that
/// follows the pilot.
pub fn ep_estimate(y: &DdFrame, p: &GridParams, cfg: &EpConfig, noise_variance: f64) -> Result<ChannelVector> {
    if !(noise_variance >= 0.0) {
        return Err(invalid_arg("noise variance must be non-negative"));
    }
    y.check_shape(p)?;
    let amp = ep_effective_pilot_amplitude(p, cfg)?;
    let threshold = cfg.threshold_factor * noise_variance.sqrt();
    let (lp, kp) = cfg.pilot_position;
    let km = p.k_max() as i64;
    let mut taps = Vec::new();
    for l in 0..=p.l_max() {
        for k in -km..=km {
            let m_out = (lp + l) % p.m();
            let c_out = (kp as i64 + k).rem_euclid(p.n() as i64) as usize;
            let v = y.get(m_out, c_out);
            if v.norm() > threshold && v.norm() > 0.0 {
                taps.push(ChannelTap {
                    l,
                    k,
                    gain: v / (amp * dd_phase(l, k, lp, c_out, p)),
                });
            }
        }
    }
    ChannelVector::from_taps(&taps, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpOutput {
    pub h_hat: ChannelVector,
    /// Sliced 4-QAM decisions at the data bins, zero elsewhere.
    pub x_hat: DdFrame,
    /// Decisions in data-bin order.
    pub symbols: Vec<Complex64>,
}

/// Gauss-Seidel detection of the data bins of `y_d` (pilot removed) under
/// channel `h`, then 4-QAM slicing.
pub fn ep_detect(
    y_d: &DdFrame,
    h: &ChannelVector,
    frame: &EpFrame,
    p: &GridParams,
    cfg: &DetectorConfig,
) -> Result<(DdFrame, Vec<Complex64>)> {
    if cfg.max_iterations == 0 {
        return Err(invalid_arg("detector needs at least one iteration"));
    }
    let taps = h.taps(p);
    let cols: Vec<Vec<(usize, Complex64)>> = frame
        .data_positions
        .iter()
        .map(|&(l, k)| bin_response(&taps, l, k, p))
        .collect();
    let energy: Vec<f64> = cols.iter().map(|c| c.iter().map(|(_, g)| g.norm_sqr()).sum()).collect();
    if let Some(pos) = energy.iter().position(|&e| e == 0.0) {
        let (l, k) = frame.data_positions[pos];
        return Err(Error::DetectorDegenerate { block: k, position: l });
    }
    let mut e = y_d.as_slice().to_vec();
    let mut u = vec![Complex64::new(0.0, 0.0); cols.len()];
    for _ in 0..cfg.max_iterations {
        let mut change = 0.0;
        for (j, col) in cols.iter().enumerate() {
            let corr: Complex64 = col.iter().map(|&(o, g)| g.conj() * e[o]).sum();
            let delta = corr / energy[j];
            u[j] += delta;
            for &(o, g) in col {
                e[o] -= g * delta;
            }
            change += delta.norm_sqr();
        }
        let norm: f64 = u.iter().map(|v| v.norm_sqr()).sum();
        if change.sqrt() <= cfg.convergence_tol * norm.sqrt() {
            break;
        }
    }
    let symbols: Vec<Complex64> = u.iter().map(|&v| qam4_slice(v)).collect();
    let mut x_hat = DdFrame::for_grid(p);
    for (&(l, k), &s) in frame.data_positions.iter().zip(&symbols) {
        x_hat.set(l, k, s);
    }
    Ok((x_hat, symbols))
}

/// Estimates the channel from the received delay-Doppler frame, removes
/// the pilot and detects the data.
pub fn ep_receive(
    y: &DdFrame,
    frame: &EpFrame,
    p: &GridParams,
    cfg: &EpConfig,
    noise_variance: f64,
    det: &DetectorConfig,
) -> Result<EpOutput> {
    let h_hat = ep_estimate(y, p, cfg, noise_variance).map_err(|e| e.at_stage("EP estimate"))?;
    let echo = dd_channel(&frame.x_p, &h_hat, p)?;
    let mut y_d = y.clone();
    for (a, b) in y_d.as_mut_slice().iter_mut().zip(echo.as_slice()) {
        *a -= b;
    }
    let (x_hat, symbols) = ep_detect(&y_d, &h_hat, frame, p, det).map_err(|e| e.at_stage("EP detection"))?;
    Ok(EpOutput { h_hat, x_hat, symbols })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, generate_eva_jakes, lk_to_index};
    use crate::grid::{dzt, idzt};
    use crate::tx::qam4_demod;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn grid(m: usize, n: usize, l: usize, k: usize) -> GridParams {
        GridParams::new(m, n, 15e3, 4e9, l, k).unwrap()
    }

    #[test]
    fn pilot_amplitude_values() {
        assert!((ep_pilot_amplitude(&grid(16, 16, 2, 2)) - 45f64.sqrt()).abs() < 1e-12);
        assert!((ep_pilot_amplitude(&grid(16, 16, 2, 2)) - 6.7082).abs() < 1e-4);
        assert_eq!(ep_pilot_amplitude(&grid(4, 4, 0, 0)), 1.0);
        assert!((ep_pilot_amplitude(&grid(64, 64, 2, 8)) - 12.845).abs() < 1e-3);
    }

    #[test]
    fn overhead_counts() {
        assert_eq!(overhead_ep(&grid(16, 16, 2, 2), GuardShape::Compact), 45);
        assert_eq!(overhead_ep(&grid(4, 4, 0, 0), GuardShape::Compact), 1);
        assert_eq!(overhead_ep(&grid(16, 16, 2, 2), GuardShape::FullDoppler), 80);
        let o: Vec<usize> = (0..4)
            .map(|k| overhead_ep(&grid(16, 32, 1, k), GuardShape::Compact))
            .collect();
        assert!(o.windows(2).all(|w| w[1] - w[0] == 12));
    }

    #[test]
    fn frame_structure() {
        for guard in [GuardShape::Compact, GuardShape::FullDoppler] {
            let p = grid(32, 32, 1, 4);
            let cfg = EpConfig {
                guard,
                ..EpConfig::for_grid(&p)
            };
            let mut rng = ChaCha20Rng::seed_from_u64(1);
            let bits = DataBits::random(ep_bits_len(&p, &cfg).unwrap(), &mut rng);
            let f = ep_build_frame(&bits, &p, &cfg).unwrap();
            let mut nonzero_guard = 0;
            let mut guard_bins = 0;
            for k in 0..32 {
                for l in 0..32 {
                    if cfg.is_guard(l, k, &p) {
                        guard_bins += 1;
                        if f.x.get(l, k).norm() > 0.0 {
                            nonzero_guard += 1;
                        }
                    }
                }
            }
            assert_eq!(nonzero_guard, 1);
            assert_eq!(guard_bins, overhead_ep(&p, guard));
            assert_eq!(f.data_positions.len() + guard_bins, p.frame_len());
            let power = f.x.frobenius_norm_sqr() / p.frame_len() as f64;
            assert!((power - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn guard_must_fit() {
        let p = grid(8, 8, 1, 2);
        let compact = EpConfig {
            guard: GuardShape::Compact,
            ..EpConfig::for_grid(&p)
        };
        assert!(matches!(
            ep_data_positions(&p, &compact),
            Err(Error::InvalidConfiguration(_))
        ));
        assert!(ep_data_positions(&p, &EpConfig::for_grid(&p)).is_ok());
        let p = grid(3, 8, 1, 0);
        assert!(ep_data_positions(&p, &EpConfig::for_grid(&p)).is_err());
    }

    #[test]
    fn dd_relation_matches_time_domain() {
        let p = grid(8, 8, 2, 2);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut draw = || Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        let x = DdFrame::from_column_major(8, 8, (0..64).map(|_| draw()).collect()).unwrap();
        let h = ChannelVector::from_vec((0..p.q()).map(|_| draw()).collect(), &p).unwrap();
        let want = dzt(&apply_channel(&idzt(&x, &p).unwrap(), &h, &p).unwrap(), &p).unwrap();
        let got = dd_channel(&x, &h, &p).unwrap();
        for (a, b) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_tap_recovered() {
        let p = grid(16, 16, 1, 2);
        let cfg = EpConfig::for_grid(&p);
        let f = ep_build_frame(
            &DataBits::random(ep_bits_len(&p, &cfg).unwrap(), &mut ChaCha20Rng::seed_from_u64(3)),
            &p,
            &cfg,
        )
        .unwrap();
        let mut h = ChannelVector::zeros(&p);
        h.as_mut_slice()[lk_to_index(1, 0, &p).unwrap() - 1] = Complex64::new(0.7, 0.0);
        let y = dzt(&apply_channel(&idzt(&f.x, &p).unwrap(), &h, &p).unwrap(), &p).unwrap();
        let est = ep_estimate(&y, &p, &cfg, 1e-6).unwrap();
        assert!(est.sub(&h).norm_sqr() < 1e-20);
    }

    #[test]
    fn noiseless_eva_exact_and_error_free() {
        let p = grid(32, 32, 1, 4);
        let cfg = EpConfig::for_grid(&p);
        for seed in 0..3 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let h = generate_eva_jakes(&p, 500.0, &mut rng).unwrap();
            let bits = DataBits::random(ep_bits_len(&p, &cfg).unwrap(), &mut rng);
            let f = ep_build_frame(&bits, &p, &cfg).unwrap();
            let y = dzt(&apply_channel(&idzt(&f.x, &p).unwrap(), &h, &p).unwrap(), &p).unwrap();
            let det = DetectorConfig {
                max_iterations: 60,
                convergence_tol: 1e-9,
            };
            let out = ep_receive(&y, &f, &p, &cfg, 0.0, &det).unwrap();
            assert!(out.h_hat.sub(&h).norm_sqr() / h.norm_sqr() < 1e-20);
            assert_eq!(qam4_demod(&out.symbols), bits.as_slice());
        }
    }

    #[test]
    fn zero_inputs_give_zero_estimate() {
        let p = grid(16, 16, 1, 2);
        let est = ep_estimate(&DdFrame::for_grid(&p), &p, &EpConfig::for_grid(&p), 0.0).unwrap();
        assert_eq!(est.nonzeros(), 0);
    }

    #[test]
    fn false_alarm_rate_matches_rayleigh_tail() {
        // |w| > 3 sigma for CN(0, sigma^2) has probability exp(-9)
        let p = grid(16, 16, 1, 2);
        let cfg = EpConfig::for_grid(&p);
        let window = (p.l_max() + 1) * (2 * p.k_max() + 1);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let var = 0.01;
        let trials = 10_000;
        let mut hits = 0;
        for _ in 0..trials {
            let data: Vec<Complex64> = (0..p.frame_len())
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im) * (var / 2.0f64).sqrt()
                })
                .collect();
            let y = DdFrame::from_column_major(16, 16, data).unwrap();
            hits += ep_estimate(&y, &p, &cfg, var).unwrap().nonzeros();
        }
        let expected = (trials * window) as f64 * (-9.0f64).exp();
        let ratio = hits as f64 / expected;
        assert!(ratio > 1.0 / 3.0 && ratio < 3.0, "{hits} vs {expected}");
    }
}
