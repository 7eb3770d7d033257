//! Sparse delay-Doppler channel: tap indexing, EVA/Jakes generation,
//! time-domain application and AWGN.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid_arg, Error, Result};
use crate::grid::{check_len, GridParams, TimeVector};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.9979e8;

/// Default cap on `MN` for [`build_dense_h`].
pub const DENSE_CAP: usize = 4096;

/// One resolvable path on the integer DD grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelTap {
    pub l: usize,
    pub k: i64,
    pub gain: Complex64,
}

/// The length-Q channel vector `h`. Position `i - 1` holds the coefficient
/// of the tap at [`index_to_lk`]`(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(Vec<Complex64>);

impl ChannelVector {
    pub fn zeros(p: &GridParams) -> Self {
        ChannelVector(vec![Complex64::new(0.0, 0.0); p.q()])
    }

    pub fn from_vec(h: Vec<Complex64>, p: &GridParams) -> Result<Self> {
        if h.len() != p.q() {
            return Err(invalid_arg(format!(
                "channel vector needs Q = {} entries, got {}",
                p.q(),
                h.len()
            )));
        }
        Ok(ChannelVector(h))
    }

    /// Builds a channel from taps, summing taps that share a bin.
    pub fn from_taps(taps: &[ChannelTap], p: &GridParams) -> Result<Self> {
        let mut h = Self::zeros(p);
        for t in taps {
            let i = lk_to_index(t.l, t.k, p)?;
            h.0[i - 1] += t.gain;
        }
        Ok(h)
    }

    /// Unit tap at 1-based index `i`.
    pub fn unit(i: usize, p: &GridParams) -> Result<Self> {
        index_to_lk(i, p)?;
        let mut h = Self::zeros(p);
        h.0[i - 1] = Complex64::new(1.0, 0.0);
        Ok(h)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Number of nonzero coefficients.
    pub fn nonzeros(&self) -> usize {
        self.0.iter().filter(|v| v.norm_sqr() > 0.0).count()
    }

    /// Nonzero taps with their grid positions.
    pub fn taps(&self, p: &GridParams) -> Vec<ChannelTap> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, g)| g.norm_sqr() > 0.0)
            .map(|(j, &gain)| {
                let (l, k) = lk_unchecked(j, p);
                ChannelTap { l, k, gain }
            })
            .collect()
    }

    /// `self - other`.
    pub fn sub(&self, other: &ChannelVector) -> ChannelVector {
        ChannelVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

fn lk_unchecked(j: usize, p: &GridParams) -> (usize, i64) {
    let width = p.l_max() + 1;
    let l = j % width;
    let col = (j / width) as i64;
    let k_max = p.k_max() as i64;
    let k = if col <= k_max { col } else { col - (2 * k_max + 1) };
    (l, k)
}

/// Maps a 1-based channel-vector index to its (delay, Doppler) bin.
pub fn index_to_lk(i: usize, p: &GridParams) -> Result<(usize, i64)> {
    if i == 0 || i > p.q() {
        return Err(invalid_arg(format!("tap index {i} outside 1..={}", p.q())));
    }
    Ok(lk_unchecked(i - 1, p))
}

/// Inverse of [`index_to_lk`].
pub fn lk_to_index(l: usize, k: i64, p: &GridParams) -> Result<usize> {
    let k_max = p.k_max() as i64;
    if l > p.l_max() || k.abs() > k_max {
        return Err(invalid_arg(format!(
            "tap (l={l}, k={k}) outside l <= {}, |k| <= {}",
            p.l_max(),
            k_max
        )));
    }
    let col = if k >= 0 { k } else { k + 2 * k_max + 1 } as usize;
    Ok(col * (p.l_max() + 1) + l + 1)
}

/// A power-delay profile: per-path excess delay and relative power.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile {
    pub delays_ns: Vec<f64>,
    pub powers_db: Vec<f64>,
}

/// 3GPP Extended Vehicular A.
pub const EVA_DELAYS_NS: [f64; 9] = [0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0];
pub const EVA_POWERS_DB: [f64; 9] = [0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9];

impl DelayProfile {
    pub fn eva() -> Self {
        DelayProfile {
            delays_ns: EVA_DELAYS_NS.to_vec(),
            powers_db: EVA_POWERS_DB.to_vec(),
        }
    }

    /// Parses `delay_ns, power_db` lines. Blank lines and `#` comments are
    /// skipped; the separator may be a comma, semicolon, tab or spaces.
    pub fn parse(text: &str) -> Result<Self> {
        let mut delays_ns = Vec::new();
        let mut powers_db = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidConfiguration(format!("profile line {}: bad number {s:?}", lineno + 1)))
            };
            if fields.len() != 2 {
                return Err(Error::InvalidConfiguration(format!(
                    "profile line {}: expected `delay_ns, power_db`",
                    lineno + 1
                )));
            }
            let d = parse(fields[0])?;
            let pw = parse(fields[1])?;
            if !(d.is_finite() && d >= 0.0 && pw.is_finite()) {
                return Err(Error::InvalidConfiguration(format!(
                    "profile line {}: out of range",
                    lineno + 1
                )));
            }
            delays_ns.push(d);
            powers_db.push(pw);
        }
        if delays_ns.is_empty() {
            return Err(Error::InvalidConfiguration("profile has no paths".into()));
        }
        Ok(DelayProfile { delays_ns, powers_db })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Linear path powers normalized to unit sum.
    pub fn normalized_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.powers_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        lin.into_iter().map(|v| v / total).collect()
    }

    /// Integer delay bin of each path on an `M`-bin grid.
    pub fn delay_bins(&self, m: usize, delta_f: f64) -> Vec<usize> {
        self.delays_ns
            .iter()
            .map(|&d| round_half_up(d * 1e-9 * m as f64 * delta_f) as usize)
            .collect()
    }

    /// Largest delay bin on an `M`-bin grid.
    pub fn max_delay_bin(&self, m: usize, delta_f: f64) -> usize {
        self.delay_bins(m, delta_f).into_iter().max().unwrap_or(0)
    }
}

/// Round to nearest, ties toward +infinity.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Maximum Doppler shift `fc * v / c` for a speed in km/h.
pub fn max_doppler_hz(fc: f64, speed_kmh: f64) -> f64 {
    fc * (speed_kmh / 3.6) / SPEED_OF_LIGHT
}

/// Largest Doppler bin reachable at `nu_max` on an `N`-bin grid.
pub fn max_doppler_bin(nu_max: f64, n: usize, delta_f: f64) -> usize {
    round_half_up(nu_max * n as f64 / delta_f) as usize
}

/// Draws one block-fading realization: per path a circularly-symmetric
/// complex Gaussian gain with the path's normalized power, an integer delay
/// bin, and a Jakes Doppler bin `round(nu_max cos(theta) N / delta_f)` with
/// `theta` uniform on `[0, 2 pi)`. Paths that land on the same bin add.
pub fn generate_channel<R: Rng + ?Sized>(
    p: &GridParams,
    profile: &DelayProfile,
    speed_kmh: f64,
    rng: &mut R,
) -> Result<ChannelVector> {
    let l_bins = profile.delay_bins(p.m(), p.delta_f());
    let l_worst = l_bins.iter().copied().max().unwrap_or(0);
    if l_worst > p.l_max() {
        return Err(Error::InvalidConfiguration(format!(
            "profile reaches delay bin {l_worst}, grid allows l_max = {}",
            p.l_max()
        )));
    }
    let nu_max = max_doppler_hz(p.fc(), speed_kmh);
    let k_worst = max_doppler_bin(nu_max, p.n(), p.delta_f());
    if k_worst > p.k_max() {
        return Err(Error::InvalidConfiguration(format!(
            "max Doppler {nu_max:.1} Hz reaches bin {k_worst}, grid allows k_max = {}",
            p.k_max()
        )));
    }
    let scale = nu_max * p.n() as f64 / p.delta_f();
    let mut taps = Vec::with_capacity(l_bins.len());
    for (&l, power) in l_bins.iter().zip(profile.normalized_powers()) {
        let sd = (power / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let theta = rng.random::<f64>() * 2.0 * PI;
        let k = round_half_up(scale * theta.cos()) as i64;
        taps.push(ChannelTap {
            l,
            k,
            gain: Complex64::new(re * sd, im * sd),
        });
    }
    ChannelVector::from_taps(&taps, p)
}

/// [`generate_channel`] with the EVA profile.
pub fn generate_eva_jakes<R: Rng + ?Sized>(p: &GridParams, speed_kmh: f64, rng: &mut R) -> Result<ChannelVector> {
    generate_channel(p, &DelayProfile::eva(), speed_kmh, rng)
}

/// `z^j = exp(j 2 pi j / MN)` for `j = 0..MN`.
pub(crate) fn twiddles(mn: usize) -> Vec<Complex64> {
    (0..mn)
        .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / mn as f64))
        .collect()
}

/// Accumulates `gain * Pi^l Delta^k g` into `out`.
pub(crate) fn accumulate_tap(
    out: &mut [Complex64],
    g: &[Complex64],
    l: usize,
    k: i64,
    gain: Complex64,
    tw: &[Complex64],
) {
    let mn = g.len();
    let kk = k.rem_euclid(mn as i64) as usize;
    for (q, o) in out.iter_mut().enumerate() {
        let src = (q + mn - l % mn) % mn;
        *o += gain * tw[(kk * src) % mn] * g[src];
    }
}

/// `r = H s` with `H = sum_i h_i Pi^{l_i} Delta^{k_i}`, applied tap by tap.
///
/// `(Pi s)[q] = s[(q - 1) mod MN]` and `Delta = diag(z^0, ..., z^{MN-1})`.
pub fn apply_channel(s: &[Complex64], h: &ChannelVector, p: &GridParams) -> Result<TimeVector> {
    check_len(s, p)?;
    if h.len() != p.q() {
        return Err(invalid_arg(format!(
            "channel vector needs Q = {} entries, got {}",
            p.q(),
            h.len()
        )));
    }
    let tw = twiddles(p.frame_len());
    let mut out = vec![Complex64::new(0.0, 0.0); s.len()];
    for t in h.taps(p) {
        accumulate_tap(&mut out, s, t.l, t.k, t.gain, &tw);
    }
    Ok(TimeVector::new(out))
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Explicit `MN x MN` channel matrix, for cross-checking [`apply_channel`].
/// Fails when `MN` exceeds `cap`.
pub fn build_dense_h(h: &ChannelVector, p: &GridParams, cap: usize) -> Result<DenseMatrix> {
    let mn = p.frame_len();
    if mn > cap {
        return Err(Error::ResourceLimit(format!(
            "dense channel matrix with MN = {mn} exceeds cap {cap}"
        )));
    }
    let mut out = DenseMatrix::zeros(mn, mn);
    for t in h.taps(p) {
        // row q of Pi^l Delta^k has z^{k c} at column c = (q - l) mod MN
        for q in 0..mn {
            let c = (q + mn - t.l % mn) % mn;
            let phase = 2.0 * PI * (t.k as f64) * (c as f64) / mn as f64;
            out.data[q * mn + c] += t.gain * Complex64::from_polar(1.0, phase);
        }
    }
    Ok(out)
}

/// Adds circularly-symmetric complex Gaussian noise with per-sample variance
/// `10^(-snr_db / 10)` and returns it alongside the noisy signal. An SNR of
/// `+inf` adds nothing.
pub fn add_awgn<R: Rng + ?Sized>(r: &TimeVector, snr_db: f64, rng: &mut R) -> (TimeVector, f64) {
    if snr_db == f64::INFINITY {
        return (r.clone(), 0.0);
    }
    let var = 1.0 / 10f64.powf(snr_db / 10.0);
    let sd = (var / 2.0).sqrt();
    let out = r
        .iter()
        .map(|v| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            v + Complex64::new(re * sd, im * sd)
        })
        .collect();
    (TimeVector::new(out), var)
}
