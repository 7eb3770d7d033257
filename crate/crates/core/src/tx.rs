//! Transmit frame construction: 4-QAM data in the upper `M - l_zp` delay
//! rows, a Zadoff-Chu pilot block in the bottom `l_zp` rows.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid_arg, Result};
use crate::grid::{idzt, DdFrame, GridParams, TimeVector};

/// Pilot sequence parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotConfig {
    /// Zadoff-Chu root; must be coprime with the sequence length.
    pub root: i64,
    /// Per-symbol pilot magnitude.
    pub pilot_amplitude: f64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            root: 1,
            pilot_amplitude: 1.0,
        }
    }
}

/// Information payload behind the data rows, one bit per byte (0 or 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataBits(Vec<u8>);

impl DataBits {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.len() % 2 != 0 {
            return Err(invalid_arg(format!(
                "4-QAM needs an even bit count, got {}",
                bits.len()
            )));
        }
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(invalid_arg(format!("bit {pos} is {}, not 0 or 1", bits[pos])));
        }
        Ok(DataBits(bits))
    }

    /// Uniformly random payload of `len` bits.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        DataBits((0..len).map(|_| rng.random_range(0..2u8)).collect())
    }

    /// Payload size the proposed frame carries: `2 (M - l_zp) N`.
    pub fn frame_len(p: &GridParams) -> usize {
        2 * p.data_rows() * p.n()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zadoff-Chu sequence of the given length and root.
///
/// Odd lengths use `exp(-j pi u n (n+1) / L)`, even lengths
/// `exp(-j pi u n^2 / L)`. The phase numerator is reduced modulo `2L` in
/// integer arithmetic so long sequences keep full precision.
pub fn zadoff_chu(length: usize, root: i64) -> Result<Vec<Complex64>> {
    if length == 0 {
        return Err(invalid_arg("Zadoff-Chu length must be at least 1"));
    }
    if gcd(root.unsigned_abs(), length as u64) != 1 {
        return Err(invalid_arg(format!(
            "Zadoff-Chu root {root} is not coprime with length {length}"
        )));
    }
    let len = length as i128;
    let modulus = 2 * len;
    let odd = length % 2 == 1;
    Ok((0..len)
        .map(|n| {
            let quad = if odd { n * (n + 1) } else { n * n };
            let num = ((root as i128 % modulus) * (quad % modulus)).rem_euclid(modulus);
            Complex64::from_polar(1.0, -PI * num as f64 / len as f64)
        })
        .collect())
}

/// Gray-mapped unit-power 4-QAM: `(b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`.
pub fn qam4_mod(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % 2 != 0 {
        return Err(invalid_arg(format!(
            "4-QAM needs an even bit count, got {}",
            bits.len()
        )));
    }
    Ok(bits
        .chunks_exact(2)
        .map(|b| {
            Complex64::new(
                (1.0 - 2.0 * b[0] as f64) * FRAC_1_SQRT_2,
                (1.0 - 2.0 * b[1] as f64) * FRAC_1_SQRT_2,
            )
        })
        .collect())
}

/// Nearest-point 4-QAM decision.
///
/// A component that is exactly zero maps to bit 0 (positive half-plane).
pub fn qam4_demod(symbols: &[Complex64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|s| [(s.re < 0.0) as u8, (s.im < 0.0) as u8])
        .collect()
}

/// Snaps a symbol to the nearest 4-QAM constellation point.
pub fn qam4_slice(s: Complex64) -> Complex64 {
    let a = |x: f64| if x < 0.0 { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    Complex64::new(a(s.re), a(s.im))
}

/// The transmit frame and its data and pilot parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TxFrame {
    pub x: DdFrame,
    pub x_d: DdFrame,
    pub x_p: DdFrame,
}

impl TxFrame {
    /// Time-domain signals `(s, s_d, s_p)`.
    pub fn time_signals(&self, p: &GridParams) -> Result<(TimeVector, TimeVector, TimeVector)> {
        Ok((idzt(&self.x, p)?, idzt(&self.x_d, p)?, idzt(&self.x_p, p)?))
    }
}

/// Pilot-only DD frame: the Zadoff-Chu block in the last `l_zp` rows,
/// filled column-major and scaled by the pilot amplitude.
pub fn pilot_frame(p: &GridParams, pc: &PilotConfig) -> Result<DdFrame> {
    if !(pc.pilot_amplitude.is_finite() && pc.pilot_amplitude > 0.0) {
        return Err(invalid_arg(format!(
            "pilot amplitude must be positive, got {}",
            pc.pilot_amplitude
        )));
    }
    let l_zp = p.l_zp();
    let first = p.data_rows();
    let zc = zadoff_chu(l_zp * p.n(), pc.root)?;
    let mut x_p = DdFrame::for_grid(p);
    for (idx, z) in zc.into_iter().enumerate() {
        x_p.set(first + idx % l_zp, idx / l_zp, z * pc.pilot_amplitude);
    }
    Ok(x_p)
}

/// Builds `X = X_d + X_p`. Data symbols fill rows `0..M-l_zp`
/// column-major.
pub fn assemble_frame(bits: &DataBits, p: &GridParams, pc: &PilotConfig) -> Result<TxFrame> {
    let want = DataBits::frame_len(p);
    if bits.len() != want {
        return Err(invalid_arg(format!(
            "frame carries {want} bits, payload has {}",
            bits.len()
        )));
    }
    let rows = p.data_rows();
    let symbols = qam4_mod(bits.as_slice())?;
    let mut x_d = DdFrame::for_grid(p);
    for (idx, s) in symbols.into_iter().enumerate() {
        x_d.set(idx % rows, idx / rows, s);
    }
    let x_p = pilot_frame(p, pc)?;
    let mut x = x_d.clone();
    for (dst, src) in x.as_mut_slice().iter_mut().zip(x_p.as_slice()) {
        *dst += src;
    }
    Ok(TxFrame { x, x_d, x_p })
}

/// Reads the data symbols of a DD frame back out in fill order.
pub fn extract_data_symbols(x: &DdFrame, p: &GridParams) -> Vec<Complex64> {
    let rows = p.data_rows();
    (0..rows * p.n()).map(|idx| x.get(idx % rows, idx / rows)).collect()
}

/// Pilot overhead of the proposed layout in DD bins: `(l_max + 1) N`.
pub fn overhead_proposed(p: &GridParams) -> usize {
    (p.l_max() + 1) * p.n()
}
