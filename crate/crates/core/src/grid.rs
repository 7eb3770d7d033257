//! Delay-Doppler grid geometry and the transforms between the three signal
//! domains.
//!
//! A frame lives in one of three representations:
//!
//! * [`DdFrame`]: the M x N delay-Doppler matrix `X` (row = delay bin `l`,
//!   column = Doppler bin `k`),
//! * [`DtFrame`]: the M x N delay-time matrix `X F_N^H` (column = sub-symbol
//!   `n`),
//! * [`TimeVector`]: the length-MN sample stream, the column-major
//!   vectorization of the delay-time matrix.
//!
//! The DFT along the Doppler axis is unitary, so every transform here
//! preserves energy.

use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid_arg, Error, Result};

/// Grid geometry and channel-spread bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    m: usize,
    n: usize,
    delta_f: f64,
    fc: f64,
    l_max: usize,
    k_max: usize,
    l_zp: usize,
}

impl GridParams {
    /// Builds a grid with the zero-pad depth set to `l_max + 1`.
    pub fn new(m: usize, n: usize, delta_f: f64, fc: f64, l_max: usize, k_max: usize) -> Result<Self> {
        Self::with_zero_pad(m, n, delta_f, fc, l_max, k_max, l_max + 1)
    }

    /// Builds a grid with an explicit zero-pad depth, which must still equal
    /// `l_max + 1`.
    pub fn with_zero_pad(
        m: usize,
        n: usize,
        delta_f: f64,
        fc: f64,
        l_max: usize,
        k_max: usize,
        l_zp: usize,
    ) -> Result<Self> {
        let p = GridParams {
            m,
            n,
            delta_f,
            fc,
            l_max,
            k_max,
            l_zp,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks every structural invariant, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidConfiguration(format!("{field}: {msg}")));
        if self.m < 2 {
            return bad("m", format!("need at least 2 delay bins, got {}", self.m));
        }
        if self.n < 2 {
            return bad("n", format!("need at least 2 Doppler bins, got {}", self.n));
        }
        if !(self.delta_f.is_finite() && self.delta_f > 0.0) {
            return bad(
                "delta_f",
                format!("subcarrier spacing must be positive, got {}", self.delta_f),
            );
        }
        if !(self.fc.is_finite() && self.fc >= 0.0) {
            return bad("fc", format!("carrier frequency must be non-negative, got {}", self.fc));
        }
        if self.l_zp != self.l_max + 1 {
            return bad(
                "l_zp",
                format!(
                    "zero-pad depth must be l_max + 1 = {}, got {}",
                    self.l_max + 1,
                    self.l_zp
                ),
            );
        }
        if self.l_zp >= self.m {
            return bad(
                "l_max",
                format!("zero-pad depth {} leaves no data rows in M = {}", self.l_zp, self.m),
            );
        }
        if 2 * self.k_max + 1 > self.n {
            return bad(
                "k_max",
                format!("2*k_max+1 = {} exceeds N = {}", 2 * self.k_max + 1, self.n),
            );
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Subcarrier spacing in Hz.
    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// Carrier frequency in Hz.
    pub fn fc(&self) -> f64 {
        self.fc
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Number of zero-pad (pilot) rows at the bottom of the delay axis.
    pub fn l_zp(&self) -> usize {
        self.l_zp
    }

    /// Sub-symbol duration `T_s = 1 / delta_f`.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Number of time samples per frame, `M * N`.
    pub fn frame_len(&self) -> usize {
        self.m * self.n
    }

    /// Length of the channel vector, `(l_max + 1)(2 k_max + 1)`.
    pub fn q(&self) -> usize {
        (self.l_max + 1) * (2 * self.k_max + 1)
    }

    /// Number of delay rows carrying data, `M - l_zp`.
    pub fn data_rows(&self) -> usize {
        self.m - self.l_zp
    }
}

macro_rules! matrix_frame {
    ($name:ident, $col:literal) => {
        impl $name {
            /// All-zero frame of the given shape.
            pub fn zeros(rows: usize, cols: usize) -> Self {
                $name {
                    rows,
                    cols,
                    data: vec![Complex64::new(0.0, 0.0); rows * cols],
                }
            }

            /// All-zero frame shaped for `p`.
            pub fn for_grid(p: &GridParams) -> Self {
                Self::zeros(p.m(), p.n())
            }

            /// Wraps column-major entries.
            pub fn from_column_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
                if data.len() != rows * cols {
                    return Err(invalid_arg(format!(
                        "expected {} entries for a {}x{} frame, got {}",
                        rows * cols,
                        rows,
                        cols,
                        data.len()
                    )));
                }
                Ok($name { rows, cols, data })
            }

            pub fn rows(&self) -> usize {
                self.rows
            }

            pub fn cols(&self) -> usize {
                self.cols
            }

            #[doc = concat!("Entry at (delay row, ", $col, ").")]
            pub fn get(&self, row: usize, col: usize) -> Complex64 {
                self.data[row + col * self.rows]
            }

            pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
                self.data[row + col * self.rows] = v;
            }

            /// Column-major view of the entries.
            pub fn as_slice(&self) -> &[Complex64] {
                &self.data
            }

            pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
                &mut self.data
            }

            pub fn into_vec(self) -> Vec<Complex64> {
                self.data
            }

            pub fn frobenius_norm_sqr(&self) -> f64 {
                self.data.iter().map(|v| v.norm_sqr()).sum()
            }

            /// Errors unless the frame is `M x N` for `p`.
            pub fn check_shape(&self, p: &GridParams) -> Result<()> {
                if self.rows != p.m() || self.cols != p.n() {
                    return Err(invalid_arg(format!(
                        "frame is {}x{}, grid is {}x{}",
                        self.rows,
                        self.cols,
                        p.m(),
                        p.n()
                    )));
                }
                Ok(())
            }
        }
    };
}

/// Delay-Doppler frame (`X`, `X_d`, `X_p`, `Y`, ...), stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DdFrame {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

/// Delay-time frame (`X F_N^H`, received `Y~`, ...), stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DtFrame {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

matrix_frame!(DdFrame, "Doppler column");
matrix_frame!(DtFrame, "time column");

impl DtFrame {
    /// Column-major stacking, which is exactly the transmitted sample order.
    pub fn vectorize(&self) -> TimeVector {
        TimeVector::new(self.data.clone())
    }

    /// Inverse of [`DtFrame::vectorize`].
    pub fn unvectorize(s: &TimeVector, p: &GridParams) -> Result<Self> {
        check_len(s, p)?;
        DtFrame::from_column_major(p.m(), p.n(), s.to_vec())
    }
}

/// A length-MN time-domain sample vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeVector(Vec<Complex64>);

impl TimeVector {
    pub fn new(samples: Vec<Complex64>) -> Self {
        TimeVector(samples)
    }

    pub fn zeros(len: usize) -> Self {
        TimeVector(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Element-wise sum.
    pub fn add(&self, other: &TimeVector) -> Result<TimeVector> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Element-wise difference.
    pub fn sub(&self, other: &TimeVector) -> Result<TimeVector> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &TimeVector, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<TimeVector> {
        if self.len() != other.len() {
            return Err(invalid_arg(format!(
                "length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(TimeVector(
            self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }
}

impl Deref for TimeVector {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl DerefMut for TimeVector {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }
}

impl From<Vec<Complex64>> for TimeVector {
    fn from(v: Vec<Complex64>) -> Self {
        TimeVector(v)
    }
}

pub(crate) fn check_len(s: &[Complex64], p: &GridParams) -> Result<()> {
    if s.len() != p.frame_len() {
        return Err(invalid_arg(format!(
            "expected {} samples (M*N), got {}",
            p.frame_len(),
            s.len()
        )));
    }
    Ok(())
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

/// Applies the unitary N-point DFT (or its inverse) along every row of a
/// column-major M x N buffer, in place.
fn row_dft(data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    let fft = plan(cols, inverse);
    let scale = 1.0 / (cols as f64).sqrt();
    let mut row = vec![Complex64::new(0.0, 0.0); cols];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for r in 0..rows {
        for (c, v) in row.iter_mut().enumerate() {
            *v = data[r + c * rows];
        }
        fft.process_with_scratch(&mut row, &mut scratch);
        for (c, v) in row.iter().enumerate() {
            data[r + c * rows] = v * scale;
        }
    }
}

/// Delay-Doppler to delay-time: `X F_N^H`.
pub fn dd_to_dt(x: &DdFrame) -> DtFrame {
    let mut data = x.data.clone();
    row_dft(&mut data, x.rows, x.cols, true);
    DtFrame {
        rows: x.rows,
        cols: x.cols,
        data,
    }
}

/// Delay-time to delay-Doppler: `X~ F_N`.
pub fn dt_to_dd(x: &DtFrame) -> DdFrame {
    let mut data = x.data.clone();
    row_dft(&mut data, x.rows, x.cols, false);
    DdFrame {
        rows: x.rows,
        cols: x.cols,
        data,
    }
}

/// Inverse discrete Zak transform, `vec(X F_N^H)`.
pub fn idzt(x: &DdFrame, p: &GridParams) -> Result<TimeVector> {
    x.check_shape(p)?;
    Ok(dd_to_dt(x).vectorize())
}

/// Discrete Zak transform, `unvec(r) F_N`; the exact inverse of [`idzt`].
pub fn dzt(r: &TimeVector, p: &GridParams) -> Result<DdFrame> {
    let dt = DtFrame::unvectorize(r, p)?;
    Ok(dt_to_dd(&dt))
}

/// Prepends the last `cp_len` samples.
pub fn add_cp(s: &[Complex64], cp_len: usize) -> Result<Vec<Complex64>> {
    if cp_len > s.len() {
        return Err(invalid_arg(format!(
            "cyclic prefix of {cp_len} exceeds frame length {}",
            s.len()
        )));
    }
    let mut out = Vec::with_capacity(s.len() + cp_len);
    out.extend_from_slice(&s[s.len() - cp_len..]);
    out.extend_from_slice(s);
    Ok(out)
}

/// Drops the first `cp_len` samples of a received block of length `MN + cp_len`.
pub fn remove_cp(x: &[Complex64], cp_len: usize, p: &GridParams) -> Result<TimeVector> {
    if x.len() != p.frame_len() + cp_len {
        return Err(invalid_arg(format!(
            "expected {} samples (MN + cp), got {}",
            p.frame_len() + cp_len,
            x.len()
        )));
    }
    Ok(TimeVector::new(x[cp_len..].to_vec()))
}
