//! Time-domain signal matrices: one column per DD tap, each a delayed and
//! Doppler-modulated copy of a generating signal, optionally restricted to
//! a subset of sample rows.

use num_complex::Complex64;

use crate::channel::{accumulate_tap, index_to_lk, twiddles};
use crate::error::{invalid_arg, Result};
use crate::grid::{check_len, GridParams};

/// A materialized `rows x Q` dictionary, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    row_index: Vec<usize>,
    q: usize,
    data: Vec<Complex64>,
}

/// Which sample rows to keep.
#[derive(Debug, Clone, PartialEq)]
pub enum RowSelection {
    All,
    Rows(Vec<usize>),
}

impl Dictionary {
    /// Builds a dictionary from explicit columns (each of equal length).
    pub fn from_columns(columns: &[Vec<Complex64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if rows == 0 {
            return Err(invalid_arg("dictionary needs at least one row and one column"));
        }
        if columns.iter().any(|c| c.len() != rows) {
            return Err(invalid_arg("dictionary columns differ in length"));
        }
        Ok(Dictionary {
            row_index: (0..rows).collect(),
            q: columns.len(),
            data: columns.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.row_index.len()
    }

    pub fn cols(&self) -> usize {
        self.q
    }

    /// Global sample index of each row.
    pub fn row_index(&self) -> &[usize] {
        &self.row_index
    }

    /// Column at 0-based position `j` (tap index `j + 1`).
    pub fn column(&self, j: usize) -> &[Complex64] {
        let r = self.rows();
        &self.data[j * r..(j + 1) * r]
    }

    /// `A h`.
    pub fn mul(&self, h: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows()];
        for (j, &c) in h.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.column(j)) {
                *o += a * c;
            }
        }
        out
    }
}

/// `Pi^l Delta^k g`: `column[q] = z^{k (q - l)} g[(q - l) mod MN]`.
pub fn psi_column(g: &[Complex64], l: usize, k: i64, p: &GridParams) -> Result<Vec<Complex64>> {
    check_len(g, p)?;
    if l > p.l_max() || k.unsigned_abs() as usize > p.k_max() {
        return Err(invalid_arg(format!("tap (l={l}, k={k}) outside the channel support")));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
    accumulate_tap(&mut out, g, l, k, Complex64::new(1.0, 0.0), &twiddles(g.len()));
    Ok(out)
}

/// Builds the dictionary for generating signal `g`, columns ordered by tap
/// index `1..=Q` and restricted to `rows`.
pub fn build_dictionary(g: &[Complex64], rows: &RowSelection, p: &GridParams) -> Result<Dictionary> {
    check_len(g, p)?;
    let mn = p.frame_len();
    let row_index: Vec<usize> = match rows {
        RowSelection::All => (0..mn).collect(),
        RowSelection::Rows(r) => {
            if r.is_empty() {
                return Err(invalid_arg("empty row selection"));
            }
            if let Some(bad) = r.iter().find(|&&i| i >= mn) {
                return Err(invalid_arg(format!("row {bad} outside 0..{mn}")));
            }
            r.clone()
        }
    };
    let tw = twiddles(mn);
    let q = p.q();
    let mut data = Vec::with_capacity(row_index.len() * q);
    for i in 1..=q {
        let (l, k) = index_to_lk(i, p)?;
        let kk = k.rem_euclid(mn as i64) as usize;
        data.extend(row_index.iter().map(|&row| {
            let src = (row + mn - l) % mn;
            tw[(kk * src) % mn] * g[src]
        }));
    }
    Ok(Dictionary { row_index, q, data })
}

/// The last sample of every sub-symbol, `{n M + M - 1}`: the rows that see
/// only pilot energy when `l_zp = l_max + 1`.
pub fn pilot_rows(p: &GridParams) -> Vec<usize> {
    (0..p.n()).map(|n| n * p.m() + p.m() - 1).collect()
}

/// Restricts a full-length vector to the given rows.
pub fn restrict(v: &[Complex64], rows: &[usize]) -> Vec<Complex64> {
    rows.iter().map(|&r| v[r]).collect()
}
