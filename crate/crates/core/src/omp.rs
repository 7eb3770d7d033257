//! Orthogonal matching pursuit.
//!
//! Atoms are selected by normalized correlation `|a_j^H r| / ||a_j||`. The
//! least-squares fit on the selected atoms is kept as an incremental QR
//! factorization (Gram-Schmidt with a second orthogonalization pass), so
//! each iteration costs one projection instead of a fresh solve.
//!
//! Iteration stops when any of these holds:
//! * `||r||^2 <= (1 + delta) * rows * noise_variance` (noise floor),
//! * `||r||^2 <= 1e-24 * ||y||^2` (numerically exact fit),
//! * `max_taps` atoms are selected,
//! * no remaining atom is linearly independent of the selection or
//!   correlated with the residual.
//!
//! An atom that lies in the span of the current selection has zero
//! correlation with the residual and is never added, so the selected
//! submatrix always has full column rank and the fit is the unique
//! (hence minimum-norm) least-squares solution.

use num_complex::Complex64;

use crate::dictionary::Dictionary;
use crate::error::{invalid_arg, Error, Result};

const EXACT_FIT_REL: f64 = 1e-24;
const DEPENDENT_REL: f64 = 1e-10;
const ORTHOGONAL_REL: f64 = 1e-13;

/// Default atom budget: twice the nine EVA paths.
pub const DEFAULT_MAX_TAPS: usize = 18;

#[derive(Debug, Clone, PartialEq)]
pub struct OmpConfig {
    pub max_taps: usize,
    /// `delta` in the noise-floor rule.
    pub residual_tol_factor: f64,
    /// Per-sample noise variance; zero disables the noise-floor rule.
    pub noise_variance: f64,
}

impl OmpConfig {
    pub fn new(noise_variance: f64) -> Self {
        OmpConfig {
            max_taps: DEFAULT_MAX_TAPS,
            residual_tol_factor: 0.1,
            noise_variance,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_taps == 0 {
            return Err(invalid_arg("max_taps must be at least 1"));
        }
        if !(self.residual_tol_factor >= 0.0) {
            return Err(invalid_arg("residual_tol_factor must be non-negative"));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(invalid_arg("noise_variance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// Length-Q coefficients, zero off the support.
    pub coefficients: Vec<Complex64>,
    /// Selected 0-based column positions, in selection order.
    pub support: Vec<usize>,
    /// Final `||y - A x||`.
    pub residual_norm: f64,
    /// `||r||` before the first and after each selection.
    pub residual_history: Vec<f64>,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Incremental thin QR of the selected columns.
struct Factorization {
    basis: Vec<Vec<Complex64>>,
    // r[k] holds column k of R (length k + 1)
    r: Vec<Vec<Complex64>>,
    qty: Vec<Complex64>,
}

impl Factorization {
    fn new() -> Self {
        Factorization {
            basis: Vec::new(),
            r: Vec::new(),
            qty: Vec::new(),
        }
    }

    /// Adds `a` to the basis; returns false if it is numerically dependent.
    fn push(&mut self, a: &[Complex64], y: &[Complex64]) -> bool {
        let a_norm = norm_sqr(a).sqrt();
        let mut v = a.to_vec();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.basis.len() + 1];
        for _ in 0..2 {
            for (i, q) in self.basis.iter().enumerate() {
                let c = dot(q, &v);
                coeffs[i] += c;
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let v_norm = norm_sqr(&v).sqrt();
        if v_norm <= DEPENDENT_REL * a_norm {
            return false;
        }
        for vi in v.iter_mut() {
            *vi /= v_norm;
        }
        *coeffs.last_mut().unwrap() = Complex64::new(v_norm, 0.0);
        self.qty.push(dot(&v, y));
        self.basis.push(v);
        self.r.push(coeffs);
        true
    }

    /// Back-substitution `R x = Q^H y`.
    fn solve(&self) -> Vec<Complex64> {
        let k = self.basis.len();
        let mut x = vec![Complex64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let mut acc = self.qty[i];
            for j in i + 1..k {
                acc -= self.r[j][i] * x[j];
            }
            x[i] = acc / self.r[i][i];
        }
        x
    }
}

/// Adds a column to the factorization and projects it out of the residual.
fn extend(fact: &mut Factorization, col: &[Complex64], y: &[Complex64], residual: &mut [Complex64]) -> bool {
    if !fact.push(col, y) {
        return false;
    }
    let qv = fact.basis.last().unwrap();
    let c = dot(qv, residual);
    for (ri, qi) in residual.iter_mut().zip(qv) {
        *ri -= c * qi;
    }
    true
}

/// Runs OMP on `y ~ A x`.
pub fn omp(a: &Dictionary, y: &[Complex64], cfg: &OmpConfig) -> Result<OmpResult> {
    omp_with_initial_support(a, y, cfg, &[])
}

/// OMP that seeds the selection with `initial` (0-based columns) before
/// greedy search. Seeds count toward `max_taps`; dependent or zero seeds
/// are skipped.
pub fn omp_with_initial_support(
    a: &Dictionary,
    y: &[Complex64],
    cfg: &OmpConfig,
    initial: &[usize],
) -> Result<OmpResult> {
    cfg.validate()?;
    let rows = a.rows();
    let q = a.cols();
    if y.len() != rows {
        return Err(invalid_arg(format!(
            "dictionary has {rows} rows, observation has {}",
            y.len()
        )));
    }
    if let Some(bad) = initial.iter().find(|&&j| j >= q) {
        return Err(invalid_arg(format!("initial support column {bad} outside 0..{q}")));
    }
    let col_norms: Vec<f64> = (0..q).map(|j| norm_sqr(a.column(j)).sqrt()).collect();
    if col_norms.iter().all(|&n| n == 0.0) {
        return Err(Error::DegenerateInput("all dictionary columns are zero".into()));
    }

    let budget = cfg.max_taps.min(rows).min(q);
    let y_energy = norm_sqr(y);
    let noise_floor = (1.0 + cfg.residual_tol_factor) * rows as f64 * cfg.noise_variance;
    let exact_floor = EXACT_FIT_REL * y_energy;
    let done = |res_energy: f64| res_energy <= noise_floor || res_energy <= exact_floor;

    let mut fact = Factorization::new();
    let mut support = Vec::new();
    // columns that may still be selected
    let mut available: Vec<bool> = col_norms.iter().map(|&n| n > 0.0).collect();
    let mut residual = y.to_vec();
    let mut history = vec![y_energy.sqrt()];
    let mut res_energy = y_energy;

    for &j in initial {
        if support.len() >= budget {
            break;
        }
        if !available[j] {
            continue;
        }
        available[j] = false;
        if extend(&mut fact, a.column(j), y, &mut residual) {
            support.push(j);
            res_energy = norm_sqr(&residual);
            history.push(res_energy.sqrt());
        }
    }

    while support.len() < budget && !done(res_energy) {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..q).filter(|&j| available[j]) {
            let corr = dot(a.column(j), &residual).norm() / col_norms[j];
            if best.is_none_or(|(_, b)| corr > b) {
                best = Some((j, corr));
            }
        }
        let Some((j, corr)) = best else { break };
        if corr <= ORTHOGONAL_REL * y_energy.sqrt() {
            break;
        }
        available[j] = false;
        if extend(&mut fact, a.column(j), y, &mut residual) {
            support.push(j);
            res_energy = norm_sqr(&residual);
            history.push(res_energy.sqrt());
        }
    }

    let x = fact.solve();
    let mut coefficients = vec![Complex64::new(0.0, 0.0); q];
    for (&j, v) in support.iter().zip(x) {
        coefficients[j] = v;
    }
    // recompute from the solution so the reported residual is exact
    let fit = a.mul(&coefficients);
    let residual_norm = y.iter().zip(&fit).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt();
    Ok(OmpResult {
        coefficients,
        support,
        residual_norm,
        residual_history: history,
    })
}
