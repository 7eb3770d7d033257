//! Acceptance report: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use zpotfs::channel::{apply_channel, generate_eva_jakes, ChannelVector, DelayProfile};
use zpotfs::config::resolve_config;
use zpotfs::dictionary::{build_dictionary, pilot_rows, RowSelection};
use zpotfs::ep::{overhead_ep, EpConfig, GuardShape};
use zpotfs::grid::{dzt, idzt, DdFrame, GridParams};
use zpotfs::harness::{
    ccdf_level, run_experiment, workers_from_env, write_csv, ExperimentConfig, Mode, Scheme, TrialOutcome, TrialRecord,
};
use zpotfs::mrc::DetectorConfig;
use zpotfs::omp::OmpConfig;
use zpotfs::twostep::step1_estimate;
use zpotfs::tx::{assemble_frame, overhead_proposed, DataBits, PilotConfig};

type Matrix = Vec<Vec<Complex64>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cn(rng: &mut ChaCha20Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum()).collect())
        .collect()
}

fn matvec(a: &Matrix, x: &[Complex64]) -> Vec<Complex64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect())
        .collect()
}

fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// 1: `dzt(idzt(X)) = X` and `idzt(X) = (F_N^H kron I_M) vec(X)`.
fn transforms() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for m in [2, 4, 8, 16] {
        for n in [2, 4, 8, 16] {
            let p = GridParams::new(m, n, 15e3, 4e9, 0, 0).unwrap();
            let x = DdFrame::from_column_major(m, n, (0..m * n).map(|_| cn(&mut rng)).collect()).unwrap();
            let s = idzt(&x, &p).unwrap();
            worst = worst.max(max_err(dzt(&s, &p).unwrap().as_slice(), x.as_slice()));
            let f_h: Matrix = (0..n)
                .map(|a| {
                    (0..n)
                        .map(|b| Complex64::from_polar(1.0 / (n as f64).sqrt(), 2.0 * PI * (a * b) as f64 / n as f64))
                        .collect()
                })
                .collect();
            let kron: Matrix = (0..m * n)
                .map(|row| {
                    (0..m * n)
                        .map(|col| {
                            if row % m == col % m {
                                f_h[row / m][col / m]
                            } else {
                                c(0.0, 0.0)
                            }
                        })
                        .collect()
                })
                .collect();
            worst = worst.max(max_err(&s, &matvec(&kron, x.as_slice())));
        }
    }
    verdict(
        worst < 1e-12,
        format!("max abs error {worst:.2e} over M,N in {{2,4,8,16}} (limit 1e-12)"),
    )
}

/// 2: tap-wise channel vs explicit `sum h_i Pi^l Delta^k` and vs `Psi h`.
fn channel_equivalence() -> Verdict {
    let p = GridParams::new(8, 8, 15e3, 4e9, 2, 2).unwrap();
    let mn = 64;
    let mut pi = identity(mn);
    for (q, row) in pi.iter_mut().enumerate() {
        row.iter_mut().for_each(|v| *v = c(0.0, 0.0));
        row[(q + mn - 1) % mn] = c(1.0, 0.0);
    }
    let delta: Matrix = (0..mn)
        .map(|i| {
            (0..mn)
                .map(|j| {
                    if i == j {
                        Complex64::from_polar(1.0, 2.0 * PI * i as f64 / mn as f64)
                    } else {
                        c(0.0, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut pi_pow = vec![identity(mn)];
    for l in 1..=p.l_max() {
        pi_pow.push(matmul(&pi_pow[l - 1], &pi));
    }
    let delta_pow = |k: i64| -> Matrix {
        let base = if k >= 0 {
            delta.clone()
        } else {
            delta.iter().map(|r| r.iter().map(|v| v.conj()).collect()).collect()
        };
        (0..k.unsigned_abs()).fold(identity(mn), |acc, _| matmul(&acc, &base))
    };
    let mut atoms = Vec::new();
    for i in 1..=p.q() {
        let (l, k) = zpotfs::channel::index_to_lk(i, &p).unwrap();
        atoms.push(matmul(&pi_pow[l], &delta_pow(k)));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s: Vec<Complex64> = (0..mn).map(|_| cn(&mut rng)).collect();
        let h = ChannelVector::from_vec((0..p.q()).map(|_| cn(&mut rng)).collect(), &p).unwrap();
        let mut dense = vec![vec![c(0.0, 0.0); mn]; mn];
        for (a, g) in atoms.iter().zip(h.as_slice()) {
            for (dr, ar) in dense.iter_mut().zip(a) {
                for (d, v) in dr.iter_mut().zip(ar) {
                    *d += g * v;
                }
            }
        }
        let r = apply_channel(&s, &h, &p).unwrap();
        worst = worst.max(max_err(&r, &matvec(&dense, &s)));
        let psi = build_dictionary(&s, &RowSelection::All, &p).unwrap();
        worst = worst.max(max_err(&r, &psi.mul(h.as_slice())));
    }
    verdict(
        worst < 1e-10,
        format!("max abs error {worst:.2e} over 100 draws at M=N=8 (limit 1e-10)"),
    )
}

/// 3: data-only signal is silent on the pilot rows.
fn pilot_rows_clean() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let grids = [
        GridParams::new(32, 32, 15e3, 4e9, 1, 4).unwrap(),
        GridParams::new(16, 8, 15e3, 4e9, 3, 2).unwrap(),
    ];
    for t in 0..100 {
        let p = grids[t % 2];
        let bits = DataBits::random(DataBits::frame_len(&p), &mut rng);
        let f = assemble_frame(&bits, &p, &PilotConfig::default()).unwrap();
        let h = ChannelVector::from_vec((0..p.q()).map(|_| cn(&mut rng)).collect(), &p).unwrap();
        let r = apply_channel(&idzt(&f.x_d, &p).unwrap(), &h, &p).unwrap();
        for q in pilot_rows(&p) {
            worst = worst.max(r[q].norm());
        }
    }
    verdict(
        worst < 1e-12,
        format!("max |r_d| on pilot rows {worst:.2e} over 100 frames (limit 1e-12)"),
    )
}

/// 4: noiseless step-1 OMP recovers EVA channels exactly.
fn exact_recovery() -> Verdict {
    let p = GridParams::new(32, 32, 15e3, 4e9, 1, 4).unwrap();
    let s_p = idzt(&zpotfs::tx::pilot_frame(&p, &PilotConfig::default()).unwrap(), &p).unwrap();
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut rng = ChaCha20Rng::seed_from_u64(1000 + seed);
        let h = generate_eva_jakes(&p, 500.0, &mut rng).unwrap();
        let bits = DataBits::random(DataBits::frame_len(&p), &mut rng);
        let f = assemble_frame(&bits, &p, &PilotConfig::default()).unwrap();
        let r = apply_channel(&idzt(&f.x, &p).unwrap(), &h, &p).unwrap();
        let est = step1_estimate(&r, &s_p, &p, &OmpConfig::new(0.0)).unwrap();
        let truth: BTreeSet<usize> = (0..p.q()).filter(|&j| h.as_slice()[j].norm() > 0.0).collect();
        let found: BTreeSet<usize> = est.omp.support.iter().copied().collect();
        let e = est.h_hat.sub(&h).norm_sqr() / h.norm_sqr();
        worst = worst.max(e);
        if truth == found && e < 1e-10 {
            ok += 1;
        }
    }
    verdict(
        ok >= 99,
        format!("{ok}/100 exact (support and NMSE < 1e-10), worst NMSE {worst:.2e}"),
    )
}

fn desk_config(scheme: Scheme, frames: usize) -> ExperimentConfig {
    let grid = GridParams::new(32, 32, 15e3, 4e9, 1, 4).unwrap();
    ExperimentConfig {
        grid,
        speed_kmh: 500.0,
        profile: DelayProfile::eva(),
        snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
        frames,
        base_seed: 20_240_601,
        scheme,
        pilot: PilotConfig::default(),
        omp_max_taps: 18,
        omp_delta: 0.1,
        detector: DetectorConfig::default(),
        warm_start: false,
        ep: EpConfig::for_grid(&grid),
        out: None,
    }
}

struct SchemeRuns {
    /// Per SNR index, successful records.
    by_snr: Vec<Vec<TrialRecord>>,
    failures: Vec<usize>,
}

fn run_scheme(scheme: Scheme, frames: usize, workers: usize) -> SchemeRuns {
    let cfg = desk_config(scheme, frames);
    let out = run_experiment(&cfg, Mode::Link, workers).unwrap();
    let mut by_snr = vec![Vec::new(); cfg.snr_db.len()];
    let mut failures = vec![0; cfg.snr_db.len()];
    for (i, o) in out.into_iter().enumerate() {
        match o {
            Ok(r) => by_snr[i / frames].push(r),
            Err(_) => failures[i / frames] += 1,
        }
    }
    SchemeRuns { by_snr, failures }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Percentile bootstrap interval of the mean of `d`.
fn bootstrap_ci(d: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| mean((0..d.len()).map(|_| d[rng.random_range(0..d.len())])))
        .collect();
    means.sort_by(f64::total_cmp);
    (
        means[(0.025 * resamples as f64) as usize],
        means[(0.975 * resamples as f64) as usize - 1],
    )
}

const SNRS: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];

/// 5: step 2 beats step 1 at 10, 15, 20 dB, and NMSE decays with SNR.
fn step_ordering(prop: &SchemeRuns) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut prev = f64::INFINITY;
    for si in 2..5 {
        let recs = &prop.by_snr[si];
        let d: Vec<f64> = recs.iter().map(|r| r.nmse1.unwrap() - r.nmse2.unwrap()).collect();
        let (m1, m2) = (
            mean(recs.iter().map(|r| r.nmse1.unwrap())),
            mean(recs.iter().map(|r| r.nmse2.unwrap())),
        );
        let (lo, hi) = bootstrap_ci(&d, 2000, 55 + si as u64);
        pass &= m2 < m1 && lo > 0.0 && m2 < prev;
        prev = m2;
        parts.push(format!(
            "{} dB: step1 {m1:.3e} step2 {m2:.3e} diff CI [{lo:.2e}, {hi:.2e}] n={}",
            SNRS[si],
            recs.len()
        ));
    }
    verdict(pass, parts.join("; "))
}

/// 6: EP better at 0-5 dB, step 2 better at 15 dB and above.
fn ep_crossover(prop: &SchemeRuns, ep: &SchemeRuns) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for si in [0, 1, 3, 4] {
        let m2 = mean(prop.by_snr[si].iter().map(|r| r.nmse2.unwrap()));
        let me = mean(ep.by_snr[si].iter().map(|r| r.nmse1.unwrap()));
        let want_ep_better = SNRS[si] <= 5.0;
        pass &= if want_ep_better { m2 > me } else { m2 < me };
        parts.push(format!(
            "{} dB: step2 {m2:.3e} EP {me:.3e} (excluded {}/{})",
            SNRS[si], prop.failures[si], ep.failures[si]
        ));
    }
    verdict(pass, parts.join("; "))
}

/// 7: BER ordering at 15 dB.
fn ber_ordering(prop: &SchemeRuns, known: &SchemeRuns) -> Verdict {
    let si = 3;
    let bits_per_frame = 2 * 30 * 32;
    let b1 = mean(prop.by_snr[si].iter().map(|r| r.ber1.unwrap()));
    let b2 = mean(prop.by_snr[si].iter().map(|r| r.ber2.unwrap()));
    let bk = mean(known.by_snr[si].iter().map(|r| r.ber2.unwrap()));
    let bits = prop.by_snr[si].len() * bits_per_frame;
    let pass = bits >= 100_000 && bk <= b2 && b2 <= 2.0 * bk && b2 <= b1;
    verdict(
        pass,
        format!("15 dB over {bits} bits: known-CSI {bk:.3e}, step2 {b2:.3e}, step1 {b1:.3e}"),
    )
}

fn papr_values(m: usize, n: usize, scheme: Scheme, guard: GuardShape, workers: usize) -> Vec<f64> {
    let k_max = if n == 64 { 8 } else { 4 };
    let l_max = if m == 64 { 2 } else { 1 };
    let grid = GridParams::new(m, n, 15e3, 4e9, l_max, k_max).unwrap();
    let mut cfg = desk_config(scheme, 2000);
    cfg.grid = grid;
    cfg.ep = EpConfig {
        guard,
        ..EpConfig::for_grid(&grid)
    };
    run_experiment(&cfg, Mode::Papr, workers)
        .unwrap()
        .into_iter()
        .map(|o| o.unwrap().papr_db)
        .collect()
}

/// 8: PAPR at CCDF 1e-2.
fn papr(workers: usize) -> (Verdict, String) {
    let prop64 = papr_values(64, 64, Scheme::Proposed, GuardShape::FullDoppler, workers);
    let ep64 = papr_values(64, 64, Scheme::Ep, GuardShape::FullDoppler, workers);
    let ep64c = papr_values(64, 64, Scheme::Ep, GuardShape::Compact, workers);
    let prop32 = papr_values(32, 32, Scheme::Proposed, GuardShape::FullDoppler, workers);
    let q = |v: &[f64]| ccdf_level(v, 1e-2).unwrap();
    let (qp64, qe64, qe64c, qp32) = (q(&prop64), q(&ep64), q(&ep64c), q(&prop32));
    let gap = qe64 - qp64;
    let drift = (qp64 - qp32).abs();
    let pass = gap >= 3.0 && drift <= 1.5;
    let paired = prop64.iter().zip(&ep64).filter(|(p, e)| e > p).count() as f64 / prop64.len() as f64;
    let note = format!(
        "note: compact-guard EP at 64x64 {qe64c:.2} dB; paired frames with PAPR(EP) > PAPR(proposed): {:.1}%",
        100.0 * paired
    );
    (
        verdict(
            pass,
            format!(
                "2000 frames: proposed 64x64 {qp64:.2} dB, EP 64x64 {qe64:.2} dB (gap {gap:.2} dB, need >= 3); proposed 32x32 {qp32:.2} dB (change {drift:.2} dB, need <= 1.5)"
            ),
        ),
        note,
    )
}

/// 9: overhead formula and ordering.
fn overhead() -> Verdict {
    let mut formula_ok = true;
    let mut count = 0;
    for m in [16, 32, 64, 128] {
        for n in [16, 32, 64, 128] {
            let (cfg, _) = resolve_config(None, &[("m".into(), m.to_string()), ("n".into(), n.to_string())]).unwrap();
            let p = cfg.grid;
            formula_ok &= overhead_proposed(&p) == (p.l_max() + 1) * p.n();
            count += 1;
        }
    }
    let mut ordering_ok = true;
    let mut parts = Vec::new();
    for preset in ["paper-fig2", "paper-fig3"] {
        let (cfg, _) = resolve_config(None, &[("preset".into(), preset.into())]).unwrap();
        let p = cfg.grid;
        let (ours, ep) = (overhead_proposed(&p), overhead_ep(&p, cfg.ep.guard));
        ordering_ok &= ours < ep;
        parts.push(format!(
            "{preset} {}x{}: proposed {ours}, EP {ep} (compact layout {})",
            p.m(),
            p.n(),
            overhead_ep(&p, GuardShape::Compact)
        ));
    }
    verdict(
        formula_ok && ordering_ok,
        format!("formula holds on {count} grids: {formula_ok}; {}", parts.join("; ")),
    )
}

fn csv_bytes(outcomes: &[TrialOutcome], lines: &[String]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, lines, outcomes).unwrap();
    buf
}

/// 10: byte-identical CSV across runs and worker counts.
fn determinism() -> Verdict {
    let mut pass = true;
    let mut sizes = Vec::new();
    for scheme in ["proposed", "ep", "known-csi"] {
        let flags: Vec<(String, String)> = [("frames", "40"), ("snr-db", "5,15"), ("scheme", scheme), ("seed", "31")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let (cfg, manifest) = resolve_config(None, &flags).unwrap();
        let lines = manifest.comment_lines();
        let a = csv_bytes(&run_experiment(&cfg, Mode::Link, 1).unwrap(), &lines);
        let b = csv_bytes(&run_experiment(&cfg, Mode::Link, 1).unwrap(), &lines);
        let c4 = csv_bytes(&run_experiment(&cfg, Mode::Link, 4).unwrap(), &lines);
        pass &= a == b && a == c4;
        sizes.push(format!("{scheme} {} bytes", a.len()));
    }
    verdict(pass, format!("workers 1, 1, 4 identical: {}", sizes.join(", ")))
}

fn main() {
    let workers = workers_from_env().unwrap();
    let frames = 500;
    let prop = run_scheme(Scheme::Proposed, frames, workers);
    let ep = run_scheme(Scheme::Ep, frames, workers);
    let known = run_scheme(Scheme::KnownCsi, frames, workers);
    let (c8, note8) = papr(workers);
    let results = [
        ("transform correctness", transforms()),
        ("channel-model equivalence", channel_equivalence()),
        ("pilot-row interference freedom", pilot_rows_clean()),
        ("noiseless exact recovery", exact_recovery()),
        ("step ordering", step_ordering(&prop)),
        ("EP crossover trend", ep_crossover(&prop, &ep)),
        ("BER behavior", ber_ordering(&prop, &known)),
        ("PAPR", c8),
        ("overhead table", overhead()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        println!(
            "criterion {} ({name}): {} {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if i == 7 {
            println!("  {note8}");
        }
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
