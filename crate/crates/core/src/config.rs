//! Flat `key=value` configuration, presets, and the run manifest.
//!
//! Resolution order, later wins: built-in defaults, preset, file, flags.
//! Keys mirror the CLI flags. The manifest echoes every resolved key plus
//! derived quantities; resolving a manifest reproduces it.

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::channel::{max_doppler_bin, max_doppler_hz, DelayProfile};
use crate::ep::{EpConfig, GuardShape};
use crate::error::{Error, Result};
use crate::grid::GridParams;
use crate::harness::ExperimentConfig;
use crate::mrc::DetectorConfig;
use crate::tx::PilotConfig;

/// Every settable key, in manifest order.
pub const KEYS: &[&str] = &[
    "preset",
    "m",
    "n",
    "delta-f-khz",
    "fc-ghz",
    "speed-kmh",
    "profile",
    "l-zp",
    "snr-db",
    "frames",
    "seed",
    "scheme",
    "zc-root",
    "pilot-amplitude",
    "omp-max-taps",
    "omp-delta",
    "mrc-iterations",
    "mrc-tol",
    "warm-start",
    "ep-threshold",
    "ep-guard",
    "ep-pilot-delay",
    "ep-pilot-doppler",
    "out",
];

const DERIVED_KEYS: &[&str] = &[
    "derived.l-max",
    "derived.k-max",
    "derived.q",
    "derived.ts-us",
    "derived.nu-max-hz",
];

const RNG_NAME: &str = "ChaCha20 (rand_chacha), streams 0=channel 1=bits 2=noise";
const SEED_RULE: &str = "splitmix64(seed ^ splitmix64((snr_index << 32) | frame_index))";
const SNR_REFERENCE: &str = "per received sample, unit average transmit power, noise variance 10^(-snr/10)";

pub const PRESETS: &[&str] = &["desk", "paper-fig2", "paper-fig3"];

fn defaults() -> Vec<(&'static str, &'static str)> {
    vec![
        ("m", "32"),
        ("n", "32"),
        ("delta-f-khz", "15"),
        ("fc-ghz", "4"),
        ("speed-kmh", "500"),
        ("profile", "eva"),
        ("snr-db", "0,5,10,15,20"),
        ("frames", "200"),
        ("seed", "1"),
        ("scheme", "proposed"),
        ("zc-root", "1"),
        ("pilot-amplitude", "1"),
        ("omp-max-taps", "18"),
        ("omp-delta", "0.1"),
        ("mrc-iterations", "15"),
        ("mrc-tol", "0.000001"),
        ("warm-start", "false"),
        ("ep-threshold", "3"),
        ("ep-guard", "full-doppler"),
    ]
}

fn preset(name: &str) -> Result<Vec<(&'static str, &'static str)>> {
    let full = [
        ("delta-f-khz", "15"),
        ("fc-ghz", "4"),
        ("speed-kmh", "500"),
        ("m", "64"),
        ("n", "64"),
    ];
    match name {
        "desk" => Ok(vec![("m", "32"), ("n", "32"), ("frames", "200")]),
        "paper-fig2" => Ok([&full[..], &[("frames", "500"), ("snr-db", "0,5,10,15,20")]].concat()),
        "paper-fig3" => Ok([&full[..], &[("frames", "2000")]].concat()),
        _ => Err(Error::InvalidConfiguration(format!(
            "preset: unknown preset {name:?}, expected one of {}",
            PRESETS.join(", ")
        ))),
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfiguration(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Recovers the config text embedded as `# key=value` comments at the top
/// of a CSV produced by the harness.
pub fn manifest_text_from_csv(csv: &str) -> String {
    csv.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.strip_prefix("# "))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Resolved configuration echo plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    /// Resolved keys, derived quantities and metadata, in fixed order.
    pub entries: Vec<(String, String)>,
    /// Seconds since the Unix epoch when the config was resolved. Not part
    /// of [`RunManifest::comment_lines`], so CSV output stays reproducible.
    pub created_unix: u64,
}

impl RunManifest {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// `key=value` lines, loadable by [`resolve_config`].
    pub fn config_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// `# key=value` lines for the CSV header.
    pub fn comment_lines(&self) -> Vec<String> {
        self.entries.iter().map(|(k, v)| format!("# {k}={v}")).collect()
    }
}

struct Settings(Vec<(String, String)>);

impl Settings {
    fn set(&mut self, k: &str, v: &str) {
        match self.0.iter_mut().find(|(key, _)| key == k) {
            Some(e) => e.1 = v.to_string(),
            None => self.0.push((k.to_string(), v.to_string())),
        }
    }

    fn get(&self, k: &str) -> Option<&str> {
        self.0.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str())
    }

    fn req(&self, k: &str) -> Result<&str> {
        self.get(k)
            .ok_or_else(|| Error::InvalidConfiguration(format!("{k}: missing")))
    }

    fn parse<T: std::str::FromStr>(&self, k: &str, what: &str) -> Result<T> {
        let v = self.req(k)?;
        v.parse()
            .map_err(|_| Error::InvalidConfiguration(format!("{k}: expected {what}, got {v:?}")))
    }

    fn positive(&self, k: &str) -> Result<f64> {
        let v: f64 = self.parse(k, "a number")?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidConfiguration(format!("{k}: must be positive, got {v}")));
        }
        Ok(v)
    }
}

fn is_meta(k: &str) -> bool {
    DERIVED_KEYS.contains(&k) || matches!(k, "version" | "rng" | "seed-rule" | "snr-reference")
}

fn check_keys(entries: &[(String, String)], source: &str) -> Result<()> {
    for (k, _) in entries {
        if !KEYS.contains(&k.as_str()) && !is_meta(k) {
            return Err(Error::InvalidConfiguration(format!("{k}: unknown key in {source}")));
        }
    }
    Ok(())
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Resolves defaults, preset, file text and flag overrides into an
/// experiment config and its manifest.
pub fn resolve_config(file: Option<&str>, flags: &[(String, String)]) -> Result<(ExperimentConfig, RunManifest)> {
    let file_entries = match file {
        Some(text) => parse_config_text(text)?,
        None => Vec::new(),
    };
    check_keys(&file_entries, "config file")?;
    check_keys(flags, "flags")?;
    let lookup =
        |entries: &[(String, String)], k: &str| entries.iter().rev().find(|(key, _)| key == k).map(|(_, v)| v.clone());

    let mut s = Settings(Vec::new());
    for (k, v) in defaults() {
        s.set(k, v);
    }
    let preset_name = lookup(flags, "preset").or_else(|| lookup(&file_entries, "preset"));
    if let Some(name) = &preset_name {
        for (k, v) in preset(name)? {
            s.set(k, v);
        }
        s.set("preset", name);
    }
    for (k, v) in file_entries
        .iter()
        .chain(flags)
        .filter(|(k, _)| KEYS.contains(&k.as_str()) && k != "preset")
    {
        s.set(k, v);
    }

    let m: usize = s.parse("m", "a positive integer")?;
    let n: usize = s.parse("n", "a positive integer")?;
    let delta_f = s.positive("delta-f-khz")? * 1e3;
    let fc: f64 = s.parse("fc-ghz", "a number")?;
    if !(fc.is_finite() && fc >= 0.0) {
        return Err(Error::InvalidConfiguration(format!(
            "fc-ghz: must be non-negative, got {fc}"
        )));
    }
    let fc = fc * 1e9;
    let speed: f64 = s.parse("speed-kmh", "a number")?;
    if !(speed.is_finite() && speed >= 0.0) {
        return Err(Error::InvalidConfiguration(format!(
            "speed-kmh: must be non-negative, got {speed}"
        )));
    }
    let profile = match s.req("profile")? {
        "eva" => DelayProfile::eva(),
        path => DelayProfile::load(std::path::Path::new(path))?,
    };
    let l_max = profile.max_delay_bin(m, delta_f);
    let nu_max = max_doppler_hz(fc, speed);
    let k_max = max_doppler_bin(nu_max, n, delta_f);
    let l_zp = match s.get("l-zp") {
        Some(_) => s.parse("l-zp", "a positive integer")?,
        None => l_max + 1,
    };
    let grid = GridParams::with_zero_pad(m, n, delta_f, fc, l_max, k_max, l_zp)?;

    let snr_db = s
        .req("snr-db")?
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfiguration(format!("snr-db: expected numbers, got {t:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let guard = match s.req("ep-guard")? {
        "full-doppler" => GuardShape::FullDoppler,
        "compact" => GuardShape::Compact,
        g => {
            return Err(Error::InvalidConfiguration(format!(
                "ep-guard: expected full-doppler or compact, got {g:?}"
            )))
        }
    };
    let mut ep = EpConfig::for_grid(&grid);
    ep.guard = guard;
    ep.threshold_factor = s.parse("ep-threshold", "a number")?;
    if s.get("ep-pilot-delay").is_some() {
        ep.pilot_position.0 = s.parse("ep-pilot-delay", "a bin index")?;
    }
    if s.get("ep-pilot-doppler").is_some() {
        ep.pilot_position.1 = s.parse("ep-pilot-doppler", "a bin index")?;
    }
    let cfg = ExperimentConfig {
        grid,
        speed_kmh: speed,
        profile,
        snr_db,
        frames: s.parse("frames", "a positive integer")?,
        base_seed: s.parse("seed", "an unsigned 64-bit integer")?,
        scheme: s.req("scheme")?.parse()?,
        pilot: PilotConfig {
            root: s.parse("zc-root", "an integer")?,
            pilot_amplitude: s.positive("pilot-amplitude")?,
        },
        omp_max_taps: s.parse("omp-max-taps", "a positive integer")?,
        omp_delta: s.parse("omp-delta", "a number")?,
        detector: DetectorConfig {
            max_iterations: s.parse("mrc-iterations", "a positive integer")?,
            convergence_tol: s.parse("mrc-tol", "a number")?,
        },
        warm_start: s.parse("warm-start", "true or false")?,
        ep,
        out: s.get("out").map(PathBuf::from),
    };
    cfg.validate()?;
    if cfg.omp_max_taps == 0 {
        return Err(Error::InvalidConfiguration("omp-max-taps: must be at least 1".into()));
    }
    if cfg.detector.max_iterations == 0 {
        return Err(Error::InvalidConfiguration("mrc-iterations: must be at least 1".into()));
    }

    let mut entries: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| entries.push((k.to_string(), v));
    if let Some(p) = &preset_name {
        push("preset", p.clone());
    }
    push("m", m.to_string());
    push("n", n.to_string());
    push("delta-f-khz", (delta_f / 1e3).to_string());
    push("fc-ghz", (fc / 1e9).to_string());
    push("speed-kmh", speed.to_string());
    push("profile", s.req("profile")?.to_string());
    push("l-zp", l_zp.to_string());
    push("snr-db", fmt_list(&cfg.snr_db));
    push("frames", cfg.frames.to_string());
    push("seed", cfg.base_seed.to_string());
    push("scheme", cfg.scheme.to_string());
    push("zc-root", cfg.pilot.root.to_string());
    push("pilot-amplitude", cfg.pilot.pilot_amplitude.to_string());
    push("omp-max-taps", cfg.omp_max_taps.to_string());
    push("omp-delta", cfg.omp_delta.to_string());
    push("mrc-iterations", cfg.detector.max_iterations.to_string());
    push("mrc-tol", cfg.detector.convergence_tol.to_string());
    push("warm-start", cfg.warm_start.to_string());
    push("ep-threshold", cfg.ep.threshold_factor.to_string());
    push("ep-guard", s.req("ep-guard")?.to_string());
    push("ep-pilot-delay", cfg.ep.pilot_position.0.to_string());
    push("ep-pilot-doppler", cfg.ep.pilot_position.1.to_string());
    if let Some(o) = s.get("out") {
        push("out", o.to_string());
    }
    let derived = [
        ("derived.l-max", l_max.to_string()),
        ("derived.k-max", k_max.to_string()),
        ("derived.q", grid.q().to_string()),
        ("derived.ts-us", (grid.symbol_duration() * 1e6).to_string()),
        ("derived.nu-max-hz", nu_max.to_string()),
    ];
    for (k, v) in &derived {
        if let Some(given) = lookup(&file_entries, k) {
            if !same_value(&given, v) {
                return Err(Error::InvalidConfiguration(format!(
                    "{k}: file says {given}, recomputed {v}"
                )));
            }
        }
        push(k, v.clone());
    }
    push("version", env!("CARGO_PKG_VERSION").to_string());
    push("rng", RNG_NAME.to_string());
    push("seed-rule", SEED_RULE.to_string());
    push("snr-reference", SNR_REFERENCE.to_string());

    let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Ok((cfg, RunManifest { entries, created_unix }))
}

fn same_value(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => (x - y).abs() <= 1e-9 * x.abs().max(y.abs()),
        _ => a == b,
    }
}
