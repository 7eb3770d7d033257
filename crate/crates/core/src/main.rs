use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zpotfs::channel::{max_doppler_bin, max_doppler_hz, DelayProfile};
use zpotfs::config::resolve_config;
use zpotfs::ep::{overhead_ep, GuardShape};
use zpotfs::grid::GridParams;
use zpotfs::harness::{ccdf, ccdf_level, run_experiment, summarize, workers_from_env, write_csv, Mode, WORKERS_ENV};
use zpotfs::tx::overhead_proposed;
use zpotfs::{Error, Result};

/// ZP-OTFS link simulator with Zadoff-Chu zero-pad pilots.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// BER versus SNR.
    Ber(RunArgs),
    /// Channel-estimate NMSE versus SNR.
    Nmse(RunArgs),
    /// Transmit PAPR distribution.
    Papr(RunArgs),
    /// Pilot overhead of the proposed and embedded-pilot frames.
    Overhead(OverheadArgs),
}

/// Run options. Every flag mirrors a config-file key of the same name.
#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// paper-fig2, paper-fig3 or desk.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    delta_f_khz: Option<String>,
    #[arg(long)]
    fc_ghz: Option<String>,
    #[arg(long)]
    speed_kmh: Option<String>,
    /// `eva` or a file of `delay_ns, power_db` lines.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    l_zp: Option<String>,
    /// Comma-separated list; `inf` means noiseless.
    #[arg(long)]
    snr_db: Option<String>,
    #[arg(long)]
    frames: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// proposed, ep or known-csi.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    zc_root: Option<String>,
    #[arg(long)]
    pilot_amplitude: Option<String>,
    #[arg(long)]
    omp_max_taps: Option<String>,
    #[arg(long)]
    omp_delta: Option<String>,
    #[arg(long)]
    mrc_iterations: Option<String>,
    #[arg(long)]
    mrc_tol: Option<String>,
    /// true or false.
    #[arg(long)]
    warm_start: Option<String>,
    #[arg(long)]
    ep_threshold: Option<String>,
    /// full-doppler or compact.
    #[arg(long)]
    ep_guard: Option<String>,
    #[arg(long)]
    ep_pilot_delay: Option<String>,
    #[arg(long)]
    ep_pilot_doppler: Option<String>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<String>,
}

impl RunArgs {
    fn flags(&self) -> Vec<(String, String)> {
        let pairs = [
            ("preset", &self.preset),
            ("m", &self.m),
            ("n", &self.n),
            ("delta-f-khz", &self.delta_f_khz),
            ("fc-ghz", &self.fc_ghz),
            ("speed-kmh", &self.speed_kmh),
            ("profile", &self.profile),
            ("l-zp", &self.l_zp),
            ("snr-db", &self.snr_db),
            ("frames", &self.frames),
            ("seed", &self.seed),
            ("scheme", &self.scheme),
            ("zc-root", &self.zc_root),
            ("pilot-amplitude", &self.pilot_amplitude),
            ("omp-max-taps", &self.omp_max_taps),
            ("omp-delta", &self.omp_delta),
            ("mrc-iterations", &self.mrc_iterations),
            ("mrc-tol", &self.mrc_tol),
            ("warm-start", &self.warm_start),
            ("ep-threshold", &self.ep_threshold),
            ("ep-guard", &self.ep_guard),
            ("ep-pilot-delay", &self.ep_pilot_delay),
            ("ep-pilot-doppler", &self.ep_pilot_doppler),
            ("out", &self.out),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

#[derive(Args)]
struct OverheadArgs {
    /// Comma-separated delay sizes.
    #[arg(long, default_value = "16,32,64,128")]
    m: String,
    /// Comma-separated Doppler sizes.
    #[arg(long, default_value = "16,32,64,128")]
    n: String,
    #[arg(long, default_value_t = 15.0)]
    delta_f_khz: f64,
    #[arg(long, default_value_t = 4.0)]
    fc_ghz: f64,
    #[arg(long, default_value_t = 500.0)]
    speed_kmh: f64,
    /// full-doppler or compact.
    #[arg(long, default_value = "full-doppler")]
    ep_guard: String,
}

fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(args: &RunArgs, mode: Mode, report: fn(&[zpotfs::harness::TrialOutcome])) -> Result<()> {
    let file = match &args.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(io_err(path))?),
        None => None,
    };
    let (cfg, manifest) = resolve_config(file.as_deref(), &args.flags())?;
    let workers = workers_from_env()?;
    eprintln!(
        "# created-unix={} workers={workers} ({WORKERS_ENV})",
        manifest.created_unix
    );
    let outcomes = run_experiment(&cfg, mode, workers)?;
    let lines = manifest.comment_lines();
    match &cfg.out {
        Some(path) => {
            let f = File::create(path).map_err(io_err(path))?;
            let mut w = BufWriter::new(f);
            write_csv(&mut w, &lines, &outcomes).map_err(io_err(path))?;
            w.flush().map_err(io_err(path))?;
        }
        None => {
            let stdout = std::io::stdout();
            write_csv(stdout.lock(), &lines, &outcomes).map_err(io_err(std::path::Path::new("<stdout>")))?;
        }
    }
    report(&outcomes);
    Ok(())
}

fn fmt_mean(m: &zpotfs::harness::RunningMean) -> String {
    m.mean().map_or_else(|| "-".into(), |v| format!("{v:.4e}"))
}

fn report_link(outcomes: &[zpotfs::harness::TrialOutcome]) {
    eprintln!("snr_db  nmse1       nmse2       ber1        ber2        failed");
    for s in summarize(outcomes) {
        eprintln!(
            "{:<7} {:<11} {:<11} {:<11} {:<11} {}",
            s.snr_db.map_or("-".into(), |v| v.to_string()),
            fmt_mean(&s.nmse1),
            fmt_mean(&s.nmse2),
            fmt_mean(&s.ber1),
            fmt_mean(&s.ber2),
            s.failures
        );
    }
}

fn report_papr(outcomes: &[zpotfs::harness::TrialOutcome]) {
    let values: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok())
        .map(|r| r.papr_db)
        .collect();
    let Ok(q) = ccdf_level(&values, 1e-2) else {
        eprintln!("no successful trials");
        return;
    };
    eprintln!("PAPR at CCDF 1e-2: {q:.2} dB over {} frames", values.len());
    let grid: Vec<f64> = (0..=24).map(|i| 4.0 + 0.5 * i as f64).collect();
    if let Ok(c) = ccdf(&values, &grid) {
        for (t, p) in c {
            eprintln!("{t:>5.1} dB  {p:.4}");
        }
    }
}

fn parse_sizes(flag: &str, s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::InvalidConfiguration(format!("{flag}: expected integers, got {t:?}")))
        })
        .collect()
}

fn overhead(args: &OverheadArgs) -> Result<()> {
    let guard = match args.ep_guard.as_str() {
        "full-doppler" => GuardShape::FullDoppler,
        "compact" => GuardShape::Compact,
        g => {
            return Err(Error::InvalidConfiguration(format!(
                "ep-guard: expected full-doppler or compact, got {g:?}"
            )))
        }
    };
    let df = args.delta_f_khz * 1e3;
    let fc = args.fc_ghz * 1e9;
    let nu = max_doppler_hz(fc, args.speed_kmh);
    let profile = DelayProfile::eva();
    println!("M,N,l_max,k_max,proposed,ep");
    for &m in &parse_sizes("m", &args.m)? {
        for &n in &parse_sizes("n", &args.n)? {
            let l_max = profile.max_delay_bin(m, df);
            let k_max = max_doppler_bin(nu, n, df);
            match GridParams::new(m, n, df, fc, l_max, k_max) {
                Ok(p) => println!(
                    "{m},{n},{l_max},{k_max},{},{}",
                    overhead_proposed(&p),
                    overhead_ep(&p, guard)
                ),
                Err(e) => eprintln!("skipping {m}x{n}: {e}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Command::Ber(a) | Command::Nmse(a) => run(a, Mode::Link, report_link),
        Command::Papr(a) => run(a, Mode::Papr, report_papr),
        Command::Overhead(a) => overhead(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
