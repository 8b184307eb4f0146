//! Batch driver behind the `ferrosim` binary.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::Parser;
use ferrosim::diagnostics::{dump_path, write_field_dump};
use ferrosim::{build_initial_state, check_energy_ledger, check_m_growth_rate, run, Recorder, Splitting, StepSink, Verdict};

use config::{parse_config, parse_splitting, Config, ConfigError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_STEP_FAILED: i32 = 2;
pub const EXIT_LEDGER_FAILED: i32 = 3;

/// Slack on the rate of the magnetization growth envelope.
const GROWTH_THETA: f64 = 0.5;

#[derive(Debug, Parser)]
#[command(name = "ferrosim", version, about = "Energy-stable two-phase ferrofluid simulator")]
pub struct Cli {
    /// Configuration file (`section.key = value` lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, overriding `output.out_dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Number of steps, overriding `stepping.n_steps`.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_parser = parse_splitting)]
    pub splitting: Option<Splitting>,
    /// Fail a step whose energy violation exceeds the tolerance.
    #[arg(long)]
    pub strict_energy: bool,
    /// Parse and validate, print the normalized configuration, and exit.
    #[arg(long)]
    pub check_only: bool,
    /// Allow writing into an existing output directory.
    #[arg(long)]
    pub force: bool,
}

fn load(cli: &Cli) -> Result<Config, String> {
    let text = fs::read_to_string(&cli.config).map_err(|e| format!("{}: {e}", cli.config.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| format!("{}: {e}", cli.config.display()))?;
    if let Some(dir) = &cli.out_dir {
        cfg.output.out_dir = dir.clone();
    }
    if let Some(n) = cli.steps {
        cfg.stepping.n_steps = n;
    }
    if let Some(s) = cli.splitting {
        cfg.stepping.splitting = s;
    }
    cfg.stepping.strict_energy |= cli.strict_energy;
    cfg.validate().map_err(|e: ConfigError| e.to_string())?;
    Ok(cfg)
}

/// Runs the driver and returns the process exit status.
pub fn main_with<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    if cli.check_only {
        print!("{}", cfg.normalize());
        return EXIT_OK;
    }
    simulate(&cfg, cli.force)
}

fn simulate(cfg: &Config, force: bool) -> i32 {
    let out = &cfg.output.out_dir;
    if out.exists() && !force {
        eprintln!("error: output directory {} exists (use --force to write into it)", out.display());
        return EXIT_INVALID;
    }
    let fields = out.join("fields");
    if let Err(e) = fs::create_dir_all(&fields).and_then(|_| fs::write(out.join("config.txt"), cfg.normalize())) {
        eprintln!("error: {}: {e}", out.display());
        return EXIT_INVALID;
    }
    let params = cfg.params;
    let grid = cfg.grid();
    let initial = match build_initial_state(&grid, &params, &cfg.initial) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: building initial state: {e}");
            return EXIT_STEP_FAILED;
        }
    };
    let recorder = Recorder::with_exponent(&initial, &params, cfg.output.norm_exponent)
        .timeseries(&out.join(&cfg.output.timeseries))
        .and_then(|r| r.field_dumps(&fields, cfg.output.dump_every, &initial));
    let mut recorder = match recorder {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let opts = cfg.step_options();
    let n = cfg.stepping.n_steps;
    let summary = {
        let sinks: &mut [&mut dyn StepSink<f64>] = &mut [&mut recorder];
        match run(&initial, &params, &opts, n, sinks) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_STEP_FAILED;
            }
        }
    };
    let every = cfg.output.dump_every;
    if every > 0 && n % every != 0 {
        let t = opts.h * n as f64;
        if let Err(e) = write_field_dump(&summary.state, &params, n, t, &dump_path(&fields, n)) {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    }
    let rows = &recorder.rows;
    let scale = rows.iter().map(|r| r.total.abs()).fold(1e-12, f64::max);
    let tol = opts.energy_rel_tol * scale;
    if let Verdict::Fail { step, excess, .. } = check_m_growth_rate(rows, &params, GROWTH_THETA) {
        eprintln!("warning: magnetization exceeds its growth envelope at step {step} by {excess:e}");
    }
    let last = rows.last().expect("initial row");
    println!(
        "{n} steps to t = {:.6e}: energy {:.10e} -> {:.10e}, max energy violation {:.3e}",
        last.time,
        rows[0].total,
        last.total,
        rows.iter().map(|r| r.energy_violation).fold(0.0, f64::max)
    );
    match check_energy_ledger(rows, tol) {
        Verdict::Pass => EXIT_OK,
        Verdict::Fail { step, excess, .. } => {
            eprintln!("error: energy ledger violated at step {step} by {excess:e}");
            EXIT_LEDGER_FAILED
        }
    }
}
