//! `mdiqkd` scenario runner. Every subcommand writes one CSV per output
//! series plus `manifest.txt` (the resolved configuration) into `--out`.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mdiqkd::config::{ConfigFile, RunConfig};
use mdiqkd::decoy::{build_gain_table, DecoyBounds, GainTable};
use mdiqkd::keyrate::{asymptotic_rate, rate_from_table, KeyRateReport, RateMode};
use mdiqkd::optimize::optimize_intensities;
use mdiqkd::output::{Cell, Table};
use mdiqkd::scenario::{run_preset, Preset, Series};
use mdiqkd::selftest::{oracle_equivalence, oracle_grid, oracle_table};
use mdiqkd::{ChannelGeometry, Error};

#[derive(Parser, Debug)]
#[command(name = "mdiqkd", version, about = "MDI-QKD key-rate model and scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config applied over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Misalignment draws per evaluation.
    #[arg(long, global = true)]
    mc_samples: Option<usize>,
    /// Phase quadrature points (even, >= 16).
    #[arg(long, global = true)]
    quadrature: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gain and QBER table for the configured intensities and geometry.
    Simulate,
    /// Gain table, two-decoy bounds and key rate.
    DecoyBounds {
        /// Use this gain table (columns basis,q_a,q_b,Q,EQ) instead of simulating one.
        #[arg(long)]
        gain_table: Option<PathBuf>,
    },
    /// Optimal intensities at the configured geometry.
    Optimize,
    /// Run a named reproduction.
    Sweep {
        #[arg(long)]
        preset: String,
    },
    /// Engine versus closed-form equivalence check.
    Selftest {
        /// Grid points.
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::DecoyBounds { .. } => "decoy-bounds",
            Command::Optimize => "optimize",
            Command::Sweep { .. } => "sweep",
            Command::Selftest { .. } => "selftest",
        }
    }
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_config_error() || matches!(e, Error::Io(_) | Error::Csv(_)) { 2 } else { 3 };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("mdiqkd: error: {line}");
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mdiqkd: error: {}", f.message.lines().next().unwrap_or(""));
            ExitCode::from(f.code)
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let preset = match &cli.command {
        Command::Sweep { preset } => Some(preset.parse::<Preset>().map_err(usage)?),
        _ => None,
    };
    let mut cfg = RunConfig::defaults(preset);
    if let Some(path) = &cli.config {
        cfg.apply(&ConfigFile::load(path)?)?;
    }
    if let Some(s) = cli.seed {
        cfg.set_override("numerics.seed", &s.to_string())?;
    }
    if let Some(n) = cli.mc_samples {
        cfg.set_override("numerics.mc_samples", &n.to_string())?;
    }
    if let Some(n) = cli.quadrature {
        cfg.set_override("numerics.quadrature_points", &n.to_string())?;
    }
    cfg.params.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("cannot configure thread pool: {e}")))?;
    }
    let cfg = resolve(cli)?;
    fs::create_dir_all(&cli.out).map_err(|e| usage(format!("cannot create output directory {}: {e}", cli.out.display())))?;
    let series = match &cli.command {
        Command::Simulate => simulate(&cfg)?,
        Command::DecoyBounds { gain_table } => decoy_bounds(&cfg, gain_table.as_deref())?,
        Command::Optimize => optimize(&cfg)?,
        Command::Sweep { .. } => {
            let preset = cfg.preset.expect("sweep has a preset");
            run_preset(preset, &cfg.params, &cfg.grids, &cfg.options)?
        }
        Command::Selftest { points } => {
            let checks = oracle_equivalence(&oracle_grid(*points), cfg.params.quadrature_points)?;
            let failed: Vec<String> = checks
                .iter()
                .filter(|c| !c.passed())
                .map(|c| format!("{} ({:?}): {:e}", c.quantity, c.sign, c.max_abs_deviation))
                .collect();
            write_outputs(
                &cli.out,
                &cfg,
                cli.command.name(),
                &[Series { name: "selftest".into(), table: oracle_table(&checks) }],
            )?;
            if !failed.is_empty() {
                return Err(Failure { code: 3, message: format!("oracle deviation above tolerance: {}", failed.join("; ")) });
            }
            println!("selftest: {} checks passed", checks.len());
            return Ok(());
        }
    };
    write_outputs(&cli.out, &cfg, cli.command.name(), &series)
}

fn write_outputs(dir: &Path, cfg: &RunConfig, subcommand: &str, series: &[Series]) -> Result<(), Failure> {
    for s in series {
        let path = dir.join(format!("{}.csv", s.name));
        s.table.write_file(&path).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
        println!("{}", path.display());
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, cfg.manifest(subcommand)).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    println!("{}", path.display());
    Ok(())
}

fn geometry(cfg: &RunConfig) -> Result<ChannelGeometry, Failure> {
    Ok(ChannelGeometry::from_distances(cfg.l_ac_km, cfg.l_bc_km, cfg.params.alpha_db_per_km)?)
}

fn gain_series(table: &GainTable) -> Series {
    let mut t = Table::new(["basis", "q_a", "q_b", "Q", "E", "EQ"]);
    for (basis, qa, qb, e) in table.rows() {
        t.push(vec![basis.label().into(), qa.into(), qb.into(), e.gain.into(), e.qber().into(), e.error_gain.into()]);
    }
    Series { name: "gain_table".into(), table: t }
}

fn simulate(cfg: &RunConfig) -> Result<Vec<Series>, Failure> {
    let table = build_gain_table(&cfg.intensities, &geometry(cfg)?, &cfg.params)?;
    Ok(vec![gain_series(&table)])
}

fn report_series(name: &str, reports: &[KeyRateReport]) -> Series {
    let mut t = Table::new([
        "mode",
        "L_ac_km",
        "L_bc_km",
        "mu_a",
        "mu_b",
        "rate",
        "raw_rate",
        "single_photon_term",
        "ec_term",
        "p11_z",
        "y11_z",
        "e11_x",
        "q_z",
        "e_z",
    ]);
    for r in reports {
        t.push(vec![
            r.mode.label().into(),
            r.l_ac_km.into(),
            r.l_bc_km.into(),
            r.mu_a.into(),
            r.mu_b.into(),
            r.rate.into(),
            r.raw_rate.into(),
            r.single_photon_term.into(),
            r.ec_term.into(),
            r.p11_z.into(),
            r.y11_z.into(),
            r.e11_x.into(),
            r.q_z.into(),
            r.e_z.into(),
        ]);
    }
    Series { name: name.into(), table: t }
}

fn decoy_bounds(cfg: &RunConfig, external: Option<&Path>) -> Result<Vec<Series>, Failure> {
    let geo = geometry(cfg)?;
    let table = match external {
        Some(path) => {
            let f = File::open(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            GainTable::read_csv(BufReader::new(f))?
        }
        None => build_gain_table(&cfg.intensities, &geo, &cfg.params)?,
    };
    let b = DecoyBounds::from_table(&table)?;
    let mut bt = Table::new(["quantity", "value", "raw_value", "case"]);
    bt.push(vec!["y11_z_lower".into(), b.y11_z_lower.into(), b.y11_z_lower_raw.into(), b.case_z.label().into()]);
    bt.push(vec!["y11_x_lower".into(), b.y11_x_lower.into(), b.y11_x_lower_raw.into(), b.case_x.label().into()]);
    bt.push(vec!["e11_x_upper".into(), b.e11_x_upper.into(), b.e11_x_upper_raw.into(), b.case_x.label().into()]);
    let two = rate_from_table(&table, &geo, &cfg.params)?;
    let s = table.settings();
    let asym = asymptotic_rate(s.mu_a, s.mu_b, &geo, &cfg.params)?;
    Ok(vec![gain_series(&table), Series { name: "decoy_bounds".into(), table: bt }, report_series("key_rate", &[two, asym])])
}

fn optimize(cfg: &RunConfig) -> Result<Vec<Series>, Failure> {
    let geo = geometry(cfg)?;
    let r = optimize_intensities(cfg.mode, cfg.coupling()?, &geo, &cfg.params, &cfg.options.bounds, &cfg.options.search)?;
    let s = r.best_settings;
    let two = cfg.mode == RateMode::TwoDecoyBounds;
    let decoy = |v: f64| if two { Cell::Num(v) } else { Cell::Num(f64::NAN) };
    let mut t = Table::new([
        "mode",
        "coupling",
        "L_ac_km",
        "L_bc_km",
        "mu_a",
        "nu_a",
        "omega_a",
        "mu_b",
        "nu_b",
        "omega_b",
        "rate",
        "raw_rate",
        "evaluations",
        "converged",
        "constraint_active",
    ]);
    t.push(vec![
        cfg.mode.label().into(),
        cfg.coupling.as_str().into(),
        cfg.l_ac_km.into(),
        cfg.l_bc_km.into(),
        s.mu_a.into(),
        decoy(s.nu_a),
        decoy(s.omega_a),
        s.mu_b.into(),
        decoy(s.nu_b),
        decoy(s.omega_b),
        r.rate().into(),
        r.best_rate.into(),
        r.evaluations.into(),
        r.converged.into(),
        r.constraint_active.join(";").into(),
    ]);
    Ok(vec![Series { name: "optimization".into(), table: t }, report_series("key_rate", &[r.report])])
}
