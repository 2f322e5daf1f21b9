//! `noonphase` command-line driver.
//!
//! Every command writes one comma-separated table (with a header row) to
//! `--out`, or to stdout when `--out` is absent. Files are written to a
//! temporary sibling and renamed into place, so a failed run never leaves a
//! partial file. Human-oriented summaries go to stderr.
//!
//! Exit status: 0 success, 1 I/O or other failure, 2 usage error,
//! 3 calibration error, 4 degenerate posterior.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use noonphase::analysis::{
    default_fig_m_depth, default_theta_scan, fig_m_sweep, gain_scan, scaling_study, GainFamily,
    ScalingFamily,
};
use noonphase::{
    gain_db, load_calibration, run_ensemble, CalibrationTable, Error, ModelSource, PriorWindow,
    ScheduleSpec, SeedSpec, Simulator, TrialConfig,
};

const EXIT_OTHER: u8 = 1;
const EXIT_CALIBRATION: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "noonphase",
    version,
    about = "Bayesian phase estimation with NOON states"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulated experiment and report its estimate
    Sense(TrialArgs),
    /// Run many seeded trials and report ensemble statistics
    Ensemble(TrialArgs),
    /// All-"yes" widths over a range of schedule depths, with a prefactor fit
    Scaling(ScalingArgs),
    /// Asymptotic gain over shot noise versus the true phase
    GainScan(GainArgs),
    /// Normalised sensitivity ΔΘ·N_T for geometric plans over ratios and replica counts
    FigM(FigMArgs),
    /// Posterior density of one simulated experiment, one row per grid point
    PosteriorDump(TrialArgs),
}

#[derive(Args)]
struct TrialArgs {
    /// Measurement schedule literal: single:N, arith:p=,nt=, geom:p=,r=,m=, fixed:n=,m=, ions:nmax=,m=
    #[arg(long, default_value = "geom:p=4,r=2,m=1", value_parser = parse_schedule)]
    schedule: ScheduleSpec,
    /// True phase in radians
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    theta: f64,
    #[command(flatten)]
    prior: PriorArgs,
    /// Grid points (default max(4096, 200·N_T))
    #[arg(long)]
    grid: Option<usize>,
    /// Number of trials (ensemble only)
    #[arg(long, default_value_t = 200)]
    trials: u64,
    /// Master seed; trial i uses stream i of this seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Calibration CSV (n,offset,contrast); ideal fringes when absent
    #[arg(long)]
    calib: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct PriorArgs {
    /// Prior window [−π/L, π/L]
    #[arg(long = "prior-l", default_value_t = 1.0, value_parser = parse_prior_l)]
    prior_l: f64,
    /// Restrict the prior to [0, π/L], resolving the θ ↔ −θ ambiguity
    #[arg(long)]
    fold: bool,
}

impl PriorArgs {
    fn window(&self) -> noonphase::Result<PriorWindow<f64>> {
        PriorWindow::new(self.prior_l, self.fold)
    }
}

#[derive(Args)]
struct OutArgs {
    /// Output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingKind {
    Geom,
    Arith,
}

#[derive(Args)]
struct ScalingArgs {
    /// Schedule family
    #[arg(long, value_enum, default_value = "geom")]
    family: ScalingKind,
    /// Schedule depths: a..b (inclusive), a,b,c or a single value
    #[arg(long, default_value = "8..14", value_parser = parse_u64_list)]
    p: U64List,
    /// Fixed fit exponent (default 1 for geom, 0.75 for arith)
    #[arg(long)]
    alpha: Option<f64>,
    /// Base cat size of the arithmetic family
    #[arg(long, default_value_t = 1)]
    nt: u64,
    /// Ratio of the geometric family
    #[arg(long, default_value_t = 2)]
    r: u64,
    /// Replicas per step of the geometric family
    #[arg(long, default_value_t = 1)]
    m: u64,
    #[command(flatten)]
    prior: PriorArgs,
    /// Grid points (default max(4096, 200·N_T) per row)
    #[arg(long)]
    grid: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum GainKind {
    Ions,
    Fixed,
}

#[derive(Args)]
struct GainArgs {
    /// ions: cats 1..=n under a full prior; fixed: one cat size n under [0, π/n]
    #[arg(long, value_enum, default_value = "ions")]
    family: GainKind,
    /// n_max for ions, Ñ for fixed (default 6 for ions, 3 for fixed)
    #[arg(long)]
    n: Option<u64>,
    /// Replicas per cat size (may be fractional)
    #[arg(long, default_value_t = 1e5)]
    m: f64,
    /// Number of phases scanned across the interior of the prior window
    #[arg(long, default_value_t = 50)]
    points: usize,
    /// Grid points (default resolves the asymptotic peak, at least 4096)
    #[arg(long)]
    grid: Option<usize>,
    /// Calibration CSV (n,offset,contrast); ideal fringes when absent
    #[arg(long)]
    calib: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct FigMArgs {
    /// Geometric ratios
    #[arg(long, default_value = "2,3,4,5", value_parser = parse_u64_list)]
    r: U64List,
    /// Replica counts: a..b (inclusive), a,b,c or a single value
    #[arg(long, default_value = "1..12", value_parser = parse_u64_list)]
    m: U64List,
    /// Depth p for every ratio (default 4, 6, 4, 3 for r = 2, 3, 4, 5)
    #[arg(long)]
    p: Option<u64>,
    /// Grid points (default max(4096, 200·N_T) per row)
    #[arg(long)]
    grid: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Debug)]
struct U64List(Vec<u64>);

fn parse_u64_list(s: &str) -> Result<U64List, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|_| format!("`{t}` is not a non-negative integer"))
    };
    let values = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(format!("empty range `{s}`"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    Ok(U64List(values))
}

fn parse_schedule(s: &str) -> Result<ScheduleSpec, String> {
    let spec: ScheduleSpec = s.parse().map_err(|e: Error| e.to_string())?;
    spec.build().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn parse_prior_l(s: &str) -> Result<f64, String> {
    let l: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if l < 1.0 || !l.is_finite() {
        return Err(format!("L must be finite and >= 1, got {s}"));
    }
    Ok(l)
}

fn load_table(path: &Path) -> noonphase::Result<CalibrationTable<f64>> {
    load_calibration(BufReader::new(File::open(path)?))
}

fn models(calib: &Option<PathBuf>) -> noonphase::Result<ModelSource<f64>> {
    Ok(match calib {
        Some(path) => ModelSource::Calibrated(load_table(path)?),
        None => ModelSource::Ideal,
    })
}

fn trial_config(args: &TrialArgs) -> noonphase::Result<TrialConfig<f64>> {
    Ok(TrialConfig {
        schedule: args.schedule.build()?,
        models: models(&args.calib)?,
        theta_true: args.theta,
        window: args.prior.window()?,
        grid_points: args.grid,
    })
}

fn csv_buffer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish(writer: csv::Writer<Vec<u8>>, out: &OutArgs) -> noonphase::Result<()> {
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Io(io::Error::other(e.to_string())))?;
    emit(&bytes, out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e.to_string()))
}

/// Writes the whole output at once: to stdout, or atomically to `--out`.
fn emit(bytes: &[u8], out: &OutArgs) -> noonphase::Result<()> {
    match &out.out {
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        }
    }
    Ok(())
}

fn sense(args: &TrialArgs) -> noonphase::Result<()> {
    let sim = Simulator::new(trial_config(args)?)?;
    let trial = sim.run(SeedSpec::new(args.seed, 0))?;
    let gain = gain_db(trial.half_width, trial.n_total as f64)?;
    let mut w = csv_buffer();
    w.write_record([
        "schedule",
        "theta_true",
        "L",
        "estimate",
        "half_width",
        "n_total",
        "gain_db",
        "saturated",
        "secondary_peak_ratio",
        "master_seed",
    ])
    .map_err(csv_err)?;
    w.write_record([
        args.schedule.to_string(),
        trial.theta_true.to_string(),
        args.prior.prior_l.to_string(),
        trial.estimate.to_string(),
        trial.half_width.to_string(),
        trial.n_total.to_string(),
        gain.to_string(),
        trial.saturated.to_string(),
        trial.secondary_peak_ratio.to_string(),
        args.seed.to_string(),
    ])
    .map_err(csv_err)?;
    finish(w, &args.out)
}

fn ensemble(args: &TrialArgs) -> noonphase::Result<()> {
    let stats = run_ensemble(args.trials, &trial_config(args)?, args.seed)?;
    let mut w = csv_buffer();
    w.write_record([
        "schedule",
        "theta_true",
        "L",
        "n_trials",
        "mean_half_width",
        "rms_error",
        "mean_bias",
        "saturation_fraction",
        "master_seed",
    ])
    .map_err(csv_err)?;
    w.write_record([
        args.schedule.to_string(),
        args.theta.to_string(),
        args.prior.prior_l.to_string(),
        stats.n_trials.to_string(),
        stats.mean_half_width.to_string(),
        stats.rms_error.to_string(),
        stats.mean_bias.to_string(),
        stats.saturation_fraction.to_string(),
        args.seed.to_string(),
    ])
    .map_err(csv_err)?;
    finish(w, &args.out)
}

fn posterior_dump(args: &TrialArgs) -> noonphase::Result<()> {
    let sim = Simulator::new(trial_config(args)?)?;
    let (_, posterior) = sim.simulate(SeedSpec::new(args.seed, 0))?;
    let mut buf = Vec::new();
    posterior.normalize()?.write_dump(&mut buf)?;
    emit(&buf, &args.out)
}

fn scaling(args: &ScalingArgs) -> noonphase::Result<()> {
    let (family, default_alpha) = match args.family {
        ScalingKind::Geom => (
            ScalingFamily::Geometric {
                r: args.r,
                m: args.m,
            },
            1.0,
        ),
        ScalingKind::Arith => (ScalingFamily::Arithmetic { n_tilde: args.nt }, 0.75),
    };
    let alpha = args.alpha.unwrap_or(default_alpha);
    let study = scaling_study(family, &args.p.0, alpha, args.prior.window()?, args.grid)?;
    let mut w = csv_buffer();
    w.write_record([
        "p",
        "n_total",
        "delta_theta",
        "normalized",
        "gain_db",
        "saturated",
    ])
    .map_err(csv_err)?;
    for row in &study.rows {
        w.write_record([
            row.p.to_string(),
            row.n_total.to_string(),
            row.delta_theta.to_string(),
            (row.delta_theta * (row.n_total as f64).powf(alpha)).to_string(),
            row.report.gain_db.to_string(),
            row.saturated.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w, &args.out)?;
    eprintln!(
        "fit: delta_theta = {} / N_T^{} (log-rms residual {}, {} points)",
        study.fit.prefactor, study.fit.exponent, study.fit.residual, study.fit.n_points
    );
    Ok(())
}

fn gain(args: &GainArgs) -> noonphase::Result<()> {
    let family = match args.family {
        GainKind::Ions => GainFamily::Ions {
            n_max: args.n.unwrap_or(6),
        },
        GainKind::Fixed => GainFamily::Fixed {
            n_tilde: args.n.unwrap_or(3),
        },
    };
    let table = match &args.calib {
        Some(path) => load_table(path)?,
        None => CalibrationTable::ideal(family.particle_numbers())?,
    };
    let thetas = default_theta_scan(&family.window::<f64>()?, args.points);
    let scan = gain_scan(family, &table, &thetas, args.m, args.grid)?;
    let mut w = csv_buffer();
    w.write_record(["theta", "delta_theta", "gain_db", "saturated"])
        .map_err(csv_err)?;
    for row in &scan.rows {
        w.write_record([
            row.theta.to_string(),
            row.delta_theta.to_string(),
            row.gain_db.to_string(),
            row.saturated.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w, &args.out)?;
    eprintln!("N_T = {}", scan.n_total);
    if let Some(bound) = scan.prior_bound {
        eprintln!("prior bound: theta < {bound}");
    }
    Ok(())
}

fn fig_m(args: &FigMArgs) -> noonphase::Result<()> {
    let plans: Vec<(u64, u64)> = args
        .r
        .0
        .iter()
        .map(|&r| (r, args.p.unwrap_or_else(|| default_fig_m_depth(r))))
        .collect();
    let sweep = fig_m_sweep::<f64>(&plans, &args.m.0, args.grid)?;
    let mut w = csv_buffer();
    w.write_record([
        "r",
        "p",
        "m",
        "n_total",
        "delta_theta",
        "normalized",
        "saturated",
    ])
    .map_err(csv_err)?;
    for row in &sweep.rows {
        w.write_record([
            row.r.to_string(),
            row.p.to_string(),
            row.m.to_string(),
            row.n_total.to_string(),
            row.delta_theta.to_string(),
            row.normalized.to_string(),
            row.saturated.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w, &args.out)?;
    for (r, m) in &sweep.optima {
        eprintln!("r={r}: best M={m}");
    }
    Ok(())
}

fn run(cli: &Cli) -> noonphase::Result<()> {
    match &cli.command {
        Command::Sense(a) => sense(a),
        Command::Ensemble(a) => ensemble(a),
        Command::PosteriorDump(a) => posterior_dump(a),
        Command::Scaling(a) => scaling(a),
        Command::GainScan(a) => gain(a),
        Command::FigM(a) => fig_m(a),
    }
}

fn exit_code(err: &Error) -> u8 {
    let inner = match err {
        Error::Trial { source, .. } => source.as_ref(),
        e => e,
    };
    if inner.is_calibration() {
        EXIT_CALIBRATION
    } else if inner.is_degenerate() {
        EXIT_DEGENERATE
    } else {
        EXIT_OTHER
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
