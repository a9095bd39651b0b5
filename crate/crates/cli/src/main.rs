use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scalereg::harness::{run_experiment, ExperimentSpec};
use scalereg::mapmerge::{load_pgm, merge_maps, save_pgm, MergeConfig, PgmThresholds};
use scalereg::scaling_icp::RegistrationResult;
use scalereg::{
    run_bounded_tricp, run_scaling_icp, run_strimmed_icp, Error, PointSet, ScaleBounds, SimilarityTransform,
    SolverConfig, TrimConfig,
};

#[derive(Parser)]
#[command(name = "scalereg", version, about = "Similarity registration of point sets and occupancy grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register fully overlapping point sets with scaling ICP.
    Register(RegisterArgs),
    /// Register partially overlapping point sets with trimmed scaling ICP.
    TrimRegister(TrimRegisterArgs),
    /// Merge two PGM occupancy grids of possibly different resolutions.
    MergeMaps(MergeArgs),
    /// Run a Monte-Carlo experiment described by a key-value config file.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SolverArgs {
    /// Iteration cap.
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Relative objective decrease below which iteration stops.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Starting transform `s,rot,tx,ty` (2-D), `s,rot,tx,ty,tz` (3-D, rotation
    /// about z) or `s,rx,ry,rz,tx,ty,tz` (3-D axis-angle); angles in degrees.
    #[arg(long, value_name = "S,ROT,TX,TY[,TZ]", allow_hyphen_values = true)]
    init: Option<String>,
}

#[derive(Args)]
struct TrimArgs {
    /// Overlap penalty exponent.
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
    /// Smallest admissible overlap fraction.
    #[arg(long, default_value_t = 0.3)]
    min_overlap: f64,
}

#[derive(Args)]
struct OutputArgs {
    /// Transform JSON destination; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Per-iteration trace CSV destination.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct RegisterArgs {
    /// Data point set (moved onto the model).
    data: PathBuf,
    /// Model point set.
    model: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct TrimRegisterArgs {
    data: PathBuf,
    model: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    trim: TrimArgs,
    /// Run the bounded-scale baseline with the scale clamped into `lo,hi`.
    #[arg(long, value_name = "LO,HI")]
    bounds: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct MergeArgs {
    /// Reference map; the output keeps its frame and resolution.
    reference: PathBuf,
    /// Map to register onto the reference.
    other: PathBuf,
    /// Merged PGM destination.
    #[arg(long, short)]
    out: PathBuf,
    /// Merge report JSON destination; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Reference cell size in metres.
    #[arg(long, default_value_t = 1.0)]
    reference_resolution: f64,
    /// Other map's cell size in metres.
    #[arg(long, default_value_t = 1.0)]
    other_resolution: f64,
    /// Gray values at or below this are occupied.
    #[arg(long, default_value_t = 64)]
    occupied_threshold: u8,
    /// Gray values at or above this are free.
    #[arg(long, default_value_t = 192)]
    free_threshold: u8,
    /// Reject the merge when the edge RMS residual exceeds this many reference cells.
    #[arg(long, default_value_t = 2.0)]
    max_rms_cells: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    trim: TrimArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config (`key = value` lines).
    config: PathBuf,
    /// Directory for trials.csv, traces.csv, summary.csv and report.json.
    #[arg(long, short, default_value = "bench-out")]
    out_dir: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_numbers(text: &str, what: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("{what}: bad number {v:?}")))
        })
        .collect()
}

fn parse_init(text: &str, dim: usize) -> Result<SimilarityTransform, Error> {
    let v = parse_numbers(text, "--init")?;
    let rad = f64::to_radians;
    match (dim, v.len()) {
        (2, 4) => SimilarityTransform::from_2d(v[0], rad(v[1]), v[2], v[3]),
        (3, 5) => SimilarityTransform::from_3d(v[0], [0.0, 0.0, rad(v[1])], [v[2], v[3], v[4]]),
        (3, 7) => SimilarityTransform::from_3d(v[0], [rad(v[1]), rad(v[2]), rad(v[3])], [v[4], v[5], v[6]]),
        (d, n) => Err(Error::InvalidArgument(format!(
            "--init has {n} values, which does not describe a {d}-D transform"
        ))),
    }
}

fn parse_bounds(text: &str) -> Result<ScaleBounds, Error> {
    match parse_numbers(text, "--bounds")?[..] {
        [lo, hi] => ScaleBounds::new(lo, hi),
        _ => Err(Error::InvalidArgument(format!("--bounds expects `lo,hi`, got {text:?}"))),
    }
}

fn solver_config(args: &SolverArgs, dim: usize) -> Result<SolverConfig, Error> {
    Ok(SolverConfig {
        max_iterations: args.max_iters,
        objective_rel_tol: args.tol,
        initial_transform: args.init.as_deref().map(|s| parse_init(s, dim)).transpose()?,
    })
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn trace_csv(reg: &RegistrationResult, extra: Option<(&[f64], &[f64])>) -> String {
    let mut out = String::from("iteration,objective,scale");
    if extra.is_some() {
        out.push_str(",psi,overlap");
    }
    out.push('\n');
    for (k, (f, s)) in reg.objective_trace.iter().zip(&reg.scale_trace).enumerate() {
        out.push_str(&format!("{},{f:e},{s}", k + 1));
        if let Some((psi, xi)) = extra {
            out.push_str(&format!(",{:e},{}", psi[k], xi[k]));
        }
        out.push('\n');
    }
    out
}

fn registration_json(reg: &RegistrationResult, overlap: Option<f64>) -> serde_json::Value {
    serde_json::json!({
        "transform": reg.transform.to_record(),
        "iterations": reg.iterations,
        "termination": reg.termination,
        "objective": reg.objective,
        "final_objective": reg.objective_trace.last(),
        "final_mse": reg.final_mse,
        "overlap": overlap,
        "degenerate_rotations": reg.degenerate_rotations,
    })
}

fn load_pair(data: &Path, model: &Path) -> Result<(PointSet, PointSet), Error> {
    Ok((PointSet::read(data)?, PointSet::read(model)?))
}

fn register(args: &RegisterArgs) -> Result<(), Error> {
    let (data, model) = load_pair(&args.data, &args.model)?;
    let cfg = solver_config(&args.solver, data.dim())?;
    let reg = run_scaling_icp(&data, &model, &cfg)?;
    if let Some(path) = &args.output.trace {
        fs::write(path, trace_csv(&reg, None))?;
    }
    let json = serde_json::to_string_pretty(&registration_json(&reg, None))?;
    write_or_print(args.output.out.as_deref(), &json)
}

fn trim_register(args: &TrimRegisterArgs) -> Result<(), Error> {
    let (data, model) = load_pair(&args.data, &args.model)?;
    let cfg = TrimConfig {
        solver: solver_config(&args.solver, data.dim())?,
        lambda: args.trim.lambda,
        min_overlap: args.trim.min_overlap,
    };
    let res = match &args.bounds {
        Some(b) => run_bounded_tricp(&data, &model, &cfg, parse_bounds(b)?)?,
        None => run_strimmed_icp(&data, &model, &cfg)?,
    };
    if let Some(path) = &args.output.trace {
        let extra = (res.psi_trace.as_slice(), res.overlap_trace.as_slice());
        fs::write(path, trace_csv(&res.registration, Some(extra)))?;
    }
    let mut json = registration_json(&res.registration, Some(res.overlap));
    json["kind"] = serde_json::to_value(&res.kind)?;
    json["final_psi"] = serde_json::to_value(res.psi_trace.last())?;
    write_or_print(args.output.out.as_deref(), &serde_json::to_string_pretty(&json)?)
}

fn merge(args: &MergeArgs) -> Result<(), Error> {
    let thresholds = PgmThresholds {
        occupied_max: args.occupied_threshold,
        free_min: args.free_threshold,
    };
    if thresholds.occupied_max >= thresholds.free_min {
        return Err(Error::InvalidArgument(
            "--occupied-threshold must be below --free-threshold".into(),
        ));
    }
    let reference = load_pgm(&args.reference, &thresholds, args.reference_resolution)?;
    let other = load_pgm(&args.other, &thresholds, args.other_resolution)?;
    let init = match &args.solver.init {
        Some(s) => parse_init(s, 2)?,
        None => SimilarityTransform::identity(2),
    };
    let cfg = MergeConfig {
        registration: TrimConfig {
            solver: SolverConfig {
                max_iterations: args.solver.max_iters,
                objective_rel_tol: args.solver.tol,
                initial_transform: None,
            },
            lambda: args.trim.lambda,
            min_overlap: args.trim.min_overlap,
        },
        max_rms_cells: args.max_rms_cells,
    };
    match merge_maps(&reference, &other, &cfg, &init) {
        Ok((grid, report)) => {
            save_pgm(&grid, &args.out)?;
            write_or_print(args.report.as_deref(), &serde_json::to_string_pretty(&report)?)
        }
        Err(Error::MergeRejected { report, bound }) => {
            // keep the diagnostics even though no merged map is written
            write_or_print(args.report.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            Err(Error::MergeRejected { report, bound })
        }
        Err(e) => Err(e),
    }
}

fn bench(args: &BenchArgs) -> Result<(), Error> {
    let mut spec = ExperimentSpec::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let report = run_experiment(&spec)?;
    report.write(&args.out_dir)?;
    for s in &report.summary {
        println!(
            "{:<15} trials {:>4}  failures {:>3}  mean mse {:.3e}  median mse {:.3e}  mean time {:.4}s  mean scale error {:.3e}",
            s.algorithm.name(),
            s.trials,
            s.failures,
            s.mean_mse,
            s.median_mse,
            s.mean_time_s,
            s.mean_scale_error
        );
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::InvalidArgument(_) => 2,
        Error::DegenerateScale { .. } | Error::DegenerateShape(_) | Error::EmptyEdges => 3,
        Error::MergeRejected { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Register(a) => register(a),
        Command::TrimRegister(a) => trim_register(a),
        Command::MergeMaps(a) => merge(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
