//! Command-line driver for scenario runs, sweeps and figure data.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a configuration error or an
//! unimplemented method, 3 when more than half of the runs end in outage.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mabeam::angular::{AngularInterval, AngularSet};
use mabeam::codebook::build_hierarchy;
use mabeam::energy::{complexity_report, MeasuredOps};
use mabeam::experiments::{
    convergence_experiment, emit_figure_data, read_rows, summarize, sweep, trial_blockage, trial_stage1, write_rows,
    write_summary, Axis, ConvergenceReport, FigureId, Method, Scenario, SweepSpec, TrialRow,
};
use mabeam::training::subspace_codebook_search;
use mabeam::Error;

#[derive(Parser)]
#[command(name = "mabeam", version, about = "Blockage-aware hierarchical beam training experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Scenario JSON; defaults apply to every missing key.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory, created when missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "results")]
    out: PathBuf,
    /// Overrides the scenario trial count.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true, value_name = "N")]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the blockage-aware hierarchical codebook of one trial.
    SynthCodebook {
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Ignore blockage and cover the whole field of view.
        #[arg(long)]
        traditional: bool,
    },
    /// Place obstacles for one trial and report blocked and available directions.
    DetectBlockage {
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Design the RIS phases of one trial from its statistics window.
    Stage1 {
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run every trial at the scenario operating point.
    Train {
        #[arg(long, value_delimiter = ',', value_enum, default_value = "proposed,traditional,dft-exhaustive")]
        methods: Vec<MethodArg>,
    },
    /// Sweep one axis over the given values.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_enum, default_value = "proposed,traditional,dft-exhaustive")]
        methods: Vec<MethodArg>,
    },
    /// Residual traces of the synthesis loop across blockage densities.
    Convergence {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.3, 0.5])]
        densities: Vec<f64>,
        /// Realisations per density.
        #[arg(long, default_value_t = 60)]
        per_density: usize,
    },
    /// Turn sweep rows or convergence traces into one figure's CSV.
    FigureData {
        #[arg(long)]
        figure: String,
        /// Per-trial CSV from `train` or `sweep`.
        #[arg(long, value_name = "PATH")]
        rows: Option<PathBuf>,
        /// Residual CSV from `convergence`.
        #[arg(long, value_name = "PATH")]
        residuals: Option<PathBuf>,
        /// Iteration CSV from `convergence`.
        #[arg(long, value_name = "PATH")]
        iterations: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Proposed,
    Traditional,
    DftExhaustive,
    /// Subspace codebook baseline; not implemented.
    Subspace,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    SnrDb,
    TxPowerDbm,
    BlockageDensity,
    OverheadBudget,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::SnrDb => Axis::SnrDb,
            AxisArg::TxPowerDbm => Axis::TxPowerDbm,
            AxisArg::BlockageDensity => Axis::BlockageDensity,
            AxisArg::OverheadBudget => Axis::OverheadBudget,
        }
    }
}

/// Finished run: success or an outage-dominated result.
enum Outcome {
    Done,
    Outage,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Unimplemented(_) | Error::InvalidArgument(_) => 2,
        _ => 1,
    }
}

fn load_scenario(g: &GlobalArgs) -> mabeam::Result<Scenario> {
    let mut scn = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("config: cannot read {}: {e}", path.display())))?;
            Scenario::from_json(&text)?
        }
        None => Scenario::default(),
    };
    if let Some(seed) = g.seed {
        scn.seed = seed;
    }
    if let Some(trials) = g.trials {
        scn.trials = trials;
    }
    scn.validate()?;
    Ok(scn)
}

fn methods(args: &[MethodArg]) -> mabeam::Result<Vec<Method>> {
    let mut out = Vec::new();
    for m in args {
        let method = match m {
            MethodArg::Proposed => Method::Proposed,
            MethodArg::Traditional => Method::Traditional,
            MethodArg::DftExhaustive => Method::DftExhaustive,
            MethodArg::Subspace => {
                subspace_codebook_search()?;
                unreachable!("subspace baseline returned a result");
            }
        };
        if !out.contains(&method) {
            out.push(method);
        }
    }
    Ok(out)
}

fn create(dir: &Path, name: &str) -> mabeam::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> mabeam::Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.flush()?;
    Ok(())
}

/// More than half of the aware-search rows ended in outage.
fn outage_dominated(rows: &[TrialRow]) -> bool {
    let aware: Vec<&TrialRow> = rows.iter().filter(|r| r.method == Method::Proposed).collect();
    let pool: Vec<&TrialRow> = if aware.is_empty() { rows.iter().collect() } else { aware };
    !pool.is_empty() && 2 * pool.iter().filter(|r| r.outage).count() > pool.len()
}

fn write_sweep(out: &Path, rows: &[TrialRow]) -> mabeam::Result<Outcome> {
    write_rows(rows, create(out, "trials.csv")?)?;
    let summary = summarize(rows);
    write_summary(&summary, create(out, "summary.csv")?)?;
    for s in &summary {
        println!(
            "{:>14} {:>10} {:<14} rate {:>8.3} bit/s/Hz  evals {:>6.1}  EE {:>10.3e} bit/J  outage {:.2}",
            s.axis.as_str(),
            s.axis_value,
            s.method.as_str(),
            s.rate_mean,
            s.evaluations_mean,
            s.ee_mean,
            s.outage_fraction
        );
    }
    Ok(if outage_dominated(rows) { Outcome::Outage } else { Outcome::Done })
}

fn run(cli: Cli) -> mabeam::Result<Outcome> {
    let g = &cli.global;
    if let Some(n) = g.parallel {
        if n == 0 {
            return Err(Error::Config("--parallel: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--parallel: {e}")))?;
    }
    let scn = load_scenario(g)?;
    fs::create_dir_all(&g.out)?;
    let out = g.out.as_path();
    match cli.command {
        Command::SynthCodebook { trial, traditional } => {
            let blockage = trial_blockage(&scn, trial, scn.blockage.density)?;
            let available = if traditional {
                AngularSet::from(AngularInterval { lo: -1.0, hi: 1.0 })
            } else {
                blockage.available.clone()
            };
            let (book, report) = build_hierarchy(&scn.bs_layout()?, &available, &scn.gs)?;
            fs::write(out.join("codebook.json"), book.to_json()?)?;
            let cm = scn.complexity_model(blockage.scene.obstacles.len(), 2 * book.depth());
            let measured = MeasuredOps { gs_multiplies: Some(report.multiplies), blockage_predicates: None };
            let complexity = complexity_report(&cm, measured)?;
            fs::write(out.join("complexity.json"), complexity.to_json()?)?;
            println!(
                "{} active / {} pruned codewords, {:.1} mean iterations",
                book.active_count(),
                report.pruned,
                report.mean_iterations()
            );
            print!("{complexity}");
            Ok(if book.outage() { Outcome::Outage } else { Outcome::Done })
        }
        Command::DetectBlockage { trial } => {
            let blockage = trial_blockage(&scn, trial, scn.blockage.density)?;
            write_json(out, "blockage.json", &blockage)?;
            println!(
                "{} obstacles, blocked fraction {:.3}, {} blocked links",
                blockage.scene.obstacles.len(),
                blockage.blocked_fraction,
                blockage.blocked_links
            );
            Ok(if blockage.outage { Outcome::Outage } else { Outcome::Done })
        }
        Command::Stage1 { trial } => {
            let stage1 = trial_stage1(&scn, trial)?;
            write_json(out, "stage1.json", &stage1)?;
            println!("objective {:.6e} after {} iterations", stage1.objective, stage1.iterations);
            Ok(Outcome::Done)
        }
        Command::Train { methods: m } => {
            let methods = methods(&m)?;
            let spec = match (scn.link.snr_db, scn.link.tx_power_dbm) {
                (Some(s), _) => SweepSpec { axis: Axis::SnrDb, values: vec![s], methods },
                (_, Some(p)) => SweepSpec { axis: Axis::TxPowerDbm, values: vec![p], methods },
                (None, None) => unreachable!("validated link"),
            };
            write_sweep(out, &sweep(&scn, &spec)?)
        }
        Command::Sweep { axis, values, methods: m } => {
            let spec = SweepSpec { axis: axis.into(), values, methods: methods(&m)? };
            write_sweep(out, &sweep(&scn, &spec)?)
        }
        Command::Convergence { densities, per_density } => {
            let report = convergence_experiment(&scn, &densities, per_density)?;
            report.write_residuals(create(out, "residuals.csv")?)?;
            report.write_iterations(create(out, "iterations.csv")?)?;
            println!("{} residual rows, {} layer counts", report.residuals.len(), report.iterations.len());
            Ok(Outcome::Done)
        }
        Command::FigureData { figure, rows, residuals, iterations } => {
            let id: FigureId = figure.parse()?;
            let open = |p: &Path| File::open(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())));
            let (trial_rows, report) = if id.uses_convergence() {
                let (Some(r), Some(i)) = (residuals, iterations) else {
                    return Err(Error::Config(format!("{figure}: needs --residuals and --iterations")));
                };
                (Vec::new(), Some(ConvergenceReport::read(open(&r)?, open(&i)?)?))
            } else {
                let Some(r) = rows else {
                    return Err(Error::Config(format!("{figure}: needs --rows")));
                };
                (read_rows(open(&r)?)?, None)
            };
            emit_figure_data(id, &trial_rows, report.as_ref(), create(out, &format!("{figure}.csv"))?)?;
            Ok(Outcome::Done)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Outage) => {
            eprintln!("error: more than half of the runs ended in outage");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
