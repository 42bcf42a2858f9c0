#![allow(clippy::result_large_err)]

mod failure;
mod files;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ouq_core::{
    certify, classic_mcdiarmid, most_predictive_experiment, optimal_mcdiarmid, oscillation,
    safe_unsafe_intervals, solve_lower, solve_upper, AdmissibleProblem, BoundResult, Decision,
    DiameterVector, Direction, ExperimentFunctional, OptimizerConfig, OscillationSearch,
    ProductMeasure, ResponseMode, Route,
};
use serde::Serialize;

use failure::{Failure, EXIT_UNDECIDED};
use files::{csv_bytes, load_json, out_path, write_atomic, write_json, write_trace, RunManifest};

#[derive(Parser)]
#[command(name = "ouq", version, about = "Optimal bounds on failure probability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Upper and/or lower bound on the failure probability of a problem spec.
    Solve {
        spec: PathBuf,
        #[arg(long)]
        upper: bool,
        #[arg(long)]
        lower: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Optimal and classic McDiarmid bounds for a margin and sub-diameters.
    Oci {
        /// Margin a, or the threshold when --mean is given.
        #[arg(short = 'a', allow_hyphen_values = true)]
        a: Option<f64>,
        #[arg(short = 'D', value_delimiter = ',', required = true)]
        diameters: Vec<f64>,
        /// Upper bound b on the mean; the margin becomes a - b.
        #[arg(short = 'b', long = "mean", allow_hyphen_values = true)]
        mean: Option<f64>,
        /// Emit a CSV sweep with this many rows over --range.
        #[arg(long)]
        sweep: Option<usize>,
        /// Sweep range `lo,hi`; defaults to [0, sum of D].
        #[arg(long, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
        range: Option<Vec<f64>>,
        /// Write the sweep CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Certify, decertify or report undecidable for a given epsilon.
    Certify {
        spec: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Ranges of an experiment functional over safe and unsafe scenarios.
    Intervals {
        spec: PathBuf,
        #[arg(long)]
        functional: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Rank candidate experiments by worst-case bound gap.
    Experiments {
        spec: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Oscillation (sub-diameter) of a known response along one or all axes.
    Osc {
        spec: PathBuf,
        #[arg(long)]
        axis: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Seed for all randomness; drawn and recorded when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Optimizer settings as JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_generations: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long, default_value = "ouq-out")]
    out: PathBuf,
}

impl RunArgs {
    fn resolve(
        &self,
        subcommand: &str,
        spec: &Path,
    ) -> Result<(OptimizerConfig, RunManifest), Failure> {
        let mut cfg: OptimizerConfig = match &self.config {
            Some(p) => load_json(p)?,
            None => OptimizerConfig::default(),
        };
        cfg.seed = self.seed.unwrap_or_else(rand::random);
        if let Some(g) = self.max_generations {
            cfg.max_generations = g;
        }
        if let Some(p) = self.population {
            cfg.population = p;
        }
        cfg.validate()?;
        let mut manifest = RunManifest::new(subcommand, Some(spec), Some(&self.out));
        manifest.seeds.push(cfg.seed);
        manifest.config = Some(cfg.clone());
        Ok((cfg, manifest))
    }
}

#[derive(Serialize)]
struct BoundOutput<'a> {
    value: f64,
    direction: Direction,
    route: Route,
    seed: u64,
    support: &'a [usize],
    residual: f64,
    extremal_measure: &'a ProductMeasure,
    trace_file: Option<String>,
    manifest: &'a RunManifest,
}

impl<'a> BoundOutput<'a> {
    fn new(r: &'a BoundResult, trace_file: Option<&Path>, manifest: &'a RunManifest) -> Self {
        Self {
            value: r.value,
            direction: r.direction,
            route: r.route,
            seed: r.seed,
            support: &r.support,
            residual: r.residual,
            extremal_measure: &r.extremal_measure,
            trace_file: trace_file.map(|p| p.display().to_string()),
            manifest,
        }
    }
}

fn print_json(value: &impl Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("output is serializable")
    );
}

fn load_problem(spec: &Path) -> Result<AdmissibleProblem, Failure> {
    load_json(spec)
}

fn epsilon_of(flag: Option<f64>, problem: &AdmissibleProblem) -> Result<f64, Failure> {
    flag.or(problem.epsilon)
        .ok_or_else(|| Failure::usage("no epsilon: pass --epsilon or set it in the spec"))
}

fn cmd_solve(spec: &Path, upper: bool, lower: bool, run: &RunArgs) -> Result<i32, Failure> {
    let problem = load_problem(spec)?;
    let (cfg, manifest) = run.resolve("solve", spec)?;
    let mut directions = Vec::new();
    if upper || !lower {
        directions.push(Direction::Upper);
    }
    if lower {
        directions.push(Direction::Lower);
    }
    let mut outputs = serde_json::Map::new();
    for dir in directions {
        let (name, result) = match dir {
            Direction::Upper => ("upper", solve_upper(&problem, &cfg)?),
            Direction::Lower => ("lower", solve_lower(&problem, &cfg)?),
        };
        let trace = out_path(&run.out, &format!("{name}_trace.csv"));
        write_trace(&trace, &result.trace)?;
        let out = BoundOutput::new(&result, Some(&trace), &manifest);
        write_json(&out_path(&run.out, &format!("{name}.json")), &out)?;
        outputs.insert(
            name.into(),
            serde_json::to_value(&out).expect("output is serializable"),
        );
    }
    if outputs.len() == 1 {
        print_json(&outputs.into_iter().next().expect("one output").1);
    } else {
        print_json(&outputs);
    }
    Ok(0)
}

#[derive(Serialize)]
struct OciRow {
    a: f64,
    classic: f64,
    optimal: f64,
}

fn cmd_oci(
    a: Option<f64>,
    d: Vec<f64>,
    mean: Option<f64>,
    sweep: Option<usize>,
    range: Option<Vec<f64>>,
    csv: Option<PathBuf>,
) -> Result<i32, Failure> {
    let d = DiameterVector::new(d)?;
    let shift = mean.unwrap_or(0.0);
    let row = |a: f64| -> Result<OciRow, Failure> {
        let margin = a - shift;
        Ok(OciRow {
            a,
            classic: classic_mcdiarmid(margin, &d),
            optimal: optimal_mcdiarmid(margin, &d)?.value,
        })
    };
    match sweep {
        Some(n) => {
            if n < 2 {
                return Err(Failure::usage("--sweep needs at least 2 rows"));
            }
            let (lo, hi) = match range.as_deref() {
                Some([lo, hi]) if lo <= hi => (*lo, *hi),
                Some(_) => return Err(Failure::usage("--range must be lo,hi with lo <= hi")),
                None => (shift, shift + d.as_slice().iter().sum::<f64>()),
            };
            let rows = (0..n)
                .map(|i| row(lo + (hi - lo) * i as f64 / (n - 1) as f64))
                .collect::<Result<Vec<_>, _>>()?;
            let bytes = csv_bytes(rows, &["a", "classic", "optimal"])?;
            match csv {
                Some(path) => write_atomic(&path, &bytes)?,
                None => print!("{}", String::from_utf8(bytes).expect("csv is utf-8")),
            }
        }
        None => {
            let a = a.ok_or_else(|| Failure::usage("-a is required without --sweep"))?;
            let detail = optimal_mcdiarmid(a - shift, &d)?;
            print_json(&serde_json::json!({
                "a": a,
                "mean": mean,
                "diameters": d.as_slice(),
                "optimal": detail.value,
                "classic": classic_mcdiarmid(a - shift, &d),
                "detail": detail,
                "manifest": RunManifest::new("oci", None, None),
            }));
        }
    }
    Ok(0)
}

fn cmd_certify(spec: &Path, epsilon: Option<f64>, run: &RunArgs) -> Result<i32, Failure> {
    let problem = load_problem(spec)?;
    let eps = epsilon_of(epsilon, &problem)?;
    let (cfg, manifest) = run.resolve("certify", spec)?;
    let upper = solve_upper(&problem, &cfg)?;
    let lower = solve_lower(&problem, &cfg)?;
    let verdict = certify(lower.value, upper.value, eps)?;
    let out = serde_json::json!({
        "verdict": verdict,
        "upper": BoundOutput::new(&upper, None, &manifest),
        "lower": BoundOutput::new(&lower, None, &manifest),
        "manifest": manifest,
    });
    write_json(&out_path(&run.out, "certify.json"), &out)?;
    print_json(&out);
    Ok(if verdict.decision == Decision::CannotDecide {
        EXIT_UNDECIDED
    } else {
        0
    })
}

fn cmd_intervals(
    spec: &Path,
    functional: &Path,
    epsilon: Option<f64>,
    run: &RunArgs,
) -> Result<i32, Failure> {
    let problem = load_problem(spec)?;
    let phi: ExperimentFunctional = load_json(functional)?;
    let eps = epsilon_of(epsilon, &problem)?;
    let (cfg, manifest) = run.resolve("intervals", spec)?;
    let j = safe_unsafe_intervals(&problem, &phi, eps, &cfg)?;
    let out = serde_json::json!({
        "functional": phi.name,
        "epsilon": eps,
        "safe": j.safe,
        "unsafe": j.unsafe_,
        "manifest": manifest,
    });
    write_json(&out_path(&run.out, "intervals.json"), &out)?;
    print_json(&out);
    Ok(0)
}

fn cmd_experiments(spec: &Path, candidates: &Path, run: &RunArgs) -> Result<i32, Failure> {
    let problem = load_problem(spec)?;
    let candidates: Vec<ExperimentFunctional> = load_json(candidates)?;
    let (cfg, manifest) = run.resolve("experiments", spec)?;
    let ranking = most_predictive_experiment(&problem, &candidates, &cfg)?;
    let out = serde_json::json!({ "ranking": ranking, "manifest": manifest });
    write_json(&out_path(&run.out, "experiments.json"), &out)?;
    print_json(&out);
    Ok(0)
}

fn cmd_osc(spec: &Path, axis: Option<usize>, out: Option<&Path>) -> Result<i32, Failure> {
    let problem = load_problem(spec)?;
    let ResponseMode::Known(model) = &problem.response else {
        return Err(Failure::usage(
            "oscillation needs a known response, not an oscillation class",
        ));
    };
    let axes: Vec<usize> = match axis {
        Some(i) => vec![i],
        None => (0..problem.domain.dim()).collect(),
    };
    let search = OscillationSearch::default();
    let results = axes
        .into_iter()
        .map(|i| oscillation(model, i, &search))
        .collect::<Result<Vec<_>, _>>()?;
    let diameters: Vec<f64> = results.iter().map(|r| r.value).collect();
    let doc = serde_json::json!({
        "oscillations": results,
        "diameters": diameters,
        "manifest": RunManifest::new("osc", Some(spec), out),
    });
    if let Some(dir) = out {
        write_json(&out_path(dir, "osc.json"), &doc)?;
    }
    print_json(&doc);
    Ok(0)
}

fn run(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Solve {
            spec,
            upper,
            lower,
            run,
        } => cmd_solve(&spec, upper, lower, &run),
        Command::Oci {
            a,
            diameters,
            mean,
            sweep,
            range,
            csv,
        } => cmd_oci(a, diameters, mean, sweep, range, csv),
        Command::Certify { spec, epsilon, run } => cmd_certify(&spec, epsilon, &run),
        Command::Intervals {
            spec,
            functional,
            epsilon,
            run,
        } => cmd_intervals(&spec, &functional, epsilon, &run),
        Command::Experiments {
            spec,
            candidates,
            run,
        } => cmd_experiments(&spec, &candidates, &run),
        Command::Osc { spec, axis, out } => cmd_osc(&spec, axis, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", Failure::usage(e.to_string().trim_end()).to_json());
            return ExitCode::from(failure::EXIT_INPUT as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code as u8)
        }
    }
}
