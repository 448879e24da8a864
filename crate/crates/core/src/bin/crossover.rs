use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crossover_core::design::ExactDesign;
use crossover_core::dropout::DropoutMechanism;
use crossover_core::evaluation::{
    compare, evaluate, parse_grid, sweep_csv, sweep_theta, DesignSource, EvalOptions, Method,
    DEFAULT_EXACT_BUDGET,
};
use crossover_core::fixtures::fixture;
use crossover_core::information::Criterion;
use crossover_core::io::{design_to_json, read_design, read_mechanism, to_json, DesignFile};
use crossover_core::qsolver::{closed_form, solve_minimax_with, MinimaxOptions};
use crossover_core::search::{exact_search, SearchOptions};
use crossover_core::sequence::DEFAULT_ENUM_BUDGET;
use crossover_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "crossover",
    version,
    about = "Crossover designs under random subject dropout"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the minimax problem and print the optimality certificate.
    Solve {
        #[arg(long)]
        mech: PathBuf,
        #[arg(long)]
        t: usize,
        /// Only report a closed-form certificate; fail if none applies.
        #[arg(long)]
        closed_form_only: bool,
        #[arg(long, default_value_t = DEFAULT_ENUM_BUDGET)]
        budget: u128,
    },
    /// Search for an exact design with n subjects.
    Design {
        #[arg(long)]
        mech: PathBuf,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        search: SearchArgs,
        /// Also write the design file here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expected criterion values, surrogate values and efficiency bounds.
    Evaluate {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        mech: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Ratios of expected criterion values and variances of two designs.
    Compare {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(
            long,
            conflicts_with = "baseline_fixture",
            required_unless_present = "baseline_fixture"
        )]
        baseline: Option<PathBuf>,
        #[arg(long)]
        baseline_fixture: Option<String>,
        #[arg(long)]
        mech: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Evaluate along a = (0, ..., 0, theta, 1 - theta) and print CSV.
    Sweep {
        #[arg(long, conflicts_with_all = ["fixture", "search"])]
        design: Option<PathBuf>,
        #[arg(long, conflicts_with = "search")]
        fixture: Option<String>,
        /// Re-run the exact search at every grid point.
        #[arg(long)]
        search: bool,
        /// Treatments and subjects for --search.
        #[arg(long, requires = "search")]
        t: Option<usize>,
        #[arg(long, requires = "search")]
        n: Option<usize>,
        /// Periods; required with --search.
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, default_value = "0.05:0.95:0.05")]
        theta_grid: String,
        #[command(flatten)]
        search_args: SearchArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    design: Option<PathBuf>,
    #[arg(long)]
    fixture: Option<String>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
}

impl SearchArgs {
    fn options(&self, seed: u64) -> SearchOptions {
        SearchOptions {
            seed,
            restarts: self.restarts,
            iters: self.iters,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    A,
    D,
    E,
    T,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Mc,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum, default_value = "all")]
    criterion: CriterionArg,
    #[arg(long, value_enum, default_value = "exact")]
    method: MethodArg,
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
    /// Monte Carlo seed; with `sweep --search` also the search seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EXACT_BUDGET)]
    exact_budget: u128,
}

impl EvalArgs {
    fn criteria(&self) -> Vec<Criterion> {
        match self.criterion {
            CriterionArg::A => vec![Criterion::A],
            CriterionArg::D => vec![Criterion::D],
            CriterionArg::E => vec![Criterion::E],
            CriterionArg::T => vec![Criterion::T],
            CriterionArg::All => Criterion::ALL.to_vec(),
        }
    }

    fn options(&self) -> EvalOptions {
        EvalOptions {
            method: match self.method {
                MethodArg::Exact => Method::Exact,
                MethodArg::Mc => Method::MonteCarlo,
            },
            reps: self.reps,
            seed: self.seed,
            exact_budget: self.exact_budget,
        }
    }
}

/// Design plus mechanism from `--design/--fixture` and an optional `--mech`.
fn load(design: &DesignArgs, mech: &Option<PathBuf>) -> Result<(ExactDesign, DropoutMechanism)> {
    load_one(&design.design, &design.fixture, mech)
}

fn load_one(
    path: &Option<PathBuf>,
    name: &Option<String>,
    mech: &Option<PathBuf>,
) -> Result<(ExactDesign, DropoutMechanism)> {
    let (design, default_mech) = match (path, name) {
        (Some(p), _) => (read_design(p)?, None),
        (None, Some(n)) => {
            let f = fixture(n)?;
            (f.design, Some(f.mechanism))
        }
        (None, None) => return Err(Error::Invalid("give --design or --fixture".into())),
    };
    let mech = match (mech, default_mech) {
        (Some(p), _) => read_mechanism(p)?,
        (None, Some(m)) => m,
        (None, None) => return Err(Error::Invalid("--mech is required with --design".into())),
    };
    Ok((design, mech))
}

fn ratio_value(r: Option<f64>) -> Value {
    r.map_or_else(|| json!("undefined"), |v| json!(v))
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Solve {
            mech,
            t,
            closed_form_only,
            budget,
        } => {
            let mech = read_mechanism(&mech)?;
            let cert = if closed_form_only {
                closed_form(&mech, t).ok_or_else(|| {
                    Error::Infeasible("no closed-form regime applies to this mechanism".into())
                })?
            } else {
                let opts = MinimaxOptions {
                    enumeration_budget: budget,
                    ..Default::default()
                };
                solve_minimax_with(&mech, t, &opts)?
            };
            to_json(&cert.to_file())
        }
        Command::Design {
            mech,
            t,
            n,
            seed,
            search,
            out,
        } => {
            let mech = read_mechanism(&mech)?.with_subjects(n)?;
            let cert = solve_minimax_with(&mech, t, &MinimaxOptions::default())?;
            let (design, report) = exact_search(n, &cert, &mech, &search.options(seed))?;
            if let Some(path) = out {
                fs::write(path, design_to_json(&design)?)?;
            }
            to_json(&json!({ "design": DesignFile::from_design(&design), "search": report }))
        }
        Command::Evaluate { design, mech, eval } => {
            let (design, mech) = load(&design, &mech)?;
            let cert = solve_minimax_with(&mech, design.treatments(), &MinimaxOptions::default())?;
            let reports = evaluate(&design, &mech, &eval.criteria(), &cert, &eval.options())?;
            to_json(&json!({
                "design": design.name(),
                "mechanism": mech.to_spec(),
                "certificate": {
                    "x_star": cert.x_star,
                    "y_star": cert.y_star,
                    "regime": cert.regime,
                },
                "reports": reports,
            }))
        }
        Command::Compare {
            design,
            baseline,
            baseline_fixture,
            mech,
            eval,
        } => {
            let (d, mech_d) = load(&design, &mech)?;
            let (b, _) = load_one(&baseline, &baseline_fixture, &mech)?;
            let rows = compare(&d, &b, &mech_d, &eval.criteria(), &eval.options())?;
            let rows: Vec<Value> = rows
                .iter()
                .map(|c| {
                    json!({
                        "criterion": c.criterion,
                        "phi0": c.phi0,
                        "phi0_baseline": c.phi0_baseline,
                        "v_phi": c.v_phi,
                        "v_phi_baseline": c.v_phi_baseline,
                        "phi0_ratio": ratio_value(c.phi0_ratio),
                        "v_ratio": ratio_value(c.v_ratio),
                    })
                })
                .collect();
            to_json(&rows)
        }
        Command::Sweep {
            design,
            fixture: name,
            search,
            t,
            n,
            p,
            theta_grid,
            search_args,
            eval,
        } => {
            let grid = parse_grid(&theta_grid)?;
            let (source, periods) = if search {
                let (t, n, p) = match (t, n, p) {
                    (Some(t), Some(n), Some(p)) => (t, n, p),
                    _ => return Err(Error::Invalid("--search needs --t, --n and --p".into())),
                };
                (
                    DesignSource::Search {
                        t,
                        n,
                        opts: search_args.options(eval.seed),
                    },
                    p,
                )
            } else {
                let d = match (design, name) {
                    (Some(path), _) => read_design(&path)?,
                    (None, Some(name)) => fixture(&name)?.design,
                    (None, None) => {
                        return Err(Error::Invalid(
                            "give --design, --fixture or --search".into(),
                        ))
                    }
                };
                let periods = d.periods();
                (DesignSource::Fixed(d), periods)
            };
            let rows = sweep_theta(&source, periods, &eval.criteria(), &grid, &eval.options())?;
            Ok(sweep_csv(&rows))
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("CROSSOVER_THREADS") {
        match v.parse::<usize>() {
            Ok(k) if k > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global();
            }
            _ => {
                eprintln!("error: CROSSOVER_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
