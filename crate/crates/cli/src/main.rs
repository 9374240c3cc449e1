use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use roommates::bound_optimizer::{tstar_closed_form, tstar_grid_search};
use roommates::combinatorics::{double_factorial, single_cycle_count, CountValue};
use roommates::estimators::{
    estimate_conditional_two_point, estimate_expected_x_with_rate, estimate_g_pi_frequency, default_rate,
};
use roommates::experiments::{
    run_conditional_census, run_ex_scaling, run_scaling, ExperimentConfig, ExperimentKind,
};
use roommates::instances::parse_instance;
use roommates::solvers::{enumerate_stable, irving_solve, EnumerateOptions, Outcome, DEFAULT_ENUMERATION_CAP};
use roommates::{Error, Matching, RngStream};

#[derive(Parser)]
#[command(name = "roommates", version, about = "Stable roommates with random preferences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fraction of random instances that admit a stable matching.
    Scaling(ExperimentArgs),
    /// Weighted census of stable single-cycle neighbors given a stable matching.
    Census(ExperimentArgs),
    /// Importance estimates of the expected number of stable matchings.
    ExScaling(ExperimentArgs),
    /// Run Irving's algorithm on an instance file.
    Solve { file: PathBuf },
    /// Enumerate all stable matchings of an instance file.
    CensusInstance {
        file: PathBuf,
        /// Reference matching for the distance histogram, e.g. "1-2 3-4".
        #[arg(long)]
        reference: Option<String>,
        /// Stop after this many stable matchings (lifts the size cap).
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: usize,
    },
    /// Exact matching and single-cycle counts.
    Counts {
        #[arg(long)]
        n: u64,
        /// Only this half-length; all of 2..=n/2 otherwise.
        #[arg(long)]
        nu: Option<u64>,
    },
    /// The optimized decay exponent.
    Tstar {
        /// Also run the grid search at this resolution.
        #[arg(long)]
        grid: Option<f64>,
    },
    /// Single importance-sampling estimates.
    #[command(subcommand)]
    Estimate(EstimateCommand),
}

#[derive(Subcommand)]
enum EstimateCommand {
    /// E[X] by importance sampling.
    Ex {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        common: EstimateArgs,
        #[arg(long)]
        rate: Option<f64>,
    },
    /// P(Π1 stable | Π stable), normalized by its asymptotic value.
    TwoPoint {
        #[arg(long)]
        n: usize,
        /// Half-lengths of the difference cycles, e.g. "2,2".
        #[arg(long, value_delimiter = ',', default_value = "2")]
        cycles: Vec<usize>,
        #[command(flatten)]
        common: EstimateArgs,
    },
    /// Weighted frequency of the quasirandomness event.
    Gpi {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        common: EstimateArgs,
    },
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON config; flags given here override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "n", value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// CSV path; a JSON sidecar is written next to it. Stdout otherwise.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    nu_cap: Option<usize>,
    #[arg(long)]
    enumerate_up_to: Option<usize>,
}

impl ExperimentArgs {
    fn resolve(self, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
                let mut v: Value = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                if let Some(obj) = v.as_object_mut() {
                    match obj.get("kind") {
                        Some(k) if *k != json!(kind) => {
                            return Err(Error::Config(format!(
                                "{} is a {k} config, not {}",
                                path.display(),
                                json!(kind)
                            )))
                        }
                        _ => {
                            obj.insert("kind".into(), json!(kind));
                        }
                    }
                }
                serde_json::from_value(v).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig {
                kind,
                ..Default::default()
            },
        };
        if let Some(v) = self.n_grid {
            c.n_grid = v;
        }
        if let Some(v) = self.replicates {
            c.replicates = v;
        }
        if let Some(v) = self.seed {
            c.master_seed = v;
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if let Some(v) = self.output {
            c.output = Some(v);
        }
        if let Some(v) = self.samples {
            c.samples = v;
        }
        if self.rate.is_some() {
            c.rate = self.rate;
        }
        if let Some(v) = self.nu_cap {
            c.nu_cap = v;
        }
        if let Some(v) = self.enumerate_up_to {
            c.enumerate_up_to = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn emit(csv: &str, sidecar: &Value, output: Option<&PathBuf>, write: impl FnOnce(&Path) -> Result<PathBuf, Error>) -> Result<(), Error> {
    match output {
        Some(path) => {
            let side = write(path)?;
            eprintln!("wrote {} and {}", path.display(), side.display());
        }
        None => {
            write_stdout(csv);
            eprintln!("{}", serde_json::to_string(sidecar)?);
        }
    }
    Ok(())
}

fn count_json(c: &CountValue) -> Value {
    json!({
        "exact": c.exact.as_ref().map(|v| v.to_string()),
        "log": c.log_value,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Scaling(args) => {
            let c = args.resolve(ExperimentKind::Scaling)?;
            let out = run_scaling(&c)?;
            emit(&out.csv, &out.sidecar, c.output.as_ref(), |p| out.write(p))
        }
        Command::Census(args) => {
            let c = args.resolve(ExperimentKind::Census)?;
            let out = run_conditional_census(&c)?;
            emit(&out.csv, &out.sidecar, c.output.as_ref(), |p| out.write(p))
        }
        Command::ExScaling(args) => {
            let c = args.resolve(ExperimentKind::ExScaling)?;
            let out = run_ex_scaling(&c)?;
            emit(&out.csv, &out.sidecar, c.output.as_ref(), |p| out.write(p))
        }
        Command::Solve { file } => {
            let text = std::fs::read_to_string(&file).map_err(|e| io_error(&file, e))?;
            let p = parse_instance(&text)?;
            let r = irving_solve(&p);
            let matching = match &r.outcome {
                Outcome::Found(m) => Some(m.to_string()),
                Outcome::NoneExists => None,
            };
            print_json(&json!({
                "n": p.n(),
                "exists": r.exists(),
                "matching": matching,
                "phase1_proposals": r.phase1_proposals,
                "eliminated_rotations": r.eliminated_rotations,
            }))
        }
        Command::CensusInstance {
            file,
            reference,
            limit,
            cap,
        } => {
            let text = std::fs::read_to_string(&file).map_err(|e| io_error(&file, e))?;
            let p = parse_instance(&text)?;
            let reference = reference.map(|r| r.parse::<Matching>()).transpose()?;
            let opts = EnumerateOptions {
                limit,
                cap,
                materialize: true,
                reference,
            };
            let r = enumerate_stable(&p, &opts)?;
            let per_distance: Vec<Value> = r
                .per_distance
                .iter()
                .map(|(&(mu, len), &count)| json!({"cycles": mu, "edges": len, "count": count}))
                .collect();
            print_json(&json!({
                "n": p.n(),
                "x": r.x,
                "truncated": r.truncated,
                "stable": r.stable_list.unwrap_or_default().iter().map(|m| m.to_string()).collect::<Vec<_>>(),
                "per_distance": per_distance,
            }))
        }
        Command::Counts { n, nu } => {
            let nus: Vec<u64> = match nu {
                Some(v) => vec![v],
                None => (2..=n / 2).collect(),
            };
            let singles = nus
                .iter()
                .map(|&v| Ok(json!({"nu": v, "count": count_json(&single_cycle_count(n, v)?)})))
                .collect::<Result<Vec<_>, Error>>()?;
            if n < 2 || n % 2 != 0 {
                return Err(Error::Domain(format!("n must be even and positive, got {n}")));
            }
            print_json(&json!({
                "n": n,
                "perfect_matchings": count_json(&double_factorial(n - 1)),
                "single_cycle": singles,
            }))
        }
        Command::Tstar { grid } => {
            let closed = tstar_closed_form();
            let grid = grid.map(tstar_grid_search).transpose()?;
            print_json(&json!({ "closed_form": closed, "grid": grid }))
        }
        Command::Estimate(e) => match e {
            EstimateCommand::Ex { n, common, rate } => {
                check_n(n)?;
                let rate = rate.unwrap_or_else(|| default_rate(n));
                let est = estimate_expected_x_with_rate(n, common.samples, &RngStream::new(common.seed, 0), rate)?;
                if est.degenerate {
                    eprintln!("warning: effective sample size {:.1} is below 1% of samples", est.ess);
                }
                print_json(&json!({"n": n, "rate": rate, "estimate": est}))
            }
            EstimateCommand::TwoPoint { n, cycles, common } => {
                check_n(n)?;
                let pi = Matching::consecutive(n)?;
                let pi1 = pi.with_cycles(&cycles)?;
                let est = estimate_conditional_two_point(&pi, &pi1, common.samples, &RngStream::new(common.seed, 0))?;
                if est.outside_regime {
                    eprintln!("warning: the difference has more than n^(1/4) edges");
                }
                print_json(&json!({"n": n, "cycles": cycles, "estimate": est}))
            }
            EstimateCommand::Gpi { n, common } => {
                check_n(n)?;
                let f = estimate_g_pi_frequency(n, common.samples, &RngStream::new(common.seed, 0))?;
                print_json(&json!({"n": n, "frequency": f}))
            }
        },
    }
}

fn check_n(n: usize) -> Result<(), Error> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::Domain(format!("n must be even and >= 4, got {n}")));
    }
    Ok(())
}

fn print_json(v: &Value) -> Result<(), Error> {
    write_stdout(&(serde_json::to_string_pretty(v)? + "\n"));
    Ok(())
}

/// Writes to stdout; a closed pipe (e.g. `| head`) ends output quietly.
fn write_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
        std::process::exit(0);
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ResourceCap(_) => 3,
        Error::Io { .. } | Error::Csv(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
