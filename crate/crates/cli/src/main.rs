//! `hk`: command-line front end for the Hilbert-Kamke laboratory.

mod artifact;
mod commands;
mod experiment;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use hk_core::HkError;
use serde_json::json;

use crate::artifact::{execute, parse_blob, render_csv, write_files, Cache, Outcome, Run};
use crate::commands::{CountChoice, DensityArgs, DensityChoice};
use crate::experiment::{ExperimentConfig, Validation};

const EXIT_VALIDATION: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "hk",
    version,
    about = "Counts, exponential sums, densities and arc experiments for Hilbert-Kamke systems"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Directory for the JSON, CSV and summary artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Bypass the result cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Print the full JSON result instead of the summary.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Exact number of solutions in a box.
    Count {
        #[arg(long)]
        s: usize,
        #[arg(long)]
        k: usize,
        /// Target n_1,...,n_k.
        #[arg(
            long,
            value_delimiter = ',',
            allow_negative_numbers = true,
            required = true
        )]
        n: Vec<i64>,
        /// Box LOWER,UPPER for every variable (default [0, n_1]).
        #[arg(long = "box", value_delimiter = ',', allow_negative_numbers = true)]
        bounds: Vec<i64>,
        #[arg(long, value_enum, default_value = "auto")]
        method: CountChoice,
        #[arg(long, default_value_t = 1_000_000_000)]
        budget: u64,
    },
    /// Vinogradov mean value J_{t,k}(X), with a log-log slope for three or more X.
    Vinogradov {
        #[arg(long)]
        t: usize,
        #[arg(long)]
        k: usize,
        #[arg(long = "X", value_delimiter = ',', required = true)]
        x: Vec<u64>,
        #[arg(long, default_value_t = 1_000_000_000)]
        budget: u64,
    },
    /// Weyl sums, complete sums and oscillatory integrals.
    Sums {
        #[command(subcommand)]
        which: SumCommand,
    },
    /// Necessary local conditions and local solubility.
    Local {
        #[arg(long)]
        s: usize,
        #[arg(long)]
        k: usize,
        #[arg(
            long,
            value_delimiter = ',',
            allow_negative_numbers = true,
            required = true
        )]
        n: Vec<i64>,
        #[arg(long, default_value_t = 5_000_000)]
        budget: u64,
    },
    /// Singular series and singular integral.
    Densities {
        #[arg(long)]
        s: usize,
        #[arg(long)]
        k: usize,
        #[arg(
            long,
            value_delimiter = ',',
            allow_negative_numbers = true,
            required = true
        )]
        n: Vec<i64>,
        #[arg(long, value_enum, default_value = "both")]
        method: DensityChoice,
        /// Largest modulus in the truncated series.
        #[arg(long = "Q", default_value_t = 100)]
        q: u64,
        /// Largest prime in the Euler product.
        #[arg(long, default_value_t = 97)]
        p_max: u64,
        #[arg(long, default_value_t = 0.02)]
        tol: f64,
        #[arg(long, default_value_t = 200_000_000)]
        budget: u64,
    },
    /// Classify points of the torus into the arc classes W1..W4.
    Arcs {
        #[arg(long)]
        k: usize,
        #[arg(long = "X")]
        x: f64,
        /// Also report membership of alpha_k in the major arcs M(Q).
        #[arg(long = "Q")]
        q: Option<f64>,
        /// CSV with one point per row ("-" for stdin).
        #[arg(long, conflicts_with = "alpha")]
        input: Option<PathBuf>,
        /// A single point alpha_1,...,alpha_k.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        alpha: Vec<f64>,
    },
    /// Run an experiment described by a JSON configuration.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Override the configuration's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Built-in consistency checks.
    Verify {
        #[command(subcommand)]
        which: VerifyCommand,
    },
    /// Merge result blobs in a directory into one CSV per experiment family.
    Report { dir: PathBuf },
}

#[derive(Subcommand)]
enum SumCommand {
    /// f_k(alpha; X).
    Weyl {
        #[arg(
            long,
            value_delimiter = ',',
            allow_negative_numbers = true,
            required = true
        )]
        alpha: Vec<f64>,
        #[arg(long = "X")]
        x: f64,
    },
    /// S(q, a).
    Complete {
        #[arg(long)]
        q: u64,
        #[arg(
            long,
            value_delimiter = ',',
            allow_negative_numbers = true,
            required = true
        )]
        a: Vec<i64>,
    },
    /// I(beta; X).
    Integral {
        #[arg(
            long,
            value_delimiter = ',',
            allow_negative_numbers = true,
            required = true
        )]
        beta: Vec<f64>,
        #[arg(long = "X")]
        x: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Shift re-indexing, resolution identity and binomial transform.
    Identities {
        #[arg(long)]
        k: usize,
        #[arg(long = "X")]
        x: u64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact-lattice integral against meet-in-the-middle counts.
    Lattice {
        #[arg(long)]
        s: usize,
        #[arg(long)]
        k: usize,
        #[arg(long = "X")]
        x: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1 << 32)]
        budget: u64,
    },
    /// Meet-in-the-middle against naive enumeration.
    Counting {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1 << 32)]
        budget: u64,
    },
}

/// A verification ran but some check failed.
#[derive(Debug)]
struct ChecksFailed;

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("one or more checks failed")
    }
}

impl std::error::Error for ChecksFailed {}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Validation>() {
            return EXIT_VALIDATION;
        }
        if let Some(h) = cause.downcast_ref::<HkError>() {
            return match h {
                HkError::BudgetExceeded { .. } => EXIT_BUDGET,
                HkError::InvalidInput(_)
                | HkError::InvalidProfile(_)
                | HkError::NonFinite(_)
                | HkError::Aliasing { .. }
                | HkError::Overflow(_) => EXIT_VALIDATION,
                HkError::ToleranceNotReached { .. } | HkError::NotConverged(_) => EXIT_INTERNAL,
            };
        }
    }
    EXIT_INTERNAL
}

struct Ctx {
    cache: Cache,
    out: Option<PathBuf>,
    json: bool,
}

impl Ctx {
    /// Runs (or fetches) an operation, writes artifacts and prints either
    /// the summary or the JSON blob.
    fn run<F>(
        &self,
        operation: &str,
        stem: &str,
        inputs: serde_json::Value,
        seed: Option<u64>,
        compute: F,
    ) -> Result<artifact::Artifact>
    where
        F: FnOnce() -> Result<Outcome>,
    {
        let (blob, err) = match execute(&self.cache, operation, inputs, seed, compute) {
            Run::Done(b) => (b, None),
            Run::Partial(b, e) => (b, Some(e)),
            Run::Failed(e) => return Err(e),
        };
        let a = parse_blob(&blob)?;
        if let Some(dir) = &self.out {
            let stem = format!("{stem}-{}", &a.meta.config_hash[..12]);
            for p in write_files(dir, &stem, &blob)? {
                log::info!("wrote {}", p.display());
            }
        }
        if let Some(e) = err {
            return Err(e.context(format!(
                "{operation} stopped early; partial artifact flagged partial"
            )));
        }
        if self.json {
            print!("{blob}");
        } else {
            println!("{}", a.summary.trim_end());
        }
        Ok(a)
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.common;
    let ctx = Ctx {
        cache: Cache::from_env(common.no_cache),
        out: common.out.clone(),
        json: common.json,
    };
    match cli.command {
        Command::Count {
            s,
            k,
            n,
            bounds,
            method,
            budget,
        } => {
            let bounds = commands::parse_pair(&bounds)?;
            let inputs = json!({ "s": s, "k": k, "n": n, "box": bounds, "method": method, "budget": budget });
            ctx.run("count", "count", inputs, None, || {
                Ok(commands::count(s, k, &n, bounds, method, budget)?.1)
            })?;
        }
        Command::Vinogradov { t, k, x, budget } => {
            let inputs = json!({ "t": t, "k": k, "X": x, "budget": budget });
            let a = ctx.run("vinogradov", "vinogradov", inputs, None, || {
                commands::vinogradov(t, k, &x, budget)
            })?;
            if !ctx.json {
                if let Some(t) = &a.table {
                    for line in artifact::footer(t) {
                        println!("{line}");
                    }
                }
            }
        }
        Command::Sums { which } => match which {
            SumCommand::Weyl { alpha, x } => {
                let inputs = json!({ "alpha": alpha, "X": x });
                ctx.run("sums/weyl", "weyl", inputs, None, || {
                    commands::weyl(&alpha, x)
                })?;
            }
            SumCommand::Complete { q, a } => {
                let inputs = json!({ "q": q, "a": a });
                ctx.run("sums/complete", "complete", inputs, None, || {
                    commands::complete(q, &a)
                })?;
            }
            SumCommand::Integral { beta, x, tol } => {
                let inputs = json!({ "beta": beta, "X": x, "tol": tol });
                ctx.run("sums/integral", "integral", inputs, None, || {
                    commands::integral(&beta, x, tol)
                })?;
            }
        },
        Command::Local { s, k, n, budget } => {
            let inputs = json!({ "s": s, "k": k, "n": n, "budget": budget });
            ctx.run("local", "local", inputs, None, || {
                commands::local(s, k, &n, budget)
            })?;
        }
        Command::Densities {
            s,
            k,
            n,
            method,
            q,
            p_max,
            tol,
            budget,
        } => {
            let inputs = json!({
                "s": s, "k": k, "n": n, "method": format!("{method:?}").to_lowercase(),
                "Q": q, "p_max": p_max, "tol": tol, "budget": budget,
            });
            let args = DensityArgs {
                q_max: q,
                p_max,
                tol,
                budget,
            };
            ctx.run("densities", "densities", inputs, None, || {
                commands::densities(s, k, &n, method, &args)
            })?;
        }
        Command::Arcs {
            k,
            x,
            q,
            input,
            alpha,
        } => {
            let points = match (input, alpha.is_empty()) {
                (Some(path), _) => commands::read_points(&commands::read_input(&path)?, k)?,
                (None, false) => vec![alpha],
                (None, true) => {
                    return Err(
                        Validation(vec!["input: give --input FILE or --alpha".into()]).into(),
                    )
                }
            };
            let inputs = json!({ "k": k, "X": x, "Q": q, "points": points });
            let a = ctx.run("arcs", "arcs", inputs, None, || {
                commands::arcs(&points, k, x, q)
            })?;
            if !ctx.json && ctx.out.is_none() {
                if let Some(csv) = render_csv(&a)? {
                    print!("{csv}");
                }
            }
        }
        Command::Experiment { config, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if seed.is_some() {
                cfg.seed = seed;
            }
            let ctx = Ctx {
                out: ctx.out.or_else(|| cfg.out.clone()),
                ..ctx
            };
            let op = format!("experiment/{}", cfg.experiment.name());
            let inputs = cfg.inputs();
            let hash = artifact::config_hash(&op, &inputs);
            let name = cfg.name.clone();
            ctx.run(&op, &name, inputs, Some(cfg.effective_seed()), || {
                experiment::run(&cfg, &hash)
            })?;
        }
        Command::Verify { which } => {
            let (op, inputs, lines) = match which {
                VerifyCommand::Identities { k, x, trials, seed } => (
                    "verify/identities",
                    json!({ "k": k, "X": x, "trials": trials, "seed": seed }),
                    commands::verify_identities(k, x, trials, seed)?,
                ),
                VerifyCommand::Lattice {
                    s,
                    k,
                    x,
                    trials,
                    seed,
                    budget,
                } => (
                    "verify/lattice",
                    json!({ "s": s, "k": k, "X": x, "trials": trials, "seed": seed }),
                    commands::verify_lattice(s, k, x, trials, seed, budget)?,
                ),
                VerifyCommand::Counting {
                    trials,
                    seed,
                    budget,
                } => (
                    "verify/counting",
                    json!({ "trials": trials, "seed": seed }),
                    commands::verify_counting(trials, seed, budget)?,
                ),
            };
            let passed = lines.iter().all(|l| l.passed);
            let no_cache = Ctx {
                cache: Cache::from_env(true),
                ..ctx
            };
            let stem = op.replace('/', "-");
            no_cache.run(op, &stem, inputs, None, || {
                Ok(commands::checks_outcome(&lines))
            })?;
            if !passed {
                return Err(ChecksFailed.into());
            }
        }
        Command::Report { dir } => {
            let out = ctx.out.clone().unwrap_or_else(|| dir.join("report"));
            let r = report::report(&dir, &out)?;
            for f in &r.files {
                log::info!("wrote {}", f.display());
            }
            print!("{}", r.text);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
