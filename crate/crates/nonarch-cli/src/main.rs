use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use num_traits::Zero;
use serde_json::{json, Value};

use nonarch_core::boundedness::{certify, default_max_iter, MatGroup, Verdict};
use nonarch_core::padic::rational_string;
use nonarch_core::{
    list_scenarios, prokhorov, prokhorov_oracle, run_scenario, wasserstein, word_string,
    FieldSpec, FiniteMeasure, Matrix, SplitNorm,
};

/// Exact computations over Q_p: norm distances, boundedness certificates,
/// measure transport, and scripted scenario probes.
#[derive(Parser)]
#[command(name = "nonarch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Prime of the ground field Q_p.
    #[arg(long, global = true, default_value_t = 3)]
    p: u64,
    /// Emit machine-readable JSON instead of the human report.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for randomized sampling inside scenarios.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Goldman-Iwahori distance between two split norms.
    DistNorms {
        /// JSON file with the first norm ({"basis", "weights", "denominator"}).
        #[arg(long)]
        a: PathBuf,
        /// JSON file with the second norm.
        #[arg(long)]
        b: PathBuf,
    },
    /// Certify a finitely generated matrix group bounded or unbounded.
    Bounded {
        /// JSON file with an array of square generator matrices (row-major,
        /// entries as "num/den" strings or integers).
        #[arg(long)]
        gens: PathBuf,
        /// Lattice-closure iteration cap; defaults to NONARCH_MAX_ITER or 64.
        #[arg(long)]
        max_iter: Option<usize>,
        /// Word length probed by the Newton-polygon unboundedness test.
        #[arg(long, default_value_t = 4)]
        max_word_len: usize,
    },
    /// Prokhorov distance between two finitely supported measures.
    Prokhorov {
        /// JSON file with the first measure ({"space", "atoms"}).
        #[arg(long)]
        mu: PathBuf,
        /// JSON file with the second measure.
        #[arg(long)]
        nu: PathBuf,
        /// Cross-check the flow computation against the subset oracle.
        #[arg(long)]
        oracle: bool,
    },
    /// Wasserstein distance (unit-capped costs) between two measures.
    Wasserstein {
        /// JSON file with the first measure.
        #[arg(long)]
        mu: PathBuf,
        /// JSON file with the second measure.
        #[arg(long)]
        nu: PathBuf,
    },
    /// Run one named scenario and check its assertions.
    Scenario { name: String },
    /// List the available scenario names.
    ListScenarios,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version go to stdout with success; bad usage is an input error
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_json(path: &Path) -> anyhow::Result<Value> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))
}

fn load_measure(field: FieldSpec, path: &Path) -> anyhow::Result<FiniteMeasure> {
    FiniteMeasure::from_json(field, &load_json(path)?)
        .with_context(|| format!("{} is not a valid measure", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let field = FieldSpec::new(cli.p).context("--p must be a prime")?;

    match cli.command {
        Command::DistNorms { a, b } => {
            let na = SplitNorm::from_json(field, &load_json(&a)?)
                .with_context(|| format!("{} is not a valid norm", a.display()))?;
            let nb = SplitNorm::from_json(field, &load_json(&b)?)
                .with_context(|| format!("{} is not a valid norm", b.display()))?;
            let dist = na.gi_distance(&nb)?;
            let (s_ab, s_ba) = na.equivalence_constant(&nb)?;
            if cli.json {
                println!(
                    "{}",
                    json!({
                        "gi_distance": rational_string(&dist),
                        "equivalence": [rational_string(&s_ab), rational_string(&s_ba)],
                        "homothetic": dist.is_zero(),
                    })
                );
            } else {
                println!("gi distance: {}", rational_string(&dist));
                println!(
                    "equivalence exponents: {}, {}",
                    rational_string(&s_ab),
                    rational_string(&s_ba)
                );
                println!("homothetic: {}", dist.is_zero());
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Bounded { gens, max_iter, max_word_len } => {
            let mats: Vec<Matrix> = serde_json::from_value(load_json(&gens)?)
                .with_context(|| format!("{} is not an array of matrices", gens.display()))?;
            let group = MatGroup::new(field, mats)?;
            let cert = certify(&group, max_iter.unwrap_or_else(default_max_iter), max_word_len)?;
            let (verdict, lattice, witness) = match cert.verdict() {
                Verdict::Bounded { lattice, .. } => {
                    ("bounded", json!(lattice.basis()), Value::Null)
                }
                Verdict::Unbounded { witness, .. } => ("unbounded", Value::Null, json!(witness)),
                Verdict::Inconclusive { .. } => ("inconclusive", Value::Null, Value::Null),
            };
            if cli.json {
                println!(
                    "{}",
                    json!({
                        "verdict": verdict,
                        "lattice": lattice,
                        "witness": witness,
                        "iterations": cert.iterations(),
                    })
                );
            } else {
                println!("verdict: {verdict}");
                println!("iterations: {}", cert.iterations());
                match cert.verdict() {
                    Verdict::Bounded { lattice, .. } => {
                        println!("invariant lattice basis:");
                        print!("{}", lattice.basis());
                    }
                    Verdict::Unbounded { witness, reason, slope } => {
                        println!("witness word: {}", word_string(witness));
                        println!("reason: {reason:?}");
                        if let Some(s) = slope {
                            println!("newton slope: {}", rational_string(s));
                        }
                    }
                    Verdict::Inconclusive { .. } => {
                        println!("no certificate within the iteration budget; raise --max-iter");
                    }
                }
            }
            Ok(if cert.is_inconclusive() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }

        Command::Prokhorov { mu, nu, oracle } => {
            let m = load_measure(field, &mu)?;
            let n = load_measure(field, &nu)?;
            let dist = prokhorov(&m, &n)?;
            let checked = if oracle { Some(prokhorov_oracle(&m, &n)?) } else { None };
            if cli.json {
                let mut out = json!({ "prokhorov": rational_string(&dist) });
                if let Some(o) = &checked {
                    out["oracle"] = Value::String(rational_string(o));
                }
                println!("{out}");
            } else {
                println!("prokhorov distance: {}", rational_string(&dist));
                if let Some(o) = &checked {
                    println!("subset oracle: {}", rational_string(o));
                }
            }
            if let Some(o) = checked {
                if o != dist {
                    eprintln!("flow result disagrees with the subset oracle");
                    return Ok(ExitCode::from(2));
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Wasserstein { mu, nu } => {
            let m = load_measure(field, &mu)?;
            let n = load_measure(field, &nu)?;
            let dist = wasserstein(&m, &n)?;
            if cli.json {
                println!("{}", json!({ "wasserstein": rational_string(&dist) }));
            } else {
                println!("wasserstein distance: {}", rational_string(&dist));
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Scenario { name } => {
            let report = run_scenario(&name, field, cli.seed)?;
            if cli.json {
                println!("{}", report.to_json());
            } else {
                print!("{report}");
            }
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }

        Command::ListScenarios => {
            let names = list_scenarios();
            if cli.json {
                println!("{}", json!(names));
            } else {
                for n in names {
                    println!("{n}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
