use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thetalab::funcspec::parse_expr;
use thetalab::numfmt::fmt_f64;
use thetalab::runner::{builtin_corpus, default_out_dir, load_config, run, RunManifest, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(name = "thetalab", version, about = "Moving-average conditions and asymptotics of forced linear ODEs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the scenarios of a JSON config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunArgs,
    },
    /// Run the builtin cross-check corpus.
    Corpus {
        #[command(flatten)]
        opts: RunArgs,
    },
    /// Parse an expression and print its canonical form, derivative and a few values.
    CheckExpr {
        expr: String,
        /// Points at which to evaluate.
        #[arg(long = "at", default_values_t = [0.0, 1.0, 10.0])]
        at: Vec<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Output directory (default: $THETALAB_OUT or ./thetalab-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Run only the scenario with this id.
    #[arg(long)]
    only: Option<String>,
}

fn execute(configs: &[ScenarioConfig], args: RunArgs) -> ExitCode {
    let out = args.out.unwrap_or_else(default_out_dir);
    let opts = RunOptions {
        jobs: args.jobs,
        only: args.only,
    };
    match run(configs, &out, &opts) {
        Ok(m) => {
            summarize(&m);
            ExitCode::from(m.exit_code() as u8)
        }
        Err(e @ thetalab::Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn summarize(m: &RunManifest) {
    for e in &m.scenarios {
        match (&e.consistency, &e.error) {
            (Some(c), _) => println!("{:<40} {:?}", e.id, c),
            (None, Some(err)) => println!("{:<40} error: {}", e.id, err),
            (None, None) => println!("{:<40} error", e.id),
        }
    }
    let c = &m.counts;
    println!(
        "agree {}  disagree {}  inconclusive {}  error {}",
        c.agree, c.disagree, c.inconclusive, c.error
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config, opts } => match load_config(&config) {
            Ok(configs) => execute(&configs, opts),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Cmd::Corpus { opts } => execute(&builtin_corpus(), opts),
        Cmd::CheckExpr { expr, at } => match parse_expr(&expr) {
            Ok(e) => {
                println!("expr:       {e}");
                let d = e.differentiate();
                println!("derivative: {d}");
                for t in at {
                    match e.eval(t) {
                        Ok(v) => println!("f({}) = {}", fmt_f64(t), fmt_f64(v)),
                        Err(err) => println!("f({}): {}", fmt_f64(t), err),
                    }
                    if let Ok(v) = d.eval(t) {
                        println!("f'({}) = {}", fmt_f64(t), fmt_f64(v));
                    }
                }
                ExitCode::SUCCESS
            }
            Err(err) => {
                eprintln!("{expr}");
                eprintln!("{}^", " ".repeat(err.offset));
                eprintln!("error: {err}");
                ExitCode::from(2)
            }
        },
    }
}
