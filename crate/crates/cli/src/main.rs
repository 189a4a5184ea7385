//! `ergoq` command-line harness.
//!
//! Exit status: 0 on success, 2 when the configuration or arguments are
//! invalid, 1 on any runtime fault.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ergoq::acceptance::{run_all, run_criterion, CONVERGENCE_INITS};
use ergoq::config::RunConfig;
use ergoq::experiments::{
    machine_convergence_study, machine_policy_values, machine_start_sensitivity, machine_stationary_study,
    machine_window_study,
};
use ergoq::induced::{estimate_induced_model, greedy_actions, value_iteration};
use ergoq::io;
use ergoq::par::ExecMode;
use ergoq::runner::{self, BoundRecord, Summary};
use ergoq::{Error, Result};

#[derive(Parser)]
#[command(name = "ergoq", version, about = "Q-learning on non-Markov perceived states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a TOML configuration and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        snapshot_every: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Optimal Q table of the model induced by a recorded trace.
    Oracle {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        beta: f64,
        /// Perceived states; one past the largest index in the trace when absent.
        #[arg(long)]
        states: Option<usize>,
        #[arg(long)]
        actions: Option<usize>,
        /// Where to write the table; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the bound recorded in a run summary.
    Bounds {
        #[arg(long)]
        summary: PathBuf,
    },
    /// Machine-replacement study: stationary law, convergence and policy values.
    ReproduceMachine {
        #[arg(long, default_value = "machine-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        steps: u64,
        #[arg(long, default_value_t = 10_000)]
        snapshot_every: u64,
    },
    /// Run the acceptance criteria; exits 0 only if all pass.
    Acceptance {
        /// Run a single criterion.
        #[arg(long)]
        criterion: Option<u8>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Validation { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            config,
            seed,
            out,
            replicates,
            snapshot_every,
            steps,
        } => {
            let mut cfg = match RunConfig::from_path(&config) {
                Err(Error::Io(e)) => return Err(Error::validation(config.display().to_string(), e.to_string())),
                other => other?,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if snapshot_every.is_some() {
                cfg.snapshot_every = snapshot_every;
            }
            if let Some(s) = steps {
                cfg.steps = s;
            }
            let out = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("ergoq-out"));
            cfg.out = Some(out.clone());
            cfg.validate()?;
            for s in runner::execute(&cfg, &out)? {
                println!("{}", serde_json::to_string(&brief(&s))?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle {
            trace,
            beta,
            states,
            actions,
            out,
        } => {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::validation("--beta", "must lie in (0,1)"));
            }
            let records = io::read_trace(&trace)?;
            let ns = states.unwrap_or_else(|| records.iter().map(|r| r.s.max(r.s_next) + 1).max().unwrap_or(0));
            let na = actions.unwrap_or_else(|| records.iter().map(|r| r.u + 1).max().unwrap_or(0));
            let model = estimate_induced_model(&records, ns, na)?;
            let q = value_iteration(&model, beta, 1e-12)?;
            match out {
                Some(path) => {
                    io::write_qtable(&path, &q)?;
                    println!(
                        "{}",
                        serde_json::json!({ "states": ns, "actions": na, "greedy_policy": greedy_actions(&q), "table": path })
                    );
                }
                None => {
                    println!("s,u,value");
                    for s in 0..ns {
                        for u in 0..na {
                            println!("{s},{u},{:?}", q.value(s, u));
                        }
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bounds { summary } => {
            let s: Summary = io::read_json(&summary)?;
            let Some(record) = s.bound else {
                return Err(Error::validation(summary.display().to_string(), "summary records no bound"));
            };
            let value = record.recompute()?;
            println!(
                "{}",
                serde_json::json!({ "kind": record.kind, "recorded": record.value, "recomputed": value, "inputs": record.inputs })
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::ReproduceMachine {
            out,
            seed,
            steps,
            snapshot_every,
        } => {
            if snapshot_every == 0 {
                return Err(Error::validation("--snapshot-every", "must be positive"));
            }
            reproduce_machine(&out, seed, steps, snapshot_every)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Acceptance { criterion } => {
            let results = match criterion {
                Some(id) => vec![run_criterion(id).ok_or_else(|| Error::validation("--criterion", "must lie in 1..=9"))?],
                None => run_all(),
            };
            for r in &results {
                println!("{r}");
            }
            let passed = results.iter().filter(|r| r.passed).count();
            println!("{passed}/{} criteria passed", results.len());
            Ok(if passed == results.len() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn brief(s: &Summary) -> serde_json::Value {
    serde_json::json!({
        "seed": s.seed,
        "regime": s.config.regime,
        "final_sup_error": s.learning.as_ref().and_then(|l| l.final_sup_error),
        "greedy_policy": s.learning.as_ref().map(|l| &l.greedy_policy),
        "value": s.learning.as_ref().and_then(|l| l.evaluation.map(|e| e.mean)),
        "bound": s.bound.as_ref().map(|b: &BoundRecord| b.value),
        "absorbed": s.magent.as_ref().map(|m| m.absorbed),
    })
}

fn reproduce_machine(out: &Path, seed: u64, steps: u64, snapshot_every: u64) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let stationary = machine_stationary_study(steps, seed)?;
    io::write_json(&out.join("stationary.json"), &stationary)?;
    println!("stationary (x,w): analytic {:?}", stationary.analytic);
    println!("stationary (x,w): empirical {:?}", stationary.empirical);

    let inits = [0.0, CONVERGENCE_INITS[0], CONVERGENCE_INITS[1]];
    let conv = machine_convergence_study(steps, seed, &inits, snapshot_every)?;
    io::write_qtable(&out.join("q_star.csv"), &conv.q_star)?;
    for run in &conv.runs {
        io::write_errors(&out.join(format!("errors_init_{}.csv", run.init)), &run.report.curve)?;
        println!(
            "Q0 = {}: final sup error {:.4}, greedy policy {:?}",
            run.init,
            run.report.final_error,
            greedy_actions(&run.table)
        );
    }

    let window = machine_window_study(steps, seed)?;
    io::write_qtable(&out.join("window_qtable.csv"), &window.table)?;
    let values = machine_policy_values(20_000, 80, 100, seed, ExecMode::Parallel)?;
    io::write_json(&out.join("policy_values.json"), &values)?;
    println!("learned window policy {:?}", window.policy);
    println!(
        "state policy value {:.4} (se {:.4}), window policy value {:.4} (se {:.4})",
        values.state_policy.mean, values.state_policy.stderr, values.window_policy.mean, values.window_policy.stderr
    );
    let starts = machine_start_sensitivity(20_000, 80, seed, ExecMode::Parallel)?;
    io::write_json(&out.join("start_sensitivity.json"), &starts)?;
    for s in &starts {
        println!(
            "from x0 = {} without burn-in: state policy {:.4}, window policy {:.4}",
            s.x0, s.state_policy.mean, s.window_policy.mean
        );
    }
    Ok(())
}
