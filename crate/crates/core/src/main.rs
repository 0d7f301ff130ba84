use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use imdp_synth::app::pipeline::{self, Timings};
use imdp_synth::app::report::{self, render_initial_states, render_simulation};
use imdp_synth::app::{parse_config_file, run_pipeline, RunConfig};
use imdp_synth::imdp::{export_interval_model, export_policy, parse_policy};
use imdp_synth::{Error, Result};

#[derive(Parser)]
#[command(name = "imdp-synth", version, about = "iMDP-based controller synthesis for stochastic linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides both the scenario and the simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replaces the configured noise model with recorded samples (one per line).
    #[arg(long, global = true)]
    samples_file: Option<PathBuf>,
    /// Output directory; defaults to `outputs.directory`, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: abstraction, synthesis, refinement, Monte Carlo, reports.
    Run { config: PathBuf },
    /// Writes the interval model and the optimal policy.
    Export { config: PathBuf },
    /// Simulates a stored policy from the configured initial states.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
}

fn load(cli: &Cli, path: &Path) -> Result<RunConfig> {
    let mut cfg = parse_config_file(path)?;
    if let Some(file) = &cli.samples_file {
        cfg = cfg.with_samples_file(file)?;
    }
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.outputs.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn print_timings(timings: &Timings) {
    for (stage, d) in &timings.0 {
        eprintln!("  {stage:<16} {:>10.3} s", d.as_secs_f64());
    }
    eprintln!("  {:<16} {:>10.3} s", "total", timings.total().as_secs_f64());
}

fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            let rep = run_pipeline(&cfg)?;
            let dir = out_dir(cli, &cfg);
            report::write_reports(&rep, &dir)?;
            if !cli.quiet {
                print_timings(&rep.timings);
                println!(
                    "{} locations, {} transitions, beta {:e}",
                    rep.partition.num_locations(),
                    rep.transition_count,
                    rep.beta
                );
                for (i, r) in rep.initial.iter().enumerate() {
                    let bound = r.lower_bound.unwrap_or(f64::NAN);
                    match &r.monte_carlo {
                        Some(mc) => println!(
                            "initial {i}: bound {bound:.4}, empirical {:.4} over {} runs",
                            mc.empirical_rate, mc.runs
                        ),
                        None => println!("initial {i}: bound {bound:.4}"),
                    }
                }
                println!("verdict: {} (reports in {})", rep.verdict.as_str(), dir.display());
            }
            Ok(rep.verdict.exit_code())
        }
        Command::Export { config } => {
            let cfg = load(cli, config)?;
            let mut timings = Timings::default();
            let abs = pipeline::build_abstraction(&cfg, &mut timings)?;
            let syn = pipeline::synthesize(&cfg, &abs, &mut timings)?;
            let dir = out_dir(cli, &cfg);
            report::write_files(
                &dir,
                &[
                    ("model.txt", export_interval_model(&syn.imdp, Some(&syn.policy))),
                    ("policy.txt", export_policy(&syn.policy)),
                ],
            )?;
            if !cli.quiet {
                print_timings(&timings);
                println!(
                    "{} transitions written to {}",
                    syn.imdp.transition_count(),
                    dir.join("model.txt").display()
                );
            }
            Ok(0)
        }
        Command::Simulate { config, policy } => {
            let cfg = load(cli, config)?;
            let partition = pipeline::build_partition(&cfg)?;
            let text = std::fs::read_to_string(policy).map_err(|e| Error::io(policy, e))?;
            let policy = parse_policy(&text, cfg.prepared.horizon, partition.num_locations())?;
            let ctrl = pipeline::refined_controller(&cfg, &partition, policy)?;
            let initial = pipeline::simulate_initial_states(&cfg, &ctrl, None)?;
            let dir = out_dir(cli, &cfg);
            report::write_files(
                &dir,
                &[
                    ("initial_states.csv", render_initial_states(&initial, partition.dim())),
                    ("simulation.csv", render_simulation(&initial)),
                ],
            )?;
            if !cli.quiet {
                for (i, r) in initial.iter().enumerate() {
                    if let Some(mc) = &r.monte_carlo {
                        println!(
                            "initial {i}: empirical {:.4} over {} runs, 99% interval [{:.4}, {:.4}]",
                            mc.empirical_rate, mc.runs, mc.rate_interval.0, mc.rate_interval.1
                        );
                    }
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
