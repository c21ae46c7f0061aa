use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use meanq::environments::{value_iteration, EnvSpec};
use meanq_lab::runner::{run_experiment, RunOptions};
use meanq_lab::summary::{render_table, summarize, write_summary_csv};
use meanq_lab::parse_config;

#[derive(Parser)]
#[command(name = "meanq", version, about = "Ensemble-mean TD learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment file and write CSVs plus a manifest.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run only this seed, replacing the file's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, short, default_value_t = 0)]
        jobs: usize,
    },
    /// Final and best return per variant over one or more manifests.
    Summarize {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the optimal action values of an environment, e.g. `chain_walk:n=5,gamma=0.9`.
    Oracle {
        environment: String,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config, output_dir, seed, jobs } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let parsed = parse_config(&text).map_err(|e| anyhow::anyhow!("{}: {e}", config.display()))?;
            let options = RunOptions { output_dir, seeds: seed.map(|s| vec![s]), jobs };
            let outcome = run_experiment(&parsed, &options)?;
            let m = &outcome.manifest;
            for s in &m.seeds {
                match &s.error {
                    None => println!("seed {:>6}  ok", s.seed),
                    Some(e) => println!("seed {:>6}  failed at step {}: {e}", s.seed, s.failed_step.unwrap_or(0)),
                }
            }
            println!("config {}  ->  {}/manifest.json", &m.config_hash[..12], m.output_dir);
            if m.seeds.iter().any(|s| !s.ok) {
                std::process::exit(1);
            }
        }
        Command::Summarize { manifests, csv } => {
            let rows = summarize(&manifests)?;
            print!("{}", render_table(&rows));
            if let Some(path) = csv {
                write_summary_csv(&path, &rows)?;
            }
        }
        Command::Oracle { environment, tolerance } => {
            let spec: EnvSpec = environment.parse()?;
            let mdp = spec.build()?;
            let vi = value_iteration(&mdp, tolerance)?;
            print!("{:>6}", "state");
            for a in 0..mdp.n_actions() {
                print!(" {:>12}", format!("Q(s,{a})"));
            }
            println!(" {:>12} {:>6}", "V*", "greedy");
            for s in 0..mdp.n_states() {
                print!("{s:>6}");
                for q in vi.q_row(s) {
                    print!(" {q:>12.6}");
                }
                println!(" {:>12.6} {:>6}", vi.v_star[s], vi.greedy_action(s));
            }
        }
    }
    Ok(())
}
