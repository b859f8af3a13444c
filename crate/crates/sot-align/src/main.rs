//! Thin CLI over the library pipeline: one subcommand per stage plus the
//! end-to-end run and the synthetic-data generator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sot_align::config::PipelineConfig;
use sot_align::pipeline;
use sot_align::solver::SolveStatus;
use sot_align::synth;
use sot_align::SotError;

#[derive(Parser)]
#[command(
    name = "sot-align",
    about = "Align two knowledge graphs and detect dangling entities via semi-constraint optimal transport"
)]
struct Cli {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set epsilon=0.95 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run embed, pairs, train, cost, gridsearch, solve, and eval in order.
    Pipeline,
    /// Generate a synthetic KG pair with gold files (synth.* config keys).
    Synthesize,
    /// Embed entity names with the word-vector table.
    Embed,
    /// Extract pseudo entity pairs from the name embeddings.
    Pairs,
    /// Train the graph encoder on the pseudo (and supervised) pairs.
    Train,
    /// Build the sparse top-K cost matrix (defaults to the full top_k).
    Cost {
        /// Override the K used for this cost matrix.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Grid-search the virtual-entity costs on the small-K matrix.
    Gridsearch,
    /// Solve the transport program on the full-K matrix.
    Solve,
    /// Score the solution against the gold standard.
    Eval,
}

fn run(cli: Cli) -> Result<i32, SotError> {
    let config = PipelineConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let out = &cli.out;
    match cli.command {
        Command::Pipeline => {
            let outcome = pipeline::run_pipeline(&config, out)?;
            let m = &outcome.metrics;
            println!(
                "hits@1 relaxed {:.4}  practical {:.4}  hits@10 {:.4}  mrr {:.4}",
                m.hits1_relaxed, m.hits1_practical, m.hits10, m.mrr
            );
            println!(
                "solver hits@1 {:.4}  greedy hits@1 {:.4}  ded pooled F1 {:.4}",
                m.solver_hits1_practical, m.greedy_hits1_practical, m.ded.pooled.f1
            );
            if outcome.solution.status != SolveStatus::Optimal {
                eprintln!("warning: solver stopped at the node budget");
                return Ok(4);
            }
            Ok(0)
        }
        Command::Synthesize => {
            let data = synth::generate(&config.synth)?;
            synth::write_files(&data, out)?;
            println!(
                "wrote synthetic KG pair: {} + {} entities vs {} + {} entities under {}",
                config.synth.matchable,
                config.synth.dangling1,
                config.synth.matchable,
                config.synth.dangling2,
                out.display()
            );
            Ok(0)
        }
        Command::Embed => {
            pipeline::stage_embed(&config, out).map_err(|e| e.in_stage("embed"))?;
            Ok(0)
        }
        Command::Pairs => {
            let pairs = pipeline::stage_pairs(&config, out).map_err(|e| e.in_stage("pairs"))?;
            println!("{} pseudo pair(s) at epsilon {}", pairs.len(), config.epsilon);
            Ok(0)
        }
        Command::Train => {
            pipeline::stage_train(&config, out).map_err(|e| e.in_stage("train"))?;
            println!("{}", pipeline::checkpoint_summary(out)?);
            Ok(0)
        }
        Command::Cost { k } => {
            let k = k.unwrap_or(config.top_k);
            let cost = pipeline::stage_cost(&config, out, k).map_err(|e| e.in_stage("cost"))?;
            println!(
                "cost matrix {}x{} with {} entries at K={k}",
                cost.m,
                cost.n,
                cost.num_entries()
            );
            Ok(0)
        }
        Command::Gridsearch => {
            let result =
                pipeline::stage_gridsearch(&config, out).map_err(|e| e.in_stage("gridsearch"))?;
            println!(
                "alpha {} beta {} (hits@1 on pseudo pairs {:.4})",
                result.chosen.alpha, result.chosen.beta, result.hits_on_pairs
            );
            Ok(0)
        }
        Command::Solve => {
            let solution = pipeline::stage_solve(&config, out).map_err(|e| e.in_stage("solve"))?;
            println!(
                "matched {}  dangling {}+{}  objective {:.6}  nodes {}",
                solution.matched.len(),
                solution.dangling1.len(),
                solution.dangling2.len(),
                solution.objective,
                solution.node_count
            );
            if solution.status != SolveStatus::Optimal {
                eprintln!("warning: solver stopped at the node budget");
                return Ok(4);
            }
            Ok(0)
        }
        Command::Eval => {
            let m = pipeline::stage_eval(&config, out).map_err(|e| e.in_stage("eval"))?;
            println!(
                "hits@1 relaxed {:.4}  practical {:.4}  hits@10 {:.4}  mrr {:.4}",
                m.hits1_relaxed, m.hits1_practical, m.hits10, m.mrr
            );
            println!(
                "solver hits@1 {:.4}  greedy hits@1 {:.4}  ded pooled F1 {:.4}",
                m.solver_hits1_practical, m.greedy_hits1_practical, m.ded.pooled.f1
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
