use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use risk_sampling::dataset::{generate_publications, PublicationsConfig};
use risk_sampling::harness::{
    bench_scaling, compare_strategies, emit_run_log, prepare, risk_weighted_pool, DataSource, ExperimentConfig,
};
use risk_sampling::sampler::FastPamConfig;
use risk_sampling::verification::run_all;
use risk_sampling::StrategyKind;

#[derive(Parser)]
#[command(name = "risk-sampling", version, about = "Risk-weighted core-set active learning for entity resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulated active-learning comparison.
    Run {
        /// TOML experiment config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated run seeds, overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Comma-separated strategies, overriding the config.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<StrategyKind>>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        validation_ratio: Option<f64>,
        /// Replace existing output files.
        #[arg(long)]
        force: bool,
        /// Exit nonzero unless risk sampling beats the baselines.
        #[arg(long)]
        check: bool,
    },
    /// Time weighted fastPAM over growing pool sizes.
    BenchScaling {
        #[arg(long, value_delimiter = ',', default_value = "2000,4000,8000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        labeled: usize,
        #[arg(long, default_value_t = 100)]
        budget: usize,
        /// Works in the generated corpus; must yield more pairs than the
        /// largest size.
        #[arg(long, default_value_t = 2200)]
        works: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Solves per size; the fastest is reported.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Write the table as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo checks of the Lipschitz and core-set bounds.
    VerifyBounds {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Exit nonzero on any violation.
        #[arg(long)]
        check: bool,
    },
    /// Write a synthetic bibliographic corpus as left.csv, right.csv and
    /// pairs.csv.
    GenerateCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1500)]
        works: usize,
        #[arg(long, default_value_t = 2021)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<bool, Box<dyn std::error::Error>> {
    match command {
        Command::Run {
            config,
            out,
            seeds,
            strategies,
            iterations,
            validation_ratio,
            force,
            check,
        } => {
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::from_file(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(s) = strategies {
                cfg.strategies = s;
            }
            if let Some(i) = iterations {
                cfg.iterations = i;
            }
            if let Some(r) = validation_ratio {
                cfg.validation_ratio = r;
            }
            if let Some(o) = out {
                cfg.output_dir = Some(o);
            }
            cfg.validate()?;
            let out_dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs/latest"));
            // fail before the run, not after it
            if !force && out_dir.join("run_log.csv").exists() {
                return Err(format!("{} already holds a run; pass --force", out_dir.display()).into());
            }
            let prep = prepare(&cfg)?;
            println!(
                "corpus: {} pairs ({} equivalent), validation ratio {}",
                prep.corpus.len(),
                prep.corpus.positive_count(),
                cfg.validation_ratio
            );
            let log = prep.run(&cfg)?;
            emit_run_log(&log, &out_dir, force)?;

            println!("{:<16}mean test F1 per iteration", "strategy");
            for &s in &cfg.strategies {
                let f1: Vec<String> = log.mean_f1(s).iter().map(|x| format!("{x:.4}")).collect();
                println!("{:<16}{}", s.name(), f1.join("  "));
            }
            println!("wrote {}", out_dir.display());
            if check {
                let outcomes = compare_strategies(&log, 0.8);
                for o in &outcomes {
                    println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
                }
                return Ok(outcomes.iter().all(|o| o.passed));
            }
            Ok(true)
        }
        Command::BenchScaling {
            sizes,
            labeled,
            budget,
            works,
            seed,
            repeats,
            out,
        } => {
            let cfg = ExperimentConfig {
                data: DataSource::Synthetic(PublicationsConfig {
                    works,
                    ..Default::default()
                }),
                max_pairs: None,
                ..Default::default()
            };
            let pool = risk_weighted_pool(&cfg, labeled, seed)?;
            let rows = bench_scaling(&pool, budget, &sizes, repeats, &FastPamConfig::default())?;
            println!("{:>8}{:>14}{:>8}", "n", "runtime_ms", "swaps");
            for r in &rows {
                println!("{:>8}{:>14.1}{:>8}", r.n, r.runtime_ms, r.swaps);
            }
            if let Some(path) = out {
                let mut text = String::from("n,runtime_ms,swaps,td\n");
                for r in &rows {
                    text.push_str(&format!("{},{},{},{}\n", r.n, r.runtime_ms, r.swaps, r.td));
                }
                std::fs::write(&path, text)?;
            }
            Ok(true)
        }
        Command::VerifyBounds { trials, seed, check } => {
            let reports = run_all(trials, seed);
            println!(
                "{:<22}{:>8}{:>12}{:>14}{:>14}{:>12}",
                "check", "trials", "constant", "max_ratio", "min_ratio", "violations"
            );
            for r in &reports {
                println!(
                    "{:<22}{:>8}{:>12.4}{:>14.6}{:>14.6}{:>12}",
                    r.check, r.trials, r.constant, r.max_ratio, r.min_ratio, r.violations
                );
            }
            Ok(!check || reports.iter().all(|r| r.passed()))
        }
        Command::GenerateCorpus { out, works, seed } => {
            let corpus = generate_publications(&PublicationsConfig {
                works,
                seed,
                ..Default::default()
            })?;
            corpus.write_csv(&out)?;
            println!("wrote {} pairs to {}", corpus.len(), out.display());
            Ok(true)
        }
    }
}
