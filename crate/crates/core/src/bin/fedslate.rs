use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fedslate::harness::{
    compare_runs, compute_etror, evaluate_checkpoint, read_metrics_file, resume_experiment,
    run_experiment, ExperimentConfig, Mode, DEFAULT_EPSILON_TERM, DEFAULT_WINDOW,
};

#[derive(Parser)]
#[command(name = "fedslate", version, about = "Federated slate-recommendation training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "fedslate")]
    FedSlate,
    #[value(name = "fedslate-extended")]
    FedSlateExtended,
    #[value(name = "fedslate-ablated")]
    FedSlateAblated,
    #[value(name = "slateq-standalone")]
    SlateQStandalone,
    #[value(name = "random")]
    Random,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::FedSlate => Mode::FedSlate,
            ModeArg::FedSlateExtended => Mode::FedSlateExtended,
            ModeArg::FedSlateAblated => Mode::FedSlateAblated,
            ModeArg::SlateQStandalone => Mode::SlateQStandalone,
            ModeArg::Random => Mode::Random,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train (or resume) an experiment and write metrics and checkpoints.
    Train {
        /// JSON configuration file; defaults apply for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Override all seeds: env = S, nets = S + 1, sampling = S + 2.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the episode count.
        #[arg(long)]
        episodes: Option<u64>,
        /// Output directory for metrics.csv, config.json and checkpoints.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resume from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run frozen-policy episodes from a checkpoint (learning disabled).
    Evaluate {
        /// Checkpoint to evaluate.
        #[arg(long)]
        resume: PathBuf,
        #[arg(long)]
        episodes: Option<u64>,
        /// Replace the environment seed for held-out evaluation.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize several metrics files side by side (ETROR, optimal and
    /// mean rewards per platform).
    Compare {
        /// Metrics CSV files (at least two).
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EPSILON_TERM)]
        epsilon_term: f64,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        /// Directory for summary.csv and summary.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Episodes-to-reach-optimal-reward for one metrics file.
    Etror {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPSILON_TERM)]
        epsilon_term: f64,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> fedslate::Result<()> {
    match cli.command {
        Command::Train {
            config,
            mode,
            seed,
            episodes,
            out,
            resume,
        } => {
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::from_file(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(m) = mode {
                cfg.mode = m.into();
            }
            if let Some(s) = seed {
                cfg.seeds.env = s;
                cfg.seeds.nets = s + 1;
                cfg.seeds.sampling = s + 2;
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            if let Some(o) = out {
                cfg.out_dir = Some(o);
            }
            let output = match resume {
                Some(ckpt) => resume_experiment(
                    &ckpt,
                    config.as_ref().map(|_| &cfg),
                    episodes,
                    cfg.out_dir.clone(),
                )?,
                None => run_experiment(&cfg)?,
            };
            report_run(&output);
            Ok(())
        }
        Command::Evaluate {
            resume,
            episodes,
            seed,
            out,
        } => {
            let output = evaluate_checkpoint(&resume, episodes, seed, out)?;
            report_run(&output);
            Ok(())
        }
        Command::Compare {
            files,
            epsilon_term,
            window,
            out,
        } => {
            if files.len() < 2 {
                return Err(fedslate::Error::Config(
                    "compare needs at least two metrics files".into(),
                ));
            }
            let mut inputs = Vec::new();
            for f in &files {
                let name = f
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| f.display().to_string());
                inputs.push((name, read_metrics_file(f)?));
            }
            let cmp = compare_runs(&inputs, epsilon_term, window);
            if cmp.truncated {
                eprintln!("warning: episode counts differ; truncated to the shortest run");
            }
            print!("{}", cmp.render_text());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let mut csv = Vec::new();
                cmp.write_csv(&mut csv)?;
                std::fs::write(dir.join("summary.csv"), csv)?;
                std::fs::write(dir.join("summary.txt"), cmp.render_text())?;
            }
            Ok(())
        }
        Command::Etror {
            file,
            epsilon_term,
            window,
        } => {
            let metrics = read_metrics_file(&file)?;
            let a: Vec<f64> = metrics.iter().map(|m| m.return_a).collect();
            let b: Vec<f64> = metrics.iter().map(|m| m.return_b).collect();
            for (label, series) in [("A", a), ("B", b)] {
                let r = compute_etror(&series, epsilon_term, window);
                match (r.m_prime, r.optimal_reward) {
                    (Some(m), Some(opt)) => println!(
                        "platform {label}: etror={m} optimal_reward={opt:.3} (window={window}, epsilon_term={epsilon_term})"
                    ),
                    _ => println!(
                        "platform {label}: etror=N/A (window={window}, epsilon_term={epsilon_term})"
                    ),
                }
            }
            Ok(())
        }
    }
}

fn report_run(output: &fedslate::harness::RunOutput) {
    let episodes = output.metrics.len();
    let mean_a = output.metrics.iter().map(|m| m.return_a).sum::<f64>() / episodes.max(1) as f64;
    let mean_b = output.metrics.iter().map(|m| m.return_b).sum::<f64>() / episodes.max(1) as f64;
    println!("episodes: {episodes}");
    println!("mean return A: {mean_a:.3}");
    println!("mean return B: {mean_b:.3}");
    if let Some(dir) = &output.out_dir {
        println!("outputs: {}", dir.display());
    }
}
