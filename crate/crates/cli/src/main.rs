use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use oblivnet::dataio::SubsetTargets;
use oblivnet_cli::audit::cmd_audit;
use oblivnet_cli::bench_lsh::cmd_bench_lsh;
use oblivnet_cli::commands::{cmd_eval, cmd_plot_data, cmd_subset, cmd_train};
use oblivnet_cli::config::{Overrides, RunConfig};
use oblivnet_cli::exit::{code_of, tag, Kind};

#[derive(Parser, Debug)]
#[command(name = "oblivnet", version, about = "Doubly-oblivious sparse network training")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Record the access trace and write it here.
    #[arg(long, global = true)]
    trace_out: Option<PathBuf>,
    #[arg(long, global = true, overrides_with = "no_o1")]
    o1: bool,
    #[arg(long, global = true)]
    no_o1: bool,
    #[arg(long, global = true, overrides_with = "no_o2")]
    o2: bool,
    #[arg(long, global = true)]
    no_o2: bool,
    #[arg(long, global = true, overrides_with = "no_o3")]
    o3: bool,
    #[arg(long, global = true)]
    no_o3: bool,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
}

fn flag(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

impl Global {
    fn overrides(&self) -> Overrides {
        Overrides {
            workers: self.workers,
            seed: self.seed,
            trace_out: self.trace_out.clone(),
            o1: flag(self.o1, self.no_o1),
            o2: flag(self.o2, self.no_o2),
            o3: flag(self.o3, self.no_o3),
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }

    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train on the configured data, then write a checkpoint and metrics.
    Train {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// P@1 of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// Compare traces of pipelines that differ only in private data.
    AuditTrace {
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Add a secret-dependent branch; the audit must then fail.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Recall of multi-table WTA against single-table MP-WTA, as CSV.
    BenchLsh {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Cover-and-fill subset of an extreme-classification dataset.
    Subset {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 2)]
        multiplier: usize,
        #[arg(long, requires = "target_labels")]
        target_instances: Option<usize>,
        #[arg(long, requires = "target_instances")]
        target_labels: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Long-format plotting data from a metrics CSV.
    PlotData {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    let g = &cli.global;
    match cli.cmd {
        Cmd::Train {
            checkpoint,
            metrics_out,
        } => {
            let mut cfg = g.run_config()?;
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            if metrics_out.is_some() {
                cfg.metrics_out = metrics_out;
            }
            cmd_train(&cfg, &mut stdout)?;
        }
        Cmd::Eval {
            checkpoint,
            test,
            metrics_out,
        } => {
            cmd_eval(&checkpoint, &test, metrics_out.as_deref(), &mut stdout)?;
        }
        Cmd::AuditTrace { trials, inject_fault } => {
            let cfg = g.run_config()?;
            cmd_audit(&cfg, trials, inject_fault, cfg.trace_out.as_deref(), &mut stdout)?;
        }
        Cmd::BenchLsh { out, trials } => {
            let mut cfg = g.run_config()?;
            if let Some(t) = trials {
                cfg.bench.trials = t;
            }
            if let Some(s) = g.seed {
                cfg.bench.seed = s;
            }
            tag(cmd_bench_lsh(&cfg.bench, out.as_deref(), &mut stdout), Kind::Config)?;
        }
        Cmd::Subset {
            train,
            test,
            multiplier,
            target_instances,
            target_labels,
            out,
        } => {
            let targets = target_instances
                .zip(target_labels)
                .map(|(instances, labels)| SubsetTargets { instances, labels });
            cmd_subset(
                &train,
                &test,
                multiplier,
                targets,
                g.seed.unwrap_or(0),
                &out,
                &mut stdout,
            )?;
        }
        Cmd::PlotData { metrics, out } => {
            cmd_plot_data(&metrics, out.as_deref(), &mut stdout)?;
        }
    }
    stdout.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code_of(&e))
        }
    }
}
