use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use oblivnet::dataio::{
    parse_xc, subset_cover_fill, subset_with_targets, synth_xc, Dataset, SubsetOutput, SubsetTargets,
};
use oblivnet::engine::{load_checkpoint, save_checkpoint, train_loop, Engine, EpochMetrics};
use oblivnet::model::init_weights;
use oblivnet::trace::TraceLog;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::exit::{tag, Kind};

pub const METRICS_HEADER: [&str; 5] = ["epoch", "batch", "p_at_1", "loss", "wall_seconds"];

fn load_data(path: &Path) -> Result<Dataset> {
    tag(
        parse_xc(path).with_context(|| format!("loading {}", path.display())),
        Kind::Data,
    )
}

fn check_shape(data: &Dataset, cfg: &RunConfig, what: &str) -> Result<()> {
    let net = &cfg.params.network;
    if data.num_features > net.d_input || data.num_labels > net.c {
        return tag(
            Err(anyhow::anyhow!(
                "{what} has {} features and {} labels; the network takes {} and {}",
                data.num_features,
                data.num_labels,
                net.d_input,
                net.c
            )),
            Kind::Data,
        );
    }
    Ok(())
}

/// Training and evaluation sets: from files when configured, else synthetic.
pub fn datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let net = &cfg.params.network;
    let s = &cfg.synth;
    let (train, test) = match (&cfg.train_path, &cfg.test_path) {
        (Some(tr), te) => {
            let train = load_data(tr)?;
            let test = match te {
                Some(p) => load_data(p)?,
                None => Dataset::default(),
            };
            (train, test)
        }
        (None, Some(_)) => return tag(Err(anyhow::anyhow!("test_path given without train_path")), Kind::Config),
        (None, None) => {
            let mut all = synth_xc(net.d_input, net.c, s.n_train + s.n_test, s.nnz, s.clusters, s.seed);
            let test = all.examples.split_off(s.n_train);
            let test = Dataset {
                examples: test,
                ..all.clone()
            };
            (all, test)
        }
    };
    check_shape(&train, cfg, "training set")?;
    check_shape(&test, cfg, "test set")?;
    Ok((train, test))
}

/// Appends metrics rows, writing the header when the file is new or empty.
pub struct MetricsSink {
    writer: csv::Writer<std::fs::File>,
}

impl MetricsSink {
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            writer.write_record(METRICS_HEADER)?;
            writer.flush()?;
        }
        Ok(Self { writer })
    }

    pub fn push(&mut self, row: &EpochMetrics) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub batches: u64,
    pub refreshes: u64,
    pub mean_batch_seconds: f64,
    pub workers: usize,
    pub final_p_at_1: Option<f64>,
    pub trace_digest: Option<String>,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

pub fn cmd_train(cfg: &RunConfig, out: &mut impl Write) -> Result<TrainReport> {
    cfg.validate()?;
    let (train, test) = datasets(cfg)?;
    let net = &cfg.params.network;
    let ckpt = cfg.checkpoint.clone().unwrap_or_else(|| "model.tnnr".into());
    let metrics = cfg.metrics_out.clone().unwrap_or_else(|| "metrics.csv".into());

    let mut log = TraceLog::from_env(cfg.trace_out.is_some());
    let init = init_weights(net.d_input, net.n0, net.c, cfg.seed);
    let mut engine = Engine::new(&mut log, cfg.params.clone(), &init)?;
    let mut sink = MetricsSink::open(&metrics)?;
    cfg.echo_beside(&metrics)?;

    let shuffle = cfg.shuffle.then_some(cfg.seed);
    let summary = train_loop(&mut log, &mut engine, &train.examples, &test.examples, shuffle, |row| {
        sink.push(row)
            .map_err(|e| oblivnet::Error::Io(std::io::Error::other(e.to_string())))
    })?;

    save_checkpoint(&ckpt, &engine.checkpoint())?;
    cfg.echo_beside(&ckpt)?;
    let trace_digest = if log.is_enabled() {
        if let Some(p) = &cfg.trace_out {
            log.write_file(p)?;
        }
        Some(log.digest()?)
    } else {
        None
    };
    let report = TrainReport {
        batches: summary.batches,
        refreshes: summary.refreshes,
        mean_batch_seconds: summary.mean_batch_seconds,
        workers: cfg.params.opts.workers,
        final_p_at_1: summary.epochs.last().map(|r| r.p_at_1),
        trace_digest,
        checkpoint: ckpt,
        metrics,
    };
    writeln!(
        out,
        "trained {} batches ({} refreshes), mean {:.6} s/batch with {} worker(s)",
        report.batches, report.refreshes, report.mean_batch_seconds, report.workers
    )?;
    if let Some(p) = report.final_p_at_1 {
        writeln!(out, "final P@1 {p:.4}")?;
    }
    if let Some(d) = &report.trace_digest {
        writeln!(out, "trace digest {d}")?;
    }
    if engine.refresh_overflow > 0 {
        writeln!(
            out,
            "warning: {} output neuron(s) overflowed their bucket and cannot train; raise pad_size",
            engine.refresh_overflow
        )?;
    }
    Ok(report)
}

pub fn cmd_eval(checkpoint: &Path, test: &Path, metrics_out: Option<&Path>, out: &mut impl Write) -> Result<f64> {
    let ck = tag(
        load_checkpoint(checkpoint)
            .map_err(anyhow::Error::from)
            .with_context(|| format!("loading {}", checkpoint.display())),
        Kind::Data,
    )?;
    let data = load_data(test)?;
    let c = ck.params.network.c;
    if data.num_labels > c || data.num_features > ck.params.network.d_input {
        return tag(
            Err(anyhow::anyhow!(
                "test set has {} labels and {} features; the model has {} and {}",
                data.num_labels,
                data.num_features,
                c,
                ck.params.network.d_input
            )),
            Kind::Data,
        );
    }
    if data.is_empty() {
        return tag(Err(anyhow::anyhow!("test set {} is empty", test.display())), Kind::Data);
    }
    let start = Instant::now();
    let engine = Engine::from_checkpoint(&mut TraceLog::disabled(), ck)?;
    let p = tag(engine.p_at_1(&data.examples).map_err(Into::into), Kind::Data)?;
    let loss = engine.full_loss(&data.examples);
    writeln!(out, "P@1 {p:.6}")?;
    if let Some(path) = metrics_out {
        let mut sink = MetricsSink::open(path)?;
        sink.push(&EpochMetrics {
            epoch: 0,
            batch: engine.step,
            p_at_1: p,
            loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        })?;
    }
    Ok(p)
}

pub fn cmd_subset(
    train: &Path,
    test: &Path,
    multiplier: usize,
    targets: Option<SubsetTargets>,
    seed: u64,
    out_dir: &Path,
    out: &mut impl Write,
) -> Result<SubsetOutput> {
    let train = load_data(train)?;
    let test = load_data(test)?;
    let result = match targets {
        Some(t) => subset_with_targets(&train, &test, t, seed)?,
        None => tag(
            subset_cover_fill(&train, &test, multiplier, seed).map_err(Into::into),
            Kind::Config,
        )?,
    };
    result.write_dir(out_dir)?;
    let s = &result.stats;
    writeln!(
        out,
        "kept {} training instances (target {}), {} labels (budget {}), {} test instances{}",
        s.train_instances,
        s.target_instances,
        s.labels,
        s.target_labels,
        s.test_instances,
        if s.budget_met {
            ""
        } else {
            "; instance target not reached"
        }
    )?;
    Ok(result)
}

#[derive(Debug, Deserialize)]
struct MetricsRow {
    epoch: usize,
    #[allow(dead_code)]
    batch: u64,
    p_at_1: f64,
    loss: f64,
    wall_seconds: f64,
}

/// Long-format `series,x,y` rows: accuracy and loss per epoch, and accuracy
/// against cumulative wall time.
pub fn plot_rows(metrics_csv: &str) -> Result<Vec<(String, f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(metrics_csv.as_bytes());
    let rows: Vec<MetricsRow> = tag(
        rdr.deserialize()
            .collect::<Result<_, _>>()
            .context("malformed metrics CSV"),
        Kind::Data,
    )?;
    let mut out = Vec::with_capacity(rows.len() * 3);
    for r in &rows {
        out.push(("p_at_1_vs_epoch".to_string(), r.epoch as f64, r.p_at_1));
    }
    for r in &rows {
        out.push(("loss_vs_epoch".to_string(), r.epoch as f64, r.loss));
    }
    let mut t = 0.0;
    for r in &rows {
        t += r.wall_seconds;
        out.push(("p_at_1_vs_time".to_string(), t, r.p_at_1));
    }
    Ok(out)
}

pub fn cmd_plot_data(metrics: &Path, dest: Option<&Path>, out: &mut impl Write) -> Result<usize> {
    let text = tag(
        std::fs::read_to_string(metrics).with_context(|| format!("reading {}", metrics.display())),
        Kind::Data,
    )?;
    let rows = plot_rows(&text)?;
    let sink: Box<dyn Write> = match dest {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(&mut *out),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["series", "x", "y"])?;
    for (s, x, y) in &rows {
        w.write_record([s.clone(), x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(rows.len())
}
