use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use nssgan::gan::{generate, train, TimeSchedule, TrainConfig};
use nssgan::hadamard::{gen_dataset, ORDER};
use nssgan::metrics::{coeff_frechet, coeff_stats, pooled_variance, std_ratio, variance_curve};
use nssgan::nn::{read_checkpoint, write_checkpoint, OptimizerConfig};
use nssgan::scalespace::{anneal_t, apply_filter, AnnealSchedule, FilterKind, FilterSpec};
use nssgan::tensorio::{export_pgm, read_tensor, write_tensor, Batch, RngStream};

use crate::args::*;
use crate::manifest::{manifest_path, RunManifest};

/// Outcome of one subcommand: the files it wrote and where its manifest goes.
pub struct Outcome {
    pub manifest: Option<PathBuf>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    fn at(out: &Path, artifacts: Vec<PathBuf>) -> Self {
        Outcome {
            manifest: Some(manifest_path(out)),
            artifacts,
        }
    }
}

/// Runs `command` and writes its manifest.
pub fn execute(command: Command) -> Result<()> {
    let command = command.resolved();
    let outcome = match &command {
        Command::GenHadamard(a) => gen_hadamard(a)?,
        Command::Filter(a) => filter(a)?,
        Command::Anneal(a) => anneal(a)?,
        Command::VarianceCurve(a) => curve(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Sample(a) => sample(a)?,
        Command::Eval(a) => eval(a)?,
        Command::ExportPgm(a) => pgm(a)?,
        Command::Replay(a) => return replay(&a.input),
    };
    if let Some(path) = outcome.manifest {
        RunManifest::new(command, outcome.artifacts).write(&path)?;
    }
    Ok(())
}

fn replay(path: &Path) -> Result<()> {
    let manifest = RunManifest::read(path)?;
    if let Command::Replay(_) = manifest.command {
        bail!(
            "{} records a replay, which cannot be replayed",
            path.display()
        );
    }
    if manifest.version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "warning: manifest written by version {}, replaying with {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    execute(manifest.command)
}

fn load(path: &Path) -> Result<Batch> {
    read_tensor(path).with_context(|| format!("reading tensor {}", path.display()))
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn gen_hadamard(a: &GenHadamardArgs) -> Result<Outcome> {
    let batch = gen_dataset(a.count, a.seed)?;
    write_tensor(&batch, &a.out)?;
    Ok(Outcome::at(&a.out, vec![a.out.clone()]))
}

fn filter(a: &FilterArgs) -> Result<Outcome> {
    let batch = load(&a.input)?;
    let spec = FilterSpec::new(a.kind, a.t, a.sigma)?;
    let filtered = apply_filter(&batch, &spec, &RngStream::new(a.seed, 0));
    write_tensor(&filtered, &a.out)?;
    Ok(Outcome::at(&a.out, vec![a.out.clone()]))
}

#[derive(Serialize)]
struct AnnealRow {
    i: f64,
    t: u32,
}

fn anneal(a: &AnnealArgs) -> Result<Outcome> {
    ensure!(a.samples >= 1, "--samples must be at least 1");
    let schedule = AnnealSchedule {
        t0: a.big_t,
        beta: a.beta,
    };
    let rows = (0..a.samples)
        .map(|k| {
            let i = if a.samples == 1 {
                0.0
            } else {
                k as f64 / (a.samples - 1) as f64
            };
            Ok(AnnealRow {
                i,
                t: anneal_t(i, &schedule)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match &a.out {
        Some(out) => {
            write_csv(out, rows)?;
            Ok(Outcome::at(out, vec![out.clone()]))
        }
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
            Ok(Outcome {
                manifest: None,
                artifacts: Vec::new(),
            })
        }
    }
}

#[derive(Serialize)]
struct CurveRow {
    kind: FilterKind,
    t: u32,
    variance: f64,
}

fn curve(a: &VarianceCurveArgs) -> Result<Outcome> {
    let batch = match &a.input {
        Some(path) => load(path)?,
        None => gen_dataset(a.count, a.seed)?,
    };
    let mut rows = Vec::new();
    for &kind in &a.kind {
        let c = variance_curve(&batch, kind, a.sigma, &a.t_values, a.seed)?;
        rows.extend(
            c.points
                .into_iter()
                .map(|(t, variance)| CurveRow { kind, t, variance }),
        );
    }
    write_csv(&a.out, rows)?;
    Ok(Outcome::at(&a.out, vec![a.out.clone()]))
}

fn train_cmd(a: &TrainArgs) -> Result<Outcome> {
    let data = load(&a.input)?;
    let schedule = match a.t {
        Some(t) => TimeSchedule::Fixed(t),
        None => TimeSchedule::Anneal(AnnealSchedule {
            t0: a.big_t.expect("resolved"),
            beta: a.beta.expect("resolved"),
        }),
    };
    let cfg = TrainConfig {
        latent_dim: a.latent_dim,
        batch_size: a.batch,
        epochs: a.epochs,
        optimizer: OptimizerConfig {
            eta: a.lr,
            b1: a.b1,
            b2: a.b2,
            ..Default::default()
        },
        filter: a.kind,
        sigma: a.sigma,
        schedule,
        seed: a.seed,
        half_batch: a.half_batch == Switch::On,
    };
    let out = train(&cfg, &data)?;
    write_checkpoint(&out.checkpoint, &a.out)?;
    let history = a.history_path();
    write_csv(&history, &out.history.records)?;
    Ok(Outcome::at(&a.out, vec![a.out.clone(), history]))
}

fn sample(a: &SampleArgs) -> Result<Outcome> {
    let ckpt = read_checkpoint(&a.input)
        .with_context(|| format!("reading checkpoint {}", a.input.display()))?;
    write_tensor(&generate(&ckpt, a.count, a.seed)?, &a.out)?;
    Ok(Outcome::at(&a.out, vec![a.out.clone()]))
}

#[derive(Serialize)]
struct BasisRow {
    basis: usize,
    mean: f64,
    std: f64,
    real_mean: Option<f64>,
    real_std: Option<f64>,
    std_ratio: Option<f64>,
}

#[derive(Serialize)]
struct ReportRow {
    metric: &'static str,
    value: f64,
}

fn eval(a: &EvalArgs) -> Result<Outcome> {
    let batch = load(&a.input)?;
    let stats = coeff_stats(&batch)?;
    let real = a.real.as_deref().map(load).transpose()?;
    let real_stats = real.as_ref().map(coeff_stats).transpose()?;
    let ratio = real_stats.as_ref().map(|r| std_ratio(&stats, r));
    let rows = (0..ORDER).map(|i| BasisRow {
        basis: i + 1,
        mean: stats.mean[i],
        std: stats.std[i],
        real_mean: real_stats.as_ref().map(|r| r.mean[i]),
        real_std: real_stats.as_ref().map(|r| r.std[i]),
        std_ratio: ratio.map(|r| r[i]),
    });
    write_csv(&a.out, rows)?;

    let mut report = vec![
        ReportRow {
            metric: "count",
            value: stats.count as f64,
        },
        ReportRow {
            metric: "pooled_variance",
            value: pooled_variance(&batch),
        },
        ReportRow {
            metric: "mean_residual",
            value: stats.mean_residual,
        },
    ];
    if let (Some(real), Some(real_stats), Some(ratio)) = (&real, &real_stats, ratio) {
        report.push(ReportRow {
            metric: "real_pooled_variance",
            value: pooled_variance(real),
        });
        report.push(ReportRow {
            metric: "min_std_ratio",
            value: ratio.iter().copied().fold(f64::INFINITY, f64::min),
        });
        report.push(ReportRow {
            metric: "coeff_frechet",
            value: coeff_frechet(&stats, real_stats)?,
        });
    }
    let report_path = a.report_path();
    write_csv(&report_path, report)?;
    Ok(Outcome::at(&a.out, vec![a.out.clone(), report_path]))
}

fn pgm(a: &ExportPgmArgs) -> Result<Outcome> {
    let batch = load(&a.input)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut artifacts = Vec::new();
    for (k, image) in batch.iter().take(a.count).enumerate() {
        let path = a.out.join(format!("image_{k:05}.pgm"));
        export_pgm(image, &path)?;
        artifacts.push(path);
    }
    Ok(Outcome::at(&a.out, artifacts))
}
