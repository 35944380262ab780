//! Implementations of the subcommands. Each writes its artifacts and the
//! resolved configuration into the run's output directory.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use qcert_core::checkpoint::Checkpoint;
use qcert_core::dataset::{load_split, prepare, Dataset, PrepareConfig, Split};
use qcert_core::evaluation::{evaluate, EvalReport};
use qcert_core::propagation::{bound_logits, certify_sample};
use qcert_core::training::{margin, train, EpochRecord, LossKind};
use qcert_core::{circuit::argmax, forward_exact, Arithmetic, CircuitSpec, Params};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// One row of the sweep table; also the CSV row written by `eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub qubits: usize,
    pub classes: usize,
    pub layers: usize,
    pub arithmetic: Arithmetic,
    pub loss: LossKind,
    pub epsilon: f64,
    pub kappa: f64,
    pub test_acc: f64,
    pub cert_acc: f64,
    pub pgd_acc: f64,
    pub seed: u64,
    pub wall_time: f64,
}

impl SweepRow {
    fn new(cfg: &RunConfig, report: &EvalReport, wall_time: f64) -> Self {
        Self {
            dataset: cfg.data.dataset.clone(),
            qubits: cfg.model.qubits,
            classes: cfg.model.classes,
            layers: cfg.model.layers,
            arithmetic: report.arithmetic,
            loss: cfg.train.loss_kind,
            epsilon: report.epsilon,
            kappa: cfg.train.target_kappa,
            test_acc: report.test_acc,
            cert_acc: report.cert_acc,
            pgd_acc: report.pgd_acc,
            seed: cfg.train.seed,
            wall_time,
        }
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_snapshot(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

fn load_data(cfg: &RunConfig, split: Split) -> Result<Dataset> {
    let root = cfg.data_root()?;
    let raw = load_split(root, &cfg.data.dataset, split)
        .with_context(|| format!("loading {split:?} split of '{}'", cfg.data.dataset))?;
    let prep = PrepareConfig {
        n_qubits: cfg.model.qubits,
        n_classes: cfg.model.classes,
        seed: cfg.data.shuffle_seed,
        filter: cfg.data.filter,
    };
    let data = prepare(&raw, &prep)?;
    let limit = match split {
        Split::Train => cfg.data.train_limit,
        Split::Test => cfg.data.test_limit,
    };
    Ok(match limit {
        Some(n) => data.take(n),
        None => data,
    })
}

fn load_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let Some(path) = &cfg.eval.checkpoint else {
        bail!("no model file given: pass --checkpoint or set eval.checkpoint");
    };
    Checkpoint::load(path).with_context(|| format!("loading model {}", path.display()))
}

/// Config whose model section matches a loaded checkpoint; the model file
/// wins over the configured architecture.
fn with_model_of(cfg: &RunConfig, spec: &CircuitSpec) -> RunConfig {
    let mut cfg = cfg.clone();
    cfg.model.qubits = spec.n_qubits;
    cfg.model.classes = spec.n_classes;
    cfg.model.layers = spec.n_layers;
    cfg.model.rotation = spec.rotation;
    cfg
}

/// Writes a model with seeded random angles.
pub fn init(cfg: &RunConfig) -> Result<PathBuf> {
    let spec = cfg.model.spec()?;
    prepare_dir(&cfg.output)?;
    write_snapshot(cfg, &cfg.output)?;
    let params = Params::random(&spec, cfg.train.seed);
    let meta = serde_json::json!({ "init_seed": cfg.train.seed, "trained": false });
    let path = cfg.output.join("model.json");
    Checkpoint::new(spec, params, meta)?.save(&path)?;
    Ok(path)
}

pub fn train_cmd(cfg: &RunConfig, quiet: bool) -> Result<PathBuf> {
    let spec = cfg.model.spec()?;
    prepare_dir(&cfg.output)?;
    write_snapshot(cfg, &cfg.output)?;
    let data = load_data(cfg, Split::Train)?;
    let history_path = cfg.output.join("history.csv");
    let mut history = csv_writer(&history_path)?;
    let mut write_err = None;
    let start = Instant::now();
    let outcome = train(&spec, &data, &cfg.train, |r: &EpochRecord| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  kappa {:.3}  eps {:.5}  loss {:.5}  acc {:.4}  cert {:.4}",
                r.epoch, r.kappa, r.epsilon, r.loss, r.clean_acc, r.cert_frac
            );
        }
        if let Err(e) = history.serialize(r).and_then(|_| history.flush().map_err(Into::into)) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", history_path.display()));
    }
    history.flush()?;
    let meta = serde_json::json!({
        "train": cfg.train,
        "dataset": cfg.data.dataset,
        "n_train": data.len(),
        "wall_time": start.elapsed().as_secs_f64(),
        "final": outcome.history.last(),
    });
    let path = cfg.output.join("model.json");
    Checkpoint::new(spec, outcome.params, meta)?.save(&path)?;
    Ok(path)
}

pub fn eval_cmd(cfg: &RunConfig) -> Result<EvalReport> {
    let ck = load_checkpoint(cfg)?;
    let cfg = with_model_of(cfg, &ck.spec);
    prepare_dir(&cfg.output)?;
    write_snapshot(&cfg, &cfg.output)?;
    let data = load_data(&cfg, Split::Test)?;
    let start = Instant::now();
    let report = evaluate(&ck.spec, &ck.theta, &data, cfg.eval_bounds(), &cfg.attack())?;
    write_json(&cfg.output.join("report.json"), &report)?;
    let mut w = csv_writer(&cfg.output.join("eval.csv"))?;
    w.serialize(SweepRow::new(&cfg, &report, start.elapsed().as_secs_f64()))?;
    w.flush()?;
    Ok(report)
}

#[derive(Serialize)]
struct CertRow {
    index: usize,
    label: usize,
    prediction: usize,
    certified: bool,
    margin: f64,
}

/// Per-sample certification; returns the certified fraction.
pub fn certify_cmd(cfg: &RunConfig) -> Result<f64> {
    let ck = load_checkpoint(cfg)?;
    let cfg = with_model_of(cfg, &ck.spec);
    prepare_dir(&cfg.output)?;
    write_snapshot(&cfg, &cfg.output)?;
    let data = load_data(&cfg, Split::Test)?;
    let eps = cfg.eval_epsilon();
    let mut w = csv_writer(&cfg.output.join("certify.csv"))?;
    let mut certified = 0usize;
    for i in 0..data.len() {
        let (x, y) = data.sample(i);
        let bounds = bound_logits(&ck.spec, &ck.theta, x, eps, cfg.eval_bounds())?;
        let ok = certify_sample(&bounds, y)?;
        certified += ok as usize;
        let m = if bounds.len() > 1 { margin(&bounds, y)? } else { f64::INFINITY };
        w.serialize(CertRow {
            index: i,
            label: y,
            prediction: argmax(&forward_exact(&ck.spec, &ck.theta, x)?),
            certified: ok,
            margin: m,
        })?;
    }
    w.flush()?;
    Ok(certified as f64 / data.len() as f64)
}

/// Concrete configuration of one sweep row.
pub fn sweep_rows(base: &RunConfig) -> Vec<RunConfig> {
    let g = &base.sweep;
    fn or_base<T: Clone>(list: &[T], base: T) -> Vec<T> {
        if list.is_empty() {
            vec![base]
        } else {
            list.to_vec()
        }
    }
    let mut rows = Vec::new();
    for dataset in or_base(&g.dataset, base.data.dataset.clone()) {
        for &qubits in &or_base(&g.qubits, base.model.qubits) {
            for &classes in &or_base(&g.classes, base.model.classes) {
                for &layers in &or_base(&g.layers, base.model.layers) {
                    for &epsilon in &or_base(&g.epsilon, base.train.target_epsilon) {
                        for &kappa in &or_base(&g.kappa, base.train.target_kappa) {
                            for &loss in &or_base(&g.loss, base.train.loss_kind) {
                                for &arithmetic in &or_base(&g.arithmetic, base.train.arithmetic) {
                                    let mut cfg = base.clone();
                                    cfg.sweep = Default::default();
                                    cfg.data.dataset = dataset.clone();
                                    cfg.model.qubits = qubits;
                                    cfg.model.classes = classes;
                                    cfg.model.layers = layers;
                                    cfg.train.target_epsilon = epsilon;
                                    cfg.eval.epsilon = Some(epsilon);
                                    cfg.train.target_kappa = kappa;
                                    cfg.train.loss_kind = loss;
                                    cfg.train.arithmetic = arithmetic;
                                    cfg.eval.arithmetic = Some(arithmetic);
                                    let seed = row_seed(&cfg, base.train.seed);
                                    cfg.train.seed = seed;
                                    cfg.eval.seed = seed;
                                    rows.push(cfg);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rows
}

/// Base seed mixed with a hash of the row's swept values.
fn row_seed(cfg: &RunConfig, base_seed: u64) -> u64 {
    let key = format!(
        "{}|{}|{}|{}|{}|{}|{}|{}|{}",
        cfg.data.dataset,
        cfg.model.qubits,
        cfg.model.classes,
        cfg.model.layers,
        cfg.train.target_epsilon,
        cfg.train.target_kappa,
        cfg.train.loss_kind,
        cfg.train.arithmetic,
        base_seed
    );
    let digest = Sha256::digest(key.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

fn run_row(index: usize, cfg: &RunConfig, dir: &Path) -> Result<SweepRow> {
    let mut cfg = cfg.clone();
    cfg.output = dir.join(format!("row-{index:03}"));
    let cfg = cfg.resolve()?;
    let start = Instant::now();
    let model = train_cmd(&cfg, true).with_context(|| format!("sweep row {index}"))?;
    let spec = cfg.model.spec()?;
    let ck = Checkpoint::load(&model)?;
    let test = load_data(&cfg, Split::Test)?;
    let report = evaluate(&spec, &ck.theta, &test, cfg.eval_bounds(), &cfg.attack())
        .with_context(|| format!("sweep row {index}"))?;
    write_json(&cfg.output.join("report.json"), &report)?;
    Ok(SweepRow::new(&cfg, &report, start.elapsed().as_secs_f64()))
}

pub fn sweep_cmd(cfg: &RunConfig, quiet: bool) -> Result<Vec<SweepRow>> {
    prepare_dir(&cfg.output)?;
    write_snapshot(cfg, &cfg.output)?;
    let rows = sweep_rows(cfg);
    let dir = cfg.output.clone();
    let run = |(i, row): (usize, &RunConfig)| {
        let r = run_row(i, row, &dir);
        if let (false, Ok(r)) = (quiet, &r) {
            eprintln!(
                "row {i}: {} q{} c{} l{} {} {} eps {} kappa {} -> test {:.4} cert {:.4} pgd {:.4}",
                r.dataset, r.qubits, r.classes, r.layers, r.arithmetic, r.loss, r.epsilon, r.kappa,
                r.test_acc, r.cert_acc, r.pgd_acc
            );
        }
        r
    };
    let results: Vec<Result<SweepRow>> = if cfg.sweep.jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.sweep.jobs)
            .build()
            .context("building sweep thread pool")?;
        pool.install(|| rows.par_iter().enumerate().map(run).collect())
    } else {
        rows.iter().enumerate().map(run).collect()
    };
    let mut w = csv_writer(&cfg.output.join("sweep.csv"))?;
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        let r = r?;
        w.serialize(&r)?;
        out.push(r);
    }
    w.flush()?;
    Ok(out)
}
