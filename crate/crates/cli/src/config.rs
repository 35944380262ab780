//! Run configuration: a TOML or JSON file, then command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qcert_core::dataset::ResizeFilter;
use qcert_core::evaluation::AttackConfig;
use qcert_core::propagation::{Arithmetic, BoundConfig};
use qcert_core::training::{LossKind, TrainConfig};
use qcert_core::{CircuitSpec, RotationKind};
use serde::{Deserialize, Serialize};

/// Environment fallback for the dataset root.
pub const DATA_DIR_ENV: &str = "QCERT_DATA_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding one sub-directory of IDX files per dataset.
    pub root: Option<PathBuf>,
    pub dataset: String,
    pub filter: ResizeFilter,
    /// Keep only the first N prepared samples of a split.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub shuffle_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: None,
            dataset: "mnist".into(),
            filter: ResizeFilter::default(),
            train_limit: None,
            test_limit: None,
            shuffle_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub qubits: usize,
    pub classes: usize,
    pub layers: usize,
    pub rotation: RotationKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            qubits: 4,
            classes: 2,
            layers: 2,
            rotation: RotationKind::Ry,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self) -> Result<CircuitSpec> {
        Ok(CircuitSpec::new(self.qubits, self.layers, self.classes, self.rotation)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Defaults to `train.target_epsilon`.
    pub epsilon: Option<f64>,
    /// Defaults to `train.arithmetic`.
    pub arithmetic: Option<Arithmetic>,
    /// Defaults to `train.perturb_imag`.
    pub perturb_imag: Option<bool>,
    pub steps: usize,
    /// Defaults to `epsilon / 10`.
    pub step_size: Option<f64>,
    pub restarts: usize,
    pub seed: u64,
    /// Model file read by `eval` and `certify`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let attack = AttackConfig::default();
        Self {
            epsilon: None,
            arithmetic: None,
            perturb_imag: None,
            steps: attack.steps,
            step_size: None,
            restarts: attack.restarts,
            seed: 0,
            checkpoint: None,
        }
    }
}

/// Lists to sweep over; an empty list means "the base config's value".
/// Rows are the Cartesian product in the field order below, last key fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub dataset: Vec<String>,
    pub qubits: Vec<usize>,
    pub classes: Vec<usize>,
    pub layers: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub kappa: Vec<f64>,
    pub loss: Vec<LossKind>,
    pub arithmetic: Vec<Arithmetic>,
    /// Rows run concurrently; 1 runs them one after another.
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepGrid,
    /// Directory receiving every artifact of the run.
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepGrid {
                jobs: 1,
                ..SweepGrid::default()
            },
            output: PathBuf::from("runs/latest"),
        }
    }
}

/// Values given on the command line; `None` keeps the file's value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub dataset: Option<String>,
    pub filter: Option<ResizeFilter>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub qubits: Option<usize>,
    pub classes: Option<usize>,
    pub layers: Option<usize>,
    pub rotation: Option<RotationKind>,
    pub loss: Option<LossKind>,
    pub epsilon: Option<f64>,
    pub kappa: Option<f64>,
    pub arithmetic: Option<Arithmetic>,
    pub perturb_imag: bool,
    pub epochs: Option<usize>,
    pub warmup_epochs: Option<usize>,
    pub ramp_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, path.extension().and_then(|e| e.to_str()).unwrap_or(""))
            .with_context(|| format!("invalid config {}", path.display()))
    }

    /// Parses JSON when `extension` is `json`, TOML otherwise.
    pub fn parse(text: &str, extension: &str) -> Result<Self> {
        Ok(if extension.eq_ignore_ascii_case("json") {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text)?
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        if o.data_dir.is_some() {
            self.data.root = o.data_dir.clone();
        }
        set(&mut self.data.dataset, &o.dataset);
        set(&mut self.data.filter, &o.filter);
        if o.train_limit.is_some() {
            self.data.train_limit = o.train_limit;
        }
        if o.test_limit.is_some() {
            self.data.test_limit = o.test_limit;
        }
        set(&mut self.model.qubits, &o.qubits);
        set(&mut self.model.classes, &o.classes);
        set(&mut self.model.layers, &o.layers);
        set(&mut self.model.rotation, &o.rotation);
        set(&mut self.train.loss_kind, &o.loss);
        set(&mut self.train.target_kappa, &o.kappa);
        set(&mut self.train.epochs, &o.epochs);
        set(&mut self.train.warmup_epochs, &o.warmup_epochs);
        set(&mut self.train.ramp_epochs, &o.ramp_epochs);
        set(&mut self.train.batch_size, &o.batch_size);
        set(&mut self.train.lr, &o.lr);
        set(&mut self.train.seed, &o.seed);
        set(&mut self.eval.steps, &o.steps);
        if let Some(eps) = o.epsilon {
            self.train.target_epsilon = eps;
            self.eval.epsilon = Some(eps);
        }
        if let Some(a) = o.arithmetic {
            self.train.arithmetic = a;
            self.eval.arithmetic = Some(a);
        }
        if o.perturb_imag {
            self.train.perturb_imag = true;
            self.eval.perturb_imag = Some(true);
        }
        if o.checkpoint.is_some() {
            self.eval.checkpoint = o.checkpoint.clone();
        }
        set(&mut self.output, &o.output);
        set(&mut self.sweep.jobs, &o.jobs);
    }

    /// Fills every derived default and checks all sections.
    pub fn resolve(mut self) -> Result<Self> {
        if self.data.root.is_none() {
            self.data.root = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        }
        self.eval.epsilon.get_or_insert(self.train.target_epsilon);
        self.eval.arithmetic.get_or_insert(self.train.arithmetic);
        self.eval.perturb_imag.get_or_insert(self.train.perturb_imag);
        if self.sweep.jobs == 0 {
            self.sweep.jobs = 1;
        }
        self.model.spec()?;
        self.train.validate()?;
        self.attack().validate()?;
        if self.data.dataset.is_empty() {
            bail!("data.dataset must not be empty");
        }
        Ok(self)
    }

    pub fn data_root(&self) -> Result<&Path> {
        match &self.data.root {
            Some(p) => Ok(p),
            None => bail!("dataset root not set: pass --data-dir or set {DATA_DIR_ENV}"),
        }
    }

    pub fn eval_epsilon(&self) -> f64 {
        self.eval.epsilon.unwrap_or(self.train.target_epsilon)
    }

    pub fn eval_bounds(&self) -> BoundConfig {
        BoundConfig {
            arithmetic: self.eval.arithmetic.unwrap_or(self.train.arithmetic),
            perturb_imag: self.eval.perturb_imag.unwrap_or(self.train.perturb_imag),
        }
    }

    pub fn attack(&self) -> AttackConfig {
        AttackConfig {
            epsilon: self.eval_epsilon(),
            steps: self.eval.steps,
            step_size: self.eval.step_size,
            restarts: self.eval.restarts,
            seed: self.eval.seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let toml_text = r#"
            output = "out"
            [model]
            qubits = 2
            classes = 2
            [train]
            loss_kind = "combined_ce"
            target_epsilon = 0.01
            [sweep]
            epsilon = [0.001, 0.01]
        "#;
        let a = RunConfig::parse(toml_text, "toml").unwrap();
        let b = RunConfig::parse(&a.to_json().unwrap(), "json").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.model.qubits, 2);
        assert_eq!(a.train.loss_kind, LossKind::CombinedCe);
        assert_eq!(a.sweep.epsilon, vec![0.001, 0.01]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("[model]\nqbits = 3\n", "toml").is_err());
        assert!(RunConfig::parse("colour = 1\n", "toml").is_err());
    }

    #[test]
    fn resolve_materializes_eval_defaults() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides {
            kappa: Some(0.7),
            arithmetic: Some(Arithmetic::Interval),
            ..Overrides::default()
        });
        cfg.data.root = Some("/data".into());
        let cfg = cfg.resolve().unwrap();
        assert_eq!(cfg.eval.epsilon, Some(cfg.train.target_epsilon));
        assert_eq!(cfg.eval.arithmetic, Some(Arithmetic::Interval));
        assert_eq!(cfg.train.target_kappa, 0.7);
        assert_eq!(cfg.clone().resolve().unwrap(), cfg);
    }

    #[test]
    fn invalid_values_fail_resolution() {
        let mut cfg = RunConfig::default();
        cfg.model.classes = 5;
        assert!(cfg.resolve().is_err());
        let mut cfg = RunConfig::default();
        cfg.train.epochs = 3;
        assert!(cfg.resolve().is_err());
    }
}
