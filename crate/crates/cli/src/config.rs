//! Resolved configurations for every subcommand and the defaults → file → flags layering.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use prdlab::featviz::AscentConfig;
use prdlab::rdsim::{GrayScottParams, RdModel, TuringParams, GRAY_SCOTT_PRESETS};
use prdlab::{InitMode, LabelMode, ManifoldSpec, TrainConfig, TrainMode};

/// A problem with flags or configuration files rather than with the run itself.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Desk-scale synthetic mixture used when no data flags are given.
pub fn default_manifold() -> ManifoldSpec {
    ManifoldSpec {
        n_total: 300,
        n_train: 256,
        d_in: 32,
        modes: 10,
        manifold_dim: 24,
        fill_value: 1.0,
        seed: 1,
        label_mode: LabelMode::Scalar,
        center_box: 10.0,
        cluster_std: 5.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdxSource {
    pub images: PathBuf,
    pub labels: PathBuf,
    /// Samples kept for training; the next `n_test` form the test split.
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    pub manifold: ManifoldSpec,
    /// Read an IDX pair instead of drawing the mixture.
    pub idx: Option<IdxSource>,
    /// Scale inputs to the unit sphere.
    pub normalize: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { manifold: default_manifold(), idx: None, normalize: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSection {
    pub width: usize,
    pub init: InitMode,
    pub init_seed: u64,
}

impl Default for NetSection {
    fn default() -> Self {
        Self { width: 4096, init: InitMode::Theory, init_seed: 1 }
    }
}

/// Appendix training protocol: SGD with momentum 0.9, lr 1e-2, L = 0.01, penalty 10,
/// one critic step per generator step.
pub fn default_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        momentum: 0.9,
        batch_size: Some(256),
        max_epochs: 1000,
        l: 0.01,
        gp_coeff: 10.0,
        disc_steps_per_gen_step: 1,
        seed: 1,
        log_every: 10,
        ..TrainConfig::default()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenDataConfig {
    pub data: DataSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub data: DataSection,
    pub net: NetSection,
    pub train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self { data: DataSection::default(), net: NetSection::default(), train: default_train() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramConfig {
    pub data: DataSection,
    pub net: NetSection,
    pub mc_samples: usize,
    pub mc_seed: u64,
    /// Generator checkpoint whose `H(t)` is compared against the initialization.
    pub checkpoint: Option<PathBuf>,
}

impl Default for GramConfig {
    fn default() -> Self {
        Self {
            data: DataSection::default(),
            net: NetSection::default(),
            mc_samples: 1 << 16,
            mc_seed: 1,
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyBoundsConfig {
    pub data: DataSection,
    pub net: NetSection,
    pub train: TrainConfig,
    /// Failure probability in the high-probability bounds.
    pub delta: f64,
    /// Target accuracy for the convergence-time constants.
    pub epsilon: f64,
}

impl Default for VerifyBoundsConfig {
    fn default() -> Self {
        let data = DataSection {
            manifold: ManifoldSpec { n_total: 40, n_train: 32, d_in: 64, manifold_dim: 48, ..default_manifold() },
            ..DataSection::default()
        };
        Self {
            data,
            net: NetSection::default(),
            train: TrainConfig {
                log_every: 100,
                gram_every: 100,
                ..TrainConfig::theory(TrainMode::Supervised, 1e-3, 20_000)
            },
            delta: 0.05,
            epsilon: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub model: RdModel,
    pub height: usize,
    pub width: usize,
    pub steps: usize,
    pub snapshot_every: usize,
    /// Uniform perturbation half-width around the Turing equilibrium.
    pub amplitude: f64,
    /// Side of the inverted central square of the Gray-Scott start.
    pub patch: usize,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: RdModel::Turing(TuringParams::paper()),
            height: 100,
            width: 100,
            steps: 10_000,
            snapshot_every: 1000,
            amplitude: 0.03,
            patch: 5,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatvizConfig {
    pub checkpoint: PathBuf,
    pub top_k: usize,
    /// Image shape of a hidden weight vector; square when absent.
    pub image_height: Option<usize>,
    pub image_width: Option<usize>,
    pub ascent: AscentConfig,
    /// Seed of the shared base image.
    pub seed: u64,
}

impl Default for FeatvizConfig {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::from("generator.ckpt"),
            top_k: 9,
            image_height: None,
            image_width: None,
            ascent: AscentConfig::default(),
            seed: 1,
        }
    }
}

/// Named simulator parameter sets.
pub fn preset(model: &str, name: &str) -> anyhow::Result<RdModel> {
    match (model, name) {
        ("turing", "paper") => Ok(RdModel::Turing(TuringParams::paper())),
        ("gs", "paper") => {
            Ok(RdModel::GrayScott(GrayScottParams::paper(GRAY_SCOTT_PRESETS[0].0, GRAY_SCOTT_PRESETS[0].1)))
        }
        ("gs", other) => {
            let idx = other
                .strip_prefix("paper-")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|k| (1..=GRAY_SCOTT_PRESETS.len()).contains(k))
                .ok_or_else(|| usage(format!("unknown gray-scott preset '{other}' (paper, paper-1 … paper-4)")))?;
            let (f, k) = GRAY_SCOTT_PRESETS[idx - 1];
            Ok(RdModel::GrayScott(GrayScottParams::paper(f, k)))
        }
        (m, other) => Err(usage(format!("unknown preset '{other}' for model '{m}'"))),
    }
}

fn merge(base: &mut Value, over: Value, path: &str) -> anyhow::Result<()> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let here = format!("{path}.{k}");
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() => merge(slot, v, &here)?,
                    Some(slot) => *slot = v,
                    None => return Err(usage(format!("unknown configuration key '{}'", here.trim_start_matches('.')))),
                }
            }
            Ok(())
        }
        (b, o) => {
            *b = o;
            Ok(())
        }
    }
}

/// Layers a JSON file over `defaults`. The file may be a bare config or a run manifest, in which
/// case its `config` member is used and its command must match.
pub fn layer_file<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<&Path>,
    command: &str,
) -> anyhow::Result<T> {
    let mut base = serde_json::to_value(defaults)?;
    if let Some(path) = file {
        let bytes = fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: Value =
            serde_json::from_slice(&bytes).map_err(|e| usage(format!("{} is not valid JSON: {e}", path.display())))?;
        let value = match value {
            Value::Object(mut o) if o.contains_key("command") && o.contains_key("config") => {
                let recorded = o.get("command").and_then(Value::as_str).unwrap_or_default().to_string();
                if recorded != command {
                    bail!(UsageError(format!(
                        "manifest {} records command '{recorded}', not '{command}'",
                        path.display()
                    )));
                }
                o.remove("config").unwrap_or(Value::Null)
            }
            other => other,
        };
        // tagged enums are replaced whole, not merged field by field
        if let (Some(b), Some(o)) = (base.get_mut("model"), value.get("model")) {
            *b = o.clone();
        }
        merge(&mut base, value, "")?;
    }
    serde_json::from_value(base).map_err(|e| usage(format!("invalid configuration: {e}")))
}
