//! Experiment configuration: TOML with nested sections, strict about
//! unknown keys, defaults filled for everything the method fixes.

use crate::csbm::CsbmSpec;
use crate::error::{Error, Result};
use crate::interface::dataset::DatasetBundle;
use crate::trainer::TrainConfig;

/// Generator parameters as written in config files. `class_mean_fill` is a
/// shorthand: one scalar per class, broadcast across `feature_dim`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsbmConfig {
    pub num_classes: usize,
    pub class_counts: Vec<usize>,
    #[serde(default = "default_p_intra")]
    pub p_intra: f64,
    #[serde(default = "default_p_inter")]
    pub p_inter: f64,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default)]
    pub class_means: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub class_mean_fill: Option<Vec<f64>>,
    #[serde(default)]
    pub class_stddevs: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

fn default_p_intra() -> f64 {
    0.08
}

fn default_p_inter() -> f64 {
    0.02
}

fn default_feature_dim() -> usize {
    16
}

impl CsbmConfig {
    pub fn to_spec(&self) -> Result<CsbmSpec> {
        let class_means = match (&self.class_means, &self.class_mean_fill) {
            (Some(m), None) => m.clone(),
            (None, Some(fill)) => {
                if fill.len() != self.num_classes {
                    return Err(Error::Validation(format!(
                        "class_mean_fill has {} entries for {} classes",
                        fill.len(),
                        self.num_classes
                    )));
                }
                fill.iter().map(|&v| vec![v; self.feature_dim]).collect()
            }
            (Some(_), Some(_)) => {
                return Err(Error::Validation(
                    "give class_means or class_mean_fill, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Validation(
                    "csbm section needs class_means or class_mean_fill".into(),
                ))
            }
        };
        let spec = CsbmSpec {
            num_classes: self.num_classes,
            class_counts: self.class_counts.clone(),
            p_intra: self.p_intra,
            p_inter: self.p_inter,
            class_means,
            class_stddevs: self
                .class_stddevs
                .clone()
                .unwrap_or_else(|| vec![1.0; self.num_classes]),
            feature_dim: self.feature_dim,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One domain's data source: exactly one of a dataset bundle or a generator
/// spec.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csbm: Option<CsbmConfig>,
}

impl DomainConfig {
    pub fn validate(&self, which: &str) -> Result<()> {
        match (&self.dataset, &self.csbm) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(Error::Validation(format!(
                "[{}] needs exactly one of `dataset` or `csbm`",
                which
            ))),
        }
    }
}

/// Grid values for the loss weights; the sweep expands their cartesian
/// product.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub lambda1: Vec<f64>,
    #[serde(default)]
    pub lambda2: Vec<f64>,
    #[serde(default)]
    pub lambda3: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_run_label")]
    pub run_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<std::path::PathBuf>,
    pub source: DomainConfig,
    pub target: DomainConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_run_label() -> String {
    "run".into()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate("source")?;
        self.target.validate("target")?;
        self.train.validate()
    }
}

/// Parse a TOML experiment config, filling every default and rejecting
/// unknown keys.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|span| text[..span.start.min(text.len())].lines().count().max(1))
            .unwrap_or(1);
        Error::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

/// Expand the sweep grid into one config per lambda combination. Without a
/// sweep section the config itself is the single run.
pub fn expand_sweep(config: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let Some(sweep) = &config.sweep else {
        return vec![config.clone()];
    };
    let axis = |values: &[f64], base: f64| {
        if values.is_empty() {
            vec![base]
        } else {
            values.to_vec()
        }
    };
    let l1s = axis(&sweep.lambda1, config.train.lambda1);
    let l2s = axis(&sweep.lambda2, config.train.lambda2);
    let l3s = axis(&sweep.lambda3, config.train.lambda3);
    let mut runs = Vec::new();
    for &l1 in &l1s {
        for &l2 in &l2s {
            for &l3 in &l3s {
                let mut run = config.clone();
                run.sweep = None;
                run.train.lambda1 = l1;
                run.train.lambda2 = l2;
                run.train.lambda3 = l3;
                run.run_label = format!("{}_l1_{}_l2_{}_l3_{}", config.run_label, l1, l2, l3);
                runs.push(run);
            }
        }
    }
    runs
}
