use std::path::Path;

use anyhow::{Context, Result};
use rankforge::analysis::{PermutationScope, DEFAULT_REPETITIONS, DEFAULT_TOPBOT_BINS, DEFAULT_TOPBOT_K};
use rankforge::data::{GenConfig, PipelineConfig};
use rankforge::features::SpikeConfig;
use rankforge::train::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub seed: u64,
    pub generator: GenConfig,
    /// Also write the records as CSV.
    pub csv: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            generator: GenConfig::default(),
            csv: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub test_fraction: f64,
    pub pipeline: PipelineConfig,
    pub spike: SpikeConfig,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            test_fraction: DEFAULT_TEST_FRACTION,
            pipeline: PipelineConfig::default(),
            spike: SpikeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    /// Overrides `train.seed`.
    pub seed: u64,
    pub test_fraction: f64,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: train.seed,
            test_fraction: DEFAULT_TEST_FRACTION,
            pipeline: PipelineConfig::default(),
            train,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub test_fraction: f64,
    pub long_view_threshold_seconds: f64,
    /// 0 picks `RANKFORGE_THREADS` or the core count.
    pub threads: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            test_fraction: DEFAULT_TEST_FRACTION,
            long_view_threshold_seconds: TrainConfig::default().long_view_threshold_seconds,
            threads: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceConfig {
    pub seed: u64,
    pub test_fraction: f64,
    pub repetitions: usize,
    pub scope: PermutationScope,
    /// Empty: every model feature.
    pub features: Vec<String>,
    /// Also retrain without each feature.
    pub ablation: bool,
    pub references: usize,
    /// Used by the ablation retrains.
    pub train: TrainConfig,
    pub threads: usize,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            seed: 11,
            test_fraction: DEFAULT_TEST_FRACTION,
            repetitions: DEFAULT_REPETITIONS,
            scope: PermutationScope::Global,
            features: Vec::new(),
            ablation: false,
            references: 3,
            train: TrainConfig::default(),
            threads: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopbotConfig {
    pub test_fraction: f64,
    pub k: usize,
    pub bins: usize,
    /// Empty: every model feature.
    pub features: Vec<String>,
    pub threads: usize,
}

impl Default for TopbotConfig {
    fn default() -> Self {
        Self {
            test_fraction: DEFAULT_TEST_FRACTION,
            k: DEFAULT_TOPBOT_K,
            bins: DEFAULT_TOPBOT_BINS,
            features: Vec::new(),
            threads: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Latency benchmark iterations; 0 skips the benchmark.
    pub latency_iterations: usize,
    pub latency_candidates: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            latency_iterations: 0,
            latency_candidates: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchIoConfig {
    pub seed: u64,
    pub impressions: usize,
    /// Each reader runs this many times; the fastest run counts.
    pub repeats: usize,
}

impl Default for BenchIoConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            impressions: 1_000_000,
            repeats: 3,
        }
    }
}

/// Base config for a run: the manifest's resolved config when replaying,
/// else the TOML file, else defaults. Flags are applied on top by the caller.
pub fn resolve<C: DeserializeOwned + Default>(file: Option<&Path>, manifest: Option<&RunManifest>) -> Result<C> {
    if let Some(m) = manifest {
        return serde_json::from_value(m.config.clone()).context("manifest config does not match this subcommand");
    }
    match file {
        None => Ok(C::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}
