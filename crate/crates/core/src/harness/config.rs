use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Scheme;
use crate::metrics::MetricParams;
use crate::provider::ProviderConfig;
use crate::stats::Alternative;

use super::HarnessError;

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_sizes() -> Vec<usize> {
    vec![13, 26, 65, 130, 260, 520]
}
fn default_alpha() -> f64 {
    0.2
}
fn default_beta() -> f64 {
    2.0
}
fn default_n_synonyms() -> usize {
    15
}
fn default_p_edit() -> f64 {
    0.1
}
fn default_alternative() -> Alternative {
    Alternative::Less
}

/// Where synonym rewrites come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmenterConfig {
    Mock {
        #[serde(default)]
        seed: u64,
    },
    Remote {
        provider: ProviderConfig,
    },
}

impl Default for AugmenterConfig {
    fn default() -> Self {
        AugmenterConfig::Mock { seed: 0 }
    }
}

/// Where test-set predictions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// The offline keyword tagger behind [`crate::provider::MockProvider`].
    Mock {
        #[serde(default)]
        seed: u64,
    },
    /// A gazetteer built from each augmented training set.
    Gazetteer,
    /// Pre-computed model outputs at `{dir}/seed{seed}/size{size}.jsonl`
    /// (`eda.jsonl` for the EDA cell).
    PredictionsFile { dir: PathBuf },
    /// A chat model per cell; `{seed}` and `{size}` in `model_template` are
    /// replaced (size is e.g. `520` or `520*`).
    Remote {
        provider: ProviderConfig,
        model_template: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: default_beta(),
        }
    }
}

/// Traditional-augmentation comparison cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdaBaselineConfig {
    /// Defaults to the largest multiplier, so the cell matches the largest
    /// set size.
    #[serde(default)]
    pub variants_per_record: Option<usize>,
    #[serde(default = "default_p_edit")]
    pub p_edit: f64,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Training data, or the whole corpus when `test` is absent.
    pub dataset: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Seed and train size for splitting `dataset` when `test` is absent.
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub train_count: Option<usize>,
    /// Expected label scheme; checked against the dataset when given.
    #[serde(default)]
    pub scheme: Option<Scheme>,
    /// Low-resource subset drawn per seed; the whole train set when absent.
    #[serde(default)]
    pub subset_n: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_sizes")]
    pub set_sizes: Vec<usize>,
    #[serde(default)]
    pub augmenter: AugmenterConfig,
    pub backend: BackendConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Multiplier applied once to the test set.
    #[serde(default)]
    pub test_augment: Option<usize>,
    #[serde(default)]
    pub eda_baseline: Option<EdaBaselineConfig>,
    /// Size pairs to test; every pair of `set_sizes` when absent.
    #[serde(default)]
    pub comparisons: Option<Vec<(usize, usize)>>,
    #[serde(default = "default_alternative")]
    pub alternative: Alternative,
    #[serde(default = "default_n_synonyms")]
    pub n_synonyms: usize,
    #[serde(default)]
    pub temperature: f64,
    pub output_dir: PathBuf,
}

fn invalid(path: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses a config, or the `config` member of a run manifest.
    pub fn from_json(json: &str) -> Result<Self, HarnessError> {
        let value: serde_json::Value = serde_json::from_str(json).map_err(|e| invalid("$", e.to_string()))?;
        let value = match value.get("config") {
            Some(inner) if value.get("files").is_some() => inner.clone(),
            _ => value,
        };
        let cfg: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            invalid(if path == "." { "$" } else { &path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads from a file; relative paths inside resolve against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.output_dir);
        if let Some(t) = &mut self.test {
            fix(t);
        }
        if let BackendConfig::PredictionsFile { dir } = &mut self.backend {
            fix(dir);
        }
        if let Some(eda) = &mut self.eda_baseline {
            if let Some(p) = &mut eda.lexicon {
                fix(p);
            }
            if let Some(p) = &mut eda.stopwords {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if self.set_sizes.is_empty() {
            return Err(invalid("set_sizes", "at least one set size is required"));
        }
        if let Some(n) = self.subset_n {
            if n == 0 {
                return Err(invalid("subset_n", "must be positive"));
            }
            for (i, &s) in self.set_sizes.iter().enumerate() {
                if s == 0 || s % n != 0 {
                    return Err(invalid(&format!("set_sizes[{i}]"), format!("{s} is not a positive multiple of subset_n {n}")));
                }
            }
        }
        if self.test.is_none() && self.train_count.is_none() {
            return Err(invalid("train_count", "required when `test` is not given"));
        }
        if self.n_synonyms == 0 {
            return Err(invalid("n_synonyms", "must be positive"));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(invalid("temperature", "must be a non-negative number"));
        }
        MetricParams::new(self.metrics.alpha, self.metrics.beta).map_err(|e| invalid("metrics", e.to_string()))?;
        if self.test_augment == Some(0) {
            return Err(invalid("test_augment", "must be at least 1"));
        }
        if let Some(pairs) = &self.comparisons {
            for (i, (a, b)) in pairs.iter().enumerate() {
                for (j, s) in [a, b].into_iter().enumerate() {
                    if !self.set_sizes.contains(s) {
                        return Err(invalid(&format!("comparisons[{i}][{j}]"), format!("{s} is not in set_sizes")));
                    }
                }
            }
        }
        if let Some(eda) = &self.eda_baseline {
            if !(eda.p_edit > 0.0 && eda.p_edit < 1.0) {
                return Err(invalid("eda_baseline.p_edit", "must be in (0, 1)"));
            }
            if eda.variants_per_record == Some(0) {
                return Err(invalid("eda_baseline.variants_per_record", "must be positive"));
            }
        }
        if let AugmenterConfig::Remote { provider } = &self.augmenter {
            provider.validate().map_err(|e| invalid("augmenter.provider", e.to_string()))?;
        }
        if let BackendConfig::Remote { provider, .. } = &self.backend {
            provider.validate().map_err(|e| invalid("backend.provider", e.to_string()))?;
        }
        Ok(())
    }

    pub fn metric_params(&self) -> MetricParams {
        MetricParams::new(self.metrics.alpha, self.metrics.beta).expect("validated")
    }

    /// Size pairs to compare, smaller size first.
    pub fn comparison_pairs(&self) -> Vec<(usize, usize)> {
        match &self.comparisons {
            Some(p) => p.clone(),
            None => {
                let mut sizes = self.set_sizes.clone();
                sizes.sort_unstable();
                sizes.dedup();
                let mut out = Vec::new();
                for (i, &a) in sizes.iter().enumerate() {
                    for &b in &sizes[i + 1..] {
                        out.push((a, b));
                    }
                }
                out
            }
        }
    }
}
