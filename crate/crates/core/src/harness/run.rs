use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::augment::{eda_augment, AugmentPlan, Augmenter, EdaConfig, Stopwords, SynonymLexicon};
use crate::baseline::Gazetteer;
use crate::corpus::{split_dataset, subset, Dataset, PraiseLabel, TaggedResponse};
use crate::finetune::{
    export_finetune, label_json, read_predictions, tagging_messages, to_jsonl, LessonPrinciple, PredictionRecord,
    RawPrediction,
};
use crate::metrics::{aggregate_runs, score_corpus, CorpusScores, Metric, MetricParams};
use crate::provider::{CompletionProvider, CompletionRequest, HttpProvider, MockProvider};
use crate::stats::mann_whitney_u;
use crate::util::{sha256_hex, write_atomic};

use super::config::{AugmenterConfig, BackendConfig, ExperimentConfig};
use super::report::{comparisons_csv, markdown_tables, results_csv, ComparisonRow, ResultRow};
use super::{FailureKind, HarnessError, Stage};

/// Training-set variant a cell is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SizeKey {
    /// Compositional augmentation to this many records.
    Augmented(usize),
    /// EDA baseline with this many records, shown as `520*`.
    Eda(usize),
}

impl fmt::Display for SizeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeKey::Augmented(n) => write!(f, "{n}"),
            SizeKey::Eda(n) => write!(f, "{n}*"),
        }
    }
}

impl Serialize for SizeKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl SizeKey {
    fn dir_name(self) -> String {
        match self {
            SizeKey::Augmented(n) => format!("size{n}"),
            SizeKey::Eda(n) => format!("size{n}_eda"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub seed: u64,
    pub set_size: SizeKey,
    pub train_records: usize,
    /// Predicted phrases that could not be placed in the response.
    pub unaligned_phrases: usize,
    /// Responses whose model output held no usable label JSON.
    pub unparsed_outputs: usize,
    pub scores: BTreeMap<PraiseLabel, CorpusScores>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub comparisons: Vec<ComparisonRow>,
    pub cells: Vec<CellResult>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    /// Per-seed corpus means for one label, size and metric, in seed order.
    pub fn run_means(&self, label: PraiseLabel, size: SizeKey, metric: Metric) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.set_size == size)
            .filter_map(|c| c.scores.get(&label).map(|s| s.mean.get(metric)))
            .collect()
    }
}

type DynProvider = Box<dyn CompletionProvider>;

fn cell_error(
    seed: u64,
    size: SizeKey,
    stage: Stage,
    kind: FailureKind,
    e: impl std::error::Error + Send + Sync + 'static,
) -> HarnessError {
    HarnessError::Cell {
        seed,
        size: size.to_string(),
        stage,
        kind,
        source: Box::new(e),
    }
}

#[derive(Debug, thiserror::Error)]
enum PredictionError {
    #[error("no prediction for test record `{id}` in {file}")]
    Missing { id: String, file: String },
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    train: Dataset,
    test: Dataset,
    base_n: usize,
    augmenter: Augmenter<DynProvider>,
    tagger: Option<DynProvider>,
    principle: Option<LessonPrinciple>,
    lexicon: SynonymLexicon,
    stopwords: Stopwords,
    params: MetricParams,
}

fn load(path: &Path) -> Result<Dataset, HarnessError> {
    Dataset::load(path).map_err(|source| HarnessError::Dataset {
        path: path.display().to_string(),
        source,
    })
}

fn write(out: &Path, rel: &str, bytes: &[u8]) -> Result<(), HarnessError> {
    let path = out.join(rel);
    write_atomic(&path, bytes).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn provider_for(cfg: &crate::provider::ProviderConfig, field: &str) -> Result<DynProvider, HarnessError> {
    HttpProvider::new(cfg.clone())
        .map(|p| Box::new(p) as DynProvider)
        .map_err(|e| HarnessError::Config {
            path: field.to_string(),
            message: e.to_string(),
        })
}

impl Context<'_> {
    fn plan(&self, multiplier: usize, seed: u64) -> AugmentPlan {
        let mut plan = AugmentPlan::new(multiplier, seed);
        plan.n_synonyms = self.cfg.n_synonyms;
        plan.temperature = self.cfg.temperature;
        if let AugmenterConfig::Remote { provider } = &self.cfg.augmenter {
            plan.concurrency = provider.max_concurrency;
        }
        plan
    }

    fn cell_dir(seed: u64, size: SizeKey) -> String {
        format!("cells/seed{seed}/{}", size.dir_name())
    }

    /// Raw model outputs for the test set, keyed by id.
    fn raw_predictions(&self, seed: u64, size: SizeKey) -> Result<Vec<RawPrediction>, HarnessError> {
        match &self.cfg.backend {
            BackendConfig::PredictionsFile { dir } => {
                let file = match size {
                    SizeKey::Augmented(n) => dir.join(format!("seed{seed}/size{n}.jsonl")),
                    SizeKey::Eda(_) => dir.join(format!("seed{seed}/eda.jsonl")),
                };
                let all = read_predictions(&file).map_err(|e| {
                    let kind = match e {
                        crate::finetune::FinetuneError::Io { .. } => FailureKind::Environment,
                        _ => FailureKind::Input,
                    };
                    cell_error(seed, size, Stage::Predict, kind, e)
                })?;
                let by_id: HashMap<&str, &RawPrediction> = all.iter().map(|p| (p.id.as_str(), p)).collect();
                self.test
                    .records
                    .iter()
                    .map(|r| {
                        by_id.get(r.id.as_str()).map(|p| (*p).clone()).ok_or_else(|| {
                            cell_error(
                                seed,
                                size,
                                Stage::Predict,
                                FailureKind::Input,
                                PredictionError::Missing {
                                    id: r.id.clone(),
                                    file: file.display().to_string(),
                                },
                            )
                        })
                    })
                    .collect()
            }
            BackendConfig::Mock { .. } | BackendConfig::Remote { .. } => {
                let tagger = self.tagger.as_ref().expect("tagger built for model backends");
                let principle = self.principle.as_ref().ok_or_else(|| HarnessError::Config {
                    path: "backend".into(),
                    message: format!("no tagging prompt for scheme {}", self.test.scheme),
                })?;
                let model = match &self.cfg.backend {
                    BackendConfig::Remote { model_template, .. } => model_template
                        .replace("{seed}", &seed.to_string())
                        .replace("{size}", &size.to_string()),
                    _ => tagger.default_model().to_string(),
                };
                self.test
                    .records
                    .iter()
                    .map(|r| {
                        let req = CompletionRequest::new(model.clone(), tagging_messages(principle, &r.text), 0.0);
                        tagger
                            .complete(&req)
                            .map(|raw| RawPrediction {
                                id: r.id.clone(),
                                raw,
                            })
                            .map_err(|e| cell_error(seed, size, Stage::Predict, FailureKind::Environment, e))
                    })
                    .collect()
            }
            BackendConfig::Gazetteer => unreachable!("gazetteer predictions are computed directly"),
        }
    }

    fn run_cell(&self, seed: u64, size: SizeKey) -> Result<(CellResult, Vec<String>), HarnessError> {
        let out = &self.cfg.output_dir;
        let dir = Self::cell_dir(seed, size);
        let fail = |stage, kind, e: Box<dyn std::error::Error + Send + Sync>| HarnessError::Cell {
            seed,
            size: size.to_string(),
            stage,
            kind,
            source: e,
        };
        let written = |r: Result<(), HarnessError>| r.map_err(|e| fail(Stage::Write, FailureKind::Environment, Box::new(e)));

        let base = match self.cfg.subset_n {
            Some(n) => subset(&self.train, n, seed).map_err(|e| fail(Stage::Subset, FailureKind::Input, Box::new(e)))?,
            None => self.train.clone(),
        };
        let mut warnings = Vec::new();
        let train = match size {
            SizeKey::Augmented(n) => {
                let outcome = self
                    .augmenter
                    .augment_dataset(&base, &self.plan(n / self.base_n, seed))
                    .map_err(|e| {
                        let kind = match e {
                            crate::augment::AugmentError::Provider { .. } => FailureKind::Environment,
                            _ => FailureKind::Input,
                        };
                        fail(Stage::Augment, kind, Box::new(e))
                    })?;
                warnings.extend(outcome.warnings.into_iter().map(|w| format!("seed {seed}, size {size}: {w}")));
                outcome.dataset
            }
            SizeKey::Eda(n) => {
                let eda = self.cfg.eda_baseline.as_ref().expect("eda cells only with eda config");
                let cfg = EdaConfig {
                    variants_per_record: n / self.base_n,
                    p_edit: eda.p_edit,
                    seed,
                    enable_deletion: true,
                };
                eda_augment(&base, &cfg, &self.lexicon, &self.stopwords)
                    .map_err(|e| fail(Stage::Augment, FailureKind::Input, Box::new(e)))?
            }
        };
        written(write(out, &format!("{dir}/train.json"), train.to_json().as_bytes()))?;
        if let Some(p) = &self.principle {
            let records = export_finetune(&train, p).map_err(|e| fail(Stage::Export, FailureKind::Input, Box::new(e)))?;
            written(write(out, &format!("{dir}/finetune.jsonl"), to_jsonl(&records).as_bytes()))?;
        }

        let mut unaligned = 0;
        let mut unparsed = 0;
        let (raws, tagged): (Vec<RawPrediction>, HashMap<String, TaggedResponse>) = match &self.cfg.backend {
            BackendConfig::Gazetteer => {
                let g = Gazetteer::build(&train);
                written(write(out, &format!("{dir}/gazetteer.json"), g.to_json().as_bytes()))?;
                let mut raws = Vec::with_capacity(self.test.len());
                let mut tagged = HashMap::with_capacity(self.test.len());
                for r in &self.test.records {
                    let t = g.tag(&r.text);
                    let mut phrases: BTreeMap<PraiseLabel, Vec<String>> = BTreeMap::new();
                    for s in t.to_spans() {
                        phrases
                            .entry(s.label)
                            .or_default()
                            .push(crate::corpus::char_slice(&r.text, s.start, s.end).to_string());
                    }
                    raws.push(RawPrediction {
                        id: r.id.clone(),
                        raw: label_json(&self.test.scheme, &phrases),
                    });
                    tagged.insert(r.id.clone(), t);
                }
                (raws, tagged)
            }
            _ => {
                let raws = self.raw_predictions(seed, size)?;
                let mut tagged = HashMap::with_capacity(raws.len());
                for (p, r) in raws.iter().zip(&self.test.records) {
                    let rec = PredictionRecord::build(&r.id, &r.text, &p.raw, &self.test.scheme);
                    unaligned += rec.unaligned();
                    unparsed += usize::from(rec.parsed.is_err());
                    tagged.insert(r.id.clone(), rec.tagged);
                }
                (raws, tagged)
            }
        };
        written(write(out, &format!("{dir}/predictions.jsonl"), to_jsonl(&raws).as_bytes()))?;

        let mut scores = BTreeMap::new();
        for label in self.test.scheme.labels() {
            let s = score_corpus(&self.test, &tagged, label, self.params)
                .map_err(|e| fail(Stage::Score, FailureKind::Input, Box::new(e)))?;
            scores.insert(label, s);
        }
        let result = CellResult {
            seed,
            set_size: size,
            train_records: train.len(),
            unaligned_phrases: unaligned,
            unparsed_outputs: unparsed,
            scores,
        };
        let mut json = serde_json::to_string_pretty(&result).expect("serializable");
        json.push('\n');
        written(write(out, &format!("{dir}/scores.json"), json.as_bytes()))?;
        Ok((result, warnings))
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    config_sha256: String,
    seeds: &'a [u64],
    files: BTreeMap<String, String>,
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            if rel != "manifest.json" && !rel.rsplit('/').next().is_some_and(|n| n.starts_with('.')) {
                out.insert(rel, sha256_hex(&std::fs::read(&p)?));
            }
        }
    }
    Ok(())
}

/// Runs every (seed, set size) cell, plus an EDA cell per seed when
/// configured, and writes all artifacts under `cfg.output_dir`.
///
/// Cells run in parallel. Each seed's augmentation draws from streams
/// keyed by `(seed, record id)`, so results do not depend on scheduling,
/// and a larger set size extends the smaller ones of the same seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let (train, mut test) = match &cfg.test {
        Some(test) => (load(&cfg.dataset)?, load(test)?),
        None => {
            let all = load(&cfg.dataset)?;
            let n = cfg.train_count.expect("validated");
            split_dataset(&all, cfg.split_seed, n).map_err(|e| HarnessError::Config {
                path: "train_count".into(),
                message: e.to_string(),
            })?
        }
    };
    if train.scheme != test.scheme {
        return Err(HarnessError::Config {
            path: "test".into(),
            message: format!("test scheme {} differs from train scheme {}", test.scheme, train.scheme),
        });
    }
    if let Some(expected) = &cfg.scheme {
        if *expected != train.scheme {
            return Err(HarnessError::Config {
                path: "scheme".into(),
                message: format!("dataset scheme is {}, config expects {expected}", train.scheme),
            });
        }
    }
    let base_n = match cfg.subset_n {
        Some(n) if n > train.len() => {
            return Err(HarnessError::Config {
                path: "subset_n".into(),
                message: format!("{n} exceeds the {} training records", train.len()),
            })
        }
        Some(n) => n,
        None => train.len(),
    };
    if base_n == 0 {
        return Err(HarnessError::Config {
            path: "dataset".into(),
            message: "training set is empty".into(),
        });
    }
    for (i, &s) in cfg.set_sizes.iter().enumerate() {
        if s == 0 || s % base_n != 0 {
            return Err(HarnessError::Config {
                path: format!("set_sizes[{i}]"),
                message: format!("{s} is not a positive multiple of the base set size {base_n}"),
            });
        }
    }

    let augment_provider: DynProvider = match &cfg.augmenter {
        AugmenterConfig::Mock { seed } => Box::new(MockProvider::new(*seed)),
        AugmenterConfig::Remote { provider } => provider_for(provider, "augmenter.provider")?,
    };
    let tagger: Option<DynProvider> = match &cfg.backend {
        BackendConfig::Mock { seed } => Some(Box::new(MockProvider::new(*seed))),
        BackendConfig::Remote { provider, .. } => Some(provider_for(provider, "backend.provider")?),
        _ => None,
    };
    let (lexicon, stopwords) = match &cfg.eda_baseline {
        Some(eda) => {
            let lex = match &eda.lexicon {
                Some(p) => SynonymLexicon::load(p).map_err(|e| HarnessError::Config {
                    path: "eda_baseline.lexicon".into(),
                    message: e.to_string(),
                })?,
                None => SynonymLexicon::demo(),
            };
            let stop = match &eda.stopwords {
                Some(p) => Stopwords::load(p).map_err(|e| HarnessError::Config {
                    path: "eda_baseline.stopwords".into(),
                    message: e.to_string(),
                })?,
                None => Stopwords::english(),
            };
            (lex, stop)
        }
        None => (SynonymLexicon::default(), Stopwords::default()),
    };

    let augmenter = Augmenter::new(augment_provider);
    let mut warnings = Vec::new();
    if let Some(m) = cfg.test_augment.filter(|&m| m > 1) {
        let mut plan = AugmentPlan::new(m, cfg.split_seed);
        plan.n_synonyms = cfg.n_synonyms;
        plan.temperature = cfg.temperature;
        let outcome = augmenter.augment_dataset(&test, &plan).map_err(|e| HarnessError::Cell {
            seed: cfg.split_seed,
            size: "test".into(),
            stage: Stage::Augment,
            kind: match e {
                crate::augment::AugmentError::Provider { .. } => FailureKind::Environment,
                _ => FailureKind::Input,
            },
            source: Box::new(e),
        })?;
        warnings.extend(outcome.warnings);
        test = outcome.dataset;
    }
    write(&cfg.output_dir, "test.json", test.to_json().as_bytes())?;

    let principle = LessonPrinciple::builtin(&train.scheme).ok();
    let ctx = Context {
        cfg,
        train,
        test,
        base_n,
        augmenter,
        tagger,
        principle,
        lexicon,
        stopwords,
        params: cfg.metric_params(),
    };

    let mut sizes: Vec<SizeKey> = cfg.set_sizes.iter().map(|&s| SizeKey::Augmented(s)).collect();
    sizes.sort();
    sizes.dedup();
    let eda_key = cfg.eda_baseline.as_ref().map(|eda| {
        let max = *cfg.set_sizes.iter().max().expect("non-empty");
        SizeKey::Eda(eda.variants_per_record.map_or(max, |v| v * base_n))
    });
    sizes.extend(eda_key);
    let cells: Vec<(u64, SizeKey)> = cfg.seeds.iter().flat_map(|&s| sizes.iter().map(move |&k| (s, k))).collect();

    let results: Vec<Result<(CellResult, Vec<String>), HarnessError>> =
        cells.par_iter().map(|&(seed, size)| ctx.run_cell(seed, size)).collect();
    let mut cell_results = Vec::with_capacity(results.len());
    for r in results {
        let (cell, w) = r?;
        warnings.extend(w);
        cell_results.push(cell);
    }

    let mut report = ExperimentReport {
        rows: Vec::new(),
        comparisons: Vec::new(),
        cells: cell_results,
        warnings,
    };
    for label in ctx.test.scheme.labels() {
        for &size in &sizes {
            for metric in Metric::ALL {
                let runs = report.run_means(label, size, metric);
                let s = aggregate_runs(&runs).expect("at least one seed");
                report.rows.push(ResultRow {
                    label,
                    set_size: size,
                    metric,
                    mean: s.mean,
                    standard_error: s.standard_error,
                    n_runs: s.n_runs,
                });
            }
        }
    }
    let mut pairs: Vec<(SizeKey, SizeKey)> = cfg
        .comparison_pairs()
        .into_iter()
        .map(|(a, b)| (SizeKey::Augmented(a), SizeKey::Augmented(b)))
        .collect();
    if let Some(eda) = eda_key {
        let max = *cfg.set_sizes.iter().max().expect("non-empty");
        pairs.push((eda, SizeKey::Augmented(max)));
    }
    for label in ctx.test.scheme.labels() {
        for &(a, b) in &pairs {
            let metric = Metric::MIou;
            let xs = report.run_means(label, a, metric);
            let ys = report.run_means(label, b, metric);
            if let Ok(m) = mann_whitney_u(&xs, &ys, cfg.alternative) {
                report.comparisons.push(ComparisonRow {
                    label,
                    a,
                    b,
                    metric,
                    u1: m.u1,
                    u_min: m.u_min,
                    p: m.p,
                    alternative: m.alternative,
                    method: m.method,
                });
            }
        }
    }

    let out = &cfg.output_dir;
    write(out, "results.csv", results_csv(&report.rows).as_bytes())?;
    write(out, "comparisons.csv", comparisons_csv(&report.comparisons).as_bytes())?;
    write(out, "results.md", markdown_tables(&report.rows, &report.comparisons).as_bytes())?;
    let mut warn_text = report.warnings.join("\n");
    if !warn_text.is_empty() {
        warn_text.push('\n');
    }
    write(out, "warnings.txt", warn_text.as_bytes())?;

    let config_json = serde_json::to_string(cfg).expect("serializable");
    let mut files = BTreeMap::new();
    collect_files(out, out, &mut files).map_err(|source| HarnessError::Io {
        path: out.display().to_string(),
        source,
    })?;
    // Stale cells from earlier runs with other settings are not ours.
    let produced: Vec<String> = cells.iter().map(|&(s, k)| Context::cell_dir(s, k)).collect();
    files.retain(|rel, _| !rel.starts_with("cells/") || produced.iter().any(|d| rel.starts_with(&format!("{d}/"))));
    let manifest = Manifest {
        config: cfg,
        config_sha256: sha256_hex(config_json.as_bytes()),
        seeds: &cfg.seeds,
        files,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("serializable");
    json.push('\n');
    write(out, "manifest.json", json.as_bytes())?;
    Ok(report)
}
