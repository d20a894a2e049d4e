use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};

use spanaug_core::augment::{augment_dataset, eda_augment, AugmentError, AugmentPlan, EdaConfig, Stopwords, SynonymLexicon};
use spanaug_core::baseline::Gazetteer;
use spanaug_core::corpus::{
    span_length_stats, split_dataset, subset, Dataset, DatasetError, LabeledResponse, PraiseLabel, TaggedResponse,
};
use spanaug_core::finetune::{export_finetune, parse_predictions_jsonl, to_jsonl, LessonPrinciple, PredictionRecord};
use spanaug_core::harness::{markdown_tables, run_experiment, ExperimentConfig, FailureKind, MetricsConfig};
use spanaug_core::metrics::{score_corpus, MetricParams};
use spanaug_core::provider::{HttpProvider, MockProvider, ProviderConfig};
use spanaug_core::stats::{mann_whitney_u, Alternative, MwuMethod};
use spanaug_core::util::{fmt_fixed, write_atomic};

#[derive(Parser)]
#[command(name = "spanaug", version, about = "Span-annotated praise corpus tools")]
struct Cli {
    /// Seed for every randomized step (for `experiment`, runs just this seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// M-IoU false-positive weight.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// F-beta recall weight.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Log progress to stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset file and report the first bad record.
    Validate { dataset: PathBuf },
    /// Shuffle and split a dataset into train and test files.
    Split {
        dataset: PathBuf,
        #[arg(long)]
        train_count: usize,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Draw a random subset of records.
    Subset {
        dataset: PathBuf,
        #[arg(short, long)]
        n: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compositional augmentation to `multiplier` times the input size.
    Augment {
        dataset: PathBuf,
        #[arg(short, long)]
        multiplier: usize,
        #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
        backend: BackendKind,
        #[command(flatten)]
        remote: RemoteArgs,
        #[arg(long, default_value_t = 15)]
        n_synonyms: usize,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Synonym, insertion, swap and deletion edits (synthetic records only).
    EdaAugment {
        dataset: PathBuf,
        #[arg(long)]
        variants: usize,
        #[arg(long, default_value_t = 0.1)]
        p_edit: f64,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        no_deletion: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write chat fine-tuning JSONL for a dataset.
    ExportFinetune {
        dataset: PathBuf,
        /// Plain-text lesson principle replacing the built-in one.
        #[arg(long)]
        principle: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Tag responses with a gazetteer built from a training set.
    Tag {
        #[arg(long)]
        train: PathBuf,
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score predictions (dataset JSON or predictions JSONL) against ground truth.
    Score {
        gt: PathBuf,
        pred: PathBuf,
        #[arg(long)]
        label: Option<PraiseLabel>,
    },
    /// Mann-Whitney U between two JSON arrays of numbers.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = Alternative::Less)]
        alternative: Alternative,
    },
    /// Corpus statistics.
    Stats {
        #[command(subcommand)]
        what: StatsCommand,
    },
    /// Run a configured experiment.
    Experiment { config: PathBuf },
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Span length histograms per label.
    Spans { dataset: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    Remote,
}

#[derive(Args)]
struct RemoteArgs {
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
}

/// An error plus the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, error: error.into() }
    }

    fn env(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }
}

type Outcome = Result<(), Failure>;

fn dataset_failure(path: &Path, e: DatasetError) -> Failure {
    let io = e.is_io();
    let mut error = anyhow!("{}: {e}", path.display());
    if let Some(id) = e.record_id() {
        error = error.context(format!("invalid record `{id}`"));
    }
    if io {
        Failure::env(error)
    } else {
        Failure::input(error)
    }
}

fn load(path: &Path) -> Result<Dataset, Failure> {
    Dataset::load(path).map_err(|e| dataset_failure(path, e))
}

fn save(d: &Dataset, path: &Path) -> Outcome {
    d.save(path).map_err(|e| dataset_failure(path, e))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    write_atomic(path, text.as_bytes()).map_err(|e| Failure::env(anyhow!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::env(anyhow!("{}: {e}", path.display())))
}

fn metric_params(cli: &Cli) -> Result<MetricParams, Failure> {
    let d = MetricsConfig::default();
    MetricParams::new(cli.alpha.unwrap_or(d.alpha), cli.beta.unwrap_or(d.beta)).map_err(Failure::input)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .with_writer(std::io::stderr)
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Validate { dataset } => {
            let d = load(dataset)?;
            let spans: usize = d.records.iter().map(|r| r.spans.len()).sum();
            println!("ok: {} records, {spans} spans, scheme {}", d.len(), d.scheme);
            Ok(())
        }
        Command::Split { dataset, train_count, train_out, test_out } => {
            let d = load(dataset)?;
            let (train, test) = split_dataset(&d, seed, *train_count).map_err(Failure::input)?;
            save(&train, train_out)?;
            save(&test, test_out)?;
            println!("train {} records, test {} records", train.len(), test.len());
            Ok(())
        }
        Command::Subset { dataset, n, output } => {
            let d = load(dataset)?;
            save(&subset(&d, *n, seed).map_err(Failure::input)?, output)
        }
        Command::Augment { dataset, multiplier, backend, remote, n_synonyms, temperature, output } => {
            let d = load(dataset)?;
            let mut plan = AugmentPlan::new(*multiplier, seed);
            plan.n_synonyms = *n_synonyms;
            plan.temperature = *temperature;
            plan.model = remote.model.clone();
            let result = match backend {
                BackendKind::Mock => augment_dataset(&d, &plan, MockProvider::new(seed)),
                BackendKind::Remote => {
                    let (Some(url), Some(model)) = (&remote.base_url, &remote.model) else {
                        return Err(Failure::input(anyhow!("--backend remote needs --base-url and --model")));
                    };
                    let mut cfg = ProviderConfig::new(url.clone(), model.clone());
                    cfg.api_key_env = remote.api_key_env.clone();
                    let provider = HttpProvider::new(cfg).map_err(Failure::input)?;
                    augment_dataset(&d, &plan, provider)
                }
            };
            let outcome = result.map_err(|e| match e {
                AugmentError::Provider { .. } => Failure::env(e),
                _ => Failure::input(e),
            })?;
            for w in &outcome.warnings {
                tracing::warn!("{w}");
            }
            save(&outcome.dataset, output)?;
            println!("{} records written to {}", outcome.dataset.len(), output.display());
            Ok(())
        }
        Command::EdaAugment { dataset, variants, p_edit, lexicon, stopwords, no_deletion, output } => {
            let d = load(dataset)?;
            let lex = match lexicon {
                Some(p) => SynonymLexicon::load(p).map_err(Failure::input)?,
                None => SynonymLexicon::demo(),
            };
            let stop = match stopwords {
                Some(p) => Stopwords::load(p).map_err(Failure::input)?,
                None => Stopwords::english(),
            };
            let mut cfg = EdaConfig::new(*variants, seed);
            cfg.p_edit = *p_edit;
            cfg.enable_deletion = !no_deletion;
            let out = eda_augment(&d, &cfg, &lex, &stop).map_err(Failure::input)?;
            save(&out, output)?;
            println!("{} records written to {}", out.len(), output.display());
            Ok(())
        }
        Command::ExportFinetune { dataset, principle, output } => {
            let d = load(dataset)?;
            let principle = match principle {
                Some(p) => LessonPrinciple::from_file(d.scheme.clone(), p),
                None => LessonPrinciple::builtin(&d.scheme),
            }
            .map_err(Failure::input)?;
            let records = export_finetune(&d, &principle).map_err(Failure::input)?;
            write_text(output, &to_jsonl(&records))
        }
        Command::Tag { train, input, output } => {
            let gaz = Gazetteer::build(&load(train)?);
            let d = load(input)?;
            let records = d
                .records
                .iter()
                .map(|r| LabeledResponse::new(r.id.clone(), r.text.clone(), gaz.tag(&r.text).to_spans()))
                .collect();
            let tagged = Dataset::new(d.scheme.clone(), records).map_err(Failure::input)?;
            save(&tagged, output)
        }
        Command::Score { gt, pred, label } => score(cli, gt, pred, *label),
        Command::Compare { a, b, alternative } => {
            let read = |p: &Path| -> Result<Vec<f64>, Failure> {
                serde_json::from_str(&read_text(p)?)
                    .map_err(|e| Failure::input(anyhow!("{}: expected a JSON array of numbers: {e}", p.display())))
            };
            let m = mann_whitney_u(&read(a)?, &read(b)?, *alternative).map_err(Failure::input)?;
            let method = match m.method {
                MwuMethod::Exact => "exact",
                MwuMethod::NormalApprox => "normal_approx",
            };
            println!(
                "U1={} U2={} U={} p={} alternative={} method={method} n1={} n2={}",
                m.u1,
                m.u2,
                m.u_min,
                fmt_fixed(m.p, 4),
                m.alternative,
                m.n1,
                m.n2
            );
            Ok(())
        }
        Command::Stats { what: StatsCommand::Spans { dataset } } => {
            let d = load(dataset)?;
            for label in d.scheme.labels() {
                let s = span_length_stats(&d, label);
                let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| fmt_fixed(v, 3));
                println!("{label}: {} spans, mean {}, variance {}", s.n_spans, fmt(s.mean), fmt(s.variance));
                for (len, count) in &s.histogram {
                    println!("  {len:>3} {count:>5} {}", "#".repeat((*count).min(60)));
                }
            }
            Ok(())
        }
        Command::Experiment { config } => {
            let mut cfg = ExperimentConfig::load(config).map_err(|e| match e.kind() {
                FailureKind::Input => Failure::input(e),
                FailureKind::Environment => Failure::env(e),
            })?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            if let Some(a) = cli.alpha {
                cfg.metrics.alpha = a;
            }
            if let Some(b) = cli.beta {
                cfg.metrics.beta = b;
            }
            let report = run_experiment(&cfg).map_err(|e| match e.kind() {
                FailureKind::Input => Failure::input(e),
                FailureKind::Environment => Failure::env(e),
            })?;
            for w in &report.warnings {
                tracing::warn!("{w}");
            }
            print!("{}", markdown_tables(&report.rows, &report.comparisons));
            println!("\nartifacts in {}", cfg.output_dir.display());
            Ok(())
        }
    }
}

/// Predictions as tag sequences keyed by id, from a dataset file or a
/// JSONL file of raw model outputs.
fn load_predictions(gt: &Dataset, pred: &Path) -> Result<HashMap<String, TaggedResponse>, Failure> {
    let is_jsonl = pred.extension().is_some_and(|e| e == "jsonl");
    if !is_jsonl {
        let d = load(pred)?;
        let mut out = HashMap::new();
        for r in &d.records {
            let tagged = r.spans_to_tags().map_err(|e| Failure::input(anyhow!("record `{}`: {e}", r.id)))?;
            out.insert(r.id.clone(), tagged);
        }
        return Ok(out);
    }
    let text = read_text(pred)?;
    let raw = parse_predictions_jsonl(&text, &pred.display().to_string()).map_err(Failure::input)?;
    let texts: HashMap<&str, &str> = gt.records.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
    let mut out = HashMap::new();
    for p in raw {
        let Some(text) = texts.get(p.id.as_str()) else {
            tracing::warn!("prediction for unknown id `{}` ignored", p.id);
            continue;
        };
        let rec = PredictionRecord::build(&p.id, text, &p.raw, &gt.scheme);
        if let Err(e) = &rec.parsed {
            tracing::warn!("`{}`: unusable model output ({e}); scored as no praise", p.id);
        }
        for d in &rec.diagnostics {
            tracing::warn!("`{}`: {d:?}", p.id);
        }
        out.insert(p.id, rec.tagged);
    }
    Ok(out)
}

fn score(cli: &Cli, gt: &Path, pred: &Path, label: Option<PraiseLabel>) -> Outcome {
    let params = metric_params(cli)?;
    let gt = load(gt)?;
    let preds = load_predictions(&gt, pred)?;
    let labels: Vec<PraiseLabel> = match label {
        Some(l) if !gt.scheme.contains(l) => {
            return Err(Failure::input(anyhow!("label `{l}` is not in the dataset scheme {}", gt.scheme)))
        }
        Some(l) => vec![l],
        None => gt.scheme.labels().collect(),
    };
    println!("label,iou,m_iou,f_beta,n,n_empty");
    for l in labels {
        let s = score_corpus(&gt, &preds, l, params).map_err(Failure::input)?;
        println!(
            "{l},{},{},{},{},{}",
            fmt_fixed(s.mean.iou, 4),
            fmt_fixed(s.mean.m_iou, 4),
            fmt_fixed(s.mean.f_beta, 4),
            s.per_response.len(),
            s.n_empty
        );
    }
    Ok(())
}
