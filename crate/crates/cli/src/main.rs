use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use probekit::bench::{self, BenchOptions, BenchRunner, CountingAllocator, PipelineRunner, PromptRunner};
use probekit::config::{self, require, RunConfig};
use probekit::dataset::{self, DatasetId, DatasetSpec, Example};
use probekit::extract::{self, ExtractionMeta};
use probekit::model::{self, ModelConfig, Transformer};
use probekit::pooling::{pool_store, PoolingMethod};
use probekit::probe::{fit_probe, ClassifierId, ProbeSpec};
use probekit::prompt::{evaluate_prompting, Decoding, TemplateId, TransformerChat};
use probekit::surgeon::{build_truncated, TruncatedPipeline};
use probekit::sweep::{self, SweepGrid};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

#[derive(Parser)]
#[command(name = "probekit", version, about = "Layer-wise probing and truncated classifiers for decoder-only transformers")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed and PROBEKIT_SEED (default 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for all outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a dataset to its reference split sizes under a length cap.
    Prep(PrepArgs),
    /// Run texts through a model and store per-layer activations.
    Extract(ExtractArgs),
    /// Train probes over a (layer, pooling, classifier) grid.
    Sweep(SweepArgs),
    /// Re-render plots and tables from a saved sweep report.
    Report(ReportArgs),
    /// Build a truncated model with a trained classification head.
    Build(BuildArgs),
    /// Classify texts with a built pipeline.
    Classify(ClassifyArgs),
    /// Score a chat model with a prompt template.
    EvalPrompt(EvalPromptArgs),
    /// Measure latency, throughput and peak memory.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PrepArgs {
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    toy_layers: Option<usize>,
    #[arg(long)]
    toy_hidden_dim: Option<usize>,
    #[arg(long)]
    toy_vocab_size: Option<usize>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Comma-separated layer ids (default: all).
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    train_store: Option<PathBuf>,
    #[arg(long)]
    test_store: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    poolings: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    classifiers: Option<Vec<String>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Write measured wall times into cells.csv (makes output nondeterministic).
    #[arg(long)]
    include_timings: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    sweep_report: Option<PathBuf>,
    #[arg(long)]
    include_timings: bool,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    train_store: Option<PathBuf>,
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long)]
    pooling: Option<String>,
    #[arg(long)]
    classifier: Option<String>,
    /// Take layer, pooling and classifier from this report's best cell.
    #[arg(long)]
    sweep_report: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    pipeline_dir: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    texts: Vec<String>,
}

#[derive(Args)]
struct EvalPromptArgs {
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    pipeline_dir: Option<PathBuf>,
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    device: Option<String>,
    /// Pair rows with reference SST-2 figures and add ratio columns.
    #[arg(long)]
    with_reference: bool,
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

/// Folds command-line flags into the config so the saved copy reproduces the run.
fn merge(cfg: &mut RunConfig, cmd: Command) -> Command {
    match &cmd {
        Command::Prep(a) => {
            let s = &mut cfg.prep;
            set(&mut s.dataset, a.dataset.clone());
            set(&mut s.train, a.train.clone());
            set(&mut s.test, a.test.clone());
            set(&mut s.train_size, a.train_size);
            set(&mut s.test_size, a.test_size);
            set(&mut s.max_len, a.max_len);
        }
        Command::Extract(a) => {
            let s = &mut cfg.extract;
            set(&mut s.model_dir, a.model_dir.clone());
            set(&mut s.toy_layers, a.toy_layers);
            set(&mut s.toy_hidden_dim, a.toy_hidden_dim);
            set(&mut s.toy_vocab_size, a.toy_vocab_size);
            set(&mut s.train, a.train.clone());
            set(&mut s.test, a.test.clone());
            set(&mut s.layers, a.layers.clone());
            set(&mut s.batch_size, a.batch_size);
        }
        Command::Sweep(a) => {
            let s = &mut cfg.sweep;
            set(&mut s.train_store, a.train_store.clone());
            set(&mut s.test_store, a.test_store.clone());
            set(&mut s.layers, a.layers.clone());
            set(&mut s.poolings, a.poolings.clone());
            set(&mut s.classifiers, a.classifiers.clone());
            set(&mut s.trials, a.trials);
            if a.include_timings {
                s.include_timings = Some(true);
            }
        }
        Command::Report(a) => {
            set(&mut cfg.report.sweep_report, a.sweep_report.clone());
            if a.include_timings {
                cfg.report.include_timings = Some(true);
            }
        }
        Command::Build(a) => {
            let s = &mut cfg.build;
            set(&mut s.model_dir, a.model_dir.clone());
            set(&mut s.train_store, a.train_store.clone());
            set(&mut s.layer, a.layer);
            set(&mut s.pooling, a.pooling.clone());
            set(&mut s.classifier, a.classifier.clone());
            set(&mut s.sweep_report, a.sweep_report.clone());
            set(&mut s.trials, a.trials);
        }
        Command::Classify(a) => {
            set(&mut cfg.classify.pipeline_dir, a.pipeline_dir.clone());
            set(&mut cfg.classify.input, a.input.clone());
            if !a.texts.is_empty() {
                cfg.classify.texts = Some(a.texts.clone());
            }
        }
        Command::EvalPrompt(a) => {
            let s = &mut cfg.eval_prompt;
            set(&mut s.model_dir, a.model_dir.clone());
            set(&mut s.data, a.data.clone());
            set(&mut s.template, a.template.clone());
            set(&mut s.max_new_tokens, a.max_new_tokens);
            set(&mut s.limit, a.limit);
        }
        Command::Bench(a) => {
            let s = &mut cfg.bench;
            set(&mut s.pipeline_dir, a.pipeline_dir.clone());
            set(&mut s.model_dir, a.model_dir.clone());
            set(&mut s.data, a.data.clone());
            set(&mut s.template, a.template.clone());
            set(&mut s.max_new_tokens, a.max_new_tokens);
            set(&mut s.warmup, a.warmup);
            set(&mut s.iters, a.iters);
            set(&mut s.batch_size, a.batch_size);
            set(&mut s.device, a.device.clone());
        }
    }
    cmd
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Dataset name from a split file: `sst2_train.jsonl` gives `sst2`; a bare
/// `train.jsonl` falls back to the parent directory name.
fn dataset_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let trimmed = stem.trim_end_matches("train").trim_end_matches("test").trim_end_matches(['_', '-', '.']);
    if !trimmed.is_empty() {
        return trimmed.to_string();
    }
    path.parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into())
}

fn default_label_names(labels: &[i64]) -> BTreeMap<i64, String> {
    const EMOTIONS: [&str; 6] = ["sadness", "joy", "love", "anger", "fear", "surprise"];
    let names: Vec<String> = match labels {
        [0, 1] => vec!["negative".into(), "positive".into()],
        l if l == [0, 1, 2, 3, 4, 5] => EMOTIONS.iter().map(|s| s.to_string()).collect(),
        l => l.iter().map(i64::to_string).collect(),
    };
    labels.iter().copied().zip(names).collect()
}

fn read_texts(path: &Path) -> Result<Vec<String>> {
    let content = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if is_jsonl {
            let v: serde_json::Value =
                serde_json::from_str(line).with_context(|| format!("{}: line {}", path.display(), i + 1))?;
            let t = v["text"].as_str().with_context(|| format!("{}: line {} has no text", path.display(), i + 1))?;
            out.push(t.to_string());
        } else {
            out.push(line.to_string());
        }
    }
    Ok(out)
}

fn prep(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let s = &cfg.prep;
    let id: DatasetId = require(&s.dataset, "prep.dataset")?.parse()?;
    let mut spec = DatasetSpec::reference(id);
    if let Some(v) = s.train_size {
        spec.train_size = v;
    }
    if let Some(v) = s.test_size {
        spec.test_size = v;
    }
    if let Some(v) = s.max_len {
        spec.max_len = v;
    }
    let train = dataset::load_examples(&require(&s.train, "prep.train")?)?;
    let test = dataset::load_examples(&require(&s.test, "prep.test")?)?;
    let reduced = dataset::reduce_dataset(&train, &test, &spec, seed)?;
    let train_report = dataset::validate_reduction(&reduced.train, &dataset::compute_stats(&train)?, spec.max_len)?;
    let test_report = dataset::validate_reduction(&reduced.test, &dataset::compute_stats(&test)?, spec.max_len)?;
    dataset::save_reduction(out, &reduced, &train_report, &test_report)?;
    println!("{id}: train {} -> {}, test {} -> {}", train.len(), reduced.train.len(), test.len(), reduced.test.len());
    Ok(())
}

fn load_or_create_model(cfg: &RunConfig, seed: u64, out: &Path) -> Result<(Transformer, PathBuf)> {
    let s = &cfg.extract;
    if let Some(dir) = &s.model_dir {
        return Ok((model::load_model(dir)?, dir.clone()));
    }
    let layers = require(&s.toy_layers, "extract.model_dir")?;
    let d = s.toy_hidden_dim.unwrap_or(32);
    let vocab = s.toy_vocab_size.unwrap_or(4096);
    let m = Transformer::random(ModelConfig::toy("toy", layers, d, vocab), seed)?;
    let dir = out.join("model");
    model::save_model(&m, &dir)?;
    Ok((m, dir))
}

fn extract_cmd(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let (m, model_dir) = load_or_create_model(cfg, seed, out)?;
    let s = &cfg.extract;
    let layers = s.layers.clone().unwrap_or_else(|| (0..=m.num_blocks()).collect());
    for (split, path) in [("train", require(&s.train, "extract.train")?), ("test", require(&s.test, "extract.test")?)] {
        let examples = dataset::load_examples(&path)?;
        let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
        let labels: Vec<i64> = examples.iter().map(|e| e.label).collect();
        let batch = extract::tokenize(&m, &texts)?;
        let mut meta = ExtractionMeta::new(dataset_name(&path), seed);
        if let Some(b) = s.batch_size {
            meta.batch_size = b;
        }
        let store = extract::extract_activations(&m, &batch, &layers, &labels, &meta)?;
        let dir = out.join("stores").join(split);
        store.save(&dir)?;
        println!("{split}: {} examples, layers {:?} -> {}", store.num_examples(), layers, dir.display());
    }
    println!("model: {}", model_dir.display());
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let s = &cfg.sweep;
    let train = extract::ActivationStore::load(&require(&s.train_store, "sweep.train_store")?)?;
    let test = extract::ActivationStore::load(&require(&s.test_store, "sweep.test_store")?)?;
    let layers = s.layers.clone().unwrap_or_else(|| train.manifest.layer_ids.clone());
    let poolings = match &s.poolings {
        Some(p) => p.iter().map(|x| x.parse()).collect::<std::result::Result<Vec<PoolingMethod>, _>>()?,
        None => PoolingMethod::ALL.to_vec(),
    };
    let classifiers = match &s.classifiers {
        Some(c) => c.iter().map(|x| x.parse()).collect::<std::result::Result<Vec<ClassifierId>, _>>()?,
        None => ClassifierId::ALL.to_vec(),
    };
    let mut grid = SweepGrid::new(layers, poolings, classifiers).with_seed(seed);
    if let Some(t) = s.trials {
        grid.trials = t;
    }
    let report = sweep::run_sweep(&train, &test, &grid)?;
    let dir = out.join("sweep");
    sweep::render_report(&report, &dir, s.include_timings.unwrap_or(false))?;
    if let Some(best) = &report.best {
        println!("best: {}", sweep::compact_row(best));
    }
    println!("report: {}", dir.display());
    Ok(())
}

fn report_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = require(&cfg.report.sweep_report, "report.sweep_report")?;
    let report = sweep::load_report(&path).with_context(|| format!("reading {}", path.display()))?;
    let dir = out.join("report");
    sweep::render_report(&report, &dir, cfg.report.include_timings.unwrap_or(false))?;
    print!("{}", sweep::top_k_table(&report, 3));
    Ok(())
}

fn build_cmd(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let s = &cfg.build;
    let best = match &s.sweep_report {
        Some(p) => sweep::load_report(p).with_context(|| format!("reading {}", p.display()))?.best,
        None => None,
    };
    let layer = match (s.layer, &best) {
        (Some(l), _) => l,
        (None, Some(b)) => b.layer,
        (None, None) => bail!(config::ConfigError::MissingField("build.layer".into())),
    };
    let pooling: PoolingMethod = match (&s.pooling, &best) {
        (Some(p), _) => p.parse()?,
        (None, Some(b)) => b.pooling,
        (None, None) => PoolingMethod::Mean,
    };
    let classifier: ClassifierId = match (&s.classifier, &best) {
        (Some(c), _) => c.parse()?,
        (None, Some(b)) => b.classifier_id,
        (None, None) => ClassifierId::LogisticRegression,
    };
    let store = extract::ActivationStore::load(&require(&s.train_store, "build.train_store")?)?;
    let features = pool_store(&store, layer, pooling)?;
    let mut spec = ProbeSpec::new(classifier).with_seed(seed);
    if let Some(t) = s.trials {
        spec = spec.with_trials(t);
    }
    let head = fit_probe(&features, &store.labels, &spec)?;
    let label_names = match &s.label_names {
        Some(m) => m
            .iter()
            .map(|(k, v)| Ok((k.parse::<i64>().with_context(|| format!("label name key `{k}`"))?, v.clone())))
            .collect::<Result<BTreeMap<_, _>>>()?,
        None => default_label_names(&store.label_set()),
    };
    let pipeline = build_truncated(&require(&s.model_dir, "build.model_dir")?, layer, pooling, head, label_names)?;
    let dir = out.join("pipeline");
    pipeline.save(&dir)?;
    let plan = pipeline.plan();
    println!(
        "cut layer {layer}, {} pooling, {}: kept {} of {} parameters ({:.1}% removed) -> {}",
        pooling.display_name(),
        classifier.display_name(),
        plan.kept_params,
        plan.full_params,
        plan.reduction_pct,
        dir.display()
    );
    Ok(())
}

fn classify_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = &cfg.classify;
    let pipeline = TruncatedPipeline::load(&require(&s.pipeline_dir, "classify.pipeline_dir")?)?;
    let mut texts = s.texts.clone().unwrap_or_default();
    if let Some(p) = &s.input {
        texts.extend(read_texts(p)?);
    }
    if texts.is_empty() {
        bail!(config::ConfigError::MissingField("classify.input".into()));
    }
    let labels = pipeline.classify(&texts)?;
    let names = pipeline.classify_named(&texts)?;
    let mut log = String::new();
    for (i, ((t, l), n)) in texts.iter().zip(&labels).zip(&names).enumerate() {
        println!("{l}\t{n}\t{t}");
        log.push_str(&serde_json::json!({"index": i, "text": t, "label": l, "name": n}).to_string());
        log.push('\n');
    }
    write(&out.join("predictions.jsonl"), log)
}

fn load_data(path: &Path, limit: Option<usize>) -> Result<Vec<Example>> {
    let mut ex = dataset::load_examples(path)?;
    if let Some(n) = limit {
        ex.truncate(n);
    }
    Ok(ex)
}

fn eval_prompt_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = &cfg.eval_prompt;
    let m = model::load_model(&require(&s.model_dir, "eval_prompt.model_dir")?)?;
    let template: TemplateId = require(&s.template, "eval_prompt.template")?.parse()?;
    let data = load_data(&require(&s.data, "eval_prompt.data")?, s.limit)?;
    let examples: Vec<(String, i64)> = data.into_iter().map(|e| (e.text, e.label)).collect();
    let decoding = Decoding { max_new_tokens: s.max_new_tokens.unwrap_or(template.default_max_new_tokens()) };
    let eval = evaluate_prompting(&TransformerChat { model: &m }, &examples, template, decoding)?;
    eval.write_log(&out.join("prompt_log.jsonl"))?;
    println!(
        "{template}: accuracy {:.4}, unparseable {:.4} over {} examples",
        eval.accuracy, eval.unparseable_rate, eval.n
    );
    Ok(())
}

fn bench_cmd(cfg: &RunConfig, out: &Path, with_reference: bool) -> Result<()> {
    let s = &cfg.bench;
    let data = load_data(&require(&s.data, "bench.data")?, None)?;
    let samples: Vec<String> = data.into_iter().map(|e| e.text).collect();
    let opts = BenchOptions {
        warmup: s.warmup.unwrap_or(bench::MIN_WARMUP),
        iters: s.iters.unwrap_or(bench::MIN_ITERS),
        batch_size: s.batch_size.unwrap_or(1),
        device: s.device.clone().unwrap_or_else(|| "cpu".into()),
    };
    let full = s.model_dir.as_ref().map(|d| model::load_model(d)).transpose()?;
    let pipeline = s.pipeline_dir.as_ref().map(|d| TruncatedPipeline::load(d)).transpose()?;
    if full.is_none() && pipeline.is_none() {
        bail!(config::ConfigError::MissingField("bench.pipeline_dir".into()));
    }
    let template: TemplateId = s.template.as_deref().unwrap_or("zs_binary").parse()?;
    let mut runners: Vec<(Box<dyn BenchRunner + '_>, &str)> = Vec::new();
    if let Some(m) = &full {
        let max_new_tokens = s.max_new_tokens.unwrap_or(template.default_max_new_tokens());
        let r = PromptRunner { name: format!("full model ({template})"), model: m, template, max_new_tokens };
        runners.push((Box::new(r), "Instruct-Llama 3.2 (1B)"));
    }
    if let Some(p) = &pipeline {
        let r = PipelineRunner { name: format!("truncated (cut {})", p.cut_layer()), pipeline: p };
        runners.push((Box::new(r), "Truncated Llama 3.2 (1B) Instruct"));
    }
    let mut results = Vec::new();
    for (r, _) in &runners {
        results.push(bench::measure_efficiency(r.as_ref(), &samples, &opts)?);
    }
    let table = if with_reference {
        let all = bench::sst2_reference_rows();
        let refs: Vec<_> =
            runners.iter().filter_map(|(_, name)| all.iter().find(|r| r.name == *name).cloned()).collect();
        bench::compare_report(&results, Some(&refs))
    } else {
        bench::compare_report(&results, None)
    };
    print!("{table}");
    write(&out.join("bench.md"), &table)?;
    write(&out.join("bench.json"), serde_json::to_string_pretty(&results)?)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = config::resolve_seed(cli.seed, cfg.seed)?;
    cfg.seed = Some(seed);
    if cli.out.is_some() {
        cfg.out_dir = cli.out.clone();
    }
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("probekit-run"));
    cfg.out_dir = Some(out.clone());
    let command = merge(&mut cfg, cli.command);
    let with_reference = matches!(&command, Command::Bench(a) if a.with_reference);
    let name = match &command {
        Command::Prep(_) => "prep",
        Command::Extract(_) => "extract",
        Command::Sweep(_) => "sweep",
        Command::Report(_) => "report",
        Command::Build(_) => "build",
        Command::Classify(_) => "classify",
        Command::EvalPrompt(_) => "eval-prompt",
        Command::Bench(_) => "bench",
    };
    match command {
        Command::Prep(_) => prep(&cfg, seed, &out)?,
        Command::Extract(_) => extract_cmd(&cfg, seed, &out)?,
        Command::Sweep(_) => sweep_cmd(&cfg, seed, &out)?,
        Command::Report(_) => report_cmd(&cfg, &out)?,
        Command::Build(_) => build_cmd(&cfg, seed, &out)?,
        Command::Classify(_) => classify_cmd(&cfg, &out)?,
        Command::EvalPrompt(_) => eval_prompt_cmd(&cfg, &out)?,
        Command::Bench(_) => bench_cmd(&cfg, &out, with_reference)?,
    }
    write(&out.join(format!("config.{name}.toml")), cfg.to_toml())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
