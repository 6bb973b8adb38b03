use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};

use ctxforecast::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use ctxforecast::contexts::{
    assign_contexts, kmeans, parse_doc_map, parse_quadruples, tokenize, top_terms_report, vectorize,
};
use ctxforecast::decoder::argmax;
use ctxforecast::eval::{ablation_table, evaluate_split, run_ablation, AblationRow, EvalOptions};
use ctxforecast::event::{load_dataset, read_vocab_file, save_dataset, DatasetSplits, SplitKind, Vocab};
use ctxforecast::model::{parameter_count, Variant};
use ctxforecast::synthetic::{context_blind_bound, generate, PlantedSpec};
use ctxforecast::train::{fit, EpochLog, FitOptions, TrainConfig};

#[derive(Parser)]
#[command(name = "ctxforecast", version, about = "Context-aware temporal event forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label events with TF-IDF/K-means clusters of their source documents.
    GenContexts(GenContextsArgs),
    /// Write a planted-context synthetic dataset.
    GenSynthetic(GenSyntheticArgs),
    /// Train a model and write the best checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split.
    Eval(EvalArgs),
    /// Train and test every ablation variant.
    Ablate(AblateArgs),
    /// Top-n objects for one query.
    Predict(PredictArgs),
}

#[derive(Args)]
struct GenContextsArgs {
    /// One document per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Quadruple file `s r o t` (tab separated ids).
    #[arg(long)]
    events: PathBuf,
    /// `event-line doc-line` pairs, 0-based.
    #[arg(long)]
    map: PathBuf,
    /// Number of contexts.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Directory holding entity2id.txt and relation2id.txt (default: numbered names).
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Spec file of `key = value` lines.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    history: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hyper_layers: Option<usize>,
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also append epoch lines to this file.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory (default: the one recorded in the checkpoint).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: SplitKind,
    /// Time-aware filtered ranking.
    #[arg(long)]
    filtered: bool,
    /// Average all context heads.
    #[arg(long)]
    avr_context: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated variants (default: all).
    #[arg(long, value_delimiter = ',')]
    variants: Vec<Variant>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Subject id or name.
    #[arg(long)]
    subject: String,
    /// Relation id or name (`inverse:<name>` for inverse relations).
    #[arg(long)]
    relation: String,
    /// Context id or name.
    #[arg(long)]
    context: String,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Query time; history is the window before it (default: after the last snapshot).
    #[arg(long)]
    time: Option<usize>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenContexts(a) => gen_contexts(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Predict(a) => predict(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn label(path: &Path) -> String {
    path.display().to_string()
}

fn gen_contexts(a: GenContextsArgs) -> Result<()> {
    let docs: Vec<Vec<String>> = read(&a.corpus)?.lines().map(tokenize).collect();
    let events = parse_quadruples(&read(&a.events)?, &label(&a.events))?;
    let map = parse_doc_map(&read(&a.map)?, &label(&a.map))?;
    if events.is_empty() {
        bail!("{} holds no events", a.events.display());
    }
    let vectors = vectorize(&docs)?;
    let clusters = kmeans(&vectors.dense(), a.k, a.seed, a.max_iters)?;
    let labelled = assign_contexts(&events, &map, &clusters.labels)?;

    let (entities, relations) = match &a.vocab {
        Some(dir) => (read_vocab_file(&dir.join("entity2id.txt"))?, read_vocab_file(&dir.join("relation2id.txt"))?),
        None => {
            let ne = events.iter().map(|e| e.subject.max(e.object)).max().unwrap_or(0) + 1;
            let nr = events.iter().map(|e| e.relation).max().unwrap_or(0) + 1;
            ((0..ne).map(|i| format!("e{i}")).collect(), (0..nr).map(|i| format!("r{i}")).collect())
        }
    };
    let contexts = (0..a.k).map(|i| format!("cluster{i}")).collect();
    let vocab = Vocab::new(entities, relations, contexts)?;
    let horizon = events.iter().map(|e| e.time).max().unwrap_or(0) + 1;
    let splits = DatasetSplits::from_original_events(&labelled, &vocab, horizon, Default::default())?;
    save_dataset(&a.out, &vocab, &splits)?;
    let top = a.out.join("top_terms.txt");
    fs::write(&top, top_terms_report(&vectors, &clusters, 10)).with_context(|| format!("writing {}", top.display()))?;
    let flagged = vectors.empty.iter().filter(|&&e| e).count();
    eprintln!(
        "{} events, {} documents ({flagged} empty), K={}, {} k-means iterations, inertia {:.6}",
        labelled.len(),
        docs.len(),
        a.k,
        clusters.iterations,
        clusters.inertia.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn gen_synthetic(a: GenSyntheticArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => PlantedSpec::parse(&read(p)?, &label(p))?,
        None => PlantedSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let data = generate(&spec)?;
    save_dataset(&a.out, &data.vocab, &data.splits)?;
    let bound = context_blind_bound(&data.splits)?;
    eprintln!(
        "{} events over {} timestamps; context-blind HIT@1 bound {bound:.4}",
        data.events.len(),
        spec.timestamps
    );
    Ok(())
}

/// Precedence: flag > config file > dataset-derived K > defaults.
fn build_config(args: &ConfigArgs, vocab: &Vocab) -> Result<TrainConfig> {
    let mut cfg = TrainConfig {
        contexts: vocab.num_contexts(),
        ..TrainConfig::default()
    };
    if let Some(p) = &args.config {
        cfg.apply_text(&read(p)?, &label(p))?;
    }
    macro_rules! set {
        ($flag:ident => $field:ident) => {
            if let Some(v) = args.$flag.clone() {
                cfg.$field = v;
            }
        };
    }
    set!(seed => seed);
    set!(dim => dim);
    set!(lr => lr);
    set!(epochs => max_epochs);
    set!(patience => patience);
    set!(history => history);
    set!(layers => layers);
    set!(hyper_layers => hyper_layers);
    set!(variant => variant);
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let (vocab, splits) = load_dataset(&a.data)?;
    let cfg = build_config(&a.config, &vocab)?;
    eprintln!(
        "parameters: {}",
        parameter_count(&cfg, vocab.num_entities(), vocab.num_relations_augmented())
    );
    let mut log_file = match &a.log {
        Some(p) => Some(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => None,
    };
    let mut write_err = None;
    let mut on_epoch = |l: &EpochLog| {
        println!("{}", l.line());
        if let Some(f) = log_file.as_mut() {
            if let Err(e) = writeln!(f, "{}", l.line()) {
                write_err.get_or_insert(e);
            }
        }
    };
    let outcome = fit(&vocab, &splits, cfg, FitOptions { threads: a.threads }, &mut on_epoch)?;
    if let Some(e) = write_err {
        return Err(anyhow!(e).context("writing training log"));
    }
    let mut ckpt = outcome.checkpoint;
    let data_dir = a.data.canonicalize().unwrap_or(a.data.clone());
    ckpt.data_dir = Some(data_dir.display().to_string());
    save_checkpoint(&ckpt, &a.out)?;
    eprintln!(
        "best epoch {} (validation MRR {:.6}) saved to {}",
        ckpt.epoch,
        ckpt.best_valid_mrr,
        a.out.display()
    );
    Ok(())
}

fn load_pair(ckpt: &Path, data: Option<&Path>) -> Result<(Checkpoint, Vocab, DatasetSplits)> {
    let ckpt = load_checkpoint(ckpt)?;
    let dir = match (data, &ckpt.data_dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => bail!("checkpoint records no dataset; pass --data"),
    };
    let (vocab, splits) = load_dataset(&dir)?;
    ckpt.check_vocab(&vocab)?;
    Ok((ckpt, vocab, splits))
}

fn eval(a: EvalArgs) -> Result<()> {
    let (ckpt, vocab, splits) = load_pair(&a.ckpt, a.data.as_deref())?;
    let opts = EvalOptions {
        filtered: a.filtered,
        avr_context: a.avr_context,
        threads: a.threads,
    };
    let report = evaluate_split(
        &ckpt.model,
        &splits.timeline(),
        splits.split(a.split),
        &splits.masked_entities,
        opts,
    )?;
    if a.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.table(Some(&vocab)));
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let (vocab, splits) = load_dataset(&a.data)?;
    let cfg = build_config(&a.config, &vocab)?;
    let variants = if a.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variants.clone()
    };
    let opts = EvalOptions {
        threads: a.threads,
        ..EvalOptions::default()
    };
    let mut rows = Vec::new();
    for v in variants {
        eprintln!("training {v}");
        let mut on_epoch = |l: &EpochLog| eprintln!("{v}\t{}", l.line());
        let report = run_ablation(v, &vocab, &splits, &cfg, opts, &mut on_epoch)?;
        rows.push(AblationRow { variant: v, report });
    }
    if a.json {
        let obj: serde_json::Map<String, serde_json::Value> = rows
            .iter()
            .map(|r| {
                let v = serde_json::from_str(&r.report.to_json()).expect("report json");
                (r.variant.name().to_string(), v)
            })
            .collect();
        println!("{}", serde_json::Value::Object(obj));
    } else {
        print!("{}", ablation_table(&rows));
    }
    Ok(())
}

fn resolve(input: &str, count: usize, name_of: impl Fn(usize) -> Option<String>, what: &str) -> Result<usize> {
    if let Ok(id) = input.parse::<usize>() {
        if id < count {
            return Ok(id);
        }
        bail!("{what} id {id} out of range (0..{count})");
    }
    (0..count)
        .find(|&i| name_of(i).as_deref() == Some(input))
        .ok_or_else(|| anyhow!("unknown {what} {input:?}"))
}

fn predict(a: PredictArgs) -> Result<()> {
    let (ckpt, vocab, splits) = load_pair(&a.ckpt, a.data.as_deref())?;
    let model = &ckpt.model;
    let s = resolve(&a.subject, vocab.num_entities(), |i| vocab.entity_name(i).map(str::to_string), "subject")?;
    let r = resolve(&a.relation, vocab.num_relations_augmented(), |i| vocab.relation_name(i), "relation")?;
    let c = resolve(&a.context, vocab.num_contexts(), |i| vocab.context_name(i).map(str::to_string), "context")?;
    let timeline = splits.timeline();
    let t = a.time.unwrap_or(timeline.end());
    let history = if t == 0 {
        Vec::new()
    } else {
        timeline.history_window((t - 1).min(timeline.end().saturating_sub(1)), model.config.history)?
    };
    let state = model.embed(&history)?;
    let probs = model.scorer().score(&state, s, r, c)?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&x, &y| probs[y].total_cmp(&probs[x]).then(x.cmp(&y)));
    debug_assert_eq!(order.first().copied(), Some(argmax(&probs)));
    let top: Vec<usize> = order.into_iter().take(a.top).collect();
    if a.json {
        let rows: Vec<serde_json::Value> = top
            .iter()
            .map(|&o| serde_json::json!({"id": o, "name": vocab.entity_name(o), "probability": probs[o]}))
            .collect();
        println!("{}", serde_json::Value::Array(rows));
    } else {
        for o in top {
            println!("{o}\t{}\t{:.6}", vocab.entity_name(o).unwrap_or("?"), probs[o]);
        }
    }
    Ok(())
}
