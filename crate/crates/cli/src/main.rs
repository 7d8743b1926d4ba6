//! `flowlm`: batch CLI wiring the flow-anomaly pipeline end to end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/model error.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use flowlm_core::evaluator::{export_roc, roc, summary_line};
use flowlm_core::experiments::{run_scenario, Scenario, ScenarioConfig};
use flowlm_core::ingest::{deduplicate, parse_flow_csv, write_flow_csv, FlowRecord, Label, SchemaMap};
use flowlm_core::neural::{init_model, load_model, save_model, train};
use flowlm_core::scorer::{
    read_scores_csv, score_all, sort_scored, write_scores_csv, Aggregation,
};
use flowlm_core::sequencer::{group_dyad_hours, windows, LabelRule, Window};
use flowlm_core::synthgen::{generate, SynthConfig};
use flowlm_core::tokenizer::{SchemeKind, Vocabulary};

#[derive(Parser)]
#[command(
    name = "flowlm",
    about = "Unsupervised flow-metadata anomaly detection via a next-token sequence model",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a flow CSV (optionally schema-mapped), de-duplicate, and write
    /// the canonical flow CSV.
    Ingest(IngestArgs),
    /// Generate a labeled synthetic flow corpus.
    Synth(SynthArgs),
    /// Train a model on a canonical flow CSV and save it.
    Train(TrainArgs),
    /// Score a canonical flow CSV under a saved model.
    Score(ScoreArgs),
    /// Compute ROC/AUC from a scores CSV.
    Eval(EvalArgs),
    /// Run a full scenario: split, train, score, evaluate, write artifacts.
    Run(RunArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Input flow CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// key=value schema map (canonical_name=source_column,
    /// protocol.<src>=<normalized>, tz_offset_secs=<secs>).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output canonical flow CSV.
    #[arg(long)]
    out: PathBuf,
    /// Keep exact duplicate rows instead of dropping them.
    #[arg(long)]
    keep_duplicates: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// key=value generator config (seed, benign_dyad_hours,
    /// attack_dyad_hours, days, mix_*, ip_pool_size).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output canonical flow CSV.
    #[arg(long)]
    out: PathBuf,
    /// Override a single config key, e.g. --set seed=7 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Canonical flow CSV to train on.
    #[arg(long = "in")]
    input: PathBuf,
    /// Feature scheme: proto_byte or service_port.
    #[arg(long)]
    scheme: String,
    /// key=value model/scenario config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the model file.
    #[arg(long)]
    model_out: PathBuf,
    /// Optional vocabulary CSV export.
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    /// Override a single config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Canonical flow CSV to score.
    #[arg(long = "in")]
    input: PathBuf,
    /// Model file from `train` or `run`.
    #[arg(long)]
    model: PathBuf,
    /// Output scores CSV.
    #[arg(long)]
    out: PathBuf,
    /// Window-loss aggregation: max (default) or mean.
    #[arg(long, default_value = "max")]
    agg: String,
    /// Dyad-hour label rule: any (default) or majority.
    #[arg(long, default_value = "any")]
    label_rule: String,
}

#[derive(Args)]
struct EvalArgs {
    /// Scores CSV from `score` or `run`.
    #[arg(long)]
    scores: PathBuf,
    /// Output ROC CSV.
    #[arg(long)]
    roc_out: PathBuf,
    /// Scenario name for the summary line.
    #[arg(long, default_value = "-")]
    scenario: String,
    /// Scheme name for the summary line.
    #[arg(long, default_value = "-")]
    scheme: String,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario: clean, dirty, or nodos.
    #[arg(long)]
    scenario: String,
    /// Feature scheme: proto_byte or service_port.
    #[arg(long)]
    scheme: String,
    /// Canonical flow CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory for model, scores, ROC, vocabulary, and report files.
    #[arg(long)]
    outdir: PathBuf,
    /// key=value scenario config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a single config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() {
    let code = match Cli::try_parse() {
        Ok(cli) => match dispatch(cli) {
            Ok(()) => 0,
            Err(err) => {
                eprintln!("error: {err:#}");
                2
            }
        },
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                0
            } else {
                eprint!("{err}");
                1
            }
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Score(args) => cmd_score(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Run(args) => cmd_run(args),
    }
}

fn split_override(raw: &str) -> Result<(&str, &str)> {
    raw.split_once('=')
        .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {raw:?}"))
}

/// FLOWLM_SEED overrides any configured seed when set.
fn env_seed() -> Result<Option<u64>> {
    match std::env::var("FLOWLM_SEED") {
        Ok(raw) => {
            let seed = raw
                .parse::<u64>()
                .map_err(|_| anyhow!("FLOWLM_SEED must be an unsigned integer, got {raw:?}"))?;
            Ok(Some(seed))
        }
        Err(_) => Ok(None),
    }
}

fn read_canonical(path: &Path) -> Result<Vec<FlowRecord>> {
    let file = fs::File::open(path).with_context(|| format!("ingest: opening {}", path.display()))?;
    parse_flow_csv(file, &SchemaMap::default())
        .with_context(|| format!("ingest: parsing {}", path.display()))
}

fn parse_scheme_kind(raw: &str) -> Result<SchemeKind> {
    SchemeKind::parse(raw)
        .ok_or_else(|| anyhow!("unknown scheme {raw:?}, expected proto_byte or service_port"))
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let schema = match &args.schema {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("ingest: reading schema {}", path.display()))?;
            SchemaMap::parse(&text)
                .with_context(|| format!("ingest: schema {}", path.display()))?
        }
        None => SchemaMap::default(),
    };
    let file = fs::File::open(&args.input)
        .with_context(|| format!("ingest: opening {}", args.input.display()))?;
    let parsed = parse_flow_csv(file, &schema)
        .with_context(|| format!("ingest: parsing {}", args.input.display()))?;
    let total = parsed.len();
    let records = if args.keep_duplicates {
        parsed
    } else {
        deduplicate(parsed)
    };
    let out = fs::File::create(&args.out)
        .with_context(|| format!("ingest: creating {}", args.out.display()))?;
    write_flow_csv(&records, out)
        .with_context(|| format!("ingest: writing {}", args.out.display()))?;
    println!(
        "ingest: {} rows parsed, {} written to {}",
        total,
        records.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("synth: reading config {}", path.display()))?;
            SynthConfig::from_kv(&text)
                .with_context(|| format!("synth: config {}", path.display()))?
        }
        None => SynthConfig::default(),
    };
    for raw in &args.overrides {
        let (key, value) = split_override(raw)?;
        cfg.apply_kv_pair(key, value)
            .with_context(|| format!("synth: override {raw:?}"))?;
    }
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }
    let csv = generate(&cfg).context("synth: generating corpus")?;
    fs::write(&args.out, csv)
        .with_context(|| format!("synth: writing {}", args.out.display()))?;
    println!(
        "synth: seed={} benign={} attack={} days={} -> {}",
        cfg.seed,
        cfg.benign_dyad_hours,
        cfg.attack_dyad_hours,
        cfg.days,
        args.out.display()
    );
    Ok(())
}

fn load_scenario_config(
    config: Option<&PathBuf>,
    overrides: &[String],
    stage: &str,
) -> Result<ScenarioConfig> {
    let mut cfg = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("{stage}: reading config {}", path.display()))?;
            ScenarioConfig::from_kv(&text)
                .with_context(|| format!("{stage}: config {}", path.display()))?
        }
        None => ScenarioConfig::default(),
    };
    for raw in overrides {
        let (key, value) = split_override(raw)?;
        cfg.apply_kv_pair(key, value)
            .with_context(|| format!("{stage}: override {raw:?}"))?;
    }
    if let Some(seed) = env_seed()? {
        cfg.model.seed = seed;
    }
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_scenario_config(args.config.as_ref(), &args.overrides, "train")?;
    cfg.scheme.kind = parse_scheme_kind(&args.scheme)?;

    let records = read_canonical(&args.input)?;
    if records.is_empty() {
        return Err(anyhow!("train: {} holds no records", args.input.display()));
    }
    let vocab = Vocabulary::build(records.iter().map(|r| cfg.scheme.token(r)));
    let mut model_cfg = cfg.model.clone();
    model_cfg.vocab_size = vocab.size();

    let dhs = group_dyad_hours(&records, &cfg.scheme, &vocab, cfg.label_rule);
    let train_windows: Vec<Window> = dhs
        .iter()
        .flat_map(|dh| windows(dh, model_cfg.window))
        .collect();

    let mut model = init_model(model_cfg, vocab, cfg.scheme).context("train: building model")?;
    let history = train(&mut model, &train_windows).context("train: training")?;

    let out = fs::File::create(&args.model_out)
        .with_context(|| format!("train: creating {}", args.model_out.display()))?;
    save_model(&model, out)
        .with_context(|| format!("train: writing {}", args.model_out.display()))?;
    if let Some(vocab_out) = &args.vocab_out {
        let out = fs::File::create(vocab_out)
            .with_context(|| format!("train: creating {}", vocab_out.display()))?;
        model
            .vocab
            .write_csv(out)
            .with_context(|| format!("train: writing {}", vocab_out.display()))?;
    }
    println!(
        "train: seed={} V={} windows={} final_loss={:.6} -> {}",
        model.config.seed,
        model.config.vocab_size,
        train_windows.len(),
        history.last().copied().unwrap_or(f64::NAN),
        args.model_out.display()
    );
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let agg = Aggregation::parse(&args.agg)
        .ok_or_else(|| anyhow!("unknown aggregation {:?}, expected max or mean", args.agg))?;
    let label_rule = LabelRule::parse(&args.label_rule)
        .ok_or_else(|| anyhow!("unknown label rule {:?}, expected any or majority", args.label_rule))?;

    let file = fs::File::open(&args.model)
        .with_context(|| format!("score: opening model {}", args.model.display()))?;
    let model = load_model(file)
        .with_context(|| format!("score: loading model {}", args.model.display()))?;

    let records = read_canonical(&args.input)?;
    let dhs = group_dyad_hours(&records, &model.scheme, &model.vocab, label_rule);
    let mut scored = score_all(&model, &dhs, agg)
        .with_context(|| format!("score: scoring {}", args.input.display()))?;
    sort_scored(&mut scored);

    let out = fs::File::create(&args.out)
        .with_context(|| format!("score: creating {}", args.out.display()))?;
    write_scores_csv(&scored, out)
        .with_context(|| format!("score: writing {}", args.out.display()))?;
    println!(
        "score: {} dyad-hours scored ({}) -> {}",
        scored.len(),
        agg.as_str(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let file = fs::File::open(&args.scores)
        .with_context(|| format!("eval: opening {}", args.scores.display()))?;
    let scored = read_scores_csv(file)
        .with_context(|| format!("eval: parsing {}", args.scores.display()))?;
    let curve = roc(&scored)
        .with_context(|| format!("eval: {}", args.scores.display()))?;
    let out = fs::File::create(&args.roc_out)
        .with_context(|| format!("eval: creating {}", args.roc_out.display()))?;
    export_roc(&curve, out)
        .with_context(|| format!("eval: writing {}", args.roc_out.display()))?;

    let normal = scored.iter().filter(|s| s.label == Label::Normal).count();
    let attack = scored.len() - normal;
    println!(
        "{}",
        summary_line(&args.scenario, &args.scheme, normal, attack, curve.auc)
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = load_scenario_config(args.config.as_ref(), &args.overrides, "run")?;
    cfg.scenario = Scenario::parse(&args.scenario)
        .ok_or_else(|| anyhow!("unknown scenario {:?}, expected clean, dirty, or nodos", args.scenario))?;
    cfg.scheme.kind = parse_scheme_kind(&args.scheme)?;

    let records = read_canonical(&args.input)?;
    let (report, _) = run_scenario(&records, &cfg, &args.outdir)
        .with_context(|| format!("run: {} on {}", args.scenario, args.input.display()))?;
    println!("{}", report.summary());
    print!("{}", report.to_kv());
    Ok(())
}
