//! Scenario orchestration: build train/eval splits, train, score, evaluate,
//! and write run artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use thiserror::Error;

use crate::evaluator::{export_roc, roc, summary_line, EvalError, RocCurve};
use crate::ingest::{filter_date_range, DateRange, FlowRecord, Label};
use crate::kv::{self, KvError};
use crate::neural::{init_model, save_model, train, ModelConfig, ModelError};
use crate::scorer::{score_all, sort_scored, write_scores_csv, Aggregation, ScoreError};
use crate::sequencer::{group_dyad_hours, windows, LabelRule, Window};
use crate::tokenizer::{FeatureScheme, SchemeKind, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Clean,
    Dirty,
    NoDos,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Clean => "clean",
            Scenario::Dirty => "dirty",
            Scenario::NoDos => "nodos",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        match s {
            "clean" => Some(Scenario::Clean),
            "dirty" => Some(Scenario::Dirty),
            "nodos" => Some(Scenario::NoDos),
            _ => None,
        }
    }
}

/// One scenario run's configuration. `excluded_days` applies to NoDoS only;
/// when empty, the corpus's 4th and 5th calendar days are excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub scheme: FeatureScheme,
    pub clean_train_hours: u32,
    pub excluded_days: Vec<NaiveDate>,
    pub model: ModelConfig,
    pub label_rule: LabelRule,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: Scenario::Dirty,
            scheme: FeatureScheme::proto_byte(),
            clean_train_hours: 36,
            excluded_days: Vec::new(),
            model: ModelConfig::default(),
            label_rule: LabelRule::default(),
        }
    }
}

impl ScenarioConfig {
    /// Parse flat `key=value` config text; model fields sit at the top level
    /// alongside scenario fields.
    pub fn from_kv(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        let mut cfg = ScenarioConfig::default();
        for (key, value) in kv::parse_kv(text)? {
            cfg.apply_kv_pair(&key, &value)?;
        }
        Ok(cfg)
    }

    pub fn apply_kv_pair(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        use crate::kv::bad_value;
        match key {
            "scenario" => {
                self.scenario = Scenario::parse(value)
                    .ok_or_else(|| bad_value(key, value, "expected clean, dirty, or nodos"))?
            }
            "scheme" => {
                self.scheme.kind = SchemeKind::parse(value)
                    .ok_or_else(|| bad_value(key, value, "expected proto_byte or service_port"))?
            }
            "high_port_threshold" => {
                self.scheme.high_port_threshold = value
                    .parse()
                    .map_err(|_| bad_value(key, value, "expected port threshold >= 1"))?;
                if self.scheme.high_port_threshold == 0 {
                    return Err(bad_value(key, value, "must be at least 1").into());
                }
            }
            "clean_train_hours" => {
                self.clean_train_hours = value
                    .parse()
                    .map_err(|_| bad_value(key, value, "expected positive integer"))?;
                if self.clean_train_hours == 0 {
                    return Err(bad_value(key, value, "must be at least 1").into());
                }
            }
            "excluded_days" => {
                self.excluded_days = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
                            .map_err(|_| bad_value(key, value, "expected YYYY-MM-DD list"))
                    })
                    .collect::<Result<_, _>>()?
            }
            "label_rule" => {
                self.label_rule = LabelRule::parse(value)
                    .ok_or_else(|| bad_value(key, value, "expected any or majority"))?
            }
            _ => {
                if !self.model.apply_kv_pair(key, value)? {
                    return Err(KvError::UnknownKey {
                        key: key.to_string(),
                    }
                    .into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Kv(#[from] KvError),
    #[error("{scenario} scenario produced an empty training set")]
    EmptyTrain { scenario: String },
    #[error("corpus spans {have} calendar days; NoDoS needs at least 5 or explicit excluded_days")]
    TooFewDays { have: usize },
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("scoring: {0}")]
    Score(#[from] ScoreError),
    #[error("evaluating {scenario} {scheme} scores: {source}")]
    Eval {
        scenario: String,
        scheme: String,
        source: EvalError,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn calendar_date(epoch: i64) -> NaiveDate {
    chrono::DateTime::from_timestamp(epoch, 0)
        .expect("flow timestamps fit chrono's range")
        .date_naive()
}

/// Distinct calendar dates present in the records, ascending.
pub fn corpus_days(records: &[FlowRecord]) -> Vec<NaiveDate> {
    let mut days: Vec<NaiveDate> = records.iter().map(|r| calendar_date(r.start_time)).collect();
    days.sort_unstable();
    days.dedup();
    days
}

/// Resolve the days a NoDoS run drops: configured ones, or the corpus's 4th
/// and 5th days when none are configured.
pub fn nodos_excluded_days(
    records: &[FlowRecord],
    cfg: &ScenarioConfig,
) -> Result<Vec<NaiveDate>, ScenarioError> {
    if !cfg.excluded_days.is_empty() {
        return Ok(cfg.excluded_days.clone());
    }
    let days = corpus_days(records);
    if days.len() < 5 {
        return Err(ScenarioError::TooFewDays { have: days.len() });
    }
    Ok(vec![days[3], days[4]])
}

/// Produce the (train, eval) record splits for a scenario.
/// Dirty trains and evaluates on everything; Clean trains on the first
/// `clean_train_hours` from the earliest record and evaluates on everything;
/// NoDoS drops the excluded days entirely and uses the remainder for both.
pub fn build_scenario(
    records: &[FlowRecord],
    cfg: &ScenarioConfig,
) -> Result<(Vec<FlowRecord>, Vec<FlowRecord>), ScenarioError> {
    let empty_train = || ScenarioError::EmptyTrain {
        scenario: cfg.scenario.as_str().to_string(),
    };
    let (train, eval) = match cfg.scenario {
        Scenario::Dirty => (records.to_vec(), records.to_vec()),
        Scenario::Clean => {
            let min_start = records
                .iter()
                .map(|r| r.start_time)
                .min()
                .ok_or_else(empty_train)?;
            let range = DateRange::new(
                min_start,
                min_start + cfg.clean_train_hours as i64 * 3600,
            )
            .expect("clean_train_hours >= 1");
            (filter_date_range(records, range), records.to_vec())
        }
        Scenario::NoDos => {
            let excluded = nodos_excluded_days(records, cfg)?;
            let kept: Vec<FlowRecord> = records
                .iter()
                .filter(|r| !excluded.contains(&calendar_date(r.start_time)))
                .cloned()
                .collect();
            (kept.clone(), kept)
        }
    };
    if train.is_empty() {
        return Err(empty_train());
    }
    Ok((train, eval))
}

/// Everything a finished scenario run reports.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub scheme: FeatureScheme,
    pub label_rule: LabelRule,
    pub vocab_size: usize,
    pub train_records: usize,
    pub eval_records: usize,
    pub train_windows: usize,
    pub dyad_hours_normal: usize,
    pub dyad_hours_attack: usize,
    pub auc: f64,
    pub loss_history: Vec<f64>,
    pub seed: u64,
    pub model_config: ModelConfig,
    pub model_path: PathBuf,
    pub scores_path: PathBuf,
    pub roc_path: PathBuf,
    pub wall_time_s: f64,
}

impl ScenarioReport {
    pub fn summary(&self) -> String {
        summary_line(
            self.scenario.as_str(),
            self.scheme.kind.as_str(),
            self.dyad_hours_normal,
            self.dyad_hours_attack,
            self.auc,
        )
    }

    /// Machine-readable key=value block; every seed and config knob is
    /// echoed so a run can be reproduced from its report alone.
    pub fn to_kv(&self) -> String {
        let cfg = &self.model_config;
        let losses: Vec<String> = self.loss_history.iter().map(f64::to_string).collect();
        let mut s = String::new();
        for (k, v) in [
            ("scenario", self.scenario.as_str().to_string()),
            ("scheme", self.scheme.kind.as_str().to_string()),
            (
                "high_port_threshold",
                self.scheme.high_port_threshold.to_string(),
            ),
            ("label_rule", self.label_rule.as_str().to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("train_records", self.train_records.to_string()),
            ("eval_records", self.eval_records.to_string()),
            ("train_windows", self.train_windows.to_string()),
            ("dyad_hours_normal", self.dyad_hours_normal.to_string()),
            ("dyad_hours_attack", self.dyad_hours_attack.to_string()),
            ("auc", self.auc.to_string()),
            ("seed", self.seed.to_string()),
            ("window", cfg.window.to_string()),
            ("embed_dim", cfg.embed_dim.to_string()),
            ("lstm_units", cfg.lstm_units.to_string()),
            ("dense_units", cfg.dense_units.to_string()),
            ("dropout_rate", cfg.dropout_rate.to_string()),
            (
                "layer1_activation",
                cfg.layer1_activation.as_str().to_string(),
            ),
            (
                "layer2_activation",
                cfg.layer2_activation.as_str().to_string(),
            ),
            ("learning_rate", cfg.learning_rate.to_string()),
            ("batch_size", cfg.batch_size.to_string()),
            ("epochs", cfg.epochs.to_string()),
            ("grad_clip_norm", cfg.grad_clip_norm.to_string()),
            ("loss_history", losses.join(",")),
            ("model_path", self.model_path.display().to_string()),
            ("scores_path", self.scores_path.display().to_string()),
            ("roc_path", self.roc_path.display().to_string()),
            ("wall_time_s", format!("{:.3}", self.wall_time_s)),
        ] {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn to_text(&self) -> String {
        format!(
            "{}\nV={} train_records={} eval_records={} train_windows={}\n\
             final_train_loss={:.6} wall_time_s={:.3}\nartifacts: {} {} {}\n",
            self.summary(),
            self.vocab_size,
            self.train_records,
            self.eval_records,
            self.train_windows,
            self.loss_history.last().copied().unwrap_or(f64::NAN),
            self.wall_time_s,
            self.model_path.display(),
            self.scores_path.display(),
            self.roc_path.display(),
        )
    }
}

/// Run one scenario end to end: vocabulary from the training split only,
/// dyad-hours and windows, training, scoring of every eval dyad-hour, ROC,
/// and artifact files under `outdir`.
pub fn run_scenario(
    records: &[FlowRecord],
    cfg: &ScenarioConfig,
    outdir: &Path,
) -> Result<(ScenarioReport, RocCurve), ScenarioError> {
    let started = Instant::now();
    let (train_records, eval_records) = build_scenario(records, cfg)?;

    // Vocabulary sees training records only; eval-only tokens become UNK.
    let vocab = Vocabulary::build(train_records.iter().map(|r| cfg.scheme.token(r)));
    let mut model_cfg = cfg.model.clone();
    model_cfg.vocab_size = vocab.size();

    let train_dhs = group_dyad_hours(&train_records, &cfg.scheme, &vocab, cfg.label_rule);
    let train_windows: Vec<Window> = train_dhs
        .iter()
        .flat_map(|dh| windows(dh, model_cfg.window))
        .collect();

    let mut model = init_model(model_cfg.clone(), vocab, cfg.scheme)?;
    let loss_history = train(&mut model, &train_windows)?;

    let eval_dhs = group_dyad_hours(&eval_records, &cfg.scheme, &model.vocab, cfg.label_rule);
    debug_assert!(eval_dhs
        .iter()
        .flat_map(|dh| dh.token_indices.iter())
        .all(|&t| (t as usize) < model.config.vocab_size));

    let mut scored = score_all(&model, &eval_dhs, Aggregation::Max)?;
    sort_scored(&mut scored);
    let curve = roc(&scored).map_err(|source| ScenarioError::Eval {
        scenario: cfg.scenario.as_str().to_string(),
        scheme: cfg.scheme.kind.as_str().to_string(),
        source,
    })?;

    fs::create_dir_all(outdir)?;
    let model_path = outdir.join("model.bin");
    let scores_path = outdir.join("scores.csv");
    let roc_path = outdir.join("roc.csv");
    save_model(&model, fs::File::create(&model_path)?)?;
    write_scores_csv(&scored, fs::File::create(&scores_path)?)?;
    export_roc(&curve, fs::File::create(&roc_path)?).map_err(|e| match e {
        EvalError::Io(io) => ScenarioError::Io(io),
        other => ScenarioError::Eval {
            scenario: cfg.scenario.as_str().to_string(),
            scheme: cfg.scheme.kind.as_str().to_string(),
            source: other,
        },
    })?;
    model
        .vocab
        .write_csv(fs::File::create(outdir.join("vocab.csv"))?)?;

    let report = ScenarioReport {
        scenario: cfg.scenario,
        scheme: cfg.scheme,
        label_rule: cfg.label_rule,
        vocab_size: model.config.vocab_size,
        train_records: train_records.len(),
        eval_records: eval_records.len(),
        train_windows: train_windows.len(),
        dyad_hours_normal: scored.iter().filter(|s| s.label == Label::Normal).count(),
        dyad_hours_attack: scored.iter().filter(|s| s.label == Label::Attack).count(),
        auc: curve.auc,
        loss_history,
        seed: model.config.seed,
        model_config: model.config.clone(),
        model_path,
        scores_path,
        roc_path,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let mut report_txt = fs::File::create(outdir.join("report.txt"))?;
    report_txt.write_all(report.to_text().as_bytes())?;
    let mut report_kv = fs::File::create(outdir.join("report.kv"))?;
    report_kv.write_all(report.to_kv().as_bytes())?;
    Ok((report, curve))
}
