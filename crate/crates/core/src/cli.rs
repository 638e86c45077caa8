// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line pipeline. Each command takes a JSON config (`--config`)
//! plus `--key value` overrides and writes its artifacts to
//! `<out-root>/<command>-<manifest hash>/`.

use std::collections::BTreeMap;
use std::env;
use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ablation::{
    effects_csv, first_crossing, rank_units, significant_units, single_unit_study, topk_study, RankMetric,
    RankedUnits, TopkRow, TOPK_CSV_HEADER, Z_THRESHOLD,
};
use crate::config::{self, required, Validate};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, evaluate, human_error_rates, ConditionSummary, EvalRecord, GroupingSpec};
use crate::lstm::io::{load_checkpoint, save_checkpoint};
use crate::lstm::{init_model, train, AblationMask, AblationMode, Checkpoint, Corpus, ModelConfig, TrainConfig, UnitId, Vocab, BOUNDARY};
use crate::numerics::derive_seed;
use crate::probing::{
    adjective_gender_sets, connectivity_csv, efferent_weights, effective_efferent, embedding_pca,
    find_short_range_units, pca_csv, separable_on_x, subject_number_auc, trace_conditions, traces_csv,
    verb_number_sets, EmbeddingSide, ShortRangeThresholds, Signal,
};
use crate::report::{compare_model_human, pca_svg, prepare_run_dir, summaries_csv, topk_svg, trace_svg, write_file, RunManifest};
use crate::responses::ResponseRecord;
use crate::service::{self, read_response_log, AppState, Timing};
use crate::stats::{contrast_report, ContrastSpec, Observation};
use crate::stimuli::{
    assemble_sessions, build_lexicon, corpus_vocabulary, generate_task, read_trials, synth_corpus, write_trials,
    CorpusTemplate, ExpandOptions, Lexicon, Sampling, SessionPlan, TargetRole, Task, Trial,
};

/// Grouping of the secondary summary written by `eval`.
pub const CONGRUENCE_GROUPING: &str = "congruence,role";

/// Output root when neither `--out-root` nor the environment names one.
pub const DEFAULT_RUN_ROOT: &str = "runs";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Parser)]
#[command(name = "aglb", version, about = "Agreement-processing benchmark for LSTM language models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output root [default: $AGLB_RUN_DIR, else ./runs].
    #[arg(long)]
    pub out_root: Option<PathBuf>,
    /// Config overrides, `--key value` or `--key=value`; dotted keys reach
    /// nested fields.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

impl Common {
    /// Pulls `--config`/`-c`/`--out-root` that appear among the overrides
    /// (clap stops at the first override) into their own fields.
    pub fn normalized(&self) -> Result<Common> {
        let mut out = Common {
            config: self.config.clone(),
            out_root: self.out_root.clone(),
            overrides: Vec::new(),
        };
        let mut it = self.overrides.iter();
        while let Some(w) = it.next() {
            let (flag, inline) = match w.split_once('=') {
                Some((f, v)) if f.starts_with("--") => (f, Some(v.to_string())),
                _ => (w.as_str(), None),
            };
            let slot = match flag {
                "--config" | "-c" => &mut out.config,
                "--out-root" | "--out_root" => &mut out.out_root,
                _ => {
                    out.overrides.push(w.clone());
                    continue;
                }
            };
            let value = match inline {
                Some(v) => v,
                None => it.next().cloned().ok_or_else(|| Error::arg(format!("{flag} needs a value")))?,
            };
            *slot = Some(PathBuf::from(value));
        }
        Ok(out)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate agreement stimuli (JSONL).
    GenStimuli(Common),
    /// Generate a synthetic training corpus and its vocabulary.
    SynthCorpus(Common),
    /// Train an LSTM language model.
    Train(Common),
    /// Score stimuli with a (possibly ablated) model.
    Eval(Common),
    /// Ablate every unit on its own; z-scores and ranking.
    AblateSingle(Common),
    /// Cumulative ablation of the top-k ranked units.
    AblateTopk(Common),
    /// Condition-averaged gate and state traces.
    Trace(Common),
    /// Efferent weights of units onto word classes.
    Connectivity(Common),
    /// Principal-component projection of embeddings.
    Pca(Common),
    /// Screen top-layer units for last-noun number tracking.
    FindShortRange(Common),
    /// Contrast tests over model or human error observations.
    Stats(Common),
    /// Model-vs-human comparison report.
    Compare(Common),
    /// HTTP service for the experiment client.
    Serve(Common),
    /// Assemble the two human-experiment sessions.
    Sessions(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenStimuli(_) => "gen-stimuli",
            Command::SynthCorpus(_) => "synth-corpus",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::AblateSingle(_) => "ablate-single",
            Command::AblateTopk(_) => "ablate-topk",
            Command::Trace(_) => "trace",
            Command::Connectivity(_) => "connectivity",
            Command::Pca(_) => "pca",
            Command::FindShortRange(_) => "find-short-range",
            Command::Stats(_) => "stats",
            Command::Compare(_) => "compare",
            Command::Serve(_) => "serve",
            Command::Sessions(_) => "sessions",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::GenStimuli(c)
            | Command::SynthCorpus(c)
            | Command::Train(c)
            | Command::Eval(c)
            | Command::AblateSingle(c)
            | Command::AblateTopk(c)
            | Command::Trace(c)
            | Command::Connectivity(c)
            | Command::Pca(c)
            | Command::FindShortRange(c)
            | Command::Stats(c)
            | Command::Compare(c)
            | Command::Serve(c)
            | Command::Sessions(c) => c,
        }
    }
}

// ------------------------------------------------------------ run directory

/// An open run directory. Every artifact written through it cites the
/// manifest hash.
pub struct Run {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    hash: String,
}

impl Run {
    fn open(root: &Path, manifest: RunManifest) -> Result<Self> {
        let dir = prepare_run_dir(root, &manifest)?;
        let hash = manifest.hash();
        Ok(Self { dir, manifest, hash })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&self, name: &str, body: &str) -> Result<()> {
        write_file(&self.path(name), &format!("# manifest={}\n{body}", self.hash))
    }

    fn svg(&self, name: &str, body: &str) -> Result<()> {
        write_file(&self.path(name), &format!("<!-- manifest={} -->\n{body}", self.hash))
    }

    fn json<T: Serialize>(&self, name: &str, data: &T) -> Result<()> {
        let v = json!({ "v": 1, "manifest": self.hash, "data": data });
        let mut s = serde_json::to_string_pretty(&v)?;
        s.push('\n');
        write_file(&self.path(name), &s)
    }

    fn jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let mut s = format!("# manifest={}\n", self.hash);
        for r in rows {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        write_file(&self.path(name), &s)
    }
}

/// Reads a JSON artifact, unwrapping the `data` envelope when present.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text)?;
    let data = match v {
        Value::Object(mut m) if m.contains_key("manifest") && m.contains_key("data") => m.remove("data").unwrap_or(Value::Null),
        other => other,
    };
    Ok(serde_json::from_value(data)?)
}

/// Reads JSONL, skipping blank and `#` lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::arg(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn run_root(common: &Common) -> PathBuf {
    common
        .out_root
        .clone()
        .or_else(|| env::var_os("AGLB_RUN_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_RUN_ROOT))
}

fn units(list: &[String]) -> Result<Vec<UnitId>> {
    list.iter().map(|s| s.parse()).collect()
}

fn mask_of(list: &[String], mode: AblationMode) -> Result<AblationMask> {
    Ok(AblationMask::from_units(units(list)?).with_mode(mode))
}

fn load_ckpt(path: &str) -> Result<Checkpoint> {
    Ok(load_checkpoint(path)?)
}

// ------------------------------------------------------------------ configs

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenStimuliConfig {
    /// A task name or `all`.
    pub task: String,
    /// Trials per task.
    pub n: usize,
    pub seed: u64,
    pub with_object: bool,
    pub sampling: Sampling,
}

impl Default for GenStimuliConfig {
    fn default() -> Self {
        Self {
            task: "nounpp_number".into(),
            n: 400,
            seed: 0,
            with_object: false,
            sampling: Sampling::Uniform,
        }
    }
}

impl Validate for GenStimuliConfig {
    fn problems(&self) -> Vec<String> {
        if self.task != "all" && self.task.parse::<Task>().is_err() {
            return vec![format!("task: unknown task {:?}", self.task)];
        }
        Vec::new()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthCorpusConfig {
    pub templates: Vec<CorpusTemplate>,
    /// Number of sentences.
    pub n: usize,
    pub seed: u64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        Self {
            templates: CorpusTemplate::all(),
            n: 100_000,
            seed: 0,
        }
    }
}

impl Validate for SynthCorpusConfig {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainCommandConfig {
    /// Corpus text from `synth-corpus` (one sentence per line).
    pub corpus: String,
    /// Vocabulary JSON; defaults to `vocab.json` beside the corpus.
    pub vocab: Option<String>,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub seed: u64,
    pub lr: f64,
    pub clip: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub bptt_len: usize,
    pub max_steps: Option<usize>,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            corpus: String::new(),
            vocab: None,
            embed_dim: 50,
            hidden_dim: 50,
            num_layers: 2,
            seed: 1,
            lr: t.lr,
            clip: t.clip,
            epochs: t.epochs,
            batch_size: t.batch_size,
            bptt_len: t.bptt_len,
            max_steps: None,
        }
    }
}

impl Validate for TrainCommandConfig {
    fn problems(&self) -> Vec<String> {
        required("corpus", &self.corpus).into_iter().collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub checkpoint: String,
    pub stimuli: String,
    /// Restrict to one target verb; all targets otherwise.
    pub role: Option<TargetRole>,
    /// Units to ablate, `layer:index`.
    pub mask: Vec<String>,
    pub mode: AblationMode,
    /// Grouping keys, e.g. `condition,role` or `congruence,role,attractor=P`.
    pub grouping: String,
    pub bootstrap: usize,
    pub bootstrap_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            checkpoint: String::new(),
            stimuli: String::new(),
            role: None,
            mask: Vec::new(),
            mode: AblationMode::HiddenAndCell,
            grouping: "condition,role".into(),
            bootstrap: 10_000,
            bootstrap_seed: 0,
        }
    }
}

fn check_units(name: &str, list: &[String], out: &mut Vec<String>) {
    for (i, u) in list.iter().enumerate() {
        if let Err(e) = u.parse::<UnitId>() {
            out.push(format!("{name}[{i}]: {e}"));
        }
    }
}

fn grouping(keys: &str, bootstrap: usize, seed: u64) -> Result<GroupingSpec> {
    let mut g: GroupingSpec = keys.parse()?;
    g.bootstrap = bootstrap;
    g.seed = seed;
    Ok(g)
}

fn check_grouping(g: &str, out: &mut Vec<String>) {
    if let Err(e) = g.parse::<GroupingSpec>() {
        out.push(format!("grouping: {e}"));
    }
}

impl Validate for EvalConfig {
    fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = [required("checkpoint", &self.checkpoint), required("stimuli", &self.stimuli)]
            .into_iter()
            .flatten()
            .collect();
        check_units("mask", &self.mask, &mut out);
        check_grouping(&self.grouping, &mut out);
        out
    }
}

impl EvalConfig {
    fn grouping_spec(&self, keys: &str) -> Result<GroupingSpec> {
        grouping(keys, self.bootstrap, self.bootstrap_seed)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateSingleConfig {
    pub checkpoint: String,
    pub stimuli: String,
    pub role: Option<TargetRole>,
    pub mode: AblationMode,
    /// Conditions whose summed delta ranks the units.
    pub criterion: Vec<String>,
    pub metric: RankMetric,
    pub parallel: bool,
}

impl Default for AblateSingleConfig {
    fn default() -> Self {
        Self {
            checkpoint: String::new(),
            stimuli: String::new(),
            role: None,
            mode: AblationMode::HiddenAndCell,
            criterion: vec!["SP".into(), "PS".into()],
            metric: RankMetric::Accuracy,
            parallel: true,
        }
    }
}

impl Validate for AblateSingleConfig {
    fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = [required("checkpoint", &self.checkpoint), required("stimuli", &self.stimuli)]
            .into_iter()
            .flatten()
            .collect();
        if self.criterion.is_empty() {
            out.push("criterion: names no condition".into());
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelRef {
    pub name: String,
    pub checkpoint: String,
    /// `ranking.json` from `ablate-single`.
    pub ranking: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateTopkConfig {
    pub models: Vec<ModelRef>,
    pub stimuli: String,
    pub k_max: usize,
    pub role: Option<TargetRole>,
    pub mode: AblationMode,
    pub incongruent: Vec<String>,
    pub congruent: Vec<String>,
    /// Accuracy level that defines the crossing point.
    pub threshold: f64,
}

impl Default for AblateTopkConfig {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            stimuli: String::new(),
            k_max: 40,
            role: None,
            mode: AblationMode::HiddenAndCell,
            incongruent: vec!["SP".into(), "PS".into()],
            congruent: vec!["SS".into(), "PP".into()],
            threshold: 0.75,
        }
    }
}

impl Validate for AblateTopkConfig {
    fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = required("stimuli", &self.stimuli).into_iter().collect();
        if self.models.is_empty() {
            out.push("models: required".into());
        }
        for (i, m) in self.models.iter().enumerate() {
            out.extend(required(&format!("models[{i}].checkpoint"), &m.checkpoint));
            out.extend(required(&format!("models[{i}].ranking"), &m.ranking));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    pub checkpoint: String,
    pub stimuli: String,
    pub units: Vec<String>,
    pub mask: Vec<String>,
    pub mode: AblationMode,
    /// Signal for the per-step subject-number AUC table.
    pub auc_signal: Signal,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            checkpoint: String::new(),
            stimuli: String::new(),
            units: Vec::new(),
            mask: Vec::new(),
            mode: AblationMode::HiddenAndCell,
            auc_signal: Signal::Cell,
        }
    }
}

impl Validate for TraceConfig {
    fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = [required("checkpoint", &self.checkpoint), required("stimuli", &self.stimuli)]
            .into_iter()
            .flatten()
            .collect();
        if self.units.is_empty() {
            out.push("units: required".into());
        }
        check_units("units", &self.units, &mut out);
        check_units("mask", &self.mask, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordSets {
    /// Singular vs plural verb forms.
    VerbNumber,
    /// Masculine vs feminine adjective forms.
    AdjectiveGender,
}

fn word_sets(sets: WordSets, lex: &Lexicon, ckpt: &Checkpoint) -> (Vec<String>, Vec<String>) {
    match sets {
        WordSets::VerbNumber => verb_number_sets(lex, ckpt),
        WordSets::AdjectiveGender => adjective_gender_sets(lex, ckpt),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConnectivityConfig {
    pub checkpoint: String,
    /// Explicit top-layer units; otherwise the top-layer head of `ranking`.
    pub units: Vec<String>,
    pub ranking: Option<String>,
    pub top: usize,
    /// Stimuli for activity-weighted (effective) connectivity.
    pub stimuli: Option<String>,
    pub role: TargetRole,
    pub sets: WordSets,
}

impl Default for ConnectivityConfig {
    fn default() -> Self {
        Self {
            checkpoint: String::new(),
            units: Vec::new(),
            ranking: None,
            top: 10,
            stimuli: None,
            role: TargetRole::Main,
            sets: WordSets::VerbNumber,
        }
    }
}

impl Validate for ConnectivityConfig {
    fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = required("checkpoint", &self.checkpoint).into_iter().collect();
        if self.units.is_empty() && self.ranking.is_none() {
            out.push("units: required unless ranking is given".into());
        }
        check_units("units", &self.units, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordClass {
    Verbs,
    Adjectives,
    Nouns,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaConfig {
    pub checkpoint: String,
    pub side: EmbeddingSide,
    pub word_class: WordClass,
    /// Explicit word list; overrides `word_class`.
    pub words: Vec<String>,
    /// 1-based component numbers.
    pub pcs: [usize; 2],
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            checkpoint: String::new(),
            side: EmbeddingSide::Output,
            word_class: WordClass::Verbs,
            words: Vec::new(),
            pcs: [1, 2],
        }
    }
}

impl Validate for PcaConfig {
    fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = required("checkpoint", &self.checkpoint).into_iter().collect();
        if self.pcs.contains(&0) {
            out.push("pcs: components are numbered from 1".into());
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShortRangeConfig {
    pub checkpoint: String,
    /// Probe stimuli with nouns of both numbers in sequence.
    pub probes: String,
    pub auc: f64,
    pub separation: f64,
    pub mask: Vec<String>,
}

impl Default for ShortRangeConfig {
    fn default() -> Self {
        let t = ShortRangeThresholds::default();
        Self {
            checkpoint: String::new(),
            probes: String::new(),
            auc: t.auc,
            separation: t.separation,
            mask: Vec::new(),
        }
    }
}

impl Validate for ShortRangeConfig {
    fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = [required("checkpoint", &self.checkpoint), required("probes", &self.probes)]
            .into_iter()
            .flatten()
            .collect();
        check_units("mask", &self.mask, &mut out);
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecordsRef {
    /// Subject label (model name).
    pub name: String,
    /// `records.jsonl` from `eval`.
    pub records: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumanInput {
    /// Response logs (JSONL).
    pub responses: Vec<String>,
    /// `sessions.json` from `sessions`.
    pub sessions: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub models: Vec<RecordsRef>,
    pub human: Option<HumanInput>,
    pub tasks: Vec<Task>,
    pub alpha: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        let c = ContrastSpec::default();
        Self {
            models: Vec::new(),
            human: None,
            tasks: c.tasks,
            alpha: c.alpha,
        }
    }
}

impl Validate for StatsConfig {
    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.models.is_empty() && self.human.is_none() {
            out.push("models: required unless human is given".into());
        }
        for (i, m) in self.models.iter().enumerate() {
            out.extend(required(&format!("models[{i}].records"), &m.records));
        }
        if let Some(h) = &self.human {
            out.extend(required("human.sessions", &h.sessions));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    /// Summary files from `eval` (`summary.json`, `summary-congruence.json`).
    pub model_summaries: Vec<String>,
    pub human_summaries: Vec<String>,
    /// Raw human responses, aggregated here once per grouping.
    pub human: Option<HumanInput>,
    /// Groupings for the human side; must match the model summaries.
    pub groupings: Vec<String>,
    pub bootstrap: usize,
    pub bootstrap_seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            model_summaries: Vec::new(),
            human_summaries: Vec::new(),
            human: None,
            groupings: vec![CONGRUENCE_GROUPING.into(), "condition,role".into()],
            bootstrap: 10_000,
            bootstrap_seed: 0,
        }
    }
}

impl Validate for CompareConfig {
    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.model_summaries.is_empty() {
            out.push("model_summaries: required".into());
        }
        if !self.human_summaries.is_empty() && self.human.is_some() {
            out.push("human: give either human or human_summaries".into());
        }
        for g in &self.groupings {
            check_grouping(g, &mut out);
        }
        out
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionsConfig {
    pub seed: u64,
}

impl Validate for SessionsConfig {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    /// `sessions.json` from `sessions`.
    pub sessions: String,
    /// Response logs; defaults to `responses/` beside the sessions file.
    pub responses_dir: Option<String>,
    pub host: String,
    /// Defaults to $AGLB_PORT, else 8080.
    pub port: Option<u16>,
    pub timing: Timing,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            sessions: String::new(),
            responses_dir: None,
            host: "127.0.0.1".into(),
            port: None,
            timing: Timing::default(),
        }
    }
}

impl Validate for ServeConfig {
    fn problems(&self) -> Vec<String> {
        required("sessions", &self.sessions).into_iter().collect()
    }
}

/// Default config of every command, keyed by command name.
pub fn default_configs() -> BTreeMap<&'static str, Value> {
    fn v<T: Serialize>(t: T) -> Value {
        serde_json::to_value(t).expect("config serializes")
    }
    BTreeMap::from([
        ("gen-stimuli", v(GenStimuliConfig::default())),
        ("synth-corpus", v(SynthCorpusConfig::default())),
        ("train", v(TrainCommandConfig::default())),
        ("eval", v(EvalConfig::default())),
        ("ablate-single", v(AblateSingleConfig::default())),
        ("ablate-topk", v(AblateTopkConfig::default())),
        ("trace", v(TraceConfig::default())),
        ("connectivity", v(ConnectivityConfig::default())),
        ("pca", v(PcaConfig::default())),
        ("find-short-range", v(ShortRangeConfig::default())),
        ("stats", v(StatsConfig::default())),
        ("compare", v(CompareConfig::default())),
        ("serve", v(ServeConfig::default())),
        ("sessions", v(SessionsConfig::default())),
    ])
}

// ----------------------------------------------------------------- commands

/// Runs one command and returns its run directory.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    let common = &cli.command.common().normalized()?;
    let root = run_root(common);
    let file = common.config.as_deref();
    let ov = &common.overrides;
    let name = cli.command.name();
    match &cli.command {
        Command::GenStimuli(_) => gen_stimuli(&root, name, config::build(file, ov)?),
        Command::SynthCorpus(_) => synth(&root, name, config::build(file, ov)?),
        Command::Train(_) => train_cmd(&root, name, config::build(file, ov)?),
        Command::Eval(_) => eval_cmd(&root, name, config::build(file, ov)?),
        Command::AblateSingle(_) => ablate_single(&root, name, config::build(file, ov)?),
        Command::AblateTopk(_) => ablate_topk(&root, name, config::build(file, ov)?),
        Command::Trace(_) => trace_cmd(&root, name, config::build(file, ov)?),
        Command::Connectivity(_) => connectivity(&root, name, config::build(file, ov)?),
        Command::Pca(_) => pca_cmd(&root, name, config::build(file, ov)?),
        Command::FindShortRange(_) => short_range(&root, name, config::build(file, ov)?),
        Command::Stats(_) => stats_cmd(&root, name, config::build(file, ov)?),
        Command::Compare(_) => compare(&root, name, config::build(file, ov)?),
        Command::Serve(_) => serve_cmd(&root, name, config::build(file, ov)?),
        Command::Sessions(_) => sessions(&root, name, config::build(file, ov)?),
    }
}

fn gen_stimuli(root: &Path, name: &str, (cfg, eff): (GenStimuliConfig, Value)) -> Result<PathBuf> {
    let lex = build_lexicon();
    let opts = ExpandOptions {
        sampling: cfg.sampling,
        with_object: cfg.with_object,
    };
    let trials = if cfg.task == "all" {
        let mut all = Vec::new();
        for t in Task::ALL {
            all.extend(generate_task(t, &lex, cfg.n, derive_seed(cfg.seed, t.index() as u64), opts)?);
        }
        all
    } else {
        generate_task(cfg.task.parse()?, &lex, cfg.n, cfg.seed, opts)?
    };
    let run = Run::open(root, RunManifest::new(name, &eff).seed("seed", cfg.seed))?;
    write_trials(run.path("stimuli.jsonl"), Some(&format!("manifest={}", run.hash)), &trials)?;
    Ok(run.dir)
}

fn synth(root: &Path, name: &str, (cfg, eff): (SynthCorpusConfig, Value)) -> Result<PathBuf> {
    let lex = build_lexicon();
    let stream = synth_corpus(&lex, &cfg.templates, cfg.n, cfg.seed)?;
    let vocab = corpus_vocabulary(&lex, &CorpusTemplate::all());
    let run = Run::open(root, RunManifest::new(name, &eff).seed("seed", cfg.seed))?;
    let mut body = String::new();
    let mut line: Vec<&str> = Vec::new();
    for tok in &stream {
        if tok == BOUNDARY {
            body.push_str(&line.join(" "));
            body.push('\n');
            line.clear();
        } else {
            line.push(tok);
        }
    }
    run.text("corpus.txt", &body)?;
    run.json("vocab.json", &vocab)?;
    Ok(run.dir)
}

fn train_cmd(root: &Path, name: &str, (cfg, eff): (TrainCommandConfig, Value)) -> Result<PathBuf> {
    let corpus_path = PathBuf::from(&cfg.corpus);
    let vocab_path = cfg
        .vocab
        .clone()
        .map(PathBuf::from)
        .unwrap_or_else(|| corpus_path.with_file_name("vocab.json"));
    let vocab: Vocab = read_json(&vocab_path)?;
    let text = fs::read_to_string(&corpus_path).map_err(|e| Error::io(&corpus_path, e))?;
    let corpus = Corpus::from_lines(text.lines().filter(|l| !l.starts_with('#')), &vocab)?;
    let mc = ModelConfig {
        vocab_size: vocab.len(),
        embed_dim: cfg.embed_dim,
        hidden_dim: cfg.hidden_dim,
        num_layers: cfg.num_layers,
        seed: cfg.seed,
    };
    let init = init_model(mc, vocab, cfg.seed)?;
    let tc = TrainConfig {
        lr: cfg.lr,
        clip: cfg.clip,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        bptt_len: cfg.bptt_len,
        seed: derive_seed(cfg.seed, 1),
        max_steps: cfg.max_steps,
    };
    let (model, report) = train(&init, &corpus, &tc)?;
    let manifest = RunManifest::new(name, &eff)
        .seed("seed", cfg.seed)
        .input(&corpus_path)?
        .input(&vocab_path)?;
    let run = Run::open(root, manifest)?;
    save_checkpoint(&model, run.path("checkpoint.bin"))?;
    let mut csv = String::from("step,loss,grad_norm\n");
    for (i, (l, g)) in report.step_losses.iter().zip(&report.grad_norms).enumerate() {
        let _ = writeln!(csv, "{},{l},{g}", i + 1);
    }
    run.text("loss.csv", &csv)?;
    run.json("train_report.json", &report)?;
    Ok(run.dir)
}

fn records_csv(records: &[EvalRecord]) -> String {
    let mut s = String::from(EvalRecord::CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn eval_cmd(root: &Path, name: &str, (cfg, eff): (EvalConfig, Value)) -> Result<PathBuf> {
    let ckpt = load_ckpt(&cfg.checkpoint)?;
    let trials = read_trials(&cfg.stimuli)?;
    let mask = mask_of(&cfg.mask, cfg.mode)?;
    let records = evaluate(&ckpt, &trials, cfg.role, &mask)?;
    let summary = aggregate(&records, &cfg.grouping_spec(&cfg.grouping)?)?;
    let by_congruence = aggregate(&records, &cfg.grouping_spec(CONGRUENCE_GROUPING)?)?;
    let manifest = RunManifest::new(name, &eff)
        .seed("bootstrap", cfg.bootstrap_seed)
        .checkpoint(Path::new(&cfg.checkpoint))?
        .input(Path::new(&cfg.stimuli))?;
    let run = Run::open(root, manifest)?;
    run.text("records.csv", &records_csv(&records))?;
    run.jsonl("records.jsonl", &records)?;
    run.text("summary.csv", &summaries_csv(&summary))?;
    run.json("summary.json", &summary)?;
    run.json("summary-congruence.json", &by_congruence)?;
    Ok(run.dir)
}

fn ablate_single(root: &Path, name: &str, (cfg, eff): (AblateSingleConfig, Value)) -> Result<PathBuf> {
    let ckpt = load_ckpt(&cfg.checkpoint)?;
    let trials = read_trials(&cfg.stimuli)?;
    let study = single_unit_study(&ckpt, &trials, cfg.role, cfg.mode, cfg.parallel)?;
    let criterion: Vec<&str> = cfg.criterion.iter().map(String::as_str).collect();
    let ranked = rank_units(&study, &criterion, cfg.metric)?;
    let manifest = RunManifest::new(name, &eff)
        .checkpoint(Path::new(&cfg.checkpoint))?
        .input(Path::new(&cfg.stimuli))?;
    let run = Run::open(root, manifest)?;
    run.text("effects.csv", &effects_csv(&study))?;
    let mut sig = String::from("unit,condition,z\n");
    for (u, c, z) in significant_units(&study, Z_THRESHOLD) {
        let _ = writeln!(sig, "{u},{c},{z}");
    }
    run.text("significant.csv", &sig)?;
    run.json("study.json", &study)?;
    run.json("ranking.json", &ranked)?;
    Ok(run.dir)
}

fn ablate_topk(root: &Path, name: &str, (cfg, eff): (AblateTopkConfig, Value)) -> Result<PathBuf> {
    let trials = read_trials(&cfg.stimuli)?;
    let mut manifest = RunManifest::new(name, &eff).input(Path::new(&cfg.stimuli))?;
    let mut curves: Vec<(String, Vec<TopkRow>)> = Vec::new();
    for (i, m) in cfg.models.iter().enumerate() {
        let ckpt = load_ckpt(&m.checkpoint)?;
        let ranked: RankedUnits = read_json(Path::new(&m.ranking))?;
        let rows = topk_study(&ckpt, &ranked, cfg.k_max, &trials, cfg.role, cfg.mode)?;
        manifest = manifest.checkpoint(Path::new(&m.checkpoint))?.input(Path::new(&m.ranking))?;
        let label = if m.name.is_empty() { format!("model{}", i + 1) } else { m.name.clone() };
        curves.push((label, rows));
    }
    let run = Run::open(root, manifest)?;
    let mut csv = format!("model,{TOPK_CSV_HEADER}\n");
    for (label, rows) in &curves {
        for r in rows {
            let _ = writeln!(csv, "{label},{},{},{},{}", r.k, r.condition, r.accuracy, r.success_probability);
        }
    }
    run.text("topk.csv", &csv)?;
    let mut conditions: Vec<String> = curves
        .iter()
        .flat_map(|c| c.1.iter().map(|r| r.condition.clone()))
        .collect();
    conditions.sort();
    conditions.dedup();
    run.svg("topk.svg", &topk_svg(&curves, &conditions))?;
    let inc: Vec<&str> = cfg.incongruent.iter().map(String::as_str).collect();
    let con: Vec<&str> = cfg.congruent.iter().map(String::as_str).collect();
    let crossings: Vec<Value> = curves
        .iter()
        .map(|(label, rows)| {
            let c = first_crossing(rows, &inc, &con, cfg.threshold);
            json!({
                "model": label,
                "crossing": c,
                "incongruent_worse": c.as_ref().map(|c| c.incongruent_worse()),
            })
        })
        .collect();
    run.json("crossing.json", &crossings)?;
    Ok(run.dir)
}

fn trace_cmd(root: &Path, name: &str, (cfg, eff): (TraceConfig, Value)) -> Result<PathBuf> {
    let ckpt = load_ckpt(&cfg.checkpoint)?;
    let trials = read_trials(&cfg.stimuli)?;
    let us = units(&cfg.units)?;
    let mask = mask_of(&cfg.mask, cfg.mode)?;
    let traces = trace_conditions(&ckpt, &trials, &us, &mask)?;
    let manifest = RunManifest::new(name, &eff)
        .checkpoint(Path::new(&cfg.checkpoint))?
        .input(Path::new(&cfg.stimuli))?;
    let run = Run::open(root, manifest)?;
    run.text("traces.csv", &traces_csv(&traces))?;
    let mut auc_csv = String::from("unit,signal,t,auc\n");
    for &u in &us {
        let own: Vec<_> = traces.iter().filter(|t| t.unit == u).cloned().collect();
        run.svg(&format!("trace-{}-{}.svg", u.layer, u.index), &trace_svg(&own, &format!("unit {u}")))?;
        let by_task: BTreeMap<Task, Vec<Trial>> = trials.iter().fold(BTreeMap::new(), |mut m, t| {
            m.entry(t.task).or_insert_with(Vec::new).push(t.clone());
            m
        });
        for group in by_task.values() {
            for (t, a) in subject_number_auc(&ckpt, group, u, cfg.auc_signal, &mask)?.iter().enumerate() {
                let _ = writeln!(auc_csv, "{u},{},{t},{a}", cfg.auc_signal);
            }
        }
    }
    run.text("auc.csv", &auc_csv)?;
    Ok(run.dir)
}

fn connectivity(root: &Path, name: &str, (cfg, eff): (ConnectivityConfig, Value)) -> Result<PathBuf> {
    let ckpt = load_ckpt(&cfg.checkpoint)?;
    let lex = build_lexicon();
    let mut manifest = RunManifest::new(name, &eff).checkpoint(Path::new(&cfg.checkpoint))?;
    let us = if cfg.units.is_empty() {
        let path = cfg.ranking.as_deref().unwrap_or_default();
        manifest = manifest.input(Path::new(path))?;
        let ranked: RankedUnits = read_json(Path::new(path))?;
        ranked
            .units
            .into_iter()
            .filter(|u| u.layer == ckpt.top_layer())
            .take(cfg.top)
            .collect()
    } else {
        units(&cfg.units)?
    };
    let (a, b) = word_sets(cfg.sets, &lex, &ckpt);
    let records = match &cfg.stimuli {
        Some(s) => {
            manifest = manifest.input(Path::new(s))?;
            let trials = read_trials(s)?;
            effective_efferent(&ckpt, &us, &trials, cfg.role, &a, &b, &AblationMask::empty())?
        }
        None => us
            .iter()
            .map(|&u| efferent_weights(&ckpt, u, &a, &b))
            .collect::<Result<_>>()?,
    };
    let run = Run::open(root, manifest)?;
    run.text("connectivity.csv", &connectivity_csv(&records))?;
    run.json("connectivity.json", &records)?;
    Ok(run.dir)
}

fn pca_words(cfg: &PcaConfig, lex: &Lexicon, ckpt: &Checkpoint) -> Vec<String> {
    if !cfg.words.is_empty() {
        return cfg.words.clone();
    }
    let (a, b) = match cfg.word_class {
        WordClass::Verbs => verb_number_sets(lex, ckpt),
        WordClass::Adjectives => adjective_gender_sets(lex, ckpt),
        WordClass::Nouns => {
            let keep = |n| {
                lex.nouns
                    .iter()
                    .map(|x| x.form(n).to_string())
                    .filter(|w| ckpt.vocab.index_of(w).is_some())
                    .collect()
            };
            (keep(crate::stimuli::Number::Singular), keep(crate::stimuli::Number::Plural))
        }
    };
    a.into_iter().chain(b).collect()
}

fn pca_cmd(root: &Path, name: &str, (cfg, eff): (PcaConfig, Value)) -> Result<PathBuf> {
    let ckpt = load_ckpt(&cfg.checkpoint)?;
    let lex = build_lexicon();
    let words = pca_words(&cfg, &lex, &ckpt);
    let proj = embedding_pca(&ckpt, &words, cfg.side, (cfg.pcs[0], cfg.pcs[1]), &lex.analyzer())?;
    let run = Run::open(root, RunManifest::new(name, &eff).checkpoint(Path::new(&cfg.checkpoint))?)?;
    run.text("pca.csv", &pca_csv(&proj))?;
    run.svg("pca.svg", &pca_svg(&proj))?;
    run.json(
        "pca.json",
        &json!({ "projection": proj, "number_separable_on_x": separable_on_x(&proj.points) }),
    )?;
    Ok(run.dir)
}

fn short_range(root: &Path, name: &str, (cfg, eff): (ShortRangeConfig, Value)) -> Result<PathBuf> {
    let ckpt = load_ckpt(&cfg.checkpoint)?;
    let lex = build_lexicon();
    let probes = read_trials(&cfg.probes)?;
    let (sg, pl) = verb_number_sets(&lex, &ckpt);
    let thresholds = ShortRangeThresholds {
        auc: cfg.auc,
        separation: cfg.separation,
    };
    let mask = mask_of(&cfg.mask, AblationMode::HiddenAndCell)?;
    let report = find_short_range_units(&ckpt, &probes, &lex.analyzer(), &sg, &pl, thresholds, &mask)?;
    let manifest = RunManifest::new(name, &eff)
        .checkpoint(Path::new(&cfg.checkpoint))?
        .input(Path::new(&cfg.probes))?;
    let run = Run::open(root, manifest)?;
    let mut csv = String::from("unit,number_auc,polarity,switch_auc,separation,flagged\n");
    for d in &report.diagnostics {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            d.unit, d.number_auc, d.polarity, d.switch_auc, d.separation, d.flagged
        );
    }
    run.text("short_range.csv", &csv)?;
    run.json("short_range.json", &report)?;
    Ok(run.dir)
}

fn load_human(h: &HumanInput, mut manifest: RunManifest) -> Result<(Vec<ResponseRecord>, SessionPlan, RunManifest)> {
    let plan: SessionPlan = read_json(Path::new(&h.sessions))?;
    manifest = manifest.input(Path::new(&h.sessions))?;
    let mut responses = Vec::new();
    for p in &h.responses {
        responses.extend(read_response_log(Path::new(p))?);
        manifest = manifest.input(Path::new(p))?;
    }
    Ok((responses, plan, manifest))
}

fn stats_cmd(root: &Path, name: &str, (cfg, eff): (StatsConfig, Value)) -> Result<PathBuf> {
    let spec = ContrastSpec {
        tasks: cfg.tasks.clone(),
        alpha: cfg.alpha,
    };
    let mut manifest = RunManifest::new(name, &eff);
    let mut model_obs = Vec::new();
    for (i, m) in cfg.models.iter().enumerate() {
        let records: Vec<EvalRecord> = read_jsonl(Path::new(&m.records))?;
        let subject = if m.name.is_empty() { format!("model{}", i + 1) } else { m.name.clone() };
        model_obs.extend(records.iter().map(|r| Observation::from_eval(&subject, r)));
        manifest = manifest.input(Path::new(&m.records))?;
    }
    let mut human_obs = Vec::new();
    if let Some(h) = &cfg.human {
        let (responses, plan, m) = load_human(h, manifest)?;
        manifest = m;
        let rates = human_error_rates(&responses, &plan.trials, &GroupingSpec::default())?;
        human_obs.extend(rates.observations.iter().map(Observation::from_human));
    }
    let model_report = if model_obs.is_empty() {
        None
    } else {
        Some(contrast_report(&model_obs, &spec)?)
    };
    let human_report = if cfg.human.is_some() {
        Some(contrast_report(&human_obs, &spec)?)
    } else {
        None
    };
    let run = Run::open(root, manifest)?;
    for (label, rep) in [("model", &model_report), ("human", &human_report)] {
        if let Some(r) = rep {
            run.text(&format!("stats-{label}.txt"), &r.to_text())?;
            run.json(&format!("stats-{label}.json"), r)?;
        }
    }
    Ok(run.dir)
}

fn compare(root: &Path, name: &str, (cfg, eff): (CompareConfig, Value)) -> Result<PathBuf> {
    let mut manifest = RunManifest::new(name, &eff);
    let mut model: Vec<ConditionSummary> = Vec::new();
    for p in &cfg.model_summaries {
        model.extend(read_json::<Vec<ConditionSummary>>(Path::new(p))?);
        manifest = manifest.input(Path::new(p))?;
    }
    let human: Option<Vec<ConditionSummary>> = if !cfg.human_summaries.is_empty() {
        let mut rows = Vec::new();
        for p in &cfg.human_summaries {
            rows.extend(read_json::<Vec<ConditionSummary>>(Path::new(p))?);
            manifest = manifest.input(Path::new(p))?;
        }
        Some(rows)
    } else if let Some(h) = &cfg.human {
        let (responses, plan, m) = load_human(h, manifest)?;
        manifest = m;
        let mut rows = Vec::new();
        for g in &cfg.groupings {
            let spec = grouping(g, cfg.bootstrap, cfg.bootstrap_seed)?;
            rows.extend(human_error_rates(&responses, &plan.trials, &spec)?.agreement);
        }
        Some(rows)
    } else {
        None
    };
    let report = compare_model_human(&model, human.as_deref())?;
    let run = Run::open(root, manifest)?;
    run.text("comparison.csv", &report.csv())?;
    run.text("comparison.txt", &report.to_text())?;
    run.svg("comparison.svg", &report.svg())?;
    run.json("comparison.json", &report)?;
    Ok(run.dir)
}

fn sessions(root: &Path, name: &str, (cfg, eff): (SessionsConfig, Value)) -> Result<PathBuf> {
    let plan = assemble_sessions(&build_lexicon(), cfg.seed)?;
    plan.verify()?;
    let run = Run::open(root, RunManifest::new(name, &eff).seed("seed", cfg.seed))?;
    run.json("sessions.json", &plan)?;
    write_trials(run.path("stimuli.jsonl"), Some(&format!("manifest={}", run.hash)), &plan.trials)?;
    let mut csv = String::from("session,block,grammaticality,construction,condition,role,count\n");
    for d in &plan.design {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            d.session,
            d.block,
            d.grammaticality,
            d.construction,
            d.condition,
            d.role.map_or("*".to_string(), |r| r.to_string()),
            d.count
        );
    }
    run.text("design.csv", &csv)?;
    Ok(run.dir)
}

/// Port from the config, else `$AGLB_PORT`, else 8080.
pub fn resolve_port(configured: Option<u16>) -> Result<u16> {
    if let Some(p) = configured {
        return Ok(p);
    }
    match env::var("AGLB_PORT") {
        Ok(s) => s
            .parse()
            .map_err(|_| Error::Config { paths: vec![format!("AGLB_PORT: not a port number: {s:?}")] }),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

fn serve_cmd(root: &Path, name: &str, (cfg, eff): (ServeConfig, Value)) -> Result<PathBuf> {
    let sessions_path = PathBuf::from(&cfg.sessions);
    let plan: SessionPlan = read_json(&sessions_path)?;
    plan.verify()?;
    let responses_dir = cfg
        .responses_dir
        .clone()
        .map(PathBuf::from)
        .unwrap_or_else(|| sessions_path.with_file_name("responses"));
    let port = resolve_port(cfg.port)?;
    let addr: SocketAddr = format!("{}:{port}", cfg.host)
        .parse()
        .map_err(|_| Error::Config { paths: vec![format!("host: cannot bind {}:{port}", cfg.host)] })?;
    let run = Run::open(root, RunManifest::new(name, &eff).input(&sessions_path)?)?;
    let state = AppState::new(&plan, &cfg.timing, &responses_dir)?;
    eprintln!("serving {} sessions on http://{addr} (responses in {})", plan.sessions.len(), responses_dir.display());
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io(&run.dir, e))?;
    rt.block_on(service::serve(addr, state))?;
    Ok(run.dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("aglb").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn trailing_overrides_parse() {
        let cli = parse(&["gen-stimuli", "--config", "c.json", "--task", "long_nested", "--n", "4096", "--seed=7"]);
        let c = cli.command.common();
        assert_eq!(c.config.as_deref(), Some(Path::new("c.json")));
        assert_eq!(c.overrides, vec!["--task", "long_nested", "--n", "4096", "--seed=7"]);
        let (cfg, _): (GenStimuliConfig, _) = config::build(None, &c.overrides).unwrap();
        assert_eq!((cfg.task.as_str(), cfg.n, cfg.seed), ("long_nested", 4096, 7));
    }

    #[test]
    fn common_flags_after_overrides() {
        let cli = parse(&["eval", "--checkpoint", "x", "--out-root=/tmp/r", "--stimuli", "y", "-c", "c.json"]);
        let c = cli.command.common().normalized().unwrap();
        assert_eq!(c.out_root.as_deref(), Some(Path::new("/tmp/r")));
        assert_eq!(c.config.as_deref(), Some(Path::new("c.json")));
        assert_eq!(c.overrides, vec!["--checkpoint", "x", "--stimuli", "y"]);
        let cli = parse(&["eval", "--checkpoint", "x", "--out-root"]);
        assert!(cli.command.common().normalized().is_err());
    }

    #[test]
    fn unknown_command_is_usage_error() {
        assert!(Cli::try_parse_from(["aglb", "frobnicate"]).is_err());
    }

    #[test]
    fn unknown_key_is_config_error() {
        let cli = parse(&["eval", "--checkpoint", "x", "--stimuli", "y", "--bogus", "1"]);
        let err = config::build::<EvalConfig>(None, &cli.command.common().overrides).unwrap_err();
        assert!(matches!(err, Error::Config { ref paths } if paths[0].starts_with("bogus")), "{err}");
    }

    #[test]
    fn every_default_config_round_trips() {
        for (cmd, v) in default_configs() {
            assert!(v.is_object(), "{cmd}");
        }
        assert_eq!(default_configs().len(), 14);
    }

    #[test]
    fn shipped_schema_matches_defaults() {
        let schema: Value = serde_json::from_str(include_str!("../schema/config.schema.json")).unwrap();
        let defs = schema["$defs"].as_object().unwrap();
        let defaults = default_configs();
        assert_eq!(defs.keys().map(String::as_str).collect::<Vec<_>>(), defaults.keys().copied().collect::<Vec<_>>());
        for (cmd, d) in defaults {
            let props = defs[cmd]["properties"].as_object().unwrap();
            let d = d.as_object().unwrap();
            assert_eq!(props.keys().collect::<Vec<_>>(), d.keys().collect::<Vec<_>>(), "{cmd}");
            for (k, p) in props {
                if let Some(dv) = p.get("default") {
                    assert_eq!(dv, &d[k], "{cmd}.{k}");
                }
            }
        }
    }

    #[test]
    fn port_precedence() {
        assert_eq!(resolve_port(Some(9000)).unwrap(), 9000);
    }
}
