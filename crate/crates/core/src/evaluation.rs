// SPDX-License-Identifier: MIT OR Apache-2.0

//! Agreement scoring, condition summaries and human error rates.
//!
//! A target is scored 1 when the model gives the agreeing form strictly more
//! probability than the opposite form after reading the prefix; ties score 0.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{AblationMask, Checkpoint, Runner, Vocab};
use crate::numerics::{derive_seed, seeded_rng};
use crate::responses::{PanelChoice, ResponseRecord};
use crate::stimuli::{conditions_for, Condition, Feature, Grammaticality, TargetRole, Task, Trial};

/// Chance level of the two-alternative agreement choice.
pub const CHANCE: f64 = 0.5;

/// `p_correct / (p_correct + p_wrong)`, `0.5` when both are zero.
pub fn success_probability(p_correct: f64, p_wrong: f64) -> f64 {
    let total = p_correct + p_wrong;
    if total > 0.0 {
        p_correct / total
    } else {
        CHANCE
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub trial_id: String,
    pub task: Task,
    pub condition: Condition,
    pub role: TargetRole,
    pub p_correct: f64,
    pub p_wrong: f64,
    pub score: u8,
    pub success_probability: f64,
    /// Ablation mask descriptor (`none` for the full model).
    pub mask: String,
}

impl EvalRecord {
    pub fn from_probabilities(trial: &Trial, role: TargetRole, p_correct: f64, p_wrong: f64, mask: &AblationMask) -> Self {
        Self {
            trial_id: trial.id.clone(),
            task: trial.task,
            condition: trial.condition.clone(),
            role,
            p_correct,
            p_wrong,
            score: u8::from(p_correct > p_wrong),
            success_probability: success_probability(p_correct, p_wrong),
            mask: mask.descriptor(),
        }
    }

    /// CSV header matching [`EvalRecord::csv_row`].
    pub const CSV_HEADER: &'static str =
        "trial_id,task,condition,role,p_correct,p_wrong,score,success_probability,mask";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{},{},{}",
            self.trial_id,
            self.task,
            self.condition,
            self.role,
            self.p_correct,
            self.p_wrong,
            self.score,
            self.success_probability,
            self.mask
        )
    }
}

/// A trial mapped to vocabulary indices, reusable across many masks.
#[derive(Clone, Debug)]
pub struct EncodedTrial<'t> {
    pub trial: &'t Trial,
    pub tokens: Vec<usize>,
    /// `(role, position, correct index, wrong index)` in position order.
    pub targets: Vec<(TargetRole, usize, usize, usize)>,
}

pub fn encode_trial<'t>(vocab: &Vocab, trial: &'t Trial) -> Result<EncodedTrial<'t>> {
    let mut targets = Vec::with_capacity(trial.targets.len());
    for t in &trial.targets {
        if t.position == 0 || t.position >= trial.tokens.len() {
            return Err(Error::arg(format!(
                "trial {}: target position {} leaves no prefix",
                trial.id, t.position
            )));
        }
        targets.push((t.role, t.position, vocab.require(&t.correct)?, vocab.require(&t.wrong)?));
    }
    targets.sort_by_key(|t| t.1);
    let last = targets.last().map_or(0, |t| t.1);
    Ok(EncodedTrial {
        trial,
        tokens: vocab.encode(&trial.tokens[..last])?,
        targets,
    })
}

pub fn encode_trials<'t>(vocab: &Vocab, trials: &'t [Trial]) -> Result<Vec<EncodedTrial<'t>>> {
    trials.iter().map(|t| encode_trial(vocab, t)).collect()
}

fn pair_probabilities(runner: &Runner<'_>, correct: usize, wrong: usize) -> (f64, f64) {
    let p = runner.distribution();
    (p[correct], p[wrong])
}

/// Scores every target of an encoded trial in one left-to-right pass; when
/// `role` is given only that target is scored.
pub fn score_encoded(
    ckpt: &Checkpoint,
    enc: &EncodedTrial<'_>,
    role: Option<TargetRole>,
    mask: &AblationMask,
) -> Result<Vec<EvalRecord>> {
    let wanted: Vec<_> = enc
        .targets
        .iter()
        .filter(|t| role.is_none_or(|r| r == t.0))
        .collect();
    let Some(last) = wanted.last() else {
        return Ok(Vec::new());
    };
    let mut runner = Runner::new(ckpt, mask)?;
    let mut out = Vec::with_capacity(wanted.len());
    let mut fed = 0;
    for &&(r, pos, correct, wrong) in &wanted {
        while fed < pos {
            runner.feed(enc.tokens[fed])?;
            fed += 1;
        }
        let (pc, pw) = pair_probabilities(&runner, correct, wrong);
        out.push(EvalRecord::from_probabilities(enc.trial, r, pc, pw, mask));
        if pos == last.1 {
            break;
        }
    }
    Ok(out)
}

/// Feeds the prefix before the target and compares the two forms.
pub fn score_trial(ckpt: &Checkpoint, trial: &Trial, role: TargetRole, mask: &AblationMask) -> Result<EvalRecord> {
    let t = trial.target(role).ok_or_else(|| Error::UnsupportedTarget {
        task: trial.task.to_string(),
        target: role.to_string(),
    })?;
    let correct = ckpt.vocab.require(&t.correct)?;
    let wrong = ckpt.vocab.require(&t.wrong)?;
    if t.position == 0 {
        return Err(Error::arg(format!("trial {}: target at position 0", trial.id)));
    }
    let prefix = ckpt.vocab.encode(&trial.tokens[..t.position])?;
    let mut runner = Runner::new(ckpt, mask)?;
    for &tok in &prefix {
        runner.feed(tok)?;
    }
    let (pc, pw) = pair_probabilities(&runner, correct, wrong);
    Ok(EvalRecord::from_probabilities(trial, role, pc, pw, mask))
}

/// Scores all targets (or one role) of every trial, in parallel; output order
/// follows the input trials.
pub fn evaluate(ckpt: &Checkpoint, trials: &[Trial], role: Option<TargetRole>, mask: &AblationMask) -> Result<Vec<EvalRecord>> {
    let enc = encode_trials(&ckpt.vocab, trials)?;
    evaluate_encoded(ckpt, &enc, role, mask, true)
}

pub fn evaluate_encoded(
    ckpt: &Checkpoint,
    enc: &[EncodedTrial<'_>],
    role: Option<TargetRole>,
    mask: &AblationMask,
    parallel: bool,
) -> Result<Vec<EvalRecord>> {
    let per_trial: Vec<Result<Vec<EvalRecord>>> = if parallel {
        enc.par_iter().map(|e| score_encoded(ckpt, e, role, mask)).collect()
    } else {
        enc.iter().map(|e| score_encoded(ckpt, e, role, mask)).collect()
    };
    let mut out = Vec::with_capacity(enc.len());
    for r in per_trial {
        out.extend(r?);
    }
    Ok(out)
}

/// Accuracy per condition label, in canonical condition order.
pub fn accuracy_by_condition(records: &[EvalRecord]) -> BTreeMap<String, (usize, f64)> {
    let mut acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.condition.label()).or_default();
        e.0 += 1;
        e.1 += r.score as usize;
    }
    acc.into_iter()
        .map(|(k, (n, s))| (k, (n, s as f64 / n as f64)))
        .collect()
}

/// Something that can be summarized by condition.
pub trait Scored {
    fn id(&self) -> &str;
    fn task(&self) -> Task;
    fn condition(&self) -> &Condition;
    fn role(&self) -> TargetRole;
    /// 1 for a correct response, 0 for an error.
    fn score(&self) -> f64;
    fn success_probability(&self) -> Option<f64>;
}

impl Scored for EvalRecord {
    fn id(&self) -> &str {
        &self.trial_id
    }
    fn task(&self) -> Task {
        self.task
    }
    fn condition(&self) -> &Condition {
        &self.condition
    }
    fn role(&self) -> TargetRole {
        self.role
    }
    fn score(&self) -> f64 {
        f64::from(self.score)
    }
    fn success_probability(&self) -> Option<f64> {
        Some(self.success_probability)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Congruence {
    Congruent,
    Incongruent,
}

impl Congruence {
    pub fn of(c: &Condition) -> Self {
        if c.subjects_congruent() {
            Congruence::Congruent
        } else {
            Congruence::Incongruent
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Congruence::Congruent => "congruent",
            Congruence::Incongruent => "incongruent",
        }
    }
}

/// Grouping dimensions on top of the task, plus an optional attractor
/// filter. Tasks without an attractor slot pass the filter unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupingSpec {
    pub by_condition: bool,
    pub by_congruence: bool,
    pub by_role: bool,
    pub attractor: Option<Feature>,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for GroupingSpec {
    fn default() -> Self {
        Self {
            by_condition: true,
            by_congruence: false,
            by_role: true,
            attractor: None,
            bootstrap: 10_000,
            seed: 0,
        }
    }
}

impl GroupingSpec {
    pub fn keys(by_condition: bool, by_congruence: bool, by_role: bool) -> Self {
        Self {
            by_condition,
            by_congruence,
            by_role,
            ..Self::default()
        }
    }

    pub fn with_attractor(mut self, f: Feature) -> Self {
        self.attractor = Some(f);
        self
    }
}

impl FromStr for GroupingSpec {
    type Err = Error;

    /// Comma-separated keys from `task`, `condition`, `congruence`, `role`,
    /// `attractor=<S|P|M|F>`.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = Self::keys(false, false, false);
        for key in s.split(',').map(str::trim).filter(|k| !k.is_empty()) {
            match key {
                "task" => {}
                "condition" => spec.by_condition = true,
                "congruence" => spec.by_congruence = true,
                "role" => spec.by_role = true,
                _ => {
                    let f = key
                        .strip_prefix("attractor=")
                        .and_then(|v| {
                            let mut c = v.chars();
                            match (c.next(), c.next()) {
                                (Some(ch), None) => Feature::from_letter(ch),
                                _ => None,
                            }
                        })
                        .ok_or_else(|| Error::arg(format!("unknown grouping key {key:?}")))?;
                    spec.attractor = Some(f);
                }
            }
        }
        Ok(spec)
    }
}

/// One row of a condition table. Means are `None` when `n = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub task: Task,
    pub condition: Option<String>,
    pub congruence: Option<Congruence>,
    pub role: Option<TargetRole>,
    pub attractor: Option<String>,
    pub n: usize,
    pub accuracy: Option<f64>,
    pub error_rate: Option<f64>,
    pub success_probability: Option<f64>,
    /// 95% bootstrap interval of the error rate.
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// False when the group had no records.
    pub defined: bool,
}

impl ConditionSummary {
    pub const CSV_HEADER: &'static str =
        "task,condition,congruence,role,attractor,n,accuracy,error_rate,success_probability,ci_low,ci_high,defined";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x}"));
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.task,
            self.condition.as_deref().unwrap_or("*"),
            self.congruence.map_or("*", Congruence::code),
            self.role.map_or("*".to_string(), |r| r.to_string()),
            self.attractor.as_deref().unwrap_or("*"),
            self.n,
            opt(self.accuracy),
            opt(self.error_rate),
            opt(self.success_probability),
            opt(self.ci_low),
            opt(self.ci_high),
            self.defined
        )
    }

    /// Label used to align summaries, e.g. `long_nested/SP*/incongruent/embedded`.
    pub fn key(&self) -> String {
        format!(
            "{}/{}/{}/{}/{}",
            self.task,
            self.condition.as_deref().unwrap_or("*"),
            self.congruence.map_or("*", Congruence::code),
            self.role.map_or("*".to_string(), |r| r.to_string()),
            self.attractor.as_deref().unwrap_or("*"),
        )
    }
}

type GroupKey = (Task, Option<String>, Option<Congruence>, Option<TargetRole>);

fn passes_attractor(spec: &GroupingSpec, task: Task, c: &Condition) -> bool {
    match (spec.attractor, c.attractor_feature(task)) {
        (Some(want), Some(have)) => want == have,
        _ => true,
    }
}

fn expected_groups(spec: &GroupingSpec, task: Task, roles: &[TargetRole]) -> Vec<GroupKey> {
    let conds: Vec<Condition> = conditions_for(task)
        .into_iter()
        .filter(|c| passes_attractor(spec, task, c))
        .collect();
    let mut keys: Vec<GroupKey> = Vec::new();
    let role_opts: Vec<Option<TargetRole>> = if spec.by_role {
        roles.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    for role in role_opts {
        if spec.by_condition {
            for c in &conds {
                let cong = spec.by_congruence.then(|| Congruence::of(c));
                keys.push((task, Some(c.label()), cong, role));
            }
        } else if spec.by_congruence {
            for cong in [Congruence::Congruent, Congruence::Incongruent] {
                keys.push((task, None, Some(cong), role));
            }
        } else {
            keys.push((task, None, None, role));
        }
    }
    keys
}

fn bootstrap_ci(scores: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let n = scores.len();
    let mut rng = seeded_rng(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| scores[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (q(0.025), q(0.975))
}

fn fnv(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Groups records by task and the requested keys. Every group the design
/// implies is emitted, with `n = 0` and `defined = false` when empty.
pub fn aggregate<R: Scored>(records: &[R], spec: &GroupingSpec) -> Result<Vec<ConditionSummary>> {
    if spec.bootstrap == 0 {
        return Err(Error::arg("bootstrap needs at least one resample"));
    }
    let mut roles: BTreeMap<Task, Vec<TargetRole>> = BTreeMap::new();
    let mut groups: HashMap<GroupKey, Vec<&R>> = HashMap::new();
    for r in records {
        let task = r.task();
        roles.entry(task).or_insert_with(|| task.target_roles());
        if !passes_attractor(spec, task, r.condition()) {
            continue;
        }
        let key = (
            task,
            spec.by_condition.then(|| r.condition().label()),
            spec.by_congruence.then(|| Congruence::of(r.condition())),
            spec.by_role.then(|| r.role()),
        );
        groups.entry(key).or_default().push(r);
    }
    let attractor = spec.attractor.map(|f| f.letter().to_string());
    let mut out = Vec::new();
    for (task, task_roles) in &roles {
        for key in expected_groups(spec, *task, task_roles) {
            let mut members = groups.remove(&key).unwrap_or_default();
            members.sort_by(|a, b| a.id().cmp(b.id()).then(a.role().cmp(&b.role())));
            let n = members.len();
            let mut summary = ConditionSummary {
                task: key.0,
                condition: key.1.clone(),
                congruence: key.2,
                role: key.3,
                attractor: conditions_for(*task)[0].attractor_index(*task).and(attractor.clone()),
                n,
                accuracy: None,
                error_rate: None,
                success_probability: None,
                ci_low: None,
                ci_high: None,
                defined: n > 0,
            };
            if n > 0 {
                let scores: Vec<f64> = members.iter().map(|r| r.score()).collect();
                let acc = scores.iter().sum::<f64>() / n as f64;
                summary.accuracy = Some(acc);
                summary.error_rate = Some(1.0 - acc);
                let sps: Vec<f64> = members.iter().filter_map(|r| r.success_probability()).collect();
                if sps.len() == n {
                    summary.success_probability = Some(sps.iter().sum::<f64>() / n as f64);
                }
                let seed = derive_seed(spec.seed, fnv(&summary.key()));
                let (lo, hi) = bootstrap_ci(&scores, spec.bootstrap, seed);
                summary.ci_low = Some(1.0 - hi);
                summary.ci_high = Some(1.0 - lo);
            }
            out.push(summary);
        }
    }
    if let Some((k, _)) = groups.into_iter().next() {
        return Err(Error::Integrity(format!("record group {k:?} is outside the task design")));
    }
    Ok(out)
}

/// One human judgement on an agreement trial: a violation trial scored 1 when
/// it was detected, attributed to the violated verb.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanObservation {
    pub participant_id: String,
    pub trial_id: String,
    pub task: Task,
    pub condition: Condition,
    pub role: TargetRole,
    pub error: bool,
}

impl Scored for HumanObservation {
    fn id(&self) -> &str {
        &self.trial_id
    }
    fn task(&self) -> Task {
        self.task
    }
    fn condition(&self) -> &Condition {
        &self.condition
    }
    fn role(&self) -> TargetRole {
        self.role
    }
    fn score(&self) -> f64 {
        if self.error {
            0.0
        } else {
            1.0
        }
    }
    fn success_probability(&self) -> Option<f64> {
        None
    }
}

/// A response to an acceptable trial, scored 0 when a violation was reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FalseAlarm {
    pub participant_id: String,
    pub trial_id: String,
    pub task: Task,
    pub condition: Condition,
    pub false_alarm: bool,
}

impl Scored for FalseAlarm {
    fn id(&self) -> &str {
        &self.trial_id
    }
    fn task(&self) -> Task {
        self.task
    }
    fn condition(&self) -> &Condition {
        &self.condition
    }
    /// Not attributable to a dependency; grouped under the main verb.
    fn role(&self) -> TargetRole {
        TargetRole::Main
    }
    fn score(&self) -> f64 {
        if self.false_alarm {
            0.0
        } else {
            1.0
        }
    }
    fn success_probability(&self) -> Option<f64> {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanErrorRates {
    /// Missed violations per violated dependency.
    pub agreement: Vec<ConditionSummary>,
    /// False alarms on acceptable trials, kept apart from agreement errors.
    pub false_alarms: Vec<ConditionSummary>,
    pub observations: Vec<HumanObservation>,
    pub excluded_timeouts: usize,
    pub excluded_fillers: usize,
}

/// Splits responses into agreement observations and false alarms.
/// Timeouts carry no judgement and are dropped (counted).
pub fn human_observations(
    responses: &[ResponseRecord],
    trials: &[Trial],
) -> Result<(Vec<HumanObservation>, Vec<FalseAlarm>, usize, usize)> {
    let index: HashMap<&str, &Trial> = trials.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut obs = Vec::new();
    let mut fas = Vec::new();
    let (mut timeouts, mut fillers) = (0, 0);
    for r in responses {
        let t = index
            .get(r.trial_id.as_str())
            .ok_or_else(|| Error::Integrity(format!("response references unknown trial {}", r.trial_id)))?;
        if r.panel_choice == PanelChoice::Timeout {
            timeouts += 1;
            continue;
        }
        let said_incorrect = r.panel_choice == PanelChoice::Incorrect;
        match t.grammaticality {
            Grammaticality::NumberViolation(role) => obs.push(HumanObservation {
                participant_id: r.participant_id.clone(),
                trial_id: t.id.clone(),
                task: t.task,
                condition: t.condition.clone(),
                role,
                error: !said_incorrect,
            }),
            Grammaticality::Acceptable => fas.push(FalseAlarm {
                participant_id: r.participant_id.clone(),
                trial_id: t.id.clone(),
                task: t.task,
                condition: t.condition.clone(),
                false_alarm: said_incorrect,
            }),
            Grammaticality::Filler(_) => fillers += 1,
        }
    }
    Ok((obs, fas, timeouts, fillers))
}

pub fn human_error_rates(
    responses: &[ResponseRecord],
    trials: &[Trial],
    spec: &GroupingSpec,
) -> Result<HumanErrorRates> {
    let (observations, fas, excluded_timeouts, excluded_fillers) = human_observations(responses, trials)?;
    let agreement = aggregate(&observations, spec)?;
    let fa_spec = GroupingSpec {
        by_role: false,
        ..spec.clone()
    };
    let false_alarms = aggregate(&fas, &fa_spec)?;
    Ok(HumanErrorRates {
        agreement,
        false_alarms,
        observations,
        excluded_timeouts,
        excluded_fillers,
    })
}
