// SPDX-License-Identifier: MIT OR Apache-2.0

//! Gate and state traces, efferent connectivity, embedding PCA and the
//! short-range number-unit detector. Nothing here mutates a checkpoint.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{AblationMask, Checkpoint, GateRecord, LayerGates, Runner, UnitId};
use crate::numerics::{auc, mean, pca, Matrix};
use crate::stimuli::lexicon::{Analysis, Analyzer};
use crate::stimuli::{Condition, Gender, Lexicon, Number, TargetRole, Task, Trial};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Signal {
    #[serde(rename = "i")]
    Input,
    #[serde(rename = "f")]
    Forget,
    #[serde(rename = "C")]
    Cell,
    #[serde(rename = "h")]
    Hidden,
}

impl Signal {
    pub const ALL: [Signal; 4] = [Signal::Input, Signal::Forget, Signal::Cell, Signal::Hidden];

    pub fn code(self) -> &'static str {
        match self {
            Signal::Input => "i",
            Signal::Forget => "f",
            Signal::Cell => "C",
            Signal::Hidden => "h",
        }
    }

    pub fn read(self, g: &LayerGates, index: usize) -> f64 {
        match self {
            Signal::Input => g.i[index],
            Signal::Forget => g.f[index],
            Signal::Cell => g.c[index],
            Signal::Hidden => g.h[index],
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Runs one trial and returns the gate record after every token.
pub fn trial_gates(ckpt: &Checkpoint, tokens: &[String], mask: &AblationMask) -> Result<Vec<GateRecord>> {
    let ids = ckpt.vocab.encode(tokens)?;
    let mut runner = Runner::new(ckpt, mask)?;
    ids.iter().map(|&t| runner.feed(t).cloned()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub task: Task,
    pub condition: Condition,
    pub unit: UnitId,
    pub signal: Signal,
    pub n: usize,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Tokens of the first trial in the group, one per timestep.
    pub tokens: Vec<String>,
}

/// Welford accumulator over aligned sequences.
#[derive(Clone, Debug)]
struct Running {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Running {
    fn new(len: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, xs: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(xs) {
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }

    /// Population sd across trials.
    fn sd(&self) -> Vec<f64> {
        self.m2.iter().map(|s| (s / self.n as f64).sqrt()).collect()
    }
}

/// Condition-averaged traces for every (task, condition) group in `trials`,
/// every unit and every signal. Trials of a group must share their length.
pub fn trace_conditions(
    ckpt: &Checkpoint,
    trials: &[Trial],
    units: &[UnitId],
    mask: &AblationMask,
) -> Result<Vec<TraceSummary>> {
    for u in units {
        if u.layer >= ckpt.num_layers() || u.index >= ckpt.hidden_dim() {
            return Err(Error::arg(format!("unit {u} out of range")));
        }
    }
    let records: Vec<Vec<GateRecord>> = trials
        .par_iter()
        .map(|t| trial_gates(ckpt, &t.tokens, mask))
        .collect::<Result<_>>()?;
    let mut groups: BTreeMap<(Task, String), Vec<usize>> = BTreeMap::new();
    for (i, t) in trials.iter().enumerate() {
        groups.entry((t.task, t.condition.label())).or_default().push(i);
    }
    let mut out = Vec::new();
    for ((task, _), members) in groups {
        let first = &trials[members[0]];
        let len = first.tokens.len();
        if let Some(&bad) = members.iter().find(|&&i| trials[i].tokens.len() != len) {
            return Err(Error::Alignment(format!(
                "trial {} has {} tokens, {} has {len}",
                trials[bad].id,
                trials[bad].tokens.len(),
                first.id
            )));
        }
        for &u in units {
            for s in Signal::ALL {
                let mut acc = Running::new(len);
                let mut row = vec![0.0; len];
                for &i in &members {
                    for (t, rec) in records[i].iter().enumerate() {
                        row[t] = s.read(&rec.layers[u.layer], u.index);
                    }
                    acc.push(&row);
                }
                out.push(TraceSummary {
                    task,
                    condition: first.condition.clone(),
                    unit: u,
                    signal: s,
                    n: acc.n,
                    sd: acc.sd(),
                    mean: acc.mean,
                    tokens: first.tokens.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Per-timestep AUC of one unit's signal between plural-subject and
/// singular-subject trials (0.5 means no separation).
pub fn subject_number_auc(
    ckpt: &Checkpoint,
    trials: &[Trial],
    unit: UnitId,
    signal: Signal,
    mask: &AblationMask,
) -> Result<Vec<f64>> {
    let runs = trials
        .par_iter()
        .map(|t| trial_gates(ckpt, &t.tokens, mask))
        .collect::<Result<Vec<_>>>()?;
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    Ok((0..len)
        .map(|step| {
            let (mut p, mut s) = (Vec::new(), Vec::new());
            for (t, r) in trials.iter().zip(&runs) {
                let v = signal.read(&r[step].layers[unit.layer], unit.index);
                match t.condition.number(0) {
                    Some(Number::Plural) => p.push(v),
                    Some(Number::Singular) => s.push(v),
                    None => {}
                }
            }
            auc(&p, &s)
        })
        .collect())
}

pub const TRACE_CSV_HEADER: &str = "task,condition,unit,signal,t,token,mean,sd";

pub fn traces_csv(traces: &[TraceSummary]) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for tr in traces {
        for t in 0..tr.mean.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                tr.task, tr.condition, tr.unit, tr.signal, t, tr.tokens[t], tr.mean[t], tr.sd[t]
            ));
        }
    }
    out
}

/// Successive state changes under a repeated token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCheck {
    pub token: String,
    /// Max-norm change of (h, C) over all layers at each step.
    pub deltas: Vec<f64>,
    /// First step whose delta fell below the tolerance.
    pub converged_at: Option<usize>,
}

pub fn fixed_point_check(ckpt: &Checkpoint, token: &str, steps: usize, tol: f64) -> Result<FixedPointCheck> {
    let id = ckpt.vocab.require(token)?;
    let mut runner = Runner::new(ckpt, &AblationMask::empty())?;
    let mut prev = runner.state().clone();
    let mut deltas = Vec::with_capacity(steps);
    for _ in 0..steps {
        runner.feed(id)?;
        let s = runner.state();
        let mut d: f64 = 0.0;
        for l in 0..s.h.len() {
            for (a, b) in s.h[l].iter().zip(&prev.h[l]).chain(s.c[l].iter().zip(&prev.c[l])) {
                d = d.max((a - b).abs());
            }
        }
        deltas.push(d);
        prev = s.clone();
    }
    let converged_at = deltas.iter().position(|&d| d < tol);
    Ok(FixedPointCheck {
        token: token.to_string(),
        deltas,
        converged_at,
    })
}

/// Cap reported when both weight sets have zero spread but different means.
pub const SEPARATION_CAP: f64 = 1e12;

/// Standardized mean difference `|m1 - m2| / pooled sd` and a flag for
/// perfect separation (zero pooled sd, different means).
pub fn separation(a: &[f64], b: &[f64]) -> (f64, bool) {
    let (ma, mb) = (mean(a), mean(b));
    let ss = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    let dof = (a.len() + b.len()).saturating_sub(2).max(1) as f64;
    let pooled = ((ss(a, ma) + ss(b, mb)) / dof).sqrt();
    let diff = (ma - mb).abs();
    if diff == 0.0 {
        (0.0, false)
    } else if pooled == 0.0 {
        (SEPARATION_CAP, true)
    } else {
        ((diff / pooled).min(SEPARATION_CAP), false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityRecord {
    pub unit: UnitId,
    pub words_a: Vec<String>,
    pub words_b: Vec<String>,
    pub weights_a: Vec<f64>,
    pub weights_b: Vec<f64>,
    pub separation: f64,
    pub perfect_separation: bool,
    /// Mean h one step before the target; absent for raw efferent records.
    pub mean_h: Option<f64>,
    pub effective_a: Vec<f64>,
    pub effective_b: Vec<f64>,
    pub effective_separation: Option<f64>,
}

fn check_top(ckpt: &Checkpoint, unit: UnitId) -> Result<()> {
    if unit.layer != ckpt.top_layer() || unit.index >= ckpt.hidden_dim() {
        return Err(Error::arg(format!(
            "unit {unit} does not project to the output (top layer is {})",
            ckpt.top_layer()
        )));
    }
    Ok(())
}

/// Output-embedding weights from `unit` to two word sets.
pub fn efferent_weights(ckpt: &Checkpoint, unit: UnitId, words_a: &[String], words_b: &[String]) -> Result<ConnectivityRecord> {
    check_top(ckpt, unit)?;
    if words_a.is_empty() || words_b.is_empty() {
        return Err(Error::arg("efferent word sets must be nonempty"));
    }
    let read = |ws: &[String]| -> Result<Vec<f64>> {
        ws.iter()
            .map(|w| Ok(ckpt.output_embedding.get(ckpt.vocab.require(w)?, unit.index)))
            .collect()
    };
    let weights_a = read(words_a)?;
    let weights_b = read(words_b)?;
    let (sep, perfect) = separation(&weights_a, &weights_b);
    Ok(ConnectivityRecord {
        unit,
        words_a: words_a.to_vec(),
        words_b: words_b.to_vec(),
        weights_a,
        weights_b,
        separation: sep,
        perfect_separation: perfect,
        mean_h: None,
        effective_a: Vec::new(),
        effective_b: Vec::new(),
        effective_separation: None,
    })
}

/// Mean hidden activity of each unit after reading the token just before the
/// `role` target, over `trials`.
pub fn mean_h_before_target(
    ckpt: &Checkpoint,
    trials: &[Trial],
    role: TargetRole,
    units: &[UnitId],
    mask: &AblationMask,
) -> Result<Vec<f64>> {
    if trials.is_empty() {
        return Err(Error::arg("no trials for mean activity"));
    }
    let states = trials
        .par_iter()
        .map(|t| {
            let target = t.target(role).ok_or_else(|| Error::UnsupportedTarget {
                task: t.task.to_string(),
                target: role.to_string(),
            })?;
            let ids = ckpt.vocab.encode(&t.tokens[..target.position])?;
            let mut runner = Runner::new(ckpt, mask)?;
            for id in ids {
                runner.feed(id)?;
            }
            Ok(units.iter().map(|u| runner.state().h[u.layer][u.index]).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..units.len())
        .map(|j| states.iter().map(|s| s[j]).sum::<f64>() / states.len() as f64)
        .collect())
}

/// Efferent weights scaled by mean activity one step before the target, in
/// the order of `units` (typically ablation rank).
pub fn effective_efferent(
    ckpt: &Checkpoint,
    units: &[UnitId],
    trials: &[Trial],
    role: TargetRole,
    words_a: &[String],
    words_b: &[String],
    mask: &AblationMask,
) -> Result<Vec<ConnectivityRecord>> {
    let hs = mean_h_before_target(ckpt, trials, role, units, mask)?;
    units
        .iter()
        .zip(hs)
        .map(|(&u, h)| {
            let mut rec = efferent_weights(ckpt, u, words_a, words_b)?;
            rec.effective_a = rec.weights_a.iter().map(|w| w * h).collect();
            rec.effective_b = rec.weights_b.iter().map(|w| w * h).collect();
            rec.effective_separation = Some(separation(&rec.effective_a, &rec.effective_b).0);
            rec.mean_h = Some(h);
            Ok(rec)
        })
        .collect()
}

pub const CONNECTIVITY_CSV_HEADER: &str = "rank,unit,set,word,weight,mean_h,effective";

pub fn connectivity_csv(records: &[ConnectivityRecord]) -> String {
    let mut out = String::from(CONNECTIVITY_CSV_HEADER);
    out.push('\n');
    for (rank, r) in records.iter().enumerate() {
        let mh = r.mean_h.map_or("NA".to_string(), |h| h.to_string());
        for (set, words, ws, eff) in [("a", &r.words_a, &r.weights_a, &r.effective_a), ("b", &r.words_b, &r.weights_b, &r.effective_b)] {
            for (i, w) in words.iter().enumerate() {
                let e = eff.get(i).map_or("NA".to_string(), |x| x.to_string());
                out.push_str(&format!("{rank},{},{set},{w},{},{mh},{e}\n", r.unit, ws[i]));
            }
        }
    }
    out
}

/// Third-person singular and plural forms of the lexicon's transitive verbs
/// that the checkpoint knows.
pub fn verb_number_sets(lex: &Lexicon, ckpt: &Checkpoint) -> (Vec<String>, Vec<String>) {
    let keep = |n: Number| {
        lex.verbs
            .iter()
            .map(|v| v.third(n).to_string())
            .filter(|w| ckpt.vocab.index_of(w).is_some())
            .collect()
    };
    (keep(Number::Singular), keep(Number::Plural))
}

/// Masculine and feminine adjective forms (both numbers) known to the checkpoint.
pub fn adjective_gender_sets(lex: &Lexicon, ckpt: &Checkpoint) -> (Vec<String>, Vec<String>) {
    let keep = |g: Gender| {
        lex.adjectives
            .iter()
            .flat_map(|a| [a.form(g, Number::Singular).to_string(), a.form(g, Number::Plural).to_string()])
            .filter(|w| ckpt.vocab.index_of(w).is_some())
            .collect()
    };
    (keep(Gender::Masculine), keep(Gender::Feminine))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSide {
    Input,
    Output,
}

impl std::str::FromStr for EmbeddingSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(EmbeddingSide::Input),
            "output" => Ok(EmbeddingSide::Output),
            _ => Err(Error::arg(format!("embedding side must be input or output, got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub word: String,
    pub number: Option<Number>,
    pub gender: Option<Gender>,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProjection {
    pub side: EmbeddingSide,
    /// 1-based component numbers.
    pub pcs: (usize, usize),
    pub explained_variance: (f64, f64),
    pub points: Vec<PcaPoint>,
}

fn features(analyzer: &Analyzer, word: &str) -> (Option<Number>, Option<Gender>) {
    for a in analyzer.analyze(word) {
        match a {
            Analysis::Noun { gender, number, .. } | Analysis::Adjective { gender, number, .. } => {
                return (Some(*number), Some(*gender))
            }
            Analysis::Article { gender, number } | Analysis::Contracted { gender, number, .. } => {
                return (Some(*number), *gender)
            }
            Analysis::Verb { number, .. } | Analysis::Copula { number } => return (Some(*number), None),
            _ => {}
        }
    }
    (None, None)
}

/// Projects embedding rows of `words` onto two principal components
/// (1-based), labelling points with their number and gender.
pub fn embedding_pca(
    ckpt: &Checkpoint,
    words: &[String],
    side: EmbeddingSide,
    pcs: (usize, usize),
    analyzer: &Analyzer,
) -> Result<EmbeddingProjection> {
    if words.len() < 3 {
        return Err(Error::arg(format!("embedding PCA needs at least 3 words, got {}", words.len())));
    }
    if pcs.0 == 0 || pcs.1 == 0 {
        return Err(Error::arg("principal components are numbered from 1"));
    }
    let table = match side {
        EmbeddingSide::Input => &ckpt.input_embedding,
        EmbeddingSide::Output => &ckpt.output_embedding,
    };
    let rows = words
        .iter()
        .map(|w| Ok(table.row(ckpt.vocab.require(w)?).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let data = Matrix::from_rows(&rows)?;
    let k = pcs.0.max(pcs.1);
    let res = pca(&data, k)?;
    let points = words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let (number, gender) = features(analyzer, w);
            PcaPoint {
                word: w.clone(),
                number,
                gender,
                x: res.projections.get(i, pcs.0 - 1),
                y: res.projections.get(i, pcs.1 - 1),
            }
        })
        .collect();
    Ok(EmbeddingProjection {
        side,
        pcs,
        explained_variance: (res.explained_variance[pcs.0 - 1], res.explained_variance[pcs.1 - 1]),
        points,
    })
}

/// True when some threshold on x puts every singular point on one side and
/// every plural point on the other.
pub fn separable_on_x(points: &[PcaPoint]) -> bool {
    let xs = |n: Number| -> Vec<f64> { points.iter().filter(|p| p.number == Some(n)).map(|p| p.x).collect() };
    let (s, p) = (xs(Number::Singular), xs(Number::Plural));
    if s.is_empty() || p.is_empty() {
        return false;
    }
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    max(&s) < min(&p) || max(&p) < min(&s)
}

pub const PCA_CSV_HEADER: &str = "word,number,gender,x,y";

pub fn pca_csv(p: &EmbeddingProjection) -> String {
    let mut out = String::from(PCA_CSV_HEADER);
    out.push('\n');
    for pt in &p.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            pt.word,
            pt.number.map_or("NA".to_string(), |n| n.to_string()),
            pt.gender.map_or("NA".to_string(), |g| g.to_string()),
            pt.x,
            pt.y
        ));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortRangeThresholds {
    /// Minimum AUC for the number and switch criteria.
    pub auc: f64,
    /// Minimum efferent separation.
    pub separation: f64,
}

impl Default for ShortRangeThresholds {
    fn default() -> Self {
        Self {
            auc: 0.9,
            separation: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortRangeDiagnostics {
    pub unit: UnitId,
    /// AUC of h between plural and singular last-noun contexts, oriented so
    /// that it is at least 0.5; `polarity` is +1 when plural is higher.
    pub number_auc: f64,
    pub polarity: i8,
    /// Same orientation, on the steps right after a noun of opposite number.
    pub switch_auc: f64,
    pub separation: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortRangeReport {
    pub thresholds: ShortRangeThresholds,
    pub switches: usize,
    pub diagnostics: Vec<ShortRangeDiagnostics>,
}

impl ShortRangeReport {
    pub fn flagged(&self) -> Vec<UnitId> {
        self.diagnostics.iter().filter(|d| d.flagged).map(|d| d.unit).collect()
    }
}

/// Screens every top-layer unit for tracking the number of the most recent
/// noun. Probe trials must contain nouns of both numbers in sequence.
pub fn find_short_range_units(
    ckpt: &Checkpoint,
    probes: &[Trial],
    analyzer: &Analyzer,
    words_singular: &[String],
    words_plural: &[String],
    thresholds: ShortRangeThresholds,
    mask: &AblationMask,
) -> Result<ShortRangeReport> {
    let top = ckpt.top_layer();
    let hdim = ckpt.hidden_dim();
    let runs = probes
        .par_iter()
        .map(|t| trial_gates(ckpt, &t.tokens, mask))
        .collect::<Result<Vec<_>>>()?;
    // (trial, step, last-noun number) for context points and switch points
    let mut context = Vec::new();
    let mut switches = Vec::new();
    for (ti, t) in probes.iter().enumerate() {
        let mut last: Option<Number> = None;
        for (s, tok) in t.tokens.iter().enumerate() {
            if let Some((_, n)) = analyzer.noun(tok) {
                if last.is_some_and(|l| l != n) {
                    switches.push((ti, s, n));
                }
                last = Some(n);
            }
            if let Some(n) = last {
                context.push((ti, s, n));
            }
        }
    }
    if switches.is_empty() {
        return Err(Error::arg("probe trials contain no change of noun number"));
    }
    let split = |points: &[(usize, usize, Number)], u: usize, offset: usize| {
        let (mut p, mut s) = (Vec::new(), Vec::new());
        for &(ti, step, n) in points {
            let Some(rec) = runs[ti].get(step + offset) else { continue };
            let h = rec.layers[top].h[u];
            if n == Number::Plural {
                p.push(h);
            } else {
                s.push(h);
            }
        }
        (p, s)
    };
    let mut diagnostics = Vec::with_capacity(hdim);
    for u in 0..hdim {
        let (p, s) = split(&context, u, 0);
        let raw = auc(&p, &s);
        let polarity: i8 = if raw >= 0.5 { 1 } else { -1 };
        let orient = |a: f64| if polarity > 0 { a } else { 1.0 - a };
        let switch_auc = (0..2)
            .map(|off| {
                let (p, s) = split(&switches, u, off);
                if p.is_empty() || s.is_empty() {
                    0.5
                } else {
                    orient(auc(&p, &s))
                }
            })
            .fold(0.0, f64::max);
        let unit = UnitId::new(top, u);
        let sep = efferent_weights(ckpt, unit, words_singular, words_plural)?.separation;
        let number_auc = orient(raw);
        let flagged = number_auc >= thresholds.auc && switch_auc >= thresholds.auc && sep >= thresholds.separation;
        diagnostics.push(ShortRangeDiagnostics {
            unit,
            number_auc,
            polarity,
            switch_auc,
            separation: sep,
            flagged,
        });
    }
    Ok(ShortRangeReport {
        thresholds,
        switches: switches.len(),
        diagnostics,
    })
}
