// SPDX-License-Identifier: MIT OR Apache-2.0

//! Trials: template expansion, number violations and fillers.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::design::{conditions_for, Condition, Slot, TargetRole, Task};
use super::lexicon::{
    contracted_a, definite_article, Adjective, Gender, Lexicon, Noun, Number, Preposition, Verb,
};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, seeded_rng, SeededRng};

/// One evaluated position: the agreeing form and its opposite.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub role: TargetRole,
    pub position: usize,
    pub correct: String,
    pub wrong: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FillerKind {
    WrongPerson,
    NounForVerb,
    Infinitive,
    SemanticAbstract,
    SemanticInanimate,
    FelicitousAbstract,
    FelicitousInanimate,
}

impl FillerKind {
    pub const ALL: [FillerKind; 7] = [
        FillerKind::WrongPerson,
        FillerKind::NounForVerb,
        FillerKind::Infinitive,
        FillerKind::SemanticAbstract,
        FillerKind::SemanticInanimate,
        FillerKind::FelicitousAbstract,
        FillerKind::FelicitousInanimate,
    ];

    pub fn code(self) -> &'static str {
        match self {
            FillerKind::WrongPerson => "wrong-person",
            FillerKind::NounForVerb => "noun-for-verb",
            FillerKind::Infinitive => "infinitive",
            FillerKind::SemanticAbstract => "semantic-abstract",
            FillerKind::SemanticInanimate => "semantic-inanimate",
            FillerKind::FelicitousAbstract => "felicitous-abstract",
            FillerKind::FelicitousInanimate => "felicitous-inanimate",
        }
    }

    /// Verb replacements, as opposed to noun replacements.
    pub fn is_syntactic(self) -> bool {
        matches!(
            self,
            FillerKind::WrongPerson | FillerKind::NounForVerb | FillerKind::Infinitive
        )
    }

    /// Fillers that stay well formed.
    pub fn is_felicitous(self) -> bool {
        matches!(
            self,
            FillerKind::FelicitousAbstract | FillerKind::FelicitousInanimate
        )
    }
}

impl fmt::Display for FillerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FillerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FillerKind::ALL
            .into_iter()
            .find(|k| k.code() == s)
            .ok_or_else(|| Error::arg(format!("unknown filler subtype {s:?}")))
    }
}

/// Serialized as `acceptable`, `number-violation:<role>` or `filler:<subtype>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Grammaticality {
    Acceptable,
    NumberViolation(TargetRole),
    Filler(FillerKind),
}

impl Grammaticality {
    pub fn is_acceptable(self) -> bool {
        self == Grammaticality::Acceptable
    }

    /// Coarse class: `acceptable`, `number-violation` or `filler`.
    pub fn class(self) -> &'static str {
        match self {
            Grammaticality::Acceptable => "acceptable",
            Grammaticality::NumberViolation(_) => "number-violation",
            Grammaticality::Filler(_) => "filler",
        }
    }
}

impl fmt::Display for Grammaticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grammaticality::Acceptable => f.write_str("acceptable"),
            Grammaticality::NumberViolation(r) => write!(f, "number-violation:{r}"),
            Grammaticality::Filler(k) => write!(f, "filler:{k}"),
        }
    }
}

impl FromStr for Grammaticality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "acceptable" {
            return Ok(Grammaticality::Acceptable);
        }
        if let Some(r) = s.strip_prefix("number-violation:") {
            return Ok(Grammaticality::NumberViolation(r.parse()?));
        }
        if let Some(k) = s.strip_prefix("filler:") {
            return Ok(Grammaticality::Filler(k.parse()?));
        }
        Err(Error::arg(format!("unknown grammaticality tag {s:?}")))
    }
}

impl Serialize for Grammaticality {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Grammaticality {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Condition::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectNp {
    pub lemma: String,
    pub number: Number,
}

/// The lexemes filling a template.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LexemeAssignment {
    /// Noun lemma per noun slot.
    pub nouns: Vec<String>,
    /// Grammatical gender of each noun slot.
    pub genders: Vec<Gender>,
    /// Verb infinitives in template order.
    pub verbs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preposition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjective: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<ObjectNp>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEdit {
    pub position: usize,
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub id: String,
    pub task: Task,
    pub condition: Condition,
    pub tokens: Vec<String>,
    pub targets: Vec<Target>,
    pub grammaticality: Grammaticality,
    #[serde(default)]
    pub base_id: Option<String>,
    pub seed: u64,
    pub lexemes: LexemeAssignment,
    /// Token substitutions turning the base into this trial.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edits: Vec<TokenEdit>,
}

impl Trial {
    pub fn sentence(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn target(&self, role: TargetRole) -> Option<&Target> {
        self.targets.iter().find(|t| t.role == role)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Without replacement when the assignment space allows it, with
    /// replacement otherwise.
    #[default]
    Uniform,
    /// Distinct assignments only; asking for more than exist is an error.
    Exhaustive,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExpandOptions {
    pub sampling: Sampling,
    /// Append a direct-object NP after the template.
    pub with_object: bool,
}

fn noun_pool<'a>(task: Task, cond: &Condition, slot: usize, lex: &'a Lexicon) -> Vec<&'a Noun> {
    match cond.gender(slot) {
        Some(g) if task.is_gender() => lex.nouns.iter().filter(|n| n.gender == g).collect(),
        _ => lex.nouns.iter().collect(),
    }
}

fn slot_number(cond: &Condition, slot: usize) -> Number {
    cond.number(slot).unwrap_or(Number::Singular)
}

fn check_condition(task: Task, cond: &Condition) -> Result<()> {
    if conditions_for(task).contains(cond) {
        Ok(())
    } else {
        Err(Error::arg(format!("condition {cond} does not belong to task {task}")))
    }
}

/// Number of distinct lexeme assignments for a task cell.
pub fn assignment_space(task: Task, cond: &Condition, lex: &Lexicon, with_object: bool) -> u128 {
    let template = task.template();
    let mut total: u128 = 1;
    let k = task.noun_slots();
    for slot in 0..k {
        let pool = noun_pool(task, cond, slot, lex);
        let earlier_same = (0..slot)
            .filter(|&j| same_pool(task, cond, j, slot))
            .count();
        total *= pool.len().saturating_sub(earlier_same) as u128;
    }
    let mut verbs_used = 0usize;
    for s in &template {
        match s {
            Slot::Verb(..) => {
                total *= lex.verbs.len().saturating_sub(verbs_used) as u128;
                verbs_used += 1;
            }
            Slot::MatrixVerb(..) => total *= lex.matrix_verbs.len() as u128,
            Slot::Pp(_) => total *= lex.prepositions.len() as u128,
            Slot::Adjective(_) => total *= lex.adjectives.len() as u128,
            _ => {}
        }
    }
    if with_object {
        total *= 2 * lex.nouns.len().saturating_sub(k) as u128;
    }
    total
}

fn same_pool(task: Task, cond: &Condition, a: usize, b: usize) -> bool {
    !task.is_gender() || cond.gender(a) == cond.gender(b)
}

pub(crate) fn sample_assignment(
    task: Task,
    cond: &Condition,
    lex: &Lexicon,
    with_object: bool,
    rng: &mut SeededRng,
) -> LexemeAssignment {
    let mut nouns: Vec<&Noun> = Vec::new();
    for slot in 0..task.noun_slots() {
        let pool: Vec<&Noun> = noun_pool(task, cond, slot, lex)
            .into_iter()
            .filter(|n| !nouns.iter().any(|m| m.lemma == n.lemma))
            .collect();
        nouns.push(pool.choose(rng).expect("noun pool nonempty"));
    }
    let mut verbs: Vec<&Verb> = Vec::new();
    let mut preposition = None;
    let mut adjective = None;
    for s in task.template() {
        match s {
            Slot::Verb(..) => {
                let pool: Vec<&Verb> = lex
                    .verbs
                    .iter()
                    .filter(|v| !verbs.iter().any(|u| u.infinitive == v.infinitive))
                    .collect();
                verbs.push(pool.choose(rng).expect("verb pool nonempty"));
            }
            Slot::MatrixVerb(..) => verbs.push(lex.matrix_verbs.choose(rng).expect("matrix verbs")),
            Slot::Pp(_) => preposition = Some(lex.prepositions.choose(rng).expect("prepositions").name.clone()),
            Slot::Adjective(_) => adjective = Some(lex.adjectives.choose(rng).expect("adjectives").lemma.clone()),
            _ => {}
        }
    }
    let object = with_object.then(|| {
        let pool: Vec<&Noun> = lex
            .nouns
            .iter()
            .filter(|n| !nouns.iter().any(|m| m.lemma == n.lemma))
            .collect();
        let lemma = pool.choose(rng).expect("object pool").lemma.clone();
        let number = if rng.random::<bool>() {
            Number::Plural
        } else {
            Number::Singular
        };
        ObjectNp { lemma, number }
    });
    LexemeAssignment {
        genders: nouns.iter().map(|n| n.gender).collect(),
        nouns: nouns.iter().map(|n| n.lemma.clone()).collect(),
        verbs: verbs.iter().map(|v| v.infinitive.clone()).collect(),
        preposition,
        adjective,
        object,
    }
}

/// Surface forms for a slot sequence. `nouns[k]` and `numbers[k]` fill noun
/// slot `k`; verbs are consumed in slot order.
pub(crate) fn realize_slots(
    lex: &Lexicon,
    slots: &[Slot],
    nouns: &[&Noun],
    numbers: &[Number],
    verbs: &[&Verb],
    preposition: Option<&Preposition>,
    adjective: Option<&Adjective>,
) -> (Vec<String>, Vec<Target>) {
    let mut tokens: Vec<String> = Vec::new();
    let mut targets = Vec::new();
    let mut verb_iter = verbs.iter();
    for slot in slots {
        match *slot {
            Slot::Np(k) => {
                let form = nouns[k].form(numbers[k]);
                tokens.push(definite_article(nouns[k].gender, numbers[k], form).to_string());
                tokens.push(form.to_string());
            }
            Slot::Pp(k) => {
                let form = nouns[k].form(numbers[k]);
                let p = preposition.expect("template with a PP needs a preposition");
                tokens.extend(p.head.iter().cloned());
                tokens.push(contracted_a(nouns[k].gender, numbers[k], form).to_string());
                tokens.push(form.to_string());
            }
            Slot::Verb(k, role) | Slot::MatrixVerb(k, role) => {
                let v = verb_iter.next().expect("one verb per verb slot");
                targets.push(Target {
                    role,
                    position: tokens.len(),
                    correct: v.third(numbers[k]).to_string(),
                    wrong: v.third(numbers[k].flip()).to_string(),
                });
                tokens.push(v.third(numbers[k]).to_string());
            }
            Slot::Copula(k) => tokens.push(lex.copula.third(numbers[k]).to_string()),
            Slot::Adjective(k) => {
                let a = adjective.expect("template with an adjective slot");
                let (g, n) = (nouns[k].gender, numbers[k]);
                targets.push(Target {
                    role: TargetRole::Adjective,
                    position: tokens.len(),
                    correct: a.form(g, n).to_string(),
                    wrong: a.form(g.flip(), n).to_string(),
                });
                tokens.push(a.form(g, n).to_string());
            }
            Slot::Che => tokens.push("che".to_string()),
        }
    }
    (tokens, targets)
}

fn lookup<'a, T>(found: Option<&'a T>, what: &str, name: &str) -> Result<&'a T> {
    found.ok_or_else(|| Error::Generation(format!("{what} {name:?} is not in the lexicon")))
}

/// Realizes a task cell with explicit lexemes.
pub fn build_trial(
    task: Task,
    cond: &Condition,
    lex: &Lexicon,
    lexemes: &LexemeAssignment,
    id: String,
    seed: u64,
) -> Result<Trial> {
    check_condition(task, cond)?;
    let k = task.noun_slots();
    if lexemes.nouns.len() != k {
        return Err(Error::arg(format!("{task} needs {k} nouns")));
    }
    let mut nouns = lexemes
        .nouns
        .iter()
        .map(|l| lookup(lex.noun(l), "noun", l))
        .collect::<Result<Vec<_>>>()?;
    let mut numbers: Vec<Number> = (0..k).map(|s| slot_number(cond, s)).collect();
    if task.is_gender() {
        for (s, n) in nouns.iter().enumerate() {
            if cond.gender(s) != Some(n.gender) {
                return Err(Error::arg(format!(
                    "noun {:?} does not match gender {} of slot {s}",
                    n.lemma, cond.features[s].letter()
                )));
            }
        }
    }
    let verbs = lexemes
        .verbs
        .iter()
        .map(|v| lookup(lex.verb(v), "verb", v))
        .collect::<Result<Vec<_>>>()?;
    let template = task.template();
    let verb_slots = template
        .iter()
        .filter(|s| matches!(s, Slot::Verb(..) | Slot::MatrixVerb(..)))
        .count();
    if verbs.len() != verb_slots {
        return Err(Error::arg(format!("{task} needs {verb_slots} verbs")));
    }
    let preposition = lexemes
        .preposition
        .as_deref()
        .map(|p| lookup(lex.preposition(p), "preposition", p))
        .transpose()?;
    let adjective = lexemes
        .adjective
        .as_deref()
        .map(|a| lookup(lex.adjective(a), "adjective", a))
        .transpose()?;
    let mut slots = template;
    if let Some(obj) = &lexemes.object {
        nouns.push(lookup(lex.noun(&obj.lemma), "noun", &obj.lemma)?);
        numbers.push(obj.number);
        slots.push(Slot::Np(k));
    }
    let (tokens, targets) =
        realize_slots(lex, &slots, &nouns, &numbers, &verbs, preposition, adjective);
    Ok(Trial {
        id,
        task,
        condition: cond.clone(),
        tokens,
        targets,
        grammaticality: Grammaticality::Acceptable,
        base_id: None,
        seed,
        lexemes: lexemes.clone(),
        edits: Vec::new(),
    })
}

fn trial_id(task: Task, cond: &Condition, seed: u64, i: usize) -> String {
    format!(
        "{}-{}-{:08x}-{:05}",
        task.code(),
        cond,
        (seed ^ (seed >> 32)) as u32,
        i
    )
}

/// `n` acceptable trials of one task cell with default options.
pub fn expand(task: Task, cond: &Condition, lex: &Lexicon, n: usize, seed: u64) -> Result<Vec<Trial>> {
    expand_with(task, cond, lex, n, seed, ExpandOptions::default())
}

pub fn expand_with(
    task: Task,
    cond: &Condition,
    lex: &Lexicon,
    n: usize,
    seed: u64,
    opts: ExpandOptions,
) -> Result<Vec<Trial>> {
    if n == 0 {
        return Err(Error::arg("n must be at least 1"));
    }
    check_condition(task, cond)?;
    let space = assignment_space(task, cond, lex, opts.with_object);
    if opts.sampling == Sampling::Exhaustive && n as u128 > space {
        return Err(Error::arg(format!(
            "{n} trials requested but {task}/{cond} has only {space} distinct assignments"
        )));
    }
    let distinct = space >= n as u128;
    let mut rng = seeded_rng(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let lexemes = sample_assignment(task, cond, lex, opts.with_object, &mut rng);
        if distinct && !seen.insert(lexemes.clone()) {
            continue;
        }
        let id = trial_id(task, cond, seed, out.len());
        out.push(build_trial(task, cond, lex, &lexemes, id, seed)?);
    }
    Ok(out)
}

/// `n` trials spread over the task's conditions in canonical order (the
/// first `n mod C` conditions get one extra). Each condition draws from its
/// own derived seed.
pub fn generate_task(task: Task, lex: &Lexicon, n: usize, seed: u64, opts: ExpandOptions) -> Result<Vec<Trial>> {
    let conds = conditions_for(task);
    if n < conds.len() {
        return Err(Error::arg(format!(
            "{task} needs at least {} trials (one per condition)",
            conds.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for (i, c) in conds.iter().enumerate() {
        let count = n / conds.len() + usize::from(i < n % conds.len());
        out.extend(expand_with(task, c, lex, count, derive_seed(seed, i as u64), opts)?);
    }
    Ok(out)
}

/// Swaps the target verb to its opposite-number form. Applied to the
/// violation it produced, returns the base again.
pub fn make_violation(base: &Trial, role: TargetRole) -> Result<Trial> {
    let unsupported = || Error::UnsupportedTarget {
        task: base.task.to_string(),
        target: role.to_string(),
    };
    if base.task.is_gender() || role == TargetRole::Adjective {
        return Err(unsupported());
    }
    match base.grammaticality {
        Grammaticality::Acceptable => {}
        Grammaticality::NumberViolation(r) if r == role => return reconstruct_base(base),
        g => {
            return Err(Error::arg(format!(
                "number violations are built from acceptable trials, got {g}"
            )))
        }
    }
    let target = base.target(role).ok_or_else(unsupported)?;
    let mut out = base.clone();
    out.tokens[target.position] = target.wrong.clone();
    out.grammaticality = Grammaticality::NumberViolation(role);
    out.base_id = Some(base.id.clone());
    out.id = format!("{}~viol-{role}", base.id);
    out.edits = vec![TokenEdit {
        position: target.position,
        from: target.correct.clone(),
        to: target.wrong.clone(),
    }];
    Ok(out)
}

/// Undoes the recorded edits.
pub fn reconstruct_base(trial: &Trial) -> Result<Trial> {
    let base_id = trial
        .base_id
        .clone()
        .ok_or_else(|| Error::Integrity(format!("trial {} has no base", trial.id)))?;
    let mut out = trial.clone();
    for e in trial.edits.iter().rev() {
        let tok = out
            .tokens
            .get_mut(e.position)
            .ok_or_else(|| Error::Integrity(format!("edit position {} out of range", e.position)))?;
        if *tok != e.to {
            return Err(Error::Integrity(format!(
                "trial {} token {} is {:?}, edit says {:?}",
                trial.id, e.position, tok, e.to
            )));
        }
        *tok = e.from.clone();
    }
    out.id = base_id;
    out.base_id = None;
    out.grammaticality = Grammaticality::Acceptable;
    out.edits.clear();
    Ok(out)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Filler with the verb edit on the embedded verb when there is one.
pub fn make_filler(base: &Trial, kind: FillerKind, lex: &Lexicon) -> Result<Trial> {
    let role = if base.target(TargetRole::Embedded).is_some() {
        TargetRole::Embedded
    } else {
        TargetRole::Main
    };
    make_filler_at(base, kind, role, lex)
}

/// Filler built from an acceptable base. `role` picks the verb edited by the
/// syntactic subtypes; the semantic subtypes replace the main subject and the
/// felicitous ones the object.
pub fn make_filler_at(base: &Trial, kind: FillerKind, role: TargetRole, lex: &Lexicon) -> Result<Trial> {
    if base.task.is_gender() {
        return Err(Error::UnsupportedTarget {
            task: base.task.to_string(),
            target: kind.to_string(),
        });
    }
    if !base.grammaticality.is_acceptable() {
        return Err(Error::arg("fillers are built from acceptable trials"));
    }
    let mut rng = seeded_rng(derive_seed(base.seed, fnv1a(&format!("{}/{kind}/{role}", base.id))));
    let mut edits = Vec::new();
    if kind.is_syntactic() {
        let (index, target) = base
            .targets
            .iter()
            .enumerate()
            .find(|(_, t)| t.role == role)
            .ok_or_else(|| Error::UnsupportedTarget {
                task: base.task.to_string(),
                target: role.to_string(),
            })?;
        let lemma = &base.lexemes.verbs[index];
        let verb = lookup(lex.verb(lemma), "verb", lemma)?;
        let replacement = match kind {
            FillerKind::WrongPerson => verb.first_singular.clone(),
            FillerKind::Infinitive => verb.infinitive.clone(),
            _ => {
                let verb_forms = lex.verb_forms();
                let candidates: Vec<&str> = lex
                    .nouns
                    .iter()
                    .flat_map(|n| [n.singular.as_str(), n.plural.as_str()])
                    .filter(|f| !verb_forms.contains(*f) && !base.tokens.iter().any(|t| t == f))
                    .collect();
                candidates
                    .choose(&mut rng)
                    .ok_or_else(|| Error::Generation("no noun form free of verb readings".into()))?
                    .to_string()
            }
        };
        if replacement == target.correct || replacement == target.wrong {
            return Err(Error::Generation(format!(
                "{kind} replacement {replacement:?} coincides with a third-person form"
            )));
        }
        edits.push(TokenEdit {
            position: target.position,
            from: base.tokens[target.position].clone(),
            to: replacement,
        });
    } else {
        let pool = match kind {
            FillerKind::SemanticAbstract | FillerKind::FelicitousAbstract => &lex.abstract_nouns,
            _ => &lex.inanimate_nouns,
        };
        let (article_pos, number) = if kind.is_felicitous() {
            let obj = base.lexemes.object.as_ref().ok_or_else(|| {
                Error::Generation(format!("{kind} needs an object NP, trial {} has none", base.id))
            })?;
            (base.tokens.len() - 2, obj.number)
        } else {
            (0, slot_number(&base.condition, 0))
        };
        let noun = pool
            .choose(&mut rng)
            .ok_or_else(|| Error::Generation(format!("lexicon has no nouns for {kind}")))?;
        let form = noun.form(number);
        let article = definite_article(noun.gender, number, form);
        for (pos, new) in [(article_pos, article), (article_pos + 1, form)] {
            if base.tokens[pos] != new {
                edits.push(TokenEdit {
                    position: pos,
                    from: base.tokens[pos].clone(),
                    to: new.to_string(),
                });
            }
        }
    }
    let mut out = base.clone();
    for e in &edits {
        out.tokens[e.position] = e.to.clone();
    }
    out.grammaticality = Grammaticality::Filler(kind);
    out.base_id = Some(base.id.clone());
    out.id = if kind.is_syntactic() {
        format!("{}~{kind}-{role}", base.id)
    } else {
        format!("{}~{kind}", base.id)
    };
    out.edits = edits;
    Ok(out)
}
