// SPDX-License-Identifier: MIT OR Apache-2.0

//! Session plan for the timed violation-detection experiment.
//!
//! Two sessions, each a 40-trial practice block from a disjoint lexicon and
//! 270 main trials: 90 acceptable, 90 number violations, 90 fillers. All main
//! sentences use the four two-dependency constructions with a direct object
//! appended.
//!
//! | per session        | SS | LS | SN | LN |
//! |--------------------|----|----|----|----|
//! | acceptable, s1     | 23 | 23 | 22 | 22 |
//! | acceptable, s2     | 22 | 22 | 23 | 23 |
//!
//! Violations: 11 per construction × violated verb, plus one extra in
//! (SS, main) and (LS, embedded) in session 1 and in (SN, main) and
//! (LN, embedded) in session 2, so each verb role gets 90 over both sessions.
//! Fillers: 14 of each syntactic subtype and 12 of each semantic subtype;
//! felicitous trials are half of the semantic ones.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::design::{conditions_for, Condition, TargetRole, Task};
use super::generate::{
    expand_with, make_filler_at, make_violation, ExpandOptions, FillerKind, Grammaticality,
    LexemeAssignment, Sampling, Trial,
};
use super::lexicon::{build_training_lexicon, Lexicon};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, seeded_rng};

pub const SESSIONS: usize = 2;
pub const MAIN_TRIALS: usize = 270;
pub const TRAINING_TRIALS: usize = 40;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DesignRow {
    /// 1-based session number.
    pub session: usize,
    /// `training` or `main`.
    pub block: String,
    pub grammaticality: Grammaticality,
    pub construction: Task,
    pub condition: Condition,
    /// Edited verb for violations and syntactic fillers.
    pub role: Option<TargetRole>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub index: usize,
    pub training: Vec<String>,
    pub main: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub seed: u64,
    pub sessions: Vec<Session>,
    pub trials: Vec<Trial>,
    /// Declared cell counts; [`SessionPlan::verify`] recomputes them.
    pub design: Vec<DesignRow>,
}

#[derive(Clone, Debug)]
struct Spec {
    session: usize,
    block: &'static str,
    grammaticality: Grammaticality,
    construction: Task,
    condition: Condition,
    role: Option<TargetRole>,
}

impl Spec {
    fn key(&self) -> (usize, String, Grammaticality, Task, Condition, Option<TargetRole>) {
        (
            self.session,
            self.block.to_string(),
            self.grammaticality,
            self.construction,
            self.condition.clone(),
            self.role,
        )
    }
}

/// Cycles conditions separately for every (block, class, construction).
#[derive(Default)]
struct ConditionCycle {
    next: HashMap<(&'static str, &'static str, Task), usize>,
}

impl ConditionCycle {
    fn take(&mut self, block: &'static str, g: Grammaticality, task: Task) -> Condition {
        let conds = conditions_for(task);
        let i = self.next.entry((block, g.class(), task)).or_default();
        let c = conds[*i % conds.len()].clone();
        *i += 1;
        c
    }
}

fn main_specs(session: usize, cycle: &mut ConditionCycle) -> Vec<Spec> {
    let mut out = Vec::new();
    let mut push = |g: Grammaticality, task: Task, role: Option<TargetRole>, cycle: &mut ConditionCycle| {
        out.push(Spec {
            session: session + 1,
            block: "main",
            grammaticality: g,
            construction: task,
            condition: cycle.take("main", g, task),
            role,
        })
    };
    let acceptable = if session == 0 { [23, 23, 22, 22] } else { [22, 22, 23, 23] };
    for (task, n) in Task::NESTING.into_iter().zip(acceptable) {
        for _ in 0..n {
            push(Grammaticality::Acceptable, task, None, cycle);
        }
    }
    let extras: [(Task, TargetRole); 2] = if session == 0 {
        [
            (Task::ShortSuccessive, TargetRole::Main),
            (Task::LongSuccessive, TargetRole::Embedded),
        ]
    } else {
        [
            (Task::ShortNested, TargetRole::Main),
            (Task::LongNested, TargetRole::Embedded),
        ]
    };
    for task in Task::NESTING {
        for role in [TargetRole::Main, TargetRole::Embedded] {
            let n = 11 + usize::from(extras.contains(&(task, role)));
            for _ in 0..n {
                push(Grammaticality::NumberViolation(role), task, Some(role), cycle);
            }
        }
    }
    let mut j = 0usize;
    for kind in FillerKind::ALL {
        let n = if kind.is_syntactic() { 14 } else { 12 };
        for _ in 0..n {
            let task = Task::NESTING[j % 4];
            let role = kind.is_syntactic().then(|| {
                if (j / 4) % 2 == 0 {
                    TargetRole::Embedded
                } else {
                    TargetRole::Main
                }
            });
            push(Grammaticality::Filler(kind), task, role, cycle);
            j += 1;
        }
    }
    out
}

fn training_specs(session: usize, cycle: &mut ConditionCycle) -> Vec<Spec> {
    let mut out = Vec::new();
    let spec = |g: Grammaticality, task: Task, role: Option<TargetRole>, cycle: &mut ConditionCycle| Spec {
        session: session + 1,
        block: "training",
        grammaticality: g,
        construction: task,
        condition: cycle.take("training", g, task),
        role,
    };
    for i in 0..13 {
        out.push(spec(Grammaticality::Acceptable, Task::NESTING[i % 4], None, cycle));
    }
    for i in 0..13 {
        let role = if i % 2 == 0 { TargetRole::Main } else { TargetRole::Embedded };
        out.push(spec(
            Grammaticality::NumberViolation(role),
            Task::NESTING[(i + 1) % 4],
            Some(role),
            cycle,
        ));
    }
    for (i, kind) in FillerKind::ALL.into_iter().flat_map(|k| [k, k]).enumerate() {
        let role = kind.is_syntactic().then_some(if i % 2 == 0 {
            TargetRole::Embedded
        } else {
            TargetRole::Main
        });
        out.push(spec(Grammaticality::Filler(kind), Task::NESTING[(i + 2) % 4], role, cycle));
    }
    out
}

fn aggregate(specs: impl IntoIterator<Item = (usize, String, Grammaticality, Task, Condition, Option<TargetRole>)>) -> Vec<DesignRow> {
    let mut counts: BTreeMap<_, usize> = BTreeMap::new();
    for k in specs {
        *counts.entry(k).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|((session, block, grammaticality, construction, condition, role), count)| DesignRow {
            session,
            block,
            grammaticality,
            construction,
            condition,
            role,
            count,
        })
        .collect()
}

struct Builder<'a> {
    seed: u64,
    counter: u64,
    used: HashSet<LexemeAssignment>,
    main: &'a Lexicon,
    training: Lexicon,
}

impl Builder<'_> {
    fn base(&mut self, spec: &Spec) -> Result<Trial> {
        let lex = if spec.block == "training" { &self.training } else { self.main };
        let opts = ExpandOptions {
            sampling: Sampling::Uniform,
            with_object: true,
        };
        loop {
            self.counter += 1;
            let s = derive_seed(self.seed, self.counter);
            let mut t = expand_with(spec.construction, &spec.condition, lex, 1, s, opts)?
                .pop()
                .expect("one trial");
            if self.used.insert(t.lexemes.clone()) {
                t.id = format!("s{}-{}-{:03}", spec.session, spec.block, self.counter);
                return Ok(t);
            }
        }
    }

    fn trial(&mut self, spec: &Spec) -> Result<Trial> {
        let base = self.base(spec)?;
        let lex = if spec.block == "training" { &self.training } else { self.main };
        match spec.grammaticality {
            Grammaticality::Acceptable => Ok(base),
            Grammaticality::NumberViolation(role) => make_violation(&base, role),
            Grammaticality::Filler(kind) => {
                make_filler_at(&base, kind, spec.role.unwrap_or(TargetRole::Main), lex)
            }
        }
    }
}

fn clash(a: &Trial, b: &Trial) -> bool {
    a.lexemes == b.lexemes
}

/// Moves trials so that no two neighbours share every lexeme.
fn repair_adjacency(order: &mut [&Trial]) -> Result<()> {
    let n = order.len();
    for i in 1..n {
        if !clash(order[i - 1], order[i]) {
            continue;
        }
        let ok = |order: &[&Trial], j: usize, t: &Trial| {
            (j == 0 || j == i || !clash(order[j - 1], t)) && (j + 1 >= n || j + 1 == i || !clash(order[j + 1], t))
        };
        let candidate = (0..n).find(|&j| {
            j != i
                && j != i - 1
                && !clash(order[i - 1], order[j])
                && (i + 1 >= n || !clash(order[j], order[i + 1]))
                && ok(order, j, order[i])
        });
        match candidate {
            Some(j) => order.swap(i, j),
            None => return Err(Error::Generation("cannot separate lexically identical trials".into())),
        }
    }
    Ok(())
}

/// Builds both sessions. Deterministic in `seed`.
pub fn assemble_sessions(lexicon: &Lexicon, seed: u64) -> Result<SessionPlan> {
    let mut builder = Builder {
        seed,
        counter: 0,
        used: HashSet::new(),
        main: lexicon,
        training: build_training_lexicon(),
    };
    let mut cycle = ConditionCycle::default();
    let mut specs = Vec::new();
    let mut blocks = Vec::new();
    for s in 0..SESSIONS {
        let training = training_specs(s, &mut cycle);
        let main = main_specs(s, &mut cycle);
        blocks.push((training.len(), main.len()));
        specs.extend(training);
        specs.extend(main);
    }
    let design = aggregate(specs.iter().map(Spec::key));

    let mut trials = Vec::with_capacity(specs.len());
    for spec in &specs {
        trials.push(builder.trial(spec)?);
    }

    let mut sessions = Vec::new();
    let mut rng = seeded_rng(derive_seed(seed, 0x5E55));
    let mut offset = 0;
    for (s, (nt, nm)) in blocks.into_iter().enumerate() {
        let mut ids = Vec::new();
        for len in [nt, nm] {
            let mut order: Vec<&Trial> = trials[offset..offset + len].iter().collect();
            order.shuffle(&mut rng);
            repair_adjacency(&mut order)?;
            ids.push(order.iter().map(|t| t.id.clone()).collect::<Vec<_>>());
            offset += len;
        }
        let main = ids.pop().expect("main block");
        let training = ids.pop().expect("training block");
        sessions.push(Session {
            index: s + 1,
            training,
            main,
        });
    }
    let plan = SessionPlan {
        seed,
        sessions,
        trials,
        design,
    };
    plan.verify()?;
    Ok(plan)
}

impl SessionPlan {
    pub fn trial(&self, id: &str) -> Option<&Trial> {
        self.trials.iter().find(|t| t.id == id)
    }

    /// Trials of the main blocks in presentation order.
    pub fn main_trials(&self) -> Vec<&Trial> {
        let index: HashMap<&str, &Trial> = self.trials.iter().map(|t| (t.id.as_str(), t)).collect();
        self.sessions
            .iter()
            .flat_map(|s| s.main.iter().filter_map(|id| index.get(id.as_str()).copied()))
            .collect()
    }

    /// Recomputes every cell count from the trials and compares it with the
    /// declared design.
    pub fn verify(&self) -> Result<()> {
        let index: HashMap<&str, &Trial> = self.trials.iter().map(|t| (t.id.as_str(), t)).collect();
        if index.len() != self.trials.len() {
            return Err(Error::Integrity("duplicate trial ids in plan".into()));
        }
        let mut keys = Vec::new();
        for s in &self.sessions {
            if s.main.len() != MAIN_TRIALS || s.training.len() != TRAINING_TRIALS {
                return Err(Error::Integrity(format!(
                    "session {} has {} main and {} training trials",
                    s.index,
                    s.main.len(),
                    s.training.len()
                )));
            }
            for (block, ids) in [("training", &s.training), ("main", &s.main)] {
                for (k, id) in ids.iter().enumerate() {
                    let t = index
                        .get(id.as_str())
                        .ok_or_else(|| Error::Integrity(format!("session {} lists unknown trial {id}", s.index)))?;
                    if k > 0 && clash(index[ids[k - 1].as_str()], t) {
                        return Err(Error::Integrity(format!("adjacent trials share all lexemes at {id}")));
                    }
                    let role = match t.grammaticality {
                        Grammaticality::NumberViolation(r) => Some(r),
                        Grammaticality::Filler(kind) if kind.is_syntactic() => t
                            .edits
                            .first()
                            .and_then(|e| t.targets.iter().find(|x| x.position == e.position))
                            .map(|x| x.role),
                        _ => None,
                    };
                    keys.push((s.index, block.to_string(), t.grammaticality, t.task, t.condition.clone(), role));
                }
            }
        }
        let observed = aggregate(keys);
        if observed != self.design {
            return Err(Error::Integrity("session plan does not match its design table".into()));
        }
        Ok(())
    }
}
