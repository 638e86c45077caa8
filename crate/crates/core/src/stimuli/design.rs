// SPDX-License-Identifier: MIT OR Apache-2.0

//! Agreement tasks, their slot templates and the factorial conditions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lexicon::{Gender, Number};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    NounppNumber,
    NounppGender,
    ShortSuccessive,
    LongSuccessive,
    ShortNested,
    LongNested,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::NounppNumber,
        Task::NounppGender,
        Task::ShortSuccessive,
        Task::LongSuccessive,
        Task::ShortNested,
        Task::LongNested,
    ];

    /// The four two-dependency constructions.
    pub const NESTING: [Task; 4] = [
        Task::ShortSuccessive,
        Task::LongSuccessive,
        Task::ShortNested,
        Task::LongNested,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Task::NounppNumber => "nounpp_number",
            Task::NounppGender => "nounpp_gender",
            Task::ShortSuccessive => "short_successive",
            Task::LongSuccessive => "long_successive",
            Task::ShortNested => "short_nested",
            Task::LongNested => "long_nested",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Task::NounppNumber => "NounPP-number",
            Task::NounppGender => "NounPP-gender",
            Task::ShortSuccessive => "Short-Successive",
            Task::LongSuccessive => "Long-Successive",
            Task::ShortNested => "Short-Nested",
            Task::LongNested => "Long-Nested",
        }
    }

    pub fn index(self) -> usize {
        Task::ALL.iter().position(|&t| t == self).expect("listed")
    }

    /// Number of noun slots (and so condition letters).
    pub fn noun_slots(self) -> usize {
        match self {
            Task::LongSuccessive | Task::LongNested => 3,
            _ => 2,
        }
    }

    pub fn is_gender(self) -> bool {
        self == Task::NounppGender
    }

    pub fn is_nested(self) -> bool {
        matches!(self, Task::ShortNested | Task::LongNested)
    }

    /// True when the embedded dependency spans a prepositional phrase.
    pub fn long_embedded(self) -> bool {
        matches!(self, Task::LongSuccessive | Task::LongNested)
    }

    pub fn template(self) -> Vec<Slot> {
        use Slot::*;
        use TargetRole::{Embedded, Main};
        match self {
            Task::NounppNumber => vec![Np(0), Pp(1), Verb(0, Main)],
            Task::NounppGender => vec![Np(0), Pp(1), Copula(0), Adjective(0)],
            Task::ShortSuccessive => vec![Np(0), MatrixVerb(0, Main), Che, Np(1), Verb(1, Embedded)],
            Task::LongSuccessive => vec![
                Np(0),
                MatrixVerb(0, Main),
                Che,
                Np(1),
                Pp(2),
                Verb(1, Embedded),
            ],
            Task::ShortNested => vec![Np(0), Che, Np(1), Verb(1, Embedded), Verb(0, Main)],
            Task::LongNested => vec![Np(0), Che, Np(1), Pp(2), Verb(1, Embedded), Verb(0, Main)],
        }
    }

    /// Roles evaluated for this task, in template order.
    pub fn target_roles(self) -> Vec<TargetRole> {
        self.template().iter().filter_map(Slot::target).collect()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', ' '], "_");
        Task::ALL
            .into_iter()
            .find(|t| t.code() == norm || t.display_name().to_ascii_lowercase().replace('-', "_") == norm)
            .ok_or_else(|| Error::arg(format!("unknown task {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRole {
    Main,
    Embedded,
    Adjective,
}

impl TargetRole {
    pub fn code(self) -> &'static str {
        match self {
            TargetRole::Main => "main",
            TargetRole::Embedded => "embedded",
            TargetRole::Adjective => "adjective",
        }
    }
}

impl fmt::Display for TargetRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TargetRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(TargetRole::Main),
            "embedded" => Ok(TargetRole::Embedded),
            "adjective" => Ok(TargetRole::Adjective),
            _ => Err(Error::arg(format!("unknown target role {s:?}"))),
        }
    }
}

/// Template element. Indices name noun slots (`a = 0`, `b = 1`, `c = 2`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// Determiner + noun.
    Np(usize),
    /// Preposition + fused article + noun.
    Pp(usize),
    /// Transitive verb agreeing with the given noun slot.
    Verb(usize, TargetRole),
    /// Clause-embedding verb agreeing with the given noun slot.
    MatrixVerb(usize, TargetRole),
    /// Copula agreeing in number with the given noun slot.
    Copula(usize),
    /// Predicative adjective agreeing in gender with the given noun slot.
    Adjective(usize),
    Che,
}

impl Slot {
    /// The noun slot controlling this slot's agreement.
    pub fn controller(&self) -> Option<usize> {
        match *self {
            Slot::Verb(c, _) | Slot::MatrixVerb(c, _) | Slot::Copula(c) | Slot::Adjective(c) => {
                Some(c)
            }
            _ => None,
        }
    }

    pub fn target(&self) -> Option<TargetRole> {
        match *self {
            Slot::Verb(_, r) | Slot::MatrixVerb(_, r) => Some(r),
            Slot::Adjective(_) => Some(TargetRole::Adjective),
            _ => None,
        }
    }
}

/// One value of the manipulated feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    Number(Number),
    Gender(Gender),
}

impl Feature {
    pub fn letter(self) -> char {
        match self {
            Feature::Number(Number::Singular) => 'S',
            Feature::Number(Number::Plural) => 'P',
            Feature::Gender(Gender::Masculine) => 'M',
            Feature::Gender(Gender::Feminine) => 'F',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Some(match c {
            'S' => Feature::Number(Number::Singular),
            'P' => Feature::Number(Number::Plural),
            'M' => Feature::Gender(Gender::Masculine),
            'F' => Feature::Gender(Gender::Feminine),
            _ => return None,
        })
    }
}

/// Feature assignment to the noun slots of a task.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Condition {
    pub features: Vec<Feature>,
}

impl Condition {
    pub fn label(&self) -> String {
        self.features.iter().map(|f| f.letter()).collect()
    }

    pub fn parse(label: &str) -> Result<Self> {
        let features = label
            .chars()
            .map(|c| Feature::from_letter(c).ok_or_else(|| Error::arg(format!("bad condition {label:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if features.is_empty() {
            return Err(Error::arg("empty condition label"));
        }
        Ok(Self { features })
    }

    /// First two slots share their feature value (main/embedded subjects,
    /// or subject/attractor for the single-dependency tasks).
    pub fn subjects_congruent(&self) -> bool {
        self.features[0] == self.features[1]
    }

    /// The attractor: slot `b` for the single-dependency tasks, slot `c` for
    /// three-noun tasks, none for the short two-dependency tasks.
    pub fn attractor_index(&self, task: Task) -> Option<usize> {
        match task {
            Task::NounppNumber | Task::NounppGender => Some(1),
            Task::LongSuccessive | Task::LongNested => Some(2),
            Task::ShortSuccessive | Task::ShortNested => None,
        }
    }

    pub fn attractor_feature(&self, task: Task) -> Option<Feature> {
        self.attractor_index(task).map(|i| self.features[i])
    }

    /// Attractor matches the subject it intervenes on.
    pub fn attractor_congruent(&self, task: Task) -> Option<bool> {
        let a = self.attractor_index(task)?;
        Some(self.features[a] == self.features[a - 1])
    }

    pub fn number(&self, slot: usize) -> Option<Number> {
        match self.features.get(slot)? {
            Feature::Number(n) => Some(*n),
            Feature::Gender(_) => None,
        }
    }

    pub fn gender(&self, slot: usize) -> Option<Gender> {
        match self.features.get(slot)? {
            Feature::Gender(g) => Some(*g),
            Feature::Number(_) => None,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Conditions of a task in canonical order (SS, SP, PS, PP; SSS … PPP; MM …).
pub fn conditions_for(task: Task) -> Vec<Condition> {
    let values: [Feature; 2] = if task.is_gender() {
        [
            Feature::Gender(Gender::Masculine),
            Feature::Gender(Gender::Feminine),
        ]
    } else {
        [
            Feature::Number(Number::Singular),
            Feature::Number(Number::Plural),
        ]
    };
    let k = task.noun_slots();
    (0..1usize << k)
        .map(|bits| Condition {
            features: (0..k)
                .map(|slot| values[(bits >> (k - 1 - slot)) & 1])
                .collect(),
        })
        .collect()
}

/// Parses a task name, producing an argument error for unknown names.
pub fn conditions_for_name(task: &str) -> Result<Vec<Condition>> {
    Ok(conditions_for(task.parse()?))
}
