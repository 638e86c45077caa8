// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic training corpora built from the agreement templates.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::design::{conditions_for, Slot, TargetRole, Task};
use super::generate::{build_trial, realize_slots, sample_assignment};
use super::lexicon::{contracted_a, definite_article, Lexicon, Noun, Number};
use crate::error::{Error, Result};
use crate::lstm::{Vocab, BOUNDARY};
use crate::numerics::{derive_seed, seeded_rng, SeededRng};

/// With every template in [`CorpusTemplate::all`], this many sentences cover
/// the whole [`corpus_vocabulary`] (checked for several seeds in the tests).
pub const COVERAGE_FLOOR: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusTemplate {
    Task(Task),
    /// `NP V`
    Sv,
    /// `NP V NP`
    Svo,
    /// `NP essere ADJ`
    Copular,
}

impl CorpusTemplate {
    pub fn all() -> Vec<CorpusTemplate> {
        let mut v: Vec<_> = Task::ALL.into_iter().map(CorpusTemplate::Task).collect();
        v.extend([CorpusTemplate::Sv, CorpusTemplate::Svo, CorpusTemplate::Copular]);
        v
    }

    fn slots(self) -> Vec<Slot> {
        match self {
            CorpusTemplate::Task(t) => t.template(),
            CorpusTemplate::Sv => vec![Slot::Np(0), Slot::Verb(0, TargetRole::Main)],
            CorpusTemplate::Svo => vec![Slot::Np(0), Slot::Verb(0, TargetRole::Main), Slot::Np(1)],
            CorpusTemplate::Copular => vec![Slot::Np(0), Slot::Copula(0), Slot::Adjective(0)],
        }
    }

    fn numbers(self) -> &'static [Number] {
        match self {
            CorpusTemplate::Task(Task::NounppGender) => &[Number::Singular],
            _ => &[Number::Singular, Number::Plural],
        }
    }
}

fn random_number(rng: &mut SeededRng) -> Number {
    if rng.random::<bool>() {
        Number::Plural
    } else {
        Number::Singular
    }
}

fn sentence(lex: &Lexicon, template: CorpusTemplate, rng: &mut SeededRng) -> Result<Vec<String>> {
    if let CorpusTemplate::Task(task) = template {
        let conds = conditions_for(task);
        let cond = conds.choose(rng).expect("conditions");
        let lexemes = sample_assignment(task, cond, lex, false, rng);
        return Ok(build_trial(task, cond, lex, &lexemes, String::new(), 0)?.tokens);
    }
    let slots = template.slots();
    let k = slots.iter().filter(|s| matches!(s, Slot::Np(_))).count();
    let mut nouns: Vec<&Noun> = Vec::new();
    while nouns.len() < k {
        let n = lex.nouns.choose(rng).expect("nouns");
        if !nouns.iter().any(|m| m.lemma == n.lemma) {
            nouns.push(n);
        }
    }
    let numbers: Vec<Number> = (0..k).map(|_| random_number(rng)).collect();
    let verbs = match template {
        CorpusTemplate::Copular => vec![],
        _ => vec![lex.verbs.choose(rng).expect("verbs")],
    };
    let adjective = lex.adjectives.choose(rng);
    Ok(realize_slots(lex, &slots, &nouns, &numbers, &verbs, None, adjective).0)
}

/// `num_sentences` grammatical sentences, each followed by the boundary
/// token. Templates are stratified (sentence `i` uses `templates[i % T]`)
/// and the sentence order is then shuffled.
pub fn synth_corpus(
    lex: &Lexicon,
    templates: &[CorpusTemplate],
    num_sentences: usize,
    seed: u64,
) -> Result<Vec<String>> {
    if num_sentences == 0 {
        return Err(Error::arg("num_sentences must be at least 1"));
    }
    if templates.is_empty() {
        return Err(Error::arg("no corpus templates given"));
    }
    let mut rng = seeded_rng(seed);
    let mut sentences = Vec::with_capacity(num_sentences);
    for i in 0..num_sentences {
        sentences.push(sentence(lex, templates[i % templates.len()], &mut rng)?);
    }
    sentences.shuffle(&mut seeded_rng(derive_seed(seed, 1)));
    let mut stream = Vec::with_capacity(sentences.iter().map(|s| s.len() + 1).sum());
    for s in sentences {
        stream.extend(s);
        stream.push(BOUNDARY.to_string());
    }
    Ok(stream)
}

/// Every token [`synth_corpus`] can emit for these templates, plus the
/// boundary token (index 0); the rest sorted.
pub fn corpus_vocabulary(lex: &Lexicon, templates: &[CorpusTemplate]) -> Vocab {
    let mut forms = BTreeSet::new();
    for &t in templates {
        let numbers = t.numbers();
        for slot in t.slots() {
            match slot {
                Slot::Np(_) | Slot::Pp(_) => {
                    for n in &lex.nouns {
                        for &num in numbers {
                            let f = n.form(num);
                            forms.insert(f.to_string());
                            if matches!(slot, Slot::Np(_)) {
                                forms.insert(definite_article(n.gender, num, f).to_string());
                            } else {
                                forms.insert(contracted_a(n.gender, num, f).to_string());
                            }
                        }
                    }
                    if matches!(slot, Slot::Pp(_)) {
                        for p in &lex.prepositions {
                            forms.extend(p.head.iter().cloned());
                        }
                    }
                }
                Slot::Verb(..) | Slot::MatrixVerb(..) => {
                    let set = if matches!(slot, Slot::Verb(..)) {
                        &lex.verbs
                    } else {
                        &lex.matrix_verbs
                    };
                    for v in set {
                        for &num in numbers {
                            forms.insert(v.third(num).to_string());
                        }
                    }
                }
                Slot::Copula(_) => {
                    for &num in numbers {
                        forms.insert(lex.copula.third(num).to_string());
                    }
                }
                Slot::Adjective(_) => {
                    for a in &lex.adjectives {
                        for g in [super::lexicon::Gender::Masculine, super::lexicon::Gender::Feminine] {
                            for &num in numbers {
                                forms.insert(a.form(g, num).to_string());
                            }
                        }
                    }
                }
                Slot::Che => {
                    forms.insert("che".to_string());
                }
            }
        }
    }
    let mut tokens = vec![BOUNDARY.to_string()];
    tokens.extend(forms);
    Vocab::new(tokens).expect("distinct forms")
}
