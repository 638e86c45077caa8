// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, HashSet};

mod common;

use aglb::stimuli::lexicon::Analysis;
use common::{assignment, check_agreement, render};
use aglb::stimuli::{
    assemble_sessions, build_lexicon, build_trial, conditions_for, expand, generate_task, make_filler,
    make_filler_at, make_violation, reconstruct_base, synth_corpus, trials_from_jsonl, trials_to_jsonl,
    Condition, CorpusTemplate, ExpandOptions, FillerKind, Gender, Grammaticality, LexemeAssignment,
    Number, ObjectNp, TargetRole, Task,
};

#[test]
fn table_examples() {
    assert_eq!(
        render(Task::ShortNested, "SS", &["figlio", "ragazzo"], &["osservare", "evitare"], None, None),
        "il figlio che il ragazzo osserva evita"
    );
    // The attractor "padri" is plural, so the systematic label is SSP.
    assert_eq!(
        render(Task::LongNested, "SSP", &["figlio", "ragazza", "padre"], &["amare", "evitare"], Some("accanto a"), None),
        "il figlio che la ragazza accanto ai padri ama evita"
    );
    assert_eq!(
        render(Task::ShortSuccessive, "SS", &["figlio", "ragazzo"], &["dire", "amare"], None, None),
        "il figlio dice che il ragazzo ama"
    );
    assert_eq!(
        render(Task::LongSuccessive, "SSS", &["figlio", "amico", "ragazzo"], &["dire", "conoscere"], Some("accanto a"), None),
        "il figlio dice che l' amico accanto al ragazzo conosce"
    );
    assert_eq!(
        render(Task::NounppNumber, "SS", &["ragazzo", "donna"], &["conoscere"], Some("accanto a"), None),
        "il ragazzo accanto alla donna conosce"
    );
    assert_eq!(
        render(Task::NounppGender, "MF", &["ragazzo", "donna"], &[], Some("accanto a"), Some("basso")),
        "il ragazzo accanto alla donna è basso"
    );
}

fn human_base() -> aglb::stimuli::Trial {
    let lex = build_lexicon();
    let mut lx = assignment(&lex, &["fratello", "studente"], &["accogliere", "amare"], None, None);
    lx.object = Some(ObjectNp {
        lemma: "contadino".into(),
        number: Number::Plural,
    });
    build_trial(Task::ShortNested, &Condition::parse("SS").unwrap(), &lex, &lx, "h".into(), 0).unwrap()
}

#[test]
fn human_violation_and_fillers() {
    let lex = build_lexicon();
    let base = human_base();
    assert_eq!(base.sentence(), "il fratello che lo studente accoglie ama i contadini");
    let v = make_violation(&base, TargetRole::Embedded).unwrap();
    assert_eq!(v.sentence(), "il fratello che lo studente accolgono ama i contadini");
    assert_eq!(v.base_id.as_deref(), Some("h"));

    let wp = make_filler(&base, FillerKind::WrongPerson, &lex).unwrap();
    assert_eq!(wp.tokens[5], "accolgo");
    let inf = make_filler(&base, FillerKind::Infinitive, &lex).unwrap();
    assert_eq!(inf.tokens[5], "accogliere");
    let nv = make_filler(&base, FillerKind::NounForVerb, &lex).unwrap();
    let analyzer = lex.analyzer();
    assert!(analyzer.noun(&nv.tokens[5]).is_some());
    assert!(analyzer.verb_number(&nv.tokens[5]).is_none());

    for kind in FillerKind::ALL {
        let f = make_filler_at(&base, kind, TargetRole::Main, &lex).unwrap();
        assert_eq!(f.grammaticality, Grammaticality::Filler(kind));
        assert_eq!(reconstruct_base(&f).unwrap(), base, "{kind}");
        assert_eq!(f.tokens.len(), base.tokens.len());
    }
    let sem = make_filler(&base, FillerKind::SemanticAbstract, &lex).unwrap();
    let noun = analyzer.analyze(&sem.tokens[1]);
    assert!(noun.iter().any(|a| matches!(a, Analysis::Noun { class: aglb::stimuli::lexicon::NounClass::Abstract, number: Number::Singular, .. })));
    let fel = make_filler(&base, FillerKind::FelicitousInanimate, &lex).unwrap();
    assert_eq!(&fel.tokens[..6], &base.tokens[..6]);
    assert!(check_agreement(&analyzer, &fel.tokens).is_ok());
}

#[test]
fn semantic_abstract_on_matrix_subject() {
    let lex = build_lexicon();
    let mut lx = assignment(&lex, &["padre", "figlia"], &["dire", "amare"], None, None);
    lx.object = Some(ObjectNp {
        lemma: "madre".into(),
        number: Number::Singular,
    });
    let base = build_trial(Task::ShortSuccessive, &Condition::parse("SS").unwrap(), &lex, &lx, "b".into(), 0).unwrap();
    assert_eq!(base.sentence(), "il padre dice che la figlia ama la madre");
    let f = (0..64)
        .map(|s| {
            let mut b = base.clone();
            b.seed = s;
            make_filler(&b, FillerKind::SemanticAbstract, &lex).unwrap()
        })
        .find(|f| f.tokens[1] == "filosofia")
        .expect("filosofia is drawn for some seed");
    assert_eq!(f.sentence(), "la filosofia dice che la figlia ama la madre");
}

/// Independent agreement checker: a subject stack driven by surface
/// readings only. A noun after an article opens a subject unless a finite
/// verb immediately precedes (object); nouns after a contracted preposition
/// are attractors. Every finite verb closes the most recent open subject and
/// must match its number; an adjective agrees with the subject its copula
/// closed. Articles must agree with the following noun.
#[test]
fn checker_catches_violations() {
    let lex = build_lexicon();
    let a = lex.analyzer();
    let base = human_base();
    assert_eq!(check_agreement(&a, &base.tokens), Ok(2));
    for role in [TargetRole::Main, TargetRole::Embedded] {
        assert!(check_agreement(&a, &make_violation(&base, role).unwrap().tokens).is_err());
    }
    let bad: Vec<String> = "il ragazzo accanto alla donna è bassa".split(' ').map(String::from).collect();
    assert!(check_agreement(&a, &bad).is_err());
}

#[test]
fn every_generated_trial_agrees_and_reads_back() {
    let lex = build_lexicon();
    let analyzer = lex.analyzer();
    for task in Task::ALL {
        for (ci, cond) in conditions_for(task).iter().enumerate() {
            for t in expand(task, cond, &lex, 64, 100 + ci as u64).unwrap() {
                check_agreement(&analyzer, &t.tokens).unwrap_or_else(|e| panic!("{}: {e}", t.sentence()));
                for target in &t.targets {
                    assert_eq!(t.tokens[target.position], target.correct);
                    assert_ne!(target.correct, target.wrong);
                }
                // Feature readback: noun slots in order of appearance.
                let nouns: Vec<(Gender, Number)> = t.tokens.iter().filter_map(|w| analyzer.noun(w)).collect();
                assert_eq!(nouns.len(), task.noun_slots());
                let lemmas: HashSet<&String> = t.lexemes.nouns.iter().collect();
                assert_eq!(lemmas.len(), task.noun_slots());
                let label: String = nouns
                    .iter()
                    .map(|(g, n)| if task.is_gender() { g.to_string() } else { n.to_string() })
                    .collect();
                assert_eq!(label, cond.label(), "{}", t.sentence());
            }
        }
    }
}

#[test]
fn seeds_change_lexemes_not_structure() {
    let lex = build_lexicon();
    let c = Condition::parse("PSP").unwrap();
    let a = expand(Task::LongSuccessive, &c, &lex, 50, 1).unwrap();
    let b = expand(Task::LongSuccessive, &c, &lex, 50, 2).unwrap();
    assert_eq!(a, expand(Task::LongSuccessive, &c, &lex, 50, 1).unwrap());
    assert_ne!(a.iter().map(|t| &t.lexemes).collect::<Vec<_>>(), b.iter().map(|t| &t.lexemes).collect::<Vec<_>>());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.tokens.len(), y.tokens.len());
        assert_eq!(x.targets.iter().map(|t| (t.role, t.position)).collect::<Vec<_>>(), y.targets.iter().map(|t| (t.role, t.position)).collect::<Vec<_>>());
    }
}

#[test]
fn sampling_without_repetition_when_space_allows() {
    let lex = build_lexicon();
    let trials = generate_task(Task::NounppNumber, &lex, 4096, 7, ExpandOptions::default()).unwrap();
    assert_eq!(trials.len(), 4096);
    let mut per_cond: BTreeMap<String, HashSet<LexemeAssignment>> = BTreeMap::new();
    for t in &trials {
        assert!(per_cond.entry(t.condition.label()).or_default().insert(t.lexemes.clone()));
    }
    assert!(per_cond.values().all(|s| s.len() == 1024));
    let ids: HashSet<&str> = trials.iter().map(|t| t.id.as_str()).collect();
    assert_eq!(ids.len(), trials.len());
}

#[test]
fn jsonl_round_trip_identity() {
    let lex = build_lexicon();
    let mut trials = generate_task(Task::LongNested, &lex, 16, 3, ExpandOptions::default()).unwrap();
    trials.push(make_violation(&trials[0], TargetRole::Main).unwrap());
    trials.push(make_filler(&human_base(), FillerKind::SemanticInanimate, &lex).unwrap());
    let text = trials_to_jsonl(&trials);
    let back = trials_from_jsonl(&format!("# manifest=abc\n{text}")).unwrap();
    assert_eq!(back, trials);
    assert_eq!(trials_to_jsonl(&back), text);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["id", "task", "condition", "tokens", "targets", "grammaticality", "base_id", "seed"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert_eq!(first["condition"], "SSS");
    assert_eq!(first["task"], "long_nested");
}

#[test]
fn session_plan_matches_design() {
    let lex = build_lexicon();
    let plan = assemble_sessions(&lex, 11).unwrap();
    assert_eq!(plan, assemble_sessions(&lex, 11).unwrap());
    assert_eq!(plan.sessions.len(), 2);
    let main = plan.main_trials();
    assert_eq!(main.len(), 540);
    for s in &plan.sessions {
        assert_eq!(s.main.len(), 270);
        assert_eq!(s.training.len(), 40);
    }
    let mut classes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut roles: BTreeMap<(Task, TargetRole), usize> = BTreeMap::new();
    let mut fillers: BTreeMap<FillerKind, usize> = BTreeMap::new();
    for t in &main {
        *classes.entry(t.grammaticality.class()).or_default() += 1;
        match t.grammaticality {
            Grammaticality::NumberViolation(r) => *roles.entry((t.task, r)).or_default() += 1,
            Grammaticality::Filler(k) => *fillers.entry(k).or_default() += 1,
            Grammaticality::Acceptable => {}
        }
        assert!(t.lexemes.object.is_some());
    }
    assert_eq!(classes["acceptable"], 180);
    assert_eq!(classes["number-violation"], 180);
    assert_eq!(classes["filler"], 180);
    let main_total: usize = roles.iter().filter(|((_, r), _)| *r == TargetRole::Main).map(|(_, n)| n).sum();
    assert_eq!(main_total, 90);
    assert!(roles.values().all(|&n| n == 22 || n == 23));
    let felicitous: usize = fillers.iter().filter(|(k, _)| k.is_felicitous()).map(|(_, n)| n).sum();
    let semantic: usize = fillers.iter().filter(|(k, _)| !k.is_syntactic()).map(|(_, n)| n).sum();
    assert_eq!(2 * felicitous, semantic);

    // Practice block: disjoint content words.
    let main_forms = lex.content_forms();
    for s in &plan.sessions {
        for id in &s.training {
            let t = plan.trial(id).unwrap();
            for w in &t.tokens {
                assert!(!main_forms.contains(w), "{w} in practice trial {id}");
            }
        }
    }
    // Violations and fillers carry reconstructible bases.
    let analyzer = lex.analyzer();
    for t in &main {
        if !t.grammaticality.is_acceptable() {
            let b = reconstruct_base(t).unwrap();
            check_agreement(&analyzer, &b.tokens).unwrap();
        } else {
            check_agreement(&analyzer, &t.tokens).unwrap();
        }
    }
}

#[test]
fn corpus_is_grammatical_and_stratified() {
    let lex = build_lexicon();
    let analyzer = lex.analyzer();
    let stream = synth_corpus(&lex, &CorpusTemplate::all(), 10_000, 5).unwrap();
    let mut violations = 0;
    let mut with_che = 0;
    let mut sentences = 0;
    for s in stream.split(|w| w == "<eos>").filter(|s| !s.is_empty()) {
        sentences += 1;
        if check_agreement(&analyzer, s).is_err() {
            violations += 1;
        }
        with_che += usize::from(s.iter().any(|w| w == "che"));
    }
    assert_eq!(sentences, 10_000);
    assert_eq!(violations, 0);
    // Four of nine templates contain a complementizer.
    assert!((4400..4500).contains(&with_che), "{with_che}");
}
