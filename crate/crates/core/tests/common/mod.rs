// SPDX-License-Identifier: MIT OR Apache-2.0

//! Helpers shared by integration test targets.

use aglb::stimuli::lexicon::{Analysis, Analyzer};
use aglb::stimuli::{build_lexicon, build_trial, Condition, Gender, LexemeAssignment, Lexicon, Number, Task};

/// Independent agreement checker: walks the tokens with a subject stack and
/// returns the number of agreeing targets, or the first violation.
pub fn check_agreement(analyzer: &Analyzer, tokens: &[String]) -> Result<usize, String> {
    let mut stack: Vec<(Gender, Number)> = Vec::new();
    let mut last_closed: Option<(Gender, Number)> = None;
    let mut checked = 0;
    let mut prev_finite = false;
    for (i, tok) in tokens.iter().enumerate() {
        let readings = analyzer.analyze(tok);
        if readings.is_empty() {
            return Err(format!("unknown token {tok:?}"));
        }
        let art = readings.iter().find_map(|a| match a {
            Analysis::Article { gender, number } => Some((false, *gender, *number)),
            Analysis::Contracted { gender, number } => Some((true, *gender, *number)),
            _ => None,
        });
        if let Some((contracted, g, n)) = art {
            let next = tokens.get(i + 1).ok_or("sentence ends in an article")?;
            let (ng, nn) = analyzer.noun(next).ok_or(format!("article {tok:?} before non-noun"))?;
            if nn != n || g.is_some_and(|g| g != ng) {
                return Err(format!("article {tok:?} does not agree with {next:?}"));
            }
            if !contracted && !prev_finite {
                stack.push((ng, nn));
            }
            prev_finite = false;
            continue;
        }
        if let Some(n) = analyzer.verb_number(tok) {
            let (g, subj) = stack.pop().ok_or(format!("verb {tok:?} without subject"))?;
            if subj != n {
                return Err(format!("verb {tok:?} disagrees with its subject"));
            }
            last_closed = Some((g, subj));
            checked += 1;
            prev_finite = true;
            continue;
        }
        if let Some((g, n)) = analyzer.adjective(tok) {
            if last_closed != Some((g, n)) {
                return Err(format!("adjective {tok:?} disagrees with its subject"));
            }
            checked += 1;
        }
        if analyzer.noun(tok).is_none() {
            prev_finite = false;
        }
    }
    if !stack.is_empty() {
        return Err("subject without verb".into());
    }
    Ok(checked)
}

pub fn assignment(lex: &Lexicon, nouns: &[&str], verbs: &[&str], prep: Option<&str>, adj: Option<&str>) -> LexemeAssignment {
    LexemeAssignment {
        nouns: nouns.iter().map(|s| s.to_string()).collect(),
        genders: nouns.iter().map(|n| lex.noun(n).unwrap().gender).collect(),
        verbs: verbs.iter().map(|s| s.to_string()).collect(),
        preposition: prep.map(str::to_string),
        adjective: adj.map(str::to_string),
        object: None,
    }
}

/// Sentence for a hand-picked lexeme assignment.
pub fn render(task: Task, cond: &str, nouns: &[&str], verbs: &[&str], prep: Option<&str>, adj: Option<&str>) -> String {
    let lex = build_lexicon();
    let lx = assignment(&lex, nouns, verbs, prep, adj);
    build_trial(task, &Condition::parse(cond).unwrap(), &lex, &lx, "t".into(), 0)
        .unwrap()
        .sentence()
}
