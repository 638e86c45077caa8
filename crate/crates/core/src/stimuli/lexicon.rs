// SPDX-License-Identifier: MIT OR Apache-2.0

//! Lexical inventory and the small slice of Italian morphology it needs.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Number {
    #[serde(rename = "S")]
    Singular,
    #[serde(rename = "P")]
    Plural,
}

impl Number {
    pub fn flip(self) -> Self {
        match self {
            Number::Singular => Number::Plural,
            Number::Plural => Number::Singular,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "M")]
    Masculine,
    #[serde(rename = "F")]
    Feminine,
}

impl Gender {
    pub fn flip(self) -> Self {
        match self {
            Gender::Masculine => Gender::Feminine,
            Gender::Feminine => Gender::Masculine,
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Number::Singular => "S",
            Number::Plural => "P",
        })
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Masculine => "M",
            Gender::Feminine => "F",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Noun {
    pub lemma: String,
    pub gender: Gender,
    pub singular: String,
    pub plural: String,
}

impl Noun {
    pub fn form(&self, number: Number) -> &str {
        match number {
            Number::Singular => &self.singular,
            Number::Plural => &self.plural,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verb {
    pub infinitive: String,
    pub third_singular: String,
    pub third_plural: String,
    pub first_singular: String,
}

impl Verb {
    pub fn third(&self, number: Number) -> &str {
        match number {
            Number::Singular => &self.third_singular,
            Number::Plural => &self.third_plural,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjective {
    pub lemma: String,
    /// Indexed `[masc sing, fem sing, masc plur, fem plur]`.
    pub forms: [String; 4],
}

impl Adjective {
    pub fn form(&self, gender: Gender, number: Number) -> &str {
        let i = match (gender, number) {
            (Gender::Masculine, Number::Singular) => 0,
            (Gender::Feminine, Number::Singular) => 1,
            (Gender::Masculine, Number::Plural) => 2,
            (Gender::Feminine, Number::Plural) => 3,
        };
        &self.forms[i]
    }
}

/// A complex preposition of the form `<head…> a`; the final `a` fuses with
/// the following definite article.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preposition {
    pub name: String,
    pub head: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub name: String,
    pub nouns: Vec<Noun>,
    pub verbs: Vec<Verb>,
    pub matrix_verbs: Vec<Verb>,
    pub copula: Verb,
    pub prepositions: Vec<Preposition>,
    pub adjectives: Vec<Adjective>,
    pub abstract_nouns: Vec<Noun>,
    pub inanimate_nouns: Vec<Noun>,
}

/// Grammatical reading of a surface token.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Analysis {
    Noun {
        lemma: String,
        gender: Gender,
        number: Number,
        class: NounClass,
    },
    Verb {
        lemma: String,
        number: Number,
        matrix: bool,
    },
    FirstPersonVerb {
        lemma: String,
    },
    Infinitive {
        lemma: String,
    },
    Copula {
        number: Number,
    },
    Adjective {
        lemma: String,
        gender: Gender,
        number: Number,
    },
    Article {
        gender: Option<Gender>,
        number: Number,
    },
    /// Preposition `a` fused with an article.
    Contracted {
        gender: Option<Gender>,
        number: Number,
    },
    PrepositionHead,
    Complementizer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NounClass {
    Animate,
    Abstract,
    Inanimate,
}

fn starts_with_vowel(word: &str) -> bool {
    matches!(word.chars().next(), Some('a' | 'e' | 'i' | 'o' | 'u' | 'h'))
}

/// Onsets that select `lo` / `gli`: s + consonant, z, gn, ps, pn, x, y.
fn impure_onset(word: &str) -> bool {
    let b = word.as_bytes();
    match b {
        [b's', c, ..] => !matches!(c, b'a' | b'e' | b'i' | b'o' | b'u'),
        [b'z', ..] | [b'x', ..] | [b'y', ..] => true,
        [b'g', b'n', ..] | [b'p', b's', ..] | [b'p', b'n', ..] => true,
        _ => false,
    }
}

/// Definite article agreeing with a noun and selected by its onset.
pub fn definite_article(gender: Gender, number: Number, next: &str) -> &'static str {
    match (gender, number) {
        (Gender::Masculine, Number::Singular) => {
            if impure_onset(next) {
                "lo"
            } else if starts_with_vowel(next) {
                "l'"
            } else {
                "il"
            }
        }
        (Gender::Masculine, Number::Plural) => {
            if impure_onset(next) || starts_with_vowel(next) {
                "gli"
            } else {
                "i"
            }
        }
        (Gender::Feminine, Number::Singular) => {
            if starts_with_vowel(next) {
                "l'"
            } else {
                "la"
            }
        }
        (Gender::Feminine, Number::Plural) => "le",
    }
}

/// `a` + definite article.
pub fn contracted_a(gender: Gender, number: Number, next: &str) -> &'static str {
    match definite_article(gender, number, next) {
        "il" => "al",
        "lo" => "allo",
        "l'" => "all'",
        "la" => "alla",
        "i" => "ai",
        "gli" => "agli",
        _ => "alle",
    }
}

fn noun(gender: Gender, singular: &str, plural: &str) -> Noun {
    Noun {
        lemma: singular.to_string(),
        gender,
        singular: singular.to_string(),
        plural: plural.to_string(),
    }
}

/// Nouns with explicit plural forms.
fn nouns(gender: Gender, items: &[(&str, &str)]) -> Vec<Noun> {
    items.iter().map(|(s, p)| noun(gender, s, p)).collect()
}

fn verb(inf: &str, s3: &str, p3: &str, s1: &str) -> Verb {
    Verb {
        infinitive: inf.to_string(),
        third_singular: s3.to_string(),
        third_plural: p3.to_string(),
        first_singular: s1.to_string(),
    }
}

/// Regular first-conjugation (-are) verb.
fn are_verb(inf: &str) -> Verb {
    let stem = &inf[..inf.len() - 3];
    verb(inf, &format!("{stem}a"), &format!("{stem}ano"), &format!("{stem}o"))
}

fn adjective(lemma: &str) -> Adjective {
    let stem = &lemma[..lemma.len() - 1];
    let mp = if stem.ends_with("c") || stem.ends_with("g") {
        format!("{stem}hi")
    } else {
        format!("{stem}i")
    };
    let fp = if stem.ends_with("c") || stem.ends_with("g") {
        format!("{stem}he")
    } else {
        format!("{stem}e")
    };
    Adjective {
        lemma: lemma.to_string(),
        forms: [lemma.to_string(), format!("{stem}a"), mp, fp],
    }
}

fn prep(name: &str) -> Preposition {
    let mut words: Vec<String> = name.split_whitespace().map(str::to_string).collect();
    let last = words.pop();
    debug_assert_eq!(last.as_deref(), Some("a"));
    Preposition {
        name: name.to_string(),
        head: words,
    }
}

/// The experimental inventory: 10 masculine and 10 feminine animate nouns,
/// 16 transitive verbs, 4 matrix verbs, the copula, 4 prepositions and 12
/// adjectives, plus the abstract and inanimate nouns used by fillers.
pub fn build_lexicon() -> Lexicon {
    use Gender::*;
    let mut all_nouns = nouns(
        Masculine,
        &[
            ("fratello", "fratelli"),
            ("studente", "studenti"),
            ("padre", "padri"),
            ("figlio", "figli"),
            ("ragazzo", "ragazzi"),
            ("bambino", "bambini"),
            ("amico", "amici"),
            ("uomo", "uomini"),
            ("attore", "attori"),
            ("contadino", "contadini"),
        ],
    );
    all_nouns.extend(nouns(
        Feminine,
        &[
            ("sorella", "sorelle"),
            ("studentessa", "studentesse"),
            ("madre", "madri"),
            ("figlia", "figlie"),
            ("ragazza", "ragazze"),
            ("bambina", "bambine"),
            ("amica", "amiche"),
            ("donna", "donne"),
            ("attrice", "attrici"),
            ("contadina", "contadine"),
        ],
    ));

    let verbs = vec![
        verb("accogliere", "accoglie", "accolgono", "accolgo"),
        are_verb("amare"),
        verb("attrarre", "attrae", "attraggono", "attraggo"),
        are_verb("bloccare"),
        verb("conoscere", "conosce", "conoscono", "conosco"),
        are_verb("criticare"),
        verb("difendere", "difende", "difendono", "difendo"),
        are_verb("evitare"),
        are_verb("fermare"),
        are_verb("guardare"),
        are_verb("ignorare"),
        are_verb("incontrare"),
        are_verb("indicare"),
        verb("interrompere", "interrompe", "interrompono", "interrompo"),
        are_verb("osservare"),
        are_verb("salutare"),
    ];
    let matrix_verbs = vec![
        are_verb("ricordare"),
        verb("dire", "dice", "dicono", "dico"),
        are_verb("dichiarare"),
        are_verb("sognare"),
    ];

    Lexicon {
        name: "main".to_string(),
        nouns: all_nouns,
        verbs,
        matrix_verbs,
        copula: verb("essere", "è", "sono", "sono"),
        prepositions: ["vicino a", "dietro a", "davanti a", "accanto a"]
            .iter()
            .map(|p| prep(p))
            .collect(),
        adjectives: [
            "bello", "famoso", "brutto", "ricco", "povero", "basso", "alto", "grasso", "cattivo",
            "buono", "lento", "nuovo",
        ]
        .iter()
        .map(|a| adjective(a))
        .collect(),
        abstract_nouns: vec![
            noun(Feminine, "filosofia", "filosofie"),
            noun(Feminine, "matematica", "matematiche"),
            noun(Feminine, "giustizia", "giustizie"),
            noun(Masculine, "coraggio", "coraggi"),
            noun(Masculine, "silenzio", "silenzi"),
            noun(Masculine, "destino", "destini"),
        ],
        inanimate_nouns: vec![
            noun(Feminine, "matita", "matite"),
            noun(Feminine, "sedia", "sedie"),
            noun(Feminine, "bottiglia", "bottiglie"),
            noun(Masculine, "tavolo", "tavoli"),
            noun(Masculine, "libro", "libri"),
            noun(Masculine, "sasso", "sassi"),
        ],
    }
}

/// A second inventory sharing no content word with [`build_lexicon`]; used
/// for the practice block.
pub fn build_training_lexicon() -> Lexicon {
    use Gender::*;
    let mut all_nouns = nouns(
        Masculine,
        &[
            ("nonno", "nonni"),
            ("zio", "zii"),
            ("cugino", "cugini"),
            ("maestro", "maestri"),
            ("dottore", "dottori"),
            ("pittore", "pittori"),
            ("cuoco", "cuochi"),
            ("sarto", "sarti"),
            ("postino", "postini"),
            ("scrittore", "scrittori"),
        ],
    );
    all_nouns.extend(nouns(
        Feminine,
        &[
            ("nonna", "nonne"),
            ("zia", "zie"),
            ("cugina", "cugine"),
            ("maestra", "maestre"),
            ("dottoressa", "dottoresse"),
            ("pittrice", "pittrici"),
            ("cuoca", "cuoche"),
            ("sarta", "sarte"),
            ("postina", "postine"),
            ("scrittrice", "scrittrici"),
        ],
    ));
    let verbs = vec![
        are_verb("aiutare"),
        are_verb("chiamare"),
        verb("seguire", "segue", "seguono", "seguo"),
        are_verb("visitare"),
        are_verb("aspettare"),
        are_verb("ascoltare"),
        are_verb("abbracciare"),
        are_verb("ringraziare"),
    ];
    Lexicon {
        name: "training".to_string(),
        nouns: all_nouns,
        verbs,
        matrix_verbs: vec![
            are_verb("pensare"),
            verb("credere", "crede", "credono", "credo"),
        ],
        copula: verb("essere", "è", "sono", "sono"),
        prepositions: ["intorno a", "insieme a", "di fronte a", "in mezzo a"]
            .iter()
            .map(|p| prep(p))
            .collect(),
        adjectives: ["stanco", "magro", "piccolo", "biondo"]
            .iter()
            .map(|a| adjective(a))
            .collect(),
        abstract_nouns: vec![
            noun(Feminine, "pazienza", "pazienze"),
            noun(Feminine, "fortuna", "fortune"),
            noun(Masculine, "pensiero", "pensieri"),
        ],
        inanimate_nouns: vec![
            noun(Feminine, "penna", "penne"),
            noun(Feminine, "lampada", "lampade"),
            noun(Masculine, "quaderno", "quaderni"),
            noun(Masculine, "cuscino", "cuscini"),
        ],
    }
}

impl Lexicon {
    pub fn nouns_of(&self, gender: Gender) -> impl Iterator<Item = (usize, &Noun)> {
        self.nouns
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.gender == gender)
    }

    pub fn noun(&self, lemma: &str) -> Option<&Noun> {
        self.nouns
            .iter()
            .chain(&self.abstract_nouns)
            .chain(&self.inanimate_nouns)
            .find(|n| n.lemma == lemma)
    }

    pub fn verb(&self, infinitive: &str) -> Option<&Verb> {
        self.verbs
            .iter()
            .chain(&self.matrix_verbs)
            .find(|v| v.infinitive == infinitive)
    }

    pub fn preposition(&self, name: &str) -> Option<&Preposition> {
        self.prepositions.iter().find(|p| p.name == name)
    }

    pub fn adjective(&self, lemma: &str) -> Option<&Adjective> {
        self.adjectives.iter().find(|a| a.lemma == lemma)
    }

    /// Content words (every noun, verb and adjective surface form).
    pub fn content_forms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for n in self
            .nouns
            .iter()
            .chain(&self.abstract_nouns)
            .chain(&self.inanimate_nouns)
        {
            out.insert(n.singular.clone());
            out.insert(n.plural.clone());
        }
        for v in self.verbs.iter().chain(&self.matrix_verbs) {
            out.insert(v.infinitive.clone());
            out.insert(v.third_singular.clone());
            out.insert(v.third_plural.clone());
            out.insert(v.first_singular.clone());
        }
        for a in &self.adjectives {
            out.extend(a.forms.iter().cloned());
        }
        out
    }

    /// Every verb surface form (including infinitives and first person).
    pub fn verb_forms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for v in self
            .verbs
            .iter()
            .chain(&self.matrix_verbs)
            .chain(std::iter::once(&self.copula))
        {
            out.insert(v.infinitive.clone());
            out.insert(v.third_singular.clone());
            out.insert(v.third_plural.clone());
            out.insert(v.first_singular.clone());
        }
        out
    }

    /// Reverse index from surface form to every reading.
    pub fn analyzer(&self) -> Analyzer {
        let mut map: HashMap<String, Vec<Analysis>> = HashMap::new();
        let mut add = |form: &str, a: Analysis| {
            let entry = map.entry(form.to_string()).or_default();
            if !entry.contains(&a) {
                entry.push(a);
            }
        };
        let noun_sets = [
            (&self.nouns, NounClass::Animate),
            (&self.abstract_nouns, NounClass::Abstract),
            (&self.inanimate_nouns, NounClass::Inanimate),
        ];
        for (set, class) in noun_sets {
            for n in set {
                for number in [Number::Singular, Number::Plural] {
                    let form = n.form(number);
                    add(
                        form,
                        Analysis::Noun {
                            lemma: n.lemma.clone(),
                            gender: n.gender,
                            number,
                            class,
                        },
                    );
                    let art = definite_article(n.gender, number, form);
                    let gender = (art != "l'").then_some(n.gender);
                    add(art, Analysis::Article { gender, number });
                    add(
                        contracted_a(n.gender, number, form),
                        Analysis::Contracted { gender, number },
                    );
                }
            }
        }
        for (set, matrix) in [(&self.verbs, false), (&self.matrix_verbs, true)] {
            for v in set {
                for number in [Number::Singular, Number::Plural] {
                    add(
                        v.third(number),
                        Analysis::Verb {
                            lemma: v.infinitive.clone(),
                            number,
                            matrix,
                        },
                    );
                }
                add(
                    &v.first_singular,
                    Analysis::FirstPersonVerb {
                        lemma: v.infinitive.clone(),
                    },
                );
                add(
                    &v.infinitive,
                    Analysis::Infinitive {
                        lemma: v.infinitive.clone(),
                    },
                );
            }
        }
        add(
            &self.copula.third_singular,
            Analysis::Copula {
                number: Number::Singular,
            },
        );
        add(
            &self.copula.third_plural,
            Analysis::Copula {
                number: Number::Plural,
            },
        );
        for a in &self.adjectives {
            for g in [Gender::Masculine, Gender::Feminine] {
                for n in [Number::Singular, Number::Plural] {
                    add(
                        a.form(g, n),
                        Analysis::Adjective {
                            lemma: a.lemma.clone(),
                            gender: g,
                            number: n,
                        },
                    );
                }
            }
        }
        for p in &self.prepositions {
            for w in &p.head {
                add(w, Analysis::PrepositionHead);
            }
        }
        add("che", Analysis::Complementizer);
        Analyzer { map }
    }
}

/// Surface form → readings.
#[derive(Clone, Debug)]
pub struct Analyzer {
    map: HashMap<String, Vec<Analysis>>,
}

impl Analyzer {
    pub fn analyze(&self, token: &str) -> &[Analysis] {
        self.map.get(token).map_or(&[], Vec::as_slice)
    }

    /// The noun reading of `token`, if any.
    pub fn noun(&self, token: &str) -> Option<(Gender, Number)> {
        self.analyze(token).iter().find_map(|a| match a {
            Analysis::Noun { gender, number, .. } => Some((*gender, *number)),
            _ => None,
        })
    }

    /// Number of a finite third-person verb form.
    pub fn verb_number(&self, token: &str) -> Option<Number> {
        self.analyze(token).iter().find_map(|a| match a {
            Analysis::Verb { number, .. } | Analysis::Copula { number } => Some(*number),
            _ => None,
        })
    }

    pub fn adjective(&self, token: &str) -> Option<(Gender, Number)> {
        self.analyze(token).iter().find_map(|a| match a {
            Analysis::Adjective { gender, number, .. } => Some((*gender, *number)),
            _ => None,
        })
    }
}
