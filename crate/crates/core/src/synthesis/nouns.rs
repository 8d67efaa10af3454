//! Lexicon-driven noun harvesting and frequency filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TripletRecord;
use crate::error::{Error, Result};
use crate::text::tokenize;

const BUNDLED_NOUNS: &str = include_str!("../../data/nouns.txt");

const IRREGULAR_PLURALS: &[(&str, &str)] = &[
    ("men", "man"),
    ("women", "woman"),
    ("people", "person"),
    ("children", "child"),
    ("sheep", "sheep"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("knives", "knife"),
    ("leaves", "leaf"),
    ("shelves", "shelf"),
    ("skis", "ski"),
];

/// Set of known nouns, stored lowercase and singular.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lexicon(BTreeSet<String>);

impl Lexicon {
    /// The common-noun list that ships with the toolkit.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_NOUNS)
    }

    /// Newline-delimited words; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn extend<I: IntoIterator<Item = S>, S: AsRef<str>>(&mut self, words: I) {
        self.0
            .extend(words.into_iter().map(|w| w.as_ref().to_lowercase()));
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Singular form by irregulars table, then `-ies`, `-es` and `-s` suffix rules.
pub fn singularize(word: &str) -> String {
    if let Some((_, singular)) = IRREGULAR_PLURALS.iter().find(|(p, _)| *p == word) {
        return singular.to_string();
    }
    if word.len() > 4 && word.ends_with("ies") {
        return format!("{}y", &word[..word.len() - 3]);
    }
    if ["ches", "shes", "sses", "xes", "zes"]
        .iter()
        .any(|s| word.ends_with(s))
    {
        return word[..word.len() - 2].to_string();
    }
    if word.len() > 3
        && word.ends_with('s')
        && !["ss", "us", "is"].iter().any(|s| word.ends_with(s))
    {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Lexicon nouns of `text` in order of appearance, duplicates kept, singular form.
pub fn extract_nouns(text: &str, lexicon: &Lexicon) -> Vec<String> {
    tokenize(text)
        .iter()
        .filter_map(|token| {
            let singular = singularize(token);
            if lexicon.contains(&singular) {
                Some(singular)
            } else if lexicon.contains(token) {
                Some(token.to_string())
            } else {
                None
            }
        })
        .collect()
}

/// Nouns of one record: question, every answer, then the explanation.
pub fn record_nouns(record: &TripletRecord, lexicon: &Lexicon) -> Vec<String> {
    let mut nouns = extract_nouns(&record.question, lexicon);
    for answer in &record.answers {
        nouns.extend(extract_nouns(&answer.text, lexicon));
    }
    nouns.extend(extract_nouns(&record.explanation, lexicon));
    nouns
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NounStats {
    pub counts: BTreeMap<String, usize>,
}

impl NounStats {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// The `k` most frequent nouns, ties alphabetical.
    pub fn top(&self, k: usize) -> Vec<(&str, usize)> {
        let mut all: Vec<_> = self.counts.iter().map(|(n, &c)| (n.as_str(), c)).collect();
        all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        all.truncate(k);
        all
    }
}

pub fn count_noun_frequencies(corpus: &[TripletRecord], lexicon: &Lexicon) -> NounStats {
    let mut counts = BTreeMap::new();
    for record in corpus {
        for noun in record_nouns(record, lexicon) {
            *counts.entry(noun).or_insert(0) += 1;
        }
    }
    NounStats { counts }
}

/// Nouns seen strictly more than `min_count` times.
pub fn filter_frequent(stats: &NounStats, min_count: usize) -> BTreeSet<String> {
    stats
        .counts
        .iter()
        .filter(|(_, &c)| c > min_count)
        .map(|(n, _)| n.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::Answer;
    use proptest::prelude::*;

    fn lex(words: &[&str]) -> Lexicon {
        Lexicon::parse(&words.join("\n"))
    }

    #[test]
    fn extract_examples() {
        assert_eq!(
            extract_nouns("two sheep near a dog", &lex(&["sheep", "dog"])),
            ["sheep", "dog"]
        );
        assert_eq!(
            extract_nouns("what color is it", &lex(&["color"])),
            ["color"]
        );
        assert_eq!(
            extract_nouns("boys with bats", &lex(&["boy", "bat"])),
            ["boy", "bat"]
        );
    }

    #[test]
    fn singular_rules() {
        let cases = [
            ("men", "man"),
            ("women", "woman"),
            ("people", "person"),
            ("children", "child"),
            ("sheep", "sheep"),
            ("boys", "boy"),
            ("puppies", "puppy"),
            ("benches", "bench"),
            ("boxes", "box"),
            ("glasses", "glass"),
            ("bus", "bus"),
            ("grass", "grass"),
            ("tennis", "tennis"),
            ("ties", "tie"),
            ("dog", "dog"),
        ];
        for (plural, singular) in cases {
            assert_eq!(singularize(plural), singular, "{plural}");
        }
    }

    #[test]
    fn raw_token_fallback() {
        // Singular "scissor" is unknown, so the raw spelling is kept.
        assert_eq!(
            extract_nouns("the scissors", &lex(&["scissors"])),
            ["scissors"]
        );
    }

    fn record(q: &str, answers: &[&str], e: &str) -> TripletRecord {
        TripletRecord {
            id: "r".into(),
            image_id: "1".into(),
            question: q.into(),
            answers: answers
                .iter()
                .map(|t| Answer {
                    text: t.to_string(),
                    score: 1.0,
                })
                .collect(),
            explanation: e.into(),
        }
    }

    #[test]
    fn counting_examples() {
        let l = lex(&["dog", "cat"]);
        let stats =
            count_noun_frequencies(&[record("is the dog happy", &["yes"], "the dog wags")], &l);
        assert_eq!(stats.counts, BTreeMap::from([("dog".to_string(), 2)]));
        let none = count_noun_frequencies(&[record("what is that", &["blue"], "sky is blue")], &l);
        assert!(none.counts.is_empty());
        let answers =
            count_noun_frequencies(&[record("what animal", &["cat", "cats"], "a cat")], &l);
        assert_eq!(answers.counts["cat"], 3);
    }

    #[test]
    fn filter_examples() {
        let stats = NounStats {
            counts: BTreeMap::from([("a".to_string(), 20), ("b".to_string(), 21)]),
        };
        assert_eq!(
            filter_frequent(&stats, 20),
            BTreeSet::from(["b".to_string()])
        );
        assert!(filter_frequent(&NounStats::default(), 20).is_empty());
        let big = NounStats {
            counts: BTreeMap::from([("a".to_string(), 100)]),
        };
        assert_eq!(filter_frequent(&big, 20).len(), 1);
    }

    #[test]
    fn bundled_lexicon_has_category_nouns() {
        let l = Lexicon::bundled();
        for w in ["man", "woman", "dog", "sheep", "tie", "boy", "bat"] {
            assert!(l.contains(w), "{w}");
        }
    }

    proptest! {
        #[test]
        fn filter_is_monotone(
            counts in proptest::collection::btree_map("[a-f]{1,3}", 1usize..60, 0..20),
            k in 1usize..50,
            dk in 0usize..20,
        ) {
            let stats = NounStats { counts };
            let loose = filter_frequent(&stats, k);
            let strict = filter_frequent(&stats, k + dk);
            prop_assert!(strict.is_subset(&loose));
        }
    }
}
