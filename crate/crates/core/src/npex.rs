//! Candidate noun-phrase extraction over part-of-speech tags.
//!
//! A candidate is zero or more capitalised adjectives (`JJ`), one or more
//! tokens whose tag matches `N[A-Z]*`, and an optional trailing cardinal
//! (`CD`). Matching runs over the token/tag sequence and picks the
//! leftmost-longest match, then resumes after it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{join_surface, Pool, Sentence, Token};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NpSpan {
    pub sentence_id: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounPhrase {
    pub surface: String,
    pub occurrences: Vec<NpSpan>,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NpConfig {
    /// Accept lower-case adjectives in the leading `JJ` run.
    #[serde(default, rename = "relaxJJCase")]
    pub relax_jj_case: bool,
}

fn is_word(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_')
}

fn is_adjective(token: &Token, config: NpConfig) -> bool {
    if token.pos != "JJ" {
        return false;
    }
    if config.relax_jj_case {
        return is_word(&token.surface);
    }
    let mut chars = token.surface.chars();
    match chars.next() {
        Some(first) if first.is_ascii_uppercase() => {
            let rest = chars.as_str();
            is_word(rest)
        }
        _ => false,
    }
}

fn is_noun(token: &Token) -> bool {
    let mut chars = token.pos.chars();
    chars.next() == Some('N') && chars.all(|c| c.is_ascii_uppercase())
}

fn is_cardinal(token: &Token) -> bool {
    token.pos == "CD" && is_word(&token.surface)
}

pub fn extract_nps(sentence: &Sentence, config: NpConfig) -> Vec<NpSpan> {
    let tokens = &sentence.tokens;
    let n = tokens.len();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && is_adjective(&tokens[j], config) {
            j += 1;
        }
        let mut k = j;
        while k < n && is_noun(&tokens[k]) {
            k += 1;
        }
        if k == j {
            i += 1;
            continue;
        }
        if k < n && is_cardinal(&tokens[k]) {
            k += 1;
        }
        spans.push(NpSpan {
            sentence_id: sentence.id,
            start: i,
            end: k,
            surface: join_surface(&tokens[i..k]),
        });
        i = k;
    }
    spans
}

/// Groups every extracted span by exact surface. Output is sorted by
/// descending count, then surface.
pub fn collect_nps(pool: &Pool, config: NpConfig) -> Vec<NounPhrase> {
    let mut groups: BTreeMap<String, Vec<NpSpan>> = BTreeMap::new();
    for sentence in &pool.sentences {
        for span in extract_nps(sentence, config) {
            groups.entry(span.surface.clone()).or_default().push(span);
        }
    }
    let mut nps: Vec<NounPhrase> = groups
        .into_iter()
        .map(|(surface, occurrences)| NounPhrase {
            count: occurrences.len(),
            surface,
            occurrences,
        })
        .collect();
    nps.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.surface.cmp(&b.surface)));
    nps
}

/// Fraction of distinct gold entity surfaces that were extracted as
/// candidate noun phrases. `None` when the pool has no gold entities.
pub fn extraction_recall(pool: &Pool, nps: &[NounPhrase]) -> Option<f64> {
    let gold = pool.gold_surfaces();
    if gold.is_empty() {
        return None;
    }
    let extracted: BTreeSet<&str> = nps.iter().map(|np| np.surface.as_str()).collect();
    let hit = gold.iter().filter(|s| extracted.contains(s.as_str())).count();
    Some(hit as f64 / gold.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntitySpan;
    use proptest::prelude::*;
    use regex::Regex;

    fn sentence(tagged: &[(&str, &str)]) -> Sentence {
        Sentence::new(0, tagged.iter().map(|(w, p)| Token::new(*w, *p)).collect())
    }

    fn ranges(spans: &[NpSpan]) -> Vec<(usize, usize)> {
        spans.iter().map(|s| (s.start, s.end)).collect()
    }

    #[test]
    fn multi_noun_phrase() {
        let s = sentence(&[("IL-2", "NN"), ("gene", "NN"), ("expression", "NN")]);
        let spans = extract_nps(&s, NpConfig::default());
        assert_eq!(ranges(&spans), vec![(0, 3)]);
        assert_eq!(spans[0].surface, "IL-2 gene expression");
    }

    #[test]
    fn determiner_excluded() {
        let s = sentence(&[("the", "DT"), ("cat", "NN")]);
        assert_eq!(ranges(&extract_nps(&s, NpConfig::default())), vec![(1, 2)]);
    }

    #[test]
    fn lowercase_adjective_excluded_unless_relaxed() {
        let s = sentence(&[("quick", "JJ"), ("fox", "NN")]);
        assert_eq!(ranges(&extract_nps(&s, NpConfig::default())), vec![(1, 2)]);
        let relaxed = NpConfig { relax_jj_case: true };
        assert_eq!(ranges(&extract_nps(&s, relaxed)), vec![(0, 2)]);
    }

    #[test]
    fn capitalised_adjectives_and_cardinal() {
        let s = sentence(&[
            ("Big", "JJ"),
            ("Red", "JJ"),
            ("Dog", "NNP"),
            ("2", "CD"),
            ("barks", "VBZ"),
        ]);
        assert_eq!(ranges(&extract_nps(&s, NpConfig::default())), vec![(0, 4)]);
    }

    #[test]
    fn adjective_without_noun_is_not_a_phrase() {
        let s = sentence(&[("Big", "JJ"), ("red", "JJ"), ("car", "NN")]);
        assert_eq!(ranges(&extract_nps(&s, NpConfig::default())), vec![(2, 3)]);
    }

    #[test]
    fn groups_by_exact_surface() {
        let mut a = sentence(&[("Insulin", "NN"), ("rises", "VBZ")]);
        let mut b = sentence(&[("insulin", "NN"), ("falls", "VBZ")]);
        a.id = 0;
        b.id = 1;
        let pool = Pool::new(vec![a, b], "");
        let nps = collect_nps(&pool, NpConfig::default());
        assert_eq!(nps.len(), 2);
        assert!(nps.iter().all(|np| np.count == 1));
        assert!(collect_nps(&Pool::default(), NpConfig::default()).is_empty());
    }

    #[test]
    fn counts_recurring_surface() {
        let sentences = (0..296)
            .map(|_| sentence(&[("in", "IN"), ("U.S.", "NNP"), (".", ".")]))
            .collect();
        let pool = Pool::new(sentences, "LOC");
        let nps = collect_nps(&pool, NpConfig::default());
        assert_eq!(nps[0].surface, "U.S.");
        assert_eq!(nps[0].count, 296);
        assert_eq!(nps[0].occurrences.len(), 296);
    }

    #[test]
    fn recall_is_set_intersection() {
        let mut s = sentence(&[("Paris", "NNP"), ("and", "CC"), ("the", "DT"), ("Alps", "VB")]);
        s.gold = Some(vec![
            EntitySpan { start: 0, end: 1, class: "LOC".into() },
            EntitySpan { start: 3, end: 4, class: "LOC".into() },
        ]);
        let pool = Pool::new(vec![s], "LOC");
        let nps = collect_nps(&pool, NpConfig::default());
        assert_eq!(extraction_recall(&pool, &nps), Some(0.5));
    }

    // Oracle: serialise as `word TAG ` pairs and run the original regular
    // expression, anchored at token boundaries, leftmost-longest.
    fn regex_oracle(tagged: &[(String, String)]) -> Vec<(usize, usize)> {
        let re = Regex::new(r"^(?:[A-Z]\w+ JJ )*(?:[^\s]* N[A-Z]* )+(?:\w+ CD )?").unwrap();
        let mut text = String::new();
        let mut starts = Vec::new();
        for (w, p) in tagged {
            starts.push(text.len());
            text.push_str(w);
            text.push(' ');
            text.push_str(p);
            text.push(' ');
        }
        starts.push(text.len());
        let mut out = Vec::new();
        let mut i = 0;
        while i < tagged.len() {
            match re.find(&text[starts[i]..]) {
                Some(m) if m.end() > 0 => {
                    let end_byte = starts[i] + m.end();
                    let end = starts.iter().position(|&b| b == end_byte).expect("token aligned");
                    out.push((i, end));
                    i = end;
                }
                _ => i += 1,
            }
        }
        out
    }

    fn tagged_token() -> impl Strategy<Value = (String, String)> {
        let words = prop::sample::select(vec![
            "Big", "red", "IL2", "cat", "Paris", "x", "A", "2003", "kappa", "Zeta9",
        ]);
        let tags = prop::sample::select(vec!["JJ", "NN", "NNS", "NNP", "CD", "DT", "VBZ", "IN", "JJR"]);
        (words, tags).prop_map(|(w, t)| (w.to_string(), t.to_string()))
    }

    proptest! {
        #[test]
        fn matches_serialized_regex(tagged in prop::collection::vec(tagged_token(), 0..14)) {
            let pairs: Vec<(&str, &str)> = tagged.iter().map(|(w, p)| (w.as_str(), p.as_str())).collect();
            let s = sentence(&pairs);
            let spans = extract_nps(&s, NpConfig::default());
            prop_assert_eq!(ranges(&spans), regex_oracle(&tagged));
            let mut last_end = 0;
            for span in &spans {
                prop_assert!(span.start >= last_end && span.start < span.end);
                prop_assert_eq!(&span.surface, &join_surface(&s.tokens[span.start..span.end]));
                last_end = span.end;
            }
        }
    }
}
