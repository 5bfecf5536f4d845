use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Token;
use crate::featurize::{long_shape, short_shape, SENTENCE_END, SENTENCE_START};

/// Observation templates. Label-bigram transitions are always part of the
/// model and are not listed here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Bias,
    Word,
    LowerWord,
    Shape,
    Affixes,
    WordWindow,
    ShapeWindow,
    Lexicon,
}

impl Template {
    pub const ALL: [Template; 8] = [
        Template::Bias,
        Template::Word,
        Template::LowerWord,
        Template::Shape,
        Template::Affixes,
        Template::WordWindow,
        Template::ShapeWindow,
        Template::Lexicon,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateSet {
    pub templates: Vec<Template>,
    /// Offsets used by [`Template::WordWindow`]; shapes use radius 1.
    pub window_radius: usize,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            templates: Template::ALL.to_vec(),
            window_radius: 2,
        }
    }
}

impl TemplateSet {
    pub fn empty() -> Self {
        TemplateSet {
            templates: Vec::new(),
            window_radius: 0,
        }
    }

    fn has(&self, t: Template) -> bool {
        self.templates.contains(&t)
    }
}

/// Marks tokens covered by a confirmed entity surface: `Some(true)` on the
/// first token of a match, `Some(false)` inside it. Matches are exact,
/// greedy and longest-first.
fn lexicon_marks(tokens: &[Token], lexicon: &BTreeSet<String>) -> Vec<Option<bool>> {
    let mut by_first: BTreeMap<&str, Vec<Vec<&str>>> = BTreeMap::new();
    for entry in lexicon {
        let words: Vec<&str> = entry.split(' ').collect();
        by_first.entry(words[0]).or_default().push(words);
    }
    for cands in by_first.values_mut() {
        cands.sort_by_key(|c| std::cmp::Reverse(c.len()));
    }
    let mut marks = vec![None; tokens.len()];
    let mut i = 0;
    while i < tokens.len() {
        let hit = by_first.get(tokens[i].surface.as_str()).and_then(|cands| {
            cands.iter().find(|words| {
                i + words.len() <= tokens.len()
                    && words.iter().zip(&tokens[i..]).all(|(w, t)| *w == t.surface)
            })
        });
        match hit {
            Some(words) => {
                marks[i] = Some(true);
                for m in &mut marks[i + 1..i + words.len()] {
                    *m = Some(false);
                }
                i += words.len();
            }
            None => i += 1,
        }
    }
    marks
}

fn neighbour(tokens: &[Token], i: usize, offset: isize) -> String {
    let j = i as isize + offset;
    if j < 0 {
        SENTENCE_START.to_string()
    } else if j as usize >= tokens.len() {
        SENTENCE_END.to_string()
    } else {
        tokens[j as usize].surface.to_lowercase()
    }
}

fn neighbour_shape(tokens: &[Token], i: usize, offset: isize) -> String {
    let j = i as isize + offset;
    if j < 0 || j as usize >= tokens.len() {
        "⟨B⟩".to_string()
    } else {
        short_shape(&tokens[j as usize].surface)
    }
}

/// Observation attribute strings for every token, sorted and deduplicated.
pub fn token_attributes(
    tokens: &[Token],
    templates: &TemplateSet,
    lexicon: &BTreeSet<String>,
) -> Vec<Vec<String>> {
    let marks = if templates.has(Template::Lexicon) && !lexicon.is_empty() {
        lexicon_marks(tokens, lexicon)
    } else {
        vec![None; tokens.len()]
    };
    let radius = templates.window_radius as isize;
    (0..tokens.len())
        .map(|i| {
            let word = &tokens[i].surface;
            let mut attrs = Vec::new();
            for &t in &templates.templates {
                match t {
                    Template::Bias => attrs.push("bias".to_string()),
                    Template::Word => attrs.push(format!("w={word}")),
                    Template::LowerWord => attrs.push(format!("lw={}", word.to_lowercase())),
                    Template::Shape => {
                        attrs.push(format!("lws={}", long_shape(word)));
                        attrs.push(format!("sws={}", short_shape(word)));
                    }
                    Template::Affixes => {
                        let chars: Vec<char> = word.chars().collect();
                        for k in 1..=4.min(chars.len()) {
                            attrs.push(format!("p{k}={}", chars[..k].iter().collect::<String>()));
                            attrs.push(format!("s{k}={}", chars[chars.len() - k..].iter().collect::<String>()));
                        }
                    }
                    Template::WordWindow => {
                        for off in (-radius..=radius).filter(|o| *o != 0) {
                            attrs.push(format!("w[{off:+}]={}", neighbour(tokens, i, off)));
                        }
                    }
                    Template::ShapeWindow => {
                        for off in [-1, 1] {
                            attrs.push(format!("sws[{off:+}]={}", neighbour_shape(tokens, i, off)));
                        }
                    }
                    Template::Lexicon => match marks[i] {
                        Some(true) => attrs.push("lex=B".to_string()),
                        Some(false) => attrs.push("lex=I".to_string()),
                        None => {}
                    },
                }
            }
            attrs.sort();
            attrs.dedup();
            attrs
        })
        .collect()
}
