use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lemma to sense-class mapping read from `lemma<TAB>senseClass` rows.
/// Lemmas are stored lower-cased.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseLexicon {
    senses: BTreeMap<String, BTreeSet<String>>,
}

impl SenseLexicon {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lexicon = SenseLexicon::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (lemma, class) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `lemma<TAB>senseClass`".into(),
            })?;
            let (lemma, class) = (lemma.trim(), class.trim());
            if lemma.is_empty() || class.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty lemma or sense class".into(),
                });
            }
            lexicon.insert(lemma, class);
        }
        Ok(lexicon)
    }

    pub fn insert(&mut self, lemma: &str, class: &str) {
        self.senses
            .entry(lemma.to_lowercase())
            .or_default()
            .insert(class.to_string());
    }

    pub fn senses<'a>(&'a self, lemma: &str) -> impl Iterator<Item = &'a str> + 'a {
        self.senses
            .get(&lemma.to_lowercase())
            .into_iter()
            .flat_map(|set| set.iter().map(String::as_str))
    }

    pub fn len(&self) -> usize {
        self.senses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senses.is_empty()
    }
}
