//! Seeded synthetic corpus with a planted sparse location class.
//!
//! Location names share syllable-built word shapes with person and
//! organisation distractors, and a capitalised month often follows the
//! same prepositions, so neither capitalisation nor a single context word
//! identifies an entity on its own.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EntitySpan, Pool, Sentence, Token};

pub const TARGET_CLASS: &str = "LOC";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct FixtureConfig {
    pub sentences: usize,
    /// Fraction of sentences containing at least one location.
    pub entity_rate: f64,
    pub locations: usize,
    pub persons: usize,
    pub organisations: usize,
    /// Zipf exponent of location frequencies.
    pub zipf: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            sentences: 1000,
            entity_rate: 0.10,
            locations: 60,
            persons: 40,
            organisations: 25,
            zipf: 1.0,
            seed: 0,
        }
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "ver", "min", "tas", "ro", "den", "sha", "mir", "vel", "an", "dor", "bre", "ul", "zen",
    "pa", "qui", "tor", "nes", "gal", "ost", "ri", "mal", "eth",
];
const LOC_PREFIX: &[&str] = &["Port", "Lake", "San", "Fort"];
const ORG_SUFFIX: &[&str] = &["Corp", "Group", "Bank", "Holdings"];
const MONTHS: &[&str] = &[
    "January", "February", "March", "April", "May", "June", "July", "August", "September", "October",
    "November", "December",
];

type Name = Vec<String>;

fn word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=3);
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("syllables")).collect();
    w[..1].make_ascii_uppercase();
    w
}

fn names(rng: &mut ChaCha8Rng, count: usize, used: &mut Vec<Name>, make: impl Fn(&mut ChaCha8Rng) -> Name) -> Vec<Name> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let name = make(rng);
        if !used.contains(&name) {
            used.push(name.clone());
            out.push(name);
        }
    }
    out
}

#[derive(Clone, Copy)]
enum Slot {
    W(&'static str, &'static str),
    Loc,
    Per,
    Org,
    Month,
    Num,
}

use Slot::*;

const ENTITY_TEMPLATES: &[&[Slot]] = &[
    &[Per, W("traveled", "VBD"), W("to", "TO"), Loc, W("last", "JJ"), W("week", "NN"), W(".", ".")],
    &[W("The", "DT"), W("meeting", "NN"), W("in", "IN"), Loc, W("ended", "VBD"), W("early", "RB"), W(".", ".")],
    &[W("Prices", "NNS"), W("rose", "VBD"), W("in", "IN"), Loc, W("and", "CC"), Loc, W(".", ".")],
    &[Org, W("opened", "VBD"), W("an", "DT"), W("office", "NN"), W("near", "IN"), Loc, W(".", ".")],
    &[W("Officials", "NNS"), W("from", "IN"), Loc, W("arrived", "VBD"), W("on", "IN"), Month, Num, W(".", ".")],
    &[W("Heavy", "JJ"), W("rain", "NN"), W("fell", "VBD"), W("across", "IN"), Loc, W("on", "IN"), W("Sunday", "NNP"), W(".", ".")],
    &[Loc, W("reported", "VBD"), W("strong", "JJ"), W("growth", "NN"), W("in", "IN"), Month, W(".", ".")],
    &[W("Troops", "NNS"), W("moved", "VBD"), W("from", "IN"), Loc, W("to", "TO"), Loc, W(".", ".")],
    &[Per, W("lives", "VBZ"), W("in", "IN"), Loc, W(",", ","), W("officials", "NNS"), W("said", "VBD"), W(".", ".")],
    &[W("The", "DT"), W("road", "NN"), W("to", "TO"), Loc, W("was", "VBD"), W("closed", "VBN"), W(".", ".")],
];

const PLAIN_TEMPLATES: &[&[Slot]] = &[
    &[Per, W("said", "VBD"), W("the", "DT"), W("company", "NN"), W("expects", "VBZ"), W("growth", "NN"), W(".", ".")],
    &[Org, W("shares", "NNS"), W("fell", "VBD"), W("in", "IN"), Month, W(".", ".")],
    &[W("The", "DT"), W("report", "NN"), W("was", "VBD"), W("released", "VBN"), W("on", "IN"), Month, Num, W(".", ".")],
    &[W("Analysts", "NNS"), W("expect", "VBP"), W("rates", "NNS"), W("to", "TO"), W("rise", "VB"), W("in", "IN"), Month, W(".", ".")],
    &[Per, W("joined", "VBD"), Org, W("last", "JJ"), W("year", "NN"), W(".", ".")],
    &[W("Mr.", "NNP"), Per, W("declined", "VBD"), W("to", "TO"), W("comment", "VB"), W(".", ".")],
    &[Org, W("said", "VBD"), W("profits", "NNS"), W("rose", "VBD"), Num, W("percent", "NN"), W(".", ".")],
    &[W("The", "DT"), W("deal", "NN"), W("with", "IN"), Org, W("closed", "VBD"), W("in", "IN"), Month, W(".", ".")],
    &[W("Trading", "NN"), W("was", "VBD"), W("quiet", "JJ"), W("on", "IN"), W("Friday", "NNP"), W(".", ".")],
    &[Per, W("met", "VBD"), Per, W("to", "TO"), W("discuss", "VB"), W("the", "DT"), W("plan", "NN"), W(".", ".")],
    &[W("Sales", "NNS"), W("from", "IN"), Org, W("grew", "VBD"), W("in", "IN"), W("the", "DT"), W("quarter", "NN"), W(".", ".")],
    &[W("Officials", "NNS"), W("said", "VBD"), W("the", "DT"), W("talks", "NNS"), W("would", "MD"), W("resume", "VB"), W(".", ".")],
];

struct Lexicon {
    locations: Vec<Name>,
    loc_weights: WeightedIndex<f64>,
    persons: Vec<Name>,
    organisations: Vec<Name>,
}

fn emit(
    slot: Slot,
    lex: &Lexicon,
    rng: &mut ChaCha8Rng,
    tokens: &mut Vec<Token>,
    spans: &mut Vec<EntitySpan>,
) {
    let mut push_name = |name: &Name, class: &str, tokens: &mut Vec<Token>| {
        let start = tokens.len();
        for w in name {
            tokens.push(Token::new(w.clone(), "NNP"));
        }
        spans.push(EntitySpan {
            start,
            end: tokens.len(),
            class: class.to_string(),
        });
    };
    match slot {
        W(w, p) => tokens.push(Token::new(w, p)),
        Loc => {
            let name = &lex.locations[lex.loc_weights.sample(rng)];
            push_name(name, TARGET_CLASS, tokens);
        }
        Per => push_name(lex.persons.choose(rng).expect("persons"), "PER", tokens),
        Org => push_name(lex.organisations.choose(rng).expect("organisations"), "ORG", tokens),
        Month => tokens.push(Token::new(*MONTHS.choose(rng).expect("months"), "NNP")),
        Num => tokens.push(Token::new(rng.random_range(1..=28).to_string(), "CD")),
    }
}

/// Generates a multi-class gold pool (`LOC`, `PER`, `ORG`); restrict it to
/// [`TARGET_CLASS`] before running experiments.
pub fn generate(config: &FixtureConfig) -> Pool {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut used = Vec::new();
    let locations = names(&mut rng, config.locations, &mut used, |rng| {
        if rng.random_bool(0.2) {
            vec![LOC_PREFIX.choose(rng).expect("prefix").to_string(), word(rng)]
        } else {
            vec![word(rng)]
        }
    });
    let persons = names(&mut rng, config.persons, &mut used, |rng| vec![word(rng), word(rng)]);
    let organisations = names(&mut rng, config.organisations, &mut used, |rng| {
        vec![word(rng), ORG_SUFFIX.choose(rng).expect("suffix").to_string()]
    });
    let weights: Vec<f64> = (1..=locations.len()).map(|r| 1.0 / (r as f64).powf(config.zipf)).collect();
    let lex = Lexicon {
        loc_weights: WeightedIndex::new(&weights).expect("positive weights"),
        locations,
        persons,
        organisations,
    };

    let with_entities = ((config.sentences as f64) * config.entity_rate).round() as usize;
    let mut kinds: Vec<bool> = (0..config.sentences).map(|i| i < with_entities).collect();
    kinds.shuffle(&mut rng);

    let sentences = kinds
        .into_iter()
        .enumerate()
        .map(|(id, has_loc)| {
            let templates = if has_loc { ENTITY_TEMPLATES } else { PLAIN_TEMPLATES };
            let template = templates.choose(&mut rng).expect("templates");
            let mut tokens = Vec::new();
            let mut spans = Vec::new();
            for &slot in template.iter() {
                emit(slot, &lex, &mut rng, &mut tokens, &mut spans);
            }
            let mut s = Sentence::new(id, tokens);
            s.gold = Some(spans);
            s
        })
        .collect();
    Pool::new(sentences, "")
}
