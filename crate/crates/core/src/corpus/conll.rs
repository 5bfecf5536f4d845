use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EntitySpan, LabelSeq, Pool, Sentence, Token};
use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// `TOKEN POS CHUNK NER`, blank line between sentences.
    Conll2003,
    /// Ten tab-separated columns, NER in MISC as `NE=B-CLASS`.
    Conllu,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conll2003" | "conll" => Ok(CorpusFormat::Conll2003),
            "conllu" | "conll-u" => Ok(CorpusFormat::Conllu),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

/// Which CoNLL-U column supplies the part-of-speech tag.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosColumn {
    #[default]
    Upos,
    Xpos,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderOptions {
    pub pos_column: PosColumn,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagScheme {
    #[default]
    Bio,
    Io,
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Pool> {
    load_corpus_with(path, format, ReaderOptions::default())
}

pub fn load_corpus_with(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    options: ReaderOptions,
) -> Result<Pool> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, format, options)
}

pub fn parse_corpus(text: &str, format: CorpusFormat, options: ReaderOptions) -> Result<Pool> {
    let mut sentences = Vec::new();
    let mut builder = SentenceBuilder::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            builder.finish(&mut sentences);
            continue;
        }
        match format {
            CorpusFormat::Conll2003 => parse_conll2003_line(line, line_no, &mut builder)?,
            CorpusFormat::Conllu => parse_conllu_line(line, line_no, options, &mut builder)?,
        }
    }
    builder.finish(&mut sentences);
    Ok(Pool::new(sentences, ""))
}

#[derive(Default)]
struct SentenceBuilder {
    tokens: Vec<Token>,
    tags: Vec<Option<NerTag>>,
}

#[derive(Clone, Debug, PartialEq)]
enum NerTag {
    Outside,
    Begin(String),
    Inside(String),
}

impl SentenceBuilder {
    fn push(&mut self, token: Token, tag: Option<NerTag>) {
        self.tokens.push(token);
        self.tags.push(tag);
    }

    fn finish(&mut self, out: &mut Vec<Sentence>) {
        if self.tokens.is_empty() {
            return;
        }
        let tokens = std::mem::take(&mut self.tokens);
        let tags = std::mem::take(&mut self.tags);
        let mut sentence = Sentence::new(out.len(), tokens);
        if tags.iter().any(Option::is_some) {
            sentence.gold = Some(decode_spans(&tags));
        }
        out.push(sentence);
    }
}

/// Accepts both IOB1 and IOB2: an `I-X` that does not continue an `X`
/// entity opens a new one.
fn decode_spans(tags: &[Option<NerTag>]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            None | Some(NerTag::Outside) => {
                if let Some((start, class)) = open.take() {
                    spans.push(EntitySpan { start, end: i, class });
                }
            }
            Some(NerTag::Begin(class)) => {
                if let Some((start, c)) = open.take() {
                    spans.push(EntitySpan { start, end: i, class: c });
                }
                open = Some((i, class.clone()));
            }
            Some(NerTag::Inside(class)) => match &open {
                Some((_, c)) if c == class => {}
                _ => {
                    if let Some((start, c)) = open.take() {
                        spans.push(EntitySpan { start, end: i, class: c });
                    }
                    open = Some((i, class.clone()));
                }
            },
        }
    }
    if let Some((start, class)) = open {
        spans.push(EntitySpan {
            start,
            end: tags.len(),
            class,
        });
    }
    spans
}

fn parse_ner_tag(tag: &str, line: usize) -> Result<NerTag> {
    if tag == "O" {
        return Ok(NerTag::Outside);
    }
    let unknown = || Error::UnknownLabel {
        line,
        label: tag.to_string(),
    };
    let (prefix, class) = tag.split_once('-').ok_or_else(unknown)?;
    if class.is_empty() {
        return Err(unknown());
    }
    match prefix {
        "B" => Ok(NerTag::Begin(class.to_string())),
        "I" => Ok(NerTag::Inside(class.to_string())),
        _ => Err(unknown()),
    }
}

fn parse_conll2003_line(line: &str, line_no: usize, builder: &mut SentenceBuilder) -> Result<()> {
    let cols: Vec<&str> = line.split_whitespace().collect();
    if cols.first() == Some(&"-DOCSTART-") {
        return Ok(());
    }
    let tag = match cols.len() {
        2 => None,
        4 => Some(parse_ner_tag(cols[3], line_no)?),
        n => {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 columns (TOKEN POS CHUNK NER), found {n}"),
            })
        }
    };
    builder.push(Token::new(cols[0], cols[1]), tag);
    Ok(())
}

fn parse_conllu_line(
    line: &str,
    line_no: usize,
    options: ReaderOptions,
    builder: &mut SentenceBuilder,
) -> Result<()> {
    if line.starts_with('#') {
        return Ok(());
    }
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected 10 tab-separated columns, found {}", cols.len()),
        });
    }
    // Multiword token ranges and empty nodes carry no syntactic word.
    if cols[0].contains('-') || cols[0].contains('.') {
        return Ok(());
    }
    let malformed = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    cols[0]
        .parse::<usize>()
        .map_err(|_| malformed(format!("bad token id `{}`", cols[0])))?;
    let pos = match options.pos_column {
        PosColumn::Upos => cols[3],
        PosColumn::Xpos => cols[4],
    };
    if cols[1].is_empty() || pos.is_empty() || pos == "_" {
        return Err(malformed("missing form or part-of-speech tag".into()));
    }
    let mut token = Token::new(cols[1], pos);
    if cols[2] != "_" {
        token.lemma = Some(cols[2].to_string());
    }
    if cols[6] != "_" {
        let head = cols[6]
            .parse::<usize>()
            .map_err(|_| malformed(format!("bad head `{}`", cols[6])))?;
        token.head = Some(head);
    }
    if cols[7] != "_" {
        token.deprel = Some(cols[7].to_string());
    }
    let tag = if cols[9] == "_" {
        None
    } else {
        cols[9]
            .split('|')
            .find_map(|kv| kv.strip_prefix("NE="))
            .map(|t| parse_ner_tag(t, line_no))
            .transpose()?
    };
    builder.push(token, tag);
    Ok(())
}

/// Writes sentences in CoNLL-2003 layout. Sentences for which `labels`
/// returns `None` are skipped.
pub fn write_conll2003<'a>(
    sentences: impl IntoIterator<Item = &'a Sentence>,
    class: &str,
    scheme: TagScheme,
    mut labels: impl FnMut(&Sentence) -> Option<LabelSeq>,
) -> String {
    let mut out = String::new();
    for sentence in sentences {
        let Some(seq) = labels(sentence) else { continue };
        let tags: Vec<Label> = match scheme {
            TagScheme::Bio => seq.labels().to_vec(),
            TagScheme::Io => seq.to_io(),
        };
        for (token, tag) in sentence.tokens.iter().zip(tags) {
            let ner = match tag {
                Label::O => "O".to_string(),
                Label::B => format!("B-{class}"),
                Label::I => format!("I-{class}"),
            };
            let _ = writeln!(out, "{} {} O {}", token.surface, token.pos, ner);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONLL: &str = "-DOCSTART- -X- -X- O\n\
\n\
EU NNP B-NP B-ORG\n\
rejects VBZ B-VP O\n\
German JJ B-NP B-MISC\n\
call NN I-NP O\n\
to TO B-VP O\n\
boycott VB I-VP O\n\
British JJ B-NP B-MISC\n\
lamb NN I-NP O\n\
. . O O\n\
\n\
Peter NNP B-NP B-PER\n\
Blackburn NNP I-NP I-PER\n\
in IN B-PP O\n\
Los NNP B-NP B-LOC\n\
Angeles NNP I-NP I-LOC\n";

    #[test]
    fn reads_conll2003_with_gold() {
        let pool = parse_corpus(CONLL, CorpusFormat::Conll2003, ReaderOptions::default()).unwrap();
        assert_eq!(pool.len(), 2);
        assert_eq!(pool.sentences[1].id, 1);
        let gold = pool.sentences[1].gold.as_ref().unwrap();
        assert_eq!(
            gold,
            &vec![
                EntitySpan { start: 0, end: 2, class: "PER".into() },
                EntitySpan { start: 3, end: 5, class: "LOC".into() },
            ]
        );
        let loc = pool.restrict_to_class("LOC");
        assert_eq!(loc.gold_surfaces().into_iter().collect::<Vec<_>>(), vec!["Los Angeles"]);
    }

    #[test]
    fn iob1_inside_after_other_class_opens_span() {
        let text = "a NNP O I-PER\nb NNP O I-LOC\nc NNP O I-LOC\n";
        let pool = parse_corpus(text, CorpusFormat::Conll2003, ReaderOptions::default()).unwrap();
        let gold = pool.sentences[0].gold.clone().unwrap();
        assert_eq!(gold.len(), 2);
        assert_eq!((gold[1].start, gold[1].end), (1, 3));
    }

    #[test]
    fn empty_file_is_empty_pool() {
        let pool = parse_corpus("", CorpusFormat::Conll2003, ReaderOptions::default()).unwrap();
        assert!(pool.is_empty());
        let pool = parse_corpus("\n\n", CorpusFormat::Conllu, ReaderOptions::default()).unwrap();
        assert!(pool.is_empty());
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = "a NNP O O\nb NNP O\n";
        let err = parse_corpus(text, CorpusFormat::Conll2003, ReaderOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_label_is_an_error() {
        let text = "a NNP O O\nb NNP O S-LOC\n";
        let err = parse_corpus(text, CorpusFormat::Conll2003, ReaderOptions::default()).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { line: 2, .. }), "{err}");
    }

    #[test]
    fn two_column_input_has_no_gold() {
        let pool =
            parse_corpus("a DT\ncat NN\n", CorpusFormat::Conll2003, ReaderOptions::default()).unwrap();
        assert!(pool.sentences[0].gold.is_none());
    }

    const CONLLU: &str = "# sent_id = 1\n\
1\tThe\tthe\tDET\tDT\t_\t3\tdet\t_\t_\n\
2\tinsulin\tinsulin\tNOUN\tNN\t_\t3\tcompound\t_\tNE=B-PROT\n\
3\treceptor\treceptor\tNOUN\tNN\t_\t4\tnsubj\t_\tNE=I-PROT\n\
4\tbinds\tbind\tVERB\tVBZ\t_\t0\troot\t_\tNE=O\n\
4.1\tx\tx\tX\tX\t_\t_\t_\t_\t_\n";

    #[test]
    fn reads_conllu_dependencies() {
        let pool = parse_corpus(CONLLU, CorpusFormat::Conllu, ReaderOptions::default()).unwrap();
        let s = &pool.sentences[0];
        assert_eq!(s.len(), 4);
        assert_eq!(s.tokens[2].head, Some(4));
        assert_eq!(s.tokens[2].deprel.as_deref(), Some("nsubj"));
        assert_eq!(s.tokens[3].head, Some(0));
        assert_eq!(s.tokens[1].pos, "NOUN");
        assert_eq!(s.tokens[1].lemma.as_deref(), Some("insulin"));
        assert_eq!(s.gold.as_ref().unwrap()[0], EntitySpan { start: 1, end: 3, class: "PROT".into() });

        let xpos = parse_corpus(
            CONLLU,
            CorpusFormat::Conllu,
            ReaderOptions { pos_column: PosColumn::Xpos },
        )
        .unwrap();
        assert_eq!(xpos.sentences[0].tokens[1].pos, "NN");
    }

    #[test]
    fn conllu_column_count_checked() {
        let err = parse_corpus("1\tx\tx\n", CorpusFormat::Conllu, ReaderOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn writer_round_trips_through_reader() {
        let pool = parse_corpus(CONLL, CorpusFormat::Conll2003, ReaderOptions::default())
            .unwrap()
            .restrict_to_class("MISC");
        let text = write_conll2003(&pool.sentences, "MISC", TagScheme::Bio, |s| s.gold_labels());
        let back = parse_corpus(&text, CorpusFormat::Conll2003, ReaderOptions::default()).unwrap();
        assert_eq!(back.len(), pool.len());
        for (a, b) in back.sentences.iter().zip(&pool.sentences) {
            assert_eq!(a.tokens, b.tokens);
            assert_eq!(a.gold_labels(), b.gold_labels());
        }
    }
}
