//! `annoloop` command-line entry points.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use annoloop::active::Mode;
use annoloop::corpus::{load_corpus, write_conll2003, CorpusFormat, Pool, TagScheme};
use annoloop::crf::{self, CrfConfig, Example, SequenceModel};
use annoloop::esegraph::{self, ExpandConfig, FamilyGrouping, Scheme, Similarity};
use annoloop::featurize::{featurize_all, FeaturizeConfig, SenseLexicon};
use annoloop::harness::fixture::{generate, FixtureConfig, TARGET_CLASS};
use annoloop::harness::{curves_csv, run_experiment, ExperimentConfig, ExperimentResult};
use annoloop::npex::{collect_nps, NpConfig};
use annoloop::{Error, Result};
use annoloop_service::ServiceConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "annoloop", version, about = "Incremental entity annotation toolkit")]
struct Cli {
    /// Seed for every random choice (embeddings, sampling, fixtures).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus file.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, default_value = "conll2003", value_parser = parse_format)]
    format: CorpusFormat,
}

impl CorpusArgs {
    fn load(&self) -> Result<Pool> {
        load_corpus(&self.input, self.format)
    }
}

fn parse_format(s: &str) -> std::result::Result<CorpusFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Count,
    Tfidf,
    TfidfSum,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimArg {
    Cosine,
    Context,
}

#[derive(Subcommand)]
enum Command {
    /// Extract candidate noun phrases as `surface<TAB>count`.
    Npex {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accept lower-case leading adjectives.
        #[arg(long)]
        relax_jj: bool,
    },
    /// Rank noun phrases similar to one or more seed entities.
    Expand {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Seed entity surface; repeat for several seeds.
        #[arg(long = "seed", required = true)]
        seeds: Vec<String>,
        #[arg(long, value_enum, default_value = "tfidf")]
        scheme: SchemeArg,
        #[arg(long, value_enum, default_value = "context")]
        sim: SimArg,
        /// Combine leave-one-family-out rankings by mean reciprocal rank.
        #[arg(long)]
        ensemble: bool,
        /// Treat the word-shape family as part of the orthographic family.
        #[arg(long)]
        five_families: bool,
        #[arg(long, default_value_t = esegraph::DEFAULT_K)]
        k: usize,
        /// Lemma-to-sense-class lexicon (`lemma<TAB>class` lines).
        #[arg(long)]
        senses: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a sequence model on the gold spans of one entity class.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        class: String,
        /// Model configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Known entity surfaces, one per line.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label a corpus with a trained model and print CoNLL-2003.
    Tag {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        model: PathBuf,
        /// Class name written in the tags.
        #[arg(long, default_value = "ENT")]
        class: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run emulated annotation experiments and write per-iteration curves.
    Simulate {
        /// Experiment file (JSON); see README.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Annotation modes to run; overrides the file.
        #[arg(long = "mode", value_parser = parse_mode)]
        modes: Vec<Mode>,
        /// Number of runs per mode, seeded `seed`, `seed+1`, ...
        #[arg(long)]
        runs: Option<usize>,
        /// Gold corpus; the synthetic fixture is used when absent.
        #[arg(long = "in", requires = "class")]
        input: Option<PathBuf>,
        #[arg(long, default_value = "conll2003", value_parser = parse_format)]
        format: CorpusFormat,
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        /// Service configuration (JSON); `ANNOLOOP_*` variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        #[arg(long)]
        session_dir: Option<PathBuf>,
    },
    /// Write the synthetic location corpus in CoNLL-2003 layout.
    Fixture {
        #[arg(long, default_value_t = 1000)]
        sentences: usize,
        #[arg(long, default_value_t = 0.10)]
        entity_rate: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn read_lines(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

#[derive(Deserialize)]
#[serde(default, rename_all = "camelCase")]
struct SimulateFile {
    experiment: ExperimentConfig,
    fixture: FixtureConfig,
    modes: Vec<Mode>,
    runs: usize,
}

impl Default for SimulateFile {
    fn default() -> Self {
        SimulateFile {
            experiment: ExperimentConfig::default(),
            fixture: FixtureConfig::default(),
            modes: vec![Mode::Ar, Mode::Eal],
            runs: 1,
        }
    }
}

fn simulate(
    seed: u64,
    file: SimulateFile,
    gold: Option<Pool>,
) -> Result<Vec<ExperimentResult>> {
    let jobs: Vec<(Mode, u64)> = file
        .modes
        .iter()
        .flat_map(|&m| (0..file.runs as u64).map(move |i| (m, seed + i)))
        .collect();
    jobs.par_iter()
        .map(|&(mode, run_seed)| {
            let pool = match &gold {
                Some(p) => p.clone(),
                None => generate(&FixtureConfig {
                    seed: run_seed,
                    ..file.fixture.clone()
                })
                .restrict_to_class(TARGET_CLASS),
            };
            let mut config = file.experiment.clone();
            config.mode = mode;
            config.rng_seed = run_seed;
            config.featurize.cf.seed = run_seed;
            let result = run_experiment(&config, &pool)?;
            log::info!(
                "{mode} seed {run_seed}: {} iterations, final F {:.4}, pool cut {:.3}",
                result.history.len(),
                result.final_f,
                result.percentage_cut
            );
            Ok(result)
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Npex { corpus, out, relax_jj } => {
            let pool = corpus.load()?;
            let nps = collect_nps(&pool, NpConfig { relax_jj_case: relax_jj });
            let mut text = String::new();
            for np in &nps {
                text.push_str(&format!("{}\t{}\n", np.surface, np.count));
            }
            emit(out.as_deref(), &text)
        }
        Command::Expand {
            corpus,
            seeds,
            scheme,
            sim,
            ensemble,
            five_families,
            k,
            senses,
            out,
        } => {
            let pool = corpus.load()?;
            let mut featurize = FeaturizeConfig::default();
            featurize.cf.seed = seed;
            let lexicon = match senses {
                Some(p) => SenseLexicon::load(p)?,
                None => SenseLexicon::default(),
            };
            let nps = collect_nps(&pool, featurize.np);
            let coocs = featurize_all(&pool, &nps, &lexicon, &featurize)?;
            let config = ExpandConfig {
                scheme: match scheme {
                    SchemeArg::Count => Scheme::Count,
                    SchemeArg::Tfidf => Scheme::Tfidf,
                    SchemeArg::TfidfSum => Scheme::TfidfSum,
                },
                sim: match sim {
                    SimArg::Cosine => Similarity::Cosine,
                    SimArg::Context => Similarity::Context,
                },
                ensemble,
                grouping: if five_families { FamilyGrouping::Five } else { FamilyGrouping::Six },
                k,
            };
            let seed_refs: Vec<&str> = seeds.iter().map(String::as_str).collect();
            let ranked = esegraph::expand(&seed_refs, &nps, &coocs, &config)?;
            emit(out.as_deref(), &ranked.to_tsv())
        }
        Command::Train {
            corpus,
            class,
            config,
            lexicon,
            out,
        } => {
            let pool = corpus.load()?.restrict_to_class(&class);
            let config: CrfConfig = match config {
                Some(p) => read_json(&p)?,
                None => CrfConfig::default(),
            };
            let lexicon = match lexicon {
                Some(p) => read_lines(&p)?,
                None => BTreeSet::new(),
            };
            let labels: Vec<_> = pool
                .sentences
                .iter()
                .map(|s| s.gold_labels().ok_or(Error::MissingGold(s.id)))
                .collect::<Result<_>>()?;
            let examples: Vec<Example<'_>> = pool
                .sentences
                .iter()
                .zip(&labels)
                .map(|(s, l)| Example {
                    tokens: &s.tokens,
                    labels: l.labels(),
                })
                .collect();
            let model = crf::train(&examples, &lexicon, &config)?;
            model.save(&out)
        }
        Command::Tag {
            corpus,
            model,
            class,
            out,
        } => {
            let model = SequenceModel::load(&model)?;
            let pool = corpus.load()?;
            let text = write_conll2003(&pool.sentences, &class, TagScheme::Bio, |s| Some(model.decode(&s.tokens)));
            emit(out.as_deref(), &text)
        }
        Command::Simulate {
            config,
            modes,
            runs,
            input,
            format,
            class,
            out,
        } => {
            let mut file: SimulateFile = match config {
                Some(p) => read_json(&p)?,
                None => SimulateFile::default(),
            };
            if !modes.is_empty() {
                file.modes = modes;
            }
            if let Some(r) = runs {
                file.runs = r;
            }
            if file.runs == 0 || file.modes.is_empty() {
                return Err(Error::Config("simulate needs at least one mode and one run".into()));
            }
            let gold = match (input, class) {
                (Some(path), Some(class)) => Some(load_corpus(path, format)?.restrict_to_class(&class)),
                _ => None,
            };
            let results = simulate(seed, file, gold)?;
            emit(out.as_deref(), &curves_csv(&results))
        }
        Command::Serve {
            config,
            host,
            port,
            corpus_dir,
            session_dir,
        } => {
            let mut service = ServiceConfig::load(config.as_deref())?;
            if let Some(h) = host {
                service.host = h;
            }
            if let Some(p) = port {
                service.port = p;
            }
            if let Some(d) = corpus_dir {
                service.corpus_dir = d;
            }
            if let Some(d) = session_dir {
                service.session_dir = d;
            }
            service.featurize.cf.seed = seed;
            annoloop_service::serve_blocking(service)
        }
        Command::Fixture {
            sentences,
            entity_rate,
            out,
        } => {
            let config = FixtureConfig {
                sentences,
                entity_rate,
                seed,
                ..FixtureConfig::default()
            };
            let pool = generate(&config).restrict_to_class(TARGET_CLASS);
            let text = write_conll2003(&pool.sentences, TARGET_CLASS, TagScheme::Bio, |s| s.gold_labels());
            emit(out.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
