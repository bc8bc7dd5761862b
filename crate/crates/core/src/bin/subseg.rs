use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use subseg::config::{parse_alpha, RunConfig, TrainMethod};
use subseg::corpus::{balanced_subsample, count_substrings, load_corpus, marked_word_counts, Corpus, CorpusKind};
use subseg::loader::{Loader, Vocabulary};
use subseg::trainers::{train_bpe, train_emprune, train_sp_unigram, word_list, BpeModel, CountMode, Prior};
use subseg::unigram::{nbest_segment, segment_sentence, SegmentMode, Segmented};
use subseg::{Lexicon, DEFAULT_MARKER};

#[derive(Parser)]
#[command(name = "subseg", version, about = "Probabilistic subword segmentation and training-data streaming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a subword model on one or more corpora.
    TrainVocab(TrainArgs),
    /// Segment text with a trained model.
    Segment(SegmentArgs),
    /// Stream numericalized minibatches to a sink.
    Serve(ServeArgs),
    /// Report vocabulary and segmentation statistics.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Emprune,
    Unigram,
    Bpe,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Training corpus as PATH or PATH:LANG; repeatable.
    #[arg(long = "input")]
    inputs: Vec<String>,
    /// Multi-character morphs to keep (total symbols for bpe).
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Draw this many lines, balanced across the corpora.
    #[arg(long)]
    sample_lines: Option<usize>,
    #[arg(long)]
    seed_size: Option<usize>,
    #[arg(long)]
    em_iters: Option<usize>,
    #[arg(long)]
    prune_proportion: Option<f64>,
    /// Likelihood weight: `auto` or a positive number.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long, value_parser = ["tokens", "types", "log-dampened"])]
    count_mode: Option<String>,
    #[arg(long, value_parser = ["mdl", "off"])]
    prior: Option<String>,
    #[arg(long)]
    max_substring_len: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Viterbi,
    Sample,
    Nbest,
    Taboo,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    common: Common,
    /// Lexicon or BPE merge file.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Viterbi)]
    mode: Mode,
    /// Candidates per sentence in nbest mode.
    #[arg(long, default_value_t = 5)]
    nbest: usize,
    /// Sampling temperature.
    #[arg(long)]
    temperature: Option<f64>,
    /// Input text; standard input when absent.
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sink: `pipe`, `tcp:<addr>` or `file:<path>`.
    #[arg(long, default_value = "pipe")]
    out: String,
    /// Number of training steps to serve; unlimited when absent.
    #[arg(long)]
    steps: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Write the vocabulary file here.
    #[arg(long)]
    vocab_out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Text to analyse; the configured corpora when absent.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Width of the sentence-length histogram bins.
    #[arg(long, default_value_t = 10)]
    bin_width: usize,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<subseg::Error> for Failure {
    fn from(e: subseg::Error) -> Self {
        match e {
            subseg::Error::Config(msg) => Failure::Usage(msg),
            e @ subseg::Error::Format { what: "config", .. } => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::TrainVocab(a) => train_vocab(a),
        Command::Segment(a) => segment(a),
        Command::Serve(a) => serve(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p).map_err(|e| match e {
            subseg::Error::Io { .. } => Failure::Usage(e.to_string()),
            other => other.into(),
        })?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_lexicon(path: &Path) -> CliResult<Lexicon> {
    let f = File::open(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(Lexicon::read(BufReader::new(f))?)
}

fn model_path(flag: Option<PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    flag.or_else(|| cfg.lexicon.clone())
        .map_or_else(|| usage("no model given; use --model or model.lexicon"), Ok)
}

fn train_vocab(a: TrainArgs) -> CliResult {
    let mut cfg = load_config(&a.common)?;
    let t = &mut cfg.train;
    if let Some(m) = a.method {
        t.method = match m {
            Method::Emprune => TrainMethod::EmPrune,
            Method::Unigram => TrainMethod::Unigram,
            Method::Bpe => TrainMethod::Bpe,
        };
    }
    if let Some(v) = a.vocab_size {
        t.vocab_size = v;
    }
    if a.sample_lines.is_some() {
        t.sample_lines = a.sample_lines;
    }
    let e = &mut t.emprune;
    if let Some(v) = a.seed_size {
        e.seed_size = v;
    }
    if let Some(v) = a.em_iters {
        e.em_iters_per_phase = v;
    }
    if let Some(v) = a.prune_proportion {
        e.prune_proportion = v;
    }
    if let Some(v) = &a.alpha {
        e.alpha = parse_alpha(v)?;
    }
    if let Some(v) = &a.count_mode {
        e.count_mode = v.parse::<CountMode>()?;
    }
    if let Some(v) = &a.prior {
        e.prior = v.parse::<Prior>()?;
    }
    e.validate()?;
    if let Some(v) = a.max_substring_len {
        t.max_substring_len = v;
    }
    let output = a.output.or_else(|| t.output.clone());

    let corpora: Vec<Corpus> = if a.inputs.is_empty() {
        cfg.load_corpora(&cfg.train.corpora)?
    } else {
        a.inputs
            .iter()
            .map(|spec| {
                let (path, lang) = match spec.rsplit_once(':') {
                    Some((p, l)) if !l.is_empty() && !l.contains('/') => (p, l),
                    _ => (spec.as_str(), "und"),
                };
                load_corpus(path, lang, &cfg.cleaning)
            })
            .collect::<subseg::Result<_>>()?
    };
    if corpora.is_empty() {
        return usage("no training corpora; use --input or corpus.* keys");
    }
    let corpus = match cfg.train.sample_lines {
        Some(n) => balanced_subsample(&corpora, n, cfg.seed)?,
        None => {
            let sentences = corpora.iter().flat_map(|c| c.sentences.iter().cloned()).collect();
            Corpus::new("train", &corpora[0].language, CorpusKind::Monolingual, sentences)
        }
    };
    let marker = cfg.marker.unwrap_or(DEFAULT_MARKER);
    let words = word_list(&marked_word_counts(&corpus, marker));
    if words.is_empty() {
        return Err(Failure::Data("training corpus has no words".into()));
    }
    let t = &cfg.train;
    let mut out = open_output(output.as_deref())?;
    match t.method {
        TrainMethod::Bpe => {
            let model = train_bpe(&words, t.vocab_size)?;
            eprintln!("bpe: {} merges, {} symbols", model.merges.len(), model.vocab.len());
            model.write(&mut out)?;
        }
        TrainMethod::EmPrune | TrainMethod::Unigram => {
            let counts = count_substrings(&corpus, t.max_substring_len, t.emprune.seed_size, Some(marker));
            let mut em = t.emprune.clone();
            em.target_vocab = t.vocab_size;
            let lexicon = if t.method == TrainMethod::EmPrune {
                let outcome = train_emprune(&counts, &words, &em)?;
                eprintln!(
                    "emprune: {} multi-character morphs after {} phases, prior {:.3} + {:.4} x corpus {:.3} = {:.3}",
                    outcome.lexicon.num_multi(),
                    outcome.history.len(),
                    outcome.cost.prior_cost,
                    outcome.cost.alpha,
                    outcome.cost.corpus_cost,
                    outcome.cost.total
                );
                outcome.lexicon
            } else {
                let lexicon = train_sp_unigram(&counts, &words, t.vocab_size, &em)?;
                eprintln!("unigram: {} multi-character morphs", lexicon.num_multi());
                lexicon
            };
            lexicon.write(&mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

enum Model {
    Unigram(Lexicon),
    Bpe(BpeModel, char),
}

fn read_model(path: &Path, marker: char) -> CliResult<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    if text.starts_with("#subseg-bpe") {
        Ok(Model::Bpe(BpeModel::read(text.as_bytes(), std::iter::empty())?, marker))
    } else {
        Ok(Model::Unigram(Lexicon::read(text.as_bytes())?))
    }
}

/// Best `n` whole-sentence segmentations from per-word candidate lists.
fn combine_nbest(per_word: Vec<Vec<(Vec<String>, f64)>>, n: usize) -> Vec<(Vec<String>, f64)> {
    let mut acc: Vec<(Vec<String>, f64)> = vec![(Vec::new(), 0.0)];
    for cands in per_word {
        let mut next: Vec<(Vec<String>, f64)> = Vec::with_capacity(acc.len() * cands.len());
        for (prefix, s) in &acc {
            for (morphs, t) in &cands {
                let mut seq = prefix.clone();
                seq.extend(morphs.iter().cloned());
                next.push((seq, s + t));
            }
        }
        next.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        next.truncate(n);
        acc = next;
    }
    acc
}

fn segment(a: SegmentArgs) -> CliResult {
    let cfg = load_config(&a.common)?;
    let path = model_path(a.model, &cfg)?;
    let temperature = a.temperature.unwrap_or(cfg.noise.temperature);
    if !(temperature > 0.0) {
        return usage(format!("--temperature must be positive, got {temperature}"));
    }
    if a.mode == Mode::Nbest && a.nbest == 0 {
        return usage("--nbest must be at least 1");
    }
    let model = read_model(&path, cfg.marker.unwrap_or(DEFAULT_MARKER))?;
    let input: Box<dyn BufRead> = match &a.input {
        Some(p) => Box::new(BufReader::new(
            File::open(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufReader::new(io::stdin().lock())),
    };
    let mut out = open_output(a.output.as_deref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for line in input.lines() {
        let line = line.map_err(|e| Failure::Data(format!("reading input: {e}")))?;
        match &model {
            Model::Bpe(bpe, marker) => {
                if a.mode != Mode::Viterbi {
                    return usage("BPE models only support --mode viterbi");
                }
                let toks: Vec<String> = line
                    .split_whitespace()
                    .flat_map(|w| bpe.segment(&format!("{marker}{w}")))
                    .collect();
                writeln!(out, "{}", toks.join(" "))?;
            }
            Model::Unigram(lex) => match a.mode {
                Mode::Nbest => {
                    let per_word = line
                        .split_whitespace()
                        .map(|w| {
                            Ok(nbest_segment(lex, &format!("{}{w}", lex.marker()), a.nbest)?
                                .into_iter()
                                .map(|(s, lp)| (s.morphs, lp))
                                .collect())
                        })
                        .collect::<subseg::Result<Vec<_>>>()?;
                    for (toks, lp) in combine_nbest(per_word, a.nbest) {
                        writeln!(out, "{lp:.6}\t{}", toks.join(" "))?;
                    }
                    writeln!(out)?;
                }
                mode => {
                    let mode = match mode {
                        Mode::Viterbi => SegmentMode::Viterbi,
                        Mode::Sample => SegmentMode::Sample,
                        _ => SegmentMode::Taboo,
                    };
                    match segment_sentence(lex, &line, mode, temperature, &mut rng)? {
                        Segmented::Single(t) => writeln!(out, "{}", t.join(" "))?,
                        Segmented::Pair(s, t) => writeln!(out, "{}\t{}", s.join(" "), t.join(" "))?,
                    }
                }
            },
        }
    }
    out.flush()?;
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    let mut cfg = load_config(&a.common)?;
    if let Some(w) = a.workers {
        if w == 0 {
            return usage("--workers must be at least 1");
        }
        cfg.loader.workers = w;
    }
    if cfg.tasks.is_empty() {
        return usage("serve needs task.* keys in the configuration");
    }
    let path = model_path(a.model, &cfg)?;
    let lexicon = Arc::new(read_lexicon(&path)?);
    let vocab = Arc::new(Vocabulary::build(&lexicon, &cfg.target_languages())?);
    if let Some(p) = &a.vocab_out {
        let mut w = open_output(Some(p))?;
        vocab.write(&mut w)?;
        w.flush()?;
    }
    let loader = Loader::new(lexicon, vocab, cfg.load_tasks()?, cfg.mix_schedule()?, cfg.serve_config())?;
    let report = if a.out == "pipe" {
        loader.serve(io::stdout().lock(), a.steps)?
    } else if let Some(p) = a.out.strip_prefix("file:") {
        let f = File::create(p).map_err(|e| Failure::Data(format!("{p}: {e}")))?;
        loader.serve(f, a.steps)?
    } else if let Some(addr) = a.out.strip_prefix("tcp:") {
        let listener = TcpListener::bind(addr).map_err(|e| Failure::Data(format!("bind {addr}: {e}")))?;
        eprintln!("listening on {}", listener.local_addr()?);
        let (stream, peer) = listener.accept()?;
        eprintln!("serving {peer}");
        loader.serve(stream, a.steps)?
    } else {
        return usage(format!("--out must be pipe, tcp:<addr> or file:<path>, got {:?}", a.out));
    };
    eprintln!(
        "served {} steps, {} batches, {} examples ({} filtered), {} bytes{}",
        report.steps,
        report.batches,
        report.examples,
        report.skipped,
        report.bytes,
        if report.sink_closed { "; sink closed" } else { "" }
    );
    Ok(())
}

fn stats(a: StatsArgs) -> CliResult {
    let cfg = load_config(&a.common)?;
    let path = model_path(a.model, &cfg)?;
    let lex = read_lexicon(&path)?;
    let sentences: Vec<String> = match &a.input {
        Some(p) => load_corpus(p, "und", &cfg.cleaning)?.sentences,
        None if !cfg.corpora.is_empty() => cfg
            .load_corpora(&[])?
            .into_iter()
            .flat_map(|c| c.sentences)
            .collect(),
        None => return usage("no text given; use --input or corpus.* keys"),
    };
    if a.bin_width == 0 {
        return usage("--bin-width must be at least 1");
    }
    let (mut words, mut covered, mut subwords) = (0u64, 0u64, 0u64);
    let mut histogram: Vec<u64> = Vec::new();
    for s in &sentences {
        let mut len = 0;
        for w in s.split_whitespace() {
            let marked = format!("{}{w}", lex.marker());
            let seg = subseg::unigram::viterbi_segment(&lex, &marked);
            words += 1;
            covered += seg.unknown.is_empty() as u64;
            subwords += seg.len() as u64;
            len += seg.len();
        }
        let bin = len / a.bin_width;
        if histogram.len() <= bin {
            histogram.resize(bin + 1, 0);
        }
        histogram[bin] += 1;
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut out = open_output(None)?;
    writeln!(out, "vocab_size\t{}", lex.len())?;
    writeln!(out, "multi_char_morphs\t{}", lex.num_multi())?;
    writeln!(out, "alphabet_size\t{}", lex.alphabet().len())?;
    writeln!(out, "sentences\t{}", sentences.len())?;
    writeln!(out, "words\t{words}")?;
    writeln!(out, "coverage\t{:.6}", ratio(covered, words))?;
    writeln!(out, "subwords_per_word\t{:.6}", ratio(subwords, words))?;
    for (i, c) in histogram.iter().enumerate() {
        writeln!(
            out,
            "length\t{}-{}\t{c}",
            i * a.bin_width,
            (i + 1) * a.bin_width - 1
        )?;
    }
    out.flush()?;
    Ok(())
}
