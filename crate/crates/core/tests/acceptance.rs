//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use common::*;
use subseg::corpus::{count_substrings, marked_word_counts, Corpus, CorpusKind};
use subseg::loader::wire::{decode_payload, encode_frame};
use subseg::loader::{Minibatch, ServeConfig, StreamReader, TaskData};
use subseg::noise::{local_reorder, NoiseConfig, PipelineKind};
use subseg::schedule::{TaskKind, TaskSpec};
use subseg::trainers::{corpus_loglik, em_step, seed_lexicon, train_emprune, word_list, CountMode};
use subseg::unigram::{marginal_logprob, sample_segment, taboo_sample, viterbi_segment};
use subseg::{EmPruneConfig, Lexicon, MixSchedule, DEFAULT_MARKER};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn lattice_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let alphabet = ['a', 'b', 'c', 'd'];
    let mut worst: f64 = 0.0;
    let mut model = random_lexicon(&mut r, &alphabet, 6);
    for i in 0..500 {
        if i % 10 == 0 {
            model = random_lexicon(&mut r, &alphabet, 6);
        }
        let len = r.gen_range(1..=8);
        let word: String = (0..len)
            .map(|_| if r.gen_bool(0.03) { 'z' } else { *alphabet.choose(&mut r).unwrap() })
            .collect();
        let exact = log_sum_exp(brute_force(&model, &word).into_iter().map(|(_, lp)| lp));
        let got = marginal_logprob(&model, &word);
        let diff = (got - exact).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-10, || format!("{word}: marginal {got} vs {exact}"))?;
        let best = brute_force_best(&model, &word).0;
        let vit = viterbi_segment(&model, &word).morphs;
        ensure(vit == best, || format!("{word}: viterbi {vit:?} vs argmax {best:?}"))?;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("500 words, max |Δ| = {worst:.1e}, {:.2?}", start.elapsed()))
}

fn ffbs_exactness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(202);
    let alphabet = ['a', 'b', 'c'];
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let model = random_lexicon(&mut r, &alphabet, 6);
        let len = r.gen_range(4..=6);
        let word: String = (0..len).map(|_| *alphabet.choose(&mut r).unwrap()).collect();
        let exact = brute_force(&model, &word);
        let z = log_sum_exp(exact.iter().map(|(_, lp)| *lp));
        let n = 100_000;
        let mut counts: HashMap<Vec<String>, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(sample_segment(&model, &word, 1.0, &mut r).unwrap().morphs).or_default() += 1;
        }
        let mut l1 = 0.0;
        for (seg, lp) in &exact {
            let emp = counts.remove(seg).unwrap_or(0) as f64 / n as f64;
            l1 += (emp - (lp - z).exp()).abs();
        }
        ensure(counts.is_empty(), || format!("{word}: sampled a segmentation outside the lattice"))?;
        worst = worst.max(l1);
        ensure(l1 <= 0.02, || format!("{word}: L1 {l1:.4}"))?;
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("20 words x 100k samples, max L1 = {worst:.4}, {:.2?}", start.elapsed()))
}

fn training_words(corpus: &Corpus) -> Vec<(String, u64)> {
    word_list(&marked_word_counts(corpus, DEFAULT_MARKER))
}

fn em_monotonicity() -> Outcome {
    let corpus = synthetic_corpus("em", "xx", 303, 10_000);
    let counts = count_substrings(&corpus, 24, 100_000, Some(DEFAULT_MARKER));
    let words = training_words(&corpus);
    let mut model: Lexicon = seed_lexicon(&counts, 100_000).map_err(|e| e.to_string())?;
    let mut lls = vec![corpus_loglik(&model, &words, CountMode::Tokens)];
    for _ in 0..10 {
        model = em_step(&model, &words, CountMode::Tokens).map_err(|e| e.to_string())?.0;
        lls.push(corpus_loglik(&model, &words, CountMode::Tokens));
    }
    for w in lls.windows(2) {
        ensure(w[1] >= w[0] - 1e-9 * w[0].abs(), || format!("log-likelihood fell: {} -> {}", w[0], w[1]))?;
    }
    Ok(format!(
        "10k sentences, log-likelihood {:.1} -> {:.1} over 10 steps",
        lls[0],
        lls[10]
    ))
}

fn exact_size(corpus: &Corpus) -> Result<(Lexicon, String), String> {
    let start = Instant::now();
    let counts = count_substrings(corpus, 24, 1_000_000, Some(DEFAULT_MARKER));
    let words = training_words(corpus);
    let config = EmPruneConfig {
        target_vocab: 2000,
        ..EmPruneConfig::default()
    };
    let outcome = train_emprune(&counts, &words, &config).map_err(|e| e.to_string())?;
    let lex = outcome.lexicon;
    let alphabet: BTreeSet<char> = words.iter().flat_map(|(w, _)| w.chars()).collect();
    ensure(lex.num_multi() == 2000, || format!("{} multi-character morphs", lex.num_multi()))?;
    ensure(lex.len() == 2000 + alphabet.len(), || {
        format!("{} morphs for alphabet of {}", lex.len(), alphabet.len())
    })?;
    within(start.elapsed(), Duration::from_secs(300))?;
    let detail = format!(
        "50k sentences, {} seed substrings -> 2000 + {} characters in {} phases, {:.2?}",
        counts.len(),
        alphabet.len(),
        outcome.history.len(),
        start.elapsed()
    );
    Ok((lex, detail))
}

fn taboo_invariant(model: &Lexicon, corpus: &Corpus) -> Outcome {
    let mut r = rng(505);
    let tokens: Vec<&str> = corpus.sentences.iter().flat_map(|s| s.split_whitespace()).collect();
    let mut distinct_pairs = 0;
    for _ in 0..10_000 {
        let word = format!("{DEFAULT_MARKER}{}", tokens.choose(&mut r).unwrap());
        let (a, b) = taboo_sample(model, &word, 1.0, &mut r).map_err(|e| e.to_string())?;
        ensure(a.concat() == word && b.concat() == word, || format!("{word}: {a:?} / {b:?} do not detokenize"))?;
        let multi = |s: &subseg::Segmentation| -> BTreeSet<String> {
            s.morphs.iter().filter(|m| m.chars().count() >= 2).cloned().collect()
        };
        let shared: Vec<String> = multi(&a).intersection(&multi(&b)).cloned().collect();
        ensure(shared.is_empty(), || format!("{word}: both use {shared:?}"))?;
        distinct_pairs += (a.morphs != b.morphs) as usize;
    }
    Ok(format!("10k words, no shared morphs, {distinct_pairs} pairs differ"))
}

fn reorder_bound() -> Outcome {
    let mut r = rng(606);
    for k in 0..=3u32 {
        for _ in 0..100_000 {
            let n = r.gen_range(1..=40);
            let idx: Vec<usize> = (0..n).collect();
            let out = local_reorder(&idx, k as f64, &mut r);
            let mut sorted = out.clone();
            sorted.sort_unstable();
            ensure(sorted == idx, || format!("k={k}: not a permutation: {out:?}"))?;
            if k == 0 {
                ensure(out == idx, || format!("k=0 moved tokens: {out:?}"))?;
            }
            for (pos, &orig) in out.iter().enumerate() {
                ensure(pos.abs_diff(orig) <= k as usize, || {
                    format!("k={k}: token {orig} moved to {pos}")
                })?;
            }
        }
    }
    Ok("100k draws for each k in 0..=3".into())
}

fn decode_all(bytes: &[u8]) -> Result<Vec<Minibatch>, String> {
    StreamReader::new(bytes)
        .map_err(|e| e.to_string())?
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())
}

fn schedule_fidelity(model: &Arc<Lexicon>) -> Outcome {
    let schedule = three_phase();
    let cfg = ServeConfig {
        seed: 7,
        examples_per_step: 8,
        bucket_size: 8,
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..ServeConfig::default()
    };
    let loader = loader(model.clone(), five_tasks(2000, 700, 1, 3), schedule.clone(), cfg);
    let steps = 125_000;
    let mut out = Vec::new();
    let report = loader.serve(&mut out, Some(steps)).map_err(|e| e.to_string())?;
    ensure(report.skipped == 0, || format!("{} examples filtered", report.skipped))?;
    ensure(report.examples == 1_000_000, || format!("{} examples served", report.examples))?;
    let mut counts = vec![[0u64; 5]; 3];
    let (mut last_phase0_step, mut first_lrl_step) = (0u32, u32::MAX);
    for b in decode_all(&out)? {
        let phase = schedule.phase_index(b.step as u64);
        counts[phase][b.task_id as usize] += b.rows() as u64;
        if b.task_id == 2 || b.task_id == 3 {
            last_phase0_step = last_phase0_step.max(b.step);
        }
        if b.task_id == 1 {
            first_lrl_step = first_lrl_step.min(b.step);
        }
    }
    let mut worst: f64 = 0.0;
    for (phase, row) in counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        let mix = schedule.mixture_at(schedule.phases()[phase].start_step);
        for task in 0..5u16 {
            let want = mix.get(&task).copied().unwrap_or(0.0);
            let got = row[task as usize] as f64 / total as f64;
            worst = worst.max((got - want).abs());
            ensure((got - want).abs() <= 0.005, || {
                format!("phase {phase} task {task}: {got:.4} vs {want:.2} over {total} examples")
            })?;
        }
    }
    ensure(last_phase0_step == 39_999 && first_lrl_step == 40_000, || {
        format!("switch observed at {last_phase0_step}/{first_lrl_step}, expected 39999/40000")
    })?;
    Ok(format!(
        "1M examples over {steps} steps, max |Δ| = {worst:.4}, switch at step 40000"
    ))
}

fn batch_budget(model: &Arc<Lexicon>, noise: &NoiseConfig) -> Outcome {
    let cfg = ServeConfig {
        seed: 8,
        noise: noise.clone(),
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..ServeConfig::default()
    };
    let steps = 100_000u64.div_ceil(cfg.examples_per_step as u64);
    let loader = loader(model.clone(), five_tasks(100_000, 800, 3, 14), three_phase(), cfg);
    let mut out = Vec::new();
    let report = loader.serve(&mut out, Some(steps)).map_err(|e| e.to_string())?;
    let batches = loader.batches(steps).map_err(|e| e.to_string())?;
    let mut encoded = Vec::new();
    subseg::loader::wire::write_header(&mut encoded, loader.vocabulary().hash16()).unwrap();
    let mut max_cost = 0;
    for b in &batches {
        b.check(9200, 200).map_err(|e| format!("step {}: {e}", b.step))?;
        max_cost = max_cost.max(b.token_cost());
        let frame = encode_frame(b).map_err(|e| e.to_string())?;
        let back = decode_payload(&frame[4..], 0).map_err(|e| e.to_string())?;
        ensure(&back == b, || format!("step {}: frame does not round-trip", b.step))?;
        encoded.extend(frame);
    }
    ensure(encoded == out, || "served stream differs from the encoded batches".into())?;
    ensure(decode_all(&out)? == batches, || "decoded stream differs from the batches".into())?;
    Ok(format!(
        "{} examples in {} batches, max cost {max_cost} <= 9200, all frames round-trip",
        report.examples,
        batches.len()
    ))
}

fn write_lines(path: &std::path::Path, lines: &[String]) {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    for l in lines {
        writeln!(f, "{l}").unwrap();
    }
}

fn determinism(model: &Lexicon) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    for (i, lang) in ["en", "et", "fi"].iter().enumerate() {
        write_lines(&d.join(format!("{lang}.txt")), &synthetic_sentences(900 + i as u64, 5000, 3, 14));
    }
    std::fs::write(d.join("lex.txt"), model.to_file_string()).unwrap();
    let config = "\
seed = 11
model.lexicon = lex.txt
corpus.en.path = en.txt
corpus.en.language = en
corpus.et.path = et.txt
corpus.et.language = et
corpus.fi.path = fi.txt
corpus.fi.language = fi
task.a_en_et.kind = translation
task.a_en_et.source = en
task.a_en_et.target = et
task.a_en_et.corpus = en, et
task.b_en_fi.kind = translation
task.b_en_fi.source = en
task.b_en_fi.target = fi
task.b_en_fi.corpus = en, fi
task.c_en_ae.kind = autoencoder
task.c_en_ae.source = en
task.c_en_ae.corpus = en
task.d_et_ae.kind = autoencoder
task.d_et_ae.source = et
task.d_et_ae.corpus = et
task.e_fi_ae.kind = autoencoder
task.e_fi_ae.source = fi
task.e_fi_ae.corpus = fi
task.e_fi_ae.pipeline = mono-taboo
schedule.preset = 3-phase
schedule.boundaries = 300, 600
schedule.role.src_hrl = a_en_et
schedule.role.src_lrl = b_en_fi
schedule.role.src_ae = c_en_ae
schedule.role.hrl_ae = d_et_ae
schedule.role.lrl_ae = e_fi_ae
noise.reorder_k = 3
noise.p_drop = 0.1
noise.p_substitute = 0.1
noise.mask = <mask>
loader.examples_per_step = 64
";
    std::fs::write(d.join("run.cfg"), config).unwrap();
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let path = d.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_subseg"))
            .args(["serve", "--config"])
            .arg(d.join("run.cfg"))
            .args(["--steps", "1000", "--out"])
            .arg(format!("file:{}", path.display()))
            .stderr(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("serve exited with {status}"))?;
        std::fs::read(&path).map_err(|e| e.to_string())
    };
    let a = run("a.bin")?;
    let b = run("b.bin")?;
    ensure(a == b, || "streams differ".into())?;
    let frames = decode_all(&a)?;
    let last = frames.last().map_or(0, |f| f.step);
    ensure(last == 999, || format!("last frame is step {last}"))?;
    Ok(format!("two 1000-step serves, {} bytes and {} frames each, identical", a.len(), frames.len()))
}

fn throughput(model: &Arc<Lexicon>, noise: &NoiseConfig) -> Outcome {
    let sentences = synthetic_sentences(1000, 100_000, 3, 14);
    let corpus = Arc::new(Corpus::new("mono", "fi", CorpusKind::Monolingual, sentences));
    let task = TaskData {
        spec: TaskSpec {
            id: 0,
            name: "fi-ae".into(),
            kind: TaskKind::Autoencoder,
            source_language: "fi".into(),
            target_language: "fi".into(),
            pipeline: PipelineKind::MonoNoised,
            corpora: vec!["mono".into()],
            synthetic: false,
        },
        source: corpus,
        target: None,
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(4);
    let cfg = ServeConfig {
        seed: 12,
        noise: noise.clone(),
        workers,
        ..ServeConfig::default()
    };
    let schedule = MixSchedule::constant(BTreeMap::from([(0u16, 1.0)])).unwrap();
    let loader = loader(model.clone(), vec![task], schedule, cfg);
    let steps = 60;
    let start = Instant::now();
    let report = loader.serve(std::io::sink(), Some(steps)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let rate = report.batches as f64 / secs;
    ensure(rate >= 20.0, || {
        format!("{rate:.1} batches/s ({} batches in {secs:.2} s, {workers} workers)", report.batches)
    })?;
    Ok(format!(
        "{rate:.1} batches/s ({} batches, {} examples in {secs:.2} s, {workers} workers)",
        report.batches, report.examples
    ))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut record = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match res {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {name}: {detail} ({:.2?})", start.elapsed());
            }
        }
    };
    let noise = NoiseConfig {
        reorder_k: 3.0,
        p_drop: 0.1,
        p_substitute: 0.1,
        mask_symbol: Some("<mask>".into()),
        temperature: 1.0,
        ..NoiseConfig::default()
    };

    record("lattice oracle", &mut lattice_oracle);
    record("FFBS exactness", &mut ffbs_exactness);
    record("EM monotonicity", &mut em_monotonicity);

    let corpus = synthetic_corpus("train", "xx", 404, 50_000);
    let mut lexicon: Option<Arc<Lexicon>> = None;
    record("exact-size pruning", &mut || {
        let (lex, detail) = exact_size(&corpus)?;
        lexicon = Some(Arc::new(lex));
        Ok(detail)
    });
    let model = lexicon.unwrap_or_else(|| {
        let counts = count_substrings(&corpus, 1, 0, Some(DEFAULT_MARKER));
        Arc::new(seed_lexicon(&counts, counts.len()).unwrap())
    });

    record("taboo invariant", &mut || taboo_invariant(&model, &corpus));
    record("reorder bound", &mut reorder_bound);
    record("schedule fidelity", &mut || schedule_fidelity(&model));
    record("batch budget", &mut || batch_budget(&model, &noise));
    record("determinism", &mut || determinism(&model));
    record("throughput", &mut || throughput(&model, &noise));

    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
