//! Plain-text `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! recognized and may appear once. Relative paths are resolved against the
//! directory of the configuration file.
//!
//! | key | meaning |
//! |---|---|
//! | `seed` | master seed |
//! | `marker` | word-boundary marker character |
//! | `corpus.<name>.path`, `corpus.<name>.language` | a corpus file |
//! | `clean.max_chars`, `clean.min_letter_ratio` | line cleaning |
//! | `task.<name>.{id,kind,source,target,pipeline,corpus,synthetic}` | a task; `corpus` lists corpus names, source then target for parallel tasks |
//! | `schedule.preset`, `schedule.boundaries`, `schedule.role.<role>`, `schedule.mix.<task>` | a preset schedule |
//! | `phase.<n>.start`, `phase.<n>.weight.<task>` | an explicit schedule |
//! | `noise.{reorder_k,p_drop,p_insert,p_substitute,p_boundary,mask,insert_pool,temperature}` | serve-time noise |
//! | `loader.{token_budget,bucket_size,examples_per_step,min_len,max_len,workers}` | batching |
//! | `model.lexicon` | lexicon file used by `segment`, `serve` and `stats` |
//! | `train.{method,corpora,sample_lines,vocab_size,seed_size,em_iters,prune_proportion,alpha,count_mode,prior,max_substring_len,output}` | vocabulary training |

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::corpus::{load_corpus, load_parallel, CleaningRules, Corpus};
use crate::error::{Error, Result};
use crate::lexicon::MAX_MORPH_LEN;
use crate::loader::{ServeConfig, TaskData};
use crate::noise::{NoiseConfig, PipelineKind};
use crate::schedule::{builtin_schedule, MixSchedule, Phase, Preset, TaskId, TaskKind, TaskRoles, TaskSpec};
use crate::trainers::{Alpha, EmPruneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainMethod {
    #[default]
    EmPrune,
    Unigram,
    Bpe,
}

impl FromStr for TrainMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emprune" => Ok(TrainMethod::EmPrune),
            "unigram" => Ok(TrainMethod::Unigram),
            "bpe" => Ok(TrainMethod::Bpe),
            other => Err(Error::Config(format!("unknown training method {other:?}"))),
        }
    }
}

/// Parses `auto` or a positive number.
pub fn parse_alpha(s: &str) -> Result<Alpha<f64>> {
    if s == "auto" {
        return Ok(Alpha::Auto);
    }
    s.parse()
        .map(Alpha::Fixed)
        .map_err(|_| Error::Config(format!("alpha must be `auto` or a number, got {s:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub method: TrainMethod,
    /// Corpora to train on; empty means every configured corpus.
    pub corpora: Vec<String>,
    /// Balanced subsample size; `None` concatenates the corpora in full.
    pub sample_lines: Option<usize>,
    /// Multi-character morphs for the unigram methods, total symbols for BPE.
    pub vocab_size: usize,
    pub max_substring_len: usize,
    pub emprune: EmPruneConfig<f64>,
    pub output: Option<PathBuf>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            method: TrainMethod::default(),
            corpora: Vec::new(),
            sample_lines: None,
            vocab_size: 16_000,
            max_substring_len: MAX_MORPH_LEN,
            emprune: EmPruneConfig::default(),
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec {
    /// Equal weight on every task.
    Uniform,
    Preset {
        preset: Preset,
        boundaries: Vec<u64>,
        roles: BTreeMap<String, String>,
        mix: BTreeMap<String, f64>,
    },
    /// Phase start and task weights, by phase number.
    Phases(BTreeMap<u32, (u64, BTreeMap<String, f64>)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub marker: Option<char>,
    pub corpora: BTreeMap<String, CorpusEntry>,
    pub cleaning: CleaningRules,
    pub tasks: Vec<TaskSpec>,
    pub schedule: ScheduleSpec,
    pub noise: NoiseConfig,
    pub loader: ServeConfig,
    pub lexicon: Option<PathBuf>,
    pub train: TrainSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            marker: None,
            corpora: BTreeMap::new(),
            cleaning: CleaningRules::default(),
            tasks: Vec::new(),
            schedule: ScheduleSpec::Uniform,
            noise: NoiseConfig::default(),
            loader: ServeConfig::default(),
            lexicon: None,
            train: TrainSettings::default(),
        }
    }
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| Error::Format {
                what: "config",
                line,
                msg: format!("invalid value {v:?} for {key}"),
            }),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.parse(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Names `x` of keys `<prefix>x.<rest>` or `<prefix>x`.
    fn names(&self, prefix: &str) -> BTreeSet<String> {
        self.map
            .keys()
            .filter_map(|k| k.strip_prefix(prefix))
            .map(|rest| rest.split('.').next().unwrap_or(rest).to_string())
            .collect()
    }

    fn required(&mut self, key: &str) -> Result<(String, usize)> {
        self.take(key)
            .ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Parses configuration text. Relative paths are joined to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                what: "config",
                line: i + 1,
                msg: "expected key = value".into(),
            })?;
            let k = k.trim().to_string();
            if map.insert(k.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(Error::Format {
                    what: "config",
                    line: i + 1,
                    msg: format!("duplicate key {k}"),
                });
            }
        }
        let mut e = Entries { map };
        let resolve = |p: String| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let mut cfg = RunConfig::default();
        e.set("seed", &mut cfg.seed)?;
        cfg.marker = e.parse("marker")?;

        for name in e.names("corpus.") {
            let path = resolve(e.required(&format!("corpus.{name}.path"))?.0);
            let language = e.required(&format!("corpus.{name}.language"))?.0;
            cfg.corpora.insert(name, CorpusEntry { path, language });
        }
        e.set("clean.max_chars", &mut cfg.cleaning.max_raw_chars)?;
        e.set("clean.min_letter_ratio", &mut cfg.cleaning.min_letter_ratio)?;

        let task_names = e.names("task.");
        for (pos, name) in task_names.iter().enumerate() {
            let key = |f: &str| format!("task.{name}.{f}");
            let kind: TaskKind = e.required(&key("kind"))?.0.parse()?;
            let source_language = e.required(&key("source"))?.0;
            let target_language = e.parse(&key("target"))?.unwrap_or_else(|| source_language.clone());
            let pipeline: PipelineKind = match e.take(&key("pipeline")) {
                Some((v, _)) => v.parse()?,
                None if kind == TaskKind::Autoencoder => PipelineKind::MonoNoised,
                None => PipelineKind::Parallel,
            };
            let corpora = list(&e.required(&key("corpus"))?.0);
            let synthetic = e.parse(&key("synthetic"))?.unwrap_or(kind == TaskKind::Backtranslation);
            let id: TaskId = e.parse(&key("id"))?.unwrap_or(pos as TaskId);
            cfg.tasks.push(TaskSpec {
                id,
                name: name.clone(),
                kind,
                source_language,
                target_language,
                pipeline,
                corpora,
                synthetic,
            });
        }

        let preset: Option<Preset> = e.parse("schedule.preset")?;
        let phase_numbers = e.names("phase.");
        cfg.schedule = match (preset, phase_numbers.is_empty()) {
            (Some(_), false) => {
                return Err(Error::Config("give either schedule.preset or phase.* keys, not both".into()))
            }
            (Some(preset), true) => {
                let boundaries = match e.take("schedule.boundaries") {
                    Some((v, line)) => list(&v)
                        .iter()
                        .map(|b| b.parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::Format {
                            what: "config",
                            line,
                            msg: format!("invalid boundaries {v:?}"),
                        })?,
                    None => Vec::new(),
                };
                let mut roles = BTreeMap::new();
                for role in e.names("schedule.role.") {
                    roles.insert(role.clone(), e.required(&format!("schedule.role.{role}"))?.0);
                }
                let mut mix = BTreeMap::new();
                for task in e.names("schedule.mix.") {
                    mix.insert(task.clone(), e.parse(&format!("schedule.mix.{task}"))?.unwrap_or(0.0));
                }
                ScheduleSpec::Preset {
                    preset,
                    boundaries,
                    roles,
                    mix,
                }
            }
            (None, false) => {
                let mut phases = BTreeMap::new();
                for n in phase_numbers {
                    let num: u32 = n
                        .parse()
                        .map_err(|_| Error::Config(format!("phase number {n:?} is not an integer")))?;
                    let start: u64 = e
                        .parse(&format!("phase.{n}.start"))?
                        .ok_or_else(|| Error::Config(format!("missing required key phase.{n}.start")))?;
                    let mut weights = BTreeMap::new();
                    for task in e.names(&format!("phase.{n}.weight.")) {
                        weights.insert(task.clone(), e.parse(&format!("phase.{n}.weight.{task}"))?.unwrap_or(0.0));
                    }
                    phases.insert(num, (start, weights));
                }
                ScheduleSpec::Phases(phases)
            }
            (None, true) => ScheduleSpec::Uniform,
        };

        let n = &mut cfg.noise;
        e.set("noise.reorder_k", &mut n.reorder_k)?;
        e.set("noise.p_drop", &mut n.p_drop)?;
        e.set("noise.p_insert", &mut n.p_insert)?;
        e.set("noise.p_substitute", &mut n.p_substitute)?;
        e.set("noise.p_boundary", &mut n.p_boundary)?;
        e.set("noise.temperature", &mut n.temperature)?;
        n.mask_symbol = e.take("noise.mask").map(|(v, _)| v);
        if let Some((v, _)) = e.take("noise.insert_pool") {
            n.insert_pool = v.split_whitespace().map(String::from).collect();
        }

        let l = &mut cfg.loader;
        e.set("loader.token_budget", &mut l.token_budget)?;
        e.set("loader.bucket_size", &mut l.bucket_size)?;
        e.set("loader.examples_per_step", &mut l.examples_per_step)?;
        e.set("loader.min_len", &mut l.min_len)?;
        e.set("loader.max_len", &mut l.max_len)?;
        e.set("loader.workers", &mut l.workers)?;

        cfg.lexicon = e.take("model.lexicon").map(|(v, _)| resolve(v));

        let t = &mut cfg.train;
        e.set("train.method", &mut t.method)?;
        if let Some((v, _)) = e.take("train.corpora") {
            t.corpora = list(&v);
        }
        t.sample_lines = e.parse("train.sample_lines")?;
        e.set("train.vocab_size", &mut t.vocab_size)?;
        e.set("train.max_substring_len", &mut t.max_substring_len)?;
        e.set("train.seed_size", &mut t.emprune.seed_size)?;
        e.set("train.em_iters", &mut t.emprune.em_iters_per_phase)?;
        e.set("train.prune_proportion", &mut t.emprune.prune_proportion)?;
        e.set("train.count_mode", &mut t.emprune.count_mode)?;
        e.set("train.prior", &mut t.emprune.prior)?;
        if let Some((v, _)) = e.take("train.alpha") {
            t.emprune.alpha = parse_alpha(&v)?;
        }
        t.output = e.take("train.output").map(|(v, _)| resolve(v));

        if let Some((key, (_, line))) = e.map.into_iter().min_by_key(|(_, (_, line))| *line) {
            return Err(Error::Format {
                what: "config",
                line,
                msg: format!("unknown key {key}"),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks cross-references and that every input file exists.
    pub fn validate(&self) -> Result<()> {
        for (name, c) in &self.corpora {
            if !c.path.is_file() {
                return Err(Error::Config(format!("corpus {name}: no such file {}", c.path.display())));
            }
        }
        if let Some(p) = &self.lexicon {
            if !p.is_file() {
                return Err(Error::Config(format!("model.lexicon: no such file {}", p.display())));
            }
        }
        let mut ids = BTreeSet::new();
        for t in &self.tasks {
            t.validate()?;
            if !ids.insert(t.id) {
                return Err(Error::Config(format!("duplicate task id {}", t.id)));
            }
            for c in &t.corpora {
                if !self.corpora.contains_key(c) {
                    return Err(Error::Config(format!("task {} refers to unknown corpus {c}", t.name)));
                }
            }
        }
        for c in &self.train.corpora {
            if !self.corpora.contains_key(c) {
                return Err(Error::Config(format!("train.corpora refers to unknown corpus {c}")));
            }
        }
        self.noise.validate()?;
        self.train.emprune.validate()?;
        if !self.tasks.is_empty() {
            self.mix_schedule()?;
        }
        Ok(())
    }

    fn task_id(&self, name: &str) -> Result<TaskId> {
        self.tasks
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.id)
            .ok_or_else(|| Error::Config(format!("unknown task {name}")))
    }

    pub fn mix_schedule(&self) -> Result<MixSchedule<f64>> {
        let weights = |m: &BTreeMap<String, f64>| -> Result<BTreeMap<TaskId, f64>> {
            m.iter().map(|(k, &w)| Ok((self.task_id(k)?, w))).collect()
        };
        match &self.schedule {
            ScheduleSpec::Uniform => {
                if self.tasks.is_empty() {
                    return Err(Error::Config("no tasks configured".into()));
                }
                MixSchedule::constant(self.tasks.iter().map(|t| (t.id, 1.0)).collect())
            }
            ScheduleSpec::Phases(phases) => MixSchedule::new(
                phases
                    .values()
                    .map(|(start, w)| {
                        Ok(Phase {
                            start_step: *start,
                            weights: weights(w)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            ScheduleSpec::Preset {
                preset,
                boundaries,
                roles,
                mix,
            } => {
                let mut r = TaskRoles::default();
                for (role, task) in roles {
                    let id = Some(self.task_id(task)?);
                    match role.as_str() {
                        "src_hrl" => r.src_hrl = id,
                        "src_lrl" => r.src_lrl = id,
                        "src_ae" => r.src_ae = id,
                        "hrl_ae" => r.hrl_ae = id,
                        "lrl_ae" => r.lrl_ae = id,
                        other => return Err(Error::Config(format!("unknown schedule role {other}"))),
                    }
                }
                let mix = if mix.is_empty() { None } else { Some(weights(mix)?) };
                builtin_schedule(*preset, &r, boundaries, mix.as_ref())
            }
        }
    }

    /// Loads each corpus named in `names` (all corpora when empty) with the
    /// configured cleaning rules.
    pub fn load_corpora(&self, names: &[String]) -> Result<Vec<Corpus>> {
        let all: Vec<String> = self.corpora.keys().cloned().collect();
        let names = if names.is_empty() { &all } else { names };
        names
            .iter()
            .map(|n| {
                let c = &self.corpora[n];
                let mut corpus = load_corpus(&c.path, &c.language, &self.cleaning)?;
                corpus.id = n.clone();
                Ok(corpus)
            })
            .collect()
    }

    /// Loads the corpora of every task. Parallel pairs are cleaned jointly;
    /// monolingual corpora are loaded once and shared.
    pub fn load_tasks(&self) -> Result<Vec<TaskData>> {
        let mut mono: BTreeMap<String, Arc<Corpus>> = BTreeMap::new();
        let mut out = Vec::new();
        for t in &self.tasks {
            let (source, target) = match t.pipeline {
                PipelineKind::Parallel => {
                    let (s, g) = (&self.corpora[&t.corpora[0]], &self.corpora[&t.corpora[1]]);
                    let (mut s_c, mut g_c) = load_parallel(
                        (&s.path, s.language.as_str()),
                        (&g.path, g.language.as_str()),
                        &self.cleaning,
                    )?;
                    s_c.id = t.corpora[0].clone();
                    g_c.id = t.corpora[1].clone();
                    (Arc::new(s_c), Some(Arc::new(g_c)))
                }
                PipelineKind::MonoNoised | PipelineKind::MonoTaboo => {
                    let name = &t.corpora[0];
                    let c = match mono.get(name) {
                        Some(c) => c.clone(),
                        None => {
                            let c = Arc::new(self.load_corpora(std::slice::from_ref(name))?.remove(0));
                            mono.insert(name.clone(), c.clone());
                            c
                        }
                    };
                    (c, None)
                }
            };
            out.push(TaskData {
                spec: t.clone(),
                source,
                target,
            });
        }
        Ok(out)
    }

    /// Target languages of all tasks, for the vocabulary's control tokens.
    pub fn target_languages(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.tasks.iter().map(|t| t.target_language.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Serve settings with the master seed and noise filled in.
    pub fn serve_config(&self) -> ServeConfig {
        ServeConfig {
            seed: self.seed,
            noise: self.noise.clone(),
            ..self.loader.clone()
        }
    }
}
