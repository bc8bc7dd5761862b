//! The producer loop.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;

use crossbeam_channel::bounded;
use rand::seq::SliceRandom;
use rand::Rng;

use super::batch::{assemble_batches, Encoded, Minibatch};
use super::keyed_rng;
use super::vocab::{target_token, Vocabulary, SYNTHETIC};
use super::wire::{encode_frame, write_header};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::lexicon::SubwordLexicon;
use crate::noise::{apply_pipeline, Example, NoiseConfig, PipelineKind};
use crate::scalar::Scalar;
use crate::schedule::{MixSchedule, TaskId, TaskSpec};

const KEY_PLAN: u64 = 1;
const KEY_EXAMPLE: u64 = 2;
const KEY_BATCH: u64 = 3;
const KEY_SHUFFLE: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ServeConfig {
    pub seed: u64,
    pub token_budget: usize,
    pub bucket_size: usize,
    /// Examples drawn from the task mixture per training step.
    pub examples_per_step: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub workers: usize,
    pub noise: NoiseConfig,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            seed: 0,
            token_budget: 9200,
            bucket_size: 2048,
            examples_per_step: 2048,
            min_len: 1,
            max_len: 200,
            workers: 4,
            noise: NoiseConfig::default(),
        }
    }
}

impl ServeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.max_len > u16::MAX as usize {
            return bad(format!("max_len {} exceeds {}", self.max_len, u16::MAX));
        }
        if self.min_len > self.max_len {
            return bad(format!("min_len {} exceeds max_len {}", self.min_len, self.max_len));
        }
        if self.token_budget < self.max_len {
            return bad(format!(
                "token budget {} is smaller than max_len {}",
                self.token_budget, self.max_len
            ));
        }
        if self.examples_per_step == 0 || self.bucket_size == 0 || self.workers == 0 {
            return bad("examples_per_step, bucket_size and workers must be positive".into());
        }
        self.noise.validate()
    }
}

/// A task with its loaded corpora. Parallel tasks carry aligned source and
/// target corpora; monolingual tasks only a source.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub spec: TaskSpec,
    pub source: Arc<Corpus>,
    pub target: Option<Arc<Corpus>>,
}

impl TaskData {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    fn example(&self, index: usize) -> Example<'_> {
        match &self.target {
            Some(t) => Example::Pair(&self.source.sentences[index], &t.sentences[index]),
            None => Example::Mono(&self.source.sentences[index]),
        }
    }
}

/// Runs sentence `index` of `task` through its pipeline, prepends the
/// control tokens to the source and applies the length filter. Returns
/// `None` when either side is filtered out.
pub fn next_example<F: Scalar, R: Rng + ?Sized>(
    task: &TaskData,
    index: usize,
    model: &SubwordLexicon<F>,
    cfg: &ServeConfig,
    rng: &mut R,
) -> Result<Option<(Vec<String>, Vec<String>)>> {
    let (body, tgt) = apply_pipeline(task.example(index), task.spec.pipeline, model, &cfg.noise, rng)?;
    let mut src = Vec::with_capacity(body.len() + 2);
    src.push(target_token(&task.spec.target_language));
    if task.spec.synthetic {
        src.push(SYNTHETIC.to_string());
    }
    src.extend(body);
    let ok = |n: usize| (cfg.min_len..=cfg.max_len).contains(&n);
    Ok((ok(src.len()) && ok(tgt.len())).then_some((src, tgt)))
}

/// Epoch-cycling cursor over one task's sentences.
#[derive(Debug, Clone)]
struct Cursor {
    task: TaskId,
    order: Vec<u32>,
    pos: usize,
    epoch: u64,
}

impl Cursor {
    fn new(task: TaskId, len: usize) -> Self {
        Cursor {
            task,
            order: (0..len as u32).collect(),
            pos: len,
            epoch: u64::MAX,
        }
    }

    fn next(&mut self, seed: u64) -> usize {
        if self.pos == self.order.len() {
            self.epoch = self.epoch.wrapping_add(1);
            self.order.sort_unstable();
            self.order
                .shuffle(&mut keyed_rng(&[seed, KEY_SHUFFLE, self.task as u64, self.epoch]));
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1] as usize
    }
}

/// Counters of a finished serve.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServeReport {
    pub steps: u64,
    pub batches: u64,
    pub examples: u64,
    pub skipped: u64,
    pub bytes: u64,
    /// True when the sink closed before the requested steps were written.
    pub sink_closed: bool,
}

/// Output of one step: its batches and how many examples were filtered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutput {
    pub step: u64,
    pub batches: Vec<Minibatch>,
    pub skipped: u64,
}

/// Immutable serving state shared by all workers.
pub struct Loader<F> {
    model: Arc<SubwordLexicon<F>>,
    vocab: Arc<Vocabulary>,
    tasks: BTreeMap<TaskId, TaskData>,
    schedule: MixSchedule<F>,
    cfg: ServeConfig,
}

/// Sentence assignments of one step, in example order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepPlan {
    pub step: u64,
    pub items: Vec<(TaskId, usize)>,
}

/// Sequential source of step plans. Each example's task is drawn from the
/// schedule at that step; its sentence comes from the task's cursor.
pub struct Planner<'a, F> {
    loader: &'a Loader<F>,
    cursors: BTreeMap<TaskId, Cursor>,
    step: u64,
}

impl<F: Scalar> Iterator for Planner<'_, F> {
    type Item = StepPlan;

    fn next(&mut self) -> Option<StepPlan> {
        let t = self.step;
        self.step += 1;
        let seed = self.loader.cfg.seed;
        let mut rng = keyed_rng(&[seed, KEY_PLAN, t]);
        let items = (0..self.loader.cfg.examples_per_step)
            .map(|_| {
                let task = self.loader.schedule.sample_task(t, &mut rng);
                let idx = self.cursors.get_mut(&task).expect("validated task").next(seed);
                (task, idx)
            })
            .collect();
        Some(StepPlan { step: t, items })
    }
}

impl<F: Scalar> Loader<F> {
    pub fn new(
        model: Arc<SubwordLexicon<F>>,
        vocab: Arc<Vocabulary>,
        tasks: Vec<TaskData>,
        schedule: MixSchedule<F>,
        cfg: ServeConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut by_id = BTreeMap::new();
        for t in tasks {
            t.spec.validate()?;
            if t.is_empty() {
                return Err(Error::Config(format!("task {} has an empty corpus", t.spec.name)));
            }
            let wants_pair = t.spec.pipeline == PipelineKind::Parallel;
            match &t.target {
                Some(tgt) if wants_pair && tgt.len() != t.source.len() => {
                    return Err(Error::Misaligned {
                        left: t.source.id.clone(),
                        left_lines: t.source.len(),
                        right: tgt.id.clone(),
                        right_lines: tgt.len(),
                    })
                }
                Some(_) if wants_pair => {}
                None if !wants_pair => {}
                _ => {
                    return Err(Error::Config(format!(
                        "task {} corpora do not match pipeline {:?}",
                        t.spec.name, t.spec.pipeline
                    )))
                }
            }
            let id = t.spec.id;
            if by_id.insert(id, t).is_some() {
                return Err(Error::Config(format!("duplicate task id {id}")));
            }
        }
        for id in schedule.task_ids() {
            if !by_id.contains_key(&id) {
                return Err(Error::Config(format!("schedule refers to unknown task id {id}")));
            }
        }
        for t in by_id.values() {
            let lang = target_token(&t.spec.target_language);
            if vocab.id(&lang).is_none() {
                return Err(Error::Config(format!("vocabulary lacks {lang}")));
            }
            if t.spec.synthetic && vocab.id(SYNTHETIC).is_none() {
                return Err(Error::Config(format!("vocabulary lacks {SYNTHETIC}")));
            }
        }
        Ok(Loader {
            model,
            vocab,
            tasks: by_id,
            schedule,
            cfg,
        })
    }

    pub fn config(&self) -> &ServeConfig {
        &self.cfg
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn planner(&self) -> Planner<'_, F> {
        Planner {
            loader: self,
            cursors: self.tasks.iter().map(|(&id, t)| (id, Cursor::new(id, t.len()))).collect(),
            step: 0,
        }
    }

    /// Processes one step. The result depends only on the plan and the
    /// master seed: example `i` of step `t` draws from the generator keyed
    /// by `(seed, t, i)`, and each task's batches of step `t` from one keyed
    /// by `(seed, t, task)`.
    pub fn run_step(&self, plan: &StepPlan) -> Result<StepOutput> {
        let t = plan.step;
        let step = u32::try_from(t).map_err(|_| Error::OutOfRange(format!("step {t} exceeds u32")))?;
        let mut groups: BTreeMap<TaskId, Vec<Encoded>> = BTreeMap::new();
        let mut skipped = 0;
        for (i, &(task, idx)) in plan.items.iter().enumerate() {
            let mut rng = keyed_rng(&[self.cfg.seed, KEY_EXAMPLE, t, i as u64]);
            match next_example(&self.tasks[&task], idx, &self.model, &self.cfg, &mut rng)? {
                Some((src, tgt)) => groups.entry(task).or_default().push(Encoded {
                    src: self.vocab.numericalize(&src),
                    tgt: self.vocab.numericalize(&tgt),
                }),
                None => skipped += 1,
            }
        }
        let mut batches = Vec::new();
        for (task, examples) in groups {
            let mut rng = keyed_rng(&[self.cfg.seed, KEY_BATCH, t, task as u64]);
            batches.extend(assemble_batches(
                examples,
                task,
                step,
                self.cfg.token_budget,
                self.cfg.bucket_size,
                &mut rng,
            ));
        }
        Ok(StepOutput { step: t, batches, skipped })
    }

    /// Batches of steps `0..steps`, computed on the calling thread.
    pub fn batches(&self, steps: u64) -> Result<Vec<Minibatch>> {
        let mut out = Vec::new();
        for plan in self.planner().take(steps as usize) {
            out.extend(self.run_step(&plan)?.batches);
        }
        Ok(out)
    }

    /// Writes the stream header and the frames of steps `0..steps` (forever
    /// when `steps` is `None`) to `sink`.
    ///
    /// One coordinator thread plans steps, `workers` threads process them,
    /// and the calling thread writes frames in step order through bounded
    /// queues. A closed sink (broken pipe or connection reset) ends the
    /// serve cleanly.
    pub fn serve<W: Write>(&self, sink: W, steps: Option<u64>) -> Result<ServeReport> {
        let mut sink = io::BufWriter::new(sink);
        let mut report = ServeReport::default();
        match write_header(&mut sink, self.vocab.hash16()) {
            Ok(()) => report.bytes += super::wire::HEADER_LEN as u64,
            Err(e) if is_closed(&e) => {
                report.sink_closed = true;
                return Ok(report);
            }
            Err(e) => return Err(e.into()),
        }
        let workers = self.cfg.workers;
        let (job_tx, job_rx) = bounded::<StepPlan>(workers * 2);
        let (out_tx, out_rx) = bounded::<Result<(u64, Vec<u8>, u64, u64, u64)>>(workers * 2);
        let result = std::thread::scope(|scope| -> Result<()> {
            let out_rx = out_rx;
            scope.spawn(move || {
                let limit = steps.unwrap_or(u64::MAX);
                for plan in self.planner().take_while(|p| p.step < limit) {
                    if job_tx.send(plan).is_err() {
                        break;
                    }
                }
            });
            for _ in 0..workers {
                let job_rx = job_rx.clone();
                let out_tx = out_tx.clone();
                scope.spawn(move || {
                    for plan in job_rx {
                        let encoded = self.run_step(&plan).and_then(|out| {
                            let mut bytes = Vec::new();
                            let mut examples = 0;
                            for b in &out.batches {
                                examples += b.rows() as u64;
                                bytes.extend(encode_frame(b)?);
                            }
                            Ok((out.step, bytes, out.batches.len() as u64, examples, out.skipped))
                        });
                        let failed = encoded.is_err();
                        if out_tx.send(encoded).is_err() || failed {
                            break;
                        }
                    }
                });
            }
            drop(job_rx);
            drop(out_tx);

            let mut pending = BTreeMap::new();
            let mut next = 0u64;
            for msg in &out_rx {
                let (step, bytes, batches, examples, skipped) = msg?;
                pending.insert(step, (bytes, batches, examples, skipped));
                while let Some((bytes, batches, examples, skipped)) = pending.remove(&next) {
                    if let Err(e) = sink.write_all(&bytes) {
                        if is_closed(&e) {
                            report.sink_closed = true;
                            return Ok(());
                        }
                        return Err(e.into());
                    }
                    report.steps += 1;
                    report.batches += batches;
                    report.examples += examples;
                    report.skipped += skipped;
                    report.bytes += bytes.len() as u64;
                    next += 1;
                }
            }
            Ok(())
        });
        result?;
        if !report.sink_closed {
            match sink.flush() {
                Ok(()) => {}
                Err(e) if is_closed(&e) => report.sink_closed = true,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(report)
    }
}

fn is_closed(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset | io::ErrorKind::ConnectionAborted
    )
}
