//! Tasks and the partwise-constant task-mix schedule.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::noise::PipelineKind;
use crate::scalar::Scalar;

pub type TaskId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Translation,
    Autoencoder,
    Backtranslation,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translation" => Ok(TaskKind::Translation),
            "autoencoder" => Ok(TaskKind::Autoencoder),
            "backtranslation" => Ok(TaskKind::Backtranslation),
            other => Err(Error::Config(format!("unknown task kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: TaskId,
    pub name: String,
    pub kind: TaskKind,
    pub source_language: String,
    pub target_language: String,
    pub pipeline: PipelineKind,
    /// Names of the corpora feeding the task: one for monolingual
    /// pipelines, source then target for parallel ones.
    pub corpora: Vec<String>,
    pub synthetic: bool,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Schedule(format!("task {}: {msg}", self.name)));
        if self.kind == TaskKind::Autoencoder && self.source_language != self.target_language {
            return bad("autoencoder tasks need equal source and target languages".into());
        }
        if self.kind == TaskKind::Backtranslation && !self.synthetic {
            return bad("back-translation tasks are synthetic".into());
        }
        let wanted = match self.pipeline {
            PipelineKind::Parallel => 2,
            PipelineKind::MonoNoised | PipelineKind::MonoTaboo => 1,
        };
        if self.corpora.len() != wanted {
            return bad(format!("pipeline {:?} takes {wanted} corpora, got {}", self.pipeline, self.corpora.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase<F> {
    pub start_step: u64,
    pub weights: BTreeMap<TaskId, F>,
}

/// Piecewise-constant mixing distribution over tasks, indexed by
/// optimizer step. Weights are normalized at query time.
#[derive(Debug, Clone, PartialEq)]
pub struct MixSchedule<F> {
    phases: Vec<Phase<F>>,
    /// Per phase: task ids and cumulative normalized probabilities.
    cumulative: Vec<(Vec<TaskId>, Vec<F>)>,
}

impl<F: Scalar> MixSchedule<F> {
    pub fn new(phases: Vec<Phase<F>>) -> Result<Self> {
        match phases.first() {
            None => return Err(Error::Schedule("at least one phase is required".into())),
            Some(p) if p.start_step != 0 => {
                return Err(Error::Schedule(format!("first phase starts at {}, not 0", p.start_step)))
            }
            _ => {}
        }
        if phases.windows(2).any(|w| w[0].start_step >= w[1].start_step) {
            return Err(Error::Schedule("phase starts must be strictly increasing".into()));
        }
        let mut cumulative = Vec::with_capacity(phases.len());
        for (i, p) in phases.iter().enumerate() {
            if p.weights.values().any(|w| !(*w >= F::zero()) || !w.is_finite()) {
                return Err(Error::Schedule(format!("phase {i} has a negative or non-finite weight")));
            }
            let total: F = p.weights.values().copied().sum();
            if !(total > F::zero()) {
                return Err(Error::Schedule(format!("phase {i} has no positive weight")));
            }
            let mut ids = Vec::new();
            let mut cum = Vec::new();
            let mut acc = F::zero();
            for (&id, &w) in &p.weights {
                if w > F::zero() {
                    acc += w / total;
                    ids.push(id);
                    cum.push(acc);
                }
            }
            cumulative.push((ids, cum));
        }
        Ok(MixSchedule { phases, cumulative })
    }

    /// Constant mixture: plain multi-task learning.
    pub fn constant(weights: BTreeMap<TaskId, F>) -> Result<Self> {
        Self::new(vec![Phase { start_step: 0, weights }])
    }

    pub fn phases(&self) -> &[Phase<F>] {
        &self.phases
    }

    pub fn phase_index(&self, step: u64) -> usize {
        self.phases.partition_point(|p| p.start_step <= step) - 1
    }

    /// Normalized task distribution in force at `step`.
    pub fn mixture_at(&self, step: u64) -> BTreeMap<TaskId, F> {
        let phase = &self.phases[self.phase_index(step)];
        let total: F = phase.weights.values().copied().sum();
        phase.weights.iter().map(|(&id, &w)| (id, w / total)).collect()
    }

    pub fn sample_task<R: Rng + ?Sized>(&self, step: u64, rng: &mut R) -> TaskId {
        let (ids, cum) = &self.cumulative[self.phase_index(step)];
        let u = F::of(rng.gen::<f64>());
        let pos = cum.partition_point(|&c| c <= u);
        ids[pos.min(ids.len() - 1)]
    }

    /// Every task id mentioned in any phase.
    pub fn task_ids(&self) -> Vec<TaskId> {
        let mut ids: Vec<TaskId> = self.phases.iter().flat_map(|p| p.weights.keys().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Sequential,
    Parallel,
    MixedFinetune,
    MixedPretrain,
    TwoPhase,
    ThreePhase,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sequential" => Preset::Sequential,
            "parallel" => Preset::Parallel,
            "mixed-finetune" => Preset::MixedFinetune,
            "mixed-pretrain" => Preset::MixedPretrain,
            "2-phase" => Preset::TwoPhase,
            "3-phase" => Preset::ThreePhase,
            other => return Err(Error::Schedule(format!("unknown preset {other:?}"))),
        })
    }
}

impl Preset {
    pub fn num_phases(self) -> usize {
        match self {
            Preset::Parallel => 1,
            Preset::ThreePhase => 3,
            _ => 2,
        }
    }
}

/// Task ids playing each role of the asymmetric-resource setup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskRoles {
    pub src_hrl: Option<TaskId>,
    pub src_lrl: Option<TaskId>,
    pub src_ae: Option<TaskId>,
    pub hrl_ae: Option<TaskId>,
    pub lrl_ae: Option<TaskId>,
}

/// Phase boundary used when the caller gives none.
pub const DEFAULT_BOUNDARY: u64 = 40_000;

/// Phase weights of the 3-phase schedule over
/// (SRC-HRL, SRC-LRL, SRC-AE, HRL-AE, LRL-AE).
pub const THREE_PHASE_WEIGHTS: [[f64; 5]; 3] = [
    [92.0, 0.0, 5.0, 3.0, 0.0],
    [67.0, 22.0, 0.0, 0.0, 11.0],
    [20.0, 70.0, 0.0, 0.0, 10.0],
];

/// Builds a preset schedule.
///
/// `boundaries` gives the start step of every phase after the first
/// (defaults: multiples of [`DEFAULT_BOUNDARY`]). `mix` supplies the
/// weights of the mixed phases of `parallel`, `mixed-finetune` and
/// `mixed-pretrain`; it defaults to equal weights over all assigned roles.
pub fn builtin_schedule<F: Scalar>(
    preset: Preset,
    roles: &TaskRoles,
    boundaries: &[u64],
    mix: Option<&BTreeMap<TaskId, F>>,
) -> Result<MixSchedule<F>> {
    let n = preset.num_phases();
    let starts: Vec<u64> = if boundaries.is_empty() {
        (0..n as u64).map(|i| i * DEFAULT_BOUNDARY).collect()
    } else if boundaries.len() == n - 1 {
        std::iter::once(0).chain(boundaries.iter().copied()).collect()
    } else {
        return Err(Error::Schedule(format!(
            "preset {preset:?} needs {} boundaries, got {}",
            n - 1,
            boundaries.len()
        )));
    };
    let need = |role: Option<TaskId>, name: &str| {
        role.ok_or_else(|| Error::Schedule(format!("preset {preset:?} needs a {name} task")))
    };
    let only = |id: TaskId| BTreeMap::from([(id, F::one())]);
    let mixture = || -> Result<BTreeMap<TaskId, F>> {
        match mix {
            Some(m) => Ok(m.clone()),
            None => {
                let all: Vec<TaskId> = [roles.src_hrl, roles.src_lrl, roles.src_ae, roles.hrl_ae, roles.lrl_ae]
                    .into_iter()
                    .flatten()
                    .collect();
                if all.is_empty() {
                    return Err(Error::Schedule("no tasks assigned to any role".into()));
                }
                Ok(all.into_iter().map(|id| (id, F::one())).collect())
            }
        }
    };
    let weights: Vec<BTreeMap<TaskId, F>> = match preset {
        Preset::Parallel => vec![mixture()?],
        Preset::Sequential => vec![only(need(roles.src_hrl, "SRC-HRL")?), only(need(roles.src_lrl, "SRC-LRL")?)],
        Preset::MixedFinetune => vec![only(need(roles.src_hrl, "SRC-HRL")?), mixture()?],
        Preset::MixedPretrain => vec![mixture()?, only(need(roles.src_lrl, "SRC-LRL")?)],
        Preset::TwoPhase | Preset::ThreePhase => {
            let role_ids = [roles.src_hrl, roles.src_lrl, roles.src_ae, roles.hrl_ae, roles.lrl_ae];
            let names = ["SRC-HRL", "SRC-LRL", "SRC-AE", "HRL-AE", "LRL-AE"];
            THREE_PHASE_WEIGHTS[..n]
                .iter()
                .map(|row| {
                    let mut w = BTreeMap::new();
                    for ((&weight, role), name) in row.iter().zip(role_ids).zip(names) {
                        if weight > 0.0 {
                            w.insert(need(role, name)?, F::of(weight));
                        }
                    }
                    Ok(w)
                })
                .collect::<Result<_>>()?
        }
    };
    MixSchedule::new(
        starts
            .into_iter()
            .zip(weights)
            .map(|(start_step, weights)| Phase { start_step, weights })
            .collect(),
    )
}
