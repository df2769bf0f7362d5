//! The sequential optimization loop.
//!
//! 1. Evaluate an `n0`-point Latin hypercube design on the true problem.
//! 2. Repeat until `k_max` infill points have been accepted: take the next
//!    criterion from the cycle, generate its candidate, drop it if it lies
//!    within `epsilon` of an existing sample (trying the next criterion
//!    instead), otherwise evaluate it, add it to the set, refit the
//!    surrogates and update the incumbent.
//!
//! If every criterion in the cycle is rejected in one pass, a reseeded
//! uniform candidate is tried; if that is rejected too the run stops with
//! [`RunStatus::Stalled`].

use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design_space::{lhs_sample, UnitPoint};
use crate::error::{Result, SsboError};
use crate::infill::{
    accept_candidate, criterion_global, criterion_local, criterion_uniform, Acceptance, Criterion,
    Incumbent, InfillCandidate, Sample, SampleSet, DEFAULT_EPSILON, DEFAULT_UNIFORM_CANDIDATES,
};
use crate::problems::{CountingEvaluator, ProblemSpec};
use crate::rbf::{build_bundle, KernelKind, SurrogateBundle};
use crate::solvers::SolverSettings;

pub const DEFAULT_TAU_FEAS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Initial design size; `None` means `2m + 1`.
    pub n0: Option<usize>,
    /// Accepted infill evaluations after the initial design.
    pub k_max: usize,
    pub epsilon: f64,
    /// Reduced-interval size; `None` means `n0`.
    pub p: Option<usize>,
    pub tau_feas: f64,
    pub kernel: KernelKind,
    pub tune: bool,
    pub solver: SolverSettings,
    pub seed: u64,
    pub criterion_cycle: Vec<Criterion>,
    pub uniform_candidates: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n0: None,
            k_max: 0,
            epsilon: DEFAULT_EPSILON,
            p: None,
            tau_feas: DEFAULT_TAU_FEAS,
            kernel: KernelKind::Gaussian,
            tune: true,
            solver: SolverSettings::default(),
            seed: 0,
            criterion_cycle: vec![Criterion::Global, Criterion::Local, Criterion::Uniform],
            uniform_candidates: DEFAULT_UNIFORM_CANDIDATES,
        }
    }
}

impl RunConfig {
    pub fn initial_samples(&self, dim: usize) -> usize {
        self.n0.unwrap_or(2 * dim + 1)
    }

    pub fn interval_size(&self, dim: usize) -> usize {
        self.p.unwrap_or_else(|| self.initial_samples(dim))
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(SsboError::InvalidConfig(msg));
        let n0 = self.initial_samples(dim);
        let p = self.interval_size(dim);
        if n0 < 2 {
            return bad(format!("n0 must be at least 2, got {n0}"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.tau_feas >= 0.0 && self.tau_feas.is_finite()) {
            return bad(format!("tau_feas must be >= 0, got {}", self.tau_feas));
        }
        if p < 2 || p > n0 + self.k_max {
            return bad(format!("p must lie in [2, n0 + k_max], got {p}"));
        }
        if self.criterion_cycle.is_empty() {
            return bad("criterion cycle must not be empty".into());
        }
        if self.uniform_candidates == 0 {
            return bad("uniform_candidates must be at least 1".into());
        }
        self.solver.validate()
    }
}

/// One true evaluation, as exported to the history file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    /// 1-based evaluation index.
    pub eval: usize,
    /// `None` for initial-design rows.
    pub criterion: Option<Criterion>,
    pub x_raw: Vec<f64>,
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub incumbent_objective: f64,
    pub incumbent_feasible: bool,
}

impl EvaluationRow {
    pub fn criterion_label(&self) -> &'static str {
        self.criterion.map_or("DoE", Criterion::name)
    }
}

/// A candidate discarded by the distance rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedCandidate {
    /// 1-based infill iteration during which the candidate was proposed.
    pub iteration: usize,
    pub criterion: Criterion,
    pub x: UnitPoint,
    pub x_raw: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    /// Every criterion, including the reseeded fallback, was rejected.
    Stalled,
    /// The true evaluator or a criterion failed; the record is partial.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub dim: usize,
    pub num_constraints: usize,
    pub n0: usize,
    pub k_max: usize,
    pub rows: Vec<EvaluationRow>,
    pub rejects: Vec<RejectedCandidate>,
    /// Row index of the final incumbent.
    pub incumbent: Option<usize>,
    /// True evaluations, as counted at the evaluator.
    pub evaluations: usize,
    pub status: RunStatus,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RunRecord {
    pub fn final_row(&self) -> Option<&EvaluationRow> {
        self.incumbent.map(|i| &self.rows[i])
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.final_row().map(|r| r.objective)
    }

    pub fn final_feasible(&self) -> bool {
        self.rows.last().is_some_and(|r| r.incumbent_feasible)
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.status, RunStatus::Failed(_))
    }
}

/// Feasible sample with the lowest objective, or the lowest objective
/// overall when nothing is feasible; ties go to the earlier sample.
pub fn select_incumbent(set: &SampleSet, tau_feas: f64) -> Result<Incumbent> {
    if set.is_empty() {
        return Err(SsboError::Empty { what: "sample set" });
    }
    let pick = |feasible_only: bool| {
        set.iter()
            .enumerate()
            .filter(|(_, s)| !feasible_only || s.is_feasible(tau_feas))
            .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
                Some((_, v)) if v <= s.objective => best,
                _ => Some((i, s.objective)),
            })
            .map(|(i, _)| i)
    };
    Ok(match pick(true) {
        Some(index) => Incumbent { index, feasible: true },
        None => Incumbent {
            index: pick(false).expect("set is not empty"),
            feasible: false,
        },
    })
}

struct Run<'p> {
    problem: &'p ProblemSpec,
    evaluator: CountingEvaluator<'p>,
    config: RunConfig,
    set: SampleSet,
    record: RunRecord,
    incumbent: Option<Incumbent>,
    bundle: Option<SurrogateBundle>,
}

impl Run<'_> {
    /// Evaluates, stores and records one point; `Err` aborts the run.
    fn evaluate(&mut self, x: UnitPoint, criterion: Option<Criterion>) -> Result<()> {
        let space = self.problem.space();
        let x_raw = space.denormalize(&x)?;
        let eval = self.evaluator.evaluate(&x_raw)?;
        let sample = Sample::new(x, x_raw.clone(), eval.objective, eval.constraints.clone())?;
        self.set.push(sample)?;
        self.bundle = None;
        let inc = select_incumbent(&self.set, self.config.tau_feas)?;
        self.incumbent = Some(inc);
        let best = &self.set.samples()[inc.index];
        self.record.rows.push(EvaluationRow {
            eval: self.set.len(),
            criterion,
            x_raw,
            objective: eval.objective,
            constraints: eval.constraints,
            incumbent_objective: best.objective,
            incumbent_feasible: inc.feasible,
        });
        self.record.incumbent = Some(inc.index);
        Ok(())
    }

    fn candidate(&mut self, criterion: Criterion, seed: u64) -> Result<InfillCandidate> {
        let settings = self.config.solver.with_seed(seed);
        match criterion {
            Criterion::Global => {
                if self.bundle.is_none() {
                    self.bundle = Some(build_bundle(&self.set, self.config.kernel, self.config.tune)?);
                }
                criterion_global(self.bundle.as_ref().expect("bundle built"), &settings)
            }
            Criterion::Uniform => criterion_uniform(&self.set, self.config.uniform_candidates, seed),
            Criterion::Local => {
                let inc = self.incumbent.expect("incumbent exists after the initial design");
                let p = self.config.interval_size(self.set.dim());
                criterion_local(&self.set, &inc, p, self.config.kernel, self.config.tune, &settings)
            }
        }
    }

    /// Returns `false` if the candidate was rejected.
    fn try_candidate(&mut self, candidate: InfillCandidate, iteration: usize) -> Result<bool> {
        match accept_candidate(&candidate, &self.set, self.config.epsilon)? {
            Acceptance::Accept { .. } => {
                self.evaluate(candidate.x, Some(candidate.criterion))?;
                Ok(true)
            }
            Acceptance::Reject { distance } => {
                let x_raw = self.problem.space().denormalize(&candidate.x)?;
                self.record.rejects.push(RejectedCandidate {
                    iteration,
                    criterion: candidate.criterion,
                    x: candidate.x,
                    x_raw,
                    distance,
                });
                Ok(false)
            }
        }
    }

    fn drive(&mut self, rng: &mut ChaCha8Rng) -> Result<RunStatus> {
        let dim = self.problem.dim();
        let n0 = self.config.initial_samples(dim);
        for x in lhs_sample(n0, dim, rng.next_u64())? {
            self.evaluate(x, None)?;
        }

        let cycle = self.config.criterion_cycle.clone();
        let mut position = 0;
        let mut accepted = 0;
        while accepted < self.config.k_max {
            let iteration = accepted + 1;
            let mut done = false;
            for _ in 0..cycle.len() {
                let criterion = cycle[position % cycle.len()];
                position += 1;
                let candidate = self.candidate(criterion, rng.next_u64())?;
                if self.try_candidate(candidate, iteration)? {
                    done = true;
                    break;
                }
            }
            if !done {
                let candidate = self.candidate(Criterion::Uniform, rng.next_u64())?;
                if !self.try_candidate(candidate, iteration)? {
                    return Ok(RunStatus::Stalled);
                }
            }
            accepted += 1;
        }
        Ok(RunStatus::Completed)
    }
}

/// Runs one optimization. Configuration errors are returned as `Err`;
/// failures during the run end in a partial record with
/// [`RunStatus::Failed`].
pub fn run(problem: &ProblemSpec, config: &RunConfig) -> Result<RunRecord> {
    let dim = problem.dim();
    config.validate(dim)?;
    let started = Instant::now();
    let mut state = Run {
        problem,
        evaluator: CountingEvaluator::new(problem),
        config: config.clone(),
        set: SampleSet::new(dim, problem.num_constraints()),
        record: RunRecord {
            problem: problem.name().to_string(),
            dim,
            num_constraints: problem.num_constraints(),
            n0: config.initial_samples(dim),
            k_max: config.k_max,
            rows: Vec::new(),
            rejects: Vec::new(),
            incumbent: None,
            evaluations: 0,
            status: RunStatus::Completed,
            wall_time: Duration::ZERO,
        },
        incumbent: None,
        bundle: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let status = state.drive(&mut rng).unwrap_or_else(|e| RunStatus::Failed(e.to_string()));
    let mut record = state.record;
    record.status = status;
    record.evaluations = state.evaluator.count();
    record.wall_time = started.elapsed();
    Ok(record)
}
