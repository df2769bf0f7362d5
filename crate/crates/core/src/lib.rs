//! Sequential surrogate-based optimization of expensive constrained
//! black-box problems.
//!
//! The optimizer fits radial-basis-function surrogates to the objective and
//! every constraint, then adds one truly evaluated point per iteration,
//! rotating between three infill criteria:
//!
//! * **Global**: genetic search for the constrained optimum of the surrogates.
//! * **Local**: surrogates refit on the samples nearest the incumbent and a
//!   gradient descent inside their bounding box.
//! * **Uniform**: the point of a large Latin hypercube draw farthest from all
//!   existing samples.
//!
//! Candidates closer than `epsilon` (unit-cube distance) to an existing
//! sample are discarded without spending an evaluation.
//!
//! ```
//! use ssbo_core::{make_problem, run, ProblemParams, RunConfig};
//!
//! let problem = make_problem("constrained2d", &ProblemParams::default()).unwrap();
//! let record = run(&problem, &RunConfig { k_max: 4, seed: 7, ..Default::default() }).unwrap();
//! assert_eq!(record.evaluations, 5 + 4);
//! ```

pub mod design_space;
pub mod driver;
pub mod error;
pub mod harness;
pub mod infill;
pub mod problems;
pub mod rbf;
pub mod solvers;

pub use design_space::{lhs_sample, min_distance, DesignSpace, UnitPoint};
pub use driver::{run, select_incumbent, EvaluationRow, RejectedCandidate, RunConfig, RunRecord, RunStatus};
pub use error::{Result, SsboError};
pub use harness::{
    export_history, export_rejects, export_summary, run_batch, run_batch_on, write_batch, BatchConfig,
    BatchRun, BatchSummary, ReplicationOutcome,
};
pub use infill::{
    accept_candidate, criterion_global, criterion_local, criterion_uniform, reduced_interval, Acceptance,
    Criterion, Incumbent, InfillCandidate, ReducedInterval, Sample, SampleSet,
};
pub use problems::{make_problem, BestKnown, BestKnownSource, Evaluation, ProblemParams, ProblemSpec};
pub use rbf::{build_bundle, loocv_error, tune_shape, KernelKind, RbfModel, SurrogateBundle};
pub use solvers::{candidate_search, ga_minimize, local_minimize, penalized_value, BoxProblem, SolverSettings};
