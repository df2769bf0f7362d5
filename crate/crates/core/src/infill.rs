//! Sample bookkeeping and the three infill criteria.
//!
//! * Global: minimize the surrogate objective subject to the surrogate
//!   constraints over the whole cube ([`criterion_global`]).
//! * Uniform: pick, among a large Latin hypercube draw, the point farthest
//!   from every existing sample ([`criterion_uniform`]).
//! * Local: refit surrogates on the `p` samples nearest the incumbent and
//!   descend locally inside their bounding box ([`criterion_local`]).
//!
//! Any candidate closer than `epsilon` to an existing sample is discarded
//! before it costs a true evaluation ([`accept_candidate`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design_space::{lhs_sample, min_distance_by, squared_distance, DesignSpace, UnitPoint};
use crate::error::{Result, SsboError};
use crate::rbf::{build_bundle, KernelKind, SurrogateBundle};
use crate::solvers::{candidate_search, ga_minimize, local_minimize, BoxProblem, SolverSettings};

/// Candidates drawn by the uniform criterion.
pub const DEFAULT_UNIFORM_CANDIDATES: usize = 10_000;

/// Minimum unit-space distance between a new point and existing samples.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Half-width added to a reduced-interval dimension that collapsed to a
/// single value.
pub const DEGENERATE_HALF_WIDTH: f64 = 0.005;

/// One truly evaluated design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: UnitPoint,
    pub x_raw: Vec<f64>,
    pub objective: f64,
    pub constraints: Vec<f64>,
}

impl Sample {
    pub fn new(x: UnitPoint, x_raw: Vec<f64>, objective: f64, constraints: Vec<f64>) -> Result<Self> {
        if x.dim() != x_raw.len() {
            return Err(SsboError::DimensionMismatch {
                expected: x.dim(),
                found: x_raw.len(),
            });
        }
        if !objective.is_finite() || constraints.iter().any(|g| !g.is_finite()) {
            return Err(SsboError::NonFinite("sample responses"));
        }
        Ok(Self {
            x,
            x_raw,
            objective,
            constraints,
        })
    }

    /// Feasible when every constraint is at most `tolerance`.
    pub fn is_feasible(&self, tolerance: f64) -> bool {
        self.constraints.iter().all(|&g| g <= tolerance)
    }
}

/// Evaluated samples in insertion order, pairwise distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    dim: usize,
    num_constraints: usize,
    samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(dim: usize, num_constraints: usize) -> Self {
        Self {
            dim,
            num_constraints,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if sample.x.dim() != self.dim {
            return Err(SsboError::DimensionMismatch {
                expected: self.dim,
                found: sample.x.dim(),
            });
        }
        if sample.constraints.len() != self.num_constraints {
            return Err(SsboError::DimensionMismatch {
                expected: self.num_constraints,
                found: sample.constraints.len(),
            });
        }
        if let Some(i) = self
            .samples
            .iter()
            .position(|s| squared_distance(s.x.coords(), sample.x.coords()) == 0.0)
        {
            return Err(SsboError::DuplicateInputs {
                first: i,
                second: self.samples.len(),
            });
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Sample> {
        self.samples.get(index)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// New set holding the given members, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            dim: self.dim,
            num_constraints: self.num_constraints,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Unit-space distance from `x` to the nearest sample.
    pub fn min_distance(&self, x: &UnitPoint) -> Result<f64> {
        min_distance_by(x.coords(), self.samples.iter().map(|s| s.x.coords()))
    }
}

impl<'a> IntoIterator for &'a SampleSet {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// Current best sample, by index into its [`SampleSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incumbent {
    pub index: usize,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    Global,
    Uniform,
    Local,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Global, Criterion::Uniform, Criterion::Local];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Global => "Global",
            Criterion::Uniform => "Uniform",
            Criterion::Local => "Local",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = SsboError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "global" => Ok(Criterion::Global),
            "uniform" => Ok(Criterion::Uniform),
            "local" => Ok(Criterion::Local),
            other => Err(SsboError::InvalidConfig(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfillCandidate {
    pub x: UnitPoint,
    pub criterion: Criterion,
}

/// Global criterion: genetic search on the surrogates over the whole cube.
pub fn criterion_global(bundle: &SurrogateBundle, settings: &SolverSettings) -> Result<InfillCandidate> {
    let problem = BoxProblem::from_bundle(bundle, DesignSpace::unit(bundle.dim())?)?;
    Ok(InfillCandidate {
        x: ga_minimize(&problem, settings)?,
        criterion: Criterion::Global,
    })
}

/// Uniform criterion: the member of a fresh `candidates`-point Latin
/// hypercube draw that minimizes the inverse distance to the set.
pub fn criterion_uniform(set: &SampleSet, candidates: usize, seed: u64) -> Result<InfillCandidate> {
    if set.is_empty() {
        return Err(SsboError::Empty { what: "sample set" });
    }
    let draw = lhs_sample(candidates, set.dim(), seed)?;
    let x = candidate_search(
        |d| match set.min_distance(d) {
            Ok(dist) => 1.0 / dist,
            Err(_) => f64::INFINITY,
        },
        &draw,
    )?;
    Ok(InfillCandidate {
        x: x.clone(),
        criterion: Criterion::Uniform,
    })
}

/// Neighbourhood of the incumbent used by the local criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedInterval {
    /// Sub-box of the unit cube.
    pub space: DesignSpace,
    /// Indices into the sample set, nearest first.
    pub members: Vec<usize>,
}

/// The `p` samples nearest the incumbent (ties by insertion order) and
/// their bounding box, clipped to the cube. Collapsed dimensions are
/// widened by [`DEGENERATE_HALF_WIDTH`] on each side.
pub fn reduced_interval(set: &SampleSet, incumbent: &Incumbent, p: usize) -> Result<ReducedInterval> {
    if p == 0 || p > set.len() {
        return Err(SsboError::InvalidConfig(format!(
            "reduced interval needs 1 <= p <= {}, got {p}",
            set.len()
        )));
    }
    let center = set
        .get(incumbent.index)
        .ok_or_else(|| SsboError::InvalidConfig(format!("incumbent index {} out of range", incumbent.index)))?
        .x
        .coords()
        .to_vec();
    let distances: Vec<f64> = set.iter().map(|s| squared_distance(s.x.coords(), &center)).collect();
    let mut order: Vec<usize> = (0..set.len()).collect();
    // Stable sort keeps insertion order among equal distances.
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    order.truncate(p);

    let m = set.dim();
    let mut lower = vec![f64::INFINITY; m];
    let mut upper = vec![f64::NEG_INFINITY; m];
    for &i in &order {
        for (j, &c) in set.samples()[i].x.coords().iter().enumerate() {
            lower[j] = lower[j].min(c);
            upper[j] = upper[j].max(c);
        }
    }
    for j in 0..m {
        if upper[j] - lower[j] <= 0.0 {
            lower[j] -= DEGENERATE_HALF_WIDTH;
            upper[j] += DEGENERATE_HALF_WIDTH;
        }
        lower[j] = lower[j].max(0.0);
        upper[j] = upper[j].min(1.0);
    }
    Ok(ReducedInterval {
        space: DesignSpace::new(lower, upper)?,
        members: order,
    })
}

/// Local criterion: surrogates refit on the reduced interval's members,
/// then a local descent from the incumbent inside the reduced box.
pub fn criterion_local(
    set: &SampleSet,
    incumbent: &Incumbent,
    p: usize,
    kernel: KernelKind,
    tune: bool,
    settings: &SolverSettings,
) -> Result<InfillCandidate> {
    if p < 2 {
        return Err(SsboError::InvalidConfig(format!("local criterion needs p >= 2, got {p}")));
    }
    let interval = reduced_interval(set, incumbent, p)?;
    let local_set = set.subset(&interval.members);
    let bundle = build_bundle(&local_set, kernel, tune)?;
    let problem = BoxProblem::from_bundle(&bundle, interval.space.clone())?;
    let start = &set.samples()[incumbent.index].x;
    Ok(InfillCandidate {
        x: local_minimize(&problem, start, settings)?,
        criterion: Criterion::Local,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Acceptance {
    Accept { distance: f64 },
    Reject { distance: f64 },
}

impl Acceptance {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Acceptance::Accept { .. })
    }

    pub fn distance(&self) -> f64 {
        match *self {
            Acceptance::Accept { distance } | Acceptance::Reject { distance } => distance,
        }
    }
}

/// Rejects a candidate lying closer than `epsilon` to any existing sample.
pub fn accept_candidate(candidate: &InfillCandidate, set: &SampleSet, epsilon: f64) -> Result<Acceptance> {
    let distance = set.min_distance(&candidate.x)?;
    Ok(if distance < epsilon {
        Acceptance::Reject { distance }
    } else {
        Acceptance::Accept { distance }
    })
}
