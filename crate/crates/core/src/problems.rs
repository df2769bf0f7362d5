//! Benchmark problems behind a uniform black-box interface.
//!
//! A [`ProblemSpec`] wraps any evaluator `raw point -> (objective, constraints)`
//! with its bounds; constraints are feasible when `<= 0`. Expensive external
//! models plug in through [`ProblemSpec::new`].

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design_space::DesignSpace;
use crate::error::{Result, SsboError};

/// Objective value and constraint vector of one true evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: f64,
    pub constraints: Vec<f64>,
}

impl Evaluation {
    pub fn is_finite(&self) -> bool {
        self.objective.is_finite() && self.constraints.iter().all(|g| g.is_finite())
    }
}

pub type Evaluator = Arc<dyn Fn(&[f64]) -> Evaluation + Send + Sync>;

/// Where a best-known value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BestKnownSource {
    /// Reported in the published experiments.
    Published,
    /// Computed here by dense or multi-start search.
    Computed,
}

impl fmt::Display for BestKnownSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BestKnownSource::Published => "published",
            BestKnownSource::Computed => "computed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestKnown {
    pub value: f64,
    pub source: BestKnownSource,
}

#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    space: DesignSpace,
    num_constraints: usize,
    evaluator: Evaluator,
    best_known: Option<BestKnown>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("space", &self.space)
            .field("num_constraints", &self.num_constraints)
            .field("best_known", &self.best_known)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn new<F>(
        name: impl Into<String>,
        space: DesignSpace,
        num_constraints: usize,
        evaluator: F,
    ) -> Self
    where
        F: Fn(&[f64]) -> Evaluation + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            space,
            num_constraints,
            evaluator: Arc::new(evaluator),
            best_known: None,
        }
    }

    pub fn with_best_known(mut self, value: f64, source: BestKnownSource) -> Self {
        self.best_known = Some(BestKnown { value, source });
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    pub fn best_known(&self) -> Option<BestKnown> {
        self.best_known
    }

    /// Evaluates the true problem; errors when the evaluator breaks its
    /// contract (wrong constraint count or non-finite output).
    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        if x.len() != self.dim() {
            return Err(SsboError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let eval = (self.evaluator)(x);
        if eval.constraints.len() != self.num_constraints {
            return Err(SsboError::Evaluation(format!(
                "expected {} constraint values, got {}",
                self.num_constraints,
                eval.constraints.len()
            )));
        }
        if !eval.is_finite() {
            return Err(SsboError::Evaluation(format!("non-finite output at {x:?}")));
        }
        Ok(eval)
    }
}

/// Counts true evaluations; the count is exact under concurrent use.
#[derive(Debug)]
pub struct CountingEvaluator<'a> {
    inner: &'a ProblemSpec,
    count: AtomicUsize,
}

impl<'a> CountingEvaluator<'a> {
    pub fn new(inner: &'a ProblemSpec) -> Self {
        Self {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate(x)
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    pub fn problem(&self) -> &ProblemSpec {
        self.inner
    }
}

/// `(6x - 2)^2 sin(12x - 4) cos(alpha (x - 1)^2)`.
pub fn forrester_alpha(x: f64, alpha: f64) -> f64 {
    (6.0 * x - 2.0).powi(2) * (12.0 * x - 4.0).sin() * (alpha * (x - 1.0).powi(2)).cos()
}

/// Two variables, three inequality constraints, `0 <= x1, x2 <= 10`.
pub fn constrained_2d(x: &[f64]) -> (f64, [f64; 3]) {
    let (x1, x2) = (x[0], x[1]);
    let objective = x1 + x2;
    let g1 = 1.0 - x1 * x1 * x2 / 20.0;
    let g2 = 1.0 - (x1 + x2 - 5.0).powi(2) / 30.0 - (x1 - x2 - 12.0).powi(2) / 120.0;
    let g3 = 1.0 - 80.0 / (x1 * x1 + 8.0 * x2 + 5.0);
    (objective, [g1, g2, g3])
}

/// Physical constants of the welded plate problem (N, mm, MPa).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeldedPlateConstants {
    pub c1: f64,
    pub c2: f64,
    pub length: f64,
    pub load: f64,
    pub shear_modulus: f64,
    pub youngs_modulus: f64,
    pub stress_limit: f64,
    pub shear_limit: f64,
    pub deflection_limit: f64,
}

/// Young's modulus used when none is given (typical steel, MPa).
pub const DEFAULT_YOUNGS_MODULUS: f64 = 2.0e5;

impl Default for WeldedPlateConstants {
    fn default() -> Self {
        Self {
            c1: 6.739e-5,
            c2: 2.936e-6,
            length: 500.0,
            load: 10000.0,
            shear_modulus: 82680.0,
            youngs_modulus: DEFAULT_YOUNGS_MODULUS,
            stress_limit: 210.0,
            shear_limit: 70.0,
            deflection_limit: 5.0,
        }
    }
}

/// Intermediate quantities of the welded plate model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeldedPlateResponse {
    pub cost: f64,
    pub bending_stress: f64,
    pub shear_stress: f64,
    pub deflection: f64,
    pub buckling_ratio: f64,
    pub thickness_ratio: f64,
}

impl WeldedPlateResponse {
    pub fn constraints(&self, k: &WeldedPlateConstants) -> [f64; 5] {
        [
            self.bending_stress - k.stress_limit,
            self.shear_stress - k.shear_limit,
            self.deflection - k.deflection_limit,
            self.buckling_ratio,
            self.thickness_ratio,
        ]
    }
}

/// Welded plate model at `x = [s, t, h, b]` (mm).
///
/// The deflection carries `b` in the numerator, as in the source
/// formulation this benchmark reproduces.
pub fn welded_plate_response(x: &[f64], k: &WeldedPlateConstants) -> WeldedPlateResponse {
    let (s, t, h, b) = (x[0], x[1], x[2], x[3]);
    let (l, p, e, g) = (k.length, k.load, k.youngs_modulus, k.shear_modulus);
    let sqrt2 = std::f64::consts::SQRT_2;

    let cost = k.c1 * s * t * t + k.c2 * (l + s) * h * b;
    let bending_stress = 6.0 * p * l / (b * h * h);

    let moment = p * (l + 0.5 * s);
    let radius = (0.25 * s * s + 0.25 * (t + h).powi(2)).sqrt();
    // Polar term of the weld group.
    let polar_term = 2.0 * sqrt2 * t * s * (s * s / 12.0 + 0.25 * (t + h).powi(2));
    let primary_shear = p / (sqrt2 * t * s);
    let secondary_shear = moment * radius / polar_term;
    let shear_stress = (primary_shear.powi(2)
        + secondary_shear.powi(2)
        + primary_shear * secondary_shear * s / radius)
        .sqrt();

    let deflection = 4.0 * p * l.powi(3) * b / (e * h.powi(3));

    let t3 = (e * g * h * h * b.powi(6) / 36.0).sqrt();
    let t4 = 1.0 - 0.25 * h / l * (e / g).sqrt();
    let critical_load = 4.013 * t3 * t4 / (l * l);
    let buckling_ratio = 1.0 - critical_load / p;

    let thickness_ratio = t / b - 1.0;

    WeldedPlateResponse {
        cost,
        bending_stress,
        shear_stress,
        deflection,
        buckling_ratio,
        thickness_ratio,
    }
}

/// Cost and the five constraints `[g1..g5]` of the welded plate.
pub fn welded_plate(x: &[f64], k: &WeldedPlateConstants) -> (f64, [f64; 5]) {
    let r = welded_plate_response(x, k);
    (r.cost, r.constraints(k))
}

/// Parameters accepted by [`make_problem`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProblemParams {
    /// Complexity coefficient of the 1-D problem.
    pub alpha: Option<f64>,
    /// Young's modulus (MPa) of the welded plate.
    pub youngs_modulus: Option<f64>,
}

pub const FORRESTER: &str = "forrester";
pub const CONSTRAINED_2D: &str = "constrained2d";
pub const WELDED_PLATE: &str = "welded_plate";

pub const BUILTIN_PROBLEMS: [&str; 3] = [FORRESTER, CONSTRAINED_2D, WELDED_PLATE];

/// Published best value of the 1-D problem at `alpha = 512`.
pub const FORRESTER_512_BEST: f64 = -8.8988;
/// Published best value of the two-variable constrained problem.
pub const CONSTRAINED_2D_BEST: f64 = 5.1768;
/// Best feasible cost of the welded plate at the default Young's modulus,
/// from a 300-start SLSQP search (active set g2, g3, g4).
pub const WELDED_PLATE_BEST_DEFAULT_E: f64 = 2.646152;

/// Builds a built-in problem by name.
pub fn make_problem(name: &str, params: &ProblemParams) -> Result<ProblemSpec> {
    match name.to_ascii_lowercase().replace('-', "_").as_str() {
        FORRESTER => {
            let alpha = params.alpha.unwrap_or(0.0);
            if !(alpha.is_finite() && alpha >= 0.0) {
                return Err(SsboError::InvalidConfig(format!("alpha must be >= 0, got {alpha}")));
            }
            let space = DesignSpace::new(vec![0.0], vec![1.0])?;
            let spec = ProblemSpec::new(format!("{FORRESTER}(alpha={alpha})"), space, 0, move |x| {
                Evaluation {
                    objective: forrester_alpha(x[0], alpha),
                    constraints: Vec::new(),
                }
            });
            Ok(if alpha == 512.0 {
                spec.with_best_known(FORRESTER_512_BEST, BestKnownSource::Published)
            } else {
                spec.with_best_known(
                    dense_minimum_1d(|x| forrester_alpha(x, alpha)),
                    BestKnownSource::Computed,
                )
            })
        }
        CONSTRAINED_2D | "constrained_2d" => {
            let space = DesignSpace::new(vec![0.0; 2], vec![10.0; 2])?;
            Ok(ProblemSpec::new(CONSTRAINED_2D, space, 3, |x| {
                let (objective, g) = constrained_2d(x);
                Evaluation {
                    objective,
                    constraints: g.to_vec(),
                }
            })
            .with_best_known(CONSTRAINED_2D_BEST, BestKnownSource::Published))
        }
        WELDED_PLATE => {
            let mut constants = WeldedPlateConstants::default();
            if let Some(e) = params.youngs_modulus {
                if !(e.is_finite() && e > 0.0) {
                    return Err(SsboError::InvalidConfig(format!(
                        "Young's modulus must be positive, got {e}"
                    )));
                }
                constants.youngs_modulus = e;
            }
            let space = DesignSpace::new(vec![100.0, 2.0, 100.0, 5.0], vec![500.0, 6.0, 500.0, 10.0])?;
            let spec = ProblemSpec::new(WELDED_PLATE, space, 5, move |x| {
                let (objective, g) = welded_plate(x, &constants);
                Evaluation {
                    objective,
                    constraints: g.to_vec(),
                }
            });
            Ok(if constants.youngs_modulus == DEFAULT_YOUNGS_MODULUS {
                spec.with_best_known(WELDED_PLATE_BEST_DEFAULT_E, BestKnownSource::Computed)
            } else {
                spec
            })
        }
        _ => Err(SsboError::UnknownProblem(name.to_string())),
    }
}

/// Global minimum of `f` on `[0, 1]`: a 200001-point scan refined by
/// golden section around the best grid point.
fn dense_minimum_1d<F: Fn(f64) -> f64>(f: F) -> f64 {
    const N: usize = 200_000;
    let h = 1.0 / N as f64;
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for i in 0..=N {
        let v = f(i as f64 * h);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let (mut a, mut b) = (
        (best_i as f64 - 1.0).max(0.0) * h,
        (best_i as f64 + 1.0).min(N as f64) * h,
    );
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-13 {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if f(x1) <= f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    best.min(f(0.5 * (a + b)))
}
