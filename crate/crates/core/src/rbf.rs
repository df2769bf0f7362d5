//! Radial-basis-function interpolation with cross-validated shape parameters.
//!
//! A model is `y(x) = sum_i beta_i f(||x - x_i||)` where `f` is one of the
//! [`KernelKind`] profiles and `beta` solves the interpolation system
//! `F beta = y` with `F_ij = f(||x_i - x_j||)`. All radii are measured in
//! unit-cube coordinates.
//!
//! The shape parameter `c` is picked by minimizing the leave-one-out
//! residual sum of squares. The leave-one-out residuals come from a single
//! inverse of `F`: for an interpolant, the residual at `x_i` of the model
//! fitted without sample `i` equals `beta_i / (F^-1)_ii`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design_space::{squared_distance, UnitPoint};
use crate::error::{Result, SsboError};
use crate::infill::SampleSet;

/// Shape parameter used when there is too little data to tune one.
pub const DEFAULT_SHAPE: f64 = 1.0;

/// 1-norm condition number above which the ridge fallback kicks in.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Ridge is this fraction of the mean diagonal of `F`.
pub const RIDGE_FACTOR: f64 = 1e-10;

/// Inputs closer than this (unit space) count as duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

/// Number of log-spaced grid values scanned by [`tune_shape`].
pub const SHAPE_GRID_POINTS: usize = 30;

/// Range of the shape-parameter search.
pub const SHAPE_RANGE: (f64, f64) = (1e-2, 1e2);

/// Golden-section refinement stops once the bracket is this fraction of
/// one grid cell (three further decimal digits).
const REFINE_FRACTION: f64 = 1e-3;

/// Upper bound on iterative-refinement passes per solve.
const MAX_REFINEMENTS: usize = 10;

/// Above this condition number the diagonal of `F^-1` used by the
/// leave-one-out shortcut is recomputed column by column with refinement.
const DIAGONAL_REFINE_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// `exp(-c r^2)`
    #[default]
    Gaussian,
    /// `(1 + c r^2)^(1/2)`
    Multiquadric,
    /// `(1 + c r^2)^(-1/2)`
    InverseMultiquadric,
    /// `r^2 ln(1 + c r^2)`
    ThinPlateSpline,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Gaussian,
        KernelKind::Multiquadric,
        KernelKind::InverseMultiquadric,
        KernelKind::ThinPlateSpline,
    ];

    /// Kernel profile at radius `r` with shape `c`.
    pub fn value(self, r: f64, c: f64) -> f64 {
        self.value_sq(r * r, c)
    }

    #[inline]
    pub(crate) fn value_sq(self, r2: f64, c: f64) -> f64 {
        match self {
            KernelKind::Gaussian => (-c * r2).exp(),
            KernelKind::Multiquadric => (1.0 + c * r2).sqrt(),
            KernelKind::InverseMultiquadric => 1.0 / (1.0 + c * r2).sqrt(),
            KernelKind::ThinPlateSpline => r2 * (c * r2).ln_1p(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Multiquadric => "multiquadric",
            KernelKind::InverseMultiquadric => "inverse-multiquadric",
            KernelKind::ThinPlateSpline => "thin-plate",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = SsboError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KernelKind::Gaussian),
            "multiquadric" | "mq" => Ok(KernelKind::Multiquadric),
            "inverse-multiquadric" | "imq" => Ok(KernelKind::InverseMultiquadric),
            "thin-plate" | "thin-plate-spline" | "tps" => Ok(KernelKind::ThinPlateSpline),
            other => Err(SsboError::InvalidConfig(format!("unknown kernel `{other}`"))),
        }
    }
}

/// A fitted interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    kernel: KernelKind,
    shape: f64,
    dim: usize,
    /// Training inputs, row-major `n x dim`.
    centers: Vec<f64>,
    beta: Vec<f64>,
    /// Low-order words: the coefficients are `beta + beta_low` exactly.
    beta_low: Vec<f64>,
    ridge: f64,
}

impl RbfModel {
    /// Solves the interpolation system for `beta`.
    ///
    /// When the 1-norm condition number of `F` exceeds [`CONDITION_LIMIT`]
    /// the fit is retried with `F + lambda I`, and `lambda` is recorded in
    /// [`RbfModel::ridge`].
    pub fn fit(
        inputs: &[UnitPoint],
        responses: &[f64],
        kernel: KernelKind,
        shape: f64,
    ) -> Result<Self> {
        let dim = validate_training(inputs, responses, 1)?;
        check_shape(shape)?;
        let sq = squared_distances(inputs);
        let system = Factored::new(kernel_matrix(&sq, kernel, shape))?;
        Ok(Self::assemble(inputs, dim, responses, kernel, shape, &system))
    }

    /// Fits with a fixed ridge `lambda >= 0` and no condition-driven fallback.
    pub fn fit_regularized(
        inputs: &[UnitPoint],
        responses: &[f64],
        kernel: KernelKind,
        shape: f64,
        ridge: f64,
    ) -> Result<Self> {
        let dim = validate_training(inputs, responses, 1)?;
        check_shape(shape)?;
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(SsboError::InvalidConfig(format!("ridge must be >= 0, got {ridge}")));
        }
        let f = kernel_matrix(&squared_distances(inputs), kernel, shape);
        let system = Factored::with_ridge(f, ridge).ok_or(SsboError::Unsolvable)?;
        Ok(Self::assemble(inputs, dim, responses, kernel, shape, &system))
    }

    fn assemble(
        inputs: &[UnitPoint],
        dim: usize,
        responses: &[f64],
        kernel: KernelKind,
        shape: f64,
        system: &Factored,
    ) -> Self {
        let (beta, beta_low) = system.solve(responses);
        Self {
            kernel,
            shape,
            dim,
            centers: inputs.iter().flat_map(|p| p.coords().iter().copied()).collect(),
            beta,
            beta_low,
            ridge: system.ridge,
        }
    }

    pub fn predict(&self, x: &UnitPoint) -> Result<f64> {
        if x.dim() != self.dim {
            return Err(SsboError::DimensionMismatch {
                expected: self.dim,
                found: x.dim(),
            });
        }
        Ok(self.predict_coords(x.coords()))
    }

    /// Prediction at raw coordinates; `x.len()` must equal [`Self::dim`].
    pub fn predict_coords(&self, x: &[f64]) -> f64 {
        let mut acc = CompensatedSum::default();
        for ((center, &b), &b_low) in self.centers.chunks_exact(self.dim).zip(&self.beta).zip(&self.beta_low) {
            let phi = self.kernel.value_sq(squared_distance(x, center), self.shape);
            acc.add_product(b, phi);
            acc.add_small_product(b_low, phi);
        }
        acc.value()
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    /// Regularization actually applied; zero for an exact interpolant.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> {
        self.centers.chunks_exact(self.dim)
    }
}

/// Sum of squared leave-one-out residuals of the interpolant with shape `c`.
///
/// Each held-out model uses the same regularization the full-data fit
/// would apply (zero unless the full system is ill-conditioned).
pub fn loocv_error(
    inputs: &[UnitPoint],
    responses: &[f64],
    kernel: KernelKind,
    shape: f64,
) -> Result<f64> {
    validate_training(inputs, responses, 2)?;
    check_shape(shape)?;
    loocv_from_distances(&squared_distances(inputs), responses, kernel, shape, Precision::Refined)
}

/// Shape parameter minimizing [`loocv_error`]: a log-spaced grid scan over
/// [`SHAPE_RANGE`] followed by golden-section refinement around the best
/// grid value.
///
/// Scores skip the refined inverse diagonal, so on systems near
/// [`CONDITION_LIMIT`] they may differ from [`loocv_error`] in the sixth
/// significant digit.
pub fn tune_shape(inputs: &[UnitPoint], responses: &[f64], kernel: KernelKind) -> Result<f64> {
    validate_training(inputs, responses, 2)?;
    tune_from_distances(&squared_distances(inputs), responses, kernel)
}

/// The `SHAPE_GRID_POINTS` grid values scanned by [`tune_shape`].
pub fn shape_grid() -> Vec<f64> {
    let (lo, hi) = (SHAPE_RANGE.0.log10(), SHAPE_RANGE.1.log10());
    let step = (hi - lo) / (SHAPE_GRID_POINTS - 1) as f64;
    (0..SHAPE_GRID_POINTS)
        .map(|k| 10f64.powf(lo + step * k as f64))
        .collect()
}

fn tune_from_distances(sq: &DMatrix<f64>, responses: &[f64], kernel: KernelKind) -> Result<f64> {
    let grid = shape_grid();
    let mut last_err = None;
    let score = |c: f64, last_err: &mut Option<SsboError>| {
        match loocv_from_distances(sq, responses, kernel, c, Precision::Fast) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                *last_err = Some(e);
                f64::INFINITY
            }
        }
    };

    let values: Vec<f64> = grid.iter().map(|&c| score(c, &mut last_err)).collect();
    let (best_idx, best_val) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if !best_val.is_finite() {
        return Err(last_err.unwrap_or(SsboError::Unsolvable));
    }

    let lo = grid[best_idx.saturating_sub(1)].log10();
    let hi = grid[(best_idx + 1).min(grid.len() - 1)].log10();
    let cell = (SHAPE_RANGE.1.log10() - SHAPE_RANGE.0.log10()) / (SHAPE_GRID_POINTS - 1) as f64;
    let (refined, refined_val) = golden_section(
        |t| score(10f64.powf(t), &mut last_err),
        lo,
        hi,
        cell * REFINE_FRACTION,
    );
    if refined_val < best_val {
        Ok(10f64.powf(refined))
    } else {
        Ok(grid[best_idx])
    }
}

/// Minimizes a 1-D function on `[lo, hi]`; returns the best point seen.
fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// How hard [`loocv_from_distances`] works on ill-conditioned systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Precision {
    /// Diagonal of the plain inverse; enough to rank shapes.
    Fast,
    /// Refined diagonal, accurate to a few ulps of the exact shortcut.
    Refined,
}

fn loocv_from_distances(
    sq: &DMatrix<f64>,
    responses: &[f64],
    kernel: KernelKind,
    shape: f64,
    precision: Precision,
) -> Result<f64> {
    let system = Factored::new(kernel_matrix(sq, kernel, shape))?;
    let (beta, _) = system.solve(responses);
    let diagonal = system.inverse_diagonal(precision == Precision::Refined);
    let mut total = 0.0;
    for (b, d) in beta.iter().zip(&diagonal) {
        let residual = b / d;
        total += residual * residual;
    }
    Ok(if total.is_nan() { f64::INFINITY } else { total })
}

/// Objective and constraint surrogates over one shared training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateBundle {
    pub objective: RbfModel,
    pub constraints: Vec<RbfModel>,
}

impl SurrogateBundle {
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Predicts the objective and every constraint, sharing the distance
    /// computations across models.
    pub fn predict_all(&self, x: &[f64], constraints: &mut Vec<f64>) -> f64 {
        let q = self.constraints.len();
        // Sums in the first q slots, their compensation terms in the next q.
        constraints.clear();
        constraints.resize(2 * q, 0.0);
        let mut objective = CompensatedSum::default();
        for (i, center) in self.objective.centers().enumerate() {
            let r2 = squared_distance(x, center);
            let m = &self.objective;
            let phi = m.kernel.value_sq(r2, m.shape);
            objective.add_product(m.beta[i], phi);
            objective.add_small_product(m.beta_low[i], phi);
            for (j, model) in self.constraints.iter().enumerate() {
                let mut acc = CompensatedSum {
                    sum: constraints[j],
                    compensation: constraints[q + j],
                };
                let phi = model.kernel.value_sq(r2, model.shape);
                acc.add_product(model.beta[i], phi);
                acc.add_small_product(model.beta_low[i], phi);
                constraints[j] = acc.sum;
                constraints[q + j] = acc.compensation;
            }
        }
        for j in 0..q {
            constraints[j] += constraints[q + j];
        }
        constraints.truncate(q);
        objective.value()
    }
}

/// Fits the objective and one model per constraint component on `set`.
///
/// With `tune` on, every model gets its own shape from [`tune_shape`];
/// otherwise (or with fewer than two samples) [`DEFAULT_SHAPE`] is used.
pub fn build_bundle(set: &SampleSet, kernel: KernelKind, tune: bool) -> Result<SurrogateBundle> {
    if set.is_empty() {
        return Err(SsboError::Empty { what: "sample set" });
    }
    let inputs: Vec<UnitPoint> = set.iter().map(|s| s.x.clone()).collect();
    let sq = squared_distances(&inputs);
    let dim = set.dim();

    let fit_one = |responses: &[f64]| -> Result<RbfModel> {
        let shape = if tune && responses.len() >= 2 {
            tune_from_distances(&sq, responses, kernel)?
        } else {
            DEFAULT_SHAPE
        };
        let system = Factored::new(kernel_matrix(&sq, kernel, shape))?;
        Ok(RbfModel::assemble(&inputs, dim, responses, kernel, shape, &system))
    };

    let objective_values: Vec<f64> = set.iter().map(|s| s.objective).collect();
    let objective = fit_one(&objective_values)?;
    let constraints = (0..set.num_constraints())
        .map(|j| {
            let values: Vec<f64> = set.iter().map(|s| s.constraints[j]).collect();
            fit_one(&values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurrogateBundle {
        objective,
        constraints,
    })
}

fn check_shape(shape: f64) -> Result<()> {
    if shape > 0.0 && shape.is_finite() {
        Ok(())
    } else {
        Err(SsboError::InvalidConfig(format!(
            "shape parameter must be positive and finite, got {shape}"
        )))
    }
}

/// Returns the common dimension after checking sizes, finiteness and
/// pairwise distinctness.
fn validate_training(inputs: &[UnitPoint], responses: &[f64], min_len: usize) -> Result<usize> {
    if inputs.len() < min_len.max(1) {
        return Err(if inputs.is_empty() {
            SsboError::Empty { what: "training set" }
        } else {
            SsboError::InvalidConfig(format!(
                "need at least {min_len} samples, got {}",
                inputs.len()
            ))
        });
    }
    if responses.len() != inputs.len() {
        return Err(SsboError::DimensionMismatch {
            expected: inputs.len(),
            found: responses.len(),
        });
    }
    if responses.iter().any(|v| !v.is_finite()) {
        return Err(SsboError::NonFinite("responses"));
    }
    let dim = inputs[0].dim();
    for p in inputs {
        if p.dim() != dim {
            return Err(SsboError::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
    }
    let tol2 = DUPLICATE_TOLERANCE * DUPLICATE_TOLERANCE;
    for i in 0..inputs.len() {
        for j in i + 1..inputs.len() {
            if squared_distance(inputs[i].coords(), inputs[j].coords()) <= tol2 {
                return Err(SsboError::DuplicateInputs { first: i, second: j });
            }
        }
    }
    Ok(dim)
}

fn squared_distances(inputs: &[UnitPoint]) -> DMatrix<f64> {
    let n = inputs.len();
    DMatrix::from_fn(n, n, |i, j| squared_distance(inputs[i].coords(), inputs[j].coords()))
}

fn kernel_matrix(sq: &DMatrix<f64>, kernel: KernelKind, shape: f64) -> DMatrix<f64> {
    sq.map(|r2| kernel.value_sq(r2, shape))
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn invert(f: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inverse = f.clone().lu().try_inverse()?;
    inverse.iter().all(|v| v.is_finite()).then_some(inverse)
}

/// Running sum of products with the rounding error of every step carried
/// separately (Ogita, Rump and Oishi's `Dot2`).
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    fn starting_at(value: f64) -> Self {
        Self {
            sum: value,
            compensation: 0.0,
        }
    }

    #[inline]
    fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let p_err = a.mul_add(b, -p);
        let s = self.sum + p;
        let z = s - self.sum;
        let s_err = (self.sum - (s - z)) + (p - z);
        self.sum = s;
        self.compensation += p_err + s_err;
    }

    /// Adds a term far below the running sum; its own rounding error is
    /// negligible, so it goes straight into the compensation.
    #[inline]
    fn add_small_product(&mut self, a: f64, b: f64) {
        self.compensation += a * b;
    }

    fn value(self) -> f64 {
        self.sum + self.compensation
    }
}

/// A symmetric kernel system `F + lambda I` with its inverse.
struct Factored {
    /// The matrix actually inverted, ridge included.
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    ridge: f64,
    condition: f64,
}

impl Factored {
    /// Inverts `f`, or `f + lambda I` when `f` is singular or its 1-norm
    /// condition number exceeds [`CONDITION_LIMIT`].
    fn new(f: DMatrix<f64>) -> Result<Self> {
        if let Some(inverse) = invert(&f) {
            let condition = norm1(&f) * norm1(&inverse);
            if condition <= CONDITION_LIMIT {
                return Ok(Self {
                    matrix: f,
                    inverse,
                    ridge: 0.0,
                    condition,
                });
            }
        }
        let n = f.nrows();
        let mut scale = f.diagonal().mean();
        if scale <= 0.0 {
            // Thin plate spline has a zero diagonal.
            scale = f.iter().map(|v| v.abs()).sum::<f64>() / (n * n) as f64;
        }
        let ridge = RIDGE_FACTOR * scale;
        if !(ridge > 0.0) {
            return Err(SsboError::Unsolvable);
        }
        Self::with_ridge(f, ridge).ok_or(SsboError::Unsolvable)
    }

    fn with_ridge(mut f: DMatrix<f64>, ridge: f64) -> Option<Self> {
        for i in 0..f.nrows() {
            f[(i, i)] += ridge;
        }
        let inverse = invert(&f)?;
        let condition = norm1(&f) * norm1(&inverse);
        Some(Self {
            matrix: f,
            inverse,
            ridge,
            condition,
        })
    }

    /// `y - A (x + x_low)` with compensated accumulation.
    fn residual(&self, y: &[f64], x: &[f64], x_low: &[f64]) -> DVector<f64> {
        // Symmetric, so column i is row i and stays contiguous.
        DVector::from_iterator(
            y.len(),
            self.matrix.column_iter().zip(y).map(|(row, &yi)| {
                let mut acc = CompensatedSum::starting_at(yi);
                for ((&a, &xj), &xj_low) in row.iter().zip(x).zip(x_low) {
                    acc.add_product(-a, xj);
                    acc.add_small_product(-a, xj_low);
                }
                acc.value()
            }),
        )
    }

    /// Improves the two-word solution `x + x_low` of `A x = y`, stopping
    /// once a pass fails to halve the residual.
    fn refine(&self, y: &[f64], x: &mut [f64], x_low: &mut [f64]) {
        let mut previous = f64::INFINITY;
        for _ in 0..MAX_REFINEMENTS {
            let r = self.residual(y, x, x_low);
            let size = r.amax();
            if size == 0.0 || !(size < 0.5 * previous) {
                break;
            }
            previous = size;
            let correction = &self.inverse * r;
            for ((hi, lo), d) in x.iter_mut().zip(x_low.iter_mut()).zip(correction.iter()) {
                let s = *hi + d;
                let z = s - *hi;
                let err = (*hi - (s - z)) + (d - z) + *lo;
                *hi = s + err;
                *lo = err - (*hi - s);
            }
        }
    }

    /// Two-word solution of `A x = y`.
    fn solve(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut x: Vec<f64> = (&self.inverse * DVector::from_column_slice(y)).iter().copied().collect();
        let mut x_low = vec![0.0; x.len()];
        self.refine(y, &mut x, &mut x_low);
        (x, x_low)
    }

    /// Diagonal of `A^-1`. With `refine`, ill-conditioned systems solve
    /// for each column.
    fn inverse_diagonal(&self, refine: bool) -> Vec<f64> {
        let n = self.inverse.nrows();
        if !refine || self.condition <= DIAGONAL_REFINE_CONDITION {
            return (0..n).map(|k| self.inverse[(k, k)]).collect();
        }
        let mut unit = vec![0.0; n];
        (0..n)
            .map(|k| {
                unit[k] = 1.0;
                let mut column: Vec<f64> = self.inverse.column(k).iter().copied().collect();
                let mut low = vec![0.0; n];
                self.refine(&unit, &mut column, &mut low);
                unit[k] = 0.0;
                column[k] + low[k]
            })
            .collect()
    }
}
