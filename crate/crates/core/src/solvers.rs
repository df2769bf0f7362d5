//! Optimizers for cheap functions (surrogates only).
//!
//! * [`ga_minimize`]: real-coded genetic algorithm with feasibility-first
//!   ranking, used for the global surrogate search.
//! * [`local_minimize`]: penalized projected-gradient descent with
//!   finite-difference gradients and Armijo backtracking, used inside the
//!   reduced interval.
//! * [`candidate_search`]: argmin over a finite candidate list.
//!
//! All of them work on a [`BoxProblem`] whose box is a sub-box of the unit
//! cube and whose constraints are feasible when `<= 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design_space::{lhs_sample_with, DesignSpace, LhsOptions, UnitPoint};
use crate::error::{Result, SsboError};
use crate::rbf::SurrogateBundle;

type Evaluate<'a> = Box<dyn Fn(&[f64], &mut Vec<f64>) -> f64 + 'a>;

/// One scalar function of a unit-space point.
pub type ScalarFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

/// Box-constrained problem on (a sub-box of) the unit cube.
pub struct BoxProblem<'a> {
    space: DesignSpace,
    num_constraints: usize,
    evaluate: Evaluate<'a>,
}

impl<'a> BoxProblem<'a> {
    /// `evaluate(x, g)` returns the objective and writes the constraint
    /// values into `g`.
    pub fn new<F>(space: DesignSpace, num_constraints: usize, evaluate: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut Vec<f64>) -> f64 + 'a,
    {
        let inside = space.lower().iter().all(|&v| v >= 0.0) && space.upper().iter().all(|&v| v <= 1.0);
        if !inside {
            return Err(SsboError::InvalidBounds("solver box must lie inside the unit cube".into()));
        }
        Ok(Self {
            space,
            num_constraints,
            evaluate: Box::new(evaluate),
        })
    }

    pub fn unconstrained<F>(space: DesignSpace, objective: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + 'a,
    {
        Self::new(space, 0, move |x, g| {
            g.clear();
            objective(x)
        })
    }

    /// Objective plus a list of separate constraint callables.
    pub fn from_parts<F>(
        space: DesignSpace,
        objective: F,
        constraints: Vec<ScalarFn<'a>>,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + 'a,
    {
        let q = constraints.len();
        Self::new(space, q, move |x, g| {
            g.clear();
            g.extend(constraints.iter().map(|c| c(x)));
            objective(x)
        })
    }

    /// Surrogate objective and constraints of `bundle` on `space`.
    pub fn from_bundle(bundle: &'a SurrogateBundle, space: DesignSpace) -> Result<Self> {
        if space.dim() != bundle.dim() {
            return Err(SsboError::DimensionMismatch {
                expected: bundle.dim(),
                found: space.dim(),
            });
        }
        Self::new(space, bundle.num_constraints(), move |x, g| bundle.predict_all(x, g))
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    fn evaluate(&self, x: &[f64], g: &mut Vec<f64>) -> Result<f64> {
        let f = (self.evaluate)(x, g);
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(SsboError::NonFinite("solver callable"));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub population: usize,
    pub generations: usize,
    pub penalty_weight: f64,
    /// Finite-difference step in unit coordinates.
    pub fd_step: f64,
    pub max_local_iters: usize,
    pub seed: u64,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    /// BLX-alpha blend extension.
    pub blend_alpha: f64,
    /// Mutation standard deviation as a fraction of the box width.
    pub mutation_scale: f64,
    /// Per-gene mutation probability; `None` means `1 / m`.
    pub mutation_rate: Option<f64>,
    pub elitism: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 100,
            penalty_weight: 1e3,
            fd_step: 1e-6,
            max_local_iters: 100,
            seed: 0,
            tournament_size: 2,
            crossover_rate: 0.9,
            blend_alpha: 0.5,
            mutation_scale: 0.1,
            mutation_rate: None,
            elitism: 1,
        }
    }
}

impl SolverSettings {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SsboError::InvalidConfig(msg.to_string()));
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if self.generations == 0 || self.max_local_iters == 0 || self.tournament_size == 0 {
            return bad("generations, max_local_iters and tournament_size must be at least 1");
        }
        if self.elitism >= self.population {
            return bad("elitism must be smaller than the population");
        }
        if !(self.penalty_weight > 0.0 && self.penalty_weight.is_finite()) {
            return bad("penalty_weight must be positive");
        }
        if !(self.fd_step > 0.0 && self.fd_step < 1e-2) {
            return bad("fd_step must lie in (0, 1e-2)");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(self.blend_alpha >= 0.0) {
            return bad("crossover_rate must lie in [0, 1] and blend_alpha must be >= 0");
        }
        if !(self.mutation_scale >= 0.0) {
            return bad("mutation_scale must be >= 0");
        }
        if let Some(rate) = self.mutation_rate {
            if !(0.0..=1.0).contains(&rate) {
                return bad("mutation_rate must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

fn total_violation(g: &[f64]) -> f64 {
    g.iter().map(|&v| v.max(0.0)).sum()
}

/// `objective(x) + w * sum_j max(0, g_j(x))^2`.
pub fn penalized_value(problem: &BoxProblem<'_>, x: &UnitPoint, weight: f64) -> Result<f64> {
    if x.dim() != problem.dim() {
        return Err(SsboError::DimensionMismatch {
            expected: problem.dim(),
            found: x.dim(),
        });
    }
    let mut g = Vec::with_capacity(problem.num_constraints());
    penalized(problem, x.coords(), weight, &mut g)
}

fn penalized(problem: &BoxProblem<'_>, x: &[f64], weight: f64, g: &mut Vec<f64>) -> Result<f64> {
    let f = problem.evaluate(x, g)?;
    let penalty: f64 = g.iter().map(|&v| v.max(0.0).powi(2)).sum();
    Ok(if penalty > 0.0 { f + weight * penalty } else { f })
}

#[derive(Debug, Clone, Copy)]
struct Fitness {
    objective: f64,
    violation: f64,
}

impl Fitness {
    fn feasible(&self) -> bool {
        self.violation <= 0.0
    }

    /// Feasible beats infeasible; then lower objective, or lower violation.
    fn better_than(&self, other: &Fitness) -> bool {
        match (self.feasible(), other.feasible()) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.objective < other.objective,
            (false, false) => self.violation < other.violation,
        }
    }
}

/// Genetic algorithm over the problem's box; returns the best point ever
/// evaluated under feasibility-first ranking.
pub fn ga_minimize(problem: &BoxProblem<'_>, settings: &SolverSettings) -> Result<UnitPoint> {
    settings.validate()?;
    let space = problem.space();
    let m = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mutation_rate = settings.mutation_rate.unwrap_or(1.0 / m as f64);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut g = Vec::with_capacity(problem.num_constraints());

    let mut score = |x: &[f64]| -> Result<Fitness> {
        let objective = problem.evaluate(x, &mut g)?;
        Ok(Fitness {
            objective,
            violation: total_violation(&g),
        })
    };

    let mut population: Vec<Vec<f64>> =
        lhs_sample_with(settings.population, m, &mut rng, LhsOptions::default())?
            .into_iter()
            .map(|u| {
                u.coords()
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| space.lower()[i] + c * space.width(i))
                    .collect()
            })
            .collect();
    for x in &mut population {
        space.clip(x);
    }
    let mut fitness = population.iter().map(|x| score(x)).collect::<Result<Vec<_>>>()?;

    let best_of = |fitness: &[Fitness]| {
        (1..fitness.len()).fold(0, |b, i| if fitness[i].better_than(&fitness[b]) { i } else { b })
    };
    let mut best_idx = best_of(&fitness);
    let mut best_x = population[best_idx].clone();
    let mut best_fit = fitness[best_idx];

    for _ in 0..settings.generations {
        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&a, &b| {
            if fitness[a].better_than(&fitness[b]) {
                std::cmp::Ordering::Less
            } else if fitness[b].better_than(&fitness[a]) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        let mut next: Vec<Vec<f64>> = ranked[..settings.elitism]
            .iter()
            .map(|&i| population[i].clone())
            .collect();
        let mut next_fit: Vec<Fitness> = ranked[..settings.elitism].iter().map(|&i| fitness[i]).collect();

        while next.len() < settings.population {
            let a = tournament(&fitness, settings.tournament_size, &mut rng);
            let b = tournament(&fitness, settings.tournament_size, &mut rng);
            let (mut c1, mut c2) = (population[a].clone(), population[b].clone());
            if rng.random::<f64>() < settings.crossover_rate {
                for i in 0..m {
                    let (lo, hi) = (c1[i].min(c2[i]), c1[i].max(c2[i]));
                    let ext = settings.blend_alpha * (hi - lo);
                    c1[i] = lo - ext + rng.random::<f64>() * (hi - lo + 2.0 * ext);
                    c2[i] = lo - ext + rng.random::<f64>() * (hi - lo + 2.0 * ext);
                }
            }
            for child in [&mut c1, &mut c2] {
                for (i, v) in child.iter_mut().enumerate() {
                    if rng.random::<f64>() < mutation_rate {
                        *v += settings.mutation_scale * space.width(i) * normal.sample(&mut rng);
                    }
                }
                space.clip(child);
            }
            for child in [c1, c2] {
                if next.len() < settings.population {
                    next_fit.push(score(&child)?);
                    next.push(child);
                }
            }
        }
        population = next;
        fitness = next_fit;
        best_idx = best_of(&fitness);
        if fitness[best_idx].better_than(&best_fit) {
            best_fit = fitness[best_idx];
            best_x = population[best_idx].clone();
        }
    }
    Ok(UnitPoint::from_clamped(best_x))
}

fn tournament<R: Rng>(fitness: &[Fitness], size: usize, rng: &mut R) -> usize {
    let mut winner = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let challenger = rng.random_range(0..fitness.len());
        if fitness[challenger].better_than(&fitness[winner]) {
            winner = challenger;
        }
    }
    winner
}

const GRADIENT_TOLERANCE: f64 = 1e-8;
const STEP_TOLERANCE: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;

/// Penalized projected-gradient descent from `start`.
///
/// The returned point lies in the box and its penalized value never
/// exceeds that of `start`.
pub fn local_minimize(
    problem: &BoxProblem<'_>,
    start: &UnitPoint,
    settings: &SolverSettings,
) -> Result<UnitPoint> {
    settings.validate()?;
    if start.dim() != problem.dim() {
        return Err(SsboError::DimensionMismatch {
            expected: problem.dim(),
            found: start.dim(),
        });
    }
    let space = problem.space();
    let m = space.dim();
    let w = settings.penalty_weight;
    let mut g = Vec::with_capacity(problem.num_constraints());
    let mut value = |x: &[f64]| penalized(problem, x, w, &mut g);

    let mut x = start.coords().to_vec();
    space.clip(&mut x);
    let mut fx = value(&x)?;
    let diameter = (0..m).map(|i| space.width(i).powi(2)).sum::<f64>().sqrt();
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;

    for _ in 0..settings.max_local_iters {
        let grad = fd_gradient(&mut value, &x, fx, space, settings.fd_step)?;
        // Components pushing against an active bound cannot move.
        let projected: f64 = (0..m)
            .map(|i| {
                let blocked = (x[i] <= space.lower()[i] && grad[i] > 0.0)
                    || (x[i] >= space.upper()[i] && grad[i] < 0.0);
                if blocked {
                    0.0
                } else {
                    grad[i] * grad[i]
                }
            })
            .sum::<f64>()
            .sqrt();
        if projected < GRADIENT_TOLERANCE {
            break;
        }

        // Barzilai-Borwein trial step when curvature is available.
        let mut t = diameter / projected;
        if let Some((px, pg)) = &previous {
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..m {
                let s = x[i] - px[i];
                ss += s * s;
                sy += s * (grad[i] - pg[i]);
            }
            if sy > 0.0 {
                t = t.min(ss / sy).max(STEP_TOLERANCE / projected);
            }
        }

        let mut accepted = None;
        loop {
            let mut trial: Vec<f64> = (0..m).map(|i| x[i] - t * grad[i]).collect();
            space.clip(&mut trial);
            let step: Vec<f64> = (0..m).map(|i| trial[i] - x[i]).collect();
            let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
            if step_norm < STEP_TOLERANCE {
                break;
            }
            let ft = value(&trial)?;
            let slope: f64 = (0..m).map(|i| grad[i] * step[i]).sum();
            if ft <= fx + ARMIJO * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, ft)) => {
                previous = Some((std::mem::replace(&mut x, trial), grad));
                fx = ft;
            }
            None => break,
        }
    }
    Ok(UnitPoint::from_clamped(x))
}

/// Central differences, one-sided where the stencil would leave the box.
fn fd_gradient<F>(value: &mut F, x: &[f64], fx: f64, space: &DesignSpace, h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let (lo, hi) = (space.lower()[i], space.upper()[i]);
        let up = x[i] + h <= hi;
        let down = x[i] - h >= lo;
        grad[i] = match (down, up) {
            (true, true) => {
                probe[i] = x[i] + h;
                let fp = value(&probe)?;
                probe[i] = x[i] - h;
                let fm = value(&probe)?;
                (fp - fm) / (2.0 * h)
            }
            (false, true) => {
                probe[i] = x[i] + h;
                (value(&probe)? - fx) / h
            }
            (true, false) => {
                probe[i] = x[i] - h;
                (fx - value(&probe)?) / h
            }
            (false, false) => 0.0,
        };
        probe[i] = x[i];
    }
    Ok(grad)
}

/// Candidate with the smallest score; ties go to the lowest index.
pub fn candidate_search<F>(score: F, candidates: &[UnitPoint]) -> Result<&UnitPoint>
where
    F: Fn(&UnitPoint) -> f64,
{
    let first = candidates.first().ok_or(SsboError::Empty { what: "candidate list" })?;
    let mut best = (first, score(first));
    for c in &candidates[1..] {
        let s = score(c);
        if s < best.1 {
            best = (c, s);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::constrained_2d;

    fn unit(m: usize) -> DesignSpace {
        DesignSpace::unit(m).unwrap()
    }

    fn pt(v: &[f64]) -> UnitPoint {
        UnitPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn penalty_values() {
        let free = BoxProblem::unconstrained(unit(1), |x| x[0] * 3.0).unwrap();
        assert_eq!(penalized_value(&free, &pt(&[0.5]), 1e3).unwrap(), 1.5);

        let p = BoxProblem::from_parts(unit(1), |_| 0.0, vec![Box::new(|_| 2.0)]).unwrap();
        assert_eq!(penalized_value(&p, &pt(&[0.1]), 1000.0).unwrap(), 4000.0);

        let feasible = BoxProblem::from_parts(unit(1), |x| x[0] + 1.0, vec![Box::new(|_| -5.0)]).unwrap();
        assert_eq!(penalized_value(&feasible, &pt(&[0.25]), 1000.0).unwrap(), 1.25);

        let bad = BoxProblem::unconstrained(unit(1), |_| f64::NAN).unwrap();
        assert!(penalized_value(&bad, &pt(&[0.5]), 1.0).is_err());
    }

    #[test]
    fn box_must_be_inside_unit_cube() {
        let big = DesignSpace::new(vec![0.0], vec![2.0]).unwrap();
        assert!(BoxProblem::unconstrained(big, |x| x[0]).is_err());
    }

    #[test]
    fn ga_finds_sphere_center() {
        let p = BoxProblem::unconstrained(unit(2), |x| {
            (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)
        })
        .unwrap();
        let x = ga_minimize(&p, &SolverSettings::default()).unwrap();
        assert!(x.distance(&pt(&[0.5, 0.5])) < 0.05, "{x:?}");
    }

    #[test]
    fn ga_is_deterministic() {
        let p = BoxProblem::unconstrained(unit(3), |x| x.iter().map(|v| (v * 7.0).sin()).sum()).unwrap();
        let s = SolverSettings { seed: 42, ..Default::default() };
        assert_eq!(ga_minimize(&p, &s).unwrap(), ga_minimize(&p, &s).unwrap());
    }

    #[test]
    fn ga_solves_true_constrained_problem() {
        let to_raw = |x: &[f64]| [10.0 * x[0], 10.0 * x[1]];
        let p = BoxProblem::new(unit(2), 3, move |x, g| {
            let (j, c) = constrained_2d(&to_raw(x));
            g.clear();
            g.extend_from_slice(&c);
            j
        })
        .unwrap();
        let x = ga_minimize(&p, &SolverSettings { seed: 5, ..Default::default() }).unwrap();
        let (j, g) = constrained_2d(&to_raw(x.coords()));
        assert!(g.iter().all(|&v| v <= 0.0), "{g:?}");
        assert!((j - 5.1765).abs() < 0.2, "{j}");
    }

    #[test]
    fn ga_prefers_feasible_points() {
        // Feasible only for x > 0.9, objective prefers small x.
        let p = BoxProblem::from_parts(unit(1), |x| x[0], vec![Box::new(|x| 0.9 - x[0])]).unwrap();
        let x = ga_minimize(&p, &SolverSettings::default()).unwrap();
        assert!(x.coords()[0] >= 0.9);
    }

    #[test]
    fn ga_respects_sub_box() {
        let sub = DesignSpace::new(vec![0.2, 0.6], vec![0.3, 0.9]).unwrap();
        let p = BoxProblem::unconstrained(sub.clone(), |x| -x[0] - x[1]).unwrap();
        let x = ga_minimize(&p, &SolverSettings::default()).unwrap();
        assert!(sub.contains(x.coords()));
    }

    #[test]
    fn local_quadratic_1d() {
        let p = BoxProblem::unconstrained(unit(1), |x| (x[0] - 0.3).powi(2)).unwrap();
        let x = local_minimize(&p, &pt(&[0.9]), &SolverSettings::default()).unwrap();
        assert!((x.coords()[0] - 0.3).abs() < 1e-4, "{x:?}");
    }

    #[test]
    fn local_stays_at_stationary_point() {
        let p = BoxProblem::unconstrained(unit(2), |x| (x[0] - 0.4).powi(2) + (x[1] - 0.6).powi(2)).unwrap();
        let start = pt(&[0.4, 0.6]);
        assert_eq!(local_minimize(&p, &start, &SolverSettings::default()).unwrap(), start);
    }

    #[test]
    fn local_hits_active_bound() {
        let p = BoxProblem::unconstrained(unit(1), |x| -x[0]).unwrap();
        let x = local_minimize(&p, &pt(&[0.5]), &SolverSettings::default()).unwrap();
        assert_eq!(x.coords(), &[1.0]);
    }

    #[test]
    fn local_never_worsens_and_stays_in_box() {
        let sub = DesignSpace::new(vec![0.1, 0.2], vec![0.4, 0.5]).unwrap();
        let p = BoxProblem::from_parts(
            sub.clone(),
            |x| (3.0 * x[0]).sin() + x[1] * x[1],
            vec![Box::new(|x| 0.25 - x[0] - x[1])],
        )
        .unwrap();
        for start in [[0.1, 0.2], [0.4, 0.5], [0.25, 0.33]] {
            let s = pt(&start);
            let x = local_minimize(&p, &s, &SolverSettings::default()).unwrap();
            assert!(sub.contains(x.coords()));
            let w = SolverSettings::default().penalty_weight;
            assert!(penalized_value(&p, &x, w).unwrap() <= penalized_value(&p, &s, w).unwrap() + 1e-12);
        }
    }

    #[test]
    fn candidate_search_rules() {
        let one = vec![pt(&[0.3])];
        assert_eq!(candidate_search(|_| 1.0, &one).unwrap(), &one[0]);
        let two = vec![pt(&[0.3]), pt(&[0.7])];
        assert_eq!(candidate_search(|_| 2.0, &two).unwrap(), &two[0]);
        assert!(candidate_search(|_| 0.0, &[]).is_err());
    }

    #[test]
    fn candidate_search_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cands: Vec<UnitPoint> = (0..10_000).map(|_| pt(&[rng.random::<f64>(), rng.random::<f64>()])).collect();
        let score = |p: &UnitPoint| (p.coords()[0] * 13.0).sin() * (p.coords()[1] * 5.0).cos();
        let got = candidate_search(score, &cands).unwrap();
        let mut best = 0;
        for i in 1..cands.len() {
            if score(&cands[i]) < score(&cands[best]) {
                best = i;
            }
        }
        assert_eq!(got, &cands[best]);
    }

    #[test]
    fn settings_validation() {
        assert!(SolverSettings::default().validate().is_ok());
        assert!(SolverSettings { fd_step: 0.1, ..Default::default() }.validate().is_err());
        assert!(SolverSettings { population: 1, ..Default::default() }.validate().is_err());
        assert!(SolverSettings { generations: 0, ..Default::default() }.validate().is_err());
    }
}
