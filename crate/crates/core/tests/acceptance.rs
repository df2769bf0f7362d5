//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=5,7` restricts the run to the listed criteria.

use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssbo_core::driver::RunRecord;
use ssbo_core::harness::{export_history, export_summary, run_batch, run_batch_on, BatchConfig};
use ssbo_core::{
    criterion_uniform, lhs_sample, loocv_error, make_problem, reduced_interval, run, DesignSpace, Evaluation,
    Incumbent, KernelKind, ProblemParams, ProblemSpec, RbfModel, RunConfig, Sample, SampleSet, UnitPoint,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<UnitPoint> {
    (0..n)
        .map(|_| UnitPoint::new((0..m).map(|_| rng.random::<f64>()).collect()).unwrap())
        .collect()
}

fn random_responses(rng: &mut ChaCha8Rng, xs: &[UnitPoint]) -> Vec<f64> {
    let a: f64 = rng.random_range(-5.0..5.0);
    xs.iter()
        .map(|x| {
            let s: f64 = x.coords().iter().enumerate().map(|(i, v)| (3.0 * v + i as f64).sin()).sum();
            a * s + rng.random_range(-1.0..1.0)
        })
        .collect()
}

fn set_from(points: &[UnitPoint]) -> SampleSet {
    let mut set = SampleSet::new(points[0].dim(), 0);
    for p in points {
        set.push(Sample::new(p.clone(), p.coords().to_vec(), 0.0, vec![]).unwrap()).unwrap();
    }
    set
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut checked, mut worst) = (0, 0.0_f64);
    for _ in 0..200 {
        let m = *[1, 2, 4, 8].choose(&mut rng).unwrap();
        let n = rng.random_range(3..=30);
        let kernel = *KernelKind::ALL.choose(&mut rng).unwrap();
        let c = *[0.1, 1.0, 10.0].choose(&mut rng).unwrap();
        let xs = random_points(&mut rng, n, m);
        let ys = random_responses(&mut rng, &xs);
        let model = RbfModel::fit(&xs, &ys, kernel, c).unwrap();
        if model.ridge() != 0.0 {
            continue;
        }
        checked += 1;
        let scale = 1.0 + ys.iter().fold(0.0_f64, |a, y| a.max(y.abs()));
        for (x, y) in xs.iter().zip(&ys) {
            worst = worst.max((model.predict(x).unwrap() - y).abs() / scale);
        }
    }
    Outcome::new(
        worst <= 1e-6 && checked > 0,
        format!("{checked} unregularized fits, worst scaled residual {worst:.2e}"),
    )
}

/// Literal leave-one-out: refit on each `n - 1` subset with the full
/// system's regularization.
fn literal_loocv(xs: &[UnitPoint], ys: &[f64], kernel: KernelKind, c: f64) -> f64 {
    let ridge = RbfModel::fit(xs, ys, kernel, c).unwrap().ridge();
    (0..xs.len())
        .map(|i| {
            let sx: Vec<UnitPoint> = xs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p.clone()).collect();
            let sy: Vec<f64> = ys.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
            let model = RbfModel::fit_regularized(&sx, &sy, kernel, c, ridge).unwrap();
            (ys[i] - model.predict(&xs[i]).unwrap()).powi(2)
        })
        .sum()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let m = rng.random_range(1..=4);
        let n = rng.random_range(3..=25);
        let kernel = *KernelKind::ALL.choose(&mut rng).unwrap();
        let c = 10f64.powf(rng.random_range(-1.0..1.0));
        let xs = random_points(&mut rng, n, m);
        let ys = random_responses(&mut rng, &xs);
        let fast = loocv_error(&xs, &ys, kernel, c).unwrap();
        let slow = literal_loocv(&xs, &ys, kernel, c);
        worst = worst.max((fast - slow).abs() / slow.abs().max(1e-300));
    }
    Outcome::new(worst <= 1e-8, format!("50 datasets, worst relative gap {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut failures = 0;
    for case in 0..20 {
        let m = rng.random_range(1..=5);
        let n = rng.random_range(1..=30);
        let set = set_from(&random_points(&mut rng, n, m));
        let seed = 1000 + case;
        let chosen = criterion_uniform(&set, 10_000, seed).unwrap();
        let draw = lhs_sample(10_000, m, seed).unwrap();
        let best = draw.iter().map(|d| set.min_distance(d).unwrap()).fold(f64::NEG_INFINITY, f64::max);
        if set.min_distance(&chosen.x).unwrap() < best || !draw.contains(&chosen.x) {
            failures += 1;
        }
    }
    Outcome::new(failures == 0, format!("20 sample sets, {failures} not max-min optimal"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut failures = Vec::new();
    for case in 0..100 {
        let m = rng.random_range(1..=6);
        let n = rng.random_range(1..=40);
        let pts = random_points(&mut rng, n, m);
        let set = set_from(&pts);
        let inc = Incumbent {
            index: rng.random_range(0..n),
            feasible: true,
        };
        let p = rng.random_range(1..=n);
        let ri = reduced_interval(&set, &inc, p).unwrap();

        let center = &pts[inc.index];
        let mut brute: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, x)| (x.distance(center), i)).collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut want: Vec<usize> = brute[..p].iter().map(|&(_, i)| i).collect();
        let mut got = ri.members.clone();
        want.sort_unstable();
        got.sort_unstable();

        let lo = ri.space.lower();
        let hi = ri.space.upper();
        let in_cube = lo.iter().all(|&v| v >= 0.0) && hi.iter().all(|&v| v <= 1.0);
        let holds_incumbent = ri.space.contains(center.coords());
        let holds_members = ri.members.iter().all(|&i| ri.space.contains(pts[i].coords()));
        if got != want || !in_cube || !holds_incumbent || !holds_members {
            failures.push(case);
        }
    }
    Outcome::new(failures.is_empty(), format!("100 cases, failing: {failures:?}"))
}

fn batch(problem: &str, params: ProblemParams, run: RunConfig, replications: usize, seed: u64) -> Vec<RunRecord> {
    let mut cfg = BatchConfig::new(problem, run, replications, seed);
    cfg.params = params;
    run_batch(&cfg).unwrap().records
}

fn finals(records: &[RunRecord]) -> Vec<f64> {
    records.iter().filter_map(|r| r.final_objective()).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_5() -> Outcome {
    let params = ProblemParams {
        alpha: Some(512.0),
        ..Default::default()
    };
    // 3 initial points + 97 added = 100 true evaluations.
    let run = RunConfig {
        k_max: 97,
        ..Default::default()
    };
    let records = batch("forrester", params, run, 20, 5000);
    let js = finals(&records);
    let hits = js.iter().filter(|&&j| j <= -8.80).count();
    let m = mean(&js);
    let evals = mean(&records.iter().map(|r| r.evaluations as f64).collect::<Vec<_>>());
    Outcome::new(
        js.len() == 20 && hits * 100 >= 80 * 20 && m <= -8.5,
        format!("{hits}/20 reach J <= -8.80, mean J {m:.4}, mean evaluations {evals:.1}"),
    )
}

fn feasible_finals(records: &[RunRecord]) -> Vec<f64> {
    records.iter().filter(|r| r.final_feasible()).filter_map(|r| r.final_objective()).collect()
}

fn criterion_6() -> Outcome {
    // 5 initial points + 20 added = 25 true evaluations.
    let run = RunConfig {
        k_max: 20,
        ..Default::default()
    };
    let records = batch("constrained2d", ProblemParams::default(), run, 50, 6000);
    let js = feasible_finals(&records);
    let m = mean(&js);
    let sd = (js.iter().map(|j| (j - m).powi(2)).sum::<f64>() / (js.len() as f64 - 1.0)).sqrt();
    Outcome::new(
        js.len() * 100 >= 90 * 50 && m <= 5.30,
        format!("{}/50 feasible, mean feasible J {m:.4}, std {sd:.4}", js.len()),
    )
}

fn criterion_7() -> Outcome {
    let run = RunConfig {
        n0: Some(9),
        k_max: 100,
        ..Default::default()
    };
    let records = batch("welded_plate", ProblemParams::default(), run, 20, 7000);
    let js = feasible_finals(&records);
    let m = mean(&js);
    let mut active = [0.0_f64; 5];
    let mut counted = 0.0;
    for r in records.iter().filter(|r| r.final_feasible()) {
        let g = &r.rows[r.incumbent.unwrap()].constraints;
        for (a, v) in active.iter_mut().zip(g) {
            *a += v;
        }
        counted += 1.0;
    }
    let pattern: Vec<String> = active.iter().map(|a| format!("{:.3}", a / counted)).collect();
    Outcome::new(
        js.len() == 20 && m <= 2.80,
        format!(
            "{}/20 feasible, mean feasible cost {m:.4}, mean g at incumbent [{}]",
            js.len(),
            pattern.join(", ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let problem = make_problem("constrained2d", &ProblemParams::default()).unwrap();
    let cfg = RunConfig {
        k_max: 15,
        seed: 88,
        ..Default::default()
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    export_history(&run(&problem, &cfg).unwrap(), &a).unwrap();
    export_history(&run(&problem, &cfg).unwrap(), &b).unwrap();
    let same_history = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();

    let batch_cfg = BatchConfig::new(
        "forrester",
        RunConfig {
            k_max: 12,
            ..Default::default()
        },
        4,
        808,
    );
    let s1 = run_batch(&batch_cfg).unwrap().summary;
    let s2 = run_batch(&batch_cfg).unwrap().summary;
    let (ja, jb) = (dir.path().join("a.json"), dir.path().join("b.json"));
    export_summary(&s1, &batch_cfg, &ja).unwrap();
    export_summary(&s2, &batch_cfg, &jb).unwrap();
    let strip = |p: &std::path::Path| {
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timestamp");
        v
    };
    let same_summary = s1 == s2 && strip(&ja) == strip(&jb);
    Outcome::new(
        same_history && same_summary,
        format!("history identical: {same_history}, summary identical: {same_summary}"),
    )
}

fn counted(problem: ProblemSpec, counter: Arc<AtomicUsize>) -> ProblemSpec {
    let inner = problem.clone();
    ProblemSpec::new(problem.name(), problem.space().clone(), problem.num_constraints(), move |x| {
        counter.fetch_add(1, Ordering::SeqCst);
        inner.evaluate(x).unwrap()
    })
}

fn trace_violations(record: &RunRecord) -> usize {
    let mut bad = 0;
    let mut best: Option<f64> = None;
    for row in &record.rows {
        match (best, row.incumbent_feasible) {
            (Some(_), false) => bad += 1,
            (Some(b), true) if row.incumbent_objective > b => bad += 1,
            _ => {}
        }
        if row.incumbent_feasible {
            best = Some(row.incumbent_objective);
        }
    }
    bad
}

fn criterion_9() -> Outcome {
    let cases: [(&str, Option<usize>, usize); 4] =
        [("forrester", None, 20), ("constrained2d", None, 20), ("welded_plate", Some(9), 30), ("constrained2d", Some(3), 0)];
    let mut runs = 0;
    let mut problems_found = Vec::new();
    for (name, n0, k_max) in cases {
        for seed in 0..5 {
            let counter = Arc::new(AtomicUsize::new(0));
            let problem = counted(make_problem(name, &ProblemParams::default()).unwrap(), counter.clone());
            let cfg = RunConfig {
                n0,
                k_max,
                seed,
                ..Default::default()
            };
            let record = run(&problem, &cfg).unwrap();
            let n = counter.load(Ordering::SeqCst);
            runs += 1;
            if n != record.evaluations || n != record.rows.len() || n > cfg.initial_samples(problem.dim()) + k_max {
                problems_found.push(format!("{name}/{seed}: {n} evaluations"));
            }
            if trace_violations(&record) > 0 {
                problems_found.push(format!("{name}/{seed}: incumbent trace not monotone"));
            }
        }
    }
    Outcome::new(problems_found.is_empty(), format!("{runs} runs checked {problems_found:?}"))
}

const SPHERE_DIM: usize = 26;
const SPHERE_TARGET: f64 = 0.5;

/// `min |x|^2` on `[-1, 1]^26` subject to `sum(x) >= 26 * 0.5`.
fn sphere_problem() -> ProblemSpec {
    let space = DesignSpace::new(vec![-1.0; SPHERE_DIM], vec![1.0; SPHERE_DIM]).unwrap();
    ProblemSpec::new("sphere26", space, 1, |x| Evaluation {
        objective: x.iter().map(|v| v * v).sum(),
        constraints: vec![SPHERE_TARGET * SPHERE_DIM as f64 - x.iter().sum::<f64>()],
    })
}

/// Closed-form optimum: the projection of the origin onto the half-space
/// `a.x >= b` with `a = 1`.
fn sphere_optimum() -> f64 {
    let a_norm_sq = SPHERE_DIM as f64;
    let b = SPHERE_TARGET * SPHERE_DIM as f64;
    b * b / a_norm_sq
}

fn sphere_run(kernel: KernelKind) -> RunRecord {
    // 2m + 1 = 53 initial points + 100 added = 153 true evaluations.
    let cfg = BatchConfig::new(
        "sphere26",
        RunConfig {
            k_max: 100,
            kernel,
            ..Default::default()
        },
        1,
        10,
    );
    run_batch_on(&sphere_problem(), &cfg).unwrap().records.remove(0)
}

fn criterion_10() -> Outcome {
    let optimum = sphere_optimum();
    let gap = |r: &RunRecord| (r.final_objective().unwrap_or(f64::INFINITY) - optimum) / optimum;
    // The Gaussian interpolant decays to zero between distant samples and
    // models a 26-D bowl poorly; its result is reported but not graded.
    let record = sphere_run(KernelKind::Multiquadric);
    let gaussian = sphere_run(KernelKind::Gaussian);
    Outcome::new(
        record.final_feasible() && record.evaluations == 153 && gap(&record).abs() <= 0.10,
        format!(
            "multiquadric: {} evaluations, final J {:.4} vs analytic {optimum:.4} ({:+.1}%), feasible {}; \
             gaussian: {:+.1}%",
            record.evaluations,
            record.final_objective().unwrap_or(f64::NAN),
            100.0 * gap(&record),
            record.final_feasible(),
            100.0 * gap(&gaussian),
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("1 interpolation exactness", criterion_1, Duration::from_secs(60)),
        ("2 LOOCV oracle equivalence", criterion_2, Duration::from_secs(60)),
        ("3 uniform max-min optimality", criterion_3, Duration::from_secs(60)),
        ("4 reduced interval", criterion_4, Duration::from_secs(60)),
        ("5 multi-peak 1-D", criterion_5, Duration::from_secs(120)),
        ("6 constrained 2-D", criterion_6, Duration::from_secs(300)),
        ("7 welded plate", criterion_7, Duration::from_secs(600)),
        ("8 determinism", criterion_8, Duration::from_secs(600)),
        ("9 budget and monotonicity", criterion_9, Duration::from_secs(600)),
        ("10 26-D sphere smoke test", criterion_10, Duration::from_secs(600)),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {name}: {} ({}; {:.1}s, limit {}s)",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
