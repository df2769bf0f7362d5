//! Batch experiments and machine-readable outputs.
//!
//! A batch runs `R` independent replications with seeds `base, base + 1,
//! ...` and reduces them, in replication order, to the statistics reported
//! in the result tables: mean and sample standard deviation of the final
//! objective, mean evaluation count, global-convergence probability and the
//! empirical CDF support.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::{run, RunConfig, RunRecord, RunStatus};
use crate::error::{Result, SsboError};
use crate::problems::{make_problem, ProblemParams, ProblemSpec};

/// Default relative tolerance for counting a replication as globally converged.
pub const DEFAULT_GP_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub problem: String,
    #[serde(default)]
    pub params: ProblemParams,
    /// Template for every replication; its seed is replaced per replication.
    pub run: RunConfig,
    pub replications: usize,
    pub base_seed: u64,
    pub gp_tolerance: f64,
}

impl BatchConfig {
    pub fn new(problem: impl Into<String>, run: RunConfig, replications: usize, base_seed: u64) -> Self {
        Self {
            problem: problem.into(),
            params: ProblemParams::default(),
            run,
            replications,
            base_seed,
            gp_tolerance: DEFAULT_GP_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(SsboError::InvalidConfig("replications must be at least 1".into()));
        }
        if !(self.gp_tolerance > 0.0 && self.gp_tolerance.is_finite()) {
            return Err(SsboError::InvalidConfig("global-probability tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub seed: u64,
    pub final_objective: Option<f64>,
    pub feasible: bool,
    pub evaluations: usize,
    /// Failure message; failed replications are excluded from statistics.
    pub failure: Option<String>,
}

impl ReplicationOutcome {
    pub fn from_record(replication: usize, seed: u64, record: &RunRecord) -> Self {
        Self {
            replication,
            seed,
            final_objective: record.final_objective(),
            feasible: record.final_feasible(),
            evaluations: record.evaluations,
            failure: match &record.status {
                RunStatus::Failed(msg) => Some(msg.clone()),
                _ => None,
            },
        }
    }

    fn succeeded(&self) -> bool {
        self.failure.is_none() && self.final_objective.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub problem: String,
    pub replications: usize,
    pub outcomes: Vec<ReplicationOutcome>,
    pub mean_objective: Option<f64>,
    /// Sample standard deviation (`n - 1`); zero for a single replication.
    pub std_objective: Option<f64>,
    pub mean_evaluations: Option<f64>,
    /// Fraction of successful replications ending feasible within
    /// `tolerance * (1 + |best_known|)` of the best-known value.
    pub global_probability: Option<f64>,
    pub best_known: Option<f64>,
    pub gp_tolerance: f64,
    /// Sorted final objectives of the successful replications.
    pub cdf: Vec<f64>,
    pub failed_replications: Vec<usize>,
}

impl BatchSummary {
    pub fn from_outcomes(
        problem: impl Into<String>,
        outcomes: Vec<ReplicationOutcome>,
        best_known: Option<f64>,
        gp_tolerance: f64,
    ) -> Self {
        let ok: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| o.succeeded()).collect();
        let finals: Vec<f64> = ok.iter().filter_map(|o| o.final_objective).collect();
        let n = finals.len();
        let mean_objective = (n > 0).then(|| finals.iter().sum::<f64>() / n as f64);
        let std_objective = mean_objective.map(|mean| {
            if n < 2 {
                0.0
            } else {
                (finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            }
        });
        let mean_evaluations =
            (n > 0).then(|| ok.iter().map(|o| o.evaluations as f64).sum::<f64>() / n as f64);
        let global_probability = match best_known {
            Some(best) if n > 0 => {
                let hits = ok.iter().filter(|o| is_global_hit(o, best, gp_tolerance)).count();
                Some(hits as f64 / n as f64)
            }
            _ => None,
        };
        let mut cdf = finals;
        cdf.sort_by(f64::total_cmp);
        Self {
            problem: problem.into(),
            replications: outcomes.len(),
            failed_replications: outcomes
                .iter()
                .filter(|o| !o.succeeded())
                .map(|o| o.replication)
                .collect(),
            outcomes,
            mean_objective,
            std_objective,
            mean_evaluations,
            global_probability,
            best_known,
            gp_tolerance,
            cdf,
        }
    }

    /// Empirical CDF as `(value, cumulative fraction)` pairs.
    pub fn cdf_points(&self) -> Vec<(f64, f64)> {
        let n = self.cdf.len() as f64;
        self.cdf
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, (i + 1) as f64 / n))
            .collect()
    }
}

pub fn is_global_hit(outcome: &ReplicationOutcome, best_known: f64, tolerance: f64) -> bool {
    outcome.feasible
        && outcome
            .final_objective
            .is_some_and(|j| (j - best_known).abs() <= tolerance * (1.0 + best_known.abs()))
}

/// Summary together with the full per-replication records.
#[derive(Debug, Clone)]
pub struct BatchRun {
    pub summary: BatchSummary,
    pub records: Vec<RunRecord>,
}

/// Runs every replication of `cfg` (concurrently where possible) and
/// aggregates them in replication order.
pub fn run_batch(cfg: &BatchConfig) -> Result<BatchRun> {
    let problem = make_problem(&cfg.problem, &cfg.params)?;
    run_batch_on(&problem, cfg)
}

/// Like [`run_batch`] for an arbitrary problem; `cfg.problem` is ignored.
pub fn run_batch_on(problem: &ProblemSpec, cfg: &BatchConfig) -> Result<BatchRun> {
    cfg.validate()?;
    cfg.run.validate(problem.dim())?;
    let records = (0..cfg.replications)
        .into_par_iter()
        .map(|i| {
            let config = RunConfig {
                seed: cfg.base_seed.wrapping_add(i as u64),
                ..cfg.run.clone()
            };
            run(problem, &config)
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes = records
        .iter()
        .enumerate()
        .map(|(i, r)| ReplicationOutcome::from_record(i, cfg.base_seed.wrapping_add(i as u64), r))
        .collect();
    let summary = BatchSummary::from_outcomes(
        problem.name(),
        outcomes,
        problem.best_known().map(|b| b.value),
        cfg.gp_tolerance,
    );
    Ok(BatchRun { summary, records })
}

fn fmt_f64(v: f64) -> String {
    // Shortest representation that parses back to the same bits.
    format!("{v}")
}

/// Header of the history file for `m` variables and `q` constraints.
pub fn history_header(m: usize, q: usize) -> Vec<String> {
    let mut header = vec!["eval".to_string(), "criterion".to_string()];
    header.extend((1..=m).map(|i| format!("x_{i}")));
    header.push("J".into());
    header.extend((1..=q).map(|j| format!("g_{j}")));
    header.push("incumbent_J".into());
    header.push("incumbent_feasible".into());
    header
}

/// Writes one row per true evaluation, in evaluation order.
pub fn export_history(record: &RunRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(history_header(record.dim, record.num_constraints))?;
    for row in &record.rows {
        let mut fields = vec![row.eval.to_string(), row.criterion_label().to_string()];
        fields.extend(row.x_raw.iter().map(|&v| fmt_f64(v)));
        fields.push(fmt_f64(row.objective));
        fields.extend(row.constraints.iter().map(|&v| fmt_f64(v)));
        fields.push(fmt_f64(row.incumbent_objective));
        fields.push(row.incumbent_feasible.to_string());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rejected candidates of every record; the replication column is
/// the record's position in `records`.
pub fn export_rejects(records: &[RunRecord], path: &Path) -> Result<()> {
    let m = records.first().map_or(0, |r| r.dim);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["replication".to_string(), "iteration".into(), "criterion".into()];
    header.extend((1..=m).map(|i| format!("x_{i}")));
    header.push("min_distance".into());
    w.write_record(&header)?;
    for (rep, record) in records.iter().enumerate() {
        for reject in &record.rejects {
            let mut fields = vec![
                rep.to_string(),
                reject.iteration.to_string(),
                reject.criterion.to_string(),
            ];
            fields.extend(reject.x_raw.iter().map(|&v| fmt_f64(v)));
            fields.push(fmt_f64(reject.distance));
            w.write_record(&fields)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    problem: &'a str,
    replications: usize,
    #[serde(rename = "mean_J")]
    mean_j: Option<f64>,
    #[serde(rename = "std_J")]
    std_j: Option<f64>,
    mean_evals: Option<f64>,
    global_probability: Option<f64>,
    best_known: Option<f64>,
    cdf: &'a [f64],
    per_replication: &'a [ReplicationOutcome],
    failed_replications: &'a [usize],
    config: &'a BatchConfig,
    timestamp: u64,
}

/// Writes the summary as pretty-printed JSON. Only `timestamp` varies
/// between identical batches.
pub fn export_summary(summary: &BatchSummary, config: &BatchConfig, path: &Path) -> Result<()> {
    let doc = SummaryDocument {
        problem: &summary.problem,
        replications: summary.replications,
        mean_j: summary.mean_objective,
        std_j: summary.std_objective,
        mean_evals: summary.mean_evaluations,
        global_probability: summary.global_probability,
        best_known: summary.best_known,
        cdf: &summary.cdf,
        per_replication: &summary.outcomes,
        failed_replications: &summary.failed_replications,
        config,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// File name of replication `i`'s history inside a batch directory.
pub fn history_file_name(replication: usize) -> String {
    format!("history_{replication:03}.csv")
}

/// Writes `history_NNN.csv` per replication, `rejects.csv` and
/// `summary.json` into `dir`, creating it if needed.
pub fn write_batch(batch: &BatchRun, config: &BatchConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, record) in batch.records.iter().enumerate() {
        export_history(record, &dir.join(history_file_name(i)))?;
    }
    export_rejects(&batch.records, &dir.join("rejects.csv"))?;
    export_summary(&batch.summary, config, &dir.join("summary.json"))
}
