//! Solver benchmark: objective, DP invocation count and timing per
//! (instance, solver), with per-solver summaries.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::contour::ContourInstance;
use crate::dp::Solver;
use crate::error::{Error, Result};
use crate::stats::{median, percentile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    /// Timed solves per round.
    pub repetitions: usize,
    /// Each round contributes one median; the reported time is their median.
    pub rounds: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            repetitions: 20,
            rounds: 5,
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub instance: String,
    pub solver: String,
    pub objective: f64,
    pub n_dp: usize,
    pub median_us: f64,
    pub p75_us: f64,
    #[serde(skip)]
    pub repeated_relaxed: usize,
    #[serde(skip)]
    pub n: usize,
}

/// Per-solver aggregate over the corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub solver: String,
    pub instances: usize,
    pub n_dp_median: f64,
    pub n_dp_p75: f64,
    pub n_dp_max: usize,
    pub time_median_us: f64,
    pub time_p75_us: f64,
    pub frac_n_dp_one: f64,
    pub count_n_dp_above_n: usize,
    pub repeated_relaxed_total: usize,
}

/// Benchmarks every solver on one instance, single-threaded.
pub fn bench_instance(
    name: &str,
    inst: &ContourInstance,
    solvers: &[Solver],
    cfg: &BenchConfig,
) -> Result<Vec<BenchRow>> {
    if cfg.repetitions == 0 || cfg.rounds == 0 {
        return Err(Error::invalid("repetitions and rounds must be positive"));
    }
    let mut rows = Vec::with_capacity(solvers.len());
    for &solver in solvers {
        let (sol, stats) = solver.solve(inst);
        let mut all = Vec::with_capacity(cfg.repetitions * cfg.rounds);
        let mut round_medians = Vec::with_capacity(cfg.rounds);
        for _ in 0..cfg.rounds {
            let mut times = Vec::with_capacity(cfg.repetitions);
            for _ in 0..cfg.repetitions {
                let t = Instant::now();
                let out = solver.solve(inst);
                times.push(t.elapsed().as_secs_f64() * 1e6);
                std::hint::black_box(out);
            }
            round_medians.push(median(&times).expect("non-empty"));
            all.extend(times);
        }
        rows.push(BenchRow {
            instance: name.to_string(),
            solver: solver.name().to_string(),
            objective: sol.objective,
            n_dp: stats.n_dp,
            median_us: median(&round_medians).expect("non-empty"),
            p75_us: percentile(&all, 0.75).expect("non-empty"),
            repeated_relaxed: stats.repeated_relaxed_solution_count,
            n: inst.n(),
        });
    }
    Ok(rows)
}

pub fn bench_corpus(
    corpus: &[(String, ContourInstance)],
    solvers: &[Solver],
    cfg: &BenchConfig,
) -> Result<Vec<BenchRow>> {
    if corpus.is_empty() {
        return Err(Error::invalid("benchmark corpus is empty"));
    }
    let mut rows = Vec::new();
    for (name, inst) in corpus {
        rows.extend(bench_instance(name, inst, solvers, cfg)?);
    }
    Ok(rows)
}

/// Summaries in the order solvers first appear in `rows`.
pub fn summarize(rows: &[BenchRow]) -> Vec<BenchSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.solver.as_str()) {
            order.push(&r.solver);
        }
    }
    order
        .into_iter()
        .map(|solver| {
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.solver == solver).collect();
            let n_dp: Vec<f64> = mine.iter().map(|r| r.n_dp as f64).collect();
            let times: Vec<f64> = mine.iter().map(|r| r.median_us).collect();
            BenchSummary {
                solver: solver.to_string(),
                instances: mine.len(),
                n_dp_median: median(&n_dp).unwrap_or(0.0),
                n_dp_p75: percentile(&n_dp, 0.75).unwrap_or(0.0),
                n_dp_max: mine.iter().map(|r| r.n_dp).max().unwrap_or(0),
                time_median_us: median(&times).unwrap_or(0.0),
                time_p75_us: percentile(&times, 0.75).unwrap_or(0.0),
                frac_n_dp_one: mine.iter().filter(|r| r.n_dp == 1).count() as f64
                    / mine.len().max(1) as f64,
                count_n_dp_above_n: mine.iter().filter(|r| r.n_dp > r.n).count(),
                repeated_relaxed_total: mine.iter().map(|r| r.repeated_relaxed).sum(),
            }
        })
        .collect()
}

pub fn write_rows_csv<W: Write>(out: W, rows: &[BenchRow]) -> Result<()> {
    write_csv(out, rows)
}

pub fn write_summary_csv<W: Write>(out: W, summary: &[BenchSummary]) -> Result<()> {
    write_csv(out, summary)
}

fn write_csv<W: Write, T: Serialize>(out: W, items: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for item in items {
        w.serialize(item).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}
