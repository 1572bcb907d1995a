//! Forward Monte Carlo over the month: daily decisions against the
//! precomputed future-cost curves, peak carry-over between stages,
//! end-of-month tariff settlement, and boxplot statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{solve_daily, HouseholdConfig, ModelError};
use crate::scenario::draw_path;
use crate::sdp::{EfccTable, ScenarioSet};

/// One simulated month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub path: Vec<usize>,
    /// Spot plus volumetric grid cost per day; excludes the future term
    /// and any end-condition penalty.
    pub daily_cost: Vec<f64>,
    /// Running peak after each day; nondecreasing.
    pub daily_peak: Vec<f64>,
    pub final_peak_kw: f64,
    /// End-of-month peak charge.
    pub settlement_eur: f64,
    pub total_cost_eur: f64,
    /// All hourly imports of the month, stage-major.
    pub hourly_import: Vec<f64>,
}

/// Simulates one month along a realized scenario path. Each day is solved
/// with the running peak as its incoming level and the next stage's
/// conditional curve pricing the outgoing one; the curve steers decisions
/// but realized cost counts only operating cost plus the one final
/// settlement, so the peak charge is never double-counted.
pub fn simulate_month(
    cfg: &HouseholdConfig,
    table: &EfccTable,
    set: &ScenarioSet,
    path: &[usize],
) -> Result<SimulationRun, ModelError> {
    let stages = table.num_stages();
    if path.len() != stages || set.num_stages() != stages {
        return Err(ModelError::Validation(format!(
            "path of {} stages against a {}-stage table",
            path.len(),
            stages
        )));
    }
    let mut run = SimulationRun {
        path: path.to_vec(),
        daily_cost: Vec::with_capacity(stages),
        daily_peak: Vec::with_capacity(stages),
        final_peak_kw: 0.0,
        settlement_eur: 0.0,
        total_cost_eur: 0.0,
        hourly_import: Vec::with_capacity(stages * cfg.hours_per_stage),
    };
    let mut peak = 0.0f64;
    for (g, &s) in path.iter().enumerate() {
        if s >= set.num_nodes() {
            return Err(ModelError::Validation(format!(
                "stage {g}: node {s} out of range"
            )));
        }
        let efcc = crate::model::prune_collinear(&table.next_curve(cfg, g, s)?, 1e-9);
        let sol = solve_daily(cfg, &set.realizations[g][s], peak, &efcc).map_err(|e| {
            ModelError::InfeasibleScenario(format!("stage {g}, node {s}: {e}"))
        })?;
        peak = peak.max(sol.peak_kw);
        run.daily_cost.push(sol.operating_cost);
        run.daily_peak.push(peak);
        run.hourly_import.extend_from_slice(&sol.import);
    }
    run.final_peak_kw = peak;
    run.settlement_eur = cfg.tariff.peak_eur_per_kw * peak;
    run.total_cost_eur = run.daily_cost.iter().sum::<f64>() + run.settlement_eur;
    Ok(run)
}

/// Five-number summary with 1.5*IQR whiskers clipped to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatBlock {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

impl StatBlock {
    pub fn from_values(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let q1 = quantile(&sorted, 0.25);
        let median = quantile(&sorted, 0.5);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        let fence_lo = q1 - 1.5 * iqr;
        let fence_hi = q3 + 1.5 * iqr;
        let whisker_lo = sorted
            .iter()
            .copied()
            .find(|&v| v >= fence_lo)
            .unwrap_or(sorted[0]);
        let whisker_hi = sorted
            .iter()
            .rev()
            .copied()
            .find(|&v| v <= fence_hi)
            .unwrap_or(sorted[sorted.len() - 1]);
        let outliers = sorted
            .iter()
            .copied()
            .filter(|&v| v < whisker_lo || v > whisker_hi)
            .collect();
        Self {
            mean,
            median,
            q1,
            q3,
            iqr,
            whisker_lo,
            whisker_hi,
            outliers,
        }
    }
}

/// Linear-interpolation quantile on a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub total_cost: StatBlock,
    pub final_peak: StatBlock,
    pub replications: usize,
}

impl SummaryStats {
    pub fn from_runs(runs: &[SimulationRun]) -> Self {
        let costs: Vec<f64> = runs.iter().map(|r| r.total_cost_eur).collect();
        let peaks: Vec<f64> = runs.iter().map(|r| r.final_peak_kw).collect();
        Self {
            total_cost: StatBlock::from_values(&costs),
            final_peak: StatBlock::from_values(&peaks),
            replications: runs.len(),
        }
    }
}

/// The generator for replication k: stream k of a ChaCha keyed by the
/// master seed. Every case run with the same master seed sees the same
/// path per replication, making cross-case comparisons exactly paired.
pub fn replication_rng(master_seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replication as u64);
    rng
}

/// Runs `n` independent replications concurrently. Aggregation folds in
/// replication-index order, so results are independent of scheduling.
pub fn run_replications(
    cfg: &HouseholdConfig,
    table: &EfccTable,
    set: &ScenarioSet,
    n: usize,
    master_seed: u64,
) -> Result<(SummaryStats, Vec<SimulationRun>), ModelError> {
    if n == 0 {
        return Err(ModelError::Validation("need at least one replication".into()));
    }
    let stages = table.num_stages();
    let runs: Vec<SimulationRun> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = replication_rng(master_seed, k);
            let path = draw_path(&mut rng, &set.markov, stages);
            simulate_month(cfg, table, set, &path)
                .map_err(|e| ModelError::InfeasibleScenario(format!("replication {k}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    Ok((SummaryStats::from_runs(&runs), runs))
}

/// Import duration curves: per-run hourly imports sorted descending, with
/// pointwise median and min/max bands across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationCurve {
    pub median: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn duration_curve(runs: &[SimulationRun]) -> DurationCurve {
    assert!(!runs.is_empty());
    let sorted: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| {
            let mut v = r.hourly_import.clone();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        })
        .collect();
    let hours = sorted[0].len();
    let mut median = Vec::with_capacity(hours);
    let mut lo = Vec::with_capacity(hours);
    let mut hi = Vec::with_capacity(hours);
    for h in 0..hours {
        let mut col: Vec<f64> = sorted.iter().map(|r| r[h]).collect();
        col.sort_by(f64::total_cmp);
        lo.push(col[0]);
        hi.push(col[col.len() - 1]);
        median.push(quantile(&col, 0.5));
    }
    DurationCurve { median, lo, hi }
}
