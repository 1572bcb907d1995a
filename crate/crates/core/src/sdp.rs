//! Backward recursion over daily stages producing the table of
//! expected-future-cost curves, plus marginal-curve utilities.
//!
//! Stage g's subproblem under scenario node s prices its end-of-stage
//! peak with the curve `phi[g+1][s]`; the recorded (penalty-free) costs
//! are then folded back through the transition probabilities:
//! `phi[g][s_prev][n] = sum_s rho(s | s_prev) * cost[g][s][n]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{solve_daily, terminal_efcc, Efcc, HouseholdConfig, ModelError, ScenarioRealization};
use crate::scenario::{MarkovModel, StageInputs};

/// Discretized peak-import levels shared by every curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakGrid {
    pub points: Vec<f64>,
}

impl PeakGrid {
    /// `n` uniform points from 0 to `max_kw` inclusive.
    pub fn uniform(n: usize, max_kw: f64) -> Result<Self, ModelError> {
        if n < 2 || max_kw <= 0.0 {
            return Err(ModelError::Validation(
                "peak grid needs >= 2 points and a positive range".into(),
            ));
        }
        let step = max_kw / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
        // Pin the endpoint exactly.
        points[n - 1] = max_kw;
        Ok(Self { points })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.points.len() < 2 {
            return Err(ModelError::Validation("peak grid needs >= 2 points".into()));
        }
        if self.points[0] != 0.0 {
            return Err(ModelError::Validation("peak grid must start at 0".into()));
        }
        for w in self.points.windows(2) {
            if w[1] <= w[0] {
                return Err(ModelError::Validation(
                    "peak grid must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_kw(&self) -> f64 {
        *self.points.last().unwrap()
    }
}

impl Default for PeakGrid {
    fn default() -> Self {
        Self::uniform(100, 10.0).expect("canonical grid")
    }
}

/// Fully realized stochastic inputs: one realization per (stage, node).
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub markov: MarkovModel,
    /// realizations[g][s].
    pub realizations: Vec<Vec<ScenarioRealization>>,
}

impl ScenarioSet {
    pub fn from_inputs(inputs: &StageInputs, markov: &MarkovModel) -> Result<Self, ModelError> {
        markov.validate()?;
        let mut realizations = Vec::with_capacity(inputs.num_stages());
        for g in 0..inputs.num_stages() {
            let mut row = Vec::with_capacity(markov.num_nodes());
            for node in &markov.nodes {
                row.push(inputs.realize(g, node)?);
            }
            realizations.push(row);
        }
        Ok(Self {
            markov: markov.clone(),
            realizations,
        })
    }

    pub fn new(markov: MarkovModel, realizations: Vec<Vec<ScenarioRealization>>) -> Result<Self, ModelError> {
        markov.validate()?;
        for (g, row) in realizations.iter().enumerate() {
            if row.len() != markov.num_nodes() {
                return Err(ModelError::Validation(format!(
                    "stage {g}: {} realizations for {} nodes",
                    row.len(),
                    markov.num_nodes()
                )));
            }
        }
        Ok(Self {
            markov,
            realizations,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.realizations.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.markov.num_nodes()
    }
}

/// Output of the backward pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfccTable {
    pub grid: PeakGrid,
    /// phi[g][s][n]: expected cost of stages g..G given the stage-(g-1)
    /// node was s, evaluated at incoming peak grid point n.
    pub phi: Vec<Vec<Vec<f64>>>,
    /// cost[g][s][n]: recorded penalty-free cost of the stage-g
    /// subproblem under node s with incoming peak grid point n.
    pub cost: Vec<Vec<Vec<f64>>>,
    /// Unconditional expected cost of the whole horizon per grid point.
    pub initial: Vec<f64>,
    /// Structural diagnostics (non-monotone or over-sloped curves).
    pub warnings: Vec<String>,
}

const MONOTONE_TOL: f64 = 1e-6;

impl EfccTable {
    pub fn num_stages(&self) -> usize {
        self.phi.len()
    }

    /// The curve pricing the end-of-stage peak for a stage-g subproblem
    /// under node s: the next stage's conditional curve, or the terminal
    /// settlement line after the last stage.
    pub fn next_curve(
        &self,
        cfg: &HouseholdConfig,
        g: usize,
        s: usize,
    ) -> Result<Efcc, ModelError> {
        if g + 1 < self.num_stages() {
            curve_from_row(&self.grid, &self.phi[g + 1][s])
        } else {
            Ok(terminal_efcc(&cfg.tariff, &self.grid))
        }
    }

    /// The stage-1 curve seen before any node is realized.
    pub fn initial_curve(&self) -> Result<Efcc, ModelError> {
        curve_from_row(&self.grid, &self.initial)
    }
}

fn curve_from_row(grid: &PeakGrid, row: &[f64]) -> Result<Efcc, ModelError> {
    Efcc::new(grid.points.iter().copied().zip(row.iter().copied()).collect())
}

/// Backward pass over pre-realized scenarios. Within a stage the
/// (node, grid point) subproblems run concurrently; the reduction is in
/// fixed (s, n) order, so the result does not depend on scheduling.
pub fn run_backward_set(
    cfg: &HouseholdConfig,
    set: &ScenarioSet,
    grid: &PeakGrid,
) -> Result<EfccTable, ModelError> {
    cfg.validate()?;
    grid.validate()?;
    if (grid.max_kw() - cfg.tariff.import_cap_kw).abs() > 1e-9 {
        return Err(ModelError::Validation(format!(
            "peak grid ends at {} kW but the import cap is {} kW",
            grid.max_kw(),
            cfg.tariff.import_cap_kw
        )));
    }
    let num_stages = set.num_stages();
    if num_stages == 0 {
        return Err(ModelError::Validation("no stages".into()));
    }
    let num_nodes = set.num_nodes();
    let np = grid.len();

    let mut phi = vec![vec![vec![0.0; np]; num_nodes]; num_stages];
    let mut cost = vec![vec![vec![0.0; np]; num_nodes]; num_stages];
    let mut warnings = Vec::new();
    let terminal = terminal_efcc(&cfg.tariff, grid);

    for g in (0..num_stages).rev() {
        // Conditional next-stage curve per current node.
        let mut next_curves = Vec::with_capacity(num_nodes);
        for s in 0..num_nodes {
            next_curves.push(if g + 1 < num_stages {
                curve_from_row(grid, &phi[g + 1][s])?
            } else {
                terminal.clone()
            });
        }
        let results: Vec<Result<Vec<f64>, ModelError>> = (0..num_nodes)
            .into_par_iter()
            .map(|s| {
                // The daily subproblem sees an interpolation-identical
                // pruned curve; the stored table keeps full resolution.
                let curve = crate::model::prune_collinear(&next_curves[s], 1e-9);
                let mut row = vec![f64::NAN; np];
                // An incoming peak below the optimum found at p0 = 0
                // leaves that optimum feasible and optimal, so the cost
                // is flat there and only higher points need solving.
                let mut flat_until = f64::NEG_INFINITY;
                let mut flat_cost = 0.0;
                for n in 0..np {
                    let p0 = grid.points[n];
                    row[n] = if p0 <= flat_until + 1e-9 {
                        flat_cost
                    } else {
                        let sol =
                            solve_daily(cfg, &set.realizations[g][s], p0, &curve).map_err(
                                |e| {
                                    ModelError::InfeasibleScenario(format!(
                                        "stage {g}, node {s}, grid point {n}: {e}"
                                    ))
                                },
                            )?;
                        flat_until = sol.peak_kw;
                        flat_cost = sol.recorded_cost();
                        flat_cost
                    };
                }
                Ok(row)
            })
            .collect();
        for (s, res) in results.into_iter().enumerate() {
            cost[g][s] = res?;
        }
        for s_prev in 0..num_nodes {
            for n in 0..np {
                phi[g][s_prev][n] = (0..num_nodes)
                    .map(|s| set.markov.transition[s_prev][s] * cost[g][s][n])
                    .sum();
            }
        }
        for s_prev in 0..num_nodes {
            check_curve(
                grid,
                &phi[g][s_prev],
                cfg.tariff.peak_eur_per_kw,
                &mut warnings,
                g,
                s_prev,
            );
        }
    }

    let initial: Vec<f64> = (0..np)
        .map(|n| {
            set.markov
                .nodes
                .iter()
                .enumerate()
                .map(|(s, node)| node.probability * cost[0][s][n])
                .sum()
        })
        .collect();

    Ok(EfccTable {
        grid: grid.clone(),
        phi,
        cost,
        initial,
        warnings,
    })
}

fn check_curve(
    grid: &PeakGrid,
    row: &[f64],
    peak_rate: f64,
    warnings: &mut Vec<String>,
    g: usize,
    s: usize,
) {
    for n in 0..row.len() - 1 {
        let dp = grid.points[n + 1] - grid.points[n];
        let slope = (row[n + 1] - row[n]) / dp;
        if slope < -MONOTONE_TOL {
            warnings.push(format!(
                "stage {g}, node {s}: curve decreases by {slope:.3e}/kW at grid point {n}"
            ));
        }
        if peak_rate > 0.0 && slope > peak_rate * (1.0 + 1e-6) + MONOTONE_TOL {
            warnings.push(format!(
                "stage {g}, node {s}: marginal {slope:.6} exceeds peak rate {peak_rate} at grid point {n}"
            ));
        }
    }
}

/// Convenience wrapper: realize the stage inputs through the Markov
/// nodes, then run the backward pass.
pub fn run_backward(
    cfg: &HouseholdConfig,
    inputs: &StageInputs,
    markov: &MarkovModel,
    grid: &PeakGrid,
) -> Result<EfccTable, ModelError> {
    let set = ScenarioSet::from_inputs(inputs, markov)?;
    run_backward_set(cfg, &set, grid)
}

/// Forward-difference slopes of a curve: (interval midpoint, EUR/kW).
pub fn marginal_curve(efcc: &Efcc) -> Vec<(f64, f64)> {
    efcc.points
        .windows(2)
        .map(|w| {
            let (p0, c0) = w[0];
            let (p1, c1) = w[1];
            (0.5 * (p0 + p1), (c1 - c0) / (p1 - p0))
        })
        .collect()
}

/// The end of the flat prefix of the curve: the largest abscissa reachable
/// from the origin through segments of marginal cost <= `tol`. A peak
/// below this level is free in expectation, so aiming lower buys nothing.
pub fn optimal_initial_peak(efcc: &Efcc, tol: f64) -> f64 {
    let mut best = efcc.points[0].0;
    for w in efcc.points.windows(2) {
        let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        if slope <= tol {
            best = w[1].0;
        } else {
            break;
        }
    }
    best
}
