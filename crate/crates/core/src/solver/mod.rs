//! Sparse linear programming with optional SOS-2 sets.
//!
//! The kernel is a bounded-variable two-phase revised simplex
//! ([`solve_lp`]). Piecewise-linear interpolation weights are handled by
//! [`solve_sos2`], which solves the plain relaxation when every induced
//! curve is convex and otherwise branches over adjacent segments.

mod simplex;
mod sos2;

pub use sos2::{is_convex_pwl, solve_sos2};

use std::fmt::Write as _;

/// Row-wise primal feasibility required of an optimal solution.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Relative optimality tolerance.
pub const OPTIMALITY_TOL: f64 = 1e-7;
/// Tolerance on SOS-2 interpolation weights (unit sum, nonzero detection).
pub const SOS2_WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    Validation(String),
    #[error("iteration limit of {0} exceeded")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    /// Sparse (variable index, coefficient) terms.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub label: Option<String>,
}

/// A sparse linear program: minimize `objective . x` subject to the rows
/// and per-variable bounds.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub var_labels: Vec<Option<String>>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        let idx = self.num_vars;
        self.num_vars += 1;
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(cost);
        self.var_labels.push(None);
        idx
    }

    pub fn add_labeled_var(&mut self, lower: f64, upper: f64, cost: f64, label: &str) -> usize {
        let idx = self.add_var(lower, upper, cost);
        self.var_labels[idx] = Some(label.to_string());
        idx
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Row {
            terms,
            sense,
            rhs,
            label: None,
        });
    }

    pub fn add_labeled_row(&mut self, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64, label: &str) {
        self.rows.push(Row {
            terms,
            sense,
            rhs,
            label: Some(label.to_string()),
        });
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.lower.len() != self.num_vars
            || self.upper.len() != self.num_vars
            || self.objective.len() != self.num_vars
        {
            return Err(SolverError::Validation(
                "bounds/objective length mismatch".into(),
            ));
        }
        for j in 0..self.num_vars {
            if self.lower[j] > self.upper[j] {
                return Err(SolverError::Validation(format!(
                    "variable {j}: lower bound {} above upper bound {}",
                    self.lower[j], self.upper[j]
                )));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.objective[j].is_nan() {
                return Err(SolverError::Validation(format!("variable {j}: NaN data")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            let mut seen = vec![false; self.num_vars];
            for &(j, c) in &row.terms {
                if j >= self.num_vars {
                    return Err(SolverError::Validation(format!(
                        "row {i}: variable index {j} out of range"
                    )));
                }
                if seen[j] {
                    return Err(SolverError::Validation(format!(
                        "row {i}: duplicate index {j}"
                    )));
                }
                seen[j] = true;
                if c.is_nan() {
                    return Err(SolverError::Validation(format!("row {i}: NaN coefficient")));
                }
            }
            if row.rhs.is_nan() {
                return Err(SolverError::Validation(format!("row {i}: NaN rhs")));
            }
        }
        Ok(())
    }

    /// Debug dump, one line per constraint. Not a stability contract.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let name = |j: usize| -> String {
            match &self.var_labels[j] {
                Some(s) => s.clone(),
                None => format!("x{j}"),
            }
        };
        for (i, row) in self.rows.iter().enumerate() {
            let label = row.label.clone().unwrap_or_else(|| format!("r{i}"));
            let _ = write!(out, "{label}: ");
            for (k, &(j, c)) in row.terms.iter().enumerate() {
                if k > 0 {
                    let _ = write!(out, " + ");
                }
                let _ = write!(out, "{c}*{}", name(j));
            }
            let sense = match row.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(out, " {sense} {}", row.rhs);
        }
        out
    }
}

/// An ordered set of interpolation-weight variables of which at most two,
/// and only adjacent ones, may be nonzero. `breakpoints` are the ascending
/// abscissae the weights interpolate over.
#[derive(Debug, Clone)]
pub struct Sos2Set {
    pub vars: Vec<usize>,
    pub breakpoints: Vec<f64>,
}

impl Sos2Set {
    pub fn new(vars: Vec<usize>, breakpoints: Vec<f64>) -> Result<Self, SolverError> {
        if vars.len() != breakpoints.len() {
            return Err(SolverError::Validation(
                "SOS-2 set: vars and breakpoints differ in length".into(),
            ));
        }
        if vars.is_empty() {
            return Err(SolverError::Validation("SOS-2 set: empty".into()));
        }
        let mut sorted = vars.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != vars.len() {
            return Err(SolverError::Validation(
                "SOS-2 set: duplicate variable index".into(),
            ));
        }
        for w in breakpoints.windows(2) {
            if !(w[1] > w[0]) {
                return Err(SolverError::Validation(
                    "SOS-2 set: breakpoints not strictly increasing".into(),
                ));
            }
        }
        Ok(Self { vars, breakpoints })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: Status,
    pub objective: f64,
    pub values: Vec<f64>,
    /// Worst row/bound violation actually achieved.
    pub feasibility: f64,
}

impl LpSolution {
    fn non_optimal(status: Status) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: Vec::new(),
            feasibility: f64::NAN,
        }
    }
}

/// Solves a bounded linear program to a vertex optimum.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, SolverError> {
    lp.validate()?;
    simplex::solve(lp)
}

/// Worst absolute constraint/bound violation of `values` for `lp`.
pub fn max_violation(lp: &LinearProgram, values: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..lp.num_vars {
        worst = worst.max(lp.lower[j] - values[j]).max(values[j] - lp.upper[j]);
    }
    for row in &lp.rows {
        let act: f64 = row.terms.iter().map(|&(j, c)| c * values[j]).sum();
        let v = match row.sense {
            Sense::Le => act - row.rhs,
            Sense::Ge => row.rhs - act,
            Sense::Eq => (act - row.rhs).abs(),
        };
        worst = worst.max(v);
    }
    worst
}
