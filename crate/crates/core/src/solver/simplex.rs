//! Bounded-variable two-phase revised simplex with a dense basis inverse.
//!
//! Every row gets a slack; rows whose slack cannot start feasible get an
//! artificial driven out in phase 1. Pricing is Dantzig with a fixed
//! smallest-index tie-break, falling back to Bland's rule after a stall
//! threshold so cycling cannot occur. All choices are deterministic, so
//! identical inputs give bit-identical solutions.

use super::{LinearProgram, LpSolution, Sense, SolverError, Status};

const PIVOT_TOL: f64 = 1e-10;
const REDUCED_COST_TOL: f64 = 1e-9;
const PHASE1_TOL: f64 = 1e-8;
const REFACTOR_EVERY: usize = 64;

struct Tableau {
    m: usize,
    /// Sparse column of the constraint matrix per variable.
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Nonbasic variables sit at a bound; true means the upper one.
    at_upper: Vec<bool>,
    x: Vec<f64>,
    /// Dense basis inverse, row-major m x m.
    binv: Vec<f64>,
    pivots_since_refactor: usize,
}

impl Tableau {
    fn ncols(&self) -> usize {
        self.cols.len()
    }

    fn col_times_binv_row(&self, k: usize, j: usize) -> f64 {
        // (B^-1 A)_kj for sparse column j
        self.cols[j]
            .iter()
            .map(|&(i, v)| self.binv[k * self.m + i] * v)
            .sum()
    }

    fn ftran(&self, j: usize, out: &mut [f64]) {
        for k in 0..self.m {
            out[k] = self.col_times_binv_row(k, j);
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination with partial
    /// pivoting, then recomputes the basic values from the nonbasic ones.
    fn refactor(&mut self) -> Result<(), SolverError> {
        let m = self.m;
        // Dense basis matrix, column k = column of basis[k].
        let mut mat = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                mat[i * m + k] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = mat[col * m + col].abs();
            for r in col + 1..m {
                let a = mat[r * m + col].abs();
                if a > best {
                    best = a;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return Err(SolverError::Validation(
                    "singular basis during refactorization".into(),
                ));
            }
            if piv != col {
                for c in 0..m {
                    mat.swap(col * m + c, piv * m + c);
                    inv.swap(col * m + c, piv * m + c);
                }
            }
            let d = mat[col * m + col];
            for c in 0..m {
                mat[col * m + c] /= d;
                inv[col * m + c] /= d;
            }
            for r in 0..m {
                if r != col {
                    let f = mat[r * m + col];
                    if f != 0.0 {
                        for c in 0..m {
                            mat[r * m + c] -= f * mat[col * m + c];
                            inv[r * m + c] -= f * inv[col * m + c];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.recompute_basics();
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut r = self.rhs.clone();
        for j in 0..self.ncols() {
            if !self.in_basis[j] && self.x[j] != 0.0 {
                for &(i, v) in &self.cols[j] {
                    r[i] -= v * self.x[j];
                }
            }
        }
        for k in 0..m {
            let mut val = 0.0;
            for i in 0..m {
                val += self.binv[k * m + i] * r[i];
            }
            self.x[self.basis[k]] = val;
        }
    }

    /// One simplex run over the given costs, starting primal-feasible.
    fn optimize(&mut self, cost: &[f64], max_iter: usize) -> Result<Status, SolverError> {
        let m = self.m;
        let mut w = vec![0.0; m];
        let mut y = vec![0.0; m];
        let bland_after = max_iter / 2;
        for iter in 0..max_iter {
            let bland = iter >= bland_after;
            // y = c_B B^-1
            for i in 0..m {
                let mut v = 0.0;
                for k in 0..m {
                    let cb = cost[self.basis[k]];
                    if cb != 0.0 {
                        v += cb * self.binv[k * m + i];
                    }
                }
                y[i] = v;
            }
            // Pricing.
            let mut enter = usize::MAX;
            let mut enter_dir = 0.0;
            let mut best = REDUCED_COST_TOL;
            for j in 0..self.ncols() {
                if self.in_basis[j] || self.lower[j] == self.upper[j] {
                    continue;
                }
                let mut d = cost[j];
                for &(i, v) in &self.cols[j] {
                    d -= y[i] * v;
                }
                let free = self.lower[j].is_infinite() && self.upper[j].is_infinite();
                let can_up = free || !self.at_upper[j];
                let can_down = free || self.at_upper[j];
                let (score, dir) = if can_up && d < -REDUCED_COST_TOL {
                    (-d, 1.0)
                } else if can_down && d > REDUCED_COST_TOL {
                    (d, -1.0)
                } else {
                    continue;
                };
                if bland {
                    enter = j;
                    enter_dir = dir;
                    break;
                }
                if score > best {
                    best = score;
                    enter = j;
                    enter_dir = dir;
                }
            }
            if enter == usize::MAX {
                return Ok(Status::Optimal);
            }
            let q = enter;
            self.ftran(q, &mut w);

            // Ratio test: entering moves by t*dir, basics by -dir*t*w.
            let own_range = self.upper[q] - self.lower[q]; // may be inf
            let mut t_max = if own_range.is_finite() {
                own_range
            } else {
                f64::INFINITY
            };
            let mut leave: Option<usize> = None; // basis position
            let mut leave_to_upper = false;
            let mut leave_score = 0.0;
            for k in 0..m {
                let delta = -enter_dir * w[k];
                if delta.abs() < PIVOT_TOL {
                    continue;
                }
                let bj = self.basis[k];
                let (limit, to_upper) = if delta > 0.0 {
                    if self.upper[bj].is_finite() {
                        (((self.upper[bj] - self.x[bj]) / delta).max(0.0), true)
                    } else {
                        continue;
                    }
                } else if self.lower[bj].is_finite() {
                    (((self.lower[bj] - self.x[bj]) / delta).max(0.0), false)
                } else {
                    continue;
                };
                let better = if bland {
                    limit < t_max - 1e-12
                        || (limit <= t_max + 1e-12
                            && leave.map_or(true, |p| bj < self.basis[p]))
                } else {
                    limit < t_max - 1e-12
                        || (limit <= t_max + 1e-12 && delta.abs() > leave_score)
                };
                if limit <= t_max + 1e-12 && better {
                    t_max = t_max.min(limit);
                    leave = Some(k);
                    leave_to_upper = to_upper;
                    leave_score = delta.abs();
                }
            }

            if t_max.is_infinite() {
                return Ok(Status::Unbounded);
            }
            let bound_flip = leave.is_none()
                || (own_range.is_finite() && own_range < t_max + 1e-12 && leave_score == 0.0);
            // Prefer the pivot when a basic variable blocks at (or before)
            // the entering variable's own range.
            if let Some(r) = leave {
                // Pivot.
                let t = t_max;
                for k in 0..m {
                    let bj = self.basis[k];
                    self.x[bj] -= enter_dir * t * w[k];
                }
                let xq = if self.at_upper[q] && self.upper[q].is_finite() {
                    self.upper[q]
                } else if self.lower[q].is_finite() {
                    self.lower[q]
                } else {
                    self.x[q]
                };
                self.x[q] = xq + enter_dir * t;
                let out = self.basis[r];
                // Snap the leaving variable onto its bound.
                self.x[out] = if leave_to_upper {
                    self.upper[out]
                } else {
                    self.lower[out]
                };
                self.at_upper[out] = leave_to_upper;
                self.in_basis[out] = false;
                self.basis[r] = q;
                self.in_basis[q] = true;
                // Update B^-1.
                let piv = w[r];
                if piv.abs() < PIVOT_TOL {
                    self.refactor()?;
                    continue;
                }
                for c in 0..m {
                    self.binv[r * m + c] /= piv;
                }
                for k in 0..m {
                    if k != r && w[k].abs() > 0.0 {
                        let f = w[k];
                        for c in 0..m {
                            self.binv[k * m + c] -= f * self.binv[r * m + c];
                        }
                    }
                }
                self.pivots_since_refactor += 1;
                if self.pivots_since_refactor >= REFACTOR_EVERY {
                    self.refactor()?;
                }
            } else {
                // Bound flip: entering jumps to its other bound.
                debug_assert!(bound_flip);
                let t = t_max;
                for k in 0..m {
                    let bj = self.basis[k];
                    self.x[bj] -= enter_dir * t * w[k];
                }
                if enter_dir > 0.0 {
                    self.x[q] = self.upper[q];
                    self.at_upper[q] = true;
                } else {
                    self.x[q] = self.lower[q];
                    self.at_upper[q] = false;
                }
            }
        }
        Err(SolverError::IterationLimit(max_iter))
    }
}

pub(super) fn solve(lp: &LinearProgram) -> Result<LpSolution, SolverError> {
    let n = lp.num_vars;
    let m = lp.rows.len();

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut lower = lp.lower.clone();
    let mut upper = lp.upper.clone();
    let mut rhs = Vec::with_capacity(m);
    for (i, row) in lp.rows.iter().enumerate() {
        for &(j, c) in &row.terms {
            if c != 0.0 {
                cols[j].push((i, c));
            }
        }
        rhs.push(row.rhs);
    }
    // Slacks: a.x + s = b.
    let mut slack_of_row = Vec::with_capacity(m);
    for (i, row) in lp.rows.iter().enumerate() {
        let (lo, hi) = match row.sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        let j = cols.len();
        cols.push(vec![(i, 1.0)]);
        lower.push(lo);
        upper.push(hi);
        slack_of_row.push(j);
    }

    // Start: structural nonbasic at the finite bound nearest zero (lower
    // preferred), free ones at zero; slack basis where feasible, artificial
    // elsewhere.
    let ncols0 = cols.len();
    let mut x = vec![0.0; ncols0];
    let mut at_upper = vec![false; ncols0];
    for j in 0..n {
        if lower[j].is_finite() {
            x[j] = lower[j];
        } else if upper[j].is_finite() {
            x[j] = upper[j];
            at_upper[j] = true;
        }
    }
    let mut residual = rhs.clone();
    for j in 0..n {
        if x[j] != 0.0 {
            for &(i, v) in &cols[j] {
                residual[i] -= v * x[j];
            }
        }
    }

    let mut basis = Vec::with_capacity(m);
    let mut artificials = Vec::new();
    for i in 0..m {
        let s = slack_of_row[i];
        let r = residual[i];
        if r >= lower[s] - PHASE1_TOL && r <= upper[s] + PHASE1_TOL {
            x[s] = r;
            basis.push(s);
        } else {
            // Slack pinned at its nearest bound, artificial takes the rest.
            let sb = r.clamp(lower[s], upper[s]);
            x[s] = sb;
            at_upper[s] = sb == upper[s] && upper[s].is_finite();
            let excess = r - sb;
            let a = cols.len();
            cols.push(vec![(i, 1.0)]);
            if excess > 0.0 {
                lower.push(0.0);
                upper.push(f64::INFINITY);
            } else {
                lower.push(f64::NEG_INFINITY);
                upper.push(0.0);
            }
            x.push(excess);
            at_upper.push(false);
            artificials.push(a);
            basis.push(a);
        }
    }
    let ncols = cols.len();
    let mut in_basis = vec![false; ncols];
    for &j in &basis {
        in_basis[j] = true;
    }
    let mut binv = vec![0.0; m * m];
    for i in 0..m {
        binv[i * m + i] = 1.0;
    }

    let mut tab = Tableau {
        m,
        cols,
        lower,
        upper,
        rhs,
        basis,
        in_basis,
        at_upper,
        x,
        binv,
        pivots_since_refactor: 0,
    };

    let max_iter = 200 * (m + n) + 2000;

    if !artificials.is_empty() {
        let mut cost1 = vec![0.0; ncols];
        for &a in &artificials {
            // |a| is minimized: +a for nonnegative, -a for nonpositive.
            cost1[a] = if tab.upper[a] == 0.0 { -1.0 } else { 1.0 };
        }
        let st = tab.optimize(&cost1, max_iter)?;
        if st == Status::Unbounded {
            return Err(SolverError::Validation(
                "phase 1 reported unbounded".into(),
            ));
        }
        let infeas: f64 = artificials.iter().map(|&a| tab.x[a].abs()).sum();
        if infeas > PHASE1_TOL * (1.0 + m as f64) {
            return Ok(LpSolution::non_optimal(Status::Infeasible));
        }
        // Lock artificials at zero for phase 2.
        for &a in &artificials {
            tab.lower[a] = 0.0;
            tab.upper[a] = 0.0;
            if !tab.in_basis[a] {
                tab.x[a] = 0.0;
                tab.at_upper[a] = false;
            }
        }
    }

    let mut cost2 = vec![0.0; ncols];
    cost2[..n].copy_from_slice(&lp.objective);
    let st = tab.optimize(&cost2, max_iter)?;
    if st == Status::Unbounded {
        return Ok(LpSolution::non_optimal(Status::Unbounded));
    }
    tab.refactor()?;

    let values: Vec<f64> = tab.x[..n].to_vec();
    let objective: f64 = lp
        .objective
        .iter()
        .zip(&values)
        .map(|(c, v)| c * v)
        .sum();
    let feasibility = super::max_violation(lp, &values);
    Ok(LpSolution {
        status: Status::Optimal,
        objective,
        values,
        feasibility,
    })
}
