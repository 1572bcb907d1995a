//! SOS-2 enforcement on top of the LP kernel.
//!
//! Minimizing over a convex piecewise-linear curve needs no combinatorial
//! work: the plain relaxation already lands on (or can be rewritten onto)
//! an adjacent pair. Non-convex curves go through depth-first
//! branch-and-bound over adjacent-segment windows.

use super::{
    solve_lp, LinearProgram, LpSolution, Sos2Set, SolverError, Status, FEASIBILITY_TOL,
    SOS2_WEIGHT_TOL,
};

/// True iff the successive slopes of the piecewise-linear curve are
/// nondecreasing within `tol`. Fewer than two points count as convex.
pub fn is_convex_pwl(points: &[(f64, f64)], tol: f64) -> Result<bool, SolverError> {
    for w in points.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(SolverError::Validation(
                "piecewise-linear abscissae not strictly increasing".into(),
            ));
        }
    }
    if points.len() < 2 {
        return Ok(true);
    }
    let mut prev_slope = f64::NEG_INFINITY;
    for w in points.windows(2) {
        let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        if slope < prev_slope - tol {
            return Ok(false);
        }
        prev_slope = prev_slope.max(slope);
    }
    Ok(true)
}

fn sos2_violated(sol: &LpSolution, set: &Sos2Set) -> bool {
    let nz: Vec<usize> = (0..set.vars.len())
        .filter(|&k| sol.values[set.vars[k]].abs() > SOS2_WEIGHT_TOL)
        .collect();
    match nz.len() {
        0 | 1 => false,
        2 => nz[1] != nz[0] + 1,
        _ => true,
    }
}

/// Rewrites the weights of `set` onto the adjacent pair bracketing the
/// interpolated abscissa, keeping the unit sum and the abscissa itself.
/// Valid only when the rewrite stays feasible; the caller checks.
fn adjacent_rewrite(values: &mut [f64], set: &Sos2Set) {
    let total: f64 = set.vars.iter().map(|&j| values[j]).sum();
    if total <= SOS2_WEIGHT_TOL {
        return;
    }
    let p: f64 = set
        .vars
        .iter()
        .zip(&set.breakpoints)
        .map(|(&j, &b)| values[j] * b)
        .sum::<f64>()
        / total;
    let n = set.breakpoints.len();
    let mut k = n - 1;
    for i in 0..n - 1 {
        if p <= set.breakpoints[i + 1] {
            k = i;
            break;
        }
    }
    for &j in &set.vars {
        values[j] = 0.0;
    }
    if n == 1 || k == n - 1 {
        values[set.vars[n - 1]] = total;
        return;
    }
    let (a, b) = (set.breakpoints[k], set.breakpoints[k + 1]);
    let w = ((p - a) / (b - a)).clamp(0.0, 1.0);
    values[set.vars[k]] = total * (1.0 - w);
    values[set.vars[k + 1]] = total * w;
}

/// Solves `lp` with the SOS-2 condition enforced exactly on every set.
pub fn solve_sos2(lp: &LinearProgram, sets: &[Sos2Set]) -> Result<LpSolution, SolverError> {
    lp.validate()?;
    for set in sets {
        for &j in &set.vars {
            if j >= lp.num_vars {
                return Err(SolverError::Validation(format!(
                    "SOS-2 set references variable {j} out of range"
                )));
            }
        }
    }

    let all_convex = sets.iter().try_fold(true, |acc, set| {
        let pts: Vec<(f64, f64)> = set
            .breakpoints
            .iter()
            .zip(&set.vars)
            .map(|(&b, &j)| (b, lp.objective[j]))
            .collect();
        Ok::<_, SolverError>(acc && is_convex_pwl(&pts, 1e-12)?)
    })?;

    let relaxed = solve_lp(lp)?;
    if relaxed.status != Status::Optimal {
        return Ok(relaxed);
    }
    if sets.iter().all(|s| !sos2_violated(&relaxed, s)) {
        return Ok(relaxed);
    }
    if all_convex {
        // Exact relaxation; degenerate flat segments may still spread the
        // weights, so rewrite them onto the bracketing pair and keep the
        // result if it stays feasible with the same objective.
        let mut values = relaxed.values.clone();
        for set in sets {
            if sos2_violated(&relaxed, set) {
                adjacent_rewrite(&mut values, set);
            }
        }
        let obj: f64 = lp.objective.iter().zip(&values).map(|(c, v)| c * v).sum();
        let feas = super::max_violation(lp, &values);
        if feas <= FEASIBILITY_TOL && (obj - relaxed.objective).abs() <= 1e-7 * (1.0 + obj.abs())
        {
            return Ok(LpSolution {
                status: Status::Optimal,
                objective: relaxed.objective,
                values,
                feasibility: feas,
            });
        }
    }
    branch_and_bound(lp, sets, relaxed)
}

fn branch_and_bound(
    lp: &LinearProgram,
    sets: &[Sos2Set],
    root: LpSolution,
) -> Result<LpSolution, SolverError> {
    let mut incumbent: Option<LpSolution> = None;
    // Depth-first; each frame is (bound overrides, LP relaxation result).
    let mut stack: Vec<(Vec<(usize, f64)>, LpSolution)> = vec![(Vec::new(), root)];
    while let Some((fixed, sol)) = stack.pop() {
        if let Some(inc) = &incumbent {
            if sol.objective >= inc.objective - 1e-12 * (1.0 + inc.objective.abs()) {
                continue;
            }
        }
        let violated = sets.iter().find(|s| sos2_violated(&sol, s));
        let set = match violated {
            None => {
                incumbent = Some(sol);
                continue;
            }
            Some(s) => s,
        };
        let nz: Vec<usize> = (0..set.vars.len())
            .filter(|&k| sol.values[set.vars[k]].abs() > SOS2_WEIGHT_TOL)
            .collect();
        // A violated set has spread weight over at least positions p1..p2
        // with p2 >= p1 + 2; splitting strictly between them shrinks both
        // children, so the search terminates.
        let (p1, p2) = (nz[0], nz[nz.len() - 1]);
        let r = ((p1 + p2) / 2).clamp(p1 + 1, p2 - 1);
        // Left child keeps positions <= r, right child keeps >= r.
        let children = [
            (r + 1..set.vars.len()).collect::<Vec<_>>(),
            (0..r).collect::<Vec<_>>(),
        ];
        for zeroed in children {
            let mut child = fixed.clone();
            for k in zeroed {
                child.push((set.vars[k], 0.0));
            }
            let mut sub = lp.clone();
            for &(j, v) in &child {
                sub.lower[j] = v;
                sub.upper[j] = v;
            }
            let s = solve_lp(&sub)?;
            if s.status == Status::Optimal {
                stack.push((child, s));
            }
        }
    }
    Ok(incumbent.unwrap_or_else(|| LpSolution::non_optimal(Status::Infeasible)))
}
