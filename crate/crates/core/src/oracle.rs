//! Brute-force reference implementations used by the `selftest`
//! command and the integration suites: vertex enumeration for bounded
//! LPs, explicit segment enumeration for SOS-2 problems, and a
//! self-contained random problem generator. Nothing here calls back
//! into the simplex path it checks.

use crate::solver::{LinearProgram, Sense, Sos2Set};

/// Solves a dense n x n system by Gaussian elimination with partial
/// pivoting. Returns None when (near) singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-11 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn feasible(lp: &LinearProgram, x: &[f64], tol: f64) -> bool {
    for j in 0..lp.num_vars {
        if x[j] < lp.lower[j] - tol || x[j] > lp.upper[j] + tol {
            return false;
        }
    }
    for row in &lp.rows {
        let act: f64 = row.terms.iter().map(|&(j, c)| c * x[j]).sum();
        let ok = match row.sense {
            Sense::Le => act <= row.rhs + tol,
            Sense::Ge => act >= row.rhs - tol,
            Sense::Eq => (act - row.rhs).abs() <= tol,
        };
        if !ok {
            return false;
        }
    }
    true
}

/// Brute-force LP oracle: enumerates every basic point (each subset of n
/// active constraints drawn from rows-as-equalities and variable bounds),
/// keeps the feasible ones, and returns the minimum objective. Only
/// sensible for small, bounded problems.
pub fn vertex_enumeration_min(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars;
    // Candidate active constraints as (coefficients, rhs).
    let mut cands: Vec<(Vec<f64>, f64)> = Vec::new();
    for row in &lp.rows {
        let mut a = vec![0.0; n];
        for &(j, c) in &row.terms {
            a[j] = c;
        }
        cands.push((a, row.rhs));
    }
    for j in 0..n {
        if lp.lower[j].is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            cands.push((a, lp.lower[j]));
        }
        if lp.upper[j].is_finite() && lp.upper[j] != lp.lower[j] {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            cands.push((a, lp.upper[j]));
        }
    }
    let k = cands.len();
    if k < n {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| cands[i].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| cands[i].1).collect();
        if let Some(x) = solve_dense(a, b) {
            if feasible(lp, &x, 1e-7) {
                let obj: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // Next combination of indices.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] != i + k - n {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// SOS-2 oracle: enumerates every adjacent segment of every set (Cartesian
/// product across sets), restricts the LP to each combination by zeroing
/// all other weights, and minimizes with vertex enumeration.
pub fn sos2_segment_enumeration_min(lp: &LinearProgram, sets: &[Sos2Set]) -> Option<f64> {
    fn rec(
        lp: &LinearProgram,
        sets: &[Sos2Set],
        depth: usize,
        bounds: &mut (Vec<f64>, Vec<f64>),
    ) -> Option<f64> {
        if depth == sets.len() {
            let mut sub = lp.clone();
            sub.lower = bounds.0.clone();
            sub.upper = bounds.1.clone();
            return vertex_enumeration_min(&sub);
        }
        let set = &sets[depth];
        let mut best: Option<f64> = None;
        let segs = set.vars.len().max(2) - 1;
        for seg in 0..segs {
            let saved = bounds.clone();
            for (k, &j) in set.vars.iter().enumerate() {
                let keep = k == seg || k == seg + 1 || set.vars.len() == 1;
                if !keep {
                    bounds.0[j] = 0.0;
                    bounds.1[j] = 0.0;
                }
            }
            if let Some(v) = rec(lp, sets, depth + 1, bounds) {
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
            *bounds = saved;
        }
        best
    }
    let mut bounds = (lp.lower.clone(), lp.upper.clone());
    rec(lp, sets, 0, &mut bounds)
}

/// Deterministic xorshift generator for seeded random test problems; kept
/// independent of the rand crate so oracle inputs never drift.
pub struct XorShift(u64);

impl XorShift {
    pub fn new(seed: u64) -> Self {
        Self(seed.max(1))
    }
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }
    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + u * (hi - lo)
    }
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// A random LP with all-finite bounds (hence bounded feasible region if
/// nonempty).
pub fn random_bounded_lp(rng: &mut XorShift, max_vars: usize, max_rows: usize) -> LinearProgram {
    let n = 2 + rng.below(max_vars - 1);
    let m = 1 + rng.below(max_rows);
    let mut lp = LinearProgram::new();
    for _ in 0..n {
        let lo = rng.uniform(-5.0, 1.0);
        let hi = lo + rng.uniform(0.0, 8.0);
        lp.add_var(lo, hi, rng.uniform(-3.0, 3.0));
    }
    for _ in 0..m {
        let mut terms = Vec::new();
        for j in 0..n {
            if rng.below(3) != 0 {
                terms.push((j, rng.uniform(-2.0, 2.0)));
            }
        }
        if terms.is_empty() {
            terms.push((rng.below(n), rng.uniform(-2.0, 2.0)));
        }
        let sense = match rng.below(3) {
            0 => Sense::Le,
            1 => Sense::Ge,
            _ => Sense::Eq,
        };
        // Keep equality rows mostly satisfiable by anchoring the rhs near
        // an interior point of the box.
        let mid: f64 = terms
            .iter()
            .map(|&(j, c)| c * 0.5 * (lp.lower[j] + lp.upper[j]))
            .sum();
        let rhs = mid + rng.uniform(-2.0, 2.0);
        lp.add_row(terms, sense, rhs);
    }
    lp
}

/// A random interpolation problem over one piecewise-linear curve: the
/// convexity flag switches between a curve built from increasing slopes
/// and rejection-sampled genuinely non-convex ordinates. An extra priced
/// variable linked to the interpolated abscissa keeps the optimum off
/// trivial corners.
pub fn random_curve_lp(rng: &mut XorShift, convex: bool) -> (LinearProgram, Vec<Sos2Set>) {
    let npts = 3 + rng.below(4);
    let mut bps = vec![0.0];
    for _ in 1..npts {
        bps.push(bps.last().unwrap() + rng.uniform(0.5, 2.0));
    }
    let mut costs = Vec::with_capacity(npts);
    if convex {
        let mut c = rng.uniform(0.0, 2.0);
        let mut slope = rng.uniform(-1.0, 0.5);
        costs.push(c);
        for k in 1..npts {
            slope += rng.uniform(0.0, 1.5);
            c += slope * (bps[k] - bps[k - 1]);
            costs.push(c);
        }
    } else {
        loop {
            costs.clear();
            for _ in 0..npts {
                costs.push(rng.uniform(0.0, 10.0));
            }
            let pts: Vec<(f64, f64)> = bps.iter().copied().zip(costs.iter().copied()).collect();
            if !crate::solver::is_convex_pwl(&pts, 1e-9).unwrap() {
                break;
            }
        }
    }
    let mut lp = LinearProgram::new();
    let gammas: Vec<usize> = costs
        .iter()
        .map(|&c| lp.add_var(0.0, f64::INFINITY, c))
        .collect();
    let span = *bps.last().unwrap();
    let z = lp.add_var(0.0, span, rng.uniform(-2.0, 2.0));
    lp.add_row(gammas.iter().map(|&j| (j, 1.0)).collect(), Sense::Eq, 1.0);
    let mut link: Vec<(usize, f64)> = gammas.iter().zip(&bps).map(|(&j, &b)| (j, b)).collect();
    link.push((z, -1.0));
    let floor = rng.uniform(0.0, span * 0.8);
    lp.add_row(link, Sense::Ge, floor - span);
    let set = Sos2Set::new(gammas, bps).unwrap();
    (lp, vec![set])
}

use crate::model::{
    passive_ev_profile, passive_sh_profile, HouseholdConfig, ModelError, ScenarioRealization,
};
use crate::sdp::ScenarioSet;
use crate::solver::{solve_lp, Status};

/// Joint multi-day optimum with day-boundary pinning: every day restarts
/// from the configured initial storage levels and temperatures (storage
/// hard, temperatures soft-penalized at each day end, penalty excluded
/// from the returned cost), while a single peak variable with lower bound
/// `p0` spans the horizon and pays the full tariff rate. This is the
/// clairvoyant counterpart of chaining daily problems through
/// interpolated future-cost curves, so decomposed results may exceed it
/// only by the interpolation error.
pub fn whole_horizon_optimum(
    cfg: &HouseholdConfig,
    days: &[ScenarioRealization],
    p0: f64,
) -> Result<f64, ModelError> {
    cfg.validate()?;
    let hours = cfg.hours_per_stage;
    let ev = &cfg.ev;
    let bat = &cfg.battery;
    let th = &cfg.thermal;
    let ev_flex = cfg.mask.ev.is_flexible();
    let bat_flex = cfg.mask.battery.is_flexible();
    let sh_flex = cfg.mask.heating.is_flexible();

    let mut lp = LinearProgram::new();
    let peak = lp.add_var(p0, cfg.tariff.import_cap_kw, cfg.tariff.peak_eur_per_kw);
    let mut penalty_vars: Vec<usize> = Vec::new();

    for scen in days {
        scen.validate(hours)?;
        let ev_profile = if ev_flex {
            None
        } else {
            Some(passive_ev_profile(scen, ev)?)
        };
        // As in the daily builder, the hold profile supplies the soft
        // end-of-day temperature targets for the flexible case.
        let hold_profile = passive_sh_profile(scen, th);
        let sh_profile = if sh_flex { None } else { Some(&hold_profile) };
        let departing: Vec<bool> = (0..hours)
            .map(|t| scen.ev_connected[t] && t + 1 < hours && !scen.ev_connected[t + 1])
            .collect();

        let imp: Vec<usize> = (0..hours)
            .map(|t| {
                lp.add_var(
                    0.0,
                    cfg.tariff.import_cap_kw,
                    cfg.tariff.vat * scen.spot[t] + cfg.tariff.grid_eur_per_kwh,
                )
            })
            .collect();
        let exp: Vec<usize> = (0..hours)
            .map(|t| lp.add_var(0.0, f64::INFINITY, -scen.spot[t]))
            .collect();
        let pv: Vec<usize> = (0..hours)
            .map(|t| lp.add_var(0.0, cfg.pv.available_kw(scen.irradiance[t]), 0.0))
            .collect();
        let bat_ch: Vec<usize> = (0..hours)
            .map(|_| {
                let cap = if bat_flex {
                    bat.charge_kw / bat.charge_efficiency
                } else {
                    0.0
                };
                lp.add_var(0.0, cap, 0.0)
            })
            .collect();
        let bat_dch: Vec<usize> = (0..hours)
            .map(|_| lp.add_var(0.0, if bat_flex { bat.discharge_kw } else { 0.0 }, 0.0))
            .collect();
        let bat_soc: Vec<usize> = (0..hours)
            .map(|t| {
                if !bat_flex || t == hours - 1 {
                    lp.add_var(bat.initial_soc_kwh, bat.initial_soc_kwh, 0.0)
                } else {
                    lp.add_var(
                        bat.min_soc_frac * bat.capacity_kwh,
                        bat.max_soc_frac * bat.capacity_kwh,
                        0.0,
                    )
                }
            })
            .collect();
        let ev_ch: Vec<usize> = (0..hours)
            .map(|t| match &ev_profile {
                Some(prof) => lp.add_var(prof[t], prof[t], 0.0),
                None => {
                    let cap = if scen.ev_connected[t] { ev.charger_kw } else { 0.0 };
                    lp.add_var(0.0, cap, 0.0)
                }
            })
            .collect();
        let ev_soc: Vec<usize> = (0..hours)
            .map(|t| {
                if !ev_flex {
                    lp.add_var(0.0, ev.capacity_kwh, 0.0)
                } else if t == hours - 1 {
                    lp.add_var(ev.initial_soc_kwh, ev.initial_soc_kwh, 0.0)
                } else {
                    let lo = if departing[t] {
                        ev.departure_soc_frac
                    } else {
                        ev.min_soc_frac
                    } * ev.capacity_kwh;
                    lp.add_var(lo, ev.max_soc_frac * ev.capacity_kwh, 0.0)
                }
            })
            .collect();
        let heat: Vec<usize> = (0..hours)
            .map(|t| match &sh_profile {
                Some(prof) => lp.add_var(prof.q[t], prof.q[t], 0.0),
                None => lp.add_var(0.0, th.heater_kw, 0.0),
            })
            .collect();
        let t_in: Vec<usize> = (0..hours)
            .map(|_| {
                if sh_flex {
                    lp.add_var(th.t_in_min, th.t_in_max, 0.0)
                } else {
                    lp.add_var(-100.0, 200.0, 0.0)
                }
            })
            .collect();
        let t_e: Vec<usize> = (0..hours).map(|_| lp.add_var(-100.0, 200.0, 0.0)).collect();

        for t in 0..hours {
            lp.add_row(
                vec![
                    (imp[t], 1.0),
                    (exp[t], -1.0),
                    (pv[t], 1.0),
                    (bat_dch[t], 1.0),
                    (ev_ch[t], -1.0),
                    (heat[t], -1.0),
                    (bat_ch[t], -1.0),
                ],
                Sense::Eq,
                scen.load[t],
            );
            lp.add_row(vec![(peak, 1.0), (imp[t], -1.0)], Sense::Ge, 0.0);
        }
        let ev_init = if ev_flex {
            ev.initial_soc_kwh
        } else {
            ev.passive_initial_soc_kwh
        };
        for t in 0..hours {
            let delta = if scen.ev_connected[t] { 1.0 } else { 0.0 };
            let mut terms = vec![(ev_soc[t], 1.0), (ev_ch[t], -ev.charge_efficiency * delta)];
            let mut rhs = -ev.drain_kwh_per_h * (1.0 - delta);
            if t == 0 {
                rhs += ev_init;
            } else {
                terms.push((ev_soc[t - 1], -1.0));
            }
            lp.add_row(terms, Sense::Eq, rhs);

            let mut terms = vec![
                (bat_soc[t], 1.0),
                (bat_ch[t], -bat.charge_efficiency),
                (bat_dch[t], 1.0 / bat.discharge_efficiency),
            ];
            let mut rhs = 0.0;
            if t == 0 {
                rhs += bat.initial_soc_kwh;
            } else {
                terms.push((bat_soc[t - 1], -1.0));
            }
            lp.add_row(terms, Sense::Eq, rhs);
        }
        let a = 1.0 / (th.r_ie * th.c_i);
        let b = 1.0 / (th.r_ie * th.c_e);
        let c_out = if th.envelope_capacitance_fix { th.c_e } else { th.c_i };
        let c = 1.0 / (th.r_eo * c_out);
        for t in 0..hours {
            let mut terms = vec![(t_in[t], 1.0), (heat[t], -1.0 / th.c_i)];
            let mut rhs = 0.0;
            if t == 0 {
                rhs = (1.0 - a) * th.initial_t_in + a * th.initial_t_e;
            } else {
                terms.push((t_in[t - 1], -(1.0 - a)));
                terms.push((t_e[t - 1], -a));
            }
            lp.add_row(terms, Sense::Eq, rhs);

            let mut terms = vec![(t_e[t], 1.0)];
            let mut rhs = c * scen.t_out[t];
            if t == 0 {
                rhs += (1.0 - b - c) * th.initial_t_e + b * th.initial_t_in;
            } else {
                terms.push((t_e[t - 1], -(1.0 - b - c)));
                terms.push((t_in[t - 1], -b));
            }
            lp.add_row(terms, Sense::Eq, rhs);
        }
        if sh_flex {
            let rate = th.penalty_eur_per_deg;
            let sl: Vec<usize> = (0..4).map(|_| lp.add_var(0.0, f64::INFINITY, rate)).collect();
            penalty_vars.extend_from_slice(&sl);
            lp.add_row(
                vec![(t_in[hours - 1], 1.0), (sl[0], -1.0), (sl[1], 1.0)],
                Sense::Eq,
                *hold_profile.t_in.last().unwrap(),
            );
            lp.add_row(
                vec![(t_e[hours - 1], 1.0), (sl[2], -1.0), (sl[3], 1.0)],
                Sense::Eq,
                *hold_profile.t_e.last().unwrap(),
            );
        }
    }

    let sol = solve_lp(&lp).map_err(|e| ModelError::Validation(format!("oracle solver: {e}")))?;
    match sol.status {
        Status::Optimal => {
            let penalty: f64 = penalty_vars
                .iter()
                .map(|&j| sol.values[j] * cfg.thermal.penalty_eur_per_deg)
                .sum();
            Ok(sol.objective - penalty)
        }
        other => Err(ModelError::InfeasibleScenario(format!(
            "whole-horizon oracle ended {other:?}"
        ))),
    }
}

/// Exhaustive scenario-tree optimum: enumerates every node path through
/// the horizon, solves each path's whole-horizon problem jointly, and
/// weights by path probability. Exponential in the stage count; only for
/// toy instances.
pub fn scenario_tree_expected_cost(
    cfg: &HouseholdConfig,
    set: &ScenarioSet,
    p0: f64,
) -> Result<f64, ModelError> {
    fn rec(
        cfg: &HouseholdConfig,
        set: &ScenarioSet,
        p0: f64,
        prefix: &mut Vec<usize>,
        prob: f64,
        acc: &mut f64,
    ) -> Result<(), ModelError> {
        let g = prefix.len();
        if g == set.num_stages() {
            let days: Vec<ScenarioRealization> = prefix
                .iter()
                .enumerate()
                .map(|(d, &s)| set.realizations[d][s].clone())
                .collect();
            *acc += prob * whole_horizon_optimum(cfg, &days, p0)?;
            return Ok(());
        }
        for s in 0..set.num_nodes() {
            let p = if g == 0 {
                set.markov.nodes[s].probability
            } else {
                set.markov.transition[prefix[g - 1]][s]
            };
            if p == 0.0 {
                continue;
            }
            prefix.push(s);
            rec(cfg, set, p0, prefix, prob * p, acc)?;
            prefix.pop();
        }
        Ok(())
    }
    let mut acc = 0.0;
    rec(cfg, set, p0, &mut Vec::new(), 1.0, &mut acc)?;
    Ok(acc)
}
