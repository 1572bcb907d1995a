//! Backward-recursion checks: exact expectation bookkeeping, curve shape
//! guarantees, agreement with a brute-force scenario tree on a small
//! instance, and the value of flexibility never being negative.

use peakflex::model::*;
use peakflex::oracle::scenario_tree_expected_cost;
use peakflex::scenario::{custom_transition, default_nodes, default_transition, synthetic_series, DiscreteNode, ProfileKind};
use peakflex::sdp::*;

fn small_set(stages: usize) -> ScenarioSet {
    let inputs = synthetic_series(11, ProfileKind::WinterDefault, stages).unwrap();
    let markov = default_transition(&default_nodes()).unwrap();
    ScenarioSet::from_inputs(&inputs, &markov).unwrap()
}

/// A two-stage, six-hour, two-node battery-only instance small enough to
/// enumerate as a scenario tree.
fn toy_instance() -> (HouseholdConfig, ScenarioSet, PeakGrid) {
    let cfg = HouseholdConfig {
        hours_per_stage: 6,
        mask: FlexibilityMask {
            battery: AssetMode::Flexible,
            ev: AssetMode::Passive,
            heating: AssetMode::Passive,
        },
        ..HouseholdConfig::default()
    };
    let nodes = vec![
        DiscreteNode { id: 0, probability: 0.5, weather_shift: 0, ev_shift: 0 },
        DiscreteNode { id: 1, probability: 0.5, weather_shift: 0, ev_shift: 0 },
    ];
    let markov = custom_transition(&nodes, vec![vec![0.5, 0.5]; 2]).unwrap();
    let day = |spot: [f64; 6], load: [f64; 6]| ScenarioRealization {
        spot: spot.to_vec(),
        load: load.to_vec(),
        ev_connected: vec![true; 6],
        irradiance: vec![0.0; 6],
        t_out: vec![18.0; 6],
    };
    let realizations = vec![
        vec![
            day([0.03, 0.05, 0.10, 0.12, 0.06, 0.04], [0.8, 1.2, 2.8, 3.2, 1.5, 0.9]),
            day([0.04, 0.06, 0.09, 0.11, 0.07, 0.05], [0.9, 1.4, 2.4, 2.9, 1.6, 1.0]),
        ],
        vec![
            day([0.05, 0.07, 0.13, 0.15, 0.08, 0.05], [1.0, 1.5, 3.0, 3.4, 1.8, 1.1]),
            day([0.03, 0.04, 0.08, 0.10, 0.05, 0.03], [0.7, 1.1, 2.2, 2.6, 1.3, 0.8]),
        ],
    ];
    let set = ScenarioSet::new(markov, realizations).unwrap();
    let grid = PeakGrid::uniform(5, cfg.tariff.import_cap_kw).unwrap();
    (cfg, set, grid)
}

#[test]
fn toy_matches_scenario_tree() {
    let (cfg, set, grid) = toy_instance();
    let table = run_backward_set(&cfg, &set, &grid).unwrap();
    let initial = table.initial_curve().unwrap();
    let cell = grid.points[1] - grid.points[0];
    let tol = cfg.tariff.peak_eur_per_kw * cell;
    for &p0 in &grid.points {
        let tree = scenario_tree_expected_cost(&cfg, &set, p0).unwrap();
        let curve_val = initial.interpolate(p0).unwrap();
        assert!(
            (curve_val - tree).abs() <= tol,
            "p0 {p0}: curve {curve_val} vs tree {tree}, tol {tol}"
        );
    }
}

#[test]
fn expectations_recompute_exactly() {
    let cfg = HouseholdConfig::default();
    let set = small_set(3);
    let grid = PeakGrid::uniform(20, cfg.tariff.import_cap_kw).unwrap();
    let table = run_backward_set(&cfg, &set, &grid).unwrap();
    let t = &set.markov.transition;
    for g in 0..3 {
        for s_prev in 0..set.num_nodes() {
            for n in 0..grid.len() {
                // Same summation order as the backward pass: equality is
                // bitwise, not approximate.
                let mut expect = 0.0;
                for s in 0..set.num_nodes() {
                    expect += t[s_prev][s] * table.cost[g][s][n];
                }
                assert_eq!(table.phi[g][s_prev][n], expect, "stage {g}, node {s_prev}, point {n}");
            }
        }
    }
    for n in 0..grid.len() {
        let mut expect = 0.0;
        for (s, node) in set.markov.nodes.iter().enumerate() {
            expect += node.probability * table.cost[0][s][n];
        }
        assert_eq!(table.initial[n], expect, "initial point {n}");
    }
}

#[test]
fn curves_monotone_with_bounded_marginals() {
    let cfg = HouseholdConfig {
        mask: FlexibilityMask {
            battery: AssetMode::Flexible,
            ev: AssetMode::Flexible,
            heating: AssetMode::Flexible,
        },
        ..HouseholdConfig::default()
    };
    let set = small_set(3);
    let grid = PeakGrid::uniform(20, cfg.tariff.import_cap_kw).unwrap();
    let table = run_backward_set(&cfg, &set, &grid).unwrap();
    assert!(table.warnings.is_empty(), "warnings: {:?}", table.warnings);
    let peak_rate = cfg.tariff.peak_eur_per_kw;
    let mut curves: Vec<Efcc> = vec![table.initial_curve().unwrap()];
    for g in 0..3 {
        for s in 0..set.num_nodes() {
            curves.push(Efcc::new(
                grid.points.iter().copied().zip(table.phi[g][s].iter().copied()).collect(),
            ).unwrap());
        }
    }
    for curve in &curves {
        for (_, slope) in marginal_curve(curve) {
            assert!(slope >= -1e-6, "negative marginal {slope}");
            assert!(slope <= peak_rate * (1.0 + 1e-6) + 1e-6, "marginal {slope} above peak rate");
        }
        let p_star = optimal_initial_peak(curve, 1e-9);
        assert!(p_star >= curve.points[0].0 && p_star <= curve.points.last().unwrap().0);
    }
}

#[test]
fn flexibility_never_hurts() {
    let set = small_set(3);
    let grid = PeakGrid::uniform(25, 10.0).unwrap();
    let reference = run_backward_set(&HouseholdConfig::default(), &set, &grid).unwrap();
    for asset in ["battery", "ev", "heating"] {
        let mut cfg = HouseholdConfig::default();
        match asset {
            "battery" => cfg.mask.battery = AssetMode::Flexible,
            "ev" => cfg.mask.ev = AssetMode::Flexible,
            _ => cfg.mask.heating = AssetMode::Flexible,
        }
        let table = run_backward_set(&cfg, &set, &grid).unwrap();
        for n in 0..grid.len() {
            assert!(
                table.initial[n] <= reference.initial[n] + 1e-6,
                "{asset} raises the expected cost at grid point {n}: {} vs {}",
                table.initial[n],
                reference.initial[n]
            );
        }
    }
}
