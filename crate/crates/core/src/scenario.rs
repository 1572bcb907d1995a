//! Discretized uncertainty: per-stage scenario nodes, Markov transitions,
//! and the stochastic input series (synthetic or CSV-fed).
//!
//! Two independent sources — weather (temperature + irradiance jointly)
//! and EV departure/arrival timing — are each discretized into three
//! normal nodes, giving nine combined nodes per stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ModelError, ScenarioRealization};

/// Probability mass on the mean node of the 3-point normal discretization.
pub const PROB_MEAN: f64 = 0.682;
/// Probability mass on each of the +/- one-sigma nodes.
pub const PROB_SIGMA: f64 = 0.159;

pub const PROB_TOL: f64 = 1e-12;

/// One joint realization of the two stochastic sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteNode {
    pub id: usize,
    pub probability: f64,
    /// -1, 0, +1 sigma shift of the weather source.
    pub weather_shift: i8,
    /// -1, 0, +1 two-hour shift of the EV away window.
    pub ev_shift: i8,
}

/// Per-stage node set with a row-stochastic transition matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovModel {
    pub nodes: Vec<DiscreteNode>,
    /// transition[from][to] = probability of `to` next stage given `from`.
    pub transition: Vec<Vec<f64>>,
}

impl MarkovModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.nodes.len();
        if self.transition.len() != n {
            return Err(ModelError::Validation(
                "transition matrix row count differs from node count".into(),
            ));
        }
        let node_sum: f64 = self.nodes.iter().map(|n| n.probability).sum();
        if (node_sum - 1.0).abs() > PROB_TOL {
            return Err(ModelError::Validation(format!(
                "node probabilities sum to {node_sum}, not 1"
            )));
        }
        for node in &self.nodes {
            if !(node.probability > 0.0 && node.probability <= 1.0) {
                return Err(ModelError::Validation(format!(
                    "node {} probability {} outside (0, 1]",
                    node.id, node.probability
                )));
            }
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::Validation(format!(
                    "transition row {i} has wrong length"
                )));
            }
            if row.iter().any(|&p| p < 0.0) {
                return Err(ModelError::Validation(format!(
                    "transition row {i} has a negative entry"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > PROB_TOL {
                return Err(ModelError::Validation(format!(
                    "transition row {i} sums to {s}, not 1"
                )));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Three-node discretization of a normal distribution: the mean and the
/// two one-sigma points.
pub fn discretize_normal(mu: f64, sigma: f64) -> Result<[(f64, f64); 3], ModelError> {
    if sigma < 0.0 {
        return Err(ModelError::Validation("negative sigma".into()));
    }
    Ok([
        (mu, PROB_MEAN),
        (mu - sigma, PROB_SIGMA),
        (mu + sigma, PROB_SIGMA),
    ])
}

/// The three canonical shift nodes of one source.
fn shift_nodes() -> [(i8, f64); 3] {
    [(0, PROB_MEAN), (-1, PROB_SIGMA), (1, PROB_SIGMA)]
}

/// Cartesian product of the weather and EV shift nodes.
pub fn combine_sources(
    weather: &[(i8, f64)],
    ev: &[(i8, f64)],
) -> Result<Vec<DiscreteNode>, ModelError> {
    for (name, src) in [("weather", weather), ("ev", ev)] {
        let s: f64 = src.iter().map(|&(_, p)| p).sum();
        if (s - 1.0).abs() > PROB_TOL {
            return Err(ModelError::Validation(format!(
                "{name} node probabilities sum to {s}, not 1"
            )));
        }
    }
    let mut nodes = Vec::with_capacity(weather.len() * ev.len());
    for &(ws, wp) in weather {
        for &(es, ep) in ev {
            nodes.push(DiscreteNode {
                id: nodes.len(),
                probability: wp * ep,
                weather_shift: ws,
                ev_shift: es,
            });
        }
    }
    Ok(nodes)
}

/// The default nine combined scenario nodes.
pub fn default_nodes() -> Vec<DiscreteNode> {
    combine_sources(&shift_nodes(), &shift_nodes()).expect("canonical nodes")
}

/// Stage-independent transitions: every row equals the unconditional node
/// probabilities, which trivially satisfies the memoryless property.
pub fn default_transition(nodes: &[DiscreteNode]) -> Result<MarkovModel, ModelError> {
    let row: Vec<f64> = nodes.iter().map(|n| n.probability).collect();
    let model = MarkovModel {
        nodes: nodes.to_vec(),
        transition: vec![row; nodes.len()],
    };
    model.validate()?;
    Ok(model)
}

/// Builds a Markov model from an explicit row-stochastic matrix.
pub fn custom_transition(
    nodes: &[DiscreteNode],
    transition: Vec<Vec<f64>>,
) -> Result<MarkovModel, ModelError> {
    let model = MarkovModel {
        nodes: nodes.to_vec(),
        transition,
    };
    model.validate()?;
    Ok(model)
}

const BASE_DEPARTURE: usize = 9;
const BASE_ARRIVAL: usize = 17;
/// One discretization sigma of the departure/arrival time, hours.
const EV_SHIFT_HOURS: i32 = 2;

/// EV connectivity over a 24-hour stage: away between the shifted
/// departure and arrival hours, always connected at the stage boundary.
pub fn gen_ev_availability(shift: i8, stage_hours: usize) -> Result<Vec<bool>, ModelError> {
    if stage_hours != 24 {
        return Err(ModelError::Validation(
            "EV availability pattern is defined for 24-hour stages".into(),
        ));
    }
    let depart = BASE_DEPARTURE as i32 + EV_SHIFT_HOURS * shift as i32;
    let arrive = BASE_ARRIVAL as i32 + EV_SHIFT_HOURS * shift as i32;
    if depart < 1 || arrive >= 23 {
        return Err(ModelError::Validation(format!(
            "shifted away window [{depart}, {arrive}) escapes [1, 23)"
        )));
    }
    Ok((0..24)
        .map(|h| {
            let h = h as i32;
            h == 0 || h == 23 || h < depart || h >= arrive
        })
        .collect())
}

/// Hourly mean/sigma tables for the weather source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherTables {
    pub t_out_mu: Vec<f64>,
    pub t_out_sigma: Vec<f64>,
    pub irradiance_mu: Vec<f64>,
    pub irradiance_sigma: Vec<f64>,
}

impl WeatherTables {
    pub fn validate(&self, hours: usize) -> Result<(), ModelError> {
        for (name, arr) in [
            ("t_out_mu", &self.t_out_mu),
            ("t_out_sigma", &self.t_out_sigma),
            ("irradiance_mu", &self.irradiance_mu),
            ("irradiance_sigma", &self.irradiance_sigma),
        ] {
            if arr.len() != hours {
                return Err(ModelError::ScenarioMismatch {
                    what: "weather table",
                    expected: hours,
                    got: arr.len(),
                });
            }
            if name.ends_with("sigma") && arr.iter().any(|&v| v < 0.0) {
                return Err(ModelError::Validation(format!("{name}: negative sigma")));
            }
        }
        Ok(())
    }
}

/// Applies one joint sigma shift to temperature and irradiance.
/// Irradiance cannot go negative.
pub fn gen_weather(shift: i8, tables: &WeatherTables) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    tables.validate(tables.t_out_mu.len())?;
    if tables.t_out_mu.len() != tables.irradiance_mu.len() {
        return Err(ModelError::Validation(
            "temperature and irradiance tables differ in length".into(),
        ));
    }
    let s = shift as f64;
    let t_out = tables
        .t_out_mu
        .iter()
        .zip(&tables.t_out_sigma)
        .map(|(&mu, &sig)| mu + s * sig)
        .collect();
    let irr = tables
        .irradiance_mu
        .iter()
        .zip(&tables.irradiance_sigma)
        .map(|(&mu, &sig)| (mu + s * sig).max(0.0))
        .collect();
    Ok((t_out, irr))
}

/// Deterministic inputs for one stage (day): price and load series plus
/// the weather distribution tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageData {
    pub spot: Vec<f64>,
    pub load: Vec<f64>,
    pub weather: WeatherTables,
}

/// All stages of the horizon; realizing (stage, node) is a pure function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageInputs {
    pub stages: Vec<StageData>,
}

impl StageInputs {
    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn validate(&self, hours: usize) -> Result<(), ModelError> {
        for (g, st) in self.stages.iter().enumerate() {
            if st.spot.len() != hours || st.load.len() != hours {
                return Err(ModelError::Validation(format!(
                    "stage {g}: spot/load series not {hours} hours"
                )));
            }
            st.weather.validate(hours)?;
        }
        Ok(())
    }

    /// Realizes the stochastic variables for (stage, node).
    pub fn realize(
        &self,
        stage: usize,
        node: &DiscreteNode,
    ) -> Result<ScenarioRealization, ModelError> {
        let data = self.stages.get(stage).ok_or_else(|| {
            ModelError::Validation(format!("stage {stage} out of range"))
        })?;
        let (t_out, irradiance) = gen_weather(node.weather_shift, &data.weather)?;
        let ev_connected = gen_ev_availability(node.ev_shift, data.spot.len())?;
        Ok(ScenarioRealization {
            spot: data.spot.clone(),
            load: data.load.clone(),
            ev_connected,
            irradiance,
            t_out,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    WinterDefault,
}

/// Seeded synthetic stand-in for the historical price/load/weather data:
/// winter temperatures, low irradiance, morning and evening price and
/// load peaks. Same seed, same series.
pub fn synthetic_series(
    seed: u64,
    kind: ProfileKind,
    num_stages: usize,
) -> Result<StageInputs, ModelError> {
    match kind {
        ProfileKind::WinterDefault => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stages = Vec::with_capacity(num_stages);
    for _ in 0..num_stages {
        let day_price_level: f64 = 0.05 + rng.gen::<f64>() * 0.03;
        let day_temp_level: f64 = -4.0 + rng.gen::<f64>() * 5.0;
        let day_load_level: f64 = 0.9 + rng.gen::<f64>() * 0.3;
        let mut spot = Vec::with_capacity(24);
        let mut load = Vec::with_capacity(24);
        let mut t_out_mu = Vec::with_capacity(24);
        let mut t_out_sigma = Vec::with_capacity(24);
        let mut irradiance_mu = Vec::with_capacity(24);
        let mut irradiance_sigma = Vec::with_capacity(24);
        for h in 0..24usize {
            let hf = h as f64;
            // Morning (08) and evening (18) humps.
            let morning = (-((hf - 8.0) / 2.0).powi(2)).exp();
            let evening = (-((hf - 18.0) / 2.5).powi(2)).exp();
            let price_noise = rng.gen::<f64>() * 0.004;
            spot.push(day_price_level + 0.04 * morning + 0.06 * evening + price_noise);
            // Coefficients leave headroom under the 10 kW import cap even
            // when peak load, passive EV charging, and a saturated heater
            // coincide.
            let load_noise = rng.gen::<f64>() * 0.05;
            load.push(day_load_level * (0.6 + 1.5 * morning + 1.8 * evening) + load_noise);
            // Diurnal temperature swing around a sub-zero winter level.
            let diurnal = 2.0 * ((hf - 14.0) / 24.0 * std::f64::consts::TAU).cos();
            t_out_mu.push(day_temp_level + diurnal);
            t_out_sigma.push(2.0);
            // Short winter day: production factor peaks near noon.
            let sun = (-((hf - 12.0) / 2.2).powi(2)).exp();
            let irr = if (9..=15).contains(&h) { 0.25 * sun } else { 0.0 };
            irradiance_mu.push(irr);
            irradiance_sigma.push(0.4 * irr);
        }
        stages.push(StageData {
            spot,
            load,
            weather: WeatherTables {
                t_out_mu,
                t_out_sigma,
                irradiance_mu,
                irradiance_sigma,
            },
        });
    }
    Ok(StageInputs { stages })
}

/// Draws a scenario path of length `num_stages` through the Markov model.
pub fn draw_path(rng: &mut impl Rng, markov: &MarkovModel, num_stages: usize) -> Vec<usize> {
    let mut path = Vec::with_capacity(num_stages);
    let unconditional: Vec<f64> = markov.nodes.iter().map(|n| n.probability).collect();
    let mut current = sample_index(rng, &unconditional);
    for _ in 0..num_stages {
        path.push(current);
        current = sample_index(rng, &markov.transition[current]);
    }
    path
}

fn sample_index(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}
