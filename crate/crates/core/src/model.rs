//! Household devices, tariffs, and the daily scheduling problem.
//!
//! The daily problem minimizes spot purchase plus volumetric grid cost
//! plus the interpolated future cost of the peak-import level, subject to
//! the hourly energy balance, EV/battery storage dynamics, PV
//! availability, and a 2R2C thermal network. Assets marked passive are
//! pinned to their rule-based profiles; flexible storage must return to
//! its initial level at the end of the stage, and end temperatures are
//! soft-pinned with a high penalty that is excluded from recorded costs.

use serde::{Deserialize, Serialize};

use crate::solver::{LinearProgram, LpSolution, Sense, Sos2Set};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    Validation(String),
    #[error("scenario array length mismatch: expected {expected}, got {got} ({what})")]
    ScenarioMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("peak {0} kW outside future-cost curve range [{1}, {2}]")]
    EfccRange(f64, f64, f64),
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),
}

fn ensure(cond: bool, msg: &str) -> Result<(), ModelError> {
    if cond {
        Ok(())
    } else {
        Err(ModelError::Validation(msg.to_string()))
    }
}

/// Electric vehicle: uni-directional battery with an availability pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvParams {
    pub capacity_kwh: f64,
    /// SoC floor/ceiling as fractions of capacity.
    pub min_soc_frac: f64,
    pub max_soc_frac: f64,
    /// SoC floor at the hour of departure.
    pub departure_soc_frac: f64,
    pub charger_kw: f64,
    pub charge_efficiency: f64,
    /// Driving drain while away, kWh per hour.
    pub drain_kwh_per_h: f64,
    pub initial_soc_kwh: f64,
    /// Initial SoC used when the EV charges passively.
    pub passive_initial_soc_kwh: f64,
}

impl Default for EvParams {
    fn default() -> Self {
        Self {
            capacity_kwh: 24.0,
            min_soc_frac: 0.20,
            max_soc_frac: 0.90,
            departure_soc_frac: 0.60,
            charger_kw: 3.7,
            charge_efficiency: 0.95,
            drain_kwh_per_h: 1.02,
            initial_soc_kwh: 14.4,
            passive_initial_soc_kwh: 22.6,
        }
    }
}

impl EvParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        ensure(
            0.0 <= self.min_soc_frac
                && self.min_soc_frac <= self.departure_soc_frac
                && self.departure_soc_frac <= self.max_soc_frac
                && self.max_soc_frac <= 1.0,
            "ev: need 0 <= min <= departure <= max <= 1 SoC fractions",
        )?;
        ensure(
            self.charge_efficiency > 0.0 && self.charge_efficiency <= 1.0,
            "ev: charge efficiency must be in (0, 1]",
        )?;
        ensure(
            self.capacity_kwh > 0.0 && self.charger_kw > 0.0 && self.drain_kwh_per_h > 0.0,
            "ev: capacity, charger and drain must be positive",
        )
    }
}

/// Stationary battery with symmetric power caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryParams {
    pub capacity_kwh: f64,
    pub min_soc_frac: f64,
    pub max_soc_frac: f64,
    pub charge_kw: f64,
    pub discharge_kw: f64,
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
    pub initial_soc_kwh: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        // Round-trip 85% split evenly between the two directions.
        let eta = 0.85f64.sqrt();
        Self {
            capacity_kwh: 5.0,
            min_soc_frac: 0.10,
            max_soc_frac: 1.00,
            charge_kw: 2.5,
            discharge_kw: 2.5,
            charge_efficiency: eta,
            discharge_efficiency: eta,
            initial_soc_kwh: 2.5,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        ensure(
            0.0 <= self.min_soc_frac && self.min_soc_frac <= self.max_soc_frac
                && self.max_soc_frac <= 1.0,
            "battery: need 0 <= min <= max <= 1 SoC fractions",
        )?;
        ensure(
            self.charge_efficiency > 0.0
                && self.charge_efficiency <= 1.0
                && self.discharge_efficiency > 0.0
                && self.discharge_efficiency <= 1.0,
            "battery: efficiencies must be in (0, 1]",
        )?;
        ensure(
            self.charge_kw > 0.0 && self.discharge_kw > 0.0 && self.capacity_kwh > 0.0,
            "battery: power caps and capacity must be positive",
        )?;
        let lo = self.min_soc_frac * self.capacity_kwh;
        let hi = self.max_soc_frac * self.capacity_kwh;
        ensure(
            self.initial_soc_kwh >= lo && self.initial_soc_kwh <= hi,
            "battery: initial SoC outside [min, max] range",
        )
    }
}

/// 2R2C grey-box thermal network plus an electric radiator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalParams {
    pub heater_kw: f64,
    pub t_in_min: f64,
    pub t_in_max: f64,
    /// Interior-envelope and envelope-outdoor resistances, degC per kWh.
    pub r_ie: f64,
    pub r_eo: f64,
    /// Interior and envelope heat capacities, kWh per degC.
    pub c_i: f64,
    pub c_e: f64,
    pub initial_t_in: f64,
    pub initial_t_e: f64,
    /// End-condition penalty, EUR per degC of deviation.
    pub penalty_eur_per_deg: f64,
    /// Use the envelope capacitance in the outdoor coupling term instead
    /// of the interior one.
    pub envelope_capacitance_fix: bool,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self {
            heater_kw: 3.0,
            t_in_min: 20.0,
            t_in_max: 24.0,
            // Synthetic hour-scale dynamics; not identified from any
            // particular building. Sized so a 3 kW radiator can hold the
            // comfort band in sub-zero weather (steady demand about
            // ΔT/12 kW) while the interior still responds within hours.
            r_ie: 2.0,
            r_eo: 20.0,
            c_i: 1.0,
            c_e: 2.0,
            initial_t_in: 22.0,
            initial_t_e: 20.0,
            penalty_eur_per_deg: 1000.0,
            envelope_capacitance_fix: false,
        }
    }
}

impl ThermalParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        ensure(
            self.r_ie > 0.0 && self.r_eo > 0.0 && self.c_i > 0.0 && self.c_e > 0.0,
            "thermal: resistances and capacities must be positive",
        )?;
        ensure(self.heater_kw > 0.0, "thermal: heater capacity must be positive")?;
        ensure(
            self.t_in_min <= self.initial_t_in && self.initial_t_in <= self.t_in_max,
            "thermal: initial interior temperature outside comfort band",
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvParams {
    pub rated_kw: f64,
    pub system_efficiency: f64,
}

impl Default for PvParams {
    fn default() -> Self {
        Self {
            rated_kw: 4.65,
            system_efficiency: 0.95,
        }
    }
}

impl PvParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        ensure(self.rated_kw >= 0.0, "pv: rated capacity must be nonnegative")?;
        ensure(
            self.system_efficiency > 0.0 && self.system_efficiency <= 1.0,
            "pv: system efficiency must be in (0, 1]",
        )
    }

    /// Available production given a normalized irradiance factor.
    pub fn available_kw(&self, irradiance: f64) -> f64 {
        self.rated_kw * self.system_efficiency * irradiance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TariffKind {
    /// Energy-based: purely volumetric.
    Ebgt,
    /// Measured-peak: volumetric plus a monthly charge on the highest
    /// single-hour import.
    Mpgt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TariffScheme {
    pub kind: TariffKind,
    /// Volumetric grid rate, EUR/kWh.
    pub grid_eur_per_kwh: f64,
    /// Peak rate, EUR per kW of monthly peak import.
    pub peak_eur_per_kw: f64,
    /// Multiplier on the spot purchase term.
    pub vat: f64,
    /// Hard import cap, kW.
    pub import_cap_kw: f64,
}

impl TariffScheme {
    pub fn mpgt() -> Self {
        Self {
            kind: TariffKind::Mpgt,
            grid_eur_per_kwh: 0.024 + 0.00625,
            peak_eur_per_kw: 7.2075,
            vat: 1.0,
            import_cap_kw: 10.0,
        }
    }

    pub fn ebgt() -> Self {
        Self {
            kind: TariffKind::Ebgt,
            grid_eur_per_kwh: 0.024 + 0.02425,
            peak_eur_per_kw: 0.0,
            vat: 1.0,
            import_cap_kw: 10.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        ensure(
            self.grid_eur_per_kwh >= 0.0 && self.peak_eur_per_kw >= 0.0,
            "tariff: rates must be nonnegative",
        )?;
        ensure(
            self.kind != TariffKind::Ebgt || self.peak_eur_per_kw == 0.0,
            "tariff: energy-based scheme must have zero peak rate",
        )?;
        ensure(self.import_cap_kw > 0.0, "tariff: import cap must be positive")?;
        ensure(self.vat > 0.0, "tariff: vat multiplier must be positive")
    }
}

impl Default for TariffScheme {
    fn default() -> Self {
        Self::mpgt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetMode {
    Flexible,
    Passive,
}

impl AssetMode {
    pub fn is_flexible(self) -> bool {
        self == AssetMode::Flexible
    }
}

/// Which of the three assets the controller may schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlexibilityMask {
    pub battery: AssetMode,
    pub ev: AssetMode,
    pub heating: AssetMode,
}

impl Default for FlexibilityMask {
    fn default() -> Self {
        Self {
            battery: AssetMode::Passive,
            ev: AssetMode::Passive,
            heating: AssetMode::Passive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HouseholdConfig {
    pub ev: EvParams,
    pub battery: BatteryParams,
    pub thermal: ThermalParams,
    pub pv: PvParams,
    pub tariff: TariffScheme,
    pub mask: FlexibilityMask,
    pub hours_per_stage: usize,
}

impl Default for HouseholdConfig {
    fn default() -> Self {
        Self {
            ev: EvParams::default(),
            battery: BatteryParams::default(),
            thermal: ThermalParams::default(),
            pv: PvParams::default(),
            tariff: TariffScheme::default(),
            mask: FlexibilityMask::default(),
            hours_per_stage: 24,
        }
    }
}

impl HouseholdConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.ev.validate()?;
        self.battery.validate()?;
        self.thermal.validate()?;
        self.pv.validate()?;
        self.tariff.validate()?;
        ensure(self.hours_per_stage >= 1, "hours per stage must be >= 1")
    }
}

/// Realized stochastic inputs for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRealization {
    /// Spot price, EUR/kWh.
    pub spot: Vec<f64>,
    /// Inelastic load, kWh/h.
    pub load: Vec<f64>,
    /// EV connected to the building.
    pub ev_connected: Vec<bool>,
    /// Normalized production factor in [0, 1].
    pub irradiance: Vec<f64>,
    /// Outdoor temperature, degC.
    pub t_out: Vec<f64>,
}

impl ScenarioRealization {
    pub fn validate(&self, hours: usize) -> Result<(), ModelError> {
        let check = |what: &'static str, len: usize| {
            if len == hours {
                Ok(())
            } else {
                Err(ModelError::ScenarioMismatch {
                    what,
                    expected: hours,
                    got: len,
                })
            }
        };
        check("spot", self.spot.len())?;
        check("load", self.load.len())?;
        check("ev_connected", self.ev_connected.len())?;
        check("irradiance", self.irradiance.len())?;
        check("t_out", self.t_out.len())?;
        ensure(
            self.load.iter().all(|&v| v >= 0.0),
            "scenario: load must be nonnegative",
        )?;
        ensure(
            self.irradiance.iter().all(|&v| v >= 0.0),
            "scenario: irradiance must be nonnegative",
        )
    }
}

/// Piecewise-linear expected-future-cost curve over peak-import levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Efcc {
    /// (peak kW, cost EUR) breakpoints, strictly increasing in the peak.
    pub points: Vec<(f64, f64)>,
}

impl Efcc {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        ensure(points.len() >= 2, "future-cost curve needs >= 2 breakpoints")?;
        for w in points.windows(2) {
            ensure(
                w[1].0 > w[0].0,
                "future-cost curve breakpoints must be strictly increasing",
            )?;
        }
        Ok(Self { points })
    }

    pub fn min_peak(&self) -> f64 {
        self.points[0].0
    }

    pub fn max_peak(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    /// Linear interpolation between the bracketing breakpoints.
    pub fn interpolate(&self, p: f64) -> Result<f64, ModelError> {
        let eps = 1e-9;
        if p < self.min_peak() - eps || p > self.max_peak() + eps {
            return Err(ModelError::EfccRange(p, self.min_peak(), self.max_peak()));
        }
        let p = p.clamp(self.min_peak(), self.max_peak());
        let k = self
            .points
            .windows(2)
            .position(|w| p <= w[1].0)
            .unwrap_or(self.points.len() - 2);
        let (p0, c0) = self.points[k];
        let (p1, c1) = self.points[k + 1];
        Ok(c0 + (c1 - c0) * (p - p0) / (p1 - p0))
    }
}

/// Drops interior breakpoints that lie on the line through their kept
/// neighbors (within `tol` EUR), leaving an interpolation-identical but
/// smaller curve. Endpoints always survive.
pub fn prune_collinear(efcc: &Efcc, tol: f64) -> Efcc {
    let pts = &efcc.points;
    if pts.len() <= 2 {
        return efcc.clone();
    }
    let mut kept = vec![pts[0]];
    for i in 1..pts.len() - 1 {
        let (pa, ca) = *kept.last().unwrap();
        let (pb, cb) = pts[i + 1];
        let (p, c) = pts[i];
        let on_line = ca + (cb - ca) * (p - pa) / (pb - pa);
        if (c - on_line).abs() > tol {
            kept.push(pts[i]);
        }
    }
    kept.push(pts[pts.len() - 1]);
    Efcc { points: kept }
}

/// Terminal curve: the end-of-horizon settlement cost per peak level.
pub fn terminal_efcc(tariff: &TariffScheme, grid: &crate::sdp::PeakGrid) -> Efcc {
    let points = grid
        .points
        .iter()
        .map(|&p| (p, tariff.peak_eur_per_kw * p))
        .collect();
    Efcc { points }
}

/// One explicit hour of the 2R2C update, exactly as modeled in the LP.
pub fn thermal_step(
    t_in: f64,
    t_e: f64,
    t_out: f64,
    q_kw: f64,
    params: &ThermalParams,
) -> (f64, f64) {
    let a = 1.0 / (params.r_ie * params.c_i);
    let b = 1.0 / (params.r_ie * params.c_e);
    let c_out = if params.envelope_capacitance_fix {
        params.c_e
    } else {
        params.c_i
    };
    let c = 1.0 / (params.r_eo * c_out);
    let t_in_next = t_in + a * (t_e - t_in) + q_kw / params.c_i;
    let t_e_next = t_e + b * (t_in - t_e) + c * (t_out - t_e);
    (t_in_next, t_e_next)
}

/// Rule-based EV charging: charge at full rate toward the 90% target
/// whenever connected, drain while away.
pub fn passive_ev_profile(
    scen: &ScenarioRealization,
    params: &EvParams,
) -> Result<Vec<f64>, ModelError> {
    let target = params.max_soc_frac * params.capacity_kwh;
    let floor = params.min_soc_frac * params.capacity_kwh;
    let mut soc = params.passive_initial_soc_kwh;
    let mut charges = Vec::with_capacity(scen.ev_connected.len());
    for (t, &connected) in scen.ev_connected.iter().enumerate() {
        if connected {
            let headroom = (target - soc).max(0.0);
            let charge = params
                .charger_kw
                .min(headroom / params.charge_efficiency);
            soc += charge * params.charge_efficiency;
            charges.push(charge);
        } else {
            soc -= params.drain_kwh_per_h;
            charges.push(0.0);
            if soc < floor - 1e-9 {
                return Err(ModelError::InfeasibleScenario(format!(
                    "passive EV SoC {soc:.3} kWh below floor {floor:.3} at hour {t}"
                )));
            }
        }
    }
    Ok(charges)
}

/// Rule-based space heating holding a 22 degC interior, clamped to the
/// heater capacity; clamping deviations carry forward.
#[derive(Debug, Clone)]
pub struct PassiveShProfile {
    pub q: Vec<f64>,
    pub t_in: Vec<f64>,
    pub t_e: Vec<f64>,
    pub clamped: Vec<bool>,
}

pub const PASSIVE_HOLD_TEMP: f64 = 22.0;

pub fn passive_sh_profile(scen: &ScenarioRealization, params: &ThermalParams) -> PassiveShProfile {
    let hours = scen.t_out.len();
    let mut q = Vec::with_capacity(hours);
    let mut t_in_out = Vec::with_capacity(hours);
    let mut t_e_out = Vec::with_capacity(hours);
    let mut clamped = Vec::with_capacity(hours);
    let mut t_in = params.initial_t_in;
    let mut t_e = params.initial_t_e;
    for t in 0..hours {
        // Heat needed for the interior to land exactly on the hold
        // temperature at the end of the hour.
        let a = 1.0 / (params.r_ie * params.c_i);
        let need = params.c_i * (PASSIVE_HOLD_TEMP - t_in - a * (t_e - t_in));
        let qt = need.clamp(0.0, params.heater_kw);
        clamped.push((qt - need).abs() > 1e-12);
        let (tin_next, te_next) = thermal_step(t_in, t_e, scen.t_out[t], qt, params);
        t_in = tin_next;
        t_e = te_next;
        q.push(qt);
        t_in_out.push(t_in);
        t_e_out.push(t_e);
    }
    PassiveShProfile {
        q,
        t_in: t_in_out,
        t_e: t_e_out,
        clamped,
    }
}

/// Index map of the daily LP, used to pull schedules back out.
#[derive(Debug, Clone)]
pub struct DailyProblem {
    pub lp: LinearProgram,
    pub sos2: Vec<Sos2Set>,
    pub hours: usize,
    pub imp: Vec<usize>,
    pub exp: Vec<usize>,
    pub pv: Vec<usize>,
    pub bat_ch: Vec<usize>,
    pub bat_dch: Vec<usize>,
    pub bat_soc: Vec<usize>,
    pub ev_ch: Vec<usize>,
    pub ev_soc: Vec<usize>,
    pub heat: Vec<usize>,
    pub t_in: Vec<usize>,
    pub t_e: Vec<usize>,
    pub peak: usize,
    pub gamma: Vec<usize>,
    /// End-temperature deviation slacks (plus/minus per temperature);
    /// empty when heating is passive.
    pub slacks: Vec<usize>,
    spot: Vec<f64>,
    vat: f64,
    grid_rate: f64,
    penalty_rate: f64,
}

/// Hourly schedules and cost split of one solved stage.
#[derive(Debug, Clone)]
pub struct DailySolution {
    /// Full LP objective: operating cost + future term + penalties.
    pub objective: f64,
    /// Spot purchase/sale plus volumetric grid cost for the stage.
    pub operating_cost: f64,
    /// Interpolated future cost of the realized peak.
    pub future_cost: f64,
    /// End-condition penalty, excluded from recorded curve costs.
    pub penalty: f64,
    pub peak_kw: f64,
    pub import: Vec<f64>,
    pub export: Vec<f64>,
    pub pv: Vec<f64>,
    pub bat_ch: Vec<f64>,
    pub bat_dch: Vec<f64>,
    pub bat_soc: Vec<f64>,
    pub ev_ch: Vec<f64>,
    pub ev_soc: Vec<f64>,
    pub heat: Vec<f64>,
    pub t_in: Vec<f64>,
    pub t_e: Vec<f64>,
    pub end_slack: Vec<f64>,
}

impl DailySolution {
    /// Stage cost recorded during curve generation: objective with the
    /// end-condition penalty stripped.
    pub fn recorded_cost(&self) -> f64 {
        self.objective - self.penalty
    }
}

const TEMP_LO: f64 = -100.0;
const TEMP_HI: f64 = 200.0;

/// Builds the decomposed daily decision problem for one (scenario,
/// initial-peak) pair against the next stage's future-cost curve.
pub fn build_daily_problem(
    cfg: &HouseholdConfig,
    scen: &ScenarioRealization,
    p0: f64,
    efcc_next: &Efcc,
) -> Result<DailyProblem, ModelError> {
    cfg.validate()?;
    let hours = cfg.hours_per_stage;
    scen.validate(hours)?;
    let pmax = cfg.tariff.import_cap_kw;
    ensure(
        (0.0..=pmax + 1e-9).contains(&p0),
        "initial peak outside [0, import cap]",
    )?;
    if efcc_next.min_peak() > 1e-9 || efcc_next.max_peak() < pmax - 1e-9 {
        return Err(ModelError::EfccRange(
            pmax,
            efcc_next.min_peak(),
            efcc_next.max_peak(),
        ));
    }

    let ev_flex = cfg.mask.ev.is_flexible();
    let bat_flex = cfg.mask.battery.is_flexible();
    let sh_flex = cfg.mask.heating.is_flexible();

    let ev_profile = if ev_flex {
        None
    } else {
        Some(passive_ev_profile(scen, &cfg.ev)?)
    };
    // The hold profile is computed even when heating is flexible: its end
    // state supplies the soft end-of-day temperature targets, so the
    // passive trajectory is always feasible (at zero penalty) inside the
    // flexible problem and flexibility can only reallocate heating within
    // the day, never pay extra at the boundary.
    let hold_profile = passive_sh_profile(scen, &cfg.thermal);
    let sh_profile = if sh_flex { None } else { Some(&hold_profile) };

    let mut lp = LinearProgram::new();
    let th = &cfg.thermal;
    let ev = &cfg.ev;
    let bat = &cfg.battery;
    let vat = cfg.tariff.vat;
    let grid_rate = cfg.tariff.grid_eur_per_kwh;

    // Departure hours carry the higher SoC floor: connected now, away next.
    let departing: Vec<bool> = (0..hours)
        .map(|t| {
            scen.ev_connected[t] && t + 1 < hours && !scen.ev_connected[t + 1]
        })
        .collect();

    let imp: Vec<usize> = (0..hours)
        .map(|t| lp.add_var(0.0, pmax, vat * scen.spot[t] + grid_rate))
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
            let (lo, hi) = if !bat_flex || t == hours - 1 {
                // Passive battery idles at its initial level; a flexible
                // one must return to it so stages chain.
                (bat.initial_soc_kwh, bat.initial_soc_kwh)
            } else {
                (
                    bat.min_soc_frac * bat.capacity_kwh,
                    bat.max_soc_frac * bat.capacity_kwh,
                )
            };
            lp.add_var(lo, hi, 0.0)
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
            if ev_flex {
                if t == hours - 1 {
                    (ev.initial_soc_kwh, ev.initial_soc_kwh)
                } else {
                    let lo = if departing[t] {
                        ev.departure_soc_frac
                    } else {
                        ev.min_soc_frac
                    } * ev.capacity_kwh;
                    (lo, ev.max_soc_frac * ev.capacity_kwh)
                }
            } else {
                (0.0, ev.capacity_kwh)
            }
        })
        .map(|(lo, hi)| lp.add_var(lo, hi, 0.0))
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
                lp.add_var(TEMP_LO, TEMP_HI, 0.0)
            }
        })
        .collect();
    let t_e: Vec<usize> = (0..hours).map(|_| lp.add_var(TEMP_LO, TEMP_HI, 0.0)).collect();
    let peak = lp.add_labeled_var(p0, pmax, 0.0, "peak");
    let gamma: Vec<usize> = efcc_next
        .points
        .iter()
        .map(|&(_, c)| lp.add_var(0.0, f64::INFINITY, c))
        .collect();
    let penalty_rate = th.penalty_eur_per_deg;
    let slacks: Vec<usize> = if sh_flex {
        (0..4)
            .map(|_| lp.add_var(0.0, f64::INFINITY, penalty_rate))
            .collect()
    } else {
        Vec::new()
    };

    // Hourly energy balance.
    for t in 0..hours {
        lp.add_labeled_row(
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
            &format!("balance[{t}]"),
        );
    }
    // EV storage dynamics with driving drain while away.
    let ev_init = if ev_flex {
        ev.initial_soc_kwh
    } else {
        ev.passive_initial_soc_kwh
    };
    for t in 0..hours {
        let delta = if scen.ev_connected[t] { 1.0 } else { 0.0 };
        let drain = ev.drain_kwh_per_h * (1.0 - delta);
        let mut terms = vec![(ev_soc[t], 1.0), (ev_ch[t], -ev.charge_efficiency * delta)];
        let mut rhs = -drain;
        if t == 0 {
            rhs += ev_init;
        } else {
            terms.push((ev_soc[t - 1], -1.0));
        }
        lp.add_labeled_row(terms, Sense::Eq, rhs, &format!("ev_soc[{t}]"));
    }
    // Battery storage dynamics.
    for t in 0..hours {
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
        lp.add_labeled_row(terms, Sense::Eq, rhs, &format!("bat_soc[{t}]"));
    }
    // Thermal network dynamics, matching thermal_step.
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
        lp.add_labeled_row(terms, Sense::Eq, rhs, &format!("t_in[{t}]"));

        let mut terms = vec![(t_e[t], 1.0)];
        let mut rhs = c * scen.t_out[t];
        if t == 0 {
            rhs += (1.0 - b - c) * th.initial_t_e + b * th.initial_t_in;
        } else {
            terms.push((t_e[t - 1], -(1.0 - b - c)));
            terms.push((t_in[t - 1], -b));
        }
        lp.add_labeled_row(terms, Sense::Eq, rhs, &format!("t_e[{t}]"));
    }
    // Peak dominates every hourly import; the initial level enters as the
    // peak variable's lower bound.
    for t in 0..hours {
        lp.add_labeled_row(
            vec![(peak, 1.0), (imp[t], -1.0)],
            Sense::Ge,
            0.0,
            &format!("peak_ge_imp[{t}]"),
        );
    }
    // Future-cost interpolation block.
    lp.add_labeled_row(
        gamma.iter().map(|&j| (j, 1.0)).collect(),
        Sense::Eq,
        1.0,
        "gamma_sum",
    );
    let mut link: Vec<(usize, f64)> = gamma
        .iter()
        .zip(&efcc_next.points)
        .map(|(&j, &(p, _))| (j, p))
        .collect();
    link.push((peak, -1.0));
    lp.add_labeled_row(link, Sense::Eq, 0.0, "gamma_peak");
    // Soft end conditions on the temperatures.
    if sh_flex {
        lp.add_labeled_row(
            vec![(t_in[hours - 1], 1.0), (slacks[0], -1.0), (slacks[1], 1.0)],
            Sense::Eq,
            *hold_profile.t_in.last().unwrap(),
            "t_in_end",
        );
        lp.add_labeled_row(
            vec![(t_e[hours - 1], 1.0), (slacks[2], -1.0), (slacks[3], 1.0)],
            Sense::Eq,
            *hold_profile.t_e.last().unwrap(),
            "t_e_end",
        );
    }

    let breakpoints: Vec<f64> = efcc_next.points.iter().map(|&(p, _)| p).collect();
    let sos2 = vec![Sos2Set::new(gamma.clone(), breakpoints).map_err(|e| {
        ModelError::Validation(format!("future-cost curve: {e}"))
    })?];

    Ok(DailyProblem {
        lp,
        sos2,
        hours,
        imp,
        exp,
        pv,
        bat_ch,
        bat_dch,
        bat_soc,
        ev_ch,
        ev_soc,
        heat,
        t_in,
        t_e,
        peak,
        gamma,
        slacks,
        spot: scen.spot.clone(),
        vat,
        grid_rate,
        penalty_rate,
    })
}

impl DailyProblem {
    pub fn extract(&self, sol: &LpSolution) -> DailySolution {
        let pick = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&j| sol.values[j]).collect() };
        let import = pick(&self.imp);
        let export = pick(&self.exp);
        let operating_cost: f64 = (0..self.hours)
            .map(|t| {
                self.vat * self.spot[t] * import[t] - self.spot[t] * export[t]
                    + self.grid_rate * import[t]
            })
            .sum();
        let end_slack = pick(&self.slacks);
        let penalty: f64 = end_slack.iter().sum::<f64>() * self.penalty_rate;
        DailySolution {
            objective: sol.objective,
            operating_cost,
            future_cost: sol.objective - operating_cost - penalty,
            penalty,
            peak_kw: sol.values[self.peak],
            import,
            export,
            pv: pick(&self.pv),
            bat_ch: pick(&self.bat_ch),
            bat_dch: pick(&self.bat_dch),
            bat_soc: pick(&self.bat_soc),
            ev_ch: pick(&self.ev_ch),
            ev_soc: pick(&self.ev_soc),
            heat: pick(&self.heat),
            t_in: pick(&self.t_in),
            t_e: pick(&self.t_e),
            end_slack,
        }
    }
}

/// Builds and solves one stage problem.
pub fn solve_daily(
    cfg: &HouseholdConfig,
    scen: &ScenarioRealization,
    p0: f64,
    efcc_next: &Efcc,
) -> Result<DailySolution, ModelError> {
    let prob = build_daily_problem(cfg, scen, p0, efcc_next)?;
    let sol = crate::solver::solve_sos2(&prob.lp, &prob.sos2)
        .map_err(|e| ModelError::Validation(format!("solver: {e}")))?;
    match sol.status {
        crate::solver::Status::Optimal => Ok(prob.extract(&sol)),
        other => Err(ModelError::InfeasibleScenario(format!(
            "daily problem ended {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::PeakGrid;

    fn flat_scenario(hours: usize, load: f64, t_out: f64) -> ScenarioRealization {
        ScenarioRealization {
            spot: vec![0.0; hours],
            load: vec![load; hours],
            ev_connected: vec![true; hours],
            irradiance: vec![0.0; hours],
            t_out: vec![t_out; hours],
        }
    }

    #[test]
    fn thermal_step_examples() {
        let mut p = ThermalParams::default();
        // Equilibrium: uniform temperatures, no heat.
        let (tin, te) = thermal_step(21.0, 21.0, 21.0, 0.0, &p);
        assert!((tin - 21.0).abs() < 1e-12 && (te - 21.0).abs() < 1e-12);

        // Pure heat injection: one degree per kWh at C_i = 1.
        p.r_ie = 1.0;
        p.c_i = 1.0;
        let (tin, _) = thermal_step(20.0, 20.0, 20.0, 1.0, &p);
        assert!((tin - 21.0).abs() < 1e-12);

        // Envelope update with the interior capacitance in the outdoor
        // term: 18 + (22-18)/8 + (0-18)/5 = 14.9.
        let printed = ThermalParams {
            r_ie: 2.0,
            c_e: 4.0,
            r_eo: 5.0,
            c_i: 1.0,
            envelope_capacitance_fix: false,
            ..ThermalParams::default()
        };
        let (_, te) = thermal_step(22.0, 18.0, 0.0, 0.0, &printed);
        assert!((te - 14.9).abs() < 1e-12, "got {te}");
        // With the fix the outdoor term uses C_e: 18 + 0.5 + (0-18)/20.
        let fixed = ThermalParams {
            envelope_capacitance_fix: true,
            ..printed
        };
        let (_, te) = thermal_step(22.0, 18.0, 0.0, 0.0, &fixed);
        assert!((te - 17.6).abs() < 1e-12, "got {te}");
    }

    #[test]
    fn passive_ev_examples() {
        let mut ev = EvParams::default();
        // Already at the 90% target: never charges.
        ev.passive_initial_soc_kwh = 0.9 * ev.capacity_kwh;
        let scen = flat_scenario(5, 0.0, 20.0);
        let charges = passive_ev_profile(&scen, &ev).unwrap();
        assert!(charges.iter().all(|&c| c == 0.0));

        // Greedy fill from 14.4 kWh with a lossless charger: full rate,
        // then the remaining 3.5 kWh of headroom, then idle.
        ev.passive_initial_soc_kwh = 14.4;
        ev.charge_efficiency = 1.0;
        let charges = passive_ev_profile(&scen, &ev).unwrap();
        assert!((charges[0] - 3.7).abs() < 1e-12);
        assert!((charges[1] - 3.5).abs() < 1e-12);
        assert!(charges[2..].iter().all(|&c| c == 0.0));

        // Nine away hours drain 9.18 kWh.
        let ev = EvParams::default();
        let mut scen = flat_scenario(24, 0.0, 20.0);
        for h in 8..17 {
            scen.ev_connected[h] = false;
        }
        passive_ev_profile(&scen, &ev).unwrap();
        let mut soc = ev.passive_initial_soc_kwh;
        for h in 0..8 {
            assert!(scen.ev_connected[h]);
        }
        soc -= 9.0 * ev.drain_kwh_per_h;
        assert!((ev.passive_initial_soc_kwh - soc - 9.18).abs() < 1e-12);

        // Dropping below the floor while away is an error.
        let mut scen = flat_scenario(24, 0.0, 20.0);
        for h in 1..24 {
            scen.ev_connected[h] = false;
        }
        assert!(matches!(
            passive_ev_profile(&scen, &ev),
            Err(ModelError::InfeasibleScenario(_))
        ));
    }

    #[test]
    fn passive_sh_examples() {
        // Envelope already at the hold temperature: no heating.
        let p = ThermalParams {
            r_ie: 1.0,
            c_i: 1.0,
            initial_t_in: 22.0,
            initial_t_e: 22.0,
            ..ThermalParams::default()
        };
        let scen = flat_scenario(3, 0.0, 22.0);
        let prof = passive_sh_profile(&scen, &p);
        assert!((prof.q[0]).abs() < 1e-12);

        // Two degrees of gradient across R_ie = 1 take 2 kW to hold.
        let p = ThermalParams {
            r_ie: 1.0,
            c_i: 1.0,
            initial_t_e: 20.0,
            ..p
        };
        let prof = passive_sh_profile(&scen, &p);
        assert!((prof.q[0] - 2.0).abs() < 1e-12);
        assert!((prof.t_in[0] - 22.0).abs() < 1e-12);
        assert!(!prof.clamped[0]);

        // A 3.5 kW requirement clamps to the 3 kW heater and the interior
        // gives up half a degree that hour.
        let p = ThermalParams {
            initial_t_e: 18.5,
            ..p
        };
        let prof = passive_sh_profile(&scen, &p);
        assert!((prof.q[0] - 3.0).abs() < 1e-12);
        assert!(prof.clamped[0]);
        assert!((prof.t_in[0] - 21.5).abs() < 1e-12);
    }

    #[test]
    fn efcc_interpolation() {
        let curve = Efcc::new(vec![(0.0, 0.0), (5.0, 10.0), (10.0, 30.0)]).unwrap();
        assert!((curve.interpolate(7.5).unwrap() - 20.0).abs() < 1e-12);
        assert!((curve.interpolate(5.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((curve.interpolate(0.0).unwrap()).abs() < 1e-12);
        assert!(matches!(
            curve.interpolate(10.5),
            Err(ModelError::EfccRange(..))
        ));
        assert!(Efcc::new(vec![(0.0, 0.0)]).is_err());
        assert!(Efcc::new(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());

        let grid = PeakGrid::default();
        let terminal = terminal_efcc(&TariffScheme::mpgt(), &grid);
        let v = terminal.interpolate(3.52).unwrap();
        assert!((v - 3.52 * 7.2075).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn terminal_curves() {
        let grid = PeakGrid::default();
        let mpgt = terminal_efcc(&TariffScheme::mpgt(), &grid);
        for (i, &(p, c)) in mpgt.points.iter().enumerate() {
            assert_eq!(p, grid.points[i]);
            assert!((c - 7.2075 * p).abs() < 1e-9);
        }
        assert_eq!(mpgt.points[0].1, 0.0);
        let ebgt = terminal_efcc(&TariffScheme::ebgt(), &grid);
        assert!(ebgt.points.iter().all(|&(_, c)| c == 0.0));
    }

    #[test]
    fn builder_variable_count() {
        let cfg = HouseholdConfig::default();
        let grid = PeakGrid::default();
        let efcc = terminal_efcc(&cfg.tariff, &grid);
        let scen = flat_scenario(24, 1.0, 22.0);
        let prob = build_daily_problem(&cfg, &scen, 0.0, &efcc).unwrap();
        // 11 hourly families, the peak, and one weight per grid point.
        assert_eq!(prob.lp.num_vars, 11 * 24 + 1 + 100);
        assert_eq!(prob.gamma.len(), 100);
        assert!(prob.slacks.is_empty());
    }

    #[test]
    fn nothing_to_pay_for() {
        let mut cfg = HouseholdConfig::default();
        cfg.tariff.grid_eur_per_kwh = 0.0;
        cfg.thermal.initial_t_e = 22.0;
        let efcc = Efcc::new(vec![(0.0, 0.0), (10.0, 0.0)]).unwrap();
        let scen = flat_scenario(24, 0.0, 22.0);
        let sol = solve_daily(&cfg, &scen, 0.0, &efcc).unwrap();
        assert!(sol.objective.abs() < 1e-9, "objective {}", sol.objective);
        assert!(sol.import.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn forced_load_prices_the_peak() {
        let mut cfg = HouseholdConfig::default();
        cfg.hours_per_stage = 1;
        cfg.thermal.initial_t_e = 22.0;
        let grid = PeakGrid::default();
        let efcc = terminal_efcc(&cfg.tariff, &grid);
        let scen = flat_scenario(1, 4.0, 22.0);
        let sol = solve_daily(&cfg, &scen, 0.0, &efcc).unwrap();
        assert!((sol.peak_kw - 4.0).abs() < 1e-6, "peak {}", sol.peak_kw);
        assert!(
            (sol.future_cost - 28.83).abs() < 1e-6,
            "future term {}",
            sol.future_cost
        );
    }

    #[test]
    fn config_validation_rejects_bad_params() {
        let mut cfg = HouseholdConfig::default();
        cfg.ev.min_soc_frac = 0.95;
        assert!(cfg.validate().is_err());
        let mut cfg = HouseholdConfig::default();
        cfg.battery.charge_efficiency = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = HouseholdConfig::default();
        cfg.tariff.kind = TariffKind::Ebgt;
        assert!(cfg.validate().is_err(), "EBGT with nonzero peak rate");
        let mut cfg = HouseholdConfig::default();
        cfg.thermal.initial_t_in = 30.0;
        assert!(cfg.validate().is_err());
        assert!(HouseholdConfig::default().validate().is_ok());
    }

    #[test]
    fn scenario_length_mismatch_detected() {
        let cfg = HouseholdConfig::default();
        let grid = PeakGrid::default();
        let efcc = terminal_efcc(&cfg.tariff, &grid);
        let mut scen = flat_scenario(24, 1.0, 20.0);
        scen.spot.pop();
        assert!(matches!(
            build_daily_problem(&cfg, &scen, 0.0, &efcc),
            Err(ModelError::ScenarioMismatch { .. })
        ));
        let scen = flat_scenario(24, 1.0, 20.0);
        let short = Efcc::new(vec![(0.0, 0.0), (5.0, 1.0)]).unwrap();
        assert!(matches!(
            build_daily_problem(&cfg, &scen, 0.0, &short),
            Err(ModelError::EfccRange(..))
        ));
    }
}
