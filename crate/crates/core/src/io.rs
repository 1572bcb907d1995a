//! Configuration, data ingestion, result serialization, and the
//! command-line surface.
//!
//! Run configuration is a TOML file with strict unknown-key rejection.
//! Hourly series come in as CSV (`hour,value` for deterministic series,
//! `hour,mu,sigma` for distribution tables, hours 0..23 complete).
//! Result files are schema-stable CSV/JSON written atomically
//! (write-temp-rename). Exit codes: 0 success, 1 validation,
//! 2 solver/infeasibility, 3 I/O.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::model::{
    AssetMode, HouseholdConfig, ModelError, ScenarioRealization, TariffKind, TariffScheme,
};
use crate::scenario::{
    default_nodes, default_transition, synthetic_series, MarkovModel, ProfileKind, StageData,
    StageInputs, WeatherTables,
};
use crate::sdp::{marginal_curve, run_backward_set, EfccTable, PeakGrid, ScenarioSet};
use crate::simulate::{duration_curve, run_replications, SummaryStats};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("configuration invalid:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IoError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            IoError::Config(_) | IoError::Parse { .. } => 1,
            IoError::Model(ModelError::InfeasibleScenario(_)) => 2,
            IoError::Model(_) => 1,
            IoError::Io(_) => 3,
        }
    }
}

/// The seven asset-flexibility cases of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseName {
    /// Everything passive.
    Reference,
    /// Flexible 5 kWh battery.
    Bess5,
    /// Flexible 10 kWh battery.
    Bess10,
    /// Flexible EV charging at 2.3 kW.
    Ev23,
    /// Flexible EV charging at 3.7 kW.
    Ev37,
    /// Flexible space heating, 20-24 degC comfort band.
    Sh2024,
    /// Flexible space heating, 21-23 degC comfort band.
    Sh2123,
}

impl CaseName {
    pub const ALL: [CaseName; 7] = [
        CaseName::Reference,
        CaseName::Bess5,
        CaseName::Bess10,
        CaseName::Ev23,
        CaseName::Ev37,
        CaseName::Sh2024,
        CaseName::Sh2123,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseName::Reference => "reference",
            CaseName::Bess5 => "bess5",
            CaseName::Bess10 => "bess10",
            CaseName::Ev23 => "ev23",
            CaseName::Ev37 => "ev37",
            CaseName::Sh2024 => "sh2024",
            CaseName::Sh2123 => "sh2123",
        }
    }

    pub fn parse(s: &str) -> Result<Self, IoError> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| IoError::Config(vec![format!("unknown case name '{s}'")]))
    }

    /// Applies the case's flexibility mask and parameter overrides.
    pub fn apply(self, cfg: &mut HouseholdConfig) {
        match self {
            CaseName::Reference => {}
            CaseName::Bess5 => {
                cfg.mask.battery = AssetMode::Flexible;
                cfg.battery.capacity_kwh = 5.0;
            }
            CaseName::Bess10 => {
                cfg.mask.battery = AssetMode::Flexible;
                cfg.battery.capacity_kwh = 10.0;
            }
            CaseName::Ev23 => {
                cfg.mask.ev = AssetMode::Flexible;
                cfg.ev.charger_kw = 2.3;
            }
            CaseName::Ev37 => {
                cfg.mask.ev = AssetMode::Flexible;
                cfg.ev.charger_kw = 3.7;
            }
            CaseName::Sh2024 => {
                cfg.mask.heating = AssetMode::Flexible;
                cfg.thermal.t_in_min = 20.0;
                cfg.thermal.t_in_max = 24.0;
            }
            CaseName::Sh2123 => {
                cfg.mask.heating = AssetMode::Flexible;
                cfg.thermal.t_in_min = 21.0;
                cfg.thermal.t_in_max = 23.0;
            }
        }
    }
}

/// Where the stochastic input series come from: exactly one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioSource {
    /// Bundled seeded generator.
    Synthetic {
        seed: u64,
        #[serde(default = "default_profile")]
        profile: ProfileKind,
    },
    /// Daily profiles from CSV, applied to every stage. Spot and load are
    /// `hour,value`; temperature and irradiance are `hour,mu,sigma`.
    Csv {
        spot: PathBuf,
        load: PathBuf,
        t_out: PathBuf,
        irradiance: PathBuf,
    },
}

fn default_profile() -> ProfileKind {
    ProfileKind::WinterDefault
}

fn default_stages() -> usize {
    31
}
fn default_grid_points() -> usize {
    100
}
fn default_replications() -> usize {
    1000
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Complete description of one run, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseName,
    pub tariff: TariffKind,
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub scenario: ScenarioSource,
    /// Base household parameters; the case and tariff choices are applied
    /// on top of these.
    #[serde(default)]
    pub household: HouseholdConfig,
}

impl RunConfig {
    /// The effective household configuration: base parameters with the
    /// tariff scheme and case overrides applied.
    pub fn household_config(&self) -> Result<HouseholdConfig, IoError> {
        let mut cfg = self.household.clone();
        let rates = match self.tariff {
            TariffKind::Mpgt => TariffScheme::mpgt(),
            TariffKind::Ebgt => TariffScheme::ebgt(),
        };
        cfg.tariff = TariffScheme {
            import_cap_kw: cfg.tariff.import_cap_kw,
            vat: cfg.tariff.vat,
            ..rates
        };
        self.case.apply(&mut cfg);
        cfg.validate().map_err(|e| IoError::Config(vec![e.to_string()]))?;
        Ok(cfg)
    }

    /// Collects every invariant violation instead of stopping at the
    /// first, naming the offending key group.
    pub fn validate_all(&self) -> Result<(), IoError> {
        let mut errors = Vec::new();
        let cfg = match self.household_config() {
            Ok(cfg) => Some(cfg),
            Err(IoError::Config(mut v)) => {
                errors.append(&mut v);
                None
            }
            Err(e) => return Err(e),
        };
        if let Some(cfg) = &cfg {
            for (key, res) in [
                ("household.ev", cfg.ev.validate()),
                ("household.battery", cfg.battery.validate()),
                ("household.thermal", cfg.thermal.validate()),
                ("household.pv", cfg.pv.validate()),
                ("household.tariff", cfg.tariff.validate()),
            ] {
                if let Err(e) = res {
                    errors.push(format!("{key}: {e}"));
                }
            }
        }
        if self.stages == 0 {
            errors.push("stages: must be >= 1".into());
        }
        if self.grid_points < 2 {
            errors.push("grid_points: need >= 2".into());
        }
        if self.replications == 0 {
            errors.push("replications: must be >= 1".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(IoError::Config(errors))
        }
    }

    pub fn peak_grid(&self) -> Result<PeakGrid, IoError> {
        let cfg = self.household_config()?;
        Ok(PeakGrid::uniform(self.grid_points, cfg.tariff.import_cap_kw)?)
    }

    /// Materializes the stage inputs from the configured source.
    pub fn stage_inputs(&self) -> Result<StageInputs, IoError> {
        match &self.scenario {
            ScenarioSource::Synthetic { seed, profile } => {
                Ok(synthetic_series(*seed, *profile, self.stages)?)
            }
            ScenarioSource::Csv {
                spot,
                load,
                t_out,
                irradiance,
            } => {
                let spot = read_value_csv(spot)?;
                let load = read_value_csv(load)?;
                let (t_mu, t_sigma) = read_mu_sigma_csv(t_out)?;
                let (i_mu, i_sigma) = read_mu_sigma_csv(irradiance)?;
                let day = StageData {
                    spot,
                    load,
                    weather: WeatherTables {
                        t_out_mu: t_mu,
                        t_out_sigma: t_sigma,
                        irradiance_mu: i_mu,
                        irradiance_sigma: i_sigma,
                    },
                };
                Ok(StageInputs {
                    stages: vec![day; self.stages],
                })
            }
        }
    }

    pub fn markov(&self) -> Result<MarkovModel, IoError> {
        Ok(default_transition(&default_nodes())?)
    }
}

/// Loads, defaults, and validates a run configuration.
pub fn load_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = std::fs::read_to_string(path)?;
    let cfg: RunConfig = toml::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    cfg.validate_all()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// `hour,value` in EUR/kWh.
    Spot,
    /// `hour,value` in kWh/h.
    Load,
    /// `hour,mu,sigma` in degC.
    Temperature,
    /// `hour,mu,sigma`, normalized production factor.
    Irradiance,
}

/// Reads one hourly series, dispatching on the kind's schema. Value
/// series come back as (values, empty); distribution tables as (mu, sigma).
pub fn read_series_csv(path: &Path, kind: SeriesKind) -> Result<(Vec<f64>, Vec<f64>), IoError> {
    match kind {
        SeriesKind::Spot | SeriesKind::Load => Ok((read_value_csv(path)?, Vec::new())),
        SeriesKind::Temperature | SeriesKind::Irradiance => read_mu_sigma_csv(path),
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_hourly<const N: usize>(path: &Path, header: [&str; N]) -> Result<Vec<[f64; N]>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let got = reader
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?;
    let want: Vec<&str> = header.to_vec();
    if got.iter().collect::<Vec<_>>() != want {
        return Err(parse_err(
            path,
            format!("expected header '{}', got '{}'", want.join(","), got.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = vec![None; 24];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.len() != N {
            return Err(parse_err(path, format!("row {}: wrong column count", line + 2)));
        }
        let mut nums = [0.0f64; N];
        for (i, field) in record.iter().enumerate() {
            nums[i] = field
                .parse()
                .map_err(|_| parse_err(path, format!("row {}: non-numeric '{field}'", line + 2)))?;
        }
        let hour = nums[0];
        if hour.fract() != 0.0 || !(0.0..24.0).contains(&hour) {
            return Err(parse_err(path, format!("row {}: hour {hour} outside 0..23", line + 2)));
        }
        let h = hour as usize;
        if rows[h].is_some() {
            return Err(parse_err(path, format!("duplicate hour {h}")));
        }
        rows[h] = Some(nums);
    }
    rows.into_iter()
        .enumerate()
        .map(|(h, r)| r.ok_or_else(|| parse_err(path, format!("missing hour {h}"))))
        .collect()
}

/// `hour,value` series, hours 0..23 complete.
pub fn read_value_csv(path: &Path) -> Result<Vec<f64>, IoError> {
    Ok(read_hourly(path, ["hour", "value"])?
        .into_iter()
        .map(|r| r[1])
        .collect())
}

/// `hour,mu,sigma` distribution table, hours 0..23 complete.
pub fn read_mu_sigma_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), IoError> {
    let rows = read_hourly(path, ["hour", "mu", "sigma"])?;
    Ok(rows.iter().map(|r| r[1]).collect::<Vec<_>>())
        .map(|mu| (mu, rows.iter().map(|r| r[2]).collect()))
}

/// Writes a file atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| IoError::Io(e.error))?;
    Ok(())
}

/// `efcc.csv`: stage-major rows `stage,scenario,grid_index,peak_kw,cost_eur`
/// (stage and scenario zero-based).
pub fn efcc_csv(table: &EfccTable) -> String {
    let mut out = String::from("stage,scenario,grid_index,peak_kw,cost_eur\n");
    for (g, per_node) in table.phi.iter().enumerate() {
        for (s, row) in per_node.iter().enumerate() {
            for (n, &cost) in row.iter().enumerate() {
                out.push_str(&format!("{g},{s},{n},{},{cost}\n", table.grid.points[n]));
            }
        }
    }
    out
}

/// `mefcc.csv`: forward-difference slopes per curve,
/// `stage,scenario,midpoint_kw,slope_eur_per_kw`.
pub fn mefcc_csv(table: &EfccTable) -> Result<String, IoError> {
    let mut out = String::from("stage,scenario,midpoint_kw,slope_eur_per_kw\n");
    for (g, per_node) in table.phi.iter().enumerate() {
        for (s, row) in per_node.iter().enumerate() {
            let curve = crate::model::Efcc::new(
                table.grid.points.iter().copied().zip(row.iter().copied()).collect(),
            )?;
            for (mid, slope) in marginal_curve(&curve) {
                out.push_str(&format!("{g},{s},{mid},{slope}\n"));
            }
        }
    }
    Ok(out)
}

/// `runs.csv`: `replication,day,cost_eur,peak_kw` in replication order.
pub fn runs_csv(runs: &[crate::simulate::SimulationRun]) -> String {
    let mut out = String::from("replication,day,cost_eur,peak_kw\n");
    for (k, run) in runs.iter().enumerate() {
        for (g, (&c, &p)) in run.daily_cost.iter().zip(&run.daily_peak).enumerate() {
            out.push_str(&format!("{k},{g},{c},{p}\n"));
        }
    }
    out
}

/// `duration.csv`: `rank,median_kw,min_kw,max_kw`, descending imports.
pub fn duration_csv(curve: &crate::simulate::DurationCurve) -> String {
    let mut out = String::from("rank,median_kw,min_kw,max_kw\n");
    for (i, ((&m, &lo), &hi)) in curve.median.iter().zip(&curve.lo).zip(&curve.hi).enumerate() {
        out.push_str(&format!("{i},{m},{lo},{hi}\n"));
    }
    out
}

/// `boxplot.csv`: one row per metric with the five-number summary.
pub fn boxplot_csv(stats: &SummaryStats) -> String {
    let mut out =
        String::from("metric,mean,median,q1,q3,iqr,whisker_lo,whisker_hi,num_outliers\n");
    for (name, b) in [("total_cost_eur", &stats.total_cost), ("final_peak_kw", &stats.final_peak)] {
        out.push_str(&format!(
            "{name},{},{},{},{},{},{},{},{}\n",
            b.mean, b.median, b.q1, b.q3, b.iqr, b.whisker_lo, b.whisker_hi, b.outliers.len()
        ));
    }
    out
}

#[derive(Parser, Debug)]
#[command(
    name = "peakflex",
    about = "Values building-energy flexibility under a measured-peak grid tariff"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Materialize the stochastic stage inputs to disk.
    ScenGen {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the backward pass and write the future-cost curve CSVs.
    Sdp {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run Monte Carlo replications and write summary/runs/duration files.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Cross-tabulate cases x tariff schemes into a summary matrix.
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated case names; defaults to all seven.
        #[arg(long)]
        cases: Option<String>,
    },
    /// Run the built-in oracle suites and report pass/fail.
    Selftest,
}

/// Shared pipeline state for one (config, case, tariff) combination.
struct Pipeline {
    cfg: HouseholdConfig,
    set: ScenarioSet,
    grid: PeakGrid,
}

impl Pipeline {
    fn build(run: &RunConfig) -> Result<Self, IoError> {
        let cfg = run.household_config()?;
        let inputs = run.stage_inputs()?;
        let markov = run.markov()?;
        let set = ScenarioSet::from_inputs(&inputs, &markov)?;
        let grid = run.peak_grid()?;
        Ok(Self { cfg, set, grid })
    }

    fn table(&self) -> Result<EfccTable, IoError> {
        Ok(run_backward_set(&self.cfg, &self.set, &self.grid)?)
    }
}

fn cmd_scen_gen(run: &RunConfig) -> Result<(), IoError> {
    let inputs = run.stage_inputs()?;
    let json = serde_json::to_string_pretty(&inputs).expect("serializable");
    let path = run.output_dir.join("stage_inputs.json");
    atomic_write(&path, json.as_bytes())?;
    println!("wrote {} ({} stages)", path.display(), inputs.num_stages());
    Ok(())
}

fn cmd_sdp(run: &RunConfig) -> Result<(), IoError> {
    let pipe = Pipeline::build(run)?;
    let table = pipe.table()?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    atomic_write(&run.output_dir.join("efcc.csv"), efcc_csv(&table).as_bytes())?;
    atomic_write(&run.output_dir.join("mefcc.csv"), mefcc_csv(&table)?.as_bytes())?;
    println!(
        "wrote {} curves over {} grid points to {}",
        table.num_stages() * pipe.set.num_nodes(),
        pipe.grid.len(),
        run.output_dir.display()
    );
    Ok(())
}

fn cmd_simulate(run: &RunConfig) -> Result<(), IoError> {
    let pipe = Pipeline::build(run)?;
    let table = pipe.table()?;
    let (stats, runs) =
        run_replications(&pipe.cfg, &table, &pipe.set, run.replications, run.master_seed)?;
    let summary = serde_json::json!({
        "case": run.case.as_str(),
        "tariff": run.tariff,
        "replications": run.replications,
        "master_seed": run.master_seed,
        "stats": stats,
    });
    atomic_write(
        &run.output_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("serializable").as_bytes(),
    )?;
    atomic_write(&run.output_dir.join("runs.csv"), runs_csv(&runs).as_bytes())?;
    atomic_write(
        &run.output_dir.join("duration.csv"),
        duration_csv(&duration_curve(&runs)).as_bytes(),
    )?;
    atomic_write(
        &run.output_dir.join("boxplot.csv"),
        boxplot_csv(&stats).as_bytes(),
    )?;
    println!(
        "case {} / {:?}: mean cost {:.2} EUR, mean final peak {:.3} kW over {} replications",
        run.case.as_str(),
        run.tariff,
        stats.total_cost.mean,
        stats.final_peak.mean,
        run.replications
    );
    Ok(())
}

fn cmd_report(run: &RunConfig, cases: Option<&str>) -> Result<(), IoError> {
    let cases: Vec<CaseName> = match cases {
        None => CaseName::ALL.to_vec(),
        Some(list) => list
            .split(',')
            .map(|s| CaseName::parse(s.trim()))
            .collect::<Result<_, _>>()?,
    };
    let mut out = String::from("case,tariff,mean_cost_eur,mean_final_peak_kw\n");
    for &case in &cases {
        for tariff in [TariffKind::Mpgt, TariffKind::Ebgt] {
            let mut sub = run.clone();
            sub.case = case;
            sub.tariff = tariff;
            let pipe = Pipeline::build(&sub)?;
            let table = pipe.table()?;
            let (stats, _) = run_replications(
                &pipe.cfg,
                &table,
                &pipe.set,
                sub.replications,
                sub.master_seed,
            )?;
            let scheme = match tariff {
                TariffKind::Mpgt => "mpgt",
                TariffKind::Ebgt => "ebgt",
            };
            out.push_str(&format!(
                "{},{scheme},{},{}\n",
                case.as_str(),
                stats.total_cost.mean,
                stats.final_peak.mean
            ));
        }
    }
    atomic_write(&run.output_dir.join("report.csv"), out.as_bytes())?;
    print!("{out}");
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::ScenGen { config } => load_config(config).and_then(|c| cmd_scen_gen(&c)),
        Command::Sdp { config } => load_config(config).and_then(|c| cmd_sdp(&c)),
        Command::Simulate { config } => load_config(config).and_then(|c| cmd_simulate(&c)),
        Command::Report { config, cases } => {
            load_config(config).and_then(|c| cmd_report(&c, cases.as_deref()))
        }
        Command::Selftest => selftest(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let payload = serde_json::json!({
                "error": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{payload}");
            e.exit_code()
        }
    }
}

/// Built-in oracle suites: random LPs against vertex enumeration, a toy
/// backward pass against exhaustive scenario-tree optimization, and the
/// deterministic decomposition check. Exit 0 only if all pass.
pub fn selftest() -> Result<(), IoError> {
    selftest_simplex()?;
    println!("selftest: simplex vs vertex enumeration .. ok");
    selftest_scenario_tree()?;
    println!("selftest: backward pass vs scenario tree .. ok");
    selftest_decomposition()?;
    println!("selftest: deterministic decomposition .. ok");
    Ok(())
}

fn fail(msg: String) -> IoError {
    IoError::Config(vec![format!("selftest failed: {msg}")])
}

fn selftest_simplex() -> Result<(), IoError> {
    use crate::oracle::{random_bounded_lp, vertex_enumeration_min, XorShift};
    use crate::solver::{solve_lp, Status};
    let mut rng = XorShift::new(0x0dd5_ca1e);
    for case in 0..100 {
        let lp = random_bounded_lp(&mut rng, 5, 4);
        let sol = solve_lp(&lp).map_err(|e| fail(format!("case {case}: {e}")))?;
        match (sol.status, vertex_enumeration_min(&lp)) {
            (Status::Optimal, Some(best)) => {
                let err = (sol.objective - best).abs();
                if err > 1e-7 * (1.0 + best.abs()) {
                    return Err(fail(format!(
                        "case {case}: simplex {} vs oracle {best}",
                        sol.objective
                    )));
                }
            }
            (Status::Infeasible, None) => {}
            (st, or) => return Err(fail(format!("case {case}: {st:?} vs {or:?}"))),
        }
    }
    Ok(())
}

/// A small battery-only instance usable for both tree and decomposition
/// checks: `hours`-hour stages, flat load, no PV, no heating demand.
fn toy_config(hours: usize) -> HouseholdConfig {
    let mut cfg = HouseholdConfig::default();
    cfg.hours_per_stage = hours;
    cfg.mask.battery = AssetMode::Flexible;
    cfg.thermal.initial_t_e = 22.0;
    cfg.pv.rated_kw = 0.0;
    cfg
}

fn toy_scenario(hours: usize, spot: &[f64], load: &[f64]) -> ScenarioRealization {
    ScenarioRealization {
        spot: spot.to_vec(),
        load: load.to_vec(),
        ev_connected: vec![true; hours],
        irradiance: vec![0.0; hours],
        t_out: vec![22.0; hours],
    }
}

fn selftest_scenario_tree() -> Result<(), IoError> {
    use crate::scenario::{custom_transition, DiscreteNode};
    let hours = 4;
    let cfg = toy_config(hours);
    let nodes = vec![
        DiscreteNode { id: 0, probability: 0.6, weather_shift: 0, ev_shift: 0 },
        DiscreteNode { id: 1, probability: 0.4, weather_shift: 0, ev_shift: 0 },
    ];
    let markov = custom_transition(&nodes, vec![vec![0.6, 0.4], vec![0.6, 0.4]])
        .map_err(|e| fail(e.to_string()))?;
    let scens = [
        [
            toy_scenario(hours, &[0.1, 0.3, 0.2, 0.1], &[1.0, 3.0, 2.0, 1.0]),
            toy_scenario(hours, &[0.2, 0.5, 0.3, 0.2], &[2.0, 4.0, 3.0, 1.0]),
        ],
        [
            toy_scenario(hours, &[0.1, 0.2, 0.4, 0.1], &[1.0, 2.0, 4.0, 2.0]),
            toy_scenario(hours, &[0.3, 0.1, 0.2, 0.2], &[3.0, 1.0, 2.0, 1.0]),
        ],
    ];
    let set = ScenarioSet::new(
        markov.clone(),
        scens.iter().map(|row| row.to_vec()).collect(),
    )
    .map_err(|e| fail(e.to_string()))?;
    let grid = PeakGrid::uniform(5, cfg.tariff.import_cap_kw).map_err(|e| fail(e.to_string()))?;
    let table = run_backward_set(&cfg, &set, &grid).map_err(|e| fail(e.to_string()))?;
    let tol = cfg.tariff.peak_eur_per_kw * (grid.points[1] - grid.points[0]) + 1e-6;
    for (n, &p0) in grid.points.iter().enumerate() {
        let tree = crate::oracle::scenario_tree_expected_cost(&cfg, &set, p0)
            .map_err(|e| fail(e.to_string()))?;
        let got = table.initial[n];
        if (got - tree).abs() > tol {
            return Err(fail(format!(
                "grid point {n}: backward {got} vs tree {tree} (tol {tol})"
            )));
        }
    }
    Ok(())
}

fn selftest_decomposition() -> Result<(), IoError> {
    use crate::scenario::{custom_transition, DiscreteNode};
    let hours = 6;
    let cfg = toy_config(hours);
    let nodes = vec![DiscreteNode { id: 0, probability: 1.0, weather_shift: 0, ev_shift: 0 }];
    let markov =
        custom_transition(&nodes, vec![vec![1.0]]).map_err(|e| fail(e.to_string()))?;
    let days = [
        toy_scenario(hours, &[0.1, 0.4, 0.2, 0.1, 0.3, 0.2], &[1.0, 4.0, 2.0, 1.0, 3.0, 2.0]),
        toy_scenario(hours, &[0.2, 0.1, 0.5, 0.2, 0.1, 0.3], &[2.0, 1.0, 5.0, 2.0, 1.0, 2.0]),
        toy_scenario(hours, &[0.3, 0.2, 0.1, 0.4, 0.2, 0.1], &[3.0, 2.0, 1.0, 4.0, 2.0, 1.0]),
    ];
    let set = ScenarioSet::new(markov, days.iter().map(|d| vec![d.clone()]).collect())
        .map_err(|e| fail(e.to_string()))?;
    let grid = PeakGrid::uniform(41, cfg.tariff.import_cap_kw).map_err(|e| fail(e.to_string()))?;
    let table = run_backward_set(&cfg, &set, &grid).map_err(|e| fail(e.to_string()))?;
    let run = crate::simulate::simulate_month(&cfg, &table, &set, &[0, 0, 0])
        .map_err(|e| fail(e.to_string()))?;
    let oracle = crate::oracle::whole_horizon_optimum(&cfg, &days, 0.0)
        .map_err(|e| fail(e.to_string()))?;
    let cell = cfg.tariff.peak_eur_per_kw * (grid.points[1] - grid.points[0]);
    let tol = (0.005 * oracle.abs()).max(cell) + 1e-6;
    if (run.total_cost_eur - oracle).abs() > tol {
        return Err(fail(format!(
            "simulated {} vs whole-horizon {oracle} (tol {tol})",
            run.total_cost_eur
        )));
    }
    if run.total_cost_eur < oracle - 1e-6 {
        return Err(fail("simulation beat the clairvoyant bound".into()));
    }
    Ok(())
}
