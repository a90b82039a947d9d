//! Scenario configuration: the TOML schema, validation into dense indexed
//! entities, the built-in default scenario and dotted-key overrides.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::budget::AllocatorConfig;
use crate::costmodel::{CostProfile, RsuProfile};
use crate::domain::{Rank, RankSet, RsuId, TaskId, VehicleId, Weights};
use crate::error::{Error, Result};
use crate::mobility::{
    load_trajectories, synth_trajectories, BoundingBox, GeoPoint, RsuZone, SynthParams, Trajectory,
};
use crate::surrogate::AccuracyCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    /// Number of communication rounds `M`.
    pub rounds: u32,
    /// Candidate rank set, strictly ascending.
    pub ranks: Vec<u32>,
    pub seed: u64,
    /// Clock advance of a task round with no participants, s.
    #[serde(default = "default_idle_round")]
    pub idle_round_s: f64,
}

fn default_idle_round() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditSection {
    /// Exploration factor `ε`, in reward units.
    pub epsilon: f64,
    /// Dual step constant `c` in `ω = c / √M`.
    pub omega_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    /// Median of the log-normal channel gain.
    pub gain_median: f64,
    /// Standard deviation of `ln(gain)`.
    pub gain_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Adapted weight shape used for payload sizes.
    pub adapter_d: usize,
    pub adapter_k: usize,
    pub precision_bits: u32,
    /// Shape of the simulated update matrix that is truncated and aggregated.
    pub matrix_d: usize,
    pub matrix_k: usize,
    /// Entry scale of the seeded initial update.
    pub delta_scale: f64,
    /// Entry scale of each client's local perturbation.
    pub local_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum TrajectorySource {
    /// Random-waypoint paths; trajectory `i` (id `"i"`) is anchored to the
    /// `i mod K`-th RSU.
    Synthetic {
        seed: u64,
        count: usize,
        #[serde(default)]
        params: SynthParams,
    },
    /// T-Drive files: one file or a directory of files.
    Tdrive { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySection {
    pub source: TrajectorySource,
    /// Departure lookahead, s. Defaults to the round's nominal duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub departure_horizon_s: Option<f64>,
    /// Probability that a departure prediction is flipped.
    #[serde(default)]
    pub prediction_flip_prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox>,
    /// Trajectory time mapped to simulation time 0. Defaults to 0 for
    /// synthetic paths and to the earliest referenced sample otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_origin: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvePreset {
    Seq,
    Token,
    Choice,
}

impl CurvePreset {
    pub fn curve(self) -> AccuracyCurve {
        match self {
            CurvePreset::Seq => AccuracyCurve::SEQ,
            CurvePreset::Token => AccuracyCurve::TOKEN,
            CurvePreset::Choice => AccuracyCurve::CHOICE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurveSpec {
    Preset(CurvePreset),
    Custom(AccuracyCurve),
}

impl CurveSpec {
    pub fn resolve(self) -> AccuracyCurve {
        match self {
            CurveSpec::Preset(p) => p.curve(),
            CurveSpec::Custom(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    pub rsu: String,
    pub curve: CurveSpec,
    /// Accuracy threshold `q*` used by the fallback costs.
    #[serde(default = "default_q_threshold")]
    pub q_threshold: f64,
}

fn default_q_threshold() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsuConfig {
    pub name: String,
    pub lon: f64,
    pub lat: f64,
    pub radius_m: f64,
    pub c_agg: f64,
    pub cpu_freq: f64,
    pub kappa: f64,
    pub tx_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub name: String,
    /// Home task; vehicles without one only serve as migration targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    /// Trajectory id; without one the vehicle is parked at its task's RSU.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    pub c_per_sample: f64,
    pub dataset_size: f64,
    pub cpu_freq: f64,
    pub kappa: f64,
    pub tx_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    /// Refuse hindsight replays with more than this many agent-arm cells.
    pub oracle_limit: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { oracle_limit: crate::metrics::DEFAULT_ORACLE_LIMIT }
    }
}

/// The scenario file as written by users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub weights: Weights,
    pub bandit: BanditSection,
    pub budget: AllocatorConfig,
    pub channel: ChannelSection,
    pub model: ModelSection,
    pub mobility: MobilitySection,
    #[serde(default)]
    pub metrics: MetricsSection,
    pub rsus: Vec<RsuConfig>,
    pub tasks: Vec<TaskConfig>,
    pub vehicles: Vec<VehicleConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub name: String,
    pub rsu: RsuId,
    pub curve: AccuracyCurve,
    pub q_threshold: f64,
    /// Vehicles whose home task this is, in vehicle order. A vehicle's
    /// position in this list is its client index within the task.
    pub clients: Vec<VehicleId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rsu {
    pub id: RsuId,
    pub name: String,
    pub zone: RsuZone,
    pub profile: RsuProfile,
    pub tx_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub name: String,
    pub task: Option<TaskId>,
    pub profile: CostProfile,
    /// Path in simulation time (rebased to the time origin).
    pub trajectory: Trajectory,
}

/// A scenario whose cross-references all resolve and whose parameters are in
/// range. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedScenario {
    config: ScenarioConfig,
    pub ranks: RankSet,
    pub tasks: Vec<Task>,
    pub rsus: Vec<Rsu>,
    pub vehicles: Vec<Vehicle>,
}

fn invalid(field: impl Into<String>, entity: Option<&str>, msg: impl Into<String>) -> Error {
    Error::validation(field, entity.map(str::to_string), msg)
}

fn positive(field: &str, entity: Option<&str>, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, entity, format!("must be finite and > 0, got {v}")))
    }
}

fn probability(field: &str, entity: Option<&str>, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, entity, format!("must lie in [0, 1], got {v}")))
    }
}

fn index_names<'a>(kind: &str, names: impl Iterator<Item = &'a str>) -> Result<HashMap<&'a str, usize>> {
    let mut map = HashMap::new();
    for (i, name) in names.enumerate() {
        if name.is_empty() {
            return Err(invalid(format!("{kind}.name"), None, "name must not be empty"));
        }
        if map.insert(name, i).is_some() {
            return Err(invalid(format!("{kind}.name"), Some(name), "duplicate name"));
        }
    }
    Ok(map)
}

fn rank_set(cfg: &ScenarioConfig) -> Result<RankSet> {
    for &r in &cfg.scenario.ranks {
        Rank::new(r).map_err(|e| invalid("scenario.ranks", None, e.to_string()))?;
    }
    let ranks = RankSet::from_values(&cfg.scenario.ranks).map_err(|e| invalid("scenario.ranks", None, e.to_string()))?;
    let m = &cfg.model;
    for r in ranks.iter() {
        if !r.fits(m.adapter_d, m.adapter_k) {
            return Err(invalid("scenario.ranks", None, format!("rank {r} exceeds the adapter shape")));
        }
        if !r.fits(m.matrix_d, m.matrix_k) {
            return Err(invalid("scenario.ranks", None, format!("rank {r} exceeds the update matrix shape")));
        }
    }
    Ok(ranks)
}

fn check_sections(cfg: &ScenarioConfig) -> Result<()> {
    if cfg.scenario.rounds == 0 {
        return Err(invalid("scenario.rounds", None, "must be ≥ 1"));
    }
    positive("scenario.idle_round_s", None, cfg.scenario.idle_round_s)?;
    cfg.weights.validate()?;
    let b = &cfg.bandit;
    if !(b.epsilon.is_finite() && b.epsilon >= 0.0) {
        return Err(invalid("bandit.epsilon", None, "must be finite and ≥ 0"));
    }
    positive("bandit.omega_c", None, b.omega_c)?;
    cfg.budget
        .validate()
        .map_err(|(field, msg)| invalid(format!("budget.{field}"), None, msg))?;
    let ch = &cfg.channel;
    positive("channel.bandwidth_hz", None, ch.bandwidth_hz)?;
    positive("channel.noise_power_w", None, ch.noise_power_w)?;
    positive("channel.gain_median", None, ch.gain_median)?;
    if !(ch.gain_sigma.is_finite() && ch.gain_sigma >= 0.0) {
        return Err(invalid("channel.gain_sigma", None, "must be finite and ≥ 0"));
    }
    let m = &cfg.model;
    for (field, v) in [
        ("model.adapter_d", m.adapter_d),
        ("model.adapter_k", m.adapter_k),
        ("model.matrix_d", m.matrix_d),
        ("model.matrix_k", m.matrix_k),
    ] {
        if v == 0 {
            return Err(invalid(field, None, "must be ≥ 1"));
        }
    }
    if m.precision_bits == 0 {
        return Err(invalid("model.precision_bits", None, "must be ≥ 1"));
    }
    positive("model.delta_scale", None, m.delta_scale)?;
    if !(m.local_noise.is_finite() && m.local_noise >= 0.0) {
        return Err(invalid("model.local_noise", None, "must be finite and ≥ 0"));
    }
    let mob = &cfg.mobility;
    probability("mobility.prediction_flip_prob", None, mob.prediction_flip_prob)?;
    if let Some(h) = mob.departure_horizon_s {
        if !(h.is_finite() && h >= 0.0) {
            return Err(invalid("mobility.departure_horizon_s", None, "must be finite and ≥ 0"));
        }
    }
    if let Some(t) = mob.time_origin {
        if !t.is_finite() {
            return Err(invalid("mobility.time_origin", None, "must be finite"));
        }
    }
    if let TrajectorySource::Synthetic { params, .. } = &mob.source {
        params
            .validate()
            .map_err(|msg| invalid("mobility.source.params", None, msg))?;
    }
    if cfg.metrics.oracle_limit == 0 {
        return Err(invalid("metrics.oracle_limit", None, "must be ≥ 1"));
    }
    Ok(())
}

fn build_rsus(cfg: &ScenarioConfig) -> Result<Vec<Rsu>> {
    cfg.rsus
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let e = Some(r.name.as_str());
            if !(r.lon.is_finite() && (-180.0..=180.0).contains(&r.lon)) {
                return Err(invalid("rsus.lon", e, "longitude out of range"));
            }
            if !(r.lat.is_finite() && (-90.0..=90.0).contains(&r.lat)) {
                return Err(invalid("rsus.lat", e, "latitude out of range"));
            }
            if let Some(b) = &cfg.mobility.bbox {
                if !b.contains(r.lon, r.lat) {
                    return Err(invalid("rsus.lon", e, "RSU lies outside the bounding box"));
                }
            }
            positive("rsus.radius_m", e, r.radius_m)?;
            positive("rsus.c_agg", e, r.c_agg)?;
            positive("rsus.cpu_freq", e, r.cpu_freq)?;
            positive("rsus.kappa", e, r.kappa)?;
            positive("rsus.tx_power_w", e, r.tx_power_w)?;
            Ok(Rsu {
                id: RsuId(i),
                name: r.name.clone(),
                zone: RsuZone {
                    rsu: RsuId(i),
                    center: GeoPoint { lon: r.lon, lat: r.lat },
                    radius_m: r.radius_m,
                    task: None,
                },
                profile: RsuProfile { c_agg: r.c_agg, cpu_freq: r.cpu_freq, kappa: r.kappa },
                tx_power: r.tx_power_w,
            })
        })
        .collect()
}

fn load_source(cfg: &ScenarioConfig, rsus: &[Rsu]) -> Result<(Vec<Trajectory>, f64)> {
    let mob = &cfg.mobility;
    match &mob.source {
        TrajectorySource::Synthetic { seed, count, params } => {
            let zones: Vec<RsuZone> = rsus.iter().map(|r| r.zone).collect();
            Ok((synth_trajectories(*count, &zones, *seed, params), 0.0))
        }
        TrajectorySource::Tdrive { path } => {
            let (trajs, report) = load_trajectories(path, mob.bbox.as_ref())
                .map_err(|e| invalid("mobility.source.path", None, e.to_string()))?;
            log::info!(
                "loaded {} trajectories ({} rows, {} skipped) from {}",
                trajs.len(),
                report.rows,
                report.skipped,
                path.display()
            );
            let origin = trajs.iter().map(Trajectory::start_time).fold(f64::INFINITY, f64::min);
            Ok((trajs, origin))
        }
    }
}

/// Checks every parameter and cross-reference and assigns dense ids.
pub fn validate_scenario(config: ScenarioConfig) -> Result<ValidatedScenario> {
    check_sections(&config)?;
    let ranks = rank_set(&config)?;
    if config.tasks.is_empty() {
        return Err(invalid("tasks", None, "at least one task is required"));
    }
    if ((config.budget.e_total - config.budget.reserve) as usize) < config.tasks.len() {
        return Err(invalid("budget.e_total", None, "initial split must give every task at least 1 J"));
    }
    let rsu_index = index_names("rsus", config.rsus.iter().map(|r| r.name.as_str()))?;
    let task_index = index_names("tasks", config.tasks.iter().map(|t| t.name.as_str()))?;
    index_names("vehicles", config.vehicles.iter().map(|v| v.name.as_str()))?;
    let mut rsus = build_rsus(&config)?;

    let mut tasks = Vec::with_capacity(config.tasks.len());
    for (i, t) in config.tasks.iter().enumerate() {
        let e = Some(t.name.as_str());
        let &rsu = rsu_index
            .get(t.rsu.as_str())
            .ok_or_else(|| invalid("tasks.rsu", e, format!("unknown RSU `{}`", t.rsu)))?;
        if rsus[rsu].zone.task.is_some() {
            return Err(invalid("tasks.rsu", e, format!("RSU `{}` already serves another task", t.rsu)));
        }
        rsus[rsu].zone.task = Some(TaskId(i));
        let curve = t.curve.resolve();
        curve.validate().map_err(|msg| invalid("tasks.curve", e, msg))?;
        probability("tasks.q_threshold", e, t.q_threshold)?;
        tasks.push(Task {
            id: TaskId(i),
            name: t.name.clone(),
            rsu: RsuId(rsu),
            curve,
            q_threshold: t.q_threshold,
            clients: Vec::new(),
        });
    }

    let (pool, default_origin) = load_source(&config, &rsus)?;
    let origin = config.mobility.time_origin.unwrap_or(default_origin);
    let by_id: HashMap<&str, &Trajectory> = pool.iter().map(|t| (t.id.as_str(), t)).collect();

    let mut vehicles = Vec::with_capacity(config.vehicles.len());
    for (i, v) in config.vehicles.iter().enumerate() {
        let e = Some(v.name.as_str());
        let task = match &v.task {
            Some(name) => Some(
                *task_index
                    .get(name.as_str())
                    .ok_or_else(|| invalid("vehicles.task", e, format!("unknown task `{name}`")))?,
            ),
            None => None,
        };
        let profile = CostProfile {
            c_per_sample: v.c_per_sample,
            dataset_size: v.dataset_size,
            cpu_freq: v.cpu_freq,
            kappa: v.kappa,
            tx_power: v.tx_power_w,
        };
        positive("vehicles.c_per_sample", e, v.c_per_sample)?;
        positive("vehicles.dataset_size", e, v.dataset_size)?;
        positive("vehicles.cpu_freq", e, v.cpu_freq)?;
        positive("vehicles.kappa", e, v.kappa)?;
        positive("vehicles.tx_power_w", e, v.tx_power_w)?;
        let trajectory = match (&v.trajectory, task) {
            (Some(id), _) => by_id
                .get(id.as_str())
                .ok_or_else(|| invalid("vehicles.trajectory", e, format!("unknown trajectory `{id}`")))?
                .rebased(origin),
            (None, Some(t)) => Trajectory::stationary(v.name.clone(), rsus[tasks[t].rsu.index()].zone.center),
            (None, None) => {
                return Err(invalid("vehicles.trajectory", e, "a vehicle without a task needs a trajectory"))
            }
        };
        if let Some(t) = task {
            tasks[t].clients.push(VehicleId(i));
        }
        vehicles.push(Vehicle {
            id: VehicleId(i),
            name: v.name.clone(),
            task: task.map(TaskId),
            profile,
            trajectory,
        });
    }

    Ok(ValidatedScenario { config, ranks, tasks, rsus, vehicles })
}

impl ValidatedScenario {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn rounds(&self) -> u32 {
        self.config.scenario.rounds
    }

    pub fn seed(&self) -> u64 {
        self.config.scenario.seed
    }

    pub fn weights(&self) -> Weights {
        self.config.weights
    }

    pub fn to_toml(&self) -> Result<String> {
        self.config.to_toml()
    }

    /// Same scenario with a different run seed.
    pub fn with_seed(&self, seed: u64) -> ValidatedScenario {
        let mut s = self.clone();
        s.config.scenario.seed = seed;
        s
    }

    /// Rank of the cheapest candidate; the reference for `g(η) = η / η_ref`.
    pub fn reference_rank(&self) -> Rank {
        self.ranks.min()
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.message().replace('\n', " ")))
    }

    /// Never panics: invalid UTF-8 and malformed TOML become parse errors.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse(format!("config is not UTF-8: {e}")))?;
        Self::from_toml_str(text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads a scenario file, applies `overrides` (`dotted.key=value`) and
    /// resolves a relative T-Drive path against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?.with_overrides(overrides)?;
        if let TrajectorySource::Tdrive { path: p } = &mut cfg.mobility.source {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies `dotted.key=value` overrides. Values are parsed as TOML and
    /// fall back to plain strings; array elements are addressed by index
    /// (`vehicles.0.cpu_freq=2e9`).
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Parse(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("override `{o}` is not key=value")))?;
            set_dotted(&mut root, key.trim(), raw.trim())?;
        }
        root.try_into::<ScenarioConfig>()
            .map_err(|e| Error::Parse(e.message().replace('\n', " ")))
    }

    /// Three tasks on three RSUs about 2 km apart in central Beijing, three
    /// vehicles per task on synthetic hotspot trajectories, 20 rounds.
    pub fn default_scenario() -> Self {
        let rsu = |name: &str, lon: f64, lat: f64| RsuConfig {
            name: name.into(),
            lon,
            lat,
            radius_m: 500.0,
            c_agg: 2.0e8,
            cpu_freq: 1.0e10,
            kappa: 1.0e-30,
            tx_power_w: 1.0,
        };
        let task = |name: &str, rsu: &str, curve| TaskConfig {
            name: name.into(),
            rsu: rsu.into(),
            curve: CurveSpec::Preset(curve),
            q_threshold: 0.7,
        };
        // fast, mid and slow client per task
        let classes = [(4.0e9, 1.4e-28), (1.0e9, 1.0e-27), (0.25e9, 1.0e-27)];
        let mut vehicles = Vec::new();
        for (t, task_name) in ["seq", "token", "choice"].iter().enumerate() {
            for (j, &(freq, kappa)) in classes.iter().enumerate() {
                let traj = t + 3 * j;
                vehicles.push(VehicleConfig {
                    name: format!("{task_name}-{j}"),
                    task: Some(task_name.to_string()),
                    trajectory: Some(traj.to_string()),
                    c_per_sample: 1.0e4,
                    dataset_size: 5.0e4,
                    cpu_freq: freq,
                    kappa,
                    tx_power_w: 0.2,
                });
            }
        }
        for j in 0..3 {
            vehicles.push(VehicleConfig {
                name: format!("spare-{j}"),
                task: None,
                trajectory: Some((9 + j).to_string()),
                c_per_sample: 1.0e4,
                dataset_size: 5.0e4,
                cpu_freq: 1.0e9,
                kappa: 1.0e-27,
                tx_power_w: 0.2,
            });
        }
        ScenarioConfig {
            scenario: ScenarioSection {
                rounds: 20,
                ranks: vec![1, 4, 8, 16],
                seed: 7,
                idle_round_s: 10.0,
            },
            weights: Weights { alpha: 1.0, gamma: 100.0, beta: 0.05 },
            bandit: BanditSection { epsilon: 2.0, omega_c: 0.05 },
            budget: AllocatorConfig {
                e_total: 60,
                q_period: 5,
                xi: 0.5,
                zeta: 2.0,
                perf_floor: 1.0,
                h_init: 0.5,
                reserve: 10,
            },
            channel: ChannelSection {
                bandwidth_hz: 1.0e6,
                noise_power_w: 1.0e-13,
                gain_median: 1.0e-10,
                gain_sigma: 0.5,
            },
            model: ModelSection {
                adapter_d: 768,
                adapter_k: 768,
                precision_bits: 32,
                matrix_d: 64,
                matrix_k: 64,
                delta_scale: 1.0,
                local_noise: 0.1,
            },
            mobility: MobilitySection {
                source: TrajectorySource::Synthetic {
                    seed: 2008,
                    count: 12,
                    params: SynthParams::default(),
                },
                departure_horizon_s: None,
                prediction_flip_prob: 0.0,
                bbox: None,
                time_origin: None,
            },
            metrics: MetricsSection::default(),
            rsus: vec![
                rsu("rsu-a", 116.397, 39.909),
                rsu("rsu-b", 116.420, 39.909),
                rsu("rsu-c", 116.4085, 39.925),
            ],
            tasks: vec![
                task("seq", "rsu-a", CurvePreset::Seq),
                task("token", "rsu-b", CurvePreset::Token),
                task("choice", "rsu-c", CurvePreset::Choice),
            ],
            vehicles,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let bad = |msg: &str| Error::InvalidArgument(format!("override `{key}`: {msg}"));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), parse_value(raw));
                    return Ok(());
                }
                t.entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| bad("array segment must be an index"))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| bad(&format!("index {idx} out of range (len {len})")))?;
                if last {
                    *slot = parse_value(raw);
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad("path runs through a scalar")),
        };
    }
    Ok(())
}

/// Directory searched for named configs (`--config NAME`).
pub const CONFIG_DIR_ENV: &str = "FEDRANK_CONFIG_DIR";

/// Resolves `--config`: `default` is built in; other values are paths, or
/// names looked up as `<dir>/<name>.toml` under [`CONFIG_DIR_ENV`].
pub fn resolve_config(spec: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    if spec == "default" {
        return ScenarioConfig::default_scenario().with_overrides(overrides);
    }
    let direct = PathBuf::from(spec);
    if direct.exists() {
        return ScenarioConfig::load(&direct, overrides);
    }
    if let Ok(dir) = std::env::var(CONFIG_DIR_ENV) {
        let named = Path::new(&dir).join(format!("{spec}.toml"));
        if named.exists() {
            return ScenarioConfig::load(&named, overrides);
        }
    }
    Err(Error::InvalidArgument(format!("config `{spec}` not found")))
}
