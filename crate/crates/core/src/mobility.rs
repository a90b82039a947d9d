//! Vehicle trajectories, RSU coverage, departure prediction and the
//! fault-tolerant fallback taken when a client is about to leave coverage.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{RsuId, TaskId, Weights};
use crate::error::{Error, Result};
use crate::rng::{keyed, Stream};

/// Mean Earth radius, m.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

const TDRIVE_TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

/// Great-circle distance in metres.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Offset a point by `(east, north)` metres on a local tangent plane.
pub fn offset_m(origin: GeoPoint, east: f64, north: f64) -> GeoPoint {
    GeoPoint {
        lon: origin.lon + (east / (EARTH_RADIUS_M * origin.lat.to_radians().cos())).to_degrees(),
        lat: origin.lat + (north / EARTH_RADIUS_M).to_degrees(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds.
    pub t: f64,
    pub lon: f64,
    pub lat: f64,
}

impl Sample {
    pub fn point(&self) -> GeoPoint {
        GeoPoint { lon: self.lon, lat: self.lat }
    }
}

/// Time-ordered GPS samples of one vehicle. Positions are linearly
/// interpolated between samples and held constant outside the sampled span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    samples: Vec<Sample>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let id = id.into();
        if samples.is_empty() {
            return Err(Error::Trajectory(format!("trajectory {id} has no samples")));
        }
        if samples.windows(2).any(|w| !(w[0].t < w[1].t)) {
            return Err(Error::Trajectory(format!(
                "trajectory {id} timestamps must be strictly increasing"
            )));
        }
        if samples.iter().any(|s| !(s.t.is_finite() && s.lon.is_finite() && s.lat.is_finite())) {
            return Err(Error::Trajectory(format!("trajectory {id} has non-finite samples")));
        }
        Ok(Trajectory { id, samples })
    }

    /// A vehicle parked at `at` forever.
    pub fn stationary(id: impl Into<String>, at: GeoPoint) -> Self {
        Trajectory {
            id: id.into(),
            samples: vec![Sample { t: 0.0, lon: at.lon, lat: at.lat }],
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Same path with every timestamp shifted by `-origin`.
    pub fn rebased(&self, origin: f64) -> Trajectory {
        Trajectory {
            id: self.id.clone(),
            samples: self.samples.iter().map(|s| Sample { t: s.t - origin, ..*s }).collect(),
        }
    }

    pub fn position_at(&self, t: f64) -> GeoPoint {
        let s = &self.samples;
        if t <= s[0].t {
            return s[0].point();
        }
        if t >= s[s.len() - 1].t {
            return s[s.len() - 1].point();
        }
        let i = s.partition_point(|p| p.t <= t);
        let (a, b) = (&s[i - 1], &s[i]);
        let f = (t - a.t) / (b.t - a.t);
        GeoPoint {
            lon: a.lon + f * (b.lon - a.lon),
            lat: a.lat + f * (b.lat - a.lat),
        }
    }

    fn breakpoints_in(&self, from: f64, to: f64) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t).filter(move |&t| t > from && t < to)
    }
}

/// Circular RSU coverage area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsuZone {
    pub rsu: RsuId,
    pub center: GeoPoint,
    pub radius_m: f64,
    pub task: Option<TaskId>,
}

impl RsuZone {
    pub fn contains(&self, p: GeoPoint) -> bool {
        haversine_m(p, self.center) <= self.radius_m
    }
}

/// Whether the vehicle is inside the closed coverage disc at time `t`.
pub fn coverage_at(traj: &Trajectory, zone: &RsuZone, t: f64) -> bool {
    zone.contains(traj.position_at(t))
}

/// First time in `[now, now + horizon]` at which the vehicle is outside the
/// zone, or `None` if it stays covered throughout.
///
/// Positions are piecewise linear, so the distance to the centre is convex on
/// each segment: checking segment ends finds every exit, and bisection then
/// locates the crossing.
pub fn departure_time(traj: &Trajectory, zone: &RsuZone, now: f64, horizon: f64) -> Option<f64> {
    if !coverage_at(traj, zone, now) {
        return Some(now);
    }
    let end = now + horizon.max(0.0);
    let mut inside = now;
    for t in traj.breakpoints_in(now, end).chain(std::iter::once(end)) {
        if coverage_at(traj, zone, t) {
            inside = t;
            continue;
        }
        let mut outside = t;
        for _ in 0..200 {
            if outside - inside <= 1e-9 * outside.abs().max(1.0) {
                break;
            }
            let mid = 0.5 * (inside + outside);
            if coverage_at(traj, zone, mid) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        return Some(outside);
    }
    None
}

/// Ground-truth lookahead: does the vehicle leave within `horizon` seconds?
/// A vehicle already outside counts as departing immediately.
pub fn predict_departure(traj: &Trajectory, zone: &RsuZone, now: f64, horizon: f64) -> bool {
    departure_time(traj, zone, now, horizon).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub max_lon: f64,
    pub min_lat: f64,
    pub max_lat: f64,
}

impl BoundingBox {
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        (self.min_lon..=self.max_lon).contains(&lon) && (self.min_lat..=self.max_lat).contains(&lat)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub files: usize,
    pub rows: usize,
    pub skipped: usize,
    pub duplicates: usize,
}

fn parse_tdrive_row(line: &str) -> Option<(String, f64, f64, f64)> {
    let mut fields = line.split(',').map(str::trim);
    let id = fields.next()?.to_string();
    let when = NaiveDateTime::parse_from_str(fields.next()?, TDRIVE_TIME_FORMAT).ok()?;
    let lon: f64 = fields.next()?.parse().ok()?;
    let lat: f64 = fields.next()?.parse().ok()?;
    if fields.next().is_some() || id.is_empty() || !lon.is_finite() || !lat.is_finite() {
        return None;
    }
    Some((id, when.and_utc().timestamp() as f64, lon, lat))
}

/// Reads T-Drive style files: `id,YYYY-MM-DD HH:MM:SS,longitude,latitude`.
///
/// `path` is a single file or a directory whose regular files are read in name
/// order. Malformed rows and rows outside `bbox` are skipped and counted;
/// repeated timestamps of one vehicle keep the first row.
pub fn load_trajectories(path: &Path, bbox: Option<&BoundingBox>) -> Result<(Vec<Trajectory>, LoadReport)> {
    let files = if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut report = LoadReport { files: files.len(), ..LoadReport::default() };
    let mut by_id: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    for file in &files {
        let text = fs::read_to_string(file)?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match parse_tdrive_row(line) {
                Some((id, t, lon, lat)) if bbox.is_none_or(|b| b.contains(lon, lat)) => {
                    report.rows += 1;
                    by_id.entry(id).or_default().push(Sample { t, lon, lat });
                }
                _ => report.skipped += 1,
            }
        }
    }
    if report.skipped > 0 {
        log::warn!("skipped {} malformed trajectory rows under {}", report.skipped, path.display());
    }
    if report.rows == 0 {
        return Err(Error::Trajectory(format!("no valid rows under {}", path.display())));
    }
    let mut out = Vec::with_capacity(by_id.len());
    for (id, mut samples) in by_id {
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        let before = samples.len();
        samples.dedup_by(|later, earlier| later.t == earlier.t);
        report.duplicates += before - samples.len();
        report.rows -= before - samples.len();
        out.push(Trajectory::new(id, samples)?);
    }
    out.sort_by(|a, b| {
        let key = |s: &str| s.parse::<u64>().ok();
        key(&a.id).cmp(&key(&b.id)).then_with(|| a.id.cmp(&b.id))
    });
    Ok((out, report))
}

/// Writes one T-Drive file per trajectory into `dir`, timestamps offset from
/// `epoch` (Unix seconds) and truncated to whole seconds.
pub fn write_tdrive(trajectories: &[Trajectory], dir: &Path, epoch: i64) -> Result<()> {
    fs::create_dir_all(dir)?;
    for traj in trajectories {
        let mut file = std::io::BufWriter::new(fs::File::create(dir.join(format!("{}.txt", traj.id)))?);
        for s in traj.samples() {
            let when = DateTime::from_timestamp(epoch + s.t as i64, 0)
                .ok_or_else(|| Error::Trajectory(format!("timestamp {} out of range", s.t)))?;
            writeln!(file, "{},{},{},{}", traj.id, when.format(TDRIVE_TIME_FORMAT), s.lon, s.lat)?;
        }
        file.flush()?;
    }
    Ok(())
}

/// Random-waypoint generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    /// Generated time span, s.
    pub horizon_s: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    /// Dwell at in-zone waypoints, s.
    pub dwell_min_s: f64,
    pub dwell_max_s: f64,
    /// Probability that an in-zone waypoint lies in the anchor zone rather
    /// than another zone.
    pub home_bias: f64,
    /// Excursion waypoints lie this many radii from the anchor centre.
    pub excursion_min: f64,
    pub excursion_max: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            horizon_s: 7200.0,
            speed_min_mps: 6.0,
            speed_max_mps: 14.0,
            dwell_min_s: 120.0,
            dwell_max_s: 480.0,
            home_bias: 0.85,
            excursion_min: 1.15,
            excursion_max: 1.8,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let ok = self.horizon_s > 0.0
            && self.speed_min_mps > 0.0
            && self.speed_max_mps >= self.speed_min_mps
            && self.dwell_min_s >= 0.0
            && self.dwell_max_s >= self.dwell_min_s
            && (0.0..=1.0).contains(&self.home_bias)
            && self.excursion_min > 1.0
            && self.excursion_max >= self.excursion_min;
        if ok {
            Ok(())
        } else {
            Err("synthetic trajectory parameters out of range".into())
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn point_in_disc<R: Rng>(rng: &mut R, zone: &RsuZone, max_frac: f64) -> GeoPoint {
    let r = zone.radius_m * max_frac * rng.random::<f64>().sqrt();
    let bearing = rng.random_range(0.0..std::f64::consts::TAU);
    offset_m(zone.center, r * bearing.cos(), r * bearing.sin())
}

/// Seeded random-waypoint paths around RSU hotspots.
///
/// Trajectory `i` is anchored to `zones[i % zones.len()]`: it starts inside that
/// zone, then alternates short excursions just outside it with stays inside
/// a zone (usually the anchor). The first move after the initial stay is an
/// excursion, so every path leaves its anchor zone at least once when the
/// horizon allows. Samples fall on whole seconds.
pub fn synth_trajectories(n: usize, zones: &[RsuZone], seed: u64, params: &SynthParams) -> Vec<Trajectory> {
    if n == 0 || zones.is_empty() {
        return Vec::new();
    }
    (0..n)
        .map(|i| {
            let mut rng = keyed(seed, Stream::Trajectory, [i as u64, 0, 0]);
            let anchor = &zones[i % zones.len()];
            let mut pos = point_in_disc(&mut rng, anchor, 0.6);
            let mut t = 0.0;
            let mut samples = vec![Sample { t, lon: pos.lon, lat: pos.lat }];
            let mut dwell = uniform(&mut rng, params.dwell_min_s, params.dwell_max_s).round();
            let mut leg = 0usize;
            while t < params.horizon_s {
                if dwell >= 1.0 {
                    t += dwell;
                    samples.push(Sample { t, lon: pos.lon, lat: pos.lat });
                }
                let target = if leg % 2 == 0 {
                    let d = anchor.radius_m * uniform(&mut rng, params.excursion_min, params.excursion_max);
                    let bearing = rng.random_range(0.0..std::f64::consts::TAU);
                    dwell = 0.0;
                    offset_m(anchor.center, d * bearing.cos(), d * bearing.sin())
                } else {
                    let zone = if rng.random::<f64>() < params.home_bias {
                        anchor
                    } else {
                        &zones[rng.random_range(0..zones.len())]
                    };
                    dwell = uniform(&mut rng, params.dwell_min_s, params.dwell_max_s).round();
                    point_in_disc(&mut rng, zone, 0.6)
                };
                let speed = uniform(&mut rng, params.speed_min_mps, params.speed_max_mps);
                let travel = (haversine_m(pos, target) / speed).ceil().max(1.0);
                t += travel;
                pos = target;
                samples.push(Sample { t, lon: pos.lon, lat: pos.lat });
                leg += 1;
            }
            Trajectory::new(format!("{i}"), samples).expect("generated timestamps increase")
        })
        .collect()
}

/// Fallback strategy for a client predicted to leave mid-round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FallbackStrategy {
    /// Upload the partially trained adapter now.
    EarlyUpload = 0,
    /// Hand the training state to a nearby idle vehicle.
    Migration = 1,
    /// Drop this round's update.
    Abandon = 2,
}

impl FallbackStrategy {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Migration latency (s) and energy (J).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MigrationCost {
    pub latency: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallbackInputs {
    /// Local accuracy reached before departure.
    pub q: f64,
    /// Accuracy threshold of the task.
    pub q_star: f64,
    /// Present only when an idle in-zone vehicle can take over.
    pub migration: Option<MigrationCost>,
    /// Energy already spent this round, J.
    pub wasted_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallbackCosts {
    pub early_upload: f64,
    pub migration: Option<f64>,
    pub abandon: f64,
}

impl FallbackCosts {
    pub fn get(&self, s: FallbackStrategy) -> Option<f64> {
        match s {
            FallbackStrategy::EarlyUpload => Some(self.early_upload),
            FallbackStrategy::Migration => self.migration,
            FallbackStrategy::Abandon => Some(self.abandon),
        }
    }
}

/// `Cost₀ = γ·max(0, q* − q)`, `Cost₁ = α·τ_mig + β·e_mig`,
/// `Cost₂ = β·ê + γ·q*`.
pub fn fallback_costs(inputs: &FallbackInputs, w: &Weights) -> FallbackCosts {
    FallbackCosts {
        early_upload: w.gamma * (inputs.q_star - inputs.q).max(0.0),
        migration: inputs.migration.map(|m| w.alpha * m.latency + w.beta * m.energy),
        abandon: w.beta * inputs.wasted_energy + w.gamma * inputs.q_star,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallbackDecision {
    pub strategy: FallbackStrategy,
    pub cost: f64,
    pub costs: FallbackCosts,
    pub inputs: FallbackInputs,
}

/// Cheapest available strategy; ties go to the lower strategy index.
pub fn choose_fallback(costs: FallbackCosts, inputs: FallbackInputs) -> FallbackDecision {
    let mut best = (FallbackStrategy::EarlyUpload, costs.early_upload);
    for s in [FallbackStrategy::Migration, FallbackStrategy::Abandon] {
        if let Some(c) = costs.get(s) {
            if c < best.1 {
                best = (s, c);
            }
        }
    }
    FallbackDecision {
        strategy: best.0,
        cost: best.1,
        costs,
        inputs,
    }
}
