//! Hindsight oracles, regret and constraint-violation series, and the
//! horizon-scaling check for the UCB-DUAL guarantees.
//!
//! Everything here works on an [`ArmEnvironment`] (a replayable source of
//! per-agent, per-round, per-arm outcomes) and a [`PlayLog`] recording what a
//! policy actually did under which price `λ`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{DualState, UcbDual};
use crate::domain::{RankSet, RoundIndex};
use crate::error::{Error, Result};
use crate::rng::{keyed, Stream};

/// Default guard on `agents × arms` for exhaustive hindsight replays.
pub const DEFAULT_ORACLE_LIMIT: usize = 4096;

/// Replayable outcomes: the same `(agent, round, arm)` always yields the same
/// `(reward, energy)`, whichever arm was actually played.
pub trait ArmEnvironment {
    fn agents(&self) -> usize;
    fn arms(&self) -> usize;
    fn outcome(&self, agent: usize, round: RoundIndex, arm: usize) -> Result<(f64, f64)>;
}

/// What happened in one round of a logged run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayRound {
    pub round: RoundIndex,
    /// Price in force when the arms were chosen.
    pub lambda: f64,
    pub budget: f64,
    /// Realized client energy charged against `budget`.
    pub energy: f64,
    /// Arm index per agent; `None` when the agent sat the round out.
    pub played: Vec<Option<usize>>,
}

impl PlayRound {
    pub fn violation(&self) -> f64 {
        (self.energy - self.budget).max(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlayLog {
    pub rounds: Vec<PlayRound>,
}

impl PlayLog {
    /// `Σ_m [E^m − budget^m]₊`.
    pub fn cumulative_violation(&self) -> f64 {
        self.rounds.iter().map(PlayRound::violation).sum()
    }
}

fn regularized<E: ArmEnvironment + ?Sized>(env: &E, agent: usize, r: &PlayRound, arm: usize) -> Result<f64> {
    let (reward, energy) = env.outcome(agent, r.round, arm)?;
    Ok(reward - r.lambda * energy)
}

/// Best fixed arm of one agent in hindsight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedArm {
    pub arm: usize,
    /// `Σ_m [R(arm) − λ^m·E(arm)]` over the rounds the agent took part in.
    pub value: f64,
}

fn check_limit<E: ArmEnvironment + ?Sized>(env: &E, limit: usize) -> Result<()> {
    let cells = env.agents().saturating_mul(env.arms());
    if cells > limit {
        return Err(Error::OracleLimit { cells, limit });
    }
    Ok(())
}

/// Per-agent best fixed arms under the logged `λ` sequence.
///
/// Each agent is replayed on every arm over exactly the rounds it took part
/// in; ties go to the lower arm index. Refuses when `agents × arms > limit`.
pub fn oracle_best_fixed<E: ArmEnvironment + ?Sized>(env: &E, log: &PlayLog, limit: usize) -> Result<Vec<FixedArm>> {
    check_limit(env, limit)?;
    if env.arms() == 0 {
        return Err(Error::Empty("arm set"));
    }
    (0..env.agents())
        .map(|agent| {
            let mut totals = vec![0.0; env.arms()];
            for r in log.rounds.iter().filter(|r| r.played.get(agent).copied().flatten().is_some()) {
                for (arm, total) in totals.iter_mut().enumerate() {
                    *total += regularized(env, agent, r, arm)?;
                }
            }
            let mut best = FixedArm { arm: 0, value: totals[0] };
            for (arm, &value) in totals.iter().enumerate().skip(1) {
                if value > best.value {
                    best = FixedArm { arm, value };
                }
            }
            Ok(best)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub round: u32,
    pub instant: f64,
    pub cumulative: f64,
    pub violation: f64,
    pub cumulative_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries {
    pub points: Vec<RegretPoint>,
    /// Final regret of each agent; these sum to the total.
    pub per_agent: Vec<f64>,
}

impl RegretSeries {
    pub fn total_regret(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.cumulative)
    }

    pub fn total_violation(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.cumulative_violation)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Regret of the logged plays against each agent's hindsight arm, summed over
/// agents, alongside the cumulative budget violation.
pub fn regret_curve<E: ArmEnvironment + ?Sized>(env: &E, log: &PlayLog, oracle: &[FixedArm]) -> Result<RegretSeries> {
    if oracle.len() != env.agents() {
        return Err(Error::Dimension(format!(
            "oracle has {} agents, environment {}",
            oracle.len(),
            env.agents()
        )));
    }
    let mut per_agent = vec![0.0; env.agents()];
    let mut points = Vec::with_capacity(log.rounds.len());
    let (mut cumulative, mut cumulative_violation) = (0.0, 0.0);
    for r in &log.rounds {
        let mut instant = 0.0;
        for (agent, played) in r.played.iter().enumerate() {
            if let Some(arm) = *played {
                let gap = regularized(env, agent, r, oracle[agent].arm)? - regularized(env, agent, r, arm)?;
                per_agent[agent] += gap;
                instant += gap;
            }
        }
        cumulative += instant;
        let violation = r.violation();
        cumulative_violation += violation;
        points.push(RegretPoint {
            round: r.round.get(),
            instant,
            cumulative,
            violation,
            cumulative_violation,
        });
    }
    Ok(RegretSeries { points, per_agent })
}

/// One horizon's (median) regret and violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub horizon: u32,
    pub regret: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub horizons: Vec<u32>,
    /// `Regret(M) / √(M ln M)`.
    pub regret_ratios: Vec<f64>,
    /// `V(M) / √M`.
    pub violation_ratios: Vec<f64>,
    /// `V(M) / M`.
    pub violation_rates: Vec<f64>,
    pub band: f64,
    pub regret_bounded: bool,
    pub violation_bounded: bool,
    pub violation_rate_decreasing: bool,
}

impl ScalingReport {
    pub fn passed(&self) -> bool {
        self.regret_bounded && self.violation_bounded
    }
}

/// True when every value lies within a factor `band` of every other
/// (`max ≤ band · min`). An all-zero sequence is bounded; a mix of zero and
/// nonzero values, or negative values, is not.
pub fn within_band(values: &[f64], band: f64) -> bool {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return false;
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max == 0.0 || (min > 0.0 && max <= band * min)
}

pub fn scaling_check(points: &[ScalingPoint], band: f64) -> Result<ScalingReport> {
    if points.is_empty() {
        return Err(Error::Empty("scaling points"));
    }
    if let Some(p) = points.iter().find(|p| p.horizon < 2) {
        return Err(Error::InvalidArgument(format!("horizon {} is too short", p.horizon)));
    }
    let m = |p: &ScalingPoint| p.horizon as f64;
    let regret_ratios: Vec<f64> = points.iter().map(|p| p.regret / (m(p) * m(p).ln()).sqrt()).collect();
    let violation_ratios: Vec<f64> = points.iter().map(|p| p.violation / m(p).sqrt()).collect();
    let violation_rates: Vec<f64> = points.iter().map(|p| p.violation / m(p)).collect();
    Ok(ScalingReport {
        horizons: points.iter().map(|p| p.horizon).collect(),
        regret_bounded: within_band(&regret_ratios, band),
        violation_bounded: within_band(&violation_ratios, band),
        violation_rate_decreasing: violation_rates.windows(2).all(|w| w[1] < w[0]),
        regret_ratios,
        violation_ratios,
        violation_rates,
        band,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Stationary synthetic instance: every agent sees the same arm means,
/// deterministic per-arm energies and bounded uniform reward noise. The round
/// budget is shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryInstance {
    pub agents: usize,
    pub reward_means: Vec<f64>,
    pub energies: Vec<f64>,
    /// Half-width of the uniform reward noise.
    pub noise: f64,
    pub budget: f64,
    pub seed: u64,
}

impl StationaryInstance {
    /// Three agents, four arms. The budget equals three pulls of arm 2, so the
    /// constrained optimum sits exactly on the budget and arm 3 is the
    /// unconstrained favourite.
    pub fn default_with_seed(seed: u64) -> Self {
        StationaryInstance {
            agents: 3,
            reward_means: vec![0.30, 0.55, 0.70, 0.80],
            energies: vec![0.2, 0.4, 0.6, 0.8],
            noise: 0.2,
            budget: 3.0 * 0.6,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 || self.reward_means.is_empty() || self.reward_means.len() != self.energies.len() {
            return Err(Error::InvalidArgument("instance needs agents and matching arm vectors".into()));
        }
        let bounded = self
            .reward_means
            .iter()
            .all(|r| *r - self.noise >= 0.0 && *r + self.noise <= 1.0);
        if !bounded || self.energies.iter().any(|e| *e < 0.0) || self.budget < 0.0 {
            return Err(Error::InvalidArgument("rewards must stay in [0,1] and energies ≥ 0".into()));
        }
        Ok(())
    }

    /// Arm with the lowest mean reward.
    pub fn worst_arm(&self) -> usize {
        (0..self.reward_means.len())
            .min_by(|&a, &b| self.reward_means[a].total_cmp(&self.reward_means[b]))
            .unwrap_or(0)
    }
}

impl ArmEnvironment for StationaryInstance {
    fn agents(&self) -> usize {
        self.agents
    }

    fn arms(&self) -> usize {
        self.reward_means.len()
    }

    fn outcome(&self, agent: usize, round: RoundIndex, arm: usize) -> Result<(f64, f64)> {
        let mean = *self
            .reward_means
            .get(arm)
            .ok_or_else(|| Error::InvalidArgument(format!("arm {arm} out of range")))?;
        let mut rng = keyed(self.seed, Stream::Bandit, [agent as u64, round.get() as u64, arm as u64]);
        let noise = if self.noise > 0.0 { rng.random_range(-self.noise..=self.noise) } else { 0.0 };
        Ok(((mean + noise).clamp(0.0, 1.0), self.energies[arm]))
    }
}

/// Policies for the synthetic scaling experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynthPolicy {
    UcbDual,
    /// Linear-regret control.
    AlwaysWorst,
    Uniform,
    Fixed(usize),
}

/// Bandit tuning for synthetic runs; `ω = omega_c / √M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthTuning {
    pub omega_c: f64,
    pub epsilon: f64,
}

impl Default for SynthTuning {
    fn default() -> Self {
        SynthTuning { omega_c: 1.0, epsilon: 0.5 }
    }
}

/// Plays `policy` for `horizon` rounds with one shared price, logging choices.
pub fn simulate(
    instance: &StationaryInstance,
    policy: SynthPolicy,
    horizon: u32,
    tuning: SynthTuning,
) -> Result<PlayLog> {
    instance.validate()?;
    let arms = instance.arms();
    if let SynthPolicy::Fixed(a) = policy {
        if a >= arms {
            return Err(Error::InvalidArgument(format!("fixed arm {a} out of range")));
        }
    }
    let phi = RankSet::from_values(&(1..=arms as u32).collect::<Vec<_>>())?;
    let dual = DualState::for_horizon(tuning.omega_c, horizon, tuning.epsilon)?;
    let mut ucb = UcbDual::new(phi, instance.agents, dual);
    let mut log = PlayLog { rounds: Vec::with_capacity(horizon as usize) };
    let mut round = RoundIndex::first();
    for _ in 0..horizon {
        let lambda = ucb.lambda();
        let mut played = Vec::with_capacity(instance.agents);
        let mut energy = 0.0;
        for agent in 0..instance.agents {
            let arm = match policy {
                SynthPolicy::UcbDual => ucb.choose_arm(agent, round),
                SynthPolicy::AlwaysWorst => instance.worst_arm(),
                SynthPolicy::Fixed(a) => a,
                SynthPolicy::Uniform => {
                    keyed(instance.seed, Stream::Policy, [agent as u64, round.get() as u64, 0]).random_range(0..arms)
                }
            };
            let (r, e) = instance.outcome(agent, round, arm)?;
            let rank = ucb.rank_set().get(arm);
            ucb.observe(agent, rank, r, e)?;
            energy += e;
            played.push(Some(arm));
        }
        log.rounds.push(PlayRound {
            round,
            lambda,
            budget: instance.budget,
            energy,
            played,
        });
        ucb.end_round(energy, instance.budget);
        round = round.next();
    }
    Ok(log)
}

/// Final regret and violation of one synthetic run.
pub fn synthetic_point(
    instance: &StationaryInstance,
    policy: SynthPolicy,
    horizon: u32,
    tuning: SynthTuning,
) -> Result<ScalingPoint> {
    let log = simulate(instance, policy, horizon, tuning)?;
    let oracle = oracle_best_fixed(instance, &log, DEFAULT_ORACLE_LIMIT)?;
    let series = regret_curve(instance, &log, &oracle)?;
    Ok(ScalingPoint {
        horizon,
        regret: series.total_regret(),
        violation: series.total_violation(),
    })
}

/// Per-horizon medians over `seeds` instances (seed `s` uses
/// `StationaryInstance::default_with_seed(base_seed + s)`).
pub fn scaling_experiment(
    policy: SynthPolicy,
    horizons: &[u32],
    seeds: u32,
    base_seed: u64,
    tuning: SynthTuning,
) -> Result<Vec<ScalingPoint>> {
    use rayon::prelude::*;
    if seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    horizons
        .iter()
        .map(|&horizon| {
            let runs: Vec<ScalingPoint> = (0..seeds)
                .into_par_iter()
                .map(|s| {
                    let inst = StationaryInstance::default_with_seed(base_seed + s as u64);
                    synthetic_point(&inst, policy, horizon, tuning)
                })
                .collect::<Result<_>>()?;
            Ok(ScalingPoint {
                horizon,
                regret: median(&runs.iter().map(|p| p.regret).collect::<Vec<_>>()),
                violation: median(&runs.iter().map(|p| p.violation).collect::<Vec<_>>()),
            })
        })
        .collect()
}
