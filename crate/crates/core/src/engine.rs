//! The per-round simulation loop.
//!
//! Each round, every task independently: finds its home vehicles inside its
//! RSU zone at the task's own clock, lets the policy pick ranks, realizes the
//! four-stage costs and surrogate accuracy, routes clients predicted to leave
//! through the fallback policy, truncates and aggregates the surviving
//! updates, and feeds the bandit and the dual price. The inter-task allocator
//! then closes the round. Tasks run in parallel; results are gathered in task
//! order so runs are bitwise reproducible.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{reward, DualState, RankDecision, UcbDual};
use crate::budget::{BudgetSnapshot, EnergyAllocator};
use crate::config::{Task, ValidatedScenario};
use crate::costmodel::{
    adapter_bits, aggregation_cost, complexity, compute_cost, downlink_cost, round_totals, uplink_cost, ChannelState,
    StageCost, StageCosts,
};
use crate::domain::{Rank, RoundIndex, TaskId, VehicleId};
use crate::error::{Error, Result};
use crate::lowrank::{aggregate, svd_truncate, DenseMatrix};
use crate::metrics::{oracle_best_fixed, regret_curve, ArmEnvironment, PlayLog, PlayRound, RegretSeries};
use crate::mobility::{
    choose_fallback, coverage_at, departure_time, fallback_costs, haversine_m, predict_departure, FallbackDecision,
    FallbackInputs, FallbackStrategy, MigrationCost,
};
use crate::rng::{keyed, Stream};

/// Rank-selection policy; everything else in a run is shared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    UcbDual,
    FixedRank(Rank),
    RandomRank,
    /// Clairvoyant per-round argmax of `R − λE` over the true outcomes.
    Oracle,
    /// A fixed rank per vehicle, indexed by vehicle id.
    Assigned(Vec<Rank>),
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::UcbDual => write!(f, "ucb_dual"),
            Policy::FixedRank(r) => write!(f, "fixed_rank({r})"),
            Policy::RandomRank => write!(f, "random_rank"),
            Policy::Oracle => write!(f, "oracle"),
            Policy::Assigned(ranks) => {
                let list: Vec<String> = ranks.iter().map(|r| r.to_string()).collect();
                write!(f, "assigned({})", list.join(" "))
            }
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    /// `ucb_dual`, `random_rank` (or `random`), `oracle`, `fixed_rank(8)` (or `fixed:8`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let fixed = s
            .strip_prefix("fixed_rank(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("fixed:"));
        if let Some(r) = fixed {
            let v: u32 = r
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad fixed rank in `{s}`")))?;
            return Ok(Policy::FixedRank(Rank::new(v)?));
        }
        match s {
            "ucb_dual" | "ucb" => Ok(Policy::UcbDual),
            "random_rank" | "random" => Ok(Policy::RandomRank),
            "oracle" => Ok(Policy::Oracle),
            _ => Err(Error::InvalidArgument(format!("unknown policy `{s}`"))),
        }
    }
}

/// Nominal outcome of one client at one rank: what the bandit observes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nominal {
    pub costs: StageCosts,
    pub accuracy: f64,
    pub reward: f64,
}

impl Nominal {
    pub fn latency(&self) -> f64 {
        self.costs.latency()
    }

    pub fn energy(&self) -> f64 {
        self.costs.energy()
    }
}

/// Keyed view of a scenario's randomness: every draw depends only on
/// `(seed, entity, round)`, so any rank can be evaluated counterfactually.
#[derive(Debug, Clone, Copy)]
pub struct Environment<'a> {
    pub scenario: &'a ValidatedScenario,
    pub seed: u64,
}

impl<'a> Environment<'a> {
    pub fn new(scenario: &'a ValidatedScenario, seed: u64) -> Self {
        Environment { scenario, seed }
    }

    /// Log-normal channel gain between a vehicle and an RSU in round `m`.
    pub fn channel_gain(&self, vehicle: VehicleId, task: &Task, m: RoundIndex) -> f64 {
        let ch = &self.scenario.config().channel;
        let mut rng = keyed(
            self.seed,
            Stream::Channel,
            [vehicle.index() as u64, task.rsu.index() as u64, m.get() as u64],
        );
        let z: f64 = StandardNormal.sample(&mut rng);
        ch.gain_median * (ch.gain_sigma * z).exp()
    }

    fn channel(&self, vehicle: VehicleId, task: &Task, m: RoundIndex) -> ChannelState {
        let ch = &self.scenario.config().channel;
        ChannelState {
            bandwidth: ch.bandwidth_hz,
            tx_power: self.scenario.rsus[task.rsu.index()].tx_power,
            channel_gain: self.channel_gain(vehicle, task, m),
            noise_power: ch.noise_power_w,
        }
    }

    fn payload(&self, rank: Rank) -> f64 {
        let model = &self.scenario.config().model;
        adapter_bits(rank, model.adapter_d, model.adapter_k, model.precision_bits)
    }

    /// Stage costs, surrogate accuracy and reward of `vehicle` training `task`
    /// at `rank` in round `m`.
    pub fn nominal(&self, task: &Task, vehicle: VehicleId, m: RoundIndex, rank: Rank) -> Result<Nominal> {
        let v = &self.scenario.vehicles[vehicle.index()];
        let ch = self.channel(vehicle, task, m);
        let bits = self.payload(rank);
        let costs = StageCosts {
            downlink: downlink_cost(bits, &ch)?,
            compute: compute_cost(&v.profile, complexity(rank, self.scenario.reference_rank())),
            uplink: uplink_cost(bits, &ch, v.profile.tx_power)?,
        };
        let mut rng = keyed(
            self.seed,
            Stream::Accuracy,
            [task.id.index() as u64, vehicle.index() as u64, m.get() as u64],
        );
        let accuracy = task.curve.accuracy(rank, m, &mut rng);
        Ok(Nominal {
            costs,
            accuracy,
            reward: reward(costs.latency(), accuracy, &self.scenario.weights()),
        })
    }

    /// Adapter hand-over from `from` to `to` through the RSU.
    pub fn migration_cost(&self, task: &Task, from: VehicleId, to: VehicleId, m: RoundIndex, rank: Rank) -> Result<MigrationCost> {
        let bits = self.payload(rank);
        let up = uplink_cost(
            bits,
            &self.channel(from, task, m),
            self.scenario.vehicles[from.index()].profile.tx_power,
        )?;
        let down = downlink_cost(bits, &self.channel(to, task, m))?;
        Ok(MigrationCost {
            latency: up.latency + down.latency,
            energy: up.energy + down.energy,
        })
    }
}

/// Counterfactual outcomes of one task's clients, for hindsight oracles.
pub struct TaskEnvironment<'a> {
    pub env: Environment<'a>,
    pub task: &'a Task,
}

impl ArmEnvironment for TaskEnvironment<'_> {
    fn agents(&self) -> usize {
        self.task.clients.len()
    }

    fn arms(&self) -> usize {
        self.env.scenario.ranks.len()
    }

    fn outcome(&self, agent: usize, round: RoundIndex, arm: usize) -> Result<(f64, f64)> {
        let rank = self.env.scenario.ranks.get(arm);
        let n = self.env.nominal(self.task, self.task.clients[agent], round, rank)?;
        Ok((n.reward, n.energy()))
    }
}

/// How a participant's round ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientOutcome {
    Completed,
    EarlyUpload,
    Migrated,
    /// Chosen abandonment, or a migration whose target left in turn.
    Abandoned,
    /// Left coverage without a departure prediction; the update is lost.
    Lost,
}

impl ClientOutcome {
    pub fn contributes(self) -> bool {
        matches!(self, ClientOutcome::Completed | ClientOutcome::EarlyUpload | ClientOutcome::Migrated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub vehicle: VehicleId,
    /// Index within the task's client list.
    pub client: usize,
    /// Nominal outcome, as observed by the bandit.
    pub decision: RankDecision,
    /// Costs actually incurred after any fallback.
    pub realized: StageCosts,
    /// Accuracy credited to the aggregate; 0 when the update was dropped.
    pub accuracy: f64,
    /// Realized reward `γ·accuracy − α·τ_realized`.
    pub reward: f64,
    pub outcome: ClientOutcome,
    /// Share of local work done before leaving coverage (1 if it stayed).
    pub progress: f64,
    pub fallback: Option<FallbackDecision>,
    pub migration_target: Option<VehicleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRound {
    pub task: TaskId,
    /// Task clock at the start of the round, s.
    pub clock: f64,
    /// Budget `E_t^m` the dual price is charged against, J.
    pub budget: f64,
    /// Σ realized client energy, J.
    pub client_energy: f64,
    pub aggregation: StageCost,
    /// Client plus aggregation energy, J.
    pub energy: f64,
    /// Straggler-bound round latency `τ^t` (idle advance when empty), s.
    pub latency: f64,
    /// Mean credited accuracy over contributing clients.
    pub mean_accuracy: f64,
    /// Σ realized client rewards.
    pub reward: f64,
    /// `γ·mean_accuracy − α·τ^t`.
    pub task_reward: f64,
    /// Price in force when ranks were chosen.
    pub lambda: f64,
    pub clients: Vec<ClientRecord>,
}

impl TaskRound {
    pub fn violation(&self) -> f64 {
        (self.client_energy - self.budget).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub tasks: Vec<TaskRound>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FallbackCounts {
    pub early_upload: u32,
    pub migrated: u32,
    pub abandoned: u32,
    pub lost: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub seed: u64,
    pub rounds: u32,
    /// Σ realized client rewards over rounds and tasks.
    pub cumulative_reward: f64,
    /// Σ task-level rewards (straggler latency).
    pub cumulative_task_reward: f64,
    pub mean_accuracy: f64,
    pub mean_latency: f64,
    pub total_energy: f64,
    pub total_budget: f64,
    /// Σ over tasks and rounds of `[client energy − budget]₊`.
    pub violation: f64,
    pub decisions: u32,
    pub fallbacks: FallbackCounts,
    /// Hindsight regret summed over tasks, when the oracle limit allows.
    pub regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub policy: Policy,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    pub budget_trace: Vec<BudgetSnapshot>,
    /// Final aggregated update of each task.
    pub updates: Vec<DenseMatrix>,
    pub summary: RunSummary,
}

struct TaskState {
    clock: f64,
    bandit: UcbDual,
    global: DenseMatrix,
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

struct Participant {
    vehicle: VehicleId,
    client: usize,
    rank: Rank,
    nominal: Nominal,
}

fn choose_rank(
    policy: &Policy,
    env: &Environment,
    task: &Task,
    state: &TaskState,
    client: usize,
    vehicle: VehicleId,
    m: RoundIndex,
) -> Result<Rank> {
    let ranks = &env.scenario.ranks;
    Ok(match policy {
        Policy::UcbDual => state.bandit.choose(client, m),
        Policy::FixedRank(r) => *r,
        Policy::Assigned(list) => *list
            .get(vehicle.index())
            .ok_or_else(|| Error::InvalidArgument(format!("no assigned rank for vehicle {vehicle}")))?,
        Policy::RandomRank => {
            let mut rng = keyed(
                env.seed,
                Stream::Policy,
                [task.id.index() as u64, vehicle.index() as u64, m.get() as u64],
            );
            ranks.get(rng.random_range(0..ranks.len()))
        }
        Policy::Oracle => {
            let lambda = state.bandit.lambda();
            let mut best: Option<(Rank, f64)> = None;
            for r in ranks.iter() {
                let n = env.nominal(task, vehicle, m, r)?;
                let score = n.reward - lambda * n.energy();
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((r, score));
                }
            }
            best.expect("rank set is non-empty").0
        }
    })
}

/// Idle vehicle closest to `near` that can take over a departing client.
fn migration_target(
    env: &Environment,
    task: &Task,
    now: f64,
    busy: &[VehicleId],
    near: VehicleId,
) -> Option<VehicleId> {
    let s = env.scenario;
    let zone = &s.rsus[task.rsu.index()].zone;
    let here = s.vehicles[near.index()].trajectory.position_at(now);
    s.vehicles
        .iter()
        .filter(|v| v.task != Some(task.id) && !busy.contains(&v.id))
        .filter(|v| coverage_at(&v.trajectory, zone, now))
        .filter(|v| match v.task {
            // serving its own task elsewhere
            Some(t) => !coverage_at(&v.trajectory, &s.rsus[s.tasks[t.index()].rsu.index()].zone, now),
            None => true,
        })
        .map(|v| (v.id, haversine_m(here, v.trajectory.position_at(now))))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(id, _)| id)
}

fn run_task_round(
    env: &Environment,
    policy: &Policy,
    task: &Task,
    state: &mut TaskState,
    budget: f64,
    m: RoundIndex,
) -> Result<TaskRound> {
    let s = env.scenario;
    let cfg = s.config();
    let w = s.weights();
    let zone = &s.rsus[task.rsu.index()].zone;
    let now = state.clock;
    let lambda = state.bandit.lambda();
    let ctx = |e: Error, client: Option<usize>| e.in_round(m.get(), task.id.index(), client);

    let mut participants = Vec::new();
    for (client, &vehicle) in task.clients.iter().enumerate() {
        if !coverage_at(&s.vehicles[vehicle.index()].trajectory, zone, now) {
            continue;
        }
        let rank = choose_rank(policy, env, task, state, client, vehicle, m).map_err(|e| ctx(e, Some(client)))?;
        let nominal = env.nominal(task, vehicle, m, rank).map_err(|e| ctx(e, Some(client)))?;
        participants.push(Participant { vehicle, client, rank, nominal });
    }

    if participants.is_empty() {
        state.bandit.end_round(0.0, budget);
        state.clock += cfg.scenario.idle_round_s;
        return Ok(TaskRound {
            task: task.id,
            clock: now,
            budget,
            client_energy: 0.0,
            aggregation: StageCost::ZERO,
            energy: 0.0,
            latency: cfg.scenario.idle_round_s,
            mean_accuracy: 0.0,
            reward: 0.0,
            task_reward: 0.0,
            lambda,
            clients: Vec::new(),
        });
    }

    let nominal_costs: Vec<StageCosts> = participants.iter().map(|p| p.nominal.costs).collect();
    let agg_nominal = aggregation_cost(&s.rsus[task.rsu.index()].profile, participants.len());
    let horizon = match cfg.mobility.departure_horizon_s {
        Some(h) => h,
        None => round_totals(&nominal_costs, agg_nominal).map_err(|e| ctx(e, None))?.latency,
    };

    let mut busy: Vec<VehicleId> = Vec::new();
    let mut clients = Vec::with_capacity(participants.len());
    for p in &participants {
        let traj = &s.vehicles[p.vehicle.index()].trajectory;
        let tau = p.nominal.latency();
        let mut flagged = predict_departure(traj, zone, now, horizon);
        if cfg.mobility.prediction_flip_prob > 0.0 {
            let mut rng = keyed(env.seed, Stream::Prediction, [p.vehicle.index() as u64, m.get() as u64, 0]);
            if rng.random::<f64>() < cfg.mobility.prediction_flip_prob {
                flagged = !flagged;
            }
        }
        let progress = match departure_time(traj, zone, now, tau) {
            Some(exit) if tau > 0.0 => ((exit - now) / tau).clamp(0.0, 1.0),
            Some(_) => 0.0,
            None => 1.0,
        };
        let partial = p.nominal.costs.scaled(progress);
        let (mut realized, mut accuracy, mut outcome) = (p.nominal.costs, p.nominal.accuracy, ClientOutcome::Completed);
        let (mut fallback, mut target) = (None, None);

        if flagged {
            let candidate = migration_target(env, task, now, &busy, p.vehicle);
            let migration = match candidate {
                Some(t) => Some(
                    env.migration_cost(task, p.vehicle, t, m, p.rank)
                        .map_err(|e| ctx(e, Some(p.client)))?,
                ),
                None => None,
            };
            let inputs = FallbackInputs {
                q: progress * p.nominal.accuracy,
                q_star: task.q_threshold,
                migration,
                wasted_energy: partial.energy(),
            };
            let decision = choose_fallback(fallback_costs(&inputs, &w), inputs);
            fallback = Some(decision);
            match decision.strategy {
                FallbackStrategy::EarlyUpload => {
                    realized = partial;
                    accuracy = inputs.q;
                    outcome = ClientOutcome::EarlyUpload;
                }
                FallbackStrategy::Migration => {
                    let (t, mig) = (candidate.expect("migration implies a target"), migration.expect("costed"));
                    busy.push(t);
                    target = Some(t);
                    let overhead = StageCost { latency: mig.latency, energy: mig.energy };
                    let done_by = tau + mig.latency;
                    let stays = departure_time(&s.vehicles[t.index()].trajectory, zone, now, done_by).is_none();
                    if stays {
                        realized.uplink = realized.uplink.plus(overhead);
                        outcome = ClientOutcome::Migrated;
                    } else {
                        realized = partial;
                        realized.uplink = realized.uplink.plus(overhead);
                        accuracy = 0.0;
                        outcome = ClientOutcome::Abandoned;
                    }
                }
                FallbackStrategy::Abandon => {
                    realized = partial;
                    accuracy = 0.0;
                    outcome = ClientOutcome::Abandoned;
                }
            }
        } else if progress < 1.0 {
            realized = partial;
            accuracy = 0.0;
            outcome = ClientOutcome::Lost;
        }

        clients.push(ClientRecord {
            vehicle: p.vehicle,
            client: p.client,
            decision: RankDecision {
                client: p.vehicle,
                rank: p.rank,
                reward: p.nominal.reward,
                energy: p.nominal.energy(),
                latency: tau,
                accuracy: p.nominal.accuracy,
            },
            realized,
            accuracy,
            reward: reward(realized.latency(), accuracy, &w),
            outcome,
            progress,
            fallback,
            migration_target: target,
        });
    }

    let contributors: Vec<&ClientRecord> = clients.iter().filter(|c| c.outcome.contributes()).collect();
    let aggregation = aggregation_cost(&s.rsus[task.rsu.index()].profile, contributors.len());
    let realized: Vec<StageCosts> = clients.iter().map(|c| c.realized).collect();
    let totals = round_totals(&realized, aggregation).map_err(|e| ctx(e, None))?;
    let client_energy: f64 = realized.iter().map(StageCosts::energy).sum();
    let mean_accuracy = if contributors.is_empty() {
        0.0
    } else {
        contributors.iter().map(|c| c.accuracy).sum::<f64>() / contributors.len() as f64
    };

    if !contributors.is_empty() {
        let model = &cfg.model;
        let mut updates = Vec::with_capacity(contributors.len());
        for c in &contributors {
            let mut rng = keyed(
                env.seed,
                Stream::LocalUpdate,
                [task.id.index() as u64, c.vehicle.index() as u64, m.get() as u64],
            );
            let mut local = gaussian_matrix(model.matrix_d, model.matrix_k, model.local_noise, &mut rng);
            local.add_scaled(&state.global, 1.0).map_err(|e| ctx(e, Some(c.client)))?;
            let adapter = svd_truncate(&local, c.decision.rank).map_err(|e| ctx(e, Some(c.client)))?;
            updates.push((adapter, s.vehicles[c.vehicle.index()].profile.dataset_size));
        }
        state.global = aggregate(&updates).map_err(|e| ctx(e, None))?;
    }

    for c in &clients {
        state
            .bandit
            .observe(c.client, c.decision.rank, c.decision.reward, c.decision.energy)
            .map_err(|e| ctx(e, Some(c.client)))?;
    }
    state.bandit.end_round(client_energy, budget);
    state.clock += totals.latency;

    Ok(TaskRound {
        task: task.id,
        clock: now,
        budget,
        client_energy,
        aggregation,
        energy: totals.energy,
        latency: totals.latency,
        mean_accuracy,
        reward: clients.iter().map(|c| c.reward).sum(),
        task_reward: reward(totals.latency, mean_accuracy, &w),
        lambda,
        clients,
    })
}

/// Runs the scenario under its configured seed.
pub fn run(scenario: &ValidatedScenario, policy: &Policy) -> Result<RunResult> {
    run_with_seed(scenario, policy, scenario.seed())
}

pub fn run_with_seed(scenario: &ValidatedScenario, policy: &Policy, seed: u64) -> Result<RunResult> {
    let cfg = scenario.config();
    if let Policy::FixedRank(r) = policy {
        if scenario.ranks.index_of(*r).is_none() {
            return Err(Error::InvalidArgument(format!("fixed rank {r} is not in the candidate set")));
        }
    }
    if let Policy::Assigned(list) = policy {
        if list.iter().any(|r| scenario.ranks.index_of(*r).is_none()) {
            return Err(Error::InvalidArgument("assigned ranks must come from the candidate set".into()));
        }
    }
    let env = Environment::new(scenario, seed);
    let dual = DualState::for_horizon(cfg.bandit.omega_c, cfg.scenario.rounds, cfg.bandit.epsilon)?;
    let mut states: Vec<TaskState> = scenario
        .tasks
        .iter()
        .map(|t| {
            let mut rng = keyed(seed, Stream::GlobalInit, [t.id.index() as u64, 0, 0]);
            TaskState {
                clock: 0.0,
                bandit: UcbDual::new(scenario.ranks.clone(), t.clients.len(), dual),
                global: gaussian_matrix(cfg.model.matrix_d, cfg.model.matrix_k, cfg.model.delta_scale, &mut rng),
            }
        })
        .collect();
    let mut allocator = EnergyAllocator::new(cfg.budget, scenario.tasks.len())?;
    let mut records = Vec::with_capacity(cfg.scenario.rounds as usize);
    let mut budget_trace = Vec::new();

    let mut m = RoundIndex::first();
    for _ in 0..cfg.scenario.rounds {
        let budgets: Vec<f64> = (0..scenario.tasks.len()).map(|t| allocator.allocation(t)).collect();
        let tasks: Vec<TaskRound> = states
            .par_iter_mut()
            .zip(scenario.tasks.par_iter())
            .zip(budgets.par_iter())
            .map(|((state, task), &budget)| run_task_round(&env, policy, task, state, budget, m))
            .collect::<Result<_>>()?;
        for tr in &tasks {
            allocator.record(tr.task.index(), tr.client_energy, tr.task_reward);
        }
        if let Some(snaps) = allocator.end_round(m.get()).map_err(|e| e.in_round(m.get(), 0, None))? {
            budget_trace.extend(snaps);
        }
        records.push(RoundRecord { round: m.get(), tasks });
        m = m.next();
    }

    let mut result = RunResult {
        policy: policy.clone(),
        seed,
        summary: summarize(policy, seed, &records),
        records,
        budget_trace,
        updates: states.into_iter().map(|s| s.global).collect(),
    };
    result.summary.regret = match task_regrets(scenario, &result) {
        Ok(series) => Some(series.iter().map(RegretSeries::total_regret).sum()),
        Err(Error::OracleLimit { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(result)
}

fn summarize(policy: &Policy, seed: u64, records: &[RoundRecord]) -> RunSummary {
    let task_rounds = || records.iter().flat_map(|r| r.tasks.iter());
    let mut fallbacks = FallbackCounts::default();
    for c in task_rounds().flat_map(|t| t.clients.iter()) {
        match c.outcome {
            ClientOutcome::Completed => {}
            ClientOutcome::EarlyUpload => fallbacks.early_upload += 1,
            ClientOutcome::Migrated => fallbacks.migrated += 1,
            ClientOutcome::Abandoned => fallbacks.abandoned += 1,
            ClientOutcome::Lost => fallbacks.lost += 1,
        }
    }
    let active: Vec<&TaskRound> = task_rounds().filter(|t| !t.clients.is_empty()).collect();
    let with_updates: Vec<&&TaskRound> = active
        .iter()
        .filter(|t| t.clients.iter().any(|c| c.outcome.contributes()))
        .collect();
    let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| if n == 0 { 0.0 } else { xs.sum::<f64>() / n as f64 };
    RunSummary {
        policy: policy.to_string(),
        seed,
        rounds: records.len() as u32,
        cumulative_reward: task_rounds().map(|t| t.reward).sum(),
        cumulative_task_reward: task_rounds().map(|t| t.task_reward).sum(),
        mean_accuracy: mean(&mut with_updates.iter().map(|t| t.mean_accuracy), with_updates.len()),
        mean_latency: mean(&mut active.iter().map(|t| t.latency), active.len()),
        total_energy: task_rounds().map(|t| t.energy).sum(),
        total_budget: task_rounds().map(|t| t.budget).sum(),
        violation: task_rounds().map(TaskRound::violation).sum(),
        decisions: active.iter().map(|t| t.clients.len() as u32).sum(),
        fallbacks,
        regret: None,
    }
}

/// The play log of one task, for the metrics oracles.
pub fn task_play_log(scenario: &ValidatedScenario, result: &RunResult, task: TaskId) -> PlayLog {
    let n = scenario.tasks[task.index()].clients.len();
    let rounds = result
        .records
        .iter()
        .map(|r| {
            let tr = &r.tasks[task.index()];
            let mut played = vec![None; n];
            for c in &tr.clients {
                played[c.client] = scenario.ranks.index_of(c.decision.rank);
            }
            PlayRound {
                round: RoundIndex::new(r.round).expect("records are 1-based"),
                lambda: tr.lambda,
                budget: tr.budget,
                energy: tr.client_energy,
                played,
            }
        })
        .collect();
    PlayLog { rounds }
}

/// Hindsight regret series of every task under the run's own `λ` sequence.
pub fn task_regrets(scenario: &ValidatedScenario, result: &RunResult) -> Result<Vec<RegretSeries>> {
    let env = Environment::new(scenario, result.seed);
    let limit = scenario.config().metrics.oracle_limit;
    scenario
        .tasks
        .iter()
        .map(|task| {
            let tenv = TaskEnvironment { env, task };
            let log = task_play_log(scenario, result, task.id);
            let oracle = oracle_best_fixed(&tenv, &log, limit)?;
            regret_curve(&tenv, &log, &oracle)
        })
        .collect()
}

/// Runs every policy on the same scenario and seed, in parallel.
pub fn run_comparative(scenario: &ValidatedScenario, policies: &[Policy], seed: u64) -> Result<Vec<RunResult>> {
    policies.par_iter().map(|p| run_with_seed(scenario, p, seed)).collect()
}

#[derive(Debug, Serialize)]
struct TaskRoundRow<'a> {
    round: u32,
    task: &'a str,
    clock_s: f64,
    participants: usize,
    budget_j: f64,
    client_energy_j: f64,
    energy_j: f64,
    latency_s: f64,
    mean_accuracy: f64,
    reward: f64,
    task_reward: f64,
    lambda: f64,
}

#[derive(Debug, Serialize)]
struct DecisionRow<'a> {
    round: u32,
    task: &'a str,
    vehicle: &'a str,
    rank: u32,
    nominal_reward: f64,
    nominal_energy_j: f64,
    nominal_latency_s: f64,
    nominal_accuracy: f64,
    realized_energy_j: f64,
    realized_latency_s: f64,
    accuracy: f64,
    reward: f64,
    outcome: ClientOutcome,
    progress: f64,
    fallback_cost: Option<f64>,
    migration_target: Option<&'a str>,
}

impl RunResult {
    /// One row per (round, task).
    pub fn write_rounds_csv<W: std::io::Write>(&self, scenario: &ValidatedScenario, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            for t in &r.tasks {
                w.serialize(TaskRoundRow {
                    round: r.round,
                    task: &scenario.tasks[t.task.index()].name,
                    clock_s: t.clock,
                    participants: t.clients.len(),
                    budget_j: t.budget,
                    client_energy_j: t.client_energy,
                    energy_j: t.energy,
                    latency_s: t.latency,
                    mean_accuracy: t.mean_accuracy,
                    reward: t.reward,
                    task_reward: t.task_reward,
                    lambda: t.lambda,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One row per client decision.
    pub fn write_decisions_csv<W: std::io::Write>(&self, scenario: &ValidatedScenario, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            for t in &r.tasks {
                for c in &t.clients {
                    w.serialize(DecisionRow {
                        round: r.round,
                        task: &scenario.tasks[t.task.index()].name,
                        vehicle: &scenario.vehicles[c.vehicle.index()].name,
                        rank: c.decision.rank.get(),
                        nominal_reward: c.decision.reward,
                        nominal_energy_j: c.decision.energy,
                        nominal_latency_s: c.decision.latency,
                        nominal_accuracy: c.decision.accuracy,
                        realized_energy_j: c.realized.energy(),
                        realized_latency_s: c.realized.latency(),
                        accuracy: c.accuracy,
                        reward: c.reward,
                        outcome: c.outcome,
                        progress: c.progress,
                        fallback_cost: c.fallback.map(|f| f.cost),
                        migration_target: c.migration_target.map(|v| scenario.vehicles[v.index()].name.as_str()),
                    })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_budget_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.budget_trace {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}
