//! UCB-DUAL: decentralized constrained rank selection.
//!
//! Each client keeps its own per-rank estimates and picks
//! `argmax_η [R̂(η) − λ·Ê(η) + ε·√(ln m / (1 + N(η)))]`. The only shared state
//! is the task's energy price `λ`, updated once per round by projected
//! subgradient ascent on the budget deviation.

use serde::{Deserialize, Serialize};

use crate::domain::{Rank, RankSet, RoundIndex, VehicleId, Weights};
use crate::error::{Error, Result};

/// Per-client pull counts and running means, indexed by position in the rank set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    counts: Vec<u64>,
    mean_reward: Vec<f64>,
    mean_energy: Vec<f64>,
}

impl ArmStats {
    pub fn new(n_arms: usize) -> Self {
        ArmStats {
            counts: vec![0; n_arms],
            mean_reward: vec![0.0; n_arms],
            mean_energy: vec![0.0; n_arms],
        }
    }

    /// Stats seeded with prior estimates, each counted as `count` pulls.
    pub fn with_estimates(rewards: &[f64], energies: &[f64], count: u64) -> Self {
        assert_eq!(rewards.len(), energies.len());
        ArmStats {
            counts: vec![count; rewards.len()],
            mean_reward: rewards.to_vec(),
            mean_energy: energies.to_vec(),
        }
    }

    pub fn arms(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    pub fn mean_reward(&self, arm: usize) -> f64 {
        self.mean_reward[arm]
    }

    pub fn mean_energy(&self, arm: usize) -> f64 {
        self.mean_energy[arm]
    }

    /// Incremental mean update for one pull of `arm`.
    pub fn record(&mut self, arm: usize, reward: f64, energy: f64) {
        self.counts[arm] += 1;
        let n = self.counts[arm] as f64;
        self.mean_reward[arm] += (reward - self.mean_reward[arm]) / n;
        self.mean_energy[arm] += (energy - self.mean_energy[arm]) / n;
    }

    /// First never-pulled arm scanning cyclically from `offset`.
    pub fn first_unpulled(&self, offset: usize) -> Option<usize> {
        let n = self.arms();
        (0..n).map(|i| (offset + i) % n).find(|&a| self.counts[a] == 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub omega: f64,
    pub epsilon: f64,
}

impl DualState {
    pub fn new(omega: f64, epsilon: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidArgument(format!("dual step must be > 0, got {omega}")));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("exploration factor must be ≥ 0, got {epsilon}")));
        }
        Ok(DualState { lambda: 0.0, omega, epsilon })
    }

    /// Step size `ω = c / √M` for a horizon of `rounds`.
    pub fn for_horizon(c: f64, rounds: u32, epsilon: f64) -> Result<Self> {
        DualState::new(c / (rounds.max(1) as f64).sqrt(), epsilon)
    }
}

/// One client's choice in one round and what it measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub client: VehicleId,
    pub rank: Rank,
    pub reward: f64,
    pub energy: f64,
    pub latency: f64,
    pub accuracy: f64,
}

/// `R = −α·τ + γ·q`.
pub fn reward(tau: f64, q: f64, w: &Weights) -> f64 {
    -w.alpha * tau + w.gamma * q
}

/// `ε·√(ln m / (1 + n))`.
pub fn ucb_bonus(epsilon: f64, m: RoundIndex, n: u64) -> f64 {
    epsilon * ((m.get() as f64).ln() / (1.0 + n as f64)).sqrt()
}

/// Penalized optimistic score of one arm.
pub fn arm_score(stats: &ArmStats, arm: usize, lambda: f64, epsilon: f64, m: RoundIndex) -> f64 {
    stats.mean_reward(arm) - lambda * stats.mean_energy(arm) + ucb_bonus(epsilon, m, stats.count(arm))
}

/// Index of the best-scoring arm; the smallest index wins ties.
pub fn select_arm(stats: &ArmStats, lambda: f64, epsilon: f64, m: RoundIndex) -> usize {
    let mut best = 0;
    let mut best_score = arm_score(stats, 0, lambda, epsilon, m);
    for arm in 1..stats.arms() {
        let s = arm_score(stats, arm, lambda, epsilon, m);
        if s > best_score {
            best = arm;
            best_score = s;
        }
    }
    best
}

/// UCB-DUAL rank choice for one client from its own stats and the shared price.
pub fn select_rank(stats: &ArmStats, dual: &DualState, m: RoundIndex, phi: &RankSet) -> Result<Rank> {
    if phi.is_empty() || stats.arms() == 0 {
        return Err(Error::Empty("rank set"));
    }
    if stats.arms() != phi.len() {
        return Err(Error::Dimension(format!(
            "stats cover {} arms but the rank set has {}",
            stats.arms(),
            phi.len()
        )));
    }
    Ok(phi.get(select_arm(stats, dual.lambda, dual.epsilon, m)))
}

/// Folds a realized decision into the client's stats.
pub fn observe(stats: &mut ArmStats, decision: &RankDecision, phi: &RankSet) -> Result<()> {
    let arm = phi
        .index_of(decision.rank)
        .ok_or_else(|| Error::InvalidArgument(format!("rank {} not in the candidate set", decision.rank)))?;
    stats.record(arm, decision.reward, decision.energy);
    Ok(())
}

/// `λ ← [λ + ω·(ΣE − E_budget)]₊`.
pub fn dual_update(dual: DualState, total_energy: f64, budget: f64) -> DualState {
    DualState {
        lambda: (dual.lambda + dual.omega * (total_energy - budget)).max(0.0),
        ..dual
    }
}

/// UCB-DUAL state for one task: stats for each client plus the task's price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcbDual {
    phi: RankSet,
    stats: Vec<ArmStats>,
    dual: DualState,
}

impl UcbDual {
    pub fn new(phi: RankSet, n_clients: usize, dual: DualState) -> Self {
        let stats = (0..n_clients).map(|_| ArmStats::new(phi.len())).collect();
        UcbDual { phi, stats, dual }
    }

    pub fn dual(&self) -> DualState {
        self.dual
    }

    pub fn lambda(&self) -> f64 {
        self.dual.lambda
    }

    pub fn stats(&self, client: usize) -> &ArmStats {
        &self.stats[client]
    }

    pub fn rank_set(&self) -> &RankSet {
        &self.phi
    }

    /// Arm index for `client` in round `m`.
    ///
    /// Until every arm has been tried once the client pulls its untried arms in
    /// round-robin order, starting at `client mod |φ|` so that clients of one
    /// task spread over the rank set; afterwards the UCB-DUAL score decides.
    pub fn choose_arm(&self, client: usize, m: RoundIndex) -> usize {
        let stats = &self.stats[client];
        match stats.first_unpulled(client % self.phi.len()) {
            Some(arm) => arm,
            None => select_arm(stats, self.dual.lambda, self.dual.epsilon, m),
        }
    }

    pub fn choose(&self, client: usize, m: RoundIndex) -> Rank {
        self.phi.get(self.choose_arm(client, m))
    }

    pub fn observe(&mut self, client: usize, rank: Rank, reward: f64, energy: f64) -> Result<()> {
        let arm = self
            .phi
            .index_of(rank)
            .ok_or_else(|| Error::InvalidArgument(format!("rank {rank} not in the candidate set")))?;
        self.stats[client].record(arm, reward, energy);
        Ok(())
    }

    /// Round-end barrier: price the task's total client energy against its budget.
    pub fn end_round(&mut self, total_energy: f64, budget: f64) {
        self.dual = dual_update(self.dual, total_energy, budget);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(v: u32) -> RoundIndex {
        RoundIndex::new(v).unwrap()
    }

    #[test]
    fn reward_examples() {
        let w = |alpha, gamma| Weights { alpha, gamma, beta: 0.0 };
        assert_eq!(reward(5.0, 0.8, &w(0.0, 1.0)), 0.8);
        assert_eq!(reward(2.5, 0.3, &w(1.0, 0.0)), -2.5);
        assert!((reward(3.0, 0.9, &w(1.0, 10.0)) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn bonus_examples() {
        assert_eq!(ucb_bonus(3.0, m(1), 0), 0.0);
        let b = ucb_bonus(1.0, m(3), 0);
        assert!((b - 3f64.ln().sqrt()).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for n in 0..1000 {
            let b = ucb_bonus(1.0, m(50), n);
            assert!(b < prev);
            prev = b;
        }
        assert!(ucb_bonus(1.0, m(50), 1 << 40) < 1e-5);
    }

    #[test]
    fn select_examples() {
        let dual = |lambda, epsilon| DualState { lambda, omega: 1.0, epsilon };
        let single = RankSet::from_values(&[4]).unwrap();
        let s = ArmStats::with_estimates(&[0.1], &[9.0], 1);
        assert_eq!(select_rank(&s, &dual(5.0, 1.0), m(7), &single).unwrap().get(), 4);

        let phi = RankSet::from_values(&[1, 8]).unwrap();
        let s = ArmStats::with_estimates(&[0.2, 0.5], &[0.0, 0.0], 3);
        assert_eq!(select_rank(&s, &dual(0.0, 0.0), m(7), &phi).unwrap().get(), 8);

        // scores 0.5 − 0.1 = 0.4 versus 0.7 − 0.5 = 0.2
        let s = ArmStats::with_estimates(&[0.5, 0.7], &[0.1, 0.5], 3);
        assert_eq!(select_rank(&s, &dual(1.0, 0.0), m(7), &phi).unwrap().get(), 1);
    }

    #[test]
    fn ties_pick_smallest_rank() {
        let phi = RankSet::from_values(&[1, 2, 4]).unwrap();
        let s = ArmStats::with_estimates(&[0.5, 0.5, 0.5], &[1.0, 1.0, 1.0], 2);
        let d = DualState { lambda: 0.3, omega: 1.0, epsilon: 0.7 };
        assert_eq!(select_rank(&s, &d, m(9), &phi).unwrap().get(), 1);
    }

    #[test]
    fn select_rejects_mismatched_stats() {
        let phi = RankSet::from_values(&[1, 2, 4]).unwrap();
        let s = ArmStats::new(2);
        let d = DualState::new(1.0, 0.0).unwrap();
        assert!(select_rank(&s, &d, m(2), &phi).is_err());
    }

    #[test]
    fn observe_examples() {
        let phi = RankSet::from_values(&[1, 8]).unwrap();
        let mut s = ArmStats::new(2);
        let dec = |reward| RankDecision {
            client: VehicleId(0),
            rank: Rank::new(8).unwrap(),
            reward,
            energy: 2.0 * reward,
            latency: 0.0,
            accuracy: 0.0,
        };
        observe(&mut s, &dec(1.0), &phi).unwrap();
        assert_eq!(s.mean_reward(1), 1.0);
        observe(&mut s, &dec(3.0), &phi).unwrap();
        assert_eq!(s.mean_reward(1), 2.0);
        assert_eq!(s.mean_energy(1), 4.0);
        assert_eq!(s.count(1), 2);
        assert_eq!(s.count(0), 0);
    }

    #[test]
    fn dual_examples() {
        let d = DualState { lambda: 0.0, omega: 0.5, epsilon: 0.0 };
        assert_eq!(dual_update(d, 3.0, 10.0).lambda, 0.0);
        let d = DualState { lambda: 1.0, omega: 0.5, epsilon: 0.0 };
        assert_eq!(dual_update(d, 12.0, 10.0).lambda, 2.0);
        let d = DualState { lambda: 0.1, omega: 1.0, epsilon: 0.0 };
        assert_eq!(dual_update(d, 5.0, 10.0).lambda, 0.0);
    }

    #[test]
    fn cold_start_round_robin() {
        let phi = RankSet::from_values(&[1, 4, 8, 16]).unwrap();
        let mut agent = UcbDual::new(phi, 3, DualState::new(0.1, 1.0).unwrap());
        let mut seen = vec![Vec::new(); 3];
        for round in 1..=4 {
            for c in 0..3 {
                let r = agent.choose(c, m(round));
                seen[c].push(r.get());
                agent.observe(c, r, 0.0, 0.0).unwrap();
            }
        }
        assert_eq!(seen[0], vec![1, 4, 8, 16]);
        assert_eq!(seen[1], vec![4, 8, 16, 1]);
        assert_eq!(seen[2], vec![8, 16, 1, 4]);
    }

    proptest! {
        #[test]
        fn lambda_stays_nonnegative_and_bounded_step(
            steps in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..200),
            omega in 0.001f64..2.0,
        ) {
            // per-round deviation bounded by V·E_max with V = 1, E_max = 10
            let mut d = DualState::new(omega, 0.0).unwrap();
            for (used, budget) in steps {
                let next = dual_update(d, used, budget);
                prop_assert!(next.lambda >= 0.0);
                prop_assert!(next.lambda - d.lambda <= omega * 10.0 + 1e-12);
                d = next;
            }
        }

        #[test]
        fn shift_invariant_argmax(
            eighths in proptest::collection::vec((0i32..64, 0i32..64), 1..8),
            shift in -64i32..64, lambda8 in 0i32..16,
        ) {
            let r: Vec<f64> = eighths.iter().map(|(a, _)| *a as f64 / 8.0).collect();
            let e: Vec<f64> = eighths.iter().map(|(_, b)| *b as f64 / 8.0).collect();
            let shifted: Vec<f64> = r.iter().map(|v| v + shift as f64 / 8.0).collect();
            let lambda = lambda8 as f64 / 8.0;
            let a = select_arm(&ArmStats::with_estimates(&r, &e, 1), lambda, 0.0, m(5));
            let b = select_arm(&ArmStats::with_estimates(&shifted, &e, 1), lambda, 0.0, m(5));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn greedy_matches_enumeration(
            est in proptest::collection::vec((-5.0f64..5.0, 0.0f64..5.0), 1..8), lambda in 0.0f64..3.0,
        ) {
            let r: Vec<f64> = est.iter().map(|p| p.0).collect();
            let e: Vec<f64> = est.iter().map(|p| p.1).collect();
            let s = ArmStats::with_estimates(&r, &e, 4);
            let pick = select_arm(&s, lambda, 0.0, m(10));
            let scores: Vec<f64> = (0..r.len()).map(|i| r[i] - lambda * e[i]).collect();
            let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = scores.iter().position(|&s| s == best).unwrap();
            prop_assert_eq!(pick, first);
        }
    }
}
