//! Inter-task energy allocation.
//!
//! The global per-round budget starts as an equal integer split. Every `Q`
//! rounds each task's difficulty `h`, utilization `μ` and weight
//! `w = h^ζ · μ` are refreshed, and the unallocated remainder
//! `E_total − Σ E_t` is handed out in proportion to `w`, capping any single
//! task at `0.7 · E_total`. Other rounds leave the allocation unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest share of the global budget a single task may hold.
pub const TASK_CAP_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocatorConfig {
    /// Global per-round energy budget, J.
    pub e_total: u64,
    /// Reallocation period `Q` in rounds.
    pub q_period: u32,
    /// Difficulty smoothing `ξ ∈ [0, 1]`.
    pub xi: f64,
    /// Difficulty amplification `ζ > 1`.
    pub zeta: f64,
    /// Lower bound applied to the task performance signal.
    #[serde(default = "default_perf_floor")]
    pub perf_floor: f64,
    /// Initial difficulty `h⁰`.
    #[serde(default = "default_h_init")]
    pub h_init: f64,
    /// Energy withheld from the initial split and left for reallocation, J.
    #[serde(default)]
    pub reserve: u64,
}

fn default_perf_floor() -> f64 {
    1.0
}

fn default_h_init() -> f64 {
    0.5
}

impl AllocatorConfig {
    pub fn cap(&self) -> f64 {
        TASK_CAP_FRACTION * self.e_total as f64
    }

    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.e_total == 0 {
            return Err(("e_total", "global energy budget must be > 0".into()));
        }
        if self.q_period == 0 {
            return Err(("q_period", "reallocation period must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(("xi", "smoothing must lie in [0, 1]".into()));
        }
        if !(self.zeta.is_finite() && self.zeta > 1.0) {
            return Err(("zeta", "amplification must be > 1".into()));
        }
        if !(self.perf_floor.is_finite() && self.perf_floor > 0.0) {
            return Err(("perf_floor", "performance floor must be > 0".into()));
        }
        if !(self.h_init > 0.0 && self.h_init <= 1.0) {
            return Err(("h_init", "initial difficulty must lie in (0, 1]".into()));
        }
        if self.reserve >= self.e_total {
            return Err(("reserve", "reserve must be smaller than e_total".into()));
        }
        Ok(())
    }
}

/// Allocation and feedback state of one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskBudget {
    /// Per-round allocation `E_t^m`, J.
    pub e_alloc: f64,
    pub h: f64,
    pub mu: f64,
    pub w: f64,
    /// Energy consumed in the latest round `Ê_t^m`, J.
    pub e_spent: f64,
    /// Task performance `L_t^m`.
    pub perf: f64,
}

impl TaskBudget {
    pub fn new(e_alloc: f64, h_init: f64, perf_floor: f64) -> Self {
        TaskBudget {
            e_alloc,
            h: h_init,
            mu: 0.0,
            w: 0.0,
            e_spent: 0.0,
            perf: perf_floor,
        }
    }
}

/// Floor-equal split with the remainder going to the first `E_total mod T` tasks.
pub fn init_allocation(e_total: u64, n_tasks: usize) -> Result<Vec<f64>> {
    if n_tasks == 0 {
        return Err(Error::Empty("allocation needs at least one task"));
    }
    let t = n_tasks as u64;
    let (base, extra) = (e_total / t, e_total % t);
    Ok((0..t).map(|i| (base + u64::from(i < extra)) as f64).collect())
}

/// `h = ξ·h_prev + (1 − ξ)·E/L`, clamped into `(0, 1]`.
pub fn update_difficulty(h_prev: f64, xi: f64, e_alloc: f64, perf: f64) -> Result<f64> {
    if !(perf > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "task performance must be > 0 for the difficulty ratio, got {perf}"
        )));
    }
    let h = xi * h_prev + (1.0 - xi) * (e_alloc / perf);
    Ok(h.clamp(f64::MIN_POSITIVE, 1.0))
}

/// `μ = min(1, Ê / E)`. Overspending is tracked as constraint violation
/// elsewhere rather than folded into μ.
pub fn utilization(e_spent: f64, e_alloc: f64) -> Result<f64> {
    if !(e_alloc > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "utilization needs a positive allocation, got {e_alloc}"
        )));
    }
    Ok((e_spent / e_alloc).clamp(0.0, 1.0))
}

/// `w = h^ζ · μ`.
pub fn task_weight(h: f64, mu: f64, zeta: f64) -> f64 {
    h.powf(zeta) * mu
}

/// Proportional hand-out of `e_rem` with a per-task cap.
///
/// `ΔE_t = round(w_t · E_rem / Σ w)` (half away from zero) and
/// `E_t ← min(E_t + ΔE_t, cap)`. Capped excess is not redistributed. A zero
/// weight sum falls back to equal weights.
pub fn reallocate_remaining(allocs: &[f64], weights: &[f64], e_rem: f64, cap: f64) -> Vec<f64> {
    debug_assert_eq!(allocs.len(), weights.len());
    let sum: f64 = weights.iter().sum();
    let uniform = !(sum > 0.0);
    allocs
        .iter()
        .zip(weights)
        .map(|(&e, &w)| {
            let share = if uniform {
                1.0 / allocs.len() as f64
            } else {
                w / sum
            };
            (e + (share * e_rem).round()).min(cap)
        })
        .collect()
}

/// One reallocation step at round `m`.
///
/// Returns `false` (and leaves `budgets` untouched) unless `m` is a multiple of
/// `Q`. On reallocation rounds the feedback signals are refreshed from each
/// task's `e_spent` and `perf`; a non-positive remainder skips the hand-out.
pub fn reallocate(budgets: &mut [TaskBudget], cfg: &AllocatorConfig, m: u32) -> Result<bool> {
    if m % cfg.q_period != 0 {
        return Ok(false);
    }
    for b in budgets.iter_mut() {
        b.h = update_difficulty(b.h, cfg.xi, b.e_alloc, b.perf.max(cfg.perf_floor))?;
        b.mu = if b.e_alloc > 0.0 {
            utilization(b.e_spent, b.e_alloc)?
        } else {
            0.0
        };
        b.w = task_weight(b.h, b.mu, cfg.zeta);
    }
    let e_rem = cfg.e_total as f64 - budgets.iter().map(|b| b.e_alloc).sum::<f64>();
    if e_rem > 0.0 {
        let allocs: Vec<f64> = budgets.iter().map(|b| b.e_alloc).collect();
        let weights: Vec<f64> = budgets.iter().map(|b| b.w).collect();
        for (b, e) in budgets.iter_mut().zip(reallocate_remaining(&allocs, &weights, e_rem, cfg.cap())) {
            b.e_alloc = e;
        }
    }
    Ok(true)
}

/// Allocation snapshot written on reallocation rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSnapshot {
    pub round: u32,
    pub task: usize,
    pub e_alloc: f64,
    pub h: f64,
    pub mu: f64,
    pub w: f64,
}

/// Allocator state across a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAllocator {
    cfg: AllocatorConfig,
    budgets: Vec<TaskBudget>,
    period_reward: Vec<f64>,
    period_rounds: Vec<u32>,
}

impl EnergyAllocator {
    pub fn new(cfg: AllocatorConfig, n_tasks: usize) -> Result<Self> {
        let init = init_allocation(cfg.e_total - cfg.reserve, n_tasks)?;
        let budgets = init
            .into_iter()
            .map(|e| TaskBudget::new(e, cfg.h_init, cfg.perf_floor))
            .collect();
        Ok(EnergyAllocator {
            cfg,
            budgets,
            period_reward: vec![0.0; n_tasks],
            period_rounds: vec![0; n_tasks],
        })
    }

    pub fn config(&self) -> &AllocatorConfig {
        &self.cfg
    }

    pub fn allocation(&self, task: usize) -> f64 {
        self.budgets[task].e_alloc
    }

    pub fn budgets(&self) -> &[TaskBudget] {
        &self.budgets
    }

    /// Feeds one round of a task: energy consumed and the task's reward.
    pub fn record(&mut self, task: usize, spent: f64, reward: f64) {
        self.budgets[task].e_spent = spent;
        self.period_reward[task] += reward;
        self.period_rounds[task] += 1;
    }

    /// Round-end hook; on reallocation rounds returns one snapshot per task.
    pub fn end_round(&mut self, m: u32) -> Result<Option<Vec<BudgetSnapshot>>> {
        if m % self.cfg.q_period != 0 {
            return Ok(None);
        }
        for (t, b) in self.budgets.iter_mut().enumerate() {
            let n = self.period_rounds[t].max(1) as f64;
            b.perf = (self.period_reward[t] / n).max(self.cfg.perf_floor);
        }
        reallocate(&mut self.budgets, &self.cfg, m)?;
        self.period_reward.iter_mut().for_each(|r| *r = 0.0);
        self.period_rounds.iter_mut().for_each(|r| *r = 0);
        Ok(Some(
            self.budgets
                .iter()
                .enumerate()
                .map(|(task, b)| BudgetSnapshot {
                    round: m,
                    task,
                    e_alloc: b.e_alloc,
                    h: b.h,
                    mu: b.mu,
                    w: b.w,
                })
                .collect(),
        ))
    }
}
