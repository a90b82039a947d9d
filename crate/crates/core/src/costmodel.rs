//! Four-stage per-round latency and energy model.
//!
//! A round consists of model distribution (RSU → vehicle), local fine-tuning,
//! adapter upload (vehicle → RSU) and aggregation at the RSU. Link rates follow
//! the Shannon capacity of the channel.

use serde::{Deserialize, Serialize};

use crate::domain::Rank;
use crate::error::{Error, Result};

/// Per-vehicle physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    /// CPU cycles per training sample.
    pub c_per_sample: f64,
    /// Local samples for the task; also the aggregation weight `|D_v|`.
    pub dataset_size: f64,
    /// Cycles per second.
    pub cpu_freq: f64,
    /// Effective switched capacitance, J·s²/cycle³.
    pub kappa: f64,
    /// Uplink transmit power, W.
    pub tx_power: f64,
}

impl CostProfile {
    pub fn is_valid(&self) -> bool {
        [self.c_per_sample, self.dataset_size, self.cpu_freq, self.kappa, self.tx_power]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// Hz.
    pub bandwidth: f64,
    /// Transmitter power of the link, W.
    pub tx_power: f64,
    pub channel_gain: f64,
    /// W.
    pub noise_power: f64,
}

impl ChannelState {
    pub fn with_tx_power(self, tx_power: f64) -> Self {
        ChannelState { tx_power, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsuProfile {
    /// Cycles spent aggregating one client's update.
    pub c_agg: f64,
    pub cpu_freq: f64,
    pub kappa: f64,
}

/// Latency (s) and energy (J) of one stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    pub latency: f64,
    pub energy: f64,
}

impl StageCost {
    pub const ZERO: StageCost = StageCost { latency: 0.0, energy: 0.0 };

    pub fn scaled(self, factor: f64) -> Self {
        StageCost {
            latency: self.latency * factor,
            energy: self.energy * factor,
        }
    }

    pub fn plus(self, other: StageCost) -> Self {
        StageCost {
            latency: self.latency + other.latency,
            energy: self.energy + other.energy,
        }
    }
}

/// The three client-side stages of one round for one vehicle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCosts {
    pub downlink: StageCost,
    pub compute: StageCost,
    pub uplink: StageCost,
}

impl StageCosts {
    /// End-to-end client latency `τ_v`: download, train, upload.
    pub fn latency(&self) -> f64 {
        self.downlink.latency + self.compute.latency + self.uplink.latency
    }

    pub fn energy(&self) -> f64 {
        self.downlink.energy + self.compute.energy + self.uplink.energy
    }

    pub fn scaled(&self, factor: f64) -> Self {
        StageCosts {
            downlink: self.downlink.scaled(factor),
            compute: self.compute.scaled(factor),
            uplink: self.uplink.scaled(factor),
        }
    }
}

/// Round latency `τ^t` and energy `E^t` of one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTotals {
    pub latency: f64,
    pub energy: f64,
}

/// `B · log2(1 + p·g / N)` in bits per second.
pub fn shannon_rate(ch: &ChannelState) -> f64 {
    ch.bandwidth * (ch.tx_power * ch.channel_gain / ch.noise_power).ln_1p() / std::f64::consts::LN_2
}

fn transfer(bits: f64, ch: &ChannelState) -> Result<StageCost> {
    if bits <= 0.0 {
        return Ok(StageCost::ZERO);
    }
    let rate = shannon_rate(ch);
    if !(rate > 0.0) {
        return Err(Error::UnreachableLink { bits });
    }
    let latency = bits / rate;
    Ok(StageCost {
        latency,
        energy: ch.tx_power * latency,
    })
}

/// Broadcast of the global model; energy is charged at the RSU transmit power.
pub fn downlink_cost(model_bits: f64, ch: &ChannelState) -> Result<StageCost> {
    transfer(model_bits, ch)
}

/// Local training with rank-dependent complexity factor `g_eta`.
pub fn compute_cost(p: &CostProfile, g_eta: f64) -> StageCost {
    let latency = p.c_per_sample * p.dataset_size * g_eta / p.cpu_freq;
    StageCost {
        latency,
        energy: p.kappa * p.cpu_freq.powi(3) * latency,
    }
}

/// Adapter upload at the vehicle's transmit power `p_v`.
pub fn uplink_cost(adapter_bits: f64, ch: &ChannelState, p_v: f64) -> Result<StageCost> {
    transfer(adapter_bits, &ch.with_tx_power(p_v))
}

pub fn aggregation_cost(r: &RsuProfile, n_clients: usize) -> StageCost {
    let latency = r.c_agg * n_clients as f64 / r.cpu_freq;
    StageCost {
        latency,
        energy: r.kappa * r.cpu_freq.powi(3) * latency,
    }
}

/// Size of `B (d×η)` plus `A (η×k)` in bits.
pub fn adapter_bits(rank: Rank, d: usize, k: usize, precision_bits: u32) -> f64 {
    rank.get() as f64 * (d + k) as f64 * precision_bits as f64
}

/// Size of a dense `d×k` update in bits.
pub fn dense_bits(d: usize, k: usize, precision_bits: u32) -> f64 {
    (d * k) as f64 * precision_bits as f64
}

/// Rank complexity factor `g(η) = η / η_ref`; trainable parameters grow
/// linearly with rank.
pub fn complexity(rank: Rank, reference: Rank) -> f64 {
    rank.get() as f64 / reference.get() as f64
}

/// Straggler-bound round latency and summed energy.
///
/// Each stage waits for its slowest client, so `τ^t` is the sum of per-stage
/// maxima plus aggregation; energy sums over every client and the RSU.
pub fn round_totals(clients: &[StageCosts], agg: StageCost) -> Result<RoundTotals> {
    if clients.is_empty() {
        return Err(Error::Empty("round_totals needs at least one client"));
    }
    let max_of = |f: fn(&StageCosts) -> f64| clients.iter().map(f).fold(0.0_f64, f64::max);
    let latency = max_of(|c| c.downlink.latency)
        + max_of(|c| c.compute.latency)
        + max_of(|c| c.uplink.latency)
        + agg.latency;
    let energy = clients.iter().map(StageCosts::energy).sum::<f64>() + agg.energy;
    Ok(RoundTotals { latency, energy })
}
