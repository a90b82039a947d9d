// Accuracy, latency and energy of one client at ranks 1, 8 and 200 under the
// default calibration.
//
//     cargo run --example cost_model

use fedrank::costmodel::{adapter_bits, complexity, compute_cost, downlink_cost, uplink_cost, ChannelState, CostProfile, StageCosts};
use fedrank::domain::Rank;
use fedrank::surrogate::AccuracyCurve;

#[derive(Debug, Clone, Copy)]
pub struct RankRow {
    pub rank: u32,
    pub accuracy: f64,
    pub latency: f64,
    pub energy: f64,
}

pub fn run_example() -> fedrank::Result<Vec<RankRow>> {
    let client = CostProfile {
        c_per_sample: 1.0e4,
        dataset_size: 5.0e4,
        cpu_freq: 1.0e9,
        kappa: 1.0e-27,
        tx_power: 0.2,
    };
    let channel = ChannelState {
        bandwidth: 1.0e6,
        tx_power: 1.0,
        channel_gain: 1.0e-10,
        noise_power: 1.0e-13,
    };
    let reference = Rank::new(1)?;
    let mut rows = Vec::new();
    for r in [1, 8, 200] {
        let rank = Rank::new(r)?;
        let bits = adapter_bits(rank, 768, 768, 32);
        let costs = StageCosts {
            downlink: downlink_cost(bits, &channel)?,
            compute: compute_cost(&client, complexity(rank, reference)),
            uplink: uplink_cost(bits, &channel, client.tx_power)?,
        };
        rows.push(RankRow {
            rank: r,
            accuracy: AccuracyCurve::SEQ.converged(rank),
            latency: costs.latency(),
            energy: costs.energy(),
        });
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> fedrank::Result<()> {
    println!("{:>5} {:>9} {:>10} {:>10}", "rank", "accuracy", "latency_s", "energy_j");
    for row in run_example()? {
        println!("{:>5} {:>8.2}% {:>10.3} {:>10.3}", row.rank, 100.0 * row.accuracy, row.latency, row.energy);
    }
    Ok(())
}
