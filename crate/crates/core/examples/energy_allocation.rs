// Three tasks sharing a 10 J per-round budget. 6 J is split up front and the
// rest is handed out every second round by difficulty and utilization.

use fedrank::budget::{AllocatorConfig, EnergyAllocator};

pub fn run_example() -> fedrank::Result<Vec<Vec<f64>>> {
    let cfg = AllocatorConfig {
        e_total: 10,
        q_period: 2,
        xi: 0.5,
        zeta: 2.0,
        perf_floor: 1.0,
        h_init: 0.5,
        // held back at start so reallocation has something to hand out
        reserve: 4,
    };
    let mut alloc = EnergyAllocator::new(cfg, 3)?;
    // task 0 overspends and performs poorly, task 2 idles
    let spend = [1.2, 0.8, 0.3];
    let perf = [2.0, 5.0, 8.0];
    let mut trace = vec![(0..3).map(|t| alloc.allocation(t)).collect::<Vec<_>>()];
    for m in 1..=6 {
        for t in 0..3 {
            let e = spend[t] * alloc.allocation(t);
            alloc.record(t, e, perf[t]);
        }
        alloc.end_round(m)?;
        trace.push((0..3).map(|t| alloc.allocation(t)).collect());
    }
    Ok(trace)
}

#[allow(dead_code)]
fn main() -> fedrank::Result<()> {
    for (m, row) in run_example()?.iter().enumerate() {
        println!("after round {m}: {:?}", row.iter().map(|e| format!("{e:.3}")).collect::<Vec<_>>());
    }
    Ok(())
}
