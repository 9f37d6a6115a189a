//! Quantify what cost predictions buy a query router: compare
//! round-robin, least-loaded, and prediction-aware routing on the same
//! workload, with the oracle predictor as the lower bound.
//!
//! ```bash
//! cargo run --example simulate_routing
//! ```

use sqlcost::labeling::ClassScheme;
use sqlcost::router::{
    simulate, workload_from_records, ClusterConfig, OraclePredictor, RoutingPolicy,
};
use sqlcost::synth::{default_spec, generate};

fn main() -> sqlcost::Result<()> {
    let mut spec = default_spec();
    spec.mem_class_mix = [0.40, 0.59, 0.01];
    let records = generate(&spec, 8000, 17)?;
    let workload = workload_from_records(
        &records,
        1,
        &ClassScheme::cpu_default(),
        &ClassScheme::memory_default(),
    );
    let heavies = workload.iter().filter(|w| w.is_heavy()).count();
    let config = ClusterConfig::default();
    println!(
        "{} queries ({heavies} heavy) over {} clusters with {} slots each, heavy cap {}\n",
        workload.len(),
        config.clusters,
        config.slots,
        config.heavy_cap
    );

    println!(
        "{:<15} {:>13} {:>14} {:>9} {:>9} {:>13}",
        "policy", "max imbalance", "mean imbalance", "p50 wait", "p95 wait", "heavy co-loc"
    );
    for policy in [
        RoutingPolicy::RoundRobin,
        RoutingPolicy::LeastLoaded,
        RoutingPolicy::PredictedCost,
    ] {
        let report = simulate(&workload, &config, policy, &OraclePredictor)?;
        println!(
            "{:<15} {:>13.2} {:>14.2} {:>9.1} {:>9.1} {:>13}",
            format!("{policy:?}"),
            report.max_load_imbalance,
            report.mean_load_imbalance,
            report.p50_queue_wait,
            report.p95_queue_wait,
            report.heavy_colocation_count
        );
    }
    Ok(())
}
