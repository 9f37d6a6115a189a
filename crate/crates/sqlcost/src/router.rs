//! Discrete-tick simulation of a federation router that places queries
//! on SQL engine clusters, with and without cost predictions.
//!
//! Each cluster runs up to `slots` queries concurrently; a running
//! query consumes one abstract CPU unit per tick until its true cost is
//! spent, and arrivals wait in a FIFO queue for a free slot. The
//! simulator quantifies load imbalance, queue waits, and heavy-query
//! co-location under different routing policies.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::NUM_CLASSES;

/// Routing policies under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingPolicy {
    RoundRobin,
    LeastLoaded,
    PredictedCost,
}

impl std::str::FromStr for RoutingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round_robin" => Ok(RoutingPolicy::RoundRobin),
            "least_loaded" => Ok(RoutingPolicy::LeastLoaded),
            "predicted_cost" => Ok(RoutingPolicy::PredictedCost),
            other => Err(Error::Config(format!(
                "unknown policy `{other}` (expected round_robin, least_loaded or predicted_cost)"
            ))),
        }
    }
}

/// One workload item: a query arriving at a tick with its true resource
/// profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadItem {
    pub arrival_tick: u64,
    pub query: String,
    /// True CPU demand in abstract cpu-ticks.
    pub cpu_cost: u64,
    pub cpu_class: usize,
    pub mem_class: usize,
}

impl WorkloadItem {
    pub fn is_heavy(&self) -> bool {
        self.cpu_class == NUM_CLASSES - 1 || self.mem_class == NUM_CLASSES - 1
    }
}

/// Predicted (cpu, memory) classes for a query.
pub trait CostPredictor {
    fn predict(&self, item: &WorkloadItem) -> (usize, usize);
}

/// Sees the true classes; lower-bounds what any trained model can do.
pub struct OraclePredictor;

impl CostPredictor for OraclePredictor {
    fn predict(&self, item: &WorkloadItem) -> (usize, usize) {
        (item.cpu_class, item.mem_class)
    }
}

/// Predicts through trained bundles from the query text alone.
pub struct BundlePredictor<'a> {
    pub cpu: &'a crate::repo::ModelBundle,
    pub memory: &'a crate::repo::ModelBundle,
}

impl CostPredictor for BundlePredictor<'_> {
    fn predict(&self, item: &WorkloadItem) -> (usize, usize) {
        let cpu = self
            .cpu
            .predict_sql(&item.query)
            .map(|(_, class)| class)
            .unwrap_or(0);
        let memory = self
            .memory
            .predict_sql(&item.query)
            .map(|(_, class)| class)
            .unwrap_or(0);
        (cpu, memory)
    }
}

/// Cluster sizing shared by every simulated cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub clusters: usize,
    /// Concurrent queries a cluster can run per tick.
    pub slots: usize,
    /// Routing-time cap on unfinished predicted-heavy queries per
    /// cluster.
    pub heavy_cap: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            clusters: 4,
            slots: 8,
            heavy_cap: 4,
        }
    }
}

struct ActiveQuery {
    remaining: u64,
    heavy_true: bool,
    predicted_heavy: bool,
    arrival_tick: u64,
}

/// Live state of one simulated cluster.
pub struct ClusterState {
    pub id: usize,
    slots: usize,
    running: Vec<ActiveQuery>,
    queue: VecDeque<ActiveQuery>,
    /// Unfinished queries the router predicted heavy; the routing cap
    /// applies to this count.
    predicted_heavy_unfinished: usize,
    backlog_cost: u64,
}

impl ClusterState {
    fn new(id: usize, slots: usize) -> Self {
        ClusterState {
            id,
            slots,
            running: Vec::new(),
            queue: VecDeque::new(),
            predicted_heavy_unfinished: 0,
            backlog_cost: 0,
        }
    }

    /// Total unfinished work assigned to the cluster, in cpu-ticks.
    pub fn load(&self) -> u64 {
        self.backlog_cost
    }

    pub fn heavy_in_flight(&self) -> usize {
        self.predicted_heavy_unfinished
    }

    fn occupancy(&self) -> usize {
        self.running.len() + self.queue.len()
    }

    fn free_slots(&self) -> usize {
        self.slots.saturating_sub(self.occupancy())
    }
}

/// Pick a destination cluster for one query under a policy.
pub fn route(
    predicted: (usize, usize),
    clusters: &[ClusterState],
    policy: RoutingPolicy,
    heavy_cap: usize,
    round_robin_next: &mut usize,
) -> Result<usize> {
    if clusters.is_empty() {
        return Err(Error::NoCluster);
    }
    let least_loaded = |candidates: &mut dyn Iterator<Item = &ClusterState>| -> Option<usize> {
        candidates
            .min_by(|a, b| a.load().cmp(&b.load()).then(a.id.cmp(&b.id)))
            .map(|c| c.id)
    };
    let id = match policy {
        RoutingPolicy::RoundRobin => {
            let id = *round_robin_next % clusters.len();
            *round_robin_next = (*round_robin_next + 1) % clusters.len();
            id
        }
        RoutingPolicy::LeastLoaded => least_loaded(&mut clusters.iter()).expect("non-empty"),
        RoutingPolicy::PredictedCost => {
            let heavy = predicted.0 == NUM_CLASSES - 1 || predicted.1 == NUM_CLASSES - 1;
            if heavy {
                // heavy queries go to the least-loaded cluster with
                // heavy headroom; when all sit at the cap, fall back to
                // least-loaded overall
                least_loaded(
                    &mut clusters
                        .iter()
                        .filter(|c| c.predicted_heavy_unfinished < heavy_cap),
                )
                .unwrap_or_else(|| least_loaded(&mut clusters.iter()).expect("non-empty"))
            } else {
                // light queries chase open capacity: most free slots,
                // smallest backlog as the tie-break
                clusters
                    .iter()
                    .max_by(|a, b| {
                        a.free_slots()
                            .cmp(&b.free_slots())
                            .then(b.load().cmp(&a.load()))
                            .then(b.id.cmp(&a.id))
                    })
                    .map(|c| c.id)
                    .expect("non-empty")
            }
        }
    };
    Ok(id)
}

/// Simulation metrics over a full workload run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationReport {
    pub policy: RoutingPolicy,
    /// Max over ticks of (max cluster load - min cluster load), in
    /// cpu-ticks per slot.
    pub max_load_imbalance: f64,
    pub mean_load_imbalance: f64,
    pub p50_queue_wait: f64,
    pub p95_queue_wait: f64,
    /// Tick-cluster pairs where two or more truly heavy queries ran
    /// concurrently.
    pub heavy_colocation_count: u64,
    /// Peak number of unfinished predicted-heavy queries on any single
    /// cluster; under predicted_cost this stays at or below the cap
    /// whenever the cap is feasible.
    pub max_predicted_heavy_in_flight: usize,
    pub ticks: u64,
    pub completed: usize,
}

/// Run the discrete-tick simulation. The workload must be sorted by
/// arrival tick; every query is scheduled exactly once and the run ends
/// when all work has drained.
pub fn simulate(
    workload: &[WorkloadItem],
    config: &ClusterConfig,
    policy: RoutingPolicy,
    predictor: &dyn CostPredictor,
) -> Result<SimulationReport> {
    if config.clusters == 0 {
        return Err(Error::NoCluster);
    }
    if workload
        .windows(2)
        .any(|w| w[0].arrival_tick > w[1].arrival_tick)
    {
        return Err(Error::Config(
            "workload must be sorted by arrival tick".to_string(),
        ));
    }

    let mut clusters: Vec<ClusterState> = (0..config.clusters)
        .map(|id| ClusterState::new(id, config.slots))
        .collect();

    let mut next_arrival = 0usize;
    let mut round_robin_next = 0usize;
    let mut waits: Vec<u64> = Vec::with_capacity(workload.len());
    let mut completed = 0usize;
    let mut imbalance_sum = 0.0f64;
    let mut max_imbalance = 0.0f64;
    let mut heavy_colocation = 0u64;
    let mut max_heavy_in_flight = 0usize;
    let mut tick = 0u64;

    while completed < workload.len() {
        // arrivals route at the start of their tick
        while next_arrival < workload.len() && workload[next_arrival].arrival_tick <= tick {
            let item = &workload[next_arrival];
            let predicted = predictor.predict(item);
            let id = route(
                predicted,
                &clusters,
                policy,
                config.heavy_cap,
                &mut round_robin_next,
            )?;
            let predicted_heavy =
                predicted.0 == NUM_CLASSES - 1 || predicted.1 == NUM_CLASSES - 1;
            let cluster = &mut clusters[id];
            cluster.backlog_cost += item.cpu_cost.max(1);
            if predicted_heavy {
                cluster.predicted_heavy_unfinished += 1;
                max_heavy_in_flight = max_heavy_in_flight.max(cluster.predicted_heavy_unfinished);
            }
            cluster.queue.push_back(ActiveQuery {
                remaining: item.cpu_cost.max(1),
                heavy_true: item.is_heavy(),
                predicted_heavy,
                arrival_tick: tick,
            });
            next_arrival += 1;
        }

        // admit queued queries into free run slots, FIFO
        for cluster in clusters.iter_mut() {
            while cluster.running.len() < cluster.slots {
                let Some(next) = cluster.queue.pop_front() else {
                    break;
                };
                waits.push(tick - next.arrival_tick);
                cluster.running.push(next);
            }
        }

        // observe imbalance and co-location for this tick
        let loads: Vec<f64> = clusters
            .iter()
            .map(|c| c.load() as f64 / config.slots as f64)
            .collect();
        let imbalance = loads.iter().cloned().fold(f64::MIN, f64::max)
            - loads.iter().cloned().fold(f64::MAX, f64::min);
        imbalance_sum += imbalance;
        max_imbalance = max_imbalance.max(imbalance);
        for cluster in &clusters {
            if cluster.running.iter().filter(|q| q.heavy_true).count() >= 2 {
                heavy_colocation += 1;
            }
        }

        // each running query burns one cpu-tick
        for cluster in clusters.iter_mut() {
            let progressed = cluster.running.len() as u64;
            let mut finished_predicted_heavy = 0usize;
            cluster.running.retain_mut(|q| {
                q.remaining -= 1;
                if q.remaining == 0 {
                    completed += 1;
                    if q.predicted_heavy {
                        finished_predicted_heavy += 1;
                    }
                    false
                } else {
                    true
                }
            });
            cluster.backlog_cost -= progressed;
            cluster.predicted_heavy_unfinished = cluster
                .predicted_heavy_unfinished
                .saturating_sub(finished_predicted_heavy);
        }

        tick += 1;
        if tick > 100_000_000 {
            return Err(Error::Config("simulation failed to drain".to_string()));
        }
    }

    waits.sort_unstable();
    let percentile = |p: f64| -> f64 {
        if waits.is_empty() {
            return 0.0;
        }
        let rank = (p * (waits.len() - 1) as f64).round() as usize;
        waits[rank] as f64
    };

    Ok(SimulationReport {
        policy,
        max_load_imbalance: max_imbalance,
        mean_load_imbalance: imbalance_sum / tick as f64,
        p50_queue_wait: percentile(0.50),
        p95_queue_wait: percentile(0.95),
        heavy_colocation_count: heavy_colocation,
        max_predicted_heavy_in_flight: max_heavy_in_flight,
        ticks: tick,
        completed,
    })
}

/// Build a simulation workload from query log records: arrivals at a
/// fixed rate per tick, CPU demand scaled down from true CPU time.
pub fn workload_from_records(
    records: &[crate::ingest::QueryLogRecord],
    arrivals_per_tick: usize,
    cpu_scheme: &crate::labeling::ClassScheme,
    mem_scheme: &crate::labeling::ClassScheme,
) -> Vec<WorkloadItem> {
    use crate::labeling::classify_index;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let cpu_class = classify_index(r.cpu_time_ms, cpu_scheme);
            let mem_class = classify_index(r.peak_memory_bytes, mem_scheme);
            WorkloadItem {
                arrival_tick: (i / arrivals_per_tick.max(1)) as u64,
                query: r.query.clone(),
                // one tick per minute of CPU time, floor 1, cap 300
                cpu_cost: (r.cpu_time_ms / 60_000).clamp(1, 300),
                cpu_class,
                mem_class,
            }
        })
        .collect()
}
