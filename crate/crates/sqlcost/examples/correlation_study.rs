//! The diagnostic that motivates per-resource models: CPU time and
//! peak memory are only weakly correlated, and 2-D k-means lumps
//! low-CPU queries together with low-memory ones instead of separating
//! the two resources.
//!
//! ```bash
//! cargo run --example correlation_study
//! ```

use sqlcost::eval::{kmeans, pearson_correlation, ranks};
use sqlcost::labeling::{classify_index, ClassScheme};
use sqlcost::synth::{default_spec, generate};

fn main() -> sqlcost::Result<()> {
    let records = generate(&default_spec(), 10_000, 21)?;

    let cpu: Vec<f64> = records.iter().map(|r| r.cpu_time_ms as f64).collect();
    let mem: Vec<f64> = records.iter().map(|r| r.peak_memory_bytes as f64).collect();
    let rank_corr = pearson_correlation(&ranks(&cpu), &ranks(&mem))?;
    println!("rank correlation between peak memory and CPU time: {rank_corr:.3}");
    println!("a query that hoards memory often needs little CPU, and vice versa\n");

    // cluster in log space, as raw values span nine orders of magnitude
    let points: Vec<[f64; 2]> = records
        .iter()
        .map(|r| {
            [
                (r.cpu_time_ms as f64).max(1.0).ln(),
                (r.peak_memory_bytes as f64).max(1.0).ln(),
            ]
        })
        .collect();
    let clustering = kmeans(&points, 3, 9, 100)?;

    let cpu_scheme = ClassScheme::cpu_default();
    let mem_scheme = ClassScheme::memory_default();
    println!("k-means (k=3) on (ln cpu, ln memory), composition per cluster:");
    println!(
        "{:>7} {:>6}  {:>22}  {:>22}",
        "cluster", "size", "cpu classes 0/1/2", "memory classes 0/1/2"
    );
    for cluster in 0..3 {
        let members: Vec<usize> = clustering
            .assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == cluster)
            .map(|(i, _)| i)
            .collect();
        let mut cpu_mix = [0usize; 3];
        let mut mem_mix = [0usize; 3];
        for &i in &members {
            cpu_mix[classify_index(records[i].cpu_time_ms, &cpu_scheme)] += 1;
            mem_mix[classify_index(records[i].peak_memory_bytes, &mem_scheme)] += 1;
        }
        println!(
            "{cluster:>7} {:>6}  {:>22}  {:>22}",
            members.len(),
            format!("{}/{}/{}", cpu_mix[0], cpu_mix[1], cpu_mix[2]),
            format!("{}/{}/{}", mem_mix[0], mem_mix[1], mem_mix[2]),
        );
    }
    println!("\nno cluster isolates a resource class cleanly, so the pipeline");
    println!("discretizes each resource separately instead of clustering jointly");
    Ok(())
}
