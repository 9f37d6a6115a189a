//! Generate a synthetic query request log and inspect its shape:
//! class mixes, the CPU/memory rank correlation, and a few records.
//!
//! ```bash
//! cargo run --example generate_workload
//! ```

use sqlcost::eval::{pearson_correlation, ranks};
use sqlcost::labeling::{classify_index, ClassScheme};
use sqlcost::synth::{default_spec, generate};

fn main() -> sqlcost::Result<()> {
    let spec = default_spec();
    let records = generate(&spec, 10_000, 7)?;

    let cpu_scheme = ClassScheme::cpu_default();
    let mem_scheme = ClassScheme::memory_default();
    let mut cpu_counts = [0usize; 3];
    let mut mem_counts = [0usize; 3];
    for r in &records {
        cpu_counts[classify_index(r.cpu_time_ms, &cpu_scheme)] += 1;
        mem_counts[classify_index(r.peak_memory_bytes, &mem_scheme)] += 1;
    }

    println!("generated {} records", records.len());
    println!("cpu mix target {:?}", spec.cpu_class_mix);
    for (i, label) in cpu_scheme.labels().iter().enumerate() {
        println!("  {label:<12} {:>6}", cpu_counts[i]);
    }
    println!("memory mix target {:?}", spec.mem_class_mix);
    for (i, label) in mem_scheme.labels().iter().enumerate() {
        println!("  {label:<12} {:>6}", mem_counts[i]);
    }

    let cpu: Vec<f64> = records.iter().map(|r| r.cpu_time_ms as f64).collect();
    let mem: Vec<f64> = records.iter().map(|r| r.peak_memory_bytes as f64).collect();
    let correlation = pearson_correlation(&ranks(&cpu), &ranks(&mem))?;
    println!(
        "rank correlation between cpu time and peak memory: {correlation:.3} (target {})",
        spec.target_correlation
    );

    println!("\nsample records:");
    for r in records.iter().take(3) {
        println!(
            "  [{}] cpu={}ms mem={}B {}",
            r.query_id, r.cpu_time_ms, r.peak_memory_bytes, r.query
        );
    }
    Ok(())
}
