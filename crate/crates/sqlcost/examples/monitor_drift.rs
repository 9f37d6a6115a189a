//! Watch deployed models decay under concept drift and recover after
//! the automated retrain: a six-window monitoring scenario with the
//! workload shifting at window 3.
//!
//! ```bash
//! cargo run --example monitor_drift
//! ```

use sqlcost::drift::{render_history_table, run_monitor, MonitorConfig};
use sqlcost::featurize::VectorizerKind;
use sqlcost::model::ModelKind;
use sqlcost::pipeline::{train_models, PipelineConfig};
use sqlcost::repo::save_bundle;
use sqlcost::synth::{default_spec, generate};

fn main() -> sqlcost::Result<()> {
    let repo = std::env::temp_dir().join(format!("sqlcost-drift-example-{}", std::process::id()));
    std::fs::create_dir_all(&repo)?;

    let spec = default_spec();
    println!("training initial models...");
    let records = generate(&spec, 8000, 5)?;
    let output = train_models(
        &records,
        &PipelineConfig::new(ModelKind::Gbt, VectorizerKind::Tfidf, 5),
    )?;
    save_bundle(&repo, &output.cpu.bundle)?;
    save_bundle(&repo, &output.memory.bundle)?;

    let cfg = MonitorConfig {
        windows: 6,
        drift_at: Some(3),
        severity: 0.5,
        window_size: 3000,
        threshold: 0.9,
        seed: 11,
    };
    println!(
        "monitoring {} windows, drift injected at window {}...\n",
        cfg.windows,
        cfg.drift_at.unwrap()
    );
    let outcome = run_monitor(&repo, &spec, &cfg)?;

    print!("{}", render_history_table(&outcome.reports));
    for event in &outcome.events {
        println!(
            "\nretrained with the previous hyperparameters at window {}: cpu v{}, memory v{}",
            event.window_index, event.cpu_version, event.mem_version
        );
    }
    std::fs::remove_dir_all(&repo).ok();
    Ok(())
}
