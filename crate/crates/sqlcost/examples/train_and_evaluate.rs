//! Train the boosted CPU and memory models on synthetic logs and print
//! held-out accuracy with per-class precision/recall tables.
//!
//! ```bash
//! cargo run --example train_and_evaluate
//! ```

use sqlcost::featurize::VectorizerKind;
use sqlcost::model::ModelKind;
use sqlcost::pipeline::{train_models, PipelineConfig};
use sqlcost::synth::{default_spec, generate};

fn main() -> sqlcost::Result<()> {
    let records = generate(&default_spec(), 12_000, 3)?;
    let cfg = PipelineConfig::new(ModelKind::Gbt, VectorizerKind::Tfidf, 9);
    let output = train_models(&records, &cfg)?;

    println!(
        "trained gbt+tfidf: {} train / {} test rows, vocabulary {}, {:.1}s",
        output.n_train,
        output.n_test,
        output.vocabulary_size,
        output.elapsed.as_secs_f64()
    );
    for (name, outcome) in [("CPU time", &output.cpu), ("Peak memory", &output.memory)] {
        let report = &outcome.test_report;
        println!("\n{name} model: accuracy {:.2}%", report.accuracy * 100.0);
        println!("  {:<12}  precision  recall", "class");
        for (i, label) in outcome.bundle.scheme.labels().iter().enumerate() {
            println!(
                "  {label:<12}  {:>9.2}  {:>6.2}",
                report.precision[i], report.recall[i]
            );
        }
    }
    Ok(())
}
