//! Start the prediction service against a freshly trained repository,
//! fire a few requests at it, hot-swap the CPU model, and shut down
//! gracefully.
//!
//! ```bash
//! cargo run --example serve_predictions
//! ```

use std::io::{Read, Write};
use std::net::TcpStream;

use sqlcost::featurize::VectorizerKind;
use sqlcost::labeling::Resource;
use sqlcost::model::ModelKind;
use sqlcost::pipeline::{train_models, PipelineConfig};
use sqlcost::repo::{save_bundle, VersionSpec};
use sqlcost::serving::{serve, ServeOptions};
use sqlcost::synth::{default_spec, generate};

fn http(addr: std::net::SocketAddr, method: &str, path: &str, body: &str) -> String {
    let mut stream = TcpStream::connect(addr).expect("connect");
    let request = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nConnection: close\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(request.as_bytes()).expect("write");
    let mut response = String::new();
    stream.read_to_string(&mut response).expect("read");
    response
        .split_once("\r\n\r\n")
        .map(|(_, body)| body.to_string())
        .unwrap_or(response)
}

fn main() -> sqlcost::Result<()> {
    let repo = std::env::temp_dir().join(format!("sqlcost-serve-example-{}", std::process::id()));
    std::fs::create_dir_all(&repo)?;

    let mut spec = default_spec();
    spec.cpu_class_mix = [0.4, 0.3, 0.3];
    let records = generate(&spec, 4000, 1)?;
    let output = train_models(
        &records,
        &PipelineConfig::new(ModelKind::Logreg, VectorizerKind::Tfidf, 1),
    )?;
    save_bundle(&repo, &output.cpu.bundle)?;
    save_bundle(&repo, &output.cpu.bundle)?; // second version to swap to
    save_bundle(&repo, &output.memory.bundle)?;

    let handle = serve(&repo, "127.0.0.1:0", ServeOptions::default())?;
    let addr = handle.addr();
    println!("serving on http://{addr}");

    println!("health: {}", http(addr, "GET", "/health", ""));
    println!("models: {}", http(addr, "GET", "/v1/model", ""));

    // one genuinely light and one genuinely heavy query from the stream
    let cpu_scheme = sqlcost::labeling::ClassScheme::cpu_default();
    let class_of =
        |r: &&sqlcost::ingest::QueryLogRecord, class: usize| -> bool {
            sqlcost::labeling::classify_index(r.cpu_time_ms, &cpu_scheme) == class
        };
    let probe = generate(&spec, 500, 77)?;
    let light = probe.iter().find(|r| class_of(r, 0)).unwrap();
    let heavy = probe.iter().find(|r| class_of(r, 2)).unwrap();

    for (tag, record) in [("light", light), ("heavy", heavy)] {
        let body = serde_json::json!({ "query": record.query }).to_string();
        println!("\n{tag} query ({}ms cpu): {}", record.cpu_time_ms, record.query);
        println!("cpu:    {}", http(addr, "POST", "/v1/predict/cpu", &body));
        println!("memory: {}", http(addr, "POST", "/v1/predict/memory", &body));
    }

    println!(
        "\nreload: {}",
        http(addr, "POST", "/v1/reload", r#"{"resource":"cpu","version":1}"#)
    );
    let previous = handle.swap_model(Resource::Cpu, VersionSpec::Latest)?;
    println!("swapped cpu back from v{previous} to latest");

    handle.shutdown();
    println!("shut down cleanly");
    std::fs::remove_dir_all(&repo).ok();
    Ok(())
}
