//! Shared helpers for integration tests: a minimal HTTP/1.1 client
//! (keep-alive, Content-Length framing) and small trained fixtures.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::time::Duration;

use sqlcost::model::ModelKind;
use sqlcost::pipeline::{train_models, PipelineConfig};
use sqlcost::repo::save_bundle;
use sqlcost::synth::{default_spec, generate};

/// Keep-alive HTTP client for one server connection.
pub struct TestClient {
    addr: SocketAddr,
    reader: BufReader<TcpStream>,
}

impl TestClient {
    pub fn connect(addr: SocketAddr) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(10)))?;
        Ok(TestClient {
            addr,
            reader: BufReader::new(stream),
        })
    }

    pub fn reconnect(&mut self) -> std::io::Result<()> {
        *self = TestClient::connect(self.addr)?;
        Ok(())
    }

    /// Send one request and read the full response.
    pub fn request(
        &mut self,
        method: &str,
        path: &str,
        body: Option<&str>,
    ) -> std::io::Result<(u16, String)> {
        let body = body.unwrap_or("");
        let request = format!(
            "{method} {path} HTTP/1.1\r\nHost: {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
            self.addr,
            body.len(),
        );
        self.reader.get_mut().write_all(request.as_bytes())?;

        let mut status_line = String::new();
        self.reader.read_line(&mut status_line)?;
        let status: u16 = status_line
            .split_whitespace()
            .nth(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("bad status line: {status_line:?}"),
                )
            })?;

        let mut content_length = 0usize;
        loop {
            let mut line = String::new();
            self.reader.read_line(&mut line)?;
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((name, value)) = line.split_once(':') {
                if name.eq_ignore_ascii_case("content-length") {
                    content_length = value.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0u8; content_length];
        self.reader.read_exact(&mut body)?;
        Ok((status, String::from_utf8_lossy(&body).into_owned()))
    }
}

/// One-shot request on a fresh connection.
pub fn oneshot(
    addr: SocketAddr,
    method: &str,
    path: &str,
    body: Option<&str>,
) -> std::io::Result<(u16, String)> {
    TestClient::connect(addr)?.request(method, path, body)
}

/// Train small noiseless logreg bundles into `repo` and return the
/// held-out accuracies (cpu, memory). The class mix is balanced so the
/// heavy class has real support at desk-test sizes.
pub fn train_small_repo(repo: &Path, n: usize, seed: u64) -> (f64, f64) {
    let mut spec = default_spec();
    spec.noise_rate = 0.0;
    spec.cpu_class_mix = [0.4, 0.3, 0.3];
    let records = generate(&spec, n, seed).expect("generate");
    let cfg = PipelineConfig::new(
        ModelKind::Logreg,
        sqlcost::featurize::VectorizerKind::Tfidf,
        seed,
    );
    let output = train_models(&records, &cfg).expect("train");
    save_bundle(repo, &output.cpu.bundle).expect("save cpu");
    save_bundle(repo, &output.memory.bundle).expect("save memory");
    (
        output.cpu.test_report.accuracy,
        output.memory.test_report.accuracy,
    )
}

/// Fresh temp directory under the system tempdir.
pub fn temp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "sqlcost-it-{tag}-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
