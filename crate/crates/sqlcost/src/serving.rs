//! HTTP prediction service with versioned hot reload.
//!
//! Endpoints: `POST /v1/predict/cpu` and `POST /v1/predict/memory`
//! with body `{"query": "..."}`, `GET /health`, `GET /v1/model`, and
//! `POST /v1/reload` with `{"resource": "cpu", "version": 3}` (or
//! `"latest"`). Request handling runs on a small worker pool; each
//! request reads one immutable bundle snapshot, so a concurrent swap
//! can never mix an old vocabulary with a new model.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use tiny_http::{Header, Request, Response, Server};

use crate::error::{Error, Result};
use crate::labeling::Resource;
use crate::repo::{load_bundle, ModelBundle, VersionSpec};

/// Service options.
#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub workers: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions { workers: 8 }
    }
}

/// Successful prediction payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionResponse {
    pub class_label: String,
    pub class_index: usize,
    /// Keyed by class label; sums to 1.
    pub probabilities: std::collections::BTreeMap<String, f64>,
    pub model_version: u32,
    pub inference_micros: u64,
}

struct Shared {
    server: Server,
    repo: PathBuf,
    cpu: RwLock<Arc<ModelBundle>>,
    memory: RwLock<Arc<ModelBundle>>,
    stop: AtomicBool,
}

impl Shared {
    fn slot(&self, resource: Resource) -> &RwLock<Arc<ModelBundle>> {
        match resource {
            Resource::Cpu => &self.cpu,
            Resource::Memory => &self.memory,
        }
    }

    fn snapshot(&self, resource: Resource) -> Arc<ModelBundle> {
        Arc::clone(&self.slot(resource).read().expect("bundle lock poisoned"))
    }
}

/// Handle to a running service; dropping it without calling
/// [`ServerHandle::shutdown`] leaves worker threads running.
pub struct ServerHandle {
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
    addr: std::net::SocketAddr,
}

impl ServerHandle {
    pub fn addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    /// Atomically replace the served bundle for one resource with a
    /// repository version. On any failure the previous bundle keeps
    /// serving. Returns the replaced version.
    pub fn swap_model(&self, resource: Resource, version: VersionSpec) -> Result<u32> {
        swap_model(&self.shared, resource, version)
    }

    /// Currently served versions (cpu, memory).
    pub fn versions(&self) -> (u32, u32) {
        (
            self.shared.snapshot(Resource::Cpu).version,
            self.shared.snapshot(Resource::Memory).version,
        )
    }

    /// Stop accepting work, let in-flight requests finish, and join
    /// the workers.
    pub fn shutdown(self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        for _ in 0..self.workers.len() {
            self.shared.server.unblock();
        }
        for worker in self.workers {
            let _ = worker.join();
        }
    }
}

fn swap_model(shared: &Shared, resource: Resource, version: VersionSpec) -> Result<u32> {
    let bundle = load_bundle(&shared.repo, resource, version)?;
    let mut slot = shared
        .slot(resource)
        .write()
        .map_err(|_| Error::ModelUnavailable("bundle lock poisoned".to_string()))?;
    let previous = slot.version;
    *slot = Arc::new(bundle);
    Ok(previous)
}

/// Load the latest bundles and start serving on `bind` (e.g.
/// `127.0.0.1:8080`; port 0 picks a free port).
pub fn serve(repo: &Path, bind: &str, options: ServeOptions) -> Result<ServerHandle> {
    let cpu = load_bundle(repo, Resource::Cpu, VersionSpec::Latest)
        .map_err(|e| Error::StartupError(format!("cpu bundle: {e}")))?;
    let memory = load_bundle(repo, Resource::Memory, VersionSpec::Latest)
        .map_err(|e| Error::StartupError(format!("memory bundle: {e}")))?;
    let server =
        Server::http(bind).map_err(|e| Error::StartupError(format!("bind {bind}: {e}")))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::StartupError("non-IP listen address".to_string()))?;

    let shared = Arc::new(Shared {
        server,
        repo: repo.to_path_buf(),
        cpu: RwLock::new(Arc::new(cpu)),
        memory: RwLock::new(Arc::new(memory)),
        stop: AtomicBool::new(false),
    });

    let workers = (0..options.workers.max(1))
        .map(|_| {
            let shared = Arc::clone(&shared);
            std::thread::spawn(move || worker_loop(&shared))
        })
        .collect();

    Ok(ServerHandle {
        shared,
        workers,
        addr,
    })
}

fn worker_loop(shared: &Shared) {
    while !shared.stop.load(Ordering::SeqCst) {
        match shared.server.recv_timeout(Duration::from_millis(50)) {
            Ok(Some(request)) => handle_request(shared, request),
            Ok(None) => continue,
            Err(_) => continue,
        }
    }
}

fn json_header() -> Header {
    Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header is valid")
}

fn respond_json(request: Request, status: u16, body: &serde_json::Value) {
    let response = Response::from_string(body.to_string())
        .with_status_code(status)
        .with_header(json_header());
    let _ = request.respond(response);
}

fn respond_error(request: Request, status: u16, code: &str, message: &str) {
    respond_json(
        request,
        status,
        &json!({ "error": code, "message": message }),
    );
}

fn read_body(request: &mut Request) -> std::io::Result<String> {
    let mut body = String::new();
    request.as_reader().read_to_string(&mut body)?;
    Ok(body)
}

fn handle_request(shared: &Shared, request: Request) {
    let method = request.method().as_str().to_string();
    let url = request.url().to_string();
    match (method.as_str(), url.as_str()) {
        ("GET", "/health") => respond_json(request, 200, &json!({ "status": "ok" })),
        ("GET", "/v1/model") => handle_model_info(shared, request),
        ("POST", "/v1/predict/cpu") => handle_predict(shared, request, Resource::Cpu),
        ("POST", "/v1/predict/memory") => handle_predict(shared, request, Resource::Memory),
        ("POST", "/v1/reload") => handle_reload(shared, request),
        _ => respond_error(request, 404, "not_found", &format!("no route for {method} {url}")),
    }
}

fn handle_model_info(shared: &Shared, request: Request) {
    let describe = |bundle: &ModelBundle| {
        json!({
            "version": bundle.version,
            "model_kind": bundle.model.kind().as_str(),
            "vectorizer_kind": bundle.vectorizer_kind.as_str(),
            "trained_at": bundle.trained_at.to_rfc3339(),
            "accuracy": bundle.training_metrics.accuracy,
            "class_labels": bundle.scheme.labels(),
        })
    };
    let cpu = shared.snapshot(Resource::Cpu);
    let memory = shared.snapshot(Resource::Memory);
    respond_json(
        request,
        200,
        &json!({ "cpu": describe(&cpu), "memory": describe(&memory) }),
    );
}

fn handle_predict(shared: &Shared, mut request: Request, resource: Resource) {
    let body = match read_body(&mut request) {
        Ok(body) => body,
        Err(e) => return respond_error(request, 400, "bad_request", &format!("unreadable body: {e}")),
    };
    let parsed: serde_json::Value = match serde_json::from_str(&body) {
        Ok(value) => value,
        Err(e) => return respond_error(request, 400, "bad_request", &format!("malformed JSON: {e}")),
    };
    let query = match parsed.get("query").and_then(|q| q.as_str()) {
        Some(q) => q,
        None => return respond_error(request, 400, "bad_request", "missing string field `query`"),
    };
    if query.trim().is_empty() {
        return respond_error(request, 400, "bad_request", "empty query");
    }

    // one immutable snapshot per request: vocabulary, model and
    // version always belong together
    let bundle = shared.snapshot(resource);
    let started = Instant::now();
    let (probs, class) = match bundle.predict_sql(query) {
        Ok(result) => result,
        Err(e) => return respond_error(request, 503, "model_unavailable", &e.to_string()),
    };
    let inference_micros = started.elapsed().as_micros() as u64;

    let labels = bundle.scheme.labels();
    let response = PredictionResponse {
        class_label: labels[class].clone(),
        class_index: class,
        probabilities: labels
            .iter()
            .cloned()
            .zip(probs.iter().copied())
            .collect(),
        model_version: bundle.version,
        inference_micros,
    };
    match serde_json::to_value(&response) {
        Ok(value) => respond_json(request, 200, &value),
        Err(e) => respond_error(request, 503, "model_unavailable", &e.to_string()),
    }
}

#[derive(Deserialize)]
struct ReloadBody {
    resource: Resource,
    version: serde_json::Value,
}

fn handle_reload(shared: &Shared, mut request: Request) {
    let body = match read_body(&mut request) {
        Ok(body) => body,
        Err(e) => return respond_error(request, 400, "bad_request", &format!("unreadable body: {e}")),
    };
    let parsed: ReloadBody = match serde_json::from_str(&body) {
        Ok(parsed) => parsed,
        Err(e) => return respond_error(request, 400, "bad_request", &format!("malformed body: {e}")),
    };
    let version = match &parsed.version {
        serde_json::Value::String(s) if s == "latest" => VersionSpec::Latest,
        serde_json::Value::Number(n) => match n.as_u64() {
            Some(v) if v <= u32::MAX as u64 => VersionSpec::Number(v as u32),
            _ => return respond_error(request, 400, "bad_request", "version out of range"),
        },
        _ => {
            return respond_error(
                request,
                400,
                "bad_request",
                "version must be a number or \"latest\"",
            )
        }
    };

    match swap_model(shared, parsed.resource, version) {
        Ok(previous) => {
            let current = shared.snapshot(parsed.resource).version;
            respond_json(
                request,
                200,
                &json!({
                    "resource": parsed.resource.as_str(),
                    "previous_version": previous,
                    "version": current,
                }),
            );
        }
        Err(Error::NotFound(message)) => respond_error(request, 404, "not_found", &message),
        // the old bundle keeps serving on any load failure
        Err(e) => respond_error(request, 409, "reload_failed", &e.to_string()),
    }
}
