//! Windowed re-evaluation of deployed models, the retraining trigger,
//! and the retrain-republish workflow.
//!
//! "Weekly" is the window abstraction: callers feed labeled windows in
//! order (tests and the monitor loop drive them synthetically); a thin
//! scheduler would invoke the same loop in a deployment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ConfusionMatrix, EvalReport};
use crate::ingest::QueryLogRecord;
use crate::labeling::{classify_index, ClassScheme, Resource, NUM_CLASSES};
use crate::model::derive_seed;
use crate::pipeline::retrain_with;
use crate::repo::{load_bundle, save_bundle, ModelBundle, VersionSpec};
use crate::synth::{drift_shift, generate_with_end, WorkloadSpec};

/// One labeled observation joined back from completed-query logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowExample {
    pub query: String,
    pub true_class: usize,
}

/// All labeled outcomes observed in one monitoring window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitorWindow {
    pub window_index: usize,
    pub examples: Vec<WindowExample>,
}

/// Label completed-query records for one resource.
pub fn window_from_records(
    records: &[QueryLogRecord],
    scheme: &ClassScheme,
    window_index: usize,
) -> MonitorWindow {
    MonitorWindow {
        window_index,
        examples: records
            .iter()
            .map(|r| WindowExample {
                query: r.query.clone(),
                true_class: classify_index(scheme.resource.value_of(r), scheme),
            })
            .collect(),
    }
}

/// Run the bundle's full featurize-and-predict path over a window.
pub fn evaluate_window(bundle: &ModelBundle, window: &MonitorWindow) -> Result<EvalReport> {
    if window.examples.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let mut confusion = ConfusionMatrix::new(NUM_CLASSES);
    for example in &window.examples {
        let (_, predicted) = bundle.predict_sql(&example.query)?;
        if example.true_class >= NUM_CLASSES {
            return Err(Error::InvariantViolation(format!(
                "window label {} out of range",
                example.true_class
            )));
        }
        confusion.record(example.true_class, predicted);
    }
    Ok(EvalReport::from_confusion(confusion))
}

/// The retraining trigger: both precision AND recall of the heavy
/// class strictly below the threshold.
pub fn should_retrain(report: &EvalReport, heavy_class: usize, threshold: f64) -> bool {
    report.precision[heavy_class] < threshold && report.recall[heavy_class] < threshold
}

/// Per-window evaluation history for both resources.
#[derive(Debug, Clone, Default)]
pub struct DriftState {
    pub cpu_history: Vec<EvalReport>,
    pub mem_history: Vec<EvalReport>,
    pub last_retrain_window: Option<usize>,
}

/// Retrain both models on recent logs with their previous
/// hyperparameters and publish new versions (both, so the two models
/// keep consistent training timestamps). Returns the new
/// (cpu, memory) versions.
pub fn retrain_and_publish(
    repo: &Path,
    recent_logs: &[QueryLogRecord],
    previous_cpu: &ModelBundle,
    previous_mem: &ModelBundle,
    seed: u64,
) -> Result<(u32, u32)> {
    let (cpu_bundle, mem_bundle) = retrain_with(recent_logs, previous_cpu, previous_mem, seed)?;
    let cpu_version = save_bundle(repo, &cpu_bundle)?;
    let mem_version = save_bundle(repo, &mem_bundle)?;
    Ok((cpu_version, mem_version))
}

/// One line of monitor output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_index: usize,
    pub resource: Resource,
    pub accuracy: f64,
    pub heavy_precision: f64,
    pub heavy_recall: f64,
    pub retrain_triggered: bool,
    pub model_version: u32,
}

/// A retraining event fired by the monitor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrainEvent {
    pub window_index: usize,
    pub cpu_version: u32,
    pub mem_version: u32,
}

#[derive(Debug, Clone)]
pub struct MonitorConfig {
    pub windows: usize,
    /// Window index (1-based) at which the workload shifts, if any.
    pub drift_at: Option<usize>,
    pub severity: f64,
    pub window_size: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            windows: 8,
            drift_at: None,
            severity: 0.5,
            window_size: 5000,
            threshold: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonitorOutcome {
    pub reports: Vec<WindowReport>,
    pub events: Vec<RetrainEvent>,
    pub state: DriftState,
}

/// Drive a full monitoring scenario against the repository: generate
/// one window of traffic per step (shifting the workload at
/// `drift_at`), evaluate the live bundles, and retrain-and-reload when
/// the trigger fires for either resource. Retraining uses every record
/// observed so far in the scenario (the trailing window of recent
/// logs).
pub fn run_monitor(repo: &Path, spec: &WorkloadSpec, cfg: &MonitorConfig) -> Result<MonitorOutcome> {
    let mut cpu_bundle = load_bundle(repo, Resource::Cpu, VersionSpec::Latest)?;
    let mut mem_bundle = load_bundle(repo, Resource::Memory, VersionSpec::Latest)?;

    let mut active_spec = spec.clone();
    let mut accumulated: Vec<QueryLogRecord> = Vec::new();
    let mut reports = Vec::new();
    let mut events = Vec::new();
    let mut state = DriftState::default();

    for window_index in 1..=cfg.windows {
        if cfg.drift_at == Some(window_index) {
            active_spec = drift_shift(&active_spec, cfg.severity, derive_seed(cfg.seed, 0xD81F7));
        }
        let records = generate_with_end(
            &active_spec,
            cfg.window_size,
            derive_seed(cfg.seed, 0x3000 + window_index as u64),
            format!("202101{:02}00", window_index.min(28))
                .parse()
                .expect("valid synthetic datehour"),
        )?;

        let cpu_window = window_from_records(&records, &cpu_bundle.scheme, window_index);
        let mem_window = window_from_records(&records, &mem_bundle.scheme, window_index);
        let cpu_report = evaluate_window(&cpu_bundle, &cpu_window)?;
        let mem_report = evaluate_window(&mem_bundle, &mem_window)?;
        accumulated.extend(records);

        let heavy = NUM_CLASSES - 1;
        let cpu_triggered = should_retrain(&cpu_report, heavy, cfg.threshold);
        let mem_triggered = should_retrain(&mem_report, heavy, cfg.threshold);
        reports.push(WindowReport {
            window_index,
            resource: Resource::Cpu,
            accuracy: cpu_report.accuracy,
            heavy_precision: cpu_report.precision[heavy],
            heavy_recall: cpu_report.recall[heavy],
            retrain_triggered: cpu_triggered,
            model_version: cpu_bundle.version,
        });
        reports.push(WindowReport {
            window_index,
            resource: Resource::Memory,
            accuracy: mem_report.accuracy,
            heavy_precision: mem_report.precision[heavy],
            heavy_recall: mem_report.recall[heavy],
            retrain_triggered: mem_triggered,
            model_version: mem_bundle.version,
        });
        state.cpu_history.push(cpu_report);
        state.mem_history.push(mem_report);

        if cpu_triggered || mem_triggered {
            let (cpu_version, mem_version) = retrain_and_publish(
                repo,
                &accumulated,
                &cpu_bundle,
                &mem_bundle,
                derive_seed(cfg.seed, 0x6e70 + window_index as u64),
            )?;
            cpu_bundle = load_bundle(repo, Resource::Cpu, VersionSpec::Number(cpu_version))?;
            mem_bundle = load_bundle(repo, Resource::Memory, VersionSpec::Number(mem_version))?;
            state.last_retrain_window = Some(window_index);
            events.push(RetrainEvent {
                window_index,
                cpu_version,
                mem_version,
            });
        }
    }

    Ok(MonitorOutcome {
        reports,
        events,
        state,
    })
}

/// Render the per-window history as a text table (accuracy plus
/// heavy-class precision/recall for both resources).
pub fn render_history_table(reports: &[WindowReport]) -> String {
    let mut out = String::new();
    out.push_str("window  resource  version  accuracy  heavy_precision  heavy_recall  trigger\n");
    for r in reports {
        out.push_str(&format!(
            "{:>6}  {:<8}  {:>7}  {:>8.4}  {:>15.4}  {:>12.4}  {}\n",
            r.window_index,
            r.resource.as_str(),
            r.model_version,
            r.accuracy,
            r.heavy_precision,
            r.heavy_recall,
            if r.retrain_triggered { "fired" } else { "-" }
        ));
    }
    out
}
