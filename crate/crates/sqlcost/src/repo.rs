//! Versioned on-disk storage for trained model artifacts.
//!
//! Layout: `<repo>/<resource>/<version>/` holding `manifest.json`,
//! `payload.json` and `payload.sha256`. Saves write into a temp
//! directory and publish with one atomic rename, so readers never see a
//! partial bundle; version numbers increase monotonically per resource.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::featurize::{tokenize, VectorizerKind, Vocabulary};
use crate::labeling::{ClassScheme, Resource};
use crate::model::{argmax, Hyperparameters, Model};

/// The atomic deployable unit: vocabulary, vectorizer kind, model
/// parameters, discretization scheme and training metadata under one
/// version.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub resource: Resource,
    pub scheme: ClassScheme,
    pub vocabulary: Vocabulary,
    pub vectorizer_kind: VectorizerKind,
    pub model: Model,
    pub trained_at: DateTime<Utc>,
    pub training_metrics: EvalReport,
    pub hyperparameters: Hyperparameters,
}

impl ModelBundle {
    /// Structural invariants every stored bundle satisfies.
    pub fn validate(&self) -> Result<()> {
        if self.vocabulary.dimension() != self.model.dimension() {
            return Err(Error::InvariantViolation(format!(
                "vocabulary dimension {} != model dimension {}",
                self.vocabulary.dimension(),
                self.model.dimension()
            )));
        }
        if self.scheme.resource != self.resource {
            return Err(Error::InvariantViolation(format!(
                "bundle resource {} does not match scheme resource {}",
                self.resource, self.scheme.resource
            )));
        }
        if self.model.n_classes() != crate::labeling::NUM_CLASSES {
            return Err(Error::InvariantViolation(format!(
                "model has {} classes, scheme defines {}",
                self.model.n_classes(),
                crate::labeling::NUM_CLASSES
            )));
        }
        Ok(())
    }

    /// Full inference path for one raw SQL statement: tokenize,
    /// vectorize with the bundle's vectorizer, predict. Returns the
    /// class probabilities and the argmax class index.
    pub fn predict_sql(&self, sql: &str) -> Result<(Vec<f64>, usize)> {
        let tokens = tokenize(sql);
        let features = self.vectorizer_kind.vectorize(&tokens, &self.vocabulary)?;
        let probs = self.model.predict_proba(&features)?;
        let class = argmax(&probs);
        Ok((probs, class))
    }
}

/// Version selector for loads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VersionSpec {
    Latest,
    Number(u32),
}

impl std::str::FromStr for VersionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "latest" {
            return Ok(VersionSpec::Latest);
        }
        s.parse::<u32>().map(VersionSpec::Number).map_err(|_| {
            Error::Config(format!("invalid version `{s}` (expected a number or `latest`)"))
        })
    }
}

/// `manifest.json` schema. Field set and order are part of the on-disk
/// contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub resource: String,
    pub vectorizer_kind: String,
    pub model_kind: String,
    pub trained_at: String,
    pub class_labels: Vec<String>,
    pub checksum: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn resource_dir(repo: &Path, resource: Resource) -> PathBuf {
    repo.join(resource.as_str())
}

fn version_dir(repo: &Path, resource: Resource, version: u32) -> PathBuf {
    resource_dir(repo, resource).join(version.to_string())
}

/// All version numbers currently stored for a resource, ascending.
pub fn stored_versions(repo: &Path, resource: Resource) -> Result<Vec<u32>> {
    let dir = resource_dir(repo, resource);
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut versions = Vec::new();
    for entry in fs::read_dir(&dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        if let Some(v) = entry
            .file_name()
            .to_str()
            .and_then(|name| name.parse::<u32>().ok())
        {
            versions.push(v);
        }
    }
    versions.sort_unstable();
    Ok(versions)
}

/// Latest stored version for a resource, if any.
pub fn latest_version(repo: &Path, resource: Resource) -> Result<Option<u32>> {
    Ok(stored_versions(repo, resource)?.last().copied())
}

/// Persist a bundle, assigning the next version for its resource.
/// Returns the assigned version.
pub fn save_bundle(repo: &Path, bundle: &ModelBundle) -> Result<u32> {
    bundle.validate()?;
    let version = latest_version(repo, bundle.resource)?.unwrap_or(0) + 1;

    let mut stamped = bundle.clone();
    stamped.version = version;
    let payload = serde_json::to_vec(&stamped)?;
    let manifest = Manifest {
        version,
        resource: stamped.resource.as_str().to_string(),
        vectorizer_kind: stamped.vectorizer_kind.as_str().to_string(),
        model_kind: stamped.model.kind().as_str().to_string(),
        trained_at: stamped.trained_at.to_rfc3339(),
        class_labels: stamped.scheme.labels().to_vec(),
        checksum: sha256_hex(&payload),
    };

    let parent = resource_dir(repo, bundle.resource);
    fs::create_dir_all(&parent)?;
    let tmp = parent.join(format!(
        ".tmp-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0)
    ));
    fs::create_dir_all(&tmp)?;
    fs::write(tmp.join("payload.json"), &payload)?;
    fs::write(tmp.join("payload.sha256"), manifest.checksum.as_bytes())?;
    fs::write(tmp.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;

    let target = version_dir(repo, bundle.resource, version);
    if let Err(e) = fs::rename(&tmp, &target) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e.into());
    }
    Ok(version)
}

/// Load and fully validate a bundle; the payload checksum must match
/// the manifest.
pub fn load_bundle(repo: &Path, resource: Resource, version: VersionSpec) -> Result<ModelBundle> {
    let version = match version {
        VersionSpec::Number(v) => v,
        VersionSpec::Latest => latest_version(repo, resource)?.ok_or_else(|| {
            Error::NotFound(format!("no {resource} bundles in {}", repo.display()))
        })?,
    };
    let dir = version_dir(repo, resource, version);
    if !dir.exists() {
        return Err(Error::NotFound(format!(
            "{resource} bundle version {version} in {}",
            repo.display()
        )));
    }

    let manifest_bytes = fs::read(dir.join("manifest.json"))
        .map_err(|e| Error::CorruptBundle(format!("manifest unreadable: {e}")))?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::CorruptBundle(format!("manifest malformed: {e}")))?;
    let payload = fs::read(dir.join("payload.json"))
        .map_err(|e| Error::CorruptBundle(format!("payload unreadable: {e}")))?;
    let digest = sha256_hex(&payload);
    if digest != manifest.checksum {
        return Err(Error::CorruptBundle(format!(
            "payload checksum {digest} does not match manifest {}",
            manifest.checksum
        )));
    }
    let bundle: ModelBundle = serde_json::from_slice(&payload)
        .map_err(|e| Error::CorruptBundle(format!("payload malformed: {e}")))?;
    if bundle.version != version || bundle.resource != resource {
        return Err(Error::CorruptBundle(format!(
            "payload identifies as {}/{}, expected {resource}/{version}",
            bundle.resource, bundle.version
        )));
    }
    bundle.validate()?;
    Ok(bundle)
}

/// Summary row for one stored version.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VersionInfo {
    pub version: u32,
    pub trained_at: DateTime<Utc>,
    pub accuracy: f64,
}

/// List stored versions with their held-out accuracy, ascending.
pub fn list_versions(repo: &Path, resource: Resource) -> Result<Vec<VersionInfo>> {
    let mut out = Vec::new();
    for version in stored_versions(repo, resource)? {
        let bundle = load_bundle(repo, resource, VersionSpec::Number(version))?;
        out.push(VersionInfo {
            version,
            trained_at: bundle.trained_at,
            accuracy: bundle.training_metrics.accuracy,
        });
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::eval::ConfusionMatrix;
    use crate::featurize::{build_vocabulary, fit_idf, TokenList};
    use crate::model::LogisticModel;

    pub(crate) fn tiny_bundle(resource: Resource) -> ModelBundle {
        let corpus: Vec<TokenList> = ["select a from t", "select b from u", "select a, b from t"]
            .iter()
            .map(|s| tokenize(s))
            .collect();
        let vocab = fit_idf(build_vocabulary(&corpus, 1, 50_000).unwrap());
        let dim = vocab.dimension();
        let scheme = match resource {
            Resource::Cpu => ClassScheme::cpu_default(),
            Resource::Memory => ClassScheme::memory_default(),
        };
        let confusion = ConfusionMatrix {
            counts: vec![vec![5, 0, 0], vec![0, 4, 1], vec![0, 0, 3]],
        };
        ModelBundle {
            version: 0,
            resource,
            scheme,
            vocabulary: vocab,
            vectorizer_kind: VectorizerKind::Tfidf,
            model: Model::Logreg(LogisticModel {
                weights: vec![vec![0.1; dim], vec![0.0; dim], vec![-0.1; dim]],
                bias: vec![0.0, 0.1, 0.0],
            }),
            trained_at: Utc::now(),
            training_metrics: EvalReport::from_confusion(confusion),
            hyperparameters: Hyperparameters::defaults_for(crate::model::ModelKind::Logreg),
        }
    }

    fn temp_repo(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "sqlcost-repo-{tag}-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn versions_count_up_per_resource() {
        let repo = temp_repo("versions");
        assert_eq!(save_bundle(&repo, &tiny_bundle(Resource::Cpu)).unwrap(), 1);
        assert_eq!(save_bundle(&repo, &tiny_bundle(Resource::Cpu)).unwrap(), 2);
        assert_eq!(save_bundle(&repo, &tiny_bundle(Resource::Memory)).unwrap(), 1);
        assert_eq!(latest_version(&repo, Resource::Cpu).unwrap(), Some(2));
        assert_eq!(latest_version(&repo, Resource::Memory).unwrap(), Some(1));
        fs::remove_dir_all(&repo).ok();
    }

    #[test]
    fn save_load_roundtrip_preserves_predictions() {
        let repo = temp_repo("roundtrip");
        let bundle = tiny_bundle(Resource::Cpu);
        let version = save_bundle(&repo, &bundle).unwrap();
        let loaded = load_bundle(&repo, Resource::Cpu, VersionSpec::Number(version)).unwrap();
        assert_eq!(loaded.version, version);
        for sql in ["select a from t", "select z from zz", ""] {
            let (p1, c1) = bundle.predict_sql(sql).unwrap();
            let (p2, c2) = loaded.predict_sql(sql).unwrap();
            assert_eq!(c1, c2);
            assert_eq!(p1, p2);
        }
        fs::remove_dir_all(&repo).ok();
    }

    #[test]
    fn latest_resolves_to_highest_version() {
        let repo = temp_repo("latest");
        for _ in 0..3 {
            save_bundle(&repo, &tiny_bundle(Resource::Cpu)).unwrap();
        }
        let loaded = load_bundle(&repo, Resource::Cpu, VersionSpec::Latest).unwrap();
        assert_eq!(loaded.version, 3);
        fs::remove_dir_all(&repo).ok();
    }

    #[test]
    fn missing_version_is_not_found() {
        let repo = temp_repo("missing");
        save_bundle(&repo, &tiny_bundle(Resource::Cpu)).unwrap();
        assert!(matches!(
            load_bundle(&repo, Resource::Cpu, VersionSpec::Number(99)),
            Err(Error::NotFound(_))
        ));
        assert!(matches!(
            load_bundle(&repo, Resource::Memory, VersionSpec::Latest),
            Err(Error::NotFound(_))
        ));
        fs::remove_dir_all(&repo).ok();
    }

    #[test]
    fn tampered_payload_fails_checksum() {
        let repo = temp_repo("tamper");
        let version = save_bundle(&repo, &tiny_bundle(Resource::Cpu)).unwrap();
        let payload_path = repo
            .join("cpu")
            .join(version.to_string())
            .join("payload.json");
        let mut bytes = fs::read(&payload_path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] = bytes[mid].wrapping_add(1);
        fs::write(&payload_path, &bytes).unwrap();
        assert!(matches!(
            load_bundle(&repo, Resource::Cpu, VersionSpec::Number(version)),
            Err(Error::CorruptBundle(_))
        ));
        fs::remove_dir_all(&repo).ok();
    }

    #[test]
    fn truncated_payload_fails_checksum() {
        let repo = temp_repo("truncate");
        let version = save_bundle(&repo, &tiny_bundle(Resource::Cpu)).unwrap();
        let payload_path = repo
            .join("cpu")
            .join(version.to_string())
            .join("payload.json");
        let bytes = fs::read(&payload_path).unwrap();
        fs::write(&payload_path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_bundle(&repo, Resource::Cpu, VersionSpec::Number(version)),
            Err(Error::CorruptBundle(_))
        ));
        fs::remove_dir_all(&repo).ok();
    }

    #[test]
    fn list_versions_ascending_with_metadata() {
        let repo = temp_repo("list");
        assert!(list_versions(&repo, Resource::Cpu).unwrap().is_empty());
        save_bundle(&repo, &tiny_bundle(Resource::Cpu)).unwrap();
        save_bundle(&repo, &tiny_bundle(Resource::Cpu)).unwrap();
        let infos = list_versions(&repo, Resource::Cpu).unwrap();
        assert_eq!(infos.len(), 2);
        assert_eq!(infos[0].version, 1);
        assert_eq!(infos[1].version, 2);
        // accuracy carried from training metrics: trace 12 over 13
        assert!((infos[0].accuracy - 12.0 / 13.0).abs() < 1e-12);

        // manually removing a version directory hides that version
        fs::remove_dir_all(repo.join("cpu").join("1")).unwrap();
        let infos = list_versions(&repo, Resource::Cpu).unwrap();
        assert_eq!(infos.len(), 1);
        assert_eq!(infos[0].version, 2);
        fs::remove_dir_all(&repo).ok();
    }

    #[test]
    fn manifest_field_set_is_stable() {
        let repo = temp_repo("manifest");
        let version = save_bundle(&repo, &tiny_bundle(Resource::Memory)).unwrap();
        let manifest_path = repo
            .join("memory")
            .join(version.to_string())
            .join("manifest.json");
        let raw = fs::read_to_string(manifest_path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&raw).unwrap();
        let obj = value.as_object().unwrap();
        assert_eq!(obj.len(), 7);
        // field order in the file follows the declared schema
        let offsets: Vec<usize> = [
            "\"version\"",
            "\"resource\"",
            "\"vectorizer_kind\"",
            "\"model_kind\"",
            "\"trained_at\"",
            "\"class_labels\"",
            "\"checksum\"",
        ]
        .iter()
        .map(|key| raw.find(key).unwrap_or_else(|| panic!("missing {key}")))
        .collect();
        assert!(offsets.windows(2).all(|w| w[0] < w[1]), "{offsets:?}");
        assert_eq!(obj["resource"], "memory");
        assert_eq!(obj["model_kind"], "logreg");
        assert_eq!(
            obj["class_labels"],
            serde_json::json!(["[0, 1MB)", "[1MB, 1TB)", "[1TB, )"])
        );
        // RFC 3339 timestamp
        assert!(chrono::DateTime::parse_from_rfc3339(obj["trained_at"].as_str().unwrap()).is_ok());
        fs::remove_dir_all(&repo).ok();
    }

    #[test]
    fn invalid_bundle_rejected_on_save() {
        let repo = temp_repo("invalid");
        let mut bundle = tiny_bundle(Resource::Cpu);
        bundle.scheme = ClassScheme::memory_default();
        assert!(matches!(
            save_bundle(&repo, &bundle),
            Err(Error::InvariantViolation(_))
        ));
        fs::remove_dir_all(&repo).ok();
    }
}
