//! The end-to-end training path shared by the CLI and the retraining
//! workflow: clean, label, split 80/20, fit the vocabulary on the
//! training split only, cross-validate, fit, and evaluate held-out
//! metrics for both resources.

use std::time::{Duration, Instant};

use chrono::Utc;

use crate::error::Result;
use crate::eval::{evaluate, EvalReport};
use crate::featurize::{
    build_vocabulary, fit_idf, tokenize, SparseVector, TokenList, VectorizerKind, Vocabulary,
};
use crate::ingest::{clean, QueryLogRecord};
use crate::labeling::{
    label_records, split, ClassScheme, LabelDistribution, LabeledExample, Resource,
};
use crate::model::{
    cross_validate, cv::train_model_with_detail, cv::FitDetail, derive_seed, CvReport,
    Hyperparameters, ModelKind,
};
use crate::repo::ModelBundle;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub model: ModelKind,
    pub vectorizer: VectorizerKind,
    /// Hyperparameter grid for cross-validation; one candidate means
    /// the defaults are validated and used as-is.
    pub grid: Vec<Hyperparameters>,
    pub folds: usize,
    pub train_fraction: f64,
    pub min_df: u32,
    pub max_features: usize,
    pub cpu_scheme: ClassScheme,
    pub mem_scheme: ClassScheme,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(model: ModelKind, vectorizer: VectorizerKind, seed: u64) -> Self {
        PipelineConfig {
            model,
            vectorizer,
            grid: vec![Hyperparameters::defaults_for(model)],
            folds: 3,
            train_fraction: 0.8,
            min_df: 2,
            max_features: 50_000,
            cpu_scheme: ClassScheme::cpu_default(),
            mem_scheme: ClassScheme::memory_default(),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResourceOutcome {
    pub bundle: ModelBundle,
    pub cv: CvReport,
    pub test_report: EvalReport,
    pub fit: FitDetail,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub cpu: ResourceOutcome,
    pub memory: ResourceOutcome,
    pub distribution: LabelDistribution,
    pub n_train: usize,
    pub n_test: usize,
    pub vocabulary_size: usize,
    pub elapsed: Duration,
}

struct PreparedData {
    vocabulary: Vocabulary,
    train: Vec<LabeledExample>,
    test: Vec<LabeledExample>,
    train_tokens: Vec<TokenList>,
    test_tokens: Vec<TokenList>,
    distribution: LabelDistribution,
}

impl PreparedData {
    fn vectorize(&self, kind: VectorizerKind) -> Result<(Vec<SparseVector>, Vec<SparseVector>)> {
        let x_train = self
            .train_tokens
            .iter()
            .map(|t| kind.vectorize(t, &self.vocabulary))
            .collect::<Result<_>>()?;
        let x_test = self
            .test_tokens
            .iter()
            .map(|t| kind.vectorize(t, &self.vocabulary))
            .collect::<Result<_>>()?;
        Ok((x_train, x_test))
    }

    fn labels(&self, resource: Resource) -> (Vec<usize>, Vec<usize>) {
        let label_of = |ex: &LabeledExample| match resource {
            Resource::Cpu => ex.cpu_class.index,
            Resource::Memory => ex.mem_class.index,
        };
        (
            self.train.iter().map(label_of).collect(),
            self.test.iter().map(label_of).collect(),
        )
    }
}

fn prepare(
    records: &[QueryLogRecord],
    cpu_scheme: &ClassScheme,
    mem_scheme: &ClassScheme,
    train_fraction: f64,
    min_df: u32,
    max_features: usize,
    seed: u64,
) -> Result<PreparedData> {
    let cleaned = clean(records.to_vec())?;
    let (examples, distribution) = label_records(&cleaned, cpu_scheme, mem_scheme);
    let (train, test) = split(examples, train_fraction, derive_seed(seed, 0x5917))?;

    // vocabulary is fit on the training split only; idf weights are
    // always attached so either vectorizer can run against it
    let train_tokens: Vec<TokenList> = train.iter().map(|ex| tokenize(&ex.query)).collect();
    let test_tokens: Vec<TokenList> = test.iter().map(|ex| tokenize(&ex.query)).collect();
    let vocabulary = fit_idf(build_vocabulary(&train_tokens, min_df, max_features)?);

    Ok(PreparedData {
        vocabulary,
        train,
        test,
        train_tokens,
        test_tokens,
        distribution,
    })
}

/// Run the full pipeline and return unsaved bundles for both resources
/// together with their held-out reports.
pub fn train_models(records: &[QueryLogRecord], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let started = Instant::now();
    let data = prepare(
        records,
        &cfg.cpu_scheme,
        &cfg.mem_scheme,
        cfg.train_fraction,
        cfg.min_df,
        cfg.max_features,
        cfg.seed,
    )?;
    let (x_train, x_test) = data.vectorize(cfg.vectorizer)?;

    let mut outcomes = Vec::with_capacity(2);
    for (resource, scheme) in [
        (Resource::Cpu, &cfg.cpu_scheme),
        (Resource::Memory, &cfg.mem_scheme),
    ] {
        let (y_train, y_test) = data.labels(resource);
        let cv = cross_validate(
            &x_train,
            &y_train,
            cfg.folds,
            &cfg.grid,
            derive_seed(cfg.seed, 0xCF0 + resource as u64),
        )?;
        let (model, fit) = train_model_with_detail(
            &x_train,
            &y_train,
            &cv.best,
            derive_seed(cfg.seed, 0xF17 + resource as u64),
        )?;
        let test_report = evaluate(&model, &x_test, &y_test)?;
        outcomes.push(ResourceOutcome {
            bundle: ModelBundle {
                version: 0,
                resource,
                scheme: scheme.clone(),
                vocabulary: data.vocabulary.clone(),
                vectorizer_kind: cfg.vectorizer,
                model,
                trained_at: Utc::now(),
                training_metrics: test_report.clone(),
                hyperparameters: cv.best.clone(),
            },
            cv,
            test_report,
            fit,
        });
    }

    let memory = outcomes.pop().unwrap();
    let cpu = outcomes.pop().unwrap();
    Ok(PipelineOutput {
        cpu,
        memory,
        n_train: data.train.len(),
        n_test: data.test.len(),
        vocabulary_size: data.vocabulary.dimension(),
        distribution: data.distribution,
        elapsed: started.elapsed(),
    })
}

/// Retrain both models on fresh logs, re-using each previous bundle's
/// hyperparameters, vectorizer and scheme (no new grid search). The
/// vocabulary is refit on the new training split so newly emerged
/// tokens become features.
pub fn retrain_with(
    records: &[QueryLogRecord],
    previous_cpu: &ModelBundle,
    previous_mem: &ModelBundle,
    seed: u64,
) -> Result<(ModelBundle, ModelBundle)> {
    let data = prepare(
        records,
        &previous_cpu.scheme,
        &previous_mem.scheme,
        0.8,
        2,
        50_000,
        seed,
    )?;

    type FeatureSets = (Vec<SparseVector>, Vec<SparseVector>);
    let mut bundles = Vec::with_capacity(2);
    let mut cached: Option<(VectorizerKind, FeatureSets)> = None;
    for (previous, resource) in [
        (previous_cpu, Resource::Cpu),
        (previous_mem, Resource::Memory),
    ] {
        let kind = previous.vectorizer_kind;
        if cached.as_ref().map(|(k, _)| *k) != Some(kind) {
            cached = Some((kind, data.vectorize(kind)?));
        }
        let (x_train, x_test) = &cached.as_ref().unwrap().1;
        let (y_train, y_test) = data.labels(resource);
        let (model, _) = train_model_with_detail(
            x_train,
            &y_train,
            &previous.hyperparameters,
            derive_seed(seed, 0xE7 + resource as u64),
        )?;
        let test_report = evaluate(&model, x_test, &y_test)?;
        bundles.push(ModelBundle {
            version: 0,
            resource,
            scheme: previous.scheme.clone(),
            vocabulary: data.vocabulary.clone(),
            vectorizer_kind: kind,
            model,
            trained_at: Utc::now(),
            training_metrics: test_report,
            hyperparameters: previous.hyperparameters.clone(),
        });
    }
    let memory = bundles.pop().unwrap();
    let cpu = bundles.pop().unwrap();
    Ok((cpu, memory))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{default_spec, generate};

    #[test]
    fn pipeline_trains_both_resources_deterministically() {
        let mut spec = default_spec();
        spec.noise_rate = 0.0;
        let records = generate(&spec, 1500, 21).unwrap();
        let cfg = PipelineConfig::new(ModelKind::Logreg, VectorizerKind::Tfidf, 77);
        let a = train_models(&records, &cfg).unwrap();
        let b = train_models(&records, &cfg).unwrap();
        assert_eq!(a.n_train, 1200);
        assert_eq!(a.n_test, 300);
        assert!(a.cpu.test_report.same_metrics(&b.cpu.test_report));
        assert!(a.memory.test_report.same_metrics(&b.memory.test_report));
        assert!(
            a.cpu.test_report.accuracy > 0.9,
            "cpu accuracy {}",
            a.cpu.test_report.accuracy
        );
    }

    #[test]
    fn vocabulary_never_contains_test_only_tokens() {
        let spec = default_spec();
        let records = generate(&spec, 1200, 5).unwrap();
        let cfg = PipelineConfig::new(ModelKind::Logreg, VectorizerKind::Count, 3);
        let out = train_models(&records, &cfg).unwrap();
        let vocab = &out.cpu.bundle.vocabulary;

        // recount document frequencies over the training split alone:
        // every vocabulary token must clear min_df within it
        let cleaned = clean(records.clone()).unwrap();
        let (examples, _) = label_records(&cleaned, &cfg.cpu_scheme, &cfg.mem_scheme);
        let (train, _test) =
            split(examples, cfg.train_fraction, derive_seed(cfg.seed, 0x5917)).unwrap();
        for token_index in 0..vocab.dimension() {
            let token = vocab.token_at(token_index);
            let df = train
                .iter()
                .filter(|ex| tokenize(&ex.query).0.iter().any(|t| t == token))
                .count() as u32;
            assert!(
                df >= cfg.min_df,
                "token `{token}` has train df {df} < {}",
                cfg.min_df
            );
            assert_eq!(df, vocab.doc_freq()[token_index]);
        }
    }

    #[test]
    fn noiseless_signal_reaches_near_perfect_holdout() {
        let mut spec = default_spec();
        spec.noise_rate = 0.0;
        let records = generate(&spec, 4000, 11).unwrap();
        let cfg = PipelineConfig::new(ModelKind::Gbt, VectorizerKind::Tfidf, 19);
        let out = train_models(&records, &cfg).unwrap();
        assert!(
            out.cpu.test_report.accuracy >= 0.99,
            "cpu {}",
            out.cpu.test_report.accuracy
        );
        assert!(
            out.memory.test_report.accuracy >= 0.99,
            "memory {}",
            out.memory.test_report.accuracy
        );
    }
}
