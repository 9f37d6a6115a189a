//! Discretization of CPU time and peak memory into three ordered cost
//! classes, plus the stratified train/test split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::QueryLogRecord;

/// Which resource a scheme discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Cpu,
    Memory,
}

impl Resource {
    pub fn as_str(&self) -> &'static str {
        match self {
            Resource::Cpu => "cpu",
            Resource::Memory => "memory",
        }
    }

    /// Raw value of this resource on a log record.
    pub fn value_of(&self, record: &QueryLogRecord) -> u64 {
        match self {
            Resource::Cpu => record.cpu_time_ms,
            Resource::Memory => record.peak_memory_bytes,
        }
    }
}

impl std::fmt::Display for Resource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One ordered discretization bucket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostClass {
    pub index: usize,
    pub label: String,
}

/// Three-way discretization of a resource: `[0, b0)`, `[b0, b1)`,
/// `[b1, inf)` with strictly increasing boundaries, all intervals
/// left-closed right-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassScheme {
    pub resource: Resource,
    pub boundaries: [u64; 2],
}

/// Number of classes per scheme.
pub const NUM_CLASSES: usize = 3;

/// Default CPU boundaries: 30 s and 5 h, in milliseconds.
pub const CPU_BOUNDARIES_MS: [u64; 2] = [30_000, 18_000_000];
/// Default memory boundaries: 1 MB and 1 TB, in bytes (SI decimal).
pub const MEMORY_BOUNDARIES_BYTES: [u64; 2] = [1_000_000, 1_000_000_000_000];

impl ClassScheme {
    pub fn new(resource: Resource, boundaries: [u64; 2]) -> Result<Self> {
        if boundaries[0] == 0 || boundaries[0] >= boundaries[1] {
            return Err(Error::InvariantViolation(format!(
                "scheme boundaries must be strictly increasing and positive, got {boundaries:?}"
            )));
        }
        Ok(ClassScheme {
            resource,
            boundaries,
        })
    }

    /// The `[0, 30s) / [30s, 5h) / [5h, )` scheme.
    pub fn cpu_default() -> Self {
        ClassScheme {
            resource: Resource::Cpu,
            boundaries: CPU_BOUNDARIES_MS,
        }
    }

    /// The `[0, 1MB) / [1MB, 1TB) / [1TB, )` scheme.
    pub fn memory_default() -> Self {
        ClassScheme {
            resource: Resource::Memory,
            boundaries: MEMORY_BOUNDARIES_BYTES,
        }
    }

    /// Display labels for the three classes, e.g. `"[30s, 5h)"`.
    pub fn labels(&self) -> [String; 3] {
        let b0 = self.humanize(self.boundaries[0]);
        let b1 = self.humanize(self.boundaries[1]);
        [
            format!("[0, {b0})"),
            format!("[{b0}, {b1})"),
            format!("[{b1}, )"),
        ]
    }

    pub fn label_of(&self, index: usize) -> String {
        self.labels()[index].clone()
    }

    /// Index of the top (resource-consuming) class.
    pub fn heavy_class(&self) -> usize {
        NUM_CLASSES - 1
    }

    fn humanize(&self, v: u64) -> String {
        match self.resource {
            Resource::Cpu => {
                if v.is_multiple_of(3_600_000) {
                    format!("{}h", v / 3_600_000)
                } else if v.is_multiple_of(60_000) {
                    format!("{}min", v / 60_000)
                } else if v.is_multiple_of(1_000) {
                    format!("{}s", v / 1_000)
                } else {
                    format!("{v}ms")
                }
            }
            Resource::Memory => {
                if v.is_multiple_of(1_000_000_000_000) {
                    format!("{}TB", v / 1_000_000_000_000)
                } else if v.is_multiple_of(1_000_000_000) {
                    format!("{}GB", v / 1_000_000_000)
                } else if v.is_multiple_of(1_000_000) {
                    format!("{}MB", v / 1_000_000)
                } else if v.is_multiple_of(1_000) {
                    format!("{}KB", v / 1_000)
                } else {
                    format!("{v}B")
                }
            }
        }
    }
}

/// Map a raw value to its class under the scheme. Total on all
/// non-negative values; intervals are left-closed right-open.
pub fn classify(value: u64, scheme: &ClassScheme) -> CostClass {
    let index = classify_index(value, scheme);
    CostClass {
        index,
        label: scheme.label_of(index),
    }
}

/// Like [`classify`] but returns only the class index.
pub fn classify_index(value: u64, scheme: &ClassScheme) -> usize {
    if value < scheme.boundaries[0] {
        0
    } else if value < scheme.boundaries[1] {
        1
    } else {
        2
    }
}

/// A query with both resource classes attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub query: String,
    pub cpu_class: CostClass,
    pub mem_class: CostClass,
}

/// Per-class counts for both resources, emitted alongside labeling.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub cpu_counts: [usize; 3],
    pub mem_counts: [usize; 3],
    pub total: usize,
}

/// Discretize every record under the two schemes.
pub fn label_records(
    records: &[QueryLogRecord],
    cpu_scheme: &ClassScheme,
    mem_scheme: &ClassScheme,
) -> (Vec<LabeledExample>, LabelDistribution) {
    let mut distribution = LabelDistribution::default();
    let examples = records
        .iter()
        .map(|r| {
            let cpu_class = classify(r.cpu_time_ms, cpu_scheme);
            let mem_class = classify(r.peak_memory_bytes, mem_scheme);
            distribution.cpu_counts[cpu_class.index] += 1;
            distribution.mem_counts[mem_class.index] += 1;
            distribution.total += 1;
            LabeledExample {
                query: r.query.clone(),
                cpu_class,
                mem_class,
            }
        })
        .collect();
    (examples, distribution)
}

/// Deterministic stratified split by cpu class. Each class contributes
/// within one example of `train_fraction` of its size; the overall
/// train size equals `round(n * train_fraction)`.
pub fn split(
    examples: Vec<LabeledExample>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, ex) in examples.iter().enumerate() {
        by_class[ex.cpu_class.index].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() == 1 {
            return Err(Error::InsufficientData(format!(
                "cpu class {c} has a single example; cannot split"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
    }

    // Largest-remainder apportionment: per-class train counts stay
    // within one of the exact fraction while the total matches
    // round(n * fraction).
    let n: usize = examples.len();
    let target_total = (n as f64 * train_fraction).round() as usize;
    let mut takes: [usize; 3] = [0; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut base_total = 0usize;
    for (c, members) in by_class.iter().enumerate() {
        let exact = members.len() as f64 * train_fraction;
        takes[c] = exact.floor() as usize;
        base_total += takes[c];
        remainders.push((c, exact - exact.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut leftover = target_total.saturating_sub(base_total);
    for (c, _) in remainders {
        if leftover == 0 {
            break;
        }
        if !by_class[c].is_empty() && takes[c] < by_class[c].len() {
            takes[c] += 1;
            leftover -= 1;
        }
    }
    // Every present class keeps at least one example on each side.
    for (c, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        takes[c] = takes[c].clamp(1, members.len() - 1);
    }

    let mut train_idx = Vec::with_capacity(target_total);
    let mut test_idx = Vec::with_capacity(n - target_total);
    for (c, members) in by_class.iter().enumerate() {
        train_idx.extend_from_slice(&members[..takes[c]]);
        test_idx.extend_from_slice(&members[takes[c]..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let mut train = Vec::with_capacity(train_idx.len());
    let mut test = Vec::with_capacity(test_idx.len());
    let mut examples: Vec<Option<LabeledExample>> = examples.into_iter().map(Some).collect();
    for i in train_idx {
        train.push(examples[i].take().unwrap());
    }
    for i in test_idx {
        test.push(examples[i].take().unwrap());
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example(cpu_index: usize) -> LabeledExample {
        let scheme = ClassScheme::cpu_default();
        let value = match cpu_index {
            0 => 10,
            1 => 60_000,
            _ => 20_000_000,
        };
        LabeledExample {
            query: format!("select {cpu_index}"),
            cpu_class: classify(value, &scheme),
            mem_class: classify(500, &ClassScheme::memory_default()),
        }
    }

    #[test]
    fn table_rows_classify_as_expected() {
        let cpu = ClassScheme::cpu_default();
        let mem = ClassScheme::memory_default();
        // cpu_time_ms column
        assert_eq!(classify_index(10_143_681, &cpu), 1);
        assert_eq!(classify_index(5_903_987, &cpu), 1);
        assert_eq!(classify_index(284_392, &cpu), 1);
        assert_eq!(classify_index(53, &cpu), 0);
        assert_eq!(classify_index(179_972, &cpu), 1);
        // peak_memory_bytes column
        assert_eq!(classify_index(1_204_117_281, &mem), 1);
        assert_eq!(classify_index(9_038_118_972, &mem), 1);
        assert_eq!(classify_index(45_056, &mem), 0);
        assert_eq!(classify_index(118_783_230, &mem), 1);
    }

    #[test]
    fn boundaries_are_left_closed() {
        let cpu = ClassScheme::cpu_default();
        assert_eq!(classify_index(29_999, &cpu), 0);
        assert_eq!(classify_index(30_000, &cpu), 1);
        assert_eq!(classify_index(30_001, &cpu), 1);
        assert_eq!(classify_index(17_999_999, &cpu), 1);
        assert_eq!(classify_index(18_000_000, &cpu), 2);
        assert_eq!(classify_index(18_000_001, &cpu), 2);
        let mem = ClassScheme::memory_default();
        assert_eq!(classify_index(999_999, &mem), 0);
        assert_eq!(classify_index(1_000_000, &mem), 1);
        assert_eq!(classify_index(999_999_999_999, &mem), 1);
        assert_eq!(classify_index(1_000_000_000_000, &mem), 2);
    }

    #[test]
    fn labels_match_the_published_strings() {
        assert_eq!(
            ClassScheme::cpu_default().labels(),
            ["[0, 30s)", "[30s, 5h)", "[5h, )"]
        );
        assert_eq!(
            ClassScheme::memory_default().labels(),
            ["[0, 1MB)", "[1MB, 1TB)", "[1TB, )"]
        );
    }

    #[test]
    fn split_sizes_and_determinism() {
        let examples: Vec<LabeledExample> = (0..100)
            .map(|i| example(if i < 70 { 0 } else if i < 95 { 1 } else { 2 }))
            .collect();
        let (train, test) = split(examples.clone(), 0.8, 7).unwrap();
        assert_eq!(train.len(), 80);
        assert_eq!(test.len(), 20);
        let (train2, test2) = split(examples, 0.8, 7).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_is_stratified_within_one() {
        let mut examples = Vec::new();
        for _ in 0..7000 {
            examples.push(example(0));
        }
        for _ in 0..2900 {
            examples.push(example(1));
        }
        for _ in 0..100 {
            examples.push(example(2));
        }
        let (train, _test) = split(examples, 0.8, 3).unwrap();
        let mut counts = [0usize; 3];
        for ex in &train {
            counts[ex.cpu_class.index] += 1;
        }
        for (c, expected) in [(0usize, 5600.0), (1, 2320.0), (2, 80.0)] {
            assert!(
                (counts[c] as f64 - expected).abs() <= 1.0,
                "class {c} train count {} not within 1 of {expected}",
                counts[c]
            );
        }
    }

    #[test]
    fn split_rejects_singleton_class() {
        let mut examples = vec![example(0), example(0), example(1), example(1)];
        examples.push(example(2)); // only one heavy example
        assert!(matches!(
            split(examples, 0.8, 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn label_distribution_counts() {
        let records: Vec<_> = [53u64, 60_000, 20_000_000, 10]
            .iter()
            .enumerate()
            .map(|(i, &cpu)| QueryLogRecord {
                query_id: format!("q{i}"),
                user: "u".into(),
                cluster: "c".into(),
                query: "select 1".into(),
                cpu_time_ms: cpu,
                peak_memory_bytes: 500,
                datehour: "2020021013".parse().unwrap(),
            })
            .collect();
        let (examples, dist) = label_records(
            &records,
            &ClassScheme::cpu_default(),
            &ClassScheme::memory_default(),
        );
        assert_eq!(examples.len(), 4);
        assert_eq!(dist.cpu_counts, [2, 1, 1]);
        assert_eq!(dist.mem_counts, [4, 0, 0]);
        assert_eq!(dist.total, 4);
    }

    #[test]
    fn empty_input_labels_to_empty() {
        let (examples, dist) = label_records(
            &[],
            &ClassScheme::cpu_default(),
            &ClassScheme::memory_default(),
        );
        assert!(examples.is_empty());
        assert_eq!(dist.total, 0);
    }

    proptest! {
        #[test]
        fn classify_is_monotone(a in 0u64..100_000_000, b in 0u64..100_000_000) {
            let scheme = ClassScheme::cpu_default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(classify_index(lo, &scheme) <= classify_index(hi, &scheme));
        }

        #[test]
        fn split_partitions_input(seed in 0u64..1000, n0 in 2usize..40, n1 in 2usize..40, n2 in 2usize..40) {
            let mut examples = Vec::new();
            for _ in 0..n0 { examples.push(example(0)); }
            for _ in 0..n1 { examples.push(example(1)); }
            for _ in 0..n2 { examples.push(example(2)); }
            let total = examples.len();
            let (train, test) = split(examples, 0.8, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), total);
            // Multiset union equals input: counts per class match.
            let mut counts = [0usize; 3];
            for ex in train.iter().chain(test.iter()) {
                counts[ex.cpu_class.index] += 1;
            }
            prop_assert_eq!(counts, [n0, n1, n2]);
        }
    }
}
