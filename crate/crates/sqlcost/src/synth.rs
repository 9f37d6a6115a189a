//! Synthetic query request logs with a learnable text-to-cost signal.
//!
//! Each record draws a (cpu class, memory class) pair from a
//! Gaussian-copula over the class marginals (giving a tunable rank
//! correlation between the two resources), picks a SQL template
//! matching that pair, and samples raw values log-uniformly inside the
//! class interval (Pareto in the open-ended top class). The cost
//! signal lives in table-name and partition-column tokens; statement
//! shape deliberately carries no class information. `drift_shift`
//! replaces part of the template pool with previously unseen tokens to
//! reproduce concept drift.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DateHour, QueryLogRecord};
use crate::labeling::{CPU_BOUNDARIES_MS, MEMORY_BOUNDARIES_BYTES};

/// One parameterized SQL statement shape bound to a class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub id: String,
    /// Pattern with `{int}`, `{date}` and `{word}` placeholders.
    pub sql_pattern: String,
    pub cpu_class: usize,
    pub mem_class: usize,
    pub weight: f64,
}

/// Full generator configuration; serializable as a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub template_pool: Vec<QueryTemplate>,
    pub cpu_class_mix: [f64; 3],
    pub mem_class_mix: [f64; 3],
    /// Target rank correlation between CPU time and peak memory.
    pub target_correlation: f64,
    /// Probability that a record's text is drawn from an independently
    /// sampled class pair, severing the text-cost link for that record.
    pub noise_rate: f64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, mix) in [
            ("cpu_class_mix", &self.cpu_class_mix),
            ("mem_class_mix", &self.mem_class_mix),
        ] {
            if mix.iter().any(|&p| p < 0.0) || (mix.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "{name} must be non-negative and sum to 1, got {mix:?}"
                )));
            }
        }
        if !(0.0..0.5).contains(&self.noise_rate) {
            return Err(Error::Config(format!(
                "noise_rate must be in [0, 0.5), got {}",
                self.noise_rate
            )));
        }
        if self.target_correlation.abs() >= 1.0 {
            return Err(Error::Config(format!(
                "target_correlation must be in (-1, 1), got {}",
                self.target_correlation
            )));
        }
        if self.template_pool.is_empty() {
            return Err(Error::Config("template pool is empty".to_string()));
        }
        if self.template_pool.iter().any(|t| {
            t.weight <= 0.0 || t.cpu_class > 2 || t.mem_class > 2 || t.sql_pattern.trim().is_empty()
        }) {
            return Err(Error::Config(
                "templates need positive weight, classes in 0..3 and a non-empty pattern"
                    .to_string(),
            ));
        }
        // every reachable class pair needs at least one template
        for cpu in 0..3 {
            for mem in 0..3 {
                if self.cpu_class_mix[cpu] > 0.0
                    && self.mem_class_mix[mem] > 0.0
                    && !self
                        .template_pool
                        .iter()
                        .any(|t| t.cpu_class == cpu && t.mem_class == mem)
                {
                    return Err(Error::NoTemplateForClassPair { cpu, mem });
                }
            }
        }
        Ok(())
    }
}

const USERS: [&str; 6] = ["alice", "bob", "charley", "dana", "erin", "frank"];
const CLUSTERS: [&str; 3] = ["cluster_a", "cluster_b", "cluster_c"];
const WORDS: [&str; 8] = ["ios", "android", "web", "us", "jp", "de", "premium", "free"];

/// Neutral column names shared across templates of every class.
const COLUMNS: [&str; 12] = [
    "account_id",
    "event_type",
    "ts",
    "duration_ms",
    "country",
    "device",
    "session_id",
    "latency_ms",
    "segment",
    "status",
    "region",
    "uid",
];

/// Statement skeletons; assigned to templates round-robin so shape is
/// uncorrelated with cost class and the learnable signal stays in the
/// table tokens.
fn skeleton(variant: usize, table: &str, col_seed: usize) -> String {
    let col = COLUMNS[col_seed % COLUMNS.len()];
    let col2 = COLUMNS[(col_seed + 5) % COLUMNS.len()];
    match variant % 5 {
        0 => format!(
            "select {col}, {col2} from {table} where account_id = {{int}} and ds = '{{date}}' limit {{int}}"
        ),
        1 => format!(
            "select {col}, count(1) as n, sum(duration_ms) from {table} where ds >= '{{date}}' and ds < '{{date}}' group by {col} order by n desc"
        ),
        2 => format!(
            "select a.{col}, b.segment, count(1) from {table} a join dim.users_all b on a.account_id = b.account_id where ds >= '{{date}}' group by a.{col}, b.segment"
        ),
        3 => format!(
            "select distinct {col}, {col2} from {table} where ds between '{{date}}' and '{{date}}' and status = '{{word}}'"
        ),
        _ => format!(
            "select {col}, approx_percentile(latency_ms, 0.95) from {table} where ds >= '{{date}}' and region = '{{word}}' group by {col}"
        ),
    }
}

/// Fixed table names, three per (cpu, mem) class pair. The table token
/// is the only consistent class signal in a statement.
const TABLES: [[[&str; 3]; 3]; 3] = [
    // cpu class 0
    [
        [
            "dim.user_settings_latest",
            "dim.country_codes",
            "tmp.session_keys_1h",
        ],
        [
            "dim.account_profiles_wide",
            "logs.device_snapshot_small",
            "dim.media_assets_meta",
        ],
        [
            "tmp.broadcast_join_cache",
            "dim.embedding_blobs",
            "tmp.materialized_map_wide",
        ],
    ],
    // cpu class 1
    [
        [
            "logs.api_requests_1d",
            "logs.click_stream_hourly",
            "raw.search_terms_recent",
        ],
        [
            "warehouse.engagement_daily",
            "warehouse.ad_spend_summary",
            "logs.page_views_weekly",
        ],
        [
            "warehouse.user_graph_edges",
            "warehouse.session_join_wide",
            "raw.impressions_join_buffer",
        ],
    ],
    // cpu class 2
    [
        [
            "archive.events_full_scan",
            "archive.tweet_text_all_years",
            "raw.logs_replay_stream",
        ],
        [
            "archive.engagement_history_all",
            "warehouse.fact_interactions_5y",
            "archive.request_logs_complete",
        ],
        [
            "archive.global_join_snapshot",
            "warehouse.cross_device_graph_full",
            "archive.allusers_alltime_rollup",
        ],
    ],
];

/// Fresh table names for drifted templates; disjoint from [`TABLES`].
const DRIFT_TABLES: [&str; 20] = [
    "gcs.events_repartitioned_v2",
    "lake.behavioral_rollup_new",
    "gcs.ad_events_migrated",
    "lake.identity_graph_2021",
    "gcs.search_sessions_v2",
    "warehouse.unified_metrics_v2",
    "raw.firehose_ingest_2021",
    "lake.content_embeddings_v3",
    "gcs.session_replay_2021",
    "lake.creator_stats_v2",
    "raw.messaging_events_2021",
    "gcs.video_metrics_new",
    "lake.commerce_orders_v2",
    "gcs.spaces_audio_logs",
    "lake.notification_funnel_v2",
    "gcs.timeline_snapshots_2021",
    "lake.trust_safety_events",
    "gcs.revenue_rollup_v2",
    "lake.geo_activity_2021",
    "gcs.graphql_requests_new",
];

/// Partition column used by drifted statements; unseen in the base
/// pool, where filters go through `ds`.
const DRIFT_PARTITION: &str = "ds_2021";

/// Default workload: 27 templates (three per class pair), the skewed
/// CPU mix, a near-even memory mix, and a weak positive rank
/// correlation between the two resources.
pub fn default_spec() -> WorkloadSpec {
    let mut pool = Vec::with_capacity(27);
    let mut index = 0usize;
    for (cpu, by_mem) in TABLES.iter().enumerate() {
        for (mem, tables) in by_mem.iter().enumerate() {
            for (slot, table) in tables.iter().enumerate() {
                pool.push(QueryTemplate {
                    id: format!("base_{cpu}{mem}_{slot}"),
                    sql_pattern: skeleton(index, table, index),
                    cpu_class: cpu,
                    mem_class: mem,
                    weight: 1.0 / 27.0,
                });
                index += 1;
            }
        }
    }
    WorkloadSpec {
        template_pool: pool,
        cpu_class_mix: [0.72, 0.27, 0.01],
        mem_class_mix: [0.34, 0.33, 0.33],
        target_correlation: 0.256,
        noise_rate: 0.05,
    }
}

/// Error function, Abramowitz & Stegun 7.1.26 (|error| < 1.5e-7).
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Standard normal CDF.
fn phi(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Gaussian copula parameter realizing a target Spearman correlation.
fn gauss_rho(spearman: f64) -> f64 {
    2.0 * (std::f64::consts::PI * spearman / 6.0).sin()
}

/// Locate `u` in the cumulative mix: returns the class and the
/// position within its segment, both in [0, 1).
fn segment(mix: &[f64; 3], u: f64) -> (usize, f64) {
    let mut lo = 0.0;
    for (class, &p) in mix.iter().enumerate() {
        let hi = lo + p;
        if (u < hi && p > 0.0) || class == 2 {
            if p <= 0.0 {
                // numerically above the last nonzero segment; walk back
                for back in (0..class).rev() {
                    if mix[back] > 0.0 {
                        return (back, 0.9999999);
                    }
                }
            }
            let t = ((u - lo) / p).clamp(0.0, 0.999_999_9);
            return (class, t);
        }
        lo = hi;
    }
    unreachable!("mix sums to 1");
}

/// Log-uniform draw inside `[lo, hi)`, monotone in `t`.
fn log_uniform(lo: f64, hi: f64, t: f64) -> u64 {
    let v = (lo.ln() + t * (hi.ln() - lo.ln())).exp();
    (v.floor() as u64).clamp(lo as u64, hi as u64 - 1)
}

/// Pareto tail draw above `xm`, monotone in `t`.
fn pareto(xm: f64, alpha: f64, t: f64) -> u64 {
    let t = t.min(1.0 - 1e-12);
    let v = xm * (1.0 - t).powf(-1.0 / alpha);
    (v.floor() as u64).max(xm as u64)
}

fn sample_cpu_ms(class: usize, t: f64) -> u64 {
    match class {
        0 => log_uniform(10.0, CPU_BOUNDARIES_MS[0] as f64, t),
        1 => log_uniform(CPU_BOUNDARIES_MS[0] as f64, CPU_BOUNDARIES_MS[1] as f64, t),
        _ => pareto(CPU_BOUNDARIES_MS[1] as f64, 1.1, t),
    }
}

fn sample_mem_bytes(class: usize, t: f64) -> u64 {
    match class {
        0 => log_uniform(1024.0, MEMORY_BOUNDARIES_BYTES[0] as f64, t),
        1 => log_uniform(
            MEMORY_BOUNDARIES_BYTES[0] as f64,
            MEMORY_BOUNDARIES_BYTES[1] as f64,
            t,
        ),
        _ => pareto(MEMORY_BOUNDARIES_BYTES[1] as f64, 1.2, t),
    }
}

fn base62(mut value: u64, chars: usize) -> String {
    const ALPHABET: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
    let mut out = Vec::with_capacity(chars);
    for _ in 0..chars {
        out.push(ALPHABET[(value % 62) as usize]);
        value /= 62;
    }
    String::from_utf8(out).unwrap()
}

fn fill_pattern(pattern: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(pattern.len() + 16);
    let mut rest = pattern;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let Some(end) = tail.find('}') else {
            out.push_str(tail);
            return out;
        };
        match &tail[1..end] {
            "int" => out.push_str(&rng.random_range(1..100_000u32).to_string()),
            "date" => {
                let month = rng.random_range(1..=12u32);
                let day = rng.random_range(1..=28u32);
                out.push_str(&format!("2020-{month:02}-{day:02}"));
            }
            "word" => out.push_str(WORDS[rng.random_range(0..WORDS.len())]),
            other => {
                out.push('{');
                out.push_str(other);
                out.push('}');
            }
        }
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    out
}

/// Fallback end-of-stream hour used when the caller gives none.
pub const DEFAULT_END_DATEHOUR: &str = "2021010100";

/// Hours of history the generator spreads records over.
const SPREAD_HOURS: i64 = 24 * 60;

/// Generate `n` records with the default stream-end anchor.
pub fn generate(spec: &WorkloadSpec, n: usize, seed: u64) -> Result<Vec<QueryLogRecord>> {
    generate_with_end(spec, n, seed, DEFAULT_END_DATEHOUR.parse().unwrap())
}

/// Generate `n` records whose datehours fall in the 60 days before
/// `end`. Deterministic: the same (spec, n, seed, end) produces
/// byte-identical records.
pub fn generate_with_end(
    spec: &WorkloadSpec,
    n: usize,
    seed: u64,
    end: DateHour,
) -> Result<Vec<QueryLogRecord>> {
    if n == 0 {
        return Err(Error::Config("cannot generate zero records".to_string()));
    }
    spec.validate()?;
    let rho = gauss_rho(spec.target_correlation);
    let ortho = (1.0 - rho * rho).sqrt();

    // class pair -> (template indices, cumulative weights)
    let mut by_pair: Vec<Vec<usize>> = vec![Vec::new(); 9];
    for (i, t) in spec.template_pool.iter().enumerate() {
        by_pair[t.cpu_class * 3 + t.mem_class].push(i);
    }

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::model::derive_seed(seed, i as u64));

        let z1: f64 = rng.sample(StandardNormal);
        let eps: f64 = rng.sample(StandardNormal);
        let z2 = rho * z1 + ortho * eps;
        let (cpu_class, t_cpu) = segment(&spec.cpu_class_mix, phi(z1));
        let (mem_class, t_mem) = segment(&spec.mem_class_mix, phi(z2));
        let cpu_time_ms = sample_cpu_ms(cpu_class, t_cpu);
        let peak_memory_bytes = sample_mem_bytes(mem_class, t_mem);

        // Scrambled text: draw an independent pair for the statement.
        let scramble: f64 = rng.random();
        let (text_cpu, text_mem) = if scramble < spec.noise_rate {
            let z1b: f64 = rng.sample(StandardNormal);
            let epsb: f64 = rng.sample(StandardNormal);
            let z2b = rho * z1b + ortho * epsb;
            (
                segment(&spec.cpu_class_mix, phi(z1b)).0,
                segment(&spec.mem_class_mix, phi(z2b)).0,
            )
        } else {
            (cpu_class, mem_class)
        };

        let candidates = &by_pair[text_cpu * 3 + text_mem];
        if candidates.is_empty() {
            return Err(Error::NoTemplateForClassPair {
                cpu: text_cpu,
                mem: text_mem,
            });
        }
        let total_weight: f64 = candidates
            .iter()
            .map(|&t| spec.template_pool[t].weight)
            .sum();
        let mut pick: f64 = rng.random_range(0.0..total_weight);
        let mut chosen = candidates[candidates.len() - 1];
        for &t in candidates {
            let w = spec.template_pool[t].weight;
            if pick < w {
                chosen = t;
                break;
            }
            pick -= w;
        }

        let query = fill_pattern(&spec.template_pool[chosen].sql_pattern, &mut rng);
        let hours_back = rng.random_range(0..SPREAD_HOURS);
        let id_bits: u64 = rng.random();
        records.push(QueryLogRecord {
            query_id: base62(id_bits ^ (i as u64) << 1, 10),
            user: USERS[rng.random_range(0..USERS.len())].to_string(),
            cluster: CLUSTERS[rng.random_range(0..CLUSTERS.len())].to_string(),
            query,
            cpu_time_ms,
            peak_memory_bytes,
            datehour: end.minus_hours(hours_back),
        });
    }
    Ok(records)
}

/// Replace identifier occurrences of `from` (whole tokens over
/// `[a-z0-9_.$]`) with `to`.
fn replace_identifier(pattern: &str, from: &str, to: &str) -> String {
    let is_token_char =
        |c: char| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$';
    let bytes: Vec<char> = pattern.chars().collect();
    let mut out = String::with_capacity(pattern.len());
    let mut i = 0usize;
    while i < bytes.len() {
        if bytes[i..].starts_with(&from.chars().collect::<Vec<_>>()[..])
            && (i == 0 || !is_token_char(bytes[i - 1]))
            && (i + from.chars().count() == bytes.len()
                || !is_token_char(bytes[i + from.chars().count()]))
        {
            out.push_str(to);
            i += from.chars().count();
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    out
}

/// Shift the workload: a `severity` fraction of template slots is
/// replaced by new templates built from previously unseen table names
/// and partition tokens, preserving each slot's class pair (and so the
/// class mixes).
///
/// Up to two replaced light slots instead re-use an original
/// heavy-class statement with the unseen partition column: the
/// formerly expensive table is now aggressively pruned, so statements
/// that look heavy to an old model have become cheap. This is the
/// semantic half of the drift; purely novel tokens only starve a
/// model's recall, while these statements erode its heavy-class
/// precision.
pub fn drift_shift(spec: &WorkloadSpec, severity: f64, seed: u64) -> WorkloadSpec {
    let severity = severity.clamp(0.0, 1.0);
    let mut shifted = spec.clone();
    let n = spec.template_pool.len();
    let count = (severity * n as f64).round() as usize;
    if count == 0 {
        return shifted;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<usize> = rand::seq::index::sample(&mut rng, n, count.min(n)).into_vec();
    slots.sort_unstable();

    let heavy_cpu_pattern = spec
        .template_pool
        .iter()
        .find(|t| t.cpu_class == 2)
        .map(|t| t.sql_pattern.clone());
    let heavy_mem_pattern = spec
        .template_pool
        .iter()
        .find(|t| t.mem_class == 2 && t.cpu_class != 2)
        .or_else(|| spec.template_pool.iter().find(|t| t.mem_class == 2))
        .map(|t| t.sql_pattern.clone());

    let mut cpu_semantic_used = false;
    let mut mem_semantic_used = false;
    for (k, &slot) in slots.iter().enumerate() {
        let original = &spec.template_pool[slot];
        let (cpu_class, mem_class, weight) =
            (original.cpu_class, original.mem_class, original.weight);

        let pattern = if let (false, true, Some(heavy)) =
            (cpu_semantic_used, cpu_class < 2, heavy_cpu_pattern.as_ref())
        {
            cpu_semantic_used = true;
            replace_identifier(heavy, "ds", DRIFT_PARTITION)
        } else if let (false, true, Some(heavy)) =
            (mem_semantic_used, mem_class < 2, heavy_mem_pattern.as_ref())
        {
            mem_semantic_used = true;
            replace_identifier(heavy, "ds", DRIFT_PARTITION)
        } else {
            let table = if k < DRIFT_TABLES.len() {
                DRIFT_TABLES[k].to_string()
            } else {
                format!("lake.migrated_table_{k}")
            };
            let base = skeleton(k, &table, k + 3);
            replace_identifier(&base, "ds", DRIFT_PARTITION)
        };

        shifted.template_pool[slot] = QueryTemplate {
            id: format!("shift_{k}"),
            sql_pattern: pattern,
            cpu_class,
            mem_class,
            weight,
        };
    }
    shifted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{pearson_correlation, ranks};
    use crate::featurize::{build_vocabulary, tokenize};
    use crate::labeling::{classify_index, ClassScheme};

    #[test]
    fn default_spec_is_valid_and_covers_all_pairs() {
        let spec = default_spec();
        spec.validate().unwrap();
        assert_eq!(spec.template_pool.len(), 27);
        let total: f64 = spec.template_pool.iter().map(|t| t.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn generated_mix_matches_spec_within_tolerance() {
        let spec = default_spec();
        let records = generate(&spec, 10_000, 42).unwrap();
        assert_eq!(records.len(), 10_000);
        let cpu = ClassScheme::cpu_default();
        let mem = ClassScheme::memory_default();
        let mut cpu_counts = [0usize; 3];
        let mut mem_counts = [0usize; 3];
        for r in &records {
            cpu_counts[classify_index(r.cpu_time_ms, &cpu)] += 1;
            mem_counts[classify_index(r.peak_memory_bytes, &mem)] += 1;
        }
        for class in 0..3 {
            let got = cpu_counts[class] as f64 / 10_000.0;
            assert!(
                (got - spec.cpu_class_mix[class]).abs() <= 0.015,
                "cpu class {class}: got {got}, want {}",
                spec.cpu_class_mix[class]
            );
            let got = mem_counts[class] as f64 / 10_000.0;
            assert!(
                (got - spec.mem_class_mix[class]).abs() <= 0.015,
                "mem class {class}: got {got}, want {}",
                spec.mem_class_mix[class]
            );
        }
    }

    #[test]
    fn rank_correlation_hits_target() {
        let spec = default_spec();
        let records = generate(&spec, 10_000, 7).unwrap();
        let cpu: Vec<f64> = records.iter().map(|r| r.cpu_time_ms as f64).collect();
        let mem: Vec<f64> = records.iter().map(|r| r.peak_memory_bytes as f64).collect();
        let r = pearson_correlation(&ranks(&cpu), &ranks(&mem)).unwrap();
        assert!(
            (r - 0.256).abs() <= 0.05,
            "rank correlation {r} misses 0.256 +/- 0.05"
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = default_spec();
        let a = generate(&spec, 500, 9).unwrap();
        let b = generate(&spec, 500, 9).unwrap();
        assert_eq!(a, b);
        let c = generate(&spec, 500, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn values_stay_inside_their_intervals() {
        // interval edges: t at both extremes must stay in class
        for t in [0.0, 0.5, 0.999_999_9] {
            assert_eq!(classify_index(sample_cpu_ms(0, t), &ClassScheme::cpu_default()), 0);
            assert_eq!(classify_index(sample_cpu_ms(1, t), &ClassScheme::cpu_default()), 1);
            assert_eq!(classify_index(sample_cpu_ms(2, t), &ClassScheme::cpu_default()), 2);
            assert_eq!(
                classify_index(sample_mem_bytes(0, t), &ClassScheme::memory_default()),
                0
            );
            assert_eq!(
                classify_index(sample_mem_bytes(1, t), &ClassScheme::memory_default()),
                1
            );
            assert_eq!(
                classify_index(sample_mem_bytes(2, t), &ClassScheme::memory_default()),
                2
            );
        }
    }

    #[test]
    fn generated_sql_tokenizes_nonempty() {
        let spec = default_spec();
        for r in generate(&spec, 300, 3).unwrap() {
            assert!(!tokenize(&r.query).is_empty(), "empty tokens for {}", r.query);
            assert!(!r.query_id.is_empty());
        }
    }

    #[test]
    fn phi_matches_reference_values() {
        assert!((phi(0.0) - 0.5).abs() < 1e-7);
        assert!((phi(1.0) - 0.841_344_7).abs() < 1e-6);
        assert!((phi(-1.96) - 0.024_997_9).abs() < 1e-6);
    }

    #[test]
    fn drift_shift_replaces_severity_fraction_with_unseen_tokens() {
        let spec = default_spec();
        let shifted = drift_shift(&spec, 0.5, 11);
        assert_eq!(shifted.template_pool.len(), spec.template_pool.len());

        // class-pair multiset preserved slot by slot
        for (a, b) in spec.template_pool.iter().zip(&shifted.template_pool) {
            assert_eq!(a.cpu_class, b.cpu_class);
            assert_eq!(a.mem_class, b.mem_class);
        }

        // vocabulary of the base pool
        let base_docs: Vec<_> = spec
            .template_pool
            .iter()
            .map(|t| tokenize(&t.sql_pattern))
            .collect();
        let base_vocab = build_vocabulary(&base_docs, 1, 100_000).unwrap();

        let replaced: Vec<_> = shifted
            .template_pool
            .iter()
            .filter(|t| t.id.starts_with("shift_"))
            .collect();
        assert_eq!(replaced.len(), (0.5f64 * 27.0).round() as usize);
        for t in &replaced {
            let has_unseen = tokenize(&t.sql_pattern)
                .0
                .iter()
                .any(|token| !base_vocab.contains(token));
            assert!(has_unseen, "template {} carries no unseen token", t.id);
        }
    }

    #[test]
    fn drift_shift_keeps_semantic_decoys() {
        let spec = default_spec();
        let shifted = drift_shift(&spec, 0.5, 11);
        let heavy_tables: Vec<&str> = spec
            .template_pool
            .iter()
            .filter(|t| t.cpu_class == 2)
            .map(|t| t.sql_pattern.split(" from ").nth(1).unwrap())
            .map(|rest| rest.split_whitespace().next().unwrap())
            .collect();
        // at least one replaced light template references a formerly
        // heavy table through the new partition column
        let decoy = shifted
            .template_pool
            .iter()
            .filter(|t| t.id.starts_with("shift_") && t.cpu_class < 2)
            .find(|t| heavy_tables.iter().any(|h| t.sql_pattern.contains(h)));
        let decoy = decoy.expect("no semantic decoy template found");
        assert!(decoy.sql_pattern.contains(DRIFT_PARTITION));
    }

    #[test]
    fn drift_shift_zero_severity_is_identity() {
        let spec = default_spec();
        let shifted = drift_shift(&spec, 0.0, 5);
        assert_eq!(spec, shifted);
        // tiny severity rounds to no replacements on a 27-slot pool
        let shifted = drift_shift(&spec, 0.01, 5);
        assert_eq!(spec, shifted);
    }

    #[test]
    fn replace_identifier_respects_token_boundaries() {
        assert_eq!(
            replace_identifier("where ds >= '{date}' and dst = 1", "ds", "ds_2021"),
            "where ds_2021 >= '{date}' and dst = 1"
        );
        assert_eq!(
            replace_identifier("a.ds and ds", "ds", "x"),
            "a.ds and x"
        );
    }

    #[test]
    fn zero_noise_keeps_text_and_cost_aligned() {
        let mut spec = default_spec();
        spec.noise_rate = 0.0;
        let records = generate(&spec, 2000, 13).unwrap();
        let cpu_scheme = ClassScheme::cpu_default();
        // table token must match the true class's table set
        for r in &records {
            let cpu_class = classify_index(r.cpu_time_ms, &cpu_scheme);
            let tables = &TABLES[cpu_class];
            let matches = tables
                .iter()
                .flatten()
                .any(|table| r.query.contains(table));
            assert!(matches, "query `{}` lacks a class-{cpu_class} table", r.query);
        }
    }
}
