//! Seeded stratified train/test partitioning by class label.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::dataset::ConversationSample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("class {class} has {available} records, {requested} requested for test")]
    InsufficientClassSize {
        class: String,
        requested: usize,
        available: usize,
    },
    #[error("test fraction must lie in [0, 1], got {0}")]
    BadFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Exact test count per class; unlisted classes go entirely to train.
    PerClass(BTreeMap<String, usize>),
    /// Test share of every class, with at least `floor` test records per
    /// class where the class is large enough.
    Fraction { fraction: f64, floor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub allocation: Allocation,
    #[serde(default)]
    pub exclude_multi_intent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub seed: u64,
    pub train: usize,
    pub test: usize,
    pub excluded: usize,
    pub test_per_class: BTreeMap<String, usize>,
    /// Hash of seed and membership; equal fingerprints mean equal splits.
    pub fingerprint: String,
}

/// Positions into the input slice, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub summary: SplitSummary,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<ConversationSample>,
    pub test: Vec<ConversationSample>,
    pub summary: SplitSummary,
}

/// Largest-remainder apportionment of `round(n * fraction)` test slots over
/// classes. Remainder ties go to the lexicographically smaller class.
fn fractional_quotas(sizes: &BTreeMap<&str, usize>, fraction: f64, floor: usize) -> BTreeMap<String, usize> {
    let total: usize = sizes.values().sum();
    let target = (total as f64 * fraction).round() as usize;
    let mut quotas: Vec<(&str, usize, f64)> = sizes
        .iter()
        .map(|(c, n)| {
            let exact = *n as f64 * fraction;
            (*c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|a, b| quotas[*b].2.total_cmp(&quotas[*a].2).then(a.cmp(b)));
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        quotas[i].1 += 1;
    }
    quotas
        .into_iter()
        .map(|(c, q, _)| (c.to_string(), q.max(floor.min(sizes[c]))))
        .collect()
}

fn class_seed(seed: u64, class: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(class.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Core of the split, over class labels and multi-intent flags.
pub fn split_indices(labels: &[&str], multi_intent: &[bool], spec: &SplitSpec) -> Result<SplitIndices, SplitError> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut excluded = 0;
    for (i, label) in labels.iter().enumerate() {
        if spec.exclude_multi_intent && multi_intent.get(i).copied().unwrap_or(false) {
            excluded += 1;
            continue;
        }
        by_class.entry(label).or_default().push(i);
    }
    let sizes: BTreeMap<&str, usize> = by_class.iter().map(|(c, v)| (*c, v.len())).collect();
    let quotas = match &spec.allocation {
        Allocation::PerClass(counts) => {
            for (class, requested) in counts {
                let available = sizes.get(class.as_str()).copied().unwrap_or(0);
                if *requested > available {
                    return Err(SplitError::InsufficientClassSize {
                        class: class.clone(),
                        requested: *requested,
                        available,
                    });
                }
            }
            counts.clone()
        }
        Allocation::Fraction { fraction, floor } => {
            if !(0.0..=1.0).contains(fraction) {
                return Err(SplitError::BadFraction(*fraction));
            }
            fractional_quotas(&sizes, *fraction, *floor)
        }
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut test_per_class = BTreeMap::new();
    for (class, mut members) in by_class {
        let k = quotas.get(class).copied().unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(class_seed(spec.seed, class));
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
        if k > 0 {
            test_per_class.insert(class.to_string(), k);
        }
    }
    train.sort_unstable();
    test.sort_unstable();

    let mut hasher = Sha256::new();
    hasher.update(spec.seed.to_le_bytes());
    for i in &test {
        hasher.update((*i as u64).to_le_bytes());
    }
    hasher.update(b"|");
    for i in &train {
        hasher.update((*i as u64).to_le_bytes());
    }
    let fingerprint = hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect();
    Ok(SplitIndices {
        summary: SplitSummary {
            seed: spec.seed,
            train: train.len(),
            test: test.len(),
            excluded,
            test_per_class,
            fingerprint,
        },
        train,
        test,
    })
}

pub fn stratified_split(samples: &[ConversationSample], spec: &SplitSpec) -> Result<Split, SplitError> {
    let labels: Vec<&str> = samples.iter().map(|s| s.class_label.as_str()).collect();
    let multi: Vec<bool> = samples.iter().map(ConversationSample::is_multi_intent).collect();
    let idx = split_indices(&labels, &multi, spec)?;
    Ok(Split {
        train: idx.train.iter().map(|i| samples[*i].clone()).collect(),
        test: idx.test.iter().map(|i| samples[*i].clone()).collect(),
        summary: idx.summary,
    })
}

/// A seeded, class-stratified sample of about `n` records, every class
/// keeping at least one. Multi-intent records can be dropped first.
pub fn stratified_subset(
    samples: &[ConversationSample],
    n: usize,
    seed: u64,
    exclude_multi_intent: bool,
) -> Result<Vec<ConversationSample>, SplitError> {
    let eligible = samples
        .iter()
        .filter(|s| !(exclude_multi_intent && s.is_multi_intent()))
        .count();
    let fraction = if eligible == 0 {
        0.0
    } else {
        (n as f64 / eligible as f64).min(1.0)
    };
    let spec = SplitSpec {
        seed,
        allocation: Allocation::Fraction { fraction, floor: 1 },
        exclude_multi_intent,
    };
    Ok(stratified_split(samples, &spec)?.test)
}
