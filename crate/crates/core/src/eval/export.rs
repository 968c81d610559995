//! Writing a split back out as fine-tuning corpora.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::dataset::{write_records, ConversationSample};
use super::split::{Split, SplitSummary};
use crate::baseline::TrainingSample;

#[derive(Debug, Clone, Serialize)]
pub struct ExportManifest {
    pub train_file: PathBuf,
    pub test_file: PathBuf,
    pub split: SplitSummary,
}

/// Writes `train.json`, `test.json` and `split.json` into `dir`. The corpus
/// files use the same conversation layout the loader reads, so reloading
/// them reproduces the split's samples.
pub fn export_training_corpus(split: &Split, dir: &Path) -> std::io::Result<ExportManifest> {
    std::fs::create_dir_all(dir)?;
    let manifest = ExportManifest {
        train_file: dir.join("train.json"),
        test_file: dir.join("test.json"),
        split: split.summary.clone(),
    };
    let turns = |xs: &[ConversationSample]| xs.iter().map(ConversationSample::turns).collect::<Vec<_>>();
    write_records(&manifest.train_file, &turns(&split.train))?;
    write_records(&manifest.test_file, &turns(&split.test))?;
    let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("split.json"), json)?;
    Ok(manifest)
}

/// Baseline training rows: the user prompt and the gold slots.
pub fn training_samples(samples: &[ConversationSample]) -> Vec<TrainingSample> {
    samples
        .iter()
        .map(|s| TrainingSample {
            prompt: s.user_text.clone(),
            device: s.gold_action.device.clone(),
            service: s.gold_action.service.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::dataset::{dataset_from_records, load_dataset};
    use crate::eval::split::{stratified_split, Allocation, SplitSpec};
    use crate::eval::synth::{generate_records, SynthSpec};

    #[test]
    fn export_reloads_to_the_same_samples() {
        let records: Vec<serde_json::Value> = generate_records(&SynthSpec::scaled(5, 300))
            .iter()
            .map(|r| serde_json::to_value(r).unwrap())
            .collect();
        let data = dataset_from_records(&records);
        let split = stratified_split(
            &data.samples,
            &SplitSpec {
                seed: 1,
                allocation: Allocation::Fraction {
                    fraction: 0.2,
                    floor: 1,
                },
                exclude_multi_intent: false,
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_training_corpus(&split, dir.path()).unwrap();
        for (file, expected) in [(&manifest.train_file, &split.train), (&manifest.test_file, &split.test)] {
            let back = load_dataset(file).unwrap();
            assert!(back.quarantined.is_empty());
            assert_eq!(back.samples.len(), expected.len());
            for (a, b) in back.samples.iter().zip(expected) {
                assert_eq!(a.turns(), b.turns());
                assert_eq!(a.gold_action, b.gold_action);
            }
        }
        assert!(dir.path().join("split.json").exists());
    }
}
