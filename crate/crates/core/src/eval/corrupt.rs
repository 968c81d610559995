//! Deliberate damage to gold assistant outputs, each kind mapped to the
//! error class it must produce. Used to check that the metrics attribute
//! failures correctly.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dataset::ConversationSample;
use super::metrics::ErrorClass;
use crate::backend::ScriptedBackend;
use crate::model::EntityId;
use crate::parser::{render_action_block, render_assistant_output};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Corruption {
    DropClosingFence,
    DeleteBrace,
    RenameDevice,
    SwapServiceDomain,
    RemoveServiceKey,
}

impl Corruption {
    pub const ALL: [Corruption; 5] = [
        Corruption::DropClosingFence,
        Corruption::DeleteBrace,
        Corruption::RenameDevice,
        Corruption::SwapServiceDomain,
        Corruption::RemoveServiceKey,
    ];

    pub fn expected_class(self) -> ErrorClass {
        match self {
            Corruption::DropClosingFence => ErrorClass::NoActionBlock,
            Corruption::DeleteBrace => ErrorClass::MalformedJson,
            Corruption::RenameDevice => ErrorClass::UnknownDevice,
            Corruption::SwapServiceDomain => ErrorClass::DomainMismatch,
            Corruption::RemoveServiceKey => ErrorClass::MissingField,
        }
    }
}

/// The gold output of `sample` damaged by `kind`, or `None` when the
/// sample's home cannot express that damage (a single-domain catalog has no
/// service from another domain to swap in).
pub fn corrupt(sample: &ConversationSample, kind: Corruption) -> Option<String> {
    let gold = &sample.gold_action;
    let reply = sample.gold_response.trim();
    Some(match kind {
        Corruption::DropClosingFence => {
            let block = render_action_block(gold, "target_device");
            let open = block.strip_suffix("\n```").expect("rendered blocks end with a fence");
            format!("{reply}\n{open}\n")
        }
        Corruption::DeleteBrace => {
            let block = render_action_block(gold, "target_device");
            let cut = block.rfind('}').expect("rendered blocks hold an object");
            format!("{reply}\n{}{}", &block[..cut], &block[cut + 1..])
        }
        Corruption::RenameDevice => {
            let mut renamed = gold.clone();
            let mut suffix = String::from("_missing");
            loop {
                renamed.device = format!("{}{suffix}", gold.device);
                let taken = renamed
                    .device
                    .parse::<EntityId>()
                    .map(|id| sample.context.registry.contains(&id))
                    .unwrap_or(false);
                if !taken {
                    break;
                }
                suffix.push('x');
            }
            render_assistant_output(reply, &renamed)
        }
        Corruption::SwapServiceDomain => {
            let domain = gold.device.split('.').next().unwrap_or_default();
            let other = sample.context.catalog.iter().find(|s| s.domain() != domain)?;
            let mut swapped = gold.clone();
            swapped.service = other.canonical();
            render_assistant_output(reply, &swapped)
        }
        Corruption::RemoveServiceKey => {
            let block = render_action_block(gold, "target_device");
            let kept: Vec<&str> = block
                .lines()
                .filter(|l| !l.trim_start().starts_with("\"service\""))
                .collect();
            format!("{reply}\n{}", kept.join("\n"))
        }
    })
}

/// Which samples were damaged and how.
#[derive(Debug, Clone, Default)]
pub struct CorruptionPlan {
    /// Keyed by position in the sample slice.
    pub injected: BTreeMap<usize, Corruption>,
}

impl CorruptionPlan {
    pub fn expected_counts(&self) -> BTreeMap<ErrorClass, usize> {
        let mut counts = BTreeMap::new();
        for kind in self.injected.values() {
            *counts.entry(kind.expected_class()).or_default() += 1;
        }
        counts
    }
}

/// Chooses `round(rate * n)` samples with a seeded shuffle and cycles
/// through the corruption kinds, skipping kinds a sample cannot express.
/// Samples sharing a prompt with another sample are never chosen, since a
/// prompt-keyed replay could not tell them apart.
pub fn plan_corruptions(samples: &[ConversationSample], rate: f64, seed: u64) -> CorruptionPlan {
    let mut prompt_uses: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for s in samples {
        *prompt_uses.entry((&s.system_text, &s.user_text)).or_default() += 1;
    }
    let mut candidates: Vec<usize> = (0..samples.len())
        .filter(|i| prompt_uses[&(samples[*i].system_text.as_str(), samples[*i].user_text.as_str())] == 1)
        .collect();
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let target = (samples.len() as f64 * rate.clamp(0.0, 1.0)).round() as usize;
    let mut plan = CorruptionPlan::default();
    let mut next_kind = 0;
    for i in candidates.into_iter().take(target) {
        for step in 0..Corruption::ALL.len() {
            let kind = Corruption::ALL[(next_kind + step) % Corruption::ALL.len()];
            if corrupt(&samples[i], kind).is_some() {
                plan.injected.insert(i, kind);
                next_kind = (next_kind + step + 1) % Corruption::ALL.len();
                break;
            }
        }
    }
    plan
}

/// A scripted backend replaying gold outputs, damaged where `plan` says.
pub fn replay_backend(samples: &[ConversationSample], plan: &CorruptionPlan) -> ScriptedBackend {
    let mut script = ScriptedBackend::default();
    for (i, s) in samples.iter().enumerate() {
        let text = match plan.injected.get(&i) {
            Some(kind) => corrupt(s, *kind).expect("planned corruptions apply"),
            None => s.assistant_text.clone(),
        };
        script.insert_prompt(&s.system_text, &s.user_text, &text);
    }
    script
}
