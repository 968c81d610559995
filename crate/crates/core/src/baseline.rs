//! TF-IDF features over the user prompt feeding a one-vs-rest linear SVM
//! trained with hinge-loss SGD. Labels are joint `<device>|<service>`
//! strings; predictions are wrapped back into the JSON action shape with a
//! templated reply.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DeviceRegistry, RawAction};
use crate::parser::render_action_block;
use crate::text::tokenize;

pub const MODEL_FORMAT: &str = "edgehome-baseline";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("cannot fit a vectorizer on an empty corpus")]
    EmptyCorpus,
    #[error("need at least two distinct labels, found {0}")]
    DegenerateLabels(usize),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file is not a valid baseline model: {0}")]
    Format(String),
}

/// Sparse vector as `(column, value)` pairs sorted by column.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    /// Tokens in lexicographic order; position is the column index.
    tokens: Vec<String>,
    idf: Vec<f64>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl TfidfVectorizer {
    fn from_parts(tokens: Vec<String>, idf: Vec<f64>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        TfidfVectorizer { tokens, idf, index }
    }

    pub fn vocabulary_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.column(token).map(|c| self.idf[c])
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn idf_weights(&self) -> &[f64] {
        &self.idf
    }

    /// Raw term counts times idf, L2-normalized. Unknown tokens are dropped,
    /// so a prompt of unseen words maps to the zero vector.
    pub fn transform(&self, text: &str) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in tokenize(text) {
            if let Some(col) = self.column(&token) {
                *counts.entry(col).or_default() += 1.0;
            }
        }
        let mut vec: SparseVec = counts.into_iter().map(|(c, tf)| (c, tf * self.idf[c])).collect();
        let norm = vec.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut vec {
                *v /= norm;
            }
        }
        vec
    }
}

/// Smoothed idf: `ln((1 + N) / (1 + df)) + 1`.
pub fn fit_vectorizer<S: AsRef<str>>(corpus: &[S]) -> Result<TfidfVectorizer, BaselineError> {
    if corpus.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let unique: BTreeSet<String> = tokenize(doc.as_ref()).into_iter().collect();
        for token in unique {
            *df.entry(token).or_default() += 1;
        }
    }
    let n = corpus.len() as f64;
    let (tokens, idf) = df
        .into_iter()
        .map(|(t, d)| (t, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .unzip();
    Ok(TfidfVectorizer::from_parts(tokens, idf))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 10,
            learning_rate: 0.1,
            lambda: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub prompt: String,
    pub device: String,
    pub service: String,
}

impl TrainingSample {
    pub fn label(&self) -> String {
        joint_label(&self.device, &self.service)
    }
}

pub fn joint_label(device: &str, service: &str) -> String {
    format!("{device}|{service}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOvrModel {
    /// Sorted; ties in prediction go to the earliest label.
    labels: Vec<String>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

/// Index of the largest score; the earliest index wins ties.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

impl LinearOvrModel {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn scores(&self, x: &SparseVec) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| x.iter().map(|(c, v)| w[*c] * v).sum::<f64>() + b)
            .collect()
    }

    /// Best label for a feature vector. A zero vector carries no evidence
    /// for any label, so every label ties and the first one wins.
    pub fn predict_label(&self, x: &SparseVec) -> &str {
        if x.is_empty() {
            return &self.labels[0];
        }
        let i = argmax(&self.scores(x)).expect("trained model has labels");
        &self.labels[i]
    }
}

/// One-vs-rest hinge-loss SGD with `1/t` step decay:
/// `eta_t = eta_0 / (1 + eta_0 * lambda * t)`. Single-threaded; a fixed
/// seed gives bitwise-identical weights.
pub fn train(
    samples: &[TrainingSample],
    vectorizer: &TfidfVectorizer,
    params: &TrainParams,
) -> Result<LinearOvrModel, BaselineError> {
    let labels: Vec<String> = samples
        .iter()
        .map(TrainingSample::label)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if labels.len() < 2 {
        return Err(BaselineError::DegenerateLabels(labels.len()));
    }
    let label_index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let data: Vec<(SparseVec, usize)> = samples
        .iter()
        .map(|s| (vectorizer.transform(&s.prompt), label_index[s.label().as_str()]))
        .collect();

    let dim = vectorizer.vocabulary_size();
    // w_l = scale_l * v_l keeps the per-step L2 shrink O(1).
    let mut v = vec![vec![0.0; dim]; labels.len()];
    let mut scale = vec![1.0; labels.len()];
    let mut bias = vec![0.0; labels.len()];

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = params.learning_rate / (1.0 + params.learning_rate * params.lambda * t as f64);
            let (x, gold) = &data[i];
            for l in 0..labels.len() {
                let y = if l == *gold { 1.0 } else { -1.0 };
                let dot: f64 = x.iter().map(|(c, val)| v[l][*c] * val).sum();
                let margin = y * (scale[l] * dot + bias[l]);
                scale[l] *= 1.0 - eta * params.lambda;
                if margin < 1.0 {
                    let step = eta * y / scale[l];
                    for (c, val) in x {
                        v[l][*c] += step * val;
                    }
                    bias[l] += eta * y;
                }
                if scale[l] < 1e-9 {
                    for w in &mut v[l] {
                        *w *= scale[l];
                    }
                    scale[l] = 1.0;
                }
            }
        }
    }
    let weights = v
        .into_iter()
        .zip(&scale)
        .map(|(row, s)| row.into_iter().map(|w| w * s).collect())
        .collect();
    Ok(LinearOvrModel { labels, weights, bias })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePrediction {
    pub device: String,
    pub service: String,
    pub response_text: String,
}

impl BaselinePrediction {
    pub fn raw_action(&self) -> RawAction {
        RawAction::new(&self.service, &self.device)
    }

    /// Reply followed by the action in the `service`/`device` JSON shape.
    pub fn to_assistant_text(&self) -> String {
        format!(
            "{}\n{}",
            self.response_text,
            render_action_block(&self.raw_action(), "device")
        )
    }
}

pub fn template_response(service: &str, friendly_name: &str) -> String {
    format!("Okay, executing {service} on {friendly_name}.")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub params: TrainParams,
    pub samples: usize,
    pub ngram_range: (usize, usize),
    pub min_df: usize,
}

/// Vectorizer plus classifier, persisted as one self-describing JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineClassifier {
    pub format: String,
    pub version: u32,
    pub vectorizer: TfidfVectorizer,
    pub model: LinearOvrModel,
    pub training: TrainingMetadata,
}

impl BaselineClassifier {
    pub fn fit(samples: &[TrainingSample], params: &TrainParams) -> Result<Self, BaselineError> {
        let prompts: Vec<&str> = samples.iter().map(|s| s.prompt.as_str()).collect();
        let vectorizer = fit_vectorizer(&prompts)?;
        let model = train(samples, &vectorizer, params)?;
        Ok(BaselineClassifier {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            vectorizer,
            model,
            training: TrainingMetadata {
                params: *params,
                samples: samples.len(),
                ngram_range: (1, 1),
                min_df: 1,
            },
        })
    }

    /// Friendly names come from `registry` when it knows the device.
    pub fn predict(&self, prompt: &str, registry: Option<&DeviceRegistry>) -> BaselinePrediction {
        let label = self.model.predict_label(&self.vectorizer.transform(prompt));
        let (device, service) = label.split_once('|').unwrap_or((label, ""));
        let friendly = registry
            .and_then(|r| r.iter().find(|d| d.id.to_string() == device))
            .map(|d| d.friendly_name.clone())
            .unwrap_or_else(|| device.to_string());
        BaselinePrediction {
            device: device.to_string(),
            service: service.to_string(),
            response_text: template_response(service, &friendly),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), BaselineError> {
        let json = serde_json::to_string(self).map_err(|e| BaselineError::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        let text = std::fs::read_to_string(path)?;
        let mut model: BaselineClassifier =
            serde_json::from_str(&text).map_err(|e| BaselineError::Format(e.to_string()))?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(BaselineError::Format(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                model.format, model.version
            )));
        }
        let dim = model.vectorizer.tokens.len();
        if model.vectorizer.idf.len() != dim
            || model.model.labels.is_empty()
            || model.model.weights.len() != model.model.labels.len()
            || model.model.bias.len() != model.model.labels.len()
            || model.model.weights.iter().any(|w| w.len() != dim)
        {
            return Err(BaselineError::Format("inconsistent dimensions".into()));
        }
        model.vectorizer = TfidfVectorizer::from_parts(model.vectorizer.tokens, model.vectorizer.idf);
        Ok(model)
    }
}
