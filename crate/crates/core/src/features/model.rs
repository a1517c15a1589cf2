use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::extract::{extract_features, FeatureVector, FEATURE_LEN};
use super::logistic::OneVsRest;
use super::mfcc::MfccConfig;
use super::FeatureError;
use crate::media::Segment;
use crate::shots::{segment_shots, Shot, DEFAULT_CUT_THRESHOLD};

/// Label of shots that are regular programming.
pub const PROGRAM_LABEL: &str = "program";
pub const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a FeatureVector>) -> NormStats {
        let rows: Vec<&FeatureVector> = rows.into_iter().collect();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; FEATURE_LEN];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.values()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; FEATURE_LEN];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(r.values()).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        NormStats { mean, std }
    }

    pub fn project(&self, fv: &FeatureVector, selected: &[usize]) -> Vec<f64> {
        selected
            .iter()
            .map(|&i| (fv.values()[i] - self.mean[i]) / self.std[i])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mfcc: MfccConfig,
    pub cut_threshold: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mfcc: MfccConfig::default(),
            cut_threshold: DEFAULT_CUT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawModel {
    selected_features: Vec<usize>,
    weights: Vec<Vec<f64>>,
    norm_stats: NormStats,
    categories: Vec<String>,
    config: ModelConfig,
}

/// A trained shot classifier. Immutable; persisted as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct TrainedModel {
    selected_features: Vec<usize>,
    classifier: OneVsRest,
    norm_stats: NormStats,
    categories: Vec<String>,
    config: ModelConfig,
}

impl TryFrom<RawModel> for TrainedModel {
    type Error = FeatureError;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        TrainedModel::new(raw.selected_features, raw.weights, raw.norm_stats, raw.categories, raw.config)
    }
}

impl From<TrainedModel> for RawModel {
    fn from(m: TrainedModel) -> Self {
        RawModel {
            selected_features: m.selected_features,
            weights: m.classifier.rows,
            norm_stats: m.norm_stats,
            categories: m.categories,
            config: m.config,
        }
    }
}

fn invalid(msg: impl Into<String>) -> FeatureError {
    FeatureError::InvalidModel(msg.into())
}

impl TrainedModel {
    pub fn new(
        selected_features: Vec<usize>,
        weights: Vec<Vec<f64>>,
        norm_stats: NormStats,
        categories: Vec<String>,
        config: ModelConfig,
    ) -> Result<Self, FeatureError> {
        if categories.len() < 2 {
            return Err(invalid(format!("need at least two categories, got {}", categories.len())));
        }
        if categories.iter().collect::<BTreeSet<_>>().len() != categories.len() {
            return Err(invalid("duplicate category"));
        }
        if selected_features.is_empty() {
            return Err(invalid("no selected features"));
        }
        if let Some(&i) = selected_features.iter().find(|&&i| i >= FEATURE_LEN) {
            return Err(invalid(format!("feature index {i} out of range")));
        }
        let expected_rows = if categories.len() == 2 { 1 } else { categories.len() };
        if weights.len() != expected_rows || weights.iter().any(|w| w.len() != selected_features.len() + 1) {
            return Err(invalid("weight matrix does not match categories and selection"));
        }
        if norm_stats.mean.len() != FEATURE_LEN || norm_stats.std.len() != FEATURE_LEN {
            return Err(invalid("norm_stats must cover every feature"));
        }
        if norm_stats.std.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(invalid("norm_stats std must be positive"));
        }
        Ok(TrainedModel {
            selected_features,
            classifier: OneVsRest {
                n_classes: categories.len(),
                rows: weights,
            },
            norm_stats,
            categories,
            config,
        })
    }

    pub fn selected_features(&self) -> &[usize] {
        &self.selected_features
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.classifier.rows
    }

    pub fn predict(&self, fv: &FeatureVector) -> &str {
        let x = self.norm_stats.project(fv, &self.selected_features);
        &self.categories[self.classifier.predict(&x)]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }
}

/// Sorted distinct labels, or `DegenerateTrainingSet` when fewer than two.
pub fn categories_of(train: &[LabeledExample]) -> Result<Vec<String>, FeatureError> {
    let cats: Vec<String> = train
        .iter()
        .map(|e| e.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if cats.len() < 2 {
        return Err(FeatureError::DegenerateTrainingSet(format!(
            "{} distinct label(s) in {} examples",
            cats.len(),
            train.len()
        )));
    }
    Ok(cats)
}

pub(crate) fn label_indices(train: &[LabeledExample], categories: &[String]) -> Vec<usize> {
    train
        .iter()
        .map(|e| categories.iter().position(|c| *c == e.label).expect("label in categories"))
        .collect()
}

pub(crate) fn fit_subset(
    train: &[&LabeledExample],
    labels: &[usize],
    n_classes: usize,
    selected: &[usize],
) -> (NormStats, OneVsRest) {
    let norm = NormStats::fit(train.iter().map(|e| &e.features));
    let x: Vec<Vec<f64>> = train.iter().map(|e| norm.project(&e.features, selected)).collect();
    (norm, OneVsRest::fit(&x, labels, n_classes))
}

/// Fits the classifier on z-normalized `selected` features.
pub fn train_classifier(
    train: &[LabeledExample],
    selected: &[usize],
    config: ModelConfig,
) -> Result<TrainedModel, FeatureError> {
    if selected.is_empty() {
        return Err(FeatureError::DegenerateTrainingSet("empty feature selection".into()));
    }
    let categories = categories_of(train)?;
    let labels = label_indices(train, &categories);
    let refs: Vec<&LabeledExample> = train.iter().collect();
    let (norm, clf) = fit_subset(&refs, &labels, categories.len(), selected);
    TrainedModel::new(selected.to_vec(), clf.rows, norm, categories, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotDecision {
    pub shot: Shot,
    pub category: String,
    pub is_ad: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDecision {
    pub is_ad: bool,
    /// Most frequent category among ad shots, when the segment is an ad.
    pub category: Option<String>,
    pub shots: Vec<ShotDecision>,
}

pub fn shot_features(seg: &Segment, shot: &Shot, cfg: &MfccConfig) -> Result<FeatureVector, FeatureError> {
    let range = shot.frame_range();
    let audio = seg.audio_for_frames(range.start, range.end);
    extract_features(&seg.frames()[range], &audio, cfg)
}

/// Shot-level classification with a frame-weighted ad vote.
pub fn classify_segment_features(seg: &Segment, model: &TrainedModel) -> Result<FeatureDecision, FeatureError> {
    let shots = segment_shots(seg, model.config.cut_threshold);
    let mut decisions = Vec::with_capacity(shots.len());
    for shot in shots {
        let fv = shot_features(seg, &shot, &model.config.mfcc)?;
        let category = model.predict(&fv).to_owned();
        decisions.push(ShotDecision {
            shot,
            is_ad: category != PROGRAM_LABEL,
            category,
        });
    }
    let total: usize = decisions.iter().map(|d| d.shot.len()).sum();
    let ad_frames: usize = decisions.iter().filter(|d| d.is_ad).map(|d| d.shot.len()).sum();
    let is_ad = ad_frames * 2 > total;
    let category = is_ad.then(|| {
        // (shot count, frames) per category; ties resolve to model order
        let mut best: Option<(&str, usize, usize)> = None;
        for cat in model.categories() {
            let mine: Vec<_> = decisions.iter().filter(|d| d.is_ad && d.category == *cat).collect();
            if mine.is_empty() {
                continue;
            }
            let key = (mine.len(), mine.iter().map(|d| d.shot.len()).sum::<usize>());
            if best.is_none_or(|(_, n, f)| key > (n, f)) {
                best = Some((cat, key.0, key.1));
            }
        }
        best.map(|b| b.0.to_owned()).expect("an ad segment has ad shots")
    });
    Ok(FeatureDecision {
        is_ad,
        category,
        shots: decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(v: f64, label: &str) -> LabeledExample {
        let mut values = vec![1.0; FEATURE_LEN];
        values[5] = v;
        LabeledExample {
            features: FeatureVector::new(values).unwrap(),
            label: label.into(),
        }
    }

    #[test]
    fn single_class_is_degenerate() {
        let train: Vec<_> = (0..12).map(|i| example(i as f64, "program")).collect();
        assert!(matches!(
            train_classifier(&train, &[5], ModelConfig::default()),
            Err(FeatureError::DegenerateTrainingSet(_))
        ));
    }

    #[test]
    fn empty_categories_rejected() {
        let norm = NormStats {
            mean: vec![0.0; FEATURE_LEN],
            std: vec![1.0; FEATURE_LEN],
        };
        assert!(matches!(
            TrainedModel::new(vec![0], vec![vec![0.0, 0.0]], norm, vec![], ModelConfig::default()),
            Err(FeatureError::InvalidModel(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let mut train: Vec<_> = (0..10).map(|i| example(i as f64, "program")).collect();
        train.extend((0..10).map(|i| example(20.0 + i as f64, "auto")));
        let model = train_classifier(&train, &[5], ModelConfig::default()).unwrap();
        assert_eq!(model.predict(&train[0].features), "program");
        assert_eq!(model.predict(&train[15].features), "auto");
        let back = TrainedModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        let text = model.to_json().replace("\"auto\"", "\"program\"");
        assert!(TrainedModel::from_json(&text).is_err());
    }
}
