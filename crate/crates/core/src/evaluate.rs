//! Per-class accuracy, the harmonic mean and evaluation reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::Predictor;
use crate::data::{ClassId, SplitDataset};
use crate::error::{Error, Result};

/// Accuracy of each class among its own instances. Classes in `classes`
/// that have no instances are omitted.
pub fn per_class_accuracies(
    predictions: &[ClassId],
    truth: &[ClassId],
    classes: &[ClassId],
) -> Result<BTreeMap<ClassId, f64>> {
    if predictions.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    let known: BTreeSet<ClassId> = classes.iter().copied().collect();
    let mut tally: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    for (&p, &t) in predictions.iter().zip(truth) {
        if !known.contains(&t) {
            return Err(Error::UnknownLabel(t));
        }
        let entry = tally.entry(t).or_default();
        entry.0 += (p == t) as usize;
        entry.1 += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(c, (hit, n))| (c, hit as f64 / n as f64))
        .collect())
}

/// Unweighted mean of the per-class accuracies, in `[0, 1]`.
pub fn per_class_top1(predictions: &[ClassId], truth: &[ClassId], classes: &[ClassId]) -> Result<f64> {
    let acc = per_class_accuracies(predictions, truth, classes)?;
    if acc.is_empty() {
        return Err(Error::EmptyInput("no labeled instances to score".into()));
    }
    Ok(acc.values().sum::<f64>() / acc.len() as f64)
}

/// `2·U·S / (U + S)`, zero when both are zero.
pub fn harmonic_mean(u: f64, s: f64) -> Result<f64> {
    if !(u >= 0.0 && s >= 0.0) {
        return Err(Error::invalid(format!(
            "harmonic mean needs non-negative inputs, got ({u}, {s})"
        )));
    }
    if u + s == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * u * s / (u + s))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Czsl,
    Gzsl,
}

/// Percentages in `[0, 100]`; per-class accuracies in `[0, 1]`.
///
/// Conventional reports carry the unseen accuracy in `U` and leave `S`
/// and `H` empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "S")]
    pub s: Option<f64>,
    #[serde(rename = "H")]
    pub h: Option<f64>,
    pub per_class: BTreeMap<ClassId, f64>,
    pub config_hash: String,
    pub seed: u64,
    /// Seconds since the Unix epoch; kept out of the JSON so that reports
    /// from identical runs compare equal byte for byte.
    #[serde(skip)]
    pub timestamp: Option<u64>,
}

impl EvalReport {
    pub fn with_run(mut self, config_hash: &str, seed: u64) -> Self {
        self.config_hash = config_hash.to_string();
        self.seed = seed;
        self.timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Conventional zero-shot accuracy of an unseen-only classifier on the
/// unseen test set.
pub fn evaluate_czsl(unseen_clf: &impl Predictor, dataset: &SplitDataset) -> Result<EvalReport> {
    let truth = dataset
        .unseen_test_labels()
        .ok_or_else(|| Error::MissingLabels("dataset has no unseen test labels".into()))?;
    let predictions = unseen_clf.predict(dataset.unseen_features())?;
    let classes = dataset.attributes().unseen_classes();
    let per_class = per_class_accuracies(&predictions, truth, classes)?;
    let u = 100.0 * mean(&per_class)?;
    Ok(EvalReport {
        protocol: Protocol::Czsl,
        u,
        s: None,
        h: None,
        per_class,
        config_hash: String::new(),
        seed: 0,
        timestamp: None,
    })
}

/// Generalized zero-shot accuracies: every test instance is classified over
/// the union of seen and unseen classes.
pub fn evaluate_gzsl(classifier: &impl Predictor, dataset: &SplitDataset) -> Result<EvalReport> {
    let unseen_truth = dataset
        .unseen_test_labels()
        .ok_or_else(|| Error::MissingLabels("dataset has no unseen test labels".into()))?;
    let seen_test = dataset.seen_test();
    if seen_test.is_empty() {
        return Err(Error::MissingLabels("dataset has no seen test split".into()));
    }
    let all = dataset.attributes().all_classes();
    let unseen_pred = classifier.predict(dataset.unseen_features())?;
    let seen_pred = classifier.predict(&seen_test.features)?;
    let unseen_acc = per_class_accuracies(&unseen_pred, unseen_truth, dataset.attributes().unseen_classes())?;
    let seen_acc = per_class_accuracies(&seen_pred, &seen_test.labels, dataset.attributes().seen_classes())?;
    let u = 100.0 * mean(&unseen_acc)?;
    let s = 100.0 * mean(&seen_acc)?;
    let mut per_class = seen_acc;
    per_class.extend(unseen_acc);
    debug_assert!(per_class.keys().all(|c| all.contains(c)));
    Ok(EvalReport {
        protocol: Protocol::Gzsl,
        u,
        s: Some(s),
        h: Some(harmonic_mean(u, s)?),
        per_class,
        config_hash: String::new(),
        seed: 0,
        timestamp: None,
    })
}

fn mean(acc: &BTreeMap<ClassId, f64>) -> Result<f64> {
    if acc.is_empty() {
        return Err(Error::EmptyInput("no labeled instances to score".into()));
    }
    Ok(acc.values().sum::<f64>() / acc.len() as f64)
}

/// Plain-text table, percentages to one decimal.
pub fn render_reports(reports: &[&EvalReport]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
    let mut out = String::from("protocol      U      S      H\n");
    for r in reports {
        let name = match r.protocol {
            Protocol::Czsl => "czsl",
            Protocol::Gzsl => "gzsl",
        };
        let _ = writeln!(
            out,
            "{name:<8} {:>6} {:>6} {:>6}",
            cell(Some(r.u)),
            cell(r.s),
            cell(r.h)
        );
    }
    out
}
