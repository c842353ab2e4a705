//! Seen/unseen splits, the synthetic benchmark generator and the on-disk
//! dataset format.
//!
//! A dataset directory holds plain CSV files (no header) plus `split.json`:
//!
//! | file | rows |
//! |------|------|
//! | `features_seen_train.csv`, `features_seen_test.csv`, `features_unseen.csv` | `d` reals per example |
//! | `labels_seen_train.csv`, `labels_seen_test.csv` | one class id per example |
//! | `labels_unseen.csv` (optional, evaluation only) | one class id per example |
//! | `attributes.csv` | `class_id,v1,…,vk` |
//! | `split.json` | `{"seen_classes":[…],"unseen_classes":[…],"d":…,"k":…}` |

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{Matrix, SeededRng, Stream};

pub type ClassId = u32;

pub const FEATURES_SEEN_TRAIN: &str = "features_seen_train.csv";
pub const FEATURES_SEEN_TEST: &str = "features_seen_test.csv";
pub const FEATURES_UNSEEN: &str = "features_unseen.csv";
pub const LABELS_SEEN_TRAIN: &str = "labels_seen_train.csv";
pub const LABELS_SEEN_TEST: &str = "labels_seen_test.csv";
pub const LABELS_UNSEEN: &str = "labels_unseen.csv";
pub const ATTRIBUTES: &str = "attributes.csv";
pub const SPLIT: &str = "split.json";

/// Per-class attribute vectors and the seen/unseen partition.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeTable {
    k: usize,
    rows: BTreeMap<ClassId, Vec<f64>>,
    seen: Vec<ClassId>,
    unseen: Vec<ClassId>,
}

impl AttributeTable {
    pub fn new(
        k: usize,
        rows: BTreeMap<ClassId, Vec<f64>>,
        seen: Vec<ClassId>,
        unseen: Vec<ClassId>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidDataset("attribute dimension is zero".into()));
        }
        if seen.is_empty() || unseen.is_empty() {
            return Err(Error::InvalidDataset(
                "both seen and unseen class sets must be non-empty".into(),
            ));
        }
        let seen_set: BTreeSet<_> = seen.iter().copied().collect();
        if let Some(&c) = unseen.iter().find(|c| seen_set.contains(c)) {
            return Err(Error::InvalidDataset(format!(
                "class {c} is both seen and unseen"
            )));
        }
        if seen_set.len() != seen.len()
            || unseen.iter().collect::<BTreeSet<_>>().len() != unseen.len()
        {
            return Err(Error::InvalidDataset("duplicate class in partition".into()));
        }
        for c in seen.iter().chain(&unseen) {
            match rows.get(c) {
                None => {
                    return Err(Error::InvalidDataset(format!(
                        "class {c} has no attribute row"
                    )))
                }
                Some(r) if r.len() != k => {
                    return Err(Error::InvalidDataset(format!(
                        "class {c} has {} attributes, expected {k}",
                        r.len()
                    )))
                }
                Some(r) if r.iter().any(|v| !(0.0..=1.0).contains(v)) => {
                    return Err(Error::InvalidDataset(format!(
                        "class {c} has attributes outside [0, 1]"
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(AttributeTable {
            k,
            rows,
            seen,
            unseen,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seen_classes(&self) -> &[ClassId] {
        &self.seen
    }

    pub fn unseen_classes(&self) -> &[ClassId] {
        &self.unseen
    }

    pub fn all_classes(&self) -> Vec<ClassId> {
        self.seen.iter().chain(&self.unseen).copied().collect()
    }

    pub fn get(&self, class: ClassId) -> Option<&[f64]> {
        self.rows.get(&class).map(Vec::as_slice)
    }

    pub fn is_seen(&self, class: ClassId) -> bool {
        self.seen.contains(&class)
    }

    pub fn is_unseen(&self, class: ClassId) -> bool {
        self.unseen.contains(&class)
    }

    /// One attribute row per entry of `classes`.
    pub fn rows_for(&self, classes: &[ClassId]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(classes.len() * self.k);
        for &c in classes {
            data.extend_from_slice(self.get(c).ok_or(Error::UnknownLabel(c))?);
        }
        Matrix::from_vec(classes.len(), self.k, data)
    }

    pub fn unseen_matrix(&self) -> Matrix {
        self.rows_for(&self.unseen)
            .expect("unseen classes have attribute rows")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub features: Matrix,
    pub labels: Vec<ClassId>,
}

impl LabeledSet {
    pub fn new(features: Matrix, labels: Vec<ClassId>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(LabeledSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A zero-shot split: labeled seen data, unlabeled unseen data and the
/// attribute table.
///
/// Hidden unseen labels are reachable only through
/// [`SplitDataset::unseen_test_labels`]; training code receives a
/// [`TrainView`], which has no such accessor.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    seen_train: LabeledSet,
    seen_test: LabeledSet,
    unseen_unlabeled: Matrix,
    unseen_test_labels: Option<Vec<ClassId>>,
    attributes: AttributeTable,
    d: usize,
}

impl SplitDataset {
    pub fn new(
        seen_train: LabeledSet,
        seen_test: LabeledSet,
        unseen_unlabeled: Matrix,
        unseen_test_labels: Option<Vec<ClassId>>,
        attributes: AttributeTable,
    ) -> Result<Self> {
        let d = seen_train.features.cols();
        if d == 0 {
            return Err(Error::InvalidDataset("feature dimension is zero".into()));
        }
        if seen_train.is_empty() {
            return Err(Error::InvalidDataset("no seen training examples".into()));
        }
        if unseen_unlabeled.rows() == 0 {
            return Err(Error::InvalidDataset("no unseen examples".into()));
        }
        for (name, m) in [
            ("seen test", &seen_test.features),
            ("unseen", &unseen_unlabeled),
        ] {
            if m.rows() > 0 && m.cols() != d {
                return Err(Error::InvalidDataset(format!(
                    "{name} features have {} columns, expected {d}",
                    m.cols()
                )));
            }
        }
        for set in [&seen_train, &seen_test] {
            if let Some(&c) = set.labels.iter().find(|&&c| !attributes.is_seen(c)) {
                return Err(Error::InvalidDataset(format!(
                    "label {c} is not a seen class"
                )));
            }
        }
        if let Some(labels) = &unseen_test_labels {
            if labels.len() != unseen_unlabeled.rows() {
                return Err(Error::InvalidDataset(format!(
                    "{} unseen labels for {} unseen examples",
                    labels.len(),
                    unseen_unlabeled.rows()
                )));
            }
            if let Some(&c) = labels.iter().find(|&&c| !attributes.is_unseen(c)) {
                return Err(Error::InvalidDataset(format!(
                    "label {c} is not an unseen class"
                )));
            }
        }
        Ok(SplitDataset {
            seen_train,
            seen_test,
            unseen_unlabeled,
            unseen_test_labels,
            attributes,
            d,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.attributes.k()
    }

    pub fn attributes(&self) -> &AttributeTable {
        &self.attributes
    }

    pub fn seen_train(&self) -> &LabeledSet {
        &self.seen_train
    }

    pub fn seen_test(&self) -> &LabeledSet {
        &self.seen_test
    }

    pub fn unseen_features(&self) -> &Matrix {
        &self.unseen_unlabeled
    }

    /// Held-out labels of the unseen set, for evaluation only.
    pub fn unseen_test_labels(&self) -> Option<&[ClassId]> {
        self.unseen_test_labels.as_deref()
    }

    pub fn training_view(&self) -> TrainView<'_> {
        TrainView { dataset: self }
    }
}

/// What training may see of a [`SplitDataset`].
#[derive(Clone, Copy)]
pub struct TrainView<'a> {
    dataset: &'a SplitDataset,
}

impl<'a> TrainView<'a> {
    pub fn d(&self) -> usize {
        self.dataset.d
    }

    pub fn k(&self) -> usize {
        self.dataset.k()
    }

    pub fn attributes(&self) -> &'a AttributeTable {
        &self.dataset.attributes
    }

    pub fn seen_features(&self) -> &'a Matrix {
        &self.dataset.seen_train.features
    }

    pub fn seen_labels(&self) -> &'a [ClassId] {
        &self.dataset.seen_train.labels
    }

    pub fn unseen_features(&self) -> &'a Matrix {
        &self.dataset.unseen_unlabeled
    }
}

/// Parameters of the synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_seen_classes: usize,
    pub n_unseen_classes: usize,
    pub d: usize,
    pub k: usize,
    pub samples_per_class_train: usize,
    pub samples_per_class_test: usize,
    pub cluster_noise: f64,
    pub attribute_to_mean_map_seed: u64,
    /// 0 keeps class attributes spread over the unit cube; 1 collapses
    /// every class onto the cube's center.
    pub overlap: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_seen_classes: 10,
            n_unseen_classes: 5,
            d: 64,
            k: 16,
            samples_per_class_train: 30,
            samples_per_class_test: 30,
            cluster_noise: 0.3,
            attribute_to_mean_map_seed: 2024,
            overlap: 0.5,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_seen_classes", self.n_seen_classes),
            ("n_unseen_classes", self.n_unseen_classes),
            ("d", self.d),
            ("k", self.k),
            ("samples_per_class_train", self.samples_per_class_train),
            ("samples_per_class_test", self.samples_per_class_test),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("synthetic spec: {name} must be >= 1")));
        }
        if !(self.cluster_noise > 0.0 && self.cluster_noise.is_finite()) {
            return Err(Error::invalid("synthetic spec: cluster_noise must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::invalid("synthetic spec: overlap must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Generates a split whose class feature means are an affine image of the
/// class attributes.
///
/// The affine map (`W`, `b`) comes from `attribute_to_mean_map_seed`, so
/// datasets drawn with different `seed`s share the same feature geometry.
/// Seen classes get ids `0..n_seen`, unseen classes the ids after them.
pub fn make_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SplitDataset> {
    spec.validate()?;
    let (d, k) = (spec.d, spec.k);

    let mut map_rng = SeededRng::with_stream(spec.attribute_to_mean_map_seed, Stream::Map);
    let w_scale = 2.0 / (k as f64).sqrt();
    let w: Vec<f64> = (0..d * k).map(|_| w_scale * map_rng.normal()).collect();
    // center of the attribute cube lands on a positive base level
    let b: Vec<f64> = (0..d)
        .map(|j| {
            let base = map_rng.uniform_range(0.5, 1.5);
            base - 0.5 * w[j * k..(j + 1) * k].iter().sum::<f64>()
        })
        .collect();

    let mut rng = SeededRng::with_stream(seed, Stream::Data);
    let n_classes = spec.n_seen_classes + spec.n_unseen_classes;
    let spread = 1.0 - spec.overlap;
    let mut rows = BTreeMap::new();
    let mut means = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let a: Vec<f64> = (0..k)
            .map(|_| 0.5 + spread * (rng.uniform() - 0.5))
            .collect();
        let mean: Vec<f64> = (0..d)
            .map(|j| {
                b[j] + w[j * k..(j + 1) * k]
                    .iter()
                    .zip(&a)
                    .map(|(wv, av)| wv * av)
                    .sum::<f64>()
            })
            .collect();
        rows.insert(c as ClassId, a);
        means.push(mean);
    }

    let mut draw = |classes: std::ops::Range<usize>, per_class: usize| -> (Matrix, Vec<ClassId>) {
        let mut data = Vec::with_capacity(classes.len() * per_class * d);
        let mut labels = Vec::with_capacity(classes.len() * per_class);
        for c in classes {
            for _ in 0..per_class {
                data.extend(
                    means[c]
                        .iter()
                        .map(|m| (m + spec.cluster_noise * rng.normal()).max(0.0)),
                );
                labels.push(c as ClassId);
            }
        }
        let n = labels.len();
        (Matrix::from_vec(n, d, data).expect("sized by construction"), labels)
    };
    let seen = 0..spec.n_seen_classes;
    let unseen = spec.n_seen_classes..n_classes;
    let (train_x, train_y) = draw(seen.clone(), spec.samples_per_class_train);
    let (test_x, test_y) = draw(seen.clone(), spec.samples_per_class_test);
    let (unseen_x, unseen_y) = draw(unseen.clone(), spec.samples_per_class_test);

    let attributes = AttributeTable::new(
        k,
        rows,
        seen.map(|c| c as ClassId).collect(),
        unseen.map(|c| c as ClassId).collect(),
    )?;
    SplitDataset::new(
        LabeledSet::new(train_x, train_y)?,
        LabeledSet::new(test_x, test_y)?,
        unseen_x,
        Some(unseen_y),
        attributes,
    )
}

/// Seeded shuffle of `0..n` cut into batches; the last batch may be short.
pub fn batch_iter(n: usize, batch_size: usize, rng: &mut SeededRng) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be >= 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    seen_classes: Vec<ClassId>,
    unseen_classes: Vec<ClassId>,
    d: usize,
    k: usize,
}

fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for row in m.iter_rows() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_labels(path: &Path, labels: &[ClassId]) -> Result<()> {
    let out: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, out)?;
    Ok(())
}

/// Writes `dataset` in the directory format read by [`load_dataset`].
pub fn save_dataset(dataset: &SplitDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join(FEATURES_SEEN_TRAIN), &dataset.seen_train.features)?;
    write_matrix(&dir.join(FEATURES_SEEN_TEST), &dataset.seen_test.features)?;
    write_matrix(&dir.join(FEATURES_UNSEEN), &dataset.unseen_unlabeled)?;
    write_labels(&dir.join(LABELS_SEEN_TRAIN), &dataset.seen_train.labels)?;
    write_labels(&dir.join(LABELS_SEEN_TEST), &dataset.seen_test.labels)?;
    if let Some(labels) = &dataset.unseen_test_labels {
        write_labels(&dir.join(LABELS_UNSEEN), labels)?;
    }

    let attrs = &dataset.attributes;
    let mut out = String::new();
    for (c, row) in &attrs.rows {
        out.push_str(&c.to_string());
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(dir.join(ATTRIBUTES), out)?;

    let split = SplitFile {
        seen_classes: attrs.seen.clone(),
        unseen_classes: attrs.unseen.clone(),
        d: dataset.d,
        k: attrs.k,
    };
    fs::write(dir.join(SPLIT), serde_json::to_string_pretty(&split)? + "\n")?;
    Ok(())
}

fn read_required(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_reals(file: &Path, line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            let v: f64 = f.trim().parse().map_err(|_| Error::MalformedRow {
                file: file.to_path_buf(),
                line,
                msg: format!("{:?} is not a number", f.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    file: file.to_path_buf(),
                    line,
                    msg: format!("non-finite value {v}"),
                });
            }
            Ok(v)
        })
        .collect()
}

fn read_matrix(path: &Path, d: usize) -> Result<Matrix> {
    let text = read_required(path)?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, l) in lines(&text) {
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != d {
            return Err(Error::DimensionMismatch {
                file: path.to_path_buf(),
                line,
                expected: d,
                found: fields.len(),
            });
        }
        data.extend(parse_reals(path, line, &fields)?);
        rows += 1;
    }
    Matrix::from_vec(rows, d, data)
}

fn read_labels(path: &Path, allowed: &BTreeSet<ClassId>) -> Result<Vec<ClassId>> {
    let text = read_required(path)?;
    lines(&text)
        .map(|(line, l)| {
            let c: ClassId = l.parse().map_err(|_| Error::MalformedRow {
                file: path.to_path_buf(),
                line,
                msg: format!("{l:?} is not a class id"),
            })?;
            if !allowed.contains(&c) {
                return Err(Error::MalformedRow {
                    file: path.to_path_buf(),
                    line,
                    msg: format!("class {c} does not belong to this split"),
                });
            }
            Ok(c)
        })
        .collect()
}

fn check_rows(path: PathBuf, features: &Matrix, labels: &[ClassId]) -> Result<()> {
    if features.rows() != labels.len() {
        return Err(Error::InvalidDataset(format!(
            "{}: {} labels for {} feature rows",
            path.display(),
            labels.len(),
            features.rows()
        )));
    }
    Ok(())
}

/// Min-max rescales each attribute dimension that leaves `[0, 1]`.
fn normalize_attributes(rows: &mut BTreeMap<ClassId, Vec<f64>>, k: usize) {
    for j in 0..k {
        let (lo, hi) = rows
            .values()
            .map(|r| r[j])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if lo >= 0.0 && hi <= 1.0 {
            continue;
        }
        let span = hi - lo;
        for r in rows.values_mut() {
            r[j] = if span > 0.0 { (r[j] - lo) / span } else { 0.0 };
        }
    }
}

/// Reads a dataset directory, validating every file against `split.json`.
pub fn load_dataset(dir: &Path) -> Result<SplitDataset> {
    let split_path = dir.join(SPLIT);
    let split: SplitFile =
        serde_json::from_str(&read_required(&split_path)?).map_err(|e| Error::MalformedRow {
            file: split_path.clone(),
            line: e.line(),
            msg: e.to_string(),
        })?;
    let seen: BTreeSet<ClassId> = split.seen_classes.iter().copied().collect();
    let unseen: BTreeSet<ClassId> = split.unseen_classes.iter().copied().collect();
    if let Some(&class) = seen.intersection(&unseen).next() {
        return Err(Error::OverlappingPartition {
            file: split_path,
            class,
        });
    }

    let attr_path = dir.join(ATTRIBUTES);
    let text = read_required(&attr_path)?;
    let mut rows = BTreeMap::new();
    for (line, l) in lines(&text) {
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != split.k + 1 {
            return Err(Error::DimensionMismatch {
                file: attr_path.clone(),
                line,
                expected: split.k + 1,
                found: fields.len(),
            });
        }
        let class: ClassId = fields[0].trim().parse().map_err(|_| Error::MalformedRow {
            file: attr_path.clone(),
            line,
            msg: format!("{:?} is not a class id", fields[0].trim()),
        })?;
        let values = parse_reals(&attr_path, line, &fields[1..])?;
        if rows.insert(class, values).is_some() {
            return Err(Error::MalformedRow {
                file: attr_path.clone(),
                line,
                msg: format!("duplicate attribute row for class {class}"),
            });
        }
    }
    normalize_attributes(&mut rows, split.k);
    let attributes = AttributeTable::new(
        split.k,
        rows,
        split.seen_classes.clone(),
        split.unseen_classes.clone(),
    )?;

    let train_x = read_matrix(&dir.join(FEATURES_SEEN_TRAIN), split.d)?;
    let train_y = read_labels(&dir.join(LABELS_SEEN_TRAIN), &seen)?;
    check_rows(dir.join(LABELS_SEEN_TRAIN), &train_x, &train_y)?;
    let test_x = read_matrix(&dir.join(FEATURES_SEEN_TEST), split.d)?;
    let test_y = read_labels(&dir.join(LABELS_SEEN_TEST), &seen)?;
    check_rows(dir.join(LABELS_SEEN_TEST), &test_x, &test_y)?;
    let unseen_x = read_matrix(&dir.join(FEATURES_UNSEEN), split.d)?;
    let unseen_labels_path = dir.join(LABELS_UNSEEN);
    let unseen_y = if unseen_labels_path.exists() {
        let labels = read_labels(&unseen_labels_path, &unseen)?;
        check_rows(unseen_labels_path, &unseen_x, &labels)?;
        Some(labels)
    } else {
        None
    };

    SplitDataset::new(
        LabeledSet::new(train_x, train_y)?,
        LabeledSet::new(test_x, test_y)?,
        unseen_x,
        unseen_y,
        attributes,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_seen_classes: 2,
            n_unseen_classes: 1,
            d: 8,
            k: 3,
            samples_per_class_train: 5,
            samples_per_class_test: 4,
            cluster_noise: 0.1,
            attribute_to_mean_map_seed: 1,
            overlap: 0.0,
        }
    }

    #[test]
    fn synthetic_structure() {
        let ds = make_synthetic(&small_spec(), 3).unwrap();
        let attrs = ds.attributes();
        assert_eq!(attrs.all_classes().len(), 3);
        assert_eq!(attrs.seen_classes(), &[0, 1]);
        assert_eq!(attrs.unseen_classes(), &[2]);
        assert_eq!(ds.seen_train().len(), 10);
        assert_eq!(ds.unseen_features().shape(), (4, 8));
        assert!(ds.unseen_features().as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = make_synthetic(&small_spec(), 9).unwrap();
        let b = make_synthetic(&small_spec(), 9).unwrap();
        assert_eq!(a, b);
        let c = make_synthetic(&small_spec(), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let mut spec = small_spec();
        spec.n_unseen_classes = 0;
        assert!(matches!(make_synthetic(&spec, 0), Err(Error::InvalidArgument(_))));
        let mut spec = small_spec();
        spec.cluster_noise = 0.0;
        assert!(make_synthetic(&spec, 0).is_err());
    }

    #[test]
    fn batches_partition_indices() {
        let mut rng = SeededRng::new(4);
        let batches = batch_iter(10, 4, &mut rng).unwrap();
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), [4, 4, 2]);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let again = batch_iter(10, 4, &mut SeededRng::new(4)).unwrap();
        assert_eq!(batches, again);

        let single = batch_iter(10, 16, &mut rng).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].len(), 10);

        assert!(batch_iter(10, 0, &mut rng).is_err());
    }

    #[test]
    fn out_of_range_dimensions_are_rescaled() {
        let mut rows = BTreeMap::new();
        rows.insert(0, vec![0.5, -2.0]);
        rows.insert(1, vec![0.25, 6.0]);
        normalize_attributes(&mut rows, 2);
        assert_eq!(rows[&0], vec![0.5, 0.0]);
        assert_eq!(rows[&1], vec![0.25, 1.0]);
    }
}
