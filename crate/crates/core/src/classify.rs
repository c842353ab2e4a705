//! Feature synthesis and the downstream classifiers: a linear softmax
//! classifier and the seen/unseen cascade used for generalized evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Kind, Reader, Writer};
use crate::data::{AttributeTable, ClassId, LabeledSet};
use crate::error::{Error, Result};
use crate::models::{generate, Mlp};
use crate::ndcore::{adam_step, sample_gaussian, AdamState, Matrix, SeededRng};

/// Gate class ids.
pub const GATE_SEEN: ClassId = 0;
pub const GATE_UNSEEN: ClassId = 1;

/// Anything that maps feature rows to class ids.
pub trait Predictor {
    fn predict(&self, x: &Matrix) -> Result<Vec<ClassId>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftmaxConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        SoftmaxConfig {
            lr: 1e-3,
            epochs: 100,
            batch_size: 64,
        }
    }
}

impl SoftmaxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::invalid(
                "classifier lr must be > 0 and batch_size >= 1",
            ));
        }
        Ok(())
    }
}

/// `P(y | x) = softmax(xθ + b)` over a fixed class list.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxClassifier {
    weights: Matrix,
    bias: Matrix,
    classes: Vec<ClassId>,
}

impl SoftmaxClassifier {
    pub fn new(weights: Matrix, bias: Matrix, classes: Vec<ClassId>) -> Result<Self> {
        let c = classes.len();
        if c == 0 {
            return Err(Error::EmptyInput("classifier needs at least one class".into()));
        }
        if weights.cols() != c || bias.shape() != (1, c) || weights.rows() == 0 {
            return Err(Error::shape(format!(
                "weights {:?} and bias {:?} do not fit {c} classes",
                weights.shape(),
                bias.shape()
            )));
        }
        let mut sorted = classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != c {
            return Err(Error::invalid("duplicate class in classifier class list"));
        }
        Ok(SoftmaxClassifier {
            weights,
            bias,
            classes,
        })
    }

    pub fn zeros(input_dim: usize, classes: Vec<ClassId>) -> Result<Self> {
        let c = classes.len();
        Self::new(Matrix::zeros(input_dim, c), Matrix::zeros(1, c), classes)
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &Matrix {
        &self.bias
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "classifier expects {} features, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// Row-wise class probabilities, columns ordered as `classes()`.
    pub fn probabilities(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x)?;
        let mut p = x.matmul(&self.weights);
        let bias = self.bias.as_slice();
        for row in 0..p.rows() {
            let r = p.row_mut(row);
            r.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in r.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            r.iter_mut().for_each(|v| *v /= total);
        }
        Ok(p)
    }

    /// Arg-max class and probability vector for each row. Ties go to the
    /// lowest class id.
    pub fn predict_with_probabilities(&self, x: &Matrix) -> Result<Vec<(ClassId, Vec<f64>)>> {
        let p = self.probabilities(x)?;
        Ok(p.iter_rows()
            .map(|r| (self.argmax(r), r.to_vec()))
            .collect())
    }

    fn argmax(&self, probs: &[f64]) -> ClassId {
        let mut best = 0;
        for (j, &v) in probs.iter().enumerate().skip(1) {
            let b = probs[best];
            if v > b || (v == b && self.classes[j] < self.classes[best]) {
                best = j;
            }
        }
        self.classes[best]
    }

    fn targets(&self, labels: &[ClassId]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|&y| {
                self.classes
                    .iter()
                    .position(|&c| c == y)
                    .ok_or(Error::UnknownLabel(y))
            })
            .collect()
    }

    /// Mean cross-entropy and its gradients with respect to weights and bias.
    pub fn loss_and_gradients(&self, x: &Matrix, labels: &[ClassId]) -> Result<(f64, Matrix, Matrix)> {
        if x.rows() == 0 {
            return Err(Error::EmptyInput("no training rows".into()));
        }
        if x.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} rows but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        let targets = self.targets(labels)?;
        let mut delta = self.probabilities(x)?;
        let n = x.rows() as f64;
        let mut loss = 0.0;
        for (row, &t) in targets.iter().enumerate() {
            let r = delta.row_mut(row);
            loss -= r[t].max(f64::MIN_POSITIVE).ln();
            r[t] -= 1.0;
        }
        let delta = delta.map(|v| v / n);
        let gw = Matrix::matmul_t(x, true, &delta, false);
        let gb = delta.col_sum();
        Ok((loss / n, gw, gb))
    }
}

impl Predictor for SoftmaxClassifier {
    fn predict(&self, x: &Matrix) -> Result<Vec<ClassId>> {
        let p = self.probabilities(x)?;
        Ok(p.iter_rows().map(|r| self.argmax(r)).collect())
    }
}

/// Fits a softmax classifier over `classes` with mini-batch Adam from zero
/// weights.
pub fn train_softmax(
    features: &Matrix,
    labels: &[ClassId],
    classes: &[ClassId],
    config: &SoftmaxConfig,
    rng: &mut SeededRng,
) -> Result<SoftmaxClassifier> {
    config.validate()?;
    if features.rows() == 0 || labels.is_empty() {
        return Err(Error::EmptyInput("softmax training set is empty".into()));
    }
    let mut clf = SoftmaxClassifier::zeros(features.cols(), classes.to_vec())?;
    // label validation up front so an unknown label fails before any work
    clf.targets(labels)?;
    let mut params = vec![clf.weights.clone(), clf.bias.clone()];
    let mut opt = AdamState::new(&params);
    for _ in 0..config.epochs {
        for batch in crate::data::batch_iter(features.rows(), config.batch_size, rng)? {
            let x = features.select_rows(&batch);
            let y: Vec<ClassId> = batch.iter().map(|&i| labels[i]).collect();
            let (_, gw, gb) = clf.loss_and_gradients(&x, &y)?;
            adam_step(&mut params, &[gw, gb], &mut opt, config.lr)?;
            clf.weights = params[0].clone();
            clf.bias = params[1].clone();
        }
    }
    Ok(clf)
}

/// Binary seen (class 0) vs unseen (class 1) logistic model.
pub fn train_gate(
    seen: &Matrix,
    unseen: &Matrix,
    config: &SoftmaxConfig,
    rng: &mut SeededRng,
) -> Result<SoftmaxClassifier> {
    if seen.rows() == 0 || unseen.rows() == 0 {
        return Err(Error::EmptyInput("gate needs seen and unseen rows".into()));
    }
    let x = seen.vstack(unseen)?;
    let mut labels = vec![GATE_SEEN; seen.rows()];
    labels.resize(x.rows(), GATE_UNSEEN);
    train_softmax(&x, &labels, &[GATE_SEEN, GATE_UNSEEN], config, rng)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    /// Two-class softmax over `[GATE_SEEN, GATE_UNSEEN]`.
    Trained(SoftmaxClassifier),
    /// Fixed unseen probability for every input.
    Constant(f64),
}

impl Gate {
    /// Probability that each row belongs to an unseen class.
    pub fn unseen_probability(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Gate::Constant(p) => Ok(vec![*p; x.rows()]),
            Gate::Trained(clf) => {
                let col = clf
                    .classes()
                    .iter()
                    .position(|&c| c == GATE_UNSEEN)
                    .expect("validated gate classes");
                let p = clf.probabilities(x)?;
                Ok(p.iter_rows().map(|r| r[col]).collect())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Gate::Constant(p) if !(0.0..=1.0).contains(p) => {
                Err(Error::invalid(format!("constant gate output {p} outside [0, 1]")))
            }
            Gate::Trained(clf) if clf.classes() != [GATE_SEEN, GATE_UNSEEN] => {
                Err(Error::invalid("gate classifier must have classes [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

pub const DEFAULT_GATE_THRESHOLD: f64 = 0.5;

/// Routes rows with `gate >= threshold` to the unseen expert and the rest to
/// the seen expert.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeClassifier {
    gate: Gate,
    seen: SoftmaxClassifier,
    unseen: SoftmaxClassifier,
    threshold: f64,
}

impl CascadeClassifier {
    pub fn new(
        gate: Gate,
        seen: SoftmaxClassifier,
        unseen: SoftmaxClassifier,
        threshold: f64,
    ) -> Result<Self> {
        gate.validate()?;
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::invalid(format!("gate threshold {threshold} outside (0, 1)")));
        }
        if seen.classes().iter().any(|c| unseen.classes().contains(c)) {
            return Err(Error::invalid("expert class lists overlap"));
        }
        let gate_width = match &gate {
            Gate::Trained(g) => Some(g.input_dim()),
            Gate::Constant(_) => None,
        };
        if seen.input_dim() != unseen.input_dim()
            || gate_width.is_some_and(|w| w != seen.input_dim())
        {
            return Err(Error::shape("gate and experts disagree on feature width"));
        }
        Ok(CascadeClassifier {
            gate,
            seen,
            unseen,
            threshold,
        })
    }

    pub fn gate(&self) -> &Gate {
        &self.gate
    }

    pub fn seen_expert(&self) -> &SoftmaxClassifier {
        &self.seen
    }

    pub fn unseen_expert(&self) -> &SoftmaxClassifier {
        &self.unseen
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_gate(mut self, gate: Gate) -> Result<Self> {
        gate.validate()?;
        self.gate = gate;
        Ok(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Writer::new(Kind::Classifier);
        w.f64(self.threshold);
        match &self.gate {
            Gate::Trained(g) => {
                w.u8(1);
                write_softmax(&mut w, g);
            }
            Gate::Constant(p) => {
                w.u8(2);
                w.f64(*p);
            }
        }
        write_softmax(&mut w, &self.seen);
        write_softmax(&mut w, &self.unseen);
        w.write_to(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = checkpoint::read_file(path)?;
        let mut r = Reader::open(&bytes, Kind::Classifier)?;
        let threshold = r.f64()?;
        let gate = match r.u8()? {
            1 => Gate::Trained(read_softmax(&mut r)?),
            2 => Gate::Constant(r.f64()?),
            t => return Err(Error::Checkpoint(format!("unknown gate tag {t}"))),
        };
        let seen = read_softmax(&mut r)?;
        let unseen = read_softmax(&mut r)?;
        r.finish()?;
        CascadeClassifier::new(gate, seen, unseen, threshold)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

fn write_softmax(w: &mut Writer, clf: &SoftmaxClassifier) {
    w.u64(clf.classes.len() as u64);
    for &c in &clf.classes {
        w.u64(c as u64);
    }
    w.matrix(&clf.weights);
    w.matrix(&clf.bias);
}

fn read_softmax(r: &mut Reader<'_>) -> Result<SoftmaxClassifier> {
    let n = r.usize()?;
    let classes = (0..n)
        .map(|_| {
            let c = r.u64()?;
            ClassId::try_from(c).map_err(|_| Error::Checkpoint(format!("class id {c} out of range")))
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = r.matrix()?;
    let bias = r.matrix()?;
    SoftmaxClassifier::new(weights, bias, classes).map_err(|e| Error::Checkpoint(e.to_string()))
}

impl Predictor for CascadeClassifier {
    fn predict(&self, x: &Matrix) -> Result<Vec<ClassId>> {
        let gate = self.gate.unseen_probability(x)?;
        let seen = self.seen.predict(x)?;
        let unseen = self.unseen.predict(x)?;
        Ok(gate
            .iter()
            .zip(seen.iter().zip(&unseen))
            .map(|(&g, (&s, &u))| if g >= self.threshold { u } else { s })
            .collect())
    }
}

/// `cascade.predict(x)`.
pub fn cascaded_predict(cascade: &CascadeClassifier, x: &Matrix) -> Result<Vec<ClassId>> {
    cascade.predict(x)
}

/// `n_per_class` generated features for each class in `classes`, each with
/// its own noise draw, labeled by the conditioning class.
pub fn synthesize_classes(
    generator: &Mlp,
    table: &AttributeTable,
    classes: &[ClassId],
    n_per_class: usize,
    rng: &mut SeededRng,
) -> Result<LabeledSet> {
    if n_per_class == 0 || classes.is_empty() {
        return Err(Error::invalid("synthesis needs n_per_class >= 1 and a class"));
    }
    let mut features: Option<Matrix> = None;
    let mut labels = Vec::with_capacity(classes.len() * n_per_class);
    for &class in classes {
        let attrs = table.rows_for(&vec![class; n_per_class])?;
        let z = sample_gaussian(n_per_class, table.k(), rng)?;
        let block = generate(generator, &z, &attrs)?;
        features = Some(match features {
            None => block,
            Some(acc) => acc.vstack(&block)?,
        });
        labels.extend(std::iter::repeat_n(class, n_per_class));
    }
    LabeledSet::new(features.expect("at least one class"), labels)
}

/// The synthetic unseen set used to train the unseen expert.
pub fn synthesize_unseen(
    generator: &Mlp,
    table: &AttributeTable,
    n_per_class: usize,
    rng: &mut SeededRng,
) -> Result<LabeledSet> {
    synthesize_classes(generator, table, table.unseen_classes(), n_per_class, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs(rng: &mut SeededRng, n: usize, gap: f64) -> (Matrix, Vec<ClassId>) {
        let noise = sample_gaussian(2 * n, 2, rng).unwrap();
        let mut x = noise.map(|v| 0.3 * v);
        let mut y = Vec::new();
        for i in 0..2 * n {
            let class = (i % 2) as ClassId;
            let shift = if class == 0 { -gap } else { gap };
            x.row_mut(i)[0] += shift;
            y.push(class + 7);
        }
        (x, y)
    }

    #[test]
    fn zero_weights_give_uniform_and_lowest_id() {
        let clf = SoftmaxClassifier::zeros(3, vec![9, 4, 6]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let out = clf.predict_with_probabilities(&x).unwrap();
        assert_eq!(out[0].0, 4);
        for p in &out[0].1 {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_set_margin() {
        // logits 0 and 2 → p1 = e²/(1+e²)
        let w = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let clf = SoftmaxClassifier::new(w, Matrix::zeros(1, 2), vec![0, 1]).unwrap();
        let out = clf.predict_with_probabilities(&Matrix::scalar(2.0)).unwrap();
        let e2 = 2.0f64.exp();
        assert!((out[0].1[1] - e2 / (1.0 + e2)).abs() < 1e-15);
        assert_eq!(out[0].0, 1);
        assert!((out[0].1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separable_blobs_are_learned() {
        let mut rng = SeededRng::new(1);
        let (x, y) = two_blobs(&mut rng, 100, 2.0);
        let cfg = SoftmaxConfig {
            lr: 1e-2,
            epochs: 100,
            batch_size: 32,
        };
        let clf = train_softmax(&x, &y, &[7, 8], &cfg, &mut rng).unwrap();
        assert_eq!(clf.predict(&x).unwrap(), y);
    }

    #[test]
    fn single_class_is_certain() {
        let mut rng = SeededRng::new(2);
        let x = sample_gaussian(10, 3, &mut rng).unwrap();
        let clf = train_softmax(&x, &[5; 10], &[5], &SoftmaxConfig::default(), &mut rng).unwrap();
        let probe = sample_gaussian(4, 3, &mut rng).unwrap().map(|v| 100.0 * v);
        for (c, p) in clf.predict_with_probabilities(&probe).unwrap() {
            assert_eq!(c, 5);
            assert_eq!(p, vec![1.0]);
        }
    }

    #[test]
    fn training_errors() {
        let mut rng = SeededRng::new(3);
        let cfg = SoftmaxConfig::default();
        assert!(matches!(
            train_softmax(&Matrix::zeros(0, 2), &[], &[0], &cfg, &mut rng),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            train_softmax(&Matrix::zeros(2, 2), &[0, 3], &[0, 1], &cfg, &mut rng),
            Err(Error::UnknownLabel(3))
        ));
        let clf = SoftmaxClassifier::zeros(2, vec![0]).unwrap();
        assert!(clf.predict(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(4);
        let x = sample_gaussian(6, 3, &mut rng).unwrap();
        let w = sample_gaussian(3, 4, &mut rng).unwrap();
        let b = sample_gaussian(1, 4, &mut rng).unwrap();
        let y = [0, 2, 1, 3, 3, 0];
        let clf = SoftmaxClassifier::new(w.clone(), b.clone(), vec![0, 1, 2, 3]).unwrap();
        let (_, gw, gb) = clf.loss_and_gradients(&x, &y).unwrap();
        let loss_at = |w: &Matrix, b: &Matrix| {
            SoftmaxClassifier::new(w.clone(), b.clone(), vec![0, 1, 2, 3])
                .unwrap()
                .loss_and_gradients(&x, &y)
                .unwrap()
                .0
        };
        let h = 1e-5;
        for (param, grad, is_w) in [(&w, &gw, true), (&b, &gb, false)] {
            for i in 0..param.len() {
                let mut plus = param.clone();
                plus.as_mut_slice()[i] += h;
                let mut minus = param.clone();
                minus.as_mut_slice()[i] -= h;
                let fd = if is_w {
                    (loss_at(&plus, &b) - loss_at(&minus, &b)) / (2.0 * h)
                } else {
                    (loss_at(&w, &plus) - loss_at(&w, &minus)) / (2.0 * h)
                };
                let an = grad.as_slice()[i];
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn gate_separates_disjoint_clusters() {
        let mut rng = SeededRng::new(5);
        let seen = sample_uniform_block(&mut rng, 100, 0.0);
        let unseen = sample_uniform_block(&mut rng, 100, 5.0);
        let cfg = SoftmaxConfig {
            lr: 1e-2,
            ..SoftmaxConfig::default()
        };
        let gate = Gate::Trained(train_gate(&seen, &unseen, &cfg, &mut rng).unwrap());
        let ps = gate.unseen_probability(&seen).unwrap();
        let pu = gate.unseen_probability(&unseen).unwrap();
        assert!(ps.iter().all(|&p| (0.0..0.5).contains(&p)));
        assert!(pu.iter().all(|&p| p >= 0.5 && p <= 1.0));
    }

    fn sample_uniform_block(rng: &mut SeededRng, n: usize, offset: f64) -> Matrix {
        let v: Vec<f64> = (0..n).map(|_| offset + rng.uniform()).collect();
        Matrix::from_vec(n, 1, v).unwrap()
    }

    #[test]
    fn gate_on_identical_distributions_is_near_chance() {
        let mut rng = SeededRng::new(6);
        let seen = sample_gaussian(500, 4, &mut rng).unwrap();
        let unseen = sample_gaussian(500, 4, &mut rng).unwrap();
        let gate = train_gate(&seen, &unseen, &SoftmaxConfig::default(), &mut rng).unwrap();
        let test = sample_gaussian(1000, 4, &mut rng).unwrap();
        let truth: Vec<ClassId> = (0..1000).map(|i| (i >= 500) as ClassId).collect();
        let pred = gate.predict(&test).unwrap();
        let acc = pred.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / 1000.0;
        assert!((acc - 0.5).abs() <= 0.05, "gate accuracy {acc}");
    }

    #[test]
    fn routing_follows_the_gate() {
        let mut rng = SeededRng::new(7);
        let seen = SoftmaxClassifier::new(
            sample_gaussian(3, 2, &mut rng).unwrap(),
            Matrix::zeros(1, 2),
            vec![0, 1],
        )
        .unwrap();
        let unseen = SoftmaxClassifier::new(
            sample_gaussian(3, 3, &mut rng).unwrap(),
            Matrix::zeros(1, 3),
            vec![2, 3, 4],
        )
        .unwrap();
        let x = sample_gaussian(50, 3, &mut rng).unwrap();
        let to_seen = CascadeClassifier::new(Gate::Constant(0.0), seen.clone(), unseen.clone(), 0.5)
            .unwrap();
        assert!(to_seen.predict(&x).unwrap().iter().all(|c| *c <= 1));
        let to_unseen = to_seen.with_gate(Gate::Constant(1.0)).unwrap();
        assert!(cascaded_predict(&to_unseen, &x).unwrap().iter().all(|c| *c >= 2));

        assert!(CascadeClassifier::new(Gate::Constant(0.0), seen.clone(), seen.clone(), 0.5).is_err());
        assert!(CascadeClassifier::new(Gate::Constant(0.0), seen.clone(), unseen.clone(), 1.0).is_err());
        assert!(CascadeClassifier::new(Gate::Constant(1.5), seen, unseen, 0.5).is_err());
    }

    #[test]
    fn cascade_checkpoint_round_trip() {
        let mut rng = SeededRng::new(8);
        let x = sample_gaussian(20, 3, &mut rng).unwrap();
        let labels: Vec<ClassId> = (0..20).map(|i| (i % 2) as ClassId).collect();
        let cfg = SoftmaxConfig {
            epochs: 3,
            ..SoftmaxConfig::default()
        };
        let gate = train_gate(&x, &x.map(|v| v + 1.0), &cfg, &mut rng).unwrap();
        let seen = train_softmax(&x, &labels, &[0, 1], &cfg, &mut rng).unwrap();
        let unseen_labels: Vec<ClassId> = labels.iter().map(|c| c + 5).collect();
        let unseen = train_softmax(&x, &unseen_labels, &[5, 6], &cfg, &mut rng).unwrap();
        let cascade = CascadeClassifier::new(Gate::Trained(gate), seen, unseen, 0.4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.ckpt");
        cascade.save(&path).unwrap();
        assert_eq!(CascadeClassifier::load(&path).unwrap(), cascade);

        let bytes = std::fs::read(&path).unwrap();
        assert!(crate::models::ModelSet::from_bytes(&bytes).is_err());
    }

    #[test]
    fn synthesis_counts_and_determinism() {
        use crate::data::{make_synthetic, SyntheticSpec};
        use crate::models::{init_models, Stage};
        let spec = SyntheticSpec {
            n_seen_classes: 3,
            n_unseen_classes: 5,
            d: 6,
            k: 3,
            ..SyntheticSpec::default()
        };
        let ds = make_synthetic(&spec, 1).unwrap();
        let models = init_models(6, 3, 8, Stage::One, &mut SeededRng::new(1)).unwrap();
        let a = synthesize_unseen(&models.generator, ds.attributes(), 200, &mut SeededRng::new(2))
            .unwrap();
        let b = synthesize_unseen(&models.generator, ds.attributes(), 200, &mut SeededRng::new(2))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1000);
        for &c in ds.attributes().unseen_classes() {
            assert_eq!(a.labels.iter().filter(|&&l| l == c).count(), 200);
        }
        assert!(synthesize_unseen(&models.generator, ds.attributes(), 0, &mut SeededRng::new(2))
            .is_err());
    }
}
