//! End-to-end composition: two-stage training, classifier fitting on
//! synthesized features, and both evaluation protocols.

use serde::{Deserialize, Serialize};

use crate::classify::{
    synthesize_classes, synthesize_unseen, train_gate, train_softmax, CascadeClassifier, Gate,
    SoftmaxClassifier, SoftmaxConfig, DEFAULT_GATE_THRESHOLD,
};
use crate::data::{LabeledSet, SplitDataset, TrainView};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_czsl, evaluate_gzsl, EvalReport};
use crate::models::ModelSet;
use crate::ndcore::{SeededRng, Stream};
use crate::training::{TrainConfig, TrainHistory, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Synthesized features per unseen class.
    pub n_per_class: usize,
    pub classifier: SoftmaxConfig,
    pub gate_threshold: f64,
    /// Also train the seen expert on synthesized seen-class features.
    pub seen_expert_synthetic: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_per_class: 200,
            classifier: SoftmaxConfig::default(),
            gate_threshold: DEFAULT_GATE_THRESHOLD,
            seen_expert_synthetic: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.classifier.validate()?;
        if self.n_per_class == 0 {
            return Err(Error::invalid("n_per_class must be >= 1"));
        }
        if !(self.gate_threshold > 0.0 && self.gate_threshold < 1.0) {
            return Err(Error::invalid("gate_threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

pub struct Evaluation {
    pub czsl: EvalReport,
    pub gzsl: EvalReport,
    pub cascade: CascadeClassifier,
    pub synthetic_unseen: LabeledSet,
}

/// The unseen expert and the synthetic set it was trained on.
pub fn train_unseen_expert(
    models: &ModelSet,
    dataset: &SplitDataset,
    config: &EvalConfig,
    seed: u64,
) -> Result<(SoftmaxClassifier, LabeledSet)> {
    config.validate()?;
    let mut synth_rng = SeededRng::with_stream(seed, Stream::Synthesis);
    let synthetic = synthesize_unseen(
        &models.generator,
        dataset.attributes(),
        config.n_per_class,
        &mut synth_rng,
    )?;
    let mut rng = SeededRng::with_stream(seed, Stream::Classifier);
    let clf = train_softmax(
        &synthetic.features,
        &synthetic.labels,
        dataset.attributes().unseen_classes(),
        &config.classifier,
        &mut rng,
    )?;
    Ok((clf, synthetic))
}

/// Synthesizes unseen features, fits the unseen expert, the seen expert and
/// the gate, then scores both protocols.
pub fn evaluate_models(
    models: &ModelSet,
    dataset: &SplitDataset,
    config: &EvalConfig,
    seed: u64,
) -> Result<Evaluation> {
    let (unseen_clf, synthetic_unseen) = train_unseen_expert(models, dataset, config, seed)?;
    let czsl = evaluate_czsl(&unseen_clf, dataset)?.with_run(&models.config_hash, seed);

    let mut rng = SeededRng::with_stream(seed, Stream::SeenExpert);
    let seen_train = dataset.seen_train();
    let seen_classes = dataset.attributes().seen_classes();
    let seen_clf = if config.seen_expert_synthetic {
        let mut synth_rng = SeededRng::with_stream(seed, Stream::SeenSynthesis);
        let fake = synthesize_classes(
            &models.generator,
            dataset.attributes(),
            seen_classes,
            config.n_per_class,
            &mut synth_rng,
        )?;
        let x = seen_train.features.vstack(&fake.features)?;
        let mut y = seen_train.labels.clone();
        y.extend(&fake.labels);
        train_softmax(&x, &y, seen_classes, &config.classifier, &mut rng)?
    } else {
        train_softmax(
            &seen_train.features,
            &seen_train.labels,
            seen_classes,
            &config.classifier,
            &mut rng,
        )?
    };
    let gate = train_gate(
        &seen_train.features,
        dataset.unseen_features(),
        &config.classifier,
        &mut rng,
    )?;
    let cascade = CascadeClassifier::new(
        Gate::Trained(gate),
        seen_clf,
        unseen_clf,
        config.gate_threshold,
    )?;
    let gzsl = evaluate_gzsl(&cascade, dataset)?.with_run(&models.config_hash, seed);
    Ok(Evaluation {
        czsl,
        gzsl,
        cascade,
        synthetic_unseen,
    })
}

pub struct TwoStageRun {
    pub stage1: ModelSet,
    pub stage2: ModelSet,
    pub history1: TrainHistory,
    pub history2: TrainHistory,
}

pub fn train_two_stage(view: TrainView<'_>, config: &TrainConfig) -> Result<TwoStageRun> {
    let mut first = Trainer::stage1(view, config)?;
    first.run(config.epochs_stage1)?;
    let (stage1, history1) = first.finish();
    let mut second = Trainer::stage2(view, &stage1, config)?;
    second.run(config.epochs_stage2)?;
    let (stage2, history2) = second.finish();
    Ok(TwoStageRun {
        stage1,
        stage2,
        history1,
        history2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub seed: u64,
    pub stage1_epochs: usize,
    pub czsl_accuracy: f64,
}

/// For each stage-one epoch count in `grid`, runs stage two for
/// `config.epochs_stage2` epochs from that stage-one state and records the
/// conventional accuracy. Stage one is trained once and snapshotted at each
/// grid value, which yields the same models as separate runs.
pub fn ablate_stage1(
    dataset: &SplitDataset,
    config: &TrainConfig,
    eval: &EvalConfig,
    grid: &[usize],
) -> Result<Vec<AblationRow>> {
    if grid.len() < 2 {
        return Err(Error::invalid("ablation grid needs at least two epoch values"));
    }
    eval.validate()?;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by_key(|&i| grid[i]);
    let view = dataset.training_view();
    let mut first = Trainer::stage1(view, config)?;
    let mut results = vec![None; grid.len()];
    for i in order {
        let target = grid[i];
        first.run(target - first.epochs_done())?;
        let mut second = Trainer::stage2(view, first.models(), config)?;
        second.run(config.epochs_stage2)?;
        let (models, _) = second.finish();
        let (clf, _) = train_unseen_expert(&models, dataset, eval, config.seed)?;
        let report = evaluate_czsl(&clf, dataset)?;
        results[i] = Some(AblationRow {
            seed: config.seed,
            stage1_epochs: target,
            czsl_accuracy: report.u,
        });
    }
    Ok(results.into_iter().map(|r| r.expect("every grid value run")).collect())
}
