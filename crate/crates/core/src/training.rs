//! Adversarial objectives, the attribute reconstruction loss and the
//! two-stage training drivers.
//!
//! Sign convention: both critics ascend `E[D(real)] - E[D(fake)] - λ·GP`.
//! The generator descends `-E[D_s(fake_s)] - E[D_u(fake_u)] + w·L_R`, the
//! usual gradient-penalty generator loss plus the reconstruction term; the
//! penalty itself is a critic regularizer and does not enter the generator
//! loss. The decoder descends `w·L_R` with the generated features held fixed.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::TrainView;
use crate::error::{Error, Result};
use crate::models::{
    self, init_models, BoundCritic, BoundMlp, Critic, Mlp, ModelSet, Stage,
};
use crate::ndcore::{
    adam_step, sample_gaussian, sample_uniform01, AdamState, Matrix, SeededRng, Stream, Tape, Var,
};

/// Losses beyond this magnitude abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_gp: f64,
    pub w: f64,
    pub w_prime: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub critic_iters: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub pseudo_attr_clamp: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_gp: 5.0,
            w: 0.1,
            w_prime: 0.1,
            lr: 1e-4,
            batch_size: 64,
            critic_iters: 5,
            epochs_stage1: 300,
            epochs_stage2: 300,
            hidden_dim: 4096,
            seed: 0,
            pseudo_attr_clamp: true,
        }
    }
}

impl TrainConfig {
    /// Defaults sized for a single CPU core: 256 hidden units and a learning
    /// rate of 1e-3, since a desk epoch has far fewer batches.
    pub fn desk() -> Self {
        TrainConfig {
            hidden_dim: 256,
            lr: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("lambda_gp", self.lambda_gp),
            ("w", self.w),
            ("w_prime", self.w_prime),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.critic_iters == 0 || self.batch_size == 0 || self.hidden_dim == 0 {
            return Err(Error::invalid(
                "critic_iters, batch_size and hidden_dim must be >= 1",
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Noise rows and interpolation weights for one adversarial term.
#[derive(Clone, Debug, PartialEq)]
pub struct Draws {
    pub noise: Matrix,
    pub alpha: Vec<f64>,
}

impl Draws {
    pub fn sample(rows: usize, noise_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        let noise = sample_gaussian(rows, noise_dim, rng)?;
        let alpha = sample_uniform01(rows, rng)?;
        Ok(Draws { noise, alpha })
    }
}

/// The recorded pieces of one adversarial objective.
#[derive(Clone, Copy, Debug)]
pub struct AdvTerms<'t> {
    pub real_score: Var<'t>,
    pub fake_score: Var<'t>,
    pub penalty: Var<'t>,
    /// `real_score - fake_score - λ·penalty`
    pub objective: Var<'t>,
}

/// `mean_rows (‖∇_x̂ D(x̂[, cond])‖₂ - 1)²` with `x̂ = α·real + (1-α)·fake`.
///
/// The gradient is taken with respect to the interpolated features only.
/// The result stays differentiable in the critic parameters.
pub fn gradient_penalty<'t>(
    critic: &BoundCritic<'t>,
    real: Var<'t>,
    fake: Var<'t>,
    cond: Option<Var<'t>>,
    alpha: &[f64],
) -> Result<Var<'t>> {
    let (rows, cols) = real.shape();
    if fake.shape() != (rows, cols) || alpha.len() != rows {
        return Err(Error::shape(format!(
            "penalty: real {:?}, fake {:?}, {} interpolation weights",
            real.shape(),
            fake.shape(),
            alpha.len()
        )));
    }
    let tape = real.tape();
    let weights = Matrix::column(alpha).broadcast_cols(cols);
    let complement = weights.map(|a| 1.0 - a);
    let interp = real.mul_const(weights.into()) + fake.mul_const(complement.into());
    let score = critic.score(interp, cond);
    let grad = tape.input_gradient(score, interp)?;
    Ok(grad.row_norms().offset(-1.0).square().mean())
}

/// Matrix-level penalty with fresh interpolation weights from `rng`.
pub fn gradient_penalty_value(
    critic: &Critic,
    real: &Matrix,
    fake: &Matrix,
    cond: Option<&Matrix>,
    rng: &mut SeededRng,
) -> Result<f64> {
    critic.check_inputs(real, cond)?;
    critic.check_inputs(fake, cond)?;
    let alpha = sample_uniform01(real.rows(), rng)?;
    let tape = Tape::new();
    let bound = critic.bind(&tape);
    let cond = cond.map(|a| tape.leaf(a.clone()));
    let gp = gradient_penalty(
        &bound,
        tape.leaf(real.clone()),
        tape.leaf(fake.clone()),
        cond,
        &alpha,
    )?;
    Ok(gp.item())
}

/// `E[D(real)] - E[D(fake)] - λ·GP`.
pub fn adversarial_terms<'t>(
    critic: &BoundCritic<'t>,
    real: Var<'t>,
    fake: Var<'t>,
    cond: Option<Var<'t>>,
    lambda: f64,
    alpha: &[f64],
) -> Result<AdvTerms<'t>> {
    let real_score = critic.score(real, cond).mean();
    let fake_score = critic.score(fake, cond).mean();
    let penalty = gradient_penalty(critic, real, fake, cond, alpha)?;
    let objective = real_score - fake_score - penalty.scale(lambda);
    Ok(AdvTerms {
        real_score,
        fake_score,
        penalty,
        objective,
    })
}

/// `G(z‖a)` on the tape.
pub fn generate_on<'t>(generator: &BoundMlp<'t>, noise: Var<'t>, cond: Var<'t>) -> Var<'t> {
    generator.forward(noise.concat_cols(cond))
}

fn check_pair(x: &Matrix, a: &Matrix, d: usize, k: usize) -> Result<()> {
    if x.rows() != a.rows() || x.cols() != d || a.cols() != k || x.rows() == 0 {
        return Err(Error::shape(format!(
            "batch features {:?} and attributes {:?} do not form a ({d}, {k}) batch",
            x.shape(),
            a.shape()
        )));
    }
    Ok(())
}

fn generator_dims(generator: &BoundMlp<'_>) -> (usize, usize) {
    let w1 = generator.params()[0].shape();
    let w2 = generator.params()[2].shape();
    (w2.1, w1.0 / 2)
}

/// Seen-class objective `L_S` on a matched batch `(x_s, a_s)`.
pub fn seen_adv_objective<'t>(
    tape: &'t Tape,
    seen_critic: &BoundCritic<'t>,
    generator: &BoundMlp<'t>,
    x_s: &Matrix,
    a_s: &Matrix,
    lambda: f64,
    rng: &mut SeededRng,
) -> Result<AdvTerms<'t>> {
    let (d, k) = generator_dims(generator);
    check_pair(x_s, a_s, d, k)?;
    let draws = Draws::sample(x_s.rows(), k, rng)?;
    let cond = tape.leaf(a_s.clone());
    let fake = generate_on(generator, tape.leaf(draws.noise), cond);
    adversarial_terms(
        seen_critic,
        tape.leaf(x_s.clone()),
        fake,
        Some(cond),
        lambda,
        &draws.alpha,
    )
}

/// One attribute row per sample, drawn uniformly from `table`'s rows.
pub fn sample_attribute_rows(table: &Matrix, n: usize, rng: &mut SeededRng) -> Result<Matrix> {
    if table.rows() == 0 || n == 0 {
        return Err(Error::invalid("attribute sampling needs a table and n >= 1"));
    }
    let picks: Vec<usize> = (0..n).map(|_| rng.index(table.rows())).collect();
    Ok(table.select_rows(&picks))
}

/// Stage-one unseen objective `L_U`: the critic sees features only; fakes
/// are conditioned on attributes sampled from the unseen table.
///
/// Returns the terms together with the sampled attributes.
pub fn unseen_adv_objective_stage1<'t>(
    tape: &'t Tape,
    unseen_critic: &BoundCritic<'t>,
    generator: &BoundMlp<'t>,
    x_u: &Matrix,
    unseen_attributes: &Matrix,
    lambda: f64,
    rng: &mut SeededRng,
) -> Result<(AdvTerms<'t>, Matrix)> {
    let (d, k) = generator_dims(generator);
    let a_u = sample_attribute_rows(unseen_attributes, x_u.rows(), rng)?;
    check_pair(x_u, &a_u, d, k)?;
    let draws = Draws::sample(x_u.rows(), k, rng)?;
    let fake = generate_on(generator, tape.leaf(draws.noise), tape.leaf(a_u.clone()));
    let terms = adversarial_terms(
        unseen_critic,
        tape.leaf(x_u.clone()),
        fake,
        None,
        lambda,
        &draws.alpha,
    )?;
    Ok((terms, a_u))
}

/// Decoder predictions for `x`, detached and optionally clamped to `[0, 1]`.
pub fn pseudo_attributes<'t>(decoder: &BoundMlp<'t>, x: Var<'t>, clamp: bool) -> Var<'t> {
    let predicted = decoder.forward(x);
    if clamp {
        let clamped = predicted.value().map(|v| v.clamp(0.0, 1.0));
        x.tape().leaf(clamped)
    } else {
        predicted.detach()
    }
}

/// Stage-two unseen objective `L'_U`: real and fake unseen features are
/// both scored against the pseudo-attributes `Dec(x_u)`.
///
/// Pseudo-attributes are constants here; no gradient reaches the decoder.
#[allow(clippy::too_many_arguments)]
pub fn unseen_adv_objective_stage2<'t>(
    tape: &'t Tape,
    unseen_critic: &BoundCritic<'t>,
    generator: &BoundMlp<'t>,
    decoder: &BoundMlp<'t>,
    x_u: &Matrix,
    lambda: f64,
    clamp: bool,
    rng: &mut SeededRng,
) -> Result<(AdvTerms<'t>, Matrix)> {
    let (d, k) = generator_dims(generator);
    if x_u.cols() != d || x_u.rows() == 0 {
        return Err(Error::shape(format!(
            "unseen batch {:?} does not have {d} feature columns",
            x_u.shape()
        )));
    }
    let real = tape.leaf(x_u.clone());
    let pseudo = pseudo_attributes(decoder, real, clamp);
    let draws = Draws::sample(x_u.rows(), k, rng)?;
    let fake = generate_on(generator, tape.leaf(draws.noise), pseudo);
    let terms = adversarial_terms(unseen_critic, real, fake, Some(pseudo), lambda, &draws.alpha)?;
    let pseudo = pseudo.value().as_ref().clone();
    Ok((terms, pseudo))
}

/// Mean over rows of the ℓ1 distance between `pred` and `target`.
pub fn l1_rows<'t>(pred: Var<'t>, target: Var<'t>) -> Var<'t> {
    let rows = pred.shape().0 as f64;
    (pred - target).abs().sum().scale(1.0 / rows)
}

/// `E‖Dec(x_s) - a_s‖₁ + E‖Dec(fake_s) - a_s‖₁ + E‖Dec(fake_u) - cond_u‖₁`.
pub fn reconstruction_terms<'t>(
    decoder: &BoundMlp<'t>,
    x_s: Var<'t>,
    a_s: Var<'t>,
    fake_s: Var<'t>,
    fake_u: Var<'t>,
    cond_u: Var<'t>,
) -> Var<'t> {
    l1_rows(decoder.forward(x_s), a_s)
        + l1_rows(decoder.forward(fake_s), a_s)
        + l1_rows(decoder.forward(fake_u), cond_u)
}

/// Reconstruction loss `L_R` (stage one, `cond_u` = sampled unseen
/// attributes) or `L'_R` (stage two, `cond_u` = pseudo-attributes).
#[allow(clippy::too_many_arguments)]
pub fn reconstruction_loss<'t>(
    tape: &'t Tape,
    decoder: &BoundMlp<'t>,
    generator: &BoundMlp<'t>,
    x_s: &Matrix,
    a_s: &Matrix,
    cond_u: &Matrix,
    rng: &mut SeededRng,
) -> Result<Var<'t>> {
    let (d, k) = generator_dims(generator);
    check_pair(x_s, a_s, d, k)?;
    if cond_u.cols() != k || cond_u.rows() == 0 {
        return Err(Error::shape(format!(
            "unseen conditioning {:?} is not k = {k} wide",
            cond_u.shape()
        )));
    }
    let z_s = sample_gaussian(x_s.rows(), k, rng)?;
    let z_u = sample_gaussian(cond_u.rows(), k, rng)?;
    let a_s = tape.leaf(a_s.clone());
    let cond_u = tape.leaf(cond_u.clone());
    let fake_s = generate_on(generator, tape.leaf(z_s), a_s);
    let fake_u = generate_on(generator, tape.leaf(z_u), cond_u);
    Ok(reconstruction_terms(
        decoder,
        tape.leaf(x_s.clone()),
        a_s,
        fake_s,
        fake_u,
        cond_u,
    ))
}

/// Per-epoch means over the epoch's batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub seen_objective: f64,
    pub unseen_objective: f64,
    pub reconstruction: f64,
    pub seen_penalty: f64,
    pub unseen_penalty: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub stage: Option<u8>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let (lu, lr) = match self.stage {
            Some(2) => ("L'_U", "L'_R"),
            _ => ("L_U", "L_R"),
        };
        let mut out = format!("epoch,L_S,{lu},{lr},gp_s,gp_u,seconds\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.3}\n",
                e.epoch,
                e.seen_objective,
                e.unseen_objective,
                e.reconstruction,
                e.seen_penalty,
                e.unseen_penalty,
                e.seconds
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Cycles through seeded permutations of the unseen set.
struct BatchStream {
    n: usize,
    batch_size: usize,
    pending: Vec<Vec<usize>>,
}

impl BatchStream {
    fn new(n: usize, batch_size: usize) -> Self {
        BatchStream {
            n,
            batch_size,
            pending: Vec::new(),
        }
    }

    fn next(&mut self, rng: &mut SeededRng) -> Result<Vec<usize>> {
        if self.pending.is_empty() {
            self.pending = crate::data::batch_iter(self.n, self.batch_size, rng)?;
            self.pending.reverse();
        }
        Ok(self.pending.pop().expect("refilled above"))
    }
}

fn check_finite(what: &'static str, value: f64, epoch: usize) -> Result<f64> {
    if !value.is_finite() || value.abs() > DIVERGENCE_LIMIT {
        return Err(Error::Divergence { what, value, epoch });
    }
    Ok(value)
}

/// Per-class attribute rows broadcast to every seen training example.
fn seen_instance_attributes(view: &TrainView<'_>) -> Result<Matrix> {
    view.attributes().rows_for(view.seen_labels())
}

/// Resumable optimizer for either stage.
pub struct Trainer<'a> {
    view: TrainView<'a>,
    config: TrainConfig,
    models: ModelSet,
    seen_attrs: Matrix,
    unseen_table: Matrix,
    seen_critic_opt: AdamState,
    unseen_critic_opt: AdamState,
    generator_opt: AdamState,
    decoder_opt: AdamState,
    rng: SeededRng,
    unseen_stream: BatchStream,
    history: TrainHistory,
}

impl<'a> Trainer<'a> {
    /// Freshly initialized stage-one models.
    pub fn stage1(view: TrainView<'a>, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::with_stream(config.seed, Stream::Stage1);
        let mut models = init_models(view.d(), view.k(), config.hidden_dim, Stage::One, &mut rng)?;
        models.config_hash = config.hash();
        Self::with_models(view, config, models, rng)
    }

    /// Stage two: generator and critics reinitialized (the unseen critic now
    /// conditional), decoder weights carried over from `stage1`.
    pub fn stage2(view: TrainView<'a>, stage1: &ModelSet, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if stage1.stage != Stage::One {
            return Err(Error::StageMismatch(
                "stage two starts from a stage-one decoder".into(),
            ));
        }
        if stage1.d() != view.d() || stage1.k() != view.k() {
            return Err(Error::shape(format!(
                "stage-one models are ({}, {}), dataset is ({}, {})",
                stage1.d(),
                stage1.k(),
                view.d(),
                view.k()
            )));
        }
        let mut rng = SeededRng::with_stream(config.seed, Stream::Stage2);
        let mut models = init_models(view.d(), view.k(), config.hidden_dim, Stage::Two, &mut rng)?;
        if stage1.decoder.spec() != models.decoder.spec() {
            return Err(Error::shape(
                "stage-one decoder width differs from the configured hidden_dim",
            ));
        }
        models.decoder = stage1.decoder.clone();
        models.config_hash = config.hash();
        Self::with_models(view, config, models, rng)
    }

    fn with_models(
        view: TrainView<'a>,
        config: &TrainConfig,
        models: ModelSet,
        rng: SeededRng,
    ) -> Result<Self> {
        let stage = models.stage;
        Ok(Trainer {
            seen_attrs: seen_instance_attributes(&view)?,
            unseen_table: view.attributes().unseen_matrix(),
            seen_critic_opt: AdamState::new(models.seen_critic.net.params()),
            unseen_critic_opt: AdamState::new(models.unseen_critic.net.params()),
            generator_opt: AdamState::new(models.generator.params()),
            decoder_opt: AdamState::new(models.decoder.params()),
            unseen_stream: BatchStream::new(view.unseen_features().rows(), config.batch_size),
            history: TrainHistory {
                stage: Some(stage as u8),
                epochs: Vec::new(),
            },
            view,
            config: config.clone(),
            models,
            rng,
        })
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    pub fn epochs_done(&self) -> usize {
        self.history.epochs.len()
    }

    pub fn finish(self) -> (ModelSet, TrainHistory) {
        (self.models, self.history)
    }

    fn recon_weight(&self) -> f64 {
        match self.models.stage {
            Stage::One => self.config.w,
            Stage::Two => self.config.w_prime,
        }
    }

    pub fn run(&mut self, epochs: usize) -> Result<()> {
        for _ in 0..epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    /// One pass over the seen training set.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let start = Instant::now();
        let epoch = self.epochs_done() + 1;
        let batches = crate::data::batch_iter(
            self.view.seen_features().rows(),
            self.config.batch_size,
            &mut self.rng,
        )?;
        let mut sums = [0.0f64; 5];
        let mut critic_steps = 0usize;
        for batch in &batches {
            let x_s = self.view.seen_features().select_rows(batch);
            let a_s = self.seen_attrs.select_rows(batch);
            let unseen_idx = self.unseen_stream.next(&mut self.rng)?;
            let x_u = self.view.unseen_features().select_rows(&unseen_idx);

            for _ in 0..self.config.critic_iters {
                let [ls, lu, gps, gpu] = self.critic_step(&x_s, &a_s, &x_u, epoch)?;
                sums[0] += ls;
                sums[1] += lu;
                sums[3] += gps;
                sums[4] += gpu;
                critic_steps += 1;
            }
            sums[2] += self.generator_step(&x_s, &a_s, &x_u, epoch)?;
        }
        let c = critic_steps as f64;
        self.history.epochs.push(EpochRecord {
            epoch,
            seen_objective: sums[0] / c,
            unseen_objective: sums[1] / c,
            reconstruction: sums[2] / batches.len() as f64,
            seen_penalty: sums[3] / c,
            unseen_penalty: sums[4] / c,
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(self.history.epochs.last().expect("just pushed"))
    }

    /// Ascends `L_S + L_U` (or `L_S + L'_U`) in both critics.
    fn critic_step(
        &mut self,
        x_s: &Matrix,
        a_s: &Matrix,
        x_u: &Matrix,
        epoch: usize,
    ) -> Result<[f64; 4]> {
        let lambda = self.config.lambda_gp;
        let tape = Tape::new();
        let generator = self.models.generator.bind(&tape);
        let seen = self.models.seen_critic.bind(&tape);
        let unseen = self.models.unseen_critic.bind(&tape);
        let ls = seen_adv_objective(&tape, &seen, &generator, x_s, a_s, lambda, &mut self.rng)?;
        let lu = match self.models.stage {
            Stage::One => {
                unseen_adv_objective_stage1(
                    &tape,
                    &unseen,
                    &generator,
                    x_u,
                    &self.unseen_table,
                    lambda,
                    &mut self.rng,
                )?
                .0
            }
            Stage::Two => {
                let decoder = self.models.decoder.bind(&tape);
                unseen_adv_objective_stage2(
                    &tape,
                    &unseen,
                    &generator,
                    &decoder,
                    x_u,
                    lambda,
                    self.config.pseudo_attr_clamp,
                    &mut self.rng,
                )?
                .0
            }
        };
        let ls_v = check_finite("L_S", ls.objective.item(), epoch)?;
        let lu_v = check_finite("L_U", lu.objective.item(), epoch)?;
        let loss = -(ls.objective + lu.objective);

        let n_seen = seen.net.params().len();
        let wrt: Vec<Var<'_>> = seen
            .net
            .params()
            .iter()
            .chain(unseen.net.params())
            .copied()
            .collect();
        let mut grads = tape.gradients(loss, &wrt)?;
        let unseen_grads = grads.split_off(n_seen);
        adam_step(
            self.models.seen_critic.net.params_mut(),
            &grads,
            &mut self.seen_critic_opt,
            self.config.lr,
        )?;
        adam_step(
            self.models.unseen_critic.net.params_mut(),
            &unseen_grads,
            &mut self.unseen_critic_opt,
            self.config.lr,
        )?;
        Ok([ls_v, lu_v, ls.penalty.item(), lu.penalty.item()])
    }

    /// Updates the generator on `-E[D(fake)] + w·L_R` and the decoder on `w·L_R`.
    fn generator_step(
        &mut self,
        x_s: &Matrix,
        a_s: &Matrix,
        x_u: &Matrix,
        epoch: usize,
    ) -> Result<f64> {
        let k = self.view.k();
        let tape = Tape::new();
        let generator = self.models.generator.bind(&tape);
        let decoder = self.models.decoder.bind(&tape);
        let seen = self.models.seen_critic.bind(&tape);
        let unseen = self.models.unseen_critic.bind(&tape);

        let cond_u = match self.models.stage {
            Stage::One => sample_attribute_rows(&self.unseen_table, x_u.rows(), &mut self.rng)?,
            Stage::Two => pseudo_attributes(
                &decoder,
                tape.leaf(x_u.clone()),
                self.config.pseudo_attr_clamp,
            )
            .value()
            .as_ref()
            .clone(),
        };
        let z_s = sample_gaussian(x_s.rows(), k, &mut self.rng)?;
        let z_u = sample_gaussian(x_u.rows(), k, &mut self.rng)?;
        let a_s = tape.leaf(a_s.clone());
        let cond_u = tape.leaf(cond_u);
        let fake_s = generate_on(&generator, tape.leaf(z_s), a_s);
        let fake_u = generate_on(&generator, tape.leaf(z_u), cond_u);

        let unseen_cond = unseen.net.params()[0].shape().0 > self.view.d();
        let adversarial = -(seen.score(fake_s, Some(a_s)).mean()
            + unseen
                .score(fake_u, unseen_cond.then_some(cond_u))
                .mean());
        let recon = reconstruction_terms(
            &decoder,
            tape.leaf(x_s.clone()),
            a_s,
            fake_s,
            fake_u,
            cond_u,
        );
        let recon_v = check_finite("L_R", recon.item(), epoch)?;
        check_finite("generator loss", adversarial.item(), epoch)?;
        let loss = adversarial + recon.scale(self.recon_weight());

        let n_gen = generator.params().len();
        let wrt: Vec<Var<'_>> = generator
            .params()
            .iter()
            .chain(decoder.params())
            .copied()
            .collect();
        let mut grads = tape.gradients(loss, &wrt)?;
        let decoder_grads = grads.split_off(n_gen);
        adam_step(
            self.models.generator.params_mut(),
            &grads,
            &mut self.generator_opt,
            self.config.lr,
        )?;
        adam_step(
            self.models.decoder.params_mut(),
            &decoder_grads,
            &mut self.decoder_opt,
            self.config.lr,
        )?;
        Ok(recon_v)
    }
}

/// Stage one for `config.epochs_stage1` epochs.
pub fn train_stage1(view: TrainView<'_>, config: &TrainConfig) -> Result<(ModelSet, TrainHistory)> {
    let mut trainer = Trainer::stage1(view, config)?;
    trainer.run(config.epochs_stage1)?;
    Ok(trainer.finish())
}

/// Stage two for `config.epochs_stage2` epochs, starting from `stage1`'s decoder.
pub fn train_stage2(
    view: TrainView<'_>,
    stage1: &ModelSet,
    config: &TrainConfig,
) -> Result<(ModelSet, TrainHistory)> {
    let mut trainer = Trainer::stage2(view, stage1, config)?;
    trainer.run(config.epochs_stage2)?;
    Ok(trainer.finish())
}

/// Mean ℓ1 distance between decoded attributes of `x` and `targets`.
pub fn mean_l1_distance(decoder: &Mlp, x: &Matrix, targets: &Matrix) -> Result<f64> {
    let decoded = models::decode_attributes(decoder, x)?;
    if decoded.shape() != targets.shape() {
        return Err(Error::shape("decoded and target attributes differ in shape"));
    }
    Ok(decoded
        .iter_rows()
        .zip(targets.iter_rows())
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .sum::<f64>()
        / x.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticSpec};
    use crate::models::{Mlp, MlpSpec, OutputActivation};

    fn tiny_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_seen_classes: 3,
            n_unseen_classes: 2,
            d: 6,
            k: 3,
            samples_per_class_train: 6,
            samples_per_class_test: 5,
            cluster_noise: 0.1,
            attribute_to_mean_map_seed: 3,
            overlap: 0.0,
        }
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            hidden_dim: 8,
            batch_size: 8,
            critic_iters: 2,
            epochs_stage1: 2,
            epochs_stage2: 2,
            lr: 1e-3,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn constant_critic(width: usize, feature_dim: usize, value: f64) -> Critic {
        let spec = MlpSpec::new(width, 4, 1, OutputActivation::Identity).unwrap();
        let mut params = Mlp::zeros(spec).params().to_vec();
        params[3] = Matrix::scalar(value);
        Critic::new(Mlp::from_params(spec, params).unwrap(), feature_dim, width > feature_dim)
            .unwrap()
    }

    /// Critic computing `w·x` with ‖w‖ = 1 through a positive hidden path.
    fn unit_linear_critic(d: usize) -> Critic {
        let spec = MlpSpec::new(d, 2, 1, OutputActivation::Identity).unwrap();
        let mut w1 = Matrix::zeros(d, 2);
        w1.set(0, 0, 0.6);
        w1.set(1, 0, 0.8);
        w1.set(0, 1, -0.6);
        w1.set(1, 1, -0.8);
        // leaky(u) - leaky(-u) / ... : out = h0 - h1 / slope-adjusted keeps |∇| = 1 for any sign
        let c = 1.0 / (1.0 + crate::models::HIDDEN_SLOPE);
        let w2 = Matrix::from_vec(2, 1, vec![c, -c]).unwrap();
        let params = vec![w1, Matrix::zeros(1, 2), w2, Matrix::zeros(1, 1)];
        Critic::new(Mlp::from_params(spec, params).unwrap(), d, false).unwrap()
    }

    #[test]
    fn penalty_of_constant_and_unit_linear_critics() {
        let mut rng = SeededRng::new(1);
        let real = sample_gaussian(6, 4, &mut rng).unwrap();
        let fake = sample_gaussian(6, 4, &mut rng).unwrap();
        let constant = constant_critic(4, 4, 3.0);
        let gp = gradient_penalty_value(&constant, &real, &fake, None, &mut rng).unwrap();
        assert_eq!(gp, 1.0);
        let linear = unit_linear_critic(4);
        let gp = gradient_penalty_value(&linear, &real, &fake, None, &mut rng).unwrap();
        assert!(gp.abs() < 1e-24, "gp = {gp}");
    }

    #[test]
    fn penalty_rejects_mismatched_rows() {
        let mut rng = SeededRng::new(2);
        let critic = constant_critic(4, 4, 0.0);
        let real = Matrix::zeros(3, 4);
        let fake = Matrix::zeros(2, 4);
        let tape = Tape::new();
        let bound = critic.bind(&tape);
        assert!(gradient_penalty(&bound, tape.leaf(real), tape.leaf(fake), None, &[0.5; 3]).is_err());
        assert!(matches!(
            gradient_penalty_value(&critic, &Matrix::zeros(3, 4), &Matrix::zeros(3, 4), Some(&Matrix::zeros(3, 1)), &mut rng),
            Err(Error::ConditioningMismatch(_))
        ));
    }

    #[test]
    fn zero_networks_give_minus_lambda() {
        let (d, k) = (6, 3);
        let tape = Tape::new();
        let g = Mlp::zeros(models::generator_spec(d, k, 4).unwrap()).bind(&tape);
        let ds = Critic::new(Mlp::zeros(models::seen_critic_spec(d, k, 4).unwrap()), d, true)
            .unwrap()
            .bind(&tape);
        let mut rng = SeededRng::new(3);
        let x = sample_gaussian(4, d, &mut rng).unwrap();
        let a = sample_gaussian(4, k, &mut rng).unwrap();
        let ls = seen_adv_objective(&tape, &ds, &g, &x, &a, 5.0, &mut rng).unwrap();
        assert_eq!(ls.objective.item(), -5.0);
    }

    #[test]
    fn constant_critic_cancels_without_penalty() {
        let (d, k) = (6, 3);
        let mut rng = SeededRng::new(4);
        let models = init_models(d, k, 8, Stage::One, &mut rng).unwrap();
        let x = sample_gaussian(5, d, &mut rng).unwrap();
        let a = sample_gaussian(5, k, &mut rng).unwrap();
        let tape = Tape::new();
        let g = models.generator.bind(&tape);
        let ds = constant_critic(d + k, d, 2.5).bind(&tape);
        let ls = seen_adv_objective(&tape, &ds, &g, &x, &a, 0.0, &mut rng).unwrap();
        assert_eq!(ls.objective.item(), 0.0);

        let du = constant_critic(d, d, -1.0).bind(&tape);
        let table = sample_gaussian(2, k, &mut rng).unwrap();
        let (lu, sampled) =
            unseen_adv_objective_stage1(&tape, &du, &g, &x, &table, 5.0, &mut rng).unwrap();
        assert_eq!(lu.objective.item(), -5.0);
        assert_eq!(sampled.shape(), (5, k));
    }

    #[test]
    fn identical_real_and_fake_cancel() {
        let d = 5;
        let mut rng = SeededRng::new(6);
        let critic = Critic::new(
            Mlp::init(MlpSpec::new(d, 7, 1, OutputActivation::Identity).unwrap(), &mut rng),
            d,
            false,
        )
        .unwrap();
        let x = sample_gaussian(4, d, &mut rng).unwrap();
        let tape = Tape::new();
        let bound = critic.bind(&tape);
        let xv = tape.leaf(x.clone());
        let terms = adversarial_terms(&bound, xv, tape.leaf(x), None, 0.0, &[0.3; 4]).unwrap();
        assert_eq!(terms.objective.item(), 0.0);
    }

    #[test]
    fn stage2_objective_detaches_decoder() {
        let (d, k) = (6, 3);
        let mut rng = SeededRng::new(7);
        let models = init_models(d, k, 8, Stage::Two, &mut rng).unwrap();
        let x = sample_gaussian(4, d, &mut rng).unwrap().map(f64::abs);
        let tape = Tape::new();
        let g = models.generator.bind(&tape);
        let du = models.unseen_critic.bind(&tape);
        let dec = models.decoder.bind(&tape);
        let (terms, pseudo) =
            unseen_adv_objective_stage2(&tape, &du, &g, &dec, &x, 5.0, true, &mut rng).unwrap();
        assert!(pseudo.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let grads = tape.gradients(terms.objective, dec.params()).unwrap();
        assert!(grads.iter().all(|gm| gm.as_slice().iter().all(|&v| v == 0.0)));
        let grads = tape.gradients(terms.objective, du.net.params()).unwrap();
        assert!(grads.iter().any(|gm| gm.frobenius_norm() > 0.0));
    }

    #[test]
    fn stage2_constant_critic_gives_minus_lambda() {
        let (d, k) = (6, 3);
        let mut rng = SeededRng::new(8);
        let models = init_models(d, k, 8, Stage::Two, &mut rng).unwrap();
        let x = sample_gaussian(4, d, &mut rng).unwrap();
        let tape = Tape::new();
        let g = models.generator.bind(&tape);
        let du = constant_critic(d + k, d, 0.4).bind(&tape);
        let dec = Mlp::zeros(models.decoder.spec()).bind(&tape);
        let (terms, pseudo) =
            unseen_adv_objective_stage2(&tape, &du, &g, &dec, &x, 5.0, true, &mut rng).unwrap();
        assert_eq!(terms.objective.item(), -5.0);
        assert_eq!(pseudo, Matrix::zeros(4, k));
    }

    #[test]
    fn reconstruction_by_hand() {
        let (d, k) = (6, 3);
        let mut rng = SeededRng::new(9);
        let models = init_models(d, k, 8, Stage::One, &mut rng).unwrap();
        let tape = Tape::new();
        let g = models.generator.bind(&tape);
        let dec = Mlp::zeros(models.decoder.spec()).bind(&tape);
        let x = sample_gaussian(4, d, &mut rng).unwrap();
        let ones = Matrix::filled(4, k, 1.0);
        let loss = reconstruction_loss(&tape, &dec, &g, &x, &ones, &ones, &mut rng).unwrap();
        assert_eq!(loss.item(), 9.0);

        // a decoder whose bias equals the (shared) target reconstructs exactly
        let mut params = Mlp::zeros(models.decoder.spec()).params().to_vec();
        params[3] = Matrix::filled(1, k, 1.0);
        let exact = Mlp::from_params(models.decoder.spec(), params).unwrap().bind(&tape);
        let loss = reconstruction_loss(&tape, &exact, &g, &x, &ones, &ones, &mut rng).unwrap();
        assert_eq!(loss.item(), 0.0);
    }

    #[test]
    fn critic_ascent_does_not_decrease_seen_objective() {
        let (d, k) = (6, 3);
        let mut rng = SeededRng::new(10);
        let mut models = init_models(d, k, 8, Stage::One, &mut rng).unwrap();
        let x = sample_gaussian(5, d, &mut rng).unwrap().map(f64::abs);
        let a = sample_gaussian(5, k, &mut rng).unwrap();
        let eval = |m: &ModelSet| {
            let tape = Tape::new();
            let g = m.generator.bind(&tape);
            let ds = m.seen_critic.bind(&tape);
            let ls = seen_adv_objective(&tape, &ds, &g, &x, &a, 5.0, &mut SeededRng::new(99))
                .unwrap()
                .objective;
            let grads = tape.gradients(-ls, ds.net.params()).unwrap();
            (ls.item(), grads)
        };
        let (before, grads) = eval(&models);
        let mut opt = AdamState::new(models.seen_critic.net.params());
        adam_step(models.seen_critic.net.params_mut(), &grads, &mut opt, 1e-6).unwrap();
        let (after, _) = eval(&models);
        assert!(after >= before, "{after} < {before}");
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let ds = make_synthetic(&tiny_spec(), 1).unwrap();
        let config = TrainConfig {
            epochs_stage1: 0,
            ..tiny_config()
        };
        let (models, history) = train_stage1(ds.training_view(), &config).unwrap();
        let mut rng = SeededRng::with_stream(config.seed, Stream::Stage1);
        let mut fresh = init_models(6, 3, 8, Stage::One, &mut rng).unwrap();
        fresh.config_hash = config.hash();
        assert_eq!(models, fresh);
        assert!(history.epochs.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_finite() {
        let ds = make_synthetic(&tiny_spec(), 2).unwrap();
        let config = tiny_config();
        let (a, ha) = train_stage1(ds.training_view(), &config).unwrap();
        let (b, _) = train_stage1(ds.training_view(), &config).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(ha.epochs.len(), 2);
        assert!(ha.epochs.iter().all(|e| e.reconstruction.is_finite()));

        let (s2a, h2) = train_stage2(ds.training_view(), &a, &config).unwrap();
        let (s2b, _) = train_stage2(ds.training_view(), &a, &config).unwrap();
        assert_eq!(s2a.to_bytes(), s2b.to_bytes());
        assert_eq!(h2.stage, Some(2));
        assert!(h2.to_csv().starts_with("epoch,L_S,L'_U,L'_R,gp_s,gp_u,seconds\n"));
    }

    #[test]
    fn stage2_start_state() {
        let ds = make_synthetic(&tiny_spec(), 3).unwrap();
        let config = tiny_config();
        let (s1, _) = train_stage1(ds.training_view(), &config).unwrap();
        let trainer = Trainer::stage2(ds.training_view(), &s1, &config).unwrap();
        let s2 = trainer.models();
        assert_eq!(s2.decoder, s1.decoder);
        assert_ne!(s2.generator, s1.generator);
        assert_ne!(s2.seen_critic, s1.seen_critic);
        assert_eq!(s2.unseen_critic.input_dim(), 9);
        assert_eq!(s1.unseen_critic.input_dim(), 6);

        assert!(matches!(
            Trainer::stage2(ds.training_view(), s2, &config),
            Err(Error::StageMismatch(_))
        ));
    }

    #[test]
    fn continued_training_matches_a_single_run() {
        let ds = make_synthetic(&tiny_spec(), 4).unwrap();
        let config = TrainConfig {
            epochs_stage1: 3,
            ..tiny_config()
        };
        let (direct, _) = train_stage1(ds.training_view(), &config).unwrap();
        let mut trainer = Trainer::stage1(ds.training_view(), &config).unwrap();
        trainer.run(1).unwrap();
        trainer.run(2).unwrap();
        assert_eq!(trainer.models(), &direct);
    }

    #[test]
    fn divergence_is_reported() {
        let ds = make_synthetic(&tiny_spec(), 5).unwrap();
        let config = TrainConfig {
            lambda_gp: 1e9,
            ..tiny_config()
        };
        assert!(matches!(
            train_stage1(ds.training_view(), &config),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            critic_iters: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(TrainConfig::default().hash().len(), 64);
        assert_ne!(TrainConfig::default().hash(), TrainConfig::desk().hash());
    }
}
