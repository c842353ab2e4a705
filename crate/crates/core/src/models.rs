//! The four two-layer networks: generator, seen critic, unseen critic and
//! attribute decoder.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Kind, Reader, Writer};
use crate::error::{Error, Result};
use crate::ndcore::{Matrix, SeededRng, Tape, Var};

/// Negative slope of the hidden leaky rectifier.
pub const HIDDEN_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Identity,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::invalid(format!(
                "network dims must be >= 1, got {input_dim}-{hidden_dim}-{output_dim}"
            )));
        }
        Ok(MlpSpec {
            input_dim,
            hidden_dim,
            output_dim,
            output_activation,
        })
    }
}

/// `act(leaky(x·W1 + b1)·W2 + b2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    /// `[W1 (in x h), b1 (1 x h), W2 (h x out), b2 (1 x out)]`
    params: Vec<Matrix>,
}

impl Mlp {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(spec: MlpSpec, rng: &mut SeededRng) -> Self {
        let mut layer = |fan_in: usize, fan_out: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.uniform_range(-bound, bound))
                .collect();
            Matrix::from_vec(fan_in, fan_out, data).expect("sized by construction")
        };
        let w1 = layer(spec.input_dim, spec.hidden_dim);
        let w2 = layer(spec.hidden_dim, spec.output_dim);
        Mlp {
            spec,
            params: vec![
                w1,
                Matrix::zeros(1, spec.hidden_dim),
                w2,
                Matrix::zeros(1, spec.output_dim),
            ],
        }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        Mlp {
            spec,
            params: vec![
                Matrix::zeros(spec.input_dim, spec.hidden_dim),
                Matrix::zeros(1, spec.hidden_dim),
                Matrix::zeros(spec.hidden_dim, spec.output_dim),
                Matrix::zeros(1, spec.output_dim),
            ],
        }
    }

    pub fn from_params(spec: MlpSpec, params: Vec<Matrix>) -> Result<Self> {
        let expected = Mlp::zeros(spec);
        if params.len() != 4
            || params
                .iter()
                .zip(&expected.params)
                .any(|(p, e)| p.shape() != e.shape())
        {
            return Err(Error::shape("parameters do not fit the network spec"));
        }
        Ok(Mlp { spec, params })
    }

    pub fn spec(&self) -> MlpSpec {
        self.spec
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    /// Records the parameters on `tape` as leaves.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        BoundMlp {
            spec: self.spec,
            params: self.params.iter().map(|p| tape.leaf(p.clone())).collect(),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::shape(format!(
                "network expects {} input columns, got {}",
                self.spec.input_dim,
                x.cols()
            )));
        }
        let tape = Tape::new();
        let net = self.bind(&tape);
        let out = net.forward(tape.leaf(x.clone()));
        let value = out.value().as_ref().clone();
        Ok(value)
    }
}

/// An [`Mlp`] whose parameters are leaves on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp<'t> {
    spec: MlpSpec,
    params: Vec<Var<'t>>,
}

impl<'t> BoundMlp<'t> {
    pub fn params(&self) -> &[Var<'t>] {
        &self.params
    }

    pub fn forward(&self, x: Var<'t>) -> Var<'t> {
        let p = &self.params;
        let out = x
            .matmul(p[0])
            .add_row_bias(p[1])
            .leaky_relu(HIDDEN_SLOPE)
            .matmul(p[2])
            .add_row_bias(p[3]);
        match self.spec.output_activation {
            OutputActivation::Identity => out,
            OutputActivation::Relu => out.relu(),
        }
    }
}

/// Wasserstein critic over features, optionally conditioned on attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub net: Mlp,
    feature_dim: usize,
    conditional: bool,
}

impl Critic {
    pub fn new(net: Mlp, feature_dim: usize, conditional: bool) -> Result<Self> {
        if net.spec.output_dim != 1 || net.spec.input_dim < feature_dim {
            return Err(Error::shape("critic network must map features to one score"));
        }
        if conditional == (net.spec.input_dim == feature_dim) {
            return Err(Error::shape(
                "critic input width does not match its conditioning",
            ));
        }
        Ok(Critic {
            net,
            feature_dim,
            conditional,
        })
    }

    pub fn is_conditional(&self) -> bool {
        self.conditional
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn input_dim(&self) -> usize {
        self.net.spec.input_dim
    }

    /// Checks that `cond` is present exactly when the critic is conditional.
    pub fn check_inputs(&self, x: &Matrix, cond: Option<&Matrix>) -> Result<()> {
        match (self.conditional, cond) {
            (false, Some(_)) => {
                return Err(Error::ConditioningMismatch(
                    "unconditional critic was given attributes".into(),
                ))
            }
            (true, None) => {
                return Err(Error::ConditioningMismatch(
                    "conditional critic needs attributes".into(),
                ))
            }
            _ => {}
        }
        if x.cols() != self.feature_dim {
            return Err(Error::shape(format!(
                "critic expects {} feature columns, got {}",
                self.feature_dim,
                x.cols()
            )));
        }
        if let Some(a) = cond {
            if a.rows() != x.rows() || a.cols() != self.input_dim() - self.feature_dim {
                return Err(Error::shape(format!(
                    "conditioning is {:?}, expected ({}, {})",
                    a.shape(),
                    x.rows(),
                    self.input_dim() - self.feature_dim
                )));
            }
        }
        Ok(())
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundCritic<'t> {
        BoundCritic {
            net: self.net.bind(tape),
            conditional: self.conditional,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundCritic<'t> {
    pub net: BoundMlp<'t>,
    conditional: bool,
}

impl<'t> BoundCritic<'t> {
    /// Scores as a `rows x 1` node. `cond` must agree with the critic's
    /// conditioning; callers validate with [`Critic::check_inputs`].
    pub fn score(&self, x: Var<'t>, cond: Option<Var<'t>>) -> Var<'t> {
        match (self.conditional, cond) {
            (true, Some(a)) => self.net.forward(x.concat_cols(a)),
            (false, None) => self.net.forward(x),
            _ => panic!("critic conditioning mismatch"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One = 1,
    Two = 2,
}

impl Stage {
    pub fn from_number(n: u8) -> Result<Stage> {
        match n {
            1 => Ok(Stage::One),
            2 => Ok(Stage::Two),
            _ => Err(Error::invalid(format!("stage must be 1 or 2, got {n}"))),
        }
    }
}

/// Generator, both critics and the attribute decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSet {
    pub generator: Mlp,
    pub seen_critic: Critic,
    pub unseen_critic: Critic,
    pub decoder: Mlp,
    pub stage: Stage,
    pub config_hash: String,
    d: usize,
    k: usize,
    hidden_dim: usize,
}

pub fn generator_spec(d: usize, k: usize, hidden: usize) -> Result<MlpSpec> {
    // noise width equals attribute width
    MlpSpec::new(2 * k, hidden, d, OutputActivation::Relu)
}

pub fn seen_critic_spec(d: usize, k: usize, hidden: usize) -> Result<MlpSpec> {
    MlpSpec::new(d + k, hidden, 1, OutputActivation::Identity)
}

pub fn unseen_critic_spec(d: usize, k: usize, hidden: usize, stage: Stage) -> Result<MlpSpec> {
    let width = match stage {
        Stage::One => d,
        Stage::Two => d + k,
    };
    MlpSpec::new(width, hidden, 1, OutputActivation::Identity)
}

pub fn decoder_spec(d: usize, k: usize, hidden: usize) -> Result<MlpSpec> {
    MlpSpec::new(d, hidden, k, OutputActivation::Identity)
}

/// Fresh networks for `stage`; the unseen critic reads `x` in stage one and
/// `x‖a` in stage two.
pub fn init_models(
    d: usize,
    k: usize,
    hidden_dim: usize,
    stage: Stage,
    rng: &mut SeededRng,
) -> Result<ModelSet> {
    let generator = Mlp::init(generator_spec(d, k, hidden_dim)?, rng);
    let seen_critic = Critic::new(Mlp::init(seen_critic_spec(d, k, hidden_dim)?, rng), d, true)?;
    let unseen_critic = Critic::new(
        Mlp::init(unseen_critic_spec(d, k, hidden_dim, stage)?, rng),
        d,
        stage == Stage::Two,
    )?;
    let decoder = Mlp::init(decoder_spec(d, k, hidden_dim)?, rng);
    Ok(ModelSet {
        generator,
        seen_critic,
        unseen_critic,
        decoder,
        stage,
        config_hash: String::new(),
        d,
        k,
        hidden_dim,
    })
}

impl ModelSet {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn noise_dim(&self) -> usize {
        self.k
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_writer().write_to(path)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_writer().into_bytes()
    }

    fn to_writer(&self) -> Writer {
        let mut w = Writer::new(Kind::Models);
        w.u8(self.stage as u8);
        w.u64(self.d as u64);
        w.u64(self.k as u64);
        w.u64(self.hidden_dim as u64);
        w.str(&self.config_hash);
        for net in [
            &self.generator,
            &self.seen_critic.net,
            &self.unseen_critic.net,
            &self.decoder,
        ] {
            write_mlp(&mut w, net);
        }
        w
    }

    pub fn load(path: &Path) -> Result<ModelSet> {
        Self::from_bytes(&checkpoint::read_file(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelSet> {
        let mut r = Reader::open(bytes, Kind::Models)?;
        let stage = Stage::from_number(r.u8()?)?;
        let d = r.usize()?;
        let k = r.usize()?;
        let hidden_dim = r.usize()?;
        let config_hash = r.str()?;
        let generator = read_mlp(&mut r)?;
        let seen = read_mlp(&mut r)?;
        let unseen = read_mlp(&mut r)?;
        let decoder = read_mlp(&mut r)?;
        r.finish()?;

        let expect = |net: &Mlp, spec: MlpSpec, name: &str| {
            if net.spec != spec {
                return Err(Error::Checkpoint(format!("{name} shape disagrees with header")));
            }
            Ok(())
        };
        expect(&generator, generator_spec(d, k, hidden_dim)?, "generator")?;
        expect(&seen, seen_critic_spec(d, k, hidden_dim)?, "seen critic")?;
        expect(&unseen, unseen_critic_spec(d, k, hidden_dim, stage)?, "unseen critic")?;
        expect(&decoder, decoder_spec(d, k, hidden_dim)?, "decoder")?;
        Ok(ModelSet {
            generator,
            seen_critic: Critic::new(seen, d, true)?,
            unseen_critic: Critic::new(unseen, d, stage == Stage::Two)?,
            decoder,
            stage,
            config_hash,
            d,
            k,
            hidden_dim,
        })
    }
}

pub(crate) fn write_mlp(w: &mut Writer, net: &Mlp) {
    let s = net.spec;
    w.u64(s.input_dim as u64);
    w.u64(s.hidden_dim as u64);
    w.u64(s.output_dim as u64);
    w.u8(match s.output_activation {
        OutputActivation::Identity => 0,
        OutputActivation::Relu => 1,
    });
    for p in &net.params {
        w.matrix(p);
    }
}

pub(crate) fn read_mlp(r: &mut Reader<'_>) -> Result<Mlp> {
    let input = r.usize()?;
    let hidden = r.usize()?;
    let output = r.usize()?;
    let act = match r.u8()? {
        0 => OutputActivation::Identity,
        1 => OutputActivation::Relu,
        t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
    };
    let spec = MlpSpec::new(input, hidden, output, act)?;
    let params = (0..4).map(|_| r.matrix()).collect::<Result<Vec<_>>>()?;
    Mlp::from_params(spec, params).map_err(|_| Error::Checkpoint("parameter shapes disagree".into()))
}

/// Synthesizes feature rows `G(z‖a)`.
pub fn generate(generator: &Mlp, z: &Matrix, a: &Matrix) -> Result<Matrix> {
    if z.rows() != a.rows() {
        return Err(Error::shape(format!(
            "{} noise rows but {} attribute rows",
            z.rows(),
            a.rows()
        )));
    }
    if z.cols() + a.cols() != generator.spec.input_dim || z.cols() != a.cols() {
        return Err(Error::shape(format!(
            "generator expects {0} noise and {0} attribute columns, got {1} and {2}",
            generator.spec.input_dim / 2,
            z.cols(),
            a.cols()
        )));
    }
    generator.forward(&z.concat_cols(a)?)
}

/// Predicted attribute rows; unclamped.
pub fn decode_attributes(decoder: &Mlp, x: &Matrix) -> Result<Matrix> {
    decoder.forward(x)
}

/// One score per row, as a `rows x 1` matrix.
pub fn critic_score(critic: &Critic, x: &Matrix, cond: Option<&Matrix>) -> Result<Matrix> {
    critic.check_inputs(x, cond)?;
    let input = match cond {
        Some(a) => x.concat_cols(a)?,
        None => x.clone(),
    };
    critic.net.forward(&input)
}
