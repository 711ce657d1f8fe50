use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::sub_seed;
use crate::embed::AuxMode;
use crate::nnet::{Affine, NormAffine, ParamStore, Tape, TdnnLayer, Var};
use crate::store::Bundle;
use crate::{Error, Result};

/// Baseline trains the encoder alone; f-DcAE adds the decoder and the
/// reconstruction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Baseline,
    Fdcae,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Fdcae => "fdcae",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Condition::Baseline),
            "fdcae" => Ok(Condition::Fdcae),
            _ => Err(Error::Invalid(format!("unknown condition '{s}' (expected baseline or fdcae)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub feat_dim: usize,
    pub hidden: usize,
    pub pcode_dim: usize,
    /// Splice offsets of each TDNN layer, input side first.
    pub tdnn_offsets: Vec<Vec<isize>>,
    pub decoder_width: usize,
    pub decoder_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let mut offs = vec![vec![-1, 0, 1]; 3];
        offs.extend(vec![vec![-3, 0, 3]; 5]);
        Self {
            feat_dim: 40,
            hidden: 128,
            pcode_dim: 128,
            tdnn_offsets: offs,
            decoder_width: 128,
            decoder_layers: 4,
        }
    }
}

/// Global per-dimension feature standardisation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNorm {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl FeatureNorm {
    pub fn fit<'a>(feats: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Self {
        let views: Vec<_> = feats.into_iter().collect();
        let all = ndarray::concatenate(Axis(0), &views).expect("feature dims agree");
        Self {
            mean: all.mean_axis(Axis(0)).expect("at least one frame"),
            std: all.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-8 { s } else { 1.0 }),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            std: Array1::ones(dim),
        }
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean.view().insert_axis(Axis(0))) / self.std.view().insert_axis(Axis(0))
    }
}

/// Input affine, TDNN stack, p-code layer, state output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub aux_mode: AuxMode,
    pub aux_dim: usize,
    pub num_states: usize,
    input: NormAffine,
    tdnn: Vec<TdnnLayer>,
    pcode: NormAffine,
    output: Affine,
}

pub struct EncoderOut {
    pub logits: Var,
    pub pcode: Var,
}

impl EncoderModel {
    pub fn new(cfg: &ModelConfig, aux_mode: AuxMode, aux_dim: usize, num_states: usize) -> Self {
        let h = cfg.hidden;
        Self {
            aux_mode,
            aux_dim,
            num_states,
            input: NormAffine::new("enc.input", cfg.feat_dim + aux_dim, h),
            tdnn: cfg
                .tdnn_offsets
                .iter()
                .enumerate()
                .map(|(i, o)| TdnnLayer::new(format!("enc.tdnn{}", i + 1), h, h, o))
                .collect(),
            pcode: NormAffine::new("enc.pcode", h, cfg.pcode_dim),
            output: Affine::new("enc.output", cfg.pcode_dim, num_states),
        }
    }

    pub fn pcode_dim(&self) -> usize {
        self.pcode.affine.output
    }

    pub fn init(&self, ps: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.input.init(ps, rng);
        for l in &self.tdnn {
            l.init(ps, rng);
        }
        self.pcode.init(ps, rng);
        self.output.init(ps, 0.5, rng);
    }

    /// `x` is standardised features; `aux` per-frame auxiliary vectors.
    pub fn forward(&self, tape: &mut Tape, x: Var, aux: Option<Var>, seq_lens: &[usize]) -> Result<EncoderOut> {
        let inp = match (self.aux_mode, aux) {
            (AuxMode::None, None) => x,
            (AuxMode::None, Some(_)) => return Err(Error::Invalid("aux vectors given to a model without aux input".into())),
            (m, None) => return Err(Error::Invalid(format!("aux mode {m} needs aux vectors"))),
            (_, Some(a)) => {
                if tape.value(a).ncols() != self.aux_dim {
                    return Err(Error::Shape(format!(
                        "aux has {} dims, model expects {}",
                        tape.value(a).ncols(),
                        self.aux_dim
                    )));
                }
                tape.concat(&[x, a])
            }
        };
        let mut h = self.input.forward(tape, inp);
        for l in &self.tdnn {
            h = l.forward(tape, h, seq_lens);
        }
        let pcode = self.pcode.forward(tape, h);
        let logits = self.output.forward(tape, pcode);
        Ok(EncoderOut { logits, pcode })
    }
}

/// Affine/ReLU stack mapping p-code plus aux back to feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    pub input_dim: usize,
    hidden: Vec<Affine>,
    output: Affine,
}

impl DecoderModel {
    pub fn new(cfg: &ModelConfig, pcode_dim: usize, aux_dim: usize) -> Self {
        let mut hidden = Vec::new();
        let mut d = pcode_dim + aux_dim;
        for i in 0..cfg.decoder_layers {
            hidden.push(Affine::new(format!("dec.hidden{}", i + 1), d, cfg.decoder_width));
            d = cfg.decoder_width;
        }
        Self {
            input_dim: pcode_dim + aux_dim,
            hidden,
            output: Affine::new("dec.output", d, cfg.feat_dim),
        }
    }

    /// Output layer starts at the feature mean with columns scaled by the
    /// feature spread, so early reconstructions live on the right scale.
    pub fn init(&self, ps: &mut ParamStore, norm: &FeatureNorm, rng: &mut ChaCha8Rng) {
        for l in &self.hidden {
            l.init(ps, 1.0, rng);
        }
        self.output.init(ps, 0.5, rng);
        let w = ps.params.get_mut("dec.output.w").unwrap();
        *w *= &norm.std.view().insert_axis(Axis(0));
        ps.insert("dec.output.b", norm.mean.clone().insert_axis(Axis(0)));
    }

    pub fn forward(&self, tape: &mut Tape, pcode: Var, aux: Option<Var>) -> Result<Var> {
        let mut h = match aux {
            Some(a) => tape.concat(&[pcode, a]),
            None => pcode,
        };
        if tape.value(h).ncols() != self.input_dim {
            return Err(Error::Shape(format!(
                "decoder input has {} dims, expected {}",
                tape.value(h).ncols(),
                self.input_dim
            )));
        }
        for l in &self.hidden {
            let a = l.forward(tape, h);
            h = tape.relu(a);
        }
        Ok(self.output.forward(tape, h))
    }
}

/// Encoder, optional decoder, their parameters and the input normaliser.
#[derive(Debug, Clone, PartialEq)]
pub struct FdcaeModel {
    pub config: ModelConfig,
    pub condition: Condition,
    pub encoder: EncoderModel,
    pub decoder: Option<DecoderModel>,
    pub params: ParamStore,
    pub norm: FeatureNorm,
}

impl FdcaeModel {
    pub fn new(
        cfg: &ModelConfig,
        condition: Condition,
        aux_mode: AuxMode,
        aux_dim: usize,
        num_states: usize,
        norm: FeatureNorm,
        seed: u64,
    ) -> Self {
        let aux_dim = if aux_mode == AuxMode::None { 0 } else { aux_dim };
        let encoder = EncoderModel::new(cfg, aux_mode, aux_dim, num_states);
        let mut params = ParamStore::new();
        encoder.init(&mut params, &mut ChaCha8Rng::seed_from_u64(sub_seed(seed, 1)));
        let decoder = (condition == Condition::Fdcae).then(|| {
            let d = DecoderModel::new(cfg, encoder.pcode_dim(), aux_dim);
            d.init(&mut params, &norm, &mut ChaCha8Rng::seed_from_u64(sub_seed(seed, 2)));
            d
        });
        Self {
            config: cfg.clone(),
            condition,
            encoder,
            decoder,
            params,
            norm,
        }
    }

    pub fn aux_mode(&self) -> AuxMode {
        self.encoder.aux_mode
    }

    pub fn num_states(&self) -> usize {
        self.encoder.num_states
    }

    /// Inference-mode logits of one utterance; never touches the decoder.
    pub fn logits(&self, feats: ArrayView2<f64>, aux: Option<&Array2<f64>>) -> Result<Array2<f64>> {
        let mut tape = Tape::new(&self.params, false);
        let x = tape.input(self.norm.apply(feats));
        let a = aux.map(|a| tape.input(a.clone()));
        let out = self.encoder.forward(&mut tape, x, a, &[feats.nrows()])?;
        Ok(tape.value(out.logits).clone())
    }

    /// Inference-mode reconstruction of one utterance.
    pub fn reconstruct(&self, feats: ArrayView2<f64>, aux: Option<&Array2<f64>>) -> Result<Array2<f64>> {
        let dec = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::Invalid("model has no decoder".into()))?;
        let mut tape = Tape::new(&self.params, false);
        let x = tape.input(self.norm.apply(feats));
        let a = aux.map(|a| tape.input(a.clone()));
        let out = self.encoder.forward(&mut tape, x, a, &[feats.nrows()])?;
        let r = dec.forward(&mut tape, out.pcode, a)?;
        Ok(tape.value(r).clone())
    }

    /// Same model without its decoder (what recognition needs).
    pub fn without_decoder(&self) -> Self {
        let mut m = self.clone();
        m.decoder = None;
        m.params = self.params.subset("enc.");
        m
    }

    fn header(&self, b: &mut Bundle) {
        b.insert_scalar("condition", (self.condition == Condition::Fdcae) as u8 as f64);
        b.insert_scalar("aux_mode", AuxMode::ALL.iter().position(|&m| m == self.aux_mode()).unwrap() as f64);
        b.insert_scalar("aux_dim", self.encoder.aux_dim as f64);
        b.insert_scalar("num_states", self.num_states() as f64);
        b.insert_scalar("feat_dim", self.config.feat_dim as f64);
        b.insert_scalar("hidden", self.config.hidden as f64);
        b.insert_scalar("pcode_dim", self.config.pcode_dim as f64);
        b.insert_scalar("decoder_width", self.config.decoder_width as f64);
        b.insert_scalar("decoder_layers", self.config.decoder_layers as f64);
        for (i, o) in self.config.tdnn_offsets.iter().enumerate() {
            b.insert_vec(format!("tdnn_offsets.{i:02}"), &o.iter().map(|&v| v as f64).collect::<Vec<_>>());
        }
        b.insert_vec("norm.mean", self.norm.mean.as_slice().unwrap());
        b.insert_vec("norm.std", self.norm.std.as_slice().unwrap());
    }

    /// Encoder checkpoint and, for f-DcAE, a separate decoder checkpoint.
    pub fn save(&self, encoder_path: impl AsRef<Path>, decoder_path: Option<&Path>) -> Result<()> {
        let mut b = self.params.subset("enc.").to_bundle("fdcae-encoder");
        self.header(&mut b);
        b.save(encoder_path)?;
        if let (Some(p), Some(_)) = (decoder_path, &self.decoder) {
            self.params.subset("dec.").to_bundle("fdcae-decoder").save(p)?;
        }
        Ok(())
    }

    /// Loads an encoder checkpoint, plus the decoder when a path is given.
    pub fn load(encoder_path: impl AsRef<Path>, decoder_path: Option<&Path>) -> Result<Self> {
        let b = Bundle::load(encoder_path)?.expect_kind("fdcae-encoder")?;
        let int = |k: &str| -> Result<usize> { Ok(b.scalar(k)? as usize) };
        let mut offs = Vec::new();
        while let Ok(v) = b.vec(&format!("tdnn_offsets.{:02}", offs.len())) {
            offs.push(v.into_iter().map(|x| x as isize).collect());
        }
        let config = ModelConfig {
            feat_dim: int("feat_dim")?,
            hidden: int("hidden")?,
            pcode_dim: int("pcode_dim")?,
            tdnn_offsets: offs,
            decoder_width: int("decoder_width")?,
            decoder_layers: int("decoder_layers")?,
        };
        let condition = if int("condition")? == 1 { Condition::Fdcae } else { Condition::Baseline };
        let aux_mode = *AuxMode::ALL
            .get(int("aux_mode")?)
            .ok_or_else(|| Error::Invalid("bad aux mode in checkpoint".into()))?;
        let aux_dim = int("aux_dim")?;
        let encoder = EncoderModel::new(&config, aux_mode, aux_dim, int("num_states")?);
        let norm = FeatureNorm {
            mean: Array1::from(b.vec("norm.mean")?),
            std: Array1::from(b.vec("norm.std")?),
        };
        let mut params = ParamStore::from_bundle(&b)?;
        let decoder = match decoder_path {
            Some(p) if condition == Condition::Fdcae => {
                let db = Bundle::load(p)?.expect_kind("fdcae-decoder")?;
                params.extend(ParamStore::from_bundle(&db)?);
                Some(DecoderModel::new(&config, encoder.pcode_dim(), aux_dim))
            }
            _ => None,
        };
        Ok(Self {
            config,
            condition,
            encoder,
            decoder,
            params,
            norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            feat_dim: 4,
            hidden: 6,
            pcode_dim: 5,
            tdnn_offsets: vec![vec![-1, 0, 1], vec![-3, 0, 3]],
            decoder_width: 6,
            decoder_layers: 2,
        }
    }

    #[test]
    fn shapes_and_constant_rows() {
        let m = FdcaeModel::new(&tiny(), Condition::Fdcae, AuxMode::Both, 3, 7, FeatureNorm::identity(4), 1);
        let feats = Array2::from_elem((9, 4), 0.3);
        let aux = Array2::from_elem((9, 3), -0.2);
        let l = m.logits(feats.view(), Some(&aux)).unwrap();
        assert_eq!(l.dim(), (9, 7));
        assert!(l.iter().all(|v| v.is_finite()));
        for r in 1..9 {
            assert_eq!(l.row(r), l.row(0));
        }
        assert_eq!(m.reconstruct(feats.view(), Some(&aux)).unwrap().dim(), (9, 4));
        assert!(m.logits(feats.view(), None).is_err());
    }

    #[test]
    fn zero_decoder_gives_zero_output() {
        let m = FdcaeModel::new(&tiny(), Condition::Fdcae, AuxMode::Pitch, 3, 7, FeatureNorm::identity(4), 1);
        let mut ps = m.params.clone();
        for (k, v) in ps.params.iter_mut() {
            if k.starts_with("dec.") {
                v.fill(0.0);
            }
        }
        let mut tape = Tape::new(&ps, false);
        let p = tape.input(Array2::zeros((5, 5)));
        let a = tape.input(Array2::zeros((5, 3)));
        let r = m.decoder.as_ref().unwrap().forward(&mut tape, p, Some(a)).unwrap();
        assert!(tape.value(r).iter().all(|&v| v == 0.0));
        assert_eq!(tape.value(r).dim(), (5, 4));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = FdcaeModel::new(&tiny(), Condition::Fdcae, AuxMode::Speaker, 2, 7, FeatureNorm::identity(4), 3);
        let (e, d) = (dir.path().join("enc.bin"), dir.path().join("dec.bin"));
        m.save(&e, Some(&d)).unwrap();
        let full = FdcaeModel::load(&e, Some(&d)).unwrap();
        assert_eq!(full, m);
        let enc_only = FdcaeModel::load(&e, None).unwrap();
        assert_eq!(enc_only, m.without_decoder());
        let f = Array2::from_shape_fn((6, 4), |(i, j)| (i * j) as f64 * 0.1);
        let a = Array2::from_elem((6, 2), 0.5);
        assert_eq!(full.logits(f.view(), Some(&a)).unwrap(), enc_only.logits(f.view(), Some(&a)).unwrap());
    }
}
