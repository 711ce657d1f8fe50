use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::{BnUpdate, ParamStore, Tape, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub name: String,
    pub input: usize,
    pub output: usize,
}

impl Affine {
    pub fn new(name: impl Into<String>, input: usize, output: usize) -> Self {
        Self {
            name: name.into(),
            input,
            output,
        }
    }

    pub fn init(&self, ps: &mut ParamStore, gain: f64, rng: &mut ChaCha8Rng) {
        ps.init_weight(&format!("{}.w", self.name), self.input, self.output, gain, rng);
        ps.insert(format!("{}.b", self.name), Array2::zeros((1, self.output)));
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(&format!("{}.w", self.name));
        let b = tape.param(&format!("{}.b", self.name));
        let h = tape.matmul(x, w);
        tape.add_bias(h, b)
    }
}

/// Affine, normalisation, ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAffine {
    pub affine: Affine,
}

impl NormAffine {
    pub fn new(name: impl Into<String>, input: usize, output: usize) -> Self {
        Self {
            affine: Affine::new(name, input, output),
        }
    }

    pub fn init(&self, ps: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.affine.init(ps, 1.0, rng);
        let n = &self.affine.name;
        let d = self.affine.output;
        ps.insert(format!("{n}.bn.gamma"), Array2::ones((1, d)));
        ps.insert(format!("{n}.bn.beta"), Array2::zeros((1, d)));
        ps.insert_buffer(format!("{n}.bn.running_mean"), Array2::zeros((1, d)));
        ps.insert_buffer(format!("{n}.bn.running_var"), Array2::ones((1, d)));
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = self.affine.forward(tape, x);
        let n = &self.affine.name;
        let g = tape.param(&format!("{n}.bn.gamma"));
        let b = tape.param(&format!("{n}.bn.beta"));
        let y = tape.batch_norm(h, g, b, &format!("{n}.bn"), BN_EPS);
        tape.relu(y)
    }
}

/// Time-delay layer: splice at fixed offsets, then affine, norm, ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct TdnnLayer {
    pub offsets: Vec<isize>,
    pub body: NormAffine,
}

impl TdnnLayer {
    pub fn new(name: impl Into<String>, input: usize, output: usize, offsets: &[isize]) -> Self {
        let mut sorted = offsets.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), offsets.len(), "splice offsets must be unique");
        Self {
            offsets: sorted,
            body: NormAffine::new(name, input * offsets.len(), output),
        }
    }

    pub fn init(&self, ps: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.body.init(ps, rng);
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, seq_lens: &[usize]) -> Var {
        let spliced = if self.offsets == [0] {
            x
        } else {
            tape.splice(x, &self.offsets, seq_lens)
        };
        self.body.forward(tape, spliced)
    }
}

/// Folds recorded batch statistics into the running averages.
pub fn apply_bn_updates(ps: &mut ParamStore, updates: &[BnUpdate]) {
    for u in updates {
        for (suffix, batch) in [("running_mean", &u.mean), ("running_var", &u.var)] {
            let key = format!("{}.{suffix}", u.name);
            let buf = ps.buffers.get_mut(&key).unwrap_or_else(|| panic!("missing buffer {key}"));
            buf.zip_mut_with(&batch.view().insert_axis(ndarray::Axis(0)), |r, &b| {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b
            });
        }
    }
}
