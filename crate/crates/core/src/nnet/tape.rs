use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, Axis};

use super::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(String),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Splice {
        x: Var,
        /// Source row for each (output row, offset slot).
        index: Vec<usize>,
        width: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
        batch_stats: bool,
    },
    Concat(Vec<Var>),
    LogSoftmax(Var),
    Nll {
        logp: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
    },
    Mse {
        x: Var,
        diff: Array2<f64>,
    },
    External {
        x: Var,
        grad: Array2<f64>,
    },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Batch statistics observed by a training-mode normalisation, to be folded
/// into the running averages after the step.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub name: String,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

/// Records a forward computation for one backward pass.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: BTreeMap<String, Var>,
    pub training: bool,
    pub bn_updates: Vec<BnUpdate>,
}

pub struct Gradients {
    nodes: Vec<Option<Array2<f64>>>,
    pub params: BTreeMap<String, Array2<f64>>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Array2<f64>> {
        self.nodes[v.0].as_ref()
    }
}

fn add_into(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

fn scalar(v: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), v)
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore, training: bool) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: BTreeMap::new(),
            training,
            bn_updates: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, x: Array2<f64>) -> Var {
        self.push(x, Op::Leaf)
    }

    /// Trainable parameter; repeated lookups share one node.
    pub fn param(&mut self, name: &str) -> Var {
        if let Some(&v) = self.param_nodes.get(name) {
            return v;
        }
        let params = self.params;
        let value = params
            .params
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
            .clone();
        let v = self.push(value, Op::Param(name.to_string()));
        self.param_nodes.insert(name.to_string(), v);
        v
    }

    /// Non-trainable buffer as a constant leaf.
    pub fn buffer(&mut self, name: &str) -> Var {
        let value = self.params.get(name).clone();
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// Adds a `1 x n` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let v = self.value(x) + self.value(b);
        self.push(v, Op::AddBias(x, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x) * c;
        self.push(v, Op::Scale(x, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|z| z.max(0.0));
        self.push(v, Op::Relu(x))
    }

    /// Row `t` of the output concatenates rows `t + o` for each offset,
    /// clamped to the sequence containing `t`.
    pub fn splice(&mut self, x: Var, offsets: &[isize], seq_lens: &[usize]) -> Var {
        let xv = self.value(x);
        let (rows, d) = xv.dim();
        assert_eq!(seq_lens.iter().sum::<usize>(), rows, "sequence lengths must cover the rows");
        let k = offsets.len();
        let mut index = Vec::with_capacity(rows * k);
        let mut start = 0;
        for &len in seq_lens {
            for t in 0..len {
                for &o in offsets {
                    let src = (t as isize + o).clamp(0, len as isize - 1) as usize;
                    index.push(start + src);
                }
            }
            start += len;
        }
        let mut out = Array2::zeros((rows, k * d));
        for r in 0..rows {
            for j in 0..k {
                out.slice_mut(s![r, j * d..(j + 1) * d]).assign(&xv.row(index[r * k + j]));
            }
        }
        self.push(out, Op::Splice { x, index, width: k })
    }

    /// Per-column normalisation with learnable scale and offset. Training
    /// mode uses batch statistics (recorded for the running averages under
    /// `name`); otherwise the stored running mean/variance.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, name: &str, eps: f64) -> Var {
        let xv = &self.nodes[x.0].value;
        let (mean, var) = if self.training {
            (xv.mean_axis(Axis(0)).unwrap(), xv.var_axis(Axis(0), 0.0))
        } else {
            (
                self.params.get(&format!("{name}.running_mean")).row(0).to_owned(),
                self.params.get(&format!("{name}.running_var")).row(0).to_owned(),
            )
        };
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = (xv - &mean.view().insert_axis(Axis(0))) * inv_std.view().insert_axis(Axis(0));
        let out = &xhat * self.value(gamma) + self.value(beta);
        if self.training {
            self.bn_updates.push(BnUpdate {
                name: name.to_string(),
                mean,
                var,
            });
        }
        let batch_stats = self.training;
        self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
        )
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concatenated parts share row count");
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for mut row in v.outer_iter_mut() {
            let lse = crate::log_sum_exp(row.as_slice().unwrap());
            row.mapv_inplace(|z| z - lse);
        }
        self.push(v, Op::LogSoftmax(x))
    }

    /// `-sum_t logp[t, targets[t]]` over unmasked rows.
    pub fn nll_sum(&mut self, logp: Var, targets: &[usize], mask: &[bool]) -> Var {
        let lv = self.value(logp);
        assert_eq!(targets.len(), lv.nrows());
        assert_eq!(mask.len(), lv.nrows());
        let total: f64 = (0..lv.nrows()).filter(|&t| mask[t]).map(|t| -lv[[t, targets[t]]]).sum();
        self.push(
            scalar(total),
            Op::Nll {
                logp,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
        )
    }

    /// `sum_t ||x_t - target_t||^2` over unmasked rows.
    pub fn mse_sum(&mut self, x: Var, target: &Array2<f64>, mask: &[bool]) -> Var {
        let mut diff = self.value(x) - target;
        for (mut row, &m) in diff.outer_iter_mut().zip(mask) {
            if !m {
                row.fill(0.0);
            }
        }
        let total = diff.iter().map(|d| d * d).sum();
        self.push(scalar(total), Op::Mse { x, diff })
    }

    /// Scalar with an externally computed value and gradient with respect
    /// to `x` (used for sequence objectives evaluated outside the tape).
    pub fn external(&mut self, x: Var, value: f64, grad: Array2<f64>) -> Var {
        assert_eq!(grad.dim(), self.value(x).dim());
        self.push(scalar(value), Op::External { x, grad })
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::ones(self.nodes[root.0].value.dim()));
        let mut params = BTreeMap::new();
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(name) => {
                    params.insert(name.clone(), g.clone());
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    add_into(&mut grads[a.0], ga);
                    add_into(&mut grads[b.0], gb);
                }
                Op::AddBias(x, b) => {
                    add_into(&mut grads[b.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    add_into(&mut grads[x.0], g.clone());
                }
                Op::Add(a, b) => {
                    add_into(&mut grads[a.0], g.clone());
                    add_into(&mut grads[b.0], g.clone());
                }
                Op::Scale(x, c) => add_into(&mut grads[x.0], &g * *c),
                Op::Relu(x) => {
                    let mut gx = g.clone();
                    gx.zip_mut_with(&node.value, |gv, &y| {
                        if y <= 0.0 {
                            *gv = 0.0
                        }
                    });
                    add_into(&mut grads[x.0], gx);
                }
                Op::Splice { x, index, width } => {
                    let xv = self.value(*x);
                    let d = xv.ncols();
                    let mut gx = Array2::zeros(xv.dim());
                    for r in 0..g.nrows() {
                        for j in 0..*width {
                            let mut dst = gx.row_mut(index[r * width + j]);
                            dst += &g.slice(s![r, j * d..(j + 1) * d]);
                        }
                    }
                    add_into(&mut grads[x.0], gx);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    batch_stats,
                } => {
                    add_into(&mut grads[beta.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    add_into(&mut grads[gamma.0], (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let gxhat = &g * self.value(*gamma);
                    let gx = if *batch_stats {
                        let n = g.nrows() as f64;
                        let sum_g = gxhat.sum_axis(Axis(0));
                        let sum_gx = (&gxhat * xhat).sum_axis(Axis(0));
                        let mut gx = &gxhat * n - sum_g.view().insert_axis(Axis(0)) - xhat * &sum_gx.view().insert_axis(Axis(0));
                        gx *= &(inv_std / n).view().insert_axis(Axis(0));
                        gx
                    } else {
                        gxhat * inv_std.view().insert_axis(Axis(0))
                    };
                    add_into(&mut grads[x.0], gx);
                }
                Op::Concat(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        add_into(&mut grads[p.0], g.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::LogSoftmax(x) => {
                    let mut gx = g.clone();
                    for (mut row, y) in gx.outer_iter_mut().zip(node.value.outer_iter()) {
                        let total: f64 = row.sum();
                        row.zip_mut_with(&y, |gv, &lp| *gv -= lp.exp() * total);
                    }
                    add_into(&mut grads[x.0], gx);
                }
                Op::Nll { logp, targets, mask } => {
                    let up = g[[0, 0]];
                    let mut gl = Array2::zeros(self.value(*logp).dim());
                    for (t, (&s, &m)) in targets.iter().zip(mask).enumerate() {
                        if m {
                            gl[[t, s]] = -up;
                        }
                    }
                    add_into(&mut grads[logp.0], gl);
                }
                Op::Mse { x, diff } => add_into(&mut grads[x.0], diff * (2.0 * g[[0, 0]])),
                Op::External { x, grad } => add_into(&mut grads[x.0], grad * g[[0, 0]]),
            }
            grads[i] = Some(g);
        }
        Gradients { nodes: grads, params }
    }
}
