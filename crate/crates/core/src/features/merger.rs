use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{l2_norm, FeatureError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergerKind {
    Sum,
    Combiner,
}

impl fmt::Display for MergerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MergerKind::Sum => "sum",
            MergerKind::Combiner => "combiner",
        })
    }
}

impl FromStr for MergerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(MergerKind::Sum),
            "combiner" => Ok(MergerKind::Combiner),
            other => Err(format!("unknown merger kind `{other}` (expected sum|combiner)")),
        }
    }
}

/// Gated fusion of the L2-normalized inputs.
///
/// With `z = [â; t̂]`: `h = relu(W1 z + b1)`, `o = W2 h + b2`,
/// `g = σ(w_g · h + b_g)` and the output is `g (â + t̂) + (1 − g) o`.
/// The gate bias starts at 3 so a fresh combiner behaves almost like a sum
/// of normalized features.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerParams {
    /// `2d × 2d`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `d × 2d`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_gate: Array1<f64>,
    pub b_gate: f64,
}

pub const INITIAL_GATE_BIAS: f64 = 3.0;

impl CombinerParams {
    pub fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let hidden = 2 * dim;
        let mut uniform = |rows: usize, cols: usize, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..=limit))
        };
        let w1 = uniform(hidden, hidden, hidden, hidden);
        let w2 = uniform(dim, hidden, hidden, dim);
        let w_gate = uniform(1, hidden, hidden, 1).row(0).to_owned();
        CombinerParams {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(dim),
            w_gate,
            b_gate: INITIAL_GATE_BIAS,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        let hidden = 2 * dim;
        CombinerParams {
            w1: Array2::zeros((hidden, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((dim, hidden)),
            b2: Array1::zeros(dim),
            w_gate: Array1::zeros(hidden),
            b_gate: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .chain(self.w_gate.iter())
            .all(|x| x.is_finite())
            && self.b_gate.is_finite()
    }

    /// Number of scalar parameters.
    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w_gate.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Visits every scalar in a fixed order (w1, b1, w2, b2, w_gate, b_gate).
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        self.w1.iter_mut().for_each(&mut f);
        self.b1.iter_mut().for_each(&mut f);
        self.w2.iter_mut().for_each(&mut f);
        self.b2.iter_mut().for_each(&mut f);
        self.w_gate.iter_mut().for_each(&mut f);
        f(&mut self.b_gate);
    }

    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out.extend(self.w_gate.iter());
        out.push(self.b_gate);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MergerParams {
    Sum,
    Combiner(CombinerParams),
}

impl MergerParams {
    pub fn kind(&self) -> MergerKind {
        match self {
            MergerParams::Sum => MergerKind::Sum,
            MergerParams::Combiner(_) => MergerKind::Combiner,
        }
    }

    pub fn init<R: Rng + ?Sized>(kind: MergerKind, dim: usize, rng: &mut R) -> Self {
        match kind {
            MergerKind::Sum => MergerParams::Sum,
            MergerKind::Combiner => MergerParams::Combiner(CombinerParams::init(dim, rng)),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            MergerParams::Sum => true,
            MergerParams::Combiner(c) => c.is_finite(),
        }
    }

    /// Forward pass keeping the intermediates needed by [`MergerParams::backward`].
    pub fn forward(&self, image: ArrayView1<'_, f64>, text: ArrayView1<'_, f64>) -> (Array1<f64>, MergeTrace) {
        match self {
            MergerParams::Sum => (&image + &text, MergeTrace::Sum),
            MergerParams::Combiner(c) => combiner_forward(c, image, text),
        }
    }

    /// Backpropagates `grad_out` to both inputs. Parameter gradients are
    /// accumulated into `param_grads` when given.
    pub fn backward(
        &self,
        trace: &MergeTrace,
        grad_out: ArrayView1<'_, f64>,
        param_grads: Option<&mut CombinerParams>,
    ) -> (Array1<f64>, Array1<f64>) {
        match (self, trace) {
            (MergerParams::Sum, MergeTrace::Sum) => (grad_out.to_owned(), grad_out.to_owned()),
            (MergerParams::Combiner(c), MergeTrace::Combiner(t)) => combiner_backward(c, t, grad_out, param_grads),
            _ => panic!("merge trace does not match merger kind"),
        }
    }
}

/// Merges image and text features.
pub fn merge(
    image_feat: ArrayView1<'_, f64>,
    text_feat: ArrayView1<'_, f64>,
    params: &MergerParams,
) -> Result<Array1<f64>, FeatureError> {
    if image_feat.len() != text_feat.len() {
        return Err(FeatureError::Shape { expected: image_feat.len(), found: text_feat.len() });
    }
    if let MergerParams::Combiner(c) = params {
        if c.dim() != image_feat.len() {
            return Err(FeatureError::Shape { expected: c.dim(), found: image_feat.len() });
        }
    }
    Ok(params.forward(image_feat, text_feat).0)
}

#[derive(Debug, Clone)]
pub enum MergeTrace {
    Sum,
    Combiner(CombinerTrace),
}

#[derive(Debug, Clone)]
pub struct CombinerTrace {
    a_hat: Array1<f64>,
    b_hat: Array1<f64>,
    a_norm: f64,
    b_norm: f64,
    z: Array1<f64>,
    pre: Array1<f64>,
    h: Array1<f64>,
    o: Array1<f64>,
    gate: f64,
}

fn normalize(v: ArrayView1<'_, f64>) -> (Array1<f64>, f64) {
    let n = l2_norm(v);
    if n == 0.0 {
        (Array1::zeros(v.len()), 0.0)
    } else {
        (&v / n, n)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn combiner_forward(c: &CombinerParams, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> (Array1<f64>, MergeTrace) {
    let d = a.len();
    let (a_hat, a_norm) = normalize(a);
    let (b_hat, b_norm) = normalize(b);
    let mut z = Array1::zeros(2 * d);
    z.slice_mut(s![..d]).assign(&a_hat);
    z.slice_mut(s![d..]).assign(&b_hat);
    let pre = c.w1.dot(&z) + &c.b1;
    let h = pre.mapv(|x| x.max(0.0));
    let o = c.w2.dot(&h) + &c.b2;
    let gate = sigmoid(c.w_gate.dot(&h) + c.b_gate);
    let out = (&a_hat + &b_hat) * gate + &o * (1.0 - gate);
    let trace = CombinerTrace { a_hat, b_hat, a_norm, b_norm, z, pre, h, o, gate };
    (out, MergeTrace::Combiner(trace))
}

fn normalize_backward(hat: &Array1<f64>, norm: f64, grad_hat: &Array1<f64>) -> Array1<f64> {
    if norm == 0.0 {
        return Array1::zeros(hat.len());
    }
    (grad_hat - &(hat * hat.dot(grad_hat))) / norm
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let col = a.view().insert_axis(ndarray::Axis(1));
    let row = b.view().insert_axis(ndarray::Axis(0));
    col.dot(&row)
}

fn combiner_backward(
    c: &CombinerParams,
    t: &CombinerTrace,
    grad_out: ArrayView1<'_, f64>,
    grads: Option<&mut CombinerParams>,
) -> (Array1<f64>, Array1<f64>) {
    let d = t.a_hat.len();
    let g = t.gate;
    let sum_hat = &t.a_hat + &t.b_hat;
    let d_gate = grad_out.dot(&(&sum_hat - &t.o));
    let d_o = &grad_out * (1.0 - g);
    let d_s = d_gate * g * (1.0 - g);

    let mut d_h = c.w2.t().dot(&d_o);
    d_h.scaled_add(d_s, &c.w_gate);
    // relu subgradient is 0 at the kink
    let d_pre = ndarray::Zip::from(&d_h).and(&t.pre).map_collect(|&dh, &p| if p > 0.0 { dh } else { 0.0 });
    let d_z = c.w1.t().dot(&d_pre);

    if let Some(gr) = grads {
        gr.w2 += &outer(&d_o, &t.h);
        gr.b2 += &d_o;
        gr.w_gate.scaled_add(d_s, &t.h);
        gr.b_gate += d_s;
        gr.w1 += &outer(&d_pre, &t.z);
        gr.b1 += &d_pre;
    }

    let d_sum = &grad_out * g;
    let d_a_hat = &d_sum + &d_z.slice(s![..d]);
    let d_b_hat = &d_sum + &d_z.slice(s![d..]);
    (
        normalize_backward(&t.a_hat, t.a_norm, &d_a_hat),
        normalize_backward(&t.b_hat, t.b_norm, &d_b_hat),
    )
}
