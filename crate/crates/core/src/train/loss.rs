use ndarray::{Array1, Array2, ArrayView1};

use super::{Params, Phase, TrainConfig, TrainError};
use crate::features::{hash_encode_sparse, CombinerParams, HashedText, MergerParams, TextEncoderParams};

/// One training sample: reference and target image features with the
/// forward and (optional) reverse transition texts.
#[derive(Debug, Clone)]
pub struct BatchRow {
    pub reference: Array1<f64>,
    pub target: Array1<f64>,
    pub forward: String,
    pub reverse: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainBatch {
    pub rows: Vec<BatchRow>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// A batch row with its texts already hashed. Borrowed so the trainer can
/// point straight into the embedding store and the hashed-text cache.
pub(crate) struct EncodedRow<'a> {
    pub reference: ArrayView1<'a, f64>,
    pub target: ArrayView1<'a, f64>,
    pub forward: &'a HashedText,
    pub reverse: Option<&'a HashedText>,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// `log_softmax[i][j]` over the scaled similarity row `i`.
    pub log_softmax: Array2<f64>,
}

/// Parameter gradients, shaped like the parameters they belong to. Only the
/// parameters trained in the requested phase are present.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub text: Option<TextEncoderParams>,
    pub merger: Option<CombinerParams>,
}

/// Sum by recursive halving; the reduction order depends only on the length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn hash_rows(batch: &TrainBatch, raw_dim: usize) -> Vec<(HashedText, Option<HashedText>)> {
    batch
        .rows
        .iter()
        .map(|r| (hash_encode_sparse(&r.forward, raw_dim), r.reverse.as_deref().map(|t| hash_encode_sparse(t, raw_dim))))
        .collect()
}

fn encoded<'a>(batch: &'a TrainBatch, hashed: &'a [(HashedText, Option<HashedText>)]) -> Vec<EncodedRow<'a>> {
    batch
        .rows
        .iter()
        .zip(hashed)
        .map(|(r, (f, rev))| EncodedRow {
            reference: r.reference.view(),
            target: r.target.view(),
            forward: f,
            reverse: rev.as_ref(),
        })
        .collect()
}

/// Batch-based classification loss between composed and target features.
pub fn loss_bbc(
    batch: &TrainBatch,
    text: &TextEncoderParams,
    merger: &MergerParams,
    lambda: f64,
) -> Result<LossOutput, TrainError> {
    let hashed = hash_rows(batch, text.raw_dim());
    let rows = encoded(batch, &hashed);
    check_rows(&rows)?;
    let psi: Vec<Array1<f64>> = rows
        .iter()
        .map(|r| merger.forward(r.reference, text.encode_hashed(r.forward).view()).0)
        .collect();
    let targets: Vec<ArrayView1<f64>> = rows.iter().map(|r| r.target).collect();
    let out = batch_cross_entropy(&psi, &targets, lambda, false)?;
    Ok(LossOutput { loss: out.loss, log_softmax: out.log_softmax })
}

/// Cycle loss: the composed feature pushed through the reverse description
/// must land on its own reference feature.
pub fn loss_cycle(
    batch: &TrainBatch,
    text: &TextEncoderParams,
    merger: &MergerParams,
    lambda: f64,
) -> Result<LossOutput, TrainError> {
    let hashed = hash_rows(batch, text.raw_dim());
    let rows = encoded(batch, &hashed);
    check_rows(&rows)?;
    let mut conjugated = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let reverse = r.reverse.ok_or(TrainError::MissingReverse(i))?;
        let psi = merger.forward(r.reference, text.encode_hashed(r.forward).view()).0;
        conjugated.push(merger.forward(psi.view(), text.encode_hashed(reverse).view()).0);
    }
    let refs: Vec<ArrayView1<f64>> = rows.iter().map(|r| r.reference).collect();
    let out = batch_cross_entropy(&conjugated, &refs, lambda, false)?;
    Ok(LossOutput { loss: out.loss, log_softmax: out.log_softmax })
}

/// `ω·L_bbc + (1−ω)·L_cycle`, or `L_bbc` alone with the cycle disabled.
pub fn loss_total(batch: &TrainBatch, params: &Params, cfg: &TrainConfig) -> Result<f64, TrainError> {
    let hashed = hash_rows(batch, params.text.raw_dim());
    Ok(evaluate_encoded(&encoded(batch, &hashed), params, cfg, false)?.0)
}

/// Exact gradient of [`loss_total`] for the parameters trained in `cfg.phase`.
pub fn gradients(batch: &TrainBatch, params: &Params, cfg: &TrainConfig) -> Result<Gradients, TrainError> {
    let hashed = hash_rows(batch, params.text.raw_dim());
    let (_, grads) = evaluate_encoded(&encoded(batch, &hashed), params, cfg, true)?;
    Ok(grads.expect("gradients requested"))
}

fn check_rows(rows: &[EncodedRow<'_>]) -> Result<(), TrainError> {
    if rows.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    for (i, r) in rows.iter().enumerate() {
        if !r.reference.iter().chain(r.target.iter()).all(|x| x.is_finite()) {
            return Err(TrainError::Numerical(format!("input features of row {i}")));
        }
    }
    Ok(())
}

/// Loss (and optionally gradients) of the configured objective.
pub(crate) fn evaluate_encoded(
    rows: &[EncodedRow<'_>],
    params: &Params,
    cfg: &TrainConfig,
    want_grads: bool,
) -> Result<(f64, Option<Gradients>), TrainError> {
    check_rows(rows)?;
    if !params.is_finite() {
        return Err(TrainError::Numerical("parameters".into()));
    }
    let (w_bbc, w_cycle) = cfg.loss_weights();
    let text = &params.text;
    let merger = &params.merger;
    let lambda = cfg.lambda;

    let text_fwd: Vec<Array1<f64>> = rows.iter().map(|r| text.encode_hashed(r.forward)).collect();
    let (psi, psi_traces): (Vec<_>, Vec<_>) = rows
        .iter()
        .zip(&text_fwd)
        .map(|(r, t)| merger.forward(r.reference, t.view()))
        .unzip();
    let targets: Vec<ArrayView1<f64>> = rows.iter().map(|r| r.target).collect();
    let bbc = batch_cross_entropy(&psi, &targets, lambda, want_grads)?;

    let cycle = if w_cycle > 0.0 {
        let mut text_rev = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            text_rev.push(text.encode_hashed(r.reverse.ok_or(TrainError::MissingReverse(i))?));
        }
        let (conj, conj_traces): (Vec<_>, Vec<_>) =
            psi.iter().zip(&text_rev).map(|(p, t)| merger.forward(p.view(), t.view())).unzip();
        let refs: Vec<ArrayView1<f64>> = rows.iter().map(|r| r.reference).collect();
        let out = batch_cross_entropy(&conj, &refs, lambda, want_grads)?;
        Some((out, conj_traces))
    } else {
        None
    };

    let total = match &cycle {
        Some((c, _)) => w_bbc * bbc.loss + w_cycle * c.loss,
        None => bbc.loss,
    };
    if !total.is_finite() {
        return Err(TrainError::Numerical("loss".into()));
    }
    if !want_grads {
        return Ok((total, None));
    }

    let train_text = cfg.phase == Phase::TextEncoder;
    let mut text_grads = train_text.then(|| TextEncoderParams::zeros(text.raw_dim(), text.dim()));
    let mut merger_grads = match (cfg.phase, merger) {
        (Phase::Merger, MergerParams::Combiner(c)) => Some(CombinerParams::zeros(c.dim())),
        _ => None,
    };

    for (i, row) in rows.iter().enumerate() {
        let mut g_psi = &bbc.grads[i] * w_bbc;
        if let Some((c, traces)) = &cycle {
            let g_conj = &c.grads[i] * w_cycle;
            let (d_psi, d_rev) = merger.backward(&traces[i], g_conj.view(), merger_grads.as_mut());
            g_psi += &d_psi;
            if let Some(tg) = text_grads.as_mut() {
                accumulate_text(tg, row.reverse.expect("checked above"), &d_rev);
            }
        }
        let (_, d_fwd) = merger.backward(&psi_traces[i], g_psi.view(), merger_grads.as_mut());
        if let Some(tg) = text_grads.as_mut() {
            accumulate_text(tg, row.forward, &d_fwd);
        }
    }

    let grads = Gradients { text: text_grads, merger: merger_grads };
    let finite = grads.text.as_ref().is_none_or(|t| t.is_finite()) && grads.merger.as_ref().is_none_or(|m| m.is_finite());
    if !finite {
        return Err(TrainError::Numerical("gradients".into()));
    }
    Ok((total, Some(grads)))
}

fn accumulate_text(grads: &mut TextEncoderParams, x: &HashedText, d_out: &Array1<f64>) {
    for &(j, value) in &x.entries {
        grads.projection.row_mut(j).scaled_add(value, d_out);
    }
    grads.bias += d_out;
}

struct CrossEntropy {
    loss: f64,
    log_softmax: Array2<f64>,
    /// dL/dq_i for every query row; empty unless requested.
    grads: Vec<Array1<f64>>,
}

/// Softmax cross-entropy of `λ·cos(q_i, c_j)` with the diagonal as labels,
/// stabilized by subtracting each row maximum.
fn batch_cross_entropy(
    queries: &[Array1<f64>],
    candidates: &[ArrayView1<'_, f64>],
    lambda: f64,
    want_grads: bool,
) -> Result<CrossEntropy, TrainError> {
    let b = queries.len();
    debug_assert_eq!(b, candidates.len());
    let unit = |v: ArrayView1<'_, f64>| {
        let n = v.dot(&v).sqrt();
        if n == 0.0 {
            (Array1::zeros(v.len()), 0.0)
        } else {
            (&v / n, n)
        }
    };
    let q: Vec<(Array1<f64>, f64)> = queries.iter().map(|x| unit(x.view())).collect();
    let c: Vec<Array1<f64>> = candidates.iter().map(|x| unit(*x).0).collect();
    if q.iter().any(|(v, n)| !n.is_finite() || !v.iter().all(|x| x.is_finite())) {
        return Err(TrainError::Numerical("composed features".into()));
    }

    let cos = Array2::from_shape_fn((b, b), |(i, j)| q[i].0.dot(&c[j]).clamp(-1.0, 1.0));
    let mut log_softmax = Array2::zeros((b, b));
    let mut row_losses = Vec::with_capacity(b);
    for i in 0..b {
        let s = cos.row(i).mapv(|x| lambda * x);
        let max = s.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + s.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        log_softmax.row_mut(i).assign(&(s - lse));
        row_losses.push(-log_softmax[[i, i]]);
    }
    let loss = pairwise_sum(&row_losses) / b as f64;
    if !loss.is_finite() {
        return Err(TrainError::Numerical("similarity softmax".into()));
    }

    let mut grads = Vec::new();
    if want_grads {
        let inv_b = 1.0 / b as f64;
        for i in 0..b {
            let (q_hat, q_norm) = &q[i];
            let mut g = Array1::zeros(q_hat.len());
            if *q_norm > 0.0 {
                // dL/dcos_ij = λ (p_ij − δ_ij) / B
                let mut radial = 0.0;
                for j in 0..b {
                    let p = log_softmax[[i, j]].exp();
                    let w = lambda * (p - if i == j { 1.0 } else { 0.0 }) * inv_b;
                    g.scaled_add(w, &c[j]);
                    radial += w * cos[[i, j]];
                }
                g.scaled_add(-radial, q_hat);
                g /= *q_norm;
            }
            grads.push(g);
        }
    }
    Ok(CrossEntropy { loss, log_softmax, grads })
}
