//! Analytic gradients against central finite differences.

use ndarray::Array1;
use posecpr_core::features::{CombinerParams, MergerKind, MergerParams, TextEncoderParams};
use posecpr_core::train::{gradients, loss_total, BatchRow, Params, Phase, TrainBatch, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const WORDS: [&str; 12] = ["raise", "lower", "left", "right", "arm", "knee", "bend", "twist", "head", "hip", "up", "down"];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..6);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn fixture(seed: u64, merger: MergerKind) -> (TrainBatch, Params) {
    let (b, d, raw) = (4, 8, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vec = |rng: &mut ChaCha8Rng| Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
    let rows = (0..b)
        .map(|_| BatchRow {
            reference: vec(&mut rng),
            target: vec(&mut rng),
            forward: sentence(&mut rng),
            reverse: Some(sentence(&mut rng)),
        })
        .collect();
    let mut text = TextEncoderParams::init(raw, d, &mut rng);
    text.bias.mapv_inplace(|_| rng.random_range(-0.2..0.2));
    let merger = MergerParams::init(merger, d, &mut rng);
    (TrainBatch { rows }, Params { text, merger })
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Largest relative error over every parameter trained in `cfg.phase`.
fn max_error(batch: &TrainBatch, params: &Params, cfg: &TrainConfig) -> f64 {
    let grads = gradients(batch, params, cfg).unwrap();
    let loss = |p: &Params| loss_total(batch, p, cfg).unwrap();
    let mut worst: f64 = 0.0;
    match cfg.phase {
        Phase::TextEncoder => {
            let g = grads.text.expect("text gradients");
            for (idx, &a) in g.projection.indexed_iter() {
                let mut plus = params.clone();
                plus.text.projection[idx] += H;
                let mut minus = params.clone();
                minus.text.projection[idx] -= H;
                worst = worst.max(rel_err(a, (loss(&plus) - loss(&minus)) / (2.0 * H)));
            }
            for (i, &a) in g.bias.iter().enumerate() {
                let mut plus = params.clone();
                plus.text.bias[i] += H;
                let mut minus = params.clone();
                minus.text.bias[i] -= H;
                worst = worst.max(rel_err(a, (loss(&plus) - loss(&minus)) / (2.0 * H)));
            }
        }
        Phase::Merger => {
            let analytic = grads.merger.expect("merger gradients").values();
            let MergerParams::Combiner(base) = &params.merger else { panic!("merger phase needs the combiner") };
            let nudged = |i: usize, delta: f64| {
                let mut c: CombinerParams = base.clone();
                let mut k = 0;
                c.for_each_mut(|x| {
                    if k == i {
                        *x += delta;
                    }
                    k += 1;
                });
                Params { text: params.text.clone(), merger: MergerParams::Combiner(c) }
            };
            for (i, &a) in analytic.iter().enumerate() {
                let numeric = (loss(&nudged(i, H)) - loss(&nudged(i, -H))) / (2.0 * H);
                worst = worst.max(rel_err(a, numeric));
            }
        }
    }
    worst
}

fn config(lambda: f64, phase: Phase, merger: MergerKind) -> TrainConfig {
    TrainConfig { lambda, phase, merger, raw_dim: 32, ..TrainConfig::default() }
}

#[test]
fn text_phase_sum_merger_lambda_5_and_10() {
    let (batch, params) = fixture(7, MergerKind::Sum);
    for lambda in [5.0, 10.0] {
        let e = max_error(&batch, &params, &config(lambda, Phase::TextEncoder, MergerKind::Sum));
        assert!(e < 1e-4, "λ={lambda}: {e}");
    }
}

#[test]
fn text_phase_combiner() {
    let (batch, params) = fixture(8, MergerKind::Combiner);
    let e = max_error(&batch, &params, &config(5.0, Phase::TextEncoder, MergerKind::Combiner));
    assert!(e < 1e-4, "{e}");
}

#[test]
fn merger_phase_combiner_lambda_5_and_10() {
    let (batch, params) = fixture(9, MergerKind::Combiner);
    for lambda in [5.0, 10.0] {
        let e = max_error(&batch, &params, &config(lambda, Phase::Merger, MergerKind::Combiner));
        assert!(e < 1e-4, "λ={lambda}: {e}");
    }
}

#[test]
fn blend_endpoints_and_disabled_cycle() {
    let (batch, params) = fixture(10, MergerKind::Sum);
    for omega in [0.0, 1.0] {
        let cfg = TrainConfig { omega, ..config(5.0, Phase::TextEncoder, MergerKind::Sum) };
        assert!(max_error(&batch, &params, &cfg) < 1e-4, "ω={omega}");
    }
    let cfg = TrainConfig { cyclic_enabled: false, ..config(5.0, Phase::TextEncoder, MergerKind::Sum) };
    assert!(max_error(&batch, &params, &cfg) < 1e-4);
}
