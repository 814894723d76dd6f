//! Denoising score matching: train the feed-forward denoiser that backs
//! [`DenoiserPrior`](crate::priors::DenoiserPrior).
//!
//! Training regresses D(x0 + sigma*n; sigma) onto x0 with sigma drawn
//! log-uniformly over the configured range and unit loss weight. Plain SGD
//! with a fixed step is the default; Adam is available through the config.

mod network;

pub use network::DenoiserNetwork;
use network::Gradients;

use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DigError, Result};
use crate::numeric::{norm_sq, standard_normal, uniform01};

/// Current model-file schema version.
pub const MODEL_VERSION: u32 = 1;

/// Parameter update rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Training configuration; every field has a workable default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hidden layer widths.
    pub widths: Vec<usize>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Fraction of the dataset held out for the post-training loss report.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            widths: vec![256, 256, 256],
            sigma_min: 0.01,
            sigma_max: 10.0,
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.02,
            optimizer: Optimizer::Sgd,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(DigError::InvalidArgument("widths must be non-empty".into()));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max) {
            return Err(DigError::InvalidArgument(format!(
                "need 0 < sigma_min < sigma_max, got [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(DigError::InvalidArgument(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(DigError::InvalidArgument("learning_rate must be > 0".into()));
        }
        if !(0.0..=0.5).contains(&self.holdout_fraction) {
            return Err(DigError::InvalidArgument(
                "holdout_fraction must lie in [0, 0.5]".into(),
            ));
        }
        Ok(())
    }
}

/// Result of [`train`]: the network plus its loss bookkeeping.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: DenoiserNetwork,
    /// Per-step minibatch losses, in order.
    pub history: Vec<f64>,
    /// Denoising loss on the held-out split (fixed evaluation draws).
    pub holdout_loss: f64,
    /// Loss of the predict-zero baseline on the same split.
    pub baseline_loss: f64,
}

/// One supervised item: a clean signal with its noise realization.
struct TrainItem {
    clean: Vec<f64>,
    sigma: f64,
    noisy: Vec<f64>,
}

fn draw_items(
    data: &[Vec<f64>],
    indices: &[usize],
    sigma_range: (f64, f64),
    rng: &mut dyn RngCore,
) -> Vec<TrainItem> {
    let (lo, hi) = (sigma_range.0.ln(), sigma_range.1.ln());
    indices
        .iter()
        .map(|&i| {
            let clean = data[i].clone();
            let u: f64 = uniform01(rng);
            let sigma = (lo + u * (hi - lo)).exp();
            let noisy: Vec<f64> = clean
                .iter()
                .map(|&x| x + sigma * standard_normal(rng))
                .collect();
            TrainItem { clean, sigma, noisy }
        })
        .collect()
}

/// Mean ||D(x + sigma*n; sigma) - x||^2 / n over `batch` for an arbitrary
/// denoiser map. Noise levels are drawn log-uniformly over `sigma_range`.
pub fn denoiser_loss<F>(denoise: F, batch: &[Vec<f64>], sigma_range: (f64, f64), rng: &mut dyn RngCore) -> f64
where
    F: Fn(&[f64], f64) -> Vec<f64>,
{
    assert!(!batch.is_empty(), "batch must be non-empty");
    let indices: Vec<usize> = (0..batch.len()).collect();
    let items = draw_items(batch, &indices, sigma_range, rng);
    let n = batch[0].len() as f64;
    items
        .iter()
        .map(|it| {
            let d = denoise(&it.noisy, it.sigma);
            d.iter()
                .zip(&it.clean)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<f64>()
                / n
        })
        .sum::<f64>()
        / items.len() as f64
}

/// Denoising-score-matching loss of a network on a batch of clean signals.
pub fn dsm_loss(net: &DenoiserNetwork, batch: &[Vec<f64>], rng: &mut dyn RngCore) -> f64 {
    denoiser_loss(
        |z, s| net.forward(z, s).expect("dimensions fixed by caller"),
        batch,
        net.sigma_range(),
        rng,
    )
}

/// Batch loss and averaged parameter gradients for fixed items.
fn loss_and_grad(net: &DenoiserNetwork, items: &[TrainItem]) -> (f64, Gradients) {
    let n = net.signal_len() as f64;
    let mut grads = Gradients::zeros_like(net);
    let mut loss = 0.0;
    for it in items {
        let tape = net.forward_tape(&it.noisy, it.sigma);
        let out = tape.output();
        let mut dl_dout = Vec::with_capacity(out.len());
        for i in 0..out.len() {
            let d = it.noisy[i] + out[i] - it.clean[i];
            loss += d * d / n;
            dl_dout.push(2.0 * d / n);
        }
        net.backward(&tape, &dl_dout, &mut grads);
    }
    let count = items.len() as f64;
    grads.scale(1.0 / count);
    (loss / count, grads)
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    t: u64,
}

fn apply_step(
    net: &mut DenoiserNetwork,
    grads: &Gradients,
    cfg: &TrainConfig,
    adam: &mut Option<AdamState>,
) {
    let lr = cfg.learning_rate;
    match (&cfg.optimizer, adam) {
        (Optimizer::Sgd, _) => {
            let mut update = grads.clone();
            update.scale(-lr);
            net.apply_update(&update);
        }
        (Optimizer::Adam { beta1, beta2, epsilon }, Some(state)) => {
            state.t += 1;
            let bc1 = 1.0 - beta1.powi(state.t as i32);
            let bc2 = 1.0 - beta2.powi(state.t as i32);
            let mut update = Gradients::zeros_like(net);
            for li in 0..grads.layers.len() {
                let (gw, gb) = &grads.layers[li];
                let (mw, mb) = &mut state.m.layers[li];
                let (vw, vb) = &mut state.v.layers[li];
                let (uw, ub) = &mut update.layers[li];
                for i in 0..gw.len() {
                    mw[i] = beta1 * mw[i] + (1.0 - beta1) * gw[i];
                    vw[i] = beta2 * vw[i] + (1.0 - beta2) * gw[i] * gw[i];
                    uw[i] = -lr * (mw[i] / bc1) / ((vw[i] / bc2).sqrt() + epsilon);
                }
                for i in 0..gb.len() {
                    mb[i] = beta1 * mb[i] + (1.0 - beta1) * gb[i];
                    vb[i] = beta2 * vb[i] + (1.0 - beta2) * gb[i] * gb[i];
                    ub[i] = -lr * (mb[i] / bc1) / ((vb[i] / bc2).sqrt() + epsilon);
                }
            }
            net.apply_update(&update);
        }
        (Optimizer::Adam { .. }, None) => unreachable!("adam state initialized before the loop"),
    }
}

/// Train a denoiser on a dataset of clean signals.
///
/// Deterministic for a fixed config: data order, noise draws and parameter
/// updates all flow from `cfg.seed`. Divergence (non-finite loss or
/// parameters) aborts with the offending step index.
pub fn train(data: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(DigError::InvalidArgument("dataset must be non-empty".into()));
    }
    let n = data[0].len();
    if n == 0 || data.iter().any(|s| s.len() != n) {
        return Err(DigError::InvalidArgument(
            "all signals must share a non-zero length".into(),
        ));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut net = DenoiserNetwork::init(n, &cfg.widths, cfg.sigma_min, cfg.sigma_max, &mut rng)?;

    // Deterministic holdout split.
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_holdout = ((data.len() as f64 * cfg.holdout_fraction).round() as usize)
        .min(data.len().saturating_sub(1));
    let (holdout_idx, train_idx) = order.split_at(n_holdout);
    let train_idx = train_idx.to_vec();
    let holdout_idx = if holdout_idx.is_empty() {
        train_idx.clone()
    } else {
        holdout_idx.to_vec()
    };

    let mut adam = match cfg.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: Gradients::zeros_like(&net),
            v: Gradients::zeros_like(&net),
            t: 0,
        }),
        Optimizer::Sgd => None,
    };

    let batch = cfg.batch_size.min(train_idx.len());
    let mut history = Vec::new();
    let mut step = 0usize;
    let mut epoch_order = train_idx.clone();
    for _ in 0..cfg.epochs {
        epoch_order.shuffle(&mut rng);
        for chunk in epoch_order.chunks(batch) {
            let items = draw_items(data, chunk, (cfg.sigma_min, cfg.sigma_max), &mut rng);
            let (loss, grads) = loss_and_grad(&net, &items);
            apply_step(&mut net, &grads, cfg, &mut adam);
            if !loss.is_finite() || !net.params_finite() {
                return Err(DigError::TrainingDiverged { step });
            }
            history.push(loss);
            step += 1;
        }
    }

    // Fixed evaluation draws so the reported losses are reproducible.
    let mut eval_rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let holdout: Vec<Vec<f64>> = holdout_idx.iter().map(|&i| data[i].clone()).collect();
    let holdout_loss = dsm_loss(&net, &holdout, &mut eval_rng);
    let baseline_loss =
        holdout.iter().map(|s| norm_sq(s) / n as f64).sum::<f64>() / holdout.len() as f64;

    Ok(TrainOutcome {
        network: net,
        history,
        holdout_loss,
        baseline_loss,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    n: usize,
    widths: Vec<usize>,
    sigma_min: f64,
    sigma_max: f64,
    /// Row-major weight matrices, little-endian f64, base64.
    weights: Vec<String>,
    biases: Vec<String>,
}

fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    BASE64.encode(bytes)
}

fn decode_f64s(text: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = BASE64
        .decode(text)
        .map_err(|e| DigError::ModelFormat(format!("corrupt base64 payload: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(DigError::ModelFormat(format!(
            "payload holds {} bytes, expected {}",
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Serialize a network to the single-document JSON model format.
pub fn save_model(net: &DenoiserNetwork, path: &Path) -> Result<()> {
    let (sigma_min, sigma_max) = net.sigma_range();
    let file = ModelFile {
        version: MODEL_VERSION,
        n: net.signal_len(),
        widths: net.widths().to_vec(),
        sigma_min,
        sigma_max,
        weights: net.layers.iter().map(|l| encode_f64s(&l.w)).collect(),
        biases: net.layers.iter().map(|l| encode_f64s(&l.b)).collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Load a network saved by [`save_model`]; bit-exact round trip.
pub fn load_model(path: &Path) -> Result<DenoiserNetwork> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| DigError::ModelFormat(format!("corrupt model file: {e}")))?;
    if file.version != MODEL_VERSION {
        return Err(DigError::ModelFormat(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            file.version
        )));
    }
    if file.n == 0 || file.widths.is_empty() || file.widths.contains(&0) {
        return Err(DigError::ModelFormat("degenerate model dimensions".into()));
    }
    if !(file.sigma_min > 0.0 && file.sigma_min < file.sigma_max) {
        return Err(DigError::ModelFormat("invalid sigma range".into()));
    }
    let mut dims = Vec::with_capacity(file.widths.len() + 2);
    dims.push(file.n + 1);
    dims.extend_from_slice(&file.widths);
    dims.push(file.n);
    if file.weights.len() != dims.len() - 1 || file.biases.len() != dims.len() - 1 {
        return Err(DigError::ModelFormat(format!(
            "expected {} layers, file holds {} weight / {} bias blocks",
            dims.len() - 1,
            file.weights.len(),
            file.biases.len()
        )));
    }
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (li, pair) in dims.windows(2).enumerate() {
        let (in_dim, out_dim) = (pair[0], pair[1]);
        layers.push(network::Layer {
            w: decode_f64s(&file.weights[li], in_dim * out_dim)?,
            b: decode_f64s(&file.biases[li], out_dim)?,
            in_dim,
            out_dim,
        });
    }
    Ok(DenoiserNetwork::from_parts(
        file.n,
        file.widths,
        file.sigma_min,
        file.sigma_max,
        layers,
    ))
}
