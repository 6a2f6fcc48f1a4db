//! Training and evaluation: per-field normalization, training-noise
//! injection, Adam with stepwise learning-rate decay, single-step delta
//! supervision, autoregressive rollout, and RMSE metrics.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bistride::Hierarchy;
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::mesh::Trajectory;
use crate::model::{model_backward, model_forward, BsmsParams, ModelConfig, NodeInputs};

/// Standard deviations are floored so constant fields normalize to zero
/// instead of blowing up.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-component affine statistics for one named field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Normalization statistics for inputs and for output deltas.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Normalizer {
    pub inputs: BTreeMap<String, FieldStats>,
    pub outputs: BTreeMap<String, FieldStats>,
}

fn stats_over<'a>(mats: impl Iterator<Item = &'a Matrix> + Clone, cols: usize) -> FieldStats {
    let mut mean = vec![0.0; cols];
    let mut count = 0usize;
    for m in mats.clone() {
        for i in 0..m.rows {
            for (acc, &v) in mean.iter_mut().zip(m.row(i)) {
                *acc += v;
            }
        }
        count += m.rows;
    }
    for v in &mut mean {
        *v /= count.max(1) as f64;
    }
    let mut var = vec![0.0; cols];
    for m in mats {
        for i in 0..m.rows {
            for ((acc, &v), &mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
    }
    let std = var
        .iter()
        .map(|&v| (v / count.max(1) as f64).sqrt().max(STD_FLOOR))
        .collect();
    FieldStats { mean, std }
}

/// Time-delta matrices next - current for one field of one trajectory.
fn deltas(frames: &[Matrix]) -> Vec<Matrix> {
    frames
        .windows(2)
        .map(|w| {
            let mut d = w[1].clone();
            for (x, &y) in d.data.iter_mut().zip(&w[0].data) {
                *x -= y;
            }
            d
        })
        .collect()
}

/// Fit input statistics over all frames that feed the encoder and output
/// statistics over the one-step deltas of the predicted fields. Input
/// frames exclude the final frame of each trajectory (it is never an input).
pub fn fit_normalizer(trajectories: &[&Trajectory], cfg: &ModelConfig) -> Result<Normalizer> {
    if trajectories.is_empty() {
        return Err(Error::invalid("no trajectories to fit on"));
    }
    let mut norm = Normalizer::default();
    for (name, &comps) in cfg.input_fields.iter().zip(&cfg.input_components) {
        let mut mats: Vec<&Matrix> = Vec::new();
        for t in trajectories {
            let frames = t
                .fields
                .get(name)
                .ok_or_else(|| Error::invalid(format!("trajectory lacks input field '{name}'")))?;
            let last = frames.len().saturating_sub(1).max(1);
            mats.extend(frames[..last].iter());
        }
        if mats.iter().any(|m| m.cols != comps) {
            return Err(Error::dim(format!("field '{name}' width != {comps}")));
        }
        norm.inputs.insert(name.clone(), stats_over(mats.iter().copied(), comps));
    }
    for (name, &comps) in cfg.output_fields.iter().zip(&cfg.output_components) {
        let mut mats: Vec<Matrix> = Vec::new();
        for t in trajectories {
            let frames = t
                .fields
                .get(name)
                .ok_or_else(|| Error::invalid(format!("trajectory lacks output field '{name}'")))?;
            if frames.len() < 2 {
                return Err(Error::invalid(format!(
                    "field '{name}' needs at least 2 frames to form deltas"
                )));
            }
            mats.extend(deltas(frames));
        }
        if mats.iter().any(|m| m.cols != comps) {
            return Err(Error::dim(format!("field '{name}' width != {comps}")));
        }
        norm.outputs.insert(name.clone(), stats_over(mats.iter(), comps));
    }
    Ok(norm)
}

pub fn normalize_field(m: &Matrix, stats: &FieldStats) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows {
        for ((v, &mu), &sd) in out.row_mut(i).iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = (*v - mu) / sd;
        }
    }
    out
}

pub fn denormalize_field(m: &Matrix, stats: &FieldStats) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows {
        for ((v, &mu), &sd) in out.row_mut(i).iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = *v * sd + mu;
        }
    }
    out
}

/// One supervised pair: raw input frame fields and the raw target delta per
/// output field.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub inputs: BTreeMap<String, Matrix>,
    pub target_delta: BTreeMap<String, Matrix>,
}

/// Expand trajectories into consecutive-frame training pairs.
pub fn training_pairs(trajectories: &[&Trajectory], cfg: &ModelConfig) -> Result<Vec<TrainPair>> {
    let mut pairs = Vec::new();
    for t in trajectories {
        let steps = t
            .fields
            .values()
            .map(|f| f.len())
            .min()
            .ok_or_else(|| Error::invalid("trajectory has no fields"))?;
        for s in 0..steps.saturating_sub(1) {
            let mut inputs = BTreeMap::new();
            for name in &cfg.input_fields {
                let frames = t
                    .fields
                    .get(name)
                    .ok_or_else(|| Error::invalid(format!("missing field '{name}'")))?;
                inputs.insert(name.clone(), frames[s].clone());
            }
            let mut target_delta = BTreeMap::new();
            for name in &cfg.output_fields {
                let frames = t
                    .fields
                    .get(name)
                    .ok_or_else(|| Error::invalid(format!("missing field '{name}'")))?;
                let mut d = frames[s + 1].clone();
                for (x, &y) in d.data.iter_mut().zip(&frames[s].data) {
                    *x -= y;
                }
                target_delta.insert(name.clone(), d);
            }
            pairs.push(TrainPair { inputs, target_delta });
        }
    }
    Ok(pairs)
}

/// Add zero-mean Gaussian noise to the dynamic input fields of a pair and
/// subtract the same noise from the matching target deltas, so the
/// supervised next state is unchanged.
pub fn inject_noise(pair: &TrainPair, sigma: f64, rng: &mut ChaCha8Rng) -> TrainPair {
    let mut out = pair.clone();
    for (name, m) in &mut out.inputs {
        if let Some(t) = out.target_delta.get_mut(name) {
            for (idx, v) in m.data.iter_mut().enumerate() {
                let eps: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * sigma;
                *v += eps;
                t.data[idx] -= eps;
            }
        }
    }
    out
}

/// Adam with the standard bias correction. `lr(t)` halves after each third
/// of the configured step budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub base_lr: f64,
    pub total_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, base_lr: f64, total_steps: usize) -> Adam {
        Adam {
            base_lr,
            total_steps,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    /// Learning rate for a given zero-based step index.
    pub fn lr_at(&self, step: usize) -> f64 {
        let third = (self.total_steps / 3).max(1);
        self.base_lr * 0.5f64.powi((step / third).min(2) as i32)
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dim(format!(
                "optimizer sized for {} params, got {}/{}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let lr = self.lr_at(self.step);
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Assemble normalized encoder inputs for one pair.
fn normalized_inputs(
    pair: &TrainPair,
    node_type: &[u8],
    norm: &Normalizer,
) -> Result<NodeInputs> {
    let mut fields = BTreeMap::new();
    for (name, m) in &pair.inputs {
        let stats = norm
            .inputs
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no input stats for '{name}'")))?;
        fields.insert(name.clone(), normalize_field(m, stats));
    }
    Ok(NodeInputs {
        node_type: node_type.to_vec(),
        fields,
    })
}

/// Normalized target delta columns, concatenated in output-field order.
fn normalized_target(pair: &TrainPair, cfg: &ModelConfig, norm: &Normalizer) -> Result<Matrix> {
    let n = pair
        .target_delta
        .values()
        .next()
        .map(|m| m.rows)
        .ok_or_else(|| Error::invalid("pair has no targets"))?;
    let mut out = Matrix::zeros(n, cfg.output_dim());
    let mut col = 0;
    for (name, &comps) in cfg.output_fields.iter().zip(&cfg.output_components) {
        let raw = pair
            .target_delta
            .get(name)
            .ok_or_else(|| Error::invalid(format!("pair lacks target '{name}'")))?;
        let stats = norm
            .outputs
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no output stats for '{name}'")))?;
        let nm = normalize_field(raw, stats);
        for i in 0..n {
            out.row_mut(i)[col..col + comps].copy_from_slice(nm.row(i));
        }
        col += comps;
    }
    Ok(out)
}

/// One gradient step over a batch of pairs (mean L2 over all pairs). The
/// pairs are visited in slice order so accumulation is deterministic.
/// Returns the batch loss.
pub fn train_step(
    params: &mut BsmsParams,
    opt: &mut Adam,
    hier: &Hierarchy,
    node_type: &[u8],
    pairs: &[&TrainPair],
    cfg: &ModelConfig,
    norm: &Normalizer,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    for pair in pairs {
        let sample = normalized_inputs(pair, node_type, norm)?;
        let target = normalized_target(pair, cfg, norm)?;
        let trace = model_forward(params, hier, &sample, cfg)?;
        if trace.output.rows != target.rows {
            return Err(Error::dim("prediction/target row mismatch"));
        }
        let count = (trace.output.data.len() * pairs.len()) as f64;
        let mut d_out = trace.output.clone();
        for (d, &t) in d_out.data.iter_mut().zip(&target.data) {
            let diff = *d - t;
            loss += diff * diff / count;
            *d = 2.0 * diff / count;
        }
        let g = model_backward(params, hier, &trace, &d_out, cfg)?;
        grads.accumulate(&g);
    }
    if !loss.is_finite() {
        return Err(Error::Numerical("non-finite training loss".into()));
    }
    let mut flat = params.flatten();
    opt.update(&mut flat, &grads.flatten())?;
    params.assign_from_flat(&flat);
    Ok(loss)
}

/// One-step prediction: normalized forward pass, denormalized delta added
/// to the current state per output field.
pub fn predict_step(
    params: &BsmsParams,
    hier: &Hierarchy,
    node_type: &[u8],
    state: &BTreeMap<String, Matrix>,
    cfg: &ModelConfig,
    norm: &Normalizer,
) -> Result<BTreeMap<String, Matrix>> {
    let mut fields = BTreeMap::new();
    for name in &cfg.input_fields {
        let m = state
            .get(name)
            .ok_or_else(|| Error::invalid(format!("state lacks field '{name}'")))?;
        let stats = norm
            .inputs
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no input stats for '{name}'")))?;
        fields.insert(name.clone(), normalize_field(m, stats));
    }
    let sample = NodeInputs {
        node_type: node_type.to_vec(),
        fields,
    };
    let trace = model_forward(params, hier, &sample, cfg)?;
    let mut next = state.clone();
    let mut col = 0;
    for (name, &comps) in cfg.output_fields.iter().zip(&cfg.output_components) {
        let stats = norm
            .outputs
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no output stats for '{name}'")))?;
        let n = trace.output.rows;
        let mut slab = Matrix::zeros(n, comps);
        for i in 0..n {
            slab.row_mut(i)
                .copy_from_slice(&trace.output.row(i)[col..col + comps]);
        }
        let delta = denormalize_field(&slab, stats);
        let cur = next
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("state lacks field '{name}'")))?;
        cur.add_assign(&delta);
        if !cur.is_finite() {
            return Err(Error::Numerical(format!("field '{name}' diverged during rollout")));
        }
        col += comps;
    }
    Ok(next)
}

/// Autoregressive rollout from the first frame of `truth`, one predicted
/// frame per remaining ground-truth frame. Static input fields (anything
/// not predicted) are held from the matching ground-truth frame.
pub fn rollout(
    params: &BsmsParams,
    hier: &Hierarchy,
    node_type: &[u8],
    truth: &Trajectory,
    cfg: &ModelConfig,
    norm: &Normalizer,
) -> Result<BTreeMap<String, Vec<Matrix>>> {
    let steps = truth
        .fields
        .values()
        .map(|f| f.len())
        .min()
        .ok_or_else(|| Error::invalid("trajectory has no fields"))?;
    if steps < 2 {
        return Err(Error::invalid("rollout needs at least 2 frames"));
    }
    let mut state: BTreeMap<String, Matrix> = BTreeMap::new();
    for name in cfg.input_fields.iter().chain(&cfg.output_fields) {
        let frames = truth
            .fields
            .get(name)
            .ok_or_else(|| Error::invalid(format!("trajectory lacks field '{name}'")))?;
        state.insert(name.clone(), frames[0].clone());
    }
    let mut out: BTreeMap<String, Vec<Matrix>> = cfg
        .output_fields
        .iter()
        .map(|name| (name.clone(), vec![state[name].clone()]))
        .collect();
    for s in 1..steps {
        // Refresh exogenous inputs from ground truth; predicted fields roll.
        for name in &cfg.input_fields {
            if !cfg.output_fields.contains(name) {
                state.insert(name.clone(), truth.fields[name][s - 1].clone());
            }
        }
        state = predict_step(params, hier, node_type, &state, cfg, norm)?;
        for name in &cfg.output_fields {
            out.get_mut(name).unwrap().push(state[name].clone());
        }
    }
    Ok(out)
}

/// Root-mean-square error over all nodes and components of the listed
/// fields, per step and aggregated at 1, 50 (clamped to the horizon), and
/// the full horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutMetrics {
    pub per_step_rmse: Vec<f64>,
    pub rmse_1: f64,
    pub rmse_50: f64,
    pub rmse_all: f64,
}

pub fn eval_metrics(
    predicted: &BTreeMap<String, Vec<Matrix>>,
    truth: &Trajectory,
    fields: &[String],
) -> Result<RolloutMetrics> {
    let mut per_step_sq: Vec<f64> = Vec::new();
    let mut per_step_count: Vec<usize> = Vec::new();
    for name in fields {
        let pred = predicted
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no prediction for '{name}'")))?;
        let tru = truth
            .fields
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no ground truth for '{name}'")))?;
        let steps = pred.len().min(tru.len());
        if steps < 2 {
            return Err(Error::invalid("need at least one step beyond the initial frame"));
        }
        per_step_sq.resize(per_step_sq.len().max(steps - 1), 0.0);
        per_step_count.resize(per_step_count.len().max(steps - 1), 0);
        for s in 1..steps {
            if pred[s].rows != tru[s].rows || pred[s].cols != tru[s].cols {
                return Err(Error::dim(format!("shape mismatch for '{name}' at step {s}")));
            }
            for (p, t) in pred[s].data.iter().zip(&tru[s].data) {
                per_step_sq[s - 1] += (p - t) * (p - t);
            }
            per_step_count[s - 1] += pred[s].data.len();
        }
    }
    if per_step_sq.is_empty() {
        return Err(Error::invalid("no fields to evaluate"));
    }
    let per_step_rmse: Vec<f64> = per_step_sq
        .iter()
        .zip(&per_step_count)
        .map(|(&sq, &c)| (sq / c as f64).sqrt())
        .collect();
    let horizon_rmse = |k: usize| -> f64 {
        let k = k.min(per_step_sq.len());
        let sq: f64 = per_step_sq[..k].iter().sum();
        let c: usize = per_step_count[..k].iter().sum();
        (sq / c as f64).sqrt()
    };
    Ok(RolloutMetrics {
        rmse_1: horizon_rmse(1),
        rmse_50: horizon_rmse(50),
        rmse_all: horizon_rmse(per_step_sq.len()),
        per_step_rmse,
    })
}
