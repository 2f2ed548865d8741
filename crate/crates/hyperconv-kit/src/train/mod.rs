//! Optimizers, the deterministic training loop, evaluation, and
//! checkpoint persistence.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::Model;
use crate::data::{sample_seed, PairedSample};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricConfig};
use crate::tensor::{Scalar, Tape, Tensor};

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, TensorRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptimConfig {
    pub kind: OptimKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            kind: OptimKind::Adam,
            lr: 5e-6,
            beta1: 0.7,
            beta2: 0.95,
            eps: 1e-8,
            batch: 8,
            epochs: 1,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 && self.lr != 0.0 {
            return Err(Error::invalid("OptimConfig", "lr must be >= 0"));
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::invalid("OptimConfig", "betas must lie in (0, 1)"));
        }
        if self.eps <= 0.0 || self.batch == 0 {
            return Err(Error::invalid("OptimConfig", "eps must be > 0 and batch >= 1"));
        }
        Ok(())
    }
}

/// First/second moment accumulators for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros(numel: usize) -> Self {
        AdamState { m: vec![T::zero(); numel], v: vec![T::zero(); numel] }
    }
}

/// One bias-corrected Adam update (`t` is the 1-based step count).
pub fn adam_step<T: Scalar>(
    theta: &mut [T],
    grad: &[T],
    state: &mut AdamState<T>,
    t: u64,
    cfg: &OptimConfig,
) -> Result<()> {
    if grad.len() != theta.len() || state.m.len() != theta.len() {
        return Err(Error::invalid(
            "adam_step",
            format!(
                "param/grad/state lengths differ: {} / {} / {}",
                theta.len(),
                grad.len(),
                state.m.len()
            ),
        ));
    }
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let one = T::one();
    let bc1 = T::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let bc2 = T::from_f64(1.0 - cfg.beta2.powi(t as i32));
    let lr = T::from_f64(cfg.lr);
    let eps = T::from_f64(cfg.eps);
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (one - b1) * g;
        state.v[i] = b2 * state.v[i] + (one - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] = theta[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Plain gradient descent update.
pub fn sgd_step<T: Scalar>(theta: &mut [T], grad: &[T], lr: f64) -> Result<()> {
    if grad.len() != theta.len() {
        return Err(Error::invalid(
            "sgd_step",
            format!("param/grad lengths differ: {} / {}", theta.len(), grad.len()),
        ));
    }
    let lr = T::from_f64(lr);
    for i in 0..theta.len() {
        theta[i] = theta[i] - lr * grad[i];
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// mse + (1 - ms_ssim) on the step's batch
    pub loss: f64,
    /// plain mse on the same batch
    pub mse: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub history: Vec<StepRecord>,
}

fn to_t<T: Scalar>(t: &Tensor<f32>) -> Tensor<T> {
    let data = t.data().iter().map(|&v| T::from_f64(v as f64)).collect();
    Tensor::from_vec(data, t.shape()).expect("shape preserved")
}

fn batch_tensors<T: Scalar>(samples: &[&PairedSample]) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut raws = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        let r = to_t::<T>(&s.raw);
        let t = to_t::<T>(&s.target);
        let mut rs = vec![1];
        rs.extend_from_slice(r.shape());
        let mut ts = vec![1];
        ts.extend_from_slice(t.shape());
        raws.push(r.reshape(&rs)?);
        targets.push(t.reshape(&ts)?);
    }
    let raw_refs: Vec<&Tensor<T>> = raws.iter().collect();
    let target_refs: Vec<&Tensor<T>> = targets.iter().collect();
    Ok((
        Tensor::concat(&raw_refs, 0)?,
        Tensor::concat(&target_refs, 0)?,
    ))
}

fn param_norm_diagnostics<T: Scalar>(model: &dyn Model<T>) -> String {
    let mut norms: Vec<(String, f64)> = Vec::new();
    model.visit_params(&mut |name, t| {
        let n = t.data().iter().map(|&v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        norms.push((name, n));
    });
    norms.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    norms
        .iter()
        .take(3)
        .map(|(n, v)| format!("{n}={v:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Runs `cfg.epochs` seeded passes over the dataset, one optimizer step
/// per batch. Deterministic for a fixed seed; aborts on non-finite loss.
pub fn train<T: Scalar>(
    model: &mut dyn Model<T>,
    dataset: &[PairedSample],
    cfg: &OptimConfig,
) -> Result<TrainReport> {
    train_capped(model, dataset, cfg, None)
}

/// `train` with an optional hard cap on the number of optimizer steps.
pub fn train_capped<T: Scalar>(
    model: &mut dyn Model<T>,
    dataset: &[PairedSample],
    cfg: &OptimConfig,
    max_steps: Option<usize>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("train", "dataset is empty"));
    }
    for s in dataset {
        s.validate()?;
        if s.target.shape() != dataset[0].target.shape() {
            return Err(Error::invalid(
                "train",
                format!("sample {} shape differs from the first sample", s.id),
            ));
        }
    }
    let ts = dataset[0].target.shape();
    let metric_cfg = MetricConfig::for_size(ts[1], ts[2])?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut adam: HashMap<String, AdamState<T>> = HashMap::new();
    let mut report = TrainReport::default();
    let mut step = 0usize;

    'epochs: for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            if max_steps.is_some_and(|cap| step >= cap) {
                break 'epochs;
            }
            step += 1;
            let samples: Vec<&PairedSample> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (x, target) = batch_tensors::<T>(&samples)?;

            let tape = Tape::new();
            let mut leaves: Vec<(String, Tensor<T>)> = Vec::new();
            model.visit_params_mut(&mut |name, t| {
                let leaf = tape.leaf(t);
                leaves.push((name, leaf.clone()));
                *t = leaf;
            });

            let pred = model.forward(&x)?;
            let loss = metrics::training_loss(&pred, &target, &metric_cfg)?;
            let loss_val = loss.item()?.as_f64();
            if !loss_val.is_finite() {
                return Err(Error::invalid(
                    "train",
                    format!(
                        "non-finite loss {loss_val} at step {step}; largest param norms: {}",
                        param_norm_diagnostics(model)
                    ),
                ));
            }
            let mse_val = metrics::mse(&pred, &target)?.item()?.as_f64();
            let grads = tape.backward(&loss)?;

            let mut updated: HashMap<String, Tensor<T>> = HashMap::new();
            for (name, leaf) in &leaves {
                let mut theta = leaf.data().to_vec();
                let grad = match grads.get(leaf) {
                    Some(g) => g.data().to_vec(),
                    None => vec![T::zero(); theta.len()],
                };
                match cfg.kind {
                    OptimKind::Adam => {
                        let state = adam
                            .entry(name.clone())
                            .or_insert_with(|| AdamState::zeros(theta.len()));
                        adam_step(&mut theta, &grad, state, step as u64, cfg)?;
                    }
                    OptimKind::Sgd => sgd_step(&mut theta, &grad, cfg.lr)?,
                }
                let t = Tensor::from_vec(theta, leaf.shape())?;
                if !t.all_finite() {
                    return Err(Error::invalid(
                        "train",
                        format!("parameter {name} became non-finite at step {step}"),
                    ));
                }
                updated.insert(name.clone(), t);
            }
            model.visit_params_mut(&mut |name, t| {
                *t = updated.remove(&name).expect("visited params are stable");
            });

            report.history.push(StepRecord { step, loss: loss_val, mse: mse_val });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
}

/// Metrics for a single prediction/target pair.
pub fn eval_pair<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<EvalMetrics> {
    let s = target.shape();
    let cfg = MetricConfig::for_size(s[s.len() - 2], s[s.len() - 1])?;
    Ok(EvalMetrics {
        mse: metrics::mse(pred, target)?.item()?.as_f64(),
        psnr: metrics::psnr(pred, target, cfg.dynamic_range)?,
        ssim: metrics::ssim(pred, target, &cfg)?.item()?.as_f64(),
        ms_ssim: metrics::ms_ssim(pred, target, &cfg)?.item()?.as_f64(),
    })
}

/// Forward-passes every sample and averages the four metrics.
pub fn evaluate<T: Scalar>(model: &dyn Model<T>, dataset: &[PairedSample]) -> Result<EvalMetrics> {
    if dataset.is_empty() {
        return Err(Error::invalid("evaluate", "dataset is empty"));
    }
    let mut acc = EvalMetrics { mse: 0.0, psnr: 0.0, ssim: 0.0, ms_ssim: 0.0 };
    for s in dataset {
        let (x, target) = batch_tensors::<T>(&[s])?;
        let pred = model.forward(&x)?;
        let m = eval_pair(&pred, &target)?;
        acc.mse += m.mse;
        acc.psnr += m.psnr;
        acc.ssim += m.ssim;
        acc.ms_ssim += m.ms_ssim;
    }
    let n = dataset.len() as f64;
    Ok(EvalMetrics {
        mse: acc.mse / n,
        psnr: acc.psnr / n,
        ssim: acc.ssim / n,
        ms_ssim: acc.ms_ssim / n,
    })
}

/// Seeded id-hash partition into (train, eval) with roughly
/// `eval_fraction` of the samples held out.
pub fn split_dataset(
    samples: Vec<PairedSample>,
    seed: u64,
    eval_fraction: f64,
) -> (Vec<PairedSample>, Vec<PairedSample>) {
    let cut = (eval_fraction.clamp(0.0, 1.0) * 1000.0) as u64;
    samples
        .into_iter()
        .partition(|s| sample_seed(seed, &s.id) % 1000 >= cut)
}
