//! Coordinate datasets and the encoding optimization: overfit a model to a
//! single signal by minimizing per-coordinate MSE with Adam.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{Adam, AutodiffError};
use crate::io::{DataError, SignalTensor, ValueDomain};
use crate::model::{ConfigError, Inr, ModelConfig, QuinrModel, SirenConfig, SirenModel};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("gradient failure at step {step}")]
    Gradient {
        step: usize,
        #[source]
        source: AutodiffError,
    },
    #[error("steps must be at least 1")]
    NoSteps,
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("model maps {model_in} → {model_out} but the dataset is {data_in} → {data_out}")]
    Shape {
        model_in: usize,
        model_out: usize,
        data_in: usize,
        data_out: usize,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Per-channel min/max used to map samples into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelNorm {
    pub min: f32,
    pub max: f32,
}

impl ChannelNorm {
    /// `max − min`, or 1 for a constant channel.
    pub fn span(&self) -> f64 {
        let span = self.max as f64 - self.min as f64;
        if span > 0.0 {
            span
        } else {
            1.0
        }
    }

    pub fn normalize(&self, v: f32) -> f64 {
        (v as f64 - self.min as f64) / self.span()
    }

    pub fn denormalize(&self, y: f64) -> f32 {
        (y * self.span() + self.min as f64) as f32
    }
}

/// Everything needed to map normalized predictions back onto the source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NormMeta {
    pub height: usize,
    pub width: usize,
    pub domain: ValueDomain,
    pub channels: Vec<ChannelNorm>,
}

/// All `(coordinate, value)` pairs of one signal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateDataset {
    pub coords: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    pub meta: NormMeta,
}

impl CoordinateDataset {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn n_out(&self) -> usize {
        self.meta.channels.len()
    }

    pub fn target(&self, i: usize) -> &[f64] {
        let c = self.n_out();
        &self.values[i * c..(i + 1) * c]
    }
}

/// Map `index` on an axis of `len` samples onto `[-1, 1]`; a single-sample
/// axis maps to 0.
pub fn axis_coordinate(index: usize, len: usize) -> f64 {
    if len <= 1 {
        0.0
    } else {
        2.0 * index as f64 / (len - 1) as f64 - 1.0
    }
}

/// Full pixel grid in row-major order, `(x, y) = (column, row)` in `[-1, 1]`.
pub fn coordinate_grid(height: usize, width: usize) -> Vec<[f64; 2]> {
    (0..height)
        .flat_map(|r| {
            (0..width).map(move |c| [axis_coordinate(c, width), axis_coordinate(r, height)])
        })
        .collect()
}

pub fn build_dataset(signal: &SignalTensor) -> CoordinateDataset {
    let c = signal.channels();
    let channels: Vec<ChannelNorm> = (0..c)
        .map(|ch| {
            let (min, max) = signal
                .data()
                .iter()
                .skip(ch)
                .step_by(c)
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            ChannelNorm { min, max }
        })
        .collect();
    let values = signal
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| channels[i % c].normalize(v))
        .collect();
    CoordinateDataset {
        coords: coordinate_grid(signal.height(), signal.width()),
        values,
        meta: NormMeta {
            height: signal.height(),
            width: signal.width(),
            domain: signal.domain(),
            channels,
        },
    }
}

/// Rebuild a signal from normalized predictions (row-major, interleaved).
pub fn denormalize(meta: &NormMeta, normalized: &[f64]) -> Result<SignalTensor, DataError> {
    let c = meta.channels.len();
    let data = normalized
        .iter()
        .enumerate()
        .map(|(i, &y)| meta.channels[i % c].denormalize(y))
        .collect();
    SignalTensor::new(meta.height, meta.width, c, data, meta.domain)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Loss-curve (and progress) interval in steps; 0 disables both.
    pub log_every: usize,
    /// Print `step=… loss=… psnr=…` lines to stderr.
    pub progress: bool,
    /// Full-grid evaluation interval for best-checkpoint tracking when
    /// training on minibatches. Ignored in full-batch mode, where every
    /// step's loss is already a full-grid evaluation.
    pub eval_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 10_000,
            lr: 1e-3,
            batch_size: 1024,
            seed: 0,
            log_every: 100,
            progress: false,
            eval_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// `(step, batch loss)` every `log_every` steps.
    pub loss_curve: Vec<(usize, f64)>,
    /// Full-grid MSE of the returned parameters.
    pub final_mse: f64,
    pub final_psnr: f64,
    /// Step after which the returned parameters were produced (1-based).
    pub best_step: usize,
    pub steps: usize,
    pub seconds: f64,
    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mse: f64,
    /// Normalized-domain PSNR with peak 1; `+∞` for a perfect fit.
    pub psnr: f64,
}

fn normalized_psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Normalized predictions at every coordinate, concatenated in order.
pub fn predict<M: Inr + ?Sized>(model: &M, coords: &[[f64; 2]]) -> Vec<f64> {
    coords
        .par_iter()
        .map(|x| model.forward(x))
        .collect::<Vec<_>>()
        .concat()
}

pub fn evaluate<M: Inr + ?Sized>(model: &M, dataset: &CoordinateDataset) -> Evaluation {
    let pred = predict(model, &dataset.coords);
    let mse = pred
        .iter()
        .zip(&dataset.values)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Evaluation {
        mse,
        psnr: normalized_psnr(mse),
    }
}

/// Decode-side reconstruction: predict the grid and undo normalization.
pub fn reconstruct<M: Inr + ?Sized>(
    model: &M,
    dataset: &CoordinateDataset,
) -> Result<SignalTensor, DataError> {
    denormalize(&dataset.meta, &predict(model, &dataset.coords))
}

fn batch_loss<M: Inr + ?Sized>(
    model: &M,
    dataset: &CoordinateDataset,
    batch: &[usize],
    step: usize,
) -> Result<(f64, Vec<f64>), TrainError> {
    let n_params = model.params().len();
    let per_sample = batch
        .par_iter()
        .map(|&i| {
            let mut g = vec![0.0; n_params];
            let loss = model.loss_and_grad(&dataset.coords[i], dataset.target(i), &mut g)?;
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>, AutodiffError>>()
        .map_err(|source| TrainError::Gradient { step, source })?;
    // Reduce in coordinate order so results do not depend on scheduling.
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = vec![0.0; n_params];
    for (l, g) in per_sample {
        loss += l;
        grads.iter_mut().zip(&g).for_each(|(acc, v)| *acc += v);
    }
    grads.iter_mut().for_each(|v| *v *= scale);
    Ok((loss * scale, grads))
}

/// Run the encoding optimization on `model` in place and leave it holding
/// the best parameters seen after any update.
pub fn fit<M: Inr + ?Sized>(
    model: &mut M,
    dataset: &CoordinateDataset,
    opts: &TrainOptions,
) -> Result<TrainReport, TrainError> {
    if opts.steps == 0 {
        return Err(TrainError::NoSteps);
    }
    if opts.batch_size == 0 {
        return Err(TrainError::EmptyBatch);
    }
    if model.n_in() != 2 || model.n_out() != dataset.n_out() {
        return Err(TrainError::Shape {
            model_in: model.n_in(),
            model_out: model.n_out(),
            data_in: 2,
            data_out: dataset.n_out(),
        });
    }
    let start = Instant::now();
    let n = dataset.len();
    let full_batch = opts.batch_size >= n;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut adam = Adam::new(opts.lr);
    let mut loss_curve = Vec::new();
    // (mse, step, values); candidates are states produced by an update.
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut offer = |mse: f64, step: usize, values: &[f64]| {
        if best.as_ref().is_none_or(|(b, _, _)| mse < *b) {
            best = Some((mse, step, values.to_vec()));
        }
    };

    for step in 0..opts.steps {
        let batch: Vec<usize> = if full_batch {
            (0..n).collect()
        } else {
            if cursor + opts.batch_size > n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let mut b = order[cursor..cursor + opts.batch_size].to_vec();
            cursor += opts.batch_size;
            b.sort_unstable();
            b
        };
        let (loss, grads) = batch_loss(model, dataset, &batch, step)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { step });
        }
        if full_batch && step > 0 {
            offer(loss, step, &model.params().values);
        }
        if opts.log_every > 0 && step % opts.log_every == 0 {
            loss_curve.push((step, loss));
            if opts.progress {
                eprintln!(
                    "step={step} loss={loss:.6e} psnr={:.3}",
                    normalized_psnr(loss)
                );
            }
        }
        let params = model.params_mut();
        params.grads.copy_from_slice(&grads);
        adam.step(params)
            .map_err(|source| TrainError::Gradient { step, source })?;
        if !full_batch
            && opts.eval_every > 0
            && (step + 1) % opts.eval_every == 0
            && step + 1 < opts.steps
        {
            let mse = evaluate(model, dataset).mse;
            offer(mse, step + 1, &model.params().values);
        }
    }
    let last = evaluate(model, dataset).mse;
    if !last.is_finite() {
        return Err(TrainError::NonFiniteLoss { step: opts.steps });
    }
    offer(last, opts.steps, &model.params().values);

    let (_, best_step, values) = best.expect("at least one candidate offered");
    model
        .params_mut()
        .set_values(&values)
        .expect("candidate taken from the same store");
    let eval = evaluate(model, dataset);
    Ok(TrainReport {
        loss_curve,
        final_mse: eval.mse,
        final_psnr: eval.psnr,
        best_step,
        steps: opts.steps,
        seconds: start.elapsed().as_secs_f64(),
        seed: opts.seed,
        lr: opts.lr,
        batch_size: opts.batch_size,
    })
}

/// Train a quINR model on `signal`.
pub fn encode(
    signal: &SignalTensor,
    config: &ModelConfig,
    opts: &TrainOptions,
) -> Result<(QuinrModel, TrainReport), TrainError> {
    let dataset = build_dataset(signal);
    let mut model = QuinrModel::new(config.clone())?;
    let report = fit(&mut model, &dataset, opts)?;
    Ok((model, report))
}

/// Train the SIREN baseline on `signal`.
pub fn encode_siren(
    signal: &SignalTensor,
    config: &SirenConfig,
    opts: &TrainOptions,
) -> Result<(SirenModel, TrainReport), TrainError> {
    let dataset = build_dataset(signal);
    let mut model = SirenModel::new(config.clone())?;
    let report = fit(&mut model, &dataset, opts)?;
    Ok((model, report))
}
