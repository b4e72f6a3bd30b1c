//! Optimization: Adam, per-sample gradients summed in a fixed order, and the
//! epoch loop over every `(tracklet, frame)` pair.

use std::f64::consts::PI;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{build_sample, mix_seed, SampleConfig, SampleMode, Tracklet};
use crate::error::{Error, Result};
use crate::graph::{Graph, ParamStore};
use crate::losses::{total_loss, LossBreakdown, LossWeights};
use crate::network::Network;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from the base rate to zero over all epochs.
    Cosine,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; off when unset.
    pub grad_clip: Option<f64>,
    /// Half-widths of the history-box offsets `(dx, dy, dz, dtheta)`, radians for the angle.
    pub offset_range: [f64; 4],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            optimizer: Optimizer::Adam,
            learning_rate: 1e-4,
            lr_schedule: LrSchedule::Constant,
            batch_size: 16,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip: None,
            offset_range: [0.3, 0.3, 0.1, 5f64.to_radians()],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Config("Adam betas must lie in [0, 1) and epsilon be positive".into()));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("train.grad_clip must be positive".into()));
        }
        if self.offset_range.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("train.offset_range must be nonnegative".into()));
        }
        Ok(())
    }

    /// Learning rate for 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let frac = epoch as f64 / self.epochs.max(1) as f64;
                self.learning_rate * 0.5 * (1.0 + (PI * frac.min(1.0)).cos())
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Tensor> = params.values().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        Adam {
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(Error::shape("optimizer state", self.m.len(), grads.len()));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.values_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.shape() != g.shape() {
                return Err(Error::shape("gradient", format!("{:?}", p.shape()), format!("{:?}", g.shape())));
            }
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *pi -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Mean losses of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub lr: f64,
    pub train: LossBreakdown,
    pub val: Option<LossBreakdown>,
    pub seconds: f64,
}

/// Every `(tracklet, frame)` pair with at least one previous frame.
pub fn sample_index(tracklets: &[Tracklet]) -> Vec<(usize, usize)> {
    tracklets
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (1..t.len()).map(move |f| (i, f)))
        .collect()
}

/// Loss and parameter gradients of one sample.
pub fn sample_gradients(
    net: &Network,
    tracklet: &Tracklet,
    frame: usize,
    sample_cfg: &SampleConfig,
    loss: &LossWeights,
    seed: u64,
    dropout: bool,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let sample = build_sample(tracklet, frame, sample_cfg, mix_seed(seed, 1))?;
    let labels = sample
        .labels
        .as_ref()
        .ok_or_else(|| Error::State("training sample without labels".into()))?;
    let rate = net.config().dropout;
    let mut g = if dropout && rate > 0.0 {
        Graph::with_dropout(rate, mix_seed(seed, 2))
    } else {
        Graph::new()
    };
    let out = net.forward(&mut g, &sample)?;
    let (l, breakdown) = total_loss(&mut g, &out, labels, loss)?;
    if !breakdown.total.is_finite() {
        return Err(Error::State(format!(
            "non-finite loss on tracklet {} frame {frame}",
            tracklet.id
        )));
    }
    Ok((breakdown, g.backward(l).params(net.params())))
}

pub struct Trainer {
    pub net: Network,
    pub optimizer: Adam,
    /// Completed epochs.
    pub epoch: usize,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub sample: SampleConfig,
    pub seed: u64,
}

impl Trainer {
    /// `sample` supplies crop margin and frame interval; window shape comes
    /// from the model and offsets from `train`.
    pub fn new(net: Network, train: TrainConfig, loss: LossWeights, sample: &SampleConfig, seed: u64) -> Result<Self> {
        train.validate()?;
        loss.validate()?;
        let optimizer = Adam::new(net.params(), train.beta1, train.beta2, train.epsilon);
        let sample = SampleConfig {
            n_frames: net.config().n_frames,
            points_per_frame: net.config().points_per_frame,
            offset_range: train.offset_range,
            mode: SampleMode::Train,
            ..sample.clone()
        };
        sample.validate()?;
        Ok(Trainer {
            net,
            optimizer,
            epoch: 0,
            train,
            loss,
            sample,
            seed,
        })
    }

    /// Continues from `ck`: parameters, optimizer state and epoch counter.
    pub fn resume(ck: &Checkpoint, train: TrainConfig, loss: LossWeights, sample: &SampleConfig, seed: u64) -> Result<Self> {
        let mut t = Self::new(ck.to_network()?, train, loss, sample, seed)?;
        if let Some(opt) = &ck.optimizer {
            let shapes_match = opt.m.len() == t.optimizer.m.len()
                && opt.m.iter().zip(&t.optimizer.m).all(|(a, b)| a.shape() == b.shape())
                && opt.v.iter().zip(&t.optimizer.v).all(|(a, b)| a.shape() == b.shape());
            if !shapes_match {
                return Err(Error::Checkpoint("optimizer state does not match the model".into()));
            }
            t.optimizer = opt.clone();
        }
        t.epoch = ck.epoch;
        Ok(t)
    }

    pub fn checkpoint(&self, metric: Option<f64>) -> Checkpoint {
        Checkpoint::from_network(&self.net, self.epoch, Some(&self.optimizer), metric)
    }

    fn epoch_seed(&self, epoch: usize) -> u64 {
        mix_seed(self.seed, epoch as u64)
    }

    /// Runs one epoch; parallel over samples within a batch on the current
    /// rayon pool, with results reduced in sample order.
    pub fn run_epoch(&mut self, data: &[Tracklet]) -> Result<EpochLog> {
        let start = Instant::now();
        let epoch = self.epoch;
        let mut index = sample_index(data);
        if index.is_empty() {
            return Err(Error::Config("training data has no tracklet with two or more frames".into()));
        }
        let eseed = self.epoch_seed(epoch);
        index.shuffle(&mut ChaCha8Rng::seed_from_u64(eseed));
        let lr = self.train.lr_at(epoch);
        let mut sum = LossBreakdown::default();
        for batch in index.chunks(self.train.batch_size) {
            let net = &self.net;
            let (cfg, loss) = (&self.sample, &self.loss);
            let results: Vec<Result<(LossBreakdown, Vec<Tensor>)>> = batch
                .par_iter()
                .map(|&(t, f)| {
                    let seed = mix_seed(mix_seed(eseed, t as u64), f as u64);
                    sample_gradients(net, &data[t], f, cfg, loss, seed, true)
                })
                .collect();
            let mut grads: Option<Vec<Tensor>> = None;
            for r in results {
                let (b, g) = r?;
                sum.accumulate(&b);
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, x)| a.add_assign(x)),
                }
            }
            let mut grads = grads.expect("nonempty batch");
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.scale_assign(scale));
            if let Some(clip) = self.train.grad_clip {
                let norm = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt();
                if norm > clip {
                    grads.iter_mut().for_each(|g| g.scale_assign(clip / norm));
                }
            }
            self.optimizer.update(self.net.params_mut(), &grads, lr)?;
        }
        self.epoch += 1;
        Ok(EpochLog {
            epoch: self.epoch,
            lr,
            train: sum.scaled(1.0 / index.len() as f64),
            val: None,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Mean loss over `data` without dropout, with offsets drawn from a fixed seed.
    pub fn evaluate_loss(&self, data: &[Tracklet]) -> Result<LossBreakdown> {
        let index = sample_index(data);
        if index.is_empty() {
            return Err(Error::Config("validation data has no tracklet with two or more frames".into()));
        }
        let vseed = mix_seed(self.seed, u64::MAX);
        let results: Vec<Result<LossBreakdown>> = index
            .par_iter()
            .map(|&(t, f)| {
                let seed = mix_seed(mix_seed(vseed, t as u64), f as u64);
                let sample = build_sample(&data[t], f, &self.sample, mix_seed(seed, 1))?;
                let labels = sample.labels.as_ref().expect("train-mode samples carry labels");
                let mut g = Graph::new();
                let out = self.net.forward(&mut g, &sample)?;
                Ok(total_loss(&mut g, &out, labels, &self.loss)?.1)
            })
            .collect();
        let mut sum = LossBreakdown::default();
        for r in results {
            sum.accumulate(&r?);
        }
        Ok(sum.scaled(1.0 / index.len() as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::from_vec(1, 2, vec![1.0, -1.0]));
        let mut adam = Adam::new(&store, 0.9, 0.999, 1e-8);
        adam.update(&mut store, &[Tensor::from_vec(1, 2, vec![0.5, -2.0])], 0.1).unwrap();
        let w = store.get(id);
        assert!((w.at(0, 0) - 0.9).abs() < 1e-6);
        assert!((w.at(0, 1) + 0.9).abs() < 1e-6);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = TrainConfig {
            epochs: 10,
            learning_rate: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            ..Default::default()
        };
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert!((cfg.lr_at(5) - 5e-4).abs() < 1e-15);
        assert!(cfg.lr_at(10).abs() < 1e-15);
    }
}
