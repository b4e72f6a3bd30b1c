//! Training objective: mask cross-entropy, coarse-box loss and the weighted
//! history/current box-sequence losses.
//!
//! `L = lambda1·L_mask + lambda2·L_coarse + lambda3·(gamma1·L_history + gamma2·L_current)`

use serde::{Deserialize, Serialize};

use crate::data::SampleLabels;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Box7};
use crate::graph::{bce_with_logits, Graph, Var};
use crate::network::ForwardOutput;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Mask loss weight.
    pub lambda1: f64,
    /// Coarse-box loss weight.
    pub lambda2: f64,
    /// Sequence loss weight.
    pub lambda3: f64,
    /// History-box weight inside the sequence term.
    pub gamma1: f64,
    /// Current-box weight inside the sequence term.
    pub gamma2: f64,
    pub huber_delta: f64,
    /// How many of the most recent history boxes are constrained; all when unset.
    pub history_constraints: Option<usize>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 0.2,
            lambda2: 1.0,
            lambda3: 1.0,
            gamma1: 0.1,
            gamma2: 1.0,
            huber_delta: 1.0,
            history_constraints: None,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda1, self.lambda2, self.lambda3, self.gamma1, self.gamma2];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if !(self.huber_delta > 0.0 && self.huber_delta.is_finite()) {
            return Err(Error::Config("loss.huber_delta must be positive".into()));
        }
        Ok(())
    }

    /// Weighted sum of the four components.
    pub fn combine(&self, mask: f64, coarse: f64, history: f64, current: f64) -> f64 {
        self.lambda1 * mask + self.lambda2 * coarse + self.lambda3 * (self.gamma1 * history + self.gamma2 * current)
    }

    /// Indices of the constrained history boxes among `n_history`.
    fn constrained(&self, n_history: usize) -> std::ops::Range<usize> {
        let k = self.history_constraints.unwrap_or(n_history).min(n_history);
        n_history - k..n_history
    }
}

/// Loss components and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mask: f64,
    pub coarse: f64,
    pub history: f64,
    pub current: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(weights: &LossWeights, mask: f64, coarse: f64, history: f64, current: f64) -> Self {
        LossBreakdown {
            mask,
            coarse,
            history,
            current,
            total: weights.combine(mask, coarse, history, current),
        }
    }

    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.mask += other.mask;
        self.coarse += other.coarse;
        self.history += other.history;
        self.current += other.current;
        self.total += other.total;
    }

    pub fn scaled(&self, s: f64) -> LossBreakdown {
        LossBreakdown {
            mask: self.mask * s,
            coarse: self.coarse * s,
            history: self.history * s,
            current: self.current * s,
            total: self.total * s,
        }
    }
}

pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Per-axis center Huber plus Huber on the wrapped angle residual.
pub fn box_loss(pred: [f64; 4], gt: &Box7, delta: f64) -> f64 {
    let [x, y, z, t] = gt.pose_params();
    huber(pred[0] - x, delta)
        + huber(pred[1] - y, delta)
        + huber(pred[2] - z, delta)
        + huber(wrap_angle(pred[3] - t), delta)
}

/// Mean binary cross-entropy of logits against 0/1 labels.
pub fn mask_loss(logits: &[f64], labels: &[f64]) -> Result<f64> {
    if logits.len() != labels.len() {
        return Err(Error::shape("mask labels", logits.len(), labels.len()));
    }
    if logits.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = logits.iter().zip(labels).map(|(&z, &y)| bce_with_logits(z, y)).sum();
    Ok(sum / logits.len() as f64)
}

/// Loss components evaluated from plain values.
pub fn loss_values(
    coarse: [f64; 4],
    mask_logits: &[f64],
    boxes: &[[f64; 4]],
    labels: &SampleLabels,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let n = labels.gt_boxes.len();
    if boxes.len() != n || n == 0 {
        return Err(Error::shape("predicted box sequence", n, boxes.len()));
    }
    let d = weights.huber_delta;
    let mask = mask_loss(mask_logits, &labels.gt_foreground)?;
    let current_gt = &labels.gt_boxes[n - 1];
    let coarse_l = box_loss(coarse, current_gt, d);
    let range = weights.constrained(n - 1);
    let history = if range.is_empty() {
        0.0
    } else {
        range.clone().map(|i| box_loss(boxes[i], &labels.gt_boxes[i], d)).sum::<f64>() / range.len() as f64
    };
    let current = box_loss(boxes[n - 1], current_gt, d);
    Ok(LossBreakdown::new(weights, mask, coarse_l, history, current))
}

fn pose_rows(boxes: &[Box7]) -> Tensor {
    let rows: Vec<[f64; 4]> = boxes.iter().map(Box7::pose_params).collect();
    Tensor::from_rows(&rows)
}

/// The objective as a graph node, with its breakdown.
pub fn total_loss(
    g: &mut Graph,
    out: &ForwardOutput,
    labels: &SampleLabels,
    weights: &LossWeights,
) -> Result<(Var, LossBreakdown)> {
    let n = labels.gt_boxes.len();
    let (rows, cols) = g.shape(out.boxes);
    if rows != n || cols != 4 || n == 0 {
        return Err(Error::shape("predicted box sequence", format!("{n}×4"), format!("{rows}×{cols}")));
    }
    if g.value(out.mask_logits).len() != labels.gt_foreground.len() {
        return Err(Error::shape("mask labels", g.value(out.mask_logits).len(), labels.gt_foreground.len()));
    }
    let d = weights.huber_delta;
    let l_mask = g.bce_logits_mean(out.mask_logits, labels.gt_foreground.clone());
    let l_coarse = g.box_huber(out.coarse, pose_rows(&labels.gt_boxes[n - 1..]), d);
    let per_box = g.box_huber(out.boxes, pose_rows(&labels.gt_boxes), d);

    let range = weights.constrained(n - 1);
    let mut seq_w = vec![0.0; n];
    for i in range.clone() {
        seq_w[i] = weights.gamma1 / range.len() as f64;
    }
    seq_w[n - 1] = weights.gamma2;
    let seq_w = g.constant(Tensor::from_vec(1, n, seq_w));
    let seq = g.matmul(seq_w, per_box);

    let a = g.scale(l_mask, weights.lambda1);
    let b = g.scale(l_coarse, weights.lambda2);
    let c = g.scale(seq, weights.lambda3);
    let ab = g.add(a, b);
    let total = g.add(ab, c);

    let per = g.value(per_box);
    let history = if range.is_empty() {
        0.0
    } else {
        range.clone().map(|i| per.at(i, 0)).sum::<f64>() / range.len() as f64
    };
    let breakdown = LossBreakdown {
        mask: g.value(l_mask).item(),
        coarse: g.value(l_coarse).item(),
        history,
        current: per.at(n - 1, 0),
        total: g.value(total).item(),
    };
    Ok((total, breakdown))
}
