use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Var};
use crate::error::{Error, Result};
use crate::{Graph, Tensor};

/// Hard teacher labels on an unmasked image, laid out `[N, H, W]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub classes: Vec<usize>,
    pub keep: Vec<bool>,
}

impl PseudoLabel {
    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.keep.iter().map(|&k| k as u8 as f64).collect()
    }
}

/// Argmax of `[N, C, ...]` probabilities per pixel, ties to the lowest
/// class; a pixel is kept iff its top probability is at least `delta`.
pub fn pseudo_label(probs: &Tensor, delta: f64) -> Result<PseudoLabel> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid("pseudo_label", format!("threshold {delta} outside (0, 1]")));
    }
    if probs.rank() < 2 {
        return Err(Error::invalid("pseudo_label", format!("expected [N, C, ...], got {:?}", probs.shape())));
    }
    let (n, c) = (probs.shape()[0], probs.shape()[1]);
    let s: usize = probs.shape()[2..].iter().product();
    let d = probs.data();
    let mut classes = Vec::with_capacity(n * s);
    let mut keep = Vec::with_capacity(n * s);
    for b in 0..n {
        for i in 0..s {
            let mut best = 0;
            let mut top = d[b * c * s + i];
            for k in 1..c {
                let v = d[(b * c + k) * s + i];
                if v > top {
                    best = k;
                    top = v;
                }
            }
            classes.push(best);
            keep.push(top >= delta);
        }
    }
    Ok(PseudoLabel { classes, keep })
}

/// Mean pixel cross-entropy against ground-truth labels.
pub fn sup_loss(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    g.softmax_cross_entropy(logits, labels, None)
}

/// `λ·CE(p_D, ŷ) + (1−λ)·CE(p_{1−D}, ŷ)` over kept pixels; each term is 0
/// when nothing is kept.
pub fn cl_loss(g: &mut Graph, logits_d: Var, logits_c: Var, pseudo: &PseudoLabel, lambda: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("cl_loss", format!("lambda {lambda} outside [0, 1]")));
    }
    let w = pseudo.weights();
    let a = g.softmax_cross_entropy(logits_d, &pseudo.classes, Some(&w))?;
    let b = g.softmax_cross_entropy(logits_c, &pseudo.classes, Some(&w))?;
    let a = g.scale(a, lambda);
    let b = g.scale(b, 1.0 - lambda);
    g.add(a, b)
}

/// Mean over pixels and classes of the squared difference of two
/// probability maps. Gradients reach both maps.
pub fn cm_loss(g: &mut Graph, p_d: Var, p_c: Var) -> Result<Var> {
    let diff = g.sub(p_d, p_c)?;
    let sq = g.mul(diff, diff)?;
    Ok(g.mean(sq))
}

/// Value of [`cm_loss`] on two probability maps.
pub fn loss_cm(p_d: &Tensor, p_c: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let (a, b) = (g.leaf(p_d.clone()), g.leaf(p_c.clone()));
    let l = cm_loss(&mut g, a, b)?;
    Ok(g.value(l).item())
}

/// `φ ← αφ + (1−α)θ` element-wise.
pub fn ema_update(teacher: &mut [Tensor], student: &[Tensor], alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("ema_update", format!("alpha {alpha} outside [0, 1]")));
    }
    if teacher.len() != student.len() {
        return Err(Error::invalid("ema_update", "parameter lists differ in length"));
    }
    for (phi, theta) in teacher.iter_mut().zip(student) {
        phi.expect_same_shape(theta, "ema_update")?;
        for (p, t) in phi.data_mut().iter_mut().zip(theta.data()) {
            *p = alpha * *p + (1.0 - alpha) * t;
        }
    }
    Ok(())
}

/// Re-standardizes `[N, C, H, W]` source features per channel to the
/// statistics of the target features. Zero-variance source channels are
/// returned unchanged.
pub fn adain_align(source: &Tensor, target: &Tensor) -> Result<Tensor> {
    let (mean, std) = autodiff::channel_stats(target)?;
    let mut g = Graph::new();
    let s = g.leaf(source.clone());
    let out = g.adain(s, &mean, &std)?;
    Ok(g.value(out).clone())
}
