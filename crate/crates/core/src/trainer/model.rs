use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::seed;
use crate::{Graph, Tensor};

/// Fully convolutional segmenter: stacked 3×3 rectified convolutions with
/// biases, then a 1×1 class head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub in_channels: usize,
    pub widths: Vec<usize>,
    pub classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            in_channels: 1,
            widths: vec![8, 16, 16],
            classes: 3,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.widths.is_empty() || self.widths.contains(&0) || self.classes < 2 {
            return Err(Error::invalid("architecture", format!("{self:?}")));
        }
        Ok(())
    }

    /// Shapes of the parameter tensors, weight then bias for each layer.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let mut c_in = self.in_channels;
        for &w in &self.widths {
            shapes.push(vec![w, c_in, 3, 3]);
            shapes.push(vec![w]);
            c_in = w;
        }
        shapes.push(vec![self.classes, c_in, 1, 1]);
        shapes.push(vec![self.classes]);
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// He-normal weights for rectified layers, `1/fan_in` variance for the
    /// head, zero biases.
    pub fn init(&self, seed: u64) -> Result<Vec<Tensor>> {
        self.validate()?;
        let mut rng = seed::rng(seed::derive(seed, seed::stream::INIT, 0));
        let shapes = self.param_shapes();
        let last = shapes.len() - 2;
        Ok(shapes
            .iter()
            .enumerate()
            .map(|(i, shape)| {
                if shape.len() == 1 {
                    return Tensor::zeros(shape);
                }
                let fan_in: usize = shape[1..].iter().product();
                let gain = if i == last { 1.0 } else { 2.0 };
                let std = (gain / fan_in as f64).sqrt();
                Tensor::from_fn(shape, |_| std * rng.sample::<f64, _>(StandardNormal))
            })
            .collect())
    }

    pub fn check_params(&self, params: &[Tensor]) -> Result<()> {
        let shapes = self.param_shapes();
        if params.len() != shapes.len() {
            return Err(Error::invalid(
                "params",
                format!("expected {} tensors, got {}", shapes.len(), params.len()),
            ));
        }
        for (p, s) in params.iter().zip(&shapes) {
            if p.shape() != s.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "params",
                    left: p.shape().to_vec(),
                    right: s.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn check_input(&self, image: &Tensor) -> Result<()> {
        let s = image.shape();
        if s.len() != 4 || s[1] != self.in_channels {
            return Err(Error::invalid(
                "forward_segment",
                format!("expected [N, {}, H, W], got {s:?}", self.in_channels),
            ));
        }
        if !s[2].is_multiple_of(16) || !s[3].is_multiple_of(16) {
            return Err(Error::invalid(
                "forward_segment",
                format!("spatial dims {:?} must be divisible by 16", &s[2..]),
            ));
        }
        Ok(())
    }
}

/// Nodes of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    /// First-layer convolution output before rectification.
    pub first: Var,
    pub logits: Var,
}

/// Per-channel statistics that the first-layer features are re-standardized
/// to.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Puts `params` on the tape: as trainable parameters, or as constants for a
/// model that receives no gradient.
pub fn place_params(g: &mut Graph, params: &[Tensor], trainable: bool) -> Vec<Var> {
    params
        .iter()
        .map(|p| if trainable { g.param(p.clone()) } else { g.leaf(p.clone()) })
        .collect()
}

pub fn forward_graph(
    g: &mut Graph,
    arch: &Architecture,
    params: &[Var],
    input: Var,
    align: Option<&FeatureStats>,
) -> Result<Forward> {
    arch.check_input(g.value(input))?;
    let mut h = input;
    let mut first = None;
    for layer in 0..arch.widths.len() {
        let conv = g.conv2d(h, params[2 * layer])?;
        let mut pre = g.channel_bias(conv, params[2 * layer + 1])?;
        if layer == 0 {
            first = Some(pre);
            if let Some(st) = align {
                pre = g.adain(pre, &st.mean, &st.std)?;
            }
        }
        h = g.relu(pre);
    }
    let n = params.len();
    let head = g.conv2d(h, params[n - 2])?;
    let logits = g.channel_bias(head, params[n - 1])?;
    Ok(Forward {
        first: first.expect("at least one layer"),
        logits,
    })
}

/// Per-pixel class probabilities `[N, classes, H, W]` for a `[N, C, H, W]`
/// or `[C, H, W]` image.
pub fn forward_segment(arch: &Architecture, params: &[Tensor], image: &Tensor) -> Result<Tensor> {
    arch.check_params(params)?;
    let image = batched(image)?;
    let mut g = Graph::new();
    let vars = place_params(&mut g, params, false);
    let x = g.leaf(image);
    let f = forward_graph(&mut g, arch, &vars, x, None)?;
    let p = g.softmax(f.logits)?;
    Ok(g.value(p).clone())
}

pub(crate) fn batched(image: &Tensor) -> Result<Tensor> {
    match image.rank() {
        3 => {
            let mut s = vec![1];
            s.extend_from_slice(image.shape());
            image.clone().reshape(&s)
        }
        _ => Ok(image.clone()),
    }
}

/// Stacks `[C, H, W]` images into one `[N, C, H, W]` batch.
pub fn stack(images: &[&Tensor]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::invalid("stack", "empty batch"))?;
    let mut shape = vec![images.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(images.len() * first.numel());
    for im in images {
        first.expect_same_shape(im, "stack")?;
        data.extend_from_slice(im.data());
    }
    Tensor::new(shape, data)
}
