//! Residual feed-forward network with hand-written backpropagation.
//!
//! `h0 = act(W_in x + b_in)`, then each block computes
//! `h ← h + act(W h + b)`, and a final linear layer projects to the outputs.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
fn act(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

#[inline]
fn act_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Depth/width presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Small,
    Medium,
}

impl Variant {
    /// `(residual blocks, hidden width)`
    pub fn dims(self) -> (usize, usize) {
        match self {
            Variant::Small => (2, 64),
            Variant::Medium => (4, 128),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Small => "small",
            Variant::Medium => "medium",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" | "s" => Ok(Variant::Small),
            "medium" | "m" => Ok(Variant::Medium),
            other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub n_in: usize,
    pub n_out: usize,
    pub width: usize,
    pub blocks: usize,
}

impl Architecture {
    pub fn for_variant(variant: Variant, n_in: usize, n_out: usize) -> Self {
        let (blocks, width) = variant.dims();
        Architecture {
            n_in,
            n_out,
            width,
            blocks,
        }
    }
}

/// Dense layer, weights row-major `n_out × n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Linear {
            n_in,
            n_out,
            weight: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    /// He-style uniform init scaled by fan-in; zero bias.
    pub fn init<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / n_in.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Linear {
            n_in,
            n_out,
            weight: (0..n_in * n_out).map(|_| dist.sample(rng)).collect(),
            bias: vec![0.0; n_out],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates `dz ⊗ x` into this layer's gradients and returns `Wᵀ dz`.
    fn backprop(&self, grad: &mut Linear, x: &[f64], dz: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.n_in];
        for (o, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad.bias[o] += d;
            let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
            let grow = &mut grad.weight[o * self.n_in..(o + 1) * self.n_in];
            for ((g, w), (xi, dxi)) in grow.iter_mut().zip(row).zip(x.iter().zip(dx.iter_mut())) {
                *g += d * xi;
                *dxi += d * w;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub input: Linear,
    pub blocks: Vec<Linear>,
    pub output: Linear,
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardTrace {
    /// Pre-activations: input layer, then each block.
    pre: Vec<Vec<f64>>,
    /// Hidden states: `h0`, then after each block.
    hidden: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        ModelParams {
            arch,
            input: Linear::init(arch.n_in, arch.width, rng),
            blocks: (0..arch.blocks)
                .map(|_| Linear::init(arch.width, arch.width, rng))
                .collect(),
            output: Linear::init(arch.width, arch.n_out, rng),
        }
    }

    pub fn zeros(arch: Architecture) -> Self {
        ModelParams {
            arch,
            input: Linear::zeros(arch.n_in, arch.width),
            blocks: (0..arch.blocks)
                .map(|_| Linear::zeros(arch.width, arch.width))
                .collect(),
            output: Linear::zeros(arch.width, arch.n_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.arch)
    }

    pub fn layers(&self) -> impl Iterator<Item = &Linear> {
        std::iter::once(&self.input)
            .chain(&self.blocks)
            .chain(std::iter::once(&self.output))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        std::iter::once(&mut self.input)
            .chain(&mut self.blocks)
            .chain(std::iter::once(&mut self.output))
    }

    /// Every parameter tensor: per layer, weight then bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.n_in {
            return Err(Error::DimensionMismatch {
                what: "model input",
                expected: self.arch.n_in,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.output)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let z0 = self.input.apply(x);
        let mut h: Vec<f64> = z0.iter().map(|&z| act(z)).collect();
        let mut pre = vec![z0];
        let mut hidden = Vec::with_capacity(self.blocks.len() + 1);
        for block in &self.blocks {
            let z = block.apply(&h);
            let next: Vec<f64> = h.iter().zip(&z).map(|(hv, &zv)| hv + act(zv)).collect();
            pre.push(z);
            hidden.push(std::mem::replace(&mut h, next));
        }
        let output = self.output.apply(&h);
        hidden.push(h);
        Ok(ForwardTrace {
            pre,
            hidden,
            output,
        })
    }

    /// Adds the gradient of `mse_loss(forward(x), y) * scale` to `grads`
    /// and returns the unscaled loss.
    pub fn accumulate_gradients(
        &self,
        x: &[f64],
        y: &[f64],
        scale: f64,
        grads: &mut ModelParams,
    ) -> Result<f64> {
        let trace = self.forward_trace(x)?;
        let loss = mse_loss(&trace.output, y)?;
        let m = y.len() as f64;
        let dy: Vec<f64> = trace
            .output
            .iter()
            .zip(y)
            .map(|(p, t)| scale * 2.0 * (p - t) / m)
            .collect();

        let last = trace.hidden.last().expect("at least h0");
        let mut dh = self.output.backprop(&mut grads.output, last, &dy);
        for (l, block) in self.blocks.iter().enumerate().rev() {
            let z = &trace.pre[l + 1];
            let dz: Vec<f64> = dh.iter().zip(z).map(|(d, &zv)| d * act_grad(zv)).collect();
            let through = block.backprop(&mut grads.blocks[l], &trace.hidden[l], &dz);
            for (d, t) in dh.iter_mut().zip(through) {
                *d += t;
            }
        }
        let dz0: Vec<f64> = dh
            .iter()
            .zip(&trace.pre[0])
            .map(|(d, &zv)| d * act_grad(zv))
            .collect();
        self.input.backprop(&mut grads.input, x, &dz0);
        Ok(loss)
    }

    /// Loss and gradients for a single example.
    pub fn backward(&self, x: &[f64], y: &[f64]) -> Result<(f64, ModelParams)> {
        let mut grads = self.zeros_like();
        let loss = self.accumulate_gradients(x, y, 1.0, &mut grads)?;
        Ok((loss, grads))
    }
}

/// Mean of squared elementwise errors.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch {
            what: "loss operands",
            expected: target.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("loss over zero outputs"));
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}
