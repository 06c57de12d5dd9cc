//! Forward and adjoint kernels for the non-convolution ops.

use serde::{Deserialize, Serialize};

use super::{cast, Real, Shape};
use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchNormConfig {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        BatchNormConfig {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

/// Running per-channel statistics used in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BnRunning<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> BnRunning<T> {
    pub fn new(channels: usize) -> Self {
        BnRunning {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Per-channel statistics of one training batch.
pub(crate) struct BatchStats<T> {
    pub mean: Vec<T>,
    pub unbiased_var: Vec<T>,
}

impl<T: Real> BnRunning<T> {
    pub(crate) fn update(&mut self, stats: &BatchStats<T>, momentum: f64) {
        let m: T = cast(momentum);
        for ch in 0..self.mean.len() {
            self.mean[ch] = (T::one() - m) * self.mean[ch] + m * stats.mean[ch];
            self.var[ch] = (T::one() - m) * self.var[ch] + m * stats.unbiased_var[ch];
        }
    }
}

pub(crate) struct BnSaved<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mode: BnMode,
}

pub(crate) fn batchnorm_forward<T: Real>(
    shape: Shape,
    x: &[T],
    gamma: &[T],
    beta: &[T],
    running: &BnRunning<T>,
    mode: BnMode,
    cfg: BatchNormConfig,
) -> Result<(Vec<T>, BnSaved<T>, Option<BatchStats<T>>)> {
    let c = shape.c;
    if gamma.len() != c || beta.len() != c {
        return Err(config_err!(
            "batchnorm parameters sized {}/{} for {c} channels",
            gamma.len(),
            beta.len()
        ));
    }
    if running.mean.len() != c || running.var.len() != c {
        return Err(config_err!(
            "batchnorm running statistics sized {} for {c} channels",
            running.mean.len()
        ));
    }
    let plane = shape.plane();
    let count = shape.n * plane;
    let eps: T = cast(cfg.eps);
    let mut inv_std = vec![T::zero(); c];
    let mut mean = vec![T::zero(); c];
    let mut batch = None;
    match mode {
        BnMode::Train => {
            let mut unbiased_var = vec![T::zero(); c];
            let count_t: T = cast(count as f64);
            for ch in 0..c {
                let mut s = T::zero();
                for n in 0..shape.n {
                    let off = (n * c + ch) * plane;
                    s += x[off..off + plane].iter().copied().sum::<T>();
                }
                let mu = s / count_t;
                let mut v = T::zero();
                for n in 0..shape.n {
                    let off = (n * c + ch) * plane;
                    for &xi in &x[off..off + plane] {
                        let d = xi - mu;
                        v += d * d;
                    }
                }
                let var = v / count_t;
                mean[ch] = mu;
                inv_std[ch] = T::one() / (var + eps).sqrt();
                let unbiased = if count > 1 {
                    v / cast((count - 1) as f64)
                } else {
                    var
                };
                unbiased_var[ch] = unbiased;
            }
            batch = Some(BatchStats {
                mean: mean.clone(),
                unbiased_var,
            });
        }
        BnMode::Eval => {
            for ch in 0..c {
                mean[ch] = running.mean[ch];
                inv_std[ch] = T::one() / (running.var[ch] + eps).sqrt();
            }
        }
    }
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for n in 0..shape.n {
        for ch in 0..c {
            let off = (n * c + ch) * plane;
            let (mu, is, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for i in off..off + plane {
                let h = (x[i] - mu) * is;
                xhat[i] = h;
                y[i] = g * h + b;
            }
        }
    }
    Ok((y, BnSaved { xhat, inv_std, mode }, batch))
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub(crate) fn batchnorm_backward<T: Real>(
    shape: Shape,
    saved: &BnSaved<T>,
    gamma: &[T],
    dy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let c = shape.c;
    let plane = shape.plane();
    let count: T = cast((shape.n * plane) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for n in 0..shape.n {
        for ch in 0..c {
            let off = (n * c + ch) * plane;
            for i in off..off + plane {
                dgamma[ch] += dy[i] * saved.xhat[i];
                dbeta[ch] += dy[i];
            }
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for n in 0..shape.n {
        for ch in 0..c {
            let off = (n * c + ch) * plane;
            let scale = gamma[ch] * saved.inv_std[ch];
            match saved.mode {
                BnMode::Train => {
                    let (sdy, sdyx) = (dbeta[ch], dgamma[ch]);
                    for i in off..off + plane {
                        dx[i] = scale / count * (count * dy[i] - sdy - saved.xhat[i] * sdyx);
                    }
                }
                BnMode::Eval => {
                    for i in off..off + plane {
                        dx[i] = scale * dy[i];
                    }
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Source taps of half-pixel-centre linear interpolation along one axis.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn linear_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            Tap {
                lo,
                hi,
                frac: src - lo as f64,
            }
        })
        .collect()
}

pub(crate) fn resize_forward<T: Real>(shape: Shape, x: &[T], oh: usize, ow: usize) -> Vec<T> {
    let ty = linear_taps(shape.h, oh);
    let tx = linear_taps(shape.w, ow);
    let planes = shape.n * shape.c;
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * shape.plane()..(p + 1) * shape.plane()];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (oy, a) in ty.iter().enumerate() {
            let fy: T = cast(a.frac);
            for (ox, b) in tx.iter().enumerate() {
                let fx: T = cast(b.frac);
                let v00 = src[a.lo * shape.w + b.lo];
                let v01 = src[a.lo * shape.w + b.hi];
                let v10 = src[a.hi * shape.w + b.lo];
                let v11 = src[a.hi * shape.w + b.hi];
                let top = v00 + (v01 - v00) * fx;
                let bottom = v10 + (v11 - v10) * fx;
                dst[oy * ow + ox] = top + (bottom - top) * fy;
            }
        }
    }
    out
}

pub(crate) fn resize_backward<T: Real>(shape: Shape, dy: &[T], oh: usize, ow: usize) -> Vec<T> {
    let ty = linear_taps(shape.h, oh);
    let tx = linear_taps(shape.w, ow);
    let planes = shape.n * shape.c;
    let mut dx = vec![T::zero(); shape.numel()];
    for p in 0..planes {
        let src = &dy[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut dx[p * shape.plane()..(p + 1) * shape.plane()];
        for (oy, a) in ty.iter().enumerate() {
            let fy: T = cast(a.frac);
            for (ox, b) in tx.iter().enumerate() {
                let fx: T = cast(b.frac);
                let g = src[oy * ow + ox];
                let (gt, gb) = (g * (T::one() - fy), g * fy);
                dst[a.lo * shape.w + b.lo] += gt * (T::one() - fx);
                dst[a.lo * shape.w + b.hi] += gt * fx;
                dst[a.hi * shape.w + b.lo] += gb * (T::one() - fx);
                dst[a.hi * shape.w + b.hi] += gb * fx;
            }
        }
    }
    dx
}

/// 2x2 stride-2 max pooling; returns values and the flat argmax per output.
pub(crate) fn maxpool2_forward<T: Real>(shape: Shape, x: &[T]) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (shape.h / 2, shape.w / 2);
    let planes = shape.n * shape.c;
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * shape.plane();
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * shape.w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * shape.w + 2 * ox + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}
