use rayon::prelude::*;

use super::{Real, Shape, Tensor};
use crate::error::{config_err, Result};

/// Geometry of a square 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub dilation: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Stride-1 convolution whose output keeps the input's spatial size.
    pub fn same(kernel: usize, dilation: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(config_err!("kernel size must be odd, got {kernel}"));
        }
        if dilation == 0 {
            return Err(config_err!("dilation must be positive"));
        }
        Ok(ConvSpec {
            kernel,
            dilation,
            stride: 1,
            padding: (kernel - 1) * dilation / 2,
        })
    }

    /// Span of input pixels covered by one output tap: `k + (k - 1)(d - 1)`.
    pub fn effective_extent(&self) -> usize {
        self.kernel + (self.kernel - 1) * (self.dilation - 1)
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let ext = self.effective_extent();
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < ext || pw < ext {
            return Err(config_err!(
                "input {h}x{w} with padding {} is smaller than kernel extent {ext}",
                self.padding
            ));
        }
        Ok(((ph - ext) / self.stride + 1, (pw - ext) / self.stride + 1))
    }

    fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 {
            return Err(config_err!("kernel size must be odd, got {}", self.kernel));
        }
        if self.dilation == 0 || self.stride == 0 {
            return Err(config_err!("dilation and stride must be positive"));
        }
        Ok(())
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

pub(crate) struct ConvGeometry {
    pub input: Shape,
    pub output: Shape,
    pub spec: ConvSpec,
}

impl ConvGeometry {
    pub fn new(input: Shape, weight: Shape, bias: Option<Shape>, spec: ConvSpec) -> Result<Self> {
        spec.validate()?;
        if weight.h != spec.kernel || weight.w != spec.kernel {
            return Err(config_err!(
                "weight {weight} does not match kernel size {}",
                spec.kernel
            ));
        }
        if weight.c != input.c {
            return Err(config_err!(
                "conv expects {} input channels, input has shape {input}",
                weight.c
            ));
        }
        if let Some(b) = bias {
            if b.numel() != weight.n {
                return Err(config_err!("bias of shape {b} for {} output channels", weight.n));
            }
        }
        let (oh, ow) = spec.output_hw(input.h, input.w)?;
        Ok(ConvGeometry {
            input,
            output: Shape::new(input.n, weight.n, oh, ow),
            spec,
        })
    }

    fn patch_len(&self) -> usize {
        self.input.c * self.spec.kernel * self.spec.kernel
    }

    /// Unfolds one batch item into a `(C*k*k) x (Ho*Wo)` matrix.
    fn im2col<T: Real>(&self, x: &[T], col: &mut [T]) {
        let ConvSpec {
            kernel: k,
            dilation: d,
            stride: s,
            padding: p,
        } = self.spec;
        let (h, w) = (self.input.h as isize, self.input.w as isize);
        let (oh, ow) = (self.output.h, self.output.w);
        let plane = oh * ow;
        for ci in 0..self.input.c {
            let src = &x[ci * self.input.plane()..(ci + 1) * self.input.plane()];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut col[row * plane..(row + 1) * plane];
                    let dy = (ky * d) as isize - p as isize;
                    let dx = (kx * d) as isize - p as isize;
                    for oy in 0..oh {
                        let iy = (oy * s) as isize + dy;
                        let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h {
                            out_row.fill(T::zero());
                            continue;
                        }
                        let src_row = &src[iy as usize * w as usize..(iy as usize + 1) * w as usize];
                        for (ox, o) in out_row.iter_mut().enumerate() {
                            let ix = (ox * s) as isize + dx;
                            *o = if ix < 0 || ix >= w {
                                T::zero()
                            } else {
                                src_row[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters column gradients back to pixels.
    fn col2im<T: Real>(&self, col: &[T], x: &mut [T]) {
        let ConvSpec {
            kernel: k,
            dilation: d,
            stride: s,
            padding: p,
        } = self.spec;
        let (h, w) = (self.input.h as isize, self.input.w as isize);
        let (oh, ow) = (self.output.h, self.output.w);
        let plane = oh * ow;
        x.fill(T::zero());
        for ci in 0..self.input.c {
            let dst = &mut x[ci * self.input.plane()..(ci + 1) * self.input.plane()];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &col[row * plane..(row + 1) * plane];
                    let dy = (ky * d) as isize - p as isize;
                    let dx = (kx * d) as isize - p as isize;
                    for oy in 0..oh {
                        let iy = (oy * s) as isize + dy;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        let base = iy as usize * w as usize;
                        for ox in 0..ow {
                            let ix = (ox * s) as isize + dx;
                            if ix >= 0 && ix < w {
                                dst[base + ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward<T: Real>(&self, x: &[T], weight: &[T], bias: Option<&[T]>) -> Vec<T> {
        let cout = self.output.c;
        let plane = self.output.plane();
        let kk = self.patch_len();
        let in_per = self.input.c * self.input.plane();
        let mut out = vec![T::zero(); self.output.numel()];
        out.par_chunks_mut(cout * plane)
            .enumerate()
            .for_each_init(Vec::new, |col, (n, dst)| {
                let xn = &x[n * in_per..(n + 1) * in_per];
                let cols: &[T] = if self.spec.is_pointwise() {
                    xn
                } else {
                    col.resize(kk * plane, T::zero());
                    self.im2col(xn, col);
                    col
                };
                if let Some(b) = bias {
                    for (co, row) in dst.chunks_mut(plane).enumerate() {
                        row.fill(b[co]);
                    }
                }
                let beta = if bias.is_some() { T::one() } else { T::zero() };
                T::gemm(
                    cout,
                    kk,
                    plane,
                    T::one(),
                    weight,
                    (kk as isize, 1),
                    cols,
                    (plane as isize, 1),
                    beta,
                    dst,
                    (plane as isize, 1),
                );
            });
        out
    }

    /// Returns `(d_input, d_weight, d_bias)`.
    pub fn backward<T: Real>(
        &self,
        x: &[T],
        weight: &[T],
        d_out: &[T],
        need_input: bool,
    ) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
        let cout = self.output.c;
        let plane = self.output.plane();
        let kk = self.patch_len();
        let in_per = self.input.c * self.input.plane();
        let out_per = cout * plane;
        let batch = self.input.n;

        let mut d_weight = vec![T::zero(); cout * kk];
        let mut d_bias = vec![T::zero(); cout];
        let mut col = Vec::new();
        // Sequential accumulation over the batch keeps the reduction order fixed.
        for n in 0..batch {
            let xn = &x[n * in_per..(n + 1) * in_per];
            let dy = &d_out[n * out_per..(n + 1) * out_per];
            let cols: &[T] = if self.spec.is_pointwise() {
                xn
            } else {
                col.resize(kk * plane, T::zero());
                self.im2col(xn, &mut col);
                &col
            };
            T::gemm(
                cout,
                plane,
                kk,
                T::one(),
                dy,
                (plane as isize, 1),
                cols,
                (1, plane as isize),
                T::one(),
                &mut d_weight,
                (kk as isize, 1),
            );
            for (co, row) in dy.chunks(plane).enumerate() {
                d_bias[co] += row.iter().copied().sum::<T>();
            }
        }

        let d_input = need_input.then(|| {
            let mut dx = vec![T::zero(); self.input.numel()];
            dx.par_chunks_mut(in_per)
                .enumerate()
                .for_each_init(Vec::new, |dcol, (n, dxn)| {
                    let dy = &d_out[n * out_per..(n + 1) * out_per];
                    if self.spec.is_pointwise() {
                        T::gemm(
                            kk,
                            cout,
                            plane,
                            T::one(),
                            weight,
                            (1, kk as isize),
                            dy,
                            (plane as isize, 1),
                            T::zero(),
                            dxn,
                            (plane as isize, 1),
                        );
                    } else {
                        dcol.resize(kk * plane, T::zero());
                        T::gemm(
                            kk,
                            cout,
                            plane,
                            T::one(),
                            weight,
                            (1, kk as isize),
                            dy,
                            (plane as isize, 1),
                            T::zero(),
                            dcol,
                            (plane as isize, 1),
                        );
                        self.col2im(dcol, dxn);
                    }
                });
            dx
        });
        (d_input, d_weight, d_bias)
    }
}

/// Convolution without recording, for inference and testing.
pub fn conv2d_raw<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: ConvSpec,
) -> Result<Tensor<T>> {
    let geo = ConvGeometry::new(input.shape(), weight.shape(), bias.map(|b| b.shape()), spec)?;
    let out = geo.forward(input.data(), weight.data(), bias.map(|b| b.data()));
    Tensor::from_vec(geo.output, out)
}
