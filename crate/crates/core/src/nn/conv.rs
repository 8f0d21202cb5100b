//! Convolution and pooling kernels on channel-planar sample rows.

use crate::error::{Result, SnrError};
use crate::tensor::Matrix;

/// Valid-convolution geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width - self.kernel) / self.stride + 1
    }

    pub fn positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// One row per (sample, output y, output x), one column per
/// (channel, kernel y, kernel x).
pub fn im2col(g: &ConvGeometry, batch: &Matrix) -> Result<Matrix> {
    if batch.cols() != g.input_len() {
        return Err(SnrError::shape(
            "im2col",
            format!("{} features per sample, geometry needs {}", batch.cols(), g.input_len()),
        ));
    }
    let (oh, ow, k) = (g.out_height(), g.out_width(), g.kernel);
    let patch = g.patch_len();
    let mut data = Vec::with_capacity(batch.rows() * oh * ow * patch);
    for n in 0..batch.rows() {
        let img = batch.row(n);
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..g.channels {
                    let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
                    for ky in 0..k {
                        let start = (oy * g.stride + ky) * g.width + ox * g.stride;
                        data.extend_from_slice(&plane[start..start + k]);
                    }
                }
            }
        }
    }
    Ok(Matrix::from_vec_unchecked(batch.rows() * oh * ow, patch, data))
}

/// Scatter-add patch gradients back onto the input layout.
pub fn col2im(g: &ConvGeometry, cols: &Matrix, samples: usize) -> Matrix {
    let (oh, ow, k) = (g.out_height(), g.out_width(), g.kernel);
    let mut out = Matrix::zeros(samples, g.input_len());
    let plane_len = g.height * g.width;
    for n in 0..samples {
        let img = out.row_mut(n);
        for oy in 0..oh {
            for ox in 0..ow {
                let row = cols.row((n * oh + oy) * ow + ox);
                let mut idx = 0;
                for c in 0..g.channels {
                    for ky in 0..k {
                        let start = c * plane_len + (oy * g.stride + ky) * g.width + ox * g.stride;
                        for (dst, &v) in img[start..start + k].iter_mut().zip(&row[idx..idx + k]) {
                            *dst += v;
                        }
                        idx += k;
                    }
                }
            }
        }
    }
    out
}

/// `(samples*positions) x filters` -> `samples x (filters*positions)`.
pub fn positions_to_planar(z: &Matrix, samples: usize, positions: usize) -> Matrix {
    let filters = z.cols();
    let mut out = Matrix::zeros(samples, filters * positions);
    for n in 0..samples {
        let dst = out.row_mut(n);
        for p in 0..positions {
            let src = z.row(n * positions + p);
            for (f, &v) in src.iter().enumerate() {
                dst[f * positions + p] = v;
            }
        }
    }
    out
}

/// Inverse of [`positions_to_planar`].
pub fn planar_to_positions(x: &Matrix, filters: usize, positions: usize) -> Matrix {
    let samples = x.rows();
    let mut out = Matrix::zeros(samples * positions, filters);
    for n in 0..samples {
        let src = x.row(n);
        for p in 0..positions {
            let dst = out.row_mut(n * positions + p);
            for (f, d) in dst.iter_mut().enumerate() {
                *d = src[f * positions + p];
            }
        }
    }
    out
}

/// Non-overlapping max pooling. Returns pooled values and, per output entry,
/// the flat input index that won (first maximum on ties).
pub fn maxpool(
    batch: &Matrix,
    channels: usize,
    height: usize,
    width: usize,
    size: usize,
) -> (Matrix, Vec<usize>) {
    let (oh, ow) = (height / size, width / size);
    let out_len = channels * oh * ow;
    let mut out = Matrix::zeros(batch.rows(), out_len);
    let mut arg = Vec::with_capacity(batch.rows() * out_len);
    for n in 0..batch.rows() {
        let src = batch.row(n);
        let dst = out.row_mut(n);
        for c in 0..channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = c * height * width + oy * size * width + ox * size;
                    let mut best = src[best_idx];
                    for dy in 0..size {
                        for dx in 0..size {
                            let idx = c * height * width + (oy * size + dy) * width + ox * size + dx;
                            if src[idx] > best {
                                best = src[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    dst[(c * oh + oy) * ow + ox] = best;
                    arg.push(best_idx);
                }
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward(grad_out: &Matrix, argmax: &[usize], input_len: usize) -> Matrix {
    let mut out = Matrix::zeros(grad_out.rows(), input_len);
    let per = grad_out.cols();
    for n in 0..grad_out.rows() {
        let g = grad_out.row(n);
        let dst = out.row_mut(n);
        for (j, &v) in g.iter().enumerate() {
            dst[argmax[n * per + j]] += v;
        }
    }
    out
}
