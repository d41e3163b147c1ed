//! Dense tensors and the numerical kernels the network layers build on.
//!
//! All values are `f64` and all kernels use a fixed loop nesting, so results
//! are reproducible bit-for-bit and can be compared exactly against
//! straight-line reference implementations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense N-dimensional array, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data.len()` equals the shape product
    /// and that no dimension is zero.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} implies {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; len],
        }
    }

    /// Rank-1 tensor from a plain vector.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterprets the same data under a new shape of equal volume.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    /// Flattens to rank 1.
    pub fn flatten(&self) -> Tensor {
        Tensor {
            shape: vec![self.data.len()],
            data: self.data.clone(),
        }
    }

    #[inline]
    pub fn at3(&self, c: usize, i: usize, j: usize) -> f64 {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + i) * w + j]
    }

    #[inline]
    pub fn at4(&self, o: usize, c: usize, i: usize, j: usize) -> f64 {
        let (ci, h, w) = (self.shape[1], self.shape[2], self.shape[3]);
        self.data[((o * ci + c) * h + i) * w + j]
    }
}

/// Window shift per output position (the convolution stride).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Stride(usize);

impl Stride {
    pub fn new(zeta: usize) -> Result<Self> {
        if zeta < 1 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        Ok(Stride(zeta))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// Output length of a valid-mode strided window scan.
pub fn valid_out_len(input: usize, window: usize, stride: Stride) -> usize {
    (input - window) / stride.get() + 1
}

/// Valid-mode 1D correlation: `out[k] = sum_j u[j] * x[stride*k + j]`.
///
/// Only full-overlap positions are produced; the output has length
/// `(L - K) / stride + 1`.
pub fn conv_valid_1d(x: &Tensor, u: &Tensor, stride: Stride) -> Result<Tensor> {
    if x.rank() != 1 || u.rank() != 1 {
        return Err(Error::ShapeMismatch(
            "conv_valid_1d expects rank-1 tensors".into(),
        ));
    }
    let (l, k) = (x.len(), u.len());
    if k > l {
        return Err(Error::InvalidArgument(format!(
            "kernel length {k} exceeds input length {l}"
        )));
    }
    let out_len = valid_out_len(l, k, stride);
    let mut out = vec![0.0; out_len];
    for (pos, slot) in out.iter_mut().enumerate() {
        let base = pos * stride.get();
        let mut acc = 0.0;
        for j in 0..k {
            acc += u.data[j] * x.data[base + j];
        }
        *slot = acc;
    }
    Ok(Tensor::from_vec(out))
}

/// Valid-mode multi-channel 2D correlation with per-output-channel bias.
///
/// `input` is `C_in x H x W`, `kernels` is `C_out x C_in x Kh x Kw`, `bias`
/// has length `C_out`. No activation is applied. The accumulation order is
/// bias first, then channels, then kernel rows, then kernel columns.
pub fn conv_valid_2d(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: Stride,
) -> Result<Tensor> {
    if input.rank() != 3 || kernels.rank() != 4 || bias.rank() != 1 {
        return Err(Error::ShapeMismatch(
            "conv_valid_2d expects input C x H x W, kernels O x C x Kh x Kw, bias O".into(),
        ));
    }
    let (c_in, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (c_out, kc, kh, kw) = (
        kernels.shape[0],
        kernels.shape[1],
        kernels.shape[2],
        kernels.shape[3],
    );
    if kc != c_in {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {kc} input channels, input has {c_in}"
        )));
    }
    if bias.len() != c_out {
        return Err(Error::ShapeMismatch(format!(
            "bias length {} does not match {c_out} output channels",
            bias.len()
        )));
    }
    if kh > h || kw > w {
        return Err(Error::InvalidArgument(format!(
            "kernel {kh}x{kw} exceeds spatial extent {h}x{w}"
        )));
    }
    let oh = valid_out_len(h, kh, stride);
    let ow = valid_out_len(w, kw, stride);
    let z = stride.get();
    let mut out = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias.data[o];
                for c in 0..c_in {
                    for a in 0..kh {
                        let in_row = (c * h + (z * i + a)) * w + z * j;
                        let k_row = ((o * c_in + c) * kh + a) * kw;
                        for b in 0..kw {
                            acc += kernels.data[k_row + b] * input.data[in_row + b];
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    Tensor::new(vec![c_out, oh, ow], out)
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
    }
}

/// Per-channel maxima over valid-mode strided square windows.
pub fn max_pool_2d(input: &Tensor, window: usize, stride: Stride) -> Result<Tensor> {
    if input.rank() != 3 {
        return Err(Error::ShapeMismatch("max_pool_2d expects C x H x W".into()));
    }
    if window < 1 {
        return Err(Error::InvalidArgument("pool window must be >= 1".into()));
    }
    let (c_n, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    if window > h || window > w {
        return Err(Error::InvalidArgument(format!(
            "pool window {window} exceeds spatial extent {h}x{w}"
        )));
    }
    let oh = valid_out_len(h, window, stride);
    let ow = valid_out_len(w, window, stride);
    let z = stride.get();
    let mut out = vec![0.0; c_n * oh * ow];
    for c in 0..c_n {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for a in 0..window {
                    for b in 0..window {
                        let v = input.data[(c * h + (z * i + a)) * w + (z * j + b)];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(c * oh + i) * ow + j] = best;
            }
        }
    }
    Tensor::new(vec![c_n, oh, ow], out)
}

/// `W x` for a `k x d` matrix and a length-`d` vector.
pub fn matvec(w: &Tensor, x: &Tensor) -> Result<Tensor> {
    if w.rank() != 2 || x.rank() != 1 {
        return Err(Error::ShapeMismatch("matvec expects k x d and d".into()));
    }
    let (k, d) = (w.shape[0], w.shape[1]);
    if x.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "matrix is {k}x{d} but vector has length {}",
            x.len()
        )));
    }
    let mut out = vec![0.0; k];
    for (row, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for col in 0..d {
            acc += w.data[row * d + col] * x.data[col];
        }
        *slot = acc;
    }
    Ok(Tensor::from_vec(out))
}

/// Elementwise sum of two tensors of identical shape (residual merge).
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch(format!(
            "cannot add {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

/// Scalar multiple.
pub fn scale(x: &Tensor, factor: f64) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|v| v * factor).collect(),
    }
}

/// Inner product of two rank-1 tensors.
pub fn dot(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.rank() != 1 || b.rank() != 1 || a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "dot expects equal-length vectors, got {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a.data[i] * b.data[i];
    }
    Ok(acc)
}

/// Stacks rank-3 tensors along the channel axis; spatial dims must agree.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::InvalidArgument("concat of zero tensors".into()));
    }
    let (h, w) = (parts[0].shape[1], parts[0].shape[2]);
    let mut channels = 0;
    for t in parts {
        if t.rank() != 3 {
            return Err(Error::ShapeMismatch("concat_channels expects rank-3".into()));
        }
        if t.shape[1] != h || t.shape[2] != w {
            return Err(Error::ShapeMismatch(format!(
                "spatial dims differ: {h}x{w} vs {}x{}",
                t.shape[1], t.shape[2]
            )));
        }
        channels += t.shape[0];
    }
    let mut data = Vec::with_capacity(channels * h * w);
    for t in parts {
        data.extend_from_slice(&t.data);
    }
    Tensor::new(vec![channels, h, w], data)
}
