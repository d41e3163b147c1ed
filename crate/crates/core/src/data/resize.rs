//! Corner-aligned bilinear resampling.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Resizes a `C x H x W` image by bilinear interpolation on the
/// corner-aligned grid: source coordinate `= i * (in - 1) / (out - 1)` when
/// `out > 1`, else 0. Output values stay within the input's value range.
pub fn resize_bilinear(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if image.rank() != 3 {
        return Err(Error::ShapeMismatch("resize expects C x H x W".into()));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("output dims must be positive".into()));
    }
    let (channels, in_h, in_w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let src = |out_idx: usize, out_len: usize, in_len: usize| -> f64 {
        if out_len > 1 {
            out_idx as f64 * (in_len - 1) as f64 / (out_len - 1) as f64
        } else {
            0.0
        }
    };

    let mut data = vec![0.0; channels * out_h * out_w];
    for c in 0..channels {
        for i in 0..out_h {
            let y = src(i, out_h, in_h);
            let y0 = y.floor() as usize;
            let y1 = (y0 + 1).min(in_h - 1);
            let fy = y - y0 as f64;
            for j in 0..out_w {
                let x = src(j, out_w, in_w);
                let x0 = x.floor() as usize;
                let x1 = (x0 + 1).min(in_w - 1);
                let fx = x - x0 as f64;

                let p00 = image.at3(c, y0, x0);
                let p01 = image.at3(c, y0, x1);
                let p10 = image.at3(c, y1, x0);
                let p11 = image.at3(c, y1, x1);
                let top = p00 + (p01 - p00) * fx;
                let bottom = p10 + (p11 - p10) * fx;
                data[(c * out_h + i) * out_w + j] = top + (bottom - top) * fy;
            }
        }
    }
    Tensor::new(vec![channels, out_h, out_w], data)
}
