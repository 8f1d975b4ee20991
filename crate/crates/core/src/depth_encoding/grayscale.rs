use super::{quantize_u8, Channels, DepthMap};
use crate::error::{Error, Result};

/// Linear depth-to-intensity map; `values` keep the unquantized level.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayscaleDepth {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub quantized: Vec<u8>,
    pub valid: Vec<bool>,
}

/// `255 (d - d_min) / (d_max - d_min)`, clamped to `[0, 255]`.
/// Invalid pixels map to 0.
pub fn grayscale_encode(depth: &DepthMap, d_min: f64, d_max: f64) -> Result<GrayscaleDepth> {
    if !(d_min.is_finite() && d_max.is_finite()) || d_max <= d_min {
        return Err(Error::param(format!(
            "grayscale range requires d_max > d_min (got d_min={d_min}, d_max={d_max})"
        )));
    }
    let span = d_max - d_min;
    let values: Vec<f64> = depth
        .values()
        .iter()
        .zip(depth.valid())
        .map(|(&d, &ok)| {
            if ok {
                (255.0 * (d - d_min) / span).clamp(0.0, 255.0)
            } else {
                0.0
            }
        })
        .collect();
    let quantized = values.iter().map(|&v| quantize_u8(v)).collect();
    Ok(GrayscaleDepth {
        width: depth.width(),
        height: depth.height(),
        values,
        quantized,
        valid: depth.valid().to_vec(),
    })
}

impl Channels for GrayscaleDepth {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn num_channels(&self) -> usize {
        1
    }
    fn channel(&self, c: usize) -> &[f64] {
        assert_eq!(c, 0, "grayscale has one channel");
        &self.values
    }
    fn valid(&self) -> &[bool] {
        &self.valid
    }
}
