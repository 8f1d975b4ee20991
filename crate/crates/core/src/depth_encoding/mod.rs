//! Depth map encodings: linear grayscale, jet false colour and the
//! disparity / height / gravity-angle ("HDHA") three-channel image, together
//! with the geometry they need (back-projection, normals, gravity).

mod geometry;
mod gravity;
mod grayscale;
mod hdha;
mod jet;
mod stats;

pub use geometry::{depth_to_pointcloud, surface_normals, PointCloud, DEFAULT_K_NEIGHBORS};
pub use gravity::{estimate_gravity, GravityEstimate, GravityParams, CAMERA_DOWN};
pub use grayscale::{grayscale_encode, GrayscaleDepth};
pub use hdha::{hdha_encode, hdha_pipeline, HdhaConfig, HdhaImage};
pub use jet::{jet_encode, jet_table, JetDepth};
pub use stats::{compute_channel_stats, normalize_encoding, ChannelStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netpbm::Netpbm;

pub type Vec3 = [f64; 3];

/// Metric depth in metres, row-major, with an explicit validity mask.
///
/// Invalid pixels always store `0.0`; every valid value is finite and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Zero, negative and non-finite samples become invalid.
    pub fn from_meters(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("depth map dimensions must be non-zero"));
        }
        if values.len() != width * height {
            return Err(Error::param(format!(
                "depth map has {} samples, expected {}x{}",
                values.len(),
                width,
                height
            )));
        }
        let valid: Vec<bool> = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        let values = values
            .into_iter()
            .zip(&valid)
            .map(|(v, &ok)| if ok { v } else { 0.0 })
            .collect();
        Ok(DepthMap {
            width,
            height,
            values,
            valid,
        })
    }

    /// Accepts a 16-bit PGM in millimetres or a single-channel PFM in metres.
    pub fn from_netpbm(img: &Netpbm) -> Result<Self> {
        match img {
            Netpbm::Pgm { maxval, raster } if *maxval > 255 => Self::from_meters(
                raster.width,
                raster.height,
                raster.data.iter().map(|&mm| f64::from(mm) / 1000.0).collect(),
            ),
            Netpbm::Pgm { .. } => Err(Error::parse(
                0,
                "8-bit PGM is not a depth format (expected maxval 65535, millimetres)",
            )),
            Netpbm::Pfm { raster } if raster.channels == 1 => Self::from_meters(
                raster.width,
                raster.height,
                raster.data.iter().map(|&v| f64::from(v)).collect(),
            ),
            Netpbm::Pfm { .. } => Err(Error::parse(0, "colour PFM is not a depth format")),
            Netpbm::Ppm { .. } => Err(Error::parse(0, "PPM is not a depth format")),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid_count() as f64 / self.valid.len() as f64
    }

    /// Range of valid depths, `None` when no pixel is valid.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .fold(None, |acc, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

/// Pinhole intrinsics plus the baseline of the virtual stereo partner used
/// for the disparity channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default = "default_baseline")]
    pub baseline: f64,
}

fn default_baseline() -> f64 {
    CameraIntrinsics::DEFAULT_BASELINE
}

impl CameraIntrinsics {
    pub const DEFAULT_BASELINE: f64 = 0.075;

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.fx) || !positive(self.fy) {
            return Err(Error::param("focal lengths must be positive"));
        }
        if !positive(self.baseline) {
            return Err(Error::param("baseline must be positive"));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::param("principal point must be finite"));
        }
        Ok(())
    }
}

/// Read access to a multi-channel per-pixel encoding.
pub trait Channels {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn num_channels(&self) -> usize;
    fn channel(&self, c: usize) -> &[f64];
    fn valid(&self) -> &[bool];
}

impl Channels for DepthMap {
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
        assert_eq!(c, 0, "depth map has one channel");
        &self.values
    }
    fn valid(&self) -> &[bool] {
        &self.valid
    }
}

/// Generic float image with per-pixel validity, used for normalized output.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImage {
    pub width: usize,
    pub height: usize,
    pub channels: Vec<Vec<f64>>,
    pub valid: Vec<bool>,
}

impl Channels for ChannelImage {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn num_channels(&self) -> usize {
        self.channels.len()
    }
    fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }
    fn valid(&self) -> &[bool] {
        &self.valid
    }
}

impl ChannelImage {
    /// Interleaved `f32` samples suitable for a PFM writer.
    pub fn interleaved_f32(&self) -> Vec<f32> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(n * self.channels.len());
        for i in 0..n {
            for ch in &self.channels {
                out.push(ch[i] as f32);
            }
        }
        out
    }
}

/// Float to 8-bit: round half away from zero, then clamp.
#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Per-channel min/max stretch of valid pixels to `[0, 255]`, interleaved.
/// Invalid pixels and constant channels encode to 0.
pub fn minmax_to_u8(img: &dyn Channels) -> Vec<u8> {
    let n = img.width() * img.height();
    let nc = img.num_channels();
    let valid = img.valid();
    let mut out = vec![0u8; n * nc];
    for c in 0..nc {
        let ch = img.channel(c);
        let range = ch
            .iter()
            .zip(valid)
            .filter(|(_, ok)| **ok)
            .fold(None, |acc: Option<(f64, f64)>, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            });
        let Some((lo, hi)) = range else { continue };
        if hi <= lo {
            continue;
        }
        for i in 0..n {
            if valid[i] {
                out[i * nc + c] = quantize_u8(255.0 * (ch[i] - lo) / (hi - lo));
            }
        }
    }
    out
}
