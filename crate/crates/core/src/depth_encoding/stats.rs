use serde::{Deserialize, Serialize};

use super::{ChannelImage, Channels};
use crate::error::{Error, Result};

/// Per-channel population mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn num_channels(&self) -> usize {
        self.mean.len()
    }

    /// Inverse of [`normalize_encoding`] on valid pixels.
    pub fn denormalize(&self, image: &ChannelImage) -> ChannelImage {
        let mut out = image.clone();
        for (c, ch) in out.channels.iter_mut().enumerate() {
            for (v, &ok) in ch.iter_mut().zip(&image.valid) {
                if ok {
                    *v = *v * self.std[c] + self.mean[c];
                }
            }
        }
        out
    }
}

/// Mean and std over all valid pixels of all images (Welford update, images
/// and pixels visited in order).
pub fn compute_channel_stats(images: &[&dyn Channels]) -> Result<ChannelStats> {
    let first = images
        .first()
        .ok_or_else(|| Error::param("no images supplied for channel statistics"))?;
    let nc = first.num_channels();
    if images.iter().any(|img| img.num_channels() != nc) {
        return Err(Error::param("images disagree on channel count"));
    }
    let mut mean = vec![0.0; nc];
    let mut std = vec![0.0; nc];
    for c in 0..nc {
        let (mut count, mut m, mut m2) = (0usize, 0.0f64, 0.0f64);
        for img in images {
            for (&v, &ok) in img.channel(c).iter().zip(img.valid()) {
                if ok {
                    count += 1;
                    let delta = v - m;
                    m += delta / count as f64;
                    m2 += delta * (v - m);
                }
            }
        }
        if count == 0 {
            return Err(Error::param(format!("channel {c} has no valid pixels")));
        }
        mean[c] = m;
        std[c] = (m2 / count as f64).max(0.0).sqrt();
    }
    Ok(ChannelStats { mean, std })
}

/// `(x - mean) / std` per channel on valid pixels; invalid pixels stay 0.
pub fn normalize_encoding(image: &dyn Channels, stats: &ChannelStats) -> Result<ChannelImage> {
    let nc = image.num_channels();
    if stats.mean.len() != nc || stats.std.len() != nc {
        return Err(Error::param(format!(
            "stats describe {} channels, image has {nc}",
            stats.mean.len()
        )));
    }
    if let Some(c) = stats.std.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::param(format!(
            "channel {c} has non-positive std {}",
            stats.std[c]
        )));
    }
    let valid = image.valid().to_vec();
    let channels = (0..nc)
        .map(|c| {
            image
                .channel(c)
                .iter()
                .zip(&valid)
                .map(|(&v, &ok)| if ok { (v - stats.mean[c]) / stats.std[c] } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(ChannelImage {
        width: image.width(),
        height: image.height(),
        channels,
        valid,
    })
}
