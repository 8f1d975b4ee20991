use super::{
    depth_to_pointcloud, estimate_gravity, surface_normals, CameraIntrinsics, ChannelImage,
    Channels, DepthMap, GravityEstimate, GravityParams, Vec3, CAMERA_DOWN, DEFAULT_K_NEIGHBORS,
};
use crate::error::{Error, Result};

/// Disparity / height / gravity-angle encoding.
///
/// A pixel is valid when its depth is valid and its normal could be fitted;
/// invalid pixels hold 0 in every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct HdhaImage {
    pub width: usize,
    pub height: usize,
    /// Horizontal disparity against the virtual stereo partner, pixels.
    pub hd: Vec<f64>,
    /// Height above the lowest valid point, metres.
    pub h: Vec<f64>,
    /// Angle between surface normal and gravity, degrees in `[0, 180]`.
    pub a: Vec<f64>,
    pub valid: Vec<bool>,
    pub normalized: Option<ChannelImage>,
}

impl Channels for HdhaImage {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn num_channels(&self) -> usize {
        3
    }
    fn channel(&self, c: usize) -> &[f64] {
        match c {
            0 => &self.hd,
            1 => &self.h,
            2 => &self.a,
            _ => panic!("HDHA has three channels, asked for {c}"),
        }
    }
    fn valid(&self) -> &[bool] {
        &self.valid
    }
}

/// `normals` must be aligned with the back-projection of `depth` (one entry
/// per valid pixel, row-major), as returned by [`surface_normals`].
pub fn hdha_encode(
    depth: &DepthMap,
    cam: &CameraIntrinsics,
    gravity: &GravityEstimate,
    normals: &[Option<Vec3>],
) -> Result<HdhaImage> {
    cam.validate()?;
    let g = gravity.direction;
    let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::param("gravity direction must be unit-norm"));
    }
    let cloud = depth_to_pointcloud(depth, cam)?;
    if normals.len() != cloud.len() {
        return Err(Error::param(format!(
            "{} normals supplied for {} valid pixels",
            normals.len(),
            cloud.len()
        )));
    }

    let n = depth.width() * depth.height();
    let mut hd = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut valid = vec![false; n];
    let mut lowest = f64::INFINITY;

    for ((p, &pix), normal) in cloud.points.iter().zip(&cloud.pixels).zip(normals) {
        let Some(nv) = normal else { continue };
        valid[pix] = true;
        hd[pix] = cam.fx * cam.baseline / p[2];
        // height grows against gravity
        let up = -(p[0] * g[0] + p[1] * g[1] + p[2] * g[2]);
        h[pix] = up;
        lowest = lowest.min(up);
        let c = (nv[0] * g[0] + nv[1] * g[1] + nv[2] * g[2]).clamp(-1.0, 1.0);
        a[pix] = c.acos().to_degrees();
    }
    for (hv, &ok) in h.iter_mut().zip(&valid) {
        if ok {
            *hv -= lowest;
        }
    }
    Ok(HdhaImage {
        width: depth.width(),
        height: depth.height(),
        hd,
        h,
        a,
        valid,
        normalized: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdhaConfig {
    pub k_neighbors: usize,
    pub initial_gravity: Vec3,
    pub gravity: GravityParams,
}

impl Default for HdhaConfig {
    fn default() -> Self {
        HdhaConfig {
            k_neighbors: DEFAULT_K_NEIGHBORS,
            initial_gravity: CAMERA_DOWN,
            gravity: GravityParams::default(),
        }
    }
}

/// Back-projection, normals, gravity estimation and encoding in one call.
pub fn hdha_pipeline(
    depth: &DepthMap,
    cam: &CameraIntrinsics,
    config: &HdhaConfig,
) -> Result<(HdhaImage, GravityEstimate)> {
    let cloud = depth_to_pointcloud(depth, cam)?;
    let normals = surface_normals(&cloud, config.k_neighbors)?;
    let gravity = estimate_gravity(&normals, config.initial_gravity, &config.gravity)?;
    let image = hdha_encode(depth, cam, &gravity, &normals)?;
    Ok((image, gravity))
}
