use nalgebra::{Matrix3, Vector3};

use super::Vec3;
use crate::error::{Error, Result};

/// Camera frame has x right, y down, z forward; gravity points along +y for a
/// level camera. The estimate keeps this "down" orientation, so a floor's
/// camera-facing normal is anti-parallel to it.
pub const CAMERA_DOWN: Vec3 = [0.0, 1.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityEstimate {
    pub direction: Vec3,
    pub iterations_run: usize,
    pub converged: bool,
    pub parallel_count: usize,
    pub orthogonal_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityParams {
    pub max_iters: usize,
    /// Cluster half-width on the first pass, degrees.
    pub initial_threshold_deg: f64,
    /// Cluster half-width on later passes, degrees.
    pub refined_threshold_deg: f64,
    /// Stop once successive estimates differ by less than this angle.
    pub tolerance_rad: f64,
}

impl Default for GravityParams {
    fn default() -> Self {
        GravityParams {
            max_iters: 5,
            initial_threshold_deg: 45.0,
            refined_threshold_deg: 15.0,
            tolerance_rad: 1e-4,
        }
    }
}

/// Alternates between clustering normals against the current gravity
/// estimate and re-fitting gravity to the clusters.
///
/// A normal is "parallel" when its (unsigned) angle to gravity is below the
/// threshold and "orthogonal" when its angle to the perpendicular plane is.
/// The new direction minimises `sum_par sin^2 + sum_orth cos^2`, i.e. it is the
/// eigenvector of the smallest eigenvalue of
/// `sum_orth n n^T - sum_par n n^T`, signed to agree with the previous estimate.
///
/// If no normal falls in either cluster on the first pass, `initial` is
/// returned unconverged; on later passes the last estimate is returned.
pub fn estimate_gravity(
    normals: &[Option<Vec3>],
    initial: Vec3,
    params: &GravityParams,
) -> Result<GravityEstimate> {
    let g0 = Vector3::from(initial);
    if !((g0.norm() - 1.0).abs() < 1e-6) {
        return Err(Error::param("initial gravity direction must be a unit vector"));
    }
    if params.max_iters == 0 {
        return Err(Error::param("max_iters must be at least 1"));
    }
    let mut g = g0;
    let mut result = GravityEstimate {
        direction: initial,
        iterations_run: 0,
        converged: false,
        parallel_count: 0,
        orthogonal_count: 0,
    };

    for iter in 1..=params.max_iters {
        let threshold = if iter == 1 {
            params.initial_threshold_deg
        } else {
            params.refined_threshold_deg
        };
        let sin_thr = threshold.to_radians().sin();
        let cos_thr = threshold.to_radians().cos();
        let mut m = Matrix3::<f64>::zeros();
        let (mut n_par, mut n_orth) = (0, 0);
        for n in normals.iter().flatten() {
            let n = Vector3::from(*n);
            let c = n.dot(&g).abs();
            if c > cos_thr {
                m -= n * n.transpose();
                n_par += 1;
            } else if c < sin_thr {
                m += n * n.transpose();
                n_orth += 1;
            }
        }
        result.iterations_run = iter;
        result.parallel_count = n_par;
        result.orthogonal_count = n_orth;
        if n_par == 0 && n_orth == 0 {
            result.converged = false;
            return Ok(result);
        }

        let eig = m.symmetric_eigen();
        let imin = (0..3)
            .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
            .unwrap_or(0);
        let mut next: Vector3<f64> = eig.eigenvectors.column(imin).normalize();
        if next.dot(&g) < 0.0 {
            next = -next;
        }
        let change = next.dot(&g).clamp(-1.0, 1.0).acos();
        g = next;
        result.direction = [g[0], g[1], g[2]];
        if change < params.tolerance_rad {
            result.converged = true;
            break;
        }
    }
    Ok(result)
}
