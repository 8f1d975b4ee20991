use nalgebra::{Matrix3, Vector3};

use super::{CameraIntrinsics, DepthMap, Vec3};
use crate::error::{Error, Result};

pub const DEFAULT_K_NEIGHBORS: usize = 25;

/// Back-projected valid pixels, in row-major pixel order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Vec3>,
    /// Row-major pixel index each point came from.
    pub pixels: Vec<usize>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Pixel-grid lookup from pixel index to point index.
    pub fn grid_index(&self) -> Vec<Option<usize>> {
        let mut grid = vec![None; self.width * self.height];
        for (i, &p) in self.pixels.iter().enumerate() {
            grid[p] = Some(i);
        }
        grid
    }
}

pub fn depth_to_pointcloud(depth: &DepthMap, cam: &CameraIntrinsics) -> Result<PointCloud> {
    cam.validate()?;
    let mut points = Vec::with_capacity(depth.valid_count());
    let mut pixels = Vec::with_capacity(points.capacity());
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            if let Some(d) = depth.get(u, v) {
                points.push([
                    (u as f64 - cam.cx) * d / cam.fx,
                    (v as f64 - cam.cy) * d / cam.fy,
                    d,
                ]);
                pixels.push(v * depth.width() + u);
            }
        }
    }
    Ok(PointCloud {
        width: depth.width(),
        height: depth.height(),
        points,
        pixels,
    })
}

/// Per-point unit normals from a pixel-grid neighbourhood fit.
///
/// The neighbourhood of a point is the smallest square window around its
/// pixel that holds at least `k_neighbors` valid points (or the whole image if
/// it has fewer). The normal is the eigenvector of the smallest eigenvalue of
/// the neighbourhood covariance, oriented so that `normal . point <= 0`.
/// Neighbourhoods of rank below two yield `None`.
pub fn surface_normals(cloud: &PointCloud, k_neighbors: usize) -> Result<Vec<Option<Vec3>>> {
    if cloud.is_empty() {
        return Err(Error::param("point cloud is empty"));
    }
    if k_neighbors < 3 {
        return Err(Error::param("k_neighbors must be at least 3"));
    }
    let grid = cloud.grid_index();
    let (w, h) = (cloud.width as isize, cloud.height as isize);
    let max_radius = w.max(h);
    let mut normals = Vec::with_capacity(cloud.len());
    let mut window = Vec::with_capacity(4 * k_neighbors);

    for &pix in &cloud.pixels {
        let (u, v) = ((pix % cloud.width) as isize, (pix / cloud.width) as isize);
        let mut r = 1;
        loop {
            window.clear();
            for y in (v - r).max(0)..=(v + r).min(h - 1) {
                for x in (u - r).max(0)..=(u + r).min(w - 1) {
                    if let Some(i) = grid[(y * w + x) as usize] {
                        window.push(i);
                    }
                }
            }
            if window.len() >= k_neighbors || r >= max_radius {
                break;
            }
            r += 1;
        }
        let p = cloud.points[window_center(&grid, pix)];
        normals.push(fit_normal(&cloud.points, &window).map(|n| orient(n, p)));
    }
    Ok(normals)
}

fn window_center(grid: &[Option<usize>], pix: usize) -> usize {
    grid[pix].expect("pixel of a cloud point is in the grid")
}

fn orient(n: Vec3, p: Vec3) -> Vec3 {
    if n[0] * p[0] + n[1] * p[1] + n[2] * p[2] > 0.0 {
        [-n[0], -n[1], -n[2]]
    } else {
        n
    }
}

fn fit_normal(points: &[Vec3], idx: &[usize]) -> Option<Vec3> {
    if idx.len() < 3 {
        return None;
    }
    let n = idx.len() as f64;
    let mut mean = Vector3::zeros();
    for &i in idx {
        mean += Vector3::from(points[i]);
    }
    mean /= n;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = Vector3::from(points[i]) - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l1, l2) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    // rank < 2: collinear or coincident points
    if l2 <= 0.0 || l1 <= l2 * 1e-12 {
        return None;
    }
    let e = eig.eigenvectors.column(order[0]).normalize();
    Some([e[0], e[1], e[2]])
}
