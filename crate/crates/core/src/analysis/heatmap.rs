use serde::Serialize;

use super::DepthSizeSample;
use crate::error::{Error, Result};
use crate::netpbm::encode_pgm8;

/// Bins per axis when none are given.
pub const DEFAULT_BINS: usize = 20;

/// Sample counts over (area, mean depth). `cells` is row-major with
/// `bins_y` rows; row 0 holds the smallest depths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap2D {
    pub bins_x: usize,
    pub bins_y: usize,
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub cells: Vec<u64>,
}

impl Heatmap2D {
    pub fn get(&self, bx: usize, by: usize) -> u64 {
        self.cells[by * self.bins_x + bx]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    /// `x_edges,..` and `y_edges,..` header rows, then one row of counts per
    /// depth bin, smallest first.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (label, edges) in [("x_edges", &self.x_edges), ("y_edges", &self.y_edges)] {
            out.push_str(label);
            for e in edges {
                out.push_str(&format!(",{e}"));
            }
            out.push('\n');
        }
        for row in self.cells.chunks(self.bins_x) {
            let cols: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        out
    }

    /// 8-bit PGM, one pixel per cell, counts min-max scaled. Depth grows
    /// upwards as in a plot. A constant map renders black when empty and
    /// white otherwise.
    pub fn to_pgm(&self) -> Vec<u8> {
        let lo = self.cells.iter().copied().min().unwrap_or(0);
        let hi = self.cells.iter().copied().max().unwrap_or(0);
        let mut px = Vec::with_capacity(self.cells.len());
        for row in self.cells.chunks(self.bins_x).rev() {
            for &c in row {
                let v = if hi > lo {
                    (255.0 * (c - lo) as f64 / (hi - lo) as f64).round() as u8
                } else if hi > 0 {
                    255
                } else {
                    0
                };
                px.push(v);
            }
        }
        encode_pgm8(self.bins_x, self.bins_y, &px)
    }
}

/// `bins + 1` uniform edges over `[lo, hi]`, or the single bin `[lo, lo]`
/// when the range is empty.
fn edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    if hi <= lo {
        return vec![lo, lo];
    }
    let mut e: Vec<f64> = (0..bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
    e.push(hi);
    e
}

/// Index of the bin holding `v`: the number of interior edges `<= v`, so
/// the upper edge falls in the last bin.
fn bin_of(edges: &[f64], v: f64) -> usize {
    edges[1..edges.len() - 1].partition_point(|&e| e <= v)
}

/// Bins samples by area (x) and mean depth (y) on edges spanning each axis'
/// own range. An axis on which every sample agrees collapses to one bin.
pub fn build_heatmap(samples: &[DepthSizeSample], bins_x: usize, bins_y: usize) -> Result<Heatmap2D> {
    if bins_x == 0 || bins_y == 0 {
        return Err(Error::param("heatmap needs at least one bin per axis"));
    }
    if samples.is_empty() {
        return Err(Error::param("heatmap needs at least one sample"));
    }
    if let Some(s) = samples.iter().find(|s| !(s.area.is_finite() && s.mean_depth.is_finite())) {
        return Err(Error::param(format!(
            "non-finite sample (area {}, mean depth {}) for image '{}'",
            s.area, s.mean_depth, s.image_id
        )));
    }
    let range = |f: fn(&DepthSizeSample) -> f64| {
        samples
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (xlo, xhi) = range(|s| s.area);
    let (ylo, yhi) = range(|s| s.mean_depth);
    let x_edges = edges(xlo, xhi, bins_x);
    let y_edges = edges(ylo, yhi, bins_y);
    let (nx, ny) = (x_edges.len() - 1, y_edges.len() - 1);
    let mut cells = vec![0u64; nx * ny];
    for s in samples {
        cells[bin_of(&y_edges, s.mean_depth) * nx + bin_of(&x_edges, s.area)] += 1;
    }
    Ok(Heatmap2D {
        bins_x: nx,
        bins_y: ny,
        x_edges,
        y_edges,
        cells,
    })
}

/// Cosine similarity of the two maps after each is scaled to unit mass.
/// Edges are not compared: each map keeps its local scale.
pub fn heatmap_similarity(a: &Heatmap2D, b: &Heatmap2D) -> Result<f64> {
    if (a.bins_x, a.bins_y) != (b.bins_x, b.bins_y) {
        return Err(Error::param(format!(
            "heatmap dimensions differ: {}x{} vs {}x{}",
            a.bins_x, a.bins_y, b.bins_x, b.bins_y
        )));
    }
    let (ma, mb) = (a.total(), b.total());
    if ma == 0 || mb == 0 {
        return Err(Error::param("heatmap with zero mass has no pattern to compare"));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.cells.iter().zip(&b.cells) {
        let (p, q) = (x as f64 / ma as f64, y as f64 / mb as f64);
        dot += p * q;
        na += p * p;
        nb += q * q;
    }
    Ok((dot / (na * nb).sqrt()).clamp(0.0, 1.0))
}

/// Reads the layout written by [`Heatmap2D::to_csv`].
pub fn parse_heatmap_csv(text: &str) -> Result<Heatmap2D> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut header = |label: &str| -> Result<Vec<f64>> {
        let (i, l) = lines.next().ok_or_else(|| Error::Line {
            line: 0,
            msg: format!("missing {label} row"),
        })?;
        let err = |msg: String| Error::Line { line: i + 1, msg };
        let mut cols = l.split(',');
        if cols.next().map(str::trim) != Some(label) {
            return Err(err(format!("expected a {label} row")));
        }
        let e = cols
            .map(|c| c.trim().parse::<f64>().map_err(|e| err(format!("bad edge {c:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if e.len() < 2 || e.iter().any(|v| !v.is_finite()) || e.windows(2).any(|w| w[1] < w[0]) {
            return Err(err(format!("{label} must be at least two finite non-decreasing values")));
        }
        Ok(e)
    };
    let x_edges = header("x_edges")?;
    let y_edges = header("y_edges")?;
    let (bins_x, bins_y) = (x_edges.len() - 1, y_edges.len() - 1);
    let mut cells = Vec::with_capacity(bins_x * bins_y);
    let mut rows = 0;
    for (i, l) in lines {
        let err = |msg: String| Error::Line { line: i + 1, msg };
        let row = l
            .split(',')
            .map(|c| c.trim().parse::<u64>().map_err(|e| err(format!("bad count {c:?}: {e}"))))
            .collect::<Result<Vec<u64>>>()?;
        if row.len() != bins_x {
            return Err(err(format!("row has {} counts, expected {bins_x}", row.len())));
        }
        cells.extend(row);
        rows += 1;
    }
    if rows != bins_y {
        return Err(Error::Line {
            line: text.lines().count(),
            msg: format!("{rows} count rows, expected {bins_y}"),
        });
    }
    Ok(Heatmap2D {
        bins_x,
        bins_y,
        x_edges,
        y_edges,
        cells,
    })
}
