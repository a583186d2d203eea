use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite-volume partition of the size interval `[0, m]`.
///
/// Every size-dependent quantity in the crate lives on the cell midpoints;
/// the edges carry the transport fluxes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeGrid {
    m: f64,
    edges: Vec<f64>,
    midpoints: Vec<f64>,
    weights: Vec<f64>,
}

impl SizeGrid {
    pub fn uniform(m: f64, n_cells: usize) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Argument(format!("maximal size must be positive, got {m}")));
        }
        if n_cells == 0 {
            return Err(Error::Argument("grid needs at least one cell".into()));
        }
        let h = m / n_cells as f64;
        let mut edges: Vec<f64> = (0..=n_cells).map(|i| i as f64 * h).collect();
        edges[n_cells] = m;
        Self::from_edges(edges)
    }

    /// Builds a grid from explicit, strictly increasing edges starting at 0.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Argument("grid needs at least two edges".into()));
        }
        if edges[0] != 0.0 {
            return Err(Error::Argument(format!("first edge must be 0, got {}", edges[0])));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("grid edges must be finite and strictly increasing".into()));
        }
        let m = *edges.last().unwrap();
        let midpoints = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let weights = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { m, edges, midpoints, weights })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn n_cells(&self) -> usize {
        self.weights.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest cell width.
    pub fn h_max(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Samples `f` on the midpoints.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.midpoints.iter().map(|&s| f(s)).collect()
    }
}

/// Closed axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rectangle {
    pub re_lo: f64,
    pub re_hi: f64,
    pub im_lo: f64,
    pub im_hi: f64,
}

impl Rectangle {
    pub fn new(re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64) -> Result<Self> {
        let finite = [re_lo, re_hi, im_lo, im_hi].iter().all(|v| v.is_finite());
        if !finite || re_lo >= re_hi || im_lo >= im_hi {
            return Err(Error::Argument(format!(
                "degenerate rectangle [{re_lo}, {re_hi}] x [{im_lo}, {im_hi}]"
            )));
        }
        Ok(Self { re_lo, re_hi, im_lo, im_hi })
    }

    pub fn width(&self) -> f64 {
        self.re_hi - self.re_lo
    }

    pub fn height(&self) -> f64 {
        self.im_hi - self.im_lo
    }

    pub fn contains(&self, re: f64, im: f64) -> bool {
        re >= self.re_lo && re <= self.re_hi && im >= self.im_lo && im <= self.im_hi
    }

    /// Same rectangle grown by `frac` of its size on every side.
    pub fn expanded(&self, frac: f64) -> Self {
        let dx = frac * self.width();
        let dy = frac * self.height();
        Self {
            re_lo: self.re_lo - dx,
            re_hi: self.re_hi + dx,
            im_lo: self.im_lo - dy,
            im_hi: self.im_hi + dy,
        }
    }

    /// Splits at the relative position `(fx, fy)` into four children.
    pub fn quadrisect(&self, fx: f64, fy: f64) -> [Rectangle; 4] {
        let xm = self.re_lo + fx * self.width();
        let ym = self.im_lo + fy * self.height();
        [
            Rectangle { re_lo: self.re_lo, re_hi: xm, im_lo: self.im_lo, im_hi: ym },
            Rectangle { re_lo: xm, re_hi: self.re_hi, im_lo: self.im_lo, im_hi: ym },
            Rectangle { re_lo: self.re_lo, re_hi: xm, im_lo: ym, im_hi: self.im_hi },
            Rectangle { re_lo: xm, re_hi: self.re_hi, im_lo: ym, im_hi: self.im_hi },
        ]
    }
}
