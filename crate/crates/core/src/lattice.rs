use serde::{Deserialize, Serialize};

use crate::env::EnvField;
use crate::error::{Error, Result};

/// Per-slice grids `x_k(j) = x + (y - x) k / n + j * delta`, `|j| <= W`, with
/// the path pinned to index `start_index` at `k = 0` and `end_index` at `k = n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedLattice {
    pub n: usize,
    pub start: f64,
    pub end: f64,
    pub delta: f64,
    pub half_width: usize,
    pub start_index: i64,
    pub end_index: i64,
}

impl TiltedLattice {
    /// Untilted lattice for the sheared problem, paths from 0 to 0.
    pub fn sheared(n: usize, delta: f64, half_width: usize) -> Self {
        Self::point_to_point(n, 0.0, 0.0, delta, half_width)
    }

    /// Lattice tilted along the segment from `x` at time 0 to `y` at time `n`.
    pub fn point_to_point(n: usize, x: f64, y: f64, delta: f64, half_width: usize) -> Self {
        TiltedLattice {
            n,
            start: x,
            end: y,
            delta,
            half_width,
            start_index: 0,
            end_index: 0,
        }
    }

    pub fn with_endpoint_indices(mut self, start_index: i64, end_index: i64) -> Self {
        self.start_index = start_index;
        self.end_index = end_index;
        self
    }

    pub fn with_half_width(mut self, half_width: usize) -> Self {
        self.half_width = half_width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("path length must be at least 1"));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::invalid("lattice spacing must be positive"));
        }
        if self.half_width == 0 {
            return Err(Error::invalid("lattice half width must be positive"));
        }
        if !(self.start.is_finite() && self.end.is_finite()) {
            return Err(Error::invalid("lattice endpoints must be finite"));
        }
        let w = self.half_width as i64;
        if self.start_index.abs() > w || self.end_index.abs() > w {
            return Err(Error::invalid("pinned endpoint index lies outside the window"));
        }
        Ok(())
    }

    pub fn slope(&self) -> f64 {
        (self.end - self.start) / self.n as f64
    }

    pub fn nodes(&self) -> usize {
        2 * self.half_width + 1
    }

    #[inline]
    pub fn base(&self, k: usize) -> f64 {
        if k == 0 {
            self.start
        } else if k == self.n {
            self.end
        } else {
            self.start + (self.end - self.start) * k as f64 / self.n as f64
        }
    }

    #[inline]
    pub fn position(&self, k: usize, j: i64) -> f64 {
        self.base(k) + j as f64 * self.delta
    }

    /// Positions of all nodes of slice `k`, in increasing `j`.
    pub fn slice_positions(&self, k: usize) -> Vec<f64> {
        let w = self.half_width as i64;
        (-w..=w).map(|j| self.position(k, j)).collect()
    }

    /// Increment between consecutive slices for an index jump `d`, with the
    /// extra `shift` added inside `V` (the velocity of the sheared problem).
    #[inline]
    pub fn increment(&self, d: i64, shift: f64) -> f64 {
        d as f64 * self.delta + (self.slope() + shift)
    }
}

/// Additive path statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PathStats {
    pub vbar: f64,
    pub fbar: f64,
    pub vprime_bar: f64,
    pub hess_sup_bar: f64,
}

/// Values of `beta * F_k` on slices `0..n` of the lattice.
pub(crate) fn potential_table(field: &EnvField, lattice: &TiltedLattice, beta: f64) -> Vec<Vec<f64>> {
    (0..lattice.n)
        .map(|k| {
            field
                .evaluate_slice(k as i64, &lattice.slice_positions(k))
                .into_iter()
                .map(|f| beta * f)
                .collect()
        })
        .collect()
}

/// Runs `solve` at the half width `w`, then `2w` and `4w` while it reports
/// boundary contact; every result of the returned family shares one window.
pub fn common_window<T, F>(half_width: usize, mut solve: F) -> Result<Vec<T>>
where
    F: FnMut(usize) -> Result<(Vec<T>, bool)>,
{
    let mut w = half_width;
    for attempt in 0..3 {
        let (out, touched) = solve(w)?;
        if !touched {
            return Ok(out);
        }
        if attempt < 2 {
            w *= 2;
        }
    }
    Err(Error::WindowExhausted { half_width: w })
}
