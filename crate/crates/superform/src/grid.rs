//! Rectangular sampling grids.
//!
//! Points are cell-centered: along axis `a` with `m` cells over `[lo, hi)`,
//! the samples sit at `lo + (i + 1/2) h` with `h = (hi - lo)/m`. This pairs
//! with the midpoint quadrature used throughout and keeps every sample a
//! strict interior point of its box. Flat indices are row-major with the
//! last axis fastest.

use crate::error::{Error, Result};

/// Cap on the total number of grid points.
pub const DEFAULT_POINT_CAP: usize = 1 << 22;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Boundary {
    /// Indices wrap; the box is a torus.
    Periodic,
    /// Fields are extended by zero outside the box (Dirichlet flavor).
    ZeroPad,
}

impl Boundary {
    pub fn as_str(&self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::ZeroPad => "zero-padded",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "zero-padded" => Ok(Boundary::ZeroPad),
            other => Err(Error::InvalidConfig(format!("unknown boundary `{other}`"))),
        }
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct Grid {
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    m: Vec<usize>,
    boundary: Boundary,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, m: Vec<usize>, boundary: Boundary) -> Result<Self> {
        let n = lo.len();
        if n == 0 || n > crate::algebra::MAX_DIM {
            return Err(Error::DimensionOutOfRange(n));
        }
        if hi.len() != n || m.len() != n {
            return Err(Error::InvalidGrid("lo/hi/m length mismatch".into()));
        }
        let mut total: usize = 1;
        for a in 0..n {
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {a}: need lo < hi, finite")));
            }
            if m[a] < 4 {
                return Err(Error::InvalidGrid(format!("axis {a}: need at least 4 cells")));
            }
            total = total
                .checked_mul(m[a])
                .ok_or_else(|| Error::InvalidGrid("point count overflow".into()))?;
        }
        if total > DEFAULT_POINT_CAP {
            return Err(Error::InvalidGrid(format!(
                "point count {total} exceeds cap {DEFAULT_POINT_CAP}"
            )));
        }
        Ok(Grid { n, lo, hi, m, boundary })
    }

    /// Cube `[lo, hi)^n` with `m` cells per axis.
    pub fn cube(n: usize, lo: f64, hi: f64, m: usize, boundary: Boundary) -> Result<Self> {
        Grid::new(vec![lo; n], vec![hi; n], vec![m; n], boundary)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn shape(&self) -> &[usize] {
        &self.m
    }

    /// Total number of points.
    pub fn len(&self) -> usize {
        self.m.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.m[axis] as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.n).map(|a| self.spacing(a)).collect()
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.n).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    /// Cell volume `prod_a h_a`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.n).map(|a| self.spacing(a)).product()
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        (0..self.n)
            .map(|a| (self.hi[a] - self.lo[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Multi-index of a flat index (row-major, last axis fastest).
    pub fn coords(&self, flat: usize) -> Vec<usize> {
        let mut c = vec![0; self.n];
        let mut rest = flat;
        for a in (0..self.n).rev() {
            c[a] = rest % self.m[a];
            rest /= self.m[a];
        }
        c
    }

    pub fn flat(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        for a in 0..self.n {
            debug_assert!(coords[a] < self.m[a]);
            idx = idx * self.m[a] + coords[a];
        }
        idx
    }

    /// Cell-centered coordinates of a flat index.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let c = self.coords(flat);
        (0..self.n)
            .map(|a| self.lo[a] + (c[a] as f64 + 0.5) * self.spacing(a))
            .collect()
    }

    /// Stride of an axis in the flat (row-major) layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.m[axis + 1..].iter().product()
    }

    /// Neighbor one step along `axis`; `None` when the step leaves a
    /// zero-padded grid. Allocation-free: this sits in every stencil loop.
    pub fn shift(&self, flat: usize, axis: usize, step: isize) -> Option<usize> {
        let stride = self.stride(axis);
        let m = self.m[axis];
        let c = (flat / stride) % m;
        let raw = c as isize + step;
        match self.boundary {
            Boundary::Periodic => {
                let wrapped = raw.rem_euclid(m as isize) as usize;
                Some(flat + wrapped * stride - c * stride)
            }
            Boundary::ZeroPad => {
                if raw < 0 || raw >= m as isize {
                    None
                } else {
                    Some(flat + raw as usize * stride - c * stride)
                }
            }
        }
    }

    /// Whether the flat index lies within `width` cells of any face.
    pub fn in_collar(&self, flat: usize, width: usize) -> bool {
        let c = self.coords(flat);
        (0..self.n).any(|a| c[a] < width || c[a] + width >= self.m[a])
    }

    /// Same box with every axis refined by `factor`.
    pub fn refine(&self, factor: usize) -> Result<Grid> {
        Grid::new(
            self.lo.clone(),
            self.hi.clone(),
            self.m.iter().map(|&m| m * factor).collect(),
            self.boundary,
        )
    }

    pub fn compatible_with(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?}x{:?} vs {:?}x{:?}",
                self.m, self.boundary, other.m, other.boundary
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_coords_roundtrip() {
        let g = Grid::new(
            vec![0.0, -1.0],
            vec![1.0, 1.0],
            vec![4, 6],
            Boundary::ZeroPad,
        )
        .unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.flat(&g.coords(flat)), flat);
        }
        assert_eq!(g.len(), 24);
    }

    #[test]
    fn points_are_cell_centered() {
        let g = Grid::cube(1, 0.0, 1.0, 4, Boundary::ZeroPad).unwrap();
        assert_eq!(g.point(0)[0], 0.125);
        assert_eq!(g.point(3)[0], 0.875);
    }

    #[test]
    fn shift_respects_boundary() {
        let gp = Grid::cube(1, 0.0, 1.0, 4, Boundary::Periodic).unwrap();
        assert_eq!(gp.shift(3, 0, 1), Some(0));
        let gz = Grid::cube(1, 0.0, 1.0, 4, Boundary::ZeroPad).unwrap();
        assert_eq!(gz.shift(3, 0, 1), None);
        assert_eq!(gz.shift(0, 0, -1), None);
        assert_eq!(gz.shift(2, 0, 1), Some(3));
    }

    #[test]
    fn collar_detection() {
        let g = Grid::cube(2, 0.0, 1.0, 8, Boundary::ZeroPad).unwrap();
        assert!(g.in_collar(g.flat(&[0, 4]), 2));
        assert!(g.in_collar(g.flat(&[4, 7]), 2));
        assert!(!g.in_collar(g.flat(&[4, 4]), 2));
    }

    #[test]
    fn tiny_axes_are_rejected() {
        assert!(Grid::cube(1, 0.0, 1.0, 3, Boundary::ZeroPad).is_err());
    }
}
