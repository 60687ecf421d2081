//! Weight functions and metric fields on a grid.
//!
//! The analytic catalog covers the weights used throughout: `quadratic(A)`
//! meaning `phi = x·A·x/2`, and `power(r, c)` meaning `phi = c |x|^r`.
//! Catalog weights supply their gradient and Hessian in closed form, so no
//! finite-difference error leaks into twisted operators or curvature terms;
//! tabulated weights fall back to finite differences with one-sided stencils
//! at the boundary and a documented accuracy downgrade.

use nalgebra::DMatrix;

use crate::algebra::{MonomialKey, PointForm};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::metric::MetricPoint;

/// Analytic weight catalog.
#[derive(Clone, Debug, PartialEq)]
pub enum Weight {
    /// `phi(x) = x · A x / 2` for a symmetric matrix `A`.
    Quadratic(DMatrix<f64>),
    /// `phi(x) = c |x|^r` (radial power).
    Power { r: f64, c: f64 },
}

impl Weight {
    /// The zero weight (`phi = 0`).
    pub fn zero(n: usize) -> Weight {
        Weight::Quadratic(DMatrix::zeros(n, n))
    }

    /// The standard quadratic `|x|^2 / 2`.
    pub fn standard_quadratic(n: usize) -> Weight {
        Weight::Quadratic(DMatrix::identity(n, n))
    }

    pub fn dim_hint(&self) -> Option<usize> {
        match self {
            Weight::Quadratic(a) => Some(a.nrows()),
            Weight::Power { .. } => None,
        }
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Quadratic(a) => {
                let mut acc = 0.0;
                for i in 0..x.len() {
                    for j in 0..x.len() {
                        acc += x[i] * a[(i, j)] * x[j];
                    }
                }
                acc / 2.0
            }
            Weight::Power { r, c } => {
                let rho2: f64 = x.iter().map(|v| v * v).sum();
                c * rho2.powf(r / 2.0)
            }
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Weight::Quadratic(a) => (0..x.len())
                .map(|i| (0..x.len()).map(|j| a[(i, j)] * x[j]).sum())
                .collect(),
            Weight::Power { r, c } => {
                let rho2: f64 = x.iter().map(|v| v * v).sum();
                if rho2 == 0.0 {
                    return vec![0.0; x.len()];
                }
                let factor = c * r * rho2.powf(r / 2.0 - 1.0);
                x.iter().map(|&v| factor * v).collect()
            }
        }
    }

    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        match self {
            Weight::Quadratic(a) => a.clone(),
            Weight::Power { r, c } => {
                let rho2: f64 = x.iter().map(|v| v * v).sum();
                let mut h = DMatrix::zeros(n, n);
                if rho2 == 0.0 {
                    // Zero for r > 2, c*r*I for r = 2; singular below that.
                    if *r == 2.0 {
                        for i in 0..n {
                            h[(i, i)] = 2.0 * c;
                        }
                    }
                    return h;
                }
                let f1 = c * r * rho2.powf(r / 2.0 - 1.0);
                let f2 = c * r * (r - 2.0) * rho2.powf(r / 2.0 - 2.0);
                for i in 0..n {
                    for j in 0..n {
                        h[(i, j)] = f2 * x[i] * x[j] + if i == j { f1 } else { 0.0 };
                    }
                }
                h
            }
        }
    }

    /// `t * phi`.
    pub fn scale(&self, t: f64) -> Weight {
        match self {
            Weight::Quadratic(a) => Weight::Quadratic(a.clone() * t),
            Weight::Power { r, c } => Weight::Power { r: *r, c: c * t },
        }
    }

    /// Homogeneity degree, when the weight is homogeneous.
    pub fn homogeneity(&self) -> Option<f64> {
        match self {
            Weight::Quadratic(_) => Some(2.0),
            Weight::Power { r, .. } => Some(*r),
        }
    }

    /// The Legendre conjugate, available in closed form for the catalog.
    /// `quadratic(A)* = quadratic(A^{-1})`;
    /// `(c|x|^r)* = (cr)^{-1/(r-1)} (1 - 1/r) |y|^s` with `s = r/(r-1)`.
    pub fn conjugate(&self) -> Result<Weight> {
        match self {
            Weight::Quadratic(a) => {
                let inv = a
                    .clone()
                    .try_inverse()
                    .ok_or(Error::NotSpd)?;
                Ok(Weight::Quadratic(inv))
            }
            Weight::Power { r, c } => {
                if *r <= 1.0 || *c <= 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "power weight conjugate needs r > 1, c > 0 (got r={r}, c={c})"
                    )));
                }
                let s = r / (r - 1.0);
                let cstar = (c * r).powf(-1.0 / (r - 1.0)) * (1.0 - 1.0 / r);
                Ok(Weight::Power { r: s, c: cstar })
            }
        }
    }

    /// Convexity by construction: SPD quadratic or a nonnegative power `r >= 1`.
    pub fn is_convex(&self) -> bool {
        match self {
            Weight::Quadratic(a) => nalgebra::Cholesky::new(a.clone()).is_some(),
            Weight::Power { r, c } => *r >= 1.0 && *c >= 0.0,
        }
    }
}

fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Weight sampled on a grid: values, gradient, and symmetric Hessian arrays.
#[derive(Clone, Debug)]
pub struct WeightField {
    grid: Grid,
    phi: Vec<f64>,
    grad: Vec<Vec<f64>>,
    hess: Vec<Vec<f64>>,
    convex: bool,
}

impl WeightField {
    pub fn from_weight(grid: &Grid, w: &Weight) -> Self {
        let n = grid.dim();
        let len = grid.len();
        let mut phi = vec![0.0; len];
        let mut grad = vec![vec![0.0; len]; n];
        let mut hess = vec![vec![0.0; len]; n * (n + 1) / 2];
        for flat in 0..len {
            let x = grid.point(flat);
            phi[flat] = w.phi(&x);
            let g = w.grad(&x);
            for a in 0..n {
                grad[a][flat] = g[a];
            }
            let h = w.hess(&x);
            for i in 0..n {
                for j in i..n {
                    hess[packed_index(n, i, j)][flat] = h[(i, j)];
                }
            }
        }
        WeightField { grid: grid.clone(), phi, grad, hess, convex: w.is_convex() }
    }

    pub fn zero(grid: &Grid) -> Self {
        Self::from_weight(grid, &Weight::zero(grid.dim()))
    }

    /// Sample user-supplied closed forms for `phi`, its gradient, and its
    /// Hessian. Convexity starts unverified; call
    /// [`WeightField::verify_convex`] to certify it.
    pub fn from_analytic(
        grid: &Grid,
        phi_fn: impl Fn(&[f64]) -> f64,
        grad_fn: impl Fn(&[f64]) -> Vec<f64>,
        hess_fn: impl Fn(&[f64]) -> DMatrix<f64>,
    ) -> Self {
        let n = grid.dim();
        let len = grid.len();
        let mut phi = vec![0.0; len];
        let mut grad = vec![vec![0.0; len]; n];
        let mut hess = vec![vec![0.0; len]; n * (n + 1) / 2];
        for flat in 0..len {
            let x = grid.point(flat);
            phi[flat] = phi_fn(&x);
            let g = grad_fn(&x);
            for a in 0..n {
                grad[a][flat] = g[a];
            }
            let h = hess_fn(&x);
            for i in 0..n {
                for j in i..n {
                    hess[packed_index(n, i, j)][flat] = h[(i, j)];
                }
            }
        }
        WeightField { grid: grid.clone(), phi, grad, hess, convex: false }
    }

    /// Tabulated weight: gradient and Hessian by centered differences in the
    /// interior and one-sided stencils at the boundary (first-order there).
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        let n = grid.dim();
        let len = grid.len();
        if values.len() != len {
            return Err(Error::GridMismatch(format!(
                "value array length {} vs grid {}",
                values.len(),
                len
            )));
        }
        let sample = |flat: usize| values[flat];
        let diff1 = |flat: usize, axis: usize| -> f64 {
            let h = grid.spacing(axis);
            match (grid.shift(flat, axis, -1), grid.shift(flat, axis, 1)) {
                (Some(l), Some(r)) => (sample(r) - sample(l)) / (2.0 * h),
                (None, Some(r)) => (sample(r) - sample(flat)) / h,
                (Some(l), None) => (sample(flat) - sample(l)) / h,
                (None, None) => 0.0,
            }
        };
        let mut grad = vec![vec![0.0; len]; n];
        for a in 0..n {
            for flat in 0..len {
                grad[a][flat] = diff1(flat, a);
            }
        }
        let mut hess = vec![vec![0.0; len]; n * (n + 1) / 2];
        for i in 0..n {
            for j in i..n {
                let idx = packed_index(n, i, j);
                for flat in 0..len {
                    let h = grid.spacing(j);
                    // Differentiate the already-formed first derivative.
                    let v = match (grid.shift(flat, j, -1), grid.shift(flat, j, 1)) {
                        (Some(l), Some(r)) => (grad[i][r] - grad[i][l]) / (2.0 * h),
                        (None, Some(r)) => (grad[i][r] - grad[i][flat]) / h,
                        (Some(l), None) => (grad[i][flat] - grad[i][l]) / h,
                        (None, None) => 0.0,
                    };
                    hess[idx][flat] = v;
                }
            }
        }
        Ok(WeightField { grid: grid.clone(), phi: values, grad, hess, convex: false })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// Certify convexity by a Cholesky factorization of the Hessian at every
    /// grid point; sets the convex flag on success.
    pub fn verify_convex(&mut self) -> Result<()> {
        for flat in 0..self.grid.len() {
            let h = self.hess_matrix(flat);
            if nalgebra::Cholesky::new(h).is_none() {
                self.convex = false;
                return Err(Error::NotConvex);
            }
        }
        self.convex = true;
        Ok(())
    }

    pub fn phi_at(&self, flat: usize) -> f64 {
        self.phi[flat]
    }

    pub fn phi_values(&self) -> &[f64] {
        &self.phi
    }

    pub fn grad_at(&self, flat: usize) -> Vec<f64> {
        (0..self.grid.dim()).map(|a| self.grad[a][flat]).collect()
    }

    /// The full gradient array along one axis.
    pub fn grad_values(&self, axis: usize) -> &[f64] {
        &self.grad[axis]
    }

    pub fn hess_matrix(&self, flat: usize) -> DMatrix<f64> {
        let n = self.grid.dim();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.hess[packed_index(n, i, j)][flat];
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    /// `d# phi` at a point: the `(0,1)`-form `sum_i (d phi/d x_i) dxi_i`.
    pub fn d_sharp_phi(&self, flat: usize) -> PointForm {
        let n = self.grid.dim();
        let mut f = PointForm::zero(n, 0, 1).expect("dims");
        for a in 0..n {
            let v = self.grad[a][flat];
            if v != 0.0 {
                f.add_coeff(MonomialKey::new(0, 1 << a), v);
            }
        }
        f
    }

    /// `d d# phi` at a point: the `(1,1)`-form `sum_ij phi_ij dx_i ^ dxi_j`.
    pub fn hess_form(&self, flat: usize) -> PointForm {
        let n = self.grid.dim();
        let mut f = PointForm::zero(n, 1, 1).expect("dims");
        for i in 0..n {
            for j in 0..n {
                let v = self.hess[packed_index(n, i, j)][flat];
                if v != 0.0 {
                    f.add_coeff(MonomialKey::new(1 << i, 1 << j), v);
                }
            }
        }
        f
    }

    /// `e^{-phi}` per point.
    pub fn weight_values(&self) -> Vec<f64> {
        self.phi.iter().map(|p| (-p).exp()).collect()
    }
}

/// SPD matrix field: the metric `omega_ij(x)`, possibly constant.
#[derive(Clone, Debug)]
pub struct MetricField {
    grid: Grid,
    kind: MetricKind,
}

#[derive(Clone, Debug)]
enum MetricKind {
    Constant(MetricPoint),
    PerPoint(Vec<MetricPoint>),
}

impl MetricField {
    pub fn identity(grid: &Grid) -> Self {
        MetricField {
            grid: grid.clone(),
            kind: MetricKind::Constant(MetricPoint::identity(grid.dim())),
        }
    }

    pub fn constant(grid: &Grid, g: DMatrix<f64>) -> Result<Self> {
        Ok(MetricField { grid: grid.clone(), kind: MetricKind::Constant(MetricPoint::new(g)?) })
    }

    /// `omega = dd# phi` for a convex weight; constant for quadratic weights.
    pub fn hessian_of(grid: &Grid, w: &Weight) -> Result<Self> {
        Self::signed_hessian(grid, w, 1.0)
    }

    /// `omega = -dd# phi` for a concave weight.
    pub fn neg_hessian_of(grid: &Grid, w: &Weight) -> Result<Self> {
        Self::signed_hessian(grid, w, -1.0)
    }

    fn signed_hessian(grid: &Grid, w: &Weight, sign: f64) -> Result<Self> {
        if let Weight::Quadratic(a) = w {
            return Self::constant(grid, a.clone() * sign);
        }
        let mut points = Vec::with_capacity(grid.len());
        for flat in 0..grid.len() {
            let x = grid.point(flat);
            points.push(MetricPoint::new(w.hess(&x) * sign)?);
        }
        Ok(MetricField { grid: grid.clone(), kind: MetricKind::PerPoint(points) })
    }

    /// Per-point metric from an already-sampled weight field's Hessian.
    pub fn from_weight_field(w: &WeightField, sign: f64) -> Result<Self> {
        let grid = w.grid().clone();
        let mut points = Vec::with_capacity(grid.len());
        for flat in 0..grid.len() {
            points.push(MetricPoint::new(w.hess_matrix(flat) * sign)?);
        }
        Ok(MetricField { grid, kind: MetricKind::PerPoint(points) })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn at(&self, flat: usize) -> &MetricPoint {
        match &self.kind {
            MetricKind::Constant(m) => m,
            MetricKind::PerPoint(v) => &v[flat],
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(&self.kind, MetricKind::Constant(m) if m.is_identity())
    }

    pub fn is_constant(&self) -> bool {
        matches!(&self.kind, MetricKind::Constant(_))
    }

    /// `det G` per point (the volume density of `omega_n`).
    pub fn det_values(&self) -> Vec<f64> {
        match &self.kind {
            MetricKind::Constant(m) => vec![m.det(); self.grid.len()],
            MetricKind::PerPoint(v) => v.iter().map(|m| m.det()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn quadratic_weight_derivatives() {
        let mut a = DMatrix::identity(2, 2);
        a[(0, 1)] = 0.5;
        a[(1, 0)] = 0.5;
        let w = Weight::Quadratic(a.clone());
        let x = [1.0, -2.0];
        assert_eq!(w.phi(&x), 0.5 * (1.0 + 2.0 * 0.5 * -2.0 + 4.0));
        let g = w.grad(&x);
        assert_eq!(g[0], 1.0 + 0.5 * -2.0);
        assert_eq!(w.hess(&x), a);
    }

    #[test]
    fn power_weight_matches_quadratic_at_r2() {
        let wq = Weight::Quadratic(DMatrix::identity(2, 2));
        let wp = Weight::Power { r: 2.0, c: 0.5 };
        let x = [0.7, -0.3];
        assert!((wq.phi(&x) - wp.phi(&x)).abs() < 1e-15);
        for (a, b) in wq.grad(&x).iter().zip(wp.grad(&x)) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((wq.hess(&x) - wp.hess(&x)).abs().max() < 1e-14);
    }

    #[test]
    fn power_conjugate_values() {
        // (x^4/4)* = (3/4) |y|^{4/3}.
        let w = Weight::Power { r: 4.0, c: 0.25 };
        let c = w.conjugate().unwrap();
        match c {
            Weight::Power { r, c } => {
                assert!((r - 4.0 / 3.0).abs() < 1e-15);
                assert!((c - 0.75).abs() < 1e-15);
            }
            _ => panic!("expected power"),
        }
        // Self-dual quadratic.
        let q = Weight::standard_quadratic(3);
        assert_eq!(q.conjugate().unwrap(), q);
    }

    #[test]
    fn euler_identity_for_power_weights() {
        // y . grad(phi)(y) = r phi(y), exactly at every sample point.
        let g = Grid::cube(1, -1.0, 1.0, 64, Boundary::ZeroPad).unwrap();
        let w = Weight::Power { r: 4.0, c: 1.0 };
        for flat in 0..g.len() {
            let x = g.point(flat);
            let lhs: f64 = x.iter().zip(w.grad(&x)).map(|(a, b)| a * b).sum();
            let rhs = 4.0 * w.phi(&x);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-12));
        }
    }

    #[test]
    fn tabulated_weight_fd_derivatives() {
        let g = Grid::cube(1, -1.0, 1.0, 64, Boundary::ZeroPad).unwrap();
        let values: Vec<f64> = (0..g.len()).map(|f| g.point(f)[0].powi(2) / 2.0).collect();
        let w = WeightField::from_values(&g, values).unwrap();
        // Centered differences are exact on quadratics in the interior.
        for flat in 1..g.len() - 1 {
            let x = g.point(flat)[0];
            assert!((w.grad_at(flat)[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_field_constant_for_quadratic() {
        let g = Grid::cube(2, -1.0, 1.0, 4, Boundary::ZeroPad).unwrap();
        let m = MetricField::hessian_of(&g, &Weight::standard_quadratic(2)).unwrap();
        assert!(m.is_constant());
        assert!(m.at(0).is_identity());
        let c = MetricField::neg_hessian_of(&g, &Weight::Quadratic(-DMatrix::identity(2, 2)))
            .unwrap();
        assert!(c.at(0).is_identity());
    }
}
