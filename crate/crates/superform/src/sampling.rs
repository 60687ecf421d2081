//! Seeded random forms and fields for the verification suites.
//!
//! Reproducibility contract: with a fixed seed, forms are generated by
//! drawing each monomial coefficient uniformly in `[-1, 1]` in ascending key
//! order. Compactly supported fields multiply those constants by the fixed
//! bump profile
//!
//! ```text
//! B(x) = max(0, 1 - |u|^2)^4,   u_i = (x_i - c_i) / (hw_i - margin_i),
//! margin_i = min(2.5 h_i, 0.4 hw_i)
//! ```
//!
//! where `c` is the box center and `hw` the half-width per axis. The margin
//! keeps the support out of a 2-cell boundary collar on any grid with at
//! least 8 cells per axis.

use nalgebra::DMatrix;
use rand::Rng;

use crate::algebra::{GradedForm, PointForm};
use crate::field::FormField;
use crate::grid::Grid;
use crate::metric::{enumerate_keys, MetricPoint};

/// Random `(p,q)`-form at a point: every canonical coefficient uniform in
/// `[-1, 1]`, drawn in ascending key order.
pub fn random_point_form(rng: &mut impl Rng, n: usize, p: usize, q: usize) -> PointForm {
    let mut f = PointForm::zero(n, p, q).expect("valid dims");
    for key in enumerate_keys(n, p, q) {
        f.add_coeff(key, rng.gen_range(-1.0..1.0));
    }
    f
}

/// Random pure-degree `k`-form (one random part per admissible bidegree).
pub fn random_graded_of_degree(rng: &mut impl Rng, n: usize, k: usize) -> GradedForm {
    let mut g = GradedForm::zero(n).expect("valid dims");
    for p in k.saturating_sub(n)..=k.min(n) {
        let q = k - p;
        g.add_part(random_point_form(rng, n, p, q));
    }
    g
}

/// Mildly perturbed SPD metric: `A A^T` for `A = I + 0.3 U`, entries of `U`
/// uniform in `[-1/2, 1/2]`. Conditioning stays small enough that identity
/// tests at `1e-12` remain meaningful.
pub fn random_spd_metric(rng: &mut impl Rng, n: usize) -> MetricPoint {
    let mut a: DMatrix<f64> = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] += 0.3 * rng.gen_range(-0.5..0.5);
        }
    }
    let g = &a * &a.transpose();
    MetricPoint::new(g).expect("perturbed identity is SPD")
}

/// The fixed bump profile described in the module docs.
pub fn bump_profile(grid: &Grid, x: &[f64]) -> f64 {
    let n = grid.dim();
    let mut u2 = 0.0;
    for a in 0..n {
        let c = 0.5 * (grid.lo()[a] + grid.hi()[a]);
        let hw = 0.5 * (grid.hi()[a] - grid.lo()[a]);
        let margin = (2.5 * grid.spacing(a)).min(0.4 * hw);
        let u = (x[a] - c) / (hw - margin);
        u2 += u * u;
    }
    (1.0 - u2).max(0.0).powi(4)
}

/// Random raw field: per key, per point, uniform in `[-1, 1]` (white noise;
/// for algebraic identities that need no smoothness).
pub fn random_field(rng: &mut impl Rng, grid: &Grid, p: usize, q: usize) -> FormField {
    let mut f = FormField::zero(grid, p, q);
    for key in f.keys().collect::<Vec<_>>() {
        for v in f.values_mut(key) {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    f
}

/// Random smooth compactly supported field: one uniform constant per key
/// times the bump profile.
pub fn random_bump_field(rng: &mut impl Rng, grid: &Grid, p: usize, q: usize) -> FormField {
    let mut f = FormField::zero(grid, p, q);
    let profile: Vec<f64> = (0..grid.len())
        .map(|flat| bump_profile(grid, &grid.point(flat)))
        .collect();
    for key in f.keys().collect::<Vec<_>>() {
        let c = rng.gen_range(-1.0..1.0);
        let vals = f.values_mut(key);
        for (v, b) in vals.iter_mut().zip(&profile) {
            *v = c * b;
        }
    }
    f
}

/// Random smooth compactly supported field with affine spatial variation:
/// per key, `(a_0 + sum_i a_i x_i) B(x)` with all `a` uniform in `[-1, 1]`.
/// Richer than [`random_bump_field`] where rank or genericity matters.
pub fn random_affine_bump_field(rng: &mut impl Rng, grid: &Grid, p: usize, q: usize) -> FormField {
    let n = grid.dim();
    let mut f = FormField::zero(grid, p, q);
    let profile: Vec<f64> = (0..grid.len())
        .map(|flat| bump_profile(grid, &grid.point(flat)))
        .collect();
    for key in f.keys().collect::<Vec<_>>() {
        let a0: f64 = rng.gen_range(-1.0..1.0);
        let lin: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vals = f.values_mut(key);
        for flat in 0..grid.len() {
            let x = grid.point(flat);
            let affine: f64 = a0 + lin.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            vals[flat] = affine * profile[flat];
        }
    }
    f
}

/// Random discretely closed field: `d` of a random affine bump field one
/// degree down (closed because the discrete complex property holds).
pub fn random_closed_field(rng: &mut impl Rng, grid: &Grid, p: usize, q: usize) -> FormField {
    assert!(p >= 1, "closed data of x-degree 0 would be trivial");
    let potential = random_affine_bump_field(rng, grid, p - 1, q);
    crate::calculus::d(&potential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn bump_vanishes_in_two_cell_collar() {
        for m in [8usize, 16, 32] {
            let g = Grid::cube(2, -1.0, 2.0, m, Boundary::ZeroPad).unwrap();
            for flat in 0..g.len() {
                if g.in_collar(flat, 2) {
                    assert_eq!(bump_profile(&g, &g.point(flat)), 0.0, "m={m} flat={flat}");
                }
            }
        }
    }

    #[test]
    fn bump_is_positive_in_the_center() {
        let g = Grid::cube(1, -3.0, 3.0, 64, Boundary::ZeroPad).unwrap();
        assert!(bump_profile(&g, &[0.0]) > 0.9);
    }

    #[test]
    fn closed_fields_are_closed() {
        let g = Grid::cube(2, -1.0, 1.0, 8, Boundary::ZeroPad).unwrap();
        let mut rng = StdRng::seed_from_u64(21);
        let beta = random_closed_field(&mut rng, &g, 1, 1);
        let dd = crate::calculus::d(&beta);
        assert!(dd.sup_norm() <= 1e-10);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let g = Grid::cube(1, -1.0, 1.0, 16, Boundary::ZeroPad).unwrap();
        let a = random_bump_field(&mut StdRng::seed_from_u64(7), &g, 0, 1);
        let b = random_bump_field(&mut StdRng::seed_from_u64(7), &g, 0, 1);
        assert_eq!(a, b);
    }
}
