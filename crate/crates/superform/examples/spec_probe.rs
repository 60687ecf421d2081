use nalgebra::DMatrix;
use superform::algebra::MonomialKey;
use superform::calculus::{adjoint_d, d, measure_values, AdjointMode, GramCache, weighted_inner_cached};
use superform::field::FormField;
use superform::grid::{Boundary, Grid};
use superform::weight::{MetricField, Weight, WeightField};

fn main() {
    for (lo, hi, m) in [(-4.0, 4.0, 64usize), (-4.0, 4.0, 128), (-2.2, 2.2, 128), (-3.0, 3.0, 128)] {
        let grid = Grid::cube(1, lo, hi, m, Boundary::ZeroPad).unwrap();
        let w = WeightField::from_weight(&grid, &Weight::standard_quadratic(1));
        let g = MetricField::identity(&grid);
        let len = grid.len();
        let key = MonomialKey::new(1, 1);
        let measure = measure_values(&w, &g).unwrap();
        let cache = GramCache::new(&g, 1, 1);
        // Assemble A = d d* on (1,1) in the weighted inner product:
        // matrix entries M_ij = <A e_j, e_i>_w ; generalized eig against W_ij = <e_j, e_i>_w.
        let mut a_mat = DMatrix::zeros(len, len);
        let mut w_mat = DMatrix::zeros(len, len);
        for j in 0..len {
            let mut e = FormField::zero(&grid, 1, 1);
            e.values_mut(key)[j] = 1.0;
            let ae = d(&adjoint_d(&e, &w, &g, AdjointMode::Exact).unwrap());
            for i in 0..len {
                let mut ei = FormField::zero(&grid, 1, 1);
                ei.values_mut(key)[i] = 1.0;
                a_mat[(i, j)] = weighted_inner_cached(&ae, &ei, &measure, &cache).unwrap();
                w_mat[(i, j)] = weighted_inner_cached(&e, &ei, &measure, &cache).unwrap();
            }
        }
        // W is diagonal here; generalized eigenvalues of (A, W):
        let w_inv_sqrt = DMatrix::from_fn(len, len, |i, j| if i == j { 1.0 / w_mat[(i, i)].sqrt() } else { 0.0 });
        let sym = &w_inv_sqrt * &a_mat * &w_inv_sqrt;
        let sym = (&sym + &sym.transpose()) * 0.5;
        let mut eigs: Vec<f64> = nalgebra::SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("box [{lo},{hi}] m={m}: lambda_min = {:.4e}, next = {:.4e} {:.4e}, max = {:.3e}",
            eigs[0], eigs[1], eigs[2], eigs[len-1]);
    }
}
