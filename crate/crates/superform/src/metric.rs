//! Pointwise metric structure induced by a positive `(1,1)`-form.
//!
//! A metric at a point is the SPD coefficient matrix `G = (omega_ij)`. All
//! operations funnel through one orthonormal coframe, built from the Cholesky
//! factor `G = chol * chol^T`: coefficients move to the orthonormal frame via
//! the exterior-power action of `chol^{-1}` on the `dx` and `dxi` slots alike,
//! and back via `chol`. In that frame the monomials are an orthonormal basis,
//! the Hodge star is solved sign-exactly from its defining relation
//! `alpha ^ *J(beta) = (alpha,beta) omega_n`, and `Lambda` is the transpose of
//! `L` in the monomial basis.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::algebra::{c_sign, theta, wedge_sign, GradedForm, MonomialKey, MultiIndex, PointForm};
use crate::error::{Error, Result};

/// SPD metric at a point, with its lower-triangular Cholesky factor.
#[derive(Clone, Debug)]
pub struct MetricPoint {
    n: usize,
    g: DMatrix<f64>,
    chol: DMatrix<f64>,
    chol_inv: DMatrix<f64>,
    is_identity: bool,
}

impl MetricPoint {
    /// Build from a coefficient matrix; fails unless `G` is symmetric positive
    /// definite (certified by a successful Cholesky factorization).
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        let n = g.nrows();
        if n == 0 || g.ncols() != n {
            return Err(Error::NotSpd);
        }
        let asym = (&g - g.transpose()).abs().max();
        if asym != 0.0 {
            return Err(Error::NotSpd);
        }
        let chol = nalgebra::Cholesky::new(g.clone()).ok_or(Error::NotSpd)?;
        let l = chol.l();
        let chol_inv = l.clone().try_inverse().ok_or(Error::NotSpd)?;
        let is_identity = g == DMatrix::identity(n, n);
        Ok(MetricPoint { n, g, chol: l, chol_inv, is_identity })
    }

    pub fn identity(n: usize) -> Self {
        MetricPoint {
            n,
            g: DMatrix::identity(n, n),
            chol: DMatrix::identity(n, n),
            chol_inv: DMatrix::identity(n, n),
            is_identity: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn chol_inverse(&self) -> &DMatrix<f64> {
        &self.chol_inv
    }

    /// `G^{-1}` from the Cholesky factor.
    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        self.chol_inv.transpose() * &self.chol_inv
    }

    pub fn det(&self) -> f64 {
        if self.is_identity {
            return 1.0;
        }
        let mut d = 1.0;
        for i in 0..self.n {
            let c = self.chol[(i, i)];
            d *= c * c;
        }
        d
    }

    pub fn is_identity(&self) -> bool {
        self.is_identity
    }

    /// The coframe change to an orthonormal frame. Columns of `t` are the
    /// coefficient vectors of the new coframe elements, so `t^T G^{-1} t = I`.
    pub fn frame(&self) -> FrameChange {
        FrameChange { t: self.chol.clone(), t_inv: self.chol_inv.clone() }
    }

    /// Coefficients in the orthonormal frame (exterior-power action of
    /// `chol^{-1}` on both slots).
    pub fn to_orthonormal(&self, a: &PointForm) -> PointForm {
        if self.is_identity {
            return a.clone();
        }
        transform_slots(a, &self.chol_inv)
    }

    /// Back from orthonormal coefficients to the coordinate frame.
    pub fn from_orthonormal(&self, a: &PointForm) -> PointForm {
        if self.is_identity {
            return a.clone();
        }
        transform_slots(a, &self.chol)
    }

    /// The metric's `(1,1)`-form `omega = sum_ij G_ij dx_i ^ dxi_j`.
    pub fn omega(&self) -> PointForm {
        let mut w = PointForm::zero(self.n, 1, 1).expect("dim checked");
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.g[(i, j)];
                if v != 0.0 {
                    w.add_coeff(MonomialKey::new(1 << i, 1 << j), v);
                }
            }
        }
        w
    }

    /// The volume form `omega_n = omega^n / n! = det(G) dV_N`.
    pub fn omega_n(&self) -> PointForm {
        let n = self.n;
        let full = MultiIndex::full(n).expect("dim checked");
        let empty = MultiIndex::empty(n).expect("dim checked");
        theta(n, full, empty, empty)
            .expect("disjoint")
            .scale(self.det())
    }
}

/// Coframe transform to an `omega`-orthonormal coframe.
#[derive(Clone, Debug)]
pub struct FrameChange {
    /// Columns are the orthonormal coframe elements in coordinates.
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
}

impl FrameChange {
    /// `|| t^T G^{-1} t - I ||_max`: orthonormality certificate.
    pub fn orthonormality_residual(&self, m: &MetricPoint) -> f64 {
        let g_inv = m.chol_inv.transpose() * &m.chol_inv;
        let prod = self.t.transpose() * g_inv * &self.t;
        let n = m.dim();
        (prod - DMatrix::identity(n, n)).abs().max()
    }
}

pub(crate) fn bit_indices(mask: u16) -> Vec<usize> {
    let mut v = Vec::with_capacity(mask.count_ones() as usize);
    let mut rest = mask;
    while rest != 0 {
        v.push(rest.trailing_zeros() as usize);
        rest &= rest - 1;
    }
    v
}

/// Determinant of the minor `m[rows, cols]` (equal cardinalities).
pub(crate) fn minor_det(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    match rows.len() {
        0 => 1.0,
        1 => m[(rows[0], cols[0])],
        2 => {
            m[(rows[0], cols[0])] * m[(rows[1], cols[1])]
                - m[(rows[0], cols[1])] * m[(rows[1], cols[0])]
        }
        3 => {
            let a = |r: usize, c: usize| m[(rows[r], cols[c])];
            a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
        }
        d => {
            let mut sub = DMatrix::zeros(d, d);
            for (ri, &r) in rows.iter().enumerate() {
                for (ci, &c) in cols.iter().enumerate() {
                    sub[(ri, ci)] = m[(r, c)];
                }
            }
            sub.determinant()
        }
    }
}

/// All masks over `n` bits with the given popcount, ascending.
pub fn masks_of_card(n: usize, card: usize) -> Vec<u16> {
    (0u32..(1u32 << n))
        .map(|b| b as u16)
        .filter(|b| b.count_ones() as usize == card)
        .collect()
}

/// Canonical monomial keys of bidegree `(p,q)`, ascending by `(I-mask, J-mask)`.
pub fn enumerate_keys(n: usize, p: usize, q: usize) -> Vec<MonomialKey> {
    let xs = masks_of_card(n, p);
    let xis = masks_of_card(n, q);
    let mut keys = Vec::with_capacity(xs.len() * xis.len());
    for &x in &xs {
        for &xi in &xis {
            keys.push(MonomialKey::new(x, xi));
        }
    }
    keys
}

/// Keys of all bidegrees of total degree `k`, ordered by `(p, I-mask, J-mask)`.
pub fn enumerate_degree_keys(n: usize, k: usize) -> Vec<(usize, usize, MonomialKey)> {
    let mut keys = Vec::new();
    for p in k.saturating_sub(n)..=k.min(n) {
        let q = k - p;
        for key in enumerate_keys(n, p, q) {
            keys.push((p, q, key));
        }
    }
    keys
}

fn minor_table(m: &DMatrix<f64>, n: usize, card: usize) -> HashMap<(u16, u16), f64> {
    let masks = masks_of_card(n, card);
    let mut table = HashMap::with_capacity(masks.len() * masks.len());
    for &out in &masks {
        let rows = bit_indices(out);
        for &inp in &masks {
            let cols = bit_indices(inp);
            let d = minor_det(m, &rows, &cols);
            if d != 0.0 {
                table.insert((out, inp), d);
            }
        }
    }
    table
}

/// Exterior-power action of a coefficient matrix on both generator slots:
/// `b_{KL} = sum_{IJ} det(m[K,I]) det(m[L,J]) a_{IJ}`.
pub fn transform_slots(a: &PointForm, m: &DMatrix<f64>) -> PointForm {
    let n = a.dim();
    let (p, q) = a.bidegree();
    let tx = minor_table(m, n, p);
    let txi = minor_table(m, n, q);
    let mut out = PointForm::zero(n, p, q).expect("same shape");
    for &kx in masks_of_card(n, p).iter() {
        for &kxi in masks_of_card(n, q).iter() {
            let mut acc = 0.0;
            for (key, v) in a.iter() {
                let dx = match tx.get(&(kx, key.x)) {
                    Some(d) => *d,
                    None => continue,
                };
                let dxi = match txi.get(&(kxi, key.xi)) {
                    Some(d) => *d,
                    None => continue,
                };
                acc += dx * dxi * v;
            }
            if acc != 0.0 {
                out.add_coeff(MonomialKey::new(kx, kxi), acc);
            }
        }
    }
    out
}

/// Pointwise inner product of two forms of equal bidegree under the metric:
/// transform both to the orthonormal frame and sum coefficient products.
pub fn inner(a: &PointForm, b: &PointForm, m: &MetricPoint) -> Result<f64> {
    if a.dim() != b.dim() || a.dim() != m.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    if a.bidegree() != b.bidegree() {
        let (p, q) = a.bidegree();
        let (r, s) = b.bidegree();
        return Err(Error::BidegreeMismatch(p as u8, q as u8, r as u8, s as u8));
    }
    let ta = m.to_orthonormal(a);
    let tb = m.to_orthonormal(b);
    let mut acc = 0.0;
    for (k, v) in ta.iter() {
        acc += v * tb.coeff(k);
    }
    Ok(acc)
}

/// Inner product of graded forms: parts of distinct bidegree are orthogonal.
pub fn inner_graded(a: &GradedForm, b: &GradedForm, m: &MetricPoint) -> Result<f64> {
    let mut acc = 0.0;
    for part in a.parts() {
        let (p, q) = part.bidegree();
        if let Some(other) = b.part(p, q) {
            acc += inner(part, other, m)?;
        }
    }
    Ok(acc)
}

/// Hodge star of a monomial in the orthonormal frame. For `dx_I ^ dxi_J` the
/// image is `c_{IJ} dx_{J^c} ^ dxi_{I^c}` with `c_{IJ}` in `{-1,+1}` solved
/// from the single surviving monomial of the defining relation — the closed
/// formulas of the theory serve as test oracles, never as the implementation.
fn star_orthonormal(a: &PointForm) -> PointForm {
    let n = a.dim();
    let (p, q) = a.bidegree();
    let full: u16 = if n == 16 { u16::MAX } else { (1u16 << n) - 1 };
    let cn = c_sign(n);
    let jsign = if (p * q) % 2 == 0 { 1.0 } else { -1.0 };
    let mut out = PointForm::zero(n, n - q, n - p).expect("dims");
    for (key, v) in a.iter() {
        let out_key = MonomialKey::new(full & !key.xi, full & !key.x);
        // Test against the one monomial pairing with J(dx_I ^ dxi_J).
        let test_key = MonomialKey::new(key.xi, key.x);
        let s = wedge_sign(test_key, out_key).expect("complementary masks are disjoint");
        let c = jsign * cn * s;
        out.add_coeff(out_key, c * v);
    }
    out
}

/// Hodge star under a general metric, defined by
/// `alpha ^ *J(beta) = (alpha,beta) omega_n`. Result bidegree `(n-q, n-p)`.
pub fn hodge_star(a: &PointForm, m: &MetricPoint) -> Result<PointForm> {
    if a.dim() != m.dim() {
        return Err(Error::DimensionMismatch(a.dim(), m.dim()));
    }
    let on = m.to_orthonormal(a);
    Ok(m.from_orthonormal(&star_orthonormal(&on)))
}

pub fn hodge_star_graded(a: &GradedForm, m: &MetricPoint) -> Result<GradedForm> {
    let mut out = GradedForm::zero(a.dim())?;
    for part in a.parts() {
        out.add_part(hodge_star(part, m)?);
    }
    Ok(out)
}

/// The Lefschetz operator `L(alpha) = omega ^ alpha`; raises bidegree by (1,1).
pub fn lefschetz(a: &PointForm, m: &MetricPoint) -> Result<PointForm> {
    if a.dim() != m.dim() {
        return Err(Error::DimensionMismatch(a.dim(), m.dim()));
    }
    m.omega().wedge(a)
}

pub fn lefschetz_graded(a: &GradedForm, m: &MetricPoint) -> Result<GradedForm> {
    let mut out = GradedForm::zero(a.dim())?;
    for part in a.parts() {
        out.add_part(lefschetz(part, m)?);
    }
    Ok(out)
}

/// In the orthonormal frame `Lambda` is the transpose of `L` in the monomial
/// basis: each key `(I,J)` scatters to `(I-i, J-i)` over `i in I ∩ J` with the
/// wedge sign of `dV_i` into the target.
fn lambda_orthonormal(a: &PointForm) -> PointForm {
    let n = a.dim();
    let (p, q) = a.bidegree();
    if p == 0 || q == 0 {
        return PointForm::zero(n, p.saturating_sub(1), q.saturating_sub(1)).expect("dims");
    }
    let mut out = PointForm::zero(n, p - 1, q - 1).expect("dims");
    for (key, v) in a.iter() {
        let diag = key.x & key.xi;
        let mut rest = diag;
        while rest != 0 {
            let bit = rest & rest.wrapping_neg();
            rest &= rest - 1;
            let target = MonomialKey::new(key.x & !bit, key.xi & !bit);
            let dv = MonomialKey::new(bit, bit);
            let s = wedge_sign(dv, target).expect("removed index is disjoint");
            out.add_coeff(target, s * v);
        }
    }
    out
}

/// The dual Lefschetz operator, `(L alpha, beta) = (alpha, Lambda beta)`;
/// computed as the exact adjoint of `L` in the orthonormal monomial basis.
pub fn lambda(a: &PointForm, m: &MetricPoint) -> Result<PointForm> {
    if a.dim() != m.dim() {
        return Err(Error::DimensionMismatch(a.dim(), m.dim()));
    }
    let on = m.to_orthonormal(a);
    Ok(m.from_orthonormal(&lambda_orthonormal(&on)))
}

pub fn lambda_graded(a: &GradedForm, m: &MetricPoint) -> Result<GradedForm> {
    let mut out = GradedForm::zero(a.dim())?;
    for part in a.parts() {
        out.add_part(lambda(part, m)?);
    }
    Ok(out)
}

/// `L^power` applied to a graded form.
pub fn lefschetz_power(a: &GradedForm, power: usize, m: &MetricPoint) -> Result<GradedForm> {
    let mut acc = a.clone();
    for _ in 0..power {
        acc = lefschetz_graded(&acc, m)?;
    }
    Ok(acc)
}

/// Unique `a` of degree `k <= n` with `L^{n-k} a = b`, for `b` of degree
/// `2n-k`, by a dense solve of the `L^{n-k}` matrix in the orthonormal
/// monomial basis. The Lefschetz map is an isomorphism, so a singular matrix
/// is an internal failure.
pub fn lefschetz_inverse(b: &GradedForm, k: usize, m: &MetricPoint) -> Result<GradedForm> {
    let n = m.dim();
    if b.dim() != n {
        return Err(Error::DimensionMismatch(b.dim(), n));
    }
    assert!(k <= n, "lefschetz_inverse requires k <= n");
    let power = n - k;
    if power == 0 {
        return Ok(b.clone());
    }
    let src_keys = enumerate_degree_keys(n, k);
    let dst_keys = enumerate_degree_keys(n, 2 * n - k);
    debug_assert_eq!(src_keys.len(), dst_keys.len());
    let dim = src_keys.len();
    let dst_pos: HashMap<(usize, usize, MonomialKey), usize> = dst_keys
        .iter()
        .enumerate()
        .map(|(i, &(p, q, key))| ((p, q, key), i))
        .collect();

    // Assemble the orthonormal-frame matrix of L^{n-k} column by column.
    let id = MetricPoint::identity(n);
    let mut mat = DMatrix::zeros(dim, dim);
    for (col, &(p, q, key)) in src_keys.iter().enumerate() {
        let mut e = PointForm::zero(n, p, q)?;
        e.add_coeff(key, 1.0);
        let image = lefschetz_power(&GradedForm::from_part(e), power, &id)?;
        for part in image.parts() {
            let (pp, qq) = part.bidegree();
            for (kk, v) in part.iter() {
                let row = dst_pos[&(pp, qq, kk)];
                mat[(row, col)] = v;
            }
        }
    }

    // Right-hand side in orthonormal coefficients.
    let mut rhs = nalgebra::DVector::zeros(dim);
    for part in b.parts() {
        let on = m.to_orthonormal(part);
        let (p, q) = on.bidegree();
        for (key, v) in on.iter() {
            let row = *dst_pos.get(&(p, q, key)).expect("b has degree 2n-k");
            rhs[row] = v;
        }
    }

    let lu = mat.clone().lu();
    let sol = lu.solve(&rhs).ok_or(Error::SingularLefschetz)?;
    let residual = (&mat * &sol - &rhs).abs().max();
    let scale = rhs.abs().max();
    if residual > 1e-10 * scale.max(1.0) {
        return Err(Error::SingularLefschetz);
    }

    // Collect per bidegree, then transform each part back once.
    let mut on_parts: HashMap<(usize, usize), PointForm> = HashMap::new();
    for (i, &(p, q, key)) in src_keys.iter().enumerate() {
        if sol[i] != 0.0 {
            on_parts
                .entry((p, q))
                .or_insert_with(|| PointForm::zero(n, p, q).expect("dims"))
                .add_coeff(key, sol[i]);
        }
    }
    let mut out = GradedForm::zero(n)?;
    let mut sorted: Vec<_> = on_parts.into_iter().collect();
    sorted.sort_by_key(|(pq, _)| *pq);
    for (_, part) in sorted {
        out.add_part(m.from_orthonormal(&part));
    }
    Ok(out)
}

/// Primitive (Lefschetz) decomposition of a pure-degree `k`-form:
/// `alpha = alpha_0 + L alpha_1 + ... + L^s alpha_s` with each `alpha_j`
/// primitive of degree `k - 2j`; the summands `L^j alpha_j` are pairwise
/// orthogonal. Index `j` of the returned vector is the `L`-power.
///
/// For `k <= n` the recursion uses the `[Lambda, L^j]` constants: if
/// `beta = Lambda alpha` decomposes as `sum_j L^j beta_j`, then
/// `alpha_j = beta_{j-1} / (j (n - k + j + 1))` for `j >= 1` and `alpha_0`
/// is the remainder. For `k > n` the form is carried to degree `2n-k`
/// through the Lefschetz inverse, decomposed there, and mapped back.
pub fn primitive_decompose(a: &GradedForm, m: &MetricPoint) -> Result<Vec<GradedForm>> {
    let n = m.dim();
    if a.dim() != n {
        return Err(Error::DimensionMismatch(a.dim(), n));
    }
    if a.is_zero() {
        return Ok(vec![a.clone()]);
    }
    let k = a
        .pure_degree()
        .expect("primitive decomposition needs a pure-degree form");
    if k > 2 * n {
        return Ok(vec![GradedForm::zero(n)?]);
    }
    if k > n {
        let reduced_degree = 2 * n - k;
        let gamma = lefschetz_inverse(a, reduced_degree, m)?;
        let parts = primitive_decompose_low(&gamma, reduced_degree, m)?;
        let shift = k - n;
        let mut out = vec![GradedForm::zero(n)?; shift];
        out.extend(parts);
        return Ok(out);
    }
    primitive_decompose_low(a, k, m)
}

fn primitive_decompose_low(a: &GradedForm, k: usize, m: &MetricPoint) -> Result<Vec<GradedForm>> {
    let n = m.dim();
    if k <= 1 {
        return Ok(vec![a.clone()]);
    }
    let beta = lambda_graded(a, m)?;
    let beta_parts = primitive_decompose_low(&beta, k - 2, m)?;
    let mut components = vec![GradedForm::zero(n)?];
    for (idx, beta_part) in beta_parts.into_iter().enumerate() {
        let j = idx + 1;
        let c = (j * (n - k + j + 1)) as f64;
        components.push(beta_part.scale(1.0 / c));
    }
    // alpha_0 = alpha - sum_{j>=1} L^j alpha_j.
    let mut rem = a.clone();
    for (j, comp) in components.iter().enumerate().skip(1) {
        if !comp.is_zero() {
            rem = rem.sub(&lefschetz_power(comp, j, m)?)?;
        }
    }
    components[0] = rem;
    Ok(components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_spd(rng: &mut StdRng, n: usize) -> MetricPoint {
        // Identity plus a mild symmetric perturbation keeps conditioning tame.
        let mut a: DMatrix<f64> = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] += 0.3 * rng.gen_range(-0.5..0.5);
            }
        }
        let g = &a * &a.transpose();
        MetricPoint::new(g).unwrap()
    }

    fn random_form(rng: &mut StdRng, n: usize, p: usize, q: usize) -> PointForm {
        let mut f = PointForm::zero(n, p, q).unwrap();
        for key in enumerate_keys(n, p, q) {
            f.add_coeff(key, rng.gen_range(-1.0..1.0));
        }
        f
    }

    #[test]
    fn frame_is_orthonormal() {
        let mut rng = StdRng::seed_from_u64(5);
        for n in 1..=5 {
            let m = random_spd(&mut rng, n);
            let res = m.frame().orthonormality_residual(&m);
            assert!(res < 1e-12, "n={n}: residual {res}");
        }
    }

    #[test]
    fn inner_of_dx_under_identity_and_scaled_metric() {
        let m1 = MetricPoint::identity(1);
        let dx = PointForm::dx(1, 1).unwrap();
        assert_eq!(inner(&dx, &dx, &m1).unwrap(), 1.0);

        let g = DMatrix::from_element(1, 1, 4.0);
        let m4 = MetricPoint::new(g).unwrap();
        // (alpha,alpha) = sum omega^{ij} alpha_i alpha_j = 1/4.
        assert!((inner(&dx, &dx, &m4).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn inner_matches_dense_gram_oracle() {
        // Oracle: Gram matrix of monomials from the polarization formula,
        // (dx_I ^ dxi_J, dx_K ^ dxi_L) = det(Ginv[I,K]) det(Ginv[J,L]).
        let mut rng = StdRng::seed_from_u64(17);
        for n in 1..=4usize {
            let m = random_spd(&mut rng, n);
            let g_inv = m.matrix().clone().try_inverse().unwrap();
            for _ in 0..20 {
                let p = rng.gen_range(0..=n);
                let q = rng.gen_range(0..=n);
                let a = random_form(&mut rng, n, p, q);
                let b = random_form(&mut rng, n, p, q);
                let mut oracle = 0.0;
                for (ka, va) in a.iter() {
                    for (kb, vb) in b.iter() {
                        let di = minor_det(&g_inv, &bit_indices(ka.x), &bit_indices(kb.x));
                        let dj = minor_det(&g_inv, &bit_indices(ka.xi), &bit_indices(kb.xi));
                        oracle += va * vb * di * dj;
                    }
                }
                let got = inner(&a, &b, &m).unwrap();
                assert!(
                    (got - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()),
                    "n={n} p={p} q={q}: {got} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn star_of_one_is_volume_form() {
        let mut rng = StdRng::seed_from_u64(23);
        for n in 1..=4 {
            let m = random_spd(&mut rng, n);
            let one = PointForm::one(n).unwrap();
            let star1 = hodge_star(&one, &m).unwrap();
            let vol = m.omega_n();
            assert!(
                star1.max_coeff_diff(&vol) <= 1e-12 * vol.max_abs_coeff(),
                "n={n}"
            );
        }
    }

    #[test]
    fn star_of_volume_form_is_sign() {
        let mut rng = StdRng::seed_from_u64(29);
        for n in 1..=4usize {
            let m = random_spd(&mut rng, n);
            let vol = m.omega_n();
            let s = hodge_star(&vol, &m).unwrap();
            let expected = PointForm::constant(n, if n % 2 == 0 { 1.0 } else { -1.0 }).unwrap();
            assert!(s.max_coeff_diff(&expected) <= 1e-12, "n={n}");
        }
    }

    #[test]
    fn star_defining_relation_on_random_pairs() {
        // alpha ^ *J(beta) = (alpha,beta) omega_n, checked as (n,n)-forms.
        let mut rng = StdRng::seed_from_u64(31);
        for n in 1..=4usize {
            for trial in 0..10 {
                let m = if trial % 2 == 0 {
                    MetricPoint::identity(n)
                } else {
                    random_spd(&mut rng, n)
                };
                let p = rng.gen_range(0..=n);
                let q = rng.gen_range(0..=n);
                let alpha = random_form(&mut rng, n, p, q);
                let beta = random_form(&mut rng, n, p, q);
                let lhs = alpha.wedge(&hodge_star(&beta.j(), &m).unwrap()).unwrap();
                let rhs = m.omega_n().scale(inner(&alpha, &beta, &m).unwrap());
                assert!(
                    lhs.max_coeff_diff(&rhs) <= 1e-11 * (1.0 + rhs.max_abs_coeff()),
                    "n={n} p={p} q={q} diff={}",
                    lhs.max_coeff_diff(&rhs)
                );
            }
        }
    }

    #[test]
    fn star_on_theta_monomials_matches_closed_formula() {
        // In the orthonormal frame:
        // *(dx_A ^ dxi_B ^ dV_M) = c_p c_q (-1)^{p+m+pq} dx_A ^ dxi_B ^ dV_{M'}.
        let n = 4;
        let m = MetricPoint::identity(n);
        for abits in 0u16..(1 << n) {
            for bbits in 0u16..(1 << n) {
                if abits & bbits != 0 {
                    continue;
                }
                for mbits in 0u16..(1 << n) {
                    if mbits & (abits | bbits) != 0 {
                        continue;
                    }
                    let a = MultiIndex::from_bits(n, abits).unwrap();
                    let b = MultiIndex::from_bits(n, bbits).unwrap();
                    let mm = MultiIndex::from_bits(n, mbits).unwrap();
                    let t = theta(n, mm, a, b).unwrap();
                    let star = hodge_star(&t, &m).unwrap();
                    let mprime =
                        MultiIndex::from_bits(n, ((1 << n) - 1) & !(abits | bbits | mbits))
                            .unwrap();
                    let p = a.card();
                    let q = b.card();
                    let mc = mm.card();
                    let sign = c_sign(p)
                        * c_sign(q)
                        * if (p + mc + p * q) % 2 == 0 { 1.0 } else { -1.0 };
                    let expected = theta(n, mprime, a, b).unwrap().scale(sign);
                    assert!(
                        star.max_coeff_diff(&expected) == 0.0,
                        "A={a:?} B={b:?} M={mm:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn lefschetz_of_one_is_omega() {
        let n = 2;
        let m = MetricPoint::identity(n);
        let one = PointForm::one(n).unwrap();
        let l1 = lefschetz(&one, &m).unwrap();
        let mut expected = PointForm::zero(n, 1, 1).unwrap();
        expected.add_coeff(MonomialKey::new(0b01, 0b01), 1.0);
        expected.add_coeff(MonomialKey::new(0b10, 0b10), 1.0);
        assert_eq!(l1, expected);
    }

    #[test]
    fn lefschetz_on_theta_adds_diagonal_indices() {
        // L Theta_{I,J,K} = sum_{i not in I∪J∪K} Theta_{I+i,J,K}.
        let n = 4;
        let m = MetricPoint::identity(n);
        let i = MultiIndex::from_indices(n, &[1]).unwrap();
        let j = MultiIndex::from_indices(n, &[2]).unwrap();
        let k = MultiIndex::from_indices(n, &[3]).unwrap();
        let t = theta(n, i, j, k).unwrap();
        let lt = lefschetz(&t, &m).unwrap();
        // Only i = 4 is outside I ∪ J ∪ K at n = 4.
        let expected = theta(n, i.with(4).unwrap(), j, k).unwrap();
        assert!(lt.max_coeff_diff(&expected) == 0.0);
    }

    #[test]
    fn lefschetz_power_overflows_to_zero() {
        let n = 2;
        let m = MetricPoint::identity(n);
        let one = GradedForm::from_part(PointForm::one(n).unwrap());
        let res = lefschetz_power(&one, n + 1, &m).unwrap();
        assert!(res.is_zero());
    }

    #[test]
    fn lambda_of_omega_is_dimension() {
        let mut rng = StdRng::seed_from_u64(37);
        for n in 1..=4usize {
            let m = random_spd(&mut rng, n);
            let w = m.omega();
            let lw = lambda(&w, &m).unwrap();
            let expected = PointForm::constant(n, n as f64).unwrap();
            assert!(lw.max_coeff_diff(&expected) <= 1e-12 * n as f64, "n={n}");
        }
    }

    #[test]
    fn lambda_kills_offdiagonal_monomial() {
        let n = 2;
        let m = MetricPoint::identity(n);
        let a = PointForm::monomial_from_sequence(n, &[1], &[2]).unwrap();
        let la = lambda(&a, &m).unwrap();
        assert!(la.is_zero());
    }

    #[test]
    fn lambda_is_adjoint_of_lefschetz() {
        let mut rng = StdRng::seed_from_u64(41);
        for n in 1..=4usize {
            let m = random_spd(&mut rng, n);
            for _ in 0..10 {
                let p = rng.gen_range(0..n);
                let q = rng.gen_range(0..n);
                let a = random_form(&mut rng, n, p, q);
                let b = random_form(&mut rng, n, p + 1, q + 1);
                let lhs = inner(&lefschetz(&a, &m).unwrap(), &b, &m).unwrap();
                let rhs = inner(&a, &lambda(&b, &m).unwrap(), &m).unwrap();
                assert!(
                    (lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()),
                    "n={n} p={p} q={q}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn commutator_constant_on_random_forms() {
        // [Lambda, L] alpha = (n-k) alpha for a k-form.
        let mut rng = StdRng::seed_from_u64(43);
        let n = 4;
        let m = random_spd(&mut rng, n);
        let a = GradedForm::from_part(random_form(&mut rng, n, 2, 1));
        let k = 3;
        let ll = lambda_graded(&lefschetz_graded(&a, &m).unwrap(), &m).unwrap();
        let ll2 = lefschetz_graded(&lambda_graded(&a, &m).unwrap(), &m).unwrap();
        let comm = ll.sub(&ll2).unwrap();
        let expected = a.scale((n - k) as f64);
        assert!(comm.max_coeff_diff(&expected) <= 1e-11);
    }

    #[test]
    fn primitive_decompose_of_omega() {
        let n = 2;
        let m = MetricPoint::identity(n);
        let w = GradedForm::from_part(m.omega());
        let parts = primitive_decompose(&w, &m).unwrap();
        assert_eq!(parts.len(), 2);
        assert!(parts[0].max_abs_coeff() < 1e-14);
        let one = GradedForm::from_part(PointForm::one(n).unwrap());
        assert!(parts[1].max_coeff_diff(&one) <= 1e-14);
    }

    #[test]
    fn primitive_input_is_returned_unchanged() {
        let n = 3;
        let m = MetricPoint::identity(n);
        // dx_1 ^ dxi_2 is primitive (no diagonal index).
        let a = GradedForm::from_part(PointForm::monomial_from_sequence(n, &[1], &[2]).unwrap());
        let parts = primitive_decompose(&a, &m).unwrap();
        assert!(parts[0].max_coeff_diff(&a) <= 1e-14);
        for part in parts.iter().skip(1) {
            assert!(part.max_abs_coeff() <= 1e-14);
        }
    }

    #[test]
    fn primitive_decompose_reconstructs_and_is_orthogonal() {
        let mut rng = StdRng::seed_from_u64(47);
        for n in 2..=4usize {
            let m = random_spd(&mut rng, n);
            for k in 2..=(2 * n) {
                // Random pure-degree-k form.
                let mut a = GradedForm::zero(n).unwrap();
                for p in k.saturating_sub(n)..=k.min(n) {
                    let q = k - p;
                    a.add_part(random_form(&mut rng, n, p, q));
                }
                if a.is_zero() {
                    continue;
                }
                let parts = primitive_decompose(&a, &m).unwrap();
                // Reconstruction.
                let mut sum = GradedForm::zero(n).unwrap();
                for (j, comp) in parts.iter().enumerate() {
                    sum = sum.add(&lefschetz_power(comp, j, &m).unwrap()).unwrap();
                }
                let scale = a.max_abs_coeff().max(1.0);
                assert!(
                    sum.max_coeff_diff(&a) <= 1e-10 * scale,
                    "n={n} k={k}: reconstruction {}",
                    sum.max_coeff_diff(&a)
                );
                // Primitivity of each component.
                for comp in &parts {
                    let l = lambda_graded(comp, &m).unwrap();
                    assert!(l.max_abs_coeff() <= 1e-10 * scale, "n={n} k={k}");
                }
                // Pairwise orthogonality of the summands.
                let summands: Vec<GradedForm> = parts
                    .iter()
                    .enumerate()
                    .map(|(j, c)| lefschetz_power(c, j, &m).unwrap())
                    .collect();
                for i in 0..summands.len() {
                    for j in (i + 1)..summands.len() {
                        let ip = inner_graded(&summands[i], &summands[j], &m).unwrap();
                        let ni = inner_graded(&summands[i], &summands[i], &m).unwrap();
                        let nj = inner_graded(&summands[j], &summands[j], &m).unwrap();
                        assert!(
                            ip.abs() <= 1e-10 * (1.0 + ni.max(nj)),
                            "n={n} k={k} i={i} j={j}: {ip}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn lefschetz_inverse_roundtrip() {
        let mut rng = StdRng::seed_from_u64(53);
        let n = 3;
        let m = random_spd(&mut rng, n);
        let k = 1;
        // A (2n-k)-form in the image: push a random k-form forward first.
        let src = GradedForm::from_part(random_form(&mut rng, n, 1, 0))
            .add(&GradedForm::from_part(random_form(&mut rng, n, 0, 1)))
            .unwrap();
        let b = lefschetz_power(&src, n - k, &m).unwrap();
        let a = lefschetz_inverse(&b, k, &m).unwrap();
        let back = lefschetz_power(&a, n - k, &m).unwrap();
        let scale = b.max_abs_coeff();
        assert!(back.max_coeff_diff(&b) <= 1e-10 * scale);
        assert!(a.max_coeff_diff(&src) <= 1e-10 * scale);
    }

    #[test]
    fn lefschetz_inverse_identity_at_middle_degree() {
        let mut rng = StdRng::seed_from_u64(59);
        let n = 2;
        let m = random_spd(&mut rng, n);
        let b = GradedForm::from_part(random_form(&mut rng, n, 1, 1));
        let a = lefschetz_inverse(&b, n, &m).unwrap();
        assert!(a.max_coeff_diff(&b) == 0.0);
    }

    #[test]
    fn lefschetz_inverse_of_omega_square() {
        // n=2: L^2(1) = omega^2 = 2 omega_2, so b = omega^2 maps back to 1.
        let n = 2;
        let m = MetricPoint::identity(n);
        let w = m.omega();
        let w2 = GradedForm::from_part(w.wedge(&w).unwrap());
        let a = lefschetz_inverse(&w2, 0, &m).unwrap();
        let one = GradedForm::from_part(PointForm::one(n).unwrap());
        assert!(a.max_coeff_diff(&one) <= 1e-13);
    }
}
