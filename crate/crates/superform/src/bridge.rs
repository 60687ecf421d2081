//! Point-level dictionary between super forms and complex forms.
//!
//! At a point where `omega` is orthonormal, every super form expands in the
//! basis `Theta_{I,J,K} = dx_J ^ dxi_K ^ dV_I`, and the map `C` sends it to
//! the complex form with the same coordinates in
//! `Theta^C_{I,J,K} = dz_J ^ dzbar_K ^ dV^C_I`. The complex generators obey
//! the same sign calculus as the super generators under the order
//! `dz_1 < ... < dz_n < dzbar_1 < ... < dzbar_n`, so the monomial bookkeeping
//! is shared with [`crate::algebra`].
//!
//! Every conversion constant here is a unit times a power of two, so complex
//! `f64` arithmetic stays exact through these operations; comparisons may
//! nevertheless allow `1e-12` once float-valued coefficients flow through.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::algebra::{theta_coordinates, wedge_sign, GradedForm, MonomialKey, MultiIndex, PointForm};
use crate::error::{Error, Result};
use crate::metric::{self, MetricPoint};

/// `i^e` as an exact complex unit.
fn unit_i_pow(e: i64) -> Complex64 {
    match e.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// `(-2i)^e` for any integer `e`, exact (a unit times a power of two).
fn neg_two_i_pow(e: i64) -> Complex64 {
    if e >= 0 {
        let mag = 2f64.powi(e as i32);
        let sign = if e % 2 == 0 { 1.0 } else { -1.0 };
        unit_i_pow(e) * Complex64::new(sign * mag, 0.0)
    } else {
        // (-2i)^{-1} = i/2.
        let m = -e;
        let mag = 2f64.powi(-(m as i32));
        unit_i_pow(m) * Complex64::new(mag, 0.0)
    }
}

/// Complex form at a point, on canonical `dz_A ^ dzbar_B` monomials with the
/// signs folded into the coefficients.
#[derive(Clone, PartialEq, Debug)]
pub struct ComplexPointForm {
    n: usize,
    p: usize,
    q: usize,
    coeffs: BTreeMap<MonomialKey, Complex64>,
}

impl ComplexPointForm {
    pub fn zero(n: usize, p: usize, q: usize) -> Result<Self> {
        if n == 0 || n > crate::algebra::MAX_DIM {
            return Err(Error::DimensionOutOfRange(n));
        }
        Ok(ComplexPointForm { n, p, q, coeffs: BTreeMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bidegree(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn degree(&self) -> usize {
        self.p + self.q
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, key: MonomialKey) -> Complex64 {
        self.coeffs.get(&key).copied().unwrap_or_default()
    }

    pub fn add_coeff(&mut self, key: MonomialKey, value: Complex64) {
        let entry = self.coeffs.entry(key).or_insert_with(Complex64::default);
        *entry += value;
        if entry.re == 0.0 && entry.im == 0.0 {
            self.coeffs.remove(&key);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (MonomialKey, Complex64)> + '_ {
        self.coeffs.iter().map(|(k, v)| (*k, *v))
    }

    pub fn scale(&self, s: Complex64) -> ComplexPointForm {
        let mut out = ComplexPointForm { n: self.n, p: self.p, q: self.q, coeffs: BTreeMap::new() };
        for (k, v) in self.iter() {
            out.add_coeff(k, v * s);
        }
        out
    }

    pub fn sub(&self, other: &ComplexPointForm) -> Result<ComplexPointForm> {
        if (self.n, self.p, self.q) != (other.n, other.p, other.q) {
            return Err(Error::BidegreeMismatch(
                self.p as u8,
                self.q as u8,
                other.p as u8,
                other.q as u8,
            ));
        }
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.add_coeff(k, -v);
        }
        Ok(out)
    }

    /// Wedge product; the sign calculus is the one shared with super forms.
    pub fn wedge(&self, other: &ComplexPointForm) -> Result<ComplexPointForm> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(self.n, other.n));
        }
        let mut out = ComplexPointForm::zero(self.n, self.p + other.p, self.q + other.q)?;
        for (ka, va) in self.iter() {
            for (kb, vb) in other.iter() {
                if let Some(sign) = wedge_sign(ka, kb) {
                    out.add_coeff(MonomialKey::new(ka.x | kb.x, ka.xi | kb.xi), va * vb * sign);
                }
            }
        }
        Ok(out)
    }

    /// Coordinates in the `Theta^C` basis: key `(M, A, B)` as packed masks.
    pub fn theta_coords(&self) -> BTreeMap<(u16, u16, u16), Complex64> {
        let mut out = BTreeMap::new();
        for (key, v) in self.iter() {
            let (m, a, b, sign) = theta_coordinates(self.n, key).expect("dims valid");
            out.insert((m.bits(), a.bits(), b.bits()), v * sign);
        }
        out
    }

    fn from_theta_coords(
        n: usize,
        p: usize,
        q: usize,
        coords: BTreeMap<(u16, u16, u16), Complex64>,
    ) -> Result<Self> {
        let mut out = ComplexPointForm::zero(n, p, q)?;
        for ((m, a, b), v) in coords {
            let mi = MultiIndex::from_bits(n, m)?;
            let ai = MultiIndex::from_bits(n, a)?;
            let bi = MultiIndex::from_bits(n, b)?;
            let t = crate::algebra::theta(n, mi, ai, bi)?;
            debug_assert_eq!(t.num_terms(), 1);
            for (key, sign) in t.iter() {
                out.add_coeff(key, v * sign);
            }
        }
        Ok(out)
    }

    /// Squared norm with respect to `Omega`: the sum of squared moduli of the
    /// `Theta^C` coordinates (those monomials are orthonormal by convention).
    pub fn norm_sq(&self) -> f64 {
        self.theta_coords().values().map(|v| v.norm_sqr()).sum()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_coeff_diff(&self, other: &ComplexPointForm) -> f64 {
        let mut m: f64 = 0.0;
        for (k, v) in self.iter() {
            m = m.max((v - other.coeff(k)).norm());
        }
        for (k, v) in other.iter() {
            if !self.coeffs.contains_key(&k) {
                m = m.max(v.norm());
            }
        }
        m
    }
}

/// The comparison map `C`: rewrite in the `Theta` basis (diagonal extraction
/// `M = I ∩ J` up to sign) and carry the coordinates to `Theta^C`. Linear and
/// injective; an isometry onto its image.
pub fn complexify(a: &PointForm) -> ComplexPointForm {
    let n = a.dim();
    let (p, q) = a.bidegree();
    let mut out = ComplexPointForm::zero(n, p, q).expect("dims valid");
    for (key, v) in a.iter() {
        let (m, aa, bb, sign) = theta_coordinates(n, key).expect("dims valid");
        // monomial = sign * Theta_{M,A,B}; C(Theta) = Theta^C re-expands with
        // the same sign, so the canonical coefficient is preserved.
        let t = crate::algebra::theta(n, m, aa, bb).expect("disjoint");
        for (tk, tsign) in t.iter() {
            debug_assert_eq!(tk, key);
            out.add_coeff(tk, Complex64::new(v * sign * tsign, 0.0));
        }
    }
    out
}

pub fn complexify_graded(a: &GradedForm) -> Vec<ComplexPointForm> {
    a.parts().map(complexify).collect()
}

/// The complex Kaehler form `Omega = (i/2) sum_k dz_k ^ dzbar_k`.
pub fn omega_complex(n: usize) -> ComplexPointForm {
    let mut w = ComplexPointForm::zero(n, 1, 1).expect("dims valid");
    for k in 0..n {
        w.add_coeff(MonomialKey::new(1 << k, 1 << k), Complex64::new(0.0, 0.5));
    }
    w
}

/// `L_Omega v = Omega ^ v`.
pub fn lefschetz_complex(v: &ComplexPointForm) -> ComplexPointForm {
    omega_complex(v.dim()).wedge(v).expect("same dimension")
}

/// `Lambda_Omega` by the classical formula
/// `Lambda_Omega Theta^C_{L,M,N} = (2/i) sum_{j in L} Theta^C_{L-j,M,N}`.
pub fn lambda_complex(v: &ComplexPointForm) -> ComplexPointForm {
    let n = v.dim();
    let (p, q) = v.bidegree();
    if p == 0 || q == 0 {
        return ComplexPointForm::zero(n, p.saturating_sub(1), q.saturating_sub(1))
            .expect("dims valid");
    }
    let two_over_i = Complex64::new(0.0, -2.0);
    let mut coords: BTreeMap<(u16, u16, u16), Complex64> = BTreeMap::new();
    for ((m, a, b), val) in v.theta_coords() {
        let mut rest = m;
        while rest != 0 {
            let bit = rest & rest.wrapping_neg();
            rest &= rest - 1;
            let entry = coords.entry((m & !bit, a, b)).or_insert_with(Complex64::default);
            *entry += val * two_over_i;
        }
    }
    coords.retain(|_, v| v.re != 0.0 || v.im != 0.0);
    ComplexPointForm::from_theta_coords(n, p - 1, q - 1, coords).expect("dims valid")
}

/// The complex Hodge star by the closed monomial formula
/// `*_Omega dz_A ^ dzbar_B ^ dV^C_M
///    = [i^{p-q} (-1)^{k(k+1)/2 + m} (-2i)^{k-n}] dz_A ^ dzbar_B ^ dV^C_{M'}`
/// with `M' = N \ (A ∪ B ∪ M)`. The sign exponent `k(k+1)/2` is the one
/// consistent with the star power formula on `L^r` and with the conversion
/// constant `i^n 2^{n-k} (-1)^n`; see the guide chapter on the complex
/// dictionary for the cross-checks that pin it down.
pub fn star_complex(v: &ComplexPointForm) -> ComplexPointForm {
    let n = v.dim();
    let full: u16 = if n == 16 { u16::MAX } else { (1u16 << n) - 1 };
    let mut coords: BTreeMap<(u16, u16, u16), Complex64> = BTreeMap::new();
    for ((m, a, b), val) in v.theta_coords() {
        let p = a.count_ones() as i64;
        let q = b.count_ones() as i64;
        let mc = m.count_ones() as i64;
        let k = p + q + 2 * mc;
        let m_prime = full & !(a | b | m);
        let sign = if ((k * (k + 1) / 2 + mc) % 2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let constant = unit_i_pow(p - q) * Complex64::new(sign, 0.0) * neg_two_i_pow(k - n as i64);
        let entry = coords.entry((m_prime, a, b)).or_insert_with(Complex64::default);
        *entry += val * constant;
    }
    coords.retain(|_, v| v.re != 0.0 || v.im != 0.0);
    let (p, q) = v.bidegree();
    ComplexPointForm::from_theta_coords(n, n - q, n - p, coords).expect("dims valid")
}

/// The scalar `i^n 2^{n-k} (-1)^n` relating the two Hodge stars on `k`-forms:
/// `C(*alpha) = i^n 2^{n-k} (-1)^n * (*_Omega C(alpha))`.
pub fn star_conversion_constant(n: usize, k: usize) -> Complex64 {
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    unit_i_pow(n as i64) * Complex64::new(sign * 2f64.powi(n as i32 - k as i32), 0.0)
}

/// One named deviation measured by [`verify_dictionary`].
#[derive(Clone, Debug)]
pub struct DictionaryCheck {
    pub name: &'static str,
    pub max_deviation: f64,
    pub cases: usize,
}

/// Run the dictionary checks at dimension `n`: the `L` and `Lambda`
/// intertwining relations, the isometry, primitivity equivalence, the star
/// conversion constant (exhaustively on monomials plus `trials` random
/// forms), and the `d`/`del` relations on polynomial-coefficient fields.
pub fn verify_dictionary(n: usize, trials: usize, seed: u64) -> Result<Vec<DictionaryCheck>> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    if n == 0 || n > 4 {
        return Err(Error::InvalidConfig(format!(
            "verify_dictionary supports 1 <= n <= 4, got {n}"
        )));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let id = MetricPoint::identity(n);
    let two_over_i = Complex64::new(0.0, -2.0);
    let i_over_two = Complex64::new(0.0, 0.5);

    let mut isometry = DictionaryCheck { name: "isometry", max_deviation: 0.0, cases: 0 };
    let mut lefschetz_rel =
        DictionaryCheck { name: "lefschetz-intertwine", max_deviation: 0.0, cases: 0 };
    let mut lambda_rel =
        DictionaryCheck { name: "lambda-intertwine", max_deviation: 0.0, cases: 0 };
    let mut primitivity =
        DictionaryCheck { name: "primitivity-equivalence", max_deviation: 0.0, cases: 0 };
    let mut star_rel = DictionaryCheck { name: "star-conversion", max_deviation: 0.0, cases: 0 };
    let mut const_rel =
        DictionaryCheck { name: "star-constant-identity", max_deviation: 0.0, cases: 0 };
    let mut d_rel = DictionaryCheck { name: "d-vs-2del", max_deviation: 0.0, cases: 0 };
    let mut dsharp_rel =
        DictionaryCheck { name: "dsharp-vs-2delbar", max_deviation: 0.0, cases: 0 };

    let run_form_checks = |alpha: &PointForm,
                               isometry: &mut DictionaryCheck,
                               lefschetz_rel: &mut DictionaryCheck,
                               lambda_rel: &mut DictionaryCheck,
                               primitivity: &mut DictionaryCheck,
                               star_rel: &mut DictionaryCheck|
     -> Result<()> {
        let c = complexify(alpha);
        // Isometry.
        let ns = metric::inner(alpha, alpha, &id)?;
        isometry.max_deviation = isometry.max_deviation.max((ns - c.norm_sq()).abs());
        isometry.cases += 1;
        // C(L alpha) = (2/i) L_Omega C(alpha).
        let lhs = complexify(&metric::lefschetz(alpha, &id)?);
        let rhs = lefschetz_complex(&c).scale(two_over_i);
        lefschetz_rel.max_deviation = lefschetz_rel.max_deviation.max(lhs.max_coeff_diff(&rhs));
        lefschetz_rel.cases += 1;
        // C(Lambda alpha) = (i/2) Lambda_Omega C(alpha).
        let lhs = complexify(&metric::lambda(alpha, &id)?);
        let rhs = lambda_complex(&c).scale(i_over_two);
        lambda_rel.max_deviation = lambda_rel.max_deviation.max(lhs.max_coeff_diff(&rhs));
        lambda_rel.cases += 1;
        // Primitive super part maps to a Lambda_Omega-primitive complex form.
        let g = GradedForm::from_part(alpha.clone());
        if let Ok(parts) = metric::primitive_decompose(&g, &id) {
            let (p, q) = alpha.bidegree();
            if let Some(prim) = parts[0].part(p, q) {
                if !prim.is_zero() {
                    let dev = lambda_complex(&complexify(prim)).max_abs_coeff();
                    primitivity.max_deviation = primitivity.max_deviation.max(dev);
                    primitivity.cases += 1;
                }
            }
        }
        // C(* alpha) = i^n 2^{n-k} (-1)^n *_Omega C(alpha).
        let k = alpha.degree();
        let lhs = complexify(&metric::hodge_star(alpha, &id)?);
        let rhs = star_complex(&c).scale(star_conversion_constant(n, k));
        star_rel.max_deviation = star_rel.max_deviation.max(lhs.max_coeff_diff(&rhs));
        star_rel.cases += 1;
        Ok(())
    };

    // Exhaustive over canonical monomials.
    for p in 0..=n {
        for q in 0..=n {
            for key in metric::enumerate_keys(n, p, q) {
                let mut alpha = PointForm::zero(n, p, q)?;
                alpha.add_coeff(key, 1.0);
                run_form_checks(
                    &alpha,
                    &mut isometry,
                    &mut lefschetz_rel,
                    &mut lambda_rel,
                    &mut primitivity,
                    &mut star_rel,
                )?;
            }
        }
    }
    // Random forms.
    for _ in 0..trials {
        let p = rng.gen_range(0..=n);
        let q = rng.gen_range(0..=n);
        let mut alpha = PointForm::zero(n, p, q)?;
        for key in metric::enumerate_keys(n, p, q) {
            alpha.add_coeff(key, rng.gen_range(-1.0..1.0));
        }
        run_form_checks(
            &alpha,
            &mut isometry,
            &mut lefschetz_rel,
            &mut lambda_rel,
            &mut primitivity,
            &mut star_rel,
        )?;
    }

    // The constant identity behind the star conversion, for all admissible
    // (p, q, m): c_p c_q (-1)^{p+m+pq} =
    //   i^n 2^{n-k} (-1)^n * i^{p-q} (-1)^{k(k+1)/2+m} (-2i)^{k-n}.
    for p in 0..=n {
        for q in 0..=n {
            for m in 0..=n {
                if p + q + m > n {
                    continue;
                }
                let k = (p + q + 2 * m) as i64;
                let real_side = crate::algebra::c_sign(p)
                    * crate::algebra::c_sign(q)
                    * if (p + m + p * q) % 2 == 0 { 1.0 } else { -1.0 };
                let wsign = if ((k * (k + 1) / 2 + m as i64) % 2).rem_euclid(2) == 0 {
                    1.0
                } else {
                    -1.0
                };
                let complex_side = star_conversion_constant(n, k as usize)
                    * unit_i_pow(p as i64 - q as i64)
                    * Complex64::new(wsign, 0.0)
                    * neg_two_i_pow(k - n as i64);
                let dev = (complex_side - Complex64::new(real_side, 0.0)).norm();
                const_rel.max_deviation = const_rel.max_deviation.max(dev);
                const_rel.cases += 1;
            }
        }
    }

    // Field-level relations on polynomial coefficients, degree <= 3.
    for _ in 0..trials.clamp(1, 50) {
        let p = rng.gen_range(0..n.max(1));
        let q = rng.gen_range(0..n.max(1));
        let f = PolyForm::random(&mut rng, n, p, q, 3);
        // C(d alpha) = 2 del C(alpha).
        let lhs = f.d().complexify();
        let rhs = f.complexify().two_del();
        d_rel.max_deviation = d_rel.max_deviation.max(lhs.max_diff(&rhs));
        d_rel.cases += 1;
        // C(d# alpha) = 2 delbar C(alpha).
        let lhs = f.d_sharp().complexify();
        let rhs = f.complexify().two_del_bar();
        dsharp_rel.max_deviation = dsharp_rel.max_deviation.max(lhs.max_diff(&rhs));
        dsharp_rel.cases += 1;
    }

    Ok(vec![
        isometry,
        lefschetz_rel,
        lambda_rel,
        primitivity,
        star_rel,
        const_rel,
        d_rel,
        dsharp_rel,
    ])
}

// ---------------------------------------------------------------------------
// Polynomial-coefficient forms for the d / del comparisons.
// ---------------------------------------------------------------------------

/// Multivariate polynomial in `x_1..x_n` with `f64` coefficients, keyed by
/// exponent vectors. Differentiation multiplies by integer exponents, so
/// polynomial identities here are float-exact.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct Poly {
    terms: BTreeMap<Vec<u8>, f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn monomial(exps: Vec<u8>, c: f64) -> Self {
        let mut p = Poly::zero();
        p.add_term(exps, c);
        p
    }

    pub fn add_term(&mut self, exps: Vec<u8>, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(exps.clone()).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&exps);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u8>, f64)> {
        self.terms.iter().map(|(k, v)| (k, *v))
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero();
        for (e, c) in self.terms() {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    /// Partial derivative along `axis` (0-based).
    pub fn derivative(&self, axis: usize) -> Poly {
        let mut out = Poly::zero();
        for (exps, c) in &self.terms {
            let e = exps[axis];
            if e > 0 {
                let mut d = exps.clone();
                d[axis] = e - 1;
                out.add_term(d, c * e as f64);
            }
        }
        out
    }

    pub fn max_diff(&self, other: &Poly) -> f64 {
        let mut m: f64 = 0.0;
        for (k, v) in &self.terms {
            m = m.max((v - other.terms.get(k).copied().unwrap_or(0.0)).abs());
        }
        for (k, v) in &other.terms {
            if !self.terms.contains_key(k) {
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// Super form with polynomial coefficients, for point-free identities.
#[derive(Clone, Debug)]
pub struct PolyForm {
    n: usize,
    coeffs: BTreeMap<MonomialKey, Poly>,
}

impl PolyForm {
    pub fn new(n: usize) -> Self {
        PolyForm { n, coeffs: BTreeMap::new() }
    }

    pub fn random(rng: &mut impl rand::Rng, n: usize, p: usize, q: usize, max_deg: u8) -> Self {
        let mut f = PolyForm::new(n);
        for key in metric::enumerate_keys(n, p, q) {
            let mut poly = Poly::zero();
            for _ in 0..3 {
                let exps: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=max_deg)).collect();
                poly.add_term(exps, rng.gen_range(-1.0..1.0));
            }
            if !poly.is_zero() {
                f.coeffs.insert(key, poly);
            }
        }
        f
    }

    pub fn add_term(&mut self, key: MonomialKey, poly: Poly) {
        if poly.is_zero() {
            return;
        }
        match self.coeffs.remove(&key) {
            None => {
                self.coeffs.insert(key, poly);
            }
            Some(mut existing) => {
                for (e, c) in poly.terms {
                    existing.add_term(e, c);
                }
                if !existing.is_zero() {
                    self.coeffs.insert(key, existing);
                }
            }
        }
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&MonomialKey, &Poly)> {
        self.coeffs.iter()
    }

    /// `d f = sum_l (d f_{IJ} / d x_l) dx_l ^ dx_I ^ dxi_J`.
    pub fn d(&self) -> PolyForm {
        let mut out = PolyForm::new(self.n);
        for (key, poly) in &self.coeffs {
            for l in 0..self.n {
                if key.x & (1 << l) != 0 {
                    continue;
                }
                let dp = poly.derivative(l);
                if dp.is_zero() {
                    continue;
                }
                let gen = MonomialKey::new(1 << l, 0);
                let sign = wedge_sign(gen, *key).expect("disjoint");
                out.add_term(MonomialKey::new(key.x | (1 << l), key.xi), dp.scale(sign));
            }
        }
        out
    }

    /// `d# f = sum_l (d f_{IJ} / d x_l) dxi_l ^ dx_I ^ dxi_J`.
    pub fn d_sharp(&self) -> PolyForm {
        let mut out = PolyForm::new(self.n);
        for (key, poly) in &self.coeffs {
            for l in 0..self.n {
                if key.xi & (1 << l) != 0 {
                    continue;
                }
                let dp = poly.derivative(l);
                if dp.is_zero() {
                    continue;
                }
                let gen = MonomialKey::new(0, 1 << l);
                let sign = wedge_sign(gen, *key).expect("disjoint");
                out.add_term(MonomialKey::new(key.x, key.xi | (1 << l)), dp.scale(sign));
            }
        }
        out
    }

    /// `J f`: swap families, re-canonicalize.
    pub fn j(&self) -> PolyForm {
        let mut out = PolyForm::new(self.n);
        for (key, poly) in &self.coeffs {
            let p = key.x.count_ones() as usize;
            let q = key.xi.count_ones() as usize;
            let sign = if (p * q) % 2 == 0 { 1.0 } else { -1.0 };
            out.add_term(MonomialKey::new(key.xi, key.x), poly.scale(sign));
        }
        out
    }

    pub fn max_diff(&self, other: &PolyForm) -> f64 {
        let mut m: f64 = 0.0;
        let zero = Poly::zero();
        for (k, v) in &self.coeffs {
            m = m.max(v.max_diff(other.coeffs.get(k).unwrap_or(&zero)));
        }
        for (k, v) in &other.coeffs {
            if !self.coeffs.contains_key(k) {
                m = m.max(v.max_diff(&zero));
            }
        }
        m
    }

    /// Carry to the complex side; canonical coordinates are preserved.
    pub fn complexify(&self) -> PolyComplexForm {
        let mut out = PolyComplexForm::new(self.n);
        for (key, poly) in &self.coeffs {
            let (m, a, b, sign) = theta_coordinates(self.n, *key).expect("dims valid");
            let t = crate::algebra::theta(self.n, m, a, b).expect("disjoint");
            for (tk, tsign) in t.iter() {
                out.add_term(tk, poly.scale(sign * tsign));
            }
        }
        out
    }
}

/// Complex form with real polynomial coefficients in `x` (under the
/// identification `x = (z + zbar)/2` the relevant coefficients stay real;
/// all complex units cancel in the `2 del` / `2 delbar` relations).
#[derive(Clone, Debug)]
pub struct PolyComplexForm {
    n: usize,
    coeffs: BTreeMap<MonomialKey, Poly>,
}

impl PolyComplexForm {
    pub fn new(n: usize) -> Self {
        PolyComplexForm { n, coeffs: BTreeMap::new() }
    }

    pub fn add_term(&mut self, key: MonomialKey, poly: Poly) {
        if poly.is_zero() {
            return;
        }
        match self.coeffs.remove(&key) {
            None => {
                self.coeffs.insert(key, poly);
            }
            Some(mut existing) => {
                for (e, c) in poly.terms {
                    existing.add_term(e, c);
                }
                if !existing.is_zero() {
                    self.coeffs.insert(key, existing);
                }
            }
        }
    }

    /// `2 del v`: since `del/del z_l = (1/2) del/del x_l` on coefficients of
    /// `x` alone, `2 del` wedges `dz_l` with the plain `x_l`-derivative.
    pub fn two_del(&self) -> PolyComplexForm {
        let mut out = PolyComplexForm::new(self.n);
        for (key, poly) in &self.coeffs {
            for l in 0..self.n {
                if key.x & (1 << l) != 0 {
                    continue;
                }
                let dp = poly.derivative(l);
                if dp.is_zero() {
                    continue;
                }
                let gen = MonomialKey::new(1 << l, 0);
                let sign = wedge_sign(gen, *key).expect("disjoint");
                out.add_term(MonomialKey::new(key.x | (1 << l), key.xi), dp.scale(sign));
            }
        }
        out
    }

    /// `2 delbar v`, wedging `dzbar_l`.
    pub fn two_del_bar(&self) -> PolyComplexForm {
        let mut out = PolyComplexForm::new(self.n);
        for (key, poly) in &self.coeffs {
            for l in 0..self.n {
                if key.xi & (1 << l) != 0 {
                    continue;
                }
                let dp = poly.derivative(l);
                if dp.is_zero() {
                    continue;
                }
                let gen = MonomialKey::new(0, 1 << l);
                let sign = wedge_sign(gen, *key).expect("disjoint");
                out.add_term(MonomialKey::new(key.x, key.xi | (1 << l)), dp.scale(sign));
            }
        }
        out
    }

    pub fn max_diff(&self, other: &PolyComplexForm) -> f64 {
        let mut m: f64 = 0.0;
        let zero = Poly::zero();
        for (k, v) in &self.coeffs {
            m = m.max(v.max_diff(other.coeffs.get(k).unwrap_or(&zero)));
        }
        for (k, v) in &other.coeffs {
            if !self.coeffs.contains_key(k) {
                m = m.max(v.max_diff(&zero));
            }
        }
        m
    }
}
