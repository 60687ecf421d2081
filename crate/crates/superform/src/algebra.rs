//! Exact exterior algebra of super forms at a point.
//!
//! The algebra lives on the `2n` anticommuting generators
//! `dx_1 < ... < dx_n < dxi_1 < ... < dxi_n` (this total order is fixed once
//! and for all; every sign constant below is a consequence of it). A canonical
//! monomial is `dx_I ^ dxi_J` with both index sets ascending, and all signs
//! arising from reordering are folded into the coefficient.
//!
//! Coefficients are `f64`, but the operations in this module use only
//! `{+,-,*}` on exactly representable values for basis manipulation, so
//! identity tests at this layer can demand exact equality.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Largest supported ambient dimension: a monomial key packs into one `u32`
/// (two 16-bit masks) so keys stay hashable and dense tables feasible.
pub const MAX_DIM: usize = 16;

/// The sign constant `c_p = (-1)^{p(p-1)/2}` relating `dx_I ^ dxi_I` to
/// `dV_I = dV_{i_1} ^ ... ^ dV_{i_p}` with `dV_i = dx_i ^ dxi_i`.
pub fn c_sign(p: usize) -> f64 {
    if (p * (p.saturating_sub(1)) / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Ascending subset of `{1..n}` encoded as an n-bit mask; bit `i` set means
/// index `i+1` is present.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    bits: u16,
    n: u8,
}

impl MultiIndex {
    pub fn empty(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::DimensionOutOfRange(n));
        }
        Ok(MultiIndex { bits: 0, n: n as u8 })
    }

    /// Build from 1-based indices; duplicates are rejected.
    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut m = Self::empty(n)?;
        for &i in indices {
            if i == 0 || i > n {
                return Err(Error::DimensionOutOfRange(i));
            }
            let bit = 1u16 << (i - 1);
            if m.bits & bit != 0 {
                return Err(Error::NonDisjointIndices);
            }
            m.bits |= bit;
        }
        Ok(m)
    }

    pub fn from_bits(n: usize, bits: u16) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::DimensionOutOfRange(n));
        }
        if n < MAX_DIM && bits >> n != 0 {
            return Err(Error::DimensionOutOfRange(n));
        }
        Ok(MultiIndex { bits, n: n as u8 })
    }

    /// The full set `{1..n}`.
    pub fn full(n: usize) -> Result<Self> {
        let bits = if n == MAX_DIM { u16::MAX } else { (1u16 << n) - 1 };
        Self::from_bits(n, bits)
    }

    pub fn bits(&self) -> u16 {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.n as usize
    }

    /// Cardinality `|I|`.
    pub fn card(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= 1 && i <= self.dim() && self.bits & (1 << (i - 1)) != 0
    }

    pub fn is_disjoint(&self, other: &MultiIndex) -> bool {
        self.bits & other.bits == 0
    }

    pub fn union(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex { bits: self.bits | other.bits, n: self.n }
    }

    pub fn intersection(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex { bits: self.bits & other.bits, n: self.n }
    }

    pub fn difference(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex { bits: self.bits & !other.bits, n: self.n }
    }

    /// Complement within `{1..n}`.
    pub fn complement(&self) -> MultiIndex {
        let full = if self.n as usize == MAX_DIM {
            u16::MAX
        } else {
            (1u16 << self.n) - 1
        };
        MultiIndex { bits: full & !self.bits, n: self.n }
    }

    /// `I + i`; returns `None` if `i` is already present.
    pub fn with(&self, i: usize) -> Option<MultiIndex> {
        if i == 0 || i > self.dim() || self.contains(i) {
            return None;
        }
        Some(MultiIndex { bits: self.bits | (1 << (i - 1)), n: self.n })
    }

    /// `I - i`; returns `None` if `i` is absent.
    pub fn without(&self, i: usize) -> Option<MultiIndex> {
        if !self.contains(i) {
            return None;
        }
        Some(MultiIndex { bits: self.bits & !(1 << (i - 1)), n: self.n })
    }

    /// Iterate the contained indices in strictly ascending order (1-based).
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.dim();
        (1..=n).filter(move |&i| self.contains(i))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.indices().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Canonical monomial key `dx_I ^ dxi_J`, ordered by `(I-mask, J-mask)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonomialKey {
    /// Mask of the `dx` family.
    pub x: u16,
    /// Mask of the `dxi` family.
    pub xi: u16,
}

impl MonomialKey {
    pub fn new(x: u16, xi: u16) -> Self {
        MonomialKey { x, xi }
    }

    pub fn x_index(&self, n: usize) -> MultiIndex {
        MultiIndex { bits: self.x, n: n as u8 }
    }

    pub fn xi_index(&self, n: usize) -> MultiIndex {
        MultiIndex { bits: self.xi, n: n as u8 }
    }
}

impl fmt::Debug for MonomialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dx[{:#06x}]^dxi[{:#06x}]", self.x, self.xi)
    }
}

/// Number of inversions between two ascending masks: pairs `(i, j)` with
/// `i` in `a`, `j` in `b`, and `i > j`. Governs the sign of interleaving the
/// sorted sequence `b` after the sorted sequence `a`.
fn cross_inversions(a: u16, b: u16) -> u32 {
    let mut count = 0;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        count += (a >> (j + 1)).count_ones() as u32;
        rest &= rest - 1;
    }
    count
}

/// Sign of the wedge of two canonical monomials, or `None` when an index set
/// collides within the same family (the product is zero).
///
/// The concatenated generator sequence is `dx_{I1} dxi_{J1} dx_{I2} dxi_{J2}`;
/// under the fixed total order its sorting parity is
/// `|J1|*|I2| + inv(I1,I2) + inv(J1,J2)`.
pub fn wedge_sign(a: MonomialKey, b: MonomialKey) -> Option<f64> {
    if a.x & b.x != 0 || a.xi & b.xi != 0 {
        return None;
    }
    let swaps = (a.xi.count_ones() * b.x.count_ones())
        + cross_inversions(a.x, b.x)
        + cross_inversions(a.xi, b.xi);
    Some(if swaps % 2 == 0 { 1.0 } else { -1.0 })
}

/// Exact element of the bigraded exterior algebra at a point: a sparse map
/// from canonical monomials of fixed bidegree `(p,q)` to coefficients.
#[derive(Clone, PartialEq)]
pub struct PointForm {
    n: usize,
    p: usize,
    q: usize,
    coeffs: BTreeMap<MonomialKey, f64>,
}

impl PointForm {
    pub fn zero(n: usize, p: usize, q: usize) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::DimensionOutOfRange(n));
        }
        Ok(PointForm { n, p, q, coeffs: BTreeMap::new() })
    }

    /// The constant `1` as a `(0,0)`-form.
    pub fn one(n: usize) -> Result<Self> {
        Self::constant(n, 1.0)
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        let mut f = Self::zero(n, 0, 0)?;
        f.add_coeff(MonomialKey::new(0, 0), value);
        Ok(f)
    }

    /// The basis one-form `dx_i` (1-based).
    pub fn dx(n: usize, i: usize) -> Result<Self> {
        let idx = MultiIndex::from_indices(n, &[i])?;
        let mut f = Self::zero(n, 1, 0)?;
        f.add_coeff(MonomialKey::new(idx.bits(), 0), 1.0);
        Ok(f)
    }

    /// The basis one-form `dxi_i` (1-based).
    pub fn dxi(n: usize, i: usize) -> Result<Self> {
        let idx = MultiIndex::from_indices(n, &[i])?;
        let mut f = Self::zero(n, 0, 1)?;
        f.add_coeff(MonomialKey::new(0, idx.bits()), 1.0);
        Ok(f)
    }

    /// Canonical monomial `coeff * dx_I ^ dxi_J` from ascending index sets.
    pub fn monomial(n: usize, i: MultiIndex, j: MultiIndex, coeff: f64) -> Result<Self> {
        if i.dim() != n || j.dim() != n {
            return Err(Error::DimensionMismatch(i.dim(), n));
        }
        let mut f = Self::zero(n, i.card(), j.card())?;
        f.add_coeff(MonomialKey::new(i.bits(), j.bits()), coeff);
        Ok(f)
    }

    /// Build a monomial from generator sequences *as written*, folding the
    /// sorting sign into the coefficient: `dx_{xs[0]} ^ ... ^ dxi_{xis[0]} ^ ...`
    /// Returns the zero form when a generator repeats.
    pub fn monomial_from_sequence(n: usize, xs: &[usize], xis: &[usize]) -> Result<Self> {
        let mut acc = Self::one(n)?;
        for &i in xs {
            acc = acc.wedge(&Self::dx(n, i)?)?;
        }
        for &i in xis {
            acc = acc.wedge(&Self::dxi(n, i)?)?;
        }
        Ok(acc)
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

    pub fn coeff(&self, key: MonomialKey) -> f64 {
        self.coeffs.get(&key).copied().unwrap_or(0.0)
    }

    /// Add into a coefficient, pruning exact zeros to keep the map sparse.
    pub fn add_coeff(&mut self, key: MonomialKey, value: f64) {
        debug_assert_eq!(key.x.count_ones() as usize, self.p);
        debug_assert_eq!(key.xi.count_ones() as usize, self.q);
        let entry = self.coeffs.entry(key).or_insert(0.0);
        *entry += value;
        if *entry == 0.0 {
            self.coeffs.remove(&key);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (MonomialKey, f64)> + '_ {
        self.coeffs.iter().map(|(k, v)| (*k, *v))
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn scale(&self, s: f64) -> PointForm {
        let mut out = PointForm { n: self.n, p: self.p, q: self.q, coeffs: BTreeMap::new() };
        for (k, v) in self.iter() {
            out.add_coeff(k, v * s);
        }
        out
    }

    pub fn add(&self, other: &PointForm) -> Result<PointForm> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.add_coeff(k, v);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &PointForm) -> Result<PointForm> {
        self.add(&other.scale(-1.0))
    }

    fn check_same_shape(&self, other: &PointForm) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(self.n, other.n));
        }
        if (self.p, self.q) != (other.p, other.q) {
            return Err(Error::BidegreeMismatch(
                self.p as u8,
                self.q as u8,
                other.p as u8,
                other.q as u8,
            ));
        }
        Ok(())
    }

    /// Exterior product. Bilinear and associative; a monomial product is zero
    /// when index sets collide within the same family.
    pub fn wedge(&self, other: &PointForm) -> Result<PointForm> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(self.n, other.n));
        }
        let mut out = PointForm::zero(self.n, self.p + other.p, self.q + other.q)?;
        for (ka, va) in self.iter() {
            for (kb, vb) in other.iter() {
                if let Some(sign) = wedge_sign(ka, kb) {
                    let key = MonomialKey::new(ka.x | kb.x, ka.xi | kb.xi);
                    out.add_coeff(key, sign * va * vb);
                }
            }
        }
        Ok(out)
    }

    /// The involution `J`: swap the generator families and re-canonicalize.
    /// `J(dx_I ^ dxi_J) = dxi_I ^ dx_J = (-1)^{pq} dx_J ^ dxi_I`, so the
    /// result has bidegree `(q,p)` and `J o J` is the identity.
    pub fn j(&self) -> PointForm {
        let mut out = PointForm { n: self.n, p: self.q, q: self.p, coeffs: BTreeMap::new() };
        let sign = if (self.p * self.q) % 2 == 0 { 1.0 } else { -1.0 };
        for (k, v) in self.iter() {
            out.add_coeff(MonomialKey::new(k.xi, k.x), sign * v);
        }
        out
    }

    /// Largest absolute coefficient (zero form gives `0`).
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute difference between coefficient maps.
    pub fn max_coeff_diff(&self, other: &PointForm) -> f64 {
        let mut m: f64 = 0.0;
        for (k, v) in self.iter() {
            m = m.max((v - other.coeff(k)).abs());
        }
        for (k, v) in other.iter() {
            if self.coeffs.get(&k).is_none() {
                m = m.max(v.abs());
            }
        }
        m
    }
}

impl fmt::Debug for PointForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PointForm(n={}, ({},{}); ", self.n, self.p, self.q)?;
        for (i, (k, v)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{v}*{k:?}")?;
        }
        write!(f, ")")
    }
}

/// The monomial `Theta_{I,J,K} = dx_J ^ dxi_K ^ dV_I` for pairwise disjoint
/// index sets, with `dV_i = dx_i ^ dxi_i`. Bidegree `(|J|+|I|, |K|+|I|)`.
pub fn theta(n: usize, i: MultiIndex, j: MultiIndex, k: MultiIndex) -> Result<PointForm> {
    if !(i.is_disjoint(&j) && i.is_disjoint(&k) && j.is_disjoint(&k)) {
        return Err(Error::NonDisjointIndices);
    }
    let mut acc = PointForm::monomial(n, j, k, 1.0)?;
    for idx in i.indices() {
        let dv = PointForm::dx(n, idx)?.wedge(&PointForm::dxi(n, idx)?)?;
        acc = acc.wedge(&dv)?;
    }
    Ok(acc)
}

/// Decompose a canonical monomial into its `Theta` coordinates:
/// `dx_I ^ dxi_J = sign * Theta_{M,A,B}` with `M = I ∩ J`, `A = I \ M`,
/// `B = J \ M`. Returns `(M, A, B, sign)`.
pub fn theta_coordinates(n: usize, key: MonomialKey) -> Result<(MultiIndex, MultiIndex, MultiIndex, f64)> {
    let i = key.x_index(n);
    let j = key.xi_index(n);
    let m = i.intersection(&j);
    let a = i.difference(&m);
    let b = j.difference(&m);
    let t = theta(n, m, a, b)?;
    debug_assert_eq!(t.num_terms(), 1);
    let sign = t.coeff(key);
    debug_assert!(sign == 1.0 || sign == -1.0);
    // Theta = sign * monomial, hence monomial = sign * Theta (sign^2 = 1).
    Ok((m, a, b, sign))
}

/// General element of the bigraded algebra: at most one part per bidegree,
/// absent parts are zero.
#[derive(Clone, PartialEq)]
pub struct GradedForm {
    n: usize,
    parts: BTreeMap<(usize, usize), PointForm>,
}

impl GradedForm {
    pub fn zero(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::DimensionOutOfRange(n));
        }
        Ok(GradedForm { n, parts: BTreeMap::new() })
    }

    pub fn from_part(part: PointForm) -> Self {
        let mut g = GradedForm { n: part.dim(), parts: BTreeMap::new() };
        g.add_part(part);
        g
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn add_part(&mut self, part: PointForm) {
        assert_eq!(part.dim(), self.n, "graded form dimension mismatch");
        if part.is_zero() {
            return;
        }
        let key = part.bidegree();
        match self.parts.remove(&key) {
            None => {
                self.parts.insert(key, part);
            }
            Some(existing) => {
                let sum = existing.add(&part).expect("matching bidegree");
                if !sum.is_zero() {
                    self.parts.insert(key, sum);
                }
            }
        }
    }

    pub fn part(&self, p: usize, q: usize) -> Option<&PointForm> {
        self.parts.get(&(p, q))
    }

    pub fn parts(&self) -> impl Iterator<Item = &PointForm> {
        self.parts.values()
    }

    /// If every part shares one total degree `k`, return it.
    pub fn pure_degree(&self) -> Option<usize> {
        let mut deg = None;
        for part in self.parts() {
            match deg {
                None => deg = Some(part.degree()),
                Some(d) if d == part.degree() => {}
                _ => return None,
            }
        }
        deg
    }

    pub fn scale(&self, s: f64) -> GradedForm {
        let mut out = GradedForm { n: self.n, parts: BTreeMap::new() };
        for part in self.parts() {
            out.add_part(part.scale(s));
        }
        out
    }

    pub fn add(&self, other: &GradedForm) -> Result<GradedForm> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(self.n, other.n));
        }
        let mut out = self.clone();
        for part in other.parts() {
            out.add_part(part.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &GradedForm) -> Result<GradedForm> {
        self.add(&other.scale(-1.0))
    }

    pub fn wedge(&self, other: &GradedForm) -> Result<GradedForm> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(self.n, other.n));
        }
        let mut out = GradedForm::zero(self.n)?;
        for a in self.parts() {
            for b in other.parts() {
                out.add_part(a.wedge(b)?);
            }
        }
        Ok(out)
    }

    pub fn j(&self) -> GradedForm {
        let mut out = GradedForm { n: self.n, parts: BTreeMap::new() };
        for part in self.parts() {
            out.add_part(part.j());
        }
        out
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.parts().fold(0.0, |m, p| m.max(p.max_abs_coeff()))
    }

    pub fn max_coeff_diff(&self, other: &GradedForm) -> f64 {
        let mut m: f64 = 0.0;
        let degrees: std::collections::BTreeSet<_> = self
            .parts
            .keys()
            .chain(other.parts.keys())
            .copied()
            .collect();
        for (p, q) in degrees {
            match (self.part(p, q), other.part(p, q)) {
                (Some(a), Some(b)) => m = m.max(a.max_coeff_diff(b)),
                (Some(a), None) | (None, Some(a)) => m = m.max(a.max_abs_coeff()),
                (None, None) => {}
            }
        }
        m
    }
}

impl fmt::Debug for GradedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GradedForm(n={}; {} parts)", self.n, self.parts.len())
    }
}
