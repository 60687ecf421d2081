//! Grid-sampled `(p,q)`-form fields.
//!
//! A field stores one scalar array per canonical monomial key, dense over the
//! grid in row-major order. Every key of the bidegree is present (possibly
//! all zero), which keeps the SFF1 layout and all operator kernels uniform.
//! Bidegrees outside `0..=n` are legal and carry no keys: they are canonical
//! zero fields, which lets `d` of an `(n,q)`-field flow through compositions.

use std::collections::BTreeMap;

use crate::algebra::{MonomialKey, PointForm};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::metric::enumerate_keys;

#[derive(Clone, PartialEq, Debug)]
pub struct FormField {
    grid: Grid,
    p: usize,
    q: usize,
    data: BTreeMap<MonomialKey, Vec<f64>>,
}

impl FormField {
    pub fn zero(grid: &Grid, p: usize, q: usize) -> Self {
        let n = grid.dim();
        let len = grid.len();
        let mut data = BTreeMap::new();
        if p <= n && q <= n {
            for key in enumerate_keys(n, p, q) {
                data.insert(key, vec![0.0; len]);
            }
        }
        FormField { grid: grid.clone(), p, q, data }
    }

    /// Sample a coefficient function per key: `f(key, x) -> value`.
    pub fn from_fn(grid: &Grid, p: usize, q: usize, mut f: impl FnMut(MonomialKey, &[f64]) -> f64) -> Self {
        let mut field = Self::zero(grid, p, q);
        let keys: Vec<MonomialKey> = field.keys().collect();
        for key in keys {
            for flat in 0..grid.len() {
                let x = grid.point(flat);
                let v = f(key, &x);
                field.data.get_mut(&key).expect("key present")[flat] = v;
            }
        }
        field
    }

    /// A `(0,0)`-field from a scalar function.
    pub fn scalar_from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, 0, 0, |_, x| f(x))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bidegree(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn degree(&self) -> usize {
        self.p + self.q
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn keys(&self) -> impl Iterator<Item = MonomialKey> + '_ {
        self.data.keys().copied()
    }

    pub fn num_keys(&self) -> usize {
        self.data.len()
    }

    pub fn values(&self, key: MonomialKey) -> &[f64] {
        &self.data[&key]
    }

    pub fn values_mut(&mut self, key: MonomialKey) -> &mut [f64] {
        self.data.get_mut(&key).expect("key of matching bidegree")
    }

    /// Coefficients at one grid point as an exact point form.
    pub fn point_form(&self, flat: usize) -> PointForm {
        let n = self.dim();
        let mut f = PointForm::zero(n, self.p.min(n + 1), self.q.min(n + 1)).expect("dims");
        if self.p > n || self.q > n {
            return f;
        }
        for (key, vals) in &self.data {
            let v = vals[flat];
            if v != 0.0 {
                f.add_coeff(*key, v);
            }
        }
        f
    }

    /// Overwrite the coefficients at one grid point.
    pub fn set_point_form(&mut self, flat: usize, form: &PointForm) {
        for (_, vals) in self.data.iter_mut() {
            vals[flat] = 0.0;
        }
        for (key, v) in form.iter() {
            self.data.get_mut(&key).expect("bidegree matches")[flat] = v;
        }
    }

    pub fn check_compatible(&self, other: &FormField) -> Result<()> {
        self.grid.compatible_with(&other.grid)?;
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

    pub fn scale(&self, s: f64) -> FormField {
        let mut out = self.clone();
        for vals in out.data.values_mut() {
            for v in vals.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn add(&self, other: &FormField) -> Result<FormField> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (key, vals) in out.data.iter_mut() {
            let ov = &other.data[key];
            for (v, o) in vals.iter_mut().zip(ov) {
                *v += o;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &FormField) -> Result<FormField> {
        self.add(&other.scale(-1.0))
    }

    /// `self += s * other` in place.
    pub fn axpy(&mut self, s: f64, other: &FormField) -> Result<()> {
        self.check_compatible(other)?;
        for (key, vals) in self.data.iter_mut() {
            let ov = &other.data[key];
            for (v, o) in vals.iter_mut().zip(ov) {
                *v += s * o;
            }
        }
        Ok(())
    }

    /// Largest absolute coefficient over all keys and points.
    pub fn sup_norm(&self) -> f64 {
        self.data
            .values()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Sup norm over points outside a boundary collar of the given width.
    pub fn sup_norm_interior(&self, collar: usize) -> f64 {
        let mut m = 0.0f64;
        for vals in self.data.values() {
            for (flat, v) in vals.iter().enumerate() {
                if !self.grid.in_collar(flat, collar) {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.data.values().all(|v| v.iter().all(|&x| x == 0.0))
    }

    /// Multiply every coefficient by a per-point factor.
    pub fn scale_pointwise(&self, factor: &[f64]) -> FormField {
        assert_eq!(factor.len(), self.grid.len());
        let mut out = self.clone();
        for vals in out.data.values_mut() {
            for (v, f) in vals.iter_mut().zip(factor) {
                *v *= f;
            }
        }
        out
    }

    /// Lift a `(p,0)`-field to the `(p,n)`-field `beta ^ dxi_N`. The monomial
    /// `dx_I ^ dxi_N` is already canonical, so coefficients carry over.
    pub fn wedge_full_xi(&self) -> Result<FormField> {
        let n = self.dim();
        if self.q != 0 {
            return Err(Error::BidegreeMismatch(self.p as u8, self.q as u8, self.p as u8, 0));
        }
        let full: u16 = if n == 16 { u16::MAX } else { (1u16 << n) - 1 };
        let mut out = FormField::zero(&self.grid, self.p, n);
        for (key, vals) in &self.data {
            out.data.insert(MonomialKey::new(key.x, full), vals.clone());
        }
        Ok(out)
    }

    /// Inverse of [`FormField::wedge_full_xi`].
    pub fn strip_full_xi(&self) -> Result<FormField> {
        let n = self.dim();
        if self.q != n {
            return Err(Error::BidegreeMismatch(self.p as u8, self.q as u8, self.p as u8, n as u8));
        }
        let mut out = FormField::zero(&self.grid, self.p, 0);
        for (key, vals) in &self.data {
            out.data.insert(MonomialKey::new(key.x, 0), vals.clone());
        }
        Ok(out)
    }
}
