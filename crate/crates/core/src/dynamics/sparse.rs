//! Minimal coordinate-list products for the integrator hot loops.

use crate::ops::{CMatrix, CVector, C64};

#[derive(Debug, Clone)]
pub(crate) struct Sparse {
    n: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl Sparse {
    pub fn from_dense(m: &CMatrix) -> Self {
        let n = m.nrows();
        let mut entries = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = m[(r, c)];
                if v != C64::new(0.0, 0.0) {
                    entries.push((r, c, v));
                }
            }
        }
        Self { n, entries }
    }

    pub fn adjoint(&self) -> Self {
        let mut entries: Vec<_> = self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        Self { n: self.n, entries }
    }

    /// Largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        let mut rows = vec![0.0; self.n];
        for &(r, _, v) in &self.entries {
            rows[r] += v.norm();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// out += scale · S x
    pub fn apply_add(&self, scale: C64, x: &CVector, out: &mut CVector) {
        for &(r, c, v) in &self.entries {
            out[r] += scale * v * x[c];
        }
    }

    /// out += scale · S ρ
    pub fn left_mul_add(&self, scale: C64, rho: &CMatrix, out: &mut CMatrix) {
        let n = self.n;
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        for &(r, c, v) in &self.entries {
            let w = scale * v;
            for j in 0..n {
                dst[r + j * n] += w * src[c + j * n];
            }
        }
    }

    /// out += scale · ρ S
    pub fn right_mul_add(&self, scale: C64, rho: &CMatrix, out: &mut CMatrix) {
        let n = self.n;
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        for &(r, c, v) in &self.entries {
            let w = scale * v;
            let (s, d) = (&src[r * n..(r + 1) * n], &mut dst[c * n..(c + 1) * n]);
            for (o, x) in d.iter_mut().zip(s) {
                *o += w * x;
            }
        }
    }
}
