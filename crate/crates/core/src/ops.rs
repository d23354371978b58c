//! Dense complex linear algebra on tensor-product Hilbert spaces.
//!
//! Factor order is global: qubit, ensemble mode 1, ensemble mode 2, cavity
//! (the cavity factor is optional). The qubit basis is ordered `(e, g)`, so
//! `S_z = diag(1/2, -1/2)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Basis index of the excited qubit state.
pub const E: usize = 0;
/// Basis index of the ground qubit state.
pub const G: usize = 1;

const HERMITIAN_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-9;
const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
const DENSITY_TRACE_TOL: f64 = 1e-9;
const DENSITY_EIG_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpsError {
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("invalid Hilbert space {0:?}: total dimension must be at least 2")]
    InvalidSpace(Vec<usize>),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("factor index {index} out of range for {factors} factors")]
    FactorIndex { index: usize, factors: usize },
    #[error("operator is not Hermitian (relative residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("spaces do not match: {left:?} vs {right:?}")]
    SpaceMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("partial trace needs at least one kept factor")]
    EmptyKeep,
    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("basis label {0:?} is outside the space")]
    BadLabel(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, OpsError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(OpsError::ZeroDimension);
        }
        if dims.iter().product::<usize>() < 2 {
            return Err(OpsError::InvalidSpace(dims));
        }
        Ok(Self { dims })
    }

    /// Qubit followed by the given oscillator factors.
    pub fn qubit_with(modes: &[usize]) -> Result<Self> {
        let mut dims = vec![2];
        dims.extend_from_slice(modes);
        Self::new(dims)
    }

    /// A one-factor space. Unlike [`HilbertSpace::new`] this accepts dimension 1.
    pub fn single(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(OpsError::ZeroDimension);
        }
        Ok(Self { dims: vec![dim] })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn factors(&self) -> usize {
        self.dims.len()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major flat index of a product-basis label.
    pub fn index_of(&self, label: &[usize]) -> Result<usize> {
        if label.len() != self.dims.len() || label.iter().zip(&self.dims).any(|(l, d)| l >= d) {
            return Err(OpsError::BadLabel(label.to_vec()));
        }
        Ok(label.iter().zip(&self.dims).fold(0, |acc, (l, d)| acc * d + l))
    }

    pub fn label_of(&self, mut index: usize) -> Vec<usize> {
        let mut label = vec![0; self.dims.len()];
        for (slot, d) in label.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        label
    }

    fn check_same(&self, other: &HilbertSpace) -> Result<()> {
        if self != other {
            return Err(OpsError::SpaceMismatch { left: self.dims.clone(), right: other.dims.clone() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let n = space.total();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(OpsError::DimensionMismatch { expected: n, found: matrix.nrows().max(matrix.ncols()) });
        }
        Ok(Self { space, matrix })
    }

    /// Operator on a single factor of dimension `matrix.nrows()`.
    pub fn single(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(OpsError::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let space = HilbertSpace::single(matrix.nrows())?;
        Self::new(space, matrix)
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let n = space.total();
        Self { space: space.clone(), matrix: CMatrix::identity(n, n) }
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let n = space.total();
        Self { space: space.clone(), matrix: CMatrix::zeros(n, n) }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self { space: self.space.clone(), matrix: self.matrix.adjoint() }
    }

    /// ‖H − H†‖_F / ‖H‖_F (zero for the zero operator).
    pub fn hermiticity_residual(&self) -> f64 {
        let norm = self.matrix.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (&self.matrix - self.matrix.adjoint()).norm() / norm
    }

    pub fn check_hermitian(&self) -> Result<()> {
        let residual = self.hermiticity_residual();
        if residual > HERMITIAN_TOL {
            return Err(OpsError::NotHermitian { residual });
        }
        Ok(())
    }

    pub fn scale(&self, factor: impl Into<C64>) -> Self {
        Self { space: self.space.clone(), matrix: &self.matrix * factor.into() }
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        self.space.check_same(&other.space)?;
        Ok(Self { space: self.space.clone(), matrix: &self.matrix + &other.matrix })
    }

    pub fn sub(&self, other: &Operator) -> Result<Self> {
        self.space.check_same(&other.space)?;
        Ok(Self { space: self.space.clone(), matrix: &self.matrix - &other.matrix })
    }

    pub fn compose(&self, other: &Operator) -> Result<Self> {
        self.space.check_same(&other.space)?;
        Ok(Self { space: self.space.clone(), matrix: &self.matrix * &other.matrix })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        self.space.check_same(&other.space)?;
        let m = &self.matrix * &other.matrix - &other.matrix * &self.matrix;
        Ok(Self { space: self.space.clone(), matrix: m })
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn apply(&self, state: &StateVector) -> Result<CVector> {
        self.space.check_same(&state.space)?;
        Ok(&self.matrix * &state.amplitudes)
    }
}

fn real_matrix(n: usize, f: impl Fn(usize, usize) -> f64) -> CMatrix {
    CMatrix::from_fn(n, n, |r, c| C64::new(f(r, c), 0.0))
}

/// Truncated ladder operator: entry `(n-1, n) = sqrt(n)`.
pub fn annihilation(dim: usize) -> Result<Operator> {
    if dim == 0 {
        return Err(OpsError::ZeroDimension);
    }
    Operator::single(real_matrix(dim, |r, c| if c == r + 1 { (c as f64).sqrt() } else { 0.0 }))
}

pub fn creation(dim: usize) -> Result<Operator> {
    Ok(annihilation(dim)?.adjoint())
}

pub fn number(dim: usize) -> Result<Operator> {
    if dim == 0 {
        return Err(OpsError::ZeroDimension);
    }
    Operator::single(real_matrix(dim, |r, c| if r == c { r as f64 } else { 0.0 }))
}

pub fn identity(dim: usize) -> Result<Operator> {
    if dim == 0 {
        return Err(OpsError::ZeroDimension);
    }
    Operator::single(CMatrix::identity(dim, dim))
}

fn qubit_op(entries: [[f64; 2]; 2]) -> Operator {
    Operator::single(real_matrix(2, |r, c| entries[r][c])).expect("2x2 operator")
}

/// |e⟩⟨g|
pub fn sigma_eg() -> Operator {
    qubit_op([[0.0, 1.0], [0.0, 0.0]])
}

/// |g⟩⟨e|
pub fn sigma_ge() -> Operator {
    qubit_op([[0.0, 0.0], [1.0, 0.0]])
}

/// (|e⟩⟨e| − |g⟩⟨g|)/2
pub fn s_z() -> Operator {
    qubit_op([[0.5, 0.0], [0.0, -0.5]])
}

pub fn sigma_x() -> Operator {
    qubit_op([[0.0, 1.0], [1.0, 0.0]])
}

pub fn proj_e() -> Operator {
    qubit_op([[1.0, 0.0], [0.0, 0.0]])
}

pub fn proj_g() -> Operator {
    qubit_op([[0.0, 0.0], [0.0, 1.0]])
}

/// Kronecker product; the result lives on the concatenation of the factor spaces.
pub fn tensor(factors: &[Operator]) -> Result<Operator> {
    let (first, rest) = factors.split_first().ok_or(OpsError::ZeroDimension)?;
    let mut dims = first.space.dims.clone();
    let mut matrix = first.matrix.clone();
    for op in rest {
        dims.extend_from_slice(&op.space.dims);
        matrix = matrix.kronecker(&op.matrix);
    }
    Operator::new(HilbertSpace::new(dims)?, matrix)
}

/// Places `op` on factor `factor_index` of `space`, identities elsewhere.
pub fn embed(op: &Operator, factor_index: usize, space: &HilbertSpace) -> Result<Operator> {
    let factors = space.factors();
    if factor_index >= factors {
        return Err(OpsError::FactorIndex { index: factor_index, factors });
    }
    let target = space.dims[factor_index];
    if op.dim() != target {
        return Err(OpsError::DimensionMismatch { expected: target, found: op.dim() });
    }
    let left: usize = space.dims[..factor_index].iter().product();
    let right: usize = space.dims[factor_index + 1..].iter().product();
    let matrix = CMatrix::identity(left, left)
        .kronecker(&op.matrix)
        .kronecker(&CMatrix::identity(right, right));
    Operator::new(space.clone(), matrix)
}

/// Hermitian eigendecomposition, eigenvalues ascending.
pub fn eigh(h: &Operator) -> Result<(Vec<f64>, CMatrix)> {
    h.check_hermitian()?;
    let sym = (&h.matrix + h.matrix.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(h.dim(), h.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// exp(−i H t) for time-independent Hermitian `h`.
pub fn propagator_exact(h: &Operator, t: f64) -> Result<Operator> {
    h.check_hermitian()?;
    let sym = (&h.matrix + h.matrix.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let phases = CVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| C64::from_polar(1.0, -e * t)),
    );
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (mut col, p) in scaled.column_iter_mut().zip(phases.iter()) {
        col *= *p;
    }
    Operator::new(h.space.clone(), scaled * v.adjoint())
}

/// ‖U†U − I‖_F
pub fn unitarity_residual(u: &Operator) -> f64 {
    let n = u.dim();
    (u.matrix.adjoint() * &u.matrix - CMatrix::identity(n, n)).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: HilbertSpace,
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(space: HilbertSpace, amplitudes: CVector) -> Result<Self> {
        let state = Self::from_raw(space, amplitudes)?;
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(OpsError::NotNormalized { norm });
        }
        Ok(state)
    }

    /// Skips the normalization check; integrators use this to expose drift.
    pub fn from_raw(space: HilbertSpace, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != space.total() {
            return Err(OpsError::DimensionMismatch { expected: space.total(), found: amplitudes.len() });
        }
        Ok(Self { space, amplitudes })
    }

    pub fn normalized(space: HilbertSpace, amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(OpsError::NotNormalized { norm });
        }
        Self::from_raw(space, amplitudes / C64::new(norm, 0.0))
    }

    pub fn basis(space: &HilbertSpace, label: &[usize]) -> Result<Self> {
        let idx = space.index_of(label)?;
        let mut amps = CVector::zeros(space.total());
        amps[idx] = C64::new(1.0, 0.0);
        Ok(Self { space: space.clone(), amplitudes: amps })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut CVector {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn amplitude(&self, label: &[usize]) -> Result<C64> {
        Ok(self.amplitudes[self.space.index_of(label)?])
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.space.check_same(&other.space)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn to_density(&self) -> DensityMatrix {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix { space: self.space.clone(), matrix: m }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let rho = Self::from_raw(space, matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    pub fn from_raw(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let n = space.total();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(OpsError::DimensionMismatch { expected: n, found: matrix.nrows() });
        }
        Ok(Self { space, matrix })
    }

    pub fn maximally_mixed(space: &HilbertSpace) -> Self {
        let n = space.total();
        let m = CMatrix::identity(n, n) / C64::new(n as f64, 0.0);
        Self { space: space.clone(), matrix: m }
    }

    pub fn validate(&self) -> Result<()> {
        let herm = (&self.matrix - self.matrix.adjoint()).norm();
        if herm > DENSITY_HERMITIAN_TOL {
            return Err(OpsError::InvalidDensity(format!("Hermiticity residual {herm:.3e}")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > DENSITY_TRACE_TOL {
            return Err(OpsError::InvalidDensity(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < -DENSITY_EIG_TOL {
            return Err(OpsError::InvalidDensity(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn population(&self, label: &[usize]) -> Result<f64> {
        let i = self.space.index_of(label)?;
        Ok(self.matrix[(i, i)].re)
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }
}

pub trait Expectation {
    fn expectation(&self, op: &Operator) -> Result<C64>;
}

impl Expectation for StateVector {
    fn expectation(&self, op: &Operator) -> Result<C64> {
        self.space.check_same(&op.space)?;
        Ok(self.amplitudes.dotc(&(&op.matrix * &self.amplitudes)))
    }
}

impl Expectation for DensityMatrix {
    fn expectation(&self, op: &Operator) -> Result<C64> {
        self.space.check_same(&op.space)?;
        Ok((&self.matrix * &op.matrix).trace())
    }
}

/// Convenience wrapper over [`Expectation`].
pub fn expectation<S: Expectation>(state: &S, op: &Operator) -> Result<C64> {
    state.expectation(op)
}

/// Reduced state on the factors in `keep` (returned in ascending factor order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(OpsError::EmptyKeep);
    }
    let dims = rho.space.dims();
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&k| k >= dims.len()) {
        return Err(OpsError::FactorIndex { index: bad, factors: dims.len() });
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !kept.contains(i)).collect();
    let kept_dims: Vec<usize> = kept.iter().map(|&i| dims[i]).collect();
    let kept_space = if kept_dims.iter().product::<usize>() >= 2 {
        HilbertSpace::new(kept_dims.clone())?
    } else {
        HilbertSpace::single(1)?
    };
    let traced_dims: Vec<usize> = traced.iter().map(|&i| dims[i]).collect();
    let traced_total: usize = traced_dims.iter().product();
    let n_kept = kept_space.total();

    let full_index = |kept_label: &[usize], traced_label: &[usize]| -> usize {
        let mut label = vec![0; dims.len()];
        for (slot, &f) in kept.iter().enumerate() {
            label[f] = kept_label[slot];
        }
        for (slot, &f) in traced.iter().enumerate() {
            label[f] = traced_label[slot];
        }
        label.iter().zip(dims).fold(0, |acc, (l, d)| acc * d + l)
    };
    let split = |mut idx: usize, ds: &[usize]| -> Vec<usize> {
        let mut out = vec![0; ds.len()];
        for (slot, d) in out.iter_mut().zip(ds).rev() {
            *slot = idx % d;
            idx /= d;
        }
        out
    };

    let mut out = CMatrix::zeros(n_kept, n_kept);
    for r in 0..n_kept {
        let rl = split(r, &kept_dims);
        for c in 0..n_kept {
            let cl = split(c, &kept_dims);
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..traced_total {
                let tl = split(t, &traced_dims);
                acc += rho.matrix[(full_index(&rl, &tl), full_index(&cl, &tl))];
            }
            out[(r, c)] = acc;
        }
    }
    DensityMatrix::from_raw(kept_space, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn identity_tensor_identity() {
        let op = tensor(&[identity(2).unwrap(), identity(3).unwrap()]).unwrap();
        assert_eq!(op.matrix(), &CMatrix::identity(6, 6));
    }

    #[test]
    fn s_z_tensor_identity_is_diagonal() {
        let op = tensor(&[s_z(), identity(2).unwrap()]).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| op.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![0.5, 0.5, -0.5, -0.5]);
        assert_abs_diff_eq!(op.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ladder_tensor_sparsity() {
        let op = tensor(&[annihilation(3).unwrap(), identity(2).unwrap()]).unwrap();
        let space = op.space().clone();
        for r in 0..6 {
            for col in 0..6 {
                if op.matrix()[(r, col)].norm() > 0.0 {
                    let (lr, lc) = (space.label_of(r), space.label_of(col));
                    assert_eq!(lr[0] + 1, lc[0]);
                    assert_eq!(lr[1], lc[1]);
                }
            }
        }
    }

    #[test]
    fn annihilation_entries_and_number() {
        let a = annihilation(3).unwrap();
        assert_eq!(a.matrix()[(0, 1)], c(1.0));
        assert_abs_diff_eq!(a.matrix()[(1, 2)].re, 2f64.sqrt(), epsilon = 1e-15);
        let vac = StateVector::basis(a.space(), &[0]).unwrap();
        assert_eq!(a.apply(&vac).unwrap().norm(), 0.0);
        let n = a.adjoint().compose(&a).unwrap();
        assert!((n.matrix() - number(3).unwrap().matrix()).norm() < 1e-14);
        assert_eq!(annihilation(0), Err(OpsError::ZeroDimension));
    }

    #[test]
    fn truncated_commutator_is_exact() {
        for dim in 1..7 {
            let a = annihilation(dim).unwrap();
            let comm = a.commutator(&a.adjoint()).unwrap();
            let mut expected = CMatrix::identity(dim, dim);
            expected[(dim - 1, dim - 1)] = c(1.0 - dim as f64);
            assert!((comm.matrix() - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn embed_errors_and_identity() {
        let space = HilbertSpace::qubit_with(&[3, 3]).unwrap();
        let id = embed(&identity(3).unwrap(), 2, &space).unwrap();
        assert_eq!(id, Operator::identity(&space));
        assert!(matches!(embed(&identity(3).unwrap(), 3, &space), Err(OpsError::FactorIndex { .. })));
        assert!(matches!(embed(&identity(2).unwrap(), 1, &space), Err(OpsError::DimensionMismatch { .. })));
    }

    #[test]
    fn embedded_disjoint_factors_commute() {
        let space = HilbertSpace::qubit_with(&[3, 3]).unwrap();
        let s = embed(&sigma_eg(), 0, &space).unwrap();
        let b = embed(&annihilation(3).unwrap(), 1, &space).unwrap();
        assert_eq!(s.commutator(&b).unwrap().norm(), 0.0);
        let n1 = embed(&number(3).unwrap(), 1, &space).unwrap();
        let rho = StateVector::basis(&space, &[G, 1, 0]).unwrap().to_density();
        assert_abs_diff_eq!(rho.expectation(&n1).unwrap().re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn propagator_of_zero_is_identity() {
        let space = HilbertSpace::qubit_with(&[3]).unwrap();
        let u = propagator_exact(&Operator::zeros(&space), 2.0).unwrap();
        assert!((u.matrix() - CMatrix::identity(6, 6)).norm() < 1e-14);
    }

    #[test]
    fn propagator_rejects_non_hermitian() {
        let space = HilbertSpace::qubit_with(&[2]).unwrap();
        let a = embed(&annihilation(2).unwrap(), 1, &space).unwrap();
        assert!(matches!(propagator_exact(&a, 1.0), Err(OpsError::NotHermitian { .. })));
    }

    #[test]
    fn rabi_flip_matches_sine_squared() {
        // H = Ω σ_x on the qubit; P_e(t) = sin²(Ω t) from |g⟩.
        let omega = 0.7;
        let h = sigma_x().scale(omega);
        let g = StateVector::basis(h.space(), &[G]).unwrap();
        for &t in &[0.1, 0.5, 1.3, 2.0] {
            let u = propagator_exact(&h, t).unwrap();
            let psi = u.apply(&g).unwrap();
            assert_abs_diff_eq!(psi[E].norm_sqr(), (omega * t).sin().powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn expectation_cases() {
        let space = HilbertSpace::qubit_with(&[3, 3]).unwrap();
        let n1 = embed(&number(3).unwrap(), 1, &space).unwrap();
        let ground = StateVector::basis(&space, &[G, 0, 0]).unwrap();
        assert_eq!(ground.expectation(&n1).unwrap(), c(0.0));
        let mixed = DensityMatrix::maximally_mixed(&space);
        let v = mixed.expectation(&n1).unwrap();
        assert_abs_diff_eq!(v.re, n1.trace().re / 18.0, epsilon = 1e-14);
        let other = HilbertSpace::qubit_with(&[2]).unwrap();
        assert!(ground.expectation(&Operator::identity(&other)).is_err());
    }

    #[test]
    fn partial_trace_cases() {
        // product state
        let a = StateVector::normalized(
            HilbertSpace::single(2).unwrap(),
            CVector::from_vec(vec![c(0.6), C64::new(0.0, 0.8)]),
        )
        .unwrap();
        let b = StateVector::normalized(
            HilbertSpace::single(3).unwrap(),
            CVector::from_vec(vec![c(1.0), c(1.0), c(-1.0)]),
        )
        .unwrap();
        let space = HilbertSpace::new(vec![2, 3]).unwrap();
        let prod = StateVector::from_raw(space.clone(), a.amplitudes().kronecker(b.amplitudes())).unwrap();
        let red = partial_trace(&prod.to_density(), &[0]).unwrap();
        assert!((red.matrix() - a.to_density().matrix()).norm() < 1e-14);
        let red_b = partial_trace(&prod.to_density(), &[1]).unwrap();
        assert!((red_b.matrix() - b.to_density().matrix()).norm() < 1e-14);

        // Bell pair
        let bell_space = HilbertSpace::new(vec![2, 2]).unwrap();
        let s = 0.5f64.sqrt();
        let bell = StateVector::new(bell_space, CVector::from_vec(vec![c(s), c(0.0), c(0.0), c(s)])).unwrap();
        let half = partial_trace(&bell.to_density(), &[1]).unwrap();
        assert!((half.matrix() - CMatrix::identity(2, 2) * c(0.5)).norm() < 1e-14);

        assert_eq!(partial_trace(&bell.to_density(), &[]), Err(OpsError::EmptyKeep));
    }

    #[test]
    fn density_validation() {
        let space = HilbertSpace::single(2).unwrap();
        let bad = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.2), c(-0.2)]));
        assert!(DensityMatrix::new(space.clone(), bad).is_err());
        let ok = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.3), c(0.7)]));
        assert!(DensityMatrix::new(space, ok).is_ok());
    }
}
