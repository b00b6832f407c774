//! Finite-dimensional Hilbert-space kernel.
//!
//! States are dense complex vectors; observables carry their spectral
//! decomposition so that the back-reaction unitary `exp(i A q)` is applied
//! exactly as `sum_a exp(i a q) Pi_a`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Hermiticity tolerance on `max |M - M^dagger|`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Relative (to the spectral range) tolerance for merging eigenvalues.
pub const DEFAULT_GROUP_TOL: f64 = 1e-9;
/// Default weak-value pole threshold on `|<psi2|psi1>|`.
pub const DEFAULT_POLE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    /// Normalizes `amps` to unit norm.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidArgument(
                "state vector must have dim > 0".into(),
            ));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cannot normalize vector of norm {norm}"
            )));
        }
        Ok(Self {
            amps: amps.into_iter().map(|a| a / norm).collect(),
        })
    }

    /// Wraps amplitudes without touching the norm (e.g. results of `evolve`).
    pub fn unnormalized(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Computational basis vector `|k>`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[k] = C64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub(crate) fn to_dvector(&self) -> DVector<C64> {
        DVector::from_column_slice(&self.amps)
    }

    pub(crate) fn from_dvector(v: &DVector<C64>) -> Self {
        Self {
            amps: v.iter().copied().collect(),
        }
    }
}

/// One eigenspace of an observable.
#[derive(Clone, Debug)]
pub struct Eigenspace {
    pub value: f64,
    pub projector: CMatrix,
    /// Orthonormal basis of the eigenspace, one column per vector.
    pub vectors: CMatrix,
}

impl Eigenspace {
    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Hermitian operator with cached spectral decomposition.
#[derive(Clone, Debug)]
pub struct Observable {
    matrix: CMatrix,
    spectrum: Vec<Eigenspace>,
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn max_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Diagonalizes a Hermitian matrix, merging eigenvalues closer than
/// `group_tol * (spectral range)` into a single degenerate eigenspace.
/// Eigenvalues are returned in ascending order.
pub fn spectral_decompose(matrix: &CMatrix, group_tol: f64) -> Result<Observable> {
    if matrix.nrows() == 0 || !matrix.is_square() {
        return Err(Error::InvalidArgument(format!(
            "observable must be a non-empty square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if !(group_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "group_tol must be positive, got {group_tol}"
        )));
    }
    let asym = max_asymmetry(matrix);
    if !(asym < HERMITIAN_TOL) {
        return Err(Error::NonHermitian {
            max_asymmetry: asym,
        });
    }
    let n = matrix.nrows();
    let sym = (matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let range = values[n - 1] - values[0];
    let merge = group_tol * range;

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (pos, &k) in order.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if values[pos] - values[pos - 1] <= merge => g.push(k),
            _ => groups.push(vec![k]),
        }
    }

    let spectrum = groups
        .into_iter()
        .map(|g| {
            let value = g.iter().map(|&k| eig.eigenvalues[k]).sum::<f64>() / g.len() as f64;
            let vectors = CMatrix::from_fn(n, g.len(), |r, c| eig.eigenvectors[(r, g[c])]);
            let projector = &vectors * vectors.adjoint();
            Eigenspace {
                value,
                projector,
                vectors,
            }
        })
        .collect();

    Ok(Observable {
        matrix: matrix.clone(),
        spectrum,
    })
}

impl Observable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        spectral_decompose(&matrix, DEFAULT_GROUP_TOL)
    }

    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::new(CMatrix::from_fn(dim, dim, |r, c| {
            C64::new(entries[r * dim + c], 0.0)
        }))
    }

    /// Diagonal observable with the given eigenvalues on the computational basis.
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::new(CMatrix::from_fn(n, n, |r, c| {
            if r == c {
                C64::new(values[r], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    pub fn pauli_x() -> Self {
        Self::from_real(2, &[0.0, 1.0, 1.0, 0.0]).expect("pauli x")
    }

    pub fn pauli_y() -> Self {
        let i = C64::new(0.0, 1.0);
        let z = C64::new(0.0, 0.0);
        Self::new(CMatrix::from_row_slice(2, 2, &[z, -i, i, z])).expect("pauli y")
    }

    pub fn pauli_z() -> Self {
        Self::diagonal(&[1.0, -1.0]).expect("pauli z")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> &[Eigenspace] {
        &self.spectrum
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spectrum.iter().map(|e| e.value).collect()
    }

    pub fn spectral_range(&self) -> f64 {
        let first = self.spectrum.first().map(|e| e.value).unwrap_or(0.0);
        let last = self.spectrum.last().map(|e| e.value).unwrap_or(0.0);
        last - first
    }

    /// Smallest gap between distinct eigenvalues (infinite for a single eigenspace).
    pub fn min_gap(&self) -> f64 {
        self.spectrum
            .windows(2)
            .map(|w| w[1].value - w[0].value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), psi.dim())?;
        Ok(StateVector::from_dvector(
            &(&self.matrix * psi.to_dvector()),
        ))
    }

    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        Ok(psi.inner(&self.apply(psi)?)?.re)
    }

    /// `<psi|(A - <A>)^2|psi>`.
    pub fn variance(&self, psi: &StateVector) -> Result<f64> {
        let mean = self.expectation(psi)?;
        let v = self.apply(psi)?;
        Ok(v.norm().powi(2) - mean * mean)
    }

    /// `alpha A + beta B`, re-decomposed.
    pub fn linear_combination(
        alpha: f64,
        a: &Observable,
        beta: f64,
        b: &Observable,
    ) -> Result<Self> {
        check_dim(a.dim(), b.dim())?;
        Self::new(a.matrix.map(|x| x * alpha) + b.matrix.map(|x| x * beta))
    }

    /// `<psi2|Pi_a|psi1>` for every eigenspace, paired with its eigenvalue.
    pub fn spectral_weights(
        &self,
        psi2: &StateVector,
        psi1: &StateVector,
    ) -> Result<Vec<(f64, C64)>> {
        check_dim(self.dim(), psi1.dim())?;
        check_dim(self.dim(), psi2.dim())?;
        let v1 = psi1.to_dvector();
        let v2 = psi2.to_dvector();
        Ok(self
            .spectrum
            .iter()
            .map(|e| {
                let c1 = e.vectors.adjoint() * &v1;
                let c2 = e.vectors.adjoint() * &v2;
                let w = c2.iter().zip(c1.iter()).map(|(b, a)| b.conj() * a).sum();
                (e.value, w)
            })
            .collect())
    }
}

/// `exp(i A q)|psi> = sum_a exp(i a q) Pi_a |psi>`.
pub fn evolve(obs: &Observable, q: f64, psi: &StateVector) -> Result<StateVector> {
    check_dim(obs.dim(), psi.dim())?;
    let v = psi.to_dvector();
    let mut out = DVector::<C64>::zeros(obs.dim());
    for e in &obs.spectrum {
        let coeffs = e.vectors.adjoint() * &v;
        let phase = C64::from_polar(1.0, e.value * q);
        out += &e.vectors * coeffs * phase;
    }
    Ok(StateVector::from_dvector(&out))
}

/// `<psi2|exp(i A q)|psi1>`.
pub fn transition_amplitude(
    psi2: &StateVector,
    obs: &Observable,
    q: f64,
    psi1: &StateVector,
) -> Result<C64> {
    check_dim(obs.dim(), psi2.dim())?;
    psi2.inner(&evolve(obs, q, psi1)?)
}

/// Complex weak value `<psi2|A|psi1> / <psi2|psi1>` with the default pole tolerance.
pub fn weak_value(psi2: &StateVector, obs: &Observable, psi1: &StateVector) -> Result<C64> {
    weak_value_with_tol(psi2, obs, psi1, DEFAULT_POLE_TOL)
}

pub fn weak_value_with_tol(
    psi2: &StateVector,
    obs: &Observable,
    psi1: &StateVector,
    pole_tol: f64,
) -> Result<C64> {
    let overlap = psi2.inner(psi1)?;
    if !(overlap.norm() > pole_tol) {
        return Err(Error::Pole {
            overlap: overlap.norm(),
        });
    }
    Ok(psi2.inner(&obs.apply(psi1)?)? / overlap)
}

/// Complete orthonormal post-selection basis `{|b>}`.
#[derive(Clone, Debug)]
pub struct PostSelectionBasis {
    vectors: Vec<StateVector>,
}

impl PostSelectionBasis {
    pub const ORTHONORMAL_TOL: f64 = 1e-10;

    pub fn new(vectors: Vec<StateVector>) -> Result<Self> {
        let dim = vectors.first().map(|v| v.dim()).unwrap_or(0);
        if dim == 0 || vectors.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "basis needs exactly dim vectors, got {} of dim {dim}",
                vectors.len()
            )));
        }
        for (i, a) in vectors.iter().enumerate() {
            for (j, b) in vectors.iter().enumerate() {
                let g = a.inner(b)?;
                let target = if i == j { 1.0 } else { 0.0 };
                if (g - C64::new(target, 0.0)).norm() > Self::ORTHONORMAL_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "basis is not orthonormal: <b{i}|b{j}> = {g}"
                    )));
                }
            }
        }
        Ok(Self { vectors })
    }

    pub fn computational(dim: usize) -> Self {
        Self {
            vectors: (0..dim).map(|k| StateVector::basis(dim, k)).collect(),
        }
    }

    /// Eigenbasis of a non-degenerate observable.
    pub fn eigenbasis(obs: &Observable) -> Result<Self> {
        if obs.spectrum().iter().any(|e| e.rank() != 1) {
            return Err(Error::InvalidArgument(
                "eigenbasis requires a non-degenerate observable".into(),
            ));
        }
        Self::new(
            obs.spectrum()
                .iter()
                .map(|e| StateVector::from_dvector(&e.vectors.column(0).into_owned()))
                .collect(),
        )
    }

    /// Columns of a unitary matrix.
    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        Self::new(
            (0..u.ncols())
                .map(|c| StateVector::from_dvector(&u.column(c).into_owned()))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[StateVector] {
        &self.vectors
    }
}

/// Outcomes with `|<b|psi1>|` below this are summed analytically in the sum rule.
pub const SUM_RULE_OVERLAP_CUTOFF: f64 = 1e-8;

/// `sum_b |<b|psi1>|^2 Re A_w(b) - <psi1|A|psi1>`.
pub fn sum_rule_residual(
    psi1: &StateVector,
    obs: &Observable,
    basis: &PostSelectionBasis,
) -> Result<f64> {
    check_dim(obs.dim(), basis.dim())?;
    let a_psi = obs.apply(psi1)?;
    let mut total = 0.0;
    for b in basis.vectors() {
        let overlap = b.inner(psi1)?;
        if overlap.norm() < SUM_RULE_OVERLAP_CUTOFF {
            total += (b.inner(&a_psi)? * overlap.conj()).re;
        } else {
            let aw = weak_value(b, obs, psi1)?;
            total += overlap.norm_sqr() * aw.re;
        }
    }
    Ok(total - obs.expectation(psi1)?)
}
