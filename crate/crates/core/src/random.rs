//! Seeded generators for random finite-dimensional scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::hilbert::{CMatrix, Observable, PostSelectionBasis, StateVector, C64};

pub type ScenarioRng = ChaCha8Rng;

pub fn rng(seed: u64) -> ScenarioRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_c64(rng: &mut ScenarioRng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-distributed pure state.
pub fn state(rng: &mut ScenarioRng, dim: usize) -> StateVector {
    loop {
        let amps: Vec<C64> = (0..dim).map(|_| gaussian_c64(rng)).collect();
        if let Ok(s) = StateVector::new(amps) {
            return s;
        }
    }
}

/// GUE-like Hermitian matrix `(X + X^dagger)/2` with unit-variance entries.
pub fn hermitian_matrix(rng: &mut ScenarioRng, dim: usize) -> CMatrix {
    let x = CMatrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
    (&x + x.adjoint()) * C64::new(0.5, 0.0)
}

/// Haar unitary from the QR decomposition of a Ginibre matrix.
pub fn unitary(rng: &mut ScenarioRng, dim: usize) -> CMatrix {
    let x = CMatrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
    let qr = x.qr();
    let (q, r) = (qr.q(), qr.r());
    // fix column phases so the distribution is Haar
    let mut q = q;
    for c in 0..dim {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for row in 0..dim {
            q[(row, c)] *= phase;
        }
    }
    q
}

pub fn basis(rng: &mut ScenarioRng, dim: usize) -> PostSelectionBasis {
    PostSelectionBasis::from_unitary(&unitary(rng, dim)).expect("QR columns are orthonormal")
}

/// Observable with prescribed eigenvalues in a random eigenbasis.
pub fn observable_with_spectrum(rng: &mut ScenarioRng, values: &[f64]) -> Observable {
    let n = values.len();
    let u = unitary(rng, n);
    let d = CMatrix::from_fn(n, n, |r, c| {
        if r == c {
            C64::new(values[r], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let m = &u * d * u.adjoint();
    let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    Observable::new(m).expect("symmetrized matrix is Hermitian")
}

/// A random pre-selection, observable and complete post-selection.
#[derive(Clone, Debug)]
pub struct RandomScenario {
    pub psi1: StateVector,
    pub observable: Observable,
    pub basis: PostSelectionBasis,
}

pub fn scenario(rng: &mut ScenarioRng, dim: usize) -> RandomScenario {
    let psi1 = state(rng, dim);
    let observable =
        Observable::new(hermitian_matrix(rng, dim)).expect("symmetrized matrix is Hermitian");
    let basis = basis(rng, dim);
    RandomScenario {
        psi1,
        observable,
        basis,
    }
}

/// Random dimension in `2..=max_dim`.
pub fn dim(rng: &mut ScenarioRng, max_dim: usize) -> usize {
    rng.random_range(2..=max_dim)
}

pub fn uniform(rng: &mut ScenarioRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}
