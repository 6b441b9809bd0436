//! Seeded random objects shared by the integration tests.
#![allow(dead_code)]

use bellfilter::linalg::{c, CMat16, Mat4, C64};
use bellfilter::{Basis, ChoiMatrix, TwoPhotonState};
use nalgebra::{DMatrix, SMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ginibre<const R: usize, const C: usize>(rng: &mut ChaCha8Rng) -> SMatrix<C64, R, C> {
    SMatrix::from_fn(|_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(re, im)
    })
}

/// Random full-rank density matrix (Hilbert-Schmidt measure).
pub fn random_state(rng: &mut ChaCha8Rng, basis: Basis) -> TwoPhotonState {
    let g: Mat4 = ginibre(rng);
    let rho = g * g.adjoint();
    let tr = rho.trace().re;
    TwoPhotonState::new(rho.unscale(tr), basis).unwrap()
}

/// Random pure state.
pub fn random_pure(rng: &mut ChaCha8Rng) -> TwoPhotonState {
    let v: SMatrix<C64, 4, 1> = ginibre(rng);
    TwoPhotonState::pure(&v.normalize(), Basis::Computational)
}

/// Haar-ish random unitary via QR of a Ginibre matrix.
pub fn random_unitary<const N: usize>(rng: &mut ChaCha8Rng) -> SMatrix<C64, N, N> {
    let g: SMatrix<C64, N, N> = ginibre(rng);
    let qr = DMatrix::from_column_slice(N, N, g.as_slice()).qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix the phases of R's diagonal so the distribution is Haar.
    let fixed = DMatrix::from_fn(N, N, |i, j| q[(i, j)] * r[(j, j)] / c(r[(j, j)].norm(), 0.0));
    SMatrix::from_column_slice(fixed.as_slice())
}

/// Random completely positive, trace-nonincreasing map with Kraus rank `k`
/// (1 ≤ k ≤ 16), scaled so its largest throughput is `throughput`.
pub fn random_process(rng: &mut ChaCha8Rng, k: usize, throughput: f64) -> ChoiMatrix {
    let g: CMat16 = ginibre(rng);
    let mut g = g;
    for col in k..16 {
        g.column_mut(col).fill(c(0.0, 0.0));
    }
    let choi = ChoiMatrix::new(g * g.adjoint(), Basis::Computational);
    let t = choi.max_throughput();
    choi.scaled(throughput / t)
}
