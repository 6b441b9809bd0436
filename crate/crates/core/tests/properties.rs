mod common;

use std::f64::consts::PI;

use bellfilter::hom_sim::{expected_rates, FilterModel};
use bellfilter::linalg::{Mat4, C64};
use nalgebra::SMatrix;
use bellfilter::metrics::{concurrence, fidelity, linear_entropy};
use bellfilter::polarization::{bell_change_matrix, devectorize};
use bellfilter::superop::{choi_to_kraus, choi_to_matrix, compose, conjugate_by_phase_shifter, matrix_to_choi, wrap_phase, SuperMatrix};
use bellfilter::tomography::{linear_invert_process, linear_invert_state, mle_state, process_nll, state_objective, Likelihood, MleOptions};
use bellfilter::{Basis, BellState, TomographicSet, TwoPhotonState};
use common::*;
use proptest::prelude::*;

fn model_strategy() -> impl Strategy<Value = FilterModel> {
    (-PI..PI, 0.0..=1.0f64, 0.05..=1.0f64, -0.5..=0.5f64).prop_map(|(phi, visibility, eta, splitting_imbalance)| FilterModel {
        phi,
        visibility,
        eta,
        splitting_imbalance,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vectorize_round_trip(seed in any::<u64>(), bell in any::<bool>()) {
        let basis = if bell { Basis::Bell } else { Basis::Computational };
        let s = random_state(&mut rng(seed), basis);
        let back = devectorize(&s.vectorize());
        prop_assert!((back.matrix() - s.matrix()).camax() < 1e-12);
    }

    #[test]
    fn basis_change_round_trip(seed in any::<u64>()) {
        let s = random_state(&mut rng(seed), Basis::Computational);
        let back = s.to_bell_basis().to_computational_basis();
        prop_assert!((back.matrix() - s.matrix()).camax() < 1e-12);
        let b = bell_change_matrix();
        prop_assert!((b.adjoint() * b - Mat4::identity()).camax() < 1e-12);
    }

    #[test]
    fn state_invariants(seed in any::<u64>()) {
        let s = random_state(&mut rng(seed), Basis::Computational);
        prop_assert!((s.trace() - 1.0).abs() < 1e-12);
        prop_assert!(s.min_eigenvalue() > -1e-12);
        prop_assert!((s.matrix() - s.matrix().adjoint()).camax() < 1e-14);
    }

    #[test]
    fn matrix_choi_kraus_agree(seed in any::<u64>(), rank in 1usize..=16) {
        let mut r = rng(seed);
        let choi = random_process(&mut r, rank, 0.9);
        let m = choi_to_matrix(&choi);
        let kraus = choi_to_kraus(&choi).unwrap();
        prop_assert!(kraus.len() <= rank);
        let s = random_state(&mut r, Basis::Computational);
        let via_m = m.apply(&s).unwrap();
        let via_k = kraus.apply(&s).unwrap();
        let via_c = choi.apply(&s).unwrap();
        prop_assert!((via_m.matrix() - via_k.matrix()).camax() < 1e-8);
        prop_assert!((via_m.matrix() - via_c.matrix()).camax() < 1e-8);
        let back = matrix_to_choi(&m);
        prop_assert!((back.matrix() - choi.matrix()).camax() < 1e-10);
    }

    #[test]
    fn superoperator_basis_change_round_trip(seed in any::<u64>()) {
        let choi = random_process(&mut rng(seed), 4, 1.0);
        let m = choi_to_matrix(&choi);
        let back = m.in_basis(Basis::Bell).in_basis(Basis::Computational);
        prop_assert!((back.matrix() - m.matrix()).amax() < 1e-12);
        let s = random_state(&mut rng(seed ^ 1), Basis::Computational);
        let a = m.apply(&s).unwrap();
        let b = m.in_basis(Basis::Bell).apply(&s.to_bell_basis()).unwrap().to_computational_basis();
        prop_assert!((a.matrix() - b.matrix()).camax() < 1e-12);
    }

    #[test]
    fn composition_matches_sequential_application(seed in any::<u64>()) {
        let mut r = rng(seed);
        let e1 = choi_to_matrix(&random_process(&mut r, 3, 1.0));
        let e2 = choi_to_matrix(&random_process(&mut r, 2, 1.0));
        let s = random_state(&mut r, Basis::Computational);
        let both = compose(&e2, &e1).unwrap().apply(&s).unwrap();
        let seq = e2.apply(&e1.apply(&s).unwrap()).unwrap();
        prop_assert!((both.matrix() - seq.matrix()).camax() < 1e-12);
    }

    #[test]
    fn unitary_process_is_trace_preserving(seed in any::<u64>()) {
        let u: Mat4 = random_unitary(&mut rng(seed));
        let e = SuperMatrix::unitary(&u, Basis::Computational);
        let choi = e.to_choi();
        prop_assert!((choi.partial_trace_output() - Mat4::identity()).camax() < 1e-10);
        prop_assert_eq!(choi.to_kraus().unwrap().len(), 1);
    }

    #[test]
    fn model_is_cp_and_trace_nonincreasing(model in model_strategy()) {
        let choi = model.superoperator().unwrap().to_choi();
        prop_assert!(choi.is_completely_positive());
        prop_assert!(choi.is_trace_nonincreasing());
    }

    #[test]
    fn rates_linear_in_rate_scale(model in model_strategy(), scale in 1.0..1e6f64) {
        let e = model.superoperator().unwrap();
        let set = TomographicSet::canonical();
        let one = expected_rates(&e, &set, 1.0).unwrap();
        let many = expected_rates(&e, &set, scale).unwrap();
        for (a, b) in one.rates.iter().zip(&many.rates) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x * scale - y).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn rates_permutation_equivariant(model in model_strategy(), shift in 1usize..16) {
        let e = model.superoperator().unwrap();
        let set = TomographicSet::canonical();
        let mut labels = set.labels().to_vec();
        labels.rotate_left(shift);
        let permuted = TomographicSet::from_labels(labels).unwrap();
        let a = expected_rates(&e, &set, 10.0).unwrap();
        let b = expected_rates(&e, &permuted, 10.0).unwrap();
        for (i, li) in set.labels().iter().enumerate() {
            let pi = permuted.index_of(*li).unwrap();
            for (j, lj) in set.labels().iter().enumerate() {
                let pj = permuted.index_of(*lj).unwrap();
                prop_assert!((a.rates[i][j] - b.rates[pi][pj]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn blocked_rows_scale_with_distinguishability(model in model_strategy()) {
        // HH and VV are orthogonal to every twisted singlet, so only the
        // dephasing branch (weight 1 − V) lets them through.
        let e = model.superoperator().unwrap();
        let set = TomographicSet::canonical();
        let rates = expected_rates(&e, &set, 1.0).unwrap();
        let full = expected_rates(&model.with_visibility(0.0).superoperator().unwrap(), &set, 1.0).unwrap();
        for label in ["HH", "VV"] {
            let i = set.index_of(label.parse().unwrap()).unwrap();
            let sum: f64 = rates.rates[i].iter().sum();
            let reference: f64 = full.rates[i].iter().sum();
            prop_assert!((sum - (1.0 - model.visibility) * reference).abs() < 1e-12);
        }
    }

    #[test]
    fn local_unitaries_preserve_entanglement_and_purity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = random_state(&mut r, Basis::Computational);
        let ua: SMatrix<C64, 2, 2> = random_unitary(&mut r);
        let ub: SMatrix<C64, 2, 2> = random_unitary(&mut r);
        let u: Mat4 = ua.kronecker(&ub);
        let t = TwoPhotonState::new(u * s.matrix() * u.adjoint(), Basis::Computational).unwrap();
        prop_assert!((concurrence(&s).unwrap() - concurrence(&t).unwrap()).abs() < 1e-9);
        prop_assert!((linear_entropy(&s).unwrap() - linear_entropy(&t).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn fidelity_symmetric_and_bounded(seed in any::<u64>(), pure in any::<bool>()) {
        let mut r = rng(seed);
        let a = if pure { random_pure(&mut r) } else { random_state(&mut r, Basis::Computational) };
        let b = random_state(&mut r, Basis::Bell);
        let fab = fidelity(&a, &b).unwrap();
        let fba = fidelity(&b, &a).unwrap();
        prop_assert!((fab - fba).abs() < 1e-10);
        prop_assert!((0.0..=1.0).contains(&fab));
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_inversion_reproduces_exact_state(seed in any::<u64>(), scale in 1.0..1e6f64) {
        let s = random_state(&mut rng(seed), Basis::Computational).scaled(0.7);
        let set = TomographicSet::canonical();
        let counts: [f64; 16] = std::array::from_fn(|j| scale * s.expectation_ket(&set.kets()[j]));
        let est = linear_invert_state(&counts, scale, &set).unwrap();
        prop_assert!((est.state.matrix() - s.matrix()).camax() < 1e-9);
        prop_assert!(est.physical);
    }

    #[test]
    fn linear_inversion_reproduces_exact_process(seed in any::<u64>()) {
        let m = choi_to_matrix(&random_process(&mut rng(seed), 5, 0.8));
        let set = TomographicSet::canonical();
        let rates = expected_rates(&m, &set, 1e3).unwrap();
        let est = linear_invert_process(set.labels(), &rates.rates, 1e3, &set).unwrap();
        let est = est.in_basis(Basis::Computational);
        prop_assert!((est.matrix() - m.matrix()).amax() < 1e-9);
    }

    #[test]
    fn phase_shifter_moves_the_diagnosed_phase(phi in -3.0..3.0f64, shift in -3.0..3.0f64) {
        let model = FilterModel { phi, ..FilterModel::ideal() };
        let e = model.superoperator().unwrap();
        let shifted = conjugate_by_phase_shifter(&e, shift);
        let phase = shifted.to_choi().to_kraus().unwrap().leading_projector_phase().unwrap();
        prop_assert!(wrap_phase(phase - (phi + shift)).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn state_mle_is_psd_and_beats_truth(seed in any::<u64>()) {
        let mut r = rng(seed);
        let truth = random_state(&mut r, Basis::Computational).scaled(0.5);
        let set = TomographicSet::canonical();
        let means: [f64; 16] = std::array::from_fn(|j| 500.0 * truth.expectation_ket(&set.kets()[j]));
        let record = bellfilter::hom_sim::sample_counts(
            &bellfilter::hom_sim::RateTable {
                inputs: vec!["HH".parse().unwrap()],
                analyzers: set.clone(),
                rate_scale: 500.0,
                rates: vec![means],
            },
            seed,
        );
        let counts = record.row_f64("HH".parse().unwrap()).unwrap();
        let est = mle_state(&counts, 500.0, &set, &MleOptions::default()).unwrap();
        prop_assert!(est.converged);
        prop_assert!(est.rho_hat.min_eigenvalue() >= -1e-12);
        let objective = state_objective(&counts, 500.0, &set, Likelihood::Poisson);
        let at_truth = objective.value_at_gram(truth.matrix().transpose().as_slice());
        prop_assert!(at_truth >= est.neg_log_likelihood - 1e-6 * at_truth.abs());
    }

    #[test]
    fn process_nll_at_truth_is_not_below_estimate(seed in 0u64..1000) {
        let mut r = rng(seed);
        let truth = random_process(&mut r, 2, 0.9);
        let m = choi_to_matrix(&truth);
        let set = TomographicSet::canonical();
        let rates = expected_rates(&m, &set, 2000.0).unwrap();
        let record = bellfilter::hom_sim::sample_counts(&rates, seed);
        let est = bellfilter::tomography::mle_process(&record, &MleOptions::default()).unwrap();
        prop_assert!(est.converged);
        prop_assert!(est.choi_hat.min_eigenvalue() >= -1e-8);
        let grid: Vec<[f64; 16]> = record.counts.iter().map(|row| row.map(|n| n as f64)).collect();
        let at_truth = process_nll(&truth, set.labels(), &grid, 2000.0, &set, Likelihood::Poisson).unwrap();
        let at_est = process_nll(&est.choi_hat, set.labels(), &grid, 2000.0, &set, Likelihood::Poisson).unwrap();
        prop_assert!(at_truth >= at_est - 1e-6 * at_truth.abs());
        // The raw result may have been rescaled; the unscaled optimum is the
        // reported NLL and cannot be worse than the rescaled one.
        prop_assert!(est.neg_log_likelihood <= at_est + 1e-6 * at_est.abs());
    }
}

#[test]
fn werner_concurrence_closed_form() {
    let singlet = BellState::PsiMinus.state();
    let mixed = TwoPhotonState::maximally_mixed(Basis::Computational);
    for k in 0..=50 {
        let p = k as f64 / 50.0;
        let w = TwoPhotonState::new(singlet.matrix().scale(p) + mixed.matrix().scale(1.0 - p), Basis::Computational).unwrap();
        let expected = ((3.0 * p - 1.0) / 2.0).max(0.0);
        assert!((concurrence(&w).unwrap() - expected).abs() < 1e-9, "p = {p}");
    }
}
