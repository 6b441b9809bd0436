//! Scalar diagnostics for two-photon states and filter processes.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, eigvalsh, psd_sqrt, sqrt_spectrum, trace, Mat4, C64};
use crate::polarization::{Basis, BellState, TwoPhotonState};
use crate::superop::{ChoiMatrix, SuperMatrix};
use crate::tomography::normalize_superoperator;

/// Reported polarization ratio when the non-singlet intensity vanishes.
pub const POLARIZATION_RATIO_CAP: f64 = 1e6;

/// Wootters concurrence of a normalized two-qubit state.
pub fn concurrence(s: &TwoPhotonState) -> Result<f64> {
    s.require_normalized()?;
    let rho = *s.to_computational_basis().matrix();
    // σ_y ⊗ σ_y in (HH, HV, VH, VV) ordering
    let mut yy = Mat4::zeros();
    yy[(0, 3)] = c(-1.0, 0.0);
    yy[(1, 2)] = c(1.0, 0.0);
    yy[(2, 1)] = c(1.0, 0.0);
    yy[(3, 0)] = c(-1.0, 0.0);
    let tilde = yy * rho.map(|z| z.conj()) * yy;
    // ρ·ρ̃ shares its spectrum with the Hermitian √ρ ρ̃ √ρ
    let root = psd_sqrt(&rho);
    let r = root * tilde * root;
    let mut lambdas = sqrt_spectrum(&eigvalsh(&r));
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).clamp(0.0, 1.0))
}

/// `S_L = (4/3)(1 − Tr ρ²)`: 0 for pure states, 1 for the completely mixed
/// two-qubit state.
pub fn linear_entropy(s: &TwoPhotonState) -> Result<f64> {
    s.require_normalized()?;
    let purity = trace(&(s.matrix() * s.matrix())).re;
    Ok((4.0 / 3.0 * (1.0 - purity)).clamp(0.0, 1.0))
}

fn uhlmann<const N: usize>(a: &SMatrix<C64, N, N>, b: &SMatrix<C64, N, N>) -> f64 {
    let ra = psd_sqrt(a);
    let inner = ra * b * ra;
    let t: f64 = sqrt_spectrum(&eigvalsh(&inner)).iter().sum();
    (t * t).clamp(0.0, 1.0)
}

/// Uhlmann fidelity `(Tr √(√a b √a))²` of two normalized states.
pub fn fidelity(a: &TwoPhotonState, b: &TwoPhotonState) -> Result<f64> {
    a.require_normalized()?;
    b.require_normalized()?;
    Ok(uhlmann(a.matrix(), b.in_basis(a.basis()).matrix()))
}

/// Fidelity of the trace-normalized Choi matrices.
pub fn process_fidelity(a: &ChoiMatrix, b: &ChoiMatrix) -> Result<f64> {
    let (ta, tb) = (a.trace(), b.trace());
    if !(ta > 0.0 && tb > 0.0) {
        return Err(Error::Degenerate("Choi matrix with zero trace".into()));
    }
    let b = b.in_basis(a.basis());
    Ok(uhlmann(&a.matrix().scale(1.0 / ta), &b.matrix().scale(1.0 / tb)))
}

/// Pass probability and output purity for one Bell-state input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellPass {
    pub input: BellState,
    pub pass_probability: f64,
    /// `None` when nothing passes.
    pub output_linear_entropy: Option<f64>,
}

/// Figures of merit of a (normalized) filter process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub singlet_fraction_on_mixed: f64,
    /// Ψ⁻ intensity over the mean of the other three Bell intensities.
    pub polarization_ratio: f64,
    pub polarization_ratio_saturated: bool,
    pub concurrence_on_mixed: f64,
    pub linear_entropy_on_mixed: f64,
    pub bell_pass: Vec<BellPass>,
}

impl FilterReport {
    pub fn pass(&self, input: BellState) -> &BellPass {
        &self.bell_pass[input.index()]
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let ratio = if self.polarization_ratio_saturated {
            format!(">= {:.0}:1 (saturated)", self.polarization_ratio)
        } else {
            format!("{:.1}:1", self.polarization_ratio)
        };
        out.push_str("mixed-state input\n");
        out.push_str(&format!("  {:<24}{:>10.4}\n", "singlet fraction", self.singlet_fraction_on_mixed));
        out.push_str(&format!("  {:<24}{:>10}\n", "polarization ratio", ratio));
        out.push_str(&format!("  {:<24}{:>10.4}\n", "concurrence", self.concurrence_on_mixed));
        out.push_str(&format!("  {:<24}{:>10.4}\n", "linear entropy", self.linear_entropy_on_mixed));
        out.push_str("Bell-state inputs\n");
        out.push_str(&format!("  {:<8}{:>12}{:>16}\n", "input", "pass", "output S_L"));
        for p in &self.bell_pass {
            let sl = p.output_linear_entropy.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!("  {:<8}{:>12.4}{:>16}\n", p.input.name(), p.pass_probability, sl));
        }
        out
    }
}

/// Evaluates the filter report. The process is normalized first (mixed
/// input passes with trace ¼), so pass probabilities over the Bell basis sum
/// to one and the ideal filter passes Ψ⁻ with probability 1.
pub fn bell_diagnostics(e: &SuperMatrix) -> Result<FilterReport> {
    let e = normalize_superoperator(e)?.in_basis(Basis::Bell);
    let mixed_out = e.apply(&TwoPhotonState::maximally_mixed(Basis::Bell))?.normalized()?;
    let intensities: Vec<f64> = BellState::ALL
        .iter()
        .map(|b| mixed_out.expectation_ket(&b.ket()).max(0.0))
        .collect();
    let singlet = intensities[0];
    let others = (intensities[1] + intensities[2] + intensities[3]) / 3.0;
    let (polarization_ratio, saturated) = if others * POLARIZATION_RATIO_CAP <= singlet {
        (POLARIZATION_RATIO_CAP, true)
    } else {
        (singlet / others, false)
    };

    let bell_pass = BellState::ALL
        .iter()
        .map(|&b| {
            let out = e.apply(&b.state().to_bell_basis())?;
            let pass_probability = out.trace().max(0.0);
            let output_linear_entropy = if pass_probability > 1e-12 {
                Some(linear_entropy(&out.normalized()?)?)
            } else {
                None
            };
            Ok(BellPass {
                input: b,
                pass_probability,
                output_linear_entropy,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FilterReport {
        singlet_fraction_on_mixed: singlet,
        polarization_ratio,
        polarization_ratio_saturated: saturated,
        concurrence_on_mixed: concurrence(&mixed_out)?,
        linear_entropy_on_mixed: linear_entropy(&mixed_out)?,
        bell_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hom_sim::FilterModel;
    use crate::linalg::Mat16;

    fn werner(p: f64) -> TwoPhotonState {
        let singlet = BellState::PsiMinus.state();
        let mixed = TwoPhotonState::maximally_mixed(Basis::Computational);
        TwoPhotonState::new(singlet.matrix().scale(p) + mixed.matrix().scale(1.0 - p), Basis::Computational).unwrap()
    }

    #[test]
    fn concurrence_examples() {
        assert!((concurrence(&BellState::PsiMinus.state()).unwrap() - 1.0).abs() < 1e-9);
        assert!(concurrence(&TwoPhotonState::maximally_mixed(Basis::Computational)).unwrap().abs() < 1e-12);
        assert!((concurrence(&werner(2.0 / 3.0)).unwrap() - 0.5).abs() < 1e-9);
        assert!(concurrence(&BellState::PsiMinus.state().scaled(0.5)).is_err());
    }

    #[test]
    fn linear_entropy_examples() {
        assert!(linear_entropy(&BellState::PhiPlus.state()).unwrap().abs() < 1e-12);
        assert!((linear_entropy(&TwoPhotonState::maximally_mixed(Basis::Bell)).unwrap() - 1.0).abs() < 1e-12);
        let half = TwoPhotonState::new(
            (BellState::PsiMinus.state().matrix() + BellState::PsiPlus.state().matrix()).scale(0.5),
            Basis::Computational,
        )
        .unwrap();
        assert!((linear_entropy(&half).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        let s = BellState::PsiMinus.state();
        assert!((fidelity(&s, &s).unwrap() - 1.0).abs() < 1e-9);
        assert!(fidelity(&s, &BellState::PsiPlus.state()).unwrap() < 1e-9);
        let f = fidelity(&s, &TwoPhotonState::maximally_mixed(Basis::Bell)).unwrap();
        assert!((f - 0.25).abs() < 1e-9);
    }

    #[test]
    fn ideal_filter_report() {
        let mut m = Mat16::zeros();
        m[(0, 0)] = 1.0;
        let report = bell_diagnostics(&SuperMatrix::new(m, Basis::Bell)).unwrap();
        assert!((report.singlet_fraction_on_mixed - 1.0).abs() < 1e-12);
        assert!(report.polarization_ratio_saturated);
        assert_eq!(report.polarization_ratio, POLARIZATION_RATIO_CAP);
        assert!((report.concurrence_on_mixed - 1.0).abs() < 1e-9);
        assert!(report.linear_entropy_on_mixed.abs() < 1e-12);
        let psi_minus = report.pass(BellState::PsiMinus);
        assert!((psi_minus.pass_probability - 1.0).abs() < 1e-12);
        assert!(psi_minus.output_linear_entropy.unwrap().abs() < 1e-12);
        for b in [BellState::PsiPlus, BellState::PhiMinus, BellState::PhiPlus] {
            assert!(report.pass(b).pass_probability.abs() < 1e-12);
            assert!(report.pass(b).output_linear_entropy.is_none());
        }
    }

    #[test]
    fn dephasing_model_singlet_output() {
        // D(Ψ⁻) = ¼(|HV⟩⟨HV| + |VH⟩⟨VH|): normalized it is an equal mixture of
        // two orthogonal pure states, Tr ρ² = ½, S_L = 2/3.
        let model = FilterModel {
            visibility: 0.0,
            ..FilterModel::ideal()
        };
        let report = bell_diagnostics(&model.superoperator().unwrap()).unwrap();
        let sl = report.pass(BellState::PsiMinus).output_linear_entropy.unwrap();
        assert!((sl - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.pass(BellState::PsiMinus).pass_probability - 0.25).abs() < 1e-12);
    }

    #[test]
    fn report_table_renders() {
        let report = bell_diagnostics(&FilterModel::ideal().superoperator().unwrap()).unwrap();
        let table = report.to_table();
        assert!(table.contains("singlet fraction"));
        assert!(table.contains("Psi-"));
    }
}
