//! Diagnose → prescribe → predict.
//!
//! The leading Kraus operator of a reconstructed process identifies the
//! twisted singlet it actually selects; a birefringent phase shifter before
//! the beamsplitter (and its inverse after) rotates that state back onto Ψ⁻.
//! The repaired process is then evaluated with [`bell_diagnostics`].

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{bell_diagnostics, FilterReport};
use crate::polarization::Basis;
use crate::superop::{conjugate_by_phase_shifter, diagnose_leading_operator, KrausSet, LeadingOperatorDiagnostic, SuperMatrix};
use crate::tomography::normalize_superoperator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub diagnostic: LeadingOperatorDiagnostic,
    pub kraus_weights: Vec<f64>,
    /// Phase-shifter setting applied (the negated diagnosed phase).
    pub shifter_phase: f64,
    pub report: FilterReport,
    #[serde(skip)]
    pub repaired: Option<SuperMatrix>,
}

/// Kraus decomposition and leading-operator diagnostic of a process.
pub fn diagnose(e: &SuperMatrix) -> Result<(KrausSet, LeadingOperatorDiagnostic)> {
    let kraus = normalize_superoperator(e)?.to_choi().to_kraus()?;
    let diagnostic = diagnose_leading_operator(&kraus)?;
    Ok((kraus, diagnostic))
}

/// Full chain; fails with [`crate::Error::NotSingletLike`] when the leading
/// operator does not look like a twisted-singlet projector.
pub fn diagnose_and_repair(e: &SuperMatrix) -> Result<RepairOutcome> {
    let (kraus, diagnostic) = diagnose(e)?;
    let phase = diagnostic.accept()?;
    let shifter_phase = -phase;
    let repaired = normalize_superoperator(&conjugate_by_phase_shifter(e, shifter_phase))?.in_basis(Basis::Bell);
    let report = bell_diagnostics(&repaired)?;
    Ok(RepairOutcome {
        diagnostic,
        kraus_weights: kraus.weights(),
        shifter_phase,
        report,
        repaired: Some(repaired),
    })
}
