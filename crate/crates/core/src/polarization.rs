//! Polarization kets, two-photon density matrices and their encodings.
//!
//! Computational ordering is (HH, HV, VH, VV) with the first letter naming
//! the photon in input mode a. Bell ordering is (Ψ⁻, Ψ⁺, Φ⁻, Φ⁺).

use std::fmt;
use std::str::FromStr;

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, eigvalsh, hermitian_part, hermiticity_error, trace, Mat16, Mat4, Vec16, Vec4, C64};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Hermiticity tolerance for density matrices (element-wise).
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Positivity tolerance for density matrices.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolLabel {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl PolLabel {
    pub const ALL: [PolLabel; 6] = [PolLabel::H, PolLabel::V, PolLabel::D, PolLabel::A, PolLabel::R, PolLabel::L];

    pub fn ket(self) -> PolarizationKet {
        let s = FRAC_1_SQRT_2;
        let (h, v) = match self {
            PolLabel::H => (c(1.0, 0.0), c(0.0, 0.0)),
            PolLabel::V => (c(0.0, 0.0), c(1.0, 0.0)),
            PolLabel::D => (c(s, 0.0), c(s, 0.0)),
            PolLabel::A => (c(s, 0.0), c(-s, 0.0)),
            PolLabel::R => (c(s, 0.0), c(0.0, -s)),
            PolLabel::L => (c(s, 0.0), c(0.0, s)),
        };
        PolarizationKet { h, v }
    }

    fn as_char(self) -> char {
        match self {
            PolLabel::H => 'H',
            PolLabel::V => 'V',
            PolLabel::D => 'D',
            PolLabel::A => 'A',
            PolLabel::R => 'R',
            PolLabel::L => 'L',
        }
    }

    fn from_char(ch: char) -> Option<Self> {
        Some(match ch {
            'H' => PolLabel::H,
            'V' => PolLabel::V,
            'D' => PolLabel::D,
            'A' => PolLabel::A,
            'R' => PolLabel::R,
            'L' => PolLabel::L,
            _ => return None,
        })
    }
}

impl fmt::Display for PolLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for PolLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(ch), None) => PolLabel::from_char(ch).ok_or_else(|| Error::UnknownLabel(s.to_string())),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// Parse a single-photon label and return its ket.
pub fn make_ket(label: &str) -> Result<PolarizationKet> {
    label.parse::<PolLabel>().map(PolLabel::ket)
}

/// A unit-norm single-photon polarization state (H amplitude, V amplitude).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationKet {
    h: C64,
    v: C64,
}

impl PolarizationKet {
    /// Normalizes and fixes the global phase so the H amplitude is real and
    /// non-negative (the V amplitude when H vanishes).
    pub fn new(h: C64, v: C64) -> Result<Self> {
        let norm = (h.norm_sqr() + v.norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Format("polarization ket has zero or non-finite norm".into()));
        }
        let pivot = if h.norm() > 1e-15 { h } else { v };
        let phase = pivot.conj() / pivot.norm();
        Ok(Self {
            h: h * phase / norm,
            v: v * phase / norm,
        })
    }

    pub fn h(&self) -> C64 {
        self.h
    }

    pub fn v(&self) -> C64 {
        self.v
    }

    pub fn inner(&self, other: &PolarizationKet) -> C64 {
        self.h.conj() * other.h + self.v.conj() * other.v
    }
}

/// A two-photon product label such as `HV` or `DR`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProductLabel(pub PolLabel, pub PolLabel);

impl ProductLabel {
    pub fn ket(self) -> Vec4 {
        product_ket(&self.0.ket(), &self.1.ket())
    }

    pub fn state(self) -> TwoPhotonState {
        product_state(&self.0.ket(), &self.1.ket())
    }
}

impl fmt::Display for ProductLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.0, self.1)
    }
}

impl FromStr for ProductLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let chars: Vec<char> = t.chars().collect();
        if chars.len() != 2 {
            return Err(Error::UnknownLabel(s.to_string()));
        }
        let a = PolLabel::from_char(chars[0]).ok_or_else(|| Error::UnknownLabel(s.to_string()))?;
        let b = PolLabel::from_char(chars[1]).ok_or_else(|| Error::UnknownLabel(s.to_string()))?;
        Ok(ProductLabel(a, b))
    }
}

impl Serialize for ProductLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProductLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Two-photon ket `a ⊗ b` in computational coordinates.
pub fn product_ket(a: &PolarizationKet, b: &PolarizationKet) -> Vec4 {
    Vec4::new(a.h * b.h, a.h * b.v, a.v * b.h, a.v * b.v)
}

/// Rank-one density matrix `|a⊗b⟩⟨a⊗b|` in the computational basis.
pub fn product_state(a: &PolarizationKet, b: &PolarizationKet) -> TwoPhotonState {
    TwoPhotonState::pure(&product_ket(a, b), Basis::Computational)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Computational,
    Bell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellState {
    PsiMinus,
    PsiPlus,
    PhiMinus,
    PhiPlus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [BellState::PsiMinus, BellState::PsiPlus, BellState::PhiMinus, BellState::PhiPlus];

    /// Position in the Bell ordering.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Ket in computational coordinates.
    pub fn ket(self) -> Vec4 {
        let s = FRAC_1_SQRT_2;
        let (hh, hv, vh, vv) = match self {
            BellState::PsiMinus => (0.0, s, -s, 0.0),
            BellState::PsiPlus => (0.0, s, s, 0.0),
            BellState::PhiMinus => (s, 0.0, 0.0, -s),
            BellState::PhiPlus => (s, 0.0, 0.0, s),
        };
        Vec4::new(c(hh, 0.0), c(hv, 0.0), c(vh, 0.0), c(vv, 0.0))
    }

    pub fn state(self) -> TwoPhotonState {
        TwoPhotonState::pure(&self.ket(), Basis::Computational)
    }

    pub fn name(self) -> &'static str {
        match self {
            BellState::PsiMinus => "Psi-",
            BellState::PsiPlus => "Psi+",
            BellState::PhiMinus => "Phi-",
            BellState::PhiPlus => "Phi+",
        }
    }
}

/// The phase-twisted singlet `(HV − e^{iφ} VH)/√2` in computational coordinates.
pub fn twisted_singlet(phi: f64) -> Vec4 {
    let s = FRAC_1_SQRT_2;
    Vec4::new(c(0.0, 0.0), c(s, 0.0), -C64::from_polar(s, phi), c(0.0, 0.0))
}

/// Unitary whose columns are the Bell kets in computational coordinates.
pub fn bell_change_matrix() -> Mat4 {
    let mut b = Mat4::zeros();
    for bell in BellState::ALL {
        b.set_column(bell.index(), &bell.ket());
    }
    b
}

/// Express a computational-basis operator in the Bell basis.
pub fn operator_to_bell(op: &Mat4) -> Mat4 {
    let b = bell_change_matrix();
    b.adjoint() * op * b
}

/// Express a Bell-basis operator in the computational basis.
pub fn operator_to_computational(op: &Mat4) -> Mat4 {
    let b = bell_change_matrix();
    b * op * b.adjoint()
}

/// Re-express an operator given in `from` coordinates in `to` coordinates.
pub fn change_operator_basis(op: &Mat4, from: Basis, to: Basis) -> Mat4 {
    match (from, to) {
        (Basis::Computational, Basis::Bell) => operator_to_bell(op),
        (Basis::Bell, Basis::Computational) => operator_to_computational(op),
        _ => *op,
    }
}

/// Re-express a ket given in computational coordinates in `to` coordinates.
pub fn ket_in_basis(ket: &Vec4, to: Basis) -> Vec4 {
    match to {
        Basis::Computational => *ket,
        Basis::Bell => bell_change_matrix().adjoint() * ket,
    }
}

/// A (possibly sub-normalized) two-photon density matrix with a basis tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhotonState {
    matrix: Mat4,
    basis: Basis,
}

impl TwoPhotonState {
    /// Wraps a matrix after checking Hermiticity; the stored matrix is the
    /// exact Hermitian part.
    pub fn new(matrix: Mat4, basis: Basis) -> Result<Self> {
        let err = hermiticity_error(&matrix);
        if err > HERMITIAN_TOL {
            return Err(Error::Format(format!("density matrix is not Hermitian (deviation {err:e})")));
        }
        Ok(Self {
            matrix: hermitian_part(&matrix),
            basis,
        })
    }

    /// Caller guarantees Hermiticity; the Hermitian part is stored.
    pub(crate) fn from_hermitian(matrix: Mat4, basis: Basis) -> Self {
        Self {
            matrix: hermitian_part(&matrix),
            basis,
        }
    }

    pub fn pure(ket: &Vec4, basis: Basis) -> Self {
        Self::from_hermitian(ket * ket.adjoint(), basis)
    }

    pub fn maximally_mixed(basis: Basis) -> Self {
        Self {
            matrix: Mat4::identity().scale(0.25),
            basis,
        }
    }

    pub fn zero(basis: Basis) -> Self {
        Self {
            matrix: Mat4::zeros(),
            basis,
        }
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.matrix
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        eigvalsh(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("4 eigenvalues")
    }

    /// PSD within tolerance and trace in [0, 1].
    pub fn is_physical(&self) -> bool {
        let tr = self.trace();
        self.min_eigenvalue() >= -PSD_TOL && tr >= -PSD_TOL && tr <= 1.0 + PSD_TOL
    }

    pub fn to_bell_basis(&self) -> Self {
        self.in_basis(Basis::Bell)
    }

    pub fn to_computational_basis(&self) -> Self {
        self.in_basis(Basis::Computational)
    }

    pub fn in_basis(&self, to: Basis) -> Self {
        Self::from_hermitian(change_operator_basis(&self.matrix, self.basis, to), to)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: self.matrix.scale(factor),
            basis: self.basis,
        }
    }

    /// Divides by the trace; fails on a zero (or negative) trace.
    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > 1e-300) {
            return Err(Error::Degenerate(format!("cannot normalize state with trace {tr:e}")));
        }
        Ok(self.scaled(1.0 / tr))
    }

    /// Rejects inputs whose trace differs from one by more than 1e-9.
    pub fn require_normalized(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized { trace: tr });
        }
        Ok(())
    }

    /// `⟨ψ|ρ|ψ⟩` for a ket in computational coordinates.
    pub fn expectation_ket(&self, ket_computational: &Vec4) -> f64 {
        let k = ket_in_basis(ket_computational, self.basis);
        (k.adjoint() * self.matrix * k)[(0, 0)].re
    }

    pub fn vectorize(&self) -> RhoVector {
        vectorize(self)
    }
}

/// Upper-triangle index pairs in RhoVector order.
pub(crate) const OFF_DIAGONAL: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Real 16-vector (ρ₁₁..ρ₄₄, Re ρ₁₂, Im ρ₁₂, Re ρ₁₃, …, Im ρ₃₄).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoVector {
    entries: Vec16,
    basis: Basis,
}

impl RhoVector {
    pub fn new(entries: Vec16, basis: Basis) -> Self {
        Self { entries, basis }
    }

    pub fn entries(&self) -> &Vec16 {
        &self.entries
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }
}

pub fn vectorize(s: &TwoPhotonState) -> RhoVector {
    RhoVector {
        entries: vectorize_matrix(&s.matrix),
        basis: s.basis,
    }
}

pub fn devectorize(v: &RhoVector) -> TwoPhotonState {
    TwoPhotonState {
        matrix: devectorize_matrix(&v.entries),
        basis: v.basis,
    }
}

pub(crate) fn vectorize_matrix(m: &Mat4) -> Vec16 {
    let mut v = Vec16::zeros();
    for i in 0..4 {
        v[i] = m[(i, i)].re;
    }
    for (k, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        v[4 + 2 * k] = m[(i, j)].re;
        v[5 + 2 * k] = m[(i, j)].im;
    }
    v
}

pub(crate) fn devectorize_matrix(v: &Vec16) -> Mat4 {
    let mut m = Mat4::zeros();
    for i in 0..4 {
        m[(i, i)] = c(v[i], 0.0);
    }
    for (k, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        let z = c(v[4 + 2 * k], v[5 + 2 * k]);
        m[(i, j)] = z;
        m[(j, i)] = z.conj();
    }
    m
}

/// Row of the linear functional `ρ ↦ Tr[ρ P]` acting on RhoVector entries.
pub(crate) fn measurement_row(projector: &Mat4) -> Vec16 {
    let mut row = Vec16::zeros();
    for i in 0..4 {
        row[i] = projector[(i, i)].re;
    }
    for (k, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        row[4 + 2 * k] = 2.0 * projector[(i, j)].re;
        row[5 + 2 * k] = 2.0 * projector[(i, j)].im;
    }
    row
}

/// Ordered list of 16 two-photon product states used both as process
/// inputs and as analyzer projections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TomographicSet {
    labels: Vec<ProductLabel>,
}

impl TomographicSet {
    pub const CANONICAL: [&'static str; 16] = [
        "HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH", "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL",
    ];

    pub fn canonical() -> Self {
        let labels = Self::CANONICAL
            .iter()
            .map(|s| s.parse().expect("canonical labels parse"))
            .collect();
        Self { labels }
    }

    /// A custom set; must contain 16 labels whose projectors are linearly
    /// independent.
    pub fn from_labels(labels: Vec<ProductLabel>) -> Result<Self> {
        if labels.len() != 16 {
            return Err(Error::Format(format!("tomographic set needs 16 states, got {}", labels.len())));
        }
        let set = Self { labels };
        if set.design_matrix().rank(1e-10) < 16 {
            return Err(Error::Singular("tomographic projectors are linearly dependent".into()));
        }
        Ok(set)
    }

    pub fn labels(&self) -> &[ProductLabel] {
        &self.labels
    }

    pub fn index_of(&self, label: ProductLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Kets in computational coordinates.
    pub fn kets(&self) -> Vec<Vec4> {
        self.labels.iter().map(|l| l.ket()).collect()
    }

    /// Row j maps a computational-basis RhoVector to `Tr[ρ |ψⱼ⟩⟨ψⱼ|]`.
    pub fn design_matrix(&self) -> Mat16 {
        let mut a = Mat16::zeros();
        for (j, ket) in self.kets().iter().enumerate() {
            let row = measurement_row(&(ket * ket.adjoint()));
            a.set_row(j, &row.transpose());
        }
        a
    }
}

impl Default for TomographicSet {
    fn default() -> Self {
        Self::canonical()
    }
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    basis: Basis,
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

pub(crate) fn split_re_im<const R: usize, const C: usize>(m: &SMatrix<C64, R, C>) -> ([[f64; C]; R], [[f64; C]; R]) {
    let mut re = [[0.0; C]; R];
    let mut im = [[0.0; C]; R];
    for i in 0..R {
        for j in 0..C {
            re[i][j] = m[(i, j)].re;
            im[i][j] = m[(i, j)].im;
        }
    }
    (re, im)
}

pub(crate) fn join_re_im<const R: usize, const C: usize>(re: &[[f64; C]; R], im: &[[f64; C]; R]) -> SMatrix<C64, R, C> {
    SMatrix::from_fn(|i, j| c(re[i][j], im[i][j]))
}

impl Serialize for TwoPhotonState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (re, im) = split_re_im(&self.matrix);
        StateJson { basis: self.basis, re, im }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TwoPhotonState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = StateJson::deserialize(d)?;
        TwoPhotonState::new(join_re_im(&j.re, &j.im), j.basis).map_err(serde::de::Error::custom)
    }
}
