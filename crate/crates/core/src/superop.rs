//! Process superoperators in three interchangeable forms.
//!
//! - [`SuperMatrix`]: the real 16×16 matrix acting on [`RhoVector`]s.
//! - [`ChoiMatrix`]: `C = Σᵢⱼ E(|i⟩⟨j|) ⊗ |i⟩⟨j|`, output index first, so
//!   `C[(4o₁+i₁),(4o₂+i₂)] = ⟨o₁|E(|i₁⟩⟨i₂|)|o₂⟩`.
//! - [`KrausSet`]: `E(ρ) = Σₗ Kₗ ρ Kₗ†`, operators sorted by weight.
//!
//! Every form carries the basis its coordinates refer to. Maps here are
//! trace-nonincreasing rather than trace-preserving: post-selection loses
//! pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, eigh, hermitian_part, CMat16, CVec16, Mat16, Mat4, Vec16, C64};
use crate::polarization::{
    change_operator_basis, devectorize_matrix, join_re_im, split_re_im, vectorize_matrix, Basis, RhoVector,
    TwoPhotonState,
};

/// Smallest Choi eigenvalue still counted as completely positive.
pub const CP_TOL: f64 = -1e-8;
/// Relative eigenvalue cutoff when extracting Kraus operators.
pub const KRAUS_CUTOFF: f64 = 1e-10;

/// Apply a Hermiticity-preserving map given on Hermitian inputs to an
/// arbitrary operator, by splitting it into Hermitian and anti-Hermitian
/// parts.
fn extend_to_operator(x: &Mat4, hermitian_map: impl Fn(&Mat4) -> Mat4) -> Mat4 {
    let herm = (x + x.adjoint()).scale(0.5);
    let anti = (x - x.adjoint()) * c(0.0, -0.5);
    hermitian_map(&herm) + hermitian_map(&anti) * c(0.0, 1.0)
}

/// Real 16×16 superoperator matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperMatrix {
    m: Mat16,
    basis: Basis,
}

impl SuperMatrix {
    pub fn new(m: Mat16, basis: Basis) -> Self {
        Self { m, basis }
    }

    pub fn identity(basis: Basis) -> Self {
        Self::new(Mat16::identity(), basis)
    }

    /// Tabulates a linear Hermiticity-preserving map on the 16 basis
    /// elements of the RhoVector encoding.
    pub fn from_map(basis: Basis, map: impl Fn(&Mat4) -> Mat4) -> Self {
        let mut m = Mat16::zeros();
        for k in 0..16 {
            let input = devectorize_matrix(&Vec16::from_fn(|i, _| if i == k { 1.0 } else { 0.0 }));
            m.set_column(k, &vectorize_matrix(&map(&input)));
        }
        Self { m, basis }
    }

    /// Superoperator of `ρ ↦ U ρ U†`, with `U` given in `basis` coordinates.
    pub fn unitary(u: &Mat4, basis: Basis) -> Self {
        let u = *u;
        Self::from_map(basis, move |x| u * x * u.adjoint())
    }

    pub fn matrix(&self) -> &Mat16 {
        &self.m
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.m * factor, self.basis)
    }

    pub fn apply(&self, s: &TwoPhotonState) -> Result<TwoPhotonState> {
        if s.basis() != self.basis {
            return Err(Error::BasisMismatch {
                expected: self.basis,
                found: s.basis(),
            });
        }
        Ok(TwoPhotonState::from_hermitian(self.apply_hermitian(s.matrix()), self.basis))
    }

    pub fn apply_vector(&self, v: &RhoVector) -> Result<RhoVector> {
        if v.basis() != self.basis {
            return Err(Error::BasisMismatch {
                expected: self.basis,
                found: v.basis(),
            });
        }
        Ok(RhoVector::new(self.m * v.entries(), self.basis))
    }

    fn apply_hermitian(&self, x: &Mat4) -> Mat4 {
        devectorize_matrix(&(self.m * vectorize_matrix(x)))
    }

    /// Action on an arbitrary (not necessarily Hermitian) operator.
    pub fn apply_operator(&self, x: &Mat4) -> Mat4 {
        extend_to_operator(x, |h| self.apply_hermitian(h))
    }

    pub fn in_basis(&self, to: Basis) -> Self {
        if to == self.basis {
            return *self;
        }
        let from = self.basis;
        Self::from_map(to, |x| {
            let inner = change_operator_basis(x, to, from);
            change_operator_basis(&self.apply_hermitian(&inner), from, to)
        })
    }

    pub fn to_choi(&self) -> ChoiMatrix {
        matrix_to_choi(self)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &SuperMatrix) -> Result<SuperMatrix> {
        compose(self, first)
    }
}

pub fn matrix_to_choi(e: &SuperMatrix) -> ChoiMatrix {
    let mut cm = CMat16::zeros();
    for i1 in 0..4 {
        for i2 in 0..4 {
            let mut unit = Mat4::zeros();
            unit[(i1, i2)] = c(1.0, 0.0);
            let out = e.apply_operator(&unit);
            for o1 in 0..4 {
                for o2 in 0..4 {
                    cm[(4 * o1 + i1, 4 * o2 + i2)] = out[(o1, o2)];
                }
            }
        }
    }
    ChoiMatrix {
        c: hermitian_part(&cm),
        basis: e.basis,
    }
}

pub fn choi_to_matrix(choi: &ChoiMatrix) -> SuperMatrix {
    SuperMatrix::from_map(choi.basis, |x| choi.apply_operator(x))
}

/// `E₂ ∘ E₁` as the matrix product `M₂·M₁`.
pub fn compose(e2: &SuperMatrix, e1: &SuperMatrix) -> Result<SuperMatrix> {
    if e2.basis != e1.basis {
        return Err(Error::BasisMismatch {
            expected: e2.basis,
            found: e1.basis,
        });
    }
    Ok(SuperMatrix::new(e2.m * e1.m, e2.basis))
}

/// Choi matrix of a process, Hermitian by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoiMatrix {
    c: CMat16,
    basis: Basis,
}

impl ChoiMatrix {
    /// Wraps a matrix; only its Hermitian part is kept.
    pub fn new(c: CMat16, basis: Basis) -> Self {
        Self {
            c: hermitian_part(&c),
            basis,
        }
    }

    pub fn matrix(&self) -> &CMat16 {
        &self.c
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn trace(&self) -> f64 {
        crate::linalg::trace(&self.c).re
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            c: self.c.scale(factor),
            basis: self.basis,
        }
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        crate::linalg::eigvalsh(&self.c)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("16 eigenvalues")
    }

    pub fn is_completely_positive(&self) -> bool {
        self.min_eigenvalue() >= CP_TOL
    }

    /// `Tr_out[C]`; equals the transpose of `Σ Kₗ†Kₗ`.
    pub fn partial_trace_output(&self) -> Mat4 {
        let mut p = Mat4::zeros();
        for i1 in 0..4 {
            for i2 in 0..4 {
                p[(i1, i2)] = (0..4).map(|o| self.c[(4 * o + i1, 4 * o + i2)]).sum();
            }
        }
        p
    }

    /// Largest eigenvalue of `Tr_out[C]`: the maximum pass probability over
    /// all inputs. Trace-nonincreasing iff this is ≤ 1.
    pub fn max_throughput(&self) -> f64 {
        crate::linalg::eigvalsh(&self.partial_trace_output())[0]
    }

    pub fn is_trace_nonincreasing(&self) -> bool {
        let p = self.partial_trace_output();
        let slack = Mat4::identity() - p;
        crate::linalg::min_eigenvalue(&slack) >= CP_TOL
    }

    pub fn apply_operator(&self, x: &Mat4) -> Mat4 {
        let mut out = Mat4::zeros();
        for o1 in 0..4 {
            for o2 in 0..4 {
                let mut acc = C64::new(0.0, 0.0);
                for i1 in 0..4 {
                    for i2 in 0..4 {
                        acc += self.c[(4 * o1 + i1, 4 * o2 + i2)] * x[(i1, i2)];
                    }
                }
                out[(o1, o2)] = acc;
            }
        }
        out
    }

    pub fn apply(&self, s: &TwoPhotonState) -> Result<TwoPhotonState> {
        if s.basis() != self.basis {
            return Err(Error::BasisMismatch {
                expected: self.basis,
                found: s.basis(),
            });
        }
        Ok(TwoPhotonState::from_hermitian(self.apply_operator(s.matrix()), self.basis))
    }

    pub fn to_matrix(&self) -> SuperMatrix {
        choi_to_matrix(self)
    }

    pub fn to_kraus(&self) -> Result<KrausSet> {
        choi_to_kraus(self)
    }

    pub fn in_basis(&self, to: Basis) -> Self {
        if to == self.basis {
            return *self;
        }
        self.to_matrix().in_basis(to).to_choi()
    }
}

/// Canonical Kraus decomposition from the Choi eigensystem.
pub fn choi_to_kraus(choi: &ChoiMatrix) -> Result<KrausSet> {
    let (values, vectors) = eigh(&choi.c);
    let min = *values.last().expect("16 eigenvalues");
    if min < CP_TOL {
        return Err(Error::NotCompletelyPositive { min_eigenvalue: min });
    }
    let top = values[0].max(0.0);
    let operators = values
        .iter()
        .zip(&vectors)
        .filter(|(&lambda, _)| top > 0.0 && lambda > KRAUS_CUTOFF * top)
        .map(|(&lambda, v)| unfold(v).scale(lambda.sqrt()))
        .collect();
    Ok(KrausSet {
        operators,
        basis: choi.basis,
    })
}

/// `K[o, i] = v[4o + i]`.
fn unfold(v: &CVec16) -> Mat4 {
    Mat4::from_fn(|o, i| v[4 * o + i])
}

fn fold(k: &Mat4) -> CVec16 {
    CVec16::from_fn(|idx, _| k[(idx / 4, idx % 4)])
}

/// Kraus operators ordered by descending weight `Tr[K†K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    operators: Vec<Mat4>,
    basis: Basis,
}

impl KrausSet {
    /// Sorts the operators by descending weight.
    pub fn new(mut operators: Vec<Mat4>, basis: Basis) -> Self {
        operators.sort_by(|a, b| weight(b).total_cmp(&weight(a)));
        Self { operators, basis }
    }

    pub fn operators(&self) -> &[Mat4] {
        &self.operators
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.operators.iter().map(weight).collect()
    }

    /// `Σ Kₗ†Kₗ`.
    pub fn completeness(&self) -> Mat4 {
        self.operators.iter().map(|k| k.adjoint() * k).sum()
    }

    pub fn apply(&self, s: &TwoPhotonState) -> Result<TwoPhotonState> {
        if s.basis() != self.basis {
            return Err(Error::BasisMismatch {
                expected: self.basis,
                found: s.basis(),
            });
        }
        let out: Mat4 = self.operators.iter().map(|k| k * s.matrix() * k.adjoint()).sum();
        Ok(TwoPhotonState::from_hermitian(out, self.basis))
    }

    pub fn to_choi(&self) -> ChoiMatrix {
        let cm: CMat16 = self
            .operators
            .iter()
            .map(|k| {
                let v = fold(k);
                v * v.adjoint()
            })
            .sum();
        ChoiMatrix::new(cm, self.basis)
    }

    pub fn in_basis(&self, to: Basis) -> Self {
        Self {
            operators: self
                .operators
                .iter()
                .map(|k| change_operator_basis(k, self.basis, to))
                .collect(),
            basis: to,
        }
    }

    /// Diagnose the leading operator as a projector onto `Ψ⁻_φ`.
    pub fn leading_projector_phase(&self) -> Result<f64> {
        leading_projector_phase(self)
    }
}

fn weight(k: &Mat4) -> f64 {
    k.norm_squared()
}

/// Quality figures for the leading Kraus operator, with the extracted phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadingOperatorDiagnostic {
    /// `φ` in `(HV − e^{iφ}VH)/√2`, wrapped to (−π, π].
    pub phase: f64,
    /// Weight of the dominant right-singular vector inside span{HV, VH}.
    pub in_span_weight: f64,
    /// `max_φ |⟨Ψ⁻_φ|v⟩|²` for the dominant right-singular vector `v`.
    pub singlet_overlap: f64,
    /// Second Kraus weight over the first (0 for a rank-one process).
    pub dominance: f64,
}

impl LeadingOperatorDiagnostic {
    pub const MIN_IN_SPAN_WEIGHT: f64 = 0.9;
    pub const MIN_SINGLET_OVERLAP: f64 = 0.75;
    pub const MAX_DOMINANCE: f64 = 0.5;

    pub fn is_singlet_like(&self) -> bool {
        self.in_span_weight >= Self::MIN_IN_SPAN_WEIGHT
            && self.singlet_overlap >= Self::MIN_SINGLET_OVERLAP
            && self.dominance <= Self::MAX_DOMINANCE
    }

    pub fn accept(&self) -> Result<f64> {
        if self.is_singlet_like() {
            Ok(self.phase)
        } else {
            Err(Error::NotSingletLike {
                in_span_weight: self.in_span_weight,
                singlet_overlap: self.singlet_overlap,
                dominance: self.dominance,
            })
        }
    }
}

/// Wrap an angle to (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut x = phi.rem_euclid(TAU);
    if x > PI {
        x -= TAU;
    }
    x
}

/// Computes the diagnostic without judging it.
pub fn diagnose_leading_operator(kraus: &KrausSet) -> Result<LeadingOperatorDiagnostic> {
    let lead = kraus
        .operators
        .first()
        .ok_or_else(|| Error::Degenerate("empty Kraus set".into()))?;
    let lead = change_operator_basis(lead, kraus.basis, Basis::Computational);
    let svd = nalgebra::SVD::new(lead, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let top = (0..4)
        .max_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .expect("4 singular values");
    // right-singular vector = conjugate of the row of V†
    let v: Vec<C64> = (0..4).map(|j| v_t[(top, j)].conj()).collect();
    let (hv, vh) = (v[1], v[2]);
    let in_span_weight = hv.norm_sqr() + vh.norm_sqr();
    let singlet_overlap = (hv.norm() + vh.norm()).powi(2) / 2.0;
    let phase = if hv.norm() > 0.0 && vh.norm() > 0.0 {
        wrap_phase(std::f64::consts::PI + (vh / hv).arg())
    } else {
        0.0
    };
    let weights = kraus.weights();
    let dominance = match weights.as_slice() {
        [w1, w2, ..] if *w1 > 0.0 => w2 / w1,
        _ => 0.0,
    };
    Ok(LeadingOperatorDiagnostic {
        phase,
        in_span_weight,
        singlet_overlap,
        dominance,
    })
}

/// Phase `φ` of the twisted singlet `(HV − e^{iφ}VH)/√2` selected by the
/// leading Kraus operator; fails when that operator is not singlet-like.
pub fn leading_projector_phase(kraus: &KrausSet) -> Result<f64> {
    diagnose_leading_operator(kraus)?.accept()
}

/// `E′(ρ) = U_post E(U_pre ρ U_pre†) U_post†` with
/// `U_pre = diag(1, 1, e^{−iφ}, 1)` in computational ordering and
/// `U_post = U_pre†`.
pub fn conjugate_by_phase_shifter(e: &SuperMatrix, phi: f64) -> SuperMatrix {
    let u_pre = crate::linalg::diag4([c(1.0, 0.0), c(1.0, 0.0), C64::from_polar(1.0, -phi), c(1.0, 0.0)]);
    let u_pre = change_operator_basis(&u_pre, Basis::Computational, e.basis);
    let pre = SuperMatrix::unitary(&u_pre, e.basis);
    let post = SuperMatrix::unitary(&u_pre.adjoint(), e.basis);
    SuperMatrix::new(post.m * e.m * pre.m, e.basis)
}

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
enum SuperoperatorJson {
    Matrix {
        basis: Basis,
        data: Vec<[f64; 16]>,
    },
    Choi {
        basis: Basis,
        re: Vec<[f64; 16]>,
        im: Vec<[f64; 16]>,
    },
    Kraus {
        basis: Basis,
        operators: Vec<OperatorJson>,
    },
}

/// Any of the three forms, for (de)serialization.
#[derive(Debug, Clone, PartialEq)]
pub enum Superoperator {
    Matrix(SuperMatrix),
    Choi(ChoiMatrix),
    Kraus(KrausSet),
}

impl Superoperator {
    pub fn to_matrix(&self) -> SuperMatrix {
        match self {
            Superoperator::Matrix(m) => *m,
            Superoperator::Choi(ch) => ch.to_matrix(),
            Superoperator::Kraus(k) => k.to_choi().to_matrix(),
        }
    }
}

fn rows16<T: Copy>(f: impl Fn(usize, usize) -> T) -> Vec<[T; 16]> {
    (0..16).map(|i| std::array::from_fn(|j| f(i, j))).collect()
}

fn check_rows<T>(rows: &[T], what: &str) -> std::result::Result<(), String> {
    if rows.len() == 16 {
        Ok(())
    } else {
        Err(format!("{what} needs 16 rows, got {}", rows.len()))
    }
}

impl Serialize for Superoperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let json = match self {
            Superoperator::Matrix(e) => SuperoperatorJson::Matrix {
                basis: e.basis,
                data: rows16(|i, j| e.m[(i, j)]),
            },
            Superoperator::Choi(ch) => SuperoperatorJson::Choi {
                basis: ch.basis,
                re: rows16(|i, j| ch.c[(i, j)].re),
                im: rows16(|i, j| ch.c[(i, j)].im),
            },
            Superoperator::Kraus(k) => SuperoperatorJson::Kraus {
                basis: k.basis,
                operators: k
                    .operators
                    .iter()
                    .map(|op| {
                        let (re, im) = split_re_im(op);
                        OperatorJson { re, im }
                    })
                    .collect(),
            },
        };
        json.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Superoperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        Ok(match SuperoperatorJson::deserialize(d)? {
            SuperoperatorJson::Matrix { basis, data } => {
                check_rows(&data, "matrix").map_err(D::Error::custom)?;
                Superoperator::Matrix(SuperMatrix::new(Mat16::from_fn(|i, j| data[i][j]), basis))
            }
            SuperoperatorJson::Choi { basis, re, im } => {
                check_rows(&re, "choi re").map_err(D::Error::custom)?;
                check_rows(&im, "choi im").map_err(D::Error::custom)?;
                Superoperator::Choi(ChoiMatrix::new(CMat16::from_fn(|i, j| c(re[i][j], im[i][j])), basis))
            }
            SuperoperatorJson::Kraus { basis, operators } => Superoperator::Kraus(KrausSet::new(
                operators.iter().map(|op| join_re_im(&op.re, &op.im)).collect(),
                basis,
            )),
        })
    }
}
