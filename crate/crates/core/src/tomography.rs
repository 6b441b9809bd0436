//! State and process reconstruction from coincidence counts.
//!
//! Both reconstructions maximize a Poisson likelihood over a Cholesky-style
//! parameterization `X = T†T` (T lower-triangular, real diagonal), so the
//! estimate is positive semidefinite for every parameter value. For states
//! `X` is the 4×4 density matrix; for processes it is the 16×16 Choi matrix,
//! which makes every estimate completely positive.
//!
//! Counts are modelled as `μₖ = rate_scale · ‖T vₖ‖²`, with probe vectors
//! `vⱼ = ψⱼ` for states and `vᵢⱼ = ψⱼ ⊗ ψᵢ*` for processes (output index
//! first, matching the Choi convention of [`crate::superop`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hom_sim::{derive_seed, CountRecord};
use crate::linalg::{c, clip_to_psd, kron4, lower_factor_tdag_t, CMat16, Mat16, Vec4, C64};
use crate::optimize::{minimize, LbfgsOptions, Objective};
use crate::polarization::{devectorize_matrix, vectorize_matrix, Basis, ProductLabel, TomographicSet, TwoPhotonState};
use crate::superop::{ChoiMatrix, SuperMatrix};

/// Lower clamp on model means inside the logarithm.
pub const MU_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    #[default]
    Poisson,
    /// Weighted least squares with variance `max(n, 1)`; for cross-checks.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub likelihood: Likelihood,
    pub optimizer: LbfgsOptions,
    /// Relative ridge added before factoring the initial estimate.
    pub init_ridge: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            likelihood: Likelihood::Poisson,
            optimizer: LbfgsOptions::default(),
            init_ridge: 1e-3,
        }
    }
}

/// Negative log-likelihood of counts under `μₖ = s‖T vₖ‖²`, as a function
/// of the real parameters of a lower-triangular `T`.
///
/// Parameter layout: the `d` real diagonal entries first, then `(Re, Im)`
/// of each strictly-lower entry in row-major order.
#[derive(Debug, Clone)]
pub struct CholeskyLikelihood {
    dim: usize,
    probes: Vec<Vec<C64>>,
    counts: Vec<f64>,
    rate_scale: f64,
    kind: Likelihood,
}

impl CholeskyLikelihood {
    pub fn new(dim: usize, probes: Vec<Vec<C64>>, counts: Vec<f64>, rate_scale: f64, kind: Likelihood) -> Self {
        assert_eq!(probes.len(), counts.len());
        assert!(probes.iter().all(|p| p.len() == dim));
        Self {
            dim,
            probes,
            counts,
            rate_scale,
            kind,
        }
    }

    pub fn n_params(&self) -> usize {
        self.dim * self.dim
    }

    /// Row-major `T` from parameters.
    pub fn unpack(&self, x: &[f64]) -> Vec<C64> {
        let d = self.dim;
        let mut t = vec![c(0.0, 0.0); d * d];
        for r in 0..d {
            t[r * d + r] = c(x[r], 0.0);
        }
        let mut k = d;
        for r in 1..d {
            for col in 0..r {
                t[r * d + col] = c(x[k], x[k + 1]);
                k += 2;
            }
        }
        t
    }

    /// Parameters from a row-major lower-triangular `T` with real diagonal.
    pub fn pack(&self, t: &[C64]) -> Vec<f64> {
        let d = self.dim;
        let mut x = vec![0.0; d * d];
        for r in 0..d {
            x[r] = t[r * d + r].re;
        }
        let mut k = d;
        for r in 1..d {
            for col in 0..r {
                x[k] = t[r * d + col].re;
                x[k + 1] = t[r * d + col].im;
                k += 2;
            }
        }
        x
    }

    /// Model means `μₖ` for parameters `x`.
    pub fn means(&self, x: &[f64]) -> Vec<f64> {
        let t = self.unpack(x);
        self.probes.iter().map(|v| self.rate_scale * self.apply_t(&t, v).iter().map(|z| z.norm_sqr()).sum::<f64>()).collect()
    }

    fn apply_t(&self, t: &[C64], v: &[C64]) -> Vec<C64> {
        let d = self.dim;
        (0..d)
            .map(|r| {
                let row = &t[r * d..r * d + r + 1];
                row.iter().zip(&v[..=r]).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Objective evaluated directly at `X = T†T` (row-major), without
    /// factoring; works for singular `X`.
    pub fn value_at_gram(&self, gram: &[C64]) -> f64 {
        let d = self.dim;
        self.probes
            .iter()
            .zip(&self.counts)
            .map(|(v, &n)| {
                let mut q = c(0.0, 0.0);
                for a in 0..d {
                    for b in 0..d {
                        q += v[a].conj() * gram[a * d + b] * v[b];
                    }
                }
                self.term(n, self.rate_scale * q.re).0
            })
            .sum()
    }

    /// NLL contribution and its derivative with respect to `μ`.
    fn term(&self, n: f64, mu: f64) -> (f64, f64) {
        match self.kind {
            Likelihood::Poisson => {
                if n > 0.0 {
                    let m = mu.max(MU_FLOOR);
                    (mu - n * m.ln(), 1.0 - n / m)
                } else {
                    (mu, 1.0)
                }
            }
            Likelihood::Gaussian => {
                let var = n.max(1.0);
                ((mu - n).powi(2) / (2.0 * var), (mu - n) / var)
            }
        }
    }
}

impl Objective for CholeskyLikelihood {
    fn dim(&self) -> usize {
        self.n_params()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim;
        let t = self.unpack(x);
        let mut gt = vec![c(0.0, 0.0); d * d];
        let mut f = 0.0;
        for (v, &n) in self.probes.iter().zip(&self.counts) {
            let y = self.apply_t(&t, v);
            let mu = self.rate_scale * y.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let (val, dmu) = self.term(n, mu);
            f += val;
            let w = 2.0 * self.rate_scale * dmu;
            if w == 0.0 {
                continue;
            }
            for r in 0..d {
                let yr = y[r] * w;
                let row = &mut gt[r * d..r * d + r + 1];
                for (g, vc) in row.iter_mut().zip(&v[..=r]) {
                    *g += yr * vc.conj();
                }
            }
        }
        for r in 0..d {
            grad[r] = gt[r * d + r].re;
        }
        let mut k = d;
        for r in 1..d {
            for col in 0..r {
                grad[k] = gt[r * d + col].re;
                grad[k + 1] = gt[r * d + col].im;
                k += 2;
            }
        }
        f
    }
}

fn t_to_gram<const N: usize>(t: &[C64]) -> nalgebra::SMatrix<C64, N, N> {
    let tm = nalgebra::SMatrix::<C64, N, N>::from_row_slice(t);
    tm.adjoint() * tm
}

fn gram_to_t<const N: usize>(m: &nalgebra::SMatrix<C64, N, N>, ridge: f64) -> Vec<C64> {
    let t = lower_factor_tdag_t(m, ridge);
    let mut out = Vec::with_capacity(N * N);
    for r in 0..N {
        for col in 0..N {
            out.push(if col <= r { t[(r, col)] } else { c(0.0, 0.0) });
        }
    }
    // the factor's diagonal is real and positive by construction
    for r in 0..N {
        out[r * N + r] = c(out[r * N + r].re, 0.0);
    }
    out
}

/// State linear inversion output; unphysical estimates are flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearStateEstimate {
    pub state: TwoPhotonState,
    pub physical: bool,
}

fn check_counts(counts: &[f64]) -> Result<()> {
    if counts.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
        return Err(Error::Format("counts must be finite and non-negative".into()));
    }
    Ok(())
}

fn check_rate_scale(rate_scale: f64) -> Result<()> {
    if !(rate_scale > 0.0 && rate_scale.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "rate_scale",
            value: rate_scale,
            reason: "must be positive and finite",
        });
    }
    Ok(())
}

fn inverse_design(set: &TomographicSet) -> Result<Mat16> {
    set.design_matrix()
        .try_inverse()
        .ok_or_else(|| Error::Singular("analyzer design matrix is not invertible".into()))
}

/// Solve `Tr[ρ |ψⱼ⟩⟨ψⱼ|] = nⱼ / rate_scale` for a Hermitian ρ (computational
/// basis).
pub fn linear_invert_state(counts: &[f64; 16], rate_scale: f64, set: &TomographicSet) -> Result<LinearStateEstimate> {
    check_counts(counts)?;
    check_rate_scale(rate_scale)?;
    let inv = inverse_design(set)?;
    let b = crate::linalg::Vec16::from_fn(|j, _| counts[j] / rate_scale);
    let state = TwoPhotonState::from_hermitian(devectorize_matrix(&(inv * b)), Basis::Computational);
    Ok(LinearStateEstimate {
        physical: state.min_eigenvalue() >= -crate::polarization::PSD_TOL,
        state,
    })
}

/// Linear inversion of a full 16-input grid to a superoperator matrix
/// (computational basis). May be unphysical.
pub fn linear_invert_process(
    inputs: &[ProductLabel],
    grid: &[[f64; 16]],
    rate_scale: f64,
    set: &TomographicSet,
) -> Result<SuperMatrix> {
    check_rate_scale(rate_scale)?;
    let rows = select_rows(inputs, grid, set)?;
    let inv = inverse_design(set)?;
    let mut outputs = Mat16::zeros();
    let mut ins = Mat16::zeros();
    for (i, (label, row)) in set.labels().iter().zip(&rows).enumerate() {
        check_counts(row)?;
        let b = crate::linalg::Vec16::from_fn(|j, _| row[j] / rate_scale);
        outputs.set_column(i, &(inv * b));
        ins.set_column(i, &vectorize_matrix(label.state().matrix()));
    }
    let ins_inv = ins
        .try_inverse()
        .ok_or_else(|| Error::Singular("input states are linearly dependent".into()))?;
    Ok(SuperMatrix::new(outputs * ins_inv, Basis::Computational))
}

/// Pick the rows of the grid that correspond to the set's inputs, in set
/// order.
fn select_rows(inputs: &[ProductLabel], grid: &[[f64; 16]], set: &TomographicSet) -> Result<Vec<[f64; 16]>> {
    if inputs.len() != grid.len() {
        return Err(Error::Format("input labels and count rows differ in length".into()));
    }
    set.labels()
        .iter()
        .map(|label| {
            inputs
                .iter()
                .position(|l| l == label)
                .map(|i| grid[i])
                .ok_or_else(|| Error::Underdetermined(format!("no counts for input {label}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateTomoResult {
    /// Estimated (sub-normalized) output state, computational basis.
    pub rho_hat: TwoPhotonState,
    pub neg_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when every count was zero and the zero state was returned.
    pub zero_counts: bool,
}

/// Maximum-likelihood state with `ρ = T†T` (trace free).
pub fn mle_state(counts: &[f64; 16], rate_scale: f64, set: &TomographicSet, opts: &MleOptions) -> Result<StateTomoResult> {
    check_counts(counts)?;
    check_rate_scale(rate_scale)?;
    let objective = state_objective(counts, rate_scale, set, opts.likelihood);
    if counts.iter().all(|&n| n == 0.0) {
        return Ok(StateTomoResult {
            rho_hat: TwoPhotonState::zero(Basis::Computational),
            neg_log_likelihood: 0.0,
            iterations: 0,
            converged: true,
            zero_counts: true,
        });
    }
    let init = linear_invert_state(counts, rate_scale, set)?;
    let x0 = objective.pack(&gram_to_t::<4>(&clip_to_psd(init.state.matrix()), opts.init_ridge));
    let result = minimize(&objective, &x0, &opts.optimizer);
    let rho = t_to_gram::<4>(&objective.unpack(&result.x));
    Ok(StateTomoResult {
        rho_hat: TwoPhotonState::from_hermitian(rho, Basis::Computational),
        neg_log_likelihood: result.value,
        iterations: result.iterations,
        converged: result.converged(),
        zero_counts: false,
    })
}

/// The state likelihood objective, exposed for gradient checks.
pub fn state_objective(counts: &[f64; 16], rate_scale: f64, set: &TomographicSet, kind: Likelihood) -> CholeskyLikelihood {
    let probes = set.kets().iter().map(|k| k.iter().copied().collect()).collect();
    CholeskyLikelihood::new(4, probes, counts.to_vec(), rate_scale, kind)
}

/// The process likelihood objective over the set's 16 inputs.
pub fn process_objective(
    inputs: &[ProductLabel],
    grid: &[[f64; 16]],
    rate_scale: f64,
    set: &TomographicSet,
    kind: Likelihood,
) -> Result<CholeskyLikelihood> {
    let rows = select_rows(inputs, grid, set)?;
    let analyzers = set.kets();
    let mut probes = Vec::with_capacity(256);
    let mut counts = Vec::with_capacity(256);
    for (label, row) in set.labels().iter().zip(&rows) {
        check_counts(row)?;
        let input_conj: Vec4 = label.ket().map(|z| z.conj());
        for (j, analyzer) in analyzers.iter().enumerate() {
            probes.push(kron4(analyzer, &input_conj).iter().copied().collect());
            counts.push(row[j]);
        }
    }
    Ok(CholeskyLikelihood::new(16, probes, counts, rate_scale, kind))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Absolute scale implied by the rate scale (trace-nonincreasing).
    Raw,
    /// Mixed input passes with trace ¼.
    MixedQuarter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessTomoResult {
    /// Bell basis.
    pub m_hat: SuperMatrix,
    /// Bell basis; `m_hat` is its matrix form.
    pub choi_hat: ChoiMatrix,
    pub neg_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub normalization: Normalization,
    /// Factor applied to restore trace-nonincreasing, if any.
    pub throughput_rescale: Option<f64>,
}

impl ProcessTomoResult {
    pub fn normalized(&self) -> Result<SuperMatrix> {
        normalize_superoperator(&self.m_hat)
    }
}

pub fn mle_process(record: &CountRecord, opts: &MleOptions) -> Result<ProcessTomoResult> {
    let set = record.analyzer_set()?;
    let grid: Vec<[f64; 16]> = record.counts.iter().map(|r| r.map(|n| n as f64)).collect();
    mle_process_grid(&record.inputs, &grid, record.rate_scale, &set, opts)
}

/// Completely positive maximum-likelihood process estimate from a grid of
/// (possibly non-integer) counts.
pub fn mle_process_grid(
    inputs: &[ProductLabel],
    grid: &[[f64; 16]],
    rate_scale: f64,
    set: &TomographicSet,
    opts: &MleOptions,
) -> Result<ProcessTomoResult> {
    check_rate_scale(rate_scale)?;
    let objective = process_objective(inputs, grid, rate_scale, set, opts.likelihood)?;
    let linear = linear_invert_process(inputs, grid, rate_scale, set)?;
    let init = clip_to_psd(linear.to_choi().matrix());
    let x0 = objective.pack(&gram_to_t::<16>(&init, opts.init_ridge));
    let result = minimize(&objective, &x0, &opts.optimizer);
    let mut choi = ChoiMatrix::new(t_to_gram::<16>(&objective.unpack(&result.x)), Basis::Computational);
    let throughput = choi.max_throughput();
    let throughput_rescale = if throughput > 1.0 + 1e-6 {
        choi = choi.scaled(1.0 / throughput);
        Some(1.0 / throughput)
    } else {
        None
    };
    let choi_hat = choi.in_basis(Basis::Bell);
    Ok(ProcessTomoResult {
        m_hat: choi_hat.to_matrix(),
        choi_hat,
        neg_log_likelihood: result.value,
        iterations: result.iterations,
        converged: result.converged(),
        normalization: Normalization::Raw,
        throughput_rescale,
    })
}

/// Rescale so the completely mixed input yields trace ¼.
pub fn normalize_superoperator(e: &SuperMatrix) -> Result<SuperMatrix> {
    let tr = e.apply(&TwoPhotonState::maximally_mixed(e.basis()))?.trace();
    if !(tr > 1e-15) {
        return Err(Error::Degenerate(format!("mixed input passes with trace {tr:e}")));
    }
    Ok(e.scaled(0.25 / tr))
}

/// Negative log-likelihood of a given Choi matrix (any basis) on a grid,
/// with the same objective the reconstruction minimizes.
pub fn process_nll(
    choi: &ChoiMatrix,
    inputs: &[ProductLabel],
    grid: &[[f64; 16]],
    rate_scale: f64,
    set: &TomographicSet,
    kind: Likelihood,
) -> Result<f64> {
    let objective = process_objective(inputs, grid, rate_scale, set, kind)?;
    let comp: CMat16 = *choi.in_basis(Basis::Computational).matrix();
    Ok(objective.value_at_gram(comp.transpose().as_slice()))
}

/// Something a bootstrap replica produces.
pub trait Replica {
    /// The entries whose spread is reported.
    fn entries(&self) -> Result<Vec<f64>>;
    fn converged(&self) -> bool;
}

impl Replica for ProcessTomoResult {
    /// Normalized Bell-basis M, row-major.
    fn entries(&self) -> Result<Vec<f64>> {
        Ok(self.normalized()?.matrix().transpose().iter().copied().collect())
    }

    fn converged(&self) -> bool {
        self.converged
    }
}

impl Replica for StateTomoResult {
    /// RhoVector of the normalized state.
    fn entries(&self) -> Result<Vec<f64>> {
        Ok(self.rho_hat.normalized()?.vectorize().entries().iter().copied().collect())
    }

    fn converged(&self) -> bool {
        self.converged
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapEnsemble<R> {
    pub replicas: Vec<R>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub seed: u64,
    pub requested: usize,
    pub failures: usize,
    /// More than 20% of replicas failed.
    pub unreliable: bool,
}

/// Serializable summary of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub seed: u64,
    pub requested: usize,
    pub succeeded: usize,
    pub failures: usize,
    pub unreliable: bool,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl<R> BootstrapEnsemble<R> {
    pub fn summary(&self) -> EnsembleSummary {
        EnsembleSummary {
            seed: self.seed,
            requested: self.requested,
            succeeded: self.requested - self.failures,
            failures: self.failures,
            unreliable: self.unreliable,
            mean: self.mean.clone(),
            std: self.std.clone(),
        }
    }
}

/// Poisson bootstrap: every count `n` is redrawn from Poisson(n) and the
/// reconstructor rerun. Replica `r` uses sub-seed `derive_seed(seed, r)`.
/// Replicas run in parallel; results are collected in replica order.
pub fn bootstrap<R, F>(record: &CountRecord, n_replicas: usize, seed: u64, reconstructor: F) -> Result<BootstrapEnsemble<R>>
where
    R: Replica + Send,
    F: Fn(&CountRecord) -> Result<R> + Sync,
{
    if n_replicas < 2 {
        return Err(Error::InvalidParameter {
            name: "n_replicas",
            value: n_replicas as f64,
            reason: "need at least 2 replicas",
        });
    }
    let outcomes: Vec<Option<(R, Vec<f64>)>> = (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let resampled = record.poisson_resample(derive_seed(seed, r as u64));
            let rep = reconstructor(&resampled).ok()?;
            if !rep.converged() {
                return None;
            }
            let entries = rep.entries().ok()?;
            Some((rep, entries))
        })
        .collect();
    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    let kept: Vec<(R, Vec<f64>)> = outcomes.into_iter().flatten().collect();
    if kept.len() < 2 {
        return Err(Error::Degenerate(format!("only {} of {n_replicas} bootstrap replicas succeeded", kept.len())));
    }
    let width = kept[0].1.len();
    let count = kept.len() as f64;
    let mut mean = vec![0.0; width];
    for (_, e) in &kept {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v / count;
        }
    }
    let mut std = vec![0.0; width];
    for (_, e) in &kept {
        for ((s, v), m) in std.iter_mut().zip(e).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / (count - 1.0)).sqrt());
    Ok(BootstrapEnsemble {
        replicas: kept.into_iter().map(|(r, _)| r).collect(),
        mean,
        std,
        seed,
        requested: n_replicas,
        failures,
        unreliable: failures as f64 > 0.2 * n_replicas as f64,
    })
}

/// Predicted (normalized) output of a held-out input under a process.
pub fn predict_output(e: &SuperMatrix, input: ProductLabel) -> Result<TwoPhotonState> {
    e.apply(&input.state().in_basis(e.basis()))?.normalized()
}

/// Fidelity between the predicted output of a held-out input and its
/// state-MLE reconstruction from the record's counts for that input.
pub fn holdout_fidelity(e: &SuperMatrix, record: &CountRecord, input: ProductLabel, opts: &MleOptions) -> Result<f64> {
    let row = record
        .row_f64(input)
        .ok_or_else(|| Error::Underdetermined(format!("record has no counts for held-out input {input}")))?;
    let set = record.analyzer_set()?;
    let measured = mle_state(&row, record.rate_scale, &set, opts)?.rho_hat.normalized()?;
    let predicted = predict_output(e, input)?;
    crate::metrics::fidelity(&predicted, &measured)
}
