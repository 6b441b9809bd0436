use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bellfilter::hom_sim::{self, derive_seed, expected_rates, simulate_inputs, CountRecord, FilterModel, Preset};
use bellfilter::io::{read_counts, read_json, write_counts, write_json};
use bellfilter::metrics::{concurrence, linear_entropy, FilterReport};
use bellfilter::pipeline::{diagnose, diagnose_and_repair};
use bellfilter::polarization::{Basis, ProductLabel, TomographicSet, TwoPhotonState};
use bellfilter::superop::{LeadingOperatorDiagnostic, SuperMatrix, Superoperator};
use bellfilter::tomography::{bootstrap, holdout_fidelity, mle_process, mle_state, EnsembleSummary, MleOptions, Normalization};
use bellfilter::Error;

use crate::{DiagnoseRepairArgs, Failure, SimulateArgs, TomoProcessArgs, TomoStateArgs};

const DEFAULT_PRESET: &str = "paper-like";
const DEFAULT_PROCESS_REPLICAS: usize = 100;

/// Sub-seed tag for holdout counts, far from the bootstrap replica tags.
pub const HOLDOUT_SEED_TAG: u64 = 1 << 40;

/// Labels of the real 16-vector components: populations, then Re/Im pairs.
fn component_labels() -> Vec<String> {
    let mut out: Vec<String> = (1..=4).map(|i| format!("{i}{i}")).collect();
    for (i, j) in [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)] {
        out.push(format!("Re{i}{j}"));
        out.push(format!("Im{i}{j}"));
    }
    out
}

fn require_path(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf, Failure> {
    p.clone().ok_or_else(|| Failure::Input(format!("missing --{flag}")))
}

fn out_dir(p: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = require_path(p, "out")?;
    fs::create_dir_all(&dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn mle_options(max_iterations: Option<usize>, grad_tol: Option<f64>) -> Result<MleOptions, Failure> {
    let mut opts = MleOptions::default();
    if let Some(n) = max_iterations {
        if n == 0 {
            return Err(Failure::Input("--max-iterations must be positive".into()));
        }
        opts.optimizer.max_iterations = n;
    }
    if let Some(t) = grad_tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::Input("--grad-tol must be positive".into()));
        }
        opts.optimizer.grad_tol = t;
    }
    Ok(opts)
}

fn simple_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn simulate(args: &SimulateArgs) -> Result<String, Failure> {
    let args = args.resolved()?;
    let preset = Preset::by_name(args.preset.as_deref().unwrap_or(DEFAULT_PRESET))?;
    let model = FilterModel {
        phi: args.phi.unwrap_or(preset.model.phi),
        visibility: args.visibility.unwrap_or(preset.model.visibility),
        eta: args.eta.unwrap_or(preset.model.eta),
        splitting_imbalance: args.splitting_imbalance.unwrap_or(preset.model.splitting_imbalance),
    };
    model.validate()?;
    let rate_scale = args.rate_scale.unwrap_or(preset.rate_scale);
    let seed = args.seed.unwrap_or(0);
    let out = out_dir(&args.out)?;

    let record = hom_sim::simulate(&model, &[], rate_scale, seed)?;
    write_counts(&record, &out.join("counts.csv"))?;

    let set = TomographicSet::canonical();
    let rates = expected_rates(&model.superoperator()?, &set, rate_scale)?;
    let rows = rates.inputs.iter().zip(&rates.rates).flat_map(|(input, row)| {
        set.labels()
            .iter()
            .zip(row)
            .map(|(a, r)| vec![input.to_string(), a.to_string(), r.to_string()])
            .collect::<Vec<_>>()
    });
    write_text(&out.join("expected_rates.csv"), &simple_csv(&["input", "analyzer", "rate"], rows))?;

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "preset {} v{}: phi = {:.4} rad, V = {}, eta = {:.6}, imbalance = {}, rate scale = {}, seed = {}",
        preset.name, preset.version, model.phi, model.visibility, model.eta, model.splitting_imbalance, rate_scale, seed
    );
    let _ = writeln!(summary, "{:<6}{:>14}{:>12}", "input", "expected", "counted");
    for ((input, row), counts) in rates.inputs.iter().zip(&rates.rates).zip(&record.counts) {
        let expected: f64 = row.iter().sum();
        let counted: u64 = counts.iter().sum();
        let _ = writeln!(summary, "{:<6}{:>14.1}{:>12}", input.to_string(), expected, counted);
    }

    let holdout = args.holdout.clone().unwrap_or_default();
    if !holdout.is_empty() {
        let holdout_rate = args.holdout_rate_scale.unwrap_or(preset.holdout_rate_scale);
        let held = simulate_inputs(&model, &holdout, holdout_rate, derive_seed(seed, HOLDOUT_SEED_TAG))?;
        write_counts(&held, &out.join("holdout.csv"))?;
        let _ = writeln!(summary, "holdout inputs written at rate scale {holdout_rate}");
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateOutput {
    pub input: ProductLabel,
    pub rate_scale: f64,
    /// Normalized estimate (zero when every count is zero).
    pub state: TwoPhotonState,
    /// Trace of the unnormalized estimate: the pass probability.
    pub raw_trace: f64,
    pub neg_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub zero_counts: bool,
    pub concurrence: Option<f64>,
    pub linear_entropy: Option<f64>,
    pub bootstrap: Option<EnsembleSummary>,
}

pub fn tomo_state(args: &TomoStateArgs) -> Result<String, Failure> {
    let args = args.resolved()?;
    let record = read_counts(&require_path(&args.input, "input")?, args.rate_scale)?;
    let label = match (args.row, record.inputs.as_slice()) {
        (Some(l), _) => l,
        (None, [only]) => *only,
        (None, many) => {
            return Err(Failure::Input(format!(
                "counts file has {} input rows; choose one with --row",
                many.len()
            )))
        }
    };
    let row = record
        .row_f64(label)
        .ok_or_else(|| Failure::Input(format!("no counts for input {label}")))?;
    let set = record.analyzer_set()?;
    let opts = mle_options(args.max_iterations, args.grad_tol)?;
    let out = out_dir(&args.out)?;

    let result = mle_state(&row, record.rate_scale, &set, &opts)?;
    let raw_trace = result.rho_hat.trace();
    let (state, c, sl) = if result.zero_counts {
        (TwoPhotonState::zero(Basis::Computational), None, None)
    } else {
        let s = result.rho_hat.normalized()?;
        (s, Some(concurrence(&s)?), Some(linear_entropy(&s)?))
    };

    let replicas = args.replicas.unwrap_or(0);
    let ensemble = if replicas > 0 && !result.zero_counts {
        let single = CountRecord {
            inputs: vec![label],
            counts: vec![*record.row(label).expect("row checked above")],
            ..record.clone()
        };
        let seed = args.seed.unwrap_or(record.seed);
        let e = bootstrap(&single, replicas, seed, |r| mle_state(&r.row_f64(label).expect("single row"), r.rate_scale, &set, &opts))?;
        Some(e.summary())
    } else {
        None
    };

    let output = StateOutput {
        input: label,
        rate_scale: record.rate_scale,
        state,
        raw_trace,
        neg_log_likelihood: result.neg_log_likelihood,
        iterations: result.iterations,
        converged: result.converged,
        zero_counts: result.zero_counts,
        concurrence: c,
        linear_entropy: sl,
        bootstrap: ensemble.clone(),
    };
    write_json(&out.join("state.json"), &output)?;

    let basis_labels = ["HH", "HV", "VH", "VV"];
    let m = state.matrix();
    let bars = (0..4).flat_map(|i| {
        (0..4)
            .map(|j| {
                let z = m[(i, j)];
                vec![basis_labels[i].to_string(), basis_labels[j].to_string(), z.re.to_string(), z.im.to_string()]
            })
            .collect::<Vec<_>>()
    });
    write_text(&out.join("state_bars.csv"), &simple_csv(&["row", "col", "re", "im"], bars))?;

    let mut summary = String::new();
    let _ = writeln!(summary, "input {label}: {} iterations, converged = {}", result.iterations, result.converged);
    if result.zero_counts {
        let _ = writeln!(summary, "warning: every count is zero; returning the zero state");
    } else {
        let _ = writeln!(summary, "pass probability {raw_trace:.4}");
        let _ = writeln!(summary, "concurrence {:.4}", c.unwrap_or(0.0));
        let _ = writeln!(summary, "linear entropy {:.4}", sl.unwrap_or(0.0));
    }
    if let Some(e) = &ensemble {
        let _ = writeln!(summary, "bootstrap: {} of {} replicas", e.succeeded, e.requested);
    }
    if !result.converged {
        return Err(Failure::NotConverged {
            message: "state reconstruction hit the iteration cap".into(),
            summary,
        });
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutResult {
    pub input: ProductLabel,
    pub fidelity: f64,
}

/// Everything `tomo-process` writes to `process.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessOutput {
    pub normalization: Normalization,
    /// Normalized superoperator matrix (Bell basis).
    pub process: Superoperator,
    /// Its Choi matrix.
    pub choi: Superoperator,
    pub kraus_weights: Vec<f64>,
    pub neg_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub throughput_rescale: Option<f64>,
    pub bootstrap: Option<EnsembleSummary>,
    pub holdout: Vec<HoldoutResult>,
}

fn holdout_record(args: &TomoProcessArgs, input: &Path, record: &CountRecord) -> Result<CountRecord, Failure> {
    if let Some(p) = &args.holdout_input {
        return Ok(read_counts(p, None)?);
    }
    let sibling = input.with_file_name("holdout.csv");
    if sibling.exists() {
        return Ok(read_counts(&sibling, None)?);
    }
    Ok(record.clone())
}

pub fn tomo_process(args: &TomoProcessArgs) -> Result<String, Failure> {
    let args = args.resolved()?;
    let input = require_path(&args.input, "input")?;
    let record = read_counts(&input, args.rate_scale)?;
    let holdout = args.holdout.clone().unwrap_or_default();
    // Held-out rows never enter the fit.
    let mut fit = record.clone();
    let keep: Vec<bool> = fit.inputs.iter().map(|l| !holdout.contains(l)).collect();
    fit.inputs = fit.inputs.iter().zip(&keep).filter(|(_, &k)| k).map(|(l, _)| *l).collect();
    fit.counts = fit.counts.iter().zip(&keep).filter(|(_, &k)| k).map(|(c, _)| *c).collect();

    let opts = mle_options(args.max_iterations, args.grad_tol)?;
    let out = out_dir(&args.out)?;

    let result = mle_process(&fit, &opts)?;
    let m = result.normalized()?;
    let kraus = m.to_choi().to_kraus()?;

    let replicas = args.replicas.unwrap_or(DEFAULT_PROCESS_REPLICAS);
    let ensemble = if replicas > 0 {
        let seed = args.seed.unwrap_or(record.seed);
        Some(bootstrap(&fit, replicas, seed, |r| mle_process(r, &opts))?.summary())
    } else {
        None
    };

    let mut holdout_results = Vec::new();
    if !holdout.is_empty() {
        let held = holdout_record(&args, &input, &record)?;
        for &label in &holdout {
            let fidelity = holdout_fidelity(&m, &held, label, &opts)?;
            holdout_results.push(HoldoutResult { input: label, fidelity });
        }
    }

    let output = ProcessOutput {
        normalization: Normalization::MixedQuarter,
        process: Superoperator::Matrix(m),
        choi: Superoperator::Choi(m.to_choi()),
        kraus_weights: kraus.weights(),
        neg_log_likelihood: result.neg_log_likelihood,
        iterations: result.iterations,
        converged: result.converged,
        throughput_rescale: result.throughput_rescale,
        bootstrap: ensemble.clone(),
        holdout: holdout_results.clone(),
    };
    write_json(&out.join("process.json"), &output)?;
    write_text(&out.join("m_bars.csv"), &matrix_bars(&m, ensemble.as_ref().map(|e| e.std.as_slice())))?;

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "process fit: {} iterations, converged = {}, NLL = {:.6}",
        result.iterations, result.converged, result.neg_log_likelihood
    );
    let _ = writeln!(summary, "M[1,1] (singlet to singlet) = {:.4}", m.matrix()[(0, 0)]);
    let weights: Vec<String> = kraus.weights().iter().take(4).map(|w| format!("{w:.4}")).collect();
    let _ = writeln!(summary, "leading Kraus weights: {}", weights.join(", "));
    if let Some(e) = &ensemble {
        let _ = writeln!(
            summary,
            "bootstrap: {} of {} replicas, M[1,1] std = {:.4}{}",
            e.succeeded,
            e.requested,
            e.std[0],
            if e.unreliable { " (UNRELIABLE)" } else { "" }
        );
    }
    for h in &holdout_results {
        let _ = writeln!(summary, "holdout {}: fidelity {:.4}", h.input, h.fidelity);
    }
    let unreliable = ensemble.as_ref().is_some_and(|e| e.unreliable);
    if !result.converged || unreliable {
        return Err(Failure::NotConverged {
            message: if result.converged {
                "more than 20% of bootstrap replicas failed".into()
            } else {
                "process reconstruction hit the iteration cap".into()
            },
            summary,
        });
    }
    Ok(summary)
}

fn matrix_bars(m: &SuperMatrix, std: Option<&[f64]>) -> String {
    let labels = component_labels();
    let rows = (0..16).flat_map(|i| {
        let labels = &labels;
        (0..16)
            .map(move |j| {
                let s = std.map_or_else(String::new, |s| s[16 * i + j].to_string());
                vec![labels[i].clone(), labels[j].clone(), m.matrix()[(i, j)].to_string(), s]
            })
            .collect::<Vec<_>>()
    });
    simple_csv(&["row", "col", "value", "std"], rows)
}

/// `repair.json`: the diagnostic, and the prediction when not refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairFile {
    pub refused: bool,
    pub diagnostic: LeadingOperatorDiagnostic,
    pub kraus_weights: Vec<f64>,
    pub shifter_phase: Option<f64>,
    pub report: Option<FilterReport>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ProcessInput {
    Full(Box<ProcessOutput>),
    Bare(Superoperator),
}

pub fn diagnose_repair(args: &DiagnoseRepairArgs) -> Result<String, Failure> {
    let args = args.resolved()?;
    let input = require_path(&args.input, "input")?;
    let process = match read_json::<ProcessInput>(&input)? {
        ProcessInput::Full(p) => p.process.to_matrix(),
        ProcessInput::Bare(s) => s.to_matrix(),
    };
    let out = out_dir(&args.out)?;

    match diagnose_and_repair(&process) {
        Ok(outcome) => {
            let repaired = outcome.repaired.expect("repair returns the repaired process");
            let file = RepairFile {
                refused: false,
                diagnostic: outcome.diagnostic,
                kraus_weights: outcome.kraus_weights.clone(),
                shifter_phase: Some(outcome.shifter_phase),
                report: Some(outcome.report.clone()),
            };
            write_json(&out.join("repair.json"), &file)?;
            write_json(&out.join("repaired_process.json"), &Superoperator::Matrix(repaired))?;
            write_text(&out.join("repaired_bars.csv"), &matrix_bars(&repaired, None))?;
            let mut summary = String::new();
            let d = &outcome.diagnostic;
            let _ = writeln!(
                summary,
                "diagnosed phase {:.4} rad ({:.4} pi); phase shifter set to {:.4} rad",
                d.phase,
                d.phase / std::f64::consts::PI,
                outcome.shifter_phase
            );
            let _ = writeln!(
                summary,
                "leading operator: in-span weight {:.4}, singlet overlap {:.4}, dominance {:.4}",
                d.in_span_weight, d.singlet_overlap, d.dominance
            );
            summary.push_str("predicted repaired filter\n");
            summary.push_str(&outcome.report.to_table());
            Ok(summary)
        }
        Err(Error::NotSingletLike { .. }) => {
            let (kraus, diagnostic) = diagnose(&process)?;
            let file = RepairFile {
                refused: true,
                diagnostic,
                kraus_weights: kraus.weights(),
                shifter_phase: None,
                report: None,
            };
            write_json(&out.join("repair.json"), &file)?;
            let summary = format!(
                "diagnosis refused: in-span weight {:.4}, singlet overlap {:.4}, dominance {:.4}\n",
                diagnostic.in_span_weight, diagnostic.singlet_overlap, diagnostic.dominance
            );
            Err(Failure::Refused {
                message: "the leading Kraus operator is not a twisted-singlet projector".into(),
                summary,
            })
        }
        Err(e) => Err(e.into()),
    }
}
