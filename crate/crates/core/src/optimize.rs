//! Limited-memory BFGS with a backtracking Armijo line search.
//!
//! Every accepted step strictly decreases the objective, so the recorded
//! value trace is monotone.

use std::collections::VecDeque;

/// A smooth objective with analytic gradient.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Returns the value and writes the gradient into `grad`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub max_iterations: usize,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step changes the value by less than
    /// `rel_tol · max(|f|, 1)`.
    pub rel_tol: f64,
    pub memory: usize,
    pub record_history: bool,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            grad_tol: 1e-8,
            rel_tol: 1e-12,
            memory: 12,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    RelativeChange,
    /// No step along the search direction decreased the value: the
    /// iterate sits at the floating-point resolution of the objective.
    LineSearchStall,
    IterationCap,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub reason: StopReason,
    pub history: Vec<f64>,
}

impl OptimResult {
    pub fn converged(&self) -> bool {
        !matches!(self.reason, StopReason::IterationCap)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn minimize<O: Objective + ?Sized>(obj: &O, x0: &[f64], opts: &LbfgsOptions) -> OptimResult {
    let n = obj.dim();
    assert_eq!(x0.len(), n, "initial point has wrong dimension");
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj.value_grad(&x, &mut g);
    let mut history = Vec::new();
    if opts.record_history {
        history.push(f);
    }
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;

    let reason = loop {
        let gnorm = norm(&g);
        if gnorm < opts.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break StopReason::IterationCap;
        }

        let mut d = two_loop(&g, &pairs);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if pairs.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let f_try = obj.value_grad(&x_new, &mut g_new);
            if f_try.is_finite() && f_try <= f + 1e-4 * step * slope && f_try < f {
                accepted = Some(f_try);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            break StopReason::LineSearchStall;
        };
        iterations += 1;

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }

        let change = f - f_new;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        if opts.record_history {
            history.push(f);
        }
        if change <= opts.rel_tol * f.abs().max(1.0) {
            break StopReason::RelativeChange;
        }
    };

    OptimResult {
        grad_norm: norm(&g),
        x,
        value: f,
        iterations,
        reason,
        history,
    }
}

fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
