//! Shared fixed-point engine for the `X ← N[R X R]` likelihood iterations.
//! The variable is a list of PSD blocks; the objective supplies the
//! likelihood, its gradient operator `R` and the normalization.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::linalg::{self, CMatrix};
use crate::state_mle::{MleDiagnostics, MONOTONE_SLACK};

const MAX_DILUTIONS: usize = 30;
const MAX_EXTRAPOLATIONS: usize = 40;
/// Eigenvalues below this fraction of the largest count as outside the support.
const KERNEL_THRESHOLD: f64 = 1e-13;
/// Pruning is attempted every this many iterations.
const PRUNE_EVERY: usize = 10;

pub(crate) struct Evaluation {
    pub log_likelihood: f64,
    pub weights: Vec<f64>,
    pub regularized: usize,
}

pub(crate) trait Objective: Sync {
    fn evaluate(&self, x: &[CMatrix]) -> Evaluation;
    /// `R` blocks at `x`.
    fn gradient(&self, x: &[CMatrix], eval: &Evaluation) -> Vec<CMatrix>;
    /// Maps a PSD point onto the constraint set.
    fn normalize(&self, x: Vec<CMatrix>) -> Vec<CMatrix>;
    /// Lagrange-multiplier blocks `Λ` such that `⟨v|R − Λ|v⟩ ≤ 0` on the
    /// kernel of `x` at an optimum.
    fn multiplier(&self, x: &[CMatrix], grad: &[CMatrix]) -> Vec<CMatrix>;
}

pub(crate) struct Settings {
    pub max_iterations: usize,
    pub tol: f64,
    pub accelerate: bool,
}

type Point = (Vec<CMatrix>, Evaluation);

pub(crate) fn maximize(objective: &impl Objective, start: Vec<CMatrix>, settings: &Settings) -> (Vec<CMatrix>, MleDiagnostics) {
    let mut x = objective.normalize(start);
    let mut eval = objective.evaluate(&x);
    let mut diag = MleDiagnostics {
        iterations_run: 0,
        final_log_likelihood: eval.log_likelihood,
        log_likelihood_trace: vec![eval.log_likelihood],
        converged: false,
        regularized_bins: eval.regularized,
        diluted_steps: 0,
    };
    for _ in 0..settings.max_iterations {
        let r = objective.gradient(&x, &eval);
        let floor = eval.log_likelihood - MONOTONE_SLACK;
        let mut accepted = None;
        {
            let next = objective.normalize(sandwich(&r, &x));
            let e = objective.evaluate(&next);
            if e.log_likelihood >= floor {
                accepted = Some((next, e));
            }
        }
        let point = match accepted {
            Some(found) => found,
            None => {
                // (I + εR) X (I + εR) increases the likelihood for small enough ε
                diag.diluted_steps += 1;
                match dilute(objective, &r, &x, floor) {
                    Some(found) => found,
                    None => {
                        diag.converged = true;
                        break;
                    }
                }
            }
        };
        let point = if settings.accelerate {
            let point = extrapolate(objective, &x, point);
            let point = if diag.iterations_run % PRUNE_EVERY == PRUNE_EVERY - 1 {
                prune(objective, point)
            } else {
                point
            };
            restore(objective, point)
        } else {
            point
        };
        let (next, next_eval) = point;
        let change = (next_eval.log_likelihood - eval.log_likelihood).abs() / eval.log_likelihood.abs().max(1e-300);
        x = next;
        eval = next_eval;
        diag.iterations_run += 1;
        diag.log_likelihood_trace.push(eval.log_likelihood);
        diag.regularized_bins = eval.regularized;
        if change < settings.tol {
            diag.converged = true;
            break;
        }
    }
    diag.final_log_likelihood = eval.log_likelihood;
    (x, diag)
}

fn sandwich(a: &[CMatrix], x: &[CMatrix]) -> Vec<CMatrix> {
    a.iter().zip(x).map(|(a, x)| linalg::hermitian_part(&(a * x * a))).collect()
}

fn dilute(objective: &impl Objective, r: &[CMatrix], x: &[CMatrix], floor: f64) -> Option<Point> {
    let mut eps = 1.0;
    for _ in 0..MAX_DILUTIONS {
        let a: Vec<CMatrix> = r
            .iter()
            .map(|r| CMatrix::identity(r.nrows(), r.ncols()) + r.scale(eps))
            .collect();
        let next = objective.normalize(sandwich(&a, x));
        let e = objective.evaluate(&next);
        if e.log_likelihood >= floor {
            return Some((next, e));
        }
        eps *= 0.5;
    }
    None
}

fn clip(x: &[CMatrix]) -> Vec<CMatrix> {
    x.iter().map(|b| linalg::hermitian_map(b, |v| v.max(0.0))).collect()
}

fn spectra(x: &[CMatrix]) -> Vec<(DVector<f64>, CMatrix)> {
    x.iter().map(linalg::hermitian_eigen).collect()
}

fn top_eigenvalue(spectra: &[(DVector<f64>, CMatrix)]) -> f64 {
    spectra
        .iter()
        .filter(|(v, _)| !v.is_empty())
        .map(|(v, _)| v[v.len() - 1])
        .fold(0.0, f64::max)
}

/// Walks further along `next − prev` with doubling step lengths, clipping
/// negative eigenvalues, and keeps the best point. Near a rank-deficient
/// optimum this lets vanishing eigenvalues reach zero instead of decaying
/// like `1/k`.
fn extrapolate(objective: &impl Objective, prev: &[CMatrix], next: Point) -> Point {
    let dir: Vec<CMatrix> = next.0.iter().zip(prev).map(|(n, p)| n - p).collect();
    let mut best = next;
    let mut t = 2.0;
    for _ in 0..MAX_EXTRAPOLATIONS {
        let moved: Vec<CMatrix> = prev.iter().zip(&dir).map(|(p, d)| p + d.scale(t)).collect();
        let trial = objective.normalize(clip(&moved));
        let e = objective.evaluate(&trial);
        if e.log_likelihood > best.1.log_likelihood {
            best = (trial, e);
            t *= 2.0;
        } else {
            break;
        }
    }
    best
}

/// Tries dropping the spectrum below `τ·λ_max` for decreasing `τ`, keeping
/// the first cut that raises the likelihood.
fn prune(objective: &impl Objective, point: Point) -> Point {
    let spec = spectra(&point.0);
    let top = top_eigenvalue(&spec);
    let mut tau = 0.1;
    while tau > 1e-10 {
        let cut = tau * top;
        if spec.iter().any(|(v, _)| v.iter().any(|&v| v > 0.0 && v < cut)) {
            let trial = objective.normalize(
                spec.iter()
                    .map(|(values, vectors)| {
                        let mut scaled = vectors.clone();
                        for (j, &v) in values.iter().enumerate() {
                            scaled.column_mut(j).scale_mut(if v < cut { 0.0 } else { v });
                        }
                        linalg::hermitian_part(&(scaled * vectors.adjoint()))
                    })
                    .collect(),
            );
            let e = objective.evaluate(&trial);
            if e.log_likelihood > point.1.log_likelihood {
                return (trial, e);
            }
        }
        tau *= 0.1;
    }
    point
}

/// `R X R` cannot repopulate directions outside the support of `X`. If the
/// optimality condition fails on that kernel, mix in the worst violating
/// direction.
fn restore(objective: &impl Objective, point: Point) -> Point {
    let (x, eval) = point;
    let spec = spectra(&x);
    let top = top_eigenvalue(&spec);
    if !(top > 0.0) {
        return (x, eval);
    }
    let mut grad = None;
    let mut worst: Option<(usize, f64, DVector<Complex64>)> = None;
    for (g, (values, vectors)) in spec.iter().enumerate() {
        let kernel_idx: Vec<usize> = (0..values.len()).filter(|&i| values[i] <= KERNEL_THRESHOLD * top).collect();
        if kernel_idx.is_empty() {
            continue;
        }
        let (r, lambda) = grad.get_or_insert_with(|| {
            let r = objective.gradient(&x, &eval);
            let lambda = objective.multiplier(&x, &r);
            (r, lambda)
        });
        let kernel = CMatrix::from_fn(values.len(), kernel_idx.len(), |i, j| vectors[(i, kernel_idx[j])]);
        let restricted = kernel.adjoint() * (&r[g] - &lambda[g]) * &kernel;
        let (mu, u) = linalg::hermitian_eigen(&restricted);
        let last = mu.len() - 1;
        if mu[last] > 1e-9 && worst.as_ref().is_none_or(|w| mu[last] > w.1) {
            worst = Some((g, mu[last], &kernel * u.column(last)));
        }
    }
    let Some((g, _, v)) = worst else {
        return (x, eval);
    };
    let injected = &v * v.adjoint();
    let mut eps = 0.1 * top;
    for _ in 0..MAX_DILUTIONS {
        let mut trial = x.clone();
        trial[g] += injected.scale(eps);
        let trial = objective.normalize(trial);
        let e = objective.evaluate(&trial);
        if e.log_likelihood > eval.log_likelihood {
            return (trial, e);
        }
        eps *= 0.25;
    }
    (x, eval)
}
