//! Damped Newton ascent for the smooth concave objectives used by the exact
//! MLE, pseudo-likelihood and composite likelihood.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Solves `(h + ridge·I) x = rhs` for symmetric positive-definite `h`.
pub fn solve_spd(h: &DMatrix<f64>, rhs: &[f64], ridge: f64) -> Option<Vec<f64>> {
    let d = rhs.len();
    let mut a = h.clone();
    for i in 0..d {
        a[(i, i)] += ridge;
    }
    let chol = a.cholesky()?;
    let x = chol.solve(&DVector::from_column_slice(rhs));
    x.iter().all(|v| v.is_finite()).then(|| x.iter().copied().collect())
}

/// Solves with escalating ridge until the system is positive definite.
pub fn solve_regularised(h: &DMatrix<f64>, rhs: &[f64], base_ridge: f64) -> Option<Vec<f64>> {
    let d = rhs.len().max(1) as f64;
    let scale = (h.trace().abs() / d).max(1e-300);
    let mut ridge = base_ridge;
    for _ in 0..12 {
        if let Some(x) = solve_spd(h, rhs, ridge) {
            return Some(x);
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 100.0 };
    }
    None
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `step` so its Euclidean norm is at most `cap`.
pub(crate) fn cap_step(step: &mut [f64], cap: f64) {
    let n = norm2(step);
    if n > cap && n > 0.0 {
        step.iter_mut().for_each(|s| *s *= cap / n);
    }
}

/// Value, gradient and *negated* Hessian (an information matrix) at a point.
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub information: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    pub max_iters: usize,
    /// Stop when `‖gradient‖∞` falls below this.
    pub grad_tol: f64,
    pub max_step: f64,
    /// Declare divergence once `‖x‖∞` exceeds this.
    pub bound: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iters: 200,
            grad_tol: 1e-10,
            max_step: 10.0,
            bound: 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NewtonStatus {
    Converged,
    MaxIters,
    /// Iterates ran off to infinity: the optimum is on the boundary.
    Diverged,
    /// No ascent direction could be found before the gradient vanished.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub status: NewtonStatus,
    pub grad_norm: f64,
    /// `(x, ‖gradient‖∞)` per iteration, starting point included.
    pub trace: Vec<(Vec<f64>, f64)>,
}

/// Maximises a concave function with ridge-protected Newton steps and
/// step-halving line search.
pub fn newton_maximize(
    mut f: impl FnMut(&[f64]) -> Result<Evaluation>,
    x0: &[f64],
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    let mut x = x0.to_vec();
    let mut eval = f(&x)?;
    let mut trace = vec![(x.clone(), norm_inf(&eval.gradient))];
    let mut status = NewtonStatus::MaxIters;
    let mut iterations = 0;
    for iter in 0..opts.max_iters {
        let gnorm = norm_inf(&eval.gradient);
        if gnorm <= opts.grad_tol {
            status = NewtonStatus::Converged;
            break;
        }
        iterations = iter + 1;
        let mut step = match solve_regularised(&eval.information, &eval.gradient, 0.0) {
            Some(s) => s,
            None => eval.gradient.clone(),
        };
        cap_step(&mut step, opts.max_step);

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let e = f(&trial)?;
            let slack = 1e-13 * (1.0 + eval.value.abs());
            if e.value.is_finite() && e.value >= eval.value - slack {
                accepted = Some((trial, e));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, e)) => {
                x = trial;
                eval = e;
            }
            None => {
                status = NewtonStatus::Stalled;
                break;
            }
        }
        trace.push((x.clone(), norm_inf(&eval.gradient)));
        if norm_inf(&x) > opts.bound {
            status = NewtonStatus::Diverged;
            break;
        }
    }
    if status == NewtonStatus::MaxIters && norm_inf(&eval.gradient) <= opts.grad_tol {
        status = NewtonStatus::Converged;
    }
    Ok(NewtonOutcome {
        grad_norm: norm_inf(&eval.gradient),
        x,
        iterations,
        status,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximises_a_quadratic_in_one_step() {
        let target = [1.5, -2.0];
        let f = |x: &[f64]| -> Result<Evaluation> {
            let g: Vec<f64> = x.iter().zip(&target).map(|(a, t)| 2.0 * (t - a)).collect();
            let v = -x.iter().zip(&target).map(|(a, t)| (a - t).powi(2)).sum::<f64>();
            Ok(Evaluation {
                value: v,
                gradient: g,
                information: DMatrix::identity(2, 2) * 2.0,
            })
        };
        let out = newton_maximize(f, &[0.0, 0.0], &NewtonOptions::default()).unwrap();
        assert_eq!(out.status, NewtonStatus::Converged);
        assert!(out.iterations <= 1);
        assert!((out.x[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn detects_divergence_on_unbounded_objective() {
        // log-sigmoid has its supremum at +∞
        let f = |x: &[f64]| -> Result<Evaluation> {
            let p = crate::family::logistic(x[0]);
            Ok(Evaluation {
                value: p.ln(),
                gradient: vec![1.0 - p],
                information: DMatrix::from_element(1, 1, p * (1.0 - p)),
            })
        };
        let opts = NewtonOptions {
            bound: 50.0,
            ..NewtonOptions::default()
        };
        let out = newton_maximize(f, &[0.0], &opts).unwrap();
        assert!(matches!(
            out.status,
            NewtonStatus::Diverged | NewtonStatus::Converged
        ));
        assert!(out.x[0] > 20.0);
    }

    #[test]
    fn ridge_rescues_singular_systems() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(solve_spd(&h, &[1.0, 1.0], 0.0).is_none());
        assert!(solve_regularised(&h, &[1.0, 1.0], 0.0).is_some());
    }
}
