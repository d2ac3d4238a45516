//! Nonlinear least squares on scalar curves.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on Levenberg–Marquardt iterations.
pub const MAX_ITERATIONS: usize = 200;

/// Result of a curve fit. Standard errors come from the
/// heteroscedasticity-consistent (HC1 sandwich) covariance, so they hold
/// when the noise level varies along the curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub params: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub residual_rms: f64,
    pub evaluations: usize,
}

/// A model `y(x; p)` that also fills `∂y/∂p`.
pub trait Model {
    fn eval(&self, x: f64, p: &[f64], grad: &mut [f64]) -> f64;
}

impl<F: Fn(f64, &[f64], &mut [f64]) -> f64> Model for F {
    fn eval(&self, x: f64, p: &[f64], grad: &mut [f64]) -> f64 {
        self(x, p, grad)
    }
}

struct Problem<'a, M> {
    x: &'a [f64],
    y: &'a [f64],
    p: DVector<f64>,
    model: &'a M,
}

impl<M: Model> Problem<'_, M> {
    fn residuals_and_jacobian(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.p.len();
        let mut r = DVector::zeros(self.x.len());
        let mut j = DMatrix::zeros(self.x.len(), n);
        let mut g = vec![0.0; n];
        for (i, (&x, &y)) in self.x.iter().zip(self.y).enumerate() {
            r[i] = self.model.eval(x, self.p.as_slice(), &mut g) - y;
            for k in 0..n {
                j[(i, k)] = g[k];
            }
        }
        (r, j)
    }
}

impl<M: Model> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, M> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, p: &DVector<f64>) {
        self.p.copy_from(p);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = self.residuals_and_jacobian().0;
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let j = self.residuals_and_jacobian().1;
        j.iter().all(|v| v.is_finite()).then_some(j)
    }
}

/// Fits `model` to `(x, y)` starting from `p0`.
pub fn curve_fit<M: Model>(model: &M, x: &[f64], y: &[f64], p0: &[f64]) -> Result<FitOutcome> {
    let n = p0.len();
    if x.len() != y.len() {
        return Err(Error::Input(format!("x has {} values but y has {}", x.len(), y.len())));
    }
    if x.len() <= n {
        return Err(Error::Fit(format!("{} points cannot constrain {n} parameters", x.len())));
    }
    let problem = Problem { x, y, p: DVector::from_column_slice(p0), model };
    let (problem, report) = LevenbergMarquardt::new()
        .with_ftol(1e-14)
        .with_xtol(1e-14)
        .with_gtol(0.0)
        .with_patience(MAX_ITERATIONS)
        .minimize(problem);
    let (r, j) = problem.residuals_and_jacobian();
    let ssr = r.norm_squared();
    let rms = (ssr / x.len() as f64).sqrt();
    if !report.termination.was_successful() {
        return Err(Error::Fit(format!(
            "no convergence after {} evaluations ({:?}); last residual rms {rms:.3e}",
            report.number_of_evaluations, report.termination
        )));
    }
    let dof = (x.len() - n) as f64;
    let sigmas = match (j.transpose() * &j).try_inverse() {
        Some(bread) => {
            let mut jr = j.clone();
            for (mut row, ri) in jr.row_iter_mut().zip(r.iter()) {
                row *= *ri;
            }
            let meat = jr.transpose() * jr;
            let cov = &bread * meat * &bread * (x.len() as f64 / dof);
            (0..n).map(|k| cov[(k, k)].max(0.0).sqrt()).collect()
        }
        None => vec![f64::INFINITY; n],
    };
    Ok(FitOutcome {
        params: problem.p.iter().copied().collect(),
        sigmas,
        residual_rms: rms,
        evaluations: report.number_of_evaluations,
    })
}
