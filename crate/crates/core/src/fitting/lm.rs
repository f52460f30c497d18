//! Bounded Levenberg-Marquardt with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Two-sided 95% quantile of the standard normal.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative step tolerance on the parameter vector.
    pub xtol: f64,
    /// Relative reduction of the objective below which the fit stops; 0 disables.
    pub ftol: f64,
    /// Scaled gradient tolerance.
    pub gtol: f64,
    /// Relative finite-difference step.
    pub diff_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            xtol: 1e-12,
            ftol: 0.0,
            gtol: 1e-12,
            diff_step: 6e-6,
        }
    }
}

/// One fitted quantity: value, box constraint, and whether it is varied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounded {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub free: bool,
}

impl Bounded {
    pub fn free(value: f64, lower: f64, upper: f64) -> Self {
        Bounded {
            value,
            lower,
            upper,
            free: true,
        }
    }

    pub fn fixed(value: f64) -> Self {
        Bounded {
            value,
            lower: value,
            upper: value,
            free: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    /// Full parameter vector, fixed entries included.
    pub best_fit: Vec<f64>,
    /// `√(Σ w (y − f)²)` at the optimum.
    pub residual_norm: f64,
    /// 95% half-widths; `None` where the normal matrix is singular, `0` for fixed entries.
    pub ci95: Vec<Option<f64>>,
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after each accepted step, starting from the initial guess.
    pub history: Vec<f64>,
}

/// Weighted residual system `√w (y − f(θ))` over the free parameters.
struct System<'a, F> {
    model: &'a F,
    y: &'a [f64],
    sqrt_w: Vec<f64>,
    full: Vec<f64>,
    free: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a, F> System<'a, F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    fn expand(&self, p: &[f64]) -> Vec<f64> {
        let mut theta = self.full.clone();
        for (k, &j) in self.free.iter().enumerate() {
            theta[j] = p[k];
        }
        theta
    }

    fn clamp(&self, p: &mut [f64]) {
        for (k, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
    }

    fn predict(&self, p: &[f64]) -> Result<Vec<f64>> {
        let f = (self.model)(&self.expand(p))?;
        if f.len() != self.y.len() {
            return Err(Error::Fit(format!(
                "model returned {} values for {} data points",
                f.len(),
                self.y.len()
            )));
        }
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::Fit(format!(
                "model value at data point {i} is not finite"
            )));
        }
        Ok(f)
    }

    /// Model values and weighted residuals at `p`.
    fn evaluate(&self, p: &[f64]) -> Result<(Vec<f64>, DVector<f64>)> {
        let f = self.predict(p)?;
        let r = DVector::from_iterator(
            f.len(),
            f.iter()
                .zip(self.y)
                .zip(&self.sqrt_w)
                .map(|((f, y), w)| w * (y - f)),
        );
        Ok((f, r))
    }

    fn step(&self, p: &[f64], k: usize, rel: f64) -> f64 {
        let width = self.upper[k] - self.lower[k];
        let scale = if p[k] != 0.0 {
            p[k].abs()
        } else if width.is_finite() {
            1e-3 * width
        } else {
            1.0
        };
        rel * scale
    }

    /// Derivative of the weighted model values with respect to free
    /// parameter `k`: central where both sides fit inside the box,
    /// otherwise a three-point one-sided formula pointing inward.
    fn column(&self, p: &[f64], f0: &[f64], k: usize, h: f64) -> Result<Vec<f64>> {
        let shifted = |d: f64| {
            let mut q = p.to_vec();
            q[k] += d;
            self.predict(&q)
        };
        let col: Vec<f64> = if p[k] + h <= self.upper[k] && p[k] - h >= self.lower[k] {
            let (fp, fm) = (shifted(h)?, shifted(-h)?);
            fp.iter()
                .zip(&fm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect()
        } else {
            let s = if p[k] + 2.0 * h <= self.upper[k] {
                h
            } else {
                -h
            };
            let (f1, f2) = (shifted(s)?, shifted(2.0 * s)?);
            f0.iter()
                .zip(&f1)
                .zip(&f2)
                .map(|((a, b), c)| (-3.0 * a + 4.0 * b - c) / (2.0 * s))
                .collect()
        };
        Ok(col.iter().zip(&self.sqrt_w).map(|(d, w)| w * d).collect())
    }

    /// Jacobian of the weighted model values (columns evaluated in parallel).
    fn jacobian(&self, p: &[f64], f0: &[f64], rel: f64) -> Result<DMatrix<f64>> {
        let cols = (0..p.len())
            .into_par_iter()
            .map(|k| self.column(p, f0, k, self.step(p, k, rel)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.y.len(), p.len(), |i, k| cols[k][i]))
    }
}

fn check_inputs(y: &[f64], weights: &[f64], params: &[Bounded]) -> Result<()> {
    let free = params.iter().filter(|p| p.free).count();
    if weights.len() != y.len() {
        return Err(Error::Fit(format!(
            "{} weights for {} data points",
            weights.len(),
            y.len()
        )));
    }
    if y.len() < 2 * free {
        return Err(Error::Fit(format!(
            "{} data points cannot constrain {free} free parameters (need at least {})",
            y.len(),
            2 * free
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Fit(format!("data value {i} is not finite")));
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Fit(format!("weight {i} must be finite and > 0")));
    }
    for (i, p) in params.iter().enumerate() {
        if !p.value.is_finite() || p.lower.is_nan() || p.upper.is_nan() {
            return Err(Error::Fit(format!(
                "parameter {i} has a non-finite guess or NaN bound"
            )));
        }
        if p.free && !(p.lower <= p.value && p.value <= p.upper) {
            return Err(Error::Fit(format!(
                "parameter {i}: guess {} lies outside [{}, {}]",
                p.value, p.lower, p.upper
            )));
        }
    }
    Ok(())
}

/// Minimizes `Σ w_i (y_i − f_i(θ))²` over the free entries of `params`.
///
/// `model` maps the full parameter vector to predictions for every data
/// point. Exhausting the iteration budget is not an error: the best point
/// found is returned with `converged = false`.
pub fn least_squares<F>(
    model: &F,
    y: &[f64],
    weights: &[f64],
    params: &[Bounded],
    options: &LmOptions,
) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    check_inputs(y, weights, params)?;
    let free: Vec<usize> = (0..params.len()).filter(|&j| params[j].free).collect();
    let sys = System {
        model,
        y,
        sqrt_w: weights.iter().map(|w| w.sqrt()).collect(),
        full: params.iter().map(|p| p.value).collect(),
        lower: free.iter().map(|&j| params[j].lower).collect(),
        upper: free.iter().map(|&j| params[j].upper).collect(),
        free,
    };
    let mut p: Vec<f64> = sys.free.iter().map(|&j| params[j].value).collect();
    let (mut f, mut r) = sys.evaluate(&p)?;
    // Jacobian at the current `p`, dropped whenever `p` moves
    let mut jacobian: Option<DMatrix<f64>> = None;
    let mut cost = r.norm_squared();
    let mut history = vec![cost];
    let mut converged = p.is_empty() || cost == 0.0;
    let mut iterations = 0;
    let mut mu = 0.0;
    let mut nu = 2.0;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        if jacobian.is_none() {
            jacobian = Some(sys.jacobian(&p, &f, options.diff_step)?);
        }
        let j = jacobian.as_ref().expect("just filled");
        // r = √w (y − f), so ∂r/∂p = −J and the gradient of |r|² is −2 Jᵀr
        let a = j.transpose() * j;
        let g = j.transpose() * &r;
        let diag: Vec<f64> = (0..p.len())
            .map(|k| a[(k, k)].max(f64::MIN_POSITIVE))
            .collect();
        let scaled_gradient = (0..p.len())
            .map(|k| g[k].abs() / (diag[k] * cost).sqrt().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        if scaled_gradient <= options.gtol {
            converged = true;
            break;
        }
        if mu == 0.0 {
            mu = 1e-3 * diag.iter().cloned().fold(0.0, f64::max);
        }

        let mut accepted = false;
        while !accepted {
            let mut damped = a.clone();
            for k in 0..p.len() {
                damped[(k, k)] += mu * diag[k];
            }
            let delta = match damped.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => {
                    mu *= nu;
                    nu *= 2.0;
                    if mu > 1e300 {
                        break;
                    }
                    continue;
                }
            };
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            sys.clamp(&mut trial);
            let step = DVector::from_iterator(p.len(), trial.iter().zip(&p).map(|(a, b)| a - b));
            if step
                .iter()
                .zip(&p)
                .all(|(d, v)| d.abs() <= options.xtol * (v.abs() + options.xtol))
            {
                converged = true;
                break;
            }
            let predicted = 2.0 * g.dot(&step) - (&a * &step).dot(&step);
            let outcome = sys.evaluate(&trial).map(|(ft, rt)| {
                let c = rt.norm_squared();
                (ft, rt, c)
            });
            match outcome {
                Ok((ft, rt, trial_cost)) if trial_cost < cost && predicted > 0.0 => {
                    let rho = (cost - trial_cost) / predicted;
                    let reduction = (cost - trial_cost) / cost;
                    p = trial;
                    jacobian = None;
                    f = ft;
                    r = rt;
                    cost = trial_cost;
                    history.push(cost);
                    mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                    nu = 2.0;
                    accepted = true;
                    if reduction <= options.ftol || cost == 0.0 {
                        converged = true;
                    }
                }
                _ => {
                    mu *= nu;
                    nu *= 2.0;
                    if mu > 1e300 {
                        break;
                    }
                }
            }
        }
        if !accepted && !converged {
            // no downhill step exists at any damping: a stationary point
            converged = true;
        }
    }

    let (ci95, covariance) = uncertainty(&sys, &p, &f, jacobian, cost, options)?;
    Ok(FitResult {
        best_fit: sys.expand(&p),
        residual_norm: cost.sqrt(),
        ci95,
        covariance,
        converged,
        iterations,
        history,
    })
}

const SINGULAR_RATIO: f64 = 1e-12;

type Uncertainty = (Vec<Option<f64>>, Vec<Vec<f64>>);

/// Linearized covariance `s² (JᵀWJ)⁻¹` with `s² = cost / (m − k)`.
fn uncertainty<F>(
    sys: &System<'_, F>,
    p: &[f64],
    f: &[f64],
    jacobian: Option<DMatrix<f64>>,
    cost: f64,
    options: &LmOptions,
) -> Result<Uncertainty>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let n = sys.full.len();
    let mut covariance = vec![vec![0.0; n]; n];
    let mut ci95 = vec![Some(0.0); n];
    if p.is_empty() {
        return Ok((ci95, covariance));
    }
    let j = match jacobian {
        Some(j) => j,
        None => sys.jacobian(p, f, options.diff_step)?,
    };
    let a = j.transpose() * &j;
    let dof = (sys.y.len() - p.len()).max(1) as f64;
    let s2 = cost / dof;

    let eig = SymmetricEigen::new(a);
    let largest = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let k = p.len();
    let mut inverse = DMatrix::<f64>::zeros(k, k);
    let mut unavailable = vec![false; k];
    for m in 0..k {
        let lambda = eig.eigenvalues[m];
        let v = eig.eigenvectors.column(m);
        if largest > 0.0 && lambda > SINGULAR_RATIO * largest {
            inverse += v * v.transpose() / lambda;
        } else {
            for (i, flag) in unavailable.iter_mut().enumerate() {
                if v[i].abs() > 1e-6 {
                    *flag = true;
                }
            }
        }
    }
    for (a, &ja) in sys.free.iter().enumerate() {
        for (b, &jb) in sys.free.iter().enumerate() {
            covariance[ja][jb] = 0.5 * s2 * (inverse[(a, b)] + inverse[(b, a)]);
        }
        ci95[ja] = if unavailable[a] {
            None
        } else {
            Some(Z95 * covariance[ja][ja].max(0.0).sqrt())
        };
    }
    Ok((ci95, covariance))
}

/// `|J(h) − J(h/2)| / |J(h/2) − J(h/4)|` for one Jacobian entry; close to
/// 4 where the central difference is in its O(h²) regime.
pub fn richardson_ratio<F>(
    model: &F,
    theta: &[f64],
    param: usize,
    point: usize,
    h: f64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let derivative = |h: f64| -> Result<f64> {
        let mut up = theta.to_vec();
        let mut down = theta.to_vec();
        up[param] += h;
        down[param] -= h;
        Ok((model(&up)?[point] - model(&down)?[point]) / (2.0 * h))
    };
    let (d1, d2, d4) = (derivative(h)?, derivative(h / 2.0)?, derivative(h / 4.0)?);
    Ok((d1 - d2).abs() / (d2 - d4).abs())
}
