//! The Tobit model: data representation, exact log-likelihood, analytic
//! gradient and maximum-likelihood fitting.
//!
//! Observations follow `y = max(0, x'β + ε)` with `ε ~ N(0, σ²)`. A response
//! of exactly zero is censored; anything positive is observed directly.
//!
//! Fitting works in Olsen's parameterisation `δ = β/σ`, `ρ = 1/σ`, where the
//! log-likelihood is globally concave, and runs damped Newton iterations
//! there. Results are always reported back in `(β, σ)`.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::normal;

/// Responses censored at zero together with their design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoredDataset {
    responses: Vec<f64>,
    design: DMatrix<f64>,
    column_names: Vec<String>,
    intercept: bool,
}

impl CensoredDataset {
    /// Builds a dataset from responses and a full design matrix. No column
    /// is treated as an intercept.
    pub fn new(responses: Vec<f64>, design: DMatrix<f64>) -> Result<Self> {
        let names = (0..design.ncols()).map(|j| format!("x{j}")).collect();
        Self::build(responses, design, names, false)
    }

    /// Builds a dataset whose design is `[1 | explanatory]`; column 0 is the
    /// intercept and is named `(intercept)`.
    pub fn with_intercept(
        responses: Vec<f64>,
        explanatory: DMatrix<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        if names.len() != explanatory.ncols() {
            return Err(Error::DimensionMismatch {
                expected: explanatory.ncols(),
                found: names.len(),
            });
        }
        let n = explanatory.nrows();
        let design = DMatrix::from_fn(n, explanatory.ncols() + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                explanatory[(i, j - 1)]
            }
        });
        let mut all = Vec::with_capacity(names.len() + 1);
        all.push("(intercept)".to_string());
        all.extend(names);
        Self::build(responses, design, all, true)
    }

    fn build(
        responses: Vec<f64>,
        design: DMatrix<f64>,
        column_names: Vec<String>,
        intercept: bool,
    ) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::TooFewObservations { n: 0, required: 1 });
        }
        if design.nrows() != responses.len() {
            return Err(Error::DimensionMismatch {
                expected: responses.len(),
                found: design.nrows(),
            });
        }
        if let Some(i) = responses.iter().position(|&y| !(y >= 0.0 && y.is_finite())) {
            return Err(Error::Domain(format!(
                "response {i} is {} (must be finite and >= 0)",
                responses[i]
            )));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("design contains non-finite values".into()));
        }
        Ok(Self {
            responses,
            design,
            column_names,
            intercept,
        })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    /// Number of regression columns (intercept included when present).
    pub fn q(&self) -> usize {
        self.design.ncols()
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Whether column 0 is an intercept.
    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    /// The censoring threshold; fixed at zero.
    pub fn censor_threshold(&self) -> f64 {
        0.0
    }

    /// Number of uncensored (positive) responses, `u`.
    pub fn uncensored(&self) -> usize {
        self.responses.iter().filter(|&&y| y > 0.0).count()
    }

    pub fn censored(&self) -> usize {
        self.n() - self.uncensored()
    }

    pub fn censoring_rate(&self) -> f64 {
        self.censored() as f64 / self.n() as f64
    }

    /// Dataset restricted to the given design columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let design = self.design.select_columns(columns);
        let names = columns.iter().map(|&j| self.column_names[j].clone()).collect();
        Self {
            responses: self.responses.clone(),
            design,
            column_names: names,
            intercept: self.intercept && columns.first() == Some(&0),
        }
    }

    /// Dataset made of the given rows (repeats allowed), in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            responses: rows.iter().map(|&i| self.responses[i]).collect(),
            design: self.design.select_rows(rows),
            column_names: self.column_names.clone(),
            intercept: self.intercept,
        }
    }

    /// Same design, new responses.
    pub fn with_responses(&self, responses: Vec<f64>) -> Result<Self> {
        Self::build(
            responses,
            self.design.clone(),
            self.column_names.clone(),
            self.intercept,
        )
    }

    pub(crate) fn from_parts_unchecked(
        responses: Vec<f64>,
        design: DMatrix<f64>,
        column_names: Vec<String>,
        intercept: bool,
    ) -> Self {
        debug_assert_eq!(responses.len(), design.nrows());
        Self {
            responses,
            design,
            column_names,
            intercept,
        }
    }
}

/// Regression coefficients and disturbance standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct TobitParams {
    pub beta: DVector<f64>,
    pub sigma: f64,
}

impl TobitParams {
    pub fn new(beta: DVector<f64>, sigma: f64) -> Result<Self> {
        let params = Self { beta, sigma };
        params.validate()?;
        Ok(params)
    }

    pub fn from_slice(beta: &[f64], sigma: f64) -> Result<Self> {
        Self::new(DVector::from_column_slice(beta), sigma)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("beta must be finite".into()));
        }
        Ok(())
    }

    fn check_against(&self, data: &CensoredDataset) -> Result<()> {
        if self.beta.len() != data.q() {
            return Err(Error::DimensionMismatch {
                expected: data.q(),
                found: self.beta.len(),
            });
        }
        self.validate()
    }
}

/// Result of maximum-likelihood fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct TobitFit {
    pub params: TobitParams,
    /// Log-likelihood at `params`.
    pub loglik: f64,
    /// Parameter-space dimension, `q + 1` (σ² counted).
    pub k: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of the `(β, σ)` gradient at `params`.
    pub gradient_norm: f64,
}

impl TobitFit {
    /// In-sample deviance, `-2 loglik`.
    pub fn deviance(&self) -> f64 {
        -2.0 * self.loglik
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the gradient sup-norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Exact Tobit log-likelihood
/// `u·ln(1/(√(2π)σ)) − Σ₊(yᵢ − xᵢ'β)²/(2σ²) + Σ₀ ln(1 − Φ(xᵢ'β/σ))`.
pub fn log_likelihood(data: &CensoredDataset, params: &TobitParams) -> Result<f64> {
    params.check_against(data)?;
    let sigma = params.sigma;
    let index = data.design() * &params.beta;
    let mut positive_count = 0usize;
    let mut sum_sq = 0.0;
    let mut censored = 0.0;
    for (&y, &xb) in data.responses().iter().zip(index.iter()) {
        if y > 0.0 {
            positive_count += 1;
            let r = y - xb;
            sum_sq += r * r;
        } else {
            censored += normal::log_sf(xb / sigma);
        }
    }
    let u = positive_count as f64;
    Ok(-u * (normal::HALF_LN_2PI + sigma.ln()) - sum_sq / (2.0 * sigma * sigma) + censored)
}

/// Gradient of [`log_likelihood`]: `∂ℓ/∂β` (q entries) followed by `∂ℓ/∂σ`.
pub fn log_likelihood_gradient(
    data: &CensoredDataset,
    params: &TobitParams,
) -> Result<DVector<f64>> {
    params.check_against(data)?;
    let q = data.q();
    let sigma = params.sigma;
    let index = data.design() * &params.beta;
    // Per-row weight on x for the β-gradient.
    let mut row_weight = DVector::zeros(data.n());
    let mut d_sigma = 0.0;
    for (i, (&y, &xb)) in data.responses().iter().zip(index.iter()).enumerate() {
        if y > 0.0 {
            let r = y - xb;
            row_weight[i] = r / (sigma * sigma);
            d_sigma += -1.0 / sigma + r * r / (sigma * sigma * sigma);
        } else {
            let z = xb / sigma;
            let h = normal::hazard(z);
            row_weight[i] = -h / sigma;
            d_sigma += h * z / sigma;
        }
    }
    let d_beta = data.design().tr_mul(&row_weight);
    let mut grad = DVector::zeros(q + 1);
    grad.rows_mut(0, q).copy_from(&d_beta);
    grad[q] = d_sigma;
    Ok(grad)
}

/// Probability that a row with covariates `x` is censored, `1 − Φ(x'β/σ)`.
pub fn censoring_probability(x: DVectorView<'_, f64>, params: &TobitParams) -> Result<f64> {
    params.validate()?;
    if x.len() != params.beta.len() {
        return Err(Error::DimensionMismatch {
            expected: params.beta.len(),
            found: x.len(),
        });
    }
    Ok(normal::sf(x.dot(&params.beta) / params.sigma))
}

/// Maximum-likelihood fit from the default starting point.
pub fn fit_mle(data: &CensoredDataset, options: &FitOptions) -> Result<TobitFit> {
    check_identifiable(data)?;
    let start = initial_params(data);
    newton(data, start, options)
}

/// Maximum-likelihood fit warm-started at `start`.
pub fn fit_mle_from(
    data: &CensoredDataset,
    start: &TobitParams,
    options: &FitOptions,
) -> Result<TobitFit> {
    start.check_against(data)?;
    check_identifiable(data)?;
    newton(data, start.clone(), options)
}

fn check_identifiable(data: &CensoredDataset) -> Result<()> {
    let q = data.q();
    if data.n() < q + 1 {
        return Err(Error::TooFewObservations {
            n: data.n(),
            required: q + 1,
        });
    }
    if data.uncensored() == 0 {
        return Err(Error::NonIdentifiable);
    }
    if q > 0 {
        let rank = matrix_rank(data.design());
        if rank < q {
            return Err(Error::RankDeficient { rank, columns: q });
        }
    }
    Ok(())
}

fn matrix_rank(m: &DMatrix<f64>) -> usize {
    let svd = m.clone().svd(false, false);
    let max_sv = svd.singular_values.max();
    let eps = f64::EPSILON * m.nrows().max(m.ncols()) as f64 * max_sv;
    svd.rank(eps.max(f64::MIN_POSITIVE))
}

// Least squares on the uncensored rows; falls back to β = 0 when those rows
// cannot support a regression.
fn initial_params(data: &CensoredDataset) -> TobitParams {
    let q = data.q();
    let positive_rows: Vec<usize> = (0..data.n()).filter(|&i| data.responses()[i] > 0.0).collect();
    let u = positive_rows.len();
    let y: DVector<f64> =
        DVector::from_iterator(u, positive_rows.iter().map(|&i| data.responses()[i]));
    let mut beta = DVector::zeros(q);
    if q > 0 && u > q {
        let x = data.design().select_rows(&positive_rows);
        if matrix_rank(&x) == q {
            if let Ok(sol) = x.clone().svd(true, true).solve(&y, 1e-12) {
                beta = sol;
            }
        }
    }
    let rss: f64 = if beta.iter().all(|b| *b == 0.0) {
        y.iter().map(|v| v * v).sum()
    } else {
        let x = data.design().select_rows(&positive_rows);
        (y - x * &beta).norm_squared()
    };
    let sigma = (rss / u.max(1) as f64).sqrt().max(1e-3);
    TobitParams { beta, sigma }
}

/// Log-likelihood, gradient and Hessian in the concave `(δ, ρ)` coordinates.
struct OlsenEval {
    loglik: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn olsen_loglik(data: &CensoredDataset, delta: &DVector<f64>, rho: f64) -> f64 {
    if rho.is_nan() || rho <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let index = data.design() * delta;
    let ln_rho = rho.ln();
    data.responses()
        .iter()
        .zip(index.iter())
        .map(|(&y, &z)| {
            if y > 0.0 {
                let r = rho * y - z;
                ln_rho - normal::HALF_LN_2PI - 0.5 * r * r
            } else {
                normal::log_sf(z)
            }
        })
        .sum()
}

fn olsen_eval(data: &CensoredDataset, delta: &DVector<f64>, rho: f64) -> OlsenEval {
    let n = data.n();
    let q = data.q();
    let x = data.design();
    let index = x * delta;
    let ln_rho = rho.ln();

    let mut loglik = 0.0;
    let mut resid_weight = DVector::zeros(n);
    let mut curvature = DVector::zeros(n);
    let mut cross_weight = DVector::zeros(n);
    let mut g_rho = 0.0;
    let mut h_rho = 0.0;
    for (i, (&y, &z)) in data.responses().iter().zip(index.iter()).enumerate() {
        if y > 0.0 {
            let r = rho * y - z;
            loglik += ln_rho - normal::HALF_LN_2PI - 0.5 * r * r;
            resid_weight[i] = r;
            curvature[i] = 1.0;
            cross_weight[i] = y;
            g_rho += 1.0 / rho - r * y;
            h_rho -= 1.0 / (rho * rho) + y * y;
        } else {
            loglik += normal::log_sf(z);
            let m = normal::hazard(z);
            resid_weight[i] = -m;
            // d/dz of -m(z) is -m(m - z); m(m - z) lies in (0, 1).
            curvature[i] = (m * (m - z)).clamp(0.0, 1.0);
        }
    }

    let g_delta = x.tr_mul(&resid_weight);
    let mut weighted = x.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= curvature[i];
    }
    let h_dd = -x.tr_mul(&weighted);
    let h_dr = x.tr_mul(&cross_weight);

    let mut grad = DVector::zeros(q + 1);
    grad.rows_mut(0, q).copy_from(&g_delta);
    grad[q] = g_rho;
    let mut hess = DMatrix::zeros(q + 1, q + 1);
    hess.view_mut((0, 0), (q, q)).copy_from(&h_dd);
    hess.view_mut((0, q), (q, 1)).copy_from(&h_dr);
    hess.view_mut((q, 0), (1, q)).copy_from(&h_dr.transpose());
    hess[(q, q)] = h_rho;
    OlsenEval { loglik, grad, hess }
}

// Solves (-H) d = g, regularising the diagonal if -H is not numerically
// positive definite.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let neg = -hess;
    if let Some(chol) = neg.clone().cholesky() {
        return Some(chol.solve(grad));
    }
    let scale = neg.diagonal().iter().fold(1e-12_f64, |a, v| a.max(v.abs()));
    let mut ridge = scale * 1e-10;
    for _ in 0..20 {
        let mut damped = neg.clone();
        for j in 0..damped.nrows() {
            damped[(j, j)] += ridge;
        }
        if let Some(chol) = damped.cholesky() {
            return Some(chol.solve(grad));
        }
        ridge *= 10.0;
    }
    None
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

fn to_params(delta: &DVector<f64>, rho: f64) -> TobitParams {
    TobitParams {
        beta: delta / rho,
        sigma: 1.0 / rho,
    }
}

fn newton(data: &CensoredDataset, start: TobitParams, options: &FitOptions) -> Result<TobitFit> {
    let q = data.q();
    let mut rho = 1.0 / start.sigma;
    let mut delta = &start.beta * rho;
    let mut iterations = 0;
    let mut gradient_norm = f64::INFINITY;

    while iterations < options.max_iter {
        let params = to_params(&delta, rho);
        gradient_norm = sup_norm(&log_likelihood_gradient(data, &params)?);
        if gradient_norm <= options.tol {
            break;
        }
        iterations += 1;
        let eval = olsen_eval(data, &delta, rho);
        let Some(step) = newton_direction(&eval.hess, &eval.grad) else {
            break;
        };
        let step_delta = step.rows(0, q).into_owned();
        let step_rho = step[q];
        // Close to the optimum the predicted gain drops below the rounding
        // error of the summed log-likelihood; allow that much slack.
        let slack = 16.0 * f64::EPSILON * (data.n() as f64 + eval.loglik.abs());

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand_rho = rho + t * step_rho;
            if cand_rho > 0.0 {
                let cand_delta = &delta + &step_delta * t;
                let ll = olsen_loglik(data, &cand_delta, cand_rho);
                if ll >= eval.loglik - slack {
                    delta = cand_delta;
                    rho = cand_rho;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let params = to_params(&delta, rho);
    params.validate()?;
    if iterations == options.max_iter || !gradient_norm.is_finite() || gradient_norm > options.tol {
        gradient_norm = sup_norm(&log_likelihood_gradient(data, &params)?);
    }
    let loglik = log_likelihood(data, &params)?;
    Ok(TobitFit {
        k: q + 1,
        converged: gradient_norm <= options.tol,
        params,
        loglik,
        iterations,
        gradient_norm,
    })
}
