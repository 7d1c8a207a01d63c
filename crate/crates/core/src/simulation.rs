//! Monte Carlo identification experiments under a known Tobit model.
//!
//! Covariates are equicorrelated normals `N_p(0, Σ)` with unit variances,
//! drawn through the Cholesky factor of `Σ`. Each run gets a key derived
//! from the master seed and the run index; the dataset and the bootstrap
//! replicates of that run hang off separate children of that key, so
//! results do not depend on how runs are scheduled.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{BootstrapSpec, Mechanism, DEFAULT_MAX_REDRAWS};
use crate::criteria::{BiasConstantMode, CriterionId};
use crate::error::{Error, Result};
use crate::normal;
use crate::rng::{derive, Stream};
use crate::selection::{nested_scan_each, Specification};
use crate::tobit::CensoredDataset;

/// Caption intercepts of the four reference tables, rounded to 2 decimals.
pub const TABLE_INTERCEPTS: [f64; 4] = [-0.84, -0.65, -0.28, 0.0];
/// Caption censoring rates of the four reference tables.
pub const TABLE_CENSORING: [f64; 4] = [0.75, 0.70, 0.60, 0.50];
/// Non-intercept coefficients of the true model (remaining slopes are 0).
pub const TRUE_SLOPES: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

const DATA_STREAM: u64 = 1;
const BOOTSTRAP_STREAM: u64 = 2;

/// Unit-diagonal matrix with every off-diagonal entry equal to `rho`.
pub fn equicorrelation(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}

fn cholesky_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !sigma.is_square() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            found: sigma.ncols(),
        });
    }
    if sigma.iter().any(|v| !v.is_finite()) || (sigma - sigma.transpose()).amax() > 1e-12 {
        return Err(Error::Domain("covariance must be finite and symmetric".into()));
    }
    sigma
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))
}

/// Variance of the latent response `x'β + ε`: `β'Σβ + sigma2`.
pub fn marginal_variance(beta_sub: &DVector<f64>, sigma_sub: &DMatrix<f64>, sigma2: f64) -> Result<f64> {
    if sigma_sub.nrows() != beta_sub.len() {
        return Err(Error::DimensionMismatch {
            expected: beta_sub.len(),
            found: sigma_sub.nrows(),
        });
    }
    cholesky_factor(sigma_sub)?;
    if !(sigma2 > 0.0 && sigma2.is_finite()) || beta_sub.iter().any(|b| !b.is_finite()) {
        return Err(Error::Domain("sigma2 must be positive and coefficients finite".into()));
    }
    Ok((beta_sub.transpose() * sigma_sub * beta_sub)[(0, 0)] + sigma2)
}

/// Intercept giving marginal censoring probability `target_rate`:
/// `β0 = −√v · Φ⁻¹(target_rate)`.
pub fn solve_intercept(
    target_rate: f64,
    beta_sub: &DVector<f64>,
    sigma_sub: &DMatrix<f64>,
    sigma2: f64,
) -> Result<f64> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::Domain(format!("censoring rate must lie in (0, 1), got {target_rate}")));
    }
    let v = marginal_variance(beta_sub, sigma_sub, sigma2)?;
    Ok(-v.sqrt() * normal::quantile(target_rate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n: usize,
    /// Number of explanatory variables.
    pub p: usize,
    /// Intercept first, then `p` slopes.
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub rho: f64,
    /// Monte Carlo runs.
    pub runs: usize,
    /// Bootstrap replicates per family and mechanism.
    pub replicates: usize,
    pub criteria: Vec<CriterionId>,
    pub seed: u64,
    /// Largest nested family scanned; defaults to `p + 2`.
    pub max_k: usize,
    pub max_redraws: usize,
    pub bias_mode: BiasConstantMode,
}

impl SimulationConfig {
    /// Reference design: `p = 8`, β = (β0, 0.1, 0.2, 0.3, 0.4, 0, 0, 0, 0),
    /// σ² = 1, ρ = 0.3, 500 runs, B = 200, all 23 criteria.
    pub fn reference(n: usize, intercept: f64) -> Self {
        let p = 8;
        let mut beta = vec![0.0; p + 1];
        beta[0] = intercept;
        beta[1..=TRUE_SLOPES.len()].copy_from_slice(&TRUE_SLOPES);
        Self {
            n,
            p,
            beta,
            sigma2: 1.0,
            rho: 0.3,
            runs: 500,
            replicates: 200,
            criteria: CriterionId::table_rows(),
            seed: 0,
            max_k: p + 2,
            max_redraws: DEFAULT_MAX_REDRAWS,
            bias_mode: BiasConstantMode::Normalized,
        }
    }

    /// Configuration of reference table `t` (1..=4) using its caption intercept.
    pub fn table(t: usize, n: usize) -> Result<Self> {
        if !(1..=4).contains(&t) {
            return Err(Error::InvalidArgument(format!("table must be 1..=4, got {t}")));
        }
        Ok(Self::reference(n, TABLE_INTERCEPTS[t - 1]))
    }

    /// Replaces the intercept with the one solved for `rate`.
    pub fn with_target_censoring(mut self, rate: f64) -> Result<Self> {
        self.validate()?;
        self.beta[0] = solve_intercept(rate, &self.slopes(), &self.covariance(), self.sigma2)?;
        Ok(self)
    }

    pub fn slopes(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta[1..])
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        equicorrelation(self.p, self.rho)
    }

    /// Number of nonzero slopes.
    pub fn d0(&self) -> usize {
        self.beta[1..].iter().filter(|b| **b != 0.0).count()
    }

    /// Censoring probability implied by the configuration.
    pub fn censoring_rate(&self) -> Result<f64> {
        let v = marginal_variance(&self.slopes(), &self.covariance(), self.sigma2)?;
        Ok(normal::cdf(-self.beta[0] / v.sqrt()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != self.p + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.p + 1,
                found: self.beta.len(),
            });
        }
        if self.n == 0 || self.runs == 0 || self.replicates == 0 {
            return Err(Error::InvalidArgument("n, runs and replicates must be positive".into()));
        }
        if self.max_k == 0 || self.max_k > self.p + 2 {
            return Err(Error::InvalidArgument(format!(
                "max_k must be in 1..={}, got {}",
                self.p + 2,
                self.max_k
            )));
        }
        if self.criteria.is_empty() {
            return Err(Error::InvalidArgument("no criteria requested".into()));
        }
        marginal_variance(&self.slopes(), &self.covariance(), self.sigma2)?;
        if !self.beta[0].is_finite() {
            return Err(Error::Domain("intercept must be finite".into()));
        }
        Ok(())
    }

    fn run_key(&self, run: usize) -> u64 {
        derive(self.seed, run as u64)
    }

    /// Bootstrap settings used inside run `run`.
    pub fn bootstrap_spec(&self, run: usize) -> BootstrapSpec {
        let mut spec = BootstrapSpec::new(
            Mechanism::Nonparametric,
            self.replicates,
            derive(self.run_key(run), BOOTSTRAP_STREAM),
        );
        spec.max_redraws = self.max_redraws;
        spec
    }
}

/// Draws the dataset of run `run`; deterministic in `(seed, run)`.
pub fn gen_dataset(config: &SimulationConfig, run: usize) -> Result<CensoredDataset> {
    config.validate()?;
    let (n, p) = (config.n, config.p);
    let chol = cholesky_factor(&config.covariance())?;
    let sd = config.sigma2.sqrt();
    let mut stream = Stream::new(derive(config.run_key(run), DATA_STREAM));
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    let mut z = DVector::zeros(p);
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = stream.standard_normal();
        }
        let row = &chol * &z;
        let mut latent = config.beta[0] + sd * stream.standard_normal();
        for j in 0..p {
            x[(i, j)] = row[j];
            latent += config.beta[j + 1] * row[j];
        }
        y.push(latent.max(0.0));
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    CensoredDataset::with_intercept(y, x, names)
}

/// Identification counts for one criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentificationRow {
    pub criterion: CriterionId,
    pub under: usize,
    pub correct: usize,
    pub over: usize,
    /// Runs where no family could be scored under this criterion.
    pub failed: usize,
}

impl IdentificationRow {
    pub fn total(&self) -> usize {
        self.under + self.correct + self.over + self.failed
    }

    pub fn count(&self, spec: Specification) -> usize {
        match spec {
            Specification::Under => self.under,
            Specification::Correct => self.correct,
            Specification::Over => self.over,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationTable {
    pub n: usize,
    pub d0: usize,
    pub runs: usize,
    pub rows: Vec<IdentificationRow>,
    /// Runs in which every criterion failed.
    pub failed_runs: usize,
    /// Family fits skipped across all runs (non-identifiable, non-convergent
    /// or bootstrap failure), summed over criteria.
    pub skipped_families: usize,
}

impl IdentificationTable {
    pub fn row(&self, criterion: CriterionId) -> Option<&IdentificationRow> {
        self.rows.iter().find(|r| r.criterion == criterion)
    }

    /// Estimated probability of correct identification, `correct / M`.
    pub fn risk(&self, criterion: CriterionId) -> Option<f64> {
        self.row(criterion).map(|r| r.correct as f64 / self.runs as f64)
    }

    pub fn total_failures(&self) -> usize {
        self.rows.iter().map(|r| r.failed).sum()
    }
}

struct RunOutcome {
    selections: Vec<Option<Specification>>,
    skipped: usize,
}

fn single_run(config: &SimulationConfig, run: usize) -> RunOutcome {
    let failed = || RunOutcome {
        selections: vec![None; config.criteria.len()],
        skipped: 0,
    };
    let Ok(data) = gen_dataset(config, run) else {
        return failed();
    };
    let spec = config.bootstrap_spec(run);
    let Ok(results) = nested_scan_each(
        &data,
        &config.criteria,
        config.max_k,
        &spec,
        config.bias_mode,
        Some(config.d0()),
    ) else {
        return failed();
    };
    let mut skipped = 0;
    let selections = results
        .into_iter()
        .map(|res| {
            res.ok().and_then(|sel| {
                skipped += sel.skipped().count();
                sel.classification
            })
        })
        .collect();
    RunOutcome { selections, skipped }
}

/// Runs `config.runs` independent replications of nested selection and
/// tallies the selected dimension against the true `d0`.
pub fn monte_carlo(config: &SimulationConfig) -> Result<IdentificationTable> {
    config.validate()?;
    let outcomes: Vec<RunOutcome> = (0..config.runs)
        .into_par_iter()
        .map(|run| single_run(config, run))
        .collect();

    let mut rows: Vec<IdentificationRow> = config
        .criteria
        .iter()
        .map(|&criterion| IdentificationRow {
            criterion,
            under: 0,
            correct: 0,
            over: 0,
            failed: 0,
        })
        .collect();
    let mut failed_runs = 0;
    let mut skipped_families = 0;
    for outcome in &outcomes {
        if outcome.selections.iter().all(Option::is_none) {
            failed_runs += 1;
        }
        skipped_families += outcome.skipped;
        for (row, sel) in rows.iter_mut().zip(&outcome.selections) {
            match sel {
                Some(Specification::Under) => row.under += 1,
                Some(Specification::Correct) => row.correct += 1,
                Some(Specification::Over) => row.over += 1,
                None => row.failed += 1,
            }
        }
    }
    Ok(IdentificationTable {
        n: config.n,
        d0: config.d0(),
        runs: config.runs,
        rows,
        failed_runs,
        skipped_families,
    })
}

/// Risk-versus-n series for every criterion of the first table.
pub fn risk_curve(tables: &[IdentificationTable]) -> Vec<(CriterionId, Vec<(usize, f64)>)> {
    let Some(first) = tables.first() else {
        return Vec::new();
    };
    first
        .rows
        .iter()
        .map(|row| {
            let series = tables
                .iter()
                .filter_map(|t| t.risk(row.criterion).map(|r| (t.n, r)))
                .collect();
            (row.criterion, series)
        })
        .collect()
}

/// Formats `x` with 6 significant digits: plain notation for moderate
/// magnitudes, scientific otherwise.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    if (-4..6).contains(&exp) {
        format!("{x:.*}", (5 - exp) as usize)
    } else {
        sci
    }
}

fn push_comment_block(out: &mut String, header: &str) {
    for line in header.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
}

/// Tab-separated identification table: one row per criterion and, for
/// every sample size, the under/correct/over counts. `header` lines are
/// emitted first as `#` comments.
pub fn tables_to_tsv(tables: &[IdentificationTable], header: &str) -> String {
    let mut out = String::new();
    push_comment_block(&mut out, header);
    out.push_str("criterion");
    for t in tables {
        let n = t.n;
        write!(out, "\tn{n}_under\tn{n}_correct\tn{n}_over\tn{n}_failed").unwrap();
    }
    out.push('\n');
    let Some(first) = tables.first() else {
        return out;
    };
    for row in &first.rows {
        out.push_str(&row.criterion.label());
        for t in tables {
            match t.row(row.criterion) {
                Some(r) => write!(out, "\t{}\t{}\t{}\t{}", r.under, r.correct, r.over, r.failed),
                None => write!(out, "\t\t\t\t"),
            }
            .unwrap();
        }
        out.push('\n');
    }
    out
}

/// Risk curves as `n,criterion,risk` CSV.
pub fn risk_curve_to_csv(tables: &[IdentificationTable], header: &str) -> String {
    let mut out = String::new();
    push_comment_block(&mut out, header);
    out.push_str("n,criterion,risk\n");
    for (criterion, series) in risk_curve(tables) {
        for (n, risk) in series {
            writeln!(out, "{n},{},{}", criterion.label(), format_sig6(risk)).unwrap();
        }
    }
    out
}
