//! Candidate-family search: the nested scan F(1) ⊂ F(2) ⊂ … used by the
//! simulation experiments, and exhaustive best-subset enumeration for real
//! data.
//!
//! Both expect a dataset whose design column 0 is the intercept
//! ([`CensoredDataset::with_intercept`]); columns `1..q` are the explanatory
//! variables.

use std::fmt;

use rayon::prelude::*;

use crate::bootstrap::BootstrapSpec;
use crate::criteria::{score_each, BiasConstantMode, CriterionId, CriterionScore};
use crate::error::{Error, Result};
use crate::tobit::{fit_mle, CensoredDataset, FitOptions};

/// Upper bound on explanatory variables for exhaustive enumeration.
pub const MAX_SUBSET_VARIABLES: usize = 20;

/// A candidate model: optional intercept plus a set of explanatory columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidateFamily {
    pub intercept: bool,
    /// Design-column indices of the explanatory variables (never 0).
    pub columns: Vec<usize>,
}

impl CandidateFamily {
    /// Nested family F(k): F(1) is noise only, F(2) intercept only, F(k)
    /// adds explanatory columns `1..=k-2` in design order.
    pub fn nested(k: usize) -> Self {
        assert!(k >= 1, "families start at F(1)");
        Self {
            intercept: k >= 2,
            columns: (1..k.saturating_sub(1)).collect(),
        }
    }

    /// Intercept plus the given explanatory columns.
    pub fn subset(columns: Vec<usize>) -> Self {
        Self {
            intercept: true,
            columns,
        }
    }

    /// Parameter dimension, σ² included.
    pub fn k(&self) -> usize {
        self.columns.len() + usize::from(self.intercept) + 1
    }

    /// Number of explanatory variables.
    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn design_columns(&self) -> Vec<usize> {
        let mut cols = Vec::with_capacity(self.columns.len() + 1);
        if self.intercept {
            cols.push(0);
        }
        cols.extend_from_slice(&self.columns);
        cols
    }

    /// Explanatory variable names, `-` for none.
    pub fn describe(&self, names: &[String]) -> String {
        if self.columns.is_empty() {
            return if self.intercept { "-".into() } else { "(noise only)".into() };
        }
        self.columns
            .iter()
            .map(|&j| names.get(j).cloned().unwrap_or_else(|| format!("x{j}")))
            .collect::<Vec<_>>()
            .join("+")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Specification {
    Under,
    Correct,
    Over,
}

impl fmt::Display for Specification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Specification::Under => "under",
            Specification::Correct => "correct",
            Specification::Over => "over",
        })
    }
}

pub fn classify(d_hat: usize, d0: usize) -> Specification {
    match d_hat.cmp(&d0) {
        std::cmp::Ordering::Less => Specification::Under,
        std::cmp::Ordering::Equal => Specification::Correct,
        std::cmp::Ordering::Greater => Specification::Over,
    }
}

/// Outcome of scoring one family under one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyScore {
    pub family: CandidateFamily,
    /// Criterion value, `+∞` when skipped.
    pub value: f64,
    pub score: Option<CriterionScore>,
    /// In-sample deviance of the family's fit, when it could be fitted.
    pub deviance: Option<f64>,
    pub skip_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub criterion: CriterionId,
    pub chosen: CandidateFamily,
    pub d_hat: usize,
    /// One entry per evaluated family, in evaluation order.
    pub scores: Vec<FamilyScore>,
    pub classification: Option<Specification>,
}

impl SelectionResult {
    pub fn skipped(&self) -> impl Iterator<Item = &FamilyScore> {
        self.scores.iter().filter(|s| s.skip_reason.is_some())
    }
}

// Fits one family and scores it under every criterion.
fn evaluate_family(
    data: &CensoredDataset,
    family: &CandidateFamily,
    criteria: &[CriterionId],
    spec: &BootstrapSpec,
    mode: BiasConstantMode,
) -> Vec<FamilyScore> {
    let sub = data.select_columns(&family.design_columns());
    let skip_all = |reason: String, deviance: Option<f64>| {
        criteria
            .iter()
            .map(|_| FamilyScore {
                family: family.clone(),
                value: f64::INFINITY,
                score: None,
                deviance,
                skip_reason: Some(reason.clone()),
            })
            .collect()
    };
    let fit = match fit_mle(&sub, &FitOptions::default()) {
        Ok(fit) if fit.converged => fit,
        Ok(fit) => {
            return skip_all(
                format!("maximum likelihood did not converge ({} iterations)", fit.iterations),
                Some(fit.deviance()),
            )
        }
        Err(e) => return skip_all(e.to_string(), None),
    };
    score_each(criteria, &sub, &fit, spec, mode)
        .into_iter()
        .map(|res| match res {
            Ok(score) if score.value.is_finite() => FamilyScore {
                family: family.clone(),
                value: score.value,
                score: Some(score),
                deviance: Some(fit.deviance()),
                skip_reason: None,
            },
            Ok(score) => FamilyScore {
                family: family.clone(),
                value: f64::INFINITY,
                score: Some(score),
                deviance: Some(fit.deviance()),
                skip_reason: Some("non-finite score".into()),
            },
            Err(e) => FamilyScore {
                family: family.clone(),
                value: f64::INFINITY,
                score: None,
                deviance: Some(fit.deviance()),
                skip_reason: Some(e.to_string()),
            },
        })
        .collect()
}

// Index of the smallest finite value; ties go to the earlier entry.
fn argmin(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn require_intercept(data: &CensoredDataset) -> Result<()> {
    if data.has_intercept() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "candidate search needs an intercept in design column 0".into(),
        ))
    }
}

/// Nested scan over F(1)…F(max_k) for one criterion.
pub fn nested_scan(
    data: &CensoredDataset,
    criterion: CriterionId,
    max_k: usize,
    spec: &BootstrapSpec,
    mode: BiasConstantMode,
) -> Result<SelectionResult> {
    let mut results = nested_scan_many(data, &[criterion], max_k, spec, mode, None)?;
    Ok(results.remove(0))
}

/// Nested scan for several criteria at once; each family is fitted once and
/// bootstrap streams are shared. With `d0`, each result is classified.
pub fn nested_scan_many(
    data: &CensoredDataset,
    criteria: &[CriterionId],
    max_k: usize,
    spec: &BootstrapSpec,
    mode: BiasConstantMode,
    d0: Option<usize>,
) -> Result<Vec<SelectionResult>> {
    nested_scan_each(data, criteria, max_k, spec, mode, d0)?
        .into_iter()
        .collect()
}

/// Like [`nested_scan_many`] but a criterion for which every family failed
/// yields its own `NoFeasibleFamily` instead of failing the whole call.
pub fn nested_scan_each(
    data: &CensoredDataset,
    criteria: &[CriterionId],
    max_k: usize,
    spec: &BootstrapSpec,
    mode: BiasConstantMode,
    d0: Option<usize>,
) -> Result<Vec<Result<SelectionResult>>> {
    require_intercept(data)?;
    if max_k == 0 || max_k > data.q() + 1 {
        return Err(Error::InvalidArgument(format!(
            "max_k must be in 1..={}, got {max_k}",
            data.q() + 1
        )));
    }
    let per_family: Vec<Vec<FamilyScore>> = (1..=max_k)
        .into_par_iter()
        .map(|k| evaluate_family(data, &CandidateFamily::nested(k), criteria, spec, mode))
        .collect();

    Ok(criteria
        .iter()
        .enumerate()
        .map(|(c, &criterion)| {
            let scores: Vec<FamilyScore> = per_family.iter().map(|f| f[c].clone()).collect();
            let best = argmin(scores.iter().map(|s| s.value)).ok_or(Error::NoFeasibleFamily)?;
            let chosen = scores[best].family.clone();
            let d_hat = chosen.d();
            Ok(SelectionResult {
                criterion,
                d_hat,
                chosen,
                scores,
                classification: d0.map(|d0| classify(d_hat, d0)),
            })
        })
        .collect())
}

/// Best candidate of one size.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRow {
    pub d: usize,
    pub evaluated: usize,
    pub skipped: usize,
    /// Minimising family and its score; `None` when every candidate failed.
    pub best: Option<(CandidateFamily, CriterionScore)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetReport {
    pub criterion: CriterionId,
    pub rows: Vec<SubsetRow>,
    /// Global minimiser across all sizes (ties toward smaller d).
    pub best: CandidateFamily,
    pub best_value: f64,
}

/// All `d`-element subsets of `1..=p` in lexicographic order.
pub fn combinations(p: usize, d: usize) -> Vec<Vec<usize>> {
    if d > p {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut current: Vec<usize> = (1..=d).collect();
    loop {
        out.push(current.clone());
        let Some(i) = (0..d).rev().find(|&i| current[i] < p - (d - 1 - i)) else {
            return out;
        };
        current[i] += 1;
        for j in i + 1..d {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// Exhaustive best-subset search for one criterion.
pub fn best_subset(
    data: &CensoredDataset,
    criterion: CriterionId,
    spec: &BootstrapSpec,
    mode: BiasConstantMode,
    d_range: &[usize],
) -> Result<SubsetReport> {
    let mut reports = best_subset_many(data, &[criterion], spec, mode, d_range)?;
    Ok(reports.remove(0))
}

/// Exhaustive best-subset search: the intercept is always included and,
/// for each `d` in `d_range`, every `C(p, d)` explanatory subset is scored.
pub fn best_subset_many(
    data: &CensoredDataset,
    criteria: &[CriterionId],
    spec: &BootstrapSpec,
    mode: BiasConstantMode,
    d_range: &[usize],
) -> Result<Vec<SubsetReport>> {
    require_intercept(data)?;
    let p = data.q() - 1;
    if p > MAX_SUBSET_VARIABLES {
        return Err(Error::InvalidArgument(format!(
            "exhaustive search supports at most {MAX_SUBSET_VARIABLES} variables, got {p}"
        )));
    }
    let mut sizes: Vec<usize> = d_range.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if let Some(&d) = sizes.iter().find(|&&d| d > p) {
        return Err(Error::InvalidArgument(format!("subset size {d} exceeds {p} variables")));
    }

    let candidates: Vec<CandidateFamily> = sizes
        .iter()
        .flat_map(|&d| combinations(p, d).into_iter().map(CandidateFamily::subset))
        .collect();
    let evaluated: Vec<Vec<FamilyScore>> = candidates
        .par_iter()
        .map(|family| evaluate_family(data, family, criteria, spec, mode))
        .collect();

    criteria
        .iter()
        .enumerate()
        .map(|(c, &criterion)| {
            let rows: Vec<SubsetRow> = sizes
                .iter()
                .map(|&d| {
                    let of_size: Vec<&FamilyScore> = evaluated
                        .iter()
                        .map(|f| &f[c])
                        .filter(|s| s.family.d() == d)
                        .collect();
                    let best = argmin(of_size.iter().map(|s| s.value)).map(|i| {
                        let s = of_size[i];
                        (s.family.clone(), s.score.expect("finite value has a score"))
                    });
                    SubsetRow {
                        d,
                        evaluated: of_size.len(),
                        skipped: of_size.iter().filter(|s| s.skip_reason.is_some()).count(),
                        best,
                    }
                })
                .collect();
            let global = argmin(
                rows.iter()
                    .map(|r| r.best.as_ref().map_or(f64::INFINITY, |(_, s)| s.value)),
            )
            .ok_or(Error::NoFeasibleFamily)?;
            let (best, score) = rows[global].best.clone().expect("argmin row is feasible");
            Ok(SubsetReport {
                criterion,
                rows,
                best,
                best_value: score.value,
            })
        })
        .collect()
}
