//! Model-selection scores on the deviance scale (smaller is better).
//!
//! Closed-form criteria only need the fitted log-likelihood. Bootstrap-based
//! criteria are reductions over a [`BootstrapSample`]: `B` replicates, each
//! refitted, with the handful of log-likelihood evaluations every criterion
//! needs recorded once. EIC1–EIC5 under one mechanism, and BCV/CV632 or
//! BQCV/632QCV, are therefore computed from the same refits.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{draw_once, BootstrapReplicate, BootstrapSpec, Mechanism};
use crate::error::{Error, Result};
use crate::tobit::{fit_mle_from, log_likelihood, CensoredDataset, FitOptions, TobitFit};

/// Weight of the in-sample deviance in CV632 and 632QCV.
pub const IN_SAMPLE_WEIGHT: f64 = 0.368;
/// Weight of the bootstrap term in CV632 and 632QCV.
pub const BOOTSTRAP_WEIGHT: f64 = 0.632;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CriterionKind {
    Aic,
    Bic,
    Aicc,
    Hq,
    /// Bootstrap bias-corrected AIC, variants 1 to 5.
    Eic(u8),
    Bcv,
    Cv632,
    Bqcv,
    Qcv632,
}

/// A criterion together with its bootstrap mechanism (EIC only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CriterionId {
    pub kind: CriterionKind,
    pub mechanism: Option<Mechanism>,
}

impl CriterionId {
    pub const fn closed(kind: CriterionKind) -> Self {
        Self {
            kind,
            mechanism: None,
        }
    }

    pub const AIC: Self = Self::closed(CriterionKind::Aic);
    pub const BIC: Self = Self::closed(CriterionKind::Bic);
    pub const AICC: Self = Self::closed(CriterionKind::Aicc);
    pub const HQ: Self = Self::closed(CriterionKind::Hq);
    pub const BCV: Self = Self::closed(CriterionKind::Bcv);
    pub const CV632: Self = Self::closed(CriterionKind::Cv632);
    pub const BQCV: Self = Self::closed(CriterionKind::Bqcv);
    pub const QCV632: Self = Self::closed(CriterionKind::Qcv632);

    pub fn eic(which: u8, mechanism: Mechanism) -> Result<Self> {
        check_variant(which)?;
        Ok(Self {
            kind: CriterionKind::Eic(which),
            mechanism: Some(mechanism),
        })
    }

    /// The 23 rows of the identification tables, in table order.
    pub fn table_rows() -> Vec<Self> {
        let mut rows = vec![Self::AIC, Self::BIC, Self::AICC, Self::HQ];
        for which in 1..=5 {
            for mech in Mechanism::ALL {
                rows.push(Self {
                    kind: CriterionKind::Eic(which),
                    mechanism: Some(mech),
                });
            }
        }
        rows.extend([Self::BCV, Self::CV632, Self::BQCV, Self::QCV632]);
        rows
    }

    /// The bootstrap stream this criterion consumes, if any.
    pub fn bootstrap_mechanism(&self) -> Option<Mechanism> {
        match self.kind {
            CriterionKind::Eic(_) => self.mechanism,
            CriterionKind::Bcv | CriterionKind::Cv632 => Some(Mechanism::Nonparametric),
            CriterionKind::Bqcv | CriterionKind::Qcv632 => Some(Mechanism::Parametric),
            _ => None,
        }
    }

    pub fn is_bootstrap(&self) -> bool {
        self.bootstrap_mechanism().is_some()
    }

    /// Table label, e.g. `AICc`, `EIC3_npp`, `CV632`.
    pub fn label(&self) -> String {
        match self.kind {
            CriterionKind::Aic => "AIC".into(),
            CriterionKind::Bic => "BIC".into(),
            CriterionKind::Aicc => "AICc".into(),
            CriterionKind::Hq => "HQ".into(),
            CriterionKind::Eic(j) => match self.mechanism {
                Some(m) => format!("EIC{j}_{}", m.short()),
                None => format!("EIC{j}"),
            },
            CriterionKind::Bcv => "BCV".into(),
            CriterionKind::Cv632 => "CV632".into(),
            CriterionKind::Bqcv => "BQCV".into(),
            CriterionKind::Qcv632 => "QCV632".into(),
        }
    }
}

impl fmt::Display for CriterionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for CriterionId {
    type Err = Error;

    /// Accepts `aic`, `bic`, `aicc`, `hq`, `bcv`, `cv632`, `bqcv`, `qcv632`
    /// and `eicJ:MECH` / `EICJ_MECH` with MECH one of `np`, `pb`, `npp`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let closed = match lower.as_str() {
            "aic" => Some(Self::AIC),
            "bic" => Some(Self::BIC),
            "aicc" => Some(Self::AICC),
            "hq" => Some(Self::HQ),
            "bcv" => Some(Self::BCV),
            "cv632" | "632cv" => Some(Self::CV632),
            "bqcv" => Some(Self::BQCV),
            "qcv632" | "632qcv" => Some(Self::QCV632),
            _ => None,
        };
        if let Some(id) = closed {
            return Ok(id);
        }
        let bad = || Error::InvalidArgument(format!("unknown criterion `{s}`"));
        let rest = lower.strip_prefix("eic").ok_or_else(bad)?;
        let (digit, mech) = rest.split_once([':', '_']).ok_or_else(bad)?;
        let which: u8 = digit.parse().map_err(|_| bad())?;
        Self::eic(which, mech.parse()?)
    }
}

impl Serialize for CriterionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for CriterionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Leading-constant convention for the EIC2–EIC5 bias terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasConstantMode {
    /// Every bias term is the plain mean of its deviance difference.
    #[default]
    Normalized,
    /// EIC2–EIC5 bias terms carry an extra factor 2.
    Literal,
}

impl FromStr for BiasConstantMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normalized" => Ok(Self::Normalized),
            "literal" => Ok(Self::Literal),
            other => Err(Error::InvalidArgument(format!("unknown bias constant mode `{other}`"))),
        }
    }
}

impl fmt::Display for BiasConstantMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Normalized => "normalized",
            Self::Literal => "literal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionScore {
    pub id: CriterionId,
    pub value: f64,
    /// Monte Carlo standard error of the bootstrap term.
    pub bias_se: Option<f64>,
    pub replicates_used: usize,
}

impl CriterionScore {
    fn closed(id: CriterionId, value: f64) -> Self {
        Self {
            id,
            value,
            bias_se: None,
            replicates_used: 0,
        }
    }
}

fn check_variant(which: u8) -> Result<()> {
    if (1..=5).contains(&which) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("EIC variant must be 1..=5, got {which}")))
    }
}

// ---------------------------------------------------------------------------
// Closed-form criteria

pub fn aic(fit: &TobitFit) -> f64 {
    -2.0 * fit.loglik + 2.0 * fit.k as f64
}

pub fn bic(fit: &TobitFit, n: usize) -> f64 {
    -2.0 * fit.loglik + fit.k as f64 * (n as f64).ln()
}

/// `-2ℓ + 2k·n/(n − k − 1)`; undefined for `n ≤ k + 1`.
pub fn aicc(fit: &TobitFit, n: usize) -> Result<f64> {
    if n <= fit.k + 1 {
        return Err(Error::PenaltyUndefined { n, k: fit.k });
    }
    let (n, k) = (n as f64, fit.k as f64);
    Ok(-2.0 * fit.loglik + 2.0 * k * n / (n - k - 1.0))
}

/// `-2ℓ + 2k·ln(ln n)`; undefined for `n < 3`.
pub fn hq(fit: &TobitFit, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::PenaltyUndefined { n, k: fit.k });
    }
    Ok(-2.0 * fit.loglik + 2.0 * fit.k as f64 * (n as f64).ln().ln())
}

// ---------------------------------------------------------------------------
// Bootstrap replicates

/// Log-likelihood evaluations recorded for one bootstrap replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateEval {
    /// ℓ(y^b; θ̂^b)
    pub boot_at_boot: f64,
    /// ℓ(y; θ̂^b)
    pub orig_at_boot: f64,
    /// ℓ(y^b; θ̂)
    pub boot_at_orig: f64,
    /// −2·ℓ(y⁻; θ̂^b)·n/m* on the out-of-bag rows; pairs resampling only.
    pub oob_scaled_deviance: Option<f64>,
}

/// `B` evaluated replicates of one candidate under one mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSample {
    pub mechanism: Mechanism,
    /// ℓ(y; θ̂) of the candidate being scored.
    pub in_sample_loglik: f64,
    pub evals: Vec<ReplicateEval>,
    /// Total redraws spent across replicates.
    pub redraws: usize,
}

/// Generates and refits `spec.replicates` replicates of `fit` on `data`.
///
/// A draw is discarded and redrawn from a fresh substream when every
/// response is censored, when a pairs resample leaves no out-of-bag row,
/// or when its refit fails or does not converge. Refits start from
/// `fit.params`.
pub fn collect_replicates(
    data: &CensoredDataset,
    fit: &TobitFit,
    spec: &BootstrapSpec,
) -> Result<BootstrapSample> {
    let options = FitOptions::default();
    collect_replicates_with(
        data,
        fit,
        spec,
        |replicate, attempt| {
            draw_once(
                spec.mechanism,
                data,
                &fit.params,
                spec.replicate_key(replicate, attempt),
            )
        },
        |sample| fit_mle_from(sample, &fit.params, &options),
    )
}

/// [`collect_replicates`] with caller-supplied draw and refit steps.
pub fn collect_replicates_with<D, R>(
    data: &CensoredDataset,
    fit: &TobitFit,
    spec: &BootstrapSpec,
    draw: D,
    refit: R,
) -> Result<BootstrapSample>
where
    D: Fn(usize, usize) -> BootstrapReplicate + Sync,
    R: Fn(&CensoredDataset) -> Result<TobitFit> + Sync,
{
    spec.validate()?;
    let n = data.n() as f64;
    let outcomes: Vec<(ReplicateEval, usize)> = (0..spec.replicates)
        .into_par_iter()
        .map(|replicate| {
            for attempt in 0..=spec.max_redraws {
                let rep = draw(replicate, attempt);
                if rep.is_degenerate() {
                    continue;
                }
                let resampled = rep.source_indices.is_some();
                if spec.mechanism == Mechanism::Nonparametric && rep.oob_indices.is_empty() {
                    continue;
                }
                let refit = match refit(&rep.sample) {
                    Ok(f) if f.converged => f,
                    _ => continue,
                };
                let oob_scaled_deviance = if spec.mechanism == Mechanism::Nonparametric && resampled {
                    let oob = data.select_rows(&rep.oob_indices);
                    let ll = log_likelihood(&oob, &refit.params)?;
                    Some(-2.0 * ll * n / rep.m_star() as f64)
                } else {
                    None
                };
                let eval = ReplicateEval {
                    boot_at_boot: log_likelihood(&rep.sample, &refit.params)?,
                    orig_at_boot: log_likelihood(data, &refit.params)?,
                    boot_at_orig: log_likelihood(&rep.sample, &fit.params)?,
                    oob_scaled_deviance,
                };
                return Ok((eval, attempt));
            }
            Err(Error::DegenerateReplicate {
                replicate,
                attempts: spec.max_redraws + 1,
            })
        })
        .collect::<Result<_>>()?;
    let redraws = outcomes.iter().map(|(_, a)| a).sum();
    Ok(BootstrapSample {
        mechanism: spec.mechanism,
        in_sample_loglik: fit.loglik,
        evals: outcomes.into_iter().map(|(e, _)| e).collect(),
        redraws,
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

/// Per-replicate deviance difference `D_which` for EIC`which`.
pub fn deviance_differences(which: u8, sample: &BootstrapSample) -> Result<Vec<f64>> {
    check_variant(which)?;
    let ll = sample.in_sample_loglik;
    Ok(sample
        .evals
        .iter()
        .map(|e| match which {
            1 => 2.0 * e.boot_at_boot - 2.0 * e.orig_at_boot,
            2 => 2.0 * ll - 2.0 * e.orig_at_boot,
            3 => 2.0 * e.boot_at_boot - 2.0 * e.boot_at_orig,
            4 => 2.0 * e.boot_at_orig - 2.0 * e.orig_at_boot,
            _ => 2.0 * e.boot_at_boot - 2.0 * ll,
        })
        .collect())
}

/// Bias term of EIC`which` and its Monte Carlo standard error.
pub fn eic_bias_from(which: u8, sample: &BootstrapSample, mode: BiasConstantMode) -> Result<(f64, f64)> {
    let (mean, se) = mean_and_se(&deviance_differences(which, sample)?);
    let factor = match (mode, which) {
        (BiasConstantMode::Literal, 2..=5) => 2.0,
        _ => 1.0,
    };
    Ok((factor * mean, factor * se))
}

pub fn eic_from(which: u8, sample: &BootstrapSample, mode: BiasConstantMode) -> Result<CriterionScore> {
    let (bias, se) = eic_bias_from(which, sample, mode)?;
    Ok(CriterionScore {
        id: CriterionId::eic(which, sample.mechanism)?,
        value: -2.0 * sample.in_sample_loglik + bias,
        bias_se: Some(se),
        replicates_used: sample.evals.len(),
    })
}

pub fn bcv_from(sample: &BootstrapSample) -> Result<CriterionScore> {
    let values: Option<Vec<f64>> = sample.evals.iter().map(|e| e.oob_scaled_deviance).collect();
    let values = values.ok_or_else(|| {
        Error::InvalidArgument("BCV needs pairs-resampled replicates".into())
    })?;
    let (mean, se) = mean_and_se(&values);
    Ok(CriterionScore {
        id: CriterionId::BCV,
        value: mean,
        bias_se: Some(se),
        replicates_used: values.len(),
    })
}

pub fn bqcv_from(sample: &BootstrapSample) -> CriterionScore {
    let values: Vec<f64> = sample.evals.iter().map(|e| -2.0 * e.orig_at_boot).collect();
    let (mean, se) = mean_and_se(&values);
    CriterionScore {
        id: CriterionId::BQCV,
        value: mean,
        bias_se: Some(se),
        replicates_used: values.len(),
    }
}

fn blend_632(id: CriterionId, in_sample_deviance: f64, boot: &CriterionScore) -> CriterionScore {
    CriterionScore {
        id,
        value: IN_SAMPLE_WEIGHT * in_sample_deviance + BOOTSTRAP_WEIGHT * boot.value,
        bias_se: boot.bias_se.map(|se| BOOTSTRAP_WEIGHT * se),
        replicates_used: boot.replicates_used,
    }
}

/// `0.368·(−2ℓ(y; θ̂)) + 0.632·BCV`.
pub fn cv632_from(fit: &TobitFit, bcv: &CriterionScore) -> CriterionScore {
    blend_632(CriterionId::CV632, fit.deviance(), bcv)
}

/// `0.368·(−2ℓ(y; θ̂)) + 0.632·BQCV`.
pub fn qcv632_from(fit: &TobitFit, bqcv: &CriterionScore) -> CriterionScore {
    blend_632(CriterionId::QCV632, fit.deviance(), bqcv)
}

// ---------------------------------------------------------------------------
// Convenience entry points

/// Mean and standard error of the EIC`which` bias under `spec.mechanism`.
pub fn eic_bias(
    which: u8,
    data: &CensoredDataset,
    fit: &TobitFit,
    spec: &BootstrapSpec,
    mode: BiasConstantMode,
) -> Result<(f64, f64)> {
    check_variant(which)?;
    if spec.replicates < 2 {
        return Err(Error::InvalidArgument("EIC needs at least two replicates".into()));
    }
    eic_bias_from(which, &collect_replicates(data, fit, spec)?, mode)
}

pub fn eic(
    which: u8,
    data: &CensoredDataset,
    fit: &TobitFit,
    spec: &BootstrapSpec,
    mode: BiasConstantMode,
) -> Result<CriterionScore> {
    check_variant(which)?;
    if spec.replicates < 2 {
        return Err(Error::InvalidArgument("EIC needs at least two replicates".into()));
    }
    eic_from(which, &collect_replicates(data, fit, spec)?, mode)
}

/// Bootstrap likelihood cross-validation. Always uses pairs resampling;
/// `fit` only seeds the refits.
pub fn bcv(data: &CensoredDataset, fit: &TobitFit, spec: &BootstrapSpec) -> Result<CriterionScore> {
    if data.n() < 2 {
        return Err(Error::TooFewObservations { n: data.n(), required: 2 });
    }
    let spec = spec.with_mechanism(Mechanism::Nonparametric);
    bcv_from(&collect_replicates(data, fit, &spec)?)
}

pub fn cv632(data: &CensoredDataset, fit: &TobitFit, spec: &BootstrapSpec) -> Result<CriterionScore> {
    Ok(cv632_from(fit, &bcv(data, fit, spec)?))
}

/// Bootstrap quasi-cross-validation. Always uses parametric draws from `fit`.
pub fn bqcv(data: &CensoredDataset, fit: &TobitFit, spec: &BootstrapSpec) -> Result<CriterionScore> {
    let spec = spec.with_mechanism(Mechanism::Parametric);
    Ok(bqcv_from(&collect_replicates(data, fit, &spec)?))
}

pub fn qcv632(data: &CensoredDataset, fit: &TobitFit, spec: &BootstrapSpec) -> Result<CriterionScore> {
    Ok(qcv632_from(fit, &bqcv(data, fit, spec)?))
}

/// Exact BCV expectation for tiny samples: averages over all `n^n` equally
/// likely pairs resamples, excluding those that would be redrawn (empty
/// complement, all censored, or failed refit).
pub fn bcv_exhaustive(data: &CensoredDataset, fit: &TobitFit) -> Result<f64> {
    let n = data.n();
    if !(2..=7).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "exhaustive BCV supports 2 <= n <= 7, got {n}"
        )));
    }
    let options = FitOptions::default();
    let total = n.pow(n as u32);
    let mut sum = 0.0;
    let mut valid = 0usize;
    for code in 0..total {
        let mut c = code;
        let indices: Vec<usize> = (0..n)
            .map(|_| {
                let i = c % n;
                c /= n;
                i
            })
            .collect();
        let rep = BootstrapReplicate::from_indices(data, indices);
        if rep.m_star() == 0 || rep.is_degenerate() {
            continue;
        }
        let Ok(refit) = fit_mle_from(&rep.sample, &fit.params, &options) else {
            continue;
        };
        if !refit.converged {
            continue;
        }
        let oob = data.select_rows(&rep.oob_indices);
        sum += -2.0 * log_likelihood(&oob, &refit.params)? * n as f64 / rep.m_star() as f64;
        valid += 1;
    }
    if valid == 0 {
        return Err(Error::DegenerateReplicate {
            replicate: 0,
            attempts: total,
        });
    }
    Ok(sum / valid as f64)
}

/// Scores one fitted candidate under every requested criterion, drawing
/// each bootstrap stream once. `spec.mechanism` is ignored; each criterion
/// uses its own.
pub fn score_many(
    ids: &[CriterionId],
    data: &CensoredDataset,
    fit: &TobitFit,
    spec: &BootstrapSpec,
    mode: BiasConstantMode,
) -> Result<Vec<CriterionScore>> {
    score_each(ids, data, fit, spec, mode).into_iter().collect()
}

/// Like [`score_many`] but keeps going when one criterion fails: a failed
/// bootstrap stream only affects the criteria that consume it.
pub fn score_each(
    ids: &[CriterionId],
    data: &CensoredDataset,
    fit: &TobitFit,
    spec: &BootstrapSpec,
    mode: BiasConstantMode,
) -> Vec<Result<CriterionScore>> {
    let n = data.n();
    let samples: Vec<(Mechanism, Result<BootstrapSample>)> = Mechanism::ALL
        .into_iter()
        .filter(|&mech| ids.iter().any(|id| id.bootstrap_mechanism() == Some(mech)))
        .map(|mech| (mech, collect_replicates(data, fit, &spec.with_mechanism(mech))))
        .collect();
    let sample_for = |mech: Mechanism| -> Result<&BootstrapSample> {
        let (_, sample) = samples
            .iter()
            .find(|(m, _)| *m == mech)
            .expect("stream collected for every requested mechanism");
        sample.as_ref().map_err(Clone::clone)
    };

    ids.iter()
        .map(|&id| {
            Ok(match id.kind {
                CriterionKind::Aic => CriterionScore::closed(id, aic(fit)),
                CriterionKind::Bic => CriterionScore::closed(id, bic(fit, n)),
                CriterionKind::Aicc => CriterionScore::closed(id, aicc(fit, n)?),
                CriterionKind::Hq => CriterionScore::closed(id, hq(fit, n)?),
                CriterionKind::Eic(which) => {
                    let mech = id.mechanism.ok_or_else(|| {
                        Error::InvalidArgument("EIC criterion without a mechanism".into())
                    })?;
                    eic_from(which, sample_for(mech)?, mode)?
                }
                CriterionKind::Bcv => bcv_from(sample_for(Mechanism::Nonparametric)?)?,
                CriterionKind::Cv632 => {
                    cv632_from(fit, &bcv_from(sample_for(Mechanism::Nonparametric)?)?)
                }
                CriterionKind::Bqcv => bqcv_from(sample_for(Mechanism::Parametric)?),
                CriterionKind::Qcv632 => {
                    qcv632_from(fit, &bqcv_from(sample_for(Mechanism::Parametric)?))
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tobit::{fit_mle, TobitParams};
    use nalgebra::{DMatrix, DVector};

    fn fake_fit(loglik: f64, k: usize) -> TobitFit {
        TobitFit {
            params: TobitParams {
                beta: DVector::zeros(k.saturating_sub(1)),
                sigma: 1.0,
            },
            loglik,
            k,
            converged: true,
            iterations: 0,
            gradient_norm: 0.0,
        }
    }

    #[test]
    fn closed_form_values() {
        let fit = fake_fit(-100.0, 5);
        assert_eq!(aic(&fit), 210.0);
        assert_eq!(aic(&fake_fit(0.0, 0)), 0.0);
        assert!((bic(&fit, 100) - (200.0 + 5.0 * 100f64.ln())).abs() < 1e-12);
        assert!((bic(&fit, 100) - 223.025_850_929_940_45).abs() < 1e-9);
        assert!((aicc(&fit, 100).unwrap() - (200.0 + 1000.0 / 94.0)).abs() < 1e-12);
        assert!((aicc(&fit, 100).unwrap() - 210.638_297_872_340_4).abs() < 1e-9);
        assert!((hq(&fit, 100).unwrap() - (200.0 + 10.0 * 100f64.ln().ln())).abs() < 1e-12);
        assert!((hq(&fit, 100).unwrap() - 215.271_796_258_079).abs() < 1e-6);
    }

    #[test]
    fn bic_equals_aic_at_e_squared() {
        // n is an integer; check the penalty identity directly.
        let k = 5.0;
        assert!((k * (std::f64::consts::E.powi(2)).ln() - 2.0 * k).abs() < 1e-12);
    }

    #[test]
    fn aicc_boundaries_and_limit() {
        let fit = fake_fit(-100.0, 5);
        assert_eq!(aicc(&fit, 6), Err(Error::PenaltyUndefined { n: 6, k: 5 }));
        let at_k2 = aicc(&fit, 7).unwrap();
        assert!((at_k2 - (200.0 + 2.0 * 5.0 * 7.0)).abs() < 1e-12);
        assert!((aicc(&fit, 1_000_000_000).unwrap() - aic(&fit)).abs() < 1e-4);
    }

    #[test]
    fn penalty_orderings() {
        let fit = fake_fit(-50.0, 4);
        assert_eq!(hq(&fit, 2), Err(Error::PenaltyUndefined { n: 2, k: 4 }));
        for n in 3..5000 {
            assert!(hq(&fit, n).unwrap() < bic(&fit, n));
        }
        for n in 8..5000 {
            assert!(bic(&fit, n) > aic(&fit));
        }
        // HQ overtakes AIC once ln ln n > 1, i.e. n > e^e ≈ 15.15.
        let first = (3..100).find(|&n| hq(&fit, n).unwrap() > aic(&fit)).unwrap();
        assert_eq!(first, 16);
        for n in 6..5000 {
            assert!(aicc(&fit, n).unwrap() >= aic(&fit));
        }
    }

    #[test]
    fn criterion_ids_parse_and_label() {
        let rows = CriterionId::table_rows();
        assert_eq!(rows.len(), 23);
        for id in &rows {
            assert_eq!(id.label().parse::<CriterionId>().unwrap(), *id);
        }
        assert_eq!("eic4:pb".parse::<CriterionId>().unwrap().label(), "EIC4_pb");
        assert!("eic6:np".parse::<CriterionId>().is_err());
        assert!("eic1".parse::<CriterionId>().is_err());
        assert_eq!(CriterionId::BCV.bootstrap_mechanism(), Some(Mechanism::Nonparametric));
        assert_eq!(CriterionId::QCV632.bootstrap_mechanism(), Some(Mechanism::Parametric));
        assert_eq!(CriterionId::HQ.bootstrap_mechanism(), None);
        for id in &rows {
            assert_eq!(id.mechanism.is_some(), matches!(id.kind, CriterionKind::Eic(_)));
        }
    }

    fn toy() -> (CensoredDataset, TobitFit) {
        let x = DMatrix::from_fn(40, 1, |i, _| ((i * 7) % 11) as f64 / 5.0 - 1.0);
        let y: Vec<f64> = (0..40)
            .map(|i| {
                let v = 0.3 + 0.8 * x[(i, 0)] + (((i * 13) % 17) as f64 / 8.0 - 1.0);
                v.max(0.0)
            })
            .collect();
        let data = CensoredDataset::with_intercept(y, x, vec!["x".into()]).unwrap();
        let fit = fit_mle(&data, &FitOptions::default()).unwrap();
        (data, fit)
    }

    #[test]
    fn identity_stub_cancels_every_bias() {
        let (data, fit) = toy();
        let spec = BootstrapSpec::new(Mechanism::Parametric, 5, 1);
        let sample = collect_replicates_with(
            &data,
            &fit,
            &spec,
            |_, _| BootstrapReplicate {
                sample: data.clone(),
                source_indices: None,
                oob_indices: vec![],
                redraws_used: 0,
            },
            |_| Ok(fit.clone()),
        )
        .unwrap();
        for which in 1..=5 {
            for d in deviance_differences(which, &sample).unwrap() {
                assert_eq!(d, 0.0);
            }
            let score = eic_from(which, &sample, BiasConstantMode::Literal).unwrap();
            assert_eq!(score.value, fit.deviance());
            assert_eq!(score.bias_se, Some(0.0));
        }
        let bq = bqcv_from(&sample);
        assert_eq!(bq.value, fit.deviance());
        assert_eq!(qcv632_from(&fit, &bq).value, fit.deviance());
    }

    #[test]
    fn refit_stub_zeroes_d2_and_d3() {
        let (data, fit) = toy();
        let spec = BootstrapSpec::new(Mechanism::Nonparametric, 8, 3);
        let sample = collect_replicates_with(
            &data,
            &fit,
            &spec,
            |r, a| draw_once(Mechanism::Nonparametric, &data, &fit.params, spec.replicate_key(r, a)),
            |_| Ok(fit.clone()),
        )
        .unwrap();
        for which in [2, 3] {
            assert!(deviance_differences(which, &sample).unwrap().iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn eic_with_bias_2k_equals_aic() {
        let fit = fake_fit(-42.0, 3);
        let eval = ReplicateEval {
            boot_at_boot: 0.0,
            orig_at_boot: 0.0,
            boot_at_orig: 0.0,
            oob_scaled_deviance: None,
        };
        // D5 = 2ℓ(y^b;θ̂^b) − 2ℓ(y;θ̂) = 2k when ℓ(y^b;θ̂^b) = ℓ(y;θ̂) + k.
        let sample = BootstrapSample {
            mechanism: Mechanism::Parametric,
            in_sample_loglik: fit.loglik,
            evals: vec![
                ReplicateEval {
                    boot_at_boot: fit.loglik + fit.k as f64,
                    ..eval
                };
                4
            ],
            redraws: 0,
        };
        let score = eic_from(5, &sample, BiasConstantMode::Normalized).unwrap();
        assert_eq!(score.value, aic(&fit));
    }

    #[test]
    fn blend_weights() {
        assert_eq!(IN_SAMPLE_WEIGHT, 0.368);
        assert_eq!(BOOTSTRAP_WEIGHT, 0.632);
        let fit = fake_fit(-10.0, 2);
        let stub = CriterionScore {
            id: CriterionId::BCV,
            value: fit.deviance(),
            bias_se: Some(1.0),
            replicates_used: 3,
        };
        let blended = cv632_from(&fit, &stub);
        assert!((blended.value - fit.deviance()).abs() < 1e-12);
        assert_eq!(blended.bias_se, Some(0.632));
        let other = CriterionScore { value: 50.0, ..stub };
        assert!((cv632_from(&fit, &other).value - (0.368 * 20.0 + 0.632 * 50.0)).abs() < 1e-12);
    }

    #[test]
    fn literal_mode_doubles_b2_to_b5() {
        let (data, fit) = toy();
        let spec = BootstrapSpec::new(Mechanism::Hybrid, 6, 9);
        let sample = collect_replicates(&data, &fit, &spec).unwrap();
        let (b1n, _) = eic_bias_from(1, &sample, BiasConstantMode::Normalized).unwrap();
        let (b1l, _) = eic_bias_from(1, &sample, BiasConstantMode::Literal).unwrap();
        assert_eq!(b1n, b1l);
        for which in 2..=5 {
            let (n, sn) = eic_bias_from(which, &sample, BiasConstantMode::Normalized).unwrap();
            let (l, sl) = eic_bias_from(which, &sample, BiasConstantMode::Literal).unwrap();
            assert_eq!(l, 2.0 * n);
            assert_eq!(sl, 2.0 * sn);
        }
    }

    #[test]
    fn score_many_matches_single_entry_points() {
        let (data, fit) = toy();
        let spec = BootstrapSpec::new(Mechanism::Nonparametric, 10, 21);
        let mode = BiasConstantMode::Normalized;
        let ids = CriterionId::table_rows();
        let scores = score_many(&ids, &data, &fit, &spec, mode).unwrap();
        assert_eq!(scores.len(), 23);
        let find = |label: &str| scores.iter().find(|s| s.id.label() == label).unwrap().value;
        assert_eq!(find("BCV"), bcv(&data, &fit, &spec).unwrap().value);
        assert_eq!(find("CV632"), cv632(&data, &fit, &spec).unwrap().value);
        assert_eq!(find("BQCV"), bqcv(&data, &fit, &spec).unwrap().value);
        assert_eq!(find("QCV632"), qcv632(&data, &fit, &spec).unwrap().value);
        let pb = spec.with_mechanism(Mechanism::Parametric);
        assert_eq!(find("EIC4_pb"), eic(4, &data, &fit, &pb, mode).unwrap().value);
        assert_eq!(find("AIC"), aic(&fit));
        for s in &scores {
            assert!(s.value.is_finite());
            assert_eq!(s.bias_se.is_some(), s.id.is_bootstrap());
        }
        let again = score_many(&ids, &data, &fit, &spec, mode).unwrap();
        assert_eq!(scores, again);
    }

    #[test]
    fn contract_violations() {
        let (data, fit) = toy();
        let spec = BootstrapSpec::new(Mechanism::Parametric, 1, 0);
        assert!(eic(1, &data, &fit, &spec, BiasConstantMode::Normalized).is_err());
        let spec = BootstrapSpec::new(Mechanism::Parametric, 4, 0);
        assert!(eic_bias(0, &data, &fit, &spec, BiasConstantMode::Normalized).is_err());
        assert!(eic_bias(6, &data, &fit, &spec, BiasConstantMode::Normalized).is_err());
    }
}
