//! Training-sample generators: nonparametric pairs resampling, parametric
//! draws from the fitted Tobit model, and the hybrid of the two.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive, Stream};
use crate::tobit::{CensoredDataset, TobitParams};

const ROWS_STREAM: u64 = 0x524f_5753; // "ROWS"
const NOISE_STREAM: u64 = 0x4e4f_4953; // "NOIS"

/// Default cap on redraws of a degenerate replicate.
pub const DEFAULT_MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    /// Resample (response, covariate) pairs with replacement.
    Nonparametric,
    /// Keep the design, draw responses from the fitted model.
    Parametric,
    /// Resample design rows, then draw responses from the fitted model.
    Hybrid,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [
        Mechanism::Nonparametric,
        Mechanism::Parametric,
        Mechanism::Hybrid,
    ];

    /// Short label used in criterion names: `np`, `pb` or `npp`.
    pub fn short(self) -> &'static str {
        match self {
            Mechanism::Nonparametric => "np",
            Mechanism::Parametric => "pb",
            Mechanism::Hybrid => "npp",
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            Mechanism::Nonparametric => 1,
            Mechanism::Parametric => 2,
            Mechanism::Hybrid => 3,
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "np" | "nonparametric" => Ok(Mechanism::Nonparametric),
            "pb" | "parametric" => Ok(Mechanism::Parametric),
            "npp" | "hybrid" => Ok(Mechanism::Hybrid),
            other => Err(Error::InvalidArgument(format!("unknown bootstrap mechanism `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub mechanism: Mechanism,
    /// Number of replicates `B`.
    pub replicates: usize,
    pub max_redraws: usize,
    pub base_seed: u64,
}

impl BootstrapSpec {
    pub fn new(mechanism: Mechanism, replicates: usize, base_seed: u64) -> Self {
        Self {
            mechanism,
            replicates,
            max_redraws: DEFAULT_MAX_REDRAWS,
            base_seed,
        }
    }

    pub fn with_mechanism(self, mechanism: Mechanism) -> Self {
        Self { mechanism, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("bootstrap needs at least one replicate".into()));
        }
        Ok(())
    }

    /// Key of draw `attempt` of replicate `replicate`. Depends only on the
    /// base seed, the mechanism and the two indices.
    pub fn replicate_key(&self, replicate: usize, attempt: usize) -> u64 {
        let mech = derive(self.base_seed, self.mechanism.stream_tag());
        derive(derive(mech, replicate as u64), attempt as u64)
    }
}

/// One bootstrap training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReplicate {
    pub sample: CensoredDataset,
    /// Original row behind each sample row; `None` for purely parametric
    /// draws.
    pub source_indices: Option<Vec<usize>>,
    /// Sorted indices of original rows never drawn.
    pub oob_indices: Vec<usize>,
    pub redraws_used: usize,
}

impl BootstrapReplicate {
    /// Pairs replicate built from explicit row draws.
    pub fn from_indices(data: &CensoredDataset, indices: Vec<usize>) -> Self {
        let sample = data.select_rows(&indices);
        let oob_indices = out_of_bag(data.n(), &indices);
        Self {
            sample,
            source_indices: Some(indices),
            oob_indices,
            redraws_used: 0,
        }
    }

    /// Size of the out-of-bag complement, `m*`.
    pub fn m_star(&self) -> usize {
        self.oob_indices.len()
    }

    /// True when every response is censored, so no refit is possible.
    pub fn is_degenerate(&self) -> bool {
        self.sample.uncensored() == 0
    }
}

fn out_of_bag(n: usize, drawn: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; n];
    for &i in drawn {
        seen[i] = true;
    }
    (0..n).filter(|&i| !seen[i]).collect()
}

fn draw_rows(n: usize, key: u64) -> Vec<usize> {
    let mut stream = Stream::new(derive(key, ROWS_STREAM));
    (0..n).map(|_| stream.index(n)).collect()
}

// Responses from the fitted model against the given design rows.
fn model_responses(
    data: &CensoredDataset,
    rows: Option<&[usize]>,
    params: &TobitParams,
    key: u64,
) -> Vec<f64> {
    let mut stream = Stream::new(derive(key, NOISE_STREAM));
    let design = data.design();
    let n = data.n();
    (0..n)
        .map(|i| {
            let row = rows.map_or(i, |r| r[i]);
            let mean = design.row(row).transpose().dot(&params.beta);
            let latent = mean + params.sigma * stream.standard_normal();
            if latent > 0.0 {
                latent
            } else {
                0.0
            }
        })
        .collect()
}

fn check_params(data: &CensoredDataset, params: &TobitParams) -> Result<()> {
    if params.beta.len() != data.q() {
        return Err(Error::DimensionMismatch {
            expected: data.q(),
            found: params.beta.len(),
        });
    }
    if params.sigma.is_nan() || params.sigma <= 0.0 {
        return Err(Error::Domain("sigma must be > 0".into()));
    }
    Ok(())
}

/// A single draw under `mechanism` with no degeneracy handling.
/// `params` is ignored by the nonparametric mechanism.
pub fn draw_once(
    mechanism: Mechanism,
    data: &CensoredDataset,
    params: &TobitParams,
    key: u64,
) -> BootstrapReplicate {
    match mechanism {
        Mechanism::Nonparametric => BootstrapReplicate::from_indices(data, draw_rows(data.n(), key)),
        Mechanism::Parametric => {
            let responses = model_responses(data, None, params, key);
            BootstrapReplicate {
                sample: CensoredDataset::from_parts_unchecked(
                    responses,
                    data.design().clone(),
                    data.column_names().to_vec(),
                    data.has_intercept(),
                ),
                source_indices: None,
                oob_indices: Vec::new(),
                redraws_used: 0,
            }
        }
        Mechanism::Hybrid => {
            let rows = draw_rows(data.n(), key);
            let responses = model_responses(data, Some(&rows), params, key);
            let oob_indices = out_of_bag(data.n(), &rows);
            BootstrapReplicate {
                sample: CensoredDataset::from_parts_unchecked(
                    responses,
                    data.design().select_rows(&rows),
                    data.column_names().to_vec(),
                    data.has_intercept(),
                ),
                source_indices: Some(rows),
                oob_indices,
                redraws_used: 0,
            }
        }
    }
}

/// Draws `n` (response, covariate) pairs uniformly with replacement.
pub fn resample_nonparametric(data: &CensoredDataset, seed: u64) -> BootstrapReplicate {
    BootstrapReplicate::from_indices(data, draw_rows(data.n(), seed))
}

fn generate_model_based(
    mechanism: Mechanism,
    data: &CensoredDataset,
    params: &TobitParams,
    seed: u64,
    max_redraws: usize,
) -> Result<BootstrapReplicate> {
    check_params(data, params)?;
    for attempt in 0..=max_redraws {
        let mut rep = draw_once(mechanism, data, params, derive(seed, attempt as u64));
        if !rep.is_degenerate() {
            rep.redraws_used = attempt;
            return Ok(rep);
        }
    }
    Err(Error::DegenerateReplicate {
        replicate: 0,
        attempts: max_redraws + 1,
    })
}

/// Parametric replicate: original design, responses from the fitted model.
/// All-censored draws are redrawn from fresh substreams.
pub fn generate_parametric(
    data: &CensoredDataset,
    params: &TobitParams,
    seed: u64,
    max_redraws: usize,
) -> Result<BootstrapReplicate> {
    generate_model_based(Mechanism::Parametric, data, params, seed, max_redraws)
}

/// Hybrid replicate: resampled design rows, responses from the fitted model.
pub fn generate_hybrid(
    data: &CensoredDataset,
    params: &TobitParams,
    seed: u64,
    max_redraws: usize,
) -> Result<BootstrapReplicate> {
    generate_model_based(Mechanism::Hybrid, data, params, seed, max_redraws)
}

/// Rows of `data` that `rep` never drew.
pub fn oob_complement(data: &CensoredDataset, rep: &BootstrapReplicate) -> Result<CensoredDataset> {
    if rep.source_indices.is_none() {
        return Err(Error::InvalidArgument(
            "out-of-bag complement needs a resampled replicate".into(),
        ));
    }
    if rep.oob_indices.is_empty() {
        return Err(Error::EmptyComplement);
    }
    Ok(data.select_rows(&rep.oob_indices))
}
