//! Time-delay embedding and data-driven choice of delay (average mutual
//! information) and dimension (false nearest neighbours).

mod ami;
mod fnn;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result, Series};

pub use ami::{ami, ami_with, average_curves, cross_ami, cross_ami_with, AmiCurve, AmiParams, Binning};
pub use fnn::{fnn, fnn_with, FnnCurve, FnnParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub m: usize,
    pub tau: usize,
    /// Half-width of the excluded band around the main diagonal, in samples.
    pub theiler: usize,
    pub l_min: usize,
}

impl EmbeddingSpec {
    pub fn new(m: usize, tau: usize, theiler: usize, l_min: usize) -> Result<Self> {
        let s = EmbeddingSpec { m, tau, theiler, l_min };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.tau == 0 {
            return Err(Error::invalid(format!("embedding needs m >= 1 and tau >= 1, got m={} tau={}", self.m, self.tau)));
        }
        if self.l_min < 2 {
            return Err(Error::invalid(format!("l_min must be at least 2, got {}", self.l_min)));
        }
        Ok(())
    }

    /// Span of one embedded point in samples minus one: `(m − 1)·τ`.
    pub fn span(&self) -> usize {
        (self.m - 1) * self.tau
    }

    /// Number of embedded points for a series of length `n`.
    pub fn n_embedded(&self, n: usize) -> usize {
        n.saturating_sub(self.span())
    }

    /// Shortest series that still yields at least `l_min` points.
    pub fn min_len(&self) -> usize {
        self.span() + self.l_min
    }
}

/// Points in R^dim, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPoints<F> {
    pub dim: usize,
    pub data: Vec<F>,
}

impl<F: Real> EmbeddedPoints<F> {
    pub fn new(dim: usize, data: Vec<F>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::ShapeMismatch(format!("{} values do not form points of dimension {dim}", data.len())));
        }
        Ok(EmbeddedPoints { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[F] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Delay vectors `(s[t], s[t−τ], …, s[t−(m−1)τ])` with `t = i + (m−1)τ`, so
/// point 0 is the earliest with a full history.
pub fn delay_embed<F: Real>(s: &Series<F>, spec: &EmbeddingSpec) -> Result<EmbeddedPoints<F>> {
    spec.validate()?;
    let values = s.require_valid("delay embedding")?;
    let n_e = spec.n_embedded(values.len());
    if n_e == 0 {
        return Err(Error::TooShort { required: spec.span() + 1, actual: values.len() });
    }
    let mut data = Vec::with_capacity(n_e * spec.m);
    for i in 0..n_e {
        let t = i + spec.span();
        data.extend((0..spec.m).map(|k| values[t - k * spec.tau]));
    }
    EmbeddedPoints::new(spec.m, data)
}

/// Parameter choice for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesParameters<F> {
    pub ami: AmiCurve<F>,
    pub tau: usize,
    pub fnn: FnnCurve<F>,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleParameters<F> {
    pub spec: EmbeddingSpec,
    pub per_series: Vec<SeriesParameters<F>>,
}

/// Settings for [`estimate_sample_parameters`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationParams {
    pub max_lag: usize,
    pub max_m: usize,
    pub ami: AmiParams,
    pub fnn: FnnParams,
}

impl Default for EstimationParams {
    fn default() -> Self {
        EstimationParams { max_lag: 100, max_m: 10, ami: AmiParams::default(), fnn: FnnParams::default() }
    }
}

/// Median of integers; even counts take the upper-rounded midpoint.
fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]).div_ceil(2)
    }
}

/// Per-series AMI and FNN curves, combined into one specification: τ is the
/// median of the per-series delays, m the maximum of the per-series
/// dimensions (over-embedding is the safer error), Theiler = τ, l_min = 2.
pub fn estimate_sample_parameters<F: Real>(series: &[Series<F>], params: &EstimationParams) -> Result<SampleParameters<F>> {
    if series.is_empty() {
        return Err(Error::invalid("parameter estimation needs at least one series"));
    }
    let per_series = series
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let curve = ami_with(s, params.max_lag, &params.ami).map_err(|e| e.in_stage("ami", format!("series {i}")))?;
            let tau = curve.selected_tau();
            let fc = fnn_with(s, tau, params.max_m, &params.fnn).map_err(|e| e.in_stage("fnn", format!("series {i}")))?;
            let m = fc.selected_m.unwrap_or(params.max_m);
            Ok(SeriesParameters { ami: curve, tau, fnn: fc, m })
        })
        .collect::<Result<Vec<_>>>()?;
    let tau = median(per_series.iter().map(|p| p.tau).collect());
    let m = per_series.iter().map(|p| p.m).max().unwrap_or(1);
    Ok(SampleParameters { spec: EmbeddingSpec { m, tau, theiler: tau, l_min: 2 }, per_series })
}
