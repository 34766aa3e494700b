use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::preprocess::mean_sd;
use crate::{Error, Real, Result, Series};

/// Kennel false-nearest-neighbour thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FnnParams {
    /// Distance-ratio threshold on the added coordinate.
    pub r_tol: f64,
    /// Threshold on the enlarged distance relative to the series SD.
    pub a_tol: f64,
    /// A dimension is accepted once its fraction drops below this.
    pub threshold: f64,
    /// Cap on query points (evenly spaced) to bound the brute-force search.
    pub max_queries: usize,
}

impl Default for FnnParams {
    fn default() -> Self {
        FnnParams { r_tol: 10.0, a_tol: 2.0, threshold: 0.01, max_queries: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnnCurve<F> {
    pub dims: Vec<usize>,
    pub fnn_fraction: Vec<F>,
    pub selected_m: Option<usize>,
}

/// Fraction of false neighbours in dimensions `1..=max_m` with default thresholds
/// apart from `r_tol` and `a_tol`.
pub fn fnn<F: Real>(s: &Series<F>, tau: usize, max_m: usize, r_tol: f64, a_tol: f64) -> Result<FnnCurve<F>> {
    fnn_with(s, tau, max_m, &FnnParams { r_tol, a_tol, ..FnnParams::default() })
}

pub fn fnn_with<F: Real>(s: &Series<F>, tau: usize, max_m: usize, p: &FnnParams) -> Result<FnnCurve<F>> {
    if tau == 0 || max_m == 0 {
        return Err(Error::invalid("FNN needs tau >= 1 and max_m >= 1"));
    }
    let x = s.require_valid("false nearest neighbours")?;
    let (_, sd) = mean_sd(s).ok_or_else(|| Error::degenerate("empty series"))?;
    if !(sd > F::zero()) {
        return Err(Error::degenerate("false nearest neighbours of a constant series"));
    }
    let required = max_m * tau + 2;
    if x.len() < required {
        return Err(Error::TooShort { required, actual: x.len() });
    }
    let (r_tol, a_tol) = (F::lit(p.r_tol), F::lit(p.a_tol));
    // distances below this are treated as identical states
    let floor = F::epsilon().sqrt() * sd;
    let mut fractions = Vec::with_capacity(max_m);
    for d in 1..=max_m {
        // times t with d + 1 coordinates available: x[t], …, x[t − dτ]
        let t0 = d * tau;
        let times: Vec<usize> = (t0..x.len()).collect();
        let n = times.len();
        let stride = n.div_ceil(p.max_queries.max(1));
        let dist2 = |a: usize, b: usize| (0..d).map(|k| x[a - k * tau] - x[b - k * tau]).map(|v| v * v).sum::<F>();
        let (false_n, counted) = (0..n)
            .step_by(stride)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&qi| {
                let q = times[qi];
                let mut best = (F::infinity(), usize::MAX);
                for &t in &times {
                    if t != q {
                        let dd = dist2(q, t);
                        if dd < best.0 {
                            best = (dd, t);
                        }
                    }
                }
                let r_d = best.0.sqrt().max(floor);
                let extra = (x[q - d * tau] - x[best.1 - d * tau]).abs();
                let enlarged = (best.0 + extra * extra).sqrt();
                let is_false = extra / r_d > r_tol || enlarged / sd > a_tol;
                (usize::from(is_false), 1usize)
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        fractions.push(F::from_usize_lossy(false_n) / F::from_usize_lossy(counted));
    }
    let thr = F::lit(p.threshold);
    let selected_m = fractions.iter().position(|&f| f < thr).map(|i| i + 1);
    Ok(FnnCurve { dims: (1..=max_m).collect(), fnn_fraction: fractions, selected_m })
}
