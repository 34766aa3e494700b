//! Recurrence matrices (auto, cross, joint and multidimensional), line
//! structures and recurrence quantification.
//!
//! Matrices are packed bitsets, one `u64` word per 64 columns. In auto mode
//! the main diagonal and the Theiler band `|i − j| ≤ theiler` are never set,
//! and all statistics count only eligible cells.

mod lines;
mod metrics;
mod windowed;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{delay_embed, EmbeddedPoints, EmbeddingSpec};
use crate::preprocess::{normalize, NormMode};
use crate::{Error, Real, Result, Series};

pub use lines::{diagonal_histogram, diagonal_lines, vertical_histogram, vertical_lines, DiagonalLine, LineHistogram};
pub use metrics::{compute_metrics, rqa, RqaMetrics};
pub use windowed::{rqa_whole, windowed_rqa, RqaInput, WindowRqa};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrenceMode {
    Auto,
    Cross,
    Joint,
    Multi,
}

/// How the threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Radius in rescaled distance units.
    Fixed(f64),
    /// Target recurrence rate as a fraction in (0, 1).
    TargetRr(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rescale {
    /// Divide distances by their mean over eligible pairs.
    Mean,
    /// Divide distances by their maximum over eligible pairs.
    Max,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceConfig {
    pub mode: RecurrenceMode,
    pub epsilon: Threshold,
    pub rescale: Rescale,
    /// Only used in auto, joint and multi mode.
    pub theiler: usize,
    pub l_min: usize,
}

impl RecurrenceConfig {
    /// Theiler window and minimum line length taken from an embedding spec.
    pub fn from_spec(mode: RecurrenceMode, spec: &EmbeddingSpec, epsilon: Threshold, rescale: Rescale) -> Self {
        RecurrenceConfig { mode, epsilon, rescale, theiler: spec.theiler, l_min: spec.l_min }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_min < 2 {
            return Err(Error::invalid(format!("l_min must be at least 2, got {}", self.l_min)));
        }
        match self.epsilon {
            Threshold::Fixed(e) if !(e > 0.0) || e.is_nan() => Err(Error::invalid(format!("radius must be positive, got {e}"))),
            Threshold::TargetRr(r) if !(r > 0.0 && r < 1.0) => {
                Err(Error::invalid(format!("target recurrence rate must lie in (0, 1), got {r}")))
            }
            _ => Ok(()),
        }
    }

    fn band(&self) -> Option<usize> {
        match self.mode {
            RecurrenceMode::Cross => None,
            _ => Some(self.theiler),
        }
    }
}

/// Threshold bookkeeping for one thresholded distance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdInfo<F> {
    /// Mean distance over eligible pairs.
    pub d_bar: F,
    /// Divisor applied before thresholding (`d_bar`, the maximum, or 1).
    pub scale: F,
    /// Threshold in rescaled units.
    pub epsilon: F,
    /// Threshold in raw distance units: `epsilon · scale`.
    pub epsilon_abs: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceMatrix<F> {
    pub rows: usize,
    pub cols: usize,
    words: usize,
    bits: Vec<u64>,
    /// Excluded half-band for auto-type matrices, `None` for cross matrices.
    pub theiler: Option<usize>,
    /// One entry for a single matrix, two for a joint matrix (one per parent).
    pub thresholds: Vec<ThresholdInfo<F>>,
}

impl<F: Real> RecurrenceMatrix<F> {
    pub fn zeros(rows: usize, cols: usize, theiler: Option<usize>) -> Self {
        let words = cols.div_ceil(64);
        RecurrenceMatrix { rows, cols, words, bits: vec![0; rows * words], theiler, thresholds: Vec::new() }
    }

    /// Builds a matrix from a predicate; cells outside eligibility stay unset.
    pub fn from_fn(rows: usize, cols: usize, theiler: Option<usize>, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols, theiler);
        for i in 0..rows {
            for j in 0..cols {
                if m.is_eligible(i, j) && f(i, j) {
                    m.set(i, j);
                }
            }
        }
        m
    }

    pub fn is_eligible(&self, i: usize, j: usize) -> bool {
        match self.theiler {
            Some(w) => i.abs_diff(j) > w,
            None => true,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }

    pub fn row_words(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    /// Column indices of recurrent cells in row `i`, ascending.
    pub fn row_ones(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row_words(i).iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                (rest != 0).then(|| {
                    let b = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    w * 64 + b
                })
            })
        })
    }

    pub fn n_recurrent(&self) -> u64 {
        self.bits.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Cells outside the excluded band.
    pub fn n_eligible(&self) -> u64 {
        let (r, c) = (self.rows as u64, self.cols as u64);
        match self.theiler {
            None => r * c,
            Some(w) => {
                // square auto matrices: subtract the band |i − j| ≤ w
                let n = r.min(c);
                let w = (w as u64).min(n.saturating_sub(1));
                r * c - (n + 2 * (1..=w).map(|k| n - k).sum::<u64>())
            }
        }
    }

    /// Recurrence rate as a fraction of eligible cells.
    pub fn recurrence_rate(&self) -> f64 {
        let e = self.n_eligible();
        if e == 0 {
            0.0
        } else {
            self.n_recurrent() as f64 / e as f64
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| self.row_ones(i).all(|j| self.get(j, i)))
    }

    pub fn d_bar(&self) -> Option<F> {
        self.thresholds.first().map(|t| t.d_bar)
    }

    pub fn epsilon_abs(&self) -> Option<F> {
        self.thresholds.first().map(|t| t.epsilon_abs)
    }
}

fn distance<F: Real>(a: &[F], b: &[F]) -> F {
    let mut s = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        s = s + d * d;
    }
    s.sqrt()
}

/// Iterates the eligible columns of row `i`.
fn eligible_cols(i: usize, cols: usize, band: Option<usize>) -> impl Iterator<Item = usize> {
    (0..cols).filter(move |&j| band.is_none_or(|w| i.abs_diff(j) > w))
}

/// Thresholds pairwise Euclidean distances between `a` (rows) and `b`
/// (columns; `a` itself when `None`).
///
/// The mean distance is the sum of per-row sums (rows in order) divided by
/// the number of eligible cells, so the result does not depend on how rows
/// are scheduled across threads. A cell is recurrent when `d ≤ ε·scale`.
pub fn build_matrix<F: Real>(
    a: &EmbeddedPoints<F>,
    b: Option<&EmbeddedPoints<F>>,
    cfg: &RecurrenceConfig,
) -> Result<RecurrenceMatrix<F>> {
    cfg.validate()?;
    match (cfg.mode, b.is_some()) {
        (RecurrenceMode::Cross, false) => return Err(Error::invalid("cross recurrence needs a second point set")),
        (RecurrenceMode::Auto | RecurrenceMode::Multi, true) => {
            return Err(Error::invalid("auto recurrence takes a single point set"))
        }
        (RecurrenceMode::Joint, _) => return Err(Error::invalid("joint matrices are built with joint_matrix")),
        _ => {}
    }
    let b = b.unwrap_or(a);
    if a.dim != b.dim {
        return Err(Error::ShapeMismatch(format!("point dimensions {} and {}", a.dim, b.dim)));
    }
    let (rows, cols, band) = (a.len(), b.len(), cfg.band());
    let mut m = RecurrenceMatrix::<F>::zeros(rows, cols, band);
    let n_eligible = m.n_eligible();
    if n_eligible == 0 {
        return Err(Error::TooShort { required: band.map_or(1, |w| w + 2), actual: rows.min(cols) });
    }

    let row_stats: Vec<(F, F)> = (0..rows)
        .into_par_iter()
        .map(|i| {
            let p = a.point(i);
            eligible_cols(i, cols, band).fold((F::zero(), F::zero()), |(s, mx), j| {
                let d = distance(p, b.point(j));
                (s + d, mx.max(d))
            })
        })
        .collect();
    let sum = row_stats.iter().fold(F::zero(), |acc, r| acc + r.0);
    let max = row_stats.iter().fold(F::zero(), |acc, r| acc.max(r.1));
    let d_bar = sum / F::from_usize_lossy(n_eligible as usize);
    if !(d_bar > F::zero()) {
        return Err(Error::degenerate("all embedded points coincide (mean distance is zero)"));
    }
    let scale = match cfg.rescale {
        Rescale::Mean => d_bar,
        Rescale::Max => max,
        Rescale::None => F::one(),
    };
    let (epsilon, epsilon_abs) = match cfg.epsilon {
        Threshold::Fixed(e) => (F::lit(e), F::lit(e) * scale),
        Threshold::TargetRr(r) => {
            let abs = quantile_radius(a, b, band, r)?;
            (abs / scale, abs)
        }
    };

    let row_bits: Vec<Vec<u64>> = (0..rows)
        .into_par_iter()
        .map(|i| {
            let p = a.point(i);
            let mut words = vec![0u64; m.words];
            for j in eligible_cols(i, cols, band) {
                if distance(p, b.point(j)) <= epsilon_abs {
                    words[j / 64] |= 1 << (j % 64);
                }
            }
            words
        })
        .collect();
    for (i, w) in row_bits.into_iter().enumerate() {
        m.bits[i * m.words..(i + 1) * m.words].copy_from_slice(&w);
    }
    m.thresholds.push(ThresholdInfo { d_bar, scale, epsilon, epsilon_abs });
    debug!(
        "recurrence matrix {rows}x{cols}: d_bar={d_bar} eps_abs={epsilon_abs} rr={:.4}",
        m.recurrence_rate()
    );
    Ok(m)
}

/// Radius giving the requested recurrence rate: the k-th smallest eligible
/// distance with `k = round(rate · count)`. Auto matrices are symmetric, so
/// only the upper triangle is ranked.
fn quantile_radius<F: Real>(a: &EmbeddedPoints<F>, b: &EmbeddedPoints<F>, band: Option<usize>, rate: f64) -> Result<F> {
    let (rows, cols) = (a.len(), b.len());
    let mut d: Vec<F> = (0..rows)
        .into_par_iter()
        .flat_map_iter(|i| {
            let start = band.map_or(0, |w| i + w + 1);
            (start.min(cols)..cols).map(move |j| distance(a.point(i), b.point(j)))
        })
        .collect();
    if d.is_empty() {
        return Err(Error::TooShort { required: band.map_or(1, |w| w + 2), actual: rows });
    }
    let k = ((rate * d.len() as f64).round() as usize).clamp(1, d.len());
    let (_, kth, _) = d.select_nth_unstable_by(k - 1, |x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok(*kth)
}

/// Joint recurrence: elementwise AND of two auto-type matrices of equal size.
pub fn joint_matrix<F: Real>(ra: &RecurrenceMatrix<F>, rb: &RecurrenceMatrix<F>) -> Result<RecurrenceMatrix<F>> {
    if ra.rows != rb.rows || ra.cols != rb.cols {
        return Err(Error::ShapeMismatch(format!(
            "joint recurrence of {}x{} and {}x{} matrices",
            ra.rows, ra.cols, rb.rows, rb.cols
        )));
    }
    let theiler = match (ra.theiler, rb.theiler) {
        (Some(x), Some(y)) => Some(x.max(y)),
        _ => return Err(Error::invalid("joint recurrence combines two auto recurrence matrices")),
    };
    let mut m = RecurrenceMatrix::zeros(ra.rows, ra.cols, theiler);
    for (o, (x, y)) in m.bits.iter_mut().zip(ra.bits.iter().zip(&rb.bits)) {
        *o = x & y;
    }
    m.thresholds = ra.thresholds.iter().chain(&rb.thresholds).copied().collect();
    Ok(m)
}

/// Stacks the delay embeddings of several z-scored series into points of
/// dimension `N·m`. All series must share length and sampling rate.
pub fn multi_embed<F: Real>(series: &[Series<F>], spec: &EmbeddingSpec) -> Result<EmbeddedPoints<F>> {
    let first = series.first().ok_or_else(|| Error::invalid("multidimensional embedding needs at least one series"))?;
    if let Some(s) = series.iter().find(|s| s.len() != first.len() || s.rate() != first.rate()) {
        return Err(Error::ShapeMismatch(format!(
            "series of length {} at {} Hz does not match {} at {} Hz",
            s.len(),
            s.rate(),
            first.len(),
            first.rate()
        )));
    }
    let parts = series
        .iter()
        .map(|s| delay_embed(&normalize(s, NormMode::ZScore)?, spec))
        .collect::<Result<Vec<_>>>()?;
    let n = parts[0].len();
    let mut data = Vec::with_capacity(n * spec.m * series.len());
    for i in 0..n {
        for p in &parts {
            data.extend_from_slice(p.point(i));
        }
    }
    EmbeddedPoints::new(spec.m * series.len(), data)
}

#[cfg(test)]
mod tests;
