//! Feature derivation from keypoints, finite-difference derivatives, windowed
//! summary statistics and lagged cross-correlation.

use serde::{Deserialize, Serialize};

use crate::model::{make_windows, WindowSpec};
use crate::preprocess::{mean_sd, normalize, NormMode};
use crate::{Error, PoseSequence, Real, Result, Series};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeypointRef {
    Index(usize),
    Label(String),
}

impl KeypointRef {
    pub fn resolve<F: Real>(&self, p: &PoseSequence<F>) -> Result<usize> {
        match self {
            KeypointRef::Index(i) if *i < p.n_keypoints() => Ok(*i),
            KeypointRef::Index(i) => Err(Error::invalid(format!(
                "keypoint index {i} out of range (sequence has {})",
                p.n_keypoints()
            ))),
            KeypointRef::Label(l) => p
                .keypoint_index(l)
                .ok_or_else(|| Error::invalid(format!("unknown keypoint label `{l}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// One coordinate of one keypoint.
    RawCoord,
    /// Frame-to-frame displacement norm of one keypoint.
    Magnitude,
    /// Per-frame distance within each listed pair, averaged over pairs.
    Aperture,
    /// Distance between the centroids of `keypoints` and `keypoints_b`.
    Distance,
    /// Speed of the centroid of a region of interest.
    CentroidMagnitude,
}

/// Declarative feature definition, as read from a feature spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    pub keypoints: Vec<KeypointRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keypoints_b: Vec<KeypointRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
}

impl FeatureDef {
    /// Resolves and checks keypoint references against a sequence.
    pub fn validate<F: Real>(&self, p: &PoseSequence<F>) -> Result<()> {
        let res = |v: &[KeypointRef]| v.iter().map(|k| k.resolve(p)).collect::<Result<Vec<_>>>();
        let a = res(&self.keypoints)?;
        let b = res(&self.keypoints_b)?;
        if let Some(ax) = self.axis {
            if ax.index() >= p.dims {
                return Err(Error::invalid(format!("feature `{}`: axis {:?} on {}D data", self.name, ax, p.dims)));
            }
        }
        let bad = |m: &str| Err(Error::invalid(format!("feature `{}`: {m}", self.name)));
        match self.kind {
            FeatureKind::RawCoord if a.len() != 1 || self.axis.is_none() => bad("raw_coord needs one keypoint and an axis"),
            FeatureKind::Magnitude if a.len() != 1 => bad("magnitude needs exactly one keypoint"),
            FeatureKind::Aperture if a.is_empty() || a.len() % 2 != 0 => bad("aperture needs keypoint pairs"),
            FeatureKind::Distance if a.is_empty() || b.is_empty() => bad("distance needs two point sets"),
            FeatureKind::CentroidMagnitude if a.is_empty() => bad("centroid_magnitude needs at least one keypoint"),
            _ => Ok(()),
        }
    }

    pub fn compute<F: Real>(&self, p: &PoseSequence<F>) -> Result<Series<F>> {
        self.validate(p)?;
        let a: Vec<usize> = self.keypoints.iter().map(|k| k.resolve(p)).collect::<Result<_>>()?;
        let b: Vec<usize> = self.keypoints_b.iter().map(|k| k.resolve(p)).collect::<Result<_>>()?;
        let axis = self.axis.map(Axis::index);
        Ok(match self.kind {
            FeatureKind::RawCoord => p.coordinate_series(a[0], axis.unwrap()),
            FeatureKind::Magnitude => magnitude_series(p, a[0]),
            FeatureKind::Aperture => {
                let pairs: Vec<(usize, usize)> = a.chunks(2).map(|c| (c[0], c[1])).collect();
                aperture_pairs(p, &pairs, axis)
            }
            FeatureKind::Distance => centroid_distance(p, &a, &b, axis),
            FeatureKind::CentroidMagnitude => roi_centroid_velocity(p, &a),
        })
    }
}

fn norm<F: Real>(a: &[F], b: &[F], axis: Option<usize>) -> F {
    match axis {
        Some(ax) => (a[ax] - b[ax]).abs(),
        None => a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<F>().sqrt(),
    }
}

/// Frame-to-frame displacement norms (length `n - 1`); a sample is masked
/// when either endpoint is.
pub fn magnitude_series<F: Real>(p: &PoseSequence<F>, kp: usize) -> Series<F> {
    let n = p.n_frames();
    let vals: Vec<Option<F>> = (1..n)
        .map(|f| {
            (p.is_valid(f - 1, kp) && p.is_valid(f, kp)).then(|| norm(p.point(f, kp), p.point(f - 1, kp), None))
        })
        .collect();
    Series::from_options(&vals, p.base.rate).expect("rate already validated")
}

/// Per-frame distance between two keypoints, Euclidean or along one axis.
pub fn aperture<F: Real>(p: &PoseSequence<F>, a: usize, b: usize, axis: Option<usize>) -> Series<F> {
    aperture_pairs(p, &[(a, b)], axis)
}

/// Aperture averaged over several pairs (e.g. both eyes); a frame is valid
/// only when every pair is.
pub fn aperture_pairs<F: Real>(p: &PoseSequence<F>, pairs: &[(usize, usize)], axis: Option<usize>) -> Series<F> {
    let k = F::from_usize_lossy(pairs.len());
    let vals: Vec<Option<F>> = (0..p.n_frames())
        .map(|f| {
            pairs
                .iter()
                .map(|&(a, b)| (p.is_valid(f, a) && p.is_valid(f, b)).then(|| norm(p.point(f, a), p.point(f, b), axis)))
                .sum::<Option<F>>()
                .map(|s| s / k)
        })
        .collect();
    Series::from_options(&vals, p.base.rate).expect("rate already validated")
}

fn centroid<F: Real>(p: &PoseSequence<F>, f: usize, set: &[usize]) -> Option<Vec<F>> {
    let valid: Vec<usize> = set.iter().copied().filter(|&k| p.is_valid(f, k)).collect();
    if valid.is_empty() {
        return None;
    }
    let n = F::from_usize_lossy(valid.len());
    Some(
        (0..p.dims)
            .map(|d| valid.iter().map(|&k| p.point(f, k)[d]).sum::<F>() / n)
            .collect(),
    )
}

pub fn centroid_distance<F: Real>(p: &PoseSequence<F>, a: &[usize], b: &[usize], axis: Option<usize>) -> Series<F> {
    let vals: Vec<Option<F>> = (0..p.n_frames())
        .map(|f| match (centroid(p, f, a), centroid(p, f, b)) {
            (Some(x), Some(y)) => Some(norm(&x, &y, axis)),
            _ => None,
        })
        .collect();
    Series::from_options(&vals, p.base.rate).expect("rate already validated")
}

/// Speed of the region centroid (mean of its unmasked keypoints), from first
/// differences scaled by the sampling rate; length `n - 1`.
pub fn roi_centroid_velocity<F: Real>(p: &PoseSequence<F>, keypoints: &[usize]) -> Series<F> {
    let cents: Vec<Option<Vec<F>>> = (0..p.n_frames()).map(|f| centroid(p, f, keypoints)).collect();
    let rate = F::lit(p.base.rate);
    let vals: Vec<Option<F>> = cents
        .windows(2)
        .map(|w| match (&w[0], &w[1]) {
            (Some(a), Some(b)) => Some(norm(b, a, None) * rate),
            _ => None,
        })
        .collect();
    Series::from_options(&vals, p.base.rate).expect("rate already validated")
}

/// Finite-difference derivative of order 1 or 2, in units per second.
///
/// Interior samples use central differences; the two edge samples use
/// one-sided stencils. A sample is masked when it, or any stencil point, is.
pub fn differentiate<F: Real>(s: &Series<F>, order: usize) -> Result<Series<F>> {
    if !(order == 1 || order == 2) {
        return Err(Error::invalid(format!("derivative order must be 1 or 2, got {order}")));
    }
    let n = s.len();
    if n < order + 1 {
        return Err(Error::TooShort { required: order + 1, actual: n });
    }
    let rate = F::lit(s.rate());
    let two = F::lit(2.0);
    let v = &s.values;
    let ok = |idx: &[usize]| idx.iter().all(|&i| s.mask[i]);
    let mut out = vec![None; n];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = match order {
            1 => {
                if i == 0 {
                    ok(&[0, 1]).then(|| (v[1] - v[0]) * rate)
                } else if i == n - 1 {
                    ok(&[n - 2, n - 1]).then(|| (v[n - 1] - v[n - 2]) * rate)
                } else {
                    ok(&[i - 1, i, i + 1]).then(|| (v[i + 1] - v[i - 1]) * rate / two)
                }
            }
            _ => {
                let c = i.clamp(1, n - 2);
                (s.mask[i] && ok(&[c - 1, c, c + 1])).then(|| (v[c + 1] - two * v[c] + v[c - 1]) * rate * rate)
            }
        };
    }
    Series::from_options(&out, s.rate())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats<F> {
    pub mean: F,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: F,
    pub max: F,
    pub rms: F,
    pub n_valid: usize,
}

impl<F: Real> SummaryStats<F> {
    pub fn of(values: impl Iterator<Item = F> + Clone) -> Option<Self> {
        let n = values.clone().count();
        if n == 0 {
            return None;
        }
        let nf = F::from_usize_lossy(n);
        let mean = values.clone().sum::<F>() / nf;
        let ss = values.clone().map(|v| (v - mean) * (v - mean)).sum::<F>();
        let sd = if n > 1 { (ss / F::from_usize_lossy(n - 1)).sqrt() } else { F::zero() };
        let max = values.clone().fold(F::neg_infinity(), F::max);
        let rms = (values.map(|v| v * v).sum::<F>() / nf).sqrt();
        Some(SummaryStats { mean, sd, max, rms, n_valid: n })
    }
}

/// Window summary of a signal and its first two derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicSummary<F> {
    pub window_start: usize,
    pub displacement: Option<SummaryStats<F>>,
    pub velocity: Option<SummaryStats<F>>,
    pub acceleration: Option<SummaryStats<F>>,
    /// Fewer than half the window's displacement samples are valid.
    pub sparse: bool,
}

impl<F: Real> KinematicSummary<F> {
    /// Nine window statistics: {mean, sd, max} × {displacement, velocity, acceleration}.
    pub fn nine(&self) -> [Option<F>; 9] {
        let mut out = [None; 9];
        for (i, s) in [&self.displacement, &self.velocity, &self.acceleration].iter().enumerate() {
            if let Some(s) = s {
                out[3 * i] = Some(s.mean);
                out[3 * i + 1] = Some(s.sd);
                out[3 * i + 2] = Some(s.max);
            }
        }
        out
    }
}

fn valid_in<F: Real>(s: &Series<F>, r: std::ops::Range<usize>) -> impl Iterator<Item = F> + Clone + '_ {
    r.filter(move |&k| s.mask[k]).map(move |k| s.values[k])
}

/// Summaries per window over valid samples; derivatives are taken on the
/// whole series before windowing.
pub fn summarize_window<F: Real>(s: &Series<F>, windows: &WindowSpec) -> Result<Vec<KinematicSummary<F>>> {
    let ranges = make_windows(s.len(), windows)?;
    let vel = differentiate(s, 1)?;
    let acc = differentiate(s, 2)?;
    Ok(ranges
        .into_iter()
        .map(|r| {
            let n_valid = r.clone().filter(|&k| s.mask[k]).count();
            KinematicSummary {
                window_start: r.start,
                displacement: SummaryStats::of(valid_in(s, r.clone())),
                velocity: SummaryStats::of(valid_in(&vel, r.clone())),
                acceleration: SummaryStats::of(valid_in(&acc, r.clone())),
                sparse: 2 * n_valid < r.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrelation<F> {
    pub lags: Vec<isize>,
    pub values: Vec<F>,
    pub lag0: F,
}

impl<F: Real> CrossCorrelation<F> {
    pub fn at(&self, lag: isize) -> Option<F> {
        self.lags.iter().position(|&l| l == lag).map(|i| self.values[i])
    }

    pub fn argmax(&self) -> isize {
        let mut best = 0;
        for i in 1..self.values.len() {
            if self.values[i] > self.values[best] {
                best = i;
            }
        }
        self.lags[best]
    }
}

/// Normalized cross-correlation `r(ℓ) = (1/n) Σ_t za[t] · zb[t + ℓ]` of the
/// z-scored inputs, for `ℓ ∈ [−max_lag, max_lag]`. Pairs touching a masked
/// sample are skipped; values lie in [−1, 1].
pub fn crosscorr<F: Real>(a: &Series<F>, b: &Series<F>, max_lag: usize) -> Result<CrossCorrelation<F>> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("series lengths {} and {}", a.len(), b.len())));
    }
    let za = normalize(a, NormMode::ZScore)?;
    let zb = normalize(b, NormMode::ZScore)?;
    let n = a.len();
    let max_lag = max_lag.min(n.saturating_sub(1)) as isize;
    // normalize by the geometric mean of valid counts so the bound holds
    let count = F::from_usize_lossy(za.n_valid()).sqrt() * F::from_usize_lossy(zb.n_valid()).sqrt();
    let mut lags = Vec::new();
    let mut values = Vec::new();
    for lag in -max_lag..=max_lag {
        let mut acc = F::zero();
        let (t0, t1) = if lag >= 0 { (0, n as isize - lag) } else { (-lag, n as isize) };
        for t in t0..t1 {
            let (i, j) = (t as usize, (t + lag) as usize);
            if za.mask[i] && zb.mask[j] {
                acc = acc + za.values[i] * zb.values[j];
            }
        }
        lags.push(lag);
        values.push((acc / count).max(-F::one()).min(F::one()));
    }
    let lag0 = values[max_lag as usize];
    Ok(CrossCorrelation { lags, values, lag0 })
}

/// Lag-0 cross-correlation per window, each window z-scored on its own.
pub fn windowed_lag0<F: Real>(a: &Series<F>, b: &Series<F>, windows: &WindowSpec) -> Result<Vec<(usize, Option<F>)>> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("series lengths {} and {}", a.len(), b.len())));
    }
    Ok(make_windows(a.len(), windows)?
        .into_iter()
        .map(|r| (r.start, crosscorr(&a.slice(r.clone()), &b.slice(r), 0).ok().map(|c| c.lag0)))
        .collect())
}

/// Population identity check used in tests: `rms² = mean² + sd² (n−1)/n`.
pub fn rms_identity_residual<F: Real>(s: &SummaryStats<F>) -> F {
    let n = F::from_usize_lossy(s.n_valid);
    s.rms * s.rms - (s.mean * s.mean + s.sd * s.sd * (n - F::one()) / n)
}

/// Mean and SD of valid samples, re-exported for feature summaries.
pub fn series_mean_sd<F: Real>(s: &Series<F>) -> Option<(F, F)> {
    mean_sd(s)
}
