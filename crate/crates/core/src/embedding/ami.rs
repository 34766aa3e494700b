use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result, Series};

/// Mutual information per lag, in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct AmiCurve<F> {
    pub lags: Vec<usize>,
    pub mi: Vec<F>,
    /// First strict local minimum (of the smoothed curve when smoothing is on).
    pub first_minimum: Option<usize>,
    /// First lag after which three consecutive changes are each below 1% of
    /// the curve's range.
    pub plateau_onset: Option<usize>,
}

impl<F: Real> AmiCurve<F> {
    fn from_values(raw: Vec<F>, smoothing: usize) -> Self {
        let lags = (0..raw.len()).collect();
        let mi = smooth(&raw, smoothing);
        let first_minimum = (1..mi.len().saturating_sub(1)).find(|&l| mi[l] < mi[l - 1] && mi[l] < mi[l + 1]);
        let (lo, hi) = mi.iter().fold((F::infinity(), F::neg_infinity()), |(a, b), &v| (a.min(v), b.max(v)));
        let tol = (hi - lo) * F::lit(0.01);
        let flat = |l: usize| (mi[l + 1] - mi[l]).abs() < tol;
        let plateau_onset = (1..mi.len().saturating_sub(3)).find(|&l| flat(l) && flat(l + 1) && flat(l + 2));
        AmiCurve { lags, mi: raw, first_minimum, plateau_onset }
    }

    /// Delay choice: first minimum, else plateau onset, else the first lag
    /// where MI falls below `MI(0)/e`, else the largest lag computed.
    pub fn selected_tau(&self) -> usize {
        let last = self.mi.len().saturating_sub(1).max(1);
        self.first_minimum.or(self.plateau_onset).unwrap_or_else(|| {
            let cut = self.mi[0] / F::E();
            (1..self.mi.len()).find(|&l| self.mi[l] < cut).unwrap_or(last)
        })
    }
}

/// How samples are assigned to histogram bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    /// Each sample counts fully in its bin.
    Hard,
    /// Each sample is split between the two nearest bin centres in
    /// proportion to proximity (linear binning). Much less sensitive to how
    /// a smooth trajectory happens to cross bin edges.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmiParams {
    pub bins: usize,
    pub binning: Binning,
    /// Half-width of the centred moving average applied before searching
    /// for the first minimum and plateau; 0 disables it.
    pub smoothing: usize,
}

impl Default for AmiParams {
    fn default() -> Self {
        AmiParams { bins: 32, binning: Binning::Linear, smoothing: 1 }
    }
}

impl AmiParams {
    pub fn with_bins(bins: usize) -> Self {
        AmiParams { bins, ..Default::default() }
    }
}

/// Per-sample bin index and weight on that bin; the remainder goes to the
/// next bin up.
/// Centred moving average with the window shrunk at the ends.
fn smooth<F: Real>(v: &[F], half: usize) -> Vec<F> {
    if half == 0 {
        return v.to_vec();
    }
    (0..v.len())
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(half), (i + half + 1).min(v.len()));
            v[lo..hi].iter().copied().sum::<F>() / F::from_usize_lossy(hi - lo)
        })
        .collect()
}

struct Binned<F> {
    bin: Vec<usize>,
    weight: Vec<F>,
    valid: Vec<bool>,
}

fn bin_series<F: Real>(s: &Series<F>, p: &AmiParams) -> Result<Binned<F>> {
    let bins = p.bins;
    let (lo, hi) = s
        .valid_values()
        .fold((F::infinity(), F::neg_infinity()), |(a, b), v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return Err(Error::degenerate("mutual information of a constant series"));
    }
    let mut bin = Vec::with_capacity(s.len());
    let mut weight = Vec::with_capacity(s.len());
    for (&v, &ok) in s.values.iter().zip(&s.mask) {
        let (b, w) = if !ok {
            (0, F::zero())
        } else {
            match p.binning {
                Binning::Hard => {
                    let width = (hi - lo) / F::from_usize_lossy(bins);
                    (((v - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1), F::one())
                }
                Binning::Linear => {
                    let u = (v - lo) / (hi - lo) * F::from_usize_lossy(bins - 1);
                    let b = u.floor().to_usize().unwrap_or(0).min(bins - 2);
                    (b, F::one() - (u - F::from_usize_lossy(b)))
                }
            }
        };
        bin.push(b);
        weight.push(w);
    }
    Ok(Binned { bin, weight, valid: s.mask.clone() })
}

/// Plug-in MI between `a[t]` and `b[t + lag]` over pairs where both are valid.
fn mi_at<F: Real>(a: &Binned<F>, b: &Binned<F>, lag: usize, bins: usize, binning: Binning) -> F {
    let n = a.bin.len().min(b.bin.len());
    let mut joint = vec![F::zero(); bins * bins];
    let mut total = 0usize;
    for t in 0..n.saturating_sub(lag) {
        let u = t + lag;
        if !(a.valid[t] && b.valid[u]) {
            continue;
        }
        total += 1;
        let (i, j) = (a.bin[t], b.bin[u]);
        match binning {
            Binning::Hard => joint[i * bins + j] = joint[i * bins + j] + F::one(),
            Binning::Linear => {
                let (wa, wb) = (a.weight[t], b.weight[u]);
                let (va, vb) = (F::one() - wa, F::one() - wb);
                joint[i * bins + j] = joint[i * bins + j] + wa * wb;
                joint[i * bins + j + 1] = joint[i * bins + j + 1] + wa * vb;
                joint[(i + 1) * bins + j] = joint[(i + 1) * bins + j] + va * wb;
                joint[(i + 1) * bins + j + 1] = joint[(i + 1) * bins + j + 1] + va * vb;
            }
        }
    }
    if total == 0 {
        return F::zero();
    }
    let nt = F::from_usize_lossy(total);
    let pa: Vec<F> = (0..bins).map(|i| (0..bins).map(|j| joint[i * bins + j]).sum()).collect();
    let pb: Vec<F> = (0..bins).map(|j| (0..bins).map(|i| joint[i * bins + j]).sum()).collect();
    let mut mi = F::zero();
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c > F::zero() {
                // p_ij ln(p_ij / (p_i p_j)) in counts
                mi = mi + c / nt * (c * nt / (pa[i] * pb[j])).ln();
            }
        }
    }
    mi.max(F::zero())
}

fn check_len<F: Real>(s: &Series<F>, bins: usize) -> Result<()> {
    if bins < 3 {
        return Err(Error::invalid("AMI needs at least 3 bins"));
    }
    if s.n_valid() < 10 * bins {
        return Err(Error::TooShort { required: 10 * bins, actual: s.n_valid() });
    }
    Ok(())
}

/// Average mutual information of a series with its lagged copy for lags
/// `0..=max_lag`, using default settings apart from the bin count.
pub fn ami<F: Real>(s: &Series<F>, max_lag: usize, bins: usize) -> Result<AmiCurve<F>> {
    ami_with(s, max_lag, &AmiParams::with_bins(bins))
}

pub fn ami_with<F: Real>(s: &Series<F>, max_lag: usize, p: &AmiParams) -> Result<AmiCurve<F>> {
    cross_ami_with(s, s, max_lag, p)
}

/// Mutual information between `a[t]` and `b[t + lag]`.
pub fn cross_ami<F: Real>(a: &Series<F>, b: &Series<F>, max_lag: usize, bins: usize) -> Result<AmiCurve<F>> {
    cross_ami_with(a, b, max_lag, &AmiParams::with_bins(bins))
}

pub fn cross_ami_with<F: Real>(a: &Series<F>, b: &Series<F>, max_lag: usize, p: &AmiParams) -> Result<AmiCurve<F>> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("series lengths {} and {}", a.len(), b.len())));
    }
    check_len(a, p.bins)?;
    check_len(b, p.bins)?;
    let ba = bin_series(a, p)?;
    let bb = bin_series(b, p)?;
    let max_lag = max_lag.min(a.len() - 1);
    let mi = (0..=max_lag).map(|l| mi_at(&ba, &bb, l, p.bins, p.binning)).collect();
    Ok(AmiCurve::from_values(mi, p.smoothing))
}

/// Pointwise mean of several curves over their common lag range, e.g. the
/// cross-AMI averaged over many series pairs.
pub fn average_curves<F: Real>(curves: &[AmiCurve<F>], smoothing: usize) -> Result<AmiCurve<F>> {
    let len = curves.iter().map(|c| c.mi.len()).min().ok_or_else(|| Error::invalid("no curves to average"))?;
    let k = F::from_usize_lossy(curves.len());
    let mi = (0..len).map(|l| curves.iter().map(|c| c.mi[l]).sum::<F>() / k).collect();
    Ok(AmiCurve::from_values(mi, smoothing))
}
