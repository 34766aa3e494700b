use serde::{Deserialize, Serialize};

use crate::model::{make_windows, WindowSpec};
use crate::{Error, Real, Result, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Subtract the mean, divide by the population standard deviation.
    ZScore,
    /// Map `[min, max]` onto `[0, 1]`.
    UnitInterval,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormScope {
    #[default]
    Trial,
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct NormalizationSpec {
    pub mode: NormMode,
    pub scope: NormScope,
}

/// Mean and population standard deviation over valid samples.
pub fn mean_sd<F: Real>(s: &Series<F>) -> Option<(F, F)> {
    let n = s.n_valid();
    if n == 0 {
        return None;
    }
    let nf = F::from_usize_lossy(n);
    let mean = s.valid_values().sum::<F>() / nf;
    let var = s.valid_values().map(|v| (v - mean) * (v - mean)).sum::<F>() / nf;
    Some((mean, var.sqrt()))
}

fn spread_is_zero<F: Real>(spread: F, scale: F) -> bool {
    spread <= F::epsilon() * F::lit(16.0) * scale.max(F::min_positive_value())
}

/// Normalizes over the whole series. Masked samples are excluded from the
/// parameter estimates and stay masked.
pub fn normalize<F: Real>(s: &Series<F>, mode: NormMode) -> Result<Series<F>> {
    match mode {
        NormMode::None => Ok(s.clone()),
        NormMode::ZScore => {
            let (mean, sd) = mean_sd(s).ok_or_else(|| Error::degenerate("no valid samples to z-score"))?;
            let scale = s.valid_values().fold(F::zero(), |m, v| m.max(v.abs()));
            if spread_is_zero(sd, scale) {
                return Err(Error::degenerate("constant series cannot be z-scored"));
            }
            Ok(s.map_valid(|v| (v - mean) / sd))
        }
        NormMode::UnitInterval => {
            let (lo, hi) = s.valid_values().fold((F::infinity(), F::neg_infinity()), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            if s.n_valid() == 0 {
                return Err(Error::degenerate("no valid samples to rescale"));
            }
            if spread_is_zero(hi - lo, hi.abs().max(lo.abs())) {
                return Err(Error::degenerate("constant series cannot be mapped to the unit interval"));
            }
            let range = hi - lo;
            Ok(s.map_valid(|v| ((v - lo) / range).max(F::zero()).min(F::one())))
        }
    }
}

/// Splits into windows and normalizes each one independently.
pub fn normalize_windowed<F: Real>(s: &Series<F>, mode: NormMode, windows: &WindowSpec) -> Result<Vec<Series<F>>> {
    make_windows(s.len(), windows)?
        .into_iter()
        .map(|r| normalize(&s.slice(r), mode))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetrendMode {
    #[default]
    Linear,
}

/// Subtracts the least-squares line fitted over valid samples.
pub fn detrend<F: Real>(s: &Series<F>, _mode: DetrendMode) -> Result<Series<F>> {
    let n = s.n_valid();
    if n < 2 {
        return Err(Error::TooShort { required: 2, actual: n });
    }
    let nf = F::from_usize_lossy(n);
    let idx = || {
        s.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(k, _)| (F::from_usize_lossy(k), s.values[k]))
    };
    let mx = idx().map(|(x, _)| x).sum::<F>() / nf;
    let my = idx().map(|(_, y)| y).sum::<F>() / nf;
    let sxx = idx().map(|(x, _)| (x - mx) * (x - mx)).sum::<F>();
    let sxy = idx().map(|(x, y)| (x - mx) * (y - my)).sum::<F>();
    let slope = sxy / sxx;
    let mut out = s.clone();
    for (k, v) in out.values.iter_mut().enumerate() {
        if s.mask[k] {
            *v = *v - (my + slope * (F::from_usize_lossy(k) - mx));
        }
    }
    Ok(out)
}
