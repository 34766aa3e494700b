use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMethod {
    /// Natural cubic spline through each contiguous valid run.
    Cubic,
    /// Keep every k-th sample; requires an integer rate ratio and a prior
    /// low-pass below the new Nyquist frequency.
    Decimate,
}

/// Second derivatives of the natural cubic spline through unit-spaced knots.
fn natural_spline_moments<F: Real>(y: &[F]) -> Vec<F> {
    let n = y.len();
    let mut m = vec![F::zero(); n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior system M[i-1] + 4 M[i] + M[i+1] = rhs[i].
    let inner = n - 2;
    let four = F::lit(4.0);
    let six = F::lit(6.0);
    let mut c = vec![F::zero(); inner];
    let mut d = vec![F::zero(); inner];
    for i in 0..inner {
        let rhs = six * (y[i + 2] - F::lit(2.0) * y[i + 1] + y[i]);
        let denom = if i == 0 { four } else { four - c[i - 1] };
        c[i] = F::one() / denom;
        d[i] = if i == 0 { rhs / denom } else { (rhs - d[i - 1]) / denom };
    }
    for i in (0..inner).rev() {
        let next = if i + 1 < inner { m[i + 2] } else { F::zero() };
        m[i + 1] = d[i] - c[i] * next;
    }
    m
}

fn spline_eval<F: Real>(y: &[F], moments: &[F], x: F) -> F {
    let last = y.len() - 1;
    if last == 0 {
        return y[0];
    }
    let i = x.floor().to_usize().unwrap_or(0).min(last - 1);
    let u = x - F::from_usize_lossy(i);
    let w = F::one() - u;
    let sixth = F::lit(1.0 / 6.0);
    w * y[i]
        + u * y[i + 1]
        + (w * w * w - w) * moments[i] * sixth
        + (u * u * u - u) * moments[i + 1] * sixth
}

/// Changes the sampling rate. The first sample time is preserved.
pub fn resample<F: Real>(s: &Series<F>, new_rate: f64, method: ResampleMethod) -> Result<Series<F>> {
    if !(new_rate.is_finite() && new_rate > 0.0) {
        return Err(Error::invalid(format!("new rate must be positive, got {new_rate}")));
    }
    let rate = s.rate();
    if (new_rate - rate).abs() <= 1e-12 * rate {
        return Ok(s.clone());
    }
    match method {
        ResampleMethod::Decimate => {
            let ratio = rate / new_rate;
            let k = ratio.round();
            if k < 1.0 || (ratio - k).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "decimation needs an integer rate ratio, got {rate}/{new_rate} = {ratio}"
                )));
            }
            let k = k as usize;
            let idx: Vec<usize> = (0..s.len()).step_by(k).collect();
            Series::with_mask(
                idx.iter().map(|&i| s.values[i]).collect(),
                idx.iter().map(|&i| s.mask[i]).collect(),
                new_rate,
            )
        }
        ResampleMethod::Cubic => {
            if s.is_empty() {
                return Series::with_mask(Vec::new(), Vec::new(), new_rate);
            }
            let ratio = rate / new_rate;
            let n_new = (((s.len() - 1) as f64) / ratio + 1e-9).floor() as usize + 1;
            let mut values = vec![F::zero(); n_new];
            let mut mask = vec![false; n_new];
            // contiguous valid runs
            let mut runs = Vec::new();
            let mut k = 0;
            while k < s.len() {
                if !s.mask[k] {
                    k += 1;
                    continue;
                }
                let start = k;
                while k < s.len() && s.mask[k] {
                    k += 1;
                }
                runs.push(start..k);
            }
            for run in runs {
                let y = &s.values[run.clone()];
                let moments = natural_spline_moments(y);
                let first = ((run.start as f64) / ratio - 1e-9).ceil().max(0.0) as usize;
                for j in first..n_new {
                    let x = j as f64 * ratio;
                    if x > (run.end - 1) as f64 + 1e-9 {
                        break;
                    }
                    let local = (x - run.start as f64).max(0.0).min((run.len() - 1) as f64);
                    values[j] = spline_eval(y, &moments, F::lit(local));
                    mask[j] = true;
                }
            }
            Series::with_mask(values, mask, new_rate)
        }
    }
}
