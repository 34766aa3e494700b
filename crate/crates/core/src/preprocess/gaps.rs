use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result, Series};

/// Interior gaps of at most `max_gap` samples are linearly filled; longer gaps
/// stay masked. For recurrence work the intended value is `(m - 1) * tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapPolicy {
    pub max_gap: usize,
}

impl GapPolicy {
    pub fn new(max_gap: usize) -> Self {
        GapPolicy { max_gap }
    }

    /// Largest gap for which every delay vector still holds a genuine sample.
    pub fn from_embedding(m: usize, tau: usize) -> Self {
        GapPolicy {
            max_gap: m.saturating_sub(1) * tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start: usize,
    pub length: usize,
    pub filled: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GapReport {
    pub gaps: Vec<Gap>,
}

impl GapReport {
    pub fn n_filled(&self) -> usize {
        self.gaps.iter().filter(|g| g.filled).count()
    }
}

/// Maximal runs of masked samples as `(start, length)`.
pub fn find_gaps(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut gaps = Vec::new();
    let mut k = 0;
    while k < mask.len() {
        if mask[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < mask.len() && !mask[k] {
            k += 1;
        }
        gaps.push((start, k - start));
    }
    gaps
}

fn fill_linear<F: Real>(values: &mut [F], start: usize, length: usize) {
    let a = values[start - 1];
    let b = values[start + length];
    let span = F::from_usize_lossy(length + 1);
    for i in 0..length {
        let u = F::from_usize_lossy(i + 1) / span;
        values[start + i] = a + (b - a) * u;
    }
}

/// Linearly fills interior gaps no longer than the policy allows.
///
/// Leading and trailing gaps are never filled. Originally valid samples are
/// never modified.
pub fn interpolate_gaps<F: Real>(s: &Series<F>, policy: &GapPolicy) -> Result<(Series<F>, GapReport)> {
    if s.n_valid() < 2 {
        return Err(Error::TooShort {
            required: 2,
            actual: s.n_valid(),
        });
    }
    let mut out = s.clone();
    let mut report = GapReport::default();
    for (start, length) in find_gaps(&s.mask) {
        let interior = start > 0 && start + length < s.len();
        let filled = interior && length <= policy.max_gap;
        if filled {
            fill_linear(&mut out.values, start, length);
            out.mask[start..start + length].iter_mut().for_each(|m| *m = true);
        }
        report.gaps.push(Gap {
            start,
            length,
            filled,
        });
    }
    Ok((out, report))
}

/// Fills every gap so that filters can run over the full span: interior gaps
/// linearly, edge gaps with the nearest valid value. The returned series is
/// fully valid; the caller restores `s.mask` afterwards.
pub fn fill_all<F: Real>(s: &Series<F>) -> Result<Series<F>> {
    if s.n_valid() == 0 {
        return Err(Error::degenerate("series has no valid samples"));
    }
    let mut out = s.clone();
    for (start, length) in find_gaps(&s.mask) {
        if start == 0 {
            let v = out.values[length];
            out.values[..length].iter_mut().for_each(|x| *x = v);
        } else if start + length == s.len() {
            let v = out.values[start - 1];
            out.values[start..].iter_mut().for_each(|x| *x = v);
        } else {
            fill_linear(&mut out.values, start, length);
        }
    }
    out.mask.iter_mut().for_each(|m| *m = true);
    Ok(out)
}
