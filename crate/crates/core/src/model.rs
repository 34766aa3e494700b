//! Shared domain types: time base, masked series, pose sequences and windows.

use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Constant sampling rate plus sample count; sample `k` occurs at `k / rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBase {
    pub rate: f64,
    pub n_samples: usize,
}

impl TimeBase {
    pub fn new(rate: f64, n_samples: usize) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("sampling rate must be positive, got {rate}")));
        }
        Ok(TimeBase { rate, n_samples })
    }

    pub fn time_of(&self, k: usize) -> f64 {
        k as f64 / self.rate
    }

    pub fn with_len(self, n_samples: usize) -> Self {
        TimeBase { n_samples, ..self }
    }
}

/// A scalar time series with per-sample validity.
///
/// Masked samples (`mask[k] == false`) carry no numeric meaning; every
/// operation in this crate skips them when estimating parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Series<F> {
    pub values: Vec<F>,
    pub mask: Vec<bool>,
    pub base: TimeBase,
}

impl<F: Real> Series<F> {
    /// Fully valid series.
    pub fn new(values: Vec<F>, rate: f64) -> Result<Self> {
        let base = TimeBase::new(rate, values.len())?;
        let mask = vec![true; values.len()];
        Ok(Series { values, mask, base })
    }

    pub fn with_mask(values: Vec<F>, mask: Vec<bool>, rate: f64) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values but {} mask flags",
                values.len(),
                mask.len()
            )));
        }
        let base = TimeBase::new(rate, values.len())?;
        Ok(Series { values, mask, base })
    }

    /// Builds a series from optional samples; `None` and non-finite values are masked.
    pub fn from_options(values: &[Option<F>], rate: f64) -> Result<Self> {
        let mask: Vec<bool> = values
            .iter()
            .map(|v| matches!(v, Some(x) if x.is_finite()))
            .collect();
        let vals = values
            .iter()
            .zip(&mask)
            .map(|(v, &ok)| if ok { v.unwrap() } else { F::zero() })
            .collect();
        Series::with_mask(vals, mask, rate)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rate(&self) -> f64 {
        self.base.rate
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_fully_valid(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn get(&self, k: usize) -> Option<F> {
        if self.mask[k] {
            Some(self.values[k])
        } else {
            None
        }
    }

    /// Valid values in order.
    pub fn valid_values(&self) -> impl Iterator<Item = F> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
    }

    pub fn slice(&self, range: Range<usize>) -> Series<F> {
        Series {
            values: self.values[range.clone()].to_vec(),
            mask: self.mask[range.clone()].to_vec(),
            base: self.base.with_len(range.len()),
        }
    }

    pub fn reversed(&self) -> Series<F> {
        let mut s = self.clone();
        s.values.reverse();
        s.mask.reverse();
        s
    }

    /// Maps valid values, leaving masked ones untouched.
    pub fn map_valid(&self, f: impl Fn(F) -> F) -> Series<F> {
        let values = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| if m { f(v) } else { v })
            .collect();
        Series {
            values,
            mask: self.mask.clone(),
            base: self.base,
        }
    }

    /// Fails unless every sample is valid; the returned slice is the raw values.
    pub fn require_valid(&self, what: &str) -> Result<&[F]> {
        if let Some(k) = self.mask.iter().position(|&m| !m) {
            return Err(Error::invalid(format!(
                "{what}: masked sample at index {k}; interpolate before this step"
            )));
        }
        Ok(&self.values)
    }
}

/// Frames × keypoints × dims coordinates with per-keypoint confidence and validity.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence<F> {
    /// Flat row-major `[frame][keypoint][dim]`.
    pub coords: Vec<F>,
    /// Flat `[frame][keypoint]`, in `[0, 1]`.
    pub confidence: Vec<F>,
    /// Flat `[frame][keypoint]`; `false` marks a missing observation.
    pub valid: Vec<bool>,
    pub base: TimeBase,
    pub keypoint_labels: Vec<String>,
    pub dims: usize,
}

impl<F: Real> PoseSequence<F> {
    /// An all-masked sequence with zero coordinates and zero confidence.
    pub fn empty(n_frames: usize, labels: Vec<String>, dims: usize, rate: f64) -> Result<Self> {
        if !(dims == 2 || dims == 3) {
            return Err(Error::invalid(format!("dims must be 2 or 3, got {dims}")));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::invalid(format!("duplicate keypoint label `{l}`")));
            }
        }
        let k = labels.len();
        Ok(PoseSequence {
            coords: vec![F::zero(); n_frames * k * dims],
            confidence: vec![F::zero(); n_frames * k],
            valid: vec![false; n_frames * k],
            base: TimeBase::new(rate, n_frames)?,
            keypoint_labels: labels,
            dims,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.base.n_samples
    }

    pub fn n_keypoints(&self) -> usize {
        self.keypoint_labels.len()
    }

    pub fn keypoint_index(&self, label: &str) -> Option<usize> {
        self.keypoint_labels.iter().position(|l| l == label)
    }

    pub fn is_valid(&self, frame: usize, kp: usize) -> bool {
        self.valid[frame * self.n_keypoints() + kp]
    }

    pub fn point(&self, frame: usize, kp: usize) -> &[F] {
        let o = (frame * self.n_keypoints() + kp) * self.dims;
        &self.coords[o..o + self.dims]
    }

    pub fn point_mut(&mut self, frame: usize, kp: usize) -> &mut [F] {
        let o = (frame * self.n_keypoints() + kp) * self.dims;
        let d = self.dims;
        &mut self.coords[o..o + d]
    }

    pub fn confidence_at(&self, frame: usize, kp: usize) -> F {
        self.confidence[frame * self.n_keypoints() + kp]
    }

    pub fn set_point(&mut self, frame: usize, kp: usize, xyz: &[F], confidence: F) {
        let idx = frame * self.n_keypoints() + kp;
        self.point_mut(frame, kp).copy_from_slice(xyz);
        self.confidence[idx] = confidence;
        self.valid[idx] = xyz.iter().all(|v| v.is_finite());
    }

    pub fn set_valid(&mut self, frame: usize, kp: usize, valid: bool) {
        let idx = frame * self.n_keypoints() + kp;
        self.valid[idx] = valid;
    }

    /// One coordinate axis of one keypoint as a masked series.
    pub fn coordinate_series(&self, kp: usize, axis: usize) -> Series<F> {
        let n = self.n_frames();
        let values = (0..n).map(|f| self.point(f, kp)[axis]).collect();
        let mask = (0..n).map(|f| self.is_valid(f, kp)).collect();
        Series {
            values,
            mask,
            base: self.base,
        }
    }

    /// Writes a series back into one coordinate axis; the keypoint mask becomes
    /// the conjunction over axes written so far only if `update_mask` is set.
    pub fn set_coordinate_series(&mut self, kp: usize, axis: usize, s: &Series<F>, update_mask: bool) {
        for f in 0..self.n_frames().min(s.len()) {
            self.point_mut(f, kp)[axis] = s.values[f];
            if update_mask {
                self.set_valid(f, kp, s.mask[f]);
            }
        }
    }

    /// Keeps only the listed keypoints, in the given order.
    pub fn select_keypoints(&self, keypoints: &[usize]) -> PoseSequence<F> {
        let labels = keypoints
            .iter()
            .map(|&k| self.keypoint_labels[k].clone())
            .collect();
        let mut out = PoseSequence::empty(self.n_frames(), labels, self.dims, self.base.rate)
            .expect("source sequence is valid");
        for f in 0..self.n_frames() {
            for (j, &k) in keypoints.iter().enumerate() {
                out.point_mut(f, j).copy_from_slice(self.point(f, k));
                let (src, dst) = (f * self.n_keypoints() + k, f * keypoints.len() + j);
                out.confidence[dst] = self.confidence[src];
                out.valid[dst] = self.valid[src];
            }
        }
        out
    }

    /// Keeps a contiguous frame range.
    pub fn slice_frames(&self, range: Range<usize>) -> PoseSequence<F> {
        let k = self.n_keypoints();
        let d = self.dims;
        PoseSequence {
            coords: self.coords[range.start * k * d..range.end * k * d].to_vec(),
            confidence: self.confidence[range.start * k..range.end * k].to_vec(),
            valid: self.valid[range.start * k..range.end * k].to_vec(),
            base: self.base.with_len(range.len()),
            keypoint_labels: self.keypoint_labels.clone(),
            dims: d,
        }
    }
}

/// Sliding-window geometry: fixed length with fractional overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub overlap: f64,
}

impl WindowSpec {
    pub fn new(length: usize, overlap: f64) -> Result<Self> {
        let spec = WindowSpec { length, overlap };
        spec.validate()?;
        Ok(spec)
    }

    /// A single window spanning the whole series.
    pub fn whole(n: usize) -> Self {
        WindowSpec {
            length: n,
            overlap: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::invalid(format!(
                "window length must be at least 2, got {}",
                self.length
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::invalid(format!(
                "window overlap must lie in [0, 1), got {}",
                self.overlap
            )));
        }
        if self.step() < 1 {
            return Err(Error::invalid("window step rounds to zero"));
        }
        Ok(())
    }

    pub fn step(&self) -> usize {
        (self.length as f64 * (1.0 - self.overlap)).round() as usize
    }
}

/// Index ranges `[k·step, k·step + length)`; trailing partial windows are dropped.
pub fn make_windows(n: usize, spec: &WindowSpec) -> Result<Vec<Range<usize>>> {
    spec.validate()?;
    if n < spec.length {
        return Err(Error::TooShort {
            required: spec.length,
            actual: n,
        });
    }
    let step = spec.step();
    Ok((0..)
        .map(|k| k * step)
        .take_while(|&start| start + spec.length <= n)
        .map(|start| start..start + spec.length)
        .collect())
}
