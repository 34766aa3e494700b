//! Confidence masking, gap filling, zero-phase low-pass filtering,
//! resampling, detrending and amplitude normalization.

mod filter;
mod gaps;
mod normalize;
mod resample;

pub use filter::{lowpass_masked, lowpass_zero_phase, Biquad, FilterSpec, Sos};
pub use gaps::{fill_all, find_gaps, interpolate_gaps, Gap, GapPolicy, GapReport};
pub use normalize::{
    detrend, mean_sd, normalize, normalize_windowed, DetrendMode, NormMode, NormScope, NormalizationSpec,
};
pub use resample::{resample, ResampleMethod};

use rayon::prelude::*;

use crate::{PoseSequence, Real, Result, Series};

/// Masks every keypoint observation whose confidence is below `threshold`.
pub fn mask_low_confidence<F: Real>(p: &PoseSequence<F>, threshold: F) -> PoseSequence<F> {
    let mut out = p.clone();
    for (valid, &c) in out.valid.iter_mut().zip(&p.confidence) {
        if c < threshold {
            *valid = false;
        }
    }
    out
}

/// Applies `f` to every keypoint-axis coordinate series in parallel and
/// writes the results back, including masks.
pub fn map_coordinate_series<F, G>(p: &PoseSequence<F>, f: G) -> Result<PoseSequence<F>>
where
    F: Real,
    G: Fn(&Series<F>) -> Result<Series<F>> + Sync,
{
    let k = p.n_keypoints();
    let d = p.dims;
    let results: Vec<Result<Vec<Series<F>>>> = (0..k)
        .into_par_iter()
        .map(|kp| (0..d).map(|axis| f(&p.coordinate_series(kp, axis))).collect())
        .collect();
    let mut out: Option<PoseSequence<F>> = None;
    for (kp, axes) in results.into_iter().enumerate() {
        let axes = axes?;
        let n = axes[0].len();
        let o = out.get_or_insert_with(|| {
            let mut seq = PoseSequence::empty(n, p.keypoint_labels.clone(), d, axes[0].rate())
                .expect("source sequence is valid");
            if n == p.n_frames() {
                seq.confidence = p.confidence.clone();
            } else {
                seq.confidence.iter_mut().for_each(|c| *c = F::one());
            }
            seq
        });
        for (axis, s) in axes.iter().enumerate() {
            o.set_coordinate_series(kp, axis, s, axis == 0);
        }
        // a keypoint is valid only when every axis is
        for frame in 0..n {
            let all = axes.iter().all(|s| s.mask[frame]);
            o.set_valid(frame, kp, all);
        }
    }
    Ok(out.unwrap_or_else(|| p.clone()))
}

/// Gap filling for every keypoint trajectory. Keypoints with fewer than two
/// valid frames are left unchanged.
pub fn interpolate_pose_gaps<F: Real>(p: &PoseSequence<F>, policy: &GapPolicy) -> Result<PoseSequence<F>> {
    map_coordinate_series(p, |s| {
        if s.n_valid() < 2 {
            return Ok(s.clone());
        }
        interpolate_gaps(s, policy).map(|(out, _)| out)
    })
}

/// Zero-phase low-pass of every coordinate; gaps are bridged temporarily and
/// re-masked afterwards. Keypoints with no valid frame are left unchanged.
pub fn lowpass_pose<F: Real>(p: &PoseSequence<F>, spec: &FilterSpec) -> Result<PoseSequence<F>> {
    spec.validate(p.base.rate)?;
    map_coordinate_series(p, |s| {
        if s.n_valid() == 0 {
            return Ok(s.clone());
        }
        lowpass_masked(s, spec)
    })
}

pub fn resample_pose<F: Real>(p: &PoseSequence<F>, new_rate: f64, method: ResampleMethod) -> Result<PoseSequence<F>> {
    map_coordinate_series(p, |s| resample(s, new_rate, method))
}
