//! Procrustes superimposition onto a template, template construction, and
//! transform parameters as head-motion features.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{svd, symmetric_eigen, Mat};
use crate::{Error, PoseSequence, Real, Result, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateSource {
    GlobalMean,
    ReferenceFrame,
    Synthetic,
}

/// Target configuration, keypoints × dims.
#[derive(Debug, Clone, PartialEq)]
pub struct Template<F> {
    pub points: Mat<F>,
    pub source: TemplateSource,
    pub centroid: Vec<F>,
    /// Source keypoint indices, one per template row.
    pub keypoints: Vec<usize>,
}

fn centroid_of<F: Real>(m: &Mat<F>) -> Vec<F> {
    let n = F::from_usize_lossy(m.rows);
    (0..m.cols).map(|j| m.column(j).into_iter().sum::<F>() / n).collect()
}

impl<F: Real> Template<F> {
    pub fn new(points: Mat<F>, source: TemplateSource, keypoints: Vec<usize>) -> Result<Self> {
        if points.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("template coordinates must be finite"));
        }
        if keypoints.len() != points.rows {
            return Err(Error::ShapeMismatch(format!(
                "{} template rows but {} keypoint indices",
                points.rows,
                keypoints.len()
            )));
        }
        let centroid = centroid_of(&points);
        Ok(Template {
            points,
            source,
            centroid,
            keypoints,
        })
    }

    pub fn synthetic(points: Mat<F>) -> Result<Self> {
        let kp = (0..points.rows).collect();
        Template::new(points, TemplateSource::Synthetic, kp)
    }

    /// A single well-captured frame as template.
    pub fn from_frame(p: &PoseSequence<F>, frame: usize, keypoints: &[usize]) -> Result<Self> {
        let mut pts = Mat::zeros(keypoints.len(), p.dims);
        for (r, &k) in keypoints.iter().enumerate() {
            if !p.is_valid(frame, k) {
                return Err(Error::invalid(format!(
                    "keypoint `{}` is masked in reference frame {frame}",
                    p.keypoint_labels[k]
                )));
            }
            for d in 0..p.dims {
                pts[(r, d)] = p.point(frame, k)[d];
            }
        }
        Template::new(pts, TemplateSource::ReferenceFrame, keypoints.to_vec())
    }

    pub fn dims(&self) -> usize {
        self.points.cols
    }

    /// Enforces left/right symmetry about the centroid along `axis`: each pair
    /// is replaced by the average of one point and the mirror of its partner,
    /// unpaired points are moved onto the midline.
    pub fn symmetrized(&self, pairs: &[(usize, usize)], axis: usize) -> Result<Self> {
        let mut pts = self.points.clone();
        let c = self.centroid[axis];
        let two = F::lit(2.0);
        let half = F::lit(0.5);
        let row_of = |kp: usize| {
            self.keypoints
                .iter()
                .position(|&k| k == kp)
                .ok_or_else(|| Error::invalid(format!("symmetry pair references keypoint {kp} not in template")))
        };
        let mut paired = vec![false; pts.rows];
        for &(l, r) in pairs {
            let (li, ri) = (row_of(l)?, row_of(r)?);
            for d in 0..pts.cols {
                let (a, b) = (self.points[(li, d)], self.points[(ri, d)]);
                let v = if d == axis { (a + two * c - b) * half } else { (a + b) * half };
                pts[(li, d)] = v;
                pts[(ri, d)] = if d == axis { two * c - v } else { v };
            }
            paired[li] = true;
            paired[ri] = true;
        }
        for (i, was_paired) in paired.iter().enumerate() {
            if !was_paired {
                pts[(i, axis)] = c;
            }
        }
        Template::new(pts, self.source, self.keypoints.clone())
    }
}

/// Per-keypoint mean over all valid frames of all sequences. With
/// `center_frames`, every frame is first translated to its own centroid.
pub fn build_template<F: Real>(
    data: &[PoseSequence<F>],
    keypoints: &[usize],
    center_frames: bool,
) -> Result<Template<F>> {
    let first = data.first().ok_or_else(|| Error::invalid("no sequences to build a template from"))?;
    let dims = first.dims;
    let k = keypoints.len();
    let mut sum = vec![F::zero(); k * dims];
    let mut count = vec![0usize; k];
    for p in data {
        if p.dims != dims {
            return Err(Error::ShapeMismatch("sequences differ in dimensionality".into()));
        }
        for f in 0..p.n_frames() {
            let offset = if center_frames {
                match frame_centroid(p, f, keypoints) {
                    Some(c) => c,
                    None => continue,
                }
            } else {
                vec![F::zero(); dims]
            };
            for (r, &kp) in keypoints.iter().enumerate() {
                if p.is_valid(f, kp) {
                    for d in 0..dims {
                        sum[r * dims + d] = sum[r * dims + d] + p.point(f, kp)[d] - offset[d];
                    }
                    count[r] += 1;
                }
            }
        }
    }
    if let Some(r) = count.iter().position(|&c| c == 0) {
        return Err(Error::degenerate(format!(
            "keypoint `{}` has no valid frame",
            first.keypoint_labels[keypoints[r]]
        )));
    }
    let mut pts = Mat::zeros(k, dims);
    for r in 0..k {
        for d in 0..dims {
            pts[(r, d)] = sum[r * dims + d] / F::from_usize_lossy(count[r]);
        }
    }
    Template::new(pts, TemplateSource::GlobalMean, keypoints.to_vec())
}

fn frame_centroid<F: Real>(p: &PoseSequence<F>, f: usize, keypoints: &[usize]) -> Option<Vec<F>> {
    let valid: Vec<usize> = keypoints.iter().copied().filter(|&k| p.is_valid(f, k)).collect();
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

/// Similarity transform acting on row vectors: `x ↦ s · x · R + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesTransform<F> {
    pub scale: F,
    pub rotation: Mat<F>,
    pub translation: Vec<F>,
}

impl<F: Real> ProcrustesTransform<F> {
    pub fn identity(dims: usize) -> Self {
        ProcrustesTransform {
            scale: F::one(),
            rotation: Mat::identity(dims),
            translation: vec![F::zero(); dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.rotation.rows
    }

    pub fn apply_point(&self, x: &[F]) -> Vec<F> {
        let d = self.dims();
        (0..d)
            .map(|j| self.scale * (0..d).map(|i| x[i] * self.rotation[(i, j)]).sum::<F>() + self.translation[j])
            .collect()
    }

    pub fn apply_mat(&self, x: &Mat<F>) -> Mat<F> {
        let mut out = Mat::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let y = self.apply_point(x.row(r));
            out.data[r * x.cols..(r + 1) * x.cols].copy_from_slice(&y);
        }
        out
    }

    /// `other ∘ self`: apply `self` first, then `other`.
    pub fn then(&self, other: &ProcrustesTransform<F>) -> ProcrustesTransform<F> {
        let rotation = &self.rotation * &other.rotation;
        let d = self.dims();
        let t_rot: Vec<F> = (0..d)
            .map(|j| (0..d).map(|i| self.translation[i] * other.rotation[(i, j)]).sum::<F>())
            .collect();
        ProcrustesTransform {
            scale: self.scale * other.scale,
            rotation,
            translation: (0..d).map(|j| other.scale * t_rot[j] + other.translation[j]).collect(),
        }
    }

    pub fn inverse(&self) -> ProcrustesTransform<F> {
        let rt = self.rotation.transpose();
        let d = self.dims();
        let inv_s = F::one() / self.scale;
        let translation = (0..d)
            .map(|j| -(0..d).map(|i| self.translation[i] * rt[(i, j)]).sum::<F>() * inv_s)
            .collect();
        ProcrustesTransform {
            scale: inv_s,
            rotation: rt,
            translation,
        }
    }

    /// Frobenius distance of the homogeneous matrix from identity.
    pub fn deviation_from_identity(&self) -> F {
        let d = self.dims();
        let lin = self.rotation.scale(self.scale).sub(&Mat::identity(d));
        let t2: F = self.translation.iter().map(|&v| v * v).sum();
        (lin.frobenius().powi(2) + t2).sqrt()
    }

    /// In-plane angle (2D) or rotation-vector norm (3D), radians.
    pub fn rotation_angle(&self) -> F {
        match self.dims() {
            2 => self.rotation[(0, 1)].atan2(self.rotation[(0, 0)]),
            _ => {
                let c = (self.rotation.trace() - F::one()) / F::lit(2.0);
                c.max(-F::one()).min(F::one()).acos()
            }
        }
    }

    pub fn translation_norm(&self) -> F {
        self.translation.iter().map(|&v| v * v).sum::<F>().sqrt()
    }
}

/// Least-squares similarity (or rigid, without `allow_scale`) transform
/// mapping `x` onto `target`, reflections excluded.
pub fn fit_procrustes<F: Real>(x: &Mat<F>, target: &Mat<F>, allow_scale: bool) -> Result<ProcrustesTransform<F>> {
    if (x.rows, x.cols) != (target.rows, target.cols) {
        return Err(Error::ShapeMismatch(format!(
            "configuration {}x{} vs template {}x{}",
            x.rows, x.cols, target.rows, target.cols
        )));
    }
    let (n, d) = (x.rows, x.cols);
    if n < d + 1 {
        return Err(Error::degenerate(format!("need at least {} points in {d}D, got {n}", d + 1)));
    }
    let mx = centroid_of(x);
    let mt = centroid_of(target);
    let mut xc = x.clone();
    let mut tc = target.clone();
    for r in 0..n {
        for j in 0..d {
            xc[(r, j)] = xc[(r, j)] - mx[j];
            tc[(r, j)] = tc[(r, j)] - mt[j];
        }
    }
    check_spread(&xc, "configuration")?;
    check_spread(&tc, "template")?;

    let h = &xc.transpose() * &tc;
    let dec = svd(&h);
    let mut r = &dec.u * &dec.v.transpose();
    let mut sign_fix = F::one();
    if r.det() < F::zero() {
        sign_fix = -F::one();
        let mut dmat = Mat::identity(d);
        dmat[(d - 1, d - 1)] = -F::one();
        r = &(&dec.u * &dmat) * &dec.v.transpose();
    }
    let scale = if allow_scale {
        let trace: F = dec.sigma[..d - 1].iter().copied().sum::<F>() + sign_fix * dec.sigma[d - 1];
        let norm2: F = xc.data.iter().map(|&v| v * v).sum();
        trace / norm2
    } else {
        F::one()
    };
    let mx_rot: Vec<F> = (0..d).map(|j| (0..d).map(|i| mx[i] * r[(i, j)]).sum::<F>()).collect();
    let translation = (0..d).map(|j| mt[j] - scale * mx_rot[j]).collect();
    Ok(ProcrustesTransform {
        scale,
        rotation: r,
        translation,
    })
}

/// Rejects coincident or collinear configurations.
fn check_spread<F: Real>(centered: &Mat<F>, what: &str) -> Result<()> {
    let cov = &centered.transpose() * centered;
    let eig = symmetric_eigen(&cov);
    let largest = eig.values[0];
    if !(largest > F::zero()) {
        return Err(Error::degenerate(format!("{what} points are coincident")));
    }
    if eig.values.len() > 1 && eig.values[1] <= largest * F::epsilon().sqrt() {
        return Err(Error::degenerate(format!("{what} points are collinear")));
    }
    Ok(())
}

/// Maps every coordinate in `frames` through the transform; masks are kept.
pub fn apply_transform<F: Real>(
    p: &PoseSequence<F>,
    tf: &ProcrustesTransform<F>,
    frames: Range<usize>,
) -> PoseSequence<F> {
    let mut out = p.clone();
    for f in frames {
        for k in 0..p.n_keypoints() {
            let y = tf.apply_point(p.point(f, k));
            out.point_mut(f, k).copy_from_slice(&y);
        }
    }
    out
}

/// Valid rows of `frame` restricted to the template keypoints.
fn frame_config<F: Real>(p: &PoseSequence<F>, f: usize, template: &Template<F>) -> (Mat<F>, Mat<F>) {
    let rows: Vec<usize> = (0..template.keypoints.len())
        .filter(|&r| p.is_valid(f, template.keypoints[r]))
        .collect();
    let d = p.dims;
    let mut x = Mat::zeros(rows.len(), d);
    let mut t = Mat::zeros(rows.len(), d);
    for (i, &r) in rows.iter().enumerate() {
        for j in 0..d {
            x[(i, j)] = p.point(f, template.keypoints[r])[j];
            t[(i, j)] = template.points[(r, j)];
        }
    }
    (x, t)
}

/// Mean pose over the valid frames of a range, template keypoints only.
fn mean_config<F: Real>(p: &PoseSequence<F>, frames: Range<usize>, template: &Template<F>) -> (Mat<F>, Mat<F>) {
    let d = p.dims;
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for (r, &kp) in template.keypoints.iter().enumerate() {
        let valid: Vec<usize> = frames.clone().filter(|&f| p.is_valid(f, kp)).collect();
        if valid.is_empty() {
            continue;
        }
        let n = F::from_usize_lossy(valid.len());
        rows.push(r);
        means.push((0..d).map(|j| valid.iter().map(|&f| p.point(f, kp)[j]).sum::<F>() / n).collect::<Vec<F>>());
    }
    let mut x = Mat::zeros(rows.len(), d);
    let mut t = Mat::zeros(rows.len(), d);
    for (i, &r) in rows.iter().enumerate() {
        for j in 0..d {
            x[(i, j)] = means[i][j];
            t[(i, j)] = template.points[(r, j)];
        }
    }
    (x, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AlignScope {
    /// One fit per frame.
    Frame,
    /// One fit per consecutive block on the block's mean pose; the last block
    /// may be shorter.
    Window { length: usize },
}

/// Aligns a sequence and returns it with the per-frame transforms. Frames
/// (or blocks) that cannot be fitted keep their coordinates and are masked.
pub fn align_sequence<F: Real>(
    p: &PoseSequence<F>,
    template: &Template<F>,
    scope: AlignScope,
    allow_scale: bool,
) -> Result<(PoseSequence<F>, Vec<Option<ProcrustesTransform<F>>>)> {
    if template.dims() != p.dims {
        return Err(Error::ShapeMismatch("template and sequence dimensionality differ".into()));
    }
    let n = p.n_frames();
    let blocks: Vec<Range<usize>> = match scope {
        AlignScope::Frame => (0..n).map(|f| f..f + 1).collect(),
        AlignScope::Window { length } => {
            if length == 0 {
                return Err(Error::invalid("alignment window length must be positive"));
            }
            (0..n).step_by(length).map(|s| s..(s + length).min(n)).collect()
        }
    };
    let fits: Vec<Option<ProcrustesTransform<F>>> = blocks
        .par_iter()
        .map(|b| {
            let (x, t) = if b.len() == 1 {
                frame_config(p, b.start, template)
            } else {
                mean_config(p, b.clone(), template)
            };
            fit_procrustes(&x, &t, allow_scale).ok()
        })
        .collect();
    let mut out = p.clone();
    let mut per_frame = vec![None; n];
    for (b, tf) in blocks.iter().zip(fits) {
        match tf {
            Some(tf) => {
                for f in b.clone() {
                    for k in 0..p.n_keypoints() {
                        let y = tf.apply_point(p.point(f, k));
                        out.point_mut(f, k).copy_from_slice(&y);
                    }
                    per_frame[f] = Some(tf.clone());
                }
            }
            None => {
                for f in b.clone() {
                    for k in 0..p.n_keypoints() {
                        out.set_valid(f, k, false);
                    }
                }
            }
        }
    }
    Ok((out, per_frame))
}

/// Relative weights of the combined head-motion magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionWeights {
    pub translation: f64,
    pub rotation: f64,
    pub scale: f64,
}

impl Default for MotionWeights {
    fn default() -> Self {
        MotionWeights {
            translation: 1.0,
            rotation: 1.0,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransformFeatures<F> {
    /// |t| per frame.
    pub translation: Series<F>,
    pub angle: Series<F>,
    pub scale: Series<F>,
    /// Weighted sum of frame-to-frame changes in translation, angle and
    /// scale, each divided by its own standard deviation.
    pub motion: Series<F>,
}

fn wrap_angle<F: Real>(a: F) -> F {
    let pi = F::PI();
    let two_pi = pi + pi;
    let mut w = a % two_pi;
    if w > pi {
        w = w - two_pi;
    } else if w <= -pi {
        w = w + two_pi;
    }
    w
}

pub fn transform_features<F: Real>(
    tfs: &[Option<ProcrustesTransform<F>>],
    rate: f64,
    weights: &MotionWeights,
) -> Result<TransformFeatures<F>> {
    let opt = |f: &dyn Fn(&ProcrustesTransform<F>) -> F| -> Vec<Option<F>> {
        tfs.iter().map(|t| t.as_ref().map(f)).collect()
    };
    let translation = Series::from_options(&opt(&|t| t.translation_norm()), rate)?;
    let angle = Series::from_options(&opt(&|t| t.rotation_angle()), rate)?;
    let scale = Series::from_options(&opt(&|t| t.scale), rate)?;

    let n = tfs.len();
    let mut deltas: [Vec<Option<F>>; 3] = [vec![None; n], vec![None; n], vec![None; n]];
    for k in 0..n {
        if k == 0 {
            if tfs[0].is_some() {
                for d in deltas.iter_mut() {
                    d[0] = Some(F::zero());
                }
            }
            continue;
        }
        if let (Some(a), Some(b)) = (&tfs[k - 1], &tfs[k]) {
            let dt = a
                .translation
                .iter()
                .zip(&b.translation)
                .map(|(&x, &y)| (y - x) * (y - x))
                .sum::<F>()
                .sqrt();
            let da = if a.dims() == 2 {
                wrap_angle(b.rotation_angle() - a.rotation_angle()).abs()
            } else {
                // angle of the relative rotation
                let rel = ProcrustesTransform {
                    scale: F::one(),
                    rotation: &a.rotation.transpose() * &b.rotation,
                    translation: vec![F::zero(); 3],
                };
                rel.rotation_angle()
            };
            deltas[0][k] = Some(dt);
            deltas[1][k] = Some(da);
            deltas[2][k] = Some((b.scale - a.scale).abs());
        }
    }
    let w = [weights.translation, weights.rotation, weights.scale];
    let mut motion = vec![None; n];
    for (comp, &wc) in deltas.iter().zip(&w) {
        let s = Series::from_options(comp, rate)?;
        let sd = crate::preprocess::mean_sd(&s).map(|(_, sd)| sd).unwrap_or(F::zero());
        for k in 0..n {
            if let Some(v) = comp[k] {
                let term = if sd > F::zero() { F::lit(wc) * v / sd } else { F::zero() };
                motion[k] = Some(motion[k].unwrap_or(F::zero()) + term);
            }
        }
    }
    Ok(TransformFeatures {
        translation,
        angle,
        scale,
        motion: Series::from_options(&motion, rate)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rot2(theta: f64) -> Mat<f64> {
        Mat::from_rows(2, 2, vec![theta.cos(), theta.sin(), -theta.sin(), theta.cos()])
    }

    fn rot3(axis: [f64; 3], theta: f64) -> Mat<f64> {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
        let (c, s) = (theta.cos(), theta.sin());
        let t = 1.0 - c;
        // column-vector rotation, transposed for the row-vector convention
        Mat::from_rows(
            3,
            3,
            vec![
                t * x * x + c,
                t * x * y - s * z,
                t * x * z + s * y,
                t * x * y + s * z,
                t * y * y + c,
                t * y * z - s * x,
                t * x * z - s * y,
                t * y * z + s * x,
                t * z * z + c,
            ],
        )
        .transpose()
    }

    fn square() -> Mat<f64> {
        Mat::from_rows(4, 2, vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0])
    }

    fn face() -> Mat<f64> {
        Mat::from_rows(5, 2, vec![0.0, 0.0, 0.3, -0.2, -0.5, 0.8, 0.6, 0.7, 0.05, -0.6])
    }

    #[test]
    fn identity_fit() {
        let t = face();
        let tf = fit_procrustes(&t, &t, true).unwrap();
        assert!((tf.scale - 1.0).abs() < 1e-12);
        assert!(tf.rotation.sub(&Mat::identity(2)).frobenius() < 1e-12);
        assert!(tf.translation_norm() < 1e-12);
    }

    #[test]
    fn recovers_known_similarity() {
        let t = face();
        let fwd = ProcrustesTransform {
            scale: 1.5,
            rotation: rot2(30f64.to_radians()),
            translation: vec![2.0, 3.0],
        };
        let x = fwd.apply_mat(&t);
        let tf = fit_procrustes(&x, &t, true).unwrap();
        assert!((tf.scale - 1.0 / 1.5).abs() < 1e-12);
        assert!((tf.rotation_angle() + 30f64.to_radians()).abs() < 1e-12);
        assert!(fwd.then(&tf).deviation_from_identity() < 1e-9);
    }

    #[test]
    fn three_stage_ordering() {
        // translation, then scale, then rotation each reduce the residual
        let t = face();
        let fwd = ProcrustesTransform {
            scale: 0.7,
            rotation: rot2(-0.8),
            translation: vec![-1.0, 4.0],
        };
        let x = fwd.apply_mat(&t);
        let resid = |m: &Mat<f64>| m.sub(&t).frobenius();
        let mx = centroid_of(&x);
        let mt = centroid_of(&t);
        let shift = ProcrustesTransform {
            scale: 1.0,
            rotation: Mat::identity(2),
            translation: vec![mt[0] - mx[0], mt[1] - mx[1]],
        };
        let translated = shift.apply_mat(&x);
        let full = fit_procrustes(&x, &t, true).unwrap();
        let rigid = fit_procrustes(&x, &t, false).unwrap();
        let r_raw = resid(&x);
        let r_trans = resid(&translated);
        let r_rigid = resid(&rigid.apply_mat(&x));
        let r_full = resid(&full.apply_mat(&x));
        assert!(r_raw > r_trans && r_trans > r_rigid && r_rigid > r_full);
        assert!(r_full < 1e-12);
    }

    #[test]
    fn rotated_unit_square() {
        let tf = ProcrustesTransform {
            scale: 1.0,
            rotation: rot2(std::f64::consts::FRAC_PI_2),
            translation: vec![0.0, 0.0],
        };
        let r = tf.apply_mat(&square());
        let want = [0.0, 0.0, 0.0, 1.0, -1.0, 1.0, -1.0, 0.0];
        for (a, b) in r.data.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn reflection_excluded() {
        let t = face();
        let mut mirrored = t.clone();
        for r in 0..t.rows {
            mirrored[(r, 0)] = -mirrored[(r, 0)];
        }
        let tf = fit_procrustes(&mirrored, &t, true).unwrap();
        assert!((tf.rotation.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_scale_mode_returns_exactly_one() {
        let t = face();
        let x = t.scale(3.0);
        assert_eq!(fit_procrustes(&x, &t, false).unwrap().scale, 1.0);
    }

    #[test]
    fn degenerate_configurations() {
        let line = Mat::from_rows(3, 2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(fit_procrustes(&line, &line, true), Err(Error::Degenerate(_))));
        let same = Mat::from_rows(3, 2, vec![1.0; 6]);
        assert!(matches!(fit_procrustes(&same, &line, true), Err(Error::Degenerate(_))));
        let two = Mat::from_rows(2, 2, vec![0.0, 0.0, 1.0, 0.0]);
        assert!(fit_procrustes(&two, &two, true).is_err());
    }

    fn sequence_from(frames: &[Mat<f64>]) -> PoseSequence<f64> {
        let k = frames[0].rows;
        let labels = (0..k).map(|i| i.to_string()).collect();
        let mut p = PoseSequence::empty(frames.len(), labels, frames[0].cols, 30.0).unwrap();
        for (f, m) in frames.iter().enumerate() {
            for r in 0..k {
                p.set_point(f, r, m.row(r), 1.0);
            }
        }
        p
    }

    #[test]
    fn template_is_mean() {
        let a = Mat::from_rows(1, 2, vec![0.0, 0.0]);
        let b = Mat::from_rows(1, 2, vec![2.0, 2.0]);
        let t = build_template(&[sequence_from(&[a, b])], &[0], false).unwrap();
        assert_eq!(t.points.data, vec![1.0, 1.0]);
        let p = sequence_from(&[face(), face(), face()]);
        let t = build_template(&[p], &[0, 1, 2, 3, 4], false).unwrap();
        for (x, y) in t.points.data.iter().zip(&face().data) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn template_needs_valid_frames() {
        let mut p = sequence_from(&[face()]);
        p.set_valid(0, 2, false);
        assert!(build_template(&[p], &[0, 2], false).is_err());
    }

    #[test]
    fn symmetrized_template_is_mirror_symmetric() {
        let pts = Mat::<f64>::from_rows(3, 2, vec![-1.0, 0.1, 1.2, -0.1, 0.2, 1.0]);
        let t = Template::synthetic(pts).unwrap();
        let s = t.symmetrized(&[(0, 1)], 0).unwrap();
        let c = t.centroid[0];
        assert!(((s.points[(0, 0)] - c) + (s.points[(1, 0)] - c)).abs() < 1e-12);
        assert_eq!(s.points[(0, 1)], s.points[(1, 1)]);
        assert_eq!(s.points[(2, 0)], c);
    }

    #[test]
    fn static_head_has_zero_motion() {
        let p = sequence_from(&vec![face(); 10]);
        let t = Template::new(face(), TemplateSource::GlobalMean, (0..5).collect()).unwrap();
        let (aligned, tfs) = align_sequence(&p, &t, AlignScope::Frame, true).unwrap();
        let feats = transform_features(&tfs, 30.0, &MotionWeights::default()).unwrap();
        assert!(feats.motion.values.iter().all(|&v| v == 0.0));
        assert!(feats.translation.values.iter().all(|&v| v.abs() < 1e-12));
        assert!(feats.angle.values.iter().all(|&v| v.abs() < 1e-12));
        for (a, b) in aligned.coords.iter().zip(&p.coords) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_ramp_gives_linear_angle() {
        let frames: Vec<Mat<f64>> = (0..20)
            .map(|k| ProcrustesTransform { scale: 1.0, rotation: rot2(0.05 * k as f64), translation: vec![0.0, 0.0] }.apply_mat(&face()))
            .collect();
        let p = sequence_from(&frames);
        let t = Template::new(face(), TemplateSource::GlobalMean, (0..5).collect()).unwrap();
        let (_, tfs) = align_sequence(&p, &t, AlignScope::Frame, false).unwrap();
        let feats = transform_features(&tfs, 30.0, &MotionWeights::default()).unwrap();
        for (k, a) in feats.angle.values.iter().enumerate() {
            assert!((a + 0.05 * k as f64).abs() < 1e-9, "frame {k}: {a}");
        }
    }

    #[test]
    fn window_scope_fits_mean_pose() {
        let shifted = ProcrustesTransform { scale: 1.0, rotation: rot2(0.3), translation: vec![1.0, -2.0] };
        let frames: Vec<Mat<f64>> = (0..12).map(|_| shifted.apply_mat(&face())).collect();
        let p = sequence_from(&frames);
        let t = Template::new(face(), TemplateSource::GlobalMean, (0..5).collect()).unwrap();
        let (aligned, tfs) = align_sequence(&p, &t, AlignScope::Window { length: 5 }, true).unwrap();
        assert!(tfs.iter().all(|t| t.is_some()));
        for f in 0..12 {
            for k in 0..5 {
                for d in 0..2 {
                    assert!((aligned.point(f, k)[d] - face()[(k, d)]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn three_d_rotation_vector_norm() {
        let tf = ProcrustesTransform { scale: 1.0, rotation: rot3([1.0, 2.0, -0.5], 0.7), translation: vec![0.0; 3] };
        assert!((tf.rotation_angle() - 0.7).abs() < 1e-12);
    }

    fn random_config(seed: &[f64], dims: usize) -> Mat<f64> {
        Mat::from_rows(seed.len() / dims, dims, seed.to_vec())
    }

    proptest! {
        #[test]
        fn round_trip_2d(pts in proptest::collection::vec(-2.0f64..2.0, 12), theta in -3.1f64..3.1,
                         s in 0.2f64..5.0, tx in -10.0f64..10.0, ty in -10.0f64..10.0) {
            let t = random_config(&pts, 2);
            prop_assume!(check_spread(&t, "t").is_ok());
            let fwd = ProcrustesTransform { scale: s, rotation: rot2(theta), translation: vec![tx, ty] };
            let x = fwd.apply_mat(&t);
            let tf = fit_procrustes(&x, &t, true).unwrap();
            prop_assert!(fwd.then(&tf).deviation_from_identity() < 1e-9);
            // optimality: never worse than leaving x alone
            prop_assert!(tf.apply_mat(&x).sub(&t).frobenius() <= x.sub(&t).frobenius() + 1e-12);
        }

        #[test]
        fn round_trip_3d(pts in proptest::collection::vec(-2.0f64..2.0, 18), ax in proptest::collection::vec(-1.0f64..1.0, 3),
                         theta in 0.0f64..3.1, s in 0.2f64..5.0, tr in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let t = random_config(&pts, 3);
            prop_assume!(check_spread(&t, "t").is_ok());
            prop_assume!(ax.iter().map(|v| v * v).sum::<f64>() > 1e-3);
            let fwd = ProcrustesTransform { scale: s, rotation: rot3([ax[0], ax[1], ax[2]], theta), translation: tr };
            let x = fwd.apply_mat(&t);
            let tf = fit_procrustes(&x, &t, true).unwrap();
            prop_assert!(fwd.then(&tf).deviation_from_identity() < 1e-9);
            let rtr = &tf.rotation.transpose() * &tf.rotation;
            prop_assert!(rtr.sub(&Mat::identity(3)).frobenius() < 1e-9);
        }

        #[test]
        fn distances_preserved_up_to_scale(pts in proptest::collection::vec(-2.0f64..2.0, 10), theta in -3.0f64..3.0, s in 0.5f64..2.0) {
            let t = random_config(&pts, 2);
            prop_assume!(check_spread(&t, "t").is_ok());
            let x = ProcrustesTransform { scale: s, rotation: rot2(theta), translation: vec![0.3, 0.1] }.apply_mat(&t);
            let tf = fit_procrustes(&x, &t, true).unwrap();
            let y = tf.apply_mat(&x);
            let dist = |m: &Mat<f64>, a: usize, b: usize| ((m[(a,0)]-m[(b,0)]).powi(2) + (m[(a,1)]-m[(b,1)]).powi(2)).sqrt();
            for a in 0..5 { for b in 0..5 {
                prop_assert!((dist(&y, a, b) - tf.scale * dist(&x, a, b)).abs() < 1e-9);
            }}
        }
    }
}
