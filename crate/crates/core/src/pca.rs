//! Principal component analysis of postures: fitting, projection,
//! reconstruction, principal-movement export and an alignment diagnostic.
//!
//! PCA here is descriptive. Its scores are never fed back into recurrence
//! analysis, because the rotation changes state-space geometry.

use std::path::Path;

use log::warn;

use crate::ingest::{Cell, Table};
use crate::linalg::{symmetric_eigen, Mat};
use crate::{Error, PoseSequence, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<F> {
    /// Coordinates per keypoint (2 or 3); 1 for generic feature matrices.
    pub dims: usize,
    pub mean: Vec<F>,
    /// Per-column divisor: the sample SD when standardized, otherwise 1.
    pub scale: Vec<F>,
    /// Columns are components, ordered by descending variance.
    pub loadings: Mat<F>,
    pub explained_variance: Vec<F>,
    pub explained_ratio: Vec<F>,
}

impl<F: Real> PcaModel<F> {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.loadings.cols
    }

    pub fn loading(&self, c: usize) -> Vec<F> {
        self.loadings.column(c)
    }
}

/// Fits on a `frames × features` matrix. The covariance uses the `T − 1`
/// denominator. With `standardize`, each column is also divided by its SD,
/// which fails for constant columns. `n_components` of `None` keeps all.
pub fn fit_pca<F: Real>(frames: &Mat<F>, dims: usize, standardize: bool, n_components: Option<usize>) -> Result<PcaModel<F>> {
    let (t, p) = (frames.rows, frames.cols);
    if t < 2 || p == 0 {
        return Err(Error::TooShort { required: 2, actual: t });
    }
    if dims == 0 || p % dims != 0 {
        return Err(Error::ShapeMismatch(format!("{p} columns do not split into points of {dims} coordinates")));
    }
    if t <= p {
        warn!("PCA on {t} frames of {p} features: fewer frames than features, trailing components are empty");
    }
    let k = n_components.unwrap_or(p);
    if k == 0 || k > p {
        return Err(Error::invalid(format!("requested {k} components from {p} features")));
    }
    let tf = F::from_usize_lossy(t);
    let mean: Vec<F> = (0..p).map(|j| (0..t).map(|i| frames[(i, j)]).sum::<F>() / tf).collect();
    let mut centered = Mat::zeros(t, p);
    for i in 0..t {
        for j in 0..p {
            centered[(i, j)] = frames[(i, j)] - mean[j];
        }
    }
    let denom = F::from_usize_lossy(t - 1);
    let mut scale = vec![F::one(); p];
    if standardize {
        for (j, sc) in scale.iter_mut().enumerate() {
            let sd = ((0..t).map(|i| centered[(i, j)] * centered[(i, j)]).sum::<F>() / denom).sqrt();
            if !(sd > F::zero()) {
                return Err(Error::degenerate(format!("column {j} has zero variance and cannot be standardized")));
            }
            *sc = sd;
            for i in 0..t {
                centered[(i, j)] = centered[(i, j)] / sd;
            }
        }
    }
    let mut cov = Mat::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v = (0..t).map(|i| centered[(i, a)] * centered[(i, b)]).sum::<F>() / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let total = cov.trace();
    if !(total > F::zero()) {
        return Err(Error::degenerate("all frames are identical"));
    }
    let eig = symmetric_eigen(&cov);
    let mut loadings = Mat::zeros(p, k);
    for c in 0..k {
        let col = eig.vectors.column(c);
        // sign convention: largest-magnitude element positive (first on ties)
        let lead = col.iter().enumerate().fold(0, |best, (i, v)| if v.abs() > col[best].abs() { i } else { best });
        let sign = if col[lead] < F::zero() { -F::one() } else { F::one() };
        for (r, v) in col.into_iter().enumerate() {
            loadings[(r, c)] = v * sign;
        }
    }
    let explained_variance: Vec<F> = eig.values[..k].iter().map(|&v| v.max(F::zero())).collect();
    let explained_ratio = explained_variance.iter().map(|&v| v / total).collect();
    Ok(PcaModel { dims, mean, scale, loadings, explained_variance, explained_ratio })
}

fn check_width<F: Real>(model: &PcaModel<F>, width: usize) -> Result<()> {
    if width != model.n_features() {
        return Err(Error::ShapeMismatch(format!("frames have {width} features, model has {}", model.n_features())));
    }
    Ok(())
}

/// Scores `((x − mean) / scale) · V`, one row per frame.
pub fn project<F: Real>(model: &PcaModel<F>, frames: &Mat<F>) -> Result<Mat<F>> {
    check_width(model, frames.cols)?;
    let (p, k) = (model.n_features(), model.n_components());
    let mut out = Mat::zeros(frames.rows, k);
    for i in 0..frames.rows {
        let z: Vec<F> = (0..p).map(|j| (frames[(i, j)] - model.mean[j]) / model.scale[j]).collect();
        for c in 0..k {
            out[(i, c)] = (0..p).map(|j| z[j] * model.loadings[(j, c)]).sum();
        }
    }
    Ok(out)
}

/// Inverse of [`project`]: `mean + (scores · Vᵀ) ∘ scale`.
pub fn reconstruct<F: Real>(model: &PcaModel<F>, scores: &Mat<F>) -> Result<Mat<F>> {
    if scores.cols != model.n_components() {
        return Err(Error::ShapeMismatch(format!("{} scores per frame, model has {} components", scores.cols, model.n_components())));
    }
    let p = model.n_features();
    let mut out = Mat::zeros(scores.rows, p);
    for i in 0..scores.rows {
        for j in 0..p {
            let v: F = (0..scores.cols).map(|c| scores[(i, c)] * model.loadings[(j, c)]).sum();
            out[(i, j)] = model.mean[j] + v * model.scale[j];
        }
    }
    Ok(out)
}

/// Extreme postures along one component.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalMovement<F> {
    pub component: usize,
    /// Flattened `keypoint × dims` postures.
    pub min_pose: Vec<F>,
    pub max_pose: Vec<F>,
    pub amplification: F,
}

/// Postures `mean ∓ a·v` (in original units) for the first `k` components,
/// with `a` chosen so that the RMS over keypoints of the min-to-max
/// displacement equals `target_rms`.
pub fn principal_movements<F: Real>(model: &PcaModel<F>, k: usize, target_rms: F) -> Result<Vec<PrincipalMovement<F>>> {
    if k > model.n_components() {
        return Err(Error::invalid(format!("asked for {k} movements, model has {} components", model.n_components())));
    }
    let d = model.dims;
    let n_kp = F::from_usize_lossy(model.n_features() / d);
    Ok((0..k)
        .map(|c| {
            let dir: Vec<F> = (0..model.n_features()).map(|j| model.loadings[(j, c)] * model.scale[j]).collect();
            // RMS keypoint displacement between mean − v and mean + v
            let unit_rms = (dir.chunks(d).map(|pt| {
                let s: F = pt.iter().map(|&x| x * x).sum();
                F::lit(4.0) * s
            }).sum::<F>() / n_kp).sqrt();
            let amplification = target_rms / unit_rms;
            let min_pose = model.mean.iter().zip(&dir).map(|(&m, &v)| m - amplification * v).collect();
            let max_pose = model.mean.iter().zip(&dir).map(|(&m, &v)| m + amplification * v).collect();
            PrincipalMovement { component: c, min_pose, max_pose, amplification }
        })
        .collect())
}

/// Frames × (keypoints·dims) matrix of the fully valid frames, plus the
/// indices of the frames used.
pub fn pose_matrix<F: Real>(p: &PoseSequence<F>) -> (Mat<F>, Vec<usize>) {
    let kept: Vec<usize> = (0..p.n_frames()).filter(|&f| (0..p.n_keypoints()).all(|k| p.is_valid(f, k))).collect();
    let width = p.n_keypoints() * p.dims;
    let mut data = Vec::with_capacity(kept.len() * width);
    for &f in &kept {
        for k in 0..p.n_keypoints() {
            data.extend_from_slice(p.point(f, k));
        }
    }
    (Mat::from_rows(kept.len(), width, data), kept)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationDiagnostic<F> {
    /// Largest |Pearson r| between the first component's scores and any
    /// axis of the posture centroid.
    pub max_abs_corr: F,
    pub flagged: bool,
}

fn pearson<F: Real>(a: &[F], b: &[F]) -> F {
    let n = F::from_usize_lossy(a.len());
    let (ma, mb) = (a.iter().copied().sum::<F>() / n, b.iter().copied().sum::<F>() / n);
    let (mut sab, mut saa, mut sbb) = (F::zero(), F::zero(), F::zero());
    for (&x, &y) in a.iter().zip(b) {
        sab = sab + (x - ma) * (y - mb);
        saa = saa + (x - ma) * (x - ma);
        sbb = sbb + (y - mb) * (y - mb);
    }
    if saa > F::zero() && sbb > F::zero() {
        sab / (saa * sbb).sqrt()
    } else {
        F::zero()
    }
}

/// Flags a leading component that mostly tracks global translation, a sign
/// that alignment did not remove it. Only logs a warning.
pub fn translation_diagnostic<F: Real>(model: &PcaModel<F>, frames: &Mat<F>) -> Result<TranslationDiagnostic<F>> {
    let scores = project(model, frames)?;
    let pc1 = scores.column(0);
    let d = model.dims;
    let n_kp = F::from_usize_lossy(model.n_features() / d);
    let mut max_abs_corr = F::zero();
    for axis in 0..d {
        let centroid: Vec<F> = (0..frames.rows)
            .map(|i| frames.row(i).iter().skip(axis).step_by(d).copied().sum::<F>() / n_kp)
            .collect();
        max_abs_corr = max_abs_corr.max(pearson(&pc1, &centroid).abs());
    }
    let flagged = max_abs_corr > F::lit(0.95);
    if flagged {
        warn!("first principal component correlates {max_abs_corr:.3} with centroid translation; check alignment");
    }
    Ok(TranslationDiagnostic { max_abs_corr, flagged })
}

/// Writes the model as `coordinate,mean,scale,pc1..pcK` and the variances
/// as `component,explained_variance,explained_ratio`.
pub fn write_model_csv<F: Real>(model: &PcaModel<F>, labels: &[String], model_path: &Path, variance_path: &Path) -> Result<()> {
    let k = model.n_components();
    let mut t = Table::new(["coordinate".to_string(), "mean".into(), "scale".into()].into_iter().chain((1..=k).map(|c| format!("pc{c}"))));
    let axes = ["x", "y", "z"];
    for j in 0..model.n_features() {
        let name = if model.dims > 1 && labels.len() * model.dims == model.n_features() {
            format!("{}_{}", labels[j / model.dims], axes[j % model.dims])
        } else {
            j.to_string()
        };
        let mut row = vec![Cell::Text(name), model.mean[j].to_f64_lossy().into(), model.scale[j].to_f64_lossy().into()];
        row.extend((0..k).map(|c| Cell::Float(model.loadings[(j, c)].to_f64_lossy())));
        t.push(row)?;
    }
    t.write(model_path)?;
    let mut v = Table::new(["component", "explained_variance", "explained_ratio"]);
    for c in 0..k {
        v.push(vec![
            (c + 1).into(),
            model.explained_variance[c].to_f64_lossy().into(),
            model.explained_ratio[c].to_f64_lossy().into(),
        ])?;
    }
    v.write(variance_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    #[test]
    fn points_on_a_line_have_one_component() {
        let data: Vec<f64> = (0..50).flat_map(|i| [i as f64, 2.0 * i as f64 + 1.0]).collect();
        let m = fit_pca(&Mat::from_rows(50, 2, data), 2, false, None).unwrap();
        assert!((m.explained_ratio[0] - 1.0).abs() < 1e-12);
        assert!(m.explained_ratio[1].abs() < 1e-12);
        let v = m.loading(0);
        assert!(v[1] > 0.0 && (v[1] / v[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn isotropic_cloud_splits_variance_evenly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..30_000).map(|_| gauss(&mut rng)).collect();
        let m = fit_pca(&Mat::from_rows(10_000, 3, data), 3, false, None).unwrap();
        for r in &m.explained_ratio {
            assert!((r - 1.0 / 3.0).abs() < 0.05);
        }
    }

    #[test]
    fn reconstruction_orthonormality_and_variance_budget() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (t, p) = (200, 12);
        let data: Vec<f64> = (0..t * p).map(|i| gauss(&mut rng) * (1.0 + (i % p) as f64)).collect();
        let x = Mat::from_rows(t, p, data);
        for standardize in [false, true] {
            let m = fit_pca(&x, 3, standardize, None).unwrap();
            let vt_v = &m.loadings.transpose() * &m.loadings;
            assert!(vt_v.sub(&Mat::identity(p)).frobenius() < 1e-9);
            let back = reconstruct(&m, &project(&m, &x).unwrap()).unwrap();
            assert!(back.sub(&x).frobenius() < 1e-9);
            assert!((m.explained_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(m.explained_variance.windows(2).all(|w| w[0] >= w[1]));
            for c in 0..p {
                let col = m.loading(c);
                let lead = col.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
                assert!(lead > 0.0);
            }
        }
    }

    #[test]
    fn mean_pose_projects_to_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let x = Mat::from_rows(50, 4, (0..200).map(|_| gauss(&mut rng)).collect());
        let m = fit_pca(&x, 2, false, None).unwrap();
        let s = project(&m, &Mat::from_rows(1, 4, m.mean.clone())).unwrap();
        assert!(s.data.iter().all(|v| v.abs() < 1e-12));
        assert!(project(&m, &Mat::<f64>::zeros(1, 3)).is_err());
    }

    #[test]
    fn individual_covariance_is_not_diagonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        // person A moves along (1, 1), person B along (1, −0.2)
        let mut rows = Vec::new();
        for i in 0..400 {
            let g = gauss(&mut rng);
            let e = 0.1 * gauss(&mut rng);
            if i < 200 {
                rows.extend([g + e, g - e]);
            } else {
                rows.extend([g, -0.2 * g + e]);
            }
        }
        let x = Mat::from_rows(400, 2, rows);
        let m = fit_pca(&x, 2, false, None).unwrap();
        let s = project(&m, &x).unwrap();
        let a = Mat::from_rows(200, 2, s.data[..400].to_vec());
        let cov = &a.transpose() * &a;
        assert!(cov[(0, 1)].abs() > 0.05 * cov[(0, 0)]);
    }

    #[test]
    fn zero_variance_column_rejected_when_standardizing() {
        let x = Mat::from_rows(3, 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert!(fit_pca(&x, 2, true, None).is_err());
        assert!(fit_pca(&x, 2, false, None).is_ok());
    }

    #[test]
    fn amplification_hits_target_and_is_linear() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let x = Mat::from_rows(100, 6, (0..600).map(|_| gauss(&mut rng)).collect());
        let m = fit_pca(&x, 3, false, None).unwrap();
        let pm = principal_movements(&m, 2, 0.25).unwrap();
        let pm2 = principal_movements(&m, 2, 0.5).unwrap();
        for (a, b) in pm.iter().zip(&pm2) {
            assert!((b.amplification - 2.0 * a.amplification).abs() < 1e-12);
            let rms = (a.max_pose.chunks(3).zip(a.min_pose.chunks(3))
                .map(|(p, q)| p.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
                .sum::<f64>() / 2.0).sqrt();
            assert!((rms - 0.25).abs() < 1e-12);
        }
        assert!(principal_movements(&m, 7, 0.25).is_err());
    }

    #[test]
    fn translation_dominated_data_is_flagged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let mut rows = Vec::new();
        for i in 0..300 {
            let drift = i as f64 * 0.1;
            for k in 0..4 {
                rows.extend([k as f64 + drift + 0.01 * gauss(&mut rng), (k * k) as f64 + 0.01 * gauss(&mut rng)]);
            }
        }
        let x = Mat::from_rows(300, 8, rows);
        let m = fit_pca(&x, 2, false, None).unwrap();
        assert!(translation_diagnostic(&m, &x).unwrap().flagged);
    }
}
