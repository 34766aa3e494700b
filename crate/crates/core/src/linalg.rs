//! Small dense linear algebra: row-major matrices, cyclic Jacobi symmetric
//! eigendecomposition and one-sided Jacobi SVD.

use std::ops::{Index, IndexMut, Mul};

use crate::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Real> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Mat { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<F> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn frobenius(&self) -> F {
        self.data.iter().map(|&v| v * v).sum::<F>().sqrt()
    }

    pub fn trace(&self) -> F {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: F) -> Self {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Mat<F>) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> F {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = F::one();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| a[x * n + c].abs().partial_cmp(&a[y * n + c].abs()).unwrap())
                .unwrap();
            if a[p * n + c] == F::zero() {
                return F::zero();
            }
            if p != c {
                for k in 0..n {
                    a.swap(p * n + k, c * n + k);
                }
                det = -det;
            }
            let piv = a[c * n + c];
            det = det * piv;
            for r in c + 1..n {
                let f = a[r * n + c] / piv;
                for k in c..n {
                    a[r * n + k] = a[r * n + k] - f * a[c * n + k];
                }
            }
        }
        det
    }
}

impl<F> Index<(usize, usize)> for Mat<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F> IndexMut<(usize, usize)> for Mat<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

impl<F: Real> Mul for &Mat<F> {
    type Output = Mat<F>;
    fn mul(self, rhs: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == F::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] = out[(i, j)] + a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
/// Eigenvectors are the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<F> {
    pub values: Vec<F>,
    pub vectors: Mat<F>,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition. Only the upper triangle is trusted to
/// equal the lower one; asymmetric input gives meaningless results.
pub fn symmetric_eigen<F: Real>(m: &Mat<F>) -> SymmetricEigen<F> {
    assert_eq!(m.rows, m.cols, "eigendecomposition of a non-square matrix");
    let n = m.rows;
    let mut a = m.clone();
    let mut v = Mat::identity(n);
    let scale = a.frobenius();
    let tiny = F::epsilon() * F::epsilon() * scale * scale;

    for _ in 0..MAX_SWEEPS {
        let off: F = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off <= tiny || off == F::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == F::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (F::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].partial_cmp(&a[(x, x)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    SymmetricEigen { values, vectors }
}

/// `A = U · diag(sigma) · Vᵀ` for a square matrix, singular values descending.
#[derive(Debug, Clone)]
pub struct Svd<F> {
    pub u: Mat<F>,
    pub sigma: Vec<F>,
    pub v: Mat<F>,
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix. Columns of `u` that
/// belong to zero singular values are completed to an orthonormal basis.
pub fn svd<F: Real>(m: &Mat<F>) -> Svd<F> {
    assert_eq!(m.rows, m.cols, "svd expects a square matrix");
    let n = m.rows;
    let mut u = m.clone();
    let mut v = Mat::identity(n);
    let eps = F::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (F::zero(), F::zero(), F::zero());
                for k in 0..n {
                    alpha = alpha + u[(k, p)] * u[(k, p)];
                    beta = beta + u[(k, q)] * u[(k, q)];
                    gamma = gamma + u[(k, p)] * u[(k, q)];
                }
                if gamma == F::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (F::lit(2.0) * gamma);
                let sign = if zeta >= F::zero() { F::one() } else { -F::one() };
                let t = sign / (zeta.abs() + (F::one() + zeta * zeta).sqrt());
                let c = F::one() / (F::one() + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let up = u[(k, p)];
                    let uq = u[(k, q)];
                    u[(k, p)] = c * up - s * uq;
                    u[(k, q)] = s * up + c * uq;
                    let vp = v[(k, p)];
                    let vq = v[(k, q)];
                    v[(k, p)] = c * vp - s * vq;
                    v[(k, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<F> = (0..n)
        .map(|j| (0..n).map(|k| u[(k, j)] * u[(k, j)]).sum::<F>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal));

    let largest = norms.iter().cloned().fold(F::zero(), F::max);
    let cutoff = largest * eps * F::from_usize_lossy(n);
    let mut uo = Mat::zeros(n, n);
    let mut vo = Mat::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut filled = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        for k in 0..n {
            vo[(k, dst)] = v[(k, src)];
        }
        if s > cutoff {
            for k in 0..n {
                uo[(k, dst)] = u[(k, src)] / s;
            }
            filled.push(dst);
            sigma.push(s);
        } else {
            sigma.push(F::zero());
        }
    }
    // Complete the left basis for rank-deficient input by Gram-Schmidt on unit vectors.
    let mut candidate = 0;
    for dst in 0..n {
        if filled.contains(&dst) {
            continue;
        }
        loop {
            assert!(candidate < n, "basis completion exhausted unit vectors");
            let mut w = vec![F::zero(); n];
            w[candidate] = F::one();
            candidate += 1;
            for &j in &filled {
                let dot: F = (0..n).map(|k| w[k] * uo[(k, j)]).sum();
                for (k, wk) in w.iter_mut().enumerate() {
                    *wk = *wk - dot * uo[(k, j)];
                }
            }
            let norm = w.iter().map(|&x| x * x).sum::<F>().sqrt();
            if norm > F::lit(1e-3) {
                for (k, wk) in w.iter().enumerate() {
                    uo[(k, dst)] = *wk / norm;
                }
                filled.push(dst);
                break;
            }
        }
    }
    Svd { u: uo, sigma, v: vo }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn to_na(m: &Mat<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(m.rows, m.cols, &m.data)
    }

    fn orthonormal_error(q: &Mat<f64>) -> f64 {
        (&q.transpose() * q).sub(&Mat::identity(q.cols)).frobenius()
    }

    #[test]
    fn det_of_rotation_is_one() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let r = Mat::from_rows(2, 2, vec![c, s, -s, c]);
        assert!((r.det() - 1.0).abs() < 1e-15);
        let p = Mat::from_rows(3, 3, vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(p.det(), -1.0);
    }

    #[test]
    fn svd_rank_deficient_completes_basis() {
        // rank 2 in 3D
        let m = Mat::from_rows(3, 3, vec![1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 3.0]);
        let d = svd(&m);
        assert_eq!(d.sigma[2], 0.0);
        assert!(orthonormal_error(&d.u) < 1e-12);
        assert!(orthonormal_error(&d.v) < 1e-12);
    }

    proptest! {
        #[test]
        fn eigen_matches_nalgebra(vals in proptest::collection::vec(-5.0f64..5.0, 36)) {
            let a = Mat::from_rows(6, 6, vals);
            let sym = &a.transpose() * &a;
            let ours = symmetric_eigen(&sym);
            let mut theirs: Vec<f64> = nalgebra::SymmetricEigen::new(to_na(&sym)).eigenvalues.iter().cloned().collect();
            theirs.sort_by(|x, y| y.partial_cmp(x).unwrap());
            for (a, b) in ours.values.iter().zip(&theirs) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
            prop_assert!(orthonormal_error(&ours.vectors) < 1e-10);
            // A v = lambda v
            for j in 0..6 {
                let v = ours.vectors.column(j);
                for i in 0..6 {
                    let av: f64 = (0..6).map(|k| sym[(i, k)] * v[k]).sum();
                    prop_assert!((av - ours.values[j] * v[i]).abs() < 1e-8 * (1.0 + ours.values[0]));
                }
            }
        }

        #[test]
        fn svd_reconstructs_and_matches_nalgebra(vals in proptest::collection::vec(-5.0f64..5.0, 9)) {
            let a = Mat::from_rows(3, 3, vals);
            let d = svd(&a);
            let mut s = Mat::zeros(3, 3);
            for i in 0..3 { s[(i, i)] = d.sigma[i]; }
            let rec = &(&d.u * &s) * &d.v.transpose();
            prop_assert!(rec.sub(&a).frobenius() < 1e-10 * (1.0 + a.frobenius()));
            let theirs = to_na(&a).svd(false, false).singular_values;
            let mut theirs: Vec<f64> = theirs.iter().cloned().collect();
            theirs.sort_by(|x, y| y.partial_cmp(x).unwrap());
            for (x, y) in d.sigma.iter().zip(&theirs) {
                prop_assert!((x - y).abs() < 1e-10 * (1.0 + y));
            }
        }
    }
}
