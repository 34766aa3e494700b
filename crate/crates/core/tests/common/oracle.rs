//! Straightforward double-loop reference for recurrence matrices and their
//! measures. Nothing here is shared with the library: embedding, distances,
//! thresholds and line counting are written out directly.

/// Delay vectors `(x[t], x[t−τ], …)` for `t = (m−1)τ … n−1`.
pub fn embed(x: &[f64], m: usize, tau: usize) -> Vec<Vec<f64>> {
    let span = (m - 1) * tau;
    (span..x.len()).map(|t| (0..m).map(|k| x[t - k * tau]).collect()).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        s += d * d;
    }
    s.sqrt()
}

pub enum Radius {
    /// ε times the scale.
    Fixed(f64),
    /// Recurrence rate as a fraction.
    Rate(f64),
}

pub enum Scale {
    Mean,
    Max,
    Unit,
}

pub struct Naive {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Vec<bool>>,
    pub eligible: Vec<Vec<bool>>,
}

/// `theiler = None` for cross recurrence (every cell eligible).
pub fn matrix(a: &[Vec<f64>], b: &[Vec<f64>], theiler: Option<usize>, radius: Radius, scale: Scale) -> Naive {
    let (rows, cols) = (a.len(), b.len());
    let eligible: Vec<Vec<bool>> = (0..rows)
        .map(|i| (0..cols).map(|j| theiler.map_or(true, |w| (i as i64 - j as i64).unsigned_abs() as usize > w)).collect())
        .collect();
    // mean over eligible cells, summed row by row
    let mut total = 0.0;
    let mut count = 0usize;
    let mut max = 0.0f64;
    for i in 0..rows {
        let mut row = 0.0;
        for j in 0..cols {
            if eligible[i][j] {
                let d = dist(&a[i], &b[j]);
                row += d;
                count += 1;
                max = max.max(d);
            }
        }
        total += row;
    }
    let mean = total / count as f64;
    let s = match scale {
        Scale::Mean => mean,
        Scale::Max => max,
        Scale::Unit => 1.0,
    };
    let eps = match radius {
        Radius::Fixed(e) => e * s,
        Radius::Rate(r) => {
            let mut d = Vec::new();
            for i in 0..rows {
                for j in 0..cols {
                    // symmetric auto matrices: rank the upper triangle only
                    if eligible[i][j] && (theiler.is_none() || j > i) {
                        d.push(dist(&a[i], &b[j]));
                    }
                }
            }
            d.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let k = ((r * d.len() as f64).round() as usize).clamp(1, d.len());
            d[k - 1]
        }
    };
    let cells = (0..rows)
        .map(|i| (0..cols).map(|j| eligible[i][j] && dist(&a[i], &b[j]) <= eps).collect())
        .collect();
    Naive { rows, cols, cells, eligible }
}

/// Run lengths of consecutive `true` values.
fn runs(v: impl Iterator<Item = bool>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut cur = 0;
    for b in v {
        if b {
            cur += 1;
        } else if cur > 0 {
            out.push(cur);
            cur = 0;
        }
    }
    if cur > 0 {
        out.push(cur);
    }
    out
}

pub fn diagonal_runs(m: &Naive) -> Vec<usize> {
    let mut all = Vec::new();
    for k in -(m.rows as i64 - 1)..(m.cols as i64) {
        let cells = (0..m.rows).filter_map(|i| {
            let j = i as i64 + k;
            (j >= 0 && (j as usize) < m.cols).then(|| m.cells[i][j as usize])
        });
        all.extend(runs(cells));
    }
    all
}

pub fn vertical_runs(m: &Naive) -> Vec<usize> {
    (0..m.cols).flat_map(|j| runs((0..m.rows).map(move |i| m.cells[i][j]))).collect()
}

/// RR, DET, LAM, L, Lmax, sd(L), ENTR, TT, DIV; `None` where undefined.
pub fn measures(m: &Naive, l_min: usize) -> [Option<f64>; 9] {
    let recurrent: usize = m.cells.iter().flatten().filter(|&&c| c).count();
    let eligible: usize = m.eligible.iter().flatten().filter(|&&c| c).count();
    let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 * 100.0 };
    let diag: Vec<usize> = diagonal_runs(m).into_iter().filter(|&l| l >= l_min).collect();
    let vert: Vec<usize> = vertical_runs(m).into_iter().filter(|&l| l >= l_min).collect();
    let mut out = [None; 9];
    out[0] = Some(pct(recurrent, eligible));
    out[1] = Some(pct(diag.iter().sum(), recurrent));
    out[2] = Some(pct(vert.iter().sum(), recurrent));
    if !diag.is_empty() {
        let n = diag.len() as f64;
        let mean = diag.iter().sum::<usize>() as f64 / n;
        let lmax = *diag.iter().max().unwrap();
        let sd = if diag.len() > 1 {
            (diag.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut hist = std::collections::BTreeMap::new();
        for &l in &diag {
            *hist.entry(l).or_insert(0usize) += 1;
        }
        let entr = -hist.values().map(|&c| c as f64 / n * (c as f64 / n).ln()).sum::<f64>();
        out[3] = Some(mean);
        out[4] = Some(lmax as f64);
        out[5] = Some(sd);
        out[6] = Some(entr.max(0.0));
        out[8] = Some(1.0 / lmax as f64);
    }
    if !vert.is_empty() {
        out[7] = Some(vert.iter().sum::<usize>() as f64 / vert.len() as f64);
    }
    out
}
