use serde::Serialize;

use super::{diagonal_histogram, vertical_histogram, LineHistogram, RecurrenceMatrix};
use crate::Real;

/// Recurrence quantification measures. Line statistics are `None` when no
/// line reaches `l_min` (absent, not zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RqaMetrics<F> {
    /// Recurrent cells per eligible cell, in percent.
    pub rr: F,
    /// Recurrent cells on diagonal lines ≥ l_min, in percent.
    pub det: F,
    /// Recurrent cells on vertical lines ≥ l_min, in percent.
    pub lam: F,
    pub l_mean: Option<F>,
    pub l_max: Option<usize>,
    /// Sample standard deviation of diagonal line lengths ≥ l_min (0 for a single line).
    pub l_sd: Option<F>,
    /// Shannon entropy (nats) of the diagonal length distribution ≥ l_min.
    pub entr: Option<F>,
    /// Mean vertical line length ≥ l_min.
    pub tt: Option<F>,
    /// 1 / l_max.
    pub div: Option<F>,
}

impl<F: Real> RqaMetrics<F> {
    pub const NAMES: [&'static str; 9] = ["rr", "det", "lam", "l_mean", "l_max", "l_sd", "entr", "tt", "div"];

    /// Values in [`Self::NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 9] {
        let f = |v: F| Some(v.to_f64_lossy());
        [
            f(self.rr),
            f(self.det),
            f(self.lam),
            self.l_mean.and_then(f),
            self.l_max.map(|v| v as f64),
            self.l_sd.and_then(f),
            self.entr.and_then(f),
            self.tt.and_then(f),
            self.div.and_then(f),
        ]
    }
}

/// Metrics from a matrix and its raw line histograms.
pub fn compute_metrics<F: Real>(
    m: &RecurrenceMatrix<F>,
    diag: &LineHistogram,
    vert: &LineHistogram,
    l_min: usize,
) -> RqaMetrics<F> {
    let hundred = F::lit(100.0);
    let recurrent = m.n_recurrent();
    let eligible = m.n_eligible();
    let pct = |num: u64, den: u64| {
        if den == 0 {
            F::zero()
        } else {
            F::from_u64(num).expect("count fits") / F::from_u64(den).expect("count fits") * hundred
        }
    };
    let n_lines = diag.n_lines(l_min);
    let line_stats = (n_lines > 0).then(|| {
        let n = F::from_u64(n_lines).expect("count fits");
        let mean = F::from_u64(diag.n_points(l_min)).expect("count fits") / n;
        let ss = diag
            .iter_from(l_min)
            .map(|(l, c)| {
                let d = F::from_usize_lossy(l) - mean;
                F::from_u64(c).expect("count fits") * d * d
            })
            .sum::<F>();
        let sd = if n_lines > 1 { (ss / (n - F::one())).sqrt() } else { F::zero() };
        let entr = -diag
            .iter_from(l_min)
            .map(|(_, c)| {
                let p = F::from_u64(c).expect("count fits") / n;
                p * p.ln()
            })
            .sum::<F>();
        let l_max = diag.max_length();
        (mean, l_max, sd, entr.max(F::zero()))
    });
    let n_vert = vert.n_lines(l_min);
    let tt = (n_vert > 0)
        .then(|| F::from_u64(vert.n_points(l_min)).expect("count fits") / F::from_u64(n_vert).expect("count fits"));
    RqaMetrics {
        rr: pct(recurrent, eligible),
        det: pct(diag.n_points(l_min), recurrent),
        lam: pct(vert.n_points(l_min), recurrent),
        l_mean: line_stats.map(|s| s.0),
        l_max: line_stats.map(|s| s.1),
        l_sd: line_stats.map(|s| s.2),
        entr: line_stats.map(|s| s.3),
        tt,
        div: line_stats.map(|s| F::one() / F::from_usize_lossy(s.1)),
    }
}

/// Histograms and metrics in one call.
pub fn rqa<F: Real>(m: &RecurrenceMatrix<F>, l_min: usize) -> RqaMetrics<F> {
    compute_metrics(m, &diagonal_histogram(m), &vertical_histogram(m), l_min)
}
