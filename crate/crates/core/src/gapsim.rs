//! Gap-interpolation simulation: a noisy sine is cut by gaps of several
//! lengths, the gaps are filled by linear interpolation, and the RQA
//! measures are compared with the gap-free baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::path::{Path, PathBuf};

use crate::embedding::{delay_embed, EmbeddingSpec};
use crate::preprocess::{interpolate_gaps, GapPolicy};
use crate::recurrence::{build_matrix, rqa, RecurrenceConfig, RecurrenceMatrix, RecurrenceMode, Rescale, RqaMetrics, Threshold};
use crate::ingest::{format_float, write_grid_pgm, write_matrix_pgm, Table, DIFF_GAINED, DIFF_LOST, DIFF_UNCHANGED};
use crate::{Error, Result, Series};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GapSimConfig {
    pub rate: f64,
    /// Sine period in seconds.
    pub period: f64,
    /// Ratio of sine amplitude to noise standard deviation.
    pub snr: f64,
    pub n_samples: usize,
    pub m: usize,
    pub tau: usize,
    /// Gap lengths as multiples of τ.
    pub gap_multiples: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Rescaled radius (fraction of the mean distance).
    pub epsilon: f64,
    pub theiler: usize,
    pub l_min: usize,
}

impl Default for GapSimConfig {
    fn default() -> Self {
        GapSimConfig {
            rate: 100.0,
            period: 1.0,
            snr: 5.0,
            n_samples: 3000,
            m: 3,
            tau: 25,
            gap_multiples: vec![0.5, 1.0, 1.5, 2.0, 3.0, 4.0],
            trials: 30,
            seed: 1,
            epsilon: 0.2,
            theiler: 25,
            l_min: 2,
        }
    }
}

impl GapSimConfig {
    pub fn spec(&self) -> EmbeddingSpec {
        EmbeddingSpec { m: self.m, tau: self.tau, theiler: self.theiler, l_min: self.l_min }
    }

    fn recurrence(&self) -> RecurrenceConfig {
        RecurrenceConfig {
            mode: RecurrenceMode::Auto,
            epsilon: Threshold::Fixed(self.epsilon),
            rescale: Rescale::Mean,
            theiler: self.theiler,
            l_min: self.l_min,
        }
    }

    /// Gap length in samples for a multiple of τ.
    pub fn gap_samples(&self, multiple: f64) -> usize {
        (multiple * self.tau as f64).round() as usize
    }

    fn validate(&self) -> Result<()> {
        self.spec().validate()?;
        if !(self.rate > 0.0 && self.period > 0.0 && self.snr > 0.0) {
            return Err(Error::invalid("rate, period and snr must be positive"));
        }
        let period_samples = self.rate * self.period;
        if (self.n_samples as f64) < 10.0 * period_samples {
            return Err(Error::invalid(format!(
                "n_samples {} is below 10 periods ({} samples)",
                self.n_samples,
                10.0 * period_samples
            )));
        }
        if self.trials == 0 {
            return Err(Error::invalid("at least one trial is required"));
        }
        for &g in &self.gap_multiples {
            if !(g >= 0.0) || self.gap_samples(g) + 2 > self.n_samples {
                return Err(Error::invalid(format!("gap multiple {g} does not fit inside the signal")));
            }
        }
        Ok(())
    }

    /// Noisy sine for one trial; each trial has its own generator stream.
    pub fn signal(&self, trial: usize) -> Series<f64> {
        let mut rng = self.rng(trial);
        let noise = Normal::new(0.0, 1.0 / self.snr).expect("positive sd");
        let w = 2.0 * std::f64::consts::PI / (self.period * self.rate);
        let values = (0..self.n_samples).map(|k| (w * k as f64).sin() + noise.sample(&mut rng)).collect();
        Series::new(values, self.rate).expect("rate validated")
    }

    fn rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64);
        rng
    }
}

/// Cuts `[start, start + len)` and fills it by linear interpolation.
pub fn cut_and_interpolate(s: &Series<f64>, start: usize, len: usize) -> Result<Series<f64>> {
    if len == 0 {
        return Ok(s.clone());
    }
    if start == 0 || start + len >= s.len() {
        return Err(Error::invalid("gap must lie strictly inside the series"));
    }
    let mut g = s.clone();
    g.mask[start..start + len].iter_mut().for_each(|m| *m = false);
    let (filled, _) = interpolate_gaps(&g, &GapPolicy::new(len))?;
    Ok(filled)
}

/// Cell codes for a difference map.
pub const UNCHANGED: u8 = 0;
pub const LOST: u8 = 1;
pub const GAINED: u8 = 2;

/// Cellwise comparison of two equally shaped matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMap {
    pub rows: usize,
    pub cols: usize,
    pub codes: Vec<u8>,
}

impl DifferenceMap {
    pub fn code(&self, i: usize, j: usize) -> u8 {
        self.codes[i * self.cols + j]
    }

    pub fn count(&self, code: u8) -> usize {
        self.codes.iter().filter(|&&c| c == code).count()
    }
}

pub fn difference_map<F: crate::Real>(baseline: &RecurrenceMatrix<F>, gapped: &RecurrenceMatrix<F>) -> Result<DifferenceMap> {
    if baseline.rows != gapped.rows || baseline.cols != gapped.cols {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} baseline vs {}x{} comparison",
            baseline.rows, baseline.cols, gapped.rows, gapped.cols
        )));
    }
    let mut codes = Vec::with_capacity(baseline.rows * baseline.cols);
    for i in 0..baseline.rows {
        for j in 0..baseline.cols {
            codes.push(match (baseline.get(i, j), gapped.get(i, j)) {
                (true, false) => LOST,
                (false, true) => GAINED,
                _ => UNCHANGED,
            });
        }
    }
    Ok(DifferenceMap { rows: baseline.rows, cols: baseline.cols, codes })
}

/// Relative errors (%) for one gap length across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct GapErrors {
    pub multiple: f64,
    pub samples: usize,
    pub rr_errors: Vec<f64>,
    pub det_errors: Vec<f64>,
    /// Gap start per trial.
    pub starts: Vec<usize>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

impl GapErrors {
    pub fn rr(&self) -> (f64, f64) {
        mean_sd(&self.rr_errors)
    }

    pub fn det(&self) -> (f64, f64) {
        mean_sd(&self.det_errors)
    }
}

#[derive(Debug, Clone)]
pub struct GapSimResult {
    pub config: GapSimConfig,
    pub baselines: Vec<RqaMetrics<f64>>,
    pub gaps: Vec<GapErrors>,
    /// Trial 0 baseline matrix and, per gap length, the map for a centred gap.
    pub baseline_matrix: RecurrenceMatrix<f64>,
    pub maps: Vec<(f64, DifferenceMap)>,
}

fn rel_err(x: f64, base: f64) -> f64 {
    if base == 0.0 {
        if x == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        ((x - base) / base).abs() * 100.0
    }
}

fn analyse(s: &Series<f64>, cfg: &GapSimConfig) -> Result<(RecurrenceMatrix<f64>, RqaMetrics<f64>)> {
    let m = build_matrix(&delay_embed(s, &cfg.spec())?, None, &cfg.recurrence())?;
    let r = rqa(&m, cfg.l_min);
    Ok((m, r))
}

/// Runs every trial (in parallel) and aggregates errors in trial order.
pub fn run_gap_simulation(cfg: &GapSimConfig) -> Result<GapSimResult> {
    cfg.validate()?;
    let per_trial: Vec<(RqaMetrics<f64>, Vec<(usize, f64, f64)>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let s = cfg.signal(trial);
            let (_, base) = analyse(&s, cfg)?;
            // positions come from a separate stream so the signal does not
            // depend on how many gaps are drawn
            let mut rng = cfg.rng(trial + cfg.trials);
            let rows = cfg
                .gap_multiples
                .iter()
                .map(|&g| {
                    let len = cfg.gap_samples(g);
                    let start = rng.random_range(1..=cfg.n_samples - len - 1);
                    let (_, r) = analyse(&cut_and_interpolate(&s, start, len)?, cfg)?;
                    Ok((start, rel_err(r.rr, base.rr), rel_err(r.det, base.det)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((base, rows))
        })
        .collect::<Result<Vec<_>>>()?;

    let gaps = cfg
        .gap_multiples
        .iter()
        .enumerate()
        .map(|(gi, &g)| GapErrors {
            multiple: g,
            samples: cfg.gap_samples(g),
            rr_errors: per_trial.iter().map(|t| t.1[gi].1).collect(),
            det_errors: per_trial.iter().map(|t| t.1[gi].2).collect(),
            starts: per_trial.iter().map(|t| t.1[gi].0).collect(),
        })
        .collect();

    let s0 = cfg.signal(0);
    let (baseline_matrix, _) = analyse(&s0, cfg)?;
    let maps = cfg
        .gap_multiples
        .par_iter()
        .map(|&g| {
            let len = cfg.gap_samples(g);
            let start = (cfg.n_samples - len) / 2;
            let (m, _) = analyse(&cut_and_interpolate(&s0, start, len)?, cfg)?;
            Ok((g, difference_map(&baseline_matrix, &m)?))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GapSimResult { config: cfg.clone(), baselines: per_trial.into_iter().map(|t| t.0).collect(), gaps, baseline_matrix, maps })
}

/// Writes `gap_errors.csv` (aggregates), `gap_trials.csv` (raw values),
/// the trial-0 baseline plot and one difference map per gap length.
/// Returns the written paths in a fixed order.
pub fn write_outputs(r: &GapSimResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let seed = r.config.seed as usize;
    let mut written = Vec::new();

    let mut agg = Table::new(["seed", "trials", "gap_tau", "gap_samples", "rr_error_mean", "rr_error_sd", "det_error_mean", "det_error_sd"]);
    for g in &r.gaps {
        let ((rm, rs), (dm, ds)) = (g.rr(), g.det());
        agg.push(vec![seed.into(), r.config.trials.into(), g.multiple.into(), g.samples.into(), rm.into(), rs.into(), dm.into(), ds.into()])?;
    }
    let p = dir.join("gap_errors.csv");
    agg.write(&p)?;
    written.push(p);

    let mut raw = Table::new(["seed", "trial", "gap_tau", "gap_start", "baseline_rr", "baseline_det", "rr_error", "det_error"]);
    for (t, base) in r.baselines.iter().enumerate() {
        for g in &r.gaps {
            raw.push(vec![
                seed.into(),
                t.into(),
                g.multiple.into(),
                g.starts[t].into(),
                base.rr.into(),
                base.det.into(),
                g.rr_errors[t].into(),
                g.det_errors[t].into(),
            ])?;
        }
    }
    let p = dir.join("gap_trials.csv");
    raw.write(&p)?;
    written.push(p);

    let p = dir.join("baseline.pgm");
    write_matrix_pgm(&r.baseline_matrix, &p)?;
    written.push(p);
    for (g, map) in &r.maps {
        let p = dir.join(format!("difference_{}tau.pgm", format_float(*g)));
        write_grid_pgm(&p, map.rows, map.cols, |i, j| match map.code(i, j) {
            LOST => DIFF_LOST,
            GAINED => DIFF_GAINED,
            _ => DIFF_UNCHANGED,
        })?;
        written.push(p);
    }
    Ok(written)
}
