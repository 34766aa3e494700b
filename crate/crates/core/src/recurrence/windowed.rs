use log::warn;
use rayon::prelude::*;

use super::{build_matrix, joint_matrix, multi_embed, rqa, RecurrenceConfig, RecurrenceMode, RqaMetrics};
use crate::embedding::{delay_embed, EmbeddingSpec};
use crate::model::{make_windows, WindowSpec};
use crate::preprocess::{normalize, NormMode};
use crate::{Error, Real, Result, Series};

/// Signals for one recurrence analysis.
#[derive(Debug, Clone, Copy)]
pub enum RqaInput<'a, F> {
    Auto(&'a Series<F>),
    Cross(&'a Series<F>, &'a Series<F>),
    /// Two signals; the second is thresholded with its own config when given.
    Joint(&'a Series<F>, &'a Series<F>, Option<&'a RecurrenceConfig>),
    Multi(&'a [Series<F>]),
}

impl<F: Real> RqaInput<'_, F> {
    fn series(&self) -> Vec<&Series<F>> {
        match *self {
            RqaInput::Auto(a) => vec![a],
            RqaInput::Cross(a, b) | RqaInput::Joint(a, b, _) => vec![a, b],
            RqaInput::Multi(v) => v.iter().collect(),
        }
    }

    fn mode(&self) -> RecurrenceMode {
        match self {
            RqaInput::Auto(_) => RecurrenceMode::Auto,
            RqaInput::Cross(..) => RecurrenceMode::Cross,
            RqaInput::Joint(..) => RecurrenceMode::Joint,
            RqaInput::Multi(_) => RecurrenceMode::Multi,
        }
    }
}

/// Result for one window. Windows that cannot be analysed (masked samples,
/// constant signal) carry the reason instead of metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRqa<F> {
    pub start: usize,
    pub metrics: Option<RqaMetrics<F>>,
    pub epsilon_abs: Option<F>,
    pub d_bar: Option<F>,
    pub error: Option<String>,
}

fn one_window<F: Real>(
    input: &RqaInput<'_, F>,
    range: std::ops::Range<usize>,
    spec: &EmbeddingSpec,
    cfg: &RecurrenceConfig,
    norm: NormMode,
) -> Result<(RqaMetrics<F>, F, F)> {
    let prep = |s: &Series<F>| normalize(&s.slice(range.clone()), norm);
    let auto_cfg = RecurrenceConfig { mode: RecurrenceMode::Auto, ..*cfg };
    let m = match *input {
        RqaInput::Auto(a) => build_matrix(&delay_embed(&prep(a)?, spec)?, None, &auto_cfg)?,
        RqaInput::Cross(a, b) => {
            let (ea, eb) = (delay_embed(&prep(a)?, spec)?, delay_embed(&prep(b)?, spec)?);
            build_matrix(&ea, Some(&eb), cfg)?
        }
        RqaInput::Joint(a, b, cfg_b) => {
            let cfg_b = RecurrenceConfig { mode: RecurrenceMode::Auto, ..*cfg_b.unwrap_or(cfg) };
            let ra = build_matrix(&delay_embed(&prep(a)?, spec)?, None, &auto_cfg)?;
            let rb = build_matrix(&delay_embed(&prep(b)?, spec)?, None, &cfg_b)?;
            joint_matrix(&ra, &rb)?
        }
        RqaInput::Multi(series) => {
            let sliced: Vec<Series<F>> = series.iter().map(|s| s.slice(range.clone())).collect();
            build_matrix(&multi_embed(&sliced, spec)?, None, &auto_cfg)?
        }
    };
    let t = m.thresholds[0];
    Ok((rqa(&m, cfg.l_min), t.epsilon_abs, t.d_bar))
}

/// Recurrence quantification per window, each window normalized on its own
/// with `norm` (multidimensional input is always z-scored per series).
/// Windows run in parallel; results are returned in window order.
pub fn windowed_rqa<F: Real>(
    input: &RqaInput<'_, F>,
    windows: &WindowSpec,
    spec: &EmbeddingSpec,
    cfg: &RecurrenceConfig,
    norm: NormMode,
) -> Result<Vec<WindowRqa<F>>> {
    spec.validate()?;
    cfg.validate()?;
    if cfg.mode != input.mode() {
        return Err(Error::invalid(format!("config mode {:?} does not match {:?} input", cfg.mode, input.mode())));
    }
    let series = input.series();
    let n = series[0].len();
    if series.iter().any(|s| s.len() != n) {
        return Err(Error::ShapeMismatch("all signals must have the same length".into()));
    }
    let min_len = spec.span() + spec.l_min + 1;
    if windows.length < min_len {
        return Err(Error::invalid(format!(
            "window length {} is shorter than the minimum {min_len} for m={} tau={} l_min={}",
            windows.length, spec.m, spec.tau, spec.l_min
        )));
    }
    let embedded = spec.n_embedded(windows.length);
    if embedded < 1000 {
        warn!("windows yield {embedded} embedded points; fewer than 1000 may give unreliable recurrence structure");
    }
    let ranges = make_windows(n, windows)?;
    Ok(ranges
        .into_par_iter()
        .map(|r| {
            let start = r.start;
            match one_window(input, r, spec, cfg, norm) {
                Ok((metrics, eps, d_bar)) => {
                    WindowRqa { start, metrics: Some(metrics), epsilon_abs: Some(eps), d_bar: Some(d_bar), error: None }
                }
                Err(e) => WindowRqa { start, metrics: None, epsilon_abs: None, d_bar: None, error: Some(e.to_string()) },
            }
        })
        .collect())
}

/// Whole-signal analysis; errors are returned rather than recorded.
pub fn rqa_whole<F: Real>(
    input: &RqaInput<'_, F>,
    spec: &EmbeddingSpec,
    cfg: &RecurrenceConfig,
    norm: NormMode,
) -> Result<RqaMetrics<F>> {
    spec.validate()?;
    cfg.validate()?;
    if cfg.mode != input.mode() {
        return Err(Error::invalid(format!("config mode {:?} does not match {:?} input", cfg.mode, input.mode())));
    }
    let series = input.series();
    let n = series[0].len();
    if series.iter().any(|s| s.len() != n) {
        return Err(Error::ShapeMismatch("all signals must have the same length".into()));
    }
    one_window(input, 0..n, spec, cfg, norm).map(|r| r.0)
}
