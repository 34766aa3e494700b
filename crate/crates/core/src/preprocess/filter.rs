//! Butterworth low-pass design (bilinear transform with prewarping) and
//! zero-phase forward-backward application.

use serde::{Deserialize, Serialize};

use super::gaps::fill_all;
use crate::{Error, Real, Result, Series};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// Design order; forward-backward application doubles the effective order.
    pub order: usize,
    /// Cutoff in Hz.
    pub cutoff: f64,
}

impl FilterSpec {
    pub fn lowpass(order: usize, cutoff: f64) -> Self {
        FilterSpec { order, cutoff }
    }

    pub fn validate(&self, rate: f64) -> Result<()> {
        if self.order == 0 {
            return Err(Error::invalid("filter order must be positive"));
        }
        if !(self.cutoff > 0.0 && self.cutoff < rate / 2.0) {
            return Err(Error::invalid(format!(
                "cutoff {} Hz must lie strictly between 0 and the Nyquist frequency {} Hz",
                self.cutoff,
                rate / 2.0
            )));
        }
        Ok(())
    }
}

/// One biquad, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad<F> {
    pub b: [F; 3],
    pub a: [F; 2],
}

impl<F: Real> Biquad<F> {
    fn dc_gain(&self) -> F {
        (self.b[0] + self.b[1] + self.b[2]) / (F::one() + self.a[0] + self.a[1])
    }

    /// Transposed direct form II state for a constant input `u` in steady state.
    fn steady_state(&self, u: F) -> [F; 2] {
        let y = self.dc_gain() * u;
        [y - self.b[0] * u, self.b[2] * u - self.a[1] * y]
    }

    fn run(&self, x: &mut [F], mut z: [F; 2]) {
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z[0];
            z[0] = self.b[1] * input - self.a[0] * y + z[1];
            z[1] = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos<F> {
    pub sections: Vec<Biquad<F>>,
}

impl<F: Real> Sos<F> {
    /// Digital Butterworth low-pass; odd orders get one first-order section.
    pub fn butterworth_lowpass(order: usize, cutoff: f64, rate: f64) -> Result<Self> {
        FilterSpec::lowpass(order, cutoff).validate(rate)?;
        let k = (std::f64::consts::PI * cutoff / rate).tan();
        let k2 = k * k;
        let mut sections = Vec::new();
        for i in 1..=order / 2 {
            let two_zeta = 2.0 * (std::f64::consts::PI * (2 * i - 1) as f64 / (2 * order) as f64).sin();
            let a0 = 1.0 + two_zeta * k + k2;
            sections.push(Biquad {
                b: [F::lit(k2 / a0), F::lit(2.0 * k2 / a0), F::lit(k2 / a0)],
                a: [F::lit((2.0 * k2 - 2.0) / a0), F::lit((1.0 - two_zeta * k + k2) / a0)],
            });
        }
        if order % 2 == 1 {
            let a0 = 1.0 + k;
            sections.push(Biquad {
                b: [F::lit(k / a0), F::lit(k / a0), F::zero()],
                a: [F::lit((k - 1.0) / a0), F::zero()],
            });
        }
        Ok(Sos { sections })
    }

    pub fn order(&self) -> usize {
        self.sections
            .iter()
            .map(|s| if s.a[1] == F::zero() && s.b[2] == F::zero() { 1 } else { 2 })
            .sum()
    }

    /// |H(e^{iω})|² at frequency `f` Hz for sampling rate `rate`.
    pub fn power_response(&self, f: f64, rate: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f / rate;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        self.sections.iter().fold(1.0, |acc, sec| {
            let b: Vec<f64> = sec.b.iter().map(|v| v.to_f64_lossy()).collect();
            let a: Vec<f64> = sec.a.iter().map(|v| v.to_f64_lossy()).collect();
            let (nr, ni) = (b[0] + b[1] * c1 + b[2] * c2, -(b[1] * s1 + b[2] * s2));
            let (dr, di) = (1.0 + a[0] * c1 + a[1] * c2, -(a[0] * s1 + a[1] * s2));
            acc * (nr * nr + ni * ni) / (dr * dr + di * di)
        })
    }

    /// Causal filtering with each section started in steady state for `x[0]`.
    fn filter_steady(&self, x: &mut [F]) {
        if x.is_empty() {
            return;
        }
        let mut level = x[0];
        for sec in &self.sections {
            let z = sec.steady_state(level);
            sec.run(x, z);
            level = level * sec.dc_gain();
        }
    }

    /// Forward-backward pass over an odd-reflected padded copy.
    fn forward_backward(&self, x: &[F]) -> Vec<F> {
        let n = x.len();
        let pad = (3 * self.order()).min(n.saturating_sub(1));
        let two = F::lit(2.0);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|k| two * x[0] - x[k]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|k| two * x[n - 1] - x[n - 1 - k]));
        self.filter_steady(&mut ext);
        ext.reverse();
        self.filter_steady(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }

    /// Zero-phase filtering that commutes exactly with time reversal: the
    /// forward-backward output is averaged with its mirror-image counterpart,
    /// which cancels the residual dependence on pass order at the edges.
    pub fn filtfilt(&self, x: &[F]) -> Vec<F> {
        if x.len() < 2 {
            return x.to_vec();
        }
        let fwd = self.forward_backward(x);
        let mut rev_in = x.to_vec();
        rev_in.reverse();
        let mut rev = self.forward_backward(&rev_in);
        rev.reverse();
        let half = F::lit(0.5);
        fwd.iter().zip(&rev).map(|(&a, &b)| (a + b) * half).collect()
    }
}

/// Zero-phase Butterworth low-pass. The series must be fully valid.
pub fn lowpass_zero_phase<F: Real>(s: &Series<F>, spec: &FilterSpec) -> Result<Series<F>> {
    let values = s.require_valid("lowpass filter")?;
    let sos = Sos::butterworth_lowpass(spec.order, spec.cutoff, s.rate())?;
    Ok(Series {
        values: sos.filtfilt(values),
        mask: s.mask.clone(),
        base: s.base,
    })
}

/// Filters a series with gaps: every gap is temporarily filled, the series
/// filtered, and the original mask reinstated.
pub fn lowpass_masked<F: Real>(s: &Series<F>, spec: &FilterSpec) -> Result<Series<F>> {
    if s.is_fully_valid() {
        return lowpass_zero_phase(s, spec);
    }
    let filled = fill_all(s)?;
    let mut out = lowpass_zero_phase(&filled, spec)?;
    out.mask = s.mask.clone();
    Ok(out)
}
