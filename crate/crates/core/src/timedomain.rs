//! T1 and Ramsey fits, and statistics over repeated T1 measurements.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lsq::{self, FitProblem, FitResult};
use crate::quantities::DecayTrace;
use crate::resonator::wrap_angle;

/// Zero-padding factor for the Ramsey spectral estimate.
const SPECTRUM_PADDING: usize = 8;
/// Fewer fringes than this over the span marks a Ramsey fit low-confidence.
const MIN_FRINGES: f64 = 2.0;
/// Bimodality coefficient of a uniform distribution.
pub const BIMODALITY_THRESHOLD: f64 = 5.0 / 9.0;

/// `a·exp(−t/t1) + b`
pub fn t1_model(t: f64, a: f64, b: f64, t1: f64) -> f64 {
    a * (-t / t1).exp() + b
}

/// `a·exp(−t/t2)·cos(2π·detuning·t + phase) + b`
pub fn ramsey_model(t: f64, a: f64, b: f64, t2: f64, detuning: f64, phase: f64) -> f64 {
    a * (-t / t2).exp() * (TAU * detuning * t + phase).cos() + b
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T1Uncertainties {
    pub t1: f64,
    pub amplitude: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct T1Fit {
    /// s
    pub t1: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub uncertainties: Option<T1Uncertainties>,
    pub rms_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamseyUncertainties {
    pub t2_star: f64,
    pub detuning: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamseyFit {
    /// s
    pub t2_star: f64,
    /// Hz, non-negative.
    pub detuning: f64,
    pub amplitude: f64,
    /// rad, in (−π, π].
    pub phase: f64,
    pub offset: f64,
    pub uncertainties: Option<RamseyUncertainties>,
    pub rms_residual: f64,
    /// Fewer than two fringes fit within the span.
    pub low_confidence: bool,
    pub converged: bool,
}

/// Largest |signal|, or an error if the trace carries no variation.
fn signal_scale(signal: &[f64]) -> Result<f64> {
    let max = signal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = signal.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = signal.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if scale == 0.0 || max - min <= 1e-12 * scale {
        return Err(Error::ConstantSignal);
    }
    Ok(scale)
}

fn sd(result: &FitResult, i: usize, unit: f64) -> Option<f64> {
    result.covariance.as_ref().map(|c| c[(i, i)].max(0.0).sqrt() * unit.abs())
}

/// Fit `A·exp(−t/T1) + B`.
///
/// Starting point: B is the mean of the last 10% of samples, A the first
/// sample minus B, and T1 a third of the span.
pub fn fit_t1(trace: &DecayTrace) -> Result<T1Fit> {
    let t = trace.delays();
    let s = trace.signal();
    let scale = signal_scale(s)?;
    let span = trace.span();

    let n_tail = (s.len() as f64 * 0.1).ceil().max(1.0) as usize;
    let b0 = s[s.len() - n_tail..].iter().sum::<f64>() / n_tail as f64;
    let a0 = s[0] - b0;
    let t1_0 = span / 3.0;

    // Internal coordinates: (A/scale, B/scale, T1/span).
    let residuals = |x: &[f64]| -> Vec<f64> {
        t.iter()
            .zip(s)
            .map(|(&ti, &si)| t1_model(ti, x[0], x[1], x[2] * span) - si / scale)
            .collect()
    };
    let problem = FitProblem::new(residuals, vec![a0 / scale, b0 / scale, t1_0 / span])
        .with_bounds(vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 1e-9], vec![f64::INFINITY; 3]);
    let result = lsq::fit(&problem)?;
    let x = &result.params;
    let t1 = x[2] * span;
    if !(x[2] > 1e-9) {
        return Err(Error::UnphysicalFit(format!("fitted T1 {t1} s collapsed to the lower bound")));
    }
    let uncertainties = match (sd(&result, 0, scale), sd(&result, 1, scale), sd(&result, 2, span)) {
        (Some(amplitude), Some(offset), Some(t1)) => Some(T1Uncertainties { t1, amplitude, offset }),
        _ => None,
    };
    Ok(T1Fit {
        t1,
        amplitude: x[0] * scale,
        offset: x[1] * scale,
        uncertainties,
        rms_residual: result.rms_residual() * scale,
        converged: result.converged,
    })
}

fn is_uniform(t: &[f64]) -> bool {
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    t.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt)
}

/// Frequency (Hz) and complex amplitude of the strongest non-zero component of
/// the mean-subtracted signal.
fn spectral_peak(t: &[f64], s: &[f64]) -> (f64, Complex64) {
    let n = s.len();
    let mean = s.iter().sum::<f64>() / n as f64;
    let span = t[n - 1] - t[0];
    let dt = span / (n - 1) as f64;
    let padded = n * SPECTRUM_PADDING;
    let df = 1.0 / (padded as f64 * dt);
    let n_freq = padded / 2;

    let spectrum: Vec<Complex64> = if is_uniform(t) {
        let mut buf: Vec<Complex64> = s.iter().map(|x| Complex64::new(x - mean, 0.0)).collect();
        buf.resize(padded, Complex64::new(0.0, 0.0));
        FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
        // Refer phases to the first delay.
        buf.truncate(n_freq + 1);
        buf.iter()
            .enumerate()
            .map(|(j, z)| z * Complex64::from_polar(1.0, -TAU * j as f64 * df * t[0]))
            .collect()
    } else {
        (0..=n_freq)
            .map(|j| {
                let f = j as f64 * df;
                t.iter()
                    .zip(s)
                    .map(|(&ti, &si)| Complex64::from_polar(si - mean, -TAU * f * ti))
                    .sum()
            })
            .collect()
    };
    let (j, z) = spectrum
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .expect("at least one non-zero frequency");
    (j as f64 * df, *z)
}

/// Linear least squares for `c1·e·cos + c2·e·sin + c3` at fixed (T2, δ);
/// returns (A, φ, B, SSR).
fn project_ramsey(t: &[f64], s: &[f64], t2: f64, detuning: f64) -> Option<(f64, f64, f64, f64)> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    let basis = |ti: f64| {
        let e = (-ti / t2).exp();
        let w = TAU * detuning * ti;
        Vector3::new(e * w.cos(), e * w.sin(), 1.0)
    };
    for (&ti, &si) in t.iter().zip(s) {
        let v = basis(ti);
        ata += v * v.transpose();
        atb += v * si;
    }
    let c = ata.cholesky()?.solve(&atb);
    let ssr = t
        .iter()
        .zip(s)
        .map(|(&ti, &si)| (basis(ti).dot(&c) - si).powi(2))
        .sum::<f64>();
    // A·cos(w + φ) = A·cos φ·cos w − A·sin φ·sin w
    let a = c[0].hypot(c[1]);
    let phi = (-c[1]).atan2(c[0]);
    Some((a, phi, c[2], ssr))
}

/// Fit `A·exp(−t/T2*)·cos(2π·δ·t + φ) + B`.
///
/// δ starts at the strongest non-zero peak of the zero-padded spectrum of the
/// mean-subtracted signal; A, φ and B start from a linear solve at that δ for
/// the best of a few trial T2* values.
pub fn fit_ramsey(trace: &DecayTrace) -> Result<RamseyFit> {
    let t = trace.delays();
    let s = trace.signal();
    let scale = signal_scale(s)?;
    let span = trace.span();

    let (peak, _) = spectral_peak(t, s);
    if peak * span < 1.0 {
        return Err(Error::DetuningUnresolved { peak_hz: peak });
    }

    let (a0, phi0, b0, t2_0) = [0.05, 0.1, 0.2, 0.35, 0.5, 1.0, 2.0, 5.0]
        .iter()
        .filter_map(|k| project_ramsey(t, s, k * span, peak).map(|(a, p, b, ssr)| (a, p, b, k * span, ssr)))
        .min_by(|x, y| x.4.total_cmp(&y.4))
        .map(|(a, p, b, t2, _)| (a, p, b, t2))
        .ok_or(Error::ConstantSignal)?;

    // Internal coordinates: (A/scale, B/scale, T2/span, δ·span, φ).
    let residuals = |x: &[f64]| -> Vec<f64> {
        t.iter()
            .zip(s)
            .map(|(&ti, &si)| ramsey_model(ti, x[0], x[1], x[2] * span, x[3] / span, x[4]) - si / scale)
            .collect()
    };
    let problem = FitProblem::new(residuals, vec![a0 / scale, b0 / scale, t2_0 / span, peak * span, phi0])
        .with_bounds(
            vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 1e-9, 0.0, f64::NEG_INFINITY],
            vec![f64::INFINITY; 5],
        );
    let result = lsq::fit(&problem)?;
    let x = &result.params;
    if !(x[2] > 1e-9) {
        return Err(Error::UnphysicalFit("fitted T2* collapsed to the lower bound".into()));
    }
    let (mut amplitude, mut phase) = (x[0] * scale, x[4]);
    if amplitude < 0.0 {
        amplitude = -amplitude;
        phase += std::f64::consts::PI;
    }
    let detuning = x[3] / span;
    let uncertainties = match (
        sd(&result, 2, span),
        sd(&result, 3, 1.0 / span),
        sd(&result, 0, scale),
        sd(&result, 4, 1.0),
        sd(&result, 1, scale),
    ) {
        (Some(t2_star), Some(detuning), Some(amplitude), Some(phase), Some(offset)) => {
            Some(RamseyUncertainties { t2_star, detuning, amplitude, phase, offset })
        }
        _ => None,
    };
    Ok(RamseyFit {
        t2_star: x[2] * span,
        detuning,
        amplitude,
        phase: wrap_angle(phase),
        offset: x[1] * scale,
        uncertainties,
        rms_residual: result.rms_residual() * scale,
        low_confidence: detuning * span < MIN_FRINGES,
        converged: result.converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` equally spaced edges from min to max.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct T1Stats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
    /// `(skew² + 1)/kurtosis`; `None` when all samples are equal.
    pub bimodality_coefficient: Option<f64>,
    pub bimodal_suspect: bool,
}

/// Summary statistics and an equal-width histogram of T1 samples.
pub fn t1_statistics(samples: &[f64], bin_count: usize) -> Result<T1Stats> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 T1 samples, got {}", samples.len())));
    }
    if bin_count == 0 {
        return Err(Error::invalid("bin count must be positive"));
    }
    if let Some(x) = samples.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::invalid(format!("T1 samples must be positive, got {x}")));
    }
    let n = samples.len();
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let (min, max) = (sorted[0], sorted[n - 1]);

    let central = |k: i32| samples.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / nf;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let std = (m2 * nf / (nf - 1.0)).sqrt();

    let width = (max - min) / bin_count as f64;
    let edges: Vec<f64> = (0..=bin_count)
        .map(|i| if i == bin_count { max } else { min + width * i as f64 })
        .collect();
    let mut counts = vec![0usize; bin_count];
    for &x in samples {
        let i = if width > 0.0 { ((x - min) / width).floor() as usize } else { 0 };
        counts[i.min(bin_count - 1)] += 1;
    }

    let bimodality_coefficient = (m2 > 0.0).then(|| {
        let skew = m3 / m2.powf(1.5);
        let kurt = m4 / (m2 * m2);
        (skew * skew + 1.0) / kurt
    });
    Ok(T1Stats {
        n,
        mean,
        median,
        std,
        min,
        max,
        histogram: Histogram { edges, counts },
        bimodality_coefficient,
        bimodal_suspect: bimodality_coefficient.is_some_and(|b| b > BIMODALITY_THRESHOLD),
    })
}
