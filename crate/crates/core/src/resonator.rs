//! Notch-type (hanger) resonator analysis with the diameter correction method.
//!
//! The transmission model is
//!
//! ```text
//! S21(f) = a·e^{iθ}·e^{−2πifτ} · [1 − (Ql/|Qc|)·e^{iφ} / (1 + 2i·Ql·(f/f0 − 1))]
//! ```
//!
//! and the internal quality factor follows from `1/Qi = 1/Ql − cos φ/|Qc|`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lsq::{self, FitProblem};
use crate::quantities::{dbm_to_watts, Frequency, S21Trace, HBAR};

/// Largest |φ| the fitter will move to; keeps φ strictly inside (−π/2, π/2).
const PHI_LIMIT: f64 = FRAC_PI_2 * (1.0 - 1e-9);
/// A dip must reach below this fraction of the edge level to count.
const DIP_THRESHOLD: f64 = 0.99;
/// Number of linewidths within which power-sweep fits must agree on f0.
const F0_AGREEMENT_LINEWIDTHS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorParams {
    pub f0: Frequency,
    /// Loaded quality factor.
    pub ql: f64,
    /// Magnitude of the complex coupling quality factor.
    pub qc_mag: f64,
    /// Asymmetry angle, rad.
    pub phi: f64,
    /// Background amplitude.
    pub a: f64,
    /// Background phase, rad.
    pub theta: f64,
    /// Cable delay, s.
    pub tau: f64,
}

impl ResonatorParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.f0.as_hz() > 0.0
            && self.ql > 0.0
            && self.qc_mag > 0.0
            && self.phi.abs() < FRAC_PI_2
            && self.a > 0.0
            && self.theta.is_finite()
            && self.tau.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid resonator parameters: {self:?}")))
        }
    }

    /// `f0 / Ql`, the loaded linewidth in Hz.
    pub fn linewidth(&self) -> f64 {
        self.f0.as_hz() / self.ql
    }
}

/// Evaluate the DCM notch model at frequency `f` (Hz).
pub fn s21_model(p: &ResonatorParams, f: f64) -> Complex64 {
    let background = Complex64::from_polar(p.a, p.theta - TAU * f * p.tau);
    let x = f / p.f0.as_hz() - 1.0;
    let coupling = Complex64::from_polar(p.ql / p.qc_mag, p.phi);
    background * (1.0 - coupling / Complex64::new(1.0, 2.0 * p.ql * x))
}

/// `Qi = 1 / (1/Ql − cos φ / |Qc|)`.
pub fn qi_from_dcm(ql: f64, qc_mag: f64, phi: f64) -> Result<f64> {
    if !(ql > 0.0 && qc_mag > 0.0) {
        return Err(Error::invalid(format!("Ql and |Qc| must be positive (Ql={ql}, |Qc|={qc_mag})")));
    }
    let denom = 1.0 / ql - phi.cos() / qc_mag;
    if denom > 0.0 {
        Ok(1.0 / denom)
    } else {
        Err(Error::UnphysicalFit(format!(
            "1/Qi = {denom:.3e} is not positive (Ql={ql:.4e}, |Qc|={qc_mag:.4e}, phi={phi:.4})"
        )))
    }
}

/// One-sigma uncertainties of a resonator fit, in the units of the
/// corresponding parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorUncertainties {
    pub f0_hz: f64,
    pub ql: f64,
    pub qc_mag: f64,
    pub phi: f64,
    pub a: f64,
    pub theta: f64,
    pub tau_s: f64,
    pub qi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonatorFit {
    pub params: ResonatorParams,
    pub qi: f64,
    pub uncertainties: Option<ResonatorUncertainties>,
    /// Root-mean-square of the Re/Im residuals.
    pub rms_residual: f64,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn unwrap_phase(values: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut offset = 0.0;
    let mut prev = None;
    for z in values {
        let ph = z.arg();
        if let Some(p) = prev {
            let d: f64 = ph - p;
            if d > PI {
                offset -= TAU;
            } else if d < -PI {
                offset += TAU;
            }
        }
        prev = Some(ph);
        out.push(ph + offset);
    }
    out
}

/// Ordinary least-squares line; returns (slope, intercept) of y against x.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Frequency at which `level` is crossed when walking from `start` with `step`
/// (±1), linearly interpolated. `None` if the trace ends first.
fn crossing(freqs: &[f64], m2: &[f64], start: usize, forward: bool, level: f64) -> Option<f64> {
    let mut i = start;
    loop {
        let j = if forward {
            if i + 1 >= m2.len() {
                return None;
            }
            i + 1
        } else {
            if i == 0 {
                return None;
            }
            i - 1
        };
        if m2[j] >= level {
            let t = (level - m2[i]) / (m2[j] - m2[i]);
            return Some(freqs[i] + t * (freqs[j] - freqs[i]));
        }
        i = j;
    }
}

/// Heuristic starting point for [`fit_resonator`].
///
/// f0 is the frequency of minimum |S21|; the background amplitude comes from
/// the trace edges; Ql from the full width at half depth of the |S21|² dip;
/// |Qc| from the dip depth; φ starts at zero. The cable delay is the slope of
/// the unwrapped edge phase after removing the phase that the guessed
/// resonance itself contributes at the edges.
pub fn initial_guess(trace: &S21Trace) -> Result<ResonatorParams> {
    let freqs = trace.freqs();
    let values = trace.values();
    let n = freqs.len();
    let n_edge = (n / 10).max(3);
    let mags: Vec<f64> = values.iter().map(|z| z.norm()).collect();

    let mut edge_mags: Vec<f64> = mags[..n_edge].iter().chain(&mags[n - n_edge..]).copied().collect();
    let edge = median(&mut edge_mags);
    let (i_min, &min) = mags
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("trace is non-empty");
    if !(min < DIP_THRESHOLD * edge) {
        return Err(Error::NoDipFound { min, edge });
    }

    let a = edge;
    let f0 = freqs[i_min];

    let m2: Vec<f64> = mags.iter().map(|m| (m / a).powi(2)).collect();
    let depth = 1.0 - m2[i_min];
    let half = 1.0 - 0.5 * depth;
    let left = crossing(freqs, &m2, i_min, false, half);
    let right = crossing(freqs, &m2, i_min, true, half);
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (f0 - l),
        (None, Some(r)) => 2.0 * (r - f0),
        (None, None) => freqs[n - 1] - freqs[0],
    };
    let fwhm = fwhm.max(freqs[1] - freqs[0]);
    let ql = f0 / fwhm;
    let qc_mag = ql / (1.0 - min / a);

    let phase = unwrap_phase(values);
    let edge_idx: Vec<usize> = (0..n_edge).chain(n - n_edge..n).collect();
    let ex: Vec<f64> = edge_idx.iter().map(|&i| freqs[i] - f0).collect();
    let mut guess = ResonatorParams { f0: Frequency::hz(f0), ql, qc_mag, phi: 0.0, a, theta: 0.0, tau: 0.0 };
    // Phase of the bare resonance factor at each edge point.
    let ey: Vec<f64> = edge_idx
        .iter()
        .map(|&i| {
            let bare = s21_model(&ResonatorParams { a: 1.0, ..guess }, freqs[i]);
            phase[i] - bare.arg()
        })
        .collect();
    let (slope, intercept) = line_fit(&ex, &ey);
    guess.tau = -slope / TAU;
    guess.theta = wrap_angle(intercept + TAU * f0 * guess.tau);
    Ok(guess)
}

/// Wrap an angle into (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let w = x - TAU * (x / TAU).round();
    if w <= -PI {
        w + TAU
    } else if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Internal fit coordinates.
///
/// The fitter works on `[u, ql/Q, qc/Q, φ, a, θ_ref, τ_ns]` where `f0 = f_ref +
/// u·f_ref/Q`, `Q` is the guessed Ql, and `θ_ref` is the background phase
/// referred to `f_ref`. All coordinates are of order one, which keeps the
/// finite-difference steps and stopping rules meaningful for every Q range.
#[derive(Debug, Clone, Copy)]
pub struct DcmFrame {
    f_ref: f64,
    q_scale: f64,
}

const TAU_UNIT: f64 = 1e-9;

impl DcmFrame {
    pub fn from_guess(guess: &ResonatorParams) -> Self {
        DcmFrame { f_ref: guess.f0.as_hz(), q_scale: guess.ql }
    }

    fn width(&self) -> f64 {
        self.f_ref / self.q_scale
    }

    pub fn to_internal(&self, p: &ResonatorParams) -> Vec<f64> {
        vec![
            (p.f0.as_hz() - self.f_ref) / self.width(),
            p.ql / self.q_scale,
            p.qc_mag / self.q_scale,
            p.phi,
            p.a,
            wrap_angle(p.theta - TAU * self.f_ref * p.tau),
            p.tau / TAU_UNIT,
        ]
    }

    pub fn to_params(&self, x: &[f64]) -> ResonatorParams {
        let tau = x[6] * TAU_UNIT;
        ResonatorParams {
            f0: Frequency::hz(self.f_ref + x[0] * self.width()),
            ql: x[1] * self.q_scale,
            qc_mag: x[2] * self.q_scale,
            phi: x[3],
            a: x[4],
            theta: wrap_angle(x[5] + TAU * self.f_ref * tau),
            tau,
        }
    }

    /// Model evaluated in internal coordinates, written in terms of offsets
    /// from `f_ref` so that nearby parameter values do not cancel.
    pub fn model(&self, x: &[f64], f: f64) -> Complex64 {
        let df = f - self.f_ref;
        let f0_offset = x[0] * self.width();
        let f0 = self.f_ref + f0_offset;
        let ql = x[1] * self.q_scale;
        let qc = x[2] * self.q_scale;
        let detune = (df - f0_offset) / f0;
        let background = Complex64::from_polar(x[4], x[5] - TAU * df * x[6] * TAU_UNIT);
        let coupling = Complex64::from_polar(ql / qc, x[3]);
        background * (1.0 - coupling / Complex64::new(1.0, 2.0 * ql * detune))
    }

    /// Interleaved (Re, Im) residuals of the model against `trace`.
    pub fn residuals(&self, trace: &S21Trace, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * trace.len());
        for (f, z) in trace.points() {
            let d = self.model(x, f) - z;
            out.push(d.re);
            out.push(d.im);
        }
        out
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let inf = f64::INFINITY;
        (
            vec![-inf, 1e-9, 1e-9, -PHI_LIMIT, 1e-12, -inf, -inf],
            vec![inf, inf, inf, PHI_LIMIT, inf, inf, inf],
        )
    }

    /// Linear map from internal to physical coordinates, `∂phys/∂internal`,
    /// in the order (f0, Ql, Qc, φ, a, θ, τ).
    fn physical_jacobian(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(7, 7);
        t[(0, 0)] = self.width();
        t[(1, 1)] = self.q_scale;
        t[(2, 2)] = self.q_scale;
        t[(3, 3)] = 1.0;
        t[(4, 4)] = 1.0;
        t[(5, 5)] = 1.0;
        t[(5, 6)] = TAU * self.f_ref * TAU_UNIT;
        t[(6, 6)] = TAU_UNIT;
        t
    }
}

fn propagate_uncertainties(frame: &DcmFrame, cov_internal: &DMatrix<f64>, p: &ResonatorParams, qi: f64) -> ResonatorUncertainties {
    let t = frame.physical_jacobian();
    let cov = &t * cov_internal * t.transpose();
    let sd = |i: usize| cov[(i, i)].max(0.0).sqrt();
    // dQi/d(Ql, Qc, φ)
    let q2 = qi * qi;
    let g = [
        q2 / (p.ql * p.ql),
        -q2 * p.phi.cos() / (p.qc_mag * p.qc_mag),
        -q2 * p.phi.sin() / p.qc_mag,
    ];
    let idx = [1, 2, 3];
    let mut var_qi = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            var_qi += g[a] * g[b] * cov[(i, j)];
        }
    }
    ResonatorUncertainties {
        f0_hz: sd(0),
        ql: sd(1),
        qc_mag: sd(2),
        phi: sd(3),
        a: sd(4),
        theta: sd(5),
        tau_s: sd(6),
        qi: var_qi.max(0.0).sqrt(),
    }
}

/// Fit the DCM model to `trace`, starting from [`initial_guess`].
pub fn fit_resonator(trace: &S21Trace) -> Result<ResonatorFit> {
    let guess = initial_guess(trace)?;
    fit_resonator_from(trace, &guess)
}

/// Fit the DCM model to `trace` from an explicit starting point.
pub fn fit_resonator_from(trace: &S21Trace, guess: &ResonatorParams) -> Result<ResonatorFit> {
    guess.validate()?;
    let frame = DcmFrame::from_guess(guess);
    let (lower, upper) = frame.bounds();
    let problem = FitProblem::new(|x: &[f64]| frame.residuals(trace, x), frame.to_internal(guess))
        .with_bounds(lower, upper);
    let result = lsq::fit(&problem)?;
    let params = frame.to_params(&result.params);
    params.validate()?;
    let qi = qi_from_dcm(params.ql, params.qc_mag, params.phi)?;
    let uncertainties = result
        .covariance
        .as_ref()
        .map(|c| propagate_uncertainties(&frame, c, &params, qi));
    Ok(ResonatorFit {
        params,
        qi,
        uncertainties,
        rms_residual: result.rms_residual(),
        cost: result.cost,
        initial_cost: result.initial_cost,
        iterations: result.iterations,
        converged: result.converged,
    })
}

/// Photons per watt of on-chip power, `2·Ql² / (ħ·ω0²·|Qc|)`.
pub fn photons_per_watt(p: &ResonatorParams) -> f64 {
    let w0 = p.f0.to_angular().as_rad_per_s();
    2.0 * p.ql * p.ql / (HBAR * w0 * w0 * p.qc_mag)
}

/// Mean intracavity photon number for a drive of `applied_power_dbm` at the
/// instrument through `attenuation_db` of input line.
pub fn photon_number(fit: &ResonatorFit, applied_power_dbm: f64, attenuation_db: f64) -> Result<f64> {
    if !(attenuation_db.is_finite() && attenuation_db >= 0.0) {
        return Err(Error::InvalidQuantity(format!(
            "attenuation must be finite and non-negative, got {attenuation_db} dB"
        )));
    }
    if !(fit.qi > 0.0) {
        return Err(Error::UnphysicalFit(format!("Qi = {}", fit.qi)));
    }
    let on_chip = dbm_to_watts(applied_power_dbm - attenuation_db)?;
    Ok(photons_per_watt(&fit.params) * on_chip.watts())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Position of the trace in the input list.
    pub index: usize,
    pub applied_power_dbm: f64,
    pub photon_number: f64,
    pub qi: f64,
    pub qi_uncertainty: Option<f64>,
    pub fit: ResonatorFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSkip {
    pub index: usize,
    pub reason: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSweep {
    /// Ordered by ascending photon number.
    pub points: Vec<SweepPoint>,
    pub skipped: Vec<SweepSkip>,
}

fn sweep_point(index: usize, trace: &S21Trace) -> Result<SweepPoint> {
    let power = trace
        .applied_power_dbm
        .ok_or_else(|| Error::MissingMetadata("applied power (dBm) is required for photon number".into()))?;
    let atten = trace
        .line_attenuation_db
        .ok_or_else(|| Error::MissingMetadata("line attenuation (dB) is required for photon number".into()))?;
    let fit = fit_resonator(trace)?;
    let n = photon_number(&fit, power, atten)?;
    Ok(SweepPoint {
        index,
        applied_power_dbm: power,
        photon_number: n,
        qi: fit.qi,
        qi_uncertainty: fit.uncertainties.map(|u| u.qi),
        fit,
    })
}

/// Fit every trace of a power sweep and report (⟨n⟩, Qi) points.
///
/// Entries that failed upstream (for example a file that did not pass trace
/// validation) and traces whose fit fails are reported as skips. At least two
/// successful fits are required, and all fitted resonance frequencies must
/// agree within five linewidths.
pub fn power_sweep(traces: Vec<Result<S21Trace>>) -> Result<PowerSweep> {
    let outcomes: Vec<Result<SweepPoint>> = traces
        .into_par_iter()
        .enumerate()
        .map(|(i, t)| t.and_then(|t| sweep_point(i, &t)))
        .collect();

    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(p) => points.push(p),
            Err(reason) => skipped.push(SweepSkip { index, reason }),
        }
    }
    if points.len() < 2 {
        return Err(Error::SweepFailed { succeeded: points.len() });
    }

    let mut f0s: Vec<f64> = points.iter().map(|p| p.fit.params.f0.as_hz()).collect();
    let f_med = median(&mut f0s);
    let reference = points
        .iter()
        .min_by(|a, b| {
            (a.fit.params.f0.as_hz() - f_med)
                .abs()
                .total_cmp(&(b.fit.params.f0.as_hz() - f_med).abs())
        })
        .expect("at least two points");
    for p in &points {
        let lw = p.fit.params.linewidth().max(reference.fit.params.linewidth());
        let d = (p.fit.params.f0.as_hz() - reference.fit.params.f0.as_hz()).abs();
        if d > F0_AGREEMENT_LINEWIDTHS * lw {
            return Err(Error::F0Mismatch {
                f0_a_hz: reference.fit.params.f0.as_hz(),
                f0_b_hz: p.fit.params.f0.as_hz(),
            });
        }
    }

    points.sort_by(|a, b| a.photon_number.total_cmp(&b.photon_number).then(a.index.cmp(&b.index)));
    Ok(PowerSweep { points, skipped })
}
