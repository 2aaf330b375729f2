//! Seeded synthetic data with known ground truth.
//!
//! The generator is fully specified here so that fixtures can be reproduced
//! bit for bit in any language:
//!
//! * Seeding: the 64-bit seed is scrambled once with SplitMix64,
//!   `z = seed + 0x9E3779B97F4A7C15; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!   z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^= z >> 31` (wrapping
//!   arithmetic). A zero result is replaced by `0x9E3779B97F4A7C15`.
//! * Update (xorshift64*): `x ^= x >> 12; x ^= x << 25; x ^= x >> 27;`
//!   output `x * 0x2545F4914F6CDD1D` (wrapping).
//! * Uniform on [0, 1): `(output >> 11) * 2⁻⁵³`.
//! * Normals (Box–Muller): draw `u1, u2`; with `r = sqrt(−2·ln(1 − u1))` and
//!   `t = 2π·u2` the pair is `(r·cos t, r·sin t)`. Both values are used, cosine
//!   first.
//!
//! Complex noise takes one Box–Muller pair per sample (real, imaginary). Real
//! noise consumes the normal stream in order.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ler::{LerDesign, resonant_frequency};
use crate::quantities::{DecayTrace, Frequency, S21Trace, MIN_DECAY_POINTS, MIN_S21_POINTS};
use crate::resonator::{s21_model, ResonatorParams};
use crate::timedomain::{ramsey_model, t1_model};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Standard deviation (per quadrature for complex data).
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec { sigma: 0.0, seed: 0 }
    }

    fn validate(&self) -> Result<()> {
        if self.sigma.is_finite() && self.sigma >= 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("noise sigma must be finite and >= 0, got {}", self.sigma)))
        }
    }
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xorshift64* generator with SplitMix64 seeding and Box–Muller normals.
#[derive(Debug, Clone)]
pub struct Xorshift64Star {
    state: u64,
    spare: Option<f64>,
}

impl Xorshift64Star {
    pub fn new(seed: u64) -> Self {
        let s = splitmix64(seed);
        Xorshift64Star { state: if s == 0 { 0x9E37_79B9_7F4A_7C15 } else { s }, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// One Box–Muller pair of independent standard normals.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let t = TAU * u2;
        (r * t.cos(), r * t.sin())
    }

    /// Next standard normal from the pair stream.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let (a, b) = self.normal_pair();
        self.spare = Some(b);
        a
    }
}

fn uniform_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    let step = (stop - start) / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { stop } else { start + step * i as f64 }).collect()
}

/// Noisy samples of the DCM model on a uniform grid.
pub fn synth_s21(p: &ResonatorParams, f_start: f64, f_stop: f64, n_points: usize, noise: NoiseSpec) -> Result<S21Trace> {
    p.validate()?;
    noise.validate()?;
    if !(f_start.is_finite() && f_stop.is_finite() && f_start < f_stop) {
        return Err(Error::invalid(format!("need f_start < f_stop, got {f_start} .. {f_stop}")));
    }
    if n_points < MIN_S21_POINTS {
        return Err(Error::invalid(format!("need at least {MIN_S21_POINTS} points, got {n_points}")));
    }
    let freqs = uniform_grid(f_start, f_stop, n_points);
    let mut rng = Xorshift64Star::new(noise.seed);
    let values = freqs
        .iter()
        .map(|&f| {
            let (re, im) = rng.normal_pair();
            s21_model(p, f) + Complex64::new(re, im) * noise.sigma
        })
        .collect();
    S21Trace::new(freqs, values)
}

fn real_trace(span: f64, n_points: usize, noise: NoiseSpec, model: impl Fn(f64) -> f64) -> Result<DecayTrace> {
    noise.validate()?;
    if !(span.is_finite() && span > 0.0) {
        return Err(Error::invalid(format!("span must be positive, got {span}")));
    }
    if n_points < MIN_DECAY_POINTS {
        return Err(Error::invalid(format!("need at least {MIN_DECAY_POINTS} points, got {n_points}")));
    }
    let delays = uniform_grid(0.0, span, n_points);
    let mut rng = Xorshift64Star::new(noise.seed);
    let signal = delays.iter().map(|&t| model(t) + noise.sigma * rng.normal()).collect();
    DecayTrace::new(delays, signal)
}

/// `a·exp(−t/t1) + b` on `n_points` uniform delays over `[0, span]`.
pub fn synth_decay(t1: f64, a: f64, b: f64, span: f64, n_points: usize, noise: NoiseSpec) -> Result<DecayTrace> {
    if !(t1.is_finite() && t1 > 0.0) {
        return Err(Error::invalid(format!("t1 must be positive, got {t1}")));
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("amplitude and offset must be finite"));
    }
    real_trace(span, n_points, noise, |t| t1_model(t, a, b, t1))
}

/// Parameters of a Ramsey fringe, `a·exp(−t/t2)·cos(2π·detuning·t + phase) + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamseyTruth {
    pub t2: f64,
    pub detuning: f64,
    pub a: f64,
    pub phase: f64,
    pub b: f64,
}

pub fn synth_ramsey(truth: &RamseyTruth, span: f64, n_points: usize, noise: NoiseSpec) -> Result<DecayTrace> {
    let RamseyTruth { t2, detuning, a, phase, b } = *truth;
    if !(t2.is_finite() && t2 > 0.0) {
        return Err(Error::invalid(format!("t2 must be positive, got {t2}")));
    }
    if !(detuning.is_finite() && detuning >= 0.0) {
        return Err(Error::invalid(format!("detuning must be >= 0, got {detuning}")));
    }
    if !(a.is_finite() && b.is_finite() && phase.is_finite()) {
        return Err(Error::invalid("amplitude, phase and offset must be finite"));
    }
    real_trace(span, n_points, noise, |t| ramsey_model(t, a, b, t2, detuning, phase))
}

/// `(length, f_r)` pairs following `f_r = 1/(2π·sqrt(L·(C_stray + C0·len)))`.
///
/// Noise is added to `1/f_r²` (units s²), where the law is linear in length.
pub fn synth_ler_dataset(design: &LerDesign, lengths: &[f64], noise: NoiseSpec) -> Result<Vec<(f64, Frequency)>> {
    design.validate()?;
    noise.validate()?;
    let mut rng = Xorshift64Star::new(noise.seed);
    lengths
        .iter()
        .map(|&len| {
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::invalid(format!("fin length must be positive, got {len}")));
            }
            let f = resonant_frequency(design.inductance, design.total_capacitance(len))?;
            if noise.sigma == 0.0 {
                return Ok((len, f));
            }
            let y = 1.0 / f.as_hz().powi(2) + noise.sigma * rng.normal();
            if !(y > 0.0) {
                return Err(Error::invalid("noise drove 1/f² non-positive"));
            }
            Ok((len, Frequency::hz(1.0 / y.sqrt())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ler::fit_c0;
    use crate::timedomain::{fit_ramsey, fit_t1};
    use approx::assert_relative_eq;

    #[test]
    fn generator_reference_values() {
        // SplitMix64 of 0 is the first SplitMix64 output for state 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        let mut a = Xorshift64Star::new(42);
        let mut b = Xorshift64Star::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let u = a.uniform();
        assert!((0.0..1.0).contains(&u));
    }

    fn params() -> ResonatorParams {
        ResonatorParams {
            f0: Frequency::ghz(5.0),
            ql: 2e4,
            qc_mag: 4e4,
            phi: 0.05,
            a: 1.0,
            theta: 0.2,
            tau: 10e-9,
        }
    }

    #[test]
    fn noiseless_s21_equals_model() {
        let p = params();
        let t = synth_s21(&p, 4.999e9, 5.001e9, 101, NoiseSpec::noiseless()).unwrap();
        for (f, z) in t.points() {
            assert_eq!(z, s21_model(&p, f));
        }
        assert_eq!(t.freqs()[0], 4.999e9);
        assert_eq!(t.freqs()[100], 5.001e9);
    }

    #[test]
    fn s21_is_deterministic() {
        let p = params();
        let n = NoiseSpec { sigma: 0.01, seed: 99 };
        assert_eq!(synth_s21(&p, 4.99e9, 5.01e9, 64, n).unwrap(), synth_s21(&p, 4.99e9, 5.01e9, 64, n).unwrap());
    }

    #[test]
    fn s21_noise_level() {
        // Far from resonance the model is the background alone.
        let p = ResonatorParams { tau: 0.0, theta: 0.0, ..params() };
        let t = synth_s21(&p, 6.0e9, 6.001e9, 4096, NoiseSpec { sigma: 0.01, seed: 1 }).unwrap();
        let re: Vec<f64> = t.points().map(|(f, z)| z.re - s21_model(&p, f).re).collect();
        let mean = re.iter().sum::<f64>() / re.len() as f64;
        let var = re.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (re.len() - 1) as f64;
        assert!((var.sqrt() / 0.01 - 1.0).abs() < 0.05);
    }

    #[test]
    fn s21_preconditions() {
        let p = params();
        assert!(synth_s21(&p, 5e9, 4e9, 64, NoiseSpec::noiseless()).is_err());
        assert!(synth_s21(&p, 4e9, 5e9, 15, NoiseSpec::noiseless()).is_err());
        assert!(synth_s21(&p, 4e9, 5e9, 64, NoiseSpec { sigma: -1.0, seed: 0 }).is_err());
    }

    #[test]
    fn decay_endpoints() {
        let t = synth_decay(20e-6, 1.0, 0.0, 100e-6, 51, NoiseSpec::noiseless()).unwrap();
        assert_eq!(t.signal()[0], 1.0);
        assert_relative_eq!(t.signal()[50] / t.signal()[0], (-5.0f64).exp(), max_relative = 1e-14);
        let flat = synth_decay(20e-6, 0.0, 0.3, 100e-6, 51, NoiseSpec::noiseless()).unwrap();
        assert!(flat.signal().iter().all(|&s| s == 0.3));
        assert!(synth_decay(-1.0, 1.0, 0.0, 1e-4, 51, NoiseSpec::noiseless()).is_err());
        assert!(synth_decay(1e-5, 1.0, 0.0, 1e-4, 7, NoiseSpec::noiseless()).is_err());
    }

    #[test]
    fn decay_round_trip() {
        let t = synth_decay(20e-6, 1.0, 0.0, 100e-6, 50, NoiseSpec::noiseless()).unwrap();
        assert_relative_eq!(fit_t1(&t).unwrap().t1, 20e-6, max_relative = 1e-6);
    }

    #[test]
    fn ramsey_zero_detuning_is_envelope() {
        let truth = RamseyTruth { t2: 5e-6, detuning: 0.0, a: 1.0, phase: 0.0, b: 0.0 };
        let t = synth_ramsey(&truth, 20e-6, 100, NoiseSpec::noiseless()).unwrap();
        for (d, s) in t.delays().iter().zip(t.signal()) {
            assert_relative_eq!(*s, (-d / 5e-6).exp(), max_relative = 1e-14);
        }
    }

    #[test]
    fn ramsey_phase_pi_flips_sign() {
        let base = RamseyTruth { t2: 5e-6, detuning: 0.5e6, a: 1.0, phase: 0.0, b: 0.4 };
        let flipped = RamseyTruth { phase: std::f64::consts::PI, ..base };
        let t0 = synth_ramsey(&base, 20e-6, 100, NoiseSpec::noiseless()).unwrap();
        let t1 = synth_ramsey(&flipped, 20e-6, 100, NoiseSpec::noiseless()).unwrap();
        for (x, y) in t0.signal().iter().zip(t1.signal()) {
            assert!(((x - 0.4) + (y - 0.4)).abs() < 1e-12);
        }
    }

    #[test]
    fn ramsey_round_trip() {
        let truth = RamseyTruth { t2: 5e-6, detuning: 0.5e6, a: 1.0, phase: 0.0, b: 0.5 };
        let t = synth_ramsey(&truth, 20e-6, 200, NoiseSpec::noiseless()).unwrap();
        let fit = fit_ramsey(&t).unwrap();
        assert_relative_eq!(fit.t2_star, 5e-6, max_relative = 1e-6);
        assert_relative_eq!(fit.detuning, 0.5e6, max_relative = 1e-6);
    }

    fn design() -> LerDesign {
        LerDesign {
            inductance: 4.29e-9,
            stray_capacitance: 84.1e-15,
            cap_per_length: 2.1e-15 / 1e-6,
            epsilon_r: 11.7,
        }
    }

    #[test]
    fn ler_dataset_round_trip() {
        let lengths = [40e-6, 60e-6, 80e-6, 100e-6];
        let data = synth_ler_dataset(&design(), &lengths, NoiseSpec::noiseless()).unwrap();
        let fit = fit_c0(&data, 4.29e-9).unwrap();
        assert_relative_eq!(fit.c0, 2.1e-9, max_relative = 1e-9);
    }

    #[test]
    fn ler_dataset_edge_cases() {
        assert!(synth_ler_dataset(&design(), &[], NoiseSpec::noiseless()).unwrap().is_empty());
        let n = NoiseSpec { sigma: 1e-23, seed: 4 };
        let a = synth_ler_dataset(&design(), &[50e-6, 70e-6], n).unwrap();
        let b = synth_ler_dataset(&design(), &[50e-6, 70e-6], n).unwrap();
        assert_eq!(a, b);
        assert!(synth_ler_dataset(&design(), &[-1e-6], NoiseSpec::noiseless()).is_err());
    }
}
