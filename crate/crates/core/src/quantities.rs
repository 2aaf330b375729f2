//! Physical quantities and the trace containers shared by the analysis modules.
//!
//! Frequencies are stored as linear frequency in Hz. Anything that needs an
//! angular rate goes through [`Frequency::to_angular`], so a 2π factor can
//! never be dropped or applied twice silently.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054571817e-34;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.8541878128e-12;

/// Minimum number of points in an [`S21Trace`].
pub const MIN_S21_POINTS: usize = 16;
/// Minimum number of points in a [`DecayTrace`].
pub const MIN_DECAY_POINTS: usize = 8;

/// Linear frequency in Hz. May be signed (detunings, anharmonicity).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Frequency(f64);

impl Frequency {
    pub fn new(hz: f64) -> Result<Self> {
        if hz.is_finite() {
            Ok(Frequency(hz))
        } else {
            Err(Error::InvalidQuantity(format!("frequency {hz} Hz is not finite")))
        }
    }

    /// Infallible constructor for literals. Panics on a non-finite value.
    pub fn hz(hz: f64) -> Self {
        Self::new(hz).expect("finite frequency")
    }

    pub fn khz(khz: f64) -> Self {
        Self::hz(khz * 1e3)
    }

    pub fn mhz(mhz: f64) -> Self {
        Self::hz(mhz * 1e6)
    }

    pub fn ghz(ghz: f64) -> Self {
        Self::hz(ghz * 1e9)
    }

    pub fn as_hz(self) -> f64 {
        self.0
    }

    pub fn as_mhz(self) -> f64 {
        self.0 * 1e-6
    }

    pub fn as_ghz(self) -> f64 {
        self.0 * 1e-9
    }

    pub fn abs(self) -> Self {
        Frequency(self.0.abs())
    }

    pub fn to_angular(self) -> AngularFrequency {
        to_angular(self)
    }

    /// Fails unless the frequency is strictly positive.
    pub fn require_positive(self, what: &str) -> Result<Self> {
        if self.0 > 0.0 {
            Ok(self)
        } else {
            Err(Error::InvalidQuantity(format!("{what} must be positive, got {} Hz", self.0)))
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Hz", self.0)
    }
}

impl Add for Frequency {
    type Output = Frequency;
    fn add(self, rhs: Self) -> Self {
        Frequency(self.0 + rhs.0)
    }
}

impl Sub for Frequency {
    type Output = Frequency;
    fn sub(self, rhs: Self) -> Self {
        Frequency(self.0 - rhs.0)
    }
}

impl Neg for Frequency {
    type Output = Frequency;
    fn neg(self) -> Self {
        Frequency(-self.0)
    }
}

/// Angular frequency in rad/s. Only obtainable from a [`Frequency`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AngularFrequency(f64);

impl AngularFrequency {
    pub fn as_rad_per_s(self) -> f64 {
        self.0
    }

    pub fn to_linear(self) -> Frequency {
        Frequency(self.0 / TAU)
    }
}

/// ω = 2π·f.
pub fn to_angular(f: Frequency) -> AngularFrequency {
    AngularFrequency(TAU * f.0)
}

/// Microwave power, stored in watts.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Power {
    watts: f64,
}

impl Power {
    pub fn from_watts(watts: f64) -> Result<Self> {
        if watts.is_finite() && watts > 0.0 {
            Ok(Power { watts })
        } else {
            Err(Error::InvalidQuantity(format!("power must be finite and positive, got {watts} W")))
        }
    }

    pub fn from_dbm(dbm: f64) -> Result<Self> {
        dbm_to_watts(dbm)
    }

    pub fn watts(self) -> f64 {
        self.watts
    }

    pub fn dbm(self) -> f64 {
        10.0 * (self.watts / 1e-3).log10()
    }
}

/// W = 1 mW · 10^(dBm/10).
pub fn dbm_to_watts(dbm: f64) -> Result<Power> {
    if !dbm.is_finite() {
        return Err(Error::InvalidQuantity(format!("power {dbm} dBm is not finite")));
    }
    Power::from_watts(1e-3 * 10f64.powf(dbm / 10.0))
}

/// A frequency-ordered complex transmission trace.
#[derive(Debug, Clone, PartialEq)]
pub struct S21Trace {
    freqs: Vec<f64>,
    values: Vec<Complex64>,
    /// Power at the instrument output, dBm.
    pub applied_power_dbm: Option<f64>,
    /// Input-line attenuation in dB, subtracted to obtain on-chip power.
    pub line_attenuation_db: Option<f64>,
}

impl S21Trace {
    pub fn new(freqs: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if freqs.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} frequencies but {} S21 values",
                freqs.len(),
                values.len()
            )));
        }
        if freqs.len() < MIN_S21_POINTS {
            return Err(Error::InsufficientData(format!(
                "S21 trace needs at least {MIN_S21_POINTS} points, got {}",
                freqs.len()
            )));
        }
        if let Some(i) = freqs.iter().position(|f| !f.is_finite()) {
            return Err(Error::invalid(format!("frequency at index {i} is not finite")));
        }
        if let Some(i) = values.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid(format!("S21 value at index {i} is not finite")));
        }
        if let Some(i) = freqs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "frequencies must be strictly increasing (index {})",
                i + 1
            )));
        }
        Ok(S21Trace { freqs, values, applied_power_dbm: None, line_attenuation_db: None })
    }

    pub fn with_metadata(mut self, applied_power_dbm: Option<f64>, line_attenuation_db: Option<f64>) -> Self {
        self.applied_power_dbm = applied_power_dbm;
        self.line_attenuation_db = line_attenuation_db;
        self
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        self.freqs.iter().copied().zip(self.values.iter().copied())
    }
}

/// Delay-vs-signal samples from a T1 or Ramsey measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayTrace {
    delays: Vec<f64>,
    signal: Vec<f64>,
}

impl DecayTrace {
    pub fn new(delays: Vec<f64>, signal: Vec<f64>) -> Result<Self> {
        if delays.len() != signal.len() {
            return Err(Error::invalid(format!(
                "{} delays but {} signal samples",
                delays.len(),
                signal.len()
            )));
        }
        if delays.len() < MIN_DECAY_POINTS {
            return Err(Error::InsufficientData(format!(
                "decay trace needs at least {MIN_DECAY_POINTS} points, got {}",
                delays.len()
            )));
        }
        if let Some(i) = delays.iter().zip(&signal).position(|(t, s)| !t.is_finite() || !s.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        if delays[0] < 0.0 {
            return Err(Error::invalid("delays must be non-negative"));
        }
        if let Some(i) = delays.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!("delays must be strictly increasing (index {})", i + 1)));
        }
        Ok(DecayTrace { delays, signal })
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// Last delay minus first delay.
    pub fn span(&self) -> f64 {
        self.delays[self.delays.len() - 1] - self.delays[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dbm_examples() {
        assert_relative_eq!(dbm_to_watts(0.0).unwrap().watts(), 1e-3, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(-30.0).unwrap().watts(), 1e-6, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(-140.0).unwrap().watts(), 1e-3 * 1e-14, max_relative = 1e-14);
        assert!(matches!(dbm_to_watts(f64::NAN), Err(Error::InvalidQuantity(_))));
        assert!(matches!(dbm_to_watts(f64::NEG_INFINITY), Err(Error::InvalidQuantity(_))));
    }

    #[test]
    fn angular_examples() {
        assert_eq!(to_angular(Frequency::hz(0.0)).as_rad_per_s(), 0.0);
        assert_relative_eq!(to_angular(Frequency::hz(1.0)).as_rad_per_s(), 6.283185307179586);
        let w = to_angular(Frequency::ghz(4.565)).as_rad_per_s();
        assert_relative_eq!(w, 2.0 * std::f64::consts::PI * 4.565e9, max_relative = 1e-15);
        assert_relative_eq!(w, 2.868e10, max_relative = 1e-3);
    }

    #[test]
    fn s21_trace_validation() {
        let f: Vec<f64> = (0..16).map(|i| 1e9 + i as f64).collect();
        let v = vec![Complex64::new(1.0, 0.0); 16];
        assert!(S21Trace::new(f.clone(), v.clone()).is_ok());

        let mut dup = f.clone();
        dup[5] = dup[4];
        assert!(S21Trace::new(dup, v.clone()).is_err());

        let mut unsorted = f.clone();
        unsorted.swap(2, 3);
        assert!(S21Trace::new(unsorted, v.clone()).is_err());

        let mut nan = v.clone();
        nan[3] = Complex64::new(f64::NAN, 0.0);
        assert!(S21Trace::new(f.clone(), nan).is_err());

        assert!(matches!(
            S21Trace::new(f[..8].to_vec(), v[..8].to_vec()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn decay_trace_validation() {
        let t: Vec<f64> = (0..8).map(|i| i as f64 * 1e-6).collect();
        let s = vec![1.0; 8];
        assert!(DecayTrace::new(t.clone(), s.clone()).is_ok());
        let mut neg = t.clone();
        neg[0] = -1e-6;
        assert!(DecayTrace::new(neg, s.clone()).is_err());
        assert!(DecayTrace::new(t[..7].to_vec(), s[..7].to_vec()).is_err());
    }

    proptest! {
        #[test]
        fn dbm_watts_round_trip(w in 1e-25f64..1e3) {
            let p = Power::from_watts(w).unwrap();
            let back = Power::from_dbm(p.dbm()).unwrap().watts();
            prop_assert!(((back - w) / w).abs() <= 1e-12);
        }
    }
}
