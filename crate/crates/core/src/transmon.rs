//! Transmon parameter extraction from spectroscopy, punch-out, dispersive
//! shift, and T1 data.
//!
//! Sign convention: the qubit-resonator detuning is `Δ = f01 − f_ro`, which is
//! negative when the qubit sits below its readout resonator. Linewidths are
//! given as κ/2π in Hz.

use std::fmt;

use crate::error::{Error, Result};
use crate::quantities::Frequency;

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// α ≥ 0: the spectrum is not that of a transmon.
    NonNegativeAnharmonicity { alpha_hz: f64 },
    ZeroT1,
    /// No coupling estimate was available, so no Purcell time.
    PurcellUnavailable(String),
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::NonNegativeAnharmonicity { alpha_hz } => {
                write!(f, "anharmonicity {alpha_hz} Hz is not negative; not a transmon")
            }
            Warning::ZeroT1 => write!(f, "T1 is zero; qubit quality factor is zero"),
            Warning::PurcellUnavailable(why) => write!(f, "Purcell time unavailable: {why}"),
        }
    }
}

/// A value together with any warnings raised while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checked<T> {
    pub value: T,
    pub warnings: Vec<Warning>,
}

impl<T> Checked<T> {
    fn clean(value: T) -> Self {
        Checked { value, warnings: Vec::new() }
    }
}

/// α = f02 − 2·f01 = 2·(f02/2 − f01).
pub fn anharmonicity(f01: Frequency, f02_over_2: Frequency) -> Result<Checked<Frequency>> {
    f01.require_positive("f01")?;
    f02_over_2.require_positive("f02/2")?;
    let alpha = Frequency::hz(2.0 * (f02_over_2.as_hz() - f01.as_hz()));
    let mut out = Checked::clean(alpha);
    if alpha.as_hz() >= 0.0 {
        out.warnings.push(Warning::NonNegativeAnharmonicity { alpha_hz: alpha.as_hz() });
    }
    Ok(out)
}

/// Invert `f01 = sqrt(8·E_J·E_C) − E_C` for E_J.
pub fn ej_from_spectrum(f01: Frequency, e_c: Frequency) -> Result<Frequency> {
    e_c.require_positive("E_C")?;
    let s = f01.as_hz() + e_c.as_hz();
    Frequency::new(s * s / (8.0 * e_c.as_hz()))
}

/// Coupling from the punch-out shift, `f_coupled − f_bare = g²/Δ`.
pub fn g_from_punchout(f_ro_coupled: Frequency, f_ro_bare: Frequency, delta: Frequency) -> Result<Frequency> {
    let shift = (f_ro_coupled - f_ro_bare).as_hz();
    let d = delta.as_hz();
    if shift == 0.0 {
        return Ok(Frequency::hz(0.0));
    }
    if d == 0.0 || shift.signum() != d.signum() {
        return Err(Error::InconsistentPunchout { shift_hz: shift, delta_hz: d });
    }
    Frequency::new((d * shift).sqrt())
}

/// Coupling from the dispersive shift, inverting `χ = g²/Δ − g²/(Δ − α)`.
pub fn g_from_dispersive(chi: Frequency, delta: Frequency, alpha: Frequency) -> Result<Frequency> {
    let (c, d, a) = (chi.as_hz(), delta.as_hz(), alpha.as_hz());
    if d == 0.0 {
        return Err(Error::invalid("detuning must be non-zero"));
    }
    if d == a {
        return Err(Error::invalid("detuning must differ from the anharmonicity"));
    }
    if !(a < 0.0) {
        return Err(Error::invalid(format!("anharmonicity must be negative, got {a} Hz")));
    }
    let radicand = c * d * (d - a) / (-a);
    if radicand < 0.0 {
        return Err(Error::InconsistentDispersive { radicand });
    }
    Frequency::new(radicand.sqrt())
}

/// Purcell-limited lifetime `Δ²/(g²·κ)` with κ as an angular rate, in s.
pub fn purcell_time(delta: Frequency, g: Frequency, kappa: Frequency) -> Result<f64> {
    if !(g.as_hz() > 0.0) {
        return Err(Error::invalid(format!("g must be positive, got {g}")));
    }
    if !(kappa.as_hz() > 0.0) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    if delta.as_hz() == 0.0 {
        return Err(Error::invalid("detuning must be non-zero"));
    }
    let ratio = delta.as_hz() / g.as_hz();
    Ok(ratio * ratio / kappa.to_angular().as_rad_per_s())
}

/// `Q = 2π·f01·T1`.
pub fn qubit_quality(f01: Frequency, t1: f64) -> Result<Checked<f64>> {
    f01.require_positive("f01")?;
    if !(t1.is_finite() && t1 >= 0.0) {
        return Err(Error::invalid(format!("T1 must be non-negative, got {t1} s")));
    }
    let mut out = Checked::clean(f01.to_angular().as_rad_per_s() * t1);
    if t1 == 0.0 {
        out.warnings.push(Warning::ZeroT1);
    }
    Ok(out)
}

/// Measured inputs for one qubit.
///
/// The anharmonicity comes from `f02_over_2` when present, otherwise from
/// `alpha` (a value already reduced elsewhere). Likewise `g` carries a
/// coupling that was reported directly and stands in for the punch-out
/// estimate when no bare readout frequency is given.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransmonMeasured {
    pub f01: Frequency,
    pub f02_over_2: Option<Frequency>,
    pub alpha: Option<Frequency>,
    /// Readout resonator frequency with the qubit coupled.
    pub f_ro: Frequency,
    /// Readout resonator frequency at high power (bare).
    pub f_ro_bare: Option<Frequency>,
    pub g: Option<Frequency>,
    /// κ/2π.
    pub kappa: Option<Frequency>,
    /// χ/2π.
    pub chi: Option<Frequency>,
    /// s
    pub t1_samples: Vec<f64>,
    /// s
    pub t2_star: Option<f64>,
}

impl TransmonMeasured {
    pub fn validate(&self) -> Result<()> {
        self.f01.require_positive("f01")?;
        self.f_ro.require_positive("f_ro")?;
        if let Some(k) = self.kappa {
            k.require_positive("kappa")?;
        }
        if self.t1_samples.is_empty() {
            return Err(Error::InsufficientData("at least one T1 sample is required".into()));
        }
        if let Some(t) = self.t1_samples.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::invalid(format!("T1 samples must be positive, got {t}")));
        }
        if self.f02_over_2.is_none() && self.alpha.is_none() {
            return Err(Error::MissingMetadata("need f02/2 or an anharmonicity".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmonDerived {
    /// α/2π, negative for a transmon.
    pub alpha: Frequency,
    pub e_c: Frequency,
    pub e_j: Frequency,
    pub ej_ec_ratio: f64,
    /// f01 − f_ro.
    pub delta: Frequency,
    pub g_punchout: Option<Frequency>,
    pub g_dispersive: Option<Frequency>,
    /// s
    pub t_purcell: Option<f64>,
    /// s
    pub t1_mean: f64,
    pub qubit_q: f64,
    pub warnings: Vec<Warning>,
}

/// Compute every derivable column for one qubit.
pub fn derive_all(m: &TransmonMeasured) -> Result<TransmonDerived> {
    m.validate()?;
    let mut warnings = Vec::new();

    let alpha = match m.f02_over_2 {
        Some(f02_2) => {
            let a = anharmonicity(m.f01, f02_2)?;
            warnings.extend(a.warnings);
            a.value
        }
        None => {
            let a = m.alpha.expect("validated");
            if a.as_hz() >= 0.0 {
                warnings.push(Warning::NonNegativeAnharmonicity { alpha_hz: a.as_hz() });
            }
            a
        }
    };
    let e_c = -alpha;
    e_c.require_positive("E_C (= -alpha)")?;
    let e_j = ej_from_spectrum(m.f01, e_c)?;
    let delta = m.f01 - m.f_ro;

    let g_punchout = match m.f_ro_bare {
        Some(bare) => Some(g_from_punchout(m.f_ro, bare, delta)?),
        None => m.g,
    };
    let g_dispersive = match m.chi {
        Some(chi) => Some(g_from_dispersive(chi, delta, alpha)?),
        None => None,
    };

    let t_purcell = match (g_punchout.or(g_dispersive), m.kappa) {
        (Some(g), Some(k)) if g.as_hz() > 0.0 => Some(purcell_time(delta, g, k)?),
        (Some(_), Some(_)) => {
            warnings.push(Warning::PurcellUnavailable("coupling estimate is zero".into()));
            None
        }
        (None, _) => {
            warnings.push(Warning::PurcellUnavailable("no coupling estimate".into()));
            None
        }
        (_, None) => {
            warnings.push(Warning::PurcellUnavailable("no readout linewidth".into()));
            None
        }
    };

    let t1_mean = m.t1_samples.iter().sum::<f64>() / m.t1_samples.len() as f64;
    let q = qubit_quality(m.f01, t1_mean)?;
    warnings.extend(q.warnings);

    Ok(TransmonDerived {
        alpha,
        e_c,
        e_j,
        ej_ec_ratio: e_j.as_hz() / e_c.as_hz(),
        delta,
        g_punchout,
        g_dispersive,
        t_purcell,
        t1_mean,
        qubit_q: q.value,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn anharmonicity_examples() {
        let a = anharmonicity(Frequency::ghz(5.0), Frequency::ghz(5.0)).unwrap();
        assert_eq!(a.value.as_hz(), 0.0);
        assert_eq!(a.warnings.len(), 1);
        let a = anharmonicity(Frequency::ghz(4.920), Frequency::ghz(4.785)).unwrap();
        assert_relative_eq!(a.value.as_mhz(), -270.0, max_relative = 1e-9);
        assert!(a.warnings.is_empty());
        let a = anharmonicity(Frequency::ghz(4.565), Frequency::ghz(4.4255)).unwrap();
        assert_relative_eq!(a.value.as_mhz(), -279.0, max_relative = 1e-9);
        assert!(anharmonicity(Frequency::hz(-1.0), Frequency::ghz(4.0)).is_err());
    }

    #[test]
    fn ej_examples() {
        let ec = Frequency::mhz(270.0);
        let ej = ej_from_spectrum(Frequency::ghz(4.920), ec).unwrap();
        assert!((ej.as_ghz() - 12.47).abs() < 0.01);
        assert!((ej.as_hz() / ec.as_hz() - 46.0).abs() <= 2.0);
        let ec = Frequency::mhz(279.0);
        let r = ej_from_spectrum(Frequency::ghz(4.565), ec).unwrap().as_hz() / ec.as_hz();
        assert!((r - 38.0).abs() <= 2.0);
        let ec = Frequency::mhz(300.0);
        let ej = ej_from_spectrum(Frequency::hz(7.0 * ec.as_hz()), ec).unwrap();
        assert_relative_eq!(ej.as_hz(), 8.0 * ec.as_hz(), max_relative = 1e-15);
        assert!(ej_from_spectrum(Frequency::ghz(5.0), Frequency::hz(0.0)).is_err());
    }

    #[test]
    fn punchout_examples() {
        let d = Frequency::mhz(-811.0);
        assert_eq!(g_from_punchout(Frequency::ghz(5.7), Frequency::ghz(5.7), d).unwrap().as_hz(), 0.0);
        let shift = 98e6 * 98e6 / -811e6;
        let g = g_from_punchout(Frequency::hz(5.731e9), Frequency::hz(5.731e9 - shift), d).unwrap();
        assert_relative_eq!(g.as_mhz(), 98.0, max_relative = 1e-9);
        let err = g_from_punchout(Frequency::mhz(5005.0), Frequency::mhz(5000.0), d).unwrap_err();
        assert!(matches!(err, Error::InconsistentPunchout { .. }));
    }

    #[test]
    fn dispersive_examples() {
        let d = Frequency::mhz(-811.0);
        let a = Frequency::mhz(-270.0);
        assert_eq!(g_from_dispersive(Frequency::hz(0.0), d, a).unwrap().as_hz(), 0.0);
        let g: f64 = 98e6;
        let chi = g * g / -811e6 - g * g / (-811e6 + 270e6);
        assert!((chi / 1e6 - 5.909).abs() < 0.002);
        let est = g_from_dispersive(Frequency::hz(chi), d, a).unwrap();
        assert_relative_eq!(est.as_hz(), g, max_relative = 1e-12);
        // Two-level limit: large |α| approaches the punch-out relation.
        let shift = g * g / -811e6;
        let est = g_from_dispersive(Frequency::hz(shift), d, Frequency::hz(-1e18)).unwrap();
        assert_relative_eq!(est.as_hz(), g, max_relative = 1e-6);
        assert!(g_from_dispersive(Frequency::mhz(5.0), Frequency::hz(0.0), a).is_err());
        assert!(g_from_dispersive(Frequency::mhz(5.0), a, a).is_err());
        assert!(g_from_dispersive(Frequency::mhz(5.0), d, Frequency::mhz(10.0)).is_err());
        assert!(matches!(
            g_from_dispersive(Frequency::mhz(-5.0), d, a),
            Err(Error::InconsistentDispersive { .. })
        ));
    }

    #[test]
    fn purcell_examples() {
        let t = purcell_time(Frequency::mhz(811.0), Frequency::mhz(98.0), Frequency::mhz(1.1)).unwrap();
        assert!((t * 1e6 - 9.9).abs() < 0.05, "{t}");
        let t = purcell_time(Frequency::mhz(1211.0), Frequency::mhz(92.0), Frequency::mhz(0.84)).unwrap();
        assert!((t * 1e6 - 32.8).abs() < 0.1, "{t}");
        let t2 = purcell_time(Frequency::mhz(2422.0), Frequency::mhz(92.0), Frequency::mhz(0.84)).unwrap();
        assert_relative_eq!(t2, 4.0 * t, max_relative = 1e-14);
        let tn = purcell_time(Frequency::mhz(-1211.0), Frequency::mhz(92.0), Frequency::mhz(0.84)).unwrap();
        assert_eq!(tn, t);
        assert!(purcell_time(Frequency::mhz(1.0), Frequency::hz(0.0), Frequency::mhz(1.0)).is_err());
        assert!(purcell_time(Frequency::mhz(1.0), Frequency::mhz(1.0), Frequency::hz(0.0)).is_err());
        assert!(purcell_time(Frequency::hz(0.0), Frequency::mhz(1.0), Frequency::mhz(1.0)).is_err());
    }

    #[test]
    fn quality_examples() {
        let q = qubit_quality(Frequency::ghz(4.565), 26e-6).unwrap().value;
        assert!((q / 7.5e5 - 1.0).abs() < 0.01);
        let q = qubit_quality(Frequency::ghz(4.920), 11e-6).unwrap().value;
        assert!((q / 3.4e5 - 1.0).abs() < 0.01);
        let z = qubit_quality(Frequency::ghz(4.0), 0.0).unwrap();
        assert_eq!(z.value, 0.0);
        assert_eq!(z.warnings, vec![Warning::ZeroT1]);
        assert!(qubit_quality(Frequency::ghz(4.0), -1e-6).is_err());
    }

    fn table_row(f01: f64, f_ro: f64, alpha_mhz: f64, g_mhz: f64, kappa_mhz: f64, t1_us: f64) -> TransmonMeasured {
        TransmonMeasured {
            f01: Frequency::ghz(f01),
            f_ro: Frequency::ghz(f_ro),
            alpha: Some(Frequency::mhz(alpha_mhz)),
            g: Some(Frequency::mhz(g_mhz)),
            kappa: Some(Frequency::mhz(kappa_mhz)),
            t1_samples: vec![t1_us * 1e-6],
            ..Default::default()
        }
    }

    #[test]
    fn derive_row_four() {
        let d = derive_all(&table_row(4.713, 5.803, -274.0, 94.0, 0.90, 20.0)).unwrap();
        assert!((d.ej_ec_ratio - 41.0).abs() <= 2.0);
        assert!((d.t_purcell.unwrap() * 1e6 - 23.0).abs() <= 1.0);
        assert!((d.qubit_q / 580e3 - 1.0).abs() <= 0.05);
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn derive_row_six() {
        let d = derive_all(&table_row(4.622, 5.893, -273.0, 96.0, 1.2, 22.0)).unwrap();
        let t = d.t_purcell.unwrap() * 1e6;
        assert!((t - 23.2).abs() < 0.1, "{t}");
        assert!((t - 24.0).abs() <= 1.0);
    }

    #[test]
    fn derive_minimal_inputs() {
        let m = TransmonMeasured {
            f01: Frequency::ghz(4.92),
            f02_over_2: Some(Frequency::ghz(4.785)),
            f_ro: Frequency::ghz(5.731),
            t1_samples: vec![10e-6, 12e-6],
            ..Default::default()
        };
        let d = derive_all(&m).unwrap();
        assert_relative_eq!(d.alpha.as_mhz(), -270.0, max_relative = 1e-9);
        assert_eq!(d.e_c, -d.alpha);
        assert!(d.g_punchout.is_none() && d.g_dispersive.is_none() && d.t_purcell.is_none());
        assert_relative_eq!(d.t1_mean, 11e-6, max_relative = 1e-15);
        assert!(matches!(d.warnings[0], Warning::PurcellUnavailable(_)));
    }

    #[test]
    fn derive_prefers_punchout_over_dispersive() {
        let g: f64 = 90e6;
        let (f01, f_ro, alpha) = (4.7e9, 5.8e9, -270e6);
        let delta = f01 - f_ro;
        let chi = g * g / delta - g * g / (delta - alpha);
        let m = TransmonMeasured {
            f01: Frequency::hz(f01),
            alpha: Some(Frequency::hz(alpha)),
            f_ro: Frequency::hz(f_ro),
            f_ro_bare: Some(Frequency::hz(f_ro - 1.05 * g * g / delta)),
            chi: Some(Frequency::hz(chi)),
            kappa: Some(Frequency::mhz(1.0)),
            t1_samples: vec![20e-6],
            ..Default::default()
        };
        let d = derive_all(&m).unwrap();
        let gp = d.g_punchout.unwrap().as_hz();
        assert_relative_eq!(d.g_dispersive.unwrap().as_hz(), g, max_relative = 1e-9);
        assert_relative_eq!(gp, g * 1.05f64.sqrt(), max_relative = 1e-9);
        let expected = purcell_time(Frequency::hz(delta), Frequency::hz(gp), Frequency::mhz(1.0)).unwrap();
        assert_eq!(d.t_purcell.unwrap(), expected);
    }

    #[test]
    fn derive_rejects_invalid() {
        let mut m = table_row(4.713, 5.803, -274.0, 94.0, 0.90, 20.0);
        m.t1_samples.clear();
        assert!(derive_all(&m).is_err());
        let mut m = table_row(4.713, 5.803, -274.0, 94.0, 0.90, 20.0);
        m.alpha = None;
        assert!(matches!(derive_all(&m), Err(Error::MissingMetadata(_))));
    }
}
