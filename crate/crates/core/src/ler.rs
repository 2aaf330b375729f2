//! Lumped-element resonator design relations.
//!
//! A fin capacitor of metallized length `len` contributes `C0·len` in parallel
//! with the stray capacitance of the inductor, so `(1/f_r)² = (2π)²·L·(C_stray +
//! C0·len)` is linear in length.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::quantities::{Frequency, EPSILON_0};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LerDesign {
    /// H
    pub inductance: f64,
    /// F
    pub stray_capacitance: f64,
    /// F/m
    pub cap_per_length: f64,
    /// Relative permittivity of the fin dielectric.
    pub epsilon_r: f64,
}

impl LerDesign {
    pub fn validate(&self) -> Result<()> {
        let all = [self.inductance, self.stray_capacitance, self.cap_per_length, self.epsilon_r];
        if all.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!("design values must be positive: {self:?}")))
        }
    }

    pub fn total_capacitance(&self, length: f64) -> f64 {
        self.stray_capacitance + self.cap_per_length * length
    }

    pub fn frequency_at(&self, length: f64) -> Result<Frequency> {
        resonant_frequency(self.inductance, self.total_capacitance(length))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinGeometry {
    /// Height of the parallel-plate region, m.
    pub plate_height: f64,
    /// Dielectric (fin) thickness, m.
    pub dielectric_thickness: f64,
    pub epsilon_r: f64,
}

/// `1 / (2π·sqrt(L·C))`.
pub fn resonant_frequency(inductance: f64, capacitance: f64) -> Result<Frequency> {
    if !(inductance.is_finite() && inductance > 0.0 && capacitance.is_finite() && capacitance > 0.0) {
        return Err(Error::invalid(format!(
            "inductance and capacitance must be positive (L={inductance}, C={capacitance})"
        )));
    }
    Frequency::new(1.0 / (TAU * (inductance * capacitance).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C0Fit {
    /// Capacitance per unit fin length, F/m.
    pub c0: f64,
    /// Length-independent capacitance, F.
    pub c_stray: f64,
    /// Extrapolated resonance at zero fin length.
    pub f_at_zero: Frequency,
    /// Slope of (1/f_r)² against length, s²/m.
    pub slope: f64,
    /// Intercept of (1/f_r)² at zero length, s².
    pub intercept: f64,
    /// RMS residual of the line in (1/f_r)², s².
    pub rms_residual: f64,
}

/// Unweighted least-squares line through `(length, (1/f_r)²)`.
pub fn fit_c0(points: &[(f64, Frequency)], inductance: f64) -> Result<C0Fit> {
    if !(inductance.is_finite() && inductance > 0.0) {
        return Err(Error::invalid(format!("inductance must be positive, got {inductance}")));
    }
    if let Some((len, f)) = points.iter().find(|(len, f)| !len.is_finite() || !(f.as_hz() > 0.0)) {
        return Err(Error::invalid(format!("bad point (length {len}, f_r {f})")));
    }
    let xs: Vec<f64> = points.iter().map(|(len, _)| *len).collect();
    let ys: Vec<f64> = points.iter().map(|(_, f)| f.as_hz().powi(-2)).collect();
    let distinct = {
        let mut v = xs.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    if distinct < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 distinct lengths, got {distinct}"
        )));
    }

    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();

    if !(intercept > 0.0) {
        return Err(Error::UnphysicalFit(format!("(1/f)² intercept {intercept:.4e} s² is not positive")));
    }
    if !(slope > 0.0) {
        return Err(Error::UnphysicalFit(format!("(1/f)² slope {slope:.4e} s²/m is not positive")));
    }
    let k = TAU * TAU * inductance;
    let c_stray = intercept / k;
    Ok(C0Fit {
        c0: slope / k,
        c_stray,
        f_at_zero: resonant_frequency(inductance, c_stray)?,
        slope,
        intercept,
        rms_residual: (ssr / n).sqrt(),
    })
}

/// Parallel-plate capacitance per unit length, `ε0·εr·h/d`, in F/m.
pub fn parallel_plate_estimate(g: &FinGeometry) -> Result<f64> {
    let all = [g.plate_height, g.dielectric_thickness, g.epsilon_r];
    if !all.iter().all(|x| x.is_finite() && *x > 0.0) {
        return Err(Error::invalid(format!("fin geometry must be positive: {g:?}")));
    }
    Ok(EPSILON_0 * g.epsilon_r * g.plate_height / g.dielectric_thickness)
}

/// Fraction of the total capacitance contributed by the fin.
pub fn fin_fraction(c0: f64, length: f64, c_stray: f64) -> Result<f64> {
    if !(c0 > 0.0 && c_stray > 0.0 && length >= 0.0 && c0.is_finite() && c_stray.is_finite() && length.is_finite()) {
        return Err(Error::invalid(format!(
            "need c0 > 0, c_stray > 0, length >= 0 (got {c0}, {c_stray}, {length})"
        )));
    }
    let fin = c0 * length;
    Ok(fin / (fin + c_stray))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const L: f64 = 4.29e-9;
    const C_STRAY: f64 = 84.1e-15;
    const C0: f64 = 2.1e-9; // 2.1 fF/µm

    #[test]
    fn lc_frequency() {
        let f1 = resonant_frequency(L, C_STRAY).unwrap().as_hz();
        let f4 = resonant_frequency(L, 4.0 * C_STRAY).unwrap().as_hz();
        assert_relative_eq!(f4, f1 / 2.0, max_relative = 1e-15);
        assert_relative_eq!(f1, 1.0 / (TAU * (L * C_STRAY).sqrt()), max_relative = 1e-15);
        assert!((f1 / 1e9 - 8.38).abs() < 0.005);
        // 84.1 fF + 210 fF evaluated directly: 4.481 GHz.
        let f100 = resonant_frequency(L, C_STRAY + C0 * 100e-6).unwrap().as_ghz();
        assert!((f100 - 4.481).abs() < 0.001, "{f100}");
        assert!(resonant_frequency(0.0, 1e-12).is_err());
        assert!(resonant_frequency(1e-9, -1e-12).is_err());
    }

    fn forward(lengths: &[f64]) -> Vec<(f64, Frequency)> {
        lengths
            .iter()
            .map(|&l| (l, resonant_frequency(L, C_STRAY + C0 * l).unwrap()))
            .collect()
    }

    #[test]
    fn c0_recovery() {
        let fit = fit_c0(&forward(&[40e-6, 60e-6, 80e-6, 100e-6]), L).unwrap();
        assert_relative_eq!(fit.c0, C0, max_relative = 1e-9);
        assert_relative_eq!(fit.c_stray, C_STRAY, max_relative = 1e-9);
        assert!((fit.f_at_zero.as_ghz() - 8.38).abs() < 0.01);
    }

    #[test]
    fn two_points_interpolate() {
        let fit = fit_c0(&forward(&[50e-6, 90e-6]), L).unwrap();
        assert!(fit.rms_residual <= 1e-12 * fit.intercept);
    }

    #[test]
    fn repeated_length_gives_residual() {
        let mut pts = forward(&[40e-6, 60e-6, 80e-6]);
        pts.push((60e-6, Frequency::hz(pts[1].1.as_hz() * 1.01)));
        let fit = fit_c0(&pts, L).unwrap();
        assert!(fit.rms_residual > 0.0);
    }

    #[test]
    fn c0_errors() {
        let pts = forward(&[40e-6, 40e-6]);
        assert!(matches!(fit_c0(&pts, L), Err(Error::InsufficientData(_))));
        // Frequency rising with length implies negative capacitance.
        let bad = vec![(40e-6, Frequency::ghz(2.0)), (80e-6, Frequency::ghz(9.0))];
        assert!(matches!(fit_c0(&bad, L), Err(Error::UnphysicalFit(_))));
        // Lines with a negative intercept.
        let neg = vec![(100e-6, Frequency::ghz(8.0)), (110e-6, Frequency::ghz(2.0))];
        assert!(matches!(fit_c0(&neg, L), Err(Error::UnphysicalFit(_))));
    }

    #[test]
    fn plate_estimate() {
        let g = FinGeometry { plate_height: 2.2e-6, dielectric_thickness: 220e-9, epsilon_r: 11.7 };
        let c = parallel_plate_estimate(&g).unwrap();
        assert!((c / 1e-9 - 1.04).abs() < 0.005);
        assert!(c < C0);
        let vac = FinGeometry { plate_height: 1e-6, dielectric_thickness: 1e-6, epsilon_r: 1.0 };
        assert_relative_eq!(parallel_plate_estimate(&vac).unwrap(), EPSILON_0, max_relative = 1e-15);
        let tall = FinGeometry { plate_height: 4.4e-6, ..g };
        assert_relative_eq!(parallel_plate_estimate(&tall).unwrap(), 2.0 * c, max_relative = 1e-15);
    }

    #[test]
    fn fraction() {
        assert_relative_eq!(fin_fraction(1e-9, 1e-4, 1e-13).unwrap(), 0.5, max_relative = 1e-15);
        let f = fin_fraction(C0, 180e-6, C_STRAY).unwrap();
        assert!((f - 0.818).abs() < 0.001, "{f}");
        assert_eq!(fin_fraction(C0, 0.0, C_STRAY).unwrap(), 0.0);
        let mut prev = 0.0;
        for i in 1..50 {
            let f = fin_fraction(C0, i as f64 * 10e-6, C_STRAY).unwrap();
            assert!(f > prev && f < 1.0);
            prev = f;
        }
    }
}
