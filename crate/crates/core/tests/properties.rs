use std::f64::consts::PI;

use proptest::prelude::*;
use qdev_core::ler::{fin_fraction, fit_c0, resonant_frequency, LerDesign};
use qdev_core::resonator::{fit_resonator, qi_from_dcm, wrap_angle, ResonatorParams};
use qdev_core::synth::{synth_decay, synth_ler_dataset, synth_ramsey, synth_s21, NoiseSpec, RamseyTruth};
use qdev_core::timedomain::{fit_ramsey, fit_t1, t1_statistics};
use qdev_core::transmon::{anharmonicity, ej_from_spectrum, g_from_dispersive, g_from_punchout, purcell_time};
use qdev_core::Frequency;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn resonator_truth() -> impl Strategy<Value = ResonatorParams> {
    (
        4e9..8e9f64,
        4.0..6.0f64,
        0.3f64.ln()..10f64.ln(),
        -0.5..0.5f64,
        0.0..50e-9f64,
        0.3..1.5f64,
        -PI..PI,
    )
        .prop_filter_map("unphysical Qi", |(f0, log_ql, log_ratio, phi, tau, a, theta)| {
            let ql = 10f64.powf(log_ql);
            let qc_mag = ql * log_ratio.exp();
            qi_from_dcm(ql, qc_mag, phi).ok()?;
            Some(ResonatorParams { f0: Frequency::hz(f0), ql, qc_mag, phi, a, theta, tau })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn dcm_noiseless_round_trip(p in resonator_truth()) {
        let lw = p.linewidth();
        let f0 = p.f0.as_hz();
        let trace = synth_s21(&p, f0 - 8.0 * lw, f0 + 8.0 * lw, 1601, NoiseSpec::noiseless()).unwrap();
        let fit = fit_resonator(&trace).unwrap();
        let q = fit.params;
        prop_assert!(rel(q.f0.as_hz(), f0) < 1e-6);
        prop_assert!(rel(q.ql, p.ql) < 1e-6, "ql {} vs {}", q.ql, p.ql);
        prop_assert!(rel(q.qc_mag, p.qc_mag) < 1e-6);
        prop_assert!(rel(q.a, p.a) < 1e-6);
        prop_assert!((q.phi - p.phi).abs() < 1e-6);
        prop_assert!(wrap_angle(q.theta - p.theta).abs() < 1e-6);
        prop_assert!((q.tau - p.tau).abs() < 1e-6 * p.tau.max(1e-9));
        prop_assert!(fit.cost <= fit.initial_cost);
        let identity = 1.0 / q.ql - q.phi.cos() / q.qc_mag;
        prop_assert!(rel(1.0 / fit.qi, identity) < 1e-14);
    }

    #[test]
    fn t1_noiseless_round_trip(t1_us in 1.0..100.0f64, a in 0.2..2.0f64, b in -0.5..0.5f64) {
        let t1 = t1_us * 1e-6;
        let trace = synth_decay(t1, a, b, 5.0 * t1, 60, NoiseSpec::noiseless()).unwrap();
        let fit = fit_t1(&trace).unwrap();
        prop_assert!(rel(fit.t1, t1) < 1e-6);
        prop_assert!(rel(fit.amplitude, a) < 1e-6);
    }

    #[test]
    fn ramsey_noiseless_round_trip(
        t2_us in 1.0..100.0f64,
        det_mhz in 0.1..2.0f64,
        phase in -3.0..3.0f64,
        b in -0.5..0.5f64,
    ) {
        prop_assume!(t2_us * det_mhz >= 2.0);
        let truth = RamseyTruth { t2: t2_us * 1e-6, detuning: det_mhz * 1e6, a: 1.0, phase, b };
        let span = 3.0 * truth.t2;
        let n = ((span * truth.detuning * 10.0).ceil() as usize).max(200);
        let trace = synth_ramsey(&truth, span, n, NoiseSpec::noiseless()).unwrap();
        let fit = fit_ramsey(&trace).unwrap();
        prop_assert!(rel(fit.t2_star, truth.t2) < 1e-6);
        prop_assert!(rel(fit.detuning, truth.detuning) < 1e-6);
        prop_assert!(wrap_angle(fit.phase - phase).abs() < 1e-6);
    }

    #[test]
    fn t1_scale_free(scale in 1e-3..1e3f64) {
        let base = synth_decay(13e-6, 1.0, 0.2, 60e-6, 40, NoiseSpec::noiseless()).unwrap();
        let scaled = qdev_core::DecayTrace::new(
            base.delays().to_vec(),
            base.signal().iter().map(|s| s * scale).collect(),
        ).unwrap();
        let a = fit_t1(&base).unwrap().t1;
        let b = fit_t1(&scaled).unwrap().t1;
        prop_assert!(rel(b, a) < 1e-9);
    }
}

proptest! {
    #[test]
    fn transmon_inverse_consistency(ej_ghz in 5.0..40.0f64, ec_mhz in 150.0..400.0f64) {
        let (ej, ec) = (ej_ghz * 1e9, ec_mhz * 1e6);
        let f01 = (8.0 * ej * ec).sqrt() - ec;
        // f02/2 = f01 + α/2 with α = −E_C.
        let alpha = anharmonicity(Frequency::hz(f01), Frequency::hz(f01 - ec / 2.0)).unwrap().value;
        prop_assert!(rel(-alpha.as_hz(), ec) < 1e-9);
        let ej_back = ej_from_spectrum(Frequency::hz(f01), -alpha).unwrap();
        prop_assert!(rel(ej_back.as_hz(), ej) < 1e-9);
    }

    #[test]
    fn coupling_estimators_invert(g_mhz in 1e-3..300.0f64, delta_mhz in -1500.0..-300.0f64, alpha_mhz in -350.0..-150.0f64) {
        let (g, d, a) = (g_mhz * 1e6, delta_mhz * 1e6, alpha_mhz * 1e6);
        let chi = g * g / d - g * g / (d - a);
        let est = g_from_dispersive(Frequency::hz(chi), Frequency::hz(d), Frequency::hz(a)).unwrap();
        prop_assert!(rel(est.as_hz(), g) < 1e-9);
        let f_ro = 5.8e9;
        let bare = f_ro - g * g / d;
        let est = g_from_punchout(Frequency::hz(f_ro), Frequency::hz(bare), Frequency::hz(d)).unwrap();
        // The bare frequency is stored at 5.8 GHz scale, which limits the shift's precision.
        prop_assert!(rel(est.as_hz(), g) < 1e-9 || (est.as_hz() - g).abs() < 1e-9 * 1e8);
    }

    #[test]
    fn purcell_sign_invariant(d in 100.0..2000.0f64, g in 10.0..200.0f64, k in 0.1..5.0f64) {
        let pos = purcell_time(Frequency::mhz(d), Frequency::mhz(g), Frequency::mhz(k)).unwrap();
        let neg = purcell_time(Frequency::mhz(-d), Frequency::mhz(g), Frequency::mhz(k)).unwrap();
        prop_assert_eq!(pos, neg);
    }

    #[test]
    fn ler_round_trip(l_nh in 0.5..20.0f64, cs_ff in 10.0..500.0f64, c0_ff_um in 0.2..10.0f64) {
        let design = LerDesign {
            inductance: l_nh * 1e-9,
            stray_capacitance: cs_ff * 1e-15,
            cap_per_length: c0_ff_um * 1e-9,
            epsilon_r: 11.7,
        };
        let lengths = [20e-6, 45e-6, 70e-6, 120e-6, 200e-6];
        let data = synth_ler_dataset(&design, &lengths, NoiseSpec::noiseless()).unwrap();
        let fit = fit_c0(&data, design.inductance).unwrap();
        prop_assert!(rel(fit.c0, design.cap_per_length) < 1e-9);
        prop_assert!(rel(fit.c_stray, design.stray_capacitance) < 1e-9);
        for (len, f) in &data {
            let back = resonant_frequency(design.inductance, fit.c_stray + fit.c0 * len).unwrap();
            prop_assert!(rel(back.as_hz(), f.as_hz()) < 1e-9);
        }
    }

    #[test]
    fn fin_fraction_monotone(len_a in 0.0..500e-6f64, extra in 1e-7..500e-6f64) {
        let a = fin_fraction(2.1e-9, len_a, 84.1e-15).unwrap();
        let b = fin_fraction(2.1e-9, len_a + extra, 84.1e-15).unwrap();
        prop_assert!(b > a);
        prop_assert!(a >= 0.0 && b < 1.0);
    }

    #[test]
    fn t1_stats_mean_and_permutation(mut xs in prop::collection::vec(1e-6..100e-6f64, 2..200), seed in any::<u64>()) {
        let st = t1_statistics(&xs, 12).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert_eq!(st.mean, mean);
        prop_assert_eq!(st.histogram.counts.iter().sum::<usize>(), xs.len());
        // A deterministic shuffle keeps the histogram.
        let mut rng = qdev_core::synth::Xorshift64Star::new(seed);
        for i in (1..xs.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            xs.swap(i, j);
        }
        let shuffled = t1_statistics(&xs, 12).unwrap();
        prop_assert_eq!(shuffled.histogram, st.histogram);
    }

    #[test]
    fn synth_is_deterministic(seed in any::<u64>(), sigma in 0.0..0.1f64) {
        let truth = RamseyTruth { t2: 4e-6, detuning: 1e6, a: 1.0, phase: 0.3, b: 0.0 };
        let n = NoiseSpec { sigma, seed };
        prop_assert_eq!(synth_ramsey(&truth, 10e-6, 64, n).unwrap(), synth_ramsey(&truth, 10e-6, 64, n).unwrap());
    }
}
