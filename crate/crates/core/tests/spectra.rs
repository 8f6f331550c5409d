use pfmsd_core::pfm::{run_pfm_equivalent_with, PfmOptions};
use pfmsd_core::spectral::{impulse_line, levels, sideband_power_fraction};
use pfmsd_core::{
    build_pfm_equivalent, carson_bandwidth, decompose_noise, periodogram, predict_spurs,
    run_ctsd, run_pfm_core, sideband_series, LoopSpec, PiecewiseSignal, QuantizerSpec,
    SignalExpr, Window,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn series_residual_shrinks_with_more_harmonics() {
    // periodic train: f_0 = 1, f_x = 1/128, 512 time units hold whole periods
    let x = SignalExpr::tone(1.0, 0.125, 1.0 / 128.0, 0.0);
    let q = QuantizerSpec::single_bit();
    let d = 512.0;
    let drive = PiecewiseSignal::from_signal(&x, 0.0, d).unwrap();
    let train = run_pfm_core(&drive, 1.0, &q, 1.0, d).unwrap();
    let band = 4.0;
    let bins = (band * d) as usize;
    let measured: Vec<_> = (0..=bins)
        .map(|k| impulse_line(&train.times, k as f64 / d, (0.0, d)))
        .collect();
    let residual = |q_max: u32| {
        let m = sideband_series(&x, &q, 1.0, q_max, None).unwrap();
        let mut model = vec![num_complex::Complex64::new(0.0, 0.0); bins + 1];
        for (f, v) in m.lines(band) {
            model[(f * d).round() as usize] += v;
        }
        model
            .iter()
            .zip(&measured)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
    };
    let r: Vec<f64> = [5, 10, 20].iter().map(|&q| residual(q)).collect();
    assert!(r[1] <= r[0] && r[2] <= r[1], "residuals {r:?}");
}

#[test]
fn carson_band_holds_most_sideband_power() {
    let q = QuantizerSpec::single_bit();
    for (x_dc, a, f_x) in [(1.0, 0.125, 1.0 / 128.0), (0.51, 0.1, 0.0021), (2.0, 0.6, 0.013)] {
        let x = SignalExpr::tone(x_dc, a, f_x, 0.0);
        let m = sideband_series(&x, &q, 1.0, 6, None).unwrap();
        for qi in 1..=6 {
            let bw = carson_bandwidth(qi, a, m.k_d);
            let frac = sideband_power_fraction(&m, qi, bw);
            assert!(frac >= 0.95, "x_dc {x_dc}, A {a}, q {qi}: {frac}");
        }
    }
}

#[test]
fn first_order_spurs_match_prediction() {
    let n = 1 << 16;
    let spec = LoopSpec::new(vec![1.0], vec![1.0], QuantizerSpec::single_bit());
    let a = 0.5 * 10f64.powf(-14.0 / 20.0);
    let f_x = 4591.0 / 65536.0;
    let x = SignalExpr::tone(0.51, a, f_x, 0.0);
    let c = run_ctsd(&spec, &x, n).unwrap();
    let s = periodogram(&levels(&c.y), 1.0, 0.5, Window::Hann, n).unwrap();
    let p = predict_spurs(&build_pfm_equivalent(&spec).unwrap(), &x, 4, 3).unwrap();
    assert_eq!(p.spurs.len(), 28);
    for sp in &p.spurs {
        assert!(s.has_peak_near(sp.f_a, 1), "({}, {}) not on a peak", sp.q, sp.r);
        let err = s.tone_dbfs(sp.f_a, 2) - sp.amp_dbfs_pred;
        assert!(err.abs() <= 0.5, "({}, {}): error {err} dB", sp.q, sp.r);
        assert!(sp.f_a >= 0.0 && sp.f_a <= 0.5);
    }
}

fn white(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn periodogram_conserves_power() {
    let y = white(1 << 16, 7);
    let mean_square = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    for window in [Window::Hann, Window::Rectangular] {
        let s = periodogram(&y, 1.0, 0.8, window, 4096).unwrap();
        let total = s.band_power(0.0, 0.5);
        let expected = mean_square / (0.8f64 * 0.8 / 2.0);
        let err = 10.0 * (total / expected).log10();
        assert!(err.abs() <= 0.1, "{window:?}: {err} dB");
    }
}

#[test]
fn white_noise_is_flat() {
    let y = white(1 << 18, 11);
    let s = periodogram(&y, 1.0, 1.0, Window::Hann, 4096).unwrap();
    let bands: Vec<f64> = (0..8)
        .map(|k| {
            let lo = 0.01 + k as f64 * 0.06;
            10.0 * s.band_power(lo, lo + 0.05).log10()
        })
        .collect();
    let max = bands.iter().cloned().fold(f64::MIN, f64::max);
    let min = bands.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max - min <= 0.5, "band levels {bands:?}");
}

#[test]
fn second_order_noise_rises_40_db_per_decade() {
    let n = 1 << 16;
    let spec = LoopSpec::new(vec![1.0, 1.0], vec![1.0, 1.5], QuantizerSpec::new(5));
    let x = SignalExpr::tone(2.0, 2.0 * 10f64.powf(-20.0 / 20.0), 67.0 / 65536.0, 0.0);
    let c = run_ctsd(&spec, &x, n).unwrap();
    let s = periodogram(&levels(&c.y), 1.0, 2.0, Window::Hann, 1 << 14).unwrap();
    let slope = s.slope_db_per_decade(0.004, 0.04).unwrap();
    assert!((slope - 40.0).abs() <= 4.0, "slope {slope}");
}

fn dense_run(spec: &LoopSpec, x: &SignalExpr, n: usize) -> pfmsd_core::NoiseDecomposition {
    let eq = build_pfm_equivalent(spec).unwrap();
    let opts = PfmOptions {
        dense_per_sample: Some(64),
        ..Default::default()
    };
    let p = run_pfm_equivalent_with(&eq, x, n, &opts).unwrap();
    let c = run_ctsd(spec, x, n).unwrap();
    decompose_noise(&c, &p, &eq, x, 1024).unwrap()
}

#[test]
fn aliasing_error_mean_decays_as_one_over_n() {
    let spec = LoopSpec::new(vec![1.0, 1.0], vec![1.0, 1.5], QuantizerSpec::new(5));
    let x = SignalExpr::tone(2.0, 0.3, 0.0123, 0.0);
    for n in [1usize << 10, 1 << 12, 1 << 14] {
        let dec = dense_run(&spec, &x, n);
        let mean = dec.e_al.iter().sum::<f64>() / dec.e_al.len() as f64;
        assert!(mean.abs() * n as f64 <= 4.0, "n {n}: mean {mean}");
    }
}

#[test]
fn dc_aliasing_error_is_periodic_and_zero_mean() {
    // rate 5/4 impulses per sample: the pattern repeats every 4 samples
    let spec = LoopSpec::new(vec![1.0], vec![1.0], QuantizerSpec::new(5));
    let x = SignalExpr::dc(1.25);
    let dec = dense_run(&spec, &x, 2048);
    let period = 4 * dec.dense_per_sample;
    let start = 64 * dec.dense_per_sample;
    for j in start..dec.e_al.len() - period {
        assert!(
            (dec.e_al[j] - dec.e_al[j + period]).abs() <= 1e-9,
            "cell {j}"
        );
    }
    let mean = dec.e_al[start..start + period].iter().sum::<f64>() / period as f64;
    assert!(mean.abs() <= 1e-9, "mean over one period {mean}");
}
