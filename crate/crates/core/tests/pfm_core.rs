use pfmsd_core::{run_pfm_core, shape_and_sample, PiecewiseSignal, QuantizerSpec, SignalExpr};

fn core(x: &SignalExpr, q: &QuantizerSpec, t_m: f64, duration: f64) -> pfmsd_core::DeltaTrain {
    let drive = PiecewiseSignal::from_signal(x, 0.0, duration).unwrap();
    run_pfm_core(&drive, 1.0, q, t_m, duration).unwrap()
}

#[test]
fn mean_count_follows_rate_law() {
    let q = QuantizerSpec::new(5);
    let n = 4096;
    for x_dc in [0.13, 0.5, 1.37, 2.9, 3.71] {
        let train = core(&SignalExpr::dc(x_dc), &q, 1.0, n as f64);
        let tr = shape_and_sample(&train, 1.0, 1.0, n).unwrap();
        let mean = tr.y.iter().map(|&y| f64::from(y)).sum::<f64>() / n as f64;
        assert!(
            (mean - x_dc).abs() <= 1.0 / n as f64,
            "x_dc {x_dc}: mean {mean}"
        );
    }
}

#[test]
fn pulse_level_is_bounded_by_peak_rate() {
    let q = QuantizerSpec::new(8);
    let x = SignalExpr::tone(3.0, 2.5, 0.011, 0.2);
    let d = 2000.0;
    let train = core(&x, &q, 1.0, d);
    let tr = shape_and_sample(&train, 1.0, 1.0, d as usize).unwrap();
    let bound = (5.5f64).ceil() as u32 + 1;
    for k in 0..(d as usize * 16) {
        let t = k as f64 / 16.0;
        assert!(tr.pulse_level(t) <= bound, "t {t}: {}", tr.pulse_level(t));
    }
}

#[test]
fn adding_full_scale_adds_one_per_sample() {
    let q = QuantizerSpec::new(8);
    let n = 1000;
    // rates whose impulses never land exactly on a sampling instant
    for x_dc in [0.21, 0.73, 1.37, 2.44] {
        let run = |dc: f64| {
            let train = core(&SignalExpr::dc(dc), &q, 1.0, n as f64);
            shape_and_sample(&train, 1.0, 1.0, n).unwrap().y
        };
        let base = run(x_dc);
        let shifted = run(x_dc + q.x_m());
        for (k, (a, b)) in base.iter().zip(&shifted).enumerate() {
            assert_eq!(*b, a + 1, "x_dc {x_dc}, sample {}", k + 1);
        }
    }
}

#[test]
fn no_threshold_crossing_is_skipped() {
    // the drive dips below zero so the running integral is not monotone
    let q = QuantizerSpec::single_bit();
    let x = SignalExpr::tone(0.2, 0.5, 0.037, 0.0);
    let d = 400.0;
    let train = core(&x, &q, 1.0, d);
    let drive = PiecewiseSignal::from_signal(&x, 0.0, d).unwrap();
    let x_m = q.x_m();
    let g = |t: f64, fired: usize| drive.integrate(0.0, t).unwrap() - x_m * fired as f64;
    let mut edges = vec![0.0];
    edges.extend(&train.times);
    edges.push(d);
    for (k, w) in edges.windows(2).enumerate() {
        for j in 1..2000 {
            let t = w[0] + (w[1] - w[0]) * j as f64 / 2000.0;
            assert!(g(t, k) < x_m + 1e-9, "crossing missed before t = {t}");
        }
        if k < train.times.len() {
            assert!((g(w[1], k) - x_m).abs() <= 1e-9, "impulse {k} off threshold");
        }
    }
    assert!(train.times.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn open_loop_counts_are_conserved() {
    let q = QuantizerSpec::new(5);
    let x = SignalExpr::tone(1.8, 1.2, 0.0173, 0.9);
    let n = 3000;
    let train = core(&x, &q, 1.0, n as f64);
    let tr = shape_and_sample(&train, 1.0, 1.0, n).unwrap();
    let total: usize = tr.y.iter().map(|&y| y as usize).sum();
    assert_eq!(total, train.count_in(0.0, n as f64));
    assert_eq!(total, train.len());
}
