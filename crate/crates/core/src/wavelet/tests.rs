use super::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn highpass_filters_have_vanishing_moments() {
    let bank = FilterBank::default();
    for h in &bank.highpass {
        assert!(h.iter().sum::<f64>().abs() < 1e-12);
    }
    assert!((bank.lowpass.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs() < 1e-12);
    assert!(FilterBank::tight(vec![1.0], vec![vec![1.0, 0.5]]).is_err());
}

#[test]
fn round_trip_is_exact() {
    let bank = FilterBank::default();
    for seed in 0..100 {
        let x = noise(256, seed);
        let d = analyze(&x, &bank, 8).unwrap();
        assert!(max_diff(&synthesize(&d, &bank).unwrap(), &x) < 1e-9);
    }
    // padded length and another bank
    let x = noise(200, 7);
    for bank in [FilterBank::default(), FilterBank::haar()] {
        let d = analyze(&x, &bank, 4).unwrap();
        assert_eq!(d.len, 200);
        assert!(max_diff(&synthesize(&d, &bank).unwrap(), &x) < 1e-9);
    }
}

#[test]
fn constant_signal_has_zero_highpass() {
    let d = analyze(&[3.5; 256], &FilterBank::default(), 6).unwrap();
    assert!(d.highpass.iter().flatten().flatten().all(|c| c.abs() < 1e-9));
}

#[test]
fn level_sizes_halve() {
    let d = analyze(&noise(64, 1), &FilterBank::default(), 3).unwrap();
    let sizes: Vec<usize> = d.highpass.iter().map(|l| l[0].len()).collect();
    assert_eq!(sizes, vec![32, 16, 8]);
    assert!(d.highpass.iter().all(|l| l.len() == 4));
    assert!(d.n_coefficients() >= 64);
}

#[test]
fn short_signal_names_minimum() {
    let err = analyze(&[1.0; 5], &FilterBank::default(), 3).unwrap_err().to_string();
    assert!(err.contains("at least 8"), "{err}");
}

#[test]
fn impulse_gives_reversed_taps() {
    let bank = FilterBank::default();
    let mut x = vec![0.0; 16];
    x[8] = 1.0;
    let d = analyze(&x, &bank, 1).unwrap();
    for (i, h) in bank.highpass.iter().enumerate() {
        let c = &d.highpass[0][i];
        // centred correlation: 2m + k - 2 = 8
        assert_eq!(&c[3..6], &[h[4], h[2], h[0]]);
        assert!(c[..3].iter().chain(&c[6..]).all(|v| *v == 0.0));
    }
    x[8] = 0.0;
    x[9] = 1.0;
    let d = analyze(&x, &bank, 1).unwrap();
    assert_eq!(&d.lowpass[4..6], &[bank.lowpass[3], bank.lowpass[1]]);
}

#[test]
fn dropping_finest_detail_leaves_lowpass_projection() {
    let bank = FilterBank::default();
    let n = 32;
    let mut x = vec![0.0; n];
    x[11] = 1.0;
    let mut d = analyze(&x, &bank, 1).unwrap();
    d.highpass[0].iter_mut().flatten().for_each(|c| *c = 0.0);
    let got = synthesize(&d, &bank).unwrap();
    // explicit decimated lowpass operator L, result should be LᵀL x
    let mut l = vec![vec![0.0; n]; n / 2];
    for (m, row) in l.iter_mut().enumerate() {
        for (k, g) in bank.lowpass.iter().enumerate() {
            row[(2 * m + k + n - 2) % n] += g;
        }
    }
    let lx: Vec<f64> = l.iter().map(|row| row[11]).collect();
    let expect: Vec<f64> = (0..n).map(|t| (0..n / 2).map(|m| l[m][t] * lx[m]).sum()).collect();
    assert!(max_diff(&got, &expect) < 1e-12);
}

#[test]
fn zeroed_coefficients_give_zero_signal() {
    let bank = FilterBank::default();
    let d = analyze(&noise(64, 2), &bank, 3).unwrap().map(false, |_| false);
    assert!(synthesize(&d, &bank).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn shape_mismatch_is_rejected() {
    let d = analyze(&noise(64, 2), &FilterBank::default(), 3).unwrap();
    assert!(synthesize(&d, &FilterBank::haar()).is_err());
}

#[test]
fn linear_signals_vanish_in_higher_moment_filters() {
    let bank = FilterBank::default();
    let x: Vec<f64> = (0..128).map(|t| 2.0 + 0.25 * t as f64).collect();
    let d = analyze(&x, &bank, 1).unwrap();
    // filters 2..4 have at least two vanishing moments; skip the wrap-around
    for c in &d.highpass[0][1..] {
        assert!(c[2..62].iter().all(|v| v.abs() < 1e-9));
    }
}

#[test]
fn band_levels_follow_twelve_level_layout() {
    assert_eq!(band_levels(12), (5, 3));
    assert_eq!(split_depth(4096), 12);
    assert_eq!(split_depth(1 << 14), 12);
    assert_eq!(split_depth(256), 8);
    assert_eq!(band_levels(8), (4, 2));
}

#[test]
fn bands_sum_to_signal() {
    let x = noise(1000, 3);
    let b = band_split(&x, &FilterBank::default(), 0.0).unwrap();
    let sum: Vec<f64> = (0..x.len()).map(|t| b.low[t] + b.mid[t] + b.high[t]).collect();
    assert!(max_diff(&sum, &x) < 1e-8);
    let z = band_split(&[0.0; 64], &FilterBank::default(), 0.0).unwrap();
    assert!(z.low.iter().chain(&z.mid).chain(&z.high).all(|v| *v == 0.0));
}

#[test]
fn slow_sinusoid_lives_in_low_band() {
    let n = 16384;
    let x: Vec<f64> = (0..n).map(|t| (2.0 * std::f64::consts::PI * t as f64 / 8192.0).sin()).collect();
    let b = band_split(&x, &FilterBank::default(), 0.0).unwrap();
    assert!(energy(&b.low) >= 0.95 * energy(&x), "{}", energy(&b.low) / energy(&x));
}

#[test]
fn white_noise_is_mostly_high_band() {
    let b = band_split(&noise(4096, 4), &FilterBank::default(), 0.0).unwrap();
    let (l, m, h) = (energy(&b.low), energy(&b.mid), energy(&b.high));
    assert!(h > m && h > l, "{l} {m} {h}");
}

#[test]
fn high_threshold_suppresses_small_coefficients() {
    let x = noise(512, 5);
    let b = band_split(&x, &FilterBank::default(), 1e9).unwrap();
    assert!(b.high.iter().all(|v| *v == 0.0));
}

#[test]
fn constant_signal_gives_flat_v() {
    let cfg = VariabilityConfig::default();
    let (_, v) = wavelet_detect(&[5.0; 512], &FilterBank::default(), 0.0, &cfg).unwrap();
    assert!(v.v.iter().all(|x| x.abs() < 1e-12));
    assert!(v.peaks.is_empty());
    assert_eq!(v.warnings.len(), 2);
    assert!(local_variability_detect(&[0.0; 4], &[0.0; 4], &VariabilityConfig { window: 1, ..cfg }).is_err());
}

#[test]
fn noise_alarm_rate_is_small() {
    let cfg = VariabilityConfig::default();
    let (mut alarmed, mut total) = (0, 0);
    for seed in 0..20 {
        let (_, v) = wavelet_detect(&noise(2048, 100 + seed), &FilterBank::default(), 0.0, &cfg).unwrap();
        alarmed += v.peaks.iter().map(Peak::width).sum::<usize>();
        total += v.v.len();
    }
    let rate = alarmed as f64 / total as f64;
    assert!(rate < 0.05, "alarm rate {rate}");
}

#[test]
fn burst_gives_single_peak() {
    let cfg = VariabilityConfig::default();
    let mut x = noise(2048, 9);
    let (start, len) = (1000, cfg.window);
    x[start..start + len].iter_mut().for_each(|v| *v += 10.0);
    let (_, v) = wavelet_detect(&x, &FilterBank::default(), 0.0, &cfg).unwrap();
    assert_eq!(v.peaks.len(), 1, "{:?}", v.peaks);
    let p = v.peaks[0];
    assert!(p.start <= start + len && p.end >= start, "{p:?}");
    assert!(p.width() >= len / 2 && p.width() <= 3 * len, "{p:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn analysis_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let bank = FilterBank::default();
        let (x, y) = (noise(64, seed), noise(64, seed + 1));
        let z: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let (dx, dy, dz) = (analyze(&x, &bank, 3).unwrap(), analyze(&y, &bank, 3).unwrap(), analyze(&z, &bank, 3).unwrap());
        for ((cx, cy), cz) in dx.highpass.iter().flatten().flatten().zip(dy.highpass.iter().flatten().flatten()).zip(dz.highpass.iter().flatten().flatten()) {
            prop_assert!((a * cx + b * cy - cz).abs() < 1e-9);
        }
    }

    #[test]
    fn v_signal_ignores_constant_offset(seed in 0u64..1000, c in -100.0f64..100.0) {
        let cfg = VariabilityConfig::default();
        let x = noise(256, seed);
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let (_, a) = wavelet_detect(&x, &FilterBank::default(), 0.0, &cfg).unwrap();
        let (_, b) = wavelet_detect(&shifted, &FilterBank::default(), 0.0, &cfg).unwrap();
        prop_assert!(max_diff(&a.v, &b.v) < 1e-6);
    }
}


#[test]
fn a_trous_sums_back() {
    let x = noise(300, 11);
    let (a, d) = a_trous_haar(&x, 5);
    for t in 0..x.len() {
        let s: f64 = a[t] + d.iter().map(|l| l[t]).sum::<f64>();
        assert!((s - x[t]).abs() < 1e-12);
    }
    let (a, d) = a_trous_haar(&[2.0; 40], 3);
    assert!(a.iter().all(|v| *v == 2.0) && d.iter().flatten().all(|v| *v == 0.0));
}
