use super::*;
use crate::data::{Feature, Histogram};
use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
}

#[test]
fn normalize_examples() {
    let a = DMatrix::from_column_slice(3, 3, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0, 2.0, 4.0, 6.0]);
    let plain = normalize_columns(&a, false).unwrap();
    assert_eq!(plain.x.column(0).as_slice(), &[-1.0, 0.0, 1.0]);
    assert_eq!(plain.x.column(1).as_slice(), &[0.0, 0.0, 0.0]);
    let scaled = normalize_columns(&a, true).unwrap();
    let s = scaled.x.column(2);
    assert_abs_diff_eq!(s[0], -1.224745, epsilon = 1e-5);
    assert_abs_diff_eq!(s[1], 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s[2], 1.224745, epsilon = 1e-5);
    assert_eq!(scaled.x.column(1).as_slice(), &[0.0, 0.0, 0.0]);
    assert!(normalize_columns(&DMatrix::zeros(1, 2), false).is_err());
}

#[test]
fn fit_examples() {
    let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
    let m = fit_pca(&x).unwrap();
    assert_abs_diff_eq!(m.variances()[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(m.variances()[1], 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(m.axes()[(0, 0)].abs(), 1.0, epsilon = 1e-12);

    let line = DMatrix::from_row_slice(3, 2, &[-1.0, -1.0, 0.0, 0.0, 1.0, 1.0]);
    let m = fit_pca(&line).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert_abs_diff_eq!(m.axes()[(0, 0)].abs(), r, epsilon = 1e-12);
    assert_abs_diff_eq!(m.axes()[(1, 0)].abs(), r, epsilon = 1e-12);

    let x = normalize_columns(&gaussian(20, 4, 1), false).unwrap().x;
    let m = fit_pca(&x).unwrap();
    let total: f64 = x.column_iter().map(|c| c.norm_squared() / 20.0).sum();
    assert_abs_diff_eq!(m.variances().sum(), total, epsilon = 1e-8);
}

/// Columns with distinct variances and bounded (uniform) noise, so no
/// projection reaches 3σ unless a spike is injected.
fn layered(m: usize, spike_axis: Option<usize>) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sds = [10.0, 5.0, 2.0, 1.0];
    let mut x = DMatrix::from_fn(m, 4, |_, j| sds[j] * rng.random_range(-1.0..1.0));
    if let Some(a) = spike_axis {
        x[(m / 2, a)] += 12.0 * sds[a];
    }
    normalize_columns(&x, false).unwrap().x
}

#[test]
fn split_examples() {
    let x = layered(400, Some(2));
    let m = fit_pca(&x).unwrap();
    let s = split_subspace(&x, &m, 3.0);
    assert_eq!(s.k, 2);
    assert!(!s.degenerate);

    let x = layered(400, None);
    let m = fit_pca(&x).unwrap();
    let s = split_subspace(&x, &m, 3.0);
    assert_eq!(s.k, 4);
    assert!(s.degenerate);
    assert_eq!(s.detection_k(4), 3);

    let x = layered(400, Some(0));
    let m = fit_pca(&x).unwrap();
    let s = split_subspace(&x, &m, 3.0);
    assert_eq!(s.first_crossing, Some(0));
    assert_eq!(s.k, 1);
}

#[test]
fn q_threshold_values() {
    assert_abs_diff_eq!(q_threshold(&[1.0, 1.0, 1.0], 0.05).unwrap(), 7.775, epsilon = 0.01);
    assert_abs_diff_eq!(q_threshold(&[2.0, 1.0], 0.05).unwrap(), 9.318257, epsilon = 1e-4);
    assert!(q_threshold(&[1.0, 1.0, 1.0], 0.9).unwrap() < q_threshold(&[1.0, 1.0, 1.0], 0.05).unwrap());
    assert!(matches!(q_threshold(&[0.0, 0.0], 0.05), Err(Error::Degenerate(_))));
    assert!(q_threshold(&[1.0], 1.0).is_err());
}

#[test]
fn q_threshold_skewed_spectrum_falls_back() {
    let mut lam = vec![10.0];
    lam.extend(std::iter::repeat_n(1.0, 100));
    let q = q_threshold(&lam, 0.05).unwrap();
    assert!(q.is_finite() && q > lam.iter().sum::<f64>());
}

fn model_k(x: &DMatrix<f64>, k: usize) -> PcaModel {
    fit_pca(x).unwrap().with_k(k).unwrap()
}

#[test]
fn spe_examples() {
    let x = normalize_columns(&gaussian(200, 5, 2), false).unwrap().x;
    let m = model_k(&x, 2);
    let inside = m.axes().column(0) * 3.0 + m.axes().column(1) * -2.0;
    let d = spe_detect(&inside, &m, 0.05).unwrap();
    assert_abs_diff_eq!(d.spe, 0.0, epsilon = 1e-12);
    assert!(!d.alarm);
    let out = m.axes().column(4) * 5.0;
    assert_abs_diff_eq!(m.spe(&out), 25.0, epsilon = 1e-10);
}

#[test]
fn identify_examples() {
    let x = normalize_columns(&gaussian(300, 6, 3), false).unwrap().x;
    let m = model_k(&x, 2);
    let labels: Vec<String> = (0..6).map(|i| format!("f{i}")).collect();
    let dirs = AnomalyDirection::unit_axes(&labels);
    // normal part lies in the normal subspace
    let normal = m.axes().column(0) * 1.5;
    let v = &normal + dirs[3].theta() * 7.0;
    // exhaustive oracle: residual norm after removing each candidate
    let resid: Vec<f64> = dirs
        .iter()
        .map(|d| {
            let t2 = m.residual(d.theta());
            let x2 = m.residual(&v);
            let f = t2.dot(&x2) / t2.norm_squared();
            (x2 - t2 * f).norm()
        })
        .collect();
    let oracle = (0..6).min_by(|&a, &b| resid[a].partial_cmp(&resid[b]).unwrap()).unwrap();
    let id = identify_quantify(&v, &m, &dirs).unwrap();
    assert_eq!(id.index, 3);
    assert_eq!(id.index, oracle);
    assert_abs_diff_eq!(id.magnitude, 7.0, epsilon = 1e-8);

    let id = identify_quantify(&normal, &m, &dirs).unwrap();
    assert_abs_diff_eq!(id.magnitude, 0.0, epsilon = 1e-10);
}

#[test]
fn undetectable_candidates_are_skipped() {
    let x = normalize_columns(&gaussian(100, 3, 4), false).unwrap().x;
    let m = model_k(&x, 1);
    let inside = AnomalyDirection::new(m.axes().column(0).into_owned(), "in").unwrap();
    let out = AnomalyDirection::new(m.axes().column(2).into_owned(), "out").unwrap();
    let v = m.axes().column(2) * 4.0;
    let id = identify_quantify(&v, &m, &[inside.clone(), out]).unwrap();
    assert_eq!(id.index, 1);
    assert_eq!(id.undetectable, vec![0]);
    let err = identify_quantify(&v, &m, &[inside]).unwrap_err();
    assert!(err.to_string().contains("in"));
}

#[test]
fn detectability_examples() {
    let x = normalize_columns(&gaussian(100, 4, 6), false).unwrap().x;
    let m = model_k(&x, 2);
    let delta = q_threshold(&m.residual_variances(), 0.05).unwrap().sqrt();
    let inside = m.axes().column(0).into_owned();
    assert_eq!(detectability_bound(&inside, &m, 0.05).unwrap(), Detectability::Undetectable);
    let out = m.axes().column(3).into_owned();
    match detectability_bound(&out, &m, 0.05).unwrap() {
        Detectability::Bound(b) => assert_abs_diff_eq!(b, 2.0 * delta, epsilon = 1e-10),
        _ => panic!("expected a bound"),
    }
    // equal mix of normal and residual axes halves... the residual norm is 1/√2
    let mixed = (m.axes().column(0) + m.axes().column(3)) / 2f64.sqrt();
    let half = (m.axes().column(0) * 3f64.sqrt() + m.axes().column(3)) / 2.0;
    let b = |v: &DVector<f64>| match detectability_bound(v, &m, 0.05).unwrap() {
        Detectability::Bound(b) => b,
        _ => panic!(),
    };
    assert_abs_diff_eq!(b(&half) / b(&out), 2.0, epsilon = 1e-9);
    assert!(b(&mixed) > b(&out));
}

#[test]
fn greedy_removes_two_spikes() {
    let x = normalize_columns(&gaussian(500, 8, 7), false).unwrap().x;
    let m = model_k(&x, 2);
    let labels: Vec<String> = (0..8).map(|i| i.to_string()).collect();
    let dirs = AnomalyDirection::unit_axes(&labels);
    let v = dirs[1].theta() * 20.0 + dirs[6].theta() * 15.0;
    let mut got = greedy_identify(&v, &m, &dirs, 0.01, 8).unwrap();
    got.sort_unstable();
    assert_eq!(got, vec![1, 6]);
}

#[test]
fn entropy_examples() {
    let mut h = Histogram::new(Feature::Sip);
    h.add(7, 10);
    assert_eq!(sample_entropy(&h).unwrap(), 0.0);
    let mut h = Histogram::new(Feature::Sip);
    for v in 0..8 {
        h.add(v, 3);
    }
    assert_abs_diff_eq!(sample_entropy(&h).unwrap(), 3.0, epsilon = 1e-12);
    let mut h = Histogram::new(Feature::Dp);
    h.add(1, 3);
    h.add(2, 1);
    assert_abs_diff_eq!(sample_entropy(&h).unwrap(), 0.811278, epsilon = 1e-6);
    assert!(sample_entropy(&Histogram::new(Feature::Sp)).is_err());
}

#[test]
fn recast_layout() {
    let mut t = EntropyTensor::zeros(2, 3);
    for i in 0..2 {
        for p in 0..3 {
            for k in 0..4 {
                t.set(i, p, k, (100 * i + 10 * k + p) as f64);
            }
        }
    }
    let m = multiway_recast(&t);
    assert_eq!(m.values.shape(), (2, 12));
    // SIP block first, then DIP, SP, DP
    assert_eq!(m.values[(1, 0)], 100.0);
    assert_eq!(m.values[(1, 3)], 110.0);
    assert_eq!(m.values[(1, 11)], 132.0);
    assert_eq!(m.labels()[4], "dstIP/1".replace("dstIP", Feature::Dip.name()));
    assert_eq!(m.to_tensor(), t);
    let z = multiway_recast(&EntropyTensor::zeros(3, 2));
    assert!(z.values.iter().all(|&v| v == 0.0));
}

#[test]
fn lagged_j1_matches_plain_reconstruction() {
    let x = gaussian(50, 4, 8);
    let lp = lagged_pca(&x, 1, 2, 1).unwrap();
    let norm = normalize_columns(&x, false).unwrap();
    let m = fit_pca(&norm.x).unwrap();
    let v2 = m.axes().columns(0, 2);
    let mut rec = (&norm.x * v2) * v2.transpose();
    for j in 0..4 {
        let mu = norm.means[j];
        rec.column_mut(j).apply(|v| *v += mu);
    }
    assert_eq!(lp.first_row, 0);
    assert!((lp.approximation - rec).norm() < 1e-9);
}

#[test]
fn lagged_sinusoid_is_captured() {
    let x = DMatrix::from_fn(200, 1, |i, _| (i as f64 * 0.3).sin() * 5.0 + 2.0);
    let lp = lagged_pca(&x, 4, 3, 1).unwrap();
    assert!(lp.residual.norm() < 1e-6 * x.norm());
    assert!(lagged_pca(&x, 200, 1, 1).is_err());
}

#[test]
fn lagged_residual_shrinks_with_modes() {
    let x = gaussian(120, 3, 9);
    let mut prev = f64::INFINITY;
    for q in 1..=9 {
        let r = lagged_pca(&x, 3, q, 1).unwrap().residual.norm_squared();
        assert!(r <= prev + 1e-9);
        prev = r;
    }
    assert!(prev < 1e-18 * x.norm_squared().max(1.0) + 1e-12);
}

fn small_matrix() -> impl Strategy<Value = (DMatrix<f64>, usize)> {
    (3usize..7, 10usize..30).prop_flat_map(|(n, m)| {
        (prop::collection::vec(-10.0f64..10.0, n * m), 1..n).prop_map(move |(v, k)| (DMatrix::from_vec(m, n, v), k))
    })
}

proptest! {
    #[test]
    fn projector_is_idempotent_and_pythagorean((a, k) in small_matrix(), seed in 0u64..1000) {
        let x = normalize_columns(&a, false).unwrap().x;
        let m = model_k(&x, k);
        let p = m.projector();
        prop_assert!((&p * &p - &p).norm() < 1e-8);
        prop_assert!((&p - p.transpose()).norm() < 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = DVector::from_fn(a.ncols(), |_, _| rng.random_range(-5.0..5.0));
        let lhs = v.norm_squared();
        let rhs = (&p * &v).norm_squared() + m.residual(&v).norm_squared();
        prop_assert!((lhs - rhs).abs() < 1e-8 * (1.0 + lhs));
    }

    #[test]
    fn residual_orthogonality((a, k) in small_matrix(), j in 0usize..3, f in -20.0f64..20.0) {
        let x = normalize_columns(&a, false).unwrap().x;
        let m = model_k(&x, k);
        let labels: Vec<String> = (0..a.ncols()).map(|i| i.to_string()).collect();
        let dirs = AnomalyDirection::unit_axes(&labels);
        let v = x.row(0).transpose() + dirs[j].theta() * f;
        let t2 = m.residual(dirs[j].theta());
        prop_assume!(t2.norm() > 1e-6);
        let x2 = m.residual(&v);
        let fh = t2.dot(&x2) / t2.norm_squared();
        let xhat = &v - dirs[j].theta() * fh;
        prop_assert!(m.residual(&xhat).dot(&t2).abs() < 1e-8 * (1.0 + v.norm_squared()));
    }

    #[test]
    fn spe_decision_is_rotation_invariant((a, k) in small_matrix(), seed in 0u64..1000) {
        let x = normalize_columns(&a, false).unwrap().x;
        let n = a.ncols();
        let q = gaussian(n, n, seed).qr().q();
        let xr = &x * q.transpose();
        let m1 = model_k(&x, k);
        let m2 = model_k(&xr, k);
        prop_assume!((m1.variances()[k - 1] - m1.variances()[k]).abs() > 1e-6);
        for i in 0..x.nrows().min(5) {
            let v = x.row(i).transpose() * 3.0;
            let vr = &q * &v;
            let d1 = spe_detect(&v, &m1, 0.05);
            let d2 = spe_detect(&vr, &m2, 0.05);
            if let (Ok(d1), Ok(d2)) = (d1, d2) {
                prop_assert!((d1.spe - d2.spe).abs() < 1e-6 * (1.0 + d1.spe));
                if (d1.spe - d1.threshold).abs() > 1e-6 * (1.0 + d1.spe) {
                    prop_assert_eq!(d1.alarm, d2.alarm);
                }
            }
        }
    }

    #[test]
    fn entropy_permutation_invariant_and_bounded(counts in prop::collection::vec(1u64..50, 1..20), shift in 0usize..20) {
        let mut h1 = Histogram::new(Feature::Dp);
        let mut h2 = Histogram::new(Feature::Dp);
        let n = counts.len();
        for (i, &c) in counts.iter().enumerate() {
            h1.add(i as u64, c);
            h2.add(((i + shift) % n) as u64 * 7 + 3, c);
        }
        let e1 = sample_entropy(&h1).unwrap();
        prop_assert!((e1 - sample_entropy(&h2).unwrap()).abs() < 1e-12);
        prop_assert!(e1 <= (n as f64).log2() + 1e-12);
    }
}
