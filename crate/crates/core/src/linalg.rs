//! Small numeric kit shared by the detectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order and
/// eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Symmetric eigendecomposition. Each eigenvector's sign is fixed so that its
/// largest-magnitude entry is positive, which makes results reproducible.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<SymEigen> {
    if !m.is_square() {
        return Err(Error::contract(format!("eigendecomposition needs a square matrix, got {:?}", m.shape())));
    }
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::contract(format!("matrix not symmetric at ({i},{j})")));
            }
        }
    }
    if n == 0 {
        return Ok(SymEigen { values: DVector::zeros(0), vectors: DMatrix::zeros(0, 0) });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(dst, &v);
    }
    Ok(SymEigen { values, vectors })
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Inverse of the standard normal CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile needs 0 < p < 1, got {p}")));
    }
    Ok(std_normal().inverse_cdf(p))
}

pub fn normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divides by n).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (divides by n − 1).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation about the median (unscaled).
pub fn mad(xs: &[f64]) -> f64 {
    let m = median(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m).abs()).collect();
    median(&dev)
}

/// Scale factor turning a MAD into a consistent Gaussian σ estimate.
pub const MAD_TO_SIGMA: f64 = 1.4826;

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let den: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / den
}

/// Moore–Penrose pseudo-inverse via SVD with a relative singular-value cutoff.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    svd.pseudo_inverse(tol.max(1e-300)).expect("u and v were computed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_eigenvalues() {
        let e = sym_eigen(&DMatrix::identity(3, 3)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn diagonal_axis_aligned() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let e = sym_eigen(&m).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-12 && (e.values[1] - 1.0).abs() < 1e-12);
        assert!((e.vectors[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((e.vectors[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let b = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let m = &b + b.transpose();
            let e = sym_eigen(&m).unwrap();
            let recon = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
            assert!((recon - &m).amax() < 1e-8);
            assert!((e.vectors.transpose() * &e.vectors - DMatrix::identity(5, 5)).amax() < 1e-8);
            assert!((e.values.sum() - m.trace()).abs() < 1e-8);
            assert!(e.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
            for i in 0..5 {
                let v = e.vectors.column(i);
                assert!((&m * v - v * e.values[i]).norm() < 1e-8 * m.norm());
            }
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sym_eigen(&m), Err(Error::Contract(_))));
    }

    /// erf by its Maclaurin series; converges well for |x| < 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }

    fn quantile_by_bisection(p: f64) -> f64 {
        let (mut lo, mut hi) = (-6.0f64, 6.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let cdf = 0.5 * (1.0 + erf_series(mid / 2f64.sqrt()));
            if cdf < p {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantiles_match_series_oracle() {
        assert!(normal_quantile(0.5).unwrap().abs() < 1e-12);
        // oracle values frozen from the bisection above: 1.644854, 1.959964
        assert!((quantile_by_bisection(0.95) - 1.644854).abs() < 1e-6);
        assert!((quantile_by_bisection(0.975) - 1.959964).abs() < 1e-6);
        for p in [0.01, 0.05, 0.3, 0.95, 0.975, 0.999] {
            assert!((normal_quantile(p).unwrap() - quantile_by_bisection(p)).abs() < 1e-6, "p={p}");
        }
    }

    #[test]
    fn quantile_domain() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_monotone_and_antisymmetric() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let z = normal_quantile(p).unwrap();
            assert!(z > prev);
            prev = z;
            assert!((z + normal_quantile(1.0 - p).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn robust_stats() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mad(&[1.0, 1.0, 2.0, 2.0, 4.0, 6.0, 9.0]), 1.0);
        assert_eq!(variance(&[1.0, 2.0, 3.0]), 2.0 / 3.0);
        assert_eq!(sample_variance(&[1.0, 2.0, 3.0]), 1.0);
    }
}
