//! Change detection on the forecast-error sketch.

use super::KarySketch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeReport {
    /// `S_e = S_o − S_f`.
    pub error: KarySketch,
    /// `R_A = R·√F̂₂(S_e)`.
    pub threshold: f64,
    /// Keys whose estimated error exceeds the threshold, with that estimate.
    pub alarms: Vec<(u64, f64)>,
}

pub fn change_detect(observed: &KarySketch, forecast: &KarySketch, r: f64, keys: &[u64]) -> Result<ChangeReport> {
    if !(r > 0.0) {
        return Err(Error::config(format!("threshold multiplier R must be positive, got {r}")));
    }
    let error = observed.combine(-1.0, forecast)?;
    let threshold = r * error.estimate_f2().max(0.0).sqrt();
    let alarms = keys
        .iter()
        .map(|&k| (k, error.estimate(k)))
        .filter(|(_, e)| e.abs() > threshold)
        .collect();
    Ok(ChangeReport { error, threshold, alarms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{forecast, ForecastModel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn epoch(rng: &mut ChaCha8Rng, keys: &[u64], boost: Option<(u64, f64)>) -> KarySketch {
        let mut s = KarySketch::new(5, 256, 11).unwrap();
        for &k in keys {
            let mut v = rng.random_range(90.0..110.0);
            if let Some((bk, f)) = boost {
                if bk == k {
                    v *= f;
                }
            }
            s.update(k, v);
        }
        s
    }

    #[test]
    fn identical_sketches_do_not_alarm() {
        let mut s = KarySketch::new(3, 16, 1).unwrap();
        s.update(5, 100.0);
        let r = change_detect(&s, &s.clone(), 1.0, &[5, 6]).unwrap();
        assert!(r.alarms.is_empty());
        assert!(change_detect(&s, &s, 0.0, &[]).is_err());
    }

    #[test]
    fn injected_jump_alarms_and_r_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let keys: Vec<u64> = (0..100).map(|i| i * 7919 + 13).collect();
        let hist: Vec<KarySketch> = (0..6).map(|_| epoch(&mut rng, &keys, None)).collect();
        let f = forecast(&ForecastModel::Ewma { alpha: 0.5 }, &hist).unwrap();
        let obs = epoch(&mut rng, &keys, Some((keys[17], 100.0)));
        // the jump dominates F₂, so the threshold must sit below √F₂
        let rep = change_detect(&obs, &f, 0.5, &keys).unwrap();
        assert_eq!(rep.alarms.len(), 1);
        assert_eq!(rep.alarms[0].0, keys[17]);
        let mut prev = usize::MAX;
        for r in [0.01, 0.05, 0.1, 0.5, 1.0, 2.0] {
            let n = change_detect(&obs, &f, r, &keys).unwrap().alarms.len();
            assert!(n <= prev);
            prev = n;
        }
    }

    proptest! {
        #[test]
        fn error_sketch_is_translation_consistent(c in -100.0f64..100.0, vals in prop::collection::vec(0.0f64..50.0, 1..20)) {
            let mut o = KarySketch::new(2, 8, 4).unwrap();
            let mut f = o.zeros_like();
            for (i, v) in vals.iter().enumerate() {
                o.update(i as u64, *v);
                f.update(i as u64, v * 0.5);
            }
            let shift = o.with_table(o.table().add_scalar(c)).unwrap();
            let fshift = f.with_table(f.table().add_scalar(c)).unwrap();
            let a = change_detect(&o, &f, 1.0, &[]).unwrap();
            let b = change_detect(&shift, &fshift, 1.0, &[]).unwrap();
            prop_assert!((a.error.table() - b.error.table()).abs().max() < 1e-9);
        }
    }
}
