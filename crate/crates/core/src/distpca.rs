//! Distributed subspace detection: monitors filter their streams locally and
//! only report when a value drifts more than `δ` from the last report; the
//! coordinator runs the subspace method on the reconstructed window.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pca::{fit_pca, q_threshold};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateMessage {
    pub monitor: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorState {
    pub index: usize,
    delta: f64,
    last_sent: Option<f64>,
    error: f64,
}

impl MonitorState {
    pub fn new(index: usize, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::config("filter width must be non-negative"));
        }
        Ok(Self { index, delta, last_sent: None, error: 0.0 })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Current prediction held by the coordinator for this monitor.
    pub fn prediction(&self) -> Option<f64> {
        self.last_sent
    }

    /// Accumulated deviation since the last report.
    pub fn error(&self) -> f64 {
        self.error
    }

    /// Filters one sample. The first sample is always sent; afterwards a
    /// message goes out iff `|x − y| > δ`, or always when `δ = 0`.
    pub fn step(&mut self, x: f64) -> Option<UpdateMessage> {
        match self.last_sent {
            // δ = 0 means no filtering at all, even for repeated values
            Some(y) if self.delta > 0.0 && (x - y).abs() <= self.delta => {
                self.error = x - y;
                None
            }
            _ => {
                self.last_sent = Some(x);
                self.error = 0.0;
                Some(UpdateMessage { monitor: self.index, value: x })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinatorDecision {
    pub alarm: bool,
    pub spe: f64,
    pub threshold: f64,
}

/// Sliding window of perturbed rows plus the detector settings.
#[derive(Debug, Clone)]
pub struct CoordinatorState {
    n: usize,
    window_len: usize,
    k: usize,
    alpha: f64,
    predictions: Vec<f64>,
    window: VecDeque<DVector<f64>>,
}

impl CoordinatorState {
    pub fn new(n: usize, window_len: usize, k: usize, alpha: f64) -> Result<Self> {
        if n < 2 || k == 0 || k >= n {
            return Err(Error::config(format!("need 1 <= k < n, got k = {k}, n = {n}")));
        }
        if window_len < 2 {
            return Err(Error::config("window must hold at least two rows"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::config("alpha must lie in (0,1)"));
        }
        Ok(Self { n, window_len, k, alpha, predictions: vec![0.0; n], window: VecDeque::new() })
    }

    pub fn window_rows(&self) -> usize {
        self.window.len()
    }

    pub fn window_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.window.len(), self.n, |i, j| self.window[i][j])
    }

    /// Applies this round's updates, rolls the window and tests the newest
    /// row. Returns `None` until the window holds two rows.
    pub fn step(&mut self, updates: &[UpdateMessage]) -> Result<Option<CoordinatorDecision>> {
        for u in updates {
            if u.monitor >= self.n {
                return Err(Error::contract(format!("update from unknown monitor {}", u.monitor)));
            }
            self.predictions[u.monitor] = u.value;
        }
        let row = DVector::from_vec(self.predictions.clone());
        if self.window.len() == self.window_len {
            self.window.pop_front();
        }
        self.window.push_back(row);
        if self.window.len() < 2 {
            return Ok(None);
        }
        window_decision(&self.window_matrix(), self.k, self.alpha).map(Some)
    }
}

/// Centres the window, fits the subspace model with `k` normal axes and
/// tests the last row. This is also the centralized reference.
pub fn window_decision(window: &DMatrix<f64>, k: usize, alpha: f64) -> Result<CoordinatorDecision> {
    let m = window.nrows();
    let mut x = window.clone();
    for mut c in x.column_iter_mut() {
        let mu = c.mean();
        c.apply(|v| *v -= mu);
    }
    let model = fit_pca(&x)?.with_k(k)?;
    let last = x.row(m - 1).transpose();
    let spe = model.spe(&last);
    let threshold = match q_threshold(&model.residual_variances(), alpha) {
        Ok(t) => t,
        // a residual subspace with no variance flags any nonzero residual
        Err(Error::Degenerate(_)) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(CoordinatorDecision { alarm: spe > threshold + 1e-12 * (1.0 + threshold), spe, threshold })
}

/// Homogeneous filter allocation from a tolerable eigen-error `ε`:
/// returns `(σ, δ)` with `δ = σ√3` (uniform filtering error).
pub fn delta_from_epsilon(lambda_mean: f64, m: usize, n: usize, epsilon: f64) -> Result<(f64, f64)> {
    if !(lambda_mean > 0.0) || !(epsilon > 0.0) || m == 0 || n == 0 {
        return Err(Error::Domain("need mean eigenvalue > 0, epsilon > 0 and m, n >= 1".into()));
    }
    let (m, n) = (m as f64, n as f64);
    let a = 3.0 * lambda_mean * n;
    let sigma = ((a + 3.0 * epsilon * (m * m + m * n).sqrt()).sqrt() - a.sqrt()) / (m + n).sqrt();
    Ok((sigma, sigma * 3f64.sqrt()))
}

/// How the per-monitor filter widths are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaPolicy {
    Fixed(f64),
    /// `ε` as a fraction of the mean eigenvalue of the first window.
    EpsilonFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationStep {
    pub step: usize,
    pub alarms: bool,
    pub messages: usize,
    pub exact_alarm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub steps: Vec<SimulationStep>,
    pub delta: f64,
    pub total_messages: usize,
    pub message_ratio: f64,
    pub agreement: f64,
}

/// Runs monitors and coordinator in lockstep beside a centralized reference
/// on the exact data. `streams` is time × monitor.
pub fn simulate(streams: &DMatrix<f64>, window_len: usize, k: usize, policy: DeltaPolicy, alpha: f64) -> Result<SimulationReport> {
    let (t, n) = streams.shape();
    if t == 0 {
        return Err(Error::Insufficient("no samples to simulate".into()));
    }
    let delta = match policy {
        DeltaPolicy::Fixed(d) => d,
        DeltaPolicy::EpsilonFraction(frac) => {
            let w = window_len.min(t);
            let head = streams.rows(0, w).into_owned();
            let mut x = head.clone();
            for mut c in x.column_iter_mut() {
                let mu = c.mean();
                c.apply(|v| *v -= mu);
            }
            let lam = fit_pca(&x)?.variances().mean();
            if lam <= 0.0 {
                0.0
            } else {
                delta_from_epsilon(lam, window_len, n, frac * lam)?.1
            }
        }
    };
    let mut monitors = (0..n).map(|i| MonitorState::new(i, delta)).collect::<Result<Vec<_>>>()?;
    let mut coord = CoordinatorState::new(n, window_len, k, alpha)?;
    let mut steps = Vec::with_capacity(t);
    let mut total = 0;
    let mut agree = 0;
    let mut decided = 0;
    for s in 0..t {
        let msgs: Vec<UpdateMessage> = monitors.iter_mut().filter_map(|m| m.step(streams[(s, m.index)])).collect();
        total += msgs.len();
        let approx = coord.step(&msgs)?;
        let lo = (s + 1).saturating_sub(window_len);
        let exact = if s >= 1 {
            Some(window_decision(&streams.rows(lo, s + 1 - lo).into_owned(), k, alpha)?)
        } else {
            None
        };
        let alarm = approx.is_some_and(|d| d.alarm);
        let exact_alarm = exact.is_some_and(|d| d.alarm);
        if approx.is_some() {
            decided += 1;
            agree += usize::from(alarm == exact_alarm);
        }
        steps.push(SimulationStep { step: s, alarms: alarm, messages: msgs.len(), exact_alarm });
    }
    Ok(SimulationReport {
        steps,
        delta,
        total_messages: total,
        message_ratio: total as f64 / (t * n) as f64,
        agreement: if decided == 0 { 1.0 } else { agree as f64 / decided as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn monitor_examples() {
        let mut m = MonitorState::new(0, 0.0).unwrap();
        assert!((0..5).all(|i| m.step(i as f64 * 0.0 + 1.0).is_some()));

        let mut m = MonitorState::new(0, 1.0).unwrap();
        let sent: usize = (0..10).filter(|_| m.step(4.0).is_some()).count();
        assert_eq!(sent, 1);

        // step-through: prediction p, send when |t − p| > 2.5
        let mut m = MonitorState::new(0, 2.5).unwrap();
        let sent: Vec<usize> = (0..12).filter(|&t| m.step(t as f64).is_some()).collect();
        let mut oracle = Vec::new();
        let mut p: Option<f64> = None;
        for t in 0..12 {
            if p.is_none_or(|p| (t as f64 - p).abs() > 2.5) {
                oracle.push(t);
                p = Some(t as f64);
            }
        }
        assert_eq!(sent, vec![0, 3, 6, 9]);
        assert_eq!(sent, oracle);
        assert!(MonitorState::new(0, -1.0).is_err());
    }

    #[test]
    fn delta_examples() {
        let (s, d) = delta_from_epsilon(1.0, 100, 10, 0.1).unwrap();
        assert_abs_diff_eq!(s, 0.22527, epsilon = 1e-4);
        assert_abs_diff_eq!(d, s * 3f64.sqrt(), epsilon = 1e-12);
        let (tiny, _) = delta_from_epsilon(1.0, 100, 10, 1e-12).unwrap();
        assert!(tiny < 1e-6);
        let mut prev = 0.0;
        for e in [0.01, 0.1, 0.5, 1.0, 5.0] {
            let (s, _) = delta_from_epsilon(2.0, 50, 8, e).unwrap();
            assert!(s > prev);
            prev = s;
        }
    }

    fn diurnal(t: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.2).unwrap();
        DMatrix::from_fn(t, n, |i, j| {
            let ph = 2.0 * std::f64::consts::PI * i as f64 / 96.0;
            10.0 * (1.0 + j as f64 * 0.1) * (1.0 + 0.5 * (ph + j as f64 * 0.05).sin()) + noise.sample(&mut rng)
        })
    }

    #[test]
    fn zero_delta_is_exact() {
        let s = diurnal(150, 5, 1);
        let r = simulate(&s, 40, 2, DeltaPolicy::Fixed(0.0), 0.05).unwrap();
        assert_eq!(r.message_ratio, 1.0);
        assert_eq!(r.agreement, 1.0);
        assert!(r.steps.iter().all(|s| s.alarms == s.exact_alarm));
    }

    #[test]
    fn constant_streams_send_once() {
        let s = DMatrix::from_fn(30, 4, |_, j| j as f64);
        let r = simulate(&s, 10, 1, DeltaPolicy::Fixed(0.5), 0.05).unwrap();
        assert_eq!(r.total_messages, 4);
    }

    #[test]
    fn no_updates_keeps_predictions_and_rolls() {
        let mut c = CoordinatorState::new(3, 4, 1, 0.05).unwrap();
        let first = [0, 1, 2].map(|i| UpdateMessage { monitor: i, value: i as f64 });
        c.step(&first).unwrap();
        c.step(&[]).unwrap();
        assert_eq!(c.window_rows(), 2);
        let w = c.window_matrix();
        assert_eq!(w.row(0), w.row(1));
    }

    #[test]
    fn diurnal_filtering_saves_messages() {
        let s = diurnal(400, 6, 2);
        let r = simulate(&s, 96, 2, DeltaPolicy::EpsilonFraction(0.05), 0.05).unwrap();
        assert!(r.message_ratio < 0.5, "ratio {}", r.message_ratio);
    }

    #[test]
    fn spike_detected_near_centralized() {
        let mut s = diurnal(200, 6, 3);
        s[(150, 2)] += 30.0;
        let r = simulate(&s, 96, 1, DeltaPolicy::Fixed(0.05), 0.01).unwrap();
        assert!(r.steps[150].exact_alarm);
        assert!(r.steps[150..=151].iter().any(|s| s.alarms));
    }

    proptest! {
        #[test]
        fn window_error_bounded_by_delta(delta in 0.0f64..3.0, seed in 0u64..500) {
            let s = diurnal(60, 3, seed);
            let mut mons: Vec<MonitorState> = (0..3).map(|i| MonitorState::new(i, delta).unwrap()).collect();
            for t in 0..60 {
                for m in mons.iter_mut() {
                    m.step(s[(t, m.index)]);
                    prop_assert!((s[(t, m.index)] - m.prediction().unwrap()).abs() <= delta + 1e-12);
                    prop_assert!(m.error().abs() <= delta + 1e-12);
                }
            }
        }
    }
}
