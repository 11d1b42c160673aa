//! One-step-ahead forecasting models, applied bucket-wise to sketches or to
//! plain series.

use nalgebra::{DMatrix, DVector};

use super::KarySketch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ForecastModel {
    /// Equal weights over the last `w` samples.
    Ma { w: usize },
    /// Weight 1 on the recent half of the window, decaying linearly over the
    /// older half.
    Sma { w: usize },
    Ewma { alpha: f64 },
    /// Non-seasonal Holt-Winters.
    Nshw { alpha: f64, beta: f64 },
    /// Box-Jenkins ARIMA(p, d, q) with `d ∈ {0, 1}`:
    /// `Z_t = Σ ar_j Z_{t−j} + e_t − Σ ma_i e_{t−i}`.
    Arima { d: usize, ar: Vec<f64>, ma: Vec<f64> },
}

impl ForecastModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ma { .. } => "MA",
            Self::Sma { .. } => "SMA",
            Self::Ewma { .. } => "EWMA",
            Self::Nshw { .. } => "NSHW",
            Self::Arima { d: 0, .. } => "ARIMA0",
            Self::Arima { .. } => "ARIMA1",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in [0,1], got {v}")))
            }
        };
        match self {
            Self::Ma { w } | Self::Sma { w } if *w == 0 => Err(Error::config("window W must be at least 1")),
            Self::Ma { .. } | Self::Sma { .. } => Ok(()),
            Self::Ewma { alpha } => unit("alpha", *alpha),
            Self::Nshw { alpha, beta } => unit("alpha", *alpha).and_then(|_| unit("beta", *beta)),
            Self::Arima { d, ar, ma } => {
                if *d > 1 {
                    return Err(Error::config("ARIMA differencing order must be 0 or 1"));
                }
                if ar.len() > 2 || ma.len() > 2 {
                    return Err(Error::config("ARIMA orders p and q are limited to 2"));
                }
                if let Some(c) = ar.iter().chain(ma).find(|c| !(-2.0..=2.0).contains(*c)) {
                    return Err(Error::config(format!("ARIMA coefficient {c} outside [-2, 2]")));
                }
                Ok(())
            }
        }
    }

    /// History length needed before the first forecast.
    pub fn warm_up(&self) -> usize {
        match self {
            Self::Ma { w } | Self::Sma { w } => *w,
            Self::Ewma { .. } => 1,
            // the trend is initialized from the first two observations
            Self::Nshw { .. } => 2,
            Self::Arima { d, ar, ma } => (ar.len() + d + ma.len()).max(1),
        }
    }

    fn sma_weights(w: usize) -> Vec<f64> {
        let half = w.div_ceil(2);
        let older = w - half;
        (1..=w)
            .map(|lag| {
                if lag <= half {
                    1.0
                } else {
                    let r = (lag - half) as f64;
                    1.0 - r * (1.0 - 1.0 / half as f64) / older as f64
                }
            })
            .collect()
    }
}

/// Forecasts for every time step: entry `t` predicts `obs[t]` from
/// `obs[..t]`; the extra last entry predicts the next unseen step. Entries
/// inside the warm-up are `None`.
pub fn one_step_forecasts(model: &ForecastModel, obs: &[DVector<f64>]) -> Result<Vec<Option<DVector<f64>>>> {
    model.validate()?;
    let n = obs.len();
    if let Some(first) = obs.first() {
        if obs.iter().any(|o| o.len() != first.len()) {
            return Err(Error::contract("observations differ in length"));
        }
    }
    let mut out: Vec<Option<DVector<f64>>> = vec![None; n + 1];
    match model {
        ForecastModel::Ma { w } => {
            for t in *w..=n {
                let s = obs[t - w..t].iter().fold(DVector::zeros(obs[0].len()), |a, o| a + o);
                out[t] = Some(s / *w as f64);
            }
        }
        ForecastModel::Sma { w } => {
            let wts = ForecastModel::sma_weights(*w);
            let norm: f64 = wts.iter().sum();
            for t in *w..=n {
                let mut s = DVector::zeros(obs[0].len());
                for (lag, wt) in wts.iter().enumerate() {
                    s += &obs[t - 1 - lag] * *wt;
                }
                out[t] = Some(s / norm);
            }
        }
        ForecastModel::Ewma { alpha } => {
            for t in 1..=n {
                out[t] = Some(match &out[t - 1] {
                    None => obs[0].clone(),
                    Some(prev) => &obs[t - 1] * *alpha + prev * (1.0 - alpha),
                });
            }
        }
        ForecastModel::Nshw { alpha, beta } => {
            if n >= 2 {
                let mut smooth = obs[0].clone();
                let mut trend = &obs[1] - &obs[0];
                let mut fc = &smooth + &trend;
                for t in 2..=n {
                    let s_new = &obs[t - 1] * *alpha + &fc * (1.0 - alpha);
                    trend = (&s_new - &smooth) * *beta + &trend * (1.0 - beta);
                    smooth = s_new;
                    fc = &smooth + &trend;
                    out[t] = Some(fc.clone());
                }
            }
        }
        ForecastModel::Arima { d, ar, ma } => {
            let warm = model.warm_up();
            let z: Vec<DVector<f64>> = if *d == 0 {
                obs.to_vec()
            } else {
                obs.windows(2).map(|w| &w[1] - &w[0]).collect()
            };
            let dim = obs.first().map_or(0, |o| o.len());
            let mut err: Vec<DVector<f64>> = Vec::with_capacity(z.len());
            for u in 0..=z.len() {
                let t = u + d;
                let zhat = if u >= ar.len() && t >= warm {
                    let mut zh = DVector::zeros(dim);
                    for (j, c) in ar.iter().enumerate() {
                        zh += &z[u - 1 - j] * *c;
                    }
                    for (i, c) in ma.iter().enumerate() {
                        if let Some(e) = u.checked_sub(1 + i).map(|v| &err[v]) {
                            zh -= e * *c;
                        }
                    }
                    Some(zh)
                } else {
                    None
                };
                if let Some(zh) = &zhat {
                    out[t] = Some(if *d == 1 { zh + &obs[t - 1] } else { zh.clone() });
                }
                if u < z.len() {
                    // before the first forecast the prediction is taken as 0
                    err.push(zhat.map_or_else(|| z[u].clone(), |zh| &z[u] - zh));
                }
            }
        }
    }
    Ok(out)
}

/// Scalar convenience wrapper around [`one_step_forecasts`].
pub fn forecast_series(model: &ForecastModel, series: &[f64]) -> Result<Vec<Option<f64>>> {
    let obs: Vec<DVector<f64>> = series.iter().map(|&v| DVector::from_element(1, v)).collect();
    Ok(one_step_forecasts(model, &obs)?.into_iter().map(|f| f.map(|v| v[0])).collect())
}

/// Forecast sketch for the step after `history`.
pub fn forecast(model: &ForecastModel, history: &[KarySketch]) -> Result<KarySketch> {
    let Some(first) = history.first() else {
        return Err(Error::Insufficient(format!("{} needs at least {} sketches of history", model.name(), model.warm_up())));
    };
    for s in history {
        first.check_compatible(s)?;
    }
    if history.len() < model.warm_up() {
        return Err(Error::Insufficient(format!(
            "{} needs at least {} sketches of history, got {}",
            model.name(),
            model.warm_up(),
            history.len()
        )));
    }
    let obs: Vec<DVector<f64>> = history.iter().map(|s| DVector::from_column_slice(s.table().as_slice())).collect();
    let fc = one_step_forecasts(model, &obs)?
        .pop()
        .flatten()
        .ok_or_else(|| Error::Insufficient(format!("{} warm-up not reached", model.name())))?;
    first.with_table(DMatrix::from_column_slice(first.h(), first.k(), fc.as_slice()))
}
