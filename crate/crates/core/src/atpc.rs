//! Adaptive transmission power control.
//!
//! Each node models its packet delivery ratio as a line in transmit power,
//! l(tp) = a·tp + b, fitted once by least squares over probe bursts.  The
//! slope is then held fixed while the intercept follows the measured PDR:
//! b̂(t) = b̂(t−1) − (threshold − l̄(t−1)).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Selectable transmit powers in dBm, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerVector {
    levels: Vec<f64>,
}

impl PowerVector {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::invalid("power vector needs at least two levels"));
        }
        if levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("power levels must be strictly increasing"));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn min(&self) -> f64 {
        self.levels[0]
    }

    pub fn max(&self) -> f64 {
        *self.levels.last().unwrap()
    }

    /// Element nearest to `tp`; values outside the range clamp to the ends.
    pub fn nearest(&self, tp: f64) -> f64 {
        if tp <= self.min() {
            return self.min();
        }
        if tp >= self.max() {
            return self.max();
        }
        *self.levels.iter().min_by(|a, b| (*a - tp).abs().total_cmp(&(*b - tp).abs())).unwrap()
    }
}

impl Default for PowerVector {
    /// Integer levels 0…15 dBm.
    fn default() -> Self {
        Self { levels: (0..=15).map(f64::from).collect() }
    }
}

/// (tp, pdr) observations plus the number of readings per feedback period.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PdrSamples {
    pub pairs: Vec<(f64, f64)>,
    pub window: usize,
}

impl PdrSamples {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(&(_, l)) = pairs.iter().find(|(_, l)| !(0.0..=1.0).contains(l)) {
            return Err(Error::invalid(format!("pdr {l} outside [0,1]")));
        }
        let window = pairs.len();
        Ok(Self { pairs, window })
    }

    pub fn mean_pdr(&self) -> Option<f64> {
        if self.pairs.is_empty() {
            None
        } else {
            Some(self.pairs.iter().map(|p| p.1).sum::<f64>() / self.pairs.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtpcModel {
    pub a_hat: f64,
    pub b_hat: f64,
    pub pdr_threshold: f64,
}

/// Closed-form least squares over the samples.
pub fn fit_initial(samples: &PdrSamples, pdr_threshold: f64) -> Result<AtpcModel> {
    if !(pdr_threshold > 0.0 && pdr_threshold <= 1.0) {
        return Err(Error::invalid(format!("pdr threshold {pdr_threshold} outside (0,1]")));
    }
    let m = samples.pairs.len() as f64;
    let (mut st, mut sl, mut stt, mut slt) = (0.0, 0.0, 0.0, 0.0);
    for &(tp, l) in &samples.pairs {
        st += tp;
        sl += l;
        stt += tp * tp;
        slt += l * tp;
    }
    let den = m * stt - st * st;
    let scale = (m * stt).abs().max(1.0);
    if samples.pairs.len() < 2 || den.abs() <= 1e-12 * scale {
        return Err(Error::SingularFit);
    }
    Ok(AtpcModel { a_hat: (m * slt - sl * st) / den, b_hat: (sl * stt - slt * st) / den, pdr_threshold })
}

/// tp = [(threshold − b̂)/â] rounded to the nearest level of `tp_vector`.
pub fn select_power(model: &AtpcModel, tp_vector: &PowerVector) -> Result<f64> {
    if model.a_hat == 0.0 || !model.a_hat.is_finite() {
        return Err(Error::ZeroSlope);
    }
    let raw = (model.pdr_threshold - model.b_hat) / model.a_hat;
    Ok(tp_vector.nearest(raw))
}

/// b̂(t) = b̂(t−1) − Δb̂ with Δb̂ = threshold − mean of the window.
pub fn update_intercept(model: &AtpcModel, readings: &PdrSamples) -> Result<AtpcModel> {
    let mean = readings.mean_pdr().ok_or(Error::Empty("pdr window"))?;
    let delta = model.pdr_threshold - mean;
    Ok(AtpcModel { b_hat: model.b_hat - delta, ..*model })
}

/// clamp(â·tp + b̂, 0, 1).
pub fn predict_pdr(model: &AtpcModel, tp: f64) -> f64 {
    (model.a_hat * tp + model.b_hat).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let s = PdrSamples::new((0..16).map(|t| (t as f64, 0.05 * t as f64 + 0.2)).collect()).unwrap();
        let m = fit_initial(&s, 0.9).unwrap();
        assert!((m.a_hat - 0.05).abs() < 1e-12);
        assert!((m.b_hat - 0.2).abs() < 1e-12);
        assert_eq!(select_power(&m, &PowerVector::default()).unwrap(), 14.0);
        assert!((predict_pdr(&m, 14.0) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn flat_data_has_zero_slope() {
        let s = PdrSamples::new((0..16).map(|t| (t as f64, 0.9)).collect()).unwrap();
        let m = fit_initial(&s, 0.9).unwrap();
        assert!(m.a_hat.abs() < 1e-12);
        assert!((m.b_hat - 0.9).abs() < 1e-12);
        let m = AtpcModel { a_hat: 0.0, ..m };
        assert_eq!(select_power(&m, &PowerVector::default()), Err(Error::ZeroSlope));
    }

    #[test]
    fn single_level_is_singular() {
        let s = PdrSamples::new(vec![(5.0, 0.5), (5.0, 0.7)]).unwrap();
        assert_eq!(fit_initial(&s, 0.9), Err(Error::SingularFit));
    }

    #[test]
    fn clamping() {
        let m = AtpcModel { a_hat: 0.05, b_hat: 0.9, pdr_threshold: 0.9 };
        assert_eq!(select_power(&m, &PowerVector::default()).unwrap(), 0.0);
        let m = AtpcModel { a_hat: 0.01, b_hat: 0.5, pdr_threshold: 0.9 };
        assert_eq!(select_power(&m, &PowerVector::default()).unwrap(), 15.0);
        assert_eq!(predict_pdr(&AtpcModel { a_hat: 0.1, b_hat: 0.5, pdr_threshold: 0.9 }, 14.0), 1.0);
    }

    #[test]
    fn intercept_update() {
        let m = AtpcModel { a_hat: 0.05, b_hat: 0.2, pdr_threshold: 0.9 };
        let w = PdrSamples::new(vec![(14.0, 0.8); 5]).unwrap();
        let n = update_intercept(&m, &w).unwrap();
        assert!((n.b_hat - 0.1).abs() < 1e-12);
        assert_eq!(n.a_hat, m.a_hat);
        let at = PdrSamples::new(vec![(14.0, 0.9); 5]).unwrap();
        let f = update_intercept(&m, &at).unwrap();
        assert_eq!(f, m);
        assert_eq!(update_intercept(&f, &at).unwrap(), m);
        assert_eq!(update_intercept(&m, &PdrSamples::default()), Err(Error::Empty("pdr window")));
    }
}
