use crate::error::{Error, Result};

use super::signal::BasebandSignal;

#[derive(Debug, Clone, PartialEq)]
pub struct PaprReport {
    pub papr_db: f64,
    pub peak_power: f64,
    pub avg_power: f64,
    /// (threshold_db, P[PAPR > threshold]) pairs in increasing threshold order.
    pub ccdf: Vec<(f64, f64)>,
    pub hpa_efficiency: f64,
}

/// 10·log10(max|x|² / mean|x|²).
pub fn compute_papr(signal: &BasebandSignal) -> Result<PaprReport> {
    signal.require_non_empty("signal")?;
    let avg = signal.avg_power();
    if avg <= 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let peak = signal.peak_power();
    let papr_db = (10.0 * (peak / avg).log10()).max(0.0);
    Ok(PaprReport {
        papr_db,
        peak_power: peak,
        avg_power: avg,
        ccdf: Vec::new(),
        hpa_efficiency: hpa_efficiency(papr_db),
    })
}

/// Default CCDF grid: 0 to 20 dB in 0.1 dB steps.
pub fn default_grid() -> Vec<f64> {
    (0..=200).map(|i| i as f64 * 0.1).collect()
}

/// Empirical P[PAPR > threshold] for each threshold of `grid`, from
/// precomputed per-frame PAPR values.
pub fn ccdf_from_values(papr_db: &[f64], grid: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = papr_db.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len().max(1) as f64;
    grid.iter()
        .map(|&t| {
            let below = sorted.partition_point(|&v| v <= t);
            (t, (sorted.len() - below) as f64 / n)
        })
        .collect()
}

/// Smallest observed PAPR level whose exceed-probability is at most `prob`.
pub fn ccdf_quantile(papr_db: &[f64], prob: f64) -> Option<f64> {
    if papr_db.is_empty() {
        return None;
    }
    let mut sorted = papr_db.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let allowed = (prob * n as f64).floor() as usize;
    Some(sorted[n - 1 - allowed.min(n - 1)])
}

/// PAPR of every frame, then the empirical CCDF over `grid`.  The scalar
/// fields describe the worst frame; `avg_power` is the mean over frames.
pub fn papr_ccdf(frames: &[BasebandSignal], grid: &[f64]) -> Result<PaprReport> {
    if frames.is_empty() {
        return Err(Error::Empty("frames"));
    }
    let reports = frames.iter().map(compute_papr).collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = reports.iter().map(|r| r.papr_db).collect();
    let worst = reports.iter().max_by(|a, b| a.papr_db.total_cmp(&b.papr_db)).unwrap();
    Ok(PaprReport {
        papr_db: worst.papr_db,
        peak_power: worst.peak_power,
        avg_power: reports.iter().map(|r| r.avg_power).sum::<f64>() / reports.len() as f64,
        ccdf: ccdf_from_values(&values, grid),
        hpa_efficiency: worst.hpa_efficiency,
    })
}

/// Class-A amplifier efficiency 0.5/r with the back-off r set to the PAPR.
pub fn hpa_efficiency(papr_db: f64) -> f64 {
    0.5 / 10f64.powf(papr_db / 10.0)
}
