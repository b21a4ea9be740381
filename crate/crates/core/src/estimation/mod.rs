//! Channel-state and carrier-offset estimation from the known preamble.

mod cfo;
mod csi;
mod snr_loss;

pub use cfo::{
    estimate_cfo_coarse, estimate_cfo_fine, ppm_and_subcarrier_cfo, proactive_correction, CfoEstimate, PreambleSplit,
};
pub use csi::{estimate_csi, estimate_csi_from_bits, CsiEstimate};
pub use snr_loss::{measure_snr_loss, snr_loss_factor, SnrLossMeasurement};
