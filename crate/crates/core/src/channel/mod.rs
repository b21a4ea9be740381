//! Propagation and impairment models between nodes and the BS.

mod link;
mod mobility;

pub use link::{
    apply_cfo, apply_link, awgn, dbm_to_mw, mix_concurrent, mw_to_dbm, noise_psd_from_dbm_hz, path_loss_db,
    rayleigh_gain, rssi_dbm, LinkModel, OscillatorModel, PathLossModel,
};
pub use mobility::{doppler_shift_hz, MobilityState, SPEED_OF_LIGHT};
