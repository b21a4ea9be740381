//! D-OFDM physical layer: framing, modulation, the BS FFT paths, frame
//! acquisition and PAPR analysis.

mod dofdm;
mod modulation;
pub mod packet;
mod papr;
mod receiver;
mod signal;
mod spectrum;
pub mod synth;

pub use dofdm::{channelize, dofdm_decode, dofdm_encode};
pub use modulation::{
    decide, demodulate, demodulate_with, modulate, symbol_statistics, DemodOptions, Demodulated, ModulationKind,
    ModulationScheme, ASK_LOW_LEVEL,
};
pub use packet::{crc16_ccitt_false, frame_bits, FrameError, SnowPacket, PREAMBLE, SYNC_WORD};
pub use papr::{ccdf_from_values, ccdf_quantile, compute_papr, default_grid, hpa_efficiency, papr_ccdf, PaprReport};
pub use receiver::{detect, receive, Detection, Receiver, RxConfig, RxOutcome};
pub use signal::{symbol_boundary, BasebandSignal};
pub use spectrum::{SpectrumPlan, SubcarrierId};
