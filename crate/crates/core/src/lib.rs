//! Signal-level simulator for SNOW, a white-space LPWAN in which one
//! wideband base station serves many narrowband nodes through distributed
//! OFDM.
//!
//! The crate is split the way the system is:
//!
//! * [`phy`]: packet framing, OOK/ASK/BPSK modulation, the BS IFFT/FFT
//!   paths, frame acquisition and PAPR analysis.
//! * [`channel`]: path loss, fading, noise, carrier offsets and Doppler.
//! * [`estimation`]: preamble-based channel and carrier-offset estimation.
//! * [`atpc`]: adaptive transmission power control for the near-far problem.
//! * [`mac`]: the node CSMA/CA machine, ACK bit-vectors and BS behaviour.
//! * [`sim`]: the discrete-event engine, energy model, metrics and the
//!   named experiment scenarios.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atpc;
pub mod channel;
mod error;
pub mod estimation;
pub mod mac;
pub mod phy;
pub mod sim;

pub use error::{Error, Result};

pub use atpc::{AtpcModel, PdrSamples, PowerVector};
pub use channel::{LinkModel, MobilityState, OscillatorModel, PathLossModel};
pub use estimation::{CfoEstimate, CsiEstimate, PreambleSplit};
pub use mac::{AckBitVector, BsState, NodeMacState};
pub use phy::{BasebandSignal, ModulationKind, ModulationScheme, PaprReport, SnowPacket, SpectrumPlan, SubcarrierId};
pub use sim::{EnergyProfile, Metrics, SimConfig};
