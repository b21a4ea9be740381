//! Node CSMA/CA, the BS dual-radio bookkeeping, join and downlink failover.

mod bs;
mod join;
mod node;

pub use bs::{bs_ack_epoch, downlink_failover, short_id, AckBitVector, AckEpoch, BsState, NoiseReport};
pub use join::{join, join_preamble_stream, JoinRequest, JoinResult, JOIN_BLOCK_LEN, JOIN_LONG_BITS, JOIN_SHORT_BITS};
pub use node::{node_step, MacAction, MacConfig, MacEvent, NodeMacState, NodeMode, SimTime};
