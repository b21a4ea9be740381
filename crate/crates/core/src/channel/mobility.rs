use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Kinematics of a moving node during one packet.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MobilityState {
    pub velocity_mps: f64,
    /// Angle between the direction of travel and the line to the BS.  When
    /// absent it is approximated by δs/r.
    pub angle_theta_rad: Option<f64>,
    pub delta_s_m: f64,
    pub range_r_m: f64,
}

/// f_d = f·(v/c)·cos θ.
pub fn doppler_shift_hz(mob: &MobilityState, subcarrier_hz: f64) -> Result<f64> {
    if !(subcarrier_hz > 0.0) {
        return Err(Error::invalid("subcarrier frequency must be positive"));
    }
    let theta = match mob.angle_theta_rad {
        Some(t) => t,
        None => {
            if mob.range_r_m == 0.0 {
                return Err(Error::invalid("range r = 0 in the δs/r angle approximation"));
            }
            mob.delta_s_m / mob.range_r_m
        }
    };
    Ok(subcarrier_hz * mob.velocity_mps / SPEED_OF_LIGHT * theta.cos())
}
