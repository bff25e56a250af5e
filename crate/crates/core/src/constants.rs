//! CODATA 2018 physical constants in SI units.

use serde::Serialize;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Angular frequency (rad/s) of a photon with energy 1 eV.
pub const EV_TO_RAD_PER_S: f64 = ELEMENTARY_CHARGE / HBAR;

pub const NM: f64 = 1e-9;
pub const UM: f64 = 1e-6;
pub const MV: f64 = 1e-3;

/// The constant set used throughout the crate. Not configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub c: f64,
    pub k_b: f64,
    pub eps0: f64,
    pub ev_to_rad_per_s: f64,
}

pub const CODATA: PhysicalConstants = PhysicalConstants {
    hbar: HBAR,
    c: SPEED_OF_LIGHT,
    k_b: BOLTZMANN,
    eps0: VACUUM_PERMITTIVITY,
    ev_to_rad_per_s: EV_TO_RAD_PER_S,
};

#[inline]
pub fn ev_to_rad_per_s(ev: f64) -> f64 {
    ev * EV_TO_RAD_PER_S
}

#[inline]
pub fn rad_per_s_to_ev(omega: f64) -> f64 {
    omega / EV_TO_RAD_PER_S
}
