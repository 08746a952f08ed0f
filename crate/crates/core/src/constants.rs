//! Physical constants (CODATA 2018) and unit helpers.
//!
//! Every frequency in this crate is stored in Hz (cycles per second). The
//! conversion to angular frequency happens only where a phase is formed.

use std::f64::consts::PI;

/// Vacuum permeability, N/A².
pub const MU_0: f64 = 1.256_637_062_12e-6;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Free-electron gyromagnetic ratio, rad/(s·T). Used for both probe and dark spins.
pub const GAMMA_ELECTRON: f64 = 1.760_859_630_23e11;
/// Atomic number density of diamond, atoms/nm³.
pub const DIAMOND_ATOM_DENSITY_NM3: f64 = 176.3;

/// Secular electron-electron dipolar prefactor μ₀γₑ²ħ/(4π), in Hz·nm³.
///
/// The angular-frequency prefactor is divided by 2π so couplings come out in
/// cycles per second.
pub fn dipolar_prefactor_hz_nm3() -> f64 {
    MU_0 / (4.0 * PI) * GAMMA_ELECTRON * GAMMA_ELECTRON * HBAR / (2.0 * PI) * 1e27
}

pub const KHZ: f64 = 1e3;
pub const MICROSECOND: f64 = 1e-6;
pub const MICROWATT: f64 = 1e-6;
pub const MILLIWATT: f64 = 1e-3;
/// Square ångström in m².
pub const ANGSTROM2: f64 = 1e-20;
