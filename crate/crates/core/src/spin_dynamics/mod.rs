//! Dense density-matrix simulation of the probe and up to three dark spins.
//!
//! Hamiltonians are expressed in Hz in the rotating frame of each tone.

pub mod deer;
pub mod evolve;
pub mod hamiltonian;
pub mod operators;
pub mod pump_probe;
pub mod register;
pub mod sequence;

pub use deer::{deer_readout, simulate_deer, DeerSimOptions};
pub use evolve::{evolve, laser_repolarize, EvolveOptions, RepolarizationCurve};
pub use hamiltonian::build_hamiltonian;
pub use pump_probe::{run_pump_probe, run_pump_probe_mixture, scan_spin_lock, PumpProbeProtocol, PumpProbeRecord};
pub use register::{Axis, DarkSite, SiteCharge, SpinRegister};
pub use sequence::{DeerReadout, Drive, DriveTarget, PulseSegment, PulseSequence, Step};
