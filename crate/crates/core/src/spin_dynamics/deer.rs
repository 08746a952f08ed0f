use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::evolve::{evolve, EvolveOptions};
use super::register::{Axis, DarkSite, SiteCharge, SpinRegister, MAX_DARK_SPINS};
use super::sequence::{DeerReadout, Drive, DriveTarget, PulseSegment};
use crate::coherence::background_decay;
use crate::defect::{NsDefect, ProbeSpin};
use crate::error::{Error, Result};
use crate::par::Parallelism;

/// Segments of a probe π pulse and a dark π pulse sharing a common centre.
pub fn centered_pi_pulses(readout: &DeerReadout, dark_targets: &[usize]) -> Vec<PulseSegment> {
    let t_probe = 0.5 / readout.probe_rabi_hz;
    let t_dark = 0.5 / readout.dark_rabi_hz;
    let probe = Drive::probe(readout.probe_rabi_hz, 0.0);
    let darks: Vec<Drive> = dark_targets
        .iter()
        .map(|&k| Drive::dark(k, readout.dark_rabi_hz, 0.0))
        .collect();
    let both: Vec<Drive> = std::iter::once(probe).chain(darks.iter().copied()).collect();
    let (outer, outer_drives) = if t_probe <= t_dark {
        (0.5 * (t_dark - t_probe), darks)
    } else {
        (0.5 * (t_probe - t_dark), vec![probe])
    };
    let mut segs = Vec::with_capacity(3);
    if outer > 0.0 {
        segs.push(PulseSegment::microwave(outer_drives.clone(), outer));
    }
    segs.push(PulseSegment::microwave(both, t_probe.min(t_dark)));
    if outer > 0.0 {
        segs.push(PulseSegment::microwave(outer_drives, outer));
    }
    segs
}

/// Probe ⟨σz⟩ after the echo sequence with the final π/2 at `final_phase`.
fn echo(register: &SpinRegister, readout: &DeerReadout, final_phase: f64, options: &EvolveOptions) -> Result<f64> {
    let mut reg = register.clone();
    let targets: Vec<usize> = (0..reg.n_dark()).collect();
    let half = PulseSegment::rotation(&[DriveTarget::Probe], readout.probe_rabi_hz, 0.0, FRAC_PI_2);
    evolve(&mut reg, &half, options)?;
    evolve(&mut reg, &PulseSegment::delay(0.5 * readout.tau_p), options)?;
    for seg in centered_pi_pulses(readout, &targets) {
        evolve(&mut reg, &seg, options)?;
    }
    evolve(&mut reg, &PulseSegment::delay(0.5 * readout.tau_p), options)?;
    let close = PulseSegment::rotation(&[DriveTarget::Probe], readout.probe_rabi_hz, final_phase, FRAC_PI_2);
    evolve(&mut reg, &close, options)?;
    Ok(reg.probe_polarization(Axis::Z))
}

/// In-phase (S₀) and out-of-phase (S_{π/2}) DEER signal of a register.
pub fn deer_readout(register: &SpinRegister, readout: &DeerReadout, options: &EvolveOptions) -> Result<Complex64> {
    let s0 = echo(register, readout, 0.0, options)?;
    let s_pi2 = echo(register, readout, -FRAC_PI_2, options)?;
    Ok(Complex64::new(s0, s_pi2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeerSimOptions {
    pub probe_rabi_hz: f64,
    pub dark_rabi_hz: f64,
    pub evolve: EvolveOptions,
}

impl Default for DeerSimOptions {
    /// Effectively instantaneous pulses.
    fn default() -> Self {
        DeerSimOptions {
            probe_rabi_hz: 1e14,
            dark_rabi_hz: 1e14,
            evolve: EvolveOptions::default(),
        }
    }
}

/// Charge/addressing branches with their classical weights.
pub fn charge_branches(eta: f64, defects: &[NsDefect]) -> Vec<(Vec<DarkSite>, f64)> {
    let mut branches = vec![(Vec::new(), 1.0)];
    for d in defects {
        let options = [
            (SiteCharge::Neutral { addressed: true }, eta * d.rho),
            (SiteCharge::Neutral { addressed: false }, (1.0 - eta) * d.rho),
            (SiteCharge::Ionized, 1.0 - d.rho),
        ];
        let mut next = Vec::with_capacity(branches.len() * 3);
        for (sites, w) in &branches {
            for (charge, wc) in options {
                if wc == 0.0 {
                    continue;
                }
                let mut s: Vec<DarkSite> = sites.clone();
                s.push(DarkSite {
                    coupling_hz: d.a_dipolar,
                    stark_hz: d.d_stark,
                    charge,
                });
                next.push((s, w * wc));
            }
        }
        branches = next;
    }
    branches
}

/// Brute-force DEER signal: every charge branch simulated and weighted, then
/// multiplied by the background decay.
pub fn simulate_deer(
    tau: &[f64],
    probe: &ProbeSpin,
    eta: f64,
    defects: &[(NsDefect, f64)],
    options: &DeerSimOptions,
    parallelism: Parallelism,
) -> Result<Vec<Complex64>> {
    if defects.is_empty() || defects.len() > MAX_DARK_SPINS {
        return Err(Error::Capacity(format!(
            "simulation supports 1 to {MAX_DARK_SPINS} dark spins, got {}",
            defects.len()
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!("eta {eta} outside [0, 1]")));
    }
    probe.validate()?;
    for (d, p) in defects {
        d.validate()?;
        if !(-1.0..=1.0).contains(p) {
            return Err(Error::domain(format!("polarization {p} outside [-1, 1]")));
        }
    }
    let bare: Vec<NsDefect> = defects.iter().map(|(d, _)| d.clone()).collect();
    let pols: Vec<f64> = defects.iter().map(|(_, p)| *p).collect();
    let branches = charge_branches(eta, &bare);
    let results = parallelism.map(tau, |&t| -> Result<Complex64> {
        let readout = DeerReadout {
            tau_p: t,
            probe_rabi_hz: options.probe_rabi_hz,
            dark_rabi_hz: options.dark_rabi_hz,
        };
        let mut total = Complex64::new(0.0, 0.0);
        for (sites, w) in &branches {
            let reg = SpinRegister::new(sites.clone(), 1.0, &pols)?;
            total += deer_readout(&reg, &readout, &options.evolve)? * *w;
        }
        Ok(total * background_decay(t, probe.gamma_bg, probe.stretch_n)?)
    });
    results.into_iter().collect()
}
