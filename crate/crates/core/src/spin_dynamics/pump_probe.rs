use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::deer::{charge_branches, deer_readout};
use super::evolve::{evolve, EvolveOptions};
use super::register::{Axis, SpinRegister};
use super::sequence::{DeerReadout, Drive, DriveTarget, PulseSegment, PulseSequence, Step};
use crate::defect::NsDefect;
use crate::error::{Error, Result};
use crate::par::Parallelism;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolarizationSnapshot {
    pub axis: Option<Axis>,
    pub p_probe: f64,
    pub p_dark: Vec<f64>,
}

/// Differential (+X minus −X, halved) observables of one pump-probe run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PumpProbeRecord {
    /// Probe and dark polarizations at the last snapshot step.
    pub p_probe: f64,
    pub p_dark: Vec<f64>,
    pub s_pi2: f64,
    pub s0: f64,
    pub snapshots: Vec<PolarizationSnapshot>,
}

/// Parameters of the spin-lock pump-probe sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PumpProbeProtocol {
    /// Hartmann–Hahn lock Rabi frequency Ω, Hz.
    pub rabi_hz: f64,
    pub tau_sl: f64,
    pub laser_power_w: f64,
    pub repolarization_s: f64,
    pub delay_s: f64,
    pub tau_p: f64,
    /// Probe Rabi during readout, as a multiple of Ω.
    pub readout_probe_factor: f64,
    pub secular_lock: bool,
}

impl Default for PumpProbeProtocol {
    fn default() -> Self {
        PumpProbeProtocol {
            rabi_hz: 400e3,
            tau_sl: 5e-6,
            laser_power_w: 1e-3,
            repolarization_s: 3e-6,
            delay_s: 0.0,
            tau_p: 2.5e-6,
            readout_probe_factor: 2.0,
            secular_lock: true,
        }
    }
}

impl PumpProbeProtocol {
    pub fn sequence(&self, n_dark: usize) -> PulseSequence {
        let omega = self.rabi_hz;
        let mut all = vec![DriveTarget::Probe];
        all.extend((0..n_dark).map(DriveTarget::DarkSpin));
        let lock: Vec<Drive> = std::iter::once(Drive::probe(omega, FRAC_PI_2))
            .chain((0..n_dark).map(|k| Drive::dark(k, omega, FRAC_PI_2)))
            .collect();

        let mut seq = PulseSequence::default();
        seq.push(Step::Signed {
            segment: PulseSegment::rotation(&[DriveTarget::Probe], omega, PI, FRAC_PI_2),
        })
        .push(Step::Segment {
            segment: PulseSegment::Microwave {
                drives: lock,
                duration_s: self.tau_sl,
                secular: self.secular_lock,
            },
        })
        .push(Step::Snapshot { axis: Axis::Y })
        .push(Step::Segment {
            segment: PulseSegment::rotation(&all, omega, 0.0, FRAC_PI_2),
        });
        if self.repolarization_s > 0.0 {
            seq.push(Step::Segment {
                segment: PulseSegment::Laser {
                    power_w: self.laser_power_w,
                    duration_s: self.repolarization_s,
                },
            });
        }
        if self.delay_s > 0.0 {
            seq.push(Step::Segment {
                segment: PulseSegment::delay(self.delay_s),
            });
        }
        seq.push(Step::Readout {
            readout: DeerReadout {
                tau_p: self.tau_p,
                probe_rabi_hz: self.readout_probe_factor * omega,
                dark_rabi_hz: omega,
            },
        });
        seq
    }
}

struct BranchOutput {
    snapshots: Vec<PolarizationSnapshot>,
    s0: f64,
    s_pi2: f64,
}

fn run_branch(
    sequence: &PulseSequence,
    register: &SpinRegister,
    flipped: bool,
    options: &EvolveOptions,
) -> Result<BranchOutput> {
    let mut reg = register.clone();
    let mut out = BranchOutput {
        snapshots: Vec::new(),
        s0: 0.0,
        s_pi2: 0.0,
    };
    for step in &sequence.steps {
        match step {
            Step::Segment { segment } => evolve(&mut reg, segment, options)?,
            Step::Signed { segment } if flipped => evolve(&mut reg, &segment.phase_flipped(), options)?,
            Step::Signed { segment } => evolve(&mut reg, segment, options)?,
            Step::Snapshot { axis } => out.snapshots.push(PolarizationSnapshot {
                axis: Some(*axis),
                p_probe: reg.probe_polarization(*axis),
                p_dark: (0..reg.n_dark()).map(|k| reg.dark_polarization(k, *axis)).collect(),
            }),
            Step::Readout { readout } => {
                let s = deer_readout(&reg, readout, options)?;
                out.s0 = s.re;
                out.s_pi2 = s.im;
            }
        }
    }
    Ok(out)
}

/// Runs the ±X branches and returns half their difference.
pub fn run_pump_probe(
    sequence: &PulseSequence,
    register: &SpinRegister,
    options: &EvolveOptions,
    parallelism: Parallelism,
) -> Result<PumpProbeRecord> {
    sequence.validate()?;
    let mut runs = parallelism
        .map(&[false, true], |&flipped| run_branch(sequence, register, flipped, options))
        .into_iter();
    let plus = runs.next().unwrap()?;
    let minus = runs.next().unwrap()?;
    let snapshots: Vec<PolarizationSnapshot> = plus
        .snapshots
        .iter()
        .zip(&minus.snapshots)
        .map(|(a, b)| PolarizationSnapshot {
            axis: a.axis,
            p_probe: 0.5 * (a.p_probe - b.p_probe),
            p_dark: a.p_dark.iter().zip(&b.p_dark).map(|(x, y)| 0.5 * (x - y)).collect(),
        })
        .collect();
    let last = snapshots.last().cloned().unwrap_or_else(|| PolarizationSnapshot {
        axis: None,
        p_probe: 0.0,
        p_dark: vec![0.0; register.n_dark()],
    });
    Ok(PumpProbeRecord {
        p_probe: last.p_probe,
        p_dark: last.p_dark,
        s_pi2: 0.5 * (plus.s_pi2 - minus.s_pi2),
        s0: 0.5 * (plus.s0 - minus.s0),
        snapshots,
    })
}

/// Weighted average over charge branches of defects starting unpolarized.
pub fn run_pump_probe_mixture(
    sequence: &PulseSequence,
    defects: &[NsDefect],
    eta: f64,
    options: &EvolveOptions,
    parallelism: Parallelism,
) -> Result<PumpProbeRecord> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!("eta {eta} outside [0, 1]")));
    }
    for d in defects {
        d.validate()?;
    }
    let branches = charge_branches(eta, defects);
    let records = parallelism.map(&branches, |(sites, _)| -> Result<PumpProbeRecord> {
        let reg = SpinRegister::new(sites.clone(), 1.0, &vec![0.0; sites.len()])?;
        run_pump_probe(sequence, &reg, options, Parallelism::Sequential)
    });
    let mut total = PumpProbeRecord {
        p_dark: vec![0.0; defects.len()],
        ..PumpProbeRecord::default()
    };
    for ((_, w), rec) in branches.iter().zip(records) {
        let rec = rec?;
        total.p_probe += w * rec.p_probe;
        for (acc, p) in total.p_dark.iter_mut().zip(&rec.p_dark) {
            *acc += w * p;
        }
        total.s_pi2 += w * rec.s_pi2;
        total.s0 += w * rec.s0;
    }
    Ok(total)
}

/// Pump-probe record at each spin-lock duration.
pub fn scan_spin_lock(
    protocol: &PumpProbeProtocol,
    tau_sl: &[f64],
    register: &SpinRegister,
    options: &EvolveOptions,
    parallelism: Parallelism,
) -> Result<Vec<PumpProbeRecord>> {
    parallelism
        .map(tau_sl, |&t| {
            let p = PumpProbeProtocol { tau_sl: t, ..*protocol };
            run_pump_probe(&p.sequence(register.n_dark()), register, options, Parallelism::Sequential)
        })
        .into_iter()
        .collect()
}
