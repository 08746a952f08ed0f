use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::register::Axis;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveTarget {
    Probe,
    /// Tone resonant with dark spin `k` (when that spin is addressed).
    DarkSpin(usize),
}

/// One microwave tone, in the rotating frame of its carrier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub target: DriveTarget,
    #[serde(default)]
    pub detuning_hz: f64,
    /// Rabi frequency Ω, Hz: a π rotation takes 1/(2Ω).
    pub rabi_hz: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl Drive {
    pub fn probe(rabi_hz: f64, phase_rad: f64) -> Self {
        Drive {
            target: DriveTarget::Probe,
            detuning_hz: 0.0,
            rabi_hz,
            phase_rad,
        }
    }

    pub fn dark(k: usize, rabi_hz: f64, phase_rad: f64) -> Self {
        Drive {
            target: DriveTarget::DarkSpin(k),
            detuning_hz: 0.0,
            rabi_hz,
            phase_rad,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PulseSegment {
    Laser {
        power_w: f64,
        duration_s: f64,
    },
    Microwave {
        drives: Vec<Drive>,
        duration_s: f64,
        /// Evolve under the part of the coupling that commutes with the
        /// drives (dressed-frame secular approximation).
        #[serde(default)]
        secular: bool,
    },
    Delay {
        duration_s: f64,
    },
}

impl PulseSegment {
    pub fn duration(&self) -> f64 {
        match self {
            PulseSegment::Laser { duration_s, .. }
            | PulseSegment::Microwave { duration_s, .. }
            | PulseSegment::Delay { duration_s } => *duration_s,
        }
    }

    pub fn delay(duration_s: f64) -> Self {
        PulseSegment::Delay { duration_s }
    }

    pub fn microwave(drives: Vec<Drive>, duration_s: f64) -> Self {
        PulseSegment::Microwave {
            drives,
            duration_s,
            secular: false,
        }
    }

    /// Rotation by `angle` about the in-plane axis at `phase` on the listed targets.
    pub fn rotation(targets: &[DriveTarget], rabi_hz: f64, phase_rad: f64, angle: f64) -> Self {
        let drives = targets
            .iter()
            .map(|&target| Drive {
                target,
                detuning_hz: 0.0,
                rabi_hz,
                phase_rad,
            })
            .collect();
        Self::microwave(drives, angle / (2.0 * PI * rabi_hz))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.duration();
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::domain(format!("segment duration {d} must be finite and >= 0")));
        }
        match self {
            PulseSegment::Laser { power_w, .. } if !(*power_w >= 0.0) => {
                Err(Error::domain(format!("laser power {power_w} must be >= 0")))
            }
            PulseSegment::Microwave { drives, .. } => {
                for drive in drives {
                    if !(drive.rabi_hz >= 0.0) {
                        return Err(Error::domain(format!("Rabi frequency {} must be >= 0", drive.rabi_hz)));
                    }
                    if !drive.detuning_hz.is_finite() || !drive.phase_rad.is_finite() {
                        return Err(Error::domain("drive detuning and phase must be finite"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Copy with every drive phase advanced by π (the −X branch).
    pub fn phase_flipped(&self) -> Self {
        match self {
            PulseSegment::Microwave {
                drives,
                duration_s,
                secular,
            } => PulseSegment::Microwave {
                drives: drives
                    .iter()
                    .map(|d| Drive {
                        phase_rad: d.phase_rad + PI,
                        ..*d
                    })
                    .collect(),
                duration_s: *duration_s,
                secular: *secular,
            },
            other => other.clone(),
        }
    }
}

/// Out-of-phase DEER readout of the dark-spin polarization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeerReadout {
    /// Total free evolution between the π/2 pulses, s.
    pub tau_p: f64,
    pub probe_rabi_hz: f64,
    pub dark_rabi_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "kebab-case")]
pub enum Step {
    Segment { segment: PulseSegment },
    /// Segment whose drive phases flip by π between the ±X branches.
    Signed { segment: PulseSegment },
    /// Records probe and dark-spin polarizations along `axis`.
    Snapshot { axis: Axis },
    Readout { readout: DeerReadout },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub steps: Vec<Step>,
}

impl PulseSequence {
    pub fn push(&mut self, step: Step) -> &mut Self {
        self.steps.push(step);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut readouts = 0;
        for step in &self.steps {
            match step {
                Step::Segment { segment } | Step::Signed { segment } => segment.validate()?,
                Step::Readout { readout } => {
                    readouts += 1;
                    if !(readout.tau_p >= 0.0) || !(readout.probe_rabi_hz > 0.0) || !(readout.dark_rabi_hz > 0.0) {
                        return Err(Error::SequenceValidation(
                            "readout needs tau_p >= 0 and positive Rabi frequencies".into(),
                        ));
                    }
                }
                Step::Snapshot { .. } => {}
            }
        }
        match readouts {
            0 => Err(Error::SequenceValidation("sequence has no readout step".into())),
            1 => Ok(()),
            _ => Err(Error::SequenceValidation("sequence has more than one readout step".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_without_readout_is_rejected() {
        let mut seq = PulseSequence::default();
        seq.push(Step::Segment {
            segment: PulseSegment::delay(1e-6),
        });
        assert!(matches!(seq.validate(), Err(Error::SequenceValidation(_))));
        seq.push(Step::Readout {
            readout: DeerReadout {
                tau_p: 2.5e-6,
                probe_rabi_hz: 8e5,
                dark_rabi_hz: 4e5,
            },
        });
        seq.validate().unwrap();
    }

    #[test]
    fn negative_values_are_rejected() {
        assert!(PulseSegment::delay(-1.0).validate().is_err());
        assert!(PulseSegment::Laser { power_w: -1e-3, duration_s: 1e-6 }.validate().is_err());
        assert!(PulseSegment::microwave(vec![Drive::probe(-1.0, 0.0)], 1e-6).validate().is_err());
    }

    #[test]
    fn rotation_duration_matches_angle() {
        let seg = PulseSegment::rotation(&[DriveTarget::Probe], 4e5, 0.0, PI);
        assert!((seg.duration() - 1.0 / 8e5).abs() < 1e-20);
        match seg.phase_flipped() {
            PulseSegment::Microwave { drives, .. } => assert!((drives[0].phase_rad - PI).abs() < 1e-15),
            _ => unreachable!(),
        }
    }

    #[test]
    fn sequence_serializes_through_toml() {
        let mut seq = PulseSequence::default();
        seq.push(Step::Signed {
            segment: PulseSegment::rotation(&[DriveTarget::Probe, DriveTarget::DarkSpin(0)], 4e5, PI, PI / 2.0),
        })
        .push(Step::Snapshot { axis: Axis::Y })
        .push(Step::Segment {
            segment: PulseSegment::Laser {
                power_w: 1e-3,
                duration_s: 3e-6,
            },
        });
        let text = toml::to_string(&seq).unwrap();
        let back: PulseSequence = toml::from_str(&text).unwrap();
        assert_eq!(back, seq);
    }
}
