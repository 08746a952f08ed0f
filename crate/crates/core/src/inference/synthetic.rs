//! Synthetic DEER data for round-trip studies.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::score::DeerDataset;
use crate::coherence::{deer_signal, linspace, CoherenceCurve};
use crate::defect::{MeasurementSettings, NsDefect, ProbeSpin};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};

/// Delay grid and background of a synthetic one-tone + two-tone measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticDeer {
    pub tau_max_s: f64,
    pub points: usize,
    pub gamma_bg: f64,
    pub stretch_n: f64,
    pub etas: Vec<f64>,
}

impl Default for SyntheticDeer {
    fn default() -> Self {
        SyntheticDeer {
            tau_max_s: 10e-6,
            points: 200,
            gamma_bg: 2e4,
            stretch_n: 1.5,
            etas: vec![MeasurementSettings::ETA_ONE_TONE, MeasurementSettings::ETA_TWO_TONE],
        }
    }
}

/// The strongly coupled pair used throughout the examples and tests:
/// ρ = 0.474 / 0.302, a = 158.6 / 125 kHz, d = −41 / −33 kHz.
pub fn reference_pair() -> Vec<NsDefect> {
    vec![
        NsDefect::new(0.474, 158.6e3, -41e3).expect("valid"),
        NsDefect::new(0.302, 125e3, -33e3).expect("valid"),
    ]
}

/// In-phase DEER curves for each η, with i.i.d. Gaussian noise of standard
/// deviation `sigma` drawn from stream `k` of the measurement-noise domain.
pub fn synthetic_datasets(
    setup: &SyntheticDeer,
    defects: &[NsDefect],
    sigma: f64,
    seed: u64,
) -> Result<Vec<DeerDataset>> {
    if setup.points < 2 || !(setup.tau_max_s > 0.0) {
        return Err(Error::domain("synthetic grid needs >= 2 points and tau_max > 0"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::domain("noise sigma must be >= 0"));
    }
    let probe = ProbeSpin::new(setup.gamma_bg, setup.stretch_n)?;
    let tau = linspace(0.0, setup.tau_max_s, setup.points);
    let with_p: Vec<(NsDefect, f64)> = defects.iter().map(|d| (d.clone(), 0.0)).collect();
    setup
        .etas
        .iter()
        .enumerate()
        .map(|(k, &eta)| {
            let mut rng = stream_rng(seed, Domain::MeasurementNoise, k as u64);
            let s0 = tau
                .iter()
                .map(|&t| {
                    let noise: f64 = rng.sample(StandardNormal);
                    Ok(deer_signal(t, &probe, eta, &with_p)?.re + sigma * noise)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(DeerDataset::new(CoherenceCurve::from_in_phase(tau.clone(), &s0)?, eta))
        })
        .collect()
}
