//! Gillespie unraveling of the three-state master equation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ChargeRateModel;
use crate::defect::ChargeSpinPopulation;
use crate::error::{Error, Result};
use crate::par::Parallelism;
use crate::rng::{stream_rng, Domain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChargeState {
    Up,
    Down,
    Ionized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub to: ChargeState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeTrajectory {
    pub initial: ChargeState,
    pub jumps: Vec<Jump>,
    pub duration: f64,
}

impl ChargeTrajectory {
    pub fn state_at(&self, t: f64) -> ChargeState {
        let n = self.jumps.partition_point(|j| j.time <= t);
        if n == 0 {
            self.initial
        } else {
            self.jumps[n - 1].to
        }
    }
}

/// Single trajectory drawn from stream 0 of `seed`.
pub fn sample_trajectory(
    pop0: &ChargeSpinPopulation,
    rates: &ChargeRateModel,
    power_w: f64,
    duration: f64,
    seed: u64,
) -> Result<ChargeTrajectory> {
    let r_ion = check(pop0, rates, power_w, duration)?;
    Ok(draw(pop0, rates, r_ion, duration, seed, 0))
}

/// `count` trajectories; trajectory `i` uses stream `i`, so the output does
/// not depend on the worker count.
pub fn sample_trajectories(
    count: u64,
    pop0: &ChargeSpinPopulation,
    rates: &ChargeRateModel,
    power_w: f64,
    duration: f64,
    seed: u64,
    parallelism: Parallelism,
) -> Result<Vec<ChargeTrajectory>> {
    let r_ion = check(pop0, rates, power_w, duration)?;
    Ok(parallelism.map_range(0..count, |i| draw(pop0, rates, r_ion, duration, seed, i)))
}

fn check(pop0: &ChargeSpinPopulation, rates: &ChargeRateModel, power_w: f64, duration: f64) -> Result<f64> {
    pop0.check(1e-9)?;
    rates.validate()?;
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::domain(format!("duration {duration} must be finite and >= 0")));
    }
    rates.r_ion(power_w)
}

fn draw(
    pop0: &ChargeSpinPopulation,
    rates: &ChargeRateModel,
    r_ion: f64,
    duration: f64,
    seed: u64,
    stream: u64,
) -> ChargeTrajectory {
    let mut rng = stream_rng(seed, Domain::ChargeTrajectories, stream);
    let u: f64 = rng.gen();
    let initial = if u < pop0.p_up {
        ChargeState::Up
    } else if u < pop0.p_up + pop0.p_down {
        ChargeState::Down
    } else {
        ChargeState::Ionized
    };
    let mut state = initial;
    let mut t = 0.0;
    let mut jumps = Vec::new();
    loop {
        let (total, options): (f64, [(f64, ChargeState); 2]) = match state {
            ChargeState::Up => (r_ion + rates.r_flip, [(r_ion, ChargeState::Ionized), (rates.r_flip, ChargeState::Down)]),
            ChargeState::Down => (r_ion + rates.r_flip, [(r_ion, ChargeState::Ionized), (rates.r_flip, ChargeState::Up)]),
            ChargeState::Ionized => (
                rates.r_rec,
                [(0.5 * rates.r_rec, ChargeState::Up), (0.5 * rates.r_rec, ChargeState::Down)],
            ),
        };
        if total <= 0.0 {
            break;
        }
        let wait = -(1.0 - rng.gen::<f64>()).ln() / total;
        t += wait;
        if t > duration {
            break;
        }
        let pick = rng.gen::<f64>() * total;
        state = if pick < options[0].0 { options[0].1 } else { options[1].1 };
        jumps.push(Jump { time: t, to: state });
    }
    ChargeTrajectory { initial, jumps, duration }
}
