//! Random defect configurations around the probe.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::constants::{dipolar_prefactor_hz_nm3, DIAMOND_ATOM_DENSITY_NM3};
use crate::defect::{dipolar_coupling, nv_axis_111};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};

/// Expected defects per candidate above which sampling is refused.
pub const MAX_EXPECTED_DEFECTS: f64 = 32.0;

/// Doped layer containing the probe at its mid-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slab {
    pub thickness_nm: f64,
    /// Depth of the layer centre below the surface (informational).
    pub depth_nm: f64,
}

impl Default for Slab {
    fn default() -> Self {
        Slab {
            thickness_nm: 4.0,
            depth_nm: 50.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchPrior {
    pub density_ppm: f64,
    pub slab: Slab,
    /// Couplings below this magnitude are outside the sampled disc, Hz.
    pub cutoff_hz: f64,
    /// Minimum distance between any two spins, including the probe, nm.
    pub min_separation_nm: f64,
    pub axis: [f64; 3],
}

impl Default for SearchPrior {
    fn default() -> Self {
        SearchPrior {
            density_ppm: 4.0,
            slab: Slab::default(),
            cutoff_hz: 1e3,
            min_separation_nm: 0.5,
            axis: nv_axis_111(),
        }
    }
}

impl SearchPrior {
    /// Disc radius beyond which |a| < cutoff for every orientation.
    pub fn disc_radius_nm(&self) -> f64 {
        (2.0 * dipolar_prefactor_hz_nm3() / self.cutoff_hz).cbrt()
    }

    pub fn expected_count(&self) -> f64 {
        let r = self.disc_radius_nm();
        self.density_ppm * 1e-6 * DIAMOND_ATOM_DENSITY_NM3 * PI * r * r * self.slab.thickness_nm
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density_ppm > 0.0 && self.density_ppm.is_finite()) {
            return Err(Error::domain(format!("density {} ppm must be > 0", self.density_ppm)));
        }
        if !(self.slab.thickness_nm > 0.0) || !(self.cutoff_hz > 0.0) || !(self.min_separation_nm >= 0.1) {
            return Err(Error::domain(
                "slab thickness and cutoff must be positive and the minimum separation at least 0.1 nm",
            ));
        }
        let expected = self.expected_count();
        if expected > MAX_EXPECTED_DEFECTS {
            return Err(Error::Capacity(format!(
                "{expected:.1} expected defects per candidate exceeds {MAX_EXPECTED_DEFECTS}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfiguration {
    /// Counter of this candidate within its seed's stream.
    pub index: u64,
    /// Relative to the probe, nm; sorted by descending |coupling|.
    pub positions: Vec<[f64; 3]>,
    pub couplings: Vec<f64>,
    /// Fitted neutral populations (zero until scored).
    pub rho: Vec<f64>,
}

impl CandidateConfiguration {
    pub fn len(&self) -> usize {
        self.couplings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.couplings.is_empty()
    }

    /// Builds a candidate from explicit positions.
    pub fn from_positions(index: u64, positions: Vec<[f64; 3]>, axis: [f64; 3]) -> Result<Self> {
        let mut items = positions
            .into_iter()
            .map(|p| Ok((p, dipolar_coupling(p, axis)?)))
            .collect::<Result<Vec<_>>>()?;
        items.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
        let n = items.len();
        Ok(CandidateConfiguration {
            index,
            positions: items.iter().map(|x| x.0).collect(),
            couplings: items.iter().map(|x| x.1).collect(),
            rho: vec![0.0; n],
        })
    }

    /// Positions inside the slab and couplings consistent with geometry.
    pub fn validate(&self, prior: &SearchPrior) -> Result<()> {
        let half = 0.5 * prior.slab.thickness_nm;
        for (p, &a) in self.positions.iter().zip(&self.couplings) {
            if p[2].abs() > half + 1e-12 {
                return Err(Error::domain(format!("position {p:?} outside slab")));
            }
            let expect = dipolar_coupling(*p, prior.axis)?;
            if (expect - a).abs() > 1e-9 * expect.abs().max(1.0) {
                return Err(Error::domain(format!("coupling {a} inconsistent with position {p:?}")));
            }
        }
        Ok(())
    }
}

/// Candidate `index` of the stream keyed by `seed`.
pub fn sample_configuration(prior: &SearchPrior, seed: u64, index: u64) -> Result<CandidateConfiguration> {
    prior.validate()?;
    Ok(draw(prior, seed, index))
}

fn draw(prior: &SearchPrior, seed: u64, index: u64) -> CandidateConfiguration {
    let mut rng = stream_rng(seed, Domain::Configurations, index);
    let lambda = prior.expected_count();
    let count = Poisson::new(lambda).map(|p| p.sample(&mut rng) as usize).unwrap_or(0);
    let radius = prior.disc_radius_nm();
    let half = 0.5 * prior.slab.thickness_nm;
    let min_sep2 = prior.min_separation_nm * prior.min_separation_nm;
    let mut positions: Vec<[f64; 3]> = Vec::with_capacity(count);
    while positions.len() < count {
        let r = radius * rng.gen::<f64>().sqrt();
        let phi = 2.0 * PI * rng.gen::<f64>();
        let p = [r * phi.cos(), r * phi.sin(), half * (2.0 * rng.gen::<f64>() - 1.0)];
        let d2 = |q: &[f64; 3]| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
        if d2(&[0.0; 3]) >= min_sep2 && positions.iter().all(|q| d2(q) >= min_sep2) {
            positions.push(p);
        }
    }
    CandidateConfiguration::from_positions(index, positions, prior.axis).expect("separation exceeds coupling domain")
}

/// The first `count` candidates of the stream keyed by `seed`.
pub fn sample_configurations(
    count: u64,
    prior: &SearchPrior,
    seed: u64,
) -> Result<impl Iterator<Item = CandidateConfiguration>> {
    if count == 0 {
        return Err(Error::domain("count must be >= 1"));
    }
    prior.validate()?;
    let prior = *prior;
    Ok((0..count).map(move |i| draw(&prior, seed, i)))
}
