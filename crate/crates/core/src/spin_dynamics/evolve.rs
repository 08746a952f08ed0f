use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::hamiltonian::build_hamiltonian;
use super::operators::{embed, sigma_minus, sigma_plus, CMatrix};
use super::register::SpinRegister;
use super::sequence::PulseSegment;
use crate::charge::{saturation_rate, SaturationModel};
use crate::error::{Error, Result};

/// Probe repolarization time versus laser power, interpolated as a power law
/// between two calibration points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepolarizationCurve {
    pub p_low_w: f64,
    pub t_low_s: f64,
    pub p_high_w: f64,
    pub t_high_s: f64,
}

impl Default for RepolarizationCurve {
    fn default() -> Self {
        RepolarizationCurve {
            p_low_w: 36e-6,
            t_low_s: 2.8e-6,
            p_high_w: 3300e-6,
            t_high_s: 0.24e-6,
        }
    }
}

impl RepolarizationCurve {
    pub fn repolarization_time(&self, power_w: f64, allow_extrapolation: bool) -> Result<f64> {
        if !(power_w > 0.0 && power_w.is_finite()) {
            return Err(Error::domain(format!("repolarization needs a positive power, got {power_w}")));
        }
        let in_range = (self.p_low_w..=self.p_high_w).contains(&power_w);
        if !in_range && !allow_extrapolation {
            return Err(Error::domain(format!(
                "laser power {power_w} W outside calibrated range [{}, {}] W",
                self.p_low_w, self.p_high_w
            )));
        }
        let slope = (self.t_high_s / self.t_low_s).ln() / (self.p_high_w / self.p_low_w).ln();
        Ok(self.t_low_s * (power_w / self.p_low_w).powf(slope))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveOptions {
    /// Maximum step of the dissipative propagator; `None` picks
    /// 1/(50·largest rate in the generator).
    pub dt_max: Option<f64>,
    pub saturation: SaturationModel,
    pub repolarization: RepolarizationCurve,
    pub allow_extrapolation: bool,
    /// Dark-spin T₁, applied in every segment when set.
    pub dark_t1_s: Option<f64>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            dt_max: None,
            saturation: SaturationModel::default(),
            repolarization: RepolarizationCurve::default(),
            allow_extrapolation: false,
            dark_t1_s: None,
        }
    }
}

impl EvolveOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt_max {
            if !(dt > 0.0) {
                return Err(Error::domain(format!("dt_max {dt} must be > 0")));
            }
        }
        if let Some(t1) = self.dark_t1_s {
            if !(t1 > 0.0) {
                return Err(Error::domain(format!("dark T1 {t1} must be > 0")));
            }
        }
        self.saturation.validate()
    }
}

fn collapse_operators(segment: &PulseSegment, register: &SpinRegister, options: &EvolveOptions) -> Result<Vec<CMatrix>> {
    let n = register.n_sites();
    let mut ops = Vec::new();
    let mut dark_rate = 0.0;
    if let PulseSegment::Laser { power_w, .. } = *segment {
        if power_w > 0.0 {
            let t_repol = options
                .repolarization
                .repolarization_time(power_w, options.allow_extrapolation)?;
            ops.push(embed(&sigma_plus(), 0, n) * Complex64::new((1.0 / t_repol).sqrt(), 0.0));
            dark_rate += saturation_rate(power_w, &options.saturation)?;
        }
    }
    if let Some(t1) = options.dark_t1_s {
        dark_rate += 1.0 / t1;
    }
    if dark_rate > 0.0 {
        // σ± at Γ/2 each relax ⟨σz⟩ at Γ.
        let amp = Complex64::new((0.5 * dark_rate).sqrt(), 0.0);
        for (k, site) in register.sites().iter().enumerate() {
            if site.is_neutral() {
                ops.push(embed(&sigma_plus(), k + 1, n) * amp);
                ops.push(embed(&sigma_minus(), k + 1, n) * amp);
            }
        }
    }
    Ok(ops)
}

/// exp(−i2πHt) from the Hermitian eigendecomposition.
pub fn unitary(h: &CMatrix, t: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = CMatrix::from_diagonal(&DVector::from_iterator(
        h.nrows(),
        eig.eigenvalues.iter().map(|&e| Complex64::from_polar(1.0, -2.0 * PI * e * t)),
    ));
    v * phases * v.adjoint()
}

/// Lindblad generator on column-stacked density matrices.
fn liouvillian(h: &CMatrix, collapse: &[CMatrix]) -> CMatrix {
    let d = h.nrows();
    let id = CMatrix::identity(d, d);
    let mut l = (id.kronecker(h) - h.transpose().kronecker(&id)) * Complex64::new(0.0, -2.0 * PI);
    for c in collapse {
        let cdc = c.adjoint() * c;
        l += c.conjugate().kronecker(c);
        l -= (id.kronecker(&cdc) + cdc.transpose().kronecker(&id)) * Complex64::new(0.5, 0.0);
    }
    l
}

/// Advances the register through one segment.
pub fn evolve(register: &mut SpinRegister, segment: &PulseSegment, options: &EvolveOptions) -> Result<()> {
    options.validate()?;
    let h = build_hamiltonian(segment, register)?;
    let duration = segment.duration();
    if duration == 0.0 {
        return Ok(());
    }
    let collapse = collapse_operators(segment, register, options)?;
    let state = if collapse.is_empty() {
        let u = unitary(&h, duration);
        &u * register.state() * u.adjoint()
    } else {
        let l = liouvillian(&h, &collapse);
        let dt_max = options.dt_max.unwrap_or_else(|| {
            let scale = l.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(1.0);
            1.0 / (50.0 * scale)
        });
        let steps = (duration / dt_max).ceil().max(1.0);
        if steps > 1e7 {
            return Err(Error::Capacity(format!("{steps} propagator steps requested")));
        }
        let dt = duration / steps;
        let step = (l * Complex64::new(dt, 0.0)).exp();
        let d = register.dim();
        let mut v = DVector::from_column_slice(register.state().as_slice());
        for _ in 0..steps as usize {
            v = &step * v;
        }
        let rho = CMatrix::from_column_slice(d, d, v.as_slice());
        (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0)
    };
    register.set_state(state);
    register.validate()
}

/// Laser pulse: probe repolarization plus dark-spin depolarization at Γ(P).
pub fn laser_repolarize(
    register: &mut SpinRegister,
    power_w: f64,
    duration_s: f64,
    options: &EvolveOptions,
) -> Result<()> {
    evolve(register, &PulseSegment::Laser { power_w, duration_s }, options)
}
