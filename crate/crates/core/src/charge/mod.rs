//! Photo-ionization kinetics of a single dark defect.
//!
//! The defect occupies one of three states: neutral spin-up, neutral
//! spin-down, or ionized. Under illumination it ionizes at the saturating
//! rate Γ(P), recaptures into an unpolarized neutral state, and its spin
//! flips at 1/(2T₁) in each direction.

mod trajectory;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{PLANCK, SPEED_OF_LIGHT};
use crate::defect::ChargeSpinPopulation;
use crate::error::{Error, Result};

pub use trajectory::{sample_trajectories, sample_trajectory, ChargeState, ChargeTrajectory, Jump};

/// Ionization cross section used to anchor the default saturation model, m².
pub const DEFAULT_CROSS_SECTION_M2: f64 = 2.5e-24;
pub const DEFAULT_P_SAT_W: f64 = 1.6e-3;
pub const DEFAULT_T1_S: f64 = 1.9e-3;
/// Dark steady-state neutral fraction and relaxation time of the charge population.
pub const DEFAULT_RHO_SS: f64 = 0.360;
pub const DEFAULT_T_C_S: f64 = 410e-6;

/// Γ(P) = Γ_sat·P/(P + P_sat).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationModel {
    pub gamma_sat: f64,
    pub p_sat: f64,
}

impl Default for SaturationModel {
    /// Γ_sat chosen so the low-power slope Γ_sat/P_sat reproduces the default
    /// cross section under the default spot model.
    fn default() -> Self {
        let slope = DEFAULT_CROSS_SECTION_M2 * PhotonFluxModel::default().flux_per_watt();
        SaturationModel {
            gamma_sat: slope * DEFAULT_P_SAT_W,
            p_sat: DEFAULT_P_SAT_W,
        }
    }
}

impl SaturationModel {
    pub fn new(gamma_sat: f64, p_sat: f64) -> Result<Self> {
        let m = SaturationModel { gamma_sat, p_sat };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_sat > 0.0 && self.gamma_sat.is_finite() && self.p_sat > 0.0 && self.p_sat.is_finite()) {
            return Err(Error::domain(format!(
                "saturation model needs gamma_sat > 0 and p_sat > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Linear-regime slope dΓ/dP at P → 0, 1/(s·W).
    pub fn low_power_slope(&self) -> f64 {
        self.gamma_sat / self.p_sat
    }
}

pub fn saturation_rate(power_w: f64, model: &SaturationModel) -> Result<f64> {
    if !(power_w >= 0.0) {
        return Err(Error::domain(format!("laser power {power_w} must be >= 0")));
    }
    if power_w.is_infinite() {
        return Ok(model.gamma_sat);
    }
    Ok(model.gamma_sat * power_w / (power_w + model.p_sat))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonFluxModel {
    pub wavelength_m: f64,
    pub numerical_aperture: f64,
    pub spot_area_m2: f64,
}

impl Default for PhotonFluxModel {
    fn default() -> Self {
        Self::diffraction_limited(532e-9, 0.9)
    }
}

impl PhotonFluxModel {
    /// Airy-radius disc, A = π(0.61λ/NA)².
    pub fn diffraction_limited(wavelength_m: f64, numerical_aperture: f64) -> Self {
        let r = 0.61 * wavelength_m / numerical_aperture;
        PhotonFluxModel {
            wavelength_m,
            numerical_aperture,
            spot_area_m2: PI * r * r,
        }
    }

    pub fn with_spot_area(mut self, spot_area_m2: f64) -> Self {
        self.spot_area_m2 = spot_area_m2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_m > 0.0 && self.spot_area_m2 > 0.0 && self.spot_area_m2.is_finite()) {
            return Err(Error::domain(format!("invalid photon flux model {self:?}")));
        }
        Ok(())
    }

    /// Photons·m⁻²·s⁻¹ per watt of optical power.
    pub fn flux_per_watt(&self) -> f64 {
        self.wavelength_m / (PLANCK * SPEED_OF_LIGHT * self.spot_area_m2)
    }
}

pub fn photon_flux(power_w: f64, model: &PhotonFluxModel) -> Result<f64> {
    if !(power_w >= 0.0) {
        return Err(Error::domain(format!("laser power {power_w} must be >= 0")));
    }
    model.validate()?;
    Ok(power_w * model.flux_per_watt())
}

/// σ = (dΓ/dP)/(dΦ/dP) in the linear regime, m².
pub fn cross_section(slope_per_s_w: f64, flux: &PhotonFluxModel) -> Result<f64> {
    if !(slope_per_s_w > 0.0 && slope_per_s_w.is_finite()) {
        return Err(Error::FitQuality(format!(
            "ionization slope must be positive, got {slope_per_s_w}"
        )));
    }
    flux.validate()?;
    Ok(slope_per_s_w / flux.flux_per_watt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeRateModel {
    pub saturation: SaturationModel,
    /// Recapture rate under illumination, 1/s. Recaptured spins are unpolarized.
    #[serde(default)]
    pub r_rec: f64,
    /// Spin-flip rate in each direction, 1/(2T₁).
    pub r_flip: f64,
    /// Dark equilibration rates of the charge population.
    pub r_ion_dark: f64,
    pub r_rec_dark: f64,
}

impl Default for ChargeRateModel {
    fn default() -> Self {
        let (r_ion_dark, r_rec_dark) = dark_rates_from_relaxation(DEFAULT_RHO_SS, DEFAULT_T_C_S).unwrap();
        ChargeRateModel {
            saturation: SaturationModel::default(),
            r_rec: 0.0,
            r_flip: 0.5 / DEFAULT_T1_S,
            r_ion_dark,
            r_rec_dark,
        }
    }
}

/// (r_ion_dark, r_rec_dark) reproducing a steady-state neutral fraction and a
/// relaxation time.
pub fn dark_rates_from_relaxation(rho_ss: f64, t_c: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&rho_ss) || !(t_c > 0.0 && t_c.is_finite()) {
        return Err(Error::domain(format!(
            "need rho_ss in [0, 1] and T_c > 0, got ({rho_ss}, {t_c})"
        )));
    }
    Ok(((1.0 - rho_ss) / t_c, rho_ss / t_c))
}

impl ChargeRateModel {
    pub fn with_t1(mut self, t1: f64) -> Self {
        self.r_flip = 0.5 / t1;
        self
    }

    pub fn with_dark_relaxation(mut self, rho_ss: f64, t_c: f64) -> Result<Self> {
        (self.r_ion_dark, self.r_rec_dark) = dark_rates_from_relaxation(rho_ss, t_c)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.saturation.validate()?;
        for (name, r) in [
            ("r_rec", self.r_rec),
            ("r_flip", self.r_flip),
            ("r_ion_dark", self.r_ion_dark),
            ("r_rec_dark", self.r_rec_dark),
        ] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::domain(format!("{name} = {r} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn t1(&self) -> f64 {
        0.5 / self.r_flip
    }

    pub fn r_ion(&self, power_w: f64) -> Result<f64> {
        saturation_rate(power_w, &self.saturation)
    }

    /// Dark steady-state neutral fraction.
    pub fn rho_ss(&self) -> f64 {
        let total = self.r_ion_dark + self.r_rec_dark;
        if total > 0.0 {
            self.r_rec_dark / total
        } else {
            1.0
        }
    }

    /// Dark charge relaxation time T_c.
    pub fn t_c(&self) -> f64 {
        1.0 / (self.r_ion_dark + self.r_rec_dark)
    }
}

/// Exact solution of the illuminated master equation.
///
/// The generator has two decoupled modes: the neutral fraction relaxes to
/// r_rec/(r_ion + r_rec) at rate r_ion + r_rec, and the spin imbalance
/// p↑ − p↓ decays at r_ion + 2r_flip. The third eigenvalue is zero.
pub fn propagate(
    pop: &ChargeSpinPopulation,
    rates: &ChargeRateModel,
    power_w: f64,
    t: f64,
) -> Result<ChargeSpinPopulation> {
    pop.check(1e-9)?;
    rates.validate()?;
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time {t} must be >= 0")));
    }
    let r_ion = rates.r_ion(power_w)?;
    let k_charge = r_ion + rates.r_rec;
    let q0 = pop.p_up + pop.p_down;
    let m0 = pop.p_up - pop.p_down;
    let q = if k_charge > 0.0 {
        let q_ss = rates.r_rec / k_charge;
        q_ss + (q0 - q_ss) * (-k_charge * t).exp()
    } else {
        q0
    };
    let m = m0 * (-(r_ion + 2.0 * rates.r_flip) * t).exp();
    let p_up = (0.5 * (q + m)).max(0.0);
    let p_down = (0.5 * (q - m)).max(0.0);
    Ok(ChargeSpinPopulation {
        p_up,
        p_down,
        p_plus: (1.0 - q).max(0.0),
    })
}

/// Observed mono-exponential decay rate of the dark-spin polarization.
pub fn polarization_decay_rate(power_w: f64, rates: &ChargeRateModel) -> Result<f64> {
    Ok(rates.r_ion(power_w)? + 2.0 * rates.r_flip)
}

/// Neutral fraction after relaxing in the dark for time `t`.
pub fn dark_relaxation(rho0: f64, rates: &ChargeRateModel, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho0) || !(t >= 0.0) {
        return Err(Error::domain(format!("need rho0 in [0, 1] and t >= 0, got ({rho0}, {t})")));
    }
    let k = rates.r_ion_dark + rates.r_rec_dark;
    if k == 0.0 {
        return Ok(rho0);
    }
    let ss = rates.rho_ss();
    Ok(ss + (rho0 - ss) * (-k * t).exp())
}
