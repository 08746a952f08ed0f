//! Domain types shared by every other module: dark defects, the probe spin,
//! measurement settings, and the secular dipolar coupling.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constants::dipolar_prefactor_hz_nm3;
use crate::error::{Error, Result};

/// Closest approach accepted by [`dipolar_coupling`], in nm.
pub const MIN_SEPARATION_NM: f64 = 0.1;

/// NV quantization axis [111] expressed in the frame of a (100)-cut surface.
pub fn nv_axis_111() -> [f64; 3] {
    let c = 1.0 / 3f64.sqrt();
    [c, c, c]
}

/// One dark spin-charge defect as seen by the probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsDefect {
    /// Neutral-charge population fraction.
    pub rho: f64,
    /// Dipolar coupling to the probe, Hz.
    pub a_dipolar: f64,
    /// dc Stark shift of the probe line while this defect is ionized, Hz.
    pub d_stark: f64,
    /// Position relative to the probe, nm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
}

impl NsDefect {
    pub fn new(rho: f64, a_dipolar: f64, d_stark: f64) -> Result<Self> {
        let defect = NsDefect {
            rho,
            a_dipolar,
            d_stark,
            position: None,
        };
        defect.validate()?;
        Ok(defect)
    }

    /// Defect placed at `position`; the coupling is derived from geometry.
    pub fn at_position(rho: f64, position: [f64; 3], axis: [f64; 3], d_stark: f64) -> Result<Self> {
        let a_dipolar = dipolar_coupling(position, axis)?;
        let defect = NsDefect {
            rho,
            a_dipolar,
            d_stark,
            position: Some(position),
        };
        defect.validate()?;
        Ok(defect)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::domain(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if !self.a_dipolar.is_finite() {
            return Err(Error::domain("dipolar coupling is not finite"));
        }
        if !self.d_stark.is_finite() {
            return Err(Error::domain("Stark shift is not finite"));
        }
        Ok(())
    }

    /// Checks the stored coupling against the stored position.
    pub fn validate_geometry(&self, axis: [f64; 3]) -> Result<()> {
        if let Some(pos) = self.position {
            let expected = dipolar_coupling(pos, axis)?;
            let tol = 1e-9 * expected.abs().max(f64::MIN_POSITIVE);
            if (expected - self.a_dipolar).abs() > tol {
                return Err(Error::domain(format!(
                    "coupling {} Hz inconsistent with position ({} Hz expected)",
                    self.a_dipolar, expected
                )));
            }
        }
        Ok(())
    }
}

/// Sorts defects by descending |a|, the indexing convention used throughout.
pub fn sort_by_coupling(defects: &mut [NsDefect]) {
    defects.sort_by(|x, y| y.a_dipolar.abs().total_cmp(&x.a_dipolar.abs()));
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpin {
    /// Background decoherence rate Γ, 1/s.
    pub gamma_bg: f64,
    /// Stretch exponent n.
    pub stretch_n: f64,
    /// Dark-spin lifetime T₁, s.
    pub t1_dark_p1: f64,
    pub quant_axis: [f64; 3],
}

impl Default for ProbeSpin {
    fn default() -> Self {
        ProbeSpin {
            gamma_bg: 0.0,
            stretch_n: 1.0,
            t1_dark_p1: 1.9e-3,
            quant_axis: nv_axis_111(),
        }
    }
}

impl ProbeSpin {
    pub fn new(gamma_bg: f64, stretch_n: f64) -> Result<Self> {
        let probe = ProbeSpin {
            gamma_bg,
            stretch_n,
            ..ProbeSpin::default()
        };
        probe.validate()?;
        Ok(probe)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_bg >= 0.0 && self.gamma_bg.is_finite()) {
            return Err(Error::domain(format!("gamma_bg = {} must be >= 0", self.gamma_bg)));
        }
        if !(0.5..=3.0).contains(&self.stretch_n) {
            return Err(Error::domain(format!("stretch_n = {} outside [0.5, 3]", self.stretch_n)));
        }
        if !(self.t1_dark_p1 > 0.0) {
            return Err(Error::domain("t1_dark_p1 must be positive"));
        }
        let norm = Vector3::from(self.quant_axis).norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("quantization axis has norm {norm}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSettings {
    /// Addressed fraction of the dark-spin population.
    pub eta: f64,
    pub b_field_gauss: f64,
    /// f⇓,1, f⇓,3, f⇑,3, f⇑,1 in Hz.
    pub p1_transition_freqs: [f64; 4],
    pub laser_wavelength_nm: f64,
    pub numerical_aperture: f64,
}

impl MeasurementSettings {
    pub const ETA_ONE_TONE: f64 = 3.0 / 8.0;
    pub const ETA_TWO_TONE: f64 = 6.0 / 8.0;

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::domain(format!("eta = {} outside [0, 1]", self.eta)));
        }
        let f = &self.p1_transition_freqs;
        for i in 0..4 {
            for j in (i + 1)..4 {
                if f[i] == f[j] {
                    return Err(Error::domain("dark-spin transition frequencies must be distinct"));
                }
            }
        }
        if !(self.laser_wavelength_nm > 0.0) {
            return Err(Error::domain("laser wavelength must be positive"));
        }
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture <= 1.0) {
            return Err(Error::domain("numerical aperture must lie in (0, 1]"));
        }
        Ok(())
    }
}

impl Default for MeasurementSettings {
    fn default() -> Self {
        // Transition frequencies are configuration inputs; these placeholders
        // sit near the 412 G dark-spin resonances and only need to be distinct.
        MeasurementSettings {
            eta: Self::ETA_TWO_TONE,
            b_field_gauss: 412.0,
            p1_transition_freqs: [1.104e9, 1.131e9, 1.177e9, 1.204e9],
            laser_wavelength_nm: 532.0,
            numerical_aperture: 0.9,
        }
    }
}

/// Occupation of {|0,↑⟩, |0,↓⟩, |+⟩} for one defect.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeSpinPopulation {
    pub p_up: f64,
    pub p_down: f64,
    pub p_plus: f64,
}

impl ChargeSpinPopulation {
    pub const NORMALIZATION_TOL: f64 = 1e-12;

    pub fn new(p_up: f64, p_down: f64, p_plus: f64) -> Result<Self> {
        let pop = ChargeSpinPopulation { p_up, p_down, p_plus };
        pop.check(Self::NORMALIZATION_TOL)?;
        Ok(pop)
    }

    /// Neutral state with spin polarization `p`.
    pub fn neutral_polarized(p: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("polarization {p} outside [-1, 1]")));
        }
        Self::new(0.5 * (1.0 + p), 0.5 * (1.0 - p), 0.0)
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let parts = [self.p_up, self.p_down, self.p_plus];
        if parts.iter().any(|p| !p.is_finite() || *p < -tol) {
            return Err(Error::domain(format!("negative occupation in {self:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::domain(format!("occupations sum to {sum}")));
        }
        Ok(())
    }

    pub fn rho(&self) -> f64 {
        self.p_up + self.p_down
    }

    /// Spin polarization of the neutral fraction; zero when fully ionized.
    pub fn polarization(&self) -> f64 {
        let rho = self.rho();
        if rho > 0.0 {
            (self.p_up - self.p_down) / rho.max(f64::EPSILON)
        } else {
            0.0
        }
    }
}

/// Secular dipolar coupling between the probe and a dark electron spin at
/// `r_nm` (relative to the probe), in Hz. θ is measured from `axis`.
pub fn dipolar_coupling(r_nm: [f64; 3], axis: [f64; 3]) -> Result<f64> {
    let r = Vector3::from(r_nm);
    let dist = r.norm();
    if !(dist > MIN_SEPARATION_NM) {
        return Err(Error::domain(format!(
            "defect at {dist} nm is closer than {MIN_SEPARATION_NM} nm"
        )));
    }
    let axis = Vector3::from(axis);
    let cos_theta = r.dot(&axis) / (dist * axis.norm());
    Ok(dipolar_prefactor_hz_nm3() * (1.0 - 3.0 * cos_theta * cos_theta) / dist.powi(3))
}

/// Geometric mean of the neutral populations, (Π ρᵢ)^(1/N).
///
/// Returns 0 when any population is 0.
pub fn geometric_mean_rho(defects: &[NsDefect]) -> Result<f64> {
    if defects.is_empty() {
        return Err(Error::domain("geometric mean of an empty defect list"));
    }
    for d in defects {
        d.validate()?;
    }
    if defects.iter().any(|d| d.rho == 0.0) {
        return Ok(0.0);
    }
    let log_sum: f64 = defects.iter().map(|d| d.rho.ln()).sum();
    Ok((log_sum / defects.len() as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Z: [f64; 3] = [0.0, 0.0, 1.0];

    #[test]
    fn magic_angle_coupling_vanishes() {
        let theta = (1.0f64 / 3.0).sqrt().acos();
        assert!((theta.to_degrees() - 54.7356).abs() < 1e-4);
        for r in [1.0, 5.0, 20.0] {
            let pos = [r * theta.sin(), 0.0, r * theta.cos()];
            let a = dipolar_coupling(pos, Z).unwrap();
            assert!(a.abs() <= 1e-6 * dipolar_prefactor_hz_nm3() / r.powi(3));
        }
    }

    #[test]
    fn doubling_distance_divides_by_eight() {
        let a1 = dipolar_coupling([1.0, 2.0, 3.0], nv_axis_111()).unwrap();
        let a2 = dipolar_coupling([2.0, 4.0, 6.0], nv_axis_111()).unwrap();
        assert!((a1 / a2 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn strong_coupling_round_trips_through_bisection() {
        // |a(r)| on the axis is monotone in r; bisect for 158.6 kHz.
        let target = 158.6e3;
        let f = |r: f64| dipolar_coupling([0.0, 0.0, r], Z).unwrap().abs() - target;
        let (mut lo, mut hi) = (1.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let analytic = (2.0 * dipolar_prefactor_hz_nm3() / target).cbrt();
        assert!((r - analytic).abs() < 1e-9);
        assert!((r - 8.69).abs() < 0.01);
        let a = dipolar_coupling([0.0, 0.0, r], Z).unwrap();
        assert!(a < 0.0, "on-axis coupling is negative");
        assert!((a.abs() - target).abs() / target < 1e-9);
    }

    #[test]
    fn prefactor_is_about_52_mhz_nm3() {
        assert!((dipolar_prefactor_hz_nm3() / 52.04e6 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn too_close_is_a_domain_error() {
        assert!(matches!(dipolar_coupling([0.05, 0.0, 0.0], Z), Err(Error::Domain(_))));
        assert!(matches!(dipolar_coupling([0.0; 3], Z), Err(Error::Domain(_))));
    }

    #[test]
    fn geometric_mean_examples() {
        let d = |rho| NsDefect::new(rho, 1e5, 0.0).unwrap();
        let g = geometric_mean_rho(&[d(0.474), d(0.302)]).unwrap();
        assert!((g - 0.3784).abs() < 1e-4);
        assert!((geometric_mean_rho(&[d(0.37)]).unwrap() - 0.37).abs() < 1e-15);
        assert!((geometric_mean_rho(&[d(1.0), d(1.0), d(1.0)]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(geometric_mean_rho(&[d(0.0), d(0.5)]).unwrap(), 0.0);
        assert!(geometric_mean_rho(&[]).is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(NsDefect::new(1.2, 1e5, 0.0).is_err());
        assert!(NsDefect::new(0.5, 1e5, f64::NAN).is_err());
        assert!(ProbeSpin::new(1e4, 3.5).is_err());
        assert!(ProbeSpin::new(-1.0, 1.0).is_err());
        let mut s = MeasurementSettings::default();
        s.validate().unwrap();
        s.p1_transition_freqs[1] = s.p1_transition_freqs[0];
        assert!(s.validate().is_err());
        assert!(ChargeSpinPopulation::new(0.5, 0.4, 0.2).is_err());
    }

    #[test]
    fn positioned_defect_is_consistent() {
        let d = NsDefect::at_position(0.5, [3.0, -2.0, 1.0], nv_axis_111(), -30e3).unwrap();
        d.validate_geometry(nv_axis_111()).unwrap();
        let mut bad = d.clone();
        bad.a_dipolar *= 1.01;
        assert!(bad.validate_geometry(nv_axis_111()).is_err());
    }

    #[test]
    fn population_derived_quantities() {
        let p = ChargeSpinPopulation::new(0.3, 0.1, 0.6).unwrap();
        assert!((p.rho() - 0.4).abs() < 1e-15);
        assert!((p.polarization() - 0.5).abs() < 1e-12);
        assert_eq!(ChargeSpinPopulation::new(0.0, 0.0, 1.0).unwrap().polarization(), 0.0);
    }

    proptest! {
        #[test]
        fn coupling_is_even_under_inversion(x in -20.0..20.0f64, y in -20.0..20.0f64, z in -20.0..20.0f64) {
            prop_assume!((x * x + y * y + z * z).sqrt() > 0.2);
            let a = dipolar_coupling([x, y, z], nv_axis_111()).unwrap();
            let b = dipolar_coupling([-x, -y, -z], nv_axis_111()).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }

        #[test]
        fn geometric_mean_is_bracketed(rhos in proptest::collection::vec(0.01..1.0f64, 1..8)) {
            let defects: Vec<_> = rhos.iter().map(|&r| NsDefect::new(r, 1e5, 0.0).unwrap()).collect();
            let g = geometric_mean_rho(&defects).unwrap();
            let lo = rhos.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = rhos.iter().cloned().fold(0.0, f64::max);
            prop_assert!(g >= lo * (1.0 - 1e-12) && g <= hi * (1.0 + 1e-12));
        }
    }
}
