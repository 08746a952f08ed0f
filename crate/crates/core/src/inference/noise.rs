//! Separation of magnetic and electric dephasing from SQ and DQ Ramsey rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear map (Γ_mag, Γ_elec) → (Γ_SQ, Γ_DQ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub matrix: [[f64; 2]; 2],
}

impl Default for NoiseModel {
    /// SQ sees both channels once; DQ is twice as magnetically sensitive and
    /// blind to axial electric noise.
    fn default() -> Self {
        NoiseModel {
            matrix: [[1.0, 1.0], [2.0, 0.0]],
        }
    }
}

impl NoiseModel {
    fn det(&self) -> f64 {
        let m = self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn validate(&self) -> Result<()> {
        let scale = self.matrix.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(self.det().abs() > 1e-12 * scale * scale) {
            return Err(Error::domain("noise model matrix is singular"));
        }
        Ok(())
    }

    /// (Γ_SQ, Γ_DQ) for given channel rates.
    pub fn forward(&self, rates: &NoiseRates) -> (f64, f64) {
        let m = self.matrix;
        (
            m[0][0] * rates.gamma_mag + m[0][1] * rates.gamma_elec,
            m[1][0] * rates.gamma_mag + m[1][1] * rates.gamma_elec,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRates {
    pub gamma_mag: f64,
    pub gamma_elec: f64,
    /// Set when an inferred rate is negative; values are not clipped.
    pub warning: Option<String>,
}

impl NoiseRates {
    pub fn new(gamma_mag: f64, gamma_elec: f64) -> Self {
        NoiseRates {
            gamma_mag,
            gamma_elec,
            warning: None,
        }
    }

    pub fn is_physical(&self) -> bool {
        self.warning.is_none()
    }
}

pub fn extract_noise(gamma_sq: f64, gamma_dq: f64) -> Result<NoiseRates> {
    extract_noise_with(gamma_sq, gamma_dq, &NoiseModel::default())
}

pub fn extract_noise_with(gamma_sq: f64, gamma_dq: f64, model: &NoiseModel) -> Result<NoiseRates> {
    if !(gamma_sq >= 0.0 && gamma_dq >= 0.0) || !gamma_sq.is_finite() || !gamma_dq.is_finite() {
        return Err(Error::domain(format!(
            "dephasing rates must be finite and >= 0, got ({gamma_sq}, {gamma_dq})"
        )));
    }
    model.validate()?;
    let m = model.matrix;
    let det = model.det();
    let gamma_mag = (m[1][1] * gamma_sq - m[0][1] * gamma_dq) / det;
    let gamma_elec = (m[0][0] * gamma_dq - m[1][0] * gamma_sq) / det;
    let mut rates = NoiseRates::new(gamma_mag, gamma_elec);
    let negative: Vec<&str> = [("gamma_mag", gamma_mag), ("gamma_elec", gamma_elec)]
        .iter()
        .filter(|(_, v)| *v < 0.0)
        .map(|(n, _)| *n)
        .collect();
    if !negative.is_empty() {
        rates.warning = Some(format!("unphysical negative rate: {}", negative.join(", ")));
    }
    Ok(rates)
}
