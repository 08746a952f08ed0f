//! Closed-form probe signals: stretched-exponential background, the
//! charge-weighted complex DEER coherence and the CW ODMR spectrum.

mod odmr;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::defect::{NsDefect, ProbeSpin};
use crate::error::{Error, Result};
use crate::par::Parallelism;

pub use odmr::{odmr_spectrum, ChargeConfiguration, LineShape, OdmrLine, OdmrSpectrum, MAX_ODMR_DEFECTS};

/// Sampled complex probe signal S(τ) = S₀ + i·S_{π/2}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    /// Delay times, s, strictly increasing.
    pub tau: Vec<f64>,
    pub signal: Vec<Complex64>,
}

impl CoherenceCurve {
    pub fn new(tau: Vec<f64>, signal: Vec<Complex64>) -> Result<Self> {
        let curve = CoherenceCurve { tau, signal };
        curve.validate()?;
        Ok(curve)
    }

    /// Curve from measured in-phase data only.
    pub fn from_in_phase(tau: Vec<f64>, s0: &[f64]) -> Result<Self> {
        let signal = s0.iter().map(|&re| Complex64::new(re, 0.0)).collect();
        Self::new(tau, signal)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.len() != self.signal.len() {
            return Err(Error::domain("tau and signal lengths differ"));
        }
        if self.tau.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("tau grid must be strictly increasing"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn in_phase(&self) -> Vec<f64> {
        self.signal.iter().map(|s| s.re).collect()
    }

    pub fn out_of_phase(&self) -> Vec<f64> {
        self.signal.iter().map(|s| s.im).collect()
    }
}

/// exp(−(γτ)ⁿ).
pub fn background_decay(tau: f64, gamma: f64, n: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("negative delay {tau}")));
    }
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("negative decay rate {gamma}")));
    }
    if !(0.5..=3.0).contains(&n) {
        return Err(Error::domain(format!("stretch exponent {n} outside [0.5, 3]")));
    }
    Ok((-(gamma * tau).powf(n)).exp())
}

fn check_polarization(p: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("polarization {p} outside [-1, 1]")));
    }
    Ok(())
}

/// Coherence with one strongly coupled spin of coupling `a` (Hz) and
/// polarization `p`: e^{−(Γτ)ⁿ}(cos πaτ + i·p·sin πaτ).
pub fn single_spin_coherence(tau: f64, probe: &ProbeSpin, a: f64, p: f64) -> Result<Complex64> {
    check_polarization(p)?;
    let bg = background_decay(tau, probe.gamma_bg, probe.stretch_n)?;
    let phase = PI * a * tau;
    Ok(bg * Complex64::new(phase.cos(), p * phase.sin()))
}

/// Charge-weighted DEER coherence:
/// e^{−(Γτ)ⁿ} Πᵢ [(1 − ηρᵢ) + ηρᵢ(cos πaᵢτ + i·pᵢ·sin πaᵢτ)].
pub fn deer_signal(tau: f64, probe: &ProbeSpin, eta: f64, defects: &[(NsDefect, f64)]) -> Result<Complex64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!("eta = {eta} outside [0, 1]")));
    }
    let bg = background_decay(tau, probe.gamma_bg, probe.stretch_n)?;
    let mut product = Complex64::new(1.0, 0.0);
    for (defect, p) in defects {
        defect.validate()?;
        check_polarization(*p)?;
        let weight = eta * defect.rho;
        let phase = PI * defect.a_dipolar * tau;
        product *= Complex64::new(1.0 - weight + weight * phase.cos(), weight * p * phase.sin());
    }
    Ok(bg * product)
}

/// Evaluates [`deer_signal`] over a delay grid.
pub fn deer_curve(
    tau: &[f64],
    probe: &ProbeSpin,
    eta: f64,
    defects: &[(NsDefect, f64)],
    parallelism: Parallelism,
) -> Result<CoherenceCurve> {
    let signal = parallelism
        .map(tau, |&t| deer_signal(t, probe, eta, defects))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    CoherenceCurve::new(tau.to_vec(), signal)
}

/// Delay at which |S_{π/2}| peaks; earliest delay wins ties.
pub fn find_probe_point(curve: &CoherenceCurve) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::domain("empty coherence curve"));
    }
    let mut best = (0usize, 0.0f64);
    for (i, s) in curve.signal.iter().enumerate() {
        if s.im.abs() > best.1 {
            best = (i, s.im.abs());
        }
    }
    if best.1 == 0.0 {
        return Err(Error::NoOutOfPhaseSignal);
    }
    Ok(curve.tau[best.0])
}

/// Uniform grid of `n` points on [start, stop].
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n).map(|i| start + step * i as f64).collect()
        }
    }
}
