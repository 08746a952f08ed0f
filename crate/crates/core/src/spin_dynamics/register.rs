use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::operators::{embed, half_sigma_x, half_sigma_y, half_sigma_z, CMatrix};
use crate::error::{Error, Result};

pub const MAX_DARK_SPINS: usize = 3;
pub const STATE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn half_pauli(self) -> CMatrix {
        match self {
            Axis::X => half_sigma_x(),
            Axis::Y => half_sigma_y(),
            Axis::Z => half_sigma_z(),
        }
    }
}

/// Charge state of one dark site within a simulated branch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SiteCharge {
    /// Spin-carrying; `addressed` when a microwave tone reaches this spin.
    Neutral { addressed: bool },
    /// Spinless; shifts the probe by the site's Stark shift.
    Ionized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarkSite {
    pub coupling_hz: f64,
    pub stark_hz: f64,
    pub charge: SiteCharge,
}

impl DarkSite {
    pub fn addressed(coupling_hz: f64) -> Self {
        DarkSite {
            coupling_hz,
            stark_hz: 0.0,
            charge: SiteCharge::Neutral { addressed: true },
        }
    }

    pub fn is_neutral(&self) -> bool {
        matches!(self.charge, SiteCharge::Neutral { .. })
    }

    pub fn is_addressed(&self) -> bool {
        matches!(self.charge, SiteCharge::Neutral { addressed: true })
    }
}

/// Probe plus up to three dark spins, as a density operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinRegister {
    sites: Vec<DarkSite>,
    state: CMatrix,
}

fn qubit_state(polarization: f64) -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 0)] = Complex64::new(0.5 * (1.0 + polarization), 0.0);
    m[(1, 1)] = Complex64::new(0.5 * (1.0 - polarization), 0.0);
    m
}

impl SpinRegister {
    /// Product state with the probe polarized `probe_polarization` along z
    /// (+1 = |0⟩) and each dark spin polarized `dark_polarizations[k]` along z.
    pub fn new(sites: Vec<DarkSite>, probe_polarization: f64, dark_polarizations: &[f64]) -> Result<Self> {
        if sites.is_empty() || sites.len() > MAX_DARK_SPINS {
            return Err(Error::Capacity(format!(
                "register holds 1 to {MAX_DARK_SPINS} dark spins, got {}",
                sites.len()
            )));
        }
        if dark_polarizations.len() != sites.len() {
            return Err(Error::domain("one polarization per dark site required"));
        }
        for p in std::iter::once(&probe_polarization).chain(dark_polarizations) {
            if !(-1.0..=1.0).contains(p) {
                return Err(Error::domain(format!("polarization {p} outside [-1, 1]")));
            }
        }
        let mut state = qubit_state(probe_polarization);
        for (site, &p) in sites.iter().zip(dark_polarizations) {
            // Ionized sites carry no spin; their slot stays maximally mixed.
            let p = if site.is_neutral() { p } else { 0.0 };
            state = state.kronecker(&qubit_state(p));
        }
        Ok(SpinRegister { sites, state })
    }

    pub fn with_state(sites: Vec<DarkSite>, state: CMatrix) -> Result<Self> {
        let dim = 1usize << (sites.len() + 1);
        if state.nrows() != dim || state.ncols() != dim {
            return Err(Error::domain(format!("state must be {dim}x{dim}")));
        }
        let reg = SpinRegister { sites, state };
        reg.validate()?;
        Ok(reg)
    }

    pub fn n_dark(&self) -> usize {
        self.sites.len()
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.state.nrows()
    }

    pub fn sites(&self) -> &[DarkSite] {
        &self.sites
    }

    pub fn couplings(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.coupling_hz).collect()
    }

    pub fn state(&self) -> &CMatrix {
        &self.state
    }

    pub(crate) fn set_state(&mut self, state: CMatrix) {
        self.state = state;
    }

    pub fn expectation(&self, op: &CMatrix) -> f64 {
        (&self.state * op).trace().re
    }

    /// ⟨σ_axis⟩ of the probe pseudo-spin.
    pub fn probe_polarization(&self, axis: Axis) -> f64 {
        2.0 * self.expectation(&embed(&axis.half_pauli(), 0, self.n_sites()))
    }

    /// ⟨σ_axis⟩ of dark spin `k`; zero for ionized sites.
    pub fn dark_polarization(&self, k: usize, axis: Axis) -> f64 {
        if !self.sites[k].is_neutral() {
            return 0.0;
        }
        2.0 * self.expectation(&embed(&axis.half_pauli(), k + 1, self.n_sites()))
    }

    pub fn purity(&self) -> f64 {
        (&self.state * &self.state).trace().re
    }

    /// Hermiticity, unit trace and positivity within [`STATE_TOL`].
    pub fn validate(&self) -> Result<()> {
        let herm_err = (&self.state - self.state.adjoint()).camax();
        if herm_err > STATE_TOL {
            return Err(Error::NumericalInstability(format!("state not Hermitian ({herm_err:e})")));
        }
        let trace = self.state.trace();
        if (trace.re - 1.0).abs() > STATE_TOL || trace.im.abs() > STATE_TOL {
            return Err(Error::NumericalInstability(format!("trace drifted to {trace}")));
        }
        let hermitian = (&self.state + self.state.adjoint()) * Complex64::new(0.5, 0.0);
        let min_eig = hermitian
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -STATE_TOL {
            return Err(Error::NumericalInstability(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(())
    }
}
