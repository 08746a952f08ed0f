//! Spin operators on the register's tensor-product space.
//!
//! Site 0 is the probe, restricted to its {|0⟩, |−1⟩} pair (index 0 ↔ m_s = 0);
//! sites 1..=K are spin-1/2 dark spins (index 0 ↔ ↑). The probe is the most
//! significant factor of the Kronecker product.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// σx/2.
pub fn half_sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0)])
}

/// σy/2.
pub fn half_sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -0.5), c(0.0, 0.5), c(0.0, 0.0)])
}

/// σz/2.
pub fn half_sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)])
}

/// Probe spin-1 projection on the {0, −1} pair: diag(0, −1).
pub fn probe_sz() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// σ₊ = |↑⟩⟨↓| in the index-0-up convention.
pub fn sigma_plus() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
}

pub fn sigma_minus() -> CMatrix {
    sigma_plus().adjoint()
}

/// Drive term cos φ·σx/2 + sin φ·σy/2.
pub fn in_plane(phase: f64) -> CMatrix {
    half_sigma_x() * c(phase.cos(), 0.0) + half_sigma_y() * c(phase.sin(), 0.0)
}

/// Places a single-site operator at `site` of an `n_sites` register.
pub fn embed(op: &CMatrix, site: usize, n_sites: usize) -> CMatrix {
    let mut out = CMatrix::identity(1, 1);
    for s in 0..n_sites {
        out = if s == site {
            out.kronecker(op)
        } else {
            out.kronecker(&CMatrix::identity(2, 2))
        };
    }
    out
}

/// Product of two single-site operators on distinct sites.
pub fn embed_pair(op_a: &CMatrix, site_a: usize, op_b: &CMatrix, site_b: usize, n_sites: usize) -> CMatrix {
    embed(op_a, site_a, n_sites) * embed(op_b, site_b, n_sites)
}
