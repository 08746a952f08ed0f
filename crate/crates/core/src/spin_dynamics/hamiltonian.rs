use num_complex::Complex64;

use super::operators::{embed, half_sigma_z, in_plane, probe_sz, CMatrix};
use super::register::{SiteCharge, SpinRegister};
use super::sequence::{DriveTarget, PulseSegment};
use crate::error::{Error, Result};

/// Relative tolerance for grouping degenerate drive eigenvalues.
const DEGENERACY_TOL: f64 = 1e-6;

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Static part: a·Sz·Pz for neutral sites, Stark shift d·Sz for ionized ones. Hz.
pub fn coupling_hamiltonian(register: &SpinRegister) -> CMatrix {
    let n = register.n_sites();
    let sz = embed(&probe_sz(), 0, n);
    let mut h = CMatrix::zeros(register.dim(), register.dim());
    for (k, site) in register.sites().iter().enumerate() {
        match site.charge {
            SiteCharge::Neutral { .. } => {
                h += &sz * embed(&half_sigma_z(), k + 1, n) * re(site.coupling_hz);
            }
            SiteCharge::Ionized => h += &sz * re(site.stark_hz),
        }
    }
    h
}

/// Rotating-frame drive terms of a segment. Tones aimed at unaddressed or
/// ionized sites have no effect.
pub fn drive_hamiltonian(segment: &PulseSegment, register: &SpinRegister) -> Result<CMatrix> {
    let n = register.n_sites();
    let mut h = CMatrix::zeros(register.dim(), register.dim());
    if let PulseSegment::Microwave { drives, .. } = segment {
        for drive in drives {
            let site = match drive.target {
                DriveTarget::Probe => 0,
                DriveTarget::DarkSpin(k) => {
                    let Some(dark) = register.sites().get(k) else {
                        return Err(Error::domain(format!(
                            "drive targets dark spin {k} but the register holds {}",
                            register.n_dark()
                        )));
                    };
                    if !dark.is_addressed() {
                        continue;
                    }
                    k + 1
                }
            };
            let local = in_plane(drive.phase_rad) * re(drive.rabi_hz) + half_sigma_z() * re(drive.detuning_hz);
            h += embed(&local, site, n);
        }
    }
    Ok(h)
}

/// Hamiltonian in Hz for one segment; the propagator is exp(−i2πHt).
///
/// Secular microwave segments keep only the block-diagonal part of the
/// coupling with respect to the drive eigenspaces.
pub fn build_hamiltonian(segment: &PulseSegment, register: &SpinRegister) -> Result<CMatrix> {
    segment.validate()?;
    let h0 = coupling_hamiltonian(register);
    let hd = drive_hamiltonian(segment, register)?;
    let h = match segment {
        PulseSegment::Microwave { secular: true, .. } => secular_part(&h0, &hd) + hd,
        _ => h0 + hd,
    };
    Ok((&h + h.adjoint()) * re(0.5))
}

/// Σ_k P_k h0 P_k over the degenerate eigenspaces P_k of `hd`.
pub fn secular_part(h0: &CMatrix, hd: &CMatrix) -> CMatrix {
    let eig = hd.clone().symmetric_eigen();
    let dim = hd.nrows();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let tol = DEGENERACY_TOL * scale;

    let mut out = CMatrix::zeros(dim, dim);
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] <= tol {
            end += 1;
        }
        let block = CMatrix::from_fn(dim, end - start, |r, c| eig.eigenvectors[(r, order[start + c])]);
        let projector = &block * block.adjoint();
        out += &projector * h0 * &projector;
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_dynamics::register::DarkSite;
    use crate::spin_dynamics::sequence::Drive;

    fn eigenvalues(h: &CMatrix) -> Vec<f64> {
        let mut e: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    fn register(a: f64) -> SpinRegister {
        SpinRegister::new(vec![DarkSite::addressed(a)], 1.0, &[0.0]).unwrap()
    }

    #[test]
    fn delay_is_diagonal_coupling() {
        let reg = register(158.6e3);
        let h = build_hamiltonian(&PulseSegment::delay(1e-6), &reg).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                if r != c {
                    assert_eq!(h[(r, c)].norm(), 0.0);
                }
            }
        }
        // |−1, ↓⟩: (−1)(−1/2)a
        assert!((h[(3, 3)].re - 0.5 * 158.6e3).abs() < 1e-9);
        assert!((h[(2, 2)].re + 0.5 * 158.6e3).abs() < 1e-9);
        assert_eq!(h[(0, 0)].re, 0.0);
    }

    #[test]
    fn probe_drive_eigenvalues() {
        let reg = register(0.0);
        let omega = 4e5;
        let seg = PulseSegment::microwave(vec![Drive::probe(omega, 0.0)], 1e-6);
        let h = build_hamiltonian(&seg, &reg).unwrap();
        let e = eigenvalues(&h);
        // ±Ω/2 in Hz, i.e. ±πΩ in angular units.
        assert!((e[0] + omega / 2.0).abs() < 1e-6 && (e[3] - omega / 2.0).abs() < 1e-6);
        assert!((&h - h.adjoint()).camax() <= 1e-12);
    }

    #[test]
    fn out_of_range_target_is_domain_error() {
        let reg = register(1e5);
        let seg = PulseSegment::microwave(vec![Drive::dark(1, 1e5, 0.0)], 1e-6);
        assert!(matches!(build_hamiltonian(&seg, &reg), Err(Error::Domain(_))));
    }

    #[test]
    fn avoided_crossing_at_hartmann_hahn_matching() {
        let a = 158.6e3;
        let omega = 4e5;
        let reg = register(a);
        let mut best = (f64::INFINITY, 0.0);
        let n = 801;
        for i in 0..n {
            let od = omega - 2.0 * a + 4.0 * a * i as f64 / (n - 1) as f64;
            let seg = PulseSegment::microwave(
                vec![Drive::probe(omega, std::f64::consts::FRAC_PI_2), Drive::dark(0, od, std::f64::consts::FRAC_PI_2)],
                1e-6,
            );
            let e = eigenvalues(&build_hamiltonian(&seg, &reg).unwrap());
            let gap = e[2] - e[1];
            if gap < best.0 {
                best = (gap, od);
            }
        }
        // Dressed-state flip-flop: minimum splitting a/2 near Ω_dark = Ω_probe.
        assert!((best.1 - omega).abs() < 0.1 * a, "crossing at {}", best.1);
        assert!((best.0 / (a / 2.0) - 1.0).abs() < 0.1, "gap {}", best.0);
    }

    #[test]
    fn secular_lock_has_exact_flip_flop() {
        let a = 158.6e3;
        let reg = register(a);
        let y = std::f64::consts::FRAC_PI_2;
        let seg = PulseSegment::Microwave {
            drives: vec![Drive::probe(4e5, y), Drive::dark(0, 4e5, y)],
            duration_s: 1e-6,
            secular: true,
        };
        let e = eigenvalues(&build_hamiltonian(&seg, &reg).unwrap());
        assert!((e[2] - e[1] - a / 2.0).abs() < 1e-6);
    }
}
