use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lsq::{is_singular, minimize, standard_errors, LeastSquares, LmOptions, LmOutcome};
use crate::charge::{cross_section, dark_rates_from_relaxation, PhotonFluxModel, SaturationModel};
use crate::coherence::{odmr_spectrum, LineShape};
use crate::defect::NsDefect;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BTreeMap<String, f64>,
    /// Euclidean norm of the (weighted) residual vector.
    pub residual_norm: f64,
    /// Present only when `converged`.
    pub std_errors: BTreeMap<String, f64>,
    pub n_evals: usize,
    pub converged: bool,
}

impl FitResult {
    pub(crate) fn from_outcome(names: &[String], out: &LmOutcome) -> Self {
        let converged = out.terminated && out.cost.is_finite() && !is_singular(&out.jacobian);
        let params = names.iter().cloned().zip(out.params.iter().copied()).collect();
        let std_errors = if converged {
            standard_errors(&out.jacobian, out.cost)
                .map(|se| names.iter().cloned().zip(se).collect())
                .unwrap_or_default()
        } else {
            BTreeMap::new()
        };
        FitResult {
            params,
            residual_norm: out.cost.sqrt(),
            std_errors,
            n_evals: out.n_evals,
            converged: converged && out.cost.is_finite(),
        }
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or(f64::NAN)
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn check_xy(x: &[f64], y: &[f64], min_points: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::domain(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < min_points {
        return Err(Error::domain(format!("need at least {min_points} points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("data contain non-finite values"));
    }
    Ok(())
}

/// Ordinary least squares for y ≈ c0·f0 + c1·f1.
fn linear_two(f0: &[f64], f1: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mut a00, mut a01, mut a11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..y.len() {
        a00 += f0[i] * f0[i];
        a01 += f0[i] * f1[i];
        a11 += f1[i] * f1[i];
        b0 += f0[i] * y[i];
        b1 += f1[i] * y[i];
    }
    let det = a00 * a11 - a01 * a01;
    let (c0, c1) = if det.abs() > 1e-300 {
        ((b0 * a11 - b1 * a01) / det, (a00 * b1 - a01 * b0) / det)
    } else if a00 > 0.0 {
        (b0 / a00, 0.0)
    } else {
        (0.0, 0.0)
    };
    let ssr = (0..y.len()).map(|i| (c0 * f0[i] + c1 * f1[i] - y[i]).powi(2)).sum();
    (c0, c1, ssr)
}

struct MonoExp<'a> {
    t: &'a [f64],
    y: &'a [f64],
}

impl LeastSquares for MonoExp<'_> {
    fn n_params(&self) -> usize {
        3
    }
    fn n_residuals(&self) -> usize {
        self.t.len()
    }
    fn residuals(&self, p: &[f64], r: &mut [f64]) -> bool {
        let (rate, amp, off) = (p[0], p[1], p[2]);
        for i in 0..self.t.len() {
            r[i] = off + amp * (-rate * self.t[i]).exp() - self.y[i];
        }
        r.iter().all(|v| v.is_finite())
    }
    fn jacobian(&self, p: &[f64], _r: &[f64], jac: &mut DMatrix<f64>) {
        for i in 0..self.t.len() {
            let e = (-p[0] * self.t[i]).exp();
            jac[(i, 0)] = -p[1] * self.t[i] * e;
            jac[(i, 1)] = e;
            jac[(i, 2)] = 1.0;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonoExpFit {
    pub rate: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub fit: FitResult,
}

/// y ≈ offset + amplitude·e^{−rate·t}, rate > 0.
pub fn fit_mono_exponential(t: &[f64], y: &[f64]) -> Result<MonoExpFit> {
    check_xy(t, y, 4)?;
    let t_min = t.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = t_max - t_min;
    if !(span > 0.0) {
        return Err(Error::domain("time axis has zero span"));
    }
    // Variable projection on a log grid of rates seeds the full fit.
    let ones = vec![1.0; t.len()];
    let mut best = (f64::INFINITY, 1.0 / span, 0.0, 0.0);
    for k in 0..=120 {
        let rate = 1e-2 / span * 10f64.powf(k as f64 / 24.0);
        let e: Vec<f64> = t.iter().map(|&ti| (-rate * (ti - t_min)).exp()).collect();
        let (amp, off, ssr) = linear_two(&e, &ones, y);
        if ssr < best.0 {
            best = (ssr, rate, amp * (rate * t_min).exp(), off);
        }
    }
    let problem = MonoExp { t, y };
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let out = minimize(
        &problem,
        &[best.1, best.2, best.3],
        &[f64::MIN_POSITIVE, -1e6 * scale, -1e6 * scale],
        &[1e6 / span.max(f64::MIN_POSITIVE), 1e6 * scale, 1e6 * scale],
        &LmOptions::default(),
    );
    let fit = FitResult::from_outcome(&names(&["rate", "amplitude", "offset"]), &out);
    Ok(MonoExpFit {
        rate: out.params[0],
        amplitude: out.params[1],
        offset: out.params[2],
        fit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeRelaxationFit {
    pub rho0: f64,
    pub rho_ss: f64,
    pub t_c: f64,
    pub r_ion_dark: f64,
    pub r_rec_dark: f64,
    pub fit: FitResult,
}

/// ρ̄(t) = ρ̄_ss + (ρ̄₀ − ρ̄_ss)·e^{−t/T_c}.
pub fn fit_charge_relaxation(t: &[f64], rho: &[f64]) -> Result<ChargeRelaxationFit> {
    let m = fit_mono_exponential(t, rho)?;
    let t_c = 1.0 / m.rate;
    let rho_ss = m.offset;
    let (r_ion_dark, r_rec_dark) = dark_rates_from_relaxation(rho_ss.clamp(0.0, 1.0), t_c)?;
    Ok(ChargeRelaxationFit {
        rho0: m.offset + m.amplitude,
        rho_ss,
        t_c,
        r_ion_dark,
        r_rec_dark,
        fit: m.fit,
    })
}

struct Saturation<'a> {
    p: &'a [f64],
    g: &'a [f64],
}

impl LeastSquares for Saturation<'_> {
    fn n_params(&self) -> usize {
        2
    }
    fn n_residuals(&self) -> usize {
        self.p.len()
    }
    fn residuals(&self, q: &[f64], r: &mut [f64]) -> bool {
        for i in 0..self.p.len() {
            r[i] = q[0] * self.p[i] / (self.p[i] + q[1]) - self.g[i];
        }
        r.iter().all(|v| v.is_finite())
    }
    fn jacobian(&self, q: &[f64], _r: &[f64], jac: &mut DMatrix<f64>) {
        for i in 0..self.p.len() {
            let den = self.p[i] + q[1];
            jac[(i, 0)] = self.p[i] / den;
            jac[(i, 1)] = -q[0] * self.p[i] / (den * den);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub model: SaturationModel,
    /// Γ_sat/P_sat, 1/(s·W).
    pub low_power_slope: f64,
    pub cross_section_m2: f64,
    /// False when the powers never approach the knee.
    pub p_sat_identifiable: bool,
    pub fit: FitResult,
}

/// Γ(P) = Γ_sat·P/(P + P_sat), with the cross section from the low-power slope.
pub fn fit_saturation(powers: &[f64], rates: &[f64], flux: &PhotonFluxModel) -> Result<SaturationFit> {
    check_xy(powers, rates, 3)?;
    if powers.iter().any(|&p| p < 0.0) {
        return Err(Error::domain("powers must be >= 0"));
    }
    let mut distinct = powers.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::domain("need at least 3 distinct powers"));
    }
    let p_max = distinct[distinct.len() - 1];
    let p_min_pos = distinct.iter().copied().find(|&p| p > 0.0).unwrap_or(p_max);
    let zeros = vec![0.0; powers.len()];
    let mut best = (f64::INFINITY, 0.0, p_max);
    for k in 0..=160 {
        let p_sat = p_min_pos * 0.1 * 10f64.powf(k as f64 / 20.0);
        let f: Vec<f64> = powers.iter().map(|&p| p / (p + p_sat)).collect();
        let (g_sat, _, ssr) = linear_two(&f, &zeros, rates);
        if ssr < best.0 && g_sat > 0.0 {
            best = (ssr, g_sat, p_sat);
        }
    }
    if !(best.1 > 0.0) {
        return Err(Error::FitQuality("rates do not increase with power".into()));
    }
    let problem = Saturation { p: powers, g: rates };
    let out = minimize(
        &problem,
        &[best.1, best.2],
        &[f64::MIN_POSITIVE, f64::MIN_POSITIVE],
        &[f64::MAX, 1e4 * p_max],
        &LmOptions::default(),
    );
    let fit = FitResult::from_outcome(&names(&["gamma_sat", "p_sat"]), &out);
    let model = SaturationModel::new(out.params[0], out.params[1])?;
    let slope = model.low_power_slope();
    Ok(SaturationFit {
        model,
        low_power_slope: slope,
        cross_section_m2: cross_section(slope, flux)?,
        p_sat_identifiable: fit.converged && p_max >= 0.1 * model.p_sat,
        fit,
    })
}

/// Inputs for fitting Stark shifts to an ODMR spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdmrFitSetup {
    pub line_shape: LineShape,
    /// FWHM, Hz.
    pub linewidth: f64,
    pub contrast: f64,
    /// Half-width of the initial Stark-shift grid, Hz.
    pub search_range_hz: f64,
    pub search_steps: usize,
}

impl Default for OdmrFitSetup {
    fn default() -> Self {
        OdmrFitSetup {
            line_shape: LineShape::Lorentzian,
            linewidth: 20e3,
            contrast: 1.0,
            search_range_hz: 200e3,
            search_steps: 81,
        }
    }
}

struct Odmr<'a> {
    defects: &'a [NsDefect],
    freq: &'a [f64],
    amp: &'a [f64],
    setup: &'a OdmrFitSetup,
}

impl Odmr<'_> {
    fn with_shifts(&self, d: &[f64]) -> Vec<NsDefect> {
        self.defects
            .iter()
            .zip(d)
            .map(|(def, &di)| NsDefect { d_stark: di, ..def.clone() })
            .collect()
    }

    fn cost(&self, d: &[f64]) -> f64 {
        let mut r = vec![0.0; self.freq.len()];
        if self.residuals(d, &mut r) {
            r.iter().map(|v| v * v).sum()
        } else {
            f64::INFINITY
        }
    }
}

impl LeastSquares for Odmr<'_> {
    fn n_params(&self) -> usize {
        self.defects.len()
    }
    fn n_residuals(&self) -> usize {
        self.freq.len()
    }
    fn residuals(&self, d: &[f64], r: &mut [f64]) -> bool {
        let Ok(spec) = odmr_spectrum(
            &self.with_shifts(d),
            self.setup.line_shape,
            self.setup.linewidth,
            self.setup.contrast,
            self.freq,
        ) else {
            return false;
        };
        for i in 0..r.len() {
            r[i] = spec.amplitude[i] - self.amp[i];
        }
        true
    }
    fn jacobian(&self, d: &[f64], r: &[f64], jac: &mut DMatrix<f64>) {
        // Central differences on a fixed absolute step in Hz.
        let h = 1e-3 * self.setup.linewidth;
        let mut p = d.to_vec();
        let mut rp = vec![0.0; r.len()];
        let mut rm = vec![0.0; r.len()];
        for j in 0..d.len() {
            p[j] = d[j] + h;
            self.residuals(&p, &mut rp);
            p[j] = d[j] - h;
            self.residuals(&p, &mut rm);
            p[j] = d[j];
            for i in 0..r.len() {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdmrFit {
    pub stark_hz: Vec<f64>,
    pub fit: FitResult,
}

/// Fits Stark shifts dᵢ with ρᵢ and aᵢ held at the given values.
pub fn fit_odmr(freq: &[f64], amplitude: &[f64], defects: &[NsDefect], setup: &OdmrFitSetup) -> Result<OdmrFit> {
    check_xy(freq, amplitude, defects.len() + 1)?;
    if defects.is_empty() {
        return Err(Error::domain("no defects to fit"));
    }
    if setup.search_steps < 2 || !(setup.search_range_hz > 0.0) {
        return Err(Error::domain("search grid needs >= 2 steps and a positive range"));
    }
    let problem = Odmr {
        defects,
        freq,
        amp: amplitude,
        setup,
    };
    let k = defects.len();
    let grid: Vec<f64> = (0..setup.search_steps)
        .map(|i| -setup.search_range_hz + 2.0 * setup.search_range_hz * i as f64 / (setup.search_steps - 1) as f64)
        .collect();
    let mut start: Vec<f64> = defects.iter().map(|d| d.d_stark).collect();
    if k <= 2 {
        let mut best = (f64::INFINITY, start.clone());
        let mut idx = vec![0usize; k];
        loop {
            let d: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
            let c = problem.cost(&d);
            if c < best.0 {
                best = (c, d);
            }
            let mut pos = 0;
            while pos < k {
                idx[pos] += 1;
                if idx[pos] < grid.len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == k {
                break;
            }
        }
        start = best.1;
    } else {
        for _ in 0..3 {
            for j in 0..k {
                let mut best = (problem.cost(&start), start[j]);
                for &g in &grid {
                    let mut trial = start.clone();
                    trial[j] = g;
                    let c = problem.cost(&trial);
                    if c < best.0 {
                        best = (c, g);
                    }
                }
                start[j] = best.1;
            }
        }
    }
    let span = 4.0 * setup.search_range_hz;
    let out = minimize(&problem, &start, &vec![-span; k], &vec![span; k], &LmOptions::default());
    let param_names: Vec<String> = (0..k).map(|i| format!("d{}", i + 1)).collect();
    Ok(OdmrFit {
        stark_hz: out.params.clone(),
        fit: FitResult::from_outcome(&param_names, &out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::linspace;
    use crate::constants::ANGSTROM2;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn noisy(y: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).unwrap();
        y.iter().map(|v| v + n.sample(&mut rng)).collect()
    }

    #[test]
    fn mono_exponential_noiseless_round_trip() {
        let rate = 1.0 / 1.9e-3;
        let t = linspace(0.0, 10e-3, 60);
        let y: Vec<f64> = t.iter().map(|&ti| 0.05 + 0.9 * (-rate * ti).exp()).collect();
        let f = fit_mono_exponential(&t, &y).unwrap();
        assert!(((f.rate - rate) / rate).abs() <= 1e-6, "{}", f.rate);
        assert!(f.fit.residual_norm <= 1e-10);
        assert!(f.fit.converged);
        assert!(f.fit.std_errors.contains_key("rate"));
    }

    #[test]
    fn constant_data_is_unidentifiable() {
        let t = linspace(0.0, 1.0, 20);
        let f = fit_mono_exponential(&t, &vec![0.3; 20]).unwrap();
        assert!(!f.fit.converged);
        assert!(f.fit.std_errors.is_empty());
    }

    #[test]
    fn mono_exponential_with_noise() {
        let rate = 1.0 / 1.9e-3;
        let t = linspace(0.0, 10e-3, 60);
        let y: Vec<f64> = t.iter().map(|&ti| 0.9 * (-rate * ti).exp()).collect();
        let f = fit_mono_exponential(&t, &noisy(&y, 0.01, 5)).unwrap();
        assert!(((f.rate - rate) / rate).abs() <= 0.1);
    }

    #[test]
    fn charge_relaxation_with_noise() {
        let t = linspace(0.0, 2.5e-3, 80);
        let y: Vec<f64> = t.iter().map(|&ti| 0.360 + 0.103 * (-ti / 410e-6).exp()).collect();
        let f = fit_charge_relaxation(&t, &noisy(&y, 0.005, 11)).unwrap();
        assert!((f.rho0 / 0.463 - 1.0).abs() < 0.1);
        assert!((f.rho_ss / 0.360 - 1.0).abs() < 0.1);
        assert!((f.t_c / 410e-6 - 1.0).abs() < 0.1, "{}", f.t_c);
        assert!((1.0 / (f.r_ion_dark + f.r_rec_dark) - f.t_c).abs() < 1e-12);
    }

    fn paper_powers() -> Vec<f64> {
        vec![36e-6, 100e-6, 250e-6, 500e-6, 1000e-6, 1800e-6, 2500e-6, 3300e-6]
    }

    #[test]
    fn saturation_round_trip() {
        let truth = SaturationModel::new(2.6e4, 1.6e-3).unwrap();
        let p = paper_powers();
        let g: Vec<f64> = p.iter().map(|&x| truth.gamma_sat * x / (x + truth.p_sat)).collect();
        let f = fit_saturation(&p, &g, &PhotonFluxModel::default()).unwrap();
        assert!((f.model.p_sat / truth.p_sat - 1.0).abs() < 1e-6);
        assert!((f.model.gamma_sat / truth.gamma_sat - 1.0).abs() < 1e-6);
        assert!(f.p_sat_identifiable);
        assert!(f.fit.residual_norm <= 1e-10 * truth.gamma_sat);

        // Powers rescaled by c rescale P_sat by c.
        let c = 3.7;
        let pc: Vec<f64> = p.iter().map(|x| c * x).collect();
        let fc = fit_saturation(&pc, &g, &PhotonFluxModel::default()).unwrap();
        assert!((fc.model.p_sat / (c * f.model.p_sat) - 1.0).abs() < 1e-9);

        // Rates rescaled by c rescale σ by c.
        let gc: Vec<f64> = g.iter().map(|x| c * x).collect();
        let fg = fit_saturation(&p, &gc, &PhotonFluxModel::default()).unwrap();
        assert!((fg.cross_section_m2 / (c * f.cross_section_m2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cross_section_pipeline_round_trip() {
        let flux = PhotonFluxModel::default();
        let sigma = 2.5e-4 * ANGSTROM2;
        let slope = sigma * flux.flux_per_watt();
        let truth = SaturationModel::new(slope * 1.6e-3, 1.6e-3).unwrap();
        let p = paper_powers();
        let g: Vec<f64> = p.iter().map(|&x| truth.gamma_sat * x / (x + truth.p_sat)).collect();
        let f = fit_saturation(&p, &g, &flux).unwrap();
        assert!((f.cross_section_m2 / sigma - 1.0).abs() < 0.01);
    }

    #[test]
    fn linear_regime_flags_unidentifiable() {
        let p: Vec<f64> = (1..=8).map(|i| i as f64 * 2e-6).collect();
        let g: Vec<f64> = p.iter().map(|&x| 2.6e4 * x / (x + 1.6e-3)).collect();
        let f = fit_saturation(&p, &g, &PhotonFluxModel::default()).unwrap();
        assert!(!f.p_sat_identifiable);
        let line: Vec<f64> = p.iter().map(|&x| 1.64e7 * x).collect();
        let f = fit_saturation(&p, &line, &PhotonFluxModel::default()).unwrap();
        assert!(!f.p_sat_identifiable);
    }

    fn pair(d1: f64, d2: f64) -> Vec<NsDefect> {
        vec![
            NsDefect::new(0.474, 158.6e3, d1).unwrap(),
            NsDefect::new(0.302, 125e3, d2).unwrap(),
        ]
    }

    #[test]
    fn odmr_stark_round_trip_and_mirror() {
        let setup = OdmrFitSetup::default();
        let freq = linspace(-400e3, 400e3, 401);
        let truth = pair(-41e3, -33e3);
        let spec = odmr_spectrum(&truth, setup.line_shape, setup.linewidth, setup.contrast, &freq).unwrap();
        let start = pair(0.0, 0.0);
        let f = fit_odmr(&freq, &spec.amplitude, &start, &setup).unwrap();
        assert!((f.stark_hz[0] + 41e3).abs() < 500.0 && (f.stark_hz[1] + 33e3).abs() < 500.0, "{:?}", f.stark_hz);
        assert!(f.fit.converged);

        let mirrored: Vec<f64> = spec.amplitude.iter().rev().copied().collect();
        let m = fit_odmr(&freq, &mirrored, &start, &setup).unwrap();
        assert!((m.stark_hz[0] - 41e3).abs() < 500.0 && (m.stark_hz[1] - 33e3).abs() < 500.0, "{:?}", m.stark_hz);
    }

    #[test]
    fn fully_neutral_defects_leave_stark_unidentifiable() {
        let setup = OdmrFitSetup::default();
        let freq = linspace(-400e3, 400e3, 201);
        let defects = vec![NsDefect::new(1.0, 158.6e3, -41e3).unwrap()];
        let spec = odmr_spectrum(&defects, setup.line_shape, setup.linewidth, setup.contrast, &freq).unwrap();
        let f = fit_odmr(&freq, &spec.amplitude, &defects, &setup).unwrap();
        assert!(!f.fit.converged || f.fit.std_errors.values().any(|s| !s.is_finite()));
    }
}
