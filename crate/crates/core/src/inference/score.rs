//! Least-squares scoring of candidate configurations against DEER data.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::configurations::CandidateConfiguration;
use super::fit::FitResult;
use super::lsq::{is_singular, minimize, standard_errors, LeastSquares, LmOptions};
use crate::coherence::CoherenceCurve;
use crate::error::{Error, Result};

/// One DEER curve with its addressed fraction η. Only the in-phase part is fitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeerDataset {
    pub curve: CoherenceCurve,
    pub eta: f64,
    /// Optional per-point weights (e.g. inverse shot-noise variance).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl DeerDataset {
    pub fn new(curve: CoherenceCurve, eta: f64) -> Self {
        DeerDataset {
            curve,
            eta,
            weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.curve.validate()?;
        if self.curve.is_empty() {
            return Err(Error::domain("empty DEER dataset"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::domain(format!("eta {} outside (0, 1]", self.eta)));
        }
        if self.curve.tau.iter().any(|&t| t < 0.0) {
            return Err(Error::domain("negative tau in DEER dataset"));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.curve.len() || w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(Error::domain("weights must be finite, >= 0 and one per point"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    /// Smallest peak contrast η(1 − cos πaτ) over the data for a defect's ρ to
    /// be fitted; weaker defects are held at ρ = 0.
    pub resolve_threshold: f64,
    pub gamma_bounds: (f64, f64),
    pub stretch_bounds: (f64, f64),
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            resolve_threshold: 0.02,
            gamma_bounds: (1e2, 1e7),
            stretch_bounds: (0.5, 3.0),
            max_iter: 60,
            tolerance: 1e-10,
        }
    }
}

impl ScoreOptions {
    fn lm(&self) -> LmOptions {
        LmOptions {
            max_iter: self.max_iter,
            ftol: self.tolerance,
            xtol: self.tolerance,
            gtol: self.tolerance,
        }
    }
}

struct Prepared {
    eta: f64,
    tau: Vec<f64>,
    ln_tau: Vec<f64>,
    y: Vec<f64>,
    sw: Vec<f64>,
    tau_max: f64,
}

/// Datasets pre-processed once for repeated scoring.
pub struct ScoringData {
    sets: Vec<Prepared>,
    options: ScoreOptions,
    n_points: usize,
    /// Background (ln Γ, n) from the defect-free fit, used as the start point.
    start: (f64, f64),
}

impl ScoringData {
    pub fn new(datasets: &[DeerDataset], options: ScoreOptions) -> Result<Self> {
        if datasets.is_empty() {
            return Err(Error::domain("at least one DEER dataset is required"));
        }
        let (g_lo, g_hi) = options.gamma_bounds;
        let (n_lo, n_hi) = options.stretch_bounds;
        if !(g_lo > 0.0 && g_lo < g_hi && n_lo > 0.0 && n_lo < n_hi) {
            return Err(Error::domain("invalid background bounds"));
        }
        let mut sets = Vec::with_capacity(datasets.len());
        for d in datasets {
            d.validate()?;
            let tau = d.curve.tau.clone();
            sets.push(Prepared {
                eta: d.eta,
                ln_tau: tau.iter().map(|&t| if t > 0.0 { t.ln() } else { f64::NEG_INFINITY }).collect(),
                y: d.curve.in_phase(),
                sw: match &d.weights {
                    Some(w) => w.iter().map(|x| x.sqrt()).collect(),
                    None => vec![1.0; tau.len()],
                },
                tau_max: tau.iter().copied().fold(0.0, f64::max),
                tau,
            });
        }
        let n_points = sets.iter().map(|s| s.tau.len()).sum();
        let mut data = ScoringData {
            sets,
            options,
            n_points,
            start: (((g_lo * g_hi).sqrt()).ln(), 0.5 * (n_lo + n_hi)),
        };
        data.start = data.background_start();
        Ok(data)
    }

    pub fn options(&self) -> &ScoreOptions {
        &self.options
    }

    fn background_start(&self) -> (f64, f64) {
        // Coarse grid, then LM on the defect-free model.
        let (g_lo, g_hi) = self.options.gamma_bounds;
        let (n_lo, n_hi) = self.options.stretch_bounds;
        let empty = DeerModel {
            data: self,
            c: Vec::new(),
        };
        let mut best = (f64::INFINITY, self.start.0, self.start.1);
        let mut r = vec![0.0; self.n_points];
        for i in 0..=40 {
            let lg = g_lo.ln() + (g_hi / g_lo).ln() * i as f64 / 40.0;
            for j in 0..=10 {
                let n = n_lo + (n_hi - n_lo) * j as f64 / 10.0;
                if empty.residuals(&[lg, n], &mut r) {
                    let c: f64 = r.iter().map(|v| v * v).sum();
                    if c < best.0 {
                        best = (c, lg, n);
                    }
                }
            }
        }
        let out = minimize(
            &empty,
            &[best.1, best.2],
            &[g_lo.ln(), n_lo],
            &[g_hi.ln(), n_hi],
            &self.options.lm(),
        );
        (out.params[0], out.params[1])
    }

    /// Whether a coupling produces visible contrast within the data range.
    pub fn is_resolved(&self, a: f64) -> bool {
        self.sets.iter().any(|s| {
            let phase = (PI * a.abs() * s.tau_max).min(PI);
            s.eta * (1.0 - phase.cos()) >= self.options.resolve_threshold
        })
    }
}

/// Product model over the resolved defects; parameters are
/// [ρ₁ … ρ_R, ln Γ, n].
struct DeerModel<'a> {
    data: &'a ScoringData,
    /// c[k][global point] = 1 − cos(π a_k τ).
    c: Vec<Vec<f64>>,
}

impl<'a> DeerModel<'a> {
    fn new(data: &'a ScoringData, couplings: &[f64]) -> Self {
        let c = couplings
            .iter()
            .map(|&a| {
                data.sets
                    .iter()
                    .flat_map(|s| s.tau.iter().map(move |&t| 1.0 - (PI * a * t).cos()))
                    .collect()
            })
            .collect();
        DeerModel { data, c }
    }

    fn background(ln_gamma: f64, n: f64, ln_tau: f64) -> (f64, f64) {
        if ln_tau == f64::NEG_INFINITY {
            return (1.0, 0.0);
        }
        let x = (n * (ln_gamma + ln_tau)).exp();
        ((-x).exp(), x)
    }
}

impl LeastSquares for DeerModel<'_> {
    fn n_params(&self) -> usize {
        self.c.len() + 2
    }

    fn n_residuals(&self) -> usize {
        self.data.n_points
    }

    fn residuals(&self, p: &[f64], r: &mut [f64]) -> bool {
        let k = self.c.len();
        let (lg, n) = (p[k], p[k + 1]);
        let mut g = 0;
        for s in &self.data.sets {
            for i in 0..s.tau.len() {
                let (b, _) = Self::background(lg, n, s.ln_tau[i]);
                let mut m = b;
                for (rho, c) in p[..k].iter().zip(&self.c) {
                    m *= 1.0 - s.eta * rho * c[g];
                }
                r[g] = s.sw[i] * (m - s.y[i]);
                g += 1;
            }
        }
        r.iter().all(|v| v.is_finite())
    }

    fn jacobian(&self, p: &[f64], _r: &[f64], jac: &mut DMatrix<f64>) {
        let k = self.c.len();
        let (lg, n) = (p[k], p[k + 1]);
        let mut f = vec![0.0; k];
        let mut prefix = vec![0.0; k + 1];
        let mut suffix = vec![0.0; k + 1];
        let mut g = 0;
        for s in &self.data.sets {
            for i in 0..s.tau.len() {
                let (b, x) = Self::background(lg, n, s.ln_tau[i]);
                for j in 0..k {
                    f[j] = 1.0 - s.eta * p[j] * self.c[j][g];
                }
                prefix[0] = 1.0;
                for j in 0..k {
                    prefix[j + 1] = prefix[j] * f[j];
                }
                suffix[k] = 1.0;
                for j in (0..k).rev() {
                    suffix[j] = suffix[j + 1] * f[j];
                }
                let w = s.sw[i];
                for j in 0..k {
                    jac[(g, j)] = -w * b * s.eta * self.c[j][g] * prefix[j] * suffix[j + 1];
                }
                let m = b * prefix[k];
                if x > 0.0 {
                    jac[(g, k)] = -w * m * x * n;
                    jac[(g, k + 1)] = -w * m * x * (lg + s.ln_tau[i]);
                } else {
                    jac[(g, k)] = 0.0;
                    jac[(g, k + 1)] = 0.0;
                }
                g += 1;
            }
        }
    }
}

/// Compact result used inside the search loop.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreOutcome {
    /// Weighted sum of squared residuals over all datasets; +∞ if rejected.
    pub score: f64,
    /// Fitted ρ per defect of the candidate (0 for unresolved defects).
    pub rho: Vec<f64>,
    pub gamma_bg: f64,
    pub stretch_n: f64,
    pub n_resolved: usize,
    pub n_evals: usize,
    pub converged: bool,
    std_errors: Option<Vec<f64>>,
    resolved: Vec<usize>,
}

impl ScoreOutcome {
    pub fn fit_result(&self) -> FitResult {
        let mut fit = FitResult {
            residual_norm: if self.score.is_finite() { self.score.sqrt() } else { f64::INFINITY },
            n_evals: self.n_evals,
            converged: self.converged,
            ..FitResult::default()
        };
        for (i, rho) in self.rho.iter().enumerate() {
            fit.params.insert(format!("rho_{}", i + 1), *rho);
        }
        fit.params.insert("gamma_bg".into(), self.gamma_bg);
        fit.params.insert("stretch_n".into(), self.stretch_n);
        if let (true, Some(se)) = (self.converged, &self.std_errors) {
            let k = self.resolved.len();
            for (j, &idx) in self.resolved.iter().enumerate() {
                fit.std_errors.insert(format!("rho_{}", idx + 1), se[j]);
            }
            // Propagate from ln Γ to Γ.
            fit.std_errors.insert("gamma_bg".into(), se[k] * self.gamma_bg);
            fit.std_errors.insert("stretch_n".into(), se[k + 1]);
        }
        fit
    }
}

/// Fits ρ of the resolved defects plus the shared background (Γ, n) to all
/// datasets and returns the residual sum of squares.
pub fn score_configuration(config: &CandidateConfiguration, data: &ScoringData) -> ScoreOutcome {
    score_couplings(&config.couplings, data, false)
}

pub(crate) fn score_couplings(couplings: &[f64], data: &ScoringData, with_errors: bool) -> ScoreOutcome {
    let mut resolved: Vec<usize> = (0..couplings.len()).filter(|&i| data.is_resolved(couplings[i])).collect();
    // Canonical order makes the fit independent of how defects are listed.
    resolved.sort_by(|&i, &j| {
        couplings[j]
            .abs()
            .total_cmp(&couplings[i].abs())
            .then(couplings[j].total_cmp(&couplings[i]))
    });
    let a: Vec<f64> = resolved.iter().map(|&i| couplings[i]).collect();
    let model = DeerModel::new(data, &a);
    let k = a.len();
    let opts = &data.options;
    let mut x0 = vec![0.5; k];
    x0.extend([data.start.0, data.start.1]);
    let mut lower = vec![0.0; k];
    lower.extend([opts.gamma_bounds.0.ln(), opts.stretch_bounds.0]);
    let mut upper = vec![1.0; k];
    upper.extend([opts.gamma_bounds.1.ln(), opts.stretch_bounds.1]);
    let out = minimize(&model, &x0, &lower, &upper, &opts.lm());

    let mut rho = vec![0.0; couplings.len()];
    for (j, &i) in resolved.iter().enumerate() {
        rho[i] = out.params[j];
    }
    let finite = out.cost.is_finite();
    let (converged, std_errors) = if with_errors && finite {
        let singular = is_singular(&out.jacobian);
        (out.terminated && !singular, if singular { None } else { standard_errors(&out.jacobian, out.cost) })
    } else {
        (out.terminated && finite, None)
    };
    ScoreOutcome {
        score: if finite { out.cost } else { f64::INFINITY },
        rho,
        gamma_bg: out.params[k].exp(),
        stretch_n: out.params[k + 1],
        n_resolved: k,
        n_evals: out.n_evals,
        converged,
        std_errors,
        resolved,
    }
}

/// Full scoring with standard errors, for reporting.
pub fn score_configuration_detailed(config: &CandidateConfiguration, data: &ScoringData) -> ScoreOutcome {
    score_couplings(&config.couplings, data, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::{deer_signal, linspace};
    use crate::defect::{NsDefect, ProbeSpin, MeasurementSettings};
    use proptest::prelude::*;

    fn datasets(defects: &[NsDefect], gamma: f64, n: f64) -> Vec<DeerDataset> {
        let probe = ProbeSpin::new(gamma, n).unwrap();
        let tau = linspace(0.0, 10e-6, 200);
        [MeasurementSettings::ETA_ONE_TONE, MeasurementSettings::ETA_TWO_TONE]
            .iter()
            .map(|&eta| {
                let with_p: Vec<(NsDefect, f64)> = defects.iter().map(|d| (d.clone(), 0.0)).collect();
                let s0: Vec<f64> = tau.iter().map(|&t| deer_signal(t, &probe, eta, &with_p).unwrap().re).collect();
                DeerDataset::new(CoherenceCurve::from_in_phase(tau.clone(), &s0).unwrap(), eta)
            })
            .collect()
    }

    fn pair() -> Vec<NsDefect> {
        vec![
            NsDefect::new(0.474, 158.6e3, 0.0).unwrap(),
            NsDefect::new(0.302, 125e3, 0.0).unwrap(),
        ]
    }

    fn candidate(couplings: &[f64]) -> CandidateConfiguration {
        CandidateConfiguration {
            index: 0,
            positions: vec![[0.0; 3]; couplings.len()],
            couplings: couplings.to_vec(),
            rho: vec![0.0; couplings.len()],
        }
    }

    #[test]
    fn generator_configuration_scores_zero() {
        let data = ScoringData::new(&datasets(&pair(), 2e4, 1.5), ScoreOptions::default()).unwrap();
        let out = score_configuration_detailed(&candidate(&[158.6e3, 125e3]), &data);
        assert!(out.score <= 1e-12, "{}", out.score);
        assert!((out.rho[0] - 0.474).abs() < 1e-6 && (out.rho[1] - 0.302).abs() < 1e-6);
        assert!((out.gamma_bg / 2e4 - 1.0).abs() < 1e-6 && (out.stretch_n - 1.5).abs() < 1e-6);
        let fit = out.fit_result();
        assert!(fit.converged);
        assert!(fit.std_errors.contains_key("rho_2"));
    }

    /// Least-squares distance to the nearest non-increasing sequence (pool
    /// adjacent violators).
    fn isotonic_ssr(y: &[f64]) -> f64 {
        let mut blocks: Vec<(f64, usize)> = Vec::new();
        for &v in y {
            blocks.push((v, 1));
            while blocks.len() > 1 {
                let (m2, n2) = blocks[blocks.len() - 1];
                let (m1, n1) = blocks[blocks.len() - 2];
                if m1 >= m2 {
                    break;
                }
                blocks.truncate(blocks.len() - 2);
                blocks.push(((m1 * n1 as f64 + m2 * n2 as f64) / (n1 + n2) as f64, n1 + n2));
            }
        }
        let mut fitted = Vec::with_capacity(y.len());
        for (m, n) in blocks {
            fitted.extend(std::iter::repeat(m).take(n));
        }
        y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum()
    }

    #[test]
    fn empty_configuration_is_bounded_below() {
        let sets = datasets(&pair(), 2e4, 1.5);
        let data = ScoringData::new(&sets, ScoreOptions::default()).unwrap();
        let out = score_configuration(&candidate(&[]), &data);
        // Any background decay is non-increasing, so the best monotone fit
        // bounds the empty-configuration score from below.
        let bound: f64 = sets.iter().map(|d| isotonic_ssr(&d.curve.in_phase())).sum();
        assert!(bound > 0.1);
        assert!(out.score >= bound, "{} < {bound}", out.score);
    }

    #[test]
    fn weak_defects_are_not_fitted() {
        let data = ScoringData::new(&datasets(&pair(), 2e4, 1.5), ScoreOptions::default()).unwrap();
        assert!(data.is_resolved(158.6e3) && data.is_resolved(-8e3));
        assert!(!data.is_resolved(5e3));
        let out = score_configuration(&candidate(&[158.6e3, 125e3, 3e3]), &data);
        assert_eq!(out.n_resolved, 2);
        assert_eq!(out.rho[2], 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let data = ScoringData::new(&datasets(&pair(), 2e4, 1.5), ScoreOptions::default()).unwrap();
        let model = DeerModel::new(&data, &[158.6e3, -60e3, 125e3]);
        let p = [0.3, 0.7, 0.5, (3e4f64).ln(), 1.2];
        let m = model.n_residuals();
        let mut r = vec![0.0; m];
        model.residuals(&p, &mut r);
        let mut analytic = DMatrix::zeros(m, 5);
        model.jacobian(&p, &r, &mut analytic);
        for j in 0..5 {
            let h = 1e-6;
            let mut pp = p;
            pp[j] += h;
            let mut rp = vec![0.0; m];
            model.residuals(&pp, &mut rp);
            pp[j] -= 2.0 * h;
            let mut rm = vec![0.0; m];
            model.residuals(&pp, &mut rm);
            for i in 0..m {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                assert!((fd - analytic[(i, j)]).abs() < 1e-6, "param {j} point {i}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn score_is_permutation_invariant(a in prop::collection::vec(-300e3..300e3f64, 1..4), rot in 0usize..3) {
            let data = ScoringData::new(&datasets(&pair(), 2e4, 1.5), ScoreOptions::default()).unwrap();
            let mut b = a.clone();
            let len = b.len();
            b.rotate_left(rot % len);
            let sa = score_configuration(&candidate(&a), &data);
            let sb = score_configuration(&candidate(&b), &data);
            prop_assert_eq!(sa.score, sb.score);
            for (i, x) in a.iter().enumerate() {
                let j = b.iter().position(|y| y == x).unwrap();
                prop_assert_eq!(sa.rho[i], sb.rho[j]);
            }
        }
    }
}
