//! Runs one configured experiment and writes its report.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::*;
use super::report::{emit_plot_data, InputRecord, PlotTable, Report};
use super::table::{parse_table, MeasurementTable};
use crate::charge::{propagate, sample_trajectories, ChargeState};
use crate::coherence::{deer_curve, deer_signal, find_probe_point, odmr_spectrum, CoherenceCurve};
use crate::defect::{geometric_mean_rho, NsDefect, ProbeSpin};
use crate::error::{Error, Result};
use crate::inference::{
    extract_noise_with, fit_charge_relaxation, fit_saturation, reconstruct, score_configuration_detailed,
    CandidateConfiguration, DeerDataset, ReconstructOptions, ScoringData,
};
use crate::par::Parallelism;
use crate::rng::{stream_rng, Domain};
use crate::spin_dynamics::{run_pump_probe_mixture, PumpProbeProtocol};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_CHECKPOINT: i32 = 4;

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "SPINPROBE_THREADS";

pub const REPORT_FILE: &str = "report.json";
pub const DEFAULT_CHECKPOINT: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq)]
pub struct RunRequest {
    pub config: RunConfig,
    pub data: Vec<PathBuf>,
    pub out_dir: PathBuf,
    /// Overrides the configured seed.
    pub seed: Option<u64>,
    /// Overrides the configured thread count (flag or environment).
    pub threads: Option<usize>,
    /// Reconstruction checkpoint, relative to `out_dir` unless absolute.
    pub checkpoint: Option<PathBuf>,
    pub resume: bool,
    pub stop_after: Option<u64>,
}

impl RunRequest {
    pub fn new(config: RunConfig, out_dir: impl Into<PathBuf>) -> Self {
        RunRequest {
            config,
            data: Vec::new(),
            out_dir: out_dir.into(),
            seed: None,
            threads: None,
            checkpoint: None,
            resume: false,
            stop_after: None,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: Option<Report>,
    pub error: Option<Error>,
    pub written: Vec<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Domain(_)
        | Error::Capacity(_)
        | Error::SequenceValidation(_)
        | Error::Config(_)
        | Error::Parse { .. }
        | Error::MissingColumn { .. }
        | Error::UnknownPlotKind { .. } => EXIT_INVALID,
        Error::FitQuality(_) | Error::NoOutOfPhaseSignal => EXIT_NOT_CONVERGED,
        Error::Checkpoint(_) => EXIT_CHECKPOINT,
        Error::NumericalInstability(_) | Error::Io { .. } | Error::Json(_) => EXIT_FAILURE,
    }
}

/// Thread count precedence: explicit override, then config, then all cores.
pub fn resolve_parallelism(override_threads: Option<usize>, config: &RunConfig) -> Result<Parallelism> {
    match override_threads.or(config.threads) {
        Some(0) => Err(Error::Config("threads must be >= 1".into())),
        Some(n) => Ok(Parallelism::from_threads(n)),
        None => Ok(Parallelism::AllCores),
    }
}

/// Resolves a checkpoint path, refusing anything outside `out_dir`.
pub fn resolve_checkpoint(out_dir: &Path, checkpoint: Option<&Path>) -> Result<PathBuf> {
    let rel = match checkpoint {
        None => return Ok(out_dir.join(DEFAULT_CHECKPOINT)),
        Some(p) if p.is_absolute() => {
            let base = std::path::absolute(out_dir).map_err(|e| Error::io(out_dir, e))?;
            p.strip_prefix(&base)
                .map_err(|_| {
                    Error::Config(format!(
                        "checkpoint {} is outside the output directory {}",
                        p.display(),
                        base.display()
                    ))
                })?
                .to_path_buf()
        }
        Some(p) => p.to_path_buf(),
    };
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) || rel.as_os_str().is_empty() {
        return Err(Error::Config(format!(
            "checkpoint {} must be a plain path inside the output directory",
            rel.display()
        )));
    }
    Ok(out_dir.join(rel))
}

struct Inputs {
    tables: Vec<MeasurementTable>,
    records: Vec<InputRecord>,
}

fn load_inputs(paths: &[PathBuf]) -> Result<Inputs> {
    let mut tables = Vec::new();
    let mut records = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| Error::Parse {
            path: path.clone(),
            line: 0,
            message: format!("not UTF-8: {e}"),
        })?;
        let table = parse_table(&text, path)?;
        records.push(InputRecord {
            path: path.clone(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            rows: table.row_count(),
        });
        tables.push(table);
    }
    Ok(Inputs { tables, records })
}

fn expect_tables(tables: &[MeasurementTable], range: std::ops::RangeInclusive<usize>, what: &str) -> Result<()> {
    if !range.contains(&tables.len()) {
        return Err(Error::Config(format!(
            "{what} takes {} to {} data tables, got {}",
            range.start(),
            range.end(),
            tables.len()
        )));
    }
    Ok(())
}

/// Experiment output before provenance is attached.
struct Computed {
    outputs: serde_json::Value,
    plots: BTreeMap<String, PlotTable>,
    converged: Option<bool>,
    warnings: Vec<String>,
}

impl Computed {
    fn new(outputs: serde_json::Value) -> Self {
        Computed {
            outputs,
            plots: BTreeMap::new(),
            converged: None,
            warnings: Vec::new(),
        }
    }

    fn plot(mut self, kind: &str, table: PlotTable) -> Self {
        self.plots.insert(kind.to_string(), table);
        self
    }
}

fn cols(pairs: Vec<(&str, Vec<f64>)>) -> PlotTable {
    PlotTable::from_columns(pairs.into_iter().map(|(n, v)| (n.to_string(), v)).collect())
}

fn deer_datasets(tables: &[MeasurementTable], etas: &[f64]) -> Result<Vec<DeerDataset>> {
    if tables.len() != etas.len() {
        return Err(Error::Config(format!(
            "{} DEER tables supplied for {} etas",
            tables.len(),
            etas.len()
        )));
    }
    tables
        .iter()
        .zip(etas)
        .map(|(t, &eta)| {
            let curve = CoherenceCurve::from_in_phase(t.increasing_column("tau_s")?.to_vec(), t.column("s0")?)?;
            let mut d = DeerDataset::new(curve, eta);
            if t.has("weight") {
                d.weights = Some(t.column("weight")?.to_vec());
            }
            d.validate()?;
            Ok(d)
        })
        .collect()
}

/// Model S₀ for fitted ρ on every dataset point, as a `deer-fit` table.
fn deer_fit_table(
    datasets: &[DeerDataset],
    couplings: &[f64],
    rho: &[f64],
    gamma: f64,
    n: f64,
) -> Result<PlotTable> {
    let probe = ProbeSpin::new(gamma, n)?;
    let defects: Vec<(NsDefect, f64)> = couplings
        .iter()
        .zip(rho)
        .map(|(&a, &r)| Ok((NsDefect::new(r, a, 0.0)?, 0.0)))
        .collect::<Result<_>>()?;
    let mut table = PlotTable::new(&["dataset", "eta", "tau_s", "s0_data", "s0_fit"]);
    for (k, d) in datasets.iter().enumerate() {
        for (&t, s) in d.curve.tau.iter().zip(&d.curve.signal) {
            table.push(vec![k as f64, d.eta, t, s.re, deer_signal(t, &probe, d.eta, &defects)?.re]);
        }
    }
    Ok(table)
}

fn simulate_deer(config: &RunConfig, tables: &[MeasurementTable], par: Parallelism, seed: u64) -> Result<Computed> {
    let p: SimulateDeerParams = config.parameters()?;
    expect_tables(tables, 0..=1, "simulate-deer")?;
    let probe = ProbeSpin::new(p.gamma_bg, p.stretch_n)?;
    let pols = if p.polarizations.is_empty() {
        vec![0.0; p.defects.len()]
    } else {
        p.polarizations.clone()
    };
    let defects: Vec<(NsDefect, f64)> = p.defects.iter().cloned().zip(pols).collect();
    let (tau, data) = match tables.first() {
        Some(t) => (
            t.increasing_column("tau_s")?.to_vec(),
            if t.has("s0") { Some(t.column("s0")?.to_vec()) } else { None },
        ),
        None => (p.tau.values(), None),
    };
    let curve = deer_curve(&tau, &probe, p.eta, &defects, par)?;
    let probe_point = match find_probe_point(&curve) {
        Ok(t) => Some(t),
        Err(Error::NoOutOfPhaseSignal) => None,
        Err(e) => return Err(e),
    };
    let rho_bar = if p.defects.is_empty() {
        None
    } else {
        Some(geometric_mean_rho(&p.defects)?)
    };
    let s0 = curve.in_phase();
    let mut rng = stream_rng(seed, Domain::MeasurementNoise, 0);
    let noisy: Vec<f64> = s0
        .iter()
        .map(|&s| {
            let z: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
            s + p.noise_sigma * z
        })
        .collect();
    let mut deer = vec![("tau_s", tau.clone()), ("s0_model", s0), ("s_pi2_model", curve.out_of_phase())];
    if let Some(d) = data {
        deer.push(("s0_data", d));
    }
    Ok(Computed::new(json!({
        "curve": curve,
        "probe_point_s": probe_point,
        "geometric_mean_rho": rho_bar,
    }))
    .plot("deer", cols(deer))
    .plot("deer-data", cols(vec![("tau_s", tau), ("s0", noisy)])))
}

fn simulate_odmr(config: &RunConfig, tables: &[MeasurementTable]) -> Result<Computed> {
    let p: SimulateOdmrParams = config.parameters()?;
    expect_tables(tables, 0..=1, "simulate-odmr")?;
    let (freq, data) = match tables.first() {
        Some(t) => (
            t.increasing_column("freq_hz")?.to_vec(),
            if t.has("amplitude") { Some(t.column("amplitude")?.to_vec()) } else { None },
        ),
        None => (p.freq.values(), None),
    };
    let spec = odmr_spectrum(&p.defects, p.line_shape, p.linewidth_hz, p.contrast, &freq)?;
    let mut odmr = vec![("freq_hz", freq), ("amplitude_model", spec.amplitude.clone())];
    if let Some(d) = data {
        odmr.push(("amplitude_data", d));
    }
    let lines = cols(vec![
        ("freq_hz", spec.lines.iter().map(|l| l.freq).collect()),
        ("weight", spec.lines.iter().map(|l| l.weight).collect()),
    ]);
    Ok(Computed::new(json!({ "spectrum": spec }))
        .plot("odmr", cols(odmr))
        .plot("odmr-lines", lines))
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r = cov / (vx * vy).sqrt();
    r.is_finite().then_some(r)
}

fn simulate_pump_probe(config: &RunConfig, tables: &[MeasurementTable], par: Parallelism) -> Result<Computed> {
    let p: SimulatePumpProbeParams = config.parameters()?;
    expect_tables(tables, 0..=0, "simulate-pump-probe")?;
    let tau_sl = p.tau_sl.values();
    let records = par
        .map(&tau_sl, |&t| {
            let protocol = PumpProbeProtocol { tau_sl: t, ..p.protocol };
            let seq = protocol.sequence(p.defects.len());
            run_pump_probe_mixture(&seq, &p.defects, p.eta, &p.evolve, Parallelism::Sequential)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let p_probe: Vec<f64> = records.iter().map(|r| r.p_probe).collect();
    let p_dark: Vec<f64> = records.iter().map(|r| r.p_dark.iter().sum()).collect();
    let mut table = vec![
        ("tau_sl_s".to_string(), tau_sl.clone()),
        ("p_probe".to_string(), p_probe.clone()),
        ("p_dark".to_string(), p_dark.clone()),
        ("s_pi2".to_string(), records.iter().map(|r| r.s_pi2).collect()),
        ("s0".to_string(), records.iter().map(|r| r.s0).collect()),
    ];
    for k in 0..p.defects.len() {
        table.push((format!("p_dark_{}", k + 1), records.iter().map(|r| r.p_dark[k]).collect()));
    }
    Ok(Computed::new(json!({
        "tau_sl_s": tau_sl,
        "records": records,
        "pearson_probe_dark": pearson(&p_probe, &p_dark),
    }))
    .plot("pump-probe", PlotTable::from_columns(table)))
}

fn simulate_charge(config: &RunConfig, tables: &[MeasurementTable], par: Parallelism, seed: u64) -> Result<Computed> {
    let p: SimulateChargeParams = config.parameters()?;
    expect_tables(tables, 0..=0, "simulate-charge")?;
    let times = crate::coherence::linspace(0.0, p.duration_s, p.points);
    let exact = times
        .iter()
        .map(|&t| propagate(&p.initial, &p.rates, p.power_w, t))
        .collect::<Result<Vec<_>>>()?;
    let mut table = vec![
        ("t_s", times.clone()),
        ("p_up", exact.iter().map(|x| x.p_up).collect()),
        ("p_down", exact.iter().map(|x| x.p_down).collect()),
        ("p_plus", exact.iter().map(|x| x.p_plus).collect()),
    ];
    if p.trajectories > 0 {
        let trajs = sample_trajectories(p.trajectories, &p.initial, &p.rates, p.power_w, p.duration_s, seed, par)?;
        let n = trajs.len() as f64;
        let frac = |state: ChargeState| -> Vec<f64> {
            times
                .iter()
                .map(|&t| trajs.iter().filter(|tr| tr.state_at(t) == state).count() as f64 / n)
                .collect()
        };
        table.push(("mc_up", frac(ChargeState::Up)));
        table.push(("mc_down", frac(ChargeState::Down)));
        table.push(("mc_plus", frac(ChargeState::Ionized)));
    }
    let r_ion = p.rates.r_ion(p.power_w)?;
    let k = r_ion + p.rates.r_rec;
    Ok(Computed::new(json!({
        "r_ion": r_ion,
        "p_plus_steady_state": if k > 0.0 { Some(r_ion / k) } else { None },
        "polarization_decay_rate": r_ion + 2.0 * p.rates.r_flip,
        "dark_rho_ss": p.rates.rho_ss(),
        "dark_t_c_s": p.rates.t_c(),
        "final": exact.last(),
    }))
    .plot("charge", cols(table)))
}

fn fit_deer(config: &RunConfig, tables: &[MeasurementTable]) -> Result<Computed> {
    let p: FitDeerParams = config.parameters()?;
    let datasets = deer_datasets(tables, &p.etas)?;
    let data = ScoringData::new(&datasets, p.score)?;
    let candidate = CandidateConfiguration {
        index: 0,
        positions: Vec::new(),
        couplings: p.couplings_hz.clone(),
        rho: vec![0.0; p.couplings_hz.len()],
    };
    let out = score_configuration_detailed(&candidate, &data);
    let fit = out.fit_result();
    let table = deer_fit_table(&datasets, &p.couplings_hz, &out.rho, out.gamma_bg, out.stretch_n)?;
    let mut c = Computed::new(json!({
        "couplings_hz": p.couplings_hz,
        "rho": out.rho,
        "gamma_bg": out.gamma_bg,
        "stretch_n": out.stretch_n,
        "score": out.score,
        "n_resolved": out.n_resolved,
        "fit": fit,
    }))
    .plot("deer-fit", table);
    if out.n_resolved < p.couplings_hz.len() {
        c.warnings.push(format!(
            "{} of {} couplings are too weak to resolve; their rho is held at 0",
            p.couplings_hz.len() - out.n_resolved,
            p.couplings_hz.len()
        ));
    }
    c.converged = Some(fit.converged);
    Ok(c)
}

fn run_reconstruct(
    config: &RunConfig,
    tables: &[MeasurementTable],
    par: Parallelism,
    seed: u64,
    checkpoint: PathBuf,
    resume: bool,
    stop_after: Option<u64>,
) -> Result<Computed> {
    let p: ReconstructParams = config.parameters()?;
    let datasets = deer_datasets(tables, &p.etas)?;
    let options = ReconstructOptions {
        budget: p.budget,
        top_k: p.top_k,
        chunk_size: p.chunk_size,
        prior: p.prior,
        score: p.score,
        checkpoint: Some(checkpoint),
        resume,
        stop_after,
    };
    let rec = reconstruct(&datasets, &options, par, seed)?;
    let mut ranking = PlotTable::new(&["rank", "score", "n_defects", "n_resolved", "a1_hz", "rho1", "a2_hz", "rho2"]);
    for c in &rec.ranked {
        let mut dom: Vec<(f64, f64)> = c
            .config
            .couplings
            .iter()
            .zip(&c.config.rho)
            .filter(|(_, &r)| r > 0.0)
            .map(|(&a, &r)| (a, r))
            .collect();
        dom.sort_by(|x, y| y.0.abs().total_cmp(&x.0.abs()));
        let get = |i: usize| dom.get(i).copied().unwrap_or((f64::NAN, f64::NAN));
        let (a1, r1) = get(0);
        let (a2, r2) = get(1);
        ranking.push(vec![
            c.rank as f64,
            c.score,
            c.config.len() as f64,
            c.n_resolved as f64,
            a1,
            r1,
            a2,
            r2,
        ]);
    }
    let mut computed = Computed::new(json!({
        "budget": p.budget,
        "evaluated": rec.evaluated,
        "complete": rec.complete,
        "search_hash": rec.config_hash,
        "expected_defects_per_candidate": p.prior.expected_count(),
        "disc_radius_nm": p.prior.disc_radius_nm(),
        "ranked": rec.ranked,
    }))
    .plot("reconstruct", ranking);
    if let Some(best) = rec.ranked.first() {
        let f = &best.fit;
        let table = deer_fit_table(
            &datasets,
            &best.config.couplings,
            &best.config.rho,
            f.param("gamma_bg"),
            f.param("stretch_n"),
        )?;
        computed = computed.plot("deer-fit", table);
    }
    if !rec.complete {
        computed
            .warnings
            .push(format!("stopped after {} of {} candidates; resume to finish", rec.evaluated, p.budget));
    }
    Ok(computed)
}

fn run_fit_saturation(config: &RunConfig, tables: &[MeasurementTable]) -> Result<Computed> {
    let p: FitSaturationParams = config.parameters()?;
    expect_tables(tables, 1..=1, "fit-saturation")?;
    let powers = tables[0].column("power_w")?;
    let rates = tables[0].column("rate_hz")?;
    let fit = fit_saturation(powers, rates, &p.flux)?;
    let model_rates: Vec<f64> = powers
        .iter()
        .map(|&pw| crate::charge::saturation_rate(pw, &fit.model))
        .collect::<Result<_>>()?;
    let mut c = Computed::new(json!({
        "gamma_sat": fit.model.gamma_sat,
        "p_sat_w": fit.model.p_sat,
        "low_power_slope": fit.low_power_slope,
        "cross_section_m2": fit.cross_section_m2,
        "cross_section_a2": fit.cross_section_m2 / crate::constants::ANGSTROM2,
        "p_sat_identifiable": fit.p_sat_identifiable,
        "flux": p.flux,
        "fit": fit.fit,
    }))
    .plot(
        "saturation",
        cols(vec![("power_w", powers.to_vec()), ("rate_hz", rates.to_vec()), ("rate_fit_hz", model_rates)]),
    );
    if !fit.p_sat_identifiable {
        c.warnings.push("powers never approach the saturation knee; P_sat is unidentifiable".into());
    }
    c.converged = Some(fit.fit.converged && fit.p_sat_identifiable);
    Ok(c)
}

fn run_fit_charge_relaxation(config: &RunConfig, tables: &[MeasurementTable]) -> Result<Computed> {
    let _: FitChargeRelaxationParams = config.parameters()?;
    expect_tables(tables, 1..=1, "fit-charge-relaxation")?;
    let t = tables[0].increasing_column("t_s")?;
    let rho = tables[0].column("rho")?;
    let fit = fit_charge_relaxation(t, rho)?;
    let model: Vec<f64> = t
        .iter()
        .map(|&x| fit.rho_ss + (fit.rho0 - fit.rho_ss) * (-x / fit.t_c).exp())
        .collect();
    let mut c = Computed::new(serde_json::to_value(&fit)?).plot(
        "charge-relaxation",
        cols(vec![("t_s", t.to_vec()), ("rho", rho.to_vec()), ("rho_fit", model)]),
    );
    c.converged = Some(fit.fit.converged);
    Ok(c)
}

fn run_extract_noise(config: &RunConfig, tables: &[MeasurementTable]) -> Result<Computed> {
    let p: ExtractNoiseParams = config.parameters()?;
    expect_tables(tables, 0..=1, "extract-noise")?;
    let (sq, dq, x) = match (tables.first(), p.gamma_sq, p.gamma_dq) {
        (Some(t), None, None) => (
            t.column("gamma_sq")?.to_vec(),
            t.column("gamma_dq")?.to_vec(),
            if t.has("laser_time_s") { Some(t.column("laser_time_s")?.to_vec()) } else { None },
        ),
        (None, Some(s), Some(d)) => (vec![s], vec![d], None),
        _ => {
            return Err(Error::Config(
                "extract-noise takes either gamma_sq/gamma_dq parameters or one data table".into(),
            ))
        }
    };
    let rates = sq
        .iter()
        .zip(&dq)
        .map(|(&s, &d)| extract_noise_with(s, d, &p.model))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Vec::new();
    if let Some(x) = x {
        table.push(("laser_time_s", x));
    }
    table.push(("gamma_sq", sq));
    table.push(("gamma_dq", dq));
    table.push(("gamma_mag", rates.iter().map(|r| r.gamma_mag).collect()));
    table.push(("gamma_elec", rates.iter().map(|r| r.gamma_elec).collect()));
    let mut c = Computed::new(json!({ "model": p.model, "rates": rates })).plot("noise", cols(table));
    c.warnings.extend(rates.iter().filter_map(|r| r.warning.clone()));
    Ok(c)
}

fn effective_config(req: &RunRequest) -> Result<(RunConfig, Parallelism)> {
    let mut config = req.config.clone();
    if let Some(seed) = req.seed {
        config.seed = seed;
    }
    let par = resolve_parallelism(req.threads, &config)?;
    if let Some(t) = req.threads {
        config.threads = Some(t);
    }
    config.validate()?;
    Ok((config, par))
}

/// Validates, computes and returns the report without writing it. Only a
/// reconstruction touches the file system (its checkpoint).
pub fn run(req: &RunRequest) -> Result<Report> {
    let (config, par) = effective_config(req)?;
    let inputs = load_inputs(&req.data)?;
    let checkpoint = if config.experiment == Experiment::Reconstruct {
        Some(resolve_checkpoint(&req.out_dir, req.checkpoint.as_deref())?)
    } else {
        if req.checkpoint.is_some() || req.resume || req.stop_after.is_some() {
            return Err(Error::Config(format!(
                "--checkpoint, --resume and --stop-after apply to reconstruct only, not {}",
                config.experiment
            )));
        }
        None
    };
    let seed = config.seed;
    let tables = &inputs.tables;
    let computed = match config.experiment {
        Experiment::SimulateDeer => simulate_deer(&config, tables, par, seed)?,
        Experiment::SimulateOdmr => simulate_odmr(&config, tables)?,
        Experiment::SimulatePumpProbe => simulate_pump_probe(&config, tables, par)?,
        Experiment::SimulateCharge => simulate_charge(&config, tables, par, seed)?,
        Experiment::FitDeer => fit_deer(&config, tables)?,
        Experiment::Reconstruct => {
            // Validate the data before creating anything on disk.
            let p: ReconstructParams = config.parameters()?;
            deer_datasets(tables, &p.etas)?;
            std::fs::create_dir_all(&req.out_dir).map_err(|e| Error::io(&req.out_dir, e))?;
            let cp = checkpoint.expect("resolved above");
            run_reconstruct(&config, tables, par, seed, cp, req.resume, req.stop_after)?
        }
        Experiment::FitSaturation => run_fit_saturation(&config, tables)?,
        Experiment::FitChargeRelaxation => run_fit_charge_relaxation(&config, tables)?,
        Experiment::ExtractNoise => run_extract_noise(&config, tables)?,
    };
    let config_sha256 = hex::encode(Sha256::digest(config.to_toml_string()?.as_bytes()));
    Ok(Report {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: config.experiment,
        seed,
        config,
        config_sha256,
        inputs: inputs.records,
        converged: computed.converged,
        warnings: computed.warnings,
        outputs: computed.outputs,
        plots: computed.plots,
    })
}

fn write_outputs(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for kind in report.plot_kinds() {
        written.push(emit_plot_data(report, kind, out_dir)?);
    }
    let path = out_dir.join(REPORT_FILE);
    report.write(&path)?;
    written.push(path);
    Ok(written)
}

/// [`run`], then writes `report.json` and one CSV per plot kind into the
/// output directory and maps the result to an exit code. Nothing is written
/// when validation fails.
pub fn execute(req: &RunRequest) -> RunOutcome {
    let report = match run(req) {
        Ok(r) => r,
        Err(e) => {
            return RunOutcome {
                exit_code: exit_code(&e),
                report: None,
                error: Some(e),
                written: Vec::new(),
            }
        }
    };
    match write_outputs(&report, &req.out_dir) {
        Ok(written) => RunOutcome {
            exit_code: if report.converged == Some(false) { EXIT_NOT_CONVERGED } else { EXIT_OK },
            report: Some(report),
            error: None,
            written,
        },
        Err(e) => RunOutcome {
            exit_code: exit_code(&e),
            report: Some(report),
            error: Some(e),
            written: Vec::new(),
        },
    }
}
