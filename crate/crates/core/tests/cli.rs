use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spinprobe::coherence::{deer_curve, CoherenceCurve};
use spinprobe::defect::{NsDefect, ProbeSpin};
use spinprobe::inference::{reference_pair, synthetic_datasets, SyntheticDeer};
use spinprobe::io::Report;
use spinprobe::par::Parallelism;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spinprobe"));
    c.env_remove("SPINPROBE_THREADS");
    c
}

fn spinprobe(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const DEER: &str = r#"
schema_version = 1
experiment = "simulate-deer"
seed = 5

[parameters]
eta = 0.75
gamma_bg = 2e4
stretch_n = 1.5
polarizations = [1.0, 1.0]
defects = [
  { rho = 0.474, a_dipolar = 158.6e3, d_stark = -41e3 },
  { rho = 0.302, a_dipolar = 125e3, d_stark = -33e3 },
]
"#;

#[test]
fn simulate_deer_matches_direct_evaluation_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "deer.toml", DEER);
    let out = dir.path().join("out");
    let res = spinprobe(&["simulate-deer", "--config", s(&cfg), "--out", s(&out), "--threads", "3"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let report = Report::load(&out.join("report.json")).unwrap();
    let curve: CoherenceCurve = serde_json::from_value(report.outputs["curve"].clone()).unwrap();
    let probe = ProbeSpin::new(2e4, 1.5).unwrap();
    let defects: Vec<(NsDefect, f64)> = reference_pair().into_iter().map(|d| (d, 1.0)).collect();
    let direct = deer_curve(&curve.tau, &probe, 0.75, &defects, Parallelism::Sequential).unwrap();
    assert_eq!(curve, direct);
    let header = fs::read_to_string(out.join("deer.csv")).unwrap();
    assert_eq!(header.lines().next(), Some("tau_s,s0_model,s_pi2_model"));
    assert!(out.join("deer-data.csv").exists());
}

#[test]
fn report_reruns_from_embedded_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "deer.toml", &DEER.replace("seed = 5", "seed = 5\n").replace("stretch_n = 1.5", "stretch_n = 1.5\nnoise_sigma = 0.01"));
    let a = dir.path().join("a");
    assert_eq!(code(&spinprobe(&["run", "--config", s(&cfg), "--out", s(&a), "--seed", "99"])), 0);
    let first = Report::load(&a.join("report.json")).unwrap();
    assert_eq!(first.seed, 99);

    let embedded = write(dir.path(), "embedded.toml", &first.config.to_toml_string().unwrap());
    let b = dir.path().join("b");
    assert_eq!(code(&spinprobe(&["run", "--config", s(&embedded), "--out", s(&b), "--threads", "1"])), 0);
    let second = Report::load(&b.join("report.json")).unwrap();
    assert_eq!(first.outputs, second.outputs);
    assert_eq!(first.plots, second.plots);
    assert_eq!(fs::read(a.join("deer-data.csv")).unwrap(), fs::read(b.join("deer-data.csv")).unwrap());
}

#[test]
fn deer_data_column_is_emitted_when_supplied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "deer.toml", DEER);
    let data = write(dir.path(), "d.csv", "# tau in s\ntau_s,s0\n0,1\n1e-6,0.95\n2e-6,0.9\n");
    let out = dir.path().join("out");
    let res = spinprobe(&["simulate-deer", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&res), 0);
    let text = fs::read_to_string(out.join("deer.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("tau_s,s0_model,s_pi2_model,s0_data"));
    assert_eq!(text.lines().count(), 4);
    let report = Report::load(&out.join("report.json")).unwrap();
    assert_eq!(report.inputs.len(), 1);
    assert_eq!(report.inputs[0].sha256.len(), 64);
}

#[test]
fn invalid_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &DEER.replace("rho = 0.474", "rho = 1.2"));
    let out = dir.path().join("out");
    let res = spinprobe(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("rho"));
    assert!(!out.exists());

    let res = spinprobe(&["fit-saturation", "--config", s(&write(dir.path(), "ok.toml", DEER)), "--out", s(&out)]);
    assert_eq!(code(&res), 2, "verb must match the configured experiment");
    assert!(!out.exists());
}

const RECONSTRUCT: &str = r#"
schema_version = 1
experiment = "reconstruct"
seed = 17

[parameters]
etas = [0.375, 0.75]
budget = 3000
top_k = 20
chunk_size = 256
"#;

fn deer_tables(dir: &Path) -> Vec<PathBuf> {
    let sets = synthetic_datasets(&SyntheticDeer::default(), &reference_pair(), 0.01, 3).unwrap();
    sets.iter()
        .enumerate()
        .map(|(k, d)| {
            let mut text = String::from("tau_s,s0\n");
            for (t, v) in d.curve.tau.iter().zip(d.curve.in_phase()) {
                text.push_str(&format!("{t:e},{v:e}\n"));
            }
            write(dir, &format!("deer{k}.csv"), &text)
        })
        .collect()
}

#[test]
fn reconstruct_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "rec.toml", RECONSTRUCT);
    let data = deer_tables(dir.path());
    let args = |out: &Path| -> Vec<String> {
        vec!["reconstruct", "--config", s(&cfg), "--data", s(&data[0]), "--data", s(&data[1]), "--out", s(out)]
            .into_iter()
            .map(String::from)
            .collect()
    };

    let full = dir.path().join("full");
    assert_eq!(code(&bin().args(args(&full)).output().unwrap()), 0);

    let part = dir.path().join("part");
    let res = bin().args(args(&part)).args(["--stop-after", "1000"]).output().unwrap();
    assert_eq!(code(&res), 0);
    assert!(part.join("checkpoint.json").exists());
    let partial = Report::load(&part.join("report.json")).unwrap();
    assert_eq!(partial.outputs["complete"], false);

    let res = bin().args(args(&part)).arg("--resume").output().unwrap();
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let a = Report::load(&full.join("report.json")).unwrap();
    let b = Report::load(&part.join("report.json")).unwrap();
    assert_eq!(a.outputs["ranked"], b.outputs["ranked"]);
    assert_eq!(b.outputs["evaluated"], 3000);

    let res = bin().args(args(&part)).args(["--resume", "--seed", "18"]).output().unwrap();
    assert_eq!(code(&res), 4, "mismatched checkpoint");

    let res = bin()
        .args(args(&part))
        .args(["--checkpoint", s(&dir.path().join("outside.json"))])
        .output()
        .unwrap();
    assert_eq!(code(&res), 2, "checkpoint outside the output directory");
}

#[test]
fn saturation_fit_and_non_convergence_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sat.toml", "schema_version = 1\nexperiment = \"fit-saturation\"\n");
    let mut good = String::from("power_w,rate_hz\n");
    for p in [36e-6, 100e-6, 330e-6, 1e-3, 1.6e-3, 3.3e-3] {
        good.push_str(&format!("{p},{}\n", 4e4 * p / (p + 1.6e-3)));
    }
    let out = dir.path().join("good");
    let res = spinprobe(&["fit-saturation", "--config", s(&cfg), "--data", s(&write(dir.path(), "g.csv", &good)), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let report = Report::load(&out.join("report.json")).unwrap();
    let p_sat = report.outputs["p_sat_w"].as_f64().unwrap();
    assert!((p_sat / 1.6e-3 - 1.0).abs() < 1e-6);
    let text = fs::read_to_string(out.join("saturation.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("power_w,rate_hz,rate_fit_hz"));

    let linear = "power_w,rate_hz\n1e-6,1\n2e-6,2\n3e-6,3\n4e-6,4\n";
    let out = dir.path().join("linear");
    let res = spinprobe(&["fit-saturation", "--config", s(&cfg), "--data", s(&write(dir.path(), "l.csv", linear)), "--out", s(&out)]);
    assert_eq!(code(&res), 3);
    assert!(out.join("report.json").exists());
}

#[test]
fn plot_verb_lists_kinds_for_unknown_requests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "deer.toml", DEER);
    let out = dir.path().join("out");
    assert_eq!(code(&spinprobe(&["simulate-deer", "--config", s(&cfg), "--out", s(&out)])), 0);
    let report = out.join("report.json");
    let plots = dir.path().join("plots");
    let res = spinprobe(&["plot", "--report", s(&report), "--kind", "deer", "--out", s(&plots)]);
    assert_eq!(code(&res), 0);
    assert!(plots.join("deer.csv").exists());
    let res = spinprobe(&["plot", "--report", s(&report), "--kind", "odmr", "--out", s(&plots)]);
    assert_eq!(code(&res), 2);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("deer, deer-data"), "{err}");
}

#[test]
fn bad_table_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sat.toml", "schema_version = 1\nexperiment = \"fit-saturation\"\n");
    let data = write(dir.path(), "bad.csv", "power_w,rate_hz\n1e-4,10\n# note\n2e-4\n");
    let res = spinprobe(&["run", "--config", s(&cfg), "--data", s(&data), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 4"));
}

#[test]
fn every_experiment_runs_from_a_minimal_config() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("simulate-odmr", "defects = [{ rho = 0.474, a_dipolar = 158.6e3, d_stark = -41e3 }]", "odmr.csv"),
        (
            "simulate-pump-probe",
            "defects = [{ rho = 1.0, a_dipolar = 158.6e3, d_stark = 0.0 }]\ntau_sl = { start = 0.0, stop = 5e-6, points = 6 }",
            "pump-probe.csv",
        ),
        ("simulate-charge", "trajectories = 500", "charge.csv"),
        ("extract-noise", "gamma_sq = 300.0\ngamma_dq = 400.0", "noise.csv"),
    ];
    for (exp, params, file) in cases {
        let cfg = write(
            dir.path(),
            &format!("{exp}.toml"),
            &format!("schema_version = 1\nexperiment = \"{exp}\"\n\n[parameters]\n{params}\n"),
        );
        let out = dir.path().join(exp);
        let res = spinprobe(&["run", "--config", s(&cfg), "--out", s(&out)]);
        assert_eq!(code(&res), 0, "{exp}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(out.join(file).exists(), "{exp}");
    }

    let data = deer_tables(dir.path());
    let cfg = write(
        dir.path(),
        "fit.toml",
        "schema_version = 1\nexperiment = \"fit-deer\"\n\n[parameters]\ncouplings_hz = [158.6e3, 125e3]\n",
    );
    let out = dir.path().join("fit");
    let res = spinprobe(&["fit-deer", "--config", s(&cfg), "--data", s(&data[0]), "--data", s(&data[1]), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let report = Report::load(&out.join("report.json")).unwrap();
    let rho: Vec<f64> = serde_json::from_value(report.outputs["rho"].clone()).unwrap();
    assert!((rho[0] - 0.474).abs() < 0.03 && (rho[1] - 0.302).abs() < 0.03, "{rho:?}");

    let mut relax = String::from("t_s,rho\n");
    for i in 0..30 {
        let t = i as f64 * 1e-4;
        relax.push_str(&format!("{t},{}\n", 0.36 + 0.103 * (-t / 410e-6).exp()));
    }
    let cfg = write(dir.path(), "relax.toml", "schema_version = 1\nexperiment = \"fit-charge-relaxation\"\n");
    let out = dir.path().join("relax");
    let res = spinprobe(&["run", "--config", s(&cfg), "--data", s(&write(dir.path(), "r.csv", &relax)), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let report = Report::load(&out.join("report.json")).unwrap();
    assert!((report.outputs["t_c"].as_f64().unwrap() / 410e-6 - 1.0).abs() < 1e-6);
}
