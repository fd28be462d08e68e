//! End-to-end runs of the `phenolag` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phenolag::{MutationMeasure, Scenario, SpeedModel, TruncationPolicy};
use phenolag_cli::commands::summarise;
use phenolag_cli::CliError;
use serde_json::Value;
use tempfile::TempDir;

const EXPONENTIAL: &str = r#"
[scenario]
x0 = 0.0
horizon = 50.0
grid_step = 1.0

[scenario.measure]
family = "exponential"
rate_scale = 1.0
mean_effect = 1.0

[scenario.fixation]
kind = "kimura_exp"
sigma = 1.0

[scenario.speed]
kind = "constant"
v = 2.0
"#;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn phenolag(args: &[&str], env_out: Option<&Path>, cwd: &Path) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_phenolag"));
    cmd.args(args).current_dir(cwd).env_remove("PHENOLAG_OUT");
    if let Some(dir) = env_out {
        cmd.env("PHENOLAG_OUT", dir);
    }
    let Output {
        status,
        stdout,
        stderr,
    } = cmd.output().expect("binary runs");
    Run {
        code: status.code().expect("exit code"),
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

/// Writes `text` as a config file and returns its path.
fn config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_cmd(sub: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Run {
    let mut args = vec![
        sub,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    phenolag(&args, None, cfg.parent().unwrap())
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn one_seed_gives_three_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, "c.toml", EXPONENTIAL);
    let out = tmp.path().join("out");
    let r = run_cmd("simulate", &cfg, &out, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let names = files(&out);
    assert_eq!(names.len(), 3, "{names:?}");
    assert!(names
        .iter()
        .any(|n| n.starts_with("traj_") && n.ends_with(".csv")));
    assert!(names
        .iter()
        .any(|n| n.starts_with("events_") && n.ends_with(".jsonl")));
    assert!(names.contains(&"manifest.json".to_string()));

    // Every file carries the same scenario hash.
    let manifest = json(&out.join("manifest.json"));
    let hash = manifest["scenario_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    for name in names.iter().filter(|n| *n != "manifest.json") {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert!(text.lines().next().unwrap().contains(hash), "{name}");
    }
    let csv =
        fs::read_to_string(out.join(names.iter().find(|n| n.ends_with(".csv")).unwrap())).unwrap();
    assert_eq!(csv.lines().nth(1), Some("t,x"));
    assert_eq!(csv.lines().count(), 2 + 51);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["epsilon"], 0.0);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        &tmp,
        "c.toml",
        &format!("{EXPONENTIAL}\n[run]\nseeds = 3\nmaster_seed = 17\nworkers = 3\n"),
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run_cmd("simulate", &cfg, &a, &[]).code, 0);
    assert_eq!(run_cmd("simulate", &cfg, &b, &["--seeds", "3"]).code, 0);
    let names = files(&a);
    assert_eq!(names, files(&b));
    assert_eq!(names.len(), 7);
    for name in names.iter().filter(|n| *n != "manifest.json") {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn automatic_cutoff_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = configs().join("small_jumps.toml");
    let r = run_cmd("simulate", &cfg, &out, &["--seeds", "1"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let manifest = json(&out.join("manifest.json"));
    let eps = manifest["epsilon"].as_f64().unwrap();
    let bias = manifest["truncation_bias"].as_f64().unwrap();
    let threshold = manifest["auto_threshold"].as_f64().unwrap();
    assert!(eps > 0.0);
    assert!(bias <= threshold, "{bias} > {threshold}");
    // The recorded bias is the measure's bias at the recorded cutoff.
    let measure = MutationMeasure::positive(phenolag::Family::SmallJumpPowerLaw {
        delta: 0.5,
        rate_scale: 1.0,
        tail: Some(phenolag::PowerTail {
            coefficient: 1.0,
            exponent: 5.5,
        }),
    })
    .unwrap();
    assert_eq!(bias, measure.truncation_bias(eps));
}

#[test]
fn classify_reports_transient_speed() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, "c.toml", EXPONENTIAL);
    let out = tmp.path().join("out");
    let r = run_cmd("classify", &cfg, &out, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("Transient, speed 1.000"), "{}", r.stdout);
    let report = json(&out.join("report.json"));
    assert_eq!(report["verdict"]["kind"], "transient");
    assert_eq!(report["scenario_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn classify_finite_atoms_at_the_boundary() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let r = run_cmd(
        "classify",
        &configs().join("boundary_atoms.toml"),
        &out,
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(
        r.stdout.contains("Boundary: null recurrent"),
        "{}",
        r.stdout
    );
    let row = r
        .stdout
        .lines()
        .find(|l| l.starts_with("cond1"))
        .expect("cond1 row");
    assert!(row.contains("yes"), "{row}");
    let evidence = fs::read_to_string(out.join("evidence.csv")).unwrap();
    assert!(evidence.lines().any(|l| l.starts_with("cond1,-8,")));
    assert_eq!(
        json(&out.join("report.json"))["verdict"]["kind"],
        "boundary_null_recurrent"
    );
}

#[test]
fn open_case_exits_with_undetermined() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let r = run_cmd("classify", &configs().join("open_case.toml"), &out, &[]);
    assert_eq!(r.code, 2, "{}{}", r.stdout, r.stderr);
    assert!(r.stdout.contains("Boundary: undetermined"), "{}", r.stdout);
    assert!(r.stdout.contains("open case"), "{}", r.stdout);
    assert_eq!(json(&out.join("report.json"))["V"], "inf");
}

#[test]
fn ensemble_recovers_the_transient_speed() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let r = run_cmd("ensemble", &configs().join("transient.toml"), &out, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let summary = json(&out.join("summary.json"));
    let slope = summary["slope"]["mean"].as_f64().unwrap();
    assert!((-1.1..=-0.9).contains(&slope), "{slope}");
    assert_eq!(summary["n_paths"], 50);
    assert!(summary["mean_abs_martingale_over_t"].as_f64().unwrap() <= 0.05);
    let per_seed = fs::read_to_string(out.join("per_seed.csv")).unwrap();
    assert_eq!(per_seed.lines().count(), 2 + 50);
    let plot = fs::read_to_string(out.join("plot.gp")).unwrap();
    assert!(plot.contains("per_seed.csv"));
}

#[test]
fn null_measure_slope_is_exact() {
    let tmp = TempDir::new().unwrap();
    let text = EXPONENTIAL
        .replace(
            "family = \"exponential\"\nrate_scale = 1.0\nmean_effect = 1.0",
            "family = \"discrete_atoms\"\natoms = []",
        )
        .replace("v = 2.0", "v = 1.5");
    let cfg = config(&tmp, "c.toml", &format!("{text}\n[run]\nseeds = 2\n"));
    let out = tmp.path().join("out");
    let r = run_cmd("ensemble", &cfg, &out, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let slope = &json(&out.join("summary.json"))["slope"];
    assert_eq!(slope["mean"].as_f64().unwrap(), -1.5);
    assert_eq!(slope["sd"].as_f64().unwrap(), 0.0);
    assert_eq!(slope["ci"][0], slope["ci"][1]);
}

#[test]
fn sweep_crosses_the_trichotomy() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let r = run_cmd("sweep", &configs().join("transient.toml"), &out, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = json(&out.join("sweep.json"));
    let kinds: Vec<&str> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["report"]["verdict"]["kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds[0], "positive_recurrent");
    assert!(kinds[1].starts_with("boundary_"), "{kinds:?}");
    assert_eq!(kinds[2], "transient");
    // Each speed is its own scenario.
    let hashes: Vec<&str> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["scenario_hash"].as_str().unwrap())
        .collect();
    assert!(hashes[0] != hashes[1] && hashes[1] != hashes[2]);
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = config(
        &tmp,
        "typo.toml",
        &EXPONENTIAL.replace("mean_effect", "mean_efect"),
    );
    let r = run_cmd("simulate", &cfg, &out, &[]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("mean_efect"), "{}", r.stderr);
    assert!(!out.exists());

    let cfg = config(&tmp, "one.toml", EXPONENTIAL);
    let r = run_cmd("ensemble", &cfg, &out, &[]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("run.seeds"), "{}", r.stderr);

    let r = run_cmd("sweep", &cfg, &out, &[]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("sweep"), "{}", r.stderr);

    let r = run_cmd("simulate", &tmp.path().join("missing.toml"), &out, &[]);
    assert_eq!(r.code, 1);

    let r = phenolag(&["simulate"], None, tmp.path());
    assert_eq!(r.code, 1, "usage errors are configuration errors");
}

#[test]
fn budget_failures_exit_with_three() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{EXPONENTIAL}\n[run]\nseeds = 10\nmaster_seed = 5\nevent_cap = 50\n");
    let cfg = config(&tmp, "c.toml", &text);
    let out = tmp.path().join("out");
    let r = run_cmd("ensemble", &cfg, &out, &[]);
    assert_eq!(r.code, 3, "{}{}", r.stdout, r.stderr);
    let summary = json(&out.join("summary.json"));
    let failed = summary["failures"].as_array().unwrap().len();
    let completed = summary["n_paths"].as_u64().unwrap() as usize;
    assert!(
        failed > 0 && completed >= 2,
        "{failed} failed, {completed} completed"
    );
    assert_eq!(failed + completed, 10);

    let out = tmp.path().join("sim");
    let r = run_cmd("simulate", &cfg, &out, &[]);
    assert_eq!(r.code, 3);
    // Partial paths are still written.
    assert_eq!(files(&out).len(), 2 * 10 + 1);
}

#[test]
fn output_directory_precedence() {
    let tmp = TempDir::new().unwrap();
    let with_dir = format!("{EXPONENTIAL}\n[outputs]\ndirectory = \"from_config\"\n");
    let cfg = config(&tmp, "c.toml", &with_dir);
    let plain = config(&tmp, "p.toml", EXPONENTIAL);
    let env_dir = tmp.path().join("from_env");
    let c = cfg.to_str().unwrap();
    let p = plain.to_str().unwrap();

    assert_eq!(
        phenolag(
            &["classify", "--config", c, "--out", "from_cli"],
            Some(&env_dir),
            tmp.path()
        )
        .code,
        0
    );
    assert!(tmp.path().join("from_cli/report.json").exists());
    assert_eq!(
        phenolag(&["classify", "--config", c], Some(&env_dir), tmp.path()).code,
        0
    );
    assert!(tmp.path().join("from_config/report.json").exists());
    assert_eq!(
        phenolag(&["classify", "--config", p], Some(&env_dir), tmp.path()).code,
        0
    );
    assert!(env_dir.join("report.json").exists());
    assert_eq!(
        phenolag(&["classify", "--config", p], None, tmp.path()).code,
        0
    );
    assert!(tmp.path().join("phenolag-out/report.json").exists());
}

#[test]
fn summaries_reject_mixed_scenarios() {
    let make = |v: f64| {
        Scenario::new(
            MutationMeasure::atom(1.0, 1.0).unwrap(),
            TruncationPolicy::none(),
            phenolag::FixationModel::step(),
            SpeedModel::constant(v),
            0.0,
            20.0,
            1.0,
        )
        .unwrap()
    };
    let (a, b) = (make(0.5), make(0.6));
    let mut paths: Vec<_> = (0..3).map(|s| phenolag::simulate(&a, s).unwrap()).collect();
    assert!(summarise(&a, &paths).is_ok());
    paths.push(phenolag::simulate(&b, 9).unwrap());
    match summarise(&a, &paths) {
        Err(e @ CliError::Summary(_)) => assert!(e.to_string().contains("scenario"), "{e}"),
        other => panic!("expected a mixed-ensemble error, got {other:?}"),
    }
}

#[test]
fn shipped_configs_round_trip() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let config = phenolag_cli::RunConfig::load(&path).unwrap();
        let text = config.to_toml();
        let again = phenolag_cli::RunConfig::parse(&text).unwrap();
        assert_eq!(again, config, "{}", path.display());
        assert_eq!(again.to_toml(), text, "{}", path.display());
    }
}
