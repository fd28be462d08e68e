//! The four subcommands.

use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Instant;

use phenolag::analysis::{
    classify_with, estimate_speed, occupation_fraction, return_time_stats, serde_inf,
    AnalysisError, RegimeReport, ReturnTimeStats, Verdict,
};
use phenolag::simulator::diagnostics::martingale_terminal;
use phenolag::simulator::{run_ensemble, SimError, SimOptions, DEFAULT_EVENT_CAP};
use phenolag::{MomentFunctionals, Scenario, Trajectory};
use serde::Serialize;

use crate::config::{ConfigError, Format, Resolved, RunConfig, Seeds};
use crate::output::{ensemble_plot, resolve_out_dir, trajectory_plot, with_hash, OutDir, OUT_ENV};
use crate::{CliError, Outcome};

/// Seeds simulated per batch by `simulate`, bounding memory for long runs.
const BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Classify,
    Ensemble,
    Sweep,
}

/// A parsed command line.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    /// Overrides `run.seeds` with a count.
    pub seeds: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Runs a command; human-readable progress goes to `stdout`.
pub fn run(inv: &Invocation, stdout: &mut dyn Write) -> Result<Outcome, CliError> {
    let mut config = RunConfig::load(&inv.config)?;
    if let Some(n) = inv.seeds {
        config.run.seeds = Seeds::Count(n);
        config.validate()?;
    }
    let dir = resolve_out_dir(
        inv.out.as_deref(),
        config.outputs.directory.as_deref(),
        std::env::var_os(OUT_ENV),
    );
    let ctx = Context { config, dir };
    let io_err = |source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    };
    match inv.command {
        Command::Simulate => ctx.simulate(),
        Command::Classify => ctx.classify(),
        Command::Ensemble => ctx.ensemble(),
        Command::Sweep => ctx.sweep(),
    }
    .and_then(|(outcome, summary)| {
        stdout.write_all(summary.as_bytes()).map_err(io_err)?;
        Ok(outcome)
    })
}

struct Context {
    config: RunConfig,
    dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct SeedFailure {
    seed: u64,
    error: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    scenario: &'a Scenario,
    epsilon: f64,
    truncation_bias: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    auto_threshold: Option<f64>,
    master_seed: u64,
    seeds: &'a [u64],
    files: &'a [String],
    failures: &'a [SeedFailure],
    wall_time_s: f64,
}

impl Context {
    fn workers(&self) -> usize {
        match self.config.run.workers {
            0 => std::thread::available_parallelism().map_or(1, usize::from),
            n => n,
        }
    }

    fn sim_options(&self, record_rejected: bool) -> SimOptions {
        SimOptions {
            event_cap: self.config.run.event_cap.unwrap_or(DEFAULT_EVENT_CAP),
            record_rejected,
        }
    }

    fn seeds(&self) -> Vec<u64> {
        self.config.run.seeds.expand(self.config.run.master_seed)
    }

    fn simulate(&self) -> Result<(Outcome, String), CliError> {
        let start = Instant::now();
        let Resolved {
            scenario: sc,
            auto_threshold,
        } = self.config.resolve()?;
        let hash = sc.hash();
        let seeds = self.seeds();
        let outputs = &self.config.outputs;
        let mut out = OutDir::create(self.dir.clone())?;
        let mut failures = Vec::new();
        // Paths are simulated in parallel and written here, in seed order.
        for batch in seeds.chunks(BATCH) {
            let results = run_ensemble(&sc, batch, self.workers(), self.sim_options(true));
            for (&seed, result) in batch.iter().zip(results) {
                let traj = match result {
                    Ok(t) => t,
                    Err(SimError::BudgetExceeded { cap, partial }) => {
                        failures.push(SeedFailure {
                            seed,
                            error: format!(
                                "event cap of {cap} exceeded at t = {}",
                                partial.end_time
                            ),
                        });
                        *partial
                    }
                    Err(e) => {
                        failures.push(SeedFailure {
                            seed,
                            error: e.to_string(),
                        });
                        continue;
                    }
                };
                if outputs.wants(Format::Csv) {
                    out.write_with(&format!("traj_{seed}.csv"), |w| traj.write_csv(w))?;
                }
                if outputs.wants(Format::Jsonl) {
                    out.write_with(&format!("events_{seed}.jsonl"), |w| {
                        traj.write_events_jsonl(w)
                    })?;
                }
            }
        }
        if outputs.emit_plot_script {
            let script = trajectory_plot(&hash, out.written());
            out.write_with("plot.gp", |w| w.write_all(script.as_bytes()))?;
        }
        let files: Vec<String> = out.written().to_vec();
        let manifest = Manifest {
            command: "simulate",
            scenario: &sc,
            epsilon: sc.trunc.epsilon,
            truncation_bias: sc.trunc.bias_bound,
            auto_threshold,
            master_seed: self.config.run.master_seed,
            seeds: &seeds,
            files: &files,
            failures: &failures,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        out.write_json("manifest.json", &with_hash(&hash, &manifest))?;
        let mut summary = format!(
            "simulated {} of {} seeds into {} (scenario {})\n",
            seeds.len() - failures.len(),
            seeds.len(),
            out.path().display(),
            short(&hash)
        );
        for f in &failures {
            summary.push_str(&format!("seed {} failed: {}\n", f.seed, f.error));
        }
        let outcome = if failures.is_empty() {
            Outcome::Success
        } else {
            Outcome::PartialFailure
        };
        Ok((outcome, summary))
    }

    fn report(&self, sc: &Scenario) -> RegimeReport {
        let funcs = MomentFunctionals::new(sc.measure.clone(), sc.model);
        classify_with(&funcs, &sc.speed, &self.config.analysis.options())
    }

    fn classify(&self) -> Result<(Outcome, String), CliError> {
        let sc = self.config.resolve()?.scenario;
        let hash = sc.hash();
        let report = self.report(&sc);
        let mut out = OutDir::create(self.dir.clone())?;
        out.write_json("report.json", &with_hash(&hash, &report))?;
        if self.config.outputs.wants(Format::Csv) {
            out.write_with("evidence.csv", |w| write_evidence(w, &hash, &report))?;
        }
        let outcome = if report.verdict == Verdict::BoundaryUndetermined {
            Outcome::Undetermined
        } else {
            Outcome::Success
        };
        Ok((outcome, render_report(&hash, &report)))
    }

    fn ensemble(&self) -> Result<(Outcome, String), CliError> {
        let start = Instant::now();
        if self.config.run.seeds.len() < 2 {
            return Err(ConfigError::Invalid {
                key: "run.seeds".into(),
                message: "an ensemble needs at least two seeds".into(),
            }
            .into());
        }
        let sc = self.config.resolve()?.scenario;
        let hash = sc.hash();
        let seeds = self.seeds();
        let results = run_ensemble(&sc, &seeds, self.workers(), self.sim_options(false));
        let mut paths = Vec::new();
        let mut failures = Vec::new();
        for (&seed, result) in seeds.iter().zip(results) {
            match result {
                Ok(t) => paths.push(t),
                Err(e) => failures.push(SeedFailure {
                    seed,
                    error: e.to_string(),
                }),
            }
        }
        let mut out = OutDir::create(self.dir.clone())?;
        let summary = summarise(&sc, &paths)?;
        out.write_with("per_seed.csv", |w| {
            write_per_seed(w, &hash, &paths, &summary)
        })?;
        if let Some(ex) = &summary.excursions {
            if self.config.outputs.wants(Format::Csv) {
                out.write_with("excursions.csv", |w| write_tail(w, &hash, ex))?;
            }
        }
        if self.config.outputs.emit_plot_script {
            let script = ensemble_plot(
                &hash,
                summary.excursions.is_some() && self.config.outputs.wants(Format::Csv),
            );
            out.write_with("plot.gp", |w| w.write_all(script.as_bytes()))?;
        }
        let doc = EnsembleDoc {
            command: "ensemble",
            n_seeds: seeds.len(),
            summary: &summary,
            failures: &failures,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        out.write_json("summary.json", &with_hash(&hash, &doc))?;

        let mut text = format!(
            "ensemble of {} paths (scenario {})\n",
            paths.len(),
            short(&hash)
        );
        text.push_str(&format!(
            "X_T/T = {:+.4} (95% CI [{:+.4}, {:+.4}])\nmean |M_T/T| = {:.4}\n",
            summary.slope.mean,
            summary.slope.ci.0,
            summary.slope.ci.1,
            summary.mean_abs_martingale_over_t
        ));
        match &summary.excursions {
            Some(ex) => text.push_str(&format!(
                "excursions below 0: {} completed, {} censored, mean length {:.3}, {:.2} returns per path\n",
                ex.completed, ex.censored, ex.mean, ex.mean_returns
            )),
            None => text.push_str("no excursions below 0\n"),
        }
        for f in &failures {
            text.push_str(&format!("seed {} failed: {}\n", f.seed, f.error));
        }
        let outcome = if failures.is_empty() {
            Outcome::Success
        } else {
            Outcome::PartialFailure
        };
        Ok((outcome, text))
    }

    fn sweep(&self) -> Result<(Outcome, String), CliError> {
        let values = match &self.config.sweep {
            Some(s) => s.v.clone(),
            None => {
                return Err(ConfigError::Invalid {
                    key: "sweep".into(),
                    message: "the sweep command needs a [sweep] section with speeds `v`".into(),
                }
                .into())
            }
        };
        let mut rows = Vec::new();
        for v in values {
            let speed = self.config.speed_with_mean(v)?;
            let sc = self.config.resolve_with_speed(speed)?.scenario;
            let hash = sc.hash();
            let report = self.report(&sc);
            rows.push(SweepRow {
                v,
                scenario_hash: hash,
                verdict_text: report.verdict.to_string(),
                report,
            });
        }
        let mut out = OutDir::create(self.dir.clone())?;
        out.write_json("sweep.json", &rows)?;
        if self.config.outputs.wants(Format::Csv) {
            out.write_with("sweep.csv", |w| {
                writeln!(w, "v,verdict,scenario_hash")?;
                for r in &rows {
                    writeln!(
                        w,
                        "{},{},{}",
                        r.v,
                        r.verdict_text.replace(',', ";"),
                        r.scenario_hash
                    )?;
                }
                Ok(())
            })?;
        }
        let mut text = String::new();
        for r in &rows {
            text.push_str(&format!(
                "v = {:<10} {} (scenario {})\n",
                r.v,
                r.verdict_text,
                short(&r.scenario_hash)
            ));
        }
        let undetermined = rows
            .iter()
            .any(|r| r.report.verdict == Verdict::BoundaryUndetermined);
        let outcome = if undetermined {
            Outcome::Undetermined
        } else {
            Outcome::Success
        };
        Ok((outcome, text))
    }
}

#[derive(Serialize)]
struct SweepRow {
    v: f64,
    scenario_hash: String,
    #[serde(rename = "verdict")]
    verdict_text: String,
    report: RegimeReport,
}

#[derive(Serialize)]
struct EnsembleDoc<'a> {
    command: &'static str,
    n_seeds: usize,
    #[serde(flatten)]
    summary: &'a Summary,
    failures: &'a [SeedFailure],
    wall_time_s: f64,
}

/// Slope statistics over an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct Slope {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci: (f64, f64),
}

/// Excursions below zero.
#[derive(Debug, Clone, Serialize)]
pub struct Excursions {
    pub completed: usize,
    pub censored: usize,
    #[serde(serialize_with = "serde_inf::scalar")]
    pub mean: f64,
    #[serde(serialize_with = "serde_inf::scalar")]
    pub median: f64,
    pub mean_returns: f64,
    #[serde(skip)]
    pub returns_per_path: Vec<usize>,
    #[serde(skip)]
    pub tail: Vec<(f64, f64)>,
}

impl From<ReturnTimeStats> for Excursions {
    fn from(s: ReturnTimeStats) -> Self {
        Excursions {
            completed: s.completed,
            censored: s.censored,
            mean: s.mean,
            median: s.median,
            mean_returns: s.mean_returns,
            returns_per_path: s.returns_per_path,
            tail: s.tail,
        }
    }
}

/// Ensemble statistics over completed paths of one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub n_paths: usize,
    pub horizon: f64,
    pub slope: Slope,
    #[serde(skip)]
    pub slopes: Vec<f64>,
    pub mean_abs_martingale_over_t: f64,
    #[serde(skip)]
    pub martingale_over_t: Vec<f64>,
    /// `None` when no path ever drops below zero.
    pub excursions: Option<Excursions>,
}

/// Summarises paths, refusing ensembles that mix scenarios.
pub fn summarise(sc: &Scenario, paths: &[Trajectory]) -> Result<Summary, CliError> {
    let hash = sc.hash();
    if let Some(other) = paths.iter().find(|p| p.scenario_hash != hash) {
        return Err(AnalysisError::MixedEnsemble(format!(
            "seed {} has scenario {}, expected {}",
            other.seed,
            short(&other.scenario_hash),
            short(&hash)
        ))
        .into());
    }
    let speed = estimate_speed(paths)?;
    let mut martingale_over_t = Vec::with_capacity(paths.len());
    for p in paths {
        let m = martingale_terminal(p, sc)?;
        martingale_over_t.push(m / p.end_time);
    }
    let mut abs: Vec<f64> = martingale_over_t.iter().map(|m| m.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let mean_abs = abs.iter().sum::<f64>() / abs.len() as f64;
    let excursions = match return_time_stats(paths, 0.0) {
        Ok(s) => Some(s.into()),
        Err(AnalysisError::NoCrossings { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(Summary {
        n_paths: paths.len(),
        horizon: speed.horizon,
        slope: Slope {
            n: speed.n,
            mean: speed.mean,
            sd: speed.sd,
            ci: speed.ci,
        },
        slopes: speed.slopes,
        mean_abs_martingale_over_t: mean_abs,
        martingale_over_t,
        excursions,
    })
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

fn write_per_seed(
    w: &mut dyn Write,
    hash: &str,
    paths: &[Trajectory],
    s: &Summary,
) -> io::Result<()> {
    writeln!(w, "# scenario_hash={hash}")?;
    writeln!(
        w,
        "seed,terminal,end_time,slope,martingale_over_t,returns,fraction_nonnegative"
    )?;
    for (i, p) in paths.iter().enumerate() {
        let returns = s.excursions.as_ref().map_or(0, |e| e.returns_per_path[i]);
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.seed,
            p.terminal(),
            p.end_time,
            s.slopes[i],
            s.martingale_over_t[i],
            returns,
            occupation_fraction(p, 0.0, f64::INFINITY)
        )?;
    }
    Ok(())
}

fn write_tail(w: &mut dyn Write, hash: &str, ex: &Excursions) -> io::Result<()> {
    writeln!(w, "# scenario_hash={hash}")?;
    writeln!(w, "duration,survival")?;
    for (d, p) in &ex.tail {
        writeln!(w, "{d},{p}")?;
    }
    Ok(())
}

fn write_evidence(w: &mut dyn Write, hash: &str, report: &RegimeReport) -> io::Result<()> {
    writeln!(w, "# scenario_hash={hash}")?;
    writeln!(w, "condition,x,lhs,rhs,value")?;
    for c in &report.condition_evidence {
        c.write_csv_rows(&mut *w)?;
    }
    Ok(())
}

/// Verdict, moments and a one-line-per-condition evidence table.
pub fn render_report(hash: &str, r: &RegimeReport) -> String {
    let mut s = format!(
        "scenario {}\nm = {}, V = {}, mean speed = {}\nverdict: {}\n",
        short(hash),
        r.m,
        r.v,
        r.vbar,
        r.verdict
    );
    if let Some(p) = r.p {
        s.push_str(&format!("p = {p}\n"));
    }
    if !r.condition_evidence.is_empty() {
        s.push_str(&format!(
            "{:<12} {:<13} {:>12} {:>12} {:<10}\n",
            "condition", "satisfied", "margin", "limit", "trend"
        ));
        for c in &r.condition_evidence {
            s.push_str(&format!(
                "{:<12} {:<13} {:>12.4e} {:>12.4e} {:<10}\n",
                c.id.as_str(),
                c.satisfied.as_str(),
                c.margin,
                c.limit_estimate,
                format!("{:?}", c.trend).to_lowercase()
            ));
        }
    }
    for n in &r.notes {
        s.push_str(&format!("note: {n}\n"));
    }
    s
}
