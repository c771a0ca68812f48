//! JSON scenario files and the end-to-end scenario runner behind the CLI.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::certify::{
    certify_practical_stability, convergence_study, trial_setup, CertifySettings, ConvergenceTable,
    DeltaPlan, StabilityReport,
};
use crate::error::{Error, Result};
use crate::lkf::{
    check_assumption1, check_smooth_separability, check_steepest_descent_modes,
    linear_scalar_suite, random_segments, CheckReport, Tolerance,
};
use crate::models::{benchmark, BenchmarkSpec, LinearScalar};
use crate::sampled::{sample_initial_pair, simulate_sampled, SampledConfig, SampledRun};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSearch {
    pub delta_max: f64,
    pub delta_min: f64,
    #[serde(default = "default_bisection_steps")]
    pub bisection_steps: usize,
}

fn default_bisection_steps() -> usize {
    5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LkfSection {
    #[serde(default = "default_lkf_samples")]
    pub samples: usize,
    #[serde(default = "default_lkf_radius")]
    pub radius: f64,
}

fn default_lkf_samples() -> usize {
    1000
}

fn default_lkf_radius() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub deltas: Vec<f64>,
    #[serde(default = "default_convergence_horizon")]
    pub horizon: f64,
    #[serde(default = "default_reference_step")]
    pub reference_step: f64,
}

fn default_convergence_horizon() -> f64 {
    10.0
}

fn default_reference_step() -> f64 {
    1e-4
}

fn default_substeps() -> usize {
    16
}

fn default_true() -> bool {
    true
}

/// A scenario file. Exactly one of `delta_grid` and `delta_search` is required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub r: f64,
    pub a: f64,
    pub q_tilde: f64,
    pub horizon: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Reject initial data whose slope bound exceeds `q_tilde`.
    #[serde(default = "default_true")]
    pub enforce_slope: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_search: Option<DeltaSearch>,
    /// Sampling bound for single simulations; defaults to the largest bound
    /// of the grid or search range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lkf: Option<LkfSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSection>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.settings()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn benchmark(&self) -> Result<BenchmarkSpec> {
        benchmark(&self.model.name, &self.model.params)
    }

    pub fn plan(&self) -> Result<DeltaPlan> {
        match (&self.delta_grid, &self.delta_search) {
            (Some(g), None) => Ok(DeltaPlan::Grid(g.clone())),
            (None, Some(s)) => Ok(DeltaPlan::Search {
                delta_max: s.delta_max,
                delta_min: s.delta_min,
                bisection_steps: s.bisection_steps,
            }),
            _ => Err(Error::Config(
                "exactly one of `delta_grid` and `delta_search` must be given".into(),
            )),
        }
    }

    pub fn sampled(&self) -> SampledConfig {
        SampledConfig {
            substeps: self.substeps,
            q_tilde: self.enforce_slope.then_some(self.q_tilde),
        }
    }

    /// Validated certification settings.
    pub fn settings(&self) -> Result<CertifySettings> {
        let s = CertifySettings {
            big_r: self.big_r,
            r: self.r,
            a: self.a,
            q_tilde: self.q_tilde,
            horizon: self.horizon,
            trials: self.trials,
            seed: self.seed,
            sampled: self.sampled(),
            plan: self.plan()?,
        };
        s.validate()?;
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("delta = {d} must be positive")));
            }
        }
        if let Some(c) = &self.convergence {
            if c.deltas.is_empty() || c.deltas.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(Error::Config(
                    "convergence.deltas must be a nonempty strictly decreasing list".into(),
                ));
            }
        }
        Ok(s)
    }

    /// Sampling bound for single simulations.
    pub fn simulation_delta(&self) -> Result<f64> {
        if let Some(d) = self.delta {
            return Ok(d);
        }
        Ok(match self.plan()? {
            DeltaPlan::Grid(g) => g.iter().copied().fold(f64::MIN, f64::max),
            DeltaPlan::Search { delta_max, .. } => delta_max,
        })
    }
}

/// Runs the first certification trial at the given sampling bound.
pub fn simulate(cfg: &ScenarioConfig, delta: f64) -> Result<SampledRun> {
    let spec = cfg.benchmark()?;
    let (x0, xhat0, partition) = trial_setup(&spec.model, &cfg.settings()?, 0, delta)?;
    simulate_sampled(&spec.model, &x0, &xhat0, &partition, &cfg.sampled())
}

pub fn certify(cfg: &ScenarioConfig) -> Result<StabilityReport> {
    let spec = cfg.benchmark()?;
    certify_practical_stability(&spec.model, &cfg.settings()?)
}

/// Reports of the shipped functional, keyed by inequality name.
pub type LkfReports = BTreeMap<String, CheckReport>;

/// Runs every functional check. Only the `linear-scalar` benchmark with its
/// default parameters ships a functional.
pub fn check_lkf(cfg: &ScenarioConfig) -> Result<LkfReports> {
    let spec = cfg.benchmark()?;
    let defaults = benchmark("linear-scalar", &BTreeMap::new())?;
    if spec.name != "linear-scalar" || spec.gains != defaults.gains {
        return Err(Error::Config(format!(
            "no functional is shipped for model `{}` with these parameters",
            cfg.model.name
        )));
    }
    let section = cfg.lkf.unwrap_or(LkfSection {
        samples: default_lkf_samples(),
        radius: default_lkf_radius(),
    });
    let model = LinearScalar::default().model();
    let suite = linear_scalar_suite();
    let samples = random_segments(
        section.samples,
        2 * model.n,
        model.delay,
        section.radius,
        cfg.seed,
    );
    let tol = Tolerance::default();
    let a1 = check_assumption1(&suite, &model, &samples, tol)?;
    let (def4, proof) = check_steepest_descent_modes(&suite, &model, &samples, tol)?;
    let mut out = BTreeMap::new();
    out.insert(
        "separability".into(),
        check_smooth_separability(&suite, &samples, tol),
    );
    out.insert("assumption1_classes".into(), a1.classes);
    out.insert("assumption1_sandwich".into(), a1.sandwich);
    out.insert("assumption1_decay".into(), a1.decay);
    out.insert("assumption1_razumikhin".into(), a1.razumikhin);
    out.insert("steepest_descent_definition4".into(), def4);
    out.insert("steepest_descent_proof_form".into(), proof);
    Ok(out)
}

/// Convergence study from the scenario's seeded initial data.
pub fn sweep(cfg: &ScenarioConfig) -> Result<ConvergenceTable> {
    let section = cfg
        .convergence
        .clone()
        .ok_or_else(|| Error::Config("missing `convergence` section".into()))?;
    let spec = cfg.benchmark()?;
    let model = &spec.model;
    let (x0, xhat0) = sample_initial_pair(cfg.big_r, cfg.q_tilde, model.delay, model.n, cfg.seed)?;
    convergence_study(
        model,
        &x0,
        &xhat0,
        &section.deltas,
        section.horizon,
        section.reference_step,
        &cfg.sampled(),
    )
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Verdict of a scenario run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
        }
    }
}

/// Full scenario: one exported trajectory, the stability certificate, the
/// functional checks when a functional is shipped for the model, and the
/// convergence table when configured.
///
/// Writes `trajectory/`, `stability_report.json`, `lkf_reports.json` and
/// `convergence.csv` into `out`.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> Result<Verdict> {
    fs::create_dir_all(out)?;
    let report = certify(cfg)?;
    write_json(&out.join("stability_report.json"), &report)?;
    let mut passed = report.passed;

    let delta = report.delta_star.unwrap_or(cfg.simulation_delta()?);
    match simulate(cfg, delta) {
        Ok(run) => {
            let dir = out.join("trajectory");
            fs::create_dir_all(&dir)?;
            run.save(&dir)?;
        }
        Err(e @ Error::Divergence { .. }) => info!("exported trajectory diverged: {e}"),
        Err(e) => return Err(e),
    }

    match check_lkf(cfg) {
        Ok(reports) => {
            passed &= reports.values().all(|r| r.passed);
            write_json(&out.join("lkf_reports.json"), &reports)?;
        }
        Err(Error::Config(m)) => info!("skipping functional checks: {m}"),
        Err(e) => return Err(e),
    }

    if cfg.convergence.is_some() {
        let table = sweep(cfg)?;
        table.write_csv(fs::File::create(out.join("convergence.csv"))?)?;
    }
    info!("scenario {}", if passed { "passed" } else { "failed" });
    Ok(if passed { Verdict::Pass } else { Verdict::Fail })
}
