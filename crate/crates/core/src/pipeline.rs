//! End-to-end workflow: tau-leap ensemble, projection fit, reduced value
//! function, mapped controls, and importance-sampled forward runs compared
//! against plain tau-leap.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{normal_quantile, EstimatorReport, Observable, ReportSummary};
use crate::hjb::{
    solve_hjb_backward, FullDynamics, FullHjbPolicy, HjbConfig, MpAlternativePolicy,
    MpMappedPolicy, SigmoidFinal, ValueFunctionGrid, DEFAULT_SLOPE, DEFAULT_U_FLOOR,
};
use crate::importance::{
    crude_mc_estimate, is_mc_estimate, ControlPolicy, CrudePolicy, PolicyKind, Streams,
};
use crate::network::{Preset, ReactionNetwork, TimeGrid};
use crate::projection::{
    fit_mp, generate_regression_paths, mp_process_final, BasisSpec, FitOptions, MpModel, Projection,
};
use crate::rng::{RngStream, StreamTag};
use crate::simulate::{tau_leap_final, tau_leap_streaming, WorkCounters};

pub const MODEL_FILE: &str = "mp_model.txt";
pub const GRID_FILE: &str = "value_grid.txt";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SEEDS_FILE: &str = "seeds.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Pilot paths used to size the truncation box.
pub const PILOT_PATHS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionSettings {
    pub paths: u64,
    pub dt: f64,
    /// Largest exponent of `t` and of the projected state in the basis.
    pub max_degree: u32,
    pub force_regression: bool,
}

impl Default for RegressionSettings {
    fn default() -> Self {
        Self {
            paths: 10_000,
            dt: 1.0 / 16.0,
            max_degree: 2,
            force_regression: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HjbSettings {
    /// Truncation bound; `None` sizes it from a pilot run.
    pub s_max: Option<i64>,
    pub u_floor: f64,
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    pub max_step: Option<f64>,
    pub sigmoid_slope: f64,
    /// Sigmoid midpoint; `None` means threshold + 0.5.
    pub sigmoid_midpoint: Option<f64>,
}

impl Default for HjbSettings {
    fn default() -> Self {
        Self {
            s_max: None,
            u_floor: DEFAULT_U_FLOOR,
            ode_rel_tol: 1e-6,
            ode_abs_tol: 1e-9,
            max_step: None,
            sigmoid_slope: DEFAULT_SLOPE,
            sigmoid_midpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardSettings {
    pub paths: u64,
    /// Crude baseline paths; `None` means the same as `paths`.
    pub crude_paths: Option<u64>,
    pub dts: Vec<f64>,
    /// Confidence level parameter of the reported half-widths.
    pub alpha: f64,
}

impl Default for ForwardSettings {
    fn default() -> Self {
        Self {
            paths: 100_000,
            crude_paths: None,
            dts: vec![1.0 / 64.0],
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub network: ReactionNetwork,
    pub initial_state: Vec<i64>,
    pub final_time: f64,
    pub observed_species: usize,
    pub threshold: f64,
    pub regression: RegressionSettings,
    pub hjb: HjbSettings,
    pub forward: ForwardSettings,
    pub seed: u64,
    pub policy: PolicyKind,
    pub output_dir: Option<PathBuf>,
    /// Previously fitted model; skips the regression stage.
    pub model_path: Option<PathBuf>,
    /// Previously solved value function; skips the HJB stage.
    pub grid_path: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_preset(preset: &Preset) -> Self {
        Self {
            network: preset.network.clone(),
            initial_state: preset.initial_state.to_vec(),
            final_time: preset.final_time,
            observed_species: preset.observed_species,
            threshold: preset.threshold,
            regression: RegressionSettings::default(),
            hjb: HjbSettings::default(),
            forward: ForwardSettings::default(),
            seed: 0,
            policy: PolicyKind::MpMapped,
            output_dir: None,
            model_path: None,
            grid_path: None,
        }
    }

    pub fn observable(&self) -> Observable {
        Observable::above(self.observed_species, self.threshold)
    }

    pub fn sigmoid(&self, coordinate: usize) -> SigmoidFinal {
        let slope = self.hjb.sigmoid_slope;
        let mid = self.hjb.sigmoid_midpoint.unwrap_or(self.threshold + 0.5);
        SigmoidFinal {
            offset: -slope * mid,
            slope,
            species: coordinate,
        }
    }

    fn validate(&self) -> Result<()> {
        self.network.check_state(&self.initial_state)?;
        if self.observed_species >= self.network.species_count() {
            return Err(Error::Config(format!(
                "observed species {} outside the {}-species network",
                self.observed_species,
                self.network.species_count()
            )));
        }
        TimeGrid::from_step(self.final_time, self.regression.dt)?;
        if self.forward.dts.is_empty() {
            return Err(Error::Config(
                "forward run needs at least one step size".into(),
            ));
        }
        for &dt in &self.forward.dts {
            TimeGrid::from_step(self.final_time, dt)?;
        }
        if self.forward.paths < 2 {
            return Err(Error::Config("forward run needs at least two paths".into()));
        }
        if matches!(self.policy, PolicyKind::Scaled) {
            return Err(Error::Config(
                "the pipeline does not run the scaled policy".into(),
            ));
        }
        if matches!(self.policy, PolicyKind::HjbFull) && self.network.species_count() > 2 {
            return Err(Error::Config(format!(
                "full-dimensional value functions are limited to two species, network has {}",
                self.network.species_count()
            )));
        }
        normal_quantile(self.forward.alpha)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GuardStatus {
    Pass,
    Warn,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub dt: f64,
    pub crude: ReportSummary,
    pub importance: ReportSummary,
    /// `(1 - p) / p` with `p` the IS estimate.
    pub crude_proxy_squared_cv: f64,
    pub reduction_factor: f64,
    /// Bernoulli kurtosis `(1 - 3p + 3p^2) / (p (1 - p))`.
    pub crude_proxy_kurtosis: f64,
    pub kurtosis_guard: GuardStatus,
    pub extrapolated_queries: u64,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub crude_report: EstimatorReport,
    #[serde(skip)]
    pub is_report: EstimatorReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub policy: PolicyKind,
    pub model_hash: Option<String>,
    pub grid_hash: Option<String>,
    pub model_reused: bool,
    pub grid_reused: bool,
    pub crate_version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub observable: String,
    pub s_max: Option<i64>,
    pub rows: Vec<ComparisonRow>,
    pub provenance: Provenance,
    pub fit_residuals: BTreeMap<usize, f64>,
    pub stage_times_s: BTreeMap<String, f64>,
}

impl ComparisonReport {
    pub fn row(&self, dt: f64) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.dt == dt)
    }
}

/// Report together with the off-line artifacts it was built from.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: ComparisonReport,
    pub model: Option<Arc<MpModel>>,
    pub grid: Option<Arc<ValueFunctionGrid>>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Non-excess kurtosis of a Bernoulli(`p`) variable.
pub fn bernoulli_kurtosis(p: f64) -> f64 {
    (1.0 - 3.0 * p + 3.0 * p * p) / (p * (1.0 - p))
}

/// Runs every stage; with `output_dir` set, artifacts are written as soon
/// as they exist.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    stage("validate", cfg.validate())?;
    if let Some(dir) = &cfg.output_dir {
        stage(
            "validate",
            std::fs::create_dir_all(dir).map_err(Error::from),
        )?;
    }
    let out = |name: &str| cfg.output_dir.as_ref().map(|d| d.join(name));
    let mut times = BTreeMap::new();
    let g = cfg.observable();
    let x0 = &cfg.initial_state;
    let net = &cfg.network;
    let uses_model = matches!(cfg.policy, PolicyKind::MpMapped | PolicyKind::MpAlternative);
    let uses_grid = uses_model || matches!(cfg.policy, PolicyKind::HjbFull);

    let clock = Instant::now();
    let mut model_reused = false;
    let model = if !uses_model {
        None
    } else if let Some(path) = &cfg.model_path {
        model_reused = true;
        let m = stage("regression", MpModel::load(path))?;
        stage("regression", m.check_network(net))?;
        let expected = Projection::canonical(net.species_count(), &[cfg.observed_species])?;
        if m.projection() != &expected {
            return Err(Error::Stage {
                stage: "regression",
                source: Box::new(Error::Config(
                    "model projection does not select the observed species".into(),
                )),
            });
        }
        Some(Arc::new(m))
    } else {
        let m = stage("regression", fit_model(cfg))?;
        if let Some(p) = out(MODEL_FILE) {
            stage("regression", m.save(p))?;
        }
        Some(Arc::new(m))
    };
    times.insert("regression".to_string(), clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let mut grid_reused = false;
    let mut s_max = None;
    let grid = if !uses_grid {
        None
    } else if let Some(path) = &cfg.grid_path {
        grid_reused = true;
        let gr = stage("hjb", ValueFunctionGrid::load(path))?;
        let dims = model
            .as_ref()
            .map(|m| m.projection().dims())
            .unwrap_or(net.species_count());
        if gr.lattice().dims() != dims {
            return Err(Error::Stage {
                stage: "hjb",
                source: Box::new(Error::Config(format!(
                    "grid has {} coordinates, expected {dims}",
                    gr.lattice().dims()
                ))),
            });
        }
        s_max = gr.lattice().upper().iter().copied().max();
        Some(Arc::new(gr))
    } else {
        let (gr, bound) = solve_value_function(cfg, model.as_deref())?;
        s_max = Some(bound);
        if let Some(p) = out(GRID_FILE) {
            stage("hjb", gr.save(p))?;
        }
        Some(Arc::new(gr))
    };
    times.insert("hjb".to_string(), clock.elapsed().as_secs_f64());

    let policy: Box<dyn ControlPolicy> = stage(
        "controls",
        match cfg.policy {
            PolicyKind::Crude => Ok(Box::new(CrudePolicy) as Box<dyn ControlPolicy>),
            PolicyKind::HjbFull => {
                FullHjbPolicy::new(grid.clone().expect("grid built"), net).map(|p| Box::new(p) as _)
            }
            PolicyKind::MpMapped => {
                let m = model.as_ref().expect("model built");
                MpMappedPolicy::new(
                    grid.clone().expect("grid built"),
                    m.projection().clone(),
                    net,
                )
                .map(|p| Box::new(p) as _)
            }
            PolicyKind::MpAlternative => MpAlternativePolicy::new(
                grid.clone().expect("grid built"),
                model.clone().expect("model built"),
                net,
            )
            .map(|p| Box::new(p) as _),
            PolicyKind::Scaled => unreachable!("rejected in validation"),
        },
    )?;

    let c_alpha = normal_quantile(cfg.forward.alpha)?;
    let crude_paths = cfg.forward.crude_paths.unwrap_or(cfg.forward.paths);
    let mut rows = Vec::with_capacity(cfg.forward.dts.len());
    let clock = Instant::now();
    for (k, &dt) in cfg.forward.dts.iter().enumerate() {
        let started = Instant::now();
        let tgrid = TimeGrid::from_step(cfg.final_time, dt)?;
        let before = model
            .as_ref()
            .map(|m| m.extrapolated_queries())
            .unwrap_or(0);
        let slot = k as u16;
        let is = stage(
            "forward",
            is_mc_estimate(
                net,
                x0,
                &tgrid,
                policy.as_ref(),
                &g,
                cfg.forward.paths,
                Streams::new(cfg.seed, StreamTag::Importance, slot),
                c_alpha,
            ),
        )?;
        let after = model
            .as_ref()
            .map(|m| m.extrapolated_queries())
            .unwrap_or(0);
        let crude = stage(
            "forward",
            crude_mc_estimate(
                net,
                x0,
                &tgrid,
                &g,
                crude_paths,
                Streams::new(cfg.seed, StreamTag::Crude, slot),
                c_alpha,
            ),
        )?;
        let p = is.mean();
        let proxy = (1.0 - p) / p;
        let kurt_proxy = bernoulli_kurtosis(p);
        let guard = if is.kurtosis_defined() && is.kurtosis() < kurt_proxy {
            GuardStatus::Pass
        } else {
            GuardStatus::Warn
        };
        let row = ComparisonRow {
            dt,
            crude: crude.summary(),
            importance: is.summary(),
            crude_proxy_squared_cv: proxy,
            reduction_factor: proxy / is.squared_cv(),
            crude_proxy_kurtosis: kurt_proxy,
            kurtosis_guard: guard,
            extrapolated_queries: after - before,
            wall_time_s: started.elapsed().as_secs_f64(),
            crude_report: crude,
            is_report: is,
        };
        if let Some(p) = out(&format!("dt_{dt}.csv")) {
            stage("report", write_dt_csv(&p, &row))?;
        }
        rows.push(row);
    }
    times.insert("forward".to_string(), clock.elapsed().as_secs_f64());

    let fit_residuals = model
        .as_ref()
        .map(|m| {
            (0..m.reaction_count())
                .filter_map(|j| m.residual(j).map(|r| (j, r)))
                .collect()
        })
        .unwrap_or_default();
    let report = ComparisonReport {
        observable: g.describe(),
        s_max,
        rows,
        provenance: Provenance {
            seed: cfg.seed,
            policy: cfg.policy,
            model_hash: model.as_ref().map(|m| m.content_hash()),
            grid_hash: grid.as_ref().map(|g| g.content_hash()),
            model_reused,
            grid_reused,
            crate_version: env!("CARGO_PKG_VERSION"),
        },
        fit_residuals,
        stage_times_s: times,
    };
    if let Some(dir) = &cfg.output_dir {
        stage("report", write_report(dir, cfg, &report))?;
    }
    Ok(PipelineRun {
        report,
        model,
        grid,
    })
}

/// Regression stage on its own: tau-leap ensemble at the fitting step and
/// least-squares fit onto the observed species.
pub fn fit_model(cfg: &PipelineConfig) -> Result<MpModel> {
    let net = &cfg.network;
    let grid = TimeGrid::from_step(cfg.final_time, cfg.regression.dt)?;
    let paths = generate_regression_paths(
        net,
        &cfg.initial_state,
        &grid,
        cfg.regression.paths,
        cfg.seed,
    )?;
    let proj = Projection::canonical(net.species_count(), &[cfg.observed_species])?;
    let basis = BasisSpec::tensor(1, cfg.regression.max_degree);
    let opts = FitOptions {
        force_regression: cfg.regression.force_regression,
    };
    fit_mp(&paths, &grid, &basis, &proj, net, &opts)
}

/// Value function of the surrogate (`model`) or of the full network, with
/// the truncation bound actually used.
pub fn solve_value_function(
    cfg: &PipelineConfig,
    model: Option<&MpModel>,
) -> Result<(ValueFunctionGrid, i64)> {
    let bound = match cfg.hjb.s_max {
        Some(b) => b,
        None => stage("pilot", pilot_bound(cfg))?,
    };
    let hcfg = HjbConfig {
        s_max: bound,
        u_floor: cfg.hjb.u_floor,
        ode_rel_tol: cfg.hjb.ode_rel_tol,
        ode_abs_tol: cfg.hjb.ode_abs_tol,
        max_step: cfg.hjb.max_step,
    };
    let gr = match model {
        Some(m) => solve_hjb_backward(m, cfg.final_time, &cfg.sigmoid(0), &hcfg),
        None => solve_hjb_backward(
            &FullDynamics(&cfg.network),
            cfg.final_time,
            &cfg.sigmoid(cfg.observed_species),
            &hcfg,
        ),
    };
    Ok((stage("hjb", gr)?, bound))
}

/// `2 max(threshold, largest observed count over the pilot paths)`.
fn pilot_bound(cfg: &PipelineConfig) -> Result<i64> {
    let grid = TimeGrid::from_step(cfg.final_time, cfg.regression.dt)?;
    let i = cfg.observed_species;
    let max = (0..PILOT_PATHS)
        .into_par_iter()
        .map(|m| {
            let mut rng = RngStream::new(cfg.seed, StreamTag::Pilot.stream(0, m));
            let mut w = WorkCounters::default();
            let mut top = 0i64;
            tau_leap_streaming(
                &cfg.network,
                &cfg.initial_state,
                &grid,
                &mut rng,
                &mut w,
                |_, x| top = top.max(x[i]),
            );
            top
        })
        .max()
        .unwrap_or(0);
    Ok(2 * (cfg.threshold.ceil() as i64).max(max))
}

fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

const SUMMARY_HEADER: [&str; 13] = [
    "dt",
    "is_paths",
    "is_mean",
    "is_ci_halfwidth",
    "is_squared_cv",
    "is_kurtosis",
    "crude_paths",
    "crude_mean",
    "crude_ci_halfwidth",
    "crude_proxy_squared_cv",
    "reduction_factor",
    "crude_proxy_kurtosis",
    "kurtosis_guard",
];

/// Summary table without timing columns, so identical runs give identical bytes.
pub fn summary_csv(report: &ComparisonReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for r in &report.rows {
        w.write_record([
            fmt_f(r.dt),
            r.importance.paths.to_string(),
            fmt_f(r.importance.mean),
            fmt_f(r.importance.ci_halfwidth),
            fmt_f(r.importance.squared_cv),
            fmt_f(r.importance.kurtosis),
            r.crude.paths.to_string(),
            fmt_f(r.crude.mean),
            fmt_f(r.crude.ci_halfwidth),
            fmt_f(r.crude_proxy_squared_cv),
            fmt_f(r.reduction_factor),
            fmt_f(r.crude_proxy_kurtosis),
            match r.kurtosis_guard {
                GuardStatus::Pass => "pass".to_string(),
                GuardStatus::Warn => "warn".to_string(),
            },
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_dt_csv(path: &Path, row: &ComparisonRow) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "estimator",
        "paths",
        "mean",
        "variance",
        "squared_cv",
        "kurtosis",
        "ci_halfwidth",
        "poisson_draws",
        "propensity_evals",
        "likelihood_updates",
        "wall_time_s",
    ])?;
    for (name, s) in [("importance", &row.importance), ("crude", &row.crude)] {
        w.write_record([
            name.to_string(),
            s.paths.to_string(),
            fmt_f(s.mean),
            fmt_f(s.variance),
            fmt_f(s.squared_cv),
            fmt_f(s.kurtosis),
            fmt_f(s.ci_halfwidth),
            s.poisson_draws.to_string(),
            s.propensity_evals.to_string(),
            s.likelihood_updates.to_string(),
            fmt_f(row.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_report(dir: &Path, cfg: &PipelineConfig, report: &ComparisonReport) -> Result<()> {
    std::fs::write(dir.join(SUMMARY_CSV), summary_csv(report)?)?;
    std::fs::write(
        dir.join(SUMMARY_JSON),
        serde_json::to_string_pretty(report)?,
    )?;
    let seeds = serde_json::json!({
        "seed": cfg.seed,
        "streams": {
            "pilot": StreamTag::Pilot as u16,
            "regression": StreamTag::Regression as u16,
            "crude": StreamTag::Crude as u16,
            "importance": StreamTag::Importance as u16,
        },
        "slots": cfg.forward.dts.iter().enumerate()
            .map(|(k, dt)| serde_json::json!({"slot": k, "dt": dt}))
            .collect::<Vec<_>>(),
    });
    std::fs::write(dir.join(SEEDS_FILE), serde_json::to_string_pretty(&seeds)?)?;
    let mut artifacts = vec![
        SUMMARY_CSV.to_string(),
        SUMMARY_JSON.to_string(),
        SEEDS_FILE.to_string(),
    ];
    if report.provenance.model_hash.is_some() && !report.provenance.model_reused {
        artifacts.push(MODEL_FILE.into());
    }
    if report.provenance.grid_hash.is_some() && !report.provenance.grid_reused {
        artifacts.push(GRID_FILE.into());
    }
    artifacts.extend(cfg.forward.dts.iter().map(|dt| format!("dt_{dt}.csv")));
    let manifest = serde_json::json!({
        "observable": report.observable,
        "policy": cfg.policy,
        "regression": cfg.regression,
        "hjb": cfg.hjb,
        "forward": cfg.forward,
        "s_max": report.s_max,
        "artifacts": artifacts,
        "provenance": report.provenance,
    });
    std::fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Final-time histograms of the projected coordinate under the full
/// tau-leap model and the surrogate.
#[derive(Debug, Clone, Serialize)]
pub struct DistributionReport {
    pub total_variation: f64,
    /// `(value, full relative frequency, surrogate relative frequency)`.
    pub bins: Vec<(i64, f64, f64)>,
    pub paths: u64,
}

pub fn distribution_match_report(
    model: &MpModel,
    net: &ReactionNetwork,
    x0: &[i64],
    grid: &TimeGrid,
    paths: u64,
    seed: u64,
) -> Result<DistributionReport> {
    model.check_network(net)?;
    net.check_state(x0)?;
    if paths == 0 {
        return Err(Error::InvalidArgument(
            "distribution check needs paths".into(),
        ));
    }
    let proj = model.projection();
    if proj.dims() != 1 {
        return Err(Error::Unsupported(
            "histogram comparison needs a one-dimensional projection".into(),
        ));
    }
    let s0 = proj.apply(x0);
    let full: Vec<i64> = (0..paths)
        .into_par_iter()
        .map(|m| {
            let mut rng = RngStream::new(seed, StreamTag::FullTest.stream(0, m));
            let mut w = WorkCounters::default();
            proj.coord(0, &tau_leap_final(net, x0, grid, &mut rng, &mut w))
        })
        .collect();
    let surrogate: Vec<i64> = (0..paths)
        .into_par_iter()
        .map(|m| {
            let mut rng = RngStream::new(seed, StreamTag::SurrogateTest.stream(0, m));
            let mut w = WorkCounters::default();
            mp_process_final(model, &s0, grid, &mut rng, &mut w)[0]
        })
        .collect();
    Ok(histogram_distance(&full, &surrogate))
}

/// Total variation between the empirical distributions on unit bins.
pub fn histogram_distance(a: &[i64], b: &[i64]) -> DistributionReport {
    let mut counts: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for &v in a {
        counts.entry(v).or_default().0 += 1;
    }
    for &v in b {
        counts.entry(v).or_default().1 += 1;
    }
    let (na, nb) = (a.len().max(1) as f64, b.len().max(1) as f64);
    let bins: Vec<(i64, f64, f64)> = counts
        .into_iter()
        .map(|(v, (ca, cb))| (v, ca as f64 / na, cb as f64 / nb))
        .collect();
    let tv = 0.5 * bins.iter().map(|(_, p, q)| (p - q).abs()).sum::<f64>();
    DistributionReport {
        total_variation: tv,
        bins,
        paths: a.len() as u64,
    }
}

/// Per-row guard: pass when the IS kurtosis is defined and below the
/// Bernoulli proxy at the estimated probability.
pub fn kurtosis_guard(report: &ComparisonReport) -> Vec<(f64, GuardStatus)> {
    report
        .rows
        .iter()
        .map(|r| (r.dt, r.kurtosis_guard))
        .collect()
}

/// Runs `f` on a pool of `threads` workers (`None`: rayon's default).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_of_identical_samples() {
        let r = histogram_distance(&[1, 2, 2, 3], &[3, 2, 1, 2]);
        assert_eq!(r.total_variation, 0.0);
        let r = histogram_distance(&[0; 10], &[0; 10]);
        assert_eq!(r.bins, vec![(0, 1.0, 1.0)]);
    }

    #[test]
    fn histogram_of_disjoint_samples() {
        let r = histogram_distance(&[1, 1], &[2, 2]);
        assert_eq!(r.total_variation, 1.0);
    }

    #[test]
    fn bernoulli_kurtosis_values() {
        assert!((bernoulli_kurtosis(0.5) - 1.0).abs() < 1e-15);
        let p = 1e-5;
        assert!((bernoulli_kurtosis(p) * p - 1.0).abs() < 1e-4);
    }
}
