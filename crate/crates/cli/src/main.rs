use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mpis::config::{ExperimentConfig, SimulationMethod};
use mpis::importance::PolicyKind;
use mpis::pipeline::{self, ComparisonReport, PipelineConfig};
use mpis::projection::{classify_reactions, mp_cost_model, CostModelParams, MpModel, Projection};
use mpis::simulate::{ssa_exact_path, tau_leap_path_counted, WorkCounters};
use mpis::validate::{run_suite, Suite, ValidateOptions};
use mpis::{ErrorClass, RngStream, StreamTag, TimeGrid};
use serde_json::json;

const OUTPUT_ENV: &str = "MPIS_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "mpis-out";

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mpis",
    version,
    about = "Rare-event estimation for stochastic reaction networks"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tau-leap or exact paths of the network.
    Simulate(Common),
    /// Fit the projected propensities and write the model file.
    MpFit {
        #[command(flatten)]
        common: Common,
        /// Also compare final-time histograms over this many paths.
        #[arg(long)]
        check_distribution: Option<u64>,
    },
    /// Solve the value function of a fitted model (or of the full network
    /// with `--policy hjb-full`).
    HjbSolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Importance-sampled forward runs from saved artifacts.
    IsRun {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// All stages end to end.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Reuse a fitted model instead of regressing.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Reuse a solved value function.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Self-check suites: oracles, orthonormality, unbiasedness or all.
    Validate {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Smaller ensembles and looser step sizes.
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Operation-count model of the off-line and forward stages.
    CostModel {
        #[command(flatten)]
        common: Common,
        /// Run the regression ensemble and report its counters too.
        #[arg(long)]
        measure: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Start from a preset instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    /// Override a config key, e.g. `--set forward.paths=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_policy)]
    policy: Option<PolicyKind>,
    /// Output directory (default: config, then $MPIS_OUTPUT_DIR, then ./mpis-out).
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    match s {
        "crude" => Ok(PolicyKind::Crude),
        "scaled" => Ok(PolicyKind::Scaled),
        "hjb-full" => Ok(PolicyKind::HjbFull),
        "mp-mapped" => Ok(PolicyKind::MpMapped),
        "mp-alternative" => Ok(PolicyKind::MpAlternative),
        _ => Err("expected crude, scaled, hjb-full, mp-mapped or mp-alternative".into()),
    }
}

struct Loaded {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Common {
    fn load(&self, threads: Option<usize>) -> mpis::Result<Loaded> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(p) = self.policy {
            overrides.push(format!("policy=\"{}\"", p.as_str()));
        }
        if let Some(t) = threads {
            overrides.push(format!("threads={t}"));
        }
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path, &overrides)?,
            (None, Some(name)) => {
                let base = ExperimentConfig::for_preset(name).to_toml();
                ExperimentConfig::from_toml(&base, &overrides)?
            }
            (None, None) => {
                return Err(mpis::Error::Config(
                    "one of --config or --preset is required".into(),
                ))
            }
        };
        let out = self
            .output_dir
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
        cfg.output_dir = Some(out.clone());
        fs::create_dir_all(&out)?;
        Ok(Loaded { cfg, out })
    }
}

fn write_provenance(
    out: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    extra: serde_json::Value,
) -> anyhow::Result<()> {
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    let block = json!({
        "command": command,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "threads": cfg.threads,
        "schema_version": cfg.schema_version,
        "mpis_version": env!("CARGO_PKG_VERSION"),
        "artifacts": extra,
    });
    fs::write(
        out.join("provenance.json"),
        serde_json::to_string_pretty(&block)?,
    )?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mpis::Error>().map(|e| e.class()) {
        Some(ErrorClass::Config) => EXIT_CONFIG,
        Some(ErrorClass::Numeric) => EXIT_NUMERIC,
        _ => EXIT_OTHER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    let result = match pipeline::with_threads(threads, move || run(cli.command, threads)) {
        Ok(r) => r,
        Err(e) => Err(e.into()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command, threads: Option<usize>) -> anyhow::Result<u8> {
    match cmd {
        Command::Simulate(c) => simulate(c.load(threads)?),
        Command::MpFit {
            common,
            check_distribution,
        } => mp_fit(common.load(threads)?, check_distribution),
        Command::HjbSolve { common, model } => hjb_solve(common.load(threads)?, model),
        Command::IsRun {
            common,
            model,
            grid,
        } => {
            let l = common.load(threads)?;
            if l.cfg.policy != PolicyKind::Crude
                && (grid.is_none() || (model.is_none() && l.cfg.policy != PolicyKind::HjbFull))
            {
                return Err(mpis::Error::Config(
                    "is-run needs --model and --grid (or --grid alone for hjb-full)".into(),
                )
                .into());
            }
            forward(l, model, grid, "is-run")
        }
        Command::Pipeline {
            common,
            model,
            grid,
        } => forward(common.load(threads)?, model, grid, "pipeline"),
        Command::Validate {
            suite,
            seed,
            quick,
            output_dir,
        } => validate(&suite, seed, quick, output_dir),
        Command::CostModel { common, measure } => cost_model(common.load(threads)?, measure),
    }
}

fn simulate(l: Loaded) -> anyhow::Result<u8> {
    let cfg = &l.cfg;
    let r = cfg.resolve()?;
    let s = &cfg.simulate;
    let grid = TimeGrid::from_step(r.final_time, s.dt)?;
    let names = r.network.species_names();
    let mut finals = csv::Writer::from_path(l.out.join("final_states.csv"))?;
    let mut header = vec!["path".to_string()];
    header.extend(names.iter().cloned());
    finals.write_record(&header)?;
    if s.method == SimulationMethod::TauLeap && s.write_paths {
        fs::create_dir_all(l.out.join("paths"))?;
    }
    let mut work = WorkCounters::default();
    let width = s.paths.saturating_sub(1).to_string().len();
    for m in 0..s.paths {
        let mut rng = RngStream::new(cfg.seed, StreamTag::Plain.stream(0, m));
        let last = match s.method {
            SimulationMethod::TauLeap => {
                let path =
                    tau_leap_path_counted(&r.network, &r.initial_state, &grid, &mut rng, &mut work);
                if s.write_paths {
                    let file = l.out.join("paths").join(format!("path_{m:0width$}.csv"));
                    let mut w = csv::Writer::from_path(file)?;
                    let mut h = vec!["t".to_string()];
                    h.extend(names.iter().cloned());
                    w.write_record(&h)?;
                    for n in 0..path.len() {
                        let mut row = vec![grid.time(n).to_string()];
                        row.extend(path.state(n).iter().map(|v| v.to_string()));
                        w.write_record(&row)?;
                    }
                    w.flush()?;
                }
                path.last().to_vec()
            }
            SimulationMethod::Exact => {
                ssa_exact_path(&r.network, &r.initial_state, r.final_time, &mut rng)?
            }
        };
        let mut row = vec![m.to_string()];
        row.extend(last.iter().map(|v| v.to_string()));
        finals.write_record(&row)?;
    }
    finals.flush()?;
    write_provenance(
        &l.out,
        "simulate",
        cfg,
        json!({"paths": s.paths, "work": work}),
    )?;
    println!("wrote {} paths to {}", s.paths, l.out.display());
    Ok(0)
}

fn mp_fit(l: Loaded, check: Option<u64>) -> anyhow::Result<u8> {
    let pc = l.cfg.pipeline_config()?;
    let model = pipeline::fit_model(&pc)?;
    let path = l.out.join(pipeline::MODEL_FILE);
    model.save(&path)?;
    let classes: Vec<_> = (0..model.reaction_count())
        .map(|j| json!({"reaction": j, "class": model.class(j), "residual": model.residual(j)}))
        .collect();
    let mut summary = json!({
        "model_hash": model.content_hash(),
        "basis_kept": model.ortho_basis().map(|o| o.len()),
        "sample_hull": model.sample_hull(),
        "reactions": classes,
    });
    if let Some(m_test) = check {
        let grid = TimeGrid::from_step(pc.final_time, pc.regression.dt)?;
        let d = pipeline::distribution_match_report(
            &model,
            &pc.network,
            &pc.initial_state,
            &grid,
            m_test,
            pc.seed,
        )?;
        let mut w = csv::Writer::from_path(l.out.join("histogram.csv"))?;
        w.write_record(["value", "full", "surrogate"])?;
        for (v, p, q) in &d.bins {
            w.write_record([v.to_string(), format!("{p:e}"), format!("{q:e}")])?;
        }
        w.flush()?;
        println!(
            "total variation {:.4} over {m_test} paths",
            d.total_variation
        );
        summary["total_variation"] = json!(d.total_variation);
    }
    fs::write(
        l.out.join("fit.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    write_provenance(
        &l.out,
        "mp-fit",
        &l.cfg,
        json!({"model": pipeline::MODEL_FILE, "model_hash": model.content_hash()}),
    )?;
    println!("model written to {}", path.display());
    Ok(0)
}

fn hjb_solve(l: Loaded, model: Option<PathBuf>) -> anyhow::Result<u8> {
    let pc = l.cfg.pipeline_config()?;
    let loaded = match (&model, pc.policy) {
        (Some(p), _) => {
            let m = MpModel::load(p).with_context(|| format!("loading {}", p.display()))?;
            m.check_network(&pc.network)?;
            Some(m)
        }
        (None, PolicyKind::HjbFull) => None,
        (None, _) => {
            return Err(mpis::Error::Config(
                "hjb-solve needs --model unless the policy is hjb-full".into(),
            )
            .into())
        }
    };
    let (grid, s_max) = pipeline::solve_value_function(&pc, loaded.as_ref())?;
    let path = l.out.join(pipeline::GRID_FILE);
    grid.save(&path)?;
    write_provenance(
        &l.out,
        "hjb-solve",
        &l.cfg,
        json!({"grid": pipeline::GRID_FILE, "grid_hash": grid.content_hash(), "s_max": s_max, "time_nodes": grid.time_nodes().len()}),
    )?;
    println!(
        "value function on [0, {s_max}] with {} time nodes written to {}",
        grid.time_nodes().len(),
        path.display()
    );
    Ok(0)
}

fn print_table(report: &ComparisonReport) {
    println!(
        "{:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>6}",
        "dt", "mean", "ci", "squared_cv", "kurtosis", "reduction", "guard"
    );
    for r in &report.rows {
        println!(
            "{:>12.6e} {:>12.4e} {:>12.2e} {:>12.4e} {:>12.4e} {:>12.4e} {:>6}",
            r.dt,
            r.importance.mean,
            r.importance.ci_halfwidth,
            r.importance.squared_cv,
            r.importance.kurtosis,
            r.reduction_factor,
            match r.kurtosis_guard {
                pipeline::GuardStatus::Pass => "pass",
                pipeline::GuardStatus::Warn => "warn",
            }
        );
    }
}

fn forward(
    l: Loaded,
    model: Option<PathBuf>,
    grid: Option<PathBuf>,
    command: &str,
) -> anyhow::Result<u8> {
    let mut pc: PipelineConfig = l.cfg.pipeline_config()?;
    pc.output_dir = Some(l.out.clone());
    pc.model_path = model;
    pc.grid_path = grid;
    let run = pipeline::run_pipeline(&pc)?;
    print_table(&run.report);
    write_provenance(
        &l.out,
        command,
        &l.cfg,
        json!({
            "summary": pipeline::SUMMARY_CSV,
            "model_hash": run.report.provenance.model_hash,
            "grid_hash": run.report.provenance.grid_hash,
        }),
    )?;
    Ok(0)
}

fn validate(name: &str, seed: u64, quick: bool, out: Option<PathBuf>) -> anyhow::Result<u8> {
    let suites = Suite::parse(name)?;
    let opts = ValidateOptions { seed, quick };
    let mut reports = Vec::new();
    let mut ok = true;
    for s in suites {
        let r = run_suite(s, &opts)?;
        for c in &r.checks {
            println!(
                "[{}] {:?}: {} (value {:.3e}, limit {:.1e}; {})",
                if c.passed { "PASS" } else { "FAIL" },
                r.suite,
                c.name,
                c.value,
                c.limit,
                c.detail
            );
        }
        ok &= r.passed();
        reports.push(r);
    }
    let out = out
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    fs::create_dir_all(&out)?;
    fs::write(
        out.join("validate.json"),
        serde_json::to_string_pretty(&reports)?,
    )?;
    Ok(if ok { 0 } else { EXIT_ACCEPTANCE })
}

fn cost_model(l: Loaded, measure: bool) -> anyhow::Result<u8> {
    let pc = l.cfg.pipeline_config()?;
    let proj = Projection::canonical(pc.network.species_count(), &[pc.observed_species])?;
    let regressed = classify_reactions(&pc.network, &proj, pc.regression.force_regression)?
        .j_mp()
        .len();
    let deg = pc.regression.max_degree as usize + 1;
    let params = CostModelParams {
        basis_size: deg * deg,
        final_time: pc.final_time,
        dt: pc.regression.dt,
        paths: pc.regression.paths,
        forward_paths: pc.forward.paths,
        species: pc.network.species_count(),
        reactions: pc.network.reaction_count(),
        regressed,
        units: l.cfg.costs,
    };
    let measured = if measure {
        let grid = TimeGrid::from_step(pc.final_time, pc.regression.dt)?;
        let mut w = WorkCounters::default();
        for m in 0..pc.regression.paths {
            let mut rng = RngStream::new(pc.seed, StreamTag::Regression.stream(0, m));
            tau_leap_path_counted(&pc.network, &pc.initial_state, &grid, &mut rng, &mut w);
        }
        Some(w)
    } else {
        None
    };
    let report = mp_cost_model(&params, measured)?;
    fs::write(
        l.out.join("cost.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!("{:>16} {:>14} {:>14}", "term", "exact", "dominant");
    for (name, t) in [
        ("tau-leap path", report.tau_leap),
        ("gram-schmidt", report.gram_schmidt),
        ("l2 regression", report.l2_regression),
        ("projection", report.projection),
        ("forward run", report.forward),
    ] {
        println!("{name:>16} {:>14.4e} {:>14.4e}", t.exact, t.dominant);
    }
    if let Some(w) = measured {
        println!(
            "measured: {} poisson draws, {} propensity evaluations",
            w.poisson_draws, w.propensity_evals
        );
    }
    write_provenance(&l.out, "cost-model", &l.cfg, json!({"cost": "cost.json"}))?;
    Ok(0)
}
