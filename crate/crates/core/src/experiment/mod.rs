//! Named experiments behind the command line: each turns an
//! [`ExperimentConfig`] into a JSON report (and CSV data where it produces
//! any). Reports carry the effective configuration, the library version, a
//! pass flag and the wall time; everything except `wall_time_s` is a pure
//! function of the configuration.

pub mod checks;
pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

pub use checks::{applicable, default_endpoints, run_criterion, CriterionResult, Sizes};
pub use config::{parse_test_function, ConfigFile, ExperimentConfig, ExperimentKind, Sampler, DEFAULT_SEED};

use crate::bounds::{certify, InequalityId};
use crate::bridge::{markov_defect, sample_bridge_exact, sample_bridge_sde, BridgePath, BridgeSpec, ExactSampler, SdeOptions, TimeGrid};
use crate::error::{Error, Result};
use crate::heatkernel::kernel;
use crate::io::{infer_model, read_paths, LiftWriter, PathWriter};
use crate::lift::{horizontal_lift, Frame};
use crate::rng::{stream_id, RngStream};
use crate::semimart::{integrability_estimate, martingale_test_exact, martingale_test_sde, standard_suite, Battery};
use crate::stats::Moments;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Name of the only field that may differ between identical runs.
pub const TIMING_FIELD: &str = "wall_time_s";

/// Paths generated per parallel chunk before being written out.
const CHUNK: u64 = 512;

/// A finished run: the report and whether every check passed.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub report: Value,
    pub pass: bool,
}

/// Runs an experiment. Configuration problems found while running are
/// returned as [`Error::Config`]; every other failure is recorded in the
/// report with `pass = false`.
pub fn run(config: &ExperimentConfig) -> Result<Outcome> {
    let start = Instant::now();
    let mut config = config.clone();
    let result = match config.experiment {
        ExperimentKind::KernelCheck => kernel_check(&config),
        ExperimentKind::BoundsCheck => bounds_check(&config),
        ExperimentKind::BridgeSample => bridge_sample(&config),
        ExperimentKind::MarkovTest => markov_test(&config),
        ExperimentKind::SemimartTest => semimart_test(&config),
        ExperimentKind::LiftRun => lift_run(&mut config),
        ExperimentKind::AcceptAll => accept_all(&config),
    };
    let (results, pass, error) = match result {
        Ok((r, p)) => (r, p, None),
        Err(e @ Error::Config(_)) => return Err(e),
        Err(e) => (Value::Null, false, Some(e.to_string())),
    };
    let mut cfg = serde_json::to_value(&config)?;
    cfg["model"] = json!(config.model.name());
    let report = json!({
        "experiment": config.experiment.name(),
        "version": VERSION,
        "config": cfg,
        "pass": pass,
        "error": error,
        "results": results,
        TIMING_FIELD: start.elapsed().as_secs_f64(),
    });
    Ok(Outcome { report, pass })
}

/// Writes a report as pretty JSON.
pub fn write_report(path: &Path, report: &Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// The report with its timing field removed, for comparisons.
pub fn without_timing(report: &Value) -> Value {
    let mut r = report.clone();
    if let Value::Object(m) = &mut r {
        m.remove(TIMING_FIELD);
    }
    r
}

fn endpoints(config: &ExperimentConfig) -> (crate::geometry::Point, crate::geometry::Point) {
    let (x, y) = default_endpoints(&config.model);
    (config.x.clone().unwrap_or(x), config.y.clone().unwrap_or(y))
}

fn grid_for(config: &ExperimentConfig) -> Result<TimeGrid> {
    match config.steps {
        Some(n) => TimeGrid::uniform(config.horizon, n),
        None => TimeGrid::with_step(config.horizon, config.dt),
    }
    .map_err(|e| Error::Config(e.to_string()))
}

fn kernel_check(config: &ExperimentConfig) -> Result<(Value, bool)> {
    let m = &config.model;
    let c1 = checks::kernel_exactness(m, &config.series)?;
    let c2 = checks::gradient_correctness(m, config.paths as usize, config.seed, &config.series)?;
    let eval = match (&config.x, &config.y) {
        (Some(x), Some(y)) => Some(kernel(m, config.horizon, x, y, &config.series)?),
        _ => None,
    };
    let pass = c1.pass && c2.pass;
    Ok((json!({ "criteria": [c1, c2], "kernel": eval }), pass))
}

fn bounds_check(config: &ExperimentConfig) -> Result<(Value, bool)> {
    let m = &config.model;
    let mut ids = InequalityId::select(&config.inequality)?;
    if config.inequality == "all" && m.kind == crate::geometry::ModelKind::CircleS1 {
        ids.retain(|id| !matches!(id, InequalityId::CheegerGromov | InequalityId::VolumeDoubling));
    }
    let mut certs = Vec::new();
    for id in ids {
        let t_max = if id == InequalityId::ArnaudonThalmaier && m.is_compact() && config.inequality == "all" {
            config.t_max.min(1.5)
        } else {
            config.t_max
        };
        certs.push(certify(m, id, config.t_min.min(t_max), t_max, config.n_t, config.n_xy, &config.series)?);
    }
    let pass = certs.iter().all(|c| c.pass);
    Ok((json!({ "certificates": certs }), pass))
}

fn sample_one(config: &ExperimentConfig, spec: &BridgeSpec, grid: &TimeGrid, exact: Option<&ExactSampler>, i: u64) -> Result<BridgePath> {
    let mut stream = RngStream::new(config.seed, "bridge-sample", i);
    match exact {
        Some(s) => s.sample(&mut stream),
        None if config.sampler == Sampler::Exact => sample_bridge_exact(spec, grid, &mut stream),
        None => sample_bridge_sde(spec, grid, &mut stream),
    }
}

fn bridge_sample(config: &ExperimentConfig) -> Result<(Value, bool)> {
    let (x, y) = endpoints(config);
    let spec = BridgeSpec::new(config.model, x, y.clone(), config.horizon)?;
    let grid = grid_for(config)?;
    let exact = if config.sampler == Sampler::Exact { Some(ExactSampler::with_control(spec.clone(), grid.clone(), config.series)?) } else { None };
    let out = config.out.as_ref().ok_or_else(|| Error::Config("bridge-sample needs --out".into()))?;
    let mut writer = PathWriter::new(BufWriter::new(File::create(out)?));
    let mid = grid.steps() / 2;
    let (mut pinned, mut capped, mut warnings) = (true, 0u64, 0u64);
    let mut mid_stats = Moments::default();
    let mut start = 0;
    while start < config.paths {
        let end = (start + CHUNK).min(config.paths);
        let chunk: Vec<BridgePath> = (start..end).into_par_iter().map(|i| sample_one(config, &spec, &grid, exact.as_ref(), i)).collect::<Result<_>>()?;
        for (k, p) in chunk.iter().enumerate() {
            pinned &= p.points.last() == Some(&y);
            capped += p.capped_steps as u64;
            warnings += p.stability_warning as u64;
            mid_stats.push(config.model.distance(&spec.x, &p.points[mid]));
            writer.write(start + k as u64, p)?;
        }
        start = end;
    }
    writer.finish()?.flush()?;
    let results = json!({
        "paths": config.paths,
        "steps": grid.steps(),
        "sampler": config.sampler,
        "terminal_pinned": pinned,
        "capped_steps": capped,
        "stability_warnings": warnings,
        "midpoint_time": grid.times()[mid],
        "midpoint_distance_mean": mid_stats.mean(),
        "midpoint_distance_se": mid_stats.se(),
    });
    Ok((results, pinned))
}

fn markov_test(config: &ExperimentConfig) -> Result<(Value, bool)> {
    let n = config.steps.unwrap_or(4);
    if n < 3 {
        return Err(Error::Config(format!("markov-test needs at least 3 grid steps, got {n}")));
    }
    let (x, y) = endpoints(config);
    let spec = BridgeSpec::new(config.model, x, y, config.horizon)?;
    let grid = TimeGrid::uniform(config.horizon, n)?;
    let sampler = ExactSampler::with_control(spec, grid, config.series)?;
    let paths: Vec<BridgePath> = (0..config.paths)
        .into_par_iter()
        .map(|i| sampler.sample(&mut RngStream::new(config.seed, "markov-outer", i)))
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    for (k, (phi, psi)) in checks::markov_pairs(&config.model, n).iter().enumerate() {
        let seed = stream_id(config.seed, "markov-pair", k as u64);
        reports.push(markov_defect(&paths, n / 2, phi, psi, config.inner_paths, config.budget, seed)?);
    }
    let pass = reports.iter().all(|r| r.pass);
    Ok((json!({ "steps": n, "s_index": n / 2, "reports": reports }), pass))
}

fn semimart_test(config: &ExperimentConfig) -> Result<(Value, bool)> {
    let (x, y) = endpoints(config);
    let spec = BridgeSpec::new(config.model, x.clone(), y.clone(), config.horizon)?;
    let grid = grid_for(config)?;
    if grid.steps() % 4 != 0 {
        return Err(Error::Config(format!("semimart-test needs a step count divisible by 4, got {}", grid.steps())));
    }
    let fs = if config.test_functions.is_empty() { standard_suite(&config.model, &x, &y) } else { config.test_functions.clone() };
    let battery = Battery::default_for(&config.model, &grid)?;
    let opts = SdeOptions { series: config.series, ..Default::default() };
    let reports = match config.sampler {
        Sampler::Sde => martingale_test_sde(&spec, &grid, &fs, &battery, config.paths, config.seed, &opts)?,
        Sampler::Exact => {
            let sampler = ExactSampler::with_control(spec.clone(), grid.clone(), config.series)?;
            martingale_test_exact(&sampler, &fs, &battery, config.paths, config.seed, &config.series)?
        }
    };
    let refinement = if config.refine_paths > 0 {
        Some(integrability_estimate(&spec, grid.steps(), 3, &fs, config.refine_paths, config.seed, &opts)?)
    } else {
        None
    };
    let pass = reports.iter().all(|r| r.pass) && refinement.iter().flatten().all(|r| r.finite && r.stabilizes);
    Ok((json!({ "test_functions": fs, "martingale": reports, "integrability": refinement }), pass))
}

fn lift_run(config: &mut ExperimentConfig) -> Result<(Value, bool)> {
    let input = config.input.clone().ok_or_else(|| Error::Config("lift-run needs --paths".into()))?;
    let records = read_paths(File::open(&input)?)?;
    if !config.model_explicit {
        config.model = infer_model(&records)?;
    }
    let model = config.model;
    let paths: Vec<BridgePath> = records.iter().map(|r| r.to_bridge_path(model)).collect::<Result<_>>()?;
    let out = config.out.as_ref().ok_or_else(|| Error::Config("lift-run needs --out".into()))?;
    let mut writer = LiftWriter::new(BufWriter::new(File::create(out)?));
    let (mut pre, mut post, mut projections, mut based) = (0.0f64, 0.0f64, 0usize, true);
    for (chunk_recs, chunk) in records.chunks(CHUNK as usize).zip(paths.chunks(CHUNK as usize)) {
        let lifts: Vec<_> = chunk.par_iter().map(|p| horizontal_lift(p, &Frame::canonical(&model, &p.points[0]))).collect::<Result<_>>()?;
        for (rec, l) in chunk_recs.iter().zip(&lifts) {
            pre = pre.max(l.orthonormality_defect);
            post = post.max(l.final_defect);
            projections += l.projections;
            based &= l.frames.iter().zip(&l.base_path.points).all(|(f, p)| f.base == *p);
            writer.write(rec.path_id, l)?;
        }
    }
    writer.finish()?.flush()?;
    let pass = pre <= checks::LIFT_PRE_TOL && post <= checks::LIFT_POST_TOL && based;
    let results = json!({
        "paths": paths.len(),
        "max_defect_before_projection": pre,
        "max_defect_after_projection": post,
        "projections": projections,
        "base_points_exact": based,
        "tolerance_before_projection": checks::LIFT_PRE_TOL,
        "tolerance_after_projection": checks::LIFT_POST_TOL,
    });
    Ok((results, pass))
}

fn accept_all(config: &ExperimentConfig) -> Result<(Value, bool)> {
    let mut sizes = Sizes::scaled(config.paths, config.dt, config.inner_paths);
    if config.refine_paths > 0 {
        sizes.refine_paths = config.refine_paths;
    }
    let mut criteria = Vec::new();
    for id in applicable(&config.model) {
        criteria.push(run_criterion(id, &config.model, &sizes, config.seed, &config.series)?);
    }
    let pass = criteria.iter().all(|c| c.pass);
    Ok((json!({ "sizes": sizes, "criteria": criteria }), pass))
}
