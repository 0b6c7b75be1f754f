//! Experiment configuration: a flat JSON object whose fields mirror the CLI
//! flags. Flags override file values key by key.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{Coords, ManifoldModel, Point};
use crate::heatkernel::{QuadratureSpec, SeriesControl};
use crate::semimart::TestFunction;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    KernelCheck,
    BoundsCheck,
    BridgeSample,
    MarkovTest,
    SemimartTest,
    LiftRun,
    AcceptAll,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::KernelCheck => "kernel-check",
            Self::BoundsCheck => "bounds-check",
            Self::BridgeSample => "bridge-sample",
            Self::MarkovTest => "markov-test",
            Self::SemimartTest => "semimart-test",
            Self::LiftRun => "lift-run",
            Self::AcceptAll => "accept-all",
        }
    }

    fn default_paths(&self) -> u64 {
        match self {
            Self::SemimartTest | Self::AcceptAll => 10_000,
            _ => 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    #[default]
    Sde,
    Exact,
}

/// Every field is optional; [`ConfigFile::resolve`] fills defaults and
/// validates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_paths: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<Sampler>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inequality: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_terms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossover_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    /// `self` with every field set in `flags` replaced.
    pub fn overlay(&self, flags: &ConfigFile) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        if let (Value::Object(b), Value::Object(f)) = (&mut base, serde_json::to_value(flags)?) {
            for (k, v) in f {
                b.insert(k, v);
            }
        }
        Ok(serde_json::from_value(base)?)
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let experiment = self.experiment.ok_or_else(|| Error::Config("no experiment given".into()))?;
        let model: ManifoldModel = self.model.as_deref().unwrap_or("euclidean:1").parse()?;
        let positive = |name: &str, v: f64| -> Result<f64> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let nonzero = |name: &str, v: u64| -> Result<u64> {
            if v > 0 {
                Ok(v)
            } else {
                Err(Error::Config(format!("{name} must be positive")))
            }
        };
        let point = |v: &Option<Vec<f64>>| -> Result<Option<Point>> {
            v.as_ref().map(|c| model.point_from_input(c).map_err(|e| Error::Config(e.to_string()))).transpose()
        };
        let series = SeriesControl {
            tol: self.series_tol.unwrap_or(SeriesControl::default().tol),
            max_terms: self.max_terms.unwrap_or(SeriesControl::default().max_terms),
            crossover_t: self.crossover_t.unwrap_or(SeriesControl::default().crossover_t),
        };
        series.validate()?;
        let quadrature = QuadratureSpec { tol: positive("quad_tol", self.quad_tol.unwrap_or(QuadratureSpec::default().tol))?, series, ..Default::default() };
        let (n_t, n_xy) = parse_grid(self.grid.as_deref().unwrap_or("40x40"))?;
        let t_min = positive("t_min", self.t_min.unwrap_or(0.01))?;
        let t_max = positive("t_max", self.t_max.unwrap_or(2.0))?;
        if t_max < t_min {
            return Err(Error::Config(format!("t_max {t_max} is below t_min {t_min}")));
        }
        let x = point(&self.x)?;
        let y = point(&self.y)?;
        let fs = self.f.clone().unwrap_or_default();
        let test_functions = fs.iter().map(|s| parse_test_function(&model, s)).collect::<Result<Vec<_>>>()?;
        let steps = self.steps.map(|s| nonzero("steps", s as u64)).transpose()?.map(|s| s as usize);
        if experiment == ExperimentKind::LiftRun && self.input.is_none() {
            return Err(Error::Config("lift-run needs an input path CSV".into()));
        }
        if matches!(experiment, ExperimentKind::BridgeSample | ExperimentKind::LiftRun) && self.out.is_none() {
            return Err(Error::Config(format!("{} needs an output CSV path", experiment.name())));
        }
        let inequality = self.inequality.clone().unwrap_or_else(|| "all".into());
        crate::bounds::InequalityId::select(&inequality)?;
        Ok(ExperimentConfig {
            experiment,
            model,
            model_explicit: self.model.is_some(),
            x,
            y,
            horizon: positive("T", self.horizon.unwrap_or(1.0))?,
            dt: positive("dt", self.dt.unwrap_or(1e-3))?,
            steps,
            paths: nonzero("paths", self.paths.unwrap_or(experiment.default_paths()))?,
            inner_paths: nonzero("inner_paths", self.inner_paths.unwrap_or(100) as u64)? as usize,
            budget: nonzero("budget", self.budget.unwrap_or(100_000_000))?,
            refine_paths: self.refine_paths.unwrap_or(0),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            sampler: self.sampler.unwrap_or_default(),
            inequality,
            t_min,
            t_max,
            n_t,
            n_xy,
            test_functions,
            series,
            quadrature,
            input: self.input.clone(),
            out: self.out.clone(),
            report: self.report.clone(),
            threads: self.threads.unwrap_or(0),
        })
    }
}

/// A validated configuration with defaults filled in. Output paths and the
/// thread count are kept out of the serialized form so that reports of
/// identical runs compare equal wherever they are written.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ManifoldModel,
    /// Whether the model was given rather than defaulted.
    #[serde(skip)]
    pub model_explicit: bool,
    pub x: Option<Point>,
    pub y: Option<Point>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub steps: Option<usize>,
    pub paths: u64,
    pub inner_paths: usize,
    pub budget: u64,
    pub refine_paths: u64,
    pub seed: u64,
    pub sampler: Sampler,
    pub inequality: String,
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub n_xy: usize,
    pub test_functions: Vec<TestFunction>,
    pub series: SeriesControl,
    pub quadrature: QuadratureSpec,
    pub input: Option<PathBuf>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub report: Option<PathBuf>,
    #[serde(skip)]
    pub threads: usize,
}

/// `"40x40"` → `(40, 40)`.
pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("grid must look like 40x40, got '{s}'"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b == 0 {
        return Err(bad());
    }
    Ok((a, b))
}

/// Comma-separated floats.
pub fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("'{t}' is not a number in '{s}'"))))
        .collect()
}

/// Test function from `kind:key=value,...`, where vector values continue
/// over the following comma-separated tokens until the next `key=`. Kinds:
/// `bump:center=..,radius=..[,height=..]`, `const:value=..`,
/// `linear:center=..,direction=..,inner=..,outer=..`. A string starting with
/// `{` is read as the JSON form.
pub fn parse_test_function(model: &ManifoldModel, s: &str) -> Result<TestFunction> {
    let s = s.trim();
    let f = if s.starts_with('{') {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("test function JSON: {e}")))?
    } else {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut keys: Vec<(String, Vec<f64>)> = Vec::new();
        for tok in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (key, val) = match tok.split_once('=') {
                Some((k, v)) => {
                    keys.push((k.trim().to_string(), Vec::new()));
                    (k, v)
                }
                None => ("", tok),
            };
            let last = keys.last_mut().ok_or_else(|| Error::Config(format!("value '{tok}' before any key in '{s}'")))?;
            let v: f64 = val.trim().parse().map_err(|_| Error::Config(format!("bad value '{val}' for '{}{key}'", last.0)))?;
            last.1.push(v);
        }
        let get = |name: &str| keys.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone());
        let scalar = |name: &str| -> Result<f64> {
            match get(name).as_deref() {
                Some([v]) => Ok(*v),
                Some(_) => Err(Error::Config(format!("'{name}' takes one value"))),
                None => Err(Error::Config(format!("'{kind}' needs '{name}='"))),
            }
        };
        let center = || -> Result<Point> {
            let c = get("center").ok_or_else(|| Error::Config(format!("'{kind}' needs 'center='")))?;
            model.point_from_input(&c).map_err(|e| Error::Config(e.to_string()))
        };
        if let Some((k, _)) = keys.iter().find(|(k, _)| !["center", "radius", "height", "value", "direction", "inner", "outer"].contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key '{k}' in '{s}'")));
        }
        match kind {
            "bump" => TestFunction::Bump { center: center()?, radius: scalar("radius")?, height: get("height").map_or(Ok(1.0), |_| scalar("height"))? },
            "const" | "constant" => TestFunction::Constant { value: scalar("value")? },
            "linear" => TestFunction::LinearCutoff {
                center: center()?,
                direction: get("direction").ok_or_else(|| Error::Config("'linear' needs 'direction='".into()))?.into_iter().collect::<Coords>(),
                inner: scalar("inner")?,
                outer: scalar("outer")?,
            },
            _ => return Err(Error::Config(format!("unknown test function kind '{kind}'; valid: bump, const, linear"))),
        }
    };
    f.validate(model).map_err(|e| Error::Config(e.to_string()))?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file = ConfigFile::from_json(r#"{"experiment": "semimart-test", "model": "s2", "paths": 10, "dt": 0.01}"#).unwrap();
        let flags = ConfigFile { paths: Some(20), ..Default::default() };
        let c = file.overlay(&flags).unwrap().resolve().unwrap();
        assert_eq!(c.paths, 20);
        assert_eq!(c.dt, 0.01);
        assert_eq!(c.model, ManifoldModel::sphere2());
        assert_eq!(c.seed, DEFAULT_SEED);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let base = ConfigFile { experiment: Some(ExperimentKind::BridgeSample), out: Some("p.csv".into()), ..Default::default() };
        assert!(base.resolve().is_ok());
        for bad in [
            ConfigFile { dt: Some(0.0), ..base.clone() },
            ConfigFile { model: Some("torus".into()), ..base.clone() },
            ConfigFile { paths: Some(0), ..base.clone() },
            ConfigFile { out: None, ..base.clone() },
            ConfigFile { grid: Some("40by40".into()), ..base.clone() },
            ConfigFile { inequality: Some("nope".into()), ..base.clone() },
        ] {
            assert!(matches!(bad.resolve(), Err(Error::Config(_))), "{bad:?}");
        }
        let msg = ConfigFile { model: Some("torus".into()), ..base }.resolve().unwrap_err().to_string();
        assert!(msg.contains("s1") && msg.contains("h3"), "{msg}");
        assert!(ConfigFile::from_json(r#"{"experiment": "kernel-check", "colour": 1}"#).is_err());
    }

    #[test]
    fn test_function_strings() {
        let m = ManifoldModel::sphere2();
        let f = parse_test_function(&m, "bump:center=0,0,1,radius=0.5").unwrap();
        assert_eq!(f, TestFunction::Bump { center: Point::new(&[0.0, 0.0, 1.0]), radius: 0.5, height: 1.0 });
        let f = parse_test_function(&m, "bump:radius=0.5,height=2,center=0,0,1").unwrap();
        assert!(matches!(f, TestFunction::Bump { height, .. } if height == 2.0));
        let e = ManifoldModel::euclidean(2).unwrap();
        let f = parse_test_function(&e, "linear:center=0,0,direction=1,0,inner=1,outer=2").unwrap();
        assert!(matches!(f, TestFunction::LinearCutoff { .. }));
        assert!(parse_test_function(&m, "bump:center=0,0,1").is_err());
        assert!(parse_test_function(&m, "bump:center=0,0,1,radius=4").is_err());
        assert!(parse_test_function(&m, "spike:value=1").is_err());
        assert!(parse_test_function(&m, "bump:centre=0,0,1,radius=1").is_err());
        let j = parse_test_function(&m, r#"{"kind": "constant", "value": 2.0}"#).unwrap();
        assert_eq!(j, TestFunction::Constant { value: 2.0 });
    }

    #[test]
    fn grid_strings() {
        assert_eq!(parse_grid("40x30").unwrap(), (40, 30));
        assert!(parse_grid("0x3").is_err());
        assert!(parse_grid("40").is_err());
    }
}
