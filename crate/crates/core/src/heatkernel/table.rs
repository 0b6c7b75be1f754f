//! Per-time Chebyshev tables of the sphere's radial log-kernel.
//!
//! Bridge samplers evaluate `log p(τ, θ)` and `∂_θ log p(τ, θ)` at the same
//! few remaining times `τ` for every path. Below `SERIES_MIN_T` the direct
//! derivative goes through the Mehler–Dirichlet quadrature, and below
//! `SERIES_T` the Legendre series needs many terms, so such times get
//! Chebyshev interpolants of `log p + θ²/(2τ)` and `∂_θ log p + θ/τ` on
//! `[0, θ_max]`. A table is only used after it reproduces the direct value at
//! check points to `TABLE_TOL`; otherwise the direct route is kept.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::Result;

use super::sphere::{radial, SERIES_MIN_T, SERIES_T};
use super::SeriesControl;

const DEGREE: usize = 64;
const TABLE_TOL: f64 = 1e-10;
const MAX_TABLES: usize = 16_384;

struct Chebyshev {
    theta_max: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    fn eval(&self, theta: f64) -> f64 {
        let x = 2.0 * theta / self.theta_max - 1.0;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coeffs[0]
    }

    fn build(t: f64, kind: Kind, ctl: &SeriesControl) -> Result<Option<Self>> {
        let theta_max = (PI - 0.5).min(30.0 * t.sqrt());
        let h = |theta: f64| -> Result<f64> {
            let (lp, dlp) = radial(t, theta, ctl)?;
            Ok(match kind {
                Kind::Value => lp + theta * theta / (2.0 * t),
                Kind::Derivative => dlp + theta / t,
            })
        };
        let n = DEGREE;
        let nodes: Vec<f64> = (0..n).map(|k| (PI * (k as f64 + 0.5) / n as f64).cos()).collect();
        let vals: Vec<f64> = nodes.iter().map(|x| h(0.5 * theta_max * (x + 1.0))).collect::<Result<_>>()?;
        let coeffs: Vec<f64> = (0..n)
            .map(|j| {
                let s: f64 = (0..n).map(|k| vals[k] * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos()).sum();
                if j == 0 {
                    s / n as f64
                } else {
                    2.0 * s / n as f64
                }
            })
            .collect();
        let table = Chebyshev { theta_max, coeffs };
        for i in 0..=32 {
            let theta = theta_max * (i as f64 + 0.37) / 33.4;
            let direct = h(theta)?;
            if (table.eval(theta) - direct).abs() > TABLE_TOL * (1.0 + direct.abs()) {
                return Ok(None);
            }
        }
        Ok(Some(table))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Kind {
    Value,
    Derivative,
}

type Key = (Kind, u64, u64, usize);

fn cache() -> &'static Mutex<HashMap<Key, Option<Arc<Chebyshev>>>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Option<Arc<Chebyshev>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn lookup(t: f64, kind: Kind, ctl: &SeriesControl) -> Result<Option<Arc<Chebyshev>>> {
    let key = (kind, t.to_bits(), ctl.tol.to_bits(), ctl.max_terms);
    if let Some(found) = cache().lock().unwrap().get(&key).cloned() {
        return Ok(found);
    }
    let built = Chebyshev::build(t, kind, ctl)?.map(Arc::new);
    let mut map = cache().lock().unwrap();
    if map.len() >= MAX_TABLES {
        map.clear();
    }
    map.insert(key, built.clone());
    Ok(built)
}

/// `∂_θ log p(t, θ)` on the sphere through the per-time table when one
/// applies, and the direct evaluation otherwise.
pub fn sphere_radial_derivative(t: f64, theta: f64, ctl: &SeriesControl) -> Result<f64> {
    if t >= SERIES_MIN_T {
        return Ok(radial(t, theta, ctl)?.1);
    }
    match lookup(t, Kind::Derivative, ctl)? {
        Some(tab) if theta <= tab.theta_max => Ok(tab.eval(theta) - theta / t),
        _ => Ok(radial(t, theta, ctl)?.1),
    }
}

/// `log p(t, θ)` on the sphere, tabulated like [`sphere_radial_derivative`].
pub fn sphere_radial_log(t: f64, theta: f64, ctl: &SeriesControl) -> Result<f64> {
    if t >= SERIES_T {
        return Ok(radial(t, theta, ctl)?.0);
    }
    match lookup(t, Kind::Value, ctl)? {
        Some(tab) if theta <= tab.theta_max => Ok(tab.eval(theta) - theta * theta / (2.0 * t)),
        _ => Ok(radial(t, theta, ctl)?.0),
    }
}
