//! Smooth test functions with closed-form gradient and Laplacian.

use serde::{Deserialize, Serialize};
use smallvec::smallvec;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{dot, Coords, ManifoldModel, ModelKind, Point};

/// `r cot(r)` (sphere) or `r coth(r)` (H3); `1` on flat models.
fn r_cot(model: &ManifoldModel, r: f64) -> f64 {
    match model.kind {
        ModelKind::SphereS2 if r < 1e-4 => 1.0 - r * r / 3.0,
        ModelKind::SphereS2 => r * r.cos() / r.sin(),
        ModelKind::HyperbolicH3 if r < 1e-4 => 1.0 + r * r / 3.0,
        ModelKind::HyperbolicH3 => r / r.tanh(),
        _ => 1.0,
    }
}

/// C³ smoothstep `35s⁴ - 84s⁵ + 70s⁶ - 20s⁷` with its first two derivatives.
fn smoothstep(s: f64) -> (f64, f64, f64) {
    let s = s.clamp(0.0, 1.0);
    let (s2, c) = (s * s, 1.0 - s);
    let v = s2 * s2 * (35.0 - 84.0 * s + 70.0 * s2 - 20.0 * s2 * s);
    (v, 140.0 * s2 * s * c * c * c, 420.0 * s2 * c * c * (1.0 - 2.0 * s))
}

/// Scalar test functions on a model space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    /// `height · (1 - r²/R²)⁴` for `r = d(center, ·) < R`, zero beyond.
    Bump {
        center: Point,
        radius: f64,
        height: f64,
    },
    /// `⟨a, z - c⟩ · χ(|z - c|)` on Euclidean space, where the cutoff `χ` is 1
    /// up to `inner` and vanishes from `outer` on.
    LinearCutoff {
        center: Point,
        direction: Coords,
        inner: f64,
        outer: f64,
    },
    Combination {
        terms: Vec<(f64, TestFunction)>,
    },
}

impl TestFunction {
    pub fn bump(center: Point, radius: f64) -> Self {
        TestFunction::Bump { center, radius, height: 1.0 }
    }

    pub fn id(&self) -> String {
        match self {
            TestFunction::Constant { value } => format!("const:{value}"),
            TestFunction::Bump { center, radius, height } => {
                let c: Vec<String> = center.coords.iter().map(|v| format!("{v:.4}")).collect();
                if *height == 1.0 {
                    format!("bump:center=[{}],radius={radius}", c.join(","))
                } else {
                    format!("bump:center=[{}],radius={radius},height={height}", c.join(","))
                }
            }
            TestFunction::LinearCutoff { direction, inner, outer, .. } => {
                let a: Vec<String> = direction.iter().map(|v| format!("{v}")).collect();
                format!("linear:direction=[{}],inner={inner},outer={outer}", a.join(","))
            }
            TestFunction::Combination { terms } => {
                let parts: Vec<String> = terms.iter().map(|(w, f)| format!("{w}*({})", f.id())).collect();
                parts.join("+")
            }
        }
    }

    pub fn validate(&self, model: &ManifoldModel) -> Result<()> {
        match self {
            TestFunction::Constant { value } if !value.is_finite() => Err(Error::Config("constant must be finite".into())),
            TestFunction::Constant { .. } => Ok(()),
            TestFunction::Bump { center, radius, height } => {
                model.validate(center)?;
                if !(*radius > 0.0 && radius.is_finite() && height.is_finite()) {
                    return Err(Error::Config(format!("bump radius must be positive, got {radius}")));
                }
                if model.is_compact() && *radius >= PI {
                    return Err(Error::Config(format!("bump radius {radius} must stay below π on {}", model.name())));
                }
                Ok(())
            }
            TestFunction::LinearCutoff { center, direction, inner, outer } => {
                if !matches!(model.kind, ModelKind::EuclideanR(_)) {
                    return Err(Error::Config("linear cutoff functions live on Euclidean space".into()));
                }
                model.validate(center)?;
                if direction.len() != model.dim || !(0.0 < *inner && inner < outer && outer.is_finite()) {
                    return Err(Error::Config("linear cutoff needs a direction of model dimension and 0 < inner < outer".into()));
                }
                Ok(())
            }
            TestFunction::Combination { terms } => terms.iter().try_for_each(|(_, f)| f.validate(model)),
        }
    }

    /// Whether the support lies in the closed ball `B(center, radius)`.
    pub fn supported_in(&self, model: &ManifoldModel, center: &Point, radius: f64) -> bool {
        match self {
            TestFunction::Constant { value } => *value == 0.0,
            TestFunction::Bump { center: c, radius: r, .. } => model.distance(center, c) + r <= radius,
            TestFunction::LinearCutoff { center: c, outer, .. } => model.distance(center, c) + outer <= radius,
            TestFunction::Combination { terms } => terms.iter().all(|(_, f)| f.supported_in(model, center, radius)),
        }
    }

    pub fn eval(&self, model: &ManifoldModel, z: &Point) -> f64 {
        match self {
            TestFunction::Combination { terms } => terms.iter().map(|(w, f)| w * f.eval(model, z)).sum(),
            _ => self.jet(model, z).value,
        }
    }

    /// Riemannian gradient as an ambient vector at `z`.
    pub fn gradient(&self, model: &ManifoldModel, z: &Point) -> Coords {
        self.jet(model, z).gradient
    }

    /// Laplace–Beltrami operator applied at `z`.
    pub fn laplacian(&self, model: &ManifoldModel, z: &Point) -> f64 {
        self.jet(model, z).laplacian
    }

    /// Value, gradient and Laplacian at `z` in one pass.
    pub fn jet(&self, model: &ManifoldModel, z: &Point) -> Jet {
        let n = model.chart_len();
        let m = model.dim as f64;
        let zero = |value: f64| Jet { value, gradient: smallvec![0.0; n], laplacian: 0.0 };
        match self {
            TestFunction::Constant { value } => zero(*value),
            TestFunction::Bump { center, radius, height } => {
                let r = model.distance(z, center);
                if r >= *radius {
                    return zero(0.0);
                }
                // f = h ψ(u), u = r²/R²: ∇(r²) = -2 log_z(center),
                // Δf = h (ψ''|∇u|² + ψ' Δu), |∇u|² = 4r²/R⁴, Δ(r²) = 2 (1 + (m-1) r cot_k r)
                let r2 = radius * radius;
                let c = 1.0 - r * r / r2;
                let d1 = -4.0 * c.powi(3);
                let d2 = 12.0 * c * c;
                let k = -2.0 * height * d1 / r2;
                let lap_r2 = 2.0 * (1.0 + (m - 1.0) * r_cot(model, r));
                Jet {
                    value: height * c.powi(4),
                    gradient: model.log_ambient(z, center).iter().map(|v| k * v).collect(),
                    laplacian: height * (d2 * 4.0 * r * r / (r2 * r2) + d1 * lap_r2 / r2),
                }
            }
            TestFunction::LinearCutoff { center, direction, inner, outer } => {
                let v: Coords = z.coords.iter().zip(center.coords.iter()).map(|(a, b)| a - b).collect();
                let rho = dot(&v, &v).sqrt();
                if rho >= *outer {
                    return zero(0.0);
                }
                let w = outer - inner;
                let (s, ds, dds) = smoothstep((rho - inner) / w);
                let ell = dot(direction, &v);
                let (chi1, chi2) = if rho > *inner { (-ds / w, -dds / (w * w)) } else { (0.0, 0.0) };
                let (gradient, laplacian) = if rho > *inner {
                    let g = direction.iter().zip(v.iter()).map(|(a, vi)| a * (1.0 - s) + ell * chi1 / rho * vi).collect();
                    (g, ell * (chi2 + chi1 * (m - 1.0) / rho) + 2.0 * chi1 * ell / rho)
                } else {
                    (direction.clone(), 0.0)
                };
                Jet { value: ell * (1.0 - s), gradient, laplacian }
            }
            TestFunction::Combination { terms } => {
                let mut out = zero(0.0);
                for (w, f) in terms {
                    let j = f.jet(model, z);
                    out.value += w * j.value;
                    out.laplacian += w * j.laplacian;
                    for (gi, fi) in out.gradient.iter_mut().zip(j.gradient) {
                        *gi += w * fi;
                    }
                }
                out
            }
        }
    }
}

/// Value, gradient (ambient) and Laplacian of a test function at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: Coords,
    pub laplacian: f64,
}

impl Jet {
    pub fn gradient_vanishes(&self) -> bool {
        self.gradient.iter().all(|v| *v == 0.0)
    }
}

/// Three bumps per model: around `x`, around `y`, and a wide one around the
/// geodesic midpoint that covers `y`.
pub fn standard_suite(model: &ManifoldModel, x: &Point, y: &Point) -> Vec<TestFunction> {
    let d = model.distance(x, y);
    let mid = model.exp_ambient(x, &model.log_ambient(x, y).iter().map(|v| 0.5 * v).collect::<Coords>());
    let cap = if model.is_compact() { 3.0 } else { f64::INFINITY };
    vec![
        TestFunction::bump(x.clone(), (0.8 * d.max(0.5)).min(cap).min(1.5)),
        TestFunction::bump(y.clone(), 1.0_f64.min(cap)),
        TestFunction::Bump { center: mid, radius: (0.5 * d + 1.0).min(cap), height: 0.5 },
    ]
}
