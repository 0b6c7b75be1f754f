//! Model Riemannian manifolds with closed-form metric data.
//!
//! Charts:
//! - `EuclideanR(m)`: Cartesian coordinates.
//! - `CircleS1`: angle in `[0, 2π)`.
//! - `SphereS2`: unit vector in R^3.
//! - `HyperbolicH3`: hyperboloid `-x0² + x1² + x2² + x3² = -1`, `x0 > 0`,
//!   with the Minkowski bilinear form as ambient metric.
//!
//! Tangent vectors are handled internally as ambient vectors; the public
//! [`TangentVector`] carries components in the canonical orthonormal frame
//! returned by [`ManifoldModel::frame`].

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub type Coords = SmallVec<[f64; 4]>;

/// Tolerance for chart constraints (unit norm, hyperboloid sheet).
pub const CHART_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    EuclideanR(usize),
    CircleS1,
    SphereS2,
    HyperbolicH3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub kind: ModelKind,
    pub dim: usize,
    pub curvature_const: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub coords: Coords,
}

impl Point {
    pub fn new(coords: &[f64]) -> Self {
        Self { coords: Coords::from_slice(coords) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: Point,
    pub components: Coords,
}

impl TangentVector {
    pub fn zero(base: Point, dim: usize) -> Self {
        Self { base, components: smallvec![0.0; dim] }
    }

    pub fn norm(&self) -> f64 {
        norm(&self.components)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minkowski form `-a0 b0 + a1 b1 + a2 b2 + a3 b3`.
#[inline]
pub(crate) fn lorentz(a: &[f64], b: &[f64]) -> f64 {
    -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
pub(crate) fn scaled(a: &[f64], s: f64) -> Coords {
    a.iter().map(|x| x * s).collect()
}

#[inline]
fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed angular difference `b - a` reduced to `(-π, π]`.
#[inline]
pub(crate) fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (b - a).rem_euclid(TAU);
    if d > PI {
        d -= TAU;
    }
    d
}

impl ManifoldModel {
    pub fn euclidean(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("euclidean dimension must be positive".into()));
        }
        Ok(Self { kind: ModelKind::EuclideanR(m), dim: m, curvature_const: 0.0 })
    }

    pub fn circle() -> Self {
        Self { kind: ModelKind::CircleS1, dim: 1, curvature_const: 0.0 }
    }

    pub fn sphere2() -> Self {
        Self { kind: ModelKind::SphereS2, dim: 2, curvature_const: 1.0 }
    }

    pub fn hyperbolic3() -> Self {
        Self { kind: ModelKind::HyperbolicH3, dim: 3, curvature_const: -1.0 }
    }

    /// Name accepted by the CLI: `euclidean:m`, `s1`, `s2`, `h3`.
    pub fn name(&self) -> String {
        match self.kind {
            ModelKind::EuclideanR(m) => format!("euclidean:{m}"),
            ModelKind::CircleS1 => "s1".into(),
            ModelKind::SphereS2 => "s2".into(),
            ModelKind::HyperbolicH3 => "h3".into(),
        }
    }

    /// Number of chart coordinates stored per point.
    pub fn chart_len(&self) -> usize {
        match self.kind {
            ModelKind::EuclideanR(m) => m,
            ModelKind::CircleS1 => 1,
            ModelKind::SphereS2 => 3,
            ModelKind::HyperbolicH3 => 4,
        }
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            ModelKind::EuclideanR(_) | ModelKind::HyperbolicH3 => f64::INFINITY,
            ModelKind::CircleS1 | ModelKind::SphereS2 => PI,
        }
    }

    pub fn is_compact(&self) -> bool {
        matches!(self.kind, ModelKind::CircleS1 | ModelKind::SphereS2)
    }

    /// `K >= 0` with `Ric >= -K`.
    pub fn ricci_lower(&self) -> f64 {
        (-self.curvature_const * (self.dim as f64 - 1.0)).max(0.0)
    }

    /// Canonical base point: origin, angle 0, north pole, hyperboloid vertex.
    pub fn origin(&self) -> Point {
        match self.kind {
            ModelKind::EuclideanR(m) => Point { coords: smallvec![0.0; m] },
            ModelKind::CircleS1 => Point::new(&[0.0]),
            ModelKind::SphereS2 => Point::new(&[0.0, 0.0, 1.0]),
            ModelKind::HyperbolicH3 => Point::new(&[1.0, 0.0, 0.0, 0.0]),
        }
    }

    pub fn validate(&self, p: &Point) -> Result<()> {
        let c = &p.coords;
        if c.len() != self.chart_len() {
            return Err(Error::InvalidPoint(format!(
                "{} expects {} chart coordinates, got {}",
                self.name(),
                self.chart_len(),
                c.len()
            )));
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        match self.kind {
            ModelKind::EuclideanR(_) => Ok(()),
            ModelKind::CircleS1 => {
                if (0.0..TAU).contains(&c[0]) {
                    Ok(())
                } else {
                    Err(Error::InvalidPoint(format!("angle {} outside [0, 2π)", c[0])))
                }
            }
            ModelKind::SphereS2 => {
                let dev = (dot(c, c) - 1.0).abs();
                if dev <= CHART_TOL {
                    Ok(())
                } else {
                    Err(Error::InvalidPoint(format!("|p|² - 1 = {dev:e} on the sphere")))
                }
            }
            ModelKind::HyperbolicH3 => {
                let dev = (lorentz(c, c) + 1.0).abs();
                // relative to the coordinate scale, since x0² grows like e^{2ρ}
                if c[0] > 0.0 && dev <= CHART_TOL * (1.0 + c[0] * c[0]) {
                    Ok(())
                } else {
                    Err(Error::InvalidPoint(format!("<p,p> + 1 = {dev:e} on the hyperboloid")))
                }
            }
        }
    }

    /// Validates chart coordinates and wraps them into a point.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        let p = Point::new(coords);
        self.validate(&p)?;
        Ok(p)
    }

    /// Builds a point leniently: wraps angles, normalizes sphere vectors, and
    /// lifts three spatial coordinates onto the hyperboloid.
    pub fn point_from_input(&self, coords: &[f64]) -> Result<Point> {
        match self.kind {
            ModelKind::CircleS1 if coords.len() == 1 => self.point(&[wrap_angle(coords[0])]),
            ModelKind::SphereS2 if coords.len() == 2 => {
                // colatitude, longitude
                let (th, ph) = (coords[0], coords[1]);
                Ok(self.project(Point::new(&[th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()])))
            }
            ModelKind::HyperbolicH3 if coords.len() == 3 => {
                let x0 = (1.0 + dot(coords, coords)).sqrt();
                Ok(Point::new(&[x0, coords[0], coords[1], coords[2]]))
            }
            _ => self.point(coords),
        }
    }

    /// Restores the chart constraint after floating-point drift.
    pub fn project(&self, mut p: Point) -> Point {
        match self.kind {
            ModelKind::EuclideanR(_) => {}
            ModelKind::CircleS1 => p.coords[0] = wrap_angle(p.coords[0]),
            ModelKind::SphereS2 => {
                let n = norm(&p.coords);
                for x in p.coords.iter_mut() {
                    *x /= n;
                }
            }
            ModelKind::HyperbolicH3 => {
                let s = p.coords[1] * p.coords[1] + p.coords[2] * p.coords[2] + p.coords[3] * p.coords[3];
                p.coords[0] = (1.0 + s).sqrt();
            }
        }
        p
    }

    /// Metric inner product of two ambient tangent vectors.
    #[inline]
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        match self.kind {
            ModelKind::HyperbolicH3 => lorentz(u, v),
            _ => dot(u, v),
        }
    }

    #[inline]
    pub fn vec_norm(&self, v: &[f64]) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Geodesic distance.
    pub fn distance(&self, p: &Point, q: &Point) -> f64 {
        let (a, b) = (&p.coords, &q.coords);
        match self.kind {
            ModelKind::EuclideanR(_) => a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            ModelKind::CircleS1 => {
                let d = (a[0] - b[0]).abs().rem_euclid(TAU);
                d.min(TAU - d)
            }
            ModelKind::SphereS2 => {
                let cx = a[1] * b[2] - a[2] * b[1];
                let cy = a[2] * b[0] - a[0] * b[2];
                let cz = a[0] * b[1] - a[1] * b[0];
                let s = (cx * cx + cy * cy + cz * cz).sqrt();
                s.atan2(dot(a, b))
            }
            ModelKind::HyperbolicH3 => {
                let d: [f64; 4] = [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]];
                let chord = lorentz(&d, &d).max(0.0).sqrt();
                2.0 * (0.5 * chord).asinh()
            }
        }
    }

    /// Canonical orthonormal frame at `p`, as ambient vectors.
    ///
    /// Sphere: the frame `(e_x, e_y)` at the north pole moved to `p` along the
    /// minimizing great circle; points in the southern cap use `(e_x, -e_y)`
    /// moved from the south pole instead. H3: the pure boost of the standard
    /// frame at the vertex.
    pub fn frame(&self, p: &Point) -> SmallVec<[Coords; 3]> {
        let c = &p.coords;
        match self.kind {
            ModelKind::EuclideanR(m) => (0..m)
                .map(|i| {
                    let mut e: Coords = smallvec![0.0; m];
                    e[i] = 1.0;
                    e
                })
                .collect(),
            ModelKind::CircleS1 => smallvec![smallvec![1.0]],
            ModelKind::SphereS2 => {
                let (x, y, z) = (c[0], c[1], c[2]);
                if z >= -0.5 {
                    let k = 1.0 + z;
                    smallvec![
                        smallvec![1.0 - x * x / k, -x * y / k, -x],
                        smallvec![-x * y / k, 1.0 - y * y / k, -y],
                    ]
                } else {
                    let k = 1.0 - z;
                    smallvec![
                        smallvec![1.0 - x * x / k, -x * y / k, x],
                        smallvec![x * y / k, -1.0 + y * y / k, -y],
                    ]
                }
            }
            ModelKind::HyperbolicH3 => {
                let k = 1.0 + c[0];
                (1..4)
                    .map(|i| {
                        let mut e: Coords = smallvec![c[i], c[1] * c[i] / k, c[2] * c[i] / k, c[3] * c[i] / k];
                        e[i] += 1.0;
                        e
                    })
                    .collect()
            }
        }
    }

    /// Ambient vector for frame components at `p`.
    pub fn to_ambient(&self, p: &Point, components: &[f64]) -> Coords {
        match self.kind {
            ModelKind::EuclideanR(_) | ModelKind::CircleS1 => Coords::from_slice(components),
            _ => {
                let frame = self.frame(p);
                let mut v: Coords = smallvec![0.0; self.chart_len()];
                for (e, &a) in frame.iter().zip(components) {
                    for (vi, ei) in v.iter_mut().zip(e.iter()) {
                        *vi += a * ei;
                    }
                }
                v
            }
        }
    }

    /// Frame components of an ambient tangent vector at `p`.
    pub fn to_components(&self, p: &Point, v: &[f64]) -> Coords {
        match self.kind {
            ModelKind::EuclideanR(_) | ModelKind::CircleS1 => Coords::from_slice(v),
            _ => self.frame(p).iter().map(|e| self.inner(e, v)).collect(),
        }
    }

    /// Removes the normal component of an ambient vector at `p`.
    pub fn project_tangent(&self, p: &Point, v: &[f64]) -> Coords {
        let c = &p.coords;
        match self.kind {
            ModelKind::SphereS2 => {
                let s = dot(c, v);
                v.iter().zip(c.iter()).map(|(vi, ci)| vi - s * ci).collect()
            }
            ModelKind::HyperbolicH3 => {
                let s = lorentz(c, v);
                v.iter().zip(c.iter()).map(|(vi, ci)| vi + s * ci).collect()
            }
            _ => Coords::from_slice(v),
        }
    }

    /// Exponential map for an ambient tangent vector.
    pub fn exp_ambient(&self, p: &Point, v: &[f64]) -> Point {
        let c = &p.coords;
        match self.kind {
            ModelKind::EuclideanR(_) => Point { coords: c.iter().zip(v).map(|(a, b)| a + b).collect() },
            ModelKind::CircleS1 => Point::new(&[wrap_angle(c[0] + v[0])]),
            ModelKind::SphereS2 => {
                let th = norm(v);
                if th == 0.0 {
                    return p.clone();
                }
                let (s, co) = th.sin_cos();
                let q: Coords = c.iter().zip(v).map(|(a, b)| co * a + s * b / th).collect();
                self.project(Point { coords: q })
            }
            ModelKind::HyperbolicH3 => {
                let th = lorentz(v, v).max(0.0).sqrt();
                if th == 0.0 {
                    return p.clone();
                }
                let (s, co) = (th.sinh(), th.cosh());
                let q: Coords = c.iter().zip(v).map(|(a, b)| co * a + s * b / th).collect();
                self.project(Point { coords: q })
            }
        }
    }

    pub fn exp_map(&self, p: &Point, v: &TangentVector) -> Point {
        self.exp_ambient(p, &self.to_ambient(p, &v.components))
    }

    /// Inverse of the exponential map along the minimizing geodesic, as an
    /// ambient vector at `p`. At the sphere's antipode the first frame
    /// direction is chosen.
    pub fn log_ambient(&self, p: &Point, q: &Point) -> Coords {
        let (a, b) = (&p.coords, &q.coords);
        match self.kind {
            ModelKind::EuclideanR(_) => b.iter().zip(a.iter()).map(|(y, x)| y - x).collect(),
            ModelKind::CircleS1 => smallvec![angle_diff(a[0], b[0])],
            ModelKind::SphereS2 => {
                let d = self.distance(p, q);
                let w = self.project_tangent(p, b);
                let n = norm(&w);
                if n < 1e-300 {
                    if d < 1.0 {
                        return smallvec![0.0; 3];
                    }
                    return scaled(&self.frame(p)[0], d);
                }
                scaled(&w, d / n)
            }
            ModelKind::HyperbolicH3 => {
                let d = self.distance(p, q);
                let w = self.project_tangent(p, b);
                let n = lorentz(&w, &w).max(0.0).sqrt();
                if n < 1e-300 {
                    return smallvec![0.0; 4];
                }
                scaled(&w, d / n)
            }
        }
    }

    /// Distance and unit ambient direction at `p` pointing towards `q`.
    /// The direction is `None` when `q == p` (or antipodal on the sphere).
    pub fn direction_to(&self, p: &Point, q: &Point) -> (f64, Option<Coords>) {
        let d = self.distance(p, q);
        if d == 0.0 {
            return (0.0, None);
        }
        match self.kind {
            ModelKind::SphereS2 | ModelKind::HyperbolicH3 => {
                let w = self.project_tangent(p, &q.coords);
                let n = self.vec_norm(&w);
                if n < 1e-300 {
                    (d, None)
                } else {
                    (d, Some(scaled(&w, 1.0 / n)))
                }
            }
            _ => {
                let v = self.log_ambient(p, q);
                (d, Some(scaled(&v, 1.0 / d)))
            }
        }
    }

    /// Parallel transport of the ambient vector `w` at `p` to `q` along the
    /// minimizing geodesic segment.
    pub fn transport(&self, p: &Point, q: &Point, w: &[f64]) -> Coords {
        let (a, b) = (&p.coords, &q.coords);
        match self.kind {
            ModelKind::EuclideanR(_) | ModelKind::CircleS1 => Coords::from_slice(w),
            ModelKind::SphereS2 => {
                let k = dot(b, w) / (1.0 + dot(a, b));
                w.iter().zip(a.iter().zip(b.iter())).map(|(wi, (ai, bi))| wi - k * (ai + bi)).collect()
            }
            ModelKind::HyperbolicH3 => {
                let k = lorentz(b, w) / (1.0 - lorentz(a, b));
                w.iter().zip(a.iter().zip(b.iter())).map(|(wi, (ai, bi))| wi + k * (ai + bi)).collect()
            }
        }
    }

    /// Exact volume of a geodesic ball of radius `r`.
    pub fn ball_volume(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("ball radius must be positive, got {r}")));
        }
        Ok(match self.kind {
            ModelKind::EuclideanR(m) => unit_ball_volume(m) * r.powi(m as i32),
            ModelKind::CircleS1 => 2.0 * r.min(PI),
            ModelKind::SphereS2 => {
                if r >= PI {
                    4.0 * PI
                } else {
                    let s = (0.5 * r).sin();
                    4.0 * PI * s * s
                }
            }
            ModelKind::HyperbolicH3 => {
                let u = 2.0 * r;
                let excess = if u < 1e-2 {
                    let u3 = u * u * u;
                    u3 / 6.0 + u3 * u * u / 120.0 + u3 * u3 * u / 5040.0
                } else {
                    u.sinh() - u
                };
                PI * excess
            }
        })
    }

    /// Area of the geodesic sphere of radius `r` (derivative of the ball volume).
    pub fn sphere_area_at(&self, r: f64) -> f64 {
        match self.kind {
            ModelKind::EuclideanR(m) => m as f64 * unit_ball_volume(m) * r.powi(m as i32 - 1),
            ModelKind::CircleS1 => {
                if r < PI {
                    2.0
                } else {
                    0.0
                }
            }
            ModelKind::SphereS2 => {
                if r < PI {
                    2.0 * PI * r.sin()
                } else {
                    0.0
                }
            }
            ModelKind::HyperbolicH3 => {
                let s = r.sinh();
                4.0 * PI * s * s
            }
        }
    }

    /// Centered Gaussian tangent vector with independent components of
    /// standard deviation `scale` in the canonical frame.
    pub fn sample_tangent_gaussian(&self, p: &Point, scale: f64, stream: &mut RngStream) -> Result<TangentVector> {
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!("scale must be nonnegative, got {scale}")));
        }
        let components: Coords = (0..self.dim).map(|_| scale * stream.normal()).collect();
        Ok(TangentVector { base: p.clone(), components })
    }
}

impl fmt::Display for ManifoldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

pub const VALID_MODELS: &str = "euclidean:<m>, s1, s2, h3";

impl FromStr for ManifoldModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "s1" | "circle" => Ok(Self::circle()),
            "s2" | "sphere" => Ok(Self::sphere2()),
            "h3" | "hyperbolic" => Ok(Self::hyperbolic3()),
            _ => {
                if let Some(m) = s.strip_prefix("euclidean:") {
                    let m: usize = m
                        .parse()
                        .map_err(|_| Error::Config(format!("bad euclidean dimension in '{s}'; valid models: {VALID_MODELS}")))?;
                    Self::euclidean(m).map_err(|e| Error::Config(e.to_string()))
                } else {
                    Err(Error::Config(format!("unknown model '{s}'; valid models: {VALID_MODELS}")))
                }
            }
        }
    }
}

/// Volume of the unit ball in R^m.
pub fn unit_ball_volume(m: usize) -> f64 {
    match m {
        1 => return 2.0,
        2 => return PI,
        3 => return 4.0 * PI / 3.0,
        _ => {}
    }
    let h = m as f64 / 2.0;
    PI.powf(h) / statrs::function::gamma::gamma(h + 1.0)
}

/// Area of the unit m-sphere `S^m ⊂ R^{m+1}`.
pub fn unit_sphere_area(m: usize) -> f64 {
    match m {
        1 => return TAU,
        2 => return 4.0 * PI,
        _ => {}
    }
    let h = (m as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / statrs::function::gamma::gamma(h)
}
