//! Closed-form Riemannian operations for the Poincaré ball, the Lorentz
//! (hyperboloid) model and a flat Euclidean fallback.
//!
//! Conventions: curvature `kappa < 0` is fixed per space (never trained);
//! Poincaré points live strictly inside the open ball of radius
//! `(-kappa)^(-1/2)` with a `1e-5` projection margin; Lorentz points carry
//! `d + 1` ambient coordinates on the sheet `<x,x>_L = 1/kappa`, `x0 > 0`.
//! All operations are pure functions on immutable values.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

/// Norm margin for the Poincaré ball projection.
pub const BALL_EPS: f64 = 1e-5;
/// acosh arguments are clamped to `>= 1 + ACOSH_EPS`.
pub const ACOSH_EPS: f64 = 1e-15;
/// artanh arguments are clamped to `<= 1 - ARTANH_EPS`.
pub const ARTANH_EPS: f64 = 1e-15;
/// Smallest norm treated as nonzero in safe divisions.
pub const MIN_NORM: f64 = 1e-15;

const TANGENT_TOL: f64 = 1e-8;
const EXP_TANGENT_TOL: f64 = 1e-6;

/// Hyperbolic geometry model (plus a flat fallback).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Poincare,
    Lorentz,
    Flat,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::Poincare => "poincare",
            Model::Lorentz => "lorentz",
            Model::Flat => "flat",
        }
    }

    pub fn parse(s: &str) -> Result<Model> {
        match s {
            "poincare" => Ok(Model::Poincare),
            "lorentz" => Ok(Model::Lorentz),
            "flat" => Ok(Model::Flat),
            other => Err(Error::invalid(format!("unknown model `{other}`"))),
        }
    }
}

/// Constant sectional curvature. Strictly negative for the hyperbolic
/// models; carried as 0 by the flat fallback, which ignores it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature(f64);

impl Curvature {
    /// The default curvature, -1.
    pub const MINUS_ONE: Curvature = Curvature(-1.0);

    pub fn new(kappa: f64) -> Result<Curvature> {
        if kappa >= 0.0 || !kappa.is_finite() {
            return Err(Error::invalid(format!(
                "curvature must be strictly negative, got {kappa}"
            )));
        }
        Ok(Curvature(kappa))
    }

    pub(crate) const fn flat() -> Curvature {
        Curvature(0.0)
    }

    pub fn kappa(self) -> f64 {
        self.0
    }

    /// |kappa|, the positive curvature magnitude `c`.
    pub fn c(self) -> f64 {
        -self.0
    }

    /// sqrt(|kappa|).
    pub fn sqrt_c(self) -> f64 {
        (-self.0).sqrt()
    }
}

/// A manifold together with its curvature; every point and tangent vector
/// is tagged with one of these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Space {
    pub model: Model,
    pub curvature: Curvature,
}

impl Space {
    pub fn poincare(kappa: f64) -> Result<Space> {
        Ok(Space { model: Model::Poincare, curvature: Curvature::new(kappa)? })
    }

    pub fn lorentz(kappa: f64) -> Result<Space> {
        Ok(Space { model: Model::Lorentz, curvature: Curvature::new(kappa)? })
    }

    pub fn flat() -> Space {
        Space { model: Model::Flat, curvature: Curvature::flat() }
    }

    pub fn new(model: Model, kappa: f64) -> Result<Space> {
        match model {
            Model::Flat => Ok(Space::flat()),
            Model::Poincare => Space::poincare(kappa),
            Model::Lorentz => Space::lorentz(kappa),
        }
    }

    pub fn kappa(&self) -> f64 {
        self.curvature.kappa()
    }

    /// Ambient coordinate count for manifold dimension `d`.
    pub fn ambient_dim(&self, d: usize) -> usize {
        match self.model {
            Model::Lorentz => d + 1,
            _ => d,
        }
    }

    /// Manifold dimension recovered from an ambient coordinate count.
    pub fn manifold_dim(&self, ambient: usize) -> usize {
        match self.model {
            Model::Lorentz => ambient - 1,
            _ => ambient,
        }
    }

    /// The origin point: the zero vector, or `((-kappa)^(-1/2), 0, ..., 0)`
    /// on the hyperboloid.
    pub fn origin(&self, d: usize) -> ManifoldPoint {
        let coords = match self.model {
            Model::Lorentz => {
                let mut v = Array1::zeros(d + 1);
                v[0] = 1.0 / self.curvature.sqrt_c();
                v
            }
            _ => Array1::zeros(d),
        };
        ManifoldPoint { space: *self, coords }
    }

    fn check_same(&self, other: &Space) -> Result<()> {
        if self.model != other.model {
            return Err(Error::ModelMismatch(self.model, other.model));
        }
        if self.model != Model::Flat && self.kappa() != other.kappa() {
            return Err(Error::CurvatureMismatch(self.kappa(), other.kappa()));
        }
        Ok(())
    }
}

/// A point on a manifold: ambient coordinates tagged with model and
/// curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    pub space: Space,
    pub coords: Array1<f64>,
}

impl ManifoldPoint {
    pub fn new(space: Space, coords: Array1<f64>) -> ManifoldPoint {
        ManifoldPoint { space, coords }
    }

    pub fn model(&self) -> Model {
        self.space.model
    }

    pub fn kappa(&self) -> f64 {
        self.space.kappa()
    }

    /// Manifold dimension (ambient length minus one on the hyperboloid).
    pub fn dim(&self) -> usize {
        self.space.manifold_dim(self.coords.len())
    }

    pub fn is_origin(&self, tol: f64) -> bool {
        let o = self.space.origin(self.dim());
        (&self.coords - &o.coords).iter().all(|v| v.abs() <= tol)
    }

    fn check_compatible(&self, other: &ManifoldPoint) -> Result<()> {
        self.space.check_same(&other.space)?;
        if self.coords.len() != other.coords.len() {
            return Err(Error::DimMismatch(self.coords.len(), other.coords.len()));
        }
        Ok(())
    }
}

/// A vector in the tangent space at `base`, stored in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: ManifoldPoint,
    pub vec: Array1<f64>,
}

impl TangentVector {
    pub fn new(base: ManifoldPoint, vec: Array1<f64>) -> Result<TangentVector> {
        if base.coords.len() != vec.len() {
            return Err(Error::DimMismatch(base.coords.len(), vec.len()));
        }
        let t = TangentVector { base, vec };
        t.check_tangency(TANGENT_TOL)?;
        Ok(t)
    }

    /// Zero vector at `base`.
    pub fn zero(base: ManifoldPoint) -> TangentVector {
        let vec = Array1::zeros(base.coords.len());
        TangentVector { base, vec }
    }

    fn check_tangency(&self, tol: f64) -> Result<()> {
        if self.base.model() == Model::Lorentz {
            let ip = minkowski_inner(&self.base.coords, &self.vec)?;
            if ip.abs() > tol {
                return Err(Error::TangencyViolation(ip.abs()));
            }
        }
        Ok(())
    }
}

/// A batch of points sharing one space, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub space: Space,
    pub coords: Array2<f64>,
}

impl Embedding {
    pub fn new(space: Space, coords: Array2<f64>) -> Embedding {
        Embedding { space, coords }
    }

    pub fn from_points(points: &[ManifoldPoint]) -> Result<Embedding> {
        let first = points
            .first()
            .ok_or_else(|| Error::invalid("empty point list"))?;
        let w = first.coords.len();
        let mut coords = Array2::zeros((points.len(), w));
        for (i, p) in points.iter().enumerate() {
            first.check_compatible(p)?;
            coords.row_mut(i).assign(&p.coords);
        }
        Ok(Embedding { space: first.space, coords })
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    /// Manifold dimension.
    pub fn dim(&self) -> usize {
        self.space.manifold_dim(self.coords.ncols())
    }

    pub fn point(&self, i: usize) -> ManifoldPoint {
        ManifoldPoint { space: self.space, coords: self.coords.row(i).to_owned() }
    }

    pub fn points(&self) -> Vec<ManifoldPoint> {
        (0..self.n()).map(|i| self.point(i)).collect()
    }
}

fn sq_norm(v: &Array1<f64>) -> f64 {
    v.dot(v)
}

// The 1 + ACOSH_EPS floor exists to bound gradients and lives in the
// differentiable path; the plain closed forms clamp at exactly 1 so that
// coincident points give an exact zero distance.
fn clamp_acosh(x: f64) -> f64 {
    x.max(1.0)
}

fn clamp_artanh(x: f64) -> f64 {
    x.min(1.0 - ARTANH_EPS)
}

/// Conformal factor of the Poincaré ball, `2 / (1 + kappa ||x||^2)`.
pub fn conformal_factor(kappa: f64, x: &Array1<f64>) -> f64 {
    2.0 / (1.0 + kappa * sq_norm(x)).max(MIN_NORM)
}

/// Minkowski inner product `-u0*v0 + sum_{i>=1} ui*vi`.
pub fn minkowski_inner(u: &Array1<f64>, v: &Array1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch(u.len(), v.len()));
    }
    if u.len() < 2 {
        return Err(Error::invalid("minkowski inner product needs length >= 2"));
    }
    Ok(u.dot(v) - 2.0 * u[0] * v[0])
}

/// Möbius addition without ball checks or projection. Used internally by
/// the gyration operator, which applies it to vectors of arbitrary norm.
pub(crate) fn mobius_add_raw(kappa: f64, x: &Array1<f64>, y: &Array1<f64>) -> Array1<f64> {
    let x2 = sq_norm(x);
    let y2 = sq_norm(y);
    let xy = x.dot(y);
    let a = 1.0 - 2.0 * kappa * xy - kappa * y2;
    let b = 1.0 + kappa * x2;
    let denom = 1.0 - 2.0 * kappa * xy + kappa * kappa * x2 * y2;
    let denom = if denom.abs() < MIN_NORM { MIN_NORM } else { denom };
    (x * a + y * b) / denom
}

fn expect_model(p: &ManifoldPoint, model: Model, op: &str) -> Result<()> {
    if p.model() != model {
        return Err(Error::invalid(format!(
            "{op} is defined on the {model:?} model, got {:?}",
            p.model()
        )));
    }
    Ok(())
}

/// Möbius addition `x ⊕_κ y` in the Poincaré ball.
pub fn mobius_add(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<ManifoldPoint> {
    expect_model(x, Model::Poincare, "mobius_add")?;
    x.check_compatible(y)?;
    let out = mobius_add_raw(x.kappa(), &x.coords, &y.coords);
    Ok(project(&ManifoldPoint::new(x.space, out)))
}

/// Gyration operator `gyr[x, y] v = ⊖(x ⊕ y) ⊕ (x ⊕ (y ⊕ v))`.
///
/// `v` may be any ambient vector; gyration acts on it as an orthogonal map.
pub fn gyration(x: &ManifoldPoint, y: &ManifoldPoint, v: &Array1<f64>) -> Result<Array1<f64>> {
    expect_model(x, Model::Poincare, "gyration")?;
    x.check_compatible(y)?;
    if v.len() != x.coords.len() {
        return Err(Error::DimMismatch(v.len(), x.coords.len()));
    }
    let k = x.kappa();
    let xy = mobius_add_raw(k, &x.coords, &y.coords);
    let inner = mobius_add_raw(k, &x.coords, &mobius_add_raw(k, &y.coords, v));
    Ok(mobius_add_raw(k, &(-&xy), &inner))
}

/// Geodesic distance. Symmetric, zero iff the points coincide (within the
/// projection tolerance); acosh arguments are clamped.
pub fn dist(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
    x.check_compatible(y)?;
    let k = x.kappa();
    match x.model() {
        Model::Flat => {
            let d = &x.coords - &y.coords;
            Ok(sq_norm(&d).sqrt())
        }
        Model::Poincare => {
            let diff = &x.coords - &y.coords;
            let denom = (1.0 + k * sq_norm(&x.coords)) * (1.0 + k * sq_norm(&y.coords));
            let arg = 1.0 - 2.0 * k * sq_norm(&diff) / denom.max(MIN_NORM);
            Ok(clamp_acosh(arg).acosh() / (-k).sqrt())
        }
        Model::Lorentz => {
            let ip = minkowski_inner(&x.coords, &y.coords)?;
            Ok(clamp_acosh(k * ip).acosh() / (-k).sqrt())
        }
    }
}

/// Exponential map `exp_x(v)`. The result is projected back onto the
/// manifold; `exp_x(0) = x`.
pub fn exp_map(x: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
    if v.base != *x {
        return Err(Error::invalid("tangent vector is not based at x"));
    }
    if x.model() == Model::Lorentz {
        let ip = minkowski_inner(&x.coords, &v.vec)?;
        if ip.abs() > EXP_TANGENT_TOL {
            return Err(Error::TangencyViolation(ip.abs()));
        }
    }
    let k = x.kappa();
    let out = match x.model() {
        Model::Flat => ManifoldPoint::new(x.space, &x.coords + &v.vec),
        Model::Poincare => {
            let n = sq_norm(&v.vec).sqrt();
            if n < MIN_NORM {
                return Ok(project(x));
            }
            let sc = (-k).sqrt();
            let lam = conformal_factor(k, &x.coords);
            let t = (sc * lam * n / 2.0).tanh() / (sc * n);
            let out = mobius_add_raw(k, &x.coords, &(&v.vec * t));
            ManifoldPoint::new(x.space, out)
        }
        Model::Lorentz => {
            let sc = (-k).sqrt();
            let n2 = minkowski_inner(&v.vec, &v.vec)?.max(0.0);
            let n = n2.sqrt();
            if n < MIN_NORM {
                return Ok(project(x));
            }
            let a = sc * n;
            let out = &x.coords * a.cosh() + &v.vec * (a.sinh() / (sc * n));
            ManifoldPoint::new(x.space, out)
        }
    };
    Ok(project(&out))
}

/// Logarithmic map `log_x(y)`. Returns the exact zero vector when `x == y`
/// coordinate-wise; otherwise the Riemannian norm of the result equals
/// `dist(x, y)`.
pub fn log_map(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector> {
    x.check_compatible(y)?;
    if x.coords == y.coords {
        return Ok(TangentVector::zero(x.clone()));
    }
    let k = x.kappa();
    let vec = match x.model() {
        Model::Flat => &y.coords - &x.coords,
        Model::Poincare => {
            let m = mobius_add_raw(k, &(-&x.coords), &y.coords);
            let n = sq_norm(&m).sqrt();
            if n < MIN_NORM {
                return Ok(TangentVector::zero(x.clone()));
            }
            let sc = (-k).sqrt();
            let lam = conformal_factor(k, &x.coords);
            let scale = 2.0 / (sc * lam) * clamp_artanh(sc * n).atanh() / n;
            m * scale
        }
        Model::Lorentz => {
            let beta = clamp_acosh(k * minkowski_inner(&x.coords, &y.coords)?);
            let alpha = beta.acosh();
            let denom = (beta * beta - 1.0).sqrt();
            let coef = if denom < MIN_NORM { 1.0 } else { alpha / denom };
            (&y.coords - &(&x.coords * beta)) * coef
        }
    };
    Ok(TangentVector { base: x.clone(), vec })
}

/// Parallel transport of `v` from `x` to `y` along the unique geodesic.
/// Preserves the Riemannian inner product.
pub fn parallel_transport(
    x: &ManifoldPoint,
    y: &ManifoldPoint,
    v: &TangentVector,
) -> Result<TangentVector> {
    x.check_compatible(y)?;
    if v.base != *x {
        return Err(Error::invalid("tangent vector is not based at x"));
    }
    v.check_tangency(TANGENT_TOL)?;
    let k = x.kappa();
    let vec = match x.model() {
        Model::Flat => v.vec.clone(),
        Model::Poincare => {
            let lam_x = conformal_factor(k, &x.coords);
            let lam_y = conformal_factor(k, &y.coords);
            let g = gyration(y, &ManifoldPoint::new(x.space, -&x.coords), &v.vec)?;
            g * (lam_x / lam_y)
        }
        Model::Lorentz => {
            let yv = minkowski_inner(&y.coords, &v.vec)?;
            let xy = minkowski_inner(&x.coords, &y.coords)?;
            let coef = k * yv / (1.0 + k * xy);
            &v.vec - &((&x.coords + &y.coords) * coef)
        }
    };
    Ok(TangentVector { base: y.clone(), vec })
}

/// Riemannian inner product of two tangent vectors at `x`.
pub fn tangent_inner(x: &ManifoldPoint, u: &Array1<f64>, v: &Array1<f64>) -> Result<f64> {
    if u.len() != v.len() || u.len() != x.coords.len() {
        return Err(Error::DimMismatch(u.len(), v.len()));
    }
    match x.model() {
        Model::Flat => Ok(u.dot(v)),
        Model::Poincare => {
            let lam = conformal_factor(x.kappa(), &x.coords);
            Ok(lam * lam * u.dot(v))
        }
        Model::Lorentz => minkowski_inner(u, v),
    }
}

/// Numerical-stability projection onto the manifold. Idempotent.
///
/// Poincaré: rescale so `||x|| <= (1 - 1e-5) * (-kappa)^(-1/2)`;
/// Lorentz: recompute `x0 = sqrt(1/|kappa| + ||x_{1:}||^2)`; Flat: identity.
pub fn project(x: &ManifoldPoint) -> ManifoldPoint {
    match x.model() {
        Model::Flat => x.clone(),
        Model::Poincare => {
            let max_norm = (1.0 - BALL_EPS) / x.space.curvature.sqrt_c();
            let mut coords = x.coords.clone();
            // Rescaling can overshoot by an ulp; loop so the result is
            // exactly a fixed point.
            loop {
                let n = sq_norm(&coords).sqrt();
                if n <= max_norm {
                    break;
                }
                coords = &coords * (max_norm / n);
            }
            ManifoldPoint::new(x.space, coords)
        }
        Model::Lorentz => {
            let c = x.space.curvature.c();
            let spatial_sq: f64 = x.coords.iter().skip(1).map(|v| v * v).sum();
            let mut coords = x.coords.clone();
            coords[0] = (1.0 / c + spatial_sq).sqrt();
            ManifoldPoint::new(x.space, coords)
        }
    }
}

/// Whether `x` satisfies its model's membership invariant within `tol`
/// (Lorentz constraint residual; Poincaré ball bound).
pub fn on_manifold(x: &ManifoldPoint, tol: f64) -> bool {
    match x.model() {
        Model::Flat => true,
        Model::Poincare => {
            sq_norm(&x.coords) < -1.0 / x.kappa() && x.coords.iter().all(|v| v.is_finite())
        }
        Model::Lorentz => {
            let ip = minkowski_inner(&x.coords, &x.coords).unwrap_or(f64::NAN);
            (ip - 1.0 / x.kappa()).abs() <= tol && x.coords[0] > 0.0
        }
    }
}

/// Diffeomorphism between the Poincaré ball and the Lorentz model at the
/// same curvature. Round trips are the identity; distances are preserved.
pub fn model_convert(x: &ManifoldPoint) -> Result<ManifoldPoint> {
    let c = x.space.curvature.c();
    match x.model() {
        Model::Flat => Err(Error::invalid("model_convert is undefined for the flat model")),
        Model::Poincare => {
            let y2 = sq_norm(&x.coords);
            let s = (1.0 - c * y2).max(MIN_NORM);
            let mut coords = Array1::zeros(x.coords.len() + 1);
            coords[0] = (1.0 + c * y2) / (c.sqrt() * s);
            for (i, v) in x.coords.iter().enumerate() {
                coords[i + 1] = 2.0 * v / s;
            }
            let space = Space::lorentz(x.kappa())?;
            Ok(project(&ManifoldPoint::new(space, coords)))
        }
        Model::Lorentz => {
            let denom = 1.0 + c.sqrt() * x.coords[0];
            let coords = x.coords.slice(ndarray::s![1..]).to_owned() / denom;
            let space = Space::poincare(x.kappa())?;
            Ok(project(&ManifoldPoint::new(space, coords)))
        }
    }
}

/// A point sampled uniformly in direction with hyperbolic distance to the
/// origin uniform in `[0, max_radius]` (Euclidean radius for the flat model).
pub fn random_point<R: Rng>(space: Space, d: usize, max_radius: f64, rng: &mut R) -> ManifoldPoint {
    let dir = random_unit(d, rng);
    let r = rng.random::<f64>() * max_radius;
    let o = space.origin(d);
    let vec = match space.model {
        Model::Lorentz => {
            let mut v = Array1::zeros(d + 1);
            for i in 0..d {
                v[i + 1] = dir[i] * r;
            }
            v
        }
        _ => dir * r,
    };
    // dir has unit Riemannian norm at the origin up to the conformal factor;
    // rescale so the geodesic radius is exactly r.
    let vec = match space.model {
        Model::Poincare => vec / conformal_factor(space.kappa(), &o.coords),
        _ => vec,
    };
    exp_map(&o, &TangentVector { base: o.clone(), vec }).expect("origin tangent")
}

/// A tangent vector at `x` with Riemannian norm uniform in `[0, max_norm]`.
pub fn random_tangent<R: Rng>(x: &ManifoldPoint, max_norm: f64, rng: &mut R) -> TangentVector {
    let d = x.dim();
    let dir = random_unit(d, rng);
    let r = rng.random::<f64>() * max_norm;
    match x.model() {
        Model::Flat => TangentVector { base: x.clone(), vec: dir * r },
        Model::Poincare => {
            let lam = conformal_factor(x.kappa(), &x.coords);
            TangentVector { base: x.clone(), vec: dir * (r / lam) }
        }
        Model::Lorentz => {
            // Build a spatial vector at the origin and transport it to x;
            // transport preserves the Minkowski norm.
            let o = x.space.origin(d);
            let mut v = Array1::zeros(d + 1);
            for i in 0..d {
                v[i + 1] = dir[i] * r;
            }
            let t = TangentVector { base: o.clone(), vec: v };
            parallel_transport(&o, x, &t).expect("transport from origin")
        }
    }
}

fn random_unit<R: Rng>(d: usize, rng: &mut R) -> Array1<f64> {
    loop {
        let v = Array1::from_iter((0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0));
        let n = sq_norm(&v).sqrt();
        if n > 1e-3 {
            return v / n;
        }
    }
}
