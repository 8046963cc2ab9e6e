//! Hyperbolic embedding centers and root alignment.
//!
//! The hyperbolic center (HC) of an embedding is its surrogate root: the
//! Möbius gyromidpoint in the Poincaré ball, the Lorentzian centroid on the
//! hyperboloid, and the plain weighted mean in tangent space or the flat
//! model. Root alignment translates an embedding so its center lands on the
//! origin. Weights default to all-ones.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::manifold::{
    self, conformal_factor, minkowski_inner, mobius_add, parallel_transport, project, Embedding,
    ManifoldPoint, Model, TangentVector, ARTANH_EPS, MIN_NORM,
};

/// Points with nonnegative weights (positive total), sharing one space.
#[derive(Debug, Clone)]
pub struct WeightedPointSet {
    pub points: Vec<ManifoldPoint>,
    pub weights: Vec<f64>,
}

impl WeightedPointSet {
    pub fn new(points: Vec<ManifoldPoint>, weights: Vec<f64>) -> Result<WeightedPointSet> {
        if points.is_empty() {
            return Err(Error::invalid("empty point set"));
        }
        if points.len() != weights.len() {
            return Err(Error::DimMismatch(points.len(), weights.len()));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("weights must be nonnegative and finite"));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("total weight must be positive"));
        }
        let first = points[0].space;
        let width = points[0].coords.len();
        for p in &points[1..] {
            if p.space != first || p.coords.len() != width {
                return Err(Error::invalid("points must share one space and dimension"));
            }
        }
        Ok(WeightedPointSet { points, weights })
    }

    /// All-ones weights, the default in this crate.
    pub fn uniform(points: Vec<ManifoldPoint>) -> Result<WeightedPointSet> {
        let w = vec![1.0; points.len()];
        WeightedPointSet::new(points, w)
    }
}

/// Möbius scalar multiplication `r ⊗_κ x`.
fn mobius_scalar(kappa: f64, r: f64, x: &Array1<f64>) -> Array1<f64> {
    let sc = (-kappa).sqrt();
    let n = x.dot(x).sqrt();
    if n < MIN_NORM {
        return x.clone();
    }
    let t = (r * (sc * n).min(1.0 - ARTANH_EPS).atanh()).tanh() / (sc * n);
    x * t
}

/// Möbius gyromidpoint of a weighted Poincaré point set:
/// `(1/2) ⊗_κ ( Σ v_i λ_i z_i / Σ v_i (λ_i - 1) )`.
pub fn gyromidpoint(set: &WeightedPointSet) -> Result<ManifoldPoint> {
    let space = set.points[0].space;
    if space.model != Model::Poincare {
        return Err(Error::invalid("gyromidpoint is defined on the Poincare model"));
    }
    let kappa = space.kappa();
    let width = set.points[0].coords.len();
    let mut num = Array1::<f64>::zeros(width);
    let mut den = 0.0;
    for (p, w) in set.points.iter().zip(&set.weights) {
        let lam = conformal_factor(kappa, &p.coords);
        num = num + &p.coords * (w * lam);
        den += w * (lam - 1.0);
    }
    if den.abs() < MIN_NORM {
        return Err(Error::invalid("degenerate gyromidpoint denominator"));
    }
    let mid = mobius_scalar(kappa, 0.5, &(num / den));
    Ok(project(&ManifoldPoint::new(space, mid)))
}

/// Lorentzian centroid `(1/sqrt|κ|) Σ v_i z_i / | ||Σ v_i z_i||_L |`.
pub fn lorentz_centroid(set: &WeightedPointSet) -> Result<ManifoldPoint> {
    let space = set.points[0].space;
    if space.model != Model::Lorentz {
        return Err(Error::invalid("lorentz_centroid is defined on the Lorentz model"));
    }
    let width = set.points[0].coords.len();
    let mut sum = Array1::<f64>::zeros(width);
    for (p, w) in set.points.iter().zip(&set.weights) {
        sum = sum + &p.coords * *w;
    }
    let norm = minkowski_inner(&sum, &sum)?.abs().sqrt();
    if norm < MIN_NORM {
        return Err(Error::invalid("degenerate weighted sum with zero Lorentzian norm"));
    }
    let coords = sum / (space.curvature.sqrt_c() * norm);
    Ok(ManifoldPoint::new(space, coords))
}

/// Weighted mean of tangent vectors at the origin, `Σ v_i z_i / Σ v_i`.
pub fn tangent_mean(vectors: &[Array1<f64>], weights: Option<&[f64]>) -> Result<Array1<f64>> {
    if vectors.is_empty() {
        return Err(Error::invalid("empty vector list"));
    }
    let ones;
    let w = match weights {
        Some(w) => w,
        None => {
            ones = vec![1.0; vectors.len()];
            &ones
        }
    };
    if w.len() != vectors.len() {
        return Err(Error::DimMismatch(w.len(), vectors.len()));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("total weight must be positive"));
    }
    let mut sum = Array1::<f64>::zeros(vectors[0].len());
    for (v, wi) in vectors.iter().zip(w) {
        if v.len() != sum.len() {
            return Err(Error::DimMismatch(v.len(), sum.len()));
        }
        sum = sum + v * *wi;
    }
    Ok(sum / total)
}

/// The center of an embedding via the model-matching formula: gyromidpoint,
/// Lorentzian centroid, or arithmetic mean (flat).
pub fn hyperbolic_center(emb: &Embedding) -> Result<ManifoldPoint> {
    match emb.space.model {
        Model::Poincare => gyromidpoint(&WeightedPointSet::uniform(emb.points())?),
        Model::Lorentz => lorentz_centroid(&WeightedPointSet::uniform(emb.points())?),
        Model::Flat => {
            if emb.n() == 0 {
                return Err(Error::invalid("empty embedding"));
            }
            let mean = emb.coords.sum_axis(ndarray::Axis(0)) / emb.n() as f64;
            Ok(ManifoldPoint::new(emb.space, mean))
        }
    }
}

/// Root alignment on the manifold: translate every point so the given
/// center moves to the origin.
///
/// Poincaré uses `z ⊕_κ (-z_c)`; Lorentz composes `exp ∘ PT ∘ log` with the
/// inverse of the center, which maps the centroid exactly to the origin;
/// the flat model subtracts. All outputs are projected.
pub fn align_root(embedding: &Embedding, center: &ManifoldPoint) -> Result<Embedding> {
    if embedding.space.model != center.space.model {
        return Err(Error::ModelMismatch(embedding.space.model, center.space.model));
    }
    if embedding.coords.ncols() != center.coords.len() {
        return Err(Error::DimMismatch(embedding.coords.ncols(), center.coords.len()));
    }
    let space = embedding.space;
    let mut out = Array2::zeros(embedding.coords.raw_dim());
    match space.model {
        Model::Flat => {
            for (i, row) in embedding.coords.rows().into_iter().enumerate() {
                out.row_mut(i).assign(&(&row.to_owned() - &center.coords));
            }
        }
        Model::Poincare => {
            let neg_c = ManifoldPoint::new(space, -&center.coords);
            for i in 0..embedding.n() {
                let aligned = mobius_add(&embedding.point(i), &neg_c)?;
                out.row_mut(i).assign(&aligned.coords);
            }
        }
        Model::Lorentz => {
            let d = embedding.dim();
            let o = space.origin(d);
            let log_c = manifold::log_map(&o, center)?;
            let inv = manifold::exp_map(&o, &TangentVector { base: o.clone(), vec: -log_c.vec })?;
            for i in 0..embedding.n() {
                let v = manifold::log_map(&o, &embedding.point(i))?;
                let moved = parallel_transport(&o, &inv, &v)?;
                let aligned = manifold::exp_map(&inv, &moved)?;
                out.row_mut(i).assign(&aligned.coords);
            }
        }
    }
    Ok(Embedding::new(space, out))
}

/// Root alignment in tangent space: plain subtraction of the center.
pub fn align_root_tangent(vectors: &Array2<f64>, center: &Array1<f64>) -> Result<Array2<f64>> {
    if vectors.ncols() != center.len() {
        return Err(Error::DimMismatch(vectors.ncols(), center.len()));
    }
    let mut out = vectors.clone();
    for mut row in out.rows_mut() {
        row -= center;
    }
    Ok(out)
}

/// Metric selector for [`sqdist_objective`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenterMetric {
    /// Squared geodesic distance.
    Geodesic,
    /// Squared Lorentzian distance `||x-y||_L^2 = 2/κ - 2<x,y>_L`.
    LorentzianSq,
    /// Squared Euclidean distance between ambient coordinates.
    TangentEuclidean,
}

/// Weighted squared-distance objective `Σ v_i m(z_i, candidate)^2`, the
/// quantity the centers minimize.
pub fn sqdist_objective(
    set: &WeightedPointSet,
    candidate: &ManifoldPoint,
    metric: CenterMetric,
) -> Result<f64> {
    let mut total = 0.0;
    for (p, w) in set.points.iter().zip(&set.weights) {
        let sq = match metric {
            CenterMetric::Geodesic => {
                let d = manifold::dist(p, candidate)?;
                d * d
            }
            CenterMetric::LorentzianSq => {
                if p.model() != Model::Lorentz {
                    return Err(Error::invalid("lorentzian_sq metric needs Lorentz points"));
                }
                let k = p.kappa();
                2.0 / k - 2.0 * minkowski_inner(&p.coords, &candidate.coords)?
            }
            CenterMetric::TangentEuclidean => {
                let diff = &p.coords - &candidate.coords;
                diff.dot(&diff)
            }
        };
        total += w * sq;
    }
    Ok(total)
}

/// Tangent-space version of [`sqdist_objective`].
pub fn sqdist_objective_tangent(
    vectors: &[Array1<f64>],
    weights: Option<&[f64]>,
    candidate: &Array1<f64>,
) -> Result<f64> {
    if vectors.is_empty() {
        return Err(Error::invalid("empty vector list"));
    }
    let ones;
    let w = match weights {
        Some(w) => w,
        None => {
            ones = vec![1.0; vectors.len()];
            &ones
        }
    };
    let mut total = 0.0;
    for (v, wi) in vectors.iter().zip(w) {
        let diff = v - candidate;
        total += wi * diff.dot(&diff);
    }
    Ok(total)
}
