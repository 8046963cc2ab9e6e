//! Hyperbolic feed-forward layers: tangent-space matrix multiplication,
//! transported bias addition, and tangent-space non-linear activation.

use ndarray::{Array1, Array2};

use crate::autodiff::Var;
use crate::diffgeo::DiffSpace;
use crate::error::{Error, Result};
use crate::manifold::{
    exp_map, log_map, parallel_transport, project, Curvature, ManifoldPoint, Model, Space,
    TangentVector,
};

/// Tangent-space non-linearity choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn apply_diff<'t>(&self, x: Var<'t>) -> Var<'t> {
        match self {
            Activation::Relu => x.relu(),
            Activation::Identity => x,
        }
    }

    pub fn parse(s: &str) -> Result<Activation> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

/// One hyperbolic feed-forward layer: `W` is `d_out x d_in` on tangent
/// coordinates, `b` is a `d_out` tangent-at-origin bias, and curvatures
/// thread input/output spaces.
#[derive(Debug, Clone)]
pub struct HypLayerParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub kappa_in: Curvature,
    pub kappa_out: Curvature,
    pub activation: Activation,
}

impl HypLayerParams {
    pub fn d_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w.nrows()
    }
}

fn space_for(model: Model, kappa: Curvature) -> Space {
    match model {
        Model::Flat => Space::flat(),
        _ => Space { model, curvature: kappa },
    }
}

/// Spatial tangent coordinates of `log_o(x)` (drops the zero time
/// coordinate on the hyperboloid).
fn log_o_spatial(x: &ManifoldPoint) -> Result<Array1<f64>> {
    let o = x.space.origin(x.dim());
    let v = log_map(&o, x)?;
    Ok(match x.model() {
        Model::Lorentz => v.vec.slice(ndarray::s![1..]).to_owned(),
        _ => v.vec,
    })
}

fn pad_spatial(space: Space, u: Array1<f64>) -> Array1<f64> {
    match space.model {
        Model::Lorentz => {
            let mut out = Array1::zeros(u.len() + 1);
            out.slice_mut(ndarray::s![1..]).assign(&u);
            out
        }
        _ => u,
    }
}

fn exp_o_spatial(space: Space, u: Array1<f64>) -> Result<ManifoldPoint> {
    let d = u.len();
    let o = space.origin(d);
    let vec = pad_spatial(space, u);
    exp_map(&o, &TangentVector { base: o.clone(), vec })
}

/// Hyperbolic linear transform with bias:
/// `exp_o(W log_o(x))` followed by `exp_{x'}(PT_{o -> x'}(b))`, projected.
pub fn hyp_linear(params: &HypLayerParams, x: &ManifoldPoint) -> Result<ManifoldPoint> {
    let u = log_o_spatial(x)?;
    if u.len() != params.d_in() {
        return Err(Error::DimMismatch(u.len(), params.d_in()));
    }
    let h = params.w.dot(&u);
    let space_out = space_for(x.model(), params.kappa_in);
    let y = exp_o_spatial(space_out, h)?;
    if params.b.len() != params.d_out() {
        return Err(Error::DimMismatch(params.b.len(), params.d_out()));
    }
    let o = space_out.origin(params.d_out());
    let b_vec = pad_spatial(space_out, params.b.clone());
    let b = TangentVector::new(o.clone(), b_vec)?;
    let moved = parallel_transport(&o, &y, &b)?;
    let out = exp_map(&y, &moved)?;
    Ok(project(&out))
}

/// Tangent-space activation `exp_o^{k_out}(sigma(log_o^{k_in}(x)))`.
pub fn hyp_activation(
    x: &ManifoldPoint,
    kappa_in: Curvature,
    kappa_out: Curvature,
    activation: Activation,
) -> Result<ManifoldPoint> {
    if x.kappa() != kappa_in.kappa() && x.model() != Model::Flat {
        return Err(Error::CurvatureMismatch(x.kappa(), kappa_in.kappa()));
    }
    let u = log_o_spatial(x)?;
    let activated = u.mapv(|v| activation.apply(v));
    exp_o_spatial(space_for(x.model(), kappa_out), activated)
}

/// Feed-forward network: per layer, linear + bias then activation, with
/// curvatures threaded layer to layer. Zero layers is the identity.
pub fn hnn_forward(layers: &[HypLayerParams], x: &ManifoldPoint) -> Result<ManifoldPoint> {
    let mut cur = x.clone();
    for (li, layer) in layers.iter().enumerate() {
        if cur.dim() != layer.d_in() {
            return Err(Error::invalid(format!(
                "layer {li}: input dim {} does not match weight dim {}",
                cur.dim(),
                layer.d_in()
            )));
        }
        let h = hyp_linear(layer, &cur)?;
        cur = hyp_activation(&h, layer.kappa_in, layer.kappa_out, layer.activation)?;
    }
    Ok(cur)
}

/// Leaf variables of one layer on a tape: `w` is `d_out x d_in`, `b` is a
/// `1 x d_out` spatial row.
#[derive(Clone, Copy)]
pub struct DiffLayerVars<'t> {
    pub w: Var<'t>,
    pub b: Var<'t>,
}

/// Tape version of [`hyp_linear`] + [`hyp_activation`] over a batch of
/// points (rows). `dropout_mask`, when given, multiplies the tangent
/// coordinates right before the weight matrix.
pub fn diff_hyp_layer<'t>(
    model: Model,
    layer: &HypLayerParams,
    vars: DiffLayerVars<'t>,
    x: Var<'t>,
    dropout_mask: Option<&Array2<f64>>,
) -> Var<'t> {
    let geo_in = DiffSpace::new(space_for(model, layer.kappa_in));
    let geo_out = DiffSpace::new(space_for(model, layer.kappa_out));
    let mut u = geo_in.log_o_spatial(x);
    if let Some(mask) = dropout_mask {
        let m = x.tape().constant(mask.clone());
        u = u * m;
    }
    let h = u.matmul(vars.w.transpose());
    let y = geo_in.exp_o_spatial(h);
    let b = geo_in.pad_spatial(vars.b);
    let moved = geo_in.pt_from_origin(y, b);
    let with_bias = geo_in.exp_at(y, moved);
    let activated = layer.activation.apply_diff(geo_in.log_o_spatial(with_bias));
    geo_out.exp_o_spatial(activated)
}

/// Tape version of [`hnn_forward`].
pub fn diff_hnn_forward<'t>(
    model: Model,
    layers: &[HypLayerParams],
    vars: &[DiffLayerVars<'t>],
    x: Var<'t>,
    dropout_masks: Option<&[Array2<f64>]>,
) -> Var<'t> {
    assert_eq!(layers.len(), vars.len(), "layer/var count mismatch");
    let mut cur = x;
    for (li, (layer, lv)) in layers.iter().zip(vars).enumerate() {
        let mask = dropout_masks.map(|m| &m[li]);
        cur = diff_hyp_layer(model, layer, *lv, cur, mask);
    }
    cur
}
