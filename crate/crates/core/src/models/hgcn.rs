//! Hyperbolic graph convolution: normalized or attention-based neighbor
//! weights, tangent-space aggregation at the origin, and the full layer
//! stack (linear -> aggregate -> activation).

use std::rc::Rc;

use ndarray::{Array1, Array2};

use crate::autodiff::{SparseRows, Var};
use crate::diffgeo::DiffSpace;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::manifold::{Embedding, Model, Space};
use crate::models::layers::{hyp_activation, hyp_linear, DiffLayerVars, HypLayerParams};

/// Neighbor weighting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggMode {
    /// Symmetric normalized weights `1 / sqrt(d_i d_j)` with self-loops.
    Degree,
    /// Softmax over neighbors of a linear score on concatenated tangent
    /// embeddings.
    Attention,
}

impl AggMode {
    pub fn parse(s: &str) -> Result<AggMode> {
        match s {
            "degree" => Ok(AggMode::Degree),
            "attention" => Ok(AggMode::Attention),
            other => Err(Error::invalid(format!("unknown aggregation `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AggMode::Degree => "degree",
            AggMode::Attention => "attention",
        }
    }
}

/// Attention score parameters: `score(i, j) = a_self . u_i + a_nbr . u_j
/// + bias` on tangent coordinates, a single affine layer.
#[derive(Debug, Clone)]
pub struct AttnParams {
    pub a_self: Array1<f64>,
    pub a_nbr: Array1<f64>,
    pub bias: f64,
}

impl AttnParams {
    pub fn zeros(d: usize) -> AttnParams {
        AttnParams { a_self: Array1::zeros(d), a_nbr: Array1::zeros(d), bias: 0.0 }
    }
}

/// Sorted neighbor lists with self-loops materialized.
pub fn neighbor_lists_with_self(g: &Graph) -> Vec<Vec<usize>> {
    let mut adj = g.adjacency();
    for (i, row) in adj.iter_mut().enumerate() {
        row.push(i);
        row.sort_unstable();
    }
    adj
}

fn log_o_spatial_rows(emb: &Embedding) -> Result<Array2<f64>> {
    let o = emb.space.origin(emb.dim());
    let mut out = Array2::zeros((emb.n(), emb.dim()));
    for i in 0..emb.n() {
        let v = crate::manifold::log_map(&o, &emb.point(i))?;
        let spatial = match emb.space.model {
            Model::Lorentz => v.vec.slice(ndarray::s![1..]).to_owned(),
            _ => v.vec,
        };
        out.row_mut(i).assign(&spatial);
    }
    Ok(out)
}

/// Aggregation weights from explicit neighbor lists (self-loops included
/// by the caller). A row without any neighbor is an error.
pub fn agg_weights_from_neighbors(
    neighbors: &[Vec<usize>],
    mode: AggMode,
    emb: Option<&Embedding>,
    attn: Option<&AttnParams>,
) -> Result<SparseRows> {
    let n = neighbors.len();
    for (i, row) in neighbors.iter().enumerate() {
        if row.is_empty() {
            return Err(Error::invalid(format!("isolated node {i} without self-loop")));
        }
    }
    let rows = match mode {
        AggMode::Degree => {
            let deg: Vec<f64> = neighbors.iter().map(|r| r.len() as f64).collect();
            neighbors
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter().map(|&j| (j, 1.0 / (deg[i] * deg[j]).sqrt())).collect()
                })
                .collect()
        }
        AggMode::Attention => {
            let emb = emb.ok_or_else(|| Error::invalid("attention weights need embeddings"))?;
            let attn = attn.ok_or_else(|| Error::invalid("attention weights need parameters"))?;
            let u = log_o_spatial_rows(emb)?;
            if attn.a_self.len() != u.ncols() || attn.a_nbr.len() != u.ncols() {
                return Err(Error::DimMismatch(attn.a_self.len(), u.ncols()));
            }
            let p: Vec<f64> = (0..n).map(|i| u.row(i).dot(&attn.a_self)).collect();
            let q: Vec<f64> = (0..n).map(|j| u.row(j).dot(&attn.a_nbr)).collect();
            neighbors
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let logits: Vec<f64> =
                        row.iter().map(|&j| p[i] + q[j] + attn.bias).collect();
                    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                    let total: f64 = exps.iter().sum();
                    row.iter().zip(&exps).map(|(&j, e)| (j, e / total)).collect()
                })
                .collect()
        }
    };
    Ok(SparseRows { n_cols: n, rows })
}

/// Aggregation weights for a graph, materializing self-loops.
pub fn agg_weights(
    g: &Graph,
    mode: AggMode,
    emb: Option<&Embedding>,
    attn: Option<&AttnParams>,
) -> Result<SparseRows> {
    agg_weights_from_neighbors(&neighbor_lists_with_self(g), mode, emb, attn)
}

/// Tangent-space neighborhood aggregation at the origin:
/// `exp_o(sum_j a_ij log_o(x_j))` per node, projected.
pub fn hyp_aggregate(emb: &Embedding, weights: &SparseRows, kappa: f64) -> Result<Embedding> {
    if emb.space.model != Model::Flat && emb.space.kappa() != kappa {
        return Err(Error::CurvatureMismatch(emb.space.kappa(), kappa));
    }
    if weights.n_cols != emb.n() {
        return Err(Error::DimMismatch(weights.n_cols, emb.n()));
    }
    let u = log_o_spatial_rows(emb)?;
    let agg = weights.matmul_dense(&u);
    let o = emb.space.origin(emb.dim());
    let mut out = Array2::zeros((weights.n_rows(), emb.coords.ncols()));
    for i in 0..weights.n_rows() {
        let vec = match emb.space.model {
            Model::Lorentz => {
                let mut v = Array1::zeros(emb.dim() + 1);
                v.slice_mut(ndarray::s![1..]).assign(&agg.row(i));
                v
            }
            _ => agg.row(i).to_owned(),
        };
        let p = crate::manifold::exp_map(
            &o,
            &crate::manifold::TangentVector { base: o.clone(), vec },
        )?;
        out.row_mut(i).assign(&p.coords);
    }
    Ok(Embedding::new(emb.space, out))
}

/// One graph-convolution layer: the feed-forward core plus optional
/// attention parameters for the aggregation step.
#[derive(Debug, Clone)]
pub struct HgcnLayer {
    pub base: HypLayerParams,
    pub attn: Option<AttnParams>,
}

fn space_for(model: Model, kappa: crate::manifold::Curvature) -> Space {
    match model {
        Model::Flat => Space::flat(),
        _ => Space { model, curvature: kappa },
    }
}

/// Lift raw feature rows onto the manifold through `exp_o` (zero-padded
/// time coordinate on the hyperboloid).
pub fn lift_features(space: Space, features: &Array2<f64>) -> Result<Embedding> {
    let o = space.origin(features.ncols());
    let mut out = Array2::zeros((features.nrows(), space.ambient_dim(features.ncols())));
    for (i, row) in features.rows().into_iter().enumerate() {
        let vec = match space.model {
            Model::Lorentz => {
                let mut v = Array1::zeros(features.ncols() + 1);
                v.slice_mut(ndarray::s![1..]).assign(&row);
                v
            }
            _ => row.to_owned(),
        };
        let p = crate::manifold::exp_map(
            &o,
            &crate::manifold::TangentVector { base: o.clone(), vec },
        )?;
        out.row_mut(i).assign(&p.coords);
    }
    Ok(Embedding::new(space, out))
}

/// Full graph-convolution stack on plain values: per layer, linear + bias,
/// neighborhood aggregation (weights recomputed from the hidden states in
/// attention mode), then tangent activation.
pub fn hgcn_forward(
    layers: &[HgcnLayer],
    g: &Graph,
    features: &Array2<f64>,
    mode: AggMode,
    model: Model,
) -> Result<Embedding> {
    if features.nrows() != g.n {
        return Err(Error::DimMismatch(features.nrows(), g.n));
    }
    let first_kappa = layers
        .first()
        .map(|l| l.base.kappa_in)
        .unwrap_or(crate::manifold::Curvature::MINUS_ONE);
    let mut cur = lift_features(space_for(model, first_kappa), features)?;
    let neighbors = neighbor_lists_with_self(g);
    for (li, layer) in layers.iter().enumerate() {
        if cur.dim() != layer.base.d_in() {
            return Err(Error::invalid(format!(
                "layer {li}: input dim {} does not match weight dim {}",
                cur.dim(),
                layer.base.d_in()
            )));
        }
        // Linear + bias per node.
        let mut h = Array2::zeros((g.n, space_for(model, layer.base.kappa_in)
            .ambient_dim(layer.base.d_out())));
        for i in 0..g.n {
            let p = hyp_linear(&layer.base, &cur.point(i))?;
            h.row_mut(i).assign(&p.coords);
        }
        let h_emb = Embedding::new(space_for(model, layer.base.kappa_in), h);
        let weights =
            agg_weights_from_neighbors(&neighbors, mode, Some(&h_emb), layer.attn.as_ref())?;
        let agg = hyp_aggregate(&h_emb, &weights, h_emb.space.kappa())?;
        let mut next = Array2::zeros((g.n, agg.coords.ncols()));
        for i in 0..g.n {
            let a = hyp_activation(
                &agg.point(i),
                layer.base.kappa_in,
                layer.base.kappa_out,
                layer.base.activation,
            )?;
            next.row_mut(i).assign(&a.coords);
        }
        cur = Embedding::new(space_for(model, layer.base.kappa_out), next);
    }
    Ok(cur)
}

/// Sparse edge structure for attention aggregation: one entry per
/// (node, neighbor) pair with self-loops, plus a constant segment-sum
/// matrix mapping edge values back to their source row.
#[derive(Debug, Clone)]
pub struct AttnEdges {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub seg_sum: Rc<SparseRows>,
}

impl AttnEdges {
    pub fn from_neighbors(neighbors: &[Vec<usize>]) -> AttnEdges {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut rows = vec![Vec::new(); neighbors.len()];
        for (i, nbrs) in neighbors.iter().enumerate() {
            for &j in nbrs {
                rows[i].push((src.len(), 1.0));
                src.push(i);
                dst.push(j);
            }
        }
        let seg_sum = Rc::new(SparseRows { n_cols: src.len(), rows });
        AttnEdges { src, dst, seg_sum }
    }
}

/// Aggregation context for the tape path: degree weights are a constant
/// sparse matrix; attention holds the edge structure and parameter vars.
#[derive(Clone)]
pub enum DiffAggContext<'t> {
    Degree(Rc<SparseRows>),
    Attention { edges: Rc<AttnEdges>, a_self: Var<'t>, a_nbr: Var<'t>, bias: Var<'t> },
}

/// Sparse attention aggregation: per-edge logits, softmax over each
/// node's neighbor segment, then the weighted tangent sum. `u` is the
/// tangent block whose rows are aggregated.
pub fn diff_attention_aggregate<'t>(
    u: Var<'t>,
    edges: &AttnEdges,
    a_self: Var<'t>,
    a_nbr: Var<'t>,
    bias: Var<'t>,
) -> Var<'t> {
    let p = u.matmul(a_self.transpose());
    let q = u.matmul(a_nbr.transpose());
    let logits = p.gather_rows(&edges.src) + q.gather_rows(&edges.dst) + bias;
    let exp = logits.exp();
    let denom = exp.spmm(edges.seg_sum.clone()).gather_rows(&edges.src);
    let weights = exp / denom;
    (u.gather_rows(&edges.dst) * weights).spmm(edges.seg_sum.clone())
}

/// Tape version of [`hgcn_forward`], producing the final-layer points.
pub fn diff_hgcn_forward<'t>(
    model: Model,
    layers: &[HgcnLayer],
    vars: &[DiffLayerVars<'t>],
    agg: &[DiffAggContext<'t>],
    features: Var<'t>,
    dropout_masks: Option<&[Array2<f64>]>,
) -> Var<'t> {
    assert_eq!(layers.len(), vars.len(), "layer/var count mismatch");
    assert_eq!(layers.len(), agg.len(), "layer/agg count mismatch");
    let first_kappa = layers
        .first()
        .map(|l| l.base.kappa_in)
        .unwrap_or(crate::manifold::Curvature::MINUS_ONE);
    let lift_geo = DiffSpace::new(space_for(model, first_kappa));
    let mut cur = lift_geo.exp_o_spatial(features);
    for (li, (layer, lv)) in layers.iter().zip(vars).enumerate() {
        let geo_in = DiffSpace::new(space_for(model, layer.base.kappa_in));
        let geo_out = DiffSpace::new(space_for(model, layer.base.kappa_out));

        // Linear + bias (no activation yet).
        let mut u = geo_in.log_o_spatial(cur);
        if let Some(masks) = dropout_masks {
            let m = cur.tape().constant(masks[li].clone());
            u = u * m;
        }
        let h = u.matmul(lv.w.transpose());
        let y = geo_in.exp_o_spatial(h);
        let b = geo_in.pad_spatial(lv.b);
        let moved = geo_in.pt_from_origin(y, b);
        let with_bias = geo_in.exp_at(y, moved);

        // Aggregate in the tangent space at the origin.
        let v = geo_in.log_o_spatial(with_bias);
        let agg_tangent = match &agg[li] {
            DiffAggContext::Degree(w) => v.spmm(w.clone()),
            DiffAggContext::Attention { edges, a_self, a_nbr, bias } => {
                diff_attention_aggregate(v, edges, *a_self, *a_nbr, *bias)
            }
        };
        let aggregated = geo_in.exp_o_spatial(agg_tangent);

        // Activation into the next curvature.
        let act = layer.base.activation;
        let activated = match act {
            crate::models::layers::Activation::Relu => geo_in.log_o_spatial(aggregated).relu(),
            crate::models::layers::Activation::Identity => geo_in.log_o_spatial(aggregated),
        };
        cur = geo_out.exp_o_spatial(activated);
    }
    cur
}
