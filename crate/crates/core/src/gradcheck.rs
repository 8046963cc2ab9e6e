//! Named central-finite-difference suite over every loss and layer the
//! trainer can assemble: the distance-softmax embedding objective, the
//! link-prediction binary cross-entropy, node-classification
//! cross-entropy, the stretching losses in both spaces plus the opposite
//! variant, and the feed-forward/graph-convolution layers.
//!
//! Losses are checked at relative tolerance 1e-4 and layers (through a
//! scalar readout) at 1e-3, on instances of at most 12 nodes. The
//! stretching cases run with full gradient flow (no detached weights or
//! centers), since finite differences see every dependency.

use std::rc::Rc;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, GradCheckReport};
use crate::diffgeo::DiffSpace;
use crate::error::Result;
use crate::graph::Graph;
use crate::hie::{hie_loss, HieConfig, HieEmbedding, HieMode, HieSigma, HieSpace};
use crate::manifold::{Curvature, Space};
use crate::models::{
    agg_weights_from_neighbors, ce_loss, diff_hgcn_forward, diff_hnn_forward, lp_loss_diff,
    nc_decode_diff, neighbor_lists_with_self, shallow_loss_diff, Activation, AggMode, AttnEdges,
    AttnParams, DiffAggContext, DiffLayerVars, FermiDiracParams, HgcnLayer, HypLayerParams,
};

/// One named finite-difference case.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub name: &'static str,
    pub tol_rel: f64,
    pub report: GradCheckReport,
}

impl GradCheckCase {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

const LOSS_TOL: f64 = 1e-4;
const LAYER_TOL: f64 = 1e-3;
const FD_STEP: f64 = 1e-5;

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
}

fn toy_graph() -> Graph {
    // 12-node tree with an extra cross edge.
    let edges = vec![
        (0, 1),
        (0, 2),
        (0, 3),
        (1, 4),
        (1, 5),
        (2, 6),
        (2, 7),
        (3, 8),
        (3, 9),
        (4, 10),
        (4, 11),
        (5, 6),
    ];
    Graph::new(12, edges).unwrap()
}

fn check_shallow_loss(space: Space, rng: &mut ChaCha8Rng) -> Result<GradCheckCase> {
    let geo = DiffSpace::new(space);
    let edges = vec![(0, 1), (1, 2), (3, 4), (5, 6)];
    let negatives = vec![vec![7, 8], vec![9, 10], vec![11, 0], vec![2, 9]];
    let u0 = random_matrix(12, 3, 0.6, rng);
    let report = grad_check(
        move |_t, vars| {
            let z = geo.exp_o_spatial(vars[0]);
            shallow_loss_diff(&geo, z, &edges, &negatives)
        },
        &[u0],
        FD_STEP,
        LOSS_TOL,
    )?;
    Ok(GradCheckCase { name: "shallow_embedding_loss", tol_rel: LOSS_TOL, report })
}

fn check_lp_loss(space: Space, rng: &mut ChaCha8Rng) -> Result<GradCheckCase> {
    let geo = DiffSpace::new(space);
    let fd = FermiDiracParams::default();
    let pos = vec![(0, 1), (2, 3), (4, 5), (6, 7)];
    let neg = vec![(0, 8), (1, 9), (2, 10), (3, 11)];
    let u0 = random_matrix(12, 3, 0.6, rng);
    let report = grad_check(
        move |_t, vars| {
            let z = geo.exp_o_spatial(vars[0]);
            lp_loss_diff(&geo, z, &pos, &neg, &fd)
        },
        &[u0],
        FD_STEP,
        LOSS_TOL,
    )?;
    Ok(GradCheckCase { name: "link_prediction_bce", tol_rel: LOSS_TOL, report })
}

fn check_ce_loss(space: Space, rng: &mut ChaCha8Rng) -> Result<GradCheckCase> {
    let geo = DiffSpace::new(space);
    let labels = vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2];
    let mask: Vec<bool> = (0..12).map(|i| i % 4 != 3).collect();
    let u0 = random_matrix(12, 4, 0.5, rng);
    let w0 = random_matrix(3, 4, 0.5, rng);
    let b0 = random_matrix(1, 3, 0.1, rng);
    let report = grad_check(
        move |_t, vars| {
            let z = geo.exp_o_spatial(vars[0]);
            let logits = nc_decode_diff(&geo, z, vars[1], vars[2]);
            ce_loss(logits, &labels, &mask)
        },
        &[u0, w0, b0],
        FD_STEP,
        LOSS_TOL,
    )?;
    Ok(GradCheckCase { name: "node_classification_ce", tol_rel: LOSS_TOL, report })
}

fn stretch_config(mode: HieMode, space: HieSpace, sigma: HieSigma) -> HieConfig {
    HieConfig {
        mode,
        space,
        sigma,
        lambda: 1.0,
        detach_weights: false,
        detach_center: false,
        scope: crate::hie::HieScope::Partial,
    }
}

fn check_stretch(
    name: &'static str,
    space: Space,
    config: HieConfig,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckCase> {
    let geo = DiffSpace::new(space);
    let u0 = random_matrix(10, 3, 0.7, rng);
    let report = grad_check(
        move |_t, vars| {
            match config.space {
                HieSpace::Hyperbolic => {
                    let z = geo.exp_o_spatial(vars[0]);
                    hie_loss(&geo, HieEmbedding::Points(z), &config)
                }
                HieSpace::Tangent => hie_loss(&geo, HieEmbedding::Tangent(vars[0]), &config),
            }
        },
        &[u0],
        FD_STEP,
        LOSS_TOL,
    )?;
    Ok(GradCheckCase { name, tol_rel: LOSS_TOL, report })
}

fn check_hnn_layer(name: &'static str, space: Space, rng: &mut ChaCha8Rng) -> Result<GradCheckCase> {
    let model = space.model;
    let layers = vec![
        HypLayerParams {
            w: random_matrix(4, 3, 0.5, rng),
            b: Array1::from_shape_fn(4, |_| 0.05),
            kappa_in: Curvature::MINUS_ONE,
            kappa_out: Curvature::MINUS_ONE,
            activation: Activation::Relu,
        },
        HypLayerParams {
            w: random_matrix(2, 4, 0.5, rng),
            b: Array1::zeros(2),
            kappa_in: Curvature::MINUS_ONE,
            kappa_out: Curvature::MINUS_ONE,
            activation: Activation::Identity,
        },
    ];
    let u0 = random_matrix(8, 3, 0.5, rng);
    let w0 = layers[0].w.clone();
    let b0 = random_matrix(1, 4, 0.1, rng);
    let w1 = layers[1].w.clone();
    let b1 = random_matrix(1, 2, 0.1, rng);
    let readout = random_matrix(8, 2, 0.4, rng);
    let report = grad_check(
        move |tape, vars| {
            let geo = DiffSpace::new(space);
            let x = geo.exp_o_spatial(vars[0]);
            let lv = vec![
                DiffLayerVars { w: vars[1], b: vars[2] },
                DiffLayerVars { w: vars[3], b: vars[4] },
            ];
            let out = diff_hnn_forward(model, &layers, &lv, x, None);
            // Scalar readout over the tangent coordinates.
            let probe = tape.constant(readout.clone());
            Ok((geo.log_o_spatial(out) * probe).sum())
        },
        &[u0, w0, b0, w1, b1],
        FD_STEP,
        LAYER_TOL,
    )?;
    Ok(GradCheckCase { name, tol_rel: LAYER_TOL, report })
}

fn check_hgcn_layer(space: Space, mode: AggMode, rng: &mut ChaCha8Rng) -> Result<GradCheckCase> {
    let model = space.model;
    let graph = toy_graph();
    let neighbors = neighbor_lists_with_self(&graph);
    let labels = vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2];
    let mask = vec![true; 12];
    let attn = (mode == AggMode::Attention).then(|| AttnParams {
        a_self: Array1::from_shape_fn(4, |_| 0.2 * (rng.random::<f64>() - 0.5)),
        a_nbr: Array1::from_shape_fn(4, |_| 0.2 * (rng.random::<f64>() - 0.5)),
        bias: 0.05,
    });
    let layers = vec![HgcnLayer {
        base: HypLayerParams {
            w: random_matrix(4, 3, 0.5, rng),
            b: Array1::zeros(4),
            kappa_in: Curvature::MINUS_ONE,
            kappa_out: Curvature::MINUS_ONE,
            activation: Activation::Relu,
        },
        attn: attn.clone(),
    }];
    let features = random_matrix(12, 3, 0.5, rng);
    let w0 = layers[0].base.w.clone();
    let b0 = random_matrix(1, 4, 0.08, rng);
    let wd = random_matrix(3, 4, 0.5, rng);
    let bd = random_matrix(1, 3, 0.05, rng);
    let degree = Rc::new(agg_weights_from_neighbors(&neighbors, AggMode::Degree, None, None)?);
    let attn_edges = Rc::new(AttnEdges::from_neighbors(&neighbors));

    let name = match mode {
        AggMode::Degree => "graph_convolution_layer_degree",
        AggMode::Attention => "graph_convolution_layer_attention",
    };

    let mut params = vec![features.clone(), w0, b0, wd, bd];
    if let Some(a) = &attn {
        params.push(a.a_self.clone().into_shape_with_order((1, 4)).unwrap());
        params.push(a.a_nbr.clone().into_shape_with_order((1, 4)).unwrap());
        params.push(Array2::from_elem((1, 1), a.bias));
    }

    let report = grad_check(
        move |_t, vars| {
            let geo = DiffSpace::new(space);
            let lv = vec![DiffLayerVars { w: vars[1], b: vars[2] }];
            let agg = vec![match mode {
                AggMode::Degree => DiffAggContext::Degree(degree.clone()),
                AggMode::Attention => DiffAggContext::Attention {
                    edges: attn_edges.clone(),
                    a_self: vars[5],
                    a_nbr: vars[6],
                    bias: vars[7],
                },
            }];
            let out = diff_hgcn_forward(model, &layers, &lv, &agg, vars[0], None);
            let logits = nc_decode_diff(&geo, out, vars[3], vars[4]);
            ce_loss(logits, &labels, &mask)
        },
        &params,
        FD_STEP,
        LAYER_TOL,
    )?;
    Ok(GradCheckCase { name, tol_rel: LAYER_TOL, report })
}

/// Run the whole suite on all three models of the given curvature.
pub fn run_suite() -> Result<Vec<GradCheckCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(20240);
    let ball = Space::poincare(-1.0)?;
    let sheet = Space::lorentz(-1.0)?;
    let flat = Space::flat();

    let mut cases = Vec::new();
    cases.push(check_shallow_loss(ball, &mut rng)?);
    cases.push(check_lp_loss(sheet, &mut rng)?);
    cases.push(check_ce_loss(sheet, &mut rng)?);
    cases.push(check_stretch(
        "stretch_hyperbolic",
        ball,
        stretch_config(HieMode::Full, HieSpace::Hyperbolic, HieSigma::Tanh),
        &mut rng,
    )?);
    cases.push(check_stretch(
        "stretch_hyperbolic_lorentz",
        sheet,
        stretch_config(HieMode::Full, HieSpace::Hyperbolic, HieSigma::Tanh),
        &mut rng,
    )?);
    cases.push(check_stretch(
        "stretch_tangent",
        ball,
        stretch_config(HieMode::Full, HieSpace::Tangent, HieSigma::Tanh),
        &mut rng,
    )?);
    cases.push(check_stretch(
        "stretch_opposite",
        sheet,
        stretch_config(HieMode::Opposite, HieSpace::Hyperbolic, HieSigma::Tanh),
        &mut rng,
    )?);
    cases.push(check_stretch(
        "stretch_flat",
        flat,
        stretch_config(HieMode::Full, HieSpace::Hyperbolic, HieSigma::Identity),
        &mut rng,
    )?);
    cases.push(check_hnn_layer("feed_forward_layer_ball", ball, &mut rng)?);
    cases.push(check_hnn_layer("feed_forward_layer_sheet", sheet, &mut rng)?);
    cases.push(check_hgcn_layer(sheet, AggMode::Degree, &mut rng)?);
    cases.push(check_hgcn_layer(ball, AggMode::Attention, &mut rng)?);
    Ok(cases)
}

/// Print one line per case; returns whether everything passed.
pub fn report_suite(cases: &[GradCheckCase]) -> bool {
    let mut ok = true;
    for case in cases {
        let status = if case.passed() { "pass" } else { "FAIL" };
        println!(
            "{status}  {name:<34} max rel err {err:.3e} (tol {tol:.0e}, {n} coords)",
            name = case.name,
            err = case.report.max_rel_err,
            tol = case.tol_rel,
            n = case.report.checked,
        );
        ok &= case.passed();
    }
    ok
}
