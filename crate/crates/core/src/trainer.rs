//! End-to-end training: configuration, optimizer, per-epoch loop with
//! early stopping, evaluation reports, and multi-seed sweeps.
//!
//! A run is deterministic given its config: one seeded ChaCha stream
//! drives initialization, per-epoch negative sampling and dropout in a
//! fixed order, so identical configs produce byte-identical reports.

use std::collections::{BTreeMap, HashSet};
use std::rc::Rc;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gradient, ParamSpace, Parameter, SparseRows, Tape, Var};
use crate::data::{LinkSplit, NodeScheme, NodeSplit};
use crate::diffgeo::DiffSpace;
use crate::error::{Error, Result};
use crate::eval::{
    classification_metrics, hdo_diagnostics, hierarchy_accuracy, ranking_metrics, ClassAverage,
};
use crate::graph::Graph;
use crate::hie::{combine_loss, HieConfig, HieMode, HieScope, HieSigma, HieSpace};
use crate::manifold::{Curvature, Embedding, Model, Space, BALL_EPS};
use crate::models::{
    agg_weights_from_neighbors, ce_loss, lp_loss_diff, lp_scores, nc_decode, nc_decode_diff,
    neighbor_lists_with_self, sample_negatives, shallow_loss_diff, Activation, AggMode,
    AttnEdges, DecoderParams, DiffAggContext, DiffLayerVars, FermiDiracParams, HgcnLayer,
    HypLayerParams, ShallowEmbedding,
};

/// Model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Shallow,
    Hnn,
    Hgcn,
}

impl Family {
    pub fn parse(s: &str) -> Result<Family> {
        match s {
            "shallow" => Ok(Family::Shallow),
            "hnn" => Ok(Family::Hnn),
            "hgcn" => Ok(Family::Hgcn),
            other => Err(Error::invalid(format!("unknown model family `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Shallow => "shallow",
            Family::Hnn => "hnn",
            Family::Hgcn => "hgcn",
        }
    }
}

/// Downstream task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Lp,
    Nc,
}

impl Task {
    pub fn parse(s: &str) -> Result<Task> {
        match s {
            "lp" => Ok(Task::Lp),
            "nc" => Ok(Task::Nc),
            other => Err(Error::invalid(format!("unknown task `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Lp => "lp",
            Task::Nc => "nc",
        }
    }
}

/// Full run configuration. Every field is addressable through the flat
/// `key=value` config-file format via [`TrainConfig::set`].
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub family: Family,
    pub manifold: Model,
    pub kappa: f64,
    pub task: Task,
    pub dim: usize,
    pub layers: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub hie: HieConfig,
    pub neg_samples: usize,
    pub fd: FermiDiracParams,
    pub agg: AggMode,
    pub act: Activation,
    pub nc_metric: ClassAverage,
    pub lp_ratios: (f64, f64, f64),
    pub nc_scheme: NodeScheme,
    pub init_scale: f64,
    /// Scale all features by the largest row norm before lifting
    /// (networks only); preserves relative norms while keeping the lift
    /// numerically tame.
    pub feature_norm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            family: Family::Hgcn,
            manifold: Model::Lorentz,
            kappa: -1.0,
            task: Task::Nc,
            dim: 16,
            layers: 2,
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.1,
            patience: 100,
            max_epochs: 2000,
            seed: 0,
            hie: HieConfig::default(),
            neg_samples: 10,
            fd: FermiDiracParams::default(),
            agg: AggMode::Degree,
            act: Activation::Relu,
            nc_metric: ClassAverage::Accuracy,
            lp_ratios: (0.75, 0.05, 0.20),
            nc_scheme: NodeScheme::Ratio { train: 0.70, val: 0.15, test: 0.15 },
            init_scale: 0.05,
            feature_norm: true,
        }
    }
}

impl TrainConfig {
    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let inv = |e: std::num::ParseFloatError| Error::invalid(format!("{key}: {e}"));
        let invi = |e: std::num::ParseIntError| Error::invalid(format!("{key}: {e}"));
        match key {
            "model" => self.family = Family::parse(value)?,
            "manifold" => self.manifold = Model::parse(value)?,
            "kappa" => self.kappa = value.parse().map_err(inv)?,
            "task" => self.task = Task::parse(value)?,
            "dim" => self.dim = value.parse().map_err(invi)?,
            "layers" => self.layers = value.parse().map_err(invi)?,
            "lr" => self.lr = value.parse().map_err(inv)?,
            "weight_decay" => self.weight_decay = value.parse().map_err(inv)?,
            "dropout" => self.dropout = value.parse().map_err(inv)?,
            "patience" => self.patience = value.parse().map_err(invi)?,
            "max_epochs" => self.max_epochs = value.parse().map_err(invi)?,
            "seed" => self.seed = value.parse().map_err(invi)?,
            "neg_samples" => self.neg_samples = value.parse().map_err(invi)?,
            "fd_r" => self.fd.r = value.parse().map_err(inv)?,
            "fd_t" => self.fd.t = value.parse().map_err(inv)?,
            "agg" => self.agg = AggMode::parse(value)?,
            "act" => self.act = Activation::parse(value)?,
            "nc_metric" => self.nc_metric = ClassAverage::parse(value)?,
            "init_scale" => self.init_scale = value.parse().map_err(inv)?,
            "feature_norm" => {
                self.feature_norm =
                    value.parse().map_err(|e| Error::invalid(format!("{key}: {e}")))?
            }
            "lp_ratios" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|t| t.trim().parse().map_err(inv))
                    .collect::<Result<_>>()?;
                if parts.len() != 3 {
                    return Err(Error::invalid("lp_ratios needs three comma-separated values"));
                }
                self.lp_ratios = (parts[0], parts[1], parts[2]);
            }
            "nc_ratios" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|t| t.trim().parse().map_err(inv))
                    .collect::<Result<_>>()?;
                if parts.len() != 3 {
                    return Err(Error::invalid("nc_ratios needs three comma-separated values"));
                }
                self.nc_scheme =
                    NodeScheme::Ratio { train: parts[0], val: parts[1], test: parts[2] };
            }
            "nc_per_class" => {
                self.nc_scheme = NodeScheme::PerClass { count: value.parse().map_err(invi)? }
            }
            "hie.mode" => self.hie.mode = HieMode::parse(value)?,
            "hie.space" => self.hie.space = HieSpace::parse(value)?,
            "hie.sigma" => self.hie.sigma = HieSigma::parse(value)?,
            "hie.lambda" => self.hie.lambda = value.parse().map_err(inv)?,
            "hie.detach_weights" => {
                self.hie.detach_weights =
                    value.parse().map_err(|e| Error::invalid(format!("{key}: {e}")))?
            }
            "hie.detach_center" => {
                self.hie.detach_center =
                    value.parse().map_err(|e| Error::invalid(format!("{key}: {e}")))?
            }
            "hie.scope" => self.hie.scope = HieScope::parse(value)?,
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parse a flat `key=value` config file body.
    pub fn from_str_body(body: &str) -> Result<TrainConfig> {
        let mut config = TrainConfig::default();
        for (i, line) in body.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(Error::Parse { line: i + 1, msg: "expected key=value".into() })?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Serialize as a config-file body; `from_str_body` round-trips it.
    pub fn to_file_body(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k}={v}\n"));
        kv("model", self.family.as_str().into());
        kv("manifold", self.manifold.as_str().into());
        kv("kappa", format!("{:?}", self.kappa));
        kv("task", self.task.as_str().into());
        kv("dim", self.dim.to_string());
        kv("layers", self.layers.to_string());
        kv("lr", format!("{:?}", self.lr));
        kv("weight_decay", format!("{:?}", self.weight_decay));
        kv("dropout", format!("{:?}", self.dropout));
        kv("patience", self.patience.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("seed", self.seed.to_string());
        kv("neg_samples", self.neg_samples.to_string());
        kv("fd_r", format!("{:?}", self.fd.r));
        kv("fd_t", format!("{:?}", self.fd.t));
        kv("agg", self.agg.as_str().into());
        kv(
            "act",
            match self.act {
                Activation::Relu => "relu".into(),
                Activation::Identity => "identity".into(),
            },
        );
        kv("nc_metric", self.nc_metric.as_str().into());
        kv("init_scale", format!("{:?}", self.init_scale));
        kv("feature_norm", self.feature_norm.to_string());
        kv(
            "lp_ratios",
            format!("{:?},{:?},{:?}", self.lp_ratios.0, self.lp_ratios.1, self.lp_ratios.2),
        );
        match self.nc_scheme {
            NodeScheme::Ratio { train, val, test } => {
                kv("nc_ratios", format!("{train:?},{val:?},{test:?}"))
            }
            NodeScheme::PerClass { count } => kv("nc_per_class", count.to_string()),
        }
        kv("hie.mode", self.hie.mode.as_str().into());
        kv("hie.space", self.hie.space.as_str().into());
        kv("hie.sigma", self.hie.sigma.as_str().into());
        kv("hie.lambda", format!("{:?}", self.hie.lambda));
        kv("hie.detach_weights", self.hie.detach_weights.to_string());
        kv("hie.detach_center", self.hie.detach_center.to_string());
        kv("hie.scope", self.hie.scope.as_str().into());
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim must be >= 1"));
        }
        if self.fd.t <= 0.0 {
            return Err(Error::invalid("fd_t must be > 0"));
        }
        if self.manifold != Model::Flat && self.kappa >= 0.0 {
            return Err(Error::invalid("kappa must be negative for hyperbolic manifolds"));
        }
        if self.hie.lambda < 0.0 {
            return Err(Error::invalid("hie.lambda must be >= 0"));
        }
        match (self.family, self.task) {
            (Family::Shallow, Task::Nc) => {
                Err(Error::invalid("shallow models support the lp task only"))
            }
            (Family::Hnn, Task::Lp) => Err(Error::invalid("hnn supports the nc task only")),
            _ => Ok(()),
        }
    }

    pub fn space(&self) -> Result<Space> {
        Space::new(self.manifold, self.kappa)
    }

    fn curvature(&self) -> Result<Curvature> {
        match self.manifold {
            Model::Flat => Curvature::new(-1.0), // carried but unused by flat ops
            _ => Curvature::new(self.kappa),
        }
    }
}

/// Task-matching split.
#[derive(Debug, Clone)]
pub enum Split {
    Link(LinkSplit),
    Node(NodeSplit),
}

impl Split {
    /// Build the split the config's task needs.
    pub fn for_config(config: &TrainConfig, graph: &Graph) -> Result<Split> {
        match config.task {
            Task::Lp => Ok(Split::Link(crate::data::split_links(
                graph,
                config.lp_ratios,
                config.seed,
            )?)),
            Task::Nc => {
                Ok(Split::Node(crate::data::split_nodes(graph, config.nc_scheme, config.seed)?))
            }
        }
    }
}

/// One history row per epoch.
#[derive(Debug, Clone, Serialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub total_loss: f64,
    pub val_metric: f64,
}

/// Training artifacts: best-validation parameters, the embedding they
/// produce (aligned when the config's scope replaces the task embedding),
/// and the per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub embedding: Embedding,
    pub params: Vec<Parameter>,
    pub history: Vec<HistoryRow>,
    pub best_epoch: usize,
    pub best_val: f64,
}

/// Fixed-order metric map plus the HDO summary block.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub task: String,
    pub model: String,
    pub manifold: String,
    pub dim: usize,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub hdo_stats: HdoSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HdoSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub root: f64,
}

struct Assembly {
    /// Layer templates; weight/bias values live in the parameter list.
    layers: Vec<HgcnLayer>,
    features: Option<Array2<f64>>,
    shallow: Option<ShallowEmbedding>,
    decoder_classes: Option<usize>,
    degree_weights: Option<Rc<SparseRows>>,
    attn_edges: Option<Rc<AttnEdges>>,
    params: Vec<Parameter>,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
}

fn build_assembly(
    config: &TrainConfig,
    graph: &Graph,
    train_graph: &Graph,
    rng: &mut ChaCha8Rng,
) -> Result<Assembly> {
    let space = config.space()?;
    let kappa = config.curvature()?;
    match config.family {
        Family::Shallow => {
            let shallow = ShallowEmbedding::init(space, graph.n, config.dim, config.init_scale, rng);
            let params = vec![shallow.table.clone()];
            Ok(Assembly {
                layers: Vec::new(),
                features: None,
                shallow: Some(shallow),
                decoder_classes: None,
                degree_weights: None,
                attn_edges: None,
                params,
            })
        }
        Family::Hnn | Family::Hgcn => {
            let mut features = graph
                .features
                .clone()
                .ok_or_else(|| Error::invalid("network families need node features"))?;
            if config.feature_norm {
                let max_norm = features
                    .rows()
                    .into_iter()
                    .map(|r| r.dot(&r).sqrt())
                    .fold(0.0f64, f64::max);
                if max_norm > 1e-12 {
                    features.mapv_inplace(|v| v / max_norm);
                }
            }
            let f_dim = features.ncols();
            let mut layers = Vec::new();
            let mut params = Vec::new();
            let mut d_in = f_dim;
            for li in 0..config.layers {
                let d_out = config.dim;
                let w = glorot(d_out, d_in, rng);
                params.push(Parameter::new(format!("w{li}"), w.clone(), ParamSpace::Euclidean));
                params.push(Parameter::new(
                    format!("b{li}"),
                    Array2::zeros((1, d_out)),
                    ParamSpace::TangentAtOrigin,
                ));
                let attn = if config.family == Family::Hgcn && config.agg == AggMode::Attention {
                    params.push(Parameter::new(
                        format!("attn_self{li}"),
                        Array2::zeros((1, d_out)),
                        ParamSpace::Euclidean,
                    ));
                    params.push(Parameter::new(
                        format!("attn_nbr{li}"),
                        Array2::zeros((1, d_out)),
                        ParamSpace::Euclidean,
                    ));
                    params.push(Parameter::new(
                        format!("attn_bias{li}"),
                        Array2::zeros((1, 1)),
                        ParamSpace::Euclidean,
                    ));
                    Some(crate::models::AttnParams::zeros(d_out))
                } else {
                    None
                };
                layers.push(HgcnLayer {
                    base: HypLayerParams {
                        w,
                        b: Array1::zeros(d_out),
                        kappa_in: kappa,
                        kappa_out: kappa,
                        activation: config.act,
                    },
                    attn,
                });
                d_in = d_out;
            }
            let decoder_classes = match config.task {
                Task::Nc => {
                    let labels = graph
                        .labels
                        .as_ref()
                        .ok_or_else(|| Error::invalid("nc task needs labels"))?;
                    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
                    params.push(Parameter::new(
                        "decoder_w",
                        glorot(classes, config.dim, rng),
                        ParamSpace::Euclidean,
                    ));
                    params.push(Parameter::new(
                        "decoder_b",
                        Array2::zeros((1, classes)),
                        ParamSpace::Euclidean,
                    ));
                    Some(classes)
                }
                Task::Lp => None,
            };
            let (degree_weights, attn_edges) = if config.family == Family::Hgcn {
                let neighbors = neighbor_lists_with_self(train_graph);
                match config.agg {
                    AggMode::Degree => (
                        Some(Rc::new(agg_weights_from_neighbors(
                            &neighbors,
                            AggMode::Degree,
                            None,
                            None,
                        )?)),
                        None,
                    ),
                    AggMode::Attention => {
                        (None, Some(Rc::new(AttnEdges::from_neighbors(&neighbors))))
                    }
                }
            } else {
                (None, None)
            };
            Ok(Assembly {
                layers,
                features: Some(features),
                shallow: None,
                decoder_classes,
                degree_weights,
                attn_edges,
                params,
            })
        }
    }
}

impl Assembly {
    fn decoder_param_offset(&self) -> usize {
        self.params.len() - if self.decoder_classes.is_some() { 2 } else { 0 }
    }

    /// Forward pass to final-layer points on the tape. `leaves` mirrors
    /// `self.params` order.
    fn forward<'t>(
        &self,
        config: &TrainConfig,
        tape: &'t Tape,
        leaves: &[Var<'t>],
        dropout_masks: Option<&[Array2<f64>]>,
    ) -> Result<Var<'t>> {
        let space = config.space()?;
        let geo = DiffSpace::new(space);
        match config.family {
            Family::Shallow => {
                let shallow = self.shallow.as_ref().expect("shallow assembly");
                Ok(shallow.decode(&geo, leaves[0]))
            }
            Family::Hnn => {
                let features = tape.constant(self.features.clone().expect("features"));
                let vars = self.layer_vars(leaves);
                let base: Vec<HypLayerParams> =
                    self.layers.iter().map(|l| l.base.clone()).collect();
                let lifted = geo.exp_o_spatial(features);
                Ok(crate::models::diff_hnn_forward(
                    config.manifold,
                    &base,
                    &vars,
                    lifted,
                    dropout_masks,
                ))
            }
            Family::Hgcn => {
                let features = tape.constant(self.features.clone().expect("features"));
                let vars = self.layer_vars(leaves);
                let aggs = self.agg_contexts(config, leaves);
                Ok(crate::models::diff_hgcn_forward(
                    config.manifold,
                    &self.layers,
                    &vars,
                    &aggs,
                    features,
                    dropout_masks,
                ))
            }
        }
    }

    fn params_per_layer(&self, config: &TrainConfig) -> usize {
        if config.family == Family::Hgcn && config.agg == AggMode::Attention {
            5
        } else {
            2
        }
    }

    fn layer_vars<'t>(&self, leaves: &[Var<'t>]) -> Vec<DiffLayerVars<'t>> {
        let stride = if self.attn_edges.is_some() { 5 } else { 2 };
        (0..self.layers.len())
            .map(|li| DiffLayerVars { w: leaves[li * stride], b: leaves[li * stride + 1] })
            .collect()
    }

    fn agg_contexts<'t>(&self, config: &TrainConfig, leaves: &[Var<'t>]) -> Vec<DiffAggContext<'t>> {
        let stride = self.params_per_layer(config);
        (0..self.layers.len())
            .map(|li| match config.agg {
                AggMode::Degree => {
                    DiffAggContext::Degree(self.degree_weights.clone().expect("degree weights"))
                }
                AggMode::Attention => DiffAggContext::Attention {
                    edges: self.attn_edges.clone().expect("attention edges"),
                    a_self: leaves[li * stride + 2],
                    a_nbr: leaves[li * stride + 3],
                    bias: leaves[li * stride + 4],
                },
            })
            .collect()
    }
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const GRAD_CLIP: f64 = 10.0;

impl Adam {
    fn new(params: &[Parameter]) -> Adam {
        Adam {
            m: params.iter().map(|p| Array2::zeros(p.value.dim())).collect(),
            v: params.iter().map(|p| Array2::zeros(p.value.dim())).collect(),
            t: 0,
        }
    }

    /// Euclidean Adam for euclidean/tangent parameters; Riemannian scaled
    /// step plus ball projection for Poincaré tables. Gradients are
    /// clipped at global norm 10 first.
    fn step(&mut self, config: &TrainConfig, params: &mut [Parameter], grads: &[Array2<f64>]) {
        let total_sq: f64 = grads.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum();
        let scale = if total_sq.sqrt() > GRAD_CLIP { GRAD_CLIP / total_sq.sqrt() } else { 1.0 };
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (i, p) in params.iter_mut().enumerate() {
            let mut g = &grads[i] * scale;
            match p.space {
                ParamSpace::RiemannianPoincare => {
                    // Inverse conformal metric (1 + kappa ||x||^2)^2 / 4.
                    let kappa = config.kappa;
                    for (mut row, grow) in
                        p.value.rows_mut().into_iter().zip(g.rows())
                    {
                        let sq: f64 = row.dot(&row);
                        let factor = (1.0 + kappa * sq).powi(2) / 4.0;
                        row.scaled_add(-config.lr * factor, &grow);
                        // Ball projection.
                        let norm = row.dot(&row).sqrt();
                        let max_norm = (1.0 - BALL_EPS) / (-kappa).sqrt();
                        if norm > max_norm {
                            row.mapv_inplace(|v| v * (max_norm / norm));
                        }
                    }
                }
                ParamSpace::Euclidean | ParamSpace::TangentAtOrigin => {
                    // Decay weight matrices only; biases and embedding
                    // tables stay unregularized.
                    let decayed = p.name.starts_with('w') || p.name == "decoder_w";
                    if config.weight_decay > 0.0 && decayed {
                        g.scaled_add(config.weight_decay, &p.value);
                    }
                    self.m[i].zip_mut_with(&g, |m, &gv| {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * gv
                    });
                    self.v[i].zip_mut_with(&g, |v, &gv| {
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * gv * gv
                    });
                    for ((pv, m), v) in
                        p.value.iter_mut().zip(self.m[i].iter()).zip(self.v[i].iter())
                    {
                        let m_hat = m / bc1;
                        let v_hat = v / bc2;
                        *pv -= config.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Graph whose edges are the training positives (message passing must not
/// see validation/test edges in link prediction).
fn training_graph(graph: &Graph, split: &Split) -> Graph {
    match split {
        Split::Node(_) => graph.clone(),
        Split::Link(ls) => {
            let mut g = graph.clone();
            g.edges = ls.train_pos.clone();
            g
        }
    }
}

fn sample_lp_negatives(
    n: usize,
    count: usize,
    forbidden: &HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if !forbidden.contains(&key) {
            out.push(key);
        }
    }
    out
}

fn dropout_masks(
    config: &TrainConfig,
    assembly: &Assembly,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Array2<f64>>> {
    if config.dropout <= 0.0 || assembly.layers.is_empty() {
        return None;
    }
    let keep = 1.0 - config.dropout;
    let masks = assembly
        .layers
        .iter()
        .map(|l| {
            Array2::from_shape_fn((n, l.base.d_in()), |_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        })
        .collect();
    Some(masks)
}

fn validation_metric(
    config: &TrainConfig,
    graph: &Graph,
    split: &Split,
    emb: &Embedding,
    params: &[Parameter],
    decoder_offset: usize,
) -> Result<f64> {
    match split {
        Split::Link(ls) => {
            let pos = lp_scores(emb, &ls.val_pos, &config.fd)?;
            let neg = lp_scores(emb, &ls.val_neg, &config.fd)?;
            Ok(ranking_metrics(&pos, &neg)?.0)
        }
        Split::Node(ns) => {
            let labels = graph.labels.as_ref().expect("labels checked at build");
            let decoder = DecoderParams {
                w: params[decoder_offset].value.clone(),
                b: params[decoder_offset + 1]
                    .value
                    .row(0)
                    .to_owned(),
            };
            let logits = nc_decode(emb, &decoder)?;
            let pred: Vec<usize> = logits
                .rows()
                .into_iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                        .map(|(i, _)| i)
                        .unwrap_or(0)
                })
                .collect();
            classification_metrics(&pred, labels, &ns.val_mask, config.nc_metric)
        }
    }
}

/// Train one model; returns the best-validation checkpoint.
pub fn train(config: &TrainConfig, graph: &Graph, split: &Split) -> Result<TrainOutput> {
    train_observed(config, graph, split, |_, _| {})
}

/// [`train`] with a per-epoch observer for position tracking: the callback
/// sees the epoch index and the embedding snapshot the task loss saw.
pub fn train_observed(
    config: &TrainConfig,
    graph: &Graph,
    split: &Split,
    mut observer: impl FnMut(usize, &Embedding),
) -> Result<TrainOutput> {
    config.validate()?;
    match (config.task, split) {
        (Task::Lp, Split::Link(_)) | (Task::Nc, Split::Node(_)) => {}
        _ => return Err(Error::invalid("split kind does not match the task")),
    }
    let space = config.space()?;
    let geo = DiffSpace::new(space);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train_graph = training_graph(graph, split);
    let mut assembly = build_assembly(config, graph, &train_graph, &mut rng)?;

    let full_adjacency = graph.adjacency();
    let edge_set: HashSet<(usize, usize)> =
        graph.edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();

    let labels = graph.labels.clone();
    let mut optimizer = Adam::new(&assembly.params);
    let mut history = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = assembly.params.clone();
    let mut since_best = 0usize;
    let decoder_offset = assembly.decoder_param_offset();

    for epoch in 0..config.max_epochs {
        // Per-epoch stochastic inputs, drawn in fixed order.
        let masks = dropout_masks(config, &assembly, graph.n, &mut rng);
        let (shallow_negs, lp_negs) = match (config.family, split) {
            (Family::Shallow, Split::Link(ls)) => (
                Some(sample_negatives(
                    &full_adjacency,
                    &ls.train_pos,
                    config.neg_samples,
                    &mut rng,
                )),
                None,
            ),
            (_, Split::Link(ls)) => (
                None,
                Some(sample_lp_negatives(graph.n, ls.train_pos.len(), &edge_set, &mut rng)),
            ),
            _ => (None, None),
        };

        let tape = Tape::new();
        let leaves: Vec<Var> =
            assembly.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        let z = assembly.forward(config, &tape, &leaves, masks.as_deref())?;

        let task_fn = |points| {
            match split {
                Split::Link(ls) => match config.family {
                    Family::Shallow => shallow_loss_diff(
                        &geo,
                        points,
                        &ls.train_pos,
                        shallow_negs.as_ref().expect("negatives sampled"),
                    ),
                    _ => lp_loss_diff(
                        &geo,
                        points,
                        &ls.train_pos,
                        lp_negs.as_ref().expect("negatives sampled"),
                        &config.fd,
                    ),
                },
                Split::Node(ns) => {
                    let logits = nc_decode_diff(
                        &geo,
                        points,
                        leaves[decoder_offset],
                        leaves[decoder_offset + 1],
                    );
                    ce_loss(logits, labels.as_ref().expect("labels"), &ns.train_mask)
                }
            }
        };

        let (total, out_points) = combine_loss(&geo, task_fn, z, &config.hie)?;
        let total_value = total.scalar_value();
        if total_value.is_nan() {
            return Err(Error::NanLoss(epoch));
        }
        if total_value > 1e6 {
            return Err(Error::Diverged(epoch, total_value));
        }

        // Validate the exact state that produced this epoch's forward pass,
        // then update.
        let emb_snapshot = Embedding::new(space, out_points.value());
        observer(epoch, &emb_snapshot);
        let val =
            validation_metric(config, graph, split, &emb_snapshot, &assembly.params, decoder_offset)?;
        history.push(HistoryRow { epoch, total_loss: total_value, val_metric: val });

        // Ties go to the later epoch: among equally good checkpoints,
        // prefer the most-trained one.
        if val >= best_val {
            best_val = val;
            best_epoch = epoch;
            best_params = assembly.params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }

        let grads = gradient(total, &leaves)?;
        optimizer.step(config, &mut assembly.params, &grads);
    }

    assembly.params = best_params;
    let embedding = final_embedding(config, &assembly)?;
    Ok(TrainOutput { embedding, params: assembly.params.clone(), history, best_epoch, best_val })
}

/// The embedding the trained model exposes: forward pass without dropout,
/// root-aligned when the config replaces the task embedding.
fn final_embedding(config: &TrainConfig, assembly: &Assembly) -> Result<Embedding> {
    let space = config.space()?;
    let geo = DiffSpace::new(space);
    let tape = Tape::new();
    let leaves: Vec<Var> = assembly.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
    let z = assembly.forward(config, &tape, &leaves, None)?;
    let out = if config.hie.whole_alignment() {
        let (_, aligned) = combine_loss(&geo, |_| Ok(tape.scalar(0.0)), z, &config.hie)?;
        aligned
    } else {
        z
    };
    Ok(Embedding::new(space, out.value()))
}

/// Recompute the artifact embedding from stored parameters.
pub fn embed(config: &TrainConfig, graph: &Graph, split: &Split, params: Vec<Parameter>) -> Result<Embedding> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train_graph = training_graph(graph, split);
    let mut assembly = build_assembly(config, graph, &train_graph, &mut rng)?;
    if params.len() != assembly.params.len() {
        return Err(Error::invalid("stored parameter count does not match the config"));
    }
    for (slot, stored) in assembly.params.iter_mut().zip(params) {
        if slot.value.dim() != stored.value.dim() {
            return Err(Error::invalid(format!("parameter `{}` shape mismatch", slot.name)));
        }
        slot.value = stored.value;
    }
    final_embedding(config, &assembly)
}

/// Task metrics plus position diagnostics on trained artifacts.
pub fn evaluate(
    config: &TrainConfig,
    graph: &Graph,
    split: &Split,
    output: &TrainOutput,
) -> Result<MetricsReport> {
    let emb = &output.embedding;
    let mut metrics = BTreeMap::new();
    match split {
        Split::Link(ls) => {
            let pos = lp_scores(emb, &ls.test_pos, &config.fd)?;
            let neg = lp_scores(emb, &ls.test_neg, &config.fd)?;
            let (auc, ap) = ranking_metrics(&pos, &neg)?;
            metrics.insert("auc".into(), auc);
            metrics.insert("ap".into(), ap);
        }
        Split::Node(ns) => {
            let labels = graph.labels.as_ref().ok_or_else(|| Error::invalid("labels missing"))?;
            let decoder_offset = output.params.len() - 2;
            let decoder = DecoderParams {
                w: output.params[decoder_offset].value.clone(),
                b: output.params[decoder_offset + 1].value.row(0).to_owned(),
            };
            let logits = nc_decode(emb, &decoder)?;
            let pred: Vec<usize> = logits
                .rows()
                .into_iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                        .map(|(i, _)| i)
                        .unwrap_or(0)
                })
                .collect();
            let value = classification_metrics(&pred, labels, &ns.test_mask, config.nc_metric)?;
            metrics.insert(config.nc_metric.as_str().to_string(), value);
        }
    }
    if let Some(depth) = &graph.depth {
        metrics.insert(
            "hierarchy_accuracy".into(),
            hierarchy_accuracy(emb, depth, 5000, config.seed)?,
        );
    }
    let diag = hdo_diagnostics(emb, 50)?;
    Ok(MetricsReport {
        task: config.task.as_str().into(),
        model: config.family.as_str().into(),
        manifold: config.manifold.as_str().into(),
        dim: config.dim,
        seed: config.seed,
        metrics,
        hdo_stats: HdoSummary {
            min: diag.hdo.min,
            max: diag.hdo.max,
            mean: diag.hdo.mean,
            root: diag.hdo.root,
        },
    })
}

/// Multi-seed sweep result with trimmed-mean aggregation (drop one max and
/// one min per metric when three or more runs exist).
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<MetricsReport>,
    pub aggregate: BTreeMap<String, f64>,
}

pub fn trimmed_mean(values: &[f64]) -> f64 {
    if values.len() >= 3 {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
        let kept = &sorted[1..sorted.len() - 1];
        kept.iter().sum::<f64>() / kept.len() as f64
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Run one config across seeds; each run derives its own split and stream.
pub fn sweep(base: &TrainConfig, graph: &Graph, seeds: &[u64]) -> Result<SweepSummary> {
    if seeds.is_empty() {
        return Err(Error::invalid("sweep needs at least one seed"));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut config = base.clone();
        config.seed = seed;
        let split = Split::for_config(&config, graph)?;
        let output = train(&config, graph, &split)?;
        per_seed.push(evaluate(&config, graph, &split, &output)?);
    }
    let mut aggregate = BTreeMap::new();
    for key in per_seed[0].metrics.keys() {
        let values: Vec<f64> =
            per_seed.iter().filter_map(|r| r.metrics.get(key).copied()).collect();
        aggregate.insert(key.clone(), trimmed_mean(&values));
    }
    let hdo_means: Vec<f64> = per_seed.iter().map(|r| r.hdo_stats.mean).collect();
    aggregate.insert("hdo_mean".into(), trimmed_mean(&hdo_means));
    Ok(SweepSummary { seeds: seeds.to_vec(), per_seed, aggregate })
}
