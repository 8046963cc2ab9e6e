//! Model families: shallow embeddings, hyperbolic feed-forward layers,
//! hyperbolic graph convolutions, and their decoders and losses.
//!
//! Each forward operation exists twice: a plain closed-form path on
//! [`crate::manifold`] values (the reference the tests compose primitive
//! by primitive) and a tape path on [`crate::autodiff::Var`] batches that
//! training backpropagates through. The two must agree within 1e-9.

mod decoders;
mod hgcn;
mod layers;
mod shallow;

pub use decoders::{
    ce_loss, fermi_dirac, fd_prob_diff, lp_loss_diff, lp_scores, nc_decode, nc_decode_diff,
    DecoderParams, FermiDiracParams,
};
pub use hgcn::{
    agg_weights, agg_weights_from_neighbors, diff_attention_aggregate, diff_hgcn_forward,
    hgcn_forward, hyp_aggregate, lift_features, neighbor_lists_with_self, AggMode, AttnEdges,
    AttnParams, DiffAggContext, HgcnLayer,
};
pub use layers::{
    diff_hnn_forward, diff_hyp_layer, hnn_forward, hyp_activation, hyp_linear, Activation,
    DiffLayerVars, HypLayerParams,
};
pub use shallow::{sample_negatives, shallow_loss_diff, ShallowEmbedding};
