//! Hyperbolic representation learning toolkit.
//!
//! The crate covers three layers of machinery:
//!
//! * closed-form Riemannian geometry for the Poincaré ball and Lorentz
//!   (hyperboloid) models, plus a flat Euclidean fallback so Euclidean
//!   baselines run through identical code paths ([`manifold`], [`center`]);
//! * a reverse-mode tape over dense `f64` matrices ([`autodiff`]) with
//!   differentiable manifold formulas on top ([`diffgeo`]), driving three
//!   model families — shallow embeddings, hyperbolic feed-forward networks
//!   and hyperbolic graph convolutions ([`models`]);
//! * the hyperbolic-informed-embedding losses (root alignment to the
//!   hyperbolic center plus level-aware stretching, [`hie`]), synthetic-tree
//!   benchmarks ([`graph`]), dataset plumbing ([`data`]), metrics and
//!   position-tracking diagnostics ([`eval`]), and reproducible training
//!   loops ([`trainer`]).

pub mod autodiff;
pub mod center;
pub mod data;
pub mod diffgeo;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod hie;
pub mod manifold;
pub mod models;
pub mod trainer;

pub use error::{Error, Result};
pub use manifold::{Curvature, Embedding, ManifoldPoint, Model, Space, TangentVector};
