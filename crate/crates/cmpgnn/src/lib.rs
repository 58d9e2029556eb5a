//! Cross-domain message passing GNN for unsupervised graph domain adaptation.
//!
//! Trains a node classifier on a labeled source graph and adapts it to an
//! unlabeled target graph by inserting cross-domain edges: a link predictor
//! scores candidate source/target node pairs each epoch, pairs above a fixed
//! threshold are added to a combined graph with their score as edge weight,
//! and message passing over those bridges pulls target embeddings toward the
//! source distribution. Four losses drive the joint training: supervised
//! cross-entropy on the source, prediction entropy on the target, an edge
//! reconstruction loss for the link predictor, and a contrastive mutual
//! information loss that keeps target nodes distinguishable.
//!
//! Module map:
//! - [`numkernel`]: dense/CSR kernels, reverse-mode tape, Adam, gradient checker
//! - [`graphstore`]: graphs, combined graphs, normalization, edge insertion
//! - [`csbm`]: conditional stochastic block model generator (shift benchmarks)
//! - [`model`]: shared GNN encoder, link-predictor MLP, linear classifier
//! - [`bridger`]: candidate tables, per-epoch edge selection, negative samplers
//! - [`losses`]: the four loss terms and the combined objective
//! - [`trainer`]: pre-training, the epoch loop, and the variant registry
//! - [`metrics`]: accuracy, AUROC, center distances, edge/embedding analyses
//! - [`interface`]: dataset/config file formats, result emission, checkpoints

pub mod bridger;
pub mod csbm;
pub mod error;
pub mod graphstore;
pub mod interface;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numkernel;
pub mod trainer;

pub use error::{Error, Result};
