//! Spectral and representational diagnostics for graph transformers over
//! molecular graphs.
//!
//! The pipeline: parse a molecule ([`smiles`], [`graph`]), run a toy
//! Graphormer-style network and capture every layer ([`model`]), build the
//! attention rollout and compare its eigenvectors with the graph Laplacian
//! modes ([`spectral`]), and measure expressivity, neighbour sensitivity and
//! linear decodability of the representations ([`diagnostics`]).

pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod smiles;
pub mod spectral;
pub mod verify;
pub mod weights_io;

pub use error::{Error, Result};
pub use graph::{bfs_distances, laplacian, parse_graph_json, Atom, Bond, MolecularGraph, UNREACHABLE};
pub use linalg::{eig_general, eig_symmetric, GeneralEigen, LaplacianSpectrum};
pub use model::{encode, forward, init_weights, LayerTrace, Mode, SanConfig, SanWeights};
pub use smiles::{parse_smiles, parse_smiles_corpus, CorpusEntry};
pub use spectral::{analyze, filtered_convolution, overlap_report, rollout, RolloutSpectrum, SpectralAnalysis, SpectralReport};
pub use weights_io::{load_weights, save_weights};
