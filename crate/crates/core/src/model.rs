//! A toy Graphormer-style self-attention network over molecular graphs.
//!
//! Tokens are atoms (optionally preceded by a class token). Each token's
//! input embedding is the sum of an atom-type embedding and a centrality
//! embedding indexed by explicit degree plus implicit hydrogens. Attention
//! logits carry a learned per-head bias indexed by the clipped topological
//! distance between the two tokens. There is no edge encoder.
//!
//! Two forward modes are available:
//!
//! * [`Mode::Full`]: pre-norm multi-head attention with projection and skip,
//!   followed by a pre-norm GELU feed-forward block (width `2 d`) with skip.
//! * [`Mode::Proxy`]: attention computed the same way, heads averaged into
//!   one matrix `A_l`, and the update `X_l = X_{l-1} + A_l X_{l-1}`.
//!
//! Every forward pass returns a [`LayerTrace`] with all token matrices and all
//! per-head attention matrices.

use ndarray::{s, Array1, Array2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{bfs_distances, MolecularGraph, UNREACHABLE};

/// Atom-type vocabulary. The trailing mask token has an embedding row but is
/// never produced by [`encode`].
pub const VOCABULARY: [&str; 11] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I", "<mask>"];
pub const MASK_TOKEN: usize = 10;

/// Largest centrality index; higher degree + hydrogen counts are clipped.
pub const MAX_CENTRALITY: usize = 7;

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Full,
    Proxy,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "proxy" => Ok(Mode::Proxy),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanConfig {
    pub layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub max_dist: usize,
    pub include_class_token: bool,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for SanConfig {
    fn default() -> Self {
        SanConfig::toy()
    }
}

impl SanConfig {
    /// Small configuration used by tests and the demo pipeline.
    pub fn toy() -> Self {
        SanConfig {
            layers: 4,
            dim: 32,
            heads: 4,
            max_dist: 8,
            include_class_token: false,
            mode: Mode::Full,
            seed: 0,
        }
    }

    /// 20 layers, width 256, 32 heads (feed-forward width 512).
    pub fn large() -> Self {
        SanConfig {
            layers: 20,
            dim: 256,
            heads: 32,
            ..SanConfig::toy()
        }
    }

    /// Zero layers are allowed and give the identity network.
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.dim < self.heads {
            return Err(Error::InvalidArgument(format!(
                "need dim >= heads >= 1 (dim {}, heads {})",
                self.dim, self.heads
            )));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidArgument(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.max_dist == 0 {
            return Err(Error::InvalidArgument("max_dist must be >= 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn ff_dim(&self) -> usize {
        2 * self.dim
    }

    /// Distances `0..=max_dist` plus the class-link and unreachable codes.
    pub fn bias_codes(&self) -> usize {
        self.max_dist + 3
    }

    pub fn class_code(&self) -> usize {
        self.max_dist + 1
    }

    pub fn unreachable_code(&self) -> usize {
        self.max_dist + 2
    }

    /// Hash of the shape-defining and behavioural fields.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub query: Array2<f64>,
    pub key: Array2<f64>,
    pub value: Array2<f64>,
    pub projection: Array2<f64>,
    pub ff_in: Array2<f64>,
    pub ff_in_bias: Array1<f64>,
    pub ff_out: Array2<f64>,
    pub ff_out_bias: Array1<f64>,
    pub norm1_gain: Array1<f64>,
    pub norm1_bias: Array1<f64>,
    pub norm2_gain: Array1<f64>,
    pub norm2_bias: Array1<f64>,
    /// `heads x bias_codes`
    pub distance_bias: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanWeights {
    pub config: SanConfig,
    pub atom_embedding: Array2<f64>,
    pub centrality_embedding: Array2<f64>,
    pub class_embedding: Array1<f64>,
    pub layers: Vec<LayerWeights>,
}

/// A named tensor in canonical order, flattened row-major.
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Box<dyn Iterator<Item = f64> + 'a>,
}

fn matrix_view<'a>(name: String, m: &'a Array2<f64>) -> TensorView<'a> {
    TensorView {
        name,
        shape: m.shape().to_vec(),
        data: Box::new(m.iter().copied()),
    }
}

fn vector_view<'a>(name: String, v: &'a Array1<f64>) -> TensorView<'a> {
    TensorView {
        name,
        shape: v.shape().to_vec(),
        data: Box::new(v.iter().copied()),
    }
}

type TensorSource<'a> = dyn FnMut(&str, &[usize]) -> Result<Vec<f64>> + 'a;

fn take_matrix(source: &mut TensorSource<'_>, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let data = source(name, &[rows, cols])?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Schema(format!("{name}: {e}")))
}

fn take_vector(source: &mut TensorSource<'_>, name: &str, len: usize) -> Result<Array1<f64>> {
    let data = source(name, &[len])?;
    if data.len() != len {
        return Err(Error::Schema(format!("{name}: expected {len} values")));
    }
    Ok(Array1::from(data))
}

impl SanWeights {
    /// All tensors in canonical order (the order used for hashing and saving).
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = vec![
            matrix_view("atom_embedding".into(), &self.atom_embedding),
            matrix_view("centrality_embedding".into(), &self.centrality_embedding),
            vector_view("class_embedding".into(), &self.class_embedding),
        ];
        for (l, w) in self.layers.iter().enumerate() {
            let p = |n: &str| format!("layers.{l}.{n}");
            out.push(matrix_view(p("query"), &w.query));
            out.push(matrix_view(p("key"), &w.key));
            out.push(matrix_view(p("value"), &w.value));
            out.push(matrix_view(p("projection"), &w.projection));
            out.push(matrix_view(p("ff_in"), &w.ff_in));
            out.push(vector_view(p("ff_in_bias"), &w.ff_in_bias));
            out.push(matrix_view(p("ff_out"), &w.ff_out));
            out.push(vector_view(p("ff_out_bias"), &w.ff_out_bias));
            out.push(vector_view(p("norm1_gain"), &w.norm1_gain));
            out.push(vector_view(p("norm1_bias"), &w.norm1_bias));
            out.push(vector_view(p("norm2_gain"), &w.norm2_gain));
            out.push(vector_view(p("norm2_bias"), &w.norm2_bias));
            out.push(matrix_view(p("distance_bias"), &w.distance_bias));
        }
        out
    }

    /// Expected `(name, shape)` pairs for a configuration, in canonical order.
    pub fn expected_shapes(cfg: &SanConfig) -> Vec<(String, Vec<usize>)> {
        let d = cfg.dim;
        let f = cfg.ff_dim();
        let mut out = vec![
            ("atom_embedding".to_string(), vec![VOCABULARY.len(), d]),
            ("centrality_embedding".to_string(), vec![MAX_CENTRALITY + 1, d]),
            ("class_embedding".to_string(), vec![d]),
        ];
        for l in 0..cfg.layers {
            let p = |n: &str| format!("layers.{l}.{n}");
            out.extend([
                (p("query"), vec![d, d]),
                (p("key"), vec![d, d]),
                (p("value"), vec![d, d]),
                (p("projection"), vec![d, d]),
                (p("ff_in"), vec![d, f]),
                (p("ff_in_bias"), vec![f]),
                (p("ff_out"), vec![f, d]),
                (p("ff_out_bias"), vec![d]),
                (p("norm1_gain"), vec![d]),
                (p("norm1_bias"), vec![d]),
                (p("norm2_gain"), vec![d]),
                (p("norm2_bias"), vec![d]),
                (p("distance_bias"), vec![cfg.heads, cfg.bias_codes()]),
            ]);
        }
        out
    }

    /// Rebuild weights from flattened tensors given in canonical order.
    pub fn from_flat(config: SanConfig, mut tensors: impl FnMut(&str, &[usize]) -> Result<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let f = config.ff_dim();
        let atom_embedding = take_matrix(&mut tensors, "atom_embedding", VOCABULARY.len(), d)?;
        let centrality_embedding = take_matrix(&mut tensors, "centrality_embedding", MAX_CENTRALITY + 1, d)?;
        let class_embedding = take_vector(&mut tensors, "class_embedding", d)?;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let mut get = |n: &str, shape: &[usize]| tensors(&format!("layers.{l}.{n}"), shape);
            layers.push(LayerWeights {
                query: take_matrix(&mut get, "query", d, d)?,
                key: take_matrix(&mut get, "key", d, d)?,
                value: take_matrix(&mut get, "value", d, d)?,
                projection: take_matrix(&mut get, "projection", d, d)?,
                ff_in: take_matrix(&mut get, "ff_in", d, f)?,
                ff_in_bias: take_vector(&mut get, "ff_in_bias", f)?,
                ff_out: take_matrix(&mut get, "ff_out", f, d)?,
                ff_out_bias: take_vector(&mut get, "ff_out_bias", d)?,
                norm1_gain: take_vector(&mut get, "norm1_gain", d)?,
                norm1_bias: take_vector(&mut get, "norm1_bias", d)?,
                norm2_gain: take_vector(&mut get, "norm2_gain", d)?,
                norm2_bias: take_vector(&mut get, "norm2_bias", d)?,
                distance_bias: take_matrix(&mut get, "distance_bias", config.heads, config.bias_codes())?,
            });
        }
        let w = SanWeights {
            config,
            atom_embedding,
            centrality_embedding,
            class_embedding,
            layers,
        };
        if w.tensors().into_iter().any(|mut t| t.data.any(|v| !v.is_finite())) {
            return Err(Error::Schema("weights contain non-finite values".into()));
        }
        Ok(w)
    }

    /// SHA-256 over the configuration and every tensor value (little-endian bits).
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(&self.config).expect("config serializes").as_bytes());
        for t in self.tensors() {
            hasher.update(t.name.as_bytes());
            for v in t.data {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Seeded initialization: every matrix, embedding and bias entry is uniform in
/// `[-1/sqrt(d), 1/sqrt(d)]`; normalization gains start at 1 and offsets at 0.
pub fn init_weights(cfg: &SanConfig) -> Result<SanWeights> {
    cfg.validate()?;
    let bound = 1.0 / (cfg.dim as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    SanWeights::from_flat(cfg.clone(), |name, shape| {
        let len = shape.iter().product();
        if name.contains("norm") {
            let fill = if name.ends_with("gain") { 1.0 } else { 0.0 };
            Ok(vec![fill; len])
        } else {
            Ok((0..len).map(|_| dist.sample(&mut rng)).collect())
        }
    })
}

fn vocab_index(element: &str) -> Result<usize> {
    VOCABULARY[..MASK_TOKEN]
        .iter()
        .position(|&v| v == element)
        .ok_or_else(|| Error::Vocab(element.to_string()))
}

/// Input token matrix `X_0`: atom-type plus centrality embedding per atom,
/// with the class-token embedding prepended as row 0 when enabled.
pub fn encode(g: &MolecularGraph, w: &SanWeights, cfg: &SanConfig) -> Result<Array2<f64>> {
    check_compatible(w, cfg)?;
    let offset = usize::from(cfg.include_class_token);
    let n = g.node_count() + offset;
    let mut x = Array2::<f64>::zeros((n, cfg.dim));
    if cfg.include_class_token {
        x.row_mut(0).assign(&w.class_embedding);
    }
    for (i, atom) in g.atoms().iter().enumerate() {
        let t = vocab_index(&atom.element)?;
        let c = (g.degree(i) + atom.implicit_h as usize).min(MAX_CENTRALITY);
        let mut row = x.row_mut(i + offset);
        row.assign(&w.atom_embedding.row(t));
        row += &w.centrality_embedding.row(c);
    }
    Ok(x)
}

/// Bias-table index for every token pair.
pub fn attention_codes(g: &MolecularGraph, cfg: &SanConfig) -> Array2<usize> {
    let dist = bfs_distances(g);
    let offset = usize::from(cfg.include_class_token);
    let n = g.node_count() + offset;
    let mut codes = Array2::<usize>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            codes[[i, j]] = if offset == 1 && (i == 0 || j == 0) {
                if i == j {
                    0
                } else {
                    cfg.class_code()
                }
            } else {
                let d = dist[[i - offset, j - offset]];
                if d == UNREACHABLE {
                    cfg.unreachable_code()
                } else {
                    (d as usize).min(cfg.max_dist)
                }
            };
        }
    }
    codes
}

fn check_compatible(w: &SanWeights, cfg: &SanConfig) -> Result<()> {
    cfg.validate()?;
    let a = &w.config;
    if a.dim != cfg.dim || a.heads != cfg.heads || a.layers != cfg.layers || a.max_dist != cfg.max_dist {
        return Err(Error::Dim(format!(
            "weights shaped for layers={} dim={} heads={} max_dist={}, config asks layers={} dim={} heads={} max_dist={}",
            a.layers, a.dim, a.heads, a.max_dist, cfg.layers, cfg.dim, cfg.heads, cfg.max_dist
        )));
    }
    Ok(())
}

/// Token matrices `X_0..X_L` and per-layer, per-head attention `A_1..A_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub states: Vec<Array2<f64>>,
    /// `attention[l][h]` is head `h` of layer `l + 1`.
    pub attention: Vec<Vec<Array2<f64>>>,
    pub has_class_token: bool,
}

impl LayerTrace {
    pub fn layers(&self) -> usize {
        self.attention.len()
    }

    pub fn tokens(&self) -> usize {
        self.states[0].nrows()
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.states[0]
    }

    pub fn output(&self) -> &Array2<f64> {
        self.states.last().expect("trace holds X_0")
    }

    /// Head-averaged attention of layer `layer` (1-based, as in `A_l`).
    pub fn head_mean(&self, layer: usize) -> Array2<f64> {
        mean_of(&self.attention[layer - 1])
    }

    /// Rows of `X_l` belonging to atoms (class token dropped if present).
    pub fn atom_states(&self, layer: usize) -> Array2<f64> {
        let offset = usize::from(self.has_class_token);
        self.states[layer].slice(s![offset.., ..]).to_owned()
    }

    /// Build a proxy-mode trace from externally supplied attention matrices:
    /// `X_l = X_{l-1} + A_l X_{l-1}`. Each matrix must be `n x n`.
    pub fn proxy_from_attention(x0: Array2<f64>, attention: Vec<Array2<f64>>, has_class_token: bool) -> Result<Self> {
        let n = x0.nrows();
        let mut states = vec![x0];
        for (l, a) in attention.iter().enumerate() {
            if a.dim() != (n, n) {
                return Err(Error::Dim(format!(
                    "attention {} is {:?}, expected ({n}, {n})",
                    l + 1,
                    a.dim()
                )));
            }
            let prev = states.last().unwrap();
            let next = prev + &a.dot(prev);
            states.push(next);
        }
        Ok(LayerTrace {
            states,
            attention: attention.into_iter().map(|a| vec![a]).collect(),
            has_class_token,
        })
    }
}

fn mean_of(mats: &[Array2<f64>]) -> Array2<f64> {
    let mut acc = mats[0].clone();
    for m in &mats[1..] {
        acc += m;
    }
    acc / mats.len() as f64
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> Array2<f64> {
    let d = x.ncols() as f64;
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
        row *= gain;
        row += bias;
    }
    out
}

fn gelu(v: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * v * (1.0 + (C * (v + 0.044_715 * v * v * v)).tanh())
}

/// Row-wise softmax with max shifting. Fails on non-finite logits.
fn softmax_rows(logits: &mut Array2<f64>) -> Result<()> {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite("attention logits overflow".into()));
        }
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    Ok(())
}

fn head_attention(
    x: &Array2<f64>,
    w: &LayerWeights,
    codes: &Array2<usize>,
    cfg: &SanConfig,
) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
    let h = layer_norm(x, &w.norm1_gain, &w.norm1_bias);
    let q = h.dot(&w.query);
    let k = h.dot(&w.key);
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    for head in 0..cfg.heads {
        let cols = s![.., head * dh..(head + 1) * dh];
        let mut logits = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        let bias = w.distance_bias.row(head);
        logits.zip_mut_with(codes, |v, &c| *v += bias[c]);
        softmax_rows(&mut logits)?;
        heads.push(logits);
    }
    Ok((h, heads))
}

fn layer_step(
    x: &Array2<f64>,
    w: &LayerWeights,
    codes: &Array2<usize>,
    cfg: &SanConfig,
) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
    let (h, heads) = head_attention(x, w, codes, cfg)?;
    let next = match cfg.mode {
        Mode::Proxy => {
            let a = mean_of(&heads);
            x + &a.dot(x)
        }
        Mode::Full => {
            let v = h.dot(&w.value);
            let dh = cfg.head_dim();
            let mut mixed = Array2::<f64>::zeros(x.raw_dim());
            for (head, a) in heads.iter().enumerate() {
                let cols = s![.., head * dh..(head + 1) * dh];
                mixed.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
            }
            let x1 = x + &mixed.dot(&w.projection);
            let h2 = layer_norm(&x1, &w.norm2_gain, &w.norm2_bias);
            let hidden = (h2.dot(&w.ff_in) + w.ff_in_bias.view().insert_axis(Axis(0))).mapv(gelu);
            x1 + &(hidden.dot(&w.ff_out) + w.ff_out_bias.view().insert_axis(Axis(0)))
        }
    };
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("layer output overflow".into()));
    }
    Ok((next, heads))
}

/// Run the network from an explicit input matrix (used for finite differences).
pub fn forward_from(x0: Array2<f64>, codes: &Array2<usize>, w: &SanWeights, cfg: &SanConfig) -> Result<LayerTrace> {
    check_compatible(w, cfg)?;
    let n = x0.nrows();
    if codes.dim() != (n, n) || x0.ncols() != cfg.dim {
        return Err(Error::Dim(format!(
            "input {:?} / codes {:?} inconsistent with dim {}",
            x0.dim(),
            codes.dim(),
            cfg.dim
        )));
    }
    let mut states = Vec::with_capacity(cfg.layers + 1);
    let mut attention = Vec::with_capacity(cfg.layers);
    states.push(x0);
    for lw in &w.layers {
        let (next, heads) = layer_step(states.last().unwrap(), lw, codes, cfg)?;
        states.push(next);
        attention.push(heads);
    }
    Ok(LayerTrace {
        states,
        attention,
        has_class_token: cfg.include_class_token,
    })
}

/// Last-layer token matrix only.
pub fn forward_output(x0: Array2<f64>, codes: &Array2<usize>, w: &SanWeights, cfg: &SanConfig) -> Result<Array2<f64>> {
    let mut x = x0;
    for lw in &w.layers {
        x = layer_step(&x, lw, codes, cfg)?.0;
    }
    Ok(x)
}

pub fn forward(g: &MolecularGraph, w: &SanWeights, cfg: &SanConfig) -> Result<LayerTrace> {
    let x0 = encode(g, w, cfg)?;
    let codes = attention_codes(g, cfg);
    forward_from(x0, &codes, w, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Atom;
    use crate::smiles::parse_smiles;

    fn cfg(layers: usize, heads: usize, mode: Mode, class: bool, seed: u64) -> SanConfig {
        SanConfig {
            layers,
            dim: 8,
            heads,
            max_dist: 4,
            include_class_token: class,
            mode,
            seed,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let c = SanConfig::toy();
        let a = init_weights(&c).unwrap();
        let b = init_weights(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checksum(), b.checksum());
        let other = init_weights(&SanConfig { seed: 1, ..c.clone() }).unwrap();
        assert_ne!(a.checksum(), other.checksum());
        assert_eq!(c.head_dim(), 8);
        let bound = 1.0 / 32f64.sqrt();
        assert!(a.layers[0].query.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn config_validation() {
        assert!(SanConfig {
            heads: 3,
            ..SanConfig::toy()
        }
        .validate()
        .is_err());
        assert!(SanConfig {
            heads: 0,
            ..SanConfig::toy()
        }
        .validate()
        .is_err());
        assert!(SanConfig {
            max_dist: 0,
            ..SanConfig::toy()
        }
        .validate()
        .is_err());
        assert!(SanConfig {
            layers: 0,
            ..SanConfig::toy()
        }
        .validate()
        .is_ok());
        let p = SanConfig::large();
        assert_eq!((p.layers, p.dim, p.heads, p.ff_dim()), (20, 256, 32, 512));
    }

    #[test]
    fn encode_shapes() {
        let c = cfg(1, 2, Mode::Full, false, 3);
        let w = init_weights(&c).unwrap();
        let single = MolecularGraph::new(vec![Atom::new("C", 4)], []).unwrap();
        assert_eq!(encode(&single, &w, &c).unwrap().nrows(), 1);
        let cc = SanConfig {
            include_class_token: true,
            ..c.clone()
        };
        let x = encode(&parse_smiles("CCO").unwrap(), &w, &cc).unwrap();
        assert_eq!(x.nrows(), 4);
        assert_eq!(x.row(0), w.class_embedding);
        let unknown = MolecularGraph::new(vec![Atom::new("Si", 4)], []).unwrap();
        assert_eq!(encode(&unknown, &w, &c).unwrap_err().code(), "E_VOCAB");
    }

    #[test]
    fn encoding_is_node_local() {
        // Same multiset of (element, degree + H), different topology.
        let c = cfg(1, 2, Mode::Full, false, 5);
        let w = init_weights(&c).unwrap();
        let a = encode(&parse_smiles("CC(C)C").unwrap(), &w, &c).unwrap();
        let b = encode(&parse_smiles("C(C)(C)C").unwrap(), &w, &c).unwrap();
        let mut ra: Vec<Vec<u64>> = a
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut rb: Vec<Vec<u64>> = b
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        ra.sort();
        rb.sort();
        assert_eq!(ra, rb);
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let g = parse_smiles("CC(=O)NC1CC1").unwrap();
        for mode in [Mode::Full, Mode::Proxy] {
            for class in [false, true] {
                let c = cfg(3, 4, mode, class, 11);
                let w = init_weights(&c).unwrap();
                let t = forward(&g, &w, &c).unwrap();
                assert_eq!(t.layers(), 3);
                for layer in &t.attention {
                    assert_eq!(layer.len(), 4);
                    for a in layer {
                        assert!(a.iter().all(|&v| v >= 0.0));
                        for row in a.rows() {
                            assert!((row.sum() - 1.0).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn single_token_proxy_doubles() {
        let c = cfg(3, 2, Mode::Proxy, false, 2);
        let w = init_weights(&c).unwrap();
        let g = MolecularGraph::new(vec![Atom::new("C", 4)], []).unwrap();
        let t = forward(&g, &w, &c).unwrap();
        for l in 1..=3 {
            assert_eq!(t.head_mean(l), ndarray::array![[1.0]]);
            let want = t.input() * 2f64.powi(l as i32);
            assert_eq!(t.states[l], want);
        }
    }

    #[test]
    fn two_layer_proxy_matches_hand_product() {
        let c = cfg(2, 2, Mode::Proxy, false, 7);
        let w = init_weights(&c).unwrap();
        let g = parse_smiles("CCC").unwrap();
        let t = forward(&g, &w, &c).unwrap();
        let eye = Array2::<f64>::eye(3);
        let m1 = &eye + &t.head_mean(1);
        let m2 = &eye + &t.head_mean(2);
        let want = m2.dot(&m1.dot(t.input()));
        let diff = (&want - t.output()).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(diff <= 1e-12, "{diff}");
    }

    #[test]
    fn codes_cover_special_pairs() {
        let c = SanConfig {
            max_dist: 2,
            include_class_token: true,
            ..SanConfig::toy()
        };
        let g = parse_smiles("CCCC.C").unwrap();
        let codes = attention_codes(&g, &c);
        assert_eq!(codes[[0, 0]], 0);
        assert_eq!(codes[[0, 3]], c.class_code());
        assert_eq!(codes[[1, 4]], 2); // distance 3 clipped to 2
        assert_eq!(codes[[1, 5]], c.unreachable_code());
    }

    #[test]
    fn corrupt_weights_are_reported() {
        let c = cfg(1, 1, Mode::Full, false, 1);
        let mut w = init_weights(&c).unwrap();
        w.layers[0].distance_bias.fill(f64::INFINITY);
        let g = parse_smiles("CC").unwrap();
        assert_eq!(forward(&g, &w, &c).unwrap_err().code(), "E_NONFINITE");
    }

    #[test]
    fn zero_layers_is_identity() {
        let c = cfg(0, 2, Mode::Full, false, 1);
        let w = init_weights(&c).unwrap();
        let g = parse_smiles("CCO").unwrap();
        let t = forward(&g, &w, &c).unwrap();
        assert_eq!(t.layers(), 0);
        assert_eq!(t.output(), t.input());
    }
}
