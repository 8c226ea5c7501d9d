//! Molecular graphs over heavy atoms, plus the exact graph quantities the
//! spectral analysis needs: adjacency, degrees, BFS topological distances
//! and the combinatorial Laplacian `L = D - A`.

use std::collections::{BTreeSet, VecDeque};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance reported between nodes in different connected components.
pub const UNREACHABLE: i32 = -1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub element: String,
    pub implicit_h: u32,
    #[serde(default)]
    pub charge: i32,
}

impl Atom {
    pub fn new(element: impl Into<String>, implicit_h: u32) -> Self {
        Atom {
            element: element.into(),
            implicit_h,
            charge: 0,
        }
    }
}

/// Undirected bond, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: u8,
}

/// Heavy-atom molecular graph. Construction validates the structural
/// invariants (no self-loops, no duplicate edges, indices in range) and
/// records the connected-component count.
#[derive(Debug, Clone)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    neighbors: Vec<Vec<usize>>,
    components: usize,
}

impl PartialEq for MolecularGraph {
    fn eq(&self, other: &Self) -> bool {
        let mut a = self.bonds.clone();
        let mut b = other.bonds.clone();
        a.sort();
        b.sort();
        self.atoms == other.atoms && a == b
    }
}

impl MolecularGraph {
    pub fn new(atoms: Vec<Atom>, bonds: impl IntoIterator<Item = (usize, usize, u8)>) -> Result<Self> {
        let n = atoms.len();
        let mut neighbors = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        let mut stored = Vec::new();
        for (k, (a, b, order)) in bonds.into_iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::Schema(format!(
                    "bond {k}: index out of range ({a}, {b}) for {n} atoms"
                )));
            }
            if a == b {
                return Err(Error::Schema(format!("bond {k}: self-loop on atom {a}")));
            }
            if !(1..=3).contains(&order) {
                return Err(Error::Schema(format!("bond {k}: order {order} not in 1..3")));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((i, j)) {
                return Err(Error::Schema(format!("bond {k}: duplicate edge ({i}, {j})")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
            stored.push(Bond { i, j, order });
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let mut graph = MolecularGraph {
            atoms,
            bonds: stored,
            neighbors,
            components: 0,
        };
        graph.components = graph.count_components();
        Ok(graph)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn node_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn component_count(&self) -> usize {
        self.components
    }

    /// A graph with no nodes counts as connected.
    pub fn is_connected(&self) -> bool {
        self.components <= 1
    }

    /// Sum of bond orders incident to atom `i`.
    pub fn bond_order_sum(&self, i: usize) -> u32 {
        self.bonds
            .iter()
            .filter(|b| b.i == i || b.j == i)
            .map(|b| u32::from(b.order))
            .sum()
    }

    /// Relabel nodes so that old node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        if perm.len() != n || perm.iter().collect::<BTreeSet<_>>().len() != n || perm.iter().any(|&p| p >= n) {
            return Err(Error::InvalidArgument("not a permutation of the node set".into()));
        }
        let mut atoms = vec![Atom::new("", 0); n];
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = self.atoms[old].clone();
        }
        let bonds = self.bonds.iter().map(|b| (perm[b.i], perm[b.j], b.order));
        MolecularGraph::new(atoms, bonds)
    }

    fn count_components(&self) -> usize {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            atoms: self.atoms.clone(),
            bonds: self
                .bonds
                .iter()
                .map(|b| (b.i as i64, b.j as i64, i64::from(b.order)))
                .collect(),
        };
        serde_json::to_string(&file).expect("graph serialization is infallible")
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    atoms: Vec<Atom>,
    bonds: Vec<(i64, i64, i64)>,
}

/// Parse a graph from its JSON form:
/// `{"atoms":[{"element":"C","implicit_h":2,"charge":0}],"bonds":[[i,j,order]]}`.
pub fn parse_graph_json(text: &str) -> Result<MolecularGraph> {
    let file: GraphFile = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Schema(e.to_string()),
        _ => Error::parse(e.column(), e.to_string()),
    })?;
    for (k, atom) in file.atoms.iter().enumerate() {
        let sym = atom.element.as_str();
        let mut chars = sym.chars();
        let ok =
            matches!(chars.next(), Some(c) if c.is_ascii_uppercase()) && chars.all(|c| c.is_ascii_lowercase()) && sym.len() <= 3;
        if !ok {
            return Err(Error::Schema(format!("atom {k}: invalid element symbol {sym:?}")));
        }
    }
    let mut bonds = Vec::with_capacity(file.bonds.len());
    for (k, &(i, j, order)) in file.bonds.iter().enumerate() {
        let conv = |v: i64| usize::try_from(v).map_err(|_| Error::Schema(format!("bond {k}: negative index {v}")));
        let order = u8::try_from(order).map_err(|_| Error::Schema(format!("bond {k}: invalid order {order}")))?;
        bonds.push((conv(i)?, conv(j)?, order));
    }
    MolecularGraph::new(file.atoms, bonds)
}

/// All-pairs topological distances by breadth-first search. Pairs in
/// different components get [`UNREACHABLE`].
pub fn bfs_distances(g: &MolecularGraph) -> Array2<i32> {
    let n = g.node_count();
    let mut dist = Array2::from_elem((n, n), UNREACHABLE);
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist[[s, s]] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = dist[[s, u]];
            for &v in g.neighbors(u) {
                if dist[[s, v]] == UNREACHABLE {
                    dist[[s, v]] = du + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    dist
}

/// `D - A` in exact integer arithmetic. Bond orders are ignored.
pub fn integer_laplacian(g: &MolecularGraph) -> Array2<i64> {
    let n = g.node_count();
    let mut lap = Array2::<i64>::zeros((n, n));
    for b in g.bonds() {
        lap[[b.i, b.j]] -= 1;
        lap[[b.j, b.i]] -= 1;
        lap[[b.i, b.i]] += 1;
        lap[[b.j, b.j]] += 1;
    }
    lap
}

/// Combinatorial Laplacian `L = D - A` of the unweighted graph.
pub fn laplacian(g: &MolecularGraph) -> Array2<f64> {
    integer_laplacian(g).mapv(|v| v as f64)
}
