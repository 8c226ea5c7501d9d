//! Corpus loading: SMILES lines (`.smi` and anything else) or graph JSON
//! lines (`.jsonl`, one `{"id": ..., "graph": {...}}` per line).

use std::path::Path;

use gtspectra::{parse_graph_json, parse_smiles_corpus, MolecularGraph};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

#[derive(Debug, Clone)]
pub struct Molecule {
    pub id: String,
    pub graph: MolecularGraph,
}

pub struct Corpus {
    pub molecules: Vec<Molecule>,
    pub sha256: String,
}

#[derive(Deserialize)]
struct GraphLine {
    id: String,
    graph: serde_json::Value,
}

pub fn parse_corpus(text: &str, path: &Path) -> Result<Vec<Molecule>, Failure> {
    let located =
        |line: usize, err: gtspectra::Error| Failure::Input(format!("{}:{line}: {}: {err}", path.display(), err.code()));
    if path.extension().is_some_and(|e| e == "jsonl") {
        let mut out = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let rec: GraphLine =
                serde_json::from_str(raw).map_err(|e| located(k + 1, gtspectra::Error::Schema(e.to_string())))?;
            let graph = parse_graph_json(&rec.graph.to_string()).map_err(|e| located(k + 1, e))?;
            out.push(Molecule { id: rec.id, graph });
        }
        Ok(out)
    } else {
        let entries = parse_smiles_corpus(text).map_err(|(line, e)| located(line, e))?;
        Ok(entries
            .into_iter()
            .map(|e| Molecule {
                id: e.id,
                graph: e.graph,
            })
            .collect())
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::input(path.display(), e))?;
    let text = String::from_utf8(bytes).map_err(|e| Failure::input(path.display(), e))?;
    let molecules = parse_corpus(&text, path)?;
    if molecules.is_empty() {
        return Err(Failure::Input(format!("{}: corpus holds no molecules", path.display())));
    }
    Ok(Corpus {
        molecules,
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    })
}
