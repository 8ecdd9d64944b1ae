//! Persistent tree banks: one JSON document per tree plus an index with
//! seeds and content hashes. Writes are atomic (write-temp-then-rename).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grammar::Grammar;

use super::{grow_tree, mesh_tree, TreegenError, TreeModel, TrellisSpec, TREE_SCHEMA_VERSION};

pub const BANK_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankEntry {
    pub id: usize,
    pub file: String,
    pub seed: u64,
    pub sha256: String,
    pub warning_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankIndex {
    pub schema_version: u32,
    pub trees: Vec<BankEntry>,
    /// SHA-256 over the per-tree hashes, identifying the bank contents.
    pub content_hash: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TreegenError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Save trees as `tree_NNNN.json` (+ `tree_NNNN.obj` when `with_meshes`),
/// plus `index.json`.
pub fn save_bank(
    trees: &[TreeModel],
    dir: &Path,
    with_meshes: bool,
) -> Result<BankIndex, TreegenError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(trees.len());
    let mut all_hashes = String::new();
    for (id, tree) in trees.iter().enumerate() {
        let file = format!("tree_{id:04}.json");
        let json = tree.to_json()?;
        write_atomic(&dir.join(&file), json.as_bytes())?;
        if with_meshes {
            let mesh = mesh_tree(tree, 12)?;
            write_atomic(&dir.join(format!("tree_{id:04}.obj")), mesh.to_obj_string().as_bytes())?;
        }
        let sha256 = sha256_hex(json.as_bytes());
        all_hashes.push_str(&sha256);
        entries.push(BankEntry {
            id,
            file,
            seed: tree.provenance.seed,
            sha256,
            warning_count: tree.provenance.warnings.len(),
        });
    }
    let index = BankIndex {
        schema_version: BANK_SCHEMA_VERSION,
        trees: entries,
        content_hash: sha256_hex(all_hashes.as_bytes()),
    };
    write_atomic(&dir.join("index.json"), serde_json::to_string_pretty(&index)?.as_bytes())?;
    Ok(index)
}

/// Load a bank, verifying schema versions and per-file checksums.
pub fn load_bank(dir: &Path) -> Result<(BankIndex, Vec<TreeModel>), TreegenError> {
    let index_path = dir.join("index.json");
    if !index_path.exists() {
        return Err(TreegenError::MissingFile(index_path.display().to_string()));
    }
    let index: BankIndex = serde_json::from_str(&fs::read_to_string(&index_path)?)?;
    if index.schema_version != BANK_SCHEMA_VERSION {
        return Err(TreegenError::VersionMismatch {
            found: index.schema_version,
            expected: BANK_SCHEMA_VERSION,
        });
    }
    let mut trees = Vec::with_capacity(index.trees.len());
    for entry in &index.trees {
        let path = dir.join(&entry.file);
        if !path.exists() {
            return Err(TreegenError::MissingFile(path.display().to_string()));
        }
        let bytes = fs::read(&path)?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(TreegenError::ChecksumMismatch { file: entry.file.clone() });
        }
        let tree: TreeModel = serde_json::from_slice(&bytes)?;
        if tree.schema_version != TREE_SCHEMA_VERSION {
            return Err(TreegenError::VersionMismatch {
                found: tree.schema_version,
                expected: TREE_SCHEMA_VERSION,
            });
        }
        trees.push(tree);
    }
    Ok((index, trees))
}

/// Generate `count` trees with per-tree seeds derived from `base_seed`.
pub fn generate_bank(
    spec: &TrellisSpec,
    grammar: &Grammar,
    years: usize,
    count: usize,
    base_seed: u64,
) -> Result<Vec<TreeModel>, TreegenError> {
    (0..count)
        .map(|i| grow_tree(spec, grammar, years, crate::rng::derive_seed(base_seed, i as u64)))
        .collect()
}
