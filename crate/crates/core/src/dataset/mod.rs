//! Dataset records, deduplication, splitting and the on-disk corpus.
//!
//! A corpus directory holds:
//!
//! ```text
//! manifest.json          ids, digests, subtypes and split assignment
//! records/<digest>.bin   one record container per representative
//! labels/<id>.lines      vulnerable line numbers
//! asts/<id>.ast.json     AST bundle the record was built from
//! sources/<id>.sol       generated source (synthetic corpora only)
//! ```

mod record;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ast::{AstDocument, AstError};
use crate::features::{FeatureError, FeatureSchema};
use crate::graph::{build_code_graph, CodeGraph, GraphError};
use crate::labels::{annotate_node_labels, LabelError, LineLabels, NodeLabels};

pub use record::RECORD_VERSION;
pub use synth::{generate_synthetic_corpus, SyntheticContract};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Ast(#[from] AstError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("malformed {what}: {message}")]
    Malformed { what: String, message: String },
    #[error("{0} contains no call, send or transfer")]
    NoSubtype(String),
    #[error("unknown subtype {0:?}")]
    UnknownSubtype(String),
    #[error("generation needs positive counts")]
    EmptyRequest,
    #[error("only {got} distinct {class} contracts after {attempts} attempts")]
    CorpusExhausted { class: &'static str, got: usize, attempts: usize },
}

impl DatasetError {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
        move |source| DatasetError::Io { path: path.to_path_buf(), source }
    }

    fn malformed(what: impl Into<String>, message: impl fmt::Display) -> Self {
        DatasetError::Malformed { what: what.into(), message: message.to_string() }
    }
}

/// The fund-transfer primitive a contract uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subtype {
    Call,
    Send,
    Transfer,
}

impl Subtype {
    pub const ALL: [Subtype; 3] = [Subtype::Call, Subtype::Send, Subtype::Transfer];

    pub fn as_str(self) -> &'static str {
        match self {
            Subtype::Call => "call",
            Subtype::Send => "send",
            Subtype::Transfer => "transfer",
        }
    }
}

impl fmt::Display for Subtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subtype {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subtype::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| DatasetError::UnknownSubtype(s.into()))
    }
}

/// Every `call` / `send` / `transfer` member access, with its first line.
pub fn subtype_hits(ast: &AstDocument) -> Result<Vec<(Subtype, usize)>, AstError> {
    let mut hits = Vec::new();
    for node in ast.nodes().iter().filter(|n| n.kind == "MemberAccess") {
        if let Some(t) = node.attr_str("memberName").and_then(|m| m.parse::<Subtype>().ok()) {
            hits.push((t, ast.span_to_lines(node.src)?.first));
        }
    }
    Ok(hits)
}

/// Subtype of the first transfer primitive in source order.
pub fn detect_subtype(ast: &AstDocument) -> Result<Option<Subtype>, AstError> {
    Ok(subtype_hits(ast)?.into_iter().min_by_key(|&(_, line)| line).map(|(t, _)| t))
}

/// sha256 hex digest of the canonical serialization.
pub fn canonical_hash(graph: &CodeGraph) -> String {
    hex::encode(Sha256::digest(graph.canonical_serialization().as_bytes()))
}

/// One contract ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub subtype: Subtype,
    pub graph: CodeGraph,
    pub features: Array2<f32>,
    pub labels: NodeLabels,
    pub line_labels: LineLabels,
    pub digest: String,
}

impl DatasetRecord {
    pub fn build(
        id: &str,
        subtype: Subtype,
        ast: &AstDocument,
        line_labels: &LineLabels,
        schema: &FeatureSchema,
    ) -> Result<Self, DatasetError> {
        let graph = build_code_graph(ast)?;
        let features = schema.encode_graph(&graph, ast)?;
        let labels = annotate_node_labels(graph.spans(), line_labels, ast.line_index())?;
        let digest = canonical_hash(&graph);
        Ok(Self { id: id.to_string(), subtype, graph, features, labels, line_labels: line_labels.clone(), digest })
    }

    pub fn vulnerable(&self) -> bool {
        self.labels.any()
    }
}

/// Keeps one record per digest, the one with the smallest id; output is
/// sorted by id.
pub fn deduplicate(records: Vec<DatasetRecord>) -> Vec<DatasetRecord> {
    let mut best: BTreeMap<String, DatasetRecord> = BTreeMap::new();
    for r in records {
        match best.get(&r.digest) {
            Some(kept) if kept.id <= r.id => {}
            _ => {
                best.insert(r.digest.clone(), r);
            }
        }
    }
    let mut out: Vec<DatasetRecord> = best.into_values().collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.84, 0.08, 0.08];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" | "val" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            _ => Err(DatasetError::malformed("split name", s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl SplitManifest {
    pub fn ids(&self, split: SplitName) -> &[String] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn assignment(&self) -> BTreeMap<&str, SplitName> {
        SplitName::ALL.iter().flat_map(|&s| self.ids(s).iter().map(move |id| (id.as_str(), s))).collect()
    }
}

/// Sorts the ids, shuffles them with `seed` and cuts the sequence into
/// `round(n * train)` and `round(n * validation)` items, the rest going to
/// test.
pub fn split<'a>(ids: impl IntoIterator<Item = &'a str>, ratios: [f64; 3], seed: u64) -> Result<SplitManifest, DatasetError> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadRatios(ratios));
    }
    let mut ids: Vec<String> = ids.into_iter().map(str::to_string).collect();
    ids.sort();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = ((n as f64 * ratios[0]).round() as usize).min(n);
    let n_val = ((n as f64 * ratios[1]).round() as usize).min(n - n_train);
    let test = ids.split_off(n_train + n_val);
    let validation = ids.split_off(n_train);
    Ok(SplitManifest { train: ids, validation, test, seed, ratios })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub digest: String,
    pub subtype: Subtype,
    pub split: SplitName,
    pub nodes: usize,
    pub vulnerable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: u32,
    pub schema_version: u32,
    pub seed: u64,
    pub ratios: [f64; 3],
    /// Records before deduplication.
    pub input_count: usize,
    pub duplicates_removed: usize,
    pub records: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn split_manifest(&self) -> SplitManifest {
        let ids = |s: SplitName| self.records.iter().filter(|r| r.split == s).map(|r| r.id.clone()).collect();
        SplitManifest {
            train: ids(SplitName::Train),
            validation: ids(SplitName::Validation),
            test: ids(SplitName::Test),
            seed: self.seed,
            ratios: self.ratios,
        }
    }
}

/// Input to [`write_corpus`]: a record plus the files it came from.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub record: DatasetRecord,
    /// AST bundle JSON.
    pub ast_bundle: Option<String>,
    pub source: Option<String>,
}

/// Deduplicates, splits and writes `items` under `dir`.
pub fn write_corpus(
    dir: &Path,
    items: Vec<CorpusItem>,
    ratios: [f64; 3],
    seed: u64,
    schema: &FeatureSchema,
) -> Result<CorpusManifest, DatasetError> {
    let input_count = items.len();
    let mut extras: BTreeMap<String, (Option<String>, Option<String>)> = BTreeMap::new();
    let mut records = Vec::with_capacity(items.len());
    for item in items {
        extras.insert(item.record.id.clone(), (item.ast_bundle, item.source));
        records.push(item.record);
    }
    let records = deduplicate(records);
    let manifest = split(records.iter().map(|r| r.id.as_str()), ratios, seed)?;
    let assignment = manifest.assignment();

    for sub in ["records", "labels", "asts", "sources"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(DatasetError::io(&p))?;
    }
    let write = |path: PathBuf, bytes: &[u8]| std::fs::write(&path, bytes).map_err(DatasetError::io(&path));
    let mut entries = Vec::with_capacity(records.len());
    for r in &records {
        write(dir.join("records").join(format!("{}.bin", r.digest)), &r.to_bytes())?;
        write(dir.join("labels").join(format!("{}.lines", r.id)), r.line_labels.to_string().as_bytes())?;
        let (ast, source) = &extras[&r.id];
        if let Some(ast) = ast {
            write(dir.join("asts").join(format!("{}.ast.json", r.id)), ast.as_bytes())?;
        }
        if let Some(source) = source {
            write(dir.join("sources").join(format!("{}.sol", r.id)), source.as_bytes())?;
        }
        entries.push(ManifestEntry {
            id: r.id.clone(),
            digest: r.digest.clone(),
            subtype: r.subtype,
            split: assignment[r.id.as_str()],
            nodes: r.graph.node_count(),
            vulnerable: r.vulnerable(),
        });
    }
    let manifest = CorpusManifest {
        format: RECORD_VERSION,
        schema_version: schema.version(),
        seed,
        ratios,
        input_count,
        duplicates_removed: input_count - records.len(),
        records: entries,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
    write(dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

/// A corpus directory opened for reading.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: CorpusManifest,
}

impl Corpus {
    pub fn open(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(DatasetError::io(&path))?;
        let manifest = serde_json::from_str(&text).map_err(|e| DatasetError::malformed("manifest.json", e))?;
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn load_record(&self, entry: &ManifestEntry) -> Result<DatasetRecord, DatasetError> {
        let path = self.dir.join("records").join(format!("{}.bin", entry.digest));
        let bytes = std::fs::read(&path).map_err(DatasetError::io(&path))?;
        let record = DatasetRecord::from_bytes(&bytes)?;
        if record.id != entry.id {
            return Err(DatasetError::malformed(path.display().to_string(), format!("holds {} not {}", record.id, entry.id)));
        }
        Ok(record)
    }

    /// Records of one split, in manifest (id) order.
    pub fn load_split(&self, split: SplitName) -> Result<Vec<DatasetRecord>, DatasetError> {
        self.manifest.records.iter().filter(|e| e.split == split).map(|e| self.load_record(e)).collect()
    }
}
