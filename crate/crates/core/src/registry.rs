//! Operator meta information and corpus scanning.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::ir::{self, Diagnostic};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamType {
    Tensor,
    ListInt,
    ListFloat,
    Str,
    Int,
    Float,
    Bool,
}

impl ParamType {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::Tensor => "tensor",
            ParamType::ListInt => "list<int>",
            ParamType::ListFloat => "list<float>",
            ParamType::Str => "string",
            ParamType::Int => "int",
            ParamType::Float => "float",
            ParamType::Bool => "bool",
        }
    }

    pub fn is_list(self) -> bool {
        matches!(self, ParamType::ListInt | ParamType::ListFloat)
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "tensor" => ParamType::Tensor,
            "list<int>" => ParamType::ListInt,
            "list<float>" => ParamType::ListFloat,
            "string" => ParamType::Str,
            "int" => ParamType::Int,
            "float" => ParamType::Float,
            "bool" => ParamType::Bool,
            other => return Err(other.to_string()),
        })
    }
}

impl Serialize for ParamType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ParamType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|t| serde::de::Error::custom(format!("unknown ptype: {t}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Input,
    Attr,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub ptype: ParamType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub op_name: String,
    pub api_name: String,
    pub params: Vec<ParamDecl>,
    pub attrs: Vec<ParamDecl>,
    pub source_path: String,
}

impl OperatorMeta {
    /// Inputs followed by attributes, in declaration order.
    pub fn all_params(&self) -> impl Iterator<Item = (ParamKind, &ParamDecl)> {
        self.params
            .iter()
            .map(|p| (ParamKind::Input, p))
            .chain(self.attrs.iter().map(|p| (ParamKind::Attr, p)))
    }

    pub fn lookup(&self, name: &str) -> Option<(ParamKind, &ParamDecl)> {
        self.all_params().find(|(_, p)| p.name == name)
    }

    pub fn ptype_of(&self, name: &str) -> Option<ParamType> {
        self.lookup(name).map(|(_, p)| p.ptype)
    }
}

/// Extracts meta information from an OVIR source's header clauses.
pub fn meta_of(source: &str) -> Result<OperatorMeta, Diagnostic> {
    ir::parse_header(source)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub corpus_root: String,
    pub operators: Vec<OperatorMeta>,
}

impl CorpusIndex {
    pub fn get(&self, op_name: &str) -> Option<&OperatorMeta> {
        self.operators.iter().find(|m| m.op_name == op_name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("index serializes");
        s.push('\n');
        s
    }

    pub fn source_file(&self, meta: &OperatorMeta) -> PathBuf {
        Path::new(&self.corpus_root).join(&meta.source_path)
    }
}

#[derive(Clone, Debug)]
pub struct ScanFailure {
    pub path: String,
    pub diagnostic: Diagnostic,
}

#[derive(Clone, Debug)]
pub struct CorpusScan {
    pub index: CorpusIndex,
    /// Files whose header did not parse.
    pub failures: Vec<ScanFailure>,
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("corpus root {0} does not exist or is not a directory")]
    MissingRoot(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate operator {op_name:?} defined in {first} and {second}")]
    DuplicateOp {
        op_name: String,
        first: String,
        second: String,
    },
}

/// Scans `root` recursively for `.ovir` files and builds the operator index.
pub fn scan_corpus(root: &Path) -> Result<CorpusScan, ScanError> {
    if !root.is_dir() {
        return Err(ScanError::MissingRoot(root.display().to_string()));
    }
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| ScanError::Io {
            path: root.display().to_string(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "ovir") {
            files.push(entry.into_path());
        }
    }

    let mut by_name: BTreeMap<String, OperatorMeta> = BTreeMap::new();
    let mut failures = Vec::new();
    for file in files {
        let rel = relative_path(root, &file);
        let text = std::fs::read_to_string(&file).map_err(|e| ScanError::Io {
            path: file.display().to_string(),
            source: e,
        })?;
        match meta_of(&text) {
            Ok(mut meta) => {
                meta.source_path = rel.clone();
                if let Some(prev) = by_name.get(&meta.op_name) {
                    return Err(ScanError::DuplicateOp {
                        op_name: meta.op_name.clone(),
                        first: prev.source_path.clone(),
                        second: rel,
                    });
                }
                by_name.insert(meta.op_name.clone(), meta);
            }
            Err(diagnostic) => failures.push(ScanFailure { path: rel, diagnostic }),
        }
    }
    Ok(CorpusScan {
        index: CorpusIndex {
            corpus_root: root.display().to_string(),
            operators: by_name.into_values().collect(),
        },
        failures,
    })
}

fn relative_path(root: &Path, file: &Path) -> String {
    let rel = file.strip_prefix(root).unwrap_or(file);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    const OP_A: &str = r#"
op "OperatorA" api "tf.raw_ops.OperatorA" {
  param x: tensor
  param y: tensor
  attr format: string
  fn @main {
  entry:
    ret
  }
}
"#;

    fn write(dir: &Path, name: &str, text: &str) {
        let p = dir.join(name);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, text).unwrap();
    }

    fn op_text(name: &str) -> String {
        format!("op \"{name}\" api \"t.{name}\" {{ param a: int fn @main {{ entry: ret }} }}")
    }

    #[test]
    fn meta_mirrors_header() {
        let meta = meta_of(OP_A).unwrap();
        assert_eq!(meta.op_name, "OperatorA");
        assert_eq!(meta.api_name, "tf.raw_ops.OperatorA");
        let params: Vec<_> = meta.params.iter().map(|p| (p.name.as_str(), p.ptype)).collect();
        assert_eq!(params, vec![("x", ParamType::Tensor), ("y", ParamType::Tensor)]);
        let attrs: Vec<_> = meta.attrs.iter().map(|p| (p.name.as_str(), p.ptype)).collect();
        assert_eq!(attrs, vec![("format", ParamType::Str)]);
    }

    #[test]
    fn zero_params() {
        let meta = meta_of(r#"op "Z" api "t.Z" { fn @main { entry: ret } }"#).unwrap();
        assert!(meta.params.is_empty());
        assert!(meta.attrs.is_empty());
    }

    #[test]
    fn unknown_ptype_is_named() {
        let err = meta_of(r#"op "Z" api "t.Z" { param x: matrix fn @main { entry: ret } }"#)
            .unwrap_err();
        assert_eq!(err.message, "unknown ptype: matrix");
    }

    #[test]
    fn missing_api_name() {
        let err = meta_of(r#"op "Z" { fn @main { entry: ret } }"#).unwrap_err();
        assert_eq!(err.message, "missing api name");
    }

    #[test]
    fn scan_orders_lexicographically() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "b/operator_a.ovir", &op_text("OperatorA"));
        write(dir.path(), "a/bias.ovir", &op_text("BiasAddLike"));
        write(dir.path(), "notes.txt", "not ovir");
        let scan = scan_corpus(dir.path()).unwrap();
        let names: Vec<_> = scan.index.operators.iter().map(|m| m.op_name.as_str()).collect();
        assert_eq!(names, vec!["BiasAddLike", "OperatorA"]);
        assert_eq!(scan.index.operators[0].source_path, "a/bias.ovir");
    }

    #[test]
    fn scan_empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let scan = scan_corpus(dir.path()).unwrap();
        assert!(scan.index.operators.is_empty());
        assert!(scan.failures.is_empty());
    }

    #[test]
    fn scan_duplicate_names_both_files() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "one.ovir", &op_text("Conv2DLike"));
        write(dir.path(), "two.ovir", &op_text("Conv2DLike"));
        let err = scan_corpus(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("one.ovir") && msg.contains("two.ovir"), "{msg}");
    }

    #[test]
    fn scan_reports_unparseable_files() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "good.ovir", &op_text("Good"));
        write(dir.path(), "bad.ovir", "op \"Bad\" { }");
        let scan = scan_corpus(dir.path()).unwrap();
        assert_eq!(scan.index.operators.len(), 1);
        assert_eq!(scan.failures.len(), 1);
        assert_eq!(scan.failures[0].path, "bad.ovir");
    }

    #[test]
    fn scan_missing_root() {
        let err = scan_corpus(Path::new("/definitely/not/here")).unwrap_err();
        assert!(matches!(err, ScanError::MissingRoot(_)));
    }

    #[test]
    fn scan_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["Zeta", "Alpha", "Mid"] {
            write(dir.path(), &format!("{n}.ovir"), &op_text(n));
        }
        let a = scan_corpus(dir.path()).unwrap().index.to_json();
        let b = scan_corpus(dir.path()).unwrap().index.to_json();
        assert_eq!(a, b);
    }
}
