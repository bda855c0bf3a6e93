//! JSON file formats (`schema: "simnet-v1"`).
//!
//! Matrices are arrays of row arrays. A matrix with zero columns is written
//! as a list of empty rows, so its row count survives the round trip.
//! Block maps go from peer id to a half-open `[start, end)` range.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use simnet_core::linalg::{Matrix, SymMatrix};
use simnet_core::network::{Block, Mode, NetworkError, NetworkSpec, SwitchedLinearSubsystem};
use simnet_core::{LocalCertificate, MatrixError};
use thiserror::Error;

pub const SCHEMA: &str = "simnet-v1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported schema {found:?}, expected {SCHEMA:?}")]
    Schema { found: String },
    #[error("{context}: rows have different lengths")]
    Ragged { context: String },
    #[error("{context}: non-finite entry")]
    NonFinite { context: String },
    #[error("subsystem {node}: block {peer} has invalid range [{start}, {end})")]
    BlockRange {
        node: usize,
        peer: usize,
        start: usize,
        end: usize,
    },
    #[error("subsystem {node}: mode {mode} has no {what} blocks and no default")]
    MissingBlocks {
        node: usize,
        mode: usize,
        what: &'static str,
    },
    #[error("certificate {node}: {what} keys must be 0..{modes}")]
    ModeKeys {
        node: usize,
        what: &'static str,
        modes: usize,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

impl FormatError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Json { .. } => "json",
            Self::Schema { .. } => "schema",
            Self::Ragged { .. } | Self::NonFinite { .. } => "matrix",
            Self::BlockRange { .. } | Self::MissingBlocks { .. } => "blocks",
            Self::ModeKeys { .. } => "certificate",
            Self::Network(_) => "network",
            Self::Matrix(_) => "matrix",
        }
    }
}

pub type Rows = Vec<Vec<f64>>;
pub type BlockMap = BTreeMap<usize, [usize; 2]>;

pub fn matrix_to_rows(m: &Matrix) -> Rows {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn rows_to_matrix(rows: &Rows, context: &str) -> Result<Matrix, FormatError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(FormatError::Ragged {
            context: context.to_string(),
        });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite {
            context: context.to_string(),
        });
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeFile {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "D")]
    pub d: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_blocks: Option<BlockMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_blocks: Option<BlockMap>,
}

/// A subsystem. Per-mode block maps override the subsystem-level defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemFile {
    pub id: usize,
    pub modes: Vec<ModeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_blocks: Option<BlockMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_blocks: Option<BlockMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub schema: String,
    pub subsystems: Vec<SubsystemFile>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstract_subsystems: Option<Vec<SubsystemFile>>,
}

fn check_schema(found: &str) -> Result<(), FormatError> {
    if found != SCHEMA {
        return Err(FormatError::Schema {
            found: found.to_string(),
        });
    }
    Ok(())
}

fn blocks_from_map(node: usize, map: &BlockMap) -> Result<Vec<Block>, FormatError> {
    map.iter()
        .map(|(&peer, &[start, end])| {
            if end < start {
                return Err(FormatError::BlockRange {
                    node,
                    peer,
                    start,
                    end,
                });
            }
            Ok(Block::new(peer, start..end))
        })
        .collect()
}

fn blocks_to_map(blocks: &[Block]) -> BlockMap {
    blocks
        .iter()
        .map(|b| (b.peer, [b.range.start, b.range.end]))
        .collect()
}

fn subsystem_from_file(file: &SubsystemFile) -> Result<SwitchedLinearSubsystem, FormatError> {
    let node = file.id;
    let modes = file
        .modes
        .iter()
        .enumerate()
        .map(|(s, m)| {
            let ctx = |what: &str| format!("subsystem {node} mode {s} {what}");
            let out = m.out_blocks.as_ref().or(file.out_blocks.as_ref()).ok_or(
                FormatError::MissingBlocks {
                    node,
                    mode: s,
                    what: "output",
                },
            )?;
            let empty = BlockMap::new();
            let inp = m
                .in_blocks
                .as_ref()
                .or(file.in_blocks.as_ref())
                .unwrap_or(&empty);
            Ok(Mode {
                a: rows_to_matrix(&m.a, &ctx("A"))?,
                b: rows_to_matrix(&m.b, &ctx("B"))?,
                c: rows_to_matrix(&m.c, &ctx("C"))?,
                d: rows_to_matrix(&m.d, &ctx("D"))?,
                out_blocks: blocks_from_map(node, out)?,
                in_blocks: blocks_from_map(node, inp)?,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Ok(SwitchedLinearSubsystem { id: node, modes })
}

/// Canonical form: block maps written per mode, with a subsystem-level default
/// when all modes agree.
fn subsystem_to_file(sub: &SwitchedLinearSubsystem) -> SubsystemFile {
    let outs: Vec<BlockMap> = sub
        .modes
        .iter()
        .map(|m| blocks_to_map(&m.out_blocks))
        .collect();
    let ins: Vec<BlockMap> = sub
        .modes
        .iter()
        .map(|m| blocks_to_map(&m.in_blocks))
        .collect();
    let uniform = |maps: &[BlockMap]| maps.windows(2).all(|w| w[0] == w[1]);
    let (out_default, in_default) = (uniform(&outs), uniform(&ins));
    SubsystemFile {
        id: sub.id,
        modes: sub
            .modes
            .iter()
            .enumerate()
            .map(|(s, m)| ModeFile {
                a: matrix_to_rows(&m.a),
                b: matrix_to_rows(&m.b),
                c: matrix_to_rows(&m.c),
                d: matrix_to_rows(&m.d),
                out_blocks: (!out_default).then(|| outs[s].clone()),
                in_blocks: (!in_default).then(|| ins[s].clone()),
            })
            .collect(),
        out_blocks: out_default.then(|| outs[0].clone()),
        in_blocks: in_default.then(|| ins[0].clone()),
    }
}

impl NetworkFile {
    pub fn to_spec(&self) -> Result<NetworkSpec, FormatError> {
        check_schema(&self.schema)?;
        let subs = self
            .subsystems
            .iter()
            .map(subsystem_from_file)
            .collect::<Result<Vec<_>, _>>()?;
        let abs = self
            .abstract_subsystems
            .as_ref()
            .map(|list| {
                list.iter()
                    .map(subsystem_from_file)
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        Ok(NetworkSpec::new(subs, &edges, abs)?)
    }

    pub fn from_spec(spec: &NetworkSpec) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            subsystems: spec
                .concrete
                .subsystems()
                .iter()
                .map(subsystem_to_file)
                .collect(),
            edges: spec.edges().into_iter().map(|(j, i)| [j, i]).collect(),
            abstract_subsystems: spec
                .abstraction
                .as_ref()
                .map(|a| a.subsystems().iter().map(subsystem_to_file).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub id: usize,
    pub kappa: f64,
    #[serde(rename = "M")]
    pub m: BTreeMap<usize, Rows>,
    #[serde(rename = "K")]
    pub k: BTreeMap<usize, Rows>,
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "Q")]
    pub q: BTreeMap<usize, Rows>,
    #[serde(rename = "R")]
    pub r: BTreeMap<usize, Rows>,
    #[serde(rename = "T")]
    pub t: BTreeMap<usize, Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub schema: String,
    pub certificates: Vec<CertificateEntry>,
}

fn per_mode(
    node: usize,
    what: &'static str,
    map: &BTreeMap<usize, Rows>,
) -> Result<Vec<Matrix>, FormatError> {
    if map.keys().copied().ne(0..map.len()) {
        return Err(FormatError::ModeKeys {
            node,
            what,
            modes: map.len(),
        });
    }
    map.iter()
        .map(|(s, rows)| rows_to_matrix(rows, &format!("certificate {node} {what}[{s}]")))
        .collect()
}

fn mode_map(ms: &[Matrix]) -> BTreeMap<usize, Rows> {
    ms.iter()
        .enumerate()
        .map(|(s, m)| (s, matrix_to_rows(m)))
        .collect()
}

impl CertificateEntry {
    pub fn to_certificate(&self) -> Result<LocalCertificate, FormatError> {
        let node = self.id;
        let m = per_mode(node, "M", &self.m)?
            .into_iter()
            .map(SymMatrix::new)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LocalCertificate {
            id: node,
            kappa: self.kappa,
            m,
            k: per_mode(node, "K", &self.k)?,
            p: rows_to_matrix(&self.p, &format!("certificate {node} P"))?,
            q: per_mode(node, "Q", &self.q)?,
            r: per_mode(node, "R", &self.r)?,
            t: per_mode(node, "T", &self.t)?,
            transitions: self
                .transitions
                .as_ref()
                .map(|t| t.iter().map(|p| (p[0], p[1])).collect()),
        })
    }

    pub fn from_certificate(cert: &LocalCertificate) -> Self {
        let m: Vec<Matrix> = cert.m.iter().map(|m| m.matrix().clone()).collect();
        Self {
            id: cert.id,
            kappa: cert.kappa,
            m: mode_map(&m),
            k: mode_map(&cert.k),
            p: matrix_to_rows(&cert.p),
            q: mode_map(&cert.q),
            r: mode_map(&cert.r),
            t: mode_map(&cert.t),
            transitions: cert
                .transitions
                .as_ref()
                .map(|t| t.iter().map(|&(a, b)| [a, b]).collect()),
        }
    }
}

impl CertificateFile {
    pub fn from_certificates(certs: &[LocalCertificate]) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            certificates: certs
                .iter()
                .map(CertificateEntry::from_certificate)
                .collect(),
        }
    }

    pub fn to_certificates(&self) -> Result<Vec<LocalCertificate>, FormatError> {
        check_schema(&self.schema)?;
        self.certificates
            .iter()
            .map(CertificateEntry::to_certificate)
            .collect()
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: p.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json { path: p, source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let p = path.display().to_string();
    let mut text = serde_json::to_string_pretty(value).map_err(|source| FormatError::Json {
        path: p.clone(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| FormatError::Io { path: p, source })
}

/// Reads and validates a network file.
pub fn load_network(path: &Path) -> Result<NetworkSpec, FormatError> {
    read_json::<NetworkFile>(path)?.to_spec()
}

pub fn save_network(path: &Path, spec: &NetworkSpec) -> Result<(), FormatError> {
    write_json(path, &NetworkFile::from_spec(spec))
}

pub fn load_certificates(path: &Path) -> Result<Vec<LocalCertificate>, FormatError> {
    read_json::<CertificateFile>(path)?.to_certificates()
}

pub fn save_certificates(path: &Path, certs: &[LocalCertificate]) -> Result<(), FormatError> {
    write_json(path, &CertificateFile::from_certificates(certs))
}
