//! On-disk formats: EMB1 embedding files, fitted model files and run
//! manifests.
//!
//! EMB1 layout (all little-endian, row-major payload):
//!
//! | field     | bytes            |
//! |-----------|------------------|
//! | magic     | `EMB1`           |
//! | version   | u16 = 1          |
//! | modality  | u8 (0 image, 1 text) |
//! | reserved  | u8 = 0           |
//! | n         | u64              |
//! | dim       | u64              |
//! | tag len   | u16              |
//! | model tag | UTF-8 bytes      |
//! | payload   | n·dim × f64      |
//!
//! Model files (`MID1`) use the same conventions with a section table; see
//! [`save_model`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gaussmi::GaussianJointModel;
use crate::matstat::Matrix;

const EMB1_MAGIC: &[u8; 4] = b"EMB1";
const EMB1_VERSION: u16 = 1;
const EMB1_FIXED_HEADER: usize = 4 + 2 + 1 + 1 + 8 + 8 + 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

impl Modality {
    fn code(self) -> u8 {
        match self {
            Modality::Image => 0,
            Modality::Text => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Modality::Image),
            1 => Ok(Modality::Text),
            other => Err(Error::Format(format!("unknown modality code {other}"))),
        }
    }
}

/// `n × dim` features from one extractor and modality.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    modality: Modality,
    model_tag: String,
    data: Matrix,
}

impl EmbeddingSet {
    pub fn new(modality: Modality, model_tag: impl Into<String>, data: Matrix) -> Result<Self> {
        if data.cols() == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let model_tag = model_tag.into();
        if model_tag.len() > u16::MAX as usize {
            return Err(Error::invalid("model tag longer than 65535 bytes"));
        }
        Ok(EmbeddingSet {
            modality,
            model_tag,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads an EMB1 file, or a headerless CSV when the extension is `.csv`.
/// CSV sets are tagged as image features with model tag `csv`.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if is_csv(path) {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Format(format!("{}: CSV is not UTF-8", path.display())))?;
        return parse_csv(&text);
    }
    decode_emb1(&bytes)
}

pub fn parse_csv(text: &str) -> Result<EmbeddingSet> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::Format(format!("line {}: cannot parse '{}' as a number", lineno + 1, field.trim()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    EmbeddingSet::new(Modality::Image, "csv", Matrix::from_rows(&rows)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(out)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn decode_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub fn decode_emb1(bytes: &[u8]) -> Result<EmbeddingSet> {
    if bytes.len() < 4 || &bytes[..4] != EMB1_MAGIC {
        return Err(Error::NotEmb1);
    }
    let header_short = || Error::Truncated {
        expected: EMB1_FIXED_HEADER as u64,
        actual: bytes.len() as u64,
    };
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u16().ok_or_else(header_short)?;
    if version != EMB1_VERSION {
        return Err(Error::Format(format!("unsupported EMB1 version {version}")));
    }
    let modality = Modality::from_code(cur.u8().ok_or_else(header_short)?)?;
    let _reserved = cur.u8().ok_or_else(header_short)?;
    let n = cur.u64().ok_or_else(header_short)?;
    let dim = cur.u64().ok_or_else(header_short)?;
    let tag_len = cur.u16().ok_or_else(header_short)? as usize;
    let tag = cur.take(tag_len).ok_or(Error::Truncated {
        expected: (EMB1_FIXED_HEADER + tag_len) as u64,
        actual: bytes.len() as u64,
    })?;
    let model_tag = std::str::from_utf8(tag)
        .map_err(|_| Error::Format("model tag is not UTF-8".into()))?
        .to_owned();

    let expected = n
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Format(format!("payload size overflows for n={n}, dim={dim}")))?;
    let actual = cur.remaining() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload of {expected} bytes",
            actual - expected
        )));
    }
    let values = decode_f64s(cur.take(expected as usize).unwrap());
    let data = Matrix::from_vec(n as usize, dim as usize, values)?;
    EmbeddingSet::new(modality, model_tag, data)
}

pub fn encode_emb1(set: &EmbeddingSet) -> Vec<u8> {
    let tag = set.model_tag.as_bytes();
    let mut out = Vec::with_capacity(EMB1_FIXED_HEADER + tag.len() + set.data.data().len() * 8);
    out.extend_from_slice(EMB1_MAGIC);
    out.extend_from_slice(&EMB1_VERSION.to_le_bytes());
    out.push(set.modality.code());
    out.push(0);
    out.extend_from_slice(&(set.n() as u64).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(tag.len() as u16).to_le_bytes());
    out.extend_from_slice(tag);
    for v in set.data.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    if set.dim() == 0 {
        return Err(Error::invalid("cannot write an embedding set with zero dimension"));
    }
    write_atomic(path.as_ref(), &encode_emb1(set))
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

const MODEL_MAGIC: &[u8; 4] = b"MID1";
const MODEL_VERSION: u16 = 1;
const SECTION_MEAN: &[u8; 4] = b"MEAN";
const SECTION_COV: &[u8; 4] = b"COVZ";
const SECTION_DERIVED: &[u8; 4] = b"DRVD";
const DIGEST_LEN: usize = 32;

fn sha256(bytes: &[u8]) -> [u8; DIGEST_LEN] {
    Sha256::digest(bytes).into()
}

/// Log-determinants, MI and a digest of the three precision matrices, in the
/// byte form stored in the `DRVD` section.
fn derived_section(model: &GaussianJointModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * 8 + DIGEST_LEN);
    for v in [
        model.x_marg().logdet(),
        model.y_marg().logdet(),
        model.z_joint().logdet(),
        model.mi(),
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut hasher = Sha256::new();
    for g in [model.x_marg(), model.y_marg(), model.z_joint()] {
        for v in g.precision().data() {
            hasher.update(v.to_le_bytes());
        }
    }
    out.extend_from_slice(&hasher.finalize());
    out
}

/// Serializes a model.
///
/// Layout: magic `MID1` | version u16 | reserved u16 | dim u64 | n_ref u64 |
/// epsilon f64 | section count u32 | section table (tag `[u8;4]`, offset u64,
/// length u64) | sections | SHA-256 of everything before it.
///
/// Sections: `MEAN` joint mean (2·dim f64), `COVZ` joint covariance
/// (2·dim × 2·dim f64), `DRVD` log-dets of x/y/z, MI, and a SHA-256 of the
/// precision matrices. Only the moments and ε are authoritative; the derived
/// values are recomputed on load and compared.
pub fn encode_model(model: &GaussianJointModel) -> Vec<u8> {
    let mut mean = Vec::new();
    for v in model.z_joint().mean() {
        mean.extend_from_slice(&v.to_le_bytes());
    }
    let mut cov = Vec::new();
    for v in model.z_joint().cov().data() {
        cov.extend_from_slice(&v.to_le_bytes());
    }
    let sections: [(&[u8; 4], Vec<u8>); 3] = [
        (SECTION_MEAN, mean),
        (SECTION_COV, cov),
        (SECTION_DERIVED, derived_section(model)),
    ];

    let header_len = 4 + 2 + 2 + 8 + 8 + 8 + 4;
    let table_len = sections.len() * (4 + 8 + 8);
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(model.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(model.n_ref() as u64).to_le_bytes());
    out.extend_from_slice(&model.epsilon().to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    let mut offset = (header_len + table_len) as u64;
    for (tag, body) in &sections {
        out.extend_from_slice(*tag);
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        offset += body.len() as u64;
    }
    for (_, body) in &sections {
        out.extend_from_slice(body);
    }
    let digest = sha256(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<GaussianJointModel> {
    let corrupt = |msg: &str| Error::CorruptModel(msg.to_owned());
    if bytes.len() < 4 + DIGEST_LEN || &bytes[..4] != MODEL_MAGIC {
        return Err(corrupt("not a MID1 model file"));
    }
    let (body, stored_digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if sha256(body) != stored_digest {
        return Err(corrupt("file checksum mismatch"));
    }
    let short = || corrupt("header is truncated");
    let mut cur = Cursor { bytes: body, pos: 4 };
    let version = cur.u16().ok_or_else(short)?;
    if version != MODEL_VERSION {
        return Err(Error::CorruptModel(format!("unsupported model version {version}")));
    }
    let _reserved = cur.u16().ok_or_else(short)?;
    let dim = cur.u64().ok_or_else(short)? as usize;
    let n_ref = cur.u64().ok_or_else(short)? as usize;
    let epsilon = cur.f64().ok_or_else(short)?;
    let count = cur.u32().ok_or_else(short)? as usize;

    let mut sections: BTreeMap<[u8; 4], &[u8]> = BTreeMap::new();
    for _ in 0..count {
        let tag: [u8; 4] = cur.take(4).ok_or_else(short)?.try_into().unwrap();
        let offset = cur.u64().ok_or_else(short)? as usize;
        let len = cur.u64().ok_or_else(short)? as usize;
        let slice = offset
            .checked_add(len)
            .and_then(|end| body.get(offset..end))
            .ok_or_else(|| corrupt("section lies outside the file"))?;
        sections.insert(tag, slice);
    }
    let section = |tag: &[u8; 4], len: usize| -> Result<&[u8]> {
        let s = sections.get(tag).ok_or_else(|| {
            Error::CorruptModel(format!("missing section {}", String::from_utf8_lossy(tag)))
        })?;
        if s.len() != len {
            return Err(Error::CorruptModel(format!(
                "section {} has {} bytes, expected {len}",
                String::from_utf8_lossy(tag),
                s.len()
            )));
        }
        Ok(s)
    };
    let two_d = dim.checked_mul(2).ok_or_else(|| corrupt("dimension overflows"))?;
    let mean = decode_f64s(section(SECTION_MEAN, two_d * 8)?);
    let cov = decode_f64s(section(SECTION_COV, two_d * two_d * 8)?);
    let stored_derived = section(SECTION_DERIVED, 4 * 8 + DIGEST_LEN)?;

    let cov = Matrix::from_vec(two_d, two_d, cov)?;
    let model = GaussianJointModel::from_joint_moments(dim, mean, cov, epsilon, n_ref)?;
    if derived_section(&model) != stored_derived {
        return Err(corrupt("recomputed precisions and log-determinants do not match the stored digest"));
    }
    Ok(model)
}

pub fn save_model(model: &GaussianJointModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_model(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GaussianJointModel> {
    decode_model(&read_bytes(path.as_ref())?)
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPaths {
    pub x: PathBuf,
    pub y: PathBuf,
}

/// Run description in TOML. Used both as an input (`--manifest`) and as the
/// sidecar echo written next to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PairPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<PairPaths>,
    /// SHA-256 (hex) of each input file, keyed by role.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub input_digests: BTreeMap<String, String>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: None,
            epsilon: crate::gaussmi::DEFAULT_EPSILON,
            seed: None,
            metric: None,
            tie_rule: None,
            reference: None,
            evaluation: None,
            input_digests: BTreeMap::new(),
        }
    }
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest =
            toml::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "manifest schema version {} is not supported (expected {MANIFEST_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        if !m.epsilon.is_finite() || m.epsilon < 0.0 {
            return Err(Error::Format(format!("manifest epsilon must be >= 0, got {}", m.epsilon)));
        }
        Ok(m)
    }

    /// Parses and validates; relative paths resolve against the manifest's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Manifest::parse(&text)?;
        if let Some(base) = path.parent() {
            for pair in [&mut m.reference, &mut m.evaluation].into_iter().flatten() {
                for p in [&mut pair.x, &mut pair.y] {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            }
        }
        m.validate()?;
        Ok(m)
    }

    /// Every referenced embedding file must exist and parse.
    pub fn validate(&self) -> Result<()> {
        for pair in [&self.reference, &self.evaluation].into_iter().flatten() {
            let x = read_embeddings(&pair.x)?;
            let y = read_embeddings(&pair.y)?;
            if x.n() != y.n() {
                return Err(Error::invalid(format!(
                    "paired files disagree on n: {} has {}, {} has {}",
                    pair.x.display(),
                    x.n(),
                    pair.y.display(),
                    y.n()
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("manifest: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_toml()?.as_bytes())
    }

    /// Applies a `key=value` override such as `epsilon=1e-3` or
    /// `reference.x=ref_x.emb`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override '{assignment}' is not key=value")))?;
        let (key, value) = (key.trim(), value.trim());
        let parse_f64 = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::invalid(format!("override {key}: '{v}' is not a number")))
        };
        match key {
            "epsilon" => {
                let eps = parse_f64(value)?;
                if !eps.is_finite() || eps < 0.0 {
                    return Err(Error::invalid(format!("epsilon must be >= 0, got {eps}")));
                }
                self.epsilon = eps;
            }
            "seed" => {
                self.seed = Some(value.parse().map_err(|_| {
                    Error::invalid(format!("override seed: '{value}' is not an integer"))
                })?)
            }
            "metric" => self.metric = Some(value.to_owned()),
            "tie_rule" => self.tie_rule = Some(value.to_owned()),
            "reference.x" | "reference.y" | "evaluation.x" | "evaluation.y" => {
                let slot = if key.starts_with("reference") {
                    &mut self.reference
                } else {
                    &mut self.evaluation
                };
                let pair = slot.get_or_insert_with(|| PairPaths {
                    x: PathBuf::new(),
                    y: PathBuf::new(),
                });
                if key.ends_with(".x") {
                    pair.x = PathBuf::from(value);
                } else {
                    pair.y = PathBuf::from(value);
                }
            }
            other => return Err(Error::invalid(format!("unknown manifest key '{other}'"))),
        }
        Ok(())
    }
}

/// Hex SHA-256 of a file's contents.
pub fn digest_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    Ok(hex::encode(sha256(&read_bytes(path)?)))
}
