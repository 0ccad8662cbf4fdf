//! Per-token embedding vectors, sense centroids and centroid relatedness.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "SEMB" | u32 version = 1 | u32 dimension | u64 record count
//! repeated: u64 token_id | dimension x f32
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedToken, LemmaKey};
use crate::error::{Error, Result};
use crate::relatedness::{RelatednessMatrix, RelatednessSource};

pub const MAGIC: &[u8; 4] = b"SEMB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbedding {
    pub token_id: u64,
    pub vector: Vec<f32>,
}

/// Immutable embedding store joined against the token list.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<u64>,
    data: Vec<f32>,
    by_sense: BTreeMap<LemmaKey, BTreeMap<String, Vec<usize>>>,
}

impl EmbeddingStore {
    /// Builds a store from in-memory records. Records keep their order.
    pub fn from_records(
        dim: usize,
        records: Vec<TokenEmbedding>,
        tokens: &[AnnotatedToken],
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("embedding dimension must be positive".into()));
        }
        let lookup: HashMap<u64, &AnnotatedToken> =
            tokens.iter().map(|t| (t.token_id, t)).collect();
        let mut ids = Vec::with_capacity(records.len());
        let mut data = Vec::with_capacity(records.len() * dim);
        let mut seen = HashSet::new();
        let mut by_sense: BTreeMap<LemmaKey, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
        for (row, rec) in records.into_iter().enumerate() {
            if rec.vector.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: rec.vector.len(),
                });
            }
            if let Some(k) = rec.vector.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "token {} has non-finite component at index {k}",
                    rec.token_id
                )));
            }
            let token = lookup.get(&rec.token_id).ok_or_else(|| {
                Error::Integrity(format!(
                    "embedding references unknown token_id {}",
                    rec.token_id
                ))
            })?;
            if !seen.insert(rec.token_id) {
                return Err(Error::Integrity(format!(
                    "duplicate embedding for token_id {}",
                    rec.token_id
                )));
            }
            by_sense
                .entry(token.lemma.clone())
                .or_default()
                .entry(token.sense_key.clone())
                .or_default()
                .push(row);
            ids.push(rec.token_id);
            data.extend_from_slice(&rec.vector);
        }
        Ok(EmbeddingStore {
            dim,
            ids,
            data,
            by_sense,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn token_id(&self, row: usize) -> u64 {
        self.ids[row]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn records(&self) -> impl Iterator<Item = (u64, &[f32])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(r, &id)| (id, self.row(r)))
    }

    pub fn lemmas(&self) -> impl Iterator<Item = &LemmaKey> {
        self.by_sense.keys()
    }

    /// Senses of `lemma` with at least one embedded token, in key order.
    pub fn senses(&self, lemma: &LemmaKey) -> Vec<String> {
        self.by_sense
            .get(lemma)
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default()
    }

    /// Store rows for one (lemma, sense), in file order.
    pub fn rows_for(&self, lemma: &LemmaKey, sense: &str) -> &[usize] {
        self.by_sense
            .get(lemma)
            .and_then(|m| m.get(sense))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All `(token_id, sense, vector)` triples for a lemma, grouped by sense
    /// in key order.
    pub fn lemma_tokens(&self, lemma: &LemmaKey) -> Vec<(u64, String, Vec<f64>)> {
        let mut out = Vec::new();
        if let Some(senses) = self.by_sense.get(lemma) {
            for (sense, rows) in senses {
                for &r in rows {
                    out.push((self.ids[r], sense.clone(), widen(self.row(r))));
                }
            }
        }
        out
    }
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

pub fn write_embeddings<W: Write>(writer: W, dim: usize, records: &[TokenEmbedding]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let io = |e| Error::io("<embeddings>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(VERSION).map_err(io)?;
    let dim32 =
        u32::try_from(dim).map_err(|_| Error::Format(format!("dimension {dim} too large")))?;
    w.write_u32::<LittleEndian>(dim32).map_err(io)?;
    w.write_u64::<LittleEndian>(records.len() as u64)
        .map_err(io)?;
    for rec in records {
        if rec.vector.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                actual: rec.vector.len(),
            });
        }
        w.write_u64::<LittleEndian>(rec.token_id).map_err(io)?;
        for &x in &rec.vector {
            w.write_f32::<LittleEndian>(x).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn save_embeddings(path: &Path, dim: usize, records: &[TokenEmbedding]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(file, dim, records)
}

/// Parses the binary format into `(dimension, records)`.
pub fn read_embeddings<R: Read>(reader: R) -> Result<(usize, Vec<TokenEmbedding>)> {
    let mut r = BufReader::new(reader);
    let truncated = |what: &str| Error::Format(format!("truncated file while reading {what}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected \"SEMB\""
        )));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| truncated("version"))?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = r
        .read_u32::<LittleEndian>()
        .map_err(|_| truncated("dimension"))? as usize;
    if dim == 0 {
        return Err(Error::Format("dimension must be positive".into()));
    }
    let count = r
        .read_u64::<LittleEndian>()
        .map_err(|_| truncated("record count"))?;
    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    for i in 0..count {
        let token_id = r
            .read_u64::<LittleEndian>()
            .map_err(|_| truncated(&format!("record {i}")))?;
        let mut vector = vec![0f32; dim];
        r.read_f32_into::<LittleEndian>(&mut vector)
            .map_err(|_| truncated(&format!("record {i}")))?;
        records.push(TokenEmbedding { token_id, vector });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)
        .map_err(|e| Error::io("<embeddings>", e))?
        != 0
    {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Ok((dim, records))
}

pub fn load_embeddings(path: &Path, tokens: &[AnnotatedToken]) -> Result<EmbeddingStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (dim, records) = read_embeddings(file)?;
    EmbeddingStore::from_records(dim, records, tokens)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseCentroid {
    pub lemma: LemmaKey,
    pub sense_key: String,
    pub vector: Vec<f64>,
    pub support: usize,
}

/// Arithmetic mean of the sense's token vectors, accumulated in f64.
pub fn centroid(
    store: &EmbeddingStore,
    lemma: &LemmaKey,
    sense_key: &str,
) -> Result<SenseCentroid> {
    let rows = store.rows_for(lemma, sense_key);
    if rows.is_empty() {
        return Err(Error::MissingSense {
            lemma: lemma.to_string(),
            sense: sense_key.to_string(),
        });
    }
    let mut acc = vec![0f64; store.dim()];
    for &r in rows {
        for (a, &x) in acc.iter_mut().zip(store.row(r)) {
            *a += f64::from(x);
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(SenseCentroid {
        lemma: lemma.clone(),
        sense_key: sense_key.to_string(),
        vector: acc,
        support: rows.len(),
    })
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine distance of a zero vector".into()));
    }
    let cos = dot / (na * nb).sqrt();
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// How raw centroid distances become relatedness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelatednessNorm {
    /// `1 - d / d_max`
    #[default]
    Max,
    /// `1 - (d - d_min) / (d_max - d_min)`; falls back to `Max` when every
    /// off-diagonal distance is equal.
    MinMax,
}

impl std::str::FromStr for RelatednessNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(RelatednessNorm::Max),
            "minmax" => Ok(RelatednessNorm::MinMax),
            other => Err(Error::Config(format!("unknown relatedness norm {other:?}"))),
        }
    }
}

/// Normalises a row-major matrix of pairwise distances (diagonal ignored)
/// into relatedness with unit diagonal.
pub fn normalize_distances(distances: &[f64], n: usize, norm: RelatednessNorm) -> Option<Vec<f64>> {
    let off: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| distances[i * n + j])
        .collect();
    let d_max = off.iter().copied().fold(0.0, f64::max);
    if d_max <= 0.0 {
        return None;
    }
    let d_min = off.iter().copied().fold(f64::INFINITY, f64::min);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = if i == j {
                1.0
            } else {
                let d = distances[i * n + j];
                let r = match norm {
                    RelatednessNorm::MinMax if d_max > d_min => 1.0 - (d - d_min) / (d_max - d_min),
                    _ => 1.0 - d / d_max,
                };
                r.clamp(0.0, 1.0)
            };
        }
    }
    Some(out)
}

/// Relatedness matrix over the lemma's attested senses from centroid cosine
/// distances. The stored `distances` are the raw cosine distances.
pub fn centroid_relatedness_matrix(
    store: &EmbeddingStore,
    lemma: &LemmaKey,
    norm: RelatednessNorm,
) -> Result<RelatednessMatrix> {
    let senses = store.senses(lemma);
    if senses.len() < 2 {
        return Err(Error::Domain(format!(
            "{lemma}: need at least 2 senses with embeddings, found {}",
            senses.len()
        )));
    }
    let centroids = senses
        .iter()
        .map(|s| centroid(store, lemma, s))
        .collect::<Result<Vec<_>>>()?;
    let vectors: Vec<&[f64]> = centroids.iter().map(|c| c.vector.as_slice()).collect();
    relatedness_from_vectors(lemma, senses, &vectors, norm)
}

pub fn relatedness_from_vectors(
    lemma: &LemmaKey,
    sense_keys: Vec<String>,
    vectors: &[&[f64]],
    norm: RelatednessNorm,
) -> Result<RelatednessMatrix> {
    let n = vectors.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(vectors[i], vectors[j])?;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let values = normalize_distances(&dist, n, norm)
        .ok_or_else(|| Error::DegenerateGeometry(lemma.to_string()))?;
    let mut m = RelatednessMatrix::new(
        lemma.clone(),
        RelatednessSource::CentroidCosine,
        sense_keys,
        values,
    )?;
    m.distances = Some(dist);
    Ok(m)
}
