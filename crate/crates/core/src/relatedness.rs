//! Square sense-by-sense matrices shared by the model and human sides.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LemmaKey;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelatednessSource {
    CentroidCosine,
    HumanAggregate,
    Confusion,
}

impl RelatednessSource {
    pub fn is_symmetric(self) -> bool {
        !matches!(self, RelatednessSource::Confusion)
    }
}

/// Pairwise sense relatedness in `[0, 1]` for one word type, stored row-major
/// with senses in `sense_keys` order.
///
/// Centroid matrices additionally carry the raw cosine distances they were
/// normalised from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatednessMatrix {
    pub lemma: LemmaKey,
    pub source: RelatednessSource,
    pub sense_keys: Vec<String>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
}

impl RelatednessMatrix {
    pub fn new(
        lemma: LemmaKey,
        source: RelatednessSource,
        sense_keys: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = RelatednessMatrix {
            lemma,
            source,
            sense_keys,
            values,
            distances: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sense_keys.len();
        if self.values.len() != n * n {
            return Err(Error::Data(format!(
                "{}: {} senses but {} values",
                self.lemma,
                n,
                self.values.len()
            )));
        }
        if let Some(d) = &self.distances {
            if d.len() != n * n {
                return Err(Error::Data(format!(
                    "{}: distance matrix size mismatch",
                    self.lemma
                )));
            }
        }
        let mut sorted = self.sense_keys.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n {
            return Err(Error::Data(format!("{}: duplicate sense keys", self.lemma)));
        }
        for (k, &v) in self.values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Data(format!(
                    "{}: entry ({}, {}) = {v} outside [0, 1]",
                    self.lemma,
                    k / n,
                    k % n
                )));
            }
        }
        if self.source.is_symmetric() {
            for i in 0..n {
                if self.get(i, i) != 1.0 {
                    return Err(Error::Data(format!(
                        "{}: diagonal entry {i} is not 1",
                        self.lemma
                    )));
                }
                for j in (i + 1)..n {
                    if (self.get(i, j) - self.get(j, i)).abs() > 1e-12 {
                        return Err(Error::Data(format!(
                            "{}: asymmetric at ({i}, {j})",
                            self.lemma
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sense_keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sense_keys.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn index_of(&self, sense: &str) -> Option<usize> {
        self.sense_keys.iter().position(|s| s == sense)
    }

    pub fn is_numerically_symmetric(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| (i + 1..n).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= 1e-12))
    }

    /// Submatrix over `senses`, kept in this matrix's order. Values are not
    /// renormalised.
    pub fn restrict(&self, senses: &[String]) -> Result<RelatednessMatrix> {
        let idx: Vec<usize> = self
            .sense_keys
            .iter()
            .enumerate()
            .filter(|(_, s)| senses.contains(s))
            .map(|(i, _)| i)
            .collect();
        if idx.len() != senses.len() {
            let missing: Vec<&String> = senses
                .iter()
                .filter(|s| !self.sense_keys.contains(s))
                .collect();
            return Err(Error::Alignment(format!(
                "{}: senses {missing:?} not present",
                self.lemma
            )));
        }
        let pick = |src: &[f64]| -> Vec<f64> {
            idx.iter()
                .flat_map(|&i| idx.iter().map(move |&j| (i, j)))
                .map(|(i, j)| src[i * self.len() + j])
                .collect()
        };
        Ok(RelatednessMatrix {
            lemma: self.lemma.clone(),
            source: self.source,
            sense_keys: idx.iter().map(|&i| self.sense_keys[i].clone()).collect(),
            values: pick(&self.values),
            distances: self.distances.as_deref().map(pick),
        })
    }

    /// Distances for the polysemy/homonymy split. `raw` selects the stored
    /// cosine distances when present; otherwise `1 - relatedness`.
    pub fn distance(&self, i: usize, j: usize, raw: bool) -> f64 {
        match (&self.distances, raw) {
            (Some(d), true) => d[i * self.len() + j],
            _ => 1.0 - self.get(i, j),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<RelatednessMatrix> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RelatednessMatrix = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }
}

/// Reads every `*.json` matrix in a directory, sorted by lemma.
pub fn load_matrix_dir(
    dir: &Path,
) -> Result<std::collections::BTreeMap<LemmaKey, RelatednessMatrix>> {
    let mut out = std::collections::BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let m = RelatednessMatrix::load_json(&path)?;
        out.insert(m.lemma.clone(), m);
    }
    Ok(out)
}

/// File name used for per-lemma matrix outputs.
pub fn matrix_file_name(lemma: &LemmaKey) -> String {
    format!("{lemma}.json")
}
