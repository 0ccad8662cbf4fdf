use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embeddings::cosine_distance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::Parameter(format!("unknown metric {other:?}"))),
        }
    }
}

/// One agglomeration step. Leaves are `0..n`; the cluster formed by merge
/// `i` gets id `n + i`, and `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Leaves in drawing order: depth-first, left child first.
    pub fn leaf_order(&self) -> Vec<usize> {
        let n = self.n_leaves;
        if self.merges.is_empty() {
            return (0..n).collect();
        }
        let mut out = Vec::with_capacity(n);
        let mut stack = vec![n + self.merges.len() - 1];
        while let Some(id) = stack.pop() {
            if id < n {
                out.push(id);
            } else {
                let m = &self.merges[id - n];
                stack.push(m.b);
                stack.push(m.a);
            }
        }
        out
    }
}

pub fn pairwise_distances(vectors: &[Vec<f64>], metric: Metric) -> Result<Vec<f64>> {
    let n = vectors.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = match metric {
                Metric::Cosine => cosine_distance(&vectors[i], &vectors[j])?,
                Metric::Euclidean => {
                    if vectors[i].len() != vectors[j].len() {
                        return Err(Error::Shape {
                            expected: vectors[i].len(),
                            actual: vectors[j].len(),
                        });
                    }
                    vectors[i]
                        .iter()
                        .zip(&vectors[j])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt()
                }
            };
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok(d)
}

/// Minimum spanning tree edges `(u, v, weight)` by Prim's algorithm over a
/// dense distance matrix, in the order they were added.
fn prim(d: &[f64], n: usize) -> Vec<(usize, usize, f64)> {
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for v in 0..n {
            if !in_tree[v] && d[current * n + v] < best[v] {
                best[v] = d[current * n + v];
                parent[v] = current;
            }
        }
        let next = (0..n)
            .filter(|&v| !in_tree[v])
            .fold(None, |acc: Option<usize>, v| match acc {
                Some(b) if best[b] <= best[v] => Some(b),
                _ => Some(v),
            })
            .expect("vertex left");
        in_tree[next] = true;
        edges.push((parent[next], next, best[next]));
        current = next;
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
    cluster: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage clustering from a dense distance matrix: MST edges sorted
/// by weight, merged with union-find.
pub fn single_linkage_from_distances(d: &[f64], n: usize) -> Result<Dendrogram> {
    if n < 2 {
        return Err(Error::Size(format!(
            "single linkage needs at least 2 points, got {n}"
        )));
    }
    if d.len() != n * n {
        return Err(Error::Shape {
            expected: n * n,
            actual: d.len(),
        });
    }
    if d.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("NaN distance".into()));
    }
    let mut edges = prim(d, n);
    edges.sort_by(|x, y| x.2.total_cmp(&y.2));
    let mut uf = UnionFind {
        parent: (0..n).collect(),
        cluster: (0..n).collect(),
        size: vec![1; n],
    };
    let mut merges = Vec::with_capacity(n - 1);
    for (u, v, w) in edges {
        let (ru, rv) = (uf.find(u), uf.find(v));
        let (ca, cb) = (uf.cluster[ru], uf.cluster[rv]);
        let size = uf.size[ru] + uf.size[rv];
        uf.parent[rv] = ru;
        uf.size[ru] = size;
        uf.cluster[ru] = n + merges.len();
        merges.push(Merge {
            a: ca.min(cb),
            b: ca.max(cb),
            height: w,
            size,
        });
    }
    debug_assert!(merges.windows(2).all(|w| w[0].height <= w[1].height));
    Ok(Dendrogram {
        n_leaves: n,
        merges,
    })
}

pub fn single_linkage(vectors: &[Vec<f64>], metric: Metric) -> Result<Dendrogram> {
    let d = pairwise_distances(vectors, metric)?;
    single_linkage_from_distances(&d, vectors.len())
}
