//! Deterministic synthetic dataset with known ground truth.
//!
//! Each sense of a word type gets an angle `theta`. Token embeddings are the
//! unit vector at that angle plus noise drawn in `+n/-n` pairs, so every sense
//! centroid equals its planted base vector exactly. Every value is a multiple
//! of `2^-22`, which f32 stores exactly. Consistent participants place senses
//! on a horizontal line at `x = 100 + 400 * phi` (translated per participant),
//! where `phi` is a separate human-side angle.
//! Planted responders use whichever permutation of the true positions
//! correlates worst with them. Rank statistics of the fixture are therefore
//! known in closed form; [`Expected`] records them. The human angles differ
//! from the model angles for most word types, so the planted correlation
//! between the two sides is well below one.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{write_corpus, AnnotatedToken, LemmaKey, Pos};
use crate::embeddings::{save_embeddings, TokenEmbedding};
use crate::error::{Error, Result};
use crate::human::{write_placements, Canvas, PlacementTrial, TrialType};
use crate::seed;
use crate::stats::{spearman_r, PairLabel, Relation};

pub const DIM: usize = 6;
const QUANTUM: f64 = 1.0 / 4_194_304.0; // 2^-22
const CANVAS: Canvas = Canvas { w: 800.0, h: 600.0 };
const PARTICIPANTS: usize = 14;
/// Participants who place senses adversarially.
pub const RESPONDERS: [&str; 2] = ["s05", "s11"];
/// Consistent participant flagged by the external language criterion.
pub const LANGUAGE_EXCLUDED: &str = "s09";

struct Design {
    word: &'static str,
    pos: Pos,
    role: Role,
    /// Model-side sense angles.
    angles: &'static [f64],
    /// Angles behind the human placements; empty for unjudged types.
    human: &'static [f64],
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Shared,
    Test,
    ModelOnly,
}

const DESIGN: &[Design] = &[
    Design {
        word: "anchor",
        pos: Pos::Noun,
        role: Role::Shared,
        angles: &[0.00, 0.31, 1.27],
        human: &[0.00, 0.75, 1.27],
    },
    Design {
        word: "crane",
        pos: Pos::Noun,
        role: Role::Shared,
        angles: &[0.00, 0.22, 1.43],
        human: &[0.00, 0.22, 1.43],
    },
    Design {
        word: "pitch",
        pos: Pos::Noun,
        role: Role::Shared,
        angles: &[0.05, 0.47, 1.39],
        human: &[0.40, 0.05, 1.39],
    },
    Design {
        word: "draw",
        pos: Pos::Verb,
        role: Role::Shared,
        angles: &[0.00, 0.58, 1.21],
        human: &[0.00, 0.95, 1.10],
    },
    Design {
        word: "run",
        pos: Pos::Verb,
        role: Role::Shared,
        angles: &[0.10, 0.36, 1.49],
        human: &[0.10, 0.36, 1.49],
    },
    Design {
        word: "mine",
        pos: Pos::Noun,
        role: Role::Shared,
        angles: &[0.00, 0.41, 1.13],
        human: &[0.00, 0.60, 0.75],
    },
    Design {
        word: "bass",
        pos: Pos::Noun,
        role: Role::Test,
        angles: &[0.00, 0.18, 0.43, 1.50],
        human: &[0.00, 0.50, 0.21, 1.30],
    },
    Design {
        word: "bolt",
        pos: Pos::Noun,
        role: Role::Test,
        angles: &[0.10, 0.62, 1.32],
        human: &[0.10, 0.62, 1.32],
    },
    Design {
        word: "charge",
        pos: Pos::Verb,
        role: Role::Test,
        angles: &[0.00, 0.39, 0.94, 1.52],
        human: &[0.00, 1.10, 0.40, 1.45],
    },
    Design {
        word: "file",
        pos: Pos::Verb,
        role: Role::Test,
        angles: &[0.20, 0.35, 1.33],
        human: &[0.20, 0.90, 1.00],
    },
    Design {
        word: "seal",
        pos: Pos::Noun,
        role: Role::Test,
        angles: &[0.00, 0.27, 1.09, 1.31],
        human: &[0.00, 0.27, 1.09, 1.31],
    },
    Design {
        word: "spring",
        pos: Pos::Noun,
        role: Role::Test,
        angles: &[0.00, 0.55, 1.47],
        human: &[0.30, 0.55, 1.47],
    },
    Design {
        word: "line",
        pos: Pos::Noun,
        role: Role::ModelOnly,
        angles: &[0.0, 0.3, 0.6, 0.9, 1.2, 1.5],
        human: &[],
    },
];

/// Lemmas judged twice by every participant.
const REPEATED: [&str; 2] = ["bass", "bolt"];

/// Corpus-only lemmas exercising the stopword, zero-entropy and
/// minimum-token filters: (word, pos, tokens per sense).
const FILLERS: &[(&str, Pos, &[u64])] = &[
    ("be", Pos::Verb, &[20, 10]),
    ("cat", Pos::Noun, &[15]),
    ("dog", Pos::Noun, &[12]),
    ("rare", Pos::Noun, &[3, 2]),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    /// Standard deviation of the per-dimension token noise.
    pub noise: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 20_190_611,
            noise: 0.06,
        }
    }
}

/// Ground truth derived directly from the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    /// Pooled upper-triangle Spearman between human and centroid relatedness
    /// over every judged word type.
    pub cosine_r: f64,
    pub cosine_pairs: usize,
    pub human_lemmas: Vec<String>,
    pub excluded: Vec<String>,
    /// Labelled pair distances, in label order.
    pub human_polysemy: Vec<f64>,
    pub human_homonymy: Vec<f64>,
    pub model_polysemy: Vec<f64>,
    pub model_homonymy: Vec<f64>,
    /// Pairs (polysemy, homonymy) with the polysemy distance smaller, ties
    /// counted one half.
    pub human_u_polysemy: f64,
    pub model_u_polysemy: f64,
    pub entropy: BTreeMap<String, f64>,
    pub candidates: Vec<String>,
    pub total_lemmas: usize,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub tokens: Vec<AnnotatedToken>,
    pub embeddings: Vec<TokenEmbedding>,
    pub trials: Vec<PlacementTrial>,
    pub labels: Vec<PairLabel>,
    pub expected: Expected,
}

fn quantize(v: f64) -> f64 {
    (v / QUANTUM).round() * QUANTUM
}

fn sense_keys(d: &Design) -> Vec<String> {
    let pos = d.pos.code();
    (1..=d.angles.len())
        .map(|i| format!("{}.{pos}.{i:02}", d.word))
        .collect()
}

fn lemma_of(word: &str, pos: Pos) -> LemmaKey {
    LemmaKey::new(word, pos).expect("fixture lemma")
}

/// Tokens per sense, always even so noise pairs cancel.
fn tokens_per_sense(d: &Design, i: usize) -> usize {
    if d.role == Role::ModelOnly {
        16
    } else {
        [24, 18, 12, 30][i % 4]
    }
}

fn base_vector(theta: f64) -> Vec<f64> {
    let mut v = vec![0.0; DIM];
    v[0] = quantize(theta.cos());
    v[1] = quantize(theta.sin());
    v
}

fn line_position(theta: f64) -> f64 {
    (100.0 + 400.0 * theta).round()
}

/// Unnormalised cosine distance between two base vectors, computed directly.
fn base_distance(a: f64, b: f64) -> f64 {
    let (u, v) = (base_vector(a), base_vector(b));
    let dot: f64 = u.iter().zip(&v).map(|(x, y)| x * y).sum();
    let nu: f64 = u.iter().map(|x| x * x).sum();
    let nv: f64 = v.iter().map(|x| x * x).sum();
    1.0 - dot / (nu * nv).sqrt()
}

fn upper<T: Copy>(n: usize, f: impl Fn(usize, usize) -> T) -> Vec<T> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(f(i, j));
        }
    }
    out
}

/// Relatedness `1 - d / max d` over the upper triangle.
fn relatedness(distances: &[f64]) -> Vec<f64> {
    let max = distances.iter().copied().fold(0.0, f64::max);
    distances.iter().map(|d| 1.0 - d / max).collect()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len())
        .rev()
        .find(|&j| p[j] > p[i - 1])
        .expect("successor");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Assignment of positions to senses whose pairwise distances correlate
/// least with the true ones; the lexicographically first wins ties.
fn adversarial(positions: &[f64]) -> Vec<usize> {
    let n = positions.len();
    let truth = upper(n, |i, j| (positions[i] - positions[j]).abs());
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    loop {
        let d = upper(n, |i, j| (positions[perm[i]] - positions[perm[j]]).abs());
        let r = spearman_r(&truth, &d).unwrap_or(0.0);
        if r < best.0 {
            best = (r, perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best.1
}

fn participant_id(p: usize) -> String {
    format!("s{:02}", p + 1)
}

fn trial(
    pid: &str,
    index: u32,
    kind: TrialType,
    d: &Design,
    shift: (f64, f64),
    perm: Option<&[usize]>,
) -> PlacementTrial {
    let keys = sense_keys(d);
    let xs: Vec<f64> = d.human.iter().map(|&t| line_position(t)).collect();
    let placements = keys
        .into_iter()
        .enumerate()
        .map(|(i, k)| {
            let slot = perm.map_or(i, |p| p[i]);
            (k, (xs[slot] + shift.0, 300.0 + shift.1))
        })
        .collect();
    PlacementTrial {
        participant_id: pid.to_string(),
        trial_index: index,
        trial_type: kind,
        lemma: lemma_of(d.word, d.pos),
        canvas: CANVAS,
        placements,
    }
}

fn practice_trial(pid: &str, index: u32) -> PlacementTrial {
    let pts = [(120.0, 80.0), (400.0, 500.0), (650.0, 210.0)];
    PlacementTrial {
        participant_id: pid.to_string(),
        trial_index: index,
        trial_type: TrialType::Training,
        lemma: lemma_of("practice", Pos::Noun),
        canvas: CANVAS,
        placements: pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                (
                    format!("practice.n.{:02}", i + 1),
                    (x + index as f64 * 10.0, y),
                )
            })
            .collect(),
    }
}

fn u_smaller(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x < y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

fn entropy_of(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

pub fn generate(spec: &FixtureSpec) -> Result<Fixture> {
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Parameter(format!(
            "fixture noise must be non-negative, got {}",
            spec.noise
        )));
    }
    let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut tokens = Vec::new();
    let mut embeddings = Vec::new();
    let mut entropy = BTreeMap::new();
    let mut next_id = 0u64;
    let mut push_token = |lemma: &LemmaKey, sense: &str, tokens: &mut Vec<AnnotatedToken>| {
        let id = next_id;
        next_id += 1;
        tokens.push(AnnotatedToken {
            token_id: id,
            sentence_id: id / 3,
            position: (id % 3) as u32 * 4,
            lemma: lemma.clone(),
            sense_key: sense.to_string(),
            surface: lemma.word_type().to_string(),
            sentence_text: None,
        });
        id
    };

    for d in DESIGN {
        let lemma = lemma_of(d.word, d.pos);
        let mut rng = seed::rng(seed::derive_seed(spec.seed, &format!("fixture/{lemma}")));
        let mut counts = Vec::new();
        for (i, (key, &theta)) in sense_keys(d).iter().zip(d.angles).enumerate() {
            let base = base_vector(theta);
            let n = tokens_per_sense(d, i);
            counts.push(n as u64);
            for _ in 0..n / 2 {
                let noise: Vec<f64> = (0..DIM)
                    .map(|_| quantize(normal.sample(&mut rng)))
                    .collect();
                for sign in [1.0, -1.0] {
                    let id = push_token(&lemma, key, &mut tokens);
                    embeddings.push(TokenEmbedding {
                        token_id: id,
                        vector: base
                            .iter()
                            .zip(&noise)
                            .map(|(b, e)| (b + sign * e) as f32)
                            .collect(),
                    });
                }
            }
        }
        entropy.insert(lemma.to_string(), entropy_of(&counts));
    }
    for &(word, pos, counts) in FILLERS {
        let lemma = lemma_of(word, pos);
        for (i, &c) in counts.iter().enumerate() {
            let key = format!("{word}.{}.{:02}", pos.code(), i + 1);
            for _ in 0..c {
                push_token(&lemma, &key, &mut tokens);
            }
        }
        entropy.insert(lemma.to_string(), entropy_of(counts));
    }

    let trials = placements();
    let labels = pair_labels()?;
    let expected = expected(entropy, &labels)?;
    Ok(Fixture {
        tokens,
        embeddings,
        trials,
        labels,
        expected,
    })
}

fn placements() -> Vec<PlacementTrial> {
    let mut trials = Vec::new();
    for p in 0..PARTICIPANTS {
        let pid = participant_id(p);
        let responder = RESPONDERS.contains(&pid.as_str());
        let shift = ((p % 5) as f64 * 10.0, (p % 7) as f64 * 20.0 - 60.0);
        let mut index = 0u32;
        for _ in 0..2 {
            trials.push(practice_trial(&pid, index));
            index += 1;
        }
        for role in [Role::Shared, Role::Test] {
            let kind = if role == Role::Shared {
                TrialType::Shared
            } else {
                TrialType::Test
            };
            for d in DESIGN.iter().filter(|d| d.role == role) {
                let xs: Vec<f64> = d.human.iter().map(|&t| line_position(t)).collect();
                let perm = adversarial(&xs);
                // responders keep their originals faithful on repeated lemmas
                // and scramble the repeat instead
                let scrambled = responder && !REPEATED.contains(&d.word);
                trials.push(trial(
                    &pid,
                    index,
                    kind,
                    d,
                    shift,
                    scrambled.then_some(perm.as_slice()),
                ));
                index += 1;
            }
        }
        for word in REPEATED {
            let d = DESIGN
                .iter()
                .find(|d| d.word == word)
                .expect("repeated lemma in design");
            let xs: Vec<f64> = d.human.iter().map(|&t| line_position(t)).collect();
            let perm = adversarial(&xs);
            trials.push(trial(
                &pid,
                index,
                TrialType::Repeat,
                d,
                shift,
                responder.then_some(perm.as_slice()),
            ));
            index += 1;
        }
    }
    trials
}

fn pair_labels() -> Result<Vec<PairLabel>> {
    let mut out = Vec::new();
    for d in DESIGN.iter().filter(|d| d.role != Role::ModelOnly) {
        let keys = sense_keys(d);
        for i in 0..keys.len() {
            for j in (i + 1)..keys.len() {
                let gap = (d.angles[i] - d.angles[j]).abs();
                let relation = if gap < 0.7 {
                    Relation::Polysemy
                } else if gap > 0.85 {
                    Relation::Homonymy
                } else {
                    continue;
                };
                out.push(PairLabel::new(
                    lemma_of(d.word, d.pos),
                    &keys[i],
                    &keys[j],
                    relation,
                )?);
            }
        }
    }
    Ok(out)
}

type DistanceTables = (Vec<String>, Vec<f64>, Vec<f64>);

fn expected(entropy: BTreeMap<String, f64>, labels: &[PairLabel]) -> Result<Expected> {
    let judged: Vec<&Design> = DESIGN
        .iter()
        .filter(|d| d.role != Role::ModelOnly)
        .collect();
    let mut human = Vec::new();
    let mut model = Vec::new();
    // per lemma: sense keys, human and model distance tables
    let mut tables: BTreeMap<String, DistanceTables> = BTreeMap::new();
    let mut by_name: Vec<&Design> = judged.clone();
    by_name.sort_by_key(|d| lemma_of(d.word, d.pos));
    for d in &by_name {
        let n = d.angles.len();
        let xs: Vec<f64> = d.human.iter().map(|&t| line_position(t)).collect();
        let hd = upper(n, |i, j| (xs[i] - xs[j]).abs());
        let md = upper(n, |i, j| base_distance(d.angles[i], d.angles[j]));
        human.extend(relatedness(&hd));
        model.extend(relatedness(&md));
        let hmax = hd.iter().copied().fold(0.0, f64::max);
        tables.insert(
            lemma_of(d.word, d.pos).to_string(),
            (sense_keys(d), hd.iter().map(|v| v / hmax).collect(), md),
        );
    }
    let cosine_r = spearman_r(&human, &model)?;

    let mut split: [Vec<f64>; 4] = Default::default();
    for label in labels {
        let (keys, hd, md) = &tables[&label.lemma.to_string()];
        let a = keys
            .iter()
            .position(|k| k == &label.sense_a)
            .expect("label sense");
        let b = keys
            .iter()
            .position(|k| k == &label.sense_b)
            .expect("label sense");
        let n = keys.len();
        // index of (a, b), a < b, in the upper-triangle order
        let k = (0..a).map(|r| n - 1 - r).sum::<usize>() + (b - a - 1);
        let offset = if label.relation == Relation::Polysemy {
            0
        } else {
            1
        };
        split[offset].push(hd[k]);
        split[offset + 2].push(md[k]);
    }
    let [human_polysemy, human_homonymy, model_polysemy, model_homonymy] = split;

    let mut excluded: BTreeSet<String> = RESPONDERS.iter().map(|s| s.to_string()).collect();
    excluded.insert(LANGUAGE_EXCLUDED.to_string());

    let mut candidates: Vec<(String, f64)> = entropy
        .iter()
        .filter(|(name, h)| **h > 0.0 && !name.starts_with("be."))
        .map(|(n, h)| (n.clone(), *h))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    Ok(Expected {
        cosine_r,
        cosine_pairs: human.len(),
        human_lemmas: tables.keys().cloned().collect(),
        excluded: excluded.into_iter().collect(),
        human_u_polysemy: u_smaller(&human_polysemy, &human_homonymy),
        model_u_polysemy: u_smaller(&model_polysemy, &model_homonymy),
        human_polysemy,
        human_homonymy,
        model_polysemy,
        model_homonymy,
        total_lemmas: entropy.len(),
        candidates: candidates.into_iter().map(|c| c.0).collect(),
        entropy,
    })
}

/// Run configuration written next to the fixture data, paths relative to it.
pub const CONFIG: &str = r#"seed = 20190611
out_dir = "out"

[inputs]
tokens = "tokens.jsonl"
embeddings = "embeddings.semb"
placements = "placements.jsonl"
labels = "pair_labels.csv"

[human]
subsample = 8
language_excluded = ["s09"]

[compare]
resamples = 200
baseline_draws = 200

[viz]
lemmas = ["bass.n"]
iterations = 400
"#;

/// Writes `tokens.jsonl`, `embeddings.semb`, `placements.jsonl`,
/// `pair_labels.csv`, `config.toml` and `expected.json` into `dir`.
pub fn write_fixture(dir: &Path, fixture: &Fixture) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        fs::File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Error::io(path, e))
    };
    write_corpus(create("tokens.jsonl")?, &fixture.tokens)?;
    save_embeddings(&dir.join("embeddings.semb"), DIM, &fixture.embeddings)?;
    write_placements(create("placements.jsonl")?, &fixture.trials)?;

    let mut w = csv::Writer::from_writer(create("pair_labels.csv")?);
    w.write_record(["word_type", "pos", "sense_a", "sense_b", "relation"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for l in &fixture.labels {
        let relation = match l.relation {
            Relation::Polysemy => "polysemy",
            Relation::Homonymy => "homonymy",
        };
        w.write_record([
            l.lemma.word_type(),
            l.lemma.pos().code(),
            &l.sense_a,
            &l.sense_b,
            relation,
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| Error::io(dir.join("pair_labels.csv"), e))?;

    let path = dir.join("config.toml");
    fs::write(&path, CONFIG).map_err(|e| Error::io(path, e))?;
    let text =
        serde_json::to_string_pretty(&fixture.expected).map_err(|e| Error::Data(e.to_string()))?;
    let path = dir.join("expected.json");
    fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_distributions;
    use crate::embeddings::{centroid, EmbeddingStore};

    #[test]
    fn centroids_equal_planted_bases() {
        let f = generate(&FixtureSpec::default()).unwrap();
        let store = EmbeddingStore::from_records(DIM, f.embeddings.clone(), &f.tokens).unwrap();
        for d in DESIGN {
            let lemma = lemma_of(d.word, d.pos);
            for (key, &theta) in sense_keys(d).iter().zip(d.angles) {
                assert_eq!(
                    centroid(&store, &lemma, key).unwrap().vector,
                    base_vector(theta)
                );
            }
        }
    }

    #[test]
    fn responders_are_anticorrelated() {
        for d in DESIGN.iter().filter(|d| d.role != Role::ModelOnly) {
            let xs: Vec<f64> = d.human.iter().map(|&t| line_position(t)).collect();
            let perm = adversarial(&xs);
            let n = xs.len();
            let truth = upper(n, |i, j| (xs[i] - xs[j]).abs());
            let scrambled = upper(n, |i, j| (xs[perm[i]] - xs[perm[j]]).abs());
            assert!(spearman_r(&truth, &scrambled).unwrap() < 0.0, "{}", d.word);
        }
    }

    #[test]
    fn permutations_enumerate_all() {
        let mut p = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut p) {
            count += 1;
        }
        assert_eq!(count, 24);
        assert_eq!(p, vec![3, 2, 1, 0]);
    }

    #[test]
    fn corpus_entropy_matches_expected() {
        let f = generate(&FixtureSpec::default()).unwrap();
        let dists = build_distributions(&f.tokens);
        assert_eq!(dists.len(), f.expected.total_lemmas);
        assert!(f.expected.entropy["line.n"] > 1.5);
        assert_eq!(f.expected.entropy["cat.n"], 0.0);
        assert!(f.expected.model_u_polysemy > 0.0);
    }
}
