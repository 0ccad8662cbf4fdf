//! Sense-annotated token corpus: loading, per-lemma sense distributions,
//! sense entropy and stimulus filtering.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Part-of-speech tag, written with the single-letter WordNet codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pos {
    #[serde(rename = "n")]
    Noun,
    #[serde(rename = "v")]
    Verb,
    #[serde(rename = "a")]
    Adj,
    #[serde(rename = "r")]
    Adv,
}

impl Pos {
    pub fn code(self) -> &'static str {
        match self {
            Pos::Noun => "n",
            Pos::Verb => "v",
            Pos::Adj => "a",
            Pos::Adv => "r",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pos::Noun => "noun",
            Pos::Verb => "verb",
            Pos::Adj => "adjective",
            Pos::Adv => "adverb",
        }
    }
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Pos::Noun),
            "v" => Ok(Pos::Verb),
            "a" => Ok(Pos::Adj),
            "r" => Ok(Pos::Adv),
            other => Err(Error::Data(format!("unknown part of speech {other:?}"))),
        }
    }
}

/// A (word type, part of speech) pair. Word types are case-folded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LemmaKey {
    word_type: String,
    pos: Pos,
}

impl LemmaKey {
    pub fn new(word_type: &str, pos: Pos) -> Result<Self> {
        let word_type = word_type.trim().to_lowercase();
        if word_type.is_empty() {
            return Err(Error::Data("empty word type".into()));
        }
        Ok(LemmaKey { word_type, pos })
    }

    pub fn word_type(&self) -> &str {
        &self.word_type
    }

    pub fn pos(&self) -> Pos {
        self.pos
    }
}

impl fmt::Display for LemmaKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.word_type, self.pos.code())
    }
}

/// Parses the `word.pos` form used on the command line and in file names.
impl FromStr for LemmaKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (word, pos) = s
            .rsplit_once('.')
            .ok_or_else(|| Error::Data(format!("expected word.pos, got {s:?}")))?;
        LemmaKey::new(word, pos.parse()?)
    }
}

impl Serialize for LemmaKey {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LemmaKey {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedToken {
    pub token_id: u64,
    pub sentence_id: u64,
    pub position: u32,
    pub lemma: LemmaKey,
    pub sense_key: String,
    pub surface: String,
    pub sentence_text: Option<String>,
}

/// One line of the tokens file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token_id: u64,
    pub sentence_id: u64,
    pub position: i64,
    pub word_type: String,
    pub pos: Pos,
    pub sense_key: String,
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_text: Option<String>,
}

impl TokenRecord {
    fn into_token(self) -> Result<AnnotatedToken> {
        if self.position < 0 {
            return Err(Error::Data(format!("negative position {}", self.position)));
        }
        if self.sense_key.is_empty() {
            return Err(Error::Data("empty sense_key".into()));
        }
        Ok(AnnotatedToken {
            token_id: self.token_id,
            sentence_id: self.sentence_id,
            position: u32::try_from(self.position)
                .map_err(|_| Error::Data(format!("position {} out of range", self.position)))?,
            lemma: LemmaKey::new(&self.word_type, self.pos)?,
            sense_key: self.sense_key,
            surface: self.surface,
            sentence_text: self.sentence_text,
        })
    }
}

impl From<&AnnotatedToken> for TokenRecord {
    fn from(t: &AnnotatedToken) -> Self {
        TokenRecord {
            token_id: t.token_id,
            sentence_id: t.sentence_id,
            position: i64::from(t.position),
            word_type: t.lemma.word_type.clone(),
            pos: t.lemma.pos,
            sense_key: t.sense_key.clone(),
            surface: t.surface.clone(),
            sentence_text: t.sentence_text.clone(),
        }
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<AnnotatedToken>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file))
}

/// Parses line-delimited JSON token records. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<AnnotatedToken>> {
    let mut tokens = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TokenRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let token = record.into_token().map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(token.token_id) {
            return Err(Error::Integrity(format!(
                "duplicate token_id {} on line {line_no}",
                token.token_id
            )));
        }
        tokens.push(token);
    }
    Ok(tokens)
}

pub fn write_corpus<W: std::io::Write>(mut writer: W, tokens: &[AnnotatedToken]) -> Result<()> {
    for token in tokens {
        let line = serde_json::to_string(&TokenRecord::from(token))
            .map_err(|e| Error::Data(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io("<tokens>", e))?;
    }
    Ok(())
}

/// Token counts per sense of one lemma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseDistribution {
    lemma: LemmaKey,
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl SenseDistribution {
    pub fn new(lemma: LemmaKey, counts: BTreeMap<String, u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Data(format!("{lemma}: no senses")));
        }
        if let Some((sense, _)) = counts.iter().find(|(_, &c)| c == 0) {
            return Err(Error::Data(format!(
                "{lemma}: sense {sense} has zero count"
            )));
        }
        let total = counts.values().sum();
        Ok(SenseDistribution {
            lemma,
            counts,
            total,
        })
    }

    pub fn lemma(&self) -> &LemmaKey {
        &self.lemma
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_senses(&self) -> usize {
        self.counts.len()
    }

    /// Drops senses attested fewer than `min_count` times. `None` when no
    /// sense survives.
    pub fn retain_min_count(&self, min_count: u64) -> Option<SenseDistribution> {
        let counts: BTreeMap<_, _> = self
            .counts
            .iter()
            .filter(|(_, &c)| c >= min_count)
            .map(|(s, &c)| (s.clone(), c))
            .collect();
        SenseDistribution::new(self.lemma.clone(), counts).ok()
    }
}

pub fn build_distributions(tokens: &[AnnotatedToken]) -> BTreeMap<LemmaKey, SenseDistribution> {
    let mut tallies: BTreeMap<LemmaKey, BTreeMap<String, u64>> = BTreeMap::new();
    for token in tokens {
        *tallies
            .entry(token.lemma.clone())
            .or_default()
            .entry(token.sense_key.clone())
            .or_default() += 1;
    }
    tallies
        .into_iter()
        .map(|(lemma, counts)| {
            let total = counts.values().sum();
            (
                lemma.clone(),
                SenseDistribution {
                    lemma,
                    counts,
                    total,
                },
            )
        })
        .collect()
}

/// Shannon entropy of the sense distribution, in nats.
pub fn sense_entropy(dist: &SenseDistribution) -> Result<f64> {
    if dist.total == 0 {
        return Err(Error::Domain(format!("{}: zero total count", dist.lemma)));
    }
    let total = dist.total as f64;
    let h = dist
        .counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum::<f64>();
    // -p ln p sums can land a few ulps below zero for a single sense
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyBand {
    High,
    LowMedium,
}

pub const DEFAULT_HIGH_ENTROPY_THRESHOLD: f64 = 1.5;

/// High when the entropy, rounded half away from zero to one decimal, is
/// strictly greater than `threshold`.
pub fn entropy_band(entropy: f64, threshold: f64) -> EntropyBand {
    let rounded = (entropy * 10.0).round() / 10.0;
    if rounded > threshold {
        EntropyBand::High
    } else {
        EntropyBand::LowMedium
    }
}

/// The bundled stopword list.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(include_str!("../data/stopwords.txt"))
}

pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

/// Stimulus candidates: lemmas that are not stopwords, have non-zero entropy
/// and whose attested sense count lies in `[min_senses, max_senses]`.
/// Sorted by descending entropy, ties by lemma.
pub fn filter_candidates(
    dists: &BTreeMap<LemmaKey, SenseDistribution>,
    stopwords: &BTreeSet<String>,
    min_senses: usize,
    max_senses: Option<usize>,
) -> Vec<(LemmaKey, f64)> {
    let mut out: Vec<(LemmaKey, f64)> = dists
        .values()
        .filter(|d| !stopwords.contains(d.lemma.word_type()))
        .filter(|d| d.n_senses() >= min_senses && max_senses.is_none_or(|m| d.n_senses() <= m))
        .filter_map(|d| {
            let h = sense_entropy(d).ok()?;
            (h > 0.0).then(|| (d.lemma.clone(), h))
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Counts behind a candidate filtering run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub total_lemmas: usize,
    pub surviving_lemmas: usize,
    pub surviving_word_types: usize,
    pub removed_fraction: f64,
}

pub fn summarize_candidates(
    dists: &BTreeMap<LemmaKey, SenseDistribution>,
    candidates: &[(LemmaKey, f64)],
) -> CandidateSummary {
    let total = dists.len();
    let word_types: BTreeSet<&str> = candidates.iter().map(|(l, _)| l.word_type()).collect();
    CandidateSummary {
        total_lemmas: total,
        surviving_lemmas: candidates.len(),
        surviving_word_types: word_types.len(),
        removed_fraction: if total == 0 {
            0.0
        } else {
            1.0 - candidates.len() as f64 / total as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lemma(w: &str, pos: Pos) -> LemmaKey {
        LemmaKey::new(w, pos).unwrap()
    }

    fn dist(w: &str, counts: &[(&str, u64)]) -> SenseDistribution {
        SenseDistribution::new(
            lemma(w, Pos::Noun),
            counts.iter().map(|(s, c)| (s.to_string(), *c)).collect(),
        )
        .unwrap()
    }

    fn token(id: u64, w: &str, sense: &str) -> AnnotatedToken {
        AnnotatedToken {
            token_id: id,
            sentence_id: id / 10,
            position: (id % 10) as u32,
            lemma: lemma(w, Pos::Noun),
            sense_key: sense.into(),
            surface: w.into(),
            sentence_text: None,
        }
    }

    const THREE_LINES: &str = r#"{"token_id":1,"sentence_id":0,"position":0,"word_type":"Bank","pos":"n","sense_key":"bank.n.01","surface":"Bank"}
{"token_id":2,"sentence_id":0,"position":4,"word_type":"bank","pos":"n","sense_key":"bank.n.02","surface":"bank","sentence_text":"the bank of the river"}

{"token_id":3,"sentence_id":1,"position":2,"word_type":"run","pos":"v","sense_key":"run.v.01","surface":"ran"}
"#;

    #[test]
    fn parses_valid_lines_and_folds_case() {
        let tokens = read_corpus(THREE_LINES.as_bytes()).unwrap();
        assert_eq!(tokens.len(), 3);
        assert_eq!(tokens[0].lemma, lemma("bank", Pos::Noun));
        assert_eq!(tokens[2].lemma.to_string(), "run.v");
        assert_eq!(
            tokens[1].sentence_text.as_deref(),
            Some("the bank of the river")
        );
    }

    #[test]
    fn duplicate_token_id_is_integrity_error() {
        let text = format!(
            "{}\n{}",
            THREE_LINES.lines().next().unwrap(),
            THREE_LINES.lines().next().unwrap()
        );
        assert!(matches!(
            read_corpus(text.as_bytes()),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\n{{\"token_id\": 9", THREE_LINES.lines().next().unwrap());
        match read_corpus(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let bad_pos = r#"{"token_id":1,"sentence_id":0,"position":0,"word_type":"x","pos":"q","sense_key":"k","surface":"x"}"#;
        assert!(matches!(
            read_corpus(bad_pos.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        let neg = r#"{"token_id":1,"sentence_id":0,"position":-1,"word_type":"x","pos":"n","sense_key":"k","surface":"x"}"#;
        assert!(matches!(
            read_corpus(neg.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn write_then_read_round_trips() {
        let tokens = read_corpus(THREE_LINES.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_corpus(&mut buf, &tokens).unwrap();
        assert_eq!(read_corpus(buf.as_slice()).unwrap(), tokens);
    }

    #[test]
    fn lemma_key_parsing() {
        let l: LemmaKey = "Table.n".parse().unwrap();
        assert_eq!(l, lemma("table", Pos::Noun));
        assert!("table".parse::<LemmaKey>().is_err());
        assert!(".n".parse::<LemmaKey>().is_err());
        assert!("a.b.v".parse::<LemmaKey>().unwrap().word_type() == "a.b");
    }

    #[test]
    fn tallies_per_lemma() {
        let tokens = vec![
            token(1, "bank", "s1"),
            token(2, "bank", "s1"),
            token(3, "bank", "s2"),
            token(4, "bank", "s1"),
            token(5, "bass", "s9"),
        ];
        let dists = build_distributions(&tokens);
        assert_eq!(dists.len(), 2);
        let bank = &dists[&lemma("bank", Pos::Noun)];
        assert_eq!(bank.counts()["s1"], 3);
        assert_eq!(bank.counts()["s2"], 1);
        assert_eq!(bank.total(), 4);
        let bass = &dists[&lemma("bass", Pos::Noun)];
        assert_eq!(bass.total(), 1);
        assert!(!bass.counts().contains_key("s1"));
        assert!(build_distributions(&[]).is_empty());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(sense_entropy(&dist("a", &[("s1", 5)])).unwrap(), 0.0);
        let h = sense_entropy(&dist("a", &[("s1", 10), ("s2", 10)])).unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-12);
        // -(0.75 ln 0.75 + 0.25 ln 0.25)
        let h = sense_entropy(&dist("a", &[("s1", 30), ("s2", 10)])).unwrap();
        assert!((h - 0.562_335_144_618_808_4).abs() < 1e-12, "{h}");
    }

    #[test]
    fn zero_total_is_domain_error() {
        let d = SenseDistribution {
            lemma: lemma("a", Pos::Noun),
            counts: BTreeMap::new(),
            total: 0,
        };
        assert!(matches!(sense_entropy(&d), Err(Error::Domain(_))));
    }

    #[test]
    fn distribution_rejects_zero_counts() {
        let counts = [("s1".to_string(), 0u64)].into_iter().collect();
        assert!(SenseDistribution::new(lemma("a", Pos::Noun), counts).is_err());
    }

    #[test]
    fn entropy_band_rounds_then_compares_strictly() {
        assert_eq!(entropy_band(1.54, 1.5), EntropyBand::LowMedium);
        assert_eq!(entropy_band(1.55, 1.5), EntropyBand::High);
        assert_eq!(entropy_band(0.9, 1.5), EntropyBand::LowMedium);
        assert_eq!(entropy_band(1.5, 1.5), EntropyBand::LowMedium);
        assert_eq!(entropy_band(1.6, 1.5), EntropyBand::High);
    }

    #[test]
    fn candidate_filtering() {
        let mut dists = BTreeMap::new();
        for d in [
            dist("single", &[("s1", 9)]),
            dist("bank", &[("s1", 3), ("s2", 1)]),
            dist("the", &[("s1", 3), ("s2", 3)]),
            dist(
                "wide",
                &(1..=8)
                    .map(|i| (["a", "b", "c", "d", "e", "f", "g", "h"][i - 1], 2))
                    .collect::<Vec<_>>(),
            ),
            dist("flat", &[("s1", 1), ("s2", 1), ("s3", 1)]),
        ] {
            dists.insert(d.lemma().clone(), d);
        }
        let stop = default_stopwords();
        let out = filter_candidates(&dists, &stop, 1, Some(7));
        let names: Vec<String> = out.iter().map(|(l, _)| l.to_string()).collect();
        assert_eq!(names, vec!["flat.n", "bank.n"]);
        let out = filter_candidates(&dists, &stop, 3, None);
        let names: Vec<String> = out.iter().map(|(l, _)| l.to_string()).collect();
        assert_eq!(names, vec!["wide.n", "flat.n"]);
        let summary = summarize_candidates(&dists, &out);
        assert_eq!(summary.total_lemmas, 5);
        assert!((summary.removed_fraction - 0.6).abs() < 1e-12);
    }

    #[test]
    fn bundled_stopwords_are_lowercase_function_words() {
        let stop = default_stopwords();
        assert!(stop.contains("the") && stop.contains("of") && stop.contains("wouldn"));
        assert!(!stop.contains("bank"));
        assert!(stop.iter().all(|w| w == &w.to_lowercase()));
    }

    fn arb_counts() -> impl Strategy<Value = Vec<u64>> {
        prop::collection::vec(1u64..1000, 1..12)
    }

    fn from_counts(counts: &[u64]) -> SenseDistribution {
        SenseDistribution::new(
            lemma("w", Pos::Verb),
            counts
                .iter()
                .enumerate()
                .map(|(i, &c)| (format!("s{i:02}"), c))
                .collect(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn entropy_bounds(counts in arb_counts()) {
            let h = sense_entropy(&from_counts(&counts)).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (counts.len() as f64).ln() + 1e-12);
            prop_assert_eq!(h == 0.0, counts.len() == 1);
        }

        #[test]
        fn entropy_permutation_and_scale_invariant(counts in arb_counts(), k in 1u64..50, rot in 0usize..12) {
            let h = sense_entropy(&from_counts(&counts)).unwrap();
            let mut rotated = counts.clone();
            rotated.rotate_left(rot % counts.len());
            let scaled: Vec<u64> = counts.iter().map(|c| c * k).collect();
            prop_assert!((sense_entropy(&from_counts(&rotated)).unwrap() - h).abs() < 1e-12);
            prop_assert!((sense_entropy(&from_counts(&scaled)).unwrap() - h).abs() < 1e-12);
        }

        #[test]
        fn uniform_entropy_is_ln_n(n in 1usize..40, c in 1u64..100) {
            let h = sense_entropy(&from_counts(&vec![c; n])).unwrap();
            prop_assert!((h - (n as f64).ln()).abs() < 1e-12);
        }

        #[test]
        fn shrinking_stopwords_never_removes_survivors(
            words in prop::collection::vec(("[a-e]{1,2}", arb_counts()), 1..20),
            stop in prop::collection::btree_set("[a-e]{1,2}", 0..10),
            keep in prop::collection::vec(any::<bool>(), 10),
        ) {
            let mut dists = BTreeMap::new();
            for (w, counts) in &words {
                let d = SenseDistribution::new(
                    lemma(w, Pos::Noun),
                    counts.iter().enumerate().map(|(i, &c)| (format!("s{i}"), c)).collect(),
                ).unwrap();
                dists.insert(d.lemma().clone(), d);
            }
            let smaller: BTreeSet<String> = stop.iter().zip(keep.iter().cycle()).filter(|(_, &k)| k).map(|(w, _)| w.clone()).collect();
            let big = filter_candidates(&dists, &stop, 1, None);
            let small = filter_candidates(&dists, &smaller, 1, None);
            for (l, _) in &big {
                prop_assert!(small.iter().any(|(m, _)| m == l));
            }
        }

        #[test]
        fn totals_sum_to_token_count(senses in prop::collection::vec((0usize..4, 0usize..3), 1..200)) {
            let tokens: Vec<AnnotatedToken> = senses.iter().enumerate()
                .map(|(i, (w, s))| token(i as u64, ["a", "b", "c", "d"][*w], ["x", "y", "z"][*s]))
                .collect();
            let dists = build_distributions(&tokens);
            let total: u64 = dists.values().map(|d| d.total()).sum();
            prop_assert_eq!(total as usize, tokens.len());
            for d in dists.values() {
                prop_assert_eq!(d.total(), d.counts().values().sum::<u64>());
            }
        }
    }
}
