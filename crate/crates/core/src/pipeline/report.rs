use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::config::Stage;
use super::stages::{band_name, ComparisonSection, VizOutput};
use crate::corpus::{CandidateSummary, EntropyBand, LemmaKey};
use crate::human::ExclusionRow;
use crate::stats::{CorrelationResult, OlsFit};

/// Machine-readable outcome of a run. Every section names the stage output
/// file its numbers were read from (`source`, relative to the output root).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    pub provenance: Provenance,
    pub stages: Vec<Stage>,
    pub corpus: Option<CorpusSection>,
    pub lemmas: Vec<LemmaBlock>,
    pub classifier: Option<ClassifierSection>,
    pub human: Option<HumanSection>,
    pub comparison: Option<ComparisonReport>,
    pub viz: Vec<VizOutput>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the effective settings with file locations removed.
    pub config_sha256: String,
    pub inputs: BTreeMap<String, InputDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSection {
    pub tokens: usize,
    pub summary: CandidateSummary,
    pub high_entropy: usize,
    pub low_medium_entropy: usize,
    pub eligible: usize,
    /// Mean model-free baselines over the eligible types.
    pub majority_f1: Option<f64>,
    pub random_f1: Option<f64>,
    pub source: String,
}

/// One candidate word type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaBlock {
    pub lemma: LemmaKey,
    pub n_tokens: u64,
    pub n_senses: usize,
    pub entropy: f64,
    pub band: EntropyBand,
    pub eligible: bool,
    pub majority_f1: Option<f64>,
    pub random_f1: Option<f64>,
    pub mean_f1: Option<f64>,
    pub centroid_matrix: Option<String>,
    pub confusion_matrix: Option<String>,
    pub cv_report: Option<String>,
    pub human_matrix: Option<String>,
}

/// Mean weighted F1 over a set of word types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Row {
    pub set: String,
    pub n_types: usize,
    pub logistic_regression: f64,
    pub majority: f64,
    pub random: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLemma {
    pub lemma: LemmaKey,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSection {
    pub table: Vec<F1Row>,
    /// Per-type F1 regressed on sense entropy.
    pub f1_vs_entropy: Option<OlsFit>,
    /// Eligible types without embeddings.
    pub without_embeddings: usize,
    pub skipped: Vec<SkippedLemma>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanSection {
    pub participants: usize,
    pub excluded: usize,
    pub exclusions_by_reason: BTreeMap<String, usize>,
    pub shared: Vec<LemmaKey>,
    pub lemmas: Vec<LemmaKey>,
    pub participants_table: Vec<ExclusionRow>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    #[serde(flatten)]
    pub section: ComparisonSection,
    pub densities: Option<String>,
    pub source: String,
}

fn f(v: f64) -> String {
    format!("{v:.3}")
}

fn corr(r: &CorrelationResult) -> String {
    format!(
        "{} [{}, {}], p = {:.2e}, n = {}",
        f(r.r),
        f(r.ci_low),
        f(r.ci_high),
        r.p_value,
        r.n
    )
}

impl Report {
    /// Markdown summary with the F1 table and the correlation table.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Sense relatedness report\n");
        let _ = writeln!(
            s,
            "Tool version {}; settings digest `{}`.\n",
            self.tool_version, self.provenance.config_sha256
        );
        let _ = writeln!(s, "| input | sha256 | bytes |\n|---|---|---|");
        for (name, d) in &self.provenance.inputs {
            let _ = writeln!(s, "| {name} | `{}` | {} |", d.sha256, d.bytes);
        }
        let stages: Vec<&str> = self.stages.iter().map(|st| st.name()).collect();
        let _ = writeln!(s, "\nStages run: {}.\n", stages.join(", "));

        if let Some(c) = &self.corpus {
            let _ = writeln!(s, "## Corpus (`{}`)\n", c.source);
            let _ = writeln!(
                s,
                "{} tokens, {} lemmas. {} candidates ({} word types) remain after removing stopwords and \
                 zero-entropy lemmas ({:.1}% removed); {} high entropy, {} low/medium; {} eligible for \
                 classification.\n",
                c.tokens,
                c.summary.total_lemmas,
                c.summary.surviving_lemmas,
                c.summary.surviving_word_types,
                100.0 * c.summary.removed_fraction,
                c.high_entropy,
                c.low_medium_entropy,
                c.eligible
            );
        }

        if let Some(k) = &self.classifier {
            let _ = writeln!(s, "## Classification (`{}`)\n", k.source);
            let _ = writeln!(
                s,
                "| types | n | logistic regression | majority | random |\n|---|---|---|---|---|"
            );
            for row in &k.table {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    row.set,
                    row.n_types,
                    f(row.logistic_regression),
                    f(row.majority),
                    f(row.random)
                );
            }
            if let Some(fit) = &k.f1_vs_entropy {
                let _ = writeln!(
                    s,
                    "\nF1 against entropy: slope {}, intercept {}, R² {} over {} types.",
                    f(fit.slope),
                    f(fit.intercept),
                    f(fit.r_squared),
                    fit.n
                );
            }
            if !k.skipped.is_empty() {
                let _ = writeln!(
                    s,
                    "\n{} eligible types were not classified.",
                    k.skipped.len()
                );
            }
            s.push('\n');
        }

        if let Some(h) = &self.human {
            let _ = writeln!(s, "## Human judgments (`{}`)\n", h.source);
            let _ = writeln!(
                s,
                "{} participants, {} excluded; {} aggregated word types ({} shared).\n",
                h.participants,
                h.excluded,
                h.lemmas.len(),
                h.shared.len()
            );
            for (reason, n) in &h.exclusions_by_reason {
                let _ = writeln!(s, "- {reason}: {n}");
            }
            s.push('\n');
        }

        if let Some(c) = &self.comparison {
            let sec = &c.section;
            let _ = writeln!(s, "## Model against human relatedness (`{}`)\n", c.source);
            let _ = writeln!(
                s,
                "- cosine: {} over {} types",
                corr(&sec.cosine.result),
                sec.cosine.lemmas.len()
            );
            if let Some(conf) = &sec.confusion {
                let _ = writeln!(
                    s,
                    "- confusion: {} over {} types",
                    corr(&conf.result),
                    conf.lemmas.len()
                );
            }
            if let Some(sub) = &sec.cosine_on_confusion_subset {
                let _ = writeln!(s, "- cosine on the confusion subset: {}", corr(sub));
            }
            let b = &sec.baseline;
            let _ = writeln!(
                s,
                "- random placements ({} draws of {} participants): mean r {}, 95% interval [{}, {}]\n",
                b.draws,
                b.participants,
                f(b.mean_r),
                f(b.interval_low),
                f(b.interval_high)
            );
            let mut strata: Vec<&str> = Vec::new();
            for cell in &sec.table {
                if !strata.contains(&cell.stratum.as_str()) {
                    strata.push(&cell.stratum);
                }
            }
            let mut metrics: Vec<&str> = Vec::new();
            for cell in &sec.table {
                if !metrics.contains(&cell.metric.as_str()) {
                    metrics.push(&cell.metric);
                }
            }
            let _ = writeln!(s, "| metric | {} |", strata.join(" | "));
            let _ = writeln!(s, "|---|{}", "---|".repeat(strata.len()));
            for m in metrics {
                let cells: Vec<String> = strata
                    .iter()
                    .map(|st| {
                        sec.table
                            .iter()
                            .find(|c| c.metric == m && c.stratum == *st)
                            .and_then(|c| c.result.as_ref())
                            .map(|r| format!("{} (n={})", f(r.r), r.n))
                            .unwrap_or_else(|| "-".into())
                    })
                    .collect();
                let _ = writeln!(s, "| {m} | {} |", cells.join(" | "));
            }
            if let Some(rel) = &sec.relation {
                let _ = writeln!(s, "\n### Polysemy and homonymy\n");
                let _ = writeln!(
                    s,
                    "{} labelled pairs. Human distances: U = {}, p = {:.2e}. Model distances: U = {}, p = {:.2e}.",
                    rel.labelled_pairs, rel.human.u, rel.human.p_value, rel.model.u, rel.model.p_value
                );
                for (k, v) in &rel.medians {
                    let _ = writeln!(s, "- median {k}: {}", f(*v));
                }
                if let Some(p) = &rel.pairwise_f1 {
                    let show = |v: Option<f64>| v.map(f).unwrap_or_else(|| "-".into());
                    let _ = writeln!(
                        s,
                        "- pairwise F1: polysemous pairs {}, homonymous pairs {}",
                        show(p.polysemy_mean),
                        show(p.homonymy_mean)
                    );
                }
            }
            s.push('\n');
        }

        if !self.lemmas.is_empty() {
            let _ = writeln!(s, "## Word types\n");
            let _ = writeln!(
                s,
                "| type | tokens | senses | entropy | band | F1 | majority | random |"
            );
            let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
            let show = |v: Option<f64>| v.map(f).unwrap_or_else(|| "-".into());
            for l in &self.lemmas {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} | {} | {} |",
                    l.lemma,
                    l.n_tokens,
                    l.n_senses,
                    f(l.entropy),
                    band_name(l.band),
                    show(l.mean_f1),
                    show(l.majority_f1),
                    show(l.random_f1)
                );
            }
            s.push('\n');
        }

        if !self.warnings.is_empty() {
            let _ = writeln!(s, "## Warnings\n");
            for w in &self.warnings {
                let _ = writeln!(s, "- {w}");
            }
        }
        s
    }
}
