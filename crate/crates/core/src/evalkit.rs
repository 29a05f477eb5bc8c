//! ROUGE-1/2/L F1 scoring and corpus-level evaluation.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Vocab};
use crate::error::{CoreError, Result};
use crate::model::Model;
use crate::pipeline::{summarize, SummaryOptions};

/// ROUGE F1 triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub r1_f1: f64,
    pub r2_f1: f64,
    pub rl_f1: f64,
}

fn f1(overlap: f64, hyp_total: f64, ref_total: f64) -> f64 {
    if hyp_total == 0.0 || ref_total == 0.0 {
        return 0.0;
    }
    let p = overlap / hyp_total;
    let r = overlap / ref_total;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_overlap(hyp: &[String], reference: &[String], n: usize) -> f64 {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    h.iter()
        .map(|(gram, &c)| c.min(r.get(gram).copied().unwrap_or(0)))
        .sum::<u64>() as f64
}

/// Longest common subsequence length by dynamic programming.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn ngram_total(len: usize, n: usize) -> f64 {
    len.saturating_sub(n - 1) as f64
}

/// ROUGE-1, ROUGE-2 and ROUGE-L F1 between token lists.
pub fn rouge_scores(hypothesis: &[String], reference: &[String]) -> Result<RougeReport> {
    if reference.is_empty() {
        return Err(CoreError::EmptyReference);
    }
    let r1 = f1(
        clipped_overlap(hypothesis, reference, 1),
        ngram_total(hypothesis.len(), 1),
        ngram_total(reference.len(), 1),
    );
    let r2 = f1(
        clipped_overlap(hypothesis, reference, 2),
        ngram_total(hypothesis.len(), 2),
        ngram_total(reference.len(), 2),
    );
    let rl = f1(
        lcs_len(hypothesis, reference) as f64,
        hypothesis.len() as f64,
        reference.len() as f64,
    );
    Ok(RougeReport { r1_f1: r1, r2_f1: r2, rl_f1: rl })
}

/// One evaluated document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub scores: RougeReport,
    pub hypothesis: String,
    pub reference: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusReport {
    pub mean: RougeReport,
    pub rows: Vec<EvalRow>,
}

fn reference_tokens(doc: &Document) -> Option<Vec<String>> {
    let text = doc.reference_text.as_deref()?;
    let toks = crate::corpus::tokenize(text);
    if toks.is_empty() {
        None
    } else {
        Some(toks)
    }
}

/// Generates a summary for each document and scores it against the reference.
/// Documents without a usable reference are skipped. Aggregation order is
/// the input order regardless of worker parallelism.
pub fn evaluate_corpus(
    model: &Model,
    vocab: &Vocab,
    docs: &[Document],
    opts: &SummaryOptions,
) -> Result<CorpusReport> {
    let rows: Vec<Option<Result<EvalRow>>> = docs
        .par_iter()
        .map(|doc| {
            let reference = reference_tokens(doc)?;
            Some(summarize(model, doc, opts).and_then(|s| {
                let hyp_tokens = vocab.decode(&s.summary_tokens);
                let scores = rouge_scores(&hyp_tokens, &reference)?;
                Ok(EvalRow {
                    id: doc.id.clone(),
                    scores,
                    hypothesis: hyp_tokens.join(" "),
                    reference: reference.join(" "),
                })
            }))
        })
        .collect();
    let mut out = Vec::new();
    for row in rows.into_iter().flatten() {
        out.push(row?);
    }
    let count = out.len().max(1) as f64;
    let mean = RougeReport {
        r1_f1: out.iter().map(|r| r.scores.r1_f1).sum::<f64>() / count,
        r2_f1: out.iter().map(|r| r.scores.r2_f1).sum::<f64>() / count,
        rl_f1: out.iter().map(|r| r.scores.rl_f1).sum::<f64>() / count,
    };
    Ok(CorpusReport { mean, rows: out })
}

/// Oracle mode: hypothesis := reference. Every F1 must come out 1.0; a
/// cheap self-check of the scoring path on a prepared corpus.
pub fn oracle_report(docs: &[Document]) -> Result<CorpusReport> {
    let mut rows = Vec::new();
    for doc in docs {
        if let Some(reference) = reference_tokens(doc) {
            let scores = rouge_scores(&reference, &reference)?;
            rows.push(EvalRow {
                id: doc.id.clone(),
                scores,
                hypothesis: reference.join(" "),
                reference: reference.join(" "),
            });
        }
    }
    let count = rows.len().max(1) as f64;
    let mean = RougeReport {
        r1_f1: rows.iter().map(|r| r.scores.r1_f1).sum::<f64>() / count,
        r2_f1: rows.iter().map(|r| r.scores.r2_f1).sum::<f64>() / count,
        rl_f1: rows.iter().map(|r| r.scores.rl_f1).sum::<f64>() / count,
    };
    Ok(CorpusReport { mean, rows })
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-document CSV: id, r1, r2, rl, hypothesis, reference.
pub fn write_csv<W: std::io::Write>(w: &mut W, report: &CorpusReport) -> Result<()> {
    writeln!(w, "id,r1,r2,rl,hypothesis,reference")?;
    for row in &report.rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{},{}",
            csv_escape(&row.id),
            row.scores.r1_f1,
            row.scores.r2_f1,
            row.scores.rl_f1,
            csv_escape(&row.hypothesis),
            csv_escape(&row.reference)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_sentences_score_one() {
        let t = toks("a perfect little summary");
        let r = rouge_scores(&t, &t).unwrap();
        assert_eq!(r.r1_f1, 1.0);
        assert_eq!(r.r2_f1, 1.0);
        assert_eq!(r.rl_f1, 1.0);
    }

    #[test]
    fn hand_counted_example() {
        let hyp = toks("a cat on a mat");
        let reference = toks("the cat sat on the mat");
        let r = rouge_scores(&hyp, &reference).unwrap();
        let expect = 2.0 * (3.0 / 5.0) * (3.0 / 6.0) / ((3.0 / 5.0) + (3.0 / 6.0));
        assert!((r.r1_f1 - expect).abs() < 1e-12);
        assert!((r.r1_f1 - 0.5455).abs() < 1e-4);
        assert_eq!(r.r2_f1, 0.0);
        assert!((r.rl_f1 - expect).abs() < 1e-12);
    }

    #[test]
    fn disjoint_vocabularies_score_zero() {
        let r = rouge_scores(&toks("x y z"), &toks("p q")).unwrap();
        assert_eq!(r.r1_f1, 0.0);
        assert_eq!(r.r2_f1, 0.0);
        assert_eq!(r.rl_f1, 0.0);
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(matches!(
            rouge_scores(&toks("a"), &[]),
            Err(CoreError::EmptyReference)
        ));
    }

    #[test]
    fn empty_hypothesis_scores_zero_without_crashing() {
        let r = rouge_scores(&[], &toks("a b")).unwrap();
        assert_eq!(r.r1_f1, 0.0);
        assert_eq!(r.rl_f1, 0.0);
    }

    #[test]
    fn rouge1_symmetric_for_equal_length() {
        let a = toks("a b c d");
        let b = toks("c d e f");
        let ab = rouge_scores(&a, &b).unwrap();
        let ba = rouge_scores(&b, &a).unwrap();
        assert!((ab.r1_f1 - ba.r1_f1).abs() < 1e-15);
    }

    /// Recursive LCS definition, independent of the DP table.
    fn lcs_slow(a: &[String], b: &[String]) -> usize {
        if a.is_empty() || b.is_empty() {
            0
        } else if a[a.len() - 1] == b[b.len() - 1] {
            1 + lcs_slow(&a[..a.len() - 1], &b[..b.len() - 1])
        } else {
            lcs_slow(&a[..a.len() - 1], b).max(lcs_slow(a, &b[..b.len() - 1]))
        }
    }

    #[test]
    fn lcs_matches_recursive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let alphabet = ["a", "b", "c"];
        for _ in 0..100 {
            let a: Vec<String> = (0..rng.gen_range(0..8))
                .map(|_| alphabet[rng.gen_range(0..3)].to_string())
                .collect();
            let b: Vec<String> = (0..rng.gen_range(0..8))
                .map(|_| alphabet[rng.gen_range(0..3)].to_string())
                .collect();
            assert_eq!(lcs_len(&a, &b), lcs_slow(&a, &b));
        }
    }

    #[test]
    fn csv_escapes_commas_and_quotes() {
        let report = CorpusReport {
            mean: RougeReport { r1_f1: 0.0, r2_f1: 0.0, rl_f1: 0.0 },
            rows: vec![EvalRow {
                id: "a,b".into(),
                scores: RougeReport { r1_f1: 0.5, r2_f1: 0.0, rl_f1: 0.5 },
                hypothesis: "he said \"hi\"".into(),
                reference: "plain".into(),
            }],
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"a,b\""));
        assert!(text.contains("\"he said \"\"hi\"\"\""));
    }
}
