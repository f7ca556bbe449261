//! Reference-based response metrics: strategy accuracy, BLEU, ROUGE and an
//! exact-match METEOR.
//!
//! Per-pair values are fractions in [0,1]; report values are means ×100.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::taxonomy::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("no pairs to score")]
    EmptyInput,
    #[error("BLEU order must be at least 1")]
    BadOrder,
}

/// Lowercase, split on whitespace, and make every non-alphanumeric,
/// non-space character a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !cur.is_empty() {
                out.push(core::mem::take(&mut cur));
            }
        } else if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else {
            if !cur.is_empty() {
                out.push(core::mem::take(&mut cur));
            }
            let mut p = String::new();
            p.extend(c.to_lowercase());
            out.push(p);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn ngrams<'a>(tokens: &'a [String], n: usize) -> BTreeMap<&'a [String], usize> {
    let mut out = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// (clipped matches, candidate n-gram count).
fn clipped(cand: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let c = ngrams(cand, n);
    let r = ngrams(reference, n);
    let matches = c.iter().map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0))).sum();
    (matches, cand.len().saturating_sub(n - 1))
}

fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        libm::exp(1.0 - r as f64 / c as f64)
    }
}

/// Smoothed precision: orders ≥ 2 with no match use (m+1)/(t+1), which is 1
/// when the candidate has no n-grams of that order.
fn smoothed_precision(order: usize, matches: usize, total: usize) -> f64 {
    if matches == 0 && order >= 2 {
        1.0 / (total as f64 + 1.0)
    } else if total == 0 {
        0.0
    } else {
        matches as f64 / total as f64
    }
}

fn bleu_from_counts(counts: &[(usize, usize)], c: usize, r: usize) -> f64 {
    if c == 0 || counts[0].0 == 0 {
        return 0.0;
    }
    let n = counts.len() as f64;
    let log_sum: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &(m, t))| libm::log(smoothed_precision(i + 1, m, t)))
        .sum();
    brevity_penalty(c, r) * libm::exp(log_sum / n)
}

/// Sentence BLEU with uniform weights over orders 1..=n.
pub fn sentence_bleu(cand: &[String], reference: &[String], n: usize) -> f64 {
    let counts: Vec<(usize, usize)> = (1..=n).map(|k| clipped(cand, reference, k)).collect();
    bleu_from_counts(&counts, cand.len(), reference.len())
}

/// Corpus BLEU: counts and lengths summed over pairs before combining.
pub fn corpus_bleu(pairs: &[(Vec<String>, Vec<String>)], n: usize) -> f64 {
    let mut counts = alloc::vec![(0usize, 0usize); n];
    let (mut c, mut r) = (0, 0);
    for (cand, reference) in pairs {
        for (k, slot) in counts.iter_mut().enumerate() {
            let (m, t) = clipped(cand, reference, k + 1);
            slot.0 += m;
            slot.1 += t;
        }
        c += cand.len();
        r += reference.len();
    }
    bleu_from_counts(&counts, c, r)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// ROUGE-N F1. When neither side has n-grams of that order, identical
/// nonempty texts score 1 and anything else 0.
pub fn rouge_n(cand: &[String], reference: &[String], n: usize) -> f64 {
    let c = ngrams(cand, n);
    let r = ngrams(reference, n);
    let tc: usize = c.values().sum();
    let tr: usize = r.values().sum();
    if tc == 0 && tr == 0 {
        return if !cand.is_empty() && cand == reference {
            1.0
        } else {
            0.0
        };
    }
    if tc == 0 || tr == 0 {
        return 0.0;
    }
    let overlap: usize = c.iter().map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0))).sum();
    f1(overlap as f64 / tc as f64, overlap as f64 / tr as f64)
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(cand, reference) as f64;
    f1(l / cand.len() as f64, l / reference.len() as f64)
}

// ---------------------------------------------------------------------------
// METEOR (exact match only)

/// Search budget for the exact minimum-chunk alignment.
const METEOR_SEARCH_BUDGET: usize = 200_000;

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    // pairs sorted by candidate position
    let mut chunks = 0;
    let mut last: Option<(usize, usize)> = None;
    for &(i, j) in pairs {
        match last {
            Some((pi, pj)) if i == pi + 1 && j == pj + 1 => {}
            _ => chunks += 1,
        }
        last = Some((i, j));
    }
    chunks
}

struct AlignSearch<'a> {
    cand: &'a [String],
    reference: &'a [String],
    max_matches: usize,
    used: Vec<bool>,
    remaining_ref: BTreeMap<&'a str, usize>,
    remaining_cand: BTreeMap<&'a str, usize>,
    path: Vec<(usize, usize)>,
    best: Option<(usize, Vec<(usize, usize)>)>,
    nodes: usize,
}

impl<'a> AlignSearch<'a> {
    fn chunks_so_far(&self) -> usize {
        count_chunks(&self.path)
    }

    fn run(&mut self, i: usize, matched: usize) -> bool {
        self.nodes += 1;
        if self.nodes > METEOR_SEARCH_BUDGET {
            return false;
        }
        if let Some((best, _)) = &self.best {
            if self.chunks_so_far() >= *best {
                return true;
            }
        }
        if i == self.cand.len() {
            if matched == self.max_matches {
                let c = self.chunks_so_far();
                self.best = Some((c, self.path.clone()));
            }
            return true;
        }
        let tok = self.cand[i].as_str();
        let avail_ref = self.remaining_ref.get(tok).copied().unwrap_or(0);
        let left_cand = self.remaining_cand.get(tok).copied().unwrap_or(0);
        *self.remaining_cand.get_mut(tok).expect("counted") -= 1;
        // skipping is allowed only if the later copies can still use every
        // remaining reference slot for this token
        let may_skip = avail_ref < left_cand;
        let mut ok = true;
        if avail_ref > 0 {
            // prefer continuing the current chunk
            let cont = self.path.last().and_then(|&(pi, pj)| (pi + 1 == i).then_some(pj + 1));
            let mut order: Vec<usize> = (0..self.reference.len())
                .filter(|&j| !self.used[j] && self.reference[j] == tok)
                .collect();
            if let Some(c) = cont {
                if let Some(pos) = order.iter().position(|&j| j == c) {
                    order.remove(pos);
                    order.insert(0, c);
                }
            }
            for j in order {
                self.used[j] = true;
                *self.remaining_ref.get_mut(tok).expect("counted") -= 1;
                self.path.push((i, j));
                ok = self.run(i + 1, matched + 1);
                self.path.pop();
                *self.remaining_ref.get_mut(tok).expect("counted") += 1;
                self.used[j] = false;
                if !ok {
                    break;
                }
            }
        }
        if ok && (avail_ref == 0 || may_skip) {
            ok = self.run(i + 1, matched);
        }
        *self.remaining_cand.get_mut(tok).expect("counted") += 1;
        ok
    }
}

/// Greedy fallback: each candidate token takes the reference slot that
/// extends the current chunk if free, else the earliest free slot.
fn greedy_alignment(cand: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut used = alloc::vec![false; reference.len()];
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, t) in cand.iter().enumerate() {
        let cont = out
            .last()
            .and_then(|&(pi, pj)| (pi + 1 == i).then_some(pj + 1))
            .filter(|&j| j < reference.len() && !used[j] && &reference[j] == t);
        let j = cont.or_else(|| (0..reference.len()).find(|&j| !used[j] && &reference[j] == t));
        if let Some(j) = j {
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Maximum-match alignment with the fewest chunks: (matches, chunks, exact).
/// `exact` is false when the search budget ran out and the greedy alignment
/// was used instead.
pub fn meteor_alignment(cand: &[String], reference: &[String]) -> (usize, usize, bool) {
    let mut rc: BTreeMap<&str, usize> = BTreeMap::new();
    for t in reference {
        *rc.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut cc: BTreeMap<&str, usize> = BTreeMap::new();
    for t in cand {
        *cc.entry(t.as_str()).or_insert(0) += 1;
    }
    let max_matches: usize = cc.iter().map(|(t, k)| (*k).min(rc.get(t).copied().unwrap_or(0))).sum();
    if max_matches == 0 {
        return (0, 0, true);
    }
    let mut search = AlignSearch {
        cand,
        reference,
        max_matches,
        used: alloc::vec![false; reference.len()],
        remaining_ref: rc,
        remaining_cand: cc,
        path: Vec::new(),
        best: None,
        nodes: 0,
    };
    let finished = search.run(0, 0);
    match (finished, search.best) {
        (true, Some((chunks, _))) => (max_matches, chunks, true),
        _ => {
            let greedy = greedy_alignment(cand, reference);
            (greedy.len(), count_chunks(&greedy), false)
        }
    }
}

/// Exact-match METEOR: Fmean = 10PR/(R+9P), penalty = 0.5·(chunks/m)³.
/// A single chunk covering both texts has no fragmentation, so identical
/// texts score 1.
pub fn meteor(cand: &[String], reference: &[String]) -> f64 {
    let (m, chunks, _) = meteor_alignment(cand, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let whole = chunks == 1 && m == cand.len() && m == reference.len();
    let frag = if whole { 0.0 } else { chunks as f64 / m as f64 };
    fmean * (1.0 - 0.5 * frag * frag * frag)
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponsePair {
    pub context_id: String,
    pub gold_strategy: Strategy,
    pub gold_text: String,
    pub pred_strategy: Strategy,
    pub pred_text: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BleuMode {
    /// Mean of per-pair sentence BLEU.
    #[default]
    Sentence,
    /// Counts pooled over all pairs.
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub context_id: String,
    pub strategy_match: bool,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub meteor: f64,
}

pub fn score_pair(pair: &ResponsePair) -> PairScores {
    let c = tokenize(&pair.pred_text);
    let r = tokenize(&pair.gold_text);
    PairScores {
        context_id: pair.context_id.clone(),
        strategy_match: pair.gold_strategy == pair.pred_strategy,
        bleu1: sentence_bleu(&c, &r, 1),
        bleu2: sentence_bleu(&c, &r, 2),
        bleu4: sentence_bleu(&c, &r, 4),
        rouge1: rouge_n(&c, &r, 1),
        rouge2: rouge_n(&c, &r, 2),
        rouge_l: rouge_l(&c, &r),
        meteor: meteor(&c, &r),
    }
}

/// Percent values at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub acc: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    /// Exact-match METEOR.
    pub meteor: f64,
    pub bleu_mode: BleuMode,
    pub per_pair: Vec<PairScores>,
}

pub fn round2(x: f64) -> f64 {
    libm::round(x * 100.0) / 100.0
}

/// Exact-match strategy accuracy ×100, rounded to 2 decimals.
pub fn strategy_accuracy(pairs: &[ResponsePair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let hits = pairs.iter().filter(|p| p.gold_strategy == p.pred_strategy).count();
    Ok(round2(100.0 * hits as f64 / pairs.len() as f64))
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    100.0 * xs.sum::<f64>() / n as f64
}

pub fn bleu(pairs: &[ResponsePair], n: usize, mode: BleuMode) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if n == 0 {
        return Err(MetricError::BadOrder);
    }
    let toks: Vec<(Vec<String>, Vec<String>)> = pairs
        .iter()
        .map(|p| (tokenize(&p.pred_text), tokenize(&p.gold_text)))
        .collect();
    Ok(match mode {
        BleuMode::Sentence => mean(toks.iter().map(|(c, r)| sentence_bleu(c, r, n)), toks.len()),
        BleuMode::Corpus => 100.0 * corpus_bleu(&toks, n),
    })
}

pub fn evaluate(pairs: &[ResponsePair], mode: BleuMode) -> Result<MetricsReport, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let per_pair: Vec<PairScores> = pairs.iter().map(score_pair).collect();
    let n = per_pair.len();
    let (bleu1, bleu2, bleu4) = match mode {
        BleuMode::Sentence => (
            mean(per_pair.iter().map(|p| p.bleu1), n),
            mean(per_pair.iter().map(|p| p.bleu2), n),
            mean(per_pair.iter().map(|p| p.bleu4), n),
        ),
        BleuMode::Corpus => (bleu(pairs, 1, mode)?, bleu(pairs, 2, mode)?, bleu(pairs, 4, mode)?),
    };
    Ok(MetricsReport {
        n,
        acc: strategy_accuracy(pairs)?,
        bleu1,
        bleu2,
        bleu4,
        rouge1: mean(per_pair.iter().map(|p| p.rouge1), n),
        rouge2: mean(per_pair.iter().map(|p| p.rouge2), n),
        rouge_l: mean(per_pair.iter().map(|p| p.rouge_l), n),
        meteor: mean(per_pair.iter().map(|p| p.meteor), n),
        bleu_mode: mode,
        per_pair,
    })
}

/// Optional embedding-based similarity (e.g. BERTScore) in [0,1].
pub trait SemanticScorer {
    fn score(&self, candidate: &str, reference: &str) -> Option<f64>;
}

impl MetricsReport {
    /// One header row and one value row, 2 decimals.
    pub fn table(&self, label: &str) -> String {
        let mut out = alloc::format!(
            "{:<16} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>12}\n",
            "Model",
            "ACC",
            "B-1",
            "B-2",
            "B-4",
            "R-1",
            "R-2",
            "R-L",
            "METEOR-exact"
        );
        out.push_str(&alloc::format!(
            "{:<16} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>12.2}\n",
            label,
            self.acc,
            self.bleu1,
            self.bleu2,
            self.bleu4,
            self.rouge1,
            self.rouge2,
            self.rouge_l,
            self.meteor
        ));
        out
    }
}

/// Mean of an optional semantic scorer over pairs; `None` when unplugged or
/// when any pair is unscored.
pub fn semantic_score(pairs: &[ResponsePair], scorer: Option<&dyn SemanticScorer>) -> Option<f64> {
    let scorer = scorer?;
    if pairs.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for p in pairs {
        sum += scorer.score(&p.pred_text, &p.gold_text)?;
    }
    Some(100.0 * sum / pairs.len() as f64)
}

pub fn render_optional(x: Option<f64>) -> String {
    match x {
        Some(v) => alloc::format!("{v:.2}"),
        None => "n/a".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn tokenizer() {
        assert_eq!(t("The cat sat."), ["the", "cat", "sat", "."]);
        assert!(t("").is_empty());
        assert_eq!(t("Don't  stop!"), ["don", "'", "t", "stop", "!"]);
        let again = t(&t("Hi, there... OK?").join(" "));
        assert_eq!(again, t("Hi, there... OK?"));
    }

    #[test]
    fn bleu_values() {
        assert!(close(
            sentence_bleu(&t("the cat sat"), &t("the cat slept"), 1),
            2.0 / 3.0
        ));
        for n in [1, 2, 4] {
            assert!(close(sentence_bleu(&t("a b c"), &t("a b c"), n), 1.0));
            assert_eq!(sentence_bleu(&t("x y"), &t("a b"), n), 0.0);
        }
        // p1 = 2/3, p2 = (0+1)/(2+1): geometric mean
        assert!(close(
            sentence_bleu(&t("a b c"), &t("a x b"), 2),
            libm::sqrt(2.0 / 3.0 * 1.0 / 3.0)
        ));
        // brevity: c = 2, r = 4
        assert!(close(sentence_bleu(&t("a b"), &t("a b c d"), 1), libm::exp(1.0 - 2.0)));
        assert_eq!(sentence_bleu(&[], &t("a"), 1), 0.0);
    }

    #[test]
    fn rouge_values() {
        assert!(close(rouge_l(&t("a b c d"), &t("a c d e")), 0.75));
        assert!(close(rouge_n(&t("a b c d"), &t("a c d e"), 1), 0.75));
        assert!(close(rouge_n(&t("a b c d"), &t("a c d e"), 2), 1.0 / 3.0));
        assert_eq!(rouge_n(&t("a"), &t("a"), 2), 1.0);
        assert_eq!(rouge_n(&t("a"), &t("b"), 2), 0.0);
        assert_eq!(rouge_l(&t("x"), &t("y")), 0.0);
    }

    #[test]
    fn meteor_values() {
        assert_eq!(meteor(&t("a b c d"), &t("a b c d")), 1.0);
        // one chunk, but the reference has an extra token: P=1, R=3/4
        let fmean = 10.0 * 0.75 / (0.75 + 9.0);
        assert!(close(meteor(&t("a b c"), &t("a b c d")), fmean * (1.0 - 0.5 / 27.0)));
        let single = meteor(&t("a x y"), &t("a p q"));
        assert!(close(single, 1.0 / 6.0));
        assert_eq!(meteor(&t("x"), &t("y")), 0.0);
        // "a b" appears twice; best alignment uses 2 chunks, not 4
        let (m, chunks, exact) = meteor_alignment(&t("a b x a b"), &t("a b y a b"));
        assert_eq!((m, chunks, exact), (4, 2, true));
        // swapped order must pick the chunk-minimal mapping
        let (m, chunks, _) = meteor_alignment(&t("b a"), &t("a b a"));
        assert_eq!((m, chunks), (2, 1));
    }

    fn pair(gs: Strategy, g: &str, ps: Strategy, p: &str) -> ResponsePair {
        ResponsePair {
            context_id: "c".into(),
            gold_strategy: gs,
            gold_text: g.into(),
            pred_strategy: ps,
            pred_text: p.into(),
        }
    }

    #[test]
    fn accuracy_and_report() {
        let q = Strategy::Question;
        let s = Strategy::ProvidingSuggestions;
        let pairs = alloc::vec![
            pair(q, "a", q, "a"),
            pair(s, "a", Strategy::ReflectionOfFeelings, "a"),
            pair(q, "a", s, "a"),
            pair(s, "a", q, "a"),
        ];
        assert_eq!(strategy_accuracy(&pairs), Ok(25.0));
        assert_eq!(strategy_accuracy(&[]), Err(MetricError::EmptyInput));
        let rep = evaluate(&pairs, BleuMode::Sentence).unwrap();
        assert_eq!(rep.n, 4);
        assert!(close(rep.bleu4, 100.0));
        assert!(rep.table("demo").contains("25.00"));
        assert_eq!(render_optional(semantic_score(&pairs, None)), "n/a");
    }
}
