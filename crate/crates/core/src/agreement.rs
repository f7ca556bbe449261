//! Inter-rater agreement: Fleiss' κ and weighted Cohen's κ.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgreementError {
    #[error("no items to rate")]
    EmptyInput,
    #[error("rating lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("item {item} has {got} ratings, expected {expected}")]
    RaterCountMismatch { item: usize, got: usize, expected: usize },
    #[error("need at least two raters")]
    TooFewRaters,
    #[error("rating {value} outside 1..={k}")]
    OutOfScale { value: usize, k: usize },
    #[error("chance agreement is 1; kappa is undefined")]
    DegenerateInput,
}

/// Fleiss' κ over `ratings[item][rater]`, categories `1..=k`.
pub fn fleiss_kappa(ratings: &[Vec<usize>], k: usize) -> Result<f64, AgreementError> {
    let first = ratings.first().ok_or(AgreementError::EmptyInput)?;
    let n = first.len();
    if n < 2 {
        return Err(AgreementError::TooFewRaters);
    }
    let mut totals = alloc::vec![0usize; k];
    let mut p_bar = 0.0;
    for (item, row) in ratings.iter().enumerate() {
        if row.len() != n {
            return Err(AgreementError::RaterCountMismatch {
                item,
                got: row.len(),
                expected: n,
            });
        }
        let mut counts = alloc::vec![0usize; k];
        for &v in row {
            if v == 0 || v > k {
                return Err(AgreementError::OutOfScale { value: v, k });
            }
            counts[v - 1] += 1;
        }
        let sq: usize = counts.iter().map(|c| c * c).sum();
        p_bar += (sq - n) as f64 / (n * (n - 1)) as f64;
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += c;
        }
    }
    let items = ratings.len() as f64;
    p_bar /= items;
    let all = items * n as f64;
    let p_e: f64 = totals.iter().map(|&t| (t as f64 / all) * (t as f64 / all)).sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(AgreementError::DegenerateInput);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Unweighted,
    Linear,
    #[default]
    Quadratic,
}

impl Weighting {
    /// Agreement weight for categories `i`, `j` (0-based) on a k-point scale.
    pub fn weight(self, i: usize, j: usize, k: usize) -> f64 {
        let d = i.abs_diff(j) as f64;
        let span = (k - 1) as f64;
        match self {
            Weighting::Unweighted => {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            }
            Weighting::Linear => 1.0 - d / span,
            Weighting::Quadratic => 1.0 - (d * d) / (span * span),
        }
    }
}

/// k×k confusion matrix of counts, rows = rater a.
pub fn confusion(a: &[usize], b: &[usize], k: usize) -> Result<Vec<Vec<usize>>, AgreementError> {
    if a.len() != b.len() {
        return Err(AgreementError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(AgreementError::EmptyInput);
    }
    let mut m = alloc::vec![alloc::vec![0usize; k]; k];
    for (&x, &y) in a.iter().zip(b) {
        for v in [x, y] {
            if v == 0 || v > k {
                return Err(AgreementError::OutOfScale { value: v, k });
            }
        }
        m[x - 1][y - 1] += 1;
    }
    Ok(m)
}

/// Weighted Cohen's κ for two raters on the ordinal scale `1..=k`.
pub fn cohen_kappa(a: &[usize], b: &[usize], k: usize, weighting: Weighting) -> Result<f64, AgreementError> {
    if k < 2 {
        return Err(AgreementError::DegenerateInput);
    }
    let m = confusion(a, b, k)?;
    let n = a.len() as f64;
    let rows: Vec<f64> = m.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let cols: Vec<f64> = (0..k).map(|j| m.iter().map(|r| r[j]).sum::<usize>() as f64).collect();
    // sums stay in counts so perfect agreement gives po == 1 exactly
    let (mut observed, mut expected) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let w = weighting.weight(i, j, k);
            observed += w * m[i][j] as f64;
            expected += w * rows[i] * cols[j];
        }
    }
    let po = observed / n;
    let pe = expected / (n * n);
    if (1.0 - pe).abs() < 1e-15 {
        return Err(AgreementError::DegenerateInput);
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Quadratic-weighted κ on the 1..5 Likert scale.
pub fn cohen_kappa_quadratic(a: &[usize], b: &[usize]) -> Result<f64, AgreementError> {
    cohen_kappa(a, b, 5, Weighting::Quadratic)
}
