//! Ranking metrics against ground truth, thresholding, and group-level
//! connectivity summaries.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::AdjacencyMatrix;
use crate::error::{Error, Result};
use crate::extract::GcScoreMatrix;
use crate::scalar::Scalar;

/// Default binarization threshold for group-mean matrices.
pub const GROUP_THRESHOLD: f64 = 0.85;

/// `(score, is_edge)` for every evaluated entry, in row-major order.
fn scored_entries<T: Scalar>(
    scores: &Array2<T>,
    truth: &AdjacencyMatrix,
    include_diagonal: bool,
) -> Result<Vec<(f64, bool)>> {
    if scores.dim() != truth.entries().dim() {
        return Err(Error::Shape(format!(
            "scores {:?} vs ground truth {:?}",
            scores.dim(),
            truth.entries().dim()
        )));
    }
    Ok(scores
        .indexed_iter()
        .filter(|((r, c), _)| include_diagonal || r != c)
        .map(|((r, c), s)| (s.as_f64(), truth.entries()[[r, c]] == 1))
        .collect())
}

fn class_counts(entries: &[(f64, bool)], metric: &'static str) -> Result<(usize, usize)> {
    let pos = entries.iter().filter(|e| e.1).count();
    let neg = entries.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass { metric });
    }
    Ok((pos, neg))
}

/// Probability that a random edge outscores a random non-edge, ties counting
/// one half (Mann-Whitney statistic via mid-ranks).
pub fn auroc<T: Scalar>(scores: &Array2<T>, truth: &AdjacencyMatrix, include_diagonal: bool) -> Result<f64> {
    rank_auc(&scored_entries(scores, truth, include_diagonal)?)
}

/// [`auroc`] over explicit `(score, is_positive)` pairs.
pub fn rank_auc(entries: &[(f64, bool)]) -> Result<f64> {
    let (pos, neg) = class_counts(entries, "AUROC")?;
    if entries.iter().any(|e| e.0.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let mut entries = entries.to_vec();
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < entries.len() {
        let mut end = start;
        while end + 1 < entries.len() && entries[end + 1].0 == entries[start].0 {
            end += 1;
        }
        // 1-based ranks start+1 ..= end+1 share their mean
        let mid = (start + end) as f64 / 2.0 + 1.0;
        rank_sum += mid * entries[start..=end].iter().filter(|e| e.1).count() as f64;
        start = end + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Average precision: entries ranked by descending score, ties kept in
/// row-major order; the mean over edges of the precision at their rank.
pub fn auprc<T: Scalar>(scores: &Array2<T>, truth: &AdjacencyMatrix, include_diagonal: bool) -> Result<f64> {
    average_precision(&scored_entries(scores, truth, include_diagonal)?)
}

/// [`auprc`] over explicit `(score, is_positive)` pairs; ties keep slice order.
pub fn average_precision(entries: &[(f64, bool)]) -> Result<f64> {
    let (pos, _) = class_counts(entries, "AUPRC")?;
    if entries.iter().any(|e| e.0.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let mut entries = entries.to_vec();
    // stable sort keeps index order among ties
    entries.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (k, e) in entries.iter().enumerate() {
        if e.1 {
            hits += 1;
            total += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(total / pos as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auroc: f64,
    pub auprc: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    pub diagonal_included: bool,
}

pub fn evaluate<T: Scalar>(
    scores: &GcScoreMatrix<T>,
    truth: &AdjacencyMatrix,
    include_diagonal: bool,
) -> Result<MetricReport> {
    let entries = scored_entries(&scores.scores, truth, include_diagonal)?;
    let (n_positive, n_negative) = class_counts(&entries, "AUROC")?;
    Ok(MetricReport {
        auroc: auroc(&scores.scores, truth, include_diagonal)?,
        auprc: auprc(&scores.scores, truth, include_diagonal)?,
        n_positive,
        n_negative,
        diagonal_included: include_diagonal,
    })
}

/// Binary matrix with a one wherever the score is strictly above `tau`.
pub fn threshold_matrix<T: Scalar>(scores: &GcScoreMatrix<T>, tau: f64) -> Result<AdjacencyMatrix> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("threshold must lie in [0, 1], got {tau}")));
    }
    AdjacencyMatrix::new(scores.scores.mapv(|s| u8::from(s.as_f64() > tau)))
}

/// Entrywise mean over subjects.
pub fn group_mean_connectivity<T: Scalar>(matrices: &[GcScoreMatrix<T>]) -> Result<GcScoreMatrix<T>> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::Config("group has no subjects".into()))?;
    let mut sum = Array2::<f64>::zeros(first.scores.raw_dim());
    for m in matrices {
        if m.scores.dim() != first.scores.dim() {
            return Err(Error::Shape(format!(
                "subject matrices differ in shape: {:?} vs {:?}",
                m.scores.dim(),
                first.scores.dim()
            )));
        }
        sum += &m.scores.mapv(|v| v.as_f64());
    }
    let n = matrices.len() as f64;
    GcScoreMatrix::new(sum.mapv(|v| T::of((v / n).clamp(0.0, 1.0))), first.channel_names.clone())
}

/// Connections surviving each threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub thresholds: Vec<f64>,
    pub counts: Vec<usize>,
}

impl ThresholdCurve {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("threshold,count\n");
        for (t, c) in self.thresholds.iter().zip(&self.counts) {
            out.push_str(&format!("{t},{c}\n"));
        }
        out
    }
}

pub fn connections_vs_threshold<T: Scalar>(
    scores: &GcScoreMatrix<T>,
    thresholds: &[f64],
    include_diagonal: bool,
) -> Result<ThresholdCurve> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("thresholds must be ascending".into()));
    }
    let counts = thresholds
        .iter()
        .map(|&tau| {
            scores
                .scores
                .indexed_iter()
                .filter(|((r, c), s)| (include_diagonal || r != c) && s.as_f64() > tau)
                .count()
        })
        .collect();
    Ok(ThresholdCurve {
        thresholds: thresholds.to_vec(),
        counts,
    })
}

/// `from, from + step, ...` up to `to` inclusive, rounded to 1e-9.
pub fn threshold_grid(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|k| ((from + k as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeDifference {
    Same,
    OnlyInA,
    OnlyInB,
}

/// Cellwise comparison of two binary structures.
pub fn difference_mask(a: &AdjacencyMatrix, b: &AdjacencyMatrix) -> Result<Array2<EdgeDifference>> {
    if a.size() != b.size() {
        return Err(Error::Shape(format!("cannot compare {0}x{0} with {1}x{1}", a.size(), b.size())));
    }
    Ok(ndarray::Zip::from(a.entries())
        .and(b.entries())
        .map_collect(|&x, &y| match (x, y) {
            (1, 0) => EdgeDifference::OnlyInA,
            (0, 1) => EdgeDifference::OnlyInB,
            _ => EdgeDifference::Same,
        }))
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn brute_auroc(entries: &[(f64, bool)]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for a in entries.iter().filter(|e| e.1) {
            for b in entries.iter().filter(|e| !e.1) {
                den += 1.0;
                if a.0 > b.0 {
                    num += 1.0;
                } else if a.0 == b.0 {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    /// Precision at each edge's rank, ranks found by pairwise comparison
    /// on (score descending, index ascending).
    fn brute_auprc(entries: &[(f64, bool)]) -> f64 {
        let ahead = |i: usize, j: usize| entries[j].0 > entries[i].0 || (entries[j].0 == entries[i].0 && j < i);
        let mut total = 0.0;
        let mut pos = 0.0;
        for i in 0..entries.len() {
            if !entries[i].1 {
                continue;
            }
            pos += 1.0;
            let rank = 1 + (0..entries.len()).filter(|&j| ahead(i, j)).count();
            let hits = 1 + (0..entries.len()).filter(|&j| entries[j].1 && ahead(i, j)).count();
            total += hits as f64 / rank as f64;
        }
        total / pos
    }

    fn full_case(n: usize, pos: &[(usize, usize)], scores: Array2<f64>) -> (Array2<f64>, AdjacencyMatrix) {
        let mut t = AdjacencyMatrix::zeros(n);
        for &(r, c) in pos {
            t.set_edge(c, r);
        }
        (scores, t)
    }

    #[test]
    fn auroc_hand_cases() {
        let e = |v: &[(f64, bool)]| rank_auc(v).unwrap();
        assert_eq!(e(&[(0.9, true), (0.8, true), (0.1, false)]), 1.0);
        assert_eq!(e(&[(0.2, true), (0.4, true), (0.9, false)]), 0.0);
        assert_eq!(e(&[(0.5, true), (0.5, false)]), 0.5);
        // same cases through the matrix entry point (diagonal included)
        let (s, t) = full_case(2, &[(0, 0), (1, 1)], array![[0.9, 0.1], [0.1, 0.8]]);
        assert_eq!(auroc(&s, &t, true).unwrap(), 1.0);
        let (s, t) = full_case(2, &[(0, 0), (1, 1)], array![[0.2, 0.9], [0.9, 0.4]]);
        assert_eq!(auroc(&s, &t, true).unwrap(), 0.0);
        let (s, t) = full_case(2, &[(0, 1)], array![[0.0, 0.5], [0.5, 0.0]]);
        assert_eq!(auroc(&s, &t, false).unwrap(), 0.5);
    }

    #[test]
    fn auroc_single_class() {
        let (s, t) = full_case(2, &[], array![[0.0, 0.5], [0.5, 0.0]]);
        let err = auroc(&s, &t, false).unwrap_err();
        assert!(err.to_string().contains("undefined AUROC"));
    }

    fn ranked(n: usize, positive_ranks: &[usize]) -> Vec<(f64, bool)> {
        (1..=n)
            .map(|r| (1.0 - r as f64 / 100.0, positive_ranks.contains(&r)))
            .collect()
    }

    #[test]
    fn auprc_hand_cases() {
        assert!((average_precision(&ranked(10, &[1])).unwrap() - 1.0).abs() < 1e-15);
        assert!((average_precision(&ranked(10, &[10])).unwrap() - 0.1).abs() < 1e-15);
        assert!((average_precision(&ranked(4, &[1, 3])).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        let (s, t) = full_case(2, &[(0, 0), (1, 1)], array![[0.9, 0.7], [0.8, 0.6]]);
        // order 0.9(+) 0.8(-) 0.7(-) 0.6(+): (1 + 2/4) / 2
        assert!((auprc(&s, &t, true).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn auprc_ties_follow_index_order() {
        // all tied: positives at row-major positions 1 and 3 of 4
        let (s, t) = full_case(2, &[(0, 1), (1, 1)], array![[0.5, 0.5], [0.5, 0.5]]);
        assert!((auprc(&s, &t, true).unwrap() - (0.5 + 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn metrics_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        while checked < 300 {
            let s = Array2::from_shape_simple_fn((6, 6), || (rng.random_range(0..8) as f64) / 7.0);
            let t = Array2::from_shape_simple_fn((6, 6), || u8::from(rng.random_bool(0.3)));
            let t = AdjacencyMatrix::new(t).unwrap();
            for diag in [true, false] {
                let entries = scored_entries(&s, &t, diag).unwrap();
                if class_counts(&entries, "x").is_err() {
                    continue;
                }
                assert!((auroc(&s, &t, diag).unwrap() - brute_auroc(&entries)).abs() < 1e-12);
                assert!((auprc(&s, &t, diag).unwrap() - brute_auprc(&entries)).abs() < 1e-12);
                checked += 1;
            }
        }
    }

    proptest! {
        #[test]
        fn auroc_invariant_under_monotone_maps(
            vals in prop::collection::vec(0.0f64..1.0, 16),
            labels in prop::collection::vec(any::<bool>(), 16),
        ) {
            let s = Array2::from_shape_vec((4, 4), vals).unwrap();
            let t = AdjacencyMatrix::new(Array2::from_shape_vec((4, 4), labels.iter().map(|&b| u8::from(b)).collect()).unwrap()).unwrap();
            prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
            let a = auroc(&s, &t, true).unwrap();
            let cubed = s.mapv(|v| v.powi(3) * 2.0 + 1.0);
            prop_assert!((auroc(&cubed, &t, true).unwrap() - a).abs() < 1e-12);
            let flipped = s.mapv(|v| 1.0 - v);
            prop_assert!((auroc(&flipped, &t, true).unwrap() + a - 1.0).abs() < 1e-12);
        }
    }

    fn scores(m: Array2<f64>) -> GcScoreMatrix<f64> {
        let n = m.nrows();
        GcScoreMatrix::new(m, crate::data::default_channel_names(n)).unwrap()
    }

    #[test]
    fn thresholding_is_strict() {
        let m = scores(array![[0.0, 0.85], [0.9, 0.3]]);
        assert_eq!(threshold_matrix(&m, 0.85).unwrap().entries(), &array![[0u8, 0], [1, 0]]);
        assert_eq!(threshold_matrix(&m, 0.0).unwrap().entries(), &array![[0u8, 1], [1, 1]]);
        let low = scores(array![[0.1, 0.8], [0.2, 0.3]]);
        assert_eq!(threshold_matrix(&low, GROUP_THRESHOLD).unwrap().count_edges(true), 0);
        assert!(threshold_matrix(&m, 1.5).is_err());
    }

    #[test]
    fn group_means() {
        let a = scores(array![[0.2, 0.4], [0.6, 0.8]]);
        assert_eq!(group_mean_connectivity(&[a.clone(), a.clone()]).unwrap(), a);
        let zeros = scores(Array2::zeros((3, 3)));
        let ones = scores(Array2::ones((3, 3)));
        let mean = group_mean_connectivity(&[zeros, ones]).unwrap();
        assert!(mean.scores.iter().all(|&v| v == 0.5));
        assert!(group_mean_connectivity::<f64>(&[]).is_err());
        assert!(group_mean_connectivity(&[a, scores(Array2::zeros((3, 3)))]).is_err());
    }

    #[test]
    fn mean_then_threshold_differs_from_threshold_then_mean() {
        let a = scores(array![[0.0, 0.95], [0.0, 0.0]]);
        let b = scores(array![[0.0, 0.80], [0.0, 0.0]]);
        let mean = group_mean_connectivity(&[a.clone(), b.clone()]).unwrap();
        // mean 0.875 survives 0.85; averaging the binarized matrices gives 0.5
        assert_eq!(threshold_matrix(&mean, 0.85).unwrap().count_edges(true), 1);
        let ta = threshold_matrix(&a, 0.85).unwrap().entries().mapv(f64::from);
        let tb = threshold_matrix(&b, 0.85).unwrap().entries().mapv(f64::from);
        assert_eq!(((ta + tb) / 2.0)[[0, 1]], 0.5);
    }

    #[test]
    fn threshold_curve() {
        let m = scores(array![[0.9, 0.1, 0.5], [0.6, 0.7, 0.2], [0.3, 0.4, 0.95]]);
        let grid = [-1e-9, 0.5, 0.99];
        let all = connections_vs_threshold(&m, &grid, true).unwrap();
        assert_eq!(all.counts, vec![9, 4, 0]);
        let off = connections_vs_threshold(&m, &grid, false).unwrap();
        assert_eq!(off.counts[0], 6);
        assert!(all.counts.windows(2).all(|w| w[0] >= w[1]));
        assert!(connections_vs_threshold(&m, &[0.5, 0.4], true).is_err());
        assert_eq!(all.to_csv_string().lines().next(), Some("threshold,count"));
    }

    #[test]
    fn grid_endpoints() {
        let g = threshold_grid(0.5, 0.95, 0.05);
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.5);
        assert_eq!(*g.last().unwrap(), 0.95);
    }

    #[test]
    fn differences() {
        let mut a = AdjacencyMatrix::zeros(3);
        a.set_edge(0, 1);
        let same = difference_mask(&a, &a).unwrap();
        assert!(same.iter().all(|d| *d == EdgeDifference::Same));
        let mut b = a.clone();
        b.set_edge(2, 1);
        let d = difference_mask(&b, &a).unwrap();
        assert_eq!(d.iter().filter(|d| **d == EdgeDifference::OnlyInA).count(), 1);
        assert_eq!(d.iter().filter(|d| **d == EdgeDifference::OnlyInB).count(), 0);
        let ones = AdjacencyMatrix::new(Array2::ones((3, 3))).unwrap();
        let zeros = AdjacencyMatrix::zeros(3);
        assert!(difference_mask(&ones, &zeros).unwrap().iter().all(|d| *d == EdgeDifference::OnlyInA));
        assert!(difference_mask(&ones, &AdjacencyMatrix::zeros(2)).is_err());
    }

    #[test]
    fn mean_std_sample() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
