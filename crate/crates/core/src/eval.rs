//! Task metrics and position-tracking diagnostics.
//!
//! Ranking metrics use the midrank statistic, which agrees exactly with the
//! O(n^2) pairwise comparison. HDO diagnostics report the per-node
//! hyperbolic distance to the origin together with the center's distance
//! (`root`) and the companion distance-to-center (HDC) block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::center::hyperbolic_center;
use crate::error::{Error, Result};
use crate::manifold::{dist, Embedding};

/// AUC as `P(score_pos > score_neg) + 0.5 P(tie)` plus average precision.
pub fn ranking_metrics(pos_scores: &[f64], neg_scores: &[f64]) -> Result<(f64, f64)> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::invalid("ranking_metrics needs nonempty score lists"));
    }
    Ok((auc(pos_scores, neg_scores), average_precision(pos_scores, neg_scores)))
}

fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    // Midrank (Mann-Whitney U) formulation.
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN score"));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // 1-based midrank of the tied group [i, j].
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &all[i..=j] {
            if item.1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Brute-force pairwise AUC, the oracle the fast path must match exactly.
pub fn auc_pairwise_oracle(pos: &[f64], neg: &[f64]) -> f64 {
    let mut num = 0.0f64;
    for &p in pos {
        for &n in neg {
            if p > n {
                num += 1.0;
            } else if p == n {
                num += 0.5;
            }
        }
    }
    num / (pos.len() as f64 * neg.len() as f64)
}

fn average_precision(pos: &[f64], neg: &[f64]) -> f64 {
    // Threshold sweep over distinct scores, descending; ties are handled
    // as one group, matching the precision-weighted recall sum.
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("NaN score"));
    let total_pos = pos.len() as f64;
    let mut tp = 0.0f64;
    let mut seen = 0.0f64;
    let mut ap = 0.0f64;
    let mut prev_recall = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        for item in &all[i..=j] {
            seen += 1.0;
            if item.1 {
                tp += 1.0;
            }
        }
        let recall = tp / total_pos;
        let precision = tp / seen;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    ap
}

/// Averaging mode for classification metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassAverage {
    Accuracy,
    F1Binary,
    F1Macro,
}

impl ClassAverage {
    pub fn parse(s: &str) -> Result<ClassAverage> {
        match s {
            "accuracy" => Ok(ClassAverage::Accuracy),
            "f1_binary" => Ok(ClassAverage::F1Binary),
            "f1_macro" => Ok(ClassAverage::F1Macro),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassAverage::Accuracy => "accuracy",
            ClassAverage::F1Binary => "f1_binary",
            ClassAverage::F1Macro => "f1_macro",
        }
    }
}

/// Accuracy or F1 over the masked nodes. F1 cells with zero denominators
/// count as 0 with a warning.
pub fn classification_metrics(
    pred: &[usize],
    labels: &[usize],
    mask: &[bool],
    average: ClassAverage,
) -> Result<f64> {
    if pred.len() != labels.len() || mask.len() != labels.len() {
        return Err(Error::DimMismatch(pred.len(), labels.len()));
    }
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::invalid("empty evaluation mask"));
    }
    let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    for &i in &idx {
        if pred[i] >= n_classes {
            return Err(Error::invalid(format!(
                "prediction {} at node {i} is not a known label id",
                pred[i]
            )));
        }
    }
    match average {
        ClassAverage::Accuracy => {
            let correct = idx.iter().filter(|&&i| pred[i] == labels[i]).count();
            Ok(correct as f64 / idx.len() as f64)
        }
        ClassAverage::F1Binary => Ok(f1_for_class(pred, labels, &idx, 1)),
        ClassAverage::F1Macro => {
            let mut total = 0.0;
            for c in 0..n_classes {
                total += f1_for_class(pred, labels, &idx, c);
            }
            Ok(total / n_classes as f64)
        }
    }
}

fn f1_for_class(pred: &[usize], labels: &[usize], idx: &[usize], class: usize) -> f64 {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for &i in idx {
        match (pred[i] == class, labels[i] == class) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    let denom = 2.0 * tp + fp + fn_;
    if denom == 0.0 {
        eprintln!("warning: F1 undefined for class {class}; counting as 0");
        return 0.0;
    }
    2.0 * tp / denom
}

/// Histogram over `[0, max]` with uniform bins; counts sum to the number
/// of samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn build(values: &[f64], bins: usize) -> Histogram {
        let bins = bins.max(1);
        let hi = values.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
        let mut edges = Vec::with_capacity(bins + 1);
        for i in 0..=bins {
            edges.push(hi * i as f64 / bins as f64);
        }
        let mut counts = vec![0usize; bins];
        for &v in values {
            let mut b = ((v / hi) * bins as f64).floor() as usize;
            if b >= bins {
                b = bins - 1;
            }
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }

    /// CSV rows `bin_left,bin_right,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count\n");
        for (i, &c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{:?},{:?},{c}\n", self.edges[i], self.edges[i + 1]));
        }
        out
    }
}

/// Distance-to-origin statistics: `root` is the HDO of the hyperbolic
/// center.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HdoStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub root: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Histogram>,
}

/// Companion block: distances from each node to the hyperbolic center.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HdcStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HdoReport {
    pub hdo: HdoStats,
    pub hdc: HdcStats,
    #[serde(skip)]
    pub values: Vec<f64>,
}

fn summary(values: &[f64]) -> (f64, f64, f64) {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (min, max, mean)
}

/// Per-node HDO statistics with histogram, the center's HDO (`root`), and
/// the HDC block.
pub fn hdo_diagnostics(embedding: &Embedding, bins: usize) -> Result<HdoReport> {
    if embedding.n() == 0 {
        return Err(Error::invalid("empty embedding"));
    }
    let o = embedding.space.origin(embedding.dim());
    let mut values = Vec::with_capacity(embedding.n());
    for i in 0..embedding.n() {
        values.push(dist(&embedding.point(i), &o)?);
    }
    let (min, max, mean) = summary(&values);
    let center = hyperbolic_center(embedding)?;
    let root = dist(&center, &o)?;
    let histogram = Some(Histogram::build(&values, bins));

    let mut hdc_values = Vec::with_capacity(embedding.n());
    for i in 0..embedding.n() {
        hdc_values.push(dist(&embedding.point(i), &center)?);
    }
    let (cmin, cmax, cmean) = summary(&hdc_values);

    Ok(HdoReport {
        hdo: HdoStats { min, max, mean, root, histogram },
        hdc: HdcStats { min: cmin, max: cmax, mean: cmean },
        values,
    })
}

/// Fraction of sampled distinct-depth node pairs whose HDO ordering matches
/// the depth ordering: the shallower node must sit strictly closer to the
/// origin; ties count as incorrect.
pub fn hierarchy_accuracy(
    embedding: &Embedding,
    depth: &[usize],
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    if pairs == 0 {
        return Err(Error::invalid("pairs must be >= 1"));
    }
    if depth.len() != embedding.n() {
        return Err(Error::DimMismatch(depth.len(), embedding.n()));
    }
    let first = depth[0];
    if depth.iter().all(|&d| d == first) {
        return Err(Error::invalid("no distinct-depth pairs exist"));
    }
    let o = embedding.space.origin(embedding.dim());
    let mut hdo = Vec::with_capacity(embedding.n());
    for i in 0..embedding.n() {
        hdo.push(dist(&embedding.point(i), &o)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = embedding.n();
    let mut correct = 0usize;
    let mut sampled = 0usize;
    while sampled < pairs {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if depth[i] == depth[j] {
            continue;
        }
        let (shallow, deep) = if depth[i] < depth[j] { (i, j) } else { (j, i) };
        if hdo[shallow] < hdo[deep] {
            correct += 1;
        }
        sampled += 1;
    }
    Ok(correct as f64 / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ManifoldPoint, Space};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn auc_extremes() {
        let (auc, _) = ranking_metrics(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        assert_eq!(auc, 1.0);
        let (auc, _) = ranking_metrics(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(auc, 0.5);
        let (auc, _) = ranking_metrics(&[0.1], &[0.9]).unwrap();
        assert_eq!(auc, 0.0);
    }

    #[test]
    fn auc_matches_pairwise_oracle_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let np = rng.random_range(1..=40);
            let nn = rng.random_range(1..=40);
            // Quantized scores force plenty of ties.
            let pos: Vec<f64> =
                (0..np).map(|_| (rng.random::<f64>() * 8.0).round() / 8.0).collect();
            let neg: Vec<f64> =
                (0..nn).map(|_| (rng.random::<f64>() * 8.0).round() / 8.0).collect();
            let (fast, _) = ranking_metrics(&pos, &neg).unwrap();
            let slow = auc_pairwise_oracle(&pos, &neg);
            assert_eq!(fast, slow, "pos={pos:?} neg={neg:?}");
        }
    }

    #[test]
    fn average_precision_hand_cases() {
        // Ranked: pos(0.9), neg(0.8), pos(0.7) -> AP = 0.5*1 + 0.5*(2/3).
        let (_, ap) = ranking_metrics(&[0.9, 0.7], &[0.8]).unwrap();
        assert_abs_diff_eq!(ap, 0.5 + 0.5 * (2.0 / 3.0), epsilon = 1e-12);

        let (_, ap) = ranking_metrics(&[0.9, 0.8], &[0.1]).unwrap();
        assert_abs_diff_eq!(ap, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn classification_extremes_and_confusion_case() {
        let labels = vec![0, 1, 1, 0];
        let mask = vec![true; 4];
        let acc =
            classification_metrics(&labels, &labels, &mask, ClassAverage::Accuracy).unwrap();
        assert_eq!(acc, 1.0);

        let flipped = vec![1, 0, 0, 1];
        let f1 =
            classification_metrics(&flipped, &labels, &mask, ClassAverage::F1Binary).unwrap();
        assert_eq!(f1, 0.0);

        // Hand-computed confusion case over 6 samples, classes {0, 1, 2}:
        // pred:   0 0 1 1 2 2
        // label:  0 1 1 2 2 0
        // class0: tp=1 fp=1 fn=1 -> f1 = 2/4 = 0.5
        // class1: tp=1 fp=1 fn=1 -> 0.5
        // class2: tp=1 fp=1 fn=1 -> 0.5
        let pred = vec![0, 0, 1, 1, 2, 2];
        let labels = vec![0, 1, 1, 2, 2, 0];
        let mask = vec![true; 6];
        let f1m =
            classification_metrics(&pred, &labels, &mask, ClassAverage::F1Macro).unwrap();
        assert_abs_diff_eq!(f1m, 0.5, epsilon = 1e-12);
        let acc = classification_metrics(&pred, &labels, &mask, ClassAverage::Accuracy).unwrap();
        assert_abs_diff_eq!(acc, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn classification_rejects_unknown_prediction_and_empty_mask() {
        let labels = vec![0, 1];
        assert!(classification_metrics(&[0, 5], &labels, &[true, true], ClassAverage::Accuracy)
            .is_err());
        assert!(classification_metrics(&[0, 1], &labels, &[false, false], ClassAverage::Accuracy)
            .is_err());
    }

    fn ball_embedding(points: &[[f64; 2]]) -> Embedding {
        let s = Space::poincare(-1.0).unwrap();
        let pts: Vec<ManifoldPoint> =
            points.iter().map(|p| ManifoldPoint::new(s, array![p[0], p[1]])).collect();
        Embedding::from_points(&pts).unwrap()
    }

    #[test]
    fn hdo_all_origin() {
        let emb = ball_embedding(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
        let r = hdo_diagnostics(&emb, 10).unwrap();
        assert_eq!(r.hdo.min, 0.0);
        assert_eq!(r.hdo.max, 0.0);
        assert_eq!(r.hdo.mean, 0.0);
        assert_eq!(r.hdo.root, 0.0);
        assert_eq!(r.hdo.histogram.as_ref().unwrap().counts.iter().sum::<usize>(), 3);
    }

    #[test]
    fn hdo_singleton_is_its_own_center() {
        let r = 2.0f64;
        let x = (r / 2.0).tanh();
        let emb = ball_embedding(&[[x, 0.0]]);
        let rep = hdo_diagnostics(&emb, 5).unwrap();
        assert_abs_diff_eq!(rep.hdo.min, r, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.hdo.max, r, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.hdo.mean, r, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.hdo.root, r, epsilon = 1e-9);
        assert_abs_diff_eq!(rep.hdc.max, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn hdo_symmetric_pair_centers_at_origin() {
        let emb = ball_embedding(&[[0.4, 0.1], [-0.4, -0.1]]);
        let rep = hdo_diagnostics(&emb, 5).unwrap();
        assert_abs_diff_eq!(rep.hdo.root, 0.0, epsilon = 1e-9);
        // HDC of each node equals its HDO when the center is the origin.
        assert_abs_diff_eq!(rep.hdc.min, rep.hdo.min, epsilon = 1e-9);
        assert_abs_diff_eq!(rep.hdc.max, rep.hdo.max, epsilon = 1e-9);
    }

    #[test]
    fn histogram_counts_sum_to_n() {
        let emb = ball_embedding(&[[0.1, 0.0], [0.3, 0.0], [0.5, 0.2], [0.0, 0.9]]);
        let rep = hdo_diagnostics(&emb, 7).unwrap();
        let h = rep.hdo.histogram.unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        assert_eq!(h.edges.len(), h.counts.len() + 1);
        let csv = h.to_csv();
        assert!(csv.starts_with("bin_left,bin_right,count\n"));
        assert_eq!(csv.lines().count(), 8);
    }

    #[test]
    fn hierarchy_accuracy_extremes_and_invariance() {
        // Depths 0, 1, 1, 2; radii increasing with depth.
        let emb = ball_embedding(&[[0.0, 0.0], [0.2, 0.0], [0.0, 0.25], [0.6, 0.0]]);
        let depth = vec![0, 1, 1, 2];
        let acc = hierarchy_accuracy(&emb, &depth, 2000, 7).unwrap();
        assert_eq!(acc, 1.0);

        // Inverted ordering scores zero.
        let inv = ball_embedding(&[[0.6, 0.0], [0.2, 0.0], [0.3, 0.0], [0.0, 0.0]]);
        let acc = hierarchy_accuracy(&inv, &depth, 2000, 7).unwrap();
        assert_eq!(acc, 0.0);

        // Invariant under a strictly monotone transform of the radii:
        // tanh(r/2) -> tanh(r) keeps ordering.
        let strained = ball_embedding(&[[0.0, 0.0], [0.38, 0.0], [0.0, 0.46], [0.83, 0.0]]);
        let acc2 = hierarchy_accuracy(&strained, &depth, 2000, 7).unwrap();
        assert_eq!(acc2, 1.0);

        // All-equal depth errors out.
        assert!(hierarchy_accuracy(&emb, &[1, 1, 1, 1], 10, 0).is_err());
    }
}
