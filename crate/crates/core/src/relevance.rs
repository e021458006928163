//! Feature relevance from the input layer's rescaled eigenvalues.
//!
//! Rankings and cross-run aggregates use `|λ̃|`: the sign of an eigenvalue
//! can be traded against the sign of its eigenvector column, so it carries
//! no information across runs. Signed values are kept in the reports.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::spectral::rescaled_eigenvalues;
use crate::train::{evaluate_features, rng_for};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationStats {
    pub count: usize,
    pub mean_abs: Vec<f64>,
    pub std_abs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    /// `λ̃` per input feature; mean `|λ̃|` for aggregated reports.
    pub scores: Vec<f64>,
    pub raw_lambdas: Vec<f64>,
    /// Features by descending `|score|`, ties by ascending index.
    pub ranking: Vec<usize>,
    pub realization_stats: Option<RealizationStats>,
    pub ground_truth: Option<Vec<f64>>,
    pub provenance: Option<Provenance>,
}

impl RelevanceReport {
    pub fn from_scores(scores: Vec<f64>, raw_lambdas: Vec<f64>) -> Self {
        let ranking = rank_by_magnitude(&scores);
        Self {
            scores,
            raw_lambdas,
            ranking,
            realization_stats: None,
            ground_truth: None,
            provenance: None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.scores.len()
    }

    /// `|score|` per feature (already absolute for aggregates).
    pub fn magnitudes(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.abs()).collect()
    }

    /// Membership mask of the `k` top-ranked features.
    pub fn top_k_mask(&self, k: usize) -> Vec<bool> {
        let mut keep = vec![false; self.n_features()];
        for &i in self.ranking.iter().take(k) {
            keep[i] = true;
        }
        keep
    }
}

pub fn rank_by_magnitude(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()));
    idx
}

/// Rescaled eigenvalues of the network's first (spectral) layer.
pub fn extract_relevance(net: &Network) -> Result<RelevanceReport> {
    let layer = net
        .first_spectral()
        .ok_or_else(|| Error::InvalidArgument("first layer is not spectral".into()))?;
    let scores = rescaled_eigenvalues(layer).to_vec();
    Ok(RelevanceReport::from_scores(
        scores,
        layer.lambda_in.to_vec(),
    ))
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-feature mean and (population) standard deviation of `|score|` over runs.
pub fn aggregate_realizations(reports: &[RelevanceReport]) -> Result<RelevanceReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reports to aggregate".into()))?;
    let d = first.n_features();
    if let Some(r) = reports.iter().find(|r| r.n_features() != d) {
        return Err(Error::Shape(format!(
            "cannot aggregate reports with {d} and {} features",
            r.n_features()
        )));
    }
    let mut mean_abs = Vec::with_capacity(d);
    let mut std_abs = Vec::with_capacity(d);
    let mut raw = Vec::with_capacity(d);
    for f in 0..d {
        let (m, s) = mean_std(reports.iter().map(|r| r.scores[f].abs()));
        mean_abs.push(m);
        std_abs.push(s);
        raw.push(mean_std(reports.iter().map(|r| r.raw_lambdas[f].abs())).0);
    }
    let mut out = RelevanceReport::from_scores(mean_abs.clone(), raw);
    out.realization_stats = Some(RealizationStats {
        count: reports.len(),
        mean_abs,
        std_abs,
    });
    out.ground_truth = first.ground_truth.clone();
    let seeds: Vec<u64> = reports
        .iter()
        .filter_map(|r| r.provenance.as_ref())
        .flat_map(|p| p.seeds.iter().copied())
        .collect();
    if let Some(p) = &first.provenance {
        out.provenance = Some(Provenance {
            seeds,
            config_hash: p.config_hash.clone(),
        });
    }
    Ok(out)
}

/// Average ranks (1-based), ties sharing their mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation; `None` when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "spearman inputs must have equal length");
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub feature: usize,
    pub ground_truth: f64,
    pub magnitude: f64,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthAgreement {
    /// `None` when a side is constant and the correlation is undefined.
    pub spearman_rho: Option<f64>,
    pub points: Vec<ScatterPoint>,
}

impl GroundTruthAgreement {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,ground_truth,mean_abs_score,std_abs_score\n");
        for p in &self.points {
            let std = p.std.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.feature, p.ground_truth, p.magnitude, std
            );
        }
        out
    }
}

/// Rank agreement between `|score|` and a per-feature ground truth.
pub fn relevance_vs_ground_truth(
    report: &RelevanceReport,
    ground_truth: &[f64],
) -> Result<GroundTruthAgreement> {
    if ground_truth.len() != report.n_features() {
        return Err(Error::Shape(format!(
            "ground truth has {} entries for {} features",
            ground_truth.len(),
            report.n_features()
        )));
    }
    let mags = report.magnitudes();
    let stds = report.realization_stats.as_ref().map(|s| &s.std_abs);
    let points = (0..mags.len())
        .map(|f| ScatterPoint {
            feature: f,
            ground_truth: ground_truth[f],
            magnitude: mags[f],
            std: stds.map(|s| s[f]),
        })
        .collect();
    Ok(GroundTruthAgreement {
        spearman_rho: spearman(&mags, ground_truth),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKCurve {
    pub k_values: Vec<usize>,
    pub spectral_accuracy: Vec<f64>,
    pub random_baseline_mean: Vec<f64>,
    pub random_baseline_std: Vec<f64>,
}

impl TopKCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,spectral_accuracy,random_mean,random_std\n");
        for i in 0..self.k_values.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.k_values[i],
                self.spectral_accuracy[i],
                self.random_baseline_mean[i],
                self.random_baseline_std[i]
            );
        }
        out
    }

    pub fn spectral_at(&self, k: usize) -> Option<f64> {
        self.k_values
            .iter()
            .position(|&v| v == k)
            .map(|i| self.spectral_accuracy[i])
    }

    pub fn random_at(&self, k: usize) -> Option<(f64, f64)> {
        self.k_values
            .iter()
            .position(|&v| v == k)
            .map(|i| (self.random_baseline_mean[i], self.random_baseline_std[i]))
    }
}

/// Accuracy as a function of the number of retained features.
///
/// `score` maps a keep-mask over features to an accuracy. For each `k` it is
/// called on the top-`k` features of `ranking`, then on `n_random` uniformly
/// drawn `k`-subsets (stream `k` of `seed`).
pub fn topk_curve_with<F>(
    ranking: &[usize],
    k_values: &[usize],
    n_random: usize,
    seed: u64,
    mut score: F,
) -> Result<TopKCurve>
where
    F: FnMut(&[bool]) -> Result<f64>,
{
    let d = ranking.len();
    if k_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument(
            "k values must be sorted ascending".into(),
        ));
    }
    if let Some(&k) = k_values.iter().find(|&&k| k > d) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds {d} features"
        )));
    }
    if n_random == 0 {
        return Err(Error::InvalidArgument(
            "need at least one random subset per k".into(),
        ));
    }
    let mut curve = TopKCurve {
        k_values: k_values.to_vec(),
        spectral_accuracy: Vec::with_capacity(k_values.len()),
        random_baseline_mean: Vec::with_capacity(k_values.len()),
        random_baseline_std: Vec::with_capacity(k_values.len()),
    };
    for &k in k_values {
        let mut keep = vec![false; d];
        for &i in &ranking[..k] {
            keep[i] = true;
        }
        curve.spectral_accuracy.push(score(&keep)?);
        let mut rng = rng_for(seed, k as u64);
        let mut accs = Vec::with_capacity(n_random);
        for _ in 0..n_random {
            let mut keep = vec![false; d];
            for i in index::sample(&mut rng, d, k) {
                keep[i] = true;
            }
            accs.push(score(&keep)?);
        }
        let (m, s) = mean_std(accs.iter().copied());
        curve.random_baseline_mean.push(m);
        curve.random_baseline_std.push(s);
    }
    Ok(curve)
}

/// Accuracy of a fixed trained network when features outside the top-`k`
/// are zeroed.
pub fn topk_accuracy_curve(
    net: &Network,
    dataset: &LabeledDataset,
    report: &RelevanceReport,
    k_values: &[usize],
    n_random: usize,
    seed: u64,
) -> Result<TopKCurve> {
    if report.n_features() != dataset.n_features() {
        return Err(Error::Shape(format!(
            "report covers {} features, dataset has {}",
            report.n_features(),
            dataset.n_features()
        )));
    }
    topk_curve_with(&report.ranking, k_values, n_random, seed, |keep| {
        evaluate_features(net, dataset.masked_features(keep).view(), &dataset.labels)
    })
}

/// 28×28 grid of kept pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMask {
    pub grid: Array2<bool>,
}

impl PixelMask {
    /// Elementwise product of a flattened image with the mask.
    pub fn apply(&self, image: &[f64]) -> Result<Vec<f64>> {
        if image.len() != IMAGE_PIXELS {
            return Err(Error::Shape(format!(
                "image has {} pixels, expected {IMAGE_PIXELS}",
                image.len()
            )));
        }
        Ok(image
            .iter()
            .zip(self.grid.iter())
            .map(|(&v, &on)| if on { v } else { 0.0 })
            .collect())
    }

    pub fn to_csv(&self) -> String {
        grid_csv(&self.grid.mapv(|b| if b { 1.0 } else { 0.0 }))
    }

    pub fn to_pgm(&self) -> String {
        pgm(&self.grid.mapv(|b| if b { 255u8 } else { 0 }))
    }
}

/// Top-`k` pixels as a row-major 28×28 grid.
pub fn pixel_mask(report: &RelevanceReport, k: usize) -> Result<PixelMask> {
    if report.n_features() != IMAGE_PIXELS {
        return Err(Error::Shape(format!(
            "pixel masks need {IMAGE_PIXELS} features, report has {}",
            report.n_features()
        )));
    }
    if k > IMAGE_PIXELS {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds {IMAGE_PIXELS} pixels"
        )));
    }
    let keep = report.top_k_mask(k);
    let grid = Array2::from_shape_vec((IMAGE_SIDE, IMAGE_SIDE), keep).expect("784 = 28 × 28");
    Ok(PixelMask { grid })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` edges spanning [−1, 1].
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Scores divided by `max |score|` (raw scores when flagged).
    pub normalized_scores: Vec<f64>,
    /// Set when every score is zero and no normalization was possible.
    pub normalization_failed: bool,
    /// 28×28 grid of normalized scores, for 784-feature inputs.
    pub heatmap: Option<Array2<f64>>,
}

impl Histogram {
    pub fn bin_of(&self, value: f64) -> usize {
        let n = self.counts.len();
        (((value + 1.0) / 2.0 * n as f64).floor().max(0.0) as usize).min(n - 1)
    }

    /// First bin with the largest count.
    pub fn modal_bin(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.bin_edges[i], self.bin_edges[i + 1], c);
        }
        out
    }
}

/// Histogram of scores normalized by their largest magnitude.
pub fn eigenvalue_histogram(report: &RelevanceReport, n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let max = report.scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let normalization_failed = max == 0.0;
    let normalized: Vec<f64> = if normalization_failed {
        report.scores.clone()
    } else {
        report.scores.iter().map(|s| s / max).collect()
    };
    let bin_edges = (0..=n_bins)
        .map(|i| -1.0 + 2.0 * i as f64 / n_bins as f64)
        .collect();
    let mut hist = Histogram {
        bin_edges,
        counts: vec![0; n_bins],
        normalized_scores: normalized,
        normalization_failed,
        heatmap: None,
    };
    for i in 0..hist.normalized_scores.len() {
        let b = hist.bin_of(hist.normalized_scores[i]);
        hist.counts[b] += 1;
    }
    if report.n_features() == IMAGE_PIXELS {
        hist.heatmap = Some(
            Array2::from_shape_vec((IMAGE_SIDE, IMAGE_SIDE), hist.normalized_scores.clone())
                .expect("784 = 28 × 28"),
        );
    }
    Ok(hist)
}

/// Comma-separated rows.
pub fn grid_csv(grid: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in grid.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Plain (P2) PGM with maxval 255.
pub fn pgm(grid: &Array2<u8>) -> String {
    let (h, w) = grid.dim();
    let mut out = format!("P2\n{w} {h}\n255\n");
    for row in grid.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

/// Affine map of the grid's range onto 0–255; constant grids map to 0.
pub fn heatmap_pgm(grid: &Array2<f64>) -> String {
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    pgm(&grid.mapv(|v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, Layer, LayerKind};
    use crate::spectral::{DenseWeights, SpectralLayer};
    use ndarray::{array, Array1};

    fn net_with_lambdas(l: Vec<f64>) -> Network {
        let n = l.len();
        let layer = SpectralLayer::reduced(Array1::from(l), Array2::zeros((2, n))).unwrap();
        Network::new(vec![Layer {
            kind: LayerKind::Spectral(layer),
            activation: Activation::Softmax,
        }])
        .unwrap()
    }

    #[test]
    fn zero_lambdas_rank_by_index() {
        let r = extract_relevance(&net_with_lambdas(vec![0.0; 5])).unwrap();
        assert!(r.scores.iter().all(|&s| s == 0.0));
        assert_eq!(r.ranking, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_nonzero_first() {
        let r = extract_relevance(&net_with_lambdas(vec![0.0, 0.0, -0.3, 0.0])).unwrap();
        assert_eq!(r.ranking[0], 2);
        assert_eq!(r.raw_lambdas, vec![0.0, 0.0, -0.3, 0.0]);
    }

    #[test]
    fn dense_first_layer_rejected() {
        let net = Network::new(vec![Layer {
            kind: LayerKind::Dense(
                DenseWeights::new(Array2::zeros((2, 2)), Array1::zeros(2)).unwrap(),
            ),
            activation: Activation::Softmax,
        }])
        .unwrap();
        assert!(extract_relevance(&net).is_err());
    }

    #[test]
    fn ranking_invariant_under_scaling() {
        let s = vec![0.3, -1.2, 0.05, 0.9, -0.4];
        let base = rank_by_magnitude(&s);
        for k in [-3.0, 0.5, 7.0] {
            let scaled: Vec<f64> = s.iter().map(|v| v * k).collect();
            assert_eq!(rank_by_magnitude(&scaled), base);
        }
        assert_eq!(base, vec![1, 3, 4, 0, 2]);
    }

    #[test]
    fn aggregate_examples() {
        let a = RelevanceReport::from_scores(vec![1.0, -2.0, 0.5], vec![1.0, -1.0, 0.5]);
        let b = RelevanceReport::from_scores(vec![-1.0, 2.0, -0.5], vec![-1.0, 1.0, -0.5]);
        let agg = aggregate_realizations(&[a.clone(), b]).unwrap();
        let stats = agg.realization_stats.as_ref().unwrap();
        assert_eq!(stats.mean_abs, vec![1.0, 2.0, 0.5]);
        assert_eq!(stats.std_abs, vec![0.0; 3]);
        assert_eq!(stats.count, 2);
        assert_eq!(agg.ranking, vec![1, 0, 2]);

        let same = aggregate_realizations(&[a.clone(), a.clone(), a.clone()]).unwrap();
        assert!(same
            .realization_stats
            .unwrap()
            .std_abs
            .iter()
            .all(|&s| s == 0.0));

        let c = RelevanceReport::from_scores(vec![1.0], vec![1.0]);
        assert!(aggregate_realizations(&[a, c]).is_err());
    }

    #[test]
    fn aggregate_std_hand_value() {
        let a = RelevanceReport::from_scores(vec![1.0], vec![1.0]);
        let b = RelevanceReport::from_scores(vec![3.0], vec![3.0]);
        let s = aggregate_realizations(&[a, b])
            .unwrap()
            .realization_stats
            .unwrap();
        assert_eq!(s.mean_abs, vec![2.0]);
        assert_eq!(s.std_abs, vec![1.0]);
    }

    #[test]
    fn spearman_examples() {
        let gt = [0.0, 0.5, 1.0, 2.0];
        let prop: Vec<f64> = gt.iter().map(|g| 3.0 * g).collect();
        let r = RelevanceReport::from_scores(prop, vec![0.0; 4]);
        let agree = relevance_vs_ground_truth(&r, &gt).unwrap();
        assert_eq!(agree.spearman_rho, Some(1.0));
        assert_eq!(agree.points.len(), 4);
        let rev: Vec<f64> = gt.iter().map(|g| 5.0 - g).collect();
        assert_eq!(spearman(&rev, &gt), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        // Tied ranks: scipy.stats.spearmanr([1,2,2,3],[1,2,3,4]) = 0.9486832980505139
        let rho = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((rho - 0.9486832980505139).abs() < 1e-12);
    }

    #[test]
    fn masks() {
        let scores: Vec<f64> = (0..IMAGE_PIXELS).map(|i| i as f64).collect();
        let r = RelevanceReport::from_scores(scores, vec![0.0; IMAGE_PIXELS]);
        let all = pixel_mask(&r, IMAGE_PIXELS).unwrap();
        assert!(all.grid.iter().all(|&b| b));
        let none = pixel_mask(&r, 0).unwrap();
        assert!(none.grid.iter().all(|&b| !b));
        assert!(none
            .apply(&vec![0.7; IMAGE_PIXELS])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let top = pixel_mask(&r, 3).unwrap();
        assert!(top.grid[[27, 27]] && top.grid[[27, 26]] && top.grid[[27, 25]]);
        assert_eq!(top.grid.iter().filter(|&&b| b).count(), 3);
        let small = RelevanceReport::from_scores(vec![1.0; 10], vec![1.0; 10]);
        assert!(pixel_mask(&small, 2).is_err());
        let p = top.to_pgm();
        assert!(p.starts_with("P2\n28 28\n255\n"));
    }

    #[test]
    fn histogram_examples() {
        let mut scores = vec![0.0; 9];
        scores.push(4.0);
        let h =
            eigenvalue_histogram(&RelevanceReport::from_scores(scores, vec![0.0; 10]), 21).unwrap();
        assert_eq!(h.normalized_scores[9], 1.0);
        assert_eq!(h.modal_bin(), h.bin_of(0.0));
        assert_eq!(h.counts[h.bin_of(0.0)], 9);
        assert_eq!(h.counts[20], 1);
        assert!(!h.normalization_failed);
        assert!(h.heatmap.is_none());

        let sym = eigenvalue_histogram(
            &RelevanceReport::from_scores(vec![0.37, -0.37, 0.8, -0.8], vec![0.0; 4]),
            10,
        )
        .unwrap();
        let mut rev = sym.counts.clone();
        rev.reverse();
        assert_eq!(sym.counts, rev);

        let zero =
            eigenvalue_histogram(&RelevanceReport::from_scores(vec![0.0; 4], vec![0.0; 4]), 5)
                .unwrap();
        assert!(zero.normalization_failed);
        assert_eq!(zero.counts.iter().sum::<usize>(), 4);
        assert!(
            eigenvalue_histogram(&RelevanceReport::from_scores(vec![1.0], vec![1.0]), 0).is_err()
        );
    }

    #[test]
    fn heatmap_pgm_range() {
        let g = array![[-1.0, 0.0], [0.5, 1.0]];
        assert_eq!(heatmap_pgm(&g), "P2\n2 2\n255\n0 128\n191 255\n");
        assert_eq!(heatmap_pgm(&array![[0.3, 0.3]]), "P2\n2 1\n255\n0 0\n");
    }

    #[test]
    fn topk_validation_and_full_mask() {
        let ranking = vec![2, 0, 1];
        let mut seen = Vec::new();
        let curve = topk_curve_with(&ranking, &[0, 1, 3], 2, 5, |keep| {
            seen.push(keep.to_vec());
            Ok(keep.iter().filter(|&&b| b).count() as f64 / 3.0)
        })
        .unwrap();
        assert_eq!(curve.spectral_accuracy, vec![0.0, 1.0 / 3.0, 1.0]);
        assert_eq!(seen[3], vec![false, false, true]);
        assert_eq!(curve.random_at(3), Some((1.0, 0.0)));
        assert!(topk_curve_with(&ranking, &[2, 1], 1, 0, |_| Ok(0.0)).is_err());
        assert!(topk_curve_with(&ranking, &[4], 1, 0, |_| Ok(0.0)).is_err());
    }
}
