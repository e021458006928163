use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Feature rows with binary class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `S × D`.
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    /// Per-feature relevance known by construction, if any.
    pub ground_truth_relevance: Option<Vec<f64>>,
    pub name: String,
}

impl LabeledDataset {
    pub const N_CLASSES: usize = 2;

    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        labels: Vec<usize>,
        ground_truth_relevance: Option<Vec<f64>>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().any(|v| v.is_nan()) {
            return Err(Error::Data("features contain NaN".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= Self::N_CLASSES) {
            return Err(Error::Data(format!("label {bad} is not 0 or 1")));
        }
        if let Some(gt) = &ground_truth_relevance {
            if gt.len() != features.ncols() {
                return Err(Error::Data(format!(
                    "ground truth has length {} for {} features",
                    gt.len(),
                    features.ncols()
                )));
            }
            if gt.iter().any(|&g| !(g >= 0.0)) {
                return Err(Error::Data(
                    "ground truth relevance must be nonnegative".into(),
                ));
            }
        }
        Ok(Self {
            features,
            labels,
            ground_truth_relevance,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ground_truth_relevance: self.ground_truth_relevance.clone(),
            name: self.name.clone(),
        }
    }

    /// Copy of the features with every column outside `keep` set to zero.
    pub fn masked_features(&self, keep: &[bool]) -> Array2<f64> {
        mask_columns(self.features.view(), keep)
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// CSV with header `label,f0,...,f{D-1}`.
    pub fn to_csv(&self) -> String {
        let d = self.n_features();
        let mut out = String::from("label");
        for k in 0..d {
            let _ = write!(out, ",f{k}");
        }
        out.push('\n');
        for (row, label) in self.features.rows().into_iter().zip(&self.labels) {
            let _ = write!(out, "{label}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

pub(crate) fn mask_columns(features: ArrayView2<f64>, keep: &[bool]) -> Array2<f64> {
    let mut out = features.to_owned();
    for (k, &on) in keep.iter().enumerate() {
        if !on {
            out.column_mut(k).fill(0.0);
        }
    }
    out
}

/// Parses the CSV written by [`LabeledDataset::to_csv`].
pub fn read_csv(path: &Path, name: &str, ground_truth: Option<Vec<f64>>) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty csv", path.display())))?;
    let d = header.split(',').count() - 1;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (n, line) in lines.enumerate() {
        let mut cells = line.split(',');
        let bad = |what: &str| Error::Data(format!("{}: line {}: {what}", path.display(), n + 2));
        let label = cells
            .next()
            .and_then(|c| c.parse::<usize>().ok())
            .ok_or_else(|| bad("bad label"))?;
        labels.push(label);
        let before = values.len();
        for c in cells {
            values.push(c.parse::<f64>().map_err(|_| bad("bad value"))?);
        }
        if values.len() - before != d {
            return Err(bad("wrong number of columns"));
        }
    }
    let features = Array2::from_shape_vec((labels.len(), d), values)
        .map_err(|e| Error::Data(e.to_string()))?;
    LabeledDataset::new(name, features, labels, ground_truth)
}

/// Shuffles rows with `seed` and splits off `round(fraction · S)` rows.
///
/// Returns `(rest, held_out)`.
pub fn split(
    dataset: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = dataset.len();
    let n_b = (fraction * n as f64).round() as usize;
    if n_b == 0 || n_b == n {
        return Err(Error::InvalidArgument(format!(
            "splitting {n} rows at fraction {fraction} leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (b, a) = idx.split_at(n_b);
    Ok((dataset.subset(a), dataset.subset(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> LabeledDataset {
        let f = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let labels = (0..n).map(|i| i % 2).collect();
        LabeledDataset::new("toy", f, labels, None).unwrap()
    }

    #[test]
    fn ninety_ten() {
        let (a, b) = split(&toy(100), 0.1, 7).unwrap();
        assert_eq!((a.len(), b.len()), (90, 10));
    }

    #[test]
    fn split_is_deterministic_and_preserves_rows() {
        let d = toy(57);
        let (a1, b1) = split(&d, 0.3, 42).unwrap();
        let (a2, b2) = split(&d, 0.3, 42).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        let mut firsts: Vec<i64> = a1
            .features
            .column(0)
            .iter()
            .chain(b1.features.column(0).iter())
            .map(|&v| v as i64)
            .collect();
        firsts.sort();
        assert_eq!(firsts, (0..57).map(|i| 2 * i).collect::<Vec<_>>());
        let (a3, _) = split(&d, 0.3, 43).unwrap();
        assert_ne!(a1, a3);
    }

    #[test]
    fn degenerate_splits_rejected() {
        assert!(split(&toy(3), 0.1, 0).is_err());
        assert!(split(&toy(10), 0.0, 0).is_err());
        assert!(split(&toy(10), 1.0, 0).is_err());
    }

    #[test]
    fn invariants_enforced() {
        let f = Array2::from_elem((2, 1), 0.0);
        assert!(LabeledDataset::new("x", f.clone(), vec![0, 2], None).is_err());
        assert!(LabeledDataset::new("x", f.clone(), vec![0], None).is_err());
        assert!(LabeledDataset::new("x", f.clone(), vec![0, 1], Some(vec![-1.0])).is_err());
        assert!(LabeledDataset::new("x", f.clone(), vec![0, 1], Some(vec![1.0, 1.0])).is_err());
        let mut nan = f;
        nan[[0, 0]] = f64::NAN;
        assert!(LabeledDataset::new("x", nan, vec![0, 1], None).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let f = ndarray::array![[0.1, -2.5e-7], [1.0 / 3.0, 12345.678]];
        let d = LabeledDataset::new("d", f, vec![1, 0], Some(vec![0.5, 0.0])).unwrap();
        d.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("label,f0,f1\n"));
        let back = read_csv(&path, "d", Some(vec![0.5, 0.0])).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn masking_zeroes_columns() {
        let d = toy(3);
        let m = d.masked_features(&[false, true]);
        assert!(m.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(m.column(1), d.features.column(1));
    }
}
