//! Datasets: synthetic regression targets, the 8×8 digits export, PCA,
//! min-max scaling, train/test splits and one-vs-all labeling.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{Purpose, RngStream};
use crate::scalar::Scalar;

/// Where a dataset came from and how it was scaled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: String,
    /// Raw target range before affine rescaling, when targets were rescaled.
    pub raw_target_range: Option<(f64, f64)>,
}

/// `N` rows of `n` features with one target each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T = f64> {
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<T>,
    pub meta: DatasetMeta,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Vec<Vec<T>>, targets: Vec<T>, meta: DatasetMeta) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(invalid(format!(
                "dataset needs N >= 1 rows with one target each, got {} rows and {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let width = inputs[0].len();
        if inputs.iter().any(|r| r.len() != width) {
            return Err(invalid("dataset rows have differing widths"));
        }
        Ok(Self {
            inputs,
            targets,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            inputs: self
                .inputs
                .iter()
                .map(|r| r.iter().map(|&v| U::lit(v.as_f64())).collect())
                .collect(),
            targets: self.targets.iter().map(|&v| U::lit(v.as_f64())).collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Regression target for width `n`:
/// `sin(x1+x2)`, `+ cos(x3)` for `n = 3`, `+ cos(x3 x4)` for `n = 4`.
pub fn target_function(x: &[f64]) -> Result<f64> {
    match x.len() {
        2 => Ok((x[0] + x[1]).sin()),
        3 => Ok((x[0] + x[1]).sin() + x[2].cos()),
        4 => Ok((x[0] + x[1]).sin() + (x[2] * x[3]).cos()),
        n => Err(invalid(format!(
            "no synthetic target for n = {n}; expected 2, 3 or 4"
        ))),
    }
}

/// `n_points` inputs uniform on `[-1, 1]^n` with targets affinely mapped onto
/// `[-2, 2]` using the realized sample min and max.
pub fn synthetic_dataset(n: usize, n_points: usize, data_seed: u64) -> Result<Dataset<f64>> {
    if !(2..=4).contains(&n) {
        return Err(invalid(format!(
            "synthetic datasets exist for n in 2..=4, got {n}"
        )));
    }
    if n_points < 2 {
        return Err(invalid("synthetic dataset needs at least two points"));
    }
    let mut rng = RngStream::keyed(data_seed, Purpose::Data, &[n as u64]);
    let inputs: Vec<Vec<f64>> = (0..n_points)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let raw = inputs
        .iter()
        .map(|x| target_function(x))
        .collect::<Result<Vec<_>>>()?;
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Degenerate("synthetic targets are constant".into()));
    }
    let targets = raw
        .iter()
        .map(|&t| 4.0 * ((t - lo) / (hi - lo)) - 2.0)
        .collect();
    Dataset::new(
        inputs,
        targets,
        DatasetMeta {
            source: format!("synthetic n={n} points={n_points} data_seed={data_seed}"),
            raw_target_range: Some((lo, hi)),
        },
    )
}

pub const DIGIT_PIXELS: usize = 64;

/// Raw 8×8 digits: pixel intensities 0..=16 and labels 0..=9.
#[derive(Debug, Clone, PartialEq)]
pub struct Digits {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Digits {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows whose label is in `classes`, in file order.
    pub fn filter_classes(&self, classes: &[u8]) -> Digits {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        self.select(&keep)
    }

    pub fn select(&self, idx: &[usize]) -> Digits {
        Digits {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Parses the digits CSV: no header, 65 integer fields per line (64 pixels, then the label).
pub fn parse_digits(text: &str) -> Result<Digits> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != DIGIT_PIXELS + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected {} fields, found {}",
                    DIGIT_PIXELS + 1,
                    fields.len()
                ),
            });
        }
        let mut row = Vec::with_capacity(DIGIT_PIXELS);
        for (col, field) in fields[..DIGIT_PIXELS].iter().enumerate() {
            let v: u32 = field.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("pixel {col} is not an integer: `{field}`"),
            })?;
            if v > 16 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("pixel {col} = {v} outside 0..=16"),
                });
            }
            row.push(v as f64);
        }
        let label_field = fields[DIGIT_PIXELS].trim();
        let label: u8 = label_field
            .parse()
            .ok()
            .filter(|l| *l <= 9)
            .ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("label `{label_field}` is not a digit 0..=9"),
            })?;
        features.push(row);
        labels.push(label);
    }
    Ok(Digits { features, labels })
}

pub fn load_digits(path: impl AsRef<Path>) -> Result<Digits> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.as_ref().display()),
        ))
    })?;
    parse_digits(&text)
}

/// The 1797-sample 8×8 digits set shipped with the crate.
pub const BUNDLED_DIGITS_CSV: &str = include_str!("../data/digits.csv");

pub fn bundled_digits() -> Result<Digits> {
    parse_digits(BUNDLED_DIGITS_CSV)
}

/// Principal axes of a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `n_components` orthonormal rows, by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

/// Eigendecomposition of the sample covariance (`N - 1` denominator) of `rows`.
///
/// Each component is oriented so its largest-magnitude entry is positive.
pub fn pca_fit(rows: &[Vec<f64>], n_components: usize) -> Result<PcaModel> {
    let n_rows = rows.len();
    if n_rows < 2 || n_rows < n_components || n_components == 0 {
        return Err(invalid(format!(
            "pca needs at least max(2, n_components) rows, got {n_rows} for {n_components}"
        )));
    }
    let width = rows[0].len();
    if n_components > width || rows.iter().any(|r| r.len() != width) {
        return Err(invalid(
            "pca rows must share a width of at least n_components",
        ));
    }
    let mut mean = vec![0.0; width];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_rows as f64);

    let centered = DMatrix::from_fn(n_rows, width, |i, j| rows[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n_rows as f64 - 1.0);
    let total: f64 = cov.trace();
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..width).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut components = Vec::with_capacity(n_components);
    let mut eigenvalues = Vec::with_capacity(n_components);
    for &k in order.iter().take(n_components) {
        let lambda = eig.eigenvalues[k];
        if !(lambda > 1e-12 * top.max(f64::MIN_POSITIVE)) {
            return Err(Error::Degenerate(format!(
                "covariance rank is below {n_components} components"
            )));
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, x)| x)
            .unwrap_or(1.0);
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        eigenvalues.push(lambda);
    }
    let explained_variance_ratio = eigenvalues.iter().map(|l| l / total).collect();
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        explained_variance_ratio,
    })
}

impl PcaModel {
    /// `(rows - mean) · componentsᵀ`.
    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter()
            .map(|r| {
                if r.len() != self.mean.len() {
                    return Err(invalid(format!(
                        "pca expects rows of width {}, got {}",
                        self.mean.len(),
                        r.len()
                    )));
                }
                Ok(self
                    .components
                    .iter()
                    .map(|c| {
                        c.iter()
                            .zip(r)
                            .zip(&self.mean)
                            .map(|((w, x), m)| w * (x - m))
                            .sum()
                    })
                    .collect())
            })
            .collect()
    }

    /// Maps projected coordinates back to the input space.
    pub fn inverse_transform(&self, projected: &[Vec<f64>]) -> Vec<Vec<f64>> {
        projected
            .iter()
            .map(|z| {
                let mut out = self.mean.clone();
                for (c, &zk) in self.components.iter().zip(z) {
                    for (o, w) in out.iter_mut().zip(c) {
                        *o += zk * w;
                    }
                }
                out
            })
            .collect()
    }

    pub fn cumulative_explained_variance(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }
}

/// Per-column min-max map onto `[-1, 1]` with clamping of unseen values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| invalid("cannot fit a scaler on zero rows"))?;
        let mut min = first.clone();
        let mut max = first.clone();
        for r in rows {
            if r.len() != min.len() {
                return Err(invalid("scaler rows have differing widths"));
            }
            for (k, &v) in r.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        if let Some(k) = (0..min.len()).find(|&k| !(max[k] > min[k])) {
            return Err(Error::Degenerate(format!(
                "column {k} is constant on the fit set"
            )));
        }
        Ok(Self { min, max })
    }

    /// `2 (x - min) / (max - min) - 1`, clamped to `[-1, 1]`.
    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter()
            .map(|r| {
                if r.len() != self.min.len() {
                    return Err(invalid("scaler width mismatch"));
                }
                Ok(r.iter()
                    .enumerate()
                    .map(|(k, &x)| {
                        let s = 2.0 * (x - self.min[k]) / (self.max[k] - self.min[k]) - 1.0;
                        s.clamp(-1.0, 1.0)
                    })
                    .collect())
            })
            .collect()
    }
}

/// `+1` where the label equals `class`, `-1` elsewhere.
pub fn ova_labels(labels: &[u8], class: u8) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| if l == class { 1.0 } else { -1.0 })
        .collect()
}

/// Index of the largest raw output; ties go to the smallest index.
pub fn ova_predict(outputs: &[f64]) -> Result<usize> {
    if outputs.is_empty() || outputs.iter().any(|v| !v.is_finite()) {
        return Err(invalid(
            "one-vs-all prediction needs finite classifier outputs",
        ));
    }
    let mut best = 0;
    for (c, &v) in outputs.iter().enumerate() {
        if v > outputs[best] {
            best = c;
        }
    }
    Ok(best)
}

/// `sign(y)` with `sign(0) = +1`.
pub fn binary_predict(y: f64) -> f64 {
    if y < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Index sets for a fixed common test set and several training draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub test: Vec<usize>,
    pub trains: Vec<Vec<usize>>,
}

const TEST_DRAW: u64 = u64::MAX;

/// Draws `n_test` common test indices first, then `n_splits` independent
/// `n_train`-sample training draws from the remaining rows.
///
/// When `required_classes` is non-empty, a training draw missing any of those
/// classes is redrawn from the same stream.
pub fn make_splits(
    labels: &[u8],
    n_test: usize,
    n_train: usize,
    n_splits: usize,
    split_seed: u64,
    required_classes: &[u8],
) -> Result<SplitPlan> {
    if n_test + n_train > labels.len() {
        return Err(invalid(format!(
            "{} rows cannot hold {n_test} test and {n_train} train samples",
            labels.len()
        )));
    }
    let mut all: Vec<usize> = (0..labels.len()).collect();
    all.shuffle(&mut RngStream::keyed(
        split_seed,
        Purpose::Split,
        &[TEST_DRAW],
    ));
    let test: Vec<usize> = all[..n_test].to_vec();
    let mut pool: Vec<usize> = all[n_test..].to_vec();
    pool.sort_unstable();

    let required: BTreeSet<u8> = required_classes.iter().copied().collect();
    let mut trains = Vec::with_capacity(n_splits);
    for split in 0..n_splits {
        let mut rng = RngStream::keyed(split_seed, Purpose::Split, &[split as u64]);
        let mut attempt = 0;
        let draw = loop {
            let mut candidate = pool.clone();
            let (chosen, _) = candidate.partial_shuffle(&mut rng, n_train);
            let chosen = chosen.to_vec();
            let present: BTreeSet<u8> = chosen.iter().map(|&i| labels[i]).collect();
            if required.is_subset(&present) {
                break chosen;
            }
            attempt += 1;
            if attempt >= 1000 {
                return Err(Error::Degenerate(format!(
                    "split {split}: could not draw a training set containing every required class"
                )));
            }
        };
        trains.push(draw);
    }
    Ok(SplitPlan { test, trains })
}

/// One prepared split: PCA and min-max scaling fit on the training rows only.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub train_inputs: Vec<Vec<f64>>,
    pub train_labels: Vec<u8>,
    pub test_inputs: Vec<Vec<f64>>,
    pub test_labels: Vec<u8>,
    pub pca: PcaModel,
    pub scaler: MinMaxScaler,
}

pub fn prepare_split(
    digits: &Digits,
    train_idx: &[usize],
    test_idx: &[usize],
    n_components: usize,
) -> Result<PreparedSplit> {
    let train = digits.select(train_idx);
    let test = digits.select(test_idx);
    let pca = pca_fit(&train.features, n_components)?;
    let train_proj = pca.transform(&train.features)?;
    let scaler = MinMaxScaler::fit(&train_proj)?;
    let train_inputs = scaler.apply(&train_proj)?;
    let test_inputs = scaler.apply(&pca.transform(&test.features)?)?;
    Ok(PreparedSplit {
        train_inputs,
        train_labels: train.labels,
        test_inputs,
        test_labels: test.labels,
        pca,
        scaler,
    })
}
