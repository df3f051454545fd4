//! Real-data IF-PCA: MAD normalization, feature screening, the leading left
//! singular vector, and 1-D 2-means, scored against known class labels.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusterers::kmeans_1d_two;
use crate::error::{invalid, io_err, Error, Result};
use crate::numerics::{bh_threshold, chisq_cdf, chisq_sf};
use crate::rng::{indexed_stream, Purpose};
use crate::spectral::{leading_left_singular, select_columns, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// `Φ⁻¹(3/4)`; makes `MAD/0.6745` consistent for σ under normality.
pub const MAD_CONSTANT: f64 = 0.6745;

/// Samples in rows, with one of exactly two class labels per row.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMatrix {
    pub x: Array2<f64>,
    pub class_labels: Vec<String>,
    pub feature_names: Option<Vec<String>>,
}

/// Where class labels come from when reading a CSV.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelSource {
    /// One label per sample, in the last field of each row. A header row is
    /// detected by the row count exceeding the sample count by one.
    File(PathBuf),
    /// A named column of the data file.
    Column(String),
}

impl LabeledMatrix {
    pub fn new(x: Array2<f64>, class_labels: Vec<String>, feature_names: Option<Vec<String>>) -> Result<Self> {
        if class_labels.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                what: "class labels",
                expected: x.nrows(),
                got: class_labels.len(),
            });
        }
        if let Some(names) = &feature_names {
            if names.len() != x.ncols() {
                return Err(Error::DimensionMismatch {
                    what: "feature names",
                    expected: x.ncols(),
                    got: names.len(),
                });
            }
        }
        let distinct: BTreeSet<&str> = class_labels.iter().map(String::as_str).collect();
        if distinct.len() != 2 {
            return Err(invalid(format!(
                "expected exactly two class labels, found {}",
                distinct.len()
            )));
        }
        Ok(Self {
            x,
            class_labels,
            feature_names,
        })
    }

    /// The two classes in lexicographic order.
    pub fn classes(&self) -> [&str; 2] {
        let distinct: BTreeSet<&str> = self.class_labels.iter().map(String::as_str).collect();
        let mut it = distinct.into_iter();
        [it.next().expect("two classes"), it.next().expect("two classes")]
    }

    /// `−1` for the first class of [`Self::classes`], `+1` for the second.
    pub fn signed_labels(&self) -> Vec<i8> {
        let first = self.classes()[0];
        self.class_labels
            .iter()
            .map(|l| if l == first { -1 } else { 1 })
            .collect()
    }

    /// Read a headered CSV with samples in rows.
    pub fn read(data: &Path, labels: &LabelSource) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(data).map_err(|e| open_error(data, e))?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let label_col = match labels {
            LabelSource::Column(name) => Some(
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| invalid(format!("no column named {name:?} in {}", data.display())))?,
            ),
            LabelSource::File(_) => None,
        };
        let names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_col)
            .map(|(_, h)| h.clone())
            .collect();
        let mut values = Vec::new();
        let mut class_labels = Vec::new();
        let mut rows = 0;
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let line = i + 2;
            if record.len() != header.len() {
                return Err(Error::Parse {
                    path: data.into(),
                    line,
                    field: String::from("*"),
                    message: format!("expected {} fields, found {}", header.len(), record.len()),
                });
            }
            for (j, field) in record.iter().enumerate() {
                if Some(j) == label_col {
                    class_labels.push(field.trim().to_owned());
                    continue;
                }
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    path: data.into(),
                    line,
                    field: header[j].clone(),
                    message: format!("not a number: {field:?}"),
                })?;
                values.push(v);
            }
            rows += 1;
        }
        let x = Array2::from_shape_vec((rows, names.len()), values).map_err(|e| invalid(e.to_string()))?;
        if let LabelSource::File(path) = labels {
            class_labels = read_label_file(path, rows)?;
        }
        Self::new(x, class_labels, Some(names))
    }
}

fn open_error(path: &Path, e: csv::Error) -> Error {
    if matches!(e.kind(), csv::ErrorKind::Io(_)) {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return io_err(path)(io);
        }
        unreachable!("checked above");
    }
    Error::Csv(e)
}

fn read_label_file(path: &Path, n: usize) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| open_error(path, e))?;
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        if let Some(last) = record.iter().last() {
            labels.push(last.trim().to_owned());
        }
    }
    match labels.len() {
        k if k == n => Ok(labels),
        k if k == n + 1 => Ok(labels.split_off(1)),
        k => Err(Error::Parse {
            path: path.into(),
            line: k,
            field: String::from("*"),
            message: format!("expected {n} labels (plus an optional header), found {k} rows"),
        }),
    }
}

/// Output of [`mad_normalize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Normalized {
    pub x: Array2<f64>,
    /// Input indices of the columns kept, ascending.
    pub kept: Vec<usize>,
    /// Input indices of the zero-MAD columns that were dropped.
    pub dropped: Vec<usize>,
}

fn median_of(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Median absolute deviation from the median.
pub fn mad(column: &[f64]) -> f64 {
    let mut v = column.to_vec();
    let med = median_of(&mut v);
    let mut dev: Vec<f64> = column.iter().map(|x| (x - med).abs()).collect();
    median_of(&mut dev)
}

/// `x*_j(i) = 0.6745 (x_j(i) − x̄_j) / MAD_j`, dropping columns with zero MAD.
pub fn mad_normalize(x: ArrayView2<f64>) -> Result<Normalized> {
    if x.nrows() < 2 {
        return Err(invalid("normalization needs at least two samples"));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut cols = Vec::new();
    for (j, col) in x.columns().into_iter().enumerate() {
        let v = col.to_vec();
        let d = mad(&v);
        if !(d > 0.0) || !d.is_finite() {
            dropped.push(j);
            continue;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        cols.push(v.iter().map(|xi| MAD_CONSTANT * (xi - mean) / d).collect::<Vec<_>>());
        kept.push(j);
    }
    let mut out = Array2::zeros((x.nrows(), kept.len()));
    for (k, col) in cols.iter().enumerate() {
        out.column_mut(k).assign(&ndarray::ArrayView1::from(col));
    }
    Ok(Normalized { x: out, kept, dropped })
}

/// Normalization of the screening statistic `|‖x_j‖² − n|`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenForm {
    /// Divide by `√(2n)`, matching `Q(j)`.
    #[default]
    TwoSided,
    /// Divide by `2n`.
    Literal,
}

/// `|‖x_j‖² − n|` divided as `form` says.
pub fn screen_scores(x: ArrayView2<f64>, form: ScreenForm) -> Vec<f64> {
    let n = x.nrows() as f64;
    let scale = match form {
        ScreenForm::TwoSided => (2.0 * n).sqrt(),
        ScreenForm::Literal => 2.0 * n,
    };
    x.columns()
        .into_iter()
        .map(|c| (c.dot(&c) - n).abs() / scale)
        .collect()
}

/// Two-sided χ²_n P-values `2 min(P(χ² ≥ s), P(χ² ≤ s))`, capped at 1.
pub fn two_sided_pvalues(x: ArrayView2<f64>) -> Result<Vec<f64>> {
    let dof = u32::try_from(x.nrows()).map_err(|_| invalid("too many rows"))?;
    x.columns()
        .into_iter()
        .map(|c| {
            let s = c.dot(&c);
            let upper = chisq_sf(s, dof)?.value();
            let lower = chisq_cdf(s, dof)?.value();
            Ok((2.0 * upper.min(lower)).min(1.0))
        })
        .collect()
}

/// How the feature set is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum QMode {
    /// Keep columns with score `≥ √(2q log p)`.
    Fixed { q: f64 },
    /// Benjamini–Hochberg on [`two_sided_pvalues`].
    Fdr { level: f64 },
    /// One [`QMode::Fixed`] row per `q` in `from, from + step, …, ≤ to`.
    Sweep { from: f64, to: f64, step: f64 },
    /// The `k` largest scores.
    TopK { k: usize },
    /// No screening.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub mode: QMode,
    #[serde(default)]
    pub screen: ScreenForm,
    /// Apply [`mad_normalize`] first.
    pub normalize: bool,
}

impl PipelineOptions {
    pub fn new(mode: QMode) -> Self {
        Self {
            mode,
            screen: ScreenForm::TwoSided,
            normalize: true,
        }
    }
}

/// One screening level and its clustering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// `q` for fixed and sweep rows.
    pub q: Option<f64>,
    pub selected: usize,
    /// Screening kept nothing, so all columns were used.
    pub fallback_used: bool,
    /// Mismatches against the class labels, minimized over the label swap.
    pub errors: usize,
    pub leading_vector: Vec<f64>,
    pub labels: Vec<i8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n: usize,
    pub p: usize,
    /// Features left after normalization.
    pub p_used: usize,
    pub dropped_features: Vec<String>,
    pub warnings: Vec<String>,
    pub rows: Vec<ReportRow>,
}

/// Mismatches between `est` and `truth`, minimized over a global flip.
pub fn label_errors(est: &[i8], truth: &[i8]) -> usize {
    let diff = est.iter().zip(truth).filter(|(a, b)| a != b).count();
    diff.min(truth.len() - diff)
}

fn sweep_values(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(from.is_finite() && to.is_finite()) || to < from {
        return Err(invalid(format!("bad sweep {from}:{to}:{step}")));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| from + i as f64 * step).collect())
}

fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

fn cluster_on(x: ArrayView2<f64>, selected: &[usize], q: Option<f64>, truth: &[i8]) -> Result<ReportRow> {
    let fallback = selected.is_empty();
    let sp = if fallback {
        leading_left_singular(x, DEFAULT_TOL, DEFAULT_MAX_ITER)?
    } else {
        let sub = select_columns(x, selected);
        leading_left_singular(sub.view(), DEFAULT_TOL, DEFAULT_MAX_ITER)?
    };
    let labels = kmeans_1d_two(&sp.vector)?;
    Ok(ReportRow {
        q,
        selected: if fallback { x.ncols() } else { selected.len() },
        fallback_used: fallback,
        errors: label_errors(&labels, truth),
        leading_vector: sp.vector,
        labels,
    })
}

/// Normalize, screen, and cluster each requested feature set.
pub fn ifpca_pipeline(data: &LabeledMatrix, opts: &PipelineOptions) -> Result<PipelineReport> {
    let truth = data.signed_labels();
    let mut warnings = Vec::new();
    let (x, dropped) = if opts.normalize {
        let norm = mad_normalize(data.x.view())?;
        let dropped: Vec<String> = norm
            .dropped
            .iter()
            .map(|&j| match &data.feature_names {
                Some(names) => names[j].clone(),
                None => format!("x{j}"),
            })
            .collect();
        if !dropped.is_empty() {
            warnings.push(format!("dropped {} zero-MAD feature(s)", dropped.len()));
        }
        (norm.x, dropped)
    } else {
        (data.x.clone(), Vec::new())
    };
    if x.ncols() == 0 {
        return Err(invalid("no features left after normalization"));
    }
    let view = x.view();
    let p = x.ncols();
    let scores = screen_scores(view, opts.screen);
    let threshold = |q: f64| (2.0 * q * (p as f64).ln()).sqrt();
    let by_q = |q: f64| -> Vec<usize> {
        let t = threshold(q);
        (0..p).filter(|&j| scores[j] >= t).collect()
    };
    let rows = match opts.mode {
        QMode::Fixed { q } => {
            check_q(q)?;
            vec![cluster_on(view, &by_q(q), Some(q), &truth)?]
        }
        QMode::Sweep { from, to, step } => {
            let qs = sweep_values(from, to, step)?;
            for &q in &qs {
                check_q(q)?;
            }
            qs.par_iter()
                .map(|&q| cluster_on(view, &by_q(q), Some(q), &truth))
                .collect::<Result<Vec<_>>>()?
        }
        QMode::Fdr { level } => {
            let pv = two_sided_pvalues(view)?;
            let k = bh_threshold(&pv, level)?;
            let neg: Vec<f64> = pv.iter().map(|v| -v).collect();
            vec![cluster_on(view, &top_k(&neg, k), None, &truth)?]
        }
        QMode::TopK { k } => {
            if k == 0 || k > p {
                return Err(invalid(format!("k = {k} must lie in 1..={p}")));
            }
            vec![cluster_on(view, &top_k(&scores, k), None, &truth)?]
        }
        QMode::All => vec![cluster_on(view, &(0..p).collect::<Vec<_>>(), None, &truth)?],
    };
    for row in &rows {
        if row.fallback_used {
            warnings.push(format!("q = {:?}: empty selection, used all features", row.q));
        }
    }
    Ok(PipelineReport {
        n: x.nrows(),
        p: data.x.ncols(),
        p_used: p,
        dropped_features: dropped,
        warnings,
        rows,
    })
}

fn check_q(q: f64) -> Result<()> {
    if q.is_finite() && q >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("q = {q} must be a nonnegative number")))
    }
}

/// Lloyd 2-means error counts, one per restart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmeansBaseline {
    pub errors: Vec<usize>,
    pub mean_errors: f64,
}

const LLOYD_MAX_ITER: usize = 100;

fn sq_dist(a: ndarray::ArrayView1<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn lloyd(x: ArrayView2<f64>, init: [usize; 2]) -> Vec<i8> {
    let mut centers: [Vec<f64>; 2] = init.map(|i| x.row(i).to_vec());
    let mut labels = vec![0i8; x.nrows()];
    for _ in 0..LLOYD_MAX_ITER {
        let next: Vec<i8> = x
            .rows()
            .into_iter()
            .map(|r| if sq_dist(r, &centers[0]) <= sq_dist(r, &centers[1]) { -1 } else { 1 })
            .collect();
        if next == labels {
            break;
        }
        labels = next;
        for (c, want) in [(0, -1i8), (1, 1i8)] {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == want).collect();
            if !members.is_empty() {
                centers[c] = x.select(Axis(0), &members).mean_axis(Axis(0)).expect("nonempty").to_vec();
            }
        }
    }
    labels
}

/// Lloyd's algorithm on the rows of `data.x`, started from two distinct
/// random rows per restart.
pub fn baseline_kmeans(data: &LabeledMatrix, restarts: usize, seed: u64) -> Result<KmeansBaseline> {
    if restarts == 0 {
        return Err(invalid("restarts must be at least 1"));
    }
    let n = data.x.nrows();
    if n < 2 {
        return Err(invalid("k-means needs at least two samples"));
    }
    let truth = data.signed_labels();
    let errors: Vec<usize> = (0..restarts)
        .map(|r| {
            let mut rng = indexed_stream(seed, Purpose::Kmeans, r as u64);
            let pick = sample(&mut rng, n, 2);
            label_errors(&lloyd(data.x.view(), [pick.index(0), pick.index(1)]), &truth)
        })
        .collect();
    let mean_errors = errors.iter().sum::<usize>() as f64 / restarts as f64;
    Ok(KmeansBaseline { errors, mean_errors })
}
