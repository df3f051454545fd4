//! The rare/weak two-class model `X = ℓμ' + Z` and its colored-noise variant
//! `X = ℓμ' + AZB`.
//!
//! Labels are `i8` in `{-1, +1}`. The data matrix is `n × p` with samples as
//! rows.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, io_err, Error, Result};
use crate::linalg;
use crate::rng::{indexed_stream, stream, Purpose};

/// How the per-feature signal strength τ is tied to `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strength {
    /// τ = p^{−α}.
    Alpha { alpha: f64 },
    /// τ = p^{−θ/4} (4 r log p)^{1/4}.
    LogAdjusted { r: f64 },
    /// τ given directly; τ = 0 yields pure noise.
    Fixed { tau: f64 },
}

/// Calibration tuple of the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArwParams {
    pub p: usize,
    pub theta: f64,
    pub beta: f64,
    pub strength: Strength,
    /// Fraction of nonzero coordinates that are negative, in `[0, 1/2]`.
    #[serde(default)]
    pub sign_mix: f64,
}

/// Derived sample size, sparsity and strength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub n: usize,
    pub epsilon: f64,
    pub tau: f64,
}

impl ArwParams {
    pub fn new(p: usize, theta: f64, beta: f64, strength: Strength) -> Self {
        Self {
            p,
            theta,
            beta,
            strength,
            sign_mix: 0.0,
        }
    }

    pub fn alpha(p: usize, theta: f64, beta: f64, alpha: f64) -> Self {
        Self::new(p, theta, beta, Strength::Alpha { alpha })
    }

    pub fn log_adjusted(p: usize, theta: f64, beta: f64, r: f64) -> Self {
        Self::new(p, theta, beta, Strength::LogAdjusted { r })
    }

    pub fn with_sign_mix(mut self, a: f64) -> Self {
        self.sign_mix = a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if self.p < 2 {
            return Err(invalid(format!("p = {} must be at least 2", self.p)));
        }
        if !open_unit(self.theta) {
            return Err(invalid(format!("theta = {} must lie in (0, 1)", self.theta)));
        }
        if !open_unit(self.beta) {
            return Err(invalid(format!("beta = {} must lie in (0, 1)", self.beta)));
        }
        if !(0.0..=0.5).contains(&self.sign_mix) {
            return Err(invalid(format!("sign mix a = {} must lie in [0, 1/2]", self.sign_mix)));
        }
        match self.strength {
            Strength::Alpha { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(invalid(format!("alpha = {alpha} must be positive")))
            }
            Strength::LogAdjusted { r } if !open_unit(r) => {
                Err(invalid(format!("r = {r} must lie in (0, 1)")))
            }
            Strength::Fixed { tau } if !(tau >= 0.0 && tau.is_finite()) => {
                Err(invalid(format!("tau = {tau} must be finite and nonnegative")))
            }
            _ => Ok(()),
        }
    }

    /// `n = round(p^θ)` with ties rounded up, `ε = p^{−β}`, and τ per [`Strength`].
    pub fn calibrate(&self) -> Result<Calibration> {
        self.validate()?;
        let pf = self.p as f64;
        let n = (pf.powf(self.theta) + 0.5).floor() as usize;
        if n < 2 {
            return Err(invalid(format!("calibrated n = {n} is below 2")));
        }
        let epsilon = pf.powf(-self.beta);
        if epsilon * pf < 1e-9 {
            return Err(invalid("calibration expects no signals (p·ε < 1e-9)"));
        }
        let tau = match self.strength {
            Strength::Alpha { alpha } => pf.powf(-alpha),
            Strength::LogAdjusted { r } => {
                pf.powf(-self.theta / 4.0) * (4.0 * r * pf.ln()).powf(0.25)
            }
            Strength::Fixed { tau } => tau,
        };
        Ok(Calibration { n, epsilon, tau })
    }

    /// Expected support size `p·ε`.
    pub fn expected_signals(&self) -> Result<f64> {
        Ok(self.calibrate()?.epsilon * self.p as f64)
    }

    /// Default sparse-aggregation size `⌈p·ε⌉`.
    pub fn default_sparsity(&self) -> Result<usize> {
        Ok((self.expected_signals()? - 1e-9).ceil().max(1.0) as usize)
    }
}

/// A left or right noise coloring matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coloring {
    Identity,
    Diagonal { entries: Vec<f64> },
    /// Row-major `dim × dim` matrix.
    Dense { dim: usize, data: Vec<f64> },
}

/// Operator norms of a coloring matrix and its inverse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionBounds {
    pub norm: f64,
    pub inverse_norm: f64,
}

/// Dense colorings larger than this skip the Jacobi condition estimate.
pub const DENSE_CONDITION_LIMIT: usize = 400;

impl Coloring {
    /// Diagonal matrix with entries `(ln p)^{j/(p−1) − 1/2}`, `j = 0..p`.
    ///
    /// Both its norm and its inverse norm equal `√(ln p)`.
    pub fn log_bounded_diagonal(p: usize) -> Self {
        let lp = (p.max(3) as f64).ln();
        let denom = (p.max(2) - 1) as f64;
        Coloring::Diagonal {
            entries: (0..p).map(|j| lp.powf(j as f64 / denom - 0.5)).collect(),
        }
    }

    fn check_dim(&self, dim: usize, what: &'static str) -> Result<()> {
        let got = match self {
            Coloring::Identity => return Ok(()),
            Coloring::Diagonal { entries } => entries.len(),
            Coloring::Dense { dim: d, data } => {
                if data.len() != d * d {
                    return Err(Error::DimensionMismatch {
                        what,
                        expected: d * d,
                        got: data.len(),
                    });
                }
                *d
            }
        };
        if got != dim {
            return Err(Error::DimensionMismatch {
                what,
                expected: dim,
                got,
            });
        }
        Ok(())
    }

    /// Condition bounds, or `None` for dense matrices above
    /// [`DENSE_CONDITION_LIMIT`].
    pub fn condition_bounds(&self) -> Result<Option<ConditionBounds>> {
        let (hi, lo) = match self {
            Coloring::Identity => (1.0, 1.0),
            Coloring::Diagonal { entries } => {
                let abs = entries.iter().map(|v| v.abs());
                let hi = abs.clone().fold(0.0, f64::max);
                let lo = abs.fold(f64::INFINITY, f64::min);
                (hi, lo)
            }
            Coloring::Dense { dim, data } => {
                if *dim > DENSE_CONDITION_LIMIT {
                    return Ok(None);
                }
                let m = Array2::from_shape_vec((*dim, *dim), data.clone())
                    .map_err(|e| invalid(e.to_string()))?;
                linalg::singular_extremes(m.view())
            }
        };
        if !(lo > 1e-12 * hi) || !hi.is_finite() {
            return Err(invalid("coloring matrix is singular or not finite"));
        }
        Ok(Some(ConditionBounds {
            norm: hi,
            inverse_norm: 1.0 / lo,
        }))
    }

    /// `self · m` for a left coloring.
    fn apply_left(&self, m: Array2<f64>) -> Array2<f64> {
        match self {
            Coloring::Identity => m,
            Coloring::Diagonal { entries } => {
                let mut m = m;
                for (mut row, &d) in m.axis_iter_mut(Axis(0)).zip(entries) {
                    row.mapv_inplace(|v| v * d);
                }
                m
            }
            Coloring::Dense { dim, data } => {
                let a = Array2::from_shape_vec((*dim, *dim), data.clone())
                    .expect("dimension checked");
                a.dot(&m)
            }
        }
    }

    /// `m · self` for a right coloring.
    fn apply_right(&self, m: Array2<f64>) -> Array2<f64> {
        match self {
            Coloring::Identity => m,
            Coloring::Diagonal { entries } => {
                let mut m = m;
                for (mut col, &d) in m.axis_iter_mut(Axis(1)).zip(entries) {
                    col.mapv_inplace(|v| v * d);
                }
                m
            }
            Coloring::Dense { dim, data } => {
                let b = Array2::from_shape_vec((*dim, *dim), data.clone())
                    .expect("dimension checked");
                m.dot(&b)
            }
        }
    }
}

/// Noise law of the generated matrix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    #[default]
    White,
    Colored { left: Coloring, right: Coloring },
    /// Z = 0. Test fixture for exact-recovery checks.
    Noiseless,
}

/// Condition bounds of both colorings; `None` where not computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConditioning {
    pub left: Option<ConditionBounds>,
    pub right: Option<ConditionBounds>,
}

impl NoiseSpec {
    pub fn validate(&self, n: usize, p: usize) -> Result<Option<NoiseConditioning>> {
        match self {
            NoiseSpec::Colored { left, right } => {
                left.check_dim(n, "left coloring A must be n x n")?;
                right.check_dim(p, "right coloring B must be p x p")?;
                Ok(Some(NoiseConditioning {
                    left: left.condition_bounds()?,
                    right: right.condition_bounds()?,
                }))
            }
            _ => Ok(None),
        }
    }
}

/// A data matrix with optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub labels: Option<Vec<i8>>,
    pub mu: Option<Vec<f64>>,
    /// Sorted indices of the nonzero entries of `mu`.
    pub support: Option<Vec<usize>>,
    pub seed: u64,
    pub params: Option<ArwParams>,
    pub conditioning: Option<NoiseConditioning>,
}

/// iid uniform ±1 labels.
pub fn gen_labels<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i8> {
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

/// μ with iid coordinates: 0 w.p. 1−ε, −τ w.p. aε, +τ w.p. (1−a)ε.
///
/// Uses exactly one uniform per coordinate. Returns μ and its sorted support.
pub fn gen_mu<R: Rng + ?Sized>(
    p: usize,
    epsilon: f64,
    tau: f64,
    sign_mix: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<usize>) {
    let mut mu = vec![0.0; p];
    let mut support = Vec::new();
    for (j, m) in mu.iter_mut().enumerate() {
        let u: f64 = rng.random();
        if u < epsilon {
            *m = if u < sign_mix * epsilon { -tau } else { tau };
            if tau != 0.0 {
                support.push(j);
            }
        }
    }
    (mu, support)
}

/// White Gaussian `n × p` matrix; column `j` comes from noise stream `j`.
pub fn gen_white_noise(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut z = Array2::zeros((n, p));
    for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
        let mut rng = indexed_stream(seed, Purpose::Noise, j as u64);
        for v in col.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }
    z
}

/// The noise matrix that [`gen_dataset`] adds to the signal for this seed.
pub fn gen_noise(n: usize, p: usize, noise: &NoiseSpec, seed: u64) -> Result<Array2<f64>> {
    noise.validate(n, p)?;
    Ok(match noise {
        NoiseSpec::White => gen_white_noise(n, p, seed),
        NoiseSpec::Noiseless => Array2::zeros((n, p)),
        NoiseSpec::Colored { left, right } => {
            right.apply_right(left.apply_left(gen_white_noise(n, p, seed)))
        }
    })
}

/// Draw labels, signal and noise for one replication.
pub fn gen_dataset(params: &ArwParams, noise: &NoiseSpec, seed: u64) -> Result<Dataset> {
    let cal = params.calibrate()?;
    let (n, p) = (cal.n, params.p);
    let conditioning = noise.validate(n, p)?;
    let labels = gen_labels(n, &mut stream(seed, Purpose::Labels));
    let (mu, support) = gen_mu(
        p,
        cal.epsilon,
        cal.tau,
        params.sign_mix,
        &mut stream(seed, Purpose::Signal),
    );
    let mut x = gen_noise(n, p, noise, seed)?;
    for &j in &support {
        for (xi, &l) in x.column_mut(j).iter_mut().zip(&labels) {
            *xi += f64::from(l) * mu[j];
        }
    }
    Ok(Dataset {
        x,
        labels: Some(labels),
        mu: Some(mu),
        support: Some(support),
        seed,
        params: Some(*params),
        conditioning,
    })
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    seed: u64,
    params: Option<ArwParams>,
    labels: Option<Vec<i8>>,
    support: Option<Vec<usize>>,
    mu: Option<Vec<f64>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Write the matrix as CSV (header `x0..x{p-1}`, one sample per row)
    /// with shortest round-trip floats.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        let header: Vec<String> = (0..self.p()).map(|j| format!("x{j}")).collect();
        writeln!(w, "{}", header.join(",")).map_err(io_err(path))?;
        for row in self.x.axis_iter(Axis(0)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(",")).map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))
    }

    /// Write the JSON sidecar `{seed, params, labels, support, mu}`.
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let sidecar = Sidecar {
            seed: self.seed,
            params: self.params,
            labels: self.labels.clone(),
            support: self.support.clone(),
            mu: self.mu.clone(),
        };
        let file = File::create(path).map_err(io_err(path))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &sidecar)?;
        Ok(())
    }

    /// Read a CSV written by [`Dataset::write_csv`] and an optional sidecar.
    pub fn read(csv_path: &Path, sidecar: Option<&Path>) -> Result<Self> {
        let x = read_matrix_csv(csv_path)?.0;
        let mut ds = Dataset {
            x,
            labels: None,
            mu: None,
            support: None,
            seed: 0,
            params: None,
            conditioning: None,
        };
        if let Some(path) = sidecar {
            let file = File::open(path).map_err(io_err(path))?;
            let s: Sidecar = serde_json::from_reader(std::io::BufReader::new(file))?;
            ds.seed = s.seed;
            ds.params = s.params;
            ds.labels = s.labels;
            ds.support = s.support;
            ds.mu = s.mu;
        }
        Ok(ds)
    }
}

/// Parse a headered numeric CSV into a matrix plus its header.
pub(crate) fn read_matrix_csv(path: &Path) -> Result<(Array2<f64>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => io_err(path)(io),
                _ => unreachable!(),
            },
            _ => Error::Csv(e),
        })?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let p = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != p {
            return Err(Error::Parse {
                path: path.into(),
                line,
                field: String::from("*"),
                message: format!("expected {p} fields, found {}", record.len()),
            });
        }
        for (field, name) in record.iter().zip(&header) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                field: name.clone(),
                message: format!("not a number: {field:?}"),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let x = Array2::from_shape_vec((rows, p), data).map_err(|e| invalid(e.to_string()))?;
    Ok((x, header))
}
