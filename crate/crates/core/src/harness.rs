//! Monte Carlo trials, phase-plane sweeps and result persistence.
//!
//! A trial generates one dataset and runs a list of methods on it. A sweep
//! runs `reps` trials on every cell of a `(β, strength)` grid and summarizes
//! each cell. Trial seeds are `derive_seed(master, [β index, strength index,
//! rep])`, so appending grid values leaves existing cells untouched.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusterers::{self, sgn, ClusterResult, Solver};
use crate::error::{invalid, io_err, Error, Result};
use crate::global_tests::{self, TestOutcome};
use crate::metrics::{
    cos_angle, empirical_test_error, hamming_clustering, hamming_recovery_signed,
    hamming_recovery_with, LossReport, RecoveryNorm, TestError,
};
use crate::model::{gen_dataset, gen_noise, ArwParams, Dataset, NoiseSpec, Strength};
use crate::phase::{self, BoundKind, PhaseQuery, Problem, Region, Variant, BOUND_KINDS, PROBLEMS};
use crate::recovery::{self, RecoveryResult};
use crate::rng::derive_seed;
use crate::spectral::q_star;

/// Default cap on `cells × reps`.
pub const DEFAULT_MAX_TRIALS: usize = 100_000;

/// One method with its options. `n_select = None` means `⌈pε⌉`; `q = None`
/// means `q*`, which needs the log-adjusted calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    SimpleAgg,
    SparseAgg {
        #[serde(default)]
        n_select: Option<usize>,
        #[serde(default)]
        solver: Solver,
    },
    ClassicalPca,
    IfPca {
        #[serde(default)]
        q: Option<f64>,
    },
    SignedSparseAgg {
        #[serde(default)]
        n_select: Option<usize>,
        #[serde(default)]
        solver: Solver,
    },
    /// Simple aggregation when `β < (1 − θ)/2`, sparse aggregation otherwise.
    DesignatedClustering {
        #[serde(default)]
        solver: Solver,
    },
    SaStar,
    IfStar,
    SaN {
        #[serde(default)]
        n_select: Option<usize>,
        #[serde(default)]
        solver: Solver,
    },
    IfQ {
        #[serde(default)]
        q: Option<f64>,
    },
    SignedPca,
    TestSimpleAgg,
    TestSparseAgg {
        #[serde(default)]
        n_select: Option<usize>,
        #[serde(default)]
        solver: Solver,
    },
    Hc,
    /// IF-PCA labels, then the universal threshold on `n^{−1/2}Xᵀℓ̂`.
    ClusterThenRecover {
        #[serde(default)]
        q: Option<f64>,
    },
    /// IF-q support, then the signs of the row sums over it.
    RecoverThenCluster {
        #[serde(default)]
        q: Option<f64>,
    },
}

/// Identifiers accepted by [`MethodSpec::from_id`].
pub const METHOD_IDS: [&str; 16] = [
    "simple_agg",
    "sparse_agg",
    "classical_pca",
    "if_pca",
    "signed_sparse_agg",
    "designated_clustering",
    "sa_star",
    "if_star",
    "sa_n",
    "if_q",
    "signed_pca",
    "test_simple_agg",
    "test_sparse_agg",
    "hc",
    "cluster_then_recover",
    "recover_then_cluster",
];

impl MethodSpec {
    /// Build from an identifier and the shared `q`, `N` options.
    pub fn from_id(id: &str, q: Option<f64>, n_select: Option<usize>) -> Result<Self> {
        let solver = Solver::default();
        Ok(match id {
            "simple_agg" => MethodSpec::SimpleAgg,
            "sparse_agg" => MethodSpec::SparseAgg { n_select, solver },
            "classical_pca" => MethodSpec::ClassicalPca,
            "if_pca" => MethodSpec::IfPca { q },
            "signed_sparse_agg" => MethodSpec::SignedSparseAgg { n_select, solver },
            "designated_clustering" => MethodSpec::DesignatedClustering { solver },
            "sa_star" => MethodSpec::SaStar,
            "if_star" => MethodSpec::IfStar,
            "sa_n" => MethodSpec::SaN { n_select, solver },
            "if_q" => MethodSpec::IfQ { q },
            "signed_pca" => MethodSpec::SignedPca,
            "test_simple_agg" => MethodSpec::TestSimpleAgg,
            "test_sparse_agg" => MethodSpec::TestSparseAgg { n_select, solver },
            "hc" => MethodSpec::Hc,
            "cluster_then_recover" => MethodSpec::ClusterThenRecover { q },
            "recover_then_cluster" => MethodSpec::RecoverThenCluster { q },
            other => {
                return Err(invalid(format!(
                    "unknown method {other:?}; expected one of {}",
                    METHOD_IDS.join(", ")
                )))
            }
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            MethodSpec::SimpleAgg => "simple_agg",
            MethodSpec::SparseAgg { .. } => "sparse_agg",
            MethodSpec::ClassicalPca => "classical_pca",
            MethodSpec::IfPca { .. } => "if_pca",
            MethodSpec::SignedSparseAgg { .. } => "signed_sparse_agg",
            MethodSpec::DesignatedClustering { .. } => "designated_clustering",
            MethodSpec::SaStar => "sa_star",
            MethodSpec::IfStar => "if_star",
            MethodSpec::SaN { .. } => "sa_n",
            MethodSpec::IfQ { .. } => "if_q",
            MethodSpec::SignedPca => "signed_pca",
            MethodSpec::TestSimpleAgg => "test_simple_agg",
            MethodSpec::TestSparseAgg { .. } => "test_sparse_agg",
            MethodSpec::Hc => "hc",
            MethodSpec::ClusterThenRecover { .. } => "cluster_then_recover",
            MethodSpec::RecoverThenCluster { .. } => "recover_then_cluster",
        }
    }

    /// Identifier plus explicit options, e.g. `if_pca(q=0.5)`.
    pub fn label(&self) -> String {
        let opt = match self {
            MethodSpec::IfPca { q: Some(q) }
            | MethodSpec::IfQ { q: Some(q) }
            | MethodSpec::ClusterThenRecover { q: Some(q) }
            | MethodSpec::RecoverThenCluster { q: Some(q) } => format!("(q={q})"),
            MethodSpec::SparseAgg { n_select: Some(n), .. }
            | MethodSpec::SignedSparseAgg { n_select: Some(n), .. }
            | MethodSpec::SaN { n_select: Some(n), .. }
            | MethodSpec::TestSparseAgg { n_select: Some(n), .. } => format!("(N={n})"),
            _ => String::new(),
        };
        format!("{}{opt}", self.id())
    }

    fn is_test(&self) -> bool {
        matches!(
            self,
            MethodSpec::TestSimpleAgg | MethodSpec::TestSparseAgg { .. } | MethodSpec::Hc
        )
    }
}

/// One dataset and the methods to run on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub params: ArwParams,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub methods: Vec<MethodSpec>,
    pub seed: u64,
    #[serde(default)]
    pub recovery_norm: RecoveryNorm,
}

impl TrialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(invalid("a trial needs at least one method"));
        }
        let cal = self.params.calibrate()?;
        self.noise.validate(cal.n, self.params.p)?;
        Ok(())
    }

    /// FNV-1a of the canonical JSON encoding, as 16 hex digits.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let h = json.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
        });
        format!("{h:016x}")
    }
}

/// Elapsed seconds. Equality ignores the value so records compare by content.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WallTime(pub f64);

impl PartialEq for WallTime {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Number of columns a screening or subset step kept.
    pub selected: Option<usize>,
    pub fallback_used: bool,
    pub converged: Option<bool>,
}

/// Decisions of a test on the null matrix and on the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestPair {
    pub null: TestOutcome,
    pub alt: TestOutcome,
}

/// Result of one method. Exactly one of the metric block and `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub label: String,
    #[serde(default)]
    pub losses: LossReport,
    #[serde(default)]
    pub tests: Option<TestPair>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub spec_hash: String,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub tau: f64,
    pub expected_signals: f64,
    pub realized_support: usize,
    pub outcomes: Vec<MethodOutcome>,
    pub wall_time: WallTime,
}

impl TrialRecord {
    pub fn has_failures(&self) -> bool {
        self.outcomes.iter().any(|o| o.error.is_some())
    }

    pub fn outcome(&self, label: &str) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.label == label)
    }
}

struct Context<'a> {
    ds: &'a Dataset,
    null: Option<&'a Array2<f64>>,
    params: &'a ArwParams,
    seed: u64,
    expected: f64,
    norm: RecoveryNorm,
}

impl Context<'_> {
    fn x(&self) -> ArrayView2<'_, f64> {
        self.ds.x.view()
    }

    fn n_select(&self, n: Option<usize>) -> Result<usize> {
        match n {
            Some(0) => Err(invalid("N must be positive")),
            Some(n) => Ok(n),
            None => self.params.default_sparsity(),
        }
    }

    fn q(&self, q: Option<f64>) -> Result<f64> {
        match (q, self.params.strength) {
            (Some(q), _) => Ok(q),
            (None, Strength::LogAdjusted { r }) => q_star(self.params.theta, self.params.beta, r),
            (None, _) => Err(invalid(
                "q defaults to q*, which needs the log-adjusted (r) calibration; pass q",
            )),
        }
    }

    fn solver(&self, s: Solver) -> Solver {
        s.reseeded(self.seed)
    }

    fn labels(&self) -> &[i8] {
        self.ds.labels.as_deref().expect("generated data has labels")
    }

    fn support(&self) -> &[usize] {
        self.ds.support.as_deref().expect("generated data has a support")
    }

    fn clustering(&self, r: &ClusterResult, out: &mut MethodOutcome) -> Result<()> {
        out.losses.clustering_hamming = Some(hamming_clustering(&r.labels, self.labels())?);
        if let Some(pair) = &r.singular {
            let truth: Vec<f64> = self.labels().iter().map(|&l| f64::from(l)).collect();
            out.losses.cosine = Some(cos_angle(&pair.vector, &truth)?);
            out.diagnostics.converged = Some(pair.converged);
        }
        out.diagnostics.selected = r.selected.as_ref().map(Vec::len);
        out.diagnostics.fallback_used = r.fallback_used;
        Ok(())
    }

    fn recovery(&self, r: &RecoveryResult, out: &mut MethodOutcome) -> Result<()> {
        out.losses.recovery_hamming = Some(hamming_recovery_with(
            &r.support,
            self.support(),
            self.expected,
            self.norm,
        )?);
        if let (Some(signs), Some(mu)) = (&r.signs, &self.ds.mu) {
            out.losses.signed_recovery_hamming =
                Some(hamming_recovery_signed(signs, mu, self.expected)?);
        }
        if let Some(labels) = &r.labels {
            out.losses.clustering_hamming = Some(hamming_clustering(labels, self.labels())?);
        }
        out.diagnostics.selected = Some(r.support.len());
        Ok(())
    }

    fn test(&self, f: impl Fn(ArrayView2<f64>) -> Result<TestOutcome>, out: &mut MethodOutcome) -> Result<()> {
        let null = self.null.expect("null matrix generated for tests");
        let pair = TestPair {
            null: f(null.view())?,
            alt: f(self.x())?,
        };
        out.losses.test_error_components = Some((
            f64::from(u8::from(pair.null.reject)),
            f64::from(u8::from(!pair.alt.reject)),
        ));
        out.tests = Some(pair);
        Ok(())
    }

    fn run(&self, m: &MethodSpec, out: &mut MethodOutcome) -> Result<()> {
        let x = self.x();
        match m {
            MethodSpec::SimpleAgg => self.clustering(&clusterers::simple_aggregation(x), out),
            MethodSpec::SparseAgg { n_select, solver } => {
                let r = clusterers::sparse_aggregation(x, self.n_select(*n_select)?, self.solver(*solver))?;
                self.clustering(&r, out)
            }
            MethodSpec::ClassicalPca => self.clustering(&clusterers::classical_pca(x)?, out),
            MethodSpec::IfPca { q } => self.clustering(&clusterers::if_pca(x, self.q(*q)?)?, out),
            MethodSpec::SignedSparseAgg { n_select, solver } => {
                let r = clusterers::signed_sparse_aggregation(
                    x,
                    self.n_select(*n_select)?,
                    self.solver(*solver),
                )?;
                self.clustering(&r, out)
            }
            MethodSpec::DesignatedClustering { solver } => {
                let r = if self.params.beta < (1.0 - self.params.theta) / 2.0 {
                    clusterers::simple_aggregation(x)
                } else {
                    clusterers::sparse_aggregation(x, self.n_select(None)?, self.solver(*solver))?
                };
                self.clustering(&r, out)
            }
            MethodSpec::SaStar => self.recovery(&recovery::recover_sa_star(x), out),
            MethodSpec::IfStar => self.recovery(&recovery::recover_if_star(x)?, out),
            MethodSpec::SaN { n_select, solver } => {
                let r = recovery::recover_sa_n(x, self.n_select(*n_select)?, self.solver(*solver))?;
                self.recovery(&r, out)
            }
            MethodSpec::IfQ { q } => self.recovery(&recovery::recover_if_q(x, self.q(*q)?)?, out),
            MethodSpec::SignedPca => self.recovery(&recovery::recover_signed_pca(x)?, out),
            MethodSpec::TestSimpleAgg => self.test(|v| Ok(global_tests::test_simple_agg(v)), out),
            MethodSpec::TestSparseAgg { n_select, solver } => {
                let n = self.n_select(*n_select)?;
                let s = self.solver(*solver);
                self.test(|v| global_tests::test_sparse_agg(v, n, s), out)
            }
            MethodSpec::Hc => self.test(global_tests::higher_criticism, out),
            MethodSpec::ClusterThenRecover { q } => {
                let c = clusterers::if_pca(x, self.q(*q)?)?;
                self.clustering(&c, out)?;
                let support = recovery::threshold_projection(x, &c.labels);
                out.losses.recovery_hamming = Some(hamming_recovery_with(
                    &support,
                    self.support(),
                    self.expected,
                    self.norm,
                )?);
                Ok(())
            }
            MethodSpec::RecoverThenCluster { q } => {
                let r = recovery::recover_if_q(x, self.q(*q)?)?;
                self.recovery(&r, out)?;
                let labels = if r.support.is_empty() {
                    out.diagnostics.fallback_used = true;
                    clusterers::simple_aggregation(x).labels
                } else {
                    x.rows()
                        .into_iter()
                        .map(|row| sgn(r.support.iter().map(|&j| row[j]).sum()))
                        .collect()
                };
                out.losses.clustering_hamming = Some(hamming_clustering(&labels, self.labels())?);
                Ok(())
            }
        }
    }
}

/// Generate the dataset of `spec` and run every method on it.
///
/// Test methods also run on a pure-noise matrix drawn with the same seed and
/// noise law. Method failures are recorded per method; only an invalid spec
/// is an error.
pub fn run_trial(spec: &TrialSpec) -> Result<TrialRecord> {
    spec.validate()?;
    let start = Instant::now();
    let ds = gen_dataset(&spec.params, &spec.noise, spec.seed)?;
    let cal = spec.params.calibrate()?;
    let null = if spec.methods.iter().any(MethodSpec::is_test) {
        Some(gen_noise(cal.n, spec.params.p, &spec.noise, spec.seed)?)
    } else {
        None
    };
    let ctx = Context {
        ds: &ds,
        null: null.as_ref(),
        params: &spec.params,
        seed: spec.seed,
        expected: spec.params.expected_signals()?,
        norm: spec.recovery_norm,
    };
    let outcomes = spec
        .methods
        .iter()
        .map(|m| {
            let mut out = MethodOutcome {
                label: m.label(),
                losses: LossReport::default(),
                tests: None,
                diagnostics: Diagnostics::default(),
                error: None,
            };
            if let Err(e) = ctx.run(m, &mut out) {
                out = MethodOutcome {
                    label: m.label(),
                    losses: LossReport::default(),
                    tests: None,
                    diagnostics: Diagnostics::default(),
                    error: Some(e.to_string()),
                };
            }
            out
        })
        .collect();
    Ok(TrialRecord {
        spec_hash: spec.hash(),
        seed: spec.seed,
        n: cal.n,
        p: spec.params.p,
        tau: cal.tau,
        expected_signals: ctx.expected,
        realized_support: ds.support.as_ref().map_or(0, Vec::len),
        outcomes,
        wall_time: WallTime(start.elapsed().as_secs_f64()),
    })
}

/// Strength axis of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrengthGrid {
    Alpha { values: Vec<f64> },
    R { values: Vec<f64> },
    /// `α = m·boundary(β)` for each multiple `m`.
    Relative {
        problem: Problem,
        bound_kind: BoundKind,
        #[serde(default)]
        variant: Variant,
        multiples: Vec<f64>,
    },
}

impl StrengthGrid {
    fn len(&self) -> usize {
        match self {
            StrengthGrid::Alpha { values } | StrengthGrid::R { values } => values.len(),
            StrengthGrid::Relative { multiples, .. } => multiples.len(),
        }
    }

    fn resolve(&self, theta: f64, beta: f64, i: usize) -> Result<Strength> {
        Ok(match self {
            StrengthGrid::Alpha { values } => Strength::Alpha { alpha: values[i] },
            StrengthGrid::R { values } => Strength::LogAdjusted { r: values[i] },
            StrengthGrid::Relative {
                problem,
                bound_kind,
                variant,
                multiples,
            } => {
                let b = phase::boundary(&PhaseQuery {
                    problem: *problem,
                    bound_kind: *bound_kind,
                    variant: *variant,
                    theta,
                    beta,
                })?;
                Strength::Alpha {
                    alpha: multiples[i] * b.alpha_boundary,
                }
            }
        })
    }
}

fn default_max_trials() -> usize {
    DEFAULT_MAX_TRIALS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub p: usize,
    pub theta: f64,
    pub betas: Vec<f64>,
    pub strengths: StrengthGrid,
    #[serde(default)]
    pub sign_mix: f64,
    pub reps: usize,
    pub methods: Vec<MethodSpec>,
    pub master_seed: u64,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub recovery_norm: RecoveryNorm,
    #[serde(default = "default_max_trials")]
    pub max_trials: usize,
    /// Output stem; `.json` and `.csv` are appended by the CLI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl SweepSpec {
    pub fn cell_count(&self) -> usize {
        self.betas.len() * self.strengths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() || self.strengths.len() == 0 {
            return Err(invalid("sweep grids must be nonempty"));
        }
        if self.reps == 0 {
            return Err(invalid("reps must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("a sweep needs at least one method"));
        }
        let total = self.cell_count().saturating_mul(self.reps);
        if total > self.max_trials {
            return Err(invalid(format!(
                "{total} trials exceed the budget of {}",
                self.max_trials
            )));
        }
        Ok(())
    }

    /// Seed of rep `rep` in cell `(bi, si)`.
    pub fn trial_seed(&self, bi: usize, si: usize, rep: usize) -> u64 {
        derive_seed(self.master_seed, &[bi as u64, si as u64, rep as u64])
    }

    fn variant(&self) -> Variant {
        if self.sign_mix > 0.0 {
            Variant::Signed
        } else {
            Variant::OneSided
        }
    }

    fn trial_spec(&self, bi: usize, si: usize, rep: usize) -> Result<TrialSpec> {
        let beta = self.betas[bi];
        let strength = self.strengths.resolve(self.theta, beta, si)?;
        Ok(TrialSpec {
            params: ArwParams::new(self.p, self.theta, beta, strength).with_sign_mix(self.sign_mix),
            noise: self.noise.clone(),
            methods: self.methods.clone(),
            seed: self.trial_seed(bi, si, rep),
            recovery_norm: self.recovery_norm,
        })
    }
}

/// Mean, median and a normal-approximation 95% interval for the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub count: usize,
}

/// `None` when no value is finite.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    let mean = v.iter().sum::<f64>() / k as f64;
    let median = if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    };
    let half = if k > 1 {
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        1.959_963_984_540_054 * (var / k as f64).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        mean,
        median,
        ci_low: mean - half,
        ci_high: mean + half,
        count: k,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub clustering_hamming: Option<Summary>,
    pub recovery_hamming: Option<Summary>,
    pub signed_recovery_hamming: Option<Summary>,
    pub cosine: Option<Summary>,
    pub selected: Option<Summary>,
    pub test_error: Option<TestError>,
    pub errors: usize,
    pub fallbacks: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseLabel {
    pub problem: Problem,
    pub bound_kind: BoundKind,
    pub boundary: f64,
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub beta_index: usize,
    pub strength_index: usize,
    pub beta: f64,
    pub strength: Option<Strength>,
    /// `−log_p τ`.
    pub alpha_effective: Option<f64>,
    pub trials: usize,
    pub phase: Vec<PhaseLabel>,
    pub methods: Vec<MethodSummary>,
    /// Trial-level failures, one message per failed trial.
    pub failures: Vec<String>,
}

impl CellSummary {
    pub fn method(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.label == label)
    }

    pub fn region(&self, problem: Problem, kind: BoundKind) -> Option<Region> {
        self.phase
            .iter()
            .find(|l| l.problem == problem && l.bound_kind == kind)
            .map(|l| l.region)
    }
}

/// Deterministic part of a sweep's output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResults {
    pub spec: SweepSpec,
    pub cells: Vec<CellSummary>,
}

impl SweepResults {
    pub fn has_failures(&self) -> bool {
        self.cells.iter().any(|c| {
            !c.failures.is_empty() || c.methods.iter().any(|m| m.errors > 0)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub started_unix_secs: f64,
    pub finished_unix_secs: f64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub results: SweepResults,
    pub metadata: Metadata,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Parallel,
    Serial,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// [`run_sweep_with`] using every available core.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput> {
    run_sweep_with(spec, Execution::Parallel)
}

/// Run every cell of `spec` and summarize it. Results are in cell order
/// (β-major) whatever the execution mode.
pub fn run_sweep_with(spec: &SweepSpec, exec: Execution) -> Result<SweepOutput> {
    spec.validate()?;
    let started = unix_now();
    let cols = spec.strengths.len();
    let jobs: Vec<(usize, usize, usize)> = (0..spec.betas.len())
        .flat_map(|bi| (0..cols).flat_map(move |si| (0..spec.reps).map(move |r| (bi, si, r))))
        .collect();
    let one = |&(bi, si, rep): &(usize, usize, usize)| spec.trial_spec(bi, si, rep).and_then(|t| run_trial(&t));
    let records: Vec<Result<TrialRecord>> = match exec {
        Execution::Parallel => jobs.par_iter().map(one).collect(),
        Execution::Serial => jobs.iter().map(one).collect(),
    };
    let cells = records
        .chunks(spec.reps)
        .enumerate()
        .map(|(c, chunk)| summarize_cell(spec, c / cols, c % cols, chunk))
        .collect();
    Ok(SweepOutput {
        results: SweepResults {
            spec: spec.clone(),
            cells,
        },
        metadata: Metadata {
            started_unix_secs: started,
            finished_unix_secs: unix_now(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
        },
    })
}

fn summarize_cell(spec: &SweepSpec, bi: usize, si: usize, chunk: &[Result<TrialRecord>]) -> CellSummary {
    let beta = spec.betas[bi];
    let strength = spec.strengths.resolve(spec.theta, beta, si).ok();
    let params = strength.map(|s| ArwParams::new(spec.p, spec.theta, beta, s));
    let alpha_effective = params
        .and_then(|p| p.calibrate().ok())
        .filter(|c| c.tau > 0.0)
        .map(|c| -c.tau.ln() / (spec.p as f64).ln());
    let mut phase = Vec::new();
    if let Some(alpha) = alpha_effective {
        for problem in PROBLEMS {
            for bound_kind in BOUND_KINDS {
                if let Ok(ans) = phase::boundary(&PhaseQuery {
                    problem,
                    bound_kind,
                    variant: spec.variant(),
                    theta: spec.theta,
                    beta,
                }) {
                    phase.push(PhaseLabel {
                        problem,
                        bound_kind,
                        boundary: ans.alpha_boundary,
                        region: ans.region_of(alpha),
                    });
                }
            }
        }
    }
    let ok: Vec<&TrialRecord> = chunk.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures = chunk
        .iter()
        .filter_map(|r| r.as_ref().err().map(ToString::to_string))
        .collect();
    let methods = spec
        .methods
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let outs: Vec<&MethodOutcome> = ok.iter().map(|r| &r.outcomes[mi]).collect();
            let good: Vec<&&MethodOutcome> = outs.iter().filter(|o| o.error.is_none()).collect();
            let pick = |f: fn(&LossReport) -> Option<f64>| {
                summarize(&good.iter().filter_map(|o| f(&o.losses)).collect::<Vec<_>>())
            };
            let pairs: Vec<TestPair> = good.iter().filter_map(|o| o.tests).collect();
            let test_error = if pairs.is_empty() {
                None
            } else {
                let null: Vec<bool> = pairs.iter().map(|p| p.null.reject).collect();
                let alt: Vec<bool> = pairs.iter().map(|p| p.alt.reject).collect();
                empirical_test_error(&null, &alt).ok()
            };
            MethodSummary {
                label: m.label(),
                clustering_hamming: pick(|l| l.clustering_hamming),
                recovery_hamming: pick(|l| l.recovery_hamming),
                signed_recovery_hamming: pick(|l| l.signed_recovery_hamming),
                cosine: pick(|l| l.cosine),
                selected: summarize(
                    &good
                        .iter()
                        .filter_map(|o| o.diagnostics.selected.map(|s| s as f64))
                        .collect::<Vec<_>>(),
                ),
                test_error,
                errors: outs.len() - good.len(),
                fallbacks: good.iter().filter(|o| o.diagnostics.fallback_used).count(),
            }
        })
        .collect();
    CellSummary {
        beta_index: bi,
        strength_index: si,
        beta,
        strength,
        alpha_effective,
        trials: ok.len(),
        phase,
        methods,
        failures,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// `{"results": …, "metadata": …}`, pretty-printed.
pub fn write_sweep_json(path: &Path, out: &SweepOutput) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, out)?;
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_sweep_json(path: &Path) -> Result<SweepOutput> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| json_parse_error(path, e.line(), &e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

fn region_name(r: Region) -> &'static str {
    match r {
        Region::Possible => "possible",
        Region::Impossible => "impossible",
        Region::OnBoundary => "on_boundary",
    }
}

fn snake<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// One row per cell: grid coordinates, phase regions, then per-method means.
pub fn write_sweep_csv(path: &Path, results: &SweepResults) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = ["beta", "strength_kind", "strength_value", "alpha_effective", "trials", "failures"]
        .map(String::from)
        .to_vec();
    for problem in PROBLEMS {
        for kind in BOUND_KINDS {
            header.push(format!("{}_{}", snake(&problem), snake(&kind)));
        }
    }
    for m in &results.spec.methods {
        let l = m.label();
        for col in ["clustering_mean", "recovery_mean", "signed_recovery_mean", "cosine_mean", "test_error", "errors"] {
            header.push(format!("{l}:{col}"));
        }
    }
    w.write_record(&header)?;
    for cell in &results.cells {
        let (kind, value) = match cell.strength {
            Some(Strength::Alpha { alpha }) => ("alpha", Some(alpha)),
            Some(Strength::LogAdjusted { r }) => ("r", Some(r)),
            Some(Strength::Fixed { tau }) => ("tau", Some(tau)),
            None => ("", None),
        };
        let mut row = vec![
            format!("{:?}", cell.beta),
            kind.to_owned(),
            opt(value),
            opt(cell.alpha_effective),
            cell.trials.to_string(),
            cell.failures.len().to_string(),
        ];
        for problem in PROBLEMS {
            for kind in BOUND_KINDS {
                row.push(cell.region(problem, kind).map_or("", region_name).to_owned());
            }
        }
        for m in &cell.methods {
            let mean = |s: Option<Summary>| opt(s.map(|s| s.mean));
            row.push(mean(m.clustering_hamming));
            row.push(mean(m.recovery_hamming));
            row.push(mean(m.signed_recovery_hamming));
            row.push(mean(m.cosine));
            row.push(opt(m.test_error.map(|t| t.sum)));
            row.push(m.errors.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))
}

/// One JSON record per line.
pub fn save_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn json_parse_error(path: &Path, line: usize, e: &serde_json::Error) -> Error {
    let msg = e.to_string();
    // serde_json names the offending field between backticks.
    let field = msg
        .split('`')
        .nth(1)
        .map_or_else(|| format!("column {}", e.column()), str::to_owned);
    Error::Parse {
        path: path.into(),
        line,
        field,
        message: msg,
    }
}

/// Inverse of [`save_records`]. Blank lines are skipped.
pub fn load_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| json_parse_error(path, i + 1, &e))?);
    }
    Ok(out)
}
