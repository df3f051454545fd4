//! Closed-form phase boundaries in the (β, α) plane.
//!
//! Each boundary is piecewise linear in β on half-open intervals `[lo, hi)`.
//! Adjacent pieces agree at their shared endpoint.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Clustering,
    SignalRecovery,
    HypothesisTesting,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Statistical,
    Ctub,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    OneSided,
    Signed,
}

pub const PROBLEMS: [Problem; 3] = [
    Problem::Clustering,
    Problem::SignalRecovery,
    Problem::HypothesisTesting,
];
pub const BOUND_KINDS: [BoundKind; 2] = [BoundKind::Statistical, BoundKind::Ctub];
pub const VARIANTS: [Variant; 2] = [Variant::OneSided, Variant::Signed];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseQuery {
    pub problem: Problem,
    pub bound_kind: BoundKind,
    #[serde(default)]
    pub variant: Variant,
    pub theta: f64,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Possible,
    Impossible,
    OnBoundary,
}

/// Active branch of a piecewise boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    /// Index into the pieces of this (problem, kind, variant, θ).
    Piece(usize),
    /// β sits on a shared endpoint of two pieces.
    Breakpoint,
}

impl std::fmt::Display for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Segment::Piece(i) => write!(f, "{i}"),
            Segment::Breakpoint => f.write_str("breakpoint"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseAnswer {
    pub alpha_boundary: f64,
    pub segment: Segment,
    pub formula: &'static str,
}

impl PhaseAnswer {
    pub fn region_of(&self, alpha: f64) -> Region {
        region_against(self.alpha_boundary, alpha)
    }
}

/// Tolerance for `on_boundary` and for detecting breakpoints.
pub const BOUNDARY_TOL: f64 = 1e-12;

fn region_against(boundary: f64, alpha: f64) -> Region {
    if (alpha - boundary).abs() <= BOUNDARY_TOL {
        Region::OnBoundary
    } else if alpha < boundary {
        Region::Possible
    } else {
        Region::Impossible
    }
}

type Formula = (fn(f64, f64) -> f64, &'static str);

const DENSE_CLU: Formula = (|_, b| (1.0 - 2.0 * b) / 2.0, "(1-2b)/2");
const HALF_THETA: Formula = (|t, _| t / 2.0, "t/2");
const QUARTER_THETA: Formula = (|t, _| t / 4.0, "t/4");
const SPARSE_CLU: Formula = (|_, b| (1.0 - b) / 2.0, "(1-b)/2");
const MODERATE: Formula = (|t, b| (1.0 + t - 2.0 * b) / 4.0, "(1+t-2b)/4");
const SPARSE_SIG: Formula = (|t, b| (1.0 + t - b) / 4.0, "(1+t-b)/4");
const HYP_DENSE: Formula = (|t, b| (2.0 + t - 4.0 * b) / 4.0, "(2+t-4b)/4");

/// Pieces `(start, formula)`; each runs until the next start, the last until 1.
fn pieces(problem: Problem, kind: BoundKind, variant: Variant, t: f64) -> Vec<(f64, Formula)> {
    use BoundKind::*;
    use Problem::*;
    use Variant::*;
    match (problem, kind, variant) {
        (Clustering, Statistical, OneSided) => vec![
            (0.0, DENSE_CLU),
            ((1.0 - t) / 2.0, HALF_THETA),
            (1.0 - t, SPARSE_CLU),
        ],
        (Clustering, Statistical, Signed) => vec![
            (0.0, MODERATE),
            ((1.0 - t) / 2.0, HALF_THETA),
            (1.0 - t, SPARSE_CLU),
        ],
        (Clustering, Ctub, OneSided) => vec![
            (0.0, DENSE_CLU),
            ((1.0 - t) / 2.0, MODERATE),
            (0.5, QUARTER_THETA),
            (1.0 - t / 2.0, SPARSE_CLU),
        ],
        (Clustering, Ctub, Signed) => vec![
            (0.0, MODERATE),
            (0.5, QUARTER_THETA),
            (1.0 - t / 2.0, SPARSE_CLU),
        ],
        (SignalRecovery, Statistical, _) => vec![(0.0, HALF_THETA), (1.0 - t, SPARSE_SIG)],
        (SignalRecovery, Ctub, _) => vec![
            (0.0, HALF_THETA),
            ((1.0 - t) / 2.0, MODERATE),
            (0.5, QUARTER_THETA),
        ],
        (HypothesisTesting, Statistical, OneSided) => {
            // max{(2+θ−4β)/4, min{θ/2, (1+θ−β)/4}}: three pieces when the
            // dense line meets θ/2 before β = 1 − θ, i.e. θ < 2/3.
            let cross = (2.0 - t) / 4.0;
            if cross < 1.0 - t {
                vec![(0.0, HYP_DENSE), (cross, HALF_THETA), (1.0 - t, SPARSE_SIG)]
            } else {
                vec![(0.0, HYP_DENSE), (1.0 / 3.0, SPARSE_SIG)]
            }
        }
        (HypothesisTesting, Statistical, Signed) => vec![
            (0.0, MODERATE),
            ((1.0 - t) / 2.0, HALF_THETA),
            (1.0 - t, SPARSE_SIG),
        ],
        (HypothesisTesting, Ctub, OneSided) => vec![(0.0, HYP_DENSE), (0.5, QUARTER_THETA)],
        (HypothesisTesting, Ctub, Signed) => vec![(0.0, MODERATE), (0.5, QUARTER_THETA)],
    }
}

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must lie in (0, 1)")))
    }
}

/// Boundary α at (θ, β) and the piece it came from.
pub fn boundary(query: &PhaseQuery) -> Result<PhaseAnswer> {
    check_open_unit("theta", query.theta)?;
    check_open_unit("beta", query.beta)?;
    let ps = pieces(query.problem, query.bound_kind, query.variant, query.theta);
    let idx = ps
        .iter()
        .rposition(|(start, _)| query.beta >= *start)
        .expect("first piece starts at 0");
    let (f, formula) = ps[idx].1;
    let on_break = ps
        .iter()
        .skip(1)
        .any(|(s, _)| (query.beta - s).abs() <= BOUNDARY_TOL);
    Ok(PhaseAnswer {
        alpha_boundary: f(query.theta, query.beta),
        segment: if on_break {
            Segment::Breakpoint
        } else {
            Segment::Piece(idx)
        },
        formula,
    })
}

/// Interior breakpoints in (0, 1), ascending.
pub fn breakpoints(problem: Problem, kind: BoundKind, variant: Variant, theta: f64) -> Vec<f64> {
    pieces(problem, kind, variant, theta)
        .iter()
        .skip(1)
        .map(|(s, _)| *s)
        .filter(|s| *s > 0.0 && *s < 1.0)
        .collect()
}

/// Number of linear pieces on β ∈ (0, 1).
pub fn segment_count(problem: Problem, kind: BoundKind, variant: Variant, theta: f64) -> usize {
    breakpoints(problem, kind, variant, theta).len() + 1
}

/// Region of α relative to the boundary at (θ, β).
pub fn classify(
    problem: Problem,
    bound_kind: BoundKind,
    variant: Variant,
    theta: f64,
    beta: f64,
    alpha: f64,
) -> Result<Region> {
    let ans = boundary(&PhaseQuery {
        problem,
        bound_kind,
        variant,
        theta,
        beta,
    })?;
    Ok(ans.region_of(alpha))
}

/// `β − 1/2` for `β < 3/4`, `(1 − √(1 − β))²` otherwise.
pub fn rho_star(beta: f64) -> Result<f64> {
    if !(beta > 0.5 && beta < 1.0) {
        return Err(invalid(format!("beta = {beta} must lie in (1/2, 1)")));
    }
    Ok(if beta < 0.75 {
        beta - 0.5
    } else {
        (1.0 - (1.0 - beta).sqrt()).powi(2)
    })
}

/// `(1 − θ)·ρ*(1/2 + (β − 1/2)/(1 − θ))` on `1/2 < β < 1 − θ/2`.
pub fn rho_star_theta(theta: f64, beta: f64) -> Result<f64> {
    check_open_unit("theta", theta)?;
    if !(beta > 0.5 && beta < 1.0 - theta / 2.0) {
        return Err(invalid(format!(
            "beta = {beta} must lie in (1/2, 1 - theta/2) = (0.5, {})",
            1.0 - theta / 2.0
        )));
    }
    Ok((1.0 - theta) * rho_star(0.5 + (beta - 0.5) / (1.0 - theta))?)
}
