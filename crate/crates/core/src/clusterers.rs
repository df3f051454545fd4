//! Two-class clustering: simple and sparse aggregation, classical PCA,
//! IF-PCA, the signed sparse aggregation, and exact 1-D 2-means.
//!
//! Every method maps `sgn(0)` to `+1`.

use ndarray::{ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{indexed_stream, Purpose};
use crate::spectral::{
    chi2_scores, leading_left_singular, select_columns, select_features, SingularPair,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    SimpleAgg,
    SparseAgg,
    ClassicalPca,
    IfPca,
    SignedSparseAgg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub labels: Vec<i8>,
    pub method: ClusterMethod,
    /// Columns used. Present for every screening or subset method.
    pub selected: Option<Vec<usize>>,
    pub singular: Option<SingularPair>,
    pub fallback_used: bool,
    /// `‖Xμ̂‖₁` for the aggregation methods.
    pub objective: Option<f64>,
    /// Length-p sign vector in `{-1, 0, 1}` for the aggregation methods.
    pub mu_hat: Option<Vec<i8>>,
}

/// `+1` for `v ≥ 0`, else `−1`.
pub fn sgn(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

pub fn sign_labels(values: &[f64]) -> Vec<i8> {
    values.iter().map(|&v| sgn(v)).collect()
}

/// Default cap on the number of subsets visited by exhaustive search.
pub const DEFAULT_BUDGET: u64 = 2_000_000;
pub const DEFAULT_RESTARTS: usize = 8;
/// Swap candidates kept on each side of the 1-swap neighbourhood.
const SWAP_CANDIDATES: usize = 32;

/// How the size-N subset problem is solved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solver {
    Exact { budget: u64 },
    Greedy { restarts: usize, seed: u64 },
    /// Exact when within `budget`, greedy otherwise.
    Auto { budget: u64, restarts: usize, seed: u64 },
}

impl Default for Solver {
    fn default() -> Self {
        Solver::Auto {
            budget: DEFAULT_BUDGET,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
        }
    }
}

impl Solver {
    /// Same solver with its restart seed replaced.
    pub fn reseeded(self, seed: u64) -> Self {
        match self {
            Solver::Exact { .. } => self,
            Solver::Greedy { restarts, .. } => Solver::Greedy { restarts, seed },
            Solver::Auto { budget, restarts, .. } => Solver::Auto { budget, restarts, seed },
        }
    }
}

/// A size-N signed column subset and its objective `‖Σ σ_j x_j‖₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetSolution {
    /// Ascending column indices.
    pub columns: Vec<usize>,
    /// Sign of each entry of `columns`.
    pub signs: Vec<i8>,
    pub objective: f64,
    /// Whether the solution is certified optimal by enumeration.
    pub exact: bool,
}

impl SubsetSolution {
    pub fn mu_hat(&self, p: usize) -> Vec<i8> {
        let mut mu = vec![0i8; p];
        for (&j, &s) in self.columns.iter().zip(&self.signs) {
            mu[j] = s;
        }
        mu
    }
}

/// Number of candidates exhaustive search visits, as a float.
pub fn enumeration_size(p: usize, n_select: usize, signed: bool) -> f64 {
    let k = n_select.min(p - n_select.min(p));
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * (p - i) as f64 / (i + 1) as f64;
    }
    if signed {
        c * 2f64.powi(n_select.saturating_sub(1) as i32)
    } else {
        c
    }
}

/// Columns copied out contiguously, which the subset solvers scan repeatedly.
struct Columns {
    n: usize,
    data: Vec<Vec<f64>>,
}

impl Columns {
    fn new(x: ArrayView2<f64>) -> Self {
        Self {
            n: x.nrows(),
            data: x.axis_iter(Axis(1)).map(|c| c.to_vec()).collect(),
        }
    }

    fn p(&self) -> usize {
        self.data.len()
    }

    /// `Σ σ_j x_j` summed in the given order.
    fn sum(&self, cols: &[usize], signs: &[i8]) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for (&j, &sg) in cols.iter().zip(signs) {
            let f = f64::from(sg);
            for (si, xi) in s.iter_mut().zip(&self.data[j]) {
                *si += f * xi;
            }
        }
        s
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Maximize `‖Σ_{j∈S} σ_j x_j‖₁` over `|S| = n_select`, with `σ ≡ +1` unless
/// `signed`.
pub fn best_subset(
    x: ArrayView2<f64>,
    n_select: usize,
    signed: bool,
    solver: Solver,
) -> Result<SubsetSolution> {
    let p = x.ncols();
    if n_select == 0 || n_select > p {
        return Err(invalid(format!("subset size N = {n_select} must lie in [1, {p}]")));
    }
    let cols = Columns::new(x);
    let size = enumeration_size(p, n_select, signed);
    match solver {
        Solver::Exact { budget } => {
            if size > budget as f64 {
                return Err(Error::BudgetExceeded {
                    combinations: size,
                    budget,
                });
            }
            Ok(exact_search(&cols, n_select, signed))
        }
        Solver::Greedy { restarts, seed } => Ok(greedy_search(&cols, n_select, signed, restarts, seed)),
        Solver::Auto {
            budget,
            restarts,
            seed,
        } => Ok(if size <= budget as f64 {
            exact_search(&cols, n_select, signed)
        } else {
            greedy_search(&cols, n_select, signed, restarts, seed)
        }),
    }
}

/// `(columns, signs)` in the total order used to break exact ties.
fn tie_key_less(a: (&[usize], &[i8]), b: (&[usize], &[i8])) -> bool {
    match a.0.cmp(b.0) {
        std::cmp::Ordering::Equal => {
            // `+` sorts before `−`.
            let ka: Vec<i8> = a.1.iter().map(|s| -s).collect();
            let kb: Vec<i8> = b.1.iter().map(|s| -s).collect();
            ka < kb
        }
        o => o == std::cmp::Ordering::Less,
    }
}

fn exact_search(cols: &Columns, n_select: usize, signed: bool) -> SubsetSolution {
    struct State<'a> {
        cols: &'a Columns,
        n_select: usize,
        signed: bool,
        chosen: Vec<usize>,
        signs: Vec<i8>,
        partial: Vec<Vec<f64>>,
        best: Option<(f64, Vec<usize>, Vec<i8>)>,
    }

    fn visit(st: &mut State, depth: usize, start: usize) {
        if depth == st.n_select {
            let obj = l1(&st.partial[depth]);
            let better = match &st.best {
                None => true,
                Some((b, bc, bs)) => {
                    obj > *b || (obj == *b && tie_key_less((&st.chosen, &st.signs), (bc, bs)))
                }
            };
            if better {
                st.best = Some((obj, st.chosen.clone(), st.signs.clone()));
            }
            return;
        }
        let remaining = st.n_select - depth;
        for j in start..=(st.cols.p() - remaining) {
            // The first sign is fixed to + since ‖−v‖₁ = ‖v‖₁.
            let sign_choices: &[i8] = if st.signed && depth > 0 { &[1, -1] } else { &[1] };
            for &sg in sign_choices {
                let f = f64::from(sg);
                let (lower, upper) = st.partial.split_at_mut(depth + 1);
                for ((dst, src), xi) in upper[0].iter_mut().zip(&lower[depth]).zip(&st.cols.data[j]) {
                    *dst = src + f * xi;
                }
                st.chosen.push(j);
                st.signs.push(sg);
                visit(st, depth + 1, j + 1);
                st.chosen.pop();
                st.signs.pop();
            }
        }
    }

    let mut st = State {
        cols,
        n_select,
        signed,
        chosen: Vec::with_capacity(n_select),
        signs: Vec::with_capacity(n_select),
        partial: vec![vec![0.0; cols.n]; n_select + 1],
        best: None,
    };
    visit(&mut st, 0, 0);
    let (objective, columns, signs) = st.best.expect("at least one subset");
    SubsetSolution {
        columns,
        signs,
        objective,
        exact: true,
    }
}

/// A working subset with membership flags.
struct Subset {
    sign: Vec<i8>,
    members: Vec<usize>,
}

impl Subset {
    fn empty(p: usize) -> Self {
        Self {
            sign: vec![0; p],
            members: Vec::new(),
        }
    }

    fn from_choice(p: usize, choice: &[(usize, i8)]) -> Self {
        let mut s = Self::empty(p);
        for &(j, sg) in choice {
            s.sign[j] = sg;
        }
        s.refresh_members();
        s
    }

    fn refresh_members(&mut self) {
        self.members = (0..self.sign.len()).filter(|&j| self.sign[j] != 0).collect();
    }

    fn signs(&self) -> Vec<i8> {
        self.members.iter().map(|&j| self.sign[j]).collect()
    }
}

fn improves(new: f64, old: f64) -> bool {
    new > old + 1e-12 * old.abs().max(1.0)
}

fn greedy_search(
    cols: &Columns,
    n_select: usize,
    signed: bool,
    restarts: usize,
    seed: u64,
) -> SubsetSolution {
    let p = cols.p();
    let mut best: Option<(f64, Subset)> = None;
    for r in 0..restarts.max(1) {
        let start = if r == 0 {
            None
        } else {
            let mut rng = indexed_stream(seed, Purpose::Restarts, r as u64);
            Some(rng.random_range(0..p))
        };
        let mut subset = forward_greedy(cols, n_select, signed, start);
        let obj = local_search(cols, n_select, signed, &mut subset);
        if best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, subset));
        }
    }
    let (objective, subset) = best.expect("at least one restart");
    SubsetSolution {
        signs: subset.signs(),
        columns: subset.members,
        objective,
        exact: false,
    }
}

/// Add one column at a time, each maximizing the running objective.
/// Ties go to the lowest index, then to `+`.
fn forward_greedy(cols: &Columns, n_select: usize, signed: bool, start: Option<usize>) -> Subset {
    let p = cols.p();
    let mut subset = Subset::empty(p);
    let mut s = vec![0.0; cols.n];
    let add = |subset: &mut Subset, s: &mut Vec<f64>, j: usize, sg: i8| {
        subset.sign[j] = sg;
        let f = f64::from(sg);
        for (si, xi) in s.iter_mut().zip(&cols.data[j]) {
            *si += f * xi;
        }
    };
    let mut count = 0;
    if let Some(j) = start {
        add(&mut subset, &mut s, j, 1);
        count = 1;
    }
    while count < n_select {
        let mut best = (f64::NEG_INFINITY, 0usize, 1i8);
        for j in 0..p {
            if subset.sign[j] != 0 {
                continue;
            }
            let x = &cols.data[j];
            let plus: f64 = s.iter().zip(x).map(|(a, b)| (a + b).abs()).sum();
            if plus > best.0 {
                best = (plus, j, 1);
            }
            if signed {
                let minus: f64 = s.iter().zip(x).map(|(a, b)| (a - b).abs()).sum();
                if minus > best.0 {
                    best = (minus, j, -1);
                }
            }
        }
        add(&mut subset, &mut s, best.1, best.2);
        count += 1;
    }
    subset.refresh_members();
    subset
}

/// Alternate a block step and a restricted 1-swap until neither improves.
/// Returns the final objective.
fn local_search(cols: &Columns, n_select: usize, signed: bool, subset: &mut Subset) -> f64 {
    let p = cols.p();
    let mut s = cols.sum(&subset.members, &subset.signs());
    let mut obj = l1(&s);
    for _round in 0..1000 {
        // Block step: with ℓ̂ = sgn(s), pick the N columns with the largest
        // ⟨ℓ̂, σ x_j⟩. The objective cannot decrease.
        let lhat: Vec<f64> = s.iter().map(|&v| f64::from(sgn(v))).collect();
        let c: Vec<f64> = cols
            .data
            .iter()
            .map(|x| x.iter().zip(&lhat).map(|(a, b)| a * b).sum())
            .collect();
        let gain = |j: usize| if signed { c[j].abs() } else { c[j] };
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| gain(b).total_cmp(&gain(a)).then(a.cmp(&b)));
        let choice: Vec<(usize, i8)> = order[..n_select]
            .iter()
            .map(|&j| (j, if signed { sgn(c[j]) } else { 1 }))
            .collect();
        let candidate = Subset::from_choice(p, &choice);
        let cs = cols.sum(&candidate.members, &candidate.signs());
        let cobj = l1(&cs);
        if improves(cobj, obj) {
            *subset = candidate;
            s = cs;
            obj = cobj;
            continue;
        }

        // 1-swap over the most promising outsiders and weakest insiders.
        let member_score = |j: usize| f64::from(subset.sign[j]) * c[j];
        let (inside, outside): (Vec<usize>, Vec<usize>) = if p <= 2 * SWAP_CANDIDATES {
            (subset.members.clone(), (0..p).filter(|&j| subset.sign[j] == 0).collect())
        } else {
            let mut ins = subset.members.clone();
            ins.sort_by(|&a, &b| member_score(a).total_cmp(&member_score(b)).then(a.cmp(&b)));
            ins.truncate(SWAP_CANDIDATES);
            let outs: Vec<usize> = order
                .iter()
                .copied()
                .filter(|&j| subset.sign[j] == 0)
                .take(SWAP_CANDIDATES)
                .collect();
            (ins, outs)
        };
        let mut best_move: Option<(f64, usize, usize, i8)> = None;
        let sign_choices: &[i8] = if signed { &[1, -1] } else { &[1] };
        for &i in &inside {
            let fi = f64::from(subset.sign[i]);
            let base: Vec<f64> = s.iter().zip(&cols.data[i]).map(|(a, b)| a - fi * b).collect();
            if signed {
                let flipped: f64 = base.iter().zip(&cols.data[i]).map(|(a, b)| (a - fi * b).abs()).sum();
                if improves(flipped, best_move.map_or(obj, |m| m.0)) {
                    best_move = Some((flipped, i, i, -subset.sign[i]));
                }
            }
            for &o in &outside {
                for &sg in sign_choices {
                    let f = f64::from(sg);
                    let v: f64 = base.iter().zip(&cols.data[o]).map(|(a, b)| (a + f * b).abs()).sum();
                    if improves(v, best_move.map_or(obj, |m| m.0)) {
                        best_move = Some((v, i, o, sg));
                    }
                }
            }
        }
        match best_move {
            Some((_, i, o, sg)) => {
                subset.sign[i] = 0;
                subset.sign[o] = sg;
                subset.refresh_members();
                s = cols.sum(&subset.members, &subset.signs());
                obj = l1(&s);
            }
            None => break,
        }
    }
    obj
}

/// Labels `sgn(Σ_j x_j)` from the row sums of `x`.
pub fn simple_aggregation(x: ArrayView2<f64>) -> ClusterResult {
    let sums: Vec<f64> = x.rows().into_iter().map(|r| r.sum()).collect();
    ClusterResult {
        labels: sign_labels(&sums),
        method: ClusterMethod::SimpleAgg,
        selected: None,
        singular: None,
        fallback_used: false,
        objective: Some(l1(&sums)),
        mu_hat: None,
    }
}

fn aggregation_result(
    x: ArrayView2<f64>,
    sol: SubsetSolution,
    method: ClusterMethod,
) -> ClusterResult {
    let cols = Columns::new(x.select(Axis(1), &sol.columns).view());
    let local: Vec<usize> = (0..sol.columns.len()).collect();
    let s = cols.sum(&local, &sol.signs);
    ClusterResult {
        labels: sign_labels(&s),
        method,
        mu_hat: Some(sol.mu_hat(x.ncols())),
        selected: Some(sol.columns),
        singular: None,
        fallback_used: false,
        objective: Some(sol.objective),
    }
}

/// Exhaustive sparse aggregation. Errors with [`Error::BudgetExceeded`] when
/// `C(p, N)` exceeds `budget`.
pub fn sparse_aggregation_exact(
    x: ArrayView2<f64>,
    n_select: usize,
    budget: u64,
) -> Result<ClusterResult> {
    let sol = best_subset(x, n_select, false, Solver::Exact { budget })?;
    Ok(aggregation_result(x, sol, ClusterMethod::SparseAgg))
}

/// Greedy forward selection plus local search, best of `restarts` starts.
pub fn sparse_aggregation_greedy(
    x: ArrayView2<f64>,
    n_select: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusterResult> {
    let sol = best_subset(x, n_select, false, Solver::Greedy { restarts, seed })?;
    Ok(aggregation_result(x, sol, ClusterMethod::SparseAgg))
}

/// Sparse aggregation with any [`Solver`].
pub fn sparse_aggregation(x: ArrayView2<f64>, n_select: usize, solver: Solver) -> Result<ClusterResult> {
    let sol = best_subset(x, n_select, false, solver)?;
    Ok(aggregation_result(x, sol, ClusterMethod::SparseAgg))
}

/// Maximize `‖Xμ‖₁` over `μ ∈ {−1, 0, 1}^p` with N nonzeros; labels `sgn(Xμ̂)`.
pub fn signed_sparse_aggregation(
    x: ArrayView2<f64>,
    n_select: usize,
    solver: Solver,
) -> Result<ClusterResult> {
    let sol = best_subset(x, n_select, true, solver)?;
    Ok(aggregation_result(x, sol, ClusterMethod::SignedSparseAgg))
}

/// Labels from the signs of the leading left singular vector of `x`.
pub fn classical_pca(x: ArrayView2<f64>) -> Result<ClusterResult> {
    let sp = leading_left_singular(x, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    Ok(ClusterResult {
        labels: sign_labels(&sp.vector),
        method: ClusterMethod::ClassicalPca,
        selected: None,
        singular: Some(sp),
        fallback_used: false,
        objective: None,
        mu_hat: None,
    })
}

/// Screen at level `q`, then classical PCA on the surviving columns.
/// An empty screen falls back to classical PCA on all of `x`.
pub fn if_pca(x: ArrayView2<f64>, q: f64) -> Result<ClusterResult> {
    let screen = select_features(&chi2_scores(x), x.ncols(), q)?;
    let (sp, fallback) = if screen.selected.is_empty() {
        (leading_left_singular(x, DEFAULT_TOL, DEFAULT_MAX_ITER)?, true)
    } else {
        let sub = select_columns(x, &screen.selected);
        (leading_left_singular(sub.view(), DEFAULT_TOL, DEFAULT_MAX_ITER)?, false)
    };
    Ok(ClusterResult {
        labels: sign_labels(&sp.vector),
        method: ClusterMethod::IfPca,
        selected: Some(screen.selected),
        singular: Some(sp),
        fallback_used: fallback,
        objective: None,
        mu_hat: None,
    })
}

/// Globally optimal two-cluster split of points on a line.
///
/// Points at or below the split get `−1`. Splits are only placed between
/// distinct values; ties in the objective go to the smaller split. Constant
/// input yields a single cluster labelled `+1`.
pub fn kmeans_1d_two(values: &[f64]) -> Result<Vec<i8>> {
    let n = values.len();
    if n < 2 {
        return Err(invalid("kmeans_1d_two needs at least two values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("kmeans_1d_two needs finite values"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let total: f64 = sorted.iter().sum();
    // Minimizing the within-cluster sum of squares is maximizing
    // S_L²/k + S_R²/(n − k).
    let mut best: Option<(f64, usize)> = None;
    let mut left = 0.0;
    for k in 1..n {
        left += sorted[k - 1];
        if sorted[k - 1] == sorted[k] {
            continue;
        }
        let right = total - left;
        let score = left * left / k as f64 + right * right / (n - k) as f64;
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, k));
        }
    }
    let mut labels = vec![1i8; n];
    if let Some((_, k)) = best {
        for &i in &order[..k] {
            labels[i] = -1;
        }
    }
    Ok(labels)
}
