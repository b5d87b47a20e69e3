//! FairPick: shrink the per-cluster distribution difference between groups
//! by deleting records.
//!
//! Each class stratum is clustered with K-means, the group-by-cluster counts
//! give a `dvar` matrix, and deletions are chosen so that every entry moves
//! to `T` times its original value. With the group totals held fixed the
//! post-deletion `dvar` is linear in the deletions, so the real-valued
//! problem is a box-constrained least-squares fit solved by projected
//! gradient descent. Integer plans come from an exact per-cluster search for
//! two groups and largest-remainder rounding otherwise.
//!
//! The fit alone is degenerate: deleting from both groups of a cluster in
//! proportion leaves its `dvar` unchanged, so on large strata the integer
//! optimum buys residuals of order 1e-9 with thousands of extra deletions.
//! An optional penalty on the deleted fraction of each group (off by
//! default) picks the sparse end of that family instead.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, GroupAssignment};
use crate::kmeans::{kmeans, min_max_scale, KMeansError, MAX_ITERATIONS};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum FairPickError {
    #[error("no K >= 1 leaves more than {min_per_cluster} records of every group in every cluster; try a smaller min_per_cluster")]
    NoFeasibleK { min_per_cluster: usize },
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("group {group} has no records, so its distribution is undefined")]
    EmptyGroup { group: usize },
    #[error("the groups other than {group} have no records")]
    EmptyComplement { group: usize },
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("solver did not reach stationarity after {iterations} iterations (objective {residual:e})")]
    NotStationary { iterations: usize, residual: f64 },
    #[error("plan deletes {requested} records from group {group}, cluster {cluster}, which holds {available}")]
    PlanExceedsCell { group: usize, cluster: usize, requested: usize, available: usize },
    #[error("plan shape does not match the clustering")]
    PlanShape,
    #[error("group labels cover {labels} records but the dataset has {records}")]
    LabelCount { labels: usize, records: usize },
    #[error("class `{class}`: {source}")]
    Class {
        class: String,
        #[source]
        source: Box<FairPickError>,
    },
}

pub type Result<T> = std::result::Result<T, FairPickError>;

/// Number of groups after binarization.
pub const GROUPS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteredData<T> {
    pub k: usize,
    /// Centers in min-max-scaled feature space.
    pub centers: Vec<Vec<T>>,
    pub assignment: Vec<usize>,
    /// Group row of every record.
    pub group_of: Vec<usize>,
    /// `counts[i][j] = sum(G_i, C_j)`.
    pub counts: Vec<Vec<usize>>,
    pub group_totals: Vec<usize>,
}

impl<T: Real> ClusteredData<T> {
    /// A clustering known only through its count matrix.
    pub fn from_counts(counts: Vec<Vec<usize>>) -> Self {
        let k = counts.first().map_or(0, Vec::len);
        let group_totals = counts.iter().map(|row| row.iter().sum()).collect();
        ClusteredData { k, centers: vec![], assignment: vec![], group_of: vec![], counts, group_totals }
    }

    fn from_assignment(k: usize, centers: Vec<Vec<T>>, assignment: Vec<usize>, group_of: Vec<usize>, n: usize) -> Self {
        let mut counts = vec![vec![0; k]; n];
        for (&c, &g) in assignment.iter().zip(&group_of) {
            counts[g][c] += 1;
        }
        let group_totals = counts.iter().map(|row| row.iter().sum()).collect();
        ClusteredData { k, centers, assignment, group_of, counts, group_totals }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DvarMatrix<T> {
    pub values: Vec<Vec<T>>,
}

/// `dvar(G_i, C_j)` for a count matrix and per-group denominators.
fn dvar_with<T: Real>(counts: &[Vec<T>], totals: &[T]) -> Result<Vec<Vec<T>>> {
    let n = counts.len();
    let all: T = totals.iter().copied().sum();
    let k = counts.first().map_or(0, Vec::len);
    let mut out = vec![vec![T::zero(); k]; n];
    for i in 0..n {
        let rest = all - totals[i];
        if totals[i] <= T::zero() {
            return Err(FairPickError::EmptyGroup { group: i });
        }
        if rest <= T::zero() {
            return Err(FairPickError::EmptyComplement { group: i });
        }
        for j in 0..k {
            let others: T = (0..n).filter(|&o| o != i).map(|o| counts[o][j]).sum();
            out[i][j] = counts[i][j] / totals[i] - others / rest;
        }
    }
    Ok(out)
}

fn to_real<T: Real>(m: &[Vec<usize>]) -> Vec<Vec<T>> {
    m.iter().map(|row| row.iter().map(|&c| T::from_count(c)).collect()).collect()
}

pub fn dvar_of_counts<T: Real>(counts: &[Vec<usize>]) -> Result<DvarMatrix<T>> {
    let totals: Vec<T> = counts.iter().map(|row| T::from_count(row.iter().sum())).collect();
    Ok(DvarMatrix { values: dvar_with(&to_real(counts), &totals)? })
}

pub fn compute_dvar<T: Real>(cd: &ClusteredData<T>) -> Result<DvarMatrix<T>> {
    dvar_of_counts(&cd.counts)
}

pub const DEFAULT_DELETION_PENALTY: f64 = 0.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub threshold: f64,
    /// Cost of deleting a whole group, added to the squared residual as
    /// `penalty * sum del[i][j] / D_i`. Zero gives the plain least-squares fit.
    pub deletion_penalty: f64,
    /// Extra passes that re-anchor the denominators at post-deletion totals.
    pub refine_passes: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SolverConfig {
    pub fn new(threshold: f64) -> Self {
        SolverConfig {
            threshold,
            deletion_penalty: DEFAULT_DELETION_PENALTY,
            refine_passes: 5,
            tolerance: 1e-10,
            max_iterations: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeletionPlan {
    /// `del[i][j]` records to remove from group `i`, cluster `j`.
    pub del: Vec<Vec<usize>>,
    /// Cells where the unconstrained least-squares solution asks for a
    /// negative deletion (a duplication), which is ignored.
    pub ignored_negative_requests: usize,
    /// Squared residual of the integer plan under the denominators it was
    /// solved with.
    pub residual: f64,
    /// `residual` plus the deletion penalty; the quantity the search minimizes.
    pub objective: f64,
    /// Objective of the real-valued box-constrained solution.
    pub relaxed_objective: f64,
    /// Squared residual with the actual post-deletion group totals.
    pub actual_residual: f64,
    pub deletion_penalty: f64,
    pub threshold: f64,
    pub passes: usize,
    pub iterations: usize,
    pub k: usize,
}

impl DeletionPlan {
    pub fn total(&self) -> usize {
        self.del.iter().flatten().sum()
    }

    pub fn cells(&self) -> usize {
        self.del.iter().map(Vec::len).sum()
    }
}

/// One least-squares subproblem: targets and fixed denominators.
struct Linearized<'a> {
    counts: &'a [Vec<usize>],
    denominators: Vec<f64>,
    /// `T · dvar_pre`.
    target: &'a [Vec<f64>],
    penalty: f64,
}

impl Linearized<'_> {
    fn n(&self) -> usize {
        self.counts.len()
    }

    fn k(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    fn rest(&self, i: usize) -> f64 {
        self.denominators.iter().sum::<f64>() - self.denominators[i]
    }

    /// Residuals for deletions `del` (real-valued).
    fn residuals(&self, del: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (n, k) = (self.n(), self.k());
        let mut r = vec![vec![0.0; k]; n];
        for i in 0..n {
            let rest = self.rest(i);
            for j in 0..k {
                let own = (self.counts[i][j] as f64 - del[i][j]) / self.denominators[i];
                let others: f64 = (0..n).filter(|&o| o != i).map(|o| self.counts[o][j] as f64 - del[o][j]).sum();
                r[i][j] = own - others / rest - self.target[i][j];
            }
        }
        r
    }

    fn residual(&self, del: &[Vec<f64>]) -> f64 {
        self.residuals(del).iter().flatten().map(|v| v * v).sum()
    }

    fn objective(&self, del: &[Vec<f64>]) -> f64 {
        let deleted: f64 = del.iter().zip(&self.denominators).map(|(row, d)| row.iter().sum::<f64>() / d).sum();
        self.residual(del) + self.penalty * deleted
    }

    /// Gradient with respect to the scaled variables `x[i][j] = del[i][j] / D_i`.
    fn gradient(&self, del: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let r = self.residuals(del);
        let (n, k) = (self.n(), self.k());
        let mut g = vec![vec![0.0; k]; n];
        // d r[i][j] / d x[i][j] = -1; d r[o][j] / d x[i][j] = D_i / rest(o).
        for i in 0..n {
            for j in 0..k {
                let mut s = -r[i][j];
                for o in (0..n).filter(|&o| o != i) {
                    s += r[o][j] * self.denominators[i] / self.rest(o);
                }
                g[i][j] = 2.0 * s + self.penalty;
            }
        }
        g
    }

    /// Upper bound on the gradient's Lipschitz constant in scaled variables.
    fn lipschitz(&self) -> f64 {
        let n = self.n();
        let mut fro = 0.0;
        for r in 0..n {
            for c in 0..n {
                let a = if r == c { 1.0 } else { self.denominators[c] / self.rest(r) };
                fro += a * a;
            }
        }
        2.0 * fro
    }
}

/// Result of the real-valued solve.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedSolution {
    pub del: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every iteration, starting from the zero plan.
    pub history: Vec<f64>,
}

fn descend(lin: &Linearized, tol: f64, max_iterations: usize, boxed: bool) -> Result<RelaxedSolution> {
    let (n, k) = (lin.n(), lin.k());
    let l = lin.lipschitz();
    let upper: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..k).map(|j| lin.counts[i][j] as f64 / lin.denominators[i]).collect())
        .collect();
    let mut x = vec![vec![0.0; k]; n];
    let to_del = |x: &[Vec<f64>]| -> Vec<Vec<f64>> {
        x.iter().enumerate().map(|(i, row)| row.iter().map(|v| v * lin.denominators[i]).collect()).collect()
    };
    let mut history = vec![lin.objective(&to_del(&x))];
    for it in 0..max_iterations {
        let g = lin.gradient(&to_del(&x));
        let mut mapping = 0.0;
        let mut next = x.clone();
        for i in 0..n {
            for j in 0..k {
                let mut v = x[i][j] - g[i][j] / l;
                if boxed {
                    v = v.clamp(0.0, upper[i][j]);
                }
                mapping += (l * (x[i][j] - v)).powi(2);
                next[i][j] = v;
            }
        }
        if mapping.sqrt() <= tol {
            let del = to_del(&x);
            return Ok(RelaxedSolution { objective: lin.objective(&del), del, iterations: it, history });
        }
        x = next;
        history.push(lin.objective(&to_del(&x)));
    }
    Err(FairPickError::NotStationary { iterations: max_iterations, residual: *history.last().unwrap_or(&f64::NAN) })
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(FairPickError::InvalidThreshold(t))
    }
}

fn targets(counts: &[Vec<usize>], threshold: f64) -> Result<Vec<Vec<f64>>> {
    let d: DvarMatrix<f64> = dvar_of_counts(counts)?;
    Ok(d.values.into_iter().map(|row| row.into_iter().map(|v| v * threshold).collect()).collect())
}

/// Box-constrained real-valued solution with the denominators fixed at the
/// pre-deletion totals.
pub fn solve_relaxed(counts: &[Vec<usize>], cfg: &SolverConfig) -> Result<RelaxedSolution> {
    check_threshold(cfg.threshold)?;
    let target = targets(counts, cfg.threshold)?;
    let lin = Linearized { counts, denominators: totals_f64(counts), target: &target, penalty: cfg.deletion_penalty };
    descend(&lin, cfg.tolerance, cfg.max_iterations, true)
}

fn totals_f64(counts: &[Vec<usize>]) -> Vec<f64> {
    counts.iter().map(|row| row.iter().sum::<usize>() as f64).collect()
}

/// Best `(cost, a, b)` for one cluster with `a <= amax` deletions from group
/// 0 and `b <= bmax` from group 1. Ties go to fewer deletions.
fn best_cell(u: f64, d0: f64, d1: f64, penalty: f64, amax: usize, bmax: usize) -> (f64, usize, usize) {
    // r0 = u - a/d0 + b/d1 and r1 = -r0, so the cell objective is
    // 2 r0² + penalty (a/d0 + b/d1), minimized over b at r0 = -penalty/4.
    let cost = |a: usize, b: usize| {
        let r = u - a as f64 / d0 + b as f64 / d1;
        2.0 * r * r + penalty * (a as f64 / d0 + b as f64 / d1)
    };
    let mut best = (f64::INFINITY, 0, 0);
    for a in 0..=amax {
        let ideal = ((a as f64 / d0 - u - penalty / 4.0) * d1).max(0.0);
        let lo = (ideal.floor() as usize).min(bmax);
        for b in [lo, (lo + 1).min(bmax)] {
            let v = cost(a, b);
            if v < best.0 - 1e-15 || ((v - best.0).abs() <= 1e-15 && a + b < best.1 + best.2) {
                best = (v, a, b);
            }
        }
    }
    best
}

/// Exact integer optimum for two groups subject to every non-empty group
/// keeping at least one record. The objective separates by cluster, and the
/// keep-one constraint on a group holds exactly when some cluster keeps one
/// of its records, so it is enough to try each cluster as the one carrying
/// the cap.
fn exact_pair(lin: &Linearized) -> Vec<Vec<usize>> {
    let (d0, d1) = (lin.denominators[0], lin.denominators[1]);
    let k = lin.k();
    let c = lin.counts;
    let u: Vec<f64> = (0..k).map(|j| c[0][j] as f64 / d0 - c[1][j] as f64 / d1 - lin.target[0][j]).collect();
    // cells[j][m]: bit 0 caps group 0, bit 1 caps group 1.
    let cells: Vec<[Option<(f64, usize, usize)>; 4]> = (0..k)
        .map(|j| {
            let mut v = [None; 4];
            for (m, slot) in v.iter_mut().enumerate() {
                let cap0 = m & 1 != 0;
                let cap1 = m & 2 != 0;
                if (cap0 && c[0][j] == 0) || (cap1 && c[1][j] == 0) {
                    continue;
                }
                let amax = if cap0 { c[0][j] - 1 } else { c[0][j] };
                let bmax = if cap1 { c[1][j] - 1 } else { c[1][j] };
                *slot = Some(best_cell(u[j], d0, d1, lin.penalty, amax, bmax));
            }
            v
        })
        .collect();
    let free: Vec<(f64, usize, usize)> = cells.iter().map(|v| v[0].expect("uncapped cell exists")).collect();
    let need0 = c[0].iter().sum::<usize>() > 0;
    let need1 = c[1].iter().sum::<usize>() > 0;
    let choices0: Vec<Option<usize>> = if need0 { (0..k).map(Some).collect() } else { vec![None] };
    let choices1: Vec<Option<usize>> = if need1 { (0..k).map(Some).collect() } else { vec![None] };

    let mut best: Option<(f64, usize, Vec<(usize, usize)>)> = None;
    for &j0 in &choices0 {
        for &j1 in &choices1 {
            let mut cost = 0.0;
            let mut picks = Vec::with_capacity(k);
            let mut ok = true;
            for j in 0..k {
                let m = usize::from(j0 == Some(j)) | (usize::from(j1 == Some(j)) << 1);
                let Some((v, a, b)) = (if m == 0 { Some(free[j]) } else { cells[j][m] }) else {
                    ok = false;
                    break;
                };
                cost += v;
                picks.push((a, b));
            }
            if !ok {
                continue;
            }
            let total: usize = picks.iter().map(|(a, b)| a + b).sum();
            let better = best.as_ref().map_or(true, |(bc, bt, _)| {
                cost < bc - 1e-12 || ((cost - bc).abs() <= 1e-12 && total < *bt)
            });
            if better {
                best = Some((cost, total, picks));
            }
        }
    }
    let (_, _, picks) = best.expect("some cluster can keep a record in each non-empty group");
    vec![picks.iter().map(|p| p.0).collect(), picks.iter().map(|p| p.1).collect()]
}

/// Largest-remainder rounding within each group.
fn round_by_group(real: &[Vec<f64>], counts: &[Vec<usize>]) -> Vec<Vec<usize>> {
    real.iter()
        .zip(counts)
        .map(|(row, caps)| {
            let want = row.iter().sum::<f64>().round() as usize;
            let mut out: Vec<usize> = row.iter().map(|v| v.max(0.0).floor() as usize).collect();
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| {
                let fa = row[a] - row[a].floor();
                let fb = row[b] - row[b].floor();
                fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
            });
            let mut have: usize = out.iter().sum();
            for &j in order.iter().cycle().take(row.len() * 2) {
                if have >= want {
                    break;
                }
                if out[j] < caps[j] {
                    out[j] += 1;
                    have += 1;
                }
            }
            out
        })
        .collect()
}

/// Keeps at least one record per group by undoing the deletions whose
/// removal costs the least.
fn keep_one_per_group(lin: &Linearized, del: &mut [Vec<usize>]) {
    for i in 0..del.len() {
        let total: usize = lin.counts[i].iter().sum();
        while total > 0 && del[i].iter().sum::<usize>() >= total {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..del[i].len() {
                if del[i][j] == 0 {
                    continue;
                }
                del[i][j] -= 1;
                let v = lin.objective(&to_f64(del));
                del[i][j] += 1;
                if best.map_or(true, |(b, _)| v < b) {
                    best = Some((v, j));
                }
            }
            let (_, j) = best.expect("some cell has deletions");
            del[i][j] -= 1;
        }
    }
}

fn to_f64(m: &[Vec<usize>]) -> Vec<Vec<f64>> {
    m.iter().map(|row| row.iter().map(|&v| v as f64).collect()).collect()
}

/// Objective with the real post-deletion totals in the denominators.
pub fn actual_residual(counts: &[Vec<usize>], del: &[Vec<usize>], threshold: f64) -> Result<f64> {
    let target = targets(counts, threshold)?;
    let post: Vec<Vec<usize>> =
        counts.iter().zip(del).map(|(c, d)| c.iter().zip(d).map(|(a, b)| a - b).collect()).collect();
    let d: DvarMatrix<f64> = dvar_of_counts(&post)?;
    Ok(d.values.iter().flatten().zip(target.iter().flatten()).map(|(a, b)| (a - b).powi(2)).sum())
}

/// Deletion plan bringing every `dvar` entry toward `threshold` times its
/// current value.
pub fn solve_deletions<T: Real>(cd: &ClusteredData<T>, cfg: &SolverConfig) -> Result<DeletionPlan> {
    check_threshold(cfg.threshold)?;
    let counts = &cd.counts;
    let target = targets(counts, cfg.threshold)?;
    let n = counts.len();
    let mut denominators = totals_f64(counts);

    // Negative requests are counted on the plain least-squares fit.
    let pre = Linearized { counts, denominators: denominators.clone(), target: &target, penalty: 0.0 };
    let unconstrained = descend(&pre, cfg.tolerance, cfg.max_iterations, false)?;
    let ignored_negative_requests = unconstrained.del.iter().flatten().filter(|&&v| v < -1e-9).count();

    let mut best: Option<(f64, DeletionPlan)> = None;
    let mut previous: Option<Vec<Vec<usize>>> = None;
    for pass in 0..=cfg.refine_passes {
        let lin = Linearized { counts, denominators: denominators.clone(), target: &target, penalty: cfg.deletion_penalty };
        let relaxed = descend(&lin, cfg.tolerance, cfg.max_iterations, true)?;
        let mut del = if n == GROUPS { exact_pair(&lin) } else { round_by_group(&relaxed.del, counts) };
        keep_one_per_group(&lin, &mut del);
        if previous.as_ref() == Some(&del) {
            break;
        }
        let plan = DeletionPlan {
            residual: lin.residual(&to_f64(&del)),
            objective: lin.objective(&to_f64(&del)),
            relaxed_objective: relaxed.objective,
            actual_residual: actual_residual(counts, &del, cfg.threshold)?,
            deletion_penalty: cfg.deletion_penalty,
            ignored_negative_requests,
            threshold: cfg.threshold,
            passes: pass + 1,
            iterations: relaxed.iterations,
            k: cd.k,
            del: del.clone(),
        };
        let score = plan.actual_residual + cfg.deletion_penalty * deleted_fraction(counts, &del);
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            best = Some((score, plan));
        }
        denominators = counts
            .iter()
            .zip(&del)
            .map(|(c, d)| (c.iter().sum::<usize>() - d.iter().sum::<usize>()) as f64)
            .collect();
        previous = Some(del);
    }
    Ok(best.expect("at least one pass runs").1)
}

/// `sum del[i][j] / D_i` with the pre-deletion group totals.
fn deleted_fraction(counts: &[Vec<usize>], del: &[Vec<usize>]) -> f64 {
    counts
        .iter()
        .zip(del)
        .map(|(c, d)| d.iter().sum::<usize>() as f64 / c.iter().sum::<usize>().max(1) as f64)
        .sum()
}

/// Feature matrix for clustering: every attribute except the class and the
/// protected column, min-max scaled.
pub fn feature_matrix<T: Real>(subset: &Dataset, protected_column: &str) -> Vec<Vec<T>> {
    let skip = subset.schema().column_index(protected_column);
    let cols: Vec<usize> = subset.attribute_columns().into_iter().filter(|&c| Some(c) != skip).collect();
    let mut points: Vec<Vec<T>> =
        subset.records().iter().map(|r| cols.iter().map(|&c| T::lit(r.value(c))).collect()).collect();
    min_max_scale(&mut points);
    points
}

fn check_labels(subset: &Dataset, groups: &GroupAssignment) -> Result<()> {
    if groups.labels.len() != subset.len() {
        return Err(FairPickError::LabelCount { labels: groups.labels.len(), records: subset.len() });
    }
    Ok(())
}

pub fn aggregate_features<T: Real>(
    subset: &Dataset,
    groups: &GroupAssignment,
    k: usize,
    seed: u64,
) -> Result<ClusteredData<T>> {
    check_labels(subset, groups)?;
    let points = feature_matrix::<T>(subset, &groups.attribute);
    clustered(&points, groups, k, seed)
}

fn clustered<T: Real>(points: &[Vec<T>], groups: &GroupAssignment, k: usize, seed: u64) -> Result<ClusteredData<T>> {
    let km = kmeans(points, k, seed, MAX_ITERATIONS)?;
    let group_of = groups.labels.iter().map(|g| g.index()).collect();
    Ok(ClusteredData::from_assignment(k, km.centers, km.assignment, group_of, GROUPS))
}

/// Every cell holds more than `min_per_cluster` records.
pub fn satisfies_min(counts: &[Vec<usize>], min_per_cluster: usize) -> bool {
    counts.iter().flatten().all(|&c| c > min_per_cluster)
}

/// Largest K whose seeded clustering leaves more than `min_per_cluster`
/// records of every group in every cluster, searching down from the largest
/// K the counts allow (optionally capped at `max_k`).
pub fn choose_k<T: Real>(
    subset: &Dataset,
    groups: &GroupAssignment,
    min_per_cluster: usize,
    max_k: Option<usize>,
    seed: u64,
) -> Result<(usize, ClusteredData<T>)> {
    check_labels(subset, groups)?;
    let min = min_per_cluster.max(1);
    let smallest = [crate::dataset::GroupTag::Protected, crate::dataset::GroupTag::Unprotected]
        .iter()
        .map(|&t| groups.count(t))
        .min()
        .unwrap_or(0);
    let mut k_max = (subset.len() / (min * GROUPS)).min(smallest / (min + 1));
    if let Some(cap) = max_k {
        k_max = k_max.min(cap);
    }
    let points = feature_matrix::<T>(subset, &groups.attribute);
    for k in (1..=k_max).rev() {
        let cd = clustered(&points, groups, k, seed)?;
        if satisfies_min(&cd.counts, min) {
            return Ok((k, cd));
        }
    }
    Err(FairPickError::NoFeasibleK { min_per_cluster })
}

/// Removes `del[i][j]` uniformly chosen records from every (group, cluster)
/// cell. Survivors keep their original values and order.
pub fn apply_plan<T: Real>(subset: &Dataset, cd: &ClusteredData<T>, plan: &DeletionPlan, seed: u64) -> Result<Dataset> {
    Ok(subset.filter(&keep_mask(cd, plan, seed)?))
}

fn keep_mask<T: Real>(cd: &ClusteredData<T>, plan: &DeletionPlan, seed: u64) -> Result<Vec<bool>> {
    if plan.del.len() != cd.counts.len() || plan.del.iter().any(|row| row.len() != cd.k) {
        return Err(FairPickError::PlanShape);
    }
    let mut cells: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); cd.k]; cd.counts.len()];
    for (r, (&c, &g)) in cd.assignment.iter().zip(&cd.group_of).enumerate() {
        cells[g][c].push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![true; cd.assignment.len()];
    for (i, row) in plan.del.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            let members = &cells[i][j];
            if d > members.len() {
                return Err(FairPickError::PlanExceedsCell { group: i, cluster: j, requested: d, available: members.len() });
            }
            for pick in rand::seq::index::sample(&mut rng, members.len(), d) {
                keep[members[pick]] = false;
            }
        }
    }
    Ok(keep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairPickConfig {
    pub threshold: f64,
    pub min_per_cluster: usize,
    pub max_k: Option<usize>,
    pub refine_passes: usize,
    pub deletion_penalty: f64,
}

impl FairPickConfig {
    pub fn new(threshold: f64) -> Self {
        FairPickConfig {
            threshold,
            min_per_cluster: 10,
            max_k: None,
            refine_passes: 5,
            deletion_penalty: DEFAULT_DELETION_PENALTY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPlan {
    pub class: String,
    pub records: usize,
    pub plan: DeletionPlan,
}

#[derive(Clone, Debug)]
pub struct FairPickOutcome {
    pub dataset: Dataset,
    /// Group labels of the surviving records.
    pub groups: GroupAssignment,
    pub plans: Vec<ClassPlan>,
}

fn class_seed(seed: u64, class: usize) -> u64 {
    seed ^ (class as u64 + 1).wrapping_mul(0xa076_1d64_78bd_642f)
}

fn run_class<T: Real>(
    train: &Dataset,
    groups: &GroupAssignment,
    rows: &[usize],
    cfg: &FairPickConfig,
    seed: u64,
) -> Result<(Vec<bool>, DeletionPlan)> {
    let subset = train.subset(rows);
    let sub_groups = groups.subset(rows);
    if cfg.threshold == 1.0 {
        // Every target equals the current value, so nothing is deleted.
        let counts = vec![vec![0]; GROUPS];
        let plan = DeletionPlan {
            del: counts,
            ignored_negative_requests: 0,
            residual: 0.0,
            objective: 0.0,
            relaxed_objective: 0.0,
            actual_residual: 0.0,
            deletion_penalty: cfg.deletion_penalty,
            threshold: 1.0,
            passes: 0,
            iterations: 0,
            k: 0,
        };
        return Ok((vec![true; rows.len()], plan));
    }
    let (_, cd) = choose_k::<T>(&subset, &sub_groups, cfg.min_per_cluster, cfg.max_k, seed)?;
    let solver = SolverConfig {
        refine_passes: cfg.refine_passes,
        deletion_penalty: cfg.deletion_penalty,
        ..SolverConfig::new(cfg.threshold)
    };
    let plan = solve_deletions(&cd, &solver)?;
    let keep = keep_mask(&cd, &plan, seed.wrapping_add(1))?;
    Ok((keep, plan))
}

/// Runs the mitigation separately on every class stratum of `train` and
/// returns the surviving records in their original order.
pub fn fairpick<T: Real>(
    train: &Dataset,
    groups: &GroupAssignment,
    cfg: &FairPickConfig,
    seed: u64,
) -> Result<FairPickOutcome> {
    check_labels(train, groups)?;
    check_threshold(cfg.threshold)?;
    let class_col = train.class_index();
    let class_names: Vec<String> = train.encoder(class_col).map(|e| e.values().to_vec()).unwrap_or_default();
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); class_names.len()];
    for i in 0..train.len() {
        strata[train.class_of(i)].push(i);
    }
    let results: Vec<Result<Option<(Vec<bool>, DeletionPlan)>>> = strata
        .par_iter()
        .enumerate()
        .map(|(c, rows)| {
            if rows.is_empty() {
                return Ok(None);
            }
            run_class::<T>(train, groups, rows, cfg, class_seed(seed, c)).map(Some).map_err(|e| {
                FairPickError::Class { class: class_names[c].clone(), source: Box::new(e) }
            })
        })
        .collect();
    let mut keep = vec![true; train.len()];
    let mut plans = Vec::new();
    for (c, res) in results.into_iter().enumerate() {
        if let Some((mask, plan)) = res? {
            for (&row, k) in strata[c].iter().zip(mask) {
                keep[row] = k;
            }
            plans.push(ClassPlan { class: class_names[c].clone(), records: strata[c].len(), plan });
        }
    }
    let kept: Vec<usize> = (0..train.len()).filter(|&i| keep[i]).collect();
    Ok(FairPickOutcome { dataset: train.subset(&kept), groups: groups.subset(&kept), plans })
}
