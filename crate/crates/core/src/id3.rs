//! ID3 decision trees, plain and differentially private.
//!
//! Both variants share one recursive builder. What differs is the source of
//! counts: the plain tree reads exact counts, the private tree perturbs every
//! count with Laplace noise (scale `1/ε` at leaves, `2m/ε` for split scoring,
//! `m` being the number of attributes still available at the node). With noise
//! switched off the private builder therefore produces exactly the plain tree.
//!
//! Split scoring uses `V_A = Σ_j Σ_c N_{j,c} · ln(N_{j,c} / N_j)`, which for exact
//! counts equals `-|T| · H(C | A)`, so its argmax is the information-gain argmax.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ColumnKind, Dataset, Record};
use crate::scalar::{argmax, Real};

#[derive(Debug, Error, PartialEq)]
pub enum Id3Error {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("evaluation set is empty")]
    EmptyEvaluationSet,
    #[error("privacy budget must be positive, got {0}")]
    InvalidEpsilon(f64),
}

pub type Result<T> = std::result::Result<T, Id3Error>;

/// Floor applied to noisy counts inside the logarithm of the split score.
pub const LOG_FLOOR: f64 = 1e-9;

/// Number of quantile bins for numeric attributes.
pub const NUMERIC_BINS: usize = 10;

/// Inverse-CDF Laplace draw with location 0.
///
/// `u` must lie in the open interval (0, 1); callers resample on the
/// endpoints.
pub fn sample_laplace<T: Real>(scale: T, u: T) -> T {
    let half = T::lit(0.5);
    let centered = u - half;
    let sign = if centered < T::zero() { -T::one() } else { T::one() };
    -scale * sign * (T::one() - T::lit(2.0) * centered.abs()).ln()
}

/// Seeded Laplace generator.
#[derive(Debug, Clone)]
pub struct LaplaceSampler {
    rng: ChaCha8Rng,
}

impl LaplaceSampler {
    pub fn new(seed: u64) -> Self {
        LaplaceSampler { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn draw<T: Real>(&mut self, scale: T) -> T {
        loop {
            let u: f64 = self.rng.gen();
            if u > 0.0 && u < 1.0 {
                return sample_laplace(scale, T::lit(u));
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub epsilon: f64,
    /// Test hook: when false every count is exact.
    pub noise_enabled: bool,
}

impl DpConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        let cfg = DpConfig { epsilon, noise_enabled: true };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.epsilon.is_finite() {
            Ok(())
        } else {
            Err(Id3Error::InvalidEpsilon(self.epsilon))
        }
    }
}

/// Maps a column value to a branch index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttributeCoder {
    /// Branch per categorical code; `arity` is the encoder's domain size.
    Categorical { arity: usize },
    /// Branch `b` holds values with exactly `b` edges strictly below them.
    Numeric { edges: Vec<f64> },
}

impl AttributeCoder {
    pub fn arity(&self) -> usize {
        match self {
            AttributeCoder::Categorical { arity } => *arity,
            AttributeCoder::Numeric { edges } => edges.len() + 1,
        }
    }

    pub fn bin(&self, value: f64) -> usize {
        match self {
            AttributeCoder::Categorical { .. } => value as usize,
            AttributeCoder::Numeric { edges } => edges.partition_point(|&e| e < value),
        }
    }

    /// Quantile edges of `values` for `bins` bins, deduplicated, with edges at
    /// or above the maximum dropped so no bin is empty by construction.
    pub fn quantile(mut values: Vec<f64>, bins: usize) -> Self {
        values.sort_by(f64::total_cmp);
        let mut edges: Vec<f64> = Vec::new();
        if let Some(&max) = values.last() {
            let n = values.len();
            for k in 1..bins {
                let e = values[(k * (n - 1)) / bins];
                if e < max && edges.last().map_or(true, |&last| e > last) {
                    edges.push(e);
                }
            }
        }
        AttributeCoder::Numeric { edges }
    }
}

/// Branch coders for every non-class column, derived from a training set.
pub fn fit_coders(train: &Dataset) -> Vec<(usize, AttributeCoder)> {
    train
        .attribute_columns()
        .into_iter()
        .map(|col| {
            let coder = match train.schema().columns[col].kind {
                ColumnKind::Categorical => AttributeCoder::Categorical {
                    arity: train.encoder(col).map(|e| e.len()).unwrap_or(0),
                },
                ColumnKind::Numeric => {
                    AttributeCoder::quantile(train.records().iter().map(|r| r.value(col)).collect(), NUMERIC_BINS)
                }
            };
            (col, coder)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "node")]
pub enum TreeNode<T> {
    Leaf {
        probs: Vec<T>,
    },
    Split {
        /// Index into the tree's coder list.
        attribute: usize,
        /// Class distribution used for values outside the coder's domain.
        fallback: Vec<T>,
        children: Vec<TreeNode<T>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<T> {
    pub root: TreeNode<T>,
    pub depth_limit: usize,
    pub class_count: usize,
    /// `(column index, coder)` for every candidate attribute.
    pub coders: Vec<(usize, AttributeCoder)>,
}

/// Score of one candidate attribute at one node.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitScore<T> {
    /// Index into the coder list.
    pub attribute: usize,
    pub score: T,
    pub branch_counts: Vec<T>,
    pub branch_class_counts: Vec<Vec<T>>,
}

/// `Σ_j Σ_c N_{j,c} ln(N_{j,c} / N_j)` with counts floored at [`LOG_FLOOR`]
/// inside the logarithm only.
pub fn split_score<T: Real>(branch_counts: &[T], branch_class_counts: &[Vec<T>]) -> T {
    let floor = T::lit(LOG_FLOOR);
    let mut v = T::zero();
    for (nj, row) in branch_counts.iter().zip(branch_class_counts) {
        for &njc in row {
            if njc == T::zero() {
                continue;
            }
            v += njc * (njc.max(floor) / nj.max(floor)).ln();
        }
    }
    v
}

/// Source of the counts the builder sees.
trait Counts<T: Real> {
    fn exact(&self) -> bool;
    fn leaf(&mut self, count: usize) -> T;
    fn split(&mut self, count: usize, remaining_attributes: usize) -> T;
}

struct ExactCounts;

impl<T: Real> Counts<T> for ExactCounts {
    fn exact(&self) -> bool {
        true
    }
    fn leaf(&mut self, count: usize) -> T {
        T::from_count(count)
    }
    fn split(&mut self, count: usize, _: usize) -> T {
        T::from_count(count)
    }
}

struct NoisyCounts {
    epsilon: f64,
    sampler: LaplaceSampler,
}

impl<T: Real> Counts<T> for NoisyCounts {
    fn exact(&self) -> bool {
        false
    }

    fn leaf(&mut self, count: usize) -> T {
        let scale = T::lit(1.0 / self.epsilon);
        loop {
            let n = T::from_count(count) + self.sampler.draw(scale);
            if n >= T::zero() {
                return n;
            }
        }
    }

    fn split(&mut self, count: usize, remaining_attributes: usize) -> T {
        let scale = T::lit(2.0 * remaining_attributes as f64 / self.epsilon);
        T::from_count(count) + self.sampler.draw(scale)
    }
}

struct Builder<'a, C> {
    ds: &'a Dataset,
    coders: &'a [(usize, AttributeCoder)],
    class_count: usize,
    counts: C,
}

fn normalize<T: Real>(counts: &[T]) -> Option<Vec<T>> {
    let total: T = counts.iter().copied().sum();
    (total > T::zero()).then(|| counts.iter().map(|&c| c / total).collect())
}

impl<C> Builder<'_, C> {
    fn class_counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count];
        for &r in rows {
            counts[self.ds.class_of(r)] += 1;
        }
        counts
    }

    fn leaf<T: Real>(&mut self, rows: &[usize], parent: &[T]) -> TreeNode<T>
    where
        C: Counts<T>,
    {
        let noisy: Vec<T> = self.class_counts(rows).into_iter().map(|c| self.counts.leaf(c)).collect();
        TreeNode::Leaf { probs: normalize(&noisy).unwrap_or_else(|| parent.to_vec()) }
    }

    fn scores<T: Real>(&mut self, rows: &[usize], attrs: &[usize]) -> Vec<SplitScore<T>>
    where
        C: Counts<T>,
    {
        let m = attrs.len();
        attrs
            .iter()
            .map(|&a| {
                let (col, coder) = &self.coders[a];
                let arity = coder.arity();
                let mut nj = vec![0usize; arity];
                let mut njc = vec![vec![0usize; self.class_count]; arity];
                for &r in rows {
                    let b = coder.bin(self.ds.records()[r].value(*col));
                    if b < arity {
                        nj[b] += 1;
                        njc[b][self.ds.class_of(r)] += 1;
                    }
                }
                let branch_counts: Vec<T> = nj.iter().map(|&n| self.counts.split(n, m)).collect();
                let branch_class_counts: Vec<Vec<T>> = njc
                    .iter()
                    .map(|row| row.iter().map(|&n| self.counts.split(n, m)).collect())
                    .collect();
                SplitScore {
                    attribute: a,
                    score: split_score(&branch_counts, &branch_class_counts),
                    branch_counts,
                    branch_class_counts,
                }
            })
            .collect()
    }

    fn build<T: Real>(&mut self, rows: &[usize], attrs: &[usize], depth: usize, parent: &[T]) -> TreeNode<T>
    where
        C: Counts<T>,
    {
        if rows.is_empty() || attrs.is_empty() || depth == 0 {
            return self.leaf(rows, parent);
        }
        if self.counts.exact() {
            let counts = self.class_counts(rows);
            if counts.iter().filter(|&&c| c > 0).count() <= 1 {
                return self.leaf(rows, parent);
            }
        }

        let scores = self.scores::<T>(rows, attrs);
        let mut best = 0;
        for (i, s) in scores.iter().enumerate().skip(1) {
            if s.score > scores[best].score {
                best = i;
            }
        }
        let chosen = &scores[best];
        let mut class_totals = vec![T::zero(); self.class_count];
        for row in &chosen.branch_class_counts {
            for (t, &n) in class_totals.iter_mut().zip(row) {
                *t += n.max(T::zero());
            }
        }
        let fallback = normalize(&class_totals).unwrap_or_else(|| parent.to_vec());

        let attribute = chosen.attribute;
        let (col, coder) = &self.coders[attribute];
        let mut parts = vec![Vec::new(); coder.arity()];
        for &r in rows {
            let b = coder.bin(self.ds.records()[r].value(*col));
            if b < parts.len() {
                parts[b].push(r);
            }
        }
        let remaining: Vec<usize> = attrs.iter().copied().filter(|&a| a != attribute).collect();
        let children = parts
            .iter()
            .map(|part| self.build(part, &remaining, depth - 1, &fallback))
            .collect();
        TreeNode::Split { attribute, fallback, children }
    }
}

fn build_tree<T: Real, C: Counts<T>>(train: &Dataset, depth: usize, counts: C) -> Result<DecisionTree<T>> {
    if train.is_empty() {
        return Err(Id3Error::EmptyTrainingSet);
    }
    let coders = fit_coders(train);
    let class_count = train.class_count();
    let mut builder = Builder { ds: train, coders: &coders, class_count, counts };
    let rows: Vec<usize> = (0..train.len()).collect();
    let attrs: Vec<usize> = (0..coders.len()).collect();
    let uniform = vec![T::one() / T::from_count(class_count); class_count];
    let root = builder.build(&rows, &attrs, depth, &uniform);
    Ok(DecisionTree { root, depth_limit: depth, class_count, coders })
}

/// Plain ID3 on exact counts.
pub fn train_id3<T: Real>(train: &Dataset, depth: usize) -> Result<DecisionTree<T>> {
    build_tree(train, depth, ExactCounts)
}

/// DP-ID3: Laplace-perturbed counts at every scoring and leaf step, the same
/// budget `ε` passed to every recursive call.
pub fn train_dp_id3<T: Real>(train: &Dataset, depth: usize, dp: &DpConfig, seed: u64) -> Result<DecisionTree<T>> {
    dp.validate()?;
    if dp.noise_enabled {
        build_tree(train, depth, NoisyCounts { epsilon: dp.epsilon, sampler: LaplaceSampler::new(seed) })
    } else {
        build_tree(train, depth, ExactCounts)
    }
}

/// Exact split scores for every attribute over the whole training set, as the
/// root of [`train_id3`] would compute them.
pub fn root_split_scores<T: Real>(train: &Dataset) -> Vec<SplitScore<T>> {
    let coders = fit_coders(train);
    let mut builder = Builder { ds: train, coders: &coders, class_count: train.class_count(), counts: ExactCounts };
    let rows: Vec<usize> = (0..train.len()).collect();
    let attrs: Vec<usize> = (0..coders.len()).collect();
    builder.scores(&rows, &attrs)
}

impl<T: Real> DecisionTree<T> {
    pub fn predict_proba(&self, record: &Record) -> &[T] {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { probs } => return probs,
                TreeNode::Split { attribute, fallback, children } => {
                    let (col, coder) = &self.coders[*attribute];
                    match children.get(coder.bin(record.value(*col))) {
                        Some(child) => node = child,
                        None => return fallback,
                    }
                }
            }
        }
    }

    pub fn predict(&self, record: &Record) -> usize {
        argmax(self.predict_proba(record))
    }

    /// Number of internal nodes on the longest root-to-leaf path.
    pub fn max_depth(&self) -> usize {
        fn go<T>(n: &TreeNode<T>) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { children, .. } => 1 + children.iter().map(go).max().unwrap_or(0),
            }
        }
        go(&self.root)
    }

    pub fn node_count(&self) -> usize {
        fn go<T>(n: &TreeNode<T>) -> usize {
            match n {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { children, .. } => 1 + children.iter().map(go).sum::<usize>(),
            }
        }
        go(&self.root)
    }

    /// Every leaf vector, depth first.
    pub fn leaves(&self) -> Vec<&[T]> {
        fn go<'a, T>(n: &'a TreeNode<T>, out: &mut Vec<&'a [T]>) {
            match n {
                TreeNode::Leaf { probs } => out.push(probs),
                TreeNode::Split { children, .. } => children.iter().for_each(|c| go(c, out)),
            }
        }
        let mut out = Vec::new();
        go(&self.root, &mut out);
        out
    }

    /// Checks leaf normalization, the depth bound and that no attribute repeats
    /// along a path. Returns a description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        fn go<T: Real>(
            tree: &DecisionTree<T>,
            n: &TreeNode<T>,
            path: &mut Vec<usize>,
        ) -> std::result::Result<(), String> {
            match n {
                TreeNode::Leaf { probs } => {
                    if probs.len() != tree.class_count {
                        return Err(format!("leaf has {} entries", probs.len()));
                    }
                    if probs.iter().any(|&p| p < T::zero()) {
                        return Err("negative leaf probability".into());
                    }
                    let s: T = probs.iter().copied().sum();
                    // 1e-9 for f64; f32 cannot resolve that, so allow a few ulps.
                    let tol = (T::epsilon().as_f64() * probs.len() as f64 * 4.0).max(1e-9);
                    if (s.as_f64() - 1.0).abs() > tol {
                        return Err(format!("leaf sums to {s}"));
                    }
                    Ok(())
                }
                TreeNode::Split { attribute, children, .. } => {
                    if path.contains(attribute) {
                        return Err(format!("attribute {attribute} repeats on a path"));
                    }
                    if path.len() + 1 > tree.depth_limit {
                        return Err("depth limit exceeded".into());
                    }
                    path.push(*attribute);
                    for c in children {
                        go(tree, c, path)?;
                    }
                    path.pop();
                    Ok(())
                }
            }
        }
        go(self, &self.root, &mut Vec::new())
    }
}

/// Fraction of records whose argmax class matches the label.
pub fn accuracy<T: Real>(tree: &DecisionTree<T>, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Id3Error::EmptyEvaluationSet);
    }
    let correct = (0..ds.len()).filter(|&i| tree.predict(&ds.records()[i]) == ds.class_of(i)).count();
    Ok(correct as f64 / ds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnSpec, Schema};
    use approx::assert_relative_eq;

    fn schema(names: &[&str]) -> Schema {
        Schema {
            columns: names
                .iter()
                .map(|n| ColumnSpec { name: n.to_string(), kind: ColumnKind::Categorical })
                .collect(),
            class_column: names.last().unwrap().to_string(),
            protected: vec![],
            missing_tokens: vec![],
        }
    }

    fn table(names: &[&str], rows: &[&[&str]]) -> Dataset {
        let mut csv = names.join(",") + "\n";
        for r in rows {
            csv += &(r.join(",") + "\n");
        }
        Dataset::from_reader(csv.as_bytes(), &schema(names)).unwrap()
    }

    #[test]
    fn laplace_inverse_cdf_values() {
        assert_eq!(sample_laplace(3.0f64, 0.5), 0.0);
        assert_relative_eq!(sample_laplace(1.0f64, 0.75), 0.5f64.ln().abs(), epsilon = 1e-12);
        assert_relative_eq!(sample_laplace(2.0f64, 0.25), -2.0 * 2.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(sample_laplace(1.0f32, 0.75), 0.693_147_2, epsilon = 1e-6);
    }

    #[test]
    fn laplace_sampler_is_seeded() {
        let mut a = LaplaceSampler::new(5);
        let mut b = LaplaceSampler::new(5);
        for _ in 0..10 {
            assert_eq!(a.draw::<f64>(1.0), b.draw::<f64>(1.0));
        }
    }

    #[test]
    fn epsilon_must_be_positive() {
        assert!(DpConfig::new(0.0).is_err());
        assert!(DpConfig::new(-1.0).is_err());
        assert!(DpConfig::new(f64::NAN).is_err());
        assert!(DpConfig::new(0.5).is_ok());
    }

    fn perfect() -> Dataset {
        // `x` determines `y`; `noise` does not.
        table(
            &["noise", "x", "y"],
            &[
                &["p", "a", "0"],
                &["q", "a", "0"],
                &["p", "b", "1"],
                &["q", "b", "1"],
                &["p", "a", "0"],
                &["q", "b", "1"],
            ],
        )
    }

    #[test]
    fn perfect_attribute_is_chosen_at_root() {
        let ds = perfect();
        let tree = train_id3::<f64>(&ds, 3).unwrap();
        match &tree.root {
            TreeNode::Split { attribute, .. } => assert_eq!(tree.coders[*attribute].0, 1),
            leaf => panic!("expected split, got {leaf:?}"),
        }
        assert_eq!(accuracy(&tree, &ds).unwrap(), 1.0);
        tree.check_invariants().unwrap();
    }

    #[test]
    fn depth_zero_is_global_frequencies() {
        let ds = table(&["x", "y"], &[&["a", "0"], &["a", "0"], &["b", "1"], &["b", "0"]]);
        let tree = train_id3::<f64>(&ds, 0).unwrap();
        assert_eq!(tree.root, TreeNode::Leaf { probs: vec![0.75, 0.25] });
        let r = &ds.records()[2];
        assert_eq!(tree.predict_proba(r), &[0.75, 0.25]);
    }

    #[test]
    fn constant_leaf_on_balanced_data_scores_half() {
        let ds = table(&["x", "y"], &[&["a", "0"], &["a", "1"], &["b", "1"], &["b", "0"]]);
        let tree = train_id3::<f64>(&ds, 0).unwrap();
        assert_eq!(accuracy(&tree, &ds).unwrap(), 0.5);
        assert!(accuracy(&tree, &ds.subset(&[])).is_err());
    }

    #[test]
    fn unseen_values_fall_back_to_parent_distribution() {
        // `b` never co-occurs with z=1, so the (x=b) subtree's branch z=1 is
        // empty; an out-of-domain code exercises the fallback directly.
        let ds = table(
            &["x", "z", "y"],
            &[&["a", "0", "0"], &["a", "1", "1"], &["b", "0", "1"], &["b", "0", "1"], &["a", "0", "0"]],
        );
        let tree = train_id3::<f64>(&ds, 2).unwrap();
        let (fallback, children) = match &tree.root {
            TreeNode::Split { fallback, children, .. } => (fallback.clone(), children),
            _ => panic!("expected split"),
        };
        assert_relative_eq!(fallback[1], 0.6, epsilon = 1e-12);
        let mut unseen = ds.records()[0].clone();
        let (root_col, _) = tree.coders[match &tree.root {
            TreeNode::Split { attribute, .. } => *attribute,
            _ => unreachable!(),
        }];
        unseen.0[root_col] = 99.0;
        assert_eq!(tree.predict_proba(&unseen), fallback.as_slice());
        assert_eq!(children.len(), 2);
        tree.check_invariants().unwrap();
    }

    #[test]
    fn empty_branch_inherits_parent_distribution() {
        // The encoder knows `c` but the training subset never contains it.
        let full = table(&["x", "y"], &[&["a", "0"], &["b", "1"], &["c", "1"], &["a", "0"], &["b", "0"]]);
        let train = full.subset(&[0, 1, 3, 4]);
        let tree = train_id3::<f64>(&train, 1).unwrap();
        match &tree.root {
            TreeNode::Split { children, fallback, .. } => {
                assert_eq!(children.len(), 3);
                assert_eq!(children[2], TreeNode::Leaf { probs: fallback.clone() });
                assert_relative_eq!(fallback[0], 0.75, epsilon = 1e-12);
            }
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn leaf_frequencies() {
        let ds = table(&["x", "y"], &[&["a", "0"], &["a", "0"], &["a", "0"], &["a", "1"]]);
        let tree = train_id3::<f64>(&ds, 2).unwrap();
        assert_eq!(tree.predict_proba(&ds.records()[0]), &[0.75, 0.25]);
    }

    #[test]
    fn zero_noise_dp_equals_plain() {
        let ds = perfect();
        let plain = train_id3::<f64>(&ds, 3).unwrap();
        let cfg = DpConfig { epsilon: 1.0, noise_enabled: false };
        assert_eq!(train_dp_id3::<f64>(&ds, 3, &cfg, 9).unwrap(), plain);
    }

    #[test]
    fn dp_tree_is_seed_deterministic_and_normalized() {
        let ds = perfect();
        let cfg = DpConfig::new(0.5).unwrap();
        let a = train_dp_id3::<f64>(&ds, 2, &cfg, 11).unwrap();
        let b = train_dp_id3::<f64>(&ds, 2, &cfg, 11).unwrap();
        assert_eq!(a, b);
        a.check_invariants().unwrap();
        assert!(a.max_depth() <= 2);
        let c = train_dp_id3::<f64>(&ds, 2, &cfg, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_score_is_negative_conditional_entropy() {
        let nj = [4.0f64, 2.0];
        let njc = vec![vec![3.0, 1.0], vec![0.0, 2.0]];
        let h = -(3.0 * (0.75f64).ln() + 1.0 * (0.25f64).ln());
        assert_relative_eq!(split_score(&nj, &njc), -h, epsilon = 1e-12);
        // Non-positive noisy counts stay finite.
        let v = split_score(&[-1.0f64, 0.5], &[vec![-0.5, 0.2], vec![0.3, 0.1]]);
        assert!(v.is_finite());
    }

    #[test]
    fn numeric_quantile_coder() {
        let coder = AttributeCoder::quantile((0..100).map(|v| v as f64).collect(), 10);
        assert_eq!(coder.arity(), 10);
        assert_eq!(coder.bin(0.0), 0);
        assert_eq!(coder.bin(99.0), 9);
        let skewed = AttributeCoder::quantile(vec![0.0; 95].into_iter().chain([1.0, 2.0, 3.0, 4.0, 5.0]).collect(), 10);
        assert_eq!(skewed, AttributeCoder::Numeric { edges: vec![0.0] });
        assert_eq!(skewed.bin(0.0), 0);
        assert_eq!(skewed.bin(3.0), 1);
    }

    #[test]
    fn tree_json_round_trip() {
        let tree = train_id3::<f64>(&perfect(), 2).unwrap();
        let text = serde_json::to_string(&tree).unwrap();
        let back: DecisionTree<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, tree);
    }
}
