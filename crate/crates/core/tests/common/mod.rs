//! Oracles and fixtures shared by the integration tests and the acceptance
//! target. Nothing here calls into the library's scoring or solver code.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vdaudit::dataset::{ColumnKind, ColumnSpec, Dataset, ProtectedSpec, Schema};
use vdaudit::id3::{DecisionTree, LaplaceSampler, TreeNode};
use vdaudit::mlp::Mlp;

pub fn categorical_schema(attrs: usize) -> Schema {
    let mut columns: Vec<ColumnSpec> = (0..attrs)
        .map(|a| ColumnSpec { name: format!("a{a}"), kind: ColumnKind::Categorical })
        .collect();
    columns.push(ColumnSpec { name: "y".into(), kind: ColumnKind::Categorical });
    Schema { columns, class_column: "y".into(), protected: vec![], missing_tokens: vec![] }
}

/// Random categorical table: up to 200 rows, up to 6 attributes, 2 to 4
/// values per attribute and 2 or 3 classes. The class leans on one or two
/// attributes so the trees are not all stumps.
pub fn random_table(rng: &mut ChaCha8Rng) -> Dataset {
    let attrs = rng.gen_range(1..=6);
    let rows = rng.gen_range(2..=200);
    let arity: Vec<usize> = (0..attrs).map(|_| rng.gen_range(2..=4)).collect();
    let classes = rng.gen_range(2..=3);
    let informative = rng.gen_range(0..attrs);
    let mut csv = (0..attrs).map(|a| format!("a{a}")).collect::<Vec<_>>().join(",") + ",y\n";
    for _ in 0..rows {
        let vals: Vec<usize> = arity.iter().map(|&k| rng.gen_range(0..k)).collect();
        let y = if rng.gen_bool(0.7) { vals[informative] % classes } else { rng.gen_range(0..classes) };
        let cells: Vec<String> = vals.iter().map(|v| format!("v{v}")).collect();
        csv += &format!("{},c{y}\n", cells.join(","));
    }
    Dataset::from_reader(csv.as_bytes(), &categorical_schema(attrs)).expect("generated table parses")
}

fn entropy(counts: &BTreeMap<usize, usize>) -> f64 {
    let n: usize = counts.values().sum();
    if n == 0 {
        return 0.0;
    }
    counts
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// `H(C) - H(C | column)` over `rows`, grouping on raw cell text.
pub fn information_gain(ds: &Dataset, rows: &[usize], column: usize) -> f64 {
    let mut all = BTreeMap::new();
    let mut by_value: BTreeMap<String, BTreeMap<usize, usize>> = BTreeMap::new();
    for &r in rows {
        let c = ds.class_of(r);
        *all.entry(c).or_insert(0) += 1;
        *by_value.entry(ds.raw_value(r, column)).or_default().entry(c).or_insert(0) += 1;
    }
    let n = rows.len() as f64;
    let conditional: f64 = by_value
        .values()
        .map(|counts| counts.values().sum::<usize>() as f64 / n * entropy(counts))
        .sum();
    entropy(&all) - conditional
}

/// Attributes (coder indices) whose gain is within `tol` of the best.
pub fn best_by_gain(ds: &Dataset, tree: &DecisionTree<f64>, rows: &[usize], attrs: &[usize], tol: f64) -> Vec<usize> {
    let gains: Vec<(usize, f64)> = attrs.iter().map(|&a| (a, information_gain(ds, rows, tree.coders[a].0))).collect();
    let best = gains.iter().map(|g| g.1).fold(f64::NEG_INFINITY, f64::max);
    gains.into_iter().filter(|g| best - g.1 <= tol).map(|g| g.0).collect()
}

/// Statistics of one walk over a tree.
#[derive(Default, Debug)]
pub struct WalkStats {
    pub splits: usize,
    /// Splits where the best gain was not tied.
    pub unique_splits: usize,
}

/// Walks `tree` with the rows of `ds`, checking every split against the
/// entropy oracle and every leaf against the class frequencies of its rows.
pub fn check_against_gain(ds: &Dataset, tree: &DecisionTree<f64>) -> Result<WalkStats, String> {
    fn go(
        ds: &Dataset,
        tree: &DecisionTree<f64>,
        node: &TreeNode<f64>,
        rows: &[usize],
        attrs: Vec<usize>,
        depth: usize,
        parent: &[f64],
        stats: &mut WalkStats,
    ) -> Result<(), String> {
        let mut freq = vec![0usize; tree.class_count];
        for &r in rows {
            freq[ds.class_of(r)] += 1;
        }
        let pure = freq.iter().filter(|&&c| c > 0).count() <= 1;
        let must_stop = rows.is_empty() || attrs.is_empty() || depth == 0 || pure;
        match node {
            TreeNode::Leaf { probs } => {
                if !must_stop {
                    return Err(format!("leaf over {} mixed rows with {} attributes left", rows.len(), attrs.len()));
                }
                let expect: Vec<f64> = if rows.is_empty() {
                    parent.to_vec()
                } else {
                    freq.iter().map(|&c| c as f64 / rows.len() as f64).collect()
                };
                if probs.iter().zip(&expect).any(|(a, b)| (a - b).abs() > 1e-12) {
                    return Err(format!("leaf {probs:?} but frequencies are {expect:?}"));
                }
                Ok(())
            }
            TreeNode::Split { attribute, fallback, children } => {
                if must_stop {
                    return Err("split where the builder must stop".into());
                }
                let best = best_by_gain(ds, tree, rows, &attrs, 1e-12);
                if !best.contains(attribute) {
                    return Err(format!("split on {attribute}, gain maximizers are {best:?}"));
                }
                stats.splits += 1;
                if best.len() == 1 {
                    stats.unique_splits += 1;
                }
                let col = tree.coders[*attribute].0;
                let rest: Vec<usize> = attrs.iter().copied().filter(|a| a != attribute).collect();
                for (b, child) in children.iter().enumerate() {
                    let part: Vec<usize> = rows.iter().copied().filter(|&r| ds.records()[r].code(col) as usize == b).collect();
                    go(ds, tree, child, &part, rest.clone(), depth - 1, fallback, stats)?;
                }
                Ok(())
            }
        }
    }
    let rows: Vec<usize> = (0..ds.len()).collect();
    let attrs: Vec<usize> = (0..tree.coders.len()).collect();
    let uniform = vec![1.0 / tree.class_count as f64; tree.class_count];
    let mut stats = WalkStats::default();
    go(ds, tree, &tree.root, &rows, attrs, tree.depth_limit, &uniform, &mut stats)?;
    Ok(stats)
}

pub fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

/// Relative error of the sample variance against `2b²` and the
/// Kolmogorov-Smirnov distance to the analytic CDF.
pub fn laplace_fit(scale: f64, draws: usize, seed: u64) -> (f64, f64) {
    let mut s = LaplaceSampler::new(seed);
    let mut xs: Vec<f64> = (0..draws).map(|_| s.draw(scale)).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let rel = (var - 2.0 * scale * scale).abs() / (2.0 * scale * scale);
    xs.sort_by(f64::total_cmp);
    let mut ks = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = laplace_cdf(x, scale);
        ks = ks.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    (rel, ks)
}

/// Random network and batch; returns the relative error between the
/// backpropagated gradient and central differences of the loss.
pub fn mlp_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = rng.gen_range(1..=5);
    let hidden = rng.gen_range(2..=12);
    let outputs = rng.gen_range(2..=4);
    let mut net = Mlp::<f64>::new(inputs, hidden, outputs, &mut rng);
    for b in net.b1.iter_mut().chain(&mut net.b2) {
        *b = rng.gen_range(-0.5..0.5);
    }
    let xs: Vec<Vec<f64>> = (0..rng.gen_range(1..=8)).map(|_| (0..inputs).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let labels: Vec<usize> = xs.iter().map(|_| rng.gen_range(0..outputs)).collect();
    let batch: Vec<(&[f64], usize)> = xs.iter().map(Vec::as_slice).zip(labels.iter().copied()).collect();

    let analytic = net.loss_and_gradients(&batch).1.flatten();
    let base = net.parameters();
    let h = 1e-6;
    let mut numeric = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        net.set_parameters(&p);
        let up = net.loss_and_gradients(&batch).0;
        p[i] = base[i] - h;
        net.set_parameters(&p);
        let down = net.loss_and_gradients(&batch).0;
        numeric.push((up - down) / (2.0 * h));
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Two-group objective of an integer plan with pre-deletion denominators,
/// written out from the proportions.
pub fn plan_objective(counts: &[Vec<usize>], del: &[Vec<usize>], t: f64, penalty: f64) -> f64 {
    let d: Vec<f64> = counts.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let mut total = 0.0;
    for j in 0..counts[0].len() {
        let pre = counts[0][j] as f64 / d[0] - counts[1][j] as f64 / d[1];
        let post = (counts[0][j] - del[0][j]) as f64 / d[0] - (counts[1][j] - del[1][j]) as f64 / d[1];
        total += 2.0 * (post - t * pre).powi(2);
    }
    let deleted: f64 = del.iter().zip(&d).map(|(r, d)| r.iter().sum::<usize>() as f64 / d).sum();
    total + penalty * deleted
}

/// Exhaustive search over every 2 x 2 integer plan that keeps at least one
/// record per group.
pub fn brute_force_2x2(counts: &[Vec<usize>], t: f64, penalty: f64) -> f64 {
    let s0: usize = counts[0].iter().sum();
    let s1: usize = counts[1].iter().sum();
    let mut best = f64::INFINITY;
    for a0 in 0..=counts[0][0] {
        for a1 in 0..=counts[0][1] {
            if a0 + a1 >= s0 {
                continue;
            }
            for b0 in 0..=counts[1][0] {
                for b1 in 0..=counts[1][1] {
                    if b0 + b1 >= s1 {
                        continue;
                    }
                    best = best.min(plan_objective(counts, &[vec![a0, a1], vec![b0, b1]], t, penalty));
                }
            }
        }
    }
    best
}

/// Random 2 x 2 count matrix with every group non-empty and cells at most 40.
pub fn random_counts_2x2(rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    loop {
        let c: Vec<Vec<usize>> = (0..2).map(|_| (0..2).map(|_| rng.gen_range(0..=40)).collect()).collect();
        if c.iter().all(|r| r.iter().sum::<usize>() > 0) {
            return c;
        }
    }
}

/// Small two-class table with a binary `sex` column whose class balance
/// differs by group, written with its schema under `dir`.
pub fn write_toy(dir: &Path, rows: usize, seed: u64) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("sex,age,job,hours,label\n");
    for _ in 0..rows {
        let female = rng.gen_bool(0.4);
        let age: u32 = rng.gen_range(18..70);
        let job = ["a", "b", "c", "d"][rng.gen_range(0..4)];
        let hours: u32 = rng.gen_range(10..60);
        let score = (age as f64 - 18.0) / 52.0 + if job == "a" { 0.4 } else { 0.0 } + if female { -0.2 } else { 0.1 };
        let label = u8::from(score + rng.gen_range(-0.3..0.3) > 0.6);
        csv += &format!("{},{age},{job},{hours},{label}\n", if female { "F" } else { "M" });
    }
    let schema = Schema {
        columns: vec![
            ColumnSpec { name: "sex".into(), kind: ColumnKind::Categorical },
            ColumnSpec { name: "age".into(), kind: ColumnKind::Numeric },
            ColumnSpec { name: "job".into(), kind: ColumnKind::Categorical },
            ColumnSpec { name: "hours".into(), kind: ColumnKind::Numeric },
            ColumnSpec { name: "label".into(), kind: ColumnKind::Categorical },
        ],
        class_column: "label".into(),
        protected: vec![ProtectedSpec {
            column: "sex".into(),
            protected_values: vec!["F".into()],
            unprotected_values: Some(vec!["M".into()]),
        }],
        missing_tokens: vec![],
    };
    let data = dir.join("toy.csv");
    let schema_path = dir.join("toy.schema.json");
    std::fs::write(&data, csv).expect("write toy data");
    std::fs::write(&schema_path, serde_json::to_string_pretty(&schema).expect("schema serializes")).expect("write schema");
    (data, schema_path)
}
