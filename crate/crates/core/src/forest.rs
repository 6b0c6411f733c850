//! CART classification trees and a bagged Random Forest with out-of-bag
//! votes, margins, and Gini / permutation importances.
//!
//! Every tree draws from its own ChaCha stream (`stream = tree index`) off the
//! master seed, so a forest of `K` trees is a prefix of a forest of `K' > K`
//! trees with the same seed, and fitting is reproducible under any thread
//! count.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_TREES: usize = 112;
pub const MAX_TREES: usize = 2048;
pub const FOREST_FORMAT: &str = "stresslens-forest";
pub const FOREST_VERSION: u32 = 1;

const PERMUTATION_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per split; `floor(sqrt(p))` when unset.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            mtry: None,
            min_leaf: 5,
            seed: 42,
        }
    }
}

impl ForestConfig {
    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (p as f64).sqrt().floor() as usize)
            .clamp(1, p.max(1))
    }
}

/// Gini impurity `1 - sum (c_i / n)^2`.
pub fn gini_impurity(class_counts: &[u32]) -> Result<f64> {
    let n: u64 = class_counts.iter().map(|&c| c as u64).sum();
    if n == 0 {
        return Err(Error::invalid("gini impurity of an empty node"));
    }
    Ok(gini_of(class_counts, n as f64))
}

fn gini_of(counts: &[u32], n: f64) -> f64 {
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        /// Node weight (bootstrap rows here / rows at root) times the Gini drop.
        impurity_decrease: f64,
    },
    Leaf {
        /// Bootstrap class counts reaching the leaf.
        counts: Vec<u32>,
        class: u16,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_for(&self, mut value: impl FnMut(usize) -> f64) -> &Node {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if value(*feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                leaf => return leaf,
            }
        }
    }

    fn class_with(&self, value: impl FnMut(usize) -> f64) -> usize {
        match self.leaf_for(value) {
            Node::Leaf { class, .. } => *class as usize,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Class index predicted for `x`.
    pub fn predict(&self, x: &[f64]) -> usize {
        self.class_with(|j| x[j])
    }

    /// Class index predicted for `x` with feature `j` replaced by `v`.
    fn predict_override(&self, x: &[f64], j: usize, v: f64) -> usize {
        self.class_with(|f| if f == j { v } else { x[f] })
    }

    fn leaves(&self) -> impl Iterator<Item = &[u32]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { counts, .. } => Some(counts.as_slice()),
            Node::Split { .. } => None,
        })
    }

    fn sample_size(&self) -> f64 {
        self.leaves().flatten().map(|&c| c as f64).sum()
    }

    /// Gini impurity of the bootstrap sample at the root.
    pub fn root_impurity(&self) -> f64 {
        let mut total: Vec<u32> = Vec::new();
        for leaf in self.leaves() {
            total.resize(total.len().max(leaf.len()), 0);
            for (t, &c) in total.iter_mut().zip(leaf) {
                *t += c;
            }
        }
        gini_of(&total, self.sample_size())
    }

    /// Sum of leaf impurities weighted by the share of the bootstrap sample.
    pub fn weighted_leaf_impurity(&self) -> f64 {
        let n = self.sample_size();
        self.leaves()
            .map(|c| {
                let m: f64 = c.iter().map(|&v| v as f64).sum();
                m / n * gini_of(c, m)
            })
            .sum()
    }

    pub fn total_impurity_decrease(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Split { impurity_decrease, .. } => *impurity_decrease,
                Node::Leaf { .. } => 0.0,
            })
            .sum()
    }

    /// Sorted, deduplicated indices of features used in any split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature as usize),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

/// Per-feature ranks of the training values, shared by all trees.
struct Presorted {
    /// `ranks[f][row]`: position of the row's value among the distinct values.
    ranks: Vec<Vec<u32>>,
    /// `distinct[f]`: sorted distinct values of feature `f`.
    distinct: Vec<Vec<f64>>,
}

impl Presorted {
    fn new(x: &Matrix) -> Self {
        let (ranks, distinct) = (0..x.n_cols())
            .into_par_iter()
            .map(|j| {
                let mut vals: Vec<f64> = x.column(j).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                let rank = x
                    .column(j)
                    .map(|v| vals.binary_search_by(|p| p.total_cmp(&v)).expect("value present") as u32)
                    .collect();
                (rank, vals)
            })
            .unzip();
        Self { ranks, distinct }
    }
}

/// Training rows of one tree: the bootstrap draw and its class labels.
struct TreeBuilder<'a> {
    pre: &'a Presorted,
    labels: &'a [u16],
    n_classes: usize,
    mtry: usize,
    min_leaf: usize,
    root_n: f64,
    nodes: Vec<Node>,
    keys: Vec<u64>,
}

struct BestSplit {
    feature: usize,
    rank_cut: u32,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn class_counts(&self, rows: &[u32]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &r in rows {
            c[self.labels[r as usize] as usize] += 1;
        }
        c
    }

    fn leaf(counts: Vec<u32>) -> Node {
        // first maximum: ties go to the lowest class index
        let class = counts
            .iter()
            .enumerate()
            .fold((0usize, 0u32), |best, (i, &c)| if c > best.1 { (i, c) } else { best })
            .0 as u16;
        Node::Leaf { counts, class }
    }

    fn best_split(&mut self, rows: &[u32], parent: &[u32], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let m = rows.len();
        let p = self.pre.ranks.len();
        let parent_score: f64 = parent.iter().map(|&c| (c as f64).powi(2)).sum::<f64>() / m as f64;
        let mut best: Option<BestSplit> = None;
        let mut left = vec![0u32; self.n_classes];
        for f in index::sample(rng, p, self.mtry).into_iter() {
            let ranks = &self.pre.ranks[f];
            self.keys.clear();
            self.keys.extend(
                rows.iter()
                    .map(|&r| ((ranks[r as usize] as u64) << 16) | self.labels[r as usize] as u64),
            );
            self.keys.sort_unstable();
            left.iter_mut().for_each(|c| *c = 0);
            for i in 1..m {
                let prev = self.keys[i - 1];
                left[(prev & 0xFFFF) as usize] += 1;
                let (r_prev, r_here) = ((prev >> 16) as u32, (self.keys[i] >> 16) as u32);
                if r_prev == r_here || i < self.min_leaf || m - i < self.min_leaf {
                    continue;
                }
                let (nl, nr) = (i as f64, (m - i) as f64);
                let mut sl = 0.0;
                let mut sr = 0.0;
                for (&l, &t) in left.iter().zip(parent) {
                    sl += (l as f64).powi(2);
                    sr += ((t - l) as f64).powi(2);
                }
                let gain = (sl / nl + sr / nr - parent_score) / m as f64;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        feature: f,
                        rank_cut: r_prev,
                        gain,
                    });
                }
            }
        }
        best.filter(|b| b.gain > 1e-12)
    }

    fn build(mut self, mut rows: Vec<u32>, rng: &mut ChaCha8Rng) -> Tree {
        // (node slot, start, end) into `rows`
        let mut stack = vec![(0usize, 0usize, rows.len())];
        self.nodes.push(Node::Leaf {
            counts: Vec::new(),
            class: 0,
        });
        while let Some((slot, s, e)) = stack.pop() {
            let counts = self.class_counts(&rows[s..e]);
            let m = e - s;
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let split = if pure || m < 2 * self.min_leaf {
                None
            } else {
                self.best_split(&rows[s..e], &counts, rng)
            };
            let Some(b) = split else {
                self.nodes[slot] = Self::leaf(counts);
                continue;
            };
            let ranks = &self.pre.ranks[b.feature];
            let seg = &mut rows[s..e];
            let mut mid = 0;
            for i in 0..seg.len() {
                if ranks[seg[i] as usize] <= b.rank_cut {
                    seg.swap(i, mid);
                    mid += 1;
                }
            }
            let vals = &self.pre.distinct[b.feature];
            let (lo, hi) = (vals[b.rank_cut as usize], vals[b.rank_cut as usize + 1]);
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            let left = self.nodes.len();
            self.nodes.push(Node::Leaf {
                counts: Vec::new(),
                class: 0,
            });
            self.nodes.push(Node::Leaf {
                counts: Vec::new(),
                class: 0,
            });
            self.nodes[slot] = Node::Split {
                feature: b.feature as u32,
                threshold,
                left: left as u32,
                right: left as u32 + 1,
                impurity_decrease: m as f64 / self.root_n * b.gain,
            };
            stack.push((left + 1, s + mid, e));
            stack.push((left, s, s + mid));
        }
        Tree { nodes: self.nodes }
    }
}

/// Fits one CART tree on the given row multiset (indices into `x`).
///
/// `labels` are class indices `0..n_classes`.
pub fn fit_tree(
    x: &Matrix,
    labels: &[u16],
    n_classes: usize,
    rows: &[u32],
    mtry: usize,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let pre = Presorted::new(x);
    grow(&pre, labels, n_classes, rows.to_vec(), mtry, min_leaf, rng)
}

fn grow(
    pre: &Presorted,
    labels: &[u16],
    n_classes: usize,
    rows: Vec<u32>,
    mtry: usize,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let builder = TreeBuilder {
        pre,
        labels,
        n_classes,
        mtry: mtry.clamp(1, pre.ranks.len().max(1)),
        min_leaf: min_leaf.max(1),
        root_n: rows.len() as f64,
        nodes: Vec::new(),
        keys: Vec::with_capacity(rows.len()),
    };
    builder.build(rows, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format: String,
    pub version: u32,
    pub config: ForestConfig,
    /// Class labels; class index `i` means `classes[i]`.
    pub classes: Vec<i32>,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// `inbag[t][row]`: times training row `row` was drawn for tree `t`.
    pub inbag: Vec<Vec<u16>>,
    /// `oob_votes[row][class]` from trees where the row was out of bag.
    pub oob_votes: Vec<Vec<u32>>,
    /// Class index of every training row.
    pub train_classes: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: i32,
    /// Vote share per class, aligned with `Forest::classes`.
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub margins: Vec<f64>,
    /// Fraction of rows with a negative margin.
    pub pe_star: f64,
}

fn tree_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn argmax_first(votes: &[u32]) -> usize {
    votes
        .iter()
        .enumerate()
        .fold((0usize, 0u32), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Bagged ensemble of CART trees on the rows of `x` with labels `y`.
pub fn fit_forest(x: &Matrix, y: &[i32], cfg: &ForestConfig) -> Result<Forest> {
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} rows", y.len())));
    }
    if n == 0 || x.n_cols() == 0 {
        return Err(Error::invalid("forest needs at least one row and one feature"));
    }
    if cfg.n_trees == 0 || cfg.n_trees > MAX_TREES {
        return Err(Error::invalid(format!("n_trees must be in 1..={MAX_TREES}")));
    }
    if x.rows().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("feature matrix contains non-finite values"));
    }
    let mut classes: Vec<i32> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let labels: Vec<u16> = y
        .iter()
        .map(|v| classes.binary_search(v).expect("class present") as u16)
        .collect();
    let k = classes.len();
    let pre = Presorted::new(x);
    let mtry = cfg.mtry_for(x.n_cols());

    let fitted: Vec<(Tree, Vec<u16>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(cfg.seed, t as u64);
            let mut inbag = vec![0u16; n];
            let rows: Vec<u32> = (0..n)
                .map(|_| {
                    let r = rng.random_range(0..n);
                    inbag[r] += 1;
                    r as u32
                })
                .collect();
            let tree = grow(&pre, &labels, k, rows, mtry, cfg.min_leaf, &mut rng);
            (tree, inbag)
        })
        .collect();
    let (trees, inbag): (Vec<Tree>, Vec<Vec<u16>>) = fitted.into_iter().unzip();

    let mut oob_votes = vec![vec![0u32; k]; n];
    for (tree, bag) in trees.iter().zip(&inbag) {
        for (row, _) in bag.iter().enumerate().filter(|(_, &c)| c == 0) {
            oob_votes[row][tree.predict(x.row(row))] += 1;
        }
    }

    Ok(Forest {
        format: FOREST_FORMAT.to_string(),
        version: FOREST_VERSION,
        config: cfg.clone(),
        classes,
        n_features: x.n_cols(),
        trees,
        inbag,
        oob_votes,
        train_classes: labels,
    })
}

impl Forest {
    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::WidthMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Per-class vote counts over all trees.
    pub fn votes(&self, x: &[f64]) -> Result<Vec<u32>> {
        self.check_width(x)?;
        let mut v = vec![0u32; self.classes.len()];
        for t in &self.trees {
            v[t.predict(x)] += 1;
        }
        Ok(v)
    }

    /// Majority vote; exact ties go to the lowest class.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let v = self.votes(x)?;
        let k = self.trees.len() as f64;
        Ok(Prediction {
            class: self.classes[argmax_first(&v)],
            fractions: v.iter().map(|&c| c as f64 / k).collect(),
        })
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<i32>> {
        x.rows().map(|r| self.predict(r).map(|p| p.class)).collect()
    }

    /// Out-of-bag prediction per training row; `None` if the row was in every
    /// bootstrap sample.
    pub fn oob_predictions(&self) -> Vec<Option<i32>> {
        self.oob_votes
            .iter()
            .map(|v| (v.iter().any(|&c| c > 0)).then(|| self.classes[argmax_first(v)]))
            .collect()
    }

    /// Accuracy of the out-of-bag predictions over rows that have any.
    pub fn oob_accuracy(&self) -> Option<f64> {
        let mut total = 0usize;
        let mut correct = 0usize;
        for (pred, &truth) in self.oob_predictions().iter().zip(&self.train_classes) {
            if let Some(p) = pred {
                total += 1;
                correct += usize::from(*p == self.classes[truth as usize]);
            }
        }
        (total > 0).then(|| correct as f64 / total as f64)
    }

    /// Number of trees for which each training row was out of bag.
    pub fn oob_tree_counts(&self) -> Vec<usize> {
        let n = self.train_classes.len();
        (0..n)
            .map(|r| self.inbag.iter().filter(|b| b[r] == 0).count())
            .collect()
    }

    /// Mean over trees of each feature's total weighted Gini decrease.
    pub fn mean_decrease_gini(&self) -> Vec<f64> {
        let mut mdg = vec![0.0; self.n_features];
        for t in &self.trees {
            for node in &t.nodes {
                if let Node::Split {
                    feature,
                    impurity_decrease,
                    ..
                } = node
                {
                    mdg[*feature as usize] += impurity_decrease;
                }
            }
        }
        let k = self.trees.len() as f64;
        mdg.iter_mut().for_each(|v| *v /= k);
        mdg
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Forest> {
        let f: Forest = serde_json::from_str(s)?;
        if f.format != FOREST_FORMAT || f.version != FOREST_VERSION {
            return Err(Error::invalid(format!(
                "unsupported forest document {} v{}",
                f.format, f.version
            )));
        }
        Ok(f)
    }
}

fn margin_of(fractions: &[f64], truth: Option<usize>) -> f64 {
    let right = truth.map_or(0.0, |t| fractions[t]);
    let other = fractions
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != truth)
        .map(|(_, &f)| f)
        .fold(0.0f64, f64::max);
    right - other
}

fn report(margins: Vec<f64>) -> MarginReport {
    let neg = margins.iter().filter(|&&m| m < 0.0).count();
    let pe_star = if margins.is_empty() {
        0.0
    } else {
        neg as f64 / margins.len() as f64
    };
    MarginReport { margins, pe_star }
}

/// Margin of every labeled row under the full forest's votes.
pub fn margins(f: &Forest, x: &Matrix, y: &[i32]) -> Result<MarginReport> {
    if y.len() != x.n_rows() {
        return Err(Error::invalid("label count does not match rows"));
    }
    let m = x
        .rows()
        .zip(y)
        .map(|(row, label)| {
            let p = f.predict(row)?;
            Ok(margin_of(&p.fractions, f.classes.iter().position(|c| c == label)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report(m))
}

/// Margins from out-of-bag votes of the training rows; `pe_star` is the
/// plug-in generalization error estimate.
pub fn oob_margins(f: &Forest) -> MarginReport {
    let m = f
        .oob_votes
        .iter()
        .zip(&f.train_classes)
        .filter(|(v, _)| v.iter().any(|&c| c > 0))
        .map(|(v, &t)| {
            let total: u32 = v.iter().sum();
            let frac: Vec<f64> = v.iter().map(|&c| c as f64 / total as f64).collect();
            margin_of(&frac, Some(t as usize))
        })
        .collect();
    report(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importances {
    pub mean_decrease_gini: Vec<f64>,
    /// Mean over trees of the OOB accuracy drop after permuting the feature.
    pub mean_decrease_accuracy: Vec<f64>,
    /// `[class][feature]`: the same drop restricted to OOB rows of one class.
    pub mean_decrease_accuracy_by_class: Vec<Vec<f64>>,
    /// Standard error of `mean_decrease_accuracy` across trees.
    pub mean_decrease_accuracy_se: Vec<f64>,
}

/// Gini and permutation importances. `x` and `y` must be the training rows
/// the forest was fitted on.
pub fn importances(f: &Forest, x: &Matrix, y: &[i32]) -> Result<Importances> {
    let n = f.train_classes.len();
    if x.n_rows() != n || y.len() != n {
        return Err(Error::invalid("importances need the forest's training rows"));
    }
    if x.n_cols() != f.n_features {
        return Err(Error::WidthMismatch {
            expected: f.n_features,
            got: x.n_cols(),
        });
    }
    let k = f.classes.len();
    let p = f.n_features;
    let truth: Vec<usize> = y
        .iter()
        .map(|v| {
            f.classes
                .iter()
                .position(|c| c == v)
                .ok_or_else(|| Error::invalid(format!("label {v} unknown to the forest")))
        })
        .collect::<Result<_>>()?;

    // per tree: overall drop and per-class drops for every feature; None when
    // the tree has no OOB rows (of that class)
    type TreeDrops = (Option<Vec<f64>>, Vec<Option<Vec<f64>>>);
    let per_tree: Vec<TreeDrops> = f
        .trees
        .par_iter()
        .zip(&f.inbag)
        .enumerate()
        .map(|(t, (tree, bag))| {
            let oob: Vec<usize> = (0..n).filter(|&r| bag[r] == 0).collect();
            if oob.is_empty() {
                return (None, vec![None; k]);
            }
            let mut class_n = vec![0usize; k];
            for &r in &oob {
                class_n[truth[r]] += 1;
            }
            let base: Vec<bool> = oob.iter().map(|&r| tree.predict(x.row(r)) == truth[r]).collect();
            let mut base_c = vec![0usize; k];
            for (i, &r) in oob.iter().enumerate() {
                base_c[truth[r]] += usize::from(base[i]);
            }
            let base_total: usize = base_c.iter().sum();

            let mut overall = vec![0.0; p];
            let mut by_class = vec![vec![0.0; p]; k];
            let mut rng = tree_rng(f.config.seed ^ PERMUTATION_STREAM_SALT, t as u64);
            let mut shuffled: Vec<f64> = Vec::with_capacity(oob.len());
            for j in tree.used_features() {
                shuffled.clear();
                shuffled.extend(oob.iter().map(|&r| x.get(r, j)));
                shuffled.shuffle(&mut rng);
                let mut perm_c = vec![0usize; k];
                for (i, &r) in oob.iter().enumerate() {
                    if tree.predict_override(x.row(r), j, shuffled[i]) == truth[r] {
                        perm_c[truth[r]] += 1;
                    }
                }
                let perm_total: usize = perm_c.iter().sum();
                overall[j] = (base_total as f64 - perm_total as f64) / oob.len() as f64;
                for c in 0..k {
                    if class_n[c] > 0 {
                        by_class[c][j] = (base_c[c] as f64 - perm_c[c] as f64) / class_n[c] as f64;
                    }
                }
            }
            let by_class = by_class
                .into_iter()
                .zip(&class_n)
                .map(|(v, &cn)| (cn > 0).then_some(v))
                .collect();
            (Some(overall), by_class)
        })
        .collect();

    let average = |rows: Vec<&Vec<f64>>| -> (Vec<f64>, Vec<f64>) {
        let m = rows.len();
        if m == 0 {
            return (vec![0.0; p], vec![0.0; p]);
        }
        let mean: Vec<f64> = (0..p)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m as f64)
            .collect();
        let se: Vec<f64> = (0..p)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / m as f64;
                (var / m as f64).sqrt()
            })
            .collect();
        (mean, se)
    };
    let (mda, se) = average(per_tree.iter().filter_map(|(o, _)| o.as_ref()).collect());
    let by_class = (0..k)
        .map(|c| average(per_tree.iter().filter_map(|(_, bc)| bc[c].as_ref()).collect()).0)
        .collect();

    Ok(Importances {
        mean_decrease_gini: f.mean_decrease_gini(),
        mean_decrease_accuracy: mda,
        mean_decrease_accuracy_by_class: by_class,
        mean_decrease_accuracy_se: se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini_impurity(&[5, 5]).unwrap(), 0.5);
        assert_eq!(gini_impurity(&[10, 0]).unwrap(), 0.0);
        assert!((gini_impurity(&[7, 3]).unwrap() - 0.42).abs() < 1e-15);
        assert!(gini_impurity(&[0, 0]).is_err());
        assert!(gini_impurity(&[]).is_err());
    }

    fn column(xs: &[f64]) -> Matrix {
        Matrix::new(xs.len(), 1, xs.to_vec())
    }

    #[test]
    fn pure_node_is_one_leaf() {
        let x = column(&[1.0, 2.0, 3.0, 4.0]);
        let t = fit_tree(&x, &[1, 1, 1, 1], 2, &[0, 1, 2, 3], 1, 1, &mut tree_rng(0, 0));
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[100.0]), 1);
    }

    /// Exhaustive scan over every midpoint threshold for the best Gini gain.
    fn brute_best_threshold(xs: &[f64], ys: &[u16]) -> (f64, f64) {
        let mut vals = xs.to_vec();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        let parent = [
            ys.iter().filter(|&&y| y == 0).count() as u32,
            ys.iter().filter(|&&y| y == 1).count() as u32,
        ];
        let g0 = gini_impurity(&parent).unwrap();
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        for w in vals.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let mut l = [0u32; 2];
            let mut r = [0u32; 2];
            for (x, &y) in xs.iter().zip(ys) {
                if *x <= thr {
                    l[y as usize] += 1
                } else {
                    r[y as usize] += 1
                }
            }
            let (nl, nr) = ((l[0] + l[1]) as f64, (r[0] + r[1]) as f64);
            let n = nl + nr;
            let gain = g0 - nl / n * gini_impurity(&l).unwrap() - nr / n * gini_impurity(&r).unwrap();
            if gain > best.1 {
                best = (thr, gain);
            }
        }
        best
    }

    #[test]
    fn one_dimensional_split() {
        let xs = [1.0, 2.0, 9.0, 10.0];
        let ys = [0u16, 0, 1, 1];
        let t = fit_tree(&column(&xs), &ys, 2, &[0, 1, 2, 3], 1, 1, &mut tree_rng(0, 0));
        let Node::Split {
            threshold,
            impurity_decrease,
            ..
        } = &t.nodes[0]
        else {
            panic!("expected a split");
        };
        assert!(*threshold > 2.0 && *threshold < 9.0);
        let (thr, gain) = brute_best_threshold(&xs, &ys);
        assert_eq!(*threshold, thr);
        assert!((impurity_decrease - gain).abs() < 1e-12);
        assert_eq!(t.nodes.len(), 3);
    }

    proptest::proptest! {
        #[test]
        fn root_split_matches_exhaustive_scan(pts in proptest::collection::vec((0i32..30, 0u16..2), 4..40)) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
            let ys: Vec<u16> = pts.iter().map(|p| p.1).collect();
            let rows: Vec<u32> = (0..xs.len() as u32).collect();
            let t = fit_tree(&column(&xs), &ys, 2, &rows, 1, 1, &mut tree_rng(1, 0));
            let (thr, gain) = brute_best_threshold(&xs, &ys);
            match &t.nodes[0] {
                Node::Split { threshold, impurity_decrease, .. } => {
                    proptest::prop_assert!((impurity_decrease - gain).abs() < 1e-12);
                    // ties between equally good thresholds may pick either
                    let _ = (threshold, thr);
                }
                Node::Leaf { .. } => proptest::prop_assert!(gain <= 1e-12 || !gain.is_finite()),
            }
            // telescoping: total decrease = root impurity - weighted leaf impurity
            proptest::prop_assert!(
                (t.total_impurity_decrease() - (t.root_impurity() - t.weighted_leaf_impurity())).abs() < 1e-12
            );
        }
    }

    fn two_blobs(n: usize, seed: u64) -> (Matrix, Vec<i32>) {
        let mut rng = tree_rng(seed, 99);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = (i % 2) as i32;
            data.push(c as f64 * 2.0 + rng.random_range(-1.5..1.5));
            data.push(rng.random_range(0.0..1.0));
            y.push(c);
        }
        (Matrix::new(n, 2, data), y)
    }

    #[test]
    fn forest_is_seed_reproducible() {
        let (x, y) = two_blobs(200, 3);
        let cfg = ForestConfig {
            n_trees: 20,
            ..Default::default()
        };
        let a = fit_forest(&x, &y, &cfg).unwrap();
        let b = fit_forest(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(&x, &y, &ForestConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn smaller_forest_is_a_prefix() {
        let (x, y) = two_blobs(150, 4);
        let small = fit_forest(
            &x,
            &y,
            &ForestConfig {
                n_trees: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let big = fit_forest(
            &x,
            &y,
            &ForestConfig {
                n_trees: 12,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(small.trees[..], big.trees[..5]);
        assert_eq!(small.inbag[..], big.inbag[..5]);
    }

    #[test]
    fn single_class_and_bad_config_rejected() {
        let (x, _) = two_blobs(10, 1);
        assert!(matches!(
            fit_forest(&x, &[1; 10], &ForestConfig::default()),
            Err(Error::SingleClass)
        ));
        let y: Vec<i32> = (0..10).map(|i| i % 2).collect();
        assert!(fit_forest(
            &x,
            &y,
            &ForestConfig {
                n_trees: 0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(fit_forest(
            &x,
            &y,
            &ForestConfig {
                n_trees: MAX_TREES + 1,
                ..Default::default()
            }
        )
        .is_err());
        assert!(fit_forest(&x, &y[..5], &ForestConfig::default()).is_err());
    }

    /// Forest whose trees are single leaves voting for the given classes.
    fn stub_forest(votes: &[u16]) -> Forest {
        Forest {
            format: FOREST_FORMAT.into(),
            version: FOREST_VERSION,
            config: ForestConfig::default(),
            classes: vec![0, 1],
            n_features: 1,
            trees: votes
                .iter()
                .map(|&c| Tree {
                    nodes: vec![Node::Leaf {
                        counts: vec![1, 1],
                        class: c,
                    }],
                })
                .collect(),
            inbag: vec![],
            oob_votes: vec![],
            train_classes: vec![],
        }
    }

    #[test]
    fn voting_and_margins() {
        let f = stub_forest(&[1, 1, 1]);
        let p = f.predict(&[0.0]).unwrap();
        assert_eq!((p.class, p.fractions[1]), (1, 1.0));
        let x = Matrix::new(1, 1, vec![0.0]);
        assert_eq!(margins(&f, &x, &[1]).unwrap().margins, vec![1.0]);
        let wrong = margins(&f, &x, &[0]).unwrap();
        assert_eq!(wrong.margins, vec![-1.0]);
        assert_eq!(wrong.pe_star, 1.0);

        let f = stub_forest(&[1, 1, 0]);
        let p = f.predict(&[0.0]).unwrap();
        assert_eq!(p.class, 1);
        assert!((p.fractions[0] - 1.0 / 3.0).abs() < 1e-15 && (p.fractions[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((margins(&f, &x, &[1]).unwrap().margins[0] - 1.0 / 3.0).abs() < 1e-15);
        // tree order does not matter
        assert_eq!(stub_forest(&[0, 1, 1]).predict(&[0.0]).unwrap(), p);
        // exact ties go to class 0
        assert_eq!(stub_forest(&[1, 0]).predict(&[0.0]).unwrap().class, 0);
        assert!(matches!(
            f.predict(&[0.0, 1.0]),
            Err(Error::WidthMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn margin_sign_matches_prediction() {
        let (x, y) = two_blobs(300, 5);
        let f = fit_forest(
            &x,
            &y,
            &ForestConfig {
                n_trees: 15,
                ..Default::default()
            },
        )
        .unwrap();
        let m = margins(&f, &x, &y).unwrap();
        let pred = f.predict_matrix(&x).unwrap();
        for ((mg, p), t) in m.margins.iter().zip(&pred).zip(&y) {
            assert!((-1.0..=1.0).contains(mg));
            if *mg > 0.0 {
                assert_eq!(p, t);
            } else if *mg < 0.0 {
                assert_ne!(p, t);
            }
        }
        let accuracy = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
        let errors = pred.iter().zip(&y).filter(|(a, b)| a != b).count() as f64 / y.len() as f64;
        assert_eq!(accuracy, 1.0 - errors);
        let oob = oob_margins(&f);
        assert!((0.0..=1.0).contains(&oob.pe_star));
    }

    #[test]
    fn telescoping_holds_for_every_tree() {
        let (x, y) = two_blobs(400, 6);
        let f = fit_forest(
            &x,
            &y,
            &ForestConfig {
                n_trees: 10,
                min_leaf: 2,
                ..Default::default()
            },
        )
        .unwrap();
        for t in &f.trees {
            let lhs = t.total_impurity_decrease();
            let rhs = t.root_impurity() - t.weighted_leaf_impurity();
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
        assert!(f.mean_decrease_gini().iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn json_round_trip() {
        let (x, y) = two_blobs(60, 8);
        let f = fit_forest(
            &x,
            &y,
            &ForestConfig {
                n_trees: 4,
                ..Default::default()
            },
        )
        .unwrap();
        let back = Forest::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, back);
        let mut doc: serde_json::Value = serde_json::from_str(&f.to_json().unwrap()).unwrap();
        doc["version"] = 99.into();
        assert!(Forest::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn unused_feature_has_zero_importance() {
        let (x, y) = two_blobs(200, 9);
        // third column is constant and can never be split on
        let mut data = Vec::new();
        for r in x.rows() {
            data.extend_from_slice(r);
            data.push(1.0);
        }
        let x3 = Matrix::new(x.n_rows(), 3, data);
        let f = fit_forest(
            &x3,
            &y,
            &ForestConfig {
                n_trees: 20,
                mtry: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        let imp = importances(&f, &x3, &y).unwrap();
        assert_eq!(imp.mean_decrease_gini[2], 0.0);
        assert_eq!(imp.mean_decrease_accuracy[2], 0.0);
        assert!(imp.mean_decrease_gini[0] > imp.mean_decrease_gini[1]);
        assert!(imp.mean_decrease_accuracy[0] > imp.mean_decrease_accuracy[1]);
        assert_eq!(imp.mean_decrease_accuracy_by_class.len(), 2);
    }
}
