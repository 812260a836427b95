//! Histogram-based second-order gradient boosting with squared-error loss,
//! grown level-wise to `max_depth`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::binning::{BinnedTable, MISSING_CODE};
use super::ensemble::{Ensemble, EnsembleMode, RegressionTree, TrainingMeta, TreeNode};
use super::hist::{leaf_value, split_gain, GradStats, Histogram};
use crate::data::TargetVector;
use crate::error::{Error, Result};
use crate::params::GbdtParams;

/// Nodes with at most `n_bins / SPARSE_DIVISOR` rows find splits by sorting
/// their rows' codes instead of scanning full histograms.
const SPARSE_DIVISOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub bin: usize,
    pub missing_left: bool,
    pub gain: f64,
    pub left: GradStats,
    pub right: GradStats,
}

/// Keeps the first strictly-best candidate seen; candidates must be offered
/// in (feature, bin) order with missing-left before missing-right.
struct Best<'a> {
    params: &'a GbdtParams,
    best: Option<SplitCandidate>,
}

impl<'a> Best<'a> {
    fn new(params: &'a GbdtParams) -> Self {
        Self { params, best: None }
    }

    #[inline]
    fn offer(&mut self, feature: usize, bin: usize, nonmissing_left: GradStats, nonmissing_right: GradStats, missing: GradStats) {
        let mcw = self.params.min_child_weight;
        let lambda = self.params.l2_lambda;
        // without missing rows both directions give the same partition
        let directions: &[bool] = if missing.is_empty() { &[true] } else { &[true, false] };
        for &missing_left in directions {
            let (left, right) = if missing_left {
                (nonmissing_left + missing, nonmissing_right)
            } else {
                (nonmissing_left, nonmissing_right + missing)
            };
            if left.is_empty() || right.is_empty() || left.hess < mcw || right.hess < mcw {
                continue;
            }
            let gain = split_gain(left, right, lambda);
            if gain > 0.0 && self.best.is_none_or(|b| gain > b.gain) {
                self.best = Some(SplitCandidate {
                    feature,
                    bin,
                    missing_left,
                    gain,
                    left,
                    right,
                });
            }
        }
    }
}

fn scan_histogram(hist: &Histogram, binned: &BinnedTable, features: &[usize], best: &mut Best) {
    for &f in features {
        let nb = binned.feature_bins(f);
        if nb < 2 {
            continue;
        }
        let bins = hist.bins(f);
        let missing = hist.missing(f);
        let mut total = GradStats::default();
        for s in bins {
            total += *s;
        }
        let mut cum = GradStats::default();
        for (b, s) in bins.iter().enumerate().take(nb - 1) {
            // an empty bin repeats the previous bin's partition
            if b > 0 && s.is_empty() {
                continue;
            }
            cum += *s;
            best.offer(f, b, cum, total - cum, missing);
        }
    }
}

/// Same candidates as [`scan_histogram`], built from the node's rows sorted
/// by code. Between two present codes every bin yields the same partition,
/// so only the lowest such bin is offered. `sorted` holds one segment of
/// `(code, row)` pairs per entry of `features`.
fn scan_sparse(
    binned: &BinnedTable,
    sorted: &[(u16, u32)],
    features: &[usize],
    grad: &[f64],
    hess: &[f64],
    best: &mut Best,
    present: &mut Vec<(usize, GradStats)>,
) {
    if features.is_empty() {
        return;
    }
    let n_rows = sorted.len() / features.len();
    for (&f, segment) in features.iter().zip(sorted.chunks_exact(n_rows.max(1))) {
        let nb = binned.feature_bins(f);
        if nb < 2 {
            continue;
        }
        present.clear();
        let mut missing = GradStats::default();
        for &(c, r) in segment {
            let s = GradStats::new(grad[r as usize], hess[r as usize]);
            if c == MISSING_CODE {
                missing += s;
            } else {
                match present.last_mut() {
                    Some((pc, acc)) if *pc == c as usize => *acc += s,
                    _ => present.push((c as usize, s)),
                }
            }
        }
        let mut total = GradStats::default();
        for (_, s) in present.iter() {
            total += *s;
        }
        if let Some(&(first, _)) = present.first() {
            if first > 0 {
                best.offer(f, 0, GradStats::default(), total, missing);
            }
        }
        let mut cum = GradStats::default();
        for &(c, s) in present.iter() {
            cum += s;
            if c < nb - 1 {
                best.offer(f, c, cum, total - cum, missing);
            }
        }
    }
}

struct PendingNode {
    id: usize,
    rows: Vec<u32>,
    depth: usize,
    stats: GradStats,
    hist: Option<Histogram>,
    /// Per-feature `(code, row)` lists of a sparse node, built on demand
    /// and then partitioned into the children.
    sorted: Option<Vec<(u16, u32)>>,
}

struct TreeBuilder<'a> {
    binned: &'a BinnedTable,
    params: &'a GbdtParams,
    grad: &'a [f64],
    hess: &'a [f64],
    features: Vec<usize>,
    sparse_rows: usize,
    present: Vec<(usize, GradStats)>,
    goes_left: Vec<bool>,
}

impl TreeBuilder<'_> {
    fn node_stats(&self, rows: &[u32]) -> GradStats {
        let mut s = GradStats::default();
        for &r in rows {
            s += GradStats::new(self.grad[r as usize], self.hess[r as usize]);
        }
        s
    }

    fn is_sparse(&self, rows: &[u32]) -> bool {
        rows.len() <= self.sparse_rows
    }

    fn histogram(&self, rows: &[u32]) -> Histogram {
        Histogram::build(self.binned, rows, &self.features, self.grad, self.hess)
    }

    /// Rows sorted by code, one segment per sampled feature. The sort is
    /// stable so rows within a code keep their order, matching histogram sums.
    fn sorted_codes(&self, rows: &[u32]) -> Vec<(u16, u32)> {
        let mut out = Vec::with_capacity(rows.len() * self.features.len());
        for &f in &self.features {
            let start = out.len();
            out.extend(rows.iter().map(|&r| (self.binned.code(r as usize, f), r)));
            out[start..].sort_by_key(|&(c, _)| c);
        }
        out
    }

    fn find_split(&mut self, node: &mut PendingNode) -> Option<SplitCandidate> {
        let mut best = Best::new(self.params);
        match &node.hist {
            Some(h) => scan_histogram(h, self.binned, &self.features, &mut best),
            None => {
                let sorted = node.sorted.get_or_insert_with(|| self.sorted_codes(&node.rows));
                scan_sparse(
                    self.binned,
                    sorted,
                    &self.features,
                    self.grad,
                    self.hess,
                    &mut best,
                    &mut self.present,
                )
            }
        }
        best.best
    }

    /// Split the parent's sorted lists, keeping each segment's order.
    fn partition_sorted(&self, sorted: &[(u16, u32)], rows: &[u32], n_left: usize) -> (Vec<(u16, u32)>, Vec<(u16, u32)>) {
        let n_features = self.features.len();
        let mut left = Vec::with_capacity(n_left * n_features);
        let mut right = Vec::with_capacity((rows.len() - n_left) * n_features);
        for &(c, r) in sorted {
            if self.goes_left[r as usize] {
                left.push((c, r));
            } else {
                right.push((c, r));
            }
        }
        (left, right)
    }

    /// Grow one tree on `rows`. Returns the tree and, per node, the split
    /// bin used (for code-based routing of the training rows).
    fn grow(&mut self, rows: Vec<u32>) -> (RegressionTree, Vec<usize>) {
        let lambda = self.params.l2_lambda;
        let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
        let mut covers = vec![0.0];
        let mut split_bins = vec![0usize];
        let mut max_depth_reached = 0;

        let stats = self.node_stats(&rows);
        let hist = (!self.is_sparse(&rows)).then(|| self.histogram(&rows));
        let mut level = vec![PendingNode {
            id: 0,
            rows,
            depth: 0,
            stats,
            hist,
            sorted: None,
        }];

        while !level.is_empty() {
            let mut next = Vec::new();
            for mut node in level {
                covers[node.id] = node.stats.hess;
                max_depth_reached = max_depth_reached.max(node.depth);
                let split = if node.depth < self.params.max_depth && node.rows.len() >= 2 {
                    self.find_split(&mut node)
                } else {
                    None
                };
                let Some(split) = split else {
                    nodes[node.id] = TreeNode::Leaf {
                        value: leaf_value(node.stats, lambda),
                    };
                    continue;
                };

                let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
                for &r in &node.rows {
                    let code = self.binned.code(r as usize, split.feature);
                    let go_left = if code == MISSING_CODE {
                        split.missing_left
                    } else {
                        code as usize <= split.bin
                    };
                    self.goes_left[r as usize] = go_left;
                    if go_left {
                        left_rows.push(r);
                    } else {
                        right_rows.push(r);
                    }
                }

                // children at max depth become leaves and need no histogram
                let children_split = node.depth + 1 < self.params.max_depth;
                let (left_hist, right_hist) = match &node.hist {
                    Some(parent)
                        if children_split && (!self.is_sparse(&left_rows) || !self.is_sparse(&right_rows)) =>
                    {
                        let left_smaller = left_rows.len() <= right_rows.len();
                        let (small, large_sparse) = if left_smaller {
                            (&left_rows, self.is_sparse(&right_rows))
                        } else {
                            (&right_rows, self.is_sparse(&left_rows))
                        };
                        let small_hist = self.histogram(small);
                        let large_hist = (!large_sparse).then(|| parent.subtract(&small_hist));
                        let small_hist = (!self.is_sparse(small)).then_some(small_hist);
                        if left_smaller {
                            (small_hist, large_hist)
                        } else {
                            (large_hist, small_hist)
                        }
                    }
                    Some(_) => (None, None),
                    None => (None, None),
                };
                let (left_sorted, right_sorted) = match node.sorted.take() {
                    Some(sorted) if children_split => {
                        let (l, r) = self.partition_sorted(&sorted, &node.rows, left_rows.len());
                        (Some(l), Some(r))
                    }
                    _ => (None, None),
                };

                let left_id = nodes.len();
                let right_id = left_id + 1;
                nodes.push(TreeNode::Leaf { value: 0.0 });
                nodes.push(TreeNode::Leaf { value: 0.0 });
                covers.extend([0.0, 0.0]);
                split_bins.extend([0, 0]);
                nodes[node.id] = TreeNode::Internal {
                    feature: split.feature,
                    threshold: self.binned.edges(split.feature)[split.bin],
                    default_left: split.missing_left,
                    left: left_id,
                    right: right_id,
                };
                split_bins[node.id] = split.bin;

                let left_stats = self.node_stats(&left_rows);
                let right_stats = self.node_stats(&right_rows);
                next.push(PendingNode {
                    id: left_id,
                    rows: left_rows,
                    depth: node.depth + 1,
                    stats: left_stats,
                    hist: left_hist,
                    sorted: left_sorted,
                });
                next.push(PendingNode {
                    id: right_id,
                    rows: right_rows,
                    depth: node.depth + 1,
                    stats: right_stats,
                    hist: right_hist,
                    sorted: right_sorted,
                });
            }
            level = next;
        }

        (
            RegressionTree {
                nodes,
                root: 0,
                max_depth_reached,
                covers: Some(covers),
            },
            split_bins,
        )
    }
}

/// Leaf reached by a training row, routed on bin codes. Equivalent to the
/// raw-threshold routing because every threshold is a bin edge.
fn leaf_by_codes(tree: &RegressionTree, split_bins: &[usize], codes: &[u16]) -> f64 {
    let mut i = tree.root;
    loop {
        match tree.nodes[i] {
            TreeNode::Leaf { value } => return value,
            TreeNode::Internal {
                feature,
                default_left,
                left,
                right,
                ..
            } => {
                let code = codes[feature];
                let go_left = if code == MISSING_CODE {
                    default_left
                } else {
                    code as usize <= split_bins[i]
                };
                i = if go_left { left } else { right };
            }
        }
    }
}

/// Fit a boosted ensemble to `y` on the binned table.
pub fn train_gbdt(binned: &BinnedTable, y: &TargetVector, params: &GbdtParams) -> Result<Ensemble> {
    params.validate()?;
    let n = binned.n_rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} binned rows",
            y.len(),
            n
        )));
    }
    if let Some(i) = y.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(format!("target on row {i} is not finite")));
    }

    let base_score = y.values.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let hess = vec![1.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_cols = binned.n_cols();
    let n_sample_rows = ((params.subsample_rows * n as f64).round() as usize).clamp(1, n);
    let n_sample_cols = ((params.subsample_cols * n_cols as f64).ceil() as usize).clamp(1, n_cols.max(1));

    let mut trees = Vec::with_capacity(params.n_trees);
    let mut goes_left = vec![false; n];
    for _ in 0..params.n_trees {
        for i in 0..n {
            grad[i] = pred[i] - y.values[i];
        }
        let rows: Vec<u32> = if n_sample_rows < n {
            let mut r: Vec<u32> = index::sample(&mut rng, n, n_sample_rows)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            r.sort_unstable();
            r
        } else {
            (0..n as u32).collect()
        };
        let features: Vec<usize> = if n_sample_cols < n_cols {
            let mut f = index::sample(&mut rng, n_cols, n_sample_cols).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..n_cols).collect()
        };

        let mut builder = TreeBuilder {
            binned,
            params,
            grad: &grad,
            hess: &hess,
            features,
            sparse_rows: params.n_bins / SPARSE_DIVISOR,
            present: Vec::new(),
            goes_left: std::mem::take(&mut goes_left),
        };
        let (tree, split_bins) = builder.grow(rows);
        goes_left = builder.goes_left;
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * leaf_by_codes(&tree, &split_bins, binned.row_codes(i));
        }
        trees.push(tree);
    }

    Ok(Ensemble {
        trees,
        base_score,
        learning_rate: params.learning_rate,
        mode: EnsembleMode::Gbdt,
        feature_names: binned.names().to_vec(),
        target_scale: y.scale,
        meta: TrainingMeta {
            params: params.to_map(),
            seed: params.seed,
            n_rows: n,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureTable;
    use crate::trees::binning::bin_features;

    fn table(rows: &[Vec<f64>]) -> FeatureTable {
        let names = (0..rows[0].len()).map(|i| format!("f{i}")).collect();
        FeatureTable::from_rows(names, rows).unwrap()
    }

    #[test]
    fn single_row_predicts_its_target() {
        let ft = table(&[vec![1.0, 2.0]]);
        let b = bin_features(&ft, 16).unwrap();
        let y = TargetVector::transformed(vec![3.7]);
        let m = train_gbdt(&b, &y, &GbdtParams { n_trees: 5, ..Default::default() }).unwrap();
        assert_eq!(m.predict(&ft).unwrap(), vec![3.7]);
    }

    #[test]
    fn step_function_stump() {
        // y = 1 on x=0, y = 5 on x=1 -> residual means -2 and +2 around base 3
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![(i % 2) as f64]).collect();
        let y = TargetVector::transformed((0..10).map(|i| if i % 2 == 0 { 1.0 } else { 5.0 }).collect());
        let ft = table(&rows);
        let b = bin_features(&ft, 16).unwrap();
        let params = GbdtParams {
            n_trees: 1,
            max_depth: 1,
            l2_lambda: 0.0,
            learning_rate: 1.0,
            ..Default::default()
        };
        let m = train_gbdt(&b, &y, &params).unwrap();
        assert_eq!(m.base_score, 3.0);
        let t = &m.trees[0];
        assert_eq!(t.nodes.len(), 3);
        match (&t.nodes[1], &t.nodes[2]) {
            (TreeNode::Leaf { value: l }, TreeNode::Leaf { value: r }) => {
                assert_eq!(*l, -2.0);
                assert_eq!(*r, 2.0);
            }
            _ => panic!("expected two leaves"),
        }
        let pred = m.predict(&ft).unwrap();
        let rmse = (pred.iter().zip(&y.values).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 10.0).sqrt();
        assert!(rmse < 1e-12);
        assert_eq!(t.covers.as_ref().unwrap(), &vec![10.0, 5.0, 5.0]);
    }

    #[test]
    fn missing_values_pick_a_direction() {
        // missing rows look like the high group
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| match i % 3 {
                0 => vec![0.0],
                1 => vec![1.0],
                _ => vec![f64::NAN],
            })
            .collect();
        let y = TargetVector::transformed((0..12).map(|i| if i % 3 == 0 { 0.0 } else { 4.0 }).collect());
        let ft = table(&rows);
        let b = bin_features(&ft, 16).unwrap();
        let params = GbdtParams { n_trees: 1, max_depth: 1, l2_lambda: 0.0, learning_rate: 1.0, ..Default::default() };
        let m = train_gbdt(&b, &y, &params).unwrap();
        match m.trees[0].nodes[0] {
            TreeNode::Internal { default_left, .. } => assert!(!default_left),
            _ => panic!("expected a split"),
        }
        let pred = m.predict(&ft).unwrap();
        for (p, t) in pred.iter().zip(&y.values) {
            assert!((p - t).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_and_histogram_scans_agree() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let n = rng.random_range(2..40);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..3)
                        .map(|_| if rng.random::<f64>() < 0.15 { f64::NAN } else { (rng.random::<f64>() * 6.0).floor() })
                        .collect()
                })
                .collect();
            let ft = table(&rows);
            let b = bin_features(&ft, 8).unwrap();
            let grad: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let hess = vec![1.0; n];
            let rows: Vec<u32> = (0..n as u32).collect();
            let features = vec![0, 1, 2];
            let params = GbdtParams { l2_lambda: 0.5, ..Default::default() };
            let mut dense = Best::new(&params);
            let h = Histogram::build(&b, &rows, &features, &grad, &hess);
            scan_histogram(&h, &b, &features, &mut dense);
            let mut sparse = Best::new(&params);
            let mut sorted = Vec::new();
            for &f in &features {
                let mut seg: Vec<(u16, u32)> = rows.iter().map(|&r| (b.code(r as usize, f), r)).collect();
                seg.sort_by_key(|&(c, _)| c);
                sorted.extend(seg);
            }
            scan_sparse(&b, &sorted, &features, &grad, &hess, &mut sparse, &mut Vec::new());
            assert_eq!(dense.best, sparse.best);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let ft = table(&[vec![1.0], vec![2.0]]);
        let b = bin_features(&ft, 16).unwrap();
        let y = TargetVector::transformed(vec![1.0]);
        assert!(matches!(train_gbdt(&b, &y, &GbdtParams::default()), Err(Error::DimensionMismatch(_))));
        let y = TargetVector::transformed(vec![1.0, 2.0]);
        let bad = GbdtParams { learning_rate: 0.0, ..Default::default() };
        assert!(matches!(train_gbdt(&b, &y, &bad), Err(Error::InvalidParams(_))));
    }
}
