//! Fully grown regression trees on categorical submodel features.
//!
//! Each configuration is summarised by its observation count, mean and
//! within-configuration sum of squares, which is all the tree ever needs:
//! the sum of squares of any union of configurations follows from those
//! three numbers exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::OutputTable;

/// Sufficient statistics of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigStats {
    pub count: f64,
    pub mean: f64,
    /// Sum of squared deviations from `mean`.
    pub ss: f64,
}

impl ConfigStats {
    pub fn from_outputs(ys: &[f64]) -> Self {
        let count = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / count;
        let ss = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
        Self { count, mean, ss }
    }
}

/// Features and per-configuration statistics a tree is grown on.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeData {
    /// Level tuple of every configuration.
    pub levels: Vec<Vec<usize>>,
    pub stats: Vec<ConfigStats>,
    /// Number of categorical features (`L`).
    pub features: usize,
}

impl TreeData {
    pub fn from_table(table: &OutputTable) -> Self {
        Self {
            levels: table.design.entries.clone(),
            stats: table.outputs.iter().map(|r| ConfigStats::from_outputs(r)).collect(),
            features: table.design.submodels(),
        }
    }

    pub fn total_count(&self) -> f64 {
        self.stats.iter().map(|s| s.count).sum()
    }

    /// Within-configuration sum of squares.
    pub fn within_ss(&self) -> f64 {
        self.stats.iter().map(|s| s.ss).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub submodel: usize,
    /// Levels sent to the left child, sorted.
    pub left_levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Indices into [`TreeData::stats`].
    pub configs: Vec<usize>,
    pub count: f64,
    pub node_mean: f64,
    pub node_ss: f64,
    pub split: Option<Split>,
    /// Arena indices of the left and right child.
    pub children: Option<(usize, usize)>,
    /// `node_ss - left_ss - right_ss`; zero for leaves.
    pub delta_tss: f64,
}

/// Arena of nodes; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    pub features: usize,
}

fn pooled(stats: &[ConfigStats], configs: &[usize]) -> ConfigStats {
    let count: f64 = configs.iter().map(|&c| stats[c].count).sum();
    let mean = configs.iter().map(|&c| stats[c].count * stats[c].mean).sum::<f64>() / count;
    let ss = configs
        .iter()
        .map(|&c| {
            let s = &stats[c];
            s.ss + s.count * (s.mean - mean) * (s.mean - mean)
        })
        .sum();
    ConfigStats { count, mean, ss }
}

/// Between-group sum of squares of a two-way partition.
pub fn split_gain(left: (f64, f64), right: (f64, f64)) -> f64 {
    let (nl, sl) = left;
    let (nr, sr) = right;
    let d = sl / nl - sr / nr;
    nl * nr / (nl + nr) * d * d
}

struct Candidate {
    gain: f64,
    submodel: usize,
    left: Vec<usize>,
}

impl Candidate {
    /// Larger gain wins; near-ties go to the lower submodel, then the smaller left set.
    fn beats(&self, other: &Candidate, scale: f64) -> bool {
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        if self.gain > other.gain + tol {
            return true;
        }
        if self.gain < other.gain - tol {
            return false;
        }
        (self.submodel, &self.left) < (other.submodel, &other.left)
    }
}

/// Best partition of one feature's levels inside a node, by mean ordering.
fn best_for_feature(data: &TreeData, configs: &[usize], feature: usize) -> Option<Candidate> {
    // (level, count, sum)
    let mut groups: Vec<(usize, f64, f64)> = Vec::new();
    for &c in configs {
        let level = data.levels[c][feature];
        let s = &data.stats[c];
        match groups.iter_mut().find(|g| g.0 == level) {
            Some(g) => {
                g.1 += s.count;
                g.2 += s.count * s.mean;
            }
            None => groups.push((level, s.count, s.count * s.mean)),
        }
    }
    if groups.len() < 2 {
        return None;
    }
    groups.sort_by(|a, b| (a.2 / a.1).total_cmp(&(b.2 / b.1)).then(a.0.cmp(&b.0)));
    let total_n: f64 = groups.iter().map(|g| g.1).sum();
    let total_s: f64 = groups.iter().map(|g| g.2).sum();
    let scale = groups.iter().map(|g| (g.2 / g.1).abs()).fold(0.0, f64::max).powi(2) * total_n;
    let mut best: Option<Candidate> = None;
    let (mut nl, mut sl) = (0.0, 0.0);
    for cut in 1..groups.len() {
        nl += groups[cut - 1].1;
        sl += groups[cut - 1].2;
        let gain = split_gain((nl, sl), (total_n - nl, total_s - sl));
        let mut left: Vec<usize> = groups[..cut].iter().map(|g| g.0).collect();
        let mut right: Vec<usize> = groups[cut..].iter().map(|g| g.0).collect();
        left.sort_unstable();
        right.sort_unstable();
        // Either side may be called "left"; keep the smaller one canonical.
        if (right.len(), &right) < (left.len(), &left) {
            std::mem::swap(&mut left, &mut right);
        }
        let cand = Candidate {
            gain,
            submodel: feature,
            left,
        };
        if best.as_ref().is_none_or(|b| cand.beats(b, scale)) {
            best = Some(cand);
        }
    }
    best
}

fn best_split(data: &TreeData, configs: &[usize]) -> Option<Candidate> {
    let scale = pooled(&data.stats, configs).ss.abs() + 1.0;
    let mut best: Option<Candidate> = None;
    for feature in 0..data.features {
        if let Some(c) = best_for_feature(data, configs, feature) {
            if best.as_ref().is_none_or(|b| c.beats(b, scale)) {
                best = Some(c);
            }
        }
    }
    best
}

/// Grows the tree until every leaf holds one configuration.
pub fn grow_tree(data: &TreeData) -> Result<Tree> {
    if data.stats.is_empty() {
        return Err(Error::InvalidArgument("no configurations to grow a tree on".into()));
    }
    let root_configs: Vec<usize> = (0..data.stats.len()).collect();
    let mut nodes = vec![make_node(data, root_configs)];
    let mut pending = vec![0usize];
    while let Some(id) = pending.pop() {
        if nodes[id].configs.len() < 2 {
            continue;
        }
        let cand = best_split(data, &nodes[id].configs).ok_or_else(|| Error::UnsplittableNode {
            first: nodes[id].configs[0],
            second: nodes[id].configs[1],
        })?;
        let (left, right): (Vec<usize>, Vec<usize>) = nodes[id]
            .configs
            .iter()
            .partition(|&&c| cand.left.binary_search(&data.levels[c][cand.submodel]).is_ok());
        let l = make_node(data, left);
        let r = make_node(data, right);
        let node = &mut nodes[id];
        node.delta_tss = (node.node_ss - l.node_ss - r.node_ss).max(0.0);
        node.split = Some(Split {
            submodel: cand.submodel,
            left_levels: cand.left,
        });
        let li = nodes.len();
        nodes.push(l);
        nodes.push(r);
        nodes[id].children = Some((li, li + 1));
        pending.push(li + 1);
        pending.push(li);
    }
    Ok(Tree {
        nodes,
        features: data.features,
    })
}

fn make_node(data: &TreeData, configs: Vec<usize>) -> TreeNode {
    let p = pooled(&data.stats, &configs);
    TreeNode {
        configs,
        count: p.count,
        node_mean: p.mean,
        node_ss: p.ss,
        split: None,
        children: None,
        delta_tss: 0.0,
    }
}

impl Tree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn tss(&self) -> f64 {
        self.root().node_ss
    }

    /// Sum of leaf sums of squares.
    pub fn rss(&self) -> f64 {
        self.leaves().map(|n| n.node_ss).sum()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.children.is_none())
    }

    pub fn splits(&self) -> impl Iterator<Item = (&Split, f64)> {
        self.nodes.iter().filter_map(|n| n.split.as_ref().map(|s| (s, n.delta_tss)))
    }

    /// Leaf mean reached by a level tuple.
    pub fn predict(&self, levels: &[usize]) -> f64 {
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            match (&node.split, node.children) {
                (Some(split), Some((l, r))) => {
                    id = if split.left_levels.binary_search(&levels[split.submodel]).is_ok() {
                        l
                    } else {
                        r
                    };
                }
                _ => return node.node_mean,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(levels: Vec<Vec<usize>>, outputs: Vec<Vec<f64>>) -> TreeData {
        let features = levels[0].len();
        TreeData {
            levels,
            stats: outputs.iter().map(|r| ConfigStats::from_outputs(r)).collect(),
            features,
        }
    }

    #[test]
    fn single_configuration_is_a_leaf() {
        let t = grow_tree(&data(vec![vec![0, 0]], vec![vec![1.0, 2.0, 4.0]])).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.splits().count(), 0);
        assert!((t.tss() - t.rss()).abs() < 1e-12);
    }

    #[test]
    fn two_configurations_one_split() {
        let d = data(vec![vec![0, 1], vec![0, 2]], vec![vec![1.0, 2.0, 3.0], vec![5.0, 6.0, 10.0]]);
        let t = grow_tree(&d).unwrap();
        let splits: Vec<_> = t.splits().collect();
        assert_eq!(splits.len(), 1);
        assert_eq!(splits[0].0.submodel, 1);
        let (m1, m2) = (2.0, 7.0);
        assert!((splits[0].1 - 3.0 * (m1 - m2) * (m1 - m2) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_levels_are_unsplittable() {
        let d = data(vec![vec![0], vec![0]], vec![vec![1.0], vec![2.0]]);
        assert!(matches!(grow_tree(&d), Err(Error::UnsplittableNode { .. })));
    }

    #[test]
    fn ties_go_to_lowest_submodel() {
        // Both features separate the same two configurations.
        let d = data(vec![vec![0, 0], vec![1, 1]], vec![vec![0.0], vec![1.0]]);
        let t = grow_tree(&d).unwrap();
        assert_eq!(t.root().split.as_ref().unwrap().submodel, 0);
    }

    #[test]
    fn prediction_is_configuration_mean() {
        let d = data(
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]],
            vec![vec![1.0, 3.0], vec![10.0, 12.0], vec![4.0, 4.0], vec![-1.0, 0.0]],
        );
        let t = grow_tree(&d).unwrap();
        for (lv, s) in d.levels.iter().zip(&d.stats) {
            assert!((t.predict(lv) - s.mean).abs() < 1e-12);
        }
        let total: f64 = t.splits().map(|(_, g)| g).sum();
        assert!((t.tss() - t.rss() - total).abs() < 1e-9 * t.tss());
        assert!((t.rss() - d.within_ss()).abs() < 1e-12);
    }
}
