//! Regression trees over bin indices and their level-wise grower.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::BinnedDataset;
use crate::histogram::{build_grad_histograms, GradHessHistogram, GradStats, HistogramError};
use crate::split::{best_split, leaf_weight};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("no histogram received for frontier node {0}")]
    MissingHistogram(usize),
    #[error("histogram for node {0} which is not on the frontier")]
    UnexpectedHistogram(usize),
    #[error("tree is still growing ({0} open nodes)")]
    Unfinished(usize),
    #[error("no parent histogram for node {0}")]
    MissingParent(usize),
    #[error(transparent)]
    Histogram(#[from] HistogramError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split { feature: usize, bin_threshold: u16, left: usize, right: usize },
    Leaf { weight: f64 },
}

/// A binary tree stored as a node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn single_leaf(weight: f64) -> Self {
        Self { nodes: vec![Node::Leaf { weight }] }
    }

    /// Checks that every split points at existing, later nodes.
    pub fn from_nodes(nodes: Vec<Node>) -> Option<Self> {
        if nodes.is_empty() {
            return None;
        }
        for (i, n) in nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = *n {
                if left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                    return None;
                }
            }
        }
        Some(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_index(&self, row: &[u16]) -> usize {
        let mut i = 0;
        while let Node::Split { feature, bin_threshold, left, right } = self.nodes[i] {
            i = if row[feature] <= bin_threshold { left } else { right };
        }
        i
    }

    pub fn predict(&self, row: &[u16]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { weight } => weight,
            Node::Split { .. } => unreachable!("leaf_index stops at a leaf"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    pub lambda: f64,
    pub gamma: f64,
    pub max_depth: usize,
    pub min_child_count: u64,
}

/// A split decided at one level, announced to clients so they can route
/// their rows to the children.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitDecision {
    pub node: usize,
    pub feature: usize,
    pub bin_threshold: u16,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone)]
enum Pending {
    Open,
    Done(Node),
}

/// Level-wise tree growth driven by externally supplied histograms.
///
/// Each level the caller fetches [`frontier`](Self::frontier), produces one
/// histogram per frontier node and hands them to
/// [`apply_level`](Self::apply_level). Nodes created at `max_depth` become
/// leaves immediately using the child statistics of their parent's split, so
/// a tree of depth `T` needs at most `T` histogram levels.
///
/// Below the root only the child with fewer rows of each split needs a
/// built histogram ([`nodes_to_build`](Self::nodes_to_build)); its sibling
/// is the parent minus that child ([`complete_level`](Self::complete_level)),
/// which is exact because histogram sums are fixed-point.
#[derive(Debug, Clone)]
pub struct TreeGrower {
    params: GrowParams,
    nodes: Vec<Pending>,
    frontier: Vec<usize>,
    depth: usize,
    /// `(built child, derived child, parent)` for every open sibling pair.
    siblings: Vec<(usize, usize, usize)>,
}

impl TreeGrower {
    pub fn new(params: GrowParams) -> Self {
        Self { params, nodes: vec![Pending::Open], frontier: vec![0], depth: 0, siblings: Vec::new() }
    }

    pub fn frontier(&self) -> &[usize] {
        &self.frontier
    }

    /// Frontier nodes whose histograms must be built from rows.
    pub fn nodes_to_build(&self) -> Vec<usize> {
        self.frontier.iter().copied().filter(|n| !self.siblings.iter().any(|s| s.1 == *n)).collect()
    }

    /// Full frontier histograms, in frontier order, from the built ones and
    /// the previous level's histograms.
    pub fn complete_level(
        &self,
        built: Vec<GradHessHistogram>,
        parents: &[GradHessHistogram],
    ) -> Result<Vec<GradHessHistogram>, TreeError> {
        let mut slots: Vec<Option<GradHessHistogram>> = vec![None; self.frontier.len()];
        let slot = |node: usize| self.frontier.iter().position(|&n| n == node);
        for h in built {
            let i = slot(h.node_id).ok_or(TreeError::UnexpectedHistogram(h.node_id))?;
            slots[i] = Some(h);
        }
        for &(built, derived, parent) in &self.siblings {
            let child = slot(built).and_then(|i| slots[i].as_ref()).ok_or(TreeError::MissingHistogram(built))?;
            let parent_hist = parents.iter().find(|h| h.node_id == parent).ok_or(TreeError::MissingParent(derived))?;
            let sibling = parent_hist.difference(child, derived)?;
            let i = slot(derived).ok_or(TreeError::UnexpectedHistogram(derived))?;
            slots[i] = Some(sibling);
        }
        self.frontier.iter().zip(slots).map(|(&n, h)| h.ok_or(TreeError::MissingHistogram(n))).collect()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn is_done(&self) -> bool {
        self.frontier.is_empty()
    }

    fn leaf(&self, stats: GradStats) -> Node {
        // H + λ can only be non-positive for an empty or fully saturated
        // node with λ = 0; such a node contributes nothing.
        let weight = leaf_weight(stats.sum_g(), stats.sum_h(), self.params.lambda).unwrap_or(0.0);
        Node::Leaf { weight }
    }

    /// Consumes the merged histograms for the current frontier and returns
    /// the splits made.
    pub fn apply_level(&mut self, hists: &[GradHessHistogram]) -> Result<Vec<SplitDecision>, TreeError> {
        for h in hists {
            if !self.frontier.contains(&h.node_id) {
                return Err(TreeError::UnexpectedHistogram(h.node_id));
            }
        }
        let frontier = std::mem::take(&mut self.frontier);
        self.siblings.clear();
        let mut next = Vec::new();
        let mut decisions = Vec::new();
        for node in frontier {
            let hist = hists.iter().find(|h| h.node_id == node).ok_or(TreeError::MissingHistogram(node))?;
            let p = self.params;
            match best_split(hist, p.lambda, p.gamma, p.min_child_count) {
                Some(split) => {
                    let left = self.nodes.len();
                    let right = left + 1;
                    let children_are_leaves = self.depth + 1 >= p.max_depth;
                    for stats in [split.left, split.right] {
                        if children_are_leaves {
                            let leaf = self.leaf(stats);
                            self.nodes.push(Pending::Done(leaf));
                        } else {
                            self.nodes.push(Pending::Open);
                        }
                    }
                    if !children_are_leaves {
                        next.extend([left, right]);
                        let (built, derived) =
                            if split.left.count <= split.right.count { (left, right) } else { (right, left) };
                        self.siblings.push((built, derived, node));
                    }
                    self.nodes[node] = Pending::Done(Node::Split {
                        feature: split.feature,
                        bin_threshold: split.bin_threshold,
                        left,
                        right,
                    });
                    decisions.push(SplitDecision {
                        node,
                        feature: split.feature,
                        bin_threshold: split.bin_threshold,
                        left,
                        right,
                    });
                }
                None => {
                    self.nodes[node] = Pending::Done(self.leaf(hist.totals()));
                }
            }
        }
        self.frontier = next;
        self.depth += 1;
        Ok(decisions)
    }

    pub fn finish(self) -> Result<Tree, TreeError> {
        if !self.frontier.is_empty() {
            return Err(TreeError::Unfinished(self.frontier.len()));
        }
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| match n {
                Pending::Done(node) => node,
                Pending::Open => unreachable!("open nodes are always on the frontier"),
            })
            .collect();
        Ok(Tree { nodes })
    }
}

/// Moves rows that sit in a split node to the matching child.
pub fn route_rows(data: &BinnedDataset, node_of: &mut [usize], rows: &[usize], splits: &[SplitDecision]) {
    let Some(max_node) = splits.iter().map(|s| s.node).max() else {
        return;
    };
    let mut by_node: Vec<Option<&SplitDecision>> = vec![None; max_node + 1];
    for s in splits {
        by_node[s.node] = Some(s);
    }
    for &r in rows {
        if let Some(Some(s)) = by_node.get(node_of[r]) {
            node_of[r] = if data.bin(r, s.feature) <= s.bin_threshold { s.left } else { s.right };
        }
    }
}

/// Builds the histograms a level needs and completes the frontier by
/// sibling subtraction. `prev` holds the previous level's histograms and
/// is replaced by this level's.
pub fn level_histograms<'a>(
    grower: &TreeGrower,
    prev: &'a mut Vec<GradHessHistogram>,
    build: impl FnOnce(&[usize]) -> Result<Vec<GradHessHistogram>, TreeError>,
) -> Result<&'a [GradHessHistogram], TreeError> {
    let built = build(&grower.nodes_to_build())?;
    *prev = grower.complete_level(built, prev)?;
    Ok(prev)
}

/// Grows one tree on a single dataset from per-row gradients, using only
/// the rows in `rows`.
pub fn grow_tree(
    data: &BinnedDataset,
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    params: GrowParams,
) -> Result<Tree, TreeError> {
    let mut grower = TreeGrower::new(params);
    let mut node_of = vec![0usize; data.n_rows()];
    let mut prev = Vec::new();
    while !grower.is_done() {
        let hists = level_histograms(&grower, &mut prev, |nodes| {
            Ok(build_grad_histograms(data, grad, hess, &node_of, rows, nodes)?)
        })?;
        let splits = grower.apply_level(hists)?;
        route_rows(data, &mut node_of, rows, &splits);
    }
    grower.finish()
}
