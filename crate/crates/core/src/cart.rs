//! CART regression trees.
//!
//! Splits maximize the empirical variance decrease
//! `L(j, a) = SSE(node)/N - (SSE(left) + SSE(right))/N`, evaluated only at
//! midpoints of consecutive distinct sample values. Points with
//! `x[j] >= a` route right, including boundary ties.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
pub enum CartError {
    /// Threshold does not produce a two-sided cut within the node.
    ThresholdOutsideRange { feature: usize, threshold: f64 },
    EmptyNode,
    Parse(String),
}

impl core::fmt::Display for CartError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CartError::ThresholdOutsideRange { feature, threshold } => write!(
                f,
                "threshold {threshold} is outside the node range of feature {feature}"
            ),
            CartError::EmptyNode => write!(f, "node has no samples"),
            CartError::Parse(msg) => write!(f, "tree parse error: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CartError {}

/// An axis-aligned cut: feature index, midpoint threshold, and the variance
/// decrease it achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// Split every node above positive gain until this depth.
    MaxDepth(usize),
    /// Best-first growth until exactly this many leaves (or no positive
    /// gain remains anywhere).
    ExactLeaves(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
        depth: usize,
    },
    Leaf {
        mean: f64,
        count: usize,
        depth: usize,
    },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Internal { depth, .. } | Node::Leaf { depth, .. } => *depth,
        }
    }
}

/// Binary regression tree stored as a pre-order arena (root at index 0).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.len() - self.leaf_count()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(Node::depth).max().unwrap_or(0)
    }

    /// Arena ids of internal nodes in pre-order.
    pub fn internal_preorder(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| !self.nodes[i].is_leaf())
            .collect()
    }

    /// Arena ids of leaves in pre-order.
    pub fn leaves_preorder(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_leaf())
            .collect()
    }

    /// Routes `x` to its leaf; boundary values go right.
    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_features);
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { mean, .. } => return *mean,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    id = if x[*feature] >= *threshold { *right } else { *left };
                }
            }
        }
    }

    /// Arena id of the leaf that `x` falls into.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    id = if x[*feature] >= *threshold { *right } else { *left };
                }
            }
        }
    }

    /// All split thresholds as (feature, threshold) pairs.
    pub fn thresholds(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Internal {
                    feature, threshold, ..
                } => Some((*feature, *threshold)),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    /// Builds a tree from explicit pre-order nodes. Validates child links.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize) -> Result<Self, CartError> {
        if nodes.is_empty() {
            return Err(CartError::Parse(String::from("empty node list")));
        }
        for (id, node) in nodes.iter().enumerate() {
            if let Node::Internal {
                left,
                right,
                feature,
                ..
            } = node
            {
                if *left >= nodes.len() || *right >= nodes.len() || *left == id || *right == id {
                    return Err(CartError::Parse(alloc::format!(
                        "node {id} has out-of-range children"
                    )));
                }
                if *feature >= n_features {
                    return Err(CartError::Parse(alloc::format!(
                        "node {id} splits feature {feature} but d = {n_features}"
                    )));
                }
            }
        }
        Ok(RegressionTree { nodes, n_features })
    }

    /// Line-oriented text encoding; floats round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("tree v1\n");
        out.push_str(&alloc::format!("features {}\n", self.n_features));
        out.push_str(&alloc::format!("nodes {}\n", self.nodes.len()));
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Internal {
                    feature,
                    threshold,
                    gain,
                    left,
                    right,
                    depth,
                } => out.push_str(&alloc::format!(
                    "{id} internal {feature} {threshold} {gain} {left} {right} {depth}\n"
                )),
                Node::Leaf { mean, count, depth } => {
                    out.push_str(&alloc::format!("{id} leaf {mean} {count} {depth}\n"))
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CartError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let parse_err = |msg: &str| CartError::Parse(String::from(msg));
        let header = lines.next().ok_or_else(|| parse_err("missing header"))?;
        if header.trim() != "tree v1" {
            return Err(parse_err("expected `tree v1` header"));
        }
        let n_features = parse_kv(lines.next(), "features")?;
        let n_nodes = parse_kv(lines.next(), "nodes")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for expected_id in 0..n_nodes {
            let line = lines.next().ok_or_else(|| parse_err("missing node line"))?;
            let mut tok = line.split_whitespace();
            let id: usize = next_tok(&mut tok)?;
            if id != expected_id {
                return Err(parse_err("node ids must be sequential"));
            }
            let kind: &str = tok.next().ok_or_else(|| parse_err("missing node kind"))?;
            let node = match kind {
                "internal" => Node::Internal {
                    feature: next_tok(&mut tok)?,
                    threshold: next_tok(&mut tok)?,
                    gain: next_tok(&mut tok)?,
                    left: next_tok(&mut tok)?,
                    right: next_tok(&mut tok)?,
                    depth: next_tok(&mut tok)?,
                },
                "leaf" => Node::Leaf {
                    mean: next_tok(&mut tok)?,
                    count: next_tok(&mut tok)?,
                    depth: next_tok(&mut tok)?,
                },
                other => {
                    return Err(CartError::Parse(alloc::format!("unknown node kind `{other}`")))
                }
            };
            nodes.push(node);
        }
        RegressionTree::from_nodes(nodes, n_features)
    }
}

fn parse_kv(line: Option<&str>, key: &str) -> Result<usize, CartError> {
    let line = line.ok_or_else(|| CartError::Parse(alloc::format!("missing `{key}` line")))?;
    let mut tok = line.split_whitespace();
    if tok.next() != Some(key) {
        return Err(CartError::Parse(alloc::format!("expected `{key}` line")));
    }
    next_tok(&mut tok)
}

fn next_tok<'a, T: core::str::FromStr>(
    tok: &mut impl Iterator<Item = &'a str>,
) -> Result<T, CartError> {
    tok.next()
        .ok_or_else(|| CartError::Parse(String::from("missing token")))?
        .parse()
        .map_err(|_| CartError::Parse(String::from("malformed token")))
}

/// Convenience alias used across modules.
pub fn predict_tree(tree: &RegressionTree, x: &[f64]) -> f64 {
    tree.predict(x)
}

/// Variance-decrease criterion for cutting `feature` at `threshold` within
/// the node given by `samples`.
///
/// Computed as `(N_L (m_L - m)^2 + N_R (m_R - m)^2) / N`, which equals the
/// before/after SSE difference in exact arithmetic and is nonnegative by
/// construction.
pub fn criterion(
    ds: &Dataset,
    samples: &[usize],
    feature: usize,
    threshold: f64,
) -> Result<f64, CartError> {
    if samples.is_empty() {
        return Err(CartError::EmptyNode);
    }
    let mut sum = 0.0;
    let mut sum_l = 0.0;
    let mut n_l = 0usize;
    for &i in samples {
        let y = ds.target(i);
        sum += y;
        if ds.value(i, feature) < threshold {
            sum_l += y;
            n_l += 1;
        }
    }
    let n = samples.len();
    let n_r = n - n_l;
    if n_l == 0 || n_r == 0 {
        return Err(CartError::ThresholdOutsideRange { feature, threshold });
    }
    let mean = sum / n as f64;
    let mean_l = sum_l / n_l as f64;
    let mean_r = (sum - sum_l) / n_r as f64;
    let dl = mean_l - mean;
    let dr = mean_r - mean;
    Ok((n_l as f64 * dl * dl + n_r as f64 * dr * dr) / n as f64)
}

/// Best midpoint cut over the allowed features, or `None` when no cut has
/// positive gain. Ties break toward the lowest feature index, then the
/// lowest threshold.
pub fn best_cut(ds: &Dataset, samples: &[usize], features: &[usize]) -> Option<Split> {
    if samples.len() < 2 {
        return None;
    }
    let n = samples.len() as f64;
    let total: f64 = samples.iter().map(|&i| ds.target(i)).sum();
    let mean = total / n;

    let mut best: Option<Split> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
    for &feature in features {
        pairs.clear();
        pairs.extend(samples.iter().map(|&i| (ds.value(i, feature), ds.target(i))));
        pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut sum_l = 0.0;
        let mut n_l = 0usize;
        for w in 0..pairs.len() - 1 {
            sum_l += pairs[w].1;
            n_l += 1;
            let (v, next) = (pairs[w].0, pairs[w + 1].0);
            if v == next {
                continue;
            }
            let threshold = 0.5 * (v + next);
            // The midpoint of adjacent floats can round down onto `v`, which
            // would leak `v` to the right side. Skip such cuts.
            if !(threshold > v) {
                continue;
            }
            let n_r = pairs.len() - n_l;
            let mean_l = sum_l / n_l as f64;
            let mean_r = (total - sum_l) / n_r as f64;
            let dl = mean_l - mean;
            let dr = mean_r - mean;
            let gain = (n_l as f64 * dl * dl + n_r as f64 * dr * dr) / n;
            if gain > best.map_or(0.0, |b| b.gain) {
                best = Some(Split {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    // Report the gain through the standalone criterion so the two public
    // routes agree to the last bit on the selected cut.
    best.map(|b| Split {
        gain: criterion(ds, samples, b.feature, b.threshold).unwrap_or(b.gain),
        ..b
    })
}

struct BuildNode {
    samples: Vec<usize>,
    depth: usize,
    cut: Option<Split>,
    children: Option<(usize, usize)>,
}

struct Builder<'a> {
    ds: &'a Dataset,
    mtry: usize,
    arena: Vec<BuildNode>,
}

impl<'a> Builder<'a> {
    fn make_node(&mut self, samples: Vec<usize>, depth: usize, rng: &mut Rng) -> usize {
        let d = self.ds.n_features();
        let features = rng::sample_without_replacement(rng, d, self.mtry);
        let cut = best_cut(self.ds, &samples, &features);
        self.arena.push(BuildNode {
            samples,
            depth,
            cut,
            children: None,
        });
        self.arena.len() - 1
    }

    fn split(&mut self, id: usize, rng: &mut Rng) {
        let cut = self.arena[id].cut.expect("split on a node without a cut");
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for &i in &self.arena[id].samples {
            if self.ds.value(i, cut.feature) >= cut.threshold {
                right.push(i);
            } else {
                left.push(i);
            }
        }
        debug_assert!(!left.is_empty() && !right.is_empty());
        let depth = self.arena[id].depth;
        let l = self.make_node(left, depth + 1, rng);
        let r = self.make_node(right, depth + 1, rng);
        self.arena[id].children = Some((l, r));
    }

    /// Flattens the build arena into a pre-order node list.
    fn finish(self) -> Vec<Node> {
        let mut nodes = Vec::with_capacity(self.arena.len());
        let mut stack = alloc::vec![(0usize, usize::MAX)];
        // Iterative pre-order with patch-up of child indices.
        while let Some((build_id, parent_slot)) = stack.pop() {
            let id = nodes.len();
            if parent_slot != usize::MAX {
                if let Node::Internal { left, right, .. } = &mut nodes[parent_slot >> 1] {
                    if parent_slot & 1 == 0 {
                        *left = id;
                    } else {
                        *right = id;
                    }
                }
            }
            let b = &self.arena[build_id];
            match b.children {
                Some((l, r)) => {
                    let cut = b.cut.expect("internal node must carry its cut");
                    nodes.push(Node::Internal {
                        feature: cut.feature,
                        threshold: cut.threshold,
                        gain: cut.gain,
                        left: 0,
                        right: 0,
                        depth: b.depth,
                    });
                    // Push right first so left comes out of the stack first.
                    stack.push((r, (id << 1) | 1));
                    stack.push((l, id << 1));
                }
                None => {
                    let count = b.samples.len();
                    let mean = if count == 0 {
                        0.0 // 0/0 = 0 convention; unreachable for grown trees
                    } else {
                        b.samples.iter().map(|&i| self.ds.target(i)).sum::<f64>() / count as f64
                    };
                    nodes.push(Node::Leaf {
                        mean,
                        count,
                        depth: b.depth,
                    });
                }
            }
        }
        nodes
    }
}

/// Grows a tree on `samples` with per-node feature subsets of size `mtry`.
pub fn grow_tree_with_rng(
    ds: &Dataset,
    samples: &[usize],
    stop: StoppingRule,
    mtry: usize,
    rng: &mut Rng,
) -> RegressionTree {
    assert!(!samples.is_empty(), "grow_tree needs at least one sample");
    let mtry = mtry.clamp(1, ds.n_features());
    let mut b = Builder {
        ds,
        mtry,
        arena: Vec::new(),
    };
    b.make_node(samples.to_vec(), 0, rng);

    match stop {
        StoppingRule::MaxDepth(dmax) => {
            // Depth-first in creation order keeps rng draws in pre-order.
            let mut stack = alloc::vec![0usize];
            while let Some(id) = stack.pop() {
                let can_split = b.arena[id].depth < dmax && b.arena[id].cut.is_some();
                if can_split {
                    b.split(id, rng);
                    let (l, r) = b.arena[id].children.unwrap();
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        StoppingRule::ExactLeaves(k) => {
            let mut frontier = alloc::vec![0usize];
            while frontier.len() < k {
                // Highest cached gain wins; earliest creation breaks ties.
                let mut pick: Option<(usize, f64)> = None;
                for (slot, &id) in frontier.iter().enumerate() {
                    if let Some(cut) = b.arena[id].cut {
                        if pick.map_or(true, |(_, g)| cut.gain > g) && cut.gain > 0.0 {
                            pick = Some((slot, cut.gain));
                        }
                    }
                }
                let Some((slot, _)) = pick else { break };
                let id = frontier.swap_remove(slot);
                b.split(id, rng);
                let (l, r) = b.arena[id].children.unwrap();
                frontier.push(l);
                frontier.push(r);
            }
        }
    }

    let nodes = b.finish();
    RegressionTree {
        nodes,
        n_features: ds.n_features(),
    }
}

pub fn grow_tree(
    ds: &Dataset,
    samples: &[usize],
    stop: StoppingRule,
    mtry: usize,
    seed: u64,
) -> RegressionTree {
    let mut rng = rng::rng_from_seed(seed);
    grow_tree_with_rng(ds, samples, stop, mtry, &mut rng)
}
