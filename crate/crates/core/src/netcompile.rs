//! Tree-to-network compilation.
//!
//! A tree with K leaves becomes a two-hidden-layer network. Hidden layer 1
//! holds one unit per internal node (one-hot input weight 1, offset minus
//! the threshold); hidden layer 2 holds one unit per leaf, wired with plus
//! orminus one to the hyperplanes on its root path and offset
//! `1/2 - path length`. The output layer carries half the leaf means with
//! offset equal to half their total. Under the hard threshold activation
//! `t(u) = 2*[u >= 0] - 1` the network reproduces the tree; under
//! `tanh(gamma u)` it is the smooth relaxation used for training.
//!
//! Hidden units are ordered by pre-order traversal of the tree.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cart::{Node, RegressionTree};
use crate::num;

#[derive(Debug, Clone, PartialEq)]
pub enum NetError {
    Mismatch(&'static str),
    Parse(String),
}

impl core::fmt::Display for NetError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NetError::Mismatch(what) => write!(f, "incompatible networks: {what}"),
            NetError::Parse(msg) => write!(f, "network parse error: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for NetError {}

/// Two-hidden-layer network parameters with the tree-derived sparsity
/// masks and tanh contrasts.
///
/// Matrix layout is row-major with inputs as rows: `w1[i * h1 + k]`
/// connects input `i` to first-layer unit `k`; `w2[k * h2 + kp]` connects
/// first-layer unit `k` to leaf unit `kp`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub d: usize,
    pub h1: usize,
    pub h2: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
    pub mask1: Vec<bool>,
    pub mask2: Vec<bool>,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Default budget constant for [`check_constraint`]; compile sets
    /// `3/2 + max |leaf mean|`.
    pub c_bound: f64,
    /// Leaf-count scale of the budget (max per-tree leaf count for
    /// concatenated networks).
    pub k_budget: usize,
}

impl NetworkParams {
    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w_out.len() + 1
    }
}

/// Concatenation of per-tree networks with a shared output layer. The
/// second-layer weight matrix is block-diagonal; everything off-block is
/// structurally zero (and unmasked).
#[derive(Debug, Clone, PartialEq)]
pub struct BigNetworkParams {
    pub params: NetworkParams,
    pub block_h1: Vec<usize>,
    pub block_h2: Vec<usize>,
}

impl BigNetworkParams {
    pub fn n_blocks(&self) -> usize {
        self.block_h1.len()
    }

    /// True when every off-block second-layer entry is exactly zero.
    pub fn off_block_is_zero(&self) -> bool {
        let p = &self.params;
        let mut row_block = Vec::with_capacity(p.h1);
        let mut col_block = Vec::with_capacity(p.h2);
        for (m, &h) in self.block_h1.iter().enumerate() {
            row_block.extend(core::iter::repeat(m).take(h));
        }
        for (m, &h) in self.block_h2.iter().enumerate() {
            col_block.extend(core::iter::repeat(m).take(h));
        }
        for k in 0..p.h1 {
            for kp in 0..p.h2 {
                if row_block[k] != col_block[kp] && p.w2[k * p.h2 + kp] != 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

/// Compiles a grown tree into its exact network encoding.
///
/// A single-leaf tree (K = 1) compiles to a network with no first-layer
/// units and one always-on leaf unit, which reproduces the constant
/// prediction under the hard threshold.
pub fn compile_tree(tree: &RegressionTree, gamma1: f64, gamma2: f64) -> NetworkParams {
    let d = tree.n_features();
    let internal = tree.internal_preorder();
    let leaves = tree.leaves_preorder();
    let h1 = internal.len();
    let h2 = leaves.len();

    // Arena id -> hidden unit index, in pre-order.
    let mut hyper_index = vec![usize::MAX; tree.nodes().len()];
    for (k, &id) in internal.iter().enumerate() {
        hyper_index[id] = k;
    }
    let mut leaf_index = vec![usize::MAX; tree.nodes().len()];
    for (kp, &id) in leaves.iter().enumerate() {
        leaf_index[id] = kp;
    }

    let mut w1 = vec![0.0; d * h1];
    let mut b1 = vec![0.0; h1];
    let mut mask1 = vec![false; d * h1];
    for (k, &id) in internal.iter().enumerate() {
        if let Node::Internal {
            feature, threshold, ..
        } = tree.node(id)
        {
            w1[*feature * h1 + k] = 1.0;
            mask1[*feature * h1 + k] = true;
            b1[k] = -*threshold;
        }
    }

    let mut w2 = vec![0.0; h1 * h2];
    let mut b2 = vec![0.0; h2];
    let mut mask2 = vec![false; h1 * h2];
    let mut w_out = vec![0.0; h2];

    // Walk every root-to-leaf path, recording the side taken at each
    // hyperplane (+1 right, -1 left).
    let mut stack: Vec<(usize, Vec<(usize, bool)>)> = vec![(0, Vec::new())];
    while let Some((id, path)) = stack.pop() {
        match tree.node(id) {
            Node::Leaf { mean, .. } => {
                let kp = leaf_index[id];
                for &(k, went_right) in &path {
                    w2[k * h2 + kp] = if went_right { 1.0 } else { -1.0 };
                    mask2[k * h2 + kp] = true;
                }
                b2[kp] = 0.5 - path.len() as f64;
                w_out[kp] = mean * 0.5;
            }
            Node::Internal { left, right, .. } => {
                let k = hyper_index[id];
                let mut lp = path.clone();
                lp.push((k, false));
                stack.push((*left, lp));
                let mut rp = path;
                rp.push((k, true));
                stack.push((*right, rp));
            }
        }
    }

    let b_out: f64 = w_out.iter().sum();
    let max_abs_mean = leaves
        .iter()
        .map(|&id| match tree.node(id) {
            Node::Leaf { mean, .. } => num::abs(*mean),
            _ => 0.0,
        })
        .fold(0.0f64, f64::max);

    NetworkParams {
        d,
        h1,
        h2,
        w1,
        b1,
        w2,
        b2,
        w_out,
        b_out,
        mask1,
        mask2,
        gamma1,
        gamma2,
        c_bound: 1.5 + max_abs_mean,
        k_budget: h2,
    }
}

#[inline]
fn tau(u: f64) -> f64 {
    if u >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn layer1_pre(p: &NetworkParams, x: &[f64], pre1: &mut Vec<f64>) {
    pre1.clear();
    pre1.extend_from_slice(&p.b1);
    for (i, &xi) in x.iter().enumerate() {
        let row = &p.w1[i * p.h1..(i + 1) * p.h1];
        for (acc, &w) in pre1.iter_mut().zip(row) {
            *acc += xi * w;
        }
    }
}

fn layer2_pre(p: &NetworkParams, act1: &[f64], pre2: &mut Vec<f64>) {
    pre2.clear();
    pre2.extend_from_slice(&p.b2);
    for (k, &a) in act1.iter().enumerate() {
        let row = &p.w2[k * p.h2..(k + 1) * p.h2];
        for (acc, &w) in pre2.iter_mut().zip(row) {
            *acc += a * w;
        }
    }
}

fn output_layer(p: &NetworkParams, act2: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&w, &v) in p.w_out.iter().zip(act2) {
        acc += w * v;
    }
    acc + p.b_out
}

/// Hard-threshold evaluation; equals the source tree's prediction.
pub fn forward_hard(p: &NetworkParams, x: &[f64]) -> f64 {
    forward_hard_trace(p, x).output
}

/// Hard-threshold evaluation with every layer exposed.
pub struct HardTrace {
    pub act1: Vec<f64>,
    /// Second-layer pre-activations: exactly one entry is +1/2 (the
    /// containing leaf) and all others are at most -1/2.
    pub pre2: Vec<f64>,
    pub act2: Vec<f64>,
    pub output: f64,
}

pub fn forward_hard_trace(p: &NetworkParams, x: &[f64]) -> HardTrace {
    debug_assert_eq!(x.len(), p.d);
    let mut pre1 = Vec::new();
    layer1_pre(p, x, &mut pre1);
    let act1: Vec<f64> = pre1.iter().map(|&u| tau(u)).collect();
    let mut pre2 = Vec::new();
    layer2_pre(p, &act1, &mut pre2);
    let act2: Vec<f64> = pre2.iter().map(|&u| tau(u)).collect();
    let output = output_layer(p, &act2);
    HardTrace {
        act1,
        pre2,
        act2,
        output,
    }
}

/// Saved forward state for backpropagation.
pub struct Activations {
    pub pre1: Vec<f64>,
    pub act1: Vec<f64>,
    pub pre2: Vec<f64>,
    pub act2: Vec<f64>,
    pub output: f64,
}

/// Smooth evaluation with `tanh(gamma1 u)` / `tanh(gamma2 u)` activations.
pub fn forward_tanh(p: &NetworkParams, x: &[f64]) -> f64 {
    forward_tanh_trace(p, x).output
}

pub fn forward_tanh_trace(p: &NetworkParams, x: &[f64]) -> Activations {
    debug_assert_eq!(x.len(), p.d);
    let mut pre1 = Vec::new();
    layer1_pre(p, x, &mut pre1);
    let act1: Vec<f64> = pre1.iter().map(|&u| num::tanh(p.gamma1 * u)).collect();
    let mut pre2 = Vec::new();
    layer2_pre(p, &act1, &mut pre2);
    let act2: Vec<f64> = pre2.iter().map(|&u| num::tanh(p.gamma2 * u)).collect();
    let output = output_layer(p, &act2);
    Activations {
        pre1,
        act1,
        pre2,
        act2,
        output,
    }
}

/// Concatenates per-tree networks into the jointly trainable form: shared
/// first layer (side by side), block-diagonal second layer, output weights
/// divided by the member count so the initial output is the ensemble mean.
pub fn concat_networks(nets: &[NetworkParams]) -> Result<BigNetworkParams, NetError> {
    let first = nets.first().ok_or(NetError::Mismatch("no networks"))?;
    if nets.iter().any(|n| n.d != first.d) {
        return Err(NetError::Mismatch("input dimensions differ"));
    }
    if nets
        .iter()
        .any(|n| n.gamma1 != first.gamma1 || n.gamma2 != first.gamma2)
    {
        return Err(NetError::Mismatch("contrasts differ"));
    }
    let m = nets.len();
    let d = first.d;
    let h1: usize = nets.iter().map(|n| n.h1).sum();
    let h2: usize = nets.iter().map(|n| n.h2).sum();

    let mut w1 = vec![0.0; d * h1];
    let mut mask1 = vec![false; d * h1];
    let mut b1 = Vec::with_capacity(h1);
    let mut w2 = vec![0.0; h1 * h2];
    let mut mask2 = vec![false; h1 * h2];
    let mut b2 = Vec::with_capacity(h2);
    let mut w_out = Vec::with_capacity(h2);

    let inv_m = 1.0 / m as f64;
    let mut off1 = 0;
    let mut off2 = 0;
    for net in nets {
        for i in 0..d {
            let dst = i * h1 + off1;
            w1[dst..dst + net.h1].copy_from_slice(&net.w1[i * net.h1..(i + 1) * net.h1]);
            mask1[dst..dst + net.h1]
                .copy_from_slice(&net.mask1[i * net.h1..(i + 1) * net.h1]);
        }
        b1.extend_from_slice(&net.b1);
        for k in 0..net.h1 {
            let dst = (off1 + k) * h2 + off2;
            w2[dst..dst + net.h2].copy_from_slice(&net.w2[k * net.h2..(k + 1) * net.h2]);
            mask2[dst..dst + net.h2]
                .copy_from_slice(&net.mask2[k * net.h2..(k + 1) * net.h2]);
        }
        b2.extend_from_slice(&net.b2);
        w_out.extend(net.w_out.iter().map(|&w| w * inv_m));
        off1 += net.h1;
        off2 += net.h2;
    }
    let b_out = nets.iter().map(|n| n.b_out).sum::<f64>() * inv_m;

    Ok(BigNetworkParams {
        params: NetworkParams {
            d,
            h1,
            h2,
            w1,
            b1,
            w2,
            b2,
            w_out,
            b_out,
            mask1,
            mask2,
            gamma1: first.gamma1,
            gamma2: first.gamma2,
            c_bound: nets.iter().map(|n| n.c_bound).fold(0.0, f64::max),
            k_budget: nets.iter().map(|n| n.h2).max().unwrap_or(0),
        },
        block_h1: nets.iter().map(|n| n.h1).collect(),
        block_h2: nets.iter().map(|n| n.h2).collect(),
    })
}

/// Result of the weight-budget diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    /// `max|W2| + max|b2| + sum|w_out| + |b_out|`.
    pub value: f64,
    /// `C * K` with K the leaf-count scale of the network.
    pub budget: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Checks the second-and-output-layer weight budget against `c * K`.
/// Diagnostic only; training never projects onto the constraint set.
pub fn check_constraint(p: &NetworkParams, c: f64) -> ConstraintReport {
    let sup = |xs: &[f64]| xs.iter().fold(0.0f64, |a, &v| a.max(num::abs(v)));
    let value = sup(&p.w2) + sup(&p.b2) + p.w_out.iter().map(|&v| num::abs(v)).sum::<f64>()
        + num::abs(p.b_out);
    let budget = c * p.k_budget as f64;
    ConstraintReport {
        value,
        budget,
        margin: budget - value,
        pass: value <= budget,
    }
}

fn push_floats(out: &mut String, name: &str, values: &[f64]) {
    out.push_str(name);
    for v in values {
        out.push(' ');
        out.push_str(&alloc::format!("{v}"));
    }
    out.push('\n');
}

fn push_mask(out: &mut String, name: &str, values: &[bool]) {
    out.push_str(name);
    for &v in values {
        out.push(' ');
        out.push(if v { '1' } else { '0' });
    }
    out.push('\n');
}

impl NetworkParams {
    /// Text encoding; floats use the shortest representation that parses
    /// back to the same bits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("network v1\n");
        out.push_str(&alloc::format!("dims {} {} {}\n", self.d, self.h1, self.h2));
        out.push_str(&alloc::format!("gamma {} {}\n", self.gamma1, self.gamma2));
        out.push_str(&alloc::format!("bound {} {}\n", self.c_bound, self.k_budget));
        push_floats(&mut out, "w1", &self.w1);
        push_floats(&mut out, "b1", &self.b1);
        push_floats(&mut out, "w2", &self.w2);
        push_floats(&mut out, "b2", &self.b2);
        push_floats(&mut out, "w_out", &self.w_out);
        push_floats(&mut out, "b_out", &[self.b_out]);
        push_mask(&mut out, "mask1", &self.mask1);
        push_mask(&mut out, "mask2", &self.mask2);
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NetError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        Self::parse_lines(&mut lines)
    }

    fn parse_lines<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self, NetError> {
        let err = |msg: &str| NetError::Parse(String::from(msg));
        if lines.next().map(str::trim) != Some("network v1") {
            return Err(err("expected `network v1` header"));
        }
        let dims = parse_values::<usize>(lines.next(), "dims")?;
        if dims.len() != 3 {
            return Err(err("dims needs three fields"));
        }
        let (d, h1, h2) = (dims[0], dims[1], dims[2]);
        let gamma = parse_values::<f64>(lines.next(), "gamma")?;
        if gamma.len() != 2 {
            return Err(err("gamma needs two fields"));
        }
        let bound_line = lines.next().ok_or_else(|| err("missing bound"))?;
        let mut tok = bound_line.split_whitespace();
        if tok.next() != Some("bound") {
            return Err(err("expected bound line"));
        }
        let c_bound: f64 = parse_tok(&mut tok)?;
        let k_budget: usize = parse_tok(&mut tok)?;

        let w1 = expect_floats(lines.next(), "w1", d * h1)?;
        let b1 = expect_floats(lines.next(), "b1", h1)?;
        let w2 = expect_floats(lines.next(), "w2", h1 * h2)?;
        let b2 = expect_floats(lines.next(), "b2", h2)?;
        let w_out = expect_floats(lines.next(), "w_out", h2)?;
        let b_out = expect_floats(lines.next(), "b_out", 1)?[0];
        let mask1 = expect_mask(lines.next(), "mask1", d * h1)?;
        let mask2 = expect_mask(lines.next(), "mask2", h1 * h2)?;

        Ok(NetworkParams {
            d,
            h1,
            h2,
            w1,
            b1,
            w2,
            b2,
            w_out,
            b_out,
            mask1,
            mask2,
            gamma1: gamma[0],
            gamma2: gamma[1],
            c_bound,
            k_budget,
        })
    }
}

impl BigNetworkParams {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("bignetwork v1\n");
        out.push_str(&alloc::format!("blocks {}\n", self.n_blocks()));
        out.push_str("block_h1");
        for v in &self.block_h1 {
            out.push_str(&alloc::format!(" {v}"));
        }
        out.push('\n');
        out.push_str("block_h2");
        for v in &self.block_h2 {
            out.push_str(&alloc::format!(" {v}"));
        }
        out.push('\n');
        out.push_str(&self.params.to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NetError> {
        let err = |msg: &str| NetError::Parse(String::from(msg));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("bignetwork v1") {
            return Err(err("expected `bignetwork v1` header"));
        }
        let blocks = parse_values::<usize>(lines.next(), "blocks")?;
        if blocks.len() != 1 {
            return Err(err("blocks needs one field"));
        }
        let block_h1 = parse_values::<usize>(lines.next(), "block_h1")?;
        let block_h2 = parse_values::<usize>(lines.next(), "block_h2")?;
        if block_h1.len() != blocks[0] || block_h2.len() != blocks[0] {
            return Err(err("block list length mismatch"));
        }
        let params = NetworkParams::parse_lines(&mut lines)?;
        if params.h1 != block_h1.iter().sum::<usize>() || params.h2 != block_h2.iter().sum::<usize>()
        {
            return Err(err("block sizes do not add up to network dims"));
        }
        Ok(BigNetworkParams {
            params,
            block_h1,
            block_h2,
        })
    }
}

fn parse_tok<'a, T: core::str::FromStr>(
    tok: &mut impl Iterator<Item = &'a str>,
) -> Result<T, NetError> {
    tok.next()
        .ok_or_else(|| NetError::Parse(String::from("missing token")))?
        .parse()
        .map_err(|_| NetError::Parse(String::from("malformed token")))
}

fn parse_values<T: core::str::FromStr>(line: Option<&str>, name: &str) -> Result<Vec<T>, NetError> {
    let line = line.ok_or_else(|| NetError::Parse(alloc::format!("missing `{name}`")))?;
    let mut tok = line.split_whitespace();
    if tok.next() != Some(name) {
        return Err(NetError::Parse(alloc::format!("expected `{name}` line")));
    }
    tok.map(|t| {
        t.parse()
            .map_err(|_| NetError::Parse(alloc::format!("malformed value in `{name}`")))
    })
    .collect()
}

fn expect_floats(line: Option<&str>, name: &str, count: usize) -> Result<Vec<f64>, NetError> {
    let values = parse_values::<f64>(line, name)?;
    if values.len() != count {
        return Err(NetError::Parse(alloc::format!(
            "`{name}` expected {count} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

fn expect_mask(line: Option<&str>, name: &str, count: usize) -> Result<Vec<bool>, NetError> {
    let values = parse_values::<u8>(line, name)?;
    if values.len() != count {
        return Err(NetError::Parse(alloc::format!(
            "`{name}` expected {count} values, found {}",
            values.len()
        )));
    }
    Ok(values.into_iter().map(|v| v != 0).collect())
}
