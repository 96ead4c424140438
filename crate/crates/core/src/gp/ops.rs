use rand::Rng;

use super::tree::{generate, BinaryOp, GpNode, UnaryOp};
use super::GpConfig;

/// Best of `size` uniformly drawn indices (with replacement); ties go to the
/// lower index.
pub fn tournament_select<R: Rng>(fitness: &[f64], size: usize, rng: &mut R) -> usize {
    assert!(!fitness.is_empty(), "tournament over an empty population");
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size.max(1) {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] > fitness[best] || (fitness[c] == fitness[best] && c < best) {
            best = c;
        }
    }
    best
}

/// Swaps a random subtree of `a` with a random subtree of `b`. Offspring
/// deeper than `cfg.max_depth` are truncated; an offspring shallower than
/// `cfg.min_depth` is replaced by its parent.
pub fn crossover<R: Rng>(a: &GpNode, b: &GpNode, cfg: &GpConfig, rng: &mut R) -> (GpNode, GpNode) {
    let ia = rng.random_range(0..a.size());
    let ib = rng.random_range(0..b.size());
    swap_at(a, b, ia, ib, cfg)
}

pub(crate) fn swap_at(a: &GpNode, b: &GpNode, ia: usize, ib: usize, cfg: &GpConfig) -> (GpNode, GpNode) {
    let sub_a = a.get(ia).expect("index within tree").clone();
    let sub_b = b.get(ib).expect("index within tree").clone();
    let mut child_a = a.clone();
    let mut child_b = b.clone();
    *child_a.get_mut(ia).expect("index within tree") = sub_b;
    *child_b.get_mut(ib).expect("index within tree") = sub_a;
    (repair(child_a, a, cfg), repair(child_b, b, cfg))
}

fn repair(mut child: GpNode, parent: &GpNode, cfg: &GpConfig) -> GpNode {
    if child.depth() > cfg.max_depth {
        child.truncate(cfg.max_depth);
    }
    if child.depth() < cfg.min_depth {
        return parent.clone();
    }
    child
}

/// Subtree mutation with probability `p_s`, then operator mutation with
/// probability `p_o`.
pub fn mutate<R: Rng>(tree: &GpNode, cfg: &GpConfig, rng: &mut R) -> GpNode {
    let mut out = tree.clone();
    if rng.random_bool(cfg.subtree_mutation_prob) {
        let i = rng.random_range(0..out.size());
        let level = out.level_of(i).expect("index within tree");
        let max_depth = cfg.max_depth + 1 - level;
        let min_depth = if i == 0 { cfg.min_depth } else { 1 };
        *out.get_mut(i).expect("index within tree") = generate(rng, min_depth, max_depth, false);
    }
    if rng.random_bool(cfg.point_mutation_prob) {
        let functions = out.function_indices();
        if !functions.is_empty() {
            let i = functions[rng.random_range(0..functions.len())];
            match out.get_mut(i).expect("index within tree") {
                GpNode::Unary(op, _) => {
                    *op = match op {
                        UnaryOp::Cos => UnaryOp::Sin,
                        UnaryOp::Sin => UnaryOp::Cos,
                    }
                }
                GpNode::Binary(op, ..) => {
                    let others: Vec<BinaryOp> = BinaryOp::ALL.into_iter().filter(|o| o != op).collect();
                    *op = others[rng.random_range(0..others.len())];
                }
                GpNode::Var | GpNode::Const(_) => unreachable!("function index points at a terminal"),
            }
        }
    }
    out
}
