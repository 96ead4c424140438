use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Cos,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 2] = [UnaryOp::Cos, UnaryOp::Sin];

    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Cos => x.cos(),
            UnaryOp::Sin => x.sin(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Cos => "cos",
            UnaryOp::Sin => "sin",
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 3] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul];

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul => 2,
        }
    }
}

/// Expression tree over a single input variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpNode {
    Var,
    Const(f64),
    Unary(UnaryOp, Box<GpNode>),
    Binary(BinaryOp, Box<GpNode>, Box<GpNode>),
}

/// Number of distinct node choices when growing a tree: five functions and
/// two terminals.
const PRIMITIVES: usize = 7;

impl GpNode {
    pub fn unary(op: UnaryOp, child: GpNode) -> Self {
        GpNode::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: GpNode, right: GpNode) -> Self {
        GpNode::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, GpNode::Var | GpNode::Const(_))
    }

    /// Levels in the tree; a lone terminal has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            GpNode::Var | GpNode::Const(_) => 1,
            GpNode::Unary(_, c) => 1 + c.depth(),
            GpNode::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            GpNode::Var | GpNode::Const(_) => 1,
            GpNode::Unary(_, c) => 1 + c.size(),
            GpNode::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn uses_var(&self) -> bool {
        match self {
            GpNode::Var => true,
            GpNode::Const(_) => false,
            GpNode::Unary(_, c) => c.uses_var(),
            GpNode::Binary(_, a, b) => a.uses_var() || b.uses_var(),
        }
    }

    pub fn eval_point(&self, x: f64) -> f64 {
        match self {
            GpNode::Var => x,
            GpNode::Const(c) => *c,
            GpNode::Unary(op, c) => op.apply(c.eval_point(x)),
            GpNode::Binary(op, a, b) => op.apply(a.eval_point(x), b.eval_point(x)),
        }
    }

    fn eval_into(&self, xs: &[f64]) -> Vec<f64> {
        match self {
            GpNode::Var => xs.to_vec(),
            GpNode::Const(c) => vec![*c; xs.len()],
            GpNode::Unary(op, c) => {
                let mut v = c.eval_into(xs);
                v.iter_mut().for_each(|x| *x = op.apply(*x));
                v
            }
            GpNode::Binary(op, a, b) => {
                let mut left = a.eval_into(xs);
                let right = b.eval_into(xs);
                left.iter_mut()
                    .zip(&right)
                    .for_each(|(l, r)| *l = op.apply(*l, *r));
                left
            }
        }
    }

    /// Preorder node at `index`.
    pub fn get(&self, index: usize) -> Option<&GpNode> {
        let mut i = index;
        self.locate(&mut i)
    }

    fn locate(&self, i: &mut usize) -> Option<&GpNode> {
        if *i == 0 {
            return Some(self);
        }
        *i -= 1;
        match self {
            GpNode::Var | GpNode::Const(_) => None,
            GpNode::Unary(_, c) => c.locate(i),
            GpNode::Binary(_, a, b) => a.locate(i).or_else(|| b.locate(i)),
        }
    }

    pub fn get_mut(&mut self, index: usize) -> Option<&mut GpNode> {
        let mut i = index;
        self.locate_mut(&mut i)
    }

    fn locate_mut(&mut self, i: &mut usize) -> Option<&mut GpNode> {
        if *i == 0 {
            return Some(self);
        }
        *i -= 1;
        match self {
            GpNode::Var | GpNode::Const(_) => None,
            GpNode::Unary(_, c) => c.locate_mut(i),
            GpNode::Binary(_, a, b) => {
                let skip = a.size();
                if *i < skip {
                    a.locate_mut(i)
                } else {
                    *i -= skip;
                    b.locate_mut(i)
                }
            }
        }
    }

    /// Level (root = 1) of the preorder node at `index`.
    pub fn level_of(&self, index: usize) -> Option<usize> {
        fn walk(node: &GpNode, i: &mut usize, level: usize) -> Option<usize> {
            if *i == 0 {
                return Some(level);
            }
            *i -= 1;
            match node {
                GpNode::Var | GpNode::Const(_) => None,
                GpNode::Unary(_, c) => walk(c, i, level + 1),
                GpNode::Binary(_, a, b) => walk(a, i, level + 1).or_else(|| walk(b, i, level + 1)),
            }
        }
        let mut i = index;
        walk(self, &mut i, 1)
    }

    /// Preorder indices of function nodes.
    pub fn function_indices(&self) -> Vec<usize> {
        fn walk(node: &GpNode, next: &mut usize, out: &mut Vec<usize>) {
            let here = *next;
            *next += 1;
            match node {
                GpNode::Var | GpNode::Const(_) => {}
                GpNode::Unary(_, c) => {
                    out.push(here);
                    walk(c, next, out);
                }
                GpNode::Binary(_, a, b) => {
                    out.push(here);
                    walk(a, next, out);
                    walk(b, next, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut 0, &mut out);
        out
    }

    /// Replaces every function node sitting at level `max_depth` with the
    /// variable terminal.
    pub fn truncate(&mut self, max_depth: usize) {
        fn walk(node: &mut GpNode, level: usize, max_depth: usize) {
            if level >= max_depth {
                if !node.is_terminal() {
                    *node = GpNode::Var;
                }
                return;
            }
            match node {
                GpNode::Var | GpNode::Const(_) => {}
                GpNode::Unary(_, c) => walk(c, level + 1, max_depth),
                GpNode::Binary(_, a, b) => {
                    walk(a, level + 1, max_depth);
                    walk(b, level + 1, max_depth);
                }
            }
        }
        walk(self, 1, max_depth.max(1));
    }

    /// Infix rendering with `var` as the variable name.
    pub fn to_infix(&self, var: &str) -> String {
        let mut out = String::new();
        self.write_infix(var, &mut out);
        out
    }

    fn write_infix(&self, var: &str, out: &mut String) {
        match self {
            GpNode::Var => out.push_str(var),
            GpNode::Const(c) => {
                let s = format_const(*c);
                if c.is_sign_negative() {
                    out.push('(');
                    out.push_str(&s);
                    out.push(')');
                } else {
                    out.push_str(&s);
                }
            }
            GpNode::Unary(op, c) => {
                out.push_str(op.name());
                out.push('(');
                c.write_infix(var, out);
                out.push(')');
            }
            GpNode::Binary(op, a, b) => {
                let left_parens = matches!(**a, GpNode::Binary(inner, ..) if inner.precedence() < op.precedence());
                let right_parens = matches!(**b, GpNode::Binary(inner, ..)
                    if inner.precedence() < op.precedence()
                        || (inner.precedence() == op.precedence() && *op == BinaryOp::Sub));
                wrap(a, var, left_parens, out);
                if *op == BinaryOp::Mul {
                    out.push('*');
                } else {
                    out.push(' ');
                    out.push_str(op.symbol());
                    out.push(' ');
                }
                wrap(b, var, right_parens, out);
            }
        }
    }
}

fn wrap(node: &GpNode, var: &str, parens: bool, out: &mut String) {
    if parens {
        out.push('(');
    }
    node.write_infix(var, out);
    if parens {
        out.push(')');
    }
}

fn format_const(c: f64) -> String {
    let s = format!("{c:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

impl fmt::Display for GpNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_infix("x"))
    }
}

/// Pointwise evaluation over a column. Non-finite results become 0; the
/// second value counts how many were replaced.
pub fn eval_tree(tree: &GpNode, xs: &[f64]) -> (Vec<f64>, usize) {
    let mut values = tree.eval_into(xs);
    let mut replaced = 0;
    for v in &mut values {
        if !v.is_finite() {
            *v = 0.0;
            replaced += 1;
        }
    }
    (values, replaced)
}

fn random_terminal<R: Rng>(rng: &mut R) -> GpNode {
    if rng.random_bool(0.5) {
        GpNode::Var
    } else {
        GpNode::Const(rng.sample(StandardNormal))
    }
}

fn random_function<R: Rng>(rng: &mut R, min_depth: usize, max_depth: usize, full: bool) -> GpNode {
    let child_min = min_depth.saturating_sub(1);
    let child_max = max_depth - 1;
    match rng.random_range(0..5) {
        0 | 1 => GpNode::unary(
            UnaryOp::ALL[rng.random_range(0..2)],
            generate(rng, child_min, child_max, full),
        ),
        _ => {
            let op = BinaryOp::ALL[rng.random_range(0..3)];
            let a = generate(rng, child_min, child_max, full);
            let b = generate(rng, child_min, child_max, full);
            GpNode::binary(op, a, b)
        }
    }
}

/// Random tree whose depth lies in `[min_depth, max_depth]`. `full` trees
/// place terminals only at `max_depth`; grown trees pick uniformly among all
/// primitives once `min_depth` is met.
pub fn generate<R: Rng>(rng: &mut R, min_depth: usize, max_depth: usize, full: bool) -> GpNode {
    let max_depth = max_depth.max(1);
    if max_depth == 1 {
        return random_terminal(rng);
    }
    let must_branch = full || min_depth > 1;
    if !must_branch && rng.random_range(0..PRIMITIVES) < 2 {
        return random_terminal(rng);
    }
    random_function(rng, min_depth, max_depth, full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    fn fig8() -> GpNode {
        GpNode::binary(
            BinaryOp::Add,
            GpNode::binary(BinaryOp::Mul, GpNode::Const(2.0), GpNode::Var),
            GpNode::unary(UnaryOp::Cos, GpNode::Var),
        )
    }

    #[test]
    fn fig8_tree() {
        let t = fig8();
        assert_eq!(t.size(), 6);
        assert_eq!(t.depth(), 3);
        assert_eq!(t.eval_point(0.0), 1.0);
        assert_eq!(t.to_infix("x"), "2*x + cos(x)");
    }

    #[test]
    fn sin_matches_direct_evaluation() {
        let t = GpNode::unary(UnaryOp::Sin, GpNode::Var);
        let xs: Vec<f64> = (0..9).map(|i| i as f64 * std::f64::consts::FRAC_PI_2).collect();
        let (ys, replaced) = eval_tree(&t, &xs);
        assert_eq!(replaced, 0);
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(*y, x.sin());
        }
    }

    #[test]
    fn non_finite_values_are_zeroed() {
        let t = GpNode::binary(BinaryOp::Mul, GpNode::Var, GpNode::Var);
        let (ys, replaced) = eval_tree(&t, &[1e200, 2.0]);
        assert_eq!(ys, vec![0.0, 4.0]);
        assert_eq!(replaced, 1);
    }

    #[test]
    fn full_depth_two_binary_tree_has_three_nodes() {
        let mut rng = rng_from_seed(0);
        for _ in 0..50 {
            let t = generate(&mut rng, 2, 2, true);
            assert_eq!(t.depth(), 2);
            let expected = if matches!(t, GpNode::Binary(..)) { 3 } else { 2 };
            assert_eq!(t.size(), expected);
        }
    }

    #[test]
    fn generated_depth_respects_bounds() {
        let mut rng = rng_from_seed(1);
        for max in 2..=7 {
            for full in [true, false] {
                for _ in 0..100 {
                    let d = generate(&mut rng, 2, max, full).depth();
                    assert!((2..=max).contains(&d));
                    if full {
                        assert_eq!(d, max);
                    }
                }
            }
        }
    }

    #[test]
    fn preorder_indexing() {
        let t = fig8();
        assert_eq!(t.get(0), Some(&t));
        assert_eq!(t.get(2), Some(&GpNode::Const(2.0)));
        assert_eq!(t.get(3), Some(&GpNode::Var));
        assert!(matches!(t.get(4), Some(GpNode::Unary(UnaryOp::Cos, _))));
        assert_eq!(t.get(6), None);
        assert_eq!(t.level_of(5), Some(3));
        assert_eq!(t.function_indices(), vec![0, 1, 4]);
        let mut m = t.clone();
        *m.get_mut(5).unwrap() = GpNode::Const(0.0);
        assert_eq!(m.to_infix("x"), "2*x + cos(0)");
    }

    #[test]
    fn truncation_caps_depth() {
        let mut t = GpNode::Var;
        for _ in 0..9 {
            t = GpNode::unary(UnaryOp::Sin, t);
        }
        t.truncate(7);
        assert_eq!(t.depth(), 7);
        assert!(t.uses_var());
    }

    #[test]
    fn infix_parentheses() {
        let sum = GpNode::binary(BinaryOp::Add, GpNode::Var, GpNode::Const(1.0));
        let prod = GpNode::binary(BinaryOp::Mul, sum.clone(), GpNode::Var);
        assert_eq!(prod.to_infix("x"), "(x + 1)*x");
        let diff = GpNode::binary(BinaryOp::Sub, GpNode::Var, sum);
        assert_eq!(diff.to_infix("x"), "x - (x + 1)");
        assert_eq!(GpNode::Const(-0.25).to_infix("x"), "(-0.25)");
    }
}
