//! Tree analyses of functionals: validation, realization, weights, the text
//! format and the normalization pass.
//!
//! Text format: `(+ n)`, `(- n)`, `(w j child ...)`, `(w j @SF:2 child ...)`
//! when the family is pinned explicitly, `(cv p/q child ...)` and
//! `(r a b child)`; the empty interval prints as `(r 1 0 child)`.

use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed};

use crate::error::{Error, ParseError, Result};
use crate::families::{block_admissible, FamilyDescriptor};
use crate::mt_norm::{ParamSchedule, SetDescriptor};
use crate::ratvec::{fmt_rat, parse_rat, Interval, Rational, SparseVector};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TreeAnalysis {
    Leaf {
        positive: bool,
        index: u64,
    },
    /// `m_j^{-1}` times the sum of the children. `family: None` means the
    /// family the set descriptor assigns to `j`.
    Weighted {
        j: usize,
        family: Option<FamilyDescriptor>,
        children: Vec<TreeAnalysis>,
    },
    Convex {
        weights: Vec<Rational>,
        children: Vec<TreeAnalysis>,
    },
    Restrict {
        interval: Interval,
        child: Box<TreeAnalysis>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeightTag {
    Weighted(usize),
    Unweighted,
}

impl fmt::Display for WeightTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightTag::Weighted(j) => write!(f, "w{j}"),
            WeightTag::Unweighted => write!(f, "u"),
        }
    }
}

impl FromStr for WeightTag {
    type Err = ParseError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "u" {
            return Ok(WeightTag::Unweighted);
        }
        s.strip_prefix('w')
            .and_then(|r| r.parse().ok())
            .map(WeightTag::Weighted)
            .ok_or_else(|| ParseError::new(format!("bad weight tag `{s}`")))
    }
}

/// A functional together with the tree it came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConstructionRecord {
    pub functional: SparseVector,
    pub tree: TreeAnalysis,
    pub weight: WeightTag,
}

impl ConstructionRecord {
    pub fn from_tree(tree: TreeAnalysis, sched: &ParamSchedule, desc: SetDescriptor) -> Result<Self> {
        let functional = realize_with(&tree, sched, desc)?;
        let weight = weight_of(&tree);
        Ok(ConstructionRecord { functional, tree, weight })
    }

    pub fn weight_index(&self) -> Option<usize> {
        match self.weight {
            WeightTag::Weighted(j) => Some(j),
            WeightTag::Unweighted => None,
        }
    }
}

/// A claimed lower bound for a norm, witnessed by a tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub tree: TreeAnalysis,
    pub claimed: Rational,
}

impl Certificate {
    pub fn check(&self, x: &SparseVector, sched: &ParamSchedule, desc: SetDescriptor) -> Result<bool> {
        Ok(certify_with(&self.tree, x, sched, desc)? == self.claimed)
    }
}

impl TreeAnalysis {
    pub fn leaf(positive: bool, index: u64) -> TreeAnalysis {
        TreeAnalysis::Leaf { positive, index }
    }

    pub fn plus(index: u64) -> TreeAnalysis {
        Self::leaf(true, index)
    }

    pub fn minus(index: u64) -> TreeAnalysis {
        Self::leaf(false, index)
    }

    pub fn weighted(j: usize, children: Vec<TreeAnalysis>) -> TreeAnalysis {
        TreeAnalysis::Weighted { j, family: None, children }
    }

    pub fn weighted_in(j: usize, family: FamilyDescriptor, children: Vec<TreeAnalysis>) -> TreeAnalysis {
        TreeAnalysis::Weighted { j, family: Some(family), children }
    }

    pub fn restrict(interval: Interval, child: TreeAnalysis) -> TreeAnalysis {
        TreeAnalysis::Restrict { interval, child: Box::new(child) }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeAnalysis::Leaf { .. } => 0,
            TreeAnalysis::Weighted { children, .. } | TreeAnalysis::Convex { children, .. } => {
                1 + children.iter().map(|c| c.depth()).max().unwrap_or(0)
            }
            TreeAnalysis::Restrict { child, .. } => child.depth(),
        }
    }

    pub fn has_convex(&self) -> bool {
        match self {
            TreeAnalysis::Leaf { .. } => false,
            TreeAnalysis::Convex { .. } => true,
            TreeAnalysis::Weighted { children, .. } => children.iter().any(|c| c.has_convex()),
            TreeAnalysis::Restrict { child, .. } => child.has_convex(),
        }
    }

    /// Every weight index used by a weighted node.
    pub fn weights_used(&self, out: &mut Vec<usize>) {
        match self {
            TreeAnalysis::Leaf { .. } => {}
            TreeAnalysis::Weighted { j, children, .. } => {
                out.push(*j);
                children.iter().for_each(|c| c.weights_used(out));
            }
            TreeAnalysis::Convex { children, .. } => children.iter().for_each(|c| c.weights_used(out)),
            TreeAnalysis::Restrict { child, .. } => child.weights_used(out),
        }
    }

    /// Same tree with every index replaced by `2·index`.
    pub fn hat(&self) -> TreeAnalysis {
        match self {
            TreeAnalysis::Leaf { positive, index } => TreeAnalysis::leaf(*positive, 2 * index),
            TreeAnalysis::Weighted { j, family, children } => TreeAnalysis::Weighted {
                j: *j,
                family: *family,
                children: children.iter().map(|c| c.hat()).collect(),
            },
            TreeAnalysis::Convex { weights, children } => TreeAnalysis::Convex {
                weights: weights.clone(),
                children: children.iter().map(|c| c.hat()).collect(),
            },
            TreeAnalysis::Restrict { interval, child } => {
                let interval = match interval.bounds() {
                    Some((a, b)) => Interval::new(2 * a - 1, 2 * b),
                    None => Interval::Empty,
                };
                TreeAnalysis::restrict(interval, child.hat())
            }
        }
    }
}

pub fn weight_of(t: &TreeAnalysis) -> WeightTag {
    match t {
        TreeAnalysis::Weighted { j, .. } => WeightTag::Weighted(*j),
        _ => WeightTag::Unweighted,
    }
}

/// Realization against the plain `W_mT` families.
pub fn realize(t: &TreeAnalysis, sched: &ParamSchedule) -> Result<SparseVector> {
    realize_with(t, sched, SetDescriptor::WmT)
}

pub fn realize_with(t: &TreeAnalysis, sched: &ParamSchedule, desc: SetDescriptor) -> Result<SparseVector> {
    match t {
        TreeAnalysis::Leaf { positive, index } => {
            if *index == 0 {
                return Err(Error::InvalidTree("leaf index 0".into()));
            }
            let v = SparseVector::basis(*index);
            Ok(if *positive { v } else { v.neg() })
        }
        TreeAnalysis::Weighted { j, family, children } => {
            if *j > sched.max_index() {
                return Err(Error::InvalidTree(format!(
                    "weight index {j} beyond schedule {}",
                    sched.id()
                )));
            }
            let fam = match family {
                Some(f) => *f,
                None => desc.family(*j, sched),
            };
            let parts: Vec<SparseVector> = children
                .iter()
                .map(|c| realize_with(c, sched, desc))
                .collect::<Result<_>>()?;
            let supports: Vec<Vec<u64>> = parts.iter().map(|p| p.support()).collect();
            match block_admissible(&fam, &supports) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(Error::InvalidTree(format!(
                        "children of weight {j} node not {fam}-admissible"
                    )))
                }
                Err(e) => return Err(Error::InvalidTree(e.to_string())),
            }
            Ok(SparseVector::sum(parts.iter()).scale(&sched.m_inv(*j)))
        }
        TreeAnalysis::Convex { weights, children } => {
            if weights.len() != children.len() || children.is_empty() {
                return Err(Error::InvalidTree("convex node needs one weight per child".into()));
            }
            if weights.iter().any(|w| !w.is_positive()) {
                return Err(Error::InvalidTree("convex weights must be positive".into()));
            }
            let total: Rational = weights.iter().sum();
            if !total.is_one() {
                return Err(Error::InvalidTree(format!("convex weights sum to {}", fmt_rat(&total))));
            }
            let mut acc = SparseVector::zero();
            for (w, c) in weights.iter().zip(children) {
                acc = acc.add(&realize_with(c, sched, desc)?.scale(w));
            }
            Ok(acc)
        }
        TreeAnalysis::Restrict { interval, child } => {
            Ok(realize_with(child, sched, desc)?.restrict_interval(*interval))
        }
    }
}

pub fn certify(t: &TreeAnalysis, x: &SparseVector, sched: &ParamSchedule) -> Result<Rational> {
    certify_with(t, x, sched, SetDescriptor::WmT)
}

pub fn certify_with(
    t: &TreeAnalysis,
    x: &SparseVector,
    sched: &ParamSchedule,
    desc: SetDescriptor,
) -> Result<Rational> {
    Ok(realize_with(t, sched, desc)?.evaluate(x))
}

/// Pushes restrictions down to the leaves and restricts every convex
/// combination's children to the range of the combination. The realized
/// functional is unchanged. A restriction that kills everything becomes the
/// childless weighted node `(w 0)`.
pub fn normalize(t: &TreeAnalysis, sched: &ParamSchedule, desc: SetDescriptor) -> Result<TreeAnalysis> {
    Ok(norm_rec(t, Interval::new(1, u64::MAX), sched, desc)?
        .unwrap_or_else(|| TreeAnalysis::weighted(0, vec![])))
}

fn norm_rec(
    t: &TreeAnalysis,
    e: Interval,
    sched: &ParamSchedule,
    desc: SetDescriptor,
) -> Result<Option<TreeAnalysis>> {
    match t {
        TreeAnalysis::Leaf { index, .. } => Ok(if e.contains(*index) { Some(t.clone()) } else { None }),
        TreeAnalysis::Restrict { interval, child } => norm_rec(child, e.intersect(interval), sched, desc),
        TreeAnalysis::Weighted { j, family, children } => {
            let mut kept = Vec::new();
            for c in children {
                if let Some(n) = norm_rec(c, e, sched, desc)? {
                    kept.push(n);
                }
            }
            // an explicit family stays pinned; restriction keeps admissibility
            Ok(Some(TreeAnalysis::Weighted { j: *j, family: *family, children: kept }))
        }
        TreeAnalysis::Convex { weights, children } => {
            let whole = realize_with(t, sched, desc)?.restrict_interval(e);
            let range = whole.range();
            let inner = e.intersect(&range);
            let mut kids = Vec::new();
            for c in children {
                let n = norm_rec(c, inner, sched, desc)?.unwrap_or_else(|| TreeAnalysis::weighted(0, vec![]));
                kids.push(n);
            }
            Ok(Some(TreeAnalysis::Convex { weights: weights.clone(), children: kids }))
        }
    }
}

impl fmt::Display for TreeAnalysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeAnalysis::Leaf { positive, index } => {
                write!(f, "({} {})", if *positive { "+" } else { "-" }, index)
            }
            TreeAnalysis::Weighted { j, family, children } => {
                write!(f, "(w {j}")?;
                if let Some(fam) = family {
                    write!(f, " @{fam}")?;
                }
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
            TreeAnalysis::Convex { weights, children } => {
                write!(f, "(cv")?;
                for (w, c) in weights.iter().zip(children) {
                    write!(f, " {} {}", fmt_rat(w), c)?;
                }
                write!(f, ")")
            }
            TreeAnalysis::Restrict { interval, child } => {
                let (a, b) = interval.bounds().unwrap_or((1, 0));
                write!(f, "(r {a} {b} {child})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

fn tokenize(s: &str) -> Vec<Tok> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' | ')' | ' ' | '\t' | '\n' | '\r' => {
                if !cur.is_empty() {
                    out.push(Tok::Atom(std::mem::take(&mut cur)));
                }
                if ch == '(' {
                    out.push(Tok::Open);
                } else if ch == ')' {
                    out.push(Tok::Close);
                }
            }
            _ => cur.push(ch),
        }
    }
    if !cur.is_empty() {
        out.push(Tok::Atom(cur));
    }
    out
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn atom(&mut self) -> std::result::Result<String, ParseError> {
        match self.next() {
            Some(Tok::Atom(a)) => Ok(a),
            other => Err(ParseError::new(format!("expected atom, got {other:?}"))),
        }
    }

    fn num(&mut self) -> std::result::Result<u64, ParseError> {
        let a = self.atom()?;
        a.parse().map_err(|_| ParseError::new(format!("bad number `{a}`")))
    }

    fn tree(&mut self) -> std::result::Result<TreeAnalysis, ParseError> {
        if self.next() != Some(Tok::Open) {
            return Err(ParseError::new("expected `(`"));
        }
        let head = self.atom()?;
        let t = match head.as_str() {
            "+" | "-" => TreeAnalysis::leaf(head == "+", self.num()?),
            "w" => {
                let j = self.num()? as usize;
                let mut family = None;
                if let Some(Tok::Atom(a)) = self.peek() {
                    if let Some(rest) = a.strip_prefix('@') {
                        family = Some(rest.parse()?);
                        self.pos += 1;
                    }
                }
                let mut children = Vec::new();
                while self.peek() == Some(&Tok::Open) {
                    children.push(self.tree()?);
                }
                TreeAnalysis::Weighted { j, family, children }
            }
            "cv" => {
                let mut weights = Vec::new();
                let mut children = Vec::new();
                while let Some(Tok::Atom(_)) = self.peek() {
                    let w = self.atom()?;
                    weights.push(parse_rat(&w)?);
                    children.push(self.tree()?);
                }
                TreeAnalysis::Convex { weights, children }
            }
            "r" => {
                let a = self.num()?;
                let b = self.num()?;
                let child = self.tree()?;
                TreeAnalysis::restrict(Interval::new(a, b), child)
            }
            other => return Err(ParseError::new(format!("unknown node `{other}`"))),
        };
        if self.next() != Some(Tok::Close) {
            return Err(ParseError::new("expected `)`"));
        }
        Ok(t)
    }
}

impl FromStr for TreeAnalysis {
    type Err = ParseError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let mut p = Parser { toks: tokenize(s), pos: 0 };
        let t = p.tree()?;
        if p.pos != p.toks.len() {
            return Err(ParseError::new("trailing input after tree"));
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratvec::{int, rat};

    fn paper() -> ParamSchedule {
        ParamSchedule::paper_a()
    }

    #[test]
    fn realize_examples() {
        let s = paper();
        assert_eq!(realize(&TreeAnalysis::plus(3), &s).unwrap(), SparseVector::basis(3));
        let t = TreeAnalysis::weighted(0, (1..=4).map(TreeAnalysis::plus).collect());
        let v = realize(&t, &s).unwrap();
        assert_eq!(v, SparseVector::constant_on(1..=4, &rat(1, 2)));
        let c = TreeAnalysis::Convex {
            weights: vec![rat(1, 2), rat(1, 2)],
            children: vec![TreeAnalysis::plus(1), TreeAnalysis::minus(1)],
        };
        assert!(realize(&c, &s).unwrap().is_zero());
    }

    #[test]
    fn invalid_trees() {
        let s = paper();
        let too_many = TreeAnalysis::weighted(0, (1..=5).map(TreeAnalysis::plus).collect());
        assert!(matches!(realize(&too_many, &s), Err(Error::InvalidTree(_))));
        let overlap = TreeAnalysis::weighted(0, vec![TreeAnalysis::plus(2), TreeAnalysis::plus(1)]);
        assert!(matches!(realize(&overlap, &s), Err(Error::InvalidTree(_))));
        let bad_cv = TreeAnalysis::Convex {
            weights: vec![rat(1, 2), rat(1, 3)],
            children: vec![TreeAnalysis::plus(1), TreeAnalysis::plus(2)],
        };
        assert!(realize(&bad_cv, &s).is_err());
    }

    #[test]
    fn weights_and_certify() {
        let s = paper();
        let t = TreeAnalysis::weighted(2, vec![TreeAnalysis::plus(1)]);
        assert_eq!(weight_of(&t), WeightTag::Weighted(2));
        assert_eq!(weight_of(&TreeAnalysis::plus(1)), WeightTag::Unweighted);
        let r = TreeAnalysis::restrict(Interval::new(1, 3), t);
        assert_eq!(weight_of(&r), WeightTag::Unweighted);
        let x = SparseVector::from_ints(&[(1, 5)]);
        assert_eq!(certify(&TreeAnalysis::plus(1), &x, &s).unwrap(), int(5));
        assert_eq!(certify(&TreeAnalysis::plus(7), &x, &s).unwrap(), int(0));
    }

    #[test]
    fn text_round_trip() {
        for src in [
            "(+ 3)",
            "(w 0 (+ 1) (- 2) (+ 3))",
            "(w 1 @SF:2 (+ 4) (+ 5))",
            "(cv 1/2 (+ 1) 1/2 (w 0 (- 1)))",
            "(r 2 5 (w 0 (+ 1) (+ 2) (+ 3)))",
            "(r 1 0 (+ 1))",
        ] {
            let t: TreeAnalysis = src.parse().unwrap();
            assert_eq!(t.to_string(), src);
        }
        assert!("(w 0 (+ 1)".parse::<TreeAnalysis>().is_err());
        assert!("(x 1)".parse::<TreeAnalysis>().is_err());
    }

    #[test]
    fn normalize_keeps_value() {
        let s = paper();
        let t: TreeAnalysis = "(r 2 3 (cv 1/2 (w 0 (+ 1) (+ 2) (+ 3)) 1/2 (w 0 (- 2) (+ 4))))".parse().unwrap();
        let n = normalize(&t, &s, SetDescriptor::WmT).unwrap();
        assert_eq!(realize(&n, &s).unwrap(), realize(&t, &s).unwrap());
        assert!(!n.to_string().contains("(r"));
    }
}
