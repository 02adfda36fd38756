//! Action bounds for averages of the basis and of RIS blocks.

use num_bigint::BigInt;

use super::{NormEngine, ParamSchedule, SetDescriptor};
use crate::error::Result;
use crate::ratvec::{int, Rational, SparseVector};
use crate::tree::TreeAnalysis;

/// One declared vector with the bounds it should satisfy.
#[derive(Clone, Debug)]
pub enum RisClaim {
    /// `x = (m_j/n_j) Σ e_k` style basis average: `|f(x)| <= 2/m_i` for
    /// `i < j`, `<= m_j/m_i` for `i >= j`, and `<= 2/m_j^2` when no node of
    /// the tree has weight `m_j`.
    BasisAverage { x: SparseVector, j: usize },
    /// A `C`-ℓ1 average of size `n_j`: `|f(x)| <= 3C/(2 m_i)` for `i < j`.
    L1Average { x: SparseVector, j: usize, c: Rational },
    /// `n_j^{-1}` times a RIS of length `n_j`: `3C/(m_i m_j)` for `i < j`,
    /// `C/m_i + 2C/n_j` for `i >= j`.
    RisAverage { x: SparseVector, j: usize, c: Rational },
    /// Average over an odd-weight dependent length: if every weight-`m_j`
    /// action is at most `C/m_j^2` then `||x|| <= 4C/m_j^2`.
    SmallAverage { x: SparseVector, j: usize, c: Rational },
}

#[derive(Clone, Debug)]
pub struct BoundCheck {
    pub claim: usize,
    pub name: String,
    pub lhs: Rational,
    pub rhs: Rational,
    pub pass: bool,
    /// The maximizing functional, kept only for failures.
    pub witness: Option<TreeAnalysis>,
}

#[derive(Clone, Debug, Default)]
pub struct RisReport {
    pub checks: Vec<BoundCheck>,
}

impl RisReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn check(claim: usize, name: String, lhs: Rational, rhs: Rational, tree: TreeAnalysis) -> BoundCheck {
    let pass = lhs <= rhs;
    BoundCheck { claim, name, lhs, rhs, pass, witness: if pass { None } else { Some(tree) } }
}

pub fn verify_ris_bounds(claims: &[RisClaim], sched: &ParamSchedule, d: SetDescriptor) -> Result<RisReport> {
    let engine = NormEngine::new(sched.clone(), d);
    let mut report = RisReport::default();
    let two = int(2);
    let three = int(3);
    for (ci, claim) in claims.iter().enumerate() {
        match claim {
            RisClaim::BasisAverage { x, j } => {
                let j = *j;
                let mj = sched.m_rat(j);
                for i in 0..=sched.max_index() {
                    let r = engine.max_action(x, i, None)?;
                    let mi = sched.m_rat(i);
                    let (label, rhs) = if i < j {
                        ("i<j", &two / &mi)
                    } else {
                        ("i>=j", &mj / &mi)
                    };
                    report.checks.push(check(ci, format!("basis j={j} i={i} {label}"), r.value, rhs, r.certificate));
                    if i != j {
                        let r = engine.max_action(x, i, Some(j))?;
                        let rhs = &two / (&mj * &mj);
                        report
                            .checks
                            .push(check(ci, format!("basis j={j} i={i} avoid"), r.value, rhs, r.certificate));
                    }
                }
            }
            RisClaim::L1Average { x, j, c } => {
                for i in 0..*j {
                    let r = engine.max_action(x, i, None)?;
                    let rhs = &three * c / (&two * sched.m_rat(i));
                    report.checks.push(check(ci, format!("l1avg j={j} i={i}"), r.value, rhs, r.certificate));
                }
            }
            RisClaim::RisAverage { x, j, c } => {
                let mj = sched.m_rat(*j);
                let nj = sched.n_rat(*j);
                for i in 0..=sched.max_index() {
                    let r = engine.max_action(x, i, None)?;
                    let mi = sched.m_rat(i);
                    let rhs = if i < *j {
                        &three * c / (&mi * &mj)
                    } else {
                        c / &mi + &two * c / &nj
                    };
                    report.checks.push(check(ci, format!("ris j={j} i={i}"), r.value, rhs, r.certificate));
                }
            }
            RisClaim::SmallAverage { x, j, c } => {
                let mj = sched.m_rat(*j);
                let r = engine.max_action(x, *j, None)?;
                let hyp = c / (&mj * &mj);
                if r.value <= hyp {
                    let n = engine.norm(x)?;
                    let rhs = int(4) * c / (&mj * &mj);
                    report.checks.push(check(ci, format!("small j={j}"), n.value, rhs, n.certificate));
                } else {
                    // hypothesis fails, nothing is claimed
                    report.checks.push(BoundCheck {
                        claim: ci,
                        name: format!("small j={j} (hypothesis not met)"),
                        lhs: r.value,
                        rhs: hyp,
                        pass: true,
                        witness: None,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// `(m_j/n_j) Σ_{k <= n_j} e_k`.
pub fn basis_average(sched: &ParamSchedule, j: usize) -> SparseVector {
    let n = sched.n_count(j) as u64;
    let c = Rational::new(BigInt::from(sched.m(j).clone()), BigInt::from(sched.n(j).clone()));
    SparseVector::constant_on(1..=n, &c)
}

/// The basis-average bounds for every `j < J`; the last table entry only
/// serves as the weight beyond which nothing is stored.
pub fn aux_bound_report(sched: &ParamSchedule, d: SetDescriptor) -> Result<RisReport> {
    let claims: Vec<RisClaim> = (0..sched.max_index())
        .map(|j| RisClaim::BasisAverage { x: basis_average(sched, j), j })
        .collect();
    verify_ris_bounds(&claims, sched, d)
}
