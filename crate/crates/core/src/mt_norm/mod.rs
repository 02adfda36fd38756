//! Exact norms in mixed Tsirelson spaces, the brute-force norming-set
//! oracle and the auxiliary-space bound checks.

mod bounds;
mod cache;
mod dp;
mod oracle;
mod schedule;

use std::fmt;
use std::str::FromStr;

pub use bounds::{aux_bound_report, basis_average, verify_ris_bounds, BoundCheck, RisClaim, RisReport};
pub use cache::NormCache;
pub use dp::NormEngine;
pub use oracle::{generate_set, oracle_sup, DenseSet};
pub use schedule::{
    named as named_schedule, parse_schedule_table, ParamSchedule, ScheduleMode, SchreierReading,
    SHIPPED_TABLES,
};

use crate::error::{ParseError, Result};
use crate::families::FamilyDescriptor;
use crate::ratvec::{Rational, SparseVector};
use crate::tree::TreeAnalysis;

/// Which family each weight index uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SetDescriptor {
    /// `A_{n_j}`
    WmT,
    /// `A_{4 n_j}`
    Aux,
    /// `A_{12 n_j}`
    Aux2,
    /// `S^f_{n_j}` on even indices, `S^f_{n_j} ⊙ A_2` on odd ones
    WmTSchreier,
    /// `A_{n_j}` on even indices, `A_{2 n_j}` on odd ones: the ambient space
    /// of the extension
    ExtMT,
    /// `S_{n_j}` on every index
    Schreier,
}

impl SetDescriptor {
    pub fn family(&self, j: usize, sched: &ParamSchedule) -> FamilyDescriptor {
        match self {
            SetDescriptor::WmT => FamilyDescriptor::an(sched.n_count(j)),
            SetDescriptor::Aux => FamilyDescriptor::an(sched.n_times(j, 4)),
            SetDescriptor::Aux2 => FamilyDescriptor::an(sched.n_times(j, 12)),
            SetDescriptor::WmTSchreier => {
                if j % 2 == 0 {
                    FamilyDescriptor::flat(sched.n_count(j))
                } else {
                    FamilyDescriptor::flat_a2(sched.n_count(j))
                }
            }
            SetDescriptor::ExtMT => {
                if j % 2 == 0 {
                    FamilyDescriptor::an(sched.n_count(j))
                } else {
                    FamilyDescriptor::an(sched.n_times(j, 2))
                }
            }
            SetDescriptor::Schreier => FamilyDescriptor::schreier(sched.n_count(j)),
        }
    }

    pub fn count_only(&self) -> bool {
        !matches!(self, SetDescriptor::WmTSchreier | SetDescriptor::Schreier)
    }
}

impl fmt::Display for SetDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SetDescriptor::WmT => "WmT",
            SetDescriptor::Aux => "Aux",
            SetDescriptor::Aux2 => "Aux2",
            SetDescriptor::WmTSchreier => "WmTS",
            SetDescriptor::ExtMT => "ExtMT",
            SetDescriptor::Schreier => "S",
        })
    }
}

impl FromStr for SetDescriptor {
    type Err = ParseError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "WmT" => SetDescriptor::WmT,
            "Aux" => SetDescriptor::Aux,
            "Aux2" => SetDescriptor::Aux2,
            "WmTS" => SetDescriptor::WmTSchreier,
            "ExtMT" => SetDescriptor::ExtMT,
            "S" => SetDescriptor::Schreier,
            _ => return Err(ParseError::new(format!("unknown set descriptor `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormResult {
    pub value: Rational,
    pub certificate: TreeAnalysis,
}

pub fn norm(x: &SparseVector, sched: &ParamSchedule, d: SetDescriptor) -> Result<NormResult> {
    NormEngine::new(sched.clone(), d).norm(x)
}

/// Largest `f(x)` over functionals of root weight `m_i`, optionally with no
/// node of weight `m_avoid` anywhere in the tree.
pub fn max_action_with_weight(
    x: &SparseVector,
    i: usize,
    sched: &ParamSchedule,
    d: SetDescriptor,
    avoid: Option<usize>,
) -> Result<Rational> {
    Ok(NormEngine::new(sched.clone(), d).max_action(x, i, avoid)?.value)
}
