//! Parameter schedules `(m_j)`, `(n_j)`, `(s_j)`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

use crate::error::{Error, Result};
use crate::ratvec::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScheduleMode {
    PaperA,
    PaperSchreier,
    DeskTable,
}

/// Two readings of the exponent in the Schreier-variant recursion for `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchreierReading {
    /// `m_{j+1} = m_j^{m_j}`
    SelfPower,
    /// `m_{j+1} = m_j^{m_0^{j+1}}`
    BasePower,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSchedule {
    mode: ScheduleMode,
    id: String,
    m: Vec<BigUint>,
    n: Vec<BigUint>,
    s: Vec<u64>,
    /// Lower bound for every `m_j` with `j` beyond the table.
    next_m: BigUint,
}

impl fmt::Display for ParamSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

fn bits_needed(v: &BigUint) -> u64 {
    // least s with 2^s >= v
    if v.is_one() {
        return 0;
    }
    let b = v.bits();
    if (v - 1u32).bits() < b {
        b - 1
    } else {
        b
    }
}

impl ParamSchedule {
    /// `m_0 = 2`, `m_{j+1} = m_j^5`, `n_0 = 4`, `n_{j+1} = (12 n_j)^{s_j}` with
    /// `s_j` the least integer satisfying `2^{s_j} >= m_{j+1}^3`. Stored up to
    /// `j = 2`; `m_3` is kept as the tail bound.
    pub fn paper_a() -> ParamSchedule {
        let depth = 2;
        let mut m = vec![BigUint::from(2u32)];
        for j in 0..=depth {
            let next = m[j].pow(5);
            m.push(next);
        }
        let next_m = m.pop().unwrap();
        let mut n = vec![BigUint::from(4u32)];
        let mut s = Vec::new();
        for j in 0..depth {
            let sj = bits_needed(&m[j + 1].pow(3));
            s.push(sj);
            let next = (BigUint::from(12u32) * &n[j]).pow(sj as u32);
            n.push(next);
        }
        s.push(bits_needed(&next_m.pow(3)));
        ParamSchedule {
            mode: ScheduleMode::PaperA,
            id: "paperA:smin".into(),
            m,
            n,
            s,
            next_m,
        }
    }

    /// `m_0 = 2`, `n_0 = 1`, `n_{j+1} = m_1^{2 m_{j+1}} n_j`, up to `j = 2`.
    pub fn paper_schreier(reading: SchreierReading) -> ParamSchedule {
        let depth = 2;
        let two = BigUint::from(2u32);
        let mut m = vec![two.clone()];
        for j in 0..=depth {
            let exp = match reading {
                SchreierReading::SelfPower => m[j].clone(),
                SchreierReading::BasePower => two.pow(j as u32 + 1),
            };
            let e = exp.to_u32().expect("exponent fits");
            let next = m[j].pow(e);
            m.push(next);
        }
        let next_m = m.pop().unwrap();
        let mut n = vec![BigUint::one()];
        for j in 0..depth {
            let e = m[j + 1].to_u32().expect("exponent fits");
            let next = m[1].pow(2 * e) * &n[j];
            n.push(next);
        }
        let id = match reading {
            SchreierReading::SelfPower => "paperS:mm",
            SchreierReading::BasePower => "paperS:m0pow",
        };
        ParamSchedule {
            mode: ScheduleMode::PaperSchreier,
            id: id.into(),
            m,
            n,
            s: Vec::new(),
            next_m,
        }
    }

    /// An explicit table; beyond it every `m_j` is assumed to be at least
    /// `m_J + 1`.
    pub fn desk(name: &str, m: Vec<BigUint>, n: Vec<BigUint>) -> Result<ParamSchedule> {
        if m.is_empty() || m.len() != n.len() {
            return Err(Error::Config(format!("schedule {name}: m and n need equal nonzero length")));
        }
        if m[0] < BigUint::from(2u32) {
            return Err(Error::Config(format!("schedule {name}: m_0 must be at least 2")));
        }
        if m.windows(2).any(|w| w[0] >= w[1]) || n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("schedule {name}: m and n must increase strictly")));
        }
        if n[0] < BigUint::one() {
            return Err(Error::Config(format!("schedule {name}: n_0 must be positive")));
        }
        let next_m = m.last().unwrap() + 1u32;
        Ok(ParamSchedule {
            mode: ScheduleMode::DeskTable,
            id: format!("desk:{name}"),
            m,
            n,
            s: Vec::new(),
            next_m,
        })
    }

    pub fn desk_small(name: &str, m: &[u64], n: &[u64]) -> Result<ParamSchedule> {
        Self::desk(
            name,
            m.iter().map(|&v| BigUint::from(v)).collect(),
            n.iter().map(|&v| BigUint::from(v)).collect(),
        )
    }

    /// Extends a table to `len` entries with `m_{j+1} = 2 m_j`, `n_{j+1} = n_j + 1`.
    pub fn desk_extended(name: &str, m: &[u64], n: &[u64], len: usize) -> Result<ParamSchedule> {
        let mut mm: Vec<BigUint> = m.iter().map(|&v| BigUint::from(v)).collect();
        let mut nn: Vec<BigUint> = n.iter().map(|&v| BigUint::from(v)).collect();
        while mm.len() < len && !mm.is_empty() && mm.len() == nn.len() {
            let a = mm.last().unwrap() * 2u32;
            let b = nn.last().unwrap() + 1u32;
            mm.push(a);
            nn.push(b);
        }
        Self::desk(name, mm, nn)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn max_index(&self) -> usize {
        self.m.len() - 1
    }

    pub fn m(&self, j: usize) -> &BigUint {
        &self.m[j]
    }

    pub fn n(&self, j: usize) -> &BigUint {
        &self.n[j]
    }

    /// `s_j`, only recorded for the PaperA schedule.
    pub fn s(&self, j: usize) -> Option<u64> {
        self.s.get(j).copied()
    }

    pub fn m_rat(&self, j: usize) -> Rational {
        BigRational::from_integer(self.m[j].clone().into())
    }

    pub fn n_rat(&self, j: usize) -> Rational {
        BigRational::from_integer(self.n[j].clone().into())
    }

    pub fn m_inv(&self, j: usize) -> Rational {
        BigRational::new(1.into(), self.m[j].clone().into())
    }

    /// `n_j` as a count, saturating.
    pub fn n_count(&self, j: usize) -> usize {
        self.n[j].to_usize().unwrap_or(usize::MAX)
    }

    /// `k · n_j` as a count, saturating.
    pub fn n_times(&self, j: usize, k: usize) -> usize {
        (&self.n[j] * BigUint::from(k)).to_usize().unwrap_or(usize::MAX)
    }

    pub fn next_m_lower_bound(&self) -> &BigUint {
        &self.next_m
    }

    pub fn next_m_rat(&self) -> Rational {
        BigRational::from_integer(self.next_m.clone().into())
    }
}

fn parse_list(name: &str, key: &str, v: &str) -> Result<Vec<u64>> {
    v.split_whitespace()
        .map(|t| {
            t.parse::<u64>()
                .map_err(|_| Error::Config(format!("schedule {name}.{key}: bad entry `{t}`")))
        })
        .collect()
}

/// Named desk tables from `name.m = ...`, `name.n = ...` and the optional
/// `name.extend = len` lines. Other keys are ignored.
pub fn parse_schedule_table(text: &str) -> Result<BTreeMap<String, ParamSchedule>> {
    let mut raw: BTreeMap<String, (Vec<u64>, Vec<u64>, usize)> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let k = k.trim();
        let v = v.trim();
        let Some(rest) = k.strip_prefix("schedule.") else { continue };
        let Some((name, field)) = rest.rsplit_once('.') else { continue };
        let entry = raw.entry(name.to_string()).or_default();
        match field {
            "m" => entry.0 = parse_list(name, field, v)?,
            "n" => entry.1 = parse_list(name, field, v)?,
            "extend" => {
                entry.2 = v
                    .parse()
                    .map_err(|_| Error::Config(format!("schedule {name}.extend: bad value `{v}`")))?
            }
            other => return Err(Error::Config(format!("schedule {name}: unknown field `{other}`"))),
        }
    }
    raw.into_iter()
        .map(|(name, (m, n, ext))| {
            let s = ParamSchedule::desk_extended(&name, &m, &n, ext.max(m.len()))?;
            Ok((name, s))
        })
        .collect()
}

/// The desk tables shipped in `fixtures/schedules.conf`, built in so tests
/// and the binary agree without reading files.
pub const SHIPPED_TABLES: &str = include_str!("../../../../fixtures/schedules.conf");

pub fn named(name: &str) -> Result<ParamSchedule> {
    match name {
        "paperA" => Ok(ParamSchedule::paper_a()),
        "paperS" => Ok(ParamSchedule::paper_schreier(SchreierReading::SelfPower)),
        "paperS-alt" => Ok(ParamSchedule::paper_schreier(SchreierReading::BasePower)),
        _ => parse_schedule_table(SHIPPED_TABLES)?
            .remove(name)
            .ok_or_else(|| Error::Config(format!("unknown schedule `{name}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_a_values() {
        let s = ParamSchedule::paper_a();
        assert_eq!(s.m(0), &BigUint::from(2u32));
        assert_eq!(s.m(1), &BigUint::from(32u32));
        assert_eq!(s.m(2), &BigUint::from(1u64 << 25));
        assert_eq!(s.n(0), &BigUint::from(4u32));
        // 2^15 = 32^3
        assert_eq!(s.s(0), Some(15));
        assert_eq!(s.s(1), Some(75));
        assert_eq!(s.n(1), &BigUint::from(48u32).pow(15));
        assert_eq!(s.next_m_lower_bound(), &BigUint::from(2u32).pow(125));
    }

    #[test]
    fn paper_schreier_readings() {
        let a = ParamSchedule::paper_schreier(SchreierReading::SelfPower);
        let b = ParamSchedule::paper_schreier(SchreierReading::BasePower);
        assert_eq!(a.m(1), &BigUint::from(4u32));
        assert_eq!(a.m(2), &BigUint::from(256u32));
        assert_eq!(b.m(2), &BigUint::from(256u32));
        assert_eq!(b.next_m_lower_bound(), &BigUint::from(2u32).pow(64));
        assert_eq!(a.next_m_lower_bound(), &BigUint::from(2u32).pow(2048));
        assert_eq!(a.n(1), &BigUint::from(65536u32));
    }

    #[test]
    fn desk_validation() {
        assert!(ParamSchedule::desk_small("x", &[2, 2], &[1, 2]).is_err());
        assert!(ParamSchedule::desk_small("x", &[1, 3], &[1, 2]).is_err());
        assert!(ParamSchedule::desk_small("x", &[2, 3], &[1]).is_err());
        let s = ParamSchedule::desk_small("x", &[2, 4], &[2, 4]).unwrap();
        assert_eq!(s.id(), "desk:x");
        assert_eq!(s.next_m_lower_bound(), &BigUint::from(5u32));
    }

    #[test]
    fn shipped_tables_parse() {
        let t = parse_schedule_table(SHIPPED_TABLES).unwrap();
        for name in ["aux", "oracle", "oracle2", "tiny", "micro", "fuzz"] {
            assert!(t.contains_key(name), "missing {name}");
        }
        let micro = &t["micro"];
        // literal threshold m_2 >= n_1^2
        assert!(micro.m(2) >= &(micro.n(1) * micro.n(1)));
        let fuzz = &t["fuzz"];
        assert_eq!(fuzz.m(10), &BigUint::from(2048u32));
        assert_eq!(fuzz.n(10), &BigUint::from(11u32));
    }
}
