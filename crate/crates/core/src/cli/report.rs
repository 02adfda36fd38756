//! Plain-text reports. Every number is an exact rational `num/den` with the
//! decimal in parentheses.

use std::fmt;

use crate::ratvec::{fmt_report, Rational};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    /// The statement being checked, in words.
    pub claim: String,
    pub values: Vec<(String, Rational)>,
    pub counts: Vec<(String, u64)>,
    pub pass: bool,
    /// Failing optional checks are reported without failing the suite.
    pub mandatory: bool,
    pub note: String,
    pub certificate: Option<String>,
}

impl Check {
    pub fn new(name: &str, claim: &str, pass: bool) -> Check {
        Check {
            name: name.into(),
            claim: claim.into(),
            values: vec![],
            counts: vec![],
            pass,
            mandatory: true,
            note: String::new(),
            certificate: None,
        }
    }

    pub fn value(mut self, name: &str, v: Rational) -> Check {
        self.values.push((name.into(), v));
        self
    }

    pub fn count(mut self, name: &str, n: usize) -> Check {
        self.counts.push((name.into(), n as u64));
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Check {
        self.note = note.into();
        self
    }

    pub fn certificate(mut self, c: impl Into<String>) -> Check {
        self.certificate = Some(c.into());
        self
    }

    pub fn optional(mut self) -> Check {
        self.mandatory = false;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub suite: String,
    pub truncation: String,
    pub checks: Vec<Check>,
    /// Free-form listing lines printed before the checks.
    pub body: Vec<String>,
}

impl Report {
    pub fn new(suite: &str, truncation: impl Into<String>) -> Report {
        Report { suite: suite.into(), truncation: truncation.into(), checks: vec![], body: vec![] }
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn line(&mut self, l: impl Into<String>) {
        self.body.push(l.into());
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass || !c.mandatory)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {}", self.suite)?;
        writeln!(f, "truncation {}", self.truncation)?;
        for l in &self.body {
            writeln!(f, "{l}")?;
        }
        for c in &self.checks {
            let tag = match (c.pass, c.mandatory) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "NOTE",
            };
            writeln!(f, "{tag} {}: {}", c.name, c.claim)?;
            for (k, n) in &c.counts {
                writeln!(f, "    {k}: {n}")?;
            }
            for (k, v) in &c.values {
                writeln!(f, "    {k} = {}", fmt_report(v))?;
            }
            if !c.note.is_empty() {
                writeln!(f, "    note: {}", c.note)?;
            }
            if let Some(cert) = &c.certificate {
                writeln!(f, "    certificate: {cert}")?;
            }
        }
        writeln!(f, "verdict {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}
