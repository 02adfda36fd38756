//! `key = value` run configuration. Environment variables `HIEXT_CACHE`,
//! `HIEXT_ALLOC_LOG`, `HIEXT_FIXTURES` and `HIEXT_REPORTS` override the paths
//! and nothing else.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::hi_core::{Truncation, Variant};
use crate::mt_norm::{named_schedule, ParamSchedule, SetDescriptor};

pub const PATH_ENV_PREFIX: &str = "HIEXT_";

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub schedule_id: String,
    pub descriptor: SetDescriptor,
    pub depth: usize,
    pub support_bound: u64,
    pub max_index: usize,
    pub budget: usize,
    pub variant: Variant,
    pub schreier: bool,
    pub hi_support_bound: u64,
    pub stage: usize,
    pub pool_bound: u64,
    pub samples: usize,
    pub pairs: usize,
    pub seed: u64,
    pub cache: Option<PathBuf>,
    pub alloc_log: Option<PathBuf>,
    pub fixtures: PathBuf,
    pub reports: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schedule_id: "micro".into(),
            descriptor: SetDescriptor::WmT,
            depth: 6,
            support_bound: 6,
            max_index: 2,
            budget: 5_000_000,
            variant: Variant::Convex,
            schreier: false,
            hi_support_bound: 3,
            stage: 2,
            pool_bound: 4096,
            samples: 1000,
            pairs: 10_000,
            seed: 1,
            cache: None,
            alloc_log: None,
            fixtures: PathBuf::from("fixtures"),
            reports: PathBuf::from("reports"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("`{key}`: bad value `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Reads `key = value` lines over the defaults. Blank lines and `#`
    /// comments are skipped; `schedule.*` lines belong to the schedule table
    /// and are ignored here.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "schedule" => self.schedule_id = v.into(),
            "descriptor" => self.descriptor = v.parse()?,
            "depth" => self.depth = parse_num(key, v)?,
            "support_bound" => self.support_bound = parse_num(key, v)?,
            "max_index" => self.max_index = parse_num(key, v)?,
            "budget" => self.budget = parse_num(key, v)?,
            "variant" => self.variant = v.parse()?,
            "schreier" => self.schreier = parse_bool(key, v)?,
            "hi_support_bound" => self.hi_support_bound = parse_num(key, v)?,
            "stage" => self.stage = parse_num(key, v)?,
            "pool_bound" => self.pool_bound = parse_num(key, v)?,
            "samples" => self.samples = parse_num(key, v)?,
            "pairs" => self.pairs = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "cache" => self.cache = opt_path(v),
            "alloc_log" => self.alloc_log = opt_path(v),
            "fixtures" => self.fixtures = v.into(),
            "reports" => self.reports = v.into(),
            k if k.starts_with("schedule.") => {}
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `HIEXT_*` path overrides from `env`.
    pub fn apply_env<F: Fn(&str) -> Option<String>>(&mut self, env: F) {
        let var = |name: &str| env(&format!("{PATH_ENV_PREFIX}{name}"));
        if let Some(v) = var("CACHE") {
            self.cache = opt_path(&v);
        }
        if let Some(v) = var("ALLOC_LOG") {
            self.alloc_log = opt_path(&v);
        }
        if let Some(v) = var("FIXTURES") {
            self.fixtures = v.into();
        }
        if let Some(v) = var("REPORTS") {
            self.reports = v.into();
        }
    }

    pub fn validate(&self) -> Result<()> {
        named_schedule(&self.schedule_id)?;
        if self.budget == 0 || self.pool_bound == 0 || self.support_bound == 0 {
            return Err(Error::Config("budgets and bounds must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<ParamSchedule> {
        named_schedule(&self.schedule_id)
    }

    pub fn ext_truncation(&self) -> Truncation {
        Truncation { support_bound: self.support_bound, max_index: self.max_index, budget: self.budget }
    }

    pub fn hi_truncation(&self) -> Truncation {
        Truncation { support_bound: self.hi_support_bound, max_index: self.max_index, budget: self.budget }
    }

    /// The settings as `key = value` lines, for report headers.
    pub fn listing(&self) -> String {
        let mut m = BTreeMap::new();
        m.insert("schedule", self.schedule_id.clone());
        m.insert("descriptor", self.descriptor.to_string());
        m.insert("depth", self.depth.to_string());
        m.insert("support_bound", self.support_bound.to_string());
        m.insert("max_index", self.max_index.to_string());
        m.insert("budget", self.budget.to_string());
        m.insert("variant", self.variant.to_string());
        m.insert("schreier", self.schreier.to_string());
        m.insert("hi_support_bound", self.hi_support_bound.to_string());
        m.insert("stage", self.stage.to_string());
        m.insert("pool_bound", self.pool_bound.to_string());
        m.insert("samples", self.samples.to_string());
        m.insert("pairs", self.pairs.to_string());
        m.insert("seed", self.seed.to_string());
        m.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_env() {
        let mut c = RunConfig::parse("# run\nschedule = oracle2\nsupport_bound = 5\ncache = /tmp/x\n").unwrap();
        assert_eq!(c.schedule_id, "oracle2");
        assert_eq!(c.support_bound, 5);
        c.apply_env(|k| (k == "HIEXT_CACHE").then(|| "none".to_string()));
        assert!(c.cache.is_none());
        // only paths can be overridden
        c.apply_env(|k| (k == "HIEXT_SCHEDULE").then(|| "aux".to_string()));
        assert_eq!(c.schedule_id, "oracle2");
        assert!(RunConfig::parse("nonsense = 1").is_err());
        assert!(RunConfig::parse("depth = x").is_err());
        assert!(RunConfig::parse("schedule = nope").unwrap().validate().is_err());
    }
}
