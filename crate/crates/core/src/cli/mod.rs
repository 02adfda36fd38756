//! Command-line front end. Exit codes: 0 pass, 2 failed check, 3 budget or
//! truncation exhausted, 4 bad input.

pub mod config;
pub mod report;
pub mod suites;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::coding::{Coder, KShape};
use crate::error::{Error, Result};
use crate::extension::{build_stages, classify_sequence, diff_snapshot, write_snapshot, Classification, ExtConfig};
use crate::hi_core::{generate_whi, validate_whi};
use crate::mt_norm::NormEngine;
use crate::ratvec::{fmt_report, parse_rat, SparseVector};
use crate::tree::{certify_with, ConstructionRecord, TreeAnalysis};

pub use config::RunConfig;
pub use report::{Check, Report};
pub use suites::{run_suite, SuiteArgs, SUITES};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_INPUT: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "hiext", version, about = "Exact norming-set checks for mixed Tsirelson and HI extension spaces")]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one setting, `key=value`. Repeatable.
    #[arg(long = "set", global = true)]
    pub sets: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SetKind {
    Whi,
    Wex,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact norm and certificate of every vector in the file.
    Norm { vectors: PathBuf },
    /// Build a staged set up to `stage`, validate it and write or compare a snapshot.
    Gen {
        stage: usize,
        #[arg(long, value_enum, default_value = "wex")]
        kind: SetKind,
        /// Directory to write the snapshot into.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory holding a snapshot to compare against.
        #[arg(long)]
        check: Option<PathBuf>,
    },
    /// Kind of a sequence of trees at the configured stage of W_ex.
    Classify { sequence: PathBuf },
    /// Run one named suite.
    Verify {
        suite: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        max: Option<u64>,
    },
    /// Check a certificate tree against a vector.
    Cert { tree: PathBuf, vector: PathBuf },
    /// Run every suite; `all` is the only target.
    Suite {
        target: String,
        /// Write the reports as the new golden files instead of comparing.
        #[arg(long)]
        bless: bool,
    },
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(out, "{e}");
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
        }
    };
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            return EXIT_INPUT;
        }
    };
    match run(&cli.command, &cfg, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_budget() {
        EXIT_BUDGET
    } else if matches!(e, Error::WitnessFailed(_) | Error::InvalidTree(_) | Error::NonSuccessive(_)) {
        EXIT_FAIL
    } else {
        EXIT_INPUT
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::parse(&read(p)?)?,
        None => RunConfig::default(),
    };
    for s in &cli.sets {
        let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got `{s}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.apply_env(|k| std::env::var(k).ok());
    cfg.validate()?;
    Ok(cfg)
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

/// Non-empty lines that are not `#` comments.
fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn verdict(pass: bool) -> i32 {
    if pass {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

pub fn run(cmd: &Command, cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Norm { vectors } => norm_cmd(vectors, cfg, out),
        Command::Gen { stage, kind, out: dir, check } => gen_cmd(*stage, *kind, dir.as_deref(), check.as_deref(), cfg, out),
        Command::Classify { sequence } => classify_cmd(sequence, cfg, out),
        Command::Verify { suite, n, max } => {
            let r = run_suite(suite, cfg, &SuiteArgs { n: *n, max: *max })?;
            write!(out, "{r}")?;
            Ok(verdict(r.passed()))
        }
        Command::Cert { tree, vector } => cert_cmd(tree, vector, cfg, out),
        Command::Suite { target, bless } => {
            if target != "all" {
                return Err(Error::Config(format!("unknown suite target `{target}`")));
            }
            suite_all(cfg, *bless, out)
        }
    }
}

fn engine(cfg: &RunConfig) -> Result<NormEngine> {
    let e = NormEngine::new(cfg.schedule()?, cfg.descriptor);
    match &cfg.cache {
        Some(p) => e.with_cache(p),
        None => Ok(e),
    }
}

fn norm_cmd(path: &Path, cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let text = read(path)?;
    let e = engine(cfg)?;
    for line in content_lines(&text) {
        let x: SparseVector = line.parse()?;
        let r = e.norm(&x)?;
        writeln!(out, "x = {}", x.canonical())?;
        writeln!(out, "norm = {}", fmt_report(&r.value))?;
        writeln!(out, "certificate = {}", r.certificate)?;
    }
    Ok(EXIT_PASS)
}

fn coder(cfg: &RunConfig, shape: KShape) -> Result<Coder> {
    let sched = cfg.schedule()?;
    match &cfg.alloc_log {
        Some(p) => Coder::with_log(&sched, shape, cfg.pool_bound, p),
        None => Ok(Coder::new(&sched, shape, cfg.pool_bound)),
    }
}

fn ext_config(cfg: &RunConfig) -> ExtConfig {
    let mut c = if cfg.schreier {
        ExtConfig::schreier(cfg.ext_truncation(), cfg.stage)
    } else {
        ExtConfig::standard(cfg.ext_truncation(), cfg.stage)
    };
    c.variant = cfg.variant;
    c
}

fn gen_cmd(stage: usize, set: SetKind, dir: Option<&Path>, check: Option<&Path>, cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let sched = cfg.schedule()?;
    match set {
        SetKind::Whi => {
            let shape = if cfg.schreier { KShape::MaximalSchreier } else { KShape::Count };
            let desc = if cfg.schreier { crate::mt_norm::SetDescriptor::Schreier } else { cfg.descriptor };
            let mut c = coder(cfg, shape)?;
            let w = generate_whi(stage, cfg.hi_truncation(), &sched, desc, cfg.variant, &mut c)?;
            let mut invalid = 0;
            for id in w.ids() {
                if validate_whi(&w.record(id).tree, &sched, desc, cfg.variant, &c).is_err() {
                    invalid += 1;
                }
            }
            let listing = w.listing();
            writeln!(out, "W_hi stage {stage} {}: {} functionals, {invalid} invalid", cfg.hi_truncation(), w.len())?;
            let name = format!("whi_stage{stage}.txt");
            if let Some(d) = dir {
                fs::create_dir_all(d)?;
                fs::write(d.join(&name), &listing)?;
            }
            let mut same = true;
            if let Some(d) = check {
                same = read(&d.join(&name)).map(|old| old == listing).unwrap_or(false);
                writeln!(out, "snapshot {}", if same { "matches" } else { "differs" })?;
            }
            Ok(verdict(invalid == 0 && same))
        }
        SetKind::Wex => {
            let mut ec = ext_config(cfg);
            ec.max_stage = stage;
            let shape = ec.shape;
            let s = build_stages(ec, &sched, coder(cfg, shape)?, stage)?;
            writeln!(out, "W_ex stage {stage} {}: {} functionals", cfg.ext_truncation(), s.w_ids().len())?;
            if let Some(d) = dir {
                write_snapshot(&s, d)?;
            }
            let mut same = true;
            if let Some(d) = check {
                let bad = diff_snapshot(&s, d)?;
                for b in &bad {
                    writeln!(out, "differs: {b}")?;
                }
                same = bad.is_empty();
                writeln!(out, "snapshot {}", if same { "matches" } else { "differs" })?;
            }
            Ok(verdict(same))
        }
    }
}

/// Sequence file: `slot = j` and then one tree per line.
fn classify_cmd(path: &Path, cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let text = read(path)?;
    let sched = cfg.schedule()?;
    let ec = ext_config(cfg);
    let mut slot = None;
    let mut seq = Vec::new();
    for line in content_lines(&text) {
        if let Some(v) = line.strip_prefix("slot").and_then(|r| r.trim_start().strip_prefix('=')) {
            slot = Some(v.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad slot `{v}`")))?);
            continue;
        }
        let t: TreeAnalysis = line.parse()?;
        seq.push(ConstructionRecord::from_tree(t, &sched, ec.ext_desc)?);
    }
    let slot = slot.ok_or_else(|| Error::Config("sequence file needs a `slot = j` line".into()))?;
    let shape = ec.shape;
    let s = build_stages(ec, &sched, coder(cfg, shape)?, cfg.stage)?;
    let c = classify_sequence(&seq, slot, &s);
    writeln!(out, "{c}")?;
    Ok(verdict(matches!(c, Classification::Kind(_))))
}

/// Tree file: a tree, optionally followed by `claim = p/q`. Vector file: one vector.
fn cert_cmd(tree_path: &Path, vec_path: &Path, cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let sched = cfg.schedule()?;
    let text = read(tree_path)?;
    let mut lines = content_lines(&text);
    let tree: TreeAnalysis = lines.next().ok_or_else(|| Error::Config("empty tree file".into()))?.parse()?;
    let claim = match lines.next() {
        Some(l) => {
            let v = l.strip_prefix("claim").and_then(|r| r.trim_start().strip_prefix('='));
            Some(parse_rat(v.ok_or_else(|| Error::Config(format!("unexpected line `{l}`")))?.trim())?)
        }
        None => None,
    };
    let vtext = read(vec_path)?;
    let x: SparseVector =
        content_lines(&vtext).next().ok_or_else(|| Error::Config("empty vector file".into()))?.parse()?;
    let value = match certify_with(&tree, &x, &sched, cfg.descriptor) {
        Ok(v) => v,
        Err(e) => {
            writeln!(out, "invalid certificate: {e}")?;
            return Ok(EXIT_FAIL);
        }
    };
    let norm = engine(cfg)?.norm_value(&x)?;
    writeln!(out, "f(x) = {}", fmt_report(&value))?;
    writeln!(out, "norm = {}", fmt_report(&norm))?;
    let mut ok = value <= norm;
    if let Some(c) = &claim {
        let matches = *c == value;
        writeln!(out, "claim = {} {}", fmt_report(c), if matches { "matches" } else { "does not match" })?;
        ok &= matches;
    }
    writeln!(out, "{}", if ok { "certificate valid" } else { "invalid certificate" })?;
    Ok(verdict(ok))
}

fn golden_dir(cfg: &RunConfig) -> PathBuf {
    cfg.fixtures.join("golden")
}

/// Every suite in order. Reports go to `cfg.reports`, and each is compared
/// with the golden copy under the fixtures directory when one exists.
pub fn suite_all(cfg: &RunConfig, bless: bool, out: &mut dyn Write) -> Result<i32> {
    fs::create_dir_all(&cfg.reports)?;
    let mut summary = String::new();
    summary.push_str(&cfg.listing());
    let mut all_pass = true;
    let mut budget = false;
    for name in SUITES {
        let (text, pass) = match run_suite(name, cfg, &SuiteArgs::default()) {
            Ok(r) => (r.to_string(), r.passed()),
            Err(e) => {
                budget |= e.is_budget();
                (format!("suite {name}\nerror: {e}\nverdict FAIL\n"), false)
            }
        };
        fs::write(cfg.reports.join(format!("{name}.txt")), &text)?;
        let golden = golden_dir(cfg).join(format!("{name}.txt"));
        let golden_state = if bless {
            fs::create_dir_all(golden_dir(cfg))?;
            fs::write(&golden, &text)?;
            "blessed"
        } else {
            match fs::read_to_string(&golden) {
                Ok(g) if g == text => "golden ok",
                Ok(_) => "golden DIFFERS",
                Err(_) => "no golden",
            }
        };
        let ok = pass && golden_state != "golden DIFFERS";
        all_pass &= ok;
        summary.push_str(&format!("{} {name} ({golden_state})\n", if ok { "PASS" } else { "FAIL" }));
    }
    summary.push_str(&format!("overall {}\n", if all_pass { "PASS" } else { "FAIL" }));
    fs::write(cfg.reports.join("summary.txt"), &summary)?;
    write!(out, "{summary}")?;
    Ok(if all_pass {
        EXIT_PASS
    } else if budget {
        EXIT_BUDGET
    } else {
        EXIT_FAIL
    })
}
