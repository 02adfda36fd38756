//! Append-only value cache: one `scheduleId|descriptor|vector|constraint|num/den`
//! record per line. Replay rebuilds the map; an unterminated or malformed
//! last line is cut off.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ratvec::{fmt_rat, parse_rat, Rational};

pub struct NormCache {
    path: PathBuf,
    map: HashMap<[String; 4], Rational>,
    file: File,
}

fn parse_line(line: &str) -> Option<([String; 4], Rational)> {
    let parts: Vec<&str> = line.split('|').collect();
    if parts.len() != 5 {
        return None;
    }
    let v = parse_rat(parts[4]).ok()?;
    Some(([parts[0].into(), parts[1].into(), parts[2].into(), parts[3].into()], v))
}

impl NormCache {
    pub fn open(path: &Path) -> Result<NormCache> {
        let mut text = String::new();
        if path.exists() {
            File::open(path)?.read_to_string(&mut text)?;
        }
        let mut map = HashMap::new();
        let mut good = 0usize;
        let mut offset = 0usize;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        for (i, raw) in lines.iter().enumerate() {
            let last = i + 1 == lines.len();
            let parsed = if raw.ends_with('\n') { parse_line(raw.trim_end_matches('\n')) } else { None };
            match parsed {
                Some((k, v)) => {
                    if let Some(prev) = map.get(&k) {
                        if *prev != v {
                            return Err(Error::Io(format!(
                                "{}: conflicting values for one key at line {}",
                                path.display(),
                                i + 1
                            )));
                        }
                    }
                    map.insert(k, v);
                    offset += raw.len();
                    good = offset;
                }
                None if last => break,
                None => {
                    return Err(Error::Io(format!("{}: corrupt record at line {}", path.display(), i + 1)));
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if good < text.len() {
            file.set_len(good as u64)?;
        }
        Ok(NormCache { path: path.to_path_buf(), map, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, key: &[String; 4]) -> Option<Rational> {
        self.map.get(key).cloned()
    }

    pub fn append(&mut self, key: &[String; 4], v: &Rational) -> Result<()> {
        if key.iter().any(|k| k.contains('|') || k.contains('\n')) {
            return Err(Error::Io("cache key contains a separator".into()));
        }
        let line = format!("{}|{}|{}|{}|{}\n", key[0], key[1], key[2], key[3], fmt_rat(v));
        self.file.write_all(line.as_bytes())?;
        self.map.insert(key.clone(), v.clone());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratvec::rat;

    fn key(v: &str) -> [String; 4] {
        ["desk:t".into(), "WmT".into(), v.into(), "none".into()]
    }

    #[test]
    fn replay_and_truncate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("norms.cache");
        {
            let mut c = NormCache::open(&p).unwrap();
            c.append(&key("1:1/1"), &rat(1, 1)).unwrap();
            c.append(&key("1:1/1 2:1/1"), &rat(1, 1)).unwrap();
        }
        // simulate a crash halfway through a write
        let mut f = OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(b"desk:t|WmT|1:2/1|no").unwrap();
        drop(f);
        let c = NormCache::open(&p).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(&key("1:1/1 2:1/1")), Some(rat(1, 1)));
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.ends_with("1/1\n"));
    }

    #[test]
    fn corrupt_middle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("norms.cache");
        std::fs::write(&p, "garbage\nx|y|z|w|1/1\n").unwrap();
        assert!(NormCache::open(&p).is_err());
    }
}
