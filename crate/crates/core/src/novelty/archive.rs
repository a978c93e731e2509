use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{format_err, input, Result};
use crate::parallel::{self, Execution};

pub const DEFAULT_K: usize = 10;

/// Final (x, y) position of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorCharacteristic {
    pub x: f64,
    pub y: f64,
}

impl BehaviorCharacteristic {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(input("behavior characteristic must be finite"));
        }
        Ok(Self { x, y })
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for BehaviorCharacteristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

pub fn bc_distance(a: BehaviorCharacteristic, b: BehaviorCharacteristic) -> f64 {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    (dx * dx + dy * dy).sqrt()
}

/// Mean distance to the `min(k, len)` nearest entries; `+inf` for an empty
/// archive.
///
/// The k smallest distances are isolated with a partial selection and then
/// summed in ascending order, which gives the same bits as sorting all
/// distances first.
pub fn novelty(bc: BehaviorCharacteristic, entries: &[BehaviorCharacteristic], k: usize) -> f64 {
    if entries.is_empty() || k == 0 {
        return f64::INFINITY;
    }
    let mut dist: Vec<f64> = entries.iter().map(|&e| bc_distance(bc, e)).collect();
    let k = k.min(dist.len());
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, f64::total_cmp);
    }
    let nearest = &mut dist[..k];
    nearest.sort_unstable_by(f64::total_cmp);
    nearest.iter().sum::<f64>() / k as f64
}

pub fn novelty_batch(exec: Execution, queries: &[BehaviorCharacteristic], archive: &Archive) -> Vec<f64> {
    parallel::map(exec, queries, |&q| archive.novelty(q))
}

/// Append-only store of the behaviors of past metapopulation means.
#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    k: usize,
    entries: Vec<BehaviorCharacteristic>,
}

impl Archive {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(input("archive k must be >= 1"));
        }
        Ok(Self { k, entries: Vec::new() })
    }

    pub fn with_entries(k: usize, entries: Vec<BehaviorCharacteristic>) -> Result<Self> {
        let mut a = Self::new(k)?;
        for e in entries {
            a.add(e)?;
        }
        Ok(a)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BehaviorCharacteristic] {
        &self.entries
    }

    pub fn add(&mut self, bc: BehaviorCharacteristic) -> Result<()> {
        if !bc.is_finite() {
            return Err(input("archive entries must be finite"));
        }
        self.entries.push(bc);
        Ok(())
    }

    pub fn novelty(&self, bc: BehaviorCharacteristic) -> f64 {
        novelty(bc, &self.entries, self.k)
    }

    /// `k=<k> entries=<n>` followed by one `x y` line per entry.
    pub fn to_text(&self) -> String {
        let mut out = format!("k={} entries={}\n", self.k, self.entries.len());
        for e in &self.entries {
            out.push_str(&format!("{} {}\n", e.x, e.y));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| format_err("empty archive file"))?;
        let mut k = None;
        let mut n = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("k", v)) => k = v.parse::<usize>().ok(),
                Some(("entries", v)) => n = v.parse::<usize>().ok(),
                _ => return Err(format_err(format!("unexpected archive header field `{field}`"))),
            }
        }
        let (k, n) = k.zip(n).ok_or_else(|| format_err("archive header needs k and entries"))?;
        let mut entries = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let coords: Vec<f64> = parts
                .by_ref()
                .take(2)
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format_err(format!("archive line {}: {e}", i + 2)))?;
            if coords.len() != 2 || parts.next().is_some() {
                return Err(format_err(format!("archive line {} is not `x y`", i + 2)));
            }
            entries.push(
                BehaviorCharacteristic::new(coords[0], coords[1])
                    .map_err(|_| format_err(format!("archive line {} is not finite", i + 2)))?,
            );
        }
        if entries.len() != n {
            return Err(format_err(format!("archive header says {n} entries, found {}", entries.len())));
        }
        Self::with_entries(k, entries).map_err(|e| format_err(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
