use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::dist::IterationRecord;
use crate::error::{format_err, Result};

/// One JSON object per line, one line per iteration.
pub struct RunLog {
    file: File,
}

impl RunLog {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self { file: File::create(path)? })
    }

    /// Opens for appending after dropping any records past `keep_through`.
    pub fn reopen(path: &Path, keep_through: u64) -> Result<Self> {
        let kept: Vec<IterationRecord> = read_runlog(path)?.into_iter().filter(|r| r.iteration <= keep_through).collect();
        let mut log = Self::create(path)?;
        for r in &kept {
            log.append(r)?;
        }
        log.file = OpenOptions::new().append(true).open(path)?;
        Ok(log)
    }

    pub fn append(&mut self, record: &IterationRecord) -> Result<()> {
        let line = serde_json::to_string(record)?;
        writeln!(self.file, "{line}")?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn read_runlog(path: &Path) -> Result<Vec<IterationRecord>> {
    let mut out: Vec<IterationRecord> = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: IterationRecord =
            serde_json::from_str(&line).map_err(|e| format_err(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if out.last().is_some_and(|p| p.iteration >= rec.iteration) {
            return Err(format_err(format!("{}:{}: iterations out of order", path.display(), i + 1)));
        }
        out.push(rec);
    }
    Ok(out)
}
