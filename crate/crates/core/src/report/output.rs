use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hex;
use crate::error::Result;

/// A real with 17 significant digits, or an integer as is.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Real(f64),
    Int(i64),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i32> for Cell {
    fn from(x: i32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}

pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Real(x) => f.write_str(&real(*x)),
            Cell::Int(i) => write!(f, "{i}"),
        }
    }
}

/// A numeric table: columns named with their units.
pub struct Table {
    pub columns: Vec<(&'static str, &'static str)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[(&'static str, &'static str)]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Writes result files into one directory and records their digests.
pub struct OutputDir {
    dir: PathBuf,
    config_digest: String,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path, config_digest: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config_digest: config_digest.to_string(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    fn write(&mut self, name: &str, body: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), body)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: hex(&Sha256::digest(body)),
            bytes: body.len(),
        });
        Ok(())
    }

    /// CSV with a comment line carrying the config digest and a header row
    /// of `name [unit]` columns.
    pub fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "# config_sha256={}", self.config_digest);
        let header: Vec<String> = table
            .columns
            .iter()
            .map(|(c, u)| format!("{c} [{u}]"))
            .collect();
        let _ = writeln!(s, "{}", header.join(","));
        for row in &table.rows {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        self.write(name, s.as_bytes())
    }

    /// Two-column whitespace-separated plot data.
    pub fn dat(
        &mut self,
        name: &str,
        x: (&str, &str),
        y: (&str, &str),
        points: &[(f64, f64)],
    ) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "# config_sha256={}", self.config_digest);
        let _ = writeln!(s, "# {} [{}] {} [{}]", x.0, x.1, y.0, y.1);
        for &(a, b) in points {
            let _ = writeln!(s, "{} {}", real(a), real(b));
        }
        self.write(name, s.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut body = serde_json::to_vec_pretty(value)?;
        body.push(b'\n');
        self.write(name, &body)
    }

    /// Writes manifest.json, which lists every other file; it is not
    /// listed itself.
    pub fn finish<T: Serialize>(self, manifest: &T) -> Result<()> {
        let mut body = serde_json::to_vec_pretty(manifest)?;
        body.push(b'\n');
        std::fs::write(self.dir.join("manifest.json"), body)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(real(0.1), "1.0000000000000001e-1");
        assert_eq!(real(1.0), "1.0000000000000000e0");
        let x = std::f64::consts::PI;
        assert_eq!(real(x).parse::<f64>().unwrap(), x);
        assert_eq!(real(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_header_and_digest() {
        let d = tempfile::tempdir().unwrap();
        let mut o = OutputDir::create(d.path(), "abc").unwrap();
        let mut t = Table::new(&[("n", "step"), ("p", "fraction")]);
        t.push(vec![1usize.into(), 0.5.into()]);
        o.csv("t.csv", &t).unwrap();
        let s = std::fs::read_to_string(d.path().join("t.csv")).unwrap();
        assert_eq!(
            s,
            "# config_sha256=abc\nn [step],p [fraction]\n1,5.0000000000000000e-1\n"
        );
        assert_eq!(o.files().len(), 1);
        assert_eq!(o.files()[0].sha256, hex(&Sha256::digest(s.as_bytes())));
    }
}
