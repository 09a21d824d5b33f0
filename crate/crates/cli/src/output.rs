//! CSV serialization and all-or-nothing publication of an experiment's files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Wall time rounded to whole milliseconds, or zero when timing is off.
pub fn timing(seconds: f64, record: bool) -> f64 {
    if record {
        (seconds * 1e3).round() / 1e3
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Int(usize),
    Float(f64),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self {
            text,
            width: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.width, "row width differs from header");
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match cell {
                Cell::Int(v) => write!(self.text, "{v}").unwrap(),
                Cell::Float(v) => self.text.push_str(&float(*v)),
            }
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Files are written into a sibling staging directory and moved into the
/// destination only by [`Staging::publish`]; dropping an unpublished
/// staging area deletes it.
#[derive(Debug)]
pub struct Staging {
    dir: PathBuf,
    target: PathBuf,
    files: Vec<String>,
    published: bool,
}

impl Staging {
    pub fn new(target: &Path) -> std::io::Result<Self> {
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "output".into());
        let parent = target
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let dir = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            files: Vec::new(),
            published: false,
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, csv: &Csv) -> std::io::Result<()> {
        self.write(name, csv.as_str())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn publish(mut self) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.target)?;
        let mut out = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let dest = self.target.join(name);
            fs::rename(self.dir.join(name), &dest)?;
            out.push(dest);
        }
        fs::remove_dir_all(&self.dir)?;
        self.published = true;
        Ok(out)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.published {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0] {
            let s = float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(float(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new(&["N", "cost"]);
        csv.row(&[3usize.into(), 0.5.into()]);
        assert_eq!(csv.as_str(), "N,cost\n3,5.0000000000000000e-1\n");
    }

    #[test]
    fn timing_resolution() {
        assert_eq!(timing(1.23456, true), 1.235);
        assert_eq!(timing(1.23456, false), 0.0);
    }

    #[test]
    fn unpublished_staging_is_removed() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("run");
        let staged_dir;
        {
            let mut staging = Staging::new(&target).unwrap();
            staging.write("a.csv", "x\n").unwrap();
            staged_dir = staging.dir.clone();
            assert!(staged_dir.join("a.csv").exists());
        }
        assert!(!staged_dir.exists());
        assert!(!target.exists());
    }

    #[test]
    fn publish_moves_files() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("nested").join("run");
        let mut staging = Staging::new(&target).unwrap();
        staging.write("a.csv", "x\n").unwrap();
        let files = staging.publish().unwrap();
        assert_eq!(files, vec![target.join("a.csv")]);
        assert_eq!(fs::read_to_string(&files[0]).unwrap(), "x\n");
        assert_eq!(fs::read_dir(root.path().join("nested")).unwrap().count(), 1);
    }
}
