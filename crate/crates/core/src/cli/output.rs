//! Number formatting, CSV tables and staged file writes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// `%g`-style formatting with `digits` significant digits.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A CSV table with one `#` metadata line.
pub struct Table {
    pub metadata: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn render(&self, digits: usize) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| fmt_sig(v, digits)))
                .expect("in-memory write");
        }
        let body =
            String::from_utf8(w.into_inner().expect("flush to memory")).expect("ascii output");
        format!("# {}\n{}", self.metadata, body)
    }
}

/// Files rendered in memory and written together. Content is written to a
/// temporary sibling and renamed into place; on any failure every file of
/// the batch is removed.
#[derive(Default)]
pub struct OutputBatch {
    files: Vec<(PathBuf, String)>,
}

impl OutputBatch {
    pub fn add(&mut self, path: PathBuf, content: String) {
        self.files.push((path, content));
    }

    pub fn paths(&self) -> Vec<&Path> {
        self.files.iter().map(|(p, _)| p.as_path()).collect()
    }

    pub fn commit(self) -> io::Result<Vec<PathBuf>> {
        let mut done: Vec<PathBuf> = Vec::new();
        for (path, content) in &self.files {
            let tmp = tmp_path(path);
            let res = fs::write(&tmp, content).and_then(|_| fs::rename(&tmp, path));
            if let Err(e) = res {
                let _ = fs::remove_file(&tmp);
                for p in &done {
                    let _ = fs::remove_file(p);
                }
                return Err(io::Error::new(e.kind(), format!("{}: {e}", path.display())));
            }
            done.push(path.clone());
        }
        Ok(done)
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}
