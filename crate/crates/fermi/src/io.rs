//! CSV/JSON output with atomic file replacement.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.16e}");
    // keep plain notation for moderate magnitudes
    let a = x.abs();
    if (1e-4..1e15).contains(&a) {
        let digits = 16 - a.log10().floor() as i32;
        format!("{:.*}", digits.max(0) as usize, x)
    } else {
        s
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let tmp: PathBuf = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// In-memory CSV table with `#` header comments.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    header: Vec<String>,
    columns: Vec<String>,
    rows: Vec<String>,
}

pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::F(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Cell {
        Cell::I(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Cell {
        Cell::I(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Cell {
        Cell::S(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Cell {
        Cell::S(x)
    }
}

impl Csv {
    pub fn new(columns: &[&str]) -> Csv {
        Csv { header: Vec::new(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn comment(&mut self, text: &str) {
        for line in text.lines() {
            self.header.push(line.to_string());
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        let s: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::F(x) => fmt_f64(x),
                Cell::I(i) => i.to_string(),
                Cell::S(s) => s,
            })
            .collect();
        self.rows.push(s.join(","));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for h in &self.header {
            out.push_str("# ");
            out.push_str(h);
            out.push('\n');
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_digits() {
        for &x in &[0.1, 1.0 / 3.0, 12345.678901234567, 2.5e-9, -7.0e20, 0.081093021621632885] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn csv_render() {
        let mut c = Csv::new(&["a", "b"]);
        c.comment("cfg {\"x\":1}");
        c.row(vec![1.5.into(), "u".into()]);
        assert_eq!(c.render(), "# cfg {\"x\":1}\na,b\n1.5000000000000000,u\n");
    }
}
