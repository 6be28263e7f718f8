//! Channel files: CSV time series with a `t` column followed by named
//! channels such as `d1`, `a4`, `p2` or `ag1`.
//!
//! Values are written with 17 significant digits so a write/read round trip
//! is exact. Writes go to a temporary file in the target directory which is
//! then renamed over the destination.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance on the sample spacing, as a fraction of `dt`.
const GRID_TOL: f64 = 1e-9;

/// Channel kinds allowed in a column name.
pub const CHANNEL_KINDS: [&str; 5] = ["ag", "d", "v", "a", "p"];

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFile {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    /// `T x names.len()`.
    pub values: DMatrix<f64>,
}

impl ChannelFile {
    pub fn new(names: Vec<String>, times: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != names.len() || values.nrows() != times.len() {
            return Err(Error::Dimension(format!(
                "channel file has {} names and {} times but a {}x{} value matrix",
                names.len(),
                times.len(),
                values.nrows(),
                values.ncols()
            )));
        }
        check_names(&names)?;
        check_grid(&times)?;
        Ok(Self { names, times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Columns in the requested order, looked up by name.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.len(), names.len());
        for (j, name) in names.iter().enumerate() {
            let name = name.as_ref();
            let src = self
                .column_index(name)
                .ok_or_else(|| Error::ChannelFile(format!("missing column `{name}`")))?;
            out.set_column(j, &self.values.column(src));
        }
        Ok(out)
    }

    /// Sample spacing, or `None` for fewer than two rows.
    pub fn dt(&self) -> Option<f64> {
        (self.times.len() >= 2).then(|| self.times[1] - self.times[0])
    }
}

/// Splits `ag1` into `("ag", 1)`. Floors are 1-based.
pub fn parse_channel_name(name: &str) -> Option<(&'static str, usize)> {
    for kind in CHANNEL_KINDS {
        if let Some(rest) = name.strip_prefix(kind) {
            if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
                continue;
            }
            return match rest.parse::<usize>() {
                Ok(floor) if floor >= 1 => Some((kind, floor)),
                _ => None,
            };
        }
    }
    None
}

fn check_names(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if parse_channel_name(name).is_none() {
            return Err(Error::ChannelFile(format!("bad column name `{name}`")));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::ChannelFile(format!("duplicate column `{name}`")));
        }
    }
    Ok(())
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::ChannelFile("non-finite time stamp".into()));
    }
    if times.len() < 2 {
        return Ok(());
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::ChannelFile("time column must be strictly increasing".into()));
    }
    for (k, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if (step - dt).abs() > GRID_TOL * dt {
            return Err(Error::ChannelFile(format!(
                "non-uniform time grid at row {}: step {step}, expected {dt}",
                k + 1
            )));
        }
    }
    Ok(())
}

pub fn read_channel_file(path: impl AsRef<Path>) -> Result<ChannelFile> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if headers.first().map(String::as_str) != Some("t") {
        return Err(Error::ChannelFile(format!(
            "{}: first column must be `t`",
            path.display()
        )));
    }
    let names = headers[1..].to_vec();
    let mut times = Vec::new();
    let mut flat = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::ChannelFile(format!(
                "{}: row {} has {} cells, header has {}",
                path.display(),
                row + 1,
                record.len(),
                headers.len()
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::ChannelFile(format!(
                    "{}: non-numeric cell `{cell}` at row {}, column `{}`",
                    path.display(),
                    row + 1,
                    headers[col]
                ))
            })?;
            if col == 0 {
                times.push(v);
            } else {
                flat.push(v);
            }
        }
    }
    let values = DMatrix::from_row_slice(times.len(), names.len(), &flat);
    ChannelFile::new(names, times, values)
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_channel_file(path: impl AsRef<Path>, file: &ChannelFile) -> Result<()> {
    let mut out = String::new();
    out.push('t');
    for name in &file.names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (k, t) in file.times.iter().enumerate() {
        out.push_str(&format_value(*t));
        for v in file.values.row(k).iter() {
            out.push(',');
            out.push_str(&format_value(*v));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_names() {
        assert_eq!(parse_channel_name("ag1"), Some(("ag", 1)));
        assert_eq!(parse_channel_name("a12"), Some(("a", 12)));
        assert_eq!(parse_channel_name("p3"), Some(("p", 3)));
        assert_eq!(parse_channel_name("d0"), None);
        assert_eq!(parse_channel_name("x1"), None);
        assert_eq!(parse_channel_name("a"), None);
        assert_eq!(parse_channel_name("a1b"), None);
    }

    #[test]
    fn rejects_duplicates_and_ragged_grids() {
        let v = DMatrix::zeros(3, 2);
        let names = vec!["d1".to_string(), "d1".to_string()];
        assert!(ChannelFile::new(names, vec![0.0, 0.1, 0.2], v.clone()).is_err());
        let names = vec!["d1".to_string(), "a1".to_string()];
        assert!(ChannelFile::new(names.clone(), vec![0.0, 0.1, 0.25], v.clone()).is_err());
        assert!(ChannelFile::new(names.clone(), vec![0.0, 0.0, 0.0], v.clone()).is_err());
        assert!(ChannelFile::new(names, vec![0.0, 0.1, 0.2], v).is_ok());
    }

    #[test]
    fn format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(format_value(v).parse::<f64>().unwrap(), v);
        }
    }
}
