//! CSV interchange: every file starts with a version comment, then a header row.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, CliResult};

pub const VERSION_LINE: &str = concat!("# morphspan ", env!("CARGO_PKG_VERSION"));

/// A fully loaded CSV file with named columns.
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(bytes.as_slice());
        let headers = reader
            .headers()
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_owned)
            .collect();
        let rows = reader
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        Ok(Table { path: path.to_path_buf(), headers, rows })
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    pub fn column(&self, name: &str) -> CliResult<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::validation(format!("{}: missing column `{name}`", self.path.display())))
    }

    /// Parses cell `col` of data row `row` (0-based), naming the column on failure.
    pub fn parse<T: FromStr>(&self, row: usize, col: usize) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.rows[row].get(col).unwrap_or("");
        raw.parse().map_err(|e| {
            CliError::validation(format!(
                "{}: row {}, column `{}`: cannot parse {raw:?}: {e}",
                self.path.display(),
                row + 1,
                self.headers[col]
            ))
        })
    }

    /// Like [`Table::parse`] but an empty cell is `None`.
    pub fn parse_opt<T: FromStr>(&self, row: usize, col: usize) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.get(row, col).is_empty() {
            Ok(None)
        } else {
            self.parse(row, col).map(Some)
        }
    }

    pub fn get(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).unwrap_or("")
    }
}

/// Accumulates rows in memory and writes the file in one go.
pub struct CsvOut {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvOut {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(VERSION_LINE.as_bytes());
        buf.push(b'\n');
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf);
        writer.write_record(header.iter().map(|h| h.as_ref())).expect("in-memory write");
        CsvOut { writer }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        self.writer.write_record(fields.iter().map(|f| f.as_ref())).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }

    pub fn save(self, path: impl AsRef<Path>) -> CliResult<()> {
        write_file(path, &self.into_bytes())
    }
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> CliResult<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Resolves `path` against the directory holding `base`, leaving absolute paths alone.
pub fn relative_to(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(p)
    }
}
