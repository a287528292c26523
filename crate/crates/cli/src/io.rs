//! CSV and JSON plumbing shared by the subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stablegp_core::{Dataset, Matrix};

use crate::error::{CliError, Result};

/// Inputs and optional targets read from a `x1,...,xd[,y]` table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub x: Matrix,
    pub y: Option<Vec<f64>>,
}

/// Reads a dataset with header `x1,...,xd,y`. Rejects NaN and infinities.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let table = load_table(path)?;
    let y = table.y.ok_or_else(|| CliError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "header has no `y` column".into(),
    })?;
    Ok(Dataset::new(table.x, y)?)
}

/// Like [`load_csv`] but the trailing `y` column is optional.
pub fn load_table(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let parse_err = |line: u64, message: String| CliError::Parse { path: path.to_path_buf(), line, message };

    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let header_line = header.position().map_or(1, |p| p.line());
    let has_y = header.iter().next_back() == Some("y");
    let d = header.len() - usize::from(has_y);
    if d == 0 {
        return Err(parse_err(header_line, "expected at least one input column `x1`".into()));
    }
    for (j, name) in header.iter().take(d).enumerate() {
        if name != format!("x{}", j + 1) {
            return Err(parse_err(header_line, format!("column {} is `{name}`, expected `x{}`", j + 1, j + 1)));
        }
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| parse_err(line, format!("field {} `{field}` is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("field {} is not finite", j + 1)));
            }
            if j < d {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let n = xs.len() / d;
    let x = Matrix::from_row_major(n, d, xs)?;
    Ok(Table { x, y: has_y.then_some(ys) })
}

/// Writes a dataset in the format read by [`load_csv`].
pub fn write_dataset_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<String> = (1..=data.dim()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (row, y) in data.x.row_iter().zip(&data.y) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(y.to_string());
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// What is needed to re-run the command that produced an output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    /// SHA-256 of the command's config serialized as JSON.
    pub config_hash: String,
    pub seed: String,
}

impl Provenance {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: impl ToString) -> Self {
        let bytes = serde_json::to_vec(config).expect("serializable config");
        Provenance { command: command.into(), config_hash: hex::encode(Sha256::digest(&bytes)), seed: seed.to_string() }
    }
}

/// Joins seeds as `1;2;3` for a provenance line.
pub fn seed_list(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

#[derive(Serialize)]
struct Sidecar<'a, C> {
    provenance: &'a Provenance,
    config: &'a C,
}

/// Path of the JSON config written next to an output table.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    out.with_file_name(name)
}

/// Writes a CSV table preceded by `# key: value` provenance lines, plus its
/// JSON config sidecar.
pub fn write_table<C: Serialize>(
    out: &Path,
    provenance: &Provenance,
    config: &C,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let file = File::create(out).map_err(|e| CliError::io(out, e))?;
    let mut buf = BufWriter::new(file);
    let io_err = |e| CliError::io(out, e);
    writeln!(buf, "# command: {}", provenance.command).map_err(io_err)?;
    writeln!(buf, "# config_hash: {}", provenance.config_hash).map_err(io_err)?;
    writeln!(buf, "# seed: {}", provenance.seed).map_err(io_err)?;
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(io_err)?;
    write_json(sidecar_path(out), &Sidecar { provenance, config })
}

/// Formats a float so that parsing it back gives the same value.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn single_row_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "one.csv", "x1,x2,y\n0.5,1.5,2.0\n");
        let data = load_csv(&p).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data.dim(), 2);
        assert_eq!(data.y, vec![2.0]);
    }

    #[test]
    fn dimension_from_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d3.csv", "x1,x2,x3,y\n1,2,3,4\n5,6,7,8\n");
        assert_eq!(load_csv(&p).unwrap().dim(), 3);
    }

    #[test]
    fn rejects_non_finite_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "bad.csv", "x1,y\n1,2\n3,NaN\n");
        let err = load_csv(&p).unwrap_err();
        match err {
            CliError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let p = write(&dir, "inf.csv", "x1,y\ninf,2\n");
        assert!(matches!(load_csv(&p), Err(CliError::Parse { line: 2, .. })));
    }

    #[test]
    fn rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "short.csv", "x1,x2,y\n1,2,3\n4,5\n");
        assert!(matches!(load_csv(&p), Err(CliError::Parse { line: 3, .. })));
        let p = write(&dir, "text.csv", "x1,y\n1,abc\n");
        assert!(matches!(load_csv(&p), Err(CliError::Parse { line: 2, .. })));
        let p = write(&dir, "hdr.csv", "a,y\n1,2\n");
        assert!(matches!(load_csv(&p), Err(CliError::Parse { line: 1, .. })));
    }

    #[test]
    fn missing_targets_optional_for_tables() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "q.csv", "x1,x2\n1,2\n");
        let t = load_table(&p).unwrap();
        assert!(t.y.is_none());
        assert!(load_csv(&p).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = Matrix::from_rows(&[[0.1, -2.5e-7], [1.0 / 3.0, 4.0]]).unwrap();
        let data = Dataset::new(x, vec![std::f64::consts::PI, -0.0]).unwrap();
        let p = dir.path().join("rt.csv");
        write_dataset_csv(&p, &data).unwrap();
        assert_eq!(load_csv(&p).unwrap(), data);
    }

    #[test]
    fn provenance_hash_tracks_config() {
        let a = Provenance::new("x", &[1, 2], 0);
        let b = Provenance::new("x", &[1, 3], 0);
        assert_eq!(a.config_hash.len(), 64);
        assert_ne!(a.config_hash, b.config_hash);
        assert_eq!(a, Provenance::new("x", &[1, 2], 0));
    }
}
