//! CSV emission and atomic file writes.
//!
//! Layout: `# metadata: <reproduction line>`, a header row, then one row per
//! sweep point with every number at 17 significant digits so that parsing
//! the file gives back the exact doubles.

use std::io::Write;
use std::path::{Path, PathBuf};

use lzs_core::experiments::ExperimentResult;

use crate::config::RunConfig;
use crate::error::CliError;

pub const METADATA_PREFIX: &str = "# metadata: ";

/// Shortest form that is still exact: 17 significant digits.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn render_csv(result: &ExperimentResult, reproduction: &str) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![result.x_label.as_str()];
    header.extend(result.columns().iter().map(String::as_str));
    w.write_record(&header).expect("in-memory write");
    for (x, vals) in result.rows() {
        let cells = std::iter::once(x).chain(vals).map(|v| format_number(*v));
        w.write_record(cells).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii");
    format!("{METADATA_PREFIX}{reproduction}\n{body}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub metadata: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Csv {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn parse_csv(text: &str) -> Result<Csv, String> {
    let (first, body) = text.split_once('\n').ok_or("missing header")?;
    let metadata = first
        .strip_prefix(METADATA_PREFIX)
        .ok_or("missing metadata line")?
        .to_string();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(String::from)
        .collect();
    let rows = reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| format!("row {}: {e}", i + 1))?;
            rec.iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|_| format!("row {}: bad number `{c}`", i + 1))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Csv {
        metadata,
        header,
        rows,
    })
}

/// `<csv path>.meta`
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// A runnable config reproducing the CSV, followed by the run's provenance
/// and summary as comments.
pub fn render_sidecar(config: &RunConfig, result: &ExperimentResult) -> String {
    let mut out = format!(
        "# lzs-sim {} — rerun this file to regenerate the rows bit for bit\n",
        env!("CARGO_PKG_VERSION")
    );
    out.push_str(&config.canonical_text());
    out.push('\n');
    for (k, v) in &result.metadata {
        out.push_str(&format!("# metadata.{k} = {v}\n"));
    }
    for (k, v) in &result.summary {
        out.push_str(&format!("# summary.{k} = {}\n", format_number(*v)));
    }
    out
}

/// Write through a temporary file in the destination directory and rename
/// it into place, so a failed run never leaves a truncated file behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn numbers_carry_seventeen_significant_digits() {
        assert_eq!(format_number(0.1), "1.0000000000000001e-1");
        assert_eq!(format_number(-2.5), "-2.5000000000000000e0");
        assert_eq!(format_number(0.0), "0.0000000000000000e0");
    }

    #[test]
    fn renders_and_parses_a_result() {
        let mut r = ExperimentResult::new("demo", "x", &["a", "b"]);
        r.push_row(0.0, vec![1.0 / 3.0, f64::NAN]).unwrap();
        r.push_row(1.5, vec![2.0e-300, -7.0]).unwrap();
        let text = render_csv(&r, "experiment.kind=fid; experiment.seed=1");
        let csv = parse_csv(&text).unwrap();
        assert_eq!(csv.metadata, "experiment.kind=fid; experiment.seed=1");
        assert_eq!(csv.header, ["x", "a", "b"]);
        assert_eq!(csv.column("a").unwrap(), [1.0 / 3.0, 2.0e-300]);
        assert!(csv.rows[0][2].is_nan());
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(parse_csv("x,a\n1,2\n").is_err());
        assert!(parse_csv("# metadata: m\nx,a\n1\n").is_err());
        assert!(parse_csv("# metadata: m\nx,a\n1,zz\n").is_err());
    }

    #[test]
    fn atomic_write_creates_directories_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/out.csv");
        write_atomic(&path, "one").unwrap();
        write_atomic(&path, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(
            std::fs::read_dir(path.parent().unwrap()).unwrap().count(),
            1
        );
    }

    proptest! {
        #[test]
        fn every_double_round_trips(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back: f64 = format_number(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
