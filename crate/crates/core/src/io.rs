//! Delimited-text matrix, label and graph files.
//!
//! Files are UTF-8, comma separated, one matrix row per line. Lines starting
//! with `#` are headers or comments. Graph files begin with
//! `# lrs-graph v1 n=<n>`; other matrices (such as a learned projection)
//! begin with `# lrs-matrix v1 rows=<r> cols=<c>`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::AffinityGraph;
use crate::proximal::Matrix;

/// How the rows of a data file map onto samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    /// Each line is a feature; columns are samples. Loaded as-is.
    #[default]
    RowsAreFeatures,
    /// Each line is a sample. Transposed on load.
    RowsAreSamples,
}

struct Table {
    rows: Vec<Vec<f64>>,
    headers: Vec<String>,
}

fn parse_table(text: &str, path: &Path) -> Result<Table> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut headers = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            headers.push(h.trim().to_string());
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let row = line
            .split(',')
            .map(|field| {
                let field = field.trim();
                let v: f64 = field
                    .parse()
                    .map_err(|_| err(format!("cannot parse {field:?} as a number")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(err(format!("non-finite value {field:?}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(err(format!(
                    "ragged row: {} fields, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    Ok(Table { rows, headers })
}

fn table_to_matrix(table: &Table) -> Matrix {
    let r = table.rows.len();
    let c = table.rows.first().map_or(0, Vec::len);
    Matrix::from_fn(r, c, |i, j| table.rows[i][j])
}

/// Parses matrix text; `path` is only used in error messages.
pub fn parse_matrix(text: &str, path: &Path, orientation: Orientation) -> Result<Matrix> {
    let table = parse_table(text, path)?;
    if table.rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no data rows".into(),
        });
    }
    let m = table_to_matrix(&table);
    Ok(match orientation {
        Orientation::RowsAreFeatures => m,
        Orientation::RowsAreSamples => m.transpose(),
    })
}

pub fn load_matrix(path: &Path, orientation: Orientation) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    parse_matrix(&text, path, orientation)
}

/// One nonnegative integer label per line.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    parse_labels(&text, path)
}

pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: usize = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("cannot parse {line:?} as a class label"),
        })?;
        labels.push(v);
    }
    Ok(labels)
}

/// Renders `m` with the given header lines (without the leading `#`).
pub fn format_matrix(m: &Matrix, headers: &[String]) -> String {
    let mut out = String::new();
    for h in headers {
        let _ = writeln!(out, "# {h}");
    }
    for row in m.row_iter() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn save_matrix(path: &Path, m: &Matrix, headers: &[String]) -> Result<()> {
    fs::write(path, format_matrix(m, headers))?;
    Ok(())
}

pub fn graph_header(n: usize) -> String {
    format!("lrs-graph v1 n={n}")
}

pub fn matrix_header(rows: usize, cols: usize) -> String {
    format!("lrs-matrix v1 rows={rows} cols={cols}")
}

/// Writes the graph header first, then any extra comment lines, then `W`.
pub fn save_graph(path: &Path, g: &AffinityGraph, extra: &[String]) -> Result<()> {
    let mut headers = vec![graph_header(g.node_count())];
    headers.extend_from_slice(extra);
    save_matrix(path, &g.w, &headers)
}

pub fn parse_graph(text: &str, path: &Path) -> Result<AffinityGraph> {
    let table = parse_table(text, path)?;
    let header_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message,
    };
    let first = text.lines().next().unwrap_or_default().trim();
    let n: usize = first
        .strip_prefix("# lrs-graph v1 n=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| {
            header_err(format!(
                "expected '# {}' header",
                graph_header(0).replace('0', "<n>")
            ))
        })?;
    let w = table_to_matrix(&table);
    if w.shape() != (n, n) {
        return Err(header_err(format!(
            "header says n={n} but body is {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    AffinityGraph::new(w)
}

pub fn load_graph(path: &Path) -> Result<AffinityGraph> {
    let text = fs::read_to_string(path)?;
    parse_graph(&text, path)
}

pub fn save_projection(path: &Path, p: &Matrix, extra: &[String]) -> Result<()> {
    let mut headers = vec![matrix_header(p.nrows(), p.ncols())];
    headers.extend_from_slice(extra);
    save_matrix(path, p, &headers)
}

pub fn load_projection(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let table = parse_table(&text, path)?;
    let m = table_to_matrix(&table);
    let dims = table.headers.iter().find_map(|h| {
        let rest = h.strip_prefix("lrs-matrix v1 rows=")?;
        let (r, c) = rest.split_once(" cols=")?;
        Some((
            r.trim().parse::<usize>().ok()?,
            c.trim().parse::<usize>().ok()?,
        ))
    });
    match dims {
        Some(shape) if shape == m.shape() => Ok(m),
        Some((r, c)) => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "header says {r}x{c} but body is {}x{}",
                m.nrows(),
                m.ncols()
            ),
        }),
        None => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "missing '# lrs-matrix v1 rows=<r> cols=<c>' header".into(),
        }),
    }
}
