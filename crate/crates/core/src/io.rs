//! File formats. Node numbers are 1-based in every file and 0-based in
//! memory.
//!
//! * Matrices and datasets: CSV, one row per snapshot (or node), an
//!   optional header row detected by a non-numeric first row.
//! * Graphs: either a dense P×P CSV (row `i` = incoming weights of node
//!   `i`) or an edge list with header `i,j,w`. Edge lists pin the node
//!   count with a trailing `P,P,0` record when node `P` has no edges.
//! * Splits: JSON `{"observed": [...], "targets": [...]}`.
//! * Coordinates: CSV `name,lat,lon`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is bit-exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::{FeatureVectors, GeoCoordinates};
use crate::error::{Error, Result};
use crate::graph::{Dataset, NodeSplit, WeightedGraph};

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    reader
        .records()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .filter(|r| !matches!(r, Ok(rec) if rec.iter().all(str::is_empty)))
        .collect()
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::parse(path, format!("{other:?}")),
    }
}

fn is_numeric_row(rec: &csv::StringRecord) -> bool {
    rec.iter().all(|f| f.parse::<f64>().is_ok())
}

fn parse_row(path: &Path, line: usize, rec: &csv::StringRecord) -> Result<Vec<f64>> {
    rec.iter()
        .enumerate()
        .map(|(k, f)| {
            f.parse::<f64>().map_err(|_| {
                Error::parse(path, format!("row {line}, column {}: `{f}` is not a number", k + 1))
            })
        })
        .collect()
}

/// A numeric CSV table with an optional header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub values: DMatrix<f64>,
}

pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let mut iter = records.iter().enumerate().peekable();
    let header = match iter.peek() {
        Some((_, first)) if !is_numeric_row(first) => {
            let h = first.iter().map(str::to_owned).collect();
            iter.next();
            Some(h)
        }
        _ => None,
    };
    let mut rows = Vec::new();
    let mut width = None;
    for (idx, rec) in iter {
        let row = parse_row(path, idx + 1, rec)?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(
                    path,
                    format!("row {} has {} columns, expected {w}", idx + 1, row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    let ncols = width.or(header.as_ref().map(Vec::len)).unwrap_or(0);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Table {
        header,
        values: DMatrix::from_row_slice(rows.len(), ncols, &flat),
    })
}

pub fn write_table(path: impl AsRef<Path>, header: Option<&[String]>, values: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    if let Some(h) = header {
        writeln!(out, "{}", h.join(",")).map_err(io)?;
    }
    for row in values.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path)?;
    if table.values.nrows() == 0 {
        return Err(Error::parse(path, "dataset has no rows"));
    }
    Dataset::new(table.values).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let header: Vec<String> = (1..=data.num_nodes()).map(|j| format!("x{j}")).collect();
    write_table(path, Some(&header), data.samples())
}

/// Path of the edge-list companion written next to a dense graph file:
/// `g.csv` → `g.edges.csv`.
pub fn edge_list_path(dense: &Path) -> PathBuf {
    let stem = dense.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    dense.with_file_name(format!("{stem}.edges.csv"))
}

pub fn write_graph_dense(path: impl AsRef<Path>, graph: &WeightedGraph) -> Result<()> {
    write_table(path, None, graph.weights())
}

pub fn write_graph_edges(path: impl AsRef<Path>, graph: &WeightedGraph) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "i,j,w").map_err(io)?;
    let p = graph.num_nodes();
    let mut last_node_seen = false;
    for i in 0..p {
        for j in 0..p {
            let w = graph.get(i, j);
            if w != 0.0 {
                writeln!(out, "{},{},{w}", i + 1, j + 1).map_err(io)?;
                last_node_seen |= i + 1 == p || j + 1 == p;
            }
        }
    }
    if !last_node_seen {
        writeln!(out, "{p},{p},0").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Writes the dense matrix to `path` and the edge list to
/// [`edge_list_path`]`(path)`.
pub fn write_graph(path: impl AsRef<Path>, graph: &WeightedGraph) -> Result<()> {
    let path = path.as_ref();
    write_graph_dense(path, graph)?;
    write_graph_edges(edge_list_path(path), graph)
}

/// Reads a dense or edge-list graph file.
///
/// Edge lists are recognised by their `i,j,w` header, or, without a
/// header, by three columns and a row count other than three.
pub fn read_graph(path: impl AsRef<Path>) -> Result<WeightedGraph> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let (rows, cols) = table.values.shape();
    let edge_list = match &table.header {
        Some(h) => {
            if h.len() != 3 {
                return Err(Error::parse(path, "unexpected header in graph file"));
            }
            true
        }
        None => cols == 3 && rows != 3,
    };
    let weights = if edge_list {
        edges_to_matrix(path, &table.values)?
    } else {
        if rows != cols {
            return Err(Error::parse(path, format!("dense graph must be square, got {rows}x{cols}")));
        }
        table.values
    };
    WeightedGraph::new(weights).map_err(|e| Error::parse(path, e.to_string()))
}

fn edges_to_matrix(path: &Path, edges: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut triples = Vec::with_capacity(edges.nrows());
    let mut p = 0;
    for (r, row) in edges.row_iter().enumerate() {
        let index = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize - 1)
            } else {
                Err(Error::parse(path, format!("edge {}: `{v}` is not a 1-based node number", r + 1)))
            }
        };
        let (i, j) = (index(row[0])?, index(row[1])?);
        p = p.max(i + 1).max(j + 1);
        triples.push((i, j, row[2]));
    }
    let mut m = DMatrix::zeros(p, p);
    for (i, j, w) in triples {
        m[(i, j)] = w;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    pub observed: Vec<usize>,
    pub targets: Vec<usize>,
}

impl SplitFile {
    /// Converts 1-based file indices into a validated split.
    pub fn into_split(self, p: usize) -> Result<NodeSplit> {
        let to_zero = |v: Vec<usize>| -> Result<Vec<usize>> {
            v.into_iter()
                .map(|k| {
                    k.checked_sub(1)
                        .ok_or_else(|| Error::InvalidSplit("node numbers start at 1".into()))
                })
                .collect()
        };
        NodeSplit::new(to_zero(self.observed)?, to_zero(self.targets)?, p)
    }

    pub fn from_split(split: &NodeSplit) -> Self {
        Self {
            observed: split.observed().iter().map(|k| k + 1).collect(),
            targets: split.targets().iter().map(|k| k + 1).collect(),
        }
    }
}

pub fn read_split_file(path: impl AsRef<Path>) -> Result<SplitFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn read_split(path: impl AsRef<Path>, p: usize) -> Result<NodeSplit> {
    let path = path.as_ref();
    read_split_file(path)?
        .into_split(p)
        .map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_split(path: impl AsRef<Path>, split: &NodeSplit) -> Result<()> {
    write_json(path, &SplitFile::from_split(split))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::parse(path, e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

/// Reads `name,lat,lon` rows; a header row is optional.
pub fn read_coordinates(path: impl AsRef<Path>) -> Result<GeoCoordinates> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let mut names = Vec::new();
    let mut lat_lon = Vec::new();
    for (idx, rec) in records.iter().enumerate() {
        if rec.len() != 3 {
            return Err(Error::parse(path, format!("row {}: expected name,lat,lon", idx + 1)));
        }
        let (lat, lon) = (rec[1].parse::<f64>(), rec[2].parse::<f64>());
        match (lat, lon) {
            (Ok(lat), Ok(lon)) => {
                names.push(rec[0].to_owned());
                lat_lon.push((lat, lon));
            }
            _ if idx == 0 => continue,
            _ => return Err(Error::parse(path, format!("row {}: latitude/longitude must be numbers", idx + 1))),
        }
    }
    GeoCoordinates::new(names, lat_lon).map_err(|e| Error::parse(path, e.to_string()))
}

/// Reads one feature vector per row.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureVectors> {
    let path = path.as_ref();
    let table = read_table(path)?;
    FeatureVectors::new(table.values).map_err(|e| Error::parse(path, e.to_string()))
}
