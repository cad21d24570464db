//! Plain-text interchange: expression matrices, coordinates, distance
//! matrices, label files, and key=value metadata.
//!
//! All files are UTF-8 delimited text. Floats are written in Rust's
//! shortest round-trip form, so writer/reader pairs are lossless. Two
//! matrix encodings are supported:
//!
//! * dense: header row of gene ids (first cell names the spot column),
//!   then one row per spot starting with the spot id;
//! * sparse triplet: header `spot gene value`, one nonzero entry per line,
//!   with the full id universes in sidecar files `<path>.spots` and
//!   `<path>.genes` (one id per line).

use std::collections::HashMap;
use std::fs;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Spots-by-genes matrix of non-negative expression values.
#[derive(Clone, Debug)]
pub struct ExpressionMatrix {
    /// n_spots x n_genes.
    pub values: Array2<f64>,
    pub spot_ids: Vec<String>,
    pub gene_ids: Vec<String>,
}

impl ExpressionMatrix {
    pub fn new(values: Array2<f64>, spot_ids: Vec<String>, gene_ids: Vec<String>) -> Result<Self> {
        let m = ExpressionMatrix {
            values,
            spot_ids,
            gene_ids,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n_spots(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.spot_ids.len() != self.n_spots() {
            return Err(Error::Data(format!(
                "{} spot ids for {} rows",
                self.spot_ids.len(),
                self.n_spots()
            )));
        }
        if self.gene_ids.len() != self.n_genes() {
            return Err(Error::Data(format!(
                "{} gene ids for {} columns",
                self.gene_ids.len(),
                self.n_genes()
            )));
        }
        check_unique(&self.spot_ids, "spot")?;
        check_unique(&self.gene_ids, "gene")?;
        for ((i, j), &v) in self.values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value at (row {i}, column {j})")));
            }
            if v < 0.0 {
                return Err(Error::Data(format!(
                    "negative value {v} at (row {i}, column {j})"
                )));
            }
        }
        Ok(())
    }

    /// Drop all-zero genes; returns the filtered matrix and how many genes
    /// were removed.
    pub fn drop_zero_genes(&self) -> (ExpressionMatrix, usize) {
        let keep: Vec<usize> = (0..self.n_genes())
            .filter(|&j| self.values.column(j).iter().any(|&v| v != 0.0))
            .collect();
        let dropped = self.n_genes() - keep.len();
        if dropped == 0 {
            return (self.clone(), 0);
        }
        let mut values = Array2::zeros((self.n_spots(), keep.len()));
        for (new_j, &j) in keep.iter().enumerate() {
            values.column_mut(new_j).assign(&self.values.column(j));
        }
        let gene_ids = keep.iter().map(|&j| self.gene_ids[j].clone()).collect();
        (
            ExpressionMatrix {
                values,
                spot_ids: self.spot_ids.clone(),
                gene_ids,
            },
            dropped,
        )
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashMap::new();
    for (i, id) in ids.iter().enumerate() {
        if let Some(prev) = seen.insert(id, i) {
            return Err(Error::Data(format!(
                "duplicate {what} id '{id}' at positions {prev} and {i}"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    DenseDelimited,
    SparseTriplet,
}

impl MatrixFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(MatrixFormat::DenseDelimited),
            "sparse" => Ok(MatrixFormat::SparseTriplet),
            other => Err(Error::Config(format!(
                "unknown matrix format '{other}' (expected dense or sparse)"
            ))),
        }
    }
}

fn detect_delimiter(line: &str) -> char {
    if line.contains('\t') {
        '\t'
    } else if line.contains(',') {
        ','
    } else {
        ' '
    }
}

fn split_line(line: &str, delim: char) -> Vec<&str> {
    if delim == ' ' {
        line.split_whitespace().collect()
    } else {
        line.split(delim).map(str::trim).collect()
    }
}

fn parse_value(field: &str, line_no: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::Data(format!("line {line_no}: cannot parse '{field}' as a number"))
    })
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

/// Load an expression matrix in the given format.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<ExpressionMatrix> {
    match format {
        MatrixFormat::DenseDelimited => load_matrix_dense(path),
        MatrixFormat::SparseTriplet => load_matrix_sparse(path),
    }
}

fn load_matrix_dense(path: &Path) -> Result<ExpressionMatrix> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let delim = detect_delimiter(header);
    let head = split_line(header, delim);
    if head.len() < 2 {
        return Err(Error::Data("line 1: header needs a spot column and at least one gene".into()));
    }
    let gene_ids: Vec<String> = head[1..].iter().map(|s| s.to_string()).collect();
    let p = gene_ids.len();

    let mut spot_ids = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields = split_line(line, delim);
        if fields.len() != p + 1 {
            return Err(Error::Data(format!(
                "line {line_no}: expected {} fields, found {}",
                p + 1,
                fields.len()
            )));
        }
        spot_ids.push(fields[0].to_string());
        for f in &fields[1..] {
            rows.push(parse_value(f, line_no)?);
        }
    }
    let n = spot_ids.len();
    let values = Array2::from_shape_vec((n, p), rows)
        .map_err(|e| Error::Data(format!("matrix shape error: {e}")))?;
    ExpressionMatrix::new(values, spot_ids, gene_ids)
}

fn sidecar(path: &Path, ext: &str) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(ext);
    std::path::PathBuf::from(s)
}

fn load_id_list(path: &Path) -> Result<Vec<String>> {
    Ok(read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn load_matrix_sparse(path: &Path) -> Result<ExpressionMatrix> {
    let spot_ids = load_id_list(&sidecar(path, ".spots"))?;
    let gene_ids = load_id_list(&sidecar(path, ".genes"))?;
    let spot_index: HashMap<&str, usize> =
        spot_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let gene_index: HashMap<&str, usize> =
        gene_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let text = read_to_string(path)?;
    let mut values = Array2::zeros((spot_ids.len(), gene_ids.len()));
    let mut filled = std::collections::HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if idx == 0 {
            // header: spot gene value
            continue;
        }
        let delim = detect_delimiter(line);
        let fields = split_line(line, delim);
        if fields.len() != 3 {
            return Err(Error::Data(format!(
                "line {line_no}: expected 3 fields (spot gene value), found {}",
                fields.len()
            )));
        }
        let i = *spot_index.get(fields[0]).ok_or_else(|| {
            Error::Data(format!("line {line_no}: unknown spot id '{}'", fields[0]))
        })?;
        let j = *gene_index.get(fields[1]).ok_or_else(|| {
            Error::Data(format!("line {line_no}: unknown gene id '{}'", fields[1]))
        })?;
        if !filled.insert((i, j)) {
            return Err(Error::Data(format!(
                "line {line_no}: duplicate entry for ({}, {})",
                fields[0], fields[1]
            )));
        }
        values[(i, j)] = parse_value(fields[2], line_no)?;
    }
    ExpressionMatrix::new(values, spot_ids, gene_ids)
}

/// Write an expression matrix in the given format (tab-delimited).
pub fn save_matrix(m: &ExpressionMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::DenseDelimited => save_matrix_dense(m, path),
        MatrixFormat::SparseTriplet => save_matrix_sparse(m, path),
    }
}

fn save_matrix_dense(m: &ExpressionMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("spot_id");
    for g in &m.gene_ids {
        let _ = write!(out, "\t{g}");
    }
    out.push('\n');
    for i in 0..m.n_spots() {
        out.push_str(&m.spot_ids[i]);
        for j in 0..m.n_genes() {
            let _ = write!(out, "\t{}", m.values[(i, j)]);
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn save_matrix_sparse(m: &ExpressionMatrix, path: &Path) -> Result<()> {
    let mut out = String::from("spot\tgene\tvalue\n");
    for i in 0..m.n_spots() {
        for j in 0..m.n_genes() {
            let v = m.values[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{}\t{}\t{}", m.spot_ids[i], m.gene_ids[j], v);
            }
        }
    }
    fs::write(path, out)?;
    fs::write(sidecar(path, ".spots"), m.spot_ids.join("\n") + "\n")?;
    fs::write(sidecar(path, ".genes"), m.gene_ids.join("\n") + "\n")?;
    Ok(())
}

/// Load spot coordinates: one row per spot, 2 or 3 numeric columns,
/// optional header line.
pub fn load_coordinates(path: &Path) -> Result<Array2<f64>> {
    let text = read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let delim = detect_delimiter(line);
        let fields = split_line(line, delim);
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(nums) => {
                if nums.len() != 2 && nums.len() != 3 {
                    return Err(Error::Data(format!(
                        "line {line_no}: coordinates need 2 or 3 columns, found {}",
                        nums.len()
                    )));
                }
                if let Some(prev) = rows.first() {
                    if prev.len() != nums.len() {
                        return Err(Error::Data(format!(
                            "line {line_no}: inconsistent column count"
                        )));
                    }
                }
                rows.push(nums);
            }
            Err(_) if idx == 0 => continue, // header
            Err(_) => {
                return Err(Error::Data(format!("line {line_no}: cannot parse coordinates")));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no coordinate rows", path.display())));
    }
    let d = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let n = flat.len() / d;
    Array2::from_shape_vec((n, d), flat).map_err(|e| Error::Data(format!("coordinate shape: {e}")))
}

pub fn save_coordinates(coords: &Array2<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..coords.nrows() {
        for j in 0..coords.ncols() {
            if j > 0 {
                out.push('\t');
            }
            let _ = write!(out, "{}", coords[(i, j)]);
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Load a pairwise distance matrix: either a dense square table, or a
/// triplet file whose header is `i j d` with zero-based spot indices. Both
/// forms are symmetrized on load (dense by averaging, triplets by
/// mirroring).
pub fn load_distance_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = read_to_string(path)?;
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let head = split_line(first, detect_delimiter(first));
    let is_triplet = head.len() == 3 && head[0] == "i" && head[1] == "j" && head[2] == "d";
    if is_triplet {
        load_distance_triplet(&text)
    } else {
        load_distance_dense(&text)
    }
}

fn load_distance_dense(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let delim = detect_delimiter(line);
        let fields = split_line(line, delim);
        let nums: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        let nums =
            nums.map_err(|_| Error::Data(format!("line {}: cannot parse distances", idx + 1)))?;
        rows.push(nums);
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Data(format!("distance matrix is not square ({n} rows)")));
    }
    let mut m = Array2::zeros((n, n));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    // symmetrize by averaging
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

fn load_distance_triplet(text: &str) -> Result<Array2<f64>> {
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_idx = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || idx == 0 {
            continue;
        }
        let line_no = idx + 1;
        let delim = detect_delimiter(line);
        let fields = split_line(line, delim);
        if fields.len() != 3 {
            return Err(Error::Data(format!("line {line_no}: expected 3 fields (i j d)")));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| Error::Data(format!("line {line_no}: bad index '{}'", fields[0])))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| Error::Data(format!("line {line_no}: bad index '{}'", fields[1])))?;
        let d = parse_value(fields[2], line_no)?;
        max_idx = max_idx.max(i).max(j);
        entries.push((i, j, d));
    }
    let n = max_idx + 1;
    let mut m = Array2::zeros((n, n));
    for (i, j, d) in entries {
        m[(i, j)] = d;
        m[(j, i)] = d;
    }
    Ok(m)
}

/// Load a two-column labels file (spot_id, cluster), optional header.
pub fn load_labels(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let text = read_to_string(path)?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let delim = detect_delimiter(line);
        let fields = split_line(line, delim);
        if fields.len() != 2 {
            return Err(Error::Data(format!(
                "line {}: expected 2 fields (spot_id cluster), found {}",
                idx + 1,
                fields.len()
            )));
        }
        match fields[1].parse::<usize>() {
            Ok(l) => {
                ids.push(fields[0].to_string());
                labels.push(l);
            }
            Err(_) if idx == 0 => continue, // header
            Err(_) => {
                return Err(Error::Data(format!(
                    "line {}: cannot parse cluster '{}'",
                    idx + 1,
                    fields[1]
                )));
            }
        }
    }
    if ids.is_empty() {
        return Err(Error::Data(format!("{}: no label rows", path.display())));
    }
    Ok((ids, labels))
}

pub fn save_labels(spot_ids: &[String], labels: &[usize], path: &Path) -> Result<()> {
    let mut out = String::from("spot_id\tcluster\n");
    for (id, l) in spot_ids.iter().zip(labels) {
        let _ = writeln!(out, "{id}\t{l}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// One id per line (e.g. selected genes).
pub fn load_id_file(path: &Path) -> Result<Vec<String>> {
    let ids = load_id_list(path)?;
    if ids.is_empty() {
        return Err(Error::Data(format!("{}: no ids", path.display())));
    }
    Ok(ids)
}

pub fn save_id_file(ids: &[String], path: &Path) -> Result<()> {
    fs::write(path, ids.join("\n") + "\n")?;
    Ok(())
}

/// Write `key=value` metadata lines in the given order.
pub fn save_key_values(pairs: &[(String, String)], path: &Path) -> Result<()> {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k}={v}");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Data(format!("line {}: expected key=value, got '{line}'", idx + 1))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}
