//! CSV ingestion and emission.
//!
//! Data and covariate files share one layout: first row = column names,
//! subsequent rows = samples, plain decimal numbers. Edge lists are
//! two-column `from,to` files holding variable names or 1-indexed ids.

use std::fs;
use std::path::Path;

use covnet_core::{CovariateMatrix, Dag, Dataset};
use nalgebra::DMatrix;

use crate::errors::CliError;

pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>), CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(CliError::Csv(format!("{}: empty header row", path.display())));
    }
    let mut values = Vec::new();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        for (i, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Csv(format!(
                    "{}: non-numeric cell {:?} in column {:?} (row {})",
                    path.display(),
                    field,
                    headers[i],
                    rows + 2
                ))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Csv(format!("{}: no data rows", path.display())));
    }
    let matrix = DMatrix::from_row_slice(rows, headers.len(), &values);
    Ok((headers, matrix))
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let (names, values) = read_matrix_csv(path)?;
    Ok(Dataset::new(values, names)?)
}

pub fn read_covariates(path: &Path) -> Result<(Vec<String>, CovariateMatrix), CliError> {
    let (names, values) = read_matrix_csv(path)?;
    Ok((names, CovariateMatrix::new(values)?))
}

fn check_edge_header(path: &Path, headers: &csv::StringRecord) -> Result<(), CliError> {
    let cols: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if cols != ["from", "to"] {
        return Err(CliError::Csv(format!(
            "{}: edge list header must be `from,to`, got {:?}",
            path.display(),
            headers
        )));
    }
    Ok(())
}

/// Edge list as raw name pairs, in file order.
pub fn read_edge_pairs(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    check_edge_header(path, rdr.headers()?)?;
    let mut pairs = Vec::new();
    for record in rdr.records() {
        let record = record?;
        pairs.push((record[0].to_string(), record[1].to_string()));
    }
    Ok(pairs)
}

/// Resolves a token against variable names, falling back to a 1-indexed id.
fn resolve_node(token: &str, names: &[String]) -> Option<usize> {
    if let Some(idx) = names.iter().position(|n| n == token) {
        return Some(idx);
    }
    match token.parse::<usize>() {
        Ok(id) if id >= 1 && id <= names.len() => Some(id - 1),
        _ => None,
    }
}

/// Edge list resolved against the dataset's variable names.
pub fn read_edge_list(path: &Path, names: &[String]) -> Result<Dag, CliError> {
    let pairs = read_edge_pairs(path)?;
    let mut edges = Vec::with_capacity(pairs.len());
    for (from, to) in &pairs {
        let u = resolve_node(from, names).ok_or_else(|| {
            CliError::Constraint(format!("{}: unknown node {from:?}", path.display()))
        })?;
        let v = resolve_node(to, names).ok_or_else(|| {
            CliError::Constraint(format!("{}: unknown node {to:?}", path.display()))
        })?;
        edges.push((u, v));
    }
    Ok(Dag::new(names.len(), edges)?)
}

pub fn write_matrix_csv(
    path: &Path,
    names: &[String],
    values: &DMatrix<f64>,
) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(names)?;
    for r in 0..values.nrows() {
        let row: Vec<String> = (0..values.ncols())
            .map(|c| format!("{}", values[(r, c)]))
            .collect();
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_edge_list(path: &Path, dag: &Dag, names: &[String]) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["from", "to"])?;
    for (u, v) in dag.edges() {
        wtr.write_record([names[u].as_str(), names[v].as_str()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)?;
    Ok(())
}
