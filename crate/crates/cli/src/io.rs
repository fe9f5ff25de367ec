//! CSV input and output.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

/// Records of a comma-separated file with their 1-based line numbers.
/// Lines starting with `#` are comments.
fn records(path: &Path) -> CliResult<Vec<(u64, StringRecord)>> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::at(path, line, e)
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        out.push((line, record));
    }
    Ok(out)
}

fn parse_number(path: &Path, line: u64, field: &str) -> CliResult<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| CliError::at(path, line, format!("'{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::at(path, line, format!("'{field}' is not finite")));
    }
    Ok(v)
}

/// Drops a leading header row, recognised by having no numeric field.
fn skip_header(mut rows: Vec<(u64, StringRecord)>) -> Vec<(u64, StringRecord)> {
    if let Some((_, first)) = rows.first() {
        if first.iter().all(|f| f.parse::<f64>().is_err()) {
            rows.remove(0);
        }
    }
    rows
}

/// Dense numeric matrix, one row per line, optional header.
pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let rows = skip_header(records(path)?);
    let Some((_, first)) = rows.first() else {
        return Err(CliError::input(format!("{}: no data rows", path.display())));
    };
    let width = first.len();
    let mut values = Vec::with_capacity(rows.len() * width);
    for (line, record) in &rows {
        if record.len() != width {
            return Err(CliError::at(
                path,
                *line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        for field in record {
            values.push(parse_number(path, *line, field)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), width, &values))
}

/// Single numeric column, optional header.
pub fn read_column(path: &Path) -> CliResult<Vec<f64>> {
    let rows = skip_header(records(path)?);
    rows.iter()
        .map(|(line, record)| {
            if record.len() != 1 {
                return Err(CliError::at(
                    path,
                    *line,
                    format!("expected 1 field, found {}", record.len()),
                ));
            }
            parse_number(path, *line, &record[0])
        })
        .collect()
}

/// Single column of positive integers.
pub fn read_counts(path: &Path) -> CliResult<Vec<usize>> {
    let rows = skip_header(records(path)?);
    rows.iter()
        .map(|(line, record)| {
            if record.len() != 1 {
                return Err(CliError::at(
                    path,
                    *line,
                    format!("expected 1 field, found {}", record.len()),
                ));
            }
            match record[0].parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(CliError::at(
                    path,
                    *line,
                    format!("'{}' is not a positive integer", &record[0]),
                )),
            }
        })
        .collect()
}

/// Group label of every column from `column_index,group_id` rows with
/// 1-based column indices; every column in `1..=p` must appear once.
pub fn read_groups(path: &Path, p: usize) -> CliResult<Vec<String>> {
    let mut rows = records(path)?;
    if let Some((_, first)) = rows.first() {
        if first.len() == 2 && first[0].parse::<usize>().is_err() {
            rows.remove(0);
        }
    }
    let mut labels: Vec<Option<String>> = vec![None; p];
    for (line, record) in &rows {
        if record.len() != 2 {
            return Err(CliError::at(
                path,
                *line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let column: usize = record[0]
            .parse()
            .map_err(|_| CliError::at(path, *line, format!("'{}' is not a column index", &record[0])))?;
        if column == 0 || column > p {
            return Err(CliError::at(
                path,
                *line,
                format!("column index {column} outside 1..={p}"),
            ));
        }
        if record[1].is_empty() {
            return Err(CliError::at(path, *line, "empty group id"));
        }
        if labels[column - 1].replace(record[1].to_string()).is_some() {
            return Err(CliError::at(path, *line, format!("column {column} assigned twice")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(j, l)| l.ok_or_else(|| CliError::input(format!("{}: column {} has no group", path.display(), j + 1))))
        .collect()
}

/// `group_id,weight` rows.
pub fn read_weights(path: &Path) -> CliResult<HashMap<String, f64>> {
    let mut rows = records(path)?;
    if let Some((_, first)) = rows.first() {
        if first.len() == 2 && first[1].parse::<f64>().is_err() {
            rows.remove(0);
        }
    }
    let mut out = HashMap::new();
    for (line, record) in &rows {
        if record.len() != 2 {
            return Err(CliError::at(
                path,
                *line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let w = parse_number(path, *line, &record[1])?;
        if out.insert(record[0].to_string(), w).is_some() {
            return Err(CliError::at(
                path,
                *line,
                format!("group '{}' listed twice", &record[0]),
            ));
        }
    }
    Ok(out)
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Output(format!("cannot create {}: {e}", path.display())))
}
