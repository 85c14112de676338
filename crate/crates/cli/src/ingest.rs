//! CSV ingestion: covariates with optional derived columns, and outcomes
//! joined to a design either positionally or by unit id.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rerand::balance::CovariateMatrix;
use rerand::inference::OutcomeVector;

use crate::args::TransformArgs;
use crate::CliError;

pub struct IngestedCovariates {
    pub unit_ids: Vec<String>,
    pub matrix: CovariateMatrix,
}

struct Table {
    headers: Vec<String>,
    records: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| CliError::Csv { path: path.into(), source })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|source| CliError::Csv { path: path.into(), source })?
        .iter()
        .map(str::to_string)
        .collect();
    let records = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| CliError::Csv { path: path.into(), source })?;
    if records.is_empty() {
        return Err(CliError::Usage(format!("no data rows in {}", path.display())));
    }
    Ok(Table { headers, records })
}

fn find_column(headers: &[String], name: &str, path: &Path) -> Result<usize, CliError> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        CliError::Usage(format!(
            "no column named {name:?} in {} (available: {})",
            path.display(),
            headers.join(", ")
        ))
    })
}

fn parse_cell(cell: &str, row: usize, column: &str, path: &Path) -> Result<f64, CliError> {
    let value: f64 = cell.parse().map_err(|_| {
        CliError::Usage(format!(
            "non-numeric value {cell:?} at data row {row}, column {column:?} in {}",
            path.display()
        ))
    })?;
    if !value.is_finite() {
        return Err(CliError::Usage(format!(
            "non-finite value {cell:?} at data row {row}, column {column:?} in {}",
            path.display()
        )));
    }
    Ok(value)
}

pub fn read_covariates(path: &Path, transform: &TransformArgs) -> Result<IngestedCovariates, CliError> {
    let table = read_table(path)?;
    let id_index = transform
        .id_col
        .as_deref()
        .map(|name| find_column(&table.headers, name, path))
        .transpose()?;

    let names: Vec<String> = table
        .headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != id_index)
        .map(|(_, h)| h.clone())
        .collect();
    if names.is_empty() {
        return Err(CliError::Usage(format!(
            "{} has no covariate columns besides the id column",
            path.display()
        )));
    }

    let mut unit_ids = Vec::with_capacity(table.records.len());
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(table.records.len());
    for (i, record) in table.records.iter().enumerate() {
        let mut row = Vec::with_capacity(names.len());
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == id_index {
                unit_ids.push(cell.to_string());
            } else {
                row.push(parse_cell(cell, i + 1, &table.headers[j], path)?);
            }
        }
        rows.push(row);
    }
    if id_index.is_none() {
        unit_ids = (1..=rows.len()).map(|i| i.to_string()).collect();
    } else {
        let mut seen = HashSet::new();
        if let Some(dup) = unit_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(CliError::Usage(format!(
                "duplicate unit id {dup:?} in {}",
                path.display()
            )));
        }
    }

    let (names, rows) = apply_transforms(names, rows, transform)?;
    let matrix = CovariateMatrix::from_rows(&rows, Some(names))?;
    Ok(IngestedCovariates { unit_ids, matrix })
}

/// Append derived columns after the originals: squares first, then pairwise
/// products, each referring to the columns as ingested.
fn apply_transforms(
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    transform: &TransformArgs,
) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let find = |name: &str| -> Result<usize, CliError> {
        names.iter().position(|n| n == name).ok_or_else(|| {
            CliError::Usage(format!(
                "no covariate column named {name:?} (available: {})",
                names.join(", ")
            ))
        })
    };

    let mut out_names = names.clone();
    let mut out_rows = rows;

    if let Some(cols) = &transform.squares {
        let targets: Vec<usize> = if cols.is_empty() {
            (0..names.len()).collect()
        } else {
            cols.iter().map(|c| find(c)).collect::<Result<_, _>>()?
        };
        for &j in &targets {
            out_names.push(format!("{}^2", names[j]));
            for row in &mut out_rows {
                row.push(row[j] * row[j]);
            }
        }
    }

    if let Some(pairs) = &transform.interactions {
        let targets: Vec<(usize, usize)> = if pairs.is_empty() {
            (0..names.len())
                .flat_map(|a| (a + 1..names.len()).map(move |b| (a, b)))
                .collect()
        } else {
            pairs
                .iter()
                .map(|pair| {
                    let (a, b) = pair.split_once('*').ok_or_else(|| {
                        CliError::Usage(format!(
                            "interaction {pair:?} must name two columns as \"a*b\""
                        ))
                    })?;
                    let (ia, ib) = (find(a.trim())?, find(b.trim())?);
                    if ia == ib {
                        return Err(CliError::Usage(format!(
                            "interaction {pair:?} pairs a column with itself; use --squares"
                        )));
                    }
                    Ok((ia, ib))
                })
                .collect::<Result<_, _>>()?
        };
        if targets.is_empty() {
            return Err(CliError::Usage(
                "--interactions needs at least two covariate columns".into(),
            ));
        }
        for (a, b) in targets {
            out_names.push(format!("{}*{}", names[a], names[b]));
            for row in &mut out_rows {
                row.push(row[a] * row[b]);
            }
        }
    }

    let mut seen = HashSet::new();
    if let Some(dup) = out_names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(CliError::Usage(format!(
            "column name {dup:?} appears twice after transformations; rename the source column"
        )));
    }
    Ok((out_names, out_rows))
}

/// Read one outcome per design unit, in design order. With an id column the
/// file may be in any order but must cover the design's ids exactly;
/// without one it is joined by position.
pub fn read_outcomes(
    path: &Path,
    id_col: Option<&str>,
    outcome_col: Option<&str>,
    unit_ids: &[String],
) -> Result<OutcomeVector, CliError> {
    let table = read_table(path)?;
    let id_index = id_col
        .map(|name| find_column(&table.headers, name, path))
        .transpose()?;
    let outcome_index = match outcome_col {
        Some(name) => find_column(&table.headers, name, path)?,
        None => {
            let candidates: Vec<usize> = (0..table.headers.len())
                .filter(|i| Some(*i) != id_index)
                .collect();
            match candidates.as_slice() {
                [only] => *only,
                _ => {
                    return Err(CliError::Usage(format!(
                        "{} has several candidate outcome columns ({}); pass --outcome-col",
                        path.display(),
                        candidates
                            .iter()
                            .map(|&i| table.headers[i].as_str())
                            .collect::<Vec<_>>()
                            .join(", ")
                    )))
                }
            }
        }
    };

    let column = &table.headers[outcome_index];
    let mut values = Vec::with_capacity(table.records.len());
    let mut ids = Vec::with_capacity(table.records.len());
    for (i, record) in table.records.iter().enumerate() {
        values.push(parse_cell(&record[outcome_index], i + 1, column, path)?);
        if let Some(j) = id_index {
            ids.push(record[j].to_string());
        }
    }

    let ordered = match id_index {
        Some(_) => {
            if values.len() != unit_ids.len() {
                return Err(CliError::Usage(format!(
                    "{} has {} outcome rows but the design has {} units",
                    path.display(),
                    values.len(),
                    unit_ids.len()
                )));
            }
            let mut by_id: HashMap<&str, f64> = HashMap::with_capacity(values.len());
            for (id, value) in ids.iter().zip(&values) {
                if by_id.insert(id, *value).is_some() {
                    return Err(CliError::Usage(format!(
                        "duplicate unit id {id:?} in {}",
                        path.display()
                    )));
                }
            }
            unit_ids
                .iter()
                .map(|id| {
                    by_id.get(id.as_str()).copied().ok_or_else(|| {
                        CliError::Usage(format!(
                            "{} is missing unit id {id:?} from the design",
                            path.display()
                        ))
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?
        }
        None => {
            if values.len() != unit_ids.len() {
                return Err(CliError::Usage(format!(
                    "{} has {} outcome rows but the design has {} units; pass --id-col to join by id",
                    path.display(),
                    values.len(),
                    unit_ids.len()
                )));
            }
            values
        }
    };
    Ok(OutcomeVector::new(ordered)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transform(squares: Option<Vec<&str>>, interactions: Option<Vec<&str>>) -> TransformArgs {
        TransformArgs {
            id_col: None,
            squares: squares.map(|v| v.into_iter().map(str::to_string).collect()),
            interactions: interactions.map(|v| v.into_iter().map(str::to_string).collect()),
        }
    }

    #[test]
    fn transforms_append_in_order() {
        let names = vec!["a".to_string(), "b".to_string()];
        let rows = vec![vec![2.0, 3.0], vec![-1.0, 4.0]];
        let (names, rows) =
            apply_transforms(names, rows, &transform(Some(vec!["b"]), Some(vec![]))).unwrap();
        assert_eq!(names, ["a", "b", "b^2", "a*b"]);
        assert_eq!(rows[0], [2.0, 3.0, 9.0, 6.0]);
        assert_eq!(rows[1], [-1.0, 4.0, 16.0, -4.0]);
    }

    #[test]
    fn bare_squares_cover_every_column() {
        let names = vec!["a".to_string(), "b".to_string()];
        let rows = vec![vec![2.0, 3.0]];
        let (names, rows) = apply_transforms(names, rows, &transform(Some(vec![]), None)).unwrap();
        assert_eq!(names, ["a", "b", "a^2", "b^2"]);
        assert_eq!(rows[0], [2.0, 3.0, 4.0, 9.0]);
    }

    #[test]
    fn transform_validation() {
        let names = vec!["a".to_string()];
        let rows = vec![vec![1.0]];
        assert!(matches!(
            apply_transforms(names.clone(), rows.clone(), &transform(Some(vec!["z"]), None)),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            apply_transforms(names.clone(), rows.clone(), &transform(None, Some(vec!["a*a"]))),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            apply_transforms(names, rows, &transform(None, Some(vec![]))),
            Err(CliError::Usage(_))
        ));
    }
}
