//! Reading curves and outcomes from delimited text.
//!
//! A curves file starts with a header row holding the grid times, followed
//! by one row per observation. An outcomes file holds one value per line,
//! in the same order as the curve rows.

use std::path::Path;

use bliss_core::{FunctionalDataset, TimeGrid};

use crate::error::{CliError, IngestError, Result};

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Rows of a comma-separated table with their 1-based line numbers.
fn records(text: &str, file: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{file}: {e}")))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(out.len() + 1);
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn parse_cell(file: &str, row: usize, column: usize, value: &str) -> std::result::Result<f64, IngestError> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IngestError::NonNumeric {
            file: file.to_owned(),
            row,
            column,
            value: value.to_owned(),
        }),
    }
}

/// Parses a curves table held in memory. `file` labels error messages.
pub fn parse_curves(text: &str, file: &str) -> Result<(TimeGrid, Vec<Vec<f64>>)> {
    let rows = records(text, file)?;
    let Some(((header_row, header), body)) = rows.split_first() else {
        return Err(IngestError::Empty { file: file.to_owned() }.into());
    };
    let mut grid = Vec::with_capacity(header.len());
    for (j, cell) in header.iter().enumerate() {
        let t = parse_cell(file, *header_row, j + 1, cell)?;
        if let Some(&prev) = grid.last() {
            if t <= prev {
                return Err(IngestError::NonIncreasingGrid {
                    file: file.to_owned(),
                    column: j + 1,
                    previous: prev,
                    value: t,
                }
                .into());
            }
        }
        grid.push(t);
    }
    let mut curves = Vec::with_capacity(body.len());
    for (row, cells) in body {
        if cells.len() != grid.len() {
            return Err(IngestError::RowLength {
                file: file.to_owned(),
                row: *row,
                found: cells.len(),
                expected: grid.len(),
            }
            .into());
        }
        let values = cells
            .iter()
            .enumerate()
            .map(|(j, c)| parse_cell(file, *row, j + 1, c))
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        curves.push(values);
    }
    let grid = TimeGrid::new(grid).map_err(|e| CliError::Data(format!("{file}: {e}")))?;
    Ok((grid, curves))
}

/// Parses an outcomes list held in memory.
pub fn parse_outcomes(text: &str, file: &str) -> Result<Vec<f64>> {
    let rows = records(text, file)?;
    rows.iter()
        .map(|(row, cells)| {
            if cells.len() != 1 {
                return Err(IngestError::RowLength {
                    file: file.to_owned(),
                    row: *row,
                    found: cells.len(),
                    expected: 1,
                }
                .into());
            }
            Ok(parse_cell(file, *row, 1, &cells[0])?)
        })
        .collect()
}

pub fn read_curves(path: &Path) -> Result<(TimeGrid, Vec<Vec<f64>>)> {
    parse_curves(&read_text(path)?, &file_label(path))
}

pub fn read_outcomes(path: &Path) -> Result<Vec<f64>> {
    parse_outcomes(&read_text(path)?, &file_label(path))
}

/// Loads and validates a dataset from a curves file and an outcomes file.
pub fn ingest_dataset(curves_path: &Path, outcomes_path: &Path) -> Result<FunctionalDataset> {
    let (grid, curves) = read_curves(curves_path)?;
    let outcomes = read_outcomes(outcomes_path)?;
    if curves.len() != outcomes.len() {
        return Err(IngestError::DimensionMismatch {
            curves: curves.len(),
            outcomes: outcomes.len(),
        }
        .into());
    }
    Ok(FunctionalDataset::new(grid, curves, outcomes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_pair() {
        let (grid, curves) = parse_curves("0,0.5,1,1.5\n1,2,3,4\n5,6,7,8\n9,10,11,12\n", "c").unwrap();
        let y = parse_outcomes("1\n2\n3\n", "y").unwrap();
        let ds = FunctionalDataset::new(grid, curves, y).unwrap();
        assert_eq!((ds.n(), ds.p()), (3, 4));
    }

    #[test]
    fn decreasing_header_reports_column() {
        let err = parse_curves("0.0,0.2,0.1\n1,2,3\n", "c").unwrap_err();
        match err {
            CliError::Ingest(IngestError::NonIncreasingGrid { column, .. }) => assert_eq!(column, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let err = parse_curves("0,1\n1,2\n3,x\n", "c").unwrap_err();
        match err {
            CliError::Ingest(IngestError::NonNumeric { row, column, value, .. }) => {
                assert_eq!((row, column, value.as_str()), (3, 2, "x"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_row_reports_lengths() {
        let err = parse_curves("0,1,2\n1,2\n", "c").unwrap_err();
        assert!(matches!(
            err,
            CliError::Ingest(IngestError::RowLength { row: 2, found: 2, expected: 3, .. })
        ));
    }

    #[test]
    fn outcomes_skip_blank_lines() {
        assert_eq!(parse_outcomes("1.5\n\n-2\n", "y").unwrap(), vec![1.5, -2.0]);
    }
}
