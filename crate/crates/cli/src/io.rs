//! CSV ingestion and emission for panels, peer lists and adjacency grids.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use peer_ar::nalgebra::DMatrix;
use peer_ar::{Panel, PeerStructure};

use crate::wins::{wins_produced, BoxScore};
use crate::CliError;

/// Column layout of a panel CSV.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub unit_col: String,
    pub time_col: String,
    pub y_col: String,
    /// Regressor columns; `None` takes every column named `x<digits>` in
    /// header order.
    pub x_cols: Option<Vec<String>>,
    /// Sort periods numerically instead of lexically.
    pub time_numeric: bool,
    /// Build `y` from box-score columns instead of reading `y_col`.
    pub wins_produced: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            unit_col: "unit".into(),
            time_col: "time".into(),
            y_col: "y".into(),
            x_cols: None,
            time_numeric: false,
            wins_produced: false,
        }
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::MissingColumn(name.to_string()))
}

fn parse_cell(rec: &csv::StringRecord, idx: usize, column: &str, line: usize) -> Result<f64, CliError> {
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::NonNumericValue {
            column: column.to_string(),
            line,
            value: raw.to_string(),
        })
}

fn is_regressor_name(h: &str) -> bool {
    h.len() > 1 && h.starts_with('x') && h[1..].chars().all(|c| c.is_ascii_digit())
}

/// Reads a long-format panel CSV and stacks it period by period. Units are
/// ordered lexically by label; periods lexically or numerically.
pub fn load_panel(path: &Path, opts: &LoadOptions) -> Result<Panel, CliError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let unit_idx = column_index(&headers, &opts.unit_col)?;
    let time_idx = column_index(&headers, &opts.time_col)?;
    let x_names: Vec<String> = match &opts.x_cols {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .map(str::trim)
            .filter(|h| is_regressor_name(h))
            .map(String::from)
            .collect(),
    };
    if x_names.is_empty() {
        return Err(CliError::MissingColumn("x1".into()));
    }
    let x_idx = x_names
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>, _>>()?;
    let y_source = if opts.wins_produced {
        YSource::Wins(
            BoxScore::COLUMNS
                .iter()
                .map(|c| column_index(&headers, c))
                .collect::<Result<Vec<_>, _>>()?,
            column_index(&headers, BoxScore::MINUTES)?,
        )
    } else {
        YSource::Column(column_index(&headers, &opts.y_col)?)
    };

    let mut cells: HashMap<(String, String), (f64, Vec<f64>)> = HashMap::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let unit = rec.get(unit_idx).unwrap_or("").trim().to_string();
        let time = rec.get(time_idx).unwrap_or("").trim().to_string();
        let y = match &y_source {
            YSource::Column(i) => parse_cell(&rec, *i, &opts.y_col, line)?,
            YSource::Wins(stat_idx, min_idx) => {
                let mut stats = [0.0; 9];
                for (s, (&i, name)) in stats.iter_mut().zip(stat_idx.iter().zip(BoxScore::COLUMNS)) {
                    *s = parse_cell(&rec, i, name, line)?;
                }
                let minutes = parse_cell(&rec, *min_idx, BoxScore::MINUTES, line)?;
                wins_produced(&BoxScore::from_array(stats), minutes)?
            }
        };
        let xs = x_idx
            .iter()
            .zip(&x_names)
            .map(|(&i, name)| parse_cell(&rec, i, name, line))
            .collect::<Result<Vec<_>, _>>()?;
        if cells.insert((unit.clone(), time.clone()), (y, xs)).is_some() {
            return Err(CliError::DuplicateCell { unit, time });
        }
    }

    let units: Vec<String> = cells
        .keys()
        .map(|k| k.0.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut times: Vec<String> = cells
        .keys()
        .map(|k| k.1.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if opts.time_numeric {
        let mut keyed = times
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map(|v| (v, t.clone()))
                    .map_err(|_| CliError::NonNumericValue {
                        column: opts.time_col.clone(),
                        line: 0,
                        value: t.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        times = keyed.into_iter().map(|k| k.1).collect();
    }

    let (n, t, l) = (units.len(), times.len(), x_names.len());
    let mut y = Vec::with_capacity(n * t);
    let mut x = DMatrix::zeros(n * t, l);
    for time in &times {
        for unit in &units {
            let (yv, xs) = cells
                .get(&(unit.clone(), time.clone()))
                .ok_or_else(|| CliError::MissingCell {
                    unit: unit.clone(),
                    time: time.clone(),
                })?;
            let row = y.len();
            y.push(*yv);
            for (c, v) in xs.iter().enumerate() {
                x[(row, c)] = *v;
            }
        }
    }
    let mut panel = Panel::new(n, t, y, x)?;
    panel.unit_labels = Some(units);
    panel.time_labels = Some(times);
    Ok(panel)
}

enum YSource {
    Column(usize),
    Wins(Vec<usize>, usize),
}

fn padded_labels(prefix: &str, count: usize) -> Vec<String> {
    let width = count.to_string().len();
    (1..=count).map(|k| format!("{prefix}{k:0width$}")).collect()
}

/// Writes a panel in the long format read by [`load_panel`]. Panels without
/// labels get zero-padded ones so lexical order matches stacking order.
pub fn save_panel(path: &Path, p: &Panel) -> Result<(), CliError> {
    let units = p.unit_labels.clone().unwrap_or_else(|| padded_labels("u", p.n));
    let times = p.time_labels.clone().unwrap_or_else(|| padded_labels("", p.t));
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["unit".to_string(), "time".to_string(), "y".to_string()];
    header.extend((1..=p.n_regressors()).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for (s, time) in times.iter().enumerate() {
        for (i, unit) in units.iter().enumerate() {
            let r = s * p.n + i;
            let mut rec = vec![unit.clone(), time.clone(), p.y[r].to_string()];
            rec.extend(p.x.row(r).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads directed pairs `(unit, peer)` given as unit labels of `p`.
pub fn load_peers(path: &Path, p: &Panel) -> Result<PeerStructure, CliError> {
    let labels = p
        .unit_labels
        .clone()
        .unwrap_or_else(|| padded_labels("u", p.n));
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
    let mut reader = csv::Reader::from_path(path)?;
    let mut pairs = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let lookup = |k: usize| -> Result<usize, CliError> {
            let label = rec.get(k).unwrap_or("").trim();
            index
                .get(label)
                .copied()
                .ok_or_else(|| CliError::UnknownUnit(label.to_string()))
        };
        pairs.push((lookup(0)?, lookup(1)?));
    }
    Ok(PeerStructure::from_pairs(p.n, &pairs)?)
}

/// Reads an `n x n` numeric grid without a header.
pub fn load_adjacency(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = (0..rec.len())
            .map(|c| parse_cell(&rec, c, &format!("column {}", c + 1), k + 1))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if let Some(bad) = rows.iter().position(|r| r.len() != n) {
        return Err(CliError::Usage(format!(
            "adjacency row {} has {} entries, expected {n}",
            bad + 1,
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}
