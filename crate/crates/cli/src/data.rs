//! Long-format panel CSV ingestion: one row per (unit, period) with columns
//! `id`, `t`, `y`, `x1..xK` and optionally `y0`.

use crate::error::{CliError, CliResult};
use panelbounds::estimation::PanelDataset;
use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

struct Unit {
    id: String,
    rows: HashMap<usize, (u8, Vec<f64>)>,
    y0: Option<u8>,
}

/// Reads a balanced long-format panel. Units are ordered by first
/// appearance; `T` is the largest period index in the file.
pub fn load_panel_csv(path: &Path) -> CliResult<PanelDataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::io(format!("cannot open {}", path.display()), e))?;
    read_panel_csv(file)
}

pub fn read_panel_csv<R: Read>(reader: R) -> CliResult<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::validation(format!("cannot read header row: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| {
        col(name).ok_or_else(|| CliError::validation(format!("header is missing column `{name}`")))
    };
    let (c_id, c_t, c_y) = (need("id")?, need("t")?, need("y")?);
    let c_y0 = col("y0");
    let mut x_cols: Vec<(usize, usize)> = Vec::new();
    for (j, h) in headers.iter().enumerate() {
        if let Some(k) = h.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            if k == 0 {
                return Err(CliError::validation(
                    "covariate columns are numbered from x1",
                ));
            }
            x_cols.push((k, j));
        } else if !["id", "t", "y", "y0"].contains(&h) {
            return Err(CliError::validation(format!("unexpected column `{h}`")));
        }
    }
    x_cols.sort();
    for (pos, (k, _)) in x_cols.iter().enumerate() {
        if *k != pos + 1 {
            return Err(CliError::validation(format!(
                "covariate column x{} is missing",
                pos + 1
            )));
        }
    }
    let k_cov = x_cols.len();

    let mut units: Vec<Unit> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut max_t = 0usize;
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| CliError::validation(format!("row {row}: {e}")))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let id = field(c_id).to_string();
        if id.is_empty() {
            return Err(CliError::validation(format!("row {row}: empty id")));
        }
        let t: usize = field(c_t).parse().ok().filter(|t| *t >= 1).ok_or_else(|| {
            CliError::validation(format!(
                "row {row}: period `{}` is not a positive integer",
                field(c_t)
            ))
        })?;
        let binary = |name: &str, s: &str| -> CliResult<u8> {
            match s {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(CliError::validation(format!(
                    "row {row}: {name} must be 0 or 1, got `{s}`"
                ))),
            }
        };
        let y = binary("y", field(c_y))?;
        let mut x = Vec::with_capacity(k_cov);
        for &(k, j) in &x_cols {
            let v: f64 = field(j)
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    CliError::validation(format!(
                        "row {row}: x{k} value `{}` is not a finite number",
                        field(j)
                    ))
                })?;
            x.push(v);
        }
        let y0 = match c_y0 {
            Some(j) => Some(binary("y0", field(j))?),
            None => None,
        };
        let u = *index.entry(id.clone()).or_insert_with(|| {
            units.push(Unit {
                id: id.clone(),
                rows: HashMap::new(),
                y0,
            });
            units.len() - 1
        });
        let unit = &mut units[u];
        if unit.y0 != y0 {
            return Err(CliError::validation(format!(
                "row {row}: y0 differs within id {id}"
            )));
        }
        if unit.rows.insert(t, (y, x)).is_some() {
            return Err(CliError::validation(format!(
                "row {row}: duplicate row for id {id}, t {t}"
            )));
        }
        max_t = max_t.max(t);
    }
    if units.is_empty() {
        return Err(CliError::validation("panel file has no data rows"));
    }
    let offenders: Vec<String> = units
        .iter()
        .filter(|u| u.rows.len() != max_t)
        .map(|u| {
            let have: BTreeSet<usize> = u.rows.keys().copied().collect();
            let missing: Vec<String> = (1..=max_t)
                .filter(|t| !have.contains(t))
                .map(|t| t.to_string())
                .collect();
            format!("{} (missing t = {})", u.id, missing.join(","))
        })
        .collect();
    if !offenders.is_empty() {
        return Err(CliError::validation(format!(
            "unbalanced panel: ids {} do not have all {max_t} periods",
            offenders.join("; ")
        )));
    }
    let n = units.len();
    let mut y = Vec::with_capacity(n * max_t);
    let mut x = Vec::with_capacity(n * max_t * k_cov);
    for u in &units {
        for t in 1..=max_t {
            let (yt, xt) = &u.rows[&t];
            y.push(*yt);
            x.extend_from_slice(xt);
        }
    }
    let y0 = c_y0.map(|_| units.iter().map(|u| u.y0.unwrap_or(0)).collect());
    Ok(PanelDataset::new(n, max_t, k_cov, y, x, y0)?)
}

/// Writes a panel in the long format read by [`read_panel_csv`].
pub fn write_panel_csv<W: std::io::Write>(panel: &PanelDataset, mut w: W) -> std::io::Result<()> {
    let mut header = vec!["id".to_string(), "t".to_string(), "y".to_string()];
    header.extend((1..=panel.covariates).map(|k| format!("x{k}")));
    if panel.y0.is_some() {
        header.push("y0".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..panel.n {
        let xs = panel.unit_x(i);
        for t in 0..panel.periods {
            let mut row = vec![
                (i + 1).to_string(),
                (t + 1).to_string(),
                panel.unit_y(i)[t].to_string(),
            ];
            row.extend(
                xs[t * panel.covariates..(t + 1) * panel.covariates]
                    .iter()
                    .map(|v| v.to_string()),
            );
            if let Some(y0) = &panel.y0 {
                row.push(y0[i].to_string());
            }
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}
