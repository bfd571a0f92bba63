//! Long-format response CSV and covariate CSV.
//!
//! Responses: `particle,replicate,dose,time,response[,tray]`, one row per
//! observed cell. The `time` column may be left out (or held constant) for
//! dose-only data; an empty or `NA` response marks a missing cell. Rows
//! whose particle is the control label are control wells.
//!
//! Covariates: `particle,<name1>,...,<nameP>`, one row per particle. A
//! directive line `#log: name1,name3` flags log-scale covariates. Other
//! lines starting with `#` are comments.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::dataset::{ControlObs, ExposureDataset, Replicate};
use crate::basis::Grid1D;
use crate::error::{Error, Result};

pub const DEFAULT_CONTROL_LABEL: &str = "control";
const LOG_DIRECTIVE: &str = "#log:";

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

struct Table {
    header: Vec<String>,
    /// `(line, fields)`
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path, text: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(header_key)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_err(path, line, format!("{} fields, header has {}", rec.len(), header.len())));
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { header, rows })
}

/// Response column names are matched case-insensitively; covariate names
/// keep their case.
fn header_key(h: &str) -> String {
    let l = h.to_ascii_lowercase();
    match l.as_str() {
        "particle" | "replicate" | "dose" | "time" | "response" | "tray" => l,
        _ => h.to_string(),
    }
}

fn number(path: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| parse_err(path, line, format!("{what} '{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{what} '{field}' is not finite")));
    }
    Ok(v)
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan")
}

/// Covariate table: names, log flags, and `(particle, row, line)`.
fn load_covariates(path: &Path) -> Result<(Vec<String>, Vec<bool>, Vec<(String, Vec<f64>, u64)>)> {
    let text = read_text(path)?;
    let mut log_names: Vec<(String, u64)> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if let Some(rest) = line.trim_start().strip_prefix(LOG_DIRECTIVE) {
            log_names.extend(rest.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(|s| (s.to_string(), k as u64 + 1)));
        }
    }
    let table = read_table(path, &text)?;
    if table.header.first().map(String::as_str) != Some("particle") || table.header.len() < 2 {
        return Err(parse_err(path, 1, "header must be 'particle,<covariate>,...' with at least one covariate"));
    }
    let names: Vec<String> = table.header[1..].to_vec();
    let mut log_scale = vec![false; names.len()];
    for (n, line) in log_names {
        let j = names
            .iter()
            .position(|c| *c == n)
            .ok_or_else(|| parse_err(path, line, format!("#log names unknown covariate '{n}'")))?;
        log_scale[j] = true;
    }
    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut rows = Vec::new();
    for (line, f) in table.rows {
        let id = f[0].clone();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty particle identifier"));
        }
        if let Some(prev) = seen.insert(id.clone(), line) {
            return Err(parse_err(path, line, format!("particle '{id}' already defined on line {prev}")));
        }
        let x = f[1..]
            .iter()
            .zip(&names)
            .map(|(v, n)| number(path, line, v, &format!("covariate {n}")))
            .collect::<Result<Vec<_>>>()?;
        for (j, &v) in x.iter().enumerate() {
            if log_scale[j] && v <= 0.0 {
                return Err(parse_err(path, line, format!("log-scale covariate {} must be positive, got {v}", names[j])));
            }
        }
        rows.push((id, x, line));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no covariate rows"));
    }
    Ok((names, log_scale, rows))
}

/// A covariate-only table, e.g. new particles to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub log_scale: Vec<bool>,
    pub particles: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn load_covariate_table(path: &Path) -> Result<CovariateTable> {
    let (names, log_scale, rows) = load_covariates(path)?;
    let (particles, rows) = rows.into_iter().map(|(p, r, _)| (p, r)).unzip();
    Ok(CovariateTable { names, log_scale, particles, rows })
}

struct Obs {
    line: u64,
    particle: String,
    replicate: String,
    dose: f64,
    time: Option<f64>,
    value: Option<f64>,
    tray: Option<String>,
}

fn load_responses(path: &Path) -> Result<(Vec<Obs>, bool)> {
    let text = read_text(path)?;
    let table = read_table(path, &text)?;
    let col = |name: &str| table.header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| parse_err(path, 1, format!("missing column '{name}'")));
    let (cp, cr, cd, cy) = (need("particle")?, need("replicate")?, need("dose")?, need("response")?);
    let (ct, ctray) = (col("time"), col("tray"));
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, f) in table.rows {
        let time = match ct {
            Some(c) if !f[c].is_empty() => Some(number(path, line, &f[c], "time")?),
            _ => None,
        };
        let value = if is_missing(&f[cy]) { None } else { Some(number(path, line, &f[cy], "response")?) };
        out.push(Obs {
            line,
            particle: f[cp].clone(),
            replicate: f[cr].clone(),
            dose: number(path, line, &f[cd], "dose")?,
            time,
            value,
            tray: ctray.map(|c| f[c].clone()).filter(|t| !t.is_empty()),
        });
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no response rows"));
    }
    Ok((out, ct.is_some()))
}

fn sorted_grid(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let set: BTreeSet<u64> = values.map(|v| (v + 0.0).to_bits()).collect();
    let mut g: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
    g.sort_by(|a, b| a.total_cmp(b));
    g
}

/// Load and validate a dataset, treating particle `control` as control
/// wells.
pub fn load_dataset(responses: &Path, covariates: &Path) -> Result<ExposureDataset> {
    load_dataset_with_control(responses, covariates, DEFAULT_CONTROL_LABEL)
}

pub fn load_dataset_with_control(responses: &Path, covariates: &Path, control_label: &str) -> Result<ExposureDataset> {
    let (names, log_scale, cov_rows) = load_covariates(covariates)?;
    let (obs, has_time_col) = load_responses(responses)?;
    let rp = responses;
    let index: HashMap<&str, usize> = cov_rows.iter().enumerate().map(|(i, (id, _, _))| (id.as_str(), i)).collect();

    let (control_rows, rows): (Vec<&Obs>, Vec<&Obs>) = obs.iter().partition(|o| o.particle == control_label);
    for o in &rows {
        if !index.contains_key(o.particle.as_str()) {
            return Err(parse_err(rp, o.line, format!("particle '{}' is not in the covariate file", o.particle)));
        }
    }
    let doses = sorted_grid(rows.iter().map(|o| o.dose));
    let times_raw = sorted_grid(rows.iter().filter_map(|o| o.time));
    if has_time_col && !times_raw.is_empty() && rows.iter().any(|o| o.time.is_none()) {
        let o = rows.iter().find(|o| o.time.is_none()).unwrap();
        return Err(parse_err(rp, o.line, "time is empty while other rows give a time"));
    }
    let is_2d = times_raw.len() > 1;
    let times = if is_2d { times_raw } else { vec![] };
    let nt = times.len().max(1);
    let n_cells = doses.len() * nt;
    let cell_of = |o: &Obs| -> usize {
        let d = doses.iter().position(|&v| v == o.dose).unwrap();
        let t = if is_2d { times.iter().position(|&v| Some(v) == o.time).unwrap() } else { 0 };
        d * nt + t
    };

    // per particle: replicate label -> (tray, values, mask, first line)
    struct Acc {
        order: Vec<String>,
        reps: HashMap<String, (Option<String>, Vec<f64>, Vec<bool>, Vec<Option<u64>>, u64)>,
        cells: BTreeSet<usize>,
        first_line: u64,
    }
    let mut acc: Vec<Option<Acc>> = (0..cov_rows.len()).map(|_| None).collect();
    for o in &rows {
        let i = index[o.particle.as_str()];
        let a = acc[i].get_or_insert_with(|| Acc { order: Vec::new(), reps: HashMap::new(), cells: BTreeSet::new(), first_line: o.line });
        if !a.reps.contains_key(&o.replicate) {
            a.order.push(o.replicate.clone());
            a.reps.insert(o.replicate.clone(), (o.tray.clone(), vec![0.0; n_cells], vec![false; n_cells], vec![None; n_cells], o.line));
        }
        let r = a.reps.get_mut(&o.replicate).unwrap();
        if r.0 != o.tray {
            return Err(parse_err(
                rp,
                o.line,
                format!("replicate '{}' of particle '{}' changes tray (first seen on line {})", o.replicate, o.particle, r.4),
            ));
        }
        let c = cell_of(o);
        if let Some(prev) = r.3[c] {
            return Err(parse_err(
                rp,
                o.line,
                format!("duplicate cell for particle '{}' replicate '{}' (also line {prev})", o.particle, o.replicate),
            ));
        }
        r.3[c] = Some(o.line);
        a.cells.insert(c);
        if let Some(v) = o.value {
            r.1[c] = v;
            r.2[c] = true;
        }
    }
    let mut responses_out = Vec::with_capacity(cov_rows.len());
    for (i, (id, _, line)) in cov_rows.iter().enumerate() {
        let mut a = acc[i]
            .take()
            .ok_or_else(|| parse_err(covariates, *line, format!("particle '{id}' has no rows in {}", rp.display())))?;
        if a.cells.len() != n_cells {
            let missing = (0..n_cells).find(|c| !a.cells.contains(c)).unwrap();
            let (d, t) = (doses[missing / nt], if is_2d { Some(times[missing % nt]) } else { None });
            return Err(parse_err(
                rp,
                a.first_line,
                format!(
                    "ragged grid: particle '{id}' (rows from line {}) has no row at dose {d}{}",
                    a.first_line,
                    t.map_or(String::new(), |t| format!(", time {t}"))
                ),
            ));
        }
        let reps = a
            .order
            .iter()
            .map(|label| {
                let (tray, values, mask, _, _) = a.reps.remove(label).unwrap();
                let mask = if mask.iter().all(|&m| m) { None } else { Some(mask) };
                Replicate { label: label.clone(), tray, values, mask }
            })
            .collect();
        responses_out.push(reps);
    }
    let controls = control_rows
        .iter()
        .filter_map(|o| {
            o.value.map(|value| ControlObs {
                replicate: o.replicate.clone(),
                tray: o.tray.clone(),
                dose: o.dose,
                time: if is_2d { o.time } else { None },
                value,
            })
        })
        .collect();
    let data = ExposureDataset {
        particles: cov_rows.iter().map(|r| r.0.clone()).collect(),
        covariate_names: names,
        log_scale,
        covariates: cov_rows.into_iter().map(|r| r.1).collect(),
        dose: Grid1D::new(doses)?,
        time: if is_2d { Some(Grid1D::new(times)?) } else { None },
        responses: responses_out,
        controls,
    };
    data.validate(&rp.display().to_string())?;
    Ok(data)
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) || field.starts_with('#') || field != field.trim() {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Response CSV text of a dataset; missing cells are written as `NA`.
pub fn responses_csv(data: &ExposureDataset, control_label: &str) -> String {
    let has_tray = data.responses.iter().flatten().any(|r| r.tray.is_some()) || data.controls.iter().any(|c| c.tray.is_some());
    let mut s = String::from("particle,replicate,dose");
    if data.is_2d() {
        s.push_str(",time");
    }
    s.push_str(",response");
    if has_tray {
        s.push_str(",tray");
    }
    s.push('\n');
    let row = |s: &mut String, p: &str, r: &str, d: f64, t: Option<f64>, v: Option<f64>, tray: &Option<String>| {
        let _ = write!(s, "{},{},{d}", quote(p), quote(r));
        if data.is_2d() {
            let _ = write!(s, ",{}", t.map_or(String::new(), |t| t.to_string()));
        }
        let _ = write!(s, ",{}", v.map_or("NA".to_string(), |v| v.to_string()));
        if has_tray {
            let _ = write!(s, ",{}", quote(tray.as_deref().unwrap_or("")));
        }
        s.push('\n');
    };
    let nt = data.n_time();
    for (i, reps) in data.responses.iter().enumerate() {
        for r in reps {
            for c in 0..r.values.len() {
                let d = data.dose.values()[c / nt];
                let t = data.time.as_ref().map(|g| g.values()[c % nt]);
                row(&mut s, &data.particles[i], &r.label, d, t, r.is_observed(c).then_some(r.values[c]), &r.tray);
            }
        }
    }
    for c in &data.controls {
        row(&mut s, control_label, &c.replicate, c.dose, c.time, Some(c.value), &c.tray);
    }
    s
}

/// Covariate CSV text, with a `#log:` directive when needed.
pub fn covariates_csv(data: &ExposureDataset) -> String {
    let mut s = String::new();
    let logs: Vec<&str> =
        data.covariate_names.iter().zip(&data.log_scale).filter(|(_, &l)| l).map(|(n, _)| n.as_str()).collect();
    if !logs.is_empty() {
        let _ = writeln!(s, "{LOG_DIRECTIVE} {}", logs.join(","));
    }
    s.push_str("particle");
    for n in &data.covariate_names {
        let _ = write!(s, ",{}", quote(n));
    }
    s.push('\n');
    for (id, row) in data.particles.iter().zip(&data.covariates) {
        s.push_str(&quote(id));
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Write both CSV files; loading them back gives the same dataset.
pub fn write_dataset(data: &ExposureDataset, responses: &Path, covariates: &Path) -> Result<()> {
    write_text(responses, &responses_csv(data, DEFAULT_CONTROL_LABEL))?;
    write_text(covariates, &covariates_csv(data))
}

/// Generic CSV table writer used for reports.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = header.iter().map(|h| quote(h)).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.iter().map(|f| quote(f)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    write_text(path, &s)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    read_text(path)
}
