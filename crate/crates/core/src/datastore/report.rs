//! Tidy CSV tables of fit and analysis results, and the run manifest.
//!
//! Report directory layout: `tables/*.csv`, `figures/*.svg`,
//! `chain/posterior.bin` and `run.manifest` (flat `key = value`).

use std::path::Path;

use super::csvio::{write_file, write_table};
use super::ExposureDataset;
use crate::analytics::{CoverageRow, GroundTruth, LocoReport, PartialDependence, PredictiveSummary, SensitivityReport};
use crate::error::Result;
use crate::sampler::{ChainDiagnostics, Posterior};

pub type Table = (Vec<&'static str>, Vec<Vec<String>>);

fn f(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), f)
}

/// `(dose, time)` of each grid cell, dose-major.
fn cells(doses: &[f64], times: Option<&[f64]>) -> Vec<(f64, Option<f64>)> {
    doses
        .iter()
        .flat_map(|&d| match times {
            None => vec![(d, None)],
            Some(t) => t.iter().map(|&t| (d, Some(t))).collect(),
        })
        .collect()
}

pub fn predictive_table(rows: &[(String, &PredictiveSummary)]) -> Table {
    let mut out = Vec::new();
    for (id, s) in rows {
        for (c, (d, t)) in cells(&s.doses, s.times.as_deref()).into_iter().enumerate() {
            out.push(vec![id.clone(), f(d), opt(t), f(s.mean[c]), f(s.lower[c]), f(s.upper[c]), f(s.level)]);
        }
    }
    (vec!["particle", "dose", "time", "mean", "lower", "upper", "level"], out)
}

pub fn coverage_table(rows: &[CoverageRow]) -> Table {
    let out = rows
        .iter()
        .map(|r| vec![r.particle.clone(), r.n_points.to_string(), r.covered.to_string(), f(r.coverage), f(r.rmse)])
        .collect();
    (vec!["particle", "n_points", "covered", "coverage", "rmse"], out)
}

pub fn pd_table(pd: &PartialDependence, names: &[String]) -> Table {
    let mut out = Vec::new();
    let two = pd.vars.len() == 2;
    for (s, vals) in pd.values.iter().enumerate() {
        let (a, b) = if two { (pd.grids[0][s / pd.grids[1].len()], Some(pd.grids[1][s % pd.grids[1].len()])) } else { (pd.grids[0][s], None) };
        for (c, &(d, t)) in pd.points.iter().enumerate() {
            out.push(vec![
                names[pd.vars[0]].clone(),
                f(a),
                pd.vars.get(1).map_or(String::new(), |&j| names[j].clone()),
                opt(b),
                f(d),
                opt(t),
                f(vals[c]),
            ]);
        }
    }
    (vec!["var1", "value1", "var2", "value2", "dose", "time", "pd"], out)
}

pub fn sensitivity_table(r: &SensitivityReport) -> Table {
    let out = r
        .names
        .iter()
        .zip(&r.averaged)
        .map(|(n, e)| vec![n.clone(), f(e.first), f(e.first_se), f(e.total), f(e.total_se)])
        .collect();
    (vec!["variable", "first", "first_se", "total", "total_se"], out)
}

/// Per-cell indices (per-point mode); empty otherwise.
pub fn sensitivity_point_table(r: &SensitivityReport, doses: &[f64], times: Option<&[f64]>) -> Table {
    let mut out = Vec::new();
    if let Some(pp) = &r.per_point {
        for ((d, t), row) in cells(doses, times).into_iter().zip(pp) {
            for (n, e) in r.names.iter().zip(row) {
                out.push(vec![f(d), opt(t), n.clone(), f(e.first), f(e.total)]);
            }
        }
    }
    (vec!["dose", "time", "variable", "first", "total"], out)
}

pub fn loco_table(r: &LocoReport) -> Table {
    let out = r
        .folds
        .iter()
        .map(|fold| {
            let (n, cov, rmse) = fold
                .score
                .as_ref()
                .map_or((String::new(), String::new(), String::new()), |s| (s.n_points.to_string(), f(s.coverage), f(s.rmse)));
            vec![
                fold.particle.clone(),
                fold.seed.to_string(),
                n,
                cov,
                rmse,
                fold.isolated_on.join(";"),
                fold.flagged.to_string(),
                fold.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    (vec!["particle", "seed", "n_points", "coverage", "rmse", "isolated_on", "flagged", "error"], out)
}

pub fn diagnostics_table(d: &ChainDiagnostics) -> Table {
    let out = d.parameters.iter().map(|(n, m, r, e)| vec![n.clone(), f(*m), f(*r), f(*e)]).collect();
    (vec!["parameter", "mean", "rhat", "ess"], out)
}

pub fn acceptance_table(d: &ChainDiagnostics) -> Table {
    let out = d
        .acceptance
        .iter()
        .map(|(n, p, a, fl, r)| vec![n.clone(), p.to_string(), a.to_string(), fl.to_string(), f(*r)])
        .collect();
    (vec!["move", "proposed", "accepted", "failed", "rate"], out)
}

pub fn trace_table(post: &Posterior) -> Table {
    let mut out = Vec::new();
    for c in &post.chains {
        for d in &c.draws {
            let s = &d.state;
            out.push(vec![
                c.chain_index.to_string(),
                d.iteration.to_string(),
                f(s.noise.sigma2),
                f(s.tau2),
                f(s.noise.phi_d),
                f(s.noise.phi_t),
                s.tree.n_leaves().to_string(),
                f(s.log_post),
            ]);
        }
    }
    (vec!["chain", "iteration", "sigma2", "tau2", "phi_d", "phi_t", "n_leaves", "log_post"], out)
}

/// Fraction of posterior trees splitting on each covariate.
pub fn split_frequencies(post: &Posterior) -> Vec<f64> {
    let p = post.context.n_covariates();
    let n = post.n_draws().max(1) as f64;
    (0..p).map(|j| post.draws().filter(|d| d.state.tree.splits_on(j)).count() as f64 / n).collect()
}

pub fn split_table(post: &Posterior) -> Table {
    let out = post.context.covariate_names.iter().zip(split_frequencies(post)).map(|(n, v)| vec![n.clone(), f(v)]).collect();
    (vec!["variable", "split_fraction"], out)
}

/// Noise-free generating means of a synthetic dataset.
pub fn truth_table(data: &ExposureDataset, truth: &GroundTruth) -> Table {
    let times = data.time.as_ref().map(|t| t.values());
    let mut out = Vec::new();
    for (i, mean) in truth.means.iter().enumerate() {
        for ((d, t), m) in cells(data.dose.values(), times).into_iter().zip(mean) {
            out.push(vec![data.particles[i].clone(), truth.leaf[i].map_or("isolated".into(), |l| l.to_string()), f(d), opt(t), f(*m)]);
        }
    }
    (vec!["particle", "leaf", "dose", "time", "mean"], out)
}

pub fn write_report_table(path: &Path, table: &Table) -> Result<()> {
    write_table(path, &table.0, &table.1)
}

/// `run.manifest`: what was run, with which settings, producing which
/// files.
pub fn write_manifest(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let text: String = pairs.iter().map(|(k, v)| format!("{k} = {}\n", v.replace(['\n', '\r'], " "))).collect();
    write_file(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::dependence::tests::fixed_posterior;
    use crate::tree::{Node, SplitRule, Tree};

    #[test]
    fn split_fractions_and_traces() {
        let t = Tree::from_root(Node::split(SplitRule::new(1, 0.5), Node::leaf(), Node::leaf()));
        let post = fixed_posterior(vec![(t, vec![0.0, 1.0]), (Tree::root_only(), vec![0.0])], vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(split_frequencies(&post), vec![0.0, 0.5]);
        let (h, rows) = trace_table(&post);
        assert_eq!(h.len(), rows[0].len());
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0][6], "2");
    }

    #[test]
    fn tables_write_as_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tables/cov.csv");
        let rows = vec![CoverageRow { particle: "a,b".into(), n_points: 4, covered: 3, coverage: 0.75, rmse: 0.5 }];
        write_report_table(&p, &coverage_table(&rows)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "particle,n_points,covered,coverage,rmse\n\"a,b\",4,3,0.75,0.5\n");
    }
}
