//! In-memory exposure dataset: particles, covariates, grids and replicate
//! response profiles.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::basis::Grid1D;
use crate::error::{Error, Result};
use crate::likelihood::CopyView;

/// One replicate response profile of a particle, dose-major over the
/// (dose x time) grid. Missing cells are `false` in `mask` and hold `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub label: String,
    pub tray: Option<String>,
    pub values: Vec<f64>,
    pub mask: Option<Vec<bool>>,
}

impl Replicate {
    pub fn complete(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self { label: label.into(), tray: None, values, mask: None }
    }

    pub fn is_observed(&self, cell: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[cell])
    }

    pub fn is_complete(&self) -> bool {
        self.mask.as_ref().is_none_or(|m| m.iter().all(|&o| o))
    }

    pub fn n_observed(&self) -> usize {
        self.mask.as_ref().map_or(self.values.len(), |m| m.iter().filter(|&&o| o).count())
    }

    pub fn view(&self) -> CopyView<'_> {
        CopyView { values: &self.values, mask: self.mask.as_deref() }
    }
}

/// A control-well measurement (zero exposure), kept apart from the
/// particle responses and used only for baseline normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlObs {
    pub replicate: String,
    pub tray: Option<String>,
    pub dose: f64,
    pub time: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureDataset {
    pub particles: Vec<String>,
    pub covariate_names: Vec<String>,
    pub log_scale: Vec<bool>,
    /// Row per particle, column per covariate.
    pub covariates: Vec<Vec<f64>>,
    pub dose: Grid1D,
    pub time: Option<Grid1D>,
    /// Replicates per particle.
    pub responses: Vec<Vec<Replicate>>,
    pub controls: Vec<ControlObs>,
}

impl ExposureDataset {
    pub fn n_particles(&self) -> usize {
        self.particles.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_dose(&self) -> usize {
        self.dose.len()
    }

    /// 1 for dose-only data.
    pub fn n_time(&self) -> usize {
        self.time.as_ref().map_or(1, |t| t.len())
    }

    pub fn n_cells(&self) -> usize {
        self.n_dose() * self.n_time()
    }

    pub fn is_2d(&self) -> bool {
        self.time.is_some()
    }

    /// `(particles, max replicates, doses, times)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        let k = self.responses.iter().map(|r| r.len()).max().unwrap_or(0);
        (self.n_particles(), k, self.n_dose(), self.n_time())
    }

    pub fn n_observations(&self) -> usize {
        self.responses.iter().flatten().map(|r| r.n_observed()).sum()
    }

    pub fn copies(&self, particle: usize) -> Vec<CopyView<'_>> {
        self.responses[particle].iter().map(|r| r.view()).collect()
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    pub fn particle_index(&self, id: &str) -> Option<usize> {
        self.particles.iter().position(|p| p == id)
    }

    /// Dataset restricted to the given particles, in the given order.
    pub fn subset(&self, keep: &[usize]) -> Self {
        Self {
            particles: keep.iter().map(|&i| self.particles[i].clone()).collect(),
            covariates: keep.iter().map(|&i| self.covariates[i].clone()).collect(),
            responses: keep.iter().map(|&i| self.responses[i].clone()).collect(),
            ..self.clone()
        }
    }

    /// Cell index of a (dose, time) grid position.
    pub fn cell(&self, dose_idx: usize, time_idx: usize) -> usize {
        dose_idx * self.n_time() + time_idx
    }

    /// Observed range `(min, max)` of each covariate.
    pub fn covariate_ranges(&self) -> Vec<(f64, f64)> {
        covariate_ranges(&self.covariates, self.n_covariates())
    }

    /// Check the structural invariants; `source` names the input in errors.
    pub fn validate(&self, source: &str) -> Result<()> {
        let err = |message: String| Error::Validation { path: PathBuf::from(source), message };
        let (i, p, cells) = (self.n_particles(), self.n_covariates(), self.n_cells());
        if i == 0 {
            return Err(err("dataset has no particles".into()));
        }
        if self.log_scale.len() != p {
            return Err(err(format!("{} log-scale flags for {p} covariates", self.log_scale.len())));
        }
        if self.covariates.len() != i || self.responses.len() != i {
            return Err(err("covariate/response rows do not match the particle list".into()));
        }
        let mut seen = BTreeMap::new();
        for (k, id) in self.particles.iter().enumerate() {
            if let Some(prev) = seen.insert(id.as_str(), k) {
                return Err(err(format!("particle '{id}' appears twice (rows {prev} and {k})")));
            }
        }
        for (k, row) in self.covariates.iter().enumerate() {
            if row.len() != p {
                return Err(err(format!("particle '{}' has {} covariates, expected {p}", self.particles[k], row.len())));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(err(format!(
                    "particle '{}': covariate '{}' is not finite",
                    self.particles[k], self.covariate_names[j]
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if self.log_scale[j] && v <= 0.0 {
                    return Err(err(format!(
                        "particle '{}': log-scale covariate '{}' must be positive, got {v}",
                        self.particles[k], self.covariate_names[j]
                    )));
                }
            }
        }
        for (k, reps) in self.responses.iter().enumerate() {
            let id = &self.particles[k];
            if reps.is_empty() {
                return Err(err(format!("particle '{id}' has no replicates")));
            }
            for r in reps {
                if r.values.len() != cells || r.mask.as_ref().is_some_and(|m| m.len() != cells) {
                    return Err(err(format!("particle '{id}' replicate '{}' does not cover the grid", r.label)));
                }
                if r.values.iter().any(|v| !v.is_finite()) {
                    return Err(err(format!("particle '{id}' replicate '{}' has non-finite values", r.label)));
                }
            }
            if !reps.iter().any(|r| r.is_complete()) {
                return Err(err(format!("particle '{id}' has no fully observed replicate profile")));
            }
        }
        Ok(())
    }

    /// Subtract the control-well mean from every response and control
    /// value. Means are taken per tray (all rows together when there is no
    /// tray column) and per time point. Applying it twice changes nothing,
    /// since the controls are themselves centered by the first pass.
    pub fn normalize_baseline(&self) -> Result<Self> {
        if self.controls.is_empty() {
            return Err(Error::invalid("no control rows to normalize against"));
        }
        let time_key = |t: Option<f64>| t.map(f64::to_bits);
        let mut sums: BTreeMap<(Option<String>, Option<u64>), (f64, usize)> = BTreeMap::new();
        for c in &self.controls {
            let e = sums.entry((c.tray.clone(), time_key(c.time))).or_insert((0.0, 0));
            e.0 += c.value;
            e.1 += 1;
        }
        let means: BTreeMap<_, f64> = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
        let time_at = |cell: usize| self.time.as_ref().map(|t| t.values()[cell % t.len()]);
        let lookup = |tray: &Option<String>, t: Option<f64>| -> Result<f64> {
            means.get(&(tray.clone(), time_key(t))).copied().ok_or_else(|| {
                Error::invalid(format!(
                    "no control rows for tray {}{}",
                    tray.as_deref().unwrap_or("(none)"),
                    t.map_or(String::new(), |t| format!(" at time {t}"))
                ))
            })
        };
        let mut out = self.clone();
        for reps in out.responses.iter_mut() {
            for r in reps.iter_mut() {
                for cell in 0..r.values.len() {
                    if r.is_observed(cell) {
                        r.values[cell] -= lookup(&r.tray, time_at(cell))?;
                    }
                }
            }
        }
        for c in out.controls.iter_mut() {
            c.value -= lookup(&c.tray, c.time)?;
        }
        Ok(out)
    }
}

pub(crate) fn covariate_ranges(rows: &[Vec<f64>], p: usize) -> Vec<(f64, f64)> {
    (0..p)
        .map(|j| {
            rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])))
        })
        .collect()
}
