//! Run configuration in a flat `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; unknown keys are rejected. [`RunConfig::to_text`] writes every
//! key, and parsing that text gives back the same configuration.

use std::path::{Path, PathBuf};

use super::csvio::DEFAULT_CONTROL_LABEL;
use crate::analytics::SensitivityMode;
use crate::basis::{AxisSettings, CoordinateScale, KnotPlacement, SplineSettings};
use crate::error::{Error, Result};
use crate::likelihood::DistanceMode;
use crate::sampler::{McmcConfig, ScaleSums};

/// Documented keys and what they set.
pub const KEYS: &[(&str, &str)] = &[
    ("iterations", "MCMC sweeps per chain (160000)"),
    ("burn_in", "sweeps discarded before storing draws (80000)"),
    ("thin", "store every thin-th sweep after burn-in (10)"),
    ("chains", "independent chains (4)"),
    ("seed", "master random seed (1)"),
    ("tree_steps", "tree moves per sweep (1)"),
    ("alpha", "tree prior split probability scale (0.95)"),
    ("nu", "tree prior depth exponent (2)"),
    ("move_grow", "probability of a grow move (0.1)"),
    ("move_prune", "probability of a prune move (0.1)"),
    ("move_change", "probability of a change move (0.6)"),
    ("move_swap", "probability of a swap move (0.2)"),
    ("a_sigma", "inverse-gamma shape of sigma2 (1)"),
    ("b_sigma", "inverse-gamma scale of sigma2 (1)"),
    ("a_tau", "inverse-gamma shape of tau2 (1)"),
    ("b_tau", "inverse-gamma scale of tau2 (1)"),
    ("dose_scale", "correlation prior scale for doses: identity or diag,off,interior sums (identity)"),
    ("time_scale", "correlation prior scale for times: identity or diag,off,interior sums (identity)"),
    ("eta", "ridge added to the spline penalty (1e-6)"),
    ("update_tree", "sample the tree (true)"),
    ("update_beta", "sample leaf coefficients (true)"),
    ("update_sigma2", "sample sigma2 (true)"),
    ("update_tau2", "sample tau2 (true)"),
    ("update_phi_d", "sample the dose correlation (true)"),
    ("update_phi_t", "sample the time correlation (true)"),
    ("dose_order", "B-spline order on the dose axis (4 = cubic)"),
    ("time_order", "B-spline order on the time axis (4)"),
    ("dose_knots", "interior dose knots: all (every grid point) or a count (all)"),
    ("time_knots", "interior time knots: all or a count (all)"),
    ("spline_scale", "spline coordinates: index or raw (index)"),
    ("distance", "correlation distance: index or raw (index)"),
    ("replicate_covariance", "replicate noise structure; only independent is supported (independent)"),
    ("normalize", "subtract control-well means when control rows are present (true)"),
    ("control_label", "particle label of control rows (control)"),
    ("level", "predictive interval level (0.9)"),
    ("n_base", "Sobol base sample size (1000)"),
    ("sens_mode", "sensitivity output: per-point or averaged (per-point)"),
    ("sens_max_draws", "posterior draws used for sensitivity (200)"),
    ("sens_noise", "sensitivity of noisy replicates instead of the mean surface (false)"),
    ("pd_grid", "points of a partial dependence grid (50)"),
    ("out_dir", "output directory (unset: DOSETREE_OUT or the current directory)"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplicateCovariance {
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticsDefaults {
    pub level: f64,
    pub n_base: usize,
    pub sens_mode: SensitivityMode,
    pub sens_max_draws: usize,
    pub sens_noise: bool,
    pub pd_grid: usize,
}

impl Default for AnalyticsDefaults {
    fn default() -> Self {
        Self { level: 0.9, n_base: 1000, sens_mode: SensitivityMode::PerPoint, sens_max_draws: 200, sens_noise: false, pd_grid: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mcmc: McmcConfig,
    pub spline: SplineSettings,
    pub distance: DistanceMode,
    pub replicate_covariance: ReplicateCovariance,
    pub normalize: bool,
    pub control_label: String,
    pub analytics: AnalyticsDefaults,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mcmc: McmcConfig::default(),
            spline: SplineSettings::default(),
            distance: DistanceMode::Index,
            replicate_covariance: ReplicateCovariance::Independent,
            normalize: true,
            control_label: DEFAULT_CONTROL_LABEL.into(),
            analytics: AnalyticsDefaults::default(),
            out_dir: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("{key}: '{v}' is not a valid number"))
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got '{v}'")),
    }
}

fn parse_knots(key: &str, v: &str) -> std::result::Result<KnotPlacement, String> {
    if v == "all" {
        Ok(KnotPlacement::EveryGridPoint)
    } else {
        parse_num(key, v).map(KnotPlacement::Uniform)
    }
}

fn knots_text(k: KnotPlacement) -> String {
    match k {
        KnotPlacement::EveryGridPoint => "all".into(),
        KnotPlacement::Uniform(m) => m.to_string(),
    }
}

fn parse_scale(key: &str, v: &str) -> std::result::Result<Option<ScaleSums>, String> {
    if v == "identity" {
        return Ok(None);
    }
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("{key}: expected identity or three comma-separated sums, got '{v}'"));
    }
    Ok(Some(ScaleSums { diag: parse_num(key, parts[0])?, off: parse_num(key, parts[1])?, interior: parse_num(key, parts[2])? }))
}

fn scale_text(s: Option<ScaleSums>) -> String {
    s.map_or("identity".into(), |s| format!("{},{},{}", s.diag, s.off, s.interior))
}

fn parse_index_raw(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v {
        "index" => Ok(false),
        "raw" => Ok(true),
        _ => Err(format!("{key}: expected index or raw, got '{v}'")),
    }
}

/// Set one MCMC key; `Ok(false)` when the key is not an MCMC key.
pub fn set_mcmc_key(c: &mut McmcConfig, key: &str, v: &str) -> std::result::Result<bool, String> {
    match key {
        "iterations" => c.iterations = parse_num(key, v)?,
        "burn_in" => c.burn_in = parse_num(key, v)?,
        "thin" => c.thin = parse_num(key, v)?,
        "chains" => c.n_chains = parse_num(key, v)?,
        "seed" => c.seed = parse_num(key, v)?,
        "tree_steps" => c.tree_steps_per_sweep = parse_num(key, v)?,
        "alpha" => c.tree_prior.alpha = parse_num(key, v)?,
        "nu" => c.tree_prior.nu = parse_num(key, v)?,
        "move_grow" => c.move_probs.grow = parse_num(key, v)?,
        "move_prune" => c.move_probs.prune = parse_num(key, v)?,
        "move_change" => c.move_probs.change = parse_num(key, v)?,
        "move_swap" => c.move_probs.swap = parse_num(key, v)?,
        "a_sigma" => c.variance_priors.a_sigma = parse_num(key, v)?,
        "b_sigma" => c.variance_priors.b_sigma = parse_num(key, v)?,
        "a_tau" => c.variance_priors.a_tau = parse_num(key, v)?,
        "b_tau" => c.variance_priors.b_tau = parse_num(key, v)?,
        "dose_scale" => c.correlation_priors.dose = parse_scale(key, v)?,
        "time_scale" => c.correlation_priors.time = parse_scale(key, v)?,
        "eta" => c.eta = parse_num(key, v)?,
        "update_tree" => c.updates.tree = parse_bool(key, v)?,
        "update_beta" => c.updates.beta = parse_bool(key, v)?,
        "update_sigma2" => c.updates.sigma2 = parse_bool(key, v)?,
        "update_tau2" => c.updates.tau2 = parse_bool(key, v)?,
        "update_phi_d" => c.updates.phi_d = parse_bool(key, v)?,
        "update_phi_t" => c.updates.phi_t = parse_bool(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Every MCMC key with its value, in [`KEYS`] order.
pub fn mcmc_pairs(c: &McmcConfig) -> Vec<(&'static str, String)> {
    vec![
        ("iterations", c.iterations.to_string()),
        ("burn_in", c.burn_in.to_string()),
        ("thin", c.thin.to_string()),
        ("chains", c.n_chains.to_string()),
        ("seed", c.seed.to_string()),
        ("tree_steps", c.tree_steps_per_sweep.to_string()),
        ("alpha", c.tree_prior.alpha.to_string()),
        ("nu", c.tree_prior.nu.to_string()),
        ("move_grow", c.move_probs.grow.to_string()),
        ("move_prune", c.move_probs.prune.to_string()),
        ("move_change", c.move_probs.change.to_string()),
        ("move_swap", c.move_probs.swap.to_string()),
        ("a_sigma", c.variance_priors.a_sigma.to_string()),
        ("b_sigma", c.variance_priors.b_sigma.to_string()),
        ("a_tau", c.variance_priors.a_tau.to_string()),
        ("b_tau", c.variance_priors.b_tau.to_string()),
        ("dose_scale", scale_text(c.correlation_priors.dose)),
        ("time_scale", scale_text(c.correlation_priors.time)),
        ("eta", c.eta.to_string()),
        ("update_tree", c.updates.tree.to_string()),
        ("update_beta", c.updates.beta.to_string()),
        ("update_sigma2", c.updates.sigma2.to_string()),
        ("update_tau2", c.updates.tau2.to_string()),
        ("update_phi_d", c.updates.phi_d.to_string()),
        ("update_phi_t", c.updates.phi_t.to_string()),
    ]
}

/// `key = value` lines with their line numbers; comments and blanks
/// skipped.
pub fn kv_lines(text: &str, source: &Path) -> Result<Vec<(u64, String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: source.to_path_buf(),
            line: k as u64 + 1,
            message: format!("expected 'key = value', got '{line}'"),
        })?;
        out.push((k as u64 + 1, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut seen = std::collections::HashMap::new();
        for (line, key, v) in kv_lines(text, source)? {
            let at = |message: String| Error::Parse { path: source.to_path_buf(), line, message };
            if let Some(prev) = seen.insert(key.clone(), line) {
                return Err(at(format!("{key} already set on line {prev}")));
            }
            c.set(&key, &v).map_err(at)?;
        }
        c.spline.eta = c.mcmc.eta;
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        if set_mcmc_key(&mut self.mcmc, key, v)? {
            return Ok(());
        }
        let a = &mut self.analytics;
        match key {
            "dose_order" => self.spline.dose.order = parse_num(key, v)?,
            "time_order" => self.spline.time.order = parse_num(key, v)?,
            "dose_knots" => self.spline.dose.knots = parse_knots(key, v)?,
            "time_knots" => self.spline.time.knots = parse_knots(key, v)?,
            "spline_scale" => {
                self.spline.scale = if parse_index_raw(key, v)? { CoordinateScale::Raw } else { CoordinateScale::Index }
            }
            "distance" => self.distance = if parse_index_raw(key, v)? { DistanceMode::Raw } else { DistanceMode::Index },
            "replicate_covariance" => match v {
                "independent" => self.replicate_covariance = ReplicateCovariance::Independent,
                _ => return Err(format!("replicate_covariance: only 'independent' is supported, got '{v}'")),
            },
            "normalize" => self.normalize = parse_bool(key, v)?,
            "control_label" => {
                if v.is_empty() {
                    return Err("control_label must not be empty".into());
                }
                self.control_label = v.to_string()
            }
            "level" => a.level = parse_num(key, v)?,
            "n_base" => a.n_base = parse_num(key, v)?,
            "sens_mode" => {
                a.sens_mode = match v {
                    "per-point" => SensitivityMode::PerPoint,
                    "averaged" => SensitivityMode::Averaged,
                    _ => return Err(format!("sens_mode: expected per-point or averaged, got '{v}'")),
                }
            }
            "sens_max_draws" => a.sens_max_draws = parse_num(key, v)?,
            "sens_noise" => a.sens_noise = parse_bool(key, v)?,
            "pd_grid" => a.pd_grid = parse_num(key, v)?,
            "out_dir" => self.out_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        for (axis, s) in [("dose", self.spline.dose), ("time", self.spline.time)] {
            if s.order < 2 {
                return Err(Error::Config(format!("{axis}_order must be at least 2, got {}", s.order)));
            }
        }
        let a = &self.analytics;
        if !(a.level > 0.0 && a.level < 1.0) {
            return Err(Error::Config(format!("level must be in (0, 1), got {}", a.level)));
        }
        if a.n_base < crate::analytics::sensitivity::MIN_BASE_SAMPLES {
            return Err(Error::Config(format!("n_base must be at least 16, got {}", a.n_base)));
        }
        if a.pd_grid < 2 || a.sens_max_draws == 0 {
            return Err(Error::Config("pd_grid must be at least 2 and sens_max_draws positive".into()));
        }
        Ok(())
    }

    /// Every key with its value.
    pub fn to_text(&self) -> String {
        let mut pairs = mcmc_pairs(&self.mcmc);
        let sp = |s: AxisSettings| (s.order.to_string(), knots_text(s.knots));
        let (dord, dk) = sp(self.spline.dose);
        let (tord, tk) = sp(self.spline.time);
        let ir = |raw: bool| if raw { "raw" } else { "index" }.to_string();
        let a = &self.analytics;
        pairs.extend([
            ("dose_order", dord),
            ("time_order", tord),
            ("dose_knots", dk),
            ("time_knots", tk),
            ("spline_scale", ir(self.spline.scale == CoordinateScale::Raw)),
            ("distance", ir(self.distance == DistanceMode::Raw)),
            ("replicate_covariance", "independent".into()),
            ("normalize", self.normalize.to_string()),
            ("control_label", self.control_label.clone()),
            ("level", a.level.to_string()),
            ("n_base", a.n_base.to_string()),
            ("sens_mode", if a.sens_mode == SensitivityMode::PerPoint { "per-point" } else { "averaged" }.into()),
            ("sens_max_draws", a.sens_max_draws.to_string()),
            ("sens_noise", a.sens_noise.to_string()),
            ("pd_grid", a.pd_grid.to_string()),
            ("out_dir", self.out_dir.as_ref().map_or(String::new(), |p| p.display().to_string())),
        ]);
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = super::csvio::read_file(path)?;
    RunConfig::parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(t: &str) -> Result<RunConfig> {
        RunConfig::parse(t, Path::new("test.cfg"))
    }

    #[test]
    fn empty_config_is_the_default() {
        let c = parse("# nothing\n\n").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.mcmc.iterations, c.mcmc.burn_in), (160_000, 80_000));
        assert_eq!((c.mcmc.tree_prior.alpha, c.mcmc.tree_prior.nu), (0.95, 2.0));
        assert_eq!(c.mcmc.move_probs.as_array(), [0.1, 0.1, 0.6, 0.2]);
        assert_eq!(c.mcmc.correlation_priors.dose, None);
    }

    #[test]
    fn every_documented_key_round_trips() {
        let mut c = RunConfig::default();
        c.mcmc.iterations = 500;
        c.mcmc.burn_in = 100;
        c.mcmc.correlation_priors.dose = Some(ScaleSums { diag: 11.0, off: 0.5, interior: 9.25 });
        c.mcmc.eta = 1e-7;
        c.spline.eta = 1e-7;
        c.spline.dose.knots = KnotPlacement::Uniform(5);
        c.distance = DistanceMode::Raw;
        c.analytics.sens_mode = SensitivityMode::Averaged;
        c.out_dir = Some("runs/a".into());
        let text = c.to_text();
        assert_eq!(parse(&text).unwrap(), c);
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(keys, KEYS.iter().map(|k| k.0).collect::<Vec<_>>());
    }

    #[test]
    fn rejections_name_the_line() {
        let e = parse("iterations = 100\nburn_in = 10\nitertions = 5\n").unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("itertions"), "{e}");
        assert!(parse("burn_in = 160000\n").unwrap_err().to_string().contains("burn_in"));
        assert!(parse("replicate_covariance = compound\n").unwrap_err().to_string().contains("independent"));
        assert!(parse("thin = ten\n").unwrap_err().to_string().contains("line 1"));
        assert!(parse("seed = 1\nseed = 2\n").is_err());
        assert!(parse("level\n").is_err());
    }
}
