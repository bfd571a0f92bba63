//! Synthetic exposure data from a known tree of sigmoid response curves.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::Grid1D;
use crate::datastore::{ExposureDataset, Replicate};
use crate::error::{Error, Result};
use crate::likelihood::{CorrelationStructure, DistanceMode};
use crate::tree::{Node, SplitRule, Tree};

/// Leaf response `baseline + amplitude * g(t) / (1 + exp(-slope (u - midpoint)))`
/// where `u` is the dose grid index and `g` rises linearly from
/// `1 / n_t` to 1 over the time grid (constant 1 for dose-only data).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidCurve {
    pub baseline: f64,
    pub amplitude: f64,
    pub midpoint: f64,
    pub slope: f64,
}

impl SigmoidCurve {
    pub fn value(&self, dose_idx: usize, time_idx: usize, n_time: usize) -> f64 {
        let g = (time_idx + 1) as f64 / n_time as f64;
        let s = 1.0 / (1.0 + (-self.slope * (dose_idx as f64 - self.midpoint)).exp());
        self.baseline + self.amplitude * g * s
    }
}

/// Doses of the case-study assay (eleven, two-fold spaced).
pub const ASSAY_DOSES: [f64; 11] = [0.0, 0.39, 0.78, 1.56, 3.125, 6.25, 12.5, 25.0, 50.0, 100.0, 200.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub n_particles: usize,
    pub n_replicates: usize,
    pub doses: Vec<f64>,
    /// `None` for dose-only data.
    pub times: Option<Vec<f64>>,
    pub n_covariates: usize,
    /// Generating tree; covariates are drawn on `[0, 1]`.
    pub tree: Tree,
    /// One curve per leaf of `tree`, leaves in preorder.
    pub curves: Vec<SigmoidCurve>,
    pub sigma2: f64,
    pub phi_d: f64,
    pub phi_t: f64,
    /// Give the first particle an extreme value (`isolated_value`) on
    /// covariate 0 and its own response curve.
    pub isolated: bool,
    pub isolated_value: f64,
    pub isolated_curve: SigmoidCurve,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            n_particles: 24,
            n_replicates: 4,
            doses: ASSAY_DOSES.to_vec(),
            times: None,
            n_covariates: 6,
            tree: Self::default_tree(),
            curves: vec![
                SigmoidCurve { baseline: 0.0, amplitude: 0.3, midpoint: 6.0, slope: 1.0 },
                SigmoidCurve { baseline: 0.0, amplitude: 1.5, midpoint: 5.0, slope: 1.2 },
                SigmoidCurve { baseline: 0.0, amplitude: 3.0, midpoint: 3.0, slope: 1.5 },
            ],
            sigma2: 0.04,
            phi_d: 0.6,
            phi_t: 0.4,
            isolated: false,
            isolated_value: 4.0,
            isolated_curve: SigmoidCurve { baseline: 0.0, amplitude: 6.0, midpoint: 2.0, slope: 2.0 },
        }
    }
}

impl GeneratorSpec {
    /// Splits on covariate 0, then covariate 2 on the right.
    pub fn default_tree() -> Tree {
        Tree::from_root(Node::split(
            SplitRule::new(0, 0.5),
            Node::leaf(),
            Node::split(SplitRule::new(2, 0.5), Node::leaf(), Node::leaf()),
        ))
    }

    /// Dose x time variant with six exposure times.
    pub fn surface() -> Self {
        Self { times: Some((1..=6).map(f64::from).collect()), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("generator: {m}")));
        if self.n_particles < 2 || self.n_replicates == 0 || self.n_covariates == 0 {
            return bad("need at least 2 particles, 1 replicate and 1 covariate".into());
        }
        if self.tree.n_leaves() != self.curves.len() {
            return bad(format!("{} curves for a tree with {} leaves", self.curves.len(), self.tree.n_leaves()));
        }
        if self.tree.split_vars().iter().any(|&v| v >= self.n_covariates) {
            return bad("tree splits on a covariate that does not exist".into());
        }
        if !(self.sigma2 >= 0.0) || !(0.0..1.0).contains(&self.phi_d) || !(0.0..1.0).contains(&self.phi_t) {
            return bad("sigma2 must be >= 0 and correlations in [0, 1)".into());
        }
        Grid1D::new(self.doses.clone())?;
        if let Some(t) = &self.times {
            Grid1D::new(t.clone())?;
        }
        Ok(())
    }
}

fn curve_text(c: &SigmoidCurve) -> String {
    format!("{},{},{},{}", c.baseline, c.amplitude, c.midpoint, c.slope)
}

fn parse_curve(v: &str) -> std::result::Result<SigmoidCurve, String> {
    let x: Vec<f64> = v
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    match x[..] {
        [baseline, amplitude, midpoint, slope] => Ok(SigmoidCurve { baseline, amplitude, midpoint, slope }),
        _ => Err(format!("a curve is baseline,amplitude,midpoint,slope; got '{v}'")),
    }
}

fn parse_values(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number"))).collect()
}

impl GeneratorSpec {
    /// Read a spec from `key = value` text; unset keys keep their defaults.
    /// Keys: `n_particles`, `n_replicates`, `doses`, `times` (list or
    /// `none`), `n_covariates`, `tree` (nested tree text), `curves`
    /// (`;`-separated `baseline,amplitude,midpoint,slope`), `sigma2`,
    /// `phi_d`, `phi_t`, `isolated`, `isolated_value`, `isolated_curve`.
    pub fn parse(text: &str, source: &std::path::Path) -> Result<Self> {
        let mut s = Self::default();
        for (line, k, v) in crate::datastore::config::kv_lines(text, source)? {
            let num = |v: &str| v.parse::<f64>().map_err(|_| format!("{k}: '{v}' is not a number"));
            let count = |v: &str| v.parse::<usize>().map_err(|_| format!("{k}: '{v}' is not a count"));
            let r: std::result::Result<(), String> = (|| {
                match k.as_str() {
                    "n_particles" => s.n_particles = count(&v)?,
                    "n_replicates" => s.n_replicates = count(&v)?,
                    "n_covariates" => s.n_covariates = count(&v)?,
                    "doses" => s.doses = parse_values(&v)?,
                    "times" => s.times = if v == "none" { None } else { Some(parse_values(&v)?) },
                    "tree" => s.tree = v.parse().map_err(|e: Error| e.to_string())?,
                    "curves" => s.curves = v.split(';').map(parse_curve).collect::<std::result::Result<_, _>>()?,
                    "sigma2" => s.sigma2 = num(&v)?,
                    "phi_d" => s.phi_d = num(&v)?,
                    "phi_t" => s.phi_t = num(&v)?,
                    "isolated" => s.isolated = matches!(v.as_str(), "true" | "yes" | "1"),
                    "isolated_value" => s.isolated_value = num(&v)?,
                    "isolated_curve" => s.isolated_curve = parse_curve(&v)?,
                    _ => return Err(format!("unknown key '{k}'")),
                }
                Ok(())
            })();
            r.map_err(|message| Error::Parse { path: source.to_path_buf(), line, message })?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut t = String::new();
        t += &format!("n_particles = {}\nn_replicates = {}\nn_covariates = {}\n", self.n_particles, self.n_replicates, self.n_covariates);
        t += &format!("doses = {}\n", list(&self.doses));
        t += &format!("times = {}\n", self.times.as_deref().map_or("none".into(), list));
        t += &format!("tree = {}\n", self.tree);
        t += &format!("curves = {}\n", self.curves.iter().map(curve_text).collect::<Vec<_>>().join(";"));
        t += &format!("sigma2 = {}\nphi_d = {}\nphi_t = {}\n", self.sigma2, self.phi_d, self.phi_t);
        t += &format!("isolated = {}\nisolated_value = {}\n", self.isolated, self.isolated_value);
        t += &format!("isolated_curve = {}\n", curve_text(&self.isolated_curve));
        t
    }
}

/// What generated a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub spec: GeneratorSpec,
    /// Noise-free mean profile per particle.
    pub means: Vec<Vec<f64>>,
    /// Leaf index (preorder) per particle; `None` for the isolated one.
    pub leaf: Vec<Option<usize>>,
}

/// Latin hypercube sample of `n` points in `[0, 1]^p`.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; p]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..p {
        perm.shuffle(rng);
        for (i, &k) in perm.iter().enumerate() {
            out[i][j] = (k as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    out
}

/// Draw a dataset: covariates by Latin hypercube on `[0, 1]`, each
/// particle's mean from its leaf curve, replicates with AR(1) noise.
pub fn simulate_dataset<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<(ExposureDataset, GroundTruth)> {
    spec.validate()?;
    let dose = Grid1D::new(spec.doses.clone())?;
    let time = spec.times.clone().map(Grid1D::new).transpose()?;
    let (nd, nt) = (dose.len(), time.as_ref().map_or(1, |t| t.len()));
    let mut covariates = latin_hypercube(spec.n_particles, spec.n_covariates, rng);
    if spec.isolated {
        covariates[0][0] = spec.isolated_value;
    }
    let corr = CorrelationStructure::new(&dose, time.as_ref(), DistanceMode::Index);
    let noise_chol = corr
        .matrix(spec.phi_d, if nt > 1 { spec.phi_t } else { 0.0 })?
        .cholesky()
        .ok_or_else(|| Error::Numerical("generator noise correlation is singular".into()))?;
    let l = noise_chol.l();
    let sd = spec.sigma2.sqrt();
    let n = nd * nt;
    let mut means = Vec::new();
    let mut leaf = Vec::new();
    let mut responses = Vec::new();
    for (i, x) in covariates.iter().enumerate() {
        let (curve, lf) = if spec.isolated && i == 0 {
            (spec.isolated_curve, None)
        } else {
            let k = spec.tree.assign_leaf(x);
            (spec.curves[k], Some(k))
        };
        let mean: Vec<f64> = (0..nd).flat_map(|a| (0..nt).map(move |b| curve.value(a, b, nt))).collect();
        let reps = (0..spec.n_replicates)
            .map(|k| {
                let z = nalgebra::DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
                let e = &l * z;
                let values = mean.iter().zip(e.iter()).map(|(m, e)| m + sd * e).collect();
                Replicate::complete((k + 1).to_string(), values)
            })
            .collect();
        means.push(mean);
        leaf.push(lf);
        responses.push(reps);
    }
    let data = ExposureDataset {
        particles: (0..spec.n_particles).map(|i| format!("P{:02}", i + 1)).collect(),
        covariate_names: (0..spec.n_covariates).map(|j| format!("x{}", j + 1)).collect(),
        log_scale: vec![false; spec.n_covariates],
        covariates,
        dose,
        time,
        responses,
        controls: Vec::new(),
    };
    data.validate("synthetic")?;
    Ok((data, GroundTruth { spec: spec.clone(), means, leaf }))
}
