//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use dosetree::analytics::{
    default_grid, loco_validation, partial_dependence, partial_dependence_2var, pooled_coverage,
    posterior_predictive, predictive_check, sensitivity_indices, simulate_dataset, GeneratorSpec,
    PredictiveSummary, SensitivityMode, SensitivityOptions,
};
use dosetree::datastore::report::{self, Table};
use dosetree::datastore::{
    load_config, load_covariate_table, load_dataset_with_control, load_posterior, save_posterior, write_dataset,
    ExposureDataset, Replicate, RunConfig,
};
use dosetree::sampler::{chain_rng, run_chains, ChainDiagnostics, Model, Posterior};

use crate::svg;
use crate::{DataArgs, McmcOverrides, ModeArg};

const CHAIN_FILE: &str = "chain/posterior.bin";

fn out_dir(out: Option<&Path>, config: Option<&RunConfig>) -> PathBuf {
    out.map(Path::to_path_buf).or_else(|| config.and_then(|c| c.out_dir.clone())).unwrap_or_else(|| PathBuf::from("."))
}

fn run_config(path: Option<&Path>, ov: Option<&McmcOverrides>) -> Result<RunConfig> {
    let mut c = match path {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(ov) = ov {
        let m = &mut c.mcmc;
        m.iterations = ov.iterations.unwrap_or(m.iterations);
        m.burn_in = ov.burn_in.unwrap_or(m.burn_in);
        m.thin = ov.thin.unwrap_or(m.thin);
        m.n_chains = ov.chains.unwrap_or(m.n_chains);
        m.seed = ov.seed.unwrap_or(m.seed);
    }
    c.validate()?;
    Ok(c)
}

fn load_data(responses: &Path, covariates: &Path, cfg: &RunConfig) -> Result<ExposureDataset> {
    let ds = load_dataset_with_control(responses, covariates, &cfg.control_label)?;
    if cfg.normalize && !ds.controls.is_empty() {
        log::info!("subtracting control means ({} control rows)", ds.controls.len());
        return Ok(ds.normalize_baseline()?);
    }
    Ok(ds)
}

fn write_table(dir: &Path, name: &str, t: &Table, files: &mut Vec<String>) -> Result<()> {
    let rel = format!("tables/{name}.csv");
    report::write_report_table(&dir.join(&rel), t)?;
    files.push(rel);
    Ok(())
}

fn write_figure(dir: &Path, name: &str, body: &str, files: &mut Vec<String>) -> Result<()> {
    let rel = format!("figures/{name}.svg");
    let p = dir.join(&rel);
    std::fs::create_dir_all(p.parent().unwrap()).with_context(|| format!("creating {}", p.display()))?;
    std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
    files.push(rel);
    Ok(())
}

fn manifest(dir: &Path, command: &str, mut pairs: Vec<(String, String)>, files: &[String]) -> Result<()> {
    let mut all = vec![("command".to_string(), command.to_string()), ("version".into(), env!("CARGO_PKG_VERSION").into())];
    all.append(&mut pairs);
    all.extend(files.iter().map(|f| ("output".to_string(), f.clone())));
    report::write_manifest(&dir.join("run.manifest"), &all)?;
    Ok(())
}

fn config_pairs(cfg: &RunConfig) -> Vec<(String, String)> {
    cfg.to_text()
        .lines()
        .filter_map(|l| l.split_once(" = ").map(|(k, v)| (format!("config.{k}"), v.to_string())))
        .collect()
}

fn safe_name(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        bail!(dosetree::Error::InvalidArgument(format!("--level must be in (0, 1), got {level}")));
    }
    Ok(())
}

/// Figure of one particle's predictive summary: a curve with band for
/// dose-only data, a mean heatmap over (dose index, time) for surfaces.
fn predictive_figure(id: &str, s: &PredictiveSummary, reps: Option<&[Replicate]>) -> String {
    let nd = s.doses.len();
    let xs: Vec<f64> = (0..nd).map(|k| k as f64).collect();
    match &s.times {
        None => {
            let points: Vec<(f64, f64)> = reps
                .unwrap_or_default()
                .iter()
                .flat_map(|r| (0..nd).filter(|&c| r.is_observed(c)).map(move |c| (c as f64, r.values[c])))
                .collect();
            let title = format!("{id}: posterior predictive, {:.0}% band", 100.0 * s.level);
            svg::band_plot(&title, "dose index", &xs, &s.mean, &s.lower, &s.upper, &points)
        }
        Some(times) => {
            let nt = times.len();
            let values: Vec<Vec<f64>> = (0..nd).map(|d| s.mean[d * nt..(d + 1) * nt].to_vec()).collect();
            let title = format!("{id}: posterior predictive mean surface");
            svg::heatmap(&title, "dose index", "time", &xs, times, &values, &[])
        }
    }
}

fn trace_figures(post: &Posterior, dir: &Path, files: &mut Vec<String>) -> Result<()> {
    type Getter = fn(&dosetree::sampler::ChainState) -> f64;
    let mut quantities: Vec<(&str, Getter)> = vec![
        ("sigma2", |s| s.noise.sigma2),
        ("tau2", |s| s.tau2),
        ("phi_d", |s| s.noise.phi_d),
        ("n_leaves", |s| s.tree.n_leaves() as f64),
    ];
    if post.context.time.is_some() {
        quantities.push(("phi_t", |s| s.noise.phi_t));
    }
    let n = post.chains.iter().map(|c| c.draws.len()).min().unwrap_or(0);
    if n < 2 {
        return Ok(());
    }
    for (name, g) in quantities {
        let x: Vec<f64> = post.chains[0].draws[..n].iter().map(|d| d.iteration as f64).collect();
        let series: Vec<(String, Vec<f64>)> =
            post.chains.iter().map(|c| (format!("chain {}", c.chain_index), c.draws[..n].iter().map(|d| g(&d.state)).collect())).collect();
        write_figure(dir, &format!("trace_{name}"), &svg::line_plot(&format!("trace of {name}"), "iteration", name, &x, &series), files)?;
    }
    Ok(())
}

pub fn fit(data: &DataArgs, ov: &McmcOverrides, out: Option<&Path>) -> Result<()> {
    let cfg = run_config(data.config.as_deref(), Some(ov))?;
    let ds = load_data(&data.data, &data.covariates, &cfg)?;
    let dir = out_dir(out, Some(&cfg));
    let model = Model::new(&ds, cfg.spline, cfg.distance, &cfg.mcmc)?;
    let (i, k, nd, nt) = ds.shape();
    log::info!("fitting {i} particles, {k} replicates, {nd} doses x {nt} times, {} chains", cfg.mcmc.n_chains);
    let t0 = Instant::now();
    let post = run_chains(&model, &cfg.mcmc)?;
    let secs = t0.elapsed().as_secs_f64();
    let mut files = Vec::new();
    save_posterior(&post, &dir.join(CHAIN_FILE))?;
    files.push(CHAIN_FILE.to_string());
    let diag = ChainDiagnostics::from_posterior(&post);
    write_table(&dir, "traces", &report::trace_table(&post), &mut files)?;
    write_table(&dir, "diagnostics", &report::diagnostics_table(&diag), &mut files)?;
    write_table(&dir, "acceptance", &report::acceptance_table(&diag), &mut files)?;
    write_table(&dir, "splits", &report::split_table(&post), &mut files)?;
    trace_figures(&post, &dir, &mut files)?;
    for (name, _, rhat, _) in &diag.parameters {
        if *rhat > 1.1 {
            log::warn!("split R-hat of {name} is {rhat:.3}; chains may not have converged");
        }
    }
    let mut pairs = vec![
        ("data".into(), data.data.display().to_string()),
        ("covariates".into(), data.covariates.display().to_string()),
        ("normalized".into(), (cfg.normalize && !ds.controls.is_empty()).to_string()),
        ("stored_draws".into(), post.n_draws().to_string()),
        ("seconds".into(), format!("{secs:.2}")),
    ];
    pairs.extend(config_pairs(&cfg));
    manifest(&dir, "fit", pairs, &files)?;
    println!("stored {} draws from {} chains in {secs:.1} s; chain written to {}", post.n_draws(), post.chains.len(), dir.join(CHAIN_FILE).display());
    Ok(())
}

pub fn predict(
    chain: &Path,
    covariates: &Path,
    data: Option<&Path>,
    config: Option<&Path>,
    level: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    check_level(level)?;
    let cfg = run_config(config, None)?;
    let post = load_posterior(chain)?;
    let table = load_covariate_table(covariates)?;
    let cols: Vec<usize> = post
        .context
        .covariate_names
        .iter()
        .map(|n| {
            table.names.iter().position(|m| m == n).ok_or_else(|| {
                dosetree::Error::Validation { path: covariates.to_path_buf(), message: format!("covariate '{n}' used by the fit is missing") }
            })
        })
        .collect::<std::result::Result<_, _>>()?;
    let observed = data.map(|d| load_data(d, covariates, &cfg)).transpose()?;
    let dir = out_dir(out, Some(&cfg));
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for (i, (id, row)) in table.particles.iter().zip(&table.rows).enumerate() {
        let x: Vec<f64> = cols.iter().map(|&j| row[j]).collect();
        let s = posterior_predictive(&post, &x, level, seed.wrapping_add(i as u64), false)?;
        let reps = observed.as_ref().and_then(|d| d.particle_index(id).map(|k| d.responses[k].as_slice()));
        write_figure(&dir, &format!("predict_{}", safe_name(id)), &predictive_figure(id, &s, reps), &mut files)?;
        summaries.push((id.clone(), s));
    }
    let rows: Vec<(String, &PredictiveSummary)> = summaries.iter().map(|(id, s)| (id.clone(), s)).collect();
    write_table(&dir, "predictive", &report::predictive_table(&rows), &mut files)?;
    manifest(&dir, "predict", vec![("chain".into(), chain.display().to_string()), ("level".into(), level.to_string())], &files)?;
    println!("predicted {} particles at level {level}", summaries.len());
    Ok(())
}

pub fn ppc(chain: &Path, data: &DataArgs, level: f64, seed: u64, out: Option<&Path>) -> Result<()> {
    check_level(level)?;
    let cfg = run_config(data.config.as_deref(), None)?;
    let post = load_posterior(chain)?;
    let ds = load_data(&data.data, &data.covariates, &cfg)?;
    if ds.covariate_names != post.context.covariate_names {
        bail!(dosetree::Error::Validation {
            path: data.covariates.clone(),
            message: format!("covariates {:?} differ from the fit's {:?}", ds.covariate_names, post.context.covariate_names),
        });
    }
    let results = predictive_check(&post, &ds, level, seed)?;
    let dir = out_dir(out, Some(&cfg));
    let mut files = Vec::new();
    for (i, (s, _)) in results.iter().enumerate() {
        let id = &ds.particles[i];
        write_figure(&dir, &format!("ppc_{}", safe_name(id)), &predictive_figure(id, s, Some(&ds.responses[i])), &mut files)?;
    }
    let rows: Vec<_> = results.iter().map(|(_, r)| r.clone()).collect();
    let summaries: Vec<(String, &PredictiveSummary)> = results.iter().zip(&ds.particles).map(|((s, _), id)| (id.clone(), s)).collect();
    write_table(&dir, "predictive", &report::predictive_table(&summaries), &mut files)?;
    write_table(&dir, "coverage", &report::coverage_table(&rows), &mut files)?;
    let pooled = pooled_coverage(&rows);
    manifest(
        &dir,
        "ppc",
        vec![("chain".into(), chain.display().to_string()), ("level".into(), level.to_string()), ("coverage".into(), pooled.to_string())],
        &files,
    )?;
    println!("pointwise {:.0}% interval coverage: {pooled:.3}", 100.0 * level);
    Ok(())
}

fn resolve_var(post: &Posterior, name: &str) -> Result<usize> {
    post.context.covariate_names.iter().position(|n| n == name).ok_or_else(|| {
        anyhow::Error::new(dosetree::Error::InvalidArgument(format!(
            "unknown covariate '{name}' (known: {})",
            post.context.covariate_names.join(", ")
        )))
    })
}

pub fn pd(chain: &Path, vars: &[String], at: Option<&[f64]>, grid: usize, out: Option<&Path>) -> Result<()> {
    if grid < 2 {
        bail!(dosetree::Error::InvalidArgument("--grid must be at least 2".into()));
    }
    let post = load_posterior(chain)?;
    let idx = vars.iter().map(|v| resolve_var(&post, v)).collect::<Result<Vec<_>>>()?;
    let two_d = post.context.time.is_some();
    let point = match at {
        None => None,
        Some([d]) if !two_d => Some((*d, None)),
        Some([d, t]) if two_d => Some((*d, Some(*t))),
        Some(_) => bail!(dosetree::Error::InvalidArgument(format!(
            "--at takes {} for this fit",
            if two_d { "dose,time" } else { "a single dose" }
        ))),
    };
    let names = &post.context.covariate_names;
    let dir = out_dir(out, None);
    let mut files = Vec::new();
    let ctx = &post.context;
    let label = |p: (f64, Option<f64>)| match p.1 {
        None => format!("dose {}", p.0),
        Some(t) => format!("dose {}, time {t}", p.0),
    };
    if idx.len() == 1 {
        let j = idx[0];
        let g = default_grid(ctx, j, grid)?;
        let pts = point.map(|p| vec![p]);
        let pd = partial_dependence(&post, j, &g, pts.as_deref())?;
        write_table(&dir, &format!("pd_{}", safe_name(&names[j])), &report::pd_table(&pd, names), &mut files)?;
        let n_pts = pd.points.len();
        let pick: Vec<usize> = if n_pts <= 8 { (0..n_pts).collect() } else { (0..8).map(|k| k * (n_pts - 1) / 7).collect() };
        let series: Vec<(String, Vec<f64>)> =
            pick.iter().map(|&c| (label(pd.points[c]), pd.values.iter().map(|row| row[c]).collect())).collect();
        let fig = svg::line_plot(&format!("partial dependence on {}", names[j]), &names[j], "mean response", &g, &series);
        write_figure(&dir, &format!("pd_{}", safe_name(&names[j])), &fig, &mut files)?;
    } else {
        let (j, k) = (idx[0], idx[1]);
        let p = point.ok_or_else(|| dosetree::Error::InvalidArgument("two-covariate partial dependence needs --at".into()))?;
        let (g1, g2) = (default_grid(ctx, j, grid)?, default_grid(ctx, k, grid)?);
        let pd = partial_dependence_2var(&post, (j, k), (&g1, &g2), &[p])?;
        let stem = format!("pd_{}_{}", safe_name(&names[j]), safe_name(&names[k]));
        write_table(&dir, &stem, &report::pd_table(&pd, names), &mut files)?;
        let values: Vec<Vec<f64>> = (0..g1.len()).map(|a| (0..g2.len()).map(|b| pd.values[a * g2.len() + b][0]).collect()).collect();
        let markers: Vec<(f64, f64, String)> =
            ctx.particles.iter().zip(&ctx.covariates).map(|(id, x)| (x[j], x[k], id.clone())).collect();
        let title = format!("partial dependence at {}", label(p));
        write_figure(&dir, &stem, &svg::heatmap(&title, &names[j], &names[k], &g1, &g2, &values, &markers), &mut files)?;
    }
    manifest(&dir, "pd", vec![("chain".into(), chain.display().to_string()), ("vars".into(), vars.join(","))], &files)?;
    println!("partial dependence written to {}", dir.display());
    Ok(())
}

pub fn sens(chain: &Path, n_base: usize, mode: ModeArg, max_draws: usize, noise: bool, seed: u64, out: Option<&Path>) -> Result<()> {
    let post = load_posterior(chain)?;
    let opts = SensitivityOptions {
        n_base,
        mode: if mode == ModeArg::PerPoint { SensitivityMode::PerPoint } else { SensitivityMode::Averaged },
        max_draws,
        include_noise: noise,
    };
    let mut rng = chain_rng(seed, 0);
    let r = sensitivity_indices(&post, &opts, &mut rng)?;
    let dir = out_dir(out, None);
    let mut files = Vec::new();
    write_table(&dir, "sensitivity", &report::sensitivity_table(&r), &mut files)?;
    if r.per_point.is_some() {
        let times = post.context.time.as_ref().map(|t| t.values());
        write_table(&dir, "sensitivity_points", &report::sensitivity_point_table(&r, post.context.dose.values(), times), &mut files)?;
    }
    let s: Vec<f64> = r.averaged.iter().map(|e| e.first).collect();
    let t: Vec<f64> = r.averaged.iter().map(|e| e.total).collect();
    let fig = svg::bar_chart("first order (S) and total (T) sensitivity", &r.names, &[("S", s), ("T", t)]);
    write_figure(&dir, "sensitivity", &fig, &mut files)?;
    for v in &r.violations {
        log::warn!("total index of {v} is below its first-order index beyond Monte Carlo error");
    }
    if r.n_constant > 0 {
        log::info!("{} of {} draws had a constant mean surface and were skipped", r.n_constant, r.n_draws);
    }
    let ranking: Vec<&str> = r.ranking().iter().map(|&j| r.names[j].as_str()).collect();
    manifest(
        &dir,
        "sens",
        vec![
            ("chain".into(), chain.display().to_string()),
            ("n_base".into(), n_base.to_string()),
            ("draws".into(), r.n_draws.to_string()),
            ("ranking".into(), ranking.join(",")),
        ],
        &files,
    )?;
    println!("variables by total index: {}", ranking.join(", "));
    Ok(())
}

pub fn loco(data: &DataArgs, ov: &McmcOverrides, level: Option<f64>, out: Option<&Path>) -> Result<()> {
    let cfg = run_config(data.config.as_deref(), Some(ov))?;
    let level = level.unwrap_or(cfg.analytics.level);
    check_level(level)?;
    let ds = load_data(&data.data, &data.covariates, &cfg)?;
    let dir = out_dir(out, Some(&cfg));
    let r = loco_validation(&ds, cfg.spline, cfg.distance, &cfg.mcmc, level)?;
    let mut files = Vec::new();
    write_table(&dir, "loco", &report::loco_table(&r), &mut files)?;
    for f in &r.folds {
        if let Some(s) = &f.summary {
            let i = ds.particle_index(&f.particle).unwrap();
            write_figure(&dir, &format!("loco_{}", safe_name(&f.particle)), &predictive_figure(&f.particle, s, Some(&ds.responses[i])), &mut files)?;
        }
        if let Some(e) = &f.error {
            eprintln!("fold {} failed: {e}", f.particle);
        }
    }
    let flagged = r.flagged();
    let flag_path = dir.join("flagged.txt");
    std::fs::write(&flag_path, flagged.iter().map(|p| format!("{p}\n")).collect::<String>())
        .with_context(|| format!("writing {}", flag_path.display()))?;
    files.push("flagged.txt".into());
    let mut pairs = vec![
        ("level".into(), level.to_string()),
        ("median_coverage".into(), r.median_coverage.to_string()),
        ("median_rmse".into(), r.median_rmse.to_string()),
        ("flagged".into(), flagged.join(",")),
    ];
    pairs.extend(config_pairs(&cfg));
    manifest(&dir, "loco", pairs, &files)?;
    println!(
        "{} folds, median coverage {:.3}, flagged: {}",
        r.folds.len(),
        r.median_coverage,
        if flagged.is_empty() { "none".to_string() } else { flagged.join(", ") }
    );
    Ok(())
}

pub fn simulate(spec: Option<&Path>, surface: bool, isolated: bool, seed: u64, out: Option<&Path>) -> Result<()> {
    let mut s = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| dosetree::Error::Io { path: p.to_path_buf(), source: e })?;
            GeneratorSpec::parse(&text, p)?
        }
        None if surface => GeneratorSpec::surface(),
        None => GeneratorSpec::default(),
    };
    if surface && s.times.is_none() {
        s.times = GeneratorSpec::surface().times;
    }
    s.isolated |= isolated;
    let mut rng = chain_rng(seed, 0);
    let (ds, truth) = simulate_dataset(&s, &mut rng)?;
    let dir = out_dir(out, None);
    write_dataset(&ds, &dir.join("responses.csv"), &dir.join("covariates.csv"))?;
    let mut files = vec!["responses.csv".to_string(), "covariates.csv".to_string()];
    write_table(&dir, "truth", &report::truth_table(&ds, &truth), &mut files)?;
    std::fs::write(dir.join("spec.txt"), s.to_text()).with_context(|| "writing spec.txt")?;
    files.push("spec.txt".into());
    manifest(&dir, "simulate", vec![("seed".into(), seed.to_string())], &files)?;
    let (i, k, nd, nt) = ds.shape();
    println!("simulated {i} particles x {k} replicates on {nd} doses x {nt} times into {}", dir.display());
    Ok(())
}
