//! Binary container for a fitted posterior.
//!
//! ```text
//! "DTCHAIN\0"  u32 version
//! u32 len, header text      (key = value: grids, spline settings, covariates)
//! u32 n_chains
//! per chain:
//!   'C' u32 len, chain text (chain index, seed, MCMC settings)
//!   u64 n_draws, then n_draws x
//!   'D' u64 iteration, f64 sigma2 phi_d phi_t tau2 log_post, u32 len, tree text
//!   'A' 12 x u64 acceptance counts (proposed, accepted, failed per move)
//! 'E'
//! ```
//!
//! Integers and floats are little-endian; floats are stored bit for bit
//! and tree text uses round-trip number formatting, so saving a loaded
//! file reproduces it byte for byte.

use std::path::Path;

use super::config::{kv_lines, mcmc_pairs, set_mcmc_key};
use crate::basis::{CoordinateScale, Grid1D, KnotPlacement, SplineSettings};
use crate::error::{Error, Result};
use crate::likelihood::{DistanceMode, NoiseModel};
use crate::sampler::{AcceptanceTable, ChainState, Draw, McmcConfig, ModelContext, Posterior, PosteriorChain};
use crate::tree::Tree;

pub const MAGIC: &[u8; 8] = b"DTCHAIN\0";
pub const VERSION: u32 = 1;

fn list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn checked(s: &str, what: &str) -> Result<()> {
    if s.contains(['\n', '\r']) || s != s.trim() || s.is_empty() {
        return Err(Error::invalid(format!("{what} '{s}' cannot be stored (empty, edge whitespace or line break)")));
    }
    Ok(())
}

fn header_text(ctx: &ModelContext) -> Result<String> {
    let knots = |k: KnotPlacement| match k {
        KnotPlacement::EveryGridPoint => "all".to_string(),
        KnotPlacement::Uniform(m) => m.to_string(),
    };
    let s = &ctx.spline;
    let mut t = String::from("format = dosetree-posterior\n");
    t += &format!("dose_order = {}\ntime_order = {}\n", s.dose.order, s.time.order);
    t += &format!("dose_knots = {}\ntime_knots = {}\n", knots(s.dose.knots), knots(s.time.knots));
    t += &format!("spline_scale = {}\n", if s.scale == CoordinateScale::Raw { "raw" } else { "index" });
    t += &format!("eta = {}\n", s.eta);
    t += &format!("distance = {}\n", if ctx.distance == DistanceMode::Raw { "raw" } else { "index" });
    t += &format!("dose = {}\n", list(ctx.dose.values()));
    if let Some(g) = &ctx.time {
        t += &format!("time = {}\n", list(g.values()));
    }
    for (n, l) in ctx.covariate_names.iter().zip(&ctx.log_scale) {
        checked(n, "covariate name")?;
        t += &format!("covariate = {n}\nlog_scale = {l}\n");
    }
    for (p, row) in ctx.particles.iter().zip(&ctx.covariates) {
        checked(p, "particle id")?;
        t += &format!("particle = {p}\nrow = {}\n", list(row));
    }
    Ok(t)
}

fn chain_text(c: &PosteriorChain) -> String {
    let mut t = format!("chain_index = {}\nchain_seed = {}\n", c.chain_index, c.seed);
    for (k, v) in mcmc_pairs(&c.config) {
        t += &format!("{k} = {v}\n");
    }
    t
}

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_text(b: &mut Vec<u8>, s: &str) {
    put_u32(b, s.len() as u32);
    b.extend_from_slice(s.as_bytes());
}

pub fn encode_posterior(post: &Posterior) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    put_u32(&mut b, VERSION);
    put_text(&mut b, &header_text(&post.context)?);
    put_u32(&mut b, post.chains.len() as u32);
    for c in &post.chains {
        b.push(b'C');
        put_text(&mut b, &chain_text(c));
        put_u64(&mut b, c.draws.len() as u64);
        for d in &c.draws {
            b.push(b'D');
            put_u64(&mut b, d.iteration as u64);
            let s = &d.state;
            for v in [s.noise.sigma2, s.noise.phi_d, s.noise.phi_t, s.tau2, s.log_post] {
                b.extend_from_slice(&v.to_le_bytes());
            }
            put_text(&mut b, &s.tree.to_string());
        }
        b.push(b'A');
        for arr in [&c.acceptance.proposed, &c.acceptance.accepted, &c.acceptance.failed] {
            for &v in arr.iter() {
                put_u64(&mut b, v);
            }
        }
    }
    b.push(b'E');
    Ok(b)
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn err(&self, m: impl Into<String>) -> Error {
        Error::ChainFormat { path: self.path.to_path_buf(), message: format!("{} (byte {})", m.into(), self.pos) }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.b.len() - self.pos < n {
            return Err(self.err("file ends early"));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn text(&mut self) -> Result<&'a str> {
        let n = self.u32()? as usize;
        let s = self.take(n)?;
        std::str::from_utf8(s).map_err(|_| self.err("text block is not UTF-8"))
    }

    fn tag(&mut self, want: u8) -> Result<()> {
        let got = self.u8()?;
        if got != want {
            return Err(self.err(format!("expected record '{}', found byte {got}", want as char)));
        }
        Ok(())
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| x.parse::<f64>().map_err(|_| format!("'{x}' is not a number"))).collect()
}

fn parse_header(text: &str, path: &Path) -> Result<ModelContext> {
    let bad = |m: String| Error::ChainFormat { path: path.to_path_buf(), message: format!("header: {m}") };
    let mut spline = SplineSettings::default();
    let mut distance = DistanceMode::Index;
    let (mut dose, mut time) = (None, None);
    let (mut names, mut logs, mut particles, mut rows) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut format_ok = false;
    for (_, k, v) in kv_lines(text, path)? {
        let knots = |v: &str| -> std::result::Result<KnotPlacement, String> {
            if v == "all" {
                Ok(KnotPlacement::EveryGridPoint)
            } else {
                v.parse().map(KnotPlacement::Uniform).map_err(|_| format!("bad knots '{v}'"))
            }
        };
        let num = |v: &str| v.parse::<usize>().map_err(|_| format!("{k}: '{v}' is not a count"));
        let r: std::result::Result<(), String> = (|| {
            match k.as_str() {
                "format" => format_ok = v == "dosetree-posterior",
                "dose_order" => spline.dose.order = num(&v)?,
                "time_order" => spline.time.order = num(&v)?,
                "dose_knots" => spline.dose.knots = knots(&v)?,
                "time_knots" => spline.time.knots = knots(&v)?,
                "spline_scale" => spline.scale = if v == "raw" { CoordinateScale::Raw } else { CoordinateScale::Index },
                "eta" => spline.eta = v.parse().map_err(|_| format!("bad eta '{v}'"))?,
                "distance" => distance = if v == "raw" { DistanceMode::Raw } else { DistanceMode::Index },
                "dose" => dose = Some(parse_list(&v)?),
                "time" => time = Some(parse_list(&v)?),
                "covariate" => names.push(v.clone()),
                "log_scale" => logs.push(v == "true"),
                "particle" => particles.push(v.clone()),
                "row" => rows.push(parse_list(&v)?),
                _ => return Err(format!("unknown key '{k}'")),
            }
            Ok(())
        })();
        r.map_err(bad)?;
    }
    if !format_ok {
        return Err(bad("not a posterior file".into()));
    }
    if names.len() != logs.len() || particles.len() != rows.len() || rows.iter().any(|r| r.len() != names.len()) {
        return Err(bad("covariate table is inconsistent".into()));
    }
    let dose = Grid1D::new(dose.ok_or_else(|| bad("no dose grid".into()))?)?;
    let time = time.map(Grid1D::new).transpose()?;
    Ok(ModelContext { spline, distance, dose, time, particles, covariate_names: names, log_scale: logs, covariates: rows })
}

fn parse_chain(text: &str, path: &Path) -> Result<(usize, u64, McmcConfig)> {
    let bad = |m: String| Error::ChainFormat { path: path.to_path_buf(), message: format!("chain header: {m}") };
    let mut config = McmcConfig::default();
    let (mut idx, mut seed) = (None, None);
    for (_, k, v) in kv_lines(text, path)? {
        match k.as_str() {
            "chain_index" => idx = Some(v.parse().map_err(|_| bad(format!("bad chain_index '{v}'")))?),
            "chain_seed" => seed = Some(v.parse().map_err(|_| bad(format!("bad chain_seed '{v}'")))?),
            _ => {
                if !set_mcmc_key(&mut config, &k, &v).map_err(bad)? {
                    return Err(bad(format!("unknown key '{k}'")));
                }
            }
        }
    }
    Ok((idx.ok_or_else(|| bad("no chain_index".into()))?, seed.ok_or_else(|| bad("no chain_seed".into()))?, config))
}

pub fn decode_posterior(bytes: &[u8], path: &Path) -> Result<Posterior> {
    let mut c = Cursor { b: bytes, pos: 0, path };
    if c.take(8).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::ChainFormat { path: path.to_path_buf(), message: "not a chain file (bad magic)".into() });
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(c.err(format!("format version {version}, this build reads version {VERSION}")));
    }
    let context = parse_header(c.text()?, path)?;
    let n_chains = c.u32()? as usize;
    let mut chains = Vec::with_capacity(n_chains);
    for _ in 0..n_chains {
        c.tag(b'C')?;
        let (chain_index, seed, config) = parse_chain(c.text()?, path)?;
        let n = c.u64()? as usize;
        let mut draws = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            c.tag(b'D')?;
            let iteration = c.u64()? as usize;
            let (sigma2, phi_d, phi_t, tau2, log_post) = (c.f64()?, c.f64()?, c.f64()?, c.f64()?, c.f64()?);
            let tree: Tree = c.text()?.parse().map_err(|e| c.err(format!("tree: {e}")))?;
            draws.push(Draw { iteration, state: ChainState { tree, noise: NoiseModel { sigma2, phi_d, phi_t }, tau2, log_post } });
        }
        c.tag(b'A')?;
        let mut acceptance = AcceptanceTable::default();
        for arr in [&mut acceptance.proposed, &mut acceptance.accepted, &mut acceptance.failed] {
            for v in arr.iter_mut() {
                *v = c.u64()?;
            }
        }
        chains.push(PosteriorChain { chain_index, seed, config, draws, acceptance });
    }
    c.tag(b'E')?;
    if c.pos != bytes.len() {
        return Err(c.err("trailing bytes after end record"));
    }
    Ok(Posterior { context, chains })
}

pub fn save_posterior(post: &Posterior, path: &Path) -> Result<()> {
    let bytes = encode_posterior(post)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_posterior(path: &Path) -> Result<Posterior> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_posterior(&bytes, path)
}
