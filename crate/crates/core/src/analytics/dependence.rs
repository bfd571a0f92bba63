//! Partial dependence of the mean response on one or two covariates.
//!
//! For a covariate value `s`, every training particle's covariate `j` is
//! replaced by `s`, the particle is routed through the tree, and the leaf
//! mean responses are averaged over particles, then over posterior draws.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sampler::{Draw, ModelContext, Posterior};

/// Values of a partial dependence function. For one variable `values` is
/// indexed `[s][cell]` over the grid cells; for two variables it is
/// `[s1 * n2 + s2][point]` at the requested evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialDependence {
    pub vars: Vec<usize>,
    pub grids: Vec<Vec<f64>>,
    /// `(dose, time)` of each column of `values`.
    pub points: Vec<(f64, Option<f64>)>,
    pub values: Vec<Vec<f64>>,
}

/// Default covariate grid: `n` points over the observed range, equispaced
/// or (for log-scale covariates) log-spaced.
pub fn default_grid(context: &ModelContext, var: usize, n: usize) -> Result<Vec<f64>> {
    if var >= context.n_covariates() {
        return Err(Error::invalid(format!("no covariate with index {var}")));
    }
    if n < 2 {
        return Err(Error::invalid("a covariate grid needs at least 2 points"));
    }
    let (lo, hi) = context.covariate_ranges()[var];
    let t = |k: usize| k as f64 / (n - 1) as f64;
    Ok(if context.log_scale[var] {
        (0..n).map(|k| (lo.ln() + t(k) * (hi.ln() - lo.ln())).exp()).collect()
    } else {
        (0..n).map(|k| lo + t(k) * (hi - lo)).collect()
    })
}

/// Design rows at arbitrary `(dose, time)` points inside the grids, or at
/// all grid cells when `points` is `None`.
fn point_design(context: &ModelContext, points: Option<&[(f64, Option<f64>)]>) -> Result<(DMatrix<f64>, Vec<(f64, Option<f64>)>)> {
    let system = context.system()?;
    match points {
        None => {
            let pts = context
                .dose
                .values()
                .iter()
                .flat_map(|&d| match &context.time {
                    None => vec![(d, None)],
                    Some(t) => t.values().iter().map(|&tt| (d, Some(tt))).collect(),
                })
                .collect();
            Ok((crate::basis::design_matrix(&system), pts))
        }
        Some(pts) => {
            if pts.is_empty() {
                return Err(Error::invalid("no evaluation points"));
            }
            let rows = pts
                .iter()
                .map(|&(d, t)| {
                    system.design_row(d, t).map_err(|_| {
                        Error::invalid(format!(
                            "evaluation point dose={d}{} is outside the fitted grid",
                            t.map_or(String::new(), |t| format!(", time={t}"))
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let m = system.n_coeffs();
            Ok((DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]), pts.to_vec()))
        }
    }
}

fn leaf_profiles(draw: &Draw, design: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    draw.state
        .tree
        .leaf_coeffs()
        .ok_or_else(|| Error::invalid("posterior draw has a leaf without coefficients"))?
        .into_iter()
        .map(|c| Ok(design * DVector::from_column_slice(c)))
        .collect()
}

/// Average over draws of `sum_leaves (share of particles in leaf) * leaf
/// profile`, for each substituted covariate setting. Leaf shares are
/// accumulated as counts so an unused covariate yields bit-identical
/// values across the grid.
fn pd_core(
    post: &Posterior,
    design: &DMatrix<f64>,
    settings: &[Vec<(usize, f64)>],
) -> Result<Vec<Vec<f64>>> {
    let rows = &post.context.covariates;
    let n_pts = design.nrows();
    let mut acc = vec![vec![0.0; n_pts]; settings.len()];
    let mut n_draws = 0usize;
    let mut x = vec![0.0; post.context.n_covariates()];
    for draw in post.draws() {
        let prof = leaf_profiles(draw, design)?;
        let mut counts = vec![0usize; prof.len()];
        for (s, subs) in settings.iter().enumerate() {
            counts.iter_mut().for_each(|c| *c = 0);
            for r in rows {
                x.copy_from_slice(r);
                for &(j, v) in subs {
                    x[j] = v;
                }
                counts[draw.state.tree.assign_leaf(&x)] += 1;
            }
            for (l, &c) in counts.iter().enumerate() {
                if c > 0 {
                    let w = c as f64 / rows.len() as f64;
                    for (a, p) in acc[s].iter_mut().zip(prof[l].iter()) {
                        *a += w * p;
                    }
                }
            }
        }
        n_draws += 1;
    }
    if n_draws == 0 {
        return Err(Error::invalid("posterior has no draws"));
    }
    for row in acc.iter_mut() {
        row.iter_mut().for_each(|v| *v /= n_draws as f64);
    }
    Ok(acc)
}

/// One-variable partial dependence at every grid cell (or at `points`).
pub fn partial_dependence(
    post: &Posterior,
    var: usize,
    grid: &[f64],
    points: Option<&[(f64, Option<f64>)]>,
) -> Result<PartialDependence> {
    if var >= post.context.n_covariates() {
        return Err(Error::invalid(format!("no covariate with index {var}")));
    }
    if grid.is_empty() {
        return Err(Error::invalid("empty covariate grid"));
    }
    let (design, pts) = point_design(&post.context, points)?;
    let settings: Vec<Vec<(usize, f64)>> = grid.iter().map(|&s| vec![(var, s)]).collect();
    Ok(PartialDependence { vars: vec![var], grids: vec![grid.to_vec()], points: pts, values: pd_core(post, &design, &settings)? })
}

/// Joint partial dependence on two covariates at given evaluation points.
pub fn partial_dependence_2var(
    post: &Posterior,
    vars: (usize, usize),
    grids: (&[f64], &[f64]),
    points: &[(f64, Option<f64>)],
) -> Result<PartialDependence> {
    let p = post.context.n_covariates();
    if vars.0 >= p || vars.1 >= p {
        return Err(Error::invalid("covariate index out of range"));
    }
    if grids.0.is_empty() || grids.1.is_empty() {
        return Err(Error::invalid("empty covariate grid"));
    }
    let (design, pts) = point_design(&post.context, Some(points))?;
    let mut settings = Vec::with_capacity(grids.0.len() * grids.1.len());
    for &a in grids.0 {
        for &b in grids.1 {
            settings.push(vec![(vars.0, a), (vars.1, b)]);
        }
    }
    Ok(PartialDependence {
        vars: vec![vars.0, vars.1],
        grids: vec![grids.0.to_vec(), grids.1.to_vec()],
        points: pts,
        values: pd_core(post, &design, &settings)?,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::basis::{Grid1D, SplineSettings};
    use crate::likelihood::{DistanceMode, NoiseModel};
    use crate::sampler::{ChainState, McmcConfig, PosteriorChain};
    use crate::tree::{Node, SplitRule, Tree};

    /// Posterior of fixed trees on 2 covariates; each leaf is a constant
    /// curve (all coefficients equal, partition of unity).
    pub(crate) fn fixed_posterior(trees: Vec<(Tree, Vec<f64>)>, covariates: Vec<Vec<f64>>) -> Posterior {
        let p = covariates[0].len();
        let context = ModelContext {
            spline: SplineSettings::default(),
            distance: DistanceMode::Index,
            dose: Grid1D::index(5).unwrap(),
            time: None,
            particles: (0..covariates.len()).map(|i| format!("p{i}")).collect(),
            covariate_names: (0..p).map(|j| format!("x{j}")).collect(),
            log_scale: vec![false; p],
            covariates,
        };
        let m = context.system().unwrap().n_coeffs();
        let draws = trees
            .into_iter()
            .enumerate()
            .map(|(k, (mut tree, levels))| {
                tree.set_leaf_coeffs(levels.iter().map(|&v| vec![v; m]).collect()).unwrap();
                crate::sampler::Draw {
                    iteration: k + 1,
                    state: ChainState { tree, noise: NoiseModel { sigma2: 1.0, phi_d: 0.0, phi_t: 0.0 }, tau2: 1.0, log_post: 0.0 },
                }
            })
            .collect();
        Posterior {
            context,
            chains: vec![PosteriorChain { chain_index: 0, seed: 0, config: McmcConfig::default(), draws, acceptance: Default::default() }],
        }
    }

    fn grid_rows() -> Vec<Vec<f64>> {
        (0..10).map(|i| vec![i as f64 / 9.0, ((i * 7) % 10) as f64 / 9.0]).collect()
    }

    #[test]
    fn unused_variable_is_exactly_flat() {
        let t = Tree::from_root(Node::split(SplitRule::new(0, 0.4), Node::leaf(), Node::leaf()));
        let post = fixed_posterior(vec![(t.clone(), vec![1.0, 3.0]), (t, vec![0.5, 2.0])], grid_rows());
        let g = default_grid(&post.context, 1, 50).unwrap();
        let pd = partial_dependence(&post, 1, &g, None).unwrap();
        for row in &pd.values[1..] {
            assert_eq!(row, &pd.values[0]);
        }
    }

    #[test]
    fn single_split_gives_a_step() {
        let t = Tree::from_root(Node::split(SplitRule::new(0, 0.4), Node::leaf(), Node::leaf()));
        let post = fixed_posterior(vec![(t, vec![1.0, 3.0])], grid_rows());
        let pd = partial_dependence(&post, 0, &[0.0, 0.2, 0.4, 0.41, 0.9], None).unwrap();
        let lv: Vec<f64> = pd.values.iter().map(|r| r[2]).collect();
        for (got, want) in lv.iter().zip([1.0, 1.0, 1.0, 3.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn two_variable_diagonal_and_additivity() {
        let t = Tree::from_root(Node::split(
            SplitRule::new(0, 0.4),
            Node::split(SplitRule::new(1, 0.5), Node::leaf(), Node::leaf()),
            Node::split(SplitRule::new(1, 0.5), Node::leaf(), Node::leaf()),
        ));
        // additive levels: a(x0) + b(x1) with a in {0, 2}, b in {0, 1}
        let post = fixed_posterior(vec![(t, vec![0.0, 1.0, 2.0, 3.0])], grid_rows());
        let g = [0.1, 0.45, 0.8];
        let pt = [(2.0, None)];
        let pd2 = partial_dependence_2var(&post, (0, 1), (&g, &g), &pt).unwrap();
        let pd0 = partial_dependence(&post, 0, &g, Some(&pt)).unwrap();
        let pd1 = partial_dependence(&post, 1, &g, Some(&pt)).unwrap();
        let c = pd2.values[0][0] - pd0.values[0][0] - pd1.values[0][0];
        for a in 0..3 {
            for b in 0..3 {
                let v = pd2.values[a * 3 + b][0];
                assert!((v - pd0.values[a][0] - pd1.values[b][0] - c).abs() < 1e-12);
            }
        }
        let same = partial_dependence_2var(&post, (0, 0), (&g, &g), &pt).unwrap();
        for a in 0..3 {
            assert!((same.values[a * 3 + a][0] - pd0.values[a][0]).abs() < 1e-12);
        }
        assert!(partial_dependence(&post, 0, &g, Some(&[(9.0, None)])).is_err());
    }

    #[test]
    fn no_split_is_constant() {
        let post = fixed_posterior(vec![(Tree::root_only(), vec![2.5])], grid_rows());
        let g = [0.0, 0.5, 1.0];
        let pd = partial_dependence_2var(&post, (0, 1), (&g, &g), &[(1.0, None)]).unwrap();
        assert!(pd.values.iter().all(|r| (r[0] - 2.5).abs() < 1e-12));
    }
}
