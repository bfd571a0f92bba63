//! Convergence diagnostics: split R-hat and effective sample size.

use super::{ChainState, Posterior};
use crate::tree::MoveKind;

/// Effective sample size of one trace, using Geyer's initial monotone
/// positive sequence of autocorrelation pair sums.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var);
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev);
        prev = pair;
        sum += pair;
        k += 1;
    }
    // sum covers rho(0) = 1, so tau = 2 * sum - 1
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

/// Split R-hat over chains: each chain is halved and the classic
/// between/within variance ratio is taken over the halves.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves = Vec::new();
    for c in chains {
        let h = c.len() / 2;
        if h >= 2 {
            halves.push(&c[..h]);
            halves.push(&c[c.len() - h..]);
        }
    }
    let m = halves.len();
    if m < 2 {
        return f64::NAN;
    }
    let n = halves.iter().map(|h| h.len()).min().unwrap_or(0) as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / h.len() as f64).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = n * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (h.len() as f64 - 1.0))
        .sum::<f64>()
        / m as f64;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Per-parameter diagnostics of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDiagnostics {
    /// `(name, posterior mean, split R-hat, total ESS)`.
    pub parameters: Vec<(String, f64, f64, f64)>,
    /// `(move, proposed, accepted, failed, rate)`.
    pub acceptance: Vec<(String, u64, u64, u64, f64)>,
}

impl ChainDiagnostics {
    pub fn from_posterior(post: &Posterior) -> Self {
        let mut quantities: Vec<(&str, fn(&ChainState) -> f64)> = vec![
            ("sigma2", |s| s.noise.sigma2),
            ("tau2", |s| s.tau2),
            ("phi_d", |s| s.noise.phi_d),
        ];
        if post.context.time.is_some() {
            quantities.push(("phi_t", |s| s.noise.phi_t));
        }
        quantities.push(("n_leaves", |s| s.tree.n_leaves() as f64));
        quantities.push(("log_post", |s| s.log_post));
        let parameters = quantities
            .into_iter()
            .map(|(name, f)| {
                let traces: Vec<Vec<f64>> = post.chains.iter().map(|c| c.trace(f)).collect();
                let all: Vec<f64> = traces.iter().flatten().copied().collect();
                let mean = all.iter().sum::<f64>() / all.len().max(1) as f64;
                let ess = traces.iter().map(|t| effective_sample_size(t)).sum();
                (name.to_string(), mean, split_rhat(&traces), ess)
            })
            .collect();
        let acc = post.acceptance();
        let acceptance = MoveKind::ALL
            .iter()
            .map(|&k| {
                let i = k.index();
                (k.name().to_string(), acc.proposed[i], acc.accepted[i], acc.failed[i], acc.rate(k))
            })
            .collect();
        Self { parameters, acceptance }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ar1(n: usize, rho: f64, shift: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                let e: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                x = rho * x + e;
                x + shift
            })
            .collect()
    }

    #[test]
    fn ess_of_white_noise_and_ar1() {
        let white = ar1(20_000, 0.0, 0.0, 1);
        let e = effective_sample_size(&white);
        assert!((e / 20_000.0 - 1.0).abs() < 0.1, "{e}");
        // AR(1): n (1 - rho) / (1 + rho)
        let sticky = ar1(50_000, 0.8, 0.0, 2);
        let e = effective_sample_size(&sticky);
        let expect = 50_000.0 * 0.2 / 1.8;
        assert!((e / expect - 1.0).abs() < 0.2, "{e} vs {expect}");
    }

    #[test]
    fn rhat_detects_disagreeing_chains() {
        let same: Vec<Vec<f64>> = (0..4).map(|s| ar1(2000, 0.5, 0.0, s)).collect();
        assert!((split_rhat(&same) - 1.0).abs() < 0.02);
        let mut apart = same.clone();
        apart[0] = ar1(2000, 0.5, 3.0, 9);
        assert!(split_rhat(&apart) > 1.2);
    }
}
