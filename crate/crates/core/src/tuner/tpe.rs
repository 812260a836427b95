//! Tree-structured Parzen Estimator suggestions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::space::{Dimension, ParamSpace};
use super::{Trial, TunerConfig};
use crate::error::Result;
use crate::params::ParamMap;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Mixture of Gaussians truncated to `[low, high]`, one kernel per
/// observation plus a broad prior kernel at the centre of the range.
/// Bandwidths follow the neighbour-gap rule: each kernel's width is the
/// larger gap to its sorted neighbours, clipped to
/// `[range / min(100, n + 1), range]`.
#[derive(Debug, Clone)]
pub(crate) struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    log_norm: Vec<f64>,
    low: f64,
    high: f64,
}

impl Parzen {
    pub(crate) fn fit(obs: &[f64], low: f64, high: f64) -> Self {
        let range = high - low;
        let prior_mu = low + range / 2.0;
        let mut pts: Vec<(f64, bool)> = obs.iter().map(|&x| (x.clamp(low, high), false)).collect();
        pts.push((prior_mu, true));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = pts.len();
        let min_sigma = range / (100.0f64).min(n as f64);
        let mut mus = Vec::with_capacity(n);
        let mut sigmas = Vec::with_capacity(n);
        for i in 0..n {
            let (mu, is_prior) = pts[i];
            let left = if i == 0 { mu - low } else { mu - pts[i - 1].0 };
            let right = if i + 1 == n { high - mu } else { pts[i + 1].0 - mu };
            let sigma = if is_prior {
                range
            } else {
                left.max(right).clamp(min_sigma, range)
            };
            mus.push(mu);
            sigmas.push(sigma);
        }
        let log_norm = mus
            .iter()
            .zip(&sigmas)
            .map(|(&mu, &s)| {
                let z = normal_cdf((high - mu) / s) - normal_cdf((low - mu) / s);
                z.max(1e-300).ln() + s.ln() + LN_SQRT_2PI + (n as f64).ln()
            })
            .collect();
        Self {
            mus,
            sigmas,
            log_norm,
            low,
            high,
        }
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let k = rng.random_range(0..self.mus.len());
        for _ in 0..64 {
            let z: f64 = rng.sample(StandardNormal);
            let x = self.mus[k] + self.sigmas[k] * z;
            if (self.low..=self.high).contains(&x) {
                return x;
            }
        }
        self.mus[k]
    }

    pub(crate) fn log_density(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .mus
            .iter()
            .zip(&self.sigmas)
            .zip(&self.log_norm)
            .map(|((&mu, &s), &ln)| {
                let z = (x - mu) / s;
                -0.5 * z * z - ln
            })
            .collect();
        log_sum_exp(&terms)
    }
}

/// Smoothed category frequencies (one pseudo-count per choice).
#[derive(Debug, Clone)]
pub(crate) struct Categorical {
    weights: Vec<f64>,
}

impl Categorical {
    fn fit(obs: &[f64], n_choices: usize) -> Self {
        let mut weights = vec![1.0; n_choices];
        for &x in obs {
            weights[(x as usize).min(n_choices - 1)] += 1.0;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { weights }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let mut u: f64 = rng.random();
        for (i, w) in self.weights.iter().enumerate() {
            if u < *w {
                return i as f64;
            }
            u -= w;
        }
        (self.weights.len() - 1) as f64
    }

    fn log_density(&self, x: f64) -> f64 {
        self.weights[x as usize].ln()
    }
}

enum Estimator {
    Numeric(Parzen),
    Cat(Categorical),
}

impl Estimator {
    fn fit(dim: &Dimension, obs: &[f64]) -> Self {
        match dim {
            Dimension::Categorical { choices, .. } => Estimator::Cat(Categorical::fit(obs, choices.len())),
            _ => {
                let (lo, hi) = dim.sampling_bounds();
                Estimator::Numeric(Parzen::fit(obs, lo, hi))
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Estimator::Numeric(p) => p.sample(rng),
            Estimator::Cat(c) => c.sample(rng),
        }
    }

    fn log_density(&self, x: f64) -> f64 {
        match self {
            Estimator::Numeric(p) => p.log_density(x),
            Estimator::Cat(c) => c.log_density(x),
        }
    }
}

/// Propose the next configuration. The first `cfg.n_startup` proposals are
/// uniform draws; after that the history is split at the `gamma` quantile
/// of score into good and bad sets, per-dimension densities are fitted to
/// each, and the best of `n_candidates` draws from the good density under
/// `l(x) / g(x)` is returned. The random stream is keyed by
/// `(cfg.seed, history.len())`.
pub fn suggest(history: &[Trial], space: &ParamSpace, cfg: &TunerConfig) -> Result<ParamMap> {
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(history.len() as u64);

    let usable: Vec<&Trial> = history
        .iter()
        .filter(|t| t.score.is_finite() && space.dims.iter().all(|d| t.params.get(d.name()).and_then(|v| d.to_internal(v)).is_some()))
        .collect();
    if history.len() < cfg.n_startup || usable.len() < 2 {
        return Ok(space.sample_uniform(&mut rng));
    }

    let mut sorted = usable;
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.index.cmp(&b.index)));
    let n = sorted.len();
    let n_good = ((cfg.gamma * n as f64).ceil() as usize).clamp(1, n - 1);
    let (good, bad) = sorted.split_at(n_good);

    let internal = |set: &[&Trial], d: &Dimension| -> Vec<f64> {
        set.iter().map(|t| d.to_internal(&t.params[d.name()]).unwrap()).collect()
    };
    let models: Vec<(Estimator, Estimator)> = space
        .dims
        .iter()
        .map(|d| (Estimator::fit(d, &internal(good, d)), Estimator::fit(d, &internal(bad, d))))
        .collect();

    let mut best: Option<(f64, ParamMap)> = None;
    for _ in 0..cfg.n_candidates.max(1) {
        let mut score = 0.0;
        let mut cand = ParamMap::new();
        for (d, (l, g)) in space.dims.iter().zip(&models) {
            let x = l.sample(&mut rng);
            let v = d.from_internal(x);
            // score integers and categories at the value actually proposed
            let xv = d.to_internal(&v).unwrap_or(x);
            score += l.log_density(xv) - g.log_density(xv);
            cand.insert(d.name().to_string(), v);
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, cand));
        }
    }
    Ok(best.map(|(_, c)| c).expect("at least one candidate"))
}
