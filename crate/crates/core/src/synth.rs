//! Seeded synthetic datasets with known ground truth.
//!
//! Informative features `u_0..u_{m-1}` are uniform on `[0, 1]` and drive a
//! fixed latent response on the transformed (log) target scale:
//!
//! ```text
//! s(u) = 10 sin(π u0 u1) + 20 (u2 − 0.5)² + 10 u3 + 5 u4 + Σ_{j≥5} c_j u_j
//! c_j  = TAIL_COEFFS[(j − 5) mod 5]
//! latent = LATENT_INTERCEPT + LATENT_SCALE · s(u) + class_offset(landcover)
//! ```
//!
//! with `class_offset(cropland) = 0`, `class_offset(grassland) = 0.08` and 0
//! for any other class. Observed targets are `exp(latent + ε) / 100`,
//! `ε ~ N(0, noise_sd²)`, so they are positive and the transformed target is
//! `latent + ε`. Noise features are independent uniforms. Column positions
//! of the informative features are a seeded permutation; their names are
//! reported by [`informative_features`].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{inverse_transform_value, Dataset, FeatureTable, Landcover, TargetVector};
use crate::error::{Error, Result};

pub const LATENT_INTERCEPT: f64 = 4.2;
pub const LATENT_SCALE: f64 = 0.05;
pub const TAIL_COEFFS: [f64; 5] = [5.0, 4.0, 4.0, 3.0, 3.0];
pub const GRASSLAND_OFFSET: f64 = 0.08;

/// Noise level giving a population R² ceiling of about 0.85 for the
/// default 10-informative-feature latent response.
pub const DEFAULT_NOISE_SD: f64 = 0.1166;

/// Stream ids reserved for dataset-level draws; rows use their own index.
const STREAM_COLUMNS: u64 = u64::MAX;
const STREAM_CLASSES: u64 = u64::MAX - 1;
const STREAM_CEILING: u64 = u64::MAX - 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_rows: usize,
    pub n_informative: usize,
    pub n_noise: usize,
    pub noise_sd: f64,
    pub class_mix: BTreeMap<Landcover, f64>,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// 21244 rows of 84 features (10 informative), 13937 cropland and
    /// 7307 grassland rows.
    fn default() -> Self {
        let n = 21244.0;
        Self {
            n_rows: 21244,
            n_informative: 10,
            n_noise: 74,
            noise_sd: DEFAULT_NOISE_SD,
            class_mix: BTreeMap::from([
                (Landcover::Cropland, 13937.0 / n),
                (Landcover::Grassland, 7307.0 / n),
            ]),
            missing_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn n_features(&self) -> usize {
        self.n_informative + self.n_noise
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_rows == 0 {
            return bad("n_rows must be positive".into());
        }
        if self.n_informative < 5 {
            return bad(format!(
                "the latent response needs at least 5 informative features, got {}",
                self.n_informative
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate must lie in [0, 1), got {}", self.missing_rate));
        }
        if self.class_mix.is_empty() {
            return bad("class_mix is empty".into());
        }
        if self.class_mix.values().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return bad("class_mix fractions must be nonnegative".into());
        }
        let total: f64 = self.class_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("class_mix fractions sum to {total}, expected 1"));
        }
        Ok(())
    }

    /// Exact per-class row counts by largest remainder.
    pub fn class_counts(&self) -> Vec<(Landcover, usize)> {
        let n = self.n_rows as f64;
        let mut counts: Vec<(Landcover, usize, f64)> = self
            .class_mix
            .iter()
            .map(|(lc, &p)| {
                let exact = p * n;
                (lc.clone(), exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let assigned: usize = counts.iter().map(|c| c.1).sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].2.total_cmp(&counts[a].2).then(a.cmp(&b)));
        for &i in order.iter().take(self.n_rows.saturating_sub(assigned)) {
            counts[i].1 += 1;
        }
        counts.into_iter().map(|(lc, c, _)| (lc, c)).collect()
    }
}

pub fn class_offset(lc: &Landcover) -> f64 {
    match lc {
        Landcover::Grassland => GRASSLAND_OFFSET,
        _ => 0.0,
    }
}

/// Noiseless latent response (transformed-target units) for the
/// informative feature values of one row.
pub fn latent_response(informative: &[f64], lc: &Landcover) -> f64 {
    let u = informative;
    let mut s = 10.0 * (PI * u[0] * u[1]).sin() + 20.0 * (u[2] - 0.5).powi(2) + 10.0 * u[3] + 5.0 * u[4];
    for (j, &v) in u.iter().enumerate().skip(5) {
        s += TAIL_COEFFS[(j - 5) % TAIL_COEFFS.len()] * v;
    }
    LATENT_INTERCEPT + LATENT_SCALE * s + class_offset(lc)
}

fn column_order(spec: &SynthSpec) -> Vec<usize> {
    // order[k] = table column of generated feature k
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(STREAM_COLUMNS);
    let mut order: Vec<usize> = (0..spec.n_features()).collect();
    order.shuffle(&mut rng);
    order
}

pub fn feature_names(spec: &SynthSpec) -> Vec<String> {
    let width = spec.n_features().saturating_sub(1).to_string().len().max(2);
    (0..spec.n_features()).map(|i| format!("f{i:0width$}")).collect()
}

/// Names of the informative columns, in latent-argument order.
pub fn informative_features(spec: &SynthSpec) -> Vec<String> {
    let names = feature_names(spec);
    let order = column_order(spec);
    order[..spec.n_informative].iter().map(|&c| names[c].clone()).collect()
}

/// A generated dataset together with each row's noiseless latent response.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub latent: Vec<f64>,
}

pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    generate_with_truth(spec).map(|o| o.dataset)
}

pub fn generate_with_truth(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let n_feat = spec.n_features();
    let order = column_order(spec);

    let mut classes: Vec<Landcover> = spec
        .class_counts()
        .into_iter()
        .flat_map(|(lc, c)| std::iter::repeat_n(lc, c))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(STREAM_CLASSES);
    classes.shuffle(&mut rng);

    // Each row draws from its own stream, so row blocks are independent.
    let rows: Vec<(Vec<Option<f64>>, f64, f64)> = (0..spec.n_rows)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(r as u64);
            let generated: Vec<f64> = (0..n_feat).map(|_| rng.random::<f64>()).collect();
            let latent = latent_response(&generated[..spec.n_informative], &classes[r]);
            let eps: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise_sd;
            let mut cells = vec![None; n_feat];
            for (k, &v) in generated.iter().enumerate() {
                cells[order[k]] = Some(v);
            }
            for cell in cells.iter_mut() {
                if rng.random::<f64>() < spec.missing_rate {
                    *cell = None;
                }
            }
            (cells, latent, inverse_transform_value(latent + eps))
        })
        .collect();

    let mut cells = Vec::with_capacity(spec.n_rows * n_feat);
    let mut latent = Vec::with_capacity(spec.n_rows);
    let mut target = Vec::with_capacity(spec.n_rows);
    for (c, l, y) in rows {
        cells.extend(c);
        latent.push(l);
        target.push(y);
    }
    let width = spec.n_rows.saturating_sub(1).to_string().len();
    let ids = (0..spec.n_rows).map(|r| format!("s{r:0width$}")).collect();
    let features = FeatureTable::new(feature_names(spec), cells)?;
    let dataset = Dataset::new(features, TargetVector::original(target)?, classes, Some(ids))?;
    Ok(SynthOutput { dataset, latent })
}

/// Population R² ceiling on the transformed scale:
/// `Var(latent) / (Var(latent) + noise_sd²)`, with `Var(latent)` estimated
/// from `n_samples` fresh draws.
pub fn oracle_r2_ceiling_with_samples(spec: &SynthSpec, n_samples: usize) -> Result<f64> {
    spec.validate()?;
    if spec.noise_sd == 0.0 {
        return Ok(1.0);
    }
    let var = latent_variance(spec, n_samples);
    Ok(var / (var + spec.noise_sd * spec.noise_sd))
}

pub fn oracle_r2_ceiling(spec: &SynthSpec) -> Result<f64> {
    oracle_r2_ceiling_with_samples(spec, 200_000)
}

/// Monte Carlo variance of the noiseless latent response.
pub fn latent_variance(spec: &SynthSpec, n_samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(STREAM_CEILING);
    let mix: Vec<(Landcover, f64)> = spec.class_mix.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let mut u = vec![0.0; spec.n_informative];
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n_samples {
        for v in u.iter_mut() {
            *v = rng.random();
        }
        let mut pick: f64 = rng.random();
        let mut lc = &mix[mix.len() - 1].0;
        for (k, p) in &mix {
            if pick < *p {
                lc = k;
                break;
            }
            pick -= p;
        }
        let x = latent_response(&u, lc);
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    m2 / n_samples.max(1) as f64
}
