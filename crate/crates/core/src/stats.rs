//! Rank statistics, standardized two-predictor least squares, and the
//! single-image stability resampler.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelSummary, Vector, MIN_EXEMPLARS};
use crate::prototype::{average_vector, typicality_scores, CategoryInputs, PrototypeStrategy};

/// `|corr(x1, x2)|` at or above this is treated as collinear.
pub const COLLINEARITY_LIMIT: f64 = 1.0 - 1e-10;

/// Smallest sample a two-predictor fit accepts (2 slopes + intercept + 1 dof).
pub const MIN_FIT_OBSERVATIONS: usize = 4;

/// 1-based fractional ranks; ties share the mean of the positions they span.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector(Vec<f64>);

impl RankVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn fractional_ranks(xs: &[f64]) -> Result<RankVector> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(Ordering::Equal));

    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end, mean = (start + 1 + end) / 2
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    Ok(RankVector(ranks))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson product-moment correlation, clamped to `[-1, 1]`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewObservations {
            found: xs.len(),
            required: 2,
        });
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho as Pearson correlation over fractional ranks, which is the
/// tie-correct form.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < MIN_EXEMPLARS {
        return Err(Error::TooFewObservations {
            found: xs.len(),
            required: MIN_EXEMPLARS,
        });
    }
    let rx = fractional_ranks(xs)?;
    let ry = fractional_ranks(ys)?;
    pearson(rx.as_slice(), ry.as_slice())
}

/// Z-scores using the sample (n-1) standard deviation.
pub fn standardize(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.len() < 2 {
        return Err(Error::TooFewObservations {
            found: xs.len(),
            required: 2,
        });
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    if var == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sd = var.sqrt();
    Ok(xs.iter().map(|x| (x - m) / sd).collect())
}

/// Result of [`ols2_standardized`]. Coefficients are standardized betas.
#[derive(Debug, Clone, PartialEq)]
pub struct Ols2Fit {
    pub beta1: f64,
    pub beta2: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standardized fitted values, in input order.
    pub fitted: Vec<f64>,
}

/// Least squares of standardized `y` on standardized `x1` and `x2`.
///
/// With every variable z-scored the normal equations reduce to the
/// predictor correlation matrix: `[[1, r12], [r12, 1]] b = [r1y, r2y]`, which
/// is inverted in closed form.
pub fn ols2_standardized(y: &[f64], x1: &[f64], x2: &[f64]) -> Result<Ols2Fit> {
    for other in [x1.len(), x2.len()] {
        if other != y.len() {
            return Err(Error::LengthMismatch {
                left: y.len(),
                right: other,
            });
        }
    }
    if y.len() < MIN_FIT_OBSERVATIONS {
        return Err(Error::TooFewObservations {
            found: y.len(),
            required: MIN_FIT_OBSERVATIONS,
        });
    }
    let zy = standardize(y)?;
    let z1 = standardize(x1)?;
    let z2 = standardize(x2)?;
    let dof = (y.len() - 1) as f64;
    let corr = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / dof;

    let r12 = corr(&z1, &z2);
    if r12.abs() >= COLLINEARITY_LIMIT {
        return Err(Error::CollinearPredictors {
            correlation: r12.abs(),
        });
    }
    let r1y = corr(&z1, &zy);
    let r2y = corr(&z2, &zy);
    let det = 1.0 - r12 * r12;
    let beta1 = (r1y - r12 * r2y) / det;
    let beta2 = (r2y - r12 * r1y) / det;
    let intercept = mean(&zy) - beta1 * mean(&z1) - beta2 * mean(&z2);

    let fitted: Vec<f64> = z1
        .iter()
        .zip(&z2)
        .map(|(a, b)| intercept + beta1 * a + beta2 * b)
        .collect();
    let ss_res: f64 = zy.iter().zip(&fitted).map(|(o, f)| (o - f).powi(2)).sum();
    let ss_tot: f64 = zy.iter().map(|o| o.powi(2)).sum();
    let r_squared = (1.0 - ss_res / ss_tot).clamp(0.0, 1.0);

    Ok(Ols2Fit {
        beta1,
        beta2,
        intercept,
        r_squared,
        fitted,
    })
}

/// Mean and sample standard deviation of per-category rhos. A single value
/// has standard deviation 0.
pub fn summarize(model_id: &str, rhos: &[f64]) -> Result<ModelSummary> {
    if rhos.is_empty() {
        return Err(Error::EmptyInput);
    }
    let m = mean(rhos);
    let stdev = if rhos.len() < 2 {
        0.0
    } else {
        (rhos.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (rhos.len() - 1) as f64).sqrt()
    };
    Ok(ModelSummary {
        model_id: model_id.to_owned(),
        mean_rho: m,
        stdev_rho: stdev,
        n_categories: rhos.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub trials: usize,
    pub rhos: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub multi_image_rho: f64,
    pub seed: u64,
}

/// Deterministic RNG for one stability trial. Each trial owns a ChaCha
/// stream, so its draws do not depend on which worker runs it or when.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn mean_prototype_rho(exemplars: BTreeMap<String, Vector>, human: &[f64]) -> Result<f64> {
    let inputs = CategoryInputs::new("").with_exemplars(exemplars);
    let scores = typicality_scores(PrototypeStrategy::MeanOfExemplars, &inputs)?;
    let predicted: Vec<f64> = scores.scores.values().copied().collect();
    spearman(&predicted, human)
}

/// Compares the averaged-image rho against rhos obtained when each exemplar
/// is represented by one randomly drawn image.
///
/// `images` and `ratings` are keyed by exemplar; only exemplars present in
/// both take part.
pub fn single_image_stability(
    images: &BTreeMap<String, Vec<Vector>>,
    ratings: &BTreeMap<String, f64>,
    trials: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if trials == 0 {
        return Err(Error::TooFewObservations {
            found: 0,
            required: 1,
        });
    }
    let pool: Vec<(&String, &Vec<Vector>, f64)> = images
        .iter()
        .filter_map(|(name, imgs)| ratings.get(name).map(|r| (name, imgs, *r)))
        .collect();
    if let Some((name, _, _)) = pool.iter().find(|(_, imgs, _)| imgs.is_empty()) {
        return Err(Error::NoImages {
            exemplar: (*name).clone(),
        });
    }
    if pool.len() < MIN_EXEMPLARS {
        return Err(Error::TooFewExemplars {
            category: String::new(),
            found: pool.len(),
            required: MIN_EXEMPLARS,
        });
    }
    let human: Vec<f64> = pool.iter().map(|(_, _, r)| *r).collect();

    let averaged = pool
        .iter()
        .map(|(name, imgs, _)| Ok(((*name).clone(), average_vector(imgs.iter())?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let multi_image_rho = mean_prototype_rho(averaged, &human)?;

    let rhos = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial as u64);
            let picked: BTreeMap<String, Vector> = pool
                .iter()
                .map(|(name, imgs, _)| {
                    (
                        (*name).clone(),
                        imgs[rng.random_range(0..imgs.len())].clone(),
                    )
                })
                .collect();
            mean_prototype_rho(picked, &human)
        })
        .collect::<Result<Vec<f64>>>()?;

    let min = rhos.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rhos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // keep mean inside [min, max] even when every trial is identical
    let mean = mean(&rhos).clamp(min, max);
    Ok(StabilityReport {
        trials,
        rhos,
        min,
        max,
        mean,
        multi_image_rho,
        seed,
    })
}
