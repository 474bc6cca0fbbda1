//! Variable selection: weight thresholding and the five selectors built on
//! it (plain optimized ARD weights, data-driven regularisation search,
//! cross-validated aggregation, marginal Wasserstein weights, and the
//! per-dimension linear-MMD top-K baseline).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Error;
use crate::kernel::{gram_matrices, ArdKernelParams};
use crate::matrix::Matrix;
use crate::mmd::power_ratio;
use crate::optimize::{optimize_ard, OptimizeConfig, OptimizeOutcome};
use crate::par::map_indexed;
use crate::report::WeightVector;
use crate::rng::{derive_rng, derive_seed};
use crate::stats::{permutation_test, PermutationTestConfig};
use crate::Result;

/// Gaps smaller than this (after max-normalization) mean no clear
/// separation, so nothing is selected.
const MIN_GAP: f64 = 0.1;

/// Permutation count for the inner candidate-scoring tests; the candidates
/// only need to be ranked, so this stays far below the final test's count.
const INNER_PERMUTATIONS: usize = 100;

/// Search ranges for the regularisation bounds used by the cross-validated
/// aggregation: the upper bound is searched above this boundary, the lower
/// bound below it.
const LAMBDA_BOUNDARY: f64 = 0.01;

/// Regularisation search space.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LambdaSearchSpace {
    pub lower: f64,
    pub upper: f64,
    /// Trials per random search.
    pub n_search: usize,
    /// Grid size between the searched bounds.
    pub n_lambda_grid: usize,
}

impl Default for LambdaSearchSpace {
    fn default() -> Self {
        LambdaSearchSpace {
            lower: 1e-6,
            upper: 2.0,
            n_search: 20,
            n_lambda_grid: 10,
        }
    }
}

impl LambdaSearchSpace {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower >= 0.0 && self.lower < self.upper && self.upper.is_finite()) {
            return Err(Error::invalid("need 0 <= lower < upper"));
        }
        if self.n_search == 0 || self.n_lambda_grid == 0 {
            return Err(Error::invalid("search and grid sizes must be positive"));
        }
        Ok(())
    }
}

/// Output common to all selectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub weights: WeightVector,
    /// Selected variables, 1-based and sorted.
    pub selected: Vec<usize>,
    /// True when the selector accepted the null outright (nonpositive MMD
    /// path); the selection is then empty by construction.
    pub h0_fallback: bool,
    pub diagnostics: BTreeMap<String, String>,
}

impl Selection {
    fn null_accepted(dims: usize, diagnostics: BTreeMap<String, String>) -> Self {
        Selection {
            weights: WeightVector::zeros(dims),
            selected: Vec::new(),
            h0_fallback: true,
            diagnostics,
        }
    }
}

/// Largest-gap thresholding on a nonnegative weight vector (0-based result).
///
/// Weights are rescaled to max 1, sorted descending, and split at the
/// largest gap between adjacent values (ties go to the lowest-valued gap,
/// which keeps selections inclusive). Everything strictly above the gap is
/// selected; a largest gap under 0.1 selects nothing.
pub(crate) fn threshold_indices(weights: &[f64]) -> Vec<usize> {
    let max = weights.iter().copied().fold(0.0f64, f64::max);
    if !(max > 0.0) {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_unstable_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let normalized: Vec<f64> = order.iter().map(|&i| weights[i] / max).collect();

    let mut gap_at = None;
    let mut largest = 0.0;
    for k in 0..normalized.len().saturating_sub(1) {
        let gap = normalized[k] - normalized[k + 1];
        if gap >= largest {
            largest = gap;
            gap_at = Some(k);
        }
    }
    let Some(k) = gap_at else {
        return Vec::new();
    };
    if largest < MIN_GAP {
        return Vec::new();
    }
    let boundary = normalized[k + 1];
    let mut selected: Vec<usize> = order
        .iter()
        .zip(normalized.iter())
        .filter(|(_, &v)| v > boundary)
        .map(|(&i, _)| i)
        .collect();
    selected.sort_unstable();
    selected
}

/// Threshold a weight vector into a 1-based selected set.
pub fn threshold_weights(weights: &WeightVector) -> Vec<usize> {
    threshold_indices(weights.as_slice())
        .into_iter()
        .map(|i| i + 1)
        .collect()
}

fn selection_from_outcome(outcome: OptimizeOutcome, extra: BTreeMap<String, String>) -> Selection {
    let mut diagnostics = extra;
    diagnostics.insert("epochs_run".to_string(), outcome.epochs_run.to_string());
    diagnostics.insert(
        "stop_reason".to_string(),
        outcome.stop_reason.as_str().to_string(),
    );
    if outcome.accepted_null() {
        return Selection::null_accepted(outcome.ard_weights.len(), diagnostics);
    }
    let selected = threshold_indices(&outcome.ard_weights)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    Selection {
        weights: WeightVector::new(outcome.ard_weights).expect("optimizer weights are valid"),
        selected,
        h0_fallback: false,
        diagnostics,
    }
}

/// Optimized ARD weights without regularisation, thresholded.
pub fn select_mmd_vanilla(
    x_train: &Matrix,
    y_train: &Matrix,
    gamma: &[f64],
    config: &OptimizeConfig,
) -> Result<Selection> {
    let outcome = optimize_ard(x_train, y_train, gamma, 0.0, config)?;
    Ok(selection_from_outcome(outcome, BTreeMap::new()))
}

fn log_uniform_candidates(
    lower: f64,
    upper: f64,
    count: usize,
    seed: u64,
    tag: &str,
) -> Vec<f64> {
    let lo = lower.max(1e-12);
    let hi = upper.max(lo);
    let mut rng = derive_rng(seed, tag, 0);
    (0..count)
        .map(|_| {
            if hi <= lo {
                return hi;
            }
            let u: f64 = rng.gen();
            (lo.ln() + u * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}

/// Shared shuffled index split: `ratio` of the rows go to the first part.
fn split_rows(n: usize, ratio: f64, seed: u64, tag: &str) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = derive_rng(seed, tag, 0);
    indices.shuffle(&mut rng);
    let head = (n as f64 * ratio).round() as usize;
    let mut first: Vec<usize> = indices[..head].to_vec();
    let mut second: Vec<usize> = indices[head..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

/// Data-driven regularisation selection.
///
/// The train block is sub-split 80/20 into inner-train and inner-val.
/// Candidate `λ` values are drawn log-uniformly (a seeded stand-in for a
/// Bayesian search); each candidate is scored by
/// `(1 - p_λ) · max(ℓ_val, 0)` where `ℓ_val` is the power ratio of the
/// optimized weights on inner-val and `p_λ` comes from a short permutation
/// test restricted to the candidate's selection. Ties go to the larger `λ`.
///
/// Returns the winning selection and its `λ`. When every candidate selects
/// nothing, the null is accepted and the last candidate's `λ` is reported.
pub fn select_mmd_selection(
    x_train: &Matrix,
    y_train: &Matrix,
    gamma: &[f64],
    space: &LambdaSearchSpace,
    config: &OptimizeConfig,
    seed: u64,
) -> Result<(Selection, f64)> {
    space.validate()?;
    if x_train.rows() != y_train.rows() {
        return Err(Error::invalid("train blocks must have equal sample counts"));
    }
    let n = x_train.rows();
    let (inner_train, inner_val) = split_rows(n, 0.8, seed, "selection-split");
    if inner_train.len() < 2 || inner_val.len() < 2 {
        return Err(Error::invalid(format!(
            "{n} train rows are too few to sub-split 80/20 with at least 2 each"
        )));
    }
    let x_inner = x_train.select_rows(&inner_train);
    let y_inner = y_train.select_rows(&inner_train);
    let x_val = x_train.select_rows(&inner_val);
    let y_val = y_train.select_rows(&inner_val);

    let candidates = log_uniform_candidates(
        space.lower.max(1e-6),
        space.upper,
        space.n_search,
        seed,
        "selection-lambda",
    );

    struct Candidate {
        lambda: f64,
        score: f64,
        outcome: OptimizeOutcome,
        selected: Vec<usize>,
    }

    let evaluated: Vec<Result<Candidate>> = map_indexed(candidates.len(), |trial| {
        let lambda = candidates[trial];
        let outcome = optimize_ard(&x_inner, &y_inner, gamma, lambda, config)?;
        let selected: Vec<usize> = if outcome.accepted_null() {
            Vec::new()
        } else {
            threshold_indices(&outcome.ard_weights)
                .into_iter()
                .map(|i| i + 1)
                .collect()
        };
        let l_val = if outcome.accepted_null() {
            0.0
        } else {
            let params = ArdKernelParams::new(outcome.ard_weights.clone(), gamma.to_vec())?;
            let (kxx, kyy, kxy) = gram_matrices(&params, &x_val, &y_val)?;
            power_ratio(&kxx, &kyy, &kxy)?.ratio
        };
        let p = permutation_test(
            &x_val,
            &y_val,
            &selected,
            &PermutationTestConfig {
                n_permutations: INNER_PERMUTATIONS,
                seed: derive_seed(seed, "selection-inner-test", trial as u64),
                ..PermutationTestConfig::default()
            },
        )?;
        Ok(Candidate {
            lambda,
            score: (1.0 - p) * l_val.max(0.0),
            outcome,
            selected,
        })
    });

    let mut best: Option<Candidate> = None;
    let mut all_empty = true;
    let mut last_lambda = 0.0;
    for result in evaluated {
        let candidate = result?;
        last_lambda = candidate.lambda;
        if !candidate.selected.is_empty() {
            all_empty = false;
        }
        let better = match &best {
            None => true,
            Some(current) => {
                candidate.score > current.score
                    || (candidate.score == current.score && candidate.lambda > current.lambda)
            }
        };
        if better {
            best = Some(candidate);
        }
    }

    if all_empty {
        let mut diagnostics = BTreeMap::new();
        diagnostics.insert("lambda_star".to_string(), format!("{last_lambda}"));
        diagnostics.insert("n_search".to_string(), space.n_search.to_string());
        return Ok((
            Selection::null_accepted(x_train.cols(), diagnostics),
            last_lambda,
        ));
    }

    let best = best.expect("at least one candidate was evaluated");
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("lambda_star".to_string(), format!("{}", best.lambda));
    diagnostics.insert("score".to_string(), format!("{}", best.score));
    diagnostics.insert("n_search".to_string(), space.n_search.to_string());
    let lambda = best.lambda;
    let selection = selection_from_outcome(best.outcome, diagnostics);
    Ok((selection, lambda))
}

/// Count how many variables an optimization with the given `λ` selects.
fn selection_size(
    x: &Matrix,
    y: &Matrix,
    gamma: &[f64],
    lambda: f64,
    config: &OptimizeConfig,
) -> Result<usize> {
    let outcome = optimize_ard(x, y, gamma, lambda, config)?;
    Ok(if outcome.accepted_null() {
        0
    } else {
        threshold_indices(&outcome.ard_weights).len()
    })
}

/// Cross-validated aggregation over a regularisation grid.
///
/// The grid bounds are searched first: the upper bound minimizes the
/// selected-set size over `[0.01, upper]`, the lower bound maximizes it
/// over `[lower, 0.01]` (ties widen the bracket). The weights of every
/// (fold, λ) optimization are max-normalized and averaged — null-accepting
/// runs contribute zero vectors — and the aggregate is thresholded.
pub fn select_mmd_cv_agg(
    x_train: &Matrix,
    y_train: &Matrix,
    gamma: &[f64],
    space: &LambdaSearchSpace,
    n_folds: usize,
    config: &OptimizeConfig,
    seed: u64,
) -> Result<Selection> {
    space.validate()?;
    if n_folds < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    let n = x_train.rows();
    if x_train.rows() != y_train.rows() {
        return Err(Error::invalid("train blocks must have equal sample counts"));
    }
    if n < 2 * n_folds {
        return Err(Error::invalid(format!(
            "{n} train rows cannot support {n_folds} folds"
        )));
    }
    let dims = x_train.cols();

    let boundary = LAMBDA_BOUNDARY.clamp(space.lower.max(1e-12), space.upper);
    let upper_candidates =
        log_uniform_candidates(boundary, space.upper, space.n_search, seed, "cvagg-upper");
    let lower_candidates = log_uniform_candidates(
        space.lower.max(1e-12),
        boundary,
        space.n_search,
        seed,
        "cvagg-lower",
    );

    let upper_sizes: Vec<Result<usize>> = map_indexed(upper_candidates.len(), |i| {
        selection_size(x_train, y_train, gamma, upper_candidates[i], config)
    });
    let mut lambda_upper = upper_candidates[0];
    let mut best_size = usize::MAX;
    for (i, size) in upper_sizes.into_iter().enumerate() {
        let size = size?;
        let lambda = upper_candidates[i];
        if size < best_size || (size == best_size && lambda > lambda_upper) {
            best_size = size;
            lambda_upper = lambda;
        }
    }

    let lower_sizes: Vec<Result<usize>> = map_indexed(lower_candidates.len(), |i| {
        selection_size(x_train, y_train, gamma, lower_candidates[i], config)
    });
    let mut lambda_lower = lower_candidates[0];
    let mut best_count = 0usize;
    let mut first = true;
    for (i, size) in lower_sizes.into_iter().enumerate() {
        let size = size?;
        let lambda = lower_candidates[i];
        if first || size > best_count || (size == best_count && lambda < lambda_lower) {
            best_count = size;
            lambda_lower = lambda;
            first = false;
        }
    }

    let mut diagnostics = BTreeMap::new();
    if lambda_lower > lambda_upper {
        core::mem::swap(&mut lambda_lower, &mut lambda_upper);
        diagnostics.insert("swapped_bounds".to_string(), "true".to_string());
    }
    diagnostics.insert("lambda_lower".to_string(), format!("{lambda_lower}"));
    diagnostics.insert("lambda_upper".to_string(), format!("{lambda_upper}"));

    let grid: Vec<f64> = if space.n_lambda_grid == 1 {
        vec![lambda_lower]
    } else {
        let step = (lambda_upper - lambda_lower) / (space.n_lambda_grid - 1) as f64;
        (0..space.n_lambda_grid)
            .map(|i| lambda_lower + step * i as f64)
            .collect()
    };

    // Shared fold assignment for both series keeps the per-fold sample
    // counts equal.
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = derive_rng(seed, "cvagg-folds", 0);
    order.shuffle(&mut rng);
    let folds: Vec<Vec<usize>> = (0..n_folds)
        .map(|f| {
            let start = f * n / n_folds;
            let end = (f + 1) * n / n_folds;
            let mut fold: Vec<usize> = order[start..end].to_vec();
            fold.sort_unstable();
            fold
        })
        .collect();

    let jobs = n_folds * grid.len();
    let results: Vec<Result<(Vec<f64>, bool)>> = map_indexed(jobs, |job| {
        let fold = job / grid.len();
        let lambda = grid[job % grid.len()];
        let train_rows: Vec<usize> = (0..n).filter(|i| !folds[fold].contains(i)).collect();
        let x_fold = x_train.select_rows(&train_rows);
        let y_fold = y_train.select_rows(&train_rows);
        let outcome = optimize_ard(&x_fold, &y_fold, gamma, lambda, config)?;
        if outcome.accepted_null() {
            Ok((vec![0.0; dims], true))
        } else {
            let normalized = WeightVector::new(outcome.ard_weights)?
                .max_normalized()
                .as_slice()
                .to_vec();
            Ok((normalized, false))
        }
    });

    let mut aggregate = vec![0.0; dims];
    let mut null_runs = 0usize;
    for result in results {
        let (weights, was_null) = result?;
        if was_null {
            null_runs += 1;
        }
        for (slot, w) in aggregate.iter_mut().zip(weights.iter()) {
            *slot += w;
        }
    }
    for slot in aggregate.iter_mut() {
        *slot /= jobs as f64;
    }
    diagnostics.insert("null_runs".to_string(), format!("{null_runs}/{jobs}"));
    diagnostics.insert("n_folds".to_string(), n_folds.to_string());
    diagnostics.insert("grid_size".to_string(), grid.len().to_string());

    if null_runs == jobs {
        return Ok(Selection::null_accepted(dims, diagnostics));
    }
    let selected = threshold_indices(&aggregate)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    Ok(Selection {
        weights: WeightVector::new(aggregate)?,
        selected,
        h0_fallback: false,
        diagnostics,
    })
}

/// Marginal 1-D Wasserstein distance per variable, thresholded.
pub fn select_wasserstein(x_train: &Matrix, y_train: &Matrix) -> Result<Selection> {
    if x_train.cols() != y_train.cols() {
        return Err(Error::invalid("train blocks must share dimensions"));
    }
    if x_train.rows() == 0 || y_train.rows() == 0 {
        return Err(Error::invalid("both train blocks must be nonempty"));
    }
    let dims = x_train.cols();
    let mut weights = Vec::with_capacity(dims);
    let mut ux = Vec::with_capacity(x_train.rows());
    let mut uy = Vec::with_capacity(y_train.rows());
    for d in 0..dims {
        ux.clear();
        uy.clear();
        for i in 0..x_train.rows() {
            ux.push(x_train.get(i, d));
        }
        for i in 0..y_train.rows() {
            uy.push(y_train.get(i, d));
        }
        weights.push(crate::stats::wasserstein1_1d(&ux, &uy)?);
    }
    let selected = threshold_indices(&weights)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    Ok(Selection {
        weights: WeightVector::new(weights)?,
        selected,
        h0_fallback: false,
        diagnostics: BTreeMap::new(),
    })
}

fn median_pairwise_distance(values: &[f64]) -> f64 {
    let n = values.len();
    let mut distances = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            distances.push((values[i] - values[j]).abs());
        }
    }
    distances.sort_unstable_by(f64::total_cmp);
    let k = distances.len();
    let median = if k == 0 {
        0.0
    } else if k % 2 == 1 {
        distances[k / 2]
    } else {
        0.5 * (distances[k / 2 - 1] + distances[k / 2])
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Per-dimension linear-time MMD weights with top-K selection.
///
/// Each dimension gets a Gaussian kernel with the median-heuristic
/// bandwidth of its pooled values; samples are consumed in consecutive
/// pairs, so an odd trailing sample is dropped. The selection is always the
/// `k_top` largest weights (ties to the lower index).
pub fn select_mskernel_lite(x_train: &Matrix, y_train: &Matrix, k_top: usize) -> Result<Selection> {
    let dims = x_train.cols();
    if y_train.cols() != dims {
        return Err(Error::invalid("train blocks must share dimensions"));
    }
    if k_top < 1 || k_top > dims {
        return Err(Error::invalid(format!(
            "k_top must lie in 1..={dims}; got {k_top}"
        )));
    }
    let n = x_train.rows().min(y_train.rows());
    let n_even = n - n % 2;
    if n_even < 2 {
        return Err(Error::invalid("need at least two paired samples"));
    }

    let mut weights = Vec::with_capacity(dims);
    let mut pooled = Vec::with_capacity(2 * n_even);
    for d in 0..dims {
        pooled.clear();
        for i in 0..n_even {
            pooled.push(x_train.get(i, d));
        }
        for i in 0..n_even {
            pooled.push(y_train.get(i, d));
        }
        let bandwidth = median_pairwise_distance(&pooled);
        let two_sq = 2.0 * bandwidth * bandwidth;
        let kernel = |u: f64, v: f64| (-(u - v) * (u - v) / two_sq).exp();

        let mut acc = 0.0;
        let pairs = n_even / 2;
        for p in 0..pairs {
            let (i, j) = (2 * p, 2 * p + 1);
            let (xi, xj) = (x_train.get(i, d), x_train.get(j, d));
            let (yi, yj) = (y_train.get(i, d), y_train.get(j, d));
            acc += kernel(xi, xj) + kernel(yi, yj) - kernel(xi, yj) - kernel(xj, yi);
        }
        weights.push((acc / pairs as f64).max(0.0));
    }

    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_unstable_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut selected: Vec<usize> = order[..k_top].iter().map(|&i| i + 1).collect();
    selected.sort_unstable();
    Ok(Selection {
        weights: WeightVector::new(weights)?,
        selected,
        h0_fallback: false,
        diagnostics: BTreeMap::new(),
    })
}
