//! Distance statistics and the permutation two-sample test.
//!
//! The test statistic is the sliced Wasserstein distance: the average over
//! random unit directions of the 1-D Wasserstein distance between the
//! projected samples.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::matrix::Matrix;
use crate::rng::{derive_rng, derive_seed};
use crate::Result;

/// Candidate projection counts probed by [`choose_projection_count`]:
/// every 10 steps in `[50, 500]`.
const PROJECTION_CANDIDATES: core::ops::RangeInclusive<usize> = 50..=500;
const PROJECTION_CANDIDATE_STEP: usize = 10;
const PROJECTION_PROBE_REPEATS: usize = 5;

/// Which statistic the permutation test uses. Only the sliced Wasserstein
/// distance is implemented; the enum keeps the config self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum TestStatistic {
    #[default]
    SlicedWasserstein,
}

/// Fixed projection count or variance-minimizing automatic choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ProjectionCount {
    Fixed(usize),
    Auto,
}

impl Default for ProjectionCount {
    fn default() -> Self {
        ProjectionCount::Fixed(50)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PermutationTestConfig {
    pub n_permutations: usize,
    pub statistic: TestStatistic,
    pub n_projections: ProjectionCount,
    pub seed: u64,
}

impl Default for PermutationTestConfig {
    fn default() -> Self {
        PermutationTestConfig {
            n_permutations: 500,
            statistic: TestStatistic::SlicedWasserstein,
            n_projections: ProjectionCount::default(),
            seed: 0,
        }
    }
}

/// 1-D Wasserstein distance `∫ |F̂_u - F̂_v|` between empirical
/// distributions.
///
/// Walks the two quantile functions jointly; segment boundaries are tracked
/// in integer units of `1/(n·m)` so no floating-point quantile comparisons
/// are needed. For equal sizes this reduces to the mean absolute difference
/// of the sorted samples.
pub fn wasserstein1_1d(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::invalid("both samples must be nonempty"));
    }
    let mut a = u.to_vec();
    let mut b = v.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    Ok(wasserstein1_sorted(&a, &b))
}

pub(crate) fn wasserstein1_sorted(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as u64;
    let m = b.len() as u64;
    let mut i = 0u64;
    let mut j = 0u64;
    let mut pos = 0u64;
    let mut acc = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        acc += (next - pos) as f64 * (a[i as usize] - b[j as usize]).abs();
        pos = next;
        if next == next_a {
            i += 1;
        }
        if next == next_b {
            j += 1;
        }
    }
    acc / (n * m) as f64
}

fn unit_direction<R: Rng>(dims: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let direction: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return direction.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn draw_directions(dims: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = derive_rng(seed, "sw-directions", 0);
    (0..count).map(|_| unit_direction(dims, &mut rng)).collect()
}

fn project(rows: &Matrix, direction: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for r in 0..rows.rows() {
        let row = rows.row(r);
        let mut dot = 0.0;
        for (a, b) in row.iter().zip(direction.iter()) {
            dot += a * b;
        }
        out.push(dot);
    }
}

/// Sliced Wasserstein distance with directions drawn uniformly from the
/// unit sphere (seeded).
pub fn sliced_wasserstein(x: &Matrix, y: &Matrix, n_projections: usize, seed: u64) -> Result<f64> {
    if x.cols() != y.cols() {
        return Err(Error::invalid("sample dimensions disagree"));
    }
    if n_projections == 0 {
        return Err(Error::invalid("need at least one projection"));
    }
    if x.rows() == 0 || y.rows() == 0 {
        return Err(Error::invalid("both samples must be nonempty"));
    }
    let directions = draw_directions(x.cols(), n_projections, seed);
    let mut px = Vec::with_capacity(x.rows());
    let mut py = Vec::with_capacity(y.rows());
    let mut acc = 0.0;
    for direction in &directions {
        project(x, direction, &mut px);
        project(y, direction, &mut py);
        px.sort_unstable_by(f64::total_cmp);
        py.sort_unstable_by(f64::total_cmp);
        acc += wasserstein1_sorted(&px, &py);
    }
    Ok(acc / n_projections as f64)
}

/// Pick the projection count in `[50, 500]` (step 10) whose five repeated
/// sliced Wasserstein evaluations have the smallest sample variance; ties
/// go to the smaller count.
pub fn choose_projection_count(x: &Matrix, y: &Matrix, seed: u64) -> Result<usize> {
    let mut best_count = 0usize;
    let mut best_variance = f64::INFINITY;
    let mut values = [0.0; PROJECTION_PROBE_REPEATS];
    for count in PROJECTION_CANDIDATES.step_by(PROJECTION_CANDIDATE_STEP) {
        for (rep, slot) in values.iter_mut().enumerate() {
            let probe_seed = derive_seed(
                seed,
                "projection-probe",
                (count * PROJECTION_PROBE_REPEATS + rep) as u64,
            );
            *slot = sliced_wasserstein(x, y, count, probe_seed)?;
        }
        let mean = values.iter().sum::<f64>() / PROJECTION_PROBE_REPEATS as f64;
        let variance = values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (PROJECTION_PROBE_REPEATS - 1) as f64;
        if variance < best_variance {
            best_variance = variance;
            best_count = count;
        }
    }
    Ok(best_count)
}

/// Permutation two-sample test on the variables in `selected` (1-based).
///
/// Non-selected variables are zeroed out in both matrices rather than
/// dropped, keeping the projection dimension constant. The empty selection
/// accepts the null outright with `p = 1.0`. The add-one estimator
/// `(1 + #{s_r >= s_0}) / (1 + R)` never returns 0.
///
/// One direction set, drawn from the config seed, is shared by the observed
/// statistic and all replicates; each replicate derives its own shuffle
/// stream from `(seed, replicate index)`.
pub fn permutation_test(
    x_test: &Matrix,
    y_test: &Matrix,
    selected: &[usize],
    config: &PermutationTestConfig,
) -> Result<f64> {
    if x_test.cols() != y_test.cols() {
        return Err(Error::invalid("test sample dimensions disagree"));
    }
    if config.n_permutations == 0 {
        return Err(Error::invalid("need at least one permutation"));
    }
    if selected.is_empty() {
        return Ok(1.0);
    }
    if x_test.rows() == 0 || y_test.rows() == 0 {
        return Err(Error::invalid("both test samples must be nonempty"));
    }
    let dims = x_test.cols();
    if selected.iter().any(|&s| s < 1 || s > dims) {
        return Err(Error::invalid("selected variables out of range"));
    }
    let keep: Vec<usize> = selected.iter().map(|&s| s - 1).collect();
    let zx = x_test.zero_fill_except(&keep);
    let zy = y_test.zero_fill_except(&keep);

    let n_projections = match config.n_projections {
        ProjectionCount::Fixed(count) => {
            if count == 0 {
                return Err(Error::invalid("need at least one projection"));
            }
            count
        }
        ProjectionCount::Auto => {
            choose_projection_count(&zx, &zy, derive_seed(config.seed, "auto-projections", 0))?
        }
    };

    let n = zx.rows();
    let m = zy.rows();
    let directions = draw_directions(dims, n_projections, derive_seed(config.seed, "perm", 0));

    // Project the pooled rows once per direction; replicates then only
    // regroup the precomputed scalars.
    let mut pooled = vec![0.0; n_projections * (n + m)];
    let mut buf = Vec::new();
    for (d, direction) in directions.iter().enumerate() {
        let slice = &mut pooled[d * (n + m)..(d + 1) * (n + m)];
        project(&zx, direction, &mut buf);
        slice[..n].copy_from_slice(&buf);
        project(&zy, direction, &mut buf);
        slice[n..].copy_from_slice(&buf);
    }

    let statistic = |order: &[usize]| -> f64 {
        let mut ga = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(m);
        let mut acc = 0.0;
        for d in 0..n_projections {
            let slice = &pooled[d * (n + m)..(d + 1) * (n + m)];
            ga.clear();
            gb.clear();
            ga.extend(order[..n].iter().map(|&i| slice[i]));
            gb.extend(order[n..].iter().map(|&i| slice[i]));
            ga.sort_unstable_by(f64::total_cmp);
            gb.sort_unstable_by(f64::total_cmp);
            acc += wasserstein1_sorted(&ga, &gb);
        }
        acc / n_projections as f64
    };

    let identity: Vec<usize> = (0..n + m).collect();
    let observed = statistic(&identity);

    let mut at_least = 0usize;
    let mut order = identity;
    for replicate in 1..=config.n_permutations {
        let mut rng = derive_rng(config.seed, "perm-shuffle", replicate as u64);
        order.shuffle(&mut rng);
        if statistic(&order) >= observed {
            at_least += 1;
        }
    }
    Ok((1 + at_least) as f64 / (1 + config.n_permutations) as f64)
}
