//! Agent selection for trajectory data.
//!
//! Trajectories are `A×T×C` arrays (agents × steps × coordinates). They are
//! compared through their per-step direction differences; each time step
//! then contributes one sample in `R^{A×C}`, and selection picks agents
//! instead of variables, either by optimizing agent-wise kernel weights or
//! by per-agent sliced Wasserstein distances.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;
use crate::matrix::Matrix;
use crate::mmd::{ObjectiveWorkspace, PairwiseFeatures};
use crate::optimize::{optimize_with_workspace, OptimizeConfig};
use crate::par::map_indexed;
use crate::plan::{split_bucket, BucketPlan};
use crate::report::{MethodId, RunReport, SelectionResult, WeightVector};
use crate::rng::derive_seed;
use crate::select::{threshold_weights, Selection};
use crate::stats::{
    choose_projection_count, permutation_test, sliced_wasserstein, PermutationTestConfig,
    ProjectionCount,
};
use crate::Result;

/// Dense `A×T×C` array, row-major in `(agent, step, coordinate)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    agents: usize,
    steps: usize,
    coords: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(agents: usize, steps: usize, coords: usize) -> Self {
        Trajectory {
            agents,
            steps,
            coords,
            data: vec![0.0; agents * steps * coords],
        }
    }

    pub fn from_vec(agents: usize, steps: usize, coords: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != agents * steps * coords {
            return Err(Error::invalid("trajectory buffer length mismatch"));
        }
        Ok(Trajectory {
            agents,
            steps,
            coords,
            data,
        })
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn coords(&self) -> usize {
        self.coords
    }

    #[inline]
    pub fn get(&self, agent: usize, step: usize, coord: usize) -> f64 {
        self.data[(agent * self.steps + step) * self.coords + coord]
    }

    #[inline]
    pub fn set(&mut self, agent: usize, step: usize, coord: usize, value: f64) {
        self.data[(agent * self.steps + step) * self.coords + coord] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Two equal-shape trajectories under comparison.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryPair {
    x: Trajectory,
    y: Trajectory,
}

impl TrajectoryPair {
    pub fn new(x: Trajectory, y: Trajectory) -> Result<Self> {
        if x.agents != y.agents || x.steps != y.steps || x.coords != y.coords {
            return Err(Error::invalid("trajectory shapes differ"));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid("trajectory entries must be finite"));
        }
        Ok(TrajectoryPair { x, y })
    }

    pub fn x(&self) -> &Trajectory {
        &self.x
    }

    pub fn y(&self) -> &Trajectory {
        &self.y
    }

    pub fn agents(&self) -> usize {
        self.x.agents
    }

    pub fn steps(&self) -> usize {
        self.x.steps
    }

    pub fn coords(&self) -> usize {
        self.x.coords
    }

    /// Direction-difference both trajectories; the result has `T-1` steps.
    pub fn direction_difference(&self) -> Result<TrajectoryPair> {
        Ok(TrajectoryPair {
            x: direction_difference(&self.x)?,
            y: direction_difference(&self.y)?,
        })
    }

    pub fn x_samples(&self, time_indices: &[usize]) -> TrajectorySamples {
        TrajectorySamples::from_trajectory(&self.x, time_indices)
    }

    pub fn y_samples(&self, time_indices: &[usize]) -> TrajectorySamples {
        TrajectorySamples::from_trajectory(&self.y, time_indices)
    }
}

/// Per-step displacement vectors: `out[a,t,c] = traj[a,t+1,c] - traj[a,t,c]`.
pub fn direction_difference(trajectory: &Trajectory) -> Result<Trajectory> {
    if trajectory.steps < 2 {
        return Err(Error::invalid("need at least two steps to difference"));
    }
    let mut out = Trajectory::zeros(trajectory.agents, trajectory.steps - 1, trajectory.coords);
    for a in 0..trajectory.agents {
        for t in 0..trajectory.steps - 1 {
            for c in 0..trajectory.coords {
                out.set(a, t, c, trajectory.get(a, t + 1, c) - trajectory.get(a, t, c));
            }
        }
    }
    Ok(out)
}

/// A set of samples in `R^{A×C}`, one per selected time step; sample-major
/// storage with each sample laid out agent-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySamples {
    n: usize,
    agents: usize,
    coords: usize,
    data: Vec<f64>,
}

impl TrajectorySamples {
    pub fn from_flat(n: usize, agents: usize, coords: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * agents * coords {
            return Err(Error::invalid("sample buffer length mismatch"));
        }
        Ok(TrajectorySamples {
            n,
            agents,
            coords,
            data,
        })
    }

    /// Gather samples at the given 1-based time steps.
    pub fn from_trajectory(trajectory: &Trajectory, time_indices: &[usize]) -> Self {
        let agents = trajectory.agents;
        let coords = trajectory.coords;
        let mut data = Vec::with_capacity(time_indices.len() * agents * coords);
        for &t in time_indices {
            for a in 0..agents {
                for c in 0..coords {
                    data.push(trajectory.get(a, t - 1, c));
                }
            }
        }
        TrajectorySamples {
            n: time_indices.len(),
            agents,
            coords,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn coords(&self) -> usize {
        self.coords
    }

    /// One sample as a flat `A*C` slice, agent-major.
    #[inline]
    pub fn sample(&self, index: usize) -> &[f64] {
        let stride = self.agents * self.coords;
        &self.data[index * stride..(index + 1) * stride]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// All samples of one agent as an `n×C` matrix.
    pub fn agent_matrix(&self, agent: usize) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.coords);
        for s in 0..self.n {
            let sample = self.sample(s);
            out.row_mut(s)
                .copy_from_slice(&sample[agent * self.coords..(agent + 1) * self.coords]);
        }
        out
    }

    /// Flatten to an `n×(A·C)` matrix for the permutation-test statistic.
    pub fn flatten(&self) -> Matrix {
        Matrix::from_vec(self.n, self.agents * self.coords, self.data.clone())
            .expect("dimensions are consistent")
    }
}

/// Per-agent squared length scales: the median over all unordered pooled
/// sample pairs of the agent's summed absolute coordinate difference
/// (the same quantity the kernel divides by them). Zero medians fall back
/// to 1.
pub fn agent_length_scales_sq(
    x: &TrajectorySamples,
    y: &TrajectorySamples,
) -> Result<Vec<f64>> {
    if x.agents != y.agents || x.coords != y.coords {
        return Err(Error::invalid("trajectory sample shapes disagree"));
    }
    let total = x.n + y.n;
    if total < 2 {
        return Err(Error::invalid("need at least two pooled samples"));
    }
    let sample = |i: usize| -> &[f64] {
        if i < x.n {
            x.sample(i)
        } else {
            y.sample(i - x.n)
        }
    };
    let coords = x.coords;
    let mut scales = Vec::with_capacity(x.agents);
    let mut distances = Vec::with_capacity(total * (total - 1) / 2);
    for agent in 0..x.agents {
        distances.clear();
        for i in 0..total {
            let u = &sample(i)[agent * coords..(agent + 1) * coords];
            for j in (i + 1)..total {
                let v = &sample(j)[agent * coords..(agent + 1) * coords];
                let mut dist = 0.0;
                for c in 0..coords {
                    dist += (u[c] - v[c]).abs();
                }
                distances.push(dist);
            }
        }
        distances.sort_unstable_by(f64::total_cmp);
        let k = distances.len();
        let median = if k % 2 == 1 {
            distances[k / 2]
        } else {
            0.5 * (distances[k / 2 - 1] + distances[k / 2])
        };
        scales.push(if median > 0.0 { median } else { 1.0 });
    }
    Ok(scales)
}

fn selection_diag(value: &OptimizeConfig) -> BTreeMap<String, String> {
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("max_epochs".to_string(), value.max_epochs.to_string());
    diagnostics
}

/// Optimize agent-wise kernel weights and threshold them into a selected
/// agent set (1-based).
pub fn select_agents_mmd(
    x_train: &TrajectorySamples,
    y_train: &TrajectorySamples,
    lambda: f64,
    config: &OptimizeConfig,
) -> Result<Selection> {
    if lambda < 0.0 {
        return Err(Error::invalid("lambda must be nonnegative"));
    }
    let scales_sq = agent_length_scales_sq(x_train, y_train)?;
    let features = PairwiseFeatures::from_trajectories(x_train, y_train, &scales_sq)?;
    let mut workspace = ObjectiveWorkspace::new(features)?;
    let outcome = optimize_with_workspace(&mut workspace, lambda, config)?;
    let mut diagnostics = selection_diag(config);
    diagnostics.insert("epochs_run".to_string(), outcome.epochs_run.to_string());
    diagnostics.insert(
        "stop_reason".to_string(),
        outcome.stop_reason.as_str().to_string(),
    );
    if outcome.accepted_null() {
        return Ok(Selection {
            weights: WeightVector::zeros(x_train.agents),
            selected: Vec::new(),
            h0_fallback: true,
            diagnostics,
        });
    }
    let weights = WeightVector::new(outcome.ard_weights)?;
    let selected = threshold_weights(&weights);
    Ok(Selection {
        weights,
        selected,
        h0_fallback: false,
        diagnostics,
    })
}

/// Per-agent sliced Wasserstein weights, thresholded into a selected agent
/// set. With `Auto`, the projection count is resolved per agent by the
/// variance-minimizing probe.
pub fn select_agents_sliced_wasserstein(
    x_train: &TrajectorySamples,
    y_train: &TrajectorySamples,
    n_projections: ProjectionCount,
    seed: u64,
) -> Result<Selection> {
    if x_train.agents != y_train.agents || x_train.coords != y_train.coords {
        return Err(Error::invalid("trajectory sample shapes disagree"));
    }
    let agents = x_train.agents;
    let mut weights = Vec::with_capacity(agents);
    let mut counts = Vec::with_capacity(agents);
    for agent in 0..agents {
        let ax = x_train.agent_matrix(agent);
        let ay = y_train.agent_matrix(agent);
        let count = match n_projections {
            ProjectionCount::Fixed(count) => count,
            ProjectionCount::Auto => {
                choose_projection_count(&ax, &ay, derive_seed(seed, "agent-projections", agent as u64))?
            }
        };
        counts.push(count);
        weights.push(sliced_wasserstein(
            &ax,
            &ay,
            count,
            derive_seed(seed, "agent-distance", agent as u64),
        )?);
    }
    let weights = WeightVector::new(weights)?;
    let selected = threshold_weights(&weights);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert(
        "projection_counts".to_string(),
        format!("{counts:?}"),
    );
    Ok(Selection {
        weights,
        selected,
        h0_fallback: false,
        diagnostics,
    })
}

/// Agent-selection method for trajectory buckets.
#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryMethod {
    Mmd {
        lambda: f64,
        optimize: OptimizeConfig,
    },
    SlicedWasserstein {
        n_projections: ProjectionCount,
    },
}

impl TrajectoryMethod {
    fn id(&self) -> MethodId {
        match self {
            // Fixed-lambda agent optimization is the plain optimized-weights
            // selector; per-agent distances are the marginal-distance one.
            TrajectoryMethod::Mmd { .. } => MethodId::MmdVanilla,
            TrajectoryMethod::SlicedWasserstein { .. } => MethodId::Wasserstein,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            TrajectoryMethod::Mmd { .. } => "mmd",
            TrajectoryMethod::SlicedWasserstein { .. } => "sliced-wasserstein",
        }
    }
}

/// Time-sliced agent selection over an already direction-differenced pair.
///
/// Works exactly like the variable pipeline: per bucket, agents are
/// selected on the train steps and the test steps are compared with the
/// sliced Wasserstein permutation test on the flattened samples, zero
/// filling every coordinate of non-selected agents.
pub fn run_trajectory_pipeline(
    pair: &TrajectoryPair,
    plan: &BucketPlan,
    method: &TrajectoryMethod,
    permutation: &PermutationTestConfig,
) -> Result<RunReport> {
    if plan.len() != pair.steps() {
        return Err(Error::invalid(format!(
            "plan covers {} steps but the trajectories have {}",
            plan.len(),
            pair.steps()
        )));
    }
    let coords = pair.coords();
    let buckets = plan.buckets();
    let outcomes: Vec<Result<SelectionResult>> = map_indexed(buckets, |i| {
        let bucket = i + 1;
        let split = split_bucket(plan, bucket)?;
        let x_train = pair.x_samples(&split.train_indices);
        let y_train = pair.y_samples(&split.train_indices);
        let selector_seed = derive_seed(plan.seed(), "agent-selector", bucket as u64);
        let selection = match method {
            TrajectoryMethod::Mmd { lambda, optimize } => {
                let mut optimize = optimize.clone();
                optimize.seed = selector_seed;
                select_agents_mmd(&x_train, &y_train, *lambda, &optimize)?
            }
            TrajectoryMethod::SlicedWasserstein { n_projections } => {
                select_agents_sliced_wasserstein(
                    &x_train,
                    &y_train,
                    *n_projections,
                    selector_seed,
                )?
            }
        };

        // Selected agents expand to their flattened coordinate columns.
        let flat_selected: Vec<usize> = selection
            .selected
            .iter()
            .flat_map(|&agent| (1..=coords).map(move |c| (agent - 1) * coords + c))
            .collect();
        let x_test = pair.x_samples(&split.test_indices).flatten();
        let y_test = pair.y_samples(&split.test_indices).flatten();
        let config = PermutationTestConfig {
            seed: derive_seed(plan.seed(), "agent-permutation", bucket as u64),
            ..permutation.clone()
        };
        let p_value = permutation_test(&x_test, &y_test, &flat_selected, &config)?;
        Ok(SelectionResult {
            bucket_index: bucket,
            selected: selection.selected,
            weights: selection.weights,
            p_value,
            h0_accepted_by_fallback: selection.h0_fallback,
            diagnostics: selection.diagnostics,
        })
    });

    let mut per_bucket = Vec::with_capacity(buckets);
    for (i, outcome) in outcomes.into_iter().enumerate() {
        per_bucket.push(outcome.map_err(|e| e.in_bucket(i + 1))?);
    }

    let mut config = BTreeMap::new();
    config.insert("trajectory".to_string(), "true".to_string());
    config.insert("trajectory_method".to_string(), method.label().to_string());
    config.insert("agents".to_string(), pair.agents().to_string());
    config.insert("coords".to_string(), coords.to_string());
    config.insert(
        "permutations".to_string(),
        permutation.n_permutations.to_string(),
    );
    Ok(RunReport {
        method: method.id(),
        plan: plan.clone(),
        per_bucket,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differencing_basics() {
        // Positions (0, 1, 3) become differences (1, 2).
        let traj = Trajectory::from_vec(1, 3, 1, vec![0.0, 1.0, 3.0]).unwrap();
        let diff = direction_difference(&traj).unwrap();
        assert_eq!(diff.steps(), 2);
        assert_eq!(diff.get(0, 0, 0), 1.0);
        assert_eq!(diff.get(0, 1, 0), 2.0);

        let constant = Trajectory::from_vec(1, 4, 2, vec![0.5; 8]).unwrap();
        let diff = direction_difference(&constant).unwrap();
        assert!(diff.data.iter().all(|&v| v == 0.0));

        let mut line = Trajectory::zeros(1, 5, 1);
        for t in 0..5 {
            line.set(0, t, 0, 0.25 * t as f64);
        }
        let diff = direction_difference(&line).unwrap();
        assert!(diff.data.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn differencing_then_cumsum_reconstructs() {
        let mut traj = Trajectory::zeros(2, 6, 2);
        for a in 0..2 {
            for t in 0..6 {
                for c in 0..2 {
                    traj.set(a, t, c, ((a + 1) * (t + 1)) as f64 * 0.3 + c as f64);
                }
            }
        }
        let diff = direction_difference(&traj).unwrap();
        for a in 0..2 {
            for c in 0..2 {
                let mut position = traj.get(a, 0, c);
                for t in 0..diff.steps() {
                    position += diff.get(a, t, c);
                    assert!((position - traj.get(a, t + 1, c)).abs() < 1e-12);
                }
            }
        }
    }

    fn shifted_pair(n: usize, shift: f64) -> (TrajectorySamples, TrajectorySamples) {
        // Agent 1 of y is shifted by `shift` in its first coordinate;
        // agent 2 matches exactly.
        let mut x = Vec::new();
        let mut y = Vec::new();
        for s in 0..n {
            let base = (s as f64 * 0.7).sin() * 0.05;
            x.extend_from_slice(&[base, 0.1 * s as f64 % 0.5, base + 0.2, 0.3]);
            y.extend_from_slice(&[base + shift, 0.1 * s as f64 % 0.5, base + 0.2, 0.3]);
        }
        (
            TrajectorySamples::from_flat(n, 2, 2, x).unwrap(),
            TrajectorySamples::from_flat(n, 2, 2, y).unwrap(),
        )
    }

    #[test]
    fn identical_agent_sets_select_nothing() {
        let (x, _) = shifted_pair(10, 0.0);
        let selection =
            select_agents_sliced_wasserstein(&x, &x, ProjectionCount::Fixed(20), 4).unwrap();
        assert!(selection.selected.is_empty());
        assert!(selection.weights.as_slice().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn shifted_agent_dominates_distance_weights() {
        let (x, y) = shifted_pair(12, 4.0);
        let selection =
            select_agents_sliced_wasserstein(&x, &y, ProjectionCount::Fixed(64), 4).unwrap();
        assert_eq!(selection.selected, vec![1]);
        let w = selection.weights.as_slice();
        assert!(w[0] > w[1]);
    }

    #[test]
    fn agent_weights_permute_with_agent_order() {
        let (x, y) = shifted_pair(12, 2.0);
        // Swap the two agents in both sample sets.
        let swap = |s: &TrajectorySamples| {
            let mut data = Vec::with_capacity(s.data.len());
            for i in 0..s.len() {
                let sample = s.sample(i);
                data.extend_from_slice(&sample[2..4]);
                data.extend_from_slice(&sample[0..2]);
            }
            TrajectorySamples::from_flat(s.len(), 2, 2, data).unwrap()
        };
        let a = select_agents_sliced_wasserstein(&x, &y, ProjectionCount::Fixed(64), 4).unwrap();
        let b = select_agents_sliced_wasserstein(&swap(&x), &swap(&y), ProjectionCount::Fixed(64), 4)
            .unwrap();
        let wa = a.weights.as_slice();
        let wb = b.weights.as_slice();
        assert!((wa[0] - wb[1]).abs() < 1e-12);
        assert!((wa[1] - wb[0]).abs() < 1e-12);
    }

    #[test]
    fn identical_trajectory_sets_accept_null_under_mmd() {
        let (x, _) = shifted_pair(8, 0.0);
        let selection = select_agents_mmd(&x, &x, 0.01, &OptimizeConfig::default()).unwrap();
        assert!(selection.h0_fallback);
        assert!(selection.selected.is_empty());
    }

    #[test]
    fn strongly_shifted_agent_wins_mmd_weights() {
        let (x, y) = shifted_pair(10, 5.0);
        let selection = select_agents_mmd(&x, &y, 0.05, &OptimizeConfig::default()).unwrap();
        assert!(!selection.h0_fallback);
        let w = selection.weights.as_slice();
        assert!(w[0] > w[1], "weights {w:?}");
    }
}
