//! The end-to-end driver: per bucket, split train/test, derive length
//! scales, run the selector, and test the held-out points on the selected
//! variables.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::Error;
use crate::kernel::{dimensionwise_length_scales, LengthScaleMode};
use crate::matrix::Matrix;
use crate::optimize::OptimizeConfig;
use crate::par::map_indexed;
use crate::plan::{split_bucket, BucketPlan};
use crate::report::{MethodId, RunReport, SelectionResult, WeightVector};
use crate::rng::derive_seed;
use crate::select::{
    select_mmd_cv_agg, select_mmd_selection, select_mmd_vanilla, select_mskernel_lite,
    select_wasserstein, LambdaSearchSpace, Selection,
};
use crate::series::TimeSeriesPair;
use crate::stats::{permutation_test, PermutationTestConfig};
use crate::Result;

/// Whether kernel length scales come from each bucket's own train samples
/// or from the pooled train samples of all buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum GammaMode {
    #[default]
    PerBucket,
    Global,
}

/// Selector choice plus its method-specific configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    MmdVanilla {
        optimize: OptimizeConfig,
    },
    MmdSelection {
        space: LambdaSearchSpace,
        optimize: OptimizeConfig,
    },
    MmdCvAgg {
        space: LambdaSearchSpace,
        n_folds: usize,
        optimize: OptimizeConfig,
    },
    Wasserstein,
    MskernelLite {
        k_top: usize,
    },
}

impl Method {
    pub fn id(&self) -> MethodId {
        match self {
            Method::MmdVanilla { .. } => MethodId::MmdVanilla,
            Method::MmdSelection { .. } => MethodId::MmdSelection,
            Method::MmdCvAgg { .. } => MethodId::MmdCvAgg,
            Method::Wasserstein => MethodId::Wasserstein,
            Method::MskernelLite { .. } => MethodId::MskernelLite,
        }
    }

    /// Default configuration for a method id.
    pub fn with_defaults(id: MethodId) -> Method {
        match id {
            MethodId::MmdVanilla => Method::MmdVanilla {
                optimize: OptimizeConfig::default(),
            },
            MethodId::MmdSelection => Method::MmdSelection {
                space: LambdaSearchSpace::default(),
                optimize: OptimizeConfig::default(),
            },
            MethodId::MmdCvAgg => Method::MmdCvAgg {
                space: LambdaSearchSpace::default(),
                n_folds: 5,
                optimize: OptimizeConfig::default(),
            },
            MethodId::Wasserstein => Method::Wasserstein,
            MethodId::MskernelLite => Method::MskernelLite { k_top: 1 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub gamma_mode: GammaMode,
    pub length_scale_mode: LengthScaleMode,
    pub permutation: PermutationTestConfig,
    /// Record a failed bucket in its diagnostics instead of aborting.
    pub keep_going: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            gamma_mode: GammaMode::PerBucket,
            length_scale_mode: LengthScaleMode::Auto,
            permutation: PermutationTestConfig::default(),
            keep_going: false,
        }
    }
}

fn config_snapshot(
    plan: &BucketPlan,
    method: &Method,
    config: &PipelineConfig,
) -> BTreeMap<String, String> {
    let mut snapshot = BTreeMap::new();
    snapshot.insert("method".to_string(), method.id().to_string());
    snapshot.insert("train_ratio".to_string(), format!("{}", plan.train_ratio()));
    snapshot.insert("seed".to_string(), plan.seed().to_string());
    snapshot.insert(
        "gamma_mode".to_string(),
        match config.gamma_mode {
            GammaMode::PerBucket => "per-bucket".to_string(),
            GammaMode::Global => "global".to_string(),
        },
    );
    snapshot.insert(
        "length_scale_mode".to_string(),
        match config.length_scale_mode {
            LengthScaleMode::Median => "median",
            LengthScaleMode::Mean => "mean",
            LengthScaleMode::Auto => "auto",
        }
        .to_string(),
    );
    snapshot.insert(
        "permutations".to_string(),
        config.permutation.n_permutations.to_string(),
    );
    snapshot.insert(
        "projections".to_string(),
        match config.permutation.n_projections {
            crate::stats::ProjectionCount::Fixed(count) => count.to_string(),
            crate::stats::ProjectionCount::Auto => "auto".to_string(),
        },
    );
    snapshot.insert("keep_going".to_string(), config.keep_going.to_string());
    match method {
        Method::MmdVanilla { .. } => {}
        Method::MmdSelection { space, .. } => {
            snapshot.insert("lambda_lower".to_string(), format!("{}", space.lower));
            snapshot.insert("lambda_upper".to_string(), format!("{}", space.upper));
            snapshot.insert("n_search".to_string(), space.n_search.to_string());
        }
        Method::MmdCvAgg { space, n_folds, .. } => {
            snapshot.insert("lambda_lower".to_string(), format!("{}", space.lower));
            snapshot.insert("lambda_upper".to_string(), format!("{}", space.upper));
            snapshot.insert("n_search".to_string(), space.n_search.to_string());
            snapshot.insert("n_lambda_grid".to_string(), space.n_lambda_grid.to_string());
            snapshot.insert("n_folds".to_string(), n_folds.to_string());
        }
        Method::Wasserstein => {}
        Method::MskernelLite { k_top } => {
            snapshot.insert("k_top".to_string(), k_top.to_string());
        }
    }
    snapshot
}

fn run_selector(
    method: &Method,
    x_train: &Matrix,
    y_train: &Matrix,
    gamma: &[f64],
    selector_seed: u64,
) -> Result<Selection> {
    match method {
        Method::MmdVanilla { optimize } => {
            let mut optimize = optimize.clone();
            optimize.seed = selector_seed;
            select_mmd_vanilla(x_train, y_train, gamma, &optimize)
        }
        Method::MmdSelection { space, optimize } => {
            let mut optimize = optimize.clone();
            optimize.seed = selector_seed;
            let (mut selection, lambda) =
                select_mmd_selection(x_train, y_train, gamma, space, &optimize, selector_seed)?;
            selection
                .diagnostics
                .insert("chosen_lambda".to_string(), format!("{lambda}"));
            Ok(selection)
        }
        Method::MmdCvAgg {
            space,
            n_folds,
            optimize,
        } => {
            let mut optimize = optimize.clone();
            optimize.seed = selector_seed;
            select_mmd_cv_agg(
                x_train,
                y_train,
                gamma,
                space,
                *n_folds,
                &optimize,
                selector_seed,
            )
        }
        Method::Wasserstein => select_wasserstein(x_train, y_train),
        Method::MskernelLite { k_top } => select_mskernel_lite(x_train, y_train, *k_top),
    }
}

fn process_bucket(
    pair: &TimeSeriesPair,
    plan: &BucketPlan,
    method: &Method,
    config: &PipelineConfig,
    global_gamma: Option<&[f64]>,
    bucket: usize,
) -> Result<SelectionResult> {
    let split = split_bucket(plan, bucket)?;
    let x_train = pair.x_samples(&split.train_indices);
    let y_train = pair.y_samples(&split.train_indices);
    let x_test = pair.x_samples(&split.test_indices);
    let y_test = pair.y_samples(&split.test_indices);

    let gamma = match global_gamma {
        Some(gamma) => gamma.to_vec(),
        None => dimensionwise_length_scales(&x_train, &y_train, config.length_scale_mode)?,
    };

    let selector_seed = derive_seed(plan.seed(), "selector", bucket as u64);
    let mut selection = run_selector(method, &x_train, &y_train, &gamma, selector_seed)?;

    let permutation = PermutationTestConfig {
        seed: derive_seed(plan.seed(), "permutation", bucket as u64),
        ..config.permutation.clone()
    };
    let p_value = permutation_test(&x_test, &y_test, &selection.selected, &permutation)?;

    selection
        .diagnostics
        .insert("train_size".to_string(), split.train_indices.len().to_string());
    selection
        .diagnostics
        .insert("test_size".to_string(), split.test_indices.len().to_string());

    Ok(SelectionResult {
        bucket_index: bucket,
        selected: selection.selected,
        weights: selection.weights,
        p_value,
        h0_accepted_by_fallback: selection.h0_fallback,
        diagnostics: selection.diagnostics,
    })
}

/// Run the full pipeline: one [`SelectionResult`] per bucket.
///
/// Buckets are independent jobs; with the `parallel` feature they run
/// concurrently and still produce the identical report. A bucket failure
/// aborts the run unless `keep_going` is set, in which case the bucket is
/// reported with an empty selection and the error message in its
/// diagnostics.
pub fn run_pipeline(
    pair: &TimeSeriesPair,
    plan: &BucketPlan,
    method: &Method,
    config: &PipelineConfig,
) -> Result<RunReport> {
    if plan.len() != pair.len() {
        return Err(Error::invalid(format!(
            "plan covers {} steps but the series has {}",
            plan.len(),
            pair.len()
        )));
    }

    let global_gamma = match config.gamma_mode {
        GammaMode::PerBucket => None,
        GammaMode::Global => {
            let mut train_indices = Vec::new();
            for bucket in 1..=plan.buckets() {
                train_indices.extend(split_bucket(plan, bucket)?.train_indices);
            }
            let x_train = pair.x_samples(&train_indices);
            let y_train = pair.y_samples(&train_indices);
            Some(dimensionwise_length_scales(
                &x_train,
                &y_train,
                config.length_scale_mode,
            )?)
        }
    };

    let buckets = plan.buckets();
    let outcomes: Vec<Result<SelectionResult>> = map_indexed(buckets, |i| {
        process_bucket(pair, plan, method, config, global_gamma.as_deref(), i + 1)
    });

    let mut per_bucket = Vec::with_capacity(buckets);
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let bucket = i + 1;
        match outcome {
            Ok(result) => per_bucket.push(result),
            Err(err) if config.keep_going => {
                let mut diagnostics = BTreeMap::new();
                diagnostics.insert("error".to_string(), format!("{err}"));
                per_bucket.push(SelectionResult {
                    bucket_index: bucket,
                    selected: Vec::new(),
                    weights: WeightVector::zeros(pair.dims()),
                    p_value: 1.0,
                    h0_accepted_by_fallback: false,
                    diagnostics,
                });
            }
            Err(err) => return Err(err.in_bucket(bucket)),
        }
    }

    let report = RunReport {
        method: method.id(),
        plan: plan.clone(),
        per_bucket,
        config: config_snapshot(plan, method, config),
    };
    report.validate(pair.dims())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::make_equal_bucket_plan;

    fn constant_pair(dims: usize, len: usize) -> TimeSeriesPair {
        let mut x = Matrix::zeros(dims, len);
        for d in 0..dims {
            for t in 0..len {
                x.set(d, t, (d as f64 + 1.0) * 0.1 + (t as f64 * 0.01).sin());
            }
        }
        TimeSeriesPair::new(x.clone(), x, None).unwrap()
    }

    #[test]
    fn identical_series_never_reject() {
        let pair = constant_pair(3, 40);
        let plan = make_equal_bucket_plan(40, 2, 0.8, 9).unwrap();
        let config = PipelineConfig {
            permutation: PermutationTestConfig {
                n_permutations: 50,
                ..PermutationTestConfig::default()
            },
            ..PipelineConfig::default()
        };
        let report = run_pipeline(&pair, &plan, &Method::Wasserstein, &config).unwrap();
        assert_eq!(report.per_bucket.len(), 2);
        for result in &report.per_bucket {
            assert!(result.selected.is_empty());
            assert_eq!(result.p_value, 1.0);
        }
    }

    #[test]
    fn plan_and_series_must_agree() {
        let pair = constant_pair(2, 30);
        let plan = make_equal_bucket_plan(40, 2, 0.8, 0).unwrap();
        assert!(run_pipeline(&pair, &plan, &Method::Wasserstein, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn reports_are_reproducible() {
        let pair = constant_pair(2, 40);
        let plan = make_equal_bucket_plan(40, 2, 0.8, 33).unwrap();
        let config = PipelineConfig {
            permutation: PermutationTestConfig {
                n_permutations: 29,
                ..PermutationTestConfig::default()
            },
            ..PipelineConfig::default()
        };
        let method = Method::MskernelLite { k_top: 1 };
        let a = run_pipeline(&pair, &plan, &method, &config).unwrap();
        let b = run_pipeline(&pair, &plan, &method, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bucket_train_and_test_indices_stay_inside_their_bucket() {
        let plan = make_equal_bucket_plan(100, 4, 0.75, 3).unwrap();
        for bucket in 1..=4 {
            let (start, end) = plan.bucket_interval(bucket).unwrap();
            let split = split_bucket(&plan, bucket).unwrap();
            for &t in split.train_indices.iter().chain(split.test_indices.iter()) {
                assert!(t >= start && t <= end);
            }
        }
    }
}
