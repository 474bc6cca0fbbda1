//! Synthetic benchmark generators and the precision/recall harness.
//!
//! Both scenarios compare a noisy linear ramp `x_{t,d} = t/T + ε` against a
//! copy whose 4th variable is altered on `t ∈ [251, 500]`:
//! a constant level in the first scenario, a time-reversed ramp (which
//! preserves the marginal distribution up to one grid step) in the second.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::matrix::Matrix;
use crate::plan::make_equal_bucket_plan;
use crate::report::MethodId;
use crate::rng::{derive_rng, derive_seed};
use crate::series::TimeSeriesPair;
use crate::timeslice::{run_pipeline, Method, PipelineConfig};
use crate::Result;

/// Number of variables in the synthetic pair.
pub const SYNTH_DIMS: usize = 5;
/// Number of time steps.
pub const SYNTH_LEN: usize = 1000;
/// Noise standard deviation (variance 0.01).
pub const NOISE_SIGMA: f64 = 0.1;
/// The altered variable (1-based).
pub const CHANGED_VARIABLE: usize = 4;
/// First and last altered time step (1-based, inclusive).
pub const CHANGED_INTERVAL: (usize, usize) = (251, 500);

/// What actually differs between the two generated series.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruth {
    /// Changed variables (1-based, sorted).
    pub changed_variables: Vec<usize>,
    /// Inclusive 1-based interval of changed time steps.
    pub changed_interval: (usize, usize),
}

impl GroundTruth {
    /// The changed variables if the bucket interval overlaps the changed
    /// period, `None` otherwise (recall is undefined there).
    pub fn variables_for_bucket(&self, bucket_start: usize, bucket_end: usize) -> Option<&[usize]> {
        let (lo, hi) = self.changed_interval;
        if bucket_start <= hi && bucket_end >= lo {
            Some(&self.changed_variables)
        } else {
            None
        }
    }
}

/// How the 4th variable is altered during the changed interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Scenario {
    /// The ramp is replaced by a constant level 0.25.
    ConstantSegment,
    /// The ramp is replaced by `0.5 - (t - 250)/T`, i.e. run backwards, so
    /// the segment's marginal distribution matches the ramp's.
    TimeReversedSegment,
}

impl Scenario {
    /// CLI settings are numbered: 1 is the constant segment, 2 the
    /// time-reversed one.
    pub fn from_setting_index(index: u8) -> Result<Scenario> {
        match index {
            1 => Ok(Scenario::ConstantSegment),
            2 => Ok(Scenario::TimeReversedSegment),
            other => Err(Error::invalid(format!("unknown setting {other}; use 1 or 2"))),
        }
    }

    pub fn setting_index(self) -> u8 {
        match self {
            Scenario::ConstantSegment => 1,
            Scenario::TimeReversedSegment => 2,
        }
    }
}

/// One standard-normal draw from a stream keyed by `(seed, tag, t, d)`.
/// Per-cell streams keep the `x` noise identical across scenarios and
/// independent of anything done to `y`.
fn cell_noise(seed: u64, tag: &str, t: usize, d: usize) -> f64 {
    let mut rng = derive_rng(seed, tag, ((t as u64) << 8) | d as u64);
    let draw: f64 = rng.sample(StandardNormal);
    NOISE_SIGMA * draw
}

/// Generate a scenario realization.
pub fn generate(scenario: Scenario, seed: u64) -> (TimeSeriesPair, GroundTruth) {
    let len = SYNTH_LEN;
    let dims = SYNTH_DIMS;
    let mut x = Matrix::zeros(dims, len);
    let mut y = Matrix::zeros(dims, len);
    let (changed_lo, changed_hi) = CHANGED_INTERVAL;
    for t in 1..=len {
        let ramp = t as f64 / len as f64;
        for d in 1..=dims {
            x.set(d - 1, t - 1, ramp + cell_noise(seed, "x", t, d));
            let signal = if d == CHANGED_VARIABLE && t >= changed_lo && t <= changed_hi {
                match scenario {
                    Scenario::ConstantSegment => 0.25,
                    Scenario::TimeReversedSegment => 0.5 - (t as f64 - 250.0) / len as f64,
                }
            } else {
                ramp
            };
            y.set(d - 1, t - 1, signal + cell_noise(seed, "y", t, d));
        }
    }
    let pair = TimeSeriesPair::new(x, y, None).expect("generated series are well formed");
    let truth = GroundTruth {
        changed_variables: alloc::vec![CHANGED_VARIABLE],
        changed_interval: CHANGED_INTERVAL,
    };
    (pair, truth)
}

/// Precision, recall, and F1 of a selection against a nonempty truth set.
/// An empty selection scores zero precision by convention.
pub fn precision_recall(selected: &[usize], truth: &[usize]) -> Result<(f64, f64, f64)> {
    if truth.is_empty() {
        return Err(Error::invalid("ground truth must be nonempty"));
    }
    let hits = selected.iter().filter(|v| truth.contains(v)).count() as f64;
    let precision = if selected.is_empty() {
        0.0
    } else {
        hits / selected.len() as f64
    };
    let recall = hits / truth.len() as f64;
    let f1 = if precision > 0.0 && recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((precision, recall, f1))
}

/// One row of the experiment table: per (method, bucket) statistics over
/// the repeats. Precision/recall are absent for buckets that do not
/// intersect the changed period.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentRow {
    pub setting: u8,
    pub buckets: usize,
    pub method: MethodId,
    pub bucket: usize,
    pub p_mean: f64,
    pub p_std: f64,
    pub precision_mean: Option<f64>,
    pub precision_std: Option<f64>,
    pub recall_mean: Option<f64>,
    pub recall_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // Population standard deviation: a single repeat reports 0 spread.
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Repeat the pipeline over fresh realizations and tabulate per-bucket
/// means and standard deviations of the p-value, precision, and recall.
pub fn run_experiment(
    scenario: Scenario,
    n_buckets: usize,
    methods: &[Method],
    n_repeats: usize,
    train_ratio: f64,
    seed: u64,
    config: &PipelineConfig,
) -> Result<ExperimentTable> {
    if n_repeats == 0 {
        return Err(Error::invalid("need at least one repeat"));
    }
    let mut rows = Vec::new();
    for method in methods {
        // realization -> bucket -> (p, precision?, recall?)
        let mut p_values: Vec<Vec<f64>> = alloc::vec![Vec::new(); n_buckets];
        let mut precisions: Vec<Vec<f64>> = alloc::vec![Vec::new(); n_buckets];
        let mut recalls: Vec<Vec<f64>> = alloc::vec![Vec::new(); n_buckets];
        let mut truth_for_bucket: Vec<Option<Vec<usize>>> = alloc::vec![None; n_buckets];

        for repeat in 0..n_repeats {
            let data_seed = derive_seed(seed, "experiment-data", repeat as u64);
            let plan_seed = derive_seed(seed, "experiment-plan", repeat as u64);
            let (pair, truth) = generate(scenario, data_seed);
            let plan = make_equal_bucket_plan(pair.len(), n_buckets, train_ratio, plan_seed)?;
            let report = run_pipeline(&pair, &plan, method, config)?;
            for result in &report.per_bucket {
                let b = result.bucket_index - 1;
                p_values[b].push(result.p_value);
                let (start, end) = plan.bucket_interval(result.bucket_index)?;
                if let Some(bucket_truth) = truth.variables_for_bucket(start, end) {
                    let (precision, recall, _) = precision_recall(&result.selected, bucket_truth)?;
                    precisions[b].push(precision);
                    recalls[b].push(recall);
                    truth_for_bucket[b] = Some(bucket_truth.to_vec());
                }
            }
        }

        for b in 0..n_buckets {
            let (p_mean, p_std) = mean_std(&p_values[b]);
            let (precision_mean, precision_std, recall_mean, recall_std) =
                if truth_for_bucket[b].is_some() {
                    let (pm, ps) = mean_std(&precisions[b]);
                    let (rm, rs) = mean_std(&recalls[b]);
                    (Some(pm), Some(ps), Some(rm), Some(rs))
                } else {
                    (None, None, None, None)
                };
            rows.push(ExperimentRow {
                setting: scenario.setting_index(),
                buckets: n_buckets,
                method: method.id(),
                bucket: b + 1,
                p_mean,
                p_std,
                precision_mean,
                precision_std,
                recall_mean,
                recall_std,
            });
        }
    }
    Ok(ExperimentTable { rows })
}

/// Noiseless signal value of the `y` series, exposed for tests.
pub fn noiseless_y(scenario: Scenario, t: usize, d: usize) -> f64 {
    let (lo, hi) = CHANGED_INTERVAL;
    if d == CHANGED_VARIABLE && t >= lo && t <= hi {
        match scenario {
            Scenario::ConstantSegment => 0.25,
            Scenario::TimeReversedSegment => 0.5 - (t as f64 - 250.0) / SYNTH_LEN as f64,
        }
    } else {
        t as f64 / SYNTH_LEN as f64
    }
}

/// Human-readable scenario description used by CLI help and reports.
pub fn scenario_label(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::ConstantSegment => "constant segment in variable 4",
        Scenario::TimeReversedSegment => "time-reversed segment in variable 4",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn changed_segment_mean_is_near_level() {
        let (pair, _) = generate(Scenario::ConstantSegment, 0);
        let (lo, hi) = CHANGED_INTERVAL;
        let mut sum = 0.0;
        for t in lo..=hi {
            sum += pair.y().get(CHANGED_VARIABLE - 1, t - 1);
        }
        let mean = sum / (hi - lo + 1) as f64;
        // 3σ/√250 ≈ 0.019
        assert!((mean - 0.25).abs() < 0.019, "segment mean {mean}");
    }

    #[test]
    fn ramp_reaches_one_at_the_end() {
        let (pair, _) = generate(Scenario::ConstantSegment, 1);
        for d in 0..SYNTH_DIMS {
            let v = pair.x().get(d, SYNTH_LEN - 1);
            assert!((v - 1.0).abs() < 3.0 * NOISE_SIGMA, "x[{d}, T] = {v}");
        }
    }

    #[test]
    fn noise_variance_concentrates() {
        let (pair, _) = generate(Scenario::ConstantSegment, 2);
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for d in 0..SYNTH_DIMS {
            for t in 1..=SYNTH_LEN {
                let noise = pair.x().get(d, t - 1) - t as f64 / SYNTH_LEN as f64;
                sum_sq += noise * noise;
                count += 1;
            }
        }
        let variance = sum_sq / count as f64;
        assert!(
            (0.008..=0.012).contains(&variance),
            "noise variance {variance}"
        );
    }

    #[test]
    fn reversed_segment_endpoints() {
        assert!((noiseless_y(Scenario::TimeReversedSegment, 251, 4) - 0.499).abs() < 1e-12);
        assert!((noiseless_y(Scenario::TimeReversedSegment, 500, 4) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn reversed_segment_is_a_reversed_arithmetic_sequence() {
        // The sorted noiseless segment values are exactly the arithmetic
        // sequence 0.250, 0.251, ..., 0.499; each sits one grid step (1/T)
        // below the corresponding sorted ramp value.
        let (lo, hi) = CHANGED_INTERVAL;
        let mut ys: Vec<f64> = (lo..=hi)
            .map(|t| noiseless_y(Scenario::TimeReversedSegment, t, CHANGED_VARIABLE))
            .collect();
        ys.sort_unstable_by(f64::total_cmp);
        let mut xs: Vec<f64> = (lo..=hi).map(|t| t as f64 / SYNTH_LEN as f64).collect();
        xs.sort_unstable_by(f64::total_cmp);
        for (k, (&y, &x)) in ys.iter().zip(xs.iter()).enumerate() {
            let expected = 0.25 + k as f64 / SYNTH_LEN as f64;
            assert!((y - expected).abs() < 1e-12);
            assert!((x - y - 1.0 / SYNTH_LEN as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn x_streams_match_across_scenarios() {
        let (a, _) = generate(Scenario::ConstantSegment, 5);
        let (b, _) = generate(Scenario::TimeReversedSegment, 5);
        assert_eq!(a.x(), b.x());
        // y shares the noise stream, so the difference between scenarios is
        // exactly the difference of the noiseless signals, which is nonzero
        // inside the changed segment except where the two formulas cross
        // (t = 500, where both equal 0.25).
        for d in 1..=SYNTH_DIMS {
            for t in 1..=SYNTH_LEN {
                let observed = b.y().get(d - 1, t - 1) - a.y().get(d - 1, t - 1);
                let expected = noiseless_y(Scenario::TimeReversedSegment, t, d)
                    - noiseless_y(Scenario::ConstantSegment, t, d);
                assert!((observed - expected).abs() < 1e-12, "t={t}, d={d}");
            }
        }
    }

    #[test]
    fn precision_recall_cases() {
        assert_eq!(precision_recall(&[4], &[4]).unwrap(), (1.0, 1.0, 1.0));
        let (p, r, f1) = precision_recall(&[1, 2, 4], &[4]).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r, 1.0);
        assert!((f1 - 0.5).abs() < 1e-15);
        assert_eq!(precision_recall(&[], &[4]).unwrap(), (0.0, 0.0, 0.0));
        assert!(precision_recall(&[1], &[]).is_err());
    }

    #[test]
    fn single_repeat_experiment_has_zero_std() {
        let config = PipelineConfig {
            permutation: crate::stats::PermutationTestConfig {
                n_permutations: 20,
                ..Default::default()
            },
            ..PipelineConfig::default()
        };
        let table = run_experiment(
            Scenario::ConstantSegment,
            2,
            &[Method::Wasserstein],
            1,
            0.8,
            7,
            &config,
        )
        .unwrap();
        assert_eq!(table.rows.len(), 2);
        for row in &table.rows {
            assert_eq!(row.p_std, 0.0);
        }
        // Changed period [251,500] sits inside bucket 1 of a B=2 split.
        assert!(table.rows[0].precision_mean.is_some());
        assert!(table.rows[1].precision_mean.is_none());
    }

    #[test]
    fn b10_buckets_3_4_5_overlap_the_changed_period() {
        let truth = GroundTruth {
            changed_variables: alloc::vec![4],
            changed_interval: CHANGED_INTERVAL,
        };
        let overlapping: Vec<usize> = (1..=10)
            .filter(|b| {
                let start = (b - 1) * 100 + 1;
                let end = b * 100;
                truth.variables_for_bucket(start, end).is_some()
            })
            .collect();
        assert_eq!(overlapping, alloc::vec![3, 4, 5]);
    }
}
