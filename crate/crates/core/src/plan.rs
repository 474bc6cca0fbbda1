//! Bucket plans: how the time axis is split and how each bucket is divided
//! into train and test halves.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::Error;
use crate::rng::derive_rng;
use crate::Result;

/// Time-axis split `t_1 < … < t_B = T` (with implicit `t_0 = 0`) plus the
/// train ratio and the seed that drives the per-bucket train/test draws.
///
/// Bucket `b` covers the half-open interval `(t_{b-1}, t_b]` of 1-based
/// time indices.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BucketPlan {
    split_points: Vec<usize>,
    train_ratio: f64,
    seed: u64,
}

impl BucketPlan {
    /// Validates the split-point and per-bucket size invariants.
    pub fn new(split_points: Vec<usize>, train_ratio: f64, seed: u64) -> Result<Self> {
        if split_points.is_empty() {
            return Err(Error::invalid("a plan needs at least one split point"));
        }
        if !(train_ratio > 0.0 && train_ratio < 1.0) {
            return Err(Error::invalid(format!(
                "train ratio must lie in (0,1); got {train_ratio}"
            )));
        }
        let mut prev = 0usize;
        for (i, &t) in split_points.iter().enumerate() {
            if t <= prev {
                return Err(Error::invalid(format!(
                    "split points must be strictly increasing; point {} is {t} after {prev}",
                    i + 1
                )));
            }
            let len = t - prev;
            if len < 2 {
                return Err(Error::invalid(format!(
                    "bucket {} has length {len}; every bucket needs at least 2 steps",
                    i + 1
                )));
            }
            let train = train_size(len, train_ratio);
            if (len as f64 * train_ratio) as usize == 0 {
                return Err(Error::invalid(format!(
                    "bucket {} train share rounds down to zero (length {len}, ratio {train_ratio})",
                    i + 1
                )));
            }
            if train == 0 || train >= len {
                return Err(Error::invalid(format!(
                    "bucket {} would get {train} train of {len} points; both halves need >= 1",
                    i + 1
                )));
            }
            prev = t;
        }
        Ok(BucketPlan {
            split_points,
            train_ratio,
            seed,
        })
    }

    /// Number of buckets `B`.
    pub fn buckets(&self) -> usize {
        self.split_points.len()
    }

    /// Total number of time steps `T` (the last split point).
    pub fn len(&self) -> usize {
        *self.split_points.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn split_points(&self) -> &[usize] {
        &self.split_points
    }

    pub fn train_ratio(&self) -> f64 {
        self.train_ratio
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The 1-based interval `(t_{b-1}, t_b]` of bucket `b` as `(start, end)`
    /// with both ends inclusive.
    pub fn bucket_interval(&self, bucket_index: usize) -> Result<(usize, usize)> {
        if bucket_index < 1 || bucket_index > self.buckets() {
            return Err(Error::invalid(format!(
                "bucket index {bucket_index} out of range 1..={}",
                self.buckets()
            )));
        }
        let start = if bucket_index == 1 {
            1
        } else {
            self.split_points[bucket_index - 2] + 1
        };
        Ok((start, self.split_points[bucket_index - 1]))
    }
}

/// Train/test partition of one bucket's interval. Index sets are sorted
/// ascending and use 1-based time indices.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BucketSplit {
    pub bucket_index: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

fn train_size(len: usize, ratio: f64) -> usize {
    // round(), not floor(): ratio 0.8 on a 100-step bucket gives exactly 80.
    (len as f64 * ratio).round() as usize
}

/// Equally spaced split points `t_b = round(b·T/B)`.
pub fn make_equal_bucket_plan(
    len: usize,
    buckets: usize,
    train_ratio: f64,
    seed: u64,
) -> Result<BucketPlan> {
    if buckets == 0 {
        return Err(Error::invalid("need at least one bucket"));
    }
    if buckets * 2 > len {
        return Err(Error::invalid(format!(
            "{buckets} buckets cannot each hold 2 of {len} points"
        )));
    }
    let points: Vec<usize> = (1..=buckets)
        .map(|b| ((b * len) as f64 / buckets as f64).round() as usize)
        .collect();
    BucketPlan::new(points, train_ratio, seed)
}

/// Deterministic random train/test partition of bucket `b`.
///
/// The draw depends only on `(plan.seed, bucket_index)`, so buckets can be
/// processed independently and in any order.
pub fn split_bucket(plan: &BucketPlan, bucket_index: usize) -> Result<BucketSplit> {
    let (start, end) = plan.bucket_interval(bucket_index)?;
    let mut indices: Vec<usize> = (start..=end).collect();
    let mut rng = derive_rng(plan.seed(), "bucket-split", bucket_index as u64);
    indices.shuffle(&mut rng);
    let n_train = train_size(end - start + 1, plan.train_ratio());
    let mut train: Vec<usize> = indices[..n_train].to_vec();
    let mut test: Vec<usize> = indices[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(BucketSplit {
        bucket_index,
        train_indices: train,
        test_indices: test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_plan_t1000_b10() {
        let plan = make_equal_bucket_plan(1000, 10, 0.8, 0).unwrap();
        let expected: Vec<usize> = (1..=10).map(|b| b * 100).collect();
        assert_eq!(plan.split_points(), expected.as_slice());
    }

    #[test]
    fn equal_plan_rounds_uneven_lengths() {
        let plan = make_equal_bucket_plan(130, 3, 0.8, 0).unwrap();
        assert_eq!(plan.split_points(), &[43, 87, 130]);
    }

    #[test]
    fn smallest_legal_plan() {
        let plan = make_equal_bucket_plan(4, 2, 0.5, 0).unwrap();
        assert_eq!(plan.split_points(), &[2, 4]);
        for b in 1..=2 {
            let split = split_bucket(&plan, b).unwrap();
            assert_eq!(split.train_indices.len(), 1);
            assert_eq!(split.test_indices.len(), 1);
        }
    }

    #[test]
    fn plans_ignore_seed_for_split_points() {
        let a = make_equal_bucket_plan(130, 3, 0.8, 1).unwrap();
        let b = make_equal_bucket_plan(130, 3, 0.8, 99).unwrap();
        assert_eq!(a.split_points(), b.split_points());
    }

    #[test]
    fn split_sizes_match_ratio() {
        let plan = make_equal_bucket_plan(1000, 10, 0.8, 0).unwrap();
        let split = split_bucket(&plan, 1).unwrap();
        assert_eq!(split.train_indices.len(), 80);
        assert_eq!(split.test_indices.len(), 20);
    }

    #[test]
    fn split_is_deterministic_and_partitions_interval() {
        let plan = make_equal_bucket_plan(130, 3, 0.8, 42).unwrap();
        for b in 1..=3 {
            let s1 = split_bucket(&plan, b).unwrap();
            let s2 = split_bucket(&plan, b).unwrap();
            assert_eq!(s1, s2);

            let (start, end) = plan.bucket_interval(b).unwrap();
            let mut all: Vec<usize> = s1
                .train_indices
                .iter()
                .chain(s1.test_indices.iter())
                .copied()
                .collect();
            all.sort_unstable();
            let expected: Vec<usize> = (start..=end).collect();
            assert_eq!(all, expected);
        }
    }

    #[test]
    fn rejects_undersized_buckets() {
        assert!(make_equal_bucket_plan(10, 6, 0.5, 0).is_err());
        assert!(BucketPlan::new(alloc::vec![1, 3], 0.5, 0).is_err());
        assert!(BucketPlan::new(alloc::vec![4], 1.0, 0).is_err());
    }
}
