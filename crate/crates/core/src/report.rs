//! Result types assembled by the pipeline.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::Error;
use crate::plan::BucketPlan;
use crate::Result;

/// Nonnegative per-variable importance weights, one entry per variable.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        Ok(WeightVector(weights))
    }

    pub fn zeros(dims: usize) -> Self {
        WeightVector(alloc::vec![0.0; dims])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Copy rescaled so the maximum entry is 1; the zero vector stays zero.
    pub fn max_normalized(&self) -> WeightVector {
        let max = self.0.iter().copied().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return self.clone();
        }
        WeightVector(self.0.iter().map(|w| w / max).collect())
    }
}

/// Which selector produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum MethodId {
    MmdVanilla,
    MmdSelection,
    MmdCvAgg,
    Wasserstein,
    MskernelLite,
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MethodId::MmdVanilla => "mmd-vanilla",
            MethodId::MmdSelection => "mmd-selection",
            MethodId::MmdCvAgg => "mmd-cv-agg",
            MethodId::Wasserstein => "wasserstein",
            MethodId::MskernelLite => "mskernel-lite",
        };
        f.write_str(name)
    }
}

/// Per-bucket outcome: the selected variables (1-based, sorted), the weight
/// vector behind them, the permutation-test p-value, and free-form
/// diagnostics (epochs run, chosen regularisation, stopper fired, ...).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionResult {
    pub bucket_index: usize,
    pub selected: Vec<usize>,
    pub weights: WeightVector,
    pub p_value: f64,
    pub h0_accepted_by_fallback: bool,
    pub diagnostics: BTreeMap<String, String>,
}

impl SelectionResult {
    /// Checks the cross-field invariants.
    pub fn validate(&self, dims: usize) -> Result<()> {
        if self
            .selected
            .iter()
            .any(|&v| v < 1 || v > dims)
        {
            return Err(Error::invalid(format!(
                "selected variables must lie in 1..={dims}"
            )));
        }
        if self.selected.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("selected variables must be sorted and unique"));
        }
        if !(0.0..=1.0).contains(&self.p_value) {
            return Err(Error::invalid(format!(
                "p-value {} outside [0,1]",
                self.p_value
            )));
        }
        if self.h0_accepted_by_fallback && (!self.selected.is_empty() || self.p_value != 1.0) {
            return Err(Error::invalid(
                "a fallback-accepted bucket must report an empty selection and p = 1.0",
            ));
        }
        Ok(())
    }
}

/// Full pipeline output: one [`SelectionResult`] per bucket, ordered by
/// bucket index, plus the plan and a snapshot of the configuration that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunReport {
    pub method: MethodId,
    pub plan: BucketPlan,
    pub per_bucket: Vec<SelectionResult>,
    /// Snapshot of the run configuration, flattened to key/value strings so
    /// the report stays self-describing without chasing versioned structs.
    pub config: BTreeMap<String, String>,
}

impl RunReport {
    pub fn validate(&self, dims: usize) -> Result<()> {
        if self.per_bucket.len() != self.plan.buckets() {
            return Err(Error::invalid(format!(
                "report has {} bucket results for a {}-bucket plan",
                self.per_bucket.len(),
                self.plan.buckets()
            )));
        }
        for (i, result) in self.per_bucket.iter().enumerate() {
            if result.bucket_index != i + 1 {
                return Err(Error::invalid("bucket results must be ordered by index"));
            }
            result.validate(dims)?;
        }
        Ok(())
    }
}

/// Per-bucket union of the selected sets across several reports that share
/// one plan and method. Rejects mismatched plans.
pub fn merge_multi_pair(reports: &[RunReport]) -> Result<Vec<Vec<usize>>> {
    let first = reports
        .first()
        .ok_or_else(|| Error::invalid("nothing to merge"))?;
    for report in &reports[1..] {
        if report.plan != first.plan {
            return Err(Error::invalid("reports use different bucket plans"));
        }
        if report.method != first.method {
            return Err(Error::invalid("reports use different methods"));
        }
    }
    let buckets = first.plan.buckets();
    let mut merged: Vec<Vec<usize>> = alloc::vec![Vec::new(); buckets];
    for report in reports {
        for (b, result) in report.per_bucket.iter().enumerate() {
            for &v in &result.selected {
                if !merged[b].contains(&v) {
                    merged[b].push(v);
                }
            }
        }
    }
    for set in &mut merged {
        set.sort_unstable();
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::make_equal_bucket_plan;

    fn dummy_result(bucket_index: usize, selected: Vec<usize>) -> SelectionResult {
        SelectionResult {
            bucket_index,
            selected,
            weights: WeightVector::zeros(3),
            p_value: 1.0,
            h0_accepted_by_fallback: false,
            diagnostics: BTreeMap::new(),
        }
    }

    fn dummy_report(selected: Vec<Vec<usize>>) -> RunReport {
        let plan = make_equal_bucket_plan(8, 2, 0.5, 0).unwrap();
        RunReport {
            method: MethodId::Wasserstein,
            plan,
            per_bucket: selected
                .into_iter()
                .enumerate()
                .map(|(i, s)| dummy_result(i + 1, s))
                .collect(),
            config: BTreeMap::new(),
        }
    }

    #[test]
    fn fallback_invariant_enforced() {
        let mut r = dummy_result(1, alloc::vec![2]);
        r.h0_accepted_by_fallback = true;
        assert!(r.validate(3).is_err());
        r.selected.clear();
        assert!(r.validate(3).is_ok());
    }

    #[test]
    fn merge_unions_per_bucket() {
        let a = dummy_report(alloc::vec![alloc::vec![1], alloc::vec![]]);
        let b = dummy_report(alloc::vec![alloc::vec![2], alloc::vec![]]);
        let merged = merge_multi_pair(&[a.clone(), b]).unwrap();
        assert_eq!(merged, alloc::vec![alloc::vec![1, 2], alloc::vec![]]);

        let single = merge_multi_pair(core::slice::from_ref(&a)).unwrap();
        assert_eq!(single[0], alloc::vec![1]);
    }

    #[test]
    fn merge_is_order_insensitive() {
        let a = dummy_report(alloc::vec![alloc::vec![1, 3], alloc::vec![2]]);
        let b = dummy_report(alloc::vec![alloc::vec![2], alloc::vec![]]);
        let ab = merge_multi_pair(&[a.clone(), b.clone()]).unwrap();
        let ba = merge_multi_pair(&[b, a]).unwrap();
        assert_eq!(ab, ba);
    }
}
