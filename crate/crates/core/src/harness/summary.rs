use serde::{Deserialize, Serialize};

use super::{Method, RunRecord};

/// Nearest-rank percentile of `values` for `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// `100 * (partial - global) / partial`; `None` when `partial` is 0.
pub fn relative_difference(partial: f64, global: f64) -> Option<f64> {
    (partial != 0.0 && partial.is_finite() && global.is_finite())
        .then(|| 100.0 * (partial - global) / partial)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub generation: usize,
    pub median: f64,
    pub p20: f64,
    pub p80: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub mean: f64,
    pub median: f64,
    pub p20: f64,
    pub p80: f64,
    /// Validation proportion per generation across runs.
    pub curve: Vec<CurvePoint>,
    /// Set when run histories differed in length and were cut to the
    /// shortest.
    pub truncated: bool,
    /// Most frequent kernel for kernel PCA.
    pub kernel: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub methods: Vec<MethodSummary>,
}

impl Summary {
    pub fn get(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

fn most_common(kernels: &[&str]) -> Option<String> {
    let order = ["rbf", "poly", "cos", "sigmoid", "linear"];
    let mut best: Option<(&str, usize)> = None;
    for name in order.iter().copied().chain(kernels.iter().copied()) {
        let count = kernels.iter().filter(|k| **k == name).count();
        if count > 0 && best.is_none_or(|(_, c)| count > c) {
            best = Some((name, count));
        }
    }
    best.map(|(n, _)| n.to_string())
}

/// Per-method final statistics and per-generation curves, in the order
/// methods first appear in `records`.
pub fn aggregate(records: &[RunRecord]) -> Summary {
    let mut order: Vec<Method> = Vec::new();
    for r in records {
        if !order.contains(&r.method) {
            order.push(r.method);
        }
    }
    let methods = order
        .into_iter()
        .map(|method| {
            let runs: Vec<&RunRecord> = records.iter().filter(|r| r.method == method).collect();
            let finals: Vec<f64> = runs.iter().map(|r| r.validation_proportion).collect();
            let with_history: Vec<&&RunRecord> = runs.iter().filter(|r| !r.history.is_empty()).collect();
            let shortest = with_history.iter().map(|r| r.history.len()).min().unwrap_or(0);
            let truncated = with_history.iter().any(|r| r.history.len() != shortest);
            let curve = (0..shortest)
                .map(|g| {
                    let values: Vec<f64> = with_history
                        .iter()
                        .map(|r| r.history[g].validation_proportion)
                        .collect();
                    CurvePoint {
                        generation: with_history[0].history[g].generation,
                        median: percentile(&values, 50.0).unwrap_or(f64::NAN),
                        p20: percentile(&values, 20.0).unwrap_or(f64::NAN),
                        p80: percentile(&values, 80.0).unwrap_or(f64::NAN),
                    }
                })
                .collect();
            let kernels: Vec<&str> = runs.iter().filter_map(|r| r.kernel.as_deref()).collect();
            MethodSummary {
                method,
                runs: runs.len(),
                mean: finals.iter().sum::<f64>() / finals.len() as f64,
                median: percentile(&finals, 50.0).unwrap_or(f64::NAN),
                p20: percentile(&finals, 20.0).unwrap_or(f64::NAN),
                p80: percentile(&finals, 80.0).unwrap_or(f64::NAN),
                curve,
                truncated,
                kernel: most_common(&kernels),
            }
        })
        .collect();
    Summary { methods }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::es::GenerationReport;
    use crate::rng_from_seed;
    use rand::Rng;
    use std::time::Duration;

    fn rec(method: Method, v: f64, history: &[f64]) -> RunRecord {
        let mut r = RunRecord::new(method, 0, 0, v);
        r.history = history
            .iter()
            .enumerate()
            .map(|(g, &x)| GenerationReport {
                generation: g,
                train_objective: 0.0,
                train_proportion: 0.0,
                validation_proportion: x,
                dropped_candidates: 0,
                duration: Duration::ZERO,
            })
            .collect();
        r
    }

    #[test]
    fn single_record_is_its_own_median() {
        let s = aggregate(&[rec(Method::Pca, 0.42, &[])]);
        let m = s.get(Method::Pca).unwrap();
        assert_eq!((m.median, m.p20, m.p80), (0.42, 0.42, 0.42));
    }

    #[test]
    fn median_of_three() {
        assert_eq!(percentile(&[0.3, 0.1, 0.2], 50.0), Some(0.2));
    }

    #[test]
    fn percentiles_match_sort_oracle() {
        let mut rng = rng_from_seed(0);
        let values: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // nearest rank for n = 15: ceil(0.2 * 15) = 3, ceil(0.5 * 15) = 8, ceil(0.8 * 15) = 12
        assert_eq!(percentile(&values, 20.0), Some(sorted[2]));
        assert_eq!(percentile(&values, 50.0), Some(sorted[7]));
        assert_eq!(percentile(&values, 80.0), Some(sorted[11]));
        assert_eq!(percentile(&values, 0.0), Some(sorted[0]));
        assert_eq!(percentile(&values, 100.0), Some(sorted[14]));
    }

    #[test]
    fn relative_difference_examples() {
        assert_eq!(relative_difference(0.5, 0.5), Some(0.0));
        let d = relative_difference(0.153, 0.119).unwrap();
        assert!((d - 22.22).abs() < 0.01, "{d}");
        assert!(relative_difference(0.1, 0.2).unwrap() < 0.0);
        assert_eq!(relative_difference(0.0, 0.2), None);
    }

    #[test]
    fn mixed_histories_are_truncated() {
        let s = aggregate(&[
            rec(Method::EsGlobal, 0.5, &[0.1, 0.2, 0.3]),
            rec(Method::EsGlobal, 0.6, &[0.2, 0.4]),
        ]);
        let m = s.get(Method::EsGlobal).unwrap();
        assert!(m.truncated);
        assert_eq!(m.curve.len(), 2);
        assert_eq!(m.curve[1].median, 0.2);
    }

    #[test]
    fn kernel_vote_prefers_fixed_order_on_ties() {
        assert_eq!(most_common(&["cos", "rbf"]), Some("rbf".into()));
        assert_eq!(most_common(&["cos", "cos", "rbf"]), Some("cos".into()));
        assert_eq!(most_common(&[]), None);
    }
}
