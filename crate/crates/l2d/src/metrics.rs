//! Evaluation metrics for deferral models: system accuracy (one minus mean
//! deferral loss), coverage (fraction not deferred), and accepted accuracy
//! (accuracy among non-deferred predictions).

use serde::Serialize;

use crate::core::{predict, CostSpec};
use crate::data::DeferralDataset;
use crate::error::{Error, Result};
use crate::losses::deferral_loss;
use crate::model::DeferralModel;

/// Which examples to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SplitSel {
    Train,
    Val,
    Test,
    All,
}

impl SplitSel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Self::Train),
            "val" => Some(Self::Val),
            "test" => Some(Self::Test),
            "all" => Some(Self::All),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricsCounts {
    pub total: usize,
    pub deferred: usize,
    pub accepted_correct: usize,
}

/// Evaluation summary. `coverage = (total - deferred) / total`;
/// `accepted_accuracy` is absent when every example was deferred;
/// `system_accuracy = 1 - mean_deferral_loss` exactly.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub system_accuracy: f64,
    pub mean_deferral_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accepted_accuracy: Option<f64>,
    pub coverage: f64,
    /// Total deferral cost incurred on deferred examples.
    pub deferred_cost: f64,
    pub counts: MetricsCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
}

impl MetricsReport {
    /// Mean deferral loss reconstructed from the coverage/accepted/deferred
    /// decomposition: `((accepted - accepted_correct) + deferred_cost) / total`.
    pub fn decomposed_mean_loss(&self) -> f64 {
        let accepted = self.counts.total - self.counts.deferred;
        ((accepted - self.counts.accepted_correct) as f64 + self.deferred_cost)
            / self.counts.total as f64
    }

    pub fn with_context(mut self, seed: u64, loss: String, config: String) -> Self {
        self.seed = Some(seed);
        self.loss = Some(loss);
        self.config = Some(config);
        self
    }
}

/// Evaluate a model on one split of a dataset under the given cost mode.
pub fn evaluate(
    model: &DeferralModel,
    dataset: &DeferralDataset,
    split: SplitSel,
    cost: &CostSpec,
) -> Result<MetricsReport> {
    if model.n() != dataset.n() {
        return Err(Error::DimensionMismatch {
            expected: dataset.n(),
            got: model.n(),
        });
    }
    if model.d() != dataset.d() {
        return Err(Error::DimensionMismatch {
            expected: dataset.d(),
            got: model.d(),
        });
    }
    let all: Vec<usize>;
    let indices: &[usize] = match split {
        SplitSel::Train => &dataset.split().train,
        SplitSel::Val => &dataset.split().val,
        SplitSel::Test => &dataset.split().test,
        SplitSel::All => {
            all = (0..dataset.len()).collect();
            &all
        }
    };
    if indices.is_empty() {
        return Err(Error::EmptySplit(match split {
            SplitSel::Train => "train",
            SplitSel::Val => "val",
            SplitSel::Test => "test",
            SplitSel::All => "all",
        }));
    }
    let mut loss_sum = 0.0;
    let mut deferred = 0usize;
    let mut accepted_correct = 0usize;
    let mut deferred_cost = 0.0;
    for &i in indices {
        let scores = model.scores(dataset.features(i))?;
        let c = dataset.cost_of_example(i, cost)?;
        let y = dataset.label(i);
        loss_sum += deferral_loss(&scores, y, c)?;
        let pred = predict(&scores);
        if pred.is_deferral(dataset.n()) {
            deferred += 1;
            deferred_cost += c;
        } else if pred.index() == y {
            accepted_correct += 1;
        }
    }
    let total = indices.len();
    let mean_deferral_loss = loss_sum / total as f64;
    let accepted = total - deferred;
    let report = MetricsReport {
        system_accuracy: 1.0 - mean_deferral_loss,
        mean_deferral_loss,
        accepted_accuracy: if accepted > 0 {
            Some(accepted_correct as f64 / accepted as f64)
        } else {
            None
        },
        coverage: accepted as f64 / total as f64,
        deferred_cost,
        counts: MetricsCounts {
            total,
            deferred,
            accepted_correct,
        },
        seed: None,
        loss: None,
        config: None,
    };
    debug_assert!((report.mean_deferral_loss - report.decomposed_mean_loss()).abs() <= 1e-12);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ExpertInfo, SplitIndices};
    use crate::model::LinearDeferralModel;

    fn tiny_dataset(experts: Vec<usize>) -> DeferralDataset {
        let m = experts.len();
        // label 1 on negative features, label 2 on positive ones
        let features: Vec<Vec<f64>> = (0..m)
            .map(|i| vec![(i as f64 + 1.0) * if i % 2 == 0 { -1.0 } else { 1.0 }])
            .collect();
        DeferralDataset::new(
            2,
            1,
            features,
            (0..m).map(|i| (i % 2) + 1).collect(),
            ExpertInfo::Predictions(experts),
            SplitIndices {
                train: vec![],
                val: vec![],
                test: (0..m).collect(),
            },
        )
        .unwrap()
    }

    fn always_defer_model() -> DeferralModel {
        DeferralModel::Linear(
            LinearDeferralModel::new(2, 1, vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 5.0]).unwrap(),
        )
    }

    #[test]
    fn always_defer_with_correct_expert() {
        // expert always correct -> deferral cost 0 everywhere
        let data = tiny_dataset(vec![1, 2, 1, 2]);
        let report = evaluate(
            &always_defer_model(),
            &data,
            SplitSel::Test,
            &CostSpec::ExpertError,
        )
        .unwrap();
        assert_eq!(report.system_accuracy, 1.0);
        assert_eq!(report.coverage, 0.0);
        assert!(report.accepted_accuracy.is_none());
        assert_eq!(report.counts.deferred, 4);
    }

    #[test]
    fn perfect_classifier() {
        let data = tiny_dataset(vec![2, 1, 2, 1]);
        // scores: class1 = -x, class2 = x, defer = -10
        let model = DeferralModel::Linear(
            LinearDeferralModel::new(2, 1, vec![-1.0, 1.0, 0.0], vec![0.0, 0.0, -10.0]).unwrap(),
        );
        let report = evaluate(&model, &data, SplitSel::Test, &CostSpec::ExpertError).unwrap();
        assert_eq!(report.system_accuracy, 1.0);
        assert_eq!(report.coverage, 1.0);
        assert_eq!(report.accepted_accuracy, Some(1.0));
    }

    #[test]
    fn decomposition_identity() {
        let data = tiny_dataset(vec![1, 1, 2, 2, 1, 2]);
        for model in [
            always_defer_model(),
            DeferralModel::Linear(
                LinearDeferralModel::new(2, 1, vec![1.0, -1.0, 0.0], vec![0.0, 2.0, 1.0]).unwrap(),
            ),
        ] {
            let report = evaluate(&model, &data, SplitSel::Test, &CostSpec::ExpertError).unwrap();
            assert!((report.mean_deferral_loss - report.decomposed_mean_loss()).abs() <= 1e-12);
            assert_eq!(report.system_accuracy, 1.0 - report.mean_deferral_loss);
        }
    }

    #[test]
    fn empty_split_rejected() {
        let data = tiny_dataset(vec![1, 2]);
        assert!(matches!(
            evaluate(
                &always_defer_model(),
                &data,
                SplitSel::Train,
                &CostSpec::ExpertError
            ),
            Err(Error::EmptySplit("train"))
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = tiny_dataset(vec![1, 2]);
        let wrong = DeferralModel::Linear(LinearDeferralModel::zeros(3, 1).unwrap());
        assert!(evaluate(&wrong, &data, SplitSel::Test, &CostSpec::ExpertError).is_err());
    }
}
