//! Foundational types for deferral problems: augmented score vectors, the
//! prediction rule, cost specifications, and the transform family selecting
//! a surrogate loss.
//!
//! Labels are 1-based throughout the public API and in serialized formats:
//! classes are `1..=n` and `n + 1` is the deferral label.

use serde::Serialize;

use crate::error::{Error, Result};

/// Score vector over the augmented label set: `n` class scores followed by
/// the deferral score. All entries are finite and the length is `n + 1` with
/// `n >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedScores {
    values: Vec<f64>,
}

impl AugmentedScores {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::ScoreVectorTooShort(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore(i));
        }
        Ok(Self { values })
    }

    /// Number of non-deferral labels.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Score of a label in `1..=n+1`.
    pub fn value_of(&self, label: usize) -> f64 {
        self.values[label - 1]
    }

    pub fn deferral_score(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + delta).collect(),
        }
    }
}

/// Outcome of the deterministic prediction rule: a label in `1..=n+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Prediction {
    index: usize,
}

impl Prediction {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn is_deferral(&self, n: usize) -> bool {
        self.index == n + 1
    }
}

/// Highest-scoring label, breaking ties toward the lowest index.
pub fn predict(scores: &AugmentedScores) -> Prediction {
    let mut best = 0;
    for (i, v) in scores.values().iter().enumerate().skip(1) {
        if *v > scores.values()[best] {
            best = i;
        }
    }
    Prediction { index: best + 1 }
}

/// How the deferral cost of an example is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CostSpec {
    /// Expert's classification error: 1 when the expert mispredicts, else 0.
    ExpertError,
    /// `alpha * [expert wrong] + beta`, with `alpha + beta <= 1` so costs
    /// stay in [0, 1].
    AffineExpertError { alpha: f64, beta: f64 },
    /// Per-example per-label costs supplied as a table row.
    ExplicitTable,
}

/// The per-example information a [`CostSpec`] consumes.
#[derive(Debug, Clone, Copy)]
pub struct CostContext<'a> {
    /// Expert prediction in `1..=n`, when available.
    pub expert_pred: Option<usize>,
    /// Per-label cost row, when available.
    pub table_row: Option<&'a [f64]>,
}

impl CostSpec {
    pub fn affine(alpha: f64, beta: f64) -> Result<Self> {
        if alpha > 0.0 && beta >= 0.0 && alpha + beta <= 1.0 {
            Ok(Self::AffineExpertError { alpha, beta })
        } else {
            Err(Error::InvalidAffineCost { alpha, beta })
        }
    }

    /// Deferral cost of an example with true label `y`. Always in [0, 1].
    pub fn cost_of(&self, ctx: CostContext<'_>, y: usize) -> Result<f64> {
        let value = match self {
            Self::ExpertError => {
                let g = ctx.expert_pred.ok_or(Error::MissingCostContext {
                    mode: "ExpertError",
                    missing: "an expert prediction",
                })?;
                if g != y {
                    1.0
                } else {
                    0.0
                }
            }
            Self::AffineExpertError { alpha, beta } => {
                let g = ctx.expert_pred.ok_or(Error::MissingCostContext {
                    mode: "AffineExpertError",
                    missing: "an expert prediction",
                })?;
                if g != y {
                    alpha + beta
                } else {
                    *beta
                }
            }
            Self::ExplicitTable => {
                let row = ctx.table_row.ok_or(Error::MissingCostContext {
                    mode: "ExplicitTable",
                    missing: "a cost table row",
                })?;
                if y == 0 || y > row.len() {
                    return Err(Error::LabelOutOfRange {
                        label: y,
                        max: row.len(),
                    });
                }
                row[y - 1]
            }
        };
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::CostOutOfRange(value));
        }
        Ok(value)
    }
}

/// Non-increasing transform applied to softmax masses, selecting a member of
/// the comp-sum surrogate family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PsiSpec {
    /// `t -> -log t` (logistic loss).
    Log,
    /// `t -> (1 - t^q) / q` (generalized cross-entropy), `q` in (0, 1).
    Gce { q: f64 },
    /// `t -> 1 - t` (mean absolute error).
    Mae,
}

impl PsiSpec {
    /// Default GCE exponent.
    pub const DEFAULT_Q: f64 = 0.7;

    pub fn gce(q: f64) -> Result<Self> {
        if q > 0.0 && q < 1.0 {
            Ok(Self::Gce { q })
        } else {
            Err(Error::InvalidGceExponent(q))
        }
    }

    /// Evaluate the transform at `t` in [0, 1].
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Log => -t.ln(),
            Self::Gce { q } => (1.0 - t.powf(*q)) / q,
            Self::Mae => 1.0 - t,
        }
    }

    /// Value at 2/3; strictly positive for every variant, and the constant
    /// in the pointwise domination bound `L_def <= L_RL2D / psi(2/3)`.
    pub fn at_two_thirds(&self) -> f64 {
        self.eval(2.0 / 3.0)
    }

    pub fn name(&self) -> String {
        match self {
            Self::Log => "log".to_string(),
            Self::Gce { q } => format!("gce({q})"),
            Self::Mae => "mae".to_string(),
        }
    }
}

/// A single conditional problem at a fixed input: label probabilities,
/// per-label deferral costs, and the derived reparameterization used by the
/// closed-form deferral regret.
///
/// `q[y] = p[y] * c[y]` and `p_defer = sum_y p[y] * (1 - c[y])`, so `p_defer`
/// equals `sum_y (p[y] - q[y])` exactly by construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondInstance {
    n: usize,
    p: Vec<f64>,
    c: Vec<f64>,
    q: Vec<f64>,
    p_defer: f64,
    y_max: usize,
}

impl CondInstance {
    pub fn new(p: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::TooFewLabels(p.len()));
        }
        if p.len() != c.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: c.len(),
            });
        }
        if let Some(&bad) = p.iter().find(|v| **v < 0.0 || !v.is_finite()) {
            return Err(Error::NegativeProbability(bad));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::ProbabilityNotNormalized(sum));
        }
        if let Some(&bad) = c.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::CostOutOfRange(bad));
        }
        let q: Vec<f64> = p.iter().zip(&c).map(|(py, cy)| py * cy).collect();
        let p_defer: f64 = p.iter().zip(&q).map(|(py, qy)| py - qy).sum();
        let mut y_max = 1;
        for y in 2..=p.len() {
            if p[y - 1] > p[y_max - 1] {
                y_max = y;
            }
        }
        Ok(Self {
            n: p.len(),
            p,
            c,
            q,
            p_defer,
            y_max,
        })
    }

    /// Binary expert-error costs: one zero-cost label (the expert's
    /// prediction), cost 1 elsewhere.
    pub fn with_expert(p: Vec<f64>, expert_pred: usize) -> Result<Self> {
        let n = p.len();
        if expert_pred == 0 || expert_pred > n {
            return Err(Error::LabelOutOfRange {
                label: expert_pred,
                max: n,
            });
        }
        let c = (1..=n).map(|y| if y == expert_pred { 0.0 } else { 1.0 }).collect();
        Self::new(p, c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Probability of label `y` in `1..=n`.
    pub fn p(&self, y: usize) -> f64 {
        self.p[y - 1]
    }

    /// Deferral cost of label `y` in `1..=n`.
    pub fn c(&self, y: usize) -> f64 {
        self.c[y - 1]
    }

    /// `p[y] * c[y]`.
    pub fn q(&self, y: usize) -> f64 {
        self.q[y - 1]
    }

    /// Probability mass surviving deferral: `sum_y p[y] * (1 - c[y])`.
    pub fn p_defer(&self) -> f64 {
        self.p_defer
    }

    /// Most probable label (lowest index on ties).
    pub fn y_max(&self) -> usize {
        self.y_max
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn costs(&self) -> &[f64] {
        &self.c
    }

    /// True when costs have the expert-error form: every entry in {0, 1}
    /// with exactly one zero.
    pub fn has_binary_expert_costs(&self) -> bool {
        let zeros = self.c.iter().filter(|v| **v == 0.0).count();
        zeros == 1 && self.c.iter().all(|v| *v == 0.0 || *v == 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(v: &[f64]) -> AugmentedScores {
        AugmentedScores::new(v.to_vec()).unwrap()
    }

    #[test]
    fn predict_breaks_ties_toward_lowest_index() {
        assert_eq!(predict(&scores(&[0.0, 0.0, 0.0, 0.0])).index(), 1);
    }

    #[test]
    fn predict_unique_argmax() {
        assert_eq!(predict(&scores(&[1.0, 3.0, 2.0, 0.0])).index(), 2);
    }

    #[test]
    fn predict_deferral_when_last_score_largest() {
        let p = predict(&scores(&[0.0, 0.0, 0.0, 5.0]));
        assert_eq!(p.index(), 4);
        assert!(p.is_deferral(3));
    }

    #[test]
    fn scores_reject_short_and_non_finite() {
        assert!(matches!(
            AugmentedScores::new(vec![0.0, 0.0]),
            Err(Error::ScoreVectorTooShort(2))
        ));
        assert!(matches!(
            AugmentedScores::new(vec![0.0, f64::NAN, 0.0]),
            Err(Error::NonFiniteScore(1))
        ));
        assert!(matches!(
            AugmentedScores::new(vec![0.0, 0.0, f64::INFINITY]),
            Err(Error::NonFiniteScore(2))
        ));
    }

    #[test]
    fn expert_error_cost_is_indicator() {
        let ctx = |g| CostContext {
            expert_pred: Some(g),
            table_row: None,
        };
        assert_eq!(CostSpec::ExpertError.cost_of(ctx(2), 2).unwrap(), 0.0);
        assert_eq!(CostSpec::ExpertError.cost_of(ctx(1), 2).unwrap(), 1.0);
    }

    #[test]
    fn affine_cost_formula() {
        let spec = CostSpec::affine(0.8, 0.1).unwrap();
        let ctx = |g| CostContext {
            expert_pred: Some(g),
            table_row: None,
        };
        assert!((spec.cost_of(ctx(1), 2).unwrap() - 0.9).abs() < 1e-15);
        assert!((spec.cost_of(ctx(2), 2).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn affine_cost_requires_normalization() {
        assert!(CostSpec::affine(0.8, 0.3).is_err());
        assert!(CostSpec::affine(0.0, 0.1).is_err());
        assert!(CostSpec::affine(0.8, -0.1).is_err());
    }

    #[test]
    fn explicit_table_passthrough() {
        let row = [0.2, 0.37, 1.0];
        let ctx = CostContext {
            expert_pred: None,
            table_row: Some(&row),
        };
        assert_eq!(CostSpec::ExplicitTable.cost_of(ctx, 2).unwrap(), 0.37);
    }

    #[test]
    fn missing_context_rejected() {
        let empty = CostContext {
            expert_pred: None,
            table_row: None,
        };
        assert!(CostSpec::ExpertError.cost_of(empty, 1).is_err());
        assert!(CostSpec::ExplicitTable.cost_of(empty, 1).is_err());
    }

    #[test]
    fn table_cost_out_of_range_rejected() {
        let row = [1.5, 0.0];
        let ctx = CostContext {
            expert_pred: None,
            table_row: Some(&row),
        };
        assert!(matches!(
            CostSpec::ExplicitTable.cost_of(ctx, 1),
            Err(Error::CostOutOfRange(_))
        ));
    }

    #[test]
    fn psi_is_non_increasing_and_vanishes_at_one() {
        for psi in [PsiSpec::Log, PsiSpec::gce(0.7).unwrap(), PsiSpec::Mae] {
            let grid: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
            for w in grid.windows(2) {
                assert!(psi.eval(w[0]) >= psi.eval(w[1]), "{psi:?} increased");
            }
            assert_eq!(psi.eval(1.0), 0.0);
            assert!(psi.at_two_thirds() > 0.0);
            // limit from below: psi(1 - eps) decreasing to 0 as eps -> 0
            let mut eps = 0.1;
            let mut prev = psi.eval(1.0 - eps);
            while eps > 1e-12 {
                eps /= 10.0;
                let v = psi.eval(1.0 - eps);
                assert!(v <= prev && v >= 0.0);
                prev = v;
            }
            assert!(prev < 1e-11);
        }
    }

    #[test]
    fn gce_exponent_validated() {
        assert!(PsiSpec::gce(0.0).is_err());
        assert!(PsiSpec::gce(1.0).is_err());
        assert!(PsiSpec::gce(0.7).is_ok());
    }

    #[test]
    fn cond_instance_derived_quantities() {
        let inst = CondInstance::new(vec![0.7, 0.3], vec![0.0, 1.0]).unwrap();
        assert_eq!(inst.q(1), 0.0);
        assert_eq!(inst.q(2), 0.3);
        assert_eq!(inst.p_defer(), 0.7);
        assert_eq!(inst.y_max(), 1);
        // p_defer = sum (p_y - q_y) exactly by construction
        let direct: f64 = (1..=2).map(|y| inst.p(y) - inst.q(y)).sum();
        assert_eq!(inst.p_defer(), direct);
    }

    #[test]
    fn cond_instance_validates() {
        assert!(CondInstance::new(vec![0.7, 0.2], vec![0.0, 1.0]).is_err());
        assert!(CondInstance::new(vec![0.7, 0.3], vec![0.0, 1.5]).is_err());
        assert!(CondInstance::new(vec![1.2, -0.2], vec![0.0, 1.0]).is_err());
        assert!(CondInstance::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn binary_expert_costs_detected() {
        let inst = CondInstance::with_expert(vec![0.5, 0.25, 0.25], 2).unwrap();
        assert!(inst.has_binary_expert_costs());
        assert_eq!(inst.p_defer(), 0.25);
        let general = CondInstance::new(vec![0.5, 0.5], vec![0.3, 1.0]).unwrap();
        assert!(!general.has_binary_expert_costs());
        let all_ones = CondInstance::new(vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
        assert!(!all_ones.has_binary_expert_costs());
    }
}
