//! Pointwise deferral loss, the comp-sum surrogate family, the RL2D
//! surrogate, the four baseline surrogates, and their analytic gradients.
//!
//! All softmax quantities are evaluated in the log domain with
//! max-subtraction; log-softmax values are score-minus-logsumexp so no
//! catastrophic cancellation occurs for large score spreads.

use serde::Serialize;

use crate::core::{predict, AugmentedScores, PsiSpec};
use crate::error::{Error, Result};

/// log(sum(exp(v))) with max-subtraction.
fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + sum.ln()
}

/// 1 / (1 + e^(-x)) without overflow on either tail.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow on either tail.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn softmax(scores: &AugmentedScores) -> (Vec<f64>, f64) {
    let lse = logsumexp(scores.values());
    let s = scores.values().iter().map(|h| (h - lse).exp()).collect();
    (s, lse)
}

fn check_label(scores: &AugmentedScores, y: usize, allow_deferral: bool) -> Result<()> {
    let max = if allow_deferral {
        scores.n() + 1
    } else {
        scores.n()
    };
    if y == 0 || y > max {
        return Err(Error::LabelOutOfRange { label: y, max });
    }
    Ok(())
}

fn check_cost(c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::CostOutOfRange(c))
    }
}

fn check_binary_cost(loss: &'static str, c: f64) -> Result<()> {
    if c == 0.0 || c == 1.0 {
        Ok(())
    } else {
        Err(Error::NonBinaryCost(loss, c))
    }
}

/// Target loss: zero-one error when predicting a class, the deferral cost
/// `c` when deferring. Always in [0, 1].
pub fn deferral_loss(scores: &AugmentedScores, y: usize, c: f64) -> Result<f64> {
    check_label(scores, y, false)?;
    check_cost(c)?;
    let pred = predict(scores);
    if pred.is_deferral(scores.n()) {
        Ok(c)
    } else if pred.index() != y {
        Ok(1.0)
    } else {
        Ok(0.0)
    }
}

/// Comp-sum loss: the transform applied to the softmax mass of label `y`
/// over the augmented label set. `y` may be any label in `1..=n+1`.
pub fn comp_sum_loss(psi: PsiSpec, scores: &AugmentedScores, y: usize) -> Result<f64> {
    check_label(scores, y, true)?;
    let lse = logsumexp(scores.values());
    let log_t = scores.value_of(y) - lse;
    Ok(match psi {
        PsiSpec::Log => -log_t,
        PsiSpec::Gce { q } => (1.0 - (q * log_t).exp()) / q,
        PsiSpec::Mae => 1.0 - log_t.exp(),
    })
}

/// Modified comp-sum loss: the transform applied to the combined softmax
/// mass of the true label and the deferral label. Defined for true labels
/// only (`y` in `1..=n`).
pub fn modified_comp_sum_loss(psi: PsiSpec, scores: &AugmentedScores, y: usize) -> Result<f64> {
    if y == scores.n() + 1 {
        return Err(Error::DeferralLabelRejected(y));
    }
    check_label(scores, y, false)?;
    let lse = logsumexp(scores.values());
    let pair = [scores.value_of(y), scores.deferral_score()];
    let log_u = logsumexp(&pair) - lse;
    Ok(match psi {
        PsiSpec::Log => -log_u,
        PsiSpec::Gce { q } => (1.0 - (q * log_u).exp()) / q,
        PsiSpec::Mae => 1.0 - log_u.exp(),
    })
}

/// RL2D surrogate: cost-weighted mixture of the comp-sum and modified
/// comp-sum losses, `c * l_comp + (1 - c) * l_mod`.
pub fn rl2d_loss(psi: PsiSpec, scores: &AugmentedScores, y: usize, c: f64) -> Result<f64> {
    check_cost(c)?;
    let comp = comp_sum_loss(psi, scores, y)?;
    let modified = modified_comp_sum_loss(psi, scores, y)?;
    Ok(c * comp + (1.0 - c) * modified)
}

/// Cross-entropy baseline for binary (expert-error) costs:
/// `-log softmax_y - (1 - c) log softmax_{n+1}`.
pub fn ce_baseline(scores: &AugmentedScores, y: usize, c: f64) -> Result<f64> {
    check_label(scores, y, false)?;
    check_binary_cost("ce_baseline", c)?;
    let lse = logsumexp(scores.values());
    Ok((lse - scores.value_of(y)) + (1.0 - c) * (lse - scores.deferral_score()))
}

/// One-vs-all baseline with the logistic loss `phi(t) = log(1 + e^-t)`,
/// for binary (expert-error) costs.
pub fn ova_baseline(scores: &AugmentedScores, y: usize, c: f64) -> Result<f64> {
    check_label(scores, y, false)?;
    check_binary_cost("ova_baseline", c)?;
    let n = scores.n();
    let mut total = softplus(-scores.value_of(y));
    for k in 1..=n + 1 {
        if k != y {
            total += softplus(scores.value_of(k));
        }
    }
    let h_def = scores.deferral_score();
    total += (1.0 - c) * (softplus(-h_def) - softplus(h_def));
    Ok(total)
}

/// Realizable surrogate baseline for binary (expert-error) costs:
/// `-2 log((e^{h_y} + (1 - c) e^{h_{n+1}}) / sum_k e^{h_k})`.
///
/// Evaluated through its own shifted-exponential route rather than the
/// comp-sum helpers, so the identity `rs = 2 * rl2d(log)` is a check
/// between independent computations.
pub fn rs_baseline(scores: &AugmentedScores, y: usize, c: f64) -> Result<f64> {
    check_label(scores, y, false)?;
    check_binary_cost("rs_baseline", c)?;
    let values = scores.values();
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = values.iter().map(|h| (h - m).exp()).sum();
    let numer = (scores.value_of(y) - m).exp() + (1.0 - c) * (scores.deferral_score() - m).exp();
    Ok(-2.0 * (numer.ln() - denom.ln()))
}

/// General-cost baseline: `l_comp(y) + (1 - c) * l_comp(n + 1)` for any
/// comp-sum member and any cost in [0, 1].
pub fn general_baseline(psi: PsiSpec, scores: &AugmentedScores, y: usize, c: f64) -> Result<f64> {
    check_label(scores, y, false)?;
    check_cost(c)?;
    Ok(comp_sum_loss(psi, scores, y)? + (1.0 - c) * comp_sum_loss(psi, scores, scores.n() + 1)?)
}

/// d/dh_k of the comp-sum loss at label `y`, written into `grad`.
fn add_comp_sum_gradient(
    psi: PsiSpec,
    scores: &AugmentedScores,
    s: &[f64],
    lse: f64,
    y: usize,
    weight: f64,
    grad: &mut [f64],
) {
    let yi = y - 1;
    match psi {
        PsiSpec::Log => {
            for (k, g) in grad.iter_mut().enumerate() {
                let delta = if k == yi { 1.0 } else { 0.0 };
                *g += weight * (s[k] - delta);
            }
        }
        PsiSpec::Gce { q } => {
            // psi'(t) * t = -t^q, with t^q = exp(q * log t)
            let tq = (q * (scores.value_of(y) - lse)).exp();
            for (k, g) in grad.iter_mut().enumerate() {
                let delta = if k == yi { 1.0 } else { 0.0 };
                *g += weight * -tq * (delta - s[k]);
            }
        }
        PsiSpec::Mae => {
            let t = s[yi];
            for (k, g) in grad.iter_mut().enumerate() {
                let delta = if k == yi { 1.0 } else { 0.0 };
                *g += weight * -t * (delta - s[k]);
            }
        }
    }
}

/// d/dh_k of the modified comp-sum loss at label `y`, written into `grad`.
fn add_modified_gradient(
    psi: PsiSpec,
    scores: &AugmentedScores,
    s: &[f64],
    lse: f64,
    y: usize,
    weight: f64,
    grad: &mut [f64],
) {
    let yi = y - 1;
    let last = scores.n();
    // shares of the pair mass: s_y / u and s_{n+1} / u, stable at any spread
    let ratio_y = sigmoid(scores.value_of(y) - scores.deferral_score());
    let ratio_def = 1.0 - ratio_y;
    match psi {
        PsiSpec::Log => {
            for (k, g) in grad.iter_mut().enumerate() {
                let share = if k == yi {
                    ratio_y
                } else if k == last {
                    ratio_def
                } else {
                    0.0
                };
                *g += weight * (s[k] - share);
            }
        }
        PsiSpec::Gce { q } => {
            let pair = [scores.value_of(y), scores.deferral_score()];
            let log_u = logsumexp(&pair) - lse;
            let uq = (q * log_u).exp();
            for (k, g) in grad.iter_mut().enumerate() {
                let share = if k == yi {
                    ratio_y
                } else if k == last {
                    ratio_def
                } else {
                    0.0
                };
                *g += weight * -uq * (share - s[k]);
            }
        }
        PsiSpec::Mae => {
            let u = s[yi] + s[last];
            for (k, g) in grad.iter_mut().enumerate() {
                let direct = if k == yi {
                    s[yi]
                } else if k == last {
                    s[last]
                } else {
                    0.0
                };
                *g += weight * -(direct - u * s[k]);
            }
        }
    }
}

/// Analytic gradient of [`rl2d_loss`] with respect to each of the `n + 1`
/// scores.
pub fn rl2d_gradient(psi: PsiSpec, scores: &AugmentedScores, y: usize, c: f64) -> Result<Vec<f64>> {
    check_label(scores, y, false)?;
    check_cost(c)?;
    let (s, lse) = softmax(scores);
    let mut grad = vec![0.0; scores.n() + 1];
    add_comp_sum_gradient(psi, scores, &s, lse, y, c, &mut grad);
    add_modified_gradient(psi, scores, &s, lse, y, 1.0 - c, &mut grad);
    Ok(grad)
}

fn ce_gradient(scores: &AugmentedScores, y: usize, c: f64) -> Result<Vec<f64>> {
    check_label(scores, y, false)?;
    check_binary_cost("ce_baseline", c)?;
    let (s, _) = softmax(scores);
    let last = scores.n();
    let grad = s
        .iter()
        .enumerate()
        .map(|(k, sk)| {
            let d_y = if k == y - 1 { 1.0 } else { 0.0 };
            let d_def = if k == last { 1.0 } else { 0.0 };
            (sk - d_y) + (1.0 - c) * (sk - d_def)
        })
        .collect();
    Ok(grad)
}

fn ova_gradient(scores: &AugmentedScores, y: usize, c: f64) -> Result<Vec<f64>> {
    check_label(scores, y, false)?;
    check_binary_cost("ova_baseline", c)?;
    let n = scores.n();
    let mut grad = vec![0.0; n + 1];
    for (k, g) in grad.iter_mut().enumerate() {
        *g = if k == y - 1 {
            -sigmoid(-scores.value_of(y))
        } else {
            sigmoid(scores.values()[k])
        };
    }
    // d/dh [phi(h) - phi(-h)] = -1
    grad[n] -= 1.0 - c;
    Ok(grad)
}

fn rs_gradient(scores: &AugmentedScores, y: usize, c: f64) -> Result<Vec<f64>> {
    check_label(scores, y, false)?;
    check_binary_cost("rs_baseline", c)?;
    let values = scores.values();
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let a: Vec<f64> = values.iter().map(|h| (h - m).exp()).collect();
    let denom: f64 = a.iter().sum();
    let last = scores.n();
    let numer = a[y - 1] + (1.0 - c) * a[last];
    let grad = a
        .iter()
        .enumerate()
        .map(|(k, ak)| {
            let d_num = if k == y - 1 {
                a[y - 1]
            } else if k == last {
                (1.0 - c) * a[last]
            } else {
                0.0
            };
            -2.0 * (d_num / numer - ak / denom)
        })
        .collect();
    Ok(grad)
}

fn general_gradient(psi: PsiSpec, scores: &AugmentedScores, y: usize, c: f64) -> Result<Vec<f64>> {
    check_label(scores, y, false)?;
    check_cost(c)?;
    let (s, lse) = softmax(scores);
    let mut grad = vec![0.0; scores.n() + 1];
    add_comp_sum_gradient(psi, scores, &s, lse, y, 1.0, &mut grad);
    add_comp_sum_gradient(psi, scores, &s, lse, scores.n() + 1, 1.0 - c, &mut grad);
    Ok(grad)
}

/// Selector over every implemented surrogate, used by the trainer, the
/// conditional-error machinery, and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LossKind {
    Rl2d(PsiSpec),
    Ce,
    Ova,
    Rs,
    General(PsiSpec),
}

impl LossKind {
    pub fn value(&self, scores: &AugmentedScores, y: usize, c: f64) -> Result<f64> {
        match self {
            Self::Rl2d(psi) => rl2d_loss(*psi, scores, y, c),
            Self::Ce => ce_baseline(scores, y, c),
            Self::Ova => ova_baseline(scores, y, c),
            Self::Rs => rs_baseline(scores, y, c),
            Self::General(psi) => general_baseline(*psi, scores, y, c),
        }
    }

    pub fn gradient(&self, scores: &AugmentedScores, y: usize, c: f64) -> Result<Vec<f64>> {
        match self {
            Self::Rl2d(psi) => rl2d_gradient(*psi, scores, y, c),
            Self::Ce => ce_gradient(scores, y, c),
            Self::Ova => ova_gradient(scores, y, c),
            Self::Rs => rs_gradient(scores, y, c),
            Self::General(psi) => general_gradient(*psi, scores, y, c),
        }
    }

    /// True for the baselines whose guarantees only cover expert
    /// classification-error costs.
    pub fn requires_binary_cost(&self) -> bool {
        matches!(self, Self::Ce | Self::Ova | Self::Rs)
    }

    pub fn name(&self) -> String {
        match self {
            Self::Rl2d(psi) => format!("rl2d({})", psi.name()),
            Self::Ce => "ce".to_string(),
            Self::Ova => "ova".to_string(),
            Self::Rs => "rs".to_string(),
            Self::General(psi) => format!("general({})", psi.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_3: f64 = 1.0986122886681098;
    const LN_3_HALVES: f64 = 0.4054651081081644;
    // (1/0.7) * (1 - (1/3)^0.7), 30-digit reference 0.766481347468614599768926526373
    const GCE_07_AT_THIRD: f64 = 0.7664813474686146;
    const THREE_LN_2: f64 = 2.0794415416798357;
    const TWO_LN_2: f64 = 1.3862943611198906;

    fn scores(v: &[f64]) -> AugmentedScores {
        AugmentedScores::new(v.to_vec()).unwrap()
    }

    fn zeros(n: usize) -> AugmentedScores {
        scores(&vec![0.0; n + 1])
    }

    #[test]
    fn deferral_loss_cases() {
        assert_eq!(deferral_loss(&scores(&[1.0, 3.0, 2.0, 0.0]), 2, 0.7).unwrap(), 0.0);
        assert_eq!(deferral_loss(&scores(&[0.0, 0.0, 0.0, 5.0]), 1, 0.3).unwrap(), 0.3);
        assert_eq!(deferral_loss(&scores(&[1.0, 3.0, 2.0, 0.0]), 1, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn deferral_loss_rejects_bad_label() {
        assert!(deferral_loss(&zeros(3), 4, 0.5).is_err());
        assert!(deferral_loss(&zeros(3), 0, 0.5).is_err());
    }

    #[test]
    fn comp_sum_uniform_values() {
        let s = zeros(2);
        assert!((comp_sum_loss(PsiSpec::Log, &s, 1).unwrap() - LN_3).abs() < 1e-12);
        assert!((comp_sum_loss(PsiSpec::Mae, &s, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let gce = PsiSpec::gce(0.7).unwrap();
        assert!((comp_sum_loss(gce, &s, 1).unwrap() - GCE_07_AT_THIRD).abs() < 1e-12);
    }

    #[test]
    fn modified_comp_sum_values() {
        let s = zeros(2);
        assert!((modified_comp_sum_loss(PsiSpec::Log, &s, 1).unwrap() - LN_3_HALVES).abs() < 1e-12);
        assert!((modified_comp_sum_loss(PsiSpec::Mae, &s, 1).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn modified_comp_sum_vanishes_when_true_label_dominates() {
        let s = scores(&[40.0, 0.0, 0.0]);
        for psi in [PsiSpec::Log, PsiSpec::gce(0.7).unwrap(), PsiSpec::Mae] {
            assert!(modified_comp_sum_loss(psi, &s, 1).unwrap() < 1e-12);
        }
    }

    #[test]
    fn modified_comp_sum_rejects_deferral_label() {
        assert!(matches!(
            modified_comp_sum_loss(PsiSpec::Log, &zeros(2), 3),
            Err(Error::DeferralLabelRejected(3))
        ));
    }

    #[test]
    fn rl2d_is_cost_mixture() {
        let s = zeros(2);
        assert!((rl2d_loss(PsiSpec::Log, &s, 1, 1.0).unwrap() - LN_3).abs() < 1e-12);
        assert!((rl2d_loss(PsiSpec::Log, &s, 1, 0.0).unwrap() - LN_3_HALVES).abs() < 1e-12);
        let mid = rl2d_loss(PsiSpec::Log, &s, 1, 0.5).unwrap();
        assert!((mid - 0.5 * (LN_3 + LN_3_HALVES)).abs() < 1e-12);
        assert!(rl2d_loss(PsiSpec::Log, &s, 1, 1.5).is_err());
    }

    #[test]
    fn ce_baseline_values() {
        let s = zeros(2);
        assert!((ce_baseline(&s, 1, 1.0).unwrap() - LN_3).abs() < 1e-12);
        assert!((ce_baseline(&s, 1, 0.0).unwrap() - 2.0 * LN_3).abs() < 1e-12);
        let spread = scores(&[40.0, 0.0, 0.0, 40.0]);
        assert!((ce_baseline(&spread, 1, 0.0).unwrap() - TWO_LN_2).abs() < 1e-9);
        assert!(ce_baseline(&s, 1, 0.5).is_err());
    }

    #[test]
    fn ova_baseline_values() {
        let s = zeros(2);
        assert!((ova_baseline(&s, 1, 1.0).unwrap() - THREE_LN_2).abs() < 1e-12);
        // phi(0) - phi(-0) = 0, so the deferral correction vanishes
        assert!((ova_baseline(&s, 1, 0.0).unwrap() - THREE_LN_2).abs() < 1e-12);
        assert!(ova_baseline(&s, 1, 0.25).is_err());
    }

    #[test]
    fn rs_baseline_values() {
        let s = zeros(2);
        assert!((rs_baseline(&s, 1, 1.0).unwrap() - 2.0 * LN_3).abs() < 1e-12);
        assert!((rs_baseline(&s, 1, 0.0).unwrap() - 2.0 * LN_3_HALVES).abs() < 1e-12);
    }

    #[test]
    fn general_baseline_values() {
        let s = zeros(2);
        assert!((general_baseline(PsiSpec::Log, &s, 1, 1.0).unwrap() - LN_3).abs() < 1e-12);
        assert!((general_baseline(PsiSpec::Log, &s, 1, 0.0).unwrap() - 2.0 * LN_3).abs() < 1e-12);
    }

    #[test]
    fn general_baseline_reduces_to_comp_sum_at_full_cost() {
        let s = scores(&[0.3, -1.2, 2.0, 0.4]);
        for psi in [PsiSpec::Log, PsiSpec::gce(0.7).unwrap(), PsiSpec::Mae] {
            let g = general_baseline(psi, &s, 2, 1.0).unwrap();
            let comp = comp_sum_loss(psi, &s, 2).unwrap();
            assert!((g - comp).abs() < 1e-15);
        }
    }

    #[test]
    fn rl2d_log_gradient_at_uniform_scores() {
        let g = rl2d_gradient(PsiSpec::Log, &zeros(2), 1, 1.0).unwrap();
        let expected = [1.0 / 3.0 - 1.0, 1.0 / 3.0, 1.0 / 3.0];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rl2d_mae_gradient_at_uniform_scores() {
        // c = 0: loss = 1 - (s_1 + s_3); grad_k = u s_k - direct_k
        let g = rl2d_gradient(PsiSpec::Mae, &zeros(2), 1, 0.0).unwrap();
        let expected = [-1.0 / 9.0, 2.0 / 9.0, -1.0 / 9.0];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn losses_stay_finite_and_nonnegative_at_large_spreads() {
        let s = scores(&[35.0, -35.0, 12.0, -20.0]);
        let gce = PsiSpec::gce(0.7).unwrap();
        for psi in [PsiSpec::Log, gce, PsiSpec::Mae] {
            for y in 1..=3 {
                for c in [0.0, 0.5, 1.0] {
                    let v = rl2d_loss(psi, &s, y, c).unwrap();
                    assert!(v.is_finite() && v >= -1e-15);
                    for g in rl2d_gradient(psi, &s, y, c).unwrap() {
                        assert!(g.is_finite());
                    }
                }
            }
        }
    }
}
