//! Conditional-error machinery and numerical certification of the
//! consistency bounds: closed-form deferral regret, approximate best-in-class
//! surrogate error via multi-start projected gradient descent, an
//! independent grid-search route for cross-validation, the concave
//! transforms relating the two regrets, and the scaling curve that drives
//! surrogate values to zero on realizable data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::core::{predict, AugmentedScores, CondInstance, CostSpec, PsiSpec};
use crate::data::DeferralDataset;
use crate::error::{Error, Result};
use crate::losses::{deferral_loss, rl2d_loss, LossKind};
use crate::model::LinearDeferralModel;

/// Score box for the inner search. Softmax saturates far below this bound,
/// so the constrained infimum matches the unconstrained one to below 1e-15.
pub const SCORE_BOX: f64 = 40.0;

fn check_dims(inst: &CondInstance, scores: &AugmentedScores) -> Result<()> {
    if inst.n() != scores.n() {
        return Err(Error::DimensionMismatch {
            expected: inst.n(),
            got: scores.n(),
        });
    }
    Ok(())
}

/// Conditional deferral error `1 - p_h`, where `p_h` is the probability of
/// the predicted label, or the surviving mass `p_defer` when deferring.
pub fn cond_error_deferral(inst: &CondInstance, scores: &AugmentedScores) -> Result<f64> {
    check_dims(inst, scores)?;
    let pred = predict(scores);
    let p_h = if pred.is_deferral(inst.n()) {
        inst.p_defer()
    } else {
        inst.p(pred.index())
    };
    Ok(1.0 - p_h)
}

/// Closed-form conditional deferral regret
/// `max(p_{y_max}, p_defer) - p_h`; always nonnegative.
pub fn cond_regret_deferral(inst: &CondInstance, scores: &AugmentedScores) -> Result<f64> {
    check_dims(inst, scores)?;
    let pred = predict(scores);
    let p_h = if pred.is_deferral(inst.n()) {
        inst.p_defer()
    } else {
        inst.p(pred.index())
    };
    Ok(inst.p(inst.y_max()).max(inst.p_defer()) - p_h)
}

/// Conditional surrogate error `sum_y p_y * loss(scores, y, c_y)`.
pub fn cond_error_surrogate(
    loss: &LossKind,
    inst: &CondInstance,
    scores: &AugmentedScores,
) -> Result<f64> {
    check_dims(inst, scores)?;
    let mut total = 0.0;
    for y in 1..=inst.n() {
        let p = inst.p(y);
        if p > 0.0 {
            total += p * loss.value(scores, y, inst.c(y))?;
        }
    }
    Ok(total)
}

fn cond_gradient_surrogate(
    loss: &LossKind,
    inst: &CondInstance,
    scores: &AugmentedScores,
) -> Result<Vec<f64>> {
    let mut total = vec![0.0; inst.n() + 1];
    for y in 1..=inst.n() {
        let p = inst.p(y);
        if p > 0.0 {
            let g = loss.gradient(scores, y, inst.c(y))?;
            for (t, gi) in total.iter_mut().zip(g) {
                *t += p * gi;
            }
        }
    }
    Ok(total)
}

/// Configuration for the multi-start inner minimization.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OptConfig {
    /// Number of starts: one at zero scores, one at the regret-optimal
    /// vertex scaled by 5, the rest Gaussian. At least 8 recommended.
    pub restarts: usize,
    pub max_iters: usize,
    /// Convergence on the infinity norm of the (projected) gradient.
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 600,
            grad_tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

/// Result of the inner minimization: an upper bound on the true
/// best-in-class conditional surrogate error, with the achieving scores.
#[derive(Debug, Clone, Serialize)]
pub struct BestInClass {
    pub value: f64,
    pub scores: Vec<f64>,
    /// False when no start reached the gradient tolerance; the value is
    /// still a valid upper bound on the infimum.
    pub converged: bool,
}

fn clamp_box(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.clamp(-SCORE_BOX, SCORE_BOX);
    }
}

/// Pin the last coordinate to zero by shifting; valid for shift-invariant
/// (softmax-based) losses.
fn pin_last(x: &mut [f64]) {
    let last = *x.last().unwrap();
    for v in x.iter_mut() {
        *v -= last;
    }
}

fn descend(
    loss: &LossKind,
    inst: &CondInstance,
    start: Vec<f64>,
    pin: bool,
    cfg: &OptConfig,
) -> Result<(f64, Vec<f64>, bool)> {
    let dim = inst.n() + 1;
    let mut x = start;
    if pin {
        pin_last(&mut x);
    }
    clamp_box(&mut x);
    let f = |v: &[f64]| -> Result<f64> {
        cond_error_surrogate(loss, inst, &AugmentedScores::new(v.to_vec())?)
    };
    let mut fx = f(&x)?;
    let mut step = 1.0;
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let mut g = cond_gradient_surrogate(loss, inst, &AugmentedScores::new(x.clone())?)?;
        if pin {
            g[dim - 1] = 0.0;
        }
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        let ginf = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if ginf <= cfg.grad_tol {
            converged = true;
            break;
        }
        // Armijo backtracking with projection onto the score box; the step
        // is allowed to grow so saturating (boundary) minima are reached in
        // logarithmically many iterations.
        let mut t = step;
        let mut accepted = false;
        while t >= 1e-18 {
            let mut cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - t * gi).collect();
            clamp_box(&mut cand);
            let fc = f(&cand)?;
            if fc <= fx - 1e-4 * t * gnorm2 {
                x = cand;
                fx = fc;
                accepted = true;
                break;
            }
            t /= 2.0;
        }
        if !accepted {
            // No admissible step: at a box-constrained or numerically flat
            // minimum.
            converged = ginf <= 1e-6;
            break;
        }
        step = (t * 2.0).min(1e16);
    }
    Ok((fx, x, converged))
}

/// Approximate infimum over all score vectors of the conditional surrogate
/// error, via multi-start projected gradient descent with backtracking line
/// search. The returned value is an upper bound on the true infimum.
pub fn best_in_class_surrogate(
    loss: &LossKind,
    inst: &CondInstance,
    cfg: &OptConfig,
) -> Result<BestInClass> {
    let dim = inst.n() + 1;
    let pin = !matches!(loss, LossKind::Ova);
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(cfg.restarts.max(2));
    starts.push(vec![0.0; dim]);
    let vertex = if inst.p(inst.y_max()) >= inst.p_defer() {
        inst.y_max() - 1
    } else {
        dim - 1
    };
    let mut vertex_start = vec![0.0; dim];
    vertex_start[vertex] = 5.0;
    starts.push(vertex_start);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    while starts.len() < cfg.restarts.max(2) {
        starts.push(
            (0..dim)
                .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
    }
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for start in starts {
        let (value, scores, converged) = descend(loss, inst, start, pin, cfg)?;
        if best.as_ref().is_none_or(|(v, _, _)| value < *v) {
            best = Some((value, scores, converged));
        }
    }
    let (value, scores, converged) = best.unwrap();
    Ok(BestInClass {
        value,
        scores,
        converged,
    })
}

/// Independent gradient-free route to the best-in-class surrogate error for
/// cross-validating [`best_in_class_surrogate`] at small `n`: a dense grid
/// scan followed by successive refinements around the best cell.
pub fn grid_search_best_in_class(
    loss: &LossKind,
    inst: &CondInstance,
    lo: f64,
    hi: f64,
    step: f64,
    refinements: usize,
) -> Result<f64> {
    let pin = !matches!(loss, LossKind::Ova);
    let dim = inst.n() + 1;
    let free = if pin { dim - 1 } else { dim };
    let f = |coords: &[f64]| -> Result<f64> {
        let mut v = coords.to_vec();
        if pin {
            v.push(0.0);
        }
        cond_error_surrogate(loss, inst, &AugmentedScores::new(v)?)
    };
    let scan = |center: &[f64], half: f64, step: f64, f_best: &mut f64, x_best: &mut Vec<f64>| -> Result<()> {
        let counts: Vec<usize> = (0..free).map(|_| ((2.0 * half / step).round() as usize) + 1).collect();
        let mut idx = vec![0usize; free];
        let mut coords = vec![0.0; free];
        loop {
            for k in 0..free {
                coords[k] = (center[k] - half + idx[k] as f64 * step).clamp(-SCORE_BOX, SCORE_BOX);
            }
            let v = f(&coords)?;
            if v < *f_best {
                *f_best = v;
                x_best.copy_from_slice(&coords);
            }
            // odometer
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < counts[k] {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == free {
                    return Ok(());
                }
            }
        }
    };
    let center0 = vec![(lo + hi) / 2.0; free];
    let mut f_best = f64::INFINITY;
    let mut x_best = vec![0.0; free];
    scan(&center0, (hi - lo) / 2.0, step, &mut f_best, &mut x_best)?;
    let mut cur_step = step;
    for _ in 0..refinements {
        let center = x_best.clone();
        let half = 2.0 * cur_step;
        cur_step /= 4.0;
        scan(&center, half, cur_step, &mut f_best, &mut x_best)?;
    }
    Ok(f_best)
}

/// Concave transform relating deferral regret to surrogate regret: one
/// member per comp-sum transform, with the class count baked in.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GammaSpec {
    pub psi: PsiSpec,
    pub n: usize,
}

impl GammaSpec {
    pub fn new(psi: PsiSpec, n: usize) -> Self {
        Self { psi, n }
    }

    /// Evaluate the transform at `t >= 0`.
    pub fn apply(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::NegativeGammaArgument(t));
        }
        let n1 = (self.n + 1) as f64;
        Ok(match self.psi {
            PsiSpec::Log => (2.0 * t).sqrt(),
            PsiSpec::Gce { q } => (2.0 * n1.powf(q) * t).sqrt(),
            PsiSpec::Mae => n1 * t,
        })
    }

    /// The log and GCE transforms certify only binary expert-error costs;
    /// the MAE transform covers any cost in [0, 1].
    pub fn admits(&self, inst: &CondInstance) -> bool {
        matches!(self.psi, PsiSpec::Mae) || inst.has_binary_expert_costs()
    }
}

/// Outcome of one bound check at a fixed instance and score vector.
#[derive(Debug, Clone, Serialize)]
pub struct RegretReport {
    pub instance: CondInstance,
    pub scores: Vec<f64>,
    pub deferral_regret: f64,
    /// Surrogate regret after clamping small negatives (the approximate
    /// best-in-class value is one-sided, so tiny negatives are numerical).
    pub surrogate_regret: f64,
    pub raw_surrogate_regret: f64,
    pub gamma_of_surrogate: f64,
    pub satisfied: bool,
    pub slack_used: f64,
    pub inner_tol: f64,
    pub inner_converged: bool,
}

/// Check `regret_def <= gamma(regret_sur + inner_tol) + slack` for the RL2D
/// surrogate selected by `gamma.psi`, using a precomputed best-in-class
/// value (so one inner minimization can serve many score vectors).
pub fn check_regret_bound_with_best(
    inst: &CondInstance,
    scores: &AugmentedScores,
    gamma: &GammaSpec,
    slack: f64,
    inner_tol: f64,
    best: &BestInClass,
) -> Result<RegretReport> {
    if !gamma.admits(inst) {
        return Err(Error::GammaCostMismatch {
            gamma: gamma.psi.name(),
            costs: inst.costs().to_vec(),
        });
    }
    let loss = LossKind::Rl2d(gamma.psi);
    let deferral_regret = cond_regret_deferral(inst, scores)?;
    let cond_err = cond_error_surrogate(&loss, inst, scores)?;
    // The evaluated hypothesis is itself a witness for the infimum.
    let c_star = best.value.min(cond_err);
    let raw = cond_err - c_star;
    let surrogate_regret = raw.max(0.0);
    let gamma_of_surrogate = gamma.apply(surrogate_regret + inner_tol)?;
    Ok(RegretReport {
        instance: inst.clone(),
        scores: scores.values().to_vec(),
        deferral_regret,
        surrogate_regret,
        raw_surrogate_regret: raw,
        gamma_of_surrogate,
        satisfied: deferral_regret <= gamma_of_surrogate + slack,
        slack_used: slack,
        inner_tol,
        inner_converged: best.converged,
    })
}

/// Check the consistency bound at one instance and score vector, running
/// the inner minimization internally.
pub fn check_regret_bound(
    inst: &CondInstance,
    scores: &AugmentedScores,
    gamma: &GammaSpec,
    slack: f64,
    inner_tol: f64,
    opt: &OptConfig,
) -> Result<RegretReport> {
    if !gamma.admits(inst) {
        return Err(Error::GammaCostMismatch {
            gamma: gamma.psi.name(),
            costs: inst.costs().to_vec(),
        });
    }
    let best = best_in_class_surrogate(&LossKind::Rl2d(gamma.psi), inst, opt)?;
    check_regret_bound_with_best(inst, scores, gamma, slack, inner_tol, &best)
}

/// Mean RL2D loss of the scaled witness over a realizable dataset, one
/// value per scaling factor. The witness must achieve zero deferral loss on
/// every example; this is validated before any curve value is computed.
pub fn scaling_gap_curve(
    psi: PsiSpec,
    dataset: &DeferralDataset,
    cost: &CostSpec,
    witness: &LinearDeferralModel,
    alphas: &[f64],
) -> Result<Vec<f64>> {
    let m = dataset.len();
    let mut scores = Vec::with_capacity(m);
    let mut costs = Vec::with_capacity(m);
    for i in 0..m {
        let s = witness.scores(dataset.features(i))?;
        let c = dataset.cost_of_example(i, cost)?;
        let loss = deferral_loss(&s, dataset.label(i), c)?;
        if loss != 0.0 {
            return Err(Error::WitnessNotRealizable { example: i, loss });
        }
        scores.push(s);
        costs.push(c);
    }
    let mut curve = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut total = 0.0;
        for i in 0..m {
            total += rl2d_loss(psi, &scores[i].scaled(alpha), dataset.label(i), costs[i])?;
        }
        curve.push(total / m as f64);
    }
    Ok(curve)
}
