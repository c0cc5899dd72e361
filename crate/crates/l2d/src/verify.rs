//! Named verification suites: randomized domination checks, closed-form
//! regret versus brute-force enumeration, consistency-bound certification
//! with grid cross-validation, the two-times identity between the
//! realizable-surrogate baseline and the log RL2D loss, scaling curves on
//! realizable data, and finite-difference gradient checks.
//!
//! Each suite returns a serializable report; the CLI maps zero violations
//! to exit code 0 and writes reports as JSON lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::condcheck::{
    best_in_class_surrogate, check_regret_bound_with_best, cond_regret_deferral,
    grid_search_best_in_class, scaling_gap_curve, GammaSpec, OptConfig, RegretReport,
};
use crate::core::{AugmentedScores, CondInstance, CostSpec, PsiSpec};
use crate::data::DeferralDataset;
use crate::error::Result;
use crate::losses::{deferral_loss, rl2d_loss, rs_baseline, LossKind};
use crate::model::LinearDeferralModel;
use crate::train::rel_err;

/// Class counts the randomized suites cycle through.
pub const SUITE_NS: [usize; 3] = [2, 3, 5];

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize, std: f64) -> AugmentedScores {
    AugmentedScores::new(
        (0..=n)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
    .expect("finite by construction")
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let sum: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
    // force exact normalization so CondInstance accepts it
    let err: f64 = p.iter().sum::<f64>() - 1.0;
    p[0] -= err;
    p
}

fn random_binary_instance(rng: &mut ChaCha8Rng, n: usize) -> CondInstance {
    let p = random_simplex(rng, n);
    let g = rng.gen_range(1..=n);
    CondInstance::with_expert(p, g).expect("valid by construction")
}

fn random_general_instance(rng: &mut ChaCha8Rng, n: usize) -> CondInstance {
    let p = random_simplex(rng, n);
    let c = (0..n).map(|_| rng.gen::<f64>()).collect();
    CondInstance::new(p, c).expect("valid by construction")
}

// ---------------------------------------------------------------------------
// Domination
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    pub draws: usize,
    pub checks: usize,
    pub violations: usize,
    /// Largest observed `L_def - L_RL2D / psi(2/3)`; negative when the
    /// bound holds everywhere.
    pub max_excess: f64,
    pub slack: f64,
}

/// Randomized check of the pointwise bound `L_def <= L_RL2D / psi(2/3)`
/// for all three transforms.
pub fn run_domination_suite(draws: usize, seed: u64, slack: f64) -> Result<DominationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psis = [PsiSpec::Log, PsiSpec::gce(0.7)?, PsiSpec::Mae];
    let mut violations = 0;
    let mut checks = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for i in 0..draws {
        let n = SUITE_NS[i % SUITE_NS.len()];
        let scores = random_scores(&mut rng, n, 3.0);
        let y = rng.gen_range(1..=n);
        let c = rng.gen::<f64>();
        let target = deferral_loss(&scores, y, c)?;
        for psi in psis {
            let bound = rl2d_loss(psi, &scores, y, c)? / psi.at_two_thirds();
            let excess = target - bound;
            max_excess = max_excess.max(excess);
            if excess > slack {
                violations += 1;
            }
            checks += 1;
        }
    }
    Ok(DominationReport {
        draws,
        checks,
        violations,
        max_excess,
        slack,
    })
}

// ---------------------------------------------------------------------------
// Closed-form regret vs enumeration
// ---------------------------------------------------------------------------

/// One-hot scores that make the prediction rule select `label`.
fn scores_predicting(n: usize, label: usize) -> AugmentedScores {
    let mut v = vec![0.0; n + 1];
    v[label - 1] = 1.0;
    AugmentedScores::new(v).expect("valid")
}

/// Brute-force conditional deferral error of predicting `label`, averaging
/// the pointwise deferral loss over labels drawn from the instance.
pub fn enumerated_cond_error(inst: &CondInstance, label: usize) -> Result<f64> {
    let scores = scores_predicting(inst.n(), label);
    let mut total = 0.0;
    for y in 1..=inst.n() {
        total += inst.p(y) * deferral_loss(&scores, y, inst.c(y))?;
    }
    Ok(total)
}

/// Brute-force conditional deferral regret of predicting `label`:
/// enumerated error minus the minimum over all `n + 1` predictions.
pub fn enumerated_cond_regret(inst: &CondInstance, label: usize) -> Result<f64> {
    let mut best = f64::INFINITY;
    for k in 1..=inst.n() + 1 {
        best = best.min(enumerated_cond_error(inst, k)?);
    }
    Ok(enumerated_cond_error(inst, label)? - best)
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub instances: usize,
    pub checks: usize,
    pub max_abs_deviation: f64,
}

/// Closed-form conditional deferral regret versus brute-force enumeration
/// over all `n + 1` predictions, on random instances with both binary and
/// general costs.
pub fn run_lemma_suite(instances: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dev = 0.0f64;
    let mut checks = 0;
    for i in 0..instances {
        let n = SUITE_NS[i % SUITE_NS.len()];
        let inst = if i % 2 == 0 {
            random_binary_instance(&mut rng, n)
        } else {
            random_general_instance(&mut rng, n)
        };
        for k in 1..=n + 1 {
            let scores = scores_predicting(n, k);
            let closed = cond_regret_deferral(&inst, &scores)?;
            let enumerated = enumerated_cond_regret(&inst, k)?;
            max_dev = max_dev.max((closed - enumerated).abs());
            checks += 1;
        }
    }
    Ok(LemmaReport {
        instances,
        checks,
        max_abs_deviation: max_dev,
    })
}

// ---------------------------------------------------------------------------
// Consistency-bound certification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BoundsSuiteReport {
    pub psi: String,
    pub n: usize,
    pub instances: usize,
    pub checks: usize,
    pub violations: usize,
    /// Largest `|multistart - grid|` when grid cross-validation ran.
    pub max_grid_disagreement: Option<f64>,
    pub unconverged_inner: usize,
    #[serde(skip)]
    pub reports: Vec<RegretReport>,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundsParams {
    pub instances: usize,
    pub scores_per_instance: usize,
    pub slack: f64,
    pub inner_tol: f64,
    pub seed: u64,
    /// Cross-validate the inner minimizer against grid search when n = 2.
    pub grid_check: bool,
}

impl Default for BoundsParams {
    fn default() -> Self {
        Self {
            instances: 500,
            scores_per_instance: 20,
            slack: 1e-3,
            inner_tol: 0.0,
            seed: 0xb0cd,
            grid_check: true,
        }
    }
}

/// Certify `regret_def <= gamma(regret_sur) + slack` on random instances for
/// one transform and one class count. Binary expert-error costs are drawn
/// for the log and GCE transforms (their hypothesis); uniform costs for MAE.
pub fn run_bounds_suite(psi: PsiSpec, n: usize, params: &BoundsParams) -> Result<BoundsSuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let gamma = GammaSpec::new(psi, n);
    let loss = LossKind::Rl2d(psi);
    let opt = OptConfig {
        seed: params.seed ^ 0x9e37_79b9,
        ..OptConfig::default()
    };
    let mut reports = Vec::with_capacity(params.instances * params.scores_per_instance);
    let mut violations = 0;
    let mut unconverged = 0;
    let mut max_grid: Option<f64> = None;
    for _ in 0..params.instances {
        let inst = if matches!(psi, PsiSpec::Mae) {
            random_general_instance(&mut rng, n)
        } else {
            random_binary_instance(&mut rng, n)
        };
        let best = best_in_class_surrogate(&loss, &inst, &opt)?;
        if !best.converged {
            unconverged += 1;
        }
        if params.grid_check && n == 2 {
            let grid = grid_search_best_in_class(&loss, &inst, -10.0, 10.0, 0.25, 5)?;
            let disagreement = (best.value - grid).abs();
            max_grid = Some(max_grid.unwrap_or(0.0).max(disagreement));
        }
        for _ in 0..params.scores_per_instance {
            let scores = random_scores(&mut rng, n, 3.0);
            let report = check_regret_bound_with_best(
                &inst,
                &scores,
                &gamma,
                params.slack,
                params.inner_tol,
                &best,
            )?;
            if !report.satisfied {
                violations += 1;
            }
            reports.push(report);
        }
    }
    Ok(BoundsSuiteReport {
        psi: psi.name(),
        n,
        instances: params.instances,
        checks: reports.len(),
        violations,
        max_grid_disagreement: max_grid,
        unconverged_inner: unconverged,
        reports,
    })
}

// ---------------------------------------------------------------------------
// RS identity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RsIdentityReport {
    pub draws: usize,
    pub violations: usize,
    pub max_abs_diff: f64,
    pub tolerance: f64,
}

/// `rs_baseline = 2 * rl2d_loss(log)` for binary costs, checked between the
/// two independent evaluation routes.
pub fn run_rs_identity_suite(draws: usize, seed: u64, tolerance: f64) -> Result<RsIdentityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_diff = 0.0f64;
    let mut violations = 0;
    for i in 0..draws {
        let n = SUITE_NS[i % SUITE_NS.len()];
        let scores = random_scores(&mut rng, n, 3.0);
        let y = rng.gen_range(1..=n);
        let c = if rng.gen_bool(0.5) { 0.0 } else { 1.0 };
        let rs = rs_baseline(&scores, y, c)?;
        let rl2d = rl2d_loss(PsiSpec::Log, &scores, y, c)?;
        let diff = (rs - 2.0 * rl2d).abs();
        max_diff = max_diff.max(diff);
        if diff > tolerance {
            violations += 1;
        }
    }
    Ok(RsIdentityReport {
        draws,
        violations,
        max_abs_diff: max_diff,
        tolerance,
    })
}

// ---------------------------------------------------------------------------
// Scaling gap curves
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub psi: String,
    pub alphas: Vec<f64>,
    pub curve: Vec<f64>,
    pub non_increasing: bool,
    pub final_value: f64,
}

/// Scaling curves of the witness on a realizable dataset for all three
/// transforms, with monotonicity checked up to 1e-12 of float noise.
pub fn run_gap_suite(
    dataset: &DeferralDataset,
    witness: &LinearDeferralModel,
    cost: &CostSpec,
    alphas: &[f64],
) -> Result<Vec<GapReport>> {
    let mut out = Vec::new();
    for psi in [PsiSpec::Log, PsiSpec::gce(0.7)?, PsiSpec::Mae] {
        let curve = scaling_gap_curve(psi, dataset, cost, witness, alphas)?;
        let non_increasing = curve.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        out.push(GapReport {
            psi: psi.name(),
            alphas: alphas.to_vec(),
            final_value: *curve.last().unwrap_or(&f64::NAN),
            curve,
            non_increasing,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Gradient checks (loss level)
// ---------------------------------------------------------------------------

/// Central finite-difference gradient of a pointwise loss in score space.
pub fn fd_gradient(
    loss: &LossKind,
    scores: &AugmentedScores,
    y: usize,
    c: f64,
    step: f64,
) -> Result<Vec<f64>> {
    let dim = scores.n() + 1;
    let mut grad = Vec::with_capacity(dim);
    for k in 0..dim {
        let mut up = scores.values().to_vec();
        up[k] += step;
        let mut down = scores.values().to_vec();
        down[k] -= step;
        let fu = loss.value(&AugmentedScores::new(up)?, y, c)?;
        let fd = loss.value(&AugmentedScores::new(down)?, y, c)?;
        grad.push((fu - fd) / (2.0 * step));
    }
    Ok(grad)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckSuiteEntry {
    pub loss: String,
    pub points: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckSuiteReport {
    pub tolerance: f64,
    pub step: f64,
    pub entries: Vec<GradCheckSuiteEntry>,
    pub violations: usize,
}

/// Every loss with a gradient, checked against central finite differences
/// at random points.
pub fn run_loss_gradcheck_suite(
    points_per_loss: usize,
    seed: u64,
    tolerance: f64,
) -> Result<GradCheckSuiteReport> {
    let step = 1e-5;
    let gce = PsiSpec::gce(0.7)?;
    let losses = [
        LossKind::Rl2d(PsiSpec::Log),
        LossKind::Rl2d(gce),
        LossKind::Rl2d(PsiSpec::Mae),
        LossKind::Ce,
        LossKind::Ova,
        LossKind::Rs,
        LossKind::General(PsiSpec::Log),
        LossKind::General(gce),
        LossKind::General(PsiSpec::Mae),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let mut violations = 0;
    for loss in losses {
        let mut max_rel = 0.0f64;
        for i in 0..points_per_loss {
            let n = SUITE_NS[i % SUITE_NS.len()];
            let scores = random_scores(&mut rng, n, 3.0);
            let y = rng.gen_range(1..=n);
            let c = if loss.requires_binary_cost() {
                if rng.gen_bool(0.5) {
                    0.0
                } else {
                    1.0
                }
            } else {
                rng.gen::<f64>()
            };
            let analytic = loss.gradient(&scores, y, c)?;
            let numeric = fd_gradient(&loss, &scores, y, c, step)?;
            for (a, b) in analytic.iter().zip(&numeric) {
                max_rel = max_rel.max(rel_err(*a, *b));
            }
        }
        let passed = max_rel <= tolerance;
        if !passed {
            violations += 1;
        }
        entries.push(GradCheckSuiteEntry {
            loss: loss.name(),
            points: points_per_loss,
            max_rel_err: max_rel,
            passed,
        });
    }
    Ok(GradCheckSuiteReport {
        tolerance,
        step,
        entries,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domination_holds_on_a_quick_run() {
        let report = run_domination_suite(2_000, 7, 1e-12).unwrap();
        assert_eq!(report.violations, 0, "max excess {}", report.max_excess);
    }

    #[test]
    fn lemma_closed_form_matches_enumeration_quick() {
        let report = run_lemma_suite(500, 11).unwrap();
        assert!(report.max_abs_deviation <= 1e-12);
    }

    #[test]
    fn lemma_spec_instances() {
        // p = (0.7, 0.3), c = (0, 1): deferring has error 0.3, regret 0;
        // predicting label 2 has regret 0.4
        let inst = CondInstance::new(vec![0.7, 0.3], vec![0.0, 1.0]).unwrap();
        assert!((enumerated_cond_error(&inst, 3).unwrap() - 0.3).abs() < 1e-15);
        assert!((enumerated_cond_regret(&inst, 2).unwrap() - 0.4).abs() < 1e-15);
        let all_cost = CondInstance::new(vec![0.6, 0.4], vec![1.0, 1.0]).unwrap();
        assert!((enumerated_cond_regret(&all_cost, 3).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn rs_identity_quick() {
        let report = run_rs_identity_suite(2_000, 3, 1e-9).unwrap();
        assert_eq!(report.violations, 0, "max diff {}", report.max_abs_diff);
    }

    #[test]
    fn gradcheck_quick() {
        let report = run_loss_gradcheck_suite(50, 17, 1e-5).unwrap();
        assert_eq!(report.violations, 0, "{:#?}", report.entries);
    }

    #[test]
    fn bounds_quick_log_n2() {
        let params = BoundsParams {
            instances: 25,
            scores_per_instance: 5,
            ..BoundsParams::default()
        };
        let report = run_bounds_suite(PsiSpec::Log, 2, &params).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.max_grid_disagreement.unwrap() <= 1e-4);
    }
}
