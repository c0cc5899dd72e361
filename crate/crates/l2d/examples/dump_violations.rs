//! Dump bound-check violations for offline inspection.

use l2d::core::PsiSpec;
use l2d::verify::{run_bounds_suite, BoundsParams};

fn main() {
    let params = BoundsParams {
        instances: 500,
        scores_per_instance: 20,
        slack: 1e-3,
        inner_tol: 0.0,
        seed: 303,
        grid_check: false,
    };
    for (psi, n) in [
        (PsiSpec::Log, 2usize),
        (PsiSpec::Log, 3),
        (PsiSpec::gce(0.7).unwrap(), 2),
    ] {
        let out = run_bounds_suite(psi, n, &params).unwrap();
        println!("== {} n={} violations {}", out.psi, n, out.violations);
        for r in out.reports.iter().filter(|r| !r.satisfied).take(3) {
            println!("{}", serde_json::to_string_pretty(r).unwrap());
        }
    }
}
