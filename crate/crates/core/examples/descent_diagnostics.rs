//! Re-checks the descent, staleness and lower-bound inequalities along an
//! AD-ADMM run with advisor parameters, then on one with a penalty far below
//! them.
//!
//! cargo run --release --example descent_diagnostics

use admm_async::advisor::{recommend, TheoryParams};
use admm_async::diagnostics::check_trace;
use admm_async::engine::{run_ad_admm, AlgoParams, Scheme};
use admm_async::problems::gen_lasso;
use admm_async::reference::proximal_gradient;
use admm_async::scheduler::{ArrivalModel, Schedule};

fn main() -> admm_async::Result<()> {
    let instance = gen_lasso(4, 20, 10, 0.1, 0.01, 0.3, 3)?;
    let f_star = proximal_gradient(&instance, 1e-10, 1_000_000)?.value;
    let tau = 3;
    let iters = 300;
    let model = ArrivalModel::uniform(4, 0.4, tau, 1, 5)?;
    let schedule = Schedule::generate(&model, iters)?;
    let theory = TheoryParams::from_instance(&instance, tau, Some(&schedule));
    let rec = recommend(&theory, true)?;

    for (label, rho, gamma) in [("advisor", rec.rho, rec.gamma), ("rho = 1, gamma = 0", 1.0, 0.0)] {
        let mut params = AlgoParams::new(Scheme::AdAdmm, rho, gamma, iters);
        params.detect_divergence = false;
        let trace = run_ad_admm(&instance, &params, &schedule)?;
        let report = check_trace(&trace, &instance, tau, theory.s, Some(f_star))?;
        println!("{label}:");
        if let Some(l1) = &report.lemma1 {
            println!(
                "  descent:     {:?}, min slack {:.3e}, {} violations",
                l1.status, l1.min_slack, l1.violations
            );
        }
        println!(
            "  staleness:   {:?}, worst prefix gap {:.3e}",
            report.lemma2.status, report.lemma2.worst_gap
        );
        if let Some(l3) = &report.lemma3 {
            println!("  lower bound: {:?}, min margin {:.3e}", l3.status, l3.min_margin);
        }
        println!("  dual identity max residual {:.2e}", report.identity_max);
    }
    Ok(())
}
