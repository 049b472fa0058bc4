//! AD-ADMM under increasing delay bounds: first iteration reaching a target
//! accuracy, for tau = 1, 3, 5, 10 with a fixed penalty.
//!
//! cargo run --release --example ad_admm_delays

use admm_async::engine::{run_ad_admm, AlgoParams, Scheme};
use admm_async::experiment::{ArrivalPreset, ArrivalSpec};
use admm_async::problems::gen_lasso;
use admm_async::reference::proximal_gradient;
use admm_async::scheduler::{ArrivalModel, Schedule};

fn main() -> admm_async::Result<()> {
    let n_workers = 16;
    let instance = gen_lasso(n_workers, 200, 100, 0.1, 0.01, 0.05, 1)?;
    let f_star = proximal_gradient(&instance, 1e-10, 1_000_000)?.value;
    let probs = ArrivalSpec::Preset(ArrivalPreset::Tiers).probabilities(n_workers)?;
    let iters = 1000;
    for tau in [1, 3, 5, 10] {
        let model = ArrivalModel::new(probs.clone(), tau, 1, 7)?;
        let schedule = Schedule::generate(&model, iters)?;
        let mut params = AlgoParams::new(Scheme::AdAdmm, 500.0, 0.0, iters);
        params.reference_value = Some(f_star);
        let trace = run_ad_admm(&instance, &params, &schedule)?;
        let hit = trace
            .records
            .iter()
            .find(|r| (r.lagrangian - f_star).abs() / f_star <= 1e-4)
            .map(|r| r.k + 1);
        let mean_arrivals = schedule.records().iter().map(|r| r.arrivals.len()).sum::<usize>() as f64 / iters as f64;
        println!("tau={tau:2}  mean |A_k|={mean_arrivals:.2}  accuracy 1e-4 at k={hit:?}");
    }
    Ok(())
}
