//! Non-convex sparse PCA with AD-ADMM, for two penalty multiples of the
//! largest Gram eigenvalue.
//!
//! cargo run --release --example sparse_pca

use admm_async::engine::{run_ad_admm, AlgoParams, InitialPoint, Scheme};
use admm_async::experiment::{ArrivalPreset, ArrivalSpec};
use admm_async::problems::gen_sparse_pca;
use admm_async::scheduler::{ArrivalModel, Schedule};

fn main() -> admm_async::Result<()> {
    let n_workers = 8;
    let instance = gen_sparse_pca(n_workers, 100, 50, 0.1, 500, 1)?;
    let lmax = instance.max_gram_eigenvalue().expect("quadratic blocks");
    println!("max lambda_max(B^T B) = {lmax:.3}, L = {:.3}", instance.lipschitz());
    let probs = ArrivalSpec::Preset(ArrivalPreset::Halves).probabilities(n_workers)?;
    let iters = 2000;
    for beta in [1.5, 3.0, 6.0] {
        for tau in [1, 3] {
            let model = ArrivalModel::new(probs.clone(), tau, 1, 7)?;
            let schedule = Schedule::generate(&model, iters)?;
            let mut params = AlgoParams::new(Scheme::AdAdmm, beta * lmax, 0.0, iters);
            // x = 0 is stationary, so start elsewhere.
            params.initial = InitialPoint::Random { seed: 11, scale: 0.1 };
            params.track_objective = true;
            let trace = run_ad_admm(&instance, &params, &schedule)?;
            let last = trace.last().expect("at least one iteration");
            println!(
                "beta={beta:<3} tau={tau}  iterations={:4}  diverged={:5}  L={:.6}  kkt={:.2e}",
                trace.iterations(),
                trace.diverged(),
                last.lagrangian,
                last.kkt.max()
            );
        }
    }
    Ok(())
}
