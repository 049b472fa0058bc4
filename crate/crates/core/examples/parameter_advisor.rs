//! Closed-form parameter bounds for a LASSO instance across delay bounds.
//!
//! cargo run --release --example parameter_advisor

use admm_async::advisor::{recommend, TheoryParams};
use admm_async::problems::gen_lasso;

fn main() -> admm_async::Result<()> {
    let instance = gen_lasso(16, 200, 100, 0.1, 0.01, 0.05, 1)?;
    for tau in [1, 2, 3, 5, 10] {
        let theory = TheoryParams::from_instance(&instance, tau, None);
        let rec = recommend(&theory, instance.is_convex())?;
        println!(
            "tau={tau:2}  L={:.2}  S={}  rho>{:.4e} -> {:.4e}  gamma>{:.4e} -> {:.4e}  alternative rho<={}",
            theory.lipschitz,
            theory.s,
            rec.rho_bound,
            rec.rho,
            rec.gamma_bound,
            rec.gamma,
            rec.rho_max_alternative
                .map_or("n/a".to_string(), |r| format!("{r:.4e}"))
        );
    }
    Ok(())
}
