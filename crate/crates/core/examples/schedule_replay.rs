//! Generates a bounded-delay schedule, stores it as JSON lines, reads it back
//! and confirms the replayed run is bit-identical.
//!
//! cargo run --release --example schedule_replay

use admm_async::engine::{run_ad_admm, AlgoParams, Scheme};
use admm_async::problems::gen_lasso;
use admm_async::scheduler::{ArrivalModel, Schedule};

fn main() -> admm_async::Result<()> {
    let instance = gen_lasso(6, 40, 20, 0.1, 0.01, 0.2, 2)?;
    let model = ArrivalModel::new(vec![0.9, 0.5, 0.5, 0.2, 0.1, 0.05], 4, 2, 42)?;
    let schedule = Schedule::generate(&model, 200)?;
    for r in schedule.records().iter().take(6) {
        println!("k={}  arrivals={:?}  delays before={:?}", r.k, r.arrivals, r.d);
    }
    println!(
        "forced arrivals keep every delay below tau: {}",
        schedule.bounded_delay_violation(4).is_none()
    );

    let path = std::env::temp_dir().join("admm_async_schedule_example.jsonl");
    schedule.write_jsonl(&path)?;
    let replayed = Schedule::read_jsonl(&path)?;
    let params = AlgoParams::new(Scheme::AdAdmm, 200.0, 0.0, 200);
    let a = run_ad_admm(&instance, &params, &schedule)?;
    let b = run_ad_admm(&instance, &params, &replayed)?;
    println!("replayed trace identical: {}", a.to_csv() == b.to_csv());
    std::fs::remove_file(path)?;
    Ok(())
}
