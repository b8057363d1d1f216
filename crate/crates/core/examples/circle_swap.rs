//! One iteration of the 22-robot circle swap.
//!
//! cargo run --release --example circle_swap -- [robust|non-robust] [dt]

use robust_cbf::sim::{run_scenario, summarize, FilterMode, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let filter_mode = match args.next().as_deref() {
        None | Some("robust") => FilterMode::Robust,
        Some("non-robust") => FilterMode::NonRobust,
        Some(other) => return Err(format!("unknown mode {other}").into()),
    };
    let dt = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.005);
    let cfg = ScenarioConfig {
        filter_mode,
        dt,
        ..ScenarioConfig::circle22()
    };
    let m = run_scenario(&cfg)?;
    let s = summarize(std::slice::from_ref(&m));
    println!(
        "worst min h {:.4e}, violated {:.3} s, avg wct {:.3} ms, goal completion {:.2}, fallback steps {}",
        s.worst_min_h, s.violation_time_s, s.avg_wct_ms, s.goal_completion, m.fallback_steps
    );
    let stride = (1.0 / dt).round().max(1.0) as usize;
    for (k, t) in m.times().enumerate().step_by(stride) {
        println!("{t:6.2}  {:+.5}", m.min_h[k]);
    }
    Ok(())
}
