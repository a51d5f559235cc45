//! Simulates logs with known effects and checks that the estimator recovers
//! them.
//!
//! ```text
//! cargo run --release --example simulate -- 8 400
//! ```

use skillshadow::analysis::{effect_rows, prepare, AnalysisConfig, ViewSelection};
use skillshadow::sim::demo_config;

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer"));
    let pairs = args.next().unwrap_or(6);
    let per_arm = args.next().unwrap_or(300);

    let cfg = demo_config(pairs, per_arm, 42);
    let analysis = AnalysisConfig::default();
    let out = cfg.run(analysis.metric).unwrap();
    let prepared = prepare(&out.dataset, analysis.tau, analysis.metric).unwrap();
    let sel = ViewSelection {
        pairs: false,
        models: false,
        pooled: true,
    };
    let row = effect_rows(&prepared, &cfg.full_arm, sel, &analysis).unwrap().remove(0);
    let e = row.effects.expect("populated cells");
    let truth = &out.truth.pair_mean;

    println!("{pairs} pairs, {per_arm} trajectories per arm, pair-mean aggregation");
    println!("{:<10} {:>8} {:>8} {:>18}", "", "truth", "estimate", "95% interval");
    for (name, t, est) in [
        ("delta", truth.delta, &e.delta),
        ("delta_ctx", truth.delta_ctx, &e.delta_ctx),
        ("delta_shd", truth.delta_shd, &e.delta_shd),
        ("ctx_sup", truth.ctx_sup, &e.ctx_sup),
        ("shd_sup", truth.shd_sup_tight, &e.shd_sup_tight),
    ] {
        println!(
            "{name:<10} {t:>8.3} {:>8.3}   [{:>6.3}, {:>6.3}]",
            est.point, est.lo, est.hi
        );
    }
}
