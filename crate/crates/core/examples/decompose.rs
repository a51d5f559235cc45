//! Decomposes a pass-rate drop from two hand-written event tables.
//!
//! ```text
//! cargo run --example decompose
//! ```

use skillshadow::estimate::{bounds, decompose, ImputePolicy};
use skillshadow::model::{ArmKind, EventTable, Metric, PerEvent};

fn table(kind: ArmKind, pi: [f64; 3], rho: [Option<f64>; 3]) -> EventTable {
    EventTable::from_probabilities(
        kind,
        Metric::Binary,
        PerEvent::new(pi[0], pi[1], pi[2]),
        PerEvent::new(rho[0], rho[1], rho[2]),
    )
    .expect("valid table")
}

fn main() {
    // Event order is (N, M, O): no oracle skill, distractor invoked, oracle only.
    let star = table(ArmKind::Star, [0.2, 0.0, 0.8], [Some(0.5), None, Some(0.9)]);

    for rho_o in [0.9, 0.8] {
        let full = table(ArmKind::Full, [0.4, 0.2, 0.4], [Some(0.5), Some(0.3), Some(rho_o)]);
        let d = decompose(&star, &full, ImputePolicy::Counterpart).unwrap();
        let b = bounds(&star, &full, ImputePolicy::Counterpart).unwrap();
        println!("rho_O under the full library = {rho_o}");
        println!("  delta     {:+.3}", d.delta);
        println!("  delta_ctx {:+.3}  (sup {:.3})", d.delta_ctx, b.ctx_sup);
        println!(
            "  delta_shd {:+.3}  (sup {:.3} tight, {:.3} loose)",
            d.delta_shd, b.shd_sup_tight, b.shd_sup_loose
        );
        println!("  residual  {:e}", d.delta_ctx + d.delta_shd - d.delta);
    }
}
