//! Two-stage clustered bootstrap of a pooled pass rate, compared with a
//! single-stage run that resamples only the clusters.
//!
//! Clusters are (task, model) pairs with very different pass rates, so most
//! of the uncertainty comes from which pairs were drawn.
//!
//! ```text
//! cargo run --release --example clustered_bootstrap
//! ```

use rand::Rng;
use skillshadow::stats::{clustered_bootstrap, trial_rng, BootstrapSpec, Cluster, ClusterView, Stages};

fn pooled(view: &[ClusterView<'_, bool>]) -> f64 {
    let (mut k, mut n) = (0usize, 0usize);
    for c in view {
        for s in c {
            k += s.iter().filter(|&&&x| x).count();
            n += s.len();
        }
    }
    k as f64 / n as f64
}

fn main() {
    let mut rng = trial_rng(7, 0);
    let clusters: Vec<Cluster<bool>> = (0..30)
        .map(|_| {
            let p: f64 = rng.random_range(0.1..0.9);
            let n = rng.random_range(8..20);
            Cluster::single((0..n).map(|_| rng.random_bool(p)).collect())
        })
        .collect();

    for stages in [Stages::One, Stages::Two] {
        let spec = BootstrapSpec {
            stages,
            ..BootstrapSpec::default()
        };
        let e = clustered_bootstrap(&clusters, pooled, &spec).unwrap();
        println!(
            "{stages:?}: {:.3} [{:.3}, {:.3}]  ({} trials, seed {})",
            e.point, e.lo, e.hi, spec.trials, spec.seed
        );
    }
}
