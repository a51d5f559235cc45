//! Wilson score intervals for pass rates.
//!
//! ```text
//! cargo run --example wilson -- 44 494
//! ```

use skillshadow::stats::wilson;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let cases: Vec<(u64, u64)> = match args.as_slice() {
        [k, n] => vec![(*k, *n)],
        _ => vec![(44, 494), (1, 8), (0, 5), (5, 5)],
    };
    for (k, n) in cases {
        for level in [0.90, 0.95, 0.99] {
            let e = wilson(k, n, level).unwrap();
            println!(
                "{k:>4}/{n:<4} level {level:.2}: {:.4} [{:.4}, {:.4}]",
                e.point, e.lo, e.hi
            );
        }
    }
}
