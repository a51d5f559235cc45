//! Ranks the distractors that agents reach for before the oracle skills, on
//! the bundled benchmark fixture.
//!
//! ```text
//! cargo run --example shadow_pairs -- lib-202
//! ```

use skillshadow::analysis::{prepare, shadow_pairs};
use skillshadow::fixture::{make_fixture, FixtureProfile};
use skillshadow::model::Metric;

fn main() {
    let arm = std::env::args().nth(1);
    let f = make_fixture(FixtureProfile::SkillsBench);
    let p = prepare(&f.dataset, 0.04, Metric::Binary).unwrap();
    println!("arm: {}", arm.as_deref().unwrap_or("all library arms"));
    for (i, sp) in shadow_pairs(&f.dataset, &p, arm.as_deref()).iter().enumerate() {
        println!(
            "{:>2}. {:<34} {:<38} x{}",
            i + 1,
            sp.task_id,
            sp.distractor,
            sp.first_pick_count
        );
        println!("    oracle: {}", sp.oracle_bundle.join(", "));
    }
}
