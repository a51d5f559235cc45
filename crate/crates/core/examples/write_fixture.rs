//! Regenerates the committed fixture files: the benchmark fixture under
//! `fixtures/skillsbench` and a demo simulation config.
//!
//! ```text
//! cargo run --example write_fixture [-- <dir>]
//! ```

use std::path::PathBuf;

use skillshadow::fixture::{committed_dir, make_fixture, write_fixture, FixtureProfile};
use skillshadow::sim::demo_config;

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(committed_dir);
    for p in write_fixture(&make_fixture(FixtureProfile::SkillsBench), &dir).unwrap() {
        println!("{}", p.display());
    }
    let sim = dir.parent().expect("fixture dir has a parent").join("sim-demo.json");
    let mut text = serde_json::to_string_pretty(&demo_config(6, 300, 42)).unwrap();
    text.push('\n');
    std::fs::write(&sim, text).unwrap();
    println!("{}", sim.display());
}
