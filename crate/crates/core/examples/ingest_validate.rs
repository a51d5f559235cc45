//! Writes the fixture to disk, corrupts a few log lines and reads it back,
//! printing what ingestion and validation found.
//!
//! ```text
//! cargo run --example ingest_validate
//! ```

use std::io::Write;

use skillshadow::fixture::{
    make_fixture, write_fixture, FixtureProfile, BUNDLES_FILE, ISOLATION_FILE, MANIFEST_FILES, TRAJECTORIES_FILE,
};
use skillshadow::ingest::{validate, Dataset, IngestReport};

fn main() {
    let dir = std::env::temp_dir().join(format!("skillshadow-ingest-{}", std::process::id()));
    write_fixture(&make_fixture(FixtureProfile::SkillsBench), &dir).unwrap();

    let log = dir.join(TRAJECTORIES_FILE);
    let mut f = std::fs::OpenOptions::new().append(true).open(&log).unwrap();
    writeln!(f, "{{\"task_id\": \"mario-coin-counting\"").unwrap();
    writeln!(
        f,
        r#"{{"task_id":"no-such-task","model_id":"m","arm_id":"lib-52","invocations":[],"subtask_passes":[true]}}"#
    )
    .unwrap();
    writeln!(f, r#"{{"task_id":"mario-coin-counting","model_id":"m","arm_id":"lib-9","invocations":[],"subtask_passes":[true,true]}}"#).unwrap();
    drop(f);

    let mut ds = Dataset::new();
    let mut report = IngestReport::default();
    for m in MANIFEST_FILES {
        report.merge(ds.load_library(&dir.join(m)).unwrap());
    }
    ds.load_bundles(&dir.join(BUNDLES_FILE)).unwrap();
    report.merge(ds.load_trajectory_files(&[log, dir.join(ISOLATION_FILE)]).unwrap());
    let checks = validate(&ds);
    report.errors.extend(checks.errors);
    report.warnings.extend(checks.warnings);

    println!(
        "{} rows, {} invalid, {} duplicate skills merged",
        report.row_count, report.invalid_count, report.dedup_merges
    );
    for (from, to) in &report.renamed_skills {
        println!("renamed {from} -> {to}");
    }
    for i in report.errors.iter().chain(&report.warnings) {
        println!(
            "{}:{} {} {}",
            i.source.rsplit('/').next().unwrap_or(""),
            i.line,
            i.code,
            i.message
        );
    }
    println!("{} trajectories admitted", ds.trajectories.len());
    std::fs::remove_dir_all(&dir).ok();
}
