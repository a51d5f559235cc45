mod common;

use std::io::Write;

use common::fixture_dir;
use skillshadow::fixture::{
    make_fixture, write_fixture, FixtureProfile, BUNDLES_FILE, ISOLATION_FILE, MANIFEST_FILES, TRAJECTORIES_FILE,
};
use skillshadow::ingest::{load_library, validate, write_trajectories, Dataset, IssueCode};

fn fixture_dataset() -> Dataset {
    let d = fixture_dir();
    let mut ds = Dataset::new();
    for m in MANIFEST_FILES {
        ds.load_library(&d.join(m)).unwrap();
    }
    ds.load_bundles(&d.join(BUNDLES_FILE)).unwrap();
    ds
}

#[test]
fn committed_fixture_matches_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let written = write_fixture(&make_fixture(FixtureProfile::SkillsBench), tmp.path()).unwrap();
    assert_eq!(written.len(), MANIFEST_FILES.len() + 3);
    for p in written {
        let name = p.file_name().unwrap();
        let committed = std::fs::read(fixture_dir().join(name)).unwrap();
        assert!(
            std::fs::read(&p).unwrap() == committed,
            "{name:?} drifted; rerun `cargo run --example write_fixture`"
        );
    }
}

#[test]
fn fixture_loads_clean() {
    let mut ds = fixture_dataset();
    let r = ds
        .load_trajectory_files(&[
            fixture_dir().join(TRAJECTORIES_FILE),
            fixture_dir().join(ISOLATION_FILE),
        ])
        .unwrap();
    assert!(r.errors.is_empty(), "{:?}", &r.errors[..r.errors.len().min(3)]);
    assert_eq!(r.row_count, 2576 + 528);
    let v = validate(&ds);
    assert!(
        v.errors.is_empty() && v.warnings.is_empty(),
        "{:?} {:?}",
        v.errors,
        v.warnings
    );
    assert_eq!(ds.full_arms(), vec!["lib-52", "lib-102", "lib-202"]);
}

#[test]
fn largest_library_after_dedup() {
    let (lib, report) = load_library(&fixture_dir().join("lib-202.json")).unwrap();
    assert_eq!(lib.size(), 202);
    assert_eq!(report.dedup_merges, 1);
    assert_eq!(
        report.renamed_skills,
        vec![("csv-processing".to_string(), "csv-processing-2".to_string())]
    );
    assert!(lib.contains("csv-processing") && lib.contains("csv-processing-2"));
}

#[test]
fn well_formed_prefix_counts_every_row() {
    let text = std::fs::read_to_string(fixture_dir().join(TRAJECTORIES_FILE)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("prefix.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    for line in text.lines().take(2545) {
        writeln!(f, "{line}").unwrap();
    }
    drop(f);
    let mut ds = fixture_dataset();
    let r = ds.load_trajectories(&path).unwrap();
    assert_eq!(r.row_count, 2545);
    assert!(r.errors.is_empty());
    assert_eq!(ds.trajectories.len(), 2545);
}

#[test]
fn bad_lines_are_reported_and_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.jsonl");
    std::fs::write(
        &path,
        concat!(
            r#"{"task_id":"mario-coin-counting","model_id":"m","arm_id":"star","invocations":["ffmpeg"],"subtask_passes":[true,true]}"#,
            "\n\n",
            "not json\n",
            r#"{"task_id":"mario-coin-counting","model_id":"m","arm_id":"lib-7","invocations":[],"subtask_passes":[true,true]}"#,
            "\n",
            r#"{"task_id":"mario-coin-counting","model_id":"m","arm_id":"lib-52","invocations":["nope"],"subtask_passes":[true,true]}"#,
            "\n",
            r#"{"task_id":"mario-coin-counting","model_id":"m","arm_id":"lib-52","invocations":[],"subtask_passes":[true]}"#,
            "\n",
            r#"{"task_id":"mario-coin-counting","model_id":"","arm_id":"lib-52","invocations":[],"subtask_passes":[true,true]}"#,
            "\n",
        ),
    )
    .unwrap();
    let mut ds = fixture_dataset();
    let r = ds.load_trajectories(&path).unwrap();
    let codes: Vec<(usize, IssueCode)> = r.errors.iter().map(|i| (i.line, i.code)).collect();
    assert_eq!(
        codes,
        vec![
            (3, IssueCode::Malformed),
            (4, IssueCode::UnknownArm),
            (5, IssueCode::UnknownSkill),
            (6, IssueCode::SubtaskCountMismatch),
            (7, IssueCode::Malformed),
        ]
    );
    assert_eq!(ds.trajectories.len(), 1);
}

#[test]
fn missing_file_is_io_error() {
    let mut ds = Dataset::new();
    let e = ds
        .load_trajectories(std::path::Path::new("/nonexistent/logs.jsonl"))
        .unwrap_err();
    assert!(matches!(e, skillshadow::ingest::IngestError::Io { .. }));
}

#[test]
fn dataset_round_trips() {
    let mut ds = fixture_dataset();
    ds.load_trajectories(&fixture_dir().join(TRAJECTORIES_FILE)).unwrap();
    let back = Dataset::from_json(&ds.to_json()).unwrap();
    assert_eq!(back.to_json(), ds.to_json());

    // Rewriting the admitted rows reproduces the committed log byte for byte.
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("again.jsonl");
    write_trajectories(&out, ds.trajectories.iter()).unwrap();
    assert!(std::fs::read(&out).unwrap() == std::fs::read(fixture_dir().join(TRAJECTORIES_FILE)).unwrap());
}
