//! Desk-scale benchmark fixture.
//!
//! Two models, 21 and 17 included (task, model) pairs, a star arm and three
//! nested libraries of 52, 102 and 202 skills. Per-model event counts,
//! validity and pass counts on every arm are fixed to published aggregate
//! tables; within a (model, arm, event) group they are spread evenly across
//! pairs. Four further pairs only have isolation runs and fail the uplift
//! filter.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::ingest::{self, BundleEntry, Dataset, IngestError, LogRecord, Manifest, ManifestEntry};
use crate::model::{BASELINE_ARM, SINGLE_ARM_PREFIX, STAR_ARM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixtureProfile {
    #[default]
    SkillsBench,
}

pub const HAIKU: &str = "haiku-4.5";
pub const SONNET: &str = "sonnet-4.6";
pub const ARMS: [&str; 4] = [STAR_ARM, "lib-52", "lib-102", "lib-202"];

/// Tasks in pair order. The first five carry the planted first-pick
/// distractors.
const TASKS: [(&str, &[&str]); 21] = [
    ("mario-coin-counting", &["ffmpeg", "image_editing", "object_counter"]),
    (
        "trend-anomaly-causal-inference",
        &[
            "data_cleaning",
            "did_causal_analysis",
            "feature_engineering",
            "time_series_anomaly_detection",
        ],
    ),
    (
        "manufacturing-fjsp-optimization",
        &["fjsp-baseline-repair-with-downtime-and-policy"],
    ),
    ("econ-detrending-correlation", &["timeseries-detrending"]),
    (
        "energy-market-pricing",
        &[
            "dc-power-flow",
            "economic-dispatch",
            "locational-marginal-prices",
            "power-flow-data",
        ],
    ),
    (
        "pdf-invoice-reconciliation",
        &["pdf-table-extraction", "invoice-matching"],
    ),
    ("log-anomaly-triage", &["log-parsing", "anomaly-scoring"]),
    ("protein-sequence-alignment", &["biopython-alignment"]),
    (
        "satellite-image-cloud-mask",
        &["raster-processing", "cloud-masking", "geotiff-io"],
    ),
    ("sql-migration-audit", &["sql-schema-diff"]),
    (
        "audio-transcript-diarization",
        &["speaker-diarization", "whisper-transcription"],
    ),
    (
        "supply-chain-lot-sizing",
        &["mip-modeling", "inventory-policy", "pulp-solver"],
    ),
    ("earthquake-catalog-declustering", &["seismic-catalog-tools"]),
    ("legal-clause-extraction", &["docx-parsing", "clause-classification"]),
    (
        "portfolio-risk-parity",
        &["covariance-estimation", "cvxpy-portfolio", "risk-metrics"],
    ),
    ("gene-expression-normalization", &["rnaseq-normalization"]),
    ("traffic-signal-timing", &["sumo-simulation", "signal-optimization"]),
    (
        "chess-endgame-verification",
        &["python-chess", "tablebase-lookup", "pgn-parsing"],
    ),
    ("weather-station-qc", &["sensor-qc"]),
    ("citation-graph-metrics", &["networkx-analysis", "bibtex-parsing"]),
    (
        "hvac-load-forecasting",
        &["load-forecasting", "weather-feature-join", "prophet-forecasting"],
    ),
];

/// Planted first-pick distractor per task index.
const DISTRACTORS: [(usize, &str); 5] = [
    (0, "video-frame-extraction"),
    (1, "senior-data-scientist"),
    (2, "reflow_machine_maintenance_guidance"),
    (3, "csv-processing"),
    (4, "casadi-ipopt-nlp"),
];

const HAIKU_PAIRS: usize = 21;
const SONNET_PAIRS: usize = 17;

/// Mixed trajectories that never touch the oracle: (model, arm, task index, count).
const MONI_PLAN: [(&str, &str, usize, usize); 12] = [
    (SONNET, "lib-102", 0, 26),
    (SONNET, "lib-202", 0, 13),
    (HAIKU, "lib-202", 0, 12),
    (HAIKU, "lib-102", 1, 22),
    (SONNET, "lib-202", 1, 10),
    (HAIKU, "lib-202", 1, 1),
    (SONNET, "lib-52", 1, 4),
    (SONNET, "lib-102", 2, 10),
    (HAIKU, "lib-52", 2, 4),
    (HAIKU, "lib-52", 3, 3),
    (SONNET, "lib-52", 3, 1),
    (SONNET, "lib-52", 4, 3),
];

/// Per (model, arm): fine-event totals (oracle-only, mixed with oracle,
/// mixed without oracle, no skill) over every logged trajectory, and
/// `(valid, passes)` per fine event.
struct ArmPlan {
    model: &'static str,
    arm: &'static str,
    totals: [usize; 4],
    outcomes: [(usize, usize); 4],
}

const PLANS: [ArmPlan; 8] = [
    ArmPlan {
        model: HAIKU,
        arm: STAR_ARM,
        totals: [254, 0, 0, 60],
        outcomes: [(251, 109), (0, 0), (0, 0), (50, 6)],
    },
    ArmPlan {
        model: HAIKU,
        arm: "lib-52",
        totals: [228, 0, 7, 71],
        outcomes: [(228, 76), (0, 0), (7, 0), (62, 7)],
    },
    ArmPlan {
        model: HAIKU,
        arm: "lib-102",
        totals: [261, 9, 22, 254],
        outcomes: [(261, 68), (9, 3), (22, 1), (251, 17)],
    },
    ArmPlan {
        model: HAIKU,
        arm: "lib-202",
        totals: [80, 0, 13, 180],
        outcomes: [(77, 26), (0, 0), (13, 0), (180, 6)],
    },
    ArmPlan {
        model: SONNET,
        arm: STAR_ARM,
        totals: [232, 0, 0, 6],
        outcomes: [(232, 144), (0, 0), (0, 0), (0, 0)],
    },
    ArmPlan {
        model: SONNET,
        arm: "lib-52",
        totals: [207, 5, 8, 16],
        outcomes: [(207, 117), (5, 0), (8, 0), (13, 13)],
    },
    ArmPlan {
        model: SONNET,
        arm: "lib-102",
        totals: [375, 5, 36, 26],
        outcomes: [(375, 217), (5, 1), (36, 5), (26, 26)],
    },
    ArmPlan {
        model: SONNET,
        arm: "lib-202",
        totals: [180, 8, 23, 10],
        outcomes: [(178, 90), (8, 1), (23, 3), (10, 8)],
    },
];

const FILLER_DOMAINS: [&str; 15] = [
    "pdf", "excel", "image", "video", "audio", "geo", "graph", "text", "web", "sql", "json", "cloud", "chem", "bio",
    "finance",
];
const FILLER_ACTIONS: [&str; 12] = [
    "summarization",
    "conversion",
    "validation",
    "visualization",
    "scraping",
    "indexing",
    "cleanup",
    "profiling",
    "templating",
    "benchmarking",
    "packaging",
    "debugging",
];

/// Raw files plus the loaded dataset.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub manifests: Vec<Manifest>,
    pub bundles: BTreeMap<String, BundleEntry>,
    pub trajectories: Vec<LogRecord>,
    pub isolation: Vec<LogRecord>,
    pub dataset: Dataset,
}

fn subtasks(task_idx: usize) -> usize {
    [2, 3, 1, 4][task_idx % 4]
}

fn entry(name: &str, variant: &str) -> ManifestEntry {
    ManifestEntry {
        name: name.to_string(),
        description: format!("Use for {} work.", name.replace(['-', '_'], " ")),
        body: Some(format!("# {name}\n\n{variant}Step-by-step instructions for {name}.\n")),
        body_hash: None,
    }
}

fn manifests() -> Vec<Manifest> {
    let mut core: Vec<String> = Vec::new();
    for (_, bundle) in TASKS {
        core.extend(bundle.iter().map(|s| s.to_string()));
    }
    core.extend(DISTRACTORS.iter().skip(1).map(|(_, d)| d.to_string()));
    let fillers: Vec<String> = FILLER_ACTIONS
        .iter()
        .flat_map(|a| FILLER_DOMAINS.iter().map(move |d| format!("{d}-{a}")))
        .collect();
    let mut fill = fillers.into_iter();

    let mut s52: Vec<ManifestEntry> = core.iter().map(|n| entry(n, "")).collect();
    while s52.len() < 52 {
        s52.push(entry(&fill.next().expect("enough fillers"), ""));
    }
    let mut s102 = s52.clone();
    s102.push(entry(DISTRACTORS[0].1, ""));
    while s102.len() < 102 {
        s102.push(entry(&fill.next().expect("enough fillers"), ""));
    }
    let mut s202 = s102.clone();
    // A byte-identical repeat and a divergent re-definition.
    s202.push(entry("ffmpeg", ""));
    s202.push(entry("csv-processing", "Legacy variant. "));
    while s202.len() < 203 {
        s202.push(entry(&fill.next().expect("enough fillers"), ""));
    }
    vec![
        Manifest {
            library_id: "lib-52".into(),
            skills: s52,
        },
        Manifest {
            library_id: "lib-102".into(),
            skills: s102,
        },
        Manifest {
            library_id: "lib-202".into(),
            skills: s202,
        },
    ]
}

/// Splits `total` into `k` near-equal parts, larger parts first.
fn even_split(total: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| total / k + usize::from(i < total % k)).collect()
}

/// Whether position `j` of `n` is one of `k` evenly spaced marks.
fn marked(j: usize, k: usize, n: usize) -> bool {
    (j + 1) * k / n > j * k / n
}

/// Largest-remainder apportionment of `total` in proportion to `weights`.
fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut out: Vec<usize> = weights.iter().map(|w| total * w / sum).collect();
    let mut left = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(total * weights[i] % sum));
    for i in order {
        if left == 0 {
            break;
        }
        if out[i] < weights[i] {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}

fn generic_distractor(task_idx: usize, j: usize) -> String {
    format!("{}-{}", FILLER_DOMAINS[(task_idx + j) % 3], FILLER_ACTIONS[0])
}

fn pair_count(model: &str) -> usize {
    if model == HAIKU {
        HAIKU_PAIRS
    } else {
        SONNET_PAIRS
    }
}

/// Builds the trajectory records of one (model, arm) block.
fn arm_records(plan: &ArmPlan) -> Vec<LogRecord> {
    let k = pair_count(plan.model);
    let quotas = even_split(plan.totals.iter().sum(), k);

    // Per pair fine counts [O, MOI, MONI, N].
    let mut counts = vec![[0usize; 4]; k];
    for &(model, arm, task, n) in &MONI_PLAN {
        if model == plan.model && arm == plan.arm {
            counts[task][2] += n;
        }
    }
    let mut room: Vec<usize> = (0..k).map(|i| quotas[i] - counts[i][2]).collect();
    let mut moi = plan.totals[1];
    let mut i = 5 % k;
    while moi > 0 {
        if room[i] > 0 {
            counts[i][1] += 1;
            room[i] -= 1;
            moi -= 1;
        }
        i = (i + 1) % k;
    }
    let n_alloc = apportion(plan.totals[3], &room);
    for p in 0..k {
        counts[p][3] = n_alloc[p];
        counts[p][0] = room[p] - n_alloc[p];
    }

    // Lay out records pair by pair, then assign validity and passes per
    // fine-event group in that order.
    let mut slots: Vec<(usize, usize)> = Vec::new(); // (pair, fine index)
    for (p, c) in counts.iter().enumerate() {
        for (f, &n) in c.iter().enumerate() {
            slots.extend(std::iter::repeat_n((p, f), n));
        }
    }
    let mut seen = [0usize; 4];
    let mut valid_seen = [0usize; 4];
    let mut out = Vec::with_capacity(slots.len());
    for (p, f) in slots {
        let total = plan.totals[f];
        let (valid_n, passes) = plan.outcomes[f];
        let j = seen[f];
        seen[f] += 1;
        let invalid = marked(j, total - valid_n, total);
        let pass = if invalid {
            false
        } else {
            let v = valid_seen[f];
            valid_seen[f] += 1;
            marked(v, passes, valid_n)
        };
        let (task, bundle) = TASKS[p];
        let m = subtasks(p);
        let invocations: Vec<String> = match f {
            0 => bundle
                .iter()
                .take(1 + j % bundle.len().min(2))
                .map(|s| s.to_string())
                .collect(),
            1 => vec![bundle[0].to_string(), generic_distractor(p, j)],
            2 => {
                let d = DISTRACTORS.iter().find(|(t, _)| *t == p).expect("planted task").1;
                let mut v = vec![d.to_string()];
                if j % 3 == 2 {
                    v.push(generic_distractor(p, j));
                }
                v
            }
            _ => Vec::new(),
        };
        let subtask_passes = if pass {
            vec![true; m]
        } else if invalid {
            vec![false; m]
        } else {
            let fails = 1 + j % m;
            (0..m).map(|s| s >= fails).collect()
        };
        out.push(LogRecord {
            task_id: task.to_string(),
            model_id: plan.model.to_string(),
            arm_id: plan.arm.to_string(),
            invocations,
            subtask_passes,
            valid: !invalid,
            seed: None,
        });
    }
    out
}

/// Baseline and single-skill runs: four of each per pair. Sonnet pairs on
/// tasks 18 to 21 have one bundle skill without uplift.
fn isolation_records() -> Vec<LogRecord> {
    let mut out = Vec::new();
    for model in [HAIKU, SONNET] {
        for (t, (task, bundle)) in TASKS.iter().enumerate() {
            let excluded = model == SONNET && t >= SONNET_PAIRS;
            let m = subtasks(t);
            let mut push = |arm: String, invocations: Vec<String>, pass: bool| {
                out.push(LogRecord {
                    task_id: task.to_string(),
                    model_id: model.to_string(),
                    arm_id: arm,
                    invocations,
                    subtask_passes: vec![pass; m],
                    valid: true,
                    seed: None,
                });
            };
            for r in 0..4 {
                push(BASELINE_ARM.to_string(), Vec::new(), r == 0);
            }
            for (s, skill) in bundle.iter().enumerate() {
                let passes = if excluded && s == bundle.len() - 1 {
                    1
                } else {
                    2 + (t + s) % 2
                };
                for r in 0..4 {
                    push(
                        format!("{SINGLE_ARM_PREFIX}{skill}"),
                        vec![skill.to_string()],
                        r < passes,
                    );
                }
            }
        }
    }
    out
}

pub fn make_fixture(profile: FixtureProfile) -> Fixture {
    let FixtureProfile::SkillsBench = profile;
    let manifests = manifests();
    let bundles: BTreeMap<String, BundleEntry> = TASKS
        .iter()
        .enumerate()
        .map(|(i, (t, b))| {
            (
                t.to_string(),
                BundleEntry::Task {
                    skills: b.iter().map(|s| s.to_string()).collect(),
                    subtasks: subtasks(i),
                },
            )
        })
        .collect();
    let mut trajectories = Vec::new();
    for model in [HAIKU, SONNET] {
        for plan in PLANS.iter().filter(|p| p.model == model) {
            trajectories.extend(arm_records(plan));
        }
    }
    let isolation = isolation_records();

    let mut dataset = Dataset::new();
    for m in &manifests {
        let (lib, _) = ingest::dedup_manifest(m, &m.library_id).expect("fixture manifests dedup");
        dataset.add_library(lib);
    }
    dataset.add_bundles(bundles.clone());
    let rep = dataset.add_records("trajectories.jsonl", trajectories.iter().cloned());
    debug_assert!(rep.errors.is_empty(), "{:?}", rep.errors);
    let rep = dataset.add_records("isolation.jsonl", isolation.iter().cloned());
    debug_assert!(rep.errors.is_empty(), "{:?}", rep.errors);
    Fixture {
        manifests,
        bundles,
        trajectories,
        isolation,
        dataset,
    }
}

/// File names inside a fixture directory.
pub const MANIFEST_FILES: [&str; 3] = ["lib-52.json", "lib-102.json", "lib-202.json"];
pub const BUNDLES_FILE: &str = "bundles.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const ISOLATION_FILE: &str = "isolation.jsonl";

/// Writes the raw fixture files and returns their paths.
pub fn write_fixture(fixture: &Fixture, dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    std::fs::create_dir_all(dir).map_err(|e| IngestError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut written = Vec::new();
    for (m, name) in fixture.manifests.iter().zip(MANIFEST_FILES) {
        let p = dir.join(name);
        ingest::write_manifest(&p, m)?;
        written.push(p);
    }
    let p = dir.join(BUNDLES_FILE);
    ingest::write_bundles(&p, &fixture.bundles)?;
    written.push(p);
    for (records, name) in [
        (&fixture.trajectories, TRAJECTORIES_FILE),
        (&fixture.isolation, ISOLATION_FILE),
    ] {
        let p = dir.join(name);
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        std::fs::write(&p, text).map_err(|e| IngestError::Io {
            path: p.clone(),
            source: e,
        })?;
        written.push(p);
    }
    Ok(written)
}

/// Location of the committed copy inside this crate.
pub fn committed_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join("skillsbench")
}
