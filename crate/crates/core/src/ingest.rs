//! Loading and validation of library manifests, oracle-bundle files and
//! trajectory logs.
//!
//! File formats:
//!
//! * library manifest: JSON, either `{"library_id": .., "skills": [..]}` or a
//!   bare array of skills (the file stem becomes the id). Each skill is
//!   `{"name", "description", "body"}` or `{"name", "description", "body_hash"}`.
//! * bundle file: JSON object `task_id -> [skill names]`, or
//!   `task_id -> {"skills": [..], "subtasks": m}`. With the list form, `m`
//!   is taken from the task's first log line.
//! * trajectory log: one JSON record per line, see [`LogRecord`].
//!
//! Bad log lines are reported with their line number and skipped; loading
//! continues on the clean subset.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::IsolationRuns;
use crate::model::{
    is_isolation_arm, BodyHash, PairKey, Skill, SkillLibrary, Task, Trajectory, BASELINE_ARM, SINGLE_ARM_PREFIX,
    STAR_ARM,
};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("internal: duplicate skill name `{0}` after disambiguation")]
    DuplicateAfterRename(String),
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, message: impl fmt::Display) -> Self {
        IngestError::Parse {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    Malformed,
    EmptyName,
    UnknownArm,
    UnknownSkill,
    UnknownTask,
    SubtaskCountMismatch,
    BundleUnresolved,
    StarArmDistractor,
    IsolationContaminated,
    EmptyCell,
    UnusedBundle,
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub source: String,
    /// 1-based line (log files) or entry index (JSON files); 0 when not tied
    /// to a position.
    pub line: usize,
    pub code: IssueCode,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{}:{}: {} {}", self.source, self.line, self.code, self.message)
        } else {
            write!(f, "{}: {} {}", self.source, self.code, self.message)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub row_count: usize,
    pub invalid_count: usize,
    pub dedup_merges: usize,
    /// `(original name, assigned name)` in manifest order.
    pub renamed_skills: Vec<(String, String)>,
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl IngestReport {
    pub fn merge(&mut self, other: IngestReport) {
        self.row_count += other.row_count;
        self.invalid_count += other.invalid_count;
        self.dedup_merges += other.dedup_merges;
        self.renamed_skills.extend(other.renamed_skills);
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }

    pub fn is_clean(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }

    fn error(&mut self, source: &str, line: usize, code: IssueCode, message: impl Into<String>) {
        self.errors.push(Issue {
            source: source.to_string(),
            line,
            code,
            message: message.into(),
        });
    }

    fn warn(&mut self, source: &str, line: usize, code: IssueCode, message: impl Into<String>) {
        self.warnings.push(Issue {
            source: source.to_string(),
            line,
            code,
            message: message.into(),
        });
    }
}

/// One manifest entry as written on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub library_id: String,
    pub skills: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestFile {
    Full(Manifest),
    Bare(Vec<ManifestEntry>),
}

/// Reads a library manifest and de-duplicates it.
pub fn load_library(path: &Path) -> Result<(SkillLibrary, IngestReport), IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let manifest = match serde_json::from_str::<ManifestFile>(&text).map_err(|e| IngestError::parse(path, e))? {
        ManifestFile::Full(m) => m,
        ManifestFile::Bare(skills) => Manifest {
            library_id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            skills,
        },
    };
    dedup_manifest(&manifest, &path.display().to_string())
}

/// Byte-identical de-duplication and numeric-suffix disambiguation.
///
/// Entries with the same `(name, body)` merge into one skill. A name whose
/// body diverges from earlier entries gets the smallest free suffix `-2`,
/// `-3`, ... in manifest order. Interface order follows first occurrences.
pub fn dedup_manifest(manifest: &Manifest, source: &str) -> Result<(SkillLibrary, IngestReport), IngestError> {
    let mut report = IngestReport::default();
    let original: BTreeSet<&str> = manifest.skills.iter().map(|e| e.name.as_str()).collect();
    let mut taken: BTreeSet<String> = BTreeSet::new();
    // name -> [(body hash, assigned name)]
    let mut variants: BTreeMap<String, Vec<(BodyHash, String)>> = BTreeMap::new();
    let mut skills = Vec::new();

    for (i, entry) in manifest.skills.iter().enumerate() {
        let line = i + 1;
        if entry.name.trim().is_empty() {
            report.error(source, line, IssueCode::EmptyName, "skill with empty name");
            continue;
        }
        let hash = match (&entry.body, &entry.body_hash) {
            (Some(body), _) => BodyHash::of(body.as_bytes()),
            (None, Some(h)) => match BodyHash::from_hex(h) {
                Ok(h) => h,
                Err(e) => {
                    report.error(source, line, IssueCode::Malformed, format!("bad body_hash: {e}"));
                    continue;
                }
            },
            (None, None) => {
                report.error(
                    source,
                    line,
                    IssueCode::Malformed,
                    format!("skill `{}` has neither body nor body_hash", entry.name),
                );
                continue;
            }
        };
        let seen = variants.entry(entry.name.clone()).or_default();
        if seen.iter().any(|(h, _)| *h == hash) {
            report.dedup_merges += 1;
            continue;
        }
        let assigned = if seen.is_empty() {
            entry.name.clone()
        } else {
            let mut k = 2;
            loop {
                let candidate = format!("{}-{k}", entry.name);
                if !taken.contains(&candidate) && !original.contains(candidate.as_str()) {
                    break candidate;
                }
                k += 1;
            }
        };
        if !taken.insert(assigned.clone()) {
            return Err(IngestError::DuplicateAfterRename(assigned));
        }
        if assigned != entry.name {
            report.renamed_skills.push((entry.name.clone(), assigned.clone()));
        }
        seen.push((hash, assigned.clone()));
        skills.push(Skill {
            name: assigned,
            description: entry.description.clone(),
            body_hash: hash,
            body: entry.body.clone(),
        });
    }
    let library = SkillLibrary::new(manifest.library_id.clone(), skills)
        .map_err(|_| IngestError::DuplicateAfterRename(manifest.library_id.clone()))?;
    Ok((library, report))
}

/// Bundle file entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BundleEntry {
    Skills(Vec<String>),
    Task { skills: Vec<String>, subtasks: usize },
}

impl BundleEntry {
    pub fn skills(&self) -> &[String] {
        match self {
            BundleEntry::Skills(s) | BundleEntry::Task { skills: s, .. } => s,
        }
    }
}

/// One trajectory log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub task_id: String,
    pub model_id: String,
    pub arm_id: String,
    #[serde(default)]
    pub invocations: Vec<String>,
    pub subtask_passes: Vec<bool>,
    #[serde(default = "default_valid")]
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_valid() -> bool {
    true
}

impl From<&Trajectory> for LogRecord {
    fn from(t: &Trajectory) -> Self {
        LogRecord {
            task_id: t.pair.task_id.clone(),
            model_id: t.pair.model_id.clone(),
            arm_id: t.arm_id.clone(),
            invocations: t.invocations.clone(),
            subtask_passes: t.subtask_passes.clone(),
            valid: t.valid,
            seed: t.seed,
        }
    }
}

/// Everything the estimators read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Library arms by arm id. The star arm is implicit.
    pub libraries: BTreeMap<String, SkillLibrary>,
    pub tasks: BTreeMap<String, Task>,
    pub trajectories: Vec<Trajectory>,
    /// List-form bundles whose subtask count is not known yet.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pending_bundles: BTreeMap<String, Vec<String>>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a library arm. A later library with the same id replaces it.
    pub fn add_library(&mut self, library: SkillLibrary) {
        self.libraries.insert(library.library_id.clone(), library);
    }

    pub fn load_library(&mut self, path: &Path) -> Result<IngestReport, IngestError> {
        let (lib, report) = load_library(path)?;
        self.add_library(lib);
        Ok(report)
    }

    pub fn add_bundles(&mut self, bundles: BTreeMap<String, BundleEntry>) {
        for (task_id, entry) in bundles {
            match entry {
                BundleEntry::Task { skills, subtasks } if subtasks > 0 => {
                    self.pending_bundles.remove(&task_id);
                    self.tasks.insert(
                        task_id.clone(),
                        Task {
                            task_id,
                            subtasks,
                            authored_bundle: skills,
                        },
                    );
                }
                other => {
                    let skills = other.skills().to_vec();
                    match self.tasks.get_mut(&task_id) {
                        Some(t) => t.authored_bundle = skills,
                        None => {
                            self.pending_bundles.insert(task_id, skills);
                        }
                    }
                }
            }
        }
    }

    pub fn load_bundles(&mut self, path: &Path) -> Result<(), IngestError> {
        let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let bundles: BTreeMap<String, BundleEntry> =
            serde_json::from_str(&text).map_err(|e| IngestError::parse(path, e))?;
        self.add_bundles(bundles);
        Ok(())
    }

    /// Appends the trajectories of one log file.
    pub fn load_trajectories(&mut self, path: &Path) -> Result<IngestReport, IngestError> {
        let parsed = parse_log(path)?;
        Ok(self.apply_log(&path.display().to_string(), parsed))
    }

    /// Parses several logs concurrently and applies them in the given file
    /// order, line by line.
    pub fn load_trajectory_files(&mut self, paths: &[PathBuf]) -> Result<IngestReport, IngestError> {
        let parsed: Vec<_> = paths.par_iter().map(|p| parse_log(p)).collect::<Result<_, _>>()?;
        let mut report = IngestReport::default();
        for (path, lines) in paths.iter().zip(parsed) {
            report.merge(self.apply_log(&path.display().to_string(), lines));
        }
        Ok(report)
    }

    /// Appends in-memory records, validating them like log lines.
    pub fn add_records<I>(&mut self, source: &str, records: I) -> IngestReport
    where
        I: IntoIterator<Item = LogRecord>,
    {
        let lines = records.into_iter().enumerate().map(|(i, r)| (i + 1, Ok(r))).collect();
        self.apply_log(source, lines)
    }

    fn apply_log(&mut self, source: &str, lines: Vec<(usize, Result<LogRecord, String>)>) -> IngestReport {
        let mut report = IngestReport::default();
        for (line, rec) in lines {
            report.row_count += 1;
            let rec = match rec {
                Ok(r) => r,
                Err(msg) => {
                    report.error(source, line, IssueCode::Malformed, msg);
                    continue;
                }
            };
            match self.admit(rec) {
                Ok(t) => {
                    if !t.valid {
                        report.invalid_count += 1;
                    }
                    self.trajectories.push(t);
                }
                Err((code, msg)) => report.error(source, line, code, msg),
            }
        }
        report
    }

    fn admit(&mut self, rec: LogRecord) -> Result<Trajectory, (IssueCode, String)> {
        let pair = PairKey::new(rec.task_id.clone(), rec.model_id.clone())
            .map_err(|e| (IssueCode::Malformed, e.to_string()))?;
        if rec.subtask_passes.is_empty() {
            return Err((IssueCode::Malformed, "empty subtask_passes".into()));
        }
        if let Some(task) = self.tasks.get(&rec.task_id) {
            if task.subtasks != rec.subtask_passes.len() {
                return Err((
                    IssueCode::SubtaskCountMismatch,
                    format!(
                        "task `{}` has {} subtasks, line has {}",
                        rec.task_id,
                        task.subtasks,
                        rec.subtask_passes.len()
                    ),
                ));
            }
        } else if !self.pending_bundles.contains_key(&rec.task_id) {
            return Err((
                IssueCode::UnknownTask,
                format!("task `{}` has no bundle entry", rec.task_id),
            ));
        }
        self.check_arm(&rec)?;
        if let Some(bundle) = self.pending_bundles.remove(&rec.task_id) {
            let task = Task {
                task_id: rec.task_id.clone(),
                subtasks: rec.subtask_passes.len(),
                authored_bundle: bundle,
            };
            self.tasks.insert(rec.task_id.clone(), task);
        }
        Ok(Trajectory {
            pair,
            arm_id: rec.arm_id,
            invocations: rec.invocations,
            subtask_passes: rec.subtask_passes,
            valid: rec.valid,
            seed: rec.seed,
        })
    }

    fn check_arm(&self, rec: &LogRecord) -> Result<(), (IssueCode, String)> {
        let unknown = |name: &str, arm: &str| (IssueCode::UnknownSkill, format!("skill `{name}` not in arm `{arm}`"));
        let arm = rec.arm_id.as_str();
        if arm == STAR_ARM || arm == BASELINE_ARM {
            let largest = self.largest_library();
            for name in &rec.invocations {
                if !largest.is_some_and(|l| l.contains(name)) {
                    return Err(unknown(name, arm));
                }
            }
            return Ok(());
        }
        if let Some(skill) = arm.strip_prefix(SINGLE_ARM_PREFIX) {
            if !self.largest_library().is_some_and(|l| l.contains(skill)) {
                return Err(unknown(skill, arm));
            }
            return match rec.invocations.iter().find(|n| n.as_str() != skill) {
                Some(other) => Err(unknown(other, arm)),
                None => Ok(()),
            };
        }
        let lib = self
            .libraries
            .get(arm)
            .ok_or_else(|| (IssueCode::UnknownArm, format!("unknown arm `{arm}`")))?;
        match rec.invocations.iter().find(|n| !lib.contains(n)) {
            Some(name) => Err(unknown(name, arm)),
            None => Ok(()),
        }
    }

    /// The library with the most skills (ties broken by id).
    pub fn largest_library(&self) -> Option<&SkillLibrary> {
        self.libraries
            .values()
            .max_by(|a, b| a.size().cmp(&b.size()).then_with(|| b.library_id.cmp(&a.library_id)))
    }

    /// Library arm ids ordered by size, then id.
    pub fn full_arms(&self) -> Vec<&str> {
        let mut arms: Vec<&SkillLibrary> = self.libraries.values().collect();
        arms.sort_by(|a, b| a.size().cmp(&b.size()).then_with(|| a.library_id.cmp(&b.library_id)));
        arms.into_iter().map(|l| l.library_id.as_str()).collect()
    }

    /// Pairs with at least one star or library-arm trajectory.
    pub fn pairs(&self) -> BTreeSet<PairKey> {
        self.trajectories
            .iter()
            .filter(|t| !t.is_isolation_run())
            .map(|t| t.pair.clone())
            .collect()
    }

    /// Authored bundle per pair, for every pair seen in the logs.
    pub fn oracle_bundles(&self) -> BTreeMap<PairKey, Vec<String>> {
        let pairs: BTreeSet<&PairKey> = self.trajectories.iter().map(|t| &t.pair).collect();
        pairs
            .into_iter()
            .filter_map(|p| {
                self.tasks
                    .get(&p.task_id)
                    .map(|t| (p.clone(), t.authored_bundle.clone()))
            })
            .collect()
    }

    /// Authored bundle per task.
    pub fn task_bundles(&self) -> BTreeMap<String, Vec<String>> {
        self.tasks
            .iter()
            .map(|(id, t)| (id.clone(), t.authored_bundle.clone()))
            .collect()
    }

    pub fn has_isolation_data(&self) -> bool {
        self.trajectories.iter().any(Trajectory::is_isolation_run)
    }

    /// Binary pass counts of valid isolation runs per pair.
    pub fn isolation_runs(&self) -> BTreeMap<PairKey, IsolationRuns> {
        let mut out: BTreeMap<PairKey, IsolationRuns> = BTreeMap::new();
        for t in self.trajectories.iter().filter(|t| t.valid && t.is_isolation_run()) {
            let runs = out.entry(t.pair.clone()).or_default();
            let slot = match t.arm_id.strip_prefix(SINGLE_ARM_PREFIX) {
                Some(skill) => runs.per_skill.entry(skill.to_string()).or_insert((0, 0)),
                None => runs.baseline.get_or_insert((0, 0)),
            };
            slot.0 += u64::from(t.binary_outcome());
            slot.1 += 1;
        }
        out
    }

    /// Trajectories of one (pair, arm), including invalid ones.
    pub fn cell<'a>(&'a self, pair: &'a PairKey, arm_id: &'a str) -> impl Iterator<Item = &'a Trajectory> + 'a {
        self.trajectories
            .iter()
            .filter(move |t| &t.pair == pair && t.arm_id == arm_id)
    }

    /// Deterministic JSON serialization.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dataset serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Line number and parse result for each non-blank line.
type ParsedLines = Vec<(usize, Result<LogRecord, String>)>;

fn parse_log(path: &Path) -> Result<ParsedLines, IngestError> {
    let file = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((
            i + 1,
            serde_json::from_str::<LogRecord>(&line).map_err(|e| e.to_string()),
        ));
    }
    Ok(out)
}

/// Cross-checks a loaded dataset. Never fails; findings go in the report.
pub fn validate(dataset: &Dataset) -> IngestReport {
    let mut report = IngestReport {
        row_count: dataset.trajectories.len(),
        invalid_count: dataset.trajectories.iter().filter(|t| !t.valid).count(),
        ..Default::default()
    };
    let src = "dataset";
    let largest = dataset.largest_library();
    for (task_id, task) in &dataset.tasks {
        for name in &task.authored_bundle {
            if !largest.is_some_and(|l| l.contains(name)) {
                report.error(
                    src,
                    0,
                    IssueCode::BundleUnresolved,
                    format!("task `{task_id}` bundle skill `{name}` not in largest library"),
                );
            }
        }
    }
    for task_id in dataset.pending_bundles.keys() {
        report.warn(
            src,
            0,
            IssueCode::UnusedBundle,
            format!("task `{task_id}` has a bundle but no trajectories"),
        );
    }
    for (i, t) in dataset.trajectories.iter().enumerate() {
        let Some(task) = dataset.tasks.get(&t.pair.task_id) else {
            continue;
        };
        if t.arm_id == STAR_ARM {
            if let Some(d) = t.invocations.iter().find(|n| !task.authored_bundle.contains(n)) {
                report.warn(
                    src,
                    i + 1,
                    IssueCode::StarArmDistractor,
                    format!("{} invokes distractor `{d}` on the star arm", t.pair),
                );
            }
        } else if t.arm_id == BASELINE_ARM && !t.invocations.is_empty() {
            report.warn(
                src,
                i + 1,
                IssueCode::IsolationContaminated,
                format!("{} invokes skills on the baseline arm", t.pair),
            );
        }
    }
    let mut arms: Vec<&str> = vec![STAR_ARM];
    arms.extend(dataset.full_arms());
    let mut counts: BTreeMap<(&PairKey, &str), usize> = BTreeMap::new();
    for t in dataset
        .trajectories
        .iter()
        .filter(|t| t.valid && !is_isolation_arm(&t.arm_id))
    {
        *counts.entry((&t.pair, t.arm_id.as_str())).or_default() += 1;
    }
    for pair in dataset.pairs() {
        for arm in &arms {
            if counts.get(&(&pair, *arm)).copied().unwrap_or(0) == 0 {
                report.warn(
                    src,
                    0,
                    IssueCode::EmptyCell,
                    format!("{pair} has no valid trajectories on arm `{arm}`"),
                );
            }
        }
    }
    report
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), IngestError> {
    write_json(path, manifest)
}

pub fn write_bundles(path: &Path, bundles: &BTreeMap<String, BundleEntry>) -> Result<(), IngestError> {
    write_json(path, bundles)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IngestError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| IngestError::parse(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| IngestError::io(path, e))
}

pub fn write_trajectories<'a, I>(path: &Path, trajectories: I) -> Result<(), IngestError>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| IngestError::io(path, e))?);
    for t in trajectories {
        let line = serde_json::to_string(&LogRecord::from(t)).map_err(|e| IngestError::parse(path, e))?;
        writeln!(out, "{line}").map_err(|e| IngestError::io(path, e))?;
    }
    out.flush().map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, body: &str) -> ManifestEntry {
        ManifestEntry {
            name: name.into(),
            description: format!("{name} skill"),
            body: Some(body.into()),
            body_hash: None,
        }
    }

    fn manifest(skills: Vec<ManifestEntry>) -> Manifest {
        Manifest {
            library_id: "lib".into(),
            skills,
        }
    }

    #[test]
    fn identical_bodies_merge() {
        let (lib, rep) = dedup_manifest(&manifest(vec![entry("ffmpeg", "x"), entry("ffmpeg", "x")]), "m").unwrap();
        assert_eq!(lib.size(), 1);
        assert_eq!(rep.dedup_merges, 1);
        assert!(rep.errors.is_empty());
    }

    #[test]
    fn divergent_bodies_get_suffixes() {
        let m = manifest(vec![
            entry("csv-processing", "a"),
            entry("ffmpeg", "f"),
            entry("csv-processing", "b"),
            entry("csv-processing", "c"),
            entry("csv-processing", "b"),
        ]);
        let (lib, rep) = dedup_manifest(&m, "m").unwrap();
        let names: Vec<&str> = lib.interface_view().iter().map(|(n, _)| *n).collect();
        assert_eq!(
            names,
            vec!["csv-processing", "ffmpeg", "csv-processing-2", "csv-processing-3"]
        );
        assert_eq!(rep.dedup_merges, 1);
        assert_eq!(
            rep.renamed_skills[0],
            ("csv-processing".into(), "csv-processing-2".into())
        );
    }

    #[test]
    fn suffix_skips_names_already_in_manifest() {
        let m = manifest(vec![entry("a", "1"), entry("a-2", "z"), entry("a", "2")]);
        let (lib, _) = dedup_manifest(&m, "m").unwrap();
        assert!(lib.contains("a-3"));
        assert_eq!(lib.size(), 3);
    }

    #[test]
    fn hash_only_entries() {
        let h = BodyHash::of(b"x").to_hex();
        let m = manifest(vec![
            ManifestEntry {
                name: "k".into(),
                description: String::new(),
                body: None,
                body_hash: Some(h),
            },
            entry("k", "x"),
        ]);
        let (lib, rep) = dedup_manifest(&m, "m").unwrap();
        assert_eq!((lib.size(), rep.dedup_merges), (1, 1));
    }

    #[test]
    fn empty_manifest_and_empty_name() {
        let (lib, rep) = dedup_manifest(&manifest(vec![]), "m").unwrap();
        assert_eq!(lib.size(), 0);
        assert!(rep.errors.is_empty());
        let (_, rep) = dedup_manifest(&manifest(vec![entry("", "x")]), "m").unwrap();
        assert_eq!(rep.errors[0].code, IssueCode::EmptyName);
    }

    fn small_dataset() -> Dataset {
        let mut d = Dataset::new();
        let (lib, _) = dedup_manifest(
            &Manifest {
                library_id: "lib-3".into(),
                skills: vec![
                    entry("ffmpeg", "a"),
                    entry("video-frame-extraction", "b"),
                    entry("image_editing", "c"),
                ],
            },
            "m",
        )
        .unwrap();
        d.add_library(lib);
        d.add_bundles(BTreeMap::from([(
            "mario".to_string(),
            BundleEntry::Skills(vec!["ffmpeg".into(), "image_editing".into()]),
        )]));
        d
    }

    fn rec(arm: &str, inv: &[&str], passes: &[bool]) -> LogRecord {
        LogRecord {
            task_id: "mario".into(),
            model_id: "m1".into(),
            arm_id: arm.into(),
            invocations: inv.iter().map(|s| s.to_string()).collect(),
            subtask_passes: passes.to_vec(),
            valid: true,
            seed: None,
        }
    }

    #[test]
    fn records_resolve_or_error() {
        let mut d = small_dataset();
        let rep = d.add_records(
            "log",
            [
                rec("lib-3", &["video-frame-extraction"], &[true, false]),
                rec("lib-999", &[], &[true, true]),
                rec("lib-3", &["nope"], &[true, true]),
                rec("lib-3", &[], &[true]),
                rec(STAR_ARM, &["ffmpeg"], &[true, true]),
            ],
        );
        assert_eq!(rep.row_count, 5);
        let codes: Vec<(usize, IssueCode)> = rep.errors.iter().map(|e| (e.line, e.code)).collect();
        assert_eq!(
            codes,
            vec![
                (2, IssueCode::UnknownArm),
                (3, IssueCode::UnknownSkill),
                (4, IssueCode::SubtaskCountMismatch)
            ]
        );
        assert_eq!(d.trajectories.len(), 2);
        assert_eq!(d.tasks["mario"].subtasks, 2);
        assert!(!validate(&d).warnings.iter().any(|w| w.code == IssueCode::EmptyCell));
    }

    #[test]
    fn validate_flags_star_distractors_and_empty_cells() {
        let mut d = small_dataset();
        d.add_records("log", [rec(STAR_ARM, &["video-frame-extraction"], &[true])]);
        let rep = validate(&d);
        let codes: BTreeSet<IssueCode> = rep.warnings.iter().map(|w| w.code).collect();
        assert!(codes.contains(&IssueCode::StarArmDistractor));
        assert!(codes.contains(&IssueCode::EmptyCell));
        assert!(rep.errors.is_empty());
    }

    #[test]
    fn malformed_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let good = serde_json::to_string(&rec("lib-3", &[], &[true, true])).unwrap();
        fs::write(&p, format!("{good}\n{{not json\n\n{good}\n")).unwrap();
        let mut d = small_dataset();
        let rep = d.load_trajectories(&p).unwrap();
        assert_eq!(rep.row_count, 3);
        assert_eq!(rep.errors.len(), 1);
        assert_eq!((rep.errors[0].line, rep.errors[0].code), (2, IssueCode::Malformed));
        assert_eq!(d.trajectories.len(), 2);
    }

    #[test]
    fn missing_file_is_io_error() {
        let mut d = Dataset::new();
        assert!(matches!(
            d.load_trajectories(Path::new("/nonexistent/x.jsonl")),
            Err(IngestError::Io { .. })
        ));
    }

    #[test]
    fn isolation_runs_tally() {
        let mut d = small_dataset();
        d.add_records(
            "iso",
            [
                rec(BASELINE_ARM, &[], &[true, false]),
                rec(BASELINE_ARM, &[], &[true, true]),
                rec("single:ffmpeg", &["ffmpeg"], &[true, true]),
                rec("single:ffmpeg", &[], &[true, true]),
            ],
        );
        let runs = &d.isolation_runs()[&PairKey::new("mario", "m1").unwrap()];
        assert_eq!(runs.baseline, Some((1, 2)));
        assert_eq!(runs.per_skill["ffmpeg"], (2, 2));
        assert!(d.pairs().is_empty());
    }
}
