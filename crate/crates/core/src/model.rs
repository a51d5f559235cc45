//! Domain types shared by the ingestion, classification, estimation and
//! simulation stages.
//!
//! Symbol map (one home per symbol):
//!
//! | symbol                  | type / field                                   |
//! |-------------------------|------------------------------------------------|
//! | `n_i`, `d_i`, `b_i`     | [`Skill`] `name`, `description`, `body_hash`   |
//! | `S`, `ℓ`, `D(S)`        | [`SkillLibrary`], `size()`, `interface_view()`  |
//! | `q`, `m`                | [`Task`] `task_id`, `subtasks`                  |
//! | `I`, `T_q`              | [`Trajectory`] `invoked_set()`, `completion_fraction()` |
//! | `S*(q)`, `τ`            | [`OracleSet`] `members`, `tau`                  |
//! | `N`, `M`, `O`           | [`Event`]                                       |
//! | `π_E`, `ρ_E` (and `*`)  | [`EventTable`] `pi`, `rho` by `arm_kind`        |
//! | `Δ`, `Δ_ctx`, `Δ_shd`   | [`DecompositionResult`]                         |
//! | `Δ_ctx^sup`, `Δ_shd^sup`| [`DecompositionResult`] `ctx_sup`, `shd_sup_*`  |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

/// Arm id reserved for the oracle-only library (`S = S*(q)`). The effective
/// library of a star-arm trajectory is its task's oracle bundle.
pub const STAR_ARM: &str = "star";
/// Arm id reserved for no-skill isolation runs.
pub const BASELINE_ARM: &str = "baseline";
/// Prefix of single-skill isolation arms, e.g. `single:ffmpeg`.
pub const SINGLE_ARM_PREFIX: &str = "single:";

/// Tolerance used for probability sums and identity checks.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("subtask_passes has {actual} entries, task expects {expected}")]
    SubtaskCountMismatch { expected: usize, actual: usize },
    #[error("task must have at least one subtask")]
    NoSubtasks,
    #[error("empty {0}")]
    EmptyField(&'static str),
    #[error("invalid event table: {0}")]
    InvalidTable(String),
}

/// SHA-256 digest of a skill body.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BodyHash(pub [u8; 32]);

impl BodyHash {
    pub fn of(body: &[u8]) -> Self {
        BodyHash(Sha256::digest(body).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(BodyHash(out))
    }
}

impl fmt::Debug for BodyHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BodyHash({})", &self.to_hex()[..12])
    }
}

impl Serialize for BodyHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BodyHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BodyHash::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// A named instruction package. Identity is `(name, body_hash)`; the body
/// text itself is optional payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skill {
    pub name: String,
    pub description: String,
    pub body_hash: BodyHash,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
}

impl Skill {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        body: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let body = body.into();
        Self::with_hash(name, description, BodyHash::of(body.as_bytes())).map(|s| Skill { body: Some(body), ..s })
    }

    pub fn with_hash(
        name: impl Into<String>,
        description: impl Into<String>,
        body_hash: BodyHash,
    ) -> Result<Self, ModelError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(ModelError::EmptyField("skill name"));
        }
        Ok(Skill {
            name,
            description: description.into(),
            body_hash,
            body: None,
        })
    }
}

/// An ordered set of uniquely named skills.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillLibrary {
    pub library_id: String,
    skills: Vec<Skill>,
}

impl SkillLibrary {
    /// Builds a library, rejecting duplicate names.
    pub fn new(library_id: impl Into<String>, skills: Vec<Skill>) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for s in &skills {
            if !seen.insert(s.name.as_str()) {
                return Err(ModelError::InvalidTable(format!("duplicate skill name `{}`", s.name)));
            }
        }
        Ok(SkillLibrary {
            library_id: library_id.into(),
            skills,
        })
    }

    pub fn skills(&self) -> &[Skill] {
        &self.skills
    }

    /// Library size `ℓ`.
    pub fn size(&self) -> usize {
        self.skills.len()
    }

    pub fn get(&self, name: &str) -> Option<&Skill> {
        self.skills.iter().find(|s| s.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// The interface view `D(S)`: what the agent sees at selection time.
    pub fn interface_view(&self) -> Vec<(&str, &str)> {
        self.skills
            .iter()
            .map(|s| (s.name.as_str(), s.description.as_str()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    /// Number of independently verified subtasks `m`.
    pub subtasks: usize,
    /// Benchmark-provided candidate oracle bundle.
    pub authored_bundle: Vec<String>,
}

impl Task {
    pub fn new(task_id: impl Into<String>, subtasks: usize, authored_bundle: Vec<String>) -> Result<Self, ModelError> {
        let task_id = task_id.into();
        if task_id.is_empty() {
            return Err(ModelError::EmptyField("task_id"));
        }
        if subtasks == 0 {
            return Err(ModelError::NoSubtasks);
        }
        Ok(Task {
            task_id,
            subtasks,
            authored_bundle,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub task_id: String,
    pub model_id: String,
}

impl PairKey {
    pub fn new(task_id: impl Into<String>, model_id: impl Into<String>) -> Result<Self, ModelError> {
        let (task_id, model_id) = (task_id.into(), model_id.into());
        if task_id.is_empty() {
            return Err(ModelError::EmptyField("task_id"));
        }
        if model_id.is_empty() {
            return Err(ModelError::EmptyField("model_id"));
        }
        Ok(PairKey { task_id, model_id })
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.task_id, self.model_id)
    }
}

/// Which pass rate an estimator reads from a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Probability that every subtask passes.
    #[default]
    Binary,
    /// Expected fraction of subtasks passed.
    Fractional,
}

/// One agent run. Invocation order is kept: the first element is the first
/// pick, which shadow-pair mining needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub pair: PairKey,
    pub arm_id: String,
    pub invocations: Vec<String>,
    pub subtask_passes: Vec<bool>,
    pub valid: bool,
    pub seed: Option<u64>,
}

impl Trajectory {
    /// Distinct invoked skills `I`.
    pub fn invoked_set(&self) -> BTreeSet<&str> {
        self.invocations.iter().map(String::as_str).collect()
    }

    pub fn first_pick(&self) -> Option<&str> {
        self.invocations.first().map(String::as_str)
    }

    pub fn is_isolation_run(&self) -> bool {
        is_isolation_arm(&self.arm_id)
    }

    /// `T_q` using the trajectory's own subtask list as `m`. Ingest checks the
    /// length against the task, so after loading this is always consistent.
    pub fn completion_fraction(&self) -> f64 {
        let passed = self.subtask_passes.iter().filter(|p| **p).count();
        passed as f64 / self.subtask_passes.len().max(1) as f64
    }

    pub fn binary_outcome(&self) -> u8 {
        u8::from(!self.subtask_passes.is_empty() && self.subtask_passes.iter().all(|p| *p))
    }

    pub fn outcome(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Binary => f64::from(self.binary_outcome()),
            Metric::Fractional => self.completion_fraction(),
        }
    }
}

pub fn is_isolation_arm(arm_id: &str) -> bool {
    arm_id == BASELINE_ARM || arm_id.starts_with(SINGLE_ARM_PREFIX)
}

/// `T_q = (#passed)/m`, checked against the task's `m`.
pub fn completion_fraction(traj: &Trajectory, m: usize) -> Result<f64, ModelError> {
    check_len(traj, m)?;
    Ok(traj.completion_fraction())
}

/// 1 iff all `m` subtasks pass.
pub fn binary_outcome(traj: &Trajectory, m: usize) -> Result<u8, ModelError> {
    check_len(traj, m)?;
    Ok(traj.binary_outcome())
}

fn check_len(traj: &Trajectory, m: usize) -> Result<(), ModelError> {
    if m == 0 {
        return Err(ModelError::NoSubtasks);
    }
    if traj.subtask_passes.len() != m {
        return Err(ModelError::SubtaskCountMismatch {
            expected: m,
            actual: traj.subtask_passes.len(),
        });
    }
    Ok(())
}

/// The oracle skill set `S*(q)` for one (task, model) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSet {
    pub pair: PairKey,
    pub members: BTreeSet<String>,
    pub tau: f64,
    /// Isolated pass rate minus no-skill baseline, per tested skill.
    pub per_skill_uplift: BTreeMap<String, f64>,
}

impl OracleSet {
    /// Oracle set taken as given, without isolation evidence.
    pub fn from_bundle<I, S>(pair: PairKey, names: I, tau: f64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        OracleSet {
            pair,
            members: names.into_iter().map(Into::into).collect(),
            tau,
            per_skill_uplift: BTreeMap::new(),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.members.contains(name)
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Coarse invocation event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Event {
    /// No skill invoked.
    N,
    /// Mixed: at least one non-oracle skill invoked.
    M,
    /// Oracle-only invocation.
    O,
}

impl Event {
    pub const ALL: [Event; 3] = [Event::N, Event::M, Event::O];
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Event::N => "N",
            Event::M => "M",
            Event::O => "O",
        })
    }
}

/// Four-way refinement of [`Event`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineEvent {
    OracleOnly,
    MixedOracleInvoked,
    MixedOracleNotInvoked,
    NoSkill,
}

impl FineEvent {
    /// Column order used by share tables.
    pub const ALL: [FineEvent; 4] = [
        FineEvent::OracleOnly,
        FineEvent::MixedOracleInvoked,
        FineEvent::MixedOracleNotInvoked,
        FineEvent::NoSkill,
    ];

    pub fn coarse(self) -> Event {
        match self {
            FineEvent::OracleOnly => Event::O,
            FineEvent::MixedOracleInvoked | FineEvent::MixedOracleNotInvoked => Event::M,
            FineEvent::NoSkill => Event::N,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FineEvent::OracleOnly => "oracle_only",
            FineEvent::MixedOracleInvoked => "mixed_oracle_invoked",
            FineEvent::MixedOracleNotInvoked => "mixed_oracle_not_invoked",
            FineEvent::NoSkill => "no_skill",
        }
    }
}

/// Coarse and fine label together. Only constructible from the fine label, so
/// the two always agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventLabel {
    pub coarse: Event,
    pub fine: FineEvent,
}

impl From<FineEvent> for EventLabel {
    fn from(fine: FineEvent) -> Self {
        EventLabel {
            coarse: fine.coarse(),
            fine,
        }
    }
}

/// A value per coarse event.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerEvent<T> {
    pub n: T,
    pub m: T,
    pub o: T,
}

impl<T> PerEvent<T> {
    pub fn new(n: T, m: T, o: T) -> Self {
        PerEvent { n, m, o }
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> PerEvent<U> {
        PerEvent {
            n: f(&self.n),
            m: f(&self.m),
            o: f(&self.o),
        }
    }
}

impl<T> Index<Event> for PerEvent<T> {
    type Output = T;
    fn index(&self, e: Event) -> &T {
        match e {
            Event::N => &self.n,
            Event::M => &self.m,
            Event::O => &self.o,
        }
    }
}

impl<T> IndexMut<Event> for PerEvent<T> {
    fn index_mut(&mut self, e: Event) -> &mut T {
        match e {
            Event::N => &mut self.n,
            Event::M => &mut self.m,
            Event::O => &mut self.o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmKind {
    /// Library equals the oracle set.
    Star,
    /// Expanded library.
    Full,
}

/// Event probabilities and conditional pass rates for one (pair, arm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTable {
    pub arm_kind: ArmKind,
    pub metric: Metric,
    /// Trajectories behind the table; 0 for analytic tables.
    pub n: usize,
    pub pi: PerEvent<f64>,
    pub rho: PerEvent<Option<f64>>,
}

impl EventTable {
    /// Builds a table from per-event counts and outcome sums.
    pub fn from_counts(
        arm_kind: ArmKind,
        metric: Metric,
        counts: PerEvent<usize>,
        sums: PerEvent<f64>,
    ) -> Result<Self, ModelError> {
        let n = counts.n + counts.m + counts.o;
        if n == 0 {
            return Err(ModelError::InvalidTable("no trajectories".into()));
        }
        let mut pi = PerEvent::default();
        let mut rho = PerEvent::default();
        for e in Event::ALL {
            pi[e] = counts[e] as f64 / n as f64;
            rho[e] = (counts[e] > 0).then(|| sums[e] / counts[e] as f64);
        }
        let table = EventTable {
            arm_kind,
            metric,
            n,
            pi,
            rho,
        };
        table.check()?;
        Ok(table)
    }

    /// Builds an analytic table from probabilities. `ρ_E` may be absent for
    /// events with `π_E = 0`.
    pub fn from_probabilities(
        arm_kind: ArmKind,
        metric: Metric,
        pi: PerEvent<f64>,
        rho: PerEvent<Option<f64>>,
    ) -> Result<Self, ModelError> {
        let table = EventTable {
            arm_kind,
            metric,
            n: 0,
            pi,
            rho,
        };
        table.check()?;
        Ok(table)
    }

    /// Checks the structural invariants.
    pub fn check(&self) -> Result<(), ModelError> {
        let sum = self.pi.n + self.pi.m + self.pi.o;
        if (sum - 1.0).abs() > IDENTITY_TOL {
            return Err(ModelError::InvalidTable(format!("event probabilities sum to {sum}")));
        }
        for e in Event::ALL {
            let p = self.pi[e];
            if !(0.0..=1.0).contains(&p) {
                return Err(ModelError::InvalidTable(format!("pi[{e}] = {p} outside [0,1]")));
            }
            if let Some(r) = self.rho[e] {
                if !(0.0..=1.0).contains(&r) {
                    return Err(ModelError::InvalidTable(format!("rho[{e}] = {r} outside [0,1]")));
                }
            }
        }
        if self.arm_kind == ArmKind::Star && self.pi.m != 0.0 {
            return Err(ModelError::InvalidTable(format!(
                "star table has pi[M] = {}",
                self.pi.m
            )));
        }
        Ok(())
    }

    /// Event counts implied by `π` and `n`.
    pub fn counts(&self) -> PerEvent<usize> {
        self.pi.map(|p| (p * self.n as f64).round() as usize)
    }

    /// `p = Σ π_E ρ_E` over events that occur.
    pub fn pass_rate(&self) -> f64 {
        Event::ALL
            .iter()
            .filter(|e| self.pi[**e] > 0.0)
            .map(|e| self.pi[*e] * self.rho[*e].unwrap_or(0.0))
            .sum()
    }
}

/// Output of the two-effect decomposition for one star/full comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub delta: f64,
    pub delta_ctx: f64,
    pub delta_shd: f64,
    pub ctx_sup: f64,
    pub shd_sup_tight: f64,
    pub shd_sup_loose: f64,
    /// Events whose conditional pass rate was imputed on either side.
    pub imputed_events: BTreeSet<Event>,
    /// Events with `ρ*_E < ρ_E`; when non-empty the `Δ_ctx ≥ 0` guarantee is
    /// withdrawn.
    pub assumption_violations: BTreeSet<Event>,
}

impl DecompositionResult {
    /// `Δ_ctx + Δ_shd − Δ`, zero up to rounding.
    pub fn identity_residual(&self) -> f64 {
        self.delta_ctx + self.delta_shd - self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Wilson,
    PercentileBootstrap,
    ClusteredBootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub method: IntervalMethod,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

impl IntervalEstimate {
    /// True when the interval does not cover its own point estimate, which
    /// can happen for bootstrap intervals of non-monotone estimands.
    pub fn point_outside(&self) -> bool {
        self.point < self.lo || self.point > self.hi
    }

    pub fn excludes_zero(&self) -> bool {
        self.lo > 0.0 || self.hi < 0.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}
