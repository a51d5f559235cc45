//! Synthetic trajectory generator with known event probabilities and
//! conditional pass rates, plus the closed-form values the estimators should
//! recover.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{self, BundleEntry, Dataset, IngestError, Manifest, ManifestEntry};
use crate::model::{FineEvent, Metric, PairKey, PerEvent, Trajectory, STAR_ARM};
use crate::stats::derive_trial_seed;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("{pair}: {what}")]
    Invalid { pair: String, what: String },
    #[error("no pairs configured")]
    NoPairs,
    #[error("task `{0}` is configured with different oracle pools or subtask counts")]
    InconsistentTask(String),
}

/// Probabilities on the star arm, where mixed events cannot occur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarBlock {
    pub n: f64,
    pub o: f64,
}

/// How `star_rho` / `full_rho` turn into subtask outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeModel {
    /// `ρ` is the all-pass probability; a failing run misses exactly one
    /// subtask.
    #[default]
    Binary,
    /// `ρ` is an independent per-subtask pass probability.
    PerSubtask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPairConfig {
    pub pair: PairKey,
    pub star_pi: StarBlock,
    pub full_pi: PerEvent<f64>,
    pub star_rho: StarBlock,
    pub full_rho: PerEvent<f64>,
    /// Share of mixed trajectories that also invoke an oracle skill.
    #[serde(default = "half")]
    pub mixed_oracle_share: f64,
    pub m: usize,
    #[serde(default)]
    pub outcome: OutcomeModel,
    pub n_star: usize,
    pub n_full: usize,
    pub oracle_names: Vec<String>,
    pub distractor_names: Vec<String>,
}

fn half() -> f64 {
    0.5
}

const SUM_TOL: f64 = 1e-9;

impl SimPairConfig {
    pub fn check(&self) -> Result<(), SimError> {
        let bad = |what: String| {
            Err(SimError::Invalid {
                pair: self.pair.to_string(),
                what,
            })
        };
        let probs = [
            ("star_pi.n", self.star_pi.n),
            ("star_pi.o", self.star_pi.o),
            ("full_pi.n", self.full_pi.n),
            ("full_pi.m", self.full_pi.m),
            ("full_pi.o", self.full_pi.o),
            ("star_rho.n", self.star_rho.n),
            ("star_rho.o", self.star_rho.o),
            ("full_rho.n", self.full_rho.n),
            ("full_rho.m", self.full_rho.m),
            ("full_rho.o", self.full_rho.o),
            ("mixed_oracle_share", self.mixed_oracle_share),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if (self.star_pi.n + self.star_pi.o - 1.0).abs() > SUM_TOL {
            return bad("star_pi does not sum to 1".into());
        }
        if (self.full_pi.n + self.full_pi.m + self.full_pi.o - 1.0).abs() > SUM_TOL {
            return bad("full_pi does not sum to 1".into());
        }
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        let oracle: BTreeSet<&String> = self.oracle_names.iter().collect();
        let distractors: BTreeSet<&String> = self.distractor_names.iter().collect();
        if oracle.len() != self.oracle_names.len() || distractors.len() != self.distractor_names.len() {
            return bad("duplicate names in a pool".into());
        }
        if let Some(n) = oracle.intersection(&distractors).next() {
            return bad(format!("`{n}` is in both name pools"));
        }
        let needs_oracle =
            self.star_pi.o > 0.0 || self.full_pi.o > 0.0 || self.full_pi.m * self.mixed_oracle_share > 0.0;
        if needs_oracle && oracle.is_empty() {
            return bad("oracle_names is empty but oracle invocations have mass".into());
        }
        if self.full_pi.m > 0.0 && distractors.is_empty() {
            return bad("distractor_names is empty but full_pi.m > 0".into());
        }
        Ok(())
    }

    /// Fine-event probabilities on the full arm, in column order.
    fn full_fine(&self) -> [(FineEvent, f64); 4] {
        let s = self.mixed_oracle_share;
        [
            (FineEvent::OracleOnly, self.full_pi.o),
            (FineEvent::MixedOracleInvoked, self.full_pi.m * s),
            (FineEvent::MixedOracleNotInvoked, self.full_pi.m * (1.0 - s)),
            (FineEvent::NoSkill, self.full_pi.n),
        ]
    }
}

/// Closed-form effect sizes and bounds for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGroundTruth {
    pub delta: f64,
    pub delta_ctx: f64,
    pub delta_shd: f64,
    pub ctx_sup: f64,
    pub shd_sup_tight: f64,
    pub shd_sup_loose: f64,
}

impl SimGroundTruth {
    pub fn mean<'a, I: IntoIterator<Item = &'a SimGroundTruth>>(truths: I) -> Option<SimGroundTruth> {
        let mut acc = [0.0; 6];
        let mut k = 0usize;
        for t in truths {
            for (a, v) in acc.iter_mut().zip(t.as_array()) {
                *a += v;
            }
            k += 1;
        }
        if k == 0 {
            return None;
        }
        let [delta, delta_ctx, delta_shd, ctx_sup, shd_sup_tight, shd_sup_loose] = acc.map(|a| a / k as f64);
        Some(SimGroundTruth {
            delta,
            delta_ctx,
            delta_shd,
            ctx_sup,
            shd_sup_tight,
            shd_sup_loose,
        })
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.delta,
            self.delta_ctx,
            self.delta_shd,
            self.ctx_sup,
            self.shd_sup_tight,
            self.shd_sup_loose,
        ]
    }
}

/// Truth under the binary metric.
pub fn ground_truth(cfg: &SimPairConfig) -> Result<SimGroundTruth, SimError> {
    ground_truth_for(cfg, Metric::Binary)
}

/// Truth under either metric.
pub fn ground_truth_for(cfg: &SimPairConfig, metric: Metric) -> Result<SimGroundTruth, SimError> {
    cfg.check()?;
    let m = cfg.m as f64;
    let rate = |r: f64| match (cfg.outcome, metric) {
        (OutcomeModel::Binary, Metric::Binary) => r,
        (OutcomeModel::Binary, Metric::Fractional) => r + (1.0 - r) * (m - 1.0) / m,
        (OutcomeModel::PerSubtask, Metric::Binary) => r.powi(cfg.m as i32),
        (OutcomeModel::PerSubtask, Metric::Fractional) => r,
    };
    let (sn, so) = (rate(cfg.star_rho.n), rate(cfg.star_rho.o));
    let (fnn, fm, fo) = (rate(cfg.full_rho.n), rate(cfg.full_rho.m), rate(cfg.full_rho.o));
    let (psn, pso) = (cfg.star_pi.n, cfg.star_pi.o);
    let (pfn, pfm, pfo) = (cfg.full_pi.n, cfg.full_pi.m, cfg.full_pi.o);

    let delta = (psn * sn + pso * so) - (pfn * fnn + pfm * fm + pfo * fo);
    let delta_ctx = psn * (sn - fnn) + pso * (so - fo);
    let delta_shd = (psn - pfn) * (fnn - fm) + (pso - pfo) * (fo - fm);
    let shift = (psn - pfn).abs() + (pso - pfo).abs();
    Ok(SimGroundTruth {
        delta,
        delta_ctx,
        delta_shd,
        ctx_sup: (sn - fnn).max(so - fo),
        shd_sup_tight: shift * (fnn - fm).abs().max((fo - fm).abs()),
        shd_sup_loose: shift,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Draws `(a, b)` from weighted admissible split sizes.
fn pick_sizes<R: Rng>(rng: &mut R, options: &[(usize, usize, f64)]) -> (usize, usize) {
    let total: f64 = options.iter().map(|o| o.2).sum();
    let mut u = rng.random::<f64>() * total;
    for &(a, b, w) in options {
        if u < w {
            return (a, b);
        }
        u -= w;
    }
    let last = options.last().expect("non-empty options");
    (last.0, last.1)
}

const MAX_INVOKED: usize = 3;

/// Uniform draw over invocation sets consistent with `fine`, with at most
/// three skills, returned in a uniformly random invocation order.
fn invocation_set<R: Rng>(rng: &mut R, fine: FineEvent, oracle: &[String], distractors: &[String]) -> Vec<String> {
    let (no, nd) = (oracle.len(), distractors.len());
    let mut options = Vec::new();
    match fine {
        FineEvent::NoSkill => return Vec::new(),
        FineEvent::OracleOnly => {
            for a in 1..=no.min(MAX_INVOKED) {
                options.push((a, 0, binomial(no, a)));
            }
        }
        FineEvent::MixedOracleNotInvoked => {
            for b in 1..=nd.min(MAX_INVOKED) {
                options.push((0, b, binomial(nd, b)));
            }
        }
        FineEvent::MixedOracleInvoked => {
            for a in 1..=no.min(MAX_INVOKED - 1) {
                for b in 1..=nd.min(MAX_INVOKED - a) {
                    options.push((a, b, binomial(no, a) * binomial(nd, b)));
                }
            }
        }
    }
    let (a, b) = pick_sizes(rng, &options);
    let mut set: Vec<String> = rand::seq::index::sample(rng, no, a)
        .into_iter()
        .map(|i| oracle[i].clone())
        .collect();
    set.extend(
        rand::seq::index::sample(rng, nd, b)
            .into_iter()
            .map(|i| distractors[i].clone()),
    );
    set.shuffle(rng);
    set
}

fn outcome<R: Rng>(rng: &mut R, cfg: &SimPairConfig, rho: f64) -> Vec<bool> {
    match cfg.outcome {
        OutcomeModel::Binary => {
            let mut passes = vec![true; cfg.m];
            if rng.random::<f64>() >= rho {
                let i = rng.random_range(0..cfg.m);
                passes[i] = false;
            }
            passes
        }
        OutcomeModel::PerSubtask => (0..cfg.m).map(|_| rng.random::<f64>() < rho).collect(),
    }
}

fn draw_event<R: Rng>(rng: &mut R, probs: &[(FineEvent, f64)]) -> FineEvent {
    let mut u = rng.random::<f64>();
    for &(e, p) in probs {
        if u < p {
            return e;
        }
        u -= p;
    }
    // Rounding slack: fall back to the last event with mass.
    probs
        .iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map(|(e, _)| *e)
        .unwrap_or(FineEvent::NoSkill)
}

/// Star-arm then full-arm trajectories for one pair.
pub fn generate(cfg: &SimPairConfig, full_arm: &str, seed: u64) -> Result<Vec<Trajectory>, SimError> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let star_probs = [
        (FineEvent::OracleOnly, cfg.star_pi.o),
        (FineEvent::NoSkill, cfg.star_pi.n),
    ];
    let full_probs = cfg.full_fine();
    let mut out = Vec::with_capacity(cfg.n_star + cfg.n_full);
    for (arm, n, probs) in [
        (STAR_ARM, cfg.n_star, &star_probs[..]),
        (full_arm, cfg.n_full, &full_probs[..]),
    ] {
        let star = arm == STAR_ARM;
        for _ in 0..n {
            let fine = draw_event(&mut rng, probs);
            let rho = match (fine.coarse(), star) {
                (crate::model::Event::N, true) => cfg.star_rho.n,
                (crate::model::Event::O, true) => cfg.star_rho.o,
                (e, _) => cfg.full_rho[e],
            };
            let invocations = invocation_set(&mut rng, fine, &cfg.oracle_names, &cfg.distractor_names);
            let subtask_passes = outcome(&mut rng, cfg, rho);
            out.push(Trajectory {
                pair: cfg.pair.clone(),
                arm_id: arm.to_string(),
                invocations,
                subtask_passes,
                valid: true,
                seed: Some(seed),
            });
        }
    }
    Ok(out)
}

/// A multi-pair simulation, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_full_arm")]
    pub full_arm: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub pairs: Vec<SimPairConfig>,
}

fn default_full_arm() -> String {
    "full".to_string()
}

fn default_seed() -> u64 {
    42
}

/// Per-pair truth plus the unweighted mean over pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub metric: Metric,
    pub pairs: BTreeMap<String, SimGroundTruth>,
    pub pair_mean: SimGroundTruth,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub dataset: Dataset,
    pub manifest: Manifest,
    pub bundles: BTreeMap<String, BundleEntry>,
    pub truth: TruthSidecar,
}

impl SimConfig {
    pub fn check(&self) -> Result<(), SimError> {
        if self.pairs.is_empty() {
            return Err(SimError::NoPairs);
        }
        let mut tasks: BTreeMap<&str, (&Vec<String>, usize)> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for p in &self.pairs {
            p.check()?;
            if !seen.insert(&p.pair) {
                return Err(SimError::Invalid {
                    pair: p.pair.to_string(),
                    what: "pair configured twice".into(),
                });
            }
            let entry = tasks.entry(&p.pair.task_id).or_insert((&p.oracle_names, p.m));
            if *entry != (&p.oracle_names, p.m) {
                return Err(SimError::InconsistentTask(p.pair.task_id.clone()));
            }
        }
        Ok(())
    }

    /// Generates every pair (in parallel, one derived seed per pair) and
    /// assembles the library, bundles and truth sidecar.
    pub fn run(&self, metric: Metric) -> Result<SimOutput, SimError> {
        self.check()?;
        let per_pair: Vec<Vec<Trajectory>> = self
            .pairs
            .par_iter()
            .enumerate()
            .map(|(i, p)| generate(p, &self.full_arm, derive_trial_seed(self.seed, i as u64)))
            .collect::<Result<_, _>>()?;

        let mut names: Vec<String> = Vec::new();
        let mut seen = BTreeSet::new();
        for p in &self.pairs {
            for n in p.oracle_names.iter().chain(&p.distractor_names) {
                if seen.insert(n.clone()) {
                    names.push(n.clone());
                }
            }
        }
        let manifest = Manifest {
            library_id: self.full_arm.clone(),
            skills: names
                .iter()
                .map(|n| ManifestEntry {
                    name: n.clone(),
                    description: format!("Synthetic skill {n}."),
                    body: Some(format!("# {n}\n\nSynthetic body.\n")),
                    body_hash: None,
                })
                .collect(),
        };
        let bundles: BTreeMap<String, BundleEntry> = self
            .pairs
            .iter()
            .map(|p| {
                (
                    p.pair.task_id.clone(),
                    BundleEntry::Task {
                        skills: p.oracle_names.clone(),
                        subtasks: p.m,
                    },
                )
            })
            .collect();

        let mut dataset = Dataset::new();
        let (library, _) = ingest::dedup_manifest(&manifest, "sim").expect("synthetic names are unique");
        dataset.add_library(library);
        dataset.add_bundles(bundles.clone());
        dataset.trajectories = per_pair.into_iter().flatten().collect();

        let mut pairs = BTreeMap::new();
        for p in &self.pairs {
            pairs.insert(p.pair.to_string(), ground_truth_for(p, metric)?);
        }
        let pair_mean = SimGroundTruth::mean(pairs.values()).expect("at least one pair");
        Ok(SimOutput {
            dataset,
            manifest,
            bundles,
            truth: TruthSidecar {
                metric,
                pairs,
                pair_mean,
            },
        })
    }
}

/// Paths written by [`write_output`].
#[derive(Debug, Clone)]
pub struct SimFiles {
    pub manifest: PathBuf,
    pub bundles: PathBuf,
    pub log: PathBuf,
    pub truth: PathBuf,
}

/// Writes `<full_arm>.json`, `bundles.json`, `trajectories.jsonl` and
/// `truth.json` into `dir`.
pub fn write_output(out: &SimOutput, dir: &Path) -> Result<SimFiles, IngestError> {
    std::fs::create_dir_all(dir).map_err(|e| IngestError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let files = SimFiles {
        manifest: dir.join(format!("{}.json", out.manifest.library_id)),
        bundles: dir.join("bundles.json"),
        log: dir.join("trajectories.jsonl"),
        truth: dir.join("truth.json"),
    };
    ingest::write_manifest(&files.manifest, &out.manifest)?;
    ingest::write_bundles(&files.bundles, &out.bundles)?;
    ingest::write_trajectories(&files.log, &out.dataset.trajectories)?;
    ingest::write_json(&files.truth, &out.truth)?;
    Ok(files)
}

/// A ready-made configuration used by examples and tests: `k` pairs on two
/// models with moderate shadowing and all events populated on both arms.
pub fn demo_config(k: usize, n_per_arm: usize, seed: u64) -> SimConfig {
    let pairs = (0..k)
        .map(|i| {
            let f = i as f64 / k.max(1) as f64;
            SimPairConfig {
                pair: PairKey {
                    task_id: format!("task-{i:02}"),
                    model_id: if i % 2 == 0 { "model-a" } else { "model-b" }.into(),
                },
                star_pi: StarBlock {
                    n: 0.15 + 0.1 * f,
                    o: 0.85 - 0.1 * f,
                },
                full_pi: PerEvent::new(0.3 + 0.1 * f, 0.15 + 0.1 * f, 0.55 - 0.2 * f),
                star_rho: StarBlock {
                    n: 0.25 + 0.1 * f,
                    o: 0.7 - 0.1 * f,
                },
                full_rho: PerEvent::new(0.2 + 0.1 * f, 0.1 + 0.05 * f, 0.6 - 0.1 * f),
                mixed_oracle_share: 0.4,
                m: 2 + i % 3,
                outcome: OutcomeModel::Binary,
                n_star: n_per_arm,
                n_full: n_per_arm,
                oracle_names: (0..2 + i % 2).map(|j| format!("oracle-{i}-{j}")).collect(),
                distractor_names: (0..6).map(|j| format!("distractor-{j}")).collect(),
            }
        })
        .collect();
    SimConfig {
        full_arm: "full".into(),
        seed,
        pairs,
    }
}
