//! Oracle-set determination from isolation runs, and invocation-event
//! classification of trajectories.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{EventLabel, FineEvent, OracleSet, PairKey};

/// Slack for threshold comparisons; `0.29 - 0.25` is not exactly `0.04` in
/// binary floating point.
const THRESHOLD_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ClassifyError {
    #[error("tau must be a non-negative finite number, got {0}")]
    BadTau(f64),
    #[error("rate {rate} for `{what}` outside [0, 1]")]
    BadRate { what: String, rate: f64 },
    #[error("oracle set for {0} is empty; the pair cannot be classified")]
    EmptyOracle(PairKey),
}

/// Membership `S*(q) = { S_i : p(q,{S_i}) − p(q,∅) ≥ τ }`.
pub fn determine_oracle(
    pair: PairKey,
    isolation: &BTreeMap<String, f64>,
    baseline: f64,
    tau: f64,
) -> Result<OracleSet, ClassifyError> {
    check_tau(tau)?;
    check_rate("baseline", baseline)?;
    let mut members = BTreeSet::new();
    let mut per_skill_uplift = BTreeMap::new();
    for (skill, &rate) in isolation {
        check_rate(skill, rate)?;
        let uplift = rate - baseline;
        if clears(uplift, tau) {
            members.insert(skill.clone());
        }
        per_skill_uplift.insert(skill.clone(), uplift);
    }
    Ok(OracleSet {
        pair,
        members,
        tau,
        per_skill_uplift,
    })
}

fn clears(uplift: f64, tau: f64) -> bool {
    uplift >= tau - THRESHOLD_EPS
}

fn check_tau(tau: f64) -> Result<(), ClassifyError> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(ClassifyError::BadTau(tau))
    }
}

fn check_rate(what: &str, rate: f64) -> Result<(), ClassifyError> {
    if (0.0..=1.0).contains(&rate) {
        Ok(())
    } else {
        Err(ClassifyError::BadRate {
            what: what.to_string(),
            rate,
        })
    }
}

/// Pass counts from isolation runs of one pair: the no-skill baseline and
/// each single-skill library.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IsolationRuns {
    /// `(passes, runs)` with no skills loaded.
    pub baseline: Option<(u64, u64)>,
    /// `(passes, runs)` per skill loaded alone.
    pub per_skill: BTreeMap<String, (u64, u64)>,
}

impl IsolationRuns {
    fn rate((k, n): (u64, u64)) -> Option<f64> {
        (n > 0).then(|| k as f64 / n as f64)
    }

    pub fn baseline_rate(&self) -> Option<f64> {
        self.baseline.and_then(Self::rate)
    }

    pub fn skill_rate(&self, skill: &str) -> Option<f64> {
        self.per_skill.get(skill).copied().and_then(Self::rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExclusionReason {
    /// A bundle skill's uplift fell below `τ`.
    BelowThreshold {
        skill: String,
        uplift: f64,
    },
    /// No isolation runs for the baseline or a bundle skill.
    MissingIsolation {
        what: String,
    },
    EmptyBundle,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairFilter {
    /// Included pairs; the authored bundle becomes the oracle set.
    pub included: BTreeMap<PairKey, OracleSet>,
    pub excluded: BTreeMap<PairKey, ExclusionReason>,
}

/// Keeps a pair iff every skill of its authored bundle clears `τ` in
/// isolation. For kept pairs the bundle itself is the oracle set.
pub fn filter_pairs(
    bundles: &BTreeMap<PairKey, Vec<String>>,
    isolation: &BTreeMap<PairKey, IsolationRuns>,
    tau: f64,
) -> Result<PairFilter, ClassifyError> {
    check_tau(tau)?;
    let mut out = PairFilter::default();
    for (pair, bundle) in bundles {
        match judge_pair(bundle, isolation.get(pair), tau) {
            Ok(uplifts) => {
                let oracle = OracleSet {
                    pair: pair.clone(),
                    members: bundle.iter().cloned().collect(),
                    tau,
                    per_skill_uplift: uplifts,
                };
                out.included.insert(pair.clone(), oracle);
            }
            Err(reason) => {
                out.excluded.insert(pair.clone(), reason);
            }
        }
    }
    Ok(out)
}

fn judge_pair(
    bundle: &[String],
    runs: Option<&IsolationRuns>,
    tau: f64,
) -> Result<BTreeMap<String, f64>, ExclusionReason> {
    if bundle.is_empty() {
        return Err(ExclusionReason::EmptyBundle);
    }
    let missing = |what: &str| ExclusionReason::MissingIsolation { what: what.to_string() };
    let runs = runs.ok_or_else(|| missing("all isolation runs"))?;
    let base = runs.baseline_rate().ok_or_else(|| missing("baseline"))?;
    let mut uplifts = BTreeMap::new();
    // Report the weakest failing skill, first in bundle order on ties.
    let mut worst: Option<(String, f64)> = None;
    for skill in bundle {
        let uplift = runs.skill_rate(skill).ok_or_else(|| missing(skill))? - base;
        if !clears(uplift, tau) && worst.as_ref().is_none_or(|(_, u)| uplift < *u) {
            worst = Some((skill.clone(), uplift));
        }
        uplifts.insert(skill.clone(), uplift);
    }
    match worst {
        Some((skill, uplift)) => Err(ExclusionReason::BelowThreshold { skill, uplift }),
        None => Ok(uplifts),
    }
}

/// Classifies a distinct invocation set against a non-empty oracle set.
pub fn classify_event<'a, I>(invoked: I, oracle: &OracleSet) -> Result<EventLabel, ClassifyError>
where
    I: IntoIterator<Item = &'a str>,
{
    if oracle.is_empty() {
        return Err(ClassifyError::EmptyOracle(oracle.pair.clone()));
    }
    Ok(classify_with(invoked, |s| oracle.contains(s)).into())
}

/// Classification against an arbitrary membership test; the caller
/// guarantees the oracle set is non-empty.
pub fn classify_with<'a, I, F>(invoked: I, is_oracle: F) -> FineEvent
where
    I: IntoIterator<Item = &'a str>,
    F: Fn(&str) -> bool,
{
    let (mut any, mut any_oracle, mut any_other) = (false, false, false);
    for s in invoked {
        any = true;
        if is_oracle(s) {
            any_oracle = true;
        } else {
            any_other = true;
        }
    }
    match (any, any_oracle, any_other) {
        (false, _, _) => FineEvent::NoSkill,
        (true, _, false) => FineEvent::OracleOnly,
        (true, true, true) => FineEvent::MixedOracleInvoked,
        (true, false, true) => FineEvent::MixedOracleNotInvoked,
    }
}
