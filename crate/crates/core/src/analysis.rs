//! Dataset-level pipeline: oracle selection, scoring, and the per-pair,
//! per-model and pooled tables with their intervals.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::classify::{filter_pairs, ClassifyError, ExclusionReason};
use crate::estimate::{
    self, decompose, pair_mean, table_from_scored, Aggregation, EstimateError, FineCounts, ImputePolicy, Scored,
    ShadowPair,
};
use crate::ingest::Dataset;
use crate::model::{
    is_isolation_arm, ArmKind, DecompositionResult, Event, FineEvent, IntervalEstimate, Metric, OracleSet, PairKey,
    Trajectory, STAR_ARM,
};
use crate::stats::{
    clustered_bootstrap_multi, percentile_bootstrap, stratified_bootstrap_multi, wilson, BootstrapSpec, Cluster,
    ClusterView, StatsError,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalysisError {
    #[error("no (task, model) pairs left after oracle filtering")]
    NoIncludedPairs,
    #[error("arm `{0}` has no trajectories")]
    UnknownArm(String),
    #[error("identity residual {0:e} exceeds tolerance")]
    Identity(f64),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub tau: f64,
    pub metric: Metric,
    pub aggregation: Aggregation,
    pub impute: ImputePolicy,
    pub bootstrap: BootstrapSpec,
    pub min_cell_n: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            tau: 0.04,
            metric: Metric::Binary,
            aggregation: Aggregation::PairMean,
            impute: ImputePolicy::Counterpart,
            bootstrap: BootstrapSpec::default(),
            min_cell_n: 5,
        }
    }
}

/// Trajectories of one (pair, arm) after classification.
#[derive(Debug, Clone, Default)]
pub struct ArmCell {
    /// Fine-event counts over every logged trajectory, valid or not.
    pub logged: FineCounts,
    /// Valid trajectories only.
    pub valid: Vec<Scored>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub oracles: BTreeMap<PairKey, OracleSet>,
    pub excluded: BTreeMap<PairKey, ExclusionReason>,
    /// Whether isolation runs decided inclusion. Without them every authored
    /// bundle is taken as its pair's oracle set.
    pub filter_applied: bool,
    pub cells: BTreeMap<PairKey, BTreeMap<String, ArmCell>>,
    /// Star first, then library arms by size.
    pub arms: Vec<String>,
}

/// Selects oracle sets and scores every star and library-arm trajectory.
pub fn prepare(dataset: &Dataset, tau: f64, metric: Metric) -> Result<Prepared, AnalysisError> {
    let bundles = dataset.oracle_bundles();
    let filter_applied = dataset.has_isolation_data();
    let (oracles, excluded) = if filter_applied {
        let f = filter_pairs(&bundles, &dataset.isolation_runs(), tau)?;
        (f.included, f.excluded)
    } else {
        let mut inc = BTreeMap::new();
        let mut exc = BTreeMap::new();
        for (p, b) in bundles {
            if b.is_empty() {
                exc.insert(p, ExclusionReason::EmptyBundle);
            } else {
                inc.insert(p.clone(), OracleSet::from_bundle(p, b, tau));
            }
        }
        (inc, exc)
    };

    let mut cells: BTreeMap<PairKey, BTreeMap<String, ArmCell>> = BTreeMap::new();
    for t in dataset.trajectories.iter().filter(|t| !is_isolation_arm(&t.arm_id)) {
        let Some(oracle) = oracles.get(&t.pair) else { continue };
        let s = estimate::score(t, oracle, metric)?;
        let cell = cells
            .entry(t.pair.clone())
            .or_default()
            .entry(t.arm_id.clone())
            .or_default();
        cell.logged.add(s.fine);
        if t.valid {
            cell.valid.push(s);
        }
    }
    let mut arms = vec![STAR_ARM.to_string()];
    arms.extend(dataset.full_arms().into_iter().map(str::to_string));
    Ok(Prepared {
        oracles,
        excluded,
        filter_applied,
        cells,
        arms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewKind {
    Pair,
    Model,
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct View {
    pub kind: ViewKind,
    pub key: String,
    pub pairs: Vec<PairKey>,
}

/// Which views a table should contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSelection {
    pub pairs: bool,
    pub models: bool,
    pub pooled: bool,
}

impl Default for ViewSelection {
    fn default() -> Self {
        ViewSelection {
            pairs: true,
            models: true,
            pooled: true,
        }
    }
}

impl Prepared {
    /// Included pairs in key order.
    pub fn pairs(&self) -> impl Iterator<Item = &PairKey> {
        self.oracles.keys()
    }

    pub fn views(&self, sel: ViewSelection) -> Vec<View> {
        let mut out = Vec::new();
        if sel.pairs {
            for p in self.pairs() {
                out.push(View {
                    kind: ViewKind::Pair,
                    key: p.to_string(),
                    pairs: vec![p.clone()],
                });
            }
        }
        if sel.models {
            let mut by_model: BTreeMap<&str, Vec<PairKey>> = BTreeMap::new();
            for p in self.pairs() {
                by_model.entry(&p.model_id).or_default().push(p.clone());
            }
            for (m, pairs) in by_model {
                out.push(View {
                    kind: ViewKind::Model,
                    key: m.to_string(),
                    pairs,
                });
            }
        }
        if sel.pooled {
            out.push(View {
                kind: ViewKind::Pooled,
                key: "pooled".into(),
                pairs: self.pairs().cloned().collect(),
            });
        }
        out
    }

    pub fn full_arms(&self) -> impl Iterator<Item = &str> {
        self.arms.iter().skip(1).map(String::as_str)
    }

    fn cell(&self, pair: &PairKey, arm: &str) -> Option<&ArmCell> {
        self.cells.get(pair).and_then(|m| m.get(arm))
    }

    fn valid(&self, pair: &PairKey, arm: &str) -> &[Scored] {
        self.cell(pair, arm).map(|c| c.valid.as_slice()).unwrap_or(&[])
    }

    pub fn has_arm(&self, arm: &str) -> bool {
        self.cells.values().any(|m| m.contains_key(arm))
    }
}

/// All effect estimates for one view and arm, from one joint bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effects {
    pub delta: IntervalEstimate,
    pub delta_ctx: IntervalEstimate,
    pub delta_shd: IntervalEstimate,
    /// `Δ_ctx + Δ_shd − Δ`, recomputed on every resample.
    pub residual: IntervalEstimate,
    pub ctx_sup: IntervalEstimate,
    pub shd_sup_tight: IntervalEstimate,
    pub shd_sup_loose: IntervalEstimate,
    pub imputed_events: BTreeSet<Event>,
    pub assumption_violations: BTreeSet<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub view: ViewKind,
    pub key: String,
    pub arm: String,
    /// Pairs whose star and library cells both reach `min_cell_n`.
    pub n_pairs: usize,
    pub n_star: usize,
    pub n_full: usize,
    /// `None` when no pair in the view has enough valid trajectories.
    pub effects: Option<Effects>,
}

fn effect_result(
    views: &[ClusterView<'_, Scored>],
    cfg: &AnalysisConfig,
) -> Result<DecompositionResult, EstimateError> {
    let one = |v: &ClusterView<'_, Scored>| -> Result<DecompositionResult, EstimateError> {
        let star = table_from_scored(ArmKind::Star, cfg.metric, v[0].iter().copied())?;
        let full = table_from_scored(ArmKind::Full, cfg.metric, v[1].iter().copied())?;
        decompose(&star, &full, cfg.impute)
    };
    match cfg.aggregation {
        Aggregation::PairMean => {
            let results = views.iter().map(one).collect::<Result<Vec<_>, _>>()?;
            Ok(pair_mean(&results))
        }
        Aggregation::TrajectoryWeighted => {
            let star = table_from_scored(
                ArmKind::Star,
                cfg.metric,
                views.iter().flat_map(|v| v[0].iter().copied()),
            )?;
            let full = table_from_scored(
                ArmKind::Full,
                cfg.metric,
                views.iter().flat_map(|v| v[1].iter().copied()),
            )?;
            decompose(&star, &full, cfg.impute)
        }
    }
}

fn effect_vector(views: &[ClusterView<'_, Scored>], cfg: &AnalysisConfig) -> Vec<f64> {
    match effect_result(views, cfg) {
        Ok(r) => vec![
            r.delta,
            r.delta_ctx,
            r.delta_shd,
            r.delta_ctx + r.delta_shd - r.delta,
            r.ctx_sup,
            r.shd_sup_tight,
            r.shd_sup_loose,
        ],
        Err(_) => vec![f64::NAN; 7],
    }
}

/// Joint intervals for every effect of `pairs` on `arm`.
pub fn effects_for(
    prepared: &Prepared,
    pairs: &[PairKey],
    arm: &str,
    cfg: &AnalysisConfig,
) -> Result<Option<Effects>, AnalysisError> {
    let clusters: Vec<Cluster<Scored>> = pairs
        .iter()
        .map(|p| (prepared.valid(p, STAR_ARM), prepared.valid(p, arm)))
        .filter(|(s, f)| s.len() >= cfg.min_cell_n.max(1) && f.len() >= cfg.min_cell_n.max(1))
        .map(|(s, f)| Cluster {
            strata: vec![s.to_vec(), f.to_vec()],
        })
        .collect();
    if clusters.is_empty() {
        return Ok(None);
    }
    let views: Vec<ClusterView<'_, Scored>> = clusters
        .iter()
        .map(|c| c.strata.iter().map(|s| s.iter().collect()).collect())
        .collect();
    let point = effect_result(&views, cfg)?;
    let residual = point.delta_ctx + point.delta_shd - point.delta;
    if residual.abs() > crate::model::IDENTITY_TOL {
        return Err(AnalysisError::Identity(residual));
    }
    let mut ci = if clusters.len() >= 2 {
        clustered_bootstrap_multi(&clusters, |v| effect_vector(v, cfg), &cfg.bootstrap)?
    } else {
        stratified_bootstrap_multi(
            &clusters[0],
            |v| effect_vector(std::slice::from_ref(v), cfg),
            &cfg.bootstrap,
        )?
    };
    let mut take = || ci.remove(0);
    Ok(Some(Effects {
        delta: take(),
        delta_ctx: take(),
        delta_shd: take(),
        residual: take(),
        ctx_sup: take(),
        shd_sup_tight: take(),
        shd_sup_loose: take(),
        imputed_events: point.imputed_events,
        assumption_violations: point.assumption_violations,
    }))
}

/// Effect rows for every selected view on one library arm.
pub fn effect_rows(
    prepared: &Prepared,
    arm: &str,
    sel: ViewSelection,
    cfg: &AnalysisConfig,
) -> Result<Vec<EffectRow>, AnalysisError> {
    if prepared.oracles.is_empty() {
        return Err(AnalysisError::NoIncludedPairs);
    }
    if !prepared.has_arm(arm) {
        return Err(AnalysisError::UnknownArm(arm.to_string()));
    }
    let mut rows = Vec::new();
    for view in prepared.views(sel) {
        let n_star = view.pairs.iter().map(|p| prepared.valid(p, STAR_ARM).len()).sum();
        let n_full = view.pairs.iter().map(|p| prepared.valid(p, arm).len()).sum();
        let min = cfg.min_cell_n.max(1);
        let n_pairs = view
            .pairs
            .iter()
            .filter(|p| prepared.valid(p, STAR_ARM).len() >= min && prepared.valid(p, arm).len() >= min)
            .count();
        let effects = effects_for(prepared, &view.pairs, arm, cfg)?;
        rows.push(EffectRow {
            view: view.kind,
            key: view.key,
            arm: arm.to_string(),
            n_pairs,
            n_star,
            n_full,
            effects,
        });
    }
    Ok(rows)
}

/// Four-way invocation shares over every logged trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub view: ViewKind,
    pub key: String,
    pub arm: String,
    pub counts: FineCounts,
    /// Percentages in [`FineEvent::ALL`] order.
    pub shares: [f64; 4],
}

/// Share rows per (view, arm); empty cells are dropped and reported.
pub fn share_rows(prepared: &Prepared, sel: ViewSelection) -> (Vec<ShareRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for view in prepared.views(sel) {
        for arm in &prepared.arms {
            let mut counts = FineCounts::default();
            for p in &view.pairs {
                if let Some(c) = prepared.cell(p, arm) {
                    counts.merge(&c.logged);
                }
            }
            if counts.total() == 0 {
                warnings.push(format!(
                    "{} `{}` has no trajectories on arm `{arm}`; row omitted",
                    kind_name(view.kind),
                    view.key
                ));
                continue;
            }
            rows.push(ShareRow {
                view: view.kind,
                key: view.key.clone(),
                arm: arm.clone(),
                shares: counts.percentages(),
                counts,
            });
        }
    }
    (rows, warnings)
}

fn kind_name(k: ViewKind) -> &'static str {
    match k {
        ViewKind::Pair => "pair",
        ViewKind::Model => "model",
        ViewKind::Pooled => "view",
    }
}

/// Shadowing rate `π_M` per (view, library arm) with a Wilson interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowingRow {
    pub view: ViewKind,
    pub key: String,
    pub arm: String,
    pub mixed: u64,
    pub n: u64,
    pub rate: IntervalEstimate,
}

pub fn shadowing_rows(prepared: &Prepared, sel: ViewSelection, level: f64) -> Result<Vec<ShadowingRow>, AnalysisError> {
    let (shares, _) = share_rows(prepared, sel);
    shares
        .into_iter()
        .filter(|r| r.arm != STAR_ARM)
        .map(|r| {
            let (mixed, n) = (r.counts.mixed(), r.counts.total());
            Ok(ShadowingRow {
                view: r.view,
                key: r.key,
                arm: r.arm,
                mixed,
                n,
                rate: wilson(mixed, n, level)?,
            })
        })
        .collect()
}

/// Which trajectories a pass-rate cell covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventFilter {
    Fine(FineEvent),
    All,
}

impl EventFilter {
    pub const ALL: [EventFilter; 5] = [
        EventFilter::Fine(FineEvent::OracleOnly),
        EventFilter::Fine(FineEvent::MixedOracleInvoked),
        EventFilter::Fine(FineEvent::MixedOracleNotInvoked),
        EventFilter::Fine(FineEvent::NoSkill),
        EventFilter::All,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EventFilter::Fine(f) => f.label(),
            EventFilter::All => "all",
        }
    }

    fn matches(self, s: &Scored) -> bool {
        match self {
            EventFilter::Fine(f) => s.fine == f,
            EventFilter::All => true,
        }
    }
}

/// Pass rate of one (event, view, arm) cell over valid trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRateRow {
    pub event: EventFilter,
    pub view: ViewKind,
    pub key: String,
    pub arm: String,
    pub n_valid: usize,
    /// `None` below `min_cell_n`.
    pub estimate: Option<IntervalEstimate>,
}

/// Wilson intervals for the binary metric, percentile bootstrap over
/// trajectories for the fractional one. Views pool trajectories.
pub fn pass_rate_rows(
    prepared: &Prepared,
    sel: ViewSelection,
    cfg: &AnalysisConfig,
) -> Result<Vec<PassRateRow>, AnalysisError> {
    let views = prepared.views(sel);
    let mut rows = Vec::new();
    for event in EventFilter::ALL {
        for view in &views {
            for arm in &prepared.arms {
                let outcomes: Vec<f64> = view
                    .pairs
                    .iter()
                    .flat_map(|p| prepared.valid(p, arm).iter())
                    .filter(|s| event.matches(s))
                    .map(|s| s.outcome)
                    .collect();
                let n = outcomes.len();
                let estimate = if n == 0 || n < cfg.min_cell_n {
                    None
                } else {
                    Some(match cfg.metric {
                        Metric::Binary => {
                            let k = outcomes.iter().filter(|o| **o >= 1.0).count();
                            wilson(k as u64, n as u64, cfg.bootstrap.level)?
                        }
                        Metric::Fractional => fractional_interval(&outcomes, &cfg.bootstrap)?,
                    })
                };
                rows.push(PassRateRow {
                    event,
                    view: view.kind,
                    key: view.key.clone(),
                    arm: arm.clone(),
                    n_valid: n,
                    estimate,
                });
            }
        }
    }
    Ok(rows)
}

fn fractional_interval(outcomes: &[f64], spec: &BootstrapSpec) -> Result<IntervalEstimate, StatsError> {
    let mean = |s: &[&f64]| s.iter().copied().sum::<f64>() / s.len() as f64;
    if outcomes.len() == 1 {
        let mut e = percentile_bootstrap(&[outcomes[0], outcomes[0]], mean, spec)?;
        e.point = outcomes[0];
        return Ok(e);
    }
    percentile_bootstrap(outcomes, mean, spec)
}

/// First-pick distractor counts over the included pairs' library arms
/// (all of them, or only `arm`).
pub fn shadow_pairs(dataset: &Dataset, prepared: &Prepared, arm: Option<&str>) -> Vec<ShadowPair> {
    let trajs: Vec<&Trajectory> = dataset
        .trajectories
        .iter()
        .filter(|t| prepared.oracles.contains_key(&t.pair))
        .filter(|t| t.arm_id != STAR_ARM && !is_isolation_arm(&t.arm_id))
        .filter(|t| arm.is_none_or(|a| t.arm_id == a))
        .collect();
    estimate::mine_shadow_pairs(&trajs, &dataset.task_bundles())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::demo_config;

    fn spec(trials: usize) -> AnalysisConfig {
        AnalysisConfig {
            bootstrap: BootstrapSpec {
                trials,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn star_vs_itself_is_zero() {
        let mut out = demo_config(4, 60, 1).run(Metric::Binary).unwrap();
        // Relabel a copy of the star arm as a library arm.
        let copies: Vec<Trajectory> = out
            .dataset
            .trajectories
            .iter()
            .filter(|t| t.arm_id == STAR_ARM)
            .map(|t| Trajectory {
                arm_id: "full".into(),
                ..t.clone()
            })
            .collect();
        out.dataset.trajectories.retain(|t| t.arm_id == STAR_ARM);
        out.dataset.trajectories.extend(copies);
        let prep = prepare(&out.dataset, 0.04, Metric::Binary).unwrap();
        let rows = effect_rows(&prep, "full", ViewSelection::default(), &spec(50)).unwrap();
        for r in rows {
            let e = r.effects.as_ref().unwrap();
            for v in [
                e.delta.point,
                e.delta_ctx.point,
                e.delta_shd.point,
                e.ctx_sup.point,
                e.shd_sup_loose.point,
            ] {
                assert!(v.abs() < 1e-12, "{r:?}");
            }
        }
    }

    #[test]
    fn residual_interval_is_zero() {
        let out = demo_config(5, 80, 2).run(Metric::Binary).unwrap();
        let prep = prepare(&out.dataset, 0.04, Metric::Binary).unwrap();
        let pooled = ViewSelection {
            pairs: false,
            models: false,
            pooled: true,
        };
        let rows = effect_rows(&prep, "full", pooled, &spec(300)).unwrap();
        let e = rows[0].effects.as_ref().unwrap();
        assert!(e.residual.lo.abs() < 1e-12 && e.residual.hi.abs() < 1e-12);
        assert_eq!(rows[0].n_pairs, 5);
    }

    #[test]
    fn thin_cells_render_empty() {
        let out = demo_config(3, 4, 3).run(Metric::Binary).unwrap();
        let prep = prepare(&out.dataset, 0.04, Metric::Binary).unwrap();
        let rows = effect_rows(&prep, "full", ViewSelection::default(), &spec(20)).unwrap();
        assert!(rows.iter().all(|r| r.effects.is_none() && r.n_pairs == 0));
        let rates = pass_rate_rows(&prep, ViewSelection::default(), &spec(20)).unwrap();
        assert!(rates
            .iter()
            .filter(|r| r.view == ViewKind::Pair)
            .all(|r| r.estimate.is_none()));
    }

    #[test]
    fn unknown_arm_and_no_pairs() {
        let out = demo_config(2, 10, 3).run(Metric::Binary).unwrap();
        let prep = prepare(&out.dataset, 0.04, Metric::Binary).unwrap();
        assert_eq!(
            effect_rows(&prep, "nope", ViewSelection::default(), &spec(10)).unwrap_err(),
            AnalysisError::UnknownArm("nope".into())
        );
        let empty = prepare(&Dataset::new(), 0.04, Metric::Binary).unwrap();
        assert_eq!(
            effect_rows(&empty, "full", ViewSelection::default(), &spec(10)).unwrap_err(),
            AnalysisError::NoIncludedPairs
        );
    }

    #[test]
    fn shares_and_shadowing_agree() {
        let out = demo_config(4, 200, 4).run(Metric::Binary).unwrap();
        let prep = prepare(&out.dataset, 0.04, Metric::Binary).unwrap();
        let sel = ViewSelection {
            pairs: false,
            models: true,
            pooled: true,
        };
        let (shares, warnings) = share_rows(&prep, sel);
        assert!(warnings.is_empty());
        for r in &shares {
            assert!((r.shares.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
        let star = shares
            .iter()
            .find(|r| r.arm == STAR_ARM && r.view == ViewKind::Pooled)
            .unwrap();
        assert_eq!(star.counts.mixed(), 0);
        let sh = shadowing_rows(&prep, sel, 0.95).unwrap();
        assert_eq!(sh.len(), 3);
        let pooled = sh.iter().find(|r| r.view == ViewKind::Pooled).unwrap();
        let full = shares
            .iter()
            .find(|r| r.arm == "full" && r.view == ViewKind::Pooled)
            .unwrap();
        assert_eq!((pooled.mixed, pooled.n), (full.counts.mixed(), full.counts.total()));
    }
}
