//! Event tables, the exact two-effect decomposition of the pass-rate drop,
//! the upper bounds on each effect, shadowing rates and shadow-pair mining.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::classify::{classify_event, ClassifyError};
use crate::model::{
    ArmKind, DecompositionResult, Event, EventTable, FineEvent, Metric, ModelError, OracleSet, PairKey, PerEvent,
    Trajectory, IDENTITY_TOL,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EstimateError {
    #[error("no valid trajectories")]
    NoTrajectories,
    #[error("expected a {expected:?} table, got {got:?}")]
    WrongArm { expected: ArmKind, got: ArmKind },
    #[error("tables use different metrics ({0:?} vs {1:?})")]
    MetricMismatch(Metric, Metric),
    #[error("event {0} has probability mass but no conditional pass rate on either arm")]
    Irrecoverable(Event),
    #[error("decomposition identity violated by {0:e}")]
    IdentityViolation(f64),
    #[error("nothing to aggregate")]
    EmptyAggregate,
    #[error("cannot pool analytic tables (n = 0)")]
    AnalyticPool,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

/// How to fill conditional pass rates of events that never occurred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum ImputePolicy {
    /// `ρ_E := ρ*_E` and vice versa for `E ∈ {N, O}`; `ρ_M := p(full)`.
    /// Events absent on both arms also take `p(full)`.
    #[default]
    Counterpart,
    /// Every absent rate takes the given value.
    Constant(f64),
}

/// One trajectory reduced to what the estimators read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub fine: FineEvent,
    pub outcome: f64,
}

impl Scored {
    pub fn event(&self) -> Event {
        self.fine.coarse()
    }
}

/// Classifies and scores a trajectory under an oracle set.
pub fn score(traj: &Trajectory, oracle: &OracleSet, metric: Metric) -> Result<Scored, EstimateError> {
    let label = classify_event(traj.invoked_set(), oracle)?;
    Ok(Scored {
        fine: label.fine,
        outcome: traj.outcome(metric),
    })
}

/// Event table from already-scored trajectories.
pub fn table_from_scored<'a, I>(arm_kind: ArmKind, metric: Metric, scored: I) -> Result<EventTable, EstimateError>
where
    I: IntoIterator<Item = &'a Scored>,
{
    let mut counts = PerEvent::<usize>::default();
    let mut sums = PerEvent::<f64>::default();
    for s in scored {
        counts[s.event()] += 1;
        sums[s.event()] += s.outcome;
    }
    if counts.n + counts.m + counts.o == 0 {
        return Err(EstimateError::NoTrajectories);
    }
    Ok(EventTable::from_counts(arm_kind, metric, counts, sums)?)
}

/// `π_E = count(E)/n`, `ρ_E` = mean outcome within `E`, over valid
/// trajectories of one (pair, arm).
pub fn event_table(
    trajectories: &[&Trajectory],
    oracle: &OracleSet,
    arm_kind: ArmKind,
    metric: Metric,
) -> Result<EventTable, EstimateError> {
    let scored = trajectories
        .iter()
        .filter(|t| t.valid)
        .map(|t| score(t, oracle, metric))
        .collect::<Result<Vec<_>, _>>()?;
    table_from_scored(arm_kind, metric, &scored)
}

/// Conditional pass rates after imputation.
#[derive(Debug, Clone, Copy)]
struct Resolved {
    star: PerEvent<f64>,
    full: PerEvent<f64>,
    imputed: [bool; 3],
}

fn event_idx(e: Event) -> usize {
    match e {
        Event::N => 0,
        Event::M => 1,
        Event::O => 2,
    }
}

fn check_pair(star: &EventTable, full: &EventTable) -> Result<(), EstimateError> {
    if star.arm_kind != ArmKind::Star {
        return Err(EstimateError::WrongArm {
            expected: ArmKind::Star,
            got: star.arm_kind,
        });
    }
    if full.arm_kind != ArmKind::Full {
        return Err(EstimateError::WrongArm {
            expected: ArmKind::Full,
            got: full.arm_kind,
        });
    }
    if star.metric != full.metric {
        return Err(EstimateError::MetricMismatch(star.metric, full.metric));
    }
    star.check()?;
    full.check()?;
    Ok(())
}

fn resolve(star: &EventTable, full: &EventTable, policy: ImputePolicy) -> Result<Resolved, EstimateError> {
    let p_full = full.pass_rate();
    let mut out = Resolved {
        star: PerEvent::default(),
        full: PerEvent::default(),
        imputed: [false; 3],
    };
    for e in [Event::N, Event::O] {
        let (s, f) = (star.rho[e], full.rho[e]);
        if s.is_none() && f.is_none() && (star.pi[e] > 0.0 || full.pi[e] > 0.0) {
            return Err(EstimateError::Irrecoverable(e));
        }
        let fill = |own: Option<f64>, other: Option<f64>| match (own, policy) {
            (Some(v), _) => v,
            (None, ImputePolicy::Constant(c)) => c,
            (None, ImputePolicy::Counterpart) => other.unwrap_or(p_full),
        };
        out.star[e] = fill(s, f);
        out.full[e] = fill(f, s);
        out.imputed[event_idx(e)] = s.is_none() || f.is_none();
    }
    if full.rho.m.is_none() && full.pi.m > 0.0 {
        return Err(EstimateError::Irrecoverable(Event::M));
    }
    out.full.m = match (full.rho.m, policy) {
        (Some(v), _) => v,
        (None, ImputePolicy::Constant(c)) => c,
        (None, ImputePolicy::Counterpart) => p_full,
    };
    out.imputed[1] = full.rho.m.is_none();
    Ok(out)
}

fn imputed_set(r: &Resolved) -> BTreeSet<Event> {
    Event::ALL.into_iter().filter(|e| r.imputed[event_idx(*e)]).collect()
}

/// Upper bounds on the two effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// `max(ρ*_N − ρ_N, ρ*_O − ρ_O)`.
    pub ctx_sup: f64,
    /// `(|π*_N − π_N| + |π*_O − π_O|) · max(|ρ_N − ρ_M|, |ρ_O − ρ_M|)`.
    pub shd_sup_tight: f64,
    /// `|π*_N − π_N| + |π*_O − π_O|`.
    pub shd_sup_loose: f64,
}

fn bounds_resolved(star: &EventTable, full: &EventTable, r: &Resolved) -> Bounds {
    let ctx_sup = (r.star.n - r.full.n).max(r.star.o - r.full.o);
    let shift = (star.pi.n - full.pi.n).abs() + (star.pi.o - full.pi.o).abs();
    let stakes = (r.full.n - r.full.m).abs().max((r.full.o - r.full.m).abs());
    Bounds {
        ctx_sup,
        shd_sup_tight: shift * stakes,
        shd_sup_loose: shift,
    }
}

/// Both bound forms, with the same imputation as [`decompose`].
pub fn bounds(star: &EventTable, full: &EventTable, policy: ImputePolicy) -> Result<Bounds, EstimateError> {
    check_pair(star, full)?;
    let r = resolve(star, full, policy)?;
    Ok(bounds_resolved(star, full, &r))
}

/// Events `E ∈ {N, O}` with `ρ*_E < ρ_E`, ignoring imputed cells.
pub fn check_assumption(star: &EventTable, full: &EventTable) -> BTreeSet<Event> {
    [Event::N, Event::O]
        .into_iter()
        .filter(|&e| matches!((star.rho[e], full.rho[e]), (Some(s), Some(f)) if s < f))
        .collect()
}

/// Splits `Δ = p(S*) − p(S)` into context overhead and skill shadowing.
///
/// `Δ` is taken directly from the two pass rates, `Δ_ctx` holds event
/// probabilities at their star values, and `Δ_shd` holds conditional rates at
/// their full-library values. The sum and the simplified form of `Δ_shd` are
/// both checked to `1e-12`.
pub fn decompose(
    star: &EventTable,
    full: &EventTable,
    policy: ImputePolicy,
) -> Result<DecompositionResult, EstimateError> {
    check_pair(star, full)?;
    let r = resolve(star, full, policy)?;
    let (ps, pf) = (&star.pi, &full.pi);

    let delta = star.pass_rate() - full.pass_rate();
    let delta_ctx = ps.n * (r.star.n - r.full.n) + ps.o * (r.star.o - r.full.o);
    let delta_shd = (ps.n - pf.n) * r.full.n + (ps.o - pf.o) * r.full.o - pf.m * r.full.m;
    let simplified = (ps.n - pf.n) * (r.full.n - r.full.m) + (ps.o - pf.o) * (r.full.o - r.full.m);

    let residual = (delta_ctx + delta_shd - delta)
        .abs()
        .max((delta_shd - simplified).abs());
    if residual > IDENTITY_TOL {
        return Err(EstimateError::IdentityViolation(residual));
    }
    let b = bounds_resolved(star, full, &r);
    Ok(DecompositionResult {
        delta,
        delta_ctx,
        delta_shd,
        ctx_sup: b.ctx_sup,
        shd_sup_tight: b.shd_sup_tight,
        shd_sup_loose: b.shd_sup_loose,
        imputed_events: imputed_set(&r),
        assumption_violations: check_assumption(star, full),
    })
}

/// Fraction of trajectories that invoke at least one distractor (`π_M`).
pub fn shadowing_rate(trajectories: &[&Trajectory], oracle: &OracleSet) -> Result<f64, EstimateError> {
    let (k, n) = shadowing_counts(trajectories, oracle)?;
    if n == 0 {
        return Err(EstimateError::NoTrajectories);
    }
    Ok(k as f64 / n as f64)
}

/// `(mixed, total)` counts behind [`shadowing_rate`].
pub fn shadowing_counts(trajectories: &[&Trajectory], oracle: &OracleSet) -> Result<(u64, u64), EstimateError> {
    let mut k = 0;
    for t in trajectories {
        if classify_event(t.invoked_set(), oracle)?.coarse == Event::M {
            k += 1;
        }
    }
    Ok((k, trajectories.len() as u64))
}

/// Counts per fine event, in [`FineEvent::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineCounts(pub [u64; 4]);

impl FineCounts {
    pub fn add(&mut self, fine: FineEvent) {
        self.0[FineEvent::ALL.iter().position(|f| *f == fine).unwrap()] += 1;
    }

    pub fn merge(&mut self, other: &FineCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }

    pub fn get(&self, fine: FineEvent) -> u64 {
        self.0[FineEvent::ALL.iter().position(|f| *f == fine).unwrap()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn mixed(&self) -> u64 {
        self.get(FineEvent::MixedOracleInvoked) + self.get(FineEvent::MixedOracleNotInvoked)
    }

    /// Shares in percent; all zeros when empty.
    pub fn percentages(&self) -> [f64; 4] {
        let n = self.total();
        self.0.map(|c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
    }
}

pub fn fine_counts(trajectories: &[&Trajectory], oracle: &OracleSet) -> Result<FineCounts, EstimateError> {
    let mut out = FineCounts::default();
    for t in trajectories {
        out.add(classify_event(t.invoked_set(), oracle)?.fine);
    }
    Ok(out)
}

/// A (task, distractor) pair ranked by how often the distractor was the
/// agent's first pick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowPair {
    pub task_id: String,
    pub oracle_bundle: Vec<String>,
    pub distractor: String,
    pub first_pick_count: u64,
}

/// Counts trajectories whose first invocation is outside the task's oracle
/// bundle. Sorted by count, then `(task_id, distractor)`.
pub fn mine_shadow_pairs(trajectories: &[&Trajectory], bundles: &BTreeMap<String, Vec<String>>) -> Vec<ShadowPair> {
    let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for t in trajectories {
        let (Some(first), Some(bundle)) = (t.first_pick(), bundles.get(&t.pair.task_id)) else {
            continue;
        };
        if !bundle.iter().any(|b| b == first) {
            *counts.entry((t.pair.task_id.as_str(), first)).or_default() += 1;
        }
    }
    let mut out: Vec<ShadowPair> = counts
        .into_iter()
        .map(|((task, distractor), n)| ShadowPair {
            task_id: task.to_string(),
            oracle_bundle: bundles[task].clone(),
            distractor: distractor.to_string(),
            first_pick_count: n,
        })
        .collect();
    // Stable sort keeps the lexicographic order among equal counts.
    out.sort_by_key(|p| std::cmp::Reverse(p.first_pick_count));
    out
}

/// Per-pair carrier of decomposition inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub pair: PairKey,
    pub arm_id: String,
    pub star_table: EventTable,
    pub full_table: EventTable,
    pub result: DecompositionResult,
}

impl PairEstimate {
    pub fn new(
        pair: PairKey,
        arm_id: impl Into<String>,
        star_table: EventTable,
        full_table: EventTable,
        policy: ImputePolicy,
    ) -> Result<Self, EstimateError> {
        let result = decompose(&star_table, &full_table, policy)?;
        Ok(PairEstimate {
            pair,
            arm_id: arm_id.into(),
            star_table,
            full_table,
            result,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Unweighted mean of per-pair scalars.
    #[default]
    PairMean,
    /// Pool event counts across pairs, then take ratios.
    TrajectoryWeighted,
}

/// Sums counts and outcome totals of empirical tables.
pub fn pool_tables<'a, I>(tables: I) -> Result<EventTable, EstimateError>
where
    I: IntoIterator<Item = &'a EventTable>,
{
    let mut counts = PerEvent::<usize>::default();
    let mut sums = PerEvent::<f64>::default();
    let mut kind_metric = None;
    for t in tables {
        if t.n == 0 {
            return Err(EstimateError::AnalyticPool);
        }
        let c = t.counts();
        for e in Event::ALL {
            counts[e] += c[e];
            sums[e] += t.rho[e].unwrap_or(0.0) * c[e] as f64;
        }
        kind_metric.get_or_insert((t.arm_kind, t.metric));
    }
    let (kind, metric) = kind_metric.ok_or(EstimateError::EmptyAggregate)?;
    Ok(EventTable::from_counts(kind, metric, counts, sums)?)
}

/// Combines per-pair estimates into one pooled result.
pub fn aggregate(
    estimates: &[PairEstimate],
    mode: Aggregation,
    policy: ImputePolicy,
) -> Result<DecompositionResult, EstimateError> {
    if estimates.is_empty() {
        return Err(EstimateError::EmptyAggregate);
    }
    match mode {
        Aggregation::PairMean => Ok(pair_mean(estimates.iter().map(|e| &e.result))),
        Aggregation::TrajectoryWeighted => {
            let star = pool_tables(estimates.iter().map(|e| &e.star_table))?;
            let full = pool_tables(estimates.iter().map(|e| &e.full_table))?;
            decompose(&star, &full, policy)
        }
    }
}

/// Unweighted mean of each scalar; flag sets are unioned.
pub fn pair_mean<'a, I>(results: I) -> DecompositionResult
where
    I: IntoIterator<Item = &'a DecompositionResult>,
{
    let mut acc = DecompositionResult {
        delta: 0.0,
        delta_ctx: 0.0,
        delta_shd: 0.0,
        ctx_sup: 0.0,
        shd_sup_tight: 0.0,
        shd_sup_loose: 0.0,
        imputed_events: BTreeSet::new(),
        assumption_violations: BTreeSet::new(),
    };
    let mut k = 0usize;
    for r in results {
        acc.delta += r.delta;
        acc.delta_ctx += r.delta_ctx;
        acc.delta_shd += r.delta_shd;
        acc.ctx_sup += r.ctx_sup;
        acc.shd_sup_tight += r.shd_sup_tight;
        acc.shd_sup_loose += r.shd_sup_loose;
        acc.imputed_events.extend(&r.imputed_events);
        acc.assumption_violations.extend(&r.assumption_violations);
        k += 1;
    }
    let k = k.max(1) as f64;
    for v in [
        &mut acc.delta,
        &mut acc.delta_ctx,
        &mut acc.delta_shd,
        &mut acc.ctx_sup,
        &mut acc.shd_sup_tight,
        &mut acc.shd_sup_loose,
    ] {
        *v /= k;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PairKey;

    fn star(pn: f64, po: f64, rn: Option<f64>, ro: Option<f64>) -> EventTable {
        EventTable::from_probabilities(
            ArmKind::Star,
            Metric::Binary,
            PerEvent::new(pn, 0.0, po),
            PerEvent::new(rn, None, ro),
        )
        .unwrap()
    }

    fn full(pi: (f64, f64, f64), rho: (Option<f64>, Option<f64>, Option<f64>)) -> EventTable {
        EventTable::from_probabilities(
            ArmKind::Full,
            Metric::Binary,
            PerEvent::new(pi.0, pi.1, pi.2),
            PerEvent::new(rho.0, rho.1, rho.2),
        )
        .unwrap()
    }

    /// Counterfactual pass rate `Σ π_E ρ_E` with probabilities and rates
    /// taken from possibly different arms. This is the independent route:
    /// `Δ_ctx = p(π*, ρ*) − p(π*, ρ)` and `Δ_shd = p(π*, ρ) − p(π, ρ)`.
    fn counterfactual(pi: [f64; 3], rho: [f64; 3]) -> f64 {
        pi.iter().zip(rho).map(|(p, r)| p * r).sum()
    }

    fn oracle_route(s: ([f64; 3], [f64; 3]), f: ([f64; 3], [f64; 3])) -> (f64, f64, f64) {
        let p_star = counterfactual(s.0, s.1);
        let p_mix = counterfactual(s.0, f.1);
        let p_full = counterfactual(f.0, f.1);
        (p_star - p_mix, p_mix - p_full, p_star - p_full)
    }

    #[test]
    fn worked_example_pure_shadowing() {
        let s = star(0.2, 0.8, Some(0.5), Some(0.9));
        let f = full((0.4, 0.2, 0.4), (Some(0.5), Some(0.3), Some(0.9)));
        let (ctx, shd, d) = oracle_route(([0.2, 0.0, 0.8], [0.5, 0.0, 0.9]), ([0.4, 0.2, 0.4], [0.5, 0.3, 0.9]));
        let r = decompose(&s, &f, ImputePolicy::default()).unwrap();
        assert!((r.delta_ctx - ctx).abs() < 1e-12 && ctx.abs() < 1e-12);
        assert!((r.delta_shd - shd).abs() < 1e-12 && (shd - 0.20).abs() < 1e-12);
        assert!((r.delta - d).abs() < 1e-12 && (d - 0.20).abs() < 1e-12);
        assert!(r.imputed_events.is_empty());

        assert!((r.shd_sup_loose - 0.6).abs() < 1e-12);
        assert!((r.shd_sup_tight - 0.36).abs() < 1e-12);
        assert!(r.shd_sup_tight >= r.delta_shd.abs());
    }

    #[test]
    fn worked_example_with_context_loss() {
        let s = star(0.2, 0.8, Some(0.5), Some(0.9));
        let f = full((0.4, 0.2, 0.4), (Some(0.5), Some(0.3), Some(0.8)));
        let (ctx, shd, d) = oracle_route(([0.2, 0.0, 0.8], [0.5, 0.0, 0.9]), ([0.4, 0.2, 0.4], [0.5, 0.3, 0.8]));
        assert!((ctx - 0.08).abs() < 1e-12 && (shd - 0.16).abs() < 1e-12 && (d - 0.24).abs() < 1e-12);
        let r = decompose(&s, &f, ImputePolicy::default()).unwrap();
        assert!((r.delta_ctx - ctx).abs() < 1e-12);
        assert!((r.delta_shd - shd).abs() < 1e-12);
        assert!((r.delta - d).abs() < 1e-12);
        assert!((r.ctx_sup - 0.1).abs() < 1e-12);
    }

    #[test]
    fn identical_arms_give_zero() {
        let s = star(0.3, 0.7, Some(0.4), Some(0.8));
        let f = full((0.3, 0.0, 0.7), (Some(0.4), None, Some(0.8)));
        let r = decompose(&s, &f, ImputePolicy::default()).unwrap();
        for v in [
            r.delta,
            r.delta_ctx,
            r.delta_shd,
            r.ctx_sup,
            r.shd_sup_tight,
            r.shd_sup_loose,
        ] {
            assert!(v.abs() < 1e-15, "{v}");
        }
        assert_eq!(r.imputed_events, BTreeSet::from([Event::M]));
    }

    #[test]
    fn assumption_check() {
        let s = star(0.5, 0.5, Some(0.4), Some(0.9));
        let f = full((0.5, 0.0, 0.5), (Some(0.5), None, Some(0.8)));
        assert_eq!(check_assumption(&s, &f), BTreeSet::from([Event::N]));
        let r = decompose(&s, &f, ImputePolicy::default()).unwrap();
        assert_eq!(r.assumption_violations, BTreeSet::from([Event::N]));
    }

    #[test]
    fn imputed_cells_are_not_flagged() {
        let s = star(0.0, 1.0, None, Some(0.6));
        let f = full((0.5, 0.0, 0.5), (Some(0.7), None, Some(0.5)));
        assert!(check_assumption(&s, &f).is_empty());
        let r = decompose(&s, &f, ImputePolicy::default()).unwrap();
        assert!(r.imputed_events.contains(&Event::N));
    }

    #[test]
    fn imputation_does_not_move_delta() {
        let s = star(0.3, 0.7, Some(0.2), Some(0.8));
        let f = full((0.0, 0.4, 0.6), (None, Some(0.1), Some(0.7)));
        let a = decompose(&s, &f, ImputePolicy::Counterpart).unwrap();
        let b = decompose(&s, &f, ImputePolicy::Constant(0.95)).unwrap();
        assert_eq!(a.delta.to_bits(), b.delta.to_bits());
        assert!((a.delta_ctx + a.delta_shd - b.delta_ctx - b.delta_shd).abs() < 1e-12);
        // Counterpart imputation zeroes the N term of Δ_ctx.
        assert!((a.delta_ctx - 0.7 * 0.1).abs() < 1e-12);
    }

    #[test]
    fn irrecoverable_cell() {
        let s = star(0.5, 0.5, None, Some(0.8));
        let f = full((0.5, 0.0, 0.5), (None, None, Some(0.8)));
        assert_eq!(
            decompose(&s, &f, ImputePolicy::default()),
            Err(EstimateError::Irrecoverable(Event::N))
        );
    }

    #[test]
    fn wrong_arm_kinds_and_metrics() {
        let s = star(0.5, 0.5, Some(0.5), Some(0.8));
        assert!(matches!(
            decompose(&s, &s, ImputePolicy::default()),
            Err(EstimateError::WrongArm { .. })
        ));
        let mut f = full((0.5, 0.0, 0.5), (Some(0.5), None, Some(0.8)));
        f.metric = Metric::Fractional;
        assert!(matches!(
            decompose(&s, &f, ImputePolicy::default()),
            Err(EstimateError::MetricMismatch(..))
        ));
    }

    fn traj(invocations: &[&str], pass: bool) -> Trajectory {
        Trajectory {
            pair: PairKey::new("mario-coin-counting", "m").unwrap(),
            arm_id: "lib-202".into(),
            invocations: invocations.iter().map(|s| s.to_string()).collect(),
            subtask_passes: vec![pass],
            valid: true,
            seed: None,
        }
    }

    fn mario_oracle() -> OracleSet {
        OracleSet::from_bundle(
            PairKey::new("mario-coin-counting", "m").unwrap(),
            ["ffmpeg", "image_editing", "object_counter"],
            0.04,
        )
    }

    #[test]
    fn event_table_counts() {
        let ts: Vec<Trajectory> = (0..10).map(|i| traj(&["ffmpeg"], i % 2 == 0)).collect();
        let refs: Vec<&Trajectory> = ts.iter().collect();
        let t = event_table(&refs, &mario_oracle(), ArmKind::Full, Metric::Binary).unwrap();
        assert_eq!((t.pi.n, t.pi.m, t.pi.o), (0.0, 0.0, 1.0));
        assert_eq!(t.rho.o, Some(0.5));
        assert_eq!(t.rho.n, None);
        assert_eq!(
            event_table(&[], &mario_oracle(), ArmKind::Full, Metric::Binary),
            Err(EstimateError::NoTrajectories)
        );
    }

    #[test]
    fn invalid_rows_are_skipped() {
        let mut ts: Vec<Trajectory> = (0..4).map(|_| traj(&[], true)).collect();
        ts[0].valid = false;
        ts[0].invocations = vec!["video-frame-extraction".into()];
        let refs: Vec<&Trajectory> = ts.iter().collect();
        let t = event_table(&refs, &mario_oracle(), ArmKind::Full, Metric::Binary).unwrap();
        assert_eq!((t.n, t.pi.n), (3, 1.0));
    }

    #[test]
    fn shadowing_rate_cases() {
        let o = mario_oracle();
        let star_arm: Vec<Trajectory> = vec![traj(&["ffmpeg"], true), traj(&[], false)];
        let refs: Vec<&Trajectory> = star_arm.iter().collect();
        assert_eq!(shadowing_rate(&refs, &o).unwrap(), 0.0);
        let mixed: Vec<Trajectory> = vec![traj(&["video-frame-extraction"], true), traj(&["ffmpeg", "x"], false)];
        let refs: Vec<&Trajectory> = mixed.iter().collect();
        assert_eq!(shadowing_rate(&refs, &o).unwrap(), 1.0);
    }

    #[test]
    fn shadow_pair_first_pick_rule() {
        let bundles = BTreeMap::from([(
            "mario-coin-counting".to_string(),
            vec!["ffmpeg".to_string(), "image_editing".into(), "object_counter".into()],
        )]);
        let mut ts: Vec<Trajectory> = (0..51).map(|_| traj(&["video-frame-extraction"], false)).collect();
        ts.push(traj(&["ffmpeg", "video-frame-extraction"], false));
        ts.push(traj(&["image_editing"], true));
        ts.push(traj(&[], true));
        ts.extend((0..2).map(|_| traj(&["aaa"], false)));
        ts.extend((0..2).map(|_| traj(&["zzz"], false)));
        let refs: Vec<&Trajectory> = ts.iter().collect();
        let pairs = mine_shadow_pairs(&refs, &bundles);
        assert_eq!(pairs[0].distractor, "video-frame-extraction");
        assert_eq!(pairs[0].first_pick_count, 51);
        assert_eq!(pairs.len(), 3);
        assert_eq!(
            (pairs[1].distractor.as_str(), pairs[2].distractor.as_str()),
            ("aaa", "zzz")
        );

        let clean: Vec<&Trajectory> = refs[51..54].to_vec();
        assert!(mine_shadow_pairs(&clean, &bundles).is_empty());
    }

    fn estimate_with_delta(delta_o: f64) -> PairEstimate {
        let s = EventTable::from_counts(
            ArmKind::Star,
            Metric::Binary,
            PerEvent::new(0, 0, 10),
            PerEvent::new(0.0, 0.0, 10.0),
        )
        .unwrap();
        let f = EventTable::from_counts(
            ArmKind::Full,
            Metric::Binary,
            PerEvent::new(0, 0, 10),
            PerEvent::new(0.0, 0.0, 10.0 * (1.0 - delta_o)),
        )
        .unwrap();
        PairEstimate::new(PairKey::new("t", "m").unwrap(), "lib", s, f, ImputePolicy::default()).unwrap()
    }

    #[test]
    fn aggregate_modes() {
        let ests = [estimate_with_delta(0.1), estimate_with_delta(0.3)];
        let mean = aggregate(&ests, Aggregation::PairMean, ImputePolicy::default()).unwrap();
        assert!((mean.delta - 0.2).abs() < 1e-12);
        let one = &ests[..1];
        let a = aggregate(one, Aggregation::PairMean, ImputePolicy::default()).unwrap();
        let b = aggregate(one, Aggregation::TrajectoryWeighted, ImputePolicy::default()).unwrap();
        assert!((a.delta - b.delta).abs() < 1e-12 && (a.delta_ctx - b.delta_ctx).abs() < 1e-12);
        assert_eq!(
            aggregate(&[], Aggregation::PairMean, ImputePolicy::default()),
            Err(EstimateError::EmptyAggregate)
        );
    }

    #[test]
    fn pooled_shares_of_star_row() {
        // 486 oracle-only and 66 no-skill trajectories over n = 552.
        let c = FineCounts([486, 0, 0, 66]);
        let pct = c.percentages();
        let rounded: Vec<f64> = pct.iter().map(|p| (p * 10.0).round() / 10.0).collect();
        assert_eq!(rounded, vec![88.0, 0.0, 0.0, 12.0]);
        assert_eq!(c.total(), 552);
    }
}
