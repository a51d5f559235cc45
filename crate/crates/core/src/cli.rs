//! Command-line front end. Every flag can also come from an environment
//! variable prefixed `SKILLSHADOW_` (for example `SKILLSHADOW_TRIALS`);
//! flags win over the environment.
//!
//! Exit codes: 0 success, 1 domain or validation failure, 2 I/O failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    self, effect_rows, pass_rate_rows, prepare, shadowing_rows, share_rows, AnalysisConfig, AnalysisError, EffectRow,
    Prepared, ViewKind, ViewSelection,
};
use crate::estimate::{Aggregation, ImputePolicy};
use crate::fixture;
use crate::ingest::{validate, Dataset, IngestError, IngestReport};
use crate::model::{Event, FineEvent, Metric, IDENTITY_TOL};
use crate::report::{render_all, Cell, Format, Table};
use crate::sim::{self, SimConfig, SimError};
use crate::stats::{BootstrapSpec, Stages};

#[derive(Debug, Parser)]
#[command(
    name = "skillshadow",
    version,
    about = "Split skill-library pass-rate drops into context overhead and skill shadowing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load inputs and report schema errors and warnings.
    Validate(ValidateArgs),
    /// Context-overhead / shadowing decomposition with joint intervals.
    Decompose(AnalysisArgs),
    /// Upper bounds on both effects.
    Bounds(AnalysisArgs),
    /// Four-way invocation shares per arm.
    Shares(AnalysisArgs),
    /// Shadowing rate per library arm.
    Shadowing(AnalysisArgs),
    /// Pass rates per invocation event and arm.
    PassRates(AnalysisArgs),
    /// Tasks whose agent most often picks a distractor first.
    ShadowPairs(AnalysisArgs),
    /// Generate synthetic logs with known effects.
    Simulate(SimulateArgs),
    /// Write the bundled benchmark fixture.
    Fixture(FixtureArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Trajectory logs (JSONL).
    #[arg(long, env = "SKILLSHADOW_LOGS", value_delimiter = ',', num_args = 1.., required = true)]
    pub logs: Vec<PathBuf>,
    /// Library manifests, one per library arm.
    #[arg(long, env = "SKILLSHADOW_MANIFESTS", value_delimiter = ',', num_args = 1..)]
    pub manifests: Vec<PathBuf>,
    /// Oracle bundle file.
    #[arg(long, env = "SKILLSHADOW_BUNDLES")]
    pub bundles: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, env = "SKILLSHADOW_FORMAT", value_enum, default_value_t = Format::Markdown)]
    pub format: Format,
    /// Directory for `<command>.<ext>`; stdout when absent.
    #[arg(long, env = "SKILLSHADOW_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Binary,
    Fractional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggArg {
    PairMean,
    TrajWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundForm {
    Tight,
    Loose,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ViewArg {
    Pair,
    Model,
    Pooled,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Binary => Metric::Binary,
            MetricArg::Fractional => Metric::Fractional,
        }
    }
}

fn parse_impute(s: &str) -> Result<ImputePolicy, String> {
    if s == "counterpart" {
        return Ok(ImputePolicy::Counterpart);
    }
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(ImputePolicy::Constant(v)),
        _ => Err(format!("expected `counterpart` or a rate in [0, 1], got `{s}`")),
    }
}

fn parse_stages(s: &str) -> Result<Stages, String> {
    match s {
        "1" | "one" => Ok(Stages::One),
        "2" | "two" => Ok(Stages::Two),
        _ => Err(format!("expected 1 or 2, got `{s}`")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Isolation uplift threshold for oracle membership.
    #[arg(long, env = "SKILLSHADOW_TAU", default_value_t = 0.04)]
    pub tau: f64,
    #[arg(long, env = "SKILLSHADOW_METRIC", value_enum, default_value_t = MetricArg::Binary)]
    pub metric: MetricArg,
    #[arg(long, env = "SKILLSHADOW_AGG", value_enum, default_value_t = AggArg::PairMean)]
    pub agg: AggArg,
    #[arg(long = "bound-form", env = "SKILLSHADOW_BOUND_FORM", value_enum, default_value_t = BoundForm::Tight)]
    pub bound_form: BoundForm,
    #[arg(long, env = "SKILLSHADOW_TRIALS", default_value_t = 2000)]
    pub trials: usize,
    #[arg(long, env = "SKILLSHADOW_SEED", default_value_t = 42)]
    pub seed: u64,
    #[arg(long, env = "SKILLSHADOW_LEVEL", default_value_t = 0.95)]
    pub level: f64,
    /// Bootstrap stages for pooled estimands: 1 (pairs only) or 2.
    #[arg(long, env = "SKILLSHADOW_STAGES", value_parser = parse_stages, default_value = "2")]
    pub stages: Stages,
    /// Cells with fewer valid trajectories render as `---`.
    #[arg(long = "min-cell-n", env = "SKILLSHADOW_MIN_CELL_N", default_value_t = 5)]
    pub min_cell_n: usize,
    /// Rates for events absent from a cell: `counterpart` or a constant.
    #[arg(long, env = "SKILLSHADOW_IMPUTE", value_parser = parse_impute, default_value = "counterpart")]
    pub impute: ImputePolicy,
    /// Library arms to report; all by default.
    #[arg(long, env = "SKILLSHADOW_ARM", value_delimiter = ',')]
    pub arm: Vec<String>,
    #[arg(long, env = "SKILLSHADOW_VIEWS", value_enum, value_delimiter = ',', default_values_t = [ViewArg::Pair, ViewArg::Model, ViewArg::Pooled])]
    pub views: Vec<ViewArg>,
    /// Run bootstrap trials on one thread. Output is identical.
    #[arg(long, env = "SKILLSHADOW_SEQUENTIAL")]
    pub sequential: bool,
}

impl AnalysisArgs {
    pub fn config(&self) -> AnalysisConfig {
        AnalysisConfig {
            tau: self.tau,
            metric: self.metric.into(),
            aggregation: match self.agg {
                AggArg::PairMean => Aggregation::PairMean,
                AggArg::TrajWeighted => Aggregation::TrajectoryWeighted,
            },
            impute: self.impute,
            bootstrap: BootstrapSpec {
                trials: self.trials,
                seed: self.seed,
                level: self.level,
                stages: self.stages,
                parallel: !self.sequential,
            },
            min_cell_n: self.min_cell_n,
        }
    }

    fn selection(&self) -> ViewSelection {
        ViewSelection {
            pairs: self.views.contains(&ViewArg::Pair),
            models: self.views.contains(&ViewArg::Model),
            pooled: self.views.contains(&ViewArg::Pooled),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Simulation config (JSON).
    #[arg(long, env = "SKILLSHADOW_SIM_CONFIG")]
    pub config: PathBuf,
    #[arg(long, env = "SKILLSHADOW_OUT")]
    pub out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long, env = "SKILLSHADOW_SEED")]
    pub seed: Option<u64>,
    /// Metric the truth sidecar is computed for.
    #[arg(long, env = "SKILLSHADOW_METRIC", value_enum, default_value_t = MetricArg::Binary)]
    pub metric: MetricArg,
}

#[derive(Debug, Clone, Args)]
pub struct FixtureArgs {
    #[arg(long, env = "SKILLSHADOW_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Domain(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Loads manifests, bundles and logs in that order.
pub fn load(data: &DataArgs) -> Result<(Dataset, IngestReport), CliError> {
    let mut ds = Dataset::new();
    let mut report = IngestReport::default();
    for m in &data.manifests {
        report.merge(ds.load_library(m)?);
    }
    ds.load_bundles(&data.bundles)?;
    report.merge(ds.load_trajectory_files(&data.logs)?);
    Ok((ds, report))
}

/// Runs one parsed command, writing tables to `out` (or files) and
/// diagnostics to `err`. Returns the process exit code.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a, out),
        Command::Decompose(a) => emit(a, "decompose", out, err, cmd_decompose),
        Command::Bounds(a) => emit(a, "bounds", out, err, cmd_bounds),
        Command::Shares(a) => emit(a, "shares", out, err, cmd_shares),
        Command::Shadowing(a) => emit(a, "shadowing", out, err, cmd_shadowing),
        Command::PassRates(a) => emit(a, "pass-rates", out, err, cmd_pass_rates),
        Command::ShadowPairs(a) => emit(a, "shadow-pairs", out, err, cmd_shadow_pairs),
        Command::Simulate(a) => cmd_simulate(a, err),
        Command::Fixture(a) => {
            let written = fixture::write_fixture(&fixture::make_fixture(Default::default()), &a.out)?;
            for p in written {
                let _ = writeln!(err, "wrote {}", p.display());
            }
            Ok(0)
        }
    }
}

fn write_output(
    output: &OutputArgs,
    name: &str,
    text: &str,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    match &output.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let path = dir.join(format!("{name}.{}", output.format.extension()));
            std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
            let _ = writeln!(err, "wrote {}", path.display());
        }
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string()))?,
    }
    Ok(())
}

type TableBuilder = fn(&AnalysisArgs, &Dataset, &Prepared) -> Result<(Vec<Table>, Vec<String>), CliError>;

fn emit(
    a: &AnalysisArgs,
    name: &str,
    out: &mut dyn Write,
    err: &mut dyn Write,
    build: TableBuilder,
) -> Result<i32, CliError> {
    let (ds, report) = load(&a.data)?;
    if !report.errors.is_empty() {
        let _ = writeln!(
            err,
            "warning: skipped {} input rows with errors; run `validate` for details",
            report.errors.len()
        );
    }
    let cfg = a.config();
    let prepared = prepare(&ds, cfg.tau, cfg.metric)?;
    if prepared.oracles.is_empty() {
        return Err(AnalysisError::NoIncludedPairs.into());
    }
    let (mut tables, warnings) = build(a, &ds, &prepared)?;
    for w in &warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    if let Some(t) = tables.first_mut() {
        t.notes.extend(provenance_notes(&prepared));
    }
    write_output(&a.output, name, &render_all(&tables, a.output.format), out, err)?;
    Ok(0)
}

fn provenance_notes(p: &Prepared) -> Vec<String> {
    let mut notes = vec![if p.filter_applied {
        format!(
            "{} pairs included by isolation uplift, {} excluded",
            p.oracles.len(),
            p.excluded.len()
        )
    } else {
        format!(
            "{} pairs; no isolation runs, authored bundles used as oracle sets",
            p.oracles.len()
        )
    }];
    for (pair, reason) in &p.excluded {
        notes.push(format!("excluded {pair}: {}", exclusion_text(reason)));
    }
    notes
}

fn exclusion_text(r: &crate::classify::ExclusionReason) -> String {
    use crate::classify::ExclusionReason::*;
    match r {
        BelowThreshold { skill, uplift } => format!("`{skill}` uplift {uplift:.3} below threshold"),
        MissingIsolation { what } => format!("missing isolation runs for {what}"),
        EmptyBundle => "empty bundle".to_string(),
    }
}

fn view_name(k: ViewKind) -> &'static str {
    match k {
        ViewKind::Pair => "pair",
        ViewKind::Model => "model",
        ViewKind::Pooled => "pooled",
    }
}

fn arms(a: &AnalysisArgs, p: &Prepared) -> Vec<String> {
    if a.arm.is_empty() {
        p.full_arms().map(str::to_string).collect()
    } else {
        a.arm.clone()
    }
}

fn events_text(s: &std::collections::BTreeSet<Event>) -> String {
    s.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")
}

fn run_effects(a: &AnalysisArgs, p: &Prepared) -> Result<Vec<EffectRow>, CliError> {
    let cfg = a.config();
    let mut rows = Vec::new();
    for arm in arms(a, p) {
        rows.extend(effect_rows(p, &arm, a.selection(), &cfg)?);
    }
    for r in &rows {
        if let Some(e) = &r.effects {
            if e.residual.point.abs() > IDENTITY_TOL {
                return Err(CliError::Domain(format!(
                    "identity residual {:e} for {} on {}",
                    e.residual.point, r.key, r.arm
                )));
            }
        }
    }
    Ok(rows)
}

fn config_note(a: &AnalysisArgs) -> String {
    let c = a.config();
    let metric = a.metric.to_possible_value().expect("not skipped");
    let agg = a.agg.to_possible_value().expect("not skipped");
    format!(
        "metric {}, aggregation {}, {} trials, seed {}, level {}, min cell n {}",
        metric.get_name(),
        agg.get_name(),
        c.bootstrap.trials,
        c.bootstrap.seed,
        c.bootstrap.level,
        c.min_cell_n
    )
}

pub fn cmd_decompose(a: &AnalysisArgs, _ds: &Dataset, p: &Prepared) -> Result<(Vec<Table>, Vec<String>), CliError> {
    let rows = run_effects(a, p)?;
    let mut t = Table::new(
        "Decomposition of the pass-rate drop",
        [
            "view",
            "key",
            "arm",
            "n_pairs",
            "n_star",
            "n_full",
            "delta_ctx",
            "delta_shd",
            "delta",
            "residual",
            "imputed",
            "assumption_violations",
        ],
    );
    t.bold_nonzero = true;
    for r in rows {
        let (ctx, shd, delta, res, imp, viol) = match r.effects {
            Some(e) => (
                Cell::Interval(e.delta_ctx),
                Cell::Interval(e.delta_shd),
                Cell::Interval(e.delta),
                Cell::Sci(e.residual.point),
                Cell::Text(events_text(&e.imputed_events)),
                Cell::Text(events_text(&e.assumption_violations)),
            ),
            None => (
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
            ),
        };
        t.push(vec![
            view_name(r.view).into(),
            r.key.into(),
            r.arm.into(),
            r.n_pairs.into(),
            r.n_star.into(),
            r.n_full.into(),
            ctx,
            shd,
            delta,
            res,
            imp,
            viol,
        ]);
    }
    t.notes.push(config_note(a));
    Ok((vec![t], Vec::new()))
}

pub fn cmd_bounds(a: &AnalysisArgs, _ds: &Dataset, p: &Prepared) -> Result<(Vec<Table>, Vec<String>), CliError> {
    let rows = run_effects(a, p)?;
    let mut cols = vec!["view", "key", "arm", "n_pairs", "ctx_sup"];
    let (tight, loose) = match a.bound_form {
        BoundForm::Tight => (true, false),
        BoundForm::Loose => (false, true),
        BoundForm::Both => (true, true),
    };
    if tight {
        cols.push("shd_sup_tight");
    }
    if loose {
        cols.push("shd_sup_loose");
    }
    let mut t = Table::new("Upper bounds on context overhead and skill shadowing", cols);
    t.bold_nonzero = true;
    for r in rows {
        let mut row: Vec<Cell> = vec![view_name(r.view).into(), r.key.into(), r.arm.into(), r.n_pairs.into()];
        let e = r.effects;
        row.push(e.as_ref().map(|e| e.ctx_sup.clone()).into());
        if tight {
            row.push(e.as_ref().map(|e| e.shd_sup_tight.clone()).into());
        }
        if loose {
            row.push(e.as_ref().map(|e| e.shd_sup_loose.clone()).into());
        }
        t.push(row);
    }
    t.notes.push(config_note(a));
    Ok((vec![t], Vec::new()))
}

pub fn cmd_shares(a: &AnalysisArgs, _ds: &Dataset, p: &Prepared) -> Result<(Vec<Table>, Vec<String>), CliError> {
    let (rows, warnings) = share_rows(p, a.selection());
    let mut cols = vec!["view", "key", "arm", "n"];
    cols.extend(FineEvent::ALL.map(FineEvent::label));
    let mut t = Table::new("Invocation shares (%) over all logged trajectories", cols);
    for r in rows {
        let mut row: Vec<Cell> = vec![
            view_name(r.view).into(),
            r.key.into(),
            r.arm.into(),
            r.counts.total().into(),
        ];
        row.extend(r.shares.map(Cell::Pct));
        t.push(row);
    }
    t.notes.extend(warnings.iter().cloned());
    Ok((vec![t], warnings))
}

pub fn cmd_shadowing(a: &AnalysisArgs, _ds: &Dataset, p: &Prepared) -> Result<(Vec<Table>, Vec<String>), CliError> {
    let rows = shadowing_rows(p, a.selection(), a.level)?;
    let mut t = Table::new("Shadowing rate", ["view", "key", "arm", "mixed", "n", "shadowing_rate"]);
    for r in rows {
        t.push(vec![
            view_name(r.view).into(),
            r.key.into(),
            r.arm.into(),
            r.mixed.into(),
            r.n.into(),
            Cell::Interval(r.rate),
        ]);
    }
    Ok((vec![t], Vec::new()))
}

pub fn cmd_pass_rates(a: &AnalysisArgs, _ds: &Dataset, p: &Prepared) -> Result<(Vec<Table>, Vec<String>), CliError> {
    let cfg = a.config();
    let rows = pass_rate_rows(p, a.selection(), &cfg)?;
    let title = match cfg.metric {
        Metric::Binary => "Binary pass rate by invocation event (Wilson intervals)",
        Metric::Fractional => "Fractional pass rate by invocation event (percentile bootstrap)",
    };
    let mut t = Table::new(title, ["event", "view", "key", "arm", "n_valid", "pass_rate"]);
    for r in rows {
        t.push(vec![
            r.event.label().into(),
            view_name(r.view).into(),
            r.key.into(),
            r.arm.into(),
            r.n_valid.into(),
            r.estimate.into(),
        ]);
    }
    t.notes.push(config_note(a));
    Ok((vec![t], Vec::new()))
}

pub fn cmd_shadow_pairs(a: &AnalysisArgs, ds: &Dataset, p: &Prepared) -> Result<(Vec<Table>, Vec<String>), CliError> {
    let arm = a.arm.first().map(String::as_str);
    let pairs = analysis::shadow_pairs(ds, p, arm);
    let mut t = Table::new(
        "Distractors picked first",
        ["rank", "task", "oracle_bundle", "distractor", "first_picks"],
    );
    for (i, sp) in pairs.into_iter().enumerate() {
        t.push(vec![
            (i + 1).into(),
            sp.task_id.into(),
            sp.oracle_bundle.join(", ").into(),
            sp.distractor.into(),
            sp.first_pick_count.into(),
        ]);
    }
    t.notes.push(match arm {
        Some(a) => format!("arm {a}"),
        None => "all library arms".to_string(),
    });
    Ok((vec![t], Vec::new()))
}

pub fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let (ds, mut report) = load(&a.data)?;
    let checks = validate(&ds);
    report.errors.extend(checks.errors);
    report.warnings.extend(checks.warnings);
    let mut t = Table::new("Input validation", ["severity", "source", "line", "code", "message"]);
    for (sev, list) in [("error", &report.errors), ("warning", &report.warnings)] {
        for i in list.iter() {
            t.push(vec![
                sev.into(),
                i.source.clone().into(),
                i.line.into(),
                i.code.to_string().into(),
                i.message.clone().into(),
            ]);
        }
    }
    t.notes.push(format!(
        "{} rows read, {} marked invalid, {} duplicate skills merged, {} skills renamed, {} errors, {} warnings",
        report.row_count,
        report.invalid_count,
        report.dedup_merges,
        report.renamed_skills.len(),
        report.errors.len(),
        report.warnings.len()
    ));
    for (from, to) in &report.renamed_skills {
        t.notes.push(format!("renamed `{from}` to `{to}`"));
    }
    let text = t.render(a.output.format);
    let mut sink = Vec::new();
    write_output(&a.output, "validate", &text, out, &mut sink)?;
    Ok(if report.errors.is_empty() { 0 } else { 1 })
}

pub fn cmd_simulate(a: &SimulateArgs, err: &mut dyn Write) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| io_err(&a.config, e))?;
    let mut cfg: SimConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", a.config.display())))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let output = cfg.run(a.metric.into())?;
    let files = sim::write_output(&output, &a.out)?;
    for p in [&files.manifest, &files.bundles, &files.log, &files.truth] {
        let _ = writeln!(err, "wrote {}", p.display());
    }
    Ok(0)
}
