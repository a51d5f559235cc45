//! Renders the share, shadowing and pass-rate tables for the bundled
//! benchmark fixture.
//!
//! ```text
//! cargo run --release --example fixture_report -- json
//! ```

use skillshadow::analysis::{pass_rate_rows, prepare, shadowing_rows, share_rows, AnalysisConfig, ViewSelection};
use skillshadow::fixture::{make_fixture, FixtureProfile};
use skillshadow::model::FineEvent;
use skillshadow::report::{render_all, Cell, Format, Table};

fn main() {
    let format = match std::env::args().nth(1).as_deref() {
        Some("csv") => Format::Csv,
        Some("json") => Format::Json,
        _ => Format::Markdown,
    };
    let f = make_fixture(FixtureProfile::SkillsBench);
    let cfg = AnalysisConfig::default();
    let p = prepare(&f.dataset, cfg.tau, cfg.metric).unwrap();
    let sel = ViewSelection {
        pairs: false,
        models: true,
        pooled: true,
    };

    let mut cols = vec!["key", "arm", "n"];
    cols.extend(FineEvent::ALL.map(FineEvent::label));
    let mut shares = Table::new("Invocation shares (%)", cols);
    for r in share_rows(&p, sel).0 {
        let mut row: Vec<Cell> = vec![r.key.into(), r.arm.into(), r.counts.total().into()];
        row.extend(r.shares.map(Cell::Pct));
        shares.push(row);
    }

    let mut shadowing = Table::new("Shadowing rate", ["key", "arm", "rate"]);
    for r in shadowing_rows(&p, sel, 0.95).unwrap() {
        shadowing.push(vec![r.key.into(), r.arm.into(), Cell::Interval(r.rate)]);
    }

    let mut rates = Table::new("Pass rate by event", ["event", "key", "arm", "rate"]);
    for r in pass_rate_rows(&p, sel, &cfg).unwrap() {
        rates.push(vec![
            r.event.label().into(),
            r.key.into(),
            r.arm.into(),
            r.estimate.into(),
        ]);
    }

    print!("{}", render_all(&[shares, shadowing, rates], format));
}
