#![allow(dead_code)]

use std::path::{Path, PathBuf};

use clap::Parser;
use rand::Rng;
use skillshadow::cli::{execute, Cli};
use skillshadow::model::{ArmKind, EventTable, Metric, PerEvent};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join("skillsbench")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// `--logs/--manifests/--bundles` pointing at the committed fixture.
pub fn fixture_args() -> Vec<String> {
    let d = fixture_dir();
    let join = |names: &[&str]| {
        names
            .iter()
            .map(|n| d.join(n).display().to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    vec![
        "--logs".into(),
        join(&["trajectories.jsonl", "isolation.jsonl"]),
        "--manifests".into(),
        join(&["lib-52.json", "lib-102.json", "lib-202.json"]),
        "--bundles".into(),
        d.join("bundles.json").display().to_string(),
    ]
}

/// Parses and runs a command line, returning (exit code, stdout, stderr).
pub fn run<S: AsRef<str>>(args: &[S]) -> (i32, String, String) {
    let argv = std::iter::once("skillshadow").chain(args.iter().map(AsRef::as_ref));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => return (e.exit_code(), String::new(), e.to_string()),
    };
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = execute(&cli, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// A random point on the probability simplex of the given size.
pub fn simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Raw parameters of a star/full pair: `(π*_N, π*_O)`, `(ρ*_N, ρ*_O)`,
/// `(π_N, π_M, π_O)`, `(ρ_N, ρ_M, ρ_O)`.
#[derive(Debug, Clone, Copy)]
pub struct Params {
    pub star_pi: [f64; 2],
    pub star_rho: [f64; 2],
    pub full_pi: [f64; 3],
    pub full_rho: [f64; 3],
}

impl Params {
    /// All events populated on both arms. With `assumption`, `ρ*_E ≥ ρ_E`
    /// for `E ∈ {N, O}`.
    pub fn random<R: Rng>(rng: &mut R, assumption: bool) -> Self {
        let s = simplex(rng, 2);
        let f = simplex(rng, 3);
        let full_rho = [rng.random(), rng.random(), rng.random()];
        let star_rho = if assumption {
            [rng.random_range(full_rho[0]..=1.0), rng.random_range(full_rho[2]..=1.0)]
        } else {
            [rng.random(), rng.random()]
        };
        Params {
            star_pi: [s[0], s[1]],
            star_rho,
            full_pi: [f[0], f[1], f[2]],
            full_rho,
        }
    }

    pub fn tables(&self) -> (EventTable, EventTable) {
        let star = EventTable::from_probabilities(
            ArmKind::Star,
            Metric::Binary,
            PerEvent::new(self.star_pi[0], 0.0, self.star_pi[1]),
            PerEvent::new(Some(self.star_rho[0]), None, Some(self.star_rho[1])),
        )
        .unwrap();
        let full = EventTable::from_probabilities(
            ArmKind::Full,
            Metric::Binary,
            PerEvent::new(self.full_pi[0], self.full_pi[1], self.full_pi[2]),
            PerEvent::new(Some(self.full_rho[0]), Some(self.full_rho[1]), Some(self.full_rho[2])),
        )
        .unwrap();
        (star, full)
    }

    /// Pass-rate difference by total probability on each arm separately.
    pub fn delta(&self) -> f64 {
        let p_star = self.star_pi[0] * self.star_rho[0] + self.star_pi[1] * self.star_rho[1];
        let p_full = self.full_pi.iter().zip(&self.full_rho).map(|(p, r)| p * r).sum::<f64>();
        p_star - p_full
    }

    /// Context overhead as the drop from swapping conditional rates at the
    /// star event distribution.
    pub fn ctx(&self) -> f64 {
        let at_star_rates = self.star_pi[0] * self.star_rho[0] + self.star_pi[1] * self.star_rho[1];
        let at_full_rates = self.star_pi[0] * self.full_rho[0] + self.star_pi[1] * self.full_rho[2];
        at_star_rates - at_full_rates
    }

    /// Shadowing in the expanded form (distribution shift at full-library
    /// rates, minus the mixed-event mass).
    pub fn shd_expanded(&self) -> f64 {
        let [fn_, fm, fo] = self.full_pi;
        let [rn, rm, ro] = self.full_rho;
        (self.star_pi[0] - fn_) * rn + (self.star_pi[1] - fo) * ro - fm * rm
    }

    /// Shadowing in the simplified form, using `π_M = Δπ_N + Δπ_O`.
    pub fn shd_simplified(&self) -> f64 {
        let [fn_, _, fo] = self.full_pi;
        let [rn, rm, ro] = self.full_rho;
        (self.star_pi[0] - fn_) * (rn - rm) + (self.star_pi[1] - fo) * (ro - rm)
    }
}
