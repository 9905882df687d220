//! Quick end-to-end sanity checks with deliberate-fault injection.

use std::fmt;

use crate::config::{FadingModel, SimConfig, SystemVariant};
use crate::error::Result;
use crate::geometry::{sample_bipolar, Link, NetworkRealization, Point};
use crate::oracle;
use crate::phy::{attempt_success, conditional_success_prob, sinr, ActivityModel, ChannelParams, SlotChannelDraw};
use crate::queuesim::{run, Simulation, StreamSet};
use crate::rng::{derive_stream, FadingField, Substream};

/// Faults to inject, for verifying that the checks can fail.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Mutations {
    /// Success requires `SINR > θ` instead of `SINR ≥ θ`.
    pub strict_threshold: bool,
    /// The dominant run draws from a different seed than the original run.
    pub corrupt_coupling: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub expected: String,
    pub observed: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfcheckReport {
    pub checks: Vec<CheckResult>,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SelfcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {}: expected {}, observed {}", c.name, c.expected, c.observed)?;
        }
        Ok(())
    }
}

fn coupling_check(m: Mutations) -> Result<CheckResult> {
    let config = SimConfig { horizon: 2_000, ..SimConfig::default() }.validate()?;
    let mut violations = 0u64;
    for id in 0..3 {
        let real = sample_bipolar(&config, &mut derive_stream(config.seed, Substream::Geometry, id), id);
        let streams = StreamSet::for_realization(&config, &real);
        let dom_streams = if m.corrupt_coupling { StreamSet::new(config.seed + 1, id) } else { streams };
        let mut orig = Simulation::new(&config, &real, SystemVariant::Original, streams);
        let mut dom = Simulation::new(&config, &real, SystemVariant::Dominant, dom_streams);
        for _ in 0..config.horizon {
            orig.step()?;
            dom.step()?;
            violations += (0..real.len()).filter(|&i| dom.queue_len(i) < orig.queue_len(i)).count() as u64;
        }
    }
    Ok(CheckResult {
        name: "coupling dominance (3 realizations)",
        passed: violations == 0,
        expected: "0 violations".into(),
        observed: format!("{violations} violations"),
    })
}

fn queue_oracle_check() -> Result<CheckResult> {
    let config = SimConfig { access_prob: 0.5, arrival_rate: 0.05, horizon: 1_000_000, ..SimConfig::default() }.validate()?;
    let real = NetworkRealization::from_links(vec![Link { tx: Point::new(5.0, 5.0), rx: Point::new(6.0, 5.0) }], 100.0, 0);
    let stats = run(&config, &real, SystemVariant::Original, StreamSet::new(config.seed, 0))?;
    let simulated = stats[0].mean_delay().unwrap_or(f64::NAN);
    let exact = oracle::mean_delay(0.05, 0.5, oracle::ORACLE_CAP)?;
    let rel = (simulated - exact).abs() / exact;
    Ok(CheckResult {
        name: "single-queue oracle",
        passed: rel <= 0.02,
        expected: format!("mean delay {exact:.5} within 2%"),
        observed: format!("{simulated:.5} ({:.3}% off)", 100.0 * rel),
    })
}

fn two_link(d: f64) -> NetworkRealization {
    NetworkRealization::from_links(
        vec![
            Link { tx: Point::new(10.0, 10.0), rx: Point::new(11.0, 10.0) },
            Link { tx: Point::new(11.0 + d, 10.0), rx: Point::new(12.0 + d, 10.0) },
        ],
        100.0,
        0,
    )
}

fn two_exponential_check(m: Mutations) -> Result<CheckResult> {
    let success = |s: f64, theta: f64| if m.strict_threshold { s > theta } else { attempt_success(s, theta) };
    let real = two_link(2.0);
    let mut worst = 0.0f64;
    for alpha in [3.0, 4.0] {
        for theta in [0.5, 1.0, 4.0] {
            let channel = ChannelParams { theta, alpha, noise: 0.0, fading: FadingModel::Rayleigh };
            let mut stream = derive_stream(7, Substream::Estimation, 0);
            let est = conditional_success_prob(
                0,
                &real,
                &ActivityModel::Only { link: 1, prob: 1.0 },
                &channel,
                100_000,
                &mut stream,
            )?;
            let exact = 1.0 / (1.0 + theta * 0.5f64.powf(alpha));
            worst = worst.max((est.prob - exact).abs() / est.std_error);
        }
    }
    // Fixed gains, interferer at twice the link length, α = 4: SINR is exactly 16.
    let field = FadingField::new(0, 0, FadingModel::None);
    let s = sinr(0, &[0, 1], &real, &SlotChannelDraw { field: &field, slot: 0 }, 4.0, 0.0)?;
    let boundary_ok = success(s, 16.0);
    Ok(CheckResult {
        name: "two-exponential closed form",
        passed: worst <= 3.0 && boundary_ok,
        expected: "deviation <= 3 standard errors and success at SINR = θ".into(),
        observed: format!(
            "worst deviation {worst:.2} standard errors, boundary attempt {}",
            if boundary_ok { "succeeds" } else { "fails" }
        ),
    })
}

/// Runs every check. Takes well under two minutes on one core.
pub fn run_selfcheck(mutations: Mutations) -> Result<SelfcheckReport> {
    Ok(SelfcheckReport {
        checks: vec![coupling_check(mutations)?, queue_oracle_check()?, two_exponential_check(mutations)?],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_threshold_mutation_is_caught() {
        let c = two_exponential_check(Mutations { strict_threshold: true, ..Mutations::default() }).unwrap();
        assert!(!c.passed, "{c:?}");
        assert!(two_exponential_check(Mutations::default()).unwrap().passed);
    }

    #[test]
    fn oracle_check_passes() {
        assert!(queue_oracle_check().unwrap().passed);
    }
}
