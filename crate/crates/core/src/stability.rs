//! ε-stability: service-rate estimates under the decoupled systems, critical
//! arrival rates, empirical instability detection and regime advice.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{SimConfig, ValidatedConfig};
use crate::error::{Error, Result};
use crate::geometry::{nearest_interferer, NetworkRealization};
use crate::phy::{estimate_success, ActivityModel};
use crate::queuesim::PerLinkStats;

/// Minimum horizon accepted by [`empirical_stability`].
pub const MIN_EMPIRICAL_HORIZON: u64 = 10_000;
/// Absolute tolerance of the type-II critical-rate bisection.
pub const BISECTION_TOLERANCE: f64 = 1e-4;

/// Loynes criterion with the empty-system convention: stable iff `ξ < μ`, or `ξ = 0`.
pub fn loynes_stable(arrival_rate: f64, service_rate: f64) -> bool {
    arrival_rate == 0.0 || arrival_rate < service_rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionKind {
    /// Dominant system: every interferer active with probability `p`.
    Sufficient,
    /// Simplified system: only the nearest interferer, active with probability `p`.
    NecessaryTypeI,
    /// Favorable system: every interferer active with probability `ξp`.
    NecessaryTypeII,
    /// Measured on simulated queue trajectories.
    Empirical,
}

impl ConditionKind {
    /// The three analytical kinds, in output order.
    pub const ANALYTICAL: [ConditionKind; 3] =
        [ConditionKind::Sufficient, ConditionKind::NecessaryTypeI, ConditionKind::NecessaryTypeII];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionKind::Sufficient => "sufficient",
            ConditionKind::NecessaryTypeI => "type_i",
            ConditionKind::NecessaryTypeII => "type_ii",
            ConditionKind::Empirical => "empirical",
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Interferer activity seen by `link` under `kind` at arrival rate `xi`.
fn activity_for(link: usize, real: &NetworkRealization, p: f64, kind: ConditionKind, xi: f64) -> Result<ActivityModel> {
    Ok(match kind {
        ConditionKind::Sufficient => ActivityModel::Uniform(p),
        ConditionKind::NecessaryTypeI => match nearest_interferer(link, real) {
            Some(near) => ActivityModel::Only { link: near.index, prob: p },
            None => ActivityModel::Uniform(0.0),
        },
        ConditionKind::NecessaryTypeII => ActivityModel::Uniform(xi * p),
        ConditionKind::Empirical => {
            return Err(Error::invalid("empirical stability has no service-rate model"));
        }
    })
}

/// Per-link service rates `μ_i = p·q_i` under the activity model of `kind`.
/// Only the type-II model depends on `arrival_rate`.
pub fn condition_service_rates(
    real: &NetworkRealization,
    config: &SimConfig,
    kind: ConditionKind,
    arrival_rate: f64,
) -> Result<Vec<f64>> {
    if real.is_empty() {
        return Err(Error::EmptyRealization);
    }
    let p = config.access_prob;
    (0..real.len())
        .into_par_iter()
        .map(|i| {
            let activity = activity_for(i, real, p, kind, arrival_rate)?;
            Ok(p * estimate_success(i, real, &activity, config)?.prob)
        })
        .collect()
}

/// Lower empirical ε-quantile: the order statistic of rank `max(1, ⌈ε·n⌉)`.
pub fn epsilon_quantile(values: &[f64], epsilon: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Guard against ε·n landing a rounding error above an integer.
    let rank = ((epsilon * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[rank - 1])
}

fn pooled_rates(ensemble: &[NetworkRealization], config: &SimConfig, kind: ConditionKind, xi: f64) -> Result<Vec<f64>> {
    let per_real: Vec<Vec<f64>> = ensemble
        .par_iter()
        .filter(|r| !r.is_empty())
        .map(|r| condition_service_rates(r, config, kind, xi))
        .collect::<Result<_>>()?;
    let pooled: Vec<f64> = per_real.into_iter().flatten().collect();
    if pooled.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok(pooled)
}

/// Largest arrival rate for which at most a fraction `epsilon` of the pooled
/// links violates the condition of `kind`.
///
/// For the type-II kind the rates shrink as `ξ` grows, so the answer is the
/// crossing of `ξ ↦ Q_ε(μ(ξ)) - ξ`, located by bisection on `[0, 1]`. The upper
/// end of the final bracket is returned: the smallest dyadic grid point at
/// which the condition already fails, which keeps the result monotone in `ε`
/// and never below the sufficient rate.
pub fn critical_arrival_rate(
    ensemble: &[NetworkRealization],
    config: &SimConfig,
    kind: ConditionKind,
    epsilon: f64,
) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid("epsilon must lie in [0, 1]"));
    }
    if kind != ConditionKind::NecessaryTypeII {
        return epsilon_quantile(&pooled_rates(ensemble, config, kind, config.arrival_rate)?, epsilon);
    }
    let gap = |xi: f64| -> Result<f64> {
        Ok(epsilon_quantile(&pooled_rates(ensemble, config, kind, xi)?, epsilon)? - xi)
    };
    if gap(0.0)? <= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if gap(hi)? > 0.0 {
        return Err(Error::EngineFault { slot: 0, message: "type-II rate above one at ξ = 1".into() });
    }
    while hi - lo > BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Least-squares slope of `ys` against `xs`.
fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Whether one link's sampled queue trajectory looks bounded.
pub fn link_is_stable(stats: &PerLinkStats, config: &SimConfig) -> bool {
    let stride = stats.sample_stride as f64;
    let half = stats.horizon as f64 / 2.0;
    let (xs, ys): (Vec<f64>, Vec<f64>) = stats
        .queue_samples
        .iter()
        .enumerate()
        .map(|(k, &q)| ((k + 1) as f64 * stride, q as f64))
        .filter(|(t, _)| *t > half)
        .unzip();
    let growing = ls_slope(&xs, &ys) > config.instability_slope_factor * config.arrival_rate;
    let long = stats.final_queue_len() as f64 > config.instability_min_queue;
    !(growing && long)
}

/// Flags each link unstable when its queue keeps growing over the second half
/// of the run and ends long.
pub fn empirical_stability(stats: &[PerLinkStats], config: &SimConfig) -> Result<Vec<bool>> {
    if let Some(s) = stats.iter().find(|s| s.horizon < MIN_EMPIRICAL_HORIZON) {
        return Err(Error::HorizonTooShort { horizon: s.horizon, required: MIN_EMPIRICAL_HORIZON });
    }
    Ok(stats.iter().map(|s| link_is_stable(s, config)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub kind: ConditionKind,
    pub epsilon: f64,
    pub arrival_rate: f64,
    /// Empty for empirical reports.
    pub service_rates: Vec<f64>,
    pub stable: Vec<bool>,
    pub unstable_fraction: f64,
    pub epsilon_stable: bool,
}

impl StabilityReport {
    fn from_flags(kind: ConditionKind, epsilon: f64, arrival_rate: f64, service_rates: Vec<f64>, stable: Vec<bool>) -> Self {
        let unstable = stable.iter().filter(|s| !**s).count();
        let unstable_fraction = if stable.is_empty() { 0.0 } else { unstable as f64 / stable.len() as f64 };
        StabilityReport {
            kind,
            epsilon,
            arrival_rate,
            service_rates,
            stable,
            unstable_fraction,
            epsilon_stable: unstable_fraction <= epsilon,
        }
    }

    /// Loynes verdicts for given service rates.
    pub fn from_service_rates(kind: ConditionKind, epsilon: f64, arrival_rate: f64, rates: Vec<f64>) -> Self {
        let stable = rates.iter().map(|&mu| loynes_stable(arrival_rate, mu)).collect();
        Self::from_flags(kind, epsilon, arrival_rate, rates, stable)
    }

    /// Pools empirical verdicts from several runs.
    pub fn from_runs(runs: &[Vec<PerLinkStats>], config: &ValidatedConfig) -> Result<Self> {
        let mut stable = Vec::new();
        for run in runs {
            stable.extend(empirical_stability(run, config)?);
        }
        Ok(Self::from_flags(ConditionKind::Empirical, config.epsilon, config.arrival_rate, Vec::new(), stable))
    }
}

/// The asymptotic cases distinguishing the two necessary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    EpsilonToZero,
    AccessToZero,
    DensityToZero,
    ThresholdToZeroAccessToOne,
    LongLinks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NecessaryType {
    TypeI,
    TypeII,
}

impl fmt::Display for NecessaryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NecessaryType::TypeI => "Type I",
            NecessaryType::TypeII => "Type II",
        })
    }
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::EpsilonToZero,
        Regime::AccessToZero,
        Regime::DensityToZero,
        Regime::ThresholdToZeroAccessToOne,
        Regime::LongLinks,
    ];

    pub fn description(self) -> &'static str {
        match self {
            Regime::EpsilonToZero => "Parameter ε for ε-stability approaches zero",
            Regime::AccessToZero => "Access probability approaches zero",
            Regime::DensityToZero => "Density of transmitters approaches zero",
            Regime::ThresholdToZeroAccessToOne => {
                "SINR threshold θ approaches zero and access probability approaches one"
            }
            Regime::LongLinks => {
                "Square of the desired link distance is much larger than reciprocal of the density of transmitters"
            }
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Regime::EpsilonToZero => "epsilon_to_zero",
            Regime::AccessToZero => "access_to_zero",
            Regime::DensityToZero => "density_to_zero",
            Regime::ThresholdToZeroAccessToOne => "threshold_to_zero_access_to_one",
            Regime::LongLinks => "long_links",
        }
    }
}

fn normalize(text: &str) -> String {
    text.replace("$\\varepsilon$", "ε")
        .replace("$\\theta$", "θ")
        .replace("epsilon", "ε")
        .replace("theta", "θ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches('.')
        .to_lowercase()
}

impl FromStr for Regime {
    type Err = Error;

    /// Accepts the case description (case-insensitive, LaTeX or Unicode
    /// symbols) or its slug.
    fn from_str(s: &str) -> Result<Self> {
        let key = normalize(s);
        Regime::ALL
            .into_iter()
            .find(|r| r.slug() == s.trim() || normalize(r.description()) == key)
            .ok_or_else(|| Error::UnknownRegime(s.to_string()))
    }
}

/// Which necessary condition is the tighter guide in `regime`.
pub fn recommend_condition_type(regime: Regime) -> NecessaryType {
    match regime {
        Regime::AccessToZero | Regime::DensityToZero => NecessaryType::TypeI,
        Regime::EpsilonToZero | Regime::ThresholdToZeroAccessToOne | Regime::LongLinks => NecessaryType::TypeII,
    }
}
