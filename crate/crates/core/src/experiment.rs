//! Ensemble orchestration and the CSV tables behind each experiment.
//!
//! Every function here parallelizes over realizations with rayon and
//! collects results in realization order, so the numbers do not depend on
//! the size of the thread pool they run in.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{SimConfig, SystemVariant, ValidatedConfig};
use crate::delay::{
    approx_delay_cdf, fixed_point_busy, local_delay_summary, mean_delay_cdf, CdfEstimate, FixedPointResult,
    LocalDelaySummary,
};
use crate::error::{Error, Result};
use crate::geometry::{sample_bipolar, NetworkRealization};
use crate::queuesim::{run, run_favorable, PerLinkStats, StreamSet};
use crate::rng::{derive_stream, Substream};
use crate::stability::{critical_arrival_rate, ConditionKind};

/// Fixed-point tolerance and iteration budget used by the cdf experiment.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-6;
pub const FIXED_POINT_MAX_ITER: usize = 200;

/// Realizations `0..count`, each from its own geometry substream.
pub fn sample_ensemble(config: &ValidatedConfig, count: usize) -> Vec<NetworkRealization> {
    (0..count as u64)
        .into_par_iter()
        .map(|id| sample_bipolar(config, &mut derive_stream(config.seed, Substream::Geometry, id), id))
        .collect()
}

/// Runs `variant` on every realization with coupled streams. The favorable
/// system is assembled from `favorable_groups` observed-link groups.
pub fn run_ensemble(
    config: &ValidatedConfig,
    ensemble: &[NetworkRealization],
    variant: SystemVariant,
) -> Result<Vec<Vec<PerLinkStats>>> {
    ensemble
        .par_iter()
        .map(|real| {
            let streams = StreamSet::for_realization(config, real);
            if variant == SystemVariant::FavorableDrop {
                run_favorable(config, real, config.favorable_groups as usize, streams)
            } else {
                run(config, real, variant, streams)
            }
        })
        .collect()
}

/// A named parameter grid `NAME=START:STOP:STEP`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub name: String,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Sweep { name: name.into(), values }
    }

    /// Config field the sweep name refers to. Short symbol names are accepted.
    pub fn field(&self) -> Result<&'static str> {
        let field = match self.name.as_str() {
            "p" => "access_prob",
            "theta" => "sinr_threshold",
            "xi" => "arrival_rate",
            "eps" => "epsilon",
            "alpha" => "path_loss_exponent",
            "r" => "link_distance",
            "L" => "window_side",
            other => other,
        };
        SimConfig::field_names()
            .iter()
            .copied()
            .find(|f| *f == field)
            .ok_or_else(|| Error::invalid(format!("unknown sweep parameter `{}`", self.name)))
    }

    /// Whether the swept field changes the sampled geometry.
    pub fn affects_geometry(&self) -> Result<bool> {
        Ok(matches!(self.field()?, "lambda" | "window_side" | "link_distance" | "seed"))
    }

    /// `config` with the swept field set to `value`, revalidated.
    pub fn apply(&self, config: &ValidatedConfig, value: f64) -> Result<ValidatedConfig> {
        let field = self.field()?;
        let mut c = (**config).clone();
        let text = if matches!(field, "horizon" | "seed" | "mc_samples" | "queue_sample_stride" | "favorable_groups") {
            format!("{}", value.round() as u64)
        } else {
            value.to_string()
        };
        c.set_field(field, &text).map_err(|issue| Error::invalid(issue.to_string()))?;
        Ok(c.validate()?)
    }
}

impl FromStr for Sweep {
    type Err = Error;

    /// Parses `NAME=START:STOP:STEP`. A start above the stop gives an empty grid.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("sweep `{s}` is not NAME=START:STOP:STEP"));
        let (name, range) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<f64> =
            range.split(':').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if name.trim().is_empty() || step.is_nan() || step <= 0.0 || !start.is_finite() || !stop.is_finite() {
            return Err(bad());
        }
        let mut values = Vec::new();
        if start <= stop {
            let count = ((stop - start) / step + 1e-9).floor() as u64;
            for k in 0..=count {
                // Round away accumulated binary noise so that 0.1*3 prints as 0.3.
                values.push(((start + k as f64 * step) * 1e12).round() / 1e12);
            }
        }
        Ok(Sweep { name: name.trim().to_string(), values })
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for v in &self.values {
            write!(f, " {v}")?;
        }
        Ok(())
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub p: f64,
    pub kind: ConditionKind,
    pub epsilon: f64,
    pub xi_star: f64,
}

/// Critical arrival rates of the three analytical conditions for every access
/// probability in `ps`, at the configured ε.
pub fn stability_region(config: &ValidatedConfig, ensemble: &[NetworkRealization], ps: &[f64]) -> Result<Vec<StabilityRow>> {
    let sweep = Sweep::new("access_prob", ps.to_vec());
    let mut rows = Vec::new();
    for &p in ps {
        let c = sweep.apply(config, p)?;
        for kind in ConditionKind::ANALYTICAL {
            let xi_star = critical_arrival_rate(ensemble, &c, kind, c.epsilon)?;
            rows.push(StabilityRow { p, kind, epsilon: c.epsilon, xi_star });
        }
    }
    Ok(rows)
}

pub fn write_stability_csv<W: Write>(out: W, rows: &[StabilityRow]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["p", "kind", "epsilon", "xi_star"])?;
    for r in rows {
        w.write_record([r.p.to_string(), r.kind.to_string(), r.epsilon.to_string(), r.xi_star.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalDelayRow {
    pub sweep_param: f64,
    pub summary: LocalDelaySummary,
}

/// Backlogged local-delay summary at every sweep point. Runs at different
/// points share random numbers. Geometry is resampled only when the swept
/// field changes it.
pub fn local_delay_sweep(
    config: &ValidatedConfig,
    ensemble: &[NetworkRealization],
    sweep: &Sweep,
) -> Result<Vec<LocalDelayRow>> {
    let resample = sweep.affects_geometry()?;
    let mut rows = Vec::new();
    for &v in &sweep.values {
        let c = sweep.apply(config, v)?;
        let own;
        let ens = if resample {
            own = sample_ensemble(&c, ensemble.len());
            &own[..]
        } else {
            ensemble
        };
        let runs = run_ensemble(&c, ens, SystemVariant::Backlogged)?;
        let summary = local_delay_summary(&runs, c.divergence_threshold)?;
        rows.push(LocalDelayRow { sweep_param: v, summary });
    }
    Ok(rows)
}

pub fn write_local_delay_csv<W: Write>(out: W, rows: &[LocalDelayRow]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["sweep_param", "mean", "variance", "censored_fraction", "diverging_flag"])?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.sweep_param.to_string(),
            s.mean.to_string(),
            s.variance.to_string(),
            s.censored_fraction.to_string(),
            u8::from(s.diverging).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Default evaluation grid of the delay cdf: 0 to 30 slots in quarter steps.
pub fn default_cdf_grid() -> Vec<f64> {
    (0..=120).map(|k| k as f64 * 0.25).collect()
}

/// The four cdfs of the delay experiment on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayCdfReport {
    pub lower: CdfEstimate,
    pub empirical: CdfEstimate,
    pub upper: CdfEstimate,
    pub approx: CdfEstimate,
    pub fixed_point: FixedPointResult,
    /// Mean busy fraction of the original-system links.
    pub busy_fraction: f64,
}

/// Coupled dominant, original and favorable ensembles plus the fixed-point
/// approximation.
pub fn delay_cdf(config: &ValidatedConfig, ensemble: &[NetworkRealization], grid: &[f64]) -> Result<DelayCdfReport> {
    let original = run_ensemble(config, ensemble, SystemVariant::Original)?;
    let dominant = run_ensemble(config, ensemble, SystemVariant::Dominant)?;
    let favorable = run_ensemble(config, ensemble, SystemVariant::FavorableDrop)?;
    let fixed_point = fixed_point_busy(config, ensemble, FIXED_POINT_TOLERANCE, FIXED_POINT_MAX_ITER)?;
    let links: Vec<&PerLinkStats> = original.iter().flatten().collect();
    let busy_fraction = if links.is_empty() {
        0.0
    } else {
        links.iter().map(|s| s.busy_fraction()).sum::<f64>() / links.len() as f64
    };
    Ok(DelayCdfReport {
        lower: mean_delay_cdf(&dominant, grid)?,
        empirical: mean_delay_cdf(&original, grid)?,
        upper: mean_delay_cdf(&favorable, grid)?,
        approx: approx_delay_cdf(config, ensemble, fixed_point.rho, grid)?,
        fixed_point,
        busy_fraction,
    })
}

pub fn write_cdf_csv<W: Write>(out: W, report: &DelayCdfReport) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["grid_t", "cdf_lower", "cdf_empirical", "cdf_upper", "cdf_approx", "censored_fraction"])?;
    let censored = report.empirical.censored_fraction().to_string();
    for (k, t) in report.empirical.grid.iter().enumerate() {
        w.write_record([
            t.to_string(),
            report.lower.cdf[k].to_string(),
            report.empirical.cdf[k].to_string(),
            report.upper.cdf[k].to_string(),
            report.approx.cdf[k].to_string(),
            censored.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
