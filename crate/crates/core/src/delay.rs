//! Distribution of per-link mean delays, the busy-probability fixed point and
//! backlogged local-delay diagnostics.

use rayon::prelude::*;

use crate::config::{SimConfig, SystemVariant};
use crate::error::{Error, Result};
use crate::geometry::NetworkRealization;
use crate::markov::{GeoGeo1, QUEUE_CAP, TAIL_TOLERANCE};
use crate::phy::{estimate_success, ActivityModel};
use crate::queuesim::{local_delay_stats, local_delay_stats_at, LocalDelay, PerLinkStats};

/// Empirical cdf of per-link mean delays with censored mass above the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfEstimate {
    /// Finite per-link means, ascending.
    pub means: Vec<f64>,
    pub censored: usize,
    pub total: usize,
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl CdfEstimate {
    /// Builds the estimate from one entry per link, `None` marking a censored link.
    pub fn from_link_means(per_link: impl IntoIterator<Item = Option<f64>>, grid: &[f64]) -> Self {
        let mut means = Vec::new();
        let mut censored = 0;
        for m in per_link {
            match m {
                Some(v) if v.is_finite() => means.push(v),
                _ => censored += 1,
            }
        }
        means.sort_by(f64::total_cmp);
        let total = means.len() + censored;
        let cdf = grid
            .iter()
            .map(|&t| if total == 0 { 0.0 } else { means.partition_point(|&m| m <= t) as f64 / total as f64 })
            .collect();
        CdfEstimate { means, censored, total, grid: grid.to_vec(), cdf }
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.censored as f64 / self.total as f64
        }
    }

    /// Right-continuous cdf at any `t`.
    pub fn at(&self, t: f64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.means.partition_point(|&m| m <= t) as f64 / self.total as f64
    }
}

/// Largest gap between two cdfs at common evaluation points.
pub fn sup_distance(a: &CdfEstimate, b: &CdfEstimate) -> f64 {
    let mut points: Vec<f64> = a.means.iter().chain(&b.means).chain(&a.grid).copied().collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    points.iter().map(|&t| (a.at(t) - b.at(t)).abs()).fold(0.0, f64::max)
}

/// Cdf of per-link mean delays pooled over every link of every run.
///
/// A link's mean counts each packet still queued at the horizon as if it
/// were delivered in the next slot; a link that delivered nothing is
/// censored. The truncated packet delays are ordered packet by packet
/// between coupled systems, so the cdfs of coupled ensembles are ordered too.
pub fn mean_delay_cdf(runs: &[Vec<PerLinkStats>], grid: &[f64]) -> Result<CdfEstimate> {
    let mut links = runs.iter().flatten();
    let Some(first) = links.next() else {
        return Err(Error::EmptyEnsemble);
    };
    if links.any(|s| s.variant != first.variant) {
        return Err(Error::invalid("cdf runs mix system variants"));
    }
    Ok(CdfEstimate::from_link_means(runs.iter().flatten().map(PerLinkStats::horizon_mean_delay), grid))
}

/// Success probabilities of every link when all interferers are active with
/// probability `activity`.
fn success_probs(ensemble: &[NetworkRealization], config: &SimConfig, activity: f64) -> Result<Vec<f64>> {
    let per_real: Vec<Vec<f64>> = ensemble
        .par_iter()
        .map(|real| {
            (0..real.len())
                .map(|i| Ok(estimate_success(i, real, &ActivityModel::Uniform(activity), config)?.prob))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_real.into_iter().flatten().collect())
}

/// `f(ρ)`: ensemble average of `min(1, ξ/(p·q_i(ρ)))`, with `q_i(ρ)` the
/// success probability when every interferer is active with probability `ρp`.
pub fn busy_map(config: &SimConfig, ensemble: &[NetworkRealization], rho: f64) -> Result<f64> {
    let xi = config.arrival_rate;
    let p = config.access_prob;
    let q = success_probs(ensemble, config, rho * p)?;
    if q.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let load = q.iter().map(|&qi| {
        let mu = p * qi;
        if xi == 0.0 {
            0.0
        } else if mu <= 0.0 {
            1.0
        } else {
            (xi / mu).min(1.0)
        }
    });
    Ok(load.sum::<f64>() / q.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub rho: f64,
    pub iterations: usize,
    /// `|ρ - f(ρ)|` at the returned `ρ`.
    pub residual: f64,
    pub converged: bool,
    /// Every iterate, starting with `ρ₀ = 1`.
    pub iterates: Vec<f64>,
    pub damping: f64,
}

/// Solves `ρ = f(ρ)` by damped iteration from `ρ₀ = 1`.
///
/// The first step is a plain substitution; later steps mix with `γ = 0.5`,
/// halved whenever the residual grows after the third iteration.
pub fn fixed_point_busy(
    config: &SimConfig,
    ensemble: &[NetworkRealization],
    tolerance: f64,
    max_iter: usize,
) -> Result<FixedPointResult> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut rho = 1.0;
    let mut f = busy_map(config, ensemble, rho)?;
    let mut residual = (rho - f).abs();
    let mut iterates = vec![rho];
    let mut gamma = 0.5;
    let mut iterations = 0;
    while residual > tolerance && iterations < max_iter {
        let step = if iterations == 0 { 1.0 } else { gamma };
        rho = ((1.0 - step) * rho + step * f).clamp(0.0, 1.0);
        iterations += 1;
        iterates.push(rho);
        f = busy_map(config, ensemble, rho)?;
        let next = (rho - f).abs();
        if iterations > 3 && next > residual {
            gamma *= 0.5;
        }
        residual = next;
    }
    Ok(FixedPointResult { rho, iterations, residual, converged: residual <= tolerance, iterates, damping: gamma })
}

/// Cdf of Geo/Geo/1 mean sojourn times with service rates `p·q_i(ρ)`.
/// Links with `ξ ≥ μ_i` are censored.
pub fn approx_delay_cdf(
    config: &SimConfig,
    ensemble: &[NetworkRealization],
    rho: f64,
    grid: &[f64],
) -> Result<CdfEstimate> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("busy probability must lie in [0, 1]"));
    }
    let p = config.access_prob;
    let xi = config.arrival_rate;
    let q = success_probs(ensemble, config, rho * p)?;
    Ok(CdfEstimate::from_link_means(
        q.iter().map(|&qi| GeoGeo1::new(xi, p * qi).mean_delay_with(QUEUE_CAP, TAIL_TOLERANCE)),
        grid,
    ))
}

/// Pooled local-delay statistics of a backlogged ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDelaySummary {
    /// Mean over non-censored links of the per-link mean.
    pub mean: f64,
    /// Variance of the local delay of a typical non-censored link (within plus between links).
    pub variance: f64,
    pub censored_fraction: f64,
    /// Pooled mean over the first half of the horizon.
    pub half_horizon_mean: f64,
    pub diverging: bool,
    pub links: usize,
}

fn pool(per_link: &[LocalDelay]) -> (f64, f64, f64) {
    let finite: Vec<&LocalDelay> = per_link.iter().filter(|d| !d.censored).collect();
    let censored = if per_link.is_empty() { 0.0 } else { 1.0 - finite.len() as f64 / per_link.len() as f64 };
    if finite.is_empty() {
        return (f64::NAN, f64::NAN, censored);
    }
    let n = finite.len() as f64;
    let mean = finite.iter().map(|d| d.mean).sum::<f64>() / n;
    let second = finite.iter().map(|d| d.variance + d.mean * d.mean).sum::<f64>() / n;
    (mean, (second - mean * mean).max(0.0), censored)
}

/// Pools a backlogged ensemble and flags divergence.
///
/// The indicator fires when some link delivered nothing over the horizon, or
/// when the pooled mean over the full horizon exceeds the one over the first
/// half by more than `divergence_threshold` (relative).
pub fn local_delay_summary(runs: &[Vec<PerLinkStats>], divergence_threshold: f64) -> Result<LocalDelaySummary> {
    let stats: Vec<PerLinkStats> = runs.iter().flatten().cloned().collect();
    if stats.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let full = local_delay_stats(&stats)?;
    let half_h = stats.iter().map(|s| s.horizon).max().unwrap_or(0) / 2;
    let half = local_delay_stats_at(&stats, half_h)?;
    let (mean, variance, censored_fraction) = pool(&full);
    let (half_mean, ..) = pool(&half);
    let grew = half_mean.is_finite() && mean > (1.0 + divergence_threshold) * half_mean;
    let diverging = censored_fraction > 0.0 || grew || (mean.is_finite() && !half_mean.is_finite());
    Ok(LocalDelaySummary {
        mean,
        variance,
        censored_fraction,
        half_horizon_mean: half_mean,
        diverging,
        links: stats.len(),
    })
}

/// Rejects ensembles whose runs do not all use `variant`.
pub fn require_variant(runs: &[Vec<PerLinkStats>], variant: SystemVariant) -> Result<()> {
    if runs.iter().flatten().any(|s| s.variant != variant) {
        return Err(Error::invalid(format!("expected {variant} runs")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{FadingModel, ValidatedConfig};
    use crate::geometry::{sample_bipolar, Link, Point};
    use crate::queuesim::{run, run_favorable, StreamSet};
    use crate::rng::{derive_stream, Substream};
    use proptest::prelude::*;

    fn cfg(edit: impl FnOnce(&mut SimConfig)) -> ValidatedConfig {
        let mut c = SimConfig { horizon: 3_000, ..SimConfig::default() };
        edit(&mut c);
        c.validate().unwrap()
    }

    fn ensemble(c: &ValidatedConfig, n: u64) -> Vec<NetworkRealization> {
        (0..n).map(|id| sample_bipolar(c, &mut derive_stream(c.seed, Substream::Geometry, id), id)).collect()
    }

    fn isolated(n: usize) -> NetworkRealization {
        // Links 40 m apart on a 400 m torus barely interact.
        let links = (0..n)
            .map(|i| {
                let x = 40.0 * i as f64 + 5.0;
                Link { tx: Point::new(x, 5.0), rx: Point::new(x + 1.0, 5.0) }
            })
            .collect();
        NetworkRealization::from_links(links, 400.0, 0)
    }

    fn grid() -> Vec<f64> {
        (0..=80).map(|k| k as f64 * 0.25).collect()
    }

    #[test]
    fn cdf_is_a_nondecreasing_step_below_censored_mass() {
        let est = CdfEstimate::from_link_means([Some(2.0), None, Some(1.0), Some(2.0)], &[0.5, 1.0, 1.5, 2.0, 10.0]);
        assert_eq!(est.cdf, vec![0.0, 0.25, 0.25, 0.75, 0.75]);
        assert_eq!(est.censored_fraction(), 0.25);
    }

    #[test]
    fn identical_links_give_one_step() {
        let est = CdfEstimate::from_link_means(std::iter::repeat_n(Some(3.0), 10), &[2.9, 3.0, 3.1]);
        assert_eq!(est.cdf, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn empty_or_mixed_ensembles_are_rejected() {
        assert!(mean_delay_cdf(&[], &grid()).is_err());
        let c = cfg(|c| c.horizon = 200);
        let real = isolated(2);
        let a = run(&c, &real, SystemVariant::Original, StreamSet::new(1, 0)).unwrap();
        let b = run(&c, &real, SystemVariant::Dominant, StreamSet::new(1, 0)).unwrap();
        assert!(mean_delay_cdf(&[a, b], &grid()).is_err());
    }

    proptest! {
        #[test]
        fn cdf_ignores_link_order(mut v in proptest::collection::vec(proptest::option::of(1.0..20.0f64), 1..40), seed in 0u64..1000) {
            let g = grid();
            let a = CdfEstimate::from_link_means(v.clone(), &g);
            // deterministic shuffle
            let n = v.len();
            for i in (1..n).rev() {
                v.swap(i, (crate::rng::mix64(seed ^ i as u64) % (i as u64 + 1)) as usize);
            }
            let b = CdfEstimate::from_link_means(v, &g);
            prop_assert_eq!(&a.cdf, &b.cdf);
            prop_assert!(a.cdf.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(a.cdf[0], 0.0);
        }
    }

    #[test]
    fn coupled_cdfs_are_sandwiched() {
        let c = cfg(|c| {
            c.lambda = 0.05;
            c.window_side = 40.0;
            c.arrival_rate = 0.15;
        });
        let ens = ensemble(&c, 3);
        let (mut lo, mut mid, mut hi) = (Vec::new(), Vec::new(), Vec::new());
        for real in &ens {
            let s = StreamSet::for_realization(&c, real);
            lo.push(run(&c, real, SystemVariant::Dominant, s).unwrap());
            mid.push(run(&c, real, SystemVariant::Original, s).unwrap());
            hi.push(run_favorable(&c, real, 4, s).unwrap());
        }
        let g = grid();
        let (l, m, h) = (mean_delay_cdf(&lo, &g).unwrap(), mean_delay_cdf(&mid, &g).unwrap(), mean_delay_cdf(&hi, &g).unwrap());
        for (k, t) in g.iter().enumerate() {
            assert!(l.cdf[k] <= m.cdf[k] && m.cdf[k] <= h.cdf[k], "t = {t}");
        }
    }

    #[test]
    fn no_traffic_fixed_point_is_zero() {
        let c = cfg(|c| c.arrival_rate = 0.0);
        let fp = fixed_point_busy(&c, &ensemble(&c, 1), 1e-6, 200).unwrap();
        assert_eq!(fp.rho, 0.0);
        assert_eq!(fp.iterations, 1);
        assert!(fp.converged);
    }

    #[test]
    fn single_link_fixed_point_is_load() {
        let c = cfg(|c| {
            c.arrival_rate = 0.1;
            c.access_prob = 0.4;
        });
        let fp = fixed_point_busy(&c, &[isolated(1)], 1e-9, 200).unwrap();
        assert!((fp.rho - 0.25).abs() < 1e-12);
        assert!(fp.converged && fp.iterates[0] == 1.0);
    }

    #[test]
    fn fixed_point_converges_on_a_dense_network() {
        let c = cfg(|_| {});
        let fp = fixed_point_busy(&c, &ensemble(&c, 2), 1e-6, 200).unwrap();
        assert!(fp.converged && fp.residual <= 1e-6);
        assert!(fp.rho > 0.0 && fp.rho < 1.0);
        assert!(!fp.converged || fp.iterations <= 200);
        let nonconv = fixed_point_busy(&c, &ensemble(&c, 1), 1e-300, 2).unwrap();
        assert!(!nonconv.converged && nonconv.iterations == 2);
    }

    #[test]
    fn approx_cdf_without_interference_is_one_step() {
        let c = cfg(|c| c.arrival_rate = 0.1);
        let est = approx_delay_cdf(&c, &[isolated(5)], 0.0, &[1.0, 2.0, 2.25, 3.0]).unwrap();
        // (1-ξ)/(p-ξ) = 0.9/0.4 = 2.25 for every link.
        assert_eq!(est.cdf, vec![0.0, 0.0, 1.0, 1.0]);
        let light = cfg(|c| c.arrival_rate = 0.0);
        let e = approx_delay_cdf(&light, &[isolated(1)], 0.0, &[1.99, 2.0]).unwrap();
        assert_eq!(e.cdf, vec![0.0, 1.0]);
        assert!(approx_delay_cdf(&c, &[isolated(1)], 1.5, &[1.0]).is_err());
    }

    #[test]
    fn isolated_local_delay_is_geometric() {
        let c = cfg(|c| {
            c.access_prob = 0.5;
            c.horizon = 50_000;
        });
        let real = isolated(4);
        let stats = run(&c, &real, SystemVariant::Backlogged, StreamSet::new(c.seed, 0)).unwrap();
        let s = local_delay_summary(&[stats], c.divergence_threshold).unwrap();
        assert!((s.mean - 2.0).abs() < 0.05);
        assert!((s.variance - 2.0).abs() < 0.2);
        assert!(!s.diverging && s.censored_fraction == 0.0);
    }

    #[test]
    fn fixed_gains_give_unit_or_censored_delay() {
        let c = cfg(|c| {
            c.fading = FadingModel::None;
            c.access_prob = 1.0;
            c.horizon = 100;
        });
        let runs: Vec<_> = ensemble(&c, 2)
            .iter()
            .map(|r| run(&c, r, SystemVariant::Backlogged, StreamSet::for_realization(&c, r)).unwrap())
            .collect();
        let s = local_delay_summary(&runs, 0.2).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, 0.0);
    }

    #[test]
    fn sup_distance_of_identical_cdfs_is_zero() {
        let a = CdfEstimate::from_link_means([Some(1.0), Some(2.0)], &grid());
        assert_eq!(sup_distance(&a, &a), 0.0);
        let b = CdfEstimate::from_link_means([Some(1.0), Some(3.0)], &grid());
        assert_eq!(sup_distance(&a, &b), 0.5);
    }
}
