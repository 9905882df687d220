//! Path loss, per-slot SINR and the threshold success rule.


use crate::config::{FadingModel, SimConfig, SuccessEstimator};
use crate::error::{Error, Result};
use crate::geometry::NetworkRealization;
use crate::rng::{derive_stream, exponential_at, link_entity, uniform_at, FadingField, RngStream, Substream, EXP_DRAW_MAX};

/// Power attenuation `distance^(-alpha)`.
pub fn path_loss(distance: f64, alpha: f64) -> Result<f64> {
    if distance <= 0.0 {
        return Err(Error::ZeroDistance);
    }
    Ok(distance.powf(-alpha))
}

/// `d^(-alpha)` from the squared distance, with a fast path for the common exponent.
#[inline]
pub(crate) fn gain_from_sq(d2: f64, alpha: f64) -> f64 {
    if alpha == 4.0 {
        1.0 / (d2 * d2)
    } else {
        d2.powf(-0.5 * alpha)
    }
}

/// Channel constants shared by every SINR evaluation of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub theta: f64,
    pub alpha: f64,
    pub noise: f64,
    pub fading: FadingModel,
}

impl From<&SimConfig> for ChannelParams {
    fn from(c: &SimConfig) -> Self {
        ChannelParams {
            theta: c.sinr_threshold,
            alpha: c.path_loss_exponent,
            noise: c.noise_power,
            fading: c.fading,
        }
    }
}

/// The fading gains of one slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotChannelDraw<'a> {
    pub field: &'a FadingField,
    pub slot: u64,
}

impl SlotChannelDraw<'_> {
    #[inline]
    pub fn gain(&self, tx: usize, rx: usize) -> f64 {
        self.field.gain(tx, rx, self.slot)
    }
}

#[inline]
pub(crate) fn signal_power(link: usize, real: &NetworkRealization, draw: &SlotChannelDraw<'_>, alpha: f64) -> f64 {
    draw.gain(link, link) * gain_from_sq(real.tx_rx_distance_sq(link, link), alpha)
}

#[inline]
pub(crate) fn interference_term(
    tx: usize,
    link: usize,
    real: &NetworkRealization,
    draw: &SlotChannelDraw<'_>,
    alpha: f64,
) -> f64 {
    draw.gain(tx, link) * gain_from_sq(real.tx_rx_distance_sq(tx, link), alpha)
}

#[inline]
pub(crate) fn ratio(signal: f64, noise: f64, interference: f64) -> f64 {
    let denom = noise + interference;
    if denom > 0.0 {
        signal / denom
    } else {
        f64::INFINITY
    }
}

/// SINR of `link` while every link of `active` transmits. `link` must itself
/// be active. Returns `+inf` when neither noise nor interference is present.
pub fn sinr(
    link: usize,
    active: &[usize],
    real: &NetworkRealization,
    draw: &SlotChannelDraw<'_>,
    alpha: f64,
    noise: f64,
) -> Result<f64> {
    if link >= real.len() {
        return Err(Error::LinkOutOfRange { index: link, len: real.len() });
    }
    if !active.contains(&link) {
        return Err(Error::invalid(format!("link {link} is not in the active set")));
    }
    let signal = signal_power(link, real, draw, alpha);
    let interference: f64 = active
        .iter()
        .filter(|&&k| k != link)
        .map(|&k| interference_term(k, link, real, draw, alpha))
        .sum();
    Ok(ratio(signal, noise, interference))
}

/// Fixed-rate threshold rule: the packet is decoded iff `sinr >= theta`.
#[inline]
pub fn attempt_success(sinr: f64, theta: f64) -> bool {
    sinr >= theta
}

/// Per-slot transmission probabilities of the interferers seen by one link.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivityModel {
    /// Every other link transmits with the same probability.
    Uniform(f64),
    /// A single interferer transmits with `prob`; everyone else is silent.
    Only { link: usize, prob: f64 },
    /// Individual probabilities indexed by link.
    PerLink(Vec<f64>),
}

impl ActivityModel {
    #[inline]
    pub fn prob(&self, k: usize) -> f64 {
        match self {
            ActivityModel::Uniform(p) => *p,
            ActivityModel::Only { link, prob } => {
                if *link == k {
                    *prob
                } else {
                    0.0
                }
            }
            ActivityModel::PerLink(v) => v.get(k).copied().unwrap_or(0.0),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        let valid = match self {
            ActivityModel::Uniform(p) => ok(*p),
            ActivityModel::Only { prob, .. } => ok(*prob),
            ActivityModel::PerLink(v) => v.len() == n && v.iter().all(|&p| ok(p)),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::invalid("activity probabilities must lie in [0, 1] and cover every link"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessEstimate {
    pub prob: f64,
    pub std_error: f64,
    /// Zero for closed-form evaluations.
    pub samples: u64,
}

fn check_link(link: usize, real: &NetworkRealization) -> Result<()> {
    if real.is_empty() {
        return Err(Error::EmptyRealization);
    }
    if link >= real.len() {
        return Err(Error::LinkOutOfRange { index: link, len: real.len() });
    }
    Ok(())
}

/// Monte-Carlo estimate of `P(SINR >= theta)` for `link`, averaging over
/// fading and independent per-slot interferer activity.
///
/// Draws are addressed by `(transmitter, sample)` under one key taken from
/// `stream`, so two calls with equal streams share every fading and activity
/// draw: the estimate is then pointwise monotone in `theta` and in each
/// activity probability.
pub fn conditional_success_prob(
    link: usize,
    real: &NetworkRealization,
    activity: &ActivityModel,
    channel: &ChannelParams,
    mc_samples: u64,
    stream: &mut RngStream,
) -> Result<SuccessEstimate> {
    check_link(link, real)?;
    activity.validate(real.len())?;
    if mc_samples == 0 {
        return Err(Error::invalid("mc_samples must be at least 1"));
    }
    let alpha = channel.alpha;
    let own = gain_from_sq(real.tx_rx_distance_sq(link, link), alpha);
    let draws = stream.fork_keyed();
    // Strongest interferers first, with suffix sums of their path gains.
    let mut interferers: Vec<(u64, f64, f64)> = (0..real.len())
        .filter(|&k| k != link)
        .filter_map(|k| {
            let a = activity.prob(k);
            (a > 0.0).then(|| (draws.stream_key(k as u64, 1), a, gain_from_sq(real.tx_rx_distance_sq(k, link), alpha)))
        })
        .collect();
    interferers.sort_by(|x, y| y.2.total_cmp(&x.2));
    let mut tail = vec![0.0; interferers.len() + 1];
    for j in (0..interferers.len()).rev() {
        tail[j] = (tail[j + 1] + interferers[j].2).next_up();
    }
    let rayleigh = channel.fading == FadingModel::Rayleigh;
    let max_fading = if rayleigh { EXP_DRAW_MAX } else { 1.0 };
    let own_key = draws.stream_key(link as u64, 0);
    let mut successes = 0u64;
    for m in 0..mc_samples {
        let h0 = if rayleigh { exponential_at(own_key, m) } else { 1.0 };
        let signal = h0 * own;
        let budget = signal / channel.theta - channel.noise;
        let certain = budget * (1.0 - 1e-9);
        let mut interference = 0.0;
        let mut decided = None;
        for (j, &(key, a, g)) in interferers.iter().enumerate() {
            if interference + max_fading * tail[j] < certain {
                decided = Some(true);
                break;
            }
            // Position 2m decides activity, 2m+1 is the fading gain.
            if uniform_at(key, 2 * m) < a {
                let h = if rayleigh { exponential_at(key, 2 * m + 1) } else { 1.0 };
                interference += h * g;
                if interference > budget && !attempt_success(ratio(signal, channel.noise, interference), channel.theta) {
                    decided = Some(false);
                    break;
                }
            }
        }
        if decided.unwrap_or_else(|| attempt_success(ratio(signal, channel.noise, interference), channel.theta)) {
            successes += 1;
        }
    }
    let prob = successes as f64 / mc_samples as f64;
    Ok(SuccessEstimate { prob, std_error: (prob * (1.0 - prob) / mc_samples as f64).sqrt(), samples: mc_samples })
}

/// Closed-form success probability under Rayleigh fading:
/// `exp(-θN/S) · Π_k (1 - a_k·x_k/(1+x_k))` with `x_k = θ·G_k/S`.
pub fn rayleigh_success_prob(
    link: usize,
    real: &NetworkRealization,
    activity: &ActivityModel,
    channel: &ChannelParams,
) -> Result<f64> {
    check_link(link, real)?;
    activity.validate(real.len())?;
    if channel.fading != FadingModel::Rayleigh {
        return Err(Error::invalid("closed-form success probability requires Rayleigh fading"));
    }
    let alpha = channel.alpha;
    let own = gain_from_sq(real.tx_rx_distance_sq(link, link), alpha);
    let scale = channel.theta / own;
    let mut log_q = -scale * channel.noise;
    for k in (0..real.len()).filter(|&k| k != link) {
        let a = activity.prob(k);
        if a > 0.0 {
            let x = scale * gain_from_sq(real.tx_rx_distance_sq(k, link), alpha);
            log_q += (-a * x / (1.0 + x)).ln_1p();
        }
    }
    Ok(log_q.exp())
}

/// Success probability of `link` with the estimator selected by `config`.
///
/// Monte-Carlo draws come from the estimation substream of this link, so
/// repeated calls with different activity models use common random numbers.
pub fn estimate_success(
    link: usize,
    real: &NetworkRealization,
    activity: &ActivityModel,
    config: &SimConfig,
) -> Result<SuccessEstimate> {
    let channel = ChannelParams::from(config);
    if config.success_estimator == SuccessEstimator::Exact && channel.fading == FadingModel::Rayleigh {
        let prob = rayleigh_success_prob(link, real, activity, &channel)?;
        return Ok(SuccessEstimate { prob, std_error: 0.0, samples: 0 });
    }
    let mut stream = derive_stream(config.seed, Substream::Estimation, link_entity(real.realization_id, link));
    conditional_success_prob(link, real, activity, &channel, config.mc_samples, &mut stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Link, Point};

    fn line_links(xs: &[(f64, f64)], side: f64) -> NetworkRealization {
        // Each pair is (tx_x, rx_x) on the horizontal line y = side / 2.
        let y = side / 2.0;
        let links = xs.iter().map(|&(t, r)| Link { tx: Point::new(t, y), rx: Point::new(r, y) }).collect();
        NetworkRealization::from_links(links, side, 0)
    }

    fn channel(theta: f64, alpha: f64, noise: f64) -> ChannelParams {
        ChannelParams { theta, alpha, noise, fading: FadingModel::Rayleigh }
    }

    #[test]
    fn path_loss_examples() {
        assert_eq!(path_loss(1.0, 4.0).unwrap(), 1.0);
        assert_eq!(path_loss(2.0, 4.0).unwrap(), 0.0625);
        assert!((path_loss(5.0, 3.0).unwrap() - 0.008).abs() < 1e-15);
        assert!(matches!(path_loss(0.0, 4.0), Err(Error::ZeroDistance)));
    }

    #[test]
    fn fast_gain_agrees_with_powf() {
        for d in [0.3, 1.0, 2.5, 17.0] {
            for alpha in [2.5, 3.0, 4.0, 5.5] {
                let a = gain_from_sq(d * d, alpha);
                let b = path_loss(d, alpha).unwrap();
                assert!((a - b).abs() <= 1e-12 * b);
            }
        }
    }

    #[test]
    fn lone_link_without_noise_has_infinite_sinr() {
        let real = line_links(&[(10.0, 11.0)], 100.0);
        let field = FadingField::new(1, 0, FadingModel::Rayleigh);
        let draw = SlotChannelDraw { field: &field, slot: 0 };
        assert_eq!(sinr(0, &[0], &real, &draw, 4.0, 0.0).unwrap(), f64::INFINITY);
        let noisy = sinr(0, &[0], &real, &draw, 4.0, 0.25).unwrap();
        assert!((noisy - draw.gain(0, 0) * 1.0 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn inactive_link_has_no_sinr() {
        let real = line_links(&[(10.0, 11.0), (20.0, 21.0)], 100.0);
        let field = FadingField::new(1, 0, FadingModel::Rayleigh);
        let draw = SlotChannelDraw { field: &field, slot: 0 };
        assert!(sinr(0, &[1], &real, &draw, 4.0, 0.0).is_err());
    }

    #[test]
    fn three_links_match_termwise_oracle() {
        let real = line_links(&[(10.0, 11.0), (13.0, 14.0), (7.5, 6.5)], 100.0);
        let field = FadingField::new(77, 0, FadingModel::Rayleigh);
        for slot in 0..20 {
            let draw = SlotChannelDraw { field: &field, slot };
            for i in 0..3 {
                let tx_rx = |k: usize| (real.links[k].tx.x - real.links[i].rx.x).abs();
                let signal = draw.gain(i, i) * tx_rx(i).powf(-3.5);
                let interference: f64 =
                    (0..3).filter(|&k| k != i).map(|k| draw.gain(k, i) * tx_rx(k).powf(-3.5)).sum();
                let expected = signal / (0.01 + interference);
                let got = sinr(i, &[0, 1, 2], &real, &draw, 3.5, 0.01).unwrap();
                assert!((got - expected).abs() <= 1e-12 * expected);
            }
        }
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        assert!(attempt_success(2.0, 2.0));
        assert!(!attempt_success(0.0, 1.0));
        assert!(attempt_success(f64::INFINITY, 1e9));
    }

    #[test]
    fn adding_a_transmitter_never_raises_sinr() {
        let real = line_links(&[(10.0, 11.0), (13.0, 14.0), (7.5, 6.5), (30.0, 31.0)], 100.0);
        let field = FadingField::new(5, 0, FadingModel::Rayleigh);
        for slot in 0..50 {
            let draw = SlotChannelDraw { field: &field, slot };
            let small = sinr(0, &[0, 1], &real, &draw, 4.0, 0.0).unwrap();
            let large = sinr(0, &[0, 1, 2, 3], &real, &draw, 4.0, 0.0).unwrap();
            assert!(large <= small);
        }
    }

    #[test]
    fn isolated_link_always_succeeds() {
        let real = line_links(&[(10.0, 11.0)], 100.0);
        let mut s = derive_stream(1, Substream::Estimation, 0);
        let est = conditional_success_prob(0, &real, &ActivityModel::Uniform(1.0), &channel(1.0, 4.0, 0.0), 1000, &mut s)
            .unwrap();
        assert_eq!(est.prob, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn empty_realization_is_an_error() {
        let real = NetworkRealization::from_links(vec![], 100.0, 0);
        let mut s = derive_stream(1, Substream::Estimation, 0);
        let r = conditional_success_prob(0, &real, &ActivityModel::Uniform(1.0), &channel(1.0, 4.0, 0.0), 10, &mut s);
        assert!(matches!(r, Err(Error::EmptyRealization)));
    }

    /// P(h0 >= t·h1) for independent unit exponentials by midpoint quadrature
    /// of `∫ e^{-x} P(h0 >= t x) dx = ∫ e^{-x(1+t)} dx`.
    fn two_exponential_quadrature(t: f64) -> f64 {
        let (upper, n) = (40.0, 400_000);
        let dx = upper / n as f64;
        (0..n).map(|i| (i as f64 + 0.5) * dx).map(|x| (-x).exp() * (-t * x).exp() * dx).sum()
    }

    #[test]
    fn single_interferer_matches_closed_ratio() {
        let real = line_links(&[(10.0, 11.0), (13.0, 14.0)], 100.0);
        // Receiver 0 at x=11, interferer at x=13: d = 2 = 2r.
        let n = 200_000;
        for (theta, alpha) in [(1.0, 4.0), (4.0, 3.0)] {
            let t = theta * (1.0f64 / 2.0).powf(alpha);
            let closed = 1.0 / (1.0 + t);
            assert!((closed - two_exponential_quadrature(t)).abs() < 1e-6);
            let mut s = derive_stream(3, Substream::Estimation, 1);
            let est = conditional_success_prob(
                0,
                &real,
                &ActivityModel::Only { link: 1, prob: 1.0 },
                &channel(theta, alpha, 0.0),
                n,
                &mut s,
            )
            .unwrap();
            assert!((est.prob - closed).abs() <= 3.0 * est.std_error, "{est:?} vs {closed}");
            let exact = rayleigh_success_prob(0, &real, &ActivityModel::Only { link: 1, prob: 1.0 }, &channel(theta, alpha, 0.0))
                .unwrap();
            assert!((exact - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_only_matches_exponential_tail() {
        let real = line_links(&[(10.0, 11.0), (13.0, 14.0)], 100.0);
        let (theta, noise) = (2.0, 0.3);
        let closed = (-theta * noise * 1.0f64.powf(4.0)).exp();
        let mut s = derive_stream(8, Substream::Estimation, 0);
        let est =
            conditional_success_prob(0, &real, &ActivityModel::Uniform(0.0), &channel(theta, 4.0, noise), 200_000, &mut s)
                .unwrap();
        assert!((est.prob - closed).abs() <= 3.0 * est.std_error);
    }

    #[test]
    fn estimate_is_monotone_under_common_numbers() {
        let real = line_links(&[(10.0, 11.0), (13.0, 14.0), (8.0, 9.0), (12.5, 12.0)], 100.0);
        let run = |theta: f64, act: f64| {
            let mut s = derive_stream(21, Substream::Estimation, 0);
            conditional_success_prob(0, &real, &ActivityModel::Uniform(act), &channel(theta, 4.0, 0.0), 5_000, &mut s)
                .unwrap()
                .prob
        };
        let mut last = f64::INFINITY;
        for theta in [0.1, 0.5, 1.0, 2.0, 8.0] {
            let q = run(theta, 0.5);
            assert!(q <= last);
            last = q;
        }
        let mut last = f64::INFINITY;
        for act in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let q = run(1.0, act);
            assert!(q <= last);
            last = q;
        }
    }
}
