//! Slotted-time interacting-queue engine.
//!
//! Every slot runs, in order: Bernoulli arrivals, ALOHA access draws, active
//! set selection under the [`SystemVariant`] rule, fading and SINR evaluation
//! for each link holding a real packet, and queue updates.
//!
//! Arrival and access uniforms are addressed by `(link, slot)` and fading gains
//! by `(transmitter, receiver, slot)`, so no draw depends on which others were
//! used. Two simulations of the same realization
//! and seed therefore see identical randomness under any pair of variants,
//! which is what makes the dominance comparisons hold sample path by sample
//! path.

use std::collections::VecDeque;
use std::io::Write;

use crate::config::{FadingModel, SystemVariant, ValidatedConfig};
use crate::error::{Error, Result};
use crate::geometry::{nearest_interferer, NetworkRealization};
use crate::phy::{attempt_success, gain_from_sq, ratio};
use crate::rng::{uniform_at, FadingField, KeyedDraws, Substream, EXP_DRAW_MAX};

/// FIFO of one link plus its counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkQueueState {
    /// Arrival slot of every queued packet, head first.
    pub fifo: VecDeque<u64>,
    /// Failed attempts of the current head-of-line packet.
    pub head_attempts: u32,
    pub arrivals: u64,
    pub delivered: u64,
    pub dropped: u64,
}

impl LinkQueueState {
    pub fn queue_len(&self) -> usize {
        self.fifo.len()
    }

    /// Arrivals equal packets queued, delivered or dropped.
    pub fn is_conserved(&self) -> bool {
        self.arrivals == self.fifo.len() as u64 + self.delivered + self.dropped
    }
}

/// Everything recorded about one link over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PerLinkStats {
    pub realization_id: u64,
    pub link_id: usize,
    pub variant: SystemVariant,
    /// Delay of each delivered packet in slots, arrival slot and success slot included.
    pub delays: Vec<u32>,
    pub attempts: u64,
    pub successes: u64,
    pub arrivals: u64,
    pub dropped: u64,
    /// Slots in which the link held at least one real packet after arrivals.
    pub busy_slots: u64,
    /// End-of-slot queue length every `sample_stride` slots.
    pub queue_samples: Vec<u32>,
    pub sample_stride: u64,
    /// Arrival slots of packets still queued at the end of the run.
    pub pending: Vec<u64>,
    pub horizon: u64,
    /// Filled in by empirical stability classification.
    pub stable: Option<bool>,
}

impl PerLinkStats {
    fn new(realization_id: u64, link_id: usize, variant: SystemVariant, sample_stride: u64) -> Self {
        PerLinkStats {
            realization_id,
            link_id,
            variant,
            delays: Vec::new(),
            attempts: 0,
            successes: 0,
            arrivals: 0,
            dropped: 0,
            busy_slots: 0,
            queue_samples: Vec::new(),
            sample_stride,
            pending: Vec::new(),
            horizon: 0,
            stable: None,
        }
    }

    pub fn delivered(&self) -> u64 {
        self.delays.len() as u64
    }

    pub fn final_queue_len(&self) -> usize {
        self.pending.len()
    }

    /// A link that never delivered carries no finite delay estimate.
    pub fn is_censored(&self) -> bool {
        self.delays.is_empty()
    }

    /// Mean over delivered packets.
    pub fn mean_delay(&self) -> Option<f64> {
        (!self.delays.is_empty())
            .then(|| self.delays.iter().map(|&d| d as f64).sum::<f64>() / self.delays.len() as f64)
    }

    /// Unbiased sample variance over delivered packets (zero for one packet).
    pub fn delay_variance(&self) -> Option<f64> {
        let mean = self.mean_delay()?;
        let n = self.delays.len();
        if n < 2 {
            return Some(0.0);
        }
        let ss: f64 = self.delays.iter().map(|&d| (d as f64 - mean).powi(2)).sum();
        Some(ss / (n - 1) as f64)
    }

    /// Mean over every arrived packet, a packet still queued at the end
    /// counting the delay it would have if delivered in the next slot.
    ///
    /// Each term is `min(true delay, horizon - arrival + 1)`, so this mean
    /// inherits any packet-by-packet delay ordering between coupled runs.
    pub fn horizon_mean_delay(&self) -> Option<f64> {
        if self.delays.is_empty() {
            return None;
        }
        let delivered: f64 = self.delays.iter().map(|&d| d as f64).sum();
        let queued: f64 = self.pending.iter().map(|&a| (self.horizon - a + 1) as f64).sum();
        Some((delivered + queued) / (self.delays.len() + self.pending.len()) as f64)
    }

    pub fn busy_fraction(&self) -> f64 {
        if self.horizon == 0 {
            0.0
        } else {
            self.busy_slots as f64 / self.horizon as f64
        }
    }
}

/// What happened in one slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotEvents {
    pub slot: u64,
    /// Transmitters radiating this slot, dummies included, ascending.
    pub transmitting: Vec<usize>,
    /// Links that attempted delivery of a real packet.
    pub attempted: Vec<usize>,
    pub succeeded: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// Per-experiment randomness coordinates of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSet {
    pub seed: u64,
    pub realization_id: u64,
}

impl StreamSet {
    pub fn new(seed: u64, realization_id: u64) -> Self {
        StreamSet { seed, realization_id }
    }

    pub fn for_realization(config: &ValidatedConfig, real: &NetworkRealization) -> Self {
        StreamSet::new(config.seed, real.realization_id)
    }

    /// Per-slot uniforms of `substream`, addressed by `(link, slot)`.
    pub fn slot_draws(&self, substream: Substream) -> SlotDraws {
        SlotDraws(KeyedDraws::for_substream(self.seed, substream, self.realization_id))
    }
}

/// One uniform per link and slot, independent of how many were used before.
#[derive(Debug, Clone, Copy)]
pub struct SlotDraws(KeyedDraws);

impl SlotDraws {
    #[inline]
    pub fn uniform(&self, link: usize, slot: u64) -> f64 {
        uniform_at(self.link_key(link), slot)
    }

    #[inline]
    pub fn link_key(&self, link: usize) -> u64 {
        self.0.stream_key(link as u64, 0)
    }
}

/// For every receiver, the other transmitters by decreasing path gain, with
/// suffix sums of those gains. Rows are stored back to back.
#[derive(Debug, Clone, Default)]
struct InterferenceTable {
    width: usize,
    order: Vec<u32>,
    gain: Vec<f64>,
    tail: Vec<f64>,
    key: Vec<u64>,
}

struct TableRow<'t> {
    order: &'t [u32],
    gain: &'t [f64],
    tail: &'t [f64],
    key: &'t [u64],
}

impl InterferenceTable {
    fn new(real: &NetworkRealization, alpha: f64, fading: &FadingField) -> Self {
        let n = real.len();
        let width = n.saturating_sub(1);
        let mut table = InterferenceTable {
            width,
            order: Vec::with_capacity(n * width),
            gain: Vec::with_capacity(n * width),
            tail: vec![0.0; n * width],
            key: Vec::with_capacity(n * width),
        };
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(width);
        for rx in 0..n {
            row.clear();
            row.extend((0..n).filter(|&k| k != rx).map(|k| (k as u32, gain_from_sq(real.tx_rx_distance_sq(k, rx), alpha))));
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            table.order.extend(row.iter().map(|r| r.0));
            table.gain.extend(row.iter().map(|r| r.1));
            table.key.extend(row.iter().map(|r| fading.pair_key(r.0 as usize, rx)));
            let base = rx * width;
            let mut acc = 0.0;
            for j in (0..width).rev() {
                acc += row[j].1;
                // Round the running sum up so it never understates the tail.
                acc = acc.next_up();
                table.tail[base + j] = acc;
            }
        }
        table
    }

    #[inline]
    fn row(&self, rx: usize) -> TableRow<'_> {
        let range = rx * self.width..(rx + 1) * self.width;
        TableRow {
            order: &self.order[range.clone()],
            gain: &self.gain[range.clone()],
            tail: &self.tail[range.clone()],
            key: &self.key[range],
        }
    }
}

/// One realization's slot engine.
pub struct Simulation<'a> {
    config: &'a ValidatedConfig,
    real: &'a NetworkRealization,
    variant: SystemVariant,
    observed: Vec<bool>,
    nearest: Vec<Option<usize>>,
    states: Vec<LinkQueueState>,
    stats: Vec<PerLinkStats>,
    arrival_keys: Vec<u64>,
    access_keys: Vec<u64>,
    own_fading_keys: Vec<u64>,
    fading: FadingField,
    own_gain: Vec<f64>,
    table: InterferenceTable,
    max_fading: f64,
    slot: u64,
    access: Vec<bool>,
    radiating: Vec<bool>,
    outcome: Vec<bool>,
    events: SlotEvents,
}

impl<'a> Simulation<'a> {
    /// Empty queues (one head packet per link for `Backlogged`). Under
    /// `FavorableDrop` every link is observed until [`Simulation::observe`] narrows it.
    pub fn new(
        config: &'a ValidatedConfig,
        real: &'a NetworkRealization,
        variant: SystemVariant,
        streams: StreamSet,
    ) -> Self {
        let n = real.len();
        let stride = config.queue_sample_stride;
        let mut states = vec![LinkQueueState::default(); n];
        let mut stats: Vec<PerLinkStats> =
            (0..n).map(|i| PerLinkStats::new(real.realization_id, i, variant, stride)).collect();
        if variant == SystemVariant::Backlogged {
            for (s, st) in states.iter_mut().zip(stats.iter_mut()) {
                s.fifo.push_back(0);
                s.arrivals = 1;
                st.arrivals = 1;
            }
        }
        let nearest = if variant == SystemVariant::SimplifiedNearest {
            (0..n).map(|i| nearest_interferer(i, real).map(|x| x.index)).collect()
        } else {
            Vec::new()
        };
        let alpha = config.path_loss_exponent;
        let arrivals = streams.slot_draws(Substream::Arrivals);
        let access = streams.slot_draws(Substream::Access);
        let fading = FadingField::new(streams.seed, streams.realization_id, config.fading);
        Simulation {
            config,
            real,
            variant,
            observed: vec![true; n],
            nearest,
            states,
            stats,
            arrival_keys: (0..n).map(|i| arrivals.link_key(i)).collect(),
            access_keys: (0..n).map(|i| access.link_key(i)).collect(),
            own_fading_keys: (0..n).map(|i| fading.pair_key(i, i)).collect(),
            fading,
            own_gain: (0..n).map(|i| gain_from_sq(real.tx_rx_distance_sq(i, i), alpha)).collect(),
            table: if variant == SystemVariant::SimplifiedNearest {
                InterferenceTable::default()
            } else {
                InterferenceTable::new(real, alpha, &fading)
            },
            max_fading: match config.fading {
                FadingModel::Rayleigh => EXP_DRAW_MAX,
                FadingModel::None => 1.0,
            },
            slot: 0,
            access: vec![false; n],
            radiating: vec![false; n],
            outcome: Vec::new(),
            events: SlotEvents::default(),
        }
    }

    /// Restricts the observed links of a `FavorableDrop` run.
    pub fn observe(mut self, links: &[usize]) -> Self {
        self.observed.iter_mut().for_each(|o| *o = false);
        for &l in links {
            if let Some(o) = self.observed.get_mut(l) {
                *o = true;
            }
        }
        self
    }

    pub fn variant(&self) -> SystemVariant {
        self.variant
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn states(&self) -> &[LinkQueueState] {
        &self.states
    }

    pub fn queue_len(&self, link: usize) -> usize {
        self.states[link].fifo.len()
    }

    pub fn stats(&self) -> &[PerLinkStats] {
        &self.stats
    }

    /// Advances one slot.
    pub fn step(&mut self) -> Result<&SlotEvents> {
        let n = self.real.len();
        let t = self.slot;
        let xi = self.config.arrival_rate;
        let p = self.config.access_prob;
        let variant = self.variant;

        self.events.slot = t;
        self.events.transmitting.clear();
        self.events.attempted.clear();
        self.events.succeeded.clear();
        self.events.dropped.clear();

        // (1) arrivals, (2) access, (3) who radiates and who carries a real
        // packet. Access is drawn only where the variant can use it; the draws
        // are addressed by (link, slot), so skipping one shifts no other.
        let all_access = matches!(
            variant,
            SystemVariant::Dominant | SystemVariant::Backlogged | SystemVariant::SimplifiedNearest
        );
        for i in 0..n {
            let state = &mut self.states[i];
            if variant != SystemVariant::Backlogged && uniform_at(self.arrival_keys[i], t) < xi {
                state.fifo.push_back(t);
                state.arrivals += 1;
                self.stats[i].arrivals += 1;
            }
            let has_packet = !state.fifo.is_empty();
            let access = (all_access || has_packet) && uniform_at(self.access_keys[i], t) < p;
            self.access[i] = access;
            if has_packet {
                self.stats[i].busy_slots += 1;
            }
            let radiates = access && (has_packet || variant == SystemVariant::Dominant);
            self.radiating[i] = radiates;
            if radiates {
                self.events.transmitting.push(i);
                if has_packet {
                    self.events.attempted.push(i);
                }
            }
        }

        // (4)-(5) fading and success decisions, (6) queue updates.
        let attempted = std::mem::take(&mut self.events.attempted);
        let mut outcome = std::mem::take(&mut self.outcome);
        outcome.clear();
        outcome.extend(attempted.iter().map(|&i| self.decide(i)));
        for (&i, &ok) in attempted.iter().zip(&outcome) {
            let state = &mut self.states[i];
            let stats = &mut self.stats[i];
            stats.attempts += 1;
            if !ok {
                state.head_attempts += 1;
                continue;
            }
            self.events.succeeded.push(i);
            let arrival = state.fifo.pop_front().ok_or_else(|| Error::EngineFault {
                slot: t,
                message: format!("link {i} succeeded with an empty queue"),
            })?;
            state.delivered += 1;
            state.head_attempts = 0;
            stats.successes += 1;
            stats.delays.push((t - arrival + 1) as u32);
            if variant == SystemVariant::Backlogged {
                state.fifo.push_back(t + 1);
                state.arrivals += 1;
                stats.arrivals += 1;
            }
        }
        self.events.attempted = attempted;
        self.outcome = outcome;

        if variant == SystemVariant::FavorableDrop {
            for i in 0..n {
                if self.observed[i] || self.states[i].fifo.is_empty() {
                    continue;
                }
                let state = &mut self.states[i];
                while state.fifo.pop_front().is_some() {
                    state.dropped += 1;
                    self.stats[i].dropped += 1;
                    self.events.dropped.push(i);
                }
                state.head_attempts = 0;
            }
        }
        // Arrivals keep the balance on their own; only served or dropped links can break it.
        for &i in self.events.attempted.iter().chain(&self.events.dropped) {
            if !self.states[i].is_conserved() {
                return Err(Error::EngineFault { slot: t, message: format!("conservation broken at link {i}") });
            }
        }

        self.slot += 1;
        let stride = self.config.queue_sample_stride;
        if self.slot.is_multiple_of(stride) {
            for i in 0..n {
                self.stats[i].queue_samples.push(self.states[i].fifo.len() as u32);
            }
        }
        Ok(&self.events)
    }

    /// Success decision for link `i` in the current slot.
    ///
    /// Interferers are scanned nearest first. The scan stops with a failure
    /// once the partial interference already breaks the threshold, and with a
    /// success once even maximal fading on every remaining transmitter could
    /// not, so each decision equals the one from the full SINR sum.
    fn decide(&self, i: usize) -> bool {
        let t = self.slot;
        let theta = self.config.sinr_threshold;
        let noise = self.config.noise_power;
        let signal = self.fading.gain_at(self.own_fading_keys[i], t) * self.own_gain[i];

        if self.variant == SystemVariant::SimplifiedNearest {
            let mut interference = 0.0;
            if let Some(j) = self.nearest[i] {
                if self.access[j] {
                    let g = gain_from_sq(self.real.tx_rx_distance_sq(j, i), self.config.path_loss_exponent);
                    interference = self.fading.gain(j, i, t) * g;
                }
            }
            return attempt_success(ratio(signal, noise, interference), theta);
        }

        let budget = signal / theta - noise;
        let certain = budget * (1.0 - 1e-9);
        let row = self.table.row(i);
        let mut interference = 0.0;
        for (j, &k) in row.order.iter().enumerate() {
            if interference + self.max_fading * row.tail[j] < certain {
                return true;
            }
            let k = k as usize;
            if !self.radiating[k] {
                continue;
            }
            interference += self.fading.gain_at(row.key[j], t) * row.gain[j];
            if interference > budget && !attempt_success(ratio(signal, noise, interference), theta) {
                return false;
            }
        }
        attempt_success(ratio(signal, noise, interference), theta)
    }

    /// Runs `slots` further slots.
    pub fn advance(&mut self, slots: u64) -> Result<()> {
        for _ in 0..slots {
            self.step()?;
        }
        Ok(())
    }

    /// Consumes the engine and returns the per-link statistics so far.
    pub fn finish(mut self) -> Vec<PerLinkStats> {
        let horizon = self.slot;
        for (st, state) in self.stats.iter_mut().zip(&self.states) {
            st.horizon = horizon;
            st.pending = state.fifo.iter().copied().collect();
        }
        self.stats
    }

    /// Runs `horizon` slots from the initial state and returns the statistics.
    pub fn run(mut self, horizon: u64) -> Result<Vec<PerLinkStats>> {
        self.advance(horizon)?;
        Ok(self.finish())
    }
}

/// Simulates `config.horizon` slots of `variant` on `real`.
pub fn run(
    config: &ValidatedConfig,
    real: &NetworkRealization,
    variant: SystemVariant,
    streams: StreamSet,
) -> Result<Vec<PerLinkStats>> {
    Simulation::new(config, real, variant, streams).run(config.horizon)
}

/// Simulates the favorable system once per observed-link group and keeps,
/// for each link, the statistics of the run in which it was observed.
/// Link `i` belongs to group `i % groups`.
pub fn run_favorable(
    config: &ValidatedConfig,
    real: &NetworkRealization,
    groups: usize,
    streams: StreamSet,
) -> Result<Vec<PerLinkStats>> {
    let groups = groups.max(1);
    let n = real.len();
    let mut out: Vec<Option<PerLinkStats>> = vec![None; n];
    for g in 0..groups.min(n.max(1)) {
        let members: Vec<usize> = (g..n).step_by(groups).collect();
        let stats = Simulation::new(config, real, SystemVariant::FavorableDrop, streams)
            .observe(&members)
            .run(config.horizon)?;
        for (i, st) in stats.into_iter().enumerate() {
            if i % groups == g {
                out[i] = Some(st);
            }
        }
    }
    Ok(out.into_iter().map(|s| s.expect("every link belongs to one group")).collect())
}

/// Local delay of one link under the backlogged assumption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalDelay {
    pub mean: f64,
    pub variance: f64,
    pub count: u64,
    /// No packet delivered over the horizon; `mean` and `variance` are NaN.
    pub censored: bool,
}

impl LocalDelay {
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            (self.variance / self.count as f64).sqrt()
        }
    }
}

fn local_delay(delays: &[u32]) -> LocalDelay {
    if delays.is_empty() {
        return LocalDelay { mean: f64::NAN, variance: f64::NAN, count: 0, censored: true };
    }
    let n = delays.len() as f64;
    let mean = delays.iter().map(|&d| d as f64).sum::<f64>() / n;
    let variance = if delays.len() < 2 {
        0.0
    } else {
        delays.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    LocalDelay { mean, variance, count: delays.len() as u64, censored: false }
}

fn require_backlogged(stats: &[PerLinkStats]) -> Result<()> {
    if stats.iter().any(|s| s.variant != SystemVariant::Backlogged) {
        return Err(Error::invalid("local delay statistics need a backlogged run"));
    }
    Ok(())
}

/// Per-link mean and variance of the time to deliver one packet.
pub fn local_delay_stats(stats: &[PerLinkStats]) -> Result<Vec<LocalDelay>> {
    require_backlogged(stats)?;
    Ok(stats.iter().map(|s| local_delay(&s.delays)).collect())
}

/// Local-delay statistics as they stood after the first `horizon` slots of a
/// backlogged run: only packets completed by then are counted.
pub fn local_delay_stats_at(stats: &[PerLinkStats], horizon: u64) -> Result<Vec<LocalDelay>> {
    require_backlogged(stats)?;
    Ok(stats
        .iter()
        .map(|s| {
            let mut elapsed = 0u64;
            let done = s
                .delays
                .iter()
                .take_while(|&&d| {
                    elapsed += d as u64;
                    elapsed <= horizon
                })
                .count();
            local_delay(&s.delays[..done])
        })
        .collect())
}

/// Writes the per-link statistics table.
pub fn write_link_stats_csv<W: Write>(out: W, stats: &[PerLinkStats]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record([
        "realization_id",
        "link_id",
        "delivered",
        "dropped",
        "mean_delay",
        "var_delay",
        "censored_flag",
        "final_queue_len",
    ])?;
    for s in stats {
        w.write_record([
            s.realization_id.to_string(),
            s.link_id.to_string(),
            s.delivered().to_string(),
            s.dropped.to_string(),
            s.mean_delay().unwrap_or(f64::NAN).to_string(),
            s.delay_variance().unwrap_or(f64::NAN).to_string(),
            u8::from(s.is_censored()).to_string(),
            s.final_queue_len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::geometry::{sample_bipolar, Link, Point};
    use crate::phy::{sinr, SlotChannelDraw};
    use crate::rng::derive_stream;

    fn cfg(edit: impl FnOnce(&mut SimConfig)) -> ValidatedConfig {
        let mut c = SimConfig { horizon: 2_000, ..SimConfig::default() };
        edit(&mut c);
        c.validate().unwrap()
    }

    fn lone_link() -> NetworkRealization {
        NetworkRealization::from_links(vec![Link { tx: Point::new(5.0, 5.0), rx: Point::new(6.0, 5.0) }], 100.0, 0)
    }

    fn sampled(config: &ValidatedConfig, id: u64) -> NetworkRealization {
        sample_bipolar(config, &mut derive_stream(config.seed, Substream::Geometry, id), id)
    }

    #[test]
    fn no_access_means_pure_accumulation() {
        let c = cfg(|c| c.access_prob = 0.0);
        let real = sampled(&c, 0);
        let stats = run(&c, &real, SystemVariant::Original, StreamSet::for_realization(&c, &real)).unwrap();
        let streams = StreamSet::for_realization(&c, &real);
        for (i, s) in stats.iter().enumerate() {
            // Replay the arrival stream to get the Binomial(T, ξ) count.
            let arr = streams.slot_draws(Substream::Arrivals);
            let expected = (0..c.horizon).filter(|&t| arr.uniform(i, t) < c.arrival_rate).count();
            assert_eq!(s.final_queue_len(), expected);
            assert_eq!(s.attempts, 0);
        }
    }

    #[test]
    fn no_traffic_means_no_statistics() {
        let c = cfg(|c| c.arrival_rate = 0.0);
        let real = sampled(&c, 1);
        let stats = run(&c, &real, SystemVariant::Original, StreamSet::for_realization(&c, &real)).unwrap();
        assert!(stats.iter().all(|s| s.arrivals == 0 && s.attempts == 0 && s.delays.is_empty() && s.busy_slots == 0));
    }

    #[test]
    fn zero_horizon_gives_empty_statistics() {
        let c = cfg(|_| {});
        let real = sampled(&c, 2);
        let stats = Simulation::new(&c, &real, SystemVariant::Original, StreamSet::for_realization(&c, &real))
            .run(0)
            .unwrap();
        assert_eq!(stats.len(), real.len());
        assert!(stats.iter().all(|s| s.horizon == 0 && s.arrivals == 0 && s.queue_samples.is_empty()));
    }

    #[test]
    fn lone_link_always_succeeds_when_scheduled() {
        let c = cfg(|c| {
            c.arrival_rate = 0.3;
            c.horizon = 5_000;
        });
        let real = lone_link();
        let mut sim = Simulation::new(&c, &real, SystemVariant::Original, StreamSet::new(c.seed, 0));
        for _ in 0..c.horizon {
            let ev = sim.step().unwrap();
            assert_eq!(ev.attempted, ev.succeeded);
        }
        let st = &sim.finish()[0];
        assert_eq!(st.attempts, st.successes);
        assert!(st.delays.iter().all(|&d| d >= 1));
    }

    #[test]
    fn conservation_and_fifo_hold_for_every_variant() {
        let c = cfg(|c| {
            c.lambda = 0.02;
            c.window_side = 40.0;
            c.arrival_rate = 0.3;
            c.horizon = 1_000;
        });
        let real = sampled(&c, 3);
        for variant in SystemVariant::ALL {
            let mut sim = Simulation::new(&c, &real, variant, StreamSet::for_realization(&c, &real)).observe(&[0, 3]);
            for _ in 0..c.horizon {
                sim.step().unwrap();
                for s in sim.states() {
                    assert!(s.is_conserved());
                    assert!(s.fifo.iter().zip(s.fifo.iter().skip(1)).all(|(a, b)| a <= b));
                    if variant != SystemVariant::FavorableDrop {
                        assert_eq!(s.dropped, 0);
                    }
                }
            }
            for s in sim.finish() {
                assert_eq!(s.successes, s.delivered());
                assert!(s.delays.iter().all(|&d| d >= 1));
            }
        }
    }

    #[test]
    fn engine_decisions_match_sinr_function() {
        let c = cfg(|c| {
            c.lambda = 0.05;
            c.window_side = 30.0;
            c.noise_power = 0.01;
        });
        let real = sampled(&c, 4);
        let streams = StreamSet::for_realization(&c, &real);
        let field = FadingField::new(streams.seed, streams.realization_id, FadingModel::Rayleigh);
        let mut sim = Simulation::new(&c, &real, SystemVariant::Dominant, streams);
        for _ in 0..300 {
            let ev = sim.step().unwrap().clone();
            let draw = SlotChannelDraw { field: &field, slot: ev.slot };
            for &i in &ev.attempted {
                let s = sinr(i, &ev.transmitting, &real, &draw, c.path_loss_exponent, c.noise_power).unwrap();
                assert_eq!(attempt_success(s, c.sinr_threshold), ev.succeeded.contains(&i));
            }
        }
    }

    #[test]
    fn dominant_queues_dominate_original() {
        let c = cfg(|c| {
            c.arrival_rate = 0.2;
            c.horizon = 3_000;
        });
        for id in 0..2 {
            let real = sampled(&c, id);
            let streams = StreamSet::for_realization(&c, &real);
            let mut orig = Simulation::new(&c, &real, SystemVariant::Original, streams);
            let mut dom = Simulation::new(&c, &real, SystemVariant::Dominant, streams);
            for _ in 0..c.horizon {
                orig.step().unwrap();
                dom.step().unwrap();
                for i in 0..real.len() {
                    assert!(dom.queue_len(i) >= orig.queue_len(i));
                }
            }
        }
    }

    #[test]
    fn favorable_delays_are_pointwise_smaller() {
        let c = cfg(|c| {
            c.arrival_rate = 0.2;
            c.horizon = 3_000;
        });
        let real = sampled(&c, 7);
        let streams = StreamSet::for_realization(&c, &real);
        let orig = run(&c, &real, SystemVariant::Original, streams).unwrap();
        let fav = run_favorable(&c, &real, 8, streams).unwrap();
        for (o, f) in orig.iter().zip(&fav) {
            assert!(f.delivered() >= o.delivered());
            assert!(o.delays.iter().zip(&f.delays).all(|(a, b)| b <= a));
            assert_eq!(f.variant, SystemVariant::FavorableDrop);
        }
    }

    #[test]
    fn unobserved_favorable_links_hold_packets_one_slot() {
        let c = cfg(|c| c.arrival_rate = 0.5);
        let real = sampled(&c, 8);
        let mut sim =
            Simulation::new(&c, &real, SystemVariant::FavorableDrop, StreamSet::for_realization(&c, &real)).observe(&[0]);
        for _ in 0..500 {
            sim.step().unwrap();
            assert!(sim.states()[1..].iter().all(|s| s.fifo.is_empty()));
        }
    }

    #[test]
    fn backlogged_lone_link_is_geometric() {
        let c = cfg(|c| {
            c.access_prob = 0.3;
            c.horizon = 200_000;
        });
        let real = lone_link();
        let stats = run(&c, &real, SystemVariant::Backlogged, StreamSet::new(c.seed, 0)).unwrap();
        let ld = local_delay_stats(&stats).unwrap()[0];
        let p = c.access_prob;
        assert!((ld.mean - 1.0 / p).abs() <= 3.0 * ld.std_error());
        // Var of the sample variance for a geometric law is about μ4/n; a loose bound suffices.
        assert!((ld.variance - (1.0 - p) / (p * p)).abs() < 0.05 * (1.0 - p) / (p * p));
    }

    #[test]
    fn fixed_gains_full_access_is_all_or_nothing() {
        let c = cfg(|c| {
            c.fading = FadingModel::None;
            c.access_prob = 1.0;
            c.horizon = 500;
        });
        let real = sampled(&c, 9);
        let stats = run(&c, &real, SystemVariant::Backlogged, StreamSet::for_realization(&c, &real)).unwrap();
        for ld in local_delay_stats(&stats).unwrap() {
            assert!(ld.censored || (ld.mean == 1.0 && ld.variance == 0.0));
        }
    }

    #[test]
    fn prefix_local_delay_counts_completed_packets() {
        let c = cfg(|c| c.horizon = 1_000);
        let real = sampled(&c, 10);
        let stats = run(&c, &real, SystemVariant::Backlogged, StreamSet::for_realization(&c, &real)).unwrap();
        let full = local_delay_stats(&stats).unwrap();
        let same = local_delay_stats_at(&stats, 1_000).unwrap();
        assert_eq!(full, same);
        let half = local_delay_stats_at(&stats, 500).unwrap();
        assert!(half.iter().zip(&full).all(|(h, f)| h.count <= f.count));
        assert!(local_delay_stats(&run(&c, &real, SystemVariant::Original, StreamSet::new(1, 10)).unwrap()).is_err());
    }

    #[test]
    fn horizon_mean_counts_pending_packets() {
        let mut s = PerLinkStats::new(0, 0, SystemVariant::Original, 10);
        s.delays = vec![1, 3];
        s.pending = vec![8];
        s.horizon = 10;
        assert_eq!(s.mean_delay(), Some(2.0));
        assert_eq!(s.horizon_mean_delay(), Some((1.0 + 3.0 + 3.0) / 3.0));
    }

    #[test]
    fn stats_csv_layout() {
        let c = cfg(|c| c.horizon = 100);
        let real = lone_link();
        let stats = run(&c, &real, SystemVariant::Original, StreamSet::new(1, 0)).unwrap();
        let mut buf = Vec::new();
        write_link_stats_csv(&mut buf, &stats).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "realization_id,link_id,delivered,dropped,mean_delay,var_delay,censored_flag,final_queue_len\n"
        ));
        assert_eq!(text.lines().count(), 2);
    }
}
