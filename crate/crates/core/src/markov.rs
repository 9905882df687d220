//! Discrete-time Geo/Geo/1 queue with arrivals before service.
//!
//! Each slot a packet arrives with probability `ξ`; then, if the queue is
//! nonempty, the head packet departs with probability `μ`. The end-of-slot
//! queue length is a birth-death chain with up-rate `ξ(1-μ)` and down-rate
//! `(1-ξ)μ`.

/// Default truncation of the chain.
pub const QUEUE_CAP: usize = 10_000;
/// Default tail mass below which the chain is truncated early.
pub const TAIL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoGeo1 {
    pub arrival: f64,
    pub service: f64,
}

impl GeoGeo1 {
    pub fn new(arrival: f64, service: f64) -> Self {
        GeoGeo1 { arrival, service }
    }

    /// Loynes: stable iff `ξ < μ`, and trivially when nothing arrives.
    pub fn is_stable(&self) -> bool {
        self.arrival == 0.0 || self.arrival < self.service
    }

    fn up(&self) -> f64 {
        self.arrival * (1.0 - self.service)
    }

    fn down(&self) -> f64 {
        (1.0 - self.arrival) * self.service
    }

    /// Stationary end-of-slot queue-length distribution, truncated at `cap`
    /// states or once the unnormalized tail mass drops below `tail_tol`.
    /// `None` for an unstable queue.
    pub fn stationary(&self, cap: usize, tail_tol: f64) -> Option<Vec<f64>> {
        if !self.is_stable() {
            return None;
        }
        let (up, down) = (self.up(), self.down());
        let mut weights = vec![1.0];
        if up > 0.0 {
            let ratio = up / down;
            let mut w = 1.0;
            let mut total = 1.0;
            while weights.len() < cap {
                w *= ratio;
                weights.push(w);
                total += w;
                // Remaining geometric tail relative to the mass so far.
                if w * ratio / (1.0 - ratio) < tail_tol * total {
                    break;
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Some(weights)
    }

    /// Mean sojourn time in slots, arrival slot and departure slot included.
    /// A packet that finds `n` packets waiting needs `n + 1` services, each
    /// taking a geometric number of slots with mean `1/μ`.
    pub fn mean_delay(&self) -> Option<f64> {
        self.mean_delay_with(QUEUE_CAP, TAIL_TOLERANCE)
    }

    pub fn mean_delay_with(&self, cap: usize, tail_tol: f64) -> Option<f64> {
        if self.service <= 0.0 {
            return None;
        }
        let pi = self.stationary(cap, tail_tol)?;
        let mean_queue: f64 = pi.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        Some((1.0 + mean_queue) / self.service)
    }

    /// Closed form of [`GeoGeo1::mean_delay`]: `(1-ξ)/(μ-ξ)`.
    pub fn mean_delay_closed_form(&self) -> Option<f64> {
        (self.service > 0.0 && self.is_stable()).then(|| (1.0 - self.arrival) / (self.service - self.arrival))
    }
}
