//! Independent dense-matrix solution of the single-link queue.
//!
//! Builds the full transition matrix of the end-of-slot queue length at a
//! finite cap directly from the slot dynamics and solves `πP = π` by LU. It
//! shares no code with [`crate::markov`] so each can check the other.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default cap of the dense oracle.
pub const ORACLE_CAP: usize = 200;

/// Transition matrix of the queue length truncated to `0..=cap`. Arrivals
/// that would overflow the cap are lost.
pub fn transition_matrix(arrival: f64, service: f64, cap: usize) -> DMatrix<f64> {
    let n = cap + 1;
    let mut p = DMatrix::zeros(n, n);
    for q in 0..n {
        for (arrived, pa) in [(true, arrival), (false, 1.0 - arrival)] {
            let after = if arrived { (q + 1).min(cap) } else { q };
            if after == 0 {
                p[(q, 0)] += pa;
            } else {
                p[(q, after - 1)] += pa * service;
                p[(q, after)] += pa * (1.0 - service);
            }
        }
    }
    p
}

/// Stationary distribution of the truncated chain.
pub fn stationary(arrival: f64, service: f64, cap: usize) -> Result<Vec<f64>> {
    let p = transition_matrix(arrival, service, cap);
    let n = cap + 1;
    // (Pᵀ - I)π = 0 with the last equation replaced by Σπ = 1.
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or_else(|| Error::invalid("singular queue transition matrix"))?;
    Ok(pi.iter().map(|&x| x.max(0.0)).collect())
}

/// Delay distribution of a packet in the stationary truncated queue:
/// `P(D = d)` for `d = 1..=max_delay` (index 0 holds `d = 1`).
///
/// A packet arriving to `n` waiting packets departs after the `(n+1)`-th
/// success of a Bernoulli(`service`) sequence.
pub fn delay_pmf(arrival: f64, service: f64, cap: usize, max_delay: usize) -> Result<Vec<f64>> {
    let pi = stationary(arrival, service, cap)?;
    // nb[k][d] = P(k-th success at trial d), built by convolution.
    let mut pmf = vec![0.0; max_delay];
    let mut current = vec![0.0; max_delay + 1];
    current[0] = 1.0; // zero successes needed after zero trials
    for &weight in pi.iter() {
        // Advance `current` from "k successes" to "k+1 successes".
        let mut next = vec![0.0; max_delay + 1];
        let mut tail = 0.0;
        for d in 1..=max_delay {
            tail = tail * (1.0 - service) + current[d - 1];
            next[d] = tail * service;
        }
        for d in 1..=max_delay {
            pmf[d - 1] += weight * next[d];
        }
        current = next;
    }
    Ok(pmf)
}

/// Mean delay from the dense stationary distribution.
pub fn mean_delay(arrival: f64, service: f64, cap: usize) -> Result<f64> {
    if service <= 0.0 {
        return Err(Error::invalid("service probability must be positive"));
    }
    let pi = stationary(arrival, service, cap)?;
    let mean_queue: f64 = pi.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    Ok((1.0 + mean_queue) / service)
}
