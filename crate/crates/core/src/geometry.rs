//! Static Poisson bipolar deployments on a square torus.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::config::ValidatedConfig;
use crate::error::Result;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// A transmitter and its dedicated receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub tx: Point,
    pub rx: Point,
}

/// One sampled deployment. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRealization {
    pub links: Vec<Link>,
    pub window_side: f64,
    pub realization_id: u64,
}

impl NetworkRealization {
    pub fn from_links(links: Vec<Link>, window_side: f64, realization_id: u64) -> Self {
        NetworkRealization { links, window_side, realization_id }
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Toroidal distance from transmitter `tx` to receiver `rx`.
    #[inline]
    pub fn tx_rx_distance(&self, tx: usize, rx: usize) -> f64 {
        toroidal_distance(self.links[tx].tx, self.links[rx].rx, self.window_side)
    }

    #[inline]
    pub(crate) fn tx_rx_distance_sq(&self, tx: usize, rx: usize) -> f64 {
        toroidal_distance_sq(self.links[tx].tx, self.links[rx].rx, self.window_side)
    }
}

#[inline]
fn wrapped_gap(a: f64, b: f64, side: f64) -> f64 {
    let d = (a - b).abs();
    d.min(side - d)
}

#[inline]
pub(crate) fn toroidal_distance_sq(a: Point, b: Point, window_side: f64) -> f64 {
    let dx = wrapped_gap(a.x, b.x, window_side);
    let dy = wrapped_gap(a.y, b.y, window_side);
    dx * dx + dy * dy
}

/// Shortest distance between two points of the `[0, side)²` torus.
pub fn toroidal_distance(a: Point, b: Point, window_side: f64) -> f64 {
    toroidal_distance_sq(a, b, window_side).sqrt()
}

fn wrap(v: f64, side: f64) -> f64 {
    let w = v.rem_euclid(side);
    // rem_euclid of a tiny negative value rounds up to `side` itself.
    if w >= side {
        0.0
    } else {
        w
    }
}

/// Samples a Poisson bipolar deployment: Poisson(λL²) transmitters placed
/// uniformly, each with a receiver at `link_distance` in a uniform direction.
/// An empty realization is a legitimate outcome for small λL².
pub fn sample_bipolar(config: &ValidatedConfig, stream: &mut RngStream, realization_id: u64) -> NetworkRealization {
    let side = config.window_side;
    let mean = config.lambda * side * side;
    let count = if mean > 0.0 {
        // Poisson::new only fails for non-positive or non-finite means.
        Poisson::new(mean).expect("finite positive mean").sample(stream) as usize
    } else {
        0
    };
    let r = config.link_distance;
    let links = (0..count)
        .map(|_| {
            let tx = Point::new(stream.random::<f64>() * side, stream.random::<f64>() * side);
            let phi = stream.random::<f64>() * std::f64::consts::TAU;
            let rx = Point::new(wrap(tx.x + r * phi.cos(), side), wrap(tx.y + r * phi.sin(), side));
            Link { tx, rx }
        })
        .collect();
    NetworkRealization { links, window_side: side, realization_id }
}

/// The interfering transmitter closest to a link's receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferer {
    pub index: usize,
    pub distance: f64,
}

/// Nearest foreign transmitter to the receiver of `link`, lowest index on ties.
/// `None` when the realization has no other link.
pub fn nearest_interferer(link: usize, realization: &NetworkRealization) -> Option<Interferer> {
    let mut best: Option<(usize, f64)> = None;
    for k in (0..realization.len()).filter(|&k| k != link) {
        let d2 = realization.tx_rx_distance_sq(k, link);
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((k, d2));
        }
    }
    best.map(|(index, d2)| Interferer { index, distance: d2.sqrt() })
}

/// Writes `realization_id,link_id,tx_x,tx_y,rx_x,rx_y` rows.
pub fn write_realizations_csv<W: Write>(out: W, realizations: &[NetworkRealization]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["realization_id", "link_id", "tx_x", "tx_y", "rx_x", "rx_y"])?;
    for real in realizations {
        for (id, link) in real.links.iter().enumerate() {
            w.write_record([
                real.realization_id.to_string(),
                id.to_string(),
                link.tx.x.to_string(),
                link.tx.y.to_string(),
                link.rx.x.to_string(),
                link.rx.y.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
