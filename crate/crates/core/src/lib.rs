//! Delay and stability of interacting queues in static ultradense wireless
//! networks.
//!
//! Links of a Poisson bipolar deployment on a torus share a channel through
//! slotted ALOHA; a transmission succeeds when its SINR reaches a threshold.
//! The crate simulates the coupled queues ([`queuesim`]), the decoupled
//! comparison systems used to bound them, and evaluates ε-stability
//! ([`stability`]) and delay distributions ([`delay`]).
//!
//! ```
//! use udn_core::{experiment, SimConfig, SystemVariant};
//!
//! let config = SimConfig { lambda: 0.01, window_side: 50.0, horizon: 200, ..SimConfig::default() }
//!     .validate()
//!     .unwrap();
//! let ensemble = experiment::sample_ensemble(&config, 2);
//! let runs = experiment::run_ensemble(&config, &ensemble, SystemVariant::Original).unwrap();
//! assert_eq!(runs.len(), 2);
//! ```

pub mod config;
pub mod delay;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod markov;
pub mod oracle;
pub mod phy;
pub mod queuesim;
pub mod rng;
pub mod selfcheck;
pub mod stability;

pub use config::{
    validate_config, ConfigError, ConfigIssue, FadingModel, SimConfig, SuccessEstimator, SystemVariant,
    ValidatedConfig,
};
pub use delay::{CdfEstimate, FixedPointResult, LocalDelaySummary};
pub use error::{Error, Result};
pub use geometry::{Link, NetworkRealization, Point};
pub use phy::{ActivityModel, SlotChannelDraw, SuccessEstimate};
pub use queuesim::{LinkQueueState, PerLinkStats, Simulation, SlotEvents, StreamSet};
pub use rng::{derive_stream, RngStream, Substream};
pub use stability::{ConditionKind, NecessaryType, Regime, StabilityReport};
