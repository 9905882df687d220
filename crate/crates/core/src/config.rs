//! Experiment parameterization and its flat `key = value` file format.
//!
//! A [`SimConfig`] is plain data. [`SimConfig::validate`] checks every
//! invariant at once and either returns a [`ValidatedConfig`], which the rest
//! of the crate accepts, or a [`ConfigError`] listing each offending field.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use thiserror::Error;

/// Which queueing system the slot engine emulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemVariant {
    /// Fully interacting queues: a link transmits only when it holds a packet.
    Original,
    /// Links with empty queues still transmit dummy packets when granted access.
    Dominant,
    /// Observed links behave as in `Original`; every other link keeps a packet
    /// for exactly its arrival slot and then drops it unless delivered.
    FavorableDrop,
    /// Each link only sees its nearest interferer, which is always backlogged.
    SimplifiedNearest,
    /// Every queue is permanently nonempty.
    Backlogged,
}

impl SystemVariant {
    pub const ALL: [SystemVariant; 5] = [
        SystemVariant::Original,
        SystemVariant::Dominant,
        SystemVariant::FavorableDrop,
        SystemVariant::SimplifiedNearest,
        SystemVariant::Backlogged,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemVariant::Original => "original",
            SystemVariant::Dominant => "dominant",
            SystemVariant::FavorableDrop => "favorable_drop",
            SystemVariant::SimplifiedNearest => "simplified_nearest",
            SystemVariant::Backlogged => "backlogged",
        }
    }
}

impl fmt::Display for SystemVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SystemVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| "one of original, dominant, favorable_drop, simplified_nearest, backlogged".into())
    }
}

/// Small-scale fading applied to every transmitter-receiver pair per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FadingModel {
    /// Unit-mean exponential power gains, i.i.d. across slots and pairs.
    Rayleigh,
    /// All gains fixed to one.
    None,
}

impl FadingModel {
    pub fn as_str(self) -> &'static str {
        match self {
            FadingModel::Rayleigh => "rayleigh",
            FadingModel::None => "none",
        }
    }
}

impl FromStr for FadingModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rayleigh" => Ok(FadingModel::Rayleigh),
            "none" => Ok(FadingModel::None),
            _ => Err("one of rayleigh, none".into()),
        }
    }
}

/// How per-link success probabilities are estimated for the analytical modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuccessEstimator {
    /// Closed-form average over Rayleigh fading and independent activity.
    /// Falls back to Monte Carlo when fading is disabled.
    Exact,
    /// Plain Monte Carlo with `mc_samples` draws per link.
    MonteCarlo,
}

impl SuccessEstimator {
    pub fn as_str(self) -> &'static str {
        match self {
            SuccessEstimator::Exact => "exact",
            SuccessEstimator::MonteCarlo => "monte_carlo",
        }
    }
}

impl FromStr for SuccessEstimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(SuccessEstimator::Exact),
            "monte_carlo" => Ok(SuccessEstimator::MonteCarlo),
            _ => Err("one of exact, monte_carlo".into()),
        }
    }
}

/// Full parameterization of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Transmitter intensity in links per square meter.
    pub lambda: f64,
    /// Side of the square torus in meters.
    pub window_side: f64,
    /// Transmitter-receiver distance in meters.
    pub link_distance: f64,
    /// ALOHA access probability per slot.
    pub access_prob: f64,
    /// Bernoulli packet arrival probability per slot.
    pub arrival_rate: f64,
    pub sinr_threshold: f64,
    pub path_loss_exponent: f64,
    /// Linear noise power relative to unit transmit power.
    pub noise_power: f64,
    /// Number of slots simulated.
    pub horizon: u64,
    pub seed: u64,
    pub variant: SystemVariant,
    /// Tolerated fraction of unstable queues.
    pub epsilon: f64,
    pub fading: FadingModel,
    pub success_estimator: SuccessEstimator,
    pub mc_samples: u64,
    /// Queue lengths are sampled every this many slots.
    pub queue_sample_stride: u64,
    /// Number of disjoint observed-link groups used to build favorable-system bounds.
    pub favorable_groups: u64,
    /// Empirical instability needs a queue slope above this multiple of the arrival rate...
    pub instability_slope_factor: f64,
    /// ...and a final queue length above this many packets.
    pub instability_min_queue: f64,
    /// Relative growth of the pooled local delay on horizon doubling that flags divergence.
    pub divergence_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            lambda: 0.05,
            window_side: 100.0,
            link_distance: 1.0,
            access_prob: 0.5,
            arrival_rate: 0.1,
            sinr_threshold: 1.0,
            path_loss_exponent: 4.0,
            noise_power: 0.0,
            horizon: 10_000,
            seed: 1,
            variant: SystemVariant::Original,
            epsilon: 0.1,
            fading: FadingModel::Rayleigh,
            success_estimator: SuccessEstimator::Exact,
            mc_samples: 2_000,
            queue_sample_stride: 10,
            favorable_groups: 16,
            instability_slope_factor: 0.1,
            instability_min_queue: 50.0,
            divergence_threshold: 0.2,
        }
    }
}

/// One problem found while parsing or validating a configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigIssue {
    Malformed { line: usize, text: String },
    UnknownKey { line: usize, key: String },
    DuplicateKey { line: usize, key: String },
    BadValue { field: &'static str, value: String, expected: String },
    OutOfRange { field: &'static str, value: String, constraint: &'static str },
    /// Mean interference of an infinite Poisson field diverges unless the exponent exceeds 2.
    DivergentInterference { alpha: f64 },
}

impl ConfigIssue {
    /// Name of the offending field or key, if the issue is tied to one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigIssue::Malformed { .. } => None,
            ConfigIssue::UnknownKey { key, .. } | ConfigIssue::DuplicateKey { key, .. } => Some(key),
            ConfigIssue::BadValue { field, .. } | ConfigIssue::OutOfRange { field, .. } => Some(field),
            ConfigIssue::DivergentInterference { .. } => Some("path_loss_exponent"),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigIssue::Malformed { line, text } => {
                write!(f, "line {line}: expected `key = value`, found `{text}`")
            }
            ConfigIssue::UnknownKey { line, key } => write!(f, "line {line}: unknown key `{key}`"),
            ConfigIssue::DuplicateKey { line, key } => write!(f, "line {line}: duplicate key `{key}`"),
            ConfigIssue::BadValue { field, value, expected } => {
                write!(f, "{field}: cannot parse `{value}`, expected {expected}")
            }
            ConfigIssue::OutOfRange { field, value, constraint } => {
                write!(f, "{field} = {value} violates {constraint}")
            }
            ConfigIssue::DivergentInterference { alpha } => write!(
                f,
                "path_loss_exponent = {alpha} must exceed 2: with a smaller exponent the mean \
                 aggregate interference of a planar Poisson field is infinite"
            ),
        }
    }
}

/// Every issue found in a configuration, in discovery order.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl ConfigError {
    pub fn fields(&self) -> Vec<&str> {
        self.issues.iter().filter_map(ConfigIssue::field).collect()
    }

    pub fn has_field(&self, field: &str) -> bool {
        self.fields().contains(&field)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration")?;
        for issue in &self.issues {
            write!(f, "\n  - {issue}")?;
        }
        Ok(())
    }
}

/// A configuration whose invariants have been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(SimConfig);

impl ValidatedConfig {
    pub fn into_inner(self) -> SimConfig {
        self.0
    }

    /// Applies `edit` to a copy and validates the result.
    pub fn modified(&self, edit: impl FnOnce(&mut SimConfig)) -> Result<ValidatedConfig, ConfigError> {
        let mut next = self.0.clone();
        edit(&mut next);
        validate_config(next)
    }
}

impl Deref for ValidatedConfig {
    type Target = SimConfig;

    fn deref(&self) -> &SimConfig {
        &self.0
    }
}

pub fn validate_config(config: SimConfig) -> Result<ValidatedConfig, ConfigError> {
    let mut issues = Vec::new();
    let mut check = |ok: bool, field: &'static str, value: String, constraint: &'static str| {
        if !ok {
            issues.push(ConfigIssue::OutOfRange { field, value, constraint });
        }
    };
    let c = &config;
    let unit = |x: f64| (0.0..=1.0).contains(&x);

    check(c.lambda >= 0.0 && c.lambda.is_finite(), "lambda", c.lambda.to_string(), "lambda >= 0");
    check(
        c.window_side > 0.0 && c.window_side.is_finite(),
        "window_side",
        c.window_side.to_string(),
        "window_side > 0",
    );
    check(
        c.link_distance > 0.0 && c.link_distance < c.window_side / 2.0,
        "link_distance",
        c.link_distance.to_string(),
        "0 < link_distance < window_side / 2",
    );
    check(unit(c.access_prob), "access_prob", c.access_prob.to_string(), "access_prob in [0, 1]");
    check(unit(c.arrival_rate), "arrival_rate", c.arrival_rate.to_string(), "arrival_rate in [0, 1]");
    check(unit(c.epsilon), "epsilon", c.epsilon.to_string(), "epsilon in [0, 1]");
    check(
        c.sinr_threshold > 0.0 && c.sinr_threshold.is_finite(),
        "sinr_threshold",
        c.sinr_threshold.to_string(),
        "sinr_threshold > 0",
    );
    check(
        c.noise_power >= 0.0 && c.noise_power.is_finite(),
        "noise_power",
        c.noise_power.to_string(),
        "noise_power >= 0",
    );
    check(c.horizon >= 1, "horizon", c.horizon.to_string(), "horizon >= 1");
    check(c.mc_samples >= 1, "mc_samples", c.mc_samples.to_string(), "mc_samples >= 1");
    check(
        c.queue_sample_stride >= 1,
        "queue_sample_stride",
        c.queue_sample_stride.to_string(),
        "queue_sample_stride >= 1",
    );
    check(
        c.favorable_groups >= 1,
        "favorable_groups",
        c.favorable_groups.to_string(),
        "favorable_groups >= 1",
    );
    check(
        c.instability_slope_factor >= 0.0,
        "instability_slope_factor",
        c.instability_slope_factor.to_string(),
        "instability_slope_factor >= 0",
    );
    check(
        c.instability_min_queue >= 0.0,
        "instability_min_queue",
        c.instability_min_queue.to_string(),
        "instability_min_queue >= 0",
    );
    check(
        c.divergence_threshold >= 0.0,
        "divergence_threshold",
        c.divergence_threshold.to_string(),
        "divergence_threshold >= 0",
    );
    if c.path_loss_exponent.is_nan() || c.path_loss_exponent <= 2.0 || !c.path_loss_exponent.is_finite() {
        issues.push(ConfigIssue::DivergentInterference { alpha: c.path_loss_exponent });
    }

    if issues.is_empty() {
        Ok(ValidatedConfig(config))
    } else {
        Err(ConfigError { issues })
    }
}

impl SimConfig {
    pub fn validate(self) -> Result<ValidatedConfig, ConfigError> {
        validate_config(self)
    }

    /// Parses the `key = value` format. Keys absent from the text keep their
    /// default; unknown or repeated keys are rejected. No range checks here.
    pub fn from_kv_str(text: &str) -> Result<SimConfig, ConfigError> {
        let mut config = SimConfig::default();
        let mut issues = Vec::new();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                issues.push(ConfigIssue::Malformed { line: line_no, text: line.to_string() });
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(field) = FIELDS.iter().find(|f| **f == key) else {
                issues.push(ConfigIssue::UnknownKey { line: line_no, key: key.to_string() });
                continue;
            };
            if seen.contains(field) {
                issues.push(ConfigIssue::DuplicateKey { line: line_no, key: key.to_string() });
                continue;
            }
            seen.push(field);
            if let Err(expected) = config.set(field, value) {
                issues.push(ConfigIssue::BadValue { field, value: value.to_string(), expected });
            }
        }
        if issues.is_empty() {
            Ok(config)
        } else {
            Err(ConfigError { issues })
        }
    }

    /// Renders every field, one per line, in a form [`SimConfig::from_kv_str`] reads back exactly.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for field in FIELDS {
            out.push_str(field);
            out.push_str(" = ");
            out.push_str(&self.get(field));
            out.push('\n');
        }
        out
    }

    /// Sets one field from its textual value, as a config file line would.
    pub fn set_field(&mut self, key: &str, value: &str) -> Result<(), ConfigIssue> {
        let Some(field) = FIELDS.iter().copied().find(|f| *f == key) else {
            return Err(ConfigIssue::UnknownKey { line: 0, key: key.to_string() });
        };
        self.set(field, value).map_err(|expected| ConfigIssue::BadValue { field, value: value.to_string(), expected })
    }

    /// Names of every field, in file order.
    pub fn field_names() -> &'static [&'static str] {
        &FIELDS
    }

    fn get(&self, field: &str) -> String {
        match field {
            "lambda" => self.lambda.to_string(),
            "window_side" => self.window_side.to_string(),
            "link_distance" => self.link_distance.to_string(),
            "access_prob" => self.access_prob.to_string(),
            "arrival_rate" => self.arrival_rate.to_string(),
            "sinr_threshold" => self.sinr_threshold.to_string(),
            "path_loss_exponent" => self.path_loss_exponent.to_string(),
            "noise_power" => self.noise_power.to_string(),
            "horizon" => self.horizon.to_string(),
            "seed" => self.seed.to_string(),
            "variant" => self.variant.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "fading" => self.fading.as_str().to_string(),
            "success_estimator" => self.success_estimator.as_str().to_string(),
            "mc_samples" => self.mc_samples.to_string(),
            "queue_sample_stride" => self.queue_sample_stride.to_string(),
            "favorable_groups" => self.favorable_groups.to_string(),
            "instability_slope_factor" => self.instability_slope_factor.to_string(),
            "instability_min_queue" => self.instability_min_queue.to_string(),
            "divergence_threshold" => self.divergence_threshold.to_string(),
            _ => unreachable!("unlisted field {field}"),
        }
    }

    fn set(&mut self, field: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(value: &str, what: &str) -> Result<T, String> {
            value.parse().map_err(|_| what.to_string())
        }
        const REAL: &str = "a real number";
        const INT: &str = "a nonnegative integer";
        match field {
            "lambda" => self.lambda = num(value, REAL)?,
            "window_side" => self.window_side = num(value, REAL)?,
            "link_distance" => self.link_distance = num(value, REAL)?,
            "access_prob" => self.access_prob = num(value, REAL)?,
            "arrival_rate" => self.arrival_rate = num(value, REAL)?,
            "sinr_threshold" => self.sinr_threshold = num(value, REAL)?,
            "path_loss_exponent" => self.path_loss_exponent = num(value, REAL)?,
            "noise_power" => self.noise_power = num(value, REAL)?,
            "horizon" => self.horizon = num(value, INT)?,
            "seed" => self.seed = num(value, INT)?,
            "variant" => self.variant = value.parse()?,
            "epsilon" => self.epsilon = num(value, REAL)?,
            "fading" => self.fading = value.parse()?,
            "success_estimator" => self.success_estimator = value.parse()?,
            "mc_samples" => self.mc_samples = num(value, INT)?,
            "queue_sample_stride" => self.queue_sample_stride = num(value, INT)?,
            "favorable_groups" => self.favorable_groups = num(value, INT)?,
            "instability_slope_factor" => self.instability_slope_factor = num(value, REAL)?,
            "instability_min_queue" => self.instability_min_queue = num(value, REAL)?,
            "divergence_threshold" => self.divergence_threshold = num(value, REAL)?,
            _ => unreachable!("unlisted field {field}"),
        }
        Ok(())
    }
}

const FIELDS: [&str; 20] = [
    "lambda",
    "window_side",
    "link_distance",
    "access_prob",
    "arrival_rate",
    "sinr_threshold",
    "path_loss_exponent",
    "noise_power",
    "horizon",
    "seed",
    "variant",
    "epsilon",
    "fading",
    "success_estimator",
    "mc_samples",
    "queue_sample_stride",
    "favorable_groups",
    "instability_slope_factor",
    "instability_min_queue",
    "divergence_threshold",
];

impl fmt::Display for SimConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv_string())
    }
}

impl FromStr for SimConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SimConfig::from_kv_str(s)
    }
}
