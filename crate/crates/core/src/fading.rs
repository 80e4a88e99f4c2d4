//! Joint SINR generation and marginal/maximum-SINR distribution functions.
//!
//! A channel model describes `n` independent users, each observing `M`
//! statistically identical beams. For the beamforming kinds, a user draws one
//! i.i.d. channel power per beam (Rayleigh: exponential, Rician / Nakagami:
//! the matching power laws, all unit mean) and the SINR of beam `m` is
//!
//! ```text
//! sinr_m = snr * x_m / (1 + snr * sum_{k != m} x_k)
//! ```
//!
//! i.e. signal over noise plus intra-cell interference from the other beams.
//! This construction makes a user's beams exchangeable, keeps the marginal
//! continuous, and forces at most one beam above 1 per user. The `Synthetic`
//! kind bypasses the construction and draws i.i.d. per-beam values from a
//! user-supplied marginal; it exists for tests and has no above-1 guarantee.
//!
//! The Rayleigh marginal has the closed form
//! `F(x) = 1 - exp(-x / snr) / (1 + x)^(M - 1)`; Rician and Nakagami marginals
//! and all dependent maximum-SINR laws are served from deterministic,
//! fixed-seed empirical tables cached per model.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::rng::{purpose, Substream};

/// Samples per empirical quantile table.
pub const TABLE_SAMPLES: usize = 1_000_000;

const TABLE_SEED: u64 = 0x7AB1_E5EE_D000_0001;

/// Marginal law for the `Synthetic` channel kind (i.i.d. across beams).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SyntheticMarginal {
    Exponential { mean: f64 },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChannelKind {
    /// Rayleigh-faded beamforming: per-beam powers are Exp(1).
    Rayleigh,
    /// Rician-faded beamforming with line-of-sight factor `k_factor >= 0`.
    Rician { k_factor: f64 },
    /// Nakagami-faded beamforming with shape `m >= 0.5`.
    Nakagami { m: f64 },
    /// Direct i.i.d. per-beam SINR values from the given marginal.
    Synthetic { marginal: SyntheticMarginal },
}

impl ChannelKind {
    pub fn is_beamforming(&self) -> bool {
        !matches!(self, ChannelKind::Synthetic { .. })
    }

    fn tag_bits(&self) -> u64 {
        match self {
            ChannelKind::Rayleigh => 1,
            ChannelKind::Rician { k_factor } => 2 ^ k_factor.to_bits().rotate_left(8),
            ChannelKind::Nakagami { m } => 3 ^ m.to_bits().rotate_left(16),
            ChannelKind::Synthetic { marginal } => match marginal {
                SyntheticMarginal::Exponential { mean } => 4 ^ mean.to_bits().rotate_left(24),
                SyntheticMarginal::Uniform { lo, hi } => {
                    5 ^ lo.to_bits().rotate_left(24) ^ hi.to_bits().rotate_left(40)
                }
            },
        }
    }
}

/// Full system model: kind, base SNR, beam and user counts, and optional
/// per-user SNR multipliers (the heterogeneity mechanism).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    /// Linear SNR (not dB), strictly positive.
    pub snr: f64,
    pub beams: usize,
    pub users: usize,
    /// Optional per-user SNR multipliers, length `users`, all positive.
    pub snr_multipliers: Option<Vec<f64>>,
}

impl ChannelModel {
    pub fn new(kind: ChannelKind, snr: f64, beams: usize, users: usize) -> Self {
        ChannelModel {
            kind,
            snr,
            beams,
            users,
            snr_multipliers: None,
        }
    }

    pub fn with_multipliers(mut self, multipliers: Vec<f64>) -> Self {
        self.snr_multipliers = Some(multipliers);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::Config(format!(
                "snr must be positive, got {}",
                self.snr
            )));
        }
        if self.beams < 1 {
            return Err(Error::Config("beam count must be at least 1".into()));
        }
        if self.users < 1 {
            return Err(Error::Config("user count must be at least 1".into()));
        }
        match self.kind {
            ChannelKind::Rician { k_factor } => {
                if !(k_factor >= 0.0 && k_factor.is_finite()) {
                    return Err(Error::Config(format!(
                        "Rician K-factor must be >= 0, got {k_factor}"
                    )));
                }
            }
            ChannelKind::Nakagami { m } => {
                if !(m >= 0.5 && m.is_finite()) {
                    return Err(Error::Config(format!("Nakagami m must be >= 0.5, got {m}")));
                }
            }
            ChannelKind::Synthetic { marginal } => match marginal {
                SyntheticMarginal::Exponential { mean } => {
                    if !(mean > 0.0 && mean.is_finite()) {
                        return Err(Error::Config(format!(
                            "synthetic exponential mean must be positive, got {mean}"
                        )));
                    }
                }
                SyntheticMarginal::Uniform { lo, hi } => {
                    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                        return Err(Error::Config(format!(
                            "synthetic uniform bounds must satisfy 0 <= lo < hi, got [{lo}, {hi})"
                        )));
                    }
                }
            },
            ChannelKind::Rayleigh => {}
        }
        if let Some(mults) = &self.snr_multipliers {
            if mults.len() != self.users {
                return Err(Error::Config(format!(
                    "snr multipliers length {} does not match user count {}",
                    mults.len(),
                    self.users
                )));
            }
            if mults.iter().any(|m| !(m > &0.0 && m.is_finite())) {
                return Err(Error::Config("snr multipliers must all be positive".into()));
            }
        }
        Ok(())
    }

    /// Effective SNR seen by one user.
    pub fn user_snr(&self, user: usize) -> f64 {
        let mult = self
            .snr_multipliers
            .as_ref()
            .map(|m| m[user])
            .unwrap_or(1.0);
        self.snr * mult
    }

    /// Single-user marginal view (the per-user joint law of one SINR vector).
    pub fn user_channel(&self, user: usize) -> UserChannel {
        UserChannel {
            kind: self.kind,
            snr: self.user_snr(user),
            beams: self.beams,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        match &self.snr_multipliers {
            None => true,
            Some(m) => m.iter().all(|v| *v == m[0]),
        }
    }

    /// Stable 64-bit parameter hash, used to key caches and output rows.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        eat(self.kind.tag_bits());
        eat(self.snr.to_bits());
        eat(self.beams as u64);
        eat(self.users as u64);
        if let Some(mults) = &self.snr_multipliers {
            for m in mults {
                eat(m.to_bits());
            }
        }
        h
    }
}

/// Which scalar statistic of a user's SINR vector a distribution query is
/// about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Statistic {
    /// SINR of beam 1 (any fixed beam, by exchangeability).
    Beam1,
    /// Maximum SINR over the user's beams.
    MaxOverBeams,
}

/// Marginal view of a single user: fading kind, effective SNR, beam count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserChannel {
    pub kind: ChannelKind,
    pub snr: f64,
    pub beams: usize,
}

impl UserChannel {
    /// Draw one SINR vector into `out` (length `beams`).
    pub fn sample_vector_into(&self, rng: &mut Substream, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.beams);
        match self.kind {
            ChannelKind::Synthetic { marginal } => {
                for v in out.iter_mut() {
                    *v = match marginal {
                        SyntheticMarginal::Exponential { mean } => mean * rng.next_exp(),
                        SyntheticMarginal::Uniform { lo, hi } => rng.next_range(lo, hi),
                    };
                }
            }
            _ => {
                // Per-beam channel powers, then signal over noise+interference.
                let mut total = 0.0;
                for v in out.iter_mut() {
                    let power = match self.kind {
                        ChannelKind::Rayleigh => rng.next_exp(),
                        ChannelKind::Rician { k_factor } => {
                            let los = (k_factor / (k_factor + 1.0)).sqrt();
                            let sigma = (0.5 / (k_factor + 1.0)).sqrt();
                            let i = los + sigma * rng.next_normal();
                            let q = sigma * rng.next_normal();
                            i * i + q * q
                        }
                        ChannelKind::Nakagami { m } => rng.next_gamma(m) / m,
                        ChannelKind::Synthetic { .. } => unreachable!(),
                    };
                    *v = power;
                    total += power;
                }
                for v in out.iter_mut() {
                    let power = *v;
                    *v = self.snr * power / (1.0 + self.snr * (total - power));
                }
            }
        }
    }

    pub fn sample_vector(&self, rng: &mut Substream) -> Vec<f64> {
        let mut out = vec![0.0; self.beams];
        self.sample_vector_into(rng, &mut out);
        out
    }

    /// Whether the beam-1 marginal has a closed form (otherwise it is served
    /// from the empirical table).
    pub fn has_closed_form_marginal(&self) -> bool {
        matches!(
            self.kind,
            ChannelKind::Rayleigh | ChannelKind::Synthetic { .. }
        )
    }

    /// P(beam-1 SINR <= x).
    pub fn marginal_cdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain(format!("cdf argument must be >= 0, got {x}")));
        }
        Ok(match self.kind {
            ChannelKind::Rayleigh => {
                1.0 - (-x / self.snr).exp() / (1.0 + x).powi(self.beams as i32 - 1)
            }
            ChannelKind::Synthetic { marginal } => match marginal {
                SyntheticMarginal::Exponential { mean } => 1.0 - (-x / mean).exp(),
                SyntheticMarginal::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            },
            _ => empirical_cdf(&table(self, Statistic::Beam1), x),
        })
    }

    /// P(beam-1 SINR >= x). Complements [`UserChannel::marginal_cdf`]; the
    /// marginal is continuous so the boundary carries no mass.
    pub fn beam1_tail(&self, x: f64) -> Result<f64> {
        Ok(1.0 - self.marginal_cdf(x)?)
    }

    /// P(max-over-beams SINR >= x).
    ///
    /// For the i.i.d. `Synthetic` kind this is `1 - F(x)^M` exactly. For
    /// beamforming kinds with `x >= 1` the per-beam exceedance events are
    /// disjoint, so the tail equals `M * P(beam-1 SINR >= x)`; below 1 the
    /// dependent joint law has no closed form and the empirical table is used.
    pub fn max_tail(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain(format!(
                "tail argument must be >= 0, got {x}"
            )));
        }
        if self.beams == 1 {
            return self.beam1_tail(x);
        }
        match self.kind {
            ChannelKind::Synthetic { .. } => {
                Ok(1.0 - self.marginal_cdf(x)?.powi(self.beams as i32))
            }
            _ if x >= 1.0 => Ok((self.beams as f64 * self.beam1_tail(x)?).min(1.0)),
            _ => Ok(1.0 - empirical_cdf(&table(self, Statistic::MaxOverBeams), x)),
        }
    }

    /// Threshold `t` with `P(statistic >= t) = q`, up to solver tolerance.
    /// `q = 1` maps to 0 and `q = 0` to the `+inf` never-feed-back sentinel.
    pub fn upper_quantile(&self, q: f64, statistic: Statistic) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) || q.is_nan() {
            return Err(Error::Domain(format!(
                "quantile level must lie in [0, 1], got {q}"
            )));
        }
        if q == 0.0 {
            return Ok(f64::INFINITY);
        }
        if q == 1.0 {
            return Ok(0.0);
        }
        match statistic {
            Statistic::Beam1 => self.beam1_upper_quantile(q),
            Statistic::MaxOverBeams => self.max_upper_quantile(q),
        }
    }

    fn beam1_upper_quantile(&self, q: f64) -> Result<f64> {
        match self.kind {
            ChannelKind::Rayleigh => {
                if self.beams == 1 {
                    Ok(-self.snr * q.ln())
                } else {
                    let tail =
                        |x: f64| (-x / self.snr).exp() / (1.0 + x).powi(self.beams as i32 - 1);
                    Ok(invert_decreasing(tail, q))
                }
            }
            ChannelKind::Synthetic { marginal } => Ok(match marginal {
                SyntheticMarginal::Exponential { mean } => -mean * q.ln(),
                SyntheticMarginal::Uniform { lo, hi } => hi - q * (hi - lo),
            }),
            _ => Ok(empirical_upper_quantile(&table(self, Statistic::Beam1), q)),
        }
    }

    fn max_upper_quantile(&self, q: f64) -> Result<f64> {
        if self.beams == 1 {
            return self.beam1_upper_quantile(q);
        }
        match self.kind {
            ChannelKind::Synthetic { .. } => {
                // P(max >= t) = 1 - F(t)^M, so invert through the marginal.
                let beam_q = 1.0 - (1.0 - q).powf(1.0 / self.beams as f64);
                self.beam1_upper_quantile(beam_q.clamp(f64::MIN_POSITIVE, 1.0))
            }
            ChannelKind::Rayleigh => {
                // Exceedance events are disjoint above 1, where the identity
                // P(max >= t) = M * P(beam >= t) gives an exact inverse.
                let candidate = self.beam1_upper_quantile(q / self.beams as f64)?;
                if candidate >= 1.0 {
                    Ok(candidate)
                } else {
                    Ok(empirical_upper_quantile(
                        &table(self, Statistic::MaxOverBeams),
                        q,
                    ))
                }
            }
            _ => Ok(empirical_upper_quantile(
                &table(self, Statistic::MaxOverBeams),
                q,
            )),
        }
    }
}

/// Bisection inverse of a continuous strictly decreasing tail function.
fn invert_decreasing(tail: impl Fn(f64) -> f64, q: f64) -> f64 {
    let mut hi = 1.0;
    while tail(hi) > q {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// Empirical quantile tables
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Hash)]
struct TableKey {
    kind_bits: u64,
    snr_bits: u64,
    beams: usize,
    statistic: Statistic,
}

fn table_cache() -> &'static Mutex<HashMap<TableKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Sorted fixed-seed sample of the requested statistic, built once per
/// `(channel, statistic)` and shared thereafter. Rebuilding is always
/// possible, so the cache is never a correctness concern, only a speed one.
fn table(channel: &UserChannel, statistic: Statistic) -> Arc<Vec<f64>> {
    let key = TableKey {
        kind_bits: channel.kind.tag_bits(),
        snr_bits: channel.snr.to_bits(),
        beams: channel.beams,
        statistic,
    };
    let mut cache = table_cache().lock().expect("table cache poisoned");
    if let Some(t) = cache.get(&key) {
        return Arc::clone(t);
    }
    let mut rng = Substream::new(
        TABLE_SEED,
        purpose::TABLE,
        key.kind_bits ^ key.snr_bits,
        key.beams as u64,
    );
    let mut vector = vec![0.0; channel.beams];
    let mut samples = Vec::with_capacity(TABLE_SAMPLES);
    for _ in 0..TABLE_SAMPLES {
        channel.sample_vector_into(&mut rng, &mut vector);
        let value = match statistic {
            Statistic::Beam1 => vector[0],
            Statistic::MaxOverBeams => max_beam(&vector).1,
        };
        samples.push(value);
    }
    samples.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let arc = Arc::new(samples);
    cache.insert(key, Arc::clone(&arc));
    arc
}

fn empirical_cdf(sorted: &[f64], x: f64) -> f64 {
    let rank = sorted.partition_point(|v| *v <= x);
    rank as f64 / sorted.len() as f64
}

/// Value `t` such that exactly `round(q * N)` of the table entries are >= `t`.
fn empirical_upper_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64).round() as usize).clamp(1, n);
    sorted[n - k]
}

// ---------------------------------------------------------------------------
// SINR matrices and vectors
// ---------------------------------------------------------------------------

/// One user's SINR vector (length M).
#[derive(Clone, Debug, PartialEq)]
pub struct SinrVector {
    pub values: Vec<f64>,
}

impl SinrVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape {
                expected: 1,
                got: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("SINR values must be finite and >= 0".into()));
        }
        Ok(SinrVector { values })
    }

    /// Maximum SINR over beams.
    pub fn max_value(&self) -> f64 {
        max_beam(&self.values).1
    }

    /// Index of the maximum-SINR beam; on an exact tie the lowest index wins.
    pub fn argmax_beam(&self) -> usize {
        max_beam(&self.values).0
    }
}

impl std::ops::Deref for SinrVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// `(argmax index, max value)` with the lowest index winning exact ties.
#[inline]
pub fn max_beam(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_val = values[0];
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > best_val {
            best = i;
            best_val = *v;
        }
    }
    (best, best_val)
}

/// An M x n matrix of per-beam, per-user SINR realizations.
#[derive(Clone, Debug, PartialEq)]
pub struct SinrMatrix {
    // User-major storage: user i occupies values[i * beams .. (i + 1) * beams].
    values: Vec<f64>,
    beams: usize,
    users: usize,
    pub model_hash: u64,
    pub trial_index: u64,
    pub seed: u64,
}

impl SinrMatrix {
    /// Build a matrix from per-user columns. Entries must be finite and >= 0.
    pub fn from_columns(columns: &[Vec<f64>], beams: usize) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Shape {
                expected: 1,
                got: 0,
            });
        }
        let mut values = Vec::with_capacity(columns.len() * beams);
        for col in columns {
            if col.len() != beams {
                return Err(Error::Shape {
                    expected: beams,
                    got: col.len(),
                });
            }
            if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Domain("SINR values must be finite and >= 0".into()));
            }
            values.extend_from_slice(col);
        }
        Ok(SinrMatrix {
            values,
            beams,
            users: columns.len(),
            model_hash: 0,
            trial_index: 0,
            seed: 0,
        })
    }

    pub fn beams(&self) -> usize {
        self.beams
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// One user's SINR vector as a slice.
    #[inline]
    pub fn user_vector(&self, user: usize) -> &[f64] {
        &self.values[user * self.beams..(user + 1) * self.beams]
    }

    #[inline]
    pub fn sinr(&self, beam: usize, user: usize) -> f64 {
        self.values[user * self.beams + beam]
    }

    /// Matrix with one user's column removed (for invariance tests).
    pub fn without_user(&self, user: usize) -> SinrMatrix {
        let mut values = Vec::with_capacity((self.users - 1) * self.beams);
        for u in 0..self.users {
            if u != user {
                values.extend_from_slice(self.user_vector(u));
            }
        }
        SinrMatrix {
            values,
            beams: self.beams,
            users: self.users - 1,
            model_hash: self.model_hash,
            trial_index: self.trial_index,
            seed: self.seed,
        }
    }
}

/// Draw one user's trial column. Columns depend only on the per-user
/// substream, so any subset of users can be resampled independently.
pub fn sample_user_column(
    model: &ChannelModel,
    user: usize,
    trial_index: u64,
    seed: u64,
) -> Vec<f64> {
    let mut rng = Substream::new(seed, purpose::TRIAL, user as u64, trial_index);
    model.user_channel(user).sample_vector(&mut rng)
}

/// Draw the full joint SINR matrix for one trial. Deterministic in
/// `(model, trial_index, seed)` and independent of evaluation order.
pub fn sample_sinr_matrix(model: &ChannelModel, trial_index: u64, seed: u64) -> Result<SinrMatrix> {
    model.validate()?;
    let mut values = vec![0.0; model.users * model.beams];
    for user in 0..model.users {
        let mut rng = Substream::new(seed, purpose::TRIAL, user as u64, trial_index);
        let channel = model.user_channel(user);
        channel.sample_vector_into(
            &mut rng,
            &mut values[user * model.beams..(user + 1) * model.beams],
        );
    }
    Ok(SinrMatrix {
        values,
        beams: model.beams,
        users: model.users,
        model_hash: model.hash(),
        trial_index,
        seed,
    })
}

/// P(beam-1 SINR <= x) for the base (multiplier-free) user marginal.
pub fn marginal_cdf(model: &ChannelModel, x: f64) -> Result<f64> {
    model.validate()?;
    UserChannel {
        kind: model.kind,
        snr: model.snr,
        beams: model.beams,
    }
    .marginal_cdf(x)
}

/// Upper-tail quantile of the base user marginal; see
/// [`UserChannel::upper_quantile`].
pub fn upper_quantile(model: &ChannelModel, q: f64, statistic: Statistic) -> Result<f64> {
    model.validate()?;
    UserChannel {
        kind: model.kind,
        snr: model.snr,
        beams: model.beams,
    }
    .upper_quantile(q, statistic)
}
