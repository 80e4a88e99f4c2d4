//! Per-beam scheduling and Monte Carlo rate estimation.
//!
//! For each beam the scheduler forms the contender set (users whose rule
//! requests that beam), picks the contender with the highest SINR, and scores
//! `log(1 + winning SINR)`; a beam nobody requested scores zero. Rates are in
//! nats unless converted.
//!
//! Estimators are deterministic for a given `(model, trials, seed)` no matter
//! how many worker threads run the batch: trials map to per-trial values in
//! trial order and are reduced by fixed-shape pairwise summation. Evaluating
//! two policies under the same seed therefore consumes identical SINR
//! matrices, which is what makes paired (common-random-number) comparisons
//! low variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{sample_sinr_matrix, sample_user_column, ChannelModel, SinrMatrix};
use crate::policy::{beam1_feedback_region_probability, PolicySpec, ProbabilitySource};

/// Minimum trial count accepted by the ergodic-rate estimators.
pub const MIN_TRIALS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Nats,
    Bits,
}

/// Winning user and SINR for one beam.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamWinner {
    pub user: usize,
    pub sinr: f64,
}

/// Contender sets and winners for every beam of one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamAssignment {
    /// Per beam: users requesting it, ascending.
    pub contenders: Vec<Vec<usize>>,
    /// Per beam: the highest-SINR contender, or `None` for an empty beam.
    /// Exact SINR ties go to the lowest user index.
    pub winners: Vec<Option<BeamWinner>>,
}

/// Instantaneous rate of one realization.
#[derive(Clone, Debug)]
pub struct InstantRate {
    pub per_beam: Vec<f64>,
    pub total: f64,
    pub assignment: BeamAssignment,
}

/// Monte Carlo estimate of the ergodic sum rate.
#[derive(Clone, Debug, Serialize)]
pub struct RateEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    pub trials: u64,
    pub seed: u64,
    pub per_beam_means: Vec<f64>,
    pub unit: LogBase,
}

impl RateEstimate {
    /// Convert nats to bits (or back). All first-moment fields scale.
    pub fn to_unit(&self, unit: LogBase) -> RateEstimate {
        if unit == self.unit {
            return self.clone();
        }
        let factor = match (self.unit, unit) {
            (LogBase::Nats, LogBase::Bits) => 1.0 / std::f64::consts::LN_2,
            (LogBase::Bits, LogBase::Nats) => std::f64::consts::LN_2,
            _ => 1.0,
        };
        RateEstimate {
            mean: self.mean * factor,
            std_error: self.std_error * factor,
            ci95: (self.ci95.0 * factor, self.ci95.1 * factor),
            trials: self.trials,
            seed: self.seed,
            per_beam_means: self.per_beam_means.iter().map(|m| m * factor).collect(),
            unit,
        }
    }
}

/// Expected number of users requesting a given beam.
#[derive(Clone, Debug, Serialize)]
pub struct FeedbackLoad {
    pub lambda_per_beam: f64,
    /// True when every per-user term came from a closed form.
    pub analytic: bool,
    pub std_error: f64,
}

// ---------------------------------------------------------------------------
// Deterministic reduction helpers
// ---------------------------------------------------------------------------

/// Fixed-shape pairwise summation: the reduction tree depends only on the
/// slice length, so results do not depend on worker count.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut s = 0.0;
        for x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and standard error of the mean.
pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// Instantaneous scheduling
// ---------------------------------------------------------------------------

fn check_dims(policy: &PolicySpec, gamma: &SinrMatrix) -> Result<()> {
    if policy.users() != gamma.users() {
        return Err(Error::Shape {
            expected: policy.users(),
            got: gamma.users(),
        });
    }
    policy.validate_for_beams(gamma.beams())
}

/// Winner search for one beam: highest SINR among requesting users, lowest
/// user index on exact ties. Returns `(user, sinr)` or `None` for an empty
/// contender set.
#[inline]
fn beam_winner(policy: &PolicySpec, gamma: &SinrMatrix, beam: usize) -> Option<(usize, f64)> {
    let mut winner: Option<(usize, f64)> = None;
    for (user, rule) in policy.rules.iter().enumerate() {
        let v = gamma.user_vector(user);
        if rule.selects_beam(beam, v) {
            let sinr = v[beam];
            match winner {
                Some((_, best)) if sinr <= best => {}
                _ => winner = Some((user, sinr)),
            }
        }
    }
    winner
}

/// Per-beam rates without the assignment bookkeeping (hot path).
#[inline]
pub(crate) fn beam_rates_into(policy: &PolicySpec, gamma: &SinrMatrix, out: &mut [f64]) {
    for (beam, rate) in out.iter_mut().enumerate().take(gamma.beams()) {
        *rate = match beam_winner(policy, gamma, beam) {
            Some((_, sinr)) => sinr.ln_1p(),
            None => 0.0,
        };
    }
}

/// Maximum beam SINR among contenders other than `exclude`, 0.0 if none.
pub(crate) fn best_contender_excluding(
    policy: &PolicySpec,
    gamma: &SinrMatrix,
    beam: usize,
    exclude: usize,
) -> f64 {
    let mut best = 0.0;
    for (user, rule) in policy.rules.iter().enumerate() {
        if user == exclude {
            continue;
        }
        let v = gamma.user_vector(user);
        if rule.selects_beam(beam, v) && v[beam] > best {
            best = v[beam];
        }
    }
    best
}

/// Schedule one realization: per-beam rates, total, and the full assignment.
pub fn instantaneous_rate(policy: &PolicySpec, gamma: &SinrMatrix) -> Result<InstantRate> {
    check_dims(policy, gamma)?;
    let beams = gamma.beams();
    let mut per_beam = vec![0.0; beams];
    let mut contenders = vec![Vec::new(); beams];
    let mut winners = vec![None; beams];
    for beam in 0..beams {
        for (user, rule) in policy.rules.iter().enumerate() {
            if rule.selects_beam(beam, gamma.user_vector(user)) {
                contenders[beam].push(user);
            }
        }
        if let Some((user, sinr)) = beam_winner(policy, gamma, beam) {
            per_beam[beam] = sinr.ln_1p();
            winners[beam] = Some(BeamWinner { user, sinr });
        }
    }
    let total = per_beam.iter().sum();
    Ok(InstantRate {
        per_beam,
        total,
        assignment: BeamAssignment {
            contenders,
            winners,
        },
    })
}

// ---------------------------------------------------------------------------
// Ergodic-rate estimation
// ---------------------------------------------------------------------------

fn rate_estimate_from_trials(
    per_trial_beams: Vec<Vec<f64>>,
    beams: usize,
    seed: u64,
) -> RateEstimate {
    let trials = per_trial_beams.len();
    let totals: Vec<f64> = per_trial_beams.iter().map(|b| b.iter().sum()).collect();
    let (_, se) = mean_and_se(&totals);
    let mut per_beam_means = Vec::with_capacity(beams);
    for beam in 0..beams {
        let xs: Vec<f64> = per_trial_beams.iter().map(|b| b[beam]).collect();
        per_beam_means.push(pairwise_sum(&xs) / trials as f64);
    }
    // The reported mean is the sum of per-beam means, exactly.
    let mean: f64 = per_beam_means.iter().sum();
    RateEstimate {
        mean,
        std_error: se,
        ci95: (mean - 1.96 * se, mean + 1.96 * se),
        trials: trials as u64,
        seed,
        per_beam_means,
        unit: LogBase::Nats,
    }
}

fn validate_rate_inputs(policy: &PolicySpec, model: &ChannelModel, trials: u64) -> Result<()> {
    model.validate()?;
    policy.validate()?;
    policy.validate_for_beams(model.beams)?;
    if policy.users() != model.users {
        return Err(Error::Shape {
            expected: model.users,
            got: policy.users(),
        });
    }
    if trials < MIN_TRIALS {
        return Err(Error::Contract(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    Ok(())
}

/// Sample mean of the instantaneous rate over i.i.d. trials.
pub fn ergodic_rate(
    policy: &PolicySpec,
    model: &ChannelModel,
    trials: u64,
    seed: u64,
) -> Result<RateEstimate> {
    validate_rate_inputs(policy, model, trials)?;
    let beams = model.beams;
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let gamma = sample_sinr_matrix(model, t, seed).expect("validated model");
            let mut rates = vec![0.0; beams];
            beam_rates_into(policy, &gamma, &mut rates);
            rates
        })
        .collect();
    Ok(rate_estimate_from_trials(per_trial, beams, seed))
}

/// Conditional rate given fixed SINR columns for users 2..n: only user 1's
/// column is resampled, using the same substreams as full-matrix sampling.
pub fn conditional_rate_given_others(
    policy: &PolicySpec,
    model: &ChannelModel,
    fixed_others: &SinrMatrix,
    trials: u64,
    seed: u64,
) -> Result<RateEstimate> {
    validate_rate_inputs(policy, model, trials)?;
    if fixed_others.users() != model.users - 1 {
        return Err(Error::Shape {
            expected: model.users - 1,
            got: fixed_others.users(),
        });
    }
    if fixed_others.users() > 0 && fixed_others.beams() != model.beams {
        return Err(Error::Shape {
            expected: model.beams,
            got: fixed_others.beams(),
        });
    }
    let beams = model.beams;
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut columns = Vec::with_capacity(model.users);
            columns.push(sample_user_column(model, 0, t, seed));
            for u in 0..fixed_others.users() {
                columns.push(fixed_others.user_vector(u).to_vec());
            }
            let gamma = SinrMatrix::from_columns(&columns, beams).expect("validated columns");
            let mut rates = vec![0.0; beams];
            beam_rates_into(policy, &gamma, &mut rates);
            rates
        })
        .collect();
    Ok(rate_estimate_from_trials(per_trial, beams, seed))
}

/// Per-trial total rates for several policies under common random numbers.
/// Returns one vector of totals per policy, all evaluated on identical
/// matrices.
pub fn crn_total_rates(
    policies: &[&PolicySpec],
    model: &ChannelModel,
    trials: u64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    for p in policies {
        validate_rate_inputs(p, model, trials)?;
    }
    let beams = model.beams;
    let rows: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let gamma = sample_sinr_matrix(model, t, seed).expect("validated model");
            let mut scratch = vec![0.0; beams];
            policies
                .iter()
                .map(|p| {
                    beam_rates_into(p, &gamma, &mut scratch);
                    scratch.iter().sum()
                })
                .collect()
        })
        .collect();
    let mut per_policy = vec![Vec::with_capacity(trials as usize); policies.len()];
    for row in rows {
        for (k, v) in row.into_iter().enumerate() {
            per_policy[k].push(v);
        }
    }
    Ok(per_policy)
}

/// Paired common-random-number estimate of `R(alt) - R(base)`.
#[derive(Clone, Debug, Serialize)]
pub struct PairedDifference {
    pub mean: f64,
    pub std_error: f64,
    pub base_mean: f64,
    pub alt_mean: f64,
    pub trials: u64,
    pub seed: u64,
}

pub fn paired_rate_difference(
    base: &PolicySpec,
    alt: &PolicySpec,
    model: &ChannelModel,
    trials: u64,
    seed: u64,
) -> Result<PairedDifference> {
    let rates = crn_total_rates(&[base, alt], model, trials, seed)?;
    let diffs: Vec<f64> = rates[1].iter().zip(&rates[0]).map(|(a, b)| a - b).collect();
    let (mean, se) = mean_and_se(&diffs);
    Ok(PairedDifference {
        mean,
        std_error: se,
        base_mean: pairwise_sum(&rates[0]) / trials as f64,
        alt_mean: pairwise_sum(&rates[1]) / trials as f64,
        trials,
        seed,
    })
}

/// Expected number of users requesting beam 1: the sum over users of their
/// beam-1 feedback probabilities. Closed form where available, Monte Carlo
/// otherwise.
pub fn feedback_load(
    policy: &PolicySpec,
    model: &ChannelModel,
    samples: usize,
    seed: u64,
) -> Result<FeedbackLoad> {
    model.validate()?;
    policy.validate()?;
    policy.validate_for_beams(model.beams)?;
    if policy.users() != model.users {
        return Err(Error::Shape {
            expected: model.users,
            got: policy.users(),
        });
    }
    let mut lambda = 0.0;
    let mut var = 0.0;
    let mut analytic = true;
    for (user, rule) in policy.rules.iter().enumerate() {
        let channel = model.user_channel(user);
        let p = beam1_feedback_region_probability(rule, &channel, samples, seed)?;
        lambda += p.value;
        var += p.std_error * p.std_error;
        if p.source == ProbabilitySource::MonteCarlo {
            analytic = false;
        }
    }
    Ok(FeedbackLoad {
        lambda_per_beam: lambda,
        analytic,
        std_error: var.sqrt(),
    })
}
