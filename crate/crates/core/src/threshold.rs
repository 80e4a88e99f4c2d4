//! Load-matched threshold constructions and the statistical checks of their
//! rate dominance.
//!
//! Given any decentralized beam-symmetric policy, each user's rule can be
//! replaced by a threshold rule whose feedback probability equals the
//! original rule's beam-1 feedback-region probability. The swap preserves the
//! expected feedback load, and switching users to their matched rules one at
//! a time never lowers the ergodic sum rate. This module builds the matched
//! pairs (general and maximum-SINR families), classifies per-realization
//! loss/gain/neutral events both from rate comparisons and from the region
//! membership conditions that characterize them, and runs the paired
//! common-random-number checks of the dominance claims.
//!
//! Matching is empirical where the region probability has no closed form: the
//! threshold is chosen as an order statistic of the same seeded sample that
//! estimated the probability, so the two sides of the construction match
//! exactly on that sample and the residual gap against the analytic law is
//! pure Monte Carlo error.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fading::{
    max_beam, sample_sinr_matrix, sample_user_column, ChannelModel, SinrMatrix, UserChannel,
};
use crate::policy::{require_beam_symmetric, FeedbackRule, PolicySpec, RuleKind};
use crate::rng::{purpose, Substream};
use crate::scheduler::{beam_rates_into, best_contender_excluding, mean_and_se, pairwise_sum};

/// Default sample count for empirical load matching.
pub const DEFAULT_MATCH_SAMPLES: usize = 1_000_000;

/// Paired-difference acceptance slack, in standard errors.
pub const PASS_SIGMA: f64 = 3.0;

/// Relative load-matching tolerance: a matched pair must satisfy
/// `|load(original) - load(matched)| <= LOAD_TOLERANCE_PER_USER * n`.
pub const LOAD_TOLERANCE_PER_USER: f64 = 1e-3;

/// Which threshold construction a matched pair uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdFamily {
    /// Match against the beam-1 SINR: the result is a general threshold rule.
    General,
    /// Match against the maximum SINR on the best beam: the result is a
    /// maximum-SINR threshold rule.
    MaxSinr,
}

/// A policy and its load-matched threshold counterpart.
#[derive(Clone, Debug)]
pub struct MatchedPolicyPair {
    pub original: PolicySpec,
    pub matched: PolicySpec,
    pub family: ThresholdFamily,
    /// Matched thresholds, one per user (`+inf` = never feed back).
    pub taus: Vec<f64>,
    /// Per-user beam-1 feedback probabilities both policies share.
    pub probs: Vec<f64>,
    /// |load(original) - load(matched)| with the matched side evaluated
    /// through the channel's distribution functions.
    pub load_gap: f64,
}

impl MatchedPolicyPair {
    /// Shared expected number of users requesting beam 1.
    pub fn load(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn load_tolerance(&self) -> f64 {
        LOAD_TOLERANCE_PER_USER * self.original.users() as f64
    }

    /// Region partition for one user (see [`RegionPartition`]).
    pub fn partition(&self, user: usize) -> RegionPartition {
        RegionPartition {
            original_rule: self.original.rules[user].clone(),
            matched_rule: self.matched.rules[user].clone(),
            tau: self.taus[user],
            family: self.family,
        }
    }
}

fn matched_rule(family: ThresholdFamily, user: usize, tau: f64) -> FeedbackRule {
    match family {
        ThresholdFamily::General => FeedbackRule::general_threshold(user, tau),
        ThresholdFamily::MaxSinr => FeedbackRule::max_sinr_threshold(user, tau),
    }
}

/// Analytic (or table-backed) beam-1 feedback probability of a matched
/// threshold rule.
fn matched_rule_probability(
    family: ThresholdFamily,
    channel: &UserChannel,
    tau: f64,
) -> Result<f64> {
    if tau.is_infinite() {
        return Ok(0.0);
    }
    match family {
        ThresholdFamily::General => channel.beam1_tail(tau),
        ThresholdFamily::MaxSinr => Ok(channel.max_tail(tau)? / channel.beams as f64),
    }
}

/// Per-user matching: the rule's beam-1 feedback probability and the
/// threshold reproducing it.
fn match_user_rule(
    rule: &FeedbackRule,
    channel: &UserChannel,
    family: ThresholdFamily,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    // A rule already of the target threshold kind is the construction's
    // fixed point: its own threshold satisfies the defining equation.
    match (&rule.kind, family) {
        (RuleKind::GeneralThreshold { tau }, ThresholdFamily::General)
        | (RuleKind::MaxSinrThreshold { tau }, ThresholdFamily::MaxSinr) => {
            let p = matched_rule_probability(family, channel, *tau)?;
            return Ok((p, *tau));
        }
        _ => {}
    }

    // Empirical route: estimate the feedback-region probability and pick the
    // threshold as an order statistic of the same sample.
    let mut rng = Substream::new(seed, purpose::MATCH, rule.user_index as u64, 0);
    let mut vector = vec![0.0; channel.beams];
    let mut hits = 0usize;
    let mut stats = Vec::with_capacity(samples);
    for _ in 0..samples {
        channel.sample_vector_into(&mut rng, &mut vector);
        if rule.selects_beam(0, &vector) {
            hits += 1;
        }
        match family {
            ThresholdFamily::General => stats.push(vector[0]),
            ThresholdFamily::MaxSinr => {
                // Only draws whose best beam is beam 1 can satisfy the
                // matched rule on beam 1.
                let (best, value) = max_beam(&vector);
                if best == 0 {
                    stats.push(value);
                }
            }
        }
    }
    let prob = hits as f64 / samples as f64;
    if hits == 0 {
        return Ok((0.0, f64::INFINITY));
    }
    if hits > stats.len() {
        // Unreachable for genuine maximum-SINR rules: their beam-1 region
        // lies inside {best beam == 1}.
        return Err(Error::PolicyKind(format!(
            "user {} rule selects beam 1 on draws where beam 1 is not the best beam",
            rule.user_index
        )));
    }
    // k-th largest statistic: exactly `hits` sampled statistics sit at or
    // above it, so the empirical loads coincide exactly.
    let k = stats.len() - hits;
    let (_, tau, _) = stats.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).expect("finite"));
    Ok((prob, *tau))
}

fn match_policy(
    policy: &PolicySpec,
    model: &ChannelModel,
    family: ThresholdFamily,
    samples: usize,
    seed: u64,
) -> Result<MatchedPolicyPair> {
    model.validate()?;
    policy.validate()?;
    policy.validate_for_beams(model.beams)?;
    if policy.users() != model.users {
        return Err(Error::Shape {
            expected: model.users,
            got: policy.users(),
        });
    }
    if family == ThresholdFamily::MaxSinr && !policy.is_max_sinr_kind() {
        return Err(Error::PolicyKind(
            "maximum-SINR matching requires rules that request only the best beam".into(),
        ));
    }
    for rule in &policy.rules {
        require_beam_symmetric(rule, model.beams, seed)?;
    }

    let matched: Result<Vec<(f64, f64)>> = policy
        .rules
        .par_iter()
        .map(|rule| {
            match_user_rule(
                rule,
                &model.user_channel(rule.user_index),
                family,
                samples,
                seed,
            )
        })
        .collect();
    let matched = matched?;

    let probs: Vec<f64> = matched.iter().map(|(p, _)| *p).collect();
    let taus: Vec<f64> = matched.iter().map(|(_, t)| *t).collect();
    let rules = taus
        .iter()
        .enumerate()
        .map(|(user, tau)| matched_rule(family, user, *tau))
        .collect();
    let matched_policy = PolicySpec::new(rules, format!("{}-matched", policy.label))?;

    let mut matched_load = 0.0;
    for (user, tau) in taus.iter().enumerate() {
        matched_load += matched_rule_probability(family, &model.user_channel(user), *tau)?;
    }
    let load_gap = (probs.iter().sum::<f64>() - matched_load).abs();

    Ok(MatchedPolicyPair {
        original: policy.clone(),
        matched: matched_policy,
        family,
        taus,
        probs,
        load_gap,
    })
}

/// Build the load-matched general threshold policy: per user, the threshold
/// reproduces the rule's beam-1 feedback probability on the beam-1 marginal.
/// Rejects rules that fail the beam-symmetry probe.
pub fn match_gtfp(
    policy: &PolicySpec,
    model: &ChannelModel,
    samples: usize,
    seed: u64,
) -> Result<MatchedPolicyPair> {
    match_policy(policy, model, ThresholdFamily::General, samples, seed)
}

/// Build the load-matched maximum-SINR threshold policy. The policy must be
/// of maximum-SINR kind (every rule requests at most its best beam).
pub fn match_mtfp(
    policy: &PolicySpec,
    model: &ChannelModel,
    samples: usize,
    seed: u64,
) -> Result<MatchedPolicyPair> {
    match_policy(policy, model, ThresholdFamily::MaxSinr, samples, seed)
}

/// Hybrid policy with users `1..=k` switched to their matched threshold
/// rules (`k = 0` returns the original, `k = n` the fully matched policy).
pub fn one_user_switch(pair: &MatchedPolicyPair, k: usize) -> Result<PolicySpec> {
    let n = pair.original.users();
    if k > n {
        return Err(Error::Contract(format!(
            "switch index {k} exceeds user count {n}"
        )));
    }
    let rules = (0..n)
        .map(|user| {
            if user < k {
                pair.matched.rules[user].clone()
            } else {
                pair.original.rules[user].clone()
            }
        })
        .collect();
    PolicySpec::new(rules, format!("{}-switch{}", pair.original.label, k))
}

// ---------------------------------------------------------------------------
// Region partition and event classification
// ---------------------------------------------------------------------------

/// Where one user's SINR vector falls relative to her feedback region and
/// matched threshold rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionClass {
    /// Inside the feedback region, below the matched threshold: only the
    /// original rule requests beam 1.
    FeedbackBelow,
    /// Inside the region at or above the threshold: both rules request.
    FeedbackAbove,
    /// Outside the region but the matched rule requests: only the threshold
    /// rule requests beam 1.
    NoFeedbackAbove,
    /// Neither rule requests beam 1.
    NoFeedbackBelow,
}

/// One user's feedback region split by her matched threshold rule. By the
/// quantile-matching construction the two single-rule-request classes carry
/// equal probability mass.
#[derive(Clone, Debug)]
pub struct RegionPartition {
    pub original_rule: FeedbackRule,
    pub matched_rule: FeedbackRule,
    pub tau: f64,
    pub family: ThresholdFamily,
}

impl RegionPartition {
    pub fn classify(&self, v: &[f64]) -> RegionClass {
        let in_region = self.original_rule.selects_beam(0, v);
        let above = self.matched_rule.selects_beam(0, v);
        match (in_region, above) {
            (true, false) => RegionClass::FeedbackBelow,
            (true, true) => RegionClass::FeedbackAbove,
            (false, true) => RegionClass::NoFeedbackAbove,
            (false, false) => RegionClass::NoFeedbackBelow,
        }
    }

    /// Monte Carlo masses of the four classes under the user's joint law.
    pub fn mass_estimates(&self, channel: &UserChannel, samples: usize, seed: u64) -> RegionMasses {
        let mut rng = Substream::new(
            seed,
            purpose::REGION_PROB,
            self.original_rule.user_index as u64,
            1,
        );
        let mut v = vec![0.0; channel.beams];
        let mut counts = [0usize; 4];
        for _ in 0..samples {
            channel.sample_vector_into(&mut rng, &mut v);
            let idx = match self.classify(&v) {
                RegionClass::FeedbackBelow => 0,
                RegionClass::FeedbackAbove => 1,
                RegionClass::NoFeedbackAbove => 2,
                RegionClass::NoFeedbackBelow => 3,
            };
            counts[idx] += 1;
        }
        let n = samples as f64;
        let p = |c: usize| c as f64 / n;
        let se = |c: usize| (p(c) * (1.0 - p(c)) / n).sqrt();
        RegionMasses {
            feedback_below: p(counts[0]),
            feedback_above: p(counts[1]),
            no_feedback_above: p(counts[2]),
            no_feedback_below: p(counts[3]),
            feedback_below_se: se(counts[0]),
            no_feedback_above_se: se(counts[2]),
            samples,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegionMasses {
    pub feedback_below: f64,
    pub feedback_above: f64,
    pub no_feedback_above: f64,
    pub no_feedback_below: f64,
    pub feedback_below_se: f64,
    pub no_feedback_above_se: f64,
    pub samples: usize,
}

/// Effect of switching user 1 to her matched rule on the beam-1
/// instantaneous rate of one realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventClass {
    Loss,
    Gain,
    Neutral,
}

fn policies_differ_only_in_first_rule(a: &PolicySpec, b: &PolicySpec) -> bool {
    a.users() == b.users()
        && a.rules
            .iter()
            .zip(&b.rules)
            .skip(1)
            .all(|(x, y)| x.kind == y.kind)
}

fn beam1_rate(policy: &PolicySpec, gamma: &SinrMatrix) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut any = false;
    for (user, rule) in policy.rules.iter().enumerate() {
        let v = gamma.user_vector(user);
        if rule.selects_beam(0, v) {
            any = true;
            if v[0] > best {
                best = v[0];
            }
        }
    }
    if any {
        best.ln_1p()
    } else {
        0.0
    }
}

/// Classify one realization by directly comparing the beam-1 instantaneous
/// rates before and after the switch. The two policies must differ only in
/// user 1's rule.
pub fn classify_event_by_rate(
    original: &PolicySpec,
    switched: &PolicySpec,
    gamma: &SinrMatrix,
) -> Result<EventClass> {
    if !policies_differ_only_in_first_rule(original, switched) {
        return Err(Error::Contract(
            "event classification requires policies differing only in user 1's rule".into(),
        ));
    }
    if original.users() != gamma.users() {
        return Err(Error::Shape {
            expected: original.users(),
            got: gamma.users(),
        });
    }
    let before = beam1_rate(original, gamma);
    let after = beam1_rate(switched, gamma);
    Ok(if after < before {
        EventClass::Loss
    } else if after > before {
        EventClass::Gain
    } else {
        EventClass::Neutral
    })
}

/// Classify one realization by region membership: a loss needs user 1 inside
/// her feedback region below the threshold *and* beating every other beam-1
/// contender; a gain needs her outside the region with the threshold rule
/// requesting, again winning; everything else is neutral.
pub fn classify_event_by_lemma(pair: &MatchedPolicyPair, gamma: &SinrMatrix) -> Result<EventClass> {
    if pair.original.users() != gamma.users() {
        return Err(Error::Shape {
            expected: pair.original.users(),
            got: gamma.users(),
        });
    }
    let partition = pair.partition(0);
    let v = gamma.user_vector(0);
    let class = partition.classify(v);
    let contender_best = best_contender_excluding(&pair.original, gamma, 0, 0);
    let own = match pair.family {
        ThresholdFamily::General => v[0],
        ThresholdFamily::MaxSinr => max_beam(v).1,
    };
    Ok(match class {
        RegionClass::FeedbackBelow if contender_best < own => EventClass::Loss,
        RegionClass::NoFeedbackAbove if contender_best < own => EventClass::Gain,
        _ => EventClass::Neutral,
    })
}

// ---------------------------------------------------------------------------
// Dominance verification
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct EventFrequencies {
    pub loss: f64,
    pub gain: f64,
    pub neutral: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionalCheck {
    pub draw_index: usize,
    pub diff: f64,
    pub std_error: f64,
    pub pass: bool,
}

/// Result of the single-user switch check on one policy.
#[derive(Clone, Debug, Serialize)]
pub struct TheoremOneReport {
    pub label: String,
    pub family: ThresholdFamily,
    pub trials: u64,
    pub seed: u64,
    /// Paired estimate of `R(switched) - R(original)`.
    pub rate_diff: f64,
    pub rate_diff_se: f64,
    /// `rate_diff >= -PASS_SIGMA * rate_diff_se`.
    pub rate_pass: bool,
    pub load: f64,
    pub load_gap: f64,
    pub load_pass: bool,
    pub event_freqs: EventFrequencies,
    /// Rate- vs region-based classifier disagreements observed.
    pub classifier_disagreements: u64,
    /// Mean beam-1 rate of the original policy on loss events, and the bound
    /// `P(loss) * log(1 + tau_1)` it must respect.
    pub loss_rate: f64,
    pub loss_rate_bound: f64,
    /// Mean beam-1 rate of the original policy on gain events; on a gain the
    /// original schedules the best other contender, so this must equal
    /// `E[log(1 + best other contender); gain]`.
    pub gain_rate: f64,
    pub gain_rate_reference: f64,
    /// Per-realization bound violations (0 expected).
    pub bound_violations: u64,
    pub conditional_checks: Vec<ConditionalCheck>,
    pub conditional_pass: bool,
}

impl TheoremOneReport {
    /// Every sub-check passed.
    pub fn pass(&self) -> bool {
        self.rate_pass
            && self.load_pass
            && self.conditional_pass
            && self.bound_violations == 0
            && self.classifier_disagreements == 0
    }
}

struct TrialObservation {
    total_before: f64,
    total_after: f64,
    beam1_before: f64,
    class: EventClass,
    agreement: bool,
    bound_ok: bool,
    gain_reference: f64,
}

fn observe_trial(
    pair: &MatchedPolicyPair,
    switched: &PolicySpec,
    partition: &RegionPartition,
    gamma: &SinrMatrix,
) -> TrialObservation {
    let beams = gamma.beams();
    let mut before = vec![0.0; beams];
    let mut after = vec![0.0; beams];
    beam_rates_into(&pair.original, gamma, &mut before);
    beam_rates_into(switched, gamma, &mut after);

    let beam1_before = before[0];
    let beam1_after = after[0];
    let class_rate = if beam1_after < beam1_before {
        EventClass::Loss
    } else if beam1_after > beam1_before {
        EventClass::Gain
    } else {
        EventClass::Neutral
    };

    let v = gamma.user_vector(0);
    let contender_best = best_contender_excluding(&pair.original, gamma, 0, 0);
    let own = match pair.family {
        ThresholdFamily::General => v[0],
        ThresholdFamily::MaxSinr => max_beam(v).1,
    };
    let class_lemma = match partition.classify(v) {
        RegionClass::FeedbackBelow if contender_best < own => EventClass::Loss,
        RegionClass::NoFeedbackAbove if contender_best < own => EventClass::Gain,
        _ => EventClass::Neutral,
    };

    let tau = pair.taus[0];
    let contender_rate = contender_best.ln_1p();
    let bound_ok = match class_lemma {
        // On a loss the original wins with a sub-threshold SINR while the
        // switched policy falls back to the best other contender.
        EventClass::Loss => beam1_before <= tau.ln_1p() + 1e-9 && beam1_after == contender_rate,
        // On a gain the original scheduled the best other contender and the
        // switched policy wins with at least max(tau, contender) SINR.
        EventClass::Gain => {
            beam1_before == contender_rate && beam1_after >= tau.max(contender_best).ln_1p() - 1e-9
        }
        EventClass::Neutral => true,
    };

    TrialObservation {
        total_before: before.iter().sum(),
        total_after: after.iter().sum(),
        beam1_before,
        class: class_lemma,
        agreement: class_rate == class_lemma,
        bound_ok,
        gain_reference: contender_rate,
    }
}

/// Paired conditional beam-1 rate difference for fixed other-user columns,
/// resampling only user 1.
fn conditional_beam1_diff(
    original: &PolicySpec,
    switched: &PolicySpec,
    model: &ChannelModel,
    others: &SinrMatrix,
    trials: u64,
    seed: u64,
) -> (f64, f64) {
    let beams = model.beams;
    let diffs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut columns = Vec::with_capacity(model.users);
            columns.push(sample_user_column(model, 0, t, seed));
            for u in 0..others.users() {
                columns.push(others.user_vector(u).to_vec());
            }
            let gamma = SinrMatrix::from_columns(&columns, beams).expect("validated columns");
            beam1_rate(switched, &gamma) - beam1_rate(original, &gamma)
        })
        .collect();
    mean_and_se(&diffs)
}

/// Check that switching user 1 to her load-matched threshold rule does not
/// lower the ergodic sum rate, whatever the other users do. Runs the paired
/// common-random-number comparison, the loss/gain bound decomposition, the
/// classifier cross-check, and conditional spot checks on frozen other-user
/// draws.
pub fn verify_theorem1(
    policy: &PolicySpec,
    model: &ChannelModel,
    trials: u64,
    seed: u64,
) -> Result<TheoremOneReport> {
    verify_theorem1_detailed(policy, model, trials, seed, DEFAULT_MATCH_SAMPLES, 5)
}

pub fn verify_theorem1_detailed(
    policy: &PolicySpec,
    model: &ChannelModel,
    trials: u64,
    seed: u64,
    match_samples: usize,
    conditional_draws: usize,
) -> Result<TheoremOneReport> {
    let family = if policy.is_max_sinr_kind() {
        ThresholdFamily::MaxSinr
    } else {
        ThresholdFamily::General
    };
    let pair = match_policy(policy, model, family, match_samples, seed)?;
    let switched = one_user_switch(&pair, 1)?;
    let partition = pair.partition(0);

    let observations: Vec<TrialObservation> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let gamma = sample_sinr_matrix(model, t, seed).expect("validated model");
            observe_trial(&pair, &switched, &partition, &gamma)
        })
        .collect();

    let diffs: Vec<f64> = observations
        .iter()
        .map(|o| o.total_after - o.total_before)
        .collect();
    let (rate_diff, rate_diff_se) = mean_and_se(&diffs);

    let n = trials as f64;
    let mut counts = [0u64; 3];
    let mut disagreements = 0u64;
    let mut bound_violations = 0u64;
    let mut loss_rates = Vec::new();
    let mut gain_rates = Vec::new();
    let mut gain_refs = Vec::new();
    for o in &observations {
        match o.class {
            EventClass::Loss => {
                counts[0] += 1;
                loss_rates.push(o.beam1_before);
            }
            EventClass::Gain => {
                counts[1] += 1;
                gain_rates.push(o.beam1_before);
                gain_refs.push(o.gain_reference);
            }
            EventClass::Neutral => counts[2] += 1,
        }
        if !o.agreement {
            disagreements += 1;
        }
        if !o.bound_ok {
            bound_violations += 1;
        }
    }
    let event_freqs = EventFrequencies {
        loss: counts[0] as f64 / n,
        gain: counts[1] as f64 / n,
        neutral: counts[2] as f64 / n,
    };
    let loss_rate = pairwise_sum(&loss_rates) / n;
    let gain_rate = pairwise_sum(&gain_rates) / n;
    let gain_rate_reference = pairwise_sum(&gain_refs) / n;
    let loss_rate_bound = event_freqs.loss * pair.taus[0].ln_1p();

    let mut conditional_checks = Vec::with_capacity(conditional_draws);
    if model.users > 1 {
        for draw in 0..conditional_draws {
            let frozen = sample_sinr_matrix(model, draw as u64, seed ^ 0xC0DE_1710)
                .expect("validated model")
                .without_user(0);
            let cond_trials = (trials / 20).clamp(500, 20_000);
            let (diff, se) = conditional_beam1_diff(
                &pair.original,
                &switched,
                model,
                &frozen,
                cond_trials,
                seed.wrapping_add(draw as u64 + 1),
            );
            conditional_checks.push(ConditionalCheck {
                draw_index: draw,
                diff,
                std_error: se,
                pass: diff >= -PASS_SIGMA * se,
            });
        }
    }
    let conditional_pass = conditional_checks.iter().all(|c| c.pass);

    Ok(TheoremOneReport {
        label: policy.label.clone(),
        family,
        trials,
        seed,
        rate_diff,
        rate_diff_se,
        rate_pass: rate_diff >= -PASS_SIGMA * rate_diff_se,
        load: pair.load(),
        load_gap: pair.load_gap,
        load_pass: pair.load_gap <= pair.load_tolerance(),
        event_freqs,
        classifier_disagreements: disagreements,
        loss_rate,
        loss_rate_bound,
        gain_rate,
        gain_rate_reference,
        bound_violations,
        conditional_checks,
        conditional_pass,
    })
}

/// One step of the switching chain.
#[derive(Clone, Debug, Serialize)]
pub struct ChainStep {
    pub switched_users: usize,
    pub diff: f64,
    pub std_error: f64,
    pub pass: bool,
}

/// Result of evaluating the full switching chain under common random
/// numbers: the estimated rate must be nondecreasing step by step while the
/// load stays constant.
#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub label: String,
    pub family: ThresholdFamily,
    pub trials: u64,
    pub seed: u64,
    pub rates: Vec<f64>,
    pub loads: Vec<f64>,
    pub load_gap: f64,
    pub load_pass: bool,
    pub steps: Vec<ChainStep>,
    pub rate_pass: bool,
}

impl ChainReport {
    pub fn pass(&self) -> bool {
        self.rate_pass && self.load_pass
    }
}

/// Evaluate every hybrid of the switching chain under common random numbers.
pub fn verify_monotone_chain(
    policy: &PolicySpec,
    model: &ChannelModel,
    trials: u64,
    seed: u64,
) -> Result<ChainReport> {
    verify_monotone_chain_detailed(policy, model, trials, seed, DEFAULT_MATCH_SAMPLES)
}

pub fn verify_monotone_chain_detailed(
    policy: &PolicySpec,
    model: &ChannelModel,
    trials: u64,
    seed: u64,
    match_samples: usize,
) -> Result<ChainReport> {
    let family = if policy.is_max_sinr_kind() {
        ThresholdFamily::MaxSinr
    } else {
        ThresholdFamily::General
    };
    let pair = match_policy(policy, model, family, match_samples, seed)?;
    let n = pair.original.users();
    let hybrids: Vec<PolicySpec> = (0..=n)
        .map(|k| one_user_switch(&pair, k))
        .collect::<Result<_>>()?;

    let beams = model.beams;
    let rows: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let gamma = sample_sinr_matrix(model, t, seed).expect("validated model");
            let mut scratch = vec![0.0; beams];
            hybrids
                .iter()
                .map(|h| {
                    beam_rates_into(h, &gamma, &mut scratch);
                    scratch.iter().sum()
                })
                .collect()
        })
        .collect();

    let mut totals: Vec<Vec<f64>> = vec![Vec::with_capacity(trials as usize); n + 1];
    for row in rows {
        for (k, v) in row.into_iter().enumerate() {
            totals[k].push(v);
        }
    }

    let rates: Vec<f64> = totals
        .iter()
        .map(|xs| pairwise_sum(xs) / trials as f64)
        .collect();
    let mut steps = Vec::with_capacity(n);
    for k in 0..n {
        let diffs: Vec<f64> = totals[k + 1]
            .iter()
            .zip(&totals[k])
            .map(|(a, b)| a - b)
            .collect();
        let (diff, se) = mean_and_se(&diffs);
        steps.push(ChainStep {
            switched_users: k + 1,
            diff,
            std_error: se,
            pass: diff >= -PASS_SIGMA * se,
        });
    }

    // Hybrid loads through the channel's distribution functions: switched
    // users contribute the matched tail, the rest their region probability.
    let mut loads = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut load = 0.0;
        for user in 0..n {
            if user < k {
                load +=
                    matched_rule_probability(family, &model.user_channel(user), pair.taus[user])?;
            } else {
                load += pair.probs[user];
            }
        }
        loads.push(load);
    }
    let base_load = loads[0];
    let load_gap = loads
        .iter()
        .map(|l| (l - base_load).abs())
        .fold(0.0, f64::max);

    Ok(ChainReport {
        label: policy.label.clone(),
        family,
        trials,
        seed,
        rates,
        loads,
        load_gap,
        load_pass: load_gap <= pair.load_tolerance(),
        rate_pass: steps.iter().all(|s| s.pass),
        steps,
    })
}

/// Classifier agreement and loss/gain mass balance for one matched pair.
#[derive(Clone, Debug, Serialize)]
pub struct EventClassificationReport {
    pub label: String,
    pub family: ThresholdFamily,
    pub trials: u64,
    pub seed: u64,
    pub freqs: EventFrequencies,
    pub disagreements: u64,
    pub mass_balance: Vec<MassBalance>,
    pub mass_pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MassBalance {
    pub user: usize,
    pub feedback_below: f64,
    pub no_feedback_above: f64,
    pub gap: f64,
    pub std_error: f64,
    pub pass: bool,
}

/// Classify `trials` realizations with both classifiers and check the
/// per-user mass balance between the two single-rule-request regions on a
/// fresh sample.
pub fn classify_events_report(
    policy: &PolicySpec,
    model: &ChannelModel,
    trials: u64,
    seed: u64,
    match_samples: usize,
) -> Result<EventClassificationReport> {
    let family = if policy.is_max_sinr_kind() {
        ThresholdFamily::MaxSinr
    } else {
        ThresholdFamily::General
    };
    let pair = match_policy(policy, model, family, match_samples, seed)?;
    let switched = one_user_switch(&pair, 1)?;

    let classes: Vec<(EventClass, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let gamma = sample_sinr_matrix(model, t, seed).expect("validated model");
            let by_rate =
                classify_event_by_rate(&pair.original, &switched, &gamma).expect("contract");
            let by_lemma = classify_event_by_lemma(&pair, &gamma).expect("shape");
            (by_lemma, by_rate == by_lemma)
        })
        .collect();

    let mut counts = [0u64; 3];
    let mut disagreements = 0;
    for (class, agree) in &classes {
        match class {
            EventClass::Loss => counts[0] += 1,
            EventClass::Gain => counts[1] += 1,
            EventClass::Neutral => counts[2] += 1,
        }
        if !agree {
            disagreements += 1;
        }
    }
    let n = trials as f64;
    let freqs = EventFrequencies {
        loss: counts[0] as f64 / n,
        gain: counts[1] as f64 / n,
        neutral: counts[2] as f64 / n,
    };

    let mass_samples = match_samples.min(200_000);
    let mass_balance: Vec<MassBalance> = (0..model.users)
        .into_par_iter()
        .map(|user| {
            let partition = pair.partition(user);
            let masses = partition.mass_estimates(
                &model.user_channel(user),
                mass_samples,
                seed ^ 0xBA1A_4CE5,
            );
            let gap = masses.no_feedback_above - masses.feedback_below;
            let se =
                (masses.feedback_below_se.powi(2) + masses.no_feedback_above_se.powi(2)).sqrt();
            MassBalance {
                user,
                feedback_below: masses.feedback_below,
                no_feedback_above: masses.no_feedback_above,
                gap,
                std_error: se,
                pass: gap.abs() <= PASS_SIGMA * se + 1e-9,
            }
        })
        .collect();

    Ok(EventClassificationReport {
        label: policy.label.clone(),
        family,
        trials,
        seed,
        freqs,
        disagreements,
        mass_pass: mass_balance.iter().all(|m| m.pass),
        mass_balance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::ChannelKind;
    use crate::policy::{
        random_box_union_policy, random_max_sinr_policy, AxisBox, BoxUnionRegion, IntervalUnion,
    };
    use crate::scheduler::paired_rate_difference;

    fn rayleigh(beams: usize, users: usize) -> ChannelModel {
        ChannelModel::new(ChannelKind::Rayleigh, 1.0, beams, users)
    }

    fn box_rule_1d(user: usize, intervals: &[(f64, f64)]) -> FeedbackRule {
        let boxes = intervals
            .iter()
            .map(|(lo, hi)| AxisBox {
                bounds: vec![(*lo, *hi)],
            })
            .collect();
        FeedbackRule {
            kind: RuleKind::BoxUnion {
                region: BoxUnionRegion::new(boxes).unwrap(),
            },
            user_index: user,
        }
    }

    #[test]
    fn threshold_policy_is_a_fixed_point_of_matching() {
        let model = rayleigh(2, 3);
        let policy = PolicySpec::gtfp(3, 0.8, "g").unwrap();
        let pair = match_gtfp(&policy, &model, 10_000, 1).unwrap();
        for (tau, orig) in pair.taus.iter().zip(&policy.rules) {
            assert!((tau - orig.threshold().unwrap()).abs() < 1e-12);
        }
        assert!(pair.load_gap < 1e-12);

        let mpolicy = PolicySpec::mtfp(3, 0.8, "m").unwrap();
        let mpair = match_mtfp(&mpolicy, &model, 10_000, 1).unwrap();
        for tau in &mpair.taus {
            assert!((tau - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_tail_box_matches_threshold_two() {
        // A [2, inf) box on a single Rayleigh beam is itself a threshold rule
        // with mass exp(-2), so matching must recover tau = 2.
        let model = rayleigh(1, 1);
        let rules = vec![box_rule_1d(0, &[(2.0, f64::INFINITY)])];
        let policy = PolicySpec::new(rules, "tail-box").unwrap();
        let pair = match_gtfp(&policy, &model, 1_000_000, 3).unwrap();
        let expected = (-2.0f64).exp();
        assert!(
            (pair.probs[0] - expected).abs() < 3.0 * (expected / 1e6_f64).sqrt() + 1e-3,
            "p = {}",
            pair.probs[0]
        );
        assert!((pair.taus[0] - 2.0).abs() < 0.02, "tau = {}", pair.taus[0]);
        assert!(pair.load_gap <= pair.load_tolerance());
    }

    #[test]
    fn empty_region_matches_never_feed_back() {
        let model = rayleigh(1, 1);
        let rules = vec![box_rule_1d(0, &[(5000.0, 5001.0)])];
        let policy = PolicySpec::new(rules, "far-box").unwrap();
        let pair = match_gtfp(&policy, &model, 50_000, 3).unwrap();
        assert_eq!(pair.probs[0], 0.0);
        assert!(pair.taus[0].is_infinite());
        assert_eq!(
            matched_rule_probability(
                ThresholdFamily::General,
                &model.user_channel(0),
                pair.taus[0]
            )
            .unwrap(),
            0.0
        );
    }

    #[test]
    fn max_sinr_interval_rule_matches_on_both_sides() {
        // Feed back iff the best beam lies in [1, 2). The matched threshold
        // must satisfy P(best beam == 1, max >= tau) = p on the true law,
        // checked here with an independent Monte Carlo oracle.
        let model = rayleigh(2, 1);
        let rules = vec![FeedbackRule {
            kind: RuleKind::MaxSinrBoxUnion {
                region: IntervalUnion::new(vec![(1.0, 2.0)]).unwrap(),
            },
            user_index: 0,
        }];
        let policy = PolicySpec::new(rules.clone(), "band").unwrap();
        let pair = match_mtfp(&policy, &model, 1_000_000, 9).unwrap();

        let channel = model.user_channel(0);
        let mut rng = Substream::new(555, purpose::PROBE, 0, 0);
        let mut v = vec![0.0; 2];
        let n = 400_000;
        let (mut in_region, mut above_tau) = (0usize, 0usize);
        for _ in 0..n {
            channel.sample_vector_into(&mut rng, &mut v);
            if rules[0].selects_beam(0, &v) {
                in_region += 1;
            }
            let (best, value) = max_beam(&v);
            if best == 0 && value >= pair.taus[0] {
                above_tau += 1;
            }
        }
        let p_region = in_region as f64 / n as f64;
        let p_tau = above_tau as f64 / n as f64;
        let se = (p_region * (1.0 - p_region) / n as f64).sqrt();
        assert!((pair.probs[0] - p_region).abs() < 3.0 * se + 1e-3);
        assert!((p_tau - pair.probs[0]).abs() < 3.0 * se + 1e-3);
    }

    #[test]
    fn single_beam_collapses_both_matchings() {
        let model = rayleigh(1, 2);
        let rules: Vec<FeedbackRule> = (0..2)
            .map(|u| FeedbackRule {
                kind: RuleKind::MaxSinrBoxUnion {
                    region: IntervalUnion::new(vec![(0.5, 1.5), (3.0, f64::INFINITY)]).unwrap(),
                },
                user_index: u,
            })
            .collect();
        let policy = PolicySpec::new(rules, "m1").unwrap();
        let g = match_gtfp(&policy, &model, 100_000, 5).unwrap();
        let m = match_mtfp(&policy, &model, 100_000, 5).unwrap();
        assert_eq!(g.taus, m.taus);
        assert_eq!(g.probs, m.probs);
    }

    #[test]
    fn mtfp_matching_rejects_general_rules() {
        let model = rayleigh(2, 1);
        let policy = PolicySpec::gtfp(1, 0.5, "g").unwrap();
        assert!(matches!(
            match_mtfp(&policy, &model, 10_000, 1),
            Err(Error::PolicyKind(_))
        ));
    }

    #[test]
    fn matching_rejects_asymmetric_rules() {
        let model = rayleigh(3, 1);
        let rule = FeedbackRule {
            kind: RuleKind::Predicate {
                accepts: std::sync::Arc::new(|v: &[f64]| v[1] > 2.0),
            },
            user_index: 0,
        };
        let policy = PolicySpec::new(vec![rule], "asym").unwrap();
        assert!(matches!(
            match_gtfp(&policy, &model, 10_000, 1),
            Err(Error::Asymmetric(_))
        ));
    }

    #[test]
    fn switch_chain_endpoints_and_constant_load() {
        let model = rayleigh(2, 4);
        let policy = random_box_union_policy(4, 2, 3, 11, "rand").unwrap();
        let pair = match_gtfp(&policy, &model, 200_000, 11).unwrap();

        let zero = one_user_switch(&pair, 0).unwrap();
        assert_eq!(zero.rules, policy.rules);
        let full = one_user_switch(&pair, 4).unwrap();
        assert_eq!(full.rules, pair.matched.rules);
        assert!(one_user_switch(&pair, 5).is_err());

        let report = verify_monotone_chain_detailed(&policy, &model, 5_000, 11, 200_000).unwrap();
        assert!(
            report.load_gap <= pair.load_tolerance(),
            "gap {}",
            report.load_gap
        );
    }

    #[test]
    fn hand_built_loss_gain_neutral_realizations() {
        // Single beam, feedback region [0.2, 0.5): its mass is about 0.21, so
        // the matched threshold sits near 1.55, far above the region.
        let model = rayleigh(1, 2);
        let rules = vec![
            box_rule_1d(0, &[(0.2, 0.5)]),
            FeedbackRule::general_threshold(1, 0.05),
        ];
        let policy = PolicySpec::new(rules, "band-low").unwrap();
        let pair = match_gtfp(&policy, &model, 500_000, 7).unwrap();
        let expected_tau = -((-0.2f64).exp() - (-0.5f64).exp()).ln();
        assert!(
            (pair.taus[0] - expected_tau).abs() < 0.02,
            "tau {}",
            pair.taus[0]
        );
        let switched = one_user_switch(&pair, 1).unwrap();

        let cases = [
            // In region, beats the contender: switching forfeits the win.
            (vec![0.3, 0.1], EventClass::Loss),
            // Above threshold, outside region, beats contender: switching wins.
            (vec![2.0, 0.1], EventClass::Gain),
            // In region but outclassed by the contender: nothing changes.
            (vec![0.3, 0.9], EventClass::Neutral),
            // Outside region, below threshold: no rule requests.
            (vec![0.7, 0.1], EventClass::Neutral),
        ];
        for (values, expected) in cases {
            let gamma = SinrMatrix::from_columns(&[vec![values[0]], vec![values[1]]], 1).unwrap();
            let by_rate = classify_event_by_rate(&policy, &switched, &gamma).unwrap();
            let by_lemma = classify_event_by_lemma(&pair, &gamma).unwrap();
            assert_eq!(by_rate, expected, "rate classifier on {values:?}");
            assert_eq!(by_lemma, expected, "region classifier on {values:?}");
        }
    }

    #[test]
    fn classify_rejects_policies_differing_elsewhere() {
        let model = rayleigh(1, 2);
        let a = PolicySpec::gtfp(2, 0.5, "a").unwrap();
        let b = PolicySpec::gtfp(2, 0.7, "b").unwrap();
        let gamma = sample_sinr_matrix(&model, 0, 1).unwrap();
        assert!(matches!(
            classify_event_by_rate(&a, &b, &gamma),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn classifiers_agree_on_sampled_realizations() {
        let model = rayleigh(2, 5);
        for seed in [1u64, 2, 3] {
            let policy = random_box_union_policy(5, 2, 3, seed, "rand").unwrap();
            let report = classify_events_report(&policy, &model, 20_000, seed, 200_000).unwrap();
            assert_eq!(report.disagreements, 0, "seed {seed}");
            assert!(report.mass_pass, "seed {seed}: {:?}", report.mass_balance);
            let f = report.freqs;
            assert!((f.loss + f.gain + f.neutral - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn switching_matched_policy_changes_nothing() {
        let model = rayleigh(2, 3);
        let policy = PolicySpec::gtfp(3, 0.7, "g").unwrap();
        let report = verify_theorem1_detailed(&policy, &model, 2_000, 3, 10_000, 2).unwrap();
        assert_eq!(report.rate_diff, 0.0);
        assert_eq!(report.rate_diff_se, 0.0);
        assert_eq!(report.event_freqs.loss, 0.0);
        assert_eq!(report.event_freqs.gain, 0.0);
        assert!(report.pass());
    }

    #[test]
    fn switch_dominance_holds_for_random_policies() {
        let model = rayleigh(2, 4);
        for seed in [21u64, 22] {
            let policy = random_box_union_policy(4, 2, 3, seed, "rand").unwrap();
            let report =
                verify_theorem1_detailed(&policy, &model, 30_000, seed, 300_000, 3).unwrap();
            assert!(report.pass(), "seed {seed}: {report:?}");
            assert!(report.loss_rate <= report.loss_rate_bound + 1e-9);
            assert!((report.gain_rate - report.gain_rate_reference).abs() < 1e-12);
        }
    }

    #[test]
    fn max_sinr_switch_dominance_holds() {
        let model = rayleigh(2, 4);
        let policy = random_max_sinr_policy(4, 3, 31, "rand-max").unwrap();
        let report = verify_theorem1_detailed(&policy, &model, 30_000, 31, 300_000, 3).unwrap();
        assert_eq!(report.family, ThresholdFamily::MaxSinr);
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn single_user_diff_matches_integration_oracle() {
        // With one user and one beam the switch difference has a closed
        // integral form: the rate gained on [tau, inf) outside the region
        // minus the rate lost inside the region below tau. Piecewise Simpson
        // on the exponential density is the independent oracle.
        let model = rayleigh(1, 1);
        let intervals = [(0.3, 0.8), (1.2, 1.6)];
        let rules = vec![box_rule_1d(0, &intervals)];
        let policy = PolicySpec::new(rules, "two-bands").unwrap();
        let trials = 400_000;
        let report = verify_theorem1_detailed(&policy, &model, trials, 13, 1_000_000, 0).unwrap();
        let tau = {
            let pair = match_gtfp(&policy, &model, 1_000_000, 13).unwrap();
            pair.taus[0]
        };

        let in_region = |x: f64| intervals.iter().any(|(lo, hi)| x >= *lo && x < *hi);
        let integrand = |x: f64| {
            let above = x >= tau;
            let sign = match (in_region(x), above) {
                (false, true) => 1.0,
                (true, false) => -1.0,
                _ => 0.0,
            };
            sign * x.ln_1p() * (-x).exp()
        };
        // Integrate piecewise between the discontinuity points.
        let mut points = [0.0, 0.3, 0.8, 1.2, 1.6, tau, 60.0];
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut oracle = 0.0;
        for w in points.windows(2) {
            oracle += simpson(integrand, w[0], w[1], 20_000);
        }
        assert!(oracle >= 0.0, "oracle = {oracle}");
        assert!(
            (report.rate_diff - oracle).abs() < 3.0 * report.rate_diff_se + 1e-4,
            "diff {} vs oracle {oracle}",
            report.rate_diff
        );
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, steps: usize) -> f64 {
        if b <= a {
            return 0.0;
        }
        let n = steps + steps % 2;
        let h = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            sum += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        sum * h / 3.0
    }

    #[test]
    fn conditional_dominance_holds_on_twenty_frozen_draws() {
        // For each of 20 frozen other-user matrices, resampling only user 1
        // must show the matched threshold rule earning at least the original
        // box rule's conditional beam-1 rate, within 3 SE.
        let model = rayleigh(2, 4);
        let policy = random_box_union_policy(4, 2, 3, 41, "rand").unwrap();
        let report = verify_theorem1_detailed(&policy, &model, 5_000, 41, 200_000, 20).unwrap();
        assert_eq!(report.conditional_checks.len(), 20);
        for check in &report.conditional_checks {
            assert!(
                check.pass,
                "draw {}: diff {} se {}",
                check.draw_index, check.diff, check.std_error
            );
        }
    }

    #[test]
    fn chain_with_one_user_reduces_to_single_switch() {
        let model = rayleigh(1, 1);
        let policy = PolicySpec::new(vec![box_rule_1d(0, &[(0.3, 0.8)])], "band").unwrap();
        let chain = verify_monotone_chain_detailed(&policy, &model, 20_000, 5, 100_000).unwrap();
        let single = verify_theorem1_detailed(&policy, &model, 20_000, 5, 100_000, 0).unwrap();
        assert_eq!(chain.steps.len(), 1);
        assert_eq!(chain.steps[0].diff, single.rate_diff);
    }

    #[test]
    fn default_entry_points_use_full_matching_samples() {
        let model = rayleigh(2, 2);
        let policy = random_box_union_policy(2, 2, 2, 61, "rand").unwrap();
        let single = verify_theorem1(&policy, &model, 1_000, 61).unwrap();
        assert_eq!(single.conditional_checks.len(), 5);
        assert!(single.pass(), "{single:?}");
        let chain = verify_monotone_chain(&policy, &model, 1_000, 61).unwrap();
        assert!(chain.pass(), "{chain:?}");
    }

    #[test]
    fn homogeneous_policy_chain_is_nondecreasing() {
        let model = rayleigh(2, 4);
        let template = box_rule_1d(0, &[(0.4, 1.1)]);
        let rules: Vec<FeedbackRule> = (0..4)
            .map(|u| {
                let mut boxes = match &template.kind {
                    RuleKind::BoxUnion { region } => region.boxes.clone(),
                    _ => unreachable!(),
                };
                for b in &mut boxes {
                    b.bounds = vec![(0.4, 1.1), (0.0, f64::INFINITY)];
                }
                FeedbackRule {
                    kind: RuleKind::BoxUnion {
                        region: BoxUnionRegion::new(boxes).unwrap(),
                    },
                    user_index: u,
                }
            })
            .collect();
        let policy = PolicySpec::new(rules, "homog-band").unwrap();
        assert!(policy.is_homogeneous());
        let report = verify_monotone_chain_detailed(&policy, &model, 30_000, 17, 200_000).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn switch_dominance_is_distribution_independent() {
        // The construction never inspects the fading law; check it end to
        // end on Rician and Nakagami models, including the table-backed
        // load-gap evaluation.
        let rician = ChannelModel::new(ChannelKind::Rician { k_factor: 3.0 }, 1.0, 2, 3);
        let policy = random_box_union_policy(3, 2, 3, 71, "rician-rand").unwrap();
        let report = verify_theorem1_detailed(&policy, &rician, 20_000, 71, 1_000_000, 2).unwrap();
        assert!(report.pass(), "rician: {report:?}");

        let nakagami = ChannelModel::new(ChannelKind::Nakagami { m: 2.0 }, 1.0, 2, 3);
        let policy = random_max_sinr_policy(3, 3, 72, "nakagami-rand").unwrap();
        let chain =
            verify_monotone_chain_detailed(&policy, &nakagami, 20_000, 72, 1_000_000).unwrap();
        assert!(chain.pass(), "nakagami: {chain:?}");
    }

    #[test]
    fn gtfp_dominates_mtfp_at_equal_thresholds() {
        let model = rayleigh(2, 4);
        for tau in [0.4, 0.9, 1.5] {
            let gtfp = PolicySpec::gtfp(4, tau, "g").unwrap();
            let mtfp = PolicySpec::mtfp(4, tau, "m").unwrap();
            let d = paired_rate_difference(&mtfp, &gtfp, &model, 30_000, 29).unwrap();
            assert!(
                d.mean >= -PASS_SIGMA * d.std_error,
                "tau {tau}: diff {} se {}",
                d.mean,
                d.std_error
            );
        }
    }
}
