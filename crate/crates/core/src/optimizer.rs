//! Threshold selection over feedback probabilities.
//!
//! Restricting attention to threshold policies turns the search for a
//! rate-optimal feedback policy into a finite-dimensional problem: choose
//! per-user feedback probabilities `p` in `[0, 1]^n` with `sum(p) <= lambda`,
//! map each `p_i` back to a threshold through the channel's quantile
//! function, and maximize the Monte Carlo rate estimate. Probabilities are
//! the natural parameterization because the load constraint is linear in
//! them and the feasible set is compact.
//!
//! All evaluations inside one solver run share a pre-sampled trial bank
//! (common random numbers), so the rate surface seen by the solver is a
//! deterministic function and reruns with the same seed reproduce the exact
//! trace. The objective is not necessarily concave; the coordinate-ascent
//! solver therefore supports multiple starts, and an exhaustive simplex grid
//! is available as a small-n reference.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fading::{ChannelModel, Statistic, UserChannel};
use crate::policy::PolicySpec;
use crate::rng::{purpose, Substream};
use crate::scheduler::{mean_and_se, pairwise_sum, LogBase, RateEstimate};

/// Which threshold family the solver optimizes over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdPolicyKind {
    /// General threshold rules: `p_i = P(beam-1 SINR >= tau_i)`, so each
    /// probability ranges over [0, 1].
    Gtfp,
    /// Maximum-SINR threshold rules: `p_i = P(best beam == 1 and max SINR >=
    /// tau_i)`, which caps each probability at `1/M`.
    Mtfp,
}

/// Feasibility slack on the load constraint.
pub const FEASIBILITY_EPS: f64 = 1e-9;

/// A threshold vector with its equivalent feedback probabilities.
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdVector {
    pub taus: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ThresholdVector {
    pub fn users(&self) -> usize {
        self.taus.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    HomogeneousGolden,
    CoordinateAscent,
    SimplexGrid,
}

/// One evaluated point of a solver trace.
#[derive(Clone, Debug, Serialize)]
pub struct TracePoint {
    pub probs: Vec<f64>,
    pub taus: Vec<f64>,
    pub rate: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizationResult {
    pub best: ThresholdVector,
    pub rate: RateEstimate,
    pub method: SearchMethod,
    pub iterations: u64,
    pub oracle_calls: u64,
    pub trace: Vec<TracePoint>,
}

/// Rate oracle over feedback-probability vectors with a pre-sampled trial
/// bank: every evaluation reuses the same SINR realizations.
pub struct RateOracle {
    channels: Vec<UserChannel>,
    kind: ThresholdPolicyKind,
    trials: u64,
    seed: u64,
    beams: usize,
    // Trial-major, then user-major: entry (t, u, m) at ((t * n) + u) * M + m.
    bank: Vec<f64>,
    calls: AtomicU64,
}

impl RateOracle {
    pub fn new(
        model: &ChannelModel,
        kind: ThresholdPolicyKind,
        trials: u64,
        seed: u64,
    ) -> Result<Self> {
        model.validate()?;
        if trials < crate::scheduler::MIN_TRIALS {
            return Err(Error::Contract(format!(
                "need at least {} trials, got {trials}",
                crate::scheduler::MIN_TRIALS
            )));
        }
        let n = model.users;
        let beams = model.beams;
        let channels: Vec<UserChannel> = (0..n).map(|u| model.user_channel(u)).collect();
        // Identical substreams to the trial sampler, so oracle evaluations
        // agree bit for bit with the scheduler on the same seed.
        let per_user: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|user| {
                let channel = channels[user];
                let mut out = vec![0.0; trials as usize * beams];
                for t in 0..trials {
                    let mut rng = Substream::new(seed, purpose::TRIAL, user as u64, t);
                    channel.sample_vector_into(
                        &mut rng,
                        &mut out[t as usize * beams..(t as usize + 1) * beams],
                    );
                }
                out
            })
            .collect();
        let mut bank = vec![0.0; trials as usize * n * beams];
        for t in 0..trials as usize {
            for (user, col) in per_user.iter().enumerate() {
                let src = &col[t * beams..(t + 1) * beams];
                let dst = ((t * n) + user) * beams;
                bank[dst..dst + beams].copy_from_slice(src);
            }
        }
        Ok(RateOracle {
            channels,
            kind,
            trials,
            seed,
            beams,
            bank,
            calls: AtomicU64::new(0),
        })
    }

    pub fn users(&self) -> usize {
        self.channels.len()
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Largest admissible per-user probability for this policy kind.
    pub fn prob_upper_bound(&self) -> f64 {
        match self.kind {
            ThresholdPolicyKind::Gtfp => 1.0,
            ThresholdPolicyKind::Mtfp => 1.0 / self.beams as f64,
        }
    }

    /// Resolve probabilities to thresholds through the channel quantiles.
    pub fn threshold_vector(&self, probs: &[f64]) -> Result<ThresholdVector> {
        if probs.len() != self.users() {
            return Err(Error::Shape {
                expected: self.users(),
                got: probs.len(),
            });
        }
        let ub = self.prob_upper_bound();
        let mut taus = Vec::with_capacity(probs.len());
        for (user, p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(p) || *p > ub + FEASIBILITY_EPS {
                return Err(Error::Domain(format!(
                    "probability {p} for user {user} outside [0, {ub}]"
                )));
            }
            let tau = match self.kind {
                ThresholdPolicyKind::Gtfp => {
                    self.channels[user].upper_quantile(*p, Statistic::Beam1)?
                }
                ThresholdPolicyKind::Mtfp => {
                    // p is the beam-1 request probability; the max-SINR tail
                    // target is M * p.
                    let q = (self.beams as f64 * p).min(1.0);
                    self.channels[user].upper_quantile(q, Statistic::MaxOverBeams)?
                }
            };
            taus.push(tau);
        }
        Ok(ThresholdVector {
            taus,
            probs: probs.to_vec(),
        })
    }

    /// Threshold policy realizing a probability vector.
    pub fn policy_for(&self, probs: &[f64], label: &str) -> Result<PolicySpec> {
        let tv = self.threshold_vector(probs)?;
        let rules = tv
            .taus
            .iter()
            .enumerate()
            .map(|(user, tau)| match self.kind {
                ThresholdPolicyKind::Gtfp => {
                    crate::policy::FeedbackRule::general_threshold(user, *tau)
                }
                ThresholdPolicyKind::Mtfp => {
                    crate::policy::FeedbackRule::max_sinr_threshold(user, *tau)
                }
            })
            .collect();
        PolicySpec::new(rules, label)
    }

    /// Rate estimate at a probability vector, on the shared trial bank.
    pub fn rate_for(&self, probs: &[f64]) -> Result<(ThresholdVector, RateEstimate)> {
        let tv = self.threshold_vector(probs)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        let n = self.users();
        let beams = self.beams;
        let is_gtfp = self.kind == ThresholdPolicyKind::Gtfp;
        let taus = &tv.taus;
        let bank = &self.bank;
        let per_trial: Vec<(f64, [f64; 8])> = (0..self.trials as usize)
            .into_par_iter()
            .map(|t| {
                let mut beam_rates = [0.0f64; 8];
                let base = t * n * beams;
                for (m, rate) in beam_rates.iter_mut().take(beams).enumerate() {
                    let mut best = 0.0f64;
                    for user in 0..n {
                        let v = &bank[base + user * beams..base + (user + 1) * beams];
                        let selected = if is_gtfp {
                            v[m] >= taus[user]
                        } else {
                            let (b, val) = crate::fading::max_beam(v);
                            b == m && val >= taus[user]
                        };
                        if selected && v[m] > best {
                            best = v[m];
                        }
                    }
                    *rate = best.ln_1p();
                }
                let total: f64 = beam_rates[..beams].iter().sum();
                (total, beam_rates)
            })
            .collect();
        let totals: Vec<f64> = per_trial.iter().map(|(t, _)| *t).collect();
        let (_, se) = mean_and_se(&totals);
        let mut per_beam_means = Vec::with_capacity(beams);
        for m in 0..beams {
            let xs: Vec<f64> = per_trial.iter().map(|(_, b)| b[m]).collect();
            per_beam_means.push(pairwise_sum(&xs) / self.trials as f64);
        }
        let mean: f64 = per_beam_means.iter().sum();
        Ok((
            tv,
            RateEstimate {
                mean,
                std_error: se,
                ci95: (mean - 1.96 * se, mean + 1.96 * se),
                trials: self.trials,
                seed: self.seed,
                per_beam_means,
                unit: LogBase::Nats,
            },
        ))
    }
}

fn check_feasible(probs: &[f64], lambda: f64, ub: f64) -> Result<()> {
    if probs.iter().any(|p| *p < 0.0 || *p > ub + FEASIBILITY_EPS) {
        return Err(Error::Infeasible(format!(
            "probabilities {probs:?} violate the per-user bound {ub}"
        )));
    }
    if probs.iter().sum::<f64>() > lambda + FEASIBILITY_EPS {
        return Err(Error::Infeasible(format!(
            "probabilities {probs:?} exceed the feedback budget {lambda}"
        )));
    }
    Ok(())
}

struct Search<'a> {
    oracle: &'a RateOracle,
}

impl Search<'_> {
    fn eval(&self, probs: &[f64]) -> Result<TracePoint> {
        let (tv, est) = self.oracle.rate_for(probs)?;
        Ok(TracePoint {
            probs: probs.to_vec(),
            taus: tv.taus,
            rate: est.mean,
            std_error: est.std_error,
        })
    }

    /// Golden-section maximization of `p -> rate(point(p))` on [lo, hi],
    /// endpoints included. Returns the best probed point; when
    /// `improvements` is given, each best-so-far update is appended to it.
    fn golden_line(
        &self,
        point: impl Fn(f64) -> Vec<f64>,
        lo: f64,
        hi: f64,
        tol: f64,
        mut improvements: Option<&mut Vec<TracePoint>>,
    ) -> Result<TracePoint> {
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut best = self.eval(&point(lo))?;
        if let Some(out) = improvements.as_deref_mut() {
            out.push(best.clone());
        }
        let mut record = |candidate: &TracePoint, best: &mut TracePoint| {
            if candidate.rate > best.rate {
                *best = candidate.clone();
                if let Some(out) = improvements.as_deref_mut() {
                    out.push(candidate.clone());
                }
            }
        };
        let at_hi = self.eval(&point(hi))?;
        record(&at_hi, &mut best);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut pc = self.eval(&point(c))?;
        let mut pd = self.eval(&point(d))?;
        record(&pc, &mut best);
        record(&pd, &mut best);
        while b - a > tol {
            if pc.rate > pd.rate {
                b = d;
                d = c;
                pd = pc;
                c = b - INV_PHI * (b - a);
                pc = self.eval(&point(c))?;
                record(&pc, &mut best);
            } else {
                a = c;
                c = d;
                pc = pd;
                d = a + INV_PHI * (b - a);
                pd = self.eval(&point(d))?;
                record(&pd, &mut best);
            }
        }
        Ok(best)
    }
}

const LINE_TOL: f64 = 1e-3;
const MAX_CYCLES: u64 = 12;

/// Maximize the rate over homogeneous probability vectors `p * 1` with
/// `p <= min(upper bound, lambda / n)`, by golden-section search on the
/// common-random-number oracle.
pub fn homogeneous_search(
    model: &ChannelModel,
    lambda: f64,
    kind: ThresholdPolicyKind,
    trials: u64,
    seed: u64,
) -> Result<OptimizationResult> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::Infeasible(format!(
            "feedback budget must be positive, got {lambda}"
        )));
    }
    let oracle = RateOracle::new(model, kind, trials, seed)?;
    let n = oracle.users();
    let hi = oracle.prob_upper_bound().min(lambda / n as f64);
    let search = Search { oracle: &oracle };
    let mut trace = Vec::new();
    let best = search.golden_line(|p| vec![p; n], 0.0, hi, LINE_TOL, Some(&mut trace))?;
    let (tv, est) = oracle.rate_for(&best.probs)?;
    Ok(OptimizationResult {
        best: tv,
        rate: est,
        method: SearchMethod::HomogeneousGolden,
        iterations: trace.len() as u64,
        oracle_calls: oracle.calls(),
        trace,
    })
}

/// Cyclic coordinate ascent from a feasible starting point: each pass
/// line-searches every coordinate over its feasible interval, and the loop
/// stops when a full cycle improves the estimate by less than one standard
/// error.
pub fn coordinate_ascent(
    model: &ChannelModel,
    lambda: f64,
    kind: ThresholdPolicyKind,
    trials: u64,
    seed: u64,
    init: &[f64],
) -> Result<OptimizationResult> {
    let oracle = RateOracle::new(model, kind, trials, seed)?;
    coordinate_ascent_on(&oracle, lambda, init)
}

fn coordinate_ascent_on(
    oracle: &RateOracle,
    lambda: f64,
    init: &[f64],
) -> Result<OptimizationResult> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::Infeasible(format!(
            "feedback budget must be positive, got {lambda}"
        )));
    }
    let n = oracle.users();
    if init.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: init.len(),
        });
    }
    let ub = oracle.prob_upper_bound();
    check_feasible(init, lambda, ub)?;

    let search = Search { oracle };
    let mut probs = init.to_vec();
    // The trace records accepted iterates only, so its rate column is
    // nondecreasing by construction; line-search probes count toward
    // `oracle_calls` but are not iterates.
    let mut trace = vec![search.eval(&probs)?];
    let mut cycles = 0;
    for _ in 0..MAX_CYCLES {
        cycles += 1;
        let cycle_start_rate = trace.last().expect("nonempty").rate;
        for i in 0..n {
            let others: f64 = probs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| *p)
                .sum();
            let hi = ub.min((lambda - others).max(0.0));
            let base = probs.clone();
            let line_best = search.golden_line(
                |p| {
                    let mut q = base.clone();
                    q[i] = p;
                    q
                },
                0.0,
                hi,
                LINE_TOL,
                None,
            )?;
            if line_best.rate > trace.last().expect("nonempty").rate {
                probs.clone_from(&line_best.probs);
                trace.push(line_best);
            }
        }
        let current = trace.last().expect("nonempty");
        let improvement = current.rate - cycle_start_rate;
        if improvement <= 0.0 || improvement < current.std_error {
            break;
        }
    }
    check_feasible(&probs, lambda, ub)?;
    let (tv, est) = oracle.rate_for(&probs)?;
    Ok(OptimizationResult {
        best: tv,
        rate: est,
        method: SearchMethod::CoordinateAscent,
        iterations: cycles,
        oracle_calls: oracle.calls(),
        trace,
    })
}

/// Coordinate ascent from the homogeneous point plus random feasible
/// restarts, keeping the best end point. The objective need not be concave,
/// so a single start can stall in a local basin.
pub fn multi_start_coordinate_ascent(
    model: &ChannelModel,
    lambda: f64,
    kind: ThresholdPolicyKind,
    trials: u64,
    seed: u64,
    restarts: usize,
) -> Result<OptimizationResult> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::Infeasible(format!(
            "feedback budget must be positive, got {lambda}"
        )));
    }
    let oracle = RateOracle::new(model, kind, trials, seed)?;
    let n = oracle.users();
    let ub = oracle.prob_upper_bound();
    let homog = vec![ub.min(lambda / n as f64); n];
    let mut starts = vec![homog];
    let mut rng = Substream::new(seed, purpose::OPTIMIZER, 0, 0);
    for _ in 0..restarts {
        // Random feasible point: scale a random direction to a random
        // fraction of the budget.
        let raw: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let total: f64 = raw.iter().sum();
        let budget = lambda * rng.next_f64();
        let point: Vec<f64> = raw.iter().map(|r| (r / total * budget).min(ub)).collect();
        starts.push(point);
    }
    let mut best: Option<OptimizationResult> = None;
    for start in &starts {
        let result = coordinate_ascent_on(&oracle, lambda, start)?;
        match &best {
            Some(b) if b.rate.mean >= result.rate.mean => {}
            _ => best = Some(result),
        }
    }
    let mut best = best.expect("at least one start");
    best.oracle_calls = oracle.calls();
    Ok(best)
}

/// Exhaustive grid evaluation plus its argmax.
#[derive(Clone, Debug, Serialize)]
pub struct GridResult {
    pub best: OptimizationResult,
    /// Full rate surface, one point per feasible grid node.
    pub surface: Vec<TracePoint>,
    pub resolution: f64,
}

/// Evaluate the oracle on every grid point of the feasible set
/// `{p : sum(p) <= lambda, 0 <= p_i <= bound}` (n <= 3).
pub fn simplex_grid(
    model: &ChannelModel,
    lambda: f64,
    kind: ThresholdPolicyKind,
    resolution: f64,
    trials: u64,
    seed: u64,
) -> Result<GridResult> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Infeasible(format!(
            "feedback budget must be nonnegative, got {lambda}"
        )));
    }
    if model.users > 3 {
        return Err(Error::Config(format!(
            "simplex grid supports at most 3 users, got {}",
            model.users
        )));
    }
    if !(resolution > 0.0 && resolution <= 0.1) {
        return Err(Error::Domain(format!(
            "grid resolution must lie in (0, 0.1], got {resolution}"
        )));
    }
    let oracle = RateOracle::new(model, kind, trials, seed)?;
    let n = oracle.users();
    let ub = oracle.prob_upper_bound();

    let axis_steps = (ub / resolution).floor() as usize;
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut current = vec![0.0; n];
    enumerate_grid(
        &mut points,
        &mut current,
        0,
        axis_steps,
        resolution,
        lambda,
        ub,
    );

    let mut surface = Vec::with_capacity(points.len());
    let mut best_idx = 0;
    let mut best_rate = f64::NEG_INFINITY;
    for (idx, p) in points.iter().enumerate() {
        let (tv, est) = oracle.rate_for(p)?;
        surface.push(TracePoint {
            probs: p.clone(),
            taus: tv.taus,
            rate: est.mean,
            std_error: est.std_error,
        });
        if est.mean > best_rate {
            best_rate = est.mean;
            best_idx = idx;
        }
    }
    let (tv, est) = oracle.rate_for(&points[best_idx])?;
    let best = OptimizationResult {
        best: tv,
        rate: est,
        method: SearchMethod::SimplexGrid,
        iterations: points.len() as u64,
        oracle_calls: oracle.calls(),
        trace: vec![surface[best_idx].clone()],
    };
    Ok(GridResult {
        best,
        surface,
        resolution,
    })
}

fn enumerate_grid(
    out: &mut Vec<Vec<f64>>,
    current: &mut Vec<f64>,
    dim: usize,
    axis_steps: usize,
    resolution: f64,
    lambda: f64,
    ub: f64,
) {
    if dim == current.len() {
        out.push(current.clone());
        return;
    }
    let used: f64 = current[..dim].iter().sum();
    for step in 0..=axis_steps {
        let p = step as f64 * resolution;
        if p > ub + FEASIBILITY_EPS || used + p > lambda + FEASIBILITY_EPS {
            break;
        }
        current[dim] = p;
        enumerate_grid(out, current, dim + 1, axis_steps, resolution, lambda, ub);
    }
    current[dim] = 0.0;
}

/// Rate gap between the grid optimum and its nearest evaluated neighbors:
/// the resolution-induced modulus used when comparing solvers against the
/// grid reference.
pub fn grid_step_modulus(grid: &GridResult) -> f64 {
    let best = &grid.best.trace[0];
    let mut modulus = 0.0f64;
    for point in &grid.surface {
        let dist: f64 = point
            .probs
            .iter()
            .zip(&best.probs)
            .map(|(a, b)| (a - b).abs())
            .sum();
        if dist > FEASIBILITY_EPS && dist <= grid.resolution + FEASIBILITY_EPS {
            modulus = modulus.max(best.rate - point.rate);
        }
    }
    modulus
}
