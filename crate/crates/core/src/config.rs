//! Declarative experiment configuration.
//!
//! Experiments are described by a single TOML file: a model block, a list of
//! policy declarations, the task to run, and the sampling controls. The seed
//! is mandatory — there is no wall-clock fallback — so any config file plus
//! the binary reproduces its outputs byte for byte.
//!
//! ```toml
//! task = "simulate"
//! seed = 42
//! trials = 100000
//!
//! [model]
//! kind = "rayleigh"
//! snr = 1.0
//! beams = 2
//! users = 10
//!
//! [[policy]]
//! label = "half"
//! kind = "gtfp"
//! probability = 0.5
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{ChannelKind, ChannelModel, Statistic, SyntheticMarginal};
use crate::policy::{
    random_box_union_policy, random_max_sinr_policy, AxisBox, BoxUnionRegion, FeedbackRule,
    IntervalUnion, PolicySpec, RuleKind,
};
use crate::scheduler::LogBase;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Estimate ergodic rates and feedback loads for each policy.
    Simulate,
    /// Build the load-matched threshold policy for each policy.
    Match,
    /// Check that the single-user switch never lowers the rate.
    VerifyTheorem1,
    /// Check the full switching chain is rate-nondecreasing at constant load.
    VerifyChain,
    /// Classify loss/gain/neutral events with both classifiers.
    ClassifyEvents,
    /// Solve the threshold-selection problem under the feedback budget.
    Optimize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// One of: `rayleigh`, `rician`, `nakagami`, `synthetic-exponential`,
    /// `synthetic-uniform`.
    pub kind: String,
    pub snr: f64,
    pub beams: usize,
    pub users: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rician_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nakagami_m: Option<f64>,
    /// Mean of the synthetic exponential marginal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    /// Bounds of the synthetic uniform marginal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_multipliers: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub label: String,
    /// One of: `gtfp`, `mtfp`, `box-union`, `max-sinr-box-union`,
    /// `random-box-union`, `random-max-sinr`.
    pub kind: String,
    /// Homogeneous threshold (may be `inf` for never-feed-back).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Per-user thresholds, length `users`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    /// Homogeneous feedback probability, resolved through the quantiles.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    /// Box-union template shared by all users: each box lists one
    /// `[lo, hi]` pair per beam (`hi` may be `inf`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<Vec<[f64; 2]>>>,
    /// Intervals on the maximum SINR for `max-sinr-box-union`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<[f64; 2]>>,
    /// Number of random policies this block expands to.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_boxes: Option<u32>,
    /// Seed offset for random policy generation (mixed with the run seed).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub seed: u64,
    pub trials: u64,
    #[serde(default)]
    pub log_base: LogBase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Samples for empirical load matching (default 10^6).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_samples: Option<u64>,
    /// Grid resolution for the optimize task (enables the simplex grid when
    /// the model has at most 3 users).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    /// Random restarts for coordinate ascent (default 4).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<u32>,
    /// Threshold family for the optimize task: `gtfp` (default) or `mtfp`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    pub model: ModelConfig,
    #[serde(default)]
    pub policy: Vec<PolicyConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Stable hash of the effective configuration, carried on every output
    /// row so results join back to the exact config that produced them.
    pub fn hash(&self) -> String {
        let text = self.to_toml();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    pub fn build_model(&self) -> Result<ChannelModel> {
        let m = &self.model;
        let kind = match m.kind.as_str() {
            "rayleigh" => ChannelKind::Rayleigh,
            "rician" => ChannelKind::Rician {
                k_factor: m
                    .rician_k
                    .ok_or_else(|| Error::Config("rician model needs `rician_k`".into()))?,
            },
            "nakagami" => ChannelKind::Nakagami {
                m: m.nakagami_m
                    .ok_or_else(|| Error::Config("nakagami model needs `nakagami_m`".into()))?,
            },
            "synthetic-exponential" => ChannelKind::Synthetic {
                marginal: SyntheticMarginal::Exponential {
                    mean: m.mean.ok_or_else(|| {
                        Error::Config("synthetic-exponential model needs `mean`".into())
                    })?,
                },
            },
            "synthetic-uniform" => ChannelKind::Synthetic {
                marginal: SyntheticMarginal::Uniform {
                    lo: m.lo.ok_or_else(|| {
                        Error::Config("synthetic-uniform model needs `lo`".into())
                    })?,
                    hi: m.hi.ok_or_else(|| {
                        Error::Config("synthetic-uniform model needs `hi`".into())
                    })?,
                },
            },
            other => return Err(Error::Config(format!("unknown model kind `{other}`"))),
        };
        let mut model = ChannelModel::new(kind, m.snr, m.beams, m.users);
        if let Some(mults) = &m.snr_multipliers {
            model = model.with_multipliers(mults.clone());
        }
        model.validate()?;
        Ok(model)
    }

    /// Expand the policy declarations into concrete policies. Probabilities
    /// resolve to thresholds through the per-user quantile functions; random
    /// blocks expand to `count` seeded policies.
    pub fn build_policies(&self, model: &ChannelModel) -> Result<Vec<PolicySpec>> {
        let mut out = Vec::new();
        for decl in &self.policy {
            out.extend(build_policy(decl, model, self.seed)?);
        }
        Ok(out)
    }
}

fn per_user_values(
    homogeneous: Option<f64>,
    per_user: &Option<Vec<f64>>,
    users: usize,
    what: &str,
) -> Result<Vec<f64>> {
    match (homogeneous, per_user) {
        (Some(v), None) => Ok(vec![v; users]),
        (None, Some(vs)) => {
            if vs.len() != users {
                return Err(Error::Config(format!(
                    "{what} length {} does not match user count {users}",
                    vs.len()
                )));
            }
            Ok(vs.clone())
        }
        (Some(_), Some(_)) => Err(Error::Config(format!(
            "give either a scalar or a per-user list for {what}, not both"
        ))),
        (None, None) => Err(Error::Config(format!("missing {what}"))),
    }
}

fn threshold_values(
    decl: &PolicyConfig,
    model: &ChannelModel,
    statistic: Statistic,
) -> Result<Vec<f64>> {
    let users = model.users;
    if decl.probability.is_some() || decl.probabilities.is_some() {
        if decl.threshold.is_some() || decl.thresholds.is_some() {
            return Err(Error::Config(format!(
                "policy `{}`: give thresholds or probabilities, not both",
                decl.label
            )));
        }
        let probs = per_user_values(
            decl.probability,
            &decl.probabilities,
            users,
            "probabilities",
        )?;
        let mut taus = Vec::with_capacity(users);
        for (user, p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Config(format!(
                    "policy `{}`: probability {p} outside [0, 1]",
                    decl.label
                )));
            }
            let q = match statistic {
                Statistic::Beam1 => *p,
                // For max-SINR rules the declared value is the beam-1
                // request probability, capped at 1/M.
                Statistic::MaxOverBeams => {
                    let q = model.beams as f64 * p;
                    if q > 1.0 + 1e-12 {
                        return Err(Error::Config(format!(
                            "policy `{}`: beam-1 probability {p} exceeds 1/{}",
                            decl.label, model.beams
                        )));
                    }
                    q.min(1.0)
                }
            };
            taus.push(model.user_channel(user).upper_quantile(q, statistic)?);
        }
        Ok(taus)
    } else {
        let taus = per_user_values(decl.threshold, &decl.thresholds, users, "thresholds")?;
        if taus.iter().any(|t| *t < 0.0 || t.is_nan()) {
            return Err(Error::Config(format!(
                "policy `{}`: thresholds must be nonnegative",
                decl.label
            )));
        }
        Ok(taus)
    }
}

fn build_policy(decl: &PolicyConfig, model: &ChannelModel, seed: u64) -> Result<Vec<PolicySpec>> {
    let users = model.users;
    match decl.kind.as_str() {
        "gtfp" => {
            let taus = threshold_values(decl, model, Statistic::Beam1)?;
            let rules = taus
                .iter()
                .enumerate()
                .map(|(u, tau)| FeedbackRule::general_threshold(u, *tau))
                .collect();
            Ok(vec![PolicySpec::new(rules, decl.label.clone())?])
        }
        "mtfp" => {
            let taus = threshold_values(decl, model, Statistic::MaxOverBeams)?;
            let rules = taus
                .iter()
                .enumerate()
                .map(|(u, tau)| FeedbackRule::max_sinr_threshold(u, *tau))
                .collect();
            Ok(vec![PolicySpec::new(rules, decl.label.clone())?])
        }
        "box-union" => {
            let boxes = decl.boxes.as_ref().ok_or_else(|| {
                Error::Config(format!("policy `{}`: box-union needs `boxes`", decl.label))
            })?;
            let axis_boxes: Result<Vec<AxisBox>> = boxes
                .iter()
                .map(|b| {
                    if b.len() != model.beams {
                        return Err(Error::Config(format!(
                            "policy `{}`: box has {} bounds for {} beams",
                            decl.label,
                            b.len(),
                            model.beams
                        )));
                    }
                    let bx = AxisBox {
                        bounds: b.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
                    };
                    bx.validate()?;
                    Ok(bx)
                })
                .collect();
            let region = BoxUnionRegion::new(axis_boxes?)?;
            let rules = (0..users)
                .map(|u| FeedbackRule {
                    kind: RuleKind::BoxUnion {
                        region: region.clone(),
                    },
                    user_index: u,
                })
                .collect();
            Ok(vec![PolicySpec::new(rules, decl.label.clone())?])
        }
        "max-sinr-box-union" => {
            let intervals = decl.intervals.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "policy `{}`: max-sinr-box-union needs `intervals`",
                    decl.label
                ))
            })?;
            let region = IntervalUnion::new(intervals.iter().map(|[lo, hi]| (*lo, *hi)).collect())?;
            let rules = (0..users)
                .map(|u| FeedbackRule {
                    kind: RuleKind::MaxSinrBoxUnion {
                        region: region.clone(),
                    },
                    user_index: u,
                })
                .collect();
            Ok(vec![PolicySpec::new(rules, decl.label.clone())?])
        }
        "random-box-union" => {
            let count = decl.count.unwrap_or(1);
            let max_boxes = decl.max_boxes.unwrap_or(3) as usize;
            let base = seed ^ decl.policy_seed.unwrap_or(0);
            (0..count)
                .map(|i| {
                    random_box_union_policy(
                        users,
                        model.beams,
                        max_boxes,
                        base.wrapping_add(i as u64),
                        format!("{}-{i}", decl.label),
                    )
                })
                .collect()
        }
        "random-max-sinr" => {
            let count = decl.count.unwrap_or(1);
            let max_intervals = decl.max_boxes.unwrap_or(3) as usize;
            let base = seed ^ decl.policy_seed.unwrap_or(0);
            (0..count)
                .map(|i| {
                    random_max_sinr_policy(
                        users,
                        max_intervals,
                        base.wrapping_add(i as u64),
                        format!("{}-{i}", decl.label),
                    )
                })
                .collect()
        }
        other => Err(Error::Config(format!(
            "policy `{}`: unknown kind `{other}`",
            decl.label
        ))),
    }
}

/// Structural diagnostics without executing anything. Empty means valid.
pub fn validate(config: &ExperimentConfig) -> Vec<String> {
    let mut diags = Vec::new();
    if config.trials < crate::scheduler::MIN_TRIALS {
        diags.push(format!(
            "trials must be at least {}, got {}",
            crate::scheduler::MIN_TRIALS,
            config.trials
        ));
    }
    let model = match config.build_model() {
        Ok(m) => Some(m),
        Err(e) => {
            diags.push(e.to_string());
            None
        }
    };
    match config.task {
        TaskKind::Optimize => {
            match config.lambda {
                None => diags.push("optimize task needs `lambda`".into()),
                Some(l) if l <= 0.0 => diags.push("infeasible feedback budget".into()),
                _ => {}
            }
            if let Some(r) = config.resolution {
                if !(r > 0.0 && r <= 0.1) {
                    diags.push(format!("grid resolution must lie in (0, 0.1], got {r}"));
                }
            }
            if let Some(kind) = &config.policy_kind {
                if kind != "gtfp" && kind != "mtfp" {
                    diags.push(format!("unknown policy kind `{kind}` (use gtfp or mtfp)"));
                }
            }
        }
        _ => {
            if config.policy.is_empty() {
                diags.push("this task needs at least one [[policy]] block".into());
            }
        }
    }
    if let Some(l) = config.lambda {
        if l < 0.0 {
            let msg = "infeasible feedback budget".to_string();
            if !diags.contains(&msg) {
                diags.push(msg);
            }
        }
    }
    if let Some(model) = model {
        match config.build_policies(&model) {
            Ok(policies) => {
                for p in &policies {
                    if p.users() != model.users {
                        diags.push(format!(
                            "policy `{}` has {} rules for {} users",
                            p.label,
                            p.users(),
                            model.users
                        ));
                    }
                }
            }
            Err(e) => diags.push(e.to_string()),
        }
    }
    diags
}
