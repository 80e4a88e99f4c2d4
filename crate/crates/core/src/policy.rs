//! Decentralized, beam-symmetric feedback rules and their evaluation.
//!
//! A feedback rule maps one user's SINR vector to a feedback packet (a set of
//! requested beams with their reported SINR values) or to the no-feedback
//! symbol. Rules are decentralized by construction: evaluation sees only the
//! owning user's vector.
//!
//! Region-based kinds are defined by a beam-1 template and symmetrized: beam
//! `k` is requested iff the template accepts the vector with beams 1 and `k`
//! swapped. The symmetrized rule is beam symmetric whenever the template is
//! invariant under permutations of the non-first coordinates (always true for
//! M <= 2); [`check_beam_symmetry`] verifies this on probe vectors.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fading::{max_beam, UserChannel};
use crate::rng::{purpose, Substream};

/// One user's feedback packet: requested beams with their reported SINR
/// values, or the empty no-feedback packet.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackDecision {
    /// Requested beam indices, ascending.
    pub requested: Vec<usize>,
    /// Reported SINR per requested beam, aligned with `requested`.
    pub reported: Vec<f64>,
}

impl FeedbackDecision {
    pub fn empty() -> Self {
        FeedbackDecision {
            requested: Vec::new(),
            reported: Vec::new(),
        }
    }

    /// True for the no-feedback packet.
    pub fn is_empty(&self) -> bool {
        self.requested.is_empty()
    }

    pub fn reported_for(&self, beam: usize) -> Option<f64> {
        self.requested
            .iter()
            .position(|b| *b == beam)
            .map(|i| self.reported[i])
    }
}

/// Axis-aligned half-open box in nonnegative M-space: coordinate `j` must lie
/// in `[lo_j, hi_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisBox {
    pub bounds: Vec<(f64, f64)>,
}

impl AxisBox {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in &self.bounds {
            if !(*lo >= 0.0 && lo.is_finite() && hi > lo) {
                return Err(Error::Config(format!(
                    "box bounds must satisfy 0 <= lo < hi, got [{lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    /// Membership of the vector with coordinates 0 and `swap` exchanged,
    /// evaluated without materializing the swap.
    #[inline]
    fn contains_swapped(&self, v: &[f64], swap: usize) -> bool {
        self.bounds.iter().enumerate().all(|(j, (lo, hi))| {
            let idx = if j == 0 {
                swap
            } else if j == swap {
                0
            } else {
                j
            };
            let x = v[idx];
            x >= *lo && x < *hi
        })
    }
}

/// Finite union of axis-aligned boxes: the beam-1 feedback region template.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxUnionRegion {
    pub boxes: Vec<AxisBox>,
}

impl BoxUnionRegion {
    pub fn new(boxes: Vec<AxisBox>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::Config(
                "box union must contain at least one box".into(),
            ));
        }
        let dim = boxes[0].bounds.len();
        for b in &boxes {
            b.validate()?;
            if b.bounds.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    got: b.bounds.len(),
                });
            }
        }
        Ok(BoxUnionRegion { boxes })
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].bounds.len()
    }

    #[inline]
    fn contains_swapped(&self, v: &[f64], swap: usize) -> bool {
        self.boxes.iter().any(|b| b.contains_swapped(v, swap))
    }
}

/// Finite union of half-open intervals on the maximum SINR.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalUnion {
    pub intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Config("interval union must not be empty".into()));
        }
        for (lo, hi) in &intervals {
            if !(*lo >= 0.0 && lo.is_finite() && hi > lo) {
                return Err(Error::Config(format!(
                    "interval must satisfy 0 <= lo < hi, got [{lo}, {hi})"
                )));
            }
        }
        Ok(IntervalUnion { intervals })
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|(lo, hi)| x >= *lo && x < *hi)
    }
}

/// Opaque beam-1 acceptance template for predicate rules.
pub type PredicateFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// The decision map of a feedback rule.
#[derive(Clone)]
pub enum RuleKind {
    /// Request every beam whose SINR meets the threshold.
    GeneralThreshold { tau: f64 },
    /// Request only the maximum-SINR beam, and only when it meets the
    /// threshold.
    MaxSinrThreshold { tau: f64 },
    /// Symmetrized box-union template on the full SINR vector.
    BoxUnion { region: BoxUnionRegion },
    /// Request only the maximum-SINR beam, when the maximum lies in the
    /// region.
    MaxSinrBoxUnion { region: IntervalUnion },
    /// Opaque beam-1 template, symmetrized. For adversarial tests; symmetry
    /// and decentralization are checked, not guaranteed.
    Predicate { accepts: PredicateFn },
}

impl fmt::Debug for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleKind::GeneralThreshold { tau } => write!(f, "GeneralThreshold({tau})"),
            RuleKind::MaxSinrThreshold { tau } => write!(f, "MaxSinrThreshold({tau})"),
            RuleKind::BoxUnion { region } => write!(f, "BoxUnion({} boxes)", region.boxes.len()),
            RuleKind::MaxSinrBoxUnion { region } => {
                write!(f, "MaxSinrBoxUnion({} intervals)", region.intervals.len())
            }
            RuleKind::Predicate { .. } => write!(f, "Predicate"),
        }
    }
}

impl PartialEq for RuleKind {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (RuleKind::GeneralThreshold { tau: a }, RuleKind::GeneralThreshold { tau: b }) => {
                a == b
            }
            (RuleKind::MaxSinrThreshold { tau: a }, RuleKind::MaxSinrThreshold { tau: b }) => {
                a == b
            }
            (RuleKind::BoxUnion { region: a }, RuleKind::BoxUnion { region: b }) => a == b,
            (RuleKind::MaxSinrBoxUnion { region: a }, RuleKind::MaxSinrBoxUnion { region: b }) => {
                a == b
            }
            (RuleKind::Predicate { accepts: a }, RuleKind::Predicate { accepts: b }) => {
                Arc::ptr_eq(a, b)
            }
            _ => false,
        }
    }
}

/// One user's feedback rule.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackRule {
    pub kind: RuleKind,
    pub user_index: usize,
}

impl FeedbackRule {
    pub fn general_threshold(user_index: usize, tau: f64) -> Self {
        FeedbackRule {
            kind: RuleKind::GeneralThreshold { tau },
            user_index,
        }
    }

    pub fn max_sinr_threshold(user_index: usize, tau: f64) -> Self {
        FeedbackRule {
            kind: RuleKind::MaxSinrThreshold { tau },
            user_index,
        }
    }

    /// True for rules that request at most the argmax beam.
    pub fn is_max_sinr_kind(&self) -> bool {
        matches!(
            self.kind,
            RuleKind::MaxSinrThreshold { .. } | RuleKind::MaxSinrBoxUnion { .. }
        )
    }

    pub fn threshold(&self) -> Option<f64> {
        match self.kind {
            RuleKind::GeneralThreshold { tau } | RuleKind::MaxSinrThreshold { tau } => Some(tau),
            _ => None,
        }
    }

    /// Beam count the rule's template was written for, when it has one.
    pub fn template_dim(&self) -> Option<usize> {
        match &self.kind {
            RuleKind::BoxUnion { region } => Some(region.dim()),
            _ => None,
        }
    }

    /// Does the rule request `beam` on this vector? Infallible hot path; the
    /// vector length must already agree with the rule (see [`Self::evaluate`]).
    #[inline]
    pub fn selects_beam(&self, beam: usize, v: &[f64]) -> bool {
        match &self.kind {
            RuleKind::GeneralThreshold { tau } => v[beam] >= *tau,
            RuleKind::MaxSinrThreshold { tau } => {
                let (best, value) = max_beam(v);
                best == beam && value >= *tau
            }
            RuleKind::BoxUnion { region } => region.contains_swapped(v, beam),
            RuleKind::MaxSinrBoxUnion { region } => {
                let (best, value) = max_beam(v);
                best == beam && region.contains(value)
            }
            RuleKind::Predicate { accepts } => {
                let mut swapped = v.to_vec();
                swapped.swap(0, beam);
                accepts(&swapped)
            }
        }
    }

    /// Full decision: requested beams with reported SINR values.
    pub fn evaluate(&self, v: &[f64]) -> Result<FeedbackDecision> {
        if v.is_empty() {
            return Err(Error::Shape {
                expected: 1,
                got: 0,
            });
        }
        if let Some(dim) = self.template_dim() {
            if v.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        let mut decision = FeedbackDecision::empty();
        match &self.kind {
            // Max-SINR kinds carry at most the argmax beam.
            RuleKind::MaxSinrThreshold { .. } | RuleKind::MaxSinrBoxUnion { .. } => {
                let (best, value) = max_beam(v);
                if self.selects_beam(best, v) {
                    decision.requested.push(best);
                    decision.reported.push(value);
                }
            }
            _ => {
                for beam in 0..v.len() {
                    if self.selects_beam(beam, v) {
                        decision.requested.push(beam);
                        decision.reported.push(v[beam]);
                    }
                }
            }
        }
        Ok(decision)
    }
}

/// A system-wide feedback policy: one rule per user.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySpec {
    pub rules: Vec<FeedbackRule>,
    pub label: String,
}

impl PolicySpec {
    pub fn new(rules: Vec<FeedbackRule>, label: impl Into<String>) -> Result<Self> {
        let spec = PolicySpec {
            rules,
            label: label.into(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Homogeneous policy: every user applies the same rule kind/parameters.
    pub fn homogeneous(kind: RuleKind, users: usize, label: impl Into<String>) -> Result<Self> {
        let rules = (0..users)
            .map(|i| FeedbackRule {
                kind: kind.clone(),
                user_index: i,
            })
            .collect();
        PolicySpec::new(rules, label)
    }

    /// Homogeneous general threshold policy.
    pub fn gtfp(users: usize, tau: f64, label: impl Into<String>) -> Result<Self> {
        PolicySpec::homogeneous(RuleKind::GeneralThreshold { tau }, users, label)
    }

    /// Homogeneous maximum-SINR threshold policy.
    pub fn mtfp(users: usize, tau: f64, label: impl Into<String>) -> Result<Self> {
        PolicySpec::homogeneous(RuleKind::MaxSinrThreshold { tau }, users, label)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::Config(
                "policy must contain at least one rule".into(),
            ));
        }
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.user_index != i {
                return Err(Error::Config(format!(
                    "rule {} carries user index {}",
                    i, rule.user_index
                )));
            }
        }
        Ok(())
    }

    pub fn users(&self) -> usize {
        self.rules.len()
    }

    pub fn is_max_sinr_kind(&self) -> bool {
        self.rules.iter().all(|r| r.is_max_sinr_kind())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.rules.iter().all(|r| r.kind == self.rules[0].kind)
    }

    /// Template/beam-count compatibility with an M-beam system.
    pub fn validate_for_beams(&self, beams: usize) -> Result<()> {
        for rule in &self.rules {
            if let Some(dim) = rule.template_dim() {
                if dim != beams {
                    return Err(Error::Shape {
                        expected: beams,
                        got: dim,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

// ---------------------------------------------------------------------------
// Beam symmetry checking
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryViolation {
    pub probe_index: usize,
    pub permutation: Vec<usize>,
    pub expected: Vec<usize>,
    pub got: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct SymmetryReport {
    pub probes_checked: usize,
    pub permutations_checked: usize,
    /// Mismatches on probes with exactly tied coordinates: the lowest-index
    /// argmax tie-break is deterministic but not permutation-equivariant on
    /// this measure-zero set. Noted, not counted as violations.
    pub tie_deviations: usize,
    pub violation: Option<SymmetryViolation>,
}

impl SymmetryReport {
    pub fn is_symmetric(&self) -> bool {
        self.violation.is_none()
    }
}

fn has_exact_tie(v: &[f64]) -> bool {
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i] == v[j] {
                return true;
            }
        }
    }
    false
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut all = Vec::new();
    let mut current: Vec<usize> = (0..m).collect();
    heap_permute(&mut current, m, &mut all);
    all
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k.is_multiple_of(2) {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

/// Verify that permuting beams in the input permutes the requested beam set
/// identically, for every probe vector and every beam permutation. The first
/// violation (if any) is reported; violations are report content, not errors.
pub fn check_beam_symmetry(rule: &FeedbackRule, probes: &[SinrProbe]) -> Result<SymmetryReport> {
    if probes.is_empty() {
        return Err(Error::Contract(
            "symmetry check needs at least one probe".into(),
        ));
    }
    let m = probes[0].len();
    if m > 6 {
        return Err(Error::Config(format!(
            "symmetry check enumerates all permutations; {m} beams is too many"
        )));
    }
    let perms = permutations(m);
    let mut report = SymmetryReport::default();
    for (probe_index, probe) in probes.iter().enumerate() {
        if probe.len() != m {
            return Err(Error::Shape {
                expected: m,
                got: probe.len(),
            });
        }
        let base = rule.evaluate(probe)?.requested;
        for perm in &perms {
            // permuted[j] = probe[perm[j]]: beam j of the permuted vector
            // carries what beam perm[j] carried before.
            let permuted: Vec<f64> = perm.iter().map(|&src| probe[src]).collect();
            let got = rule.evaluate(&permuted)?.requested;
            // Beam j is requested on the permuted input iff beam perm[j] was
            // requested on the original.
            let mut expected: Vec<usize> = (0..m).filter(|j| base.contains(&perm[*j])).collect();
            expected.sort_unstable();
            report.permutations_checked += 1;
            if got != expected {
                if has_exact_tie(probe) {
                    report.tie_deviations += 1;
                    continue;
                }
                report.violation = Some(SymmetryViolation {
                    probe_index,
                    permutation: perm.clone(),
                    expected,
                    got,
                });
                report.probes_checked = probe_index + 1;
                return Ok(report);
            }
        }
        report.probes_checked = probe_index + 1;
    }
    Ok(report)
}

/// Probe vectors are plain SINR slices.
pub type SinrProbe = Vec<f64>;

/// Seeded probe vectors for symmetry checks (i.i.d. exponential entries plus
/// a few deliberate near-tie patterns).
pub fn symmetry_probes(beams: usize, count: usize, seed: u64) -> Vec<SinrProbe> {
    let mut rng = Substream::new(seed, purpose::PROBE, beams as u64, 0);
    let mut probes = Vec::with_capacity(count);
    for _ in 0..count {
        probes.push((0..beams).map(|_| 2.0 * rng.next_exp()).collect());
    }
    if beams >= 2 && count >= 2 {
        probes[0] = vec![0.5; beams];
        let mut spread: Vec<f64> = (0..beams).map(|b| 0.4 + 0.7 * b as f64).collect();
        spread.swap(0, beams - 1);
        probes[1] = spread;
    }
    probes
}

/// Quick accept/reject wrapper used by the matching constructions.
pub fn require_beam_symmetric(rule: &FeedbackRule, beams: usize, seed: u64) -> Result<()> {
    let probes = symmetry_probes(beams, 64, seed);
    let report = check_beam_symmetry(rule, &probes)?;
    match report.violation {
        None => Ok(()),
        Some(v) => Err(Error::Asymmetric(format!(
            "user {} rule: probe {} under permutation {:?} requested {:?}, expected {:?}",
            rule.user_index, v.probe_index, v.permutation, v.got, v.expected
        ))),
    }
}

// ---------------------------------------------------------------------------
// Feedback-region probabilities
// ---------------------------------------------------------------------------

/// How a probability value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbabilitySource {
    /// Exact closed form.
    ClosedForm,
    /// Deterministic fixed-seed empirical table.
    Table,
    /// Monte Carlo estimate under the caller's seed.
    MonteCarlo,
}

#[derive(Clone, Copy, Debug)]
pub struct FeedbackProbability {
    pub value: f64,
    pub std_error: f64,
    pub source: ProbabilitySource,
}

/// P(rule selects beam 1) under the user's joint SINR law.
///
/// Threshold kinds resolve through the channel's distribution functions;
/// region kinds are estimated by Monte Carlo with `samples` draws,
/// deterministic given `seed`.
pub fn beam1_feedback_region_probability(
    rule: &FeedbackRule,
    channel: &UserChannel,
    samples: usize,
    seed: u64,
) -> Result<FeedbackProbability> {
    match &rule.kind {
        RuleKind::GeneralThreshold { tau } => {
            let value = if tau.is_infinite() {
                0.0
            } else {
                channel.beam1_tail(*tau)?
            };
            let source = if channel.has_closed_form_marginal() {
                ProbabilitySource::ClosedForm
            } else {
                ProbabilitySource::Table
            };
            Ok(FeedbackProbability {
                value,
                std_error: 0.0,
                source,
            })
        }
        RuleKind::MaxSinrThreshold { tau } => {
            let value = if tau.is_infinite() {
                0.0
            } else {
                channel.max_tail(*tau)? / channel.beams as f64
            };
            // Above 1 the max tail reduces to the per-beam tail, so the
            // source is whatever the marginal provides; below 1 the dependent
            // joint law comes from the table.
            let source = if channel.has_closed_form_marginal()
                && (*tau >= 1.0 || channel.beams == 1 || !channel.kind.is_beamforming())
            {
                ProbabilitySource::ClosedForm
            } else {
                ProbabilitySource::Table
            };
            Ok(FeedbackProbability {
                value,
                std_error: 0.0,
                source,
            })
        }
        _ => {
            if samples < 1_000 {
                return Err(Error::Contract(format!(
                    "region probability needs at least 1000 samples, got {samples}"
                )));
            }
            let mut rng = Substream::new(seed, purpose::REGION_PROB, rule.user_index as u64, 0);
            let mut vector = vec![0.0; channel.beams];
            let mut hits = 0usize;
            for _ in 0..samples {
                channel.sample_vector_into(&mut rng, &mut vector);
                if rule.selects_beam(0, &vector) {
                    hits += 1;
                }
            }
            let p = hits as f64 / samples as f64;
            Ok(FeedbackProbability {
                value: p,
                std_error: (p * (1.0 - p) / samples as f64).sqrt(),
                source: ProbabilitySource::MonteCarlo,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Random test policies
// ---------------------------------------------------------------------------

/// Seeded random box-union policy with per-user templates. Tail coordinates
/// of every box share one interval, which keeps the symmetrized rule beam
/// symmetric for any M.
pub fn random_box_union_policy(
    users: usize,
    beams: usize,
    max_boxes: usize,
    seed: u64,
    label: impl Into<String>,
) -> Result<PolicySpec> {
    let mut rules = Vec::with_capacity(users);
    for user in 0..users {
        let mut rng = Substream::new(seed, purpose::POLICY_GEN, user as u64, 0);
        let count = 1 + rng.next_usize(max_boxes.max(1));
        let mut boxes = Vec::with_capacity(count);
        for _ in 0..count {
            let lo0 = rng.next_range(0.0, 1.5);
            let hi0 = if rng.next_f64() < 0.3 {
                f64::INFINITY
            } else {
                lo0 + rng.next_range(0.3, 3.0)
            };
            let tail = if beams == 1 || rng.next_f64() < 0.5 {
                (0.0, f64::INFINITY)
            } else {
                let lo = rng.next_range(0.0, 1.0);
                let hi = if rng.next_f64() < 0.3 {
                    f64::INFINITY
                } else {
                    lo + rng.next_range(0.5, 4.0)
                };
                (lo, hi)
            };
            let mut bounds = vec![(lo0, hi0)];
            bounds.resize(beams, tail);
            boxes.push(AxisBox { bounds });
        }
        rules.push(FeedbackRule {
            kind: RuleKind::BoxUnion {
                region: BoxUnionRegion::new(boxes)?,
            },
            user_index: user,
        });
    }
    PolicySpec::new(rules, label)
}

/// Seeded random maximum-SINR policy: each user feeds back her best beam iff
/// its SINR falls in a random union of intervals.
pub fn random_max_sinr_policy(
    users: usize,
    max_intervals: usize,
    seed: u64,
    label: impl Into<String>,
) -> Result<PolicySpec> {
    let mut rules = Vec::with_capacity(users);
    for user in 0..users {
        let mut rng = Substream::new(seed, purpose::POLICY_GEN, user as u64, 1);
        let count = 1 + rng.next_usize(max_intervals.max(1));
        let mut intervals = Vec::with_capacity(count);
        for i in 0..count {
            let lo = rng.next_range(0.0, 2.5);
            let hi = if i + 1 == count && rng.next_f64() < 0.4 {
                f64::INFINITY
            } else {
                lo + rng.next_range(0.3, 2.5)
            };
            intervals.push((lo, hi));
        }
        rules.push(FeedbackRule {
            kind: RuleKind::MaxSinrBoxUnion {
                region: IntervalUnion::new(intervals)?,
            },
            user_index: user,
        });
    }
    PolicySpec::new(rules, label)
}
