//! Counter-based random substreams for reproducible parallel simulation.
//!
//! Every random quantity in the simulator is drawn from a [`Substream`]
//! addressed by `(seed, purpose, a, b)`. A substream is a SplitMix64 sequence
//! whose starting counter is derived statelessly from its address, so any
//! worker can reconstruct any substream without coordination: results are a
//! pure function of the address, never of the parallel schedule. This is also
//! what makes common-random-number comparisons possible — two policies
//! evaluated with the same seed consume identical draws.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream purposes. Distinct purposes give statistically independent draws
/// for the same `(seed, a, b)` address.
pub mod purpose {
    /// Per-(user, trial) fading realizations.
    pub const TRIAL: u64 = 1;
    /// Per-user sampling used by load matching.
    pub const MATCH: u64 = 2;
    /// Fixed-seed quantile tables.
    pub const TABLE: u64 = 3;
    /// Beam-symmetry probe vectors.
    pub const PROBE: u64 = 4;
    /// Monte Carlo feedback-region probabilities.
    pub const REGION_PROB: u64 = 5;
    /// Random policy generation.
    pub const POLICY_GEN: u64 = 6;
    /// Optimizer restarts.
    pub const OPTIMIZER: u64 = 7;
    /// Conditional-rate spot checks.
    pub const CONDITIONAL: u64 = 8;
}

/// A deterministic random substream addressed by `(seed, purpose, a, b)`.
#[derive(Clone, Debug)]
pub struct Substream {
    state: u64,
    cached_normal: Option<f64>,
}

impl Substream {
    pub fn new(seed: u64, purpose: u64, a: u64, b: u64) -> Self {
        let mut s = seed;
        s = mix(s ^ purpose.wrapping_mul(GOLDEN));
        s = mix(s ^ a.wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
        s = mix(s ^ b.wrapping_mul(0x1656_67B1_9E37_79F9));
        Substream {
            state: s,
            cached_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform draw on the open interval (0, 1). Both endpoints are excluded
    /// so downstream logs never see 0 or 1 exactly.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw on [lo, hi).
    #[inline]
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Integer draw on [0, n).
    #[inline]
    pub fn next_usize(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Exponential draw with unit mean.
    #[inline]
    pub fn next_exp(&mut self) -> f64 {
        -self.next_f64().ln()
    }

    /// Standard normal draw (Box-Muller; the paired value is cached).
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Gamma draw with the given shape and unit scale (Marsaglia-Tsang).
    /// Valid for shape >= 0.5; shapes below 1 use the boost identity
    /// `Gamma(a) = Gamma(a + 1) * U^(1/a)`.
    pub fn next_gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape >= 0.5);
        if shape < 1.0 {
            let boost = self.next_f64().powf(1.0 / shape);
            return self.next_gamma(shape + 1.0) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.next_normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.next_f64();
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return d * v;
            }
        }
    }
}
