//! Closed-form expectations for a build with oversizing factor `gamma`.
//!
//! With `p = 1 - e^{-1/gamma}` the probability that a key collides at a level,
//! `|F_d| = p^d * n` in expectation, the level arrays add up to
//! `gamma * e^{1/gamma} * n` bits, and the construction peak and spill peak
//! follow from the same geometric series.

/// Probability that a key of a level collides with another key.
pub fn collision_probability(gamma: f64) -> f64 {
    1.0 - (-1.0 / gamma).exp()
}

/// Level-array bits per key, without rank support: `gamma * e^{1/gamma}`.
pub fn predict_core_bits_per_key(gamma: f64) -> f64 {
    gamma * (1.0 / gamma).exp()
}

/// Structure bits per key including one 64-bit checkpoint per `rank_interval`
/// positions.
pub fn predict_bits_per_key(gamma: f64, rank_interval: u32) -> f64 {
    (1.0 + 64.0 / rank_interval as f64) * predict_core_bits_per_key(gamma)
}

/// Peak construction memory over final structure size (level bits only).
///
/// For `gamma <= 1/ln 2` the peak is reached at the last level and equals the
/// structure itself; beyond that the peak is at level 0 and equals
/// `2 * e^{-1/gamma}` times the structure.
pub fn predict_peak_memory_ratio(gamma: f64) -> f64 {
    (2.0 * (-1.0 / gamma).exp()).max(1.0)
}

/// Expected `|F_d| / n`.
pub fn predict_level_fraction(gamma: f64, d: u32) -> f64 {
    collision_probability(gamma).powi(d as i32)
}

/// Expected `(|F_1| + |F_2|) / n`, the largest amount of spilled keys.
pub fn predict_peak_spill_ratio(gamma: f64) -> f64 {
    let p = collision_probability(gamma);
    p + p * p
}

/// Expected fraction of keys whose level is `d`.
pub fn predict_placed_at_level(gamma: f64, d: u32) -> f64 {
    predict_level_fraction(gamma, d) * (-1.0 / gamma).exp()
}

/// Expected mean of `level + 1` over all keys, `e^{1/gamma}`.
pub fn predict_mean_level(gamma: f64) -> f64 {
    (1.0 / gamma).exp()
}

/// Mean and standard deviation of a binomial count over `trials` trials.
pub fn binomial_band(trials: u64, p: f64) -> (f64, f64) {
    let t = trials as f64;
    (t * p, (t * p * (1.0 - p)).sqrt())
}

/// All predictors evaluated for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub gamma: f64,
    pub bits_per_key_core: f64,
    pub bits_per_key_total: f64,
    pub peak_memory_ratio: f64,
    pub peak_spill_ratio: f64,
    pub mean_level: f64,
}

impl Prediction {
    pub fn new(gamma: f64, rank_interval: u32) -> Self {
        Prediction {
            gamma,
            bits_per_key_core: predict_core_bits_per_key(gamma),
            bits_per_key_total: predict_bits_per_key(gamma, rank_interval),
            peak_memory_ratio: predict_peak_memory_ratio(gamma),
            peak_spill_ratio: predict_peak_spill_ratio(gamma),
            mean_level: predict_mean_level(gamma),
        }
    }

    pub fn level_fraction(&self, d: u32) -> f64 {
        predict_level_fraction(self.gamma, d)
    }
}
