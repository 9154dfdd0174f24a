use serde::{Deserialize, Serialize};

/// Default slope of the smoothed indicator.
pub const DEFAULT_SLOPE: f64 = 4.0;

/// Logistic surrogate `1 / (1 + exp(-b - beta * s_i))` of `1{s_i > gamma}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFinal {
    pub offset: f64,
    pub slope: f64,
    pub species: usize,
}

impl SigmoidFinal {
    /// Midpoint half-way between the lattice points `gamma` and `gamma + 1`.
    pub fn for_threshold(species: usize, threshold: f64, slope: f64) -> Self {
        Self {
            offset: -slope * (threshold + 0.5),
            slope,
            species,
        }
    }

    #[inline]
    pub fn eval(&self, s: &[i64]) -> f64 {
        1.0 / (1.0 + (-self.offset - self.slope * s[self.species] as f64).exp())
    }
}

/// Free-function form of [`SigmoidFinal::eval`].
pub fn sigmoid_final(cfg: &SigmoidFinal, s: &[i64]) -> f64 {
    cfg.eval(s)
}
