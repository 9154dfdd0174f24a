use std::fmt;
use std::sync::Arc;

use crate::hjb::SigmoidFinal;

/// Scalar function of the final state.
#[derive(Clone)]
pub enum Observable {
    /// `1{x_i > threshold}`.
    Above {
        species: usize,
        threshold: f64,
    },
    /// `x_i` itself.
    Count {
        species: usize,
    },
    /// Smooth surrogate of an indicator, used as a terminal value.
    Sigmoid(SigmoidFinal),
    Constant(f64),
    Custom {
        name: String,
        f: Arc<dyn Fn(&[i64]) -> f64 + Send + Sync>,
    },
}

impl Observable {
    pub fn above(species: usize, threshold: f64) -> Self {
        Observable::Above { species, threshold }
    }

    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(&[i64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Observable::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[i64]) -> f64 {
        match self {
            Observable::Above { species, threshold } => {
                if x[*species] as f64 > *threshold {
                    1.0
                } else {
                    0.0
                }
            }
            Observable::Count { species } => x[*species] as f64,
            Observable::Sigmoid(s) => s.eval(x),
            Observable::Constant(c) => *c,
            Observable::Custom { f, .. } => f(x),
        }
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, Observable::Above { .. })
    }

    pub fn describe(&self) -> String {
        match self {
            Observable::Above { species, threshold } => format!("1{{x[{species}] > {threshold}}}"),
            Observable::Count { species } => format!("x[{species}]"),
            Observable::Sigmoid(s) => format!(
                "sigmoid(x[{}]; b={}, beta={})",
                s.species, s.offset, s.slope
            ),
            Observable::Constant(c) => format!("const {c}"),
            Observable::Custom { name, .. } => format!("custom {name}"),
        }
    }
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}
