//! Hidden-layer combinations.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Neuron counts of each hidden layer, e.g. `(3, 4, 3)`.
///
/// Ordering is lexicographic over the layer sizes. The text form is the sizes
/// joined by `-` (`3-4-3`); the parenthesised form `(3,4,3)` is also accepted when
/// parsing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LayerCombo(Vec<usize>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseComboError {
    #[error("empty layer combination")]
    Empty,
    #[error("invalid layer size `{0}`")]
    InvalidSize(String),
    #[error("layer sizes must be at least 1")]
    ZeroSize,
}

impl LayerCombo {
    /// Builds a combination; every size must be at least one.
    pub fn new(sizes: Vec<usize>) -> Result<Self, ParseComboError> {
        if sizes.is_empty() {
            return Err(ParseComboError::Empty);
        }
        if sizes.contains(&0) {
            return Err(ParseComboError::ZeroSize);
        }
        Ok(Self(sizes))
    }

    /// `n_layers` copies of `width`.
    pub fn uniform(width: usize, n_layers: usize) -> Self {
        assert!(width >= 1 && n_layers >= 1, "uniform combo needs width, layers >= 1");
        Self(vec![width; n_layers])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.0
    }

    pub fn n_layers(&self) -> usize {
        self.0.len()
    }

    pub fn min_size(&self) -> usize {
        *self.0.iter().min().expect("combo is non-empty")
    }

    pub fn max_size(&self) -> usize {
        *self.0.iter().max().expect("combo is non-empty")
    }
}

impl fmt::Display for LayerCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for LayerCombo {
    type Err = ParseComboError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        if inner.trim().is_empty() {
            return Err(ParseComboError::Empty);
        }
        let sizes = inner
            .split(['-', ','])
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse::<usize>()
                    .map_err(|_| ParseComboError::InvalidSize(p.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        LayerCombo::new(sizes)
    }
}

impl Serialize for LayerCombo {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerCombo {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
