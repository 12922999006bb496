//! Distances between values and between traces.

use crate::seqlang::TemporalPred;
use crate::value::Value;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistanceError {
    #[error("distance table has no entry for ({0}, {1})")]
    Undefined(Value, Value),
    #[error("{0} is a trace distance and cannot compare single values")]
    TraceLevelOnly(&'static str),
    #[error("distance computation failed: {0}")]
    Arith(#[from] crate::value::ValueError),
}

fn inf() -> Value {
    Value::Inf
}

/// A distance on values, possibly lifted to traces.
///
/// `PastForgetful` compares trace prefixes by their final events only.
/// `DNew` is the three-valued trace distance: 0 for equal prefixes, 1 when
/// the prefixes differ but one of them is standard so far and all pointwise
/// base distances stay within `kappa_in`, and 2 otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distance {
    AbsDiff,
    Discrete {
        #[serde(default = "inf")]
        unequal: Value,
    },
    Table {
        entries: Vec<(Value, Value, Value)>,
    },
    PastForgetful {
        base: Box<Distance>,
    },
    DNew {
        base: Box<Distance>,
        kappa_in: Value,
        stdin: Box<TemporalPred>,
    },
}

impl Distance {
    /// Distance between two single values. Trace-level structure collapses
    /// where that is meaningful: a past-forgetful lift of `d` on length-one
    /// prefixes is just `d`.
    pub fn value_dist(&self, a: Value, b: Value) -> Result<Value, DistanceError> {
        match self {
            Distance::AbsDiff => Ok(a.abs_diff(b)),
            Distance::Discrete { unequal } => {
                Ok(if a == b { Value::ZERO } else { *unequal })
            }
            Distance::Table { entries } => entries
                .iter()
                .find(|(x, y, _)| (*x == a && *y == b) || (*x == b && *y == a))
                .map(|(_, _, d)| *d)
                .ok_or(DistanceError::Undefined(a, b)),
            Distance::PastForgetful { base } => base.value_dist(a, b),
            Distance::DNew { .. } => Err(DistanceError::TraceLevelOnly("the three-valued trace distance")),
        }
    }

    /// The underlying value distance, with trace lifts stripped.
    pub fn base(&self) -> &Distance {
        match self {
            Distance::PastForgetful { base } | Distance::DNew { base, .. } => base.base(),
            other => other,
        }
    }

    pub fn is_past_forgetful(&self) -> bool {
        matches!(self, Distance::PastForgetful { .. })
    }

    pub fn as_dnew(&self) -> Option<(&Distance, Value, &TemporalPred)> {
        match self {
            Distance::DNew { base, kappa_in, stdin } => Some((base, *kappa_in, stdin)),
            _ => None,
        }
    }

    /// Max-lift over several variable pairs: the distance between two
    /// valuations is the largest per-variable distance.
    pub fn valuation_dist<'a>(
        &self,
        pairs: impl IntoIterator<Item = (Value, Value)> + 'a,
    ) -> Result<Value, DistanceError> {
        let mut worst = Value::ZERO;
        for (a, b) in pairs {
            worst = worst.max(self.value_dist(a, b)?);
        }
        Ok(worst)
    }
}
