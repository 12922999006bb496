//! Deviation-bound functions: how much output distance a given input
//! distance may excuse.

use crate::value::Value;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundFnError {
    #[error("bound function table has no entry for {0}")]
    Undefined(Value),
    #[error("bound function is undefined at infinity")]
    AtInfinity,
    #[error("bound function arithmetic failed: {0}")]
    Arith(#[from] crate::value::ValueError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundFn {
    /// `kappa_out` while the input distance stays within `kappa_in`,
    /// unbounded beyond.
    Threshold { kappa_in: Value, kappa_out: Value },
    /// `slope * x + offset`.
    Affine { slope: Value, offset: Value },
    /// Exact lookup.
    Table { entries: Vec<(Value, Value)> },
    Const { value: Value },
}

impl BoundFn {
    pub fn apply(&self, x: Value) -> Result<Value, BoundFnError> {
        match self {
            BoundFn::Threshold { kappa_in, kappa_out } => {
                Ok(if x <= *kappa_in { *kappa_out } else { Value::Inf })
            }
            BoundFn::Affine { slope, offset } => match x {
                Value::Inf => {
                    if *slope == Value::ZERO {
                        Ok(*offset)
                    } else if *slope > Value::ZERO {
                        Ok(Value::Inf)
                    } else {
                        Err(BoundFnError::AtInfinity)
                    }
                }
                finite => Ok(slope.checked_mul(finite)?.checked_add(*offset)?),
            },
            BoundFn::Table { entries } => entries
                .iter()
                .find(|(k, _)| *k == x)
                .map(|(_, v)| *v)
                .ok_or(BoundFnError::Undefined(x)),
            BoundFn::Const { value } => Ok(*value),
        }
    }

    /// The image of `apply` over a set of distances, deduplicated. Used to
    /// split f-cleanness checks into one instance per attainable bound.
    pub fn image(&self, xs: impl IntoIterator<Item = Value>) -> Result<Vec<Value>, BoundFnError> {
        let mut out: Vec<Value> = Vec::new();
        for x in xs {
            let y = self.apply(x)?;
            if !out.contains(&y) {
                out.push(y);
            }
        }
        out.sort();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    #[test]
    fn threshold_cuts_over_to_infinity() {
        let f = BoundFn::Threshold { kappa_in: v("2"), kappa_out: v("1") };
        assert_eq!(f.apply(v("2")).unwrap(), v("1"));
        assert_eq!(f.apply(v("2.1")).unwrap(), Value::Inf);
        assert_eq!(f.apply(Value::Inf).unwrap(), Value::Inf);
    }

    #[test]
    fn affine_evaluates_exactly() {
        let half = BoundFn::Affine { slope: v("0.5"), offset: v("0") };
        assert_eq!(half.apply(v("1.9")).unwrap(), v("0.95"));
        let shifted = BoundFn::Affine { slope: v("0.5"), offset: v("0.3") };
        assert_eq!(shifted.apply(v("1")).unwrap(), v("0.8"));
        assert_eq!(shifted.apply(Value::Inf).unwrap(), Value::Inf);
        let flat = BoundFn::Affine { slope: v("0"), offset: v("3") };
        assert_eq!(flat.apply(Value::Inf).unwrap(), v("3"));
    }

    #[test]
    fn table_and_const() {
        let t = BoundFn::Table { entries: vec![(v("0"), v("0")), (v("1"), v("0.5"))] };
        assert_eq!(t.apply(v("1")).unwrap(), v("0.5"));
        assert!(t.apply(v("2")).is_err());
        let c = BoundFn::Const { value: Value::Inf };
        assert_eq!(c.apply(v("9")).unwrap(), Value::Inf);
    }

    #[test]
    fn image_deduplicates_and_sorts() {
        let f = BoundFn::Threshold { kappa_in: v("1"), kappa_out: v("0.5") };
        let img = f.image(vec![v("0"), v("0.5"), v("1"), v("2"), v("3")]).unwrap();
        assert_eq!(img, vec![v("0.5"), Value::Inf]);
    }

    #[test]
    fn serde_round_trip() {
        let f = BoundFn::Affine { slope: v("0.5"), offset: v("0.3") };
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<BoundFn>(&json).unwrap(), f);
    }
}
