//! The contract container: everything a cleanness property is relative to.

use super::{BoundFn, Distance};
use crate::seqlang::{Pred, TemporalPred};
use crate::value::{Value, SCALE_DIGITS};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum ContractError {
    #[error("contract JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("contract is invalid: {0}")]
    Invalid(String),
    #[error("contract lacks {0}, required by this property")]
    Missing(&'static str),
    #[error("this check needs a non-temporal standard-input predicate, got {0}")]
    TemporalStdin(Box<TemporalPred>),
}

/// Which parameter instantiations are of interest: those satisfying a
/// predicate over the program's params, or an explicit list of valuations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSel {
    Pred(Pred),
    Explicit(Vec<BTreeMap<String, Value>>),
}

impl Default for ParamSel {
    fn default() -> Self {
        ParamSel::Pred(Pred::Bool(true))
    }
}

fn default_scale() -> u32 {
    SCALE_DIGITS
}

fn stdin_true() -> TemporalPred {
    TemporalPred::TRUE
}

fn is_true(t: &TemporalPred) -> bool {
    t.is_trivially_true()
}

fn is_default_scale(s: &u32) -> bool {
    *s == SCALE_DIGITS
}

/// A cleanness contract. Only the pieces a given property needs must be
/// present; accessors report what is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contract {
    /// Parameters of interest. Defaults to all of them.
    #[serde(default)]
    pub pintrs: ParamSel,
    /// Standard inputs. A plain predicate for sequential programs, possibly
    /// temporal for reactive ones. Defaults to `true`.
    #[serde(default = "stdin_true", skip_serializing_if = "is_true")]
    pub stdin: TemporalPred,
    /// Committed inputs, for the general cleanness check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm: Option<Pred>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_in: Option<Distance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_out: Option<Distance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_in: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_out: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<BoundFn>,
    /// Decimal digits this contract's values are stated at.
    #[serde(default = "default_scale", skip_serializing_if = "is_default_scale")]
    pub scale: u32,
}

impl Default for Contract {
    fn default() -> Self {
        Contract {
            pintrs: ParamSel::default(),
            stdin: TemporalPred::TRUE,
            comm: None,
            d_in: None,
            d_out: None,
            kappa_in: None,
            kappa_out: None,
            f: None,
            scale: SCALE_DIGITS,
        }
    }
}

impl Contract {
    pub fn from_json(src: &str) -> Result<Contract, ContractError> {
        let c: Contract = serde_json::from_str(src)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("contract serialization cannot fail")
    }

    pub fn validate(&self) -> Result<(), ContractError> {
        if self.scale > SCALE_DIGITS {
            return Err(ContractError::Invalid(format!(
                "scale {} exceeds the supported {SCALE_DIGITS} decimal digits",
                self.scale
            )));
        }
        let quantum = 10i64.pow(SCALE_DIGITS - self.scale);
        let check = |v: &Value, what: &str| -> Result<(), ContractError> {
            match v.mantissa() {
                Some(m) if m % quantum != 0 => Err(ContractError::Invalid(format!(
                    "{what} = {v} is finer than the declared scale of {} digits",
                    self.scale
                ))),
                _ => Ok(()),
            }
        };
        if let Some(k) = &self.kappa_in {
            check(k, "kappa_in")?;
        }
        if let Some(k) = &self.kappa_out {
            check(k, "kappa_out")?;
        }
        if let ParamSel::Explicit(rows) = &self.pintrs {
            for row in rows {
                for (name, v) in row {
                    check(v, name)?;
                }
            }
        }
        Ok(())
    }

    /// Input distance, defaulting to absolute difference.
    pub fn d_in(&self) -> Distance {
        self.d_in.clone().unwrap_or(Distance::AbsDiff)
    }

    /// Output distance, defaulting to absolute difference.
    pub fn d_out(&self) -> Distance {
        self.d_out.clone().unwrap_or(Distance::AbsDiff)
    }

    pub fn require_kappa_in(&self) -> Result<Value, ContractError> {
        self.kappa_in.ok_or(ContractError::Missing("kappa_in"))
    }

    pub fn require_kappa_out(&self) -> Result<Value, ContractError> {
        self.kappa_out.ok_or(ContractError::Missing("kappa_out"))
    }

    pub fn require_f(&self) -> Result<&BoundFn, ContractError> {
        self.f.as_ref().ok_or(ContractError::Missing("the deviation-bound function f"))
    }

    pub fn require_comm(&self) -> Result<&Pred, ContractError> {
        self.comm.as_ref().ok_or(ContractError::Missing("the committed-input predicate"))
    }

    /// The standard-input predicate as a plain (non-temporal) predicate,
    /// as sequential checks need it.
    pub fn stdin_plain(&self) -> Result<&Pred, ContractError> {
        self.stdin
            .as_plain()
            .ok_or_else(|| ContractError::TemporalStdin(Box::new(self.stdin.clone())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    #[test]
    fn minimal_contract_uses_defaults() {
        let c = Contract::from_json("{}").unwrap();
        assert_eq!(c.pintrs, ParamSel::Pred(Pred::Bool(true)));
        assert!(c.stdin.is_trivially_true());
        assert_eq!(c.scale, SCALE_DIGITS);
        assert_eq!(c.d_in(), Distance::AbsDiff);
        assert!(c.require_kappa_in().is_err());
    }

    #[test]
    fn full_contract_round_trips() {
        let src = r#"{
            "pintrs": "true",
            "stdin": "thrtl in (0, 1]",
            "d_in": {"kind": "abs_diff"},
            "d_out": {"kind": "abs_diff"},
            "kappa_in": "2",
            "kappa_out": "1",
            "scale": 3
        }"#;
        let c = Contract::from_json(src).unwrap();
        assert_eq!(c.kappa_in, Some(v("2")));
        let again = Contract::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn explicit_param_rows() {
        let src = r#"{"pintrs": [{"mode": "0"}, {"mode": "1"}]}"#;
        let c = Contract::from_json(src).unwrap();
        match &c.pintrs {
            ParamSel::Explicit(rows) => {
                assert_eq!(rows.len(), 2);
                assert_eq!(rows[1]["mode"], v("1"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let again = Contract::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn scale_is_validated() {
        assert!(Contract::from_json(r#"{"scale": 9}"#).is_err());
        assert!(Contract::from_json(r#"{"kappa_in": "0.25", "scale": 1}"#).is_err());
        assert!(Contract::from_json(r#"{"kappa_in": "0.2", "scale": 1}"#).is_ok());
    }

    #[test]
    fn temporal_stdin_is_rejected_for_sequential_use() {
        let c = Contract::from_json(r#"{"stdin": "G(x <= 1)"}"#).unwrap();
        assert!(c.stdin_plain().is_err());
        let plain = Contract::from_json(r#"{"stdin": "x <= 1"}"#).unwrap();
        assert!(plain.stdin_plain().is_ok());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(Contract::from_json(r#"{"kappa": "1"}"#).is_err());
    }
}
