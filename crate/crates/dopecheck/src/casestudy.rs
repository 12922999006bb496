//! The calibrated models: an emission-control unit in sequential and
//! reactive form, with and without a defeat device, and a family of
//! printers that discriminate by consumable brand.
//!
//! Everything here is frozen; the acceptance suite pins the verdicts these
//! models must produce.

use crate::contracts::Contract;
use crate::hypercheck::{check_negation_instance, check_reactive, HyperError, Mode, Property};
use crate::reactive::{ModelBuilder, ModelError, StateId, TransitionSystem, VarSpec};
use crate::seqcheck::{check_f_clean, check_robustly_clean, CheckError, CheckOpts};
use crate::seqlang::{parse_program, Program, Role};
use crate::value::{Grid, Value, SCALE};
use crate::wpengine::{check_wp, VcError, WpOpts, WpProperty};
use crate::Outcome;
use std::collections::HashSet;
use thiserror::Error;

/// Emission control: dose exhaust fluid as the square of the throttle, so
/// nitric-oxide output is proportional to the throttle everywhere.
pub const SEQ_EC_SRC: &str = "\
input thrtl : [0.1, 2] step 0.1;
output NOx : [0, 2] step 0.005;
var def_dose : [0, 4] step 0.01;

def_dose := thrtl ^ 2;
NOx := thrtl ^ 3 / (2 * def_dose);
";

/// The same controller with a defeat device: outside throttle test values
/// it doses linearly, saving fluid and emitting quadratically instead.
pub const SEQ_AEC_SRC: &str = "\
input thrtl : [0.1, 2] step 0.1;
output NOx : [0, 2] step 0.005;
var def_dose : [0, 4] step 0.01;

if thrtl in (0, 1] {
    def_dose := thrtl ^ 2;
} else {
    def_dose := thrtl;
}
NOx := thrtl ^ 3 / (2 * def_dose);
";

pub fn build_seq_ec() -> Program {
    parse_program(SEQ_EC_SRC).expect("frozen source parses")
}

pub fn build_seq_aec() -> Program {
    parse_program(SEQ_AEC_SRC).expect("frozen source parses")
}

/// Robust-cleanness contract for the sequential controllers: throttle
/// deviations up to 2 must move NOx by at most 1.
pub fn seq_robust_contract() -> Contract {
    Contract::from_json(
        r#"{
            "stdin": "thrtl in (0, 1]",
            "d_in": {"kind": "abs_diff"},
            "d_out": {"kind": "abs_diff"},
            "kappa_in": "2",
            "kappa_out": "1",
            "scale": 3
        }"#,
    )
    .expect("frozen contract is valid")
}

/// f-cleanness contract for the sequential controllers: NOx deviation at
/// most half the throttle deviation.
pub fn seq_fclean_contract() -> Contract {
    Contract::from_json(
        r#"{
            "stdin": "thrtl in (0, 1]",
            "d_in": {"kind": "abs_diff"},
            "d_out": {"kind": "abs_diff"},
            "f": {"kind": "affine", "slope": "0.5", "offset": "0"},
            "scale": 3
        }"#,
    )
    .expect("frozen contract is valid")
}

/// NOx grid steps the reactive controllers are usually built at. The
/// coarse one keeps product explorations fast; the fine one stresses them.
pub const NOX_STEP_COARSE: Value = Value::from_mantissa(50_000);
pub const NOX_STEP_FINE: Value = Value::from_mantissa(6_250);

/// Exhaust-fluid dose, as a mantissa. The controller doses the square of
/// the throttle, enriched by ten percent when the previous NOx reading
/// overshoots half the current throttle. The defeated controller ignores
/// the feedback above the test regime and doses linearly, like its
/// sequential counterpart.
fn dose_m(defeat: bool, t: Value, n_prev: Option<Value>) -> i64 {
    let t_m = t.mantissa().expect("throttle is finite");
    if defeat && t_m > SCALE {
        return t_m;
    }
    // Exact: throttle mantissas are multiples of 10^5, so t^2 mantissas are
    // multiples of 10^4 and survive the ten-percent bump.
    let standard = t_m * t_m / SCALE;
    match n_prev {
        Some(n) if 2 * n.mantissa().expect("NOx is finite") > t_m => 11 * standard / 10,
        _ => standard,
    }
}

/// NOx readings a dose allows: grid points within ten percent either side
/// of t^3 / (2 dose). Membership is decided on cross-multiplied mantissas,
/// so no rounding is involved.
fn nox_readings(nox: Grid, t: Value, dose_m: i64) -> Vec<Value> {
    let t_m = t.mantissa().expect("throttle is finite") as i128;
    let center = t_m * t_m * t_m; // t^3 at scale 10^18
    let lo = 9 * center; // 0.9 t^3 at scale 10^19
    let hi = 11 * center; // 1.1 t^3 at scale 10^19
    nox.iter()
        .filter(|n| {
            let n_m = n.mantissa().expect("grid values are finite") as i128;
            let mid = 2 * dose_m as i128 * n_m * 10_000_000; // 2 dose n at scale 10^19
            lo <= mid && mid <= hi
        })
        .collect()
}

fn react_model(name: &str, defeat: bool, nox_step: Value) -> Result<TransitionSystem, ModelError> {
    let throttle = Grid::new(
        Value::from_mantissa(100_000),
        Value::from_int(2),
        Value::from_mantissa(100_000),
    )?;
    let nox = Grid::new(Value::ZERO, Value::from_mantissa(2_200_000), nox_step)?;
    let mut b = ModelBuilder::new(
        name,
        vec![
            VarSpec::new("throttle", Role::Input, throttle),
            VarSpec::new("NOx", Role::Output, nox),
        ],
    )?;
    let mut seen: HashSet<StateId> = HashSet::new();
    let mut work: Vec<(StateId, Value)> = Vec::new();
    for t in throttle.iter() {
        // The first dose has no reading to react to.
        for n in nox_readings(nox, t, dose_m(defeat, t, None)) {
            let s = b.state(&[("throttle", t), ("NOx", n)])?;
            b.mark_initial(s);
            if seen.insert(s) {
                work.push((s, n));
            }
        }
    }
    while let Some((s, n)) = work.pop() {
        for t2 in throttle.iter() {
            for n2 in nox_readings(nox, t2, dose_m(defeat, t2, Some(n))) {
                let s2 = b.state(&[("throttle", t2), ("NOx", n2)])?;
                b.edge(s, s2);
                if seen.insert(s2) {
                    work.push((s2, n2));
                }
            }
        }
    }
    b.finish()
}

/// The reactive emission controller: states pair the throttle just read
/// with the NOx it produced, and every step reads any next throttle.
pub fn build_react_ec(nox_step: Value) -> Result<TransitionSystem, ModelError> {
    react_model("ec", false, nox_step)
}

/// The reactive controller with the defeat device.
pub fn build_react_aec(nox_step: Value) -> Result<TransitionSystem, ModelError> {
    react_model("aec", true, nox_step)
}

/// Robust-cleanness contract for the reactive controllers: while every
/// throttle deviation stays within 2, each NOx reading must stay within
/// 1.1 of one producible on the standard side, position by position.
pub fn react_robust_contract() -> Contract {
    Contract::from_json(
        r#"{
            "stdin": "G(throttle in (0, 1])",
            "d_in": {"kind": "past_forgetful", "base": {"kind": "abs_diff"}},
            "d_out": {"kind": "past_forgetful", "base": {"kind": "abs_diff"}},
            "kappa_in": "2",
            "kappa_out": "1.1",
            "scale": 3
        }"#,
    )
    .expect("frozen contract is valid")
}

/// f-cleanness contract for the reactive controllers: NOx deviation at
/// most half the throttle deviation plus 0.3, position by position.
pub fn react_fclean_contract() -> Contract {
    Contract::from_json(
        r#"{
            "stdin": "G(throttle in (0, 1])",
            "d_in": {"kind": "past_forgetful", "base": {"kind": "abs_diff"}},
            "d_out": {"kind": "past_forgetful", "base": {"kind": "abs_diff"}},
            "f": {"kind": "affine", "slope": "0.5", "offset": "0.3"},
            "scale": 3
        }"#,
    )
    .expect("frozen contract is valid")
}

/// Which printer model to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Printer {
    /// Prints on every compatible cartridge type.
    General,
    /// Alerts instead of printing when the cartridge brand is foreign.
    Doped,
    /// Prints new-style documents only when a capability is present.
    Extended,
}

/// Result codes: 0 prints, 1 alerts, 2 rejects an incompatible cartridge.
pub const PRINTER_GENERAL_SRC: &str = "\
param ctype : [0, 2] step 1;
input doc_new : [0, 1] step 1;
output res : [0, 2] step 1;

if ctype <= 1 {
    res := 0;
} else {
    res := 2;
}
";

pub const PRINTER_DOPED_SRC: &str = "\
param ctype : [0, 2] step 1;
param brand : [0, 1] step 1;
input doc_new : [0, 1] step 1;
output res : [0, 2] step 1;

if ctype <= 1 {
    if brand = 0 {
        res := 0;
    } else {
        res := 1;
    }
} else {
    res := 2;
}
";

pub const PRINTER_EXTENDED_SRC: &str = "\
param ctype : [0, 2] step 1;
param supports_new : [0, 1] step 1;
input doc_new : [0, 1] step 1;
output res : [0, 2] step 1;

if ctype <= 1 {
    if doc_new = 0 {
        res := 0;
    } else {
        if supports_new = 1 {
            res := 0;
        } else {
            res := 1;
        }
    }
} else {
    res := 2;
}
";

pub fn build_printer(which: Printer) -> Program {
    let src = match which {
        Printer::General => PRINTER_GENERAL_SRC,
        Printer::Doped => PRINTER_DOPED_SRC,
        Printer::Extended => PRINTER_EXTENDED_SRC,
    };
    parse_program(src).expect("frozen source parses")
}

/// Cleanness contract for the printers. Parameters of interest are the
/// compatible cartridge types; `strict_docs` restricts standard inputs to
/// old-style documents, which is what exonerates the extended printer.
pub fn printer_contract(strict_docs: bool) -> Contract {
    let stdin = if strict_docs { r#""stdin": "doc_new = 0","# } else { "" };
    Contract::from_json(&format!(
        r#"{{
            "pintrs": "ctype <= 1",
            {stdin}
            "d_out": {{"kind": "discrete"}},
            "scale": 0
        }}"#
    ))
    .expect("frozen contract is valid")
}

// ---------------------------------------------------------------------------
// Verdict tables over the calibrated models.

/// A table check failed to run at all. Verdicts, `Unknown` included, are
/// cells, not errors.
#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Vc(#[from] VcError),
    #[error(transparent)]
    Hyper(#[from] HyperError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One sequential line: a program and property, checked by enumeration and
/// by weakest-precondition verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeqRow {
    pub program: &'static str,
    pub property: &'static str,
    pub enumeration: Outcome,
    pub wp: Outcome,
}

/// One reactive line. The pairwise columns are `None` when the run skips
/// them; only the bounded oracle scales past the coarse grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReactRow {
    pub model: &'static str,
    pub property: &'static str,
    pub strengthened: Option<Outcome>,
    pub exact: Option<Outcome>,
    pub oracle: Outcome,
}

/// One pinned instance: constant throttle `a` as the standard run against
/// constant throttle `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceRow {
    pub model: &'static str,
    pub property: &'static str,
    pub a: Value,
    pub b: Value,
    pub verdict: Outcome,
}

/// Checks both sequential programs under both properties.
pub fn seq_rows() -> Result<Vec<SeqRow>, TableError> {
    let opts = CheckOpts::default();
    let wp_opts = WpOpts::default();
    let mut rows = Vec::new();
    for (program, prog) in [("ec", build_seq_ec()), ("aec", build_seq_aec())] {
        let c = seq_robust_contract();
        rows.push(SeqRow {
            program,
            property: "robust",
            enumeration: check_robustly_clean(&prog, &c, &opts)?.verdict.outcome(),
            wp: check_wp(&prog, &c, WpProperty::RobustlyClean, &wp_opts)?.verdict.outcome(),
        });
        let c = seq_fclean_contract();
        rows.push(SeqRow {
            program,
            property: "f-bound",
            enumeration: check_f_clean(&prog, &c, &opts)?.verdict.outcome(),
            wp: check_wp(&prog, &c, WpProperty::FClean, &wp_opts)?.verdict.outcome(),
        });
    }
    Ok(rows)
}

fn react_properties() -> [(&'static str, Contract, Property); 2] {
    [
        ("robust", react_robust_contract(), Property::Robust),
        ("f-bound", react_fclean_contract(), Property::FClean),
    ]
}

/// Checks both reactive models under both properties. `pairwise` adds the
/// strengthened and exact columns, which walk products of runs and belong
/// on the coarse grid; the oracle column always runs.
pub fn react_rows(
    nox_step: Value,
    depth: Option<usize>,
    pairwise: bool,
) -> Result<Vec<ReactRow>, TableError> {
    let mut rows = Vec::new();
    for (model, ts) in [
        ("ec", build_react_ec(nox_step)?),
        ("aec", build_react_aec(nox_step)?),
    ] {
        for (property, c, prop) in react_properties() {
            let run = |mode| check_reactive(&ts, &c, prop, mode, depth);
            rows.push(ReactRow {
                model,
                property,
                strengthened: pairwise
                    .then(|| run(Mode::Strengthen))
                    .transpose()?
                    .map(|v| v.outcome()),
                exact: pairwise
                    .then(|| run(Mode::Exact))
                    .transpose()?
                    .map(|v| v.outcome()),
                oracle: run(Mode::Oracle)?.outcome(),
            });
        }
    }
    Ok(rows)
}

/// Checks the pinned constant-throttle instances on both models under both
/// properties: standard throttle `a` in {0.1, 1} against the deviant
/// throttle 2.
pub fn instance_rows(nox_step: Value) -> Result<Vec<InstanceRow>, TableError> {
    let b = Value::from_mantissa(2 * SCALE);
    let mut rows = Vec::new();
    for (model, ts) in [
        ("ec", build_react_ec(nox_step)?),
        ("aec", build_react_aec(nox_step)?),
    ] {
        for (property, c, prop) in react_properties() {
            for a in [Value::from_mantissa(SCALE / 10), Value::from_mantissa(SCALE)] {
                rows.push(InstanceRow {
                    model,
                    property,
                    a,
                    b,
                    verdict: check_negation_instance(&ts, &c, a, b, prop)?.outcome(),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcheck::check_clean;
    use crate::value::Value;
    use crate::Verdict;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    #[test]
    fn sequential_sources_evaluate_exactly() {
        use crate::seqlang::eval::{run, EvalOpts};
        let ec = build_seq_ec();
        let opts = EvalOpts::default();
        let params = Default::default();
        let at = |p: &Program, t: &str| {
            let inputs = [("thrtl".to_string(), v(t))].into_iter().collect();
            let r = run(p, &params, &inputs, &opts).unwrap();
            assert!(!r.bottom);
            assert_eq!(r.snap_count, 0, "frozen models must stay on-grid");
            let outs: Vec<Value> = r.outputs.iter().map(|o| o["NOx"]).collect();
            assert_eq!(outs.len(), 1);
            outs[0]
        };
        assert_eq!(at(&ec, "1"), v("0.5"));
        assert_eq!(at(&ec, "0.5"), v("0.25"));
        assert_eq!(at(&ec, "2"), v("1"));
        let aec = build_seq_aec();
        assert_eq!(at(&aec, "1"), v("0.5"));
        assert_eq!(at(&aec, "1.5"), v("1.125"));
        assert_eq!(at(&aec, "2"), v("2"));
    }

    #[test]
    fn robust_verdicts_with_frozen_witness() {
        let opts = CheckOpts::default();
        let c = seq_robust_contract();
        let ec = check_robustly_clean(&build_seq_ec(), &c, &opts).unwrap();
        assert!(ec.verdict.is_clean(), "{:?}", ec.verdict);

        let aec = check_robustly_clean(&build_seq_aec(), &c, &opts).unwrap();
        match aec.verdict {
            Verdict::Doped { witness } => {
                assert_eq!(witness.input["thrtl"], v("0.1"));
                assert_eq!(witness.input_alt["thrtl"], v("1.5"));
                assert_eq!(witness.measured, Some(v("1.075")));
                assert_eq!(witness.bound, Some(v("1")));
            }
            other => panic!("expected doped, got {other:?}"),
        }
    }

    #[test]
    fn f_clean_verdicts_with_frozen_witness() {
        let opts = CheckOpts::default();
        let c = seq_fclean_contract();
        let ec = check_f_clean(&build_seq_ec(), &c, &opts).unwrap();
        assert!(ec.verdict.is_clean(), "{:?}", ec.verdict);

        let aec = check_f_clean(&build_seq_aec(), &c, &opts).unwrap();
        match aec.verdict {
            Verdict::Doped { witness } => {
                assert_eq!(witness.input["thrtl"], v("0.1"));
                assert_eq!(witness.input_alt["thrtl"], v("1.1"));
                assert_eq!(witness.measured, Some(v("0.555")));
                assert_eq!(witness.bound, Some(v("0.5")));
            }
            other => panic!("expected doped, got {other:?}"),
        }
    }

    fn valuations(ts: &TransitionSystem) -> std::collections::BTreeSet<(Value, Value)> {
        (0..ts.states() as StateId)
            .map(|s| (ts.value_of(s, "throttle").unwrap(), ts.value_of(s, "NOx").unwrap()))
            .collect()
    }

    fn initial_readings(ts: &TransitionSystem, t: &str) -> Vec<Value> {
        let mut out: Vec<Value> = ts
            .initial()
            .iter()
            .filter(|&&s| ts.value_of(s, "throttle").unwrap() == v(t))
            .map(|&s| ts.value_of(s, "NOx").unwrap())
            .collect();
        out.sort();
        out
    }

    #[test]
    fn react_models_have_frozen_shape() {
        let ec = build_react_ec(NOX_STEP_COARSE).unwrap();
        let aec = build_react_aec(NOX_STEP_COARSE).unwrap();
        let edges = |ts: &TransitionSystem| -> usize {
            (0..ts.states() as StateId).map(|s| ts.succ(s).len()).sum()
        };
        assert_eq!((ec.states(), ec.initial().len(), edges(&ec)), (61, 44, 2860));
        assert_eq!((aec.states(), aec.initial().len(), edges(&aec)), (65, 61, 4131));
        assert_eq!(ec.input_enabled_gap(), None);
        assert_eq!(aec.input_enabled_gap(), None);

        let max_nox = |ts: &TransitionSystem| {
            (0..ts.states() as StateId)
                .map(|s| ts.value_of(s, "NOx").unwrap())
                .max()
                .unwrap()
        };
        assert_eq!(max_nox(&ec), v("1.1"));
        assert_eq!(max_nox(&aec), v("2.2"));

        let fine_ec = build_react_ec(NOX_STEP_FINE).unwrap();
        let fine_aec = build_react_aec(NOX_STEP_FINE).unwrap();
        assert_eq!((fine_ec.states(), fine_aec.states()), (476, 524));
        assert_eq!(fine_ec.input_enabled_gap(), None);
        assert_eq!(fine_aec.input_enabled_gap(), None);
    }

    #[test]
    fn react_first_readings_are_the_expected_intervals() {
        let ec = build_react_ec(NOX_STEP_COARSE).unwrap();
        let aec = build_react_aec(NOX_STEP_COARSE).unwrap();
        // Standard dosing permits NOx within [0.45 t, 0.55 t].
        assert_eq!(initial_readings(&ec, "1"), vec![v("0.45"), v("0.5"), v("0.55")]);
        assert_eq!(initial_readings(&ec, "0.1"), vec![v("0.05")]);
        assert_eq!(
            initial_readings(&ec, "2"),
            vec![v("0.9"), v("0.95"), v("1"), v("1.05"), v("1.1")]
        );
        // The defeat device doses linearly above throttle 1, octupling the
        // readings at full throttle.
        assert_eq!(initial_readings(&aec, "1"), initial_readings(&ec, "1"));
        assert_eq!(
            initial_readings(&aec, "2"),
            ["1.8", "1.85", "1.9", "1.95", "2", "2.05", "2.1", "2.15", "2.2"]
                .iter()
                .map(|s| v(s))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn react_feedback_enriches_after_an_overshoot() {
        let ec = build_react_ec(NOX_STEP_COARSE).unwrap();
        let s = (0..ec.states() as StateId)
            .find(|&s| {
                ec.value_of(s, "throttle").unwrap() == v("2")
                    && ec.value_of(s, "NOx").unwrap() == v("1.1")
            })
            .expect("the top reading is reachable");
        let mut next: Vec<Value> = ec
            .succ(s)
            .iter()
            .filter(|&&t| ec.value_of(t, "throttle").unwrap() == v("2"))
            .map(|&t| ec.value_of(t, "NOx").unwrap())
            .collect();
        next.sort();
        // Enriched dose 4.4 caps the next reading at 1 instead of 1.1.
        assert_eq!(next, vec![v("0.85"), v("0.9"), v("0.95"), v("1")]);
    }

    #[test]
    fn react_defeat_device_is_invisible_in_the_test_regime() {
        let ec = build_react_ec(NOX_STEP_COARSE).unwrap();
        let aec = build_react_aec(NOX_STEP_COARSE).unwrap();
        let test_only = |set: std::collections::BTreeSet<(Value, Value)>| {
            set.into_iter().filter(|(t, _)| *t <= v("1")).collect::<Vec<_>>()
        };
        assert_eq!(test_only(valuations(&ec)), test_only(valuations(&aec)));

        let test_edges = |ts: &TransitionSystem| {
            let mut out = std::collections::BTreeSet::new();
            for s in 0..ts.states() as StateId {
                if ts.value_of(s, "throttle").unwrap() > v("1") {
                    continue;
                }
                for &t in ts.succ(s) {
                    if ts.value_of(t, "throttle").unwrap() > v("1") {
                        continue;
                    }
                    out.insert((
                        ts.value_of(s, "NOx").unwrap(),
                        ts.value_of(t, "throttle").unwrap(),
                        ts.value_of(t, "NOx").unwrap(),
                    ));
                }
            }
            out
        };
        assert_eq!(test_edges(&ec), test_edges(&aec));
    }

    #[test]
    fn react_models_round_trip_through_json() {
        let aec = build_react_aec(NOX_STEP_COARSE).unwrap();
        let again = TransitionSystem::from_json(&aec.to_json()).unwrap();
        assert_eq!(aec, again);
    }

    #[test]
    fn react_contracts_are_temporal_and_past_forgetful() {
        let robust = react_robust_contract();
        assert_eq!(robust.kappa_out, Some(v("1.1")));
        assert!(robust.stdin.as_plain().is_none());
        assert!(robust.d_out().is_past_forgetful());
        let fclean = react_fclean_contract();
        assert!(fclean.f.is_some());
        assert!(fclean.d_in().is_past_forgetful());
    }

    #[test]
    fn printer_verdicts() {
        let opts = CheckOpts::default();
        let lenient = printer_contract(false);
        let strict = printer_contract(true);

        let general = check_clean(&build_printer(Printer::General), &lenient, &opts).unwrap();
        assert!(general.verdict.is_clean(), "{:?}", general.verdict);

        let doped = check_clean(&build_printer(Printer::Doped), &lenient, &opts).unwrap();
        match doped.verdict {
            Verdict::Doped { witness } => {
                assert_eq!(witness.params["brand"], v("0"));
                assert_eq!(witness.params_alt["brand"], v("1"));
            }
            other => panic!("expected doped, got {other:?}"),
        }

        let ext = build_printer(Printer::Extended);
        assert!(check_clean(&ext, &strict, &opts).unwrap().verdict.is_clean());
        assert!(check_clean(&ext, &lenient, &opts).unwrap().verdict.is_doped());
    }
}
