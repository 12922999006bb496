//! Evaluates trace formulas over concrete bound runs. A tuple of lassos is
//! jointly ultimately periodic, so every temporal operator is decided from
//! a finite table: one row per position up to the joint stem plus one
//! least common period, with the successor of the last row wrapping back
//! to the start of the joint cycle.

use crate::reactive::{Lasso, TransitionSystem};
use crate::seqlang::Env;

use super::formula::{HForm, VarRoles};
use super::HyperError;

const MAX_PERIOD: usize = 1 << 16;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Evaluates `body` at position `at` of the runs in `binds`, each pairing
/// a trace variable with the lasso bound to it. All temporal operators are
/// supported; atoms are read off the states position by position.
pub fn eval_body_at(
    body: &HForm,
    ts: &TransitionSystem,
    binds: &[(&str, &Lasso)],
    at: usize,
) -> Result<bool, HyperError> {
    let stem = binds.iter().map(|(_, l)| l.stem.len()).max().unwrap_or(0);
    let mut period = 1usize;
    for (_, l) in binds {
        let c = l.cycle.len().max(1);
        period = period / gcd(period, c) * c;
        if period > MAX_PERIOD {
            return Err(HyperError::Unsupported(format!(
                "the joint period of the bound runs is past {MAX_PERIOD}"
            )));
        }
    }
    let horizon = stem + period;
    let at = if at < horizon { at } else { stem + (at - stem) % period };
    let envs: Vec<Vec<Env>> =
        binds.iter().map(|(_, l)| (0..horizon).map(|k| l.env_at(ts, k)).collect()).collect();
    let roles = VarRoles::of(ts);
    let table = eval_table(body, &roles, binds, &envs, stem, horizon)?;
    Ok(table[at])
}

/// Evaluates `phi W psi` at position `at` of the bound runs. Checkers use
/// this to replay a reported violation of a tracking obligation.
pub fn eval_weak_until(
    phi: &HForm,
    psi: &HForm,
    ts: &TransitionSystem,
    binds: &[(&str, &Lasso)],
    at: usize,
) -> Result<bool, HyperError> {
    eval_body_at(&HForm::weak_until(phi.clone(), psi.clone()), ts, binds, at)
}

fn eval_table(
    f: &HForm,
    roles: &VarRoles,
    binds: &[(&str, &Lasso)],
    envs: &[Vec<Env>],
    stem: usize,
    horizon: usize,
) -> Result<Vec<bool>, HyperError> {
    let sub = |g: &HForm| eval_table(g, roles, binds, envs, stem, horizon);
    Ok(match f {
        HForm::Bool(b) => vec![*b; horizon],
        HForm::Atom(a) => (0..horizon)
            .map(|k| {
                let assign: Vec<(&str, &Env)> =
                    binds.iter().enumerate().map(|(c, (n, _))| (*n, &envs[c][k])).collect();
                a.eval(roles, &assign)
            })
            .collect::<Result<Vec<bool>, _>>()?,
        HForm::Not(g) => sub(g)?.iter().map(|b| !b).collect(),
        HForm::And(l, r) => zip_with(&sub(l)?, &sub(r)?, |a, b| a && b),
        HForm::Or(l, r) => zip_with(&sub(l)?, &sub(r)?, |a, b| a || b),
        HForm::Implies(l, r) => zip_with(&sub(l)?, &sub(r)?, |a, b| !a || b),
        HForm::Next(g) => {
            let t = sub(g)?;
            (0..horizon).map(|k| t[if k + 1 < horizon { k + 1 } else { stem }]).collect()
        }
        HForm::Globally(g) => globally_from(&sub(g)?, stem),
        HForm::Finally(g) => {
            let t = sub(g)?;
            let cycle_any = t[stem..].iter().any(|&b| b);
            let mut out = t;
            for slot in out[stem..].iter_mut() {
                *slot = cycle_any;
            }
            for k in (0..stem).rev() {
                out[k] = out[k] || out[k + 1];
            }
            out
        }
        HForm::Until(p, q) => until_from(&sub(p)?, &sub(q)?, stem),
        HForm::WeakUntil(p, q) => {
            let pt = sub(p)?;
            let u = until_from(&pt, &sub(q)?, stem);
            let g = globally_from(&pt, stem);
            zip_with(&u, &g, |a, b| a || b)
        }
    })
}

fn zip_with(l: &[bool], r: &[bool], op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    l.iter().zip(r).map(|(&a, &b)| op(a, b)).collect()
}

fn globally_from(t: &[bool], stem: usize) -> Vec<bool> {
    let cycle_all = t[stem..].iter().all(|&b| b);
    let mut out = t.to_vec();
    for slot in out[stem..].iter_mut() {
        *slot = cycle_all;
    }
    for k in (0..stem).rev() {
        out[k] = t[k] && out[k + 1];
    }
    out
}

/// Least fixpoint of the until expansion. Two backward sweeps over the
/// cycle settle it: any satisfied until on a cycle has a witness that
/// wraps at most once.
fn until_from(pt: &[bool], qt: &[bool], stem: usize) -> Vec<bool> {
    let horizon = pt.len();
    let mut u = vec![false; horizon];
    for _ in 0..2 {
        for k in (stem..horizon).rev() {
            let next = if k + 1 < horizon { k + 1 } else { stem };
            u[k] = qt[k] || (pt[k] && u[next]);
        }
    }
    for k in (0..stem).rev() {
        u[k] = qt[k] || (pt[k] && u[k + 1]);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypercheck::formula::HAtom;
    use crate::reactive::{ModelBuilder, StateId, VarSpec};
    use crate::seqlang::{parse_pred, Role};
    use crate::value::{Grid, Value};

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    /// Lays several runs into one model side by side. Repeated readings
    /// share a state, which the lassos thread in order; the last state of
    /// each run loops on itself.
    fn runs(traces: &[&[(&str, &str)]]) -> (TransitionSystem, Vec<Lasso>) {
        let mut b = ModelBuilder::new(
            "runs",
            vec![
                VarSpec::new("i", Role::Input, Grid::new(v("0"), v("9"), v("1")).unwrap()),
                VarSpec::new("o", Role::Output, Grid::new(v("0"), v("9"), v("1")).unwrap()),
            ],
        )
        .unwrap();
        let mut lassos = Vec::new();
        for steps in traces {
            let ids: Vec<StateId> = steps
                .iter()
                .map(|(i, o)| b.state(&[("i", v(i)), ("o", v(o))]).unwrap())
                .collect();
            for w in ids.windows(2) {
                b.edge(w[0], w[1]);
            }
            let last = *ids.last().unwrap();
            b.edge(last, last);
            b.mark_initial(ids[0]);
            lassos.push(Lasso::new(ids[..ids.len() - 1].to_vec(), vec![last]));
        }
        (b.finish().unwrap(), lassos)
    }

    fn holds(on: &str, pred: &str) -> HForm {
        HForm::Atom(HAtom::holds(on, parse_pred(pred).unwrap()))
    }

    #[test]
    fn weak_until_with_false_promise_is_globally() {
        let (ts, ls) = runs(&[&[("1", "5"), ("1", "5"), ("1", "3"), ("1", "5")]]);
        let binds = [("x", &ls[0])];
        let p = holds("x", "o = 5");
        for k in 0..8 {
            let w = eval_weak_until(&p, &HForm::FALSE, &ts, &binds, k).unwrap();
            let g = eval_body_at(&HForm::globally(p.clone()), &ts, &binds, k).unwrap();
            assert_eq!(w, g, "position {k}");
            assert_eq!(w, k >= 3);
        }
    }

    #[test]
    fn true_tracks_anything() {
        let (ts, ls) = runs(&[&[("1", "5"), ("2", "0"), ("3", "9")]]);
        let binds = [("x", &ls[0])];
        for k in 0..5 {
            assert!(eval_weak_until(&HForm::TRUE, &holds("x", "o = 4"), &ts, &binds, k).unwrap());
        }
    }

    #[test]
    fn divergence_order_decides_tracking() {
        let std = &[("1", "5"), ("1", "5"), ("1", "5"), ("1", "5"), ("1", "5"), ("1", "5")];
        let late = &[("1", "5"), ("1", "5"), ("1", "5"), ("2", "5"), ("2", "5"), ("2", "7")];
        let early = &[("1", "5"), ("1", "5"), ("1", "7"), ("2", "7"), ("2", "7"), ("2", "7")];
        let (ts, ls) = runs(&[std, late, early]);
        let track = |other: &Lasso| {
            eval_weak_until(
                &HForm::Atom(HAtom::outputs_eq("x", "y")),
                &HForm::negate(HForm::Atom(HAtom::inputs_eq("x", "y"))),
                &ts,
                &[("x", &ls[0]), ("y", other)],
                0,
            )
            .unwrap()
        };
        assert!(track(&ls[1]), "outputs held together until the inputs split");
        assert!(!track(&ls[2]), "outputs split while the inputs still agreed");
    }

    #[test]
    fn until_wraps_around_the_cycle() {
        let (ts, ls) = runs(&[&[("1", "0"), ("1", "1"), ("1", "0")]]);
        let spin = Lasso::new(Vec::new(), {
            let mut all = ls[0].stem.clone();
            all.extend(&ls[0].cycle);
            all
        });
        let binds = [("x", &spin)];
        let u = HForm::until(holds("x", "o = 0"), holds("x", "o = 1"));
        for k in 0..6 {
            assert!(eval_body_at(&u, &ts, &binds, k).unwrap(), "position {k}");
        }
        let never = HForm::until(holds("x", "o = 0"), holds("x", "o = 7"));
        for k in 0..6 {
            assert!(!eval_body_at(&never, &ts, &binds, k).unwrap(), "position {k}");
        }
    }

    #[test]
    fn far_positions_fold_into_the_cycle() {
        let (ts, ls) = runs(&[&[("1", "5"), ("2", "6"), ("3", "7")]]);
        let binds = [("x", &ls[0])];
        let p = holds("x", "o = 7");
        let g = HForm::globally(p.clone());
        assert_eq!(
            eval_body_at(&g, &ts, &binds, 1_000_000).unwrap(),
            eval_body_at(&g, &ts, &binds, 2).unwrap(),
        );
        assert!(eval_body_at(&p, &ts, &binds, 999).unwrap());
    }
}
