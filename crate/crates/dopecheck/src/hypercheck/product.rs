//! Self-composition of a model: tuples of states stepped jointly, one copy
//! per trace variable. The cycle search walks the kept part of the product
//! graph depth first and closes a lasso as soon as the path revisits a
//! tuple still on it.

use std::collections::HashMap;

use crate::reactive::{Lasso, StateId, TransitionSystem};
use crate::seqlang::Env;

use super::formula::{HyperFormula, VarRoles};
use super::support::extend_to_lasso;
use super::{HyperError, TraceQuant};

const MAX_TUPLES: usize = 1 << 20;

pub struct ProductSystem<'a> {
    copies: Vec<&'a TransitionSystem>,
    envs: Vec<Vec<Env>>,
}

impl<'a> ProductSystem<'a> {
    pub fn new(copies: Vec<&'a TransitionSystem>) -> Result<ProductSystem<'a>, HyperError> {
        if copies.is_empty() || copies.len() > 3 {
            return Err(HyperError::Unsupported(format!(
                "a product of {} copies (1 to 3 are supported)",
                copies.len()
            )));
        }
        let envs = copies
            .iter()
            .map(|ts| (0..ts.states() as StateId).map(|s| ts.state_env(s)).collect())
            .collect();
        Ok(ProductSystem { copies, envs })
    }

    pub fn arity(&self) -> usize {
        self.copies.len()
    }

    pub(crate) fn env(&self, copy: usize, s: StateId) -> &Env {
        &self.envs[copy][s as usize]
    }

    pub fn initial_tuples(&self) -> Vec<Vec<StateId>> {
        let mut tuples = vec![Vec::new()];
        for ts in &self.copies {
            tuples = tuples
                .into_iter()
                .flat_map(|t| {
                    ts.initial().iter().map(move |&s| {
                        let mut u = t.clone();
                        u.push(s);
                        u
                    })
                })
                .collect();
        }
        tuples
    }

    pub fn succ_tuples(&self, tuple: &[StateId]) -> Vec<Vec<StateId>> {
        let mut tuples = vec![Vec::with_capacity(tuple.len())];
        for (c, ts) in self.copies.iter().enumerate() {
            tuples = tuples
                .into_iter()
                .flat_map(|t| {
                    ts.succ(tuple[c]).iter().map(move |&s| {
                        let mut u = t.clone();
                        u.push(s);
                        u
                    })
                })
                .collect();
        }
        tuples
    }

    /// Finds a run of the product staying inside the tuples `keep` accepts,
    /// returned as one lasso per copy, all with equal stem and cycle
    /// lengths. Returns None when the kept subgraph has no infinite run
    /// from an initial tuple.
    pub(crate) fn find_lasso(
        &self,
        keep: &mut dyn FnMut(&[StateId]) -> Result<bool, HyperError>,
    ) -> Result<Option<Vec<Lasso>>, HyperError> {
        const WHITE_DONE: u8 = 2;
        const GREY: u8 = 1;
        let mut color: HashMap<Vec<StateId>, u8> = HashMap::new();
        let mut visited = 0usize;
        for root in self.initial_tuples() {
            if color.contains_key(&root) {
                continue;
            }
            if !keep(&root)? {
                color.insert(root, WHITE_DONE);
                continue;
            }
            let mut path: Vec<Vec<StateId>> = Vec::new();
            let mut frames: Vec<(Vec<Vec<StateId>>, usize)> = Vec::new();
            color.insert(root.clone(), GREY);
            visited += 1;
            frames.push((self.succ_tuples(&root), 0));
            path.push(root);
            while let Some((succs, idx)) = frames.last_mut() {
                if *idx == succs.len() {
                    color.insert(path.pop().expect("path matches frames"), WHITE_DONE);
                    frames.pop();
                    continue;
                }
                let next = succs[*idx].clone();
                *idx += 1;
                match color.get(&next) {
                    Some(&GREY) => {
                        let j = path.iter().position(|t| t == &next).expect("grey tuple is on the path");
                        return Ok(Some(self.split(&path, j)));
                    }
                    Some(_) => {}
                    None => {
                        if keep(&next)? {
                            visited += 1;
                            if visited > MAX_TUPLES {
                                return Err(HyperError::Unsupported(format!(
                                    "the product search passed {MAX_TUPLES} tuples"
                                )));
                            }
                            color.insert(next.clone(), GREY);
                            frames.push((self.succ_tuples(&next), 0));
                            path.push(next);
                        } else {
                            color.insert(next, WHITE_DONE);
                        }
                    }
                }
            }
        }
        Ok(None)
    }

    fn split(&self, path: &[Vec<StateId>], j: usize) -> Vec<Lasso> {
        (0..self.arity())
            .map(|c| {
                Lasso::new(
                    path[..j].iter().map(|t| t[c]).collect(),
                    path[j..].iter().map(|t| t[c]).collect(),
                )
            })
            .collect()
    }
}

/// Decides a fully existential formula whose body is a state predicate
/// under G, or a single-position predicate. Returns witness runs bound in
/// prefix order, or None when no such runs exist.
pub fn check_exists_exists(
    phi: &HyperFormula,
    ts: &TransitionSystem,
) -> Result<Option<Vec<Lasso>>, HyperError> {
    if phi.prefix().iter().any(|(q, _)| *q != TraceQuant::Exists) {
        return Err(HyperError::Formula(
            "the existential search needs an all-exists prefix".into(),
        ));
    }
    let roles = VarRoles::of(ts);
    let prod = ProductSystem::new(vec![ts; phi.prefix().len()])?;
    let names: Vec<&str> = phi.prefix().iter().map(|(_, v)| v.as_str()).collect();
    let eval = |inner: &super::formula::HForm, tuple: &[StateId]| {
        let assign: Vec<(&str, &Env)> =
            names.iter().enumerate().map(|(c, n)| (*n, prod.env(c, tuple[c]))).collect();
        inner.eval_inst(&roles, &assign)
    };
    match phi.body() {
        super::formula::HForm::Globally(inner) if inner.is_instantaneous() => {
            prod.find_lasso(&mut |tuple| eval(inner, tuple))
        }
        body if body.is_instantaneous() => {
            for root in prod.initial_tuples() {
                if eval(body, &root)? {
                    return Ok(Some(
                        root.into_iter().map(|s| extend_to_lasso(ts, None, vec![s])).collect(),
                    ));
                }
            }
            Ok(None)
        }
        _ => Err(HyperError::Formula(
            "the existential search handles G(state predicate) or a single-position predicate"
                .into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypercheck::formula::{HAtom, HForm};
    use crate::reactive::{ModelBuilder, VarSpec};
    use crate::seqlang::{parse_pred, Role};
    use crate::value::{Grid, Value};

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    /// Two initial branches reading constant inputs 0 and 1; the 0 branch
    /// alternates outputs, the 1 branch holds output 5.
    fn forked() -> TransitionSystem {
        let mut b = ModelBuilder::new(
            "forked",
            vec![
                VarSpec::new("i", Role::Input, Grid::new(v("0"), v("1"), v("1")).unwrap()),
                VarSpec::new("o", Role::Output, Grid::new(v("0"), v("5"), v("1")).unwrap()),
            ],
        )
        .unwrap();
        let a0 = b.state(&[("i", v("0")), ("o", v("0"))]).unwrap();
        let a1 = b.state(&[("i", v("0")), ("o", v("1"))]).unwrap();
        let c = b.state(&[("i", v("1")), ("o", v("5"))]).unwrap();
        b.mark_initial(a0);
        b.mark_initial(c);
        b.edge(a0, a1);
        b.edge(a1, a0);
        b.edge(c, c);
        for s in [a0, a1, c] {
            for t in [a0, c] {
                b.edge(s, t);
            }
        }
        b.finish().unwrap()
    }

    #[test]
    fn found_runs_satisfy_the_predicate_jointly() {
        let ts = forked();
        let phi = HyperFormula::new(
            vec![(TraceQuant::Exists, "x"), (TraceQuant::Exists, "y")],
            HForm::globally(HForm::and(
                HForm::Atom(HAtom::holds("x", parse_pred("i = 0").unwrap())),
                HForm::Atom(HAtom::holds("y", parse_pred("i = 1").unwrap())),
            )),
        )
        .unwrap();
        let runs = check_exists_exists(&phi, &ts).unwrap().expect("such a pair exists");
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].stem.len(), runs[1].stem.len());
        assert_eq!(runs[0].cycle.len(), runs[1].cycle.len());
        for l in &runs {
            l.validate(&ts).unwrap();
        }
        for k in 0..runs[0].horizon() + 2 {
            assert_eq!(runs[0].env_at(&ts, k)["i"], v("0"));
            assert_eq!(runs[1].env_at(&ts, k)["i"], v("1"));
        }
    }

    #[test]
    fn unsatisfiable_joint_predicate_yields_none() {
        let ts = forked();
        let phi = HyperFormula::new(
            vec![(TraceQuant::Exists, "x")],
            HForm::globally(HForm::Atom(HAtom::holds("x", parse_pred("o = 4").unwrap()))),
        )
        .unwrap();
        assert!(check_exists_exists(&phi, &ts).unwrap().is_none());
    }

    #[test]
    fn universal_prefix_is_rejected() {
        let ts = forked();
        let phi = HyperFormula::new(
            vec![(TraceQuant::ForAll, "x")],
            HForm::globally(HForm::Atom(HAtom::holds("x", parse_pred("i = 0").unwrap()))),
        )
        .unwrap();
        assert!(matches!(check_exists_exists(&phi, &ts), Err(HyperError::Formula(_))));
    }
}
