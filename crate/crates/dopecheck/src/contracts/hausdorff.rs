//! Hausdorff distance between finite sets, and its two-clause bounded form.

use super::distance::{Distance, DistanceError};
use crate::value::Value;

/// Hausdorff distance between finite sets under an arbitrary element
/// distance. Conventions for degenerate sets: two empty sets are at
/// distance 0, an empty set is infinitely far from a non-empty one.
pub fn hausdorff_by<T, E>(
    a: &[T],
    b: &[T],
    mut d: impl FnMut(&T, &T) -> Result<Value, E>,
) -> Result<Value, E> {
    if a.is_empty() && b.is_empty() {
        return Ok(Value::ZERO);
    }
    if a.is_empty() || b.is_empty() {
        return Ok(Value::Inf);
    }
    let mut worst = Value::ZERO;
    for (xs, ys) in [(a, b), (b, a)] {
        for x in xs {
            let mut best = Value::Inf;
            for y in ys {
                best = best.min(d(x, y)?);
                if best == Value::ZERO {
                    break;
                }
            }
            worst = worst.max(best);
        }
    }
    Ok(worst)
}

/// Decides `hausdorff_by(a, b, d) <= bound` without computing the distance:
/// every element of each set needs a partner in the other within `bound`.
/// The infimum over an empty partner set counts as infinite, which keeps
/// this exactly equivalent to comparing the Hausdorff distance.
pub fn two_clause_within_by<T, E>(
    a: &[T],
    b: &[T],
    bound: Value,
    mut d: impl FnMut(&T, &T) -> Result<Value, E>,
) -> Result<bool, E> {
    for (xs, ys) in [(a, b), (b, a)] {
        for x in xs {
            let mut covered = ys.is_empty() && bound == Value::Inf;
            for y in ys {
                if d(x, y)? <= bound {
                    covered = true;
                    break;
                }
            }
            if !covered {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// [`hausdorff_by`] specialized to plain values.
pub fn hausdorff(d: &Distance, a: &[Value], b: &[Value]) -> Result<Value, DistanceError> {
    hausdorff_by(a, b, |x, y| d.value_dist(*x, *y))
}

/// [`two_clause_within_by`] specialized to plain values.
pub fn two_clause_within(
    d: &Distance,
    a: &[Value],
    b: &[Value],
    bound: Value,
) -> Result<bool, DistanceError> {
    two_clause_within_by(a, b, bound, |x, y| d.value_dist(*x, *y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    fn vs(ss: &[&str]) -> Vec<Value> {
        ss.iter().map(|s| s.parse().unwrap()).collect()
    }

    const D: Distance = Distance::AbsDiff;

    #[test]
    fn matches_hand_computed_distances() {
        assert_eq!(hausdorff(&D, &vs(&["0.5"]), &vs(&["0.5"])).unwrap(), v("0"));
        assert_eq!(hausdorff(&D, &vs(&["0", "1"]), &vs(&["0"])).unwrap(), v("1"));
        assert_eq!(
            hausdorff(&D, &vs(&["0.45", "0.55"]), &vs(&["0.5", "0.6"])).unwrap(),
            v("0.05")
        );
    }

    #[test]
    fn asymmetric_directed_parts_are_combined() {
        // sup-inf from the left is 0.2, from the right is 1.8.
        assert_eq!(
            hausdorff(&D, &vs(&["1", "1.2"]), &vs(&["1", "3"])).unwrap(),
            v("1.8")
        );
    }

    #[test]
    fn empty_set_conventions() {
        assert_eq!(hausdorff(&D, &[], &[]).unwrap(), v("0"));
        assert_eq!(hausdorff(&D, &vs(&["1"]), &[]).unwrap(), Value::Inf);
        assert_eq!(hausdorff(&D, &[], &vs(&["1"])).unwrap(), Value::Inf);
    }

    #[test]
    fn two_clause_agrees_on_frozen_examples() {
        let a = vs(&["0", "1"]);
        let b = vs(&["0"]);
        assert!(!two_clause_within(&D, &a, &b, v("0.5")).unwrap());
        assert!(two_clause_within(&D, &a, &b, v("1")).unwrap());
    }

    #[test]
    fn two_clause_handles_empty_sets_like_hausdorff() {
        assert!(two_clause_within(&D, &[], &[], v("0")).unwrap());
        assert!(!two_clause_within(&D, &vs(&["1"]), &[], v("5")).unwrap());
        assert!(two_clause_within(&D, &vs(&["1"]), &[], Value::Inf).unwrap());
    }
}
