//! Exact fixed-point scalars and the grids they live on.
//!
//! Every quantity in the toolkit is a multiple of 10^-6, stored as an `i64`
//! mantissa, plus a distinguished infinity for unbounded distances. All
//! arithmetic is integer arithmetic with explicit rounding, so equality of
//! results is exact and verdicts cannot depend on floating-point rounding.

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Number of decimal digits carried by every [`Value`].
pub const SCALE_DIGITS: u32 = 6;
/// Mantissa units per 1.0.
pub const SCALE: i64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValueError {
    #[error("cannot parse {0:?} as a decimal value")]
    Parse(String),
    #[error("{0:?} has more than {SCALE_DIGITS} decimal digits")]
    TooPrecise(String),
    #[error("value out of range: {0}")]
    Overflow(String),
    #[error("division by zero")]
    DivByZero,
    #[error("arithmetic on infinity: {0}")]
    InfiniteOperand(&'static str),
    #[error("result of {op} is not representable at scale 10^-{SCALE_DIGITS}")]
    Inexact { op: &'static str },
}

/// Exact scalar: a finite multiple of 10^-6, or infinity.
///
/// The derived order puts every finite value below `Inf`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Finite(i64),
    Inf,
}

use Value::{Finite, Inf};

impl Value {
    pub const ZERO: Value = Finite(0);
    pub const ONE: Value = Finite(SCALE);

    /// Builds a value from an integer number of wholes.
    pub fn from_int(n: i64) -> Value {
        Finite(n.checked_mul(SCALE).expect("integer literal out of range"))
    }

    /// Builds a value directly from a mantissa (multiples of 10^-6).
    pub const fn from_mantissa(m: i64) -> Value {
        Finite(m)
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Finite(_))
    }

    pub fn mantissa(&self) -> Option<i64> {
        match self {
            Finite(m) => Some(*m),
            Inf => None,
        }
    }

    fn expect_finite(&self, ctx: &'static str) -> Result<i64, ValueError> {
        self.mantissa().ok_or(ValueError::InfiniteOperand(ctx))
    }

    pub fn checked_add(self, rhs: Value) -> Result<Value, ValueError> {
        match (self, rhs) {
            (Finite(a), Finite(b)) => a
                .checked_add(b)
                .map(Finite)
                .ok_or_else(|| ValueError::Overflow("addition".into())),
            _ => Ok(Inf),
        }
    }

    /// Subtraction; infinity may only appear on the left.
    pub fn checked_sub(self, rhs: Value) -> Result<Value, ValueError> {
        match (self, rhs) {
            (Finite(a), Finite(b)) => a
                .checked_sub(b)
                .map(Finite)
                .ok_or_else(|| ValueError::Overflow("subtraction".into())),
            (Inf, Finite(_)) => Ok(Inf),
            (_, Inf) => Err(ValueError::InfiniteOperand("subtraction")),
        }
    }

    /// Multiplication, rounding half away from zero to the nearest 10^-6.
    pub fn checked_mul(self, rhs: Value) -> Result<Value, ValueError> {
        let a = self.expect_finite("multiplication")?;
        let b = rhs.expect_finite("multiplication")?;
        let wide = (a as i128) * (b as i128);
        Ok(Finite(rescale(wide, SCALE as i128, "multiplication")?))
    }

    /// Division, rounding half away from zero to the nearest 10^-6.
    pub fn checked_div(self, rhs: Value) -> Result<Value, ValueError> {
        let a = self.expect_finite("division")?;
        let b = rhs.expect_finite("division")?;
        if b == 0 {
            return Err(ValueError::DivByZero);
        }
        let wide = (a as i128) * (SCALE as i128);
        Ok(Finite(rescale(wide, b as i128, "division")?))
    }

    /// Integer power with non-negative exponent.
    pub fn checked_pow(self, exp: u32) -> Result<Value, ValueError> {
        let mut acc = Value::ONE;
        for _ in 0..exp {
            acc = acc.checked_mul(self)?;
        }
        Ok(acc)
    }

    pub fn checked_neg(self) -> Result<Value, ValueError> {
        let a = self.expect_finite("negation")?;
        a.checked_neg()
            .map(Finite)
            .ok_or_else(|| ValueError::Overflow("negation".into()))
    }

    /// Absolute value; infinity stays infinity.
    pub fn abs(self) -> Value {
        match self {
            Finite(m) => Finite(m.abs()),
            Inf => Inf,
        }
    }

    /// Absolute difference, the workhorse base distance. Defined for all
    /// operands: both infinite gives 0, one infinite gives infinity.
    pub fn abs_diff(self, rhs: Value) -> Value {
        match (self, rhs) {
            (Finite(a), Finite(b)) => Finite((a - b).abs()),
            (Inf, Inf) => Value::ZERO,
            _ => Inf,
        }
    }

    pub fn min(self, rhs: Value) -> Value {
        std::cmp::min(self, rhs)
    }

    pub fn max(self, rhs: Value) -> Value {
        std::cmp::max(self, rhs)
    }
}

/// Divides `num` by `den`, rounding half away from zero, checking i64 range.
fn rescale(num: i128, den: i128, op: &'static str) -> Result<i64, ValueError> {
    debug_assert!(den > 0);
    let sign = if num < 0 { -1 } else { 1 };
    let q = (num.abs() + den / 2) / den;
    let q = sign * q;
    i64::try_from(q).map_err(|_| ValueError::Overflow(op.into()))
}

/// Divides exactly or fails; used where rounding would be a bug.
pub fn exact_div(num: i64, den: i64) -> Result<i64, ValueError> {
    if den == 0 {
        return Err(ValueError::DivByZero);
    }
    if num % den != 0 {
        return Err(ValueError::Inexact { op: "exact division" });
    }
    Ok(num / den)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Inf => write!(f, "inf"),
            Finite(m) => {
                let sign = if *m < 0 { "-" } else { "" };
                let a = m.unsigned_abs();
                let int = a / SCALE as u64;
                let frac = a % SCALE as u64;
                if frac == 0 {
                    write!(f, "{sign}{int}")
                } else {
                    let digits = format!("{frac:06}");
                    write!(f, "{sign}{int}.{}", digits.trim_end_matches('0'))
                }
            }
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Value {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Value, ValueError> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t == "∞" {
            return Ok(Inf);
        }
        let (sign, body) = match t.strip_prefix('-') {
            Some(rest) => (-1i64, rest),
            None => (1i64, t.strip_prefix('+').unwrap_or(t)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, fr)) => (i, fr),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(ValueError::Parse(s.into()));
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(ValueError::Parse(s.into()));
        }
        if frac_part.len() > SCALE_DIGITS as usize {
            // Trailing zeros beyond the scale are harmless.
            let (keep, rest) = frac_part.split_at(SCALE_DIGITS as usize);
            if rest.chars().any(|c| c != '0') {
                return Err(ValueError::TooPrecise(s.into()));
            }
            return parse_parts(sign, int_part, keep, s);
        }
        parse_parts(sign, int_part, frac_part, s)
    }
}

fn parse_parts(sign: i64, int_part: &str, frac_part: &str, orig: &str) -> Result<Value, ValueError> {
    let int: i64 = if int_part.is_empty() {
        0
    } else {
        int_part
            .parse()
            .map_err(|_| ValueError::Overflow(orig.into()))?
    };
    let mut frac: i64 = if frac_part.is_empty() {
        0
    } else {
        frac_part
            .parse()
            .map_err(|_| ValueError::Overflow(orig.into()))?
    };
    for _ in frac_part.len()..SCALE_DIGITS as usize {
        frac *= 10;
    }
    let m = int
        .checked_mul(SCALE)
        .and_then(|im| im.checked_add(frac))
        .ok_or_else(|| ValueError::Overflow(orig.into()))?;
    Ok(Finite(sign * m))
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Value, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Value;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a decimal string like \"1.5\" or \"inf\", or a number")
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<Value, E> {
                s.parse().map_err(de::Error::custom)
            }

            fn visit_i64<E: de::Error>(self, n: i64) -> Result<Value, E> {
                n.checked_mul(SCALE)
                    .map(Finite)
                    .ok_or_else(|| de::Error::custom("integer out of range"))
            }

            fn visit_u64<E: de::Error>(self, n: u64) -> Result<Value, E> {
                i64::try_from(n)
                    .ok()
                    .and_then(|n| n.checked_mul(SCALE))
                    .map(Finite)
                    .ok_or_else(|| de::Error::custom("integer out of range"))
            }

            fn visit_f64<E: de::Error>(self, x: f64) -> Result<Value, E> {
                // Shortest round-trip decimal form; rejected if it needs more
                // than six decimals, rather than silently rounding.
                let s = format!("{x}");
                s.parse().map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GridError {
    #[error("grid step must be positive, got {0}")]
    NonPositiveStep(Value),
    #[error("grid bounds are reversed: [{lo}, {hi}]")]
    ReversedBounds { lo: Value, hi: Value },
    #[error("grid span [{lo}, {hi}] is not a multiple of step {step}")]
    Misaligned { lo: Value, hi: Value, step: Value },
    #[error("grid bounds must be finite")]
    InfiniteBound,
    #[error("cannot snap infinity onto a grid")]
    SnapInfinite,
}

/// Closed interval of equally spaced values: `lo, lo+step, ..., hi`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid {
    lo: i64,
    hi: i64,
    step: i64,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    lo: Value,
    hi: Value,
    step: Value,
}

impl TryFrom<GridRepr> for Grid {
    type Error = GridError;
    fn try_from(r: GridRepr) -> Result<Grid, GridError> {
        Grid::new(r.lo, r.hi, r.step)
    }
}

impl From<Grid> for GridRepr {
    fn from(g: Grid) -> GridRepr {
        GridRepr { lo: Finite(g.lo), hi: Finite(g.hi), step: Finite(g.step) }
    }
}

impl Grid {
    pub fn new(lo: Value, hi: Value, step: Value) -> Result<Grid, GridError> {
        let (lo, hi, step) = match (lo, hi, step) {
            (Finite(l), Finite(h), Finite(s)) => (l, h, s),
            _ => return Err(GridError::InfiniteBound),
        };
        if step <= 0 {
            return Err(GridError::NonPositiveStep(Finite(step)));
        }
        if hi < lo {
            return Err(GridError::ReversedBounds { lo: Finite(lo), hi: Finite(hi) });
        }
        if (hi - lo) % step != 0 {
            return Err(GridError::Misaligned {
                lo: Finite(lo),
                hi: Finite(hi),
                step: Finite(step),
            });
        }
        Ok(Grid { lo, hi, step })
    }

    pub fn lo(&self) -> Value {
        Finite(self.lo)
    }

    pub fn hi(&self) -> Value {
        Finite(self.hi)
    }

    pub fn step(&self) -> Value {
        Finite(self.step)
    }

    /// Number of grid points.
    pub fn count(&self) -> usize {
        ((self.hi - self.lo) / self.step) as usize + 1
    }

    pub fn value_at(&self, idx: usize) -> Value {
        debug_assert!(idx < self.count());
        Finite(self.lo + self.step * idx as i64)
    }

    /// Index of `v` if it lies exactly on the grid.
    pub fn index_of(&self, v: Value) -> Option<usize> {
        let m = v.mantissa()?;
        if m < self.lo || m > self.hi || (m - self.lo) % self.step != 0 {
            return None;
        }
        Some(((m - self.lo) / self.step) as usize)
    }

    pub fn contains(&self, v: Value) -> bool {
        self.index_of(v).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = Value> + '_ {
        (0..self.count()).map(|i| self.value_at(i))
    }

    /// Clamps into range, then rounds to the nearest point, ties away from
    /// `lo`. Returns the snapped value and whether snapping moved it.
    pub fn snap(&self, v: Value) -> Result<(Value, bool), GridError> {
        let m = v.mantissa().ok_or(GridError::SnapInfinite)?;
        let clamped = m.clamp(self.lo, self.hi);
        let off = clamped - self.lo;
        let k = (off + self.step / 2) / self.step;
        let snapped = self.lo + k * self.step;
        Ok((Finite(snapped), snapped != m))
    }

    /// Grid points inside the closed interval `[lo, hi]`.
    ///
    /// If no point falls inside, the interval is rescued outward: the nearest
    /// grid points just below `lo` and just above `hi` (clamped to the grid)
    /// stand in, so the result is never empty for a non-empty interval.
    pub fn points_within(&self, lo: Value, hi: Value) -> Result<Vec<Value>, GridError> {
        let (l, h) = match (lo, hi) {
            (Finite(l), Finite(h)) => (l, h),
            _ => return Err(GridError::InfiniteBound),
        };
        if h < l {
            return Ok(Vec::new());
        }
        let first = if l <= self.lo {
            0i64
        } else {
            // ceil((l - lo) / step)
            (l - self.lo + self.step - 1) / self.step
        };
        let last = if h >= self.hi {
            (self.hi - self.lo) / self.step
        } else {
            (h - self.lo) / self.step
        };
        let max_idx = (self.hi - self.lo) / self.step;
        if first <= last && first <= max_idx && last >= 0 {
            return Ok((first.max(0)..=last.min(max_idx))
                .map(|k| Finite(self.lo + k * self.step))
                .collect());
        }
        // Outward rescue: snap each endpoint away from the interval.
        let mut pts = Vec::new();
        let below = (l - self.lo).div_euclid(self.step);
        if below >= 0 && below <= max_idx {
            pts.push(Finite(self.lo + below.min(max_idx) * self.step));
        }
        let above = (h - self.lo + self.step - 1).div_euclid(self.step);
        if above >= 0 && above <= max_idx {
            let v = Finite(self.lo + above * self.step);
            if pts.last() != Some(&v) {
                pts.push(v);
            }
        }
        if pts.is_empty() {
            // Interval lies entirely outside the grid span.
            pts.push(if h < self.lo { Finite(self.lo) } else { Finite(self.hi) });
        }
        Ok(pts)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}] step {}", self.lo(), self.hi(), self.step())
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["0", "1", "-1", "0.5", "-0.25", "1.000001", "123.45", "inf"] {
            assert_eq!(v(s).to_string(), s);
        }
        assert_eq!(v("1.50").to_string(), "1.5");
        assert_eq!(v("0.1000000").to_string(), "0.1");
        assert_eq!(v(".5"), v("0.5"));
        assert_eq!(v("2."), v("2"));
    }

    #[test]
    fn parse_rejects_junk_and_excess_precision() {
        assert!("".parse::<Value>().is_err());
        assert!("1.2e3".parse::<Value>().is_err());
        assert!("one".parse::<Value>().is_err());
        assert!(matches!(
            "0.1234567".parse::<Value>(),
            Err(ValueError::TooPrecise(_))
        ));
    }

    #[test]
    fn arithmetic_is_exact_on_grid_values() {
        assert_eq!(v("0.1").checked_add(v("0.2")).unwrap(), v("0.3"));
        assert_eq!(v("1.5").checked_mul(v("1.5")).unwrap(), v("2.25"));
        assert_eq!(v("3.375").checked_div(v("3")).unwrap(), v("1.125"));
        assert_eq!(v("1.5").checked_pow(3).unwrap(), v("3.375"));
        assert_eq!(v("-0.3").abs(), v("0.3"));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        // 0.0000015 rounds to 0.000002, and symmetrically for negatives.
        let tiny = Value::from_mantissa(15);
        let tenth = v("0.1");
        assert_eq!(tiny.checked_mul(tenth).unwrap(), Value::from_mantissa(2));
        let ntiny = Value::from_mantissa(-15);
        assert_eq!(ntiny.checked_mul(tenth).unwrap(), Value::from_mantissa(-2));
    }

    #[test]
    fn infinity_rules() {
        assert!(v("1000000") < Inf);
        assert_eq!(Inf.checked_add(v("1")).unwrap(), Inf);
        assert!(v("1").checked_sub(Inf).is_err());
        assert!(Inf.checked_mul(v("2")).is_err());
        assert_eq!(Inf.abs_diff(Inf), Value::ZERO);
        assert_eq!(v("1").abs_diff(Inf), Inf);
    }

    #[test]
    fn serde_accepts_strings_and_numbers() {
        let parsed: Vec<Value> = serde_json::from_str(r#"["0.5", 2, 0.25, "inf"]"#).unwrap();
        assert_eq!(parsed, vec![v("0.5"), v("2"), v("0.25"), Inf]);
        assert_eq!(serde_json::to_string(&v("0.5")).unwrap(), r#""0.5""#);
        assert!(serde_json::from_str::<Value>("0.12345678901").is_err());
    }

    #[test]
    fn grid_basics() {
        let g = Grid::new(v("0.1"), v("2"), v("0.1")).unwrap();
        assert_eq!(g.count(), 20);
        assert_eq!(g.value_at(0), v("0.1"));
        assert_eq!(g.value_at(19), v("2"));
        assert_eq!(g.index_of(v("1.5")), Some(14));
        assert_eq!(g.index_of(v("1.55")), None);
        assert!(Grid::new(v("0"), v("1"), v("0.3")).is_err());
        assert!(Grid::new(v("1"), v("0"), v("0.1")).is_err());
        assert!(Grid::new(v("0"), v("1"), v("0")).is_err());
    }

    #[test]
    fn snapping_clamps_and_rounds() {
        let g = Grid::new(v("0"), v("2"), v("0.1")).unwrap();
        assert_eq!(g.snap(v("0.44")).unwrap(), (v("0.4"), true));
        assert_eq!(g.snap(v("0.45")).unwrap(), (v("0.5"), true));
        assert_eq!(g.snap(v("-3")).unwrap(), (v("0"), true));
        assert_eq!(g.snap(v("9")).unwrap(), (v("2"), true));
        assert_eq!(g.snap(v("1.7")).unwrap(), (v("1.7"), false));
        assert!(g.snap(Inf).is_err());
    }

    #[test]
    fn points_within_closed_interval() {
        let g = Grid::new(v("0"), v("2"), v("0.5")).unwrap();
        assert_eq!(
            g.points_within(v("0.4"), v("1.6")).unwrap(),
            vec![v("0.5"), v("1"), v("1.5")]
        );
        assert_eq!(g.points_within(v("1"), v("1")).unwrap(), vec![v("1")]);
        assert_eq!(g.points_within(v("1"), v("0.5")).unwrap(), Vec::<Value>::new());
    }

    #[test]
    fn points_within_rescues_outward() {
        let g = Grid::new(v("0"), v("2"), v("0.5")).unwrap();
        assert_eq!(g.points_within(v("0.6"), v("0.9")).unwrap(), vec![v("0.5"), v("1")]);
        assert_eq!(g.points_within(v("2.3"), v("2.4")).unwrap(), vec![v("2")]);
        assert_eq!(g.points_within(v("-1"), v("-0.2")).unwrap(), vec![v("0")]);
    }

    #[test]
    fn grid_serde_round_trip() {
        let g = Grid::new(v("0"), v("2.2"), v("0.05")).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let back: Grid = serde_json::from_str(&json).unwrap();
        assert_eq!(g, back);
        assert!(serde_json::from_str::<Grid>(r#"{"lo":"0","hi":"1","step":"0.3"}"#).is_err());
    }
}
