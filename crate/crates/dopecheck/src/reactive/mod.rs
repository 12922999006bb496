//! Finite-state models of reactive programs.
//!
//! A model is a transition system whose states carry a valuation of declared
//! input and output variables, packed into a 64-bit label. Runs are infinite,
//! so every state must have a successor. The trace of a run is the sequence
//! of its state valuations; its input (output) projection keeps only the
//! input (output) variables. A model maps each infinite input sequence to the
//! set of output sequences produced along runs reading it, which is where
//! the reactive cleanness checks get their trace sets from.

mod lasso;
mod monitor;

pub use lasso::{eval_temporal, eval_temporal_at, Lasso, LassoError};
pub use monitor::Monitor;
pub(crate) use monitor::{is_false as formula_is_false, step_formula};

use crate::seqlang::{Env, Role};
use crate::value::{Grid, Value};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;

pub type StateId = u32;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model grid: {0}")]
    Grid(#[from] crate::value::GridError),
    #[error("model has no states")]
    NoStates,
    #[error("model has no initial states")]
    NoInitial,
    #[error("state {0} is out of range")]
    BadStateRef(StateId),
    #[error("state {0} has no successor, but runs are infinite")]
    NotTotal(StateId),
    #[error("variable {0} is declared twice")]
    DuplicateVar(String),
    #[error("variable {name} has role {role}; model variables are inputs or outputs")]
    BadRole { name: String, role: &'static str },
    #[error("labels need {0} bits, more than the 64 available")]
    TooWide(u32),
    #[error("state {state} encodes no valid value for {var}")]
    BadLabel { state: StateId, var: String },
    #[error("{0} is not a model variable")]
    UnknownVar(String),
    #[error("{value} is not on the grid of {var}")]
    OffGrid { var: String, value: Value },
    #[error("model shape: {0}")]
    Shape(String),
}

/// A model variable: its name, whether the environment or the system picks
/// it, and the grid of values it ranges over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarSpec {
    pub name: String,
    pub role: Role,
    pub grid: Grid,
}

impl VarSpec {
    pub fn new(name: impl Into<String>, role: Role, grid: Grid) -> VarSpec {
        VarSpec { name: name.into(), role, grid }
    }
}

/// Bit field of one variable within a state label.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Field {
    offset: u32,
    width: u32,
}

impl Field {
    fn mask(&self) -> u64 {
        if self.width == 0 {
            0
        } else {
            ((1u64 << self.width) - 1) << self.offset
        }
    }

    fn extract(&self, label: u64) -> usize {
        if self.width == 0 {
            0
        } else {
            ((label >> self.offset) & ((1u64 << self.width) - 1)) as usize
        }
    }

    fn insert(&self, idx: usize) -> u64 {
        (idx as u64) << self.offset
    }
}

fn bits_for(count: usize) -> u32 {
    if count <= 1 {
        0
    } else {
        usize::BITS - (count - 1).leading_zeros()
    }
}

fn layout(vars: &[VarSpec]) -> Result<(Vec<Field>, u64, u64), ModelError> {
    let mut seen = BTreeSet::new();
    let mut fields = Vec::with_capacity(vars.len());
    let mut offset = 0u32;
    let mut input_mask = 0u64;
    let mut output_mask = 0u64;
    for v in vars {
        if !seen.insert(v.name.as_str()) {
            return Err(ModelError::DuplicateVar(v.name.clone()));
        }
        match v.role {
            Role::Input | Role::Output => {}
            other => {
                return Err(ModelError::BadRole { name: v.name.clone(), role: other.keyword() })
            }
        }
        let width = bits_for(v.grid.count());
        if offset + width > 64 {
            return Err(ModelError::TooWide(offset + width));
        }
        let field = Field { offset, width };
        match v.role {
            Role::Input => input_mask |= field.mask(),
            _ => output_mask |= field.mask(),
        }
        fields.push(field);
        offset += width;
    }
    Ok((fields, input_mask, output_mask))
}

/// A finite transition system over valuation labels. Validated on
/// construction: successor and initial references are in range, every state
/// has a successor, and every label decodes to grid values of the declared
/// variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct TransitionSystem {
    name: String,
    vars: Vec<VarSpec>,
    labels: Vec<u64>,
    initial: Vec<StateId>,
    succ: Vec<Vec<StateId>>,
    fields: Vec<Field>,
    input_mask: u64,
    output_mask: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    name: String,
    vars: Vec<VarSpec>,
    labels: Vec<u64>,
    initial: Vec<StateId>,
    succ: Vec<Vec<StateId>>,
}

impl TryFrom<ModelRepr> for TransitionSystem {
    type Error = ModelError;
    fn try_from(r: ModelRepr) -> Result<TransitionSystem, ModelError> {
        TransitionSystem::new(r.name, r.vars, r.labels, r.initial, r.succ)
    }
}

impl From<TransitionSystem> for ModelRepr {
    fn from(ts: TransitionSystem) -> ModelRepr {
        ModelRepr {
            name: ts.name,
            vars: ts.vars,
            labels: ts.labels,
            initial: ts.initial,
            succ: ts.succ,
        }
    }
}

impl TransitionSystem {
    pub fn new(
        name: String,
        vars: Vec<VarSpec>,
        labels: Vec<u64>,
        mut initial: Vec<StateId>,
        mut succ: Vec<Vec<StateId>>,
    ) -> Result<TransitionSystem, ModelError> {
        let (fields, input_mask, output_mask) = layout(&vars)?;
        if labels.is_empty() {
            return Err(ModelError::NoStates);
        }
        if labels.len() > StateId::MAX as usize {
            return Err(ModelError::Shape(format!("{} states is too many", labels.len())));
        }
        if succ.len() != labels.len() {
            return Err(ModelError::Shape(format!(
                "{} successor lists for {} states",
                succ.len(),
                labels.len()
            )));
        }
        let n = labels.len() as StateId;
        initial.sort_unstable();
        initial.dedup();
        if initial.is_empty() {
            return Err(ModelError::NoInitial);
        }
        if let Some(&s) = initial.iter().find(|&&s| s >= n) {
            return Err(ModelError::BadStateRef(s));
        }
        for (s, row) in succ.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if row.is_empty() {
                return Err(ModelError::NotTotal(s as StateId));
            }
            if let Some(&t) = row.iter().find(|&&t| t >= n) {
                return Err(ModelError::BadStateRef(t));
            }
        }
        let full_mask = input_mask | output_mask;
        for (s, &label) in labels.iter().enumerate() {
            if label & !full_mask != 0 {
                return Err(ModelError::Shape(format!(
                    "state {s} has label bits outside the declared variables"
                )));
            }
            for (v, field) in vars.iter().zip(&fields) {
                if field.extract(label) >= v.grid.count() {
                    return Err(ModelError::BadLabel {
                        state: s as StateId,
                        var: v.name.clone(),
                    });
                }
            }
        }
        Ok(TransitionSystem {
            name,
            vars,
            labels,
            initial,
            succ,
            fields,
            input_mask,
            output_mask,
        })
    }

    pub fn from_json(src: &str) -> Result<TransitionSystem, ModelError> {
        Ok(serde_json::from_str(src)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vars(&self) -> &[VarSpec] {
        &self.vars
    }

    pub fn inputs(&self) -> impl Iterator<Item = &VarSpec> {
        self.vars.iter().filter(|v| v.role == Role::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &VarSpec> {
        self.vars.iter().filter(|v| v.role == Role::Output)
    }

    pub fn var(&self, name: &str) -> Option<&VarSpec> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn states(&self) -> usize {
        self.labels.len()
    }

    pub fn initial(&self) -> &[StateId] {
        &self.initial
    }

    pub fn succ(&self, s: StateId) -> &[StateId] {
        &self.succ[s as usize]
    }

    pub fn label(&self, s: StateId) -> u64 {
        self.labels[s as usize]
    }

    /// The label restricted to input variables.
    pub fn input_label(&self, s: StateId) -> u64 {
        self.labels[s as usize] & self.input_mask
    }

    /// The label restricted to output variables.
    pub fn output_label(&self, s: StateId) -> u64 {
        self.labels[s as usize] & self.output_mask
    }

    /// The value of one variable in one state.
    pub fn value_of(&self, s: StateId, name: &str) -> Option<Value> {
        let i = self.vars.iter().position(|v| v.name == name)?;
        Some(self.vars[i].grid.value_at(self.fields[i].extract(self.labels[s as usize])))
    }

    /// The full valuation of one state.
    pub fn state_env(&self, s: StateId) -> Env {
        let label = self.labels[s as usize];
        self.vars
            .iter()
            .zip(&self.fields)
            .map(|(v, f)| (v.name.clone(), v.grid.value_at(f.extract(label))))
            .collect()
    }

    /// Packs a full valuation into a label. Every variable must be bound to
    /// a point on its grid.
    pub fn encode(&self, vals: &[(&str, Value)]) -> Result<u64, ModelError> {
        encode_with(&self.vars, &self.fields, vals)
    }

    /// Every input valuation the variable grids allow, as masked labels.
    pub fn input_alphabet(&self) -> Vec<u64> {
        let ins: Vec<(&VarSpec, &Field)> = self
            .vars
            .iter()
            .zip(&self.fields)
            .filter(|(v, _)| v.role == Role::Input)
            .collect();
        let mut letters = vec![0u64];
        for (v, f) in ins {
            let mut next = Vec::with_capacity(letters.len() * v.grid.count());
            for idx in 0..v.grid.count() {
                for &l in &letters {
                    next.push(l | f.insert(idx));
                }
            }
            letters = next;
        }
        letters.sort_unstable();
        letters
    }

    /// Decodes the input part of a letter into a valuation.
    pub fn decode_input(&self, letter: u64) -> Env {
        self.vars
            .iter()
            .zip(&self.fields)
            .filter(|(v, _)| v.role == Role::Input)
            .map(|(v, f)| (v.name.clone(), v.grid.value_at(f.extract(letter))))
            .collect()
    }

    /// Checks that the model accepts every input everywhere: each initial
    /// input valuation is offered by some initial state, and from every
    /// state each input valuation is offered by some successor. Returns the
    /// first gap, if any.
    pub fn input_enabled_gap(&self) -> Option<EnabledGap> {
        let alphabet = self.input_alphabet();
        let offered: BTreeSet<u64> = self.initial.iter().map(|&s| self.input_label(s)).collect();
        for &letter in &alphabet {
            if !offered.contains(&letter) {
                return Some(EnabledGap { after: None, letter: self.decode_input(letter) });
            }
        }
        for s in 0..self.labels.len() as StateId {
            let offered: BTreeSet<u64> =
                self.succ(s).iter().map(|&t| self.input_label(t)).collect();
            for &letter in &alphabet {
                if !offered.contains(&letter) {
                    return Some(EnabledGap {
                        after: Some(s),
                        letter: self.decode_input(letter),
                    });
                }
            }
        }
        None
    }
}

/// A point where input-enabledness fails: an input valuation nothing offers,
/// either initially or after a particular state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnabledGap {
    pub after: Option<StateId>,
    pub letter: Env,
}

impl fmt::Display for EnabledGap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letter = self
            .letter
            .iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect::<Vec<_>>()
            .join(", ");
        match self.after {
            None => write!(f, "no initial state reads {letter}"),
            Some(s) => write!(f, "state {s} has no successor reading {letter}"),
        }
    }
}

fn encode_with(
    vars: &[VarSpec],
    fields: &[Field],
    vals: &[(&str, Value)],
) -> Result<u64, ModelError> {
    if vals.len() != vars.len() {
        return Err(ModelError::Shape(format!(
            "{} values for {} variables",
            vals.len(),
            vars.len()
        )));
    }
    let mut label = 0u64;
    for &(name, value) in vals {
        let i = vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| ModelError::UnknownVar(name.to_string()))?;
        let idx = vars[i]
            .grid
            .index_of(value)
            .ok_or_else(|| ModelError::OffGrid { var: name.to_string(), value })?;
        label |= fields[i].insert(idx);
    }
    Ok(label)
}

/// Incremental model construction with states deduplicated by label.
pub struct ModelBuilder {
    name: String,
    vars: Vec<VarSpec>,
    fields: Vec<Field>,
    labels: Vec<u64>,
    index: HashMap<u64, StateId>,
    initial: BTreeSet<StateId>,
    succ: Vec<BTreeSet<StateId>>,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>, vars: Vec<VarSpec>) -> Result<ModelBuilder, ModelError> {
        let (fields, _, _) = layout(&vars)?;
        Ok(ModelBuilder {
            name: name.into(),
            vars,
            fields,
            labels: Vec::new(),
            index: HashMap::new(),
            initial: BTreeSet::new(),
            succ: Vec::new(),
        })
    }

    /// The state with the given valuation, created on first sight.
    pub fn state(&mut self, vals: &[(&str, Value)]) -> Result<StateId, ModelError> {
        let label = encode_with(&self.vars, &self.fields, vals)?;
        if let Some(&s) = self.index.get(&label) {
            return Ok(s);
        }
        let s = self.labels.len() as StateId;
        self.labels.push(label);
        self.succ.push(BTreeSet::new());
        self.index.insert(label, s);
        Ok(s)
    }

    pub fn contains(&self, vals: &[(&str, Value)]) -> bool {
        encode_with(&self.vars, &self.fields, vals)
            .map(|l| self.index.contains_key(&l))
            .unwrap_or(false)
    }

    pub fn mark_initial(&mut self, s: StateId) {
        self.initial.insert(s);
    }

    pub fn edge(&mut self, from: StateId, to: StateId) {
        self.succ[from as usize].insert(to);
    }

    pub fn finish(self) -> Result<TransitionSystem, ModelError> {
        TransitionSystem::new(
            self.name,
            self.vars,
            self.labels,
            self.initial.into_iter().collect(),
            self.succ.into_iter().map(|row| row.into_iter().collect()).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqlang::Role;

    fn v(s: &str) -> Value {
        s.parse().unwrap()
    }

    fn grid(lo: &str, hi: &str, step: &str) -> Grid {
        Grid::new(v(lo), v(hi), v(step)).unwrap()
    }

    fn two_var_builder() -> ModelBuilder {
        ModelBuilder::new(
            "m",
            vec![
                VarSpec::new("t", Role::Input, grid("0.1", "2", "0.1")),
                VarSpec::new("n", Role::Output, grid("0", "2.2", "0.05")),
            ],
        )
        .unwrap()
    }

    #[test]
    fn encode_decode_round_trip() {
        let mut b = two_var_builder();
        let s = b.state(&[("t", v("1.3")), ("n", v("0.65"))]).unwrap();
        let s2 = b.state(&[("n", v("0.65")), ("t", v("1.3"))]).unwrap();
        assert_eq!(s, s2);
        b.mark_initial(s);
        b.edge(s, s);
        let ts = b.finish().unwrap();
        assert_eq!(ts.value_of(s, "t"), Some(v("1.3")));
        assert_eq!(ts.value_of(s, "n"), Some(v("0.65")));
        assert_eq!(ts.value_of(s, "x"), None);
        let env = ts.state_env(s);
        assert_eq!(env["t"], v("1.3"));
        assert_eq!(env["n"], v("0.65"));
        assert_eq!(ts.encode(&[("t", v("1.3")), ("n", v("0.65"))]).unwrap(), ts.label(s));
    }

    #[test]
    fn projections_split_the_label() {
        let mut b = two_var_builder();
        let a = b.state(&[("t", v("0.5")), ("n", v("0.2"))]).unwrap();
        let c = b.state(&[("t", v("0.5")), ("n", v("0.3"))]).unwrap();
        b.mark_initial(a);
        b.edge(a, c);
        b.edge(c, a);
        let ts = b.finish().unwrap();
        assert_eq!(ts.input_label(a), ts.input_label(c));
        assert_ne!(ts.output_label(a), ts.output_label(c));
        assert_eq!(ts.input_label(a) & ts.output_label(a), 0);
    }

    #[test]
    fn builder_rejects_bad_valuations() {
        let mut b = two_var_builder();
        assert!(matches!(
            b.state(&[("t", v("0.55")), ("n", v("0"))]),
            Err(ModelError::OffGrid { .. })
        ));
        assert!(matches!(
            b.state(&[("q", v("0.5")), ("n", v("0"))]),
            Err(ModelError::UnknownVar(_))
        ));
        assert!(matches!(b.state(&[("t", v("0.5"))]), Err(ModelError::Shape(_))));
    }

    #[test]
    fn validation_catches_broken_shapes() {
        let vars = vec![VarSpec::new("t", Role::Input, grid("0", "1", "1"))];
        let make = |labels: Vec<u64>, initial: Vec<StateId>, succ: Vec<Vec<StateId>>| {
            TransitionSystem::new("m".into(), vars.clone(), labels, initial, succ)
        };
        assert!(matches!(make(vec![], vec![], vec![]), Err(ModelError::NoStates)));
        assert!(matches!(make(vec![0], vec![], vec![vec![0]]), Err(ModelError::NoInitial)));
        assert!(matches!(make(vec![0], vec![0], vec![vec![]]), Err(ModelError::NotTotal(0))));
        assert!(matches!(make(vec![0], vec![0], vec![vec![1]]), Err(ModelError::BadStateRef(1))));
        assert!(matches!(make(vec![0], vec![2], vec![vec![0]]), Err(ModelError::BadStateRef(2))));
        assert!(matches!(make(vec![0, 1], vec![0], vec![vec![0]]), Err(ModelError::Shape(_))));
        assert!(matches!(make(vec![4], vec![0], vec![vec![0]]), Err(ModelError::Shape(_))));
        let param = vec![VarSpec::new("p", Role::Param, grid("0", "1", "1"))];
        assert!(matches!(
            TransitionSystem::new("m".into(), param, vec![0], vec![0], vec![vec![0]]),
            Err(ModelError::BadRole { .. })
        ));
    }

    #[test]
    fn labels_must_decode_onto_grids() {
        // Three grid points need two bits, but index 3 is unused.
        let vars = vec![VarSpec::new("t", Role::Input, grid("0", "2", "1"))];
        let got = TransitionSystem::new("m".into(), vars, vec![3], vec![0], vec![vec![0]]);
        assert!(matches!(got, Err(ModelError::BadLabel { state: 0, .. })));
    }

    #[test]
    fn layout_is_bounded_and_duplicate_free() {
        let wide = grid("0", "0.00002", "0.000001");
        let vars: Vec<VarSpec> = (0..5)
            .map(|i| VarSpec::new(format!("v{i}"), Role::Input, wide))
            .collect();
        // Each variable needs ceil(log2 21) = 5 bits; 13 of them would not fit.
        let many: Vec<VarSpec> = (0..13)
            .map(|i| VarSpec::new(format!("v{i}"), Role::Input, wide))
            .collect();
        assert!(ModelBuilder::new("m", vars).is_ok());
        assert!(matches!(ModelBuilder::new("m", many), Err(ModelError::TooWide(65))));
        let dup = vec![
            VarSpec::new("t", Role::Input, wide),
            VarSpec::new("t", Role::Output, wide),
        ];
        assert!(matches!(ModelBuilder::new("m", dup), Err(ModelError::DuplicateVar(_))));
    }

    #[test]
    fn single_point_grids_use_no_bits() {
        let vars = vec![
            VarSpec::new("a", Role::Input, grid("1", "1", "1")),
            VarSpec::new("b", Role::Output, grid("0", "1", "1")),
        ];
        let mut b = ModelBuilder::new("m", vars).unwrap();
        let s0 = b.state(&[("a", v("1")), ("b", v("0"))]).unwrap();
        let s1 = b.state(&[("a", v("1")), ("b", v("1"))]).unwrap();
        assert!(b.contains(&[("a", v("1")), ("b", v("1"))]));
        b.mark_initial(s0);
        b.edge(s0, s1);
        b.edge(s1, s0);
        let ts = b.finish().unwrap();
        assert_eq!(ts.label(s0), 0);
        assert_eq!(ts.label(s1), 1);
        assert_eq!(ts.value_of(s1, "a"), Some(v("1")));
    }

    #[test]
    fn json_round_trip() {
        let mut b = two_var_builder();
        let a = b.state(&[("t", v("0.1")), ("n", v("0.05"))]).unwrap();
        let c = b.state(&[("t", v("2")), ("n", v("1.1"))]).unwrap();
        b.mark_initial(a);
        b.edge(a, c);
        b.edge(c, c);
        b.edge(c, a);
        let ts = b.finish().unwrap();
        let again = TransitionSystem::from_json(&ts.to_json()).unwrap();
        assert_eq!(ts, again);
        assert!(TransitionSystem::from_json("{\"name\": \"m\"}").is_err());
    }

    #[test]
    fn input_alphabet_and_enabledness() {
        let mut b = two_var_builder();
        // A clique offering every throttle initially and after every state,
        // with a fixed output.
        let mut states = Vec::new();
        for i in 0..20 {
            let t = Value::from_mantissa((i + 1) * 100_000);
            let s = b.state(&[("t", t), ("n", v("0.5"))]).unwrap();
            b.mark_initial(s);
            states.push(s);
        }
        for &s in &states {
            for &t in &states {
                b.edge(s, t);
            }
        }
        let ts = b.finish().unwrap();
        assert_eq!(ts.input_alphabet().len(), 20);
        assert_eq!(ts.input_enabled_gap(), None);

        // Dropping one initial state leaves its letter unread at the start.
        let mut b = two_var_builder();
        let s0 = b.state(&[("t", v("0.1")), ("n", v("0.5"))]).unwrap();
        b.mark_initial(s0);
        b.edge(s0, s0);
        let ts = b.finish().unwrap();
        let gap = ts.input_enabled_gap().unwrap();
        assert_eq!(gap.after, None);
        assert_eq!(gap.letter["t"], v("0.2"));
        assert_eq!(gap.to_string(), "no initial state reads t = 0.2");
    }
}
