//! Constraint functions `g(s, a)` for constraint-composed objectives.
//!
//! Four designs are supported. Timestep kinds are active only at a single
//! target step `t'` and return exactly zero elsewhere; episode kinds are
//! active at every step. Probability kinds compare an event indicator against
//! an allowed probability `p_eps`; value kinds compare a scalar signal
//! `ĝ(s, a)` against a tolerance `eps`. Any constraint can be reversed, which
//! negates its output and flips the direction of the implied inequality.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Membership test for the event set `S' x A'`.
pub type Predicate = Arc<dyn Fn(&[f64], &[f64]) -> bool + Send + Sync>;

/// Scalar signal `ĝ(s, a)` used by value constraints.
pub type ValueFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    TimestepProb,
    TimestepValue,
    EpisodeProb,
    EpisodeValue,
}

impl ConstraintKind {
    pub fn is_timestep(self) -> bool {
        matches!(self, ConstraintKind::TimestepProb | ConstraintKind::TimestepValue)
    }

    pub fn is_prob(self) -> bool {
        matches!(self, ConstraintKind::TimestepProb | ConstraintKind::EpisodeProb)
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintKind::TimestepProb => "timestep-prob",
            ConstraintKind::TimestepValue => "timestep-value",
            ConstraintKind::EpisodeProb => "episode-prob",
            ConstraintKind::EpisodeValue => "episode-value",
        };
        f.write_str(s)
    }
}

#[derive(Clone)]
enum Signal {
    Event(Predicate),
    Value(ValueFn),
}

/// Raw parameters for [`make_constraint`]. Unused fields must stay `None`.
#[derive(Clone, Default)]
pub struct ConstraintParams {
    pub name: String,
    pub kind: Option<ConstraintKind>,
    pub target_timestep: Option<usize>,
    pub p_epsilon: Option<f64>,
    pub epsilon: Option<f64>,
    pub event: Option<Predicate>,
    pub value_fn: Option<ValueFn>,
    pub reversed: bool,
}

/// An immutable, validated constraint function.
#[derive(Clone)]
pub struct ConstraintFn {
    name: String,
    kind: ConstraintKind,
    target_timestep: Option<usize>,
    threshold: f64,
    signal: Signal,
    reversed: bool,
}

impl fmt::Debug for ConstraintFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintFn")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("target_timestep", &self.target_timestep)
            .field("threshold", &self.threshold)
            .field("reversed", &self.reversed)
            .finish()
    }
}

fn reject(field: &str, kind: ConstraintKind) -> Error {
    Error::construction(field, format!("not accepted by {kind} constraints"))
}

fn require<T>(value: Option<T>, field: &str, kind: ConstraintKind) -> Result<T> {
    value.ok_or_else(|| Error::construction(field, format!("required by {kind} constraints")))
}

pub fn make_constraint(params: ConstraintParams) -> Result<ConstraintFn> {
    let kind = params
        .kind
        .ok_or_else(|| Error::construction("kind", "missing"))?;

    let target_timestep = if kind.is_timestep() {
        Some(require(params.target_timestep, "target_timestep", kind)?)
    } else {
        if params.target_timestep.is_some() {
            return Err(reject("target_timestep", kind));
        }
        None
    };

    let (threshold, signal) = if kind.is_prob() {
        if params.epsilon.is_some() {
            return Err(reject("epsilon", kind));
        }
        if params.value_fn.is_some() {
            return Err(reject("value_fn", kind));
        }
        let p = require(params.p_epsilon, "p_epsilon", kind)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::construction("p_epsilon", format!("{p} is outside [0, 1]")));
        }
        (p, Signal::Event(require(params.event, "event", kind)?))
    } else {
        if params.p_epsilon.is_some() {
            return Err(reject("p_epsilon", kind));
        }
        if params.event.is_some() {
            return Err(reject("event", kind));
        }
        let eps = require(params.epsilon, "epsilon", kind)?;
        if !eps.is_finite() {
            return Err(Error::construction("epsilon", "must be finite"));
        }
        (eps, Signal::Value(require(params.value_fn, "value_fn", kind)?))
    };

    Ok(ConstraintFn {
        name: params.name,
        kind,
        target_timestep,
        threshold,
        signal,
        reversed: params.reversed,
    })
}

impl ConstraintFn {
    pub fn timestep_prob(
        name: impl Into<String>,
        target_timestep: usize,
        p_epsilon: f64,
        event: Predicate,
    ) -> Result<Self> {
        make_constraint(ConstraintParams {
            name: name.into(),
            kind: Some(ConstraintKind::TimestepProb),
            target_timestep: Some(target_timestep),
            p_epsilon: Some(p_epsilon),
            event: Some(event),
            ..Default::default()
        })
    }

    pub fn timestep_value(
        name: impl Into<String>,
        target_timestep: usize,
        epsilon: f64,
        value_fn: ValueFn,
    ) -> Result<Self> {
        make_constraint(ConstraintParams {
            name: name.into(),
            kind: Some(ConstraintKind::TimestepValue),
            target_timestep: Some(target_timestep),
            epsilon: Some(epsilon),
            value_fn: Some(value_fn),
            ..Default::default()
        })
    }

    pub fn episode_prob(name: impl Into<String>, p_epsilon: f64, event: Predicate) -> Result<Self> {
        make_constraint(ConstraintParams {
            name: name.into(),
            kind: Some(ConstraintKind::EpisodeProb),
            p_epsilon: Some(p_epsilon),
            event: Some(event),
            ..Default::default()
        })
    }

    pub fn episode_value(name: impl Into<String>, epsilon: f64, value_fn: ValueFn) -> Result<Self> {
        make_constraint(ConstraintParams {
            name: name.into(),
            kind: Some(ConstraintKind::EpisodeValue),
            epsilon: Some(epsilon),
            value_fn: Some(value_fn),
            ..Default::default()
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn target_timestep(&self) -> Option<usize> {
        self.target_timestep
    }

    /// `p_eps` for probability kinds, `eps` for value kinds.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// Whether the constraint is active at step `t`.
    pub fn is_active(&self, t: usize) -> bool {
        self.target_timestep.is_none_or(|target| target == t)
    }

    /// The event indicator, for probability kinds.
    pub fn event(&self, state: &[f64], action: &[f64]) -> Option<bool> {
        match &self.signal {
            Signal::Event(p) => Some(p(state, action)),
            Signal::Value(_) => None,
        }
    }

    /// The raw signal `ĝ(s, a)`, for value kinds.
    pub fn signal_value(&self, state: &[f64], action: &[f64]) -> Option<f64> {
        match &self.signal {
            Signal::Event(_) => None,
            Signal::Value(v) => Some(v(state, action)),
        }
    }

    /// Evaluates `g(s, a)` at step `t`.
    pub fn evaluate(&self, state: &[f64], action: &[f64], t: usize) -> Result<f64> {
        if !self.is_active(t) {
            return Ok(0.0);
        }
        let g = match &self.signal {
            Signal::Event(pred) => {
                let hit = if pred(state, action) { 1.0 } else { 0.0 };
                self.threshold - hit
            }
            Signal::Value(value_fn) => {
                let v = value_fn(state, action);
                if !v.is_finite() {
                    return Err(Error::numeric(
                        format!("value function of constraint `{}`", self.name),
                        t as u64,
                    ));
                }
                self.threshold - v
            }
        };
        Ok(if self.reversed { -g } else { g })
    }

    /// The same constraint with its inequality flipped.
    pub fn reverse(&self) -> Self {
        let mut out = self.clone();
        out.reversed = !out.reversed;
        out
    }
}

/// Named predicates and value functions that configuration files can refer to.
#[derive(Clone, Default)]
pub struct SignalRegistry {
    predicates: BTreeMap<String, Predicate>,
    values: BTreeMap<String, ValueFn>,
}

impl SignalRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry preloaded with the pendulum and tabular signals.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        crate::envs::pendulum::register_signals(&mut reg);
        crate::envs::tabular::register_signals(&mut reg);
        reg
    }

    pub fn register_predicate(&mut self, name: impl Into<String>, pred: Predicate) {
        self.predicates.insert(name.into(), pred);
    }

    pub fn register_value(&mut self, name: impl Into<String>, value_fn: ValueFn) {
        self.values.insert(name.into(), value_fn);
    }

    pub fn predicate(&self, name: &str) -> Result<Predicate> {
        self.predicates.get(name).cloned().ok_or_else(|| Error::UnknownName {
            what: "predicate",
            name: name.to_string(),
        })
    }

    pub fn value_fn(&self, name: &str) -> Result<ValueFn> {
        self.values.get(name).cloned().ok_or_else(|| Error::UnknownName {
            what: "value function",
            name: name.to_string(),
        })
    }

    pub fn predicate_names(&self) -> impl Iterator<Item = &str> {
        self.predicates.keys().map(String::as_str)
    }

    pub fn value_names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

/// Target step of a timestep constraint as written in a config file:
/// either an explicit index or `"final"` for the horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetStep {
    Index(usize),
    Named(FinalStep),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalStep {
    Final,
}

impl TargetStep {
    pub fn resolve(self, horizon: usize) -> usize {
        match self {
            TargetStep::Index(t) => t,
            TargetStep::Named(FinalStep::Final) => horizon,
        }
    }
}

/// Serializable constraint declaration referencing registered signals by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintDecl {
    pub name: String,
    pub kind: ConstraintKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_timestep: Option<TargetStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_fn: Option<String>,
    #[serde(default)]
    pub reversed: bool,
}

impl ConstraintDecl {
    pub fn resolve(&self, registry: &SignalRegistry, horizon: usize) -> Result<ConstraintFn> {
        let event = self
            .predicate
            .as_deref()
            .map(|n| registry.predicate(n))
            .transpose()?;
        let value_fn = self
            .value_fn
            .as_deref()
            .map(|n| registry.value_fn(n))
            .transpose()?;
        let target_timestep = self.target_timestep.map(|t| t.resolve(horizon));
        if let Some(t) = target_timestep {
            if t > horizon {
                return Err(Error::construction(
                    "target_timestep",
                    format!("{t} exceeds horizon {horizon}"),
                ));
            }
        }
        make_constraint(ConstraintParams {
            name: self.name.clone(),
            kind: Some(self.kind),
            target_timestep,
            p_epsilon: self.p_epsilon,
            epsilon: self.epsilon,
            event,
            value_fn,
            reversed: self.reversed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn abs_first() -> ValueFn {
        Arc::new(|s: &[f64], _: &[f64]| s[0].abs())
    }

    fn first_positive() -> Predicate {
        Arc::new(|s: &[f64], _: &[f64]| s[0] > 0.0)
    }

    #[test]
    fn timestep_prob_is_zero_off_target() {
        let c = ConstraintFn::timestep_prob("c", 5, 0.1, first_positive()).unwrap();
        assert_eq!(c.evaluate(&[-1.0], &[0.0], 3).unwrap(), 0.0);
    }

    #[test]
    fn timestep_prob_on_target_with_event() {
        let c = ConstraintFn::timestep_prob("c", 5, 0.1, first_positive()).unwrap();
        let g = c.evaluate(&[1.0], &[0.0], 5).unwrap();
        assert!((g - (-0.9)).abs() < 1e-15);
        assert_eq!(c.evaluate(&[-1.0], &[0.0], 5).unwrap(), 0.1);
    }

    #[test]
    fn episode_value_at_zero_signal() {
        let c = ConstraintFn::episode_value("c", 1e-2, abs_first()).unwrap();
        for t in [0, 7, 200] {
            assert_eq!(c.evaluate(&[0.0], &[0.0], t).unwrap(), 0.01);
        }
    }

    #[test]
    fn timestep_value_final_step() {
        let c = ConstraintFn::timestep_value("c", 200, 1e-2, abs_first()).unwrap();
        assert_eq!(c.evaluate(&[0.5], &[0.0], 199).unwrap(), 0.0);
        assert!((c.evaluate(&[0.5], &[0.0], 200).unwrap() - (0.01 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn fall_down_pattern_accepts_zero_probability() {
        let c = ConstraintFn::timestep_prob("fall", 200, 0.0, first_positive()).unwrap();
        assert_eq!(c.evaluate(&[1.0], &[], 200).unwrap(), -1.0);
        assert_eq!(c.evaluate(&[-1.0], &[], 200).unwrap(), 0.0);
    }

    #[test]
    fn reverse_examples() {
        let c = ConstraintFn::episode_value("c", 0.01, Arc::new(|_: &[f64], _: &[f64]| 0.04)).unwrap();
        let r = c.reverse();
        assert!((r.evaluate(&[], &[], 0).unwrap() - 0.03).abs() < 1e-15);
        let rr = r.reverse();
        assert_eq!(rr.evaluate(&[], &[], 0).unwrap(), c.evaluate(&[], &[], 0).unwrap());

        let tp = ConstraintFn::timestep_prob("c", 3, 0.2, first_positive()).unwrap().reverse();
        assert_eq!(tp.evaluate(&[1.0], &[], 2).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_value_is_a_fault() {
        let c = ConstraintFn::episode_value("c", 0.0, Arc::new(|_: &[f64], _: &[f64]| f64::NAN)).unwrap();
        assert!(matches!(c.evaluate(&[], &[], 4), Err(Error::NumericFault { step: 4, .. })));
    }

    fn field_of(err: Error) -> String {
        match err {
            Error::Construction { field, .. } => field,
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn construction_errors_name_the_field() {
        let base = ConstraintParams {
            name: "c".into(),
            kind: Some(ConstraintKind::EpisodeValue),
            epsilon: Some(0.1),
            value_fn: Some(abs_first()),
            ..Default::default()
        };
        let mut p = base.clone();
        p.event = Some(first_positive());
        assert_eq!(field_of(make_constraint(p).err().unwrap()), "event");

        let mut p = base.clone();
        p.value_fn = None;
        assert_eq!(field_of(make_constraint(p).err().unwrap()), "value_fn");

        let mut p = base.clone();
        p.target_timestep = Some(3);
        assert_eq!(field_of(make_constraint(p).err().unwrap()), "target_timestep");

        let p = ConstraintParams {
            name: "c".into(),
            kind: Some(ConstraintKind::TimestepProb),
            p_epsilon: Some(0.5),
            event: Some(first_positive()),
            ..Default::default()
        };
        assert_eq!(field_of(make_constraint(p).err().unwrap()), "target_timestep");

        let p = ConstraintParams {
            name: "c".into(),
            kind: Some(ConstraintKind::EpisodeProb),
            p_epsilon: Some(1.5),
            event: Some(first_positive()),
            ..Default::default()
        };
        assert_eq!(field_of(make_constraint(p).err().unwrap()), "p_epsilon");
    }

    #[test]
    fn decl_resolves_final_step_and_rejects_unknown_names() {
        let reg = SignalRegistry::builtin();
        let decl = ConstraintDecl {
            name: "final-angle".into(),
            kind: ConstraintKind::TimestepValue,
            target_timestep: Some(TargetStep::Named(FinalStep::Final)),
            p_epsilon: None,
            epsilon: Some(0.01),
            predicate: None,
            value_fn: Some("abs-angle".into()),
            reversed: false,
        };
        let c = decl.resolve(&reg, 200).unwrap();
        assert_eq!(c.target_timestep(), Some(200));

        let mut bad = decl.clone();
        bad.value_fn = Some("no-such-signal".into());
        assert!(matches!(bad.resolve(&reg, 200), Err(Error::UnknownName { .. })));

        let mut late = decl;
        late.target_timestep = Some(TargetStep::Index(201));
        assert!(late.resolve(&reg, 200).is_err());
    }

    proptest! {
        #[test]
        fn timestep_kinds_vanish_off_target(t in 0usize..400, target in 0usize..400, x in -5.0f64..5.0) {
            prop_assume!(t != target);
            let tp = ConstraintFn::timestep_prob("p", target, 0.3, first_positive()).unwrap();
            let tv = ConstraintFn::timestep_value("v", target, 0.3, abs_first()).unwrap();
            prop_assert_eq!(tp.evaluate(&[x], &[], t).unwrap(), 0.0);
            prop_assert_eq!(tv.evaluate(&[x], &[], t).unwrap(), 0.0);
            prop_assert_eq!(tv.reverse().evaluate(&[x], &[], t).unwrap(), 0.0);
        }

        #[test]
        fn prob_kinds_are_two_valued(p in 0.0f64..=1.0, x in -5.0f64..5.0, a in -1.0f64..1.0, t in 0usize..50) {
            let c = ConstraintFn::episode_prob("p", p, first_positive()).unwrap();
            let g = c.evaluate(&[x], &[a], t).unwrap();
            prop_assert!(g == p || g == p - 1.0);
        }

        #[test]
        fn reverse_negates(eps in -1.0f64..1.0, x in -5.0f64..5.0, t in 0usize..10) {
            let c = ConstraintFn::episode_value("v", eps, abs_first()).unwrap();
            prop_assert_eq!(c.reverse().evaluate(&[x], &[], t).unwrap(), -c.evaluate(&[x], &[], t).unwrap());
        }
    }
}
