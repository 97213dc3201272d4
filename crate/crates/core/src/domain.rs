//! Core domain data: contents, user types, scenarios, and strategy profiles.
//!
//! The population model is the two-content special case: item `A` is the
//! universally tempting one (longer expected engagement for every type),
//! item `B` the alternative. A type whose reward ordering disagrees with the
//! engagement ordering (`r_b > r_a`) is a *Type1* user; one whose rewards
//! agree with engagement (`r_a > r_b`) is a *Type2* user. Equal rewards are
//! rejected: the preferred content would be ill-defined.
//!
//! All types here are immutable after validation and safe to share across
//! threads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// One of the two content kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Content {
    /// The universally tempting item.
    A,
    /// The alternative item.
    B,
}

impl Content {
    /// The other content.
    pub fn other(self) -> Content {
        match self {
            Content::A => Content::B,
            Content::B => Content::A,
        }
    }

    /// Stable index (`A` = 0, `B` = 1) for vector layouts.
    pub fn index(self) -> usize {
        match self {
            Content::A => 0,
            Content::B => 1,
        }
    }

    /// Single-letter label used in CSV output.
    pub fn label(self) -> &'static str {
        match self {
            Content::A => "A",
            Content::B => "B",
        }
    }

    pub const BOTH: [Content; 2] = [Content::A, Content::B];
}

/// Reward-vs-engagement orientation of a user type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Rewards disagree with engagement lengths: prefers `B`.
    Type1,
    /// Rewards agree with engagement lengths: prefers `A`.
    Type2,
}

/// Per-type engagement rates and rewards.
///
/// `alpha_a`/`alpha_b` are the success rates of the engagement-length
/// distribution; `1/alpha` is the expected engagement length in steps.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTypeParams<S> {
    pub id: String,
    pub alpha_a: S,
    pub alpha_b: S,
    pub r_a: S,
    pub r_b: S,
    /// Derived from the reward ordering at validation time.
    pub group: Group,
}

impl<S: Real> UserTypeParams<S> {
    pub fn alpha(&self, s: Content) -> S {
        match s {
            Content::A => self.alpha_a,
            Content::B => self.alpha_b,
        }
    }

    pub fn reward(&self, s: Content) -> S {
        match s {
            Content::A => self.r_a,
            Content::B => self.r_b,
        }
    }

    /// The high-reward content `s*` for this type.
    pub fn preferred(&self) -> Content {
        match self.group {
            Group::Type1 => Content::B,
            Group::Type2 => Content::A,
        }
    }

    /// The low-reward content `-s*`.
    pub fn non_preferred(&self) -> Content {
        self.preferred().other()
    }

    /// Engagement-rate ratio `alpha(-s*) / alpha(s*)` bounding the
    /// discouraging strategies at the non-preferred content.
    ///
    /// Below 1 for Type1 users; above 1 for Type2 users, where the
    /// admissible interval therefore covers all of `[0, 1]`.
    pub fn discourage_ratio(&self) -> S {
        self.alpha(self.non_preferred()) / self.alpha(self.preferred())
    }
}

/// Session entry rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entry<S> {
    /// The algorithm opens with its optimum at the prior.
    Algorithmic,
    /// The first content is drawn at random; `p1_a` is the probability of `A`.
    Random { p1_a: S },
}

/// A validated population: types, prior, discounts, entry rule, and the
/// optional signaling cost. Construct via [`validate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<S> {
    types: Vec<UserTypeParams<S>>,
    prior: Vec<S>,
    gamma_alg: S,
    gamma_user: S,
    entry: Entry<S>,
    cost: Option<S>,
}

impl<S: Real> Scenario<S> {
    pub fn types(&self) -> &[UserTypeParams<S>] {
        &self.types
    }

    pub fn n_types(&self) -> usize {
        self.types.len()
    }

    pub fn type_params(&self, index: usize) -> &UserTypeParams<S> {
        &self.types[index]
    }

    /// Index of a type id in file order.
    pub fn type_index(&self, id: &str) -> Option<usize> {
        self.types.iter().position(|t| t.id == id)
    }

    pub fn prior(&self) -> &[S] {
        &self.prior
    }

    pub fn gamma_alg(&self) -> S {
        self.gamma_alg
    }

    pub fn gamma_user(&self) -> S {
        self.gamma_user
    }

    pub fn entry(&self) -> Entry<S> {
        self.entry
    }

    pub fn cost(&self) -> Option<S> {
        self.cost
    }

    /// Whether the game includes costly signaling.
    pub fn signaling(&self) -> bool {
        self.cost.is_some()
    }

    /// Largest expected engagement length `1/alpha` over all types and
    /// contents; drives value-iteration truncation depth.
    pub fn max_mean_length(&self) -> S {
        let mut m = S::zero();
        for t in &self.types {
            for s in Content::BOTH {
                m = m.max(t.alpha(s).recip());
            }
        }
        m
    }

    /// Copy with a different user discount.
    pub fn with_gamma_user(&self, gamma_user: S) -> Result<Scenario<S>, ScenarioError> {
        let mut raw = self.to_raw();
        raw.gamma_user = gamma_user.as_f64();
        validate_scenario(&raw)
    }

    /// Copy with a different (or removed) signaling cost.
    pub fn with_cost(&self, cost: Option<S>) -> Result<Scenario<S>, ScenarioError> {
        let mut raw = self.to_raw();
        raw.cost = cost.map(Real::as_f64);
        validate_scenario(&raw)
    }

    /// Copy with a different entry rule.
    pub fn with_entry(&self, entry: Entry<S>) -> Result<Scenario<S>, ScenarioError> {
        let mut raw = self.to_raw();
        raw.entry = Some(match entry {
            Entry::Algorithmic => RawEntry { mode: "ae".into(), p1_a: None },
            Entry::Random { p1_a } => RawEntry { mode: "re".into(), p1_a: Some(p1_a.as_f64()) },
        });
        validate_scenario(&raw)
    }

    /// Serializable form, inverse of [`validate_scenario`].
    pub fn to_raw(&self) -> RawScenario {
        RawScenario {
            types: self
                .types
                .iter()
                .map(|t| RawUserType {
                    id: t.id.clone(),
                    alpha_a: t.alpha_a.as_f64(),
                    alpha_b: t.alpha_b.as_f64(),
                    r_a: t.r_a.as_f64(),
                    r_b: t.r_b.as_f64(),
                })
                .collect(),
            prior: self.prior.iter().map(|p| p.as_f64()).collect(),
            gamma_alg: self.gamma_alg.as_f64(),
            gamma_user: self.gamma_user.as_f64(),
            entry: Some(match self.entry {
                Entry::Algorithmic => RawEntry { mode: "ae".into(), p1_a: None },
                Entry::Random { p1_a } => {
                    RawEntry { mode: "re".into(), p1_a: Some(p1_a.as_f64()) }
                }
            }),
            cost: self.cost.map(Real::as_f64),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Scenario<S>, ScenarioError> {
        let raw: RawScenario =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse { detail: e.to_string() })?;
        validate_scenario(&raw)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("scenario serializes")
    }
}

/// Scenario file contents before validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawScenario {
    pub types: Vec<RawUserType>,
    pub prior: Vec<f64>,
    pub gamma_alg: f64,
    pub gamma_user: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<RawEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawUserType {
    pub id: String,
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub r_a: f64,
    pub r_b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawEntry {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1_a: Option<f64>,
}

/// Scenario validation failures.
#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario file did not parse: {detail}")]
    Parse { detail: String },
    #[error("scenario needs at least one user type")]
    EmptyTypes,
    #[error("duplicate type id `{0}`")]
    DuplicateTypeId(String),
    #[error("type `{type_id}`: alpha_{content} = {value} outside (0, 1]")]
    AlphaOutOfRange { type_id: String, content: char, value: f64 },
    #[error(
        "type `{type_id}`: alpha_a = {alpha_a} must be strictly below alpha_b = {alpha_b} \
         (item A is the more tempting one)"
    )]
    TemptationOrderViolated { type_id: String, alpha_a: f64, alpha_b: f64 },
    #[error("type `{type_id}`: r_{content} = {value} is negative")]
    NegativeReward { type_id: String, content: char, value: f64 },
    #[error("type `{type_id}`: r_a = r_b leaves the preferred content undefined")]
    AmbiguousRewards { type_id: String },
    #[error("prior has {prior} entries for {types} types")]
    PriorSizeMismatch { types: usize, prior: usize },
    #[error("prior is not a probability vector: {detail}")]
    NonProbabilityPrior { detail: String },
    #[error("{which} = {value} outside [0, 1)")]
    DiscountOutOfRange { which: &'static str, value: f64 },
    #[error("signaling cost {value} is negative")]
    NegativeCost { value: f64 },
    #[error("entry probability p1_a = {value} outside [0, 1]")]
    EntryProbabilityOutOfRange { value: f64 },
    #[error("unknown entry mode `{mode}` (expected \"ae\" or \"re\")")]
    UnknownEntryMode { mode: String },
}

/// Checks every scenario invariant and derives the type groups.
pub fn validate_scenario<S: Real>(raw: &RawScenario) -> Result<Scenario<S>, ScenarioError> {
    if raw.types.is_empty() {
        return Err(ScenarioError::EmptyTypes);
    }
    let mut types = Vec::with_capacity(raw.types.len());
    for t in &raw.types {
        if types.iter().any(|u: &UserTypeParams<S>| u.id == t.id) {
            return Err(ScenarioError::DuplicateTypeId(t.id.clone()));
        }
        for (content, alpha) in [('a', t.alpha_a), ('b', t.alpha_b)] {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(ScenarioError::AlphaOutOfRange {
                    type_id: t.id.clone(),
                    content,
                    value: alpha,
                });
            }
        }
        if t.alpha_a >= t.alpha_b {
            return Err(ScenarioError::TemptationOrderViolated {
                type_id: t.id.clone(),
                alpha_a: t.alpha_a,
                alpha_b: t.alpha_b,
            });
        }
        for (content, r) in [('a', t.r_a), ('b', t.r_b)] {
            if !(r >= 0.0) {
                return Err(ScenarioError::NegativeReward {
                    type_id: t.id.clone(),
                    content,
                    value: r,
                });
            }
        }
        let group = if t.r_b > t.r_a {
            Group::Type1
        } else if t.r_a > t.r_b {
            Group::Type2
        } else {
            return Err(ScenarioError::AmbiguousRewards { type_id: t.id.clone() });
        };
        types.push(UserTypeParams {
            id: t.id.clone(),
            alpha_a: S::val(t.alpha_a),
            alpha_b: S::val(t.alpha_b),
            r_a: S::val(t.r_a),
            r_b: S::val(t.r_b),
            group,
        });
    }

    if raw.prior.len() != types.len() {
        return Err(ScenarioError::PriorSizeMismatch {
            types: types.len(),
            prior: raw.prior.len(),
        });
    }
    if let Some(neg) = raw.prior.iter().find(|p| **p < 0.0) {
        return Err(ScenarioError::NonProbabilityPrior {
            detail: format!("entry {neg} is negative"),
        });
    }
    let sum: f64 = raw.prior.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(ScenarioError::NonProbabilityPrior {
            detail: format!("entries sum to {sum}"),
        });
    }
    let prior: Vec<S> = raw.prior.iter().map(|p| S::val(*p)).collect();

    for (which, gamma) in [("gamma_alg", raw.gamma_alg), ("gamma_user", raw.gamma_user)] {
        if !(0.0..1.0).contains(&gamma) {
            return Err(ScenarioError::DiscountOutOfRange { which, value: gamma });
        }
    }

    let entry = match &raw.entry {
        None => Entry::Algorithmic,
        Some(e) if e.mode == "ae" => Entry::Algorithmic,
        Some(e) if e.mode == "re" => {
            let p1_a = e.p1_a.unwrap_or(0.5);
            if !(0.0..=1.0).contains(&p1_a) {
                return Err(ScenarioError::EntryProbabilityOutOfRange { value: p1_a });
            }
            Entry::Random { p1_a: S::val(p1_a) }
        }
        Some(e) => return Err(ScenarioError::UnknownEntryMode { mode: e.mode.clone() }),
    };

    let cost = match raw.cost {
        None => None,
        Some(c) if c >= 0.0 => Some(S::val(c)),
        Some(c) => return Err(ScenarioError::NegativeCost { value: c }),
    };

    Ok(Scenario { types, prior, gamma_alg: S::val(raw.gamma_alg), gamma_user: S::val(raw.gamma_user), entry, cost })
}

/// Engagement and signal probabilities of one type.
///
/// `u_a`/`u_b` are zero in the game without signaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeStrategy<S> {
    pub f_a: S,
    pub f_b: S,
    pub u_a: S,
    pub u_b: S,
}

impl<S: Real> TypeStrategy<S> {
    /// Full engagement everywhere, no signals.
    pub fn all_ones() -> Self {
        TypeStrategy { f_a: S::one(), f_b: S::one(), u_a: S::zero(), u_b: S::zero() }
    }

    /// Engagement probabilities per content, no signals.
    pub fn pure(f_a: S, f_b: S) -> Self {
        TypeStrategy { f_a, f_b, u_a: S::zero(), u_b: S::zero() }
    }

    pub fn f(&self, s: Content) -> S {
        match s {
            Content::A => self.f_a,
            Content::B => self.f_b,
        }
    }

    pub fn u(&self, s: Content) -> S {
        match s {
            Content::A => self.u_a,
            Content::B => self.u_b,
        }
    }

    pub fn with_f(mut self, s: Content, v: S) -> Self {
        match s {
            Content::A => self.f_a = v,
            Content::B => self.f_b = v,
        }
        self
    }

    pub fn with_u(mut self, s: Content, v: S) -> Self {
        match s {
            Content::A => self.u_a = v,
            Content::B => self.u_b = v,
        }
        self
    }

    /// Componentwise comparison within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: S) -> bool {
        (self.f_a - other.f_a).abs() <= tol
            && (self.f_b - other.f_b).abs() <= tol
            && (self.u_a - other.u_a).abs() <= tol
            && (self.u_b - other.u_b).abs() <= tol
    }
}

/// Strategy profile file contents: type id to strategy.
pub type RawProfile = BTreeMap<String, RawTypeStrategy>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawTypeStrategy {
    pub f_a: f64,
    pub f_b: f64,
    #[serde(default)]
    pub u_a: f64,
    #[serde(default)]
    pub u_b: f64,
}

/// A validated strategy profile covering every type of one scenario, in the
/// scenario's type order.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile<S> {
    strategies: Vec<TypeStrategy<S>>,
    signaling: bool,
}

impl<S: Real> StrategyProfile<S> {
    pub fn strategies(&self) -> &[TypeStrategy<S>] {
        &self.strategies
    }

    pub fn strategy(&self, index: usize) -> &TypeStrategy<S> {
        &self.strategies[index]
    }

    pub fn n_types(&self) -> usize {
        self.strategies.len()
    }

    /// Whether this profile belongs to a game with costly signaling.
    pub fn signaling(&self) -> bool {
        self.signaling
    }

    /// Copy with one type's strategy replaced, revalidated.
    pub fn with_strategy(
        &self,
        scenario: &Scenario<S>,
        index: usize,
        strategy: TypeStrategy<S>,
    ) -> Result<StrategyProfile<S>, ProfileError> {
        let mut strategies = self.strategies.clone();
        strategies[index] = strategy;
        StrategyProfile::from_strategies(scenario, strategies)
    }

    /// Validates a vector of strategies given in scenario type order.
    pub fn from_strategies(
        scenario: &Scenario<S>,
        strategies: Vec<TypeStrategy<S>>,
    ) -> Result<StrategyProfile<S>, ProfileError> {
        if strategies.len() != scenario.n_types() {
            return Err(ProfileError::MissingType {
                type_id: scenario
                    .types()
                    .get(strategies.len())
                    .map(|t| t.id.clone())
                    .unwrap_or_else(|| format!("(got {} strategies)", strategies.len())),
            });
        }
        let candidate =
            StrategyProfile { strategies, signaling: scenario.signaling() };
        validate_profile(scenario, candidate)
    }

    /// Builds a profile without checking the restricted-strategy
    /// constraints. The closed forms stay well-defined on such inputs; the
    /// equilibrium characterizations do not.
    pub fn unchecked(strategies: Vec<TypeStrategy<S>>, signaling: bool) -> StrategyProfile<S> {
        StrategyProfile { strategies, signaling }
    }

    /// Parses and validates a profile file against a scenario.
    pub fn from_raw(
        scenario: &Scenario<S>,
        raw: &RawProfile,
    ) -> Result<StrategyProfile<S>, ProfileError> {
        for id in raw.keys() {
            if scenario.type_index(id).is_none() {
                return Err(ProfileError::UnknownType { type_id: id.clone() });
            }
        }
        let mut strategies = Vec::with_capacity(scenario.n_types());
        for t in scenario.types() {
            let r = raw
                .get(&t.id)
                .ok_or_else(|| ProfileError::MissingType { type_id: t.id.clone() })?;
            strategies.push(TypeStrategy {
                f_a: S::val(r.f_a),
                f_b: S::val(r.f_b),
                u_a: S::val(r.u_a),
                u_b: S::val(r.u_b),
            });
        }
        StrategyProfile::from_strategies(scenario, strategies)
    }

    pub fn to_raw(&self, scenario: &Scenario<S>) -> RawProfile {
        scenario
            .types()
            .iter()
            .zip(&self.strategies)
            .map(|(t, s)| {
                (
                    t.id.clone(),
                    RawTypeStrategy {
                        f_a: s.f_a.as_f64(),
                        f_b: s.f_b.as_f64(),
                        u_a: s.u_a.as_f64(),
                        u_b: s.u_b.as_f64(),
                    },
                )
            })
            .collect()
    }
}

/// Strategy profile validation failures.
#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("profile is missing type `{type_id}`")]
    MissingType { type_id: String },
    #[error("profile names type `{type_id}` not present in the scenario")]
    UnknownType { type_id: String },
    #[error("type `{type_id}`: {field} = {value} outside [0, 1]")]
    ProbabilityOutOfRange { type_id: String, field: &'static str, value: f64 },
    #[error("type `{type_id}`: engagement at the preferred content is {value}, must be 1")]
    PreferredContentNotFullyEngaged { type_id: String, value: f64 },
    #[error(
        "type `{type_id}`: f = {value} at the non-preferred content falls in [{bound}, 1), \
         which neither discourages the algorithm nor engages fully"
    )]
    OccasionalEngagementForbidden { type_id: String, value: f64, bound: f64 },
    #[error("type `{type_id}`: signal probability {value} at the preferred content, must be 0")]
    SignalOnPreferred { type_id: String, value: f64 },
    #[error(
        "type `{type_id}`: signaling (u = {u}) requires f < {bound} at that content, got f = {f}"
    )]
    SignalWithoutDiscouragement { type_id: String, u: f64, f: f64, bound: f64 },
    #[error("type `{type_id}`: signal probabilities must be 0 in a game without signaling")]
    SignalingNotEnabled { type_id: String },
}

/// Checks the restricted-strategy constraints for every type and returns the
/// profile unchanged if they all hold.
pub fn validate_profile<S: Real>(
    scenario: &Scenario<S>,
    profile: StrategyProfile<S>,
) -> Result<StrategyProfile<S>, ProfileError> {
    for (t, st) in scenario.types().iter().zip(profile.strategies.iter()) {
        let id = || t.id.clone();
        for (field, v) in
            [("f_a", st.f_a), ("f_b", st.f_b), ("u_a", st.u_a), ("u_b", st.u_b)]
        {
            if !(v >= S::zero() && v <= S::one()) {
                return Err(ProfileError::ProbabilityOutOfRange {
                    type_id: id(),
                    field,
                    value: v.as_f64(),
                });
            }
        }
        let pref = t.preferred();
        if st.f(pref) != S::one() {
            return Err(ProfileError::PreferredContentNotFullyEngaged {
                type_id: id(),
                value: st.f(pref).as_f64(),
            });
        }
        // f(-s*) must sit in [0, ratio) or exactly at the full-engagement
        // atom {1}; for Type2 the ratio exceeds 1 and nothing is excluded.
        let ratio = t.discourage_ratio();
        let f_np = st.f(t.non_preferred());
        if f_np != S::one() && f_np >= ratio {
            return Err(ProfileError::OccasionalEngagementForbidden {
                type_id: id(),
                value: f_np.as_f64(),
                bound: ratio.as_f64(),
            });
        }
        if !scenario.signaling() {
            if st.u_a != S::zero() || st.u_b != S::zero() {
                return Err(ProfileError::SignalingNotEnabled { type_id: id() });
            }
            continue;
        }
        if st.u(pref) != S::zero() {
            return Err(ProfileError::SignalOnPreferred {
                type_id: id(),
                value: st.u(pref).as_f64(),
            });
        }
        let u_np = st.u(t.non_preferred());
        if u_np > S::zero() && f_np >= ratio {
            return Err(ProfileError::SignalWithoutDiscouragement {
                type_id: id(),
                u: u_np.as_f64(),
                f: f_np.as_f64(),
                bound: ratio.as_f64(),
            });
        }
    }
    Ok(profile)
}
