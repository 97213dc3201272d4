//! Posterior over user types and its update from observed behavior.
//!
//! The posterior is the algorithm's sufficient statistic: one engagement
//! indicator (and, with signaling, one cost indicator) per step multiplies
//! each type's weight by the per-type likelihood of what was observed, then
//! renormalizes.

use thiserror::Error;

use crate::domain::{Content, StrategyProfile, TypeStrategy};
use crate::scalar::{prob_tol, Real};

/// Probability vector over the scenario's types, in type order.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief<S> {
    weights: Vec<S>,
}

#[derive(Debug, Error, PartialEq)]
pub enum BeliefError {
    #[error("belief weights are not a probability vector: {detail}")]
    NotAProbability { detail: String },
    #[error("observation has probability zero for every supported type")]
    ZeroProbabilityObservation,
    #[error("observation carries a signal indicator iff the game has signaling")]
    ObservationShapeMismatch,
}

impl<S: Real> Belief<S> {
    /// Validates entries (nonnegative, sum within 1e-12 of one) and then
    /// renormalizes exactly so drift never accumulates.
    pub fn new(weights: Vec<S>) -> Result<Belief<S>, BeliefError> {
        if weights.is_empty() {
            return Err(BeliefError::NotAProbability { detail: "empty".into() });
        }
        if let Some(w) = weights.iter().find(|w| **w < S::zero()) {
            return Err(BeliefError::NotAProbability {
                detail: format!("entry {w} is negative"),
            });
        }
        let sum: S = weights.iter().copied().sum();
        if (sum - S::one()).abs() > prob_tol::<S>() {
            return Err(BeliefError::NotAProbability {
                detail: format!("entries sum to {sum}"),
            });
        }
        Ok(Self::normalized(weights, sum))
    }

    /// Point mass on one type.
    pub fn point(n: usize, index: usize) -> Belief<S> {
        let mut weights = vec![S::zero(); n];
        weights[index] = S::one();
        Belief { weights }
    }

    /// Normalizes a vector of nonnegative unnormalized weights.
    pub fn from_unnormalized(weights: Vec<S>) -> Result<Belief<S>, BeliefError> {
        let sum: S = weights.iter().copied().sum();
        if !(sum > S::zero()) {
            return Err(BeliefError::NotAProbability {
                detail: format!("unnormalized weights sum to {sum}"),
            });
        }
        Ok(Self::normalized(weights, sum))
    }

    fn normalized(mut weights: Vec<S>, sum: S) -> Belief<S> {
        for w in &mut weights {
            *w = *w / sum;
        }
        Belief { weights }
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn n_types(&self) -> usize {
        self.weights.len()
    }

    /// Inner product with a per-type vector.
    pub fn dot(&self, v: &[S]) -> S {
        self.weights.iter().zip(v).map(|(w, x)| *w * *x).sum()
    }
}

/// One observed interaction step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub content: Content,
    pub engaged: bool,
    /// Present iff the game includes costly signaling.
    pub signaled: Option<bool>,
}

impl Observation {
    pub fn plain(content: Content, engaged: bool) -> Observation {
        Observation { content, engaged, signaled: None }
    }

    pub fn with_signal(content: Content, engaged: bool, signaled: bool) -> Observation {
        Observation { content, engaged, signaled: Some(signaled) }
    }
}

/// Likelihood of `obs` under one type's strategy.
pub fn likelihood<S: Real>(strategy: &TypeStrategy<S>, obs: &Observation) -> S {
    let f = strategy.f(obs.content);
    let mut lik = if obs.engaged { f } else { S::one() - f };
    if let Some(signaled) = obs.signaled {
        let u = strategy.u(obs.content);
        lik = lik * if signaled { u } else { S::one() - u };
    }
    lik
}

/// All observations possible at a content (two without signaling, four with).
pub fn observation_space(content: Content, signaling: bool) -> Vec<Observation> {
    if signaling {
        vec![
            Observation::with_signal(content, true, true),
            Observation::with_signal(content, true, false),
            Observation::with_signal(content, false, true),
            Observation::with_signal(content, false, false),
        ]
    } else {
        vec![Observation::plain(content, true), Observation::plain(content, false)]
    }
}

fn check_shape<S: Real>(
    profile: &StrategyProfile<S>,
    obs: &Observation,
) -> Result<(), BeliefError> {
    if obs.signaled.is_some() != profile.signaling() {
        return Err(BeliefError::ObservationShapeMismatch);
    }
    Ok(())
}

/// Normalized elementwise product of the belief with the per-type
/// likelihood of `obs`.
pub fn update<S: Real>(
    belief: &Belief<S>,
    profile: &StrategyProfile<S>,
    obs: &Observation,
) -> Result<Belief<S>, BeliefError> {
    check_shape(profile, obs)?;
    let weights: Vec<S> = belief
        .weights()
        .iter()
        .zip(profile.strategies())
        .map(|(w, st)| *w * likelihood(st, obs))
        .collect();
    Belief::from_unnormalized(weights).map_err(|_| BeliefError::ZeroProbabilityObservation)
}

/// Marginal probability of `obs` under (belief, profile); in [0, 1].
pub fn observation_probability<S: Real>(
    belief: &Belief<S>,
    profile: &StrategyProfile<S>,
    obs: &Observation,
) -> Result<S, BeliefError> {
    check_shape(profile, obs)?;
    Ok(belief
        .weights()
        .iter()
        .zip(profile.strategies())
        .map(|(w, st)| *w * likelihood(st, obs))
        .sum())
}
