//! The engagement-maximizing algorithm's exact best response.
//!
//! Closed forms for the per-type expected discounted engagement `q(s)` of
//! committing to a content, the linear classifier weights `h = q(A) - q(B)`
//! acting on the posterior, the optimal Q-value, and the induced content
//! choice. With signaling, the engage-and-no-signal probability
//! `(1-u(s))f(s)` replaces `f(s)` inside the discount denominators.

use thiserror::Error;

use crate::belief::Belief;
use crate::domain::{Content, Scenario, StrategyProfile};
use crate::scalar::Real;

/// Classifier weights over types: recommend `A` iff `<belief, h> >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierWeights<S> {
    pub h: Vec<S>,
}

/// Per-type expected discounted engagement of starting at each content.
#[derive(Debug, Clone, PartialEq)]
pub struct QVector<S> {
    pub q_a: Vec<S>,
    pub q_b: Vec<S>,
}

impl<S: Real> QVector<S> {
    pub fn q(&self, s: Content) -> &[S] {
        match s {
            Content::A => &self.q_a,
            Content::B => &self.q_b,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("unknown type id `{0}`")]
    UnknownTypeId(String),
}

/// Effective continuation probability the algorithm discounts by: the user
/// engaged and did not signal.
fn keep_prob<S: Real>(f: S, u: S) -> S {
    (S::one() - u) * f
}

/// Classifier weight of a single type under its own strategy.
pub fn type_classifier_weight<S: Real>(
    gamma: S,
    params: &crate::domain::UserTypeParams<S>,
    st: &crate::domain::TypeStrategy<S>,
) -> S {
    let denom_a = S::one() - gamma * keep_prob(st.f_a, st.u_a);
    let denom_b = S::one() - gamma * keep_prob(st.f_b, st.u_b);
    (S::one() - gamma) * (st.f_a / params.alpha_a - st.f_b / params.alpha_b)
        / (denom_a * denom_b)
}

/// Classifier weight of each type; depends only on that type's own strategy.
pub fn classifier_weights<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
) -> ClassifierWeights<S> {
    let gamma = scenario.gamma_alg();
    let h = scenario
        .types()
        .iter()
        .zip(profile.strategies())
        .map(|(t, st)| type_classifier_weight(gamma, t, st))
        .collect();
    ClassifierWeights { h }
}

/// Per-type value of committing to `s`: the geometric return of staying on
/// `s` while the user keeps engaging, plus the switch-to-`-s` tail after the
/// first discouraging step.
pub fn q_vector<S: Real>(scenario: &Scenario<S>, profile: &StrategyProfile<S>) -> QVector<S> {
    let gamma = scenario.gamma_alg();
    let mut q_a = Vec::with_capacity(scenario.n_types());
    let mut q_b = Vec::with_capacity(scenario.n_types());
    for (t, st) in scenario.types().iter().zip(profile.strategies()) {
        for (s, out) in [(Content::A, &mut q_a), (Content::B, &mut q_b)] {
            let o = s.other();
            let keep = keep_prob(st.f(s), st.u(s));
            let stay = S::one() - gamma * keep;
            let first = st.f(s) / stay / t.alpha(s);
            let second = gamma * st.f(o) * (S::one() - keep)
                / (stay * (S::one() - gamma * st.f(o)))
                / t.alpha(o);
            out.push(first + second);
        }
    }
    QVector { q_a, q_b }
}

/// Exact optimal Q-value of the algorithm starting at `start`.
pub fn qa_value<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
    belief: &Belief<S>,
    start: Content,
) -> S {
    let gamma = scenario.gamma_alg();
    let q = q_vector(scenario, profile);
    let qs = q.q(start);
    let qo = q.q(start.other());
    let base = belief.dot(qs);
    let switch_gain: S = belief
        .weights()
        .iter()
        .zip(profile.strategies())
        .enumerate()
        .map(|(i, (w, st))| {
            *w * (qo[i] - qs[i]) * keep_prob(st.f(start), st.u(start))
        })
        .sum();
    base + gamma * switch_gain.max(S::zero())
}

/// Thresholded classifier: `A` on nonnegative scores, ties included.
pub fn best_content<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
    belief: &Belief<S>,
) -> Content {
    let h = classifier_weights(scenario, profile);
    if belief.dot(&h.h) >= S::zero() {
        Content::A
    } else {
        Content::B
    }
}

/// Classifier mass contributed by every type other than `type_id`, at the
/// scenario prior. Independent of that type's own strategy.
pub fn margin<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
    type_id: &str,
) -> Result<S, PolicyError> {
    let index = scenario
        .type_index(type_id)
        .ok_or_else(|| PolicyError::UnknownTypeId(type_id.to_string()))?;
    Ok(margin_at(scenario, profile, index))
}

/// Same as [`margin`] by type index.
pub fn margin_at<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
    index: usize,
) -> S {
    let h = classifier_weights(scenario, profile);
    h.h.iter()
        .zip(scenario.prior())
        .enumerate()
        .filter(|(i, _)| *i != index)
        .map(|(_, (hi, li))| *hi * *li)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TypeStrategy;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    fn eq_profile() -> (Scenario<f64>, StrategyProfile<f64>) {
        let s1 = fixtures::s1::<f64>();
        let p = StrategyProfile::from_strategies(
            &s1,
            vec![TypeStrategy::pure(0.0, 1.0), TypeStrategy::all_ones()],
        )
        .unwrap();
        (s1, p)
    }

    #[test]
    fn classifier_weight_examples() {
        let (s1, p) = eq_profile();
        let h = classifier_weights(&s1, &p).h;
        assert_abs_diff_eq!(h[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h[1], 20.0, epsilon = 1e-12);

        let all = StrategyProfile::from_strategies(
            &s1,
            vec![TypeStrategy::all_ones(), TypeStrategy::all_ones()],
        )
        .unwrap();
        let h = classifier_weights(&s1, &all).h;
        assert_abs_diff_eq!(h[0], 30.0, epsilon = 1e-12);

        let sig = s1.with_cost(Some(0.05)).unwrap();
        let p = StrategyProfile::from_strategies(
            &sig,
            vec![
                TypeStrategy { f_a: 0.3, f_b: 1.0, u_a: 1.0, u_b: 0.0 },
                TypeStrategy::all_ones(),
            ],
        )
        .unwrap();
        let h = classifier_weights(&sig, &p).h;
        assert_abs_diff_eq!(h[0], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn q_vector_examples() {
        let (s1, p) = eq_profile();
        let q = q_vector(&s1, &p);
        // theta2 fully engaged: plain geometric returns, no switch term.
        assert_abs_diff_eq!(q.q_a[1], 40.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.q_b[1], 20.0, epsilon = 1e-12);
        // theta1 declining A: the A-column is all switch tail.
        assert_abs_diff_eq!(q.q_a[0], 18.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.q_b[0], 20.0, epsilon = 1e-12);

        let h = classifier_weights(&s1, &p).h;
        for i in 0..2 {
            assert_abs_diff_eq!(q.q_a[i] - q.q_b[i], h[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_engagement_gives_zero_q() {
        let raw = crate::domain::RawScenario {
            types: vec![crate::domain::RawUserType {
                id: "t".into(),
                alpha_a: 0.2,
                alpha_b: 0.5,
                r_a: 1.0,
                r_b: 2.0,
            }],
            prior: vec![1.0],
            gamma_alg: 0.9,
            gamma_user: 0.6,
            entry: None,
            cost: None,
        };
        let scenario: Scenario<f64> = crate::domain::validate_scenario(&raw).unwrap();
        // f(a) = f(b) = 0 violates full engagement at the preferred content,
        // so build the strategy unchecked and evaluate the closed form.
        let profile = StrategyProfile::unchecked(vec![TypeStrategy::pure(0.0, 0.0)], false);
        let q = q_vector(&scenario, &profile);
        assert_eq!((q.q_a[0], q.q_b[0]), (0.0, 0.0));
    }

    #[test]
    fn qa_value_examples() {
        let (s1, p) = eq_profile();
        let only_theta1 = Belief::new(vec![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(qa_value(&s1, &p, &only_theta1, Content::B), 20.0, epsilon = 1e-12);

        // At the uniform belief the A-column is (18, 40) and the switch term
        // is negative, so the value is the plain average 29.
        let uniform = Belief::new(vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(qa_value(&s1, &p, &uniform, Content::A), 29.0, epsilon = 1e-12);
        // Starting at B the switch term kicks in: 20 + 0.9 * (0.5*(-2) + 0.5*20).
        assert_abs_diff_eq!(qa_value(&s1, &p, &uniform, Content::B), 28.1, epsilon = 1e-12);
    }

    #[test]
    fn best_content_examples() {
        let (s1, p) = eq_profile();
        let uniform = Belief::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(best_content(&s1, &p, &uniform), Content::A);
        let only_theta1 = Belief::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(best_content(&s1, &p, &only_theta1), Content::B);

        // Exact tie goes to A: weights (-2, 20) balance at lambda_1 = 10/11.
        let tie = Belief::new(vec![10.0 / 11.0, 1.0 / 11.0]).unwrap();
        let h = classifier_weights(&s1, &p).h;
        assert_abs_diff_eq!(tie.dot(&h), 0.0, epsilon = 1e-15);
        assert_eq!(best_content(&s1, &p, &tie), Content::A);
    }

    #[test]
    fn margin_examples() {
        let (s1, p) = eq_profile();
        assert_abs_diff_eq!(margin(&s1, &p, "theta1").unwrap(), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(margin(&s1, &p, "theta2").unwrap(), -1.0, epsilon = 1e-12);
        assert!(matches!(
            margin(&s1, &p, "theta9"),
            Err(PolicyError::UnknownTypeId(_))
        ));

        let raw = crate::domain::RawScenario {
            types: vec![crate::domain::RawUserType {
                id: "solo".into(),
                alpha_a: 0.2,
                alpha_b: 0.5,
                r_a: 1.0,
                r_b: 2.0,
            }],
            prior: vec![1.0],
            gamma_alg: 0.9,
            gamma_user: 0.6,
            entry: None,
            cost: None,
        };
        let solo: Scenario<f64> = crate::domain::validate_scenario(&raw).unwrap();
        let p = StrategyProfile::from_strategies(&solo, vec![TypeStrategy::pure(0.0, 1.0)])
            .unwrap();
        assert_eq!(margin(&solo, &p, "solo").unwrap(), 0.0);
    }
}
