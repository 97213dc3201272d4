//! Random scenario, profile, and belief generators for property tests and
//! the `verify` command.
//!
//! Profiles are drawn from the restricted strategy space: engagement at the
//! non-preferred content is uniform on `[0, ratio*(1 - 1e-9)]` or the
//! full-engagement atom `{1}`, with equal mass on the atom.

use rand::Rng;

use crate::belief::Belief;
use crate::domain::{
    validate_scenario, RawEntry, RawScenario, RawUserType, Scenario, StrategyProfile,
    TypeStrategy,
};
use crate::scalar::Real;

/// Knobs for [`random_scenario`].
#[derive(Debug, Clone)]
pub struct ScenarioDraw {
    pub n_types: (usize, usize),
    pub gamma_alg: (f64, f64),
    pub gamma_user: (f64, f64),
    pub signaling: bool,
    pub random_entry: bool,
}

impl Default for ScenarioDraw {
    fn default() -> Self {
        ScenarioDraw {
            n_types: (2, 4),
            gamma_alg: (0.5, 0.95),
            gamma_user: (0.05, 0.95),
            signaling: false,
            random_entry: false,
        }
    }
}

/// Draws a valid scenario. Engagement rates are kept away from 0 so the
/// expected lengths (and hence oracle horizons) stay moderate.
pub fn random_scenario<S: Real, R: Rng>(rng: &mut R, draw: &ScenarioDraw) -> Scenario<S> {
    let n = rng.random_range(draw.n_types.0..=draw.n_types.1);
    let mut types = Vec::with_capacity(n);
    for i in 0..n {
        let alpha_a: f64 = rng.random_range(0.1..0.85);
        let alpha_b = rng.random_range((alpha_a + 0.05).min(1.0)..=1.0);
        let r_hi = rng.random_range(0.5..3.0);
        let r_lo = rng.random_range(0.05..0.95 * r_hi);
        let type1 = rng.random_bool(0.5);
        let (r_a, r_b) = if type1 { (r_lo, r_hi) } else { (r_hi, r_lo) };
        types.push(RawUserType { id: format!("t{i}"), alpha_a, alpha_b, r_a, r_b });
    }
    let mut prior: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let total: f64 = prior.iter().sum();
    for p in &mut prior {
        *p /= total;
    }
    let raw = RawScenario {
        types,
        prior,
        gamma_alg: rng.random_range(draw.gamma_alg.0..=draw.gamma_alg.1),
        gamma_user: rng.random_range(draw.gamma_user.0..=draw.gamma_user.1),
        entry: if draw.random_entry {
            Some(RawEntry { mode: "re".into(), p1_a: Some(rng.random_range(0.0..=1.0)) })
        } else {
            None
        },
        cost: draw.signaling.then(|| rng.random_range(0.005..0.4)),
    };
    validate_scenario(&raw).expect("random scenario is valid by construction")
}

/// Draws a strategy for one type within the restricted strategy space.
pub fn random_strategy<S: Real, R: Rng>(
    rng: &mut R,
    params: &crate::domain::UserTypeParams<S>,
    signaling: bool,
) -> TypeStrategy<S> {
    let ratio = params.discourage_ratio().as_f64();
    let f_np = if rng.random_bool(0.5) {
        1.0
    } else {
        rng.random_range(0.0..=(ratio * (1.0 - 1e-9)).min(1.0))
    };
    let u_np = if signaling && f_np < ratio && rng.random_bool(0.5) {
        rng.random_range(0.0..=1.0)
    } else {
        0.0
    };
    let np = params.non_preferred();
    TypeStrategy::all_ones()
        .with_f(np, S::val(f_np))
        .with_u(np, S::val(u_np))
}

/// Draws a valid profile for every type of the scenario.
pub fn random_profile<S: Real, R: Rng>(
    rng: &mut R,
    scenario: &Scenario<S>,
) -> StrategyProfile<S> {
    let strategies = scenario
        .types()
        .iter()
        .map(|t| random_strategy(rng, t, scenario.signaling()))
        .collect();
    StrategyProfile::from_strategies(scenario, strategies)
        .expect("random profile is valid by construction")
}

/// Uniform draw from the open probability simplex.
pub fn random_belief<S: Real, R: Rng>(rng: &mut R, n: usize) -> Belief<S> {
    let weights: Vec<S> = (0..n)
        .map(|_| S::val(-rng.random::<f64>().max(1e-12).ln()))
        .collect();
    Belief::from_unnormalized(weights).expect("positive weights")
}
