//! Canonical demo scenario used in docs and tests.
//!
//! Two types under a 50/50 prior: `theta1` is a Type1 user (tempted by `A`,
//! rewarded by `B`), `theta2` a Type2 user with everything aligned on `A`.

use crate::domain::{validate_scenario, RawScenario, Scenario};
use crate::scalar::Real;

/// JSON form of the demo scenario.
pub const S1_JSON: &str = r#"{
  "types": [
    { "id": "theta1", "alpha_a": 0.2,  "alpha_b": 0.5, "r_a": 1.0, "r_b": 2.0 },
    { "id": "theta2", "alpha_a": 0.25, "alpha_b": 0.5, "r_a": 2.0, "r_b": 1.0 }
  ],
  "prior": [0.5, 0.5],
  "gamma_alg": 0.9,
  "gamma_user": 0.6,
  "entry": { "mode": "ae" }
}"#;

/// Parsed but unvalidated demo scenario.
pub fn s1_raw() -> RawScenario {
    serde_json::from_str(S1_JSON).expect("fixture parses")
}

/// The validated demo scenario (gamma_user = 0.6, algorithmic entry).
pub fn s1<S: Real>() -> Scenario<S> {
    validate_scenario(&s1_raw()).expect("fixture is valid")
}
