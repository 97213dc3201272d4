//! Independent brute-force verifiers for the closed forms.
//!
//! The core tool is a finite-horizon backward recursion over the
//! observation tree of the algorithm's planning problem. A node's posterior
//! is the prior times a product of per-step likelihoods, so it only depends
//! on how often each (content, outcome) pair was observed. Beliefs are
//! therefore recomputed canonically from observation counts through shared
//! power tables: paths with equal counts yield bit-identical belief
//! vectors, and a memo keyed by (depth, belief fingerprint) collapses the
//! exponential tree to its distinct states. Correctness never depends on
//! the memo; it only prunes revisits.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use thiserror::Error;

use crate::algo_policy::{classifier_weights, margin_at, qa_value, type_classifier_weight};
use crate::belief::Belief;
use crate::domain::{Content, Entry, Group, Scenario, StrategyProfile, TypeStrategy};
use crate::equilibrium::{user_value_of, EquilibriumResult};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("history enumeration supports horizons up to {max}, got {horizon}")]
    HorizonTooLarge { horizon: usize, max: usize },
    #[error(
        "type `{type_id}` improves by {improvement} deviating to (f = {witness_f}, \
         u = {witness_u}): value {deviation_value} vs equilibrium {equilibrium_value}"
    )]
    DeviationFound {
        type_id: String,
        witness_f: f64,
        witness_u: f64,
        improvement: f64,
        equilibrium_value: f64,
        deviation_value: f64,
    },
    #[error("deviation check does not cover this entry rule: {detail}")]
    UnsupportedEntry { detail: String },
}

/// Horizon, tolerances, and grid resolution for the brute-force checks.
#[derive(Debug, Clone)]
pub struct OracleConfig<S> {
    /// Depth of the finite-horizon recursions.
    pub horizon: usize,
    /// Error budget; the horizon is normally derived from it.
    pub tolerance: S,
    /// Grid points per strategy dimension in the deviation sweep.
    pub deviation_grid: usize,
    /// Relative offset keeping grid points off the excluded interval end;
    /// the full-engagement atom {1} is always swept explicitly.
    pub epsilon_atom: S,
}

impl<S: Real> Default for OracleConfig<S> {
    fn default() -> Self {
        OracleConfig {
            horizon: 200,
            tolerance: S::val(1e-6),
            deviation_grid: 201,
            epsilon_atom: S::val(1e-9),
        }
    }
}

impl<S: Real> OracleConfig<S> {
    /// Picks the smallest horizon whose truncation tail
    /// `gamma^T * max(1/alpha) / (1 - gamma)` is below `tolerance`, capped
    /// at `cap`. When the cap binds, the configured tolerance is raised to
    /// the actual tail so the invariant "tail < tolerance" stays true.
    pub fn for_qa<'a>(scenario: &Scenario<S>, tolerance: S, cap: usize) -> OracleConfig<S> {
        let gamma = scenario.gamma_alg().as_f64();
        let max_len = scenario.max_mean_length().as_f64();
        let horizon = horizon_for_tolerance(gamma, max_len, tolerance.as_f64()).min(cap);
        let actual = qa_truncation_bound(scenario, horizon);
        OracleConfig {
            horizon,
            tolerance: tolerance.max(actual),
            ..OracleConfig::default()
        }
    }
}

/// Smallest `T` with `gamma^T * max_len / (1 - gamma) < tol`.
pub fn horizon_for_tolerance(gamma: f64, max_len: f64, tol: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    let target = tol * (1.0 - gamma) / max_len;
    if target >= 1.0 {
        return 1;
    }
    (target.ln() / gamma.ln()).ceil().max(1.0) as usize
}

/// Tail of the discounted engagement sum beyond `horizon`.
pub fn qa_truncation_bound<S: Real>(scenario: &Scenario<S>, horizon: usize) -> S {
    let gamma = scenario.gamma_alg();
    gamma.powi(horizon as i32) * scenario.max_mean_length() / (S::one() - gamma)
}

/// Tail bound for the user-value recursion (rewards and signal costs).
pub fn user_truncation_bound<S: Real>(scenario: &Scenario<S>, horizon: usize) -> S {
    let gamma = scenario.gamma_user();
    let mut max_r = scenario.cost().unwrap_or_else(S::zero);
    for t in scenario.types() {
        max_r = max_r.max(t.r_a).max(t.r_b);
    }
    gamma.powi(horizon as i32) * max_r / (S::one() - gamma)
}

// Likelihood factors per content: engage, decline, signal, no-signal.
const FACTORS: usize = 4;
const DIMS: usize = 2 * FACTORS;

type Counts = [u16; DIMS];

fn dim(content: Content, factor: usize) -> usize {
    content.index() * FACTORS + factor
}

fn fingerprint<S: Real>(belief: &[S]) -> u128 {
    let mut h1: u64 = 0xcbf2_9ce4_8422_2325;
    let mut h2: u64 = 0x9e37_79b9_7f4a_7c15;
    for w in belief {
        let b = w.pattern();
        h1 = (h1 ^ b).wrapping_mul(0x0000_0100_0000_01b3);
        h2 = (h2 ^ b.rotate_left(32)).wrapping_mul(0xff51_afd7_ed55_8ccd);
        h2 ^= h2 >> 29;
    }
    (u128::from(h1) << 64) | u128::from(h2)
}

/// Keys are already well-mixed fingerprints; a multiply-fold beats a
/// general-purpose hasher on the memo's hot path.
#[derive(Default)]
struct FoldHasher(u64);

impl Hasher for FoldHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(buf));
        }
    }
    fn write_u64(&mut self, v: u64) {
        self.0 = (self.0 ^ v).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        self.0 ^= self.0 >> 32;
    }
    fn write_u128(&mut self, v: u128) {
        self.write_u64(v as u64);
        self.write_u64((v >> 64) as u64);
    }
    fn write_u32(&mut self, v: u32) {
        self.write_u64(u64::from(v));
    }
    fn write_u8(&mut self, v: u8) {
        self.write_u64(u64::from(v));
    }
}

type Memo<K, S> = HashMap<K, S, BuildHasherDefault<FoldHasher>>;

/// Shared state of the finite-horizon recursions: per-type likelihood
/// power tables over observation counts, and the canonical posterior.
struct TreeContext<'a, S> {
    scenario: &'a Scenario<S>,
    profile: &'a StrategyProfile<S>,
    root: Vec<S>,
    /// pow[dim * n + type][exponent]
    pow: Vec<Vec<S>>,
    scratch: Vec<S>,
}

impl<'a, S: Real> TreeContext<'a, S> {
    fn new(
        scenario: &'a Scenario<S>,
        profile: &'a StrategyProfile<S>,
        root: &Belief<S>,
        horizon: usize,
    ) -> Self {
        let n = scenario.n_types();
        let mut pow = Vec::with_capacity(DIMS * n);
        for content in Content::BOTH {
            for factor in 0..FACTORS {
                for st in profile.strategies() {
                    let base = match factor {
                        0 => st.f(content),
                        1 => S::one() - st.f(content),
                        2 => st.u(content),
                        _ => S::one() - st.u(content),
                    };
                    let mut table = Vec::with_capacity(horizon + 2);
                    let mut acc = S::one();
                    table.push(acc);
                    for _ in 0..=horizon {
                        acc = acc * base;
                        table.push(acc);
                    }
                    pow.push(table);
                }
            }
        }
        // Reorder so that pow[d * n + theta] addresses (dim d, type theta).
        // The loops above already produce exactly that layout.
        TreeContext { scenario, profile, root: root.weights().to_vec(), pow, scratch: vec![S::zero(); n] }
    }

    /// Canonical posterior after the observation counts, written into the
    /// scratch buffer; false when the history has probability zero. The
    /// scratch is only valid until the next call.
    fn belief_into_scratch(&mut self, counts: &Counts) -> bool {
        let n = self.root.len();
        let mut total = S::zero();
        self.scratch.copy_from_slice(&self.root);
        for (d, count) in counts.iter().enumerate() {
            if *count > 0 {
                let table = &self.pow[d * n..(d + 1) * n];
                for (w, t) in self.scratch.iter_mut().zip(table) {
                    *w = *w * t[*count as usize];
                }
            }
        }
        for w in &self.scratch {
            total += *w;
        }
        if !(total > S::zero()) {
            return false;
        }
        for w in &mut self.scratch {
            *w = *w / total;
        }
        true
    }

    fn observations(&self) -> Vec<(bool, Option<bool>)> {
        if self.profile.signaling() {
            vec![
                (true, Some(true)),
                (true, Some(false)),
                (false, Some(true)),
                (false, Some(false)),
            ]
        } else {
            vec![(true, None), (false, None)]
        }
    }

    fn lik(&self, theta: usize, content: Content, engaged: bool, signaled: Option<bool>) -> S {
        let st = &self.profile.strategies()[theta];
        let f = st.f(content);
        let mut lik = if engaged { f } else { S::one() - f };
        if let Some(signal) = signaled {
            let u = st.u(content);
            lik = lik * if signal { u } else { S::one() - u };
        }
        lik
    }

    fn bump(counts: &Counts, content: Content, engaged: bool, signaled: Option<bool>) -> Counts {
        let mut child = *counts;
        child[dim(content, if engaged { 0 } else { 1 })] += 1;
        if let Some(signal) = signaled {
            child[dim(content, if signal { 2 } else { 3 })] += 1;
        }
        child
    }
}

/// Memoized backward recursion for the algorithm's optimal value.
struct QaEvaluator<'a, S> {
    ctx: TreeContext<'a, S>,
    memo: Memo<(u32, u128), S>,
}

impl<'a, S: Real> QaEvaluator<'a, S> {
    fn new(
        scenario: &'a Scenario<S>,
        profile: &'a StrategyProfile<S>,
        root: &Belief<S>,
        horizon: usize,
    ) -> Self {
        QaEvaluator {
            ctx: TreeContext::new(scenario, profile, root, horizon),
            memo: Memo::default(),
        }
    }

    fn immediate(&self, belief: &[S], content: Content) -> S {
        belief
            .iter()
            .enumerate()
            .map(|(theta, b)| {
                let t = self.ctx.scenario.type_params(theta);
                let st = &self.ctx.profile.strategies()[theta];
                *b * st.f(content) / t.alpha(content)
            })
            .sum()
    }

    fn q(&mut self, counts: &Counts, belief: &[S], content: Content, depth: u32) -> S {
        if depth == 0 {
            return S::zero();
        }
        let imm = self.immediate(belief, content);
        let mut acc = S::zero();
        for (engaged, signaled) in self.ctx.observations() {
            let p: S = belief
                .iter()
                .enumerate()
                .map(|(theta, b)| *b * self.ctx.lik(theta, content, engaged, signaled))
                .sum();
            if p > S::zero() {
                let child = TreeContext::<S>::bump(counts, content, engaged, signaled);
                acc += p * self.value(&child, depth - 1);
            }
        }
        imm + self.ctx.scenario.gamma_alg() * acc
    }

    fn value(&mut self, counts: &Counts, depth: u32) -> S {
        if depth == 0 {
            return S::zero();
        }
        if !self.ctx.belief_into_scratch(counts) {
            return S::zero();
        }
        let key = (depth, fingerprint(&self.ctx.scratch));
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        let belief = self.ctx.scratch.clone();
        let v_a = self.q(counts, &belief, Content::A, depth);
        let v_b = self.q(counts, &belief, Content::B, depth);
        let v = v_a.max(v_b);
        self.memo.insert(key, v);
        v
    }
}

/// Exact finite-horizon backward recursion of the algorithm's planning
/// problem, truncated at `cfg.horizon` steps.
pub fn value_iterate_qa<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
    belief: &Belief<S>,
    start: Content,
    cfg: &OracleConfig<S>,
) -> S {
    value_iterate_qa_both(scenario, profile, belief, cfg)[start.index()]
}

/// Both starting contents in one pass, sharing the memo.
pub fn value_iterate_qa_both<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
    belief: &Belief<S>,
    cfg: &OracleConfig<S>,
) -> [S; 2] {
    let mut ev = QaEvaluator::new(scenario, profile, belief, cfg.horizon);
    let counts = [0u16; DIMS];
    let root = belief.weights().to_vec();
    let depth = cfg.horizon as u32;
    [
        ev.q(&counts, &root, Content::A, depth),
        ev.q(&counts, &root, Content::B, depth),
    ]
}

const ENUMERATION_MAX_HORIZON: usize = 4;

/// Value by exhaustive expansion over raw observation histories, carrying
/// unnormalized per-type weights and never collapsing to a posterior. Must
/// agree exactly with [`value_iterate_qa`] at the same horizon.
pub fn enumerate_qa_over_histories<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
    start: Content,
    horizon: usize,
) -> Result<S, OracleError> {
    if horizon > ENUMERATION_MAX_HORIZON {
        return Err(OracleError::HorizonTooLarge {
            horizon,
            max: ENUMERATION_MAX_HORIZON,
        });
    }
    fn go<S: Real>(
        scenario: &Scenario<S>,
        profile: &StrategyProfile<S>,
        weights: &[S],
        content: Content,
        depth: usize,
    ) -> S {
        if depth == 0 {
            return S::zero();
        }
        let imm: S = weights
            .iter()
            .enumerate()
            .map(|(theta, w)| {
                let t = scenario.type_params(theta);
                let st = &profile.strategies()[theta];
                *w * st.f(content) / t.alpha(content)
            })
            .sum();
        let obs: Vec<(bool, Option<bool>)> = if profile.signaling() {
            vec![(true, Some(true)), (true, Some(false)), (false, Some(true)), (false, Some(false))]
        } else {
            vec![(true, None), (false, None)]
        };
        let mut acc = S::zero();
        for (engaged, signaled) in obs {
            let child: Vec<S> = weights
                .iter()
                .zip(profile.strategies())
                .map(|(w, st)| {
                    let f = st.f(content);
                    let mut lik = if engaged { f } else { S::one() - f };
                    if let Some(signal) = signaled {
                        let u = st.u(content);
                        lik = lik * if signal { u } else { S::one() - u };
                    }
                    *w * lik
                })
                .collect();
            let mass: S = child.iter().copied().sum();
            if mass > S::zero() {
                let best = Content::BOTH
                    .into_iter()
                    .map(|s| go(scenario, profile, &child, s, depth - 1))
                    .fold(S::neg_infinity(), S::max);
                acc += best;
            }
        }
        imm + scenario.gamma_alg() * acc
    }
    Ok(go(scenario, profile, scenario.prior(), start, horizon))
}

/// Finite-horizon recursion of the user's discounted value along the
/// algorithm's best-response path: the user's own engagement and signal
/// coins drive the branch probabilities, the full profile drives the
/// posterior, and the classifier picks each next content.
///
/// The root belief must put positive mass on `type_index`.
pub fn value_iterate_user<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
    type_index: usize,
    belief: &Belief<S>,
    start: Content,
    horizon: usize,
) -> S {
    assert!(
        belief.weights()[type_index] > S::zero(),
        "the simulated type must have positive mass under the root belief"
    );
    struct UserEvaluator<'a, S> {
        ctx: TreeContext<'a, S>,
        h: Vec<S>,
        type_index: usize,
        cost: S,
        memo: Memo<(u32, u128, u8), S>,
    }
    impl<'a, S: Real> UserEvaluator<'a, S> {
        fn value(&mut self, counts: &Counts, content: Content, depth: u32) -> S {
            if depth == 0 {
                return S::zero();
            }
            if !self.ctx.belief_into_scratch(counts) {
                return S::zero();
            }
            let key = (depth, fingerprint(&self.ctx.scratch), content.index() as u8);
            if let Some(v) = self.memo.get(&key) {
                return *v;
            }
            let t = self.ctx.scenario.type_params(self.type_index);
            let st = &self.ctx.profile.strategies()[self.type_index];
            let f = st.f(content);
            let u = st.u(content);
            let mut v = f * t.reward(content) - u * self.cost;
            let mut tail = S::zero();
            for (engaged, signaled) in self.ctx.observations() {
                let mut p = if engaged { f } else { S::one() - f };
                if let Some(signal) = signaled {
                    p = p * if signal { u } else { S::one() - u };
                }
                if p > S::zero() {
                    let child = TreeContext::<S>::bump(counts, content, engaged, signaled);
                    // The true type produces this observation with positive
                    // probability, so the posterior stays alive.
                    assert!(self.ctx.belief_into_scratch(&child));
                    let score: S = self
                        .ctx
                        .scratch
                        .iter()
                        .zip(&self.h)
                        .map(|(b, h)| *b * *h)
                        .sum();
                    let next = if score >= S::zero() { Content::A } else { Content::B };
                    tail += p * self.value(&child, next, depth - 1);
                }
            }
            v = v + self.ctx.scenario.gamma_user() * tail;
            self.memo.insert(key, v);
            v
        }
    }
    let mut ev = UserEvaluator {
        h: classifier_weights(scenario, profile).h,
        ctx: TreeContext::new(scenario, profile, belief, horizon),
        type_index,
        cost: scenario.cost().unwrap_or_else(S::zero),
        memo: Memo::default(),
    };
    let counts = [0u16; DIMS];
    ev.value(&counts, start, horizon as u32)
}

/// Outcome of the no-deviation sweep for one type.
#[derive(Debug, Clone)]
pub struct DeviationScan<S> {
    pub type_id: String,
    pub equilibrium_value: S,
    pub best_improvement: S,
    pub witness: Option<TypeStrategy<S>>,
}

/// Aggregate no-deviation report; produced only when every type passes.
#[derive(Debug, Clone)]
pub struct DeviationReport<S> {
    pub scans: Vec<DeviationScan<S>>,
    pub max_improvement: S,
}

/// Value of one type committing to `strategy` while all other types hold
/// the equilibrium profile, under the scenario's entry rule.
fn committed_value<S: Real>(
    scenario: &Scenario<S>,
    type_index: usize,
    margin: S,
    strategy: &TypeStrategy<S>,
) -> Result<S, OracleError> {
    let t = scenario.type_params(type_index);
    let lambda = scenario.prior()[type_index];
    let uv = user_value_of(scenario, t, strategy);
    match scenario.entry() {
        Entry::Algorithmic => {
            let own = type_classifier_weight(scenario.gamma_alg(), t, strategy);
            let entry = if own * lambda + margin >= S::zero() { Content::A } else { Content::B };
            Ok(if entry == t.preferred() { uv.preferred } else { uv.other })
        }
        Entry::Random { p1_a } => {
            // Covered regime only: every type is Type1 and the margin pins
            // the classifier to A no matter what this type plays ("at A" is
            // then the q_other recursion; entry at B pays once and falls
            // back to the A path).
            let bound = lambda / t.alpha_b;
            if t.group != Group::Type1 || margin <= bound {
                return Err(OracleError::UnsupportedEntry {
                    detail: format!(
                        "random entry needs Type1 with margin > lambda/alpha_b for `{}`",
                        t.id
                    ),
                });
            }
            let r_pref = t.reward(t.preferred());
            Ok(p1_a * uv.other
                + (S::one() - p1_a) * (r_pref + scenario.gamma_user() * uv.other))
        }
    }
}

/// Sweeps the admissible strategy grid for every type and checks that no
/// grid point beats the equilibrium value by more than `cfg.tolerance`.
pub fn verify_no_deviation<S: Real>(
    scenario: &Scenario<S>,
    result: &EquilibriumResult<S>,
    cfg: &OracleConfig<S>,
) -> Result<DeviationReport<S>, OracleError> {
    let mut scans = Vec::with_capacity(scenario.n_types());
    let mut overall = S::neg_infinity();
    for (index, t) in scenario.types().iter().enumerate() {
        let margin = margin_at(scenario, &result.profile, index);
        let eq_value = committed_value(scenario, index, margin, result.profile.strategy(index))?;

        let np = t.non_preferred();
        let ratio = t.discourage_ratio();
        let grid_hi = (ratio * (S::one() - cfg.epsilon_atom)).min(S::one());
        let n = cfg.deviation_grid.max(2);
        let mut f_points: Vec<S> = (0..n)
            .map(|k| grid_hi * S::from_usize(k).unwrap() / S::from_usize(n - 1).unwrap())
            .collect();
        if !f_points.contains(&S::one()) {
            f_points.push(S::one()); // the atom: the admissible set is disconnected
        }
        let u_points: Vec<S> = if scenario.signaling() {
            (0..n)
                .map(|k| S::from_usize(k).unwrap() / S::from_usize(n - 1).unwrap())
                .collect()
        } else {
            vec![S::zero()]
        };

        let mut best_improvement = S::neg_infinity();
        let mut witness = None;
        for &f in &f_points {
            for &u in &u_points {
                if u > S::zero() && f >= ratio {
                    continue;
                }
                let candidate = TypeStrategy::all_ones().with_f(np, f).with_u(np, u);
                let value = committed_value(scenario, index, margin, &candidate)?;
                let improvement = value - eq_value;
                if improvement > best_improvement {
                    best_improvement = improvement;
                    witness = Some(candidate);
                }
            }
        }
        if best_improvement > cfg.tolerance {
            let w = witness.expect("an improving witness exists");
            return Err(OracleError::DeviationFound {
                type_id: t.id.clone(),
                witness_f: w.f(np).as_f64(),
                witness_u: w.u(np).as_f64(),
                improvement: best_improvement.as_f64(),
                equilibrium_value: eq_value.as_f64(),
                deviation_value: (eq_value + best_improvement).as_f64(),
            });
        }
        overall = overall.max(best_improvement);
        scans.push(DeviationScan {
            type_id: t.id.clone(),
            equilibrium_value: eq_value,
            best_improvement,
            witness,
        });
    }
    Ok(DeviationReport { scans, max_improvement: overall })
}

/// One row of the verification table.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub max_error: f64,
    pub detail: String,
}

/// Knobs for [`run_verification`].
#[derive(Debug, Clone)]
pub struct VerificationConfig {
    pub draws: usize,
    pub grid: usize,
    /// Horizon cap for the deep recursions.
    pub horizon_cap: usize,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig { draws: 25, grid: 201, horizon_cap: 260 }
    }
}

/// The full oracle suite against one scenario: closed-form agreement,
/// posterior sufficiency, policy agreement, user-value agreement, and the
/// equilibrium no-deviation sweep.
pub fn run_verification<S: Real>(
    scenario: &Scenario<S>,
    seed: u64,
    cfg: &VerificationConfig,
) -> Vec<CheckOutcome> {
    use crate::sampling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    let mut outcomes = Vec::new();
    let cap = if scenario.signaling() { cfg.horizon_cap.min(110) } else { cfg.horizon_cap };

    // 1. Closed-form optimal value vs truncated value iteration.
    {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let qa_cfg = OracleConfig::for_qa(scenario, S::val(1e-6), cap);
        let bound = S::val(1e-6) + qa_truncation_bound(scenario, qa_cfg.horizon);
        let mut max_err = 0.0f64;
        let mut cases = 0;
        for _ in 0..cfg.draws {
            let profile = sampling::random_profile(&mut rng, scenario);
            let belief = sampling::random_belief(&mut rng, scenario.n_types());
            let vi = value_iterate_qa_both(scenario, &profile, &belief, &qa_cfg);
            for start in Content::BOTH {
                let closed = qa_value(scenario, &profile, &belief, start);
                max_err = max_err.max((closed - vi[start.index()]).abs().as_f64());
                cases += 1;
            }
        }
        outcomes.push(CheckOutcome {
            name: "qa_closed_form_vs_value_iteration",
            passed: max_err < bound.as_f64(),
            cases,
            max_error: max_err,
            detail: format!("bound {:.3e} at horizon {}", bound.as_f64(), qa_cfg.horizon),
        });
    }

    // 2. Posterior sufficiency: history enumeration without belief
    //    collapse agrees exactly at short horizons.
    {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5f5f);
        let mut max_err = 0.0f64;
        let mut cases = 0;
        let mut passed = true;
        for _ in 0..cfg.draws.min(20) {
            let profile = sampling::random_profile(&mut rng, scenario);
            let prior = Belief::new(scenario.prior().to_vec()).expect("prior is a belief");
            for horizon in 1..=ENUMERATION_MAX_HORIZON {
                let small = OracleConfig { horizon, ..OracleConfig::default() };
                for start in Content::BOTH {
                    let vi = value_iterate_qa(scenario, &profile, &prior, start, &small);
                    let en = enumerate_qa_over_histories(scenario, &profile, start, horizon)
                        .expect("horizon within enumeration bound");
                    let err = (vi - en).abs().as_f64();
                    max_err = max_err.max(err);
                    passed &= err <= 1e-12 * vi.as_f64().abs().max(1.0);
                    cases += 1;
                }
            }
        }
        outcomes.push(CheckOutcome {
            name: "posterior_sufficiency_horizons_1_to_4",
            passed,
            cases,
            max_error: max_err,
            detail: "history enumeration vs belief recursion".into(),
        });
    }

    // 3. Classifier vs value-iteration argmax, away from ties.
    {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xa1a1);
        let gamma = scenario.gamma_alg().as_f64();
        let tol = 0.5e-5 * (1.0 - gamma);
        let qa_cfg = OracleConfig::for_qa(scenario, S::val(tol), cap.max(300));
        let trunc = qa_truncation_bound(scenario, qa_cfg.horizon);
        let mut mismatches = 0usize;
        let mut cases = 0usize;
        let mut skipped = 0usize;
        for _ in 0..cfg.draws.min(10) {
            let profile = sampling::random_profile(&mut rng, scenario);
            let h = classifier_weights(scenario, &profile);
            let beliefs: Vec<Belief<S>> = if scenario.n_types() == 2 {
                (0..=100)
                    .map(|k| {
                        let l = S::from_usize(k).unwrap() / S::val(100.0);
                        Belief::new(vec![l, S::one() - l]).expect("simplex point")
                    })
                    .collect()
            } else {
                (0..cfg.draws).map(|_| sampling::random_belief(&mut rng, scenario.n_types())).collect()
            };
            for belief in beliefs {
                if belief.dot(&h.h).abs() <= S::val(1e-5) {
                    continue;
                }
                let vi = value_iterate_qa_both(scenario, &profile, &belief, &qa_cfg);
                if (vi[0] - vi[1]).abs() <= S::val(2.0) * trunc {
                    skipped += 1;
                    continue; // gap unresolvable at this horizon
                }
                let vi_choice = if vi[0] >= vi[1] { Content::A } else { Content::B };
                let cl_choice =
                    crate::algo_policy::best_content(scenario, &profile, &belief);
                if vi_choice != cl_choice {
                    mismatches += 1;
                }
                cases += 1;
            }
        }
        outcomes.push(CheckOutcome {
            name: "classifier_vs_value_iteration_argmax",
            passed: mismatches == 0,
            cases,
            max_error: mismatches as f64,
            detail: format!("{skipped} near-ties skipped, horizon {}", qa_cfg.horizon),
        });
    }

    // 4. User closed-form values vs the user-side recursion, on path.
    {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xc3c3);
        let gamma_user = scenario.gamma_user().as_f64();
        let mut max_r = scenario.cost().unwrap_or_else(S::zero).as_f64();
        for t in scenario.types() {
            max_r = max_r.max(t.r_a.as_f64()).max(t.r_b.as_f64());
        }
        let horizon =
            horizon_for_tolerance(gamma_user, max_r, 1e-6 * (1.0 - gamma_user)).min(cap.max(300));
        let bound = S::val(1e-6) + user_truncation_bound(scenario, horizon);
        let mut max_err = 0.0f64;
        let mut cases = 0;
        for _ in 0..cfg.draws {
            let profile = sampling::random_profile(&mut rng, scenario);
            let prior = Belief::new(scenario.prior().to_vec()).expect("prior is a belief");
            let entry = crate::algo_policy::best_content(scenario, &profile, &prior);
            for (index, t) in scenario.types().iter().enumerate() {
                if prior.weights()[index] <= S::zero() {
                    continue;
                }
                let uv = user_value_of(scenario, t, profile.strategy(index));
                let closed = if entry == t.preferred() { uv.preferred } else { uv.other };
                let vi = value_iterate_user(scenario, &profile, index, &prior, entry, horizon);
                max_err = max_err.max((closed - vi).abs().as_f64());
                cases += 1;
            }
        }
        outcomes.push(CheckOutcome {
            name: "user_closed_form_vs_recursion",
            passed: max_err < bound.as_f64(),
            cases,
            max_error: max_err,
            detail: format!("bound {:.3e} at horizon {horizon}", bound.as_f64()),
        });
    }

    // 5. Equilibrium no-deviation sweep.
    {
        let tolerance = if scenario.signaling() { S::val(1e-6) } else { S::val(1e-9) };
        let oc = OracleConfig { deviation_grid: cfg.grid, tolerance, ..OracleConfig::default() };
        let outcome = match crate::equilibrium::solve_equilibrium(
            scenario,
            crate::equilibrium::SelectionRule::GroupDefault,
            &crate::equilibrium::SolverConfig::default(),
        ) {
            Ok(eq) => match verify_no_deviation(scenario, &eq, &oc) {
                Ok(report) => CheckOutcome {
                    name: "equilibrium_no_deviation",
                    passed: true,
                    cases: scenario.n_types() * cfg.grid,
                    max_error: report.max_improvement.as_f64().max(0.0),
                    detail: format!("tolerance {:.1e}", tolerance.as_f64()),
                },
                Err(e) => CheckOutcome {
                    name: "equilibrium_no_deviation",
                    passed: false,
                    cases: scenario.n_types() * cfg.grid,
                    max_error: f64::NAN,
                    detail: e.to_string(),
                },
            },
            Err(e) => CheckOutcome {
                name: "equilibrium_no_deviation",
                passed: false,
                cases: 0,
                max_error: f64::NAN,
                detail: format!("solver failed: {e}"),
            },
        };
        outcomes.push(outcome);
    }

    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{solve_equilibrium, SelectionRule, SolverConfig};
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    fn s1_eq_profile() -> (Scenario<f64>, StrategyProfile<f64>) {
        let s1 = fixtures::s1::<f64>();
        let p = StrategyProfile::from_strategies(
            &s1,
            vec![TypeStrategy::pure(0.0, 1.0), TypeStrategy::all_ones()],
        )
        .unwrap();
        (s1, p)
    }

    #[test]
    fn horizon_zero_is_zero_and_horizon_one_is_immediate() {
        let (s1, p) = s1_eq_profile();
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        let zero = OracleConfig { horizon: 0, ..OracleConfig::default() };
        assert_eq!(value_iterate_qa(&s1, &p, &b, Content::A, &zero), 0.0);
        let one = OracleConfig { horizon: 1, ..OracleConfig::default() };
        // One step at A collects 0.5 * 0/0.2 + 0.5 * 1/0.25.
        assert_abs_diff_eq!(
            value_iterate_qa(&s1, &p, &b, Content::A, &one),
            2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn deep_iteration_matches_closed_forms_on_the_fixture() {
        let (s1, p) = s1_eq_profile();
        let cfg = OracleConfig { horizon: 200, ..OracleConfig::default() };

        let point = Belief::new(vec![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(
            value_iterate_qa(&s1, &p, &point, Content::B, &cfg),
            20.0,
            epsilon = 1e-6
        );

        let uniform = Belief::new(vec![0.5, 0.5]).unwrap();
        let vi = value_iterate_qa_both(&s1, &p, &uniform, &cfg);
        assert_abs_diff_eq!(vi[0], 29.0, epsilon = 1e-6);
        assert_abs_diff_eq!(vi[1], 28.1, epsilon = 1e-6);
        // And the closed form lands on the same values.
        assert_abs_diff_eq!(qa_value(&s1, &p, &uniform, Content::A), vi[0], epsilon = 1e-6);
        assert_abs_diff_eq!(qa_value(&s1, &p, &uniform, Content::B), vi[1], epsilon = 1e-6);
    }

    #[test]
    fn enumeration_matches_value_iteration() {
        let (s1, p) = s1_eq_profile();
        let prior = Belief::new(s1.prior().to_vec()).unwrap();
        for horizon in 1..=3 {
            let cfg = OracleConfig { horizon, ..OracleConfig::default() };
            for start in Content::BOTH {
                let vi = value_iterate_qa(&s1, &p, &prior, start, &cfg);
                let en = enumerate_qa_over_histories(&s1, &p, start, horizon).unwrap();
                assert_abs_diff_eq!(vi, en, epsilon = 1e-12);
            }
        }
        // Horizon 1 is the immediate expected engagement.
        let en = enumerate_qa_over_histories(&s1, &p, Content::A, 1).unwrap();
        assert_abs_diff_eq!(en, 2.0, epsilon = 1e-15);

        assert!(matches!(
            enumerate_qa_over_histories(&s1, &p, Content::A, 5),
            Err(OracleError::HorizonTooLarge { .. })
        ));
    }

    #[test]
    fn enumeration_matches_with_signaling() {
        let s1 = fixtures::s1::<f64>().with_cost(Some(0.05)).unwrap();
        let p = StrategyProfile::from_strategies(
            &s1,
            vec![
                TypeStrategy { f_a: 0.3, f_b: 1.0, u_a: 0.8, u_b: 0.0 },
                TypeStrategy::all_ones(),
            ],
        )
        .unwrap();
        for horizon in 1..=2 {
            let cfg = OracleConfig { horizon, ..OracleConfig::default() };
            for start in Content::BOTH {
                let prior = Belief::new(s1.prior().to_vec()).unwrap();
                let vi = value_iterate_qa(&s1, &p, &prior, start, &cfg);
                let en = enumerate_qa_over_histories(&s1, &p, start, horizon).unwrap();
                assert_abs_diff_eq!(vi, en, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn user_recursion_matches_closed_form_on_the_fixture() {
        let (s1, p) = s1_eq_profile();
        let prior = Belief::new(s1.prior().to_vec()).unwrap();
        // Entry is A; theta1 declines once and lives on B afterwards.
        let v0 = value_iterate_user(&s1, &p, 0, &prior, Content::A, 80);
        assert_abs_diff_eq!(v0, 3.0, epsilon = 1e-8);
        let v1 = value_iterate_user(&s1, &p, 1, &prior, Content::A, 80);
        assert_abs_diff_eq!(v1, 5.0, epsilon = 1e-8);
    }

    #[test]
    fn no_deviation_at_the_solved_equilibrium() {
        let s1 = fixtures::s1::<f64>();
        let eq = solve_equilibrium(&s1, SelectionRule::GroupDefault, &SolverConfig::default())
            .unwrap();
        let cfg = OracleConfig { tolerance: 1e-9, ..OracleConfig::default() };
        let report = verify_no_deviation(&s1, &eq, &cfg).unwrap();
        assert!(report.max_improvement <= 1e-9);
    }

    #[test]
    fn full_engagement_is_not_an_equilibrium_for_theta1() {
        let s1 = fixtures::s1::<f64>();
        let all_ones = StrategyProfile::from_strategies(
            &s1,
            vec![TypeStrategy::all_ones(), TypeStrategy::all_ones()],
        )
        .unwrap();
        let fake = EquilibriumResult {
            margins: (0..2).map(|i| margin_at(&s1, &all_ones, i)).collect(),
            profile: all_ones,
            rationales: vec![],
            iterations: 0,
            converged: true,
        };
        let cfg = OracleConfig { tolerance: 1e-9, ..OracleConfig::default() };
        let err = verify_no_deviation(&s1, &fake, &cfg).unwrap_err();
        match err {
            OracleError::DeviationFound { type_id, witness_f, improvement, .. } => {
                assert_eq!(type_id, "theta1");
                assert_eq!(witness_f, 0.0);
                assert_abs_diff_eq!(improvement, 0.5, epsilon = 1e-12);
            }
            other => panic!("expected deviation, got {other:?}"),
        }
    }

    #[test]
    fn no_deviation_under_random_entry() {
        let raw = crate::domain::RawScenario {
            types: (0..3)
                .map(|i| crate::domain::RawUserType {
                    id: format!("w{i}"),
                    alpha_a: 0.2,
                    alpha_b: 0.5,
                    r_a: 1.0,
                    r_b: 2.0,
                })
                .collect(),
            prior: vec![1.0 / 3.0; 3],
            gamma_alg: 0.9,
            gamma_user: 0.4,
            entry: Some(crate::domain::RawEntry { mode: "re".into(), p1_a: Some(0.3) }),
            cost: None,
        };
        let scn: Scenario<f64> = crate::domain::validate_scenario(&raw).unwrap();
        let eq = solve_equilibrium(&scn, SelectionRule::GroupDefault, &SolverConfig::default())
            .unwrap();
        let cfg = OracleConfig { tolerance: 1e-9, ..OracleConfig::default() };
        let report = verify_no_deviation(&scn, &eq, &cfg).unwrap();
        assert!(report.max_improvement <= 1e-9);
        // Entry at B pays r_b once before the classifier falls back to A:
        // value = p1_a*q_other(1) + p1_b*(r_b + gamma*q_other(1)).
        let q_other = 2.0 / 0.6 - 1.0 / 0.6;
        let expected = 0.3 * q_other + 0.7 * (2.0 + 0.4 * q_other);
        assert_abs_diff_eq!(report.scans[0].equilibrium_value, expected, epsilon = 1e-12);
    }

    #[test]
    fn no_deviation_for_the_signaling_equilibrium() {
        let s1 = fixtures::s1::<f64>().with_cost(Some(0.05)).unwrap();
        let eq = solve_equilibrium(&s1, SelectionRule::GroupDefault, &SolverConfig::default())
            .unwrap();
        let cfg = OracleConfig { tolerance: 1e-6, ..OracleConfig::default() };
        let report = verify_no_deviation(&s1, &eq, &cfg).unwrap();
        assert!(report.max_improvement <= 1e-6);
    }
}
