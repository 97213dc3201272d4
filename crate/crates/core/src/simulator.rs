//! Session simulation under the exact best-responding algorithm.
//!
//! Each step the user flips an engagement coin (and a signal coin in the
//! signaling game), an engagement length is drawn when engaged, the
//! posterior is updated from the binary indicators alone, and the
//! classifier picks the next content. Realized lengths never feed back
//! into beliefs or user rewards; they are recorded for algorithm-utility
//! reporting.
//!
//! Replications are embarrassingly parallel: replication `i` owns the
//! ChaCha stream `i` of the master seed, and aggregation uses a fixed
//! pairwise reduction so output bytes do not depend on thread scheduling.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::algo_policy::best_content;
use crate::belief::{update, Belief, Observation};
use crate::domain::{Content, Entry, Scenario, ScenarioError, StrategyProfile};
use crate::equilibrium::{
    solve_equilibrium, EquilibriumError, SelectionRule, SolverConfig,
};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum SimulatorError {
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("unknown type id `{0}`")]
    UnknownTypeId(String),
}

/// Worker pool shared by all simulations; sized by the
/// `STACKELBERG_ALIGN_THREADS` environment variable (0 or unset = auto).
fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var("STACKELBERG_ALIGN_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(0);
        let mut builder = rayon::ThreadPoolBuilder::new();
        if threads > 0 {
            builder = builder.num_threads(threads);
        }
        builder.build().expect("worker pool")
    })
}

/// How engagement lengths are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthModel {
    /// Geometric on {1, 2, ...} with success rate alpha (mean 1/alpha).
    #[default]
    Geometric,
    /// Always `ceil(1/alpha)`, for variance-free runs.
    Deterministic,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    pub length_model: LengthModel,
}

/// Draws an engagement length in steps (at least 1).
pub fn sample_engagement_length<R: Rng>(rng: &mut R, alpha: f64, model: LengthModel) -> u64 {
    match model {
        LengthModel::Deterministic => (1.0 / alpha).ceil() as u64,
        LengthModel::Geometric => {
            if alpha >= 1.0 {
                return 1;
            }
            let u: f64 = rng.random();
            // Inverse CDF of the geometric distribution on {1, 2, ...}.
            1 + ((1.0 - u).ln() / (1.0 - alpha).ln()).floor() as u64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionStep<S> {
    pub content: Content,
    pub engaged: bool,
    /// Steps spent engaged; 0 when not engaged.
    pub length: u64,
    pub signaled: bool,
    pub belief_after: Belief<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionTranscript<S> {
    pub type_id: String,
    pub steps: Vec<SessionStep<S>>,
}

impl<S: Real> SessionTranscript<S> {
    /// Re-derives the content and belief chain and checks it against the
    /// recorded one: contents must be the entry rule's pick at step one and
    /// the classifier's pick afterwards, and each belief must equal the
    /// posterior update of its predecessor.
    pub fn check_consistency(
        &self,
        scenario: &Scenario<S>,
        profile: &StrategyProfile<S>,
    ) -> Result<(), String> {
        let mut belief = Belief::new(scenario.prior().to_vec()).map_err(|e| e.to_string())?;
        for (t, step) in self.steps.iter().enumerate() {
            if t > 0 {
                let expected = best_content(scenario, profile, &belief);
                if step.content != expected {
                    return Err(format!(
                        "step {t}: content {:?} differs from classifier pick {:?}",
                        step.content, expected
                    ));
                }
            } else if let Entry::Algorithmic = scenario.entry() {
                let expected = best_content(scenario, profile, &belief);
                if step.content != expected {
                    return Err(format!(
                        "entry content {:?} differs from classifier pick {:?}",
                        step.content, expected
                    ));
                }
            }
            let obs = Observation {
                content: step.content,
                engaged: step.engaged,
                signaled: scenario.signaling().then_some(step.signaled),
            };
            belief = update(&belief, profile, &obs).map_err(|e| e.to_string())?;
            if belief != step.belief_after {
                return Err(format!("step {t}: recorded belief differs from update"));
            }
        }
        Ok(())
    }
}

fn session_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn simulate_with_rng<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
    type_index: usize,
    t_steps: usize,
    rng: &mut ChaCha12Rng,
    opts: &SimOptions,
) -> SessionTranscript<S> {
    let params = scenario.type_params(type_index);
    let strategy = profile.strategy(type_index);
    let mut belief = Belief::new(scenario.prior().to_vec()).expect("prior is a belief");
    let mut steps = Vec::with_capacity(t_steps);
    let mut content = match scenario.entry() {
        Entry::Algorithmic => best_content(scenario, profile, &belief),
        Entry::Random { p1_a } => {
            if rng.random::<f64>() < p1_a.as_f64() {
                Content::A
            } else {
                Content::B
            }
        }
    };
    for _ in 0..t_steps {
        let engaged = rng.random::<f64>() < strategy.f(content).as_f64();
        let signaled = scenario.signaling()
            && rng.random::<f64>() < strategy.u(content).as_f64();
        let length = if engaged {
            sample_engagement_length(rng, params.alpha(content).as_f64(), opts.length_model)
        } else {
            0
        };
        let obs = Observation {
            content,
            engaged,
            signaled: scenario.signaling().then_some(signaled),
        };
        belief = update(&belief, profile, &obs)
            .expect("sampled observations have positive probability under the profile");
        steps.push(SessionStep { content, engaged, length, signaled, belief_after: belief.clone() });
        content = best_content(scenario, profile, &belief);
    }
    SessionTranscript { type_id: params.id.clone(), steps }
}

/// Simulates one session of `t_steps` interactions. Deterministic given
/// the seed. The simulated type must carry positive prior mass.
pub fn simulate_session<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
    type_id: &str,
    t_steps: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<SessionTranscript<S>, SimulatorError> {
    let index = scenario
        .type_index(type_id)
        .ok_or_else(|| SimulatorError::UnknownTypeId(type_id.to_string()))?;
    let mut rng = session_rng(seed, 0);
    Ok(simulate_with_rng(scenario, profile, index, t_steps, &mut rng, opts))
}

/// Cumulative undiscounted reward of one transcript at each step count.
fn cumulative_rewards<S: Real>(
    scenario: &Scenario<S>,
    type_index: usize,
    transcript: &SessionTranscript<S>,
) -> Vec<S> {
    let params = scenario.type_params(type_index);
    let cost = scenario.cost().unwrap_or_else(S::zero);
    let mut acc = S::zero();
    transcript
        .steps
        .iter()
        .map(|step| {
            if step.engaged {
                acc += params.reward(step.content);
            }
            if step.signaled {
                acc -= cost;
            }
            acc
        })
        .collect()
}

/// Fixed-shape pairwise reduction; summation order is independent of how
/// the work was scheduled.
fn pairwise_sum<S: Real>(mut vecs: Vec<Vec<S>>) -> Vec<S> {
    if vecs.is_empty() {
        return Vec::new();
    }
    while vecs.len() > 1 {
        let mut next = Vec::with_capacity(vecs.len().div_ceil(2));
        let mut iter = vecs.into_iter();
        while let Some(mut a) = iter.next() {
            if let Some(b) = iter.next() {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        vecs = next;
    }
    vecs.pop().unwrap()
}

/// Monte Carlo estimate of the expected cumulative (undiscounted) reward
/// after t = 1..T steps, averaged over `reps` replications. Exact with one
/// replication when every engagement and signal probability is 0 or 1.
pub fn value_t<S: Real>(
    scenario: &Scenario<S>,
    profile: &StrategyProfile<S>,
    type_id: &str,
    t_steps: usize,
    reps: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<Vec<S>, SimulatorError> {
    let index = scenario
        .type_index(type_id)
        .ok_or_else(|| SimulatorError::UnknownTypeId(type_id.to_string()))?;
    if t_steps == 0 || reps == 0 {
        return Ok(vec![S::zero(); t_steps]);
    }
    const CHUNK: usize = 2048;
    let n_chunks = reps.div_ceil(CHUNK);
    let opts = *opts;
    let partials: Vec<Vec<S>> = pool().install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|chunk| {
                let lo = chunk * CHUNK;
                let hi = ((chunk + 1) * CHUNK).min(reps);
                let per_rep: Vec<Vec<S>> = (lo..hi)
                    .map(|rep| {
                        let mut rng = session_rng(seed, rep as u64);
                        let transcript = simulate_with_rng(
                            scenario, profile, index, t_steps, &mut rng, &opts,
                        );
                        cumulative_rewards(scenario, index, &transcript)
                    })
                    .collect();
                pairwise_sum(per_rep)
            })
            .collect()
    });
    let total = pairwise_sum(partials);
    let denom = S::from_usize(reps).expect("reps fits the scalar");
    Ok(total.into_iter().map(|v| v / denom).collect())
}

/// Per-type undiscounted value and regret curves.
#[derive(Debug, Clone)]
pub struct RegretCurve<S> {
    pub per_type: Vec<TypeRegretCurve<S>>,
}

#[derive(Debug, Clone)]
pub struct TypeRegretCurve<S> {
    pub type_id: String,
    pub value_actual: Vec<S>,
    pub value_baseline: Vec<S>,
    /// `value_baseline - value_actual`, pointwise.
    pub regret: Vec<S>,
}

/// Patient-limit user discount standing in for the undiscounted benchmark.
pub fn baseline_gamma<S: Real>() -> S {
    S::one() - S::val(1e-9)
}

/// Regret of the equilibrium at `gamma_user_actual` against the
/// equilibrium of the patient limit, both solved fresh and simulated with
/// paired random streams. Each profile plays under its own entry content.
#[allow(clippy::too_many_arguments)]
pub fn regret_curve<S: Real>(
    scenario: &Scenario<S>,
    gamma_user_actual: S,
    t_steps: usize,
    reps: usize,
    seed: u64,
    selection: SelectionRule,
    solver_cfg: &SolverConfig<S>,
    opts: &SimOptions,
) -> Result<RegretCurve<S>, SimulatorError> {
    let actual_scn = scenario.with_gamma_user(gamma_user_actual)?;
    let baseline_scn = scenario.with_gamma_user(baseline_gamma::<S>())?;
    let actual = solve_equilibrium(&actual_scn, selection, solver_cfg)?;
    let baseline = solve_equilibrium(&baseline_scn, selection, solver_cfg)?;
    regret_curve_for_profiles(
        &actual_scn,
        &actual.profile,
        &baseline_scn,
        &baseline.profile,
        t_steps,
        reps,
        seed,
        opts,
    )
}

/// Regret curves for explicit actual/baseline profiles.
#[allow(clippy::too_many_arguments)]
pub fn regret_curve_for_profiles<S: Real>(
    actual_scn: &Scenario<S>,
    actual_profile: &StrategyProfile<S>,
    baseline_scn: &Scenario<S>,
    baseline_profile: &StrategyProfile<S>,
    t_steps: usize,
    reps: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<RegretCurve<S>, SimulatorError> {
    let mut per_type = Vec::with_capacity(actual_scn.n_types());
    for (index, t) in actual_scn.types().iter().enumerate() {
        let type_seed = seed.wrapping_add((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let value_actual =
            value_t(actual_scn, actual_profile, &t.id, t_steps, reps, type_seed, opts)?;
        let value_baseline =
            value_t(baseline_scn, baseline_profile, &t.id, t_steps, reps, type_seed, opts)?;
        let regret = value_baseline
            .iter()
            .zip(&value_actual)
            .map(|(b, a)| *b - *a)
            .collect();
        per_type.push(TypeRegretCurve {
            type_id: t.id.clone(),
            value_actual,
            value_baseline,
            regret,
        });
    }
    Ok(RegretCurve { per_type })
}
