//! User-side best responses and the multi-leader equilibrium.
//!
//! For each type, the *steerable set* collects the strategies at the
//! non-preferred content for which the classifier still lands on that
//! type's preferred content at the prior. Whenever the set is nonempty, any
//! member is a best response (the user is then always shown the preferred
//! content). When it is empty, the user compares full engagement against
//! disengaging (or, with signaling, against paying the cost and partially
//! engaging), and the winner flips at a critical discount.
//!
//! The equilibrium itself is a synchronous best-response fixed point:
//! margins only depend on the *other* types' strategies, so all types can
//! be updated from one shared profile snapshot per round.

use thiserror::Error;

use crate::algo_policy::margin_at;
use crate::domain::{
    Content, Entry, Group, Scenario, StrategyProfile, TypeStrategy, UserTypeParams,
};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum EquilibriumError {
    #[error("unknown type id `{0}`")]
    UnknownTypeId(String),
    #[error(
        "type `{type_id}`: gamma_user = {gamma} sits exactly at the indifference threshold; \
         every strategy in [0, 1] is a best response"
    )]
    DegenerateGamma { type_id: String, gamma: f64 },
    #[error("best-response iteration did not converge within {iterations} rounds")]
    NotConverged { iterations: usize },
    #[error("best-response iteration entered a cycle of period {period}: {trace:?}")]
    CycleDetected { period: usize, trace: Vec<String> },
    #[error(
        "type `{type_id}`: random entry is only characterized for Type1 users with \
         margin above lambda/alpha_b (got margin {margin}, bound {bound})"
    )]
    ConditionNotCovered { type_id: String, margin: f64, bound: f64 },
    #[error("random entry with costly signaling is not characterized")]
    RandomEntrySignaling,
}

/// Closed interval `[lo, hi]`, or half-open `[lo, hi)` when the upper end
/// is the excluded boundary of the admissible domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<S> {
    pub lo: S,
    pub hi: S,
    pub hi_closed: bool,
}

impl<S: Real> Interval<S> {
    pub fn contains(&self, x: S) -> bool {
        x >= self.lo && (x < self.hi || (self.hi_closed && x == self.hi))
    }
}

/// The signaling steerable set: a bilinear constraint over `(f, u)` whose
/// fixed-`u` slices are intervals. The `u = 0` slice coincides with the
/// no-signaling set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteerableRegion<S> {
    /// Constant term `lambda/alpha(s*) + m(s*)`.
    affine: S,
    /// `lambda/alpha(-s*)`.
    slope_base: S,
    /// `gamma_alg * m(s*)`, scaled by `(1 - u)` inside a slice.
    slope_margin: S,
    /// Upper end of the admissible `f` domain.
    domain_hi: S,
    /// Whether the domain includes its upper end.
    domain_closed: bool,
}

impl<S: Real> SteerableRegion<S> {
    /// Interval of steering `f` values at signal probability `u`.
    pub fn slice(&self, u: S) -> Option<Interval<S>> {
        let slope = self.slope_base + self.slope_margin * (S::one() - u);
        solve_linear_cut(self.affine, slope, self.domain_hi, self.domain_closed)
    }

    pub fn contains(&self, f: S, u: S) -> bool {
        if u < S::zero() || u > S::one() {
            return false;
        }
        self.slice(u).is_some_and(|iv| iv.contains(f))
    }

    pub fn is_empty(&self) -> bool {
        // The constraint is linear in u at fixed f, so membership anywhere
        // implies membership at u = 0 or u = 1.
        self.slice(S::zero()).is_none() && self.slice(S::one()).is_none()
    }
}

/// Set of strategies at the non-preferred content that keep the classifier
/// on the preferred one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteerableSet<S> {
    Empty,
    /// No-signaling game.
    Interval(Interval<S>),
    /// Signaling game.
    Region(SteerableRegion<S>),
}

impl<S: Real> SteerableSet<S> {
    pub fn is_empty(&self) -> bool {
        matches!(self, SteerableSet::Empty)
    }
}

/// Solves `affine - f * slope >= 0` over the admissible domain
/// `[0, domain_hi]` (or `[0, domain_hi)` when open).
fn solve_linear_cut<S: Real>(
    affine: S,
    slope: S,
    domain_hi: S,
    domain_closed: bool,
) -> Option<Interval<S>> {
    let zero = S::zero();
    if slope > zero {
        if affine < zero {
            return None;
        }
        let cut = affine / slope;
        if cut < domain_hi {
            Some(Interval { lo: zero, hi: cut, hi_closed: true })
        } else if cut == domain_hi && !domain_closed {
            // The cut coincides with the excluded domain end.
            Some(Interval { lo: zero, hi: domain_hi, hi_closed: false })
        } else {
            Some(Interval { lo: zero, hi: domain_hi, hi_closed: domain_closed })
        }
    } else if slope == zero {
        (affine >= zero).then_some(Interval { lo: zero, hi: domain_hi, hi_closed: domain_closed })
    } else {
        // Negative slope: the constraint holds above the cut.
        if affine >= zero {
            return Some(Interval { lo: zero, hi: domain_hi, hi_closed: domain_closed });
        }
        let cut = affine / slope;
        let inside = cut < domain_hi || (domain_closed && cut == domain_hi);
        inside.then_some(Interval { lo: cut, hi: domain_hi, hi_closed: domain_closed })
    }
}

/// Margin oriented toward the type's preferred content: the steering
/// condition is `h_theta(s*) * lambda_theta + m(s*) >= 0`, and `h(s*)`
/// flips sign with the content, so Type1 users see `-margin`.
fn oriented<S: Real>(group: Group, margin: S) -> S {
    match group {
        Group::Type1 => -margin,
        Group::Type2 => margin,
    }
}

fn region_for<S: Real>(
    scenario: &Scenario<S>,
    params: &UserTypeParams<S>,
    lambda: S,
    margin: S,
) -> SteerableRegion<S> {
    let m_star = oriented(params.group, margin);
    let (domain_hi, domain_closed) = match params.group {
        Group::Type1 => (params.discourage_ratio(), false),
        Group::Type2 => (S::one(), true),
    };
    SteerableRegion {
        affine: lambda / params.alpha(params.preferred()) + m_star,
        slope_base: lambda / params.alpha(params.non_preferred()),
        slope_margin: scenario.gamma_alg() * m_star,
        domain_hi,
        domain_closed,
    }
}

fn type_entry<S: Real>(
    scenario: &Scenario<S>,
    type_id: &str,
) -> Result<(usize, UserTypeParams<S>), EquilibriumError> {
    let index = scenario
        .type_index(type_id)
        .ok_or_else(|| EquilibriumError::UnknownTypeId(type_id.to_string()))?;
    Ok((index, scenario.type_params(index).clone()))
}

/// Exact solution set of the steering inequality for one type at a given
/// margin. Returns the interval form in the no-signaling game and the
/// `(f, u)` region when the scenario has signaling.
pub fn steerable_set<S: Real>(
    scenario: &Scenario<S>,
    type_id: &str,
    margin: S,
) -> Result<SteerableSet<S>, EquilibriumError> {
    let (index, params) = type_entry(scenario, type_id)?;
    let lambda = scenario.prior()[index];
    let region = region_for(scenario, &params, lambda, margin);
    if scenario.signaling() {
        if region.is_empty() {
            Ok(SteerableSet::Empty)
        } else {
            Ok(SteerableSet::Region(region))
        }
    } else {
        match region.slice(S::zero()) {
            None => Ok(SteerableSet::Empty),
            Some(iv) => Ok(SteerableSet::Interval(iv)),
        }
    }
}

/// Nonemptiness without materializing the set. For Type1 users this is the
/// prior-mass condition `lambda >= alpha_b * margin`; Type2 sets are checked
/// through their corner slices.
pub fn steerable_nonempty<S: Real>(
    scenario: &Scenario<S>,
    type_id: &str,
    margin: S,
) -> Result<bool, EquilibriumError> {
    let (index, params) = type_entry(scenario, type_id)?;
    let lambda = scenario.prior()[index];
    match params.group {
        Group::Type1 => Ok(lambda >= params.alpha_b * margin),
        Group::Type2 => {
            let region = region_for(scenario, &params, lambda, margin);
            Ok(!region.is_empty())
        }
    }
}

/// Critical user discounts for one type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalGamma<S> {
    /// Disengage-vs-engage threshold `r(-s*)/r(s*)` in the plain game.
    pub no_signal: S,
    pub with_signal: SignalThreshold<S>,
}

/// Signal-vs-engage threshold, when the signal is worth its cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalThreshold<S> {
    Available {
        gamma: S,
        /// Relative drop of the required effective horizon.
        reduction: S,
    },
    /// The scenario has no signaling cost configured.
    NoCostConfigured,
    /// `cost >= ratio * r(-s*)`: signaling is dominated by disengaging.
    CostTooLarge { cost: S, bound: S },
}

/// The engagement-rate ratio capped at 1: the partial-engagement signal
/// strategy caps at full engagement for Type2 users, whose raw ratio
/// exceeds 1.
fn effective_ratio<S: Real>(params: &UserTypeParams<S>) -> S {
    params.discourage_ratio().min(S::one())
}

fn signal_gamma_crit<S: Real>(params: &UserTypeParams<S>, cost: S) -> S {
    let rho = effective_ratio(params);
    let r_hi = params.reward(params.preferred());
    let r_lo = params.reward(params.non_preferred());
    (cost + r_lo * (S::one() - rho)) / (cost + r_hi - r_lo * rho)
}

/// Critical discounts with and without signaling, and the burden reduction.
pub fn critical_gamma<S: Real>(
    scenario: &Scenario<S>,
    type_id: &str,
) -> Result<CriticalGamma<S>, EquilibriumError> {
    let (_, params) = type_entry(scenario, type_id)?;
    let r_hi = params.reward(params.preferred());
    let r_lo = params.reward(params.non_preferred());
    let no_signal = r_lo / r_hi;
    let with_signal = match scenario.cost() {
        None => SignalThreshold::NoCostConfigured,
        Some(cost) => {
            let rho = effective_ratio(&params);
            let bound = rho * r_lo;
            if cost < bound {
                SignalThreshold::Available {
                    gamma: signal_gamma_crit(&params, cost),
                    reduction: rho * r_lo / r_hi - cost / r_hi,
                }
            } else {
                SignalThreshold::CostTooLarge { cost, bound }
            }
        }
    };
    Ok(CriticalGamma { no_signal, with_signal })
}

/// Closed-form user values on the best-response path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserValue<S> {
    /// Value when the session opens at the preferred content.
    pub preferred: S,
    /// Value when it opens at the non-preferred content.
    pub other: S,
}

/// Discounted user value of a strategy, assuming the algorithm best
/// responds along the path. Always `preferred >= other`.
pub fn user_q_closed_form<S: Real>(
    scenario: &Scenario<S>,
    type_id: &str,
    strategy: &TypeStrategy<S>,
) -> Result<UserValue<S>, EquilibriumError> {
    let (_, params) = type_entry(scenario, type_id)?;
    Ok(user_value_of(scenario, &params, strategy))
}

pub(crate) fn user_value_of<S: Real>(
    scenario: &Scenario<S>,
    params: &UserTypeParams<S>,
    strategy: &TypeStrategy<S>,
) -> UserValue<S> {
    let gamma = scenario.gamma_user();
    let cost = scenario.cost().unwrap_or_else(S::zero);
    let r_hi = params.reward(params.preferred());
    let r_lo = params.reward(params.non_preferred());
    let f = strategy.f(params.non_preferred());
    let u = strategy.u(params.non_preferred());
    let preferred = r_hi / (S::one() - gamma);
    let other =
        preferred - (r_hi - f * r_lo + u * cost) / (S::one() - gamma * (S::one() - u) * f);
    UserValue { preferred, other }
}

/// How a best response was chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rationale<S> {
    /// A member of the steerable set; the algorithm then always opens with
    /// the preferred content.
    Steered { f: S, u: S },
    /// Empty set, foresighted user: refuse the tempting content.
    EmptySetDisengage,
    /// Empty set, myopic user: engage fully.
    EmptySetEngage,
    /// Empty set, signaling game: pay the cost and partially engage.
    EmptySetSignal,
    /// Exact indifference; any strategy ties. The solver surfaces
    /// [`EquilibriumError::DegenerateGamma`] instead of picking this.
    Indifferent,
}

impl<S: Real> Rationale<S> {
    /// Branch equality, ignoring the selected point.
    pub fn same_branch(&self, other: &Rationale<S>) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Rationale::Steered { .. } => "steered",
            Rationale::EmptySetDisengage => "empty_set_disengage",
            Rationale::EmptySetEngage => "empty_set_engage",
            Rationale::EmptySetSignal => "empty_set_signal",
            Rationale::Indifferent => "indifferent",
        }
    }
}

/// A single type's best response.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse<S> {
    pub strategy: TypeStrategy<S>,
    pub rationale: Rationale<S>,
}

/// Which member of a nonempty steerable set to commit to. On-path value is
/// identical for every member, so this only pins determinism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    /// Min for Type1 users, MaxFeasible for Type2 users.
    GroupDefault,
    /// Smallest member (f = 0 in the downward-closed case).
    Min,
    /// Largest member, signals off.
    MaxFeasible,
}

fn select_from_interval<S: Real>(
    params: &UserTypeParams<S>,
    iv: Interval<S>,
    rule: SelectionRule,
    eps: S,
) -> S {
    let rule = match rule {
        SelectionRule::GroupDefault => match params.group {
            Group::Type1 => SelectionRule::Min,
            Group::Type2 => SelectionRule::MaxFeasible,
        },
        other => other,
    };
    match rule {
        SelectionRule::Min => iv.lo,
        SelectionRule::MaxFeasible => {
            if !iv.hi_closed {
                (iv.hi - eps).max(iv.lo)
            } else if params.group == Group::Type1 && iv.hi < params.discourage_ratio() {
                // The closed bound sits exactly on the classifier tie, and
                // ties resolve to the tempting content; step inside.
                (iv.hi - eps).max(iv.lo)
            } else {
                iv.hi
            }
        }
        SelectionRule::GroupDefault => unreachable!(),
    }
}

/// Best response under algorithmic entry, given the margin contributed by
/// the other types.
pub fn best_response_ae<S: Real>(
    scenario: &Scenario<S>,
    type_id: &str,
    margin: S,
    selection: SelectionRule,
    limit_epsilon: S,
) -> Result<BestResponse<S>, EquilibriumError> {
    let (_, params) = type_entry(scenario, type_id)?;
    let np = params.non_preferred();
    let base = TypeStrategy::all_ones();

    match steerable_set(scenario, type_id, margin)? {
        SteerableSet::Interval(iv) => {
            let f = select_from_interval(&params, iv, selection, limit_epsilon);
            return Ok(BestResponse {
                strategy: base.with_f(np, f),
                rationale: Rationale::Steered { f, u: S::zero() },
            });
        }
        SteerableSet::Region(region) => {
            // Region nonempty implies its u = 0 slice is nonempty, so the
            // signal-free member is always available.
            let iv = region.slice(S::zero()).expect("nonempty region has a u=0 slice");
            let f = select_from_interval(&params, iv, selection, limit_epsilon);
            return Ok(BestResponse {
                strategy: base.with_f(np, f),
                rationale: Rationale::Steered { f, u: S::zero() },
            });
        }
        SteerableSet::Empty => {}
    }

    let gamma = scenario.gamma_user();
    if let Some(cost) = scenario.cost() {
        let rho = effective_ratio(&params);
        let r_lo = params.reward(np);
        if cost < rho * r_lo {
            let crit = signal_gamma_crit(&params, cost);
            if gamma == crit {
                return Err(EquilibriumError::DegenerateGamma {
                    type_id: params.id.clone(),
                    gamma: gamma.as_f64(),
                });
            }
            if gamma > crit {
                let f = (params.discourage_ratio() - limit_epsilon).min(S::one()).max(S::zero());
                return Ok(BestResponse {
                    strategy: base.with_f(np, f).with_u(np, S::one()),
                    rationale: Rationale::EmptySetSignal,
                });
            }
            return Ok(BestResponse { strategy: base, rationale: Rationale::EmptySetEngage });
        }
        // Signaling dominated by plain disengagement: fall through.
    }

    let threshold = params.reward(np) / params.reward(params.preferred());
    if gamma == threshold {
        return Err(EquilibriumError::DegenerateGamma {
            type_id: params.id.clone(),
            gamma: gamma.as_f64(),
        });
    }
    if gamma > threshold {
        Ok(BestResponse {
            strategy: base.with_f(np, S::zero()),
            rationale: Rationale::EmptySetDisengage,
        })
    } else {
        Ok(BestResponse { strategy: base, rationale: Rationale::EmptySetEngage })
    }
}

/// Best response under random entry. Only the regime with Type1 users whose
/// margin exceeds `lambda/alpha_b` is characterized; the decision is
/// independent of the entry distribution `p1`.
pub fn best_response_re<S: Real>(
    scenario: &Scenario<S>,
    type_id: &str,
    margin: S,
    _p1_a: S,
) -> Result<BestResponse<S>, EquilibriumError> {
    if scenario.signaling() {
        return Err(EquilibriumError::RandomEntrySignaling);
    }
    let (index, params) = type_entry(scenario, type_id)?;
    let lambda = scenario.prior()[index];
    let bound = lambda / params.alpha_b;
    if params.group != Group::Type1 || margin <= bound {
        return Err(EquilibriumError::ConditionNotCovered {
            type_id: params.id.clone(),
            margin: margin.as_f64(),
            bound: bound.as_f64(),
        });
    }
    let gamma = scenario.gamma_user();
    let threshold = params.r_a / params.r_b;
    if gamma == threshold {
        return Err(EquilibriumError::DegenerateGamma {
            type_id: params.id.clone(),
            gamma: gamma.as_f64(),
        });
    }
    let base = TypeStrategy::all_ones();
    if gamma > threshold {
        Ok(BestResponse {
            strategy: base.with_f(Content::A, S::zero()),
            rationale: Rationale::EmptySetDisengage,
        })
    } else {
        Ok(BestResponse { strategy: base, rationale: Rationale::EmptySetEngage })
    }
}

/// Solver knobs. The defaults match the documented behavior: all-ones
/// initial profile, 100 rounds, no damping.
#[derive(Debug, Clone)]
pub struct SolverConfig<S> {
    pub max_iters: usize,
    /// Componentwise tolerance for "profile unchanged".
    pub strategy_tol: S,
    /// Longest cycle period reported before giving up.
    pub cycle_window: usize,
    /// Offset used for limit strategies (`ratio - eps`) and open bounds.
    pub limit_epsilon: S,
    /// Initial strategies in type order; all-ones when absent.
    pub init: Option<Vec<TypeStrategy<S>>>,
}

impl<S: Real> Default for SolverConfig<S> {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100,
            strategy_tol: S::val(1e-12),
            cycle_window: 8,
            limit_epsilon: S::val(1e-9),
            init: None,
        }
    }
}

/// A converged equilibrium: the fixed-point profile, per-type margins at
/// that profile, and the branch each type's response came from.
#[derive(Debug, Clone)]
pub struct EquilibriumResult<S> {
    pub profile: StrategyProfile<S>,
    pub margins: Vec<S>,
    pub rationales: Vec<Rationale<S>>,
    pub iterations: usize,
    pub converged: bool,
}

fn render_profile<S: Real>(strategies: &[TypeStrategy<S>]) -> String {
    let parts: Vec<String> = strategies
        .iter()
        .map(|s| {
            format!(
                "(f_a {:.6}, f_b {:.6}, u_a {:.6}, u_b {:.6})",
                s.f_a.as_f64(),
                s.f_b.as_f64(),
                s.u_a.as_f64(),
                s.u_b.as_f64()
            )
        })
        .collect();
    parts.join(" ")
}

fn profiles_match<S: Real>(
    a: &[TypeStrategy<S>],
    b: &[TypeStrategy<S>],
    ra: Option<&[Rationale<S>]>,
    rb: &[Rationale<S>],
    tol: S,
) -> bool {
    let strategies_eq = a.iter().zip(b).all(|(x, y)| x.approx_eq(y, tol));
    let rationales_eq = match ra {
        None => true,
        Some(ra) => ra.iter().zip(rb).all(|(x, y)| x.same_branch(y)),
    };
    strategies_eq && rationales_eq
}

/// Synchronous best-response iteration from a shared profile snapshot.
pub fn solve_equilibrium<S: Real>(
    scenario: &Scenario<S>,
    selection: SelectionRule,
    cfg: &SolverConfig<S>,
) -> Result<EquilibriumResult<S>, EquilibriumError> {
    let init = cfg
        .init
        .clone()
        .unwrap_or_else(|| vec![TypeStrategy::all_ones(); scenario.n_types()]);
    let mut current = StrategyProfile::from_strategies(scenario, init)
        .expect("initial profile must satisfy the strategy constraints");
    let mut current_rationales: Option<Vec<Rationale<S>>> = None;
    // History of (strategies, rationales) for cycle detection.
    let mut history: Vec<(Vec<TypeStrategy<S>>, Option<Vec<Rationale<S>>>)> =
        vec![(current.strategies().to_vec(), None)];

    for iteration in 1..=cfg.max_iters {
        let mut strategies = Vec::with_capacity(scenario.n_types());
        let mut rationales = Vec::with_capacity(scenario.n_types());
        for (index, t) in scenario.types().iter().enumerate() {
            let margin = margin_at(scenario, &current, index);
            let response = match scenario.entry() {
                Entry::Algorithmic => {
                    best_response_ae(scenario, &t.id, margin, selection, cfg.limit_epsilon)?
                }
                Entry::Random { p1_a } => best_response_re(scenario, &t.id, margin, p1_a)?,
            };
            strategies.push(response.strategy);
            rationales.push(response.rationale);
        }

        if profiles_match(
            &strategies,
            current.strategies(),
            current_rationales.as_deref(),
            &rationales,
            cfg.strategy_tol,
        ) {
            let profile = StrategyProfile::from_strategies(scenario, strategies)
                .expect("best responses satisfy the strategy constraints");
            let margins = (0..scenario.n_types())
                .map(|i| margin_at(scenario, &profile, i))
                .collect();
            return Ok(EquilibriumResult {
                profile,
                margins,
                rationales,
                iterations: iteration,
                converged: true,
            });
        }

        // Cycles: the new profile equals an earlier one at lag >= 2.
        for lag in 2..=cfg.cycle_window.min(history.len()) {
            let (old_s, old_r) = &history[history.len() - lag];
            if profiles_match(&strategies, old_s, old_r.as_deref(), &rationales, cfg.strategy_tol)
            {
                let trace = history[history.len() - lag..]
                    .iter()
                    .map(|(s, _)| render_profile(s))
                    .collect();
                return Err(EquilibriumError::CycleDetected { period: lag, trace });
            }
        }

        current = StrategyProfile::from_strategies(scenario, strategies.clone())
            .expect("best responses satisfy the strategy constraints");
        current_rationales = Some(rationales.clone());
        history.push((strategies, Some(rationales)));
    }
    Err(EquilibriumError::NotConverged { iterations: cfg.max_iters })
}
