//! Command-line front end: scenario ingestion, the five subcommands, and
//! deterministic outputs.
//!
//! Exit codes: 0 success, 2 usage, 3 validation, 4 solver failure,
//! 5 oracle failure. Failures additionally emit one machine-readable JSON
//! line on stderr.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stackelberg_align::algo_policy::classifier_weights;
use stackelberg_align::belief::Belief;
use stackelberg_align::domain::{Content, Entry, RawProfile, StrategyProfile};
use stackelberg_align::equilibrium::{
    critical_gamma, solve_equilibrium, EquilibriumError, EquilibriumResult, SelectionRule,
    SignalThreshold, SolverConfig,
};
use stackelberg_align::oracle::{run_verification, VerificationConfig};
use stackelberg_align::simulator::{
    baseline_gamma, regret_curve_for_profiles, SimOptions,
};
use stackelberg_align::Scenario64;

#[derive(Parser)]
#[command(
    name = "stackelberg-align",
    version,
    about = "Equilibrium solver and session simulator for the user-algorithm engagement game"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum SelectionArg {
    /// Min for Type1 users, max-feasible for Type2 users.
    #[default]
    Default,
    Min,
    MaxFeasible,
}

impl From<SelectionArg> for SelectionRule {
    fn from(arg: SelectionArg) -> SelectionRule {
        match arg {
            SelectionArg::Default => SelectionRule::GroupDefault,
            SelectionArg::Min => SelectionRule::Min,
            SelectionArg::MaxFeasible => SelectionRule::MaxFeasible,
        }
    }
}

/// Scenario-file overrides shared by every subcommand.
#[derive(clap::Args, Clone)]
struct ScenarioArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's user discount.
    #[arg(long)]
    gamma_user: Option<f64>,
    /// Override the entry rule: "ae" or "re".
    #[arg(long)]
    entry: Option<String>,
    /// Probability of content A under random entry (with --entry re).
    #[arg(long)]
    p1_a: Option<f64>,
    /// Override (or add) the signaling cost.
    #[arg(long)]
    cost: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the multi-leader equilibrium and write profile, margins, and
    /// per-type rationales as JSON.
    Solve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t)]
        selection: SelectionArg,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-type critical discounts as CSV:
    /// type_id,gamma_crit_nosig,gamma_crit_sig,reduction.
    Thresholds {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classifier decisions over a belief-simplex grid as CSV:
    /// lambda_1,...,lambda_n,margin,choice.
    Boundary {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Strategy profile file, or "solve" to compute the equilibrium.
        #[arg(long)]
        profile: String,
        /// Grid points per simplex edge.
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long, value_enum, default_value_t)]
        selection: SelectionArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate sessions and write the regret curve as CSV:
    /// t,value_actual,value_baseline,regret.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Strategy profile file, or "solve" to compute the equilibrium.
        #[arg(long)]
        profile: String,
        /// Type id whose curve is written.
        #[arg(long = "type")]
        type_id: String,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        selection: SelectionArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle verification suite; exit 0 iff every check passes.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        seed: u64,
        /// Random draws per check.
        #[arg(long, default_value_t = 25)]
        draws: usize,
        /// Deviation-grid points per strategy dimension.
        #[arg(long, default_value_t = 201)]
        grid: usize,
    },
}

struct AppError {
    code: u8,
    kind: String,
    message: String,
}

impl AppError {
    fn new(code: u8, kind: impl Into<String>, message: impl Into<String>) -> AppError {
        AppError { code, kind: kind.into(), message: message.into() }
    }

    fn io(context: &str, err: std::io::Error) -> AppError {
        AppError::new(3, "Io", format!("{context}: {err}"))
    }
}

/// First token of the Debug form: the enum variant name.
fn kind_of(err: &dyn std::fmt::Debug) -> String {
    let text = format!("{err:?}");
    text.split(|c: char| c == ' ' || c == '(' || c == '{')
        .next()
        .unwrap_or("Error")
        .to_string()
}

fn validation<E: std::fmt::Debug + std::fmt::Display>(err: E) -> AppError {
    AppError::new(3, kind_of(&err), err.to_string())
}

fn solver(err: EquilibriumError) -> AppError {
    AppError::new(4, kind_of(&err), err.to_string())
}

/// Full-precision decimal form (17 significant digits) for CSV fields.
fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario64, AppError> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| AppError::io(&args.scenario.display().to_string(), e))?;
    let mut scenario = Scenario64::from_json_str(&text).map_err(validation)?;
    if let Some(gamma) = args.gamma_user {
        scenario = scenario.with_gamma_user(gamma).map_err(validation)?;
    }
    if let Some(cost) = args.cost {
        scenario = scenario.with_cost(Some(cost)).map_err(validation)?;
    }
    match args.entry.as_deref() {
        None => {
            if args.p1_a.is_some() {
                return Err(AppError::new(3, "EntryOverride", "--p1-a requires --entry re"));
            }
        }
        Some("ae") => scenario = scenario.with_entry(Entry::Algorithmic).map_err(validation)?,
        Some("re") => {
            let p1_a = args.p1_a.unwrap_or(0.5);
            scenario = scenario.with_entry(Entry::Random { p1_a }).map_err(validation)?;
        }
        Some(other) => {
            return Err(AppError::new(
                3,
                "UnknownEntryMode",
                format!("unknown entry mode `{other}` (expected \"ae\" or \"re\")"),
            ));
        }
    }
    Ok(scenario)
}

/// Profile source: a profile file (bare map or solver output) or the
/// literal "solve".
fn load_profile(
    scenario: &Scenario64,
    source: &str,
    selection: SelectionRule,
) -> Result<StrategyProfile<f64>, AppError> {
    if source == "solve" {
        let eq = solve_equilibrium(scenario, selection, &SolverConfig::default())
            .map_err(solver)?;
        return Ok(eq.profile);
    }
    let text = std::fs::read_to_string(Path::new(source))
        .map_err(|e| AppError::io(source, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| AppError::new(3, "Parse", format!("{source}: {e}")))?;
    let raw_value = value.get("profile").cloned().unwrap_or(value);
    let raw: RawProfile = serde_json::from_value(raw_value)
        .map_err(|e| AppError::new(3, "Parse", format!("{source}: {e}")))?;
    StrategyProfile::from_raw(scenario, &raw).map_err(validation)
}

fn write_out(out: Option<&PathBuf>, contents: &str) -> Result<(), AppError> {
    match out {
        Some(path) => std::fs::write(path, contents)
            .map_err(|e| AppError::io(&path.display().to_string(), e)),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn solve_json(scenario: &Scenario64, eq: &EquilibriumResult<f64>) -> String {
    let mut profile = serde_json::Map::new();
    let mut margins = serde_json::Map::new();
    let mut rationales = serde_json::Map::new();
    for (i, t) in scenario.types().iter().enumerate() {
        let st = eq.profile.strategy(i);
        profile.insert(
            t.id.clone(),
            serde_json::json!({
                "f_a": st.f_a, "f_b": st.f_b, "u_a": st.u_a, "u_b": st.u_b
            }),
        );
        margins.insert(t.id.clone(), serde_json::json!(eq.margins[i]));
        rationales.insert(t.id.clone(), serde_json::json!(eq.rationales[i].label()));
    }
    let doc = serde_json::json!({
        "converged": eq.converged,
        "iterations": eq.iterations,
        "profile": profile,
        "margins": margins,
        "rationales": rationales,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    text
}

fn cmd_solve(
    args: &ScenarioArgs,
    selection: SelectionArg,
    out: Option<&PathBuf>,
) -> Result<(), AppError> {
    let scenario = load_scenario(args)?;
    let eq = solve_equilibrium(&scenario, selection.into(), &SolverConfig::default())
        .map_err(solver)?;
    write_out(out, &solve_json(&scenario, &eq))
}

fn cmd_thresholds(args: &ScenarioArgs, out: Option<&PathBuf>) -> Result<(), AppError> {
    let scenario = load_scenario(args)?;
    let mut csv = String::from("type_id,gamma_crit_nosig,gamma_crit_sig,reduction\n");
    for t in scenario.types() {
        let crit = critical_gamma(&scenario, &t.id).map_err(solver)?;
        let (sig, red) = match crit.with_signal {
            SignalThreshold::Available { gamma, reduction } => {
                (sig17(gamma), sig17(reduction))
            }
            _ => (String::new(), String::new()),
        };
        let _ = writeln!(csv, "{},{},{sig},{red}", t.id, sig17(crit.no_signal));
    }
    write_out(out, &csv)
}

/// All compositions of `total` into `cells` nonnegative parts, in
/// lexicographic order: the deterministic simplex lattice.
fn compositions(total: usize, cells: usize) -> Vec<Vec<usize>> {
    if cells == 1 {
        return vec![vec![total]];
    }
    let mut all = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, cells - 1) {
            let mut row = Vec::with_capacity(cells);
            row.push(first);
            row.append(&mut rest);
            all.push(row);
        }
    }
    all
}

fn cmd_boundary(
    args: &ScenarioArgs,
    profile_source: &str,
    grid: usize,
    selection: SelectionArg,
    out: Option<&PathBuf>,
) -> Result<(), AppError> {
    if grid < 2 {
        return Err(AppError::new(3, "GridTooSmall", "--grid must be at least 2"));
    }
    let scenario = load_scenario(args)?;
    let profile = load_profile(&scenario, profile_source, selection.into())?;
    let h = classifier_weights(&scenario, &profile);
    let n = scenario.n_types();
    let mut csv = String::new();
    for i in 1..=n {
        let _ = write!(csv, "lambda_{i},");
    }
    csv.push_str("margin,choice\n");
    let denom = (grid - 1) as f64;
    for row in compositions(grid - 1, n) {
        let lambda: Vec<f64> = row.iter().map(|k| *k as f64 / denom).collect();
        let belief = Belief::new(lambda.clone()).expect("lattice point is a belief");
        let score = belief.dot(&h.h);
        let choice = if score >= 0.0 { Content::A } else { Content::B };
        for l in &lambda {
            let _ = write!(csv, "{},", sig17(*l));
        }
        let _ = writeln!(csv, "{},{}", sig17(score), choice.label());
    }
    write_out(out, &csv)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    args: &ScenarioArgs,
    profile_source: &str,
    type_id: &str,
    steps: usize,
    reps: usize,
    seed: u64,
    selection: SelectionArg,
    out: &PathBuf,
) -> Result<(), AppError> {
    let scenario = load_scenario(args)?;
    if scenario.type_index(type_id).is_none() {
        return Err(AppError::new(3, "UnknownTypeId", format!("unknown type id `{type_id}`")));
    }
    let actual_profile = load_profile(&scenario, profile_source, selection.into())?;
    let baseline_scn = scenario.with_gamma_user(baseline_gamma::<f64>()).map_err(validation)?;
    let baseline = solve_equilibrium(&baseline_scn, selection.into(), &SolverConfig::default())
        .map_err(solver)?;
    let curve = regret_curve_for_profiles(
        &scenario,
        &actual_profile,
        &baseline_scn,
        &baseline.profile,
        steps,
        reps,
        seed,
        &SimOptions::default(),
    )
    .map_err(|e| AppError::new(4, kind_of(&e), e.to_string()))?;
    let row = curve
        .per_type
        .into_iter()
        .find(|r| r.type_id == type_id)
        .expect("type id checked above");
    let mut csv = String::from("t,value_actual,value_baseline,regret\n");
    for t in 0..steps {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            t + 1,
            sig17(row.value_actual[t]),
            sig17(row.value_baseline[t]),
            sig17(row.regret[t])
        );
    }
    write_out(Some(out), &csv)
}

fn cmd_verify(args: &ScenarioArgs, seed: u64, draws: usize, grid: usize) -> Result<(), AppError> {
    let scenario = load_scenario(args)?;
    let cfg = VerificationConfig { draws, grid, ..VerificationConfig::default() };
    let outcomes = run_verification(&scenario, seed, &cfg);
    println!(
        "{:<42} {:>7} {:>12}  {:<6} detail",
        "check", "cases", "max_error", "result"
    );
    let mut all_passed = true;
    for o in &outcomes {
        all_passed &= o.passed;
        println!(
            "{:<42} {:>7} {:>12.3e}  {:<6} {}",
            o.name,
            o.cases,
            o.max_error,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if all_passed {
        Ok(())
    } else {
        Err(AppError::new(5, "VerificationFailed", "one or more oracle checks failed"))
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Solve { scenario, selection, out } => {
            cmd_solve(scenario, *selection, out.as_ref())
        }
        Command::Thresholds { scenario, out } => cmd_thresholds(scenario, out.as_ref()),
        Command::Boundary { scenario, profile, grid, selection, out } => {
            cmd_boundary(scenario, profile, *grid, *selection, out.as_ref())
        }
        Command::Simulate { scenario, profile, type_id, steps, reps, seed, selection, out } => {
            cmd_simulate(scenario, profile, type_id, *steps, *reps, *seed, *selection, out)
        }
        Command::Verify { scenario, seed, draws, grid } => {
            cmd_verify(scenario, *seed, *draws, *grid)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = serde_json::json!({
                "code": err.code,
                "kind": err.kind,
                "message": err.message,
            });
            eprintln!("{line}");
            ExitCode::from(err.code)
        }
    }
}
