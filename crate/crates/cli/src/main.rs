use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sddcpf::bmatrix::{build_b, line_flows};
use sddcpf::case::load_case;
use sddcpf::recovery::{recover_state, reference_to_slack};
use sddcpf::scenario::{
    run_scenario_on, sweep_alpha, Experiment, Preset, ScenarioConfig, SparseMagnitude, Trend,
};
use sddcpf::subspace::{check_recovery_bound, check_tau, spectrum, DEFAULT_TAU};
use sddcpf::{InjectionVector, NetworkCase, SolverStatus, StateVector};

const SPECTRUM_COLUMNS: &str = "CSV columns:
  index           position in descending order, from 0
  singular_value  singular value of the susceptance matrix
  negligible      1 if singular_value <= tau * largest, else 0
A summary line with the rank and negligible count goes to stderr.";

const DETECT_COLUMNS: &str = "CSV columns (one row per bus):
  bus              external bus id
  p_measured       noisy injection (p.u.)
  error_true       injected sparse + dense error (p.u.)
  error_estimated  recovered error from l1 decomposition (p.u.)
  flagged          1 if |error_estimated| >= theta
  angle_true       true angle referenced to the slack bus (rad)
  angle_l1         angle recovered from the cleaned measurements (rad)
  angle_lse        angle recovered from the raw measurements (rad)
Detection uses trial 0 of the seeded noise streams. Exit code 2 if the
solver did not converge.";

const SCENARIO_COLUMNS: &str = "CSV columns (one row per trial):
  trial, support_size, detected, false_positives,
  detection_rate (NA when no error was injected),
  noise_estimate_error (||e_hat - e|| / max(1, ||e||)),
  state_error_l1, state_error_lse (relative coefficient errors),
  exact_recovery (noise_estimate_error <= 1e-6), solver_status
The resolved configuration is printed to stderr as JSON in CSV mode.";

const SWEEP_COLUMNS: &str = "CSV columns (one row per alpha):
  alpha, detection_rate, ci_low, ci_high (95% bootstrap interval),
  trials_with_support, mean_false_positives, failed_trials
The trend between consecutive rows goes to stderr in CSV mode.";

const FLOWS_COLUMNS: &str = "CSV columns (one row per in-service branch):
  branch     position among in-service branches, from 0
  from_bus, to_bus  external bus ids
  x          series reactance (p.u.)
  flow_true  flow from the true angles (p.u.)
  flow_l1    flow from the angles recovered after l1 cleaning (p.u.)
  flow_lse   flow from the least-squares angles (p.u.)";

/// Sparse bad-data detection for DC power-flow measurements.
#[derive(Parser, Debug)]
#[command(name = "sddcpf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Singular values of the susceptance matrix (default format: csv).
    #[command(after_help = SPECTRUM_COLUMNS)]
    Spectrum {
        /// Bundled case (ieee118, ieee300), MATPOWER .m file, or bus CSV.
        #[arg(long)]
        case: String,
        /// Relative threshold for negligible singular values.
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Single-trial error detection and state recovery (default format: json).
    #[command(after_help = DETECT_COLUMNS)]
    Detect {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Monte-Carlo detection run for a preset or case (default format: json).
    #[command(after_help = SCENARIO_COLUMNS)]
    RunScenario {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Detection rate across error probabilities (default format: csv).
    #[command(after_help = SWEEP_COLUMNS)]
    SweepAlpha {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated error probabilities [default: 0.03,0.08,0.15,
        /// or --alpha alone if given].
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[command(flatten)]
        output: Output,
    },
    /// Branch flows from true, l1-cleaned and least-squares angles (default
    /// format: csv).
    #[command(after_help = FLOWS_COLUMNS)]
    Flows {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Bundled case (ieee118, ieee300), MATPOWER .m file, or bus CSV.
    #[arg(long)]
    case: Option<String>,
    /// Scenario preset, I to VI. Other flags override its parameters.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Probability that a measurement carries a sparse error.
    #[arg(long)]
    alpha: Option<f64>,
    /// Relative threshold for the numerical rank [default: 0.01].
    #[arg(long)]
    tau: Option<f64>,
    /// Detection threshold on recovered errors, p.u. [default: 0.1].
    #[arg(long)]
    theta: Option<f64>,
    /// Standard deviation of dense Gaussian noise, p.u. [default: 0].
    #[arg(long)]
    awgn_sigma: Option<f64>,
    /// Lower bound of uniform sparse error magnitudes [default: -10].
    #[arg(long, allow_hyphen_values = true)]
    mag_lo: Option<f64>,
    /// Upper bound of uniform sparse error magnitudes [default: 10].
    #[arg(long, allow_hyphen_values = true)]
    mag_hi: Option<f64>,
    /// Number of Monte-Carlo trials [default: 100].
    #[arg(long)]
    trials: Option<usize>,
    /// Seed for all random draws [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Constant of the reported recovery bound [default: 1].
    #[arg(long)]
    c: Option<f64>,
    /// Failure probability of the reported recovery bound [default: 0.05].
    #[arg(long)]
    failure_prob: Option<f64>,
}

#[derive(Args, Debug)]
struct Output {
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: sddcpf::Error| e.to_string())
}

enum Failure {
    Input(String),
    NotConverged,
}

impl From<sddcpf::Error> for Failure {
    fn from(err: sddcpf::Error) -> Self {
        Failure::Input(err.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

impl ScenarioArgs {
    fn resolve(&self) -> CliResult<ScenarioConfig> {
        let mut cfg = match (self.preset, &self.case) {
            (Some(p), _) => p.config(),
            (None, Some(case)) => ScenarioConfig::for_case(case),
            (None, None) => {
                return Err(Failure::Input(
                    "one of --case or --preset is required".into(),
                ))
            }
        };
        if let Some(case) = &self.case {
            cfg.case_name.clone_from(case);
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(alpha => alpha, tau => tau, theta => theta, awgn_sigma => awgn_sigma,
             trials => trials, seed => seed, c => bound_c, failure_prob => failure_prob);
        if self.mag_lo.is_some() || self.mag_hi.is_some() {
            let (lo, hi) = match cfg.sparse_magnitude {
                SparseMagnitude::Uniform { lo, hi } => (lo, hi),
                _ => (-10.0, 10.0),
            };
            cfg.sparse_magnitude = SparseMagnitude::Uniform {
                lo: self.mag_lo.unwrap_or(lo),
                hi: self.mag_hi.unwrap_or(hi),
            };
        }
        cfg.validate().map_err(flag_error)?;
        Ok(cfg)
    }
}

/// Rewrites parameter names in validation errors to their flags.
fn flag_error(err: sddcpf::Error) -> Failure {
    match err {
        sddcpf::Error::InvalidParameter { name, reason } => {
            let flag = match name {
                "sparse_magnitude" => "mag-lo/--mag-hi".to_string(),
                other => other.replace('_', "-"),
            };
            Failure::Input(format!("invalid value for --{flag}: {reason}"))
        }
        other => other.into(),
    }
}

fn load(case: &str) -> CliResult<NetworkCase> {
    load_case(case).map_err(|e| Failure::Input(format!("--case {case}: {e}")))
}

fn emit(output: &Output, text: &str) -> CliResult<()> {
    match &output.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Input(format!("--out {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(value: &impl serde::Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    text
}

fn bit(flag: bool) -> u8 {
    u8::from(flag)
}

fn run_spectrum(case: &str, tau: f64, output: &Output) -> CliResult<()> {
    check_tau(tau).map_err(flag_error)?;
    let case = load(case)?;
    let values = spectrum(&build_b(&case))?;
    let largest = values.first().copied().unwrap_or(0.0);
    let negligible = |s: f64| s <= tau * largest;
    let negligible_count = values.iter().filter(|&&s| negligible(s)).count();
    let rank = values.len() - negligible_count;

    match output.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut text = String::from("index,singular_value,negligible\n");
            for (i, &s) in values.iter().enumerate() {
                let _ = writeln!(text, "{i},{s:?},{}", bit(negligible(s)));
            }
            eprintln!(
                "{}: {} singular values, rank {rank}, {negligible_count} negligible at tau = {tau:e}",
                case.name,
                values.len()
            );
            emit(output, &text)
        }
        Format::Json => emit(
            output,
            &to_json(&json!({
                "case": case.name,
                "bus_count": case.bus_count(),
                "tau": tau,
                "rank": rank,
                "negligible_count": negligible_count,
                "singular_values": values,
            })),
        ),
    }
}

struct SingleRun {
    cfg: ScenarioConfig,
    exp: Experiment,
    measurement: sddcpf::MeasurementSet,
    detection: sddcpf::scenario::Detection,
    angles_true: StateVector,
    angles_l1: StateVector,
    angles_lse: StateVector,
}

fn single_run(args: &ScenarioArgs) -> CliResult<SingleRun> {
    let cfg = args.resolve()?;
    let exp = Experiment::prepare(load(&cfg.case_name)?, cfg.tau, cfg.seed)?;
    let measurement = exp.measurement(&cfg, 0);
    let detection = exp.detect(&measurement, cfg.theta)?;
    let cleaned = InjectionVector(&measurement.p_noisy.0 - &detection.noise.epsilon_hat);
    let angles_l1 = recover_state(&exp.case, &exp.basis, &cleaned)?;
    let angles_lse = recover_state(&exp.case, &exp.basis, &measurement.p_noisy)?;
    let mut angles_true = exp.delta_true.clone();
    reference_to_slack(&exp.case, &mut angles_true);
    Ok(SingleRun {
        cfg,
        exp,
        measurement,
        detection,
        angles_true,
        angles_l1,
        angles_lse,
    })
}

fn run_detect(args: &ScenarioArgs, output: &Output) -> CliResult<()> {
    let run = single_run(args)?;
    let record = run.exp.score(0, &run.measurement, &run.detection);
    let noise = &run.detection.noise;
    let bus_count = run.exp.basis.bus_count();

    match output.format.unwrap_or(Format::Json) {
        Format::Csv => {
            let truth = run.measurement.total_error();
            let mut text = String::from(
                "bus,p_measured,error_true,error_estimated,flagged,angle_true,angle_l1,angle_lse\n",
            );
            for i in 0..bus_count {
                let _ = writeln!(
                    text,
                    "{},{:?},{:?},{:?},{},{:?},{:?},{:?}",
                    run.exp.case.buses[i].external_id,
                    run.measurement.p_noisy.0[i],
                    truth[i],
                    noise.epsilon_hat[i],
                    bit(run.detection.flagged.indices.binary_search(&i).is_ok()),
                    run.angles_true.0[i],
                    run.angles_l1.0[i],
                    run.angles_lse.0[i],
                );
            }
            eprintln!(
                "{}",
                serde_json::to_string(&run.cfg).expect("serializable config")
            );
            emit(output, &text)?;
        }
        Format::Json => {
            let k = record.support_size;
            let bound =
                check_recovery_bound(&run.exp.basis, k, run.cfg.bound_c, run.cfg.failure_prob)?;
            let ids = |v: &[usize]| -> Vec<i64> {
                v.iter()
                    .map(|&i| run.exp.case.buses[i].external_id)
                    .collect()
            };
            let report = json!({
                "config": run.cfg,
                "case": run.exp.case.name,
                "bus_count": bus_count,
                "rank": run.exp.basis.rank(),
                "complement_dim": run.exp.basis.complement_dim(),
                "mu_b": run.exp.mu_b,
                "recovery_bound": bound,
                "solver_status": noise.solver_status,
                "objective": noise.objective,
                "iterations": noise.iterations,
                "constraint_residual": noise.constraint_residual,
                "true_support": record.true_support,
                "support_flagged": record.support_flagged,
                "true_support_buses": ids(&record.true_support),
                "flagged_buses": ids(&record.support_flagged),
                "detected": record.detected,
                "false_positive_count": record.false_positive_count,
                "detection_rate": record.detection_rate,
                "noise_estimate_error": record.noise_estimate_error,
                "state_estimate_error_l1": record.state_estimate_error_l1,
                "state_estimate_error_lse": record.state_estimate_error_lse,
            });
            emit(output, &to_json(&report))?;
        }
    }
    if noise.solver_status == SolverStatus::Optimal {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

fn run_flows(args: &ScenarioArgs, output: &Output) -> CliResult<()> {
    let run = single_run(args)?;
    let case = &run.exp.case;
    let flows_true = line_flows(case, &run.angles_true)?;
    let flows_l1 = line_flows(case, &run.angles_l1)?;
    let flows_lse = line_flows(case, &run.angles_lse)?;
    let branches: Vec<(usize, &sddcpf::Branch)> = case
        .branches
        .iter()
        .enumerate()
        .filter(|(_, br)| br.in_service)
        .collect();
    let id = |i: usize| case.buses[i].external_id;

    match output.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut text = String::from("branch,from_bus,to_bus,x,flow_true,flow_l1,flow_lse\n");
            for (k, (pos, br)) in branches.iter().enumerate() {
                let _ = writeln!(
                    text,
                    "{pos},{},{},{:?},{:?},{:?},{:?}",
                    id(br.from_bus),
                    id(br.to_bus),
                    br.reactance_x,
                    flows_true[k],
                    flows_l1[k],
                    flows_lse[k]
                );
            }
            eprintln!(
                "{}",
                serde_json::to_string(&run.cfg).expect("serializable config")
            );
            emit(output, &text)
        }
        Format::Json => {
            let rows: Vec<Value> = branches
                .iter()
                .enumerate()
                .map(|(k, (pos, br))| {
                    json!({
                        "branch": pos,
                        "from_bus": id(br.from_bus),
                        "to_bus": id(br.to_bus),
                        "x": br.reactance_x,
                        "flow_true": flows_true[k],
                        "flow_l1": flows_l1[k],
                        "flow_lse": flows_lse[k],
                    })
                })
                .collect();
            emit(
                output,
                &to_json(&json!({
                    "config": run.cfg,
                    "solver_status": run.detection.noise.solver_status,
                    "flows": rows,
                })),
            )
        }
    }
}

fn run_scenario_cmd(args: &ScenarioArgs, output: &Output) -> CliResult<()> {
    let cfg = args.resolve()?;
    let report = run_scenario_on(load(&cfg.case_name)?, &cfg)?;
    match output.format.unwrap_or(Format::Json) {
        Format::Json => emit(output, &to_json(&report)),
        Format::Csv => {
            eprintln!(
                "{}",
                serde_json::to_string(&report.config).expect("serializable config")
            );
            emit(output, &report.to_csv())
        }
    }
}

fn run_sweep(args: &ScenarioArgs, alphas: Option<&[f64]>, output: &Output) -> CliResult<()> {
    let cfg = args.resolve()?;
    let alphas = match (alphas, args.alpha) {
        (Some(list), _) => list.to_vec(),
        (None, Some(a)) => vec![a],
        (None, None) => vec![0.03, 0.08, 0.15],
    };
    if let Some(bad) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Failure::Input(format!(
            "invalid value for --alphas: {bad} is outside [0, 1]"
        )));
    }
    let table = sweep_alpha(load(&cfg.case_name)?, &alphas, &cfg)?;
    match output.format.unwrap_or(Format::Csv) {
        Format::Json => emit(output, &to_json(&table)),
        Format::Csv => {
            let steps: Vec<String> = table
                .trend
                .iter()
                .map(|s| {
                    let verdict = match s.verdict {
                        Trend::Decrease => "decrease",
                        Trend::Tie => "tie",
                        Trend::Increase => "increase",
                        Trend::Undefined => "undefined",
                    };
                    format!("{} -> {}: {verdict}", s.from_alpha, s.to_alpha)
                })
                .collect();
            eprintln!(
                "trend: {} (nonincreasing: {})",
                if steps.is_empty() {
                    "n/a".to_string()
                } else {
                    steps.join(", ")
                },
                table.nonincreasing
            );
            emit(output, &table.to_csv())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Spectrum { case, tau, output } => run_spectrum(&case, tau, &output),
        Command::Detect { scenario, output } => run_detect(&scenario, &output),
        Command::RunScenario { scenario, output } => run_scenario_cmd(&scenario, &output),
        Command::SweepAlpha {
            scenario,
            alphas,
            output,
        } => run_sweep(&scenario, alphas.as_deref(), &output),
        Command::Flows { scenario, output } => run_flows(&scenario, &output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            if err.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{}", err.render());
                return ExitCode::from(1);
            }
            let text = err.to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NotConverged) => {
            eprintln!("error: l1 decomposition did not converge");
            ExitCode::from(2)
        }
    }
}
