//! Noise scenarios, seeded Monte-Carlo trials and detection scoring.
//!
//! Every trial draws from its own ChaCha stream derived from
//! `(seed, trial_index)`, so results do not depend on execution order and
//! trials run in parallel.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bmatrix::{build_b, injections, InjectionVector, StateVector};
use crate::case::{load_case, NetworkCase};
use crate::error::{invalid, Error, Result};
use crate::recovery::{
    flag_support, l1_regress, lse, CoefficientEstimate, FlaggedSupport, NoiseEstimate,
    SolverStatus, DEFAULT_THETA,
};
use crate::subspace::{
    check_recovery_bound, check_tau, coherence, decompose, RecoveryCondition, SubspaceBasis,
    DEFAULT_BOUND_C, DEFAULT_FAILURE_PROB, DEFAULT_TAU,
};

/// Relative noise error at or below which a trial counts as exact recovery.
pub const EXACT_RECOVERY_TOL: f64 = 1e-6;
/// Standard deviation of synthetic angles when the case has none.
pub const SYNTH_ANGLE_SIGMA: f64 = 0.1;

const BOOTSTRAP_RESAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SparseMagnitude {
    Uniform { lo: f64, hi: f64 },
    Gaussian { sigma: f64 },
    Constant { value: f64 },
}

impl SparseMagnitude {
    fn validate(&self) -> Result<()> {
        match *self {
            SparseMagnitude::Uniform { lo, hi } if lo.is_nan() || hi.is_nan() || lo >= hi => {
                Err(invalid(
                    "sparse_magnitude",
                    format!("uniform bounds need lo < hi, got [{lo}, {hi}]"),
                ))
            }
            SparseMagnitude::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(invalid(
                    "sparse_magnitude",
                    format!("sigma must be positive, got {sigma}"),
                ))
            }
            SparseMagnitude::Constant { value } if !value.is_finite() => {
                Err(invalid("sparse_magnitude", "constant must be finite"))
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            SparseMagnitude::Uniform { lo, hi } => rng.random_range(lo..hi),
            SparseMagnitude::Gaussian { sigma } => {
                Normal::new(0.0, sigma).map_or(0.0, |n| n.sample(rng))
            }
            SparseMagnitude::Constant { value } => value,
        }
    }
}

/// The six evaluation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Preset {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::I,
        Preset::II,
        Preset::III,
        Preset::IV,
        Preset::V,
        Preset::VI,
    ];

    pub fn config(self) -> ScenarioConfig {
        let base = |case: &str, alpha: f64| ScenarioConfig {
            preset: Some(self),
            alpha,
            ..ScenarioConfig::for_case(case)
        };
        match self {
            Preset::I => base("ieee118", 0.03),
            Preset::II => base("ieee118", 0.08),
            Preset::III => base("ieee118", 0.15),
            Preset::IV => ScenarioConfig {
                note: Some(
                    "alpha follows the figure caption (0.03); the accompanying text states 0.08"
                        .into(),
                ),
                ..base("ieee300", 0.03)
            },
            Preset::V => ScenarioConfig {
                awgn_sigma: 0.01,
                ..base("ieee300", 0.02)
            },
            Preset::VI => ScenarioConfig {
                sparse_magnitude: SparseMagnitude::Uniform {
                    lo: -100.0,
                    hi: 100.0,
                },
                ..base("ieee300", 0.08)
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Preset::I),
            "II" | "2" => Ok(Preset::II),
            "III" | "3" => Ok(Preset::III),
            "IV" | "4" => Ok(Preset::IV),
            "V" | "5" => Ok(Preset::V),
            "VI" | "6" => Ok(Preset::VI),
            _ => Err(invalid(
                "preset",
                format!("expected one of I..VI, got `{s}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub preset: Option<Preset>,
    pub case_name: String,
    /// Probability that each measurement carries a sparse error.
    pub alpha: f64,
    pub sparse_magnitude: SparseMagnitude,
    /// Dense Gaussian noise standard deviation in p.u.; 0 disables it.
    pub awgn_sigma: f64,
    pub theta: f64,
    pub tau: f64,
    pub trials: usize,
    pub seed: u64,
    /// Constant `c` of the reported recovery bound.
    pub bound_c: f64,
    /// Failure probability of the reported recovery bound.
    pub failure_prob: f64,
    pub note: Option<String>,
}

impl ScenarioConfig {
    pub fn for_case(case_name: &str) -> Self {
        ScenarioConfig {
            preset: None,
            case_name: case_name.to_string(),
            alpha: 0.03,
            sparse_magnitude: SparseMagnitude::Uniform {
                lo: -10.0,
                hi: 10.0,
            },
            awgn_sigma: 0.0,
            theta: DEFAULT_THETA,
            tau: DEFAULT_TAU,
            trials: 100,
            seed: 0,
            bound_c: DEFAULT_BOUND_C,
            failure_prob: DEFAULT_FAILURE_PROB,
            note: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(
                "alpha",
                format!("must lie in [0, 1], got {}", self.alpha),
            ));
        }
        if !(self.awgn_sigma >= 0.0 && self.awgn_sigma.is_finite()) {
            return Err(invalid(
                "awgn_sigma",
                format!("must be >= 0, got {}", self.awgn_sigma),
            ));
        }
        if self.theta.is_nan() || self.theta < 0.0 {
            return Err(invalid(
                "theta",
                format!("must be >= 0, got {}", self.theta),
            ));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if !(self.bound_c > 0.0 && self.bound_c.is_finite()) {
            return Err(invalid(
                "c",
                format!("must be positive, got {}", self.bound_c),
            ));
        }
        if !(self.failure_prob > 0.0 && self.failure_prob < 1.0) {
            return Err(invalid(
                "failure_prob",
                format!("must lie in (0, 1), got {}", self.failure_prob),
            ));
        }
        check_tau(self.tau)?;
        self.sparse_magnitude.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub p_true: InjectionVector,
    pub p_noisy: InjectionVector,
    pub true_support: Vec<usize>,
    /// Sparse error component.
    pub true_noise: DVector<f64>,
    /// Dense Gaussian component (zero when AWGN is off).
    pub awgn: DVector<f64>,
}

impl MeasurementSet {
    /// Same draws with the sparse component multiplied by `scale`.
    pub fn with_sparse_scale(&self, scale: f64) -> Self {
        let true_noise = &self.true_noise * scale;
        let p_noisy = InjectionVector(&self.p_true.0 + &true_noise + &self.awgn);
        MeasurementSet {
            true_noise,
            p_noisy,
            ..self.clone()
        }
    }

    /// Total measurement error `p_noisy - p_true`.
    pub fn total_error(&self) -> DVector<f64> {
        &self.true_noise + &self.awgn
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// True state and noiseless measurements.
///
/// Angles come from the case file unless they are all zero, in which case
/// they are drawn i.i.d. N(0, 0.1²) from `seed`. The injections are the part
/// of `B δ` inside col(Q), the signal space the estimator models; at exact
/// rank that is `B δ` itself.
pub fn synth_truth(
    case: &NetworkCase,
    basis: &SubspaceBasis,
    seed: u64,
) -> Result<(StateVector, InjectionVector)> {
    let mut angles = case.base_angles();
    if angles.iter().all(|&a| a == 0.0) {
        let mut rng = rng_for(seed, 0);
        let normal = Normal::new(0.0, SYNTH_ANGLE_SIGMA).expect("positive sigma");
        angles.iter_mut().for_each(|a| *a = normal.sample(&mut rng));
    }
    let delta = StateVector::from_slice(&angles);
    let raw = injections(&build_b(case), &delta)?;
    Ok((delta, InjectionVector(basis.project(&raw.0))))
}

/// Draws the sparse Bernoulli(α) error and optional AWGN for one trial.
pub fn inject_noise(
    p_true: &InjectionVector,
    cfg: &ScenarioConfig,
    trial_index: usize,
) -> MeasurementSet {
    let n = p_true.0.len();
    let mut rng = rng_for(cfg.seed, trial_index as u64 + 1);
    let mut true_noise = DVector::zeros(n);
    for i in 0..n {
        if rng.random::<f64>() < cfg.alpha {
            true_noise[i] = cfg.sparse_magnitude.sample(&mut rng);
        }
    }
    let mut awgn = DVector::zeros(n);
    if cfg.awgn_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.awgn_sigma).expect("validated sigma");
        awgn.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
    }
    let true_support = (0..n).filter(|&i| true_noise[i] != 0.0).collect();
    MeasurementSet {
        p_noisy: InjectionVector(&p_true.0 + &true_noise + &awgn),
        p_true: p_true.clone(),
        true_support,
        true_noise,
        awgn,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub support_size: usize,
    pub detected: usize,
    pub false_positive_count: usize,
    /// `None` when the trial injected no sparse error.
    pub detection_rate: Option<f64>,
    /// `‖ε̂ - ε‖₂ / max(1, ‖ε‖₂)`.
    pub noise_estimate_error: f64,
    pub exact_recovery: bool,
    pub state_estimate_error_l1: f64,
    pub state_estimate_error_lse: f64,
    pub solver_status: SolverStatus,
    pub true_support: Vec<usize>,
    pub support_flagged: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub l1: CoefficientEstimate,
    pub lse: CoefficientEstimate,
    pub noise: NoiseEstimate,
    pub flagged: FlaggedSupport,
}

/// A case decomposed once and shared by all trials.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub case: NetworkCase,
    pub basis: SubspaceBasis,
    pub delta_true: StateVector,
    pub p_true: InjectionVector,
    /// Signal coefficients `Qᵀ p_true`.
    pub a_true: DVector<f64>,
    pub mu_b: f64,
}

impl Experiment {
    pub fn prepare(case: NetworkCase, tau: f64, seed: u64) -> Result<Self> {
        let basis = decompose(&build_b(&case), tau)?;
        let (delta_true, p_true) = synth_truth(&case, &basis, seed)?;
        let a_true = basis.q().transpose() * &p_true.0;
        let mu_b = coherence(&basis)?.mu_b;
        Ok(Experiment {
            case,
            basis,
            delta_true,
            p_true,
            a_true,
            mu_b,
        })
    }

    pub fn measurement(&self, cfg: &ScenarioConfig, trial: usize) -> MeasurementSet {
        inject_noise(&self.p_true, cfg, trial)
    }

    /// Runs the ℓ1 and least-squares estimators on one measurement set.
    pub fn detect(&self, m: &MeasurementSet, theta: f64) -> Result<Detection> {
        let (l1, noise) = l1_regress(&self.basis, &m.p_noisy)?;
        let lse = lse(&self.basis, &m.p_noisy)?;
        let flagged = flag_support(&noise, theta)?;
        Ok(Detection {
            l1,
            lse,
            noise,
            flagged,
        })
    }

    /// Scores a detection against the injected errors.
    pub fn score(&self, trial: usize, m: &MeasurementSet, det: &Detection) -> TrialRecord {
        let detected = det
            .flagged
            .indices
            .iter()
            .filter(|i| m.true_support.binary_search(i).is_ok())
            .count();
        let support_size = m.true_support.len();
        let truth = m.total_error();
        let noise_estimate_error = (&det.noise.epsilon_hat - &truth).norm() / truth.norm().max(1.0);
        let a_norm = self.a_true.norm().max(f64::MIN_POSITIVE);
        TrialRecord {
            trial,
            support_size,
            detected,
            false_positive_count: det.flagged.indices.len() - detected,
            detection_rate: (support_size > 0).then(|| detected as f64 / support_size as f64),
            noise_estimate_error,
            exact_recovery: noise_estimate_error <= EXACT_RECOVERY_TOL,
            state_estimate_error_l1: (&det.l1.a_hat - &self.a_true).norm() / a_norm,
            state_estimate_error_lse: (&det.lse.a_hat - &self.a_true).norm() / a_norm,
            solver_status: det.noise.solver_status,
            true_support: m.true_support.clone(),
            support_flagged: det.flagged.indices.clone(),
        }
    }

    pub fn evaluate(&self, trial: usize, m: &MeasurementSet, theta: f64) -> Result<TrialRecord> {
        Ok(self.score(trial, m, &self.detect(m, theta)?))
    }

    pub fn run_trial(&self, cfg: &ScenarioConfig, trial: usize) -> Result<TrialRecord> {
        self.evaluate(trial, &self.measurement(cfg, trial), cfg.theta)
    }

    /// All trials of `cfg` against this decomposition, in trial order.
    pub fn run(&self, cfg: &ScenarioConfig) -> Result<DetectionReport> {
        cfg.validate()?;
        let records = (0..cfg.trials)
            .into_par_iter()
            .map(|t| self.run_trial(cfg, t))
            .collect::<Result<Vec<_>>>()?;
        let expected_k = (cfg.alpha * self.basis.bus_count() as f64).round() as usize;
        let bound = check_recovery_bound(&self.basis, expected_k, cfg.bound_c, cfg.failure_prob)?;
        Ok(DetectionReport::aggregate(
            cfg.clone(),
            self,
            bound,
            records,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub config: ScenarioConfig,
    pub case: String,
    pub bus_count: usize,
    pub rank: usize,
    pub complement_dim: usize,
    pub mu_b: f64,
    /// Sufficient bound evaluated at the expected sparsity `round(α ℵ)`.
    pub recovery_bound: RecoveryCondition,
    pub trials_run: usize,
    /// Trials whose solver did not reach optimality; excluded below.
    pub failed_trials: usize,
    pub trials_with_support: usize,
    /// Mean per-trial detection rate over trials with a nonempty support.
    pub detection_rate: Option<f64>,
    pub mean_false_positives: f64,
    pub noise_estimate_error: f64,
    pub state_estimate_error_l1: f64,
    pub state_estimate_error_lse: f64,
    pub exact_recovery_fraction: f64,
    /// Flagged indices of trial 0, for single-trial plots.
    pub support_flagged: Vec<usize>,
    pub records: Vec<TrialRecord>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

impl DetectionReport {
    fn aggregate(
        config: ScenarioConfig,
        exp: &Experiment,
        recovery_bound: RecoveryCondition,
        records: Vec<TrialRecord>,
    ) -> Self {
        let ok: Vec<&TrialRecord> = records
            .iter()
            .filter(|r| r.solver_status == SolverStatus::Optimal)
            .collect();
        let field = |f: fn(&TrialRecord) -> f64| mean(ok.iter().map(|r| f(r))).unwrap_or(f64::NAN);
        DetectionReport {
            case: exp.case.name.clone(),
            bus_count: exp.basis.bus_count(),
            rank: exp.basis.rank(),
            complement_dim: exp.basis.complement_dim(),
            mu_b: exp.mu_b,
            recovery_bound,
            trials_run: records.len(),
            failed_trials: records.len() - ok.len(),
            trials_with_support: ok.iter().filter(|r| r.detection_rate.is_some()).count(),
            detection_rate: mean(ok.iter().filter_map(|r| r.detection_rate)),
            mean_false_positives: field(|r| r.false_positive_count as f64),
            noise_estimate_error: field(|r| r.noise_estimate_error),
            state_estimate_error_l1: field(|r| r.state_estimate_error_l1),
            state_estimate_error_lse: field(|r| r.state_estimate_error_lse),
            exact_recovery_fraction: field(|r| f64::from(u8::from(r.exact_recovery))),
            support_flagged: records
                .first()
                .map(|r| r.support_flagged.clone())
                .unwrap_or_default(),
            config,
            records,
        }
    }

    /// Per-trial rows: trial, |support|, detected, false positives, detection
    /// rate (`NA` when undefined), noise error, ℓ1 and LSE state errors,
    /// exact-recovery flag and solver status.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "trial,support_size,detected,false_positives,detection_rate,noise_estimate_error,state_error_l1,state_error_lse,exact_recovery,solver_status\n",
        );
        for r in &self.records {
            let rate = r
                .detection_rate
                .map_or_else(|| "NA".to_string(), |v| format!("{v:?}"));
            let status = match r.solver_status {
                SolverStatus::Optimal => "optimal",
                SolverStatus::MaxIterations => "max_iterations",
                SolverStatus::Infeasible => "infeasible",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:?},{:?},{:?},{},{}",
                r.trial,
                r.support_size,
                r.detected,
                r.false_positive_count,
                rate,
                r.noise_estimate_error,
                r.state_estimate_error_l1,
                r.state_estimate_error_lse,
                r.exact_recovery,
                status
            );
        }
        out
    }

    pub fn per_trial_rates(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.solver_status == SolverStatus::Optimal)
            .filter_map(|r| r.detection_rate)
            .collect()
    }
}

/// Loads `cfg.case_name`, decomposes it and runs all trials.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<DetectionReport> {
    cfg.validate()?;
    let case = load_case(&cfg.case_name)?;
    run_scenario_on(case, cfg)
}

pub fn run_scenario_on(case: NetworkCase, cfg: &ScenarioConfig) -> Result<DetectionReport> {
    cfg.validate()?;
    Experiment::prepare(case, cfg.tau, cfg.seed)?.run(cfg)
}

/// Percentile bootstrap interval for the mean, seeded for reproducibility.
pub fn bootstrap_mean_ci(values: &[f64], level: f64, seed: u64) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut rng = rng_for(seed, u64::MAX);
    let n = values.len();
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| {
        means
            [((q * (BOOTSTRAP_RESAMPLES - 1) as f64).round() as usize).min(BOOTSTRAP_RESAMPLES - 1)]
    };
    Some((at(tail), at(1.0 - tail)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub detection_rate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub trials_with_support: usize,
    pub mean_false_positives: f64,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    /// Rate drops and the 95% intervals do not overlap.
    Decrease,
    /// Intervals overlap.
    Tie,
    /// Rate rises and the intervals do not overlap.
    Increase,
    /// One side has no defined rate.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendStep {
    pub from_alpha: f64,
    pub to_alpha: f64,
    pub verdict: Trend,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub config: ScenarioConfig,
    pub rows: Vec<SweepRow>,
    pub trend: Vec<TrendStep>,
    /// No step is a significant increase.
    pub nonincreasing: bool,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:?}"));
        let mut out = String::from(
            "alpha,detection_rate,ci_low,ci_high,trials_with_support,mean_false_positives,failed_trials\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:?},{},{},{},{},{:?},{}",
                r.alpha,
                opt(r.detection_rate),
                opt(r.ci_low),
                opt(r.ci_high),
                r.trials_with_support,
                r.mean_false_positives,
                r.failed_trials
            );
        }
        out
    }
}

fn classify(a: &SweepRow, b: &SweepRow) -> Trend {
    match (a.ci_low, a.ci_high, b.ci_low, b.ci_high) {
        (Some(alo), Some(ahi), Some(blo), Some(bhi)) => {
            if alo > bhi {
                Trend::Decrease
            } else if blo > ahi {
                Trend::Increase
            } else {
                Trend::Tie
            }
        }
        _ => Trend::Undefined,
    }
}

/// Runs the template at each α (same seed derivation) and summarizes the
/// trend between consecutive rows with 95% bootstrap intervals.
pub fn sweep_alpha(
    case: NetworkCase,
    alphas: &[f64],
    template: &ScenarioConfig,
) -> Result<SweepTable> {
    if alphas.is_empty() {
        return Err(invalid("alphas", "need at least one value"));
    }
    template.validate()?;
    let exp = Experiment::prepare(case, template.tau, template.seed)?;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let cfg = ScenarioConfig {
            alpha,
            ..template.clone()
        };
        let report = exp.run(&cfg)?;
        let ci = bootstrap_mean_ci(&report.per_trial_rates(), 0.95, template.seed);
        rows.push(SweepRow {
            alpha,
            detection_rate: report.detection_rate,
            ci_low: ci.map(|c| c.0),
            ci_high: ci.map(|c| c.1),
            trials_with_support: report.trials_with_support,
            mean_false_positives: report.mean_false_positives,
            failed_trials: report.failed_trials,
        });
    }
    let trend: Vec<TrendStep> = rows
        .windows(2)
        .map(|w| TrendStep {
            from_alpha: w[0].alpha,
            to_alpha: w[1].alpha,
            verdict: classify(&w[0], &w[1]),
        })
        .collect();
    let nonincreasing = trend.iter().all(|s| s.verdict != Trend::Increase);
    Ok(SweepTable {
        config: template.clone(),
        rows,
        trend,
        nonincreasing,
    })
}
