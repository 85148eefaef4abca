use nalgebra::DVector;

use sddcpf::bmatrix::InjectionVector;
use sddcpf::case::load_case;
use sddcpf::scenario::{
    inject_noise, run_scenario, sweep_alpha, Preset, ScenarioConfig, SparseMagnitude, Trend,
};

fn small(case: &str, alpha: f64, trials: usize) -> ScenarioConfig {
    ScenarioConfig {
        alpha,
        trials,
        ..ScenarioConfig::for_case(case)
    }
}

#[test]
fn reruns_are_identical() {
    let cfg = Preset::I.config();
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn support_size_is_binomial() {
    let cfg = small("ieee300", 0.08, 1);
    let p = InjectionVector(DVector::zeros(300));
    let draws = 10_000;
    let total: usize = (0..draws)
        .map(|t| inject_noise(&p, &cfg, t).true_support.len())
        .sum();
    let mean = total as f64 / draws as f64;
    // Standard error of the mean of Binomial(300, 0.08).
    let se = (300.0 * 0.08 * 0.92 / draws as f64).sqrt();
    assert!((mean - 24.0).abs() <= 3.0 * se, "mean {mean}");
}

#[test]
fn constant_magnitude_is_applied_verbatim() {
    let cfg = ScenarioConfig {
        sparse_magnitude: SparseMagnitude::Constant { value: 2.5 },
        ..small("ieee118", 0.2, 1)
    };
    let m = inject_noise(&InjectionVector(DVector::zeros(118)), &cfg, 4);
    assert!(!m.true_support.is_empty());
    for &i in &m.true_support {
        assert_eq!(m.true_noise[i], 2.5);
    }
    assert_eq!(m.total_error(), m.true_noise);
}

#[test]
fn report_statistics_are_bounded() {
    let report = run_scenario(&small("ieee118", 0.08, 20)).unwrap();
    assert_eq!(report.records.len(), 20);
    let rate = report.detection_rate.unwrap();
    assert!((0.0..=1.0).contains(&rate));
    for r in &report.records {
        assert!(r.false_positive_count <= 118 - r.support_size);
        assert!(r.detected <= r.support_size);
        if let Some(d) = r.detection_rate {
            assert!((0.0..=1.0).contains(&d));
        }
    }
}

#[test]
fn zero_alpha_has_no_rate() {
    let report = run_scenario(&small("ieee118", 0.0, 5)).unwrap();
    assert_eq!(report.detection_rate, None);
    assert_eq!(report.trials_with_support, 0);
    assert!(report.records.iter().all(|r| r.detection_rate.is_none()));
    let csv = report.to_csv();
    assert!(csv.starts_with("trial,support_size,detected,"));
    assert_eq!(csv.lines().count(), 6);
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(4) == Some("NA")));
}

#[test]
fn single_alpha_sweep_matches_scenario() {
    let cfg = small("ieee118", 0.08, 30);
    let report = run_scenario(&cfg).unwrap();
    let table = sweep_alpha(load_case("ieee118").unwrap(), &[0.08], &cfg).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].detection_rate, report.detection_rate);
    assert!(table.trend.is_empty());
    assert!(table.nonincreasing);
}

#[test]
fn sweep_with_empty_row_is_undefined() {
    let cfg = small("ieee118", 0.08, 10);
    let table = sweep_alpha(load_case("ieee118").unwrap(), &[0.0, 0.08], &cfg).unwrap();
    assert_eq!(table.trend[0].verdict, Trend::Undefined);
    assert!(table
        .to_csv()
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("0.0,NA,NA,NA,0,"));
    assert!(sweep_alpha(load_case("ieee118").unwrap(), &[], &cfg).is_err());
}

#[test]
fn sparse_regime_recovers_exactly() {
    let report = run_scenario(&small("ieee300", 0.005, 40)).unwrap();
    assert_eq!(report.failed_trials, 0);
    assert!(
        report.exact_recovery_fraction >= 0.95,
        "{}",
        report.exact_recovery_fraction
    );
}
