use std::path::{Path, PathBuf};

use proptest::prelude::*;

use linguomotor::bridge::Granularity;
use linguomotor::eval::{
    evaluate, load_fixture, parse_csv, render_report, render_report_named, EvalError, Expectation,
    Intended, ReportFormat, Thresholds,
};
use linguomotor::gateway::{run_script, run_script_text, GatewayConfig};
use linguomotor::sim::Robot;

fn asset(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

#[test]
fn bundled_fixtures_score_the_scripts() {
    for name in ["sawyer_table1", "turtlebot_table2"] {
        let run = run_script(
            &asset(&format!("scripts/{name}.txt")),
            GatewayConfig::default(),
        )
        .unwrap();
        let fixture = load_fixture(&asset(&format!("fixtures/{name}.json"))).unwrap();
        let report = evaluate(&run.events, &fixture, &Thresholds::default()).unwrap();
        let quantitative: Vec<_> = report
            .aggregates
            .iter()
            .filter(|a| a.label == Granularity::Quantitative)
            .collect();
        assert!(!quantitative.is_empty(), "{name}");
        for a in quantitative {
            assert_eq!(a.success_rate, 1.0, "{name} {}", a.metric);
        }
        assert!(!report.notes.is_empty());
    }
}

#[test]
fn csv_round_trip_recomputes_aggregates() {
    let run = run_script(
        &asset("scripts/turtlebot_table2.txt"),
        GatewayConfig::default(),
    )
    .unwrap();
    let fixture = load_fixture(&asset("fixtures/turtlebot_table2.json")).unwrap();
    let report = evaluate(&run.events, &fixture, &Thresholds::default()).unwrap();
    let rows = parse_csv(&render_report(&report, ReportFormat::Csv)).unwrap();
    assert_eq!(rows, report.csv_rows());
    for agg in &report.aggregates {
        let errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.label == agg.label.to_string() && r.metric == agg.metric)
            .filter_map(|r| r.error)
            .collect();
        assert_eq!(errs.len(), agg.count);
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!((mean - agg.mean).abs() <= 1e-12);
    }
}

#[test]
fn fixture_must_match_the_trace() {
    let run = run_script_text("move forward\n", "s", GatewayConfig::default(), None).unwrap();
    let exp = |pid: &str, robot: Robot, prompt: Option<&str>| Expectation {
        prompt_id: pid.into(),
        session: None,
        robot,
        intended: None,
        prompt: prompt.map(str::to_string),
        note: None,
        reference: None,
    };
    let th = Thresholds::default();
    assert!(evaluate(&run.events, &[exp("p1", Robot::Base, None)], &th).is_ok());
    for bad in [
        exp("p9", Robot::Base, None),
        exp("p1", Robot::Arm, None),
        exp("p1", Robot::Base, Some("move back")),
    ] {
        assert!(matches!(
            evaluate(&run.events, &[bad], &th),
            Err(EvalError::FixtureMismatch(_))
        ));
    }
}

#[test]
fn unreached_target_counts_as_failure() {
    // A clarification leaves nothing to measure.
    let run = run_script_text("wiggle\n", "s", GatewayConfig::default(), None).unwrap();
    let exp = Expectation {
        prompt_id: "p1".into(),
        session: None,
        robot: Robot::Base,
        intended: Some(Intended::Base {
            x: 1.0,
            y: 0.0,
            theta_deg: 0.0,
        }),
        prompt: None,
        note: None,
        reference: None,
    };
    let report = evaluate(&run.events, &[exp], &Thresholds::default()).unwrap();
    assert!(!report.trials[0].succeeded());
    assert_eq!(report.aggregates[0].success_rate, 0.0);
}

#[test]
fn unknown_format_name() {
    let report = evaluate(&[], &[], &Thresholds::default()).unwrap();
    assert!(matches!(
        render_report_named(&report, "xml"),
        Err(EvalError::UnknownFormat(_))
    ));
    assert!(render_report_named(&report, "md").is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Whatever the drive, the CSV written for it parses back unchanged.
    #[test]
    fn csv_rows_survive_rendering(v in 0.01f64..0.3, t in 0.1f64..3.0, x in -1.0f64..1.0) {
        let script = format!("move forward at a speed of {v} for {t} seconds\n");
        let run = run_script_text(&script, "s", GatewayConfig::default(), None).unwrap();
        let exp = Expectation {
            prompt_id: "p1".into(),
            session: None,
            robot: Robot::Base,
            intended: Some(Intended::Base { x, y: 0.0, theta_deg: 0.0 }),
            prompt: None,
            note: None,
            reference: None,
        };
        let report = evaluate(&run.events, &[exp], &Thresholds::default()).unwrap();
        let rows = parse_csv(&render_report(&report, ReportFormat::Csv)).unwrap();
        prop_assert_eq!(rows, report.csv_rows());
    }
}
