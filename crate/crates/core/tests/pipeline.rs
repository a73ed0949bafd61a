use std::fs;

use gslope::bench::{
    build_problem, emit_report, make_synthetic, run_experiment, write_rows_csv, Arms, DataSource, ExperimentSpec,
    ReportFormat, CSV_HEADER,
};
use gslope::data::{parse_libsvm, write_libsvm};
use gslope::solvers::{apgd_solve, Algorithm};
use gslope::SolverConfig;

fn small_spec(solver: Algorithm, seed: u64) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(DataSource::Synthetic { n: 40, d0: 60, k: 3, sigma: 0.3 }, solver);
    spec.trials = 2;
    spec.seed = seed;
    spec
}

#[test]
fn screened_and_unscreened_reports_agree() {
    let mut spec = ExperimentSpec::new(DataSource::Synthetic { n: 100, d0: 500, k: 10, sigma: 0.5 }, Algorithm::Apgd);
    spec.trials = 3;
    let report = run_experiment(&spec).unwrap();
    assert_eq!(report.arms[0].screening, "off");
    assert_eq!(report.arms[0].rel_time_pct, 100.0);
    assert!(report.max_solution_diff.unwrap() <= 1e-5);
    assert!(report.arms[1].speedup >= 1.0, "speedup {}", report.arms[1].speedup);
    assert_eq!(report.rows.len(), 6);
}

#[test]
fn off_only_report_has_no_rates() {
    let mut spec = small_spec(Algorithm::Apgd, 1);
    spec.arms = Arms::Off;
    let report = run_experiment(&spec).unwrap();
    assert!(report.trace.is_none());
    assert!(report.max_solution_diff.is_none());
    assert!(report.arms.iter().all(|a| a.final_screening_rate.is_none()));
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&[report], ReportFormat::Json, dir.path()).unwrap();
    assert_eq!(written.len(), 1);
    let json = fs::read_to_string(&written[0]).unwrap();
    assert!(!json.contains("final_screening_rate"));
}

#[test]
fn csv_round_trip() {
    let report = run_experiment(&small_spec(Algorithm::Spgd, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(std::slice::from_ref(&report), ReportFormat::Csv, dir.path()).unwrap();
    assert_eq!(written.len(), 2);
    assert!(written[1].ends_with(format!("{}_trace.csv", report.spec_id)));

    let mut reader = csv::Reader::from_path(&written[0]).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>().join(","), CSV_HEADER);
    let parsed: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(parsed.len(), report.rows.len());
    for (rec, row) in parsed.iter().zip(&report.rows) {
        assert_eq!(rec[0], row.spec_id);
        assert_eq!(rec[2], row.screening);
        assert_eq!(rec[3].parse::<usize>().unwrap(), row.trial);
        assert_eq!(rec[4].parse::<f64>().unwrap(), row.wall_s);
        assert_eq!(rec[5].parse::<usize>().unwrap(), row.iters);
        assert_eq!(rec[6].parse::<f64>().unwrap(), row.gap);
        assert_eq!(rec[7].parse::<usize>().unwrap(), row.active_groups);
        assert_eq!(rec[8].parse::<f64>().unwrap(), row.rel_time_pct);
    }

    let mut trace = csv::Reader::from_path(&written[1]).unwrap();
    assert_eq!(trace.headers().unwrap().iter().collect::<Vec<_>>(), ["iter", "active_groups", "gap", "rate"]);
    let rates: Vec<f64> = trace.records().map(|r| r.unwrap()[3].parse().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn json_holds_one_object_per_spec() {
    let reports = vec![
        run_experiment(&small_spec(Algorithm::Apgd, 1)).unwrap(),
        run_experiment(&small_spec(Algorithm::Spgd, 2)).unwrap(),
    ];
    let dir = tempfile::tempdir().unwrap();
    emit_report(&reports, ReportFormat::Json, dir.path()).unwrap();
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let items = value.as_array().unwrap();
    assert_eq!(items.len(), 2);
    for item in items {
        for key in ["spec_id", "solver", "n", "d", "m", "decouple_s", "arms", "rows"] {
            assert!(item.get(key).is_some(), "missing {key}");
        }
        assert_eq!(item["arms"][0]["rel_time_pct"], 100.0);
    }
}

#[test]
fn empty_report_list_gives_header_only() {
    let mut buf = Vec::new();
    write_rows_csv(&[], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CSV_HEADER);
}

#[test]
fn synthetic_libsvm_round_trip() {
    let s = make_synthetic(12, 7, 2, 0.1, 5).unwrap();
    let mut buf = Vec::new();
    write_libsvm(&s.dataset, &mut buf).unwrap();
    let back = parse_libsvm(buf.as_slice(), Some(7)).unwrap();
    assert_eq!(back.x.shape(), (12, 7));
    assert!((back.x - &s.dataset.x).amax() < 1e-12);
    assert!((back.y - &s.dataset.y).amax() < 1e-12);
}

#[test]
fn moderate_lambda_keeps_true_support() {
    // Probabilistic smoke check: the groups carrying the true features stay active.
    let mut spec = ExperimentSpec::new(DataSource::Synthetic { n: 200, d0: 50, k: 5, sigma: 0.1 }, Algorithm::Apgd);
    spec.seed = 8;
    spec.standardize = true;
    let built = build_problem(&spec).unwrap();
    let run = apgd_solve(&built.decoupled, &SolverConfig::default().with_gap_tol(1e-8)).unwrap();
    let p = &built.decoupled;
    // Group `i` holds the replicas of original feature `i`.
    for &g in built.support.as_ref().unwrap() {
        assert!(p.block(g).any(|j| run.b_final[j] != 0.0), "true feature {g} dropped");
    }
}
