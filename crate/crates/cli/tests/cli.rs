use std::path::Path;
use std::process::{Command, Output};

use toric_core::io::{read_rows_from_path, write_rows, FitReport, ResultRow};
use toric_core::montecarlo::{FailureEstimate, TrialConfig};
use toric_core::scaling::ThresholdParams;

fn toric(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toric"))
        .args(args)
        .env_remove("TORIC_WORKERS")
        .env_remove("TORIC_SEED")
        .env_remove("TORIC_TAU")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn synthetic_rows(cells: &[(usize, f64, f64)], trials: u64) -> Vec<ResultRow> {
    cells
        .iter()
        .map(|&(size, p, p_fail)| {
            let failures = (p_fail * trials as f64).round() as u64;
            let cfg = TrialConfig { size, p, trials, tau: 0.02, master_seed: 0 };
            ResultRow::new(&cfg, &FailureEstimate::new(trials, failures), 0.0)
        })
        .collect()
}

fn write_csv(path: &Path, rows: &[ResultRow]) {
    write_rows(std::fs::File::create(path).unwrap(), rows).unwrap();
}

#[test]
fn simulate_is_reproducible_and_validates() {
    let a = toric(&["simulate", "--L", "5", "--p", "0.05", "--N", "3000", "--seed", "1"]);
    let b = toric(&["simulate", "--L", "5", "--p", "0.05", "--N", "3000", "--seed", "1", "--workers", "2"]);
    assert!(a.status.success());
    let parse = |o: &Output| toric_core::io::read_rows(o.stdout.as_slice()).unwrap();
    let (ra, rb) = (parse(&a), parse(&b));
    assert_eq!(ra.len(), 1);
    assert_eq!(ra[0].trials, 3000);
    assert!(ra[0].same_result(&rb[0]));

    let even = toric(&["simulate", "--L", "4", "--p", "0.05", "--N", "10"]);
    assert_eq!(even.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&even.stderr).contains("odd"));
    let high = toric(&["simulate", "--L", "5", "--p", "0.6", "--N", "10"]);
    assert_eq!(high.status.code(), Some(2));
}

#[test]
fn sweep_resumes_without_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let out_s = out.to_str().unwrap();
    let args = ["sweep", "--L", "3,5", "--p-range", "0.05:0.07:0.01", "--N", "500", "--seed", "4", "--out", out_s];
    assert!(toric(&args).status.success());
    let full = read_rows_from_path(&out).unwrap();
    assert_eq!(full.len(), 6);
    assert_eq!(full[1].p, 0.06);
    let seeds: std::collections::HashSet<u64> = full.iter().map(|r| r.master_seed).collect();
    assert_eq!(seeds.len(), 6);

    // Re-running is a no-op.
    assert!(toric(&args).status.success());
    assert_eq!(read_rows_from_path(&out).unwrap().len(), 6);

    // Drop the last two cells, as after an interrupt, and resume.
    let text = std::fs::read_to_string(&out).unwrap();
    let kept: Vec<&str> = text.lines().take(5).collect();
    std::fs::write(&out, kept.join("\n") + "\n").unwrap();
    let mut with_workers = args.to_vec();
    with_workers.extend(["--workers", "3"]);
    assert!(toric(&with_workers).status.success());
    let resumed = read_rows_from_path(&out).unwrap();
    assert_eq!(resumed.len(), 6);
    for (a, b) in full.iter().zip(&resumed) {
        assert!(a.same_result(b));
    }
}

#[test]
fn environment_and_flag_precedence() {
    let o = Command::new(env!("CARGO_BIN_EXE_toric"))
        .args(["--dump-config", "exact", "--L", "3", "--p", "0.1"])
        .env("TORIC_SEED", "9")
        .env("TORIC_TAU", "0.01")
        .env_remove("TORIC_WORKERS")
        .output()
        .unwrap();
    let s = stdout(&o);
    assert!(s.contains("seed = 9") && s.contains("tau = 0.01") && s.contains("workers = auto"), "{s}");
    let o = Command::new(env!("CARGO_BIN_EXE_toric"))
        .args(["--dump-config", "--seed", "4", "exact", "--L", "3", "--p", "0.1"])
        .env("TORIC_SEED", "9")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("seed = 4"));
    let o = toric(&["--dump-config", "exact", "--L", "3", "--p", "0.1"]);
    assert!(stdout(&o).contains("seed = 1") && stdout(&o).contains("tau = 0.02"));
}

#[test]
fn exact_counts() {
    let o = toric(&["exact", "--L", "3", "--p", "0.05"]);
    let s = stdout(&o);
    assert!(s.lines().any(|l| l == "2,18"), "{s}");
    assert!(s.contains("P_fail = 0.0612625649504030"));
    let o = toric(&["exact", "--L", "5", "--p", "0.001", "--max-weight", "3"]);
    let s = stdout(&o);
    let w3: u64 = s.lines().find_map(|l| l.strip_prefix("3,")).unwrap().parse().unwrap();
    assert!(w3 >= 100);
    let zero = toric(&["exact", "--L", "3", "--p", "0"]);
    assert!(stdout(&zero).contains("P_fail = 0\n"));
    let big = toric(&["exact", "--L", "5", "--p", "0.01"]);
    assert_eq!(big.status.code(), Some(2));
}

#[test]
fn predict_classifies_regimes() {
    let s = stdout(&toric(&["predict", "--L", "11", "--p", "0.08"]));
    assert!(s.contains("regime = UniversalScaling"));
    assert!(s.contains("P_fail_ush = 0.0825134282289978"));
    let s = stdout(&toric(&["predict", "--L", "5", "--p", "1e-4"]));
    assert!(s.contains("regime = LowP"));
    assert!(s.contains("P_fail_ush = 0.00171") && s.contains("(outside regime)"));
    let s = stdout(&toric(&["predict", "--L", "11", "--p", "0.0227"]));
    assert!(s.contains("regime = Crossover"));
    let s = stdout(&toric(&["predict", "--L", "11", "--p", "0.2"]));
    assert!(s.contains("P_fail_ush = nan"));
}

#[test]
fn overhead_rows_and_errors() {
    let o = toric(&["overhead", "--target", "1e-7,1e-4", "--p", "0.05"]);
    assert!(o.status.success());
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "target,p,regime,omega,L_real,L_code,achieved_p_fail,omega_ush,omega_lp");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1e-7,0.05,UniversalScaling,3362.45491329418"));
    let above = toric(&["overhead", "--target", "1e-6", "--p", "0.11"]);
    assert_eq!(above.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&above.stderr).contains("threshold"));
}

#[test]
fn fits_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let truth = ThresholdParams::REFERENCE;
    let mut cells = Vec::new();
    for size in [5, 7, 9, 11] {
        for k in 0..=17 {
            let p = 0.095 + 0.001 * k as f64;
            cells.push((size, p, truth.evaluate(size, p)));
        }
    }
    let csv = dir.path().join("threshold.csv");
    write_csv(&csv, &synthetic_rows(&cells, 10_000_000));
    let report = dir.path().join("threshold.txt");
    let collapse = dir.path().join("collapse.csv");
    let o = toric(&[
        "fit", "threshold", "--input", csv.to_str().unwrap(), "--out", report.to_str().unwrap(),
        "--fix-mu", "1.15", "--collapse", collapse.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = FitReport::read_path(&report).unwrap();
    let params = r.threshold_params().unwrap();
    assert!((params.p_c0 - 0.1028).abs() < 1e-4);
    assert!(r.get("p_c0").unwrap().uncertainty.unwrap() > 0.0);
    assert!(r.value("residual_chi2_per_dof").is_some());
    assert_eq!(std::fs::read_to_string(&collapse).unwrap().lines().count(), cells.len() + 1);

    // Starting far from the data with one iteration per start cannot converge.
    let shifted = ThresholdParams { p_c0: 0.09, ..truth };
    let cells: Vec<_> = cells.iter().map(|&(l, p, _)| (l, p, shifted.evaluate(l, p))).collect();
    write_csv(&csv, &synthetic_rows(&cells, 10_000));
    let o = toric(&["fit", "threshold", "--input", csv.to_str().unwrap(), "--max-iterations", "1", "--starts", "2"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let few: Vec<_> = cells.iter().copied().filter(|c| c.0 <= 7).collect();
    write_csv(&csv, &synthetic_rows(&few, 10_000));
    let o = toric(&["fit", "threshold", "--input", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    // Quadratic: pure exponential in L.
    let cells: Vec<_> = [5, 7, 9, 11, 13].iter().map(|&l| (l, 0.05, (-1.0 - 0.3 * l as f64).exp())).collect();
    write_csv(&csv, &synthetic_rows(&cells, 1_000_000_000));
    let s = stdout(&toric(&["fit", "quadratic", "--input", csv.to_str().unwrap()]));
    let r = FitReport::parse(&s).unwrap();
    assert!(r.value("gamma_over_beta").unwrap() < 0.01);
    assert!((r.value("beta").unwrap() + 0.3).abs() < 0.01);

    // Decay fit with the filter audit.
    let u = toric_core::scaling::UniversalScalingParams::REFERENCE;
    let mut cells = Vec::new();
    for l in [5, 7, 9, 11, 13] {
        for p in [0.05, 0.06, 0.07, 0.08] {
            cells.push((l, p, toric_core::scaling::p_fail_ush(l as f64, p, &u).unwrap()));
        }
    }
    write_csv(&csv, &synthetic_rows(&cells, 1_000_000_000));
    let s = stdout(&toric(&["fit", "decay", "--input", csv.to_str().unwrap()]));
    let r = FitReport::parse(&s).unwrap();
    assert!((r.value("a").unwrap() - 32.31).abs() < 0.5, "{s}");
    assert!(r.comments.iter().any(|c| c.starts_with("filtered L = 5, p = 0.05")), "{s}");
    let bad = toric(&["fit", "decay", "--input", csv.to_str().unwrap(), "--rule", "bogus"]);
    assert_eq!(bad.status.code(), Some(2));
}
