use ellipform::elliptical::{sample_matrix_elliptical, MatrixEllipticalSpec};
use ellipform::linalg::{centering_matrix, Mat};
use ellipform::pipeline::{
    emit_report_to, load_dataset, parse_csv, parse_json, report_json, run_analysis, to_csv, to_json, AnalysisConfig,
    DataFormat, LandmarkSample, REPORT_SCHEMA,
};
use ellipform::EllipticalModel;
use proptest::prelude::*;

fn pentagon() -> Mat {
    let h = centering_matrix(5);
    &h * Mat::from_row_slice(5, 2, &[0.0, 0.0, 2.0, 0.0, 2.6, 1.9, 1.0, 3.1, -0.6, 1.9])
}

fn simulated(name: &str, mu: &Mat, n: usize, seed: u64) -> LandmarkSample {
    let h = centering_matrix(mu.nrows());
    let spec = MatrixEllipticalSpec::new(mu.clone(), &h * 0.01 * &h, Mat::identity(2, 2), EllipticalModel::Gaussian);
    LandmarkSample {
        name: name.into(),
        specimens: sample_matrix_elliptical(&spec, n, seed).unwrap(),
    }
}

fn two_groups() -> Vec<LandmarkSample> {
    vec![simulated("a", &pentagon(), 40, 1), simulated("b", &pentagon(), 40, 2)]
}

fn cfg(json: &str) -> AnalysisConfig {
    AnalysisConfig::from_json(json).unwrap()
}

#[test]
fn minimal_json_dataset_loads_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.json");
    std::fs::write(
        &path,
        r#"{"groups": [{"name": "g", "landmarks": 3, "dims": 2,
            "specimens": [[[0, 0], [1, 0], [0, 1]], [[0.1, 0], [1, 0.2], [0, 1.1]]]}]}"#,
    )
    .unwrap();
    let groups = load_dataset(&path, DataFormat::from_path(&path)).unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!((groups[0].k(), groups[0].d(), groups[0].n()), (3, 2, 2));
    assert_eq!(groups[0].specimens[1][(1, 1)], 0.2);
}

#[test]
fn ragged_csv_names_specimen_and_row() {
    let text = "group,specimen,landmark,x1,x2\n\
                g,1,1,0,0\ng,1,2,1,0\ng,1,3,0,1\n\
                g,2,1,0,0\ng,2,2,1\ng,2,3,0,1\n";
    let err = parse_csv(text).unwrap_err().to_string();
    assert!(err.contains("row"), "{err}");
    assert!(err.contains("specimen"), "{err}");
}

#[test]
fn too_few_landmarks_for_dimension_is_rejected() {
    let text = r#"{"groups": [{"name": "g", "landmarks": 2, "dims": 2,
        "specimens": [[[0, 0], [1, 0]], [[0, 0], [1, 1]]]}]}"#;
    assert!(parse_json(text).is_err());
}

#[test]
fn json_csv_round_trip_is_bit_exact() {
    let mut groups = two_groups();
    // values whose shortest representation needs all 17 digits
    groups[0].specimens[0][(0, 0)] = 0.1 + 0.2;
    groups[0].specimens[0][(1, 1)] = -1.0 / 3.0;
    groups[1].specimens[3][(4, 0)] = 1e-300;
    let via_csv = parse_csv(&to_csv(&groups).unwrap()).unwrap();
    let via_json = parse_json(&to_json(&groups)).unwrap();
    for back in [via_csv, via_json] {
        assert_eq!(back.len(), groups.len());
        for (g, b) in groups.iter().zip(&back) {
            assert_eq!(g.name, b.name);
            for (x, y) in g.specimens.iter().zip(&b.specimens) {
                assert!(x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
        }
    }
}

#[test]
fn identical_laws_are_not_distinguished() {
    let groups = vec![simulated("a", &pentagon(), 60, 11), simulated("b", &pentagon(), 60, 12)];
    let report = run_analysis(&groups, &cfg(r#"{"bootstrap": {"size": 100, "seed": 3}}"#));
    assert!(report.is_ok(), "{:?}", report.errors);
    let c = &report.comparisons[0];
    assert!(c.result.p_value > 0.1, "p = {}", c.result.p_value);
    assert!(c.result.t_obs < 1.1, "T = {}", c.result.t_obs);
    let ga = report.group("a").unwrap();
    let gb = report.group("b").unwrap();
    let (ma, mb) = (ga.estimate.mu.as_ref().unwrap(), gb.estimate.mu.as_ref().unwrap());
    let gram = |m: &Mat| m * m.transpose();
    assert!((gram(ma) - gram(mb)).norm() / gram(ma).norm() < 0.05);
}

#[test]
fn single_group_selection_over_two_models() {
    let groups = vec![simulated("only", &pentagon(), 50, 21)];
    let report = run_analysis(
        &groups,
        &cfg(r#"{"selection": {"models": ["gaussian", {"kotz": {"N": 2, "r": 0.5, "s": 1}}]}}"#),
    );
    assert!(report.is_ok(), "{:?}", report.errors);
    let sel = report.selection.as_ref().unwrap();
    assert_eq!(sel.models.len(), 2);
    assert_eq!(sel.cov_dist.labels.len(), 2);
    assert!(report.comparisons.is_empty());
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let c = cfg(r#"{"bootstrap": {"size": 40, "seed": 9}, "verbose": true}"#);
    let a = report_json(&run_analysis(&two_groups(), &c)).unwrap();
    let b = report_json(&run_analysis(&two_groups(), &c)).unwrap();
    assert_eq!(a, b);
    let other = cfg(r#"{"bootstrap": {"size": 40, "seed": 10}, "verbose": true}"#);
    assert_ne!(a, report_json(&run_analysis(&two_groups(), &other)).unwrap());
}

#[test]
fn verbose_reports_carry_stage_artifacts() {
    let quiet = run_analysis(&two_groups(), &cfg("{}"));
    let loud = run_analysis(&two_groups(), &cfg(r#"{"verbose": true}"#));
    let g = &loud.groups[0];
    assert!(g.entry_variances.is_some());
    assert!(g.flipflop.as_ref().unwrap().trace.is_some());
    assert_eq!(g.estimate.diagnostics.entries.len(), 15);
    assert!(quiet.groups[0].entry_variances.is_none());
    assert!(quiet.groups[0].flipflop.as_ref().unwrap().trace.is_none());
}

#[test]
fn stage_errors_keep_partial_results() {
    let mut groups = two_groups();
    groups.push(LandmarkSample {
        name: "bad".into(),
        specimens: vec![Mat::zeros(5, 2), Mat::zeros(5, 2)],
    });
    let report = run_analysis(&groups, &cfg(r#"{"bootstrap": {"size": 20}}"#));
    assert!(!report.is_ok());
    assert!(report.errors.iter().any(|e| e.stage.ends_with(":bad")), "{:?}", report.errors);
    assert!(report.group("a").is_some());
    assert!(report.comparisons.iter().any(|c| c.x == "a" && c.y == "b"));
}

#[test]
fn emitted_files_are_complete_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(r#"{"bootstrap": {"size": 30}, "selection": {"models": ["gaussian", {"t": {"m": 8}}], "control": "a"}}"#);
    let report = run_analysis(&two_groups(), &c);
    assert!(report.is_ok(), "{:?}", report.errors);
    let written = emit_report_to(&report, &c, dir.path()).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.to_string_lossy().replace('\\', "/")).collect();
    for f in [
        "report.json",
        "tables/a_bbar.csv",
        "tables/a_sigma_k.csv",
        "tables/a_correlation.csv",
        "tables/fdm_a_vs_b.csv",
        "tables/selection_cov_dist.csv",
        "tables/selection_cv.csv",
        "plots/a_mean_form.svg",
        "plots/b_mean_form.svg",
    ] {
        assert!(names.iter().any(|n| n == f), "missing {f} in {names:?}");
    }

    // correlation form has a unit diagonal
    let corr = std::fs::read_to_string(dir.path().join("tables/a_correlation.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(corr.as_bytes());
    for (i, rec) in reader.records().enumerate() {
        let v: f64 = rec.unwrap()[i + 1].parse().unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    // one labelled point per landmark
    let svg = std::fs::read_to_string(dir.path().join("plots/b_mean_form.svg")).unwrap();
    assert_eq!(svg.matches(r#"<circle class="landmark""#).count(), 5);
    assert_eq!(svg.matches(r#"<text class="label""#).count(), 5);

    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let instance: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

#[test]
fn schema_rejects_malformed_reports() {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let report = run_analysis(&two_groups(), &cfg(r#"{"bootstrap": {"size": 10}}"#));
    let mut v = serde_json::to_value(&report).unwrap();
    assert!(validator.is_valid(&v));
    v["comparisons"][0]["result"]["p_value"] = serde_json::json!(0.0);
    assert!(!validator.is_valid(&v));
    v = serde_json::to_value(&report).unwrap();
    v["unexpected"] = serde_json::json!(1);
    assert!(!validator.is_valid(&v));
}

fn rigid(g: &LandmarkSample, angle: f64, reflect: bool, shift: [f64; 2]) -> LandmarkSample {
    let mut r = Mat::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()]);
    if reflect {
        r.column_mut(1).neg_mut();
    }
    LandmarkSample {
        name: g.name.clone(),
        specimens: g
            .specimens
            .iter()
            .map(|x| Mat::from_fn(x.nrows(), 2, |i, j| (x * &r)[(i, j)] + shift[j]))
            .collect(),
    }
}

fn max_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).amax()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn pipeline_is_invariant_to_rigid_motions(
        angle in 0.0..std::f64::consts::TAU,
        reflect in any::<bool>(),
        sx in -50.0..50.0f64,
        sy in -50.0..50.0f64,
    ) {
        let c = cfg(r#"{"bootstrap": {"size": 30, "seed": 4}}"#);
        let base = two_groups();
        let moved: Vec<_> = base.iter().map(|g| rigid(g, angle, reflect, [sx, sy])).collect();
        let r0 = run_analysis(&base, &c);
        let r1 = run_analysis(&moved, &c);
        prop_assert!(r0.is_ok() && r1.is_ok());
        for (g0, g1) in r0.groups.iter().zip(&r1.groups) {
            prop_assert!(max_diff(&g0.estimate.sigma_k, &g1.estimate.sigma_k) < 1e-10);
            let (m0, m1) = (g0.estimate.mu.as_ref().unwrap(), g1.estimate.mu.as_ref().unwrap());
            prop_assert!(max_diff(&(m0 * m0.transpose()), &(m1 * m1.transpose())) < 1e-10);
        }
        let (c0, c1) = (&r0.comparisons[0].result, &r1.comparisons[0].result);
        prop_assert!(max_diff(&c0.fdm, &c1.fdm) < 1e-10);
        prop_assert!((c0.t_obs - c1.t_obs).abs() < 1e-10);
        prop_assert!((c0.p_value - c1.p_value).abs() < 1e-10);
        for (a, b) in c0.boot_t.iter().zip(&c1.boot_t) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
