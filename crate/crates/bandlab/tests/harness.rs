use std::fs;

use bandlab::c64;
use bandlab::ensemble::{DecayProfile, ProfileSpec};
use bandlab::harness::{
    emit_report, run_decay_profile, run_flow, run_global_law, run_identities, run_local_law, run_profile, run_que,
    run_sample, run_spacing, run_traceless_scaling, write_batch_csv, BatchRow, ExperimentConfig, Relation, Report,
    ReportFormat, REPORT_HEADER,
};
use bandlab::kernels::AdmissibilityGrid;
use bandlab::{Error, Execution};
use proptest::prelude::*;

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ProfileSpec::polynomial(48, 8, 4.0));
    cfg.seed = 21;
    cfg.samples = 4;
    cfg.tuples = 8;
    cfg.vectors = 8;
    cfg.z_grid = vec![c64::new(0.1, 0.2), c64::new(-0.4, 0.5)];
    cfg
}

fn csv_bytes(r: &Report) -> Vec<u8> {
    let mut out = Vec::new();
    r.write_csv(&mut out).unwrap();
    out
}

#[test]
fn report_csv_header_and_rows() {
    let r = run_local_law(&small()).unwrap();
    let text = String::from_utf8(csv_bytes(&r)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "experiment,check,measured,bound,pass,seed,N,W,eta");
    assert_eq!(REPORT_HEADER, "experiment,check,measured,bound,pass,seed,N,W,eta");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), r.rows.len());
    for line in rows {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 9);
        assert_eq!(fields[0], "locallaw");
        assert_eq!(fields[5], "21");
        assert_eq!(fields[6], "48");
        assert_eq!(fields[7], "8");
    }
    // 3 chain lengths x 2 kinds + trace + entrywise, per grid point.
    assert_eq!(r.rows.len(), 2 * (3 * 2 + 2));
}

#[test]
fn reruns_are_byte_identical_and_thread_independent() {
    let cfg = small();
    let a = csv_bytes(&run_local_law(&cfg).unwrap());
    let b = csv_bytes(&run_local_law(&cfg).unwrap());
    assert_eq!(a, b);
    let mut seq = cfg.clone();
    seq.execution = Execution::Sequential;
    let c = csv_bytes(&run_local_law(&seq).unwrap());
    assert_eq!(a, c);
    let mut other = cfg;
    other.seed = 22;
    assert_ne!(a, csv_bytes(&run_local_law(&other).unwrap()));
}

#[test]
fn emitted_files_and_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.out = Some(dir.path().to_path_buf());
    let r = run_local_law(&cfg).unwrap();
    let written = emit_report(&r, dir.path(), ReportFormat { svg: true }).unwrap();
    assert_eq!(written.len(), 3);
    let svg = fs::read_to_string(dir.path().join("locallaw.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let summary = fs::read_to_string(dir.path().join("locallaw.json")).unwrap();
    let back: Report = serde_json::from_str(&summary).unwrap();
    assert_eq!(back.rows, r.rows);
    let loaded = ExperimentConfig::from_json(&summary).unwrap();
    assert_eq!(loaded, cfg);
    let batch = fs::read_to_string(dir.path().join("locallaw_batch.csv")).unwrap();
    assert_eq!(batch.lines().next().unwrap(), "seed,k,kind,tuple,value,psi");
    // samples x grid points x chain lengths x {av, iso}
    assert_eq!(batch.lines().count(), 1 + 4 * 2 * 3 * 2);
}

#[test]
fn config_round_trip_and_defaults() {
    let cfg = small();
    let json = cfg.to_json().unwrap();
    assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);
    let minimal = r#"{"profile": {"kind": "translation_invariant", "N": 64, "W": 8, "decay": {"shape": "gaussian"}}}"#;
    let d = ExperimentConfig::from_json(minimal).unwrap();
    assert_eq!(d.tuples, 64);
    assert_eq!(d.vectors, 64);
    assert_eq!(d.kmax, 8);
    assert_eq!(d.margins.ks_max, 0.05);
    assert_eq!(d.margins.que_ratio, [1.4, 2.8]);
    assert_eq!(ExperimentConfig::from_json(&d.to_json().unwrap()).unwrap(), d);
    let typo = r#"{"profile": {"kind": "translation_invariant", "N": 64, "W": 8, "decay": {"shape": "gaussian"}}, "sampels": 3}"#;
    assert!(matches!(ExperimentConfig::from_json(typo), Err(Error::Json(_))));
}

#[test]
fn config_validation() {
    let mut cfg = small();
    cfg.z_grid = vec![c64::new(2.5, 0.01)];
    assert!(matches!(cfg.validate(), Err(Error::Domain(_))));
    let mut cfg = small();
    cfg.samples = 0;
    assert!(matches!(cfg.validate(), Err(Error::Argument(_))));
    let mut cfg = small();
    cfg.chain_lengths = vec![9];
    assert!(matches!(cfg.validate(), Err(Error::Argument(_))));
    let mut cfg = small();
    cfg.kmax = 3;
    assert!(matches!(cfg.validate(), Err(Error::Argument(_))));
    let mut cfg = small();
    cfg.z_grid.clear();
    assert!(matches!(run_local_law(&cfg), Err(Error::Argument(_))));
}

#[test]
fn relations_and_verdicts() {
    let mut r = Report::new("x", &small());
    r.check("a", 1.0, Relation::AtMost, 1.0, None);
    r.check("b", 0.5, Relation::AtLeast, 1.0, None);
    r.check("c", 4.3, Relation::Within { tolerance: 0.5 }, 4.0, None);
    r.check("d", f64::NAN, Relation::AtMost, 1.0, None);
    let pass: Vec<bool> = r.rows.iter().map(|row| row.pass).collect();
    assert_eq!(pass, vec![true, false, true, false]);
    assert!(!r.passed());
    assert!(!Report::new("empty", &small()).passed());
}

#[test]
fn batch_csv_format() {
    let rows = vec![BatchRow { seed: 5, k: 2, kind: "av".into(), tuple: "z0:1-2".into(), value: 0.5, psi: 0.25 }];
    let mut out = Vec::new();
    write_batch_csv(&rows, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "seed,k,kind,tuple,value,psi\n5,2,av,z0:1-2,0.5,0.25\n");
}

#[test]
fn identities_pass_on_a_small_profile() {
    let mut cfg = small();
    cfg.samples = 1;
    let r = run_identities(&cfg).unwrap();
    for row in &r.rows {
        assert!(row.pass, "{row:?}");
    }
}

#[test]
fn global_law_rows() {
    let mut cfg = small();
    cfg.z_grid = vec![c64::new(0.3, 2.0)];
    cfg.samples = 50;
    let r = run_global_law(&cfg).unwrap();
    assert_eq!(r.rows.len(), 6);
    assert!(r.row("mean_k2_re_z0").is_some());
}

#[test]
fn decay_regimes() {
    let mut cfg = small();
    cfg.z_grid = vec![c64::new(0.0, 0.3)];
    let r = run_decay_profile(&cfg).unwrap();
    assert!(r.row("ratio_within_ell_z0").is_some());
    assert!(r.row("tail_beyond_4ell_z0").is_some());
    cfg.profile = ProfileSpec::polynomial(48, 24, 4.0);
    cfg.z_grid = vec![c64::new(0.0, 0.1)];
    let r = run_decay_profile(&cfg).unwrap();
    assert!(r.row("flatness_z0").is_some());
    assert!(r.row("ratio_within_ell_z0").is_none());
}

#[test]
fn que_widths() {
    let mut cfg = small();
    cfg.profile = ProfileSpec::polynomial(64, 8, 8.0);
    cfg.widths = vec![8, 16];
    let r = run_que(&cfg).unwrap();
    assert!(r.row("que_deviation_w8").is_some());
    assert!(r.row("que_deviation_w16").is_some());
    let lo = r.row("que_width_ratio_lower").unwrap();
    let hi = r.row("que_width_ratio_upper").unwrap();
    assert_eq!(lo.measured, hi.measured);
    assert_eq!(r.rows.iter().filter(|row| row.w == 16).count(), 2);
    cfg.widths = vec![4, 8, 16];
    assert!(matches!(run_que(&cfg), Err(Error::Argument(_))));
}

#[test]
fn traceless_window_is_enforced() {
    let mut cfg = small();
    cfg.profile = ProfileSpec::TranslationInvariant { n: 64, w: 32, decay: DecayProfile::Gaussian };
    cfg.eta_grid = vec![0.05, 0.5];
    assert!(matches!(run_traceless_scaling(&cfg), Err(Error::Argument(_))));
    cfg.eta_grid = vec![0.05, 0.1, 0.2];
    cfg.samples = 2;
    let r = run_traceless_scaling(&cfg).unwrap();
    assert!(r.row("m_exponent_n2").is_some());
    assert!(r.observation("fluctuation_exponent_n2").is_some());
}

#[test]
fn spacing_needs_enough_gaps() {
    let mut cfg = small();
    cfg.samples = 2;
    assert!(matches!(run_spacing(&cfg), Err(Error::Statistics(_))));
    cfg.samples = 60;
    cfg.margins.min_gaps = 1000;
    let r = run_spacing(&cfg).unwrap();
    assert!(r.row("pooled_ratios").unwrap().pass);
    assert!(r.row("ks_reference").is_some());
}

#[test]
fn profile_sweep_reports_spreads() {
    let mut cfg = small();
    cfg.profile = ProfileSpec::polynomial(32, 4, 4.0);
    cfg.sizes = vec![32, 64];
    cfg.admissibility = Some(AdmissibilityGrid::new(vec![0.2], vec![1.0 / 64.0, 0.25]));
    let r = run_profile(&cfg).unwrap();
    assert!(r.row("symmetry").unwrap().pass);
    assert!(r.row("spread_i_theta").is_some());
    assert!(r.observation("i_theta_N64").is_some());
    cfg.profile = ProfileSpec::Custom { n: 2, w: 1, entries: vec![vec![0.5, 0.5], vec![0.5, 0.5]] };
    cfg.z_grid.clear();
    assert!(run_profile(&cfg).is_err());
}

#[test]
fn sample_and_flow_runners() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.profile = ProfileSpec::polynomial(16, 4, 4.0);
    cfg.z_grid = vec![c64::new(0.0, 0.3)];
    cfg.samples = 2;
    cfg.out = Some(dir.path().to_path_buf());
    let r = run_sample(&cfg).unwrap();
    assert!(r.row("hermiticity").unwrap().pass);
    let csv = fs::read_to_string(dir.path().join("sample_0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 16);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 32);

    cfg.profile = ProfileSpec::polynomial(64, 8, 4.0);
    cfg.z_grid = vec![c64::new(0.0, 0.05)];
    cfg.flow.records = 2;
    cfg.svg = true;
    let r = run_flow(&cfg).unwrap();
    assert!(r.row("regularization_gain_r4").is_some());
    assert!(r.row("flow_psi_av").is_some());
    let trace = fs::read_to_string(dir.path().join("flow_trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "t,Re z,Im z,eta,ell,psi_av,psi_iso");
    assert_eq!(trace.lines().count(), 4);
    assert!(dir.path().join("flow_trace.svg").exists());
    cfg.flow.gain_ratios = vec![1e6];
    assert!(matches!(run_flow(&cfg), Err(Error::Argument(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn config_json_round_trips(seed in any::<u64>(), samples in 1usize..500, xi in 0.01f64..1.0, re in -1.5f64..1.5, im in 0.05f64..2.0) {
        let mut cfg = small();
        cfg.seed = seed;
        cfg.samples = samples;
        cfg.xi = xi;
        cfg.z_grid = vec![c64::new(re, im)];
        prop_assume!(cfg.validate().is_ok());
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
