use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use decouple_cli::commands::{EXIT_ERROR, EXIT_NEGATIVE, EXIT_POSITIVE};
use decouple_cli::document::read_json;
use decouple_cli::{
    cmd_analyze, cmd_decouple, cmd_poles, cmd_verify, parse_system, CliError, DecoupleOptions, LawDocument,
    SystemDocument,
};
use decouple_core::plants::{
    identity_system, nine_state, nine_state_reference_law, twenty_two_state, twenty_two_state_reference_law,
    NineStateCoupling,
};
use decouple_core::algebra::Mat;
use decouple_core::synthesis::Limits;
use decouple_core::system::StateSpaceSystem;
use serde_json::json;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn write_system(dir: &Path, name: &str, sys: &StateSpaceSystem) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(&SystemDocument::from_system(sys, None)).unwrap()).unwrap();
    path
}

#[test]
fn fixtures_match_built_in_plants() {
    let cases = [
        ("nine_state_z_x3.json", nine_state(NineStateCoupling::FromX3)),
        ("nine_state_z_x2.json", nine_state(NineStateCoupling::FromX2)),
        ("twenty_two_state.json", twenty_two_state()),
    ];
    for (file, sys) in cases {
        let (parsed, _) = parse_system(&fixture(file)).unwrap();
        assert_eq!(parsed, sys, "{file}");
    }
    let law: LawDocument = read_json(&fixture("nine_state_z_x3_law.json")).unwrap();
    assert_eq!(law, LawDocument::from_law(&nine_state_reference_law()));
    let law: LawDocument = read_json(&fixture("twenty_two_state_law.json")).unwrap();
    assert_eq!(law, LawDocument::from_law(&twenty_two_state_reference_law()));
}

#[test]
fn system_document_round_trip_keeps_fractions() {
    let mut a = Mat::from_i64(&[&[0, 1], &[-2, -3]]);
    a[(0, 0)] = decouple_core::algebra::ratio(-7, 3);
    let sys = StateSpaceSystem::new(a, Mat::from_i64(&[&[0], &[1]]), Mat::from_i64(&[&[1, 0]])).unwrap();
    let doc = SystemDocument::from_system(&sys, Some("pair"));
    let text = serde_json::to_string(&doc).unwrap();
    assert!(text.contains("\"-7/3\""));
    let back: SystemDocument = serde_json::from_str(&text).unwrap();
    assert_eq!(back.to_system(Path::new("mem")).unwrap(), sys);
}

#[test]
fn shape_error_names_the_field() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    let doc = json!({
        "schema": "1", "n": 2, "m": 1, "p": 1,
        "A": [[0, 1], [0, 0]],
        "B": [[0, 1], [1, 0]],
        "C": [[1, 0]],
    });
    fs::write(&path, doc.to_string()).unwrap();
    match parse_system(&path) {
        Err(CliError::Field { field, .. }) => assert_eq!(field, "B"),
        other => panic!("expected a field error, got {other:?}"),
    }
}

#[test]
fn bad_entry_and_schema_are_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    let doc = json!({ "schema": "1", "n": 1, "m": 1, "p": 1, "A": [["1/0"]], "B": [[1]], "C": [[1]] });
    fs::write(&path, doc.to_string()).unwrap();
    assert!(matches!(parse_system(&path), Err(CliError::Field { field, .. }) if field == "A"));
    let doc = json!({ "schema": "2", "n": 1, "m": 1, "p": 1, "A": [[0]], "B": [[1]], "C": [[1]] });
    fs::write(&path, doc.to_string()).unwrap();
    assert!(matches!(parse_system(&path), Err(CliError::Field { field, .. }) if field == "schema"));
    fs::write(&path, "{ not json").unwrap();
    assert!(matches!(parse_system(&path), Err(CliError::Json { .. })));
}

#[test]
fn analyze_nine_state() {
    let r = cmd_analyze(&fixture("nine_state_z_x3.json"), None).unwrap();
    assert_eq!(r.verdict(), "frameworks found");
    assert_eq!(r.body["relative_orders"], json!([1, 1, 1]));
    assert_eq!(r.body["falb_wolovich"]["passes"], json!(false));
    let fws = r.body["frameworks"].as_array().unwrap();
    assert_eq!(fws.len(), 1);
    assert_eq!(fws[0]["orders"], json!([1, 1, 4]));
    assert_eq!(fws[0]["ede"]["entries"][2], json!(["s^3", "0", "0", "0"]));
}

#[test]
fn analyze_without_a_framework() {
    let dir = TempDir::new().unwrap();
    // x1' = u1 + x2, x2' = u2, x3' = x1, y = (x1, x3): every pairing runs through x1.
    let sys = StateSpaceSystem::new(
        Mat::from_i64(&[&[0, 1, 0], &[0, 0, 0], &[1, 0, 0]]),
        Mat::from_i64(&[&[1, 0], &[0, 1], &[0, 0]]),
        Mat::from_i64(&[&[1, 0, 0], &[0, 0, 1]]),
    )
    .unwrap();
    let path = write_system(dir.path(), "blocked.json", &sys);
    let r = cmd_analyze(&path, None).unwrap();
    assert_eq!(r.verdict(), "no decoupling framework");
    let r = cmd_decouple(&path, &DecoupleOptions::default()).unwrap();
    assert_eq!(r.exit_code, EXIT_NEGATIVE);
}

#[test]
fn uncontrollable_system_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let sys = StateSpaceSystem::new(Mat::zeros(2, 2), Mat::from_i64(&[&[1], &[0]]), Mat::from_i64(&[&[0, 1]])).unwrap();
    let path = write_system(dir.path(), "stuck.json", &sys);
    assert!(matches!(cmd_analyze(&path, None), Err(CliError::Core(_))));
}

#[test]
fn identity_decouples_through_the_regular_route() {
    let dir = TempDir::new().unwrap();
    let path = write_system(dir.path(), "id.json", &identity_system(3));
    let r = cmd_decouple(&path, &DecoupleOptions::default()).unwrap();
    assert_eq!(r.exit_code, EXIT_POSITIVE);
    assert_eq!(r.body["orders"], json!([1, 1, 1]));
    assert_eq!(r.body["route"], json!("regular"));
}

#[test]
fn verify_reports_a_coupling_witness() {
    let r = cmd_verify(&fixture("nine_state_z_x3.json"), &fixture("nine_state_zero_law.json"), false).unwrap();
    assert_eq!(r.exit_code, EXIT_NEGATIVE);
    assert_eq!(r.verdict(), "not diagonal");
    let w = &r.body["witness"];
    assert_ne!(w["output"], w["input"]);
    assert_ne!(w["entry"], json!("0"));
}

#[test]
fn poles_needs_a_decoupling_law() {
    let err = cmd_poles(&fixture("nine_state_z_x3.json"), &fixture("nine_state_zero_law.json"), None).unwrap_err();
    assert!(matches!(err, CliError::Precondition(_)));
}

#[test]
fn placed_law_verifies_with_relaxed_check() {
    let dir = TempDir::new().unwrap();
    let r = cmd_poles(&fixture("nine_state_z_x3.json"), &fixture("nine_state_z_x3_law.json"), None).unwrap();
    assert_eq!(r.verdict(), "assignable");
    let law = dir.path().join("placed.json");
    fs::write(&law, r.body["law"]["document"].to_string()).unwrap();
    let strict = cmd_verify(&fixture("nine_state_z_x3.json"), &law, false).unwrap();
    assert_eq!(strict.exit_code, EXIT_NEGATIVE);
    let relaxed = cmd_verify(&fixture("nine_state_z_x3.json"), &law, true).unwrap();
    assert_eq!(relaxed.verdict(), "diagonal");
}

#[test]
fn parallel_search_gives_the_same_report() {
    let serial = cmd_decouple(&fixture("twenty_two_state.json"), &DecoupleOptions::default()).unwrap();
    let opts = DecoupleOptions { limits: Limits { jobs: 4, ..Limits::default() }, ..DecoupleOptions::default() };
    let parallel = cmd_decouple(&fixture("twenty_two_state.json"), &opts).unwrap();
    assert_eq!(serial.deterministic(), parallel.deterministic());
}

#[test]
fn master_cap_makes_the_search_inconclusive() {
    let opts = DecoupleOptions { limits: Limits { max_masters: Some(0), ..Limits::default() }, ..DecoupleOptions::default() };
    let r = cmd_decouple(&fixture("twenty_two_state.json"), &opts).unwrap();
    assert_eq!(r.verdict(), "inconclusive");
}

fn binary(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_decouple")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn binary_exit_codes() {
    let x3 = fixture("nine_state_z_x3.json");
    let x2 = fixture("nine_state_z_x2.json");
    let (code, text) = binary(&["decouple", x3.to_str().unwrap()]);
    assert_eq!(code, EXIT_POSITIVE);
    assert!(text.contains("u4 = v1 - x5"));
    let (code, _) = binary(&["decouple", x2.to_str().unwrap()]);
    assert_eq!(code, EXIT_NEGATIVE);
    let (code, _) = binary(&["verify", x3.to_str().unwrap(), "/nonexistent/law.json"]);
    assert_eq!(code, EXIT_ERROR);
}

#[test]
fn binary_json_and_report_file() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.json");
    let x3 = fixture("nine_state_z_x3.json");
    let law = fixture("nine_state_z_x3_law.json");
    let (code, text) =
        binary(&["--json", "--report", report.to_str().unwrap(), "verify", x3.to_str().unwrap(), law.to_str().unwrap()]);
    assert_eq!(code, EXIT_POSITIVE);
    let printed: serde_json::Value = serde_json::from_str(&text).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(printed["schema"], json!("1"));
    assert_eq!(printed["report"], saved["report"]);
    assert_eq!(printed["report"]["orders"], json!([4, 1, 4]));
    assert!(printed["timing"]["elapsed_ms"].is_u64());
}
