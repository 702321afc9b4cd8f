use std::path::PathBuf;

use clap::{CommandFactory, Parser};
use proptest::prelude::*;
use wvir::correlators::{genus_for, unweighted_correlator};

use crate::args::Cli;
use crate::{execute, exit_code};

/// Parses and runs `wvir <args>` in-process, returning the exit code and stdout.
fn wvir(args: &[&str]) -> (u8, String) {
    let cli = match Cli::try_parse_from(std::iter::once("wvir").chain(args.iter().copied())) {
        Ok(cli) => cli,
        Err(e) => return (e.exit_code() as u8, String::new()),
    };
    let mut out = Vec::new();
    let result = execute(cli, &mut out);
    (exit_code(&result), String::from_utf8(out).unwrap())
}

fn scratch(name: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("wvir-{}-{name}", std::process::id()));
    let _ = std::fs::remove_file(&path);
    path
}

#[test]
fn eval_examples() {
    for (spec, expected) in [
        ("(0;1/3)(0;1/3)(0;1/3)", "1 (genus 0)\n"),
        ("(1;1)", "1/24 (genus 1)\n"),
        ("(0;1/2)(2;1/2)", "0 (genus 1)\n"),
        ("(4;1)", "1/1152 (genus 2)\n"),
    ] {
        assert_eq!(wvir(&["eval", spec]), (0, expected.to_string()), "{spec}");
        assert_eq!(wvir(&["eval", spec, "--mode", "recursion"]), (0, expected.to_string()), "{spec} by recursion");
    }
}

#[test]
fn eval_edge_cases() {
    let (code, out) = wvir(&["eval", "(2;1)"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("0 (dimension-inconsistent"));
    for bad in ["(x;1)", "(-1;1)", "(0;2)", "0;1"] {
        assert_eq!(wvir(&["eval", bad]).0, 2, "{bad}");
    }
    let (_, json) = wvir(&["eval", "(1;1)", "--format", "json", "--seed", "9"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["value"], "1/24");
    assert_eq!(v["genus"], 1);
    assert_eq!(v["seed"], 9);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(wvir(&["check", "nonsense"]).0, 2);
    assert_eq!(wvir(&["table", "--max-n", "0"]).0, 2);
    assert_eq!(wvir(&["table", "--weights", "3/2"]).0, 2);
    assert_eq!(wvir(&["table", "--format", "xml"]).0, 2);
}

#[test]
fn classical_table() {
    let (code, text) = wvir(&["table", "--max-n", "3", "--format", "csv"]);
    assert_eq!(code, 0);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "genus,insertions,value");
    for row in ["0,(0;1)(0;1)(0;1),1", "1,(1;1),1/24", "1,(0;1)(2;1),1/24", "1,(1;1)(1;1),1/24"] {
        assert!(rows.contains(&row), "{row}");
    }
    assert!(rows.iter().skip(1).all(|r| !r.ends_with(",0")));
}

#[test]
fn infinitesimal_table_and_empty_table() {
    let (_, text) = wvir(&["table", "--weights", "0+", "--max-n", "3", "--format", "csv"]);
    assert!(text.lines().any(|r| r == "0,(0;0+)(0;0+)(0;0+),1"));
    let empty = wvir(&["table", "--max-n", "1", "--max-genus", "0", "--format", "csv"]);
    assert_eq!(empty, (0, "genus,insertions,value\n".to_string()));
}

#[test]
fn unclosed_weights_are_closed() {
    let (code, text) = wvir(&["table", "--weights", "1/2", "--max-n", "2", "--format", "csv"]);
    assert_eq!(code, 0);
    assert!(text.contains("(1;1/2)"));
    assert!(text.contains("(1;1)"));
}

#[test]
fn cache_verify_detects_tampering() {
    let path = scratch("verify.jsonl");
    let p = path.to_str().unwrap();
    let first = wvir(&["table", "--weights", "1/2,1", "--max-n", "4", "--cache", p]);
    assert_eq!(first.0, 0);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().count() > 10);
    let again = wvir(&["table", "--weights", "1/2,1", "--max-n", "4", "--cache", p, "--cache-mode", "verify"]);
    assert_eq!(again, first);
    let line = text.lines().next().unwrap();
    let mut record: serde_json::Value = serde_json::from_str(line).unwrap();
    record["val"] = "12345".into();
    std::fs::write(&path, text.replacen(line, &record.to_string(), 1)).unwrap();
    let bad = wvir(&["table", "--weights", "1/2,1", "--max-n", "4", "--cache", p, "--cache-mode", "verify"]);
    assert_eq!(bad.0, 1);
    let trusted = wvir(&["eval", "(0;1/2)(0;1/2)(0;1/2)", "--cache", p]);
    assert_eq!(trusted, (0, "12345 (genus 0)\n".to_string()));
    std::fs::remove_file(&path).unwrap();
}

#[test]
fn verify_rejects_unknown_fields() {
    let path = scratch("strict.jsonl");
    std::fs::write(&path, "{\"g\":0,\"ins\":[[0,\"1\"]],\"val\":\"1\",\"extra\":1}\n").unwrap();
    let p = path.to_str().unwrap();
    assert_eq!(wvir(&["eval", "(1;1)", "--cache", p, "--cache-mode", "verify"]).0, 2);
    std::fs::remove_file(&path).unwrap();
}

#[test]
fn cache_path_defaults_from_environment() {
    let command = Cli::command();
    let cache = command.get_arguments().find(|a| a.get_id() == "cache").unwrap();
    assert_eq!(cache.get_env().and_then(|e| e.to_str()), Some("WVIR_CACHE"));
}

#[test]
fn check_examples() {
    let (code, text) = wvir(&["check", "commutators", "--weights", "1", "--kmax", "2", "--degree", "4"]);
    assert_eq!(code, 0, "{text}");
    let (code, text) = wvir(&["check", "kdv", "--weights", "2/5,4/5", "--flows", "1", "--degree", "4"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("selected shifted 1/(2n+3)"));
    assert!(text.lines().any(|l| l.starts_with("INFO") && l.contains("literal")));
    let (code, json) = wvir(&["check", "identities", "--weights", "1/2,1", "--format", "json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["seed"], 0);
}

#[test]
fn failing_checks_exit_one() {
    let (code, text) = wvir(&["check", "virasoro", "--weights", "1/2,1", "--kmax", "0", "--degree", "5"]);
    assert_eq!(code, 1);
    assert!(text.lines().any(|l| l.starts_with("FAIL virasoro: L[-1;")));
}

#[test]
fn csv_report_is_parseable() {
    let (_, text) = wvir(&["check", "identities", "--format", "csv", "--seed", "3"]);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(&reader.headers().unwrap()[0], "status");
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert!(rows.len() >= 8);
    assert!(rows.iter().all(|r| &r[0] == "PASS" && &r[7] == "3"));
}

#[test]
fn outputs_are_deterministic() {
    let args = ["check", "all", "--weights", "1/2,1", "--degree", "3", "--seed", "5", "--trials", "20"];
    assert_eq!(wvir(&args), wvir(&args));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eval_agrees_with_the_library(ks in prop::collection::vec(0i64..5, 1..5)) {
        let spec: String = ks.iter().map(|k| format!("({k};1)")).collect();
        let (code, out) = wvir(&["eval", &spec]);
        prop_assert_eq!(code, 0);
        if let Some(g) = genus_for(&ks) {
            prop_assert_eq!(out, format!("{} (genus {g})\n", unweighted_correlator(&ks)));
        }
    }
}
