use std::io::Write;

use serde::Serialize;
use wvir::report::{Assertion, Report};
use wvir::weights::WeightSet;

use crate::args::{Config, Format, Suite};
use crate::commands::CliError;

#[derive(Debug, Serialize)]
pub struct EvalResult {
    pub spec: String,
    pub genus: Option<u32>,
    pub value: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct TableRow {
    pub genus: u32,
    pub insertions: Vec<(i64, String)>,
    pub value: String,
}

impl TableRow {
    fn insertions_text(&self) -> String {
        self.insertions.iter().map(|(k, w)| format!("({k};{w})")).collect()
    }
}

fn weight_names(set: &WeightSet) -> Vec<String> {
    set.elements().iter().map(|w| w.to_string()).collect()
}

pub fn write_eval<W: Write>(r: &EvalResult, format: Format, mut out: W) -> Result<(), CliError> {
    match format {
        Format::Human => match (&r.genus, &r.note) {
            (Some(g), _) => writeln!(out, "{} (genus {g})", r.value)?,
            (None, Some(note)) => writeln!(out, "{} ({note})", r.value)?,
            (None, None) => writeln!(out, "{}", r.value)?,
        },
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(r)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["spec", "genus", "value", "seed"])?;
            let genus = r.genus.map(|g| g.to_string()).unwrap_or_default();
            w.write_record([r.spec.as_str(), &genus, &r.value, &r.seed.to_string()])?;
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TableDocument<'a> {
    weights: Vec<String>,
    max_n: u64,
    max_genus: u32,
    seed: u64,
    rows: &'a [TableRow],
}

pub fn write_table<W: Write>(set: &WeightSet, config: &Config, rows: &[TableRow], mut out: W) -> Result<(), CliError> {
    match config.format {
        Format::Human => {
            writeln!(
                out,
                "weights {{{set}}}, n <= {}, genus <= {}, seed {}",
                config.max_n, config.max_genus, config.seed
            )?;
            let width = rows.iter().map(|r| r.insertions_text().len()).max().unwrap_or(0).max("insertions".len());
            writeln!(out, "genus  {:<width$}  value", "insertions")?;
            for r in rows {
                writeln!(out, "{:<5}  {:<width$}  {}", r.genus, r.insertions_text(), r.value)?;
            }
        }
        Format::Json => {
            let doc = TableDocument {
                weights: weight_names(set),
                max_n: config.max_n,
                max_genus: config.max_genus,
                seed: config.seed,
                rows,
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["genus", "insertions", "value"])?;
            for r in rows {
                w.write_record([r.genus.to_string(), r.insertions_text(), r.value.clone()])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn status(a: &Assertion) -> &'static str {
    match (a.passed, a.required) {
        (true, _) => "PASS",
        (false, true) => "FAIL",
        (false, false) => "INFO",
    }
}

#[derive(Serialize)]
struct CheckDocument<'a> {
    suite: String,
    weights: Vec<String>,
    seed: u64,
    passed: bool,
    assertions: &'a [Assertion],
}

fn suite_name(suite: Suite) -> String {
    format!("{suite:?}").to_lowercase()
}

pub fn write_report<W: Write>(
    suite: Suite,
    set: &WeightSet,
    config: &Config,
    report: &Report,
    mut out: W,
) -> Result<(), CliError> {
    match config.format {
        Format::Human => {
            writeln!(out, "check {} on weights {{{set}}}, seed {}", suite_name(suite), config.seed)?;
            for a in &report.assertions {
                let tag = if a.required { "" } else { " (informational)" };
                let range = if a.range.is_empty() { String::new() } else { format!(" [{}]", a.range) };
                writeln!(out, "{} {}: {}{range}, {} checked{tag}", status(a), a.suite, a.name, a.checked)?;
                match (&a.detail, a.passed) {
                    (Some(d), false) => writeln!(out, "     first offending: {d}")?,
                    (Some(d), true) => writeln!(out, "     {d}")?,
                    (None, _) => {}
                }
            }
            let failed = report.failures().count();
            let informational = report.assertions.iter().filter(|a| !a.passed && !a.required).count();
            let verdict = if report.passed() { "PASS" } else { "FAIL" };
            writeln!(
                out,
                "{verdict}: {} assertions, {failed} failed, {informational} informational failures",
                report.assertions.len()
            )?;
        }
        Format::Json => {
            let doc = CheckDocument {
                suite: suite_name(suite),
                weights: weight_names(set),
                seed: config.seed,
                passed: report.passed(),
                assertions: &report.assertions,
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["status", "suite", "name", "range", "checked", "required", "detail", "seed"])?;
            for a in &report.assertions {
                w.write_record([
                    status(a).to_string(),
                    a.suite.clone(),
                    a.name.clone(),
                    a.range.clone(),
                    a.checked.to_string(),
                    a.required.to_string(),
                    a.detail.clone().unwrap_or_default(),
                    config.seed.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
