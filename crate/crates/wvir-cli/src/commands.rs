use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;
use wvir::combinatorics::{check_partition_counts, check_power_class_sums, weight_lists, WeightedInsertion};
use wvir::correlators::{
    check_initial_values, check_mode_equivalence, genus_for, CacheMode, CorrelatorEngine, CorrelatorError, Mode,
};
use wvir::hfunction::{run_identity_suite, HConvention};
use wvir::kdv::check_kdv_suite;
use wvir::report::Report;
use wvir::virasoro::{check_annihilation_suite, check_bracket_relations, check_vfield_duality};
use wvir::weights::{additive_closure, parse_weight, Weight, WeightError, WeightSet};

use crate::args::{CacheModeArg, Config, EvalMode, Suite};
use crate::output::{self, EvalResult, TableRow};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("weights: {0}")]
    Weight(#[from] WeightError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Cache(#[from] CorrelatorError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Cache(CorrelatorError::Mismatch { .. }) => 1,
            _ => 2,
        }
    }
}

impl From<EvalMode> for Mode {
    fn from(m: EvalMode) -> Self {
        match m {
            EvalMode::PartitionSum => Mode::PartitionSum,
            EvalMode::Recursion => Mode::Recursion,
        }
    }
}

/// Parses `--weights` and closes it additively, warning on stderr about added weights.
pub fn resolve_weights(text: &str) -> Result<WeightSet, CliError> {
    let seeds: BTreeSet<Weight> = WeightSet::parse_list(text)?.into_iter().collect();
    if seeds.is_empty() {
        return Err(WeightError::Empty.into());
    }
    let closed = additive_closure(seeds.iter().cloned());
    let added: Vec<String> = closed.elements().iter().filter(|w| !seeds.contains(w)).map(|w| w.to_string()).collect();
    if !added.is_empty() {
        let given: Vec<String> = seeds.iter().map(|w| w.to_string()).collect();
        eprintln!("warning: weights {{{}}} are not additively closed; using {{{closed}}}", given.join(","));
        eprintln!("+ {}", added.join(", "));
    }
    Ok(closed)
}

/// Parses "(k;w)(k;w)…" with `k ≥ 0`.
pub fn parse_spec(spec: &str) -> Result<Vec<WeightedInsertion>, CliError> {
    let compact: String = spec.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = |why: &str| CliError::Usage(format!("cannot parse correlator {spec:?}: {why}"));
    if compact.is_empty() {
        return Err(bad("empty"));
    }
    let mut out = Vec::new();
    let mut rest = compact.as_str();
    while !rest.is_empty() {
        let body = rest.strip_prefix('(').ok_or_else(|| bad("expected '('"))?;
        let close = body.find(')').ok_or_else(|| bad("missing ')'"))?;
        let (k, w) = body[..close].split_once(';').ok_or_else(|| bad("expected 'k;w'"))?;
        let k: i64 = k.parse().map_err(|_| bad("index is not an integer"))?;
        if k < 0 {
            return Err(bad("negative index"));
        }
        out.push(WeightedInsertion::new(k, parse_weight(w)?));
        rest = &body[close + 1..];
    }
    Ok(out)
}

pub struct Session {
    pub config: Config,
    pub engine: CorrelatorEngine,
}

impl Session {
    pub fn open(config: Config) -> Result<Self, CliError> {
        let engine = CorrelatorEngine::new();
        if let Some(path) = &config.cache {
            if path.exists() {
                let mode = match config.cache_mode {
                    CacheModeArg::Trust => CacheMode::Trust,
                    CacheModeArg::Verify => CacheMode::Verify,
                };
                engine.load_cache(BufReader::new(File::open(path)?), mode)?;
            }
        }
        Ok(Session { config, engine })
    }

    pub fn save(&self) -> Result<(), CliError> {
        let Some(path) = &self.config.cache else {
            return Ok(());
        };
        let tmp = path.with_extension("tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            self.engine.save_cache(&mut out)?;
            out.flush()?;
        }
        std::fs::rename(&tmp, Path::new(path))?;
        Ok(())
    }

    pub fn eval<W: Write>(&self, spec: &str, out: W) -> Result<bool, CliError> {
        let list = parse_spec(spec)?;
        let ks: Vec<i64> = list.iter().map(|x| x.k).collect();
        let genus = genus_for(&ks);
        let value = match genus {
            Some(_) => self.engine.weighted(&list, self.config.mode.into()).to_string(),
            None => "0".to_string(),
        };
        let result = EvalResult {
            spec: list.iter().map(|x| x.to_string()).collect(),
            genus,
            value,
            note: genus
                .is_none()
                .then(|| "dimension-inconsistent: no genus g with 3g - 3 + n = sum of indices".to_string()),
            seed: self.config.seed,
        };
        output::write_eval(&result, self.config.format, out)?;
        Ok(true)
    }

    pub fn table<W: Write>(&self, out: W) -> Result<bool, CliError> {
        let set = resolve_weights(&self.config.weights)?;
        let rows: Vec<TableRow> = self
            .engine
            .build_f_coefficients(&set, self.config.max_n as usize, self.config.max_genus, self.config.mode.into())
            .into_iter()
            .map(|(key, value)| TableRow {
                genus: key.genus(),
                insertions: key.insertions().iter().map(|x| (x.k, x.a.to_string())).collect(),
                value: value.to_string(),
            })
            .collect();
        output::write_table(&set, &self.config, &rows, out)?;
        Ok(true)
    }

    pub fn check<W: Write>(&self, suite: Suite, out: W) -> Result<bool, CliError> {
        let set = resolve_weights(&self.config.weights)?;
        let suites: &[Suite] = match suite {
            Suite::All => &[Suite::Identities, Suite::Virasoro, Suite::Commutators, Suite::Kdv],
            _ => std::slice::from_ref(&suite),
        };
        let mut report = Report::new();
        for s in suites {
            report.extend(self.run_suite(*s, &set));
        }
        output::write_report(suite, &set, &self.config, &report, out)?;
        Ok(report.passed())
    }

    fn run_suite(&self, suite: Suite, set: &WeightSet) -> Report {
        let c = &self.config;
        let degree = |default: usize| c.degree.map_or(default, |d| d as usize);
        let kmax = |default: i64| c.kmax.unwrap_or(default);
        match suite {
            Suite::Virasoro => check_annihilation_suite(&self.engine, set, kmax(3), degree(5), c.max_genus),
            Suite::Commutators => check_bracket_relations(set, kmax(2), degree(4)),
            Suite::Kdv => {
                let mut r = check_kdv_suite(&self.engine, set, c.flows as usize, degree(5), c.max_genus);
                r.extend(check_vfield_duality(set, kmax(2), degree(5)));
                r
            }
            Suite::Identities => {
                let mut r = Report::new();
                for a in run_identity_suite(HConvention::Extended, c.seed, c.trials as usize).assertions() {
                    r.push(a);
                }
                r.push(check_initial_values(&self.engine, set));
                let mut lists = baseline_lists();
                lists.extend(weight_lists(set.elements(), 5));
                r.push(check_partition_counts(&lists));
                r.push(check_power_class_sums(&weight_lists(set.elements(), 6)));
                r.push(check_mode_equivalence(&self.engine, set, c.max_n as usize, c.max_genus));
                r
            }
            Suite::All => unreachable!("expanded by the caller"),
        }
    }
}

fn baseline_lists() -> Vec<Vec<Weight>> {
    ["1/2,1/2,1/2", "1,1", "0+,0+,0+"]
        .iter()
        .map(|s| WeightSet::parse_list(s).expect("baseline weights parse"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        let list = parse_spec("(0;1/3) (0;1/3)(2;0+)").unwrap();
        assert_eq!(list.len(), 3);
        assert_eq!(list[2].k, 2);
        assert!(list[2].a.infinitesimal());
        for bad in ["", "(0;1", "0;1", "(-1;1)", "(x;1)", "(0;3/2)", "(0,1)"] {
            assert!(parse_spec(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn closes_weights() {
        let set = resolve_weights("1/2").unwrap();
        assert_eq!(set.to_string(), "1/2,1");
        assert!(resolve_weights("").is_err());
    }

    #[test]
    fn mismatch_is_a_check_failure() {
        let e = CliError::Cache(CorrelatorError::Mismatch {
            line: 1,
            key: "k".into(),
            stored: "1".into(),
            computed: "2".into(),
        });
        assert_eq!(e.exit_code(), 1);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
    }
}
