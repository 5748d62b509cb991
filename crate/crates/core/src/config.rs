//! Flat `key = value` run configuration.
//!
//! ```text
//! # Example 1
//! c = 0.02
//! lambda = 0.09
//! mu = 0.02
//! r = 0.015
//! sigma = 0.2
//! a = 1
//! b = 20
//! claim.kind = exponential
//! claim.mean = 1
//! ```
//!
//! `claim.kind = exp_mixture` takes `claim.weights` and `claim.means` as
//! comma-separated lists. Optional keys: `x0` (comma-separated initial
//! surpluses for simulation) and `oracle_mode` (`true`/`false`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClaimLaw, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClaimSpec {
    Exponential { mean: f64 },
    ExpMixture { weights: Vec<f64>, means: Vec<f64> },
}

impl ClaimSpec {
    pub fn law(&self) -> Result<ClaimLaw> {
        match self {
            ClaimSpec::Exponential { mean } => Ok(ClaimLaw::exponential(*mean)),
            ClaimSpec::ExpMixture { weights, means } => ClaimLaw::exp_mixture(weights, means),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ModelParams,
    pub claim: ClaimSpec,
    pub x0: Option<Vec<f64>>,
    pub oracle_mode: bool,
}

const KEYS: &[&str] = &[
    "c",
    "lambda",
    "mu",
    "r",
    "sigma",
    "a",
    "b",
    "claim.kind",
    "claim.mean",
    "claim.weights",
    "claim.means",
    "x0",
    "oracle_mode",
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                msg: format!("expected `key = value`, found {line:?}"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("unknown key {k:?}"),
                });
            }
            if let Some((prev, _)) = kv.get(k) {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("duplicate key {k:?} (first set on line {prev})"),
                });
            }
            kv.insert(k.to_string(), (line_no, v.to_string()));
        }

        let mut missing = Vec::new();
        let mut num = |key: &str| -> Result<f64> {
            match kv.get(key) {
                Some((line, v)) => v.parse::<f64>().map_err(|e| Error::Config {
                    line: *line,
                    msg: format!("{key}: {v:?} is not a number ({e})"),
                }),
                None => {
                    missing.push(key.to_string());
                    Ok(f64::NAN)
                }
            }
        };
        let params = ModelParams {
            c: num("c")?,
            lambda: num("lambda")?,
            mu: num("mu")?,
            r: num("r")?,
            sigma: num("sigma")?,
            a: num("a")?,
            b: num("b")?,
        };
        let list = |key: &str| -> Result<Option<Vec<f64>>> {
            kv.get(key)
                .map(|(line, v)| {
                    v.split(',')
                        .map(|s| {
                            s.trim().parse::<f64>().map_err(|e| Error::Config {
                                line: *line,
                                msg: format!("{key}: {s:?} is not a number ({e})"),
                            })
                        })
                        .collect()
                })
                .transpose()
        };
        let kind = kv.get("claim.kind").map(|(l, v)| (*l, v.as_str()));
        let claim = match kind {
            None | Some((_, "exponential")) => match kv.get("claim.mean") {
                Some((line, v)) => ClaimSpec::Exponential {
                    mean: v.parse().map_err(|e| Error::Config {
                        line: *line,
                        msg: format!("claim.mean: {v:?} is not a number ({e})"),
                    })?,
                },
                None => {
                    missing.push("claim.mean".into());
                    ClaimSpec::Exponential { mean: f64::NAN }
                }
            },
            Some((_, "exp_mixture")) => {
                let w = list("claim.weights")?;
                let m = list("claim.means")?;
                if w.is_none() {
                    missing.push("claim.weights".into());
                }
                if m.is_none() {
                    missing.push("claim.means".into());
                }
                ClaimSpec::ExpMixture {
                    weights: w.unwrap_or_default(),
                    means: m.unwrap_or_default(),
                }
            }
            Some((line, other)) => {
                return Err(Error::Config {
                    line,
                    msg: format!("claim.kind must be `exponential` or `exp_mixture`, found {other:?}"),
                })
            }
        };
        if kind.is_none() {
            missing.push("claim.kind".into());
        }
        let oracle_mode = match kv.get("oracle_mode") {
            None => false,
            Some((line, v)) => v.parse::<bool>().map_err(|_| Error::Config {
                line: *line,
                msg: format!("oracle_mode must be `true` or `false`, found {v:?}"),
            })?,
        };
        if !missing.is_empty() {
            return Err(Error::Validation(
                missing.into_iter().map(|k| format!("missing key {k:?}")).collect(),
            ));
        }
        Ok(Self {
            params,
            claim,
            x0: list("x0")?,
            oracle_mode,
        })
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = format!(
            "c = {}\nlambda = {}\nmu = {}\nr = {}\nsigma = {}\na = {}\nb = {}\n",
            p.c, p.lambda, p.mu, p.r, p.sigma, p.a, p.b
        );
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        match &self.claim {
            ClaimSpec::Exponential { mean } => {
                s += &format!("claim.kind = exponential\nclaim.mean = {mean}\n");
            }
            ClaimSpec::ExpMixture { weights, means } => {
                s += &format!(
                    "claim.kind = exp_mixture\nclaim.weights = {}\nclaim.means = {}\n",
                    join(weights),
                    join(means)
                );
            }
        }
        if let Some(x0) = &self.x0 {
            s += &format!("x0 = {}\n", join(x0));
        }
        if self.oracle_mode {
            s += "oracle_mode = true\n";
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = "# Example 1\nc = 0.02\nlambda = 0.09\nmu = 0.02\nr = 0.015\nsigma = 0.1\na = 1\nb = 20\n\
                       claim.kind = exponential\nclaim.mean = 1\n";

    #[test]
    fn parses_example_one() {
        let cfg = RunConfig::parse(EX1).unwrap();
        assert_eq!(cfg.params, ModelParams::example1());
        assert_eq!(cfg.claim, ClaimSpec::Exponential { mean: 1.0 });
        assert!(!cfg.oracle_mode);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::parse(EX1).unwrap();
        cfg.x0 = Some(vec![1.0, 2.5]);
        cfg.claim = ClaimSpec::ExpMixture {
            weights: vec![0.25, 0.75],
            means: vec![0.5, 1.5],
        };
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = EX1.replace("sigma = 0.1", "sigma = abc");
        match RunConfig::parse(&bad) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
        match RunConfig::parse(&format!("{EX1}colour = red\n")) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 11),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            RunConfig::parse(&format!("{EX1}c = 1\n")),
            Err(Error::Config { line: 11, .. })
        ));
    }

    #[test]
    fn missing_keys_are_listed() {
        match RunConfig::parse("c = 1\n") {
            Err(Error::Validation(v)) => assert!(v.len() >= 7, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }
}
