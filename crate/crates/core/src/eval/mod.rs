//! Success rate, success weighted by path length, stop budgets and
//! evaluation reports.

mod agents;
mod run;

pub use agents::{Agent, OracleAgent, PolicyAgent, RandomAgent};
pub use run::{eval_episodes, evaluate, run_episode, run_episode_with_budget, EpisodeRun, EvalOptions, EvalRun};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::SceneType;
use crate::sim::{Condition, EpisodeLog};

/// Maximum number of STOP actions an evaluated episode may spend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Budget {
    Stops(u32),
    Unlimited,
}

impl Budget {
    pub const STANDARD: [Budget; 4] = [
        Budget::Stops(1),
        Budget::Stops(2),
        Budget::Stops(3),
        Budget::Unlimited,
    ];

    pub fn limit(self) -> Option<usize> {
        match self {
            Budget::Stops(k) => Some(k as usize),
            Budget::Unlimited => None,
        }
    }

    /// Parses a comma-separated list such as `1,2,3,inf`.
    pub fn parse_list(s: &str) -> Result<Vec<Budget>> {
        let mut out: Vec<Budget> = s
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::Config("empty budget list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Stops(k) => write!(f, "{k}"),
            Budget::Unlimited => f.write_str("inf"),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "unlimited" => Ok(Budget::Unlimited),
            _ => match s.parse::<u32>() {
                Ok(k) if k > 0 => Ok(Budget::Stops(k)),
                _ => Err(Error::Config(format!("bad stop budget {s:?}"))),
            },
        }
    }
}

impl Serialize for Budget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) => Budget::from_str(&k.to_string()),
            Raw::Str(s) => Budget::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Outcome of one episode under one stop budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub success: bool,
    pub p_len_m: f64,
    pub l_len_m: f64,
    pub stops_used: u32,
    pub steps: u32,
    pub scene_type: SceneType,
    pub condition: Condition,
}

/// Fraction of successful episodes.
pub fn success_rate(records: &[EpisodeRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(records.iter().filter(|r| r.success).count() as f64 / records.len() as f64)
}

/// Mean of `S_i * l_i / max(p_i, l_i)`.
pub fn spl(records: &[EpisodeRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    for r in records {
        if r.success {
            if !(r.l_len_m > 0.0) {
                return Err(Error::InvalidRecord(format!(
                    "successful record with shortest path {}",
                    r.l_len_m
                )));
            }
            sum += r.l_len_m / r.p_len_m.max(r.l_len_m);
        }
    }
    Ok(sum / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub sr: f64,
    pub spl: f64,
    pub n: usize,
}

impl Cell {
    pub fn from_records(records: &[EpisodeRecord]) -> Result<Self> {
        Ok(Self {
            sr: success_rate(records)?,
            spl: spl(records)?,
            n: records.len(),
        })
    }
}

/// Aggregate key used next to the per-scene-type entries.
pub const ALL_SCENES: &str = "all";

/// `{scene_type: {method: {budget: {sr, spl, n}}}}`; the `all` entry
/// aggregates every scene type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvalReport {
    pub cells: BTreeMap<String, BTreeMap<String, BTreeMap<Budget, Cell>>>,
}

impl EvalReport {
    /// Builds every cell from per-budget records, grouped by scene type.
    pub fn from_records(method: &str, by_budget: &BTreeMap<Budget, Vec<EpisodeRecord>>) -> Result<Self> {
        let mut report = Self::default();
        report.add(method, by_budget)?;
        Ok(report)
    }

    pub fn add(&mut self, method: &str, by_budget: &BTreeMap<Budget, Vec<EpisodeRecord>>) -> Result<()> {
        for (&budget, records) in by_budget {
            let mut groups: BTreeMap<String, Vec<EpisodeRecord>> = BTreeMap::new();
            for r in records {
                groups.entry(r.scene_type.to_string()).or_default().push(*r);
            }
            groups.insert(ALL_SCENES.to_string(), records.clone());
            for (scene, recs) in groups {
                self.cells
                    .entry(scene)
                    .or_default()
                    .entry(method.to_string())
                    .or_default()
                    .insert(budget, Cell::from_records(&recs)?);
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: EvalReport) {
        for (scene, methods) in other.cells {
            let dst = self.cells.entry(scene).or_default();
            for (m, budgets) in methods {
                dst.entry(m).or_default().extend(budgets);
            }
        }
    }

    pub fn get(&self, scene: &str, method: &str, budget: Budget) -> Option<Cell> {
        self.cells.get(scene)?.get(method)?.get(&budget).copied()
    }

    /// Flat `scene_type,method,budget,sr,spl,n` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene_type,method,budget,sr,spl,n\n");
        for (scene, methods) in &self.cells {
            for (m, budgets) in methods {
                for (b, c) in budgets {
                    out.push_str(&format!("{scene},{m},{b},{},{},{}\n", c.sr, c.spl, c.n));
                }
            }
        }
        out
    }
}

/// Scores a logged episode under `budget`: success iff one of the first
/// `k` stops was eligible. Failed episodes end at the `k`-th stop, whose
/// step and path length come from `path_at_stop` when available.
pub fn record_for_budget(
    log: &EpisodeLog,
    scene_type: SceneType,
    budget: Budget,
    path_at_stop: Option<&[f64]>,
) -> EpisodeRecord {
    let k = budget.limit().unwrap_or(usize::MAX);
    let considered = &log.stops[..log.stops.len().min(k)];
    let success = considered.iter().any(|s| s.eligible);
    let (p_len_m, steps) = if !success && log.stops.len() >= k {
        let stop = log.stops[k - 1];
        let p = path_at_stop.and_then(|p| p.get(k - 1).copied()).unwrap_or(log.p_len_m);
        (p, stop.step + 1)
    } else {
        (log.p_len_m, log.steps)
    };
    EpisodeRecord {
        success,
        p_len_m,
        l_len_m: log.l_len_m,
        stops_used: considered.len() as u32,
        steps,
        scene_type,
        condition: log.condition,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(success: bool, l: f64, p: f64) -> EpisodeRecord {
        EpisodeRecord {
            success,
            p_len_m: p,
            l_len_m: l,
            stops_used: 1,
            steps: 10,
            scene_type: SceneType::Kitchen,
            condition: Condition::Baseline,
        }
    }

    #[test]
    fn success_rate_examples() {
        assert_eq!(success_rate(&[rec(true, 1.0, 1.0); 4]).unwrap(), 1.0);
        assert_eq!(success_rate(&[rec(false, 1.0, 1.0); 4]).unwrap(), 0.0);
        let mixed = [rec(true, 1.0, 1.0), rec(true, 1.0, 1.0), rec(true, 1.0, 1.0), rec(false, 1.0, 1.0)];
        assert_eq!(success_rate(&mixed).unwrap(), 0.75);
        assert!(matches!(success_rate(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn spl_examples() {
        assert_eq!(spl(&[rec(true, 2.0, 2.0)]).unwrap(), 1.0);
        assert_eq!(spl(&[rec(false, 2.0, 0.5)]).unwrap(), 0.0);
        assert_eq!(spl(&[rec(true, 2.0, 4.0), rec(true, 1.0, 1.0)]).unwrap(), 0.75);
        assert!(matches!(spl(&[rec(true, 0.0, 1.0)]), Err(Error::InvalidRecord(_))));
        assert!(matches!(spl(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn budget_parsing() {
        assert_eq!(
            Budget::parse_list("inf,1,3,2").unwrap(),
            Budget::STANDARD.to_vec()
        );
        assert!(Budget::parse_list("0").is_err());
        assert!(Budget::parse_list("x").is_err());
        assert_eq!(serde_json::to_string(&Budget::Unlimited).unwrap(), "\"inf\"");
        let b: Budget = serde_json::from_str("2").unwrap();
        assert_eq!(b, Budget::Stops(2));
    }
}
