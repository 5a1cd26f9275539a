//! Subjective ratings and run logs to summary statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use easy_iil_core::metrics::{mean_std, wilcoxon_signed_rank, MeanStd, PhaseFilter, Rating, RunLog, WilcoxonResult};
use easy_iil_core::StatsError;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::log::ParsedLog;

#[derive(Clone, Debug, PartialEq, Deserialize)]
struct RatingRow {
    user_id: String,
    task: String,
    condition: String,
    #[serde(rename = "P")]
    p: i64,
    #[serde(rename = "E")]
    e: i64,
    #[serde(rename = "F")]
    f: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatingRecord {
    pub user_id: String,
    pub task: String,
    pub condition: String,
    pub rating: Rating,
}

/// Parse a ratings CSV with header `user_id,task,condition,P,E,F`.
pub fn read_ratings<R: Read>(input: R) -> Result<Vec<RatingRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<RatingRow>().enumerate() {
        let row = row?;
        let key = (row.user_id.clone(), row.task.clone(), row.condition.clone());
        if !seen.insert(key) {
            return Err(CliError::Config(format!(
                "row {}: duplicate rating for user {} on {} / {}",
                i + 2,
                row.user_id,
                row.task,
                row.condition
            )));
        }
        out.push(RatingRecord {
            rating: Rating::new(row.p, row.e, row.f).map_err(|e| CliError::Config(format!("row {}: {e}", i + 2)))?,
            user_id: row.user_id,
            task: row.task,
            condition: row.condition,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub task: String,
    pub condition: String,
    pub burden: MeanStd,
    pub performance: MeanStd,
    pub effort: MeanStd,
    pub frustration: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub task: String,
    pub a: String,
    pub b: String,
    /// Users rated under both conditions.
    pub pairs: usize,
    pub test: Option<WilcoxonResult>,
    /// Every paired difference was zero; `p` is then 1.
    pub all_zero: bool,
    pub p: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRates {
    pub source: String,
    pub offline: Option<f64>,
    pub online: Option<f64>,
    pub total: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub groups: Vec<GroupSummary>,
    pub comparisons: Vec<Comparison>,
    pub logs: Vec<LogRates>,
}

fn scale(rs: &[&Rating], f: impl Fn(&Rating) -> f64) -> Result<MeanStd> {
    Ok(mean_std(&rs.iter().map(|r| f(r)).collect::<Vec<_>>())?)
}

/// Burden per task and condition, and a paired test of burden between
/// every pair of conditions within a task.
pub fn analyze_ratings(records: &[RatingRecord]) -> Result<(Vec<GroupSummary>, Vec<Comparison>)> {
    let mut groups: BTreeMap<(&str, &str), Vec<&RatingRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((&r.task, &r.condition)).or_default().push(r);
    }
    let mut summaries = Vec::new();
    for ((task, condition), rs) in &groups {
        let ratings: Vec<&Rating> = rs.iter().map(|r| &r.rating).collect();
        summaries.push(GroupSummary {
            task: task.to_string(),
            condition: condition.to_string(),
            burden: scale(&ratings, Rating::burden)?,
            performance: scale(&ratings, |r| f64::from(r.performance()))?,
            effort: scale(&ratings, |r| f64::from(r.effort()))?,
            frustration: scale(&ratings, |r| f64::from(r.frustration()))?,
        });
    }
    let mut by_task: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (task, condition) in groups.keys() {
        by_task.entry(task).or_default().push(condition);
    }
    let mut comparisons = Vec::new();
    for (task, conds) in &by_task {
        for (i, a) in conds.iter().enumerate() {
            for b in &conds[i + 1..] {
                let burden_of = |c: &str| -> BTreeMap<&str, f64> {
                    groups[&(*task, c)].iter().map(|r| (r.user_id.as_str(), r.rating.burden())).collect()
                };
                let (ma, mb) = (burden_of(a), burden_of(b));
                let (x, y): (Vec<f64>, Vec<f64>) = ma
                    .iter()
                    .filter_map(|(u, va)| mb.get(u).map(|vb| (*va, *vb)))
                    .unzip();
                let (test, all_zero, p) = match wilcoxon_signed_rank(&x, &y) {
                    Ok(t) => (Some(t), false, Some(t.p)),
                    Err(StatsError::AllZeroDifferences { p }) => (None, true, Some(p)),
                    Err(StatsError::EmptySample) => (None, false, None),
                    Err(e) => return Err(e.into()),
                };
                comparisons.push(Comparison {
                    task: task.to_string(),
                    a: a.to_string(),
                    b: b.to_string(),
                    pairs: x.len(),
                    test,
                    all_zero,
                    p,
                });
            }
        }
    }
    Ok((summaries, comparisons))
}

pub fn log_rates(source: &str, log: &ParsedLog) -> LogRates {
    let episodes = log.episodes();
    let run = RunLog::from_episodes(&episodes);
    LogRates {
        source: source.into(),
        offline: run.intervention_rate(PhaseFilter::Offline).ok(),
        online: run.intervention_rate(PhaseFilter::Online).ok(),
        total: run.intervention_rate(PhaseFilter::All).ok(),
    }
}
