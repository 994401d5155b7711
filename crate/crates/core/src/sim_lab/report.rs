//! Per-cell aggregation, condition comparisons, λ sweeps and table output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{two_proportion_test, welch_t_test, TestResult, MEAN_TEST, PROPORTION_TEST};
use super::{run_batch, BatchConfig, Classification, SimError, TrialRecord};
use crate::gridworld::{BarrierSide, Condition};
use crate::pragmatics::SpeakerConfig;
use crate::trial_factory::TrialSuite;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub condition: Condition,
    pub barrier_side: BarrierSide,
    pub n: u64,
    pub counts: BTreeMap<Classification, u64>,
    pub proportions: BTreeMap<Classification, f64>,
    /// Per-trial mean over records that carry a reaction time.
    pub mean_reaction_time: Option<f64>,
    pub mean_utility_cents: f64,
}

impl CellSummary {
    fn from_records(condition: Condition, barrier_side: BarrierSide, records: &[&TrialRecord]) -> Self {
        let n = records.len() as u64;
        let mut counts: BTreeMap<Classification, u64> = Classification::ALL.into_iter().map(|c| (c, 0)).collect();
        for r in records {
            *counts.entry(r.classification).or_default() += 1;
        }
        let proportions = counts
            .iter()
            .map(|(c, k)| (*c, if n == 0 { 0.0 } else { *k as f64 / n as f64 }))
            .collect();
        let rts: Vec<f64> = records.iter().filter_map(|r| r.reaction_time).collect();
        let mean_reaction_time = (!rts.is_empty()).then(|| rts.iter().sum::<f64>() / rts.len() as f64);
        let mean_utility_cents = if n == 0 {
            0.0
        } else {
            records.iter().map(|r| r.utility.0 as f64).sum::<f64>() / n as f64
        };
        CellSummary { condition, barrier_side, n, counts, proportions, mean_reaction_time, mean_utility_cents }
    }

    pub fn count(&self, c: Classification) -> u64 {
        self.counts.get(&c).copied().unwrap_or(0)
    }

    pub fn proportion(&self, c: Classification) -> f64 {
        self.proportions.get(&c).copied().unwrap_or(0.0)
    }
}

/// Barrier-R against barrier-S within one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub condition: Condition,
    pub optimal_rate: TestResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction_time: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    pub comparisons: Vec<Comparison>,
    pub proportion_test: String,
    pub reaction_time_test: String,
    pub reaction_time_unit: String,
}

impl Summary {
    pub fn cell(&self, condition: Condition, side: BarrierSide) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.condition == condition && c.barrier_side == side)
    }

    pub fn optimal_rate(&self, condition: Condition, side: BarrierSide) -> Option<f64> {
        self.cell(condition, side).map(|c| c.proportion(Classification::OptimalFeature))
    }
}

/// Aggregates records into the six (condition, barrier side) cells, in
/// condition order with R before S. Cells without records are omitted;
/// a condition is compared only when both of its cells are present.
pub fn summarize(records: &[TrialRecord]) -> Result<Summary, SimError> {
    let mut cells = Vec::new();
    let mut comparisons = Vec::new();
    for condition in Condition::ALL {
        let mut sides = Vec::new();
        for side in BarrierSide::BOTH {
            let rs: Vec<&TrialRecord> =
                records.iter().filter(|r| r.condition == condition && r.barrier_side == side).collect();
            if !rs.is_empty() {
                let rts: Vec<f64> = rs.iter().filter_map(|r| r.reaction_time).collect();
                let cell = CellSummary::from_records(condition, side, &rs);
                sides.push((cell.clone(), rts));
                cells.push(cell);
            }
        }
        if let [(r, rt_r), (s, rt_s)] = sides.as_slice() {
            let optimal_rate = two_proportion_test(
                r.count(Classification::OptimalFeature),
                r.n,
                s.count(Classification::OptimalFeature),
                s.n,
            )?;
            let reaction_time = if rt_r.len() >= 2 && rt_s.len() >= 2 {
                Some(welch_t_test(rt_r, rt_s)?)
            } else {
                None
            };
            comparisons.push(Comparison { condition, optimal_rate, reaction_time });
        }
    }
    Ok(Summary {
        cells,
        comparisons,
        proportion_test: PROPORTION_TEST.into(),
        reaction_time_test: MEAN_TEST.into(),
        reaction_time_unit: "seconds, per-trial mean".into(),
    })
}

// ---------------------------------------------------------------------------
// λ sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// λ = 0: the speaker ignores utilities and picks uniformly.
    pub sanity: SweepRow,
}

/// One batch per λ with the same seed; `base` supplies everything but λ.
pub fn sweep_lambda(suite: &TrialSuite, lambdas: &[f64], base: &BatchConfig) -> Result<SweepTable, SimError> {
    let row = |lambda: f64| -> Result<SweepRow, SimError> {
        let config = BatchConfig { speaker: SpeakerConfig { lambda, ..base.speaker.clone() }, ..base.clone() };
        let records = run_batch(suite, &config)?;
        Ok(SweepRow { lambda, cells: summarize(&records)?.cells })
    };
    let rows = lambdas.iter().map(|l| row(*l)).collect::<Result<Vec<_>, _>>()?;
    Ok(SweepTable { rows, sanity: row(0.0)? })
}

/// 1, 2, ..., 10 style grid between `min` and `max` inclusive.
pub fn lambda_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || max < min {
        return Vec::new();
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| min + step * i as f64).collect()
}

// ---------------------------------------------------------------------------
// Trend and tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub trial_index: u32,
    pub n: u64,
    pub optimal_rate: f64,
    pub mean_reaction_time: Option<f64>,
}

/// Optimal-signal rate and mean RT by position in the trial order, for
/// eyeballing learning or fatigue.
pub fn trend_by_trial_index(records: &[TrialRecord]) -> Vec<TrendRow> {
    let mut by_index: BTreeMap<u32, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        by_index.entry(r.trial_index).or_default().push(r);
    }
    by_index
        .into_iter()
        .map(|(trial_index, rs)| {
            let n = rs.len() as u64;
            let optimal = rs.iter().filter(|r| r.classification == Classification::OptimalFeature).count();
            let rts: Vec<f64> = rs.iter().filter_map(|r| r.reaction_time).collect();
            TrendRow {
                trial_index,
                n,
                optimal_rate: optimal as f64 / n as f64,
                mean_reaction_time: (!rts.is_empty()).then(|| rts.iter().sum::<f64>() / rts.len() as f64),
            }
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn cells_csv(cells: &[CellSummary]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["condition".to_string(), "barrier_side".into(), "n".into()];
    header.extend(Classification::ALL.iter().map(|c| c.name().to_string()));
    header.extend(["mean_reaction_time".into(), "mean_utility_cents".into()]);
    w.write_record(&header)?;
    for c in cells {
        let mut row = vec![c.condition.to_string(), c.barrier_side.to_string(), c.n.to_string()];
        row.extend(Classification::ALL.iter().map(|k| format!("{:.6}", c.proportion(*k))));
        row.push(opt(c.mean_reaction_time));
        row.push(format!("{:.4}", c.mean_utility_cents));
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

pub fn comparisons_csv(comparisons: &[Comparison]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["condition", "z", "p_optimal", "t_rt", "df_rt", "p_rt"])?;
    for c in comparisons {
        let rt = c.reaction_time;
        w.write_record([
            c.condition.to_string(),
            format!("{:.6}", c.optimal_rate.statistic),
            format!("{:.6e}", c.optimal_rate.p_value),
            opt(rt.map(|t| t.statistic)),
            opt(rt.and_then(|t| t.df)),
            rt.map(|t| format!("{:.6e}", t.p_value)).unwrap_or_default(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

pub fn sweep_csv(table: &SweepTable) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["lambda".to_string(), "condition".into(), "barrier_side".into(), "n".into()];
    header.extend(Classification::ALL.iter().map(|c| c.name().to_string()));
    w.write_record(&header)?;
    for row in table.rows.iter().chain(std::iter::once(&table.sanity)) {
        for c in &row.cells {
            let mut rec = vec![format!("{}", row.lambda), c.condition.to_string(), c.barrier_side.to_string(), c.n.to_string()];
            rec.extend(Classification::ALL.iter().map(|k| format!("{:.6}", c.proportion(*k))));
            w.write_record(&rec)?;
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

pub fn trend_csv(rows: &[TrendRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial_index", "n", "optimal_rate", "mean_reaction_time"])?;
    for r in rows {
        w.write_record([r.trial_index.to_string(), r.n.to_string(), format!("{:.6}", r.optimal_rate), opt(r.mean_reaction_time)])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

/// Plain-text report of a summary.
pub fn render_report(summary: &Summary) -> String {
    let mut out = String::new();
    out.push_str("cell            n     optimal  suboptimal  do      irrational  mean RT\n");
    for c in &summary.cells {
        out.push_str(&format!(
            "{:<10} {}  {:>5}  {:>6.1}%  {:>9.1}%  {:>5.1}%  {:>9.1}%  {}\n",
            c.condition.name(),
            c.barrier_side,
            c.n,
            100.0 * c.proportion(Classification::OptimalFeature),
            100.0 * c.proportion(Classification::SuboptimalFeature),
            100.0 * c.proportion(Classification::Do),
            100.0 * c.proportion(Classification::Irrational),
            c.mean_reaction_time.map(|t| format!("{t:.2}s")).unwrap_or_else(|| "-".into()),
        ));
    }
    out.push_str(&format!("\noptimal-rate R vs S: {}\n", summary.proportion_test));
    for c in &summary.comparisons {
        out.push_str(&format!(
            "  {:<10} z = {:>7.3}  p = {:.3e}\n",
            c.condition.name(),
            c.optimal_rate.statistic,
            c.optimal_rate.p_value
        ));
    }
    if summary.comparisons.iter().any(|c| c.reaction_time.is_some()) {
        out.push_str(&format!("reaction time R vs S: {} ({})\n", summary.reaction_time_test, summary.reaction_time_unit));
        for c in &summary.comparisons {
            if let Some(t) = c.reaction_time {
                out.push_str(&format!(
                    "  {:<10} t = {:>7.3}  df = {:.1}  p = {:.3e}\n",
                    c.condition.name(),
                    t.statistic,
                    t.df.unwrap_or(f64::NAN),
                    t.p_value
                ));
            }
        }
    }
    out
}
