//! Offline model operations exposed over HTTP. All of them are CPU-bound and
//! run on the blocking pool.

use signalgame_core::sim_lab::cleaning::flatten;
use signalgame_core::sim_lab::report::{
    cells_csv, comparisons_csv, lambda_grid, render_report, sweep_csv, trend_csv,
};
use signalgame_core::sim_lab::{clean_human_data, run_batch, summarize, sweep_lambda, trend_by_trial_index};
use signalgame_core::trial_factory::{build_condition, build_suite, validate_suite, TrialSuite};
use signalgame_protocol::{
    AnalyzeRequest, AnalyzeResponse, GenerateRequest, SimulateRequest, SimulateResponse, SweepRequest, SweepResponse,
    ValidateResponse,
};

use crate::error::ServiceError;

fn bad(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::BadRequest(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Internal(e.to_string())
}

pub fn generate(req: &GenerateRequest) -> Result<TrialSuite, ServiceError> {
    match req.condition {
        Some(c) => build_condition(req.seed, c),
        None => build_suite(req.seed),
    }
    .map_err(internal)
}

pub fn simulate(req: &SimulateRequest) -> Result<SimulateResponse, ServiceError> {
    let records = run_batch(&req.suite, &req.config).map_err(bad)?;
    let summary = summarize(&records).map_err(bad)?;
    let report = render_report(&summary);
    Ok(SimulateResponse { records, summary, report })
}

pub fn sweep(req: &SweepRequest) -> Result<SweepResponse, ServiceError> {
    if !(req.min.is_finite() && req.max.is_finite() && req.step > 0.0 && req.min <= req.max && req.min >= 0.0) {
        return Err(bad("lambda range needs 0 <= min <= max and step > 0"));
    }
    let lambdas = lambda_grid(req.min, req.max, req.step);
    let table = sweep_lambda(&req.suite, &lambdas, &req.config).map_err(bad)?;
    let csv = sweep_csv(&table).map_err(internal)?;
    Ok(SweepResponse { table, csv })
}

/// Participant exports are cleaned against their suite first; plain
/// records are analyzed as given. Both kinds may be combined.
pub fn analyze(req: &AnalyzeRequest) -> Result<AnalyzeResponse, ServiceError> {
    let mut records = req.records.clone();
    let drop_log = match &req.participants {
        Some(participants) => {
            let suite = req.suite.as_ref().ok_or_else(|| bad("participants need the suite they were run on"))?;
            let config = req.cleaning.clone().unwrap_or_default();
            let (kept, log) = clean_human_data(participants, suite, &config).map_err(bad)?;
            records.extend(flatten(&kept));
            Some(log)
        }
        None => None,
    };
    if records.is_empty() {
        return Err(bad("no records to analyze"));
    }
    let summary = summarize(&records).map_err(bad)?;
    let trend = trend_by_trial_index(&records);
    Ok(AnalyzeResponse {
        report: render_report(&summary),
        cells_csv: cells_csv(&summary.cells).map_err(internal)?,
        comparisons_csv: comparisons_csv(&summary.comparisons).map_err(internal)?,
        trend_csv: trend_csv(&trend).map_err(internal)?,
        summary,
        trend,
        drop_log,
    })
}

pub fn validate(suite: &TrialSuite) -> Result<ValidateResponse, ServiceError> {
    validate_suite(suite).map(|violations| ValidateResponse { violations }).map_err(bad)
}
