//! The campaign results table and its CSV form.

use std::io::{Read, Write};

use bitshield::campaign::CampaignResult;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const HEADER: &str = "scheme,line_width,dtype,ber,mean_accuracy,std,iterations,mean_flips,corrected,due";

/// One row per (scheme, BER). Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub scheme: String,
    pub line_width: u32,
    pub dtype: String,
    pub ber: f64,
    pub mean_accuracy: f64,
    pub std: f64,
    pub iterations: usize,
    pub mean_flips: f64,
    pub corrected: u64,
    pub due: u64,
}

/// Scheme name as written in the `scheme` column, e.g. `cep(5)+secded`.
pub fn scheme_name(scheme: &bitshield::SchemeConfig) -> String {
    let label = scheme.label();
    label
        .rsplit_once('/')
        .map_or(label.clone(), |(name, _)| name.to_string())
}

pub fn rows_from(result: &CampaignResult) -> Vec<ResultsRow> {
    result
        .rows
        .iter()
        .map(|r| ResultsRow {
            scheme: scheme_name(&result.scheme),
            line_width: result.scheme.line_width,
            dtype: result.layout.to_string(),
            ber: r.ber,
            mean_accuracy: r.mean_accuracy,
            std: r.sample_std,
            iterations: r.iterations_run,
            mean_flips: r.mean_flips,
            corrected: r.corrected_count,
            due: r.due_count,
        })
        .collect()
}

pub fn write_rows(w: impl Write, rows: &[ResultsRow]) -> CliResult<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(HEADER.split(','))?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows(r: impl Read) -> CliResult<Vec<ResultsRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CliError::precondition("results file is empty"));
    }
    if header.join(",") != HEADER {
        return Err(CliError::precondition(format!(
            "unexpected CSV header `{}`, expected `{HEADER}`",
            header.join(",")
        )));
    }
    let rows = rdr.deserialize().collect::<Result<Vec<ResultsRow>, _>>()?;
    if rows.is_empty() {
        return Err(CliError::precondition("results file has no rows"));
    }
    Ok(rows)
}
