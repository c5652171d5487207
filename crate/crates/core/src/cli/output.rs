//! Result files: CSV tables with 9 significant digits and JSON summaries.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::multistage::{MultiStageResult, SweepRow};
use crate::optim::{LocalOptimum, OptimizationResult};
use crate::sim::{compute_metrics, SimRecord, StopReason};

/// Decimal with 9 significant digits.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.is_finite() {
        format!("{v:.8e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}_{i}"))
}

pub fn time_series_header(species: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "u", "j", "p0"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["c_ins", "c_acm", "R", "Rbar"] {
        h.extend(numbered(prefix, species));
    }
    h
}

fn csv_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn write_time_series(record: &SimRecord, out: impl Write) -> io::Result<()> {
    let s = record.species_count();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(time_series_header(s)).map_err(csv_error)?;
    for k in 0..record.len() {
        let mut row = vec![record.t[k], record.u[k], record.j[k], record.p0[k]];
        for series in [
            &record.c_ins,
            &record.c_acm,
            &record.removal,
            &record.cum_removal,
        ] {
            row.extend(series.iter().map(|c| c[k]));
        }
        w.write_record(row.iter().map(|v| format_value(*v)))
            .map_err(csv_error)?;
    }
    w.flush()
}

/// Parsed numeric CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_numeric_csv(input: impl io::Read) -> io::Result<Table> {
    let mut r = csv::Reader::from_reader(input);
    let header = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
            })
            .collect::<io::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// `x` and the radius at the start, midpoint and end of the run.
pub fn write_profiles(record: &SimRecord, out: impl Write) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "a_start", "a_mid", "a_end"])
        .map_err(csv_error)?;
    let Some(first) = record.snapshots.first() else {
        return w.flush();
    };
    for (k, x) in first.1.nodes().enumerate() {
        let mut row = vec![format_value(x)];
        row.extend(
            record
                .snapshots
                .iter()
                .map(|(_, p)| format_value(p.radii()[k])),
        );
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()
}

fn stop_name(stop: StopReason) -> &'static str {
    match stop {
        StopReason::FluxThreshold => "flux_threshold",
        StopReason::StepsCompleted => "steps_completed",
        StopReason::PressureViolation => "pressure_violation",
        StopReason::PoreClosed => "pore_closed",
        StopReason::StepCap => "step_cap",
        StopReason::VolumeProcessed => "volume_processed",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub stop: &'static str,
    pub steps: usize,
    pub t_final: f64,
    pub throughput: f64,
    pub initial_flux: f64,
    pub initial_removal: Vec<f64>,
    pub c_acm: Vec<f64>,
    pub cum_removal: Vec<f64>,
    pub purity: Option<Vec<f64>>,
    pub product_yield: f64,
    pub p0_initial: f64,
    pub p0_final: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub profile_times: Vec<f64>,
}

impl RunSummary {
    pub fn from_record(record: &SimRecord) -> Self {
        let metrics = compute_metrics(record, &record.inlet).ok();
        let c_acm = record.final_c_acm();
        let throughput = record.throughput();
        Self {
            stop: stop_name(record.stop),
            steps: record.len().saturating_sub(1),
            t_final: record.t_final(),
            throughput,
            initial_flux: record.u.first().copied().unwrap_or(0.0),
            initial_removal: record.initial_removal(),
            cum_removal: record.final_cum_removal(),
            purity: metrics.as_ref().map(|m| m.purity.clone()),
            product_yield: metrics.map_or(0.0, |m| m.product_yield),
            p0_initial: record.p0.first().copied().unwrap_or(0.0),
            p0_final: record.p0.last().copied().unwrap_or(0.0),
            profile_times: record.snapshots.iter().map(|(t, _)| *t).collect(),
            c_acm,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimumEntry {
    pub start: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub feasible: bool,
    pub objective: Option<f64>,
    pub violation: f64,
    pub evaluations: usize,
    pub iterations: usize,
}

impl From<&LocalOptimum> for OptimumEntry {
    fn from(o: &LocalOptimum) -> Self {
        Self {
            start: o.start.clone(),
            coefficients: o.coefficients.clone(),
            feasible: o.is_feasible(),
            objective: o.is_feasible().then(|| o.objective()),
            violation: o.score.violation(),
            evaluations: o.evaluations,
            iterations: o.iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub problem: String,
    pub method: String,
    pub seed: u64,
    pub n_starts: usize,
    pub evaluations: usize,
    pub feasible: bool,
    pub coefficients: Vec<f64>,
    pub objective: Option<f64>,
    pub violation: f64,
    pub initial_removal: Vec<f64>,
    pub cum_removal: Option<Vec<f64>>,
    pub local_optima: Vec<OptimumEntry>,
    pub survey_optima: usize,
    pub summary: Option<RunSummary>,
}

impl OptimizeReport {
    pub fn new(
        problem: String,
        method: String,
        n_starts: usize,
        result: &OptimizationResult,
        summary: Option<RunSummary>,
    ) -> Self {
        let f = &result.evaluation.feasibility;
        Self {
            problem,
            method,
            seed: result.seed,
            n_starts,
            evaluations: result.evaluations,
            feasible: result.feasible,
            coefficients: result.best.coefficients.clone(),
            objective: result
                .evaluation
                .objective
                .is_finite()
                .then_some(result.evaluation.objective),
            violation: f.violation,
            initial_removal: f.initial_removal.clone(),
            cum_removal: f.cum_removal.clone(),
            local_optima: result.local_optima.iter().map(OptimumEntry::from).collect(),
            survey_optima: result.survey.len(),
            summary,
        }
    }
}

pub fn write_json(value: &impl Serialize, path: &Path) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

fn joined(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(";")
}

fn protocol_header(species: usize) -> Vec<String> {
    let mut h: Vec<String> = ["stage_filters", "stage_uses", "M"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(numbered("c_acm", species));
    h.extend(numbered("Rbar", species));
    h.extend(numbered("k", species));
    for s in ["j", "yield_per_filter", "discarded", "target_met"] {
        h.push(s.to_string());
    }
    h
}

fn protocol_fields(r: &MultiStageResult) -> Vec<String> {
    let mut row = vec![
        joined(r.stage_filters.iter().map(|v| v.to_string())),
        joined(r.stage_uses.iter().map(|v| v.to_string())),
        r.total_filters.to_string(),
    ];
    for series in [&r.final_batch.conc, &r.cum_removal, &r.purity] {
        row.extend(series.iter().map(|v| format_value(*v)));
    }
    row.push(format_value(r.throughput()));
    row.push(format_value(r.yield_per_filter));
    row.push(format_value(r.discarded));
    row.push(r.target_met.to_string());
    row
}

pub fn write_protocol(
    design_removal: f64,
    result: &MultiStageResult,
    out: impl Write,
) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["design_removal".to_string()];
    header.extend(protocol_header(result.final_batch.conc.len()));
    w.write_record(header).map_err(csv_error)?;
    let mut row = vec![format_value(design_removal)];
    row.extend(protocol_fields(result));
    w.write_record(row).map_err(csv_error)?;
    w.flush()
}

pub fn write_sweep(rows: &[SweepRow], out: impl Write) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let species = rows.first().map_or(0, |r| r.result.final_batch.conc.len());
    let mut header = vec!["rank".to_string(), "candidate".to_string()];
    header.extend(protocol_header(species));
    w.write_record(header).map_err(csv_error)?;
    for (rank, row) in rows.iter().enumerate() {
        let mut fields = vec![(rank + 1).to_string(), (row.candidate + 1).to_string()];
        fields.extend(protocol_fields(&row.result));
        w.write_record(fields).map_err(csv_error)?;
    }
    w.flush()
}

/// Per-filter ledger; `candidate` is blank for a single protocol.
pub fn write_ledger<'a>(
    entries: impl IntoIterator<Item = (Option<usize>, &'a MultiStageResult)>,
    out: impl Write,
) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "candidate",
        "stage",
        "index",
        "uses",
        "volume_in",
        "volume_out",
        "volume_discarded",
        "exhausted",
    ])
    .map_err(csv_error)?;
    for (candidate, result) in entries {
        for f in &result.ledger {
            w.write_record([
                candidate.map(|c| (c + 1).to_string()).unwrap_or_default(),
                f.stage.to_string(),
                (f.index + 1).to_string(),
                f.uses.to_string(),
                format_value(f.volume_in),
                format_value(f.volume_out),
                format_value(f.volume_discarded),
                f.exhausted.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()
}

pub fn create(path: &Path) -> io::Result<io::BufWriter<File>> {
    Ok(io::BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeedSpec, ShapeFunction};
    use crate::sim::{run_constant_pressure, SimConfig};

    #[test]
    fn values_keep_nine_significant_digits() {
        assert_eq!(format_value(0.0), "0");
        assert_eq!(format_value(0.123076923077), "1.23076923e-1");
        assert_eq!(format_value(-8.125), "-8.12500000e0");
        for v in [1.0 / 3.0, 2.0e-9, 12345.678901234, -0.999999999949] {
            let back: f64 = format_value(v).parse().unwrap();
            assert!(((back - v) / v).abs() <= 1e-8, "{v} -> {back}");
        }
    }

    #[test]
    fn time_series_round_trips() {
        let feed = FeedSpec::two_species(0.5, 0.1, 1.0).unwrap();
        let rec = run_constant_pressure(
            &ShapeFunction::linear(1.0, -0.4),
            &feed,
            &SimConfig::constant_pressure(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_time_series(&rec, &mut buf).unwrap();
        let table = read_numeric_csv(buf.as_slice()).unwrap();
        assert_eq!(table.header.len(), 4 + 4 * 2);
        assert_eq!(table.header, time_series_header(2));
        assert_eq!(table.rows.len(), rec.len());
        assert_eq!(table.rows[0][0], 0.0);
        assert_eq!(table.rows[0][2], 0.0);
        for (k, row) in table.rows.iter().enumerate() {
            let expect = [
                rec.t[k],
                rec.u[k],
                rec.j[k],
                rec.p0[k],
                rec.c_ins[1][k],
                rec.cum_removal[0][k],
            ];
            let got = [row[0], row[1], row[2], row[3], row[5], row[10]];
            for (e, g) in expect.iter().zip(got) {
                assert!((e - g).abs() <= 1e-8 * e.abs(), "row {k}: {e} vs {g}");
            }
        }
    }
}
