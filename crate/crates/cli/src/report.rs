//! Benchmark rows, their CSV form, and log-log slope fitting.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CSV_HEADER: &str = "solver,order,corrector,nfe,h_max,l2_error,linf_error,seconds,seed";

/// Errors at or below this are treated as exact; no slope is fitted.
pub const FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub solver: String,
    pub order: usize,
    pub corrector: String,
    pub nfe: usize,
    pub h_max: f64,
    pub l2_error: f64,
    pub linf_error: f64,
    pub seconds: f64,
    pub seed: u64,
}

impl ReportRow {
    fn key(&self) -> (&str, usize, usize, u64, &str) {
        (&self.solver, self.order, self.nfe, self.seed, &self.corrector)
    }
}

/// Rows plus free-form `#` summary lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub summary: Vec<String>,
}

impl RunReport {
    pub fn new(mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by(|a, b| a.key().cmp(&b.key()));
        RunReport {
            rows,
            summary: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER.split(','))?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
        let mut out = String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))?;
        for line in &self.summary {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self, CliError> {
        let first = text.lines().next().unwrap_or_default();
        if first != CSV_HEADER {
            return Err(CliError::Runtime(format!("unexpected CSV header '{first}'")));
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let rows = rdr.deserialize().collect::<Result<Vec<ReportRow>, _>>()?;
        let summary = text
            .lines()
            .filter_map(|l| l.strip_prefix("# "))
            .map(str::to_owned)
            .collect();
        Ok(RunReport { rows, summary })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    /// Mean `l2_error` over seeds, keyed by `(solver, order, corrector, nfe)`.
    pub fn mean_l2(&self) -> BTreeMap<(String, usize, String, usize), f64> {
        let mut acc: BTreeMap<_, (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc
                .entry((r.solver.clone(), r.order, r.corrector.clone(), r.nfe))
                .or_insert((0.0, 0));
            e.0 += r.l2_error;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }
}

/// Least-squares slope of `ln l2_error` against `ln h_max`. Rows sharing an
/// `h_max` are averaged first.
pub fn measure_order(rows: &[ReportRow]) -> Result<f64, CliError> {
    let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for r in rows {
        if !(r.l2_error > 0.0) || !r.l2_error.is_finite() || !(r.h_max > 0.0) {
            return Err(CliError::Core(emsolver::Error::UndefinedSlope(format!(
                "non-positive error or step at nfe {}",
                r.nfe
            ))));
        }
        let g = groups.entry(r.h_max.to_bits()).or_insert((r.h_max, 0.0, 0));
        g.1 += r.l2_error;
        g.2 += 1;
    }
    if groups.len() < 3 {
        return Err(CliError::Core(emsolver::Error::UndefinedSlope(format!(
            "{} distinct step sizes, need 3",
            groups.len()
        ))));
    }
    let pts: Vec<(f64, f64)> = groups.values().map(|&(h, s, n)| (h.ln(), (s / n as f64).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Summary line for one fitted group.
pub fn slope_line(rows: &[ReportRow], solver: &str, order: usize, corrector: &str) -> String {
    let head = format!("slope solver={solver} order={order} corrector={corrector}");
    if !rows.is_empty() && rows.iter().all(|r| r.l2_error <= FLOOR) {
        return format!("{head} value=floor");
    }
    match measure_order(rows) {
        Ok(s) => format!("{head} value={s}"),
        Err(_) => format!("{head} value=undefined"),
    }
}

/// Parses `value=` from a slope summary line.
pub fn parse_slope(line: &str) -> Option<(String, usize, Option<f64>)> {
    let rest = line.strip_prefix("slope ")?;
    let mut solver = None;
    let mut order = None;
    let mut value = None;
    for kv in rest.split(' ') {
        let (k, v) = kv.split_once('=')?;
        match k {
            "solver" => solver = Some(v.to_owned()),
            "order" => order = v.parse().ok(),
            "value" => value = Some(v.parse().ok()),
            _ => {}
        }
    }
    Some((solver?, order?, value?))
}
