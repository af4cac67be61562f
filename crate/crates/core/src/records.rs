//! Result persistence and the statistics report.
//!
//! Every record starts with `schema_version`. Floats are written in their
//! shortest round-trip form, so parsing a file back reproduces the
//! in-memory values bit for bit (NaN and infinities included).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::{TrialResult, SCHEMA_VERSION};
use crate::optimizers::Algorithm;
use crate::stats::{self, bonferroni, format_p, mean_ci, one_way_anova, paired_t_test, welch_t_test, StatTestResult};

pub const FIELDS: [&str; 20] = [
    "schema_version",
    "sweep_axis",
    "sweep_index",
    "sweep_value",
    "algorithm",
    "trial",
    "channel_hash",
    "failed",
    "sum_rate",
    "sinr_db",
    "mean_detection_prob",
    "mean_crlb",
    "energy_efficiency",
    "fairness",
    "objective",
    "upper_bound",
    "feasible",
    "iterations",
    "converged",
    "monotone",
];

/// Metrics covered by the statistics report.
pub const METRICS: [&str; 6] = [
    "sum_rate",
    "mean_detection_prob",
    "mean_crlb",
    "energy_efficiency",
    "fairness",
    "objective",
];

/// Family label for the pairwise comparisons.
pub const PAIRWISE_FAMILY: &str = "bonferroni_pairwise";

pub fn metric(row: &TrialResult, name: &str) -> Option<f64> {
    Some(match name {
        "sum_rate" => row.sum_rate,
        "mean_detection_prob" => row.mean_detection_prob,
        "mean_crlb" => row.mean_crlb,
        "energy_efficiency" => row.energy_efficiency,
        "fairness" => row.fairness,
        "objective" => row.objective,
        "upper_bound" => row.upper_bound,
        _ => return None,
    })
}

/// Shortest round-trip text, switching to exponent form for extreme magnitudes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn to_fields(r: &TrialResult) -> [String; 20] {
    let sinr: Vec<String> = r.sinr_db.iter().map(|v| num(*v)).collect();
    [
        r.schema_version.to_string(),
        r.sweep_axis.clone(),
        r.sweep_index.to_string(),
        num(r.sweep_value),
        r.algorithm.name().to_string(),
        r.trial.to_string(),
        r.channel_hash.to_string(),
        r.failed.to_string(),
        num(r.sum_rate),
        sinr.join(";"),
        num(r.mean_detection_prob),
        num(r.mean_crlb),
        num(r.energy_efficiency),
        num(r.fairness),
        num(r.objective),
        num(r.upper_bound),
        r.feasible.to_string(),
        r.iterations.to_string(),
        r.converged.to_string(),
        r.monotone.to_string(),
    ]
}

fn parse<T: std::str::FromStr>(v: &str, key: &str, line: usize) -> Result<T> {
    v.parse().map_err(|_| Error::Record {
        line,
        msg: format!("bad value `{v}` for `{key}`"),
    })
}

fn from_fields(f: &[&str], line: usize) -> Result<TrialResult> {
    if f.len() != FIELDS.len() {
        return Err(Error::Record {
            line,
            msg: format!("expected {} fields, found {}", FIELDS.len(), f.len()),
        });
    }
    let version: u32 = parse(f[0], FIELDS[0], line)?;
    if version != SCHEMA_VERSION {
        return Err(Error::Record {
            line,
            msg: format!("unsupported schema_version {version}"),
        });
    }
    let sinr_db = if f[9].is_empty() {
        Vec::new()
    } else {
        f[9].split(';').map(|s| parse(s, FIELDS[9], line)).collect::<Result<_>>()?
    };
    Ok(TrialResult {
        schema_version: version,
        sweep_axis: f[1].to_string(),
        sweep_index: parse(f[2], FIELDS[2], line)?,
        sweep_value: parse(f[3], FIELDS[3], line)?,
        algorithm: f[4].parse().map_err(|_| Error::Record {
            line,
            msg: format!("unknown algorithm `{}`", f[4]),
        })?,
        trial: parse(f[5], FIELDS[5], line)?,
        channel_hash: parse(f[6], FIELDS[6], line)?,
        failed: parse(f[7], FIELDS[7], line)?,
        sum_rate: parse(f[8], FIELDS[8], line)?,
        sinr_db,
        mean_detection_prob: parse(f[10], FIELDS[10], line)?,
        mean_crlb: parse(f[11], FIELDS[11], line)?,
        energy_efficiency: parse(f[12], FIELDS[12], line)?,
        fairness: parse(f[13], FIELDS[13], line)?,
        objective: parse(f[14], FIELDS[14], line)?,
        upper_bound: parse(f[15], FIELDS[15], line)?,
        feasible: parse(f[16], FIELDS[16], line)?,
        iterations: parse(f[17], FIELDS[17], line)?,
        converged: parse(f[18], FIELDS[18], line)?,
        monotone: parse(f[19], FIELDS[19], line)?,
    })
}

pub fn write_results_csv<W: Write>(out: W, rows: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIELDS)?;
    for r in rows {
        w.write_record(to_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(input: R) -> Result<Vec<TrialResult>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != FIELDS {
        return Err(Error::Record {
            line: 1,
            msg: "header does not match the result schema".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let f: Vec<&str> = rec.iter().collect();
        rows.push(from_fields(&f, i + 2)?);
    }
    Ok(rows)
}

/// One record per line: `key=value` pairs separated by single spaces.
pub fn write_results_kv<W: Write>(mut out: W, rows: &[TrialResult]) -> Result<()> {
    for r in rows {
        let pairs: Vec<String> = FIELDS.iter().zip(to_fields(r)).map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(out, "{}", pairs.join(" "))?;
    }
    Ok(())
}

pub fn read_results_kv<R: BufRead>(input: R) -> Result<Vec<TrialResult>> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut values = Vec::with_capacity(FIELDS.len());
        for (j, pair) in line.split(' ').enumerate() {
            let (k, v) = pair.split_once('=').ok_or_else(|| Error::Record {
                line: i + 1,
                msg: format!("`{pair}` is not key=value"),
            })?;
            if FIELDS.get(j) != Some(&k) {
                return Err(Error::Record {
                    line: i + 1,
                    msg: format!("unexpected key `{k}` at position {j}"),
                });
            }
            values.push(v);
        }
        rows.push(from_fields(&values, i + 1)?);
    }
    Ok(rows)
}

/// Load a result file, choosing the format by extension (`.kv` or CSV).
pub fn load_results(path: &Path) -> Result<Vec<TrialResult>> {
    let file = std::fs::File::open(path)?;
    if path.extension().is_some_and(|e| e == "kv") {
        read_results_kv(std::io::BufReader::new(file))
    } else {
        read_results_csv(file)
    }
}

/// Rows grouped by sweep point, then algorithm, in canonical order.
type Grouped<'a> = BTreeMap<usize, (f64, BTreeMap<usize, Vec<&'a TrialResult>>)>;

fn group(rows: &[TrialResult]) -> Grouped<'_> {
    let mut g: Grouped = BTreeMap::new();
    for r in rows {
        let (_, alg, _) = r.key();
        g.entry(r.sweep_index)
            .or_insert_with(|| (r.sweep_value, BTreeMap::new()))
            .1
            .entry(alg)
            .or_default()
            .push(r);
    }
    for (_, algs) in g.values_mut() {
        for v in algs.values_mut() {
            v.sort_by_key(|r| r.trial);
        }
    }
    g
}

fn finite_values(rows: &[&TrialResult], name: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| !r.failed)
        .filter_map(|r| metric(r, name))
        .filter(|v| v.is_finite())
        .collect()
}

/// Pairs on matching trials where both values are finite.
fn paired_values(a: &[&TrialResult], b: &[&TrialResult], name: &str) -> (Vec<f64>, Vec<f64>) {
    let by_trial: BTreeMap<usize, f64> = b
        .iter()
        .filter(|r| !r.failed)
        .filter_map(|r| metric(r, name).map(|v| (r.trial, v)))
        .collect();
    let mut xa = Vec::new();
    let mut xb = Vec::new();
    for r in a.iter().filter(|r| !r.failed) {
        if let (Some(x), Some(&y)) = (metric(r, name), by_trial.get(&r.trial)) {
            if x.is_finite() && y.is_finite() {
                xa.push(x);
                xb.push(y);
            }
        }
    }
    (xa, xb)
}

fn alg_name(idx: usize) -> &'static str {
    Algorithm::ALL.get(idx).map(Algorithm::name).unwrap_or("unknown")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_index: usize,
    pub sweep_value: f64,
    pub algorithm: &'static str,
    pub metric: &'static str,
    pub n: usize,
    /// Rows excluded as failed or non-finite.
    pub excluded: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci95: (f64, f64),
    pub ci99: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestRow {
    pub sweep_index: usize,
    pub sweep_value: f64,
    pub metric: &'static str,
    pub family: String,
    pub group_a: String,
    pub group_b: String,
    pub n: usize,
    pub result: Option<StatTestResult>,
    pub p_adjusted: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatsReport {
    pub summary: Vec<SummaryRow>,
    pub tests: Vec<TestRow>,
    pub non_converged: usize,
    pub failed: usize,
}

fn nan_pair() -> (f64, f64) {
    (f64::NAN, f64::NAN)
}

fn summarize(sweep: usize, x: f64, alg: &'static str, name: &'static str, rows: &[&TrialResult]) -> SummaryRow {
    let v = finite_values(rows, name);
    let ok = v.len() >= 2;
    SummaryRow {
        sweep_index: sweep,
        sweep_value: x,
        algorithm: alg,
        metric: name,
        n: v.len(),
        excluded: rows.len() - v.len(),
        mean: if v.is_empty() { f64::NAN } else { stats::mean(&v) },
        sd: if ok { stats::variance(&v).sqrt() } else { f64::NAN },
        ci95: if ok { mean_ci(&v, 0.95).map(|(_, l, h)| (l, h)).unwrap_or_else(|_| nan_pair()) } else { nan_pair() },
        ci99: if ok { mean_ci(&v, 0.99).map(|(_, l, h)| (l, h)).unwrap_or_else(|_| nan_pair()) } else { nan_pair() },
    }
}

fn test_row(
    sweep: usize,
    x: f64,
    name: &'static str,
    family: &str,
    a: String,
    b: String,
    n: usize,
    outcome: Result<StatTestResult>,
) -> TestRow {
    let (result, note) = match outcome {
        Ok(r) => (Some(r), String::new()),
        Err(e) => (None, e.to_string()),
    };
    TestRow {
        sweep_index: sweep,
        sweep_value: x,
        metric: name,
        family: family.to_string(),
        group_a: a,
        group_b: b,
        n,
        result,
        p_adjusted: None,
        note,
    }
}

/// Summary statistics, paired t-tests of every algorithm against the
/// reference (Bonferroni-adjusted within each sweep point and metric) and a
/// one-way ANOVA across algorithms.
pub fn compute_stats(rows: &[TrialResult], reference: Algorithm) -> StatsReport {
    let mut report = StatsReport {
        non_converged: rows.iter().filter(|r| !r.failed && !r.converged).count(),
        failed: rows.iter().filter(|r| r.failed).count(),
        ..Default::default()
    };
    let ref_idx = Algorithm::ALL.iter().position(|a| *a == reference).unwrap_or(0);
    for (&sweep, (x, algs)) in &group(rows) {
        for name in METRICS {
            for (&a, rs) in algs {
                report.summary.push(summarize(sweep, *x, alg_name(a), name, rs));
            }
            let mut family = Vec::new();
            if let Some(base) = algs.get(&ref_idx) {
                for (&a, rs) in algs.iter().filter(|(a, _)| **a != ref_idx) {
                    let (xa, xb) = paired_values(base, rs, name);
                    let outcome = paired_t_test(&xa, &xb);
                    family.push(test_row(
                        sweep,
                        *x,
                        name,
                        PAIRWISE_FAMILY,
                        alg_name(ref_idx).into(),
                        alg_name(a).into(),
                        xa.len(),
                        outcome,
                    ));
                }
            }
            let ps: Vec<f64> = family.iter().filter_map(|t| t.result.as_ref().map(|r| r.p_value)).collect();
            if !ps.is_empty() {
                if let Ok(adj) = bonferroni(&ps, family.len()) {
                    for (t, p) in family.iter_mut().filter(|t| t.result.is_some()).zip(adj) {
                        t.p_adjusted = Some(p);
                    }
                }
            }
            report.tests.extend(family);
            if algs.len() >= 2 {
                let groups: Vec<Vec<f64>> = algs.values().map(|rs| finite_values(rs, name)).collect();
                let n = groups.iter().map(Vec::len).sum();
                report.tests.push(test_row(
                    sweep,
                    *x,
                    name,
                    "anova",
                    "all".into(),
                    String::new(),
                    n,
                    one_way_anova(&groups),
                ));
            }
        }
    }
    report
}

/// Welch tests of each (sweep point, algorithm, metric) between two result sets.
pub fn compare_files(current: &[TrialResult], against: &[TrialResult]) -> Vec<TestRow> {
    let a = group(current);
    let b = group(against);
    let mut out = Vec::new();
    for (&sweep, (x, algs)) in &a {
        let Some((_, other)) = b.get(&sweep) else { continue };
        for name in METRICS {
            for (&alg, rs) in algs {
                let Some(os) = other.get(&alg) else { continue };
                let xa = finite_values(rs, name);
                let xb = finite_values(os, name);
                let outcome = welch_t_test(&xa, &xb);
                let label = alg_name(alg).to_string();
                out.push(test_row(sweep, *x, name, "welch_files", label.clone(), label, xa.len() + xb.len(), outcome));
            }
        }
    }
    out
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "sweep_index",
        "sweep_value",
        "algorithm",
        "metric",
        "n",
        "excluded",
        "mean",
        "sd",
        "ci95_low",
        "ci95_high",
        "ci99_low",
        "ci99_high",
    ])?;
    for r in rows {
        w.write_record([
            r.sweep_index.to_string(),
            num(r.sweep_value),
            r.algorithm.to_string(),
            r.metric.to_string(),
            r.n.to_string(),
            r.excluded.to_string(),
            num(r.mean),
            num(r.sd),
            num(r.ci95.0),
            num(r.ci95.1),
            num(r.ci99.0),
            num(r.ci99.1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tests_csv<W: Write>(out: W, rows: &[TestRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "sweep_index",
        "sweep_value",
        "metric",
        "family",
        "test",
        "group_a",
        "group_b",
        "n",
        "statistic",
        "df",
        "df2",
        "p_value",
        "p_adjusted",
        "effect_size",
        "ci_low",
        "ci_high",
        "note",
    ])?;
    let empty = String::new;
    for t in rows {
        let r = t.result.as_ref();
        w.write_record([
            t.sweep_index.to_string(),
            num(t.sweep_value),
            t.metric.to_string(),
            t.family.clone(),
            r.map(|r| r.kind.to_string()).unwrap_or_else(empty),
            t.group_a.clone(),
            t.group_b.clone(),
            t.n.to_string(),
            r.map(|r| num(r.statistic)).unwrap_or_else(empty),
            r.map(|r| num(r.df)).unwrap_or_else(empty),
            r.and_then(|r| r.df2).map(num).unwrap_or_else(empty),
            r.map(|r| format_p(r.p_value)).unwrap_or_else(empty),
            t.p_adjusted.map(format_p).unwrap_or_else(empty),
            r.map(|r| num(r.effect_size)).unwrap_or_else(empty),
            r.and_then(|r| r.ci).map(|c| num(c.0)).unwrap_or_else(empty),
            r.and_then(|r| r.ci).map(|c| num(c.1)).unwrap_or_else(empty),
            t.note.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Tidy `(x, series, y, ci_low, ci_high)` table of 95% intervals; the series
/// is `algorithm.metric`. Unswept runs use `x = 0`.
pub fn write_plot_data<W: Write>(out: W, summary: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "series", "y", "ci_low", "ci_high"])?;
    for r in summary {
        let x = if r.sweep_value.is_nan() { 0.0 } else { r.sweep_value };
        w.write_record([
            num(x),
            format!("{}.{}", r.algorithm, r.metric),
            num(r.mean),
            num(r.ci95.0),
            num(r.ci95.1),
        ])?;
    }
    w.flush()?;
    Ok(())
}
