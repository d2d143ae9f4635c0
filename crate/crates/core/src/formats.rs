//! CSV and JSON file formats.
//!
//! | file        | header                                                   |
//! |-------------|----------------------------------------------------------|
//! | points      | `index,z1,...,zd` (physical coordinates)                 |
//! | values      | `index,value`                                            |
//! | selection   | `rank,row_index` (rank counts from 1)                    |
//! | index set   | `j1,...,jd`                                              |
//! | summary     | `k,ratio,method,epsilon,kappa_box,kappa_dagger`          |
//! | comparison  | see [`COMPARE_HEADER`]                                   |
//! | sobol       | `subset,partial_variance,index`                          |
//!
//! `index` and `row_index` are 0-based rows of the tensor grid in odometer
//! order (last dimension fastest). Subsets are 1-based variable numbers
//! joined by `+`. Floats carry 17 significant digits; an undefined value is
//! an empty cell.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::indexset::{IndexKind, IndexSet, MultiIndex};
use crate::lstsq::SolveReport;
use crate::pce::SobolReport;
use crate::pivotselect::PivotSelection;

pub const SUMMARY_HEADER: &str = "k,ratio,method,epsilon,kappa_box,kappa_dagger";
pub const COMPARE_HEADER: &str = "k,ratio,trials,rand_min_eps,rand_max_eps,rand_mean_eps,\
rand_min_kappa,rand_max_kappa,rand_mean_kappa,eff_eps,eff_kappa";
pub const SOBOL_HEADER: &str = "subset,partial_variance,index";
pub const SOBOL_TRIALS_HEADER: &str = "subset,reference,effective,trial_min,trial_mean,trial_max";

/// Shortest exact round trip is not stable across formatters; fixed 17 digits is.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn fmt_subset(subset: &[usize]) -> String {
    subset
        .iter()
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join("+")
}

fn malformed(what: &'static str, path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Malformed {
        what,
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn records<R: Read>(
    what: &'static str,
    r: R,
    path: &Path,
    check_header: impl Fn(&csv::StringRecord) -> bool,
    expected: &str,
) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = reader(r);
    let header = rdr
        .headers()
        .map_err(|e| malformed(what, path, 1, e.to_string()))?
        .clone();
    if !check_header(&header) {
        return Err(malformed(
            what,
            path,
            1,
            format!("expected header \"{expected}\", found \"{}\"", header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(what, path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(
    what: &'static str,
    path: &Path,
    line: u64,
    field: &str,
    name: &str,
) -> Result<T> {
    field
        .parse()
        .map_err(|_| malformed(what, path, line, format!("cannot parse {name} \"{field}\"")))
}

pub fn write_points_csv<W: Write>(mut w: W, indices: &[usize], points: &[Vec<f64>]) -> Result<()> {
    let d = points.first().map_or(0, |p| p.len());
    let mut header = String::from("index");
    for k in 1..=d {
        header.push_str(&format!(",z{k}"));
    }
    writeln!(w, "{header}")?;
    for (i, p) in indices.iter().zip(points) {
        let row: Vec<String> = p.iter().map(|&x| fmt_f64(x)).collect();
        writeln!(w, "{i},{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points_csv<R: Read>(r: R, path: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    const WHAT: &str = "points CSV";
    let recs = records(
        WHAT,
        r,
        path,
        |h| {
            h.len() >= 2
                && &h[0] == "index"
                && h.iter().skip(1).enumerate().all(|(k, f)| f == format!("z{}", k + 1))
        },
        "index,z1,...,zd",
    )?;
    recs.into_iter()
        .map(|(line, rec)| {
            let index = parse_field(WHAT, path, line, &rec[0], "index")?;
            let point = rec
                .iter()
                .skip(1)
                .map(|f| parse_field(WHAT, path, line, f, "coordinate"))
                .collect::<Result<Vec<f64>>>()?;
            Ok((index, point))
        })
        .collect()
}

pub fn write_values_csv<W: Write>(mut w: W, values: &BTreeMap<usize, f64>) -> Result<()> {
    writeln!(w, "index,value")?;
    for (i, v) in values {
        writeln!(w, "{i},{}", fmt_f64(*v))?;
    }
    w.flush()?;
    Ok(())
}

/// Rows may come in any order; a repeated index must repeat the same value.
pub fn read_values_csv<R: Read>(r: R, path: &Path) -> Result<BTreeMap<usize, f64>> {
    const WHAT: &str = "values CSV";
    let recs = records(
        WHAT,
        r,
        path,
        |h| h.len() == 2 && &h[0] == "index" && &h[1] == "value",
        "index,value",
    )?;
    let mut out = BTreeMap::new();
    for (line, rec) in recs {
        let index: usize = parse_field(WHAT, path, line, &rec[0], "index")?;
        let value: f64 = parse_field(WHAT, path, line, &rec[1], "value")?;
        if !value.is_finite() {
            return Err(malformed(WHAT, path, line, format!("non-finite value for row {index}")));
        }
        if let Some(old) = out.insert(index, value) {
            if old != value {
                return Err(malformed(WHAT, path, line, format!("conflicting values for row {index}")));
            }
        }
    }
    Ok(out)
}

pub fn write_selection_csv<W: Write>(mut w: W, rows: &[usize]) -> Result<()> {
    writeln!(w, "rank,row_index")?;
    for (rank, r) in rows.iter().enumerate() {
        writeln!(w, "{},{r}", rank + 1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pivot_selection<W: Write>(w: W, selection: &PivotSelection) -> Result<()> {
    write_selection_csv(w, selection.selected_rows())
}

/// Selected grid rows in rank order.
pub fn read_selection_csv<R: Read>(r: R, path: &Path) -> Result<Vec<usize>> {
    const WHAT: &str = "selection CSV";
    let recs = records(
        WHAT,
        r,
        path,
        |h| h.len() == 2 && &h[0] == "rank" && &h[1] == "row_index",
        "rank,row_index",
    )?;
    let mut ranked = Vec::with_capacity(recs.len());
    for (line, rec) in recs {
        let rank: usize = parse_field(WHAT, path, line, &rec[0], "rank")?;
        let row: usize = parse_field(WHAT, path, line, &rec[1], "row_index")?;
        ranked.push((rank, row, line));
    }
    ranked.sort_unstable();
    for (expect, &(rank, _, line)) in (1..).zip(&ranked) {
        if rank != expect {
            return Err(malformed(WHAT, path, line, format!("ranks must be 1..n, missing {expect}")));
        }
    }
    Ok(ranked.into_iter().map(|(_, row, _)| row).collect())
}

pub fn write_index_set_csv<W: Write>(mut w: W, set: &IndexSet) -> Result<()> {
    let header: Vec<String> = (1..=set.dim()).map(|k| format!("j{k}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for m in set.iter() {
        writeln!(w, "{m}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_index_set_csv<R: Read>(r: R, path: &Path, kind: IndexKind) -> Result<IndexSet> {
    const WHAT: &str = "index-set CSV";
    let recs = records(
        WHAT,
        r,
        path,
        |h| !h.is_empty() && h.iter().enumerate().all(|(k, f)| f == format!("j{}", k + 1)),
        "j1,...,jd",
    )?;
    let indices = recs
        .into_iter()
        .map(|(line, rec)| {
            rec.iter()
                .map(|f| parse_field(WHAT, path, line, f, "multi-index entry"))
                .collect::<Result<Vec<usize>>>()
                .map(MultiIndex::new)
        })
        .collect::<Result<Vec<_>>>()?;
    IndexSet::from_indices(kind, indices)
}

/// Coefficients JSON: the basis kind, the coefficients keyed by multi-index
/// in basis order, the solve diagnostics and any extra fields.
pub fn coefficients_json(report: &SolveReport, extra: Map<String, Value>) -> Value {
    let set = &report.index_set;
    let coefficients: Map<String, Value> = set
        .iter()
        .zip(&report.coefficients)
        .map(|(m, &x)| (m.to_string(), json!(x)))
        .collect();
    let mut doc = Map::new();
    doc.insert("basis".into(), serde_json::to_value(set.kind()).expect("serializable"));
    doc.insert("dim".into(), json!(set.dim()));
    doc.insert("size".into(), json!(set.len()));
    for (k, v) in [
        ("kappa_box", Some(report.kappa_box)),
        ("kappa_dagger", Some(report.kappa_dagger)),
        ("kappa_preconditioned", Some(report.kappa_preconditioned)),
        ("residual_norm", Some(report.residual_norm)),
        ("epsilon", report.epsilon),
    ] {
        doc.insert(k.into(), v.filter(|x| x.is_finite()).map_or(Value::Null, |x| json!(x)));
    }
    doc.extend(extra);
    doc.insert("coefficients".into(), Value::Object(coefficients));
    Value::Object(doc)
}

/// Index set and coefficients back from [`coefficients_json`] output.
pub fn read_coefficients_json<R: Read>(r: R, path: &Path) -> Result<(IndexSet, Vec<f64>)> {
    const WHAT: &str = "coefficients JSON";
    let doc: Value = serde_json::from_reader(r)?;
    let kind: IndexKind = match doc.get("basis") {
        Some(b) => serde_json::from_value(b.clone())
            .map_err(|e| malformed(WHAT, path, 0, format!("bad basis: {e}")))?,
        None => IndexKind::TotalOrder,
    };
    let map = doc
        .get("coefficients")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed(WHAT, path, 0, "missing \"coefficients\" object"))?;
    let mut indices = Vec::with_capacity(map.len());
    let mut values = Vec::with_capacity(map.len());
    for (key, v) in map {
        let m: MultiIndex = key
            .parse()
            .map_err(|_| malformed(WHAT, path, 0, format!("bad multi-index key \"{key}\"")))?;
        let x = v
            .as_f64()
            .ok_or_else(|| malformed(WHAT, path, 0, format!("coefficient \"{key}\" is not a number")))?;
        indices.push(m);
        values.push(x);
    }
    let set = IndexSet::from_indices(kind, indices)?;
    Ok((set, values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub k: usize,
    pub ratio: f64,
    pub method: String,
    pub epsilon: Option<f64>,
    pub kappa_box: f64,
    pub kappa_dagger: f64,
}

pub fn write_summary_csv<W: Write>(mut w: W, rows: &[SummaryRow]) -> Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.k,
            fmt_f64(r.ratio),
            r.method,
            fmt_opt(r.epsilon),
            fmt_f64(r.kappa_box),
            fmt_f64(r.kappa_dagger)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(r: R, path: &Path) -> Result<Vec<SummaryRow>> {
    const WHAT: &str = "summary CSV";
    let recs = records(
        WHAT,
        r,
        path,
        |h| h.iter().collect::<Vec<_>>().join(",") == SUMMARY_HEADER,
        SUMMARY_HEADER,
    )?;
    let opt = |line, f: &str, name| -> Result<Option<f64>> {
        if f.is_empty() {
            Ok(None)
        } else {
            parse_field(WHAT, path, line, f, name).map(Some)
        }
    };
    recs.into_iter()
        .map(|(line, rec)| {
            Ok(SummaryRow {
                k: parse_field(WHAT, path, line, &rec[0], "k")?,
                ratio: parse_field(WHAT, path, line, &rec[1], "ratio")?,
                method: rec[2].to_string(),
                epsilon: opt(line, &rec[3], "epsilon")?,
                kappa_box: parse_field(WHAT, path, line, &rec[4], "kappa_box")?,
                kappa_dagger: parse_field(WHAT, path, line, &rec[5], "kappa_dagger")?,
            })
        })
        .collect()
}

/// Min, max and mean of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    pub fn of(xs: &[f64]) -> Option<Stats> {
        if xs.is_empty() {
            return None;
        }
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        Some(Stats { min, max, mean })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub k: usize,
    pub ratio: f64,
    pub trials: usize,
    pub rand_eps: Option<Stats>,
    pub rand_kappa: Option<Stats>,
    pub eff_eps: Option<f64>,
    pub eff_kappa: f64,
}

pub fn write_compare_csv<W: Write>(mut w: W, rows: &[CompareRow]) -> Result<()> {
    writeln!(w, "{COMPARE_HEADER}")?;
    let stats = |s: Option<Stats>| {
        [s.map(|s| s.min), s.map(|s| s.max), s.map(|s| s.mean)]
            .map(fmt_opt)
            .join(",")
    };
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.k,
            fmt_f64(r.ratio),
            r.trials,
            stats(r.rand_eps),
            stats(r.rand_kappa),
            fmt_opt(r.eff_eps),
            fmt_f64(r.eff_kappa)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sobol_csv<W: Write>(mut w: W, report: &SobolReport) -> Result<()> {
    writeln!(w, "{SOBOL_HEADER}")?;
    for s in &report.subsets {
        writeln!(
            w,
            "{},{},{}",
            fmt_subset(&s.subset),
            fmt_f64(s.partial_variance),
            fmt_opt(s.index)
        )?;
    }
    writeln!(
        w,
        "remainder,{},{}",
        fmt_f64(report.remainder),
        fmt_opt(report.is_defined().then(|| report.remainder / report.variance))
    )?;
    w.flush()?;
    Ok(())
}

pub fn read_sobol_csv<R: Read>(r: R, path: &Path) -> Result<Vec<(String, f64, Option<f64>)>> {
    const WHAT: &str = "sobol CSV";
    let recs = records(
        WHAT,
        r,
        path,
        |h| h.iter().collect::<Vec<_>>().join(",") == SOBOL_HEADER,
        SOBOL_HEADER,
    )?;
    recs.into_iter()
        .map(|(line, rec)| {
            let index = if rec[2].is_empty() {
                None
            } else {
                Some(parse_field(WHAT, path, line, &rec[2], "index")?)
            };
            Ok((rec[0].to_string(), parse_field(WHAT, path, line, &rec[1], "partial_variance")?, index))
        })
        .collect()
}

/// One subset of a Sobol' comparison across randomized trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolTrialRow {
    pub subset: Vec<usize>,
    pub reference: Option<f64>,
    pub effective: Option<f64>,
    pub trials: Option<Stats>,
}

pub fn write_sobol_trials_csv<W: Write>(mut w: W, rows: &[SobolTrialRow]) -> Result<()> {
    writeln!(w, "{SOBOL_TRIALS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_subset(&r.subset),
            fmt_opt(r.reference),
            fmt_opt(r.effective),
            fmt_opt(r.trials.map(|s| s.min)),
            fmt_opt(r.trials.map(|s| s.mean)),
            fmt_opt(r.trials.map(|s| s.max))
        )?;
    }
    w.flush()?;
    Ok(())
}
