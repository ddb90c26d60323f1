//! JSON and CSV emitters. Every float is written with 17 significant digits
//! and object keys are sorted, so identical results give identical bytes.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::applicability::LayerMagnitude;
use crate::cwda_tests::CwdaReport;
use crate::error::{Error, Result};
use crate::global_sim::{overlap_lines, PruneMask, SimGrid, SweepPoint};
use crate::similarity::SpReport;
use crate::criteria::ScoreVector;

/// `v` in scientific notation with 17 significant digits; empty when not finite.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::InvalidParameter(format!("serialization failed: {e}"))
}

fn write_value(out: &mut String, v: &Value, indent: Option<usize>) {
    let newline = |out: &mut String, level: usize| {
        if indent.is_some() {
            out.push('\n');
            out.push_str(&"  ".repeat(level));
        }
    };
    let level = indent.unwrap_or(0);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) if !n.is_f64() => out.push_str(&u.to_string()),
            (_, Some(i), _) if !n.is_f64() => out.push_str(&i.to_string()),
            (_, _, Some(f)) if f.is_finite() => out.push_str(&format!("{f:.16e}")),
            _ => out.push_str("null"),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string encodes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, level + 1);
                write_value(out, item, indent.map(|l| l + 1));
            }
            newline(out, level);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, level + 1);
                out.push_str(&serde_json::to_string(k).expect("key encodes"));
                out.push(':');
                if indent.is_some() {
                    out.push(' ');
                }
                write_value(out, item, indent.map(|l| l + 1));
            }
            newline(out, level);
            out.push('}');
        }
    }
}

/// Indented JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(json_err)?;
    let mut out = String::new();
    write_value(&mut out, &v, Some(0));
    out.push('\n');
    Ok(out)
}

/// Single-line JSON without a trailing newline.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(json_err)?;
    let mut out = String::new();
    write_value(&mut out, &v, None);
    Ok(out)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::InvalidParameter(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `layer,filter,score` rows for one criterion.
pub fn scores_csv(scores: &[ScoreVector]) -> Result<String> {
    let rows = scores
        .iter()
        .flat_map(|s| {
            s.scores
                .iter()
                .enumerate()
                .map(move |(j, &v)| vec![s.layer.clone(), j.to_string(), fmt_f64(v)])
        })
        .collect();
    csv_string(&["layer", "filter", "score"], rows)
}

/// One matrix per block: `scope,criterion,<criteria...>` rows, the global
/// matrix last.
pub fn sp_csv(report: &SpReport) -> Result<String> {
    let names: Vec<&str> = report.criteria.iter().map(|c| c.as_str()).collect();
    let mut header = vec!["scope", "criterion"];
    header.extend(&names);
    let mut rows = Vec::new();
    let blocks = report
        .layers
        .iter()
        .map(|l| (l.layer.as_str(), &l.matrix))
        .chain(std::iter::once(("global", &report.global)));
    for (scope, m) in blocks {
        for (i, row) in m.iter().enumerate() {
            let mut r = vec![scope.to_string(), names[i].to_string()];
            r.extend(row.iter().map(|&v| fmt_f64(v)));
            rows.push(r);
        }
    }
    csv_string(&header, rows)
}

pub fn magnitude_csv(profile: &[LayerMagnitude]) -> Result<String> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, fmt_f64);
    let mut rows = Vec::new();
    for l in profile {
        let base = [l.layer.clone(), l.dim.to_string(), fmt_f64(l.sigma)];
        if l.entries.is_empty() {
            let mut r = base.to_vec();
            r.extend(std::iter::repeat_n(String::new(), 5));
            rows.push(r);
        }
        for e in &l.entries {
            let mut r = base.to_vec();
            r.extend([
                e.criterion.as_str().to_string(),
                fmt_f64(e.mean),
                fmt_f64(e.var_r),
                opt(e.predicted_mean),
                opt(e.predicted_var_r),
            ]);
            rows.push(r);
        }
    }
    csv_string(
        &["layer", "d", "sigma", "criterion", "mean", "var_r", "predicted_mean", "predicted_var_r"],
        rows,
    )
}

pub fn cwda_csv(report: &CwdaReport) -> Result<String> {
    let flag = |b: Option<bool>| match b {
        Some(true) => "pass".to_string(),
        Some(false) => "fail".to_string(),
        None => String::new(),
    };
    let rows = report
        .layers
        .iter()
        .map(|l| {
            vec![
                l.layer.clone(),
                flag(l.gaussian.map(|t| t.pass)),
                flag(l.variance.map(|t| t.pass)),
                flag(l.mean_pass()),
                flag(l.magnitude.map(|t| t.pass)),
                flag(l.error.is_none().then_some(l.pass_all)),
                l.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    csv_string(&["layer", "gaussian", "variance", "mean", "magnitude", "all", "error"], rows)
}

/// `sigma_a,sigma_b,sp` rows.
pub fn surface_csv(grid: &SimGrid) -> Result<String> {
    let cfg = &grid.config;
    let mut rows = Vec::new();
    for (ia, &sa) in cfg.sigma_a_values.iter().enumerate() {
        for (ib, &sb) in cfg.sigma_b_values.iter().enumerate() {
            rows.push(vec![fmt_f64(sa), fmt_f64(sb), fmt_f64(grid.sp_surface[ia][ib])]);
        }
    }
    csv_string(&["sigma_a", "sigma_b", "sp"], rows)
}

/// Both overlap lines traced along the σ_B axis.
pub fn overlap_lines_csv(grid: &SimGrid) -> Result<String> {
    let cfg = &grid.config;
    let rows = cfg
        .sigma_b_values
        .iter()
        .map(|&sb| {
            let (l1, l2) = overlap_lines(cfg.d_a, cfg.d_b, sb);
            vec![fmt_f64(sb), fmt_f64(l1), fmt_f64(l2)]
        })
        .collect();
    csv_string(&["sigma_b", "sigma_a_l1_line", "sigma_a_l2_line"], rows)
}

pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    let rows = points
        .iter()
        .map(|p| vec![p.start_layer.to_string(), p.layer.clone(), fmt_f64(p.sp)])
        .collect();
    csv_string(&["start_layer", "layer", "sp"], rows)
}

/// Per-layer listing of pruned indices separated by spaces.
pub fn mask_csv(mask: &PruneMask) -> Result<String> {
    let rows = mask
        .layers
        .iter()
        .map(|l| {
            let idx: Vec<String> = l.pruned.iter().map(usize::to_string).collect();
            vec![l.layer.clone(), l.n_out.to_string(), l.pruned.len().to_string(), idx.join(" ")]
        })
        .collect();
    csv_string(&["layer", "n_out", "n_pruned", "pruned"], rows)
}
