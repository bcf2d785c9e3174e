use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::{run, Scenario, Task};
use crate::error::{Result, WstabError};

/// Short knob names accepted by `sweep`, with the config path they set.
/// Any dotted path to a numeric key works as well.
pub const KNOBS: &[(&str, &str)] = &[
    ("k", "ambient.density.k"),
    ("resolution", "resolution"),
    ("radius", "surface.radius"),
    ("half-angle", "ambient.boundary.half_angle"),
    ("s0", "surface.s0"),
    ("amplitude", "surface.amplitude"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub lambda_min: f64,
    pub lambda_next: Option<f64>,
    pub constrained_min: f64,
    pub weighted_area: f64,
    pub pass: bool,
    /// Observed convergence order of `lambda_min` (resolution sweeps only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order_next: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub param: String,
    pub path: String,
    pub rows: Vec<SweepRow>,
    /// First sign change of `lambda_min`, linearly interpolated.
    pub crossing: Option<f64>,
}

/// `a:b:step` (inclusive, ascending) or a comma-separated list.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| -> Result<f64> {
        t.trim()
            .parse::<f64>()
            .map_err(|_| WstabError::Config(format!("range: `{t}` is not a number")))
    };
    let values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(WstabError::Config(format!(
                "range: expected a:b:step, got `{s}`"
            )));
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(WstabError::Config(format!(
                "range: step must be positive in `{s}`"
            )));
        }
        if b < a {
            Vec::new()
        } else {
            let n = ((b - a) / step + 1e-9).floor() as usize + 1;
            (0..n).map(|i| a + i as f64 * step).collect()
        }
    } else {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(num)
            .collect::<Result<_>>()?
    };
    if values.is_empty() {
        return Err(WstabError::Config(format!("range: `{s}` is empty")));
    }
    Ok(values)
}

fn knob_path(param: &str) -> String {
    KNOBS
        .iter()
        .find(|(k, _)| *k == param)
        .map_or_else(|| param.to_string(), |(_, p)| p.to_string())
}

fn slot<'a>(table: &'a mut toml::Table, path: &str, param: &str) -> Result<&'a mut toml::Value> {
    let unknown = || {
        WstabError::Config(format!(
            "sweep: unknown knob `{param}` ({path} is not set in the scenario)"
        ))
    };
    let mut keys = path.split('.');
    let first = keys.next().ok_or_else(unknown)?;
    let mut v = table.get_mut(first).ok_or_else(unknown)?;
    for k in keys {
        v = v.get_mut(k).ok_or_else(unknown)?;
    }
    Ok(v)
}

fn set_knob(table: &mut toml::Table, path: &str, param: &str, value: f64) -> Result<()> {
    let v = slot(table, path, param)?;
    *v = match v {
        toml::Value::Integer(_) => {
            if value.fract() != 0.0 {
                return Err(WstabError::Config(format!(
                    "sweep: `{param}` takes integers, got {value}"
                )));
            }
            toml::Value::Integer(value as i64)
        }
        toml::Value::Float(_) => toml::Value::Float(value),
        _ => {
            return Err(WstabError::Config(format!(
                "sweep: knob `{param}` is not numeric"
            )))
        }
    };
    Ok(())
}

/// Runs `base` once per value of `param`. Rows follow `values` in order.
pub fn sweep(base: &Scenario, param: &str, values: &[f64]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(WstabError::Config("range: empty".into()));
    }
    let path = knob_path(param);
    let mut base = base.clone();
    base.sweep = None;
    if !base.tasks.contains(&Task::Spectrum) {
        base.tasks.push(Task::Spectrum);
    }
    let table = toml::Table::try_from(&base).map_err(|e| WstabError::Config(e.to_string()))?;
    // Reject bad knobs before doing any work.
    set_knob(&mut table.clone(), &path, param, values[0])?;

    let mut rows = values
        .par_iter()
        .map(|&value| {
            let mut t = table.clone();
            set_knob(&mut t, &path, param, value)?;
            let out = run(&Scenario::from_table(t)?)?;
            let s = out.report.spectrum.as_ref().expect("spectrum requested");
            Ok(SweepRow {
                value,
                lambda_min: s.lambda_min,
                lambda_next: s.eigenvalues.get(1).copied(),
                constrained_min: s.constrained_minimum,
                weighted_area: out.report.mesh.weighted_area,
                pass: out.report.pass,
                order_min: None,
                order_next: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if path == "resolution" {
        for i in 2..rows.len() {
            let ratio = rows[i].value / rows[i - 1].value;
            rows[i].order_min = observed_order(
                rows[i - 2].lambda_min,
                rows[i - 1].lambda_min,
                rows[i].lambda_min,
                ratio,
            );
            if let (Some(a), Some(b), Some(c)) = (
                rows[i - 2].lambda_next,
                rows[i - 1].lambda_next,
                rows[i].lambda_next,
            ) {
                rows[i].order_next = observed_order(a, b, c, ratio);
            }
        }
    }
    let crossing = rows.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        if a.lambda_min == 0.0 {
            Some(a.value)
        } else if a.lambda_min * b.lambda_min <= 0.0 {
            Some(a.value + (b.value - a.value) * a.lambda_min / (a.lambda_min - b.lambda_min))
        } else {
            None
        }
    });
    Ok(SweepTable {
        param: param.to_string(),
        path,
        rows,
        crossing,
    })
}

/// Order `p` from three successive values on grids refined by `ratio`.
fn observed_order(coarse: f64, mid: f64, fine: f64, ratio: f64) -> Option<f64> {
    let (e1, e2) = ((mid - coarse).abs(), (fine - mid).abs());
    (e1 > 0.0 && e2 > 0.0 && ratio > 1.0).then(|| (e1 / e2).ln() / ratio.ln())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let orders = self.path == "resolution";
        let mut s = format!(
            "{},lambda_min,lambda_next,constrained_min,weighted_area,pass",
            self.param
        );
        if orders {
            s.push_str(",order_min,order_next");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{:.12e},{},{:.12e},{:.12e},{}",
                r.value,
                r.lambda_min,
                opt(r.lambda_next),
                r.constrained_min,
                r.weighted_area,
                r.pass
            );
            if orders {
                let _ = write!(s, ",{},{}", opt(r.order_min), opt(r.order_next));
            }
            s.push('\n');
        }
        s
    }
}
