use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{EvalError, Metric, MetricsReport};

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::MismatchedAgents(format!("{} vs {} values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFewAgents(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedValue {
    pub agent: String,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: Metric,
    pub pearson_r: f64,
    pub pairs: Vec<PairedValue>,
}

/// Correlates one metric across the agents evaluated on two test suites.
/// Both maps must hold the same agents; order follows `a`.
pub fn compare_reports(
    a: &IndexMap<String, MetricsReport>,
    b: &IndexMap<String, MetricsReport>,
    metric: Metric,
) -> Result<Comparison, EvalError> {
    let mut missing: Vec<&str> = a.keys().filter(|k| !b.contains_key(*k)).map(String::as_str).collect();
    missing.extend(b.keys().filter(|k| !a.contains_key(*k)).map(String::as_str));
    if !missing.is_empty() {
        return Err(EvalError::MismatchedAgents(missing.join(", ")));
    }
    let mut pairs = Vec::with_capacity(a.len());
    for (agent, ra) in a {
        let rb = &b[agent];
        let (Some(x), Some(y)) = (ra.get(metric).value, rb.get(metric).value) else {
            return Err(EvalError::MismatchedAgents(format!("{agent} has no {} value", metric.as_str())));
        };
        pairs.push(PairedValue {
            agent: agent.clone(),
            a: x,
            b: y,
        });
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.a).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.b).collect();
    Ok(Comparison {
        metric,
        pearson_r: pearson(&xs, &ys)?,
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

/// One row per agent, one column per metric, values in percent.
pub fn render_table<'a>(rows: impl IntoIterator<Item = (&'a str, &'a MetricsReport)>, format: TableFormat) -> String {
    let rows: Vec<(&str, &MetricsReport)> = rows.into_iter().collect();
    let mut header = vec!["Agent".to_string()];
    header.extend(Metric::ALL.iter().map(|m| m.label().to_string()));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(agent, r)| {
            let mut line = vec![agent.to_string()];
            line.extend(Metric::ALL.iter().map(|m| r.get(*m).to_string()));
            line
        })
        .collect();
    match format {
        TableFormat::Csv => {
            let mut out = header.join(",");
            out.push('\n');
            for line in body {
                out.push_str(&line.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(","));
                out.push('\n');
            }
            out
        }
        TableFormat::Text => {
            let widths: Vec<usize> = (0..header.len())
                .map(|i| body.iter().map(|l| l[i].len()).chain([header[i].len()]).max().unwrap_or(0))
                .collect();
            let fmt_line = |cells: &[String]| -> String {
                cells
                    .iter()
                    .enumerate()
                    .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            let mut out = fmt_line(&header);
            out.push('\n');
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
            for line in body {
                out.push_str(&fmt_line(&line));
                out.push('\n');
            }
            out
        }
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(EvalError::TooFewAgents(1))));
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(EvalError::ZeroVariance)));
    }

    #[test]
    fn csv_quotes() {
        assert_eq!(csv_cell("a,b"), "\"a,b\"");
        assert_eq!(csv_cell("plain"), "plain");
    }
}
