use std::fmt::Write as _;

use serde::Serialize;

use super::{paired_t_test, EvalError, EvalReport, SignificanceResult};

/// One (group, metric) line of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub group: String,
    pub metric: String,
    pub value_a: f64,
    pub value_b: f64,
    /// `value_b − value_a`.
    pub delta: f64,
    /// Test of `b > a` on the group's per-segment scores; `None` with fewer than 2 segments.
    pub significance: Option<SignificanceResult>,
}

impl CompareRow {
    pub fn mark(&self) -> &'static str {
        match &self.significance {
            Some(s) if s.significant && s.degenerate => "*!",
            Some(s) if s.significant => "*",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareTable {
    pub system_a: String,
    pub system_b: String,
    pub alpha: f64,
    pub rows: Vec<CompareRow>,
}

const FOOTNOTE: &str = "Significance: one-tailed paired t-test of b > a on per-segment scores \
(segment-level chrF/BLEU even where the value column is corpus-level); `*` p < alpha, `!` zero-variance differences.";

fn num(x: f64) -> String {
    format!("{x:.4}")
}

impl CompareTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "group,metric,value_a,value_b,delta,t,df,p_one_tailed,significant,degenerate\n",
        );
        for r in &self.rows {
            let (t, df, p, sig, deg) = match &r.significance {
                Some(s) => (
                    num(s.t),
                    s.df.to_string(),
                    format!("{:.6}", s.p_one_tailed),
                    s.significant,
                    s.degenerate,
                ),
                None => (String::new(), String::new(), String::new(), false, false),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{t},{df},{p},{sig},{deg}",
                r.group,
                r.metric,
                num(r.value_a),
                num(r.value_b),
                num(r.delta)
            );
        }
        out
    }

    /// Aligned plain-text table with a footnote on how significance was computed.
    pub fn to_text(&self) -> String {
        let header = ["group", "metric", "a", "b", "delta", "p", "sig"];
        let mut rows: Vec<[String; 7]> = vec![header.map(String::from)];
        for r in &self.rows {
            rows.push([
                r.group.clone(),
                r.metric.clone(),
                format!("{:.2}", r.value_a),
                format!("{:.2}", r.value_b),
                format!("{:+.2}", r.delta),
                r.significance
                    .map(|s| format!("{:.4}", s.p_one_tailed))
                    .unwrap_or_else(|| "-".into()),
                r.mark().to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..7)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!(
            "a = {}, b = {}, alpha = {}\n",
            self.system_a, self.system_b, self.alpha
        );
        for row in &rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (v, w))| {
                    if i < 2 {
                        format!("{v:<w$}")
                    } else {
                        format!("{v:>w$}")
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out.push('\n');
        out.push_str(FOOTNOTE);
        out.push('\n');
        out
    }
}

/// Deltas `b − a` for every group and metric, with a paired test of `b > a`.
pub fn compare_report(
    a: &EvalReport,
    b: &EvalReport,
    alpha: f64,
) -> Result<CompareTable, EvalError> {
    if a.segment_ids != b.segment_ids || a.segment_lang_pairs != b.segment_lang_pairs {
        return Err(EvalError::Mismatch(
            "reports cover different segments".into(),
        ));
    }
    if a.metrics != b.metrics {
        return Err(EvalError::Mismatch(format!(
            "metrics differ: {:?} vs {:?}",
            a.metrics, b.metrics
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvalError::Mismatch(format!("alpha {alpha} outside (0, 1)")));
    }
    let mut rows = Vec::new();
    for group in a.groups() {
        let idx = a.group_indices(&group);
        for metric in &a.metrics {
            let (Some(va), Some(vb)) =
                (a.group_value(&group, metric), b.group_value(&group, metric))
            else {
                return Err(EvalError::Mismatch(format!(
                    "missing value for {group}/{metric}"
                )));
            };
            let sa: Vec<f64> = idx.iter().map(|&i| a.segment_scores[metric][i]).collect();
            let sb: Vec<f64> = idx.iter().map(|&i| b.segment_scores[metric][i]).collect();
            let significance = if idx.len() >= 2 {
                Some(paired_t_test(&sb, &sa, alpha)?)
            } else {
                None
            };
            rows.push(CompareRow {
                group: group.clone(),
                metric: metric.clone(),
                value_a: va,
                value_b: vb,
                delta: vb - va,
                significance,
            });
        }
    }
    Ok(CompareTable {
        system_a: a.system.clone(),
        system_b: b.system.clone(),
        alpha,
        rows,
    })
}
