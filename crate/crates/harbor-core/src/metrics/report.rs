//! Plot-ready CSV emission and the text summary table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::MetricsReport;

#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub run_id: String,
    pub bidder: String,
    pub profit_ratio: Option<f64>,
    pub acquisition_rate: Option<f64>,
    pub trueskill_mu: f64,
    pub trueskill_sigma: f64,
    pub kl_single: Option<f64>,
    pub kl_mix: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EngagementRow {
    pub run_id: String,
    pub bidder: String,
    pub listing: String,
    pub raises: u64,
}

pub fn write_runs_csv(path: impl AsRef<Path>, rows: &[RunRow]) -> std::io::Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_engagement_csv(
    path: impl AsRef<Path>,
    rows: &[EngagementRow],
) -> std::io::Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn cell(value: Option<f64>, percent: bool) -> String {
    match value {
        Some(v) if percent => format!("{:.2}", v * 100.0),
        Some(v) => format!("{v:.2}"),
        None => "n/a".to_string(),
    }
}

/// One aggregated table row: a named setting with per-role metrics.
#[derive(Debug, Clone)]
pub struct SettingSummary {
    pub setting: String,
    pub report: MetricsReport,
}

/// Renders settings-by-roles summary text: profit rate (%), TrueSkill mu and
/// acquisition rate per role, one row per setting.
pub fn summary_table(summaries: &[SettingSummary]) -> String {
    let mut roles: Vec<String> = Vec::new();
    for summary in summaries {
        for b in &summary.report.bidders {
            if !roles.contains(&b.bidder) {
                roles.push(b.bidder.clone());
            }
        }
    }
    let mut header = vec!["Setting".to_string()];
    for metric in ["R%", "S", "A"] {
        for role in &roles {
            header.push(format!("{metric} {role}"));
        }
    }
    let mut table: Vec<Vec<String>> = vec![header];
    for summary in summaries {
        let by_role: BTreeMap<&str, _> = summary
            .report
            .bidders
            .iter()
            .map(|b| (b.bidder.as_str(), b))
            .collect();
        let mut row = vec![summary.setting.clone()];
        for role in &roles {
            row.push(
                by_role
                    .get(role.as_str())
                    .map(|b| cell(b.profit_ratio, true))
                    .unwrap_or_else(|| "n/a".into()),
            );
        }
        for role in &roles {
            row.push(
                by_role
                    .get(role.as_str())
                    .map(|b| cell(Some(b.trueskill_mu), false))
                    .unwrap_or_else(|| "n/a".into()),
            );
        }
        for role in &roles {
            row.push(
                by_role
                    .get(role.as_str())
                    .map(|b| cell(b.acquisition_rate, false))
                    .unwrap_or_else(|| "n/a".into()),
            );
        }
        table.push(row);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:>w$}", w = w))
            .collect();
        out.push_str(&line.join("  "));
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}
