//! Consistency checks over published result tables.
//!
//! Two fixtures ship with the crate: per-configuration metric rows
//! (accuracy, UAR, sensitivity, specificity in percent, two decimals) and
//! subgroup bias rows (integer percents). The checks recompute the derived
//! columns from the primary ones.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRIC_FIXTURE: &str = include_str!("../../fixtures/table_metrics.csv");
pub const BIAS_FIXTURE: &str = include_str!("../../fixtures/table_bias.csv");

/// Allowed |UAR − (Se + Sp)/2| on the [0, 1] scale for two-decimal percents.
pub const UAR_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub table: String,
    pub task: String,
    pub dataset: String,
    pub feature: String,
    pub classifier: String,
    pub accuracy: f64,
    pub uar: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub table: String,
    pub dataset: String,
    pub dimension: String,
    pub group_a: String,
    pub group_b: String,
    pub sp_a: i32,
    pub se_a: i32,
    pub delta_a: i32,
    pub sp_b: i32,
    pub se_b: i32,
    pub delta_b: i32,
    pub delta_sp: i32,
    pub delta_se: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowCheck {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, origin: &Path) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e| Error::csv(origin, e)))
        .collect()
}

pub fn metric_rows(text: &str) -> Result<Vec<MetricRow>> {
    parse(text, Path::new("<metric table>"))
}

pub fn bias_rows(text: &str) -> Result<Vec<BiasRow>> {
    parse(text, Path::new("<bias table>"))
}

impl MetricRow {
    pub fn label(&self) -> String {
        format!(
            "Table {} {} {} {} {}",
            self.table, self.task, self.dataset, self.feature, self.classifier
        )
    }
}

/// UAR identity on the [0, 1] scale.
pub fn check_metric_row(row: &MetricRow) -> RowCheck {
    let uar = row.uar / 100.0;
    let implied = (row.sensitivity / 100.0 + row.specificity / 100.0) / 2.0;
    let gap = (uar - implied).abs();
    RowCheck {
        label: row.label(),
        passed: gap <= UAR_TOLERANCE + 1e-12,
        detail: format!(
            "UAR {:.4} vs (Se+Sp)/2 {:.5} (|diff| {:.5}, tol {UAR_TOLERANCE})",
            uar, implied, gap
        ),
    }
}

/// δ = Sp − Se for both groups and Δ = A − B for both metrics, exactly.
pub fn check_bias_row(row: &BiasRow) -> RowCheck {
    let mut failures = Vec::new();
    let mut expect = |name: &str, stated: i32, computed: i32| {
        if stated != computed {
            failures.push(format!("{name}: stated {stated}, computed {computed}"));
        }
    };
    expect(&format!("delta {}", row.group_a), row.delta_a, row.sp_a - row.se_a);
    expect(&format!("delta {}", row.group_b), row.delta_b, row.sp_b - row.se_b);
    expect("Delta_Sp", row.delta_sp, row.sp_a - row.sp_b);
    expect("Delta_Se", row.delta_se, row.se_a - row.se_b);
    RowCheck {
        label: format!(
            "Table {} {} {} ({} vs {})",
            row.table, row.dataset, row.dimension, row.group_a, row.group_b
        ),
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "delta {:+}/{:+}, Delta_Sp {:+}, Delta_Se {:+}",
                row.delta_a, row.delta_b, row.delta_sp, row.delta_se
            )
        } else {
            failures.join("; ")
        },
    }
}

/// Checks every row of both fixtures (or of user-supplied tables).
pub fn check_tables(metric_text: &str, bias_text: &str) -> Result<Vec<RowCheck>> {
    let mut out: Vec<RowCheck> = metric_rows(metric_text)?.iter().map(check_metric_row).collect();
    out.extend(bias_rows(bias_text)?.iter().map(check_bias_row));
    Ok(out)
}
