use std::fmt::Write as _;

use serde_json::json;

use crate::regressor::{ErrorStats, EvalReport};
use crate::skeleton::{AngleName, JointAngleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub angle: AngleName,
    pub train: ErrorStats,
    pub test: ErrorStats,
}

/// Evaluation results laid out one angle per row, in table order, with a
/// pooled footer.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    pub aggregate_train: ErrorStats,
    pub aggregate_test: ErrorStats,
    pub excluded_train: usize,
    pub excluded_test: usize,
}

impl From<&EvalReport> for ReportTable {
    fn from(report: &EvalReport) -> Self {
        let mut rows: Vec<ReportRow> =
            report.per_angle.iter().map(|(a, m)| ReportRow { angle: *a, train: m.train, test: m.test }).collect();
        rows.sort_by_key(|r| r.angle.index());
        // The footer is recomputed from the row sums, never averaged from row means.
        let mut aggregate_train = ErrorStats::default();
        let mut aggregate_test = ErrorStats::default();
        for r in &rows {
            aggregate_train.merge(&r.train);
            aggregate_test.merge(&r.test);
        }
        Self {
            rows,
            aggregate_train,
            aggregate_test,
            excluded_train: report.excluded_train,
            excluded_test: report.excluded_test,
        }
    }
}

impl ReportTable {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.to_text(),
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<5} {:<28} {:>10} {:>10} {:>10} {:>10} {:>6}",
            "Angle", "Description", "Train MAE", "Train RMSE", "Test MAE", "Test RMSE", "N test"
        )
        .unwrap();
        let line = |out: &mut String, key: &str, label: &str, train: &ErrorStats, test: &ErrorStats| {
            writeln!(
                out,
                "{key:<5} {label:<28} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>6}",
                train.mae(),
                train.rmse(),
                test.mae(),
                test.rmse(),
                test.n
            )
            .unwrap();
        };
        for r in &self.rows {
            line(&mut out, r.angle.acronym(), r.angle.label(), &r.train, &r.test);
        }
        line(&mut out, "ALL", "pooled over all angles", &self.aggregate_train, &self.aggregate_test);
        if self.excluded_train + self.excluded_test > 0 {
            writeln!(out, "excluded samples: {} train, {} test", self.excluded_train, self.excluded_test).unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle,train_mae,train_rmse,train_n,test_mae,test_rmse,test_n\n");
        let line = |out: &mut String, key: &str, train: &ErrorStats, test: &ErrorStats| {
            writeln!(
                out,
                "{key},{:.4},{:.4},{},{:.4},{:.4},{}",
                train.mae(),
                train.rmse(),
                train.n,
                test.mae(),
                test.rmse(),
                test.n
            )
            .unwrap();
        };
        for r in &self.rows {
            line(&mut out, r.angle.acronym(), &r.train, &r.test);
        }
        line(&mut out, "ALL", &self.aggregate_train, &self.aggregate_test);
        out
    }

    pub fn to_json(&self) -> String {
        let stats = |s: &ErrorStats| json!({ "mae": round4(s.mae()), "rmse": round4(s.rmse()), "n": s.n });
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| json!({ "angle": r.angle.acronym(), "train": stats(&r.train), "test": stats(&r.test) }))
            .collect();
        let doc = json!({
            "rows": rows,
            "aggregate": { "train": stats(&self.aggregate_train), "test": stats(&self.aggregate_test) },
            "excluded": { "train": self.excluded_train, "test": self.excluded_test },
        });
        serde_json::to_string_pretty(&doc).unwrap() + "\n"
    }
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// `angle,degrees` lines in table order; undefined angles leave the value empty.
pub fn angles_csv(angles: &JointAngleSet) -> String {
    let mut out = String::from("angle,degrees\n");
    for (name, v) in angles.iter() {
        match v {
            Some(v) => writeln!(out, "{name},{v:.4}").unwrap(),
            None => writeln!(out, "{name},").unwrap(),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressor::AngleMetrics;

    fn report() -> EvalReport {
        let per_angle = AngleName::ALL
            .into_iter()
            .map(|a| {
                let mut m = AngleMetrics::default();
                for k in 0..=a.index() {
                    m.test.push(k as f64);
                    m.train.push(0.5);
                }
                (a, m)
            })
            .collect();
        EvalReport {
            per_angle,
            aggregate_train: ErrorStats::default(),
            aggregate_test: ErrorStats::default(),
            excluded_train: 0,
            excluded_test: 2,
        }
    }

    #[test]
    fn footer_is_pooled_not_averaged() {
        let table = ReportTable::from(&report());
        // Errors 0..=i for row i: pooled mean = Σ_i Σ_k k / Σ_i (i + 1).
        let total: f64 = (0..16).map(|i| (0..=i).sum::<usize>() as f64).sum();
        let count: f64 = (1..=16).sum::<usize>() as f64;
        assert!((table.aggregate_test.mae() - total / count).abs() < 1e-12);
        let mean_of_means: f64 = (0..16).map(|i| i as f64 / 2.0).sum::<f64>() / 16.0;
        assert!((table.aggregate_test.mae() - mean_of_means).abs() > 0.1);
    }

    #[test]
    fn renders_in_table_order_and_stably() {
        let table = ReportTable::from(&report());
        let text = table.to_text();
        assert_eq!(text, ReportTable::from(&report()).to_text());
        let el = text.find("\nEL ").unwrap();
        let tf = text.find("\nTF ").unwrap();
        assert!(el < tf && text.contains("\nALL "));
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 18);
        assert_eq!(csv.lines().nth(1).unwrap(), "EL,0.5000,0.5000,1,0.0000,0.0000,1");
        let v: serde_json::Value = serde_json::from_str(&table.to_json()).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 16);
        assert_eq!(v["excluded"]["test"], 2);
    }
}
