//! Accuracy metrics: NRMSE, R² and MAPE, plus table formatting.
//!
//! The error convention is `e_i = ŷ_i - y_i` (predicted minus measured).
//!
//! NRMSE is normalized by the mean of the *predicted* signal ŷ, not of the
//! measured one. This is less common than normalizing by mean(y) and matters
//! when comparing against figures computed the other way, so
//! [`MetricReport`] carries both variants.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn check_lengths(measured: &[f64], predicted: &[f64], min: usize) -> Result<()> {
    if measured.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "measured has {} points, predicted has {}",
            measured.len(),
            predicted.len()
        )));
    }
    if measured.len() < min {
        return Err(Error::InsufficientData(format!(
            "metric needs at least {min} points, got {}",
            measured.len()
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rms_error(measured: &[f64], predicted: &[f64]) -> f64 {
    let sse: f64 = measured
        .iter()
        .zip(predicted)
        .map(|(y, yh)| (yh - y) * (yh - y))
        .sum();
    (sse / measured.len() as f64).sqrt()
}

/// `sqrt(mean(e²)) / |mean(ŷ)|`.
pub fn nrmse(measured: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(measured, predicted, 1)?;
    let denom = mean(predicted);
    if denom == 0.0 {
        return Err(Error::DegenerateDenominator("mean of predicted signal".into()));
    }
    Ok(rms_error(measured, predicted) / denom.abs())
}

/// `sqrt(mean(e²)) / |mean(y)|`, the more common normalization.
pub fn nrmse_by_measured_mean(measured: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(measured, predicted, 1)?;
    let denom = mean(measured);
    if denom == 0.0 {
        return Err(Error::DegenerateDenominator("mean of measured signal".into()));
    }
    Ok(rms_error(measured, predicted) / denom.abs())
}

/// `1 - Σe² / Σ(y - mean(y))²`. May be negative.
pub fn r_squared(measured: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(measured, predicted, 2)?;
    let mu = mean(measured);
    let sst: f64 = measured.iter().map(|y| (y - mu) * (y - mu)).sum();
    if sst == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let sse: f64 = measured
        .iter()
        .zip(predicted)
        .map(|(y, yh)| (yh - y) * (yh - y))
        .sum();
    Ok(1.0 - sse / sst)
}

/// `100/N Σ |e| / |y|`, in percent. Zero measurements are an error.
pub fn mape(measured: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(measured, predicted, 1)?;
    let zeros: Vec<usize> = measured
        .iter()
        .enumerate()
        .filter(|(_, y)| **y == 0.0)
        .map(|(i, _)| i)
        .collect();
    if !zeros.is_empty() {
        return Err(Error::ZeroMeasured { indices: zeros });
    }
    let sum: f64 = measured
        .iter()
        .zip(predicted)
        .map(|(y, yh)| (yh - y).abs() / y.abs())
        .sum();
    Ok(sum / measured.len() as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub channel: String,
    /// Normalized by mean(ŷ).
    pub nrmse: f64,
    /// Normalized by mean(y).
    pub nrmse_measured_mean: f64,
    pub r_squared: f64,
    /// Percent.
    pub mape: f64,
    pub n_points: usize,
}

impl MetricReport {
    pub fn compute(channel: &str, measured: &[f64], predicted: &[f64]) -> Result<Self> {
        Ok(MetricReport {
            channel: channel.to_string(),
            nrmse: nrmse(measured, predicted)?,
            nrmse_measured_mean: nrmse_by_measured_mean(measured, predicted)?,
            r_squared: r_squared(measured, predicted)?,
            mape: mape(measured, predicted)?,
            n_points: measured.len(),
        })
    }
}

/// One report per row of `measured`/`predicted` (rows are channels).
pub fn evaluate_channels(measured: &Matrix, predicted: &Matrix, names: &[String]) -> Result<Vec<MetricReport>> {
    if measured.shape() != predicted.shape() {
        return Err(Error::Shape(format!(
            "measured is {:?}, predicted is {:?}",
            measured.shape(),
            predicted.shape()
        )));
    }
    if names.len() != measured.nrows() {
        return Err(Error::Shape(format!(
            "{} names for {} channels",
            names.len(),
            measured.nrows()
        )));
    }
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let y: Vec<f64> = measured.row(i).iter().copied().collect();
            let yh: Vec<f64> = predicted.row(i).iter().copied().collect();
            MetricReport::compute(name, &y, &yh)
        })
        .collect()
}

/// A row of a comparison table: `group` is the section heading (e.g. the
/// output channel), `label` the row label (e.g. the method).
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub group: String,
    pub label: String,
    pub report: MetricReport,
}

/// Metric table with sectioned plain-text and flat CSV renderings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub title: String,
    pub rows: Vec<TableRow>,
}

impl ResultsTable {
    pub fn new(title: impl Into<String>) -> Self {
        ResultsTable {
            title: title.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, group: impl Into<String>, label: impl Into<String>, report: MetricReport) {
        self.rows.push(TableRow {
            group: group.into(),
            label: label.into(),
            report,
        });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,label,channel,nrmse,nrmse_measured_mean,r_squared,mape,n_points\n");
        for r in &self.rows {
            let m = &r.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                csv_field(&r.group),
                csv_field(&r.label),
                csv_field(&m.channel),
                m.nrmse,
                m.nrmse_measured_mean,
                m.r_squared,
                m.mape,
                m.n_points
            );
        }
        out
    }

    /// Aligned text with one section per group, rows in insertion order.
    pub fn to_text(&self) -> String {
        let label_w = self
            .rows
            .iter()
            .map(|r| r.label.chars().count())
            .chain(std::iter::once("Method".len()))
            .max()
            .unwrap_or(6);
        let width = label_w + 3 * 12;
        let rule = "-".repeat(width);
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "{}", self.title);
        }
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(out, "{:<label_w$}{:>12}{:>12}{:>12}", "Method", "NRMSE", "R^2", "MAPE");
        let mut current: Option<&str> = None;
        for r in &self.rows {
            if current != Some(r.group.as_str()) {
                let _ = writeln!(out, "{rule}");
                let pad = width.saturating_sub(r.group.chars().count()) / 2;
                let _ = writeln!(out, "{}{}", " ".repeat(pad), r.group);
                let _ = writeln!(out, "{rule}");
                current = Some(&r.group);
            }
            let m = &r.report;
            let _ = writeln!(
                out,
                "{:<label_w$}{:>12.4}{:>12.4}{:>12.3}",
                r.label, m.nrmse, m.r_squared, m.mape
            );
        }
        let _ = writeln!(out, "{rule}");
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
