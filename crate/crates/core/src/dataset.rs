//! Uniformly sampled multi-channel records and their CSV form.
//!
//! CSV layout: a header row whose first column is `time_s`, followed by one
//! column per channel named `name` or `name[unit]`. Values are written with
//! Rust's shortest round-trip float formatting, so export followed by
//! ingestion is lossless.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const TIME_COLUMN: &str = "time_s";

/// Maximum tolerated deviation of a timestamp from the uniform grid.
pub const TIME_JITTER_S: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelRole {
    State,
    Input,
    Unassigned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub unit: String,
    pub role: ChannelRole,
    pub values: Vec<f64>,
}

impl Channel {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, role: ChannelRole, values: Vec<f64>) -> Self {
        Channel {
            name: name.into(),
            unit: unit.into(),
            role,
            values,
        }
    }

    fn header(&self) -> String {
        if self.unit.is_empty() {
            self.name.clone()
        } else {
            format!("{}[{}]", self.name, self.unit)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    sample_rate: f64,
    channels: Vec<Channel>,
}

impl TimeSeriesDataset {
    pub fn new(name: impl Into<String>, sample_rate: f64, channels: Vec<Channel>) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        let len = channels.first().map_or(0, |c| c.values.len());
        if len < 2 {
            return Err(Error::InsufficientData(
                "a dataset needs at least one channel with two samples".into(),
            ));
        }
        for (i, c) in channels.iter().enumerate() {
            if c.values.len() != len {
                return Err(Error::Shape(format!(
                    "channel `{}` has {} samples, expected {len}",
                    c.name,
                    c.values.len()
                )));
            }
            if channels[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Schema(format!("duplicate channel `{}`", c.name)));
            }
            if let Some(k) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "channel `{}` has a non-finite value at sample {k}",
                    c.name
                )));
            }
        }
        Ok(TimeSeriesDataset {
            name: name.into(),
            sample_rate,
            channels,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.channels[0].values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Result<&Channel> {
        self.channels
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Schema(format!("dataset `{}` has no channel `{name}`", self.name)))
    }

    pub fn values(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.channel(name)?.values)
    }

    /// Tags the named channels with their roles; everything else is unassigned.
    pub fn assign_roles(&mut self, states: &[String], inputs: &[String]) -> Result<()> {
        for n in states.iter().chain(inputs) {
            self.channel(n)?;
        }
        for c in &mut self.channels {
            c.role = if states.contains(&c.name) {
                ChannelRole::State
            } else if inputs.contains(&c.name) {
                ChannelRole::Input
            } else {
                ChannelRole::Unassigned
            };
        }
        Ok(())
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.sample_rate
    }

    /// Stacks the named channels as rows of a `names.len() x len` matrix.
    pub fn matrix(&self, names: &[String]) -> Result<Matrix> {
        let cols = self.len();
        let rows: Vec<&[f64]> = names.iter().map(|n| self.values(n)).collect::<Result<_>>()?;
        Ok(Matrix::from_fn(names.len(), cols, |i, j| rows[i][j]))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Csv {
            path: self.name.clone().into(),
            message: e.to_string(),
        };
        let mut header = vec![TIME_COLUMN.to_string()];
        header.extend(self.channels.iter().map(Channel::header));
        w.write_record(&header).map_err(csv_err)?;
        let mut row = Vec::with_capacity(header.len());
        for k in 0..self.len() {
            row.clear();
            row.push(self.time(k).to_string());
            row.extend(self.channels.iter().map(|c| c.values[k].to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV file and infers the sample rate from `time_s`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::read_csv_from(BufReader::new(file), &name).map_err(|e| match e {
            Error::Csv { message, .. } => Error::Csv {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn read_csv_from<R: Read>(reader: R, name: &str) -> Result<Self> {
        let fail = |message: String| Error::Csv {
            path: name.into(),
            message,
        };
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = r.headers().map_err(|e| fail(e.to_string()))?.clone();
        if headers.is_empty() {
            return Err(fail("empty file".into()));
        }
        let mut columns: Vec<(String, String)> = Vec::new();
        let mut time_idx = None;
        for (i, h) in headers.iter().enumerate() {
            let h = h.trim();
            let (cname, unit) = match (h.find('['), h.ends_with(']')) {
                (Some(open), true) => (&h[..open], &h[open + 1..h.len() - 1]),
                _ => (h, ""),
            };
            if cname.is_empty() {
                return Err(fail(format!("column {} has an empty header", i + 1)));
            }
            if columns.iter().any(|(n, _)| n == cname) {
                return Err(fail(format!("duplicate header `{cname}`")));
            }
            if cname == TIME_COLUMN {
                time_idx = Some(i);
            }
            columns.push((cname.to_string(), unit.to_string()));
        }
        let time_idx = time_idx.ok_or_else(|| fail(format!("missing `{TIME_COLUMN}` column")))?;

        let mut data: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
        for (k, record) in r.records().enumerate() {
            // header is line 1
            let line = k + 2;
            let record = record.map_err(|e| fail(format!("line {line}: {e}")))?;
            if record.len() != columns.len() {
                return Err(fail(format!(
                    "line {line}: expected {} fields, found {}",
                    columns.len(),
                    record.len()
                )));
            }
            for (i, field) in record.iter().enumerate() {
                let field = field.trim();
                let col = &columns[i].0;
                if field.is_empty() {
                    return Err(fail(format!("line {line}, column `{col}`: missing value")));
                }
                let v: f64 = field
                    .parse()
                    .map_err(|_| fail(format!("line {line}, column `{col}`: cannot parse `{field}`")))?;
                if !v.is_finite() {
                    return Err(fail(format!("line {line}, column `{col}`: non-finite value `{field}`")));
                }
                data[i].push(v);
            }
        }
        let n = data[time_idx].len();
        if n == 0 {
            return Err(fail("empty file: no data rows".into()));
        }
        if n < 2 {
            return Err(fail("need at least two rows to infer the sample rate".into()));
        }
        let sample_rate = infer_sample_rate(&data[time_idx]).map_err(fail)?;

        let channels = columns
            .into_iter()
            .zip(data)
            .enumerate()
            .filter(|(i, _)| *i != time_idx)
            .map(|(_, ((cname, unit), values))| Channel::new(cname, unit, ChannelRole::Unassigned, values))
            .collect::<Vec<_>>();
        if channels.is_empty() {
            return Err(fail("no data channels besides time".into()));
        }
        TimeSeriesDataset::new(name, sample_rate, channels)
    }
}

/// Sample rate from a strictly increasing, uniformly spaced time column.
///
/// Rates within 1e-6 (relative) of an integer are snapped to it so that
/// exported grids (`k / rate`) reproduce the exact rate on ingestion.
fn infer_sample_rate(t: &[f64]) -> std::result::Result<f64, String> {
    let n = t.len();
    for k in 1..n {
        if !(t[k] > t[k - 1]) {
            return Err(format!("line {}: time is not strictly increasing", k + 2));
        }
    }
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    for (k, &tk) in t.iter().enumerate() {
        let expected = t[0] + k as f64 * dt;
        if (tk - expected).abs() > TIME_JITTER_S {
            return Err(format!(
                "line {}: non-uniform sampling (time {tk} deviates from grid value {expected})",
                k + 2
            ));
        }
    }
    let rate = 1.0 / dt;
    let snapped = rate.round();
    Ok(if snapped > 0.0 && (rate - snapped).abs() <= 1e-6 * rate {
        snapped
    } else {
        rate
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_at_100_hz() {
        let csv = "time_s,a[K],b\n0,1,2\n0.01,3,4\n0.02,5,6\n";
        let d = TimeSeriesDataset::read_csv_from(csv.as_bytes(), "t").unwrap();
        assert_eq!(d.sample_rate(), 100.0);
        assert_eq!(d.len(), 3);
        assert_eq!(d.channel("a").unwrap().unit, "K");
        assert_eq!(d.values("b").unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn nan_cell_names_line_and_column() {
        let csv = "time_s,a,b\n0,1,2\n0.01,NaN,4\n";
        let err = TimeSeriesDataset::read_csv_from(csv.as_bytes(), "t").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("`a`"), "{err}");
    }

    #[test]
    fn missing_cell_rejected() {
        let csv = "time_s,a,b\n0,1,2\n0.01,,4\n";
        let err = TimeSeriesDataset::read_csv_from(csv.as_bytes(), "t").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("missing"), "{err}");
    }

    #[test]
    fn non_uniform_rejected() {
        let csv = "time_s,a\n0,1\n0.01,2\n0.03,3\n";
        let err = TimeSeriesDataset::read_csv_from(csv.as_bytes(), "t").unwrap_err().to_string();
        assert!(err.contains("non-uniform"), "{err}");
    }

    #[test]
    fn small_jitter_tolerated() {
        let csv = "time_s,a\n0,1\n0.0100005,2\n0.02,3\n";
        let d = TimeSeriesDataset::read_csv_from(csv.as_bytes(), "t").unwrap();
        assert_eq!(d.sample_rate(), 100.0);
    }

    #[test]
    fn duplicate_header_rejected() {
        let csv = "time_s,a,a[K]\n0,1,2\n0.01,3,4\n";
        let err = TimeSeriesDataset::read_csv_from(csv.as_bytes(), "t").unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn empty_file_rejected() {
        assert!(TimeSeriesDataset::read_csv_from("".as_bytes(), "t").is_err());
        assert!(TimeSeriesDataset::read_csv_from("time_s,a\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn constructor_invariants() {
        let ch = |n: &str, v: Vec<f64>| Channel::new(n, "", ChannelRole::State, v);
        assert!(TimeSeriesDataset::new("d", 0.0, vec![ch("a", vec![1.0, 2.0])]).is_err());
        assert!(TimeSeriesDataset::new("d", 10.0, vec![ch("a", vec![1.0])]).is_err());
        assert!(TimeSeriesDataset::new("d", 10.0, vec![ch("a", vec![1.0, 2.0]), ch("b", vec![1.0])]).is_err());
        assert!(TimeSeriesDataset::new("d", 10.0, vec![ch("a", vec![1.0, f64::NAN])]).is_err());
    }
}
