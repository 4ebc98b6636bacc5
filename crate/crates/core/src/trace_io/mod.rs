//! S-parameter file ingestion.
//!
//! Two text formats are supported: Touchstone v1 two-port files and a simple
//! CSV schema with a header row. Both produce a [`ComplexTrace`], a validated
//! frequency-ordered series of complex samples.

mod csv_trace;
mod touchstone;

pub use csv_trace::{parse_csv_trace, CsvColumns};
pub use touchstone::{
    extract_trace, parse_touchstone, write_touchstone, DataFormat, FrequencyUnit, NetworkPoint,
    OptionLine, SParameter, TouchstoneDocument,
};

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

/// Minimum number of samples in a trace.
pub const MIN_TRACE_POINTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("line {line}: malformed option line: {reason}")]
    OptionLine { line: usize, reason: String },
    #[error("line {line}: expected 9 numeric fields for a two-port row, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: cannot parse number `{token}`")]
    Number { line: usize, token: String },
    #[error("line {line}: frequency {frequency_hz} Hz does not increase on the previous row")]
    NonMonotone { line: usize, frequency_hz: f64 },
    #[error("line {line}: unsupported Touchstone v2 keyword `{keyword}`")]
    Version2Keyword { line: usize, keyword: String },
    #[error("file contains no network data")]
    Empty,
    #[error("unknown parameter `{0}`: a two-port file carries S11, S21, S12 or S22")]
    UnknownParameter(String),
    #[error("CSV column `{0}` not found in header")]
    MissingColumn(String),
    #[error("CSV row {row}, column `{column}`: cannot parse `{value}`")]
    Cell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("CSV: {0}")]
    Csv(String),
    #[error("trace needs at least {MIN_TRACE_POINTS} points, got {0}")]
    TooShort(usize),
    #[error("trace frequencies must be strictly increasing (index {index})")]
    Unordered { index: usize },
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("frequency and value arrays differ in length ({frequencies} vs {values})")]
    LengthMismatch { frequencies: usize, values: usize },
}

/// Where a trace came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TraceMetadata {
    pub source: Option<String>,
    pub option_line: Option<OptionLine>,
    pub comments: Vec<String>,
}

/// A frequency-ordered series of complex S-parameter samples.
///
/// Frequencies are in Hz and strictly increasing, there are at least three
/// samples and every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTrace {
    frequencies: Vec<f64>,
    values: Vec<Complex64>,
    label: String,
    metadata: TraceMetadata,
}

impl ComplexTrace {
    pub fn new(
        frequencies: Vec<f64>,
        values: Vec<Complex64>,
        label: impl Into<String>,
    ) -> Result<Self, TraceError> {
        if frequencies.len() != values.len() {
            return Err(TraceError::LengthMismatch {
                frequencies: frequencies.len(),
                values: values.len(),
            });
        }
        if frequencies.len() < MIN_TRACE_POINTS {
            return Err(TraceError::TooShort(frequencies.len()));
        }
        for (i, (f, z)) in frequencies.iter().zip(&values).enumerate() {
            if !f.is_finite() || !z.re.is_finite() || !z.im.is_finite() {
                return Err(TraceError::NonFinite { index: i });
            }
        }
        if let Some(i) = frequencies.windows(2).position(|w| w[1] <= w[0]) {
            return Err(TraceError::Unordered { index: i + 1 });
        }
        Ok(Self {
            frequencies,
            values,
            label: label.into(),
            metadata: TraceMetadata::default(),
        })
    }

    pub fn with_metadata(mut self, metadata: TraceMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn metadata(&self) -> &TraceMetadata {
        &self.metadata
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        self.frequencies.iter().copied().zip(self.values.iter().copied())
    }

    /// Applies `f` to every sample, keeping frequencies and metadata.
    pub fn map_values(&self, f: impl Fn(f64, Complex64) -> Complex64) -> Self {
        let values = self.iter().map(|(freq, z)| f(freq, z)).collect();
        Self {
            frequencies: self.frequencies.clone(),
            values,
            label: self.label.clone(),
            metadata: self.metadata.clone(),
        }
    }

    /// Returns a copy with every frequency offset by `delta_hz`.
    pub fn shifted(&self, delta_hz: f64) -> Result<Self, TraceError> {
        let freqs = self.frequencies.iter().map(|f| f + delta_hz).collect();
        Ok(Self::new(freqs, self.values.clone(), self.label.clone())?
            .with_metadata(self.metadata.clone()))
    }
}
