use num_complex::Complex64;

use super::{ComplexTrace, TraceError, TraceMetadata};

/// Header names of the columns that make up a CSV trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CsvColumns {
    Rectangular {
        frequency: String,
        real: String,
        imag: String,
    },
    Polar {
        frequency: String,
        magnitude_db: String,
        phase_deg: String,
    },
}

impl CsvColumns {
    pub fn rectangular(frequency: &str, real: &str, imag: &str) -> Self {
        Self::Rectangular {
            frequency: frequency.into(),
            real: real.into(),
            imag: imag.into(),
        }
    }

    pub fn polar(frequency: &str, magnitude_db: &str, phase_deg: &str) -> Self {
        Self::Polar {
            frequency: frequency.into(),
            magnitude_db: magnitude_db.into(),
            phase_deg: phase_deg.into(),
        }
    }

    fn names(&self) -> [&str; 3] {
        match self {
            Self::Rectangular { frequency, real, imag } => [frequency, real, imag],
            Self::Polar {
                frequency,
                magnitude_db,
                phase_deg,
            } => [frequency, magnitude_db, phase_deg],
        }
    }

    fn decode(&self, a: f64, b: f64) -> Complex64 {
        match self {
            Self::Rectangular { .. } => Complex64::new(a, b),
            Self::Polar { .. } => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }
}

/// Parses a CSV table with a header row into a trace. Frequencies are in Hz.
///
/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn parse_csv_trace(
    text: &str,
    columns: &CsvColumns,
    label: &str,
) -> Result<ComplexTrace, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| TraceError::Csv(e.to_string()))?
        .clone();
    let names = columns.names();
    let mut index = [0usize; 3];
    for (slot, name) in index.iter_mut().zip(names) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TraceError::MissingColumn(name.to_string()))?;
    }

    let mut frequencies = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| TraceError::Csv(e.to_string()))?;
        let cell = |k: usize| -> Result<f64, TraceError> {
            let raw = record.get(index[k]).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TraceError::Cell {
                    row,
                    column: names[k].to_string(),
                    value: raw.to_string(),
                })
        };
        let f = cell(0)?;
        let a = cell(1)?;
        let b = cell(2)?;
        frequencies.push(f);
        values.push(columns.decode(a, b));
    }
    let trace = ComplexTrace::new(frequencies, values, label)?;
    Ok(trace.with_metadata(TraceMetadata::default()))
}
