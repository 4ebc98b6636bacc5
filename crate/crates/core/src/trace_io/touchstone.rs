use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use super::{ComplexTrace, TraceError, TraceMetadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FrequencyUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FrequencyUnit {
    /// Decimal exponent of the unit relative to Hz.
    pub fn exponent(self) -> i32 {
        match self {
            Self::Hz => 0,
            Self::KHz => 3,
            Self::MHz => 6,
            Self::GHz => 9,
        }
    }

    pub fn scale(self) -> f64 {
        10f64.powi(self.exponent())
    }

    fn parse_token(token: &str) -> Option<Self> {
        match token.to_ascii_uppercase().as_str() {
            "HZ" => Some(Self::Hz),
            "KHZ" => Some(Self::KHz),
            "MHZ" => Some(Self::MHz),
            "GHZ" => Some(Self::GHz),
            _ => None,
        }
    }
}

impl fmt::Display for FrequencyUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Hz => "Hz",
            Self::KHz => "kHz",
            Self::MHz => "MHz",
            Self::GHz => "GHz",
        })
    }
}

/// Encoding of each complex pair in a data row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DataFormat {
    /// Real and imaginary parts.
    RI,
    /// Linear magnitude and angle in degrees.
    MA,
    /// Magnitude in dB (20·log10) and angle in degrees.
    DB,
}

impl DataFormat {
    fn parse_token(token: &str) -> Option<Self> {
        match token.to_ascii_uppercase().as_str() {
            "RI" => Some(Self::RI),
            "MA" => Some(Self::MA),
            "DB" => Some(Self::DB),
            _ => None,
        }
    }

    /// Converts one encoded pair to a rectangular complex number.
    pub fn decode(self, a: f64, b: f64) -> Complex64 {
        match self {
            Self::RI => Complex64::new(a, b),
            Self::MA => Complex64::from_polar(a, b.to_radians()),
            Self::DB => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    /// Inverse of [`DataFormat::decode`].
    pub fn encode(self, z: Complex64) -> (f64, f64) {
        match self {
            Self::RI => (z.re, z.im),
            Self::MA => (z.norm(), z.arg().to_degrees()),
            Self::DB => (20.0 * z.norm().log10(), z.arg().to_degrees()),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RI => "RI",
            Self::MA => "MA",
            Self::DB => "DB",
        })
    }
}

/// Settings of the `#` option line. Only S-parameters are supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptionLine {
    pub unit: FrequencyUnit,
    pub format: DataFormat,
    pub reference_ohm: f64,
}

impl Default for OptionLine {
    fn default() -> Self {
        Self {
            unit: FrequencyUnit::GHz,
            format: DataFormat::MA,
            reference_ohm: 50.0,
        }
    }
}

impl OptionLine {
    fn parse(text: &str, line: usize) -> Result<Self, TraceError> {
        let err = |reason: String| TraceError::OptionLine { line, reason };
        let mut option = Self::default();
        let mut tokens = text.split_whitespace();
        while let Some(token) = tokens.next() {
            if let Some(unit) = FrequencyUnit::parse_token(token) {
                option.unit = unit;
            } else if let Some(format) = DataFormat::parse_token(token) {
                option.format = format;
            } else {
                match token.to_ascii_uppercase().as_str() {
                    "S" => {}
                    "Y" | "Z" | "H" | "G" => {
                        return Err(err(format!("parameter type `{token}` is not supported")))
                    }
                    "R" => {
                        let value = tokens
                            .next()
                            .ok_or_else(|| err("`R` without a resistance value".into()))?;
                        let ohm: f64 = value
                            .parse()
                            .map_err(|_| err(format!("bad reference resistance `{value}`")))?;
                        if !(ohm.is_finite() && ohm > 0.0) {
                            return Err(err(format!("reference resistance must be positive, got {ohm}")));
                        }
                        option.reference_ohm = ohm;
                    }
                    _ => return Err(err(format!("unrecognized token `{token}`"))),
                }
            }
        }
        Ok(option)
    }
}

/// One of the four entries of a two-port scattering matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SParameter {
    S11,
    S21,
    S12,
    S22,
}

impl SParameter {
    /// Matrix position (row, column), zero-based.
    pub fn index(self) -> (usize, usize) {
        match self {
            Self::S11 => (0, 0),
            Self::S21 => (1, 0),
            Self::S12 => (0, 1),
            Self::S22 => (1, 1),
        }
    }
}

impl FromStr for SParameter {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S11" => Ok(Self::S11),
            "S21" => Ok(Self::S21),
            "S12" => Ok(Self::S12),
            "S22" => Ok(Self::S22),
            _ => Err(TraceError::UnknownParameter(s.to_string())),
        }
    }
}

impl fmt::Display for SParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Two-port network data at a single frequency, values in rectangular form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkPoint {
    pub frequency_hz: f64,
    pub s: [[Complex64; 2]; 2],
}

impl NetworkPoint {
    pub fn get(&self, parameter: SParameter) -> Complex64 {
        let (r, c) = parameter.index();
        self.s[r][c]
    }
}

/// Parsed Touchstone v1 two-port file.
///
/// `option_line` records what the file declared; `points` are always in Hz
/// and rectangular form regardless of the declared unit and format.
#[derive(Debug, Clone, PartialEq)]
pub struct TouchstoneDocument {
    pub option_line: OptionLine,
    pub points: Vec<NetworkPoint>,
    pub comments: Vec<String>,
}

/// Parses a decimal literal and multiplies it by `10^shift` without an
/// intermediate rounding step, so that `7.2 GHz` and `7200000000 Hz` give the
/// same double.
fn parse_scaled(token: &str, shift: i32) -> Option<f64> {
    let (mantissa, exponent) = match token.find(['e', 'E']) {
        Some(pos) => (&token[..pos], token[pos + 1..].parse::<i32>().ok()?),
        None => (token, 0),
    };
    if mantissa.is_empty() || mantissa.parse::<f64>().is_err() {
        return None;
    }
    let value: f64 = format!("{mantissa}e{}", exponent.checked_add(shift)?).parse().ok()?;
    value.is_finite().then_some(value)
}

pub fn parse_touchstone(text: &str) -> Result<TouchstoneDocument, TraceError> {
    let mut option_line: Option<OptionLine> = None;
    let mut points: Vec<NetworkPoint> = Vec::new();
    let mut comments = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('!') {
            Some(pos) => {
                comments.push(raw[pos + 1..].to_string());
                &raw[..pos]
            }
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            let keyword = content.split(']').next().unwrap_or(content);
            return Err(TraceError::Version2Keyword {
                line,
                keyword: format!("{keyword}]"),
            });
        }
        if let Some(rest) = content.strip_prefix('#') {
            if !points.is_empty() {
                return Err(TraceError::OptionLine {
                    line,
                    reason: "option line must precede the network data".into(),
                });
            }
            // Only the first option line counts; later ones are ignored.
            if option_line.is_none() {
                option_line = Some(OptionLine::parse(rest, line)?);
            }
            continue;
        }

        let option = *option_line.get_or_insert_with(OptionLine::default);
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(TraceError::FieldCount {
                line,
                found: fields.len(),
            });
        }
        let number = |token: &str| -> Result<f64, TraceError> {
            token
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TraceError::Number {
                    line,
                    token: token.to_string(),
                })
        };
        let frequency_hz = parse_scaled(fields[0], option.unit.exponent()).ok_or_else(|| {
            TraceError::Number {
                line,
                token: fields[0].to_string(),
            }
        })?;
        if let Some(prev) = points.last() {
            if frequency_hz <= prev.frequency_hz {
                return Err(TraceError::NonMonotone { line, frequency_hz });
            }
        }
        let mut pairs = [Complex64::default(); 4];
        for (k, pair) in pairs.iter_mut().enumerate() {
            let a = number(fields[1 + 2 * k])?;
            let b = number(fields[2 + 2 * k])?;
            *pair = option.format.decode(a, b);
        }
        // Two-port rows are ordered N11 N21 N12 N22.
        points.push(NetworkPoint {
            frequency_hz,
            s: [[pairs[0], pairs[2]], [pairs[1], pairs[3]]],
        });
    }

    if points.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(TouchstoneDocument {
        option_line: option_line.unwrap_or_default(),
        points,
        comments,
    })
}

/// 17 significant digits with the decimal exponent moved by `shift`, the
/// inverse of [`parse_scaled`].
fn format_scaled(value: f64, shift: i32) -> String {
    let text = format!("{value:.16e}");
    let (mantissa, exponent) = text.split_once('e').expect("exponent form");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    format!("{mantissa}e{}", exponent + shift)
}

/// Serializes a document in RI format with frequencies in the declared unit.
pub fn write_touchstone(doc: &TouchstoneDocument) -> String {
    let mut out = String::new();
    for comment in &doc.comments {
        out.push('!');
        out.push_str(comment);
        out.push('\n');
    }
    let unit = doc.option_line.unit;
    out.push_str(&format!(
        "# {} S RI R {}\n",
        unit,
        doc.option_line.reference_ohm
    ));
    for point in &doc.points {
        out.push_str(&format_scaled(point.frequency_hz, -unit.exponent()));
        for parameter in [SParameter::S11, SParameter::S21, SParameter::S12, SParameter::S22] {
            let z = point.get(parameter);
            out.push_str(&format!(" {:.16e} {:.16e}", z.re, z.im));
        }
        out.push('\n');
    }
    out
}

/// Selects one matrix entry per frequency as a trace.
pub fn extract_trace(doc: &TouchstoneDocument, label: &str) -> Result<ComplexTrace, TraceError> {
    let parameter: SParameter = label.parse()?;
    let frequencies = doc.points.iter().map(|p| p.frequency_hz).collect();
    let values = doc.points.iter().map(|p| p.get(parameter)).collect();
    let metadata = TraceMetadata {
        source: None,
        option_line: Some(doc.option_line),
        comments: doc.comments.clone(),
    };
    Ok(ComplexTrace::new(frequencies, values, parameter.to_string())?.with_metadata(metadata))
}
