//! File ingestion and export.
//!
//! Supported formats:
//! - S21 CSV with header `freq_hz,re,im` or `freq_hz,mag_db,phase_deg`,
//! - Touchstone 1.x two-port files (`.s2p`), S21 taken from the second pair,
//! - decay CSV with header `delay_s,signal`,
//! - LER CSV with header `length_m,f_hz`,
//! - T1 sample CSV with header `t1_s`.
//!
//! CSV files may carry `# applied_power_dbm = X` and `# attenuation_db = Y`
//! comment lines; Touchstone files carry the same keys after `!`.
//! Numbers are written with shortest round-trip formatting, so export
//! followed by ingest reproduces every value bit for bit.

use std::io::{Read, Write};

use num_complex::Complex64;
use qdev_core::{DecayTrace, Error as CoreError, Frequency, S21Trace};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Raw bytes of one input file (or stdin when the path is `-`).
#[derive(Debug, Clone)]
pub struct Input {
    pub path: String,
    pub bytes: Vec<u8>,
}

impl Input {
    pub fn read(path: &str, stdin: &mut dyn Read) -> Result<Self> {
        let io_err = |source| CliError::Io { path: path.to_string(), source };
        let bytes = if path == "-" {
            let mut buf = Vec::new();
            stdin.read_to_end(&mut buf).map_err(io_err)?;
            buf
        } else {
            std::fs::read(path).map_err(io_err)?
        };
        Ok(Input { path: path.to_string(), bytes })
    }

    pub fn from_bytes(path: &str, bytes: Vec<u8>) -> Self {
        Input { path: path.to_string(), bytes }
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }

    pub fn text(&self) -> Result<&str> {
        std::str::from_utf8(&self.bytes).map_err(|e| {
            let line = 1 + self.bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count();
            CliError::parse(&self.path, line as u64, "file is not valid UTF-8")
        })
    }
}

/// Calibration metadata carried alongside an S21 trace.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct Metadata {
    pub applied_power_dbm: Option<f64>,
    pub attenuation_db: Option<f64>,
}

impl Metadata {
    pub fn of(trace: &S21Trace) -> Self {
        Metadata { applied_power_dbm: trace.applied_power_dbm, attenuation_db: trace.line_attenuation_db }
    }
}

fn scan_metadata(comment: &str, path: &str, line: u64, meta: &mut Metadata) -> Result<()> {
    let Some((key, value)) = comment.trim().split_once(['=', ':']) else {
        return Ok(());
    };
    let key = key.trim();
    let slot = match key {
        "applied_power_dbm" => &mut meta.applied_power_dbm,
        "attenuation_db" => &mut meta.attenuation_db,
        _ => return Ok(()),
    };
    *slot = Some(parse_number(path, line, value.trim(), key)?);
    Ok(())
}

fn parse_number(path: &str, line: u64, token: &str, what: &str) -> Result<f64> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::parse(path, line, format!("{what}: cannot parse {token:?} as a finite number"))),
    }
}

fn csv_metadata(path: &str, text: &str) -> Result<Metadata> {
    let mut meta = Metadata::default();
    for (i, raw) in text.lines().enumerate() {
        if let Some(comment) = raw.trim_start().strip_prefix('#') {
            scan_metadata(comment, path, i as u64 + 1, &mut meta)?;
        }
    }
    Ok(meta)
}

struct Row {
    line: u64,
    values: Vec<f64>,
}

fn csv_error(path: &str, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    CliError::parse(path, line, e.to_string())
}

/// Reads a numeric CSV table whose header matches one of `layouts`; returns
/// the index of the matching layout and the rows.
fn read_table(path: &str, text: &str, layouts: &[&[&str]]) -> Result<(usize, Vec<Row>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(CliError::input(path, CoreError::InsufficientData("file has no header or data".into())));
    }
    let names: Vec<String> = headers.iter().map(str::to_ascii_lowercase).collect();
    let Some(layout) = layouts.iter().position(|l| l.iter().eq(names.iter())) else {
        let header_line = text
            .lines()
            .position(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map_or(1, |i| i as u64 + 1);
        let wanted: Vec<String> = layouts.iter().map(|l| l.join(",")).collect();
        return Err(CliError::parse(
            path,
            header_line,
            format!("unexpected header {:?}; expected {}", names.join(","), wanted.join(" or ")),
        ));
    };

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let values = rec
            .iter()
            .zip(&names)
            .map(|(tok, name)| parse_number(path, line, tok, name))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(Row { line, values });
    }
    Ok((layout, rows))
}

fn check_increasing(path: &str, rows: &[Row], col: usize, what: &str) -> Result<()> {
    for w in rows.windows(2) {
        let (prev, next) = (w[0].values[col], w[1].values[col]);
        if !(next > prev) {
            return Err(CliError::parse(
                path,
                w[1].line,
                format!("{what} {next} is not greater than the previous value {prev}"),
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum S21Format {
    Csv,
    Touchstone,
}

impl S21Format {
    /// `.s2p` files are Touchstone, everything else (including stdin) CSV.
    pub fn detect(path: &str, hint: Option<S21Format>) -> S21Format {
        hint.unwrap_or_else(|| {
            if path.to_ascii_lowercase().ends_with(".s2p") {
                S21Format::Touchstone
            } else {
                S21Format::Csv
            }
        })
    }
}

pub fn ingest_s21(input: &Input, hint: Option<S21Format>) -> Result<S21Trace> {
    let text = input.text()?;
    match S21Format::detect(&input.path, hint) {
        S21Format::Csv => parse_s21_csv(&input.path, text),
        S21Format::Touchstone => parse_touchstone(&input.path, text),
    }
}

fn from_db_deg(db: f64, deg: f64) -> Complex64 {
    Complex64::from_polar(10f64.powf(db / 20.0), deg.to_radians())
}

/// Raw S21 samples as read from a file, before trace validation.
#[derive(Debug, Clone, PartialEq)]
pub struct S21Points {
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
    pub metadata: Metadata,
}

impl S21Points {
    pub fn into_trace(self, path: &str) -> Result<S21Trace> {
        let meta = self.metadata;
        let trace = S21Trace::new(self.freqs, self.values).map_err(|e| CliError::input(path, e))?;
        Ok(trace.with_metadata(meta.applied_power_dbm, meta.attenuation_db))
    }
}

pub fn parse_s21_csv_points(path: &str, text: &str) -> Result<S21Points> {
    let (layout, rows) = read_table(path, text, &[&["freq_hz", "re", "im"], &["freq_hz", "mag_db", "phase_deg"]])?;
    check_increasing(path, &rows, 0, "freq_hz")?;
    let metadata = csv_metadata(path, text)?;
    let (freqs, values) = rows
        .iter()
        .map(|r| {
            let v = &r.values;
            let z = if layout == 0 { Complex64::new(v[1], v[2]) } else { from_db_deg(v[1], v[2]) };
            (v[0], z)
        })
        .unzip();
    Ok(S21Points { freqs, values, metadata })
}

pub fn parse_s21_csv(path: &str, text: &str) -> Result<S21Trace> {
    parse_s21_csv_points(path, text)?.into_trace(path)
}

fn write_metadata(w: &mut dyn Write, marker: &str, meta: Metadata) -> std::io::Result<()> {
    if let Some(p) = meta.applied_power_dbm {
        writeln!(w, "{marker} applied_power_dbm = {p:e}")?;
    }
    if let Some(a) = meta.attenuation_db {
        writeln!(w, "{marker} attenuation_db = {a:e}")?;
    }
    Ok(())
}

/// Writes `freq_hz,re,im` (or `freq_hz,mag_db,phase_deg` when `polar`).
pub fn write_s21_csv(trace: &S21Trace, w: &mut dyn Write, polar: bool) -> std::io::Result<()> {
    let points = S21Points {
        freqs: trace.freqs().to_vec(),
        values: trace.values().to_vec(),
        metadata: Metadata::of(trace),
    };
    write_s21_csv_points(&points, w, polar)
}

pub fn write_s21_csv_points(points: &S21Points, w: &mut dyn Write, polar: bool) -> std::io::Result<()> {
    write_metadata(w, "#", points.metadata)?;
    let samples = points.freqs.iter().zip(&points.values);
    if polar {
        writeln!(w, "freq_hz,mag_db,phase_deg")?;
        for (f, z) in samples {
            writeln!(w, "{f:e},{:e},{:e}", 20.0 * z.norm().log10(), z.arg().to_degrees())?;
        }
    } else {
        writeln!(w, "freq_hz,re,im")?;
        for (f, z) in samples {
            writeln!(w, "{f:e},{:e},{:e}", z.re, z.im)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TouchstoneFormat {
    Ri,
    Ma,
    Db,
}

/// Floor used when a zero magnitude must be written in dB.
const DB_FLOOR: f64 = -300.0;

impl TouchstoneFormat {
    fn keyword(self) -> &'static str {
        match self {
            TouchstoneFormat::Ri => "RI",
            TouchstoneFormat::Ma => "MA",
            TouchstoneFormat::Db => "DB",
        }
    }

    fn to_complex(self, x: f64, y: f64) -> Complex64 {
        match self {
            TouchstoneFormat::Ri => Complex64::new(x, y),
            TouchstoneFormat::Ma => Complex64::from_polar(x, y.to_radians()),
            TouchstoneFormat::Db => from_db_deg(x, y),
        }
    }

    fn from_complex(self, z: Complex64) -> (f64, f64) {
        match self {
            TouchstoneFormat::Ri => (z.re, z.im),
            TouchstoneFormat::Ma => (z.norm(), z.arg().to_degrees()),
            TouchstoneFormat::Db => {
                let db = if z.norm() > 0.0 { 20.0 * z.norm().log10() } else { DB_FLOOR };
                (db, z.arg().to_degrees())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TouchstoneOptions {
    freq_scale: f64,
    format: TouchstoneFormat,
}

impl Default for TouchstoneOptions {
    // GHz S MA R 50
    fn default() -> Self {
        TouchstoneOptions { freq_scale: 1e9, format: TouchstoneFormat::Ma }
    }
}

fn parse_option_line(path: &str, line: u64, s: &str) -> Result<TouchstoneOptions> {
    let mut opts = TouchstoneOptions::default();
    let mut toks = s.trim_start_matches('#').split_whitespace();
    while let Some(tok) = toks.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => opts.freq_scale = 1.0,
            "KHZ" => opts.freq_scale = 1e3,
            "MHZ" => opts.freq_scale = 1e6,
            "GHZ" => opts.freq_scale = 1e9,
            "S" => {}
            "Y" | "Z" | "H" | "G" => {
                return Err(CliError::parse(path, line, format!("{tok} parameters are not supported, only S")));
            }
            "RI" => opts.format = TouchstoneFormat::Ri,
            "MA" => opts.format = TouchstoneFormat::Ma,
            "DB" => opts.format = TouchstoneFormat::Db,
            "R" => {
                let z = toks.next().unwrap_or("");
                let z = parse_number(path, line, z, "reference impedance")?;
                if z <= 0.0 {
                    return Err(CliError::parse(path, line, "reference impedance must be positive"));
                }
            }
            _ => return Err(CliError::parse(path, line, format!("unknown option token {tok:?}"))),
        }
    }
    Ok(opts)
}

const VALUES_PER_ROW: usize = 9;

/// Touchstone 1.x two-port reader. Rows may wrap across lines.
pub fn parse_touchstone(path: &str, text: &str) -> Result<S21Trace> {
    let mut opts: Option<TouchstoneOptions> = None;
    let mut meta = Metadata::default();
    let mut pending: Vec<f64> = Vec::with_capacity(VALUES_PER_ROW);
    let mut rows: Vec<Row> = Vec::new();
    let mut row_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        let (data, comment) = match raw.split_once('!') {
            Some((d, c)) => (d, Some(c)),
            None => (raw, None),
        };
        if let Some(c) = comment {
            scan_metadata(c, path, line, &mut meta)?;
        }
        let data = data.trim();
        if data.is_empty() {
            continue;
        }
        if data.starts_with('#') {
            // Only the first option line counts.
            if opts.is_none() {
                opts = Some(parse_option_line(path, line, data)?);
            }
            continue;
        }
        if data.starts_with('[') {
            return Err(CliError::parse(path, line, "Touchstone 2.x keywords are not supported"));
        }
        if pending.is_empty() {
            row_line = line;
        }
        for tok in data.split_whitespace() {
            pending.push(parse_number(path, line, tok, "value")?);
        }
        if pending.len() >= VALUES_PER_ROW {
            if pending.len() > VALUES_PER_ROW {
                return Err(CliError::parse(
                    path,
                    row_line,
                    format!("expected {VALUES_PER_ROW} values per two-port row, found {}", pending.len()),
                ));
            }
            rows.push(Row { line: row_line, values: std::mem::take(&mut pending) });
        }
    }
    if !pending.is_empty() {
        return Err(CliError::parse(
            path,
            row_line,
            format!("incomplete two-port row ({} of {VALUES_PER_ROW} values)", pending.len()),
        ));
    }
    if rows.is_empty() {
        return Err(CliError::input(path, CoreError::InsufficientData("no data rows".into())));
    }
    check_increasing(path, &rows, 0, "frequency")?;

    let opts = opts.unwrap_or_default();
    let (freqs, values) = rows
        .iter()
        .map(|r| (r.values[0] * opts.freq_scale, opts.format.to_complex(r.values[3], r.values[4])))
        .unzip();
    let trace = S21Trace::new(freqs, values).map_err(|e| CliError::input(path, e))?;
    Ok(trace.with_metadata(meta.applied_power_dbm, meta.attenuation_db))
}

/// Writes a Touchstone 1.x file in Hz with S11 = S22 = 0 and S12 = S21.
pub fn write_touchstone(trace: &S21Trace, w: &mut dyn Write, format: TouchstoneFormat) -> std::io::Result<()> {
    writeln!(w, "! two-port S21 trace")?;
    write_metadata(w, "!", Metadata::of(trace))?;
    writeln!(w, "# Hz S {} R 50", format.keyword())?;
    let (z0, z1) = format.from_complex(Complex64::new(0.0, 0.0));
    for (f, z) in trace.points() {
        let (a, b) = format.from_complex(z);
        writeln!(w, "{f:e} {z0:e} {z1:e} {a:e} {b:e} {a:e} {b:e} {z0:e} {z1:e}")?;
    }
    Ok(())
}

pub fn ingest_decay(input: &Input) -> Result<DecayTrace> {
    parse_decay_csv(&input.path, input.text()?)
}

pub fn parse_decay_csv(path: &str, text: &str) -> Result<DecayTrace> {
    let (_, rows) = read_table(path, text, &[&["delay_s", "signal"]])?;
    check_increasing(path, &rows, 0, "delay_s")?;
    let (delays, signal) = rows.iter().map(|r| (r.values[0], r.values[1])).unzip();
    DecayTrace::new(delays, signal).map_err(|e| CliError::input(path, e))
}

pub fn write_decay_csv(trace: &DecayTrace, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "delay_s,signal")?;
    for (t, s) in trace.delays().iter().zip(trace.signal()) {
        writeln!(w, "{t:e},{s:e}")?;
    }
    Ok(())
}

pub fn parse_ler_csv(path: &str, text: &str) -> Result<Vec<(f64, Frequency)>> {
    let (_, rows) = read_table(path, text, &[&["length_m", "f_hz"]])?;
    if rows.is_empty() {
        return Err(CliError::input(path, CoreError::InsufficientData("no data rows".into())));
    }
    rows.iter()
        .map(|r| {
            let f = Frequency::new(r.values[1])
                .and_then(|f| f.require_positive("f_hz"))
                .map_err(|e| CliError::input(path, e))?;
            Ok((r.values[0], f))
        })
        .collect()
}

pub fn write_ler_csv(points: &[(f64, Frequency)], w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "length_m,f_hz")?;
    for (len, f) in points {
        writeln!(w, "{len:e},{:e}", f.as_hz())?;
    }
    Ok(())
}

pub fn parse_t1_samples(path: &str, text: &str) -> Result<Vec<f64>> {
    let (_, rows) = read_table(path, text, &[&["t1_s"]])?;
    Ok(rows.iter().map(|r| r.values[0]).collect())
}

pub fn write_t1_samples(samples: &[f64], w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "t1_s")?;
    for t in samples {
        writeln!(w, "{t:e}")?;
    }
    Ok(())
}
