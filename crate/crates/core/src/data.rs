//! Recording ingestion: the five-column CSV schema, dataset naming,
//! warm-up trimming and one-second windowing.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{SAMPLE_RATE, WINDOW_LEN};

/// Samples removed from the start of every recording before windowing.
pub const WARMUP_SAMPLES: usize = 50_000;

/// The exact column set of a recording CSV (any order on load).
pub const CSV_COLUMNS: [&str; 5] = [
    "V_in",
    "Measured_RPM",
    "Vibration_1",
    "Vibration_2",
    "Vibration_3",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unexpected column `{0}`")]
    UnexpectedColumn(String),
    #[error("non-numeric cell at data row {row}, column `{col}`")]
    NonNumericCell { row: usize, col: String },
    #[error("empty file: {0}")]
    EmptyFile(PathBuf),
    #[error("recording too short: {len} samples, need more than {min}")]
    TooShort { len: usize, min: usize },
    #[error("bad dataset id `{0}`: expected <digit 0-4><D|E>")]
    BadId(String),
    #[error("channel length mismatch: {0} vs {1}")]
    ChannelLengthMismatch(usize, usize),
    #[error("Measured_RPM contains a non-finite or negative value at sample {0}")]
    InvalidRpm(usize),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Intended use of a dataset: training material or held-out evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Development,
    Evaluation,
}

impl Role {
    pub fn letter(self) -> char {
        match self {
            Role::Development => 'D',
            Role::Evaluation => 'E',
        }
    }
}

/// Dataset identifier of the form `<strength><role>`, e.g. `0D` or `4E`.
///
/// Strength 0 means no unbalance, 4 the strongest unbalance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DatasetId {
    pub strength: u8,
    pub role: Role,
}

impl DatasetId {
    pub fn new(strength: u8, role: Role) -> Result<Self, DataError> {
        if strength > 4 {
            return Err(DataError::BadId(format!("{}{}", strength, role.letter())));
        }
        Ok(Self { strength, role })
    }

    /// Parse the two-character form, case-sensitive: `[0-4][DE]`.
    pub fn parse(s: &str) -> Result<Self, DataError> {
        let bytes = s.as_bytes();
        if bytes.len() != 2 {
            return Err(DataError::BadId(s.to_string()));
        }
        let strength = match bytes[0] {
            b @ b'0'..=b'4' => b - b'0',
            _ => return Err(DataError::BadId(s.to_string())),
        };
        let role = match bytes[1] {
            b'D' => Role::Development,
            b'E' => Role::Evaluation,
            _ => return Err(DataError::BadId(s.to_string())),
        };
        Ok(Self { strength, role })
    }

    /// Conventional file name, e.g. `3E.csv`.
    pub fn filename(&self) -> String {
        format!("{}.csv", self)
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.strength, self.role.letter())
    }
}

/// Where a recording's samples came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RecordingSource {
    RealFile(PathBuf),
    Synthetic { seed: u64 },
}

/// One of the three vibration channels of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Vib1,
    Vib2,
    Vib3,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Vib1, Channel::Vib2, Channel::Vib3];

    pub fn column_name(self) -> &'static str {
        match self {
            Channel::Vib1 => "Vibration_1",
            Channel::Vib2 => "Vibration_2",
            Channel::Vib3 => "Vibration_3",
        }
    }
}

/// A continuous multi-channel measurement at 4096 Hz.
///
/// All five channels have equal length; `measured_rpm` values are finite
/// and non-negative. Construct through [`Recording::new`] to keep those
/// invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub v_in: Vec<f64>,
    pub measured_rpm: Vec<f64>,
    pub vib1: Vec<f64>,
    pub vib2: Vec<f64>,
    pub vib3: Vec<f64>,
    pub sample_rate: u32,
    pub unbalance_id: u8,
    pub role: Role,
    pub source: RecordingSource,
}

impl Recording {
    pub fn new(
        v_in: Vec<f64>,
        measured_rpm: Vec<f64>,
        vib1: Vec<f64>,
        vib2: Vec<f64>,
        vib3: Vec<f64>,
        id: DatasetId,
        source: RecordingSource,
    ) -> Result<Self, DataError> {
        let n = v_in.len();
        for len in [measured_rpm.len(), vib1.len(), vib2.len(), vib3.len()] {
            if len != n {
                return Err(DataError::ChannelLengthMismatch(n, len));
            }
        }
        if let Some(i) = measured_rpm.iter().position(|r| !r.is_finite() || *r < 0.0) {
            return Err(DataError::InvalidRpm(i));
        }
        Ok(Self {
            v_in,
            measured_rpm,
            vib1,
            vib2,
            vib3,
            sample_rate: SAMPLE_RATE,
            unbalance_id: id.strength,
            role: id.role,
            source,
        })
    }

    /// Number of samples per channel.
    pub fn len(&self) -> usize {
        self.v_in.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_in.is_empty()
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        match c {
            Channel::Vib1 => &self.vib1,
            Channel::Vib2 => &self.vib2,
            Channel::Vib3 => &self.vib3,
        }
    }

    pub fn dataset_id(&self) -> DatasetId {
        DatasetId {
            strength: self.unbalance_id,
            role: self.role,
        }
    }
}

/// One second (4096 values) of one vibration channel plus its label.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub values: Vec<f64>,
    pub mean_rpm: f64,
    pub unbalance_id: u8,
    /// True iff an unbalance is present (`unbalance_id != 0`).
    pub label: bool,
    pub window_index: usize,
}

/// Load a recording from the five-column CSV schema.
///
/// The header must contain exactly `V_in`, `Measured_RPM`, `Vibration_1`,
/// `Vibration_2`, `Vibration_3`, in any order. Cells are parsed as `f64`;
/// `.` decimals and scientific notation are accepted, locale commas are not.
pub fn load_recording(path: &Path, id: DatasetId) -> Result<Recording, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));

    let headers = reader
        .headers()
        .map_err(|source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(DataError::EmptyFile(path.to_path_buf()));
    }

    // Map each schema column to its position in this file.
    let mut positions = [0usize; 5];
    for (slot, name) in CSV_COLUMNS.iter().enumerate() {
        positions[slot] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| DataError::MissingColumn((*name).to_string()))?;
    }
    for h in headers.iter() {
        if !CSV_COLUMNS.contains(&h) {
            return Err(DataError::UnexpectedColumn(h.to_string()));
        }
    }

    let mut cols: [Vec<f64>; 5] = Default::default();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                row += 1;
                for (slot, &pos) in positions.iter().enumerate() {
                    let cell = record.get(pos).ok_or_else(|| DataError::NonNumericCell {
                        row,
                        col: CSV_COLUMNS[slot].to_string(),
                    })?;
                    let value: f64 = cell.trim().parse().map_err(|_| DataError::NonNumericCell {
                        row,
                        col: CSV_COLUMNS[slot].to_string(),
                    })?;
                    cols[slot].push(value);
                }
            }
            Err(source) => {
                return Err(DataError::Csv {
                    path: path.to_path_buf(),
                    source,
                })
            }
        }
    }
    if row == 0 {
        return Err(DataError::EmptyFile(path.to_path_buf()));
    }

    let [v_in, measured_rpm, vib1, vib2, vib3] = cols;
    Recording::new(
        v_in,
        measured_rpm,
        vib1,
        vib2,
        vib3,
        id,
        RecordingSource::RealFile(path.to_path_buf()),
    )
}

/// Write a recording back to the five-column CSV schema.
///
/// Values use the shortest decimal form that round-trips `f64` exactly, so
/// `load_recording(write_recording_csv(r))` reproduces bit-identical channels.
pub fn write_recording_csv(r: &Recording, path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    writeln!(w, "{}", CSV_COLUMNS.join(",")).map_err(io_err)?;
    for i in 0..r.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.v_in[i], r.measured_rpm[i], r.vib1[i], r.vib2[i], r.vib3[i]
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Drop the first `n` samples of every channel (motor warm-up).
pub fn trim_warmup(r: &Recording, n: usize) -> Result<Recording, DataError> {
    if r.len() <= n {
        return Err(DataError::TooShort { len: r.len(), min: n });
    }
    Ok(Recording {
        v_in: r.v_in[n..].to_vec(),
        measured_rpm: r.measured_rpm[n..].to_vec(),
        vib1: r.vib1[n..].to_vec(),
        vib2: r.vib2[n..].to_vec(),
        vib3: r.vib3[n..].to_vec(),
        sample_rate: r.sample_rate,
        unbalance_id: r.unbalance_id,
        role: r.role,
        source: r.source.clone(),
    })
}

/// Half-open sample spans `[start, start+size)` of consecutive windows.
///
/// Yields `floor((len - size)/hop) + 1` spans (none if `len < size`); a
/// trailing partial window is discarded.
pub fn window_spans(len: usize, size: usize, hop: usize) -> impl Iterator<Item = usize> {
    assert!(size >= 1 && hop >= 1, "window size and hop must be >= 1");
    let count = if len >= size { (len - size) / hop + 1 } else { 0 };
    (0..count).map(move |i| i * hop)
}

/// Cut one vibration channel into labelled one-second windows.
///
/// Each window carries the arithmetic mean of `Measured_RPM` over its span.
pub fn window(r: &Recording, channel: Channel, size: usize, hop: usize) -> Vec<WindowSample> {
    let values = r.channel(channel);
    window_spans(r.len(), size, hop)
        .enumerate()
        .map(|(i, start)| {
            let span = start..start + size;
            let mean_rpm = mean(&r.measured_rpm[span.clone()]);
            WindowSample {
                values: values[span].to_vec(),
                mean_rpm,
                unbalance_id: r.unbalance_id,
                label: r.unbalance_id != 0,
                window_index: i,
            }
        })
        .collect()
}

/// Trim the warm-up and window one channel with the default (4096, 4096) grid.
pub fn prepare_windows(r: &Recording, channel: Channel) -> Result<Vec<WindowSample>, DataError> {
    let trimmed = trim_warmup(r, WARMUP_SAMPLES)?;
    Ok(window(&trimmed, channel, WINDOW_LEN, WINDOW_LEN))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}
