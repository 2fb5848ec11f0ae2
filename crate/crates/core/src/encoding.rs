//! The 64×32 two-hot matrix representation of a device.
//!
//! Column 0 holds the OS family (upper half) and build (lower half), column
//! 1 the version token (upper) over a fixed sentinel (lower), and columns
//! 2..32 the vocabulary ports in order: service in the upper half, CPE in the
//! lower half, both at row 0 of their half when the port is closed. Rows
//! 0..32 form the upper half and rows 32..64 the lower half.

use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::config::{
    version_token, DeviceConfig, ServiceEntry, Vocabulary, ABSENT_INDEX, HALF_ROWS, PORT_SLOTS,
};

pub const ROWS: usize = 2 * HALF_ROWS;
pub const COLS: usize = PORT_SLOTS + 2;
pub const CELLS: usize = ROWS * COLS;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("raw sample must hold {CELLS} finite values")]
    InvalidSample,
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// A valid configuration matrix. Stored as the hot row of each column half,
/// so every value of this type satisfies the two-ones-per-column rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConfigMatrix {
    upper: [u8; COLS],
    lower: [u8; COLS],
}

impl ConfigMatrix {
    /// The matrix with every column hot at row 0 of both halves.
    pub fn sentinel() -> Self {
        ConfigMatrix {
            upper: [0; COLS],
            lower: [0; COLS],
        }
    }

    /// Builds a matrix from per-column hot indices (each `< 32`).
    pub fn from_indices(upper: [u8; COLS], lower: [u8; COLS]) -> Result<Self, EncodingError> {
        if let Some(c) = (0..COLS).find(|&c| upper[c] as usize >= HALF_ROWS || lower[c] as usize >= HALF_ROWS) {
            return Err(EncodingError::InvalidMatrix(format!("column {c} index out of range")));
        }
        Ok(ConfigMatrix { upper, lower })
    }

    /// Validates row-major 0/1 cells (64 rows × 32 columns).
    pub fn from_cells(cells: &[u8]) -> Result<Self, EncodingError> {
        if cells.len() != CELLS {
            return Err(EncodingError::InvalidMatrix(format!(
                "expected {CELLS} cells, found {}",
                cells.len()
            )));
        }
        if let Some(v) = cells.iter().find(|&&v| v > 1) {
            return Err(EncodingError::InvalidMatrix(format!("non-binary cell value {v}")));
        }
        let mut upper = [0u8; COLS];
        let mut lower = [0u8; COLS];
        for c in 0..COLS {
            for (half, slot) in [(0, &mut upper[c]), (1, &mut lower[c])] {
                let hot: Vec<usize> = (0..HALF_ROWS)
                    .filter(|&r| cells[(half * HALF_ROWS + r) * COLS + c] == 1)
                    .collect();
                if hot.len() != 1 {
                    return Err(EncodingError::InvalidMatrix(format!(
                        "column {c} has {} ones in its {} half",
                        hot.len(),
                        if half == 0 { "upper" } else { "lower" }
                    )));
                }
                *slot = hot[0] as u8;
            }
        }
        Ok(ConfigMatrix { upper, lower })
    }

    pub fn to_cells(&self) -> Vec<u8> {
        let mut cells = vec![0u8; CELLS];
        for c in 0..COLS {
            cells[self.upper[c] as usize * COLS + c] = 1;
            cells[(HALF_ROWS + self.lower[c] as usize) * COLS + c] = 1;
        }
        cells
    }

    /// Row-major values with 0 → −1 and 1 → +1, appended to `out`.
    pub fn extend_signed(&self, out: &mut Vec<f64>) {
        out.extend(self.to_cells().into_iter().map(|v| if v == 1 { 1.0 } else { -1.0 }));
    }

    /// Hot row within the upper and lower half of a column.
    pub fn column(&self, c: usize) -> (u8, u8) {
        (self.upper[c], self.lower[c])
    }

    pub fn upper(&self) -> &[u8; COLS] {
        &self.upper
    }

    pub fn lower(&self) -> &[u8; COLS] {
        &self.lower
    }

    /// 2048-character '0'/'1' string, row-major.
    pub fn to_bit_string(&self) -> String {
        self.to_cells().into_iter().map(|v| if v == 1 { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self, EncodingError> {
        let cells = s
            .trim_end_matches(['\r', '\n'])
            .bytes()
            .map(|b| match b {
                b'0' => Ok(0),
                b'1' => Ok(1),
                other => Err(EncodingError::InvalidMatrix(format!(
                    "unexpected character {:?}",
                    other as char
                ))),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        ConfigMatrix::from_cells(&cells)
    }
}

impl fmt::Display for ConfigMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

/// Real-valued generator output, row-major 64×32.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample(Vec<f64>);

impl RawSample {
    pub fn new(cells: Vec<f64>) -> Result<Self, EncodingError> {
        if cells.len() != CELLS || cells.iter().any(|v| !v.is_finite()) {
            return Err(EncodingError::InvalidSample);
        }
        Ok(RawSample(cells))
    }

    pub fn cells(&self) -> &[f64] {
        &self.0
    }
}

pub fn encode(config: &DeviceConfig, vocab: &Vocabulary) -> ConfigMatrix {
    let mut upper = [ABSENT_INDEX; COLS];
    let mut lower = [ABSENT_INDEX; COLS];
    upper[0] = if config.os_family.is_empty() {
        ABSENT_INDEX
    } else {
        vocab.os_index.index_of(&config.os_family)
    };
    lower[0] = vocab.build_index.index_of_opt(config.os_build.as_deref());
    upper[1] = vocab.version_index.index_of_opt(version_token(config.os_build.as_deref()));
    for service in &config.services {
        if let Some(slot) = vocab.port_slot(service.port) {
            upper[slot + 2] = vocab.service_index.index_of(&service.module);
            lower[slot + 2] = vocab.cpe_index.index_of_opt(service.cpe.as_deref());
        }
    }
    ConfigMatrix { upper, lower }
}

/// Inverse of [`encode`]. Out-of-vocabulary symbols come back as
/// [`crate::config::OTHER_TOKEN`]; placeholder port columns, the lower half
/// of column 1, and CPEs of closed ports are ignored.
pub fn decode(matrix: &ConfigMatrix, vocab: &Vocabulary) -> DeviceConfig {
    let os_family = vocab.os_index.symbol(matrix.upper[0]).unwrap_or_default().to_owned();
    let os_build = vocab.build_index.symbol(matrix.lower[0]).map(str::to_owned);
    let services = (0..PORT_SLOTS)
        .filter(|&slot| vocab.is_active_slot(slot) && matrix.upper[slot + 2] != ABSENT_INDEX)
        .map(|slot| ServiceEntry {
            port: vocab.ports[slot],
            module: vocab
                .service_index
                .symbol(matrix.upper[slot + 2])
                .expect("non-sentinel index has a symbol")
                .to_owned(),
            cpe: vocab.cpe_index.symbol(matrix.lower[slot + 2]).map(str::to_owned),
        })
        .collect();
    let mut config = DeviceConfig::new(os_family, os_build.as_deref(), services)
        .expect("vocabulary ports are distinct");
    config.source_id = None;
    config
}

/// Validates raw 0/1 cells, then decodes them.
pub fn decode_cells(cells: &[u8], vocab: &Vocabulary) -> Result<DeviceConfig, EncodingError> {
    Ok(decode(&ConfigMatrix::from_cells(cells)?, vocab))
}

/// Per-half argmax of every column, lowest row winning ties.
pub fn discretize(sample: &RawSample) -> ConfigMatrix {
    discretize_cells(sample.cells())
}

pub(crate) fn discretize_cells(cells: &[f64]) -> ConfigMatrix {
    debug_assert_eq!(cells.len(), CELLS);
    let mut upper = [0u8; COLS];
    let mut lower = [0u8; COLS];
    for c in 0..COLS {
        for (half, slot) in [(0, &mut upper[c]), (1, &mut lower[c])] {
            let mut best = 0;
            let mut best_value = cells[(half * HALF_ROWS) * COLS + c];
            for r in 1..HALF_ROWS {
                let v = cells[(half * HALF_ROWS + r) * COLS + c];
                if v > best_value {
                    best = r;
                    best_value = v;
                }
            }
            *slot = best as u8;
        }
    }
    ConfigMatrix { upper, lower }
}

/// Writes one bit string per line.
pub fn write_matrices<W: Write>(mut writer: W, matrices: &[ConfigMatrix]) -> Result<(), EncodingError> {
    for m in matrices {
        writeln!(writer, "{m}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_matrices<R: BufRead>(reader: R) -> Result<Vec<ConfigMatrix>, EncodingError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(ConfigMatrix::from_bit_string(line.trim()).map_err(|e| match e {
            EncodingError::InvalidMatrix(msg) => EncodingError::InvalidMatrix(format!("line {}: {msg}", i + 1)),
            other => other,
        })?);
    }
    Ok(out)
}
