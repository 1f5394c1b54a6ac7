//! CSV and JSON files for occupancy maps, differential data, fit results and
//! rate tables. Floats are written with 17 significant digits so every value
//! reads back bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{OccupancyMap, PulseSchedule};
use crate::error::DataError;
use crate::inference::{FitResult, LEVER_ARM};
use crate::qubit::energy_gap;
use crate::units::{per_ns_to_hz, volts_to_mev};

pub const OFFSET_MEV: &str = "offset_meV";
pub const OFFSET_V: &str = "offset_V";
pub const FREQ_HZ: &str = "freq_Hz";
pub const SIGMA: &str = "sigma";

/// What the value column of a map file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    /// Left-well occupancy n̄_L.
    Occupancy,
    /// dn̄/dε̄ in 1/meV.
    Differential,
    /// Right-well occupancy 1 − n̄_L.
    RightOccupancy,
}

impl MapKind {
    pub fn column(self) -> &'static str {
        match self {
            MapKind::Occupancy => "n_left",
            MapKind::Differential => "dn_deps",
            MapKind::RightOccupancy => "n_right",
        }
    }

    fn from_column(name: &str) -> Option<Self> {
        [MapKind::Occupancy, MapKind::Differential, MapKind::RightOccupancy]
            .into_iter()
            .find(|k| k.column() == name)
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one row per grid point, frequency-major, with columns
/// offset_meV, freq_Hz, the value column and sigma (empty when absent).
pub fn write_map_csv<W: Write>(map: &OccupancyMap, kind: MapKind, out: W) -> Result<(), DataError> {
    map.validate_shape()
        .map_err(|e| DataError::format("map", e.to_string()))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([OFFSET_MEV, FREQ_HZ, kind.column(), SIGMA])?;
    let no = map.offsets.len();
    for (fi, f) in map.freqs.iter().enumerate() {
        for (oi, o) in map.offsets.iter().enumerate() {
            let k = fi * no + oi;
            let s = map.sigma.as_ref().map(|s| format_float(s[k])).unwrap_or_default();
            w.write_record([format_float(*o), format_float(*f), format_float(map.values[k]), s])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A map read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFile {
    pub map: OccupancyMap,
    pub kind: MapKind,
    /// eV/V applied to an offset_V column, if the file had one.
    pub lever_arm: Option<f64>,
}

/// One parsed data row with the line it came from.
#[derive(Debug, Clone, Copy)]
pub struct MapRecord {
    pub offset: f64,
    pub freq: f64,
    pub value: f64,
    pub sigma: Option<f64>,
    pub line: u64,
}

/// Reads a map CSV in any row order. The offset column is either
/// offset_meV or offset_V; volts are converted with [`LEVER_ARM`] here and
/// nowhere else. `context` (usually the file name) prefixes every error.
pub fn read_map_csv<R: Read>(input: R, context: &str) -> Result<MapFile, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::format(context, e.to_string()))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (offset_col, lever_arm) = match (find(OFFSET_MEV), find(OFFSET_V)) {
        (Some(c), None) => (c, None),
        (None, Some(c)) => (c, Some(LEVER_ARM)),
        (Some(_), Some(_)) => {
            return Err(DataError::format(
                context,
                "both offset_meV and offset_V columns present",
            ))
        }
        (None, None) => return Err(DataError::format(context, "missing offset_meV or offset_V column")),
    };
    let freq_col = find(FREQ_HZ).ok_or_else(|| DataError::format(context, "missing freq_Hz column"))?;
    let (value_col, kind) = headers
        .iter()
        .enumerate()
        .find_map(|(i, h)| MapKind::from_column(h).map(|k| (i, k)))
        .ok_or_else(|| DataError::format(context, "missing n_left or dn_deps column"))?;
    let sigma_col = find(SIGMA);

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| DataError::format(context, e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize, name: &str| -> Result<&str, DataError> {
            row.get(i)
                .ok_or_else(|| DataError::format(format!("{context} line {line}"), format!("missing {name}")))
        };
        let num = |i: usize, name: &str| -> Result<f64, DataError> {
            let s = cell(i, name)?;
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                DataError::format(
                    format!("{context} line {line}"),
                    format!("{name} {s:?} is not a finite number"),
                )
            })
        };
        let sigma = match sigma_col {
            Some(c) if !cell(c, SIGMA)?.is_empty() => Some(num(c, SIGMA)?),
            _ => None,
        };
        records.push(MapRecord {
            offset: match lever_arm {
                Some(l) => volts_to_mev(num(offset_col, OFFSET_V)?, l),
                None => num(offset_col, OFFSET_MEV)?,
            },
            freq: num(freq_col, FREQ_HZ)?,
            value: num(value_col, kind.column())?,
            sigma,
            line,
        });
    }
    Ok(MapFile {
        map: map_from_records(records, context)?,
        kind,
        lever_arm,
    })
}

/// Assembles rows into a frequency-major map. Every frequency must carry the
/// same offsets exactly once; sigma must be given on all rows or none.
pub fn map_from_records(mut records: Vec<MapRecord>, context: &str) -> Result<OccupancyMap, DataError> {
    if records.is_empty() {
        return Err(DataError::format(context, "no data rows"));
    }
    records.sort_by(|a, b| a.freq.total_cmp(&b.freq).then(a.offset.total_cmp(&b.offset)));
    let mut freqs: Vec<f64> = records.iter().map(|r| r.freq).collect();
    freqs.dedup();
    let offsets: Vec<f64> = records
        .iter()
        .take_while(|r| r.freq == freqs[0])
        .map(|r| r.offset)
        .collect();
    let mismatch = |line: u64, detail: String| DataError::GridMismatch {
        context: format!("{context} line {line}"),
        detail,
    };
    for w in records.windows(2) {
        if w[0].freq == w[1].freq && w[0].offset == w[1].offset {
            return Err(mismatch(
                w[1].line,
                format!("duplicate point ({} meV, {} Hz)", w[1].offset, w[1].freq),
            ));
        }
    }
    for trace in records.chunk_by(|a, b| a.freq == b.freq) {
        if trace.len() != offsets.len() || trace.iter().zip(&offsets).any(|(r, o)| r.offset != *o) {
            let line = trace.iter().map(|r| r.line).max().unwrap_or(0);
            return Err(mismatch(
                line,
                format!(
                    "trace at {} Hz has {} offsets that differ from the {} at {} Hz",
                    trace[0].freq,
                    trace.len(),
                    offsets.len(),
                    freqs[0]
                ),
            ));
        }
    }
    let with_sigma = records.iter().filter(|r| r.sigma.is_some()).count();
    if with_sigma != 0 && with_sigma != records.len() {
        let line = records.iter().find(|r| r.sigma.is_none()).map_or(0, |r| r.line);
        return Err(DataError::format(
            format!("{context} line {line}"),
            "sigma missing on some rows but not others",
        ));
    }
    let values = records.iter().map(|r| r.value).collect();
    let sigma = (with_sigma > 0).then(|| records.iter().map(|r| r.sigma.unwrap_or(0.0)).collect());
    OccupancyMap::new(offsets, freqs, values, sigma).map_err(|e| DataError::format(context, e.to_string()))
}

/// JSON form of a map with the schedule and free-form model metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEnvelope {
    pub kind: MapKind,
    pub schedule: PulseSchedule,
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub map: OccupancyMap,
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<(), DataError> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<T, DataError> {
    Ok(serde_json::from_reader(input)?)
}

pub const RATE_COLUMNS: [&str; 7] = ["epsilon_meV", "gap_meV", "rate_Hz", "lo68", "hi68", "lo95", "hi95"];

/// Rate table at the knots: Γ_r in Hz with band edges, open edges left empty.
pub fn write_rate_csv<W: Write>(fit: &FitResult, delta: f64, out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RATE_COLUMNS)?;
    let edge = |v: Option<f64>| v.map(|r| format_float(per_ns_to_hz(r))).unwrap_or_default();
    for (i, &k) in fit.best_fit.knots().iter().enumerate() {
        let b68 = fit.confidence_68.as_ref().map(|b| b[i]);
        let b95 = fit.confidence_95.as_ref().map(|b| b[i]);
        w.write_record([
            format_float(k),
            format_float(energy_gap(k, delta)),
            format_float(per_ns_to_hz(fit.best_fit.eval(k))),
            edge(b68.and_then(|b| b.lower)),
            edge(b68.and_then(|b| b.upper)),
            edge(b95.and_then(|b| b.lower)),
            edge(b95.and_then(|b| b.upper)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
