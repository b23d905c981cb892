//! Two-channel ECG/PPG recordings.
//!
//! CSV: header `t,ecg,ppg`, one sample per line, `t` in seconds from the
//! start. The sample rate is `(n − 1) / (t_last − t_first)`.
//!
//! SQPW binary, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SQPW"
//! 4       2     version (u16) = 1
//! 6       8     sample_rate (f64, Hz)
//! 14      8     length n (u64, samples per channel)
//! 22      16·n  (ecg f64, ppg f64) pairs
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use seqpress_core::features::WaveformRecord;

use crate::error::{AppError, Result};

pub const SQPW_MAGIC: &[u8; 4] = b"SQPW";
pub const SQPW_VERSION: u16 = 1;
const SQPW_HEADER: usize = 22;

pub fn encode_sqpw(rec: &WaveformRecord) -> Vec<u8> {
    let n = rec.ecg.len().min(rec.ppg.len());
    let mut out = Vec::with_capacity(SQPW_HEADER + 16 * n);
    out.extend_from_slice(SQPW_MAGIC);
    out.extend_from_slice(&SQPW_VERSION.to_le_bytes());
    out.extend_from_slice(&rec.sample_rate.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for i in 0..n {
        out.extend_from_slice(&rec.ecg[i].to_le_bytes());
        out.extend_from_slice(&rec.ppg[i].to_le_bytes());
    }
    out
}

/// Parses SQPW bytes. Subject and session labels are left empty.
pub fn decode_sqpw(bytes: &[u8]) -> std::result::Result<WaveformRecord, String> {
    if bytes.len() < SQPW_HEADER || &bytes[..4] != SQPW_MAGIC {
        return Err("not an SQPW file".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SQPW_VERSION {
        return Err(format!("unsupported SQPW version {version}"));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let sample_rate = f64_at(6);
    let n = u64::from_le_bytes(bytes[14..22].try_into().expect("8 bytes")) as usize;
    let expected = n.checked_mul(16).and_then(|b| b.checked_add(SQPW_HEADER));
    if expected != Some(bytes.len()) {
        return Err(format!("length field says {n} samples but the payload has {} bytes", bytes.len() - SQPW_HEADER));
    }
    let mut ecg = Vec::with_capacity(n);
    let mut ppg = Vec::with_capacity(n);
    for i in 0..n {
        ecg.push(f64_at(SQPW_HEADER + 16 * i));
        ppg.push(f64_at(SQPW_HEADER + 16 * i + 8));
    }
    Ok(WaveformRecord { ecg, ppg, sample_rate, subject_id: String::new(), session_label: String::new() })
}

pub fn write_sqpw(path: &Path, rec: &WaveformRecord) -> Result<()> {
    fs::write(path, encode_sqpw(rec)).map_err(|e| AppError::io(path, e))
}

pub fn write_waveform_csv(path: &Path, rec: &WaveformRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["t", "ecg", "ppg"]).map_err(|e| csv_err(path, e))?;
    for (i, (e, p)) in rec.ecg.iter().zip(&rec.ppg).enumerate() {
        let t = i as f64 / rec.sample_rate;
        w.write_record([t.to_string(), e.to_string(), p.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_waveform_csv(path: &Path) -> Result<WaveformRecord> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["t", "ecg", "ppg"] {
        return Err(AppError::format(path, "expected header t,ecg,ppg"));
    }
    let (mut t, mut ecg, mut ppg) = (Vec::new(), Vec::new(), Vec::new());
    for (line, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let v = parse_row::<3>(&row).map_err(|m| AppError::format(path, format!("row {}: {m}", line + 2)))?;
        t.push(v[0]);
        ecg.push(v[1]);
        ppg.push(v[2]);
    }
    if t.len() < 2 || !(t[t.len() - 1] > t[0]) {
        return Err(AppError::format(path, "need at least two samples with increasing t"));
    }
    let sample_rate = (t.len() - 1) as f64 / (t[t.len() - 1] - t[0]);
    Ok(WaveformRecord { ecg, ppg, sample_rate, subject_id: stem(path), session_label: String::new() })
}

/// Reads CSV or SQPW, choosing by the file's first bytes.
pub fn read_waveform(path: &Path) -> Result<WaveformRecord> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    if bytes.starts_with(SQPW_MAGIC) {
        let mut rec = decode_sqpw(&bytes).map_err(|m| AppError::format(path, m))?;
        rec.subject_id = stem(path);
        Ok(rec)
    } else {
        read_waveform_csv(path)
    }
}

pub(crate) fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> AppError {
    AppError::format(path, e.to_string())
}

pub(crate) fn parse_row<const N: usize>(row: &csv::StringRecord) -> std::result::Result<[f64; N], String> {
    if row.len() != N {
        return Err(format!("expected {N} fields, found {}", row.len()));
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(row.iter()) {
        *o = f.trim().parse::<f64>().map_err(|_| format!("cannot parse {f:?} as a number"))?;
    }
    Ok(out)
}

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| AppError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| AppError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}
