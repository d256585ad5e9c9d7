use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{SweepMeta, SweepResult, FORMAT_VERSION};
use crate::error::{Error, Result};

const META: &str = "meta.json";
const GRID: &str = "grid.csv";
const DONE: &str = "done.bits";
const CONVERGED: &str = "converged.bits";
const NOTES: &str = "notes.json";

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(path: &Path, bytes: &[u8], n: usize) -> Result<Vec<bool>> {
    if bytes.len() != n.div_ceil(8) {
        return Err(Error::format(
            path,
            format!(
                "expected {} bytes for {n} cells, found {}",
                n.div_ceil(8),
                bytes.len()
            ),
        ));
    }
    let bits: Vec<bool> = (0..bytes.len() * 8)
        .map(|i| bytes[i / 8] >> (i % 8) & 1 == 1)
        .collect();
    if bits[n..].iter().any(|&b| b) {
        return Err(Error::format(path, "padding bits are set"));
    }
    Ok(bits[..n].to_vec())
}

fn grid_csv(result: &SweepResult) -> String {
    let grid = result.grid();
    let mut out = String::new();
    for att in 0..grid.att.count {
        let row: Vec<String> = (0..grid.fc.count)
            .map(|fc| match result.mu(att, fc) {
                // 17 significant digits round-trip any f64.
                Some(mu) => format!("{mu:.16e}"),
                None => "nan".to_string(),
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Writes via a temporary sibling so an interrupted write never leaves a
/// half-written file behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Saves a sweep as a directory: `meta.json`, `grid.csv`, `done.bits`,
/// `converged.bits`, plus `notes.json` when some cells failed.
pub fn save_result(result: &SweepResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut meta = serde_json::to_string_pretty(&result.meta)
        .map_err(|e| Error::format(dir.join(META), e.to_string()))?;
    meta.push('\n');
    write_atomic(&dir.join(META), meta.as_bytes())?;
    write_atomic(&dir.join(GRID), grid_csv(result).as_bytes())?;
    write_atomic(&dir.join(DONE), &pack_bits(result.done_values()))?;
    write_atomic(&dir.join(CONVERGED), &pack_bits(result.converged_values()))?;
    let notes_path = dir.join(NOTES);
    if result.notes().is_empty() {
        if notes_path.exists() {
            fs::remove_file(&notes_path).map_err(|e| Error::io(&notes_path, e))?;
        }
    } else {
        let mut notes = serde_json::to_string_pretty(result.notes())
            .map_err(|e| Error::format(&notes_path, e.to_string()))?;
        notes.push('\n');
        write_atomic(&notes_path, notes.as_bytes())?;
    }
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_optional(path: &Path) -> Result<Option<Vec<u8>>> {
    match fs::read(path) {
        Ok(bytes) => Ok(Some(bytes)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn load_meta(path: &Path) -> Result<SweepMeta> {
    let text = String::from_utf8(read(path)?).map_err(|e| Error::format(path, e.to_string()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    match value.get("version").and_then(|v| v.as_str()) {
        Some(FORMAT_VERSION) => {}
        other => {
            return Err(Error::format(
                path,
                format!("unsupported version {other:?} (expected {FORMAT_VERSION:?})"),
            ))
        }
    }
    let meta: SweepMeta =
        serde_json::from_value(value).map_err(|e| Error::format(path, e.to_string()))?;
    meta.validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(meta)
}

fn parse_grid(path: &Path, bytes: Vec<u8>, meta: &SweepMeta) -> Result<Vec<f64>> {
    let (rows, cols) = (meta.grid.att.count, meta.grid.fc.count);
    let expected = rows * cols;
    let text = String::from_utf8(bytes).map_err(|e| Error::format(path, e.to_string()))?;
    let lines: Vec<&str> = text.lines().collect();
    let fields: usize = lines
        .iter()
        .map(|l| l.split(',').filter(|f| !f.is_empty()).count())
        .sum();
    // A cell cut off by truncation is not a complete cell.
    let complete = if text.is_empty() || text.ends_with('\n') {
        fields
    } else {
        fields.saturating_sub(1)
    };
    if complete != expected || lines.len() != rows {
        return Err(Error::format(
            path,
            format!("expected {expected} cells ({rows}x{cols}), found {complete}"),
        ));
    }
    let mut mu = Vec::with_capacity(expected);
    for (r, line) in lines.iter().enumerate() {
        let row: Vec<&str> = line.split(',').collect();
        if row.len() != cols {
            return Err(Error::format(
                path,
                format!("row {r} has {} cells, expected {cols}", row.len()),
            ));
        }
        for (c, field) in row.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::format(
                    path,
                    format!("row {r} column {c}: invalid number {field:?}"),
                )
            })?;
            mu.push(v);
        }
    }
    Ok(mu)
}

/// Loads a sweep directory. A directory holding only `meta.json` loads as a
/// sweep with every cell missing, ready to be continued.
pub fn load_result(dir: &Path) -> Result<SweepResult> {
    let meta = load_meta(&dir.join(META))?;
    let n = meta.grid.cells();
    let grid_path = dir.join(GRID);
    let done_path = dir.join(DONE);
    let conv_path = dir.join(CONVERGED);
    let notes_path = dir.join(NOTES);

    let grid_bytes = read_optional(&grid_path)?;
    let done_bytes = read_optional(&done_path)?;
    let conv_bytes = read_optional(&conv_path)?;
    let notes_bytes = read_optional(&notes_path)?;
    let mut result = SweepResult::empty(meta);
    let (grid_bytes, done_bytes, conv_bytes) = match (grid_bytes, done_bytes, conv_bytes) {
        (None, None, None) if notes_bytes.is_none() => return Ok(result),
        (Some(g), Some(d), Some(c)) => (g, d, c),
        _ => {
            return Err(Error::format(
                dir,
                format!("{GRID}, {DONE} and {CONVERGED} must be present together"),
            ))
        }
    };

    let mu = parse_grid(&grid_path, grid_bytes, &result.meta)?;
    let done = unpack_bits(&done_path, &done_bytes, n)?;
    let converged = unpack_bits(&conv_path, &conv_bytes, n)?;
    let mut notes: BTreeMap<usize, String> = match notes_bytes {
        Some(bytes) => {
            serde_json::from_slice(&bytes).map_err(|e| Error::format(&notes_path, e.to_string()))?
        }
        None => BTreeMap::new(),
    };

    for i in 0..n {
        let (att, fc) = result.meta.grid.coords(i);
        if done[i] {
            result
                .record(
                    i,
                    super::CellOutcome {
                        mu: mu[i],
                        converged: converged[i],
                        note: notes.remove(&i),
                    },
                )
                .map_err(|e| Error::format(&grid_path, format!("cell ({att},{fc}): {e}")))?;
        } else if !mu[i].is_nan() || converged[i] {
            return Err(Error::format(
                &grid_path,
                format!("cell ({att},{fc}) is not marked done but has data"),
            ));
        }
    }
    if let Some(&i) = notes.keys().next() {
        return Err(Error::format(
            &notes_path,
            format!("note for cell {i}, which is missing or out of range"),
        ));
    }
    Ok(result)
}
