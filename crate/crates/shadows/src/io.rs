//! Batch files.
//!
//! Binary layout, all integers little-endian:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `KSTB`                  |
//! | 4      | 2    | format version (1)            |
//! | 6      | 1    | N                             |
//! | 7      | 1    | ensemble (0 Clifford, 1 Haar) |
//! | 8      | 8    | master seed                   |
//! | 16     | 8    | M                             |
//! | 24     | …    | M records                     |
//!
//! A record is N `u32` unitary ids (qubit 0 first) followed by a `u16` whose
//! bit N−1−j is the outcome of qubit j. The JSON sidecar repeats the header and
//! may carry the state description.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use kst_core::{Error, Result, StateDescription};
use serde::{Deserialize, Serialize};

use crate::batch::ShadowBatch;
use crate::ensemble::Ensemble;
use crate::snapshot::Snapshot;

pub const MAGIC: [u8; 4] = *b"KSTB";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMeta {
    pub format_version: u16,
    pub n_qubits: usize,
    pub ensemble: Ensemble,
    pub master_seed: u64,
    pub snapshots: usize,
    pub record_bytes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateDescription>,
}

impl BatchMeta {
    pub fn of(batch: &ShadowBatch, state: Option<StateDescription>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            n_qubits: batch.n_qubits(),
            ensemble: batch.ensemble(),
            master_seed: batch.master_seed(),
            snapshots: batch.len(),
            record_bytes: 4 * batch.n_qubits() + 2,
            state,
        }
    }
}

pub fn write_batch<W: Write>(mut w: W, batch: &ShadowBatch) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[batch.n_qubits() as u8, batch.ensemble().code()])?;
    w.write_all(&batch.master_seed().to_le_bytes())?;
    w.write_all(&(batch.len() as u64).to_le_bytes())?;
    for i in 0..batch.len() {
        for id in batch.unitary_ids(i) {
            w.write_all(&id.to_le_bytes())?;
        }
        w.write_all(&batch.outcome_bits(i).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_batch<R: Read>(mut r: R) -> Result<ShadowBatch> {
    let mut header = [0u8; 24];
    r.read_exact(&mut header)?;
    if header[..4] != MAGIC {
        return Err(Error::Format("not a shadow batch file".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported batch format version {version}")));
    }
    let n = header[6] as usize;
    let ensemble =
        Ensemble::from_code(header[7]).ok_or_else(|| Error::Format(format!("unknown ensemble code {}", header[7])))?;
    let seed = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
    let m = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes")) as usize;
    let mut record = vec![0u8; 4 * n + 2];
    let mut snaps = Vec::with_capacity(m);
    for _ in 0..m {
        r.read_exact(&mut record)?;
        let ids = record[..4 * n]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let bits = u16::from_le_bytes([record[4 * n], record[4 * n + 1]]);
        snaps.push(Snapshot::new(ids, bits, ensemble)?);
    }
    ShadowBatch::from_snapshots(n, ensemble, seed, &snaps)
}

/// Sidecar path: `<path>.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the binary batch and its JSON sidecar.
pub fn save_batch(path: &Path, batch: &ShadowBatch, state: Option<StateDescription>) -> Result<()> {
    write_batch(BufWriter::new(File::create(path)?), batch)?;
    let meta = BatchMeta::of(batch, state);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Reads a batch and checks it against its sidecar when one exists.
pub fn load_batch(path: &Path) -> Result<(ShadowBatch, Option<BatchMeta>)> {
    let batch = read_batch(BufReader::new(File::open(path)?))?;
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok((batch, None));
    }
    let meta: BatchMeta =
        serde_json::from_str(&std::fs::read_to_string(side)?).map_err(|e| Error::Format(e.to_string()))?;
    if meta.n_qubits != batch.n_qubits() || meta.snapshots != batch.len() || meta.master_seed != batch.master_seed() {
        return Err(Error::Format("sidecar does not match batch header".into()));
    }
    Ok((batch, Some(meta)))
}
