//! Snapshots, the time-series CSV, manifests, and the background writer.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bsq_core::evolution::{StepRecord, CSV_COLUMNS};
use bsq_core::grid::GridDescriptor;
use bsq_core::{Frame, Parity, ScalarField};

use crate::CliError;

pub const CSV_NAME: &str = "timeseries.csv";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub grid: GridDescriptor,
    pub frame: Frame,
    pub parity: Parity,
    pub s: f64,
    pub n_sigma: usize,
    pub n_beta: usize,
    pub dtype: String,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes `<stem>.bin` (little-endian f64, row-major) and `<stem>.json`.
/// Returns both paths.
pub fn write_snapshot(dir: &Path, stem: &str, f: &ScalarField, grid: GridDescriptor, s: f64) -> Result<(PathBuf, PathBuf), CliError> {
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    let mut bytes = Vec::with_capacity(f.data.len() * 8);
    for v in &f.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&bin, bytes).map_err(|e| io_err(&bin, e))?;
    let side = Sidecar {
        grid,
        frame: f.frame,
        parity: f.parity,
        s,
        n_sigma: f.n_sigma,
        n_beta: f.n_beta,
        dtype: "f64le".into(),
    };
    let text = serde_json::to_string_pretty(&side).map_err(|e| io_err(&json, e))?;
    std::fs::write(&json, text).map_err(|e| io_err(&json, e))?;
    Ok((bin, json))
}

/// Reads a snapshot given the path of either file of the pair.
pub fn read_snapshot(path: &Path) -> Result<(ScalarField, Sidecar), CliError> {
    let bin = path.with_extension("bin");
    let json = path.with_extension("json");
    let text = std::fs::read_to_string(&json).map_err(|e| io_err(&json, e))?;
    let side: Sidecar = serde_json::from_str(&text).map_err(|e| io_err(&json, e))?;
    let mut raw = Vec::new();
    File::open(&bin).and_then(|mut f| f.read_to_end(&mut raw)).map_err(|e| io_err(&bin, e))?;
    let n = side.n_sigma * side.n_beta;
    if raw.len() != n * 8 {
        return Err(io_err(&bin, format!("expected {} bytes, found {}", n * 8, raw.len())));
    }
    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let field = ScalarField { n_sigma: side.n_sigma, n_beta: side.n_beta, data, frame: side.frame, parity: side.parity };
    Ok((field, side))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub code_version: String,
    pub grid: GridDescriptor,
    pub seed: u64,
    pub s_start: f64,
    pub s_end: f64,
    pub steps: u64,
    pub snapshots_dropped: usize,
    pub files: Vec<FileEntry>,
}

/// Lists `names` (relative to `dir`) with sizes and checksums.
pub fn inventory(dir: &Path, names: &[String]) -> Result<Vec<FileEntry>, CliError> {
    names
        .iter()
        .map(|n| {
            let p = dir.join(n);
            let bytes = std::fs::metadata(&p).map_err(|e| io_err(&p, e))?.len();
            Ok(FileEntry { path: n.clone(), bytes, sha256: sha256_file(&p)? })
        })
        .collect()
}

pub fn write_manifest(dir: &Path, m: &RunManifest) -> Result<PathBuf, CliError> {
    let p = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(m).map_err(|e| io_err(&p, e))?;
    std::fs::write(&p, text).map_err(|e| io_err(&p, e))?;
    Ok(p)
}

/// Re-reads every listed file and compares checksums.
pub fn check_manifest(dir: &Path) -> Result<RunManifest, CliError> {
    let p = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| io_err(&p, e))?;
    for f in &m.files {
        let got = sha256_file(&dir.join(&f.path))?;
        if got != f.sha256 {
            return Err(CliError::Io(format!("checksum mismatch for {}", f.path)));
        }
    }
    Ok(m)
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Reads the rows of a run CSV.
pub fn read_csv(path: &Path) -> Result<Vec<StepRecord>, CliError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header: Vec<String> = rd.headers().map_err(|e| io_err(path, e))?.iter().map(String::from).collect();
    if header != CSV_COLUMNS {
        return Err(io_err(path, "unexpected CSV header"));
    }
    rd.deserialize().map(|r| r.map_err(|e| io_err(path, e))).collect()
}

enum Msg {
    Row(StepRecord),
    Snapshot { stem: String, field: ScalarField, s: f64 },
}

/// Disk writer on its own thread. Rows are never dropped; snapshots are
/// skipped while `capacity` of them are already waiting.
pub struct Writer {
    tx: Option<mpsc::Sender<Msg>>,
    pending: Arc<AtomicUsize>,
    capacity: usize,
    dropped: usize,
    handle: Option<JoinHandle<Result<Vec<String>, CliError>>>,
}

impl Writer {
    pub fn spawn(dir: &Path, grid: GridDescriptor, capacity: usize) -> Result<Writer, CliError> {
        let csv_path = dir.join(CSV_NAME);
        let file = File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
        let mut csv = csv::Writer::from_writer(BufWriter::new(file));
        csv.write_record(CSV_COLUMNS).map_err(|e| io_err(&csv_path, e))?;
        let (tx, rx) = mpsc::channel::<Msg>();
        let pending = Arc::new(AtomicUsize::new(0));
        let pend = pending.clone();
        let dir = dir.to_path_buf();
        let handle = std::thread::spawn(move || {
            let mut files = vec![CSV_NAME.to_string()];
            for msg in rx {
                match msg {
                    Msg::Row(r) => {
                        let vals: Vec<String> = r.values().iter().map(|v| format!("{v:e}")).collect();
                        csv.write_record(&vals).map_err(|e| io_err(&csv_path, e))?;
                    }
                    Msg::Snapshot { stem, field, s } => {
                        let res = write_snapshot(&dir, &stem, &field, grid.clone(), s);
                        pend.fetch_sub(1, Ordering::SeqCst);
                        res?;
                        files.push(format!("{stem}.bin"));
                        files.push(format!("{stem}.json"));
                    }
                }
            }
            csv.flush().map_err(|e| io_err(&csv_path, e))?;
            Ok(files)
        });
        Ok(Writer { tx: Some(tx), pending, capacity: capacity.max(1), dropped: 0, handle: Some(handle) })
    }

    fn send(&self, m: Msg) -> Result<(), CliError> {
        self.tx
            .as_ref()
            .expect("writer open")
            .send(m)
            .map_err(|_| CliError::Io("writer thread stopped".into()))
    }

    pub fn row(&self, r: StepRecord) -> Result<(), CliError> {
        self.send(Msg::Row(r))
    }

    /// Queues a snapshot unless the queue is full; returns whether it was queued.
    pub fn snapshot(&mut self, stem: String, field: ScalarField, s: f64) -> Result<bool, CliError> {
        if self.pending.load(Ordering::SeqCst) >= self.capacity {
            self.dropped += 1;
            return Ok(false);
        }
        self.pending.fetch_add(1, Ordering::SeqCst);
        self.send(Msg::Snapshot { stem, field, s })?;
        Ok(true)
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Flushes everything and returns the written file names.
    pub fn finish(mut self) -> Result<Vec<String>, CliError> {
        drop(self.tx.take());
        match self.handle.take().expect("joined once").join() {
            Ok(r) => r,
            Err(_) => Err(CliError::Io("writer thread panicked".into())),
        }
    }
}

impl Drop for Writer {
    fn drop(&mut self) {
        drop(self.tx.take());
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Flushes a text report next to the run outputs.
pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use bsq_core::{Grid, Params};

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(&Params::default().with_resolution(16, 16)).unwrap();
        let f = ScalarField::from_fn(&g, Frame::Y, Parity::ODD, |s, b| (s * 1.37).sin() / 3.0 + b.exp() * 1e-300);
        let (bin, _) = write_snapshot(dir.path(), "f", &f, g.descriptor(), 0.25).unwrap();
        let (back, side) = read_snapshot(&bin).unwrap();
        assert_eq!(side.s, 0.25);
        assert_eq!(back.frame, f.frame);
        assert_eq!(back.parity, f.parity);
        assert!(back.data.iter().zip(&f.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(&Params::default().with_resolution(16, 16)).unwrap();
        let f = ScalarField::zeros(&g, Frame::Y, Parity::ODD);
        let (bin, _) = write_snapshot(dir.path(), "z", &f, g.descriptor(), 0.0).unwrap();
        std::fs::write(&bin, [0u8; 9]).unwrap();
        assert!(read_snapshot(&bin).is_err());
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "hello").unwrap();
        let g = Grid::new(&Params::default().with_resolution(16, 16)).unwrap();
        let m = RunManifest {
            config: serde_json::json!({}),
            code_version: "0".into(),
            grid: g.descriptor(),
            seed: 0,
            s_start: 0.0,
            s_end: 0.0,
            steps: 0,
            snapshots_dropped: 0,
            files: inventory(dir.path(), &["a.txt".into()]).unwrap(),
        };
        write_manifest(dir.path(), &m).unwrap();
        assert!(check_manifest(dir.path()).is_ok());
        std::fs::write(dir.path().join("a.txt"), "hellO").unwrap();
        assert!(check_manifest(dir.path()).is_err());
    }
}
