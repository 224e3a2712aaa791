//! On-disk cache of real Gram blocks.
//!
//! Block file layout: `"QFGRAM1\0"`, `u32` d, `u32` n, `u64` FNV-1a hash of Q,
//! then `dⁿ·dⁿ` little-endian `f64` in row-major order. A sidecar file holding
//! Q itself (`"QFQMAT1\0"`, `u32` d, `d²` `f64`) lets `verify` recompute both
//! the hash and the payload.

use nalgebra::DMatrix;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{QfockError, Result};
use crate::qgram::{gram_block, GramBlock, GramMode, QMatrix};

pub const GRAM_MAGIC: &[u8; 8] = b"QFGRAM1\0";
pub const QMAT_MAGIC: &[u8; 8] = b"QFQMAT1\0";
const HEADER_LEN: usize = 24;

#[derive(Clone, Debug)]
pub struct GramCache {
    dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheEntry {
    pub path: PathBuf,
    pub d: u32,
    pub n: u32,
    pub hash: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VerifyStatus {
    Ok,
    /// Magic, header, hash or payload disagree with what the file claims.
    HashMismatch(String),
    Unreadable(String),
}

#[derive(Clone, Debug)]
pub struct VerifyOutcome {
    pub path: PathBuf,
    pub status: VerifyStatus,
}

pub fn block_file_name(d: usize, n: usize, hash: u64) -> String {
    format!("gram_d{d}_n{n}_{hash:016x}.bin")
}

pub fn q_file_name(hash: u64) -> String {
    format!("q_{hash:016x}.qmat")
}

fn parse_header(bytes: &[u8]) -> Result<(u32, u32, u64)> {
    if bytes.len() < HEADER_LEN {
        return Err(QfockError::Cache("file shorter than header".into()));
    }
    if &bytes[..8] != GRAM_MAGIC {
        return Err(QfockError::Cache("bad magic".into()));
    }
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let n = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let hash = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    Ok((d, n, hash))
}

fn payload_len(d: u32, n: u32) -> Option<usize> {
    let m = (d as usize).checked_pow(n)?;
    m.checked_mul(m)?.checked_mul(8)
}

fn encode_block(q: &QMatrix, block: &GramBlock) -> Vec<u8> {
    let m = block.matrix();
    let mut out = Vec::with_capacity(HEADER_LEN + m.len() * 8);
    out.extend_from_slice(GRAM_MAGIC);
    out.extend_from_slice(&(q.d() as u32).to_le_bytes());
    out.extend_from_slice(&(block.degree() as u32).to_le_bytes());
    out.extend_from_slice(&q.fnv_hash().to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

fn decode_payload(d: u32, n: u32, bytes: &[u8]) -> Result<DMatrix<f64>> {
    let expected = payload_len(d, n).ok_or_else(|| QfockError::Cache("size overflow".into()))?;
    if bytes.len() != expected {
        return Err(QfockError::Cache(format!(
            "payload has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let m = (d as usize).pow(n);
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(m, m, &values))
}

fn encode_q(q: &QMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + q.entries().len() * 8);
    out.extend_from_slice(QMAT_MAGIC);
    out.extend_from_slice(&(q.d() as u32).to_le_bytes());
    for v in q.entries() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_q(bytes: &[u8]) -> Result<QMatrix> {
    if bytes.len() < 12 || &bytes[..8] != QMAT_MAGIC {
        return Err(QfockError::Cache("bad Q sidecar magic".into()));
    }
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() != 12 + d * d * 8 {
        return Err(QfockError::Cache("Q sidecar has wrong length".into()));
    }
    let vals: Vec<f64> = bytes[12..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let rows: Vec<Vec<f64>> = vals.chunks(d.max(1)).map(|r| r.to_vec()).collect();
    QMatrix::new(&rows).map_err(|e| QfockError::Cache(format!("Q sidecar invalid: {e}")))
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("block"),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl GramCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(GramCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn block_path(&self, q: &QMatrix, n: usize) -> PathBuf {
        self.dir.join(block_file_name(q.d(), n, q.fnv_hash()))
    }

    /// Read a cached block. Missing file is a miss; a file with bad magic or hash is rejected.
    pub fn read_block(&self, q: &QMatrix, n: usize) -> Result<Option<GramBlock>> {
        let path = self.block_path(q, n);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let (d, bn, hash) = parse_header(&bytes)
            .map_err(|e| QfockError::Cache(format!("{}: {e}", path.display())))?;
        if hash != q.fnv_hash() || d as usize != q.d() || bn as usize != n {
            return Err(QfockError::Cache(format!(
                "{}: header (d={d}, n={bn}, hash={hash:016x}) does not match request",
                path.display()
            )));
        }
        let matrix = decode_payload(d, bn, &bytes[HEADER_LEN..])
            .map_err(|e| QfockError::Cache(format!("{}: {e}", path.display())))?;
        Ok(Some(GramBlock::from_matrix(q.d(), n, matrix)))
    }

    pub fn write_block(&self, q: &QMatrix, block: &GramBlock) -> Result<()> {
        let qpath = self.dir.join(q_file_name(q.fnv_hash()));
        if !qpath.exists() {
            atomic_write(&qpath, &encode_q(q))?;
        }
        atomic_write(&self.block_path(q, block.degree()), &encode_block(q, block))
    }

    fn block_files(&self) -> Result<Vec<PathBuf>> {
        let mut files: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|s| s.to_str())
                    .is_some_and(|s| s.starts_with("gram_") && s.ends_with(".bin"))
            })
            .collect();
        files.sort();
        Ok(files)
    }

    /// Cached blocks by header, plus per-file warnings for unreadable ones.
    pub fn list(&self) -> Result<(Vec<CacheEntry>, Vec<String>)> {
        let mut entries = Vec::new();
        let mut warnings = Vec::new();
        for path in self.block_files()? {
            let header = fs::File::open(&path).and_then(|mut f| {
                let mut buf = [0u8; HEADER_LEN];
                std::io::Read::read_exact(&mut f, &mut buf).map(|_| buf)
            });
            match header.map_err(QfockError::from).and_then(|b| parse_header(&b)) {
                Ok((d, n, hash)) => entries.push(CacheEntry { path, d, n, hash }),
                Err(e) => warnings.push(format!("{}: {e}", path.display())),
            }
        }
        entries.sort_by_key(|e| (e.hash, e.d, e.n));
        Ok((entries, warnings))
    }

    pub fn verify(&self) -> Result<Vec<VerifyOutcome>> {
        Ok(self
            .block_files()?
            .into_iter()
            .map(|path| {
                let status = self.verify_file(&path);
                VerifyOutcome { path, status }
            })
            .collect())
    }

    fn verify_file(&self, path: &Path) -> VerifyStatus {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) => return VerifyStatus::Unreadable(e.to_string()),
        };
        let (d, n, hash) = match parse_header(&bytes) {
            Ok(h) => h,
            Err(e) => return VerifyStatus::HashMismatch(e.to_string()),
        };
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
        if name != block_file_name(d as usize, n as usize, hash) {
            return VerifyStatus::HashMismatch(format!(
                "header (d={d}, n={n}, hash={hash:016x}) disagrees with file name"
            ));
        }
        let qbytes = match fs::read(self.dir.join(q_file_name(hash))) {
            Ok(b) => b,
            Err(e) => return VerifyStatus::Unreadable(format!("Q sidecar: {e}")),
        };
        let q = match decode_q(&qbytes) {
            Ok(q) => q,
            Err(e) => return VerifyStatus::HashMismatch(e.to_string()),
        };
        if q.fnv_hash() != hash || q.d() != d as usize {
            return VerifyStatus::HashMismatch(format!(
                "Q hash {:016x} ≠ header hash {hash:016x}",
                q.fnv_hash()
            ));
        }
        let stored = match decode_payload(d, n, &bytes[HEADER_LEN..]) {
            Ok(m) => m,
            Err(e) => return VerifyStatus::HashMismatch(format!("payload: {e}")),
        };
        match gram_block(&q, n as usize, GramMode::Recursive) {
            Ok(fresh) => {
                let same = fresh
                    .matrix()
                    .iter()
                    .zip(stored.iter())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                if same {
                    VerifyStatus::Ok
                } else {
                    VerifyStatus::HashMismatch("payload differs from recomputed block".into())
                }
            }
            Err(e) => VerifyStatus::Unreadable(e.to_string()),
        }
    }

    /// Delete all cache files; returns how many were removed.
    pub fn purge(&self) -> Result<usize> {
        let mut removed = 0;
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
            let ours = (name.starts_with("gram_") && name.ends_with(".bin"))
                || (name.starts_with("q_") && name.ends_with(".qmat"));
            if ours && path.is_file() {
                fs::remove_file(&path)?;
                removed += 1;
            }
        }
        Ok(removed)
    }
}
